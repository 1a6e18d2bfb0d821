//! Periodic roughness profiles on the unit cell `Z' = (-1/2, 1/2)^2` and the
//! rectangular macroscopic domain with its body force.

use crate::error::{Error, Result};
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Gap height `h(z')` over one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum RoughnessProfile {
    Constant { h0: f64 },
    /// `h0 + a1 cos(2 pi z1) + a2 cos(2 pi z2)`.
    Cosine2d { h0: f64, a1: f64, a2: f64 },
    /// Two levels `h0` and `h0 + a1` layered along z1: the raised band is
    /// `|z1| < 1/4`, with a quintic (C^2) transition of the given width.
    LayeredSmooth { h0: f64, a1: f64, width: f64 },
    /// Cell-centred samples, bilinearly interpolated with periodic wrap.
    Sampled(SampledProfile),
}

/// `n x n` samples at cell centres, row-major with rows indexing z2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledProfile {
    pub n: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSamples {
    pub n: usize,
    pub values: Vec<f64>,
    pub h_min: f64,
    pub h_max: f64,
}

fn smoothstep5(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Wraps a coordinate into `[-1/2, 1/2)`.
fn wrap(z: f64) -> f64 {
    z - (z + 0.5).floor()
}

impl RoughnessProfile {
    pub fn constant(h0: f64) -> Result<Self> {
        let p = Self::Constant { h0 };
        p.validate()?;
        Ok(p)
    }

    pub fn cosine2d(h0: f64, a1: f64, a2: f64) -> Result<Self> {
        let p = Self::Cosine2d { h0, a1, a2 };
        p.validate()?;
        Ok(p)
    }

    pub fn layered_smooth(h0: f64, a1: f64, width: f64) -> Result<Self> {
        let p = Self::LayeredSmooth { h0, a1, width };
        p.validate()?;
        Ok(p)
    }

    pub fn sampled(n: usize, values: Vec<f64>) -> Result<Self> {
        let p = Self::Sampled(SampledProfile { n, values });
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Self::Constant { h0 } if !finite(&[*h0]) => bad("h0 must be finite"),
            Self::Cosine2d { h0, a1, a2 } if !finite(&[*h0, *a1, *a2]) => bad("cosine coefficients must be finite"),
            Self::LayeredSmooth { h0, a1, width } => {
                if !finite(&[*h0, *a1, *width]) {
                    return bad("layered coefficients must be finite");
                }
                if !(*width > 0.0 && *width < 0.5) {
                    return bad(&format!("smoothing width must lie in (0, 1/2), got {width}"));
                }
                self.check_positive()
            }
            Self::Sampled(s) => {
                if s.n < 2 {
                    return bad("sampled profile needs n >= 2");
                }
                if s.values.len() != s.n * s.n {
                    return bad(&format!("sampled profile expects {} values, got {}", s.n * s.n, s.values.len()));
                }
                if !finite(&s.values) {
                    return bad("sampled profile values must be finite");
                }
                self.check_positive()
            }
            _ => self.check_positive(),
        }
    }

    fn check_positive(&self) -> Result<()> {
        let (lo, _) = self.bounds();
        if !(lo > 0.0) {
            return bad(&format!("gap height must stay positive (h_min = {lo})"));
        }
        Ok(())
    }

    /// Analytic `(h_min, h_max)`.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Self::Constant { h0 } => (*h0, *h0),
            Self::Cosine2d { h0, a1, a2 } => {
                let a = a1.abs() + a2.abs();
                (h0 - a, h0 + a)
            }
            Self::LayeredSmooth { h0, a1, .. } => (h0.min(h0 + a1), h0.max(h0 + a1)),
            Self::Sampled(s) => s
                .values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        }
    }

    /// `h` at a point; coordinates are taken modulo the period.
    pub fn height(&self, z: Vec2) -> f64 {
        let (z1, z2) = (wrap(z.x), wrap(z.y));
        match self {
            Self::Constant { h0 } => *h0,
            Self::Cosine2d { h0, a1, a2 } => h0 + a1 * (2.0 * PI * z1).cos() + a2 * (2.0 * PI * z2).cos(),
            Self::LayeredSmooth { h0, a1, width } => {
                h0 + a1 * smoothstep5((0.25 + 0.5 * width - z1.abs()) / width)
            }
            Self::Sampled(s) => s.interpolate(z1, z2),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Self::Constant { .. } => true,
            Self::Cosine2d { a1, a2, .. } => *a1 == 0.0 && *a2 == 0.0,
            Self::LayeredSmooth { a1, .. } => *a1 == 0.0,
            Self::Sampled(s) => s.values.iter().all(|v| *v == s.values[0]),
        }
    }

    /// True when `h` depends on z1 only.
    pub fn is_layered_in_z1(&self) -> bool {
        match self {
            Self::Constant { .. } | Self::LayeredSmooth { .. } => true,
            Self::Cosine2d { a2, .. } => *a2 == 0.0,
            Self::Sampled(s) => (0..s.n).all(|i| (0..s.n).all(|j| s.values[j * s.n + i] == s.values[i])),
        }
    }

    /// Points in z1 where the profile is not smooth enough for a single
    /// quadrature panel (layer transitions); always includes the cell ends.
    pub fn z1_breakpoints(&self) -> Vec<f64> {
        match self {
            Self::LayeredSmooth { width, .. } => {
                let (a, b) = (0.25 - 0.5 * width, 0.25 + 0.5 * width);
                vec![-0.5, -b, -a, a, b, 0.5]
            }
            Self::Sampled(s) => {
                let mut v: Vec<f64> = (0..s.n).map(|i| -0.5 + (i as f64 + 0.5) / s.n as f64).collect();
                v.insert(0, -0.5);
                v.push(0.5);
                v
            }
            _ => vec![-0.5, 0.5],
        }
    }

    /// Samples `h` at the `n x n` cell centres of `Z'`.
    pub fn sample(&self, n: usize) -> Result<ProfileSamples> {
        if n < 4 {
            return Err(Error::Domain(format!("profile resolution must be >= 4, got {n}")));
        }
        let mut values = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                values.push(self.height(cell_center(i, j, n)));
            }
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Domain(format!("non-positive gap sample {v}")));
        }
        let h_min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let h_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(ProfileSamples { n, values, h_min, h_max })
    }
}

/// Centre of cell `(i, j)` of an `n x n` partition of `Z'`.
pub fn cell_center(i: usize, j: usize, n: usize) -> Vec2 {
    let d = 1.0 / n as f64;
    Vec2::new(-0.5 + (i as f64 + 0.5) * d, -0.5 + (j as f64 + 0.5) * d)
}

fn bad<T>(msg: &str) -> Result<T> {
    Err(Error::InvalidParameter(msg.to_string()))
}

impl SampledProfile {
    fn interpolate(&self, z1: f64, z2: f64) -> f64 {
        let n = self.n;
        let nf = n as f64;
        let u = (z1 + 0.5) * nf - 0.5;
        let v = (z2 + 0.5) * nf - 0.5;
        let (i0, fu) = (u.floor(), u - u.floor());
        let (j0, fv) = (v.floor(), v - v.floor());
        let wrap_idx = |k: f64| (k as i64).rem_euclid(n as i64) as usize;
        let (i0, i1) = (wrap_idx(i0), wrap_idx(i0 + 1.0));
        let (j0, j1) = (wrap_idx(j0), wrap_idx(j0 + 1.0));
        let at = |i: usize, j: usize| self.values[j * n + i];
        (1.0 - fv) * ((1.0 - fu) * at(i0, j0) + fu * at(i1, j0)) + fv * ((1.0 - fu) * at(i0, j1) + fu * at(i1, j1))
    }

    const HEADER: &'static str = "# rugose-profile N=";

    /// Parses the `# rugose-profile N=<n>` CSV format.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Format("empty profile file".into()))?;
        let n: usize = header
            .trim()
            .strip_prefix(Self::HEADER)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Format(format!("line 1: expected `{}<n>`", Self::HEADER)))?;
        let mut values = Vec::with_capacity(n * n);
        let mut rows = 0;
        for (no, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| Error::Format(format!("line {}: {e}", no + 1)))?;
            if row.len() != n {
                return Err(Error::Format(format!("line {}: expected {n} values, got {}", no + 1, row.len())));
            }
            values.extend(row);
            rows += 1;
        }
        if rows != n {
            return Err(Error::Format(format!("expected {n} rows, got {rows}")));
        }
        let p = RoughnessProfile::sampled(n, values)?;
        match p {
            RoughnessProfile::Sampled(s) => Ok(s),
            _ => unreachable!(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}{}\n", Self::HEADER, self.n);
        for j in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|i| format!("{:.16e}", self.values[j * self.n + i])).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// Body force `f'(x')` on the macroscopic rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Force {
    Zero,
    /// Constant force, the gradient of `f1 x1 + f2 x2`.
    Uniform { f1: f64, f2: f64 },
    /// `(-c sin(2 pi x2 / L2), 0)`, a non-gradient shear force.
    SineShear { amplitude: f64 },
    /// `(c cos(2 pi x2 / L2), 0)`, compatible with the no-flux corners.
    CosineShear { amplitude: f64 },
}

impl Force {
    pub fn at(&self, x: Vec2, l2: f64) -> Vec2 {
        match self {
            Force::Zero => Vec2::ZERO,
            Force::Uniform { f1, f2 } => Vec2::new(*f1, *f2),
            Force::SineShear { amplitude } => Vec2::new(-amplitude * (2.0 * PI * x.y / l2).sin(), 0.0),
            Force::CosineShear { amplitude } => Vec2::new(amplitude * (2.0 * PI * x.y / l2).cos(), 0.0),
        }
    }

    /// Potential for gradient forces.
    pub fn potential(&self, x: Vec2) -> Option<f64> {
        match self {
            Force::Zero => Some(0.0),
            Force::Uniform { f1, f2 } => Some(f1 * x.x + f2 * x.y),
            _ => None,
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Force::Zero => true,
            Force::Uniform { f1, f2 } => f1.is_finite() && f2.is_finite(),
            Force::SineShear { amplitude } | Force::CosineShear { amplitude } => amplitude.is_finite(),
        }
    }
}

/// Rectangle `(0, L1) x (0, L2)` with an `n1 x n2` cell grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroDomain {
    pub l1: f64,
    pub l2: f64,
    pub n1: usize,
    pub n2: usize,
    pub force: Force,
}

impl MacroDomain {
    pub fn new(l1: f64, l2: f64, n1: usize, n2: usize, force: Force) -> Result<Self> {
        if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
            return bad(&format!("domain extents must be positive, got {l1} x {l2}"));
        }
        if n1 < 2 || n2 < 2 {
            return bad(&format!("domain grid must be at least 2 x 2, got {n1} x {n2}"));
        }
        if !force.is_finite() {
            return bad("force coefficients must be finite");
        }
        Ok(Self { l1, l2, n1, n2, force })
    }

    pub fn dx(&self) -> f64 {
        self.l1 / self.n1 as f64
    }

    pub fn dy(&self) -> f64 {
        self.l2 / self.n2 as f64
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new((i as f64 + 0.5) * self.dx(), (j as f64 + 0.5) * self.dy())
    }

    pub fn force_at(&self, x: Vec2) -> Vec2 {
        self.force.at(x, self.l2)
    }
}
