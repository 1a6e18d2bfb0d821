//! The homogenized flux map `U(delta)` and its precomputed polar table.

use crate::carreau::CarreauParams;
use crate::cell::{solve_cell, CellNumerics, CellProblem};
use crate::error::{Error, Result};
use crate::geometry::RoughnessProfile;
use crate::vec2::Vec2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;

/// Anything that maps a macroscopic drive `delta = grad p - f'` to a filtration flux.
pub trait FluxMap: Sync {
    fn flux(&self, delta: Vec2) -> Result<Vec2>;

    /// Typical drive magnitude, used to size finite-difference steps.
    fn drive_scale(&self) -> f64 {
        1.0
    }

    /// `-dU_axis / d delta_axis` by finite differences; positive for monotone maps.
    fn normal_slope(&self, delta: Vec2, axis: usize) -> Result<f64> {
        let step = 1e-6 * delta.norm().max(1e-3 * self.drive_scale());
        let e = step * Vec2::unit(axis);
        let plus = self.flux(delta + e);
        let minus = self.flux(delta - e);
        let slope = match (plus, minus) {
            (Ok(p), Ok(m)) => (p.axis(axis) - m.axis(axis)) / (2.0 * step),
            (Ok(p), Err(_)) => (p.axis(axis) - self.flux(delta)?.axis(axis)) / step,
            (Err(_), Ok(m)) => (self.flux(delta)?.axis(axis) - m.axis(axis)) / step,
            (Err(e), Err(_)) => return Err(e),
        };
        Ok(-slope)
    }

    /// 2x2 sensitivity `dU_i / d delta_j` by central differences.
    fn jacobian(&self, delta: Vec2) -> Result<[[f64; 2]; 2]> {
        let step = 1e-6 * delta.norm().max(1e-3 * self.drive_scale());
        let column = |axis: usize| -> Result<Vec2> {
            let e = step * Vec2::unit(axis);
            Ok((0.5 / step) * (self.flux(delta + e)? - self.flux(delta - e)?))
        };
        let (c0, c1) = (column(0)?, column(1)?);
        Ok([[c0.x, c1.x], [c0.y, c1.y]])
    }
}

/// `U(delta)` by one cell solve.
pub fn evaluate_u(params: &CarreauParams, profile: &RoughnessProfile, delta: Vec2, numerics: &CellNumerics) -> Result<Vec2> {
    if delta == Vec2::ZERO {
        return Ok(Vec2::ZERO);
    }
    let problem = CellProblem { params: *params, profile, delta, numerics: *numerics };
    Ok(solve_cell(&problem)?.flux)
}

/// Evaluates `U` directly with a cell solve per call.
#[derive(Debug, Clone)]
pub struct ExactFlux {
    pub params: CarreauParams,
    pub profile: RoughnessProfile,
    pub numerics: CellNumerics,
}

impl FluxMap for ExactFlux {
    fn flux(&self, delta: Vec2) -> Result<Vec2> {
        if self.profile.is_constant() {
            // The corrector vanishes identically for a flat gap.
            let h = self.profile.bounds().0;
            return Ok((-2.0 * crate::gap::flux_kernel(&self.params, h, delta.norm())?) * delta);
        }
        evaluate_u(&self.params, &self.profile, delta, &self.numerics)
    }
}

/// `U(delta) = -M delta` for a constant mobility matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFlux {
    pub mobility: [[f64; 2]; 2],
}

impl FluxMap for LinearFlux {
    fn flux(&self, d: Vec2) -> Result<Vec2> {
        let m = &self.mobility;
        Ok(Vec2::new(-(m[0][0] * d.x + m[0][1] * d.y), -(m[1][0] * d.x + m[1][1] * d.y)))
    }

    fn normal_slope(&self, _delta: Vec2, axis: usize) -> Result<f64> {
        Ok(self.mobility[axis][axis])
    }
}

/// Zero-shear mobility matrix `-dU/d delta` at the origin, from two small drives.
pub fn plateau_mobility(map: &dyn FluxMap) -> Result<[[f64; 2]; 2]> {
    let eps = 1e-6 * map.drive_scale();
    let c0 = map.flux(eps * Vec2::unit(0))?;
    let c1 = map.flux(eps * Vec2::unit(1))?;
    Ok([[-c0.x / eps, -c1.x / eps], [-c0.y / eps, -c1.y / eps]])
}

/// Polar grid of the table: `m` log-spaced magnitudes ending at `rho_max`,
/// `n` angles uniformly covering `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableGrid {
    pub m: usize,
    pub n: usize,
    pub rho_max: f64,
    /// Smallest stored magnitude as a fraction of `rho_max`.
    pub rho_min_ratio: f64,
}

impl TableGrid {
    pub fn with_rho_max(rho_max: f64) -> Self {
        Self { m: 24, n: 16, rho_max, rho_min_ratio: 1e-3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidParameter("table needs m >= 1 and n >= 1".into()));
        }
        if !(self.rho_max > 0.0 && self.rho_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho_max must be positive, got {}", self.rho_max)));
        }
        if !(self.rho_min_ratio > 0.0 && self.rho_min_ratio < 1.0) {
            return Err(Error::InvalidParameter("rho_min_ratio must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn radii(&self) -> Vec<f64> {
        if self.m == 1 {
            return vec![self.rho_max];
        }
        let lo = (self.rho_max * self.rho_min_ratio).ln();
        let hi = self.rho_max.ln();
        (0..self.m)
            .map(|i| if i + 1 == self.m { self.rho_max } else { (lo + (hi - lo) * i as f64 / (self.m - 1) as f64).exp() })
            .collect()
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.n).map(|j| PI * j as f64 / self.n as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub params: CarreauParams,
    pub profile: RoughnessProfile,
    pub grid: TableGrid,
    pub numerics: CellNumerics,
    pub fingerprint: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableNode {
    pub rho: f64,
    pub theta: f64,
    pub u: Vec2,
    pub residual: f64,
}

/// `U` sampled on a polar grid over the half plane `theta in [0, pi)`; the
/// other half follows from `U(-delta) = -U(delta)`.
///
/// Interpolation works on the secant `U / rho`: linear in `log rho` between
/// stored magnitudes (constant below the first), and in angle by writing the
/// target direction as a non-negative combination of the two neighbouring node
/// directions. Both steps reproduce linear maps exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxTable {
    pub meta: TableMeta,
    radii: Vec<f64>,
    /// Row-major over (radius, angle).
    nodes: Vec<TableNode>,
}

/// SHA-256 over the canonical JSON of the material constants and profile.
pub fn fingerprint(params: &CarreauParams, profile: &RoughnessProfile) -> String {
    let text = serde_json::to_string(&(params, profile)).expect("serializable inputs");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Fills the table with one cell solve per node on `jobs` worker threads.
/// Output does not depend on `jobs`: nodes are merged by index.
pub fn build_flux_table(
    params: &CarreauParams,
    profile: &RoughnessProfile,
    grid: TableGrid,
    numerics: &CellNumerics,
    jobs: usize,
) -> Result<FluxTable> {
    grid.validate()?;
    numerics.validate()?;
    profile.validate()?;
    let radii = grid.radii();
    let angles = grid.angles();
    let args: Vec<(f64, f64)> = radii.iter().flat_map(|&r| angles.iter().map(move |&t| (r, t))).collect();

    let solve_node = |&(rho, theta): &(f64, f64)| -> Result<TableNode> {
        let delta = Vec2::from_polar(rho, theta);
        let problem = CellProblem { params: *params, profile, delta, numerics: *numerics };
        let sol = solve_cell(&problem)
            .map_err(|e| Error::TableNode { d1: delta.x, d2: delta.y, source: Box::new(e) })?;
        Ok(TableNode { rho, theta, u: sol.flux, residual: sol.residual })
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let results: Vec<Result<TableNode>> = pool.install(|| args.par_iter().map(solve_node).collect());
    let nodes = results.into_iter().collect::<Result<Vec<_>>>()?;

    let meta = TableMeta {
        params: *params,
        profile: profile.clone(),
        grid,
        numerics: *numerics,
        fingerprint: fingerprint(params, profile),
    };
    Ok(FluxTable { meta, radii, nodes })
}

impl FluxTable {
    pub fn rho_max(&self) -> f64 {
        self.meta.grid.rho_max
    }

    pub fn nodes(&self) -> &[TableNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize, j: usize) -> &TableNode {
        &self.nodes[i * self.meta.grid.n + j]
    }

    /// True when the table was built for these inputs.
    pub fn matches(&self, params: &CarreauParams, profile: &RoughnessProfile) -> bool {
        self.meta.fingerprint == fingerprint(params, profile)
    }

    /// Interpolated `U(delta)`.
    pub fn interp(&self, delta: Vec2) -> Result<Vec2> {
        let rho = delta.norm();
        if rho == 0.0 {
            return Ok(Vec2::ZERO);
        }
        if !rho.is_finite() || rho > self.rho_max() * (1.0 + 1e-12) {
            return Err(Error::OutOfRange { magnitude: rho, rho_max: self.rho_max() });
        }
        let n = self.meta.grid.n;
        let mut theta = delta.y.atan2(delta.x);
        let mut sign = 1.0;
        if theta < 0.0 {
            theta += PI;
            sign = -1.0;
        }
        if theta >= PI {
            theta -= PI;
            sign = -sign;
        }

        // Direction combination at radius index i.
        let at_radius: Box<dyn Fn(usize) -> Vec2> = if n == 1 {
            // A single stored direction: treat the map as isotropic and rotate.
            let (s, c) = theta.sin_cos();
            Box::new(move |i: usize| {
                let u = self.node(i, 0).u;
                Vec2::new(c * u.x - s * u.y, s * u.x + c * u.y)
            })
        } else {
            let step = PI / n as f64;
            let pos = theta / step;
            let j = (pos.floor() as usize).min(n - 1);
            let frac = pos - j as f64;
            let (alpha, beta) = if frac == 0.0 {
                (1.0, 0.0)
            } else {
                let s = step.sin();
                (((1.0 - frac) * step).sin() / s, (frac * step).sin() / s)
            };
            Box::new(move |i: usize| {
                let a = self.node(i, j).u;
                if beta == 0.0 {
                    return a;
                }
                let b = if j + 1 == n { -self.node(i, 0).u } else { self.node(i, j + 1).u };
                alpha * a + beta * b
            })
        };

        let radii = &self.radii;
        let u = if rho <= radii[0] || radii.len() == 1 {
            (rho / radii[0]) * at_radius(0)
        } else {
            let i = radii.partition_point(|&r| r <= rho).saturating_sub(1).min(radii.len() - 2);
            let (r0, r1) = (radii[i], radii[i + 1]);
            let t = ((rho / r0).ln() / (r1 / r0).ln()).clamp(0.0, 1.0);
            if t == 0.0 {
                (rho / r0) * at_radius(i)
            } else if t == 1.0 {
                (rho / r1) * at_radius(i + 1)
            } else {
                ((1.0 - t) * (rho / r0)) * at_radius(i) + (t * (rho / r1)) * at_radius(i + 1)
            }
        };
        Ok(sign * u)
    }

    /// Serializes to `{meta: {...}, nodes: [[rho, theta, U1, U2, residual], ...]}`,
    /// with the origin node first and numbers printed to 17 significant digits.
    pub fn to_json(&self) -> String {
        let meta = serde_json::to_string(&self.meta).expect("serializable meta");
        let fmt = |v: f64| format!("{v:.16e}");
        let mut rows = vec![format!("[{z},{z},{z},{z},{z}]", z = fmt(0.0))];
        for node in &self.nodes {
            rows.push(format!(
                "[{},{},{},{},{}]",
                fmt(node.rho),
                fmt(node.theta),
                fmt(node.u.x),
                fmt(node.u.y),
                fmt(node.residual)
            ));
        }
        format!("{{\"meta\":{meta},\n\"nodes\":[\n{}\n]}}\n", rows.join(",\n"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            meta: TableMeta,
            nodes: Vec<[f64; 5]>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::Format(format!("flux table: {e}")))?;
        let meta = raw.meta;
        meta.grid.validate()?;
        meta.profile.validate()?;
        if meta.fingerprint != fingerprint(&meta.params, &meta.profile) {
            return Err(Error::Format("flux table fingerprint does not match its metadata".into()));
        }
        let (m, n) = (meta.grid.m, meta.grid.n);
        if raw.nodes.len() != 1 + m * n {
            return Err(Error::Format(format!("flux table expects {} nodes, got {}", 1 + m * n, raw.nodes.len())));
        }
        if raw.nodes[0].iter().any(|v| *v != 0.0) {
            return Err(Error::Format("first flux table node must be the origin".into()));
        }
        let radii = meta.grid.radii();
        let angles = meta.grid.angles();
        let mut nodes = Vec::with_capacity(m * n);
        for (k, row) in raw.nodes[1..].iter().enumerate() {
            let (rho, theta) = (radii[k / n], angles[k % n]);
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
            if !close(row[0], rho) || !close(row[1], theta) {
                return Err(Error::Format(format!("flux table node {} is off the grid", k + 1)));
            }
            nodes.push(TableNode { rho: row[0], theta: row[1], u: Vec2::new(row[2], row[3]), residual: row[4] });
        }
        Ok(Self { meta, radii, nodes })
    }
}

impl FluxMap for FluxTable {
    fn flux(&self, delta: Vec2) -> Result<Vec2> {
        self.interp(delta)
    }

    fn drive_scale(&self) -> f64 {
        self.rho_max()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thin() -> CarreauParams {
        CarreauParams::new(2.0, 1.0, 2.0, 1.5).unwrap()
    }

    fn small() -> CellNumerics {
        CellNumerics { n: 16, ..CellNumerics::default() }
    }

    #[test]
    fn single_node_table_equals_direct_evaluation() {
        let profile = RoughnessProfile::constant(1.0).unwrap();
        let grid = TableGrid { m: 1, n: 1, rho_max: 2.0, rho_min_ratio: 1e-3 };
        let t = build_flux_table(&thin(), &profile, grid, &small(), 1).unwrap();
        let direct = evaluate_u(&thin(), &profile, Vec2::new(2.0, 0.0), &small()).unwrap();
        assert_eq!(t.node(0, 0).u, direct);
        assert_eq!(t.interp(Vec2::new(2.0, 0.0)).unwrap(), direct);
    }

    #[test]
    fn flat_table_is_rotation_invariant() {
        let profile = RoughnessProfile::constant(1.0).unwrap();
        let grid = TableGrid { m: 3, n: 8, rho_max: 5.0, rho_min_ratio: 0.1 };
        let t = build_flux_table(&thin(), &profile, grid, &small(), 2).unwrap();
        for i in 0..3 {
            let base = t.node(i, 0).u;
            for j in 0..8 {
                let node = t.node(i, j);
                let (s, c) = node.theta.sin_cos();
                let rotated = Vec2::new(c * base.x - s * base.y, s * base.x + c * base.y);
                assert!((node.u - rotated).norm() <= 1e-13 * base.norm());
            }
        }
    }

    #[test]
    fn interpolation_exact_at_nodes_and_odd() {
        let profile = RoughnessProfile::cosine2d(1.0, 0.25, 0.1).unwrap();
        let grid = TableGrid { m: 4, n: 4, rho_max: 3.0, rho_min_ratio: 0.05 };
        let t = build_flux_table(&thin(), &profile, grid, &small(), 1).unwrap();
        for node in t.nodes() {
            let d = Vec2::from_polar(node.rho, node.theta);
            let u = t.interp(d).unwrap();
            assert!((u - node.u).norm() <= 1e-14 * node.u.norm());
            let v = t.interp(-d).unwrap();
            assert!((v + node.u).norm() <= 1e-14 * node.u.norm());
        }
        assert_eq!(t.interp(Vec2::ZERO).unwrap(), Vec2::ZERO);
        assert!(matches!(t.interp(Vec2::new(3.1, 0.0)), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn linear_maps_are_reproduced() {
        // Plateau constants make U linear; the secant interpolation is then exact.
        let params = CarreauParams::new(2.0, 1.0, 1e-12, 1.5).unwrap();
        let profile = RoughnessProfile::cosine2d(1.0, 0.25, 0.1).unwrap();
        let grid = TableGrid { m: 3, n: 4, rho_max: 4.0, rho_min_ratio: 0.1 };
        let t = build_flux_table(&params, &profile, grid, &small(), 1).unwrap();
        for d in [Vec2::new(0.3, 1.1), Vec2::new(-2.5, 0.7), Vec2::new(1e-3, -2e-3), Vec2::new(0.0, -3.9)] {
            let exact = evaluate_u(&params, &profile, d, &small()).unwrap();
            let u = t.interp(d).unwrap();
            assert!((u - exact).norm() <= 1e-7 * exact.norm(), "{u:?} vs {exact:?}");
        }
    }

    #[test]
    fn midpoint_magnitude_within_one_percent() {
        let profile = RoughnessProfile::constant(1.0).unwrap();
        let grid = TableGrid::with_rho_max(20.0);
        let t = build_flux_table(&thin(), &profile, grid, &small(), 1).unwrap();
        let radii = grid.radii();
        for w in radii.windows(2) {
            let rho = (w[0] * w[1]).sqrt();
            for theta in [0.0, 0.3, 2.0] {
                let d = Vec2::from_polar(rho, theta);
                let exact = evaluate_u(&thin(), &profile, d, &small()).unwrap();
                assert!((t.interp(d).unwrap() - exact).norm() <= 1e-2 * exact.norm());
            }
        }
    }

    #[test]
    fn json_round_trip_and_fingerprint() {
        let profile = RoughnessProfile::cosine2d(1.0, 0.2, 0.0).unwrap();
        let grid = TableGrid { m: 2, n: 3, rho_max: 1.0, rho_min_ratio: 0.1 };
        let t = build_flux_table(&thin(), &profile, grid, &small(), 1).unwrap();
        let text = t.to_json();
        let back = FluxTable::from_json(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_json(), text);
        assert!(t.matches(&thin(), &profile));
        let other = RoughnessProfile::cosine2d(1.0, 0.21, 0.0).unwrap();
        assert!(!t.matches(&thin(), &other));
        let tampered = text.replace("\"a1\":0.2", "\"a1\":0.3");
        assert!(FluxTable::from_json(&tampered).is_err());
    }

    #[test]
    fn linear_flux_and_plateau() {
        let lin = LinearFlux { mobility: [[2.0, 0.5], [0.5, 1.0]] };
        let m = plateau_mobility(&lin).unwrap();
        for (a, b) in m.iter().flatten().zip(lin.mobility.iter().flatten()) {
            assert!((a - b).abs() < 1e-9);
        }
        let j = lin.jacobian(Vec2::new(0.3, -0.2)).unwrap();
        assert!((j[0][1] + 0.5).abs() < 1e-8);
    }

    #[test]
    fn failing_node_is_reported() {
        let profile = RoughnessProfile::cosine2d(1.0, 0.25, 0.1).unwrap();
        let num = CellNumerics { max_iter: 1, ..small() };
        let grid = TableGrid { m: 2, n: 2, rho_max: 5.0, rho_min_ratio: 0.1 };
        let err = build_flux_table(&thin(), &profile, grid, &num, 1).unwrap_err();
        assert!(matches!(err, Error::TableNode { .. }));
    }
}
