//! Macroscopic nonlinear Reynolds problem `div V = 0`, `V = U(grad p - f)` on a
//! rectangle with `V . n = 0` on the boundary and zero-mean `p`.
//!
//! Cell-centred finite volumes: on each interior face the normal component of
//! the drive is the two-point pressure difference minus the normal force, the
//! tangential component is the average of the adjacent cell gradients minus the
//! tangential force. Boundary faces carry no flux.

use crate::error::{Error, Result};
use crate::flux::{plateau_mobility, FluxMap, LinearFlux};
use crate::geometry::MacroDomain;
use crate::linalg::{idx, pcg, remove_mean, rms, Boundary, FaceOperator};
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroNumerics {
    /// Tolerance on the normalized divergence residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation of the frozen-mobility steps, in (0, 1].
    pub damping: f64,
    /// Residual below which steps use the finite-difference normal tangent at
    /// full relaxation; `None` keeps secant steps throughout.
    pub newton_switch: Option<f64>,
    pub linear_rel_tol: f64,
}

impl Default for MacroNumerics {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 300, damping: 0.7, newton_switch: Some(1e-3), linear_rel_tol: 1e-2 }
    }
}

impl MacroNumerics {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("macro tolerance must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.linear_rel_tol > 0.0 && self.linear_rel_tol < 1.0) {
            return Err(Error::InvalidParameter("linear tolerance must lie in (0, 1)".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroSolution {
    pub n1: usize,
    pub n2: usize,
    /// Zero-mean pressure at cell centres, row-major (x1 fastest).
    pub p: Vec<f64>,
    /// `V1` on x1-normal faces, `(n1 + 1) * n2` entries including the two boundary columns.
    pub vx: Vec<f64>,
    /// `V2` on x2-normal faces, `n1 * (n2 + 1)` entries including the two boundary rows.
    pub vy: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

struct Layout {
    n1: usize,
    n2: usize,
    dx: f64,
    dy: f64,
    /// Force at interior x-face midpoints, `(n1 - 1) * n2`.
    fx: Vec<Vec2>,
    /// Force at interior y-face midpoints, `n1 * (n2 - 1)`.
    fy: Vec<Vec2>,
    scale: f64,
    plateau: [f64; 2],
}

impl Layout {
    fn new(domain: &MacroDomain, flux: &dyn FluxMap) -> Result<Self> {
        let (n1, n2) = (domain.n1, domain.n2);
        let (dx, dy) = (domain.dx(), domain.dy());
        let mut fx = Vec::with_capacity((n1 - 1) * n2);
        for j in 0..n2 {
            for f in 0..n1 - 1 {
                fx.push(domain.force_at(Vec2::new((f + 1) as f64 * dx, (j as f64 + 0.5) * dy)));
            }
        }
        let mut fy = Vec::with_capacity(n1 * (n2 - 1));
        for f in 0..n2 - 1 {
            for i in 0..n1 {
                fy.push(domain.force_at(Vec2::new((i as f64 + 0.5) * dx, (f + 1) as f64 * dy)));
            }
        }
        let mut f_max = fx.iter().chain(&fy).map(|v| v.norm()).fold(0.0, f64::max);
        for j in 0..n2 {
            for i in 0..n1 {
                f_max = f_max.max(domain.force_at(domain.cell_center(i, j)).norm());
            }
        }
        let m = plateau_mobility(flux)?;
        let plateau = [m[0][0], m[1][1]];
        if !(plateau[0] > 0.0 && plateau[1] > 0.0) {
            return Err(Error::Domain(format!("flux map has non-positive zero-shear mobility {plateau:?}")));
        }
        let scale = plateau[0].max(plateau[1]) * f_max / domain.l1.min(domain.l2) + f64::MIN_POSITIVE;
        Ok(Self { n1, n2, dx, dy, fx, fy, scale, plateau })
    }

    /// Drives on interior x- and y-faces for pressure `p`.
    fn drives(&self, p: &[f64]) -> (Vec<Vec2>, Vec<Vec2>) {
        let (n1, n2, dx, dy) = (self.n1, self.n2, self.dx, self.dy);
        let diff = |a: usize, b: usize, lo: usize, hi: usize, d: f64| (p[b] - p[a]) / ((hi - lo) as f64 * d);
        let mut gx = vec![0.0; n1 * n2];
        let mut gy = vec![0.0; n1 * n2];
        for j in 0..n2 {
            for i in 0..n1 {
                let (il, ir) = (i.saturating_sub(1), (i + 1).min(n1 - 1));
                let (jb, jt) = (j.saturating_sub(1), (j + 1).min(n2 - 1));
                gx[idx(i, j, n1)] = diff(idx(il, j, n1), idx(ir, j, n1), il, ir, dx);
                gy[idx(i, j, n1)] = diff(idx(i, jb, n1), idx(i, jt, n1), jb, jt, dy);
            }
        }
        let mut dxf = Vec::with_capacity(self.fx.len());
        for j in 0..n2 {
            for f in 0..n1 - 1 {
                let (l, r) = (idx(f, j, n1), idx(f + 1, j, n1));
                let g = Vec2::new((p[r] - p[l]) / dx, 0.5 * (gy[l] + gy[r]));
                dxf.push(g - self.fx[j * (n1 - 1) + f]);
            }
        }
        let mut dyf = Vec::with_capacity(self.fy.len());
        for f in 0..n2 - 1 {
            for i in 0..n1 {
                let (b, t) = (idx(i, f, n1), idx(i, f + 1, n1));
                let g = Vec2::new(0.5 * (gx[b] + gx[t]), (p[t] - p[b]) / dy);
                dyf.push(g - self.fy[f * n1 + i]);
            }
        }
        (dxf, dyf)
    }
}

struct State {
    dxf: Vec<Vec2>,
    dyf: Vec<Vec2>,
    vx: Vec<f64>,
    vy: Vec<f64>,
    div: Vec<f64>,
    residual: f64,
}

fn evaluate(flux: &dyn FluxMap, lay: &Layout, p: &[f64]) -> Result<State> {
    let (n1, n2) = (lay.n1, lay.n2);
    let (dxf, dyf) = lay.drives(p);
    let vx = dxf.iter().map(|d| flux.flux(*d).map(|u| u.x)).collect::<Result<Vec<_>>>()?;
    let vy = dyf.iter().map(|d| flux.flux(*d).map(|u| u.y)).collect::<Result<Vec<_>>>()?;
    let mut div = vec![0.0; n1 * n2];
    for j in 0..n2 {
        for f in 0..n1 - 1 {
            let v = vx[j * (n1 - 1) + f] / lay.dx;
            div[idx(f, j, n1)] += v;
            div[idx(f + 1, j, n1)] -= v;
        }
    }
    for f in 0..n2 - 1 {
        for i in 0..n1 {
            let v = vy[f * n1 + i] / lay.dy;
            div[idx(i, f, n1)] += v;
            div[idx(i, f + 1, n1)] -= v;
        }
    }
    let residual = rms(&div) / lay.scale;
    Ok(State { dxf, dyf, vx, vy, div, residual })
}

fn secant(delta: Vec2, axis: usize, lay: &Layout, flux: &dyn FluxMap) -> Result<f64> {
    let g2 = delta.dot(delta);
    if g2 == 0.0 {
        return Ok(lay.plateau[axis]);
    }
    // The full dissipation -U . delta / |delta|^2 stays positive for monotone
    // maps even when the normal component alone changes sign.
    let u = flux.flux(delta)?;
    let k = -u.dot(delta) / g2;
    Ok(if k > 0.0 && k.is_finite() { k } else { lay.plateau[axis] })
}

fn mobilities(flux: &dyn FluxMap, lay: &Layout, st: &State, newton: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let face = |d: &Vec2, axis: usize| -> Result<f64> {
        if newton {
            let t = flux.normal_slope(*d, axis)?;
            if t > 0.0 && t.is_finite() {
                return Ok(t);
            }
        }
        secant(*d, axis, lay, flux)
    };
    let kx = st.dxf.iter().map(|d| face(d, 0)).collect::<Result<Vec<_>>>()?;
    let ky = st.dyf.iter().map(|d| face(d, 1)).collect::<Result<Vec<_>>>()?;
    Ok((kx, ky))
}

/// Solves for the zero-mean pressure and face fluxes.
pub fn solve_macro(domain: &MacroDomain, flux: &dyn FluxMap, numerics: &MacroNumerics) -> Result<MacroSolution> {
    numerics.validate()?;
    let lay = Layout::new(domain, flux)?;
    let (n1, n2) = (lay.n1, lay.n2);
    let mut p = vec![0.0; n1 * n2];
    let mut st = evaluate(flux, &lay, &p)?;
    let mut iterations = 0;
    while st.residual > numerics.tol {
        if iterations >= numerics.max_iter {
            return Err(Error::NonConvergence { stage: "macro solve", iterations, residual: st.residual });
        }
        iterations += 1;
        let newton = numerics.newton_switch.is_some_and(|s| st.residual < s);
        let mut op = FaceOperator::new(n1, n2, lay.dx, lay.dy, Boundary::NoFlux);
        let (kx, ky) = mobilities(flux, &lay, &st, newton)?;
        op.kx = kx;
        op.ky = ky;
        // D(p + c) ~ D(p) + A c, so the correction solves A c = -D(p).
        let rhs: Vec<f64> = st.div.iter().map(|v| -v).collect();
        let mut step = vec![0.0; n1 * n2];
        let target = numerics.linear_rel_tol * rms(&rhs);
        pcg(&op, &rhs, &mut step, target, 20 * n1 * n2);

        let mut theta = if newton { 1.0 } else { numerics.damping };
        let mut accepted = None;
        for _ in 0..8 {
            let mut trial: Vec<f64> = p.iter().zip(&step).map(|(a, s)| a + theta * s).collect();
            remove_mean(&mut trial);
            let ts = evaluate(flux, &lay, &trial)?;
            let better = ts.residual < st.residual;
            accepted = Some((trial, ts));
            if better {
                break;
            }
            theta *= 0.5;
        }
        let (trial, ts) = accepted.expect("at least one trial step");
        p = trial;
        st = ts;
    }
    Ok(finish(&lay, p, st, iterations))
}

fn finish(lay: &Layout, p: Vec<f64>, st: State, iterations: usize) -> MacroSolution {
    let (n1, n2) = (lay.n1, lay.n2);
    let mut vx = vec![0.0; (n1 + 1) * n2];
    for j in 0..n2 {
        for f in 0..n1 - 1 {
            vx[j * (n1 + 1) + f + 1] = st.vx[j * (n1 - 1) + f];
        }
    }
    let mut vy = vec![0.0; n1 * (n2 + 1)];
    vy[n1..n1 * n2].copy_from_slice(&st.vy);
    MacroSolution { n1, n2, p, vx, vy, residual: st.residual, iterations }
}

/// Normalized divergence residual of `solution.p`.
pub fn macro_residual(solution: &MacroSolution, domain: &MacroDomain, flux: &dyn FluxMap) -> Result<f64> {
    if solution.n1 != domain.n1 || solution.n2 != domain.n2 || solution.p.len() != domain.n1 * domain.n2 {
        return Err(Error::Domain("solution grid does not match the domain".into()));
    }
    let lay = Layout::new(domain, flux)?;
    Ok(evaluate(flux, &lay, &solution.p)?.residual)
}

/// Discrete divergence of the face fluxes per cell.
pub fn divergence(solution: &MacroSolution, domain: &MacroDomain) -> Vec<f64> {
    let (n1, n2) = (solution.n1, solution.n2);
    let (dx, dy) = (domain.dx(), domain.dy());
    let mut div = vec![0.0; n1 * n2];
    for j in 0..n2 {
        for i in 0..n1 {
            div[idx(i, j, n1)] = (solution.vx[j * (n1 + 1) + i + 1] - solution.vx[j * (n1 + 1) + i]) / dx
                + (solution.vy[(j + 1) * n1 + i] - solution.vy[j * n1 + i]) / dy;
        }
    }
    div
}

/// Cell-centred filtration velocity: the average of the two opposite face
/// fluxes in each direction.
pub fn filtration_velocity(solution: &MacroSolution) -> Vec<Vec2> {
    let (n1, n2) = (solution.n1, solution.n2);
    let mut v = Vec::with_capacity(n1 * n2);
    for j in 0..n2 {
        for i in 0..n1 {
            let x = 0.5 * (solution.vx[j * (n1 + 1) + i] + solution.vx[j * (n1 + 1) + i + 1]);
            let y = 0.5 * (solution.vy[j * n1 + i] + solution.vy[(j + 1) * n1 + i]);
            v.push(Vec2::new(x, y));
        }
    }
    v
}

/// Largest face drive `|grad p - f|` of a solution.
pub fn max_drive(solution: &MacroSolution, domain: &MacroDomain, flux: &dyn FluxMap) -> Result<f64> {
    let lay = Layout::new(domain, flux)?;
    let (dxf, dyf) = lay.drives(&solution.p);
    Ok(dxf.iter().chain(&dyf).map(|d| d.norm()).fold(0.0, f64::max))
}

/// Table range for a macroscopic run: four times the larger of the force
/// magnitude and the drives of a linear pre-solve with the zero-shear
/// `mobility`.
pub fn estimate_rho_max(domain: &MacroDomain, mobility: [[f64; 2]; 2]) -> Result<f64> {
    let linear = LinearFlux { mobility };
    let sol = solve_macro(domain, &linear, &MacroNumerics::default())?;
    let lay = Layout::new(domain, &linear)?;
    let f_max = lay.fx.iter().chain(&lay.fy).map(|v| v.norm()).fold(0.0, f64::max);
    let d_max = max_drive(&sol, domain, &linear)?;
    let rho = 4.0 * f_max.max(d_max);
    Ok(if rho > 0.0 { rho } else { 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carreau::CarreauParams;
    use crate::cell::CellNumerics;
    use crate::flux::{build_flux_table, ExactFlux, TableGrid};
    use crate::geometry::{Force, RoughnessProfile};
    use crate::linalg::mean;

    fn aniso() -> LinearFlux {
        LinearFlux { mobility: [[0.08, 0.01], [0.01, 0.05]] }
    }

    /// A shear-thinning analytic map `U = -d / (1 + |d|)`.
    struct Thinning;
    impl FluxMap for Thinning {
        fn flux(&self, d: Vec2) -> Result<Vec2> {
            Ok((-1.0 / (1.0 + d.norm())) * d)
        }
    }

    fn l2_rel(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn zero_force_gives_zero_solution() {
        let domain = MacroDomain::new(1.0, 1.0, 8, 8, Force::Zero).unwrap();
        let s = solve_macro(&domain, &aniso(), &MacroNumerics::default()).unwrap();
        assert_eq!(s.iterations, 0);
        assert!(s.p.iter().chain(&s.vx).chain(&s.vy).all(|v| *v == 0.0));
        assert_eq!(macro_residual(&s, &domain, &aniso()).unwrap(), 0.0);
    }

    #[test]
    fn gradient_force_is_absorbed() {
        let domain = MacroDomain::new(1.0, 2.0, 16, 12, Force::Uniform { f1: 1.0, f2: -0.5 }).unwrap();
        let num = MacroNumerics { tol: 1e-10, ..MacroNumerics::default() };
        let s = solve_macro(&domain, &Thinning, &num).unwrap();
        let phi: Vec<f64> = (0..12)
            .flat_map(|j| (0..16).map(move |i| (i, j)))
            .map(|(i, j)| domain.force.potential(domain.cell_center(i, j)).unwrap())
            .collect();
        let m = mean(&phi);
        for (p, f) in s.p.iter().zip(&phi) {
            assert!((p - (f - m)).abs() < 1e-8);
        }
        assert!(s.vx.iter().chain(&s.vy).all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn response_is_odd_and_mass_balanced() {
        let plus = MacroDomain::new(1.0, 1.0, 12, 10, Force::SineShear { amplitude: 1.0 }).unwrap();
        let minus = MacroDomain { force: Force::SineShear { amplitude: -1.0 }, ..plus.clone() };
        let num = MacroNumerics { tol: 1e-10, ..MacroNumerics::default() };
        let a = solve_macro(&plus, &Thinning, &num).unwrap();
        let b = solve_macro(&minus, &Thinning, &num).unwrap();
        assert!(a.residual <= 1e-10);
        for (x, y) in a.p.iter().zip(&b.p) {
            assert!((x + y).abs() <= 1e-9);
        }
        assert!(mean(&a.p).abs() < 1e-12);
        let div = divergence(&a, &plus);
        let total: f64 = div.iter().sum::<f64>() * plus.dx() * plus.dy();
        assert!(total.abs() < 1e-13);
        // Boundary faces carry no flux.
        for j in 0..10 {
            assert_eq!(a.vx[j * 13], 0.0);
            assert_eq!(a.vx[j * 13 + 12], 0.0);
        }
        let v = filtration_velocity(&a);
        assert_eq!(v.len(), 120);
        assert!(v.iter().any(|w| w.norm() > 1e-3));
    }

    #[test]
    fn unsolved_pressure_residual_anchor() {
        let domain = MacroDomain::new(1.0, 1.0, 16, 16, Force::SineShear { amplitude: 1.0 }).unwrap();
        let zero = MacroSolution {
            n1: 16,
            n2: 16,
            p: vec![0.0; 256],
            vx: vec![0.0; 17 * 16],
            vy: vec![0.0; 16 * 17],
            residual: 0.0,
            iterations: 0,
        };
        let r = macro_residual(&zero, &domain, &aniso()).unwrap();
        assert!((r - GOLDEN_ZERO_P_RESIDUAL).abs() <= 1e-10 * GOLDEN_ZERO_P_RESIDUAL, "{r}");
    }

    // Regression anchor: residual of p = 0 under the sine shear force, 16 x 16.
    const GOLDEN_ZERO_P_RESIDUAL: f64 = 4.037_880_863_764_418;

    #[test]
    fn table_matches_exact_evaluator() {
        let params = CarreauParams::new(2.0, 1.0, 1e-12, 1.5).unwrap();
        let profile = RoughnessProfile::cosine2d(1.0, 0.25, 0.1).unwrap();
        let cell = CellNumerics { n: 16, ..CellNumerics::default() };
        let domain = MacroDomain::new(1.0, 1.0, 8, 8, Force::SineShear { amplitude: 1.0 }).unwrap();
        let exact = ExactFlux { params, profile: profile.clone(), numerics: cell };
        let rho = estimate_rho_max(&domain, plateau_mobility(&exact).unwrap()).unwrap();
        let table = build_flux_table(&params, &profile, TableGrid::with_rho_max(rho), &cell, 1).unwrap();
        let num = MacroNumerics::default();
        let a = solve_macro(&domain, &exact, &num).unwrap();
        let b = solve_macro(&domain, &table, &num).unwrap();
        assert!(l2_rel(&b.p, &a.p) <= 1e-2, "{}", l2_rel(&b.p, &a.p));
        assert!(max_drive(&b, &domain, &table).unwrap() <= rho);
    }

    #[test]
    fn out_of_range_is_reported() {
        let params = CarreauParams::new(2.0, 1.0, 2.0, 1.5).unwrap();
        let profile = RoughnessProfile::constant(1.0).unwrap();
        let cell = CellNumerics { n: 8, ..CellNumerics::default() };
        let table = build_flux_table(&params, &profile, TableGrid::with_rho_max(0.1), &cell, 1).unwrap();
        let domain = MacroDomain::new(1.0, 1.0, 6, 6, Force::SineShear { amplitude: 1.0 }).unwrap();
        let err = solve_macro(&domain, &table, &MacroNumerics::default()).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { rho_max, .. } if rho_max == 0.1));
    }
}
