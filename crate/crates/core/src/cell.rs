//! Nonlinear periodic Reynolds cell problem
//! `div_z' { K(h, |delta + grad q|) (delta + grad q) } = 0` on the unit cell,
//! with zero-mean periodic `q`, and the resulting homogenized flux
//! `U = -2 <K (delta + grad q)>`.
//!
//! Cell-centred finite volumes: the normal gradient on a face is the two-point
//! difference, the tangential one the average of the central differences in the
//! two adjacent cells, and `h` is taken at the face midpoint.

use crate::carreau::CarreauParams;
use crate::error::{Error, Result};
use crate::gap;
use crate::geometry::RoughnessProfile;
use crate::linalg::{idx, mean, pcg, remove_mean, rms, Boundary, FaceOperator};
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellNumerics {
    /// Cells per side.
    pub n: usize,
    /// Tolerance on the normalized divergence residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor of the frozen-coefficient steps, in (0, 1].
    pub damping: f64,
    /// Residual below which steps use the normal tangent mobility at full
    /// relaxation; `None` keeps frozen secant steps throughout.
    pub newton_switch: Option<f64>,
    /// Inner conjugate-gradient tolerance relative to the current residual.
    pub linear_rel_tol: f64,
}

impl Default for CellNumerics {
    fn default() -> Self {
        Self {
            n: 64,
            tol: 1e-8,
            max_iter: 200,
            damping: 0.7,
            newton_switch: Some(1e-3),
            linear_rel_tol: 1e-2,
        }
    }
}

impl CellNumerics {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::InvalidParameter(format!("cell resolution must be >= 4, got {}", self.n)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("cell tolerance must be positive".into()));
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

#[derive(Debug, Clone)]
pub struct CellProblem<'a> {
    pub params: CarreauParams,
    pub profile: &'a RoughnessProfile,
    pub delta: Vec2,
    pub numerics: CellNumerics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSolution {
    pub n: usize,
    /// Zero-mean corrector samples, row-major (x fastest).
    pub q: Vec<f64>,
    /// Central-difference gradient of `q` at cell centres.
    pub grad_q: Vec<Vec2>,
    pub flux: Vec2,
    pub residual: f64,
    pub iterations: usize,
}

/// Face heights and scales shared by every evaluation on one grid.
struct CellGrid {
    n: usize,
    d: f64,
    hx: Vec<f64>,
    hy: Vec<f64>,
    scale: f64,
}

impl CellGrid {
    fn new(problem: &CellProblem<'_>) -> Self {
        let n = problem.numerics.n;
        let d = 1.0 / n as f64;
        let mut hx = Vec::with_capacity(n * n);
        let mut hy = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let zc = Vec2::new(-0.5 + (i as f64 + 0.5) * d, -0.5 + (j as f64 + 0.5) * d);
                hx.push(problem.profile.height(zc + Vec2::new(0.5 * d, 0.0)));
                hy.push(problem.profile.height(zc + Vec2::new(0.0, 0.5 * d)));
            }
        }
        let eta0 = problem.params.eta0();
        let k0 = hx.iter().chain(&hy).map(|h| h * h * h / (12.0 * eta0)).sum::<f64>() / (2 * n * n) as f64;
        let scale = k0 * problem.delta.norm() + f64::MIN_POSITIVE;
        Self { n, d, hx, hy, scale }
    }
}

/// Face fluxes, frozen mobilities and divergence at one iterate.
struct FaceState {
    fx: Vec<f64>,
    fy: Vec<f64>,
    secant_x: Vec<f64>,
    secant_y: Vec<f64>,
    tangent_x: Vec<f64>,
    tangent_y: Vec<f64>,
    div: Vec<f64>,
    residual: f64,
}

fn evaluate(params: &CarreauParams, delta: Vec2, grid: &CellGrid, q: &[f64]) -> Result<FaceState> {
    let n = grid.n;
    let d = grid.d;
    let len = n * n;
    let mut st = FaceState {
        fx: vec![0.0; len],
        fy: vec![0.0; len],
        secant_x: vec![0.0; len],
        secant_y: vec![0.0; len],
        tangent_x: vec![0.0; len],
        tangent_y: vec![0.0; len],
        div: vec![0.0; len],
        residual: 0.0,
    };
    let at = |i: usize, j: usize| q[idx(i % n, j % n, n)];
    for j in 0..n {
        let (jm, jp) = ((j + n - 1) % n, (j + 1) % n);
        for i in 0..n {
            let (im, ip) = ((i + n - 1) % n, (i + 1) % n);
            let c = idx(i, j, n);

            let gn = delta.x + (at(ip, j) - at(i, j)) / d;
            let gt = delta.y + (at(i, jp) - at(i, jm) + at(ip, jp) - at(ip, jm)) / (4.0 * d);
            let (k, t) = face_mobility(params, grid.hx[c], gn, gt)?;
            st.fx[c] = k * gn;
            st.secant_x[c] = k;
            st.tangent_x[c] = t;

            let gn = delta.y + (at(i, jp) - at(i, j)) / d;
            let gt = delta.x + (at(ip, j) - at(im, j) + at(ip, jp) - at(im, jp)) / (4.0 * d);
            let (k, t) = face_mobility(params, grid.hy[c], gn, gt)?;
            st.fy[c] = k * gn;
            st.secant_y[c] = k;
            st.tangent_y[c] = t;
        }
    }
    for j in 0..n {
        let jm = (j + n - 1) % n;
        for i in 0..n {
            let im = (i + n - 1) % n;
            let c = idx(i, j, n);
            st.div[c] = (st.fx[c] - st.fx[idx(im, j, n)] + st.fy[c] - st.fy[idx(i, jm, n)]) / d;
        }
    }
    st.residual = rms(&st.div) / grid.scale;
    Ok(st)
}

/// `(K, dF_n/dg_n)` on a face carrying normal gradient `gn` and tangential `gt`.
fn face_mobility(params: &CarreauParams, h: f64, gn: f64, gt: f64) -> Result<(f64, f64)> {
    let g = gn.hypot(gt);
    let (k, slope) = gap::kernel_and_flux_slope(params, h, g)?;
    if g == 0.0 {
        return Ok((k, k));
    }
    let c = gn / g;
    Ok((k, k + (slope - k) * c * c))
}

fn finish(grid: &CellGrid, q: Vec<f64>, st: &FaceState, iterations: usize) -> CellSolution {
    let n = grid.n;
    let d = grid.d;
    let mut grad_q = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let (im, ip) = ((i + n - 1) % n, (i + 1) % n);
            let (jm, jp) = ((j + n - 1) % n, (j + 1) % n);
            grad_q.push(Vec2::new(
                (q[idx(ip, j, n)] - q[idx(im, j, n)]) / (2.0 * d),
                (q[idx(i, jp, n)] - q[idx(i, jm, n)]) / (2.0 * d),
            ));
        }
    }
    let flux = Vec2::new(-2.0 * mean(&st.fx), -2.0 * mean(&st.fy));
    CellSolution { n, q, grad_q, flux, residual: st.residual, iterations }
}

/// Solves the cell problem for one drive `delta`.
pub fn solve_cell(problem: &CellProblem<'_>) -> Result<CellSolution> {
    problem.numerics.validate()?;
    if !problem.delta.is_finite() {
        return Err(Error::Domain("cell drive must be finite".into()));
    }
    problem.profile.validate()?;
    let grid = CellGrid::new(problem);
    let n = grid.n;
    let num = &problem.numerics;

    let mut q = vec![0.0; n * n];
    let mut st = evaluate(&problem.params, problem.delta, &grid, &q)?;
    let mut iterations = 0;
    while st.residual > num.tol {
        if iterations >= num.max_iter {
            return Err(Error::NonConvergence { stage: "cell solve", iterations, residual: st.residual });
        }
        iterations += 1;
        let newton = num.newton_switch.is_some_and(|s| st.residual < s);
        let mut op = FaceOperator::new(n, n, grid.d, grid.d, Boundary::Periodic);
        if newton {
            op.kx.clone_from(&st.tangent_x);
            op.ky.clone_from(&st.tangent_y);
        } else {
            op.kx.clone_from(&st.secant_x);
            op.ky.clone_from(&st.secant_y);
        }
        let mut step = vec![0.0; n * n];
        let target = num.linear_rel_tol * rms(&st.div);
        pcg(&op, &st.div, &mut step, target, 20 * n * n);

        let mut theta = if newton { 1.0 } else { num.damping };
        let mut accepted = None;
        for _ in 0..8 {
            let mut trial: Vec<f64> = q.iter().zip(&step).map(|(a, s)| a + theta * s).collect();
            remove_mean(&mut trial);
            let ts = evaluate(&problem.params, problem.delta, &grid, &trial)?;
            let better = ts.residual < st.residual;
            accepted = Some((trial, ts));
            if better {
                break;
            }
            theta *= 0.5;
        }
        let (trial, ts) = accepted.expect("at least one trial step");
        q = trial;
        st = ts;
    }
    Ok(finish(&grid, q, &st, iterations))
}

/// Normalized divergence residual of a candidate solution for `problem`.
pub fn cell_residual(solution: &CellSolution, problem: &CellProblem<'_>) -> Result<f64> {
    if solution.n != problem.numerics.n || solution.q.len() != solution.n * solution.n {
        return Err(Error::Domain("solution grid does not match the problem".into()));
    }
    let grid = CellGrid::new(problem);
    Ok(evaluate(&problem.params, problem.delta, &grid, &solution.q)?.residual)
}
