//! Reference solutions coded independently of the main solver path, and the
//! battery of comparisons run by `rugose validate`.

use crate::carreau::CarreauParams;
use crate::cell::CellNumerics;
use crate::error::{Error, Result};
use crate::flux::{build_flux_table, evaluate_u, TableGrid};
use crate::gap;
use crate::geometry::{Force, MacroDomain, RoughnessProfile};
use crate::macroscale::{solve_macro, MacroNumerics};
use crate::quadrature::{integrate_piecewise, Tolerance};
use crate::vec2::Vec2;
use serde::Serialize;
use std::f64::consts::PI;

/// One comparison between a computed and a reference quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub case: String,
    pub computed: Vec<f64>,
    pub reference: Vec<f64>,
    pub rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Empty unless the case could not be evaluated.
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl OracleReport {
    /// Relative error `|c - r| / |r|` in the Euclidean norm, absolute when `r = 0`.
    pub fn compare(case: &str, computed: Vec<f64>, reference: Vec<f64>, tolerance: f64) -> Self {
        let diff: f64 = computed.iter().zip(&reference).map(|(c, r)| (c - r).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
        let rel_error = if computed.len() != reference.len() {
            f64::INFINITY
        } else if norm > 0.0 {
            diff / norm
        } else {
            diff
        };
        Self::with_error(case, computed, reference, rel_error, tolerance)
    }

    /// Report with a precomputed error measure.
    pub fn with_error(case: &str, computed: Vec<f64>, reference: Vec<f64>, rel_error: f64, tolerance: f64) -> Self {
        Self {
            case: case.to_string(),
            computed,
            reference,
            rel_error,
            tolerance,
            pass: rel_error <= tolerance,
            detail: String::new(),
        }
    }

    fn failed(case: &str, tolerance: f64, err: &Error) -> Self {
        Self {
            case: case.to_string(),
            computed: vec![],
            reference: vec![],
            rel_error: f64::INFINITY,
            tolerance,
            pass: false,
            detail: err.to_string(),
        }
    }
}

/// Solves the linear Reynolds equation `div(a (f - grad p)) = 0` with
/// `a = cubed_gap / (12 viscosity)` per axis and no-flux walls, on the
/// cell-centred grid of `domain`, by red-black successive over-relaxation.
///
/// `cubed_gap(x)` returns the effective `h^3` for flow along x1 and x2; pass
/// `[h^3, h^3]` for a physical gap or a homogenized tensor's diagonal times
/// `12 viscosity`. Returns the zero-mean pressure, row-major.
pub fn newtonian_reynolds_oracle(
    domain: &MacroDomain,
    viscosity: f64,
    cubed_gap: &dyn Fn(Vec2) -> [f64; 2],
) -> Result<Vec<f64>> {
    if !(viscosity > 0.0) {
        return Err(Error::InvalidParameter("viscosity must be positive".into()));
    }
    let (nx, ny) = (domain.n1, domain.n2);
    let (hx, hy) = (domain.dx(), domain.dy());
    let at = |i: usize, j: usize| j * nx + i;
    // east[i][j]: face between (i, j) and (i + 1, j); north likewise.
    let mut a_e = vec![0.0; nx * ny];
    let mut b_e = vec![0.0; nx * ny];
    let mut a_n = vec![0.0; nx * ny];
    let mut b_n = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx {
                let x = Vec2::new((i + 1) as f64 * hx, (j as f64 + 0.5) * hy);
                let a = cubed_gap(x)[0] / (12.0 * viscosity);
                a_e[at(i, j)] = a;
                b_e[at(i, j)] = a * domain.force_at(x).x;
            }
            if j + 1 < ny {
                let x = Vec2::new((i as f64 + 0.5) * hx, (j + 1) as f64 * hy);
                let a = cubed_gap(x)[1] / (12.0 * viscosity);
                a_n[at(i, j)] = a;
                b_n[at(i, j)] = a * domain.force_at(x).y;
            }
        }
    }
    if a_e.iter().chain(&a_n).any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::Domain("Reynolds coefficients must be finite and non-negative".into()));
    }
    // Cell equation: sum_nb a (p_nb - p) / d^2 = sum_faces (+-) a f_n / d.
    let mut rhs = vec![0.0; nx * ny];
    let mut diag = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let c = at(i, j);
            let mut d = 0.0;
            let mut s = 0.0;
            if i + 1 < nx {
                d += a_e[c] / (hx * hx);
                s += b_e[c] / hx;
            }
            if i > 0 {
                d += a_e[at(i - 1, j)] / (hx * hx);
                s -= b_e[at(i - 1, j)] / hx;
            }
            if j + 1 < ny {
                d += a_n[c] / (hy * hy);
                s += b_n[c] / hy;
            }
            if j > 0 {
                d += a_n[at(i, j - 1)] / (hy * hy);
                s -= b_n[at(i, j - 1)] / hy;
            }
            if !(d > 0.0) {
                return Err(Error::Domain("isolated cell in the Reynolds oracle".into()));
            }
            diag[c] = d;
            rhs[c] = s;
        }
    }
    let offdiag = |p: &[f64], i: usize, j: usize| -> f64 {
        let mut s = 0.0;
        if i + 1 < nx {
            s += a_e[at(i, j)] / (hx * hx) * p[at(i + 1, j)];
        }
        if i > 0 {
            s += a_e[at(i - 1, j)] / (hx * hx) * p[at(i - 1, j)];
        }
        if j + 1 < ny {
            s += a_n[at(i, j)] / (hy * hy) * p[at(i, j + 1)];
        }
        if j > 0 {
            s += a_n[at(i, j - 1)] / (hy * hy) * p[at(i, j - 1)];
        }
        s
    };
    let n_max = nx.max(ny) as f64;
    let omega = 2.0 / (1.0 + (PI / n_max).sin());
    let rhs_scale = rhs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let diag_scale = diag.iter().copied().fold(0.0, f64::max);
    let mut p = vec![0.0; nx * ny];
    if rhs_scale == 0.0 {
        return Ok(p);
    }
    let max_sweeps = 200 * nx.max(ny) + 10_000;
    for sweep in 0..max_sweeps {
        for colour in 0..2 {
            for j in 0..ny {
                for i in (0..nx).filter(|i| (i + j) % 2 == colour) {
                    let c = at(i, j);
                    let gs = (offdiag(&p, i, j) - rhs[c]) / diag[c];
                    p[c] += omega * (gs - p[c]);
                }
            }
        }
        if sweep % 10 == 9 {
            // Residual of the defining equation, relative to the source.
            let mut worst = 0.0f64;
            for j in 0..ny {
                for i in 0..nx {
                    let c = at(i, j);
                    worst = worst.max((offdiag(&p, i, j) - diag[c] * p[c] - rhs[c]).abs());
                }
            }
            if worst <= 1e-13 * rhs_scale.max(diag_scale * p.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
                let m = p.iter().sum::<f64>() / p.len() as f64;
                p.iter_mut().for_each(|v| *v -= m);
                return Ok(p);
            }
        }
    }
    Err(Error::NonConvergence { stage: "Reynolds oracle", iterations: max_sweeps, residual: f64::NAN })
}

/// Closed form for a constant gap under the compatible shear force
/// `(c cos(2 pi x2 / L2), 0)` on `(0, L1) x (0, L2)`:
/// `p = c L2 / (2 pi) cos(2 pi x2 / L2) sinh(k (x1 - L1/2)) / cosh(k L1 / 2)`, `k = 2 pi / L2`.
pub fn cosine_shear_pressure(amplitude: f64, l1: f64, l2: f64, x: Vec2) -> f64 {
    let k = 2.0 * PI / l2;
    amplitude / k * (k * x.y).cos() * (k * (x.x - 0.5 * l1)).sinh() / (k * 0.5 * l1).cosh()
}

/// Mean gap mobilities `h^3 / (12 eta0)` of a profile that varies in z1 only:
/// `(across, along)` = (harmonic mean, arithmetic mean), by adaptive quadrature.
pub fn layered_means_oracle(profile: &RoughnessProfile, params: &CarreauParams) -> Result<(f64, f64)> {
    if !profile.is_layered_in_z1() {
        return Err(Error::Domain("layered means need a profile that varies in z1 only".into()));
    }
    profile.validate()?;
    let eta0 = params.eta0();
    let h = |z1: f64| profile.height(Vec2::new(z1, 0.0));
    let tol = Tolerance { abs: 1e-15, rel: 1e-13, max_intervals: 2000 };
    let bps = profile.z1_breakpoints();
    let resistance = integrate_piecewise(|z| 12.0 * eta0 / h(z).powi(3), &bps, tol)?.value;
    let along = integrate_piecewise(|z| h(z).powi(3) / (12.0 * eta0), &bps, tol)?.value;
    Ok((1.0 / resistance, along))
}

/// Flat-gap flux `-2 K(h0, |delta|) delta`, with no cell problem involved.
pub fn flat_carreau_oracle(params: &CarreauParams, h0: f64, delta: Vec2) -> Result<Vec2> {
    let k = gap::flux_kernel(params, h0, delta.norm())?;
    Ok((-2.0 * k) * delta)
}

/// Inputs for the oracle battery.
#[derive(Debug, Clone)]
pub struct BatteryInputs {
    pub params: CarreauParams,
    pub profile: RoughnessProfile,
    pub cell: CellNumerics,
}

fn plateau(eta0: f64) -> CarreauParams {
    CarreauParams::new(eta0, 1.0, 1e-12, 1.5).expect("valid plateau constants")
}

fn run(case: &str, tol: f64, f: impl FnOnce() -> Result<OracleReport>) -> OracleReport {
    f().unwrap_or_else(|e| OracleReport::failed(case, tol, &e))
}

fn l2_rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Runs every comparison; evaluation failures appear as failed reports.
pub fn run_battery(inputs: &BatteryInputs) -> Vec<OracleReport> {
    let params = inputs.params;
    let mut out = Vec::new();

    out.push(run("constitutive round trip", 1e-10, || {
        let mut worst = 0.0f64;
        for k in 0..200 {
            let gamma = 10f64.powf(-8.0 + 16.0 * k as f64 / 199.0);
            let back = params.shear_from_stress(params.stress_from_shear(gamma)?)?;
            worst = worst.max((back - gamma).abs() / gamma.max(1.0));
        }
        Ok(OracleReport::with_error("constitutive round trip", vec![worst], vec![0.0], worst, 1e-10))
    }));

    out.push(run("psi plateau and ordering", 0.0, || {
        let psi0 = params.psi(0.0)?;
        let mut violations = 0usize;
        let mut prev = psi0;
        for k in 1..=1000 {
            let v = params.psi(10f64.powf(-6.0 + 12.0 * k as f64 / 1000.0))?;
            let ok = if params.is_shear_thinning() { v <= prev } else { v >= prev };
            violations += usize::from(!ok);
            prev = v;
        }
        let err = (psi0 - params.eta0()).abs() + violations as f64;
        Ok(OracleReport::with_error(
            "psi plateau and ordering",
            vec![psi0, violations as f64],
            vec![params.eta0(), 0.0],
            err,
            0.0,
        ))
    }));

    let (h_lo, h_hi) = inputs.profile.bounds();
    let h_mid = 0.5 * (h_lo + h_hi);
    let drive = Vec2::new(1.0, -0.5);
    out.push(run("velocity profile vs ODE", 1e-6, || {
        let ode = gap::profile_ode_oracle(&params, h_mid, drive)?;
        let peak = ode.w.iter().map(|w| w.norm()).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for (z, w) in ode.z.iter().zip(&ode.w) {
            let v = gap::velocity_profile(&params, h_mid, drive, *z)?;
            worst = worst.max((v - *w).norm() / peak);
        }
        Ok(OracleReport::with_error("velocity profile vs ODE", vec![worst], vec![0.0], worst, 1e-6))
    }));
    out.push(run("gap flux identity", 1e-6, || {
        let ode = gap::profile_ode_oracle(&params, h_mid, drive)?;
        let k = gap::flux_kernel(&params, h_mid, drive.norm())?;
        let reference = (-2.0 * k) * drive;
        Ok(OracleReport::compare("gap flux identity", vec![ode.flux.x, ode.flux.y], vec![reference.x, reference.y], 1e-6))
    }));

    out.push(run("flat Newtonian flux", 1e-6, || {
        let flat = RoughnessProfile::constant(1.0)?;
        let u = evaluate_u(&plateau(2.0), &flat, Vec2::new(1.0, 0.0), &inputs.cell)?;
        Ok(OracleReport::compare("flat Newtonian flux", vec![u.x, u.y], vec![-1.0 / 12.0, 0.0], 1e-6))
    }));

    out.push(run("flat Carreau flux", 1e-12, || {
        let flat = RoughnessProfile::constant(h_mid)?;
        let d = Vec2::new(1.5, 0.7);
        let u = evaluate_u(&params, &flat, d, &inputs.cell)?;
        let reference = flat_carreau_oracle(&params, h_mid, d)?;
        Ok(OracleReport::compare("flat Carreau flux", vec![u.x, u.y], vec![reference.x, reference.y], 1e-12))
    }));

    out.push(run("layered Newtonian cell", 1e-4, || {
        let p = plateau(2.0);
        let layered = RoughnessProfile::cosine2d(1.0, 0.25, 0.0)?;
        let (across, along) = layered_means_oracle(&layered, &p)?;
        let ux = evaluate_u(&p, &layered, Vec2::new(1.0, 0.0), &inputs.cell)?;
        let uy = evaluate_u(&p, &layered, Vec2::new(0.0, 1.0), &inputs.cell)?;
        Ok(OracleReport::compare(
            "layered Newtonian cell",
            vec![-ux.x / 2.0, -uy.y / 2.0],
            vec![across, along],
            1e-4,
        ))
    }));

    out.push(run("Reynolds oracle gradient force", 1e-10, || {
        let domain = MacroDomain::new(1.0, 1.0, 24, 24, Force::Uniform { f1: 1.0, f2: 0.0 })?;
        let wavy = |x: Vec2| {
            let h = 1.0 + 0.3 * (2.0 * PI * x.x).sin() * (2.0 * PI * x.y).cos();
            [h.powi(3); 2]
        };
        let p = newtonian_reynolds_oracle(&domain, 2.0, &wavy)?;
        let reference: Vec<f64> = (0..24).flat_map(|_| (0..24).map(|i| (i as f64 + 0.5) / 24.0 - 0.5)).collect();
        let err = p.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok(OracleReport::with_error("Reynolds oracle gradient force", vec![err], vec![0.0], err, 1e-10))
    }));

    out.push(run("Reynolds oracle convergence order", 0.125, || {
        let flat = |_: Vec2| [1.0, 1.0];
        let mut errors = Vec::new();
        for n in [16, 32, 64] {
            let domain = MacroDomain::new(1.0, 1.0, n, n, Force::CosineShear { amplitude: 1.0 })?;
            let p = newtonian_reynolds_oracle(&domain, 2.0, &flat)?;
            let mut worst = 0.0f64;
            for j in 0..n {
                for i in 0..n {
                    let x = domain.cell_center(i, j);
                    worst = worst.max((p[j * n + i] - cosine_shear_pressure(1.0, 1.0, 1.0, x)).abs());
                }
            }
            errors.push(worst);
        }
        let r1 = errors[0] / errors[1];
        let r2 = errors[1] / errors[2];
        let err = ((r1 - 4.0).abs().max((r2 - 4.0).abs())) / 4.0;
        Ok(OracleReport::with_error("Reynolds oracle convergence order", vec![r1, r2], vec![4.0, 4.0], err, 0.125))
    }));

    out.push(run("Reynolds oracle wedge", 1e-10, || {
        // A wedge gap under a uniform force: zero net flux forces p' = f exactly.
        let domain = MacroDomain::new(2.0, 1.0, 32, 8, Force::Uniform { f1: 1.0, f2: 0.0 })?;
        let wedge = |x: Vec2| [(0.5 + 0.4 * x.x).powi(3); 2];
        let p = newtonian_reynolds_oracle(&domain, 1.0, &wedge)?;
        let reference: Vec<f64> = (0..8).flat_map(|_| (0..32).map(|i| (i as f64 + 0.5) / 16.0 - 1.0)).collect();
        let err = p.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok(OracleReport::with_error("Reynolds oracle wedge", vec![err], vec![0.0], err, 1e-10))
    }));

    out.push(run("Newtonian macro vs Reynolds oracle", 1e-4, || {
        let report = newtonian_macro_cross_check(32, &inputs.cell, TableGrid { m: 4, n: 4, rho_max: 0.0, rho_min_ratio: 1e-3 }, 1)?;
        Ok(OracleReport { case: "Newtonian macro vs Reynolds oracle".into(), ..report })
    }));

    out.push(run("flux map structure", 0.0, || {
        let d = [Vec2::new(1.0, 0.0), Vec2::new(0.3, -0.8), Vec2::new(-2.0, 1.1)];
        let mut u = Vec::new();
        let mut violations = 0usize;
        for di in d {
            let a = evaluate_u(&params, &inputs.profile, di, &inputs.cell)?;
            let b = evaluate_u(&params, &inputs.profile, -di, &inputs.cell)?;
            violations += usize::from(a != -b);
            violations += usize::from(!(-a.dot(di) > 0.0));
            u.push(a);
        }
        for i in 0..d.len() {
            for j in i + 1..d.len() {
                violations += usize::from((u[j] - u[i]).dot(d[i] - d[j]) < -1e-8);
            }
        }
        let zero = evaluate_u(&params, &inputs.profile, Vec2::ZERO, &inputs.cell)?;
        violations += usize::from(zero != Vec2::ZERO);
        Ok(OracleReport::with_error("flux map structure", vec![violations as f64], vec![0.0], violations as f64, 0.0))
    }));

    out
}

/// Plateau-constant macroscopic solve on the profile `1 + 0.25 cos(2 pi z1)`
/// with the sine shear force, compared with the Reynolds oracle driven by the
/// layered-mean mobility tensor. A zero `grid.rho_max` is replaced by the
/// force-based range estimate.
pub fn newtonian_macro_cross_check(
    n: usize,
    cell: &CellNumerics,
    mut grid: TableGrid,
    jobs: usize,
) -> Result<OracleReport> {
    let eta0 = 2.0;
    let params = plateau(eta0);
    let profile = RoughnessProfile::cosine2d(1.0, 0.25, 0.0)?;
    let domain = MacroDomain::new(1.0, 1.0, n, n, Force::SineShear { amplitude: 1.0 })?;
    if grid.rho_max == 0.0 {
        let mobility = crate::flux::plateau_mobility(&crate::flux::ExactFlux {
            params,
            profile: profile.clone(),
            numerics: *cell,
        })?;
        grid.rho_max = crate::macroscale::estimate_rho_max(&domain, mobility)?;
    }
    let table = build_flux_table(&params, &profile, grid, cell, jobs)?;
    let numerics = MacroNumerics { tol: 1e-10, ..MacroNumerics::default() };
    let sol = solve_macro(&domain, &table, &numerics)?;
    // Homogenized mobility 2 * mean(h^3 / (12 eta0)) corresponds to an
    // effective h^3 of 24 eta0 * mean in the Reynolds equation.
    let (across, along) = layered_means_oracle(&profile, &params)?;
    let cubed = [24.0 * eta0 * across, 24.0 * eta0 * along];
    let reference = newtonian_reynolds_oracle(&domain, eta0, &|_| cubed)?;
    let err = l2_rel(&sol.p, &reference);
    Ok(OracleReport::with_error("Newtonian macro vs Reynolds oracle", vec![err], vec![0.0], err, 1e-4))
}
