//! Acceptance suite, run as its own binary so the report is always printed.
//! Each criterion prints one line
//! `ACCEPTANCE <id> PASS|FAIL <what>: <measured> (tolerance <tol>, <elapsed> of <budget>)`;
//! the process exits non-zero if any criterion fails or panics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rugose::cell::CellNumerics;
use rugose::flux::{build_flux_table, evaluate_u, ExactFlux, TableGrid};
use rugose::gap;
use rugose::geometry::{Force, MacroDomain, RoughnessProfile};
use rugose::macroscale::{estimate_rho_max, solve_macro, MacroNumerics};
use rugose::validation::{layered_means_oracle, newtonian_macro_cross_check};
use rugose::{CarreauParams, Vec2};
use std::time::{Duration, Instant};

fn verdict(id: u32, what: &str, measured: f64, tol: f64, ok: bool, elapsed: Duration, budget: Duration) -> bool {
    let pass = ok && elapsed < budget;
    println!(
        "ACCEPTANCE {id} {} {what}: {measured:.3e} (tolerance {tol:.1e}, {:.2?} of {:?})",
        if pass { "PASS" } else { "FAIL" },
        elapsed,
        budget
    );
    pass
}

fn thin() -> CarreauParams {
    CarreauParams::new(2.0, 1.0, 2.0, 1.5).unwrap()
}

fn plateau() -> CarreauParams {
    CarreauParams::new(2.0, 1.0, 1e-12, 1.5).unwrap()
}

fn criterion_1_constitutive_round_trip() -> bool {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for r in [1.2, 1.5, 1.9, 2.5, 3.0, 4.0] {
        let p = CarreauParams::new(2.0, 0.5, 1.5, r).unwrap();
        for k in 0..200 {
            let gamma = 10f64.powf(-8.0 + 16.0 * k as f64 / 199.0);
            let back = p.shear_from_stress(p.stress_from_shear(gamma).unwrap()).unwrap();
            worst = worst.max((back - gamma).abs() / gamma.max(1.0));
        }
    }
    let tol = 1e-10;
    let el = start.elapsed();
    verdict(1, "max |gamma' - gamma| / max(1, gamma)", worst, tol, worst <= tol, el, Duration::from_secs(1))
}

fn criterion_2_psi_plateau_and_ordering() -> bool {
    let start = Instant::now();
    let mut violations = 0usize;
    let mut plateau_exact = true;
    for r in [1.2, 1.5, 1.9, 2.5, 3.0, 4.0] {
        let p = CarreauParams::new(2.0, 0.5, 1.5, r).unwrap();
        plateau_exact &= p.psi(0.0).unwrap() == p.eta0();
        let mut prev = p.psi(0.0).unwrap();
        for k in 1..=1000 {
            let v = p.psi(10f64.powf(-8.0 + 16.0 * k as f64 / 1000.0)).unwrap();
            let ok = if r < 2.0 { v <= prev } else { v >= prev };
            violations += usize::from(!ok);
            prev = v;
        }
    }
    let el = start.elapsed();
    let ok = plateau_exact && violations == 0;
    verdict(2, "ordering violations (psi(0) == eta0 exactly required)", violations as f64, 0.0, ok, el, Duration::from_secs(1))
}

fn criterion_3_profile_matches_ode_oracle() -> bool {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut pointwise, mut identity) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let eta0 = rng.gen_range(1.5..5.0);
        let eta_inf = eta0 * rng.gen_range(0.05..0.7);
        let lambda = 10f64.powf(rng.gen_range(-2.0..1.0));
        let r = if rng.gen_bool(0.5) { rng.gen_range(1.1..1.9) } else { rng.gen_range(2.1..4.0) };
        let p = CarreauParams::new(eta0, eta_inf, lambda, r).unwrap();
        let h = rng.gen_range(0.2..2.0);
        let d = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let ode = gap::profile_ode_oracle(&p, h, d).unwrap();
        let peak = ode.w.iter().map(|w| w.norm()).fold(0.0, f64::max);
        let n = ode.z.len();
        for k in 0..n {
            let w = gap::velocity_profile(&p, h, d, ode.z[k]).unwrap();
            let e = (w - ode.w[k]).norm();
            // Both profiles vanish at the walls; compare there against the peak.
            let scale = if k == 0 || k == n - 1 { peak } else { ode.w[k].norm() };
            pointwise = pointwise.max(e / scale);
        }
        let k = gap::flux_kernel(&p, h, d.norm()).unwrap();
        let reference = (-2.0 * k) * d;
        identity = identity.max((ode.flux - reference).norm() / reference.norm());
    }
    let tol = 1e-6;
    let el = start.elapsed();
    let ok = pointwise <= tol && identity <= tol;
    let budget = Duration::from_secs(10);
    let line1 = verdict(3, "pointwise relative profile error", pointwise, tol, ok, el, budget);
    println!("ACCEPTANCE 3 (detail) gap-flux identity relative error {identity:.3e}");
    line1
}

fn criterion_4_newtonian_flat_benchmark() -> bool {
    let start = Instant::now();
    let flat = RoughnessProfile::constant(1.0).unwrap();
    let u = evaluate_u(&plateau(), &flat, Vec2::new(1.0, 0.0), &CellNumerics::default()).unwrap();
    let reference = Vec2::new(-1.0 / 12.0, 0.0);
    let rel = (u - reference).norm() / reference.norm();
    let el = start.elapsed();
    verdict(4, "relative error of U((1,0)) against (-1/12, 0)", rel, 1e-6, rel <= 1e-6, el, Duration::from_secs(5))
}

fn criterion_5_layered_newtonian_cell() -> bool {
    let start = Instant::now();
    // Two levels {1, 2} with smooth transitions.
    let profile = RoughnessProfile::layered_smooth(1.0, 1.0, 0.1).unwrap();
    let (across, along) = layered_means_oracle(&profile, &plateau()).unwrap();
    let num = CellNumerics { n: 128, ..CellNumerics::default() };
    let ux = evaluate_u(&plateau(), &profile, Vec2::new(1.0, 0.0), &num).unwrap();
    let uy = evaluate_u(&plateau(), &profile, Vec2::new(0.0, 1.0), &num).unwrap();
    let e_across = ((-0.5 * ux.x) - across).abs() / across;
    let e_along = ((-0.5 * uy.y) - along).abs() / along;
    let worst = e_across.max(e_along);
    let el = start.elapsed();
    println!("ACCEPTANCE 5 (detail) across {:.6e} vs {across:.6e}, along {:.6e} vs {along:.6e}", -0.5 * ux.x, -0.5 * uy.y);
    verdict(5, "relative error of layered mean mobilities at N=128", worst, 1e-4, worst <= 1e-4, el, Duration::from_secs(60))
}

fn criterion_6_flux_map_structure() -> bool {
    let start = Instant::now();
    let params = thin();
    let profile = RoughnessProfile::cosine2d(1.0, 0.25, 0.15).unwrap();
    let num = CellNumerics { n: 32, ..CellNumerics::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pairs: Vec<(Vec2, Vec2)> = (0..100)
        .map(|_| {
            let mut d = || Vec2::from_polar(10f64.powf(rng.gen_range(-2.0..1.0)), rng.gen_range(0.0..std::f64::consts::TAU));
            (d(), d())
        })
        .collect();
    let results: Vec<(Vec2, Vec2, Vec2)> = pairs
        .par_iter()
        .map(|(a, b)| {
            let ua = evaluate_u(&params, &profile, *a, &num).unwrap();
            let ub = evaluate_u(&params, &profile, *b, &num).unwrap();
            let ua_neg = evaluate_u(&params, &profile, -*a, &num).unwrap();
            (ua, ub, ua_neg)
        })
        .collect();
    let zero_ok = evaluate_u(&params, &profile, Vec2::ZERO, &num).unwrap() == Vec2::ZERO;
    let mut odd_ok = true;
    let mut dissipative_ok = true;
    let mut worst_monotone = f64::INFINITY;
    for ((a, b), (ua, ub, ua_neg)) in pairs.iter().zip(&results) {
        odd_ok &= *ua_neg == -*ua;
        dissipative_ok &= -ua.dot(*a) > 0.0 && -ub.dot(*b) > 0.0;
        // M = -U is monotone: (M(a) - M(b)) . (a - b) >= 0.
        worst_monotone = worst_monotone.min((*ub - *ua).dot(*a - *b));
    }
    let el = start.elapsed();
    let ok = zero_ok && odd_ok && dissipative_ok && worst_monotone >= -1e-8;
    println!("ACCEPTANCE 6 (detail) U(0)=0: {zero_ok}, exact oddness: {odd_ok}, dissipative: {dissipative_ok}");
    verdict(6, "min monotonicity product over 100 pairs", worst_monotone, -1e-8, ok, el, Duration::from_secs(600))
}

fn criterion_7_gradient_force_absorption() -> bool {
    let start = Instant::now();
    let params = thin();
    let profile = RoughnessProfile::cosine2d(1.0, 0.25, 0.15).unwrap();
    let cell = CellNumerics { n: 16, ..CellNumerics::default() };
    // phi = x1 on the unit square.
    let domain = MacroDomain::new(1.0, 1.0, 64, 64, Force::Uniform { f1: 1.0, f2: 0.0 }).unwrap();
    let exact = ExactFlux { params, profile: profile.clone(), numerics: cell };
    let rho = estimate_rho_max(&domain, rugose::flux::plateau_mobility(&exact).unwrap()).unwrap();
    let table = build_flux_table(&params, &profile, TableGrid::with_rho_max(rho), &cell, 1).unwrap();
    let sol = solve_macro(&domain, &table, &MacroNumerics::default()).unwrap();
    let v_max = sol.vx.iter().chain(&sol.vy).map(|v| v.abs()).fold(0.0, f64::max);
    let mut p_err = 0.0f64;
    for j in 0..64 {
        for i in 0..64 {
            let x = domain.cell_center(i, j);
            p_err = p_err.max((sol.p[j * 64 + i] - (x.x - 0.5)).abs());
        }
    }
    let el = start.elapsed();
    let ok = v_max <= 1e-6 && p_err <= 1e-5;
    println!("ACCEPTANCE 7 (detail) max|V| {v_max:.3e} (tolerance 1e-6)");
    verdict(7, "max |p - (phi - mean phi)|", p_err, 1e-5, ok, el, Duration::from_secs(120))
}

fn criterion_8_newtonian_macro_cross_check() -> bool {
    let start = Instant::now();
    let cell = CellNumerics { n: 32, ..CellNumerics::default() };
    let grid = TableGrid::with_rho_max(0.0);
    let report = newtonian_macro_cross_check(64, &cell, grid, rayon::current_num_threads()).unwrap();
    let el = start.elapsed();
    verdict(8, "relative L2 pressure difference vs Reynolds oracle", report.rel_error, 1e-4, report.pass, el, Duration::from_secs(300))
}

fn criterion_9_table_fill_is_deterministic() -> bool {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_rugose");
    let run = |jobs: &str, name: &str| {
        let path = dir.path().join(name);
        let status = std::process::Command::new(exe)
            .args(["flux-table", "--jobs", jobs, "--output"])
            .arg(&path)
            .args(["--set", "numerics.cell_n=16", "--set", "numerics.table_m=8", "--set", "numerics.table_n=6"])
            .current_dir(dir.path())
            .stderr(std::process::Stdio::null())
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(path).unwrap()
    };
    let one = run("1", "one.json");
    let eight = run("8", "eight.json");
    let identical = one == eight;
    let el = start.elapsed();
    verdict(9, "byte-identical tables for --jobs 1 and 8 (mismatch flag)", f64::from(u8::from(!identical)), 0.0, identical, el, Duration::from_secs(600))
}

fn main() {
    let criteria: [(u32, fn() -> bool); 9] = [
        (1, criterion_1_constitutive_round_trip),
        (2, criterion_2_psi_plateau_and_ordering),
        (3, criterion_3_profile_matches_ode_oracle),
        (4, criterion_4_newtonian_flat_benchmark),
        (5, criterion_5_layered_newtonian_cell),
        (6, criterion_6_flux_map_structure),
        (7, criterion_7_gradient_force_absorption),
        (8, criterion_8_newtonian_macro_cross_check),
        (9, criterion_9_table_fill_is_deterministic),
    ];
    let mut failed = Vec::new();
    for (id, run) in criteria {
        match std::panic::catch_unwind(run) {
            Ok(true) => {}
            Ok(false) => failed.push(id),
            Err(_) => {
                println!("ACCEPTANCE {id} FAIL (panicked)");
                failed.push(id);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 9 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
