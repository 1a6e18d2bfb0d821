//! Carreau viscosity law and the inverse stress map `psi`.
//!
//! The scalar law used across the film is
//! `eta(gamma) = (eta0 - eta_inf) (1 + lambda gamma^2 / 2)^(r/2 - 1) + eta_inf`,
//! i.e. the invariant form evaluated at `|D|^2 = gamma^2 / 2`. The stress map
//! `tau(gamma) = eta(gamma) gamma` is strictly increasing; `psi(tau)` is the
//! viscosity at the shear rate carrying stress `tau`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The four Carreau material constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct CarreauParams {
    eta0: f64,
    eta_inf: f64,
    lambda: f64,
    r: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    eta0: f64,
    eta_inf: f64,
    lambda: f64,
    r: f64,
}

impl TryFrom<RawParams> for CarreauParams {
    type Error = Error;
    fn try_from(p: RawParams) -> Result<Self> {
        CarreauParams::new(p.eta0, p.eta_inf, p.lambda, p.r)
    }
}

impl From<CarreauParams> for RawParams {
    fn from(p: CarreauParams) -> Self {
        RawParams { eta0: p.eta0, eta_inf: p.eta_inf, lambda: p.lambda, r: p.r }
    }
}

const ROOT_REL_TOL: f64 = 1e-13;
const ROOT_MAX_ITER: usize = 200;

impl CarreauParams {
    pub fn new(eta0: f64, eta_inf: f64, lambda: f64, r: f64) -> Result<Self> {
        let all_finite = [eta0, eta_inf, lambda, r].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidParameter("Carreau constants must be finite".into()));
        }
        if !(eta_inf > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eta_inf must be positive (eta0 > eta_inf > 0), got {eta_inf}"
            )));
        }
        if !(eta0 > eta_inf) {
            return Err(Error::InvalidParameter(format!(
                "eta0 must exceed eta_inf (eta0 > eta_inf > 0), got eta0 = {eta0}, eta_inf = {eta_inf}"
            )));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        if !(r > 1.0) {
            return Err(Error::InvalidParameter(format!("flow index r must exceed 1, got {r}")));
        }
        if r == 2.0 {
            return Err(Error::InvalidParameter(
                "flow index r = 2 is excluded; use a tiny lambda for Newtonian behaviour".into(),
            ));
        }
        Ok(Self { eta0, eta_inf, lambda, r })
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    pub fn eta_inf(&self) -> f64 {
        self.eta_inf
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn is_shear_thinning(&self) -> bool {
        self.r < 2.0
    }

    /// Viscosity as a function of the squared tensor norm `s = |xi|^2`.
    pub fn viscosity_invariant(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::Domain(format!("squared norm must be finite and >= 0, got {s}")));
        }
        Ok(self.eta_of_s(self.lambda * s))
    }

    /// Viscosity at scalar shear rate `gamma`.
    pub fn shear_viscosity(&self, gamma: f64) -> Result<f64> {
        check_nonneg("shear rate", gamma)?;
        Ok(self.eta(gamma))
    }

    pub fn stress_from_shear(&self, gamma: f64) -> Result<f64> {
        check_nonneg("shear rate", gamma)?;
        Ok(self.stress(gamma))
    }

    /// The unique `gamma >= 0` with `stress(gamma) = tau`.
    pub fn shear_from_stress(&self, tau: f64) -> Result<f64> {
        check_nonneg("stress", tau)?;
        self.invert(tau)
    }

    /// Effective viscosity at stress `tau`; `psi(0) = eta0`.
    pub fn psi(&self, tau: f64) -> Result<f64> {
        check_nonneg("stress", tau)?;
        if tau == 0.0 {
            return Ok(self.eta0);
        }
        Ok(self.eta(self.invert(tau)?))
    }

    /// `eta0 + (eta0 - eta_inf) ((1 + x)^(r/2-1) - 1)` with `x = lambda |xi|^2`;
    /// exact at the plateau and free of cancellation near it.
    #[inline]
    fn eta_of_s(&self, x: f64) -> f64 {
        let m = 0.5 * self.r - 1.0;
        self.eta0 + (self.eta0 - self.eta_inf) * (m * x.ln_1p()).exp_m1()
    }

    #[inline]
    pub(crate) fn eta(&self, gamma: f64) -> f64 {
        self.eta_of_s(0.5 * self.lambda * gamma * gamma)
    }

    #[inline]
    pub(crate) fn stress(&self, gamma: f64) -> f64 {
        self.eta(gamma) * gamma
    }

    /// Returns `(eta(gamma), d tau / d gamma)`.
    #[inline]
    pub(crate) fn eta_and_slope(&self, gamma: f64) -> (f64, f64) {
        let x = 0.5 * self.lambda * gamma * gamma;
        let m = 0.5 * self.r - 1.0;
        let pow_m1 = (m * x.ln_1p()).exp_m1();
        let eta = self.eta0 + (self.eta0 - self.eta_inf) * pow_m1;
        let slope = (self.eta0 - self.eta_inf) * (pow_m1 + 1.0) / (1.0 + x) * (1.0 + (self.r - 1.0) * x)
            + self.eta_inf;
        (eta, slope)
    }

    /// Safeguarded Newton iteration on `ln tau(e^u) = ln tau` inside a bracket
    /// that always contains the root.
    pub(crate) fn invert(&self, tau: f64) -> Result<f64> {
        if tau == 0.0 {
            return Ok(0.0);
        }
        let target = tau.ln();
        // stress(gamma) >= eta_inf * gamma  =>  gamma <= tau / eta_inf.
        let mut hi = (tau / self.eta_inf).ln();
        // For shear thinning stress(gamma) <= eta0 * gamma, so tau / eta0 is a lower bound.
        let mut lo = if self.is_shear_thinning() {
            (tau / self.eta0).ln()
        } else {
            // Shear thickening: eta(gamma) <= eta_inf + (eta0 - eta_inf)(1 + lambda g^2/2)^m
            // is dominated by the power-law branch; back off until the bracket holds.
            let mut l = (tau / self.eta0).ln();
            while self.stress(l.exp()).ln() > target {
                l -= (hi - l).abs().max(1.0);
            }
            l
        };
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }

        let residual = |u: f64| self.stress(u.exp()).ln() - target;
        let mut u = self.seed(tau).ln().clamp(lo, hi);
        for it in 0..ROOT_MAX_ITER {
            let gamma = u.exp();
            let (eta, slope) = self.eta_and_slope(gamma);
            let f = (eta * gamma).ln() - target;
            if f.abs() <= ROOT_REL_TOL {
                return Ok(gamma);
            }
            if f > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            // d ln tau / d ln gamma = gamma tau' / tau, bounded in [min(1, r-1), max(1, r-1)].
            let dlog = slope / eta;
            let mut next = u - f / dlog;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (hi - lo) <= 4.0 * f64::EPSILON * u.abs().max(1.0) {
                let g = next.exp();
                if residual(next).abs() <= 1e-12 {
                    return Ok(g);
                }
                return Err(Error::RootFinding { tau, iterations: it + 1 });
            }
            u = next;
        }
        Err(Error::RootFinding { tau, iterations: ROOT_MAX_ITER })
    }

    /// Starting guess: the better of the plateau, high-shear and power-law asymptotes.
    fn seed(&self, tau: f64) -> f64 {
        let m = 0.5 * self.r - 1.0;
        let power_law = (tau / ((self.eta0 - self.eta_inf) * (0.5 * self.lambda).powf(m)))
            .powf(1.0 / (self.r - 1.0));
        let mut candidates = vec![tau / self.eta0, power_law];
        if self.is_shear_thinning() {
            candidates.push(tau / self.eta_inf);
        }
        candidates
            .into_iter()
            .filter(|g| g.is_finite() && *g > 0.0)
            .min_by(|a, b| {
                let fa = (self.stress(*a).ln() - tau.ln()).abs();
                let fb = (self.stress(*b).ln() - tau.ln()).abs();
                fa.total_cmp(&fb)
            })
            .unwrap_or(tau / self.eta0)
    }
}

fn check_nonneg(what: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("{what} must be finite and >= 0, got {v}")));
    }
    Ok(())
}
