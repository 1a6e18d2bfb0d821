//! Five-point face-coefficient operators on uniform grids and a
//! Jacobi-preconditioned conjugate-gradient solver for them.
//!
//! The operator is `(A x)_c = sum over faces f of c: k_f (x_c - x_nb) / d_f^2`,
//! the negative of a conservative divergence-form Laplacian. It is symmetric
//! positive semi-definite; with periodic or no-flux boundaries its null space
//! is the constants, which are projected out of right-hand sides and iterates.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Faces wrap around: `nx` x-faces per row, face `i` between cells `i` and `i+1 mod nx`.
    Periodic,
    /// Only interior faces carry flux: `nx - 1` x-faces per row, face `i` between `i` and `i+1`.
    NoFlux,
}

/// Row-major cell index, x fastest.
#[inline]
pub fn idx(i: usize, j: usize, nx: usize) -> usize {
    j * nx + i
}

#[derive(Debug, Clone)]
pub struct FaceOperator {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub boundary: Boundary,
    /// Coefficients on x-normal faces, `fx_count() * ny` entries, row-major.
    pub kx: Vec<f64>,
    /// Coefficients on y-normal faces, `nx * fy_count()` entries, row-major.
    pub ky: Vec<f64>,
}

impl FaceOperator {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, boundary: Boundary) -> Self {
        let (fx, fy) = face_counts(nx, ny, boundary);
        Self {
            nx,
            ny,
            dx,
            dy,
            boundary,
            kx: vec![0.0; fx * ny],
            ky: vec![0.0; nx * fy],
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fx_count(&self) -> usize {
        face_counts(self.nx, self.ny, self.boundary).0
    }

    pub fn fy_count(&self) -> usize {
        face_counts(self.nx, self.ny, self.boundary).1
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let (fxc, fyc) = (self.fx_count(), self.fy_count());
        let (ax, ay) = (1.0 / (self.dx * self.dx), 1.0 / (self.dy * self.dy));
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..ny {
            for f in 0..fxc {
                let l = idx(f, j, nx);
                let r = idx((f + 1) % nx, j, nx);
                let flux = self.kx[j * fxc + f] * ax * (x[l] - x[r]);
                y[l] += flux;
                y[r] -= flux;
            }
        }
        for f in 0..fyc {
            for i in 0..nx {
                let b = idx(i, f, nx);
                let t = idx(i, (f + 1) % ny, nx);
                let flux = self.ky[f * nx + i] * ay * (x[b] - x[t]);
                y[b] += flux;
                y[t] -= flux;
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let (fxc, fyc) = (self.fx_count(), self.fy_count());
        let (ax, ay) = (1.0 / (self.dx * self.dx), 1.0 / (self.dy * self.dy));
        let mut d = vec![0.0; nx * ny];
        for j in 0..ny {
            for f in 0..fxc {
                let k = self.kx[j * fxc + f] * ax;
                d[idx(f, j, nx)] += k;
                d[idx((f + 1) % nx, j, nx)] += k;
            }
        }
        for f in 0..fyc {
            for i in 0..nx {
                let k = self.ky[f * nx + i] * ay;
                d[idx(i, f, nx)] += k;
                d[idx(i, (f + 1) % ny, nx)] += k;
            }
        }
        d
    }
}

pub fn face_counts(nx: usize, ny: usize, boundary: Boundary) -> (usize, usize) {
    match boundary {
        Boundary::Periodic => (nx, ny),
        Boundary::NoFlux => (nx.saturating_sub(1), ny.saturating_sub(1)),
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn remove_mean(v: &mut [f64]) {
    let m = mean(v);
    v.iter_mut().for_each(|x| *x -= m);
}

/// Root-mean-square norm.
pub fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual_rms: f64,
    pub converged: bool,
}

/// Solves `A x = b` for the singular operator above. `b` is projected onto
/// zero mean first; the returned `x` has zero mean. Stops once the RMS of
/// the residual is at most `abs_tol`.
pub fn pcg(op: &FaceOperator, b: &[f64], x: &mut [f64], abs_tol: f64, max_iter: usize) -> CgOutcome {
    let n = op.len();
    let mut rhs = b.to_vec();
    remove_mean(&mut rhs);
    let inv_diag: Vec<f64> = op
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut ax = vec![0.0; n];
    op.apply(x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    remove_mean(&mut r);
    let mut res = rms(&r);
    if res <= abs_tol {
        remove_mean(x);
        return CgOutcome { iterations: 0, residual_rms: res, converged: true };
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        res = rms(&r);
        if res <= abs_tol {
            remove_mean(x);
            return CgOutcome { iterations: it, residual_rms: res, converged: true };
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    remove_mean(x);
    CgOutcome { iterations: max_iter, residual_rms: res, converged: false }
}
