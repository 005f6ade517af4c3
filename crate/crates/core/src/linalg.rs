//! Small dense-band Cholesky factorization and conjugate gradients.
//!
//! The elliptic and implicit time-stepping matrices on the polar grid are
//! symmetric positive definite with semi-bandwidth about `2 nt`, which makes
//! a banded Cholesky factorization cheap enough to build once per coefficient
//! set and reuse for every solve (and as a preconditioner when coefficients
//! drift slowly in time).

use crate::error::{Error, Result};

/// Symmetric positive-definite banded matrix in lower-band storage:
/// entry `(i, j)` with `0 <= i - j <= bw` lives at `band[j * (bw + 1) + (i - j)]`.
pub struct BandMatrix {
    pub n: usize,
    pub bw: usize,
    pub band: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            band: vec![0.0; n * (bw + 1)],
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(hi - lo <= self.bw);
        self.band[lo * (self.bw + 1) + (hi - lo)] += v;
    }

    /// In-place Cholesky factorization; the band is overwritten with L.
    pub fn cholesky(mut self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let stride = bw + 1;
        for j in 0..n {
            let k0 = j.saturating_sub(bw);
            let mut d = self.band[j * stride];
            for k in k0..j {
                let l = self.band[k * stride + (j - k)];
                d -= l * l;
            }
            if d <= 0.0 {
                return Err(Error::SolveFailure {
                    what: "banded Cholesky: matrix not positive definite",
                    residual: d,
                    iters: j,
                    tol: 0.0,
                });
            }
            let dj = d.sqrt();
            self.band[j * stride] = dj;
            let imax = (j + bw).min(n - 1);
            for i in j + 1..=imax {
                let mut s = self.band[j * stride + (i - j)];
                let k0 = i.saturating_sub(bw).max(k0);
                for k in k0..j {
                    s -= self.band[k * stride + (i - k)] * self.band[k * stride + (j - k)];
                }
                self.band[j * stride + (i - j)] = s / dj;
            }
        }
        Ok(BandCholesky {
            n,
            bw,
            l: self.band,
        })
    }
}

pub struct BandCholesky {
    pub n: usize,
    pub bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let stride = bw + 1;
        // Forward: L y = b.
        for j in 0..n {
            let yj = b[j] / self.l[j * stride];
            b[j] = yj;
            if yj != 0.0 {
                let imax = (j + bw).min(n - 1);
                for i in j + 1..=imax {
                    b[i] -= self.l[j * stride + (i - j)] * yj;
                }
            }
        }
        // Backward: L^T x = y.
        for j in (0..n).rev() {
            let mut s = b[j];
            let imax = (j + bw).min(n - 1);
            for i in j + 1..=imax {
                s -= self.l[j * stride + (i - j)] * b[i];
            }
            b[j] = s / self.l[j * stride];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

pub struct CgOutcome {
    pub iters: usize,
    pub residual: f64,
}

/// Preconditioned conjugate gradients for a symmetric positive semi-definite
/// operator given as a closure. Convergence is relative to `||b||` in the
/// Euclidean norm. `precond` applies an SPD approximation of the inverse.
pub fn pcg(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    precond: Option<&dyn Fn(&[f64], &mut [f64])>,
    b: &[f64],
    x: &mut [f64],
    tol_rel: f64,
    max_iter: usize,
    what: &'static str,
) -> Result<CgOutcome> {
    let n = b.len();
    let nrm_b = dot(b, b).sqrt();
    if nrm_b == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iters: 0,
            residual: 0.0,
        });
    }
    let tol = tol_rel * nrm_b;

    let mut r = vec![0.0; n];
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    for k in 0..n {
        r[k] = b[k] - ax[k];
    }
    let mut z = vec![0.0; n];
    let apply_pre = |r: &[f64], z: &mut [f64]| {
        if let Some(p) = precond {
            p(r, z);
        } else {
            z.copy_from_slice(r);
        }
    };
    apply_pre(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt();
    for it in 0..max_iter {
        if res <= tol {
            return Ok(CgOutcome {
                iters: it,
                residual: res,
            });
        }
        apply(&p, &mut ax);
        let pap = dot(&p, &ax);
        if pap <= 0.0 {
            // Semi-definite direction: nothing further to gain along it.
            return Ok(CgOutcome {
                iters: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ax[k];
        }
        res = dot(&r, &r).sqrt();
        apply_pre(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    if res <= tol {
        Ok(CgOutcome {
            iters: max_iter,
            residual: res,
        })
    } else {
        Err(Error::SolveFailure {
            what,
            residual: res / nrm_b,
            iters: max_iter,
            tol: tol_rel,
        })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_cholesky_solves_tridiagonal_system() {
        // 1D Dirichlet Laplacian, solution known in closed form.
        let n = 50;
        let mut a = BandMatrix::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i + 1 < n {
                a.add(i + 1, i, -1.0);
            }
        }
        let f = BandMatrix::cholesky(a).unwrap();
        let b = vec![1.0; n];
        let x = f.solve(&b);
        // Residual check.
        for i in 0..n {
            let mut ax = 2.0 * x[i];
            if i > 0 {
                ax -= x[i - 1];
            }
            if i + 1 < n {
                ax -= x[i + 1];
            }
            assert!((ax - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn band_cholesky_rejects_indefinite_matrix() {
        let mut a = BandMatrix::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, -1.0);
        a.add(2, 2, 1.0);
        assert!(BandMatrix::cholesky(a).is_err());
    }

    #[test]
    fn cg_matches_direct_solve() {
        let n = 40;
        let mut a = BandMatrix::zeros(n, 2);
        for i in 0..n {
            a.add(i, i, 4.0 + (i % 3) as f64);
            if i + 1 < n {
                a.add(i + 1, i, -1.0);
            }
            if i + 2 < n {
                a.add(i + 2, i, -0.5);
            }
        }
        let dense = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let mut s = (4.0 + (i % 3) as f64) * x[i];
                if i > 0 {
                    s -= x[i - 1];
                }
                if i + 1 < n {
                    s -= x[i + 1];
                }
                if i >= 2 {
                    s -= 0.5 * x[i - 2];
                }
                if i + 2 < n {
                    s -= 0.5 * x[i + 2];
                }
                out[i] = s;
            }
        };
        let f = BandMatrix::cholesky(a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let xd = f.solve(&b);
        let mut xc = vec![0.0; n];
        let mut op = dense;
        let out = pcg(&mut op, None, &b, &mut xc, 1e-13, 500, "test").unwrap();
        assert!(out.residual <= 1e-11);
        for i in 0..n {
            assert!((xd[i] - xc[i]).abs() < 1e-9);
        }
    }
}
