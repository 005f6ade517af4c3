//! Dirichlet solves and pressure projections.
//!
//! The solver assembles the symmetric quadratic form
//! `sum_k m_k c_k g^{ab} (d_a phi)(d_b psi)` (with `m = kappa w` the volume
//! quadrature) over the interior nodes and factors it once with a banded
//! Cholesky decomposition. Because the boundary ring is stored last, the
//! interior unknowns are simply the first `(nr-1)*nt` nodes and no index
//! remapping is needed. The factorization is reused both as a direct solver
//! and as a preconditioner for conjugate-gradient solves with drifted
//! coefficients.

use crate::background::Frame;
use crate::calculus::{divergence, gradient};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::linalg::{pcg, BandCholesky, BandMatrix};
use std::sync::Arc;

/// Direct solver for `div(c grad q) = f`, `q = 0` on the boundary ring.
pub struct DirichletSolver {
    grid: Arc<Grid>,
    factor: BandCholesky,
    n_int: usize,
}

/// Merged stencil entry: column index plus its coefficients in the two
/// first-derivative rows.
fn merged_rows(grid: &Grid, k: usize) -> Vec<(usize, f64, f64)> {
    let mut entries: Vec<(usize, f64, f64)> = Vec::with_capacity(8);
    for (col, v) in grid.d1.row(k) {
        match entries.iter_mut().find(|e| e.0 == col) {
            Some(e) => e.1 += v,
            None => entries.push((col, v, 0.0)),
        }
    }
    for (col, v) in grid.d2.row(k) {
        match entries.iter_mut().find(|e| e.0 == col) {
            Some(e) => e.2 += v,
            None => entries.push((col, 0.0, v)),
        }
    }
    entries
}

impl DirichletSolver {
    /// Assemble and factor the form for coefficient field `c` (one value per
    /// node; pass all ones for the plain Laplacian).
    pub fn new(frame: &Frame, c: &[f64]) -> Result<Self> {
        Self::with_mass(frame, c, None)
    }

    /// Assemble and factor the shifted form `diag(dmass) + S_c` over the
    /// interior nodes (`dmass` is a full-length vector of already-weighted
    /// diagonal entries; boundary entries are ignored). The plain form is
    /// `with_mass(frame, c, None)`. Implicit time steppers use the shift for
    /// their per-step Helmholtz solves.
    pub fn with_mass(frame: &Frame, c: &[f64], dmass: Option<&[f64]>) -> Result<Self> {
        let grid = frame.grid.clone();
        let n = grid.n();
        assert_eq!(c.len(), n);
        let n_int = (grid.nr - 1) * grid.nt;

        // First pass: bandwidth of the assembled form.
        let mut bw = 0usize;
        for k in 0..n {
            let ent = merged_rows(&grid, k);
            for a in &ent {
                for b in &ent {
                    if a.0 < n_int && b.0 < n_int {
                        bw = bw.max(a.0.abs_diff(b.0));
                    }
                }
            }
        }

        let mut s = BandMatrix::zeros(n_int, bw);
        for k in 0..n {
            let m = frame.kappa[k] * grid.w[k] * c[k];
            if m == 0.0 {
                continue;
            }
            let (gi11, gi12, gi22) = (frame.gi11[k], frame.gi12[k], frame.gi22[k]);
            let ent = merged_rows(&grid, k);
            for (ii, &(p, a1, a2)) in ent.iter().enumerate() {
                if p >= n_int {
                    continue;
                }
                for &(q, b1, b2) in &ent[ii..] {
                    if q >= n_int {
                        continue;
                    }
                    let v = m
                        * (gi11 * a1 * b1
                            + gi12 * (a1 * b2 + a2 * b1)
                            + gi22 * a2 * b2);
                    s.add(p, q, v);
                }
            }
        }
        if let Some(d) = dmass {
            for k in 0..n_int {
                s.add(k, k, d[k]);
            }
        }
        let factor = s.cholesky().map_err(|_| Error::SolveFailure {
            what: "dirichlet form factorization".into(),
            residual: f64::NAN,
            iters: 0,
            tol: 0.0,
        })?;
        Ok(Self { grid, factor, n_int })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Solve `S q = rhs` where `rhs` is a full-length node vector whose
    /// boundary entries are ignored; the result has zero boundary trace.
    pub fn solve_weighted(&self, rhs: &[f64]) -> ScalarField {
        let mut packed: Vec<f64> = rhs[..self.n_int].to_vec();
        self.factor.solve_in_place(&mut packed);
        let mut out = self.grid.scalar();
        out.a[..self.n_int].copy_from_slice(&packed);
        out
    }

    /// Solve `div(c grad q) = f`, `q = 0` on the boundary.
    pub fn solve(&self, frame: &Frame, f: &ScalarField) -> ScalarField {
        let mut rhs = vec![0.0; self.grid.n()];
        for k in 0..self.n_int {
            rhs[k] = -frame.kappa[k] * self.grid.w[k] * f.a[k];
        }
        self.solve_weighted(&rhs)
    }

    /// Quadratic form value `- <q, div(c grad q)>` for a field with zero
    /// boundary trace (Dirichlet energy).
    pub fn form(&self, frame: &Frame, c: &[f64], q: &ScalarField) -> f64 {
        let gr = crate::calculus::grad_lowered(q);
        let mut total = 0.0;
        for k in 0..self.grid.n() {
            let m = frame.kappa[k] * self.grid.w[k] * c[k];
            let (a, b) = (gr.0[k], gr.1[k]);
            total += m
                * (frame.gi11[k] * a * a
                    + 2.0 * frame.gi12[k] * a * b
                    + frame.gi22[k] * b * b);
        }
        total
    }

    /// Preconditioner view of the factorization: applies the inverse of the
    /// assembled form to the interior block of a full-length vector, leaving
    /// the boundary entries zero.
    pub fn precondition_into(&self, r: &[f64], z: &mut [f64]) {
        z.fill(0.0);
        let mut packed: Vec<f64> = r[..self.n_int].to_vec();
        self.factor.solve_in_place(&mut packed);
        z[..self.n_int].copy_from_slice(&packed);
    }

    pub fn interior_len(&self) -> usize {
        self.n_int
    }
}

/// Result of the pressure projection `U = W0 + grad q`.
pub struct Projection {
    /// Weakly divergence-free part.
    pub w0: ScalarFieldlessVector,
    /// Gradient part `grad q`.
    pub w1: ScalarFieldlessVector,
    /// Pressure potential, zero on the boundary.
    pub q: ScalarField,
}

// The projection parts are plain vector fields; the alias keeps the struct
// definition readable at the use sites.
pub type ScalarFieldlessVector = VectorField;

/// Orthogonal projection onto (weakly) divergence-free fields by the
/// solve-and-subtract construction: `q` solves the Dirichlet problem
/// `laplace q = div U`, and `W0 = U - grad q`.
pub fn project(frame: &Frame, solver: &DirichletSolver, u: &VectorField) -> Projection {
    let g = &frame.grid;
    let dv = divergence(frame, u);
    let mut rhs = vec![0.0; g.n()];
    for k in 0..g.n() {
        rhs[k] = -frame.kappa[k] * g.w[k] * dv.a[k];
    }
    let q = solver.solve_weighted(&rhs);
    let w1 = gradient(frame, &q);
    let mut w0 = g.vector();
    for k in 0..g.n() {
        w0.x[k] = u.x[k] - w1.x[k];
        w0.y[k] = u.y[k] - w1.y[k];
    }
    Projection { w0, w1, q }
}

/// Adjoint of the divergence constraint map: given a multiplier per node,
/// produce the vector field `D^T mu` such that `mu . (div W) m`-pairings
/// match `(D^T mu) . W` in the plain Euclidean pairing on components.
fn div_constraint_transpose(frame: &Frame, mu: &[f64]) -> VectorField {
    let g = &frame.grid;
    let n = g.n();
    let s: Vec<f64> = (0..n)
        .map(|k| mu[k] / (frame.kappa[k] * g.w[k]))
        .collect();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    g.d1.apply(&s, &mut d1);
    g.d2.apply(&s, &mut d2);
    let mut out = g.vector();
    for k in 0..n {
        let m = frame.kappa[k] * g.w[k];
        out.x[k] = -m * d1[k];
        out.y[k] = -m * d2[k];
    }
    for j in 0..g.nt {
        let b = g.bidx(j);
        let lift = frame.kappa[b] * g.dtheta * s[b];
        out.x[b] += g.cos_t[j] * lift;
        out.y[b] += g.sin_t[j] * lift;
    }
    out
}

/// Inverse of the metric mass matrix (blockwise 2x2).
fn mass_inverse(frame: &Frame, v: &VectorField) -> VectorField {
    let g = &frame.grid;
    let mut out = g.vector();
    for k in 0..g.n() {
        let m = frame.kappa[k] * g.w[k];
        out.x[k] = (frame.gi11[k] * v.x[k] + frame.gi12[k] * v.y[k]) / m;
        out.y[k] = (frame.gi12[k] * v.x[k] + frame.gi22[k] * v.y[k]) / m;
    }
    out
}

/// Strong divergence-free projection: least-squares removal of *every* row of
/// the adjoint divergence (including the boundary closures), i.e. the metric
/// orthogonal projection onto `{W : div W = 0 at all nodes}`. The standard
/// solve-and-subtract projection annihilates only the interior rows; this
/// variant is what exact boundary-flux symmetry arguments need.
pub fn project_strong(
    frame: &Frame,
    precond: Option<&DirichletSolver>,
    u: &VectorField,
    tol: f64,
    max_iter: usize,
) -> Result<VectorField> {
    let g = &frame.grid;
    let n = g.n();
    let rhs = divergence(frame, u).a;
    let mut lambda = vec![0.0; n];
    let mut apply = |mu: &[f64], out: &mut [f64]| {
        let v = div_constraint_transpose(frame, mu);
        let w = mass_inverse(frame, &v);
        let dv = divergence(frame, &w);
        out.copy_from_slice(&dv.a);
    };
    let pc = precond.map(|s| {
        move |r: &[f64], z: &mut [f64]| {
            s.precondition_into(r, z);
            // The Dirichlet factor covers only the interior rows; close the
            // boundary rows with a quadrature scaling so the preconditioner
            // stays symmetric positive definite.
            for j in 0..g.nt {
                let b = g.bidx(j);
                z[b] = r[b] * frame.kappa[b] * g.w[b];
            }
        }
    });
    match &pc {
        Some(p) => pcg(&mut apply, Some(p), &rhs, &mut lambda, tol, max_iter, "strong projection"),
        None => pcg(&mut apply, None, &rhs, &mut lambda, tol, max_iter, "strong projection"),
    }?;
    let corr = mass_inverse(frame, &div_constraint_transpose(frame, &lambda));
    let mut w0 = g.vector();
    for k in 0..n {
        w0.x[k] = u.x[k] - corr.x[k];
        w0.y[k] = u.y[k] - corr.y[k];
    }
    Ok(w0)
}

/// Smallest eigenvalue of `-laplace` with Dirichlet boundary values, by
/// inverse power iteration in the quadrature inner product.
pub fn lowest_dirichlet_eigenvalue(
    frame: &Frame,
    solver: &DirichletSolver,
    iters: usize,
) -> f64 {
    let g = &frame.grid;
    let n = g.n();
    let mut q = g.scalar_from(|x, y| (1.0 - x * x - y * y).max(0.0));
    let mut lambda = 0.0;
    for _ in 0..iters {
        let mut rhs = vec![0.0; n];
        for k in 0..n {
            rhs[k] = frame.kappa[k] * g.w[k] * q.a[k];
        }
        let y = solver.solve_weighted(&rhs);
        let qq: f64 = (0..n)
            .map(|k| q.a[k] * q.a[k] * frame.kappa[k] * g.w[k])
            .sum();
        let qy: f64 = (0..n)
            .map(|k| q.a[k] * y.a[k] * frame.kappa[k] * g.w[k])
            .sum();
        lambda = qq / qy;
        let ny: f64 = (0..n)
            .map(|k| y.a[k] * y.a[k] * frame.kappa[k] * g.w[k])
            .sum::<f64>()
            .sqrt();
        for k in 0..n {
            q.a[k] = y.a[k] / ny;
        }
    }
    lambda
}

/// Discrete dual (H^-1-type) norm: `sqrt(<f, laplace^{-1}_c f>)` with the
/// plain Laplacian, measuring a source through the Dirichlet solve.
pub fn dual_norm(frame: &Frame, solver: &DirichletSolver, f: &ScalarField) -> f64 {
    let g = &frame.grid;
    let q = solver.solve(frame, f);
    let val: f64 = (0..g.n())
        .map(|k| f.a[k] * q.a[k] * frame.kappa[k] * g.w[k])
        .sum();
    (-val).max(0.0).sqrt()
}
