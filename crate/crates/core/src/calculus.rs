//! Discrete vector calculus against a coefficient frame.
//!
//! The gradient is the raised chained-stencil derivative. The divergence is
//! *defined* as the negative adjoint of the lowered gradient in the
//! Jacobian-weighted inner product, plus a boundary lift, so the discrete
//! divergence theorem
//!
//! `<grad q, W> + <q, div W> = boundary flux of q W`
//!
//! holds to rounding for every pair of fields. The weighted Laplacian
//! `div(c grad psi)` is then symmetric and negative semi-definite on fields
//! vanishing at the boundary ring, by construction rather than by accident.

use crate::background::Frame;
use crate::grid::{boundary_sobolev_norm, ScalarField, VectorField};

/// Lowered gradient: plain Cartesian reference derivatives `(d1 q, d2 q)`.
pub fn grad_lowered(q: &ScalarField) -> (Vec<f64>, Vec<f64>) {
    let g = &q.grid;
    let mut a = vec![0.0; g.n()];
    let mut b = vec![0.0; g.n()];
    g.d1.apply(&q.a, &mut a);
    g.d2.apply(&q.a, &mut b);
    (a, b)
}

/// Raised gradient `g^{ab} d_b q`.
pub fn gradient(frame: &Frame, q: &ScalarField) -> VectorField {
    let (d1, d2) = grad_lowered(q);
    let mut out = q.grid.vector();
    for k in 0..q.grid.n() {
        out.x[k] = frame.gi11[k] * d1[k] + frame.gi12[k] * d2[k];
        out.y[k] = frame.gi12[k] * d1[k] + frame.gi22[k] * d2[k];
    }
    out
}

/// Divergence as the exact negative adjoint of the lowered gradient in the
/// `kappa`-weighted inner product, with the boundary flux lift.
pub fn divergence(frame: &Frame, w: &VectorField) -> ScalarField {
    let g = &w.grid;
    let n = g.n();
    let mut mx = vec![0.0; n];
    let mut my = vec![0.0; n];
    for k in 0..n {
        let m = frame.kappa[k] * g.w[k];
        mx[k] = m * w.x[k];
        my[k] = m * w.y[k];
    }
    let mut acc = vec![0.0; n];
    g.d1.apply_transpose_add(&mx, -1.0, &mut acc);
    g.d2.apply_transpose_add(&my, -1.0, &mut acc);
    // Boundary lift: flux through the ring in reference coordinates is
    // `kappa (nu . W) dtheta` per node.
    for j in 0..g.nt {
        let b = g.bidx(j);
        let nu_w = g.cos_t[j] * w.x[b] + g.sin_t[j] * w.y[b];
        acc[b] += frame.kappa[b] * nu_w * g.dtheta;
    }
    let mut out = g.scalar();
    for k in 0..n {
        out.a[k] = acc[k] / (frame.kappa[k] * g.w[k]);
    }
    out
}

/// Divergence in direct conservative-chain form,
/// `kappa^{-1} (d_a (kappa W^a))`, consistent (second order, exact on affine
/// fields) at every node including the stencil closures. The adjoint form
/// above is what enters duality identities and weak right-hand sides; its
/// closure rows next to the boundary ring are not pointwise consistent, so
/// pointwise evaluation and norms use this form instead.
pub fn divergence_direct(frame: &Frame, w: &VectorField) -> ScalarField {
    let g = &w.grid;
    let n = g.n();
    let mut kx = vec![0.0; n];
    let mut ky = vec![0.0; n];
    for k in 0..n {
        kx[k] = frame.kappa[k] * w.x[k];
        ky[k] = frame.kappa[k] * w.y[k];
    }
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    g.d1.apply(&kx, &mut d1);
    g.d2.apply(&ky, &mut d2);
    let mut out = g.scalar();
    for k in 0..n {
        out.a[k] = (d1[k] + d2[k]) / frame.kappa[k];
    }
    out
}

/// Weighted Laplacian `div(c grad psi)`.
pub fn laplace_c(frame: &Frame, c: &[f64], psi: &ScalarField) -> ScalarField {
    let mut gr = gradient(frame, psi);
    for k in 0..psi.grid.n() {
        gr.x[k] *= c[k];
        gr.y[k] *= c[k];
    }
    divergence(frame, &gr)
}

pub fn integral(frame: &Frame, q: &ScalarField) -> f64 {
    let g = &q.grid;
    (0..g.n()).map(|k| q.a[k] * frame.kappa[k] * g.w[k]).sum()
}

pub fn inner_scalar(frame: &Frame, a: &ScalarField, b: &ScalarField) -> f64 {
    let g = &a.grid;
    (0..g.n())
        .map(|k| a.a[k] * b.a[k] * frame.kappa[k] * g.w[k])
        .sum()
}

/// Metric inner product of vector fields, `integral of g_ab U^a W^b kappa`.
pub fn inner_vector(frame: &Frame, u: &VectorField, w: &VectorField) -> f64 {
    let g = &u.grid;
    (0..g.n())
        .map(|k| {
            let guw = frame.g11[k] * u.x[k] * w.x[k]
                + frame.g12[k] * (u.x[k] * w.y[k] + u.y[k] * w.x[k])
                + frame.g22[k] * u.y[k] * w.y[k];
            guw * frame.kappa[k] * g.w[k]
        })
        .sum()
}

pub fn norm_vector(frame: &Frame, w: &VectorField) -> f64 {
    inner_vector(frame, w, w).max(0.0).sqrt()
}

pub fn norm_scalar(frame: &Frame, q: &ScalarField) -> f64 {
    inner_scalar(frame, q, q).max(0.0).sqrt()
}

/// Metric-unit-normal component of `W` on the boundary ring, per angle.
pub fn normal_trace(frame: &Frame, w: &VectorField) -> Vec<f64> {
    let g = &w.grid;
    (0..g.nt)
        .map(|j| {
            let b = g.bidx(j);
            let (nu1, nu2) = (g.cos_t[j], g.sin_t[j]);
            // g^{nu nu} = nu . g^{-1} nu.
            let ginn = frame.gi11[b] * nu1 * nu1
                + 2.0 * frame.gi12[b] * nu1 * nu2
                + frame.gi22[b] * nu2 * nu2;
            (nu1 * w.x[b] + nu2 * w.y[b]) / ginn.sqrt()
        })
        .collect()
}

/// Induced arclength weight of each boundary node.
pub fn boundary_ds(frame: &Frame) -> Vec<f64> {
    let g = &frame.grid;
    (0..g.nt)
        .map(|j| {
            let b = g.bidx(j);
            let (t1, t2) = (-g.sin_t[j], g.cos_t[j]);
            let gtt = frame.g11[b] * t1 * t1
                + 2.0 * frame.g12[b] * t1 * t2
                + frame.g22[b] * t2 * t2;
            gtt.sqrt() * g.dtheta
        })
        .collect()
}

/// Boundary flux `integral of q W_N dS`, in the exact form entering the
/// discrete divergence theorem.
pub fn boundary_flux(frame: &Frame, q: &ScalarField, w: &VectorField) -> f64 {
    let g = &q.grid;
    (0..g.nt)
        .map(|j| {
            let b = g.bidx(j);
            let nu_w = g.cos_t[j] * w.x[b] + g.sin_t[j] * w.y[b];
            q.a[b] * frame.kappa[b] * nu_w * g.dtheta
        })
        .sum()
}

/// Boundary integral of a scalar density against the induced arclength.
pub fn boundary_integral(frame: &Frame, vals: &[f64]) -> f64 {
    boundary_ds(frame)
        .iter()
        .zip(vals)
        .map(|(ds, v)| ds * v)
        .sum()
}

/// Sobolev norm of the normal trace via angular Fourier multipliers.
pub fn boundary_norm(frame: &Frame, w: &VectorField, order: f64) -> f64 {
    boundary_sobolev_norm(&normal_trace(frame, w), order)
}

/// Discrete `H^r` norm of a scalar (quadrature plus stencil derivatives),
/// supported for r <= 2.
pub fn sobolev_scalar(frame: &Frame, q: &ScalarField, r: usize) -> f64 {
    assert!(r <= 2, "spatial norms are implemented for order <= 2");
    let g = &q.grid;
    let mut total = inner_scalar(frame, q, q);
    if r >= 1 {
        let (d1, d2) = grad_lowered(q);
        let mut f1 = g.scalar();
        f1.a = d1;
        let mut f2 = g.scalar();
        f2.a = d2;
        total += inner_scalar(frame, &f1, &f1) + inner_scalar(frame, &f2, &f2);
        if r == 2 {
            for d in [&f1, &f2] {
                let (e1, e2) = grad_lowered(d);
                let mut h1 = g.scalar();
                h1.a = e1;
                let mut h2 = g.scalar();
                h2.a = e2;
                total += inner_scalar(frame, &h1, &h1) + inner_scalar(frame, &h2, &h2);
            }
        }
    }
    total.max(0.0).sqrt()
}

/// Discrete `H^r` norm of a vector field, componentwise on the Cartesian
/// reference components.
pub fn sobolev_vector(frame: &Frame, w: &VectorField, r: usize) -> f64 {
    let g = &w.grid;
    let mut fx = g.scalar();
    fx.a = w.x.clone();
    let mut fy = g.scalar();
    fy.a = w.y.clone();
    let nx = sobolev_scalar(frame, &fx, r);
    let ny = sobolev_scalar(frame, &fy, r);
    (nx * nx + ny * ny).sqrt()
}

/// Space-time norm `sum over s + k <= r of ||dhat_t^k W||_{H^s}`, with the
/// material-derivative layers supplied by the caller (layers[k] is the k-th
/// convected time derivative of the field).
pub fn spacetime_norm_vector(frame: &Frame, layers: &[&VectorField], r: usize) -> f64 {
    let mut total = 0.0;
    for (k, w) in layers.iter().enumerate() {
        if k > r {
            break;
        }
        total += sobolev_vector(frame, w, r - k);
    }
    total
}

pub fn spacetime_norm_scalar(frame: &Frame, layers: &[&ScalarField], r: usize) -> f64 {
    let mut total = 0.0;
    for (k, q) in layers.iter().enumerate() {
        if k > r {
            break;
        }
        total += sobolev_scalar(frame, q, r - k);
    }
    total
}
