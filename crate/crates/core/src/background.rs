//! Background flows of the reference disk and the coefficient frames they
//! induce.
//!
//! A background is a family of maps `x(t, y)` of the unit disk. The frame
//! assembled from it carries, per node, the map differential `J = dx/dy`,
//! its inverse, the induced metric `g = J^T J`, the Jacobian determinant
//! `kappa = det J`, the logarithmic expansion rates `sigma_dot = D_t kappa /
//! kappa` and `sigma_ddot = D_t sigma_dot`, the convected metric rates
//! `gdot = (D_t - sigma_dot) g` and `gddot` (same convected derivative twice),
//! the vorticity two-form of the velocity, and the thermodynamic fields from
//! the equation of state with `rho = rho0 / kappa` (mass normalized so the
//! density equals the reference density on the boundary ring, where
//! `kappa = 1`).
//!
//! All time derivatives of coefficients are closed-form expressions of the
//! family parameters, never finite differences.

use crate::eos::EquationOfState;
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use std::sync::Arc;

/// Pointwise data of a background family at one node and time.
#[derive(Clone, Copy, Debug)]
pub struct FlowData {
    /// `J[i][a] = d x^i / d y^a`.
    pub j: [[f64; 2]; 2],
    pub jt: [[f64; 2]; 2],
    pub jtt: [[f64; 2]; 2],
    pub kappa: f64,
    pub kappa_t: f64,
    pub kappa_tt: f64,
    /// Material velocity `D_t x` in Eulerian components.
    pub v: [f64; 2],
    /// Material acceleration `D_t^2 x`.
    pub acc: [f64; 2],
    /// Eulerian curl of the velocity field (scalar in 2D).
    pub curl_v: f64,
}

impl FlowData {
    fn identity() -> Self {
        FlowData {
            j: [[1.0, 0.0], [0.0, 1.0]],
            jt: [[0.0; 2]; 2],
            jtt: [[0.0; 2]; 2],
            kappa: 1.0,
            kappa_t: 0.0,
            kappa_tt: 0.0,
            v: [0.0; 2],
            acc: [0.0; 2],
            curl_v: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BackgroundFlow {
    /// `x = y`.
    Static,
    /// Rigid translation `x = y + t v`.
    Translation { vel: [f64; 2] },
    /// Rigid rotation at constant angular velocity.
    Rotation { omega: f64 },
    /// Radial compression `x = sqrt(u) y`, `u = 1 - a(t)(1 - |y|^2/2)`,
    /// with amplitude `a(t) = alpha exp(-t)`. The Jacobian determinant is
    /// `kappa = 1 - a(t)(1 - |y|^2)`, equal to 1 on the boundary ring, so the
    /// interior is compressed (`rho >= rho0`) for `0 < alpha < 1/2`.
    Compression { alpha: f64 },
}

impl BackgroundFlow {
    pub fn data(&self, t: f64, y1: f64, y2: f64) -> FlowData {
        match *self {
            BackgroundFlow::Static => FlowData::identity(),
            BackgroundFlow::Translation { vel } => {
                let mut d = FlowData::identity();
                d.v = vel;
                d
            }
            BackgroundFlow::Rotation { omega } => {
                let phi = omega * t;
                let (sn, cs) = phi.sin_cos();
                let r = [[cs, -sn], [sn, cs]];
                // d/dt R = omega * Jhat * R with Jhat the quarter turn.
                let rot90 = |m: [[f64; 2]; 2]| [[-m[1][0], -m[1][1]], [m[0][0], m[0][1]]];
                let rt = {
                    let q = rot90(r);
                    [
                        [omega * q[0][0], omega * q[0][1]],
                        [omega * q[1][0], omega * q[1][1]],
                    ]
                };
                let x = [
                    r[0][0] * y1 + r[0][1] * y2,
                    r[1][0] * y1 + r[1][1] * y2,
                ];
                FlowData {
                    j: r,
                    jt: rt,
                    jtt: [
                        [-omega * omega * r[0][0], -omega * omega * r[0][1]],
                        [-omega * omega * r[1][0], -omega * omega * r[1][1]],
                    ],
                    kappa: 1.0,
                    kappa_t: 0.0,
                    kappa_tt: 0.0,
                    v: [-omega * x[1], omega * x[0]],
                    acc: [-omega * omega * x[0], -omega * omega * x[1]],
                    curl_v: 2.0 * omega,
                }
            }
            BackgroundFlow::Compression { alpha } => {
                let r2 = y1 * y1 + y2 * y2;
                // a and its time derivatives.
                let a = alpha * (-t).exp();
                let at = -a;
                let att = a;
                let c = 1.0 - r2 / 2.0;
                let u = 1.0 - a * c;
                let u_t = -at * c;
                let u_tt = -att * c;
                // s = sqrt(u); radial derivatives via u_r = a r => expressed
                // against y through u_{y^a} = a y_a.
                let s = u.sqrt();
                let st = u_t / (2.0 * s);
                let stt = u_tt / (2.0 * s) - u_t * u_t / (4.0 * u * s);
                // x = s(t, r) y: J = s I + (ds/dr / r)^sym y y^T with
                // ds/dr = u_r/(2 s), u_r = a r, so ds/dr / r = a / (2 s).
                let w = a / (2.0 * s);
                // time derivatives of w = a/(2 s):
                let wt = at / (2.0 * s) - a * st / (2.0 * s * s);
                let wtt = att / (2.0 * s) - at * st / (s * s) + a * st * st / (s * s * s)
                    - a * stt / (2.0 * s * s);
                let yy = [[y1 * y1, y1 * y2], [y1 * y2, y2 * y2]];
                let mk = |sc: f64, wc: f64| {
                    [
                        [sc + wc * yy[0][0], wc * yy[0][1]],
                        [wc * yy[1][0], sc + wc * yy[1][1]],
                    ]
                };
                let kappa = 1.0 - a * (1.0 - r2);
                FlowData {
                    j: mk(s, w),
                    jt: mk(st, wt),
                    jtt: mk(stt, wtt),
                    kappa,
                    kappa_t: -at * (1.0 - r2),
                    kappa_tt: -att * (1.0 - r2),
                    v: [st * y1, st * y2],
                    acc: [stt * y1, stt * y2],
                    curl_v: 0.0,
                }
            }
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        !matches!(self, BackgroundFlow::Static)
    }
}

/// Coefficient frame: every geometric and thermodynamic field the operators
/// need, sampled per node at a fixed time.
pub struct Frame {
    pub grid: Arc<Grid>,
    pub t: f64,
    /// Reference density (`rho` on the boundary ring).
    pub rho0: f64,
    // Map differential d x^i / d y^a and its inverse d y^a / d x^i.
    pub j: [Vec<f64>; 4],
    pub jinv: [Vec<f64>; 4],
    pub kappa: Vec<f64>,
    // Metric g_ab (symmetric) and inverse.
    pub g11: Vec<f64>,
    pub g12: Vec<f64>,
    pub g22: Vec<f64>,
    pub gi11: Vec<f64>,
    pub gi12: Vec<f64>,
    pub gi22: Vec<f64>,
    pub sigma_dot: Vec<f64>,
    pub sigma_ddot: Vec<f64>,
    pub gdot11: Vec<f64>,
    pub gdot12: Vec<f64>,
    pub gdot22: Vec<f64>,
    pub gddot11: Vec<f64>,
    pub gddot12: Vec<f64>,
    pub gddot22: Vec<f64>,
    /// Vorticity two-form component `omega_12` (antisymmetric).
    pub omega12: Vec<f64>,
    // Material velocity and acceleration (Eulerian components).
    pub v: [Vec<f64>; 2],
    pub acc: [Vec<f64>; 2],
    // Thermodynamic fields.
    pub rho: Vec<f64>,
    pub p: Vec<f64>,
    pub p_prime: Vec<f64>,
    pub h: Vec<f64>,
    pub h_prime: Vec<f64>,
    pub e_prime: Vec<f64>,
    /// Analytic inward pressure gradient `-d p / d r` (reference
    /// coordinates) on the boundary ring, indexed by angle.
    pub neg_dnp_bd: Vec<f64>,
}

impl Frame {
    /// Assembles the frame of an equation-of-state backed background.
    /// `strict` rejects densities below the reference density; the
    /// validation suite relaxes this to exhibit sign-condition failures.
    pub fn assemble(
        grid: &Arc<Grid>,
        flow: BackgroundFlow,
        eos: &EquationOfState,
        t: f64,
        strict: bool,
    ) -> Result<Frame> {
        let n = grid.n();
        let mut f = Frame::empty(grid, t, eos.rho0);
        let mut min_kappa = f64::INFINITY;
        for k in 0..n {
            let (y1, y2) = grid.node_xy(k);
            let d = flow.data(t, y1, y2);
            min_kappa = min_kappa.min(d.kappa);
            if d.kappa <= 1e-12 {
                return Err(Error::DegenerateMap { t, min_kappa });
            }
            let rho = eos.rho0 / d.kappa;
            let st = if strict {
                eos.eval(rho)?
            } else {
                eos.eval_extended(rho)
            };
            f.fill_node(k, &d, rho, st.p, st.p_prime, st.h, st.h_prime, st.e_prime);
        }
        // Analytic boundary pressure slope: d p / d r = p'(rho) d rho / d r
        // with rho = rho0 / kappa.
        // Only compression has a nonzero radial slope of kappa at r = 1;
        // from the closed form kappa = 1 - a (1 - r^2): d kappa/dr = 2 a r.
        let dk_dr = match flow {
            BackgroundFlow::Compression { alpha } => 2.0 * alpha * (-t).exp(),
            _ => 0.0,
        };
        let pp = eos.eval_extended(eos.rho0).p_prime; // kappa = 1 on the ring
        for jth in 0..grid.nt {
            // d rho / d r = -rho0 kappa_r / kappa^2 = -rho0 dk_dr on the ring.
            f.neg_dnp_bd[jth] = pp * eos.rho0 * dk_dr;
        }
        Ok(f)
    }

    /// Flat static frame with a prescribed enthalpy field (and unit density,
    /// unit pressure slope). Used for spectral tests of the boundary-form
    /// operator where the geometric coefficients should be exact.
    pub fn flat_with_enthalpy(grid: &Arc<Grid>, h: &ScalarField) -> Frame {
        let mut f = Frame::empty(grid, 0.0, 1.0);
        let d = FlowData::identity();
        for k in 0..grid.n() {
            f.fill_node(k, &d, 1.0, h.a[k], 1.0, h.a[k], 1.0, 1.0);
        }
        // Boundary slope of h measured by the one-sided radial stencil.
        let nr = grid.nr;
        let inv2dr = 1.0 / (2.0 * grid.dr);
        for j in 0..grid.nt {
            let hr = (3.0 * h.a[grid.idx(nr - 1, j)] - 4.0 * h.a[grid.idx(nr - 2, j)]
                + h.a[grid.idx(nr - 3, j)])
                * inv2dr;
            f.neg_dnp_bd[j] = -hr;
        }
        f
    }

    pub fn flat(grid: &Arc<Grid>) -> Frame {
        let h = grid.scalar();
        Frame::flat_with_enthalpy(grid, &h)
    }

    fn empty(grid: &Arc<Grid>, t: f64, rho0: f64) -> Frame {
        let n = grid.n();
        let z = || vec![0.0; n];
        Frame {
            grid: grid.clone(),
            t,
            rho0,
            j: [z(), z(), z(), z()],
            jinv: [z(), z(), z(), z()],
            kappa: z(),
            g11: z(),
            g12: z(),
            g22: z(),
            gi11: z(),
            gi12: z(),
            gi22: z(),
            sigma_dot: z(),
            sigma_ddot: z(),
            gdot11: z(),
            gdot12: z(),
            gdot22: z(),
            gddot11: z(),
            gddot12: z(),
            gddot22: z(),
            omega12: z(),
            v: [z(), z()],
            acc: [z(), z()],
            rho: z(),
            p: z(),
            p_prime: z(),
            h: z(),
            h_prime: z(),
            e_prime: z(),
            neg_dnp_bd: vec![0.0; grid.nt],
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn fill_node(
        &mut self,
        k: usize,
        d: &FlowData,
        rho: f64,
        p: f64,
        p_prime: f64,
        h: f64,
        h_prime: f64,
        e_prime: f64,
    ) {
        let j = d.j;
        self.j[0][k] = j[0][0];
        self.j[1][k] = j[0][1];
        self.j[2][k] = j[1][0];
        self.j[3][k] = j[1][1];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        self.jinv[0][k] = j[1][1] / det;
        self.jinv[1][k] = -j[0][1] / det;
        self.jinv[2][k] = -j[1][0] / det;
        self.jinv[3][k] = j[0][0] / det;
        self.kappa[k] = d.kappa;

        // g = J^T J.
        let g11 = j[0][0] * j[0][0] + j[1][0] * j[1][0];
        let g12 = j[0][0] * j[0][1] + j[1][0] * j[1][1];
        let g22 = j[0][1] * j[0][1] + j[1][1] * j[1][1];
        self.g11[k] = g11;
        self.g12[k] = g12;
        self.g22[k] = g22;
        let detg = g11 * g22 - g12 * g12;
        self.gi11[k] = g22 / detg;
        self.gi12[k] = -g12 / detg;
        self.gi22[k] = g11 / detg;

        let sd = d.kappa_t / d.kappa;
        let sdd = d.kappa_tt / d.kappa - sd * sd;
        self.sigma_dot[k] = sd;
        self.sigma_ddot[k] = sdd;

        // D_t g = J^T Jt + Jt^T J, D_t^2 g = Jtt^T J + 2 Jt^T Jt + J^T Jtt.
        let (jt, jtt) = (d.jt, d.jtt);
        let sym = |a: [[f64; 2]; 2], b: [[f64; 2]; 2]| {
            let m11 = a[0][0] * b[0][0] + a[1][0] * b[1][0];
            let m12 = a[0][0] * b[0][1] + a[1][0] * b[1][1];
            let m21 = a[0][1] * b[0][0] + a[1][1] * b[1][0];
            let m22 = a[0][1] * b[0][1] + a[1][1] * b[1][1];
            // a^T b + b^T a.
            [2.0 * m11, m12 + m21, 2.0 * m22]
        };
        let dtg = sym(j, jt);
        let jtjt = sym(jt, jt);
        let jttj = sym(j, jtt);
        let dt2g = [
            jttj[0] + jtjt[0],
            jttj[1] + jtjt[1],
            jttj[2] + jtjt[2],
        ];
        self.gdot11[k] = dtg[0] - sd * g11;
        self.gdot12[k] = dtg[1] - sd * g12;
        self.gdot22[k] = dtg[2] - sd * g22;
        self.gddot11[k] = dt2g[0] - 2.0 * sd * dtg[0] + (sd * sd - sdd) * g11;
        self.gddot12[k] = dt2g[1] - 2.0 * sd * dtg[1] + (sd * sd - sdd) * g12;
        self.gddot22[k] = dt2g[2] - 2.0 * sd * dtg[2] + (sd * sd - sdd) * g22;

        // omega_ab = curl(v) det(J) eps_ab.
        self.omega12[k] = d.curl_v * det;

        self.v[0][k] = d.v[0];
        self.v[1][k] = d.v[1];
        self.acc[0][k] = d.acc[0];
        self.acc[1][k] = d.acc[1];

        self.rho[k] = rho;
        self.p[k] = p;
        self.p_prime[k] = p_prime;
        self.h[k] = h;
        self.h_prime[k] = h_prime;
        self.e_prime[k] = e_prime;
    }

    /// `det g - kappa^2`, which vanishes identically for a map-induced frame.
    pub fn metric_determinant_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.grid.n() {
            let detg = self.g11[k] * self.g22[k] - self.g12[k] * self.g12[k];
            worst = worst.max((detg - self.kappa[k] * self.kappa[k]).abs());
        }
        worst
    }
}

pub struct TaylorReport {
    /// Minimum over the boundary ring of the measured inward pressure slope.
    pub c0: f64,
    pub passes: bool,
}

/// Measures the sign condition on the boundary pressure gradient from the
/// frame's pressure field with the one-sided radial stencil (reference
/// coordinates). Positive `c0` means the pressure decreases outward.
pub fn taylor_check(frame: &Frame) -> TaylorReport {
    let grid = &frame.grid;
    let nr = grid.nr;
    let inv2dr = 1.0 / (2.0 * grid.dr);
    let mut c0 = f64::INFINITY;
    for j in 0..grid.nt {
        let pr = (3.0 * frame.p[grid.idx(nr - 1, j)] - 4.0 * frame.p[grid.idx(nr - 2, j)]
            + frame.p[grid.idx(nr - 3, j)])
            * inv2dr;
        c0 = c0.min(-pr);
    }
    TaylorReport {
        c0,
        passes: c0 > 0.0,
    }
}

/// Pointwise Euclidean norm of the momentum-equation residual
/// `D_t^2 x + grad_x h` of the background itself.
pub fn euler_residual(frame: &Frame) -> ScalarField {
    let grid = &frame.grid;
    let n = grid.n();
    let mut dh1 = vec![0.0; n];
    let mut dh2 = vec![0.0; n];
    grid.d1.apply(&frame.h, &mut dh1);
    grid.d2.apply(&frame.h, &mut dh2);
    let mut out = grid.scalar();
    for k in 0..n {
        // Eulerian gradient: (dy/dx)^T applied to the reference gradient.
        let e1 = frame.jinv[0][k] * dh1[k] + frame.jinv[2][k] * dh2[k];
        let e2 = frame.jinv[1][k] * dh1[k] + frame.jinv[3][k] * dh2[k];
        let r1 = frame.acc[0][k] + e1;
        let r2 = frame.acc[1][k] + e2;
        out.a[k] = (r1 * r1 + r2 * r2).sqrt();
    }
    out
}

/// Conserved energy of the nonlinear flow: kinetic plus compression
/// potential, integrated over the moving fluid body.
pub fn nonlinear_energy(frame: &Frame, eos: &EquationOfState) -> f64 {
    let grid = &frame.grid;
    let mut total = 0.0;
    for k in 0..grid.n() {
        let v2 = frame.v[0][k] * frame.v[0][k] + frame.v[1][k] * frame.v[1][k];
        let q = eos.eval_extended(frame.rho[k]).q_pot;
        total += (v2 + q) * frame.rho[k] * frame.kappa[k] * grid.w[k];
    }
    total
}

/// A velocity field `W` expressed in reference components from its Eulerian
/// components: `W^a = (dy/dx)^a_i Z^i`.
pub fn pull_back_vector(frame: &Frame, z: &VectorField) -> VectorField {
    let mut out = frame.grid.vector();
    for k in 0..frame.grid.n() {
        out.x[k] = frame.jinv[0][k] * z.x[k] + frame.jinv[1][k] * z.y[k];
        out.y[k] = frame.jinv[2][k] * z.x[k] + frame.jinv[3][k] * z.y[k];
    }
    out
}
