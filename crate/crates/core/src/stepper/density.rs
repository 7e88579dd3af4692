use super::{SchemeParams, StepError};
use crate::energy::WeightField;
use crate::exec;
use crate::lattice::stencil;
use crate::lattice::{Grid, ScalarField};

/// Result of one density update.
#[derive(Clone, Debug)]
pub struct DensitySolution {
    /// Minimizer `w = u^{beta-1}`.
    pub w: ScalarField,
    /// `u = sign(w) |w|^{1/(beta-1)}`.
    pub u: ScalarField,
    pub newton_iters: usize,
    pub cg_iters: usize,
    /// Final residual relative to `|u_prev|/tau + |b|`.
    pub residual: f64,
    /// Value of the convex functional at `w`.
    pub functional: f64,
}

const CG_MAX: usize = 400;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;

/// `sign(w) |w|^e`.
#[inline]
pub fn signed_pow(w: f64, e: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w.signum() * w.abs().powf(e)
    }
}

/// Face mobility between cells holding `a` and `b`:
/// `((beta-1)/beta) (b^beta - a^beta) / (b^{beta-1} - a^{beta-1})` on the
/// positive parts, so that `Z D^+ w = ((beta-1)/beta) D^+ u^beta` exactly.
/// Reduces to the arithmetic mean for `beta = 2`.
pub fn face_mobility(a: f64, b: f64, beta: f64) -> f64 {
    let (a, b) = (a.max(0.0), b.max(0.0));
    if beta == 2.0 {
        return 0.5 * (a + b);
    }
    let m = a.max(b);
    if m == 0.0 {
        return 0.0;
    }
    if (b - a).abs() <= 1e-5 * m {
        return 0.5 * (a + b);
    }
    (beta - 1.0) / beta * (b.powf(beta) - a.powf(beta)) / (b.powf(beta - 1.0) - a.powf(beta - 1.0))
}

/// Conservative transport term `-D^-(Z D^+ p)` with the face mobility of `z`.
pub fn transport_term(z: &ScalarField, p: &ScalarField, beta: f64) -> ScalarField {
    let g = z.grid();
    let n = g.n();
    let zv = z.values();
    let (px, py) = stencil::forward_gradient(p);
    let (pxv, pyv) = (px.values(), py.values());
    let fx = exec::collect(zv.len(), |i| {
        let (iy, ix) = (i / n, i % n);
        face_mobility(zv[i], zv[iy * n + (ix + 1) % n], beta) * pxv[i]
    });
    let fy = exec::collect(zv.len(), |i| {
        let (iy, ix) = (i / n, i % n);
        face_mobility(zv[i], zv[((iy + 1) % n) * n + ix], beta) * pyv[i]
    });
    stencil::backward_divergence(&ScalarField::from_parts(g, fx), &ScalarField::from_parts(g, fy))
        .expect("same grid")
        .scale(-1.0)
}

/// Solves the implicit density equation
///
/// ```text
/// (u - u_prev)/tau - div(z_+^{1/(beta-1)} grad p) - rho1 div(|grad w|^{1/beta-1} grad w)
///     + eps |w|^{1/beta-1} w gamma = 0,    w = u^{beta-1},
/// ```
///
/// for `w` by minimizing its strictly convex functional. `z` is the frozen
/// density in the transport coefficient and `guess` warm-starts the iteration.
/// Both divergence terms use the two-point stencils of
/// [`crate::lattice::stencil`], the transport term through [`transport_term`].
pub fn density_step(
    u_prev: &ScalarField,
    p: &ScalarField,
    z: &ScalarField,
    params: &SchemeParams,
    guess: Option<&ScalarField>,
) -> Result<DensitySolution, StepError> {
    params.validate()?;
    u_prev.ensure_same_grid(p)?;
    u_prev.ensure_same_grid(z)?;
    u_prev.ensure_finite()?;
    p.ensure_finite()?;
    z.ensure_finite()?;
    let problem = DensityProblem::new(u_prev, p, z, params);
    let start = match guess {
        Some(g) => {
            u_prev.ensure_same_grid(g)?;
            g.values().to_vec()
        }
        None => u_prev
            .values()
            .iter()
            .map(|&v| signed_pow(v, params.beta - 1.0))
            .collect(),
    };
    problem.solve(start, params)
}

pub(crate) struct DensityProblem<'a> {
    grid: &'a Grid,
    u_prev: &'a [f64],
    transport: Vec<f64>,
    gamma: WeightField,
    beta: f64,
    tau: f64,
    eps: f64,
    rho1: f64,
    delta: f64,
    scale: f64,
}

/// Pointwise data of the linearization at one iterate.
struct Linearization {
    diag: Vec<f64>,
    /// `dw/du` where the update is taken in `u` (`beta > 2`), else empty.
    jac: Vec<f64>,
    a: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
    c: Vec<f64>,
    precond: Vec<f64>,
}

impl<'a> DensityProblem<'a> {
    fn new(u_prev: &'a ScalarField, p: &ScalarField, z: &ScalarField, params: &SchemeParams) -> Self {
        let grid = u_prev.grid();
        let beta = params.beta;
        let transport = transport_term(z, p, beta).into_values();
        let h2 = grid.cell_area();
        let norm = |v: &[f64]| (h2 * exec::sum(v.len(), |i| v[i] * v[i])).sqrt();
        let scale = norm(u_prev.values()) / params.tau + norm(&transport);
        Self {
            grid,
            u_prev: u_prev.values(),
            transport,
            gamma: WeightField::new(grid),
            beta,
            tau: params.tau,
            eps: params.eps,
            rho1: params.rho1,
            delta: params.delta_grad,
            scale,
        }
    }

    fn field(&self, v: Vec<f64>) -> ScalarField {
        ScalarField::from_parts(self.grid, v)
    }

    fn norm(&self, v: &[f64]) -> f64 {
        (self.grid.cell_area() * exec::sum(v.len(), |i| v[i] * v[i])).sqrt()
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.grid.cell_area() * exec::sum(a.len(), |i| a[i] * b[i])
    }

    fn gradient(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (gx, gy) = stencil::forward_gradient(&self.field(w.to_vec()));
        (gx.into_values(), gy.into_values())
    }

    /// Gradient-regularization coefficient `a = (|g|^2 + delta^2)^{(q-2)/2}`.
    fn coefficient(&self, gx: &[f64], gy: &[f64]) -> Vec<f64> {
        let half = (1.0 / self.beta - 1.0) / 2.0;
        let d2 = self.delta * self.delta;
        exec::collect(gx.len(), |i| (gx[i] * gx[i] + gy[i] * gy[i] + d2).powf(half))
    }

    /// `-div(fx, fy)`.
    fn neg_div(&self, fx: Vec<f64>, fy: Vec<f64>) -> Vec<f64> {
        stencil::backward_divergence(&self.field(fx), &self.field(fy))
            .expect("same grid")
            .scale(-1.0)
            .into_values()
    }

    /// Residual of the Euler-Lagrange equation; the `L^2` gradient of the functional.
    fn residual(&self, w: &[f64]) -> Vec<f64> {
        let (beta, tau, eps) = (self.beta, self.tau, self.eps);
        let e_u = 1.0 / (beta - 1.0);
        let e_m = (1.0 / beta - 1.0) / 2.0;
        let d2 = self.delta * self.delta;
        let (up, b, gamma) = (self.u_prev, &self.transport, self.gamma.values());
        let mut r = exec::collect(w.len(), |i| {
            let wi = w[i];
            let m = wi * (wi * wi + d2).powf(e_m);
            (signed_pow(wi, e_u) - up[i]) / tau + b[i] + eps * m * gamma[i]
        });
        if self.rho1 > 0.0 {
            let (gx, gy) = self.gradient(w);
            let a = self.coefficient(&gx, &gy);
            let fx = exec::collect(w.len(), |i| a[i] * gx[i]);
            let fy = exec::collect(w.len(), |i| a[i] * gy[i]);
            let d = self.neg_div(fx, fy);
            for (ri, di) in r.iter_mut().zip(&d) {
                *ri += self.rho1 * di;
            }
        }
        r
    }

    /// Convex functional whose minimizer solves the density equation, with
    /// the sum of absolute contributions as a roundoff scale.
    fn functional(&self, w: &[f64]) -> (f64, f64) {
        let (beta, tau, eps) = (self.beta, self.tau, self.eps);
        let e_j = beta / (beta - 1.0);
        let c_j = (beta - 1.0) / beta;
        let e_r = (beta + 1.0) / (2.0 * beta);
        let c_r = beta / (beta + 1.0);
        let d2 = self.delta * self.delta;
        let (up, b, gamma) = (self.u_prev, &self.transport, self.gamma.values());
        let h2 = self.grid.cell_area();
        let terms = |i: usize| -> [f64; 2] {
            let wi = w[i];
            let pos = c_j * wi.abs().powf(e_j) / tau + eps * c_r * (wi * wi + d2).powf(e_r) * gamma[i];
            let lin = (b[i] - up[i] / tau) * wi;
            [pos + lin, pos + lin.abs()]
        };
        let mut value = h2 * exec::sum(w.len(), |i| terms(i)[0]);
        let mut mag = h2 * exec::sum(w.len(), |i| terms(i)[1]);
        if self.rho1 > 0.0 {
            let (gx, gy) = self.gradient(w);
            let g = self.rho1 * c_r * h2 * exec::sum(w.len(), |i| (gx[i] * gx[i] + gy[i] * gy[i] + d2).powf(e_r));
            value += g;
            mag += g;
        }
        (value, mag)
    }

    fn linearize(&self, w: &[f64]) -> Linearization {
        let (beta, tau, eps) = (self.beta, self.tau, self.eps);
        let e_u = 1.0 / (beta - 1.0);
        let e_m = (1.0 / beta - 1.0) / 2.0;
        let d2 = self.delta * self.delta;
        let gamma = self.gamma.values();
        let jac = if self.in_u_coordinates() {
            let umax = exec::max(w.len(), |i| w[i].abs()).powf(e_u);
            let floor = (1e-12 * umax).max(1e-150);
            exec::collect(w.len(), |i| {
                (beta - 1.0) * w[i].abs().powf(e_u).max(floor).powf(beta - 2.0)
            })
        } else {
            Vec::new()
        };
        let diag = exec::collect(w.len(), |i| {
            let wi = w[i];
            let du = if jac.is_empty() {
                e_u * wi.abs().powf(e_u - 1.0)
            } else {
                1.0 / jac[i]
            };
            let dm = (wi * wi + d2).powf(e_m - 1.0) * ((1.0 + 2.0 * e_m) * wi * wi + d2);
            du / tau + eps * dm * gamma[i]
        });
        let n = w.len();
        if self.rho1 > 0.0 {
            let (gx, gy) = self.gradient(w);
            let a = self.coefficient(&gx, &gy);
            let q2 = (beta + 1.0) / beta - 2.0;
            let c = exec::collect(n, |i| q2 / (gx[i] * gx[i] + gy[i] * gy[i] + d2));
            let h = self.grid.spacing();
            let stiff = 4.0 / (h * h) * self.rho1;
            let precond = exec::collect(n, |i| diag[i] + stiff * a[i]);
            Linearization {
                diag,
                jac,
                a,
                gx,
                gy,
                c,
                precond,
            }
        } else {
            let precond = diag.clone();
            Linearization {
                diag,
                jac,
                a: Vec::new(),
                gx: Vec::new(),
                gy: Vec::new(),
                c: Vec::new(),
                precond,
            }
        }
    }

    /// For `beta > 2` the map `w -> u` has an unbounded derivative at zero and
    /// Newton steps in `w` cycle there; the same direction is applied in `u`.
    fn in_u_coordinates(&self) -> bool {
        self.beta > 2.0
    }

    fn hessian_apply(&self, lin: &Linearization, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        if self.rho1 == 0.0 {
            return exec::collect(n, |i| lin.diag[i] * v[i]);
        }
        let (vx, vy) = self.gradient(v);
        let Linearization { a, gx, gy, c, .. } = lin;
        let proj = exec::collect(n, |i| c[i] * (gx[i] * vx[i] + gy[i] * vy[i]));
        let fx = exec::collect(n, |i| a[i] * (vx[i] + proj[i] * gx[i]));
        let fy = exec::collect(n, |i| a[i] * (vy[i] + proj[i] * gy[i]));
        let d = self.neg_div(fx, fy);
        let rho1 = self.rho1;
        exec::collect(n, |i| lin.diag[i] * v[i] + rho1 * d[i])
    }

    /// Preconditioned conjugate gradients for `H x = rhs` with relative tolerance `rtol`.
    fn pcg(&self, lin: &Linearization, rhs: &[f64], rtol: f64) -> (Vec<f64>, usize) {
        let n = rhs.len();
        let m = &lin.precond;
        if self.rho1 == 0.0 {
            return (exec::collect(n, |i| rhs[i] / m[i]), 1);
        }
        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        let mut zv = exec::collect(n, |i| r[i] / m[i]);
        let mut d = zv.clone();
        let mut rz = self.dot(&r, &zv);
        let target = rtol * self.norm(rhs);
        let mut iters = 0;
        while iters < CG_MAX {
            iters += 1;
            let hd = self.hessian_apply(lin, &d);
            let dhd = self.dot(&d, &hd);
            if !(dhd > 0.0) {
                break;
            }
            let alpha = rz / dhd;
            for i in 0..n {
                x[i] += alpha * d[i];
                r[i] -= alpha * hd[i];
            }
            if self.norm(&r) <= target {
                break;
            }
            zv = exec::collect(n, |i| r[i] / m[i]);
            let rz_new = self.dot(&r, &zv);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                d[i] = zv[i] + beta * d[i];
            }
        }
        (x, iters)
    }

    fn relative(&self, r: &[f64]) -> f64 {
        let rn = self.norm(r);
        if self.scale > 0.0 {
            rn / self.scale
        } else {
            rn
        }
    }

    fn solve(&self, mut w: Vec<f64>, params: &SchemeParams) -> Result<DensitySolution, StepError> {
        let n = w.len();
        let mut r = self.residual(&w);
        let mut res = self.relative(&r);
        let (mut j, mut jmag) = self.functional(&w);
        let mut newton_iters = 0;
        let mut cg_iters = 0;
        while res > params.inner_tol {
            if newton_iters == params.inner_max {
                return Err(StepError::InnerDiverged {
                    residual: res,
                    iterations: newton_iters,
                });
            }
            newton_iters += 1;
            let lin = self.linearize(&w);
            let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
            let (mut dir, k) = self.pcg(&lin, &neg_r, res.sqrt().clamp(1e-8, 1e-2));
            cg_iters += k;
            let mut slope = self.dot(&r, &dir);
            if !(slope < 0.0) {
                dir = exec::collect(n, |i| -r[i] / lin.precond[i]);
                slope = self.dot(&r, &dir);
            }
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let trial = if lin.jac.is_empty() {
                    exec::collect(n, |i| w[i] + step * dir[i])
                } else {
                    let (e_u, bm1, jac) = (1.0 / (self.beta - 1.0), self.beta - 1.0, &lin.jac);
                    exec::collect(n, |i| signed_pow(signed_pow(w[i], e_u) + step * dir[i] / jac[i], bm1))
                };
                let (jt, jtmag) = self.functional(&trial);
                let roundoff = (step * slope).abs() <= 1e-13 * jmag;
                if jt <= j + ARMIJO * step * slope {
                    accepted = Some((trial, jt, jtmag, None));
                    break;
                }
                if roundoff {
                    let rt = self.residual(&trial);
                    if self.relative(&rt) < res {
                        accepted = Some((trial, jt, jtmag, Some(rt)));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((trial, jt, jtmag, rt)) = accepted else {
                return Err(StepError::InnerDiverged {
                    residual: res,
                    iterations: newton_iters,
                });
            };
            w = trial;
            j = jt;
            jmag = jtmag;
            r = rt.unwrap_or_else(|| self.residual(&w));
            res = self.relative(&r);
            if !res.is_finite() {
                return Err(StepError::InnerDiverged {
                    residual: res,
                    iterations: newton_iters,
                });
            }
        }
        let e_u = 1.0 / (self.beta - 1.0);
        let u = exec::collect(n, |i| signed_pow(w[i], e_u));
        Ok(DensitySolution {
            w: self.field(w),
            u: self.field(u),
            newton_iters,
            cg_iters,
            residual: res,
            functional: j,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;

    fn gaussian(g: &Grid, amp: f64, width: f64) -> ScalarField {
        ScalarField::from_fn(g, |x, y| amp * (-(x * x + y * y) / (2.0 * width * width)).exp())
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = make_grid(16, 4.0).unwrap();
        let z = ScalarField::zeros(&g);
        let sol = density_step(&z, &z, &z, &SchemeParams::default(), None).unwrap();
        assert_eq!(sol.w.max_abs(), 0.0);
        assert_eq!(sol.newton_iters, 0);
    }

    #[test]
    fn unregularized_flat_pressure_is_identity() {
        let g = make_grid(16, 4.0).unwrap();
        let u = gaussian(&g, 1.0, 1.0);
        let p = ScalarField::zeros(&g);
        let params = SchemeParams {
            eps: 0.0,
            rho1: 0.0,
            ..SchemeParams::default()
        };
        let sol = density_step(&u, &p, &u, &params, None).unwrap();
        assert!(sol.u.sub(&u).max_abs() < 1e-12);
    }

    #[test]
    fn converges_with_all_regularizations() {
        let g = make_grid(32, 6.0).unwrap();
        let u = gaussian(&g, 1.0, 1.2);
        let p = gaussian(&g, 0.5, 1.5);
        for beta in [1.6, 2.0, 3.0] {
            let params = SchemeParams {
                beta,
                s: 0.8,
                eps: 1e-2,
                rho1: 1e-2,
                ..SchemeParams::default()
            };
            let sol = density_step(&u, &p, &u, &params, None).unwrap();
            assert!(sol.residual <= params.inner_tol, "beta {beta}: {}", sol.residual);
            let r = DensityProblem::new(&u, &p, &u, &params).residual(sol.w.values());
            assert!(r.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn transport_conserves_mass_without_absorption() {
        let g = make_grid(32, 6.0).unwrap();
        let u = gaussian(&g, 1.0, 1.2);
        let p = gaussian(&g, 0.5, 1.5);
        let params = SchemeParams {
            eps: 0.0,
            ..SchemeParams::default()
        };
        let sol = density_step(&u, &p, &u, &params, None).unwrap();
        let rel = (sol.u.integral() - u.integral()).abs() / u.integral();
        assert!(rel < 1e-10, "{rel}");
    }

    #[test]
    fn face_mobility_chain_rule() {
        for beta in [1.5, 2.0, 3.0] {
            let (a, b): (f64, f64) = (0.3, 1.7);
            let z = face_mobility(a, b, beta);
            let lhs = z * (b.powf(beta - 1.0) - a.powf(beta - 1.0));
            let rhs = (beta - 1.0) / beta * (b.powf(beta) - a.powf(beta));
            assert!((lhs - rhs).abs() < 1e-14);
            assert!(z > a && z < b);
            let near = face_mobility(0.7, 0.7 * (1.0 + 1e-9), beta);
            assert!((near - 0.7).abs() < 1e-8);
        }
        assert_eq!(face_mobility(-1.0, 0.0, 2.5), 0.0);
    }

    #[test]
    fn residual_is_gradient_of_functional() {
        let g = make_grid(16, 4.0).unwrap();
        let u = gaussian(&g, 1.0, 1.0);
        let p = gaussian(&g, 0.3, 1.3);
        let params = SchemeParams {
            beta: 2.5,
            s: 0.7,
            eps: 0.1,
            rho1: 0.1,
            delta_grad: 1e-3,
            ..SchemeParams::default()
        };
        let prob = DensityProblem::new(&u, &p, &u, &params);
        let w: Vec<f64> = u.values().iter().map(|v| 0.8 * v + 0.05).collect();
        let r = prob.residual(&w);
        let dir: Vec<f64> = (0..w.len()).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect();
        let eps = 1e-6;
        let plus: Vec<f64> = w.iter().zip(&dir).map(|(a, b)| a + eps * b).collect();
        let minus: Vec<f64> = w.iter().zip(&dir).map(|(a, b)| a - eps * b).collect();
        let fd = (prob.functional(&plus).0 - prob.functional(&minus).0) / (2.0 * eps);
        let an = prob.dot(&r, &dir);
        assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0), "{fd} vs {an}");
    }
}
