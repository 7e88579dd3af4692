use crate::energy::{self, norm, EnergyError, Norm};
use crate::lattice::{stencil, Grid, ScalarField};

use super::{CheckReport, Trajectory};

/// Solution norms along a trajectory. Time integrals are right-endpoint sums
/// over the frame intervals.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NormReport {
    pub sup_u_l1: f64,
    pub sup_u_lbeta: f64,
    /// `||u||_{L^{beta+1}}` over space-time.
    pub u_lbeta1: f64,
    pub sup_p_h1: f64,
    /// `||p||_{L^2(0,T; H^{s+1})}`.
    pub p_l2_hs1: f64,
    pub r: f64,
    /// `||u||_{L^r}` over space-time.
    pub u_lr: f64,
    pub sup_energy: f64,
}

impl NormReport {
    pub fn entries(&self) -> [(&'static str, f64); 8] {
        [
            ("sup_u_l1", self.sup_u_l1),
            ("sup_u_lbeta", self.sup_u_lbeta),
            ("u_lbeta1", self.u_lbeta1),
            ("sup_p_h1", self.sup_p_h1),
            ("p_l2_hs1", self.p_l2_hs1),
            ("r", self.r),
            ("u_lr", self.u_lr),
            ("sup_energy", self.sup_energy),
        ]
    }

    pub fn to_check(&self) -> CheckReport {
        let bad = self.entries().into_iter().find(|(_, v)| !v.is_finite());
        let detail = self
            .entries()
            .iter()
            .map(|(k, v)| format!("{k} = {v:e}"))
            .collect::<Vec<_>>()
            .join(", ");
        CheckReport::from_failure(
            "check_theorem_norms",
            "u_lbeta1",
            self.u_lbeta1,
            detail,
            bad.map(|(k, _)| (0, format!("{k} is not finite"))),
        )
    }
}

pub fn check_theorem_norms(traj: &Trajectory, beta: f64, s: f64) -> Result<NormReport, EnergyError> {
    let r = energy::interpolation_exponent(beta)?;
    let mut out = NormReport {
        r,
        ..NormReport::default()
    };
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for (k, f) in traj.frames.iter().enumerate() {
        out.sup_u_l1 = out.sup_u_l1.max(norm(&f.u, Norm::Lebesgue(1.0))?);
        out.sup_u_lbeta = out.sup_u_lbeta.max(norm(&f.u, Norm::Lebesgue(beta))?);
        out.sup_p_h1 = out.sup_p_h1.max(norm(&f.p, Norm::Sobolev1(2.0))?);
        let h = energy::lyapunov_energy(&f.u, &f.p, beta, None)?.energy;
        out.sup_energy = out.sup_energy.max(h);
        if k == 0 {
            continue;
        }
        let dt = f.time - traj.frames[k - 1].time;
        a += dt * f.u.integrate_with(|v| v.abs().powf(beta + 1.0));
        b += dt * norm(&f.p, Norm::Bessel(s + 1.0))?.powi(2);
        c += dt * f.u.integrate_with(|v| v.abs().powf(r));
    }
    out.u_lbeta1 = a.powf(1.0 / (beta + 1.0));
    out.p_l2_hs1 = b.sqrt();
    out.u_lr = c.powf(1.0 / r);
    Ok(out)
}

/// `int u_k (p_k - p_{k-1})/dt - u_k |D^+ p_k|^2` for each frame interval,
/// keyed by the later frame's time.
pub fn divcurl_monitor(traj: &Trajectory) -> Vec<(f64, f64)> {
    traj.intervals()
        .map(|(a, b, dt)| {
            let (px, py) = stencil::forward_gradient(&b.p);
            let g = px.zip_map(&py, |x, y| x * x + y * y);
            (b.time, b.u.dot(&b.p.sub(&a.p)) / dt - b.u.dot(&g))
        })
        .collect()
}

/// Smooth step: `0` for `t <= 0`, `1` for `t >= 1`, flat to all orders at both ends.
fn smooth_step(t: f64) -> f64 {
    let e = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        e(t) / (e(t) + e(1.0 - t))
    }
}

/// Tensor product of `psi(x - cx) psi(y - cy)` with
/// `psi(d) = S((plateau + width - |d|)/width)`, so `phi = 1` on the square of
/// half-side `plateau` and `phi = 0` beyond `plateau + width`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestFunction {
    pub center: (f64, f64),
    pub plateau: f64,
    pub width: f64,
}

impl TestFunction {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let psi = |d: f64| smooth_step((self.plateau + self.width - d.abs()) / self.width);
        psi(x - self.center.0) * psi(y - self.center.1)
    }

    pub fn field(&self, grid: &Grid) -> ScalarField {
        ScalarField::from_fn(grid, |x, y| self.value(x, y))
    }
}

/// The fixed battery on a box of half-width `l`:
///
/// | # | center          | plateau | width |
/// |---|-----------------|---------|-------|
/// | 0 | (0, 0)          | l/4     | l/4   |
/// | 1 | (0, 0)          | 0       | l/4   |
/// | 2 | (l/4, 0)        | 0       | l/8   |
/// | 3 | (-l/4, 0)       | 0       | l/8   |
/// | 4 | (0, l/4)        | 0       | l/8   |
/// | 5 | (0, -l/4)       | 0       | l/8   |
/// | 6 | (l/4, l/4)      | 0       | l/8   |
/// | 7 | (-l/4, -l/4)    | 0       | l/8   |
///
/// Entry 0 is identically one on `[-l/4, l/4]^2`.
pub fn battery(l: f64) -> [TestFunction; 8] {
    let bump = |cx: f64, cy: f64, width: f64| TestFunction {
        center: (cx, cy),
        plateau: 0.0,
        width,
    };
    let q = l / 4.0;
    let w = l / 8.0;
    [
        TestFunction {
            center: (0.0, 0.0),
            plateau: q,
            width: q,
        },
        bump(0.0, 0.0, q),
        bump(q, 0.0, w),
        bump(-q, 0.0, w),
        bump(0.0, q, w),
        bump(0.0, -q, w),
        bump(q, q, w),
        bump(-q, -q, w),
    ]
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DualNormReport {
    /// Largest `|<D_tau u, phi>| / ||phi||_u` over the battery and intervals.
    pub sup_u: f64,
    /// Largest `|<D_tau p, phi>| / ||phi||_p`.
    pub sup_p: f64,
    /// `(sum dt max_phi ratio^2)^{1/2}`, the time-`L^2` form of the bound.
    pub l2_u: f64,
    pub l2_p: f64,
    /// Per interval: end time and the max ratios for `u` and `p`.
    pub rows: Vec<(f64, f64, f64)>,
}

/// Pairs the difference quotients of consecutive frames with the
/// [`battery`]. Test functions for `u` are normalized by
/// `max(||phi||_{W^{1,(beta+1)/beta}}, ||phi||_{W^{1,2beta/(2+(1-s)beta)}})`,
/// those for `p` by `max(||phi||_{L^2}, ||phi||_{L^{r/(r-beta)}})`.
pub fn dual_norm_surrogate(traj: &Trajectory, beta: f64, s: f64) -> Result<DualNormReport, EnergyError> {
    let Some(first) = traj.frames.first() else {
        return Ok(DualNormReport::default());
    };
    let grid = first.u.grid();
    let r = energy::interpolation_exponent(beta)?;
    let qa = (beta + 1.0) / beta;
    let qb = 2.0 * beta / (2.0 + (1.0 - s) * beta);
    let qp = r / (r - beta);
    let mut tests = Vec::new();
    for t in battery(grid.half_width()) {
        let phi = t.field(grid);
        let nu = norm(&phi, Norm::Sobolev1(qa))?.max(norm(&phi, Norm::Sobolev1(qb))?);
        let np = norm(&phi, Norm::Lebesgue(2.0))?.max(norm(&phi, Norm::Lebesgue(qp))?);
        tests.push((phi, nu, np));
    }
    let mut out = DualNormReport::default();
    for (a, b, dt) in traj.intervals() {
        let (mut mu, mut mp): (f64, f64) = (0.0, 0.0);
        for (phi, nu, np) in &tests {
            let du = (b.u.dot(phi) - a.u.dot(phi)) / dt;
            let dp = (b.p.dot(phi) - a.p.dot(phi)) / dt;
            mu = mu.max(du.abs() / nu);
            mp = mp.max(dp.abs() / np);
        }
        out.sup_u = out.sup_u.max(mu);
        out.sup_p = out.sup_p.max(mp);
        out.l2_u += dt * mu * mu;
        out.l2_p += dt * mp * mp;
        out.rows.push((b.time, mu, mp));
    }
    out.l2_u = out.l2_u.sqrt();
    out.l2_p = out.l2_p.sqrt();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::Frame;
    use super::*;
    use crate::lattice::make_grid;

    fn bump(g: &Grid, amp: f64) -> ScalarField {
        ScalarField::from_fn(g, |x, y| amp * (-(x * x + y * y) / 2.0).exp())
    }

    #[test]
    fn zero_trajectory_has_zero_norms() {
        let g = make_grid(16, 4.0).unwrap();
        let z = ScalarField::zeros(&g);
        let mut t = Trajectory::single(z.clone(), z.clone());
        t.frames.push(Frame {
            step: 1,
            time: 0.1,
            u: z.clone(),
            p: z,
        });
        let n = check_theorem_norms(&t, 2.0, 0.75).unwrap();
        for (k, v) in n.entries() {
            if k != "r" {
                assert_eq!(v, 0.0, "{k}");
            }
        }
        assert_eq!(divcurl_monitor(&t), vec![(0.1, 0.0)]);
        let d = dual_norm_surrogate(&t, 2.0, 0.75).unwrap();
        assert_eq!((d.sup_u, d.sup_p), (0.0, 0.0));
    }

    #[test]
    fn initial_norms_are_homogeneous() {
        let g = make_grid(32, 6.0).unwrap();
        let u = bump(&g, 1.0);
        let p = bump(&g, 0.3);
        let one = check_theorem_norms(&Trajectory::single(u.clone(), p.clone()), 2.0, 0.75).unwrap();
        let two = check_theorem_norms(&Trajectory::single(u.scale(2.0), p.scale(2.0)), 2.0, 0.75).unwrap();
        assert!((two.sup_u_l1 - 2.0 * one.sup_u_l1).abs() < 1e-12 * one.sup_u_l1);
        assert!((two.sup_u_lbeta - 2.0 * one.sup_u_lbeta).abs() < 1e-12 * one.sup_u_lbeta);
        assert!((two.sup_p_h1 - 2.0 * one.sup_p_h1).abs() < 1e-12 * one.sup_p_h1);
        assert!((two.sup_energy - 4.0 * one.sup_energy).abs() < 1e-12 * one.sup_energy);
    }

    #[test]
    fn steady_pressure_divcurl() {
        let g = make_grid(16, 4.0).unwrap();
        let u = bump(&g, 1.0);
        let p = bump(&g, 0.5);
        let mut t = Trajectory::single(u.clone(), p.clone());
        t.frames.push(Frame {
            step: 1,
            time: 0.5,
            u: u.clone(),
            p: p.clone(),
        });
        let (px, py) = stencil::forward_gradient(&p);
        let expect = -u.dot(&px.zip_map(&py, |a, b| a * a + b * b));
        let got = divcurl_monitor(&t)[0].1;
        assert!((got - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn plateau_pairing_is_box_mass_rate() {
        let g = make_grid(64, 8.0).unwrap();
        let phi = battery(8.0)[0];
        for (x, y) in [(0.0, 0.0), (2.0, -2.0), (-1.9, 1.5)] {
            assert_eq!(phi.value(x, y), 1.0);
        }
        assert_eq!(phi.value(4.0, 0.0), 0.0);
        let u0 = ScalarField::from_fn(&g, |x, y| if x.abs() < 1.5 && y.abs() < 1.5 { 1.0 } else { 0.0 });
        let u1 = u0.scale(1.5);
        let mut t = Trajectory::single(u0.clone(), u0.clone());
        t.frames.push(Frame {
            step: 1,
            time: 0.25,
            u: u1.clone(),
            p: u0.clone(),
        });
        let flux = (u1.integral() - u0.integral()) / 0.25;
        let pairing = (u1.dot(&phi.field(&g)) - u0.dot(&phi.field(&g))) / 0.25;
        assert!((pairing - flux).abs() < 1e-12 * flux);
        let d = dual_norm_surrogate(&t, 2.0, 0.75).unwrap();
        assert!(d.sup_u > 0.0 && d.sup_p == 0.0);
    }
}
