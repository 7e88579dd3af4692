use super::StepError;

/// Parameters of the regularized semi-discrete scheme and its solvers.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeParams {
    /// Pressure source exponent, `beta > 1`.
    pub beta: f64,
    /// Fractional order, `1/beta < s < 1`.
    pub s: f64,
    /// Time step.
    pub tau: f64,
    /// Weighted absorption `eps u^{(beta-1)/beta} gamma`.
    pub eps: f64,
    /// `(beta+1)/beta`-Laplacian regularization of `w = u^{beta-1}`.
    pub rho1: f64,
    /// Laplacian regularization of the pressure.
    pub rho2: f64,
    /// Mollifier of `|grad w|^{1/beta-1}` and `|w|^{1/beta-1}` at zero.
    pub delta_grad: f64,
    /// Picard damping in `(0, 1]`.
    pub theta: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub inner_tol: f64,
    pub inner_max: usize,
    /// Accepted negative excursion of `u`, `p` relative to their maxima.
    pub tol_neg: f64,
    /// Accepted negative energy slack relative to the reference energy.
    pub slack_rel: f64,
    /// Halve `tau` and retry when the Picard loop fails.
    pub retry_halve_tau: bool,
    pub tau_floor: f64,
}

impl Default for SchemeParams {
    fn default() -> Self {
        Self {
            beta: 2.0,
            s: 0.75,
            tau: 1e-3,
            eps: 1e-3,
            rho1: 1e-3,
            rho2: 1e-3,
            delta_grad: 1e-8,
            theta: 0.5,
            picard_tol: 1e-9,
            picard_max: 200,
            inner_tol: 1e-10,
            inner_max: 50,
            tol_neg: 1e-9,
            slack_rel: 1e-8,
            retry_halve_tau: false,
            tau_floor: 1e-6,
        }
    }
}

impl SchemeParams {
    pub fn validate(&self) -> Result<(), StepError> {
        let bad = |msg: String| Err(StepError::InvalidParams(msg));
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return bad(format!("beta must exceed 1, got {}", self.beta));
        }
        if !(self.s < 1.0 && self.s * self.beta > 1.0) {
            return bad(format!(
                "need 1/beta < s < 1, got s = {} with beta = {}",
                self.s, self.beta
            ));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        for (name, v) in [("eps", self.eps), ("rho1", self.rho1), ("rho2", self.rho2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta must lie in (0, 1], got {}", self.theta));
        }
        for (name, v) in [
            ("delta_grad", self.delta_grad),
            ("picard_tol", self.picard_tol),
            ("inner_tol", self.inner_tol),
            ("tol_neg", self.tol_neg),
            ("slack_rel", self.slack_rel),
            ("tau_floor", self.tau_floor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.picard_max == 0 || self.inner_max == 0 {
            return bad("iteration caps must be at least 1".into());
        }
        Ok(())
    }

    /// Runs with `1 < beta < 2` are outside the range where the final
    /// limit passage is argued; they are allowed but flagged.
    pub fn beta_below_two(&self) -> bool {
        self.beta < 2.0
    }

    /// `q = (beta + 1) / beta` of the gradient regularization.
    pub fn q_exponent(&self) -> f64 {
        (self.beta + 1.0) / self.beta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SchemeParams::default().validate().unwrap();
        assert!(!SchemeParams::default().beta_below_two());
    }

    #[test]
    fn rejects_s_beta_at_most_one() {
        let p = SchemeParams {
            beta: 2.0,
            s: 0.5,
            ..SchemeParams::default()
        };
        assert!(p.validate().is_err());
        let p = SchemeParams {
            beta: 1.5,
            s: 0.7,
            ..SchemeParams::default()
        };
        assert!(p.validate().is_ok());
        assert!(p.beta_below_two());
    }

    #[test]
    fn rejects_nonpositive_tolerances() {
        for edit in [
            |p: &mut SchemeParams| p.tau = 0.0,
            |p: &mut SchemeParams| p.eps = -1.0,
            |p: &mut SchemeParams| p.theta = 0.0,
            |p: &mut SchemeParams| p.theta = 1.5,
            |p: &mut SchemeParams| p.inner_tol = 0.0,
            |p: &mut SchemeParams| p.delta_grad = 0.0,
            |p: &mut SchemeParams| p.picard_max = 0,
        ] {
            let mut p = SchemeParams::default();
            edit(&mut p);
            assert!(p.validate().is_err());
        }
    }
}
