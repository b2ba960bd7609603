//! Appointed-time prescribed performance: the performance envelope `rho(t)`,
//! the initial-error-independent multiplier `phi(t)` and the logarithmic
//! transformed error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Channel;

/// Margin kept between `|xi|` and 1.
pub const XI_MARGIN: f64 = 1e-9;

/// Grid resolution used to find the peak of `phi'` on `[0, T_p]`.
pub const PHI_RATE_GRID: usize = 10_000;

/// Parameters of the multiplier `phi(t)` that grows from `beta` to 1 by `t_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorTransformConfig {
    pub beta: f64,
    pub a_exp: f64,
    pub mu: f64,
    pub t_p: f64,
}

impl ErrorTransformConfig {
    pub fn with_t_p(t_p: f64) -> Self {
        ErrorTransformConfig {
            beta: 0.05,
            a_exp: 2.0,
            mu: 1.0,
            t_p,
        }
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::validation(format!("{key}.beta"), "must lie in (0, 1)"));
        }
        if !(self.a_exp > 1.0 && self.a_exp.is_finite()) {
            return Err(Error::validation(format!("{key}.a_exp"), "must be > 1"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::validation(format!("{key}.mu"), "must be positive"));
        }
        if !(self.t_p > 0.0 && self.t_p.is_finite()) {
            return Err(Error::validation(format!("{key}.t_p"), "must be positive"));
        }
        Ok(())
    }

    /// Inner ratio `2(T_p - t) / (T_p (e^(mu t / T_p) + 1) - t)` and its time derivative.
    fn ratio(&self, t: f64) -> (f64, f64) {
        let tp = self.t_p;
        let ex = (self.mu * t / tp).exp();
        let num = 2.0 * (tp - t);
        let den = tp * (ex + 1.0) - t;
        let den_dot = self.mu * ex - 1.0;
        (num / den, (-2.0 * den - num * den_dot) / (den * den))
    }
}

/// `phi(t) = 1 - (1 - beta) g(t)^a` on `[0, T_p]`, 1 afterwards.
pub fn phi(t: f64, cfg: &ErrorTransformConfig) -> f64 {
    if t >= cfg.t_p {
        return 1.0;
    }
    let (g, _) = cfg.ratio(t.max(0.0));
    1.0 - (1.0 - cfg.beta) * g.powf(cfg.a_exp)
}

/// Analytic time derivative of [`phi`].
pub fn phi_dot(t: f64, cfg: &ErrorTransformConfig) -> f64 {
    if t >= cfg.t_p {
        return 0.0;
    }
    let (g, g_dot) = cfg.ratio(t.max(0.0));
    -(1.0 - cfg.beta) * cfg.a_exp * g.powf(cfg.a_exp - 1.0) * g_dot
}

/// Peak `|phi'|` over a uniform grid on `[0, T_p]` and whether `phi` was
/// non-decreasing at every grid point.
pub fn phi_rate_scan(cfg: &ErrorTransformConfig) -> (f64, bool) {
    let mut peak = 0.0f64;
    let mut monotone = true;
    for i in 0..=PHI_RATE_GRID {
        let t = cfg.t_p * i as f64 / PHI_RATE_GRID as f64;
        let d = phi_dot(t, cfg);
        peak = peak.max(d.abs());
        monotone &= d >= -1e-12;
    }
    (peak, monotone)
}

/// Envelope `rho(t) = (xi_a - xi_b)(1 - t/T_s)^n + xi_b` reaching `xi_b` at `T_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerformanceFunction {
    pub xi_a: f64,
    pub xi_b: f64,
    pub t_s: f64,
    #[serde(default = "default_exponent")]
    pub n: u32,
}

fn default_exponent() -> u32 {
    2
}

impl PerformanceFunction {
    pub fn validate(&self, key: &str) -> Result<()> {
        if !(self.xi_b > 0.0 && self.xi_b.is_finite()) {
            return Err(Error::validation(format!("{key}.xi_b"), "must be positive"));
        }
        if !(self.xi_a > self.xi_b && self.xi_a.is_finite()) {
            return Err(Error::validation(format!("{key}.xi_a"), "must exceed xi_b"));
        }
        if !(self.t_s > 0.0 && self.t_s.is_finite()) {
            return Err(Error::validation(format!("{key}.t_s"), "must be positive"));
        }
        if self.n < 1 {
            return Err(Error::validation(format!("{key}.n"), "must be >= 1"));
        }
        Ok(())
    }
}

pub fn rho(t: f64, pf: &PerformanceFunction) -> f64 {
    if t >= pf.t_s {
        return pf.xi_b;
    }
    let s = 1.0 - t.max(0.0) / pf.t_s;
    (pf.xi_a - pf.xi_b) * s.powi(pf.n as i32) + pf.xi_b
}

pub fn rho_dot(t: f64, pf: &PerformanceFunction) -> f64 {
    if t >= pf.t_s {
        return 0.0;
    }
    let s = 1.0 - t.max(0.0) / pf.t_s;
    let n = pf.n as i32;
    -(pf.xi_a - pf.xi_b) * n as f64 * s.powi(n - 1) / pf.t_s
}

/// Largest `beta` that keeps `|xi(0)| < 1` for a given initial error.
pub fn beta_for_initial_error(e0: f64, rho0: f64) -> f64 {
    if e0 == 0.0 {
        return 1.0 - 1e-3;
    }
    ((1.0 - 1e-3) * rho0 / e0.abs()).min(1.0 - 1e-3)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TransformedError {
    pub e: f64,
    pub e_bar: f64,
    pub xi: f64,
    pub epsilon: f64,
}

fn log_ratio(xi: f64) -> f64 {
    // ln((1+xi)/(1-xi)) = 2 atanh(xi); symmetric evaluation keeps it odd to the bit
    (2.0 * xi.abs().atanh()).copysign(xi)
}

/// Strict transform; errors with [`Error::BoundBreach`] when `|xi| >= 1 - 1e-9`.
pub fn epsilon_of(e: f64, t: f64, phi: f64, rho: f64, channel: Channel) -> Result<TransformedError> {
    let e_bar = phi * e;
    let xi = e_bar / rho;
    if !(xi.abs() < 1.0 - XI_MARGIN) {
        return Err(Error::BoundBreach { channel, t, xi });
    }
    Ok(TransformedError {
        e,
        e_bar,
        xi,
        epsilon: log_ratio(xi),
    })
}

/// Record-and-continue transform: `xi` is clamped to `+-(1 - 1e-9)`; the flag reports a breach.
pub fn epsilon_clamped(e: f64, phi: f64, rho: f64) -> (TransformedError, bool) {
    let e_bar = phi * e;
    let raw = e_bar / rho;
    let lim = 1.0 - XI_MARGIN;
    let breached = !(raw.abs() < lim);
    let xi = if raw.is_nan() { 0.0 } else { raw.clamp(-lim, lim) };
    (
        TransformedError {
            e,
            e_bar,
            xi,
            epsilon: log_ratio(xi),
        },
        breached,
    )
}

/// Inverse of the log transform.
pub fn xi_of_epsilon(eps: f64) -> f64 {
    (eps.exp() - 1.0) / (eps.exp() + 1.0)
}

/// Per-channel prescribed-performance setup with the cached `phi'` peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpcChannel {
    pub channel: Channel,
    /// `None` disables the multiplier (`phi = 1`, `phi_m = 0`).
    pub transform: Option<ErrorTransformConfig>,
    pub performance: PerformanceFunction,
    pub phi_m: f64,
}

impl PpcChannel {
    pub fn new(
        channel: Channel,
        transform: Option<ErrorTransformConfig>,
        performance: PerformanceFunction,
    ) -> Self {
        let phi_m = transform.map_or(0.0, |c| phi_rate_scan(&c).0);
        PpcChannel {
            channel,
            transform,
            performance,
            phi_m,
        }
    }

    pub fn phi(&self, t: f64) -> f64 {
        self.transform.as_ref().map_or(1.0, |c| phi(t, c))
    }

    pub fn phi_dot(&self, t: f64) -> f64 {
        self.transform.as_ref().map_or(0.0, |c| phi_dot(t, c))
    }

    pub fn rho(&self, t: f64) -> f64 {
        rho(t, &self.performance)
    }

    pub fn rho_dot(&self, t: f64) -> f64 {
        rho_dot(t, &self.performance)
    }

    /// Time after which `phi = 1`.
    pub fn t_p(&self) -> f64 {
        self.transform.map_or(0.0, |c| c.t_p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn velocity_pf() -> PerformanceFunction {
        PerformanceFunction {
            xi_a: 6.0,
            xi_b: 0.2,
            t_s: 10.0,
            n: 2,
        }
    }

    #[test]
    fn phi_endpoints() {
        for tp in [2.5, 5.0] {
            let c = ErrorTransformConfig::with_t_p(tp);
            assert!((phi(0.0, &c) - 0.05).abs() <= 1e-12);
            assert_eq!(phi(tp, &c), 1.0);
            assert_eq!(phi(2.0 * tp, &c), 1.0);
            assert!((phi(tp * (1.0 - 1e-12), &c) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn phi_dot_matches_finite_difference() {
        let c = ErrorTransformConfig::with_t_p(2.5);
        for t in [0.3, 1.25, 2.0] {
            let h = 1e-6;
            let fd = (phi(t + h, &c) - phi(t - h, &c)) / (2.0 * h);
            assert_relative_eq!(phi_dot(t, &c), fd, max_relative = 1e-6);
        }
        assert_eq!(phi_dot(3.0, &c), 0.0);
    }

    #[test]
    fn phi_rate_peak_default_is_positive_and_monotone() {
        let (m, mono) = phi_rate_scan(&ErrorTransformConfig::with_t_p(2.5));
        assert!(m > 0.0);
        assert!(mono);
    }

    #[test]
    fn rho_values() {
        let pf = velocity_pf();
        assert_eq!(rho(0.0, &pf), 6.0);
        assert_eq!(rho(10.0, &pf), 0.2);
        assert_eq!(rho(25.0, &pf), 0.2);
        assert_relative_eq!(rho(5.0, &pf), 5.8 / 4.0 + 0.2, epsilon = 1e-12);
        assert_relative_eq!(rho_dot(0.0, &pf), -2.0 * 5.8 / 10.0, epsilon = 1e-12);
        assert_eq!(rho_dot(10.0, &pf), 0.0);
        let h = 1e-6;
        let fd = (rho(1.0 + h, &pf) - rho(1.0 - h, &pf)) / (2.0 * h);
        assert_relative_eq!(rho_dot(1.0, &pf), fd, max_relative = 1e-7);
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let r = rho(i as f64 * 0.01, &pf);
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn transform_values() {
        let te = epsilon_of(0.0, 0.0, 0.05, 6.0, Channel::V).unwrap();
        assert_eq!(te.epsilon, 0.0);
        let te = epsilon_of(3.0, 0.0, 1.0, 6.0, Channel::V).unwrap();
        assert_relative_eq!(te.epsilon, 3f64.ln(), epsilon = 1e-14);
        let te = epsilon_of(40.0, 0.0, 0.05, 40.6, Channel::H).unwrap();
        assert_relative_eq!(te.xi, 0.05 * 40.0 / 40.6, epsilon = 1e-15);
        let err = epsilon_of(7.0, 1.5, 1.0, 6.0, Channel::V).unwrap_err();
        assert!(matches!(err, Error::BoundBreach { channel: Channel::V, .. }));
        let (te, breach) = epsilon_clamped(7.0, 1.0, 6.0);
        assert!(breach);
        assert!(te.epsilon.is_finite() && te.xi < 1.0);
    }

    #[test]
    fn epsilon_monotone_and_invertible() {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=198 {
            let xi = -0.99 + i as f64 * 0.01;
            let eps = log_ratio(xi);
            assert!(eps > prev);
            prev = eps;
            assert!((xi_of_epsilon(eps) - xi).abs() < 1e-12);
        }
    }

    #[test]
    fn disabled_multiplier() {
        let ch = PpcChannel::new(Channel::V, None, velocity_pf());
        assert_eq!(ch.phi(0.0), 1.0);
        assert_eq!(ch.phi_m, 0.0);
    }

    proptest! {
        #[test]
        fn phi_stays_in_range(
            beta in 0.001f64..0.999,
            a in 1.01f64..6.0,
            mu in 0.05f64..5.0,
            tp in 0.1f64..20.0,
            frac in 0.0f64..1.5,
        ) {
            let c = ErrorTransformConfig { beta, a_exp: a, mu, t_p: tp };
            let p = phi(frac * tp, &c);
            prop_assert!(p >= beta - 1e-12 && p <= 1.0 + 1e-12);
            prop_assert!((phi(0.0, &c) - beta).abs() <= 1e-12);
        }

        #[test]
        fn initial_error_independence(e0 in -1e6f64..1e6, rho0 in 0.01f64..100.0) {
            let beta = beta_for_initial_error(e0, rho0);
            prop_assert!(beta > 0.0 && beta < 1.0);
            prop_assert!((beta * e0 / rho0).abs() < 1.0);
        }

        #[test]
        fn epsilon_is_odd(e in -5.0f64..5.0) {
            let a = epsilon_of(e, 0.0, 1.0, 6.0, Channel::V).unwrap();
            let b = epsilon_of(-e, 0.0, 1.0, 6.0, Channel::V).unwrap();
            prop_assert_eq!(a.epsilon, -b.epsilon);
            prop_assert_eq!(a.epsilon == 0.0, e == 0.0);
        }
    }
}
