//! Velocity controller and four-step altitude backstepping with nonlinear
//! command filters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AeroCoefficients, Channel, ControlCommand, PerChannel};
use crate::ppc::{epsilon_clamped, epsilon_of, PpcChannel, TransformedError};

/// Any diagnostic above this magnitude is reported as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityGains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub l1: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AltitudeGains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub l1: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaGains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub l1: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaGains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
    pub l1: f64,
    pub l2: f64,
    /// Divide the pitch-step virtual law by `g_theta`.
    #[serde(default)]
    pub divide_by_g_theta: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PitchRateGains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub lambda1: f64,
    pub l2: f64,
    pub l3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSet {
    pub velocity: VelocityGains,
    pub altitude: AltitudeGains,
    pub gamma: GammaGains,
    pub theta: ThetaGains,
    pub q: PitchRateGains,
    /// Odd exponent of the fast-convergence terms.
    pub r: u32,
    /// Command-filter time constants.
    pub tau: [f64; 3],
}

impl Default for GainSet {
    fn default() -> Self {
        GainSet {
            velocity: VelocityGains {
                k1: 3.0,
                k2: 2.0,
                k3: 1.0,
                k4: 10.0,
                lambda1: 1.0,
                lambda2: 1.0,
                l1: 0.1,
                l2: 0.1,
            },
            altitude: AltitudeGains {
                k1: 1.7,
                k2: 1.0,
                k3: 1.0,
                k4: 8.0,
                lambda1: 1.0,
                lambda2: 1.0,
                lambda3: 1.0,
                lambda4: 1.0,
                l1: 1.0,
                l2: 0.1,
            },
            gamma: GammaGains {
                k1: 0.5,
                k2: 0.1,
                k3: 0.1,
                lambda1: 1.0,
                lambda2: 1.0,
                lambda3: 1.0,
                lambda4: 1.0,
                l1: 0.1,
                l2: 0.1,
            },
            theta: ThetaGains {
                k1: 1.0,
                k2: 0.1,
                k3: 0.1,
                lambda1: 1.0,
                lambda2: 1.0,
                lambda3: 1.0,
                lambda4: 1.0,
                lambda5: 1.0,
                l1: 0.1,
                l2: 0.1,
                divide_by_g_theta: false,
            },
            q: PitchRateGains {
                k1: 2.0,
                k2: 0.5,
                k3: 0.5,
                lambda1: 1.0,
                l2: 0.1,
                l3: 0.1,
            },
            r: 3,
            tau: [0.2; 3],
        }
    }
}

impl GainSet {
    pub fn validate(&self) -> Result<()> {
        let v = &self.velocity;
        let a = &self.altitude;
        let g = &self.gamma;
        let th = &self.theta;
        let q = &self.q;
        let named = [
            ("velocity.k1", v.k1),
            ("velocity.k2", v.k2),
            ("velocity.k3", v.k3),
            ("velocity.k4", v.k4),
            ("velocity.lambda1", v.lambda1),
            ("velocity.lambda2", v.lambda2),
            ("velocity.l1", v.l1),
            ("velocity.l2", v.l2),
            ("altitude.k1", a.k1),
            ("altitude.k2", a.k2),
            ("altitude.k3", a.k3),
            ("altitude.k4", a.k4),
            ("altitude.lambda1", a.lambda1),
            ("altitude.lambda2", a.lambda2),
            ("altitude.lambda3", a.lambda3),
            ("altitude.lambda4", a.lambda4),
            ("altitude.l1", a.l1),
            ("altitude.l2", a.l2),
            ("gamma.k1", g.k1),
            ("gamma.k2", g.k2),
            ("gamma.k3", g.k3),
            ("gamma.lambda1", g.lambda1),
            ("gamma.lambda2", g.lambda2),
            ("gamma.lambda3", g.lambda3),
            ("gamma.lambda4", g.lambda4),
            ("gamma.l1", g.l1),
            ("gamma.l2", g.l2),
            ("theta.k1", th.k1),
            ("theta.k2", th.k2),
            ("theta.k3", th.k3),
            ("theta.lambda1", th.lambda1),
            ("theta.lambda2", th.lambda2),
            ("theta.lambda3", th.lambda3),
            ("theta.lambda4", th.lambda4),
            ("theta.lambda5", th.lambda5),
            ("theta.l1", th.l1),
            ("theta.l2", th.l2),
            ("q.k1", q.k1),
            ("q.k2", q.k2),
            ("q.k3", q.k3),
            ("q.lambda1", q.lambda1),
            ("q.l2", q.l2),
            ("q.l3", q.l3),
            ("tau[0]", self.tau[0]),
            ("tau[1]", self.tau[1]),
            ("tau[2]", self.tau[2]),
        ];
        for (name, val) in named {
            if !(val > 0.0 && val.is_finite()) {
                return Err(Error::validation(format!("gains.{name}"), "must be positive"));
            }
        }
        if self.r < 3 || self.r % 2 == 0 {
            return Err(Error::validation("gains.r", "must be an odd integer >= 3"));
        }
        Ok(())
    }

    /// Smoothing widths of the three command filters.
    pub fn filter_widths(&self) -> [f64; 3] {
        [self.altitude.l2, self.gamma.l2, self.theta.l2]
    }
}

/// `x^r` by repeated multiplication, exact in sign for odd `r`.
pub fn odd_pow(x: f64, r: u32) -> f64 {
    x.powi(r as i32)
}

/// `x_id' = (-y^r - tanh(y/l) - y) / tau` with `y = x_id - virtual command`.
pub fn command_filter_rhs(y: f64, tau: f64, r: u32, l: f64) -> f64 {
    (-odd_pow(y, r) - (y / l).tanh() - y) / tau
}

fn checked_div(num: f64, g: f64, channel: Channel, floor: f64) -> Result<f64> {
    if !(g.abs() >= floor) {
        return Err(Error::SingularControlGain {
            channel,
            value: g,
            floor,
        });
    }
    Ok(num / g)
}

/// Default floor used when the caller does not supply one.
pub const GAIN_FLOOR: f64 = 1e-9;

/// Inputs to the velocity law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityLawInputs {
    pub eps: TransformedError,
    pub f_v: f64,
    pub g_v: f64,
    pub d_hat_v: f64,
    pub v_d_dot: f64,
    pub rho: f64,
    pub rho_dot: f64,
    pub phi: f64,
    pub phi_m: f64,
}

/// Fuel-equivalence-ratio command.
pub fn velocity_control(inp: &VelocityLawInputs, gains: &VelocityGains, r: u32) -> Result<f64> {
    let eps = inp.eps.epsilon;
    let e = inp.eps.e;
    let s = inp.rho * (1.0 - inp.eps.xi * inp.eps.xi);
    let num = -inp.f_v - s * (gains.k2 * odd_pow(eps, r) + gains.k3 * (eps / gains.l2).tanh())
        - gains.k1 * eps
        - gains.k4 * eps * inp.phi_m * inp.phi_m * e * e / (gains.lambda1 * s)
        - eps * inp.phi / (gains.lambda2 * s)
        - inp.d_hat_v
        + inp.v_d_dot
        + inp.rho_dot * e / inp.rho;
    checked_div(num, inp.g_v, Channel::V, GAIN_FLOOR)
}

/// Inputs to the flight-path-angle virtual law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltitudeLawInputs {
    pub eps: TransformedError,
    pub h_d_dot: f64,
    pub rho: f64,
    pub rho_dot: f64,
    pub phi: f64,
    pub phi_m: f64,
    pub g_h: f64,
}

/// Virtual flight-path-angle command.
pub fn virtual_gamma(inp: &AltitudeLawInputs, gains: &AltitudeGains, r: u32) -> Result<f64> {
    let eps = inp.eps.epsilon;
    let e = inp.eps.e;
    let s = inp.rho * (1.0 - inp.eps.xi * inp.eps.xi);
    let damping = eps * inp.phi / s;
    let num = inp.h_d_dot + inp.rho_dot * e / inp.rho
        - gains.k1 * eps
        - (gains.k2 * odd_pow(eps, r) + gains.k3 * (eps / gains.l1).tanh()) * s
        - damping / gains.lambda2
        - damping / gains.lambda3
        - damping / gains.lambda4
        - gains.k4 * eps * inp.phi_m * inp.phi_m * e * e / (gains.lambda1 * s);
    checked_div(num, inp.g_h, Channel::H, GAIN_FLOOR)
}

/// Virtual pitch-angle command.
pub fn virtual_theta(
    e_gamma: f64,
    f_gamma: f64,
    g_gamma: f64,
    d_hat_gamma: f64,
    x1d_dot: f64,
    gains: &GammaGains,
    r: u32,
) -> Result<f64> {
    let num = -f_gamma - d_hat_gamma + x1d_dot
        - gains.k1 * e_gamma
        - gains.k2 * odd_pow(e_gamma, r)
        - gains.k3 * (e_gamma / gains.l1).tanh();
    checked_div(num, g_gamma, Channel::Gamma, GAIN_FLOOR)
}

/// Virtual pitch-rate command (unit input gain unless `divide_by_g_theta`).
pub fn virtual_q(
    e_theta: f64,
    d_hat_theta: f64,
    x2d_dot: f64,
    g_theta: f64,
    gains: &ThetaGains,
    r: u32,
) -> Result<f64> {
    let num = -d_hat_theta + x2d_dot
        - gains.k1 * e_theta
        - gains.k2 * odd_pow(e_theta, r)
        - gains.k3 * (e_theta / gains.l1).tanh();
    if gains.divide_by_g_theta {
        checked_div(num, g_theta, Channel::Theta, GAIN_FLOOR)
    } else {
        Ok(num)
    }
}

/// Elevator command.
pub fn elevator_control(
    e_q: f64,
    f_q: f64,
    g_q: f64,
    d_hat_q: f64,
    x3d_dot: f64,
    gains: &PitchRateGains,
    r: u32,
) -> Result<f64> {
    let num = -gains.k1 * e_q - f_q - d_hat_q + x3d_dot
        - gains.k2 * odd_pow(e_q, r)
        - gains.k3 * (e_q / gains.l3).tanh();
    checked_div(num, g_q, Channel::Q, GAIN_FLOOR)
}

/// Filtered virtual commands `x_1d, x_2d, x_3d`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CommandFilterState {
    pub x_d: [f64; 3],
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ControllerDiagnostics {
    pub eps_v: TransformedError,
    pub eps_h: TransformedError,
    pub e_gamma: f64,
    pub e_theta: f64,
    pub e_q: f64,
    pub y: [f64; 3],
    pub gamma_bar: f64,
    pub theta_bar: f64,
    pub q_bar: f64,
    pub phi_d: f64,
    pub delta_ed: f64,
}

impl ControllerDiagnostics {
    /// Reports [`Error::Divergence`] for any non-finite or runaway diagnostic.
    pub fn check(&self, t: f64) -> Result<()> {
        let signals: [(&'static str, f64); 13] = [
            ("eps_V", self.eps_v.epsilon),
            ("eps_h", self.eps_h.epsilon),
            ("e_gamma", self.e_gamma),
            ("e_theta", self.e_theta),
            ("e_Q", self.e_q),
            ("y1", self.y[0]),
            ("y2", self.y[1]),
            ("y3", self.y[2]),
            ("gamma_bar", self.gamma_bar),
            ("theta_bar", self.theta_bar),
            ("Q_bar", self.q_bar),
            ("Phi_d", self.phi_d),
            ("delta_ed", self.delta_ed),
        ];
        for (signal, value) in signals {
            if !(value.abs() <= DIVERGENCE_LIMIT) {
                return Err(Error::Divergence { t, signal, value });
            }
        }
        Ok(())
    }
}

/// Everything one controller evaluation consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerInputs {
    pub t: f64,
    pub v: f64,
    pub h: f64,
    pub gamma_hat: f64,
    pub theta: f64,
    pub q: f64,
    pub v_d: f64,
    pub v_d_dot: f64,
    pub h_d: f64,
    pub h_d_dot: f64,
    /// Nominal model evaluated at the reconstructed state.
    pub aero: AeroCoefficients,
    pub d_hat: PerChannel<f64>,
    pub filters: CommandFilterState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerOutput {
    pub command: ControlCommand,
    pub diag: ControllerDiagnostics,
    /// `x_id'` for the three command filters.
    pub filter_rates: [f64; 3],
    /// Velocity and altitude prescribed-performance breaches (record-and-continue mode).
    pub breach: [bool; 2],
}

/// Velocity and altitude controller with their prescribed-performance channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controller {
    pub gains: GainSet,
    pub ppc_v: PpcChannel,
    pub ppc_h: PpcChannel,
    /// Abort on the first prescribed-performance breach.
    pub strict: bool,
    pub gain_floor: f64,
}

impl Controller {
    fn transform(&self, ch: &PpcChannel, e: f64, t: f64) -> Result<(TransformedError, bool)> {
        let phi = ch.phi(t);
        let rho = ch.rho(t);
        if self.strict {
            Ok((epsilon_of(e, t, phi, rho, ch.channel)?, false))
        } else {
            Ok(epsilon_clamped(e, phi, rho))
        }
    }

    fn floor(&self, g: f64, channel: Channel) -> Result<()> {
        if !(g.abs() >= self.gain_floor) {
            return Err(Error::SingularControlGain {
                channel,
                value: g,
                floor: self.gain_floor,
            });
        }
        Ok(())
    }

    /// Evaluates the velocity branch and the altitude cascade in order.
    pub fn step(&self, inp: &ControllerInputs) -> Result<ControllerOutput> {
        let out = self.evaluate(inp)?;
        out.diag.check(inp.t)?;
        Ok(out)
    }

    /// [`Controller::step`] without the divergence guard on the diagnostics.
    pub fn evaluate(&self, inp: &ControllerInputs) -> Result<ControllerOutput> {
        let t = inp.t;
        let gs = &self.gains;
        let r = gs.r;
        let f = &inp.aero.f;
        let g = &inp.aero.g;
        for ch in [Channel::V, Channel::H, Channel::Gamma, Channel::Q] {
            self.floor(*g.get(ch), ch)?;
        }
        if gs.theta.divide_by_g_theta {
            self.floor(g.theta, Channel::Theta)?;
        }

        let (eps_v, breach_v) = self.transform(&self.ppc_v, inp.v - inp.v_d, t)?;
        let phi_d = velocity_control(
            &VelocityLawInputs {
                eps: eps_v,
                f_v: f.v,
                g_v: g.v,
                d_hat_v: inp.d_hat.v,
                v_d_dot: inp.v_d_dot,
                rho: self.ppc_v.rho(t),
                rho_dot: self.ppc_v.rho_dot(t),
                phi: self.ppc_v.phi(t),
                phi_m: self.ppc_v.phi_m,
            },
            &gs.velocity,
            r,
        )?;

        let (eps_h, breach_h) = self.transform(&self.ppc_h, inp.h - inp.h_d, t)?;
        let gamma_bar = virtual_gamma(
            &AltitudeLawInputs {
                eps: eps_h,
                h_d_dot: inp.h_d_dot,
                rho: self.ppc_h.rho(t),
                rho_dot: self.ppc_h.rho_dot(t),
                phi: self.ppc_h.phi(t),
                phi_m: self.ppc_h.phi_m,
                g_h: g.h,
            },
            &gs.altitude,
            r,
        )?;
        let l = gs.filter_widths();
        let x = inp.filters.x_d;

        let y1 = x[0] - gamma_bar;
        let x1_dot = command_filter_rhs(y1, gs.tau[0], r, l[0]);
        let e_gamma = inp.gamma_hat - x[0];
        let theta_bar = virtual_theta(e_gamma, f.gamma, g.gamma, inp.d_hat.gamma, x1_dot, &gs.gamma, r)?;

        let y2 = x[1] - theta_bar;
        let x2_dot = command_filter_rhs(y2, gs.tau[1], r, l[1]);
        let e_theta = inp.theta - x[1];
        let q_bar = virtual_q(e_theta, inp.d_hat.theta, x2_dot, g.theta, &gs.theta, r)?;

        let y3 = x[2] - q_bar;
        let x3_dot = command_filter_rhs(y3, gs.tau[2], r, l[2]);
        let e_q = inp.q - x[2];
        let delta_ed = elevator_control(e_q, f.q, g.q, inp.d_hat.q, x3_dot, &gs.q, r)?;

        let diag = ControllerDiagnostics {
            eps_v,
            eps_h,
            e_gamma,
            e_theta,
            e_q,
            y: [y1, y2, y3],
            gamma_bar,
            theta_bar,
            q_bar,
            phi_d,
            delta_ed,
        };
        Ok(ControllerOutput {
            command: ControlCommand { phi_d, delta_ed },
            diag,
            filter_rates: [x1_dot, x2_dot, x3_dot],
            breach: [breach_v, breach_h],
        })
    }
}

/// One sufficient condition from the closed-loop stability analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct GainCondition {
    pub name: &'static str,
    pub margin: f64,
}

impl GainCondition {
    pub fn holds(&self) -> bool {
        self.margin > 0.0
    }
}

/// State-independent bracket coefficients of the composite Lyapunov bound,
/// evaluated at the supplied model gains. Negative margins are reported, not rejected.
pub fn gain_audit(gs: &GainSet, beta_v: f64, beta_h: f64, g_h: f64, g_gamma: f64) -> Vec<GainCondition> {
    let v = &gs.velocity;
    let a = &gs.altitude;
    let gm = &gs.gamma;
    let th = &gs.theta;
    let q = &gs.q;
    vec![
        GainCondition {
            name: "k_v4 beta - 1",
            margin: v.k4 * beta_v - 1.0,
        },
        GainCondition {
            name: "k_h4 beta_2 - 1",
            margin: a.k4 * beta_h - 1.0,
        },
        GainCondition {
            name: "1/tau_2 - lambda_g2 g_gamma^2/2 - lambda_g4/2",
            margin: 1.0 / gs.tau[1] - gm.lambda2 * g_gamma * g_gamma / 2.0 - gm.lambda4 / 2.0,
        },
        GainCondition {
            name: "1/tau_3 - lambda_t5/2 - lambda_t2/2",
            margin: 1.0 / gs.tau[2] - th.lambda5 / 2.0 - th.lambda2 / 2.0,
        },
        GainCondition {
            name: "k_g1 - sum 1/(2 lambda_g) - lambda_h2 g_h^2/2",
            margin: gm.k1
                - 0.5 / gm.lambda1
                - 0.5 / gm.lambda2
                - 0.5 / gm.lambda3
                - a.lambda2 * g_h * g_h / 2.0,
        },
        GainCondition {
            name: "k_t1 - sum 1/(2 lambda_t) - lambda_g1 g_gamma^2/2",
            margin: th.k1
                - 0.5 / th.lambda1
                - 0.5 / th.lambda2
                - 0.5 / th.lambda3
                - 0.5 / th.lambda4
                - gm.lambda1 * g_gamma * g_gamma / 2.0,
        },
        GainCondition {
            name: "k_Q1 - 1/(2 lambda_Q1)",
            margin: q.k1 - 0.5 / q.lambda1,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppc::{ErrorTransformConfig, PerformanceFunction};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn te(e: f64, phi: f64, rho: f64) -> TransformedError {
        epsilon_of(e, 0.0, phi, rho, Channel::V).unwrap()
    }

    #[test]
    fn filter_values() {
        assert_eq!(command_filter_rhs(0.0, 0.2, 3, 0.1), 0.0);
        let v = command_filter_rhs(1.0, 0.2, 3, 0.1);
        assert_relative_eq!(v, (-2.0 - 10f64.tanh()) / 0.2, epsilon = 1e-12);
        assert!((v + 15.0).abs() < 1e-6);
        assert_eq!(command_filter_rhs(-0.7, 0.2, 3, 0.1), -command_filter_rhs(0.7, 0.2, 3, 0.1));
    }

    #[test]
    fn odd_pow_sign() {
        assert_eq!(odd_pow(-2.0, 3), -8.0);
        assert_eq!(odd_pow(2.0, 5), 32.0);
    }

    #[test]
    fn velocity_zero_error_is_feedforward() {
        let g = GainSet::default();
        let inp = VelocityLawInputs {
            eps: te(0.0, 0.05, 6.0),
            f_v: -12.0,
            g_v: 60.0,
            d_hat_v: 1.5,
            v_d_dot: 3.0,
            rho: 6.0,
            rho_dot: -1.16,
            phi: 0.05,
            phi_m: 1.2,
        };
        let phi_d = velocity_control(&inp, &g.velocity, 3).unwrap();
        assert_relative_eq!(phi_d, (12.0 - 1.5 + 3.0) / 60.0, epsilon = 1e-15);
    }

    #[test]
    fn velocity_feedback_decelerates_positive_error() {
        let g = GainSet::default();
        let base = VelocityLawInputs {
            eps: te(0.0, 1.0, 6.0),
            f_v: 0.0,
            g_v: 60.0,
            d_hat_v: 0.0,
            v_d_dot: 0.0,
            rho: 6.0,
            rho_dot: 0.0,
            phi: 1.0,
            phi_m: 0.5,
        };
        let mut pos = base;
        pos.eps = te(0.3, 1.0, 6.0);
        assert!(velocity_control(&pos, &g.velocity, 3).unwrap() < 0.0);
    }

    // Independent transcription with every term written out separately.
    #[allow(clippy::too_many_arguments)]
    fn eq14_oracle(
        eps: f64,
        xi: f64,
        e: f64,
        rho: f64,
        rho_dot: f64,
        phi: f64,
        phi_m: f64,
        f_v: f64,
        g_v: f64,
        dh: f64,
        vd_dot: f64,
    ) -> f64 {
        let (k1, k2, k3, k4, lam1, lam2, lv2) = (3.0, 2.0, 1.0, 10.0, 1.0, 1.0, 0.1);
        let one_minus = 1.0 - xi.powi(2);
        let t_fast = rho * one_minus * (k2 * eps * eps * eps);
        let t_tanh = rho * one_minus * (k3 * f64::tanh(eps / lv2));
        let t_lin = k1 * eps;
        let t_rob = k4 * eps * phi_m.powi(2) * e.powi(2) / (lam1 * rho * one_minus);
        let t_damp = eps * phi / (lam2 * rho * one_minus);
        let t_rho = rho_dot * e / rho;
        (-f_v - t_fast - t_tanh - t_lin - t_rob - t_damp - dh + vd_dot + t_rho) / g_v
    }

    #[test]
    fn velocity_dual_transcription() {
        let g = GainSet::default();
        for (e, phi) in [(0.3, 1.0), (-2.0, 0.4), (0.01, 0.05)] {
            let tr = te(e, phi, 6.0);
            let inp = VelocityLawInputs {
                eps: tr,
                f_v: -20.0,
                g_v: 58.0,
                d_hat_v: 0.8,
                v_d_dot: 4.0,
                rho: 6.0,
                rho_dot: -1.0,
                phi,
                phi_m: 1.3,
            };
            let oracle = eq14_oracle(tr.epsilon, tr.xi, e, 6.0, -1.0, phi, 1.3, -20.0, 58.0, 0.8, 4.0);
            assert_relative_eq!(
                velocity_control(&inp, &g.velocity, 3).unwrap(),
                oracle,
                max_relative = 1e-12
            );
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn eq20_oracle(eps: f64, xi: f64, e: f64, rho: f64, rho_dot: f64, phi: f64, phi_m: f64, hd_dot: f64, g_h: f64) -> f64 {
        let (k1, k2, k3, k4, lh1, lam) = (1.7, 1.0, 1.0, 8.0, 1.0, [1.0, 1.0, 1.0, 1.0]);
        let sq = rho * (1.0 - xi.powi(2));
        let mut num = hd_dot + rho_dot * e / rho - k1 * eps;
        num -= (k2 * eps.powi(3) + k3 * (eps / lh1).tanh()) * sq;
        for lam_i in &lam[1..] {
            num -= eps * phi / (lam_i * sq);
        }
        num -= k4 * eps * phi_m.powi(2) * e.powi(2) / (lam[0] * sq);
        num / g_h
    }

    #[test]
    fn altitude_laws() {
        let g = GainSet::default();
        let zero = AltitudeLawInputs {
            eps: te(0.0, 0.05, 40.6),
            h_d_dot: 12.0,
            rho: 40.6,
            rho_dot: -2.0,
            phi: 0.05,
            phi_m: 0.6,
            g_h: 8000.0,
        };
        assert_relative_eq!(virtual_gamma(&zero, &g.altitude, 3).unwrap(), 12.0 / 8000.0);
        let tr = te(13.0, 0.7, 40.6);
        let inp = AltitudeLawInputs { eps: tr, phi: 0.7, ..zero };
        let got = virtual_gamma(&inp, &g.altitude, 3).unwrap();
        let oracle = eq20_oracle(tr.epsilon, tr.xi, 13.0, 40.6, -2.0, 0.7, 0.6, 12.0, 8000.0);
        assert_relative_eq!(got, oracle, max_relative = 1e-12);
        let doubled = AltitudeLawInputs { g_h: 16000.0, ..inp };
        assert_relative_eq!(virtual_gamma(&doubled, &g.altitude, 3).unwrap(), got / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn inner_loop_values() {
        let g = GainSet::default();
        let th = virtual_theta(1.0, 0.0, 1.0, 0.0, 0.0, &g.gamma, 3).unwrap();
        assert_relative_eq!(th, -(0.5 + 0.1 + 0.1 * 10f64.tanh()), epsilon = 1e-15);
        assert!((th + 0.7).abs() < 1e-8);
        assert_relative_eq!(virtual_theta(0.0, 0.0, 2.0, 0.0, 0.3, &g.gamma, 3).unwrap(), 0.15);

        assert_eq!(virtual_q(0.0, 0.0, 0.0, 1.0, &g.theta, 3).unwrap(), 0.0);
        let q = virtual_q(1.0, 0.0, 0.0, 1.0, &g.theta, 3).unwrap();
        assert!((q + 1.2).abs() < 1e-8);
        let a = virtual_q(0.0, 0.0, 1.0, 1.0, &g.theta, 3).unwrap();
        let b = virtual_q(0.0, 0.0, 2.0, 1.0, &g.theta, 3).unwrap();
        assert_eq!(b, 2.0 * a);

        let d = elevator_control(1.0, 0.0, 1.0, 0.0, 0.0, &g.q, 3).unwrap();
        assert!((d + 3.0).abs() < 1e-8);
        assert_relative_eq!(elevator_control(0.0, 0.0, 4.0, 0.0, 2.0, &g.q, 3).unwrap(), 0.5);
        assert!(matches!(
            elevator_control(0.0, 0.0, 0.0, 0.0, 2.0, &g.q, 3),
            Err(Error::SingularControlGain { channel: Channel::Q, .. })
        ));
    }

    #[test]
    fn divide_by_g_theta_switch() {
        let mut g = GainSet::default();
        g.theta.divide_by_g_theta = true;
        let q = virtual_q(0.0, 0.0, 1.0, 2.0, &g.theta, 3).unwrap();
        assert_eq!(q, 0.5);
    }

    fn controller() -> Controller {
        let gains = GainSet::default();
        Controller {
            gains,
            ppc_v: PpcChannel::new(
                Channel::V,
                Some(ErrorTransformConfig::with_t_p(2.5)),
                PerformanceFunction { xi_a: 6.0, xi_b: 0.2, t_s: 10.0, n: 2 },
            ),
            ppc_h: PpcChannel::new(
                Channel::H,
                Some(ErrorTransformConfig::with_t_p(5.0)),
                PerformanceFunction { xi_a: 40.6, xi_b: 0.6, t_s: 30.0, n: 2 },
            ),
            strict: false,
            gain_floor: 1e-3,
        }
    }

    fn inputs() -> ControllerInputs {
        ControllerInputs {
            t: 0.0,
            v: 7854.4,
            h: 85040.0,
            gamma_hat: 0.001,
            theta: 0.03,
            q: 0.002,
            v_d: 7846.4,
            v_d_dot: 0.0,
            h_d: 85000.0,
            h_d_dot: 0.0,
            aero: AeroCoefficients {
                f: PerChannel { v: -15.0, h: 0.0, gamma: -0.004, theta: 0.0, q: -0.3 },
                g: PerChannel { v: 60.0, h: 7854.4, gamma: 0.14, theta: 1.0, q: 8.0 },
            },
            d_hat: PerChannel { v: 0.2, h: 0.0, gamma: 1e-4, theta: 1e-3, q: 0.01 },
            filters: CommandFilterState { x_d: [0.0005, 0.031, 0.001] },
        }
    }

    #[test]
    fn step_matches_hand_composition() {
        let c = controller();
        let inp = inputs();
        let out = c.step(&inp).unwrap();
        let gs = &c.gains;

        // recompute the cascade from the oracles above and the closed-form inner laws
        let ev = te(8.0, c.ppc_v.phi(0.0), 6.0);
        let phi_d = eq14_oracle(ev.epsilon, ev.xi, 8.0, 6.0, c.ppc_v.rho_dot(0.0), 0.05, c.ppc_v.phi_m, -15.0, 60.0, 0.2, 0.0);
        assert_relative_eq!(out.command.phi_d, phi_d, max_relative = 1e-9);

        let eh = te(40.0, 0.05, 40.6);
        let gbar = eq20_oracle(eh.epsilon, eh.xi, 40.0, 40.6, c.ppc_h.rho_dot(0.0), 0.05, c.ppc_h.phi_m, 0.0, 7854.4);
        assert_relative_eq!(out.diag.gamma_bar, gbar, max_relative = 1e-9);
        let f = |y: f64, tau: f64| (-y * y * y - (y / 0.1).tanh() - y) / tau;
        let x1 = f(0.0005 - gbar, 0.2);
        let eg = 0.001 - 0.0005;
        let tbar = (0.004 - 1e-4 + x1 - 0.5 * eg - 0.1 * eg.powi(3) - 0.1 * (eg / 0.1).tanh()) / 0.14;
        assert_relative_eq!(out.diag.theta_bar, tbar, max_relative = 1e-9);
        let x2 = f(0.031 - tbar, 0.2);
        let et = 0.03 - 0.031;
        let qbar = -1e-3 + x2 - et - 0.1 * et.powi(3) - 0.1 * (et / 0.1).tanh();
        assert_relative_eq!(out.diag.q_bar, qbar, max_relative = 1e-9);
        let x3 = f(0.001 - qbar, 0.2);
        let eq = 0.002 - 0.001;
        let de = (-2.0 * eq + 0.3 - 0.01 + x3 - 0.5 * eq.powi(3) - 0.5 * (eq / 0.1).tanh()) / 8.0;
        assert_relative_eq!(out.command.delta_ed, de, max_relative = 1e-9);
        for (got, want) in out.filter_rates.iter().zip([x1, x2, x3]) {
            assert_relative_eq!(*got, want, max_relative = 1e-12);
        }
        assert_eq!(out.breach, [false, false]);
        let _ = gs;
    }

    #[test]
    fn perfect_tracking_is_feedforward() {
        let c = controller();
        let mut inp = inputs();
        inp.v = inp.v_d;
        inp.h = inp.h_d;
        inp.d_hat = PerChannel::splat(0.0);
        inp.aero.f = PerChannel::splat(0.0);
        inp.gamma_hat = 0.0;
        inp.theta = 0.0;
        inp.q = 0.0;
        inp.filters = CommandFilterState::default();
        let out = c.step(&inp).unwrap();
        assert_eq!(out.command.phi_d, 0.0);
        assert_eq!(out.command.delta_ed, 0.0);
        assert_eq!(out.filter_rates, [0.0; 3]);
    }

    #[test]
    fn strict_mode_aborts_on_breach() {
        let mut c = controller();
        c.strict = true;
        let mut inp = inputs();
        inp.t = 40.0;
        inp.v = inp.v_d + 1.0;
        inp.h = inp.h_d;
        let err = c.step(&inp).unwrap_err();
        assert!(matches!(err, Error::BoundBreach { channel: Channel::V, .. }));
        // record-and-continue: the clamped transform saturates the robust terms
        // and the run ends through the divergence guard instead
        c.strict = false;
        assert!(matches!(c.step(&inp), Err(Error::Divergence { .. })));
    }

    #[test]
    fn gain_floor_enforced() {
        let c = controller();
        let mut inp = inputs();
        inp.aero.g.q = 1e-6;
        assert!(matches!(c.step(&inp), Err(Error::SingularControlGain { channel: Channel::Q, .. })));
    }

    #[test]
    fn audit_reports_conditions() {
        let a = gain_audit(&GainSet::default(), 0.05, 0.05, 7846.4, 0.14);
        assert_eq!(a.len(), 7);
        let q = a.iter().find(|c| c.name.starts_with("k_Q1")).unwrap();
        assert!(q.holds());
        assert_relative_eq!(q.margin, 1.5);
        assert!(!a[0].holds());
    }

    #[test]
    fn validate_rejects_even_r() {
        let mut g = GainSet::default();
        assert!(g.validate().is_ok());
        g.r = 4;
        assert!(g.validate().is_err());
        g.r = 3;
        g.tau[1] = 0.0;
        assert!(matches!(g.validate(), Err(Error::Validation { key, .. }) if key == "gains.tau[1]"));
    }

    proptest! {
        // Replacing tanh(x/l) by sgn(x) moves each law by at most k * c * l.
        #[test]
        fn smooth_sign_slack_bound(e in -2.0f64..2.0) {
            let g = GainSet::default();
            let th = virtual_theta(e, 0.0, 1.0, 0.0, 0.0, &g.gamma, 3).unwrap();
            let th_sgn = -(g.gamma.k1 * e + g.gamma.k2 * e.powi(3) + g.gamma.k3 * e.signum());
            let gap = (th - th_sgn).abs() * e.abs();
            prop_assert!(gap <= g.gamma.k3 * 0.2785 * g.gamma.l1 + 1e-12);

            let de = elevator_control(e, 0.0, 1.0, 0.0, 0.0, &g.q, 3).unwrap();
            let de_sgn = -(g.q.k1 * e + g.q.k2 * e.powi(3) + g.q.k3 * e.signum());
            prop_assert!((de - de_sgn).abs() * e.abs() <= g.q.k3 * 0.2785 * g.q.l3 + 1e-12);
        }

        #[test]
        fn filter_is_odd(y in -10.0f64..10.0) {
            prop_assert_eq!(command_filter_rhs(-y, 0.2, 3, 0.1), -command_filter_rhs(y, 0.2, 3, 0.1));
        }
    }
}
