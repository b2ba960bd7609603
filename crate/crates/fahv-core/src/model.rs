//! Longitudinal dynamics of the flexible air-breathing hypersonic vehicle.
//!
//! The rigid-body channels follow the affine structure
//!
//! ```text
//! V' = g_V Phi + f_V + d_V
//! h' = V sin(gamma)            (or g_h gamma in small-angle mode)
//! gamma' = g_gamma theta + f_gamma + d_gamma
//! theta' = g_theta Q + f_theta + d_theta
//! Q' = g_Q delta_e + f_Q + d_Q
//! eta_i'' = -2 zeta_i omega_i eta_i' - omega_i^2 eta_i + N_i
//! ```
//!
//! where every `f_i`, `g_i` is a polynomial curve fit in `(qbar, V, h, gamma, alpha, Q)`
//! with a constant-density dynamic pressure `qbar = rho V^2 / 2`.
//!
//! The shipped [`AeroModel::default`] is a representative coefficient set, not
//! published vehicle data: it reproduces the usual trim picture near Mach 8
//! (alpha about 1.7 deg, mildly unstable pitch stiffness) and keeps every
//! control gain well away from zero over the cruise envelope.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAVITY: f64 = 32.174;

/// The five rigid-body channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    V,
    H,
    Gamma,
    Theta,
    Q,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::V,
        Channel::H,
        Channel::Gamma,
        Channel::Theta,
        Channel::Q,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::V => "V",
            Channel::H => "h",
            Channel::Gamma => "gamma",
            Channel::Theta => "theta",
            Channel::Q => "Q",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per rigid-body channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerChannel<T> {
    pub v: T,
    pub h: T,
    pub gamma: T,
    pub theta: T,
    pub q: T,
}

impl<T> PerChannel<T> {
    pub fn get(&self, ch: Channel) -> &T {
        match ch {
            Channel::V => &self.v,
            Channel::H => &self.h,
            Channel::Gamma => &self.gamma,
            Channel::Theta => &self.theta,
            Channel::Q => &self.q,
        }
    }

    pub fn get_mut(&mut self, ch: Channel) -> &mut T {
        match ch {
            Channel::V => &mut self.v,
            Channel::H => &mut self.h,
            Channel::Gamma => &mut self.gamma,
            Channel::Theta => &mut self.theta,
            Channel::Q => &mut self.q,
        }
    }

    pub fn from_fn(mut f: impl FnMut(Channel) -> T) -> Self {
        PerChannel {
            v: f(Channel::V),
            h: f(Channel::H),
            gamma: f(Channel::Gamma),
            theta: f(Channel::Theta),
            q: f(Channel::Q),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Channel, &T) -> U) -> PerChannel<U> {
        PerChannel::from_fn(|ch| f(ch, self.get(ch)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Channel, &T)> {
        Channel::ALL.into_iter().map(move |ch| (ch, self.get(ch)))
    }
}

impl PerChannel<f64> {
    pub fn splat(x: f64) -> Self {
        PerChannel::from_fn(|_| x)
    }
}

/// Rigid-body states plus the three flexible modes `[eta1, eta1', eta2, eta2', eta3, eta3']`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Velocity, ft/s.
    pub v: f64,
    /// Altitude, ft.
    pub h: f64,
    /// Flight path angle, rad.
    pub gamma: f64,
    /// Pitch angle, rad.
    pub theta: f64,
    /// Pitch rate, rad/s.
    pub q: f64,
    pub eta: [f64; 6],
}

impl VehicleState {
    pub const DIM: usize = 11;

    pub fn alpha(&self) -> f64 {
        self.theta - self.gamma
    }

    pub fn write_to(&self, out: &mut [f64]) {
        out[0] = self.v;
        out[1] = self.h;
        out[2] = self.gamma;
        out[3] = self.theta;
        out[4] = self.q;
        out[5..11].copy_from_slice(&self.eta);
    }

    pub fn read_from(x: &[f64]) -> Self {
        let mut eta = [0.0; 6];
        eta.copy_from_slice(&x[5..11]);
        VehicleState {
            v: x[0],
            h: x[1],
            gamma: x[2],
            theta: x[3],
            q: x[4],
            eta,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.v, self.h, self.gamma, self.theta, self.q]
            .iter()
            .chain(self.eta.iter())
            .all(|x| x.is_finite())
    }
}

/// `c * qbar^qbar * V^v * h^h * gamma^gamma * alpha^alpha * Q^q`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub c: f64,
    #[serde(default, skip_serializing_if = "is_zero_u32")]
    pub qbar: u32,
    #[serde(default, skip_serializing_if = "is_zero_i32")]
    pub v: i32,
    #[serde(default, skip_serializing_if = "is_zero_i32")]
    pub h: i32,
    #[serde(default, skip_serializing_if = "is_zero_u32")]
    pub gamma: u32,
    #[serde(default, skip_serializing_if = "is_zero_u32")]
    pub alpha: u32,
    #[serde(default, skip_serializing_if = "is_zero_u32")]
    pub q: u32,
}

fn is_zero_u32(x: &u32) -> bool {
    *x == 0
}

fn is_zero_i32(x: &i32) -> bool {
    *x == 0
}

impl Monomial {
    pub const fn constant(c: f64) -> Self {
        Monomial {
            c,
            qbar: 0,
            v: 0,
            h: 0,
            gamma: 0,
            alpha: 0,
            q: 0,
        }
    }
}

/// Sum of monomials.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(pub Vec<Monomial>);

/// Arguments of the curve fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightCondition {
    pub qbar: f64,
    pub v: f64,
    pub h: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub q: f64,
}

impl Polynomial {
    pub fn eval(&self, fc: &FlightCondition) -> f64 {
        self.0
            .iter()
            .map(|m| {
                m.c * fc.qbar.powi(m.qbar as i32)
                    * fc.v.powi(m.v)
                    * fc.h.powi(m.h)
                    * fc.gamma.powi(m.gamma as i32)
                    * fc.alpha.powi(m.alpha as i32)
                    * fc.q.powi(m.q as i32)
            })
            .sum()
    }

    fn scaled(&self, k: f64) -> Polynomial {
        Polynomial(self.0.iter().map(|m| Monomial { c: m.c * k, ..*m }).collect())
    }
}

/// Closed intervals bounding the states on which the curve fits are trusted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub v: [f64; 2],
    pub h: [f64; 2],
    pub gamma: [f64; 2],
    pub alpha: [f64; 2],
    pub q: [f64; 2],
}

impl Default for Envelope {
    fn default() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        Envelope {
            v: [7000.0, 12000.0],
            h: [70000.0, 120000.0],
            gamma: [-10.0 * deg, 10.0 * deg],
            alpha: [-10.0 * deg, 10.0 * deg],
            q: [-0.5, 0.5],
        }
    }
}

impl Envelope {
    pub fn check(&self, state: &VehicleState) -> Result<()> {
        let checks = [
            ("V", state.v, self.v),
            ("h", state.h, self.h),
            ("gamma", state.gamma, self.gamma),
            ("alpha", state.alpha(), self.alpha),
            ("Q", state.q, self.q),
        ];
        for (quantity, value, [lo, hi]) in checks {
            if !(value >= lo && value <= hi) {
                return Err(Error::EnvelopeViolation {
                    quantity,
                    value,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }
}

/// Second-order elastic mode with generalized force `N = n_alpha alpha + n_phi Phi + n_delta delta_e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlexMode {
    pub zeta: f64,
    pub omega: f64,
    #[serde(default)]
    pub n_alpha: f64,
    #[serde(default)]
    pub n_phi: f64,
    #[serde(default)]
    pub n_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeroModel {
    /// Constant air density used for `qbar`, slug/ft^3.
    pub density: f64,
    pub f_v: Polynomial,
    pub g_v: Polynomial,
    pub g_h: Polynomial,
    pub f_gamma: Polynomial,
    pub g_gamma: Polynomial,
    pub f_theta: Polynomial,
    pub g_theta: Polynomial,
    pub f_q: Polynomial,
    pub g_q: Polynomial,
    pub envelope: Envelope,
    /// Smallest admissible `|g_i|`.
    pub g_floor: f64,
    pub flex: [FlexMode; 3],
}

impl Default for AeroModel {
    fn default() -> Self {
        let mono = |c: f64, qbar: u32, v: i32, gamma: u32, alpha: u32, q: u32| Monomial {
            c,
            qbar,
            v,
            h: 0,
            gamma,
            alpha,
            q,
        };
        AeroModel {
            density: 6.7e-5,
            // Thrust per unit fuel ratio and drag, both proportional to qbar; gravity along the path.
            g_v: Polynomial(vec![mono(0.0291, 1, 0, 0, 0, 0)]),
            f_v: Polynomial(vec![
                mono(-0.005818, 1, 0, 0, 0, 0),
                mono(-0.5818, 1, 0, 0, 2, 0),
                mono(-GRAVITY, 0, 0, 1, 0, 0),
            ]),
            g_h: Polynomial(vec![mono(1.0, 0, 1, 0, 0, 0)]),
            // gamma' = qbar k_L (theta - gamma) / V - g / V
            g_gamma: Polynomial(vec![mono(0.5326, 1, -1, 0, 0, 0)]),
            f_gamma: Polynomial(vec![
                mono(-0.5326, 1, -1, 1, 0, 0),
                mono(-GRAVITY, 0, -1, 0, 0, 0),
            ]),
            g_theta: Polynomial(vec![Monomial::constant(1.0)]),
            f_theta: Polynomial(vec![]),
            // Pitch moment: trim offset, positive (unstable) alpha stiffness, rate damping.
            g_q: Polynomial(vec![mono(3.879e-3, 1, 0, 0, 0, 0)]),
            f_q: Polynomial(vec![
                mono(-2.15e-4, 1, 0, 0, 0, 0),
                mono(7.27e-4, 1, 0, 0, 1, 0),
                mono(-1.455e-4, 1, 0, 0, 0, 1),
            ]),
            envelope: Envelope::default(),
            g_floor: 1e-3,
            flex: [
                FlexMode {
                    zeta: 0.02,
                    omega: 21.17,
                    n_alpha: 0.0,
                    n_phi: 0.0,
                    n_delta: 0.0,
                },
                FlexMode {
                    zeta: 0.02,
                    omega: 53.49,
                    n_alpha: 0.0,
                    n_phi: 0.0,
                    n_delta: 0.0,
                },
                FlexMode {
                    zeta: 0.02,
                    omega: 109.1,
                    n_alpha: 0.0,
                    n_phi: 0.0,
                    n_delta: 0.0,
                },
            ],
        }
    }
}

/// Identity-structure model: every `f_i = 0`, every `g_i = 1`, unbounded envelope.
impl AeroModel {
    pub fn constant(f: f64, g: f64) -> Self {
        let c = |x: f64| Polynomial(vec![Monomial::constant(x)]);
        let inf = [f64::NEG_INFINITY, f64::INFINITY];
        AeroModel {
            density: 0.0,
            f_v: c(f),
            g_v: c(g),
            g_h: c(g),
            f_gamma: c(f),
            g_gamma: c(g),
            f_theta: c(f),
            g_theta: c(g),
            f_q: c(f),
            g_q: c(g),
            envelope: Envelope {
                v: inf,
                h: inf,
                gamma: inf,
                alpha: inf,
                q: inf,
            },
            g_floor: 0.0,
            flex: [FlexMode {
                zeta: 0.5,
                omega: 1.0,
                n_alpha: 0.0,
                n_phi: 0.0,
                n_delta: 0.0,
            }; 3],
        }
    }

    /// Copy of the model with channel `i`'s `f_i` and `g_i` multiplied by `k.i`.
    pub fn scaled(&self, k: &PerChannel<f64>) -> AeroModel {
        AeroModel {
            f_v: self.f_v.scaled(k.v),
            g_v: self.g_v.scaled(k.v),
            g_h: self.g_h.scaled(k.h),
            f_gamma: self.f_gamma.scaled(k.gamma),
            g_gamma: self.g_gamma.scaled(k.gamma),
            f_theta: self.f_theta.scaled(k.theta),
            g_theta: self.g_theta.scaled(k.theta),
            f_q: self.f_q.scaled(k.q),
            g_q: self.g_q.scaled(k.q),
            ..self.clone()
        }
    }

    pub fn flight_condition(&self, state: &VehicleState) -> FlightCondition {
        FlightCondition {
            qbar: 0.5 * self.density * state.v * state.v,
            v: state.v,
            h: state.h,
            gamma: state.gamma,
            alpha: state.alpha(),
            q: state.q,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, m) in self.flex.iter().enumerate() {
            if !(m.zeta > 0.0 && m.zeta < 1.0) {
                return Err(Error::validation(
                    format!("aero.flex[{i}].zeta"),
                    "must lie in (0, 1)",
                ));
            }
            if !(m.omega > 0.0) {
                return Err(Error::validation(
                    format!("aero.flex[{i}].omega"),
                    "must be positive",
                ));
            }
        }
        if !(self.density >= 0.0) {
            return Err(Error::validation("aero.density", "must be non-negative"));
        }
        if !(self.g_floor >= 0.0) {
            return Err(Error::validation("aero.g_floor", "must be non-negative"));
        }
        let e = &self.envelope;
        for (name, [lo, hi]) in [
            ("v", e.v),
            ("h", e.h),
            ("gamma", e.gamma),
            ("alpha", e.alpha),
            ("q", e.q),
        ] {
            if !(lo < hi) {
                return Err(Error::validation(
                    format!("aero.envelope.{name}"),
                    "lower bound must be below upper bound",
                ));
            }
        }
        if e.v[0] <= 0.0 || e.h[0] <= 0.0 {
            // negative exponents on V and h are allowed, so both must stay positive
            return Err(Error::validation(
                "aero.envelope",
                "V and h ranges must be strictly positive",
            ));
        }
        Ok(())
    }
}

/// `f_i` and `g_i` of every channel at one flight condition (`f_h` is identically zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeroCoefficients {
    pub f: PerChannel<f64>,
    pub g: PerChannel<f64>,
}

pub fn eval_aero(state: &VehicleState, model: &AeroModel) -> Result<AeroCoefficients> {
    model.envelope.check(state)?;
    let fc = model.flight_condition(state);
    let f = PerChannel {
        v: model.f_v.eval(&fc),
        h: 0.0,
        gamma: model.f_gamma.eval(&fc),
        theta: model.f_theta.eval(&fc),
        q: model.f_q.eval(&fc),
    };
    let g = PerChannel {
        v: model.g_v.eval(&fc),
        h: model.g_h.eval(&fc),
        gamma: model.g_gamma.eval(&fc),
        theta: model.g_theta.eval(&fc),
        q: model.g_q.eval(&fc),
    };
    for ch in Channel::ALL {
        let gi = *g.get(ch);
        if !(gi.abs() >= model.g_floor) || !gi.is_finite() {
            return Err(Error::SingularControlGain {
                channel: ch,
                value: gi,
                floor: model.g_floor,
            });
        }
        let fi = *f.get(ch);
        if !fi.is_finite() {
            return Err(Error::Divergence {
                t: f64::NAN,
                signal: "f_i",
                value: fi,
            });
        }
    }
    Ok(AeroCoefficients { f, g })
}

/// Commanded inputs `(Phi_d, delta_ed)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub phi_d: f64,
    pub delta_ed: f64,
}

/// Inputs actually reaching the vehicle after fault and saturation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EffectiveInputs {
    pub phi: f64,
    pub delta_e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    pub lambda_phi: f64,
    pub f_phi: f64,
    pub lambda_delta: f64,
    pub f_delta: f64,
    pub t_fault: f64,
}

impl Default for FaultConfig {
    fn default() -> Self {
        FaultConfig {
            lambda_phi: 0.8,
            f_phi: 0.03,
            lambda_delta: 0.8,
            f_delta: 0.05,
            t_fault: 50.0,
        }
    }
}

impl FaultConfig {
    /// Healthy actuators for the whole run.
    pub fn none() -> Self {
        FaultConfig {
            lambda_phi: 1.0,
            f_phi: 0.0,
            lambda_delta: 1.0,
            f_delta: 0.0,
            t_fault: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("fault.lambda_phi", self.lambda_phi),
            ("fault.lambda_delta", self.lambda_delta),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::validation(key, "effectiveness must lie in (0, 1]"));
            }
        }
        if !(self.t_fault >= 0.0) {
            return Err(Error::validation("fault.t_fault", "must be >= 0"));
        }
        if !self.f_phi.is_finite() || !self.f_delta.is_finite() {
            return Err(Error::validation("fault", "bias must be finite"));
        }
        Ok(())
    }
}

/// Static actuator saturation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorLimits {
    pub phi_min: f64,
    pub phi_max: f64,
    /// Symmetric elevator limit, rad.
    pub delta_max: f64,
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        ActuatorLimits {
            phi_min: 0.05,
            phi_max: 1.5,
            delta_max: 20f64.to_radians(),
        }
    }
}

impl ActuatorLimits {
    pub fn clamp(&self, phi: f64, delta_e: f64) -> EffectiveInputs {
        EffectiveInputs {
            phi: phi.clamp(self.phi_min, self.phi_max),
            delta_e: delta_e.clamp(-self.delta_max, self.delta_max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi_min < self.phi_max) {
            return Err(Error::validation(
                "actuator.phi_min",
                "must be below actuator.phi_max",
            ));
        }
        if !(self.delta_max > 0.0) {
            return Err(Error::validation("actuator.delta_max", "must be positive"));
        }
        Ok(())
    }
}

/// `delta_e = lambda_delta delta_ed + f_delta`, `Phi = lambda_Phi Phi_d + f_Phi` from `t_fault` on,
/// followed by actuator saturation.
pub fn apply_fault(
    cmd: ControlCommand,
    fault: &FaultConfig,
    limits: &ActuatorLimits,
    t: f64,
) -> EffectiveInputs {
    let (phi, delta_e) = if t >= fault.t_fault {
        (
            fault.lambda_phi * cmd.phi_d + fault.f_phi,
            fault.lambda_delta * cmd.delta_ed + fault.f_delta,
        )
    } else {
        (cmd.phi_d, cmd.delta_ed)
    };
    limits.clamp(phi, delta_e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    pub amplitude: f64,
    /// rad/s
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDisturbance {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub terms: Vec<Sinusoid>,
}

impl ChannelDisturbance {
    pub fn at(&self, t: f64) -> f64 {
        self.offset
            + self
                .terms
                .iter()
                .map(|s| s.amplitude * (s.frequency * t + s.phase).sin())
                .sum::<f64>()
    }

    /// Upper bound on `|d(t)|`.
    pub fn amplitude_bound(&self) -> f64 {
        self.offset.abs() + self.terms.iter().map(|s| s.amplitude.abs()).sum::<f64>()
    }

    /// Upper bound on `|d'(t)|`.
    pub fn rate_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|s| (s.amplitude * s.frequency).abs())
            .sum()
    }
}

/// Exogenous lumped disturbances, one bounded signal per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DisturbanceProfile(pub PerChannel<ChannelDisturbance>);

impl Default for DisturbanceProfile {
    fn default() -> Self {
        let wave = |amplitude: f64, frequency: f64| ChannelDisturbance {
            offset: 0.0,
            terms: vec![Sinusoid {
                amplitude,
                frequency,
                phase: 0.0,
            }],
        };
        DisturbanceProfile(PerChannel {
            v: wave(1.0, 0.5),
            h: ChannelDisturbance::default(),
            gamma: wave(2e-4, 0.3),
            theta: wave(1e-3, 0.4),
            q: wave(0.01, 0.5),
        })
    }
}

impl DisturbanceProfile {
    pub fn zero() -> Self {
        DisturbanceProfile(PerChannel::default())
    }

    pub fn validate(&self) -> Result<()> {
        for (ch, d) in self.0.iter() {
            let ok = d.offset.is_finite()
                && d.terms.iter().all(|s| {
                    s.amplitude.is_finite() && s.frequency.is_finite() && s.phase.is_finite()
                });
            if !ok {
                return Err(Error::validation(
                    format!("disturbance.{}", ch.name().to_lowercase()),
                    "all terms must be finite",
                ));
            }
        }
        Ok(())
    }
}

pub fn disturbance_at(profile: &DisturbanceProfile, t: f64) -> PerChannel<f64> {
    profile.0.map(|_, d| d.at(t))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantOptions {
    /// Integrate `h' = g_h gamma` instead of `h' = V sin(gamma)`.
    #[serde(default)]
    pub small_angle_h: bool,
}

/// Time derivative of the full vehicle state.
pub fn dynamics_rhs(
    state: &VehicleState,
    input: EffectiveInputs,
    d: &PerChannel<f64>,
    model: &AeroModel,
    opts: PlantOptions,
) -> Result<VehicleState> {
    let c = eval_aero(state, model)?;
    let h_dot = if opts.small_angle_h {
        c.g.h * state.gamma
    } else {
        state.v * state.gamma.sin()
    };
    let alpha = state.alpha();
    let mut eta_dot = [0.0; 6];
    for (i, mode) in model.flex.iter().enumerate() {
        let (eta, eta_rate) = (state.eta[2 * i], state.eta[2 * i + 1]);
        let force = mode.n_alpha * alpha + mode.n_phi * input.phi + mode.n_delta * input.delta_e;
        eta_dot[2 * i] = eta_rate;
        eta_dot[2 * i + 1] = flex_acceleration(mode.zeta, mode.omega, eta, eta_rate, force);
    }
    Ok(VehicleState {
        v: c.g.v * input.phi + c.f.v + d.v,
        h: h_dot + d.h,
        gamma: c.g.gamma * state.theta + c.f.gamma + d.gamma,
        theta: c.g.theta * state.q + c.f.theta + d.theta,
        q: c.g.q * input.delta_e + c.f.q + d.q,
        eta: eta_dot,
    })
}

pub fn flex_acceleration(zeta: f64, omega: f64, eta: f64, eta_rate: f64, force: f64) -> f64 {
    -2.0 * zeta * omega * eta_rate - omega * omega * eta + force
}

/// Pitch angle that zeroes `gamma'` (without disturbance) at the given speed, altitude and path angle.
pub fn trim_theta(model: &AeroModel, v: f64, h: f64, gamma: f64) -> Result<f64> {
    let residual = |theta: f64| -> Result<f64> {
        let s = VehicleState {
            v,
            h,
            gamma,
            theta,
            ..Default::default()
        };
        let c = eval_aero(&s, model)?;
        Ok(c.g.gamma * theta + c.f.gamma)
    };
    let mut theta = gamma;
    for _ in 0..50 {
        let r = residual(theta)?;
        let step = 1e-7;
        let slope = (residual(theta + step)? - residual(theta - step)?) / (2.0 * step);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let next = theta - r / slope;
        if (next - theta).abs() < 1e-14 {
            theta = next;
            break;
        }
        theta = next;
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn trim_state() -> VehicleState {
        VehicleState {
            v: 7846.4,
            h: 85000.0,
            gamma: 0.0,
            theta: 0.03,
            q: 0.0,
            eta: [0.0; 6],
        }
    }

    #[test]
    fn constant_model_passes_values_through() {
        let m = AeroModel::constant(0.0, 1.0);
        let c = eval_aero(&trim_state(), &m).unwrap();
        assert_eq!(c.f.v, 0.0);
        assert_eq!(c.g.v, 1.0);
    }

    #[test]
    fn default_model_gains_nonzero_at_trim() {
        let c = eval_aero(&trim_state(), &AeroModel::default()).unwrap();
        for (_, g) in c.g.iter() {
            assert!(g.abs() > 0.0);
        }
    }

    #[test]
    fn linear_polynomial_in_v() {
        let mut m = AeroModel::constant(0.0, 1.0);
        m.g_v = Polynomial(vec![
            Monomial::constant(1.0),
            Monomial {
                v: 1,
                ..Monomial::constant(1e-5)
            },
        ]);
        let s = VehicleState {
            v: 10000.0,
            ..trim_state()
        };
        let c = eval_aero(&s, &m).unwrap();
        assert_relative_eq!(c.g.v, 1.1, epsilon = 1e-12);
    }

    #[test]
    fn envelope_violation_reported() {
        let s = VehicleState {
            v: 20000.0,
            ..trim_state()
        };
        match eval_aero(&s, &AeroModel::default()) {
            Err(Error::EnvelopeViolation { quantity, .. }) => assert_eq!(quantity, "V"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gain_floor_enforced() {
        let mut m = AeroModel::constant(0.0, 1.0);
        m.g_q = Polynomial(vec![Monomial::constant(1e-6)]);
        m.g_floor = 1e-3;
        assert!(matches!(
            eval_aero(&trim_state(), &m),
            Err(Error::SingularControlGain {
                channel: Channel::Q,
                ..
            })
        ));
    }

    #[test]
    fn fault_identity_before_activation() {
        let cmd = ControlCommand {
            phi_d: 1.0,
            delta_ed: 0.1,
        };
        let out = apply_fault(cmd, &FaultConfig::default(), &ActuatorLimits::default(), 10.0);
        assert_eq!(out.phi, 1.0);
        assert_eq!(out.delta_e, 0.1);
    }

    #[test]
    fn fault_applied_after_activation() {
        let cmd = ControlCommand {
            phi_d: 1.0,
            delta_ed: 0.1,
        };
        let out = apply_fault(cmd, &FaultConfig::default(), &ActuatorLimits::default(), 50.0);
        assert_relative_eq!(out.phi, 0.83, epsilon = 1e-12);
        assert_relative_eq!(out.delta_e, 0.13, epsilon = 1e-12);
    }

    #[test]
    fn fault_output_saturates() {
        let cmd = ControlCommand {
            phi_d: 5.0,
            delta_ed: -1.0,
        };
        let lim = ActuatorLimits::default();
        let out = apply_fault(cmd, &FaultConfig::default(), &lim, 60.0);
        assert_eq!(out.phi, lim.phi_max);
        assert_eq!(out.delta_e, -lim.delta_max);
    }

    #[test]
    fn equilibrium_gives_zero_derivative() {
        let m = AeroModel::constant(0.0, 1.0);
        let s = VehicleState {
            v: 8000.0,
            h: 85000.0,
            ..Default::default()
        };
        let d = PerChannel::splat(0.0);
        let dx = dynamics_rhs(&s, EffectiveInputs::default(), &d, &m, PlantOptions::default())
            .unwrap();
        let mut buf = [1.0; VehicleState::DIM];
        dx.write_to(&mut buf);
        assert!(buf.iter().all(|&x| x == 0.0), "{buf:?}");
    }

    #[test]
    fn small_angle_altitude_rate() {
        let mut m = AeroModel::constant(0.0, 1.0);
        m.g_h = Polynomial(vec![Monomial {
            v: 1,
            ..Monomial::constant(1.0)
        }]);
        let s = VehicleState {
            v: 8000.0,
            h: 85000.0,
            gamma: 0.01,
            theta: 0.01,
            ..Default::default()
        };
        let opts = PlantOptions {
            small_angle_h: true,
        };
        let dx = dynamics_rhs(
            &s,
            EffectiveInputs::default(),
            &PerChannel::splat(0.0),
            &m,
            opts,
        )
        .unwrap();
        assert_relative_eq!(dx.h, 0.01 * 8000.0, epsilon = 1e-9);
    }

    #[test]
    fn flex_mode_acceleration() {
        assert_relative_eq!(flex_acceleration(0.1, 20.0, 1.0, 0.0, 0.0), -400.0);
    }

    #[test]
    fn disturbance_profile_values() {
        assert_eq!(
            disturbance_at(&DisturbanceProfile::zero(), 3.0),
            PerChannel::splat(0.0)
        );
        let mut p = DisturbanceProfile::zero();
        p.0.v.terms.push(Sinusoid {
            amplitude: 0.5,
            frequency: 1.0,
            phase: 0.0,
        });
        assert_relative_eq!(
            disturbance_at(&p, std::f64::consts::FRAC_PI_2).v,
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn two_sinusoids_bounded_by_amplitude_sum() {
        let d = ChannelDisturbance {
            offset: 0.0,
            terms: vec![
                Sinusoid {
                    amplitude: 1.0,
                    frequency: 0.7,
                    phase: 0.3,
                },
                Sinusoid {
                    amplitude: 2.0,
                    frequency: 1.9,
                    phase: -1.0,
                },
            ],
        };
        assert_eq!(d.amplitude_bound(), 3.0);
        let worst = (0..100_000)
            .map(|i| d.at(i as f64 * 1e-3).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 3.0, "{worst}");
        assert!(worst > 2.5);
    }

    #[test]
    fn default_model_satisfies_gain_assumption_on_envelope_grid() {
        let m = AeroModel::default();
        let e = m.envelope;
        let n = 20;
        let lin = |r: [f64; 2], i: usize| r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64;
        let mut min_g = PerChannel::splat(f64::INFINITY);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let alpha = lin(e.alpha, k);
                    let s = VehicleState {
                        v: lin(e.v, i),
                        h: lin(e.h, j),
                        gamma: 0.0,
                        theta: alpha,
                        ..Default::default()
                    };
                    let c = eval_aero(&s, &m).unwrap();
                    for ch in Channel::ALL {
                        let g = min_g.get_mut(ch);
                        *g = g.min(c.g.get(ch).abs());
                    }
                }
            }
        }
        for (ch, g) in min_g.iter() {
            assert!(*g > 1e-3, "channel {ch}: min |g| = {g}");
        }
    }

    #[test]
    fn trim_zeroes_flight_path_rate() {
        let m = AeroModel::default();
        let theta = trim_theta(&m, 7846.4, 85000.0, 0.0).unwrap();
        let s = VehicleState {
            theta,
            ..trim_state()
        };
        let c = eval_aero(&s, &m).unwrap();
        assert!((c.g.gamma * theta + c.f.gamma).abs() < 1e-12);
        // representative trim angle of attack near 1.7 deg
        assert!(theta > 0.02 && theta < 0.04, "{theta}");
    }

    #[test]
    fn scaling_multiplies_channels() {
        let m = AeroModel::default();
        let k = PerChannel {
            v: 1.3,
            h: 1.0,
            gamma: 1.3,
            theta: 1.0,
            q: 1.3,
        };
        let a = eval_aero(&trim_state(), &m).unwrap();
        let b = eval_aero(&trim_state(), &m.scaled(&k)).unwrap();
        assert_relative_eq!(b.g.v, 1.3 * a.g.v, max_relative = 1e-12);
        assert_relative_eq!(b.f.q, 1.3 * a.f.q, max_relative = 1e-12);
        assert_relative_eq!(b.g.theta, a.g.theta);
    }
}
