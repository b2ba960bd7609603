use crate::config::ReferenceConfig;

/// Smoothed velocity and altitude commands with their first two derivatives.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Reference {
    pub v_d: f64,
    pub v_d_dot: f64,
    pub v_d_ddot: f64,
    pub h_d: f64,
    pub h_d_dot: f64,
    pub h_d_ddot: f64,
}

/// Step response `y1 + (y0 - y1)(1 + w t) e^(-w t)` of a critically damped
/// second-order filter, with analytic derivatives.
fn critically_damped(y0: f64, y1: f64, w: f64, t: f64) -> (f64, f64, f64) {
    let t = t.max(0.0);
    let decay = (-w * t).exp();
    let step = y1 - y0;
    (
        y1 - step * (1.0 + w * t) * decay,
        step * w * w * t * decay,
        step * w * w * decay * (1.0 - w * t),
    )
}

pub fn reference_at(t: f64, cfg: &ReferenceConfig) -> Reference {
    let (v_d, v_d_dot, v_d_ddot) = critically_damped(cfg.v_initial, cfg.v_final, cfg.omega_v, t);
    let (h_d, h_d_dot, h_d_ddot) = critically_damped(cfg.h_initial, cfg.h_final, cfg.omega_h, t);
    Reference {
        v_d,
        v_d_dot,
        v_d_ddot,
        h_d,
        h_d_dot,
        h_d_ddot,
    }
}
