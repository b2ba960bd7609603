use serde::Serialize;

use super::log::{col, TrajectoryLog};
use crate::error::{Error, Result};

/// Timing and accuracy parameters one channel is judged against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub t_p: f64,
    pub t_s: f64,
    pub xi_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSpec {
    pub velocity: ChannelSpec,
    pub altitude: ChannelSpec,
    pub t_fault: f64,
    /// Settling allowance after the fault before accuracy is judged again.
    pub post_fault_window: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ChannelMetrics {
    pub max_abs_e: f64,
    pub max_abs_e_after_tp: f64,
    pub max_abs_e_after_ts: f64,
    /// First logged time after which `|e| < rho` for every later sample.
    pub time_to_enter_bound: Option<f64>,
    /// `|e|` at the first sample at or after `T_s`.
    pub settling_value: Option<f64>,
    /// Samples with `|phi e| >= rho`.
    pub transformed_violations: usize,
    /// Samples after `T_p` with `|e| >= rho`.
    pub violations_after_tp: usize,
    /// Samples at or after `T_s` with `|e| > xi_b`.
    pub accuracy_violations: usize,
    /// Largest `|e|` once the post-fault window has elapsed.
    pub max_abs_e_post_fault: f64,
    /// Violations of all three kinds once the post-fault window has elapsed.
    pub post_fault_violations: usize,
    /// Time from the fault until `|e| <= xi_b` holds for every later sample.
    pub post_fault_recovery: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunMetrics {
    pub samples: usize,
    pub t_end: f64,
    pub velocity: ChannelMetrics,
    pub altitude: ChannelMetrics,
    pub peak_phi_cmd: f64,
    pub peak_delta_e_cmd: f64,
    /// Integration steps on which a transformed error left its envelope.
    pub breach_steps: [usize; 2],
    pub wall_clock_s: f64,
}

impl RunMetrics {
    /// Plain-text `key = value` summary.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("metrics serialize")
    }
}

fn channel(log: &TrajectoryLog, spec: &ChannelSpec, e_col: &str, rho_col: &str, phi_col: &str, t_fault: f64, window: f64) -> ChannelMetrics {
    let (ti, ei, ri, pi) = (col("t"), col(e_col), col(rho_col), col(phi_col));
    let mut m = ChannelMetrics::default();
    let mut last_outside: Option<f64> = None;
    let mut last_inaccurate_post_fault: Option<f64> = None;
    let mut ended_inaccurate = false;
    let eps_t = 1e-9;
    for row in &log.rows {
        let (t, e, rho, phi) = (row[ti], row[ei].abs(), row[ri], row[pi]);
        m.max_abs_e = m.max_abs_e.max(e);
        if (phi * e) >= rho {
            m.transformed_violations += 1;
        }
        if e >= rho {
            last_outside = Some(t);
        }
        let after_tp = t > spec.t_p + eps_t;
        let after_ts = t >= spec.t_s - eps_t;
        if after_tp {
            m.max_abs_e_after_tp = m.max_abs_e_after_tp.max(e);
            if e >= rho {
                m.violations_after_tp += 1;
            }
        }
        if after_ts {
            m.max_abs_e_after_ts = m.max_abs_e_after_ts.max(e);
            if m.settling_value.is_none() {
                m.settling_value = Some(e);
            }
            if e > spec.xi_b {
                m.accuracy_violations += 1;
            }
        }
        if t > t_fault + window + eps_t {
            m.max_abs_e_post_fault = m.max_abs_e_post_fault.max(e);
            let bad = (phi * e >= rho) as usize
                + (after_tp && e >= rho) as usize
                + (after_ts && e > spec.xi_b) as usize;
            m.post_fault_violations += bad;
        }
        if t >= t_fault - eps_t {
            ended_inaccurate = e > spec.xi_b;
            if ended_inaccurate {
                last_inaccurate_post_fault = Some(t);
            }
        }
    }
    let t0 = log.rows.first().map_or(0.0, |r| r[ti]);
    m.time_to_enter_bound = match last_outside {
        None => Some(t0),
        Some(t) => {
            // first sample after the last excursion
            log.rows.iter().map(|r| r[ti]).find(|&s| s > t)
        }
    };
    let t_last = log.rows.last().map_or(0.0, |r| r[ti]);
    if t_last >= t_fault {
        m.post_fault_recovery = match (last_inaccurate_post_fault, ended_inaccurate) {
            (_, true) => None,
            (None, false) => Some(0.0),
            (Some(t), false) => log
                .rows
                .iter()
                .map(|r| r[ti])
                .find(|&s| s > t)
                .map(|s| s - t_fault),
        };
    }
    m
}

pub fn compute_metrics(log: &TrajectoryLog, spec: &MetricSpec) -> Result<RunMetrics> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let peak = |name: &str| log.column(name).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(RunMetrics {
        samples: log.len(),
        t_end: log.rows.last().map_or(0.0, |r| r[col("t")]),
        velocity: channel(log, &spec.velocity, "e_V", "rho_V", "phi_V", spec.t_fault, spec.post_fault_window),
        altitude: channel(log, &spec.altitude, "e_h", "rho_h", "phi_h", spec.t_fault, spec.post_fault_window),
        peak_phi_cmd: peak("Phi_cmd"),
        peak_delta_e_cmd: peak("delta_e_cmd"),
        breach_steps: [0, 0],
        wall_clock_s: 0.0,
    })
}
