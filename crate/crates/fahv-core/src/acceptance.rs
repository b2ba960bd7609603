//! Acceptance suite: numerical checks of the supporting lemmas, the observer
//! and tracker behavior, and closed-loop claims on the nominal scenario.
//!
//! Thresholds labelled "frozen" were fixed from independent reference runs
//! before this module was written and are not tuned against it.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{with_overrides, ScenarioConfig, Variant};
use crate::error::{Error, Result};
use crate::observers::{
    power_sum_sides, smooth_sign_slack, FtNnGains, FtNnObserver, RbfNetwork, SigTracker,
    SigTrackerParams, TANH_SLACK,
};
use crate::ppc::{phi, rho, ErrorTransformConfig};
use crate::sim::{rk4_step, run_scenario, RunOutput, Rk4Workspace};

/// Frozen tolerances of the altitude tracker on `85000 + 40 sin(0.2 t)`.
pub const TRACKER_H_TOL: f64 = 0.44;
pub const TRACKER_RATE_TOL: f64 = 0.088;

/// Frozen band for `|d_hat - d|` on the scalar observer test plant.
pub const OBSERVER_BAND: f64 = 0.1;
/// Frozen settling threshold for `|z - x|` in the observer timing contrast.
pub const OBSERVER_E1_SET: f64 = 0.02;

/// Relative drift allowed when the step size is halved.
pub const DT_DRIFT: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct AcceptanceConfig {
    /// Expected supremum of `(|x| - x tanh(x/l)) / l`.
    pub lemma3_c: f64,
    /// Nominal closed-loop scenario.
    pub scenario: ScenarioConfig,
    pub seed: u64,
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        AcceptanceConfig {
            lemma3_c: TANH_SLACK,
            scenario: ScenarioConfig::default(),
            seed: 7,
        }
    }
}

impl AcceptanceConfig {
    /// Applies `key=value` overrides; `lemma3.c` and `seed` are suite keys,
    /// everything else goes to the scenario.
    pub fn with_overrides(mut self, overrides: &[String]) -> Result<Self> {
        let mut rest = Vec::new();
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("override `{o}` is not key=value")))?;
            let parse = |v: &str| {
                v.trim().parse::<f64>().map_err(|_| Error::validation(k.trim(), "must be a number"))
            };
            match k.trim() {
                "lemma3.c" => self.lemma3_c = parse(v)?,
                "seed" => {
                    self.seed = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::validation("seed", "must be a non-negative integer"))?
                }
                _ => rest.push(o.clone()),
            }
        }
        self.scenario = with_overrides(&self.scenario, &rest)?;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub measured: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag}  {:<5} {}: {}", self.id, self.name, self.measured)
    }
}

#[derive(Debug, Clone, Default)]
pub struct AcceptanceReport {
    pub results: Vec<CriterionResult>,
}

impl AcceptanceReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

impl fmt::Display for AcceptanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(f, "{r}")?;
        }
        let n = self.results.iter().filter(|r| r.passed).count();
        write!(f, "{n}/{} criteria passed", self.results.len())
    }
}

fn result(id: &'static str, name: &'static str, passed: bool, measured: String) -> CriterionResult {
    CriterionResult { id, name, passed, measured }
}

/// Runs every criterion in order.
pub fn run_all(cfg: &AcceptanceConfig) -> AcceptanceReport {
    let mut results = vec![slack_constant(cfg), power_sum_inequality(cfg), transform_endpoints(cfg), reconstruction()];
    results.extend(observer_fixed_time());
    results.extend(closed_loop(cfg));
    AcceptanceReport { results }
}

/// Grid maximum of `(|x| - x tanh(x/l)) / l` over `[-20 l, 20 l]`.
pub fn tanh_slack_peak(l: f64) -> (f64, bool) {
    let n = 400_000;
    let mut peak = 0.0f64;
    let mut positive = true;
    for i in 0..=n {
        let x = -20.0 * l + 40.0 * l * i as f64 / n as f64;
        let s = smooth_sign_slack(x, l);
        peak = peak.max(s / l);
        if x != 0.0 && !(s > 0.0) {
            positive = false;
        }
    }
    (peak, positive)
}

pub fn slack_constant(cfg: &AcceptanceConfig) -> CriterionResult {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut positive = true;
    let mut peaks = Vec::new();
    for l in [0.1, 1.0, 10.0] {
        let (p, pos) = tanh_slack_peak(l);
        worst = worst.max((p - cfg.lemma3_c).abs());
        positive &= pos;
        peaks.push(format!("{p:.6}"));
    }
    let secs = start.elapsed().as_secs_f64();
    result(
        "1",
        "smooth-sign slack constant",
        worst <= 1e-4 && positive && secs < 1.0,
        format!(
            "peaks [{}] vs c = {} (max gap {worst:.2e}, positive {positive}, {secs:.3} s)",
            peaks.join(", "),
            cfg.lemma3_c
        ),
    )
}

pub fn power_sum_inequality(cfg: &AcceptanceConfig) -> CriterionResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut violations = 0;
    let trials = 10_000;
    for _ in 0..trials {
        let n = rng.gen_range(1..=6);
        let a = [0.5, 1.0, 2.0, 3.0][rng.gen_range(0..4)];
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let (lhs, rhs) = power_sum_sides(&x, a);
        if lhs > rhs * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    result(
        "2",
        "power-sum inequality",
        violations == 0 && secs < 1.0,
        format!("{violations} violations in {trials} trials ({secs:.3} s)"),
    )
}

pub fn transform_endpoints(cfg: &AcceptanceConfig) -> CriterionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut configs = vec![
        ErrorTransformConfig::with_t_p(2.5),
        ErrorTransformConfig::with_t_p(5.0),
    ];
    for _ in 0..20 {
        configs.push(ErrorTransformConfig {
            beta: rng.gen_range(0.01..0.99),
            a_exp: rng.gen_range(1.1..4.0),
            mu: rng.gen_range(0.2..3.0),
            t_p: rng.gen_range(0.5..20.0),
        });
    }
    let mut start_err = 0.0f64;
    let mut after_err = 0.0f64;
    let mut gap = 0.0f64;
    for c in &configs {
        start_err = start_err.max((phi(0.0, c) - c.beta).abs());
        for k in [0.0, 1e-6, 0.5, 3.0, 100.0] {
            after_err = after_err.max((phi(c.t_p * (1.0 + k), c) - 1.0).abs());
        }
        gap = gap.max((phi(c.t_p * (1.0 - 1e-12), c) - 1.0).abs());
    }
    result(
        "3",
        "transformation endpoints",
        start_err <= 1e-12 && after_err == 0.0 && gap < 1e-9,
        format!(
            "{} configs: |phi(0) - beta| <= {start_err:.1e}, |phi(t >= T_p) - 1| <= {after_err:.1e}, gap at T_p {gap:.1e}",
            configs.len()
        ),
    )
}

/// Maximum errors of the altitude tracker after a 5 s transient:
/// `(|h_hat - h|, |chi_h - h'|, |gamma_hat - gamma|)`.
pub fn tracker_errors(dt: f64) -> (f64, f64, f64) {
    let p = SigTrackerParams::new(20.0, 1.5);
    let v = 7846.4;
    let h = |t: f64| 85_000.0 + 40.0 * (0.2 * t).sin();
    let h_dot = |t: f64| 8.0 * (0.2 * t).cos();
    let mut x = [h(0.0), 0.0];
    let mut ws = Rk4Workspace::new(2);
    let n = (30.0 / dt).round() as usize;
    let (mut eh, mut ed, mut eg) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..=n {
        let t = k as f64 * dt;
        if t >= 5.0 {
            eh = eh.max((x[0] - h(t)).abs());
            ed = ed.max((x[1] - h_dot(t)).abs());
            eg = eg.max(((x[1] / v).asin() - (h_dot(t) / v).asin()).abs());
        }
        if k == n {
            break;
        }
        rk4_step(&mut x, t, dt, &mut ws, |ts, xs, d| {
            let (a, b) = SigTracker { z1: xs[0], z2: xs[1] }.rhs(&p, h(ts));
            d[0] = a;
            d[1] = b;
            Ok(())
        })
        .expect("tracker rhs is finite");
    }
    (eh, ed, eg)
}

pub fn reconstruction() -> CriterionResult {
    let (eh, ed, eg) = tracker_errors(5e-4);
    // the angle tolerance is the altitude tolerance relative to the altitude
    // amplitude, widened tenfold and rescaled by the flight-path amplitude
    let gamma_amp = (8.0f64 / 7846.4).asin();
    let gamma_tol = 10.0 * TRACKER_H_TOL / 40.0 * gamma_amp;
    result(
        "4",
        "state reconstruction",
        eh < TRACKER_H_TOL && ed < TRACKER_RATE_TOL && eg < gamma_tol,
        format!(
            "|h_hat - h| {eh:.4} < {TRACKER_H_TOL}, |chi_h - h'| {ed:.4} < {TRACKER_RATE_TOL}, |gamma_hat - gamma| {eg:.2e} < {gamma_tol:.2e}"
        ),
    )
}

/// Scalar observer test plant `x' = -x + d`, `d = 2 + sin t`.
#[derive(Debug, Clone, Copy)]
pub struct ObserverTrial {
    pub gains: FtNnGains,
    pub e0: f64,
    pub dt: f64,
    pub duration: f64,
}

impl ObserverTrial {
    pub fn gains() -> FtNnGains {
        FtNnGains {
            l1: 2.0,
            l2: 2.0,
            l3: 1.0,
            k: 1e-3,
            gamma_w: 2000.0,
            alpha1: 0.5,
            beta1: 2.0,
        }
    }

    pub fn new(e0: f64) -> Self {
        ObserverTrial {
            gains: Self::gains(),
            e0,
            dt: 1e-4,
            duration: 15.0,
        }
    }

    /// Sampled `(t, d_hat - d, z - x)`.
    pub fn run(&self) -> Vec<(f64, f64, f64)> {
        let net = RbfNetwork::grid(&[[-1.0, 5.0]], 7, 1.5).expect("valid grid");
        let obs = FtNnObserver::new(self.gains, net);
        let nw = obs.net.len();
        let mut x = vec![0.0; 2 + nw];
        x[1] = self.e0;
        let mut ws = Rk4Workspace::new(x.len());
        let mut scratch = vec![0.0; nw];
        let mut h = vec![0.0; nw];
        let n = (self.duration / self.dt).round() as usize;
        let mut out = Vec::with_capacity(n / 10 + 1);
        let d = |t: f64| 2.0 + t.sin();
        for k in 0..=n {
            let t = k as f64 * self.dt;
            if k % 10 == 0 {
                obs.net.activations(&x[..1], &mut scratch).expect("dims");
                let d_hat: f64 = x[2..].iter().zip(&scratch).map(|(w, h)| w * h).sum();
                out.push((t, d_hat - d(t), x[1] - x[0]));
            }
            if k == n {
                break;
            }
            rk4_step(&mut x, t, self.dt, &mut ws, |ts, xs, dx| {
                let u = -xs[0];
                let (head, w_dot) = dx.split_at_mut(2);
                let ev = obs.rhs(xs[1], &xs[2..], xs[0], u, 0.0, 1.0, &xs[..1], w_dot, &mut h)?;
                head[0] = u + d(ts);
                head[1] = ev.z_dot;
                Ok(())
            })
            .expect("observer rhs is finite");
        }
        out
    }
}

/// First sampled time after which `|v| < band` for every later sample.
pub fn entry_time(samples: &[(f64, f64)], band: f64) -> Option<f64> {
    match samples.iter().rposition(|(_, v)| v.abs() >= band) {
        None => samples.first().map(|s| s.0),
        Some(i) => samples.get(i + 1).map(|s| s.0),
    }
}

pub fn observer_fixed_time() -> Vec<CriterionResult> {
    let start = Instant::now();
    let trials: Vec<_> = [(ObserverTrial::gains(), 1.0), (ObserverTrial::gains(), 100.0)]
        .into_iter()
        .chain({
            let mut g = ObserverTrial::gains();
            g.l1 = 0.0;
            g.l2 = 0.0;
            [(g, 1.0), (g, 100.0)]
        })
        .collect();
    let runs: Vec<_> = trials
        .par_iter()
        .map(|&(gains, e0)| ObserverTrial { gains, ..ObserverTrial::new(e0) }.run())
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let est = |r: &[(f64, f64, f64)]| r.iter().map(|s| (s.0, s.1)).collect::<Vec<_>>();
    let err = |r: &[(f64, f64, f64)]| r.iter().map(|s| (s.0, s.2)).collect::<Vec<_>>();
    let bound = ObserverTrial::gains().settling_bound(0.5).expect("valid gains");
    let t_small = entry_time(&est(&runs[0]), OBSERVER_BAND);
    let t_large = entry_time(&est(&runs[1]), OBSERVER_BAND);
    let show = |t: Option<f64>| t.map_or("never".to_string(), |t| format!("{t:.3} s"));
    let a_ok = matches!((t_small, t_large), (Some(a), Some(b)) if a < bound && b < bound);
    let ratio = match (t_small, t_large) {
        (Some(a), Some(b)) if a > 0.0 => b / a,
        _ => f64::INFINITY,
    };
    let e1 = |r: &[(f64, f64, f64)]| entry_time(&err(r), OBSERVER_E1_SET);
    let e1_ratio = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) if a > 0.0 => b / a,
        _ => f64::INFINITY,
    };
    let ft = e1_ratio(e1(&runs[0]), e1(&runs[1]));
    let exp = e1_ratio(e1(&runs[2]), e1(&runs[3]));
    vec![
        result(
            "5a",
            "observer settles before the fixed-time bound",
            a_ok && secs < 10.0,
            format!(
                "|d_hat - d| < {OBSERVER_BAND} from {} (e0 = 1) and {} (e0 = 100); bound {bound:.3} s ({secs:.2} s)",
                show(t_small),
                show(t_large)
            ),
        ),
        result(
            "5b",
            "observer settling insensitive to initial error",
            ratio < 2.0 && ft < exp,
            format!(
                "entry-time ratio {ratio:.3} < 2; |z - x| < {OBSERVER_E1_SET} ratio {ft:.3} vs exponential-only {exp:.3}"
            ),
        ),
    ]
}

fn nominal_tail(out: &RunOutput) -> String {
    match &out.failure {
        None => String::new(),
        Some(e) => format!(" [run ended: {e}]"),
    }
}

fn completed(out: &RunOutput, duration: f64) -> bool {
    out.failure.is_none()
        && out.metrics.as_ref().is_some_and(|m| (m.t_end - duration).abs() < 1e-6)
}

/// Initial altitude errors of the independence sweep.
pub const SWEEP_H_ERRORS: [f64; 3] = [40.0, 400.0, 4000.0];

pub fn closed_loop(cfg: &AcceptanceConfig) -> Vec<CriterionResult> {
    let nominal = cfg.scenario.clone();
    let mut half = nominal.clone();
    half.dt /= 2.0;
    let mut jobs = vec![nominal.clone(), nominal.clone(), half];
    for e in SWEEP_H_ERRORS {
        let mut p = nominal.clone();
        p.initial.h_error = e;
        p.transform.altitude.auto_beta = true;
        let mut b = p.clone();
        b.variant = Variant::Baseline;
        jobs.push(p);
        jobs.push(b);
    }
    let runs: Vec<Result<RunOutput>> = jobs.par_iter().map(run_scenario).collect();
    let mut out = Vec::new();

    let run0 = match &runs[0] {
        Ok(r) => r,
        Err(e) => {
            out.push(result("6", "nominal scenario", false, format!("could not start: {e}")));
            return out;
        }
    };
    let tail = nominal_tail(run0);
    let m = run0.metrics.clone().unwrap_or_default();
    let (v, h) = (&m.velocity, &m.altitude);
    out.push(result(
        "6a",
        "transformed error inside envelope",
        v.transformed_violations + h.transformed_violations == 0,
        format!(
            "{} + {} violations up to t = {:.2} s{tail}",
            v.transformed_violations, h.transformed_violations, m.t_end
        ),
    ));
    out.push(result(
        "6b",
        "tracking error inside envelope after T_p",
        v.violations_after_tp + h.violations_after_tp == 0,
        format!(
            "{} + {} violations up to t = {:.2} s",
            v.violations_after_tp, h.violations_after_tp, m.t_end
        ),
    ));
    out.push(result(
        "6c",
        "appointed accuracy after T_s",
        v.accuracy_violations + h.accuracy_violations == 0,
        format!(
            "max |e_V| {:.4} <= {}, max |e_h| {:.4} <= {} up to t = {:.2} s",
            v.max_abs_e_after_ts,
            nominal.performance.velocity.xi_b,
            h.max_abs_e_after_ts,
            nominal.performance.altitude.xi_b,
            m.t_end
        ),
    ));
    let done = completed(run0, nominal.duration);
    out.push(result(
        "6d",
        "claims hold after the fault",
        done && v.post_fault_violations + h.post_fault_violations == 0,
        format!(
            "reached t = {:.2} s of {}; {} + {} violations, max |e_V| {:.4}, max |e_h| {:.4}{tail}",
            m.t_end,
            nominal.duration,
            v.post_fault_violations,
            h.post_fault_violations,
            v.max_abs_e_post_fault,
            h.max_abs_e_post_fault
        ),
    ));
    out.push(result(
        "6e",
        "nominal run completes within the time budget",
        done && m.wall_clock_s < 60.0,
        format!("t_end {:.2} s, wall clock {:.2} s < 60 s", m.t_end, m.wall_clock_s),
    ));

    // initial-error independence
    let mut ok = true;
    let mut cells = Vec::new();
    for (i, e) in SWEEP_H_ERRORS.iter().enumerate() {
        let (p, b) = (&runs[3 + 2 * i], &runs[4 + 2 * i]);
        let rho0 = rho(0.0, &nominal.performance.altitude) * nominal.baseline.xi_a_scale;
        let p_ok = match p {
            Ok(r) => {
                completed(r, nominal.duration)
                    && r.metrics.as_ref().is_some_and(|m| {
                        m.velocity.transformed_violations + m.altitude.transformed_violations == 0
                    })
            }
            Err(_) => false,
        };
        let breached = matches!(b, Ok(r) if matches!(r.failure, Some(Error::BoundBreach { .. })));
        let b_ok = e.abs() < rho0 || breached;
        ok &= p_ok && b_ok;
        let why = match p {
            Ok(r) => r.failure.as_ref().map_or("ok".to_string(), |f| f.to_string()),
            Err(e) => e.to_string(),
        };
        cells.push(format!(
            "e_h(0) = {e}: proposed {} ({why}), baseline breach {breached}",
            if p_ok { "pass" } else { "fail" },
        ));
    }
    out.push(result("7", "initial-error independence", ok, cells.join("; ")));

    // integrator order and step-size robustness
    let ratio = decay_error_ratio();
    let drift = match (&runs[0], &runs[2]) {
        (Ok(a), Ok(b)) => {
            let (ma, mb) = (a.metrics.clone().unwrap_or_default(), b.metrics.clone().unwrap_or_default());
            let rel = |x: f64, y: f64| if x == 0.0 && y == 0.0 { 0.0 } else { (x - y).abs() / x.abs().max(y.abs()) };
            let pairs = [
                ("max|e_V|", ma.velocity.max_abs_e, mb.velocity.max_abs_e),
                ("max|e_h|", ma.altitude.max_abs_e, mb.altitude.max_abs_e),
                ("max|e_V| after T_p", ma.velocity.max_abs_e_after_tp, mb.velocity.max_abs_e_after_tp),
                ("max|e_h| after T_p", ma.altitude.max_abs_e_after_tp, mb.altitude.max_abs_e_after_tp),
            ];
            let worst = pairs.iter().map(|p| rel(p.1, p.2)).fold(0.0, f64::max);
            let text = pairs
                .iter()
                .map(|p| format!("{} {:.3}%", p.0, 100.0 * rel(p.1, p.2)))
                .collect::<Vec<_>>()
                .join(", ");
            let same_end = (ma.t_end - mb.t_end).abs() < 1e-6;
            let text = format!("{text}; t_end {:.2} s vs {:.2} s", ma.t_end, mb.t_end);
            (worst < DT_DRIFT && same_end, text)
        }
        _ => (false, "run failed to start".to_string()),
    };
    out.push(result(
        "8",
        "integrator order and step-size robustness",
        (12.0..=20.0).contains(&ratio) && drift.0,
        format!("error ratio {ratio:.3} in [12, 20]; drift under dt/2: {}", drift.1),
    ));

    let same = match (&runs[0], &runs[1]) {
        (Ok(a), Ok(b)) => a.log.to_csv() == b.log.to_csv(),
        _ => false,
    };
    out.push(result(
        "9",
        "determinism",
        same,
        format!("repeated nominal CSVs identical: {same}"),
    ));
    out
}

/// Endpoint-error ratio of RK4 on `x' = -x` over `[0, 1]` when `dt` halves.
pub fn decay_error_ratio() -> f64 {
    let err = |dt: f64| {
        let mut ws = Rk4Workspace::new(1);
        let mut x = [1.0];
        let n = (1.0 / dt).round() as usize;
        for k in 0..n {
            rk4_step(&mut x, k as f64 * dt, dt, &mut ws, |_, x, d| {
                d[0] = -x[0];
                Ok(())
            })
            .expect("finite");
        }
        (x[0] - (-1.0f64).exp()).abs()
    };
    err(0.1) / err(0.05)
}
