//! Closed-loop simulation: one coupled RK4 state vector for the plant, the
//! trackers, the observers and the command filters.

pub mod log;
pub mod metrics;
pub mod reference;
pub mod rk4;

use std::time::Instant;

use crate::config::{ScenarioConfig, Variant};
use crate::controller::{
    command_filter_rhs, CommandFilterState, Controller, ControllerInputs, ControllerOutput,
};
use crate::error::{Error, Result};
use crate::model::{
    apply_fault, disturbance_at, dynamics_rhs, eval_aero, trim_theta, AeroCoefficients,
    AeroModel, Channel, ControlCommand, PerChannel, VehicleState,
};
use crate::observers::{
    reconstruct_angles, FtNnObserver, RbfNetwork, SigTracker,
};
use crate::ppc::{beta_for_initial_error, rho, PerformanceFunction, PpcChannel};

pub use log::{TrajectoryLog, COLUMNS};
pub use metrics::{compute_metrics, ChannelMetrics, ChannelSpec, MetricSpec, RunMetrics};
pub use reference::{reference_at, Reference};
pub use rk4::{rk4_step, Rk4Workspace};

/// Largest magnitude any state may reach before the run is declared divergent.
const STATE_LIMIT: f64 = 1e9;

/// Settling allowance after the fault used by the post-fault metrics.
pub const POST_FAULT_WINDOW: f64 = 5.0;

#[derive(Debug, Clone, Copy)]
struct Layout {
    tracker_h: usize,
    tracker_gamma: usize,
    z: usize,
    weights: [usize; 5],
    filters: usize,
    dim: usize,
}

impl Layout {
    fn new(sizes: [usize; 5]) -> Self {
        let tracker_h = VehicleState::DIM;
        let tracker_gamma = tracker_h + 2;
        let z = tracker_gamma + 2;
        let mut weights = [0; 5];
        let mut next = z + 5;
        for (w, n) in weights.iter_mut().zip(sizes) {
            *w = next;
            next += n;
        }
        Layout {
            tracker_h,
            tracker_gamma,
            z,
            weights,
            filters: next,
            dim: next + 3,
        }
    }
}

/// Values held constant over one integration step.
#[derive(Debug, Clone, Copy, Default)]
struct Held {
    command: ControlCommand,
    /// `gamma_bar, theta_bar, Q_bar` feeding the command filters.
    virtuals: [f64; 3],
}

/// Quantities reconstructed from the integrated state at one instant.
#[derive(Debug, Clone, Copy)]
struct Snapshot {
    plant: VehicleState,
    reference: Reference,
    chi_h: f64,
    gamma_hat: f64,
    alpha_hat: f64,
    nominal: AeroCoefficients,
    d_hat: PerChannel<f64>,
    /// Observed signal per channel.
    x_obs: PerChannel<f64>,
    /// Input-side signal per channel.
    xbar: PerChannel<f64>,
}

/// Prepared scenario ready to integrate.
pub struct Simulation {
    cfg: ScenarioConfig,
    true_model: AeroModel,
    controller: Controller,
    observers: PerChannel<FtNnObserver>,
    layout: Layout,
}

/// Result of a run: the (possibly partial) log, metrics and the terminating error.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub metrics: Option<RunMetrics>,
    pub failure: Option<Error>,
}

impl RunOutput {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let cfg = cfg.clone();
        let true_model = cfg.model.scaled(&cfg.uncertainty);
        let r0 = reference_at(0.0, &cfg.reference);
        let e0 = [cfg.initial.v_error, cfg.initial.h_error];
        let mk = |channel: Channel,
                  idx: usize,
                  tr: &crate::config::TransformSettings,
                  pf: &PerformanceFunction| {
            match cfg.variant {
                Variant::Proposed => {
                    let mut c = tr.config();
                    if tr.auto_beta {
                        c.beta = c.beta.min(beta_for_initial_error(e0[idx], rho(0.0, pf)));
                    }
                    PpcChannel::new(channel, Some(c), *pf)
                }
                Variant::Baseline => {
                    let mut pf = *pf;
                    pf.xi_a *= cfg.baseline.xi_a_scale;
                    if pf.xi_a <= pf.xi_b {
                        pf.xi_a = pf.xi_b * (1.0 + 1e-6);
                    }
                    PpcChannel::new(channel, None, pf)
                }
            }
        };
        let ppc_v = mk(Channel::V, 0, &cfg.transform.velocity, &cfg.performance.velocity);
        let ppc_h = mk(Channel::H, 1, &cfg.transform.altitude, &cfg.performance.altitude);
        let controller = Controller {
            gains: cfg.gains,
            ppc_v,
            ppc_h,
            strict: cfg.strict || cfg.variant == Variant::Baseline,
            gain_floor: cfg.model.g_floor,
        };
        let n = &cfg.observers.network;
        let net = |ranges: &[[f64; 2]]| RbfNetwork::grid(ranges, n.nodes_per_dim, n.width_factor);
        let g = &cfg.observers.gains;
        let observers = PerChannel {
            v: FtNnObserver::new(g.v, net(&[n.v_range])?),
            h: FtNnObserver::new(g.h, net(&[n.v_range, n.gamma_range])?),
            gamma: FtNnObserver::new(g.gamma, net(&[n.v_range, n.gamma_range, n.theta_range])?),
            theta: FtNnObserver::new(g.theta, net(&[n.v_range, n.gamma_range, n.theta_range])?),
            q: FtNnObserver::new(
                g.q,
                net(&[n.v_range, n.gamma_range, n.theta_range, n.q_range])?,
            ),
        };
        let layout = Layout::new([
            observers.v.net.len(),
            observers.h.net.len(),
            observers.gamma.net.len(),
            observers.theta.net.len(),
            observers.q.net.len(),
        ]);
        let _ = r0;
        Ok(Simulation {
            cfg,
            true_model,
            controller,
            observers,
            layout,
        })
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn state_dim(&self) -> usize {
        self.layout.dim
    }

    fn initial_state(&self) -> Result<Vec<f64>> {
        let cfg = &self.cfg;
        let l = &self.layout;
        let r0 = reference_at(0.0, &cfg.reference);
        let v = r0.v_d + cfg.initial.v_error;
        let h = r0.h_d + cfg.initial.h_error;
        let theta = if cfg.initial.trim_theta {
            trim_theta(&cfg.model, v, h, cfg.initial.gamma)?
        } else {
            cfg.initial.theta
        };
        let plant = VehicleState {
            v,
            h,
            gamma: cfg.initial.gamma,
            theta,
            q: cfg.initial.q,
            eta: [0.0; 6],
        };
        let mut x = vec![0.0; l.dim];
        plant.write_to(&mut x[..VehicleState::DIM]);
        // trackers start on their measurements with the exact rate
        let e_h_rate = v * plant.gamma.sin() - r0.h_d_dot;
        x[l.tracker_h] = h - r0.h_d;
        x[l.tracker_h + 1] = e_h_rate;
        let (gamma_hat, _) = reconstruct_angles(e_h_rate + r0.h_d_dot, v, theta)?;
        x[l.tracker_gamma] = gamma_hat;
        x[l.z] = v;
        x[l.z + 1] = h;
        x[l.z + 2] = gamma_hat;
        x[l.z + 3] = theta;
        x[l.z + 4] = plant.q;
        // filters start on their virtual commands; gamma_bar needs no filter state,
        // theta_bar needs x_1d, Q_bar needs x_1d and x_2d
        for i in 0..3 {
            let snap = self.snapshot(0.0, &x, &Held::default(), None)?;
            let out = self.control_unchecked(0.0, &x, &snap)?;
            x[l.filters + i] = [out.diag.gamma_bar, out.diag.theta_bar, out.diag.q_bar][i];
        }
        Ok(x)
    }

    /// Reconstructs the measured and estimated signals; with `deriv`, also
    /// writes the full state derivative under the held commands.
    fn snapshot(
        &self,
        t: f64,
        x: &[f64],
        held: &Held,
        deriv: Option<&mut [f64]>,
    ) -> Result<Snapshot> {
        let l = &self.layout;
        let cfg = &self.cfg;
        let plant = VehicleState::read_from(&x[..VehicleState::DIM]);
        let reference = reference_at(t, &cfg.reference);

        let th = SigTracker {
            z1: x[l.tracker_h],
            z2: x[l.tracker_h + 1],
        };
        let chi_h = th.z2 + reference.h_d_dot;
        let (gamma_hat, alpha_hat) = reconstruct_angles(chi_h, plant.v, plant.theta)?;
        let tg = SigTracker {
            z1: x[l.tracker_gamma],
            z2: x[l.tracker_gamma + 1],
        };

        let recon = VehicleState {
            gamma: gamma_hat,
            eta: [0.0; 6],
            ..plant
        };
        let nominal = eval_aero(&recon, &cfg.model)?;
        let limits = &cfg.actuator;
        let clamped = limits.clamp(held.command.phi_d, held.command.delta_ed);

        let x_obs = PerChannel {
            v: plant.v,
            h: plant.h,
            gamma: gamma_hat,
            theta: plant.theta,
            q: plant.q,
        };
        let xbar = PerChannel {
            v: clamped.phi,
            h: gamma_hat,
            gamma: plant.theta,
            theta: plant.q,
            q: clamped.delta_e,
        };
        let (v, gh, th_, q) = (plant.v, gamma_hat, plant.theta, plant.q);
        let inputs: PerChannel<&[f64]> = PerChannel {
            v: &[v],
            h: &[v, gh],
            gamma: &[v, gh, th_],
            theta: &[v, gh, th_],
            q: &[v, gh, th_, q],
        };
        let f_nom = PerChannel {
            h: 0.0,
            ..nominal.f
        };

        let mut d_hat = PerChannel::splat(0.0);
        let max_nw = Channel::ALL
            .iter()
            .map(|&ch| self.observers.get(ch).net.len())
            .max()
            .unwrap_or(0);
        let mut scratch = vec![0.0; max_nw];
        let mut wd_buf = vec![0.0; max_nw];
        let mut deriv = deriv;
        for (idx, ch) in Channel::ALL.into_iter().enumerate() {
            let obs = self.observers.get(ch);
            let nw = obs.net.len();
            let w0 = l.weights[idx];
            let wd: &mut [f64] = match deriv.as_deref_mut() {
                Some(dx) => &mut dx[w0..w0 + nw],
                None => &mut wd_buf[..nw],
            };
            let ev = obs.rhs(
                x[l.z + idx],
                &x[w0..w0 + nw],
                *x_obs.get(ch),
                *xbar.get(ch),
                *f_nom.get(ch),
                *nominal.g.get(ch),
                inputs.get(ch),
                wd,
                &mut scratch[..nw],
            )?;
            *d_hat.get_mut(ch) = ev.d_hat;
            if let Some(dx) = deriv.as_deref_mut() {
                dx[l.z + idx] = ev.z_dot;
            }
        }

        if let Some(dx) = deriv {
            let obs = &cfg.observers;
            let (a, b) = th.rhs(&obs.tracker_h, plant.h - reference.h_d);
            dx[l.tracker_h] = a;
            dx[l.tracker_h + 1] = b;
            let (a, b) = tg.rhs(&obs.tracker_gamma, gamma_hat);
            dx[l.tracker_gamma] = a;
            dx[l.tracker_gamma + 1] = b;

            let input = apply_fault(held.command, &cfg.fault, limits, t);
            let d = disturbance_at(&cfg.disturbance, t);
            let pd = dynamics_rhs(&plant, input, &d, &self.true_model, cfg.plant)?;
            pd.write_to(&mut dx[..VehicleState::DIM]);

            let gs = &cfg.gains;
            let widths = gs.filter_widths();
            for i in 0..3 {
                let y = x[l.filters + i] - held.virtuals[i];
                dx[l.filters + i] = command_filter_rhs(y, gs.tau[i], gs.r, widths[i]);
            }
        }

        Ok(Snapshot {
            plant,
            reference,
            chi_h,
            gamma_hat,
            alpha_hat,
            nominal,
            d_hat,
            x_obs,
            xbar,
        })
    }

    fn control(&self, t: f64, x: &[f64], snap: &Snapshot) -> Result<ControllerOutput> {
        let out = self.control_unchecked(t, x, snap)?;
        out.diag.check(t)?;
        Ok(out)
    }

    fn control_unchecked(&self, t: f64, x: &[f64], snap: &Snapshot) -> Result<ControllerOutput> {
        let l = &self.layout;
        let p = &snap.plant;
        self.controller.evaluate(&ControllerInputs {
            t,
            v: p.v,
            h: p.h,
            gamma_hat: snap.gamma_hat,
            theta: p.theta,
            q: p.q,
            v_d: snap.reference.v_d,
            v_d_dot: snap.reference.v_d_dot,
            h_d: snap.reference.h_d,
            h_d_dot: snap.reference.h_d_dot,
            aero: snap.nominal,
            d_hat: snap.d_hat,
            filters: CommandFilterState {
                x_d: [x[l.filters], x[l.filters + 1], x[l.filters + 2]],
            },
        })
    }

    /// True lumped disturbance of each observed channel: `x' - f - g xbar`.
    fn lumped(&self, snap: &Snapshot, dx: &[f64]) -> PerChannel<f64> {
        let l = &self.layout;
        let v = snap.plant.v;
        let v_dot = dx[0];
        let chi_dot = dx[l.tracker_h + 1] + snap.reference.h_d_ddot;
        let gamma_hat_dot =
            (chi_dot / v - snap.chi_h * v_dot / (v * v)) / snap.gamma_hat.cos();
        let rates = PerChannel {
            v: v_dot,
            h: dx[1],
            gamma: gamma_hat_dot,
            theta: dx[3],
            q: dx[4],
        };
        PerChannel::from_fn(|ch| {
            let f = if ch == Channel::H { 0.0 } else { *snap.nominal.f.get(ch) };
            rates.get(ch) - f - snap.nominal.g.get(ch) * snap.xbar.get(ch)
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn log_row(
        &self,
        t: f64,
        x: &[f64],
        snap: &Snapshot,
        out: &ControllerOutput,
        dx: &[f64],
    ) -> [f64; log::N_COLUMNS] {
        let l = &self.layout;
        let p = &snap.plant;
        let c = &self.controller;
        let eff = apply_fault(out.command, &self.cfg.fault, &self.cfg.actuator, t);
        let d = self.lumped(snap, dx);
        let dg = &out.diag;
        let (rho_v, rho_h) = (c.ppc_v.rho(t), c.ppc_h.rho(t));
        let (phi_v, phi_h) = (c.ppc_v.phi(t), c.ppc_h.phi(t));
        let e_v = p.v - snap.reference.v_d;
        let e_h = p.h - snap.reference.h_d;
        let tp_v = c.ppc_v.t_p();
        let tp_h = c.ppc_h.t_p();
        let viol = |e: f64, phi: f64, rho: f64, tp: f64| -> f64 {
            ((phi * e).abs() >= rho || (t > tp && e.abs() >= rho)) as u8 as f64
        };
        let _ = &snap.x_obs;
        [
            t,
            p.v,
            p.h,
            p.gamma,
            p.theta,
            p.q,
            snap.gamma_hat,
            snap.alpha_hat,
            e_v,
            e_h,
            rho_v,
            rho_h,
            phi_v,
            phi_h,
            out.command.phi_d,
            out.command.delta_ed,
            eff.phi,
            eff.delta_e,
            snap.d_hat.v,
            snap.d_hat.h,
            snap.d_hat.gamma,
            snap.d_hat.theta,
            snap.d_hat.q,
            d.v,
            d.h,
            d.gamma,
            d.theta,
            d.q,
            p.alpha(),
            snap.reference.v_d,
            snap.reference.h_d,
            x[l.tracker_h] + snap.reference.h_d,
            snap.chi_h,
            x[l.tracker_gamma],
            x[l.tracker_gamma + 1],
            dg.eps_v.epsilon,
            dg.eps_h.epsilon,
            dg.eps_v.xi,
            dg.eps_h.xi,
            dg.e_gamma,
            dg.e_theta,
            dg.e_q,
            dg.y[0],
            dg.y[1],
            dg.y[2],
            dg.gamma_bar,
            dg.theta_bar,
            dg.q_bar,
            x[l.filters],
            x[l.filters + 1],
            x[l.filters + 2],
            p.eta[0],
            p.eta[2],
            p.eta[4],
            viol(e_v, phi_v, rho_v, tp_v),
            viol(e_h, phi_h, rho_h, tp_h),
        ]
    }

    pub fn metric_spec(&self) -> MetricSpec {
        let c = &self.controller;
        let spec = |ch: &PpcChannel| ChannelSpec {
            t_p: ch.t_p(),
            t_s: ch.performance.t_s,
            xi_b: ch.performance.xi_b,
        };
        MetricSpec {
            velocity: spec(&c.ppc_v),
            altitude: spec(&c.ppc_h),
            t_fault: self.cfg.fault.t_fault,
            post_fault_window: POST_FAULT_WINDOW,
        }
    }

    /// Integrates the scenario; failures end the run but keep the partial log.
    pub fn run(&self) -> RunOutput {
        let start = Instant::now();
        let mut log = TrajectoryLog::default();
        let mut breach_steps = [0usize; 2];
        let failure = self.integrate(&mut log, &mut breach_steps).err();
        let metrics = compute_metrics(&log, &self.metric_spec()).ok().map(|mut m| {
            m.breach_steps = breach_steps;
            m.wall_clock_s = start.elapsed().as_secs_f64();
            m
        });
        RunOutput {
            log,
            metrics,
            failure,
        }
    }

    fn integrate(&self, log: &mut TrajectoryLog, breach_steps: &mut [usize; 2]) -> Result<()> {
        let cfg = &self.cfg;
        let dt = cfg.dt;
        let n_steps = (cfg.duration / dt).round() as usize;
        let decimation = ((cfg.log_interval / dt).round() as usize).max(1);
        let mut x = self.initial_state()?;
        let mut ws = Rk4Workspace::new(self.layout.dim);
        let mut dx = vec![0.0; self.layout.dim];

        for k in 0..=n_steps {
            let t = k as f64 * dt;
            let snap = self.snapshot(t, &x, &Held::default(), None)?;
            let out = self.control(t, &x, &snap)?;
            for (count, hit) in breach_steps.iter_mut().zip(out.breach) {
                *count += hit as usize;
            }
            let held = Held {
                command: out.command,
                virtuals: [out.diag.gamma_bar, out.diag.theta_bar, out.diag.q_bar],
            };
            if k % decimation == 0 || k == n_steps {
                let snap = self.snapshot(t, &x, &held, Some(&mut dx))?;
                log.push(self.log_row(t, &x, &snap, &out, &dx));
            }
            if k == n_steps {
                break;
            }
            rk4_step(&mut x, t, dt, &mut ws, |ts, xs, d| {
                self.snapshot(ts, xs, &held, Some(d)).map(|_| ())
            })?;
            if let Some(i) = x.iter().position(|v| !(v.abs() < STATE_LIMIT)) {
                return Err(Error::Divergence {
                    t: t + dt,
                    signal: "state",
                    value: x[i],
                });
            }
        }
        Ok(())
    }
}

/// Builds and runs a scenario.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    Ok(Simulation::new(cfg)?.run())
}
