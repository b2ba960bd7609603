//! Figure layouts for single runs and proposed-vs-baseline comparisons.

use fahv_core::sim::TrajectoryLog;

use crate::plot::{Figure, Panel, Series, PALETTE};

fn neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

fn deg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.to_degrees()).collect()
}

fn error_panel(log: &TrajectoryLog, e: &str, rho: &str, title: &str, unit: &str) -> Panel {
    let t = log.column("t");
    let r = log.column(rho);
    Panel::new(title, unit)
        .with(Series::new(e, t.clone(), log.column(e), PALETTE[0]))
        .with(Series::new(format!("+{rho}"), t.clone(), r.clone(), PALETTE[1]).dashed())
        .with(Series::new(format!("-{rho}"), t, neg(&r), PALETTE[1]).dashed())
}

/// The four standard plots of a run, keyed by file name.
pub fn run_figures(log: &TrajectoryLog) -> Vec<(&'static str, Figure)> {
    let t = log.column("t");
    let s = |label: &str, col: &str, k: usize| Series::new(label, t.clone(), log.column(col), PALETTE[k]);
    let sd = |label: &str, col: &str, k: usize| {
        Series::new(label, t.clone(), deg(&log.column(col)), PALETTE[k])
    };

    let errors = Figure::new("Tracking errors and performance envelopes", "t (s)")
        .with(error_panel(log, "e_V", "rho_V", "velocity error", "ft/s"))
        .with(error_panel(log, "e_h", "rho_h", "altitude error", "ft"));

    let commands = Figure::new("Tracking and control inputs", "t (s)")
        .with(Panel::new("velocity", "ft/s").with(s("V", "V", 0)).with(s("V_d", "V_d", 1).dashed()))
        .with(Panel::new("altitude", "ft").with(s("h", "h", 0)).with(s("h_d", "h_d", 1).dashed()))
        .with(
            Panel::new("fuel equivalence ratio", "-")
                .with(s("Phi cmd", "Phi_cmd", 0))
                .with(s("Phi eff", "Phi_eff", 2).dashed()),
        )
        .with(
            Panel::new("elevator", "deg")
                .with(sd("delta cmd", "delta_e_cmd", 0))
                .with(sd("delta eff", "delta_e_eff", 2).dashed()),
        );

    let mut dist = Figure::new("Lumped disturbances and estimates", "t (s)");
    for (ch, unit) in [
        ("V", "ft/s^2"),
        ("h", "ft/s"),
        ("gamma", "rad/s"),
        ("theta", "rad/s"),
        ("Q", "rad/s^2"),
    ] {
        dist = dist.with(
            Panel::new(format!("{ch} channel"), unit)
                .with(s(&format!("d_{ch}"), &format!("d_{ch}"), 0))
                .with(s(&format!("dhat_{ch}"), &format!("dhat_{ch}"), 1).dashed()),
        );
    }

    let angles = Figure::new("Reconstructed flight-path angle and angle of attack", "t (s)")
        .with(
            Panel::new("flight-path angle", "deg")
                .with(sd("gamma", "gamma", 0))
                .with(sd("gamma_hat", "gamma_hat", 1).dashed()),
        )
        .with(
            Panel::new("angle of attack", "deg")
                .with(sd("alpha", "alpha", 0))
                .with(sd("alpha_hat", "alpha_hat", 1).dashed()),
        );

    vec![
        ("errors.svg", errors),
        ("commands.svg", commands),
        ("disturbances.svg", dist),
        ("angles.svg", angles),
    ]
}

/// Overlay of the proposed and baseline tracking errors.
pub fn compare_figures(proposed: &TrajectoryLog, baseline: &TrajectoryLog) -> Vec<(&'static str, Figure)> {
    let panel = |e: &str, rho: &str, title: &str, unit: &str| {
        let mut p = Panel::new(title, unit);
        for (log, name, k) in [(proposed, "proposed", 0), (baseline, "baseline", 2)] {
            if log.is_empty() {
                continue;
            }
            let t = log.column("t");
            let r = log.column(rho);
            p = p
                .with(Series::new(format!("{e} {name}"), t.clone(), log.column(e), PALETTE[k]))
                .with(Series::new(format!("rho {name}"), t.clone(), r.clone(), PALETTE[k + 1]).dashed())
                .with(Series::new(format!("-rho {name}"), t, neg(&r), PALETTE[k + 1]).dashed());
        }
        p
    };
    vec![(
        "compare_errors.svg",
        Figure::new("Proposed vs baseline tracking errors", "t (s)")
            .with(panel("e_V", "rho_V", "velocity error", "ft/s"))
            .with(panel("e_h", "rho_h", "altitude error", "ft")),
    )]
}
