//! Acceptance suite: one pass/fail line per criterion, fixed tolerances.

use std::f64::consts::{PI, SQRT_2};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use shockform::cartesian;
use shockform::diagnostics::{self, RunSummary};
use shockform::scenario::{burgers_sine, coupled_ripple, ScenarioConfig, Simulation};
use shockform::sweep::{self, SweepParameter};
use shockform::StopReason;

struct Run {
    name: String,
    sim: Simulation,
    elapsed: Duration,
}

impl Run {
    fn new(cfg: &ScenarioConfig) -> Self {
        let start = Instant::now();
        let sim = cfg.simulate().unwrap_or_else(|e| panic!("{}: {e}", cfg.name));
        Self {
            name: cfg.name.clone(),
            sim,
            elapsed: start.elapsed(),
        }
    }

    fn summary(&self) -> &RunSummary {
        &self.sim.output.summary
    }
}

/// Exact first crossing time of `κ sin(2πx)` characteristics with speed `1 + Ψ`.
fn crossing_time(kappa: f64) -> f64 {
    1.0 / (2.0 * PI * kappa)
}

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: usize, title: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!(
            "criterion {id} [{}] {title}: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
}

fn lifespan(r: &mut Report) {
    let mut ok = true;
    let mut detail = Vec::new();
    for kappa in [0.05, 0.1, 0.2] {
        let run = Run::new(&burgers_sine(kappa, 512));
        let s = run.summary();
        let exact = crossing_time(kappa);
        let gap = s.lifespan.t_extrapolated.map_or(f64::INFINITY, |t| (t - exact).abs() / exact);
        ok &= s.stop_reason == StopReason::MuFloor && gap < 0.01 && run.elapsed.as_secs_f64() < 10.0;
        detail.push(format!("kappa={kappa} gap={gap:.2e} {:.2}s", run.elapsed.as_secs_f64()));
    }
    let exact = crossing_time(0.1);
    let gaps: Vec<f64> = [128, 256, 512]
        .into_iter()
        .map(|nu| {
            let run = Run::new(&burgers_sine(0.1, nu));
            run.summary()
                .lifespan
                .t_extrapolated
                .map_or(f64::INFINITY, |t| (t - exact).abs() / exact)
        })
        .collect();
    for w in gaps.windows(2) {
        let ratio = w[0] / w[1];
        ok &= ratio >= 4.0;
        detail.push(format!("refinement ratio={ratio:.3}"));
    }
    r.line(1, "lifespan formula", ok, detail.join(", "));
}

fn sharp_mu(r: &mut Report, plane: &Run, perturbed: &[&Run]) {
    let res = plane.summary().sharp_mu.fit_residual;
    let mut ok = res <= 1e-10;
    let mut detail = vec![format!("{} affine residual={res:.2e}", plane.name)];
    for run in perturbed {
        let s = run.summary();
        let bound = 10.0 * s.data_size.eps0_proxy;
        ok &= s.sharp_mu.slope_drift <= bound;
        detail.push(format!(
            "{} slope drift={:.2e} bound={bound:.2e}",
            run.name, s.sharp_mu.slope_drift
        ));
    }
    r.line(2, "sharp mu behavior", ok, detail.join(", "));
}

fn certificate(r: &mut Report, shock_runs: &[&Run]) {
    let mut ok = true;
    let mut detail = Vec::new();
    for run in shock_runs {
        let c = &run.summary().certificate;
        ok &= c.evaluated > 0 && c.violations() == 0;
        detail.push(format!(
            "{} nodes={} violations={} min mu|X psi|={:.3} (>= {:.3}) max G Xb psi={:.3} (< {:.3})",
            run.name,
            c.evaluated,
            c.violations(),
            c.min_rate,
            c.threshold_rate,
            c.max_g_xb_psi,
            c.threshold_g
        ));
    }
    r.line(3, "blowup-rate certificate", ok, detail.join("; "));
}

fn regularity(r: &mut Report, coupled: &[&Run]) {
    let mut ok = true;
    let mut detail = Vec::new();
    for run in coupled {
        let g = &run.summary().growth;
        ok &= g.d1_psi >= 10.0 && g.v <= 2.0 && g.vgrad <= 2.0;
        detail.push(format!(
            "{} growth d1 psi={:.1} v={:.3} V={:.3}",
            run.name, g.d1_psi, g.v, g.vgrad
        ));
    }
    r.line(4, "regularity split", ok, detail.join("; "));
}

fn jacobian(r: &mut Report, runs: &[&Run]) {
    let (mut lo, mut hi, mut mu_min) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    for run in runs {
        for snap in &run.sim.output.snapshots {
            let j = diagnostics::jacobian_mu_ratio(&run.sim.system, snap);
            lo = lo.min(j.min);
            hi = hi.max(j.max);
            mu_min = mu_min.min(snap.mu_star());
        }
        let s = run.summary();
        lo = lo.min(s.jacobian_min);
        hi = hi.max(s.jacobian_max);
    }
    let ok = lo >= 0.85 && hi <= 1.15;
    r.line(
        5,
        "jacobian proportional to mu",
        ok,
        format!("|det J|/mu in [{lo:.4}, {hi:.4}] down to mu*={mu_min:.4}"),
    );
}

fn energies(r: &mut Report, plane: &Run, shock_runs: &[&Run]) {
    let series = &plane.summary().series;
    let (first, last) = (series.first().unwrap(), series.last().unwrap());
    let drift = (last.e_shock_psi - first.e_shock_psi).abs() / first.e_shock_psi;
    let mut ok = drift < 1e-6;
    let mut detail = vec![format!("shock energy drift={drift:.2e}")];

    let mut base = coupled_ripple(1e-3);
    base.oracle = None;
    let rows = sweep::sweep(&base, SweepParameter::EpsRipple, &[1e-3, 2e-3]);
    for (name, get) in [
        ("v", (|r: &sweep::SweepRow| r.e_regular_v) as fn(&sweep::SweepRow) -> Option<f64>),
        ("V", |r: &sweep::SweepRow| r.e_regular_vgrad),
    ] {
        let ratio = match (get(&rows[0]), get(&rows[1])) {
            (Some(a), Some(b)) if a > 0.0 => b / a,
            _ => f64::NAN,
        };
        ok &= (3.2..=4.8).contains(&ratio);
        detail.push(format!("regular energy ratio [{name}]={ratio:.3}"));
    }

    for run in shock_runs {
        let last = run.summary().series.last().unwrap();
        let ratio = last.f_unit / (SQRT_2 * last.t);
        ok &= (0.5..=2.0).contains(&ratio) && last.mu_star <= 0.06;
        detail.push(format!("{} unit flux/(sqrt2 t)={ratio:.4} at mu*={:.3}", run.name, last.mu_star));
    }
    r.line(6, "energy properties", ok, detail.join(", "));
}

fn oracle(r: &mut Report, runs: &[(&ScenarioConfig, &Run)]) {
    let mut ok = true;
    let mut detail = Vec::new();
    for (cfg, run) in runs {
        let o = cfg.oracle.as_ref().expect("stock oracle grid");
        let start = Instant::now();
        let sys = &run.sim.system;
        let t_pred = run.summary().t_pred;
        let t = 0.5 * t_pred;
        let geo = cfg.simulate_until(sys, t).unwrap();
        let cart = cartesian::run_cartesian(sys, &o.grid, &cfg.initial, t, t_pred).unwrap();
        let rep = cartesian::compare(sys, geo.snapshots.last().unwrap(), &cart).unwrap();
        let secs = start.elapsed().as_secs_f64();
        ok &= rep.max_psi < 1e-3 && rep.max_v < 5e-3 && secs < 30.0;
        detail.push(format!(
            "{} max dpsi={:.2e} max dv={:.2e} {secs:.1}s",
            run.name, rep.max_psi, rep.max_v
        ));
    }
    r.line(7, "oracle cross-validation", ok, detail.join("; "));
}

fn frame(r: &mut Report, runs: &[&Run]) {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for run in runs {
        let s = run.summary();
        worst = worst.max(s.contraction_ratio);
        ok &= s.contraction_ratio <= 10.0;
        for snap in run.sim.output.snapshots.iter().filter(|s| s.mu_star() > 0.05) {
            ok &= diagnostics::injectivity_check(snap).pass;
            checked += 1;
        }
    }
    r.line(
        8,
        "frame invariants",
        ok,
        format!("max contraction/estimate={worst:.2e}, injective snapshots checked={checked}"),
    );
}

fn main() -> ExitCode {
    let stock = |name: &str| ScenarioConfig::stock(name).unwrap();
    let sine_cfg = stock("burgers_sine");
    let plane_cfg = stock("coupled_plane");
    let ripple_cfg = stock("coupled_ripple");
    let sine = Run::new(&sine_cfg);
    let flat = Run::new(&stock("burgers_flat"));
    let plane = Run::new(&plane_cfg);
    let ripple = Run::new(&ripple_cfg);
    let shock = [&sine, &plane, &ripple];
    let all = [&sine, &flat, &plane, &ripple];

    let mut r = Report { failed: 0 };
    lifespan(&mut r);
    sharp_mu(&mut r, &sine, &[&plane, &ripple]);
    certificate(&mut r, &shock);
    regularity(&mut r, &[&plane, &ripple]);
    jacobian(&mut r, &all);
    energies(&mut r, &sine, &shock);
    oracle(&mut r, &[(&sine_cfg, &sine), (&plane_cfg, &plane), (&ripple_cfg, &ripple)]);
    frame(&mut r, &all);

    if r.failed == 0 {
        println!("acceptance: all 8 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria fail", r.failed);
        ExitCode::FAILURE
    }
}
