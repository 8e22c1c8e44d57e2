//! Acceptance run: one line per criterion, then a single assertion.

use std::io::Write;
use std::time::Instant;

use zrp_core::harness::stats::mean_se;
use zrp_core::harness::{defect_rate_average, run_convergence, static_limit_check, ConvergenceReport};
use zrp_core::pde::{grid_l1, solve, Regime, SolverConfig};
use zrp_core::scenario::Scenario;
use zrp_core::verify::{self, Suite, VerifyOptions};
use zrp_core::{DefectClass, DefectSet};

const SEED: u64 = 2024;

struct Line {
    criterion: u32,
    pass: bool,
    text: String,
}

fn line(criterion: u32, pass: bool, started: Instant, text: String) -> Line {
    let text = format!("{text} [{:.1}s]", started.elapsed().as_secs_f64());
    Line { criterion, pass, text }
}

fn compare(name: &str) -> (Scenario, ConvergenceReport) {
    let s = Scenario::bundled(name).unwrap();
    let r = run_convergence(&s.convergence_setup(SEED).unwrap()).unwrap();
    (s, r)
}

fn static_limit() -> Line {
    let t = Instant::now();
    let s = Scenario::bundled("static").unwrap();
    let st = s.require_static().unwrap();
    let r = static_limit_check(&s.grand_canonical(), st.c, &s.defects, st.n, st.samples, SEED).unwrap();
    let crit = r.defects.iter().find(|d| d.class == DefectClass::Critical).unwrap();
    let sub = r.defects.iter().find(|d| d.class == DefectClass::Sub).unwrap();
    let pass = (crit.scaled - 2.0).abs() <= 0.05 * 2.0 && sub.scaled < 0.1 && t.elapsed().as_secs() < 10;
    line(1, pass, t, format!("occ/N critical {:.4} (target 2 +- 5%), sub {:.4} (< 0.1)", crit.scaled, sub.scaled))
}

fn bulk() -> Line {
    let t = Instant::now();
    let (_, r) = compare("heat");
    let hi = r.l1_at(512, 0.05).unwrap();
    let lo = r.l1_at(128, 0.05).unwrap();
    let ratio = lo.l1 / hi.l1;
    let pass = hi.l1 < 0.10 && ratio >= 1.5 && r.pass;
    line(
        2,
        pass,
        t,
        format!(
            "L1 at N=512 {:.4} (< 0.10), N=128 {:.4}, ratio {:.2} (>= 1.5); per-replica L1 at N=512 {:.4} +- {:.4}",
            hi.l1, lo.l1, ratio, hi.replica_l1_mean, hi.replica_l1_se
        ),
    )
}

fn critical_atom() -> Line {
    let t = Instant::now();
    let (s, r) = compare("critical");
    let row = r.atoms.iter().find(|a| a.n == 512 && a.t == 0.05).unwrap();
    let gc = s.grand_canonical();
    let sol = solve(&gc, &s.defects, &s.init, &SolverConfig::new(512, 0.05, vec![0.05])).unwrap();
    let snap = &sol.snapshots[0];
    let node = s.defects.grid_nodes(512).unwrap()[0];
    let gap = (snap.atoms[&0] - s.defects.specs()[0].lambda * gc.fugacity(snap.rho[node])).abs();
    let pass = row.error < 0.15 && gap < 5e-3;
    line(
        3,
        pass,
        t,
        format!(
            "|occ/N - m| {:.4} (occ/N {:.4}, m {:.4}; < 0.15), |m - lambda Phi| {gap:.2e} (< 5e-3)",
            row.error, row.empirical, row.solver
        ),
    )
}

fn super_slow() -> Line {
    let t = Instant::now();
    let (s, r) = compare("superslow");
    let row = r.super_slow.iter().find(|a| a.n == 512 && a.t == 0.05).unwrap();
    let gc = s.grand_canonical();
    let cfg = s.require_solver().unwrap();
    let sol = solve(&gc, &s.defects, &s.init, cfg).unwrap();
    let last = sol.snapshots.last().unwrap();
    let dev = last.rho.iter().map(|r| (r - s.init.c0).abs()).fold(0.0, f64::max);
    let pass = row.window_error < 0.2 && dev <= 1e-3 && last.t == 2.0;
    line(
        4,
        pass,
        t,
        format!(
            "window error {:.4} (< 0.2), scaled occupancy {:.4} vs {:.4}; solver max |rho - c0| at t=2 {dev:.2e} (<= 1e-3)",
            row.window_error, row.scaled, row.target
        ),
    )
}

fn bounded() -> Line {
    let t = Instant::now();
    let s = Scenario::bundled("bounded").unwrap();
    let gc = s.grand_canonical();
    let cfg = s.require_solver().unwrap();
    let sol = solve(&gc, &s.defects, &s.init, cfg).unwrap();
    let node = s.defects.grid_nodes(cfg.m).unwrap()[0];
    let lambda = s.defects.specs()[0].lambda;
    let mut max_phi: f64 = 0.0;
    let mut slack: f64 = 0.0;
    for snap in &sol.snapshots {
        let phi = gc.fugacity(snap.rho[node]);
        max_phi = max_phi.max(phi);
        slack = slack.max(snap.atoms[&0] * (1.0 / lambda - phi));
    }
    let avg = defect_rate_average(&gc, &s.defects, &s.init, 512, 0, (0.01, 0.05), 8, SEED).unwrap();
    let (mean, se) = mean_se(&avg);

    let b = Scenario::bundled("bouncing").unwrap();
    let bsol = solve(&b.grand_canonical(), &b.defects, &b.init, b.require_solver().unwrap()).unwrap();
    let seq = bsol.regimes(0);
    let bounce = seq == [Regime::Transparent, Regime::Pinned, Regime::Transparent];
    let pass = max_phi <= 0.5 + 1e-8 && slack <= 1e-6 && mean <= 0.52 && bounce;
    line(
        5,
        pass,
        t,
        format!(
            "max Phi {max_phi:.10} (<= 1/2 + 1e-8), max m(1/2 - Phi) {slack:.1e} (<= 1e-6), \
             time-avg g/lambda {mean:.4} +- {se:.4} (<= 0.52), bouncing {seq:?}"
        ),
    )
}

fn no_effect() -> Line {
    let t = Instant::now();
    let s = Scenario::bundled("noeffect").unwrap();
    let gc = s.grand_canonical();
    let cfg = s.require_solver().unwrap();
    let free = DefectSet::empty();
    let with = solve(&gc, &s.defects, &s.init, cfg).unwrap();
    let without = solve(&gc, &free, &s.init, cfg).unwrap();
    let solver_gap = with.snapshots.iter().zip(&without.snapshots).map(|(a, b)| grid_l1(a, b)).fold(0.0, f64::max);

    let mut setup = s.convergence_setup(SEED).unwrap();
    let r_def = run_convergence(&setup).unwrap();
    setup.defects = free;
    let r_free = run_convergence(&setup).unwrap();
    let a = r_def.l1_at(512, 0.05).unwrap();
    let b = r_free.l1_at(512, 0.05).unwrap();
    let diff = (a.replica_l1_mean - b.replica_l1_mean).abs();
    let band = 3.0 * (a.replica_l1_se.powi(2) + b.replica_l1_se.powi(2)).sqrt();
    let pass = solver_gap < 1e-10 && diff <= band;
    line(
        6,
        pass,
        t,
        format!(
            "solver L1 defect vs free {solver_gap:.1e} (< 1e-10); simulator L1 {:.4} vs {:.4}, gap {diff:.4} (<= 3 sigma {band:.4})",
            a.replica_l1_mean, b.replica_l1_mean
        ),
    )
}

fn properties() -> Line {
    let t = Instant::now();
    let reports = verify::run(Suite::All, &VerifyOptions { seed: SEED, ..VerifyOptions::default() }).unwrap();
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| r.checks.iter().filter(|c| !c.pass).map(move |c| format!("{}/{}", r.suite, c.name)))
        .collect();
    let checks: usize = reports.iter().map(|r| r.checks.len()).sum();
    let pass = failed.is_empty() && t.elapsed().as_secs() < 180;
    line(7, pass, t, format!("{checks} checks across {} suites; failed: {failed:?}", reports.len()))
}

#[test]
fn acceptance() {
    let lines = vec![static_limit(), bulk(), critical_atom(), super_slow(), bounded(), no_effect(), properties()];
    // written past the test harness capture so the lines show in plain `cargo test`
    let mut err = std::io::stderr().lock();
    for l in &lines {
        writeln!(err, "criterion {}: {} {}", l.criterion, if l.pass { "PASS" } else { "FAIL" }, l.text).unwrap();
    }
    let failed: Vec<u32> = lines.iter().filter(|l| !l.pass).map(|l| l.criterion).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
