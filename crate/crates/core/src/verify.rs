//! Property suites run by `zrplab verify`, each with fixed seeds.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::defects::{DefectClass, DefectSet, DefectSpec};
use crate::error::{Error, Result};
use crate::harness::stats::{chi_square, histogram};
use crate::harness::{attractiveness_check, one_block_diagnostic, static_limit_check};
use crate::heat::FourierHeat;
use crate::measure::build_invariant;
use crate::pde::{grid_l1, solve, Regime, SolverConfig};
use crate::profile::{InitialCondition, Profile};
use crate::rate::{RateFamily, RateFunction};
use crate::scenario::{Scenario, BUNDLED};
use crate::sim::{replica_rng, Initial, SimState};
use crate::thermo::GrandCanonical;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Toolkit,
    Simulator,
    Solver,
    Static,
    Coupling,
    All,
}

impl Suite {
    pub const EACH: [Suite; 5] = [Suite::Toolkit, Suite::Simulator, Suite::Solver, Suite::Static, Suite::Coupling];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Toolkit => "toolkit",
            Suite::Simulator => "simulator",
            Suite::Solver => "solver",
            Suite::Static => "static",
            Suite::Coupling => "coupling",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .iter()
            .chain(&[Suite::All])
            .copied()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::config("suite", format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub conservation_events: u64,
    pub coupling_events: u64,
    pub samples: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seed: 1, conservation_events: 100_000_000, coupling_events: 1_000_000, samples: 100_000 }
    }
}

impl VerifyOptions {
    /// Reduced event and sample counts, for smoke runs.
    pub fn quick(seed: u64) -> Self {
        VerifyOptions { seed, conservation_events: 1_000_000, coupling_events: 100_000, samples: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn below(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        CheckResult { name: name.into(), pass: value <= threshold, value, threshold, detail: detail.into() }
    }

    fn above(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        CheckResult { name: name.into(), pass: value >= threshold, value, threshold, detail: detail.into() }
    }

    fn flag(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        let v = if pass { 1.0 } else { 0.0 };
        CheckResult { name: name.into(), pass, value: v, threshold: 1.0, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<CheckResult>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        SuiteReport { suite, checks, pass }
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Runs one suite, or every suite for [`Suite::All`].
pub fn run(suite: Suite, opts: &VerifyOptions) -> Result<Vec<SuiteReport>> {
    match suite {
        Suite::All => Suite::EACH.iter().map(|&s| run_one(s, opts)).collect(),
        s => Ok(vec![run_one(s, opts)?]),
    }
}

fn run_one(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Toolkit => toolkit(opts)?,
        Suite::Simulator => simulator(opts)?,
        Suite::Solver => solver()?,
        Suite::Static => static_suite(opts)?,
        Suite::Coupling => coupling(opts)?,
        Suite::All => unreachable!(),
    };
    Ok(SuiteReport::new(suite, checks))
}

fn families() -> Result<Vec<(&'static str, GrandCanonical)>> {
    Ok(vec![
        ("identity", GrandCanonical::new(RateFunction::identity())),
        ("sqrt", GrandCanonical::new(RateFunction::power(0.5)?)),
        ("quarter", GrandCanonical::new(RateFunction::power(0.25)?)),
        ("rational", GrandCanonical::new(RateFunction::rational())),
        ("geometric", GrandCanonical::new(RateFunction::geometric())),
    ])
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

pub fn toolkit(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let id = GrandCanonical::new(RateFunction::identity());
    let mut worst: f64 = 0.0;
    for i in 0..=100 {
        let x = 0.5 * i as f64;
        worst = worst
            .max((id.log_partition(x)? - x).abs())
            .max((id.mean_density(x)? - x).abs())
            .max((id.fugacity(x) - x).abs());
    }
    out.push(CheckResult::below("identity closed forms", worst, 1e-10, "ln Z, R, Phi on [0, 50]"));

    let rat = GrandCanonical::new(RateFunction::rational());
    let mut worst: f64 = 0.0;
    for i in 0..=95 {
        let phi = 0.01 * i as f64;
        worst = worst
            .max(rel(rat.log_partition(phi)?, -2.0 * (1.0 - phi).ln()))
            .max(rel(rat.mean_density(phi)?, 2.0 * phi / (1.0 - phi)));
    }
    for i in 0..=100 {
        let rho = 0.5 * i as f64;
        worst = worst.max(rel(rat.fugacity(rho), rho / (rho + 2.0)));
    }
    out.push(CheckResult::below("rational closed forms", worst, 1e-8, "phi in [0, 0.95], rho in [0, 50]"));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for (name, gc) in families()? {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let rho = 50.0 * rng.random::<f64>();
            worst = worst.max((gc.mean_density(gc.fugacity(rho))? - rho).abs() / (1.0 + rho));
        }
        out.push(CheckResult::below(&format!("round trip {name}"), worst, 1e-8, "100 random rho in [0, 50]"));
    }

    for (alpha, phi) in [(1.0, 1e4), (0.5, 100.0)] {
        let gc = GrandCanonical::new(RateFunction::power(alpha)?);
        let ratio = gc.log_partition(phi)? / phi.powf(1.0 / alpha);
        out.push(CheckResult::below(
            &format!("ln Z order alpha={alpha}"),
            (ratio - alpha).abs() / alpha,
            0.05,
            format!("ln Z / phi^(1/alpha) = {ratio} at phi = {phi}"),
        ));
    }

    let sqrt = GrandCanonical::new(RateFunction::power(0.5)?);
    let ladder = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
    let ratios: Vec<f64> =
        ladder.iter().map(|&p: &f64| Ok(sqrt.variance(p)? / p.powi(4))).collect::<Result<_>>()?;
    out.push(CheckResult::flag(
        "variance scale decreasing",
        ratios.windows(2).all(|w| w[1] < w[0]),
        format!("Var / phi^4 for alpha = 1/2: {ratios:?}"),
    ));

    let mut ordered = true;
    for (_, gc) in families()? {
        let top = if gc.radius().is_finite() { 0.9 } else { 20.0 };
        let laws: Vec<_> = (1..=6).map(|i| gc.marginal(top * i as f64 / 6.0)).collect::<Result<_>>()?;
        for _ in 0..2000 {
            let u = rng.random::<f64>();
            ordered &= laws.windows(2).all(|w| w[0].quantile(u) <= w[1].quantile(u));
        }
    }
    out.push(CheckResult::flag("marginal coupling monotone", ordered, "shared-uniform quantiles"));

    let cases = [
        ("identity", GrandCanonical::new(RateFunction::identity()), 3.0),
        ("sqrt", GrandCanonical::new(RateFunction::power(0.5)?), 4.0),
        ("rational", GrandCanonical::new(RateFunction::rational()), 0.6),
    ];
    for (name, gc, phi) in cases {
        let m = gc.marginal(phi)?;
        let draws: Vec<u64> = (0..opts.samples).map(|_| m.sample(&mut rng)).collect();
        let (lo, counts) = histogram(&draws);
        let r = chi_square(&counts, lo, |n| m.probability(n), 0.99);
        out.push(CheckResult {
            name: format!("sampler law {name}"),
            pass: r.pass,
            value: r.statistic,
            threshold: r.critical,
            detail: format!("phi = {phi}, {} samples, {} dof", opts.samples, r.dof),
        });
    }
    Ok(out)
}

pub fn simulator(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let id = GrandCanonical::new(RateFunction::identity());
    let n = 512;
    let defects = DefectSet::new(vec![DefectSpec::new(0.25, 1.0, 2.0), DefectSpec::new(0.75, 2.0, 1.0)], id.family())?;
    let spec = build_invariant(&id, 1.0, n, &defects)?;
    let mut state = SimState::init(&id, &defects, Initial::Invariant(spec), replica_rng(opts.seed, 0, n as u64))?;
    let total = state.total();
    let mut conserved = true;
    let mut consistent = true;
    let mut done = 0u64;
    while done < opts.conservation_events {
        let chunk = (opts.conservation_events - done).min(1_000_000);
        for _ in 0..chunk {
            if state.step().is_none() {
                break;
            }
        }
        done += chunk;
        conserved &= state.total() == total && state.occupancies().iter().sum::<u64>() == total;
        consistent &= state.rate_index_consistent();
    }
    out.push(CheckResult::flag(
        "exact conservation",
        conserved,
        format!("{} events on {n} sites, {total} particles", state.events()),
    ));
    out.push(CheckResult::flag("rate index consistency", consistent, "rebuild matches incremental index"));

    let stream = |seed| -> Result<Vec<(usize, i8, u64)>> {
        let spec = build_invariant(&id, 1.0, 128, &defects)?;
        let mut s = SimState::init(&id, &defects, Initial::Invariant(spec), replica_rng(seed, 0, 128))?;
        Ok((0..100_000).map_while(|_| s.step()).map(|e| (e.site, e.dir, e.t.to_bits())).collect())
    };
    out.push(CheckResult::flag("same seed same stream", stream(opts.seed)? == stream(opts.seed)?, "100000 events"));

    // the invariant law is a product measure, so at a fixed time every
    // site of every replica is an independent draw
    let rat = GrandCanonical::new(RateFunction::rational());
    let small = 64;
    let bounded = DefectSet::new(vec![DefectSpec::new(0.5, 0.0, 2.0)], rat.family())?;
    let spec = build_invariant(&rat, 1.0, small, &bounded)?;
    let replicas = opts.samples.div_ceil(small - 1).max(100);
    let finals: Vec<Vec<u64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut s =
                SimState::init(&rat, &bounded, Initial::Invariant(spec.clone()), replica_rng(opts.seed, r as u64, small as u64))?;
            s.advance_to(0.05);
            Ok(s.occupancies().to_vec())
        })
        .collect::<Result<_>>()?;
    let site = bounded.lattice_sites(small)?[0];
    let regular: Vec<u64> =
        finals.iter().flat_map(|o| o.iter().enumerate().filter(|(k, _)| *k != site).map(|(_, &v)| v)).collect();
    let at_defect: Vec<u64> = finals.iter().map(|o| o[site]).collect();
    for (name, draws, phi) in [
        ("stationary law regular sites", regular, spec.fugacities[(site + 1) % small]),
        ("stationary law defect site", at_defect, spec.fugacities[site]),
    ] {
        let m = rat.marginal(phi)?;
        let (lo, counts) = histogram(&draws);
        let r = chi_square(&counts, lo, |k| m.probability(k), 0.99);
        out.push(CheckResult {
            name: name.into(),
            pass: r.pass,
            value: r.statistic,
            threshold: r.critical,
            detail: format!("{} draws at t = 0.05, phi = {phi}, {} dof", draws.len(), r.dof),
        });
    }

    // block form: block mean of g against Phi of the block mean; for the
    // identity rate it vanishes identically, so a nonlinear rate is run too
    let rows = one_block_diagnostic(&id, 1.0, 512, &[16], 0.1, 200, 16, opts.seed)?;
    out.push(CheckResult::below(
        "one-block identity l=16",
        rows[0].block_deviation,
        0.05,
        format!("N = 512; single-site form {}", rows[0].site_deviation),
    ));
    let sqrt = GrandCanonical::new(RateFunction::power(0.5)?);
    let rows = one_block_diagnostic(&sqrt, 1.0, 512, &[2, 8, 16], 0.1, 200, 16, opts.seed)?;
    let devs: Vec<f64> = rows.iter().map(|r| r.block_deviation).collect();
    out.push(CheckResult::below("one-block sqrt l=16", devs[2], 0.05, format!("N = 512, l = 2, 8, 16: {devs:?}")));
    out.push(CheckResult::flag("one-block decreasing in l", devs.windows(2).all(|w| w[1] < w[0]), format!("{devs:?}")));
    Ok(out)
}

fn self_convergence(s: &Scenario) -> Result<Option<f64>> {
    let gc = s.grand_canonical();
    let t = s.solver.as_ref().map_or(0.05, |c| c.t_end.min(0.05));
    let run = |m: usize| -> Result<_> {
        Ok(solve(&gc, &s.defects, &s.init, &SolverConfig::new(m, t, vec![t]))?.snapshots.remove(0))
    };
    let (a, b, c) = (run(64)?, run(128)?, run(256)?);
    let fine = grid_l1(&b, &c);
    if fine < 1e-12 {
        return Ok(None);
    }
    Ok(Some(grid_l1(&a, &b) / fine))
}

pub fn solver() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (name, _) in BUNDLED {
        let s = Scenario::bundled(name)?;
        if s.solver.is_none() {
            continue;
        }
        let check = match self_convergence(&s)? {
            Some(f) => CheckResult::above(&format!("self-convergence {name}"), f, 1.8, "M = 64, 128, 256"),
            None => CheckResult::flag(&format!("self-convergence {name}"), true, "stationary solution"),
        };
        out.push(check);
    }

    let heat = Scenario::bundled("heat")?;
    let gc = heat.grand_canonical();
    let oracle = FourierHeat::new(&heat.init.profile);
    for m in [64, 128, 256] {
        let sol = solve(&gc, &heat.defects, &heat.init, &SolverConfig::new(m, 0.05, vec![0.05]))?;
        let s = &sol.snapshots[0];
        let err = s.rho.iter().enumerate().map(|(i, r)| (r - oracle.value(0.05, i as f64 / m as f64)).abs()).fold(0.0, f64::max);
        out.push(CheckResult::below(&format!("heat vs Fourier M={m}"), err, 5.0 / (m * m) as f64, "max nodal error"));
    }

    for name in ["heat", "critical"] {
        let s = Scenario::bundled(name)?;
        let gc = s.grand_canonical();
        let t = 0.05;
        let sol = solve(&gc, &s.defects, &s.init, &SolverConfig::new(512, t, vec![t]))?;
        out.push(CheckResult::below(
            &format!("mass drift {name}"),
            sol.mass_audit.drift / t,
            1e-8,
            format!("per unit time, M = 512, {} steps", sol.mass_audit.steps),
        ));
    }

    let crit = Scenario::bundled("critical")?;
    let gc = crit.grand_canonical();
    let alpha = gc.family().alpha().unwrap_or(1.0);
    let sol = solve(&gc, &crit.defects, &crit.init, &SolverConfig::new(512, 0.05, vec![0.05]))?;
    let node = crit.defects.grid_nodes(512)?[0];
    let snap = &sol.snapshots[0];
    let lambda = crit.defects.specs()[0].lambda;
    let gap = (snap.atoms[&0].powf(alpha) - lambda * gc.fugacity(snap.rho[node])).abs();
    out.push(CheckResult::below("critical atom relation", gap, 5e-3, "|m^alpha - lambda Phi(rho)| at t = 0.05, M = 512"));

    let bump = Profile::Cosine { mean: 1.5, amplitude: 0.5, mode: 1 };
    let times = vec![0.01, 0.02, 0.05];
    let lo = solve(&gc, &crit.defects, &crit.init, &SolverConfig::new(128, 0.05, times.clone()))?;
    let hi_init = InitialCondition { profile: bump, ..crit.init.clone() };
    let hi = solve(&gc, &crit.defects, &hi_init, &SolverConfig::new(128, 0.05, times))?;
    let ordered = lo.snapshots.iter().zip(&hi.snapshots).all(|(a, b)| {
        a.rho.iter().zip(&b.rho).all(|(x, y)| x <= &(y + 1e-12)) && a.atoms[&0] <= b.atoms[&0] + 1e-12
    });
    out.push(CheckResult::flag("comparison principle", ordered, "rho and atoms ordered at every snapshot"));

    for name in ["bounded", "bouncing"] {
        let s = Scenario::bundled(name)?;
        let gc = s.grand_canonical();
        let cfg = s.solver.clone().ok_or_else(|| Error::config("solver", "bundled scenario lacks a solver"))?;
        let sol = solve(&gc, &s.defects, &s.init, &cfg)?;
        let mut excess: f64 = 0.0;
        let mut slack: f64 = 0.0;
        for (j, d, class) in s.defects.iter() {
            if class != DefectClass::Critical {
                continue;
            }
            let node = s.defects.grid_nodes(cfg.m)?[j];
            for snap in &sol.snapshots {
                let phi = gc.fugacity(snap.rho[node]);
                excess = excess.max(phi - 1.0 / d.lambda);
                slack = slack.max(snap.atoms.get(&j).copied().unwrap_or(0.0) * (1.0 / d.lambda - phi));
            }
        }
        out.push(CheckResult::below(&format!("threshold {name}"), excess, 1e-8, "max Phi(rho) - 1/lambda at the defect"));
        out.push(CheckResult::below(&format!("complementarity {name}"), slack, 1e-6, "max m (1/lambda - Phi(rho))"));
        if name == "bouncing" {
            let seq = sol.regimes(0);
            out.push(CheckResult::flag(
                "bouncing regime sequence",
                seq == [Regime::Transparent, Regime::Pinned, Regime::Transparent],
                format!("{seq:?}"),
            ));
        }
    }
    Ok(out)
}

pub fn static_suite(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let s = Scenario::bundled("static")?;
    let st = s.require_static()?;
    let gc = s.grand_canonical();
    let r = static_limit_check(&gc, st.c, &s.defects, st.n, st.samples, opts.seed)?;
    let mut out = Vec::new();
    for d in &r.defects {
        match d.class {
            DefectClass::Critical | DefectClass::Super => out.push(CheckResult::below(
                &format!("static limit defect {}", d.defect),
                (d.scaled - d.target).abs() / d.target,
                0.05,
                format!("scaled mean {} +- {} against {}", d.scaled, d.scaled_se, d.target),
            )),
            DefectClass::Sub => out.push(CheckResult::below(
                &format!("static limit defect {}", d.defect),
                d.scaled,
                0.1,
                format!("sub-critical occupancy / N = {}", d.scaled),
            )),
        }
    }
    let covered: Vec<usize> = (0..20u64)
        .into_par_iter()
        .map(|rep| {
            let r = static_limit_check(&gc, st.c, &s.defects, st.n, st.samples, opts.seed.wrapping_add(1000 + rep))?;
            Ok(r.defects.iter().filter(|d| d.class == DefectClass::Critical && d.covers(3.0)).count())
        })
        .collect::<Result<_>>()?;
    let critical = s.defects.of_class(DefectClass::Critical).count();
    let hits = covered.iter().sum::<usize>();
    out.push(CheckResult::above(
        "static estimator unbiased",
        hits as f64,
        19.0 * critical as f64,
        format!("3-sigma coverage over 20 repetitions and {critical} critical defects"),
    ));
    Ok(out)
}

pub fn coupling(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let id = GrandCanonical::new(RateFunction::identity());
    let rat = GrandCanonical::new(RateFunction::rational());
    let cases = [
        (
            "identity",
            DefectSet::new(vec![DefectSpec::new(0.25, 1.0, 2.0), DefectSpec::new(0.75, 0.5, 2.0)], RateFamily::PowerAlpha(1.0))?,
            id,
            (0.8, 1.2),
        ),
        ("rational", DefectSet::new(vec![DefectSpec::new(0.5, 0.0, 2.0)], rat.family())?, rat, (0.5, 1.5)),
    ];
    let mut out = Vec::new();
    for (name, defects, gc, (lo, hi)) in cases {
        let r = attractiveness_check(&gc, &defects, 256, lo, hi, opts.coupling_events, opts.seed)?;
        out.push(CheckResult::flag(
            &format!("order preserved {name}"),
            r.pass && r.events == opts.coupling_events,
            match &r.violation {
                Some(v) => v.clone(),
                None => format!("{} events, {} joint", r.events, r.joint_events),
            },
        ));
    }
    Ok(out)
}
