use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::defects::{DefectClass, DefectSet};
use crate::error::{Error, Result};
use crate::measure::{build_invariant, build_local_equilibrium, sample_configuration, sample_ordered_pair};
use crate::pde::MassAudit;
use crate::profile::InitialCondition;
use crate::rate::RateFamily;
use crate::sim::{block_average, replica_rng, CoupledPair, Initial, Side, SimState};
use crate::thermo::GrandCanonical;

use super::convergence::ConvergenceReport;
use super::stats::mean_se;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticDefect {
    pub defect: usize,
    pub class: DefectClass,
    pub site: usize,
    pub fugacity: f64,
    /// Sample mean of the raw occupancy.
    pub mean: f64,
    /// Scale applied to the occupancy: `N^(-beta/alpha)` at super-slow
    /// defects, `1/N` otherwise.
    pub scale: f64,
    pub scaled: f64,
    pub scaled_se: f64,
    /// Limit of the scaled occupancy.
    pub target: f64,
    #[serde(skip)]
    pub draws: Vec<u64>,
}

impl StaticDefect {
    /// Target within `k` standard errors of the scaled mean.
    pub fn covers(&self, k: f64) -> bool {
        (self.scaled - self.target).abs() <= k * self.scaled_se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticReport {
    pub c: f64,
    pub n: usize,
    pub samples: usize,
    pub defects: Vec<StaticDefect>,
    /// Mean density over regular sites, averaged over samples.
    pub bulk: f64,
    pub bulk_se: f64,
}

/// Draws from the invariant measure `R^N_c`: i.i.d. defect-site occupancies
/// and i.i.d. bulk configurations.
pub fn static_limit_check(
    gc: &GrandCanonical,
    c: f64,
    defects: &DefectSet,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<StaticReport> {
    if samples < 2 {
        return Err(Error::config("samples", "need at least 2 samples"));
    }
    let spec = build_invariant(gc, c, n, defects)?;
    let sites = defects.lattice_sites(n)?;
    let mut rng = replica_rng(seed, 0, n as u64);
    let nf = n as f64;
    let mut out = Vec::new();
    for ((j, d, class), &k) in defects.iter().zip(&sites) {
        let phi = spec.fugacities[k];
        let marginal = gc.marginal(phi)?;
        let draws: Vec<u64> = (0..samples).map(|_| marginal.sample(&mut rng)).collect();
        let (scale, target) = match (gc.family(), class) {
            (RateFamily::PowerAlpha(alpha), DefectClass::Super) => {
                (nf.powf(-d.beta / alpha), (d.lambda * gc.fugacity(c)).powf(1.0 / alpha))
            }
            (RateFamily::PowerAlpha(alpha), DefectClass::Critical) => (1.0 / nf, (d.lambda * gc.fugacity(c)).powf(1.0 / alpha)),
            _ => (1.0 / nf, 0.0),
        };
        let (mean, se) = mean_se(&draws.iter().map(|&d| d as f64).collect::<Vec<_>>());
        out.push(StaticDefect {
            defect: j,
            class,
            site: k,
            fugacity: phi,
            mean,
            scale,
            scaled: mean * scale,
            scaled_se: se * scale,
            target,
            draws,
        });
    }
    let regular: Vec<bool> = (0..n).map(|k| !sites.contains(&k)).collect();
    let count = regular.iter().filter(|r| **r).count() as f64;
    let laws = spec.laws();
    let mut bulk = Vec::with_capacity(samples);
    for _ in 0..samples {
        let occ = sample_configuration(gc, &laws, &mut rng)?;
        let sum: u64 = occ.iter().zip(&regular).filter(|(_, r)| **r).map(|(o, _)| *o).sum();
        bulk.push(sum as f64 / count);
    }
    let (bulk, bulk_se) = mean_se(&bulk);
    Ok(StaticReport { c, n, samples, defects: out, bulk, bulk_se })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttractivenessReport {
    pub pass: bool,
    pub events: u64,
    pub joint_events: u64,
    pub lower_total: u64,
    pub upper_total: u64,
    pub violation: Option<String>,
}

/// Runs the basic coupling from an ordered pair drawn at densities
/// `c_lo <= c_hi` and checks the sitewise order after every event.
pub fn attractiveness_check(
    gc: &GrandCanonical,
    defects: &DefectSet,
    n: usize,
    c_lo: f64,
    c_hi: f64,
    events: u64,
    seed: u64,
) -> Result<AttractivenessReport> {
    if c_lo > c_hi {
        return Err(Error::config("densities", format!("{c_lo} > {c_hi}")));
    }
    let lo = build_invariant(gc, c_lo, n, defects)?.laws();
    let hi = build_invariant(gc, c_hi, n, defects)?.laws();
    let mut rng = replica_rng(seed, 0, n as u64);
    let (a, b) = sample_ordered_pair(gc, &lo, &hi, &mut rng)?;
    let mut pair = CoupledPair::new(gc.rate().clone(), defects.clone(), a, b, rng)?;
    let result = pair.run_checked(events);
    let (done, violation) = match result {
        Ok(done) => (done, None),
        Err(e) => (pair.events(), Some(e.to_string())),
    };
    Ok(AttractivenessReport {
        pass: violation.is_none(),
        events: done,
        joint_events: pair.joint_events(),
        lower_total: pair.lower().total(),
        upper_total: pair.upper().total(),
        violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRow {
    pub l: usize,
    /// Panel mean of `|time-avg[(2l+1)^-1 sum_block g(eta) - Phi(eta^l(k))]|`.
    pub block_deviation: f64,
    /// Same with `g(eta(k))` at the centre site only.
    pub site_deviation: f64,
}

/// Empirical one-block replacement along one stationary trajectory at
/// density `c` without defects, observed at `observations` equally spaced
/// times in `(0, t_avg]` on `panel` equally spaced sites.
pub fn one_block_diagnostic(
    gc: &GrandCanonical,
    c: f64,
    n: usize,
    ls: &[usize],
    t_avg: f64,
    observations: usize,
    panel: usize,
    seed: u64,
) -> Result<Vec<BlockRow>> {
    if panel == 0 || observations == 0 || panel > n {
        return Err(Error::config("panel", "need at least one site and one observation"));
    }
    if let Some(&l) = ls.iter().find(|&&l| 2 * l + 1 >= n) {
        return Err(Error::config("l", format!("block 2 * {l} + 1 does not fit on {n} sites")));
    }
    let none = DefectSet::empty();
    let spec = build_invariant(gc, c, n, &none)?;
    let mut state = SimState::init(gc, &none, Initial::Invariant(spec), replica_rng(seed, 0, n as u64))?;
    let sites: Vec<usize> = (0..panel).map(|i| i * n / panel).collect();
    let rate = gc.rate().clone();
    // running sums of the block and single-site differences
    let mut block = vec![vec![0.0; panel]; ls.len()];
    let mut single = vec![vec![0.0; panel]; ls.len()];
    let mut phi_cache = std::collections::HashMap::<u64, f64>::new();
    for i in 1..=observations {
        state.advance_to(t_avg * i as f64 / observations as f64);
        let occ = state.occupancies();
        for (li, &l) in ls.iter().enumerate() {
            for (pi, &k) in sites.iter().enumerate() {
                let avg = block_average(occ, k, l, Side::Centered);
                let phi = *phi_cache.entry(avg.to_bits()).or_insert_with(|| gc.fugacity(avg));
                let g_block = (k + n - l..=k + n + l).map(|y| rate.eval(occ[y % n])).sum::<f64>() / (2 * l + 1) as f64;
                block[li][pi] += g_block - phi;
                single[li][pi] += rate.eval(occ[k]) - phi;
            }
        }
    }
    let obs = observations as f64;
    Ok(ls
        .iter()
        .enumerate()
        .map(|(li, &l)| BlockRow {
            l,
            block_deviation: block[li].iter().map(|s| (s / obs).abs()).sum::<f64>() / panel as f64,
            site_deviation: single[li].iter().map(|s| (s / obs).abs()).sum::<f64>() / panel as f64,
        })
        .collect())
}

/// Grand-canonical value of `E[g(X_0)] - E[Phi(block mean)]` for a block of
/// `2l + 1` i.i.d. `P_phi` sites, by direct sampling.
pub fn one_block_bias(gc: &GrandCanonical, c: f64, l: usize, samples: usize, seed: u64) -> Result<f64> {
    let phi = gc.fugacity(c);
    let marginal = gc.marginal(phi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = 2 * l + 1;
    let mut acc = 0.0;
    for _ in 0..samples {
        let sum: u64 = (0..width).map(|_| marginal.sample(&mut rng)).sum();
        acc += gc.fugacity(sum as f64 / width as f64);
    }
    Ok(phi - acc / samples as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassBudget {
    pub simulator_conserved: bool,
    pub solver_drift: f64,
    pub solver_pass: bool,
    /// Largest `|simulator mass - solver mass|` at the largest `N`.
    pub cross_gap: f64,
    pub cross_pass: bool,
    pub pass: bool,
}

pub const SOLVER_DRIFT_TOL: f64 = 1e-6;

pub fn mass_budget_check(report: &ConvergenceReport, audit: &MassAudit, cross_tol: f64) -> MassBudget {
    let n_hi = report.n_ladder.iter().copied().max().unwrap_or(0);
    let simulator_conserved = report.mass.iter().all(|m| m.conserved);
    let cross_gap = report
        .mass
        .iter()
        .filter(|m| m.n == n_hi)
        .map(|m| (m.empirical - m.solver).abs())
        .fold(0.0, f64::max);
    let solver_pass = audit.drift < SOLVER_DRIFT_TOL;
    let cross_pass = cross_gap < cross_tol;
    MassBudget {
        simulator_conserved,
        solver_drift: audit.drift,
        solver_pass,
        cross_gap,
        cross_pass,
        pass: simulator_conserved && solver_pass && cross_pass,
    }
}

/// Per-replica exact time average of `g(eta(k_j)) / (lambda_j N^beta_j)`
/// over `[t0, t1]`, starting from the local equilibrium of `init`.
pub fn defect_rate_average(
    gc: &GrandCanonical,
    defects: &DefectSet,
    init: &InitialCondition,
    n: usize,
    j: usize,
    window: (f64, f64),
    replicas: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let (t0, t1) = window;
    if !(t1 > t0 && t0 >= 0.0) {
        return Err(Error::config("window", "need 0 <= t0 < t1"));
    }
    if j >= defects.len() {
        return Err(Error::config("defect", format!("no defect {j}")));
    }
    let divisor = defects.specs()[j].divisor(n);
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let laws = build_local_equilibrium(gc, &init.profile, &init.atoms, init.c0, n, defects)?;
            let mut state = SimState::init(gc, defects, Initial::Laws(laws), replica_rng(seed, r as u64, n as u64))?;
            let k = state.defect_sites()[j];
            state.advance_to(t0);
            let rate = gc.rate().clone();
            let mut occ = state.occupancies()[k];
            let mut last = t0;
            let mut integral = 0.0;
            let n_sites = state.n();
            state.advance_to_with(t1, |e| {
                let to = (e.site as i64 + e.dir as i64).rem_euclid(n_sites as i64) as usize;
                if e.site == k || to == k {
                    integral += rate.eval(occ) * (e.t - last);
                    last = e.t;
                    if e.site == k {
                        occ -= 1;
                    } else {
                        occ += 1;
                    }
                }
            });
            integral += rate.eval(occ) * (t1 - last);
            Ok(integral / (t1 - t0) / divisor)
        })
        .collect()
}
