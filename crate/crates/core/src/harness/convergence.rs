use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::defects::{DefectClass, DefectSet};
use crate::error::{Error, Result};
use crate::heat::FourierHeat;
use crate::measure::build_local_equilibrium;
use crate::pde::{solve, MacroState, Solution, SolverConfig};
use crate::profile::InitialCondition;
use crate::rate::RateFamily;
use crate::sim::{replica_rng, Initial, SimState};
use crate::thermo::GrandCanonical;

use super::stats::mean_se;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    /// The finite-difference solver on the configured grid.
    Solver,
    /// Fourier series of the heat equation; identity rate without defects.
    Fourier,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Largest allowed L1 distance at the largest `N`.
    pub max_l1: Option<f64>,
    /// Smallest allowed ratio L1(smallest N) / L1(largest N).
    pub min_l1_ratio: Option<f64>,
    /// Largest allowed `|occ / N - m_j(t)|` at the largest `N`.
    pub max_atom_error: Option<f64>,
    /// Largest allowed density error right of a super-slow defect.
    pub max_super_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceSetup {
    pub gc: GrandCanonical,
    pub defects: DefectSet,
    pub init: InitialCondition,
    pub n_ladder: Vec<usize>,
    pub replicas: usize,
    pub theta: f64,
    pub times: Vec<f64>,
    pub m: usize,
    pub cfl: f64,
    pub reference: Reference,
    pub seed: u64,
    pub thresholds: Thresholds,
}

impl ConvergenceSetup {
    pub fn validate(&self) -> Result<()> {
        if self.n_ladder.is_empty() {
            return Err(Error::config("harness.n_ladder", "ladder is empty"));
        }
        if self.replicas < 2 {
            return Err(Error::config("harness.replicas", "standard errors need at least 2 replicas"));
        }
        if !(self.theta > 0.0 && self.theta < 0.5) {
            return Err(Error::config("harness.theta", "must lie in (0, 1/2)"));
        }
        let n_min = *self.n_ladder.iter().min().unwrap();
        if self.theta * (n_min as f64) < 4.0 {
            return Err(Error::config("harness.theta", format!("theta * N = {} < 4 at N = {n_min}", self.theta * n_min as f64)));
        }
        if self.times.is_empty() {
            return Err(Error::config("harness.times", "no observation times"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) || !(self.times[0] >= 0.0) {
            return Err(Error::config("harness.times", "times must be nonnegative and increasing"));
        }
        if self.reference == Reference::Fourier && !(self.gc.rate().is_identity() && self.defects.is_empty()) {
            return Err(Error::config("harness.reference", "the Fourier reference needs g(n) = n and no defects"));
        }
        Ok(())
    }

    fn solver_config(&self) -> SolverConfig {
        SolverConfig { m: self.m, cfl: self.cfl, t_end: *self.times.last().unwrap(), snapshot_times: self.times.clone() }
    }

    /// Evaluation points: the solver grid.
    pub fn grid(&self) -> Vec<f64> {
        (0..self.m).map(|i| i as f64 / self.m as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L1Row {
    pub n: usize,
    pub t: f64,
    /// L1 distance of the replica-averaged smoothed profile.
    pub l1: f64,
    /// Mean and standard error of the per-replica L1 distances.
    pub replica_l1_mean: f64,
    pub replica_l1_se: f64,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomRow {
    pub n: usize,
    pub t: f64,
    pub defect: usize,
    pub site: usize,
    /// `occ(k_j) / N`, replica mean and standard error.
    pub empirical: f64,
    pub empirical_se: f64,
    pub solver: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuperRow {
    pub n: usize,
    pub t: f64,
    pub defect: usize,
    pub site: usize,
    /// `occ(k_j) N^(-beta/alpha)` against `(lambda Phi(c0))^(1/alpha)`.
    pub scaled: f64,
    pub scaled_se: f64,
    pub target: f64,
    pub scaled_error: f64,
    /// Density on the window `(x_j, x_j + 2 theta]`, both sides.
    pub window_empirical: f64,
    pub window_reference: f64,
    pub window_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassRow {
    pub n: usize,
    pub t: f64,
    /// Replica mean of `(total - super-slow occupancy) / N`.
    pub empirical: f64,
    pub solver: f64,
    /// Every replica kept its particle count exactly.
    pub conserved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub n: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub empirical: Vec<f64>,
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaFailure {
    pub n: usize,
    pub replica: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub seed: u64,
    pub theta: f64,
    pub replicas: usize,
    pub m: usize,
    pub reference: Reference,
    pub n_ladder: Vec<usize>,
    pub times: Vec<f64>,
    pub l1: Vec<L1Row>,
    pub atoms: Vec<AtomRow>,
    pub super_slow: Vec<SuperRow>,
    pub mass: Vec<MassRow>,
    pub profiles: Vec<ProfileRow>,
    pub failures: Vec<ReplicaFailure>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl ConvergenceReport {
    pub fn l1_at(&self, n: usize, t: f64) -> Option<&L1Row> {
        self.l1.iter().find(|r| r.n == n && r.t == t)
    }

    fn evaluate(&mut self, th: &Thresholds) {
        let n_lo = *self.n_ladder.iter().min().unwrap();
        let n_hi = *self.n_ladder.iter().max().unwrap();
        let mut checks = Vec::new();
        let mut push = |name: String, value: f64, threshold: f64, pass: bool| {
            checks.push(Check { name, value, threshold, pass: pass && value.is_finite() })
        };
        for &t in &self.times {
            let hi = self.l1_at(n_hi, t);
            if let (Some(max), Some(r)) = (th.max_l1, hi) {
                push(format!("l1[N={n_hi},t={t}]"), r.l1, max, r.l1 < max);
            }
            if let (Some(min), Some(r), Some(lo)) = (th.min_l1_ratio, hi, self.l1_at(n_lo, t)) {
                let ratio = lo.l1 / r.l1;
                push(format!("l1_ratio[N={n_lo}/{n_hi},t={t}]"), ratio, min, ratio >= min);
            }
        }
        if let Some(max) = th.max_atom_error {
            for a in self.atoms.iter().filter(|a| a.n == n_hi) {
                push(format!("atom[j={},N={},t={}]", a.defect, a.n, a.t), a.error, max, a.error < max);
            }
        }
        if let Some(max) = th.max_super_error {
            for s in self.super_slow.iter().filter(|s| s.n == n_hi) {
                push(format!("super_window[j={},N={},t={}]", s.defect, s.n, s.t), s.window_error, max, s.window_error < max);
            }
        }
        let complete = self.failures.is_empty();
        self.pass = complete && checks.iter().all(|c| c.pass);
        self.checks = checks;
    }
}

/// Box-kernel smoothing of the scaled empirical measure: at each `x`,
/// `(2 theta N)^-1 sum occ[k]` over the sites with `k / N` in
/// `[x - theta, x + theta)`, skipping the `excluded` sites.
pub fn smoothed_density(occ: &[u64], excluded: &[usize], xs: &[f64], theta: f64) -> Vec<f64> {
    let n = occ.len();
    let nf = n as f64;
    let mut prefix = Vec::with_capacity(n + 1);
    let mut acc = 0u64;
    prefix.push(0u64);
    for (k, &o) in occ.iter().enumerate() {
        if !excluded.contains(&k) {
            acc += o;
        }
        prefix.push(acc);
    }
    let total = acc as i128;
    let cum = |k: i64| -> i128 {
        let q = k.div_euclid(n as i64) as i128;
        let r = k.rem_euclid(n as i64) as usize;
        q * total + prefix[r] as i128
    };
    xs.iter()
        .map(|&x| {
            let a = ((x - theta) * nf).ceil() as i64;
            let b = ((x + theta) * nf).ceil() as i64;
            (cum(b) - cum(a)) as f64 / (2.0 * theta * nf)
        })
        .collect()
}

/// Mean occupancy per site over the sites with `k / N` in `(a, b]`.
fn window_density(occ: &[u64], a: f64, b: f64) -> f64 {
    let n = occ.len();
    let nf = n as f64;
    let lo = (a * nf).floor() as i64 + 1;
    let hi = (b * nf).floor() as i64;
    let count = (hi - lo + 1).max(1);
    (lo..=hi).map(|k| occ[k.rem_euclid(n as i64) as usize]).sum::<u64>() as f64 / count as f64
}

/// Interpolated solver density averaged over `(a, b]`.
fn reference_window(state: &MacroState, a: f64, b: f64) -> f64 {
    state.window_averages(&[0.5 * (a + b)], 0.5 * (b - a))[0]
}

struct ReplicaRun {
    profiles: Vec<Vec<f64>>,
    /// Per time, per critical defect: `occ / N`.
    atoms: Vec<Vec<f64>>,
    /// Per time, per super defect: scaled occupancy and window density.
    supers: Vec<Vec<(f64, f64)>>,
    bulk_mass: Vec<f64>,
    conserved: bool,
}

fn run_replica(setup: &ConvergenceSetup, n: usize, replica: usize, xs: &[f64]) -> Result<ReplicaRun> {
    let laws = build_local_equilibrium(&setup.gc, &setup.init.profile, &setup.init.atoms, setup.init.c0, n, &setup.defects)?;
    let rng = replica_rng(setup.seed, replica as u64, n as u64);
    let mut state = SimState::init(&setup.gc, &setup.defects, Initial::Laws(laws), rng)?;
    let sites = state.defect_sites().to_vec();
    let excluded: Vec<usize> = setup
        .defects
        .iter()
        .filter(|(_, _, c)| *c != DefectClass::Sub)
        .map(|(j, _, _)| sites[j])
        .collect();
    let nf = n as f64;
    let initial_total = state.total();
    let alpha = setup.gc.family().alpha();

    let mut out = ReplicaRun { profiles: vec![], atoms: vec![], supers: vec![], bulk_mass: vec![], conserved: true };
    for &t in &setup.times {
        state.advance_to(t);
        let occ = state.occupancies();
        out.profiles.push(smoothed_density(occ, &excluded, xs, setup.theta));
        let mut atoms = Vec::new();
        let mut supers = Vec::new();
        let mut super_occ = 0u64;
        for (j, d, class) in setup.defects.iter() {
            let k = sites[j];
            match class {
                DefectClass::Critical => atoms.push(occ[k] as f64 / nf),
                DefectClass::Super => {
                    super_occ += occ[k];
                    let scaled = occ[k] as f64 * nf.powf(-d.beta / alpha.unwrap_or(1.0));
                    let window = window_density(occ, d.x, d.x + 2.0 * setup.theta);
                    supers.push((scaled, window));
                }
                DefectClass::Sub => {}
            }
        }
        out.atoms.push(atoms);
        out.supers.push(supers);
        out.bulk_mass.push((state.total() - super_occ) as f64 / nf);
        out.conserved &= state.total() == initial_total && state.occupancies().iter().sum::<u64>() == initial_total;
    }
    Ok(out)
}

/// Reference densities smoothed with the same kernel, per time.
fn reference_profiles(setup: &ConvergenceSetup, solution: &Solution, xs: &[f64]) -> Vec<Vec<f64>> {
    match setup.reference {
        Reference::Solver => solution.snapshots.iter().map(|s| s.window_averages(xs, setup.theta)).collect(),
        Reference::Fourier => {
            let heat = FourierHeat::new(&setup.init.profile);
            setup
                .times
                .iter()
                .map(|&t| xs.iter().map(|&x| heat.window_average(t, x, setup.theta)).collect())
                .collect()
        }
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Microscopic-versus-macroscopic comparison over the `N` ladder.
pub fn run_convergence(setup: &ConvergenceSetup) -> Result<ConvergenceReport> {
    setup.validate()?;
    let solution = solve(&setup.gc, &setup.defects, &setup.init, &setup.solver_config())?;
    let xs = setup.grid();
    let refs = reference_profiles(setup, &solution, &xs);

    let jobs: Vec<(usize, usize)> = setup
        .n_ladder
        .iter()
        .flat_map(|&n| (0..setup.replicas).map(move |r| (n, r)))
        .collect();
    let runs: Vec<Result<ReplicaRun>> = jobs.par_iter().map(|&(n, r)| run_replica(setup, n, r, &xs)).collect();

    let mut report = ConvergenceReport {
        seed: setup.seed,
        theta: setup.theta,
        replicas: setup.replicas,
        m: setup.m,
        reference: setup.reference,
        n_ladder: setup.n_ladder.clone(),
        times: setup.times.clone(),
        l1: vec![],
        atoms: vec![],
        super_slow: vec![],
        mass: vec![],
        profiles: vec![],
        failures: vec![],
        checks: vec![],
        pass: false,
    };
    let criticals: Vec<usize> = setup.defects.of_class(DefectClass::Critical).map(|(j, _)| j).collect();
    let supers: Vec<usize> = setup.defects.of_class(DefectClass::Super).map(|(j, _)| j).collect();

    for &n in &setup.n_ladder {
        let mut ok: Vec<&ReplicaRun> = Vec::new();
        for ((jn, r), run) in jobs.iter().zip(&runs) {
            if *jn != n {
                continue;
            }
            match run {
                Ok(run) => ok.push(run),
                Err(e) => report.failures.push(ReplicaFailure { n, replica: *r, reason: e.to_string() }),
            }
        }
        if ok.is_empty() {
            continue;
        }
        let sites = setup.defects.lattice_sites(n)?;
        for (ti, &t) in setup.times.iter().enumerate() {
            let reference = &refs[ti];
            let mean_profile: Vec<f64> = (0..xs.len())
                .map(|i| ok.iter().map(|r| r.profiles[ti][i]).sum::<f64>() / ok.len() as f64)
                .collect();
            let per_replica: Vec<f64> = ok.iter().map(|r| l1(&r.profiles[ti], reference)).collect();
            let (replica_l1_mean, replica_l1_se) = mean_se(&per_replica);
            report.l1.push(L1Row { n, t, l1: l1(&mean_profile, reference), replica_l1_mean, replica_l1_se, replicas: ok.len() });
            report.profiles.push(ProfileRow { n, t, x: xs.clone(), empirical: mean_profile, reference: reference.clone() });

            let snap = &solution.snapshots[ti];
            for (a, &j) in criticals.iter().enumerate() {
                let (empirical, empirical_se) = mean_se(&ok.iter().map(|r| r.atoms[ti][a]).collect::<Vec<_>>());
                let solver = snap.atoms[&j];
                report.atoms.push(AtomRow { n, t, defect: j, site: sites[j], empirical, empirical_se, solver, error: (empirical - solver).abs() });
            }
            for (a, &j) in supers.iter().enumerate() {
                let d = setup.defects.specs()[j];
                let alpha = match setup.gc.family() {
                    RateFamily::PowerAlpha(alpha) => alpha,
                    RateFamily::Bounded => unreachable!("bounded rates have no super-slow defects"),
                };
                let target = (d.lambda * setup.gc.fugacity(setup.init.c0)).powf(1.0 / alpha);
                let (scaled, scaled_se) = mean_se(&ok.iter().map(|r| r.supers[ti][a].0).collect::<Vec<_>>());
                let (window_empirical, _) = mean_se(&ok.iter().map(|r| r.supers[ti][a].1).collect::<Vec<_>>());
                let window_reference = reference_window(snap, d.x, d.x + 2.0 * setup.theta);
                report.super_slow.push(SuperRow {
                    n,
                    t,
                    defect: j,
                    site: sites[j],
                    scaled,
                    scaled_se,
                    target,
                    scaled_error: (scaled - target).abs(),
                    window_empirical,
                    window_reference,
                    window_error: (window_empirical - window_reference).abs(),
                });
            }
            let empirical = ok.iter().map(|r| r.bulk_mass[ti]).sum::<f64>() / ok.len() as f64;
            report.mass.push(MassRow { n, t, empirical, solver: snap.total_mass(), conserved: ok.iter().all(|r| r.conserved) });
        }
    }
    report.evaluate(&setup.thresholds);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_counts_half_open_windows() {
        let mut occ = vec![0u64; 16];
        occ[0] = 8;
        occ[4] = 8;
        // theta = 1/8: window [x - 2/16, x + 2/16) holds 4 sites
        let xs = [0.0, 2.0 / 16.0, 15.0 / 16.0, 0.25];
        let d = smoothed_density(&occ, &[], &xs, 0.125);
        assert_eq!(d, vec![2.0, 2.0, 2.0, 2.0]);
        let d = smoothed_density(&occ, &[0], &xs, 0.125);
        assert_eq!(d, vec![0.0, 0.0, 0.0, 2.0]);
        // constant occupancy gives a constant density
        let d = smoothed_density(&[3; 64], &[], &[0.1, 0.5, 0.99], 1.0 / 16.0);
        assert!(d.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn window_density_is_right_of_the_defect() {
        let mut occ = vec![1u64; 32];
        occ[16] = 1000;
        assert_eq!(window_density(&occ, 0.5, 0.5 + 4.0 / 32.0), 1.0);
    }
}
