use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::defects::{DefectClass, DefectSet};
use crate::error::{Error, Result};
use crate::measure::{sample_configuration, InvariantMeasureSpec, SiteLaw};
use crate::rate::RateFunction;
use crate::thermo::GrandCanonical;

use super::sumtree::SumTree;

/// Integer occupancies on the torus `Z / NZ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Configuration {
    occ: Vec<u64>,
    total: u64,
}

impl Configuration {
    pub fn new(occ: Vec<u64>) -> Self {
        let total = occ.iter().sum();
        Configuration { occ, total }
    }

    pub fn len(&self) -> usize {
        self.occ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occ.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn occupancies(&self) -> &[u64] {
        &self.occ
    }

    #[inline]
    pub fn get(&self, k: usize) -> u64 {
        self.occ[k]
    }
}

/// Initial condition for [`SimState::init`].
#[derive(Debug, Clone)]
pub enum Initial {
    Laws(Vec<SiteLaw>),
    Invariant(InvariantMeasureSpec),
    Occupancies(Vec<u64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SiteKind {
    Regular,
    Defect { index: usize, class: DefectClass },
}

/// One particle jump: from `site` to `site + dir` at macroscopic time `t`,
/// after a holding time `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub site: usize,
    pub dir: i8,
    pub dt: f64,
    pub t: f64,
}

/// Zero-range process `eta_t = xi_{N^2 t}` on `N` sites, simulated in
/// macroscopic time.
///
/// Site `k` carries weight `w_k = 2 N^2 g(eta(k)) / d_k` with `d_k = 1` at
/// regular sites and `lambda_j N^beta_j` at defect sites; the factor 2
/// accounts for the two jump directions.
#[derive(Debug, Clone)]
pub struct SimState {
    config: Configuration,
    rate: RateFunction,
    defects: DefectSet,
    defect_sites: Vec<usize>,
    kinds: Vec<SiteKind>,
    site_scale: Vec<f64>,
    tree: SumTree,
    t: f64,
    events: u64,
    rng: ChaCha8Rng,
}

impl SimState {
    pub fn init(gc: &GrandCanonical, defects: &DefectSet, initial: Initial, mut rng: ChaCha8Rng) -> Result<Self> {
        let occ = match initial {
            Initial::Occupancies(occ) => occ,
            Initial::Laws(laws) => sample_configuration(gc, &laws, &mut rng)?,
            Initial::Invariant(spec) => sample_configuration(gc, &spec.laws(), &mut rng)?,
        };
        Self::from_occupancies(gc.rate().clone(), defects.clone(), occ, rng)
    }

    pub fn from_occupancies(
        rate: RateFunction,
        defects: DefectSet,
        occ: Vec<u64>,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let n = occ.len();
        if n < 2 {
            return Err(Error::config("n", "torus needs at least 2 sites"));
        }
        let defect_sites = defects.lattice_sites(n)?;
        let base = 2.0 * (n as f64) * (n as f64);
        let mut kinds = vec![SiteKind::Regular; n];
        let mut site_scale = vec![base; n];
        for ((j, d, class), &k) in defects.iter().zip(&defect_sites) {
            kinds[k] = SiteKind::Defect { index: j, class };
            site_scale[k] = base / d.divisor(n);
        }
        let weights: Vec<f64> = occ
            .iter()
            .zip(&site_scale)
            .map(|(&o, &s)| s * rate.eval(o))
            .collect();
        Ok(SimState {
            config: Configuration::new(occ),
            rate,
            defects,
            defect_sites,
            kinds,
            site_scale,
            tree: SumTree::new(&weights),
            t: 0.0,
            events: 0,
            rng,
        })
    }

    pub fn n(&self) -> usize {
        self.config.len()
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn occupancies(&self) -> &[u64] {
        self.config.occupancies()
    }

    pub fn total(&self) -> u64 {
        self.config.total
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn rate(&self) -> &RateFunction {
        &self.rate
    }

    pub fn defects(&self) -> &DefectSet {
        &self.defects
    }

    /// Lattice site of each defect, in defect order.
    pub fn defect_sites(&self) -> &[usize] {
        &self.defect_sites
    }

    pub fn kind(&self, k: usize) -> SiteKind {
        self.kinds[k]
    }

    pub fn is_super_slow(&self, k: usize) -> bool {
        matches!(self.kinds[k], SiteKind::Defect { class: DefectClass::Super, .. })
    }

    /// Current sampling weight of site `k`.
    pub fn weight(&self, k: usize) -> f64 {
        self.tree.get(k)
    }

    /// Total jump rate in macroscopic time (both directions).
    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    /// Per-site departure rate `g_{k,N}(n)` (one direction, unscaled).
    pub fn site_rate(&self, k: usize, n: u64) -> f64 {
        self.site_scale[k] * self.rate.eval(n) / (2.0 * (self.n() as f64).powi(2))
    }

    pub(crate) fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// True when the incremental index equals a fresh rebuild bit for bit.
    pub fn rate_index_consistent(&self) -> bool {
        let weights: Vec<f64> = self
            .config
            .occ
            .iter()
            .zip(&self.site_scale)
            .map(|(&o, &s)| s * self.rate.eval(o))
            .collect();
        SumTree::new(&weights) == self.tree
    }

    #[inline]
    pub(crate) fn move_particle(&mut self, from: usize, to: usize) {
        let occ = &mut self.config.occ;
        occ[from] -= 1;
        occ[to] += 1;
        let (a, b) = (occ[from], occ[to]);
        self.tree.set(from, self.site_scale[from] * self.rate.eval(a));
        self.tree.set(to, self.site_scale[to] * self.rate.eval(b));
        self.events += 1;
    }

    #[inline]
    pub(crate) fn target(&self, site: usize, dir: i8) -> usize {
        let n = self.n();
        if dir > 0 {
            if site + 1 == n {
                0
            } else {
                site + 1
            }
        } else if site == 0 {
            n - 1
        } else {
            site - 1
        }
    }

    #[inline]
    pub(crate) fn advance_clock(&mut self, dt: f64) {
        self.t += dt;
    }

    /// Picks the jumping site and direction and performs the jump.
    #[inline]
    fn jump(&mut self, total_rate: f64) -> (usize, i8) {
        let bits = self.rng.next_u64();
        let dir = if bits & 1 == 1 { 1 } else { -1 };
        let u = (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let site = self.tree.sample(u * total_rate);
        let to = self.target(site, dir);
        self.move_particle(site, to);
        (site, dir)
    }

    /// One event of the chain. `None` when no particle can move (the state
    /// is absorbing); the clock is not advanced in that case.
    pub fn step(&mut self) -> Option<Event> {
        let total_rate = self.tree.total();
        if self.config.total == 0 || !(total_rate > 0.0) {
            return None;
        }
        let dt = self.rng.sample::<f64, _>(Exp1) / total_rate;
        self.t += dt;
        let (site, dir) = self.jump(total_rate);
        Some(Event { site, dir, dt, t: self.t })
    }

    /// Runs events until the next one would pass `t_target`, then sets
    /// the clock to `t_target`. Returns the number of events performed.
    pub fn advance_to(&mut self, t_target: f64) -> u64 {
        self.advance_to_with(t_target, |_| {})
    }

    pub fn advance_to_with(&mut self, t_target: f64, mut on_event: impl FnMut(&Event)) -> u64 {
        assert!(t_target >= self.t, "cannot run backwards from {} to {t_target}", self.t);
        let start = self.events;
        loop {
            let total_rate = self.tree.total();
            if self.config.total == 0 || !(total_rate > 0.0) {
                break;
            }
            let dt = self.rng.sample::<f64, _>(Exp1) / total_rate;
            // memorylessness: the overshooting draw can be discarded
            if self.t + dt > t_target {
                break;
            }
            self.t += dt;
            let (site, dir) = self.jump(total_rate);
            on_event(&Event { site, dir, dt, t: self.t });
        }
        self.t = t_target;
        self.events - start
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defects::DefectSpec;
    use crate::measure::build_invariant;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn explicit_occupancies() {
        let s = SimState::from_occupancies(RateFunction::identity(), DefectSet::empty(), vec![0, 3, 0, 0], rng(1)).unwrap();
        assert_eq!(s.total(), 3);
        for k in [0, 2, 3] {
            assert_eq!(s.weight(k), 0.0);
        }
        assert!(s.weight(1) > 0.0);
    }

    #[test]
    fn single_particle_moves_to_a_neighbour() {
        for seed in 0..20 {
            let mut s = SimState::from_occupancies(RateFunction::identity(), DefectSet::empty(), vec![1, 0, 0, 0], rng(seed)).unwrap();
            let ev = s.step().unwrap();
            assert_eq!(ev.site, 0);
            assert_eq!(s.total(), 1);
            assert!(s.occupancies()[1] == 1 || s.occupancies()[3] == 1);
        }
    }

    #[test]
    fn empty_configuration_is_absorbing() {
        let mut s = SimState::from_occupancies(RateFunction::identity(), DefectSet::empty(), vec![0; 8], rng(1)).unwrap();
        assert!(s.step().is_none());
        assert_eq!(s.time(), 0.0);
        assert_eq!(s.advance_to(0.7), 0);
        assert_eq!(s.time(), 0.7);
    }

    #[test]
    fn advance_to_current_time_does_nothing() {
        let mut s = SimState::from_occupancies(RateFunction::identity(), DefectSet::empty(), vec![5; 8], rng(1)).unwrap();
        assert_eq!(s.advance_to(0.0), 0);
        assert_eq!(s.occupancies(), &[5; 8]);
    }

    #[test]
    fn defect_weight_is_divided() {
        let fam = RateFunction::rational().family();
        let d = DefectSet::new(vec![DefectSpec::new(0.5, 0.0, 2.0)], fam).unwrap();
        let n = 16;
        let mut occ = vec![0; n];
        occ[8] = 5;
        let s = SimState::from_occupancies(RateFunction::rational(), d, occ, rng(1)).unwrap();
        let expected = 2.0 * (n * n) as f64 * (5.0 / 6.0) / 2.0;
        assert!((s.weight(8) - expected).abs() < 1e-9);
        assert!((s.site_rate(8, 5) - (5.0 / 6.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_site_holding_time() {
        // N = 2, one particle: total rate 2 N^2 g(1) = 8
        let mut sum = 0.0;
        let reps = 200_000;
        let mut s = SimState::from_occupancies(RateFunction::identity(), DefectSet::empty(), vec![1, 0], rng(5)).unwrap();
        for _ in 0..reps {
            sum += s.step().unwrap().dt;
        }
        let mean = sum / reps as f64;
        // standard error 0.125 / sqrt(reps)
        assert!((mean - 0.125).abs() < 5.0 * 0.125 / (reps as f64).sqrt(), "{mean}");
    }

    #[test]
    fn conservation_and_index_consistency() {
        let gc = GrandCanonical::new(RateFunction::power(0.5).unwrap());
        let d = DefectSet::new(
            vec![DefectSpec::new(0.25, 0.5, 2.0), DefectSpec::new(0.75, 1.0, 1.0)],
            gc.family(),
        )
        .unwrap();
        let spec = build_invariant(&gc, 1.0, 64, &d).unwrap();
        let mut s = SimState::init(&gc, &d, Initial::Invariant(spec), rng(9)).unwrap();
        let total = s.total();
        for _ in 0..2000 {
            s.step().unwrap();
            assert!(s.rate_index_consistent());
        }
        assert_eq!(s.total(), total);
        assert_eq!(s.occupancies().iter().sum::<u64>(), total);
    }

    #[test]
    fn invariant_start_density() {
        let gc = GrandCanonical::new(RateFunction::identity());
        let spec = build_invariant(&gc, 1.0, 512, &DefectSet::empty()).unwrap();
        let s = SimState::init(&gc, &DefectSet::empty(), Initial::Invariant(spec), rng(2)).unwrap();
        let density = s.total() as f64 / 512.0;
        assert!((0.9..=1.1).contains(&density), "{density}");
    }

    #[test]
    fn same_seed_same_stream() {
        let gc = GrandCanonical::new(RateFunction::identity());
        let spec = build_invariant(&gc, 2.0, 32, &DefectSet::empty()).unwrap();
        let run = || {
            let mut s = SimState::init(&gc, &DefectSet::empty(), Initial::Invariant(spec.clone()), rng(77)).unwrap();
            let mut log = Vec::new();
            s.advance_to_with(0.01, |e| log.push((e.site, e.dir, e.t.to_bits())));
            log
        };
        assert_eq!(run(), run());
    }
}
