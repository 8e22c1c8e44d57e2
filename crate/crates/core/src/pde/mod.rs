//! Finite-difference solver for `d_t rho = d_xx Phi(rho)` on the unit
//! torus with the defect boundary mechanisms: a pinned value at
//! super-slow defects, an atom tied to the local density at critical
//! defects (power rates) and the complementarity pin for bounded rates.

mod flux;

use std::collections::BTreeMap;

use serde::Serialize;

pub use flux::FluxTable;

use crate::defects::{DefectClass, DefectSet};
use crate::error::{Error, Result};
use crate::profile::InitialCondition;
use crate::rate::RateFamily;
use crate::thermo::GrandCanonical;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub m: usize,
    /// `dt * g* / dx^2`, at most 1/2.
    pub cfl: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
}

impl SolverConfig {
    pub fn new(m: usize, t_end: f64, snapshot_times: Vec<f64>) -> Self {
        SolverConfig { m, cfl: 0.4, t_end, snapshot_times }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 4 {
            return Err(Error::config("solver.m", "grid needs at least 4 nodes"));
        }
        if !(self.cfl > 0.0) {
            return Err(Error::config("solver.cfl", "must be positive"));
        }
        if self.cfl > 0.5 {
            return Err(Error::Cfl { ratio: self.cfl });
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("solver.t_end", "must be finite and nonnegative"));
        }
        let mut last = 0.0;
        for &t in &self.snapshot_times {
            if !(t >= last) {
                return Err(Error::config("solver.snapshots", "times must be nonnegative and increasing"));
            }
            if t > self.t_end {
                return Err(Error::config("solver.snapshots", format!("time {t} is past t_end = {}", self.t_end)));
            }
            last = t;
        }
        Ok(())
    }
}

/// Grid densities on `x_i = i / M`, atom masses at critical defects and
/// absorbed-mass tallies at super-slow defects, keyed by defect index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroState {
    pub m: usize,
    pub t: f64,
    pub rho: Vec<f64>,
    pub atoms: BTreeMap<usize, f64>,
    pub reservoirs: BTreeMap<usize, f64>,
}

impl MacroState {
    pub fn dx(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// `dx * sum rho_i + sum m_j`.
    pub fn total_mass(&self) -> f64 {
        self.dx() * self.rho.iter().sum::<f64>() + self.atoms.values().sum::<f64>()
    }

    pub fn reservoir_total(&self) -> f64 {
        self.reservoirs.values().sum()
    }

    /// Piecewise-linear interpolant of the nodal values.
    pub fn value(&self, x: f64) -> f64 {
        let y = x.rem_euclid(1.0) * self.m as f64;
        let i = (y.floor() as usize).min(self.m - 1);
        let s = y - i as f64;
        (1.0 - s) * self.rho[i] + s * self.rho[(i + 1) % self.m]
    }

    /// `int_0^y` of the interpolant for `y` in `[0, 1]`.
    fn primitive(&self, prefix: &[f64], y: f64) -> f64 {
        let z = y * self.m as f64;
        let i = (z.floor() as usize).min(self.m - 1);
        let s = z - i as f64;
        let (a, b) = (self.rho[i], self.rho[(i + 1) % self.m]);
        prefix[i] + self.dx() * (a * s + 0.5 * (b - a) * s * s)
    }

    /// Averages of the interpolant over `[x - h, x + h]` for each `x`.
    pub fn window_averages(&self, xs: &[f64], h: f64) -> Vec<f64> {
        let dx = self.dx();
        let mut prefix = Vec::with_capacity(self.m + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for i in 0..self.m {
            acc += 0.5 * dx * (self.rho[i] + self.rho[(i + 1) % self.m]);
            prefix.push(acc);
        }
        let total = acc;
        let f = |x: f64| {
            let k = x.floor();
            k * total + self.primitive(&prefix, x - k)
        };
        xs.iter().map(|&x| (f(x + h) - f(x - h)) / (2.0 * h)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Transparent,
    Pinned,
}

/// Regime entered by a bounded-rate critical defect at time `t`. The first
/// entry per defect records the regime at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeSwitch {
    pub defect: usize,
    pub t: f64,
    pub step: u64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassAudit {
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_mass: f64,
    pub reservoir_total: f64,
    /// Largest per-step change of `total_mass + reservoirs`.
    pub max_step_drift: f64,
    /// `|total_mass + reservoirs - initial|` at the end.
    pub drift: f64,
    pub steps: u64,
    /// `(defect, t)` for every step where an atom had to be clamped at 0.
    pub clamps: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub dt: f64,
    pub snapshots: Vec<MacroState>,
    pub regime_log: Vec<RegimeSwitch>,
    pub mass_audit: MassAudit,
}

impl Solution {
    /// Regime sequence of defect `j`, with repeats collapsed.
    pub fn regimes(&self, j: usize) -> Vec<Regime> {
        let mut out: Vec<Regime> = Vec::new();
        for s in self.regime_log.iter().filter(|s| s.defect == j) {
            if out.last() != Some(&s.regime) {
                out.push(s.regime);
            }
        }
        out
    }

    pub fn at(&self, t: f64) -> Option<&MacroState> {
        self.snapshots.iter().find(|s| s.t == t)
    }
}

#[derive(Debug, Clone)]
enum Boundary {
    Pin { j: usize, node: usize, c0: f64 },
    Atom { j: usize, node: usize, lambda: f64, alpha: f64 },
    Complementarity { j: usize, node: usize, c_max: f64, pinned: bool },
}

pub struct Solver {
    flux: FluxTable,
    state: MacroState,
    boundaries: Vec<Boundary>,
    dt_max: f64,
    lipschitz: f64,
    fluxes: Vec<f64>,
    steps: u64,
    regime_log: Vec<RegimeSwitch>,
    clamps: Vec<(usize, f64)>,
}

impl Solver {
    pub fn new(gc: &GrandCanonical, defects: &DefectSet, init: &InitialCondition, m: usize, cfl: f64) -> Result<Self> {
        if !(cfl > 0.0) {
            return Err(Error::config("solver.cfl", "must be positive"));
        }
        if cfl > 0.5 {
            return Err(Error::Cfl { ratio: cfl });
        }
        init.profile.validate()?;
        if !init.atoms.is_empty() && init.atoms.len() != defects.len() {
            return Err(Error::config("initial.atoms", "need one entry per defect"));
        }
        let nodes = defects.grid_nodes(m)?;
        let dx = 1.0 / m as f64;
        let rho: Vec<f64> = (0..m)
            .map(|i| {
                let x = i as f64 * dx;
                init.profile.average(x - 0.5 * dx, x + 0.5 * dx).max(0.0)
            })
            .collect();

        let mut state = MacroState { m, t: 0.0, rho, atoms: BTreeMap::new(), reservoirs: BTreeMap::new() };
        let mut boundaries = Vec::new();
        let mut rho_max = init.profile.max_value().max(init.c0);
        for ((j, d, class), &node) in defects.iter().zip(&nodes) {
            let m0 = init.atom(j);
            if !(m0 >= 0.0 && m0.is_finite()) {
                return Err(Error::config("initial.atoms", format!("atom {j} must be finite and nonnegative")));
            }
            match (gc.family(), class) {
                (_, DefectClass::Sub) => {}
                (RateFamily::PowerAlpha(_), DefectClass::Super) => {
                    state.reservoirs.insert(j, 0.0);
                    boundaries.push(Boundary::Pin { j, node, c0: init.c0 });
                }
                (RateFamily::PowerAlpha(alpha), DefectClass::Critical) => {
                    state.atoms.insert(j, m0);
                    boundaries.push(Boundary::Atom { j, node, lambda: d.lambda, alpha });
                }
                (RateFamily::Bounded, DefectClass::Critical) => {
                    let c_max = gc.mean_density(1.0 / d.lambda)?;
                    rho_max = rho_max.max(c_max);
                    state.atoms.insert(j, m0);
                    boundaries.push(Boundary::Complementarity { j, node, c_max, pinned: m0 > 0.0 });
                }
                (RateFamily::Bounded, DefectClass::Super) => unreachable!("bounded rates have no super-slow defects"),
            }
        }

        let flux = FluxTable::new(gc, 1.5 * rho_max + 1.0);
        let lipschitz = gc.lipschitz();
        let mut solver = Solver {
            flux,
            fluxes: vec![0.0; m],
            state,
            boundaries,
            dt_max: cfl * dx * dx / lipschitz,
            lipschitz,
            steps: 0,
            regime_log: Vec::new(),
            clamps: Vec::new(),
        };
        for b in &solver.boundaries {
            if let Boundary::Complementarity { j, pinned, .. } = *b {
                let regime = if pinned { Regime::Pinned } else { Regime::Transparent };
                solver.regime_log.push(RegimeSwitch { defect: j, t: 0.0, step: 0, regime });
            }
        }
        // boundary relations hold from t = 0 on
        solver.apply_boundaries();
        Ok(solver)
    }

    pub fn state(&self) -> &MacroState {
        &self.state
    }

    pub fn dt_max(&self) -> f64 {
        self.dt_max
    }

    pub fn flux(&self) -> &FluxTable {
        &self.flux
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn regime_log(&self) -> &[RegimeSwitch] {
        &self.regime_log
    }

    /// Explicit Euler update of every node with the periodic stencil.
    pub fn step_bulk(&mut self, dt: f64) -> Result<()> {
        let dx = self.state.dx();
        let ratio = dt * self.lipschitz / (dx * dx);
        if ratio > 0.5 * (1.0 + 1e-12) {
            return Err(Error::Cfl { ratio });
        }
        let m = self.state.m;
        let rho = &mut self.state.rho;
        for (f, &r) in self.fluxes.iter_mut().zip(rho.iter()) {
            *f = self.flux.eval(r);
        }
        let f = &self.fluxes;
        let r = dt / (dx * dx);
        rho[0] += r * (f[m - 1] - 2.0 * f[0] + f[1]);
        for i in 1..m - 1 {
            rho[i] += r * (f[i - 1] - 2.0 * f[i] + f[i + 1]);
        }
        rho[m - 1] += r * (f[m - 2] - 2.0 * f[m - 1] + f[0]);
        Ok(())
    }

    fn apply_boundaries(&mut self) {
        let dx = self.state.dx();
        let t = self.state.t;
        for b in self.boundaries.iter_mut() {
            match b {
                Boundary::Pin { j, node, c0 } => {
                    let rho = &mut self.state.rho[*node];
                    *self.state.reservoirs.get_mut(j).unwrap() += dx * (*rho - *c0);
                    *rho = *c0;
                }
                Boundary::Atom { j, node, lambda, alpha } => {
                    let atom = self.state.atoms.get_mut(j).unwrap();
                    let lumped = *atom + dx * self.state.rho[*node];
                    if !(lumped > 0.0) {
                        if lumped < 0.0 {
                            self.clamps.push((*j, t));
                        }
                        *atom = 0.0;
                        self.state.rho[*node] = 0.0;
                        continue;
                    }
                    let rho = split_atom(&self.flux, lumped, dx, *lambda, *alpha);
                    self.state.rho[*node] = rho;
                    *atom = lumped - dx * rho;
                }
                Boundary::Complementarity { j, node, c_max, pinned } => {
                    let atom = self.state.atoms.get_mut(j).unwrap();
                    let rho = &mut self.state.rho[*node];
                    if *pinned {
                        *atom += dx * (*rho - *c_max);
                        if *atom <= 0.0 {
                            *rho = *c_max + *atom / dx;
                            *atom = 0.0;
                            *pinned = false;
                        } else {
                            *rho = *c_max;
                        }
                    } else if *rho > *c_max {
                        *atom = dx * (*rho - *c_max);
                        *rho = *c_max;
                        *pinned = true;
                    }
                    let regime = if *pinned { Regime::Pinned } else { Regime::Transparent };
                    let last = self.regime_log.iter().rev().find(|s| s.defect == *j).map(|s| s.regime);
                    if last != Some(regime) {
                        self.regime_log.push(RegimeSwitch { defect: *j, t, step: self.steps, regime });
                    }
                }
            }
        }
    }

    /// One full step: bulk update, then the boundary operations in defect
    /// order.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        self.step_bulk(dt)?;
        self.state.t += dt;
        self.steps += 1;
        self.apply_boundaries();
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        if let Some(node) = self.state.rho.iter().position(|r| !r.is_finite()) {
            return Err(Error::NotFinite { node, t: self.state.t });
        }
        if let Some((&node, _)) = self.state.atoms.iter().find(|(_, m)| !m.is_finite()) {
            return Err(Error::NotFinite { node, t: self.state.t });
        }
        Ok(())
    }

    /// Steps with equal sizes `<= dt_max` landing exactly on `t_target`.
    /// `on_step` sees the per-step change of `total_mass + reservoirs`.
    fn advance_audited(&mut self, t_target: f64, mut on_step: impl FnMut(f64)) -> Result<()> {
        let span = t_target - self.state.t;
        if span <= 0.0 {
            return Ok(());
        }
        let n = ((span / self.dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as u64;
        let dt = span / n as f64;
        let t0 = self.state.t;
        let mut before = self.state.total_mass() + self.state.reservoir_total();
        for i in 1..=n {
            self.step(dt)?;
            self.state.t = t0 + i as f64 * dt;
            let after = self.state.total_mass() + self.state.reservoir_total();
            if !after.is_finite() {
                self.check_finite()?;
            }
            on_step((after - before).abs());
            before = after;
        }
        self.state.t = t_target;
        Ok(())
    }

    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        self.advance_audited(t_target, |_| {})
    }

    /// Runs to `t_end` and records the requested snapshots.
    pub fn solve(mut self, config: &SolverConfig) -> Result<Solution> {
        config.validate()?;
        let initial = self.state.total_mass() + self.state.reservoir_total();
        let mut max_step_drift: f64 = 0.0;
        let mut snapshots = Vec::with_capacity(config.snapshot_times.len());
        for &t in &config.snapshot_times {
            self.advance_audited(t, |d| max_step_drift = max_step_drift.max(d))?;
            snapshots.push(self.state.clone());
        }
        self.advance_audited(config.t_end, |d| max_step_drift = max_step_drift.max(d))?;
        if config.snapshot_times.is_empty() {
            snapshots.push(self.state.clone());
        }
        let final_mass = self.state.total_mass();
        let reservoir_total = self.state.reservoir_total();
        Ok(Solution {
            dt: self.dt_max,
            snapshots,
            regime_log: self.regime_log,
            mass_audit: MassAudit {
                initial,
                final_mass,
                reservoir_total,
                max_step_drift,
                drift: (final_mass + reservoir_total - initial).abs(),
                steps: self.steps,
                clamps: self.clamps,
            },
        })
    }
}

/// Node value `rho` with `(lambda Phi(rho))^(1/alpha) + dx rho = lumped`.
fn split_atom(flux: &FluxTable, lumped: f64, dx: f64, lambda: f64, alpha: f64) -> f64 {
    let excess = |rho: f64| (lambda * flux.eval(rho)).powf(1.0 / alpha) + dx * rho - lumped;
    let (mut lo, mut hi) = (0.0, lumped / dx);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // the lower end keeps the atom nonnegative
    lo
}

pub fn solve(
    gc: &GrandCanonical,
    defects: &DefectSet,
    init: &InitialCondition,
    config: &SolverConfig,
) -> Result<Solution> {
    config.validate()?;
    Solver::new(gc, defects, init, config.m, config.cfl)?.solve(config)
}

/// `(1/M) sum_i |a_i - b_{i * ratio}|` between a grid and its refinement.
pub fn grid_l1(coarse: &MacroState, fine: &MacroState) -> f64 {
    assert!(fine.m.is_multiple_of(coarse.m), "grids {} and {} are not nested", coarse.m, fine.m);
    let ratio = fine.m / coarse.m;
    coarse
        .rho
        .iter()
        .enumerate()
        .map(|(i, &r)| (r - fine.rho[i * ratio]).abs())
        .sum::<f64>()
        / coarse.m as f64
}
