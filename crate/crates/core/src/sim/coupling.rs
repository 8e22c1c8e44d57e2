use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::defects::DefectSet;
use crate::error::{Error, Result};
use crate::rate::RateFunction;

use super::state::SimState;

/// Basic coupling of two copies `lower <= upper` sitewise.
///
/// One clock runs at the upper copy's total rate. At the chosen site and
/// direction both copies jump with probability `g(lower) / g(upper)`,
/// otherwise only the upper copy does. Monotone `g` keeps the order.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    lower: SimState,
    upper: SimState,
    rng: ChaCha8Rng,
    t: f64,
    events: u64,
    joint: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoupledEvent {
    pub site: usize,
    pub dir: i8,
    pub joint: bool,
    pub t: f64,
}

impl CoupledPair {
    pub fn new(
        rate: RateFunction,
        defects: DefectSet,
        lower: Vec<u64>,
        upper: Vec<u64>,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Incompatible(format!(
                "torus sizes differ: {} vs {}",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(site) = lower.iter().zip(&upper).position(|(a, b)| a > b) {
            return Err(Error::OrderViolation { site, lower: lower[site], upper: upper[site] });
        }
        // the copies never draw from their own generators
        let idle = ChaCha8Rng::seed_from_u64(0);
        let lower = SimState::from_occupancies(rate.clone(), defects.clone(), lower, idle.clone())?;
        let upper = SimState::from_occupancies(rate, defects, upper, idle)?;
        Ok(CoupledPair { lower, upper, rng, t: 0.0, events: 0, joint: 0 })
    }

    pub fn lower(&self) -> &SimState {
        &self.lower
    }

    pub fn upper(&self) -> &SimState {
        &self.upper
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Events in which both copies moved.
    pub fn joint_events(&self) -> u64 {
        self.joint
    }

    /// First site where the order fails, if any.
    pub fn order_violation(&self) -> Option<usize> {
        self.lower
            .occupancies()
            .iter()
            .zip(self.upper.occupancies())
            .position(|(a, b)| a > b)
    }

    pub fn step(&mut self) -> Option<CoupledEvent> {
        let total = self.upper.total_rate();
        if self.upper.total() == 0 || !(total > 0.0) {
            return None;
        }
        let dt = self.rng.sample::<f64, _>(Exp1) / total;
        self.t += dt;
        self.upper.advance_clock(dt);
        self.lower.advance_clock(dt);

        let bits = self.rng.next_u64();
        let dir = if bits & 1 == 1 { 1 } else { -1 };
        let u = (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let site = self.upper.tree().sample(u * total);
        let to = self.upper.target(site, dir);

        let w_up = self.upper.weight(site);
        let w_lo = self.lower.weight(site);
        let joint = w_lo > 0.0 && (w_lo >= w_up || self.rng.random::<f64>() * w_up < w_lo);
        self.upper.move_particle(site, to);
        if joint {
            self.lower.move_particle(site, to);
            self.joint += 1;
        }
        self.events += 1;
        Some(CoupledEvent { site, dir, joint, t: self.t })
    }

    /// Runs `events` coupled events, checking the order after each one.
    pub fn run_checked(&mut self, events: u64) -> Result<u64> {
        for done in 0..events {
            let Some(ev) = self.step() else { return Ok(done) };
            for k in [ev.site, self.upper.target(ev.site, ev.dir)] {
                let (a, b) = (self.lower.occupancies()[k], self.upper.occupancies()[k]);
                if a > b {
                    return Err(Error::OrderViolation { site: k, lower: a, upper: b });
                }
            }
        }
        Ok(events)
    }
}
