//! Exact simulation of the zero-range process in macroscopic time.

mod coupling;
mod observe;
mod state;
mod sumtree;

pub use coupling::{CoupledEvent, CoupledPair};
pub use observe::{block_average, EmpiricalMeasure, Side};
pub use state::{Configuration, Event, Initial, SimState, SiteKind};
pub use sumtree::SumTree;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for replica `replica` of a run seeded with `seed`: seed
/// `seed ^ replica` on stream `stream` (the lattice size, so ladders with
/// a shared seed stay independent).
pub fn replica_rng(seed: u64, replica: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ replica);
    rng.set_stream(stream);
    rng
}
