//! Snapshot subsampling. An episode yields one snapshot per context-editing
//! round; training pipelines cap the per-trajectory count to control batch
//! composition, sampling uniformly without replacement.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::trajectory::{Snapshot, Trajectory};

/// Uniformly samples `min(k, available)` of the trajectory's snapshots
/// without replacement, deterministically in `seed`. Output keeps round
/// order.
pub fn capture_snapshots(trajectory: &Trajectory, k: usize, seed: u64) -> Vec<Snapshot> {
    let available = trajectory.snapshots.len();
    if k >= available {
        return trajectory.snapshots.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, available, k).into_vec();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|i| trajectory.snapshots[i].clone())
        .collect()
}
