//! Jitter and keypoint-dropout corruptions.

use serde::{Deserialize, Serialize};

use super::{DataError, SkeletonSequence};
use crate::numerics::SeededRng;

/// Jitter levels of the corruption sweep, in bounding-box-diagonal units.
pub const JITTER_LEVELS: [f64; 4] = [0.0, 0.01, 0.05, 0.10];
/// Joints dropped per frame in the corruption sweep.
pub const DROP_LEVELS: [usize; 4] = [0, 1, 3, 5];

/// Adds `N(0, (sigma * bbox_diag)^2)` noise to every coordinate, where
/// `bbox_diag` is [`SkeletonSequence::bbox_diagonal`]. `sigma == 0` returns
/// an exact copy without touching `rng`.
pub fn jitter_joints(seq: &SkeletonSequence, sigma: f64, rng: &mut SeededRng) -> Result<SkeletonSequence, DataError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(DataError::InvalidParameter(format!("jitter sigma {sigma}")));
    }
    let mut out = seq.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let std = sigma * seq.bbox_diagonal();
    for v in out.coords_mut() {
        *v += std * rng.normal();
    }
    Ok(out)
}

/// Zeroes exactly `k` distinct joints, chosen uniformly, in every frame.
pub fn drop_keypoints(seq: &SkeletonSequence, k: usize, rng: &mut SeededRng) -> Result<SkeletonSequence, DataError> {
    let (t, j, c) = seq.shape();
    if k > j {
        return Err(DataError::InvalidParameter(format!("cannot drop {k} of {j} joints")));
    }
    let mut out = seq.clone();
    if k == 0 {
        return Ok(out);
    }
    for f in 0..t {
        for joint in rng.sample_distinct(j, k) {
            let i = (f * j + joint) * c;
            out.coords_mut()[i..i + c].fill(0.0);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub jitter_sigma: f64,
    pub drop_k: usize,
    pub seed: u64,
}

impl CorruptionSpec {
    /// Validates `jitter_sigma` against [`JITTER_LEVELS`] and `drop_k`
    /// against [`DROP_LEVELS`].
    pub fn new(jitter_sigma: f64, drop_k: usize, seed: u64) -> Result<Self, DataError> {
        if !JITTER_LEVELS.contains(&jitter_sigma) {
            return Err(DataError::InvalidParameter(format!("jitter sigma {jitter_sigma}")));
        }
        if !DROP_LEVELS.contains(&drop_k) {
            return Err(DataError::InvalidParameter(format!("drop k {drop_k}")));
        }
        Ok(Self {
            jitter_sigma,
            drop_k,
            seed,
        })
    }

    /// Jitter then dropout, each from its own per-sample substream.
    pub fn apply(&self, seq: &SkeletonSequence, sample: usize) -> Result<SkeletonSequence, DataError> {
        let root = SeededRng::new(self.seed);
        let mut jr = root.substream(&format!("jitter/{sample}"));
        let mut dr = root.substream(&format!("drop/{sample}"));
        let s = jitter_joints(seq, self.jitter_sigma, &mut jr)?;
        drop_keypoints(&s, self.drop_k, &mut dr)
    }
}
