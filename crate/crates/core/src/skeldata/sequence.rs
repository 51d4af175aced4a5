use serde::{Deserialize, Serialize};

use super::{DataError, DomainSpec};
use crate::numerics::SeededRng;

/// One motion sample: `frames x joints x channels` coordinates, row major.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSequence {
    frames: usize,
    joints: usize,
    channels: usize,
    coords: Vec<f64>,
    pub label: usize,
    pub domain_tag: String,
}

impl SkeletonSequence {
    pub fn new(
        frames: usize,
        joints: usize,
        channels: usize,
        coords: Vec<f64>,
        label: usize,
        domain_tag: impl Into<String>,
    ) -> Result<Self, DataError> {
        if frames == 0 || joints == 0 || !(channels == 2 || channels == 3) {
            return Err(DataError::Shape(format!(
                "frames={frames} joints={joints} channels={channels}"
            )));
        }
        if coords.len() != frames * joints * channels {
            return Err(DataError::Shape(format!(
                "{} coordinates for {frames}x{joints}x{channels}",
                coords.len()
            )));
        }
        if let Some(index) = coords.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite { index });
        }
        Ok(Self {
            frames,
            joints,
            channels,
            coords,
            label,
            domain_tag: domain_tag.into(),
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub(crate) fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn index(&self, frame: usize, joint: usize, channel: usize) -> usize {
        (frame * self.joints + joint) * self.channels + channel
    }

    pub fn at(&self, frame: usize, joint: usize, channel: usize) -> f64 {
        self.coords[self.index(frame, joint, channel)]
    }

    /// The `channels` coordinates of one joint in one frame.
    pub fn joint(&self, frame: usize, joint: usize) -> &[f64] {
        let i = self.index(frame, joint, 0);
        &self.coords[i..i + self.channels]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.frames, self.joints, self.channels)
    }

    /// Diagonal of the axis-aligned bounding box over every frame and joint,
    /// zero-filled joints included.
    pub fn bbox_diagonal(&self) -> f64 {
        let c = self.channels;
        let mut lo = vec![f64::INFINITY; c];
        let mut hi = vec![f64::NEG_INFINITY; c];
        for point in self.coords.chunks_exact(c) {
            for k in 0..c {
                lo[k] = lo[k].min(point[k]);
                hi[k] = hi[k].max(point[k]);
            }
        }
        lo.iter().zip(&hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt()
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && self.label == other.label
            && self.domain_tag == other.domain_tag
            && self
                .coords
                .iter()
                .zip(&other.coords)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

/// Labeled sequences sharing one shape, class list and generating domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub sequences: Vec<SkeletonSequence>,
    pub class_names: Vec<String>,
    pub domain_spec: DomainSpec,
    pub split_tag: SplitTag,
}

impl DatasetBundle {
    pub fn new(
        sequences: Vec<SkeletonSequence>,
        class_names: Vec<String>,
        domain_spec: DomainSpec,
        split_tag: SplitTag,
    ) -> Result<Self, DataError> {
        let bundle = Self {
            sequences,
            class_names,
            domain_spec,
            split_tag,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let c = self.class_names.len();
        if let Some(first) = self.sequences.first() {
            let shape = first.shape();
            for (i, s) in self.sequences.iter().enumerate() {
                if s.shape() != shape {
                    return Err(DataError::Shape(format!(
                        "sample {i} has shape {:?}, expected {shape:?}",
                        s.shape()
                    )));
                }
                if s.label >= c {
                    return Err(DataError::LabelOutOfRange {
                        index: i,
                        label: s.label,
                        classes: c,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// `(frames, joints, channels)` of the first sequence.
    pub fn shape(&self) -> Option<(usize, usize, usize)> {
        self.sequences.first().map(SkeletonSequence::shape)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.sequences.iter().map(|s| s.label).collect()
    }

    pub fn with_sequences(&self, sequences: Vec<SkeletonSequence>, split_tag: SplitTag) -> Self {
        Self {
            sequences,
            class_names: self.class_names.clone(),
            domain_spec: self.domain_spec.clone(),
            split_tag,
        }
    }

    /// Seeded split that sends `round(fraction * n_c)` samples of every class
    /// `c` to the second bundle. Both halves keep the original sample order.
    pub fn stratified_split(
        &self,
        fraction: f64,
        rng: &SeededRng,
        first_tag: SplitTag,
        second_tag: SplitTag,
    ) -> Result<(DatasetBundle, DatasetBundle), DataError> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(DataError::InvalidParameter(format!("split fraction {fraction}")));
        }
        let mut second = vec![false; self.len()];
        for class in 0..self.num_classes() {
            let mut members: Vec<usize> = (0..self.len()).filter(|&i| self.sequences[i].label == class).collect();
            let mut r = rng.substream(&format!("split/class-{class}"));
            r.shuffle(&mut members);
            let take = (fraction * members.len() as f64).round() as usize;
            for &i in &members[..take] {
                second[i] = true;
            }
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (s, &to_second) in self.sequences.iter().zip(&second) {
            if to_second {
                b.push(s.clone());
            } else {
                a.push(s.clone());
            }
        }
        Ok((self.with_sequences(a, first_tag), self.with_sequences(b, second_tag)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(SkeletonSequence::new(1, 1, 4, vec![0.0; 4], 0, "x").is_err());
        assert!(SkeletonSequence::new(2, 2, 3, vec![0.0; 11], 0, "x").is_err());
        assert!(matches!(
            SkeletonSequence::new(1, 1, 2, vec![0.0, f64::NAN], 0, "x"),
            Err(DataError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn bbox_diagonal_of_unit_square() {
        let s = SkeletonSequence::new(1, 4, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0], 0, "x").unwrap();
        assert!((s.bbox_diagonal() - 2f64.sqrt()).abs() < 1e-15);
    }
}
