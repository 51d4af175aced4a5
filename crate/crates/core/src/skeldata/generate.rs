//! Synthetic motion domains.
//!
//! Each class is a set of harmonic trajectories, one per body group. A sample
//! of class `c` places joint `j` (group `g`, distal weight `w_j`) at
//!
//! ```text
//! s * (rest_j + w_j * A_g * sin(2 pi f_g t / T + phi_g + delta_g))
//! ```
//!
//! with per-sample anthropometry scale `s`, amplitude jitter on `A_g`, phase
//! jitter `delta_g`, a random camera view and Gaussian sensor noise. 3D
//! domains keep depth; 2D domains are projected to 17 COCO keypoints in
//! image axes (y down) and mapped back into the 25-joint layout with zero
//! depth. Every sequence is
//! centred on its first-frame spine base and rounded to `f32` precision so
//! that it survives the on-disk format bit-exactly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::camera::{map_coco17_to_ntu25, project_to_2d, rotate_view};
use super::joints::{coco, ntu, BODY_GROUPS, NTU_JOINTS, NTU_REST};
use super::{DataError, DatasetBundle, SkeletonSequence, SplitTag};
use crate::numerics::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Source3d,
    StyleShift2d,
    SemanticShift,
}

impl DomainKind {
    pub fn tag(self) -> &'static str {
        match self {
            DomainKind::Source3d => "source3d",
            DomainKind::StyleShift2d => "style_shift_2d",
            DomainKind::SemanticShift => "semantic_shift",
        }
    }

    pub fn is_2d(self) -> bool {
        !matches!(self, DomainKind::Source3d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupMotion {
    pub amplitude: [f64; 3],
    /// Cycles per sequence.
    pub frequency: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassTemplate {
    pub name: String,
    /// One entry per body group, in `BodyGroup` order.
    pub groups: Vec<GroupMotion>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub frames: usize,
    pub classes: Vec<ClassTemplate>,
    /// Camera azimuth range in degrees, sampled uniformly per sequence.
    pub azimuth_deg: [f64; 2],
    pub elevation_deg: [f64; 2],
    pub noise_std: f64,
    /// Range of the per-sequence body scale.
    pub anthropometry: [f64; 2],
    /// Relative amplitude jitter per group and sequence.
    pub amplitude_jitter: f64,
    /// Phase jitter per group and sequence, radians.
    pub phase_jitter: f64,
    pub seed: u64,
}

/// Cycle counts available to source classes.
pub const SOURCE_FREQUENCIES: [f64; 2] = [0.5, 1.0];
/// Largest per-axis amplitude magnitude of a source class.
pub const SOURCE_MAX_AMPLITUDE: f64 = 0.35;
/// Cycle counts available to semantic-shift classes; disjoint from the source.
pub const SEMANTIC_FREQUENCIES: [f64; 2] = [1.5, 2.0];
/// Semantic-shift amplitude magnitudes lie in this range, above the source's.
pub const SEMANTIC_AMPLITUDE: [f64; 2] = [0.4, 0.6];

fn draw_templates(
    rng: &mut SeededRng,
    classes: usize,
    prefix: &str,
    frequencies: &[f64],
    amplitude: impl Fn(&mut SeededRng) -> f64,
) -> Vec<ClassTemplate> {
    (0..classes)
        .map(|c| ClassTemplate {
            name: format!("{prefix}_{c:02}"),
            groups: (0..BODY_GROUPS)
                .map(|_| GroupMotion {
                    amplitude: [amplitude(rng), amplitude(rng), amplitude(rng)],
                    frequency: frequencies[rng.below(frequencies.len())],
                    phase: rng.uniform_range(0.0, 2.0 * PI),
                })
                .collect(),
        })
        .collect()
}

impl DomainSpec {
    /// Multi-view 3D capture: near-frontal cameras, depth retained.
    pub fn source3d(classes: usize, frames: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed).substream("templates");
        let classes = draw_templates(&mut rng, classes, "action", &SOURCE_FREQUENCIES, |r| {
            r.uniform_range(-SOURCE_MAX_AMPLITUDE, SOURCE_MAX_AMPLITUDE)
        });
        Self {
            kind: DomainKind::Source3d,
            frames,
            classes,
            azimuth_deg: [-20.0, 20.0],
            elevation_deg: [0.0, 0.0],
            noise_std: 0.01,
            anthropometry: [0.9, 1.1],
            amplitude_jitter: 0.15,
            phase_jitter: 0.3,
            seed,
        }
    }

    /// Same actions as `source`, seen by monocular 2D pose estimation from
    /// wide camera angles.
    pub fn style_shift_2d(source: &DomainSpec, seed: u64) -> Self {
        Self {
            kind: DomainKind::StyleShift2d,
            frames: source.frames,
            classes: source.classes.clone(),
            azimuth_deg: [-80.0, 80.0],
            elevation_deg: [-10.0, 25.0],
            noise_std: 0.02,
            anthropometry: [0.8, 1.2],
            amplitude_jitter: source.amplitude_jitter,
            phase_jitter: source.phase_jitter,
            seed,
        }
    }

    /// Novel actions drawn from frequency and amplitude sets disjoint from
    /// the source's, observed in 2D.
    pub fn semantic_shift(classes: usize, frames: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed).substream("templates");
        let classes = draw_templates(&mut rng, classes, "novel", &SEMANTIC_FREQUENCIES, |r| {
            let m = r.uniform_range(SEMANTIC_AMPLITUDE[0], SEMANTIC_AMPLITUDE[1]);
            if r.uniform() < 0.5 {
                -m
            } else {
                m
            }
        });
        Self {
            kind: DomainKind::SemanticShift,
            frames,
            classes,
            azimuth_deg: [-80.0, 80.0],
            elevation_deg: [-10.0, 25.0],
            noise_std: 0.02,
            anthropometry: [0.8, 1.2],
            amplitude_jitter: 0.15,
            phase_jitter: 0.3,
            seed,
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidParameter(m.to_string()));
        if self.frames == 0 {
            return bad("frames must be positive");
        }
        if self.classes.is_empty() {
            return bad("domain needs at least one class");
        }
        if self.classes.iter().any(|c| c.groups.len() != BODY_GROUPS) {
            return bad("every class needs one motion per body group");
        }
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.azimuth_deg) || !ordered(self.elevation_deg) || !ordered(self.anthropometry) {
            return bad("ranges must be finite and ordered");
        }
        if !(self.noise_std >= 0.0 && self.amplitude_jitter >= 0.0 && self.phase_jitter >= 0.0) {
            return bad("noise and jitter must be non-negative");
        }
        Ok(())
    }
}

fn round_to_f32(v: f64) -> f64 {
    f64::from(v as f32)
}

fn sample_sequence(spec: &DomainSpec, label: usize, rng: &mut SeededRng) -> Result<SkeletonSequence, DataError> {
    let t = spec.frames;
    let template = &spec.classes[label];
    let scale = rng.uniform_range(spec.anthropometry[0], spec.anthropometry[1]);
    let azimuth = rng.uniform_range(spec.azimuth_deg[0], spec.azimuth_deg[1]);
    let elevation = rng.uniform_range(spec.elevation_deg[0], spec.elevation_deg[1]);
    let jitter: Vec<(f64, f64)> = (0..BODY_GROUPS)
        .map(|_| {
            (
                1.0 + rng.uniform_range(-spec.amplitude_jitter, spec.amplitude_jitter),
                rng.uniform_range(-spec.phase_jitter, spec.phase_jitter),
            )
        })
        .collect();

    let mut body = Vec::with_capacity(t * NTU_JOINTS * 3);
    for f in 0..t {
        for (rest, group, weight) in NTU_REST.iter() {
            let g = *group as usize;
            let m = &template.groups[g];
            let (amp, dphase) = jitter[g];
            let s = (2.0 * PI * m.frequency * f as f64 / t as f64 + m.phase + dphase).sin();
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = scale * (rest[k] + weight * amp * m.amplitude[k] * s);
            }
            if !spec.kind.is_2d() {
                p = rotate_view(p, azimuth.to_radians(), elevation.to_radians());
            }
            body.extend_from_slice(&p);
        }
    }
    let tag = spec.kind.tag();
    let body = SkeletonSequence::new(t, NTU_JOINTS, 3, body, label, tag)?;

    let mut seq = if spec.kind.is_2d() {
        let mut flat = project_to_2d(&body, azimuth, elevation, 1.0)?;
        // Pose estimators report image coordinates, with y growing downwards.
        for point in flat.coords_mut().chunks_exact_mut(2) {
            point[1] = -point[1];
            point[0] += spec.noise_std * rng.normal();
            point[1] += spec.noise_std * rng.normal();
        }
        let hip = |s: &SkeletonSequence, k: usize| 0.5 * (s.at(0, coco::LEFT_HIP, k) + s.at(0, coco::RIGHT_HIP, k));
        let origin = [hip(&flat, 0), hip(&flat, 1)];
        for point in flat.coords_mut().chunks_exact_mut(2) {
            point[0] -= origin[0];
            point[1] -= origin[1];
        }
        map_coco17_to_ntu25(&flat)?
    } else {
        let mut b = body;
        for v in b.coords_mut() {
            *v += spec.noise_std * rng.normal();
        }
        let origin: Vec<f64> = b.joint(0, ntu::SPINE_BASE).to_vec();
        for point in b.coords_mut().chunks_exact_mut(3) {
            for k in 0..3 {
                point[k] -= origin[k];
            }
        }
        b
    };
    for v in seq.coords_mut() {
        *v = round_to_f32(*v);
    }
    Ok(seq)
}

/// Draws `n` sequences with labels assigned round-robin, so every class gets
/// `n / C` samples (the first `n % C` classes one more). Sample `i` uses the
/// substream `sample/{i}` of `rng`, which makes the result a pure function
/// of the spec, `n` and the seed of `rng`.
pub fn generate_domain(
    spec: &DomainSpec,
    n: usize,
    rng: &SeededRng,
    split: SplitTag,
) -> Result<DatasetBundle, DataError> {
    if n == 0 {
        return Err(DataError::InvalidParameter("sample count must be positive".into()));
    }
    spec.validate()?;
    let classes = spec.classes.len();
    let sequences = (0..n)
        .map(|i| sample_sequence(spec, i % classes, &mut rng.substream(&format!("sample/{i}"))))
        .collect::<Result<Vec<_>, _>>()?;
    DatasetBundle::new(sequences, spec.class_names(), spec.clone(), split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_balanced() {
        let spec = DomainSpec::source3d(4, 6, 1);
        let b = generate_domain(&spec, 100, &SeededRng::new(2), SplitTag::Train).unwrap();
        for c in 0..4 {
            assert_eq!(b.labels().iter().filter(|&&l| l == c).count(), 25);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = DomainSpec::style_shift_2d(&DomainSpec::source3d(3, 5, 1), 4);
        let a = generate_domain(&spec, 12, &SeededRng::new(8), SplitTag::Test).unwrap();
        let b = generate_domain(&spec, 12, &SeededRng::new(8), SplitTag::Test).unwrap();
        assert!(a.sequences.iter().zip(&b.sequences).all(|(x, y)| x.bit_eq(y)));
        let c = generate_domain(&spec, 12, &SeededRng::new(9), SplitTag::Test).unwrap();
        assert!(!a.sequences[0].bit_eq(&c.sequences[0]));
    }

    #[test]
    fn two_d_domains_have_flat_depth() {
        let src = DomainSpec::source3d(3, 5, 1);
        for spec in [DomainSpec::style_shift_2d(&src, 2), DomainSpec::semantic_shift(3, 5, 3)] {
            let b = generate_domain(&spec, 6, &SeededRng::new(1), SplitTag::Test).unwrap();
            for s in &b.sequences {
                assert_eq!(s.shape(), (5, NTU_JOINTS, 3));
                assert!(s.coords().chunks_exact(3).all(|p| p[2] == 0.0));
            }
        }
        let b = generate_domain(&src, 6, &SeededRng::new(1), SplitTag::Test).unwrap();
        assert!(b.sequences[0].coords().chunks_exact(3).any(|p| p[2] != 0.0));
    }

    #[test]
    fn semantic_parameters_are_disjoint_from_source() {
        let src = DomainSpec::source3d(8, 6, 1);
        let sem = DomainSpec::semantic_shift(8, 6, 2);
        for c in &sem.classes {
            for g in &c.groups {
                assert!(SEMANTIC_FREQUENCIES.contains(&g.frequency));
                assert!(!SOURCE_FREQUENCIES.contains(&g.frequency));
                assert!(g.amplitude.iter().all(|a| a.abs() >= SEMANTIC_AMPLITUDE[0]));
            }
        }
        assert!(src
            .classes
            .iter()
            .flat_map(|c| &c.groups)
            .all(|g| g.amplitude.iter().all(|a| a.abs() <= SOURCE_MAX_AMPLITUDE)));
    }

    #[test]
    fn coordinates_are_f32_representable() {
        let spec = DomainSpec::source3d(2, 4, 1);
        let b = generate_domain(&spec, 4, &SeededRng::new(3), SplitTag::Train).unwrap();
        for s in &b.sequences {
            assert!(s.coords().iter().all(|&v| f64::from(v as f32) == v));
        }
    }

    #[test]
    fn zero_samples_is_an_error() {
        let spec = DomainSpec::source3d(2, 4, 1);
        assert!(generate_domain(&spec, 0, &SeededRng::new(3), SplitTag::Train).is_err());
    }
}
