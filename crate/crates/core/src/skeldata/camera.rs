//! Camera projection of 25-joint skeletons and the 17 -> 25 modality mapping.

use super::joints::{coco, ntu, ntu_source_for_coco, COCO_JOINTS, COCO_TO_NTU, NTU_JOINTS};
use super::{DataError, SkeletonSequence};

/// Rotates a point about the vertical axis by `azimuth` then about the
/// horizontal axis by `elevation` (radians).
///
/// Sign convention: a positive azimuth moves the camera toward `+x`, so at
/// 90 degrees the camera-plane x coordinate is the input depth `z`:
/// `x' = x cos(a) + z sin(a)`, `z' = -x sin(a) + z cos(a)`.
/// Elevation then gives `y'' = y cos(e) - z' sin(e)`.
pub fn rotate_view(p: [f64; 3], azimuth: f64, elevation: f64) -> [f64; 3] {
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    let x = p[0] * ca + p[2] * sa;
    let z = -p[0] * sa + p[2] * ca;
    let y = p[1] * ce - z * se;
    let z2 = p[1] * se + z * ce;
    [x, y, z2]
}

/// Orthographic projection of a `T x 25 x 3` skeleton onto the camera plane,
/// keeping the 17 COCO keypoints. Angles are in degrees.
pub fn project_to_2d(
    seq: &SkeletonSequence,
    azimuth_deg: f64,
    elevation_deg: f64,
    scale: f64,
) -> Result<SkeletonSequence, DataError> {
    if seq.joints() != NTU_JOINTS || seq.channels() != 3 {
        return Err(DataError::Shape(format!(
            "projection needs T x {NTU_JOINTS} x 3, got {:?}",
            seq.shape()
        )));
    }
    if !(azimuth_deg.is_finite() && elevation_deg.is_finite() && scale.is_finite()) {
        return Err(DataError::InvalidParameter("non-finite camera parameter".into()));
    }
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    let t = seq.frames();
    let mut out = Vec::with_capacity(t * COCO_JOINTS * 2);
    for f in 0..t {
        for c in 0..COCO_JOINTS {
            let j = seq.joint(f, ntu_source_for_coco(c));
            let r = rotate_view([j[0], j[1], j[2]], az, el);
            out.push(scale * r[0]);
            out.push(scale * r[1]);
        }
    }
    SkeletonSequence::new(t, COCO_JOINTS, 2, out, seq.label, seq.domain_tag.clone())
}

/// Places 17 COCO `(x, y)` keypoints into the 25-joint layout with a zero
/// depth channel. Neck, spine base and spine mid are midpoints; joints
/// without a counterpart stay zero.
pub fn map_coco17_to_ntu25(seq: &SkeletonSequence) -> Result<SkeletonSequence, DataError> {
    if seq.joints() != COCO_JOINTS || seq.channels() != 2 {
        return Err(DataError::Shape(format!(
            "mapping needs T x {COCO_JOINTS} x 2, got {:?}",
            seq.shape()
        )));
    }
    let t = seq.frames();
    let mut out = vec![0.0; t * NTU_JOINTS * 3];
    let mid = |a: &[f64], b: &[f64]| [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5];
    for f in 0..t {
        let base = f * NTU_JOINTS * 3;
        let mut put = |n: usize, xy: [f64; 2]| {
            out[base + n * 3] = xy[0];
            out[base + n * 3 + 1] = xy[1];
        };
        for &(c, n) in COCO_TO_NTU.iter() {
            let p = seq.joint(f, c);
            put(n, [p[0], p[1]]);
        }
        let neck = mid(seq.joint(f, coco::LEFT_SHOULDER), seq.joint(f, coco::RIGHT_SHOULDER));
        let spine_base = mid(seq.joint(f, coco::LEFT_HIP), seq.joint(f, coco::RIGHT_HIP));
        put(ntu::NECK, neck);
        put(ntu::SPINE_BASE, spine_base);
        put(ntu::SPINE_MID, mid(&neck, &spine_base));
    }
    SkeletonSequence::new(t, NTU_JOINTS, 3, out, seq.label, seq.domain_tag.clone())
}

#[cfg(test)]
mod tests {
    use super::super::joints::ZERO_FILLED_NTU;
    use super::*;

    fn distinct_25(frames: usize) -> SkeletonSequence {
        let coords = (0..frames * NTU_JOINTS * 3)
            .map(|i| 0.01 * i as f64 + 0.5 * ((i % 3) as f64))
            .collect();
        SkeletonSequence::new(frames, NTU_JOINTS, 3, coords, 1, "t").unwrap()
    }

    fn distinct_17() -> SkeletonSequence {
        let coords = (0..COCO_JOINTS * 2).map(|i| 1.0 + i as f64).collect();
        SkeletonSequence::new(1, COCO_JOINTS, 2, coords, 0, "t").unwrap()
    }

    #[test]
    fn identity_camera_keeps_xy() {
        let s = distinct_25(2);
        let p = project_to_2d(&s, 0.0, 0.0, 1.0).unwrap();
        for f in 0..2 {
            for c in 0..COCO_JOINTS {
                let src = s.joint(f, ntu_source_for_coco(c));
                assert_eq!(p.joint(f, c), &src[..2]);
            }
        }
    }

    #[test]
    fn half_turn_negates_x() {
        let s = distinct_25(1);
        let a = project_to_2d(&s, 0.0, 0.0, 1.0).unwrap();
        let b = project_to_2d(&s, 180.0, 0.0, 1.0).unwrap();
        for c in 0..COCO_JOINTS {
            assert!((a.at(0, c, 0) + b.at(0, c, 0)).abs() < 1e-12);
            assert!((a.at(0, c, 1) - b.at(0, c, 1)).abs() < 1e-12);
        }
    }

    #[test]
    fn quarter_turn_exposes_depth() {
        // Rotation-matrix oracle: R_y(90) maps (x, y, z) to (z, y, -x).
        let s = distinct_25(1);
        let p = project_to_2d(&s, 90.0, 0.0, 1.0).unwrap();
        for c in 0..COCO_JOINTS {
            let src = s.joint(0, ntu_source_for_coco(c));
            assert!((p.at(0, c, 0) - src[2]).abs() < 1e-12);
            assert!((p.at(0, c, 1) - src[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn mapping_zero_pads_depth_and_unmapped_joints() {
        let m = map_coco17_to_ntu25(&distinct_17()).unwrap();
        assert_eq!(m.shape(), (1, NTU_JOINTS, 3));
        for j in 0..NTU_JOINTS {
            assert_eq!(m.at(0, j, 2), 0.0);
        }
        for &j in ZERO_FILLED_NTU.iter() {
            assert_eq!(m.joint(0, j), &[0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn mapping_matches_table_by_inverse_lookup() {
        let src = distinct_17();
        let m = map_coco17_to_ntu25(&src).unwrap();
        // Every source value is unique, so each mapped joint identifies its
        // COCO origin.
        for n in 0..NTU_JOINTS {
            let x = m.at(0, n, 0);
            let origin = (0..COCO_JOINTS).find(|&c| src.at(0, c, 0) == x);
            match COCO_TO_NTU.iter().find(|&&(_, nn)| nn == n) {
                Some(&(c, _)) => {
                    assert_eq!(origin, Some(c));
                    assert_eq!(m.at(0, n, 1), src.at(0, c, 1));
                }
                None => assert!(origin.is_none() || x == 0.0),
            }
        }
        let neck_x = 0.5 * (src.at(0, 5, 0) + src.at(0, 6, 0));
        let base_x = 0.5 * (src.at(0, 11, 0) + src.at(0, 12, 0));
        assert_eq!(m.at(0, ntu::NECK, 0), neck_x);
        assert_eq!(m.at(0, ntu::SPINE_BASE, 0), base_x);
        assert_eq!(m.at(0, ntu::SPINE_MID, 0), 0.5 * (neck_x + base_x));
    }

    #[test]
    fn all_zero_maps_to_all_zero() {
        let z = SkeletonSequence::new(3, COCO_JOINTS, 2, vec![0.0; 3 * COCO_JOINTS * 2], 0, "t").unwrap();
        let m = map_coco17_to_ntu25(&z).unwrap();
        assert!(m.coords().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_shapes_are_rejected() {
        assert!(map_coco17_to_ntu25(&distinct_25(1)).is_err());
        assert!(project_to_2d(&distinct_17(), 0.0, 0.0, 1.0).is_err());
    }
}
