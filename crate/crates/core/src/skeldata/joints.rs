//! Joint layouts and the COCO-17 to NTU-25 correspondence table.

pub const NTU_JOINTS: usize = 25;
pub const COCO_JOINTS: usize = 17;

pub const NTU_NAMES: [&str; NTU_JOINTS] = [
    "spine_base",
    "spine_mid",
    "neck",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "left_hand",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "right_hand",
    "left_hip",
    "left_knee",
    "left_ankle",
    "left_foot",
    "right_hip",
    "right_knee",
    "right_ankle",
    "right_foot",
    "spine_shoulder",
    "left_hand_tip",
    "left_thumb",
    "right_hand_tip",
    "right_thumb",
];

pub const COCO_NAMES: [&str; COCO_JOINTS] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

pub mod ntu {
    pub const SPINE_BASE: usize = 0;
    pub const SPINE_MID: usize = 1;
    pub const NECK: usize = 2;
    pub const HEAD: usize = 3;
}

pub mod coco {
    pub const LEFT_SHOULDER: usize = 5;
    pub const RIGHT_SHOULDER: usize = 6;
    pub const LEFT_HIP: usize = 11;
    pub const RIGHT_HIP: usize = 12;
}

/// Direct anatomical correspondences `(coco_index, ntu_index)`.
pub const COCO_TO_NTU: [(usize, usize); 13] = [
    (0, 3),   // nose -> head
    (5, 4),   // left shoulder
    (6, 8),   // right shoulder
    (7, 5),   // left elbow
    (8, 9),   // right elbow
    (9, 6),   // left wrist
    (10, 10), // right wrist
    (11, 12), // left hip
    (12, 16), // right hip
    (13, 13), // left knee
    (14, 17), // right knee
    (15, 14), // left ankle
    (16, 18), // right ankle
];

/// NTU joints filled from midpoints after the direct copy:
/// neck from the shoulders, spine base from the hips, spine mid from those
/// two derived joints.
pub const DERIVED_NTU: [usize; 3] = [ntu::NECK, ntu::SPINE_BASE, ntu::SPINE_MID];

/// NTU joints with no COCO counterpart; always zero after mapping.
pub const ZERO_FILLED_NTU: [usize; 9] = [7, 11, 15, 19, 20, 21, 22, 23, 24];

/// NTU joint that stands in for COCO joint `c` when projecting a 25-joint
/// skeleton to 17 keypoints. Eyes and ears have no NTU counterpart and take
/// the head position.
pub fn ntu_source_for_coco(c: usize) -> usize {
    COCO_TO_NTU
        .iter()
        .find_map(|&(cc, n)| (cc == c).then_some(n))
        .unwrap_or(ntu::HEAD)
}

/// Body part used to group joints for motion templates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BodyGroup {
    Torso = 0,
    Head = 1,
    LeftArm = 2,
    RightArm = 3,
    LeftLeg = 4,
    RightLeg = 5,
}

pub const BODY_GROUPS: usize = 6;

/// Rest pose in body-scale units (y up, x to the subject's left, z toward the
/// camera), with each joint's group and distal weight for motion templates.
pub const NTU_REST: [([f64; 3], BodyGroup, f64); NTU_JOINTS] = {
    use BodyGroup::*;
    [
        ([0.0, 0.0, 0.0], Torso, 0.1),
        ([0.0, 0.25, 0.0], Torso, 0.3),
        ([0.0, 0.50, 0.0], Torso, 0.55),
        ([0.0, 0.62, 0.02], Head, 1.0),
        ([0.17, 0.45, 0.0], LeftArm, 0.2),
        ([0.20, 0.20, 0.0], LeftArm, 0.6),
        ([0.22, -0.02, 0.02], LeftArm, 1.0),
        ([0.22, -0.08, 0.03], LeftArm, 1.1),
        ([-0.17, 0.45, 0.0], RightArm, 0.2),
        ([-0.20, 0.20, 0.0], RightArm, 0.6),
        ([-0.22, -0.02, 0.02], RightArm, 1.0),
        ([-0.22, -0.08, 0.03], RightArm, 1.1),
        ([0.10, 0.0, 0.0], LeftLeg, 0.2),
        ([0.10, -0.42, 0.02], LeftLeg, 0.6),
        ([0.10, -0.82, 0.0], LeftLeg, 1.0),
        ([0.10, -0.86, 0.10], LeftLeg, 1.1),
        ([-0.10, 0.0, 0.0], RightLeg, 0.2),
        ([-0.10, -0.42, 0.02], RightLeg, 0.6),
        ([-0.10, -0.82, 0.0], RightLeg, 1.0),
        ([-0.10, -0.86, 0.10], RightLeg, 1.1),
        ([0.0, 0.45, 0.0], Torso, 0.5),
        ([0.22, -0.13, 0.04], LeftArm, 1.2),
        ([0.20, -0.08, 0.06], LeftArm, 1.15),
        ([-0.22, -0.13, 0.04], RightArm, 1.2),
        ([-0.20, -0.08, 0.06], RightArm, 1.15),
    ]
};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_injective_and_disjoint_from_fills() {
        let mut seen = [false; NTU_JOINTS];
        for &(_, n) in COCO_TO_NTU.iter() {
            assert!(!seen[n]);
            seen[n] = true;
        }
        for &n in DERIVED_NTU.iter().chain(ZERO_FILLED_NTU.iter()) {
            assert!(!seen[n], "{}", NTU_NAMES[n]);
            seen[n] = true;
        }
        assert!(seen.iter().all(|&s| s), "every NTU joint is covered exactly once");
    }

    #[test]
    fn names_agree_across_layouts() {
        for &(c, n) in COCO_TO_NTU.iter().skip(1) {
            assert_eq!(COCO_NAMES[c], NTU_NAMES[n]);
        }
    }
}
