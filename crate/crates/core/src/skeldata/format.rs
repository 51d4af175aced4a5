//! The `SKEL1` dataset directory format.
//!
//! ```text
//! <dir>/manifest.json  format, n, T, J, C_dim, class_names, domain_spec,
//!                      split_tag, payload_sha256 (of coords.bin)
//! <dir>/coords.bin     little-endian f32, row-major [n, T, J, C_dim]
//! <dir>/labels.csv     "index,label" header, one row per sample
//! ```
//!
//! Coordinates are stored as `f32` and widened to `f64` on read. Writing a
//! coordinate that is not exactly representable as `f32` is refused, so a
//! successful write always reads back bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::joints::NTU_JOINTS;
use super::{DataError, DatasetBundle, DomainSpec, SkeletonSequence, SplitTag};

pub const FORMAT_TAG: &str = "SKEL1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const COORDS_FILE: &str = "coords.bin";
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    n: usize,
    #[serde(rename = "T")]
    frames: usize,
    #[serde(rename = "J")]
    joints: usize,
    #[serde(rename = "C_dim")]
    channels: usize,
    class_names: Vec<String>,
    domain_spec: DomainSpec,
    split_tag: SplitTag,
    payload_sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<(), DataError> {
    bundle.validate()?;
    let (frames, joints, channels) = bundle.shape().unwrap_or((bundle.domain_spec.frames, NTU_JOINTS, 3));

    let mut payload = Vec::with_capacity(bundle.len() * frames * joints * channels * 4);
    let mut labels = String::from("index,label\n");
    for (i, s) in bundle.sequences.iter().enumerate() {
        for (k, &v) in s.coords().iter().enumerate() {
            let narrow = v as f32;
            if f64::from(narrow).to_bits() != v.to_bits() {
                return Err(DataError::NotRepresentable { sample: i, index: k });
            }
            payload.extend_from_slice(&narrow.to_le_bytes());
        }
        labels.push_str(&format!("{i},{}\n", s.label));
    }

    let manifest = Manifest {
        format: FORMAT_TAG.to_string(),
        n: bundle.len(),
        frames,
        joints,
        channels,
        class_names: bundle.class_names.clone(),
        domain_spec: bundle.domain_spec.clone(),
        split_tag: bundle.split_tag,
        payload_sha256: sha256_hex(&payload),
    };
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    manifest_bytes.push(b'\n');

    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = dir.join(COORDS_FILE);
    fs::write(&p, &payload).map_err(io_err(&p))?;
    let p = dir.join(LABELS_FILE);
    fs::write(&p, labels).map_err(io_err(&p))?;
    let p = dir.join(MANIFEST_FILE);
    fs::write(&p, manifest_bytes).map_err(io_err(&p))?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<DatasetBundle, DataError> {
    let p = dir.join(MANIFEST_FILE);
    let raw = fs::read(&p).map_err(io_err(&p))?;
    let manifest: Manifest = serde_json::from_slice(&raw).map_err(|e| DataError::MalformedHeader(e.to_string()))?;
    if manifest.format != FORMAT_TAG {
        return Err(DataError::MalformedHeader(format!("format tag {:?}", manifest.format)));
    }
    let (t, j, c) = (manifest.frames, manifest.joints, manifest.channels);
    if t == 0 || j == 0 || !(c == 2 || c == 3) {
        return Err(DataError::MalformedHeader(format!("shape T={t} J={j} C_dim={c}")));
    }

    let p = dir.join(COORDS_FILE);
    let payload = fs::read(&p).map_err(io_err(&p))?;
    let per_sample = t * j * c * 4;
    if payload.len() % per_sample != 0 {
        return Err(DataError::TruncatedPayload {
            bytes: payload.len(),
            record_bytes: per_sample,
        });
    }
    let held = payload.len() / per_sample;
    if held != manifest.n {
        return Err(DataError::CountMismatch {
            manifest: manifest.n,
            found: held,
            file: COORDS_FILE,
        });
    }
    let digest = sha256_hex(&payload);
    if digest != manifest.payload_sha256 {
        return Err(DataError::ChecksumMismatch {
            expected: manifest.payload_sha256,
            actual: digest,
        });
    }

    let p = dir.join(LABELS_FILE);
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    let mut lines = text.lines();
    if lines.next() != Some("index,label") {
        return Err(DataError::MalformedLabels("missing `index,label` header".into()));
    }
    let mut labels = Vec::with_capacity(manifest.n);
    for (row, line) in lines.enumerate() {
        let (idx, label) = line
            .split_once(',')
            .ok_or_else(|| DataError::MalformedLabels(format!("row {row}: {line:?}")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| DataError::MalformedLabels(format!("row {row}: index {idx:?}")))?;
        let label: usize = label
            .parse()
            .map_err(|_| DataError::MalformedLabels(format!("row {row}: label {label:?}")))?;
        if idx != row {
            return Err(DataError::MalformedLabels(format!("row {row} has index {idx}")));
        }
        labels.push(label);
    }
    if labels.len() != manifest.n {
        return Err(DataError::CountMismatch {
            manifest: manifest.n,
            found: labels.len(),
            file: LABELS_FILE,
        });
    }

    let tag = manifest.domain_spec.kind.tag();
    let sequences = payload
        .chunks_exact(per_sample)
        .zip(labels)
        .map(|(bytes, label)| {
            let coords = bytes
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
                .collect();
            SkeletonSequence::new(t, j, c, coords, label, tag)
        })
        .collect::<Result<Vec<_>, _>>()?;
    DatasetBundle::new(
        sequences,
        manifest.class_names,
        manifest.domain_spec,
        manifest.split_tag,
    )
}

#[cfg(test)]
mod tests {
    use super::super::{generate_domain, DomainSpec};
    use super::*;
    use crate::numerics::SeededRng;

    fn bundle(n: usize) -> DatasetBundle {
        let spec = DomainSpec::source3d(3, 4, 7);
        generate_domain(&spec, n, &SeededRng::new(1), SplitTag::Val).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle(10);
        write_dataset(&b, dir.path()).unwrap();
        let r = read_dataset(dir.path()).unwrap();
        assert_eq!(r.len(), b.len());
        assert!(r.sequences.iter().zip(&b.sequences).all(|(x, y)| x.bit_eq(y)));
        assert_eq!(r, b);
    }

    #[test]
    fn truncated_payload_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&bundle(10), dir.path()).unwrap();
        let p = dir.path().join(COORDS_FILE);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(DataError::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn missing_sample_is_a_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&bundle(10), dir.path()).unwrap();
        let p = dir.path().join(COORDS_FILE);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() / 10 * 9]).unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(DataError::CountMismatch {
                manifest: 10,
                found: 9,
                ..
            })
        ));
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&bundle(4), dir.path()).unwrap();
        let p = dir.path().join(COORDS_FILE);
        let mut bytes = fs::read(&p).unwrap();
        bytes[5] ^= 0x40;
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(DataError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn malformed_manifest_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&bundle(2), dir.path()).unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        fs::write(&p, b"{\"format\": \"SKEL1\"").unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(DataError::MalformedHeader(_))));
        let text = serde_json::to_string(&serde_json::json!({"format": "SKEL0"})).unwrap();
        fs::write(&p, text).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(DataError::MalformedHeader(_))));
    }

    #[test]
    fn unrepresentable_coordinates_are_refused() {
        let mut b = bundle(1);
        let s = &b.sequences[0];
        let mut coords = s.coords().to_vec();
        coords[0] = 0.1;
        b.sequences[0] = SkeletonSequence::new(4, 25, 3, coords, s.label, s.domain_tag.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_dataset(&b, dir.path()),
            Err(DataError::NotRepresentable { sample: 0, index: 0 })
        ));
    }

    #[test]
    fn layout_is_little_endian_f32() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle(1);
        write_dataset(&b, dir.path()).unwrap();
        let bytes = fs::read(dir.path().join(COORDS_FILE)).unwrap();
        assert_eq!(bytes.len(), 4 * 25 * 3 * 4);
        let v = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
        assert_eq!(f64::from(v), b.sequences[0].coords()[3]);
        let labels = fs::read_to_string(dir.path().join(LABELS_FILE)).unwrap();
        assert_eq!(labels, "index,label\n0,0\n");
    }
}
