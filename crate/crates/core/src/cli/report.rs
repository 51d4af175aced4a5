use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::layout::write_file;
use super::{CliError, ExperimentConfig};

pub const REPORT_FILE: &str = "report.json";

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    results: &'a T,
    /// SHA-256 of the compact JSON of the four fields above.
    content_hash: String,
    /// Run facts that vary between identical runs; excluded from
    /// `content_hash` and from any determinism comparison.
    metadata: Metadata,
}

#[derive(Serialize)]
struct Metadata {
    wall_time_seconds: f64,
    threads: usize,
    version: &'static str,
}

/// Writes `<dir>/report.json` and returns its content hash.
pub(crate) fn write_report<T: Serialize>(
    dir: &Path,
    command: &str,
    config: &ExperimentConfig,
    results: &T,
    started: Instant,
) -> Result<String, CliError> {
    let config_hash = config.hash();
    let core = serde_json::json!({
        "command": command,
        "config_hash": config_hash,
        "seed": config.seed,
        "results": results,
    });
    let content_hash = hex::encode(Sha256::digest(serde_json::to_vec(&core).expect("report serializes")));
    let report = Report {
        command,
        config_hash,
        seed: config.seed,
        results,
        content_hash: content_hash.clone(),
        metadata: Metadata {
            wall_time_seconds: started.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
            version: env!("CARGO_PKG_VERSION"),
        },
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_file(&dir.join(REPORT_FILE), text)?;
    Ok(content_hash)
}

/// A parsed report without its `metadata` block, for comparing runs.
pub fn strip_metadata(report: &str) -> Result<serde_json::Value, serde_json::Error> {
    let mut v: serde_json::Value = serde_json::from_str(report)?;
    if let Some(map) = v.as_object_mut() {
        map.remove("metadata");
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_hash_ignores_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig::default();
        let results = serde_json::json!({"accuracy": 0.5});
        let h1 = write_report(dir.path(), "eval", &config, &results, Instant::now()).unwrap();
        let first = std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
        std::thread::sleep(std::time::Duration::from_millis(2));
        let h2 = write_report(dir.path(), "eval", &config, &results, Instant::now()).unwrap();
        let second = std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(strip_metadata(&first).unwrap(), strip_metadata(&second).unwrap());
        let v: serde_json::Value = serde_json::from_str(&first).unwrap();
        assert_eq!(v["config_hash"], config.hash());
        assert!(v["metadata"]["wall_time_seconds"].is_number());
    }
}
