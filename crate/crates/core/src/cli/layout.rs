use std::path::{Path, PathBuf};

use super::{AdaptMode, CliError};
use crate::model::{ModelState, MODEL_FILE};
use crate::skeldata::{read_dataset, DatasetBundle, MANIFEST_FILE};

/// Bundles written by `gen`, in order.
pub const DATA_BUNDLES: [&str; 5] = [
    "source_train",
    "source_val",
    "source_test",
    "style_target",
    "semantic_target",
];

/// Paths inside one output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data_root(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn bundle(&self, name: &str) -> PathBuf {
        self.data_root().join(name)
    }

    pub fn train_root(&self) -> PathBuf {
        self.root.join("train")
    }

    pub fn member(&self, m: usize) -> PathBuf {
        self.train_root().join(format!("member_{m}"))
    }

    pub fn eval_root(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn adapt_root(&self) -> PathBuf {
        self.root.join("adapt")
    }

    pub fn adapt(&self, mode: AdaptMode) -> PathBuf {
        self.adapt_root().join(mode.name())
    }

    pub fn corrupt_root(&self) -> PathBuf {
        self.root.join("corrupt")
    }

    pub fn ablate_root(&self) -> PathBuf {
        self.root.join("ablate_mc")
    }

    /// Fails with every missing bundle and checkpoint listed at once.
    pub fn require(&self, bundles: &[&str], members: usize) -> Result<(), CliError> {
        let mut missing: Vec<String> = bundles
            .iter()
            .map(|b| self.bundle(b).join(MANIFEST_FILE))
            .chain((0..members).map(|m| self.member(m).join(MODEL_FILE)))
            .filter(|p| !p.is_file())
            .map(|p| p.display().to_string())
            .collect();
        missing.dedup();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(CliError::Missing(missing))
        }
    }

    pub fn load_bundle(&self, name: &str) -> Result<DatasetBundle, CliError> {
        Ok(read_dataset(&self.bundle(name))?)
    }

    pub fn load_member(&self, m: usize) -> Result<ModelState, CliError> {
        Ok(ModelState::load(&self.member(m))?)
    }
}

/// Creates `dir`, refusing to touch an existing one unless `force` is set,
/// in which case it is emptied first.
pub(crate) fn fresh_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        if !force {
            return Err(CliError::Exists(dir.to_path_buf()));
        }
        std::fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn require_lists_everything_missing() {
        let dir = tempfile::tempdir().unwrap();
        let layout = Layout::new(dir.path());
        match layout.require(&["source_train", "style_target"], 2) {
            Err(CliError::Missing(list)) => assert_eq!(list.len(), 4),
            other => panic!("{other:?}"),
        }
        assert!(layout.require(&[], 0).is_ok());
    }

    #[test]
    fn fresh_dir_needs_force() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("x");
        fresh_dir(&target, false).unwrap();
        write_file(&target.join("f"), "1").unwrap();
        assert!(matches!(fresh_dir(&target, false), Err(CliError::Exists(_))));
        fresh_dir(&target, true).unwrap();
        assert!(!target.join("f").exists());
    }
}
