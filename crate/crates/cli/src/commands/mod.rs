mod bench;
mod metrics;
mod theory;
mod train;
mod ujm;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub use bench::{cmd_svd_bench, matrix_with_spectrum, BenchOptions, BenchRow};
pub use metrics::{cmd_metrics, MetricsOutput};
pub use theory::{cmd_theory, Check, TheoryOptions, TheoryOutput};
pub use train::{cmd_train, TrainOutput};
pub use ujm::{cmd_ujm, UjmOptions, UjmOutput};

use crate::error::{CliError, Result};

/// Comment lines that open every CSV: the command, the seed and the resolved
/// configuration.
pub fn provenance(command: &str, seed: u64, resolved: &str) -> Vec<String> {
    let mut lines = vec![format!("resalign {command}"), format!("seed = {seed}")];
    lines.extend(resolved.lines().filter(|l| !l.is_empty()).map(|l| format!("  {l}")));
    lines
}

/// Creates the output directory: `explicit` when given, otherwise
/// `base/<hash>-<unix seconds>`, with a numeric suffix if that name is
/// taken so earlier runs are never overwritten.
pub fn prepare_run_dir(base: &Path, hash: &str, explicit: Option<&Path>) -> Result<PathBuf> {
    if let Some(dir) = explicit {
        fs::create_dir_all(dir).map_err(|e| CliError::file(dir, e))?;
        return Ok(dir.to_path_buf());
    }
    fs::create_dir_all(base).map_err(|e| CliError::file(base, e))?;
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let stem = format!("{hash}-{stamp}");
    for n in 0.. {
        let dir = if n == 0 {
            base.join(&stem)
        } else {
            base.join(format!("{stem}-{n}"))
        };
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::file(dir, e)),
        }
    }
    unreachable!()
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auto_named_dirs_never_collide() {
        let base = tempfile::tempdir().unwrap();
        let a = prepare_run_dir(base.path(), "abc", None).unwrap();
        let b = prepare_run_dir(base.path(), "abc", None).unwrap();
        assert_ne!(a, b);
        assert!(a.file_name().unwrap().to_str().unwrap().starts_with("abc-"));
    }

    #[test]
    fn provenance_indents_config_lines() {
        let p = provenance("train", 4, "seed = 4\n\n[model]\nblocks = 2\n");
        assert_eq!(p, vec!["resalign train", "seed = 4", "  seed = 4", "  [model]", "  blocks = 2"]);
    }
}
