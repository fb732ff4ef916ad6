//! Key-value run-configuration files.
//!
//! A config file holds `key = value` lines (`#` starts a comment). Keys match
//! the CLI flag names without the leading dashes; command-line flags override
//! file values. Example:
//!
//! ```text
//! # desk-scale blob run
//! dataset    = blobs:classes=10,per_class=500,test_per_class=200,dim=20,spread=0.85
//! strategy   = ndf
//! tau        = 0.90
//! horizon    = 2000
//! batch-size = 20
//! episodes   = 50
//! seed-data  = 1
//! ```

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{DatasetSpec, ITauMode, RunConfig, StrategyId};

/// Parses a `--dataset` value: `mnist:<dir>` or
/// `blobs:classes=10,per_class=500,test_per_class=200,dim=20,spread=0.85`
/// (blob keys are optional and default to the desk-scale values).
pub fn parse_dataset_spec(s: &str) -> Result<DatasetSpec> {
    if let Some(dir) = s.strip_prefix("mnist:") {
        if dir.is_empty() {
            return Err(Error::config("mnist dataset needs a directory"));
        }
        return Ok(DatasetSpec::Mnist {
            dir: PathBuf::from(dir),
            subset: None,
        });
    }
    if let Some(rest) = s.strip_prefix("blobs") {
        let rest = rest.strip_prefix(':').unwrap_or(rest);
        let (mut classes, mut per_class, mut test_per_class, mut dim, mut spread) =
            match DatasetSpec::default_blobs() {
                DatasetSpec::Blobs {
                    classes,
                    per_class,
                    test_per_class,
                    feature_dim,
                    spread,
                } => (classes, per_class, test_per_class, feature_dim, spread),
                _ => unreachable!(),
            };
        for pair in rest.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                Error::config(format!("blob option `{pair}` is not key=value"))
            })?;
            let bad = |what: &str| Error::config(format!("bad blob {what}: `{value}`"));
            match key.trim() {
                "classes" => classes = value.parse().map_err(|_| bad("classes"))?,
                "per_class" => per_class = value.parse().map_err(|_| bad("per_class"))?,
                "test_per_class" => {
                    test_per_class = value.parse().map_err(|_| bad("test_per_class"))?
                }
                "dim" => dim = value.parse().map_err(|_| bad("dim"))?,
                "spread" => spread = value.parse().map_err(|_| bad("spread"))?,
                other => {
                    return Err(Error::config(format!("unknown blob option `{other}`")))
                }
            }
        }
        return Ok(DatasetSpec::Blobs {
            classes,
            per_class,
            test_per_class,
            feature_dim: dim,
            spread,
        });
    }
    Err(Error::config(format!(
        "dataset `{s}` must start with `mnist:` or `blobs`"
    )))
}

/// Applies one `key = value` pair onto a config.
pub fn apply_key_value(config: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    let bad = |key: &str, value: &str| Error::config(format!("bad value `{value}` for `{key}`"));
    match key {
        "dataset" => config.dataset = parse_dataset_spec(value)?,
        "strategy" => config.strategy = StrategyId::parse(value)?,
        "tau" => config.tau = value.parse().map_err(|_| bad(key, value))?,
        "horizon" => config.horizon = value.parse().map_err(|_| bad(key, value))?,
        "spl-epochs" => config.spl_epochs = value.parse().map_err(|_| bad(key, value))?,
        "episodes" => config.episodes = value.parse().map_err(|_| bad(key, value))?,
        "batch-size" => config.batch_size = value.parse().map_err(|_| bad(key, value))?,
        "gamma" => config.gamma = value.parse().map_err(|_| bad(key, value))?,
        "runs" => config.runs = value.parse().map_err(|_| bad(key, value))?,
        "eval-every" => {
            config.eval_every_updates = value.parse().map_err(|_| bad(key, value))?
        }
        "episode-eval-every" => {
            config.episode_eval_every_updates = value.parse().map_err(|_| bad(key, value))?
        }
        "apply-epochs" => config.apply_epochs = value.parse().map_err(|_| bad(key, value))?,
        "ndf-subset-size" => {
            config.ndf_subset_size = value.parse().map_err(|_| bad(key, value))?
        }
        "dev-size" => config.dev_size = value.parse().map_err(|_| bad(key, value))?,
        "mnist-subset" => {
            let n: usize = value.parse().map_err(|_| bad(key, value))?;
            match &mut config.dataset {
                DatasetSpec::Mnist { subset, .. } => *subset = Some(n),
                DatasetSpec::Blobs { .. } => {
                    return Err(Error::config("mnist-subset only applies to mnist datasets"))
                }
            }
        }
        "seed-data" => config.seeds.data = value.parse().map_err(|_| bad(key, value))?,
        "seed-policy" => config.seeds.policy = value.parse().map_err(|_| bad(key, value))?,
        "seed-strategy" => {
            config.seeds.strategy = value.parse().map_err(|_| bad(key, value))?
        }
        "seed-model" => config.seeds.model = value.parse().map_err(|_| bad(key, value))?,
        "policy-hidden" => {
            config.policy_hidden_dim = value.parse().map_err(|_| bad(key, value))?
        }
        "policy-lr" => config.policy_lr = value.parse().map_err(|_| bad(key, value))?,
        "base-lr" => config.base_lr = value.parse().map_err(|_| bad(key, value))?,
        "base-momentum" => config.base_momentum = value.parse().map_err(|_| bad(key, value))?,
        "base-hidden" => {
            config.base_hidden_dim = value.parse().map_err(|_| bad(key, value))?
        }
        "init-scale" => config.init_scale = value.parse().map_err(|_| bad(key, value))?,
        "droplog" => config.droplog_path = Some(PathBuf::from(value)),
        "policy" => config.policy_checkpoint = Some(PathBuf::from(value)),
        "i-tau-mode" => {
            config.i_tau_mode = match value {
                "arrivals" => ITauMode::Arrivals,
                "updates" => ITauMode::Updates,
                _ => return Err(bad(key, value)),
            }
        }
        "ndf-mode" => {
            config.ndf_threshold_mode = match value {
                "sample" => false,
                "threshold" => true,
                _ => return Err(bad(key, value)),
            }
        }
        other => return Err(Error::config(format!("unknown config key `{other}`"))),
    }
    Ok(())
}

/// Loads a config file on top of `base`.
pub fn load_config_file(path: &Path, mut base: RunConfig) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::FileFormat {
            path: path.to_path_buf(),
            reason: format!("line {}: expected `key = value`", n + 1),
        })?;
        apply_key_value(&mut base, key.trim(), value.trim()).map_err(|e| Error::FileFormat {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", n + 1),
        })?;
    }
    Ok(base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_spec_parsing() {
        match parse_dataset_spec("mnist:/data/mnist").unwrap() {
            DatasetSpec::Mnist { dir, subset } => {
                assert_eq!(dir, PathBuf::from("/data/mnist"));
                assert!(subset.is_none());
            }
            _ => panic!("expected mnist"),
        }
        match parse_dataset_spec("blobs:classes=3,per_class=7,spread=0.5").unwrap() {
            DatasetSpec::Blobs {
                classes,
                per_class,
                spread,
                feature_dim,
                ..
            } => {
                assert_eq!(classes, 3);
                assert_eq!(per_class, 7);
                assert_eq!(spread, 0.5);
                assert_eq!(feature_dim, 20); // default preserved
            }
            _ => panic!("expected blobs"),
        }
        assert!(parse_dataset_spec("csv:/nope").is_err());
        assert!(parse_dataset_spec("blobs:classes").is_err());
    }

    #[test]
    fn config_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# comment\nstrategy = spl\ntau = 0.8\nbatch-size = 16\nseed-data = 99\n",
        )
        .unwrap();
        let config = load_config_file(&path, RunConfig::default()).unwrap();
        assert_eq!(config.strategy, StrategyId::Spl);
        assert_eq!(config.tau, 0.8);
        assert_eq!(config.batch_size, 16);
        assert_eq!(config.seeds.data, 99);
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "not-a-key = 1\n").unwrap();
        assert!(load_config_file(&path, RunConfig::default()).is_err());
    }
}
