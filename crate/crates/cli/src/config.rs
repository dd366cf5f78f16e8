use std::fs;
use std::path::{Path, PathBuf};

use bias_audit::artifact::RunMeta;
use bias_audit::backend::{BackendSpec, DispatchOptions};
use bias_audit::mitigate::DEFAULT_TARGET;
use bias_audit::pipeline::DEFAULT_PER_ATTRIBUTE_CAP;
use bias_audit::stats::DEFAULT_VOCAB_K;
use bias_audit::taxonomy::{load_taxonomy, Taxonomy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const TOOL: &str = "bias-audit";

/// Settings as they may appear in a config file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub taxonomy_path: Option<PathBuf>,
    pub corpus_paths: Option<Vec<PathBuf>>,
    pub backend: Option<String>,
    pub per_attribute_cap: Option<usize>,
    pub vocab_k: Option<usize>,
    pub target: Option<f64>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub batch_size: Option<usize>,
    pub max_in_flight: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `overrides` win.
    pub fn merge(self, overrides: FileConfig) -> FileConfig {
        FileConfig {
            taxonomy_path: overrides.taxonomy_path.or(self.taxonomy_path),
            corpus_paths: overrides.corpus_paths.or(self.corpus_paths),
            backend: overrides.backend.or(self.backend),
            per_attribute_cap: overrides.per_attribute_cap.or(self.per_attribute_cap),
            vocab_k: overrides.vocab_k.or(self.vocab_k),
            target: overrides.target.or(self.target),
            seed: overrides.seed.or(self.seed),
            output_dir: overrides.output_dir.or(self.output_dir),
            workers: overrides.workers.or(self.workers),
            batch_size: overrides.batch_size.or(self.batch_size),
            max_in_flight: overrides.max_in_flight.or(self.max_in_flight),
        }
    }
}

/// Resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `None` uses the bundled taxonomy.
    pub taxonomy_path: Option<PathBuf>,
    pub corpus_paths: Vec<PathBuf>,
    pub backend: BackendSpec,
    pub per_attribute_cap: usize,
    pub vocab_k: usize,
    pub target: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub workers: Option<usize>,
    pub dispatch: DispatchOptions,
}

/// The part of the configuration that can change results; hashed into every output.
#[derive(Serialize)]
struct Hashed<'a> {
    taxonomy_path: Option<&'a Path>,
    corpus_paths: &'a [PathBuf],
    backend: String,
    per_attribute_cap: usize,
    vocab_k: usize,
    target: f64,
    seed: u64,
}

impl RunConfig {
    pub fn resolve(file: FileConfig) -> Result<Self, CliError> {
        let defaults = DispatchOptions::default();
        let backend = match file.backend.as_deref() {
            None => BackendSpec::Builtin,
            Some(s) => s
                .parse()
                .map_err(|e| CliError::Config(format!("backend: {e}")))?,
        };
        let cfg = RunConfig {
            taxonomy_path: file.taxonomy_path,
            corpus_paths: file.corpus_paths.unwrap_or_default(),
            backend,
            per_attribute_cap: file.per_attribute_cap.unwrap_or(DEFAULT_PER_ATTRIBUTE_CAP),
            vocab_k: file.vocab_k.unwrap_or(DEFAULT_VOCAB_K),
            target: file.target.unwrap_or(DEFAULT_TARGET),
            seed: file.seed.unwrap_or(0),
            output_dir: file.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            workers: file.workers,
            dispatch: DispatchOptions {
                batch_size: file.batch_size.unwrap_or(defaults.batch_size),
                max_in_flight: file.max_in_flight.unwrap_or(defaults.max_in_flight),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_owned()));
        if self.per_attribute_cap < 1 {
            return bad("per_attribute_cap must be at least 1");
        }
        if self.vocab_k < 1 {
            return bad("vocab_k must be at least 1");
        }
        if !(self.target > 0.0 && self.target <= 1.0) {
            return bad("target must be in (0, 1]");
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        if self.dispatch.batch_size == 0 || self.dispatch.max_in_flight == 0 {
            return bad("batch_size and max_in_flight must be at least 1");
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the result-relevant settings.
    pub fn config_hash(&self) -> String {
        let hashed = Hashed {
            taxonomy_path: self.taxonomy_path.as_deref(),
            corpus_paths: &self.corpus_paths,
            backend: self.backend.to_string(),
            per_attribute_cap: self.per_attribute_cap,
            vocab_k: self.vocab_k,
            target: self.target,
            seed: self.seed,
        };
        let json = serde_json::to_vec(&hashed).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn meta(&self) -> RunMeta {
        RunMeta {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: self.config_hash(),
            seed: self.seed,
        }
    }

    pub fn taxonomy(&self) -> Result<Taxonomy, CliError> {
        match &self.taxonomy_path {
            None => Ok(Taxonomy::bundled()),
            Some(p) => load_taxonomy(p).map_err(|e| CliError::Config(e.to_string())),
        }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

/// File-name form of a class name: `race/ethnicity` becomes `race_ethnicity`.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}
