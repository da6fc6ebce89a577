//! Flat key=value run configuration with environment overrides for the
//! remote reasoner's secrets.

use std::fs;
use std::path::Path;

use crate::error::{Result, TkgaError};
use crate::metrics::ConsistencyComparator;
use crate::pipeline::PipelineConfig;
use crate::reasoner::RemoteConfig;
use crate::retrieval::IndexMode;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub remote: RemoteConfig,
    pub comparator: ConsistencyComparator,
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            pipeline: PipelineConfig::default(),
            remote: RemoteConfig::default(),
            comparator: ConsistencyComparator::YearSpan,
            train_fraction: 0.3,
            split_seed: 7,
        }
    }
}

fn bad(key: &str, msg: impl Into<String>) -> TkgaError {
    TkgaError::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| bad(key, format!("cannot parse '{value}'")))
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| TkgaError::io(path.display().to_string(), e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        cfg.apply_env();
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(line, "expected key=value"))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// `TKGA_REASONER_URL`, `TKGA_REASONER_TOKEN`, and `TKGA_REASONER_MODEL`
    /// override the file-provided remote settings.
    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var("TKGA_REASONER_URL") {
            self.remote.url = v;
        }
        if let Ok(v) = std::env::var("TKGA_REASONER_TOKEN") {
            self.remote.token = Some(v);
        }
        if let Ok(v) = std::env::var("TKGA_REASONER_MODEL") {
            self.remote.model = v;
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.pipeline;
        match key {
            "walk.beta" => p.walk.beta = parse_num(key, value)?,
            "walk.length" => p.walk.walk_length = parse_num(key, value)?,
            "walk.per_entity" => p.walk.walks_per_entity = parse_num(key, value)?,
            "walk.seed" => p.walk.seed = parse_num(key, value)?,
            "skipgram.dimension" => p.skipgram.dimension = parse_num(key, value)?,
            "skipgram.window" => p.skipgram.window = parse_num(key, value)?,
            "skipgram.negatives" => p.skipgram.negatives = parse_num(key, value)?,
            "skipgram.epochs" => p.skipgram.epochs = parse_num(key, value)?,
            "skipgram.learning_rate" => p.skipgram.learning_rate = parse_num(key, value)?,
            "skipgram.seed" => p.skipgram.seed = parse_num(key, value)?,
            "trainer.margin" => p.trainer.margin = parse_num(key, value)?,
            "trainer.negatives" => p.trainer.negatives = parse_num(key, value)?,
            "trainer.epochs" => p.trainer.epochs = parse_num(key, value)?,
            "trainer.learning_rate" => p.trainer.learning_rate = parse_num(key, value)?,
            "trainer.seed" => p.trainer.seed = parse_num(key, value)?,
            "d_name" => p.d_name = parse_num(key, value)?,
            "d_t" => p.d_t = parse_num(key, value)?,
            "t2v_k" => p.t2v_k = parse_num(key, value)?,
            "k_csls" => p.k_csls = parse_num(key, value)?,
            "k_candidates" => p.k_candidates = parse_num(key, value)?,
            "k_retrieve" => p.k_retrieve = parse_num(key, value)?,
            "iterations" => p.iterations = parse_num(key, value)?,
            "augment_budget" => p.augment_budget = parse_num(key, value)?,
            "seed" => p.seed = parse_num(key, value)?,
            "index.mode" => {
                p.index_mode = match value {
                    "exact" => IndexMode::Exact,
                    "approx" => IndexMode::Approx {
                        nprobe: match p.index_mode {
                            IndexMode::Approx { nprobe } => nprobe,
                            _ => 4,
                        },
                    },
                    _ => return Err(bad(key, "expected 'exact' or 'approx'")),
                }
            }
            "index.nprobe" => {
                let nprobe = parse_num(key, value)?;
                p.index_mode = IndexMode::Approx { nprobe };
            }
            "reasoner.url" => self.remote.url = value.to_string(),
            "reasoner.token" => self.remote.token = Some(value.to_string()),
            "reasoner.model" => self.remote.model = value.to_string(),
            "reasoner.max_retries" => self.remote.max_retries = parse_num(key, value)?,
            "reasoner.backoff_ms" => self.remote.backoff_ms = parse_num(key, value)?,
            "stats.comparator" => {
                self.comparator = match value {
                    "year_span" => ConsistencyComparator::YearSpan,
                    "year_set" => ConsistencyComparator::YearSet,
                    _ => return Err(bad(key, "expected 'year_span' or 'year_set'")),
                }
            }
            "train_fraction" => self.train_fraction = parse_num(key, value)?,
            "split_seed" => self.split_seed = parse_num(key, value)?,
            _ => return Err(bad(key, "unknown configuration key")),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_keys() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "# comment\n\
             trainer.epochs = 12\n\
             walk.beta=0.4\n\
             index.nprobe=3\n\
             stats.comparator=year_set\n",
        )
        .unwrap();
        assert_eq!(cfg.pipeline.trainer.epochs, 12);
        assert_eq!(cfg.pipeline.walk.beta, 0.4);
        assert_eq!(cfg.pipeline.index_mode, IndexMode::Approx { nprobe: 3 });
        assert_eq!(cfg.comparator, ConsistencyComparator::YearSet);
    }

    #[test]
    fn unknown_key_is_named_in_the_error() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("no_such_key=1\n").unwrap_err();
        assert!(err.to_string().contains("no_such_key"));
        let err2 = cfg.apply_text("walk.beta=abc\n").unwrap_err();
        assert!(err2.to_string().contains("walk.beta"));
    }

    #[test]
    fn env_overrides_remote_settings() {
        let mut cfg = RunConfig::default();
        cfg.set("reasoner.url", "http://file.example").unwrap();
        std::env::set_var("TKGA_REASONER_URL", "http://env.example");
        cfg.apply_env();
        std::env::remove_var("TKGA_REASONER_URL");
        assert_eq!(cfg.remote.url, "http://env.example");
    }
}
