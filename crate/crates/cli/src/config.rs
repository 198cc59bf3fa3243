//! Flat `key = value` run configuration with named presets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use csq_core::concept::ConceptTrainConfig;
use csq_core::corpus::PipelineConfig;
use csq_core::models::{ModelConfig, ModelVariant, TrainRunConfig};
use csq_core::synth::SynthConfig;
use csq_core::word::WordTrainConfig;

use crate::CliError;

/// Keys a manifest may carry besides configuration.
pub const SUBCOMMAND_KEY: &str = "subcommand";
pub const INPUT_PREFIX: &str = "input.";
pub const OUTPUT_PREFIX: &str = "output.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Full,
    Desk,
}

impl FromStr for Preset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            other => Err(CliError::Config(format!("unknown preset {other:?} (expected full or desk)"))),
        }
    }
}

/// Every key with its `full` default; `desk` overrides a subset.
const FULL_DEFAULTS: &[(&str, &str)] = &[
    ("preset", "full"),
    ("seed", "0"),
    ("variant", "baseline"),
    ("split", "test"),
    ("word_dim", "80"),
    ("concept_dim", "80"),
    ("hidden", "400"),
    ("layers", "3"),
    ("attention_dim", "400"),
    ("init_scale", "0.08"),
    ("keep_prob", "0.9"),
    ("clip", "1"),
    ("beam", "1"),
    ("max_len", "100"),
    ("epochs", "10"),
    ("lr", "0.001"),
    ("batch_size", "16"),
    ("concept_epochs", "10"),
    ("concept_lr", "0.05"),
    ("concept_negatives", "0"),
    ("word_epochs", "5"),
    ("word_lr", "0.05"),
    ("word_window", "5"),
    ("word_negatives", "5"),
    ("hash_buckets", "2000000"),
    ("keep_fraction", "1"),
    ("valid_fraction", "0.1"),
    ("test_fraction", "0.1"),
    ("questionnaire_models", "baseline,cs,csd,hcsd,hcsd-t"),
    ("questionnaire_items", "10"),
    ("synth_concepts", "105"),
    ("synth_relations", "20"),
    ("synth_depth", "2"),
    ("synth_vocab", "30"),
    ("synth_docs", "400"),
    ("synth_sentences", "6"),
    ("synth_theta", "1"),
];

const DESK_OVERRIDES: &[(&str, &str)] = &[
    ("word_dim", "16"),
    ("concept_dim", "16"),
    ("hidden", "32"),
    ("layers", "1"),
    ("attention_dim", "32"),
    ("max_len", "30"),
    ("lr", "0.01"),
    ("concept_epochs", "30"),
    ("hash_buckets", "20000"),
];

const PATH_KEYS: &[&str] = &["out", "corpus", "triplets", "lexicon"];

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Resolved configuration: preset defaults, then file, then flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    /// Digests recorded by the manifest this config was loaded from.
    pub expected_inputs: BTreeMap<String, String>,
    pub manifest_subcommand: Option<String>,
}

impl RunConfig {
    pub fn resolve(file: BTreeMap<String, String>, flags: BTreeMap<String, String>) -> Result<RunConfig, CliError> {
        let mut expected_inputs = BTreeMap::new();
        let mut manifest_subcommand = None;
        let mut layered = BTreeMap::new();
        for (k, v) in file.into_iter().chain(flags.clone()) {
            if k == SUBCOMMAND_KEY {
                manifest_subcommand = Some(v);
            } else if let Some(name) = k.strip_prefix(INPUT_PREFIX) {
                expected_inputs.insert(name.to_string(), v);
            } else if k.starts_with(OUTPUT_PREFIX) {
                continue;
            } else if PATH_KEYS.contains(&k.as_str()) || FULL_DEFAULTS.iter().any(|(d, _)| *d == k) {
                layered.insert(k, v);
            } else {
                return Err(CliError::Config(format!("unknown config key {k:?}")));
            }
        }
        let preset: Preset = layered.get("preset").map(String::as_str).unwrap_or("full").parse()?;
        let mut values: BTreeMap<String, String> =
            FULL_DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        if preset == Preset::Desk {
            values.extend(DESK_OVERRIDES.iter().map(|(k, v)| (k.to_string(), v.to_string())));
        }
        values.extend(layered);
        if !values.contains_key("out") {
            return Err(CliError::Config("no output directory (--out DIR)".into()));
        }
        let cfg = RunConfig { values, expected_inputs, manifest_subcommand };
        cfg.variant()?;
        Ok(cfg)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.raw(key);
        raw.parse().map_err(|_| CliError::Config(format!("invalid value {raw:?} for {key}")))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("out"))
    }

    /// An explicit path key, or `default_name` under the output directory.
    pub fn path_or(&self, key: &str, default_name: &str) -> PathBuf {
        match self.values.get(key) {
            Some(p) => PathBuf::from(p),
            None => self.out_dir().join(default_name),
        }
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir().join(name)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.get("seed")
    }

    pub fn variant(&self) -> Result<ModelVariant, CliError> {
        self.raw("variant").parse().map_err(|_| {
            CliError::Config(format!("unknown variant {:?} (expected baseline, cs, csd, hcsd, hcsd-t)", self.raw("variant")))
        })
    }

    pub fn variant_slug(&self) -> Result<String, CliError> {
        Ok(self.variant()?.to_string().to_lowercase().replace('_', "-"))
    }

    pub fn synth(&self) -> Result<SynthConfig, CliError> {
        Ok(SynthConfig {
            seed: self.seed()?,
            n_concepts: self.get("synth_concepts")?,
            n_relations: self.get("synth_relations")?,
            depth: self.get("synth_depth")?,
            vocab_size: self.get("synth_vocab")?,
            docs: self.get("synth_docs")?,
            sentences_per_doc: self.get("synth_sentences")?,
            theta: self.get("synth_theta")?,
        })
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, CliError> {
        Ok(PipelineConfig { keep_fraction: self.get("keep_fraction")?, ..PipelineConfig::default() })
    }

    pub fn concept_training(&self) -> Result<ConceptTrainConfig, CliError> {
        let k: usize = self.get("concept_negatives")?;
        Ok(ConceptTrainConfig {
            dim: self.get("concept_dim")?,
            epochs: self.get("concept_epochs")?,
            learning_rate: self.get("concept_lr")?,
            seed: self.seed()?,
            negative_samples: (k > 0).then_some(k),
        })
    }

    pub fn word_training(&self) -> Result<WordTrainConfig, CliError> {
        Ok(WordTrainConfig {
            dim: self.get("word_dim")?,
            window: self.get("word_window")?,
            epochs: self.get("word_epochs")?,
            lr: self.get("word_lr")?,
            seed: self.seed()?,
            hash_buckets: self.get("hash_buckets")?,
            negatives: self.get("word_negatives")?,
            ..WordTrainConfig::default()
        })
    }

    pub fn model(&self) -> Result<ModelConfig, CliError> {
        Ok(ModelConfig {
            word_dim: self.get("word_dim")?,
            concept_dim: self.get("concept_dim")?,
            hidden: self.get("hidden")?,
            layers: self.get("layers")?,
            attention_dim: self.get("attention_dim")?,
            init_scale: self.get("init_scale")?,
            seed: self.seed()?,
        })
    }

    pub fn training(&self) -> Result<TrainRunConfig, CliError> {
        Ok(TrainRunConfig {
            epochs: self.get("epochs")?,
            lr: self.get("lr")?,
            batch_size: self.get("batch_size")?,
            seed: self.seed()?,
            keep_prob: self.get("keep_prob")?,
            clip: self.get("clip")?,
        })
    }
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_kv(&text)
}
