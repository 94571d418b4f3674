//! Pipeline configuration: one TOML document.
//!
//! ```toml
//! seed = 0
//! output_dir = "out"
//! probes = ["structural", "orthogonal", "headword", "control"]
//! glove = "glove.txt"
//!
//! [treebank]
//! train = "ptb/train.conllu"
//! dev = "ptb/dev.conllu"
//! test = "ptb/test.conllu"
//!
//! [blimp]
//! pairs = ["blimp/agreement.jsonl"]
//! parses = "blimp/acceptable.conllu"
//!
//! [[models]]
//! manifest = "models/a/manifest.json"
//! scores = "models/a/scores.csv"
//!
//! [training.structural]
//! max_epochs = 40
//! ```
//!
//! Relative paths resolve against the directory of the config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synprobe::outcomes::Phenomenon;
use synprobe::probes::{Family, TrainConfig};
use synprobe::stats::{Aggregation, Granularity};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreebankPaths {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlimpPaths {
    /// JSONL files, read in order; pair `i` owns sentence `i` of `parses`.
    pub pairs: Vec<PathBuf>,
    /// Parses of the acceptable sentences.
    pub parses: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPaths {
    pub manifest: PathBuf,
    pub scores: PathBuf,
}

fn default_probes() -> Vec<Family> {
    Family::ALL.to_vec()
}

fn default_granularities() -> Vec<Granularity> {
    vec![Granularity::Full, Granularity::Phenomenon, Granularity::Paradigm]
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_probes")]
    pub probes: Vec<Family>,
    #[serde(default)]
    pub glove: Option<PathBuf>,
    pub treebank: TreebankPaths,
    pub blimp: BlimpPaths,
    pub models: Vec<ModelPaths>,
    /// Layers to probe; all non-embedding layers when absent.
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
    #[serde(default = "yes")]
    pub subtract_embeddings: bool,
    #[serde(default = "default_granularities")]
    pub granularities: Vec<Granularity>,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Phenomena reported at phenomenon granularity; those seen in the data
    /// when absent.
    #[serde(default)]
    pub phenomena: Option<Vec<Phenomenon>>,
    /// Per-family overrides of the training defaults.
    #[serde(default)]
    pub training: BTreeMap<Family, toml::Table>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(g) = &mut self.glove {
            fix(g);
        }
        fix(&mut self.treebank.train);
        fix(&mut self.treebank.dev);
        fix(&mut self.treebank.test);
        self.blimp.pairs.iter_mut().for_each(fix);
        fix(&mut self.blimp.parses);
        for m in &mut self.models {
            fix(&mut m.manifest);
            fix(&mut m.scores);
        }
    }

    /// Every input file the pipeline reads directly, in a fixed order.
    pub fn input_paths(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = vec![&self.treebank.train, &self.treebank.dev, &self.treebank.test];
        out.extend(self.blimp.pairs.iter().map(PathBuf::as_path));
        out.push(&self.blimp.parses);
        out.extend(self.glove.iter().map(PathBuf::as_path));
        for m in &self.models {
            out.push(&m.manifest);
            out.push(&m.scores);
        }
        out
    }

    /// Checks everything that can be checked without reading model data.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Validation(m));
        if self.probes.is_empty() {
            return fail("no probe families selected".into());
        }
        if self.models.is_empty() {
            return fail("no models configured".into());
        }
        if self.granularities.is_empty() {
            return fail("no granularities selected".into());
        }
        if self.probes.contains(&Family::Control) && self.glove.is_none() {
            return fail("the control probe needs a GloVe file (`glove`)".into());
        }
        for p in self.input_paths() {
            if !p.is_file() {
                return fail(format!("missing input file {}", p.display()));
            }
        }
        for family in &self.probes {
            self.train_config(*family)?;
        }
        for family in self.training.keys() {
            if !self.probes.contains(family) {
                return fail(format!("training overrides for unselected probe {family}"));
            }
        }
        Ok(())
    }

    /// Reference defaults for `family` with this config's overrides and seed.
    pub fn train_config(&self, family: Family) -> Result<TrainConfig, CliError> {
        let mut merged = toml::Table::try_from(TrainConfig::defaults_for(family)).expect("defaults serialize");
        if let Some(over) = self.training.get(&family) {
            for (k, v) in over {
                if !merged.contains_key(k) {
                    return Err(CliError::Validation(format!("unknown training setting {family}.{k}")));
                }
                if k == "seed" {
                    return Err(CliError::Validation("set the seed at the top level".into()));
                }
                merged.insert(k.clone(), v.clone());
            }
        }
        let mut cfg: TrainConfig = merged
            .try_into()
            .map_err(|e| CliError::Validation(format!("training.{family}: {e}")))?;
        cfg.seed = self.seed;
        cfg.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(cfg)
    }

    /// Selected families other than the control probe.
    pub fn syntax_probes(&self) -> Vec<Family> {
        self.probes.iter().copied().filter(|f| *f != Family::Control).collect()
    }
}
