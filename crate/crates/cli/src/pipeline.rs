//! Pipeline stages. Each stage reads its inputs from the config and from
//! earlier stages' artifacts, so any stage can be rerun on its own.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use synprobe::metrics::{evaluate, extract_mst, head_scores, predict_heads, predicted_distance_matrix, MetricKind};
use synprobe::outcomes::{
    critical_kind, critical_match_analysis, find_critical_edge, load_blimp, read_scores, attach_scores,
    DecodedStructure, MatchSummary, MinimalPair, Phenomenon,
};
use synprobe::probes::{select_best_layer, train_probe, Checkpoint, Family, ProbeExample};
use synprobe::stats::{
    build_regression_table_for, groups, suite_ttests, Granularity, ModelRow, ParadigmCell, RegressionTable,
    ScoreSum, SuiteTTest,
};
use synprobe::tensors::{read_hidden_states, subtract_embeddings, ExportManifest, GloveTable};
use synprobe::treebank::{read_conllu, SentenceParse};

use crate::artifacts::{self, config_hash, content_key, file_hash, read_json, write_csv, write_json, Cache, Stamp};
use crate::config::PipelineConfig;
use crate::report;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    TrainProbe,
    EvalProbe,
    ScoreJoin,
    Regress,
    TTest,
    Critical,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::TrainProbe,
        Stage::EvalProbe,
        Stage::ScoreJoin,
        Stage::Regress,
        Stage::TTest,
        Stage::Critical,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::TrainProbe => "train-probe",
            Stage::EvalProbe => "eval-probe",
            Stage::ScoreJoin => "score-join",
            Stage::Regress => "regress",
            Stage::TTest => "ttest",
            Stage::Critical => "critical",
            Stage::Report => "report",
        }
    }
}

/// A model as described by its export manifest.
#[derive(Clone, Debug)]
pub struct LoadedModel {
    pub id: String,
    /// File-system safe form of `id`.
    pub slug: String,
    pub manifest: ExportManifest,
    pub scores: PathBuf,
    pub layers: Vec<usize>,
}

/// Validated configuration plus everything loaded once per run.
pub struct Context {
    pub cfg: PipelineConfig,
    pub stamp: Stamp,
    pub out: PathBuf,
    pub cache: Cache,
    pub models: Vec<LoadedModel>,
    treebank: [Vec<SentenceParse>; 3],
    treebank_hashes: [String; 3],
    blimp_parses: Vec<SentenceParse>,
    pairs: Vec<MinimalPair>,
    glove: Option<GloveTable>,
    glove_hash: String,
}

const SPLITS: [&str; 3] = ["train", "dev", "test"];

fn slug(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

impl Context {
    /// Validates the config and every input it names. Nothing is written.
    pub fn prepare(cfg: PipelineConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let stamp = Stamp {
            config_hash: config_hash(&cfg)?,
            seed: cfg.seed,
        };
        let tb = &cfg.treebank;
        let treebank = [
            read_conllu(&tb.train).map_err(invalid)?,
            read_conllu(&tb.dev).map_err(invalid)?,
            read_conllu(&tb.test).map_err(invalid)?,
        ];
        let treebank_hashes = [file_hash(&tb.train)?, file_hash(&tb.dev)?, file_hash(&tb.test)?];
        let blimp_parses = read_conllu(&cfg.blimp.parses).map_err(invalid)?;
        let pairs = load_blimp(&cfg.blimp.pairs).map_err(invalid)?;
        if pairs.len() != blimp_parses.len() {
            return Err(invalid(format!(
                "{} minimal pairs but {} acceptable-sentence parses",
                pairs.len(),
                blimp_parses.len()
            )));
        }
        let (glove, glove_hash) = match &cfg.glove {
            Some(p) if cfg.probes.contains(&Family::Control) => {
                (Some(GloveTable::load(p).map_err(invalid)?), file_hash(p)?)
            }
            _ => (None, String::new()),
        };

        let mut models = Vec::new();
        let mut seen = BTreeSet::new();
        for m in &cfg.models {
            let manifest = ExportManifest::load(&m.manifest).map_err(invalid)?;
            manifest.verify_checksums().map_err(invalid)?;
            for corpus in SPLITS.iter().chain(&["blimp"]) {
                if manifest.entry(corpus, 0).is_none() {
                    return Err(invalid(format!("manifest of {} has no {corpus} corpus", manifest.model_id)));
                }
            }
            let layers = match &cfg.layers {
                Some(l) => l.clone(),
                None => (1..=manifest.num_layers).collect(),
            };
            if let Some(bad) = layers.iter().find(|&&l| l > manifest.num_layers || (l == 0 && cfg.subtract_embeddings)) {
                return Err(invalid(format!("layer {bad} is not probeable for {}", manifest.model_id)));
            }
            if layers.is_empty() {
                return Err(invalid(format!("no layers to probe for {}", manifest.model_id)));
            }
            if !seen.insert(slug(&manifest.model_id)) {
                return Err(invalid(format!("duplicate model id {}", manifest.model_id)));
            }
            models.push(LoadedModel {
                id: manifest.model_id.clone(),
                slug: slug(&manifest.model_id),
                manifest,
                scores: m.scores.clone(),
                layers,
            });
        }
        let out = cfg.output_dir.clone();
        Ok(Context {
            cache: Cache::new(&out),
            out,
            stamp,
            models,
            treebank,
            treebank_hashes,
            blimp_parses,
            pairs,
            glove,
            glove_hash,
            cfg,
        })
    }

    pub fn run(&self, stage: Stage) -> Result<(), CliError> {
        log::info!("stage {}", stage.name());
        let result = match stage {
            Stage::TrainProbe => self.train_probes(),
            Stage::EvalProbe => self.eval_probes(),
            Stage::ScoreJoin => self.score_join(),
            Stage::Regress => self.regress(),
            Stage::TTest => self.ttest(),
            Stage::Critical => self.critical(),
            Stage::Report => self.report(),
        };
        result.map_err(|e| match e {
            CliError::Stage { .. } | CliError::Validation(_) => e,
            other => CliError::Stage {
                stage: stage.name(),
                cause: other.to_string(),
            },
        })
    }

    fn state_hashes(&self, model: &LoadedModel, corpus: &str, layer: usize) -> Vec<String> {
        let mut layers = vec![layer];
        if self.cfg.subtract_embeddings {
            layers.push(0);
        }
        layers
            .into_iter()
            .map(|l| model.manifest.entry(corpus, l).map_or_else(String::new, |e| e.sha256.clone()))
            .collect()
    }

    /// Examples for one corpus at one layer, embedding output subtracted when
    /// configured.
    pub fn examples(&self, model: &LoadedModel, corpus: &str, layer: usize) -> Result<Vec<ProbeExample>, CliError> {
        let parses = match corpus {
            "train" => &self.treebank[0],
            "dev" => &self.treebank[1],
            "test" => &self.treebank[2],
            _ => &self.blimp_parses,
        };
        let load = |l: usize| {
            let entry = model
                .manifest
                .entry(corpus, l)
                .ok_or_else(|| CliError::Artifact(format!("{}: no {corpus} layer {l}", model.id)))?;
            Ok::<_, CliError>(read_hidden_states(&entry.hidden_state_file)?)
        };
        let mut set = load(layer)?;
        if self.cfg.subtract_embeddings {
            set = subtract_embeddings(&set, &load(0)?)?;
        }
        set.check_alignment(parses)?;
        parses
            .iter()
            .enumerate()
            .map(|(i, p)| Ok(ProbeExample::new(p, set.matrix(i))?))
            .collect()
    }

    fn with_targets(&self, family: Family, examples: &[ProbeExample]) -> Vec<ProbeExample> {
        match (family, &self.glove) {
            (Family::Control, Some(g)) => examples.iter().cloned().map(|e| e.with_control_targets(g)).collect(),
            _ => examples.to_vec(),
        }
    }

    fn train_key(&self, model: &LoadedModel, family: Family, layer: usize) -> Result<String, CliError> {
        let tc = serde_json::to_string(&self.cfg.train_config(family)?).expect("train config serializes");
        let mut parts: Vec<String> = vec!["train-probe/1".into(), family.to_string(), tc];
        for corpus in SPLITS {
            parts.extend(self.state_hashes(model, corpus, layer));
        }
        parts.extend(self.treebank_hashes.iter().cloned());
        if family == Family::Control {
            parts.push(self.glove_hash.clone());
        }
        Ok(content_key(&parts.iter().map(String::as_str).collect::<Vec<_>>()))
    }

    fn selection_path(&self, model: &LoadedModel, family: Family) -> PathBuf {
        self.out.join("probes").join(&model.slug).join(format!("{family}.json"))
    }

    /// Trains every selected family on every layer, reusing cached
    /// checkpoints, and records the best layer by test metric.
    fn train_probes(&self) -> Result<(), CliError> {
        let jobs: Vec<(usize, usize)> = self
            .models
            .iter()
            .enumerate()
            .flat_map(|(m, model)| model.layers.iter().map(move |&l| (m, l)))
            .collect();
        let results: Vec<Vec<(Family, LayerResult)>> = jobs
            .par_iter()
            .map(|&(m, layer)| self.train_layer(&self.models[m], layer))
            .collect::<Result<_, _>>()?;

        for (m, model) in self.models.iter().enumerate() {
            for &family in &self.cfg.probes {
                let per_layer: Vec<LayerResult> = jobs
                    .iter()
                    .zip(&results)
                    .filter(|((jm, _), _)| *jm == m)
                    .flat_map(|(_, r)| r.iter().filter(|(f, _)| *f == family).map(|(_, lr)| lr.clone()))
                    .collect();
                let scored: Vec<(usize, f64)> = per_layer
                    .iter()
                    .filter_map(|r| r.test_metric.filter(|v| v.is_finite()).map(|v| (r.layer, v)))
                    .collect();
                let best_layer = select_best_layer(&scored)
                    .map_err(|_| CliError::Artifact(format!("{}/{family}: no layer has a finite test metric", model.id)))?;
                let sel = ProbeSelection {
                    model_id: model.id.clone(),
                    family,
                    metric: MetricKind::for_family(family),
                    best_layer,
                    per_layer,
                };
                write_json(&self.selection_path(model, family), &self.stamp, &sel)?;
            }
        }
        Ok(())
    }

    fn train_layer(&self, model: &LoadedModel, layer: usize) -> Result<Vec<(Family, LayerResult)>, CliError> {
        let mut base: Option<[Vec<ProbeExample>; 3]> = None;
        let mut out = Vec::new();
        for &family in &self.cfg.probes {
            let key = self.train_key(model, family, layer)?;
            let path = self.cache.path(&key, "prb");
            let ck = match self.cache.get(&key, "prb") {
                Some(p) => {
                    log::info!("{} layer {layer} {family}: cached", model.id);
                    Checkpoint::load(&p)?
                }
                None => {
                    if base.is_none() {
                        base = Some([
                            self.examples(model, "train", layer)?,
                            self.examples(model, "dev", layer)?,
                            self.examples(model, "test", layer)?,
                        ]);
                    }
                    let [train, dev, test] = base.as_ref().expect("loaded above");
                    let (train, dev, test) = (
                        self.with_targets(family, train),
                        self.with_targets(family, dev),
                        self.with_targets(family, test),
                    );
                    let config = self.cfg.train_config(family)?;
                    let (params, log) = train_probe(family, &train, &dev, &config)?;
                    let summary = evaluate(&params, &test)?;
                    let metric = summary.aggregate.is_finite().then_some(summary.aggregate);
                    log::info!(
                        "{} layer {layer} {family}: best epoch {}, test {} = {}",
                        model.id,
                        log.best_epoch,
                        summary.metric_kind.name(),
                        summary.aggregate
                    );
                    let meta = BTreeMap::from([
                        ("model_id".to_string(), model.id.clone()),
                        ("layer".to_string(), layer.to_string()),
                        ("config_hash".to_string(), self.stamp.config_hash.clone()),
                        ("seed".to_string(), self.stamp.seed.to_string()),
                        ("test_metric".to_string(), metric.map_or_else(|| "nan".into(), |v| v.to_string())),
                    ]);
                    let ck = Checkpoint { params, config, log, meta };
                    artifacts::write_bytes(&path, &ck.to_bytes())?;
                    ck
                }
            };
            let log_path = self.out.join(format!("probes/{}/{family}_layer{layer}.jsonl", model.slug));
            let header = serde_json::to_string(&self.stamp).expect("stamp serializes") + "\n";
            artifacts::write_bytes(&log_path, (header + &ck.log.to_jsonl()).as_bytes())?;
            let test_metric = parse_metric(ck.meta.get("test_metric"));
            out.push((
                family,
                LayerResult {
                    layer,
                    test_metric,
                    checkpoint: key,
                },
            ));
        }
        Ok(out)
    }

    pub fn selection(&self, model: &LoadedModel, family: Family) -> Result<ProbeSelection, CliError> {
        read_json(&self.selection_path(model, family))
    }

    fn best_checkpoint(&self, model: &LoadedModel, family: Family) -> Result<(ProbeSelection, Checkpoint), CliError> {
        let sel = self.selection(model, family)?;
        let key = &sel
            .per_layer
            .iter()
            .find(|r| r.layer == sel.best_layer)
            .ok_or_else(|| CliError::Artifact(format!("{}/{family}: best layer missing", model.id)))?
            .checkpoint;
        let path = self
            .cache
            .get(key, "prb")
            .ok_or_else(|| CliError::Artifact(format!("{}/{family}: checkpoint {key} not in cache", model.id)))?;
        Ok((sel, Checkpoint::load(path)?))
    }

    fn eval_path(&self, model: &LoadedModel, family: Family, ext: &str) -> PathBuf {
        self.out.join("eval").join(&model.slug).join(format!("{family}.{ext}"))
    }

    /// Scores each acceptable minimal-pair sentence with the best-layer probe.
    fn eval_probes(&self) -> Result<(), CliError> {
        let jobs: Vec<(usize, Family)> = (0..self.models.len())
            .flat_map(|m| self.cfg.probes.iter().map(move |&f| (m, f)))
            .collect();
        jobs.par_iter().try_for_each(|&(m, family)| {
            let model = &self.models[m];
            let (sel, ck) = self.best_checkpoint(model, family)?;
            let examples = self.with_targets(family, &self.examples(model, "blimp", sel.best_layer)?);
            let s = evaluate(&ck.params, &examples)?;
            let artifact = EvalArtifact {
                model_id: model.id.clone(),
                family,
                layer: sel.best_layer,
                metric: s.metric_kind,
                aggregate: s.aggregate.is_finite().then_some(s.aggregate),
                degenerate: s.degenerate.clone(),
                per_sentence: s.per_sentence.clone(),
            };
            write_csv(&self.eval_path(model, family, "csv"), &self.stamp, &s.to_csv())?;
            write_json(&self.eval_path(model, family, "json"), &self.stamp, &artifact)
        })
    }

    fn scored_pairs(&self, model: &LoadedModel) -> Result<Vec<MinimalPair>, CliError> {
        let mut pairs = self.pairs.clone();
        let rows = read_scores(&model.scores)?;
        let matched = attach_scores(&mut pairs, &rows);
        if matched < pairs.len() {
            log::warn!("{}: {} of {} pairs have no score", model.id, pairs.len() - matched, pairs.len());
        }
        Ok(pairs)
    }

    /// Joins pair outcomes with per-sentence probe scores.
    fn score_join(&self) -> Result<(), CliError> {
        let mut rows = Vec::new();
        let mut joined = Vec::new();
        for model in &self.models {
            let pairs = self.scored_pairs(model)?;
            let evals: Vec<EvalArtifact> = self
                .cfg
                .probes
                .iter()
                .map(|&f| read_json(&self.eval_path(model, f, "json")))
                .collect::<Result<_, _>>()?;
            let mut paradigms: BTreeMap<String, ParadigmCell> = BTreeMap::new();
            let mut out_pairs = Vec::new();
            for p in &pairs {
                let scores: BTreeMap<Family, Option<f64>> =
                    evals.iter().map(|e| (e.family, e.score(p.sentence_id))).collect();
                out_pairs.push(JoinedPair {
                    uid: p.uid.clone(),
                    phenomenon: p.phenomenon,
                    pair_index: p.pair_index,
                    sentence_id: p.sentence_id,
                    outcome: p.outcome(),
                    scores: scores.clone(),
                });
                let Some(outcome) = p.outcome() else { continue };
                let cell = paradigms.entry(p.uid.clone()).or_insert_with(|| ParadigmCell {
                    phenomenon: p.phenomenon,
                    pairs: 0,
                    correct: 0,
                    scores: BTreeMap::new(),
                });
                cell.pairs += 1;
                cell.correct += outcome as usize;
                for (f, s) in scores {
                    let sum = cell.scores.entry(f).or_insert_with(ScoreSum::default);
                    if let Some(s) = s {
                        sum.push(s);
                    }
                }
            }
            rows.push(ModelRow {
                model_id: model.id.clone(),
                paradigms,
            });
            joined.push(JoinedModel {
                model_id: model.id.clone(),
                pairs: out_pairs,
            });
        }
        write_json(&self.out.join("joined/model_rows.json"), &self.stamp, &rows)?;
        write_json(&self.out.join("joined/pairs.json"), &self.stamp, &joined)
    }

    pub fn model_rows(&self) -> Result<Vec<ModelRow>, CliError> {
        read_json(&self.out.join("joined/model_rows.json"))
    }

    fn joined(&self) -> Result<Vec<JoinedModel>, CliError> {
        read_json(&self.out.join("joined/pairs.json"))
    }

    pub fn table_path(&self, granularity: Granularity, ext: &str) -> PathBuf {
        self.out.join("regress").join(format!("{granularity}.{ext}"))
    }

    fn regress(&self) -> Result<(), CliError> {
        let rows = self.model_rows()?;
        let families = self.cfg.syntax_probes();
        for &g in &self.cfg.granularities {
            let group_names = match (g, &self.cfg.phenomena) {
                (Granularity::Phenomenon, Some(list)) => {
                    let set: BTreeSet<Phenomenon> = list.iter().copied().collect();
                    set.into_iter().map(|p| p.name().to_string()).collect()
                }
                _ => groups(&rows, g),
            };
            let table = build_regression_table_for(&rows, &families, g, &group_names, self.cfg.aggregation);
            write_csv(&self.table_path(g, "csv"), &self.stamp, &table.to_csv())?;
            write_json(&self.table_path(g, "json"), &self.stamp, &table)?;
        }
        Ok(())
    }

    pub fn tables(&self) -> Result<Vec<RegressionTable>, CliError> {
        self.cfg.granularities.iter().map(|&g| read_json(&self.table_path(g, "json"))).collect()
    }

    /// Per model and family: Welch tests of sentence-level probe scores for
    /// resolved against unresolved pairs, one per paradigm.
    fn ttest(&self) -> Result<(), CliError> {
        let mut out = Vec::new();
        for jm in self.joined()? {
            for &family in &self.cfg.probes {
                let mut suites: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
                for p in &jm.pairs {
                    let (Some(outcome), Some(Some(s))) = (p.outcome, p.scores.get(&family)) else { continue };
                    let e = suites.entry(&p.uid).or_default();
                    if outcome { e.0.push(*s) } else { e.1.push(*s) }
                }
                let input: Vec<(String, Vec<f64>, Vec<f64>)> =
                    suites.into_iter().map(|(u, (a, b))| (u.to_string(), a, b)).collect();
                out.push(ModelTTests {
                    model_id: jm.model_id.clone(),
                    family,
                    suites: suite_ttests(&input),
                });
            }
        }
        let mut csv = String::from("model,family,uid,n_correct,n_incorrect,t,df,p_raw,p_corrected\n");
        for m in &out {
            for s in &m.suites {
                let (t, df, p) = s.test.map_or((String::new(), String::new(), String::new()), |t| {
                    (t.t.to_string(), t.df.to_string(), t.p_value.to_string())
                });
                let pc = s.p_corrected.map_or_else(String::new, |v| v.to_string());
                csv.push_str(&format!(
                    "{},{},{},{},{},{t},{df},{p},{pc}\n",
                    m.model_id, m.family, s.uid, s.n_correct, s.n_incorrect
                ));
            }
        }
        write_csv(&self.out.join("ttest/ttests.csv"), &self.stamp, &csv)?;
        write_json(&self.out.join("ttest/ttests.json"), &self.stamp, &out)
    }

    /// Whether each model's best-layer probe recovers the critical edge of
    /// each critical-paradigm pair, against the model's outcome.
    fn critical(&self) -> Result<(), CliError> {
        let families: Vec<Family> = self
            .cfg
            .probes
            .iter()
            .copied()
            .filter(|f| matches!(f, Family::Structural | Family::Orthogonal | Family::Headword))
            .collect();
        let mut out: Vec<CriticalSummary> = Vec::new();
        for model in &self.models {
            let pairs = self.scored_pairs(model)?;
            let critical: Vec<&MinimalPair> = pairs.iter().filter(|p| critical_kind(&p.uid).is_some()).collect();
            if critical.is_empty() {
                continue;
            }
            for &family in &families {
                let (sel, ck) = self.best_checkpoint(model, family)?;
                let examples = self.examples(model, "blimp", sel.best_layer)?;
                let mut by_uid: BTreeMap<&str, Vec<_>> = BTreeMap::new();
                for p in &critical {
                    let ex = &examples[p.sentence_id];
                    let rec = find_critical_edge(p, &ex.parse)?;
                    let rec = if family == Family::Headword {
                        let heads = predict_heads(&head_scores(&ck.params, &ex.states)?);
                        rec.with_probe(DecodedStructure::Heads(&heads))
                    } else {
                        let d = predicted_distance_matrix(&ck.params, &ex.states)?;
                        let mst = extract_mst(&d, &ex.parse.punct_mask());
                        rec.with_probe(DecodedStructure::Undirected(&mst))
                    };
                    by_uid.entry(&p.uid).or_default().push(rec);
                }
                for (uid, records) in by_uid {
                    let filtered = records.iter().filter(|r| r.is_filtered()).count();
                    out.push(CriticalSummary {
                        model_id: model.id.clone(),
                        family,
                        uid: uid.to_string(),
                        filtered,
                        summary: critical_match_analysis(&records).ok(),
                    });
                }
            }
        }
        let mut csv =
            String::from("model,family,uid,n,filtered,hamming,match_rate,probe_accuracy,outcome_accuracy\n");
        for c in &out {
            let cols = c.summary.map_or_else(
                || format!("0,{},,,,", c.filtered),
                |s| {
                    format!(
                        "{},{},{},{},{},{}",
                        s.n, c.filtered, s.hamming, s.match_rate, s.probe_accuracy, s.outcome_accuracy
                    )
                },
            );
            csv.push_str(&format!("{},{},{},{cols}\n", c.model_id, c.family, c.uid));
        }
        write_csv(&self.out.join("critical/critical.csv"), &self.stamp, &csv)?;
        write_json(&self.out.join("critical/critical.json"), &self.stamp, &out)
    }

    fn report(&self) -> Result<(), CliError> {
        let tables = self.tables()?;
        let mut written = Vec::new();
        for table in &tables {
            for family in self.cfg.syntax_probes() {
                let rows: Vec<_> = table.rows.iter().filter(|r| r.family == family).collect();
                let svg = report::scatter_svg(family, table.granularity, &rows, &self.stamp);
                let rel = format!("report/plots/{family}_{}.svg", table.granularity);
                artifacts::write_bytes(&self.out.join(&rel), svg.as_bytes())?;
                written.push(rel);
            }
        }
        let index = report::index(&self.out, &written)?;
        write_json(&self.out.join("report/index.json"), &self.stamp, &index)
    }
}

fn parse_metric(v: Option<&String>) -> Option<f64> {
    v.and_then(|s| s.parse::<f64>().ok()).filter(|x| x.is_finite())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerResult {
    pub layer: usize,
    /// Mean test-split metric; `None` when undefined.
    pub test_metric: Option<f64>,
    /// Cache key of the checkpoint.
    pub checkpoint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSelection {
    pub model_id: String,
    pub family: Family,
    pub metric: MetricKind,
    pub best_layer: usize,
    pub per_layer: Vec<LayerResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalArtifact {
    pub model_id: String,
    pub family: Family,
    pub layer: usize,
    pub metric: MetricKind,
    pub aggregate: Option<f64>,
    pub degenerate: Vec<usize>,
    pub per_sentence: Vec<(usize, f64)>,
}

impl EvalArtifact {
    pub fn score(&self, sentence: usize) -> Option<f64> {
        self.per_sentence
            .binary_search_by_key(&sentence, |(id, _)| *id)
            .ok()
            .map(|k| self.per_sentence[k].1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinedPair {
    pub uid: String,
    pub phenomenon: Phenomenon,
    pub pair_index: usize,
    pub sentence_id: usize,
    pub outcome: Option<bool>,
    pub scores: BTreeMap<Family, Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinedModel {
    pub model_id: String,
    pub pairs: Vec<JoinedPair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelTTests {
    pub model_id: String,
    pub family: Family,
    pub suites: Vec<SuiteTTest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalSummary {
    pub model_id: String,
    pub family: Family,
    pub uid: String,
    pub filtered: usize,
    /// `None` when every pair was filtered out.
    pub summary: Option<MatchSummary>,
}

/// Validates, locks the artifact directory and runs `stages` in order.
pub fn run_stages(cfg: PipelineConfig, stages: &[Stage]) -> Result<PathBuf, CliError> {
    let ctx = Context::prepare(cfg)?;
    let _lock = artifacts::ArtifactLock::acquire(&ctx.out)?;
    for &s in stages {
        ctx.run(s)?;
    }
    Ok(ctx.out.clone())
}

/// Every stage, end to end.
pub fn run_all(cfg: PipelineConfig) -> Result<PathBuf, CliError> {
    run_stages(cfg, &Stage::ALL)
}

/// Paths of files under `dir`, relative and sorted.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
        for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
            let path = entry.map_err(|e| CliError::io(dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                out.push(path.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}
