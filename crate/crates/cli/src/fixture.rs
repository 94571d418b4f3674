//! A self-contained synthetic input tree for smoke runs: a small treebank,
//! templated minimal pairs with their parses, GloVe vectors, and per-model
//! hidden states and scores whose probe quality varies across models.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use synprobe::outcomes::{write_scores, ScoreRow};
use synprobe::synth::isometric_embedding;
use synprobe::tensors::{sha256_hex, Architecture, ExportEntry, ExportManifest, HiddenStateSet, ScoringRule};
use synprobe::treebank::{write_conllu, SentenceParse, Token};

use crate::artifacts::write_bytes;
use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct SmokeSpec {
    pub models: usize,
    pub layers: usize,
    pub dim: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub pairs_per_paradigm: usize,
    pub seed: u64,
}

impl Default for SmokeSpec {
    fn default() -> Self {
        SmokeSpec {
            models: 4,
            layers: 2,
            dim: 16,
            train: 60,
            dev: 20,
            test: 20,
            pairs_per_paradigm: 8,
            seed: 0,
        }
    }
}

const LATENT: usize = 10;
const NOISE: f64 = 0.1;

const POOLS: [(&str, &str, &[&str]); 9] = [
    ("DT", "DET", &["the", "every", "a"]),
    ("NN", "NOUN", &["key", "cabinet", "vase", "lady", "song", "plan"]),
    ("NNS", "NOUN", &["keys", "prints", "plays", "songs"]),
    ("VBP", "VERB", &["aggravate", "annoy", "bore", "help"]),
    ("VBZ", "VERB", &["aggravates", "annoys", "bores", "helps"]),
    ("VBD", "VERB", &["disliked", "saw", "found", "liked", "helped"]),
    ("IN", "ADP", &["of", "about", "near"]),
    ("NNP", "PROPN", &["Nina", "Marcus", "Mitchell", "Rose"]),
    ("JJ", "ADJ", &["old", "red", "quiet"]),
];

fn token(index: usize, form: &str, upos: &str, xpos: &str, head: usize, deprel: &str) -> Token {
    Token {
        index,
        form: form.into(),
        upos: upos.into(),
        xpos: xpos.into(),
        head,
        deprel: deprel.into(),
        is_punct: upos == "PUNCT",
    }
}

fn treebank_sentence(rng: &mut ChaCha8Rng, id: usize) -> SentenceParse {
    let n = rng.random_range(3..=8);
    let mut heads = vec![0; n];
    projective_heads(rng, 1, n, 0, &mut heads);
    let root = heads.iter().position(|&h| h == 0).expect("one root") + 1;
    let mut tokens: Vec<Token> = heads
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let (xpos, upos, forms) = POOLS.choose(rng).expect("non-empty");
            let form = forms.choose(rng).expect("non-empty");
            token(i + 1, form, upos, xpos, h, if h == 0 { "root" } else { "dep" })
        })
        .collect();
    if rng.random_bool(0.5) {
        tokens.push(token(n + 1, ".", "PUNCT", ".", root, "punct"));
    }
    SentenceParse::from_tokens(tokens, id).expect("random tree is well formed")
}

/// Random projective tree over words `lo..=hi`, attached to `head`.
fn projective_heads(rng: &mut ChaCha8Rng, lo: usize, hi: usize, head: usize, heads: &mut [usize]) {
    if lo > hi {
        return;
    }
    let r = rng.random_range(lo..=hi);
    heads[r - 1] = head;
    projective_heads(rng, lo, r - 1, r, heads);
    projective_heads(rng, r + 1, hi, r, heads);
}

struct Pair {
    uid: &'static str,
    good: String,
    bad: String,
    parse: SentenceParse,
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty")
}

fn templated_pairs(rng: &mut ChaCha8Rng, per: usize) -> Vec<Pair> {
    let (nn, nns, names) = (POOLS[1].2, POOLS[2].2, POOLS[7].2);
    let mut out = Vec::new();
    for _ in 0..per {
        let (n1, n2, n3) = (pick(rng, nns), pick(rng, nn), pick(rng, nn));
        let k = rng.random_range(0..POOLS[3].2.len());
        let (v, vs) = (POOLS[3].2[k], POOLS[4].2[k]);
        let name = pick(rng, names);
        let rows = [
            ("The", "DET", "DT", 2, "det"),
            (n1, "NOUN", "NNS", 9, "nsubj"),
            ("of", "ADP", "IN", 5, "case"),
            ("the", "DET", "DT", 5, "det"),
            (n2, "NOUN", "NN", 2, "nmod"),
            ("near", "ADP", "IN", 8, "case"),
            ("the", "DET", "DT", 8, "det"),
            (n3, "NOUN", "NN", 5, "nmod"),
            (v, "VERB", "VBP", 0, "root"),
            (name, "PROPN", "NNP", 9, "obj"),
            (".", "PUNCT", ".", 9, "punct"),
        ];
        out.push(Pair {
            uid: "distractor_agreement_relational_noun",
            good: format!("The {n1} of the {n2} near the {n3} {v} {name}."),
            bad: format!("The {n1} of the {n2} near the {n3} {vs} {name}."),
            parse: parse_rows(&rows),
        });
    }
    for _ in 0..per {
        let (name, n, n2, v) = (pick(rng, names), pick(rng, nn), pick(rng, nn), pick(rng, POOLS[5].2));
        let rows = [
            (name, "PROPN", "NNP", 3, "nsubj"),
            ("had", "AUX", "VBD", 3, "aux"),
            ("remembered", "VERB", "VBN", 0, "root"),
            ("who", "PRON", "WP", 10, "obj"),
            ("the", "DET", "DT", 6, "det"),
            (n, "NOUN", "NN", 10, "nsubj"),
            ("of", "ADP", "IN", 9, "case"),
            ("the", "DET", "DT", 9, "det"),
            (n2, "NOUN", "NN", 6, "nmod"),
            (v, "VERB", "VBD", 3, "ccomp"),
            (".", "PUNCT", ".", 3, "punct"),
        ];
        out.push(Pair {
            uid: "wh_vs_that_with_gap",
            good: format!("{name} had remembered who the {n} of the {n2} {v}."),
            bad: format!("{name} had remembered that the {n} of the {n2} {v}."),
            parse: parse_rows(&rows),
        });
    }
    for _ in 0..per {
        let (a1, a2) = (pick(rng, POOLS[8].2), pick(rng, POOLS[8].2));
        let (n, v) = (pick(rng, nn), pick(rng, POOLS[5].2));
        let rows = [
            ("The", "DET", "DT", 3, "det"),
            (a1, "ADJ", "JJ", 3, "amod"),
            ("lady", "NOUN", "NN", 8, "nsubj"),
            ("near", "ADP", "IN", 7, "case"),
            ("the", "DET", "DT", 7, "det"),
            (a2, "ADJ", "JJ", 7, "amod"),
            (n, "NOUN", "NN", 3, "nmod"),
            (v, "VERB", "VBD", 0, "root"),
            ("herself", "PRON", "PRP", 8, "obj"),
            (".", "PUNCT", ".", 8, "punct"),
        ];
        out.push(Pair {
            uid: "anaphor_gender_agreement",
            good: format!("The {a1} lady near the {a2} {n} {v} herself."),
            bad: format!("The {a1} lady near the {a2} {n} {v} himself."),
            parse: parse_rows(&rows),
        });
    }
    out
}

fn parse_rows(rows: &[(&str, &str, &str, usize, &str)]) -> SentenceParse {
    let tokens = rows
        .iter()
        .enumerate()
        .map(|(i, &(f, u, x, h, d))| token(i + 1, f, u, x, h, d))
        .collect();
    SentenceParse::from_tokens(tokens, 0).expect("template tree is well formed")
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

struct ModelWeights {
    /// One row per vocabulary entry.
    emb: Vec<Vec<f64>>,
    /// `dim x LATENT`, row-major.
    w: Vec<f64>,
    quality: Vec<f64>,
}

impl ModelWeights {
    fn new(vocab: usize, dim: usize, quality: Vec<f64>, rng: &mut ChaCha8Rng) -> Self {
        ModelWeights {
            emb: (0..vocab).map(|_| (0..dim).map(|_| gaussian(rng)).collect()).collect(),
            w: (0..dim * LATENT).map(|_| gaussian(rng) / (LATENT as f64).sqrt()).collect(),
            quality,
        }
    }
}

/// Hidden states of one model over one corpus at every layer: layer 0 is a
/// per-form embedding, layer `l` adds `quality[l] · W z` plus noise, where
/// `z` embeds the gold tree metric.
fn model_states(
    parses: &[SentenceParse],
    vocab: &[String],
    weights: &ModelWeights,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<Vec<f32>>> {
    let ModelWeights { emb, w, quality } = weights;
    let mut layers = vec![Vec::new(); quality.len() + 1];
    for p in parses {
        let n = p.len();
        let d = DMatrix::from_fn(n, n, |i, j| p.distance(i + 1, j + 1) as f64);
        let z = isometric_embedding(&d, LATENT).expect("tree metrics embed");
        let base: Vec<f64> = p
            .tokens
            .iter()
            .flat_map(|t| {
                let k = vocab.binary_search(&t.form.to_lowercase()).expect("form in vocab");
                emb[k].clone()
            })
            .collect();
        layers[0].push(base.iter().map(|&x| x as f32).collect());
        for (l, &q) in quality.iter().enumerate() {
            let mut h = base.clone();
            for i in 0..n {
                for r in 0..dim {
                    let signal: f64 = (0..LATENT).map(|c| w[r * LATENT + c] * z[(i, c)]).sum();
                    h[i * dim + r] += q * signal + NOISE * gaussian(rng);
                }
            }
            layers[l + 1].push(h.iter().map(|&x| x as f32).collect());
        }
    }
    layers
}

/// Writes the fixture under `dir` and returns the path of its config file.
pub fn write_smoke_fixture(dir: &Path, spec: &SmokeSpec) -> Result<PathBuf, CliError> {
    if spec.models < 1 || spec.layers < 1 || spec.dim < 1 {
        return Err(CliError::Validation("fixture needs at least one model, layer and dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let splits: Vec<(&str, Vec<SentenceParse>)> = [("train", spec.train), ("dev", spec.dev), ("test", spec.test)]
        .into_iter()
        .map(|(name, n)| (name, (0..n).map(|i| treebank_sentence(&mut rng, i)).collect()))
        .collect();
    for (name, parses) in &splits {
        write_bytes(&dir.join(format!("treebank/{name}.conllu")), write_conllu(parses).as_bytes())?;
    }

    let pairs = templated_pairs(&mut rng, spec.pairs_per_paradigm);
    let blimp_parses: Vec<SentenceParse> = pairs.iter().map(|p| p.parse.clone()).collect();
    write_bytes(&dir.join("blimp/acceptable.conllu"), write_conllu(&blimp_parses).as_bytes())?;
    let mut jsonl = String::new();
    let mut counters = std::collections::BTreeMap::new();
    for p in &pairs {
        let k: &mut usize = counters.entry(p.uid).or_default();
        let line = serde_json::json!({
            "sentence_good": p.good,
            "sentence_bad": p.bad,
            "UID": p.uid,
            "pairID": k.to_string(),
        });
        jsonl.push_str(&line.to_string());
        jsonl.push('\n');
        *k += 1;
    }
    write_bytes(&dir.join("blimp/pairs.jsonl"), jsonl.as_bytes())?;

    let mut vocab: BTreeSet<String> = POOLS.iter().flat_map(|(_, _, f)| f.iter().map(|s| s.to_lowercase())).collect();
    for p in splits.iter().flat_map(|(_, ps)| ps).chain(&blimp_parses) {
        vocab.extend(p.tokens.iter().map(|t| t.form.to_lowercase()));
    }
    let vocab: Vec<String> = vocab.into_iter().collect();
    let mut glove = String::new();
    for w in &vocab {
        let v: Vec<String> = (0..8).map(|_| format!("{:.5}", gaussian(&mut rng))).collect();
        glove.push_str(&format!("{w} {}\n", v.join(" ")));
    }
    write_bytes(&dir.join("glove.txt"), glove.as_bytes())?;

    let mut model_blocks = String::new();
    for m in 0..spec.models {
        let strength = if spec.models > 1 { 0.1 + 0.9 * m as f64 / (spec.models - 1) as f64 } else { 1.0 };
        let quality: Vec<f64> = (1..=spec.layers).map(|l| strength * l as f64 / spec.layers as f64).collect();
        let weights = ModelWeights::new(vocab.len(), spec.dim, quality, &mut rng);
        let id = format!("smoke-{m}");
        let mdir = dir.join("models").join(&id);
        let mut exports = Vec::new();
        let corpora: Vec<(&str, &[SentenceParse], String)> = splits
            .iter()
            .map(|(n, ps)| (*n, ps.as_slice(), format!("../../treebank/{n}.conllu")))
            .chain([("blimp", blimp_parses.as_slice(), "../../blimp/acceptable.conllu".to_string())])
            .collect();
        for (corpus, parses, parse_file) in corpora {
            let layers = model_states(parses, &vocab, &weights, spec.dim, &mut rng);
            for (l, sentences) in layers.into_iter().enumerate() {
                let set = HiddenStateSet::new(&id, l, spec.dim, format!("{corpus}.conllu"), sentences)?;
                let bytes = set.to_bytes();
                let file = format!("{corpus}_L{l}.hsb");
                write_bytes(&mdir.join(&file), &bytes)?;
                exports.push(ExportEntry {
                    corpus: corpus.into(),
                    layer: l,
                    parse_file: parse_file.clone().into(),
                    hidden_state_file: file.into(),
                    sha256: sha256_hex(&bytes),
                });
            }
        }
        let manifest = ExportManifest {
            model_id: id.clone(),
            architecture: Architecture::Decoder,
            num_layers: spec.layers,
            dim: spec.dim,
            alignment: "mean".into(),
            stack: None,
            scoring: ScoringRule::Causal,
            exports,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_bytes(&mdir.join("manifest.json"), text.as_bytes())?;

        let p_correct = 0.35 + 0.6 * strength;
        let mut counters = std::collections::BTreeMap::new();
        let rows: Vec<ScoreRow> = pairs
            .iter()
            .map(|p| {
                let k: &mut usize = counters.entry(p.uid).or_default();
                let acc = -10.0 - 20.0 * rng.random::<f64>();
                let gap = 0.1 + 3.0 * rng.random::<f64>();
                let right = rng.random_bool(p_correct);
                let row = ScoreRow {
                    uid: p.uid.into(),
                    pair_index: *k,
                    logp_acc: acc,
                    logp_unacc: if right { acc - gap } else { acc + gap },
                };
                *k += 1;
                row
            })
            .collect();
        write_bytes(&mdir.join("scores.csv"), write_scores(&rows).as_bytes())?;
        model_blocks.push_str(&format!(
            "\n[[models]]\nmanifest = \"models/{id}/manifest.json\"\nscores = \"models/{id}/scores.csv\"\n"
        ));
    }

    let config = format!(
        r#"seed = {seed}
output_dir = "out"
probes = ["structural", "orthogonal", "headword", "control"]
glove = "glove.txt"

[treebank]
train = "treebank/train.conllu"
dev = "treebank/dev.conllu"
test = "treebank/test.conllu"

[blimp]
pairs = ["blimp/pairs.jsonl"]
parses = "blimp/acceptable.conllu"
{model_blocks}
[training.structural]
max_epochs = 30
patience = 10
rank = 8
lr = 0.01
batch_size = 16

[training.orthogonal]
max_epochs = 15
patience = 5
lr = 0.01
batch_size = 16

[training.headword]
max_epochs = 30
patience = 10
rank = 8
lr = 0.01
batch_size = 16

[training.control]
max_epochs = 30
patience = 10
rank = 8
lr = 0.01
batch_size = 16
"#,
        seed = spec.seed
    );
    let path = dir.join("config.toml");
    write_bytes(&path, config.as_bytes())?;
    Ok(path)
}
