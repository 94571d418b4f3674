//! Tree decoding and probe evaluation: MST extraction, UUAS, UAS, Spearman
//! correlation and the control-probe variance check.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probes::{Family, ProbeExample, ProbeParams};
use crate::treebank::{ordered, SentenceParse};

/// Predicted pairwise distances for one sentence.
///
/// Structural and orthogonal probes use the squared norm `‖g(h_i − h_j)‖²`,
/// headword and control probes the plain norm.
pub fn predicted_distance_matrix(params: &ProbeParams, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if states.ncols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "hidden states have width {}, probe expects {}",
            states.ncols(),
            params.input_dim()
        )));
    }
    let proj = states * params.linear_map().transpose();
    let squared = matches!(params.family, Family::Structural | Family::Orthogonal);
    let n = states.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let sq = (proj.row(i) - proj.row(j)).norm_squared();
            let d = if squared { sq } else { sq.sqrt() };
            out[(i, j)] = d;
            out[(j, i)] = d;
        }
    }
    Ok(out)
}

/// Minimum spanning tree over the non-punctuation tokens, by Prim's
/// algorithm from the lowest non-punctuation index.
///
/// Edges are 1-based `(lower, higher)` pairs. Ties between candidate edges
/// are broken by `(weight, lower endpoint, higher endpoint)`.
pub fn extract_mst(distances: &DMatrix<f64>, punct_mask: &[bool]) -> BTreeSet<(usize, usize)> {
    let nodes: Vec<usize> = (0..distances.nrows())
        .filter(|&i| !punct_mask.get(i).copied().unwrap_or(false))
        .collect();
    let mut edges = BTreeSet::new();
    if nodes.len() < 2 {
        return edges;
    }
    let m = nodes.len();
    let mut in_tree = vec![false; m];
    // best crossing edge per outside vertex: (weight, lo, hi)
    let mut key: Vec<Option<(f64, usize, usize)>> = vec![None; m];
    let better = |a: (f64, usize, usize), b: (f64, usize, usize)| {
        a.0 < b.0 || (a.0 == b.0 && (a.1, a.2) < (b.1, b.2))
    };
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..m {
        for v in 0..m {
            if in_tree[v] {
                continue;
            }
            let (lo, hi) = ordered(nodes[current], nodes[v]);
            let cand = (distances[(nodes[current], nodes[v])], lo, hi);
            if key[v].is_none_or(|k| better(cand, k)) {
                key[v] = Some(cand);
            }
        }
        let mut pick: Option<(usize, (f64, usize, usize))> = None;
        for v in 0..m {
            if in_tree[v] {
                continue;
            }
            let k = key[v].expect("every outside vertex has a key");
            if pick.is_none_or(|(_, pk)| better(k, pk)) {
                pick = Some((v, k));
            }
        }
        let (v, (_, lo, hi)) = pick.expect("an outside vertex remains");
        in_tree[v] = true;
        edges.insert((lo + 1, hi + 1));
        current = v;
    }
    edges
}

/// Gold edges used for UUAS: non-root edges between two non-punctuation tokens.
pub fn uuas_gold_edges(parse: &SentenceParse) -> BTreeSet<(usize, usize)> {
    parse
        .gold_edges()
        .iter()
        .copied()
        .filter(|&(a, b)| !parse.tokens[a - 1].is_punct && !parse.tokens[b - 1].is_punct)
        .collect()
}

/// Fraction of gold edges (undirected) present in `predicted`.
///
/// Sentences with no scorable gold edge score 1.
pub fn score_uuas(predicted: &BTreeSet<(usize, usize)>, parse: &SentenceParse) -> f64 {
    let gold = uuas_gold_edges(parse);
    if gold.is_empty() {
        log::info!("sentence without scorable gold edges scored as UUAS 1");
        return 1.0;
    }
    let hits = predicted
        .iter()
        .map(|&(a, b)| ordered(a, b))
        .filter(|e| gold.contains(e))
        .count();
    hits as f64 / gold.len() as f64
}

/// Decodes the MST for a sentence and scores it.
pub fn uuas_for_states(params: &ProbeParams, states: &DMatrix<f64>, parse: &SentenceParse) -> Result<f64> {
    let d = predicted_distance_matrix(params, states)?;
    Ok(score_uuas(&extract_mst(&d, &parse.punct_mask()), parse))
}

/// Candidate scores for every word: column 0 is ROOT, column `c` is word `c`.
/// A word's own column is `-inf`.
pub fn head_scores(params: &ProbeParams, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let root = params
        .root
        .as_ref()
        .ok_or_else(|| Error::Shape(format!("{} probe has no ROOT vector", params.family)))?;
    if states.ncols() != params.input_dim() {
        return Err(Error::Shape("hidden state width does not match probe".into()));
    }
    let map = params.linear_map();
    let proj = states * map.transpose();
    let proj_root = &map * root;
    let n = states.nrows();
    Ok(DMatrix::from_fn(n, n + 1, |i, c| {
        if c == 0 {
            -(proj.row(i).transpose() - &proj_root).norm()
        } else if c - 1 == i {
            f64::NEG_INFINITY
        } else {
            -(proj.row(i) - proj.row(c - 1)).norm()
        }
    }))
}

/// Argmax head per word (0 = ROOT); ties go to the lowest candidate index.
pub fn predict_heads(scores: &DMatrix<f64>) -> Vec<usize> {
    (0..scores.nrows())
        .map(|i| {
            let mut best = 0;
            for c in 1..scores.ncols() {
                if scores[(i, c)] > scores[(i, best)] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Fraction of words (punctuation included) whose predicted head is gold.
pub fn score_uas(params: &ProbeParams, states: &DMatrix<f64>, parse: &SentenceParse) -> Result<f64> {
    let pred = predict_heads(&head_scores(params, states)?);
    let hits = pred
        .iter()
        .zip(&parse.tokens)
        .filter(|(p, t)| **p == t.head)
        .count();
    Ok(hits as f64 / parse.len() as f64)
}

pub(crate) fn uas_for_states(params: &ProbeParams, states: &DMatrix<f64>, parse: &SentenceParse) -> f64 {
    score_uas(params, states, parse).unwrap_or(f64::NAN)
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && xs[idx[end]] == xs[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation, `None` when undefined (fewer than two points,
/// mismatched lengths or a constant input).
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation between predicted and GloVe distances over a
/// sentence's control pairs.
pub fn control_rho(params: &ProbeParams, ex: &ProbeExample) -> Result<Option<f64>> {
    let d = predicted_distance_matrix(params, &ex.states)?;
    let pred: Vec<f64> = ex.control_pairs.iter().map(|p| d[(p.i, p.j)]).collect();
    let gold: Vec<f64> = ex.control_pairs.iter().map(|p| p.target).collect();
    Ok(spearman_rho(&pred, &gold))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Uuas,
    Uas,
    SpearmanRho,
}

impl MetricKind {
    pub fn for_family(family: Family) -> Self {
        match family {
            Family::Structural | Family::Orthogonal => MetricKind::Uuas,
            Family::Headword => MetricKind::Uas,
            Family::Control => MetricKind::SpearmanRho,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Uuas => "uuas",
            MetricKind::Uas => "uas",
            MetricKind::SpearmanRho => "spearman_rho",
        }
    }
}

/// Per-sentence scores of one probe on one corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeEvalSummary {
    pub metric_kind: MetricKind,
    pub per_sentence: Vec<(usize, f64)>,
    pub aggregate: f64,
    /// Sentences with no scorable gold edge (scored 1 for UUAS) or an
    /// undefined correlation (left out of `per_sentence`).
    pub degenerate: Vec<usize>,
}

impl ProbeEvalSummary {
    pub fn to_csv(&self) -> String {
        let mut s = format!("sentence_id,{}\n", self.metric_kind.name());
        for (id, v) in &self.per_sentence {
            s.push_str(&format!("{id},{v}\n"));
        }
        s
    }

    pub fn score(&self, sentence: usize) -> Option<f64> {
        self.per_sentence
            .binary_search_by_key(&sentence, |(id, _)| *id)
            .ok()
            .map(|k| self.per_sentence[k].1)
    }
}

/// Scores every sentence with the family's metric. Sentences where the
/// Spearman correlation is undefined are left out.
pub fn evaluate(params: &ProbeParams, examples: &[ProbeExample]) -> Result<ProbeEvalSummary> {
    let kind = MetricKind::for_family(params.family);
    let mut per_sentence = Vec::with_capacity(examples.len());
    let mut degenerate = Vec::new();
    for (id, ex) in examples.iter().enumerate() {
        if kind == MetricKind::Uuas && uuas_gold_edges(&ex.parse).is_empty() {
            degenerate.push(id);
        }
        let score = match kind {
            MetricKind::Uuas => Some(uuas_for_states(params, &ex.states, &ex.parse)?),
            MetricKind::Uas => Some(score_uas(params, &ex.states, &ex.parse)?),
            MetricKind::SpearmanRho => control_rho(params, ex)?,
        };
        match score {
            Some(s) => per_sentence.push((id, s)),
            None => degenerate.push(id),
        }
    }
    let aggregate = if per_sentence.is_empty() {
        f64::NAN
    } else {
        per_sentence.iter().map(|(_, s)| s).sum::<f64>() / per_sentence.len() as f64
    };
    Ok(ProbeEvalSummary {
        metric_kind: kind,
        per_sentence,
        aggregate,
        degenerate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub before: f64,
    pub after: f64,
    pub words: usize,
}

/// Mean across-context variance of word vectors, before and after applying
/// the control probe's map.
///
/// `contexts[w]` holds one hidden vector per sentence context of word `w`.
/// Variance is the mean over coordinates of the population variance across
/// contexts; words with fewer than two contexts are skipped.
pub fn control_variance_report(contexts: &[Vec<Vec<f64>>], params: &ProbeParams) -> Result<VarianceReport> {
    let map = params.linear_map();
    let (mut before, mut after, mut words) = (0.0, 0.0, 0usize);
    for (w, vecs) in contexts.iter().enumerate() {
        if vecs.len() < 2 {
            log::warn!("word {w} has {} contexts, skipped", vecs.len());
            continue;
        }
        if vecs.iter().any(|v| v.len() != params.input_dim()) {
            return Err(Error::Shape(format!("word {w} has a vector of the wrong width")));
        }
        let projected: Vec<Vec<f64>> = vecs
            .iter()
            .map(|v| (&map * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec())
            .collect();
        before += mean_coordinate_variance(vecs);
        after += mean_coordinate_variance(&projected);
        words += 1;
    }
    if words == 0 {
        return Err(Error::Empty("words with at least two contexts"));
    }
    Ok(VarianceReport {
        before: before / words as f64,
        after: after / words as f64,
        words,
    })
}

fn mean_coordinate_variance(vecs: &[Vec<f64>]) -> f64 {
    let n = vecs.len() as f64;
    let dim = vecs[0].len();
    let mut total = 0.0;
    for c in 0..dim {
        let mean = vecs.iter().map(|v| v[c]).sum::<f64>() / n;
        total += vecs.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>() / n;
    }
    total / dim as f64
}
