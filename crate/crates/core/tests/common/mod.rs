//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use synprobe::outcomes::Phenomenon;
use synprobe::probes::{objective, ControlPair, Family, ObjectiveSettings, ProbeExample, ProbeParams};
use synprobe::stats::{ModelRow, ParadigmCell, ScoreSum};
use synprobe::treebank::{parse_conllu, SentenceParse, Token};

pub const KEYS: &str = include_str!("../fixtures/keys.conllu");
pub const PRINTS: &str = include_str!("../fixtures/prints.conllu");
pub const MARCUS: &str = include_str!("../fixtures/marcus.conllu");
pub const PLAYS: &str = include_str!("../fixtures/plays.conllu");

pub fn fixture(text: &str) -> SentenceParse {
    parse_conllu(text).unwrap().remove(0)
}

/// Toy predicted tree for the `KEYS` parse: a chain 1-2-3-5-4 with 5-6-7,
/// sharing four of the six gold edges.
pub fn keys_predicted_distances() -> DMatrix<f64> {
    let chain = [(1, 2), (2, 3), (3, 5), (4, 5), (5, 6), (6, 7)];
    DMatrix::from_fn(7, 7, |i, j| {
        if i == j {
            0.0
        } else if chain.contains(&(i.min(j) + 1, i.max(j) + 1)) {
            1.0
        } else {
            3.0
        }
    })
}

fn random_tree_parse(n: usize, rng: &mut ChaCha8Rng) -> SentenceParse {
    let root = rng.random_range(1..=n);
    let mut placed = vec![root];
    let mut heads = vec![0; n];
    let mut rest: Vec<usize> = (1..=n).filter(|&i| i != root).collect();
    while !rest.is_empty() {
        let w = rest.swap_remove(rng.random_range(0..rest.len()));
        heads[w - 1] = placed[rng.random_range(0..placed.len())];
        placed.push(w);
    }
    let tags = ["NN", "VB", "DT"];
    let tokens = (0..n)
        .map(|i| Token {
            index: i + 1,
            form: format!("t{i}"),
            upos: "X".into(),
            xpos: tags[rng.random_range(0..3)].into(),
            head: heads[i],
            deprel: "dep".into(),
            is_punct: false,
        })
        .collect();
    SentenceParse::from_tokens(tokens, 0).unwrap()
}

/// A random small instance for `family`: `d ≤ 16`, `k ≤ 8`, `N ≤ 6`.
pub fn random_instance(family: Family, seed: u64) -> (ProbeParams, Vec<ProbeExample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=16);
    let k = rng.random_range(1..=8usize).min(d);
    let mut batch = Vec::new();
    for _ in 0..rng.random_range(1..=3) {
        let n = rng.random_range(2..=6);
        let parse = random_tree_parse(n, &mut rng);
        let states = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let mut ex = ProbeExample::new(&parse, states).unwrap();
        if family == Family::Control {
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random_bool(0.6) {
                        ex.control_pairs.push(ControlPair {
                            i,
                            j,
                            target: rng.random_range(0.1..3.0),
                        });
                    }
                }
            }
        }
        batch.push(ex);
    }
    let rnd = |r: usize, c: usize, rng: &mut ChaCha8Rng| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    let params = match family {
        Family::Orthogonal => {
            let v = rnd(d, d, &mut rng);
            let scale = DVector::from_fn(d, |_, _| rng.random_range(0.5..1.5));
            ProbeParams::new(family, v, Some(scale), None).unwrap()
        }
        Family::Headword => {
            let b = rnd(k, d, &mut rng);
            let root = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            ProbeParams::new(family, b, None, Some(root)).unwrap()
        }
        _ => ProbeParams::new(family, rnd(k, d, &mut rng), None, None).unwrap(),
    };
    (params, batch)
}

pub const SETTINGS: ObjectiveSettings = ObjectiveSettings {
    lambda_o: 0.05,
    huber_delta: 1.0,
};

/// Largest relative error, over parameter tensors, between the analytic
/// gradient and central differences with step `h`.
pub fn gradient_rel_error(params: &ProbeParams, batch: &[ProbeExample], h: f64) -> f64 {
    let (_, analytic) = objective(params, batch, SETTINGS, 1.0).unwrap();
    let analytic: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();
    let mut worst: f64 = 0.0;
    for (t, grad) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; grad.len()];
        for (e, slot) in numeric.iter_mut().enumerate() {
            let eval = |delta: f64| {
                let mut p = params.clone();
                p.tensors_mut()[t][e] += delta;
                objective(&p, batch, SETTINGS, 1.0).unwrap().0
            };
            *slot = (eval(h) - eval(-h)) / (2.0 * h);
        }
        let diff: f64 = grad.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm_a: f64 = grad.iter().map(|a| a * a).sum::<f64>().sqrt();
        let norm_n: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = norm_a.max(norm_n);
        if scale > 1e-10 {
            worst = worst.max(diff / scale);
        } else {
            worst = worst.max(diff);
        }
    }
    worst
}

/// Minimum spanning tree weight by enumerating every `(n−1)`-edge subset.
pub fn brute_force_mst_weight(d: &DMatrix<f64>) -> f64 {
    let n = d.nrows();
    if n < 2 {
        return 0.0;
    }
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut best = f64::INFINITY;
    let mut pick: Vec<usize> = (0..n - 1).collect();
    loop {
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        let mut acyclic = true;
        let mut w = 0.0;
        for &e in &pick {
            let (a, b) = edges[e];
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                acyclic = false;
                break;
            }
            parent[ra] = rb;
            w += d[(a, b)];
        }
        if acyclic {
            best = best.min(w);
        }
        // next combination
        let m = edges.len();
        let r = pick.len();
        let mut i = r;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < m - r + i {
                break;
            }
            if i == 0 {
                return best;
            }
        }
        pick[i] += 1;
        for j in i + 1..r {
            pick[j] = pick[j - 1] + 1;
        }
    }
}

pub fn tree_weight(d: &DMatrix<f64>, edges: &BTreeSet<(usize, usize)>) -> f64 {
    edges.iter().map(|&(a, b)| d[(a - 1, b - 1)]).sum()
}

/// Textbook simple-regression quantities: `(b0, b1, se0, se1, t1, df)`.
pub fn closed_form_simple(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b1 = sxy / sxx;
    let b0 = my - b1 * mx;
    let s2 = x.iter().zip(y).map(|(a, b)| (b - b0 - b1 * a).powi(2)).sum::<f64>() / (n - 2.0);
    let se1 = (s2 / sxx).sqrt();
    let se0 = (s2 * (1.0 / n + mx * mx / sxx)).sqrt();
    (b0, b1, se0, se1, b1 / se1, n - 2.0)
}

/// Holm adjustment straight from the definition.
pub fn brute_holm(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap().then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    for k in 0..m {
        let v = (0..=k).map(|j| (m - j) as f64 * p[idx[j]]).fold(0.0, f64::max);
        out[idx[k]] = v.min(1.0);
    }
    out
}

/// 32 model rows over one paradigm. With `beta`, accuracy is
/// `0.5 + beta·UUAS + N(0, 0.01²)`; without, it is drawn independently.
pub fn planted_rows(seed: u64, beta: Option<f64>) -> Vec<ModelRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.01).unwrap();
    (0..32)
        .map(|m| {
            let uuas: f64 = rng.random_range(0.3..0.9);
            let acc = match beta {
                Some(b) => 0.5 + b * uuas + noise.sample(&mut rng),
                None => rng.random_range(0.6..0.9),
            };
            let mut scores = BTreeMap::new();
            scores.insert(Family::Structural, ScoreSum { sum: uuas * 100.0, count: 100 });
            scores.insert(Family::Control, ScoreSum { sum: rng.random_range(0.2..0.6) * 100.0, count: 100 });
            let cell = ParadigmCell {
                phenomenon: Phenomenon::AnaphorAgreement,
                pairs: 1_000_000,
                correct: (acc * 1_000_000.0).round() as usize,
                scores,
            };
            ModelRow {
                model_id: format!("model{m:02}"),
                paradigms: [("anaphor_number_agreement".to_string(), cell)].into(),
            }
        })
        .collect()
}
