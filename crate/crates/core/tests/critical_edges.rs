mod common;

use common::{fixture, PLAYS, PRINTS, MARCUS};
use synprobe::metrics::extract_mst;
use synprobe::outcomes::{critical_match_analysis, find_critical_edge, parse_blimp, CriticalEdge, DecodedStructure};

const PAIRS: &str = r#"{"sentence_good": "The prints of every vase aggravate Nina.", "sentence_bad": "The prints of every vase aggravates Nina.", "UID": "distractor_agreement_relational_noun", "pairID": "0"}
{"sentence_good": "Marcus had remembered who some lady disliked.", "sentence_bad": "Marcus had remembered that some lady disliked.", "UID": "wh_vs_that_with_gap", "pairID": "0"}
{"sentence_good": "The plays about art have alarmed Mitchell.", "sentence_bad": "The plays about art has alarmed Mitchell.", "UID": "distractor_agreement_relative_clause", "pairID": "0"}
"#;

fn edge(dependent: usize, head: usize, deprel: &str) -> Option<CriticalEdge> {
    Some(CriticalEdge { dependent, head, deprel: deprel.into() })
}

#[test]
fn worked_parses_yield_expected_edges() {
    let pairs = parse_blimp(PAIRS, 0).unwrap();
    let parses = [fixture(PRINTS), fixture(MARCUS), fixture(PLAYS)];
    let records: Vec<_> = pairs.iter().zip(&parses).map(|(p, t)| find_critical_edge(p, t).unwrap()).collect();
    assert_eq!(records[0].edge, edge(2, 6, "nsubj"));
    assert_eq!(parses[0].tokens[1].form, "prints");
    assert_eq!(parses[0].tokens[5].form, "aggravate");
    assert_eq!(records[1].edge, edge(4, 7, "obj"));
    assert_eq!(parses[1].tokens[3].form, "who");
    assert_eq!(parses[1].tokens[6].form, "disliked");
    assert!(records[2].is_filtered());
}

#[test]
fn gold_distances_decode_the_gold_tree_and_hit_every_edge() {
    let mut pairs = parse_blimp(PAIRS, 0).unwrap();
    for (k, p) in pairs.iter_mut().enumerate() {
        p.logp_acc = Some(-10.0);
        p.logp_unacc = Some(if k == 0 { -11.0 } else { -9.0 });
    }
    let parses = [fixture(PRINTS), fixture(MARCUS)];
    let records: Vec<_> = pairs
        .iter()
        .zip(&parses)
        .map(|(p, t)| {
            let n = t.len();
            let d = nalgebra::DMatrix::from_fn(n, n, |i, j| t.distance(i + 1, j + 1) as f64);
            let mst = extract_mst(&d, &t.punct_mask());
            find_critical_edge(p, t).unwrap().with_probe(DecodedStructure::Undirected(&mst))
        })
        .collect();
    assert!(records.iter().all(|r| r.probe_hit == Some(true)));
    let summary = critical_match_analysis(&records).unwrap();
    // hits (1, 1) against outcomes (1, 0)
    assert_eq!(summary.hamming, 0.5);
}
