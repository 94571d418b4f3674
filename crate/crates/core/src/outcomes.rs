//! BLiMP minimal pairs, outcome accuracy, and critical-edge analysis.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treebank::{ordered, SentenceParse};

/// Version tag of the shipped paradigm table.
pub const PARADIGM_TABLE_VERSION: &str = "v1";

const PARADIGM_TABLE: &str = include_str!("../data/blimp_paradigms.tsv");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phenomenon {
    AnaphorAgreement,
    ArgumentStructure,
    Binding,
    ControlRaising,
    DeterminerNounAgreement,
    Ellipsis,
    FillerGapDependency,
    IrregularForms,
    IslandEffects,
    NpiLicensing,
    Quantifiers,
    SSelection,
    SubjectVerbAgreement,
}

impl Phenomenon {
    pub const ALL: [Phenomenon; 13] = [
        Phenomenon::AnaphorAgreement,
        Phenomenon::ArgumentStructure,
        Phenomenon::Binding,
        Phenomenon::ControlRaising,
        Phenomenon::DeterminerNounAgreement,
        Phenomenon::Ellipsis,
        Phenomenon::FillerGapDependency,
        Phenomenon::IrregularForms,
        Phenomenon::IslandEffects,
        Phenomenon::NpiLicensing,
        Phenomenon::Quantifiers,
        Phenomenon::SSelection,
        Phenomenon::SubjectVerbAgreement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phenomenon::AnaphorAgreement => "anaphor_agreement",
            Phenomenon::ArgumentStructure => "argument_structure",
            Phenomenon::Binding => "binding",
            Phenomenon::ControlRaising => "control_raising",
            Phenomenon::DeterminerNounAgreement => "determiner_noun_agreement",
            Phenomenon::Ellipsis => "ellipsis",
            Phenomenon::FillerGapDependency => "filler_gap_dependency",
            Phenomenon::IrregularForms => "irregular_forms",
            Phenomenon::IslandEffects => "island_effects",
            Phenomenon::NpiLicensing => "npi_licensing",
            Phenomenon::Quantifiers => "quantifiers",
            Phenomenon::SSelection => "s_selection",
            Phenomenon::SubjectVerbAgreement => "subject_verb_agreement",
        }
    }
}

impl fmt::Display for Phenomenon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phenomenon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phenomenon::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown phenomenon {s:?}")))
    }
}

/// Paradigm UID → phenomenon, from the shipped table.
pub fn paradigm_table() -> &'static BTreeMap<String, Phenomenon> {
    static TABLE: OnceLock<BTreeMap<String, Phenomenon>> = OnceLock::new();
    TABLE.get_or_init(|| {
        PARADIGM_TABLE
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .skip(1)
            .map(|l| {
                let (uid, ph) = l.split_once('\t').expect("paradigm table rows have two columns");
                (uid.to_string(), ph.parse().expect("paradigm table names a known phenomenon"))
            })
            .collect()
    })
}

pub fn phenomenon_of(uid: &str) -> Result<Phenomenon> {
    paradigm_table().get(uid).copied().ok_or_else(|| Error::UnknownParadigm {
        uid: uid.to_string(),
        known: paradigm_table().keys().cloned().collect::<Vec<_>>().join(", "),
    })
}

/// One acceptable/unacceptable pair with optional model scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimalPair {
    pub uid: String,
    pub phenomenon: Phenomenon,
    /// Index of the pair within its paradigm.
    pub pair_index: usize,
    /// Position of `s_acc` in the acceptable-sentence corpus (load order),
    /// which is also its index in the parse and hidden-state files.
    pub sentence_id: usize,
    pub s_acc: String,
    pub s_unacc: String,
    pub logp_acc: Option<f64>,
    pub logp_unacc: Option<f64>,
}

impl MinimalPair {
    /// `logp_acc > logp_unacc`; `None` while unscored.
    pub fn outcome(&self) -> Option<bool> {
        Some(self.logp_acc? > self.logp_unacc?)
    }
}

#[derive(Deserialize)]
struct BlimpLine {
    sentence_good: Option<String>,
    sentence_bad: Option<String>,
    #[serde(rename = "UID")]
    uid: Option<String>,
    #[serde(rename = "pairID")]
    pair_id: Option<serde_json::Value>,
}

/// Parses BLiMP JSONL text. `first_sentence_id` offsets `sentence_id` so
/// several files can share one acceptable-sentence corpus.
pub fn parse_blimp(text: &str, first_sentence_id: usize) -> Result<Vec<MinimalPair>> {
    let mut pairs = Vec::new();
    let mut per_uid: HashMap<String, usize> = HashMap::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = k + 1;
        let raw: BlimpLine = serde_json::from_str(line).map_err(|e| Error::FormatAt {
            line: lineno,
            message: e.to_string(),
        })?;
        let missing = |field: &str| Error::FormatAt {
            line: lineno,
            message: format!("missing field {field}"),
        };
        let s_acc = raw.sentence_good.ok_or_else(|| missing("sentence_good"))?;
        let s_unacc = raw.sentence_bad.ok_or_else(|| missing("sentence_bad"))?;
        let uid = raw.uid.ok_or_else(|| missing("UID"))?;
        let phenomenon = phenomenon_of(&uid)?;
        let ordinal = per_uid.entry(uid.clone()).or_insert(0);
        let pair_index = match raw.pair_id {
            Some(serde_json::Value::Number(n)) => n.as_u64().map(|v| v as usize),
            Some(serde_json::Value::String(s)) => s.parse().ok(),
            _ => None,
        }
        .unwrap_or(*ordinal);
        *ordinal += 1;
        pairs.push(MinimalPair {
            uid,
            phenomenon,
            pair_index,
            sentence_id: first_sentence_id + pairs.len(),
            s_acc,
            s_unacc,
            logp_acc: None,
            logp_unacc: None,
        });
    }
    Ok(pairs)
}

/// Loads BLiMP JSONL files in the given order and logs per-paradigm counts.
pub fn load_blimp<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<MinimalPair>> {
    let mut all = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let pairs = parse_blimp(&text, all.len())?;
        all.extend(pairs);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &all {
        *counts.entry(&p.uid).or_default() += 1;
    }
    log::info!("loaded {} pairs over {} paradigms", all.len(), counts.len());
    for (uid, n) in counts {
        log::debug!("{uid}: {n} pairs");
    }
    Ok(all)
}

/// One row of a score file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub uid: String,
    pub pair_index: usize,
    pub logp_acc: f64,
    pub logp_unacc: f64,
}

/// Reads a score CSV with header `uid,pair_index,logp_acc,logp_unacc`.
pub fn parse_scores(text: &str) -> Result<Vec<ScoreRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (k, rec) in reader.deserialize().enumerate() {
        rows.push(rec.map_err(|e: csv::Error| Error::FormatAt {
            line: k + 2,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text)
}

pub fn write_scores(rows: &[ScoreRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
}

/// Copies scores onto pairs by `(uid, pair_index)`. Pairs without a score
/// stay unscored; returns how many were matched.
pub fn attach_scores(pairs: &mut [MinimalPair], rows: &[ScoreRow]) -> usize {
    let index: HashMap<(&str, usize), &ScoreRow> =
        rows.iter().map(|r| ((r.uid.as_str(), r.pair_index), r)).collect();
    let mut matched = 0;
    for p in pairs.iter_mut() {
        if let Some(r) = index.get(&(p.uid.as_str(), p.pair_index)) {
            p.logp_acc = Some(r.logp_acc);
            p.logp_unacc = Some(r.logp_unacc);
            matched += 1;
        }
    }
    matched
}

/// Fraction of pairs with `logp_acc > logp_unacc`. Ties count as failures.
pub fn minimal_pair_accuracy<'a>(pairs: impl IntoIterator<Item = &'a MinimalPair>) -> Result<f64> {
    let (mut n, mut correct) = (0usize, 0usize);
    for p in pairs {
        let outcome = p.outcome().ok_or_else(|| Error::Unscored {
            uid: p.uid.clone(),
            index: p.pair_index,
        })?;
        n += 1;
        correct += outcome as usize;
    }
    if n == 0 {
        return Err(Error::Empty("minimal pairs"));
    }
    Ok(correct as f64 / n as f64)
}

/// The four paradigms with a defined critical edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    SubjectVerb,
    FillerGap,
}

pub const CRITICAL_PARADIGMS: [&str; 4] = [
    "distractor_agreement_relational_noun",
    "distractor_agreement_relative_clause",
    "wh_vs_that_with_gap",
    "wh_vs_that_with_gap_long_distance",
];

pub fn critical_kind(uid: &str) -> Option<CriticalKind> {
    match uid {
        "distractor_agreement_relational_noun" | "distractor_agreement_relative_clause" => {
            Some(CriticalKind::SubjectVerb)
        }
        "wh_vs_that_with_gap" | "wh_vs_that_with_gap_long_distance" => Some(CriticalKind::FillerGap),
        _ => None,
    }
}

/// A labelled gold arc, 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalEdge {
    pub dependent: usize,
    pub head: usize,
    pub deprel: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalEdgeRecord {
    pub uid: String,
    pub pair_index: usize,
    /// `None` when the pair was filtered out.
    pub edge: Option<CriticalEdge>,
    /// Set by [`CriticalEdgeRecord::with_probe`]; only when `edge` is present.
    pub probe_hit: Option<bool>,
    pub outcome: Option<bool>,
}

/// What a probe decoded for a sentence.
#[derive(Clone, Copy, Debug)]
pub enum DecodedStructure<'a> {
    /// MST edges, 1-based `(lower, higher)`.
    Undirected(&'a BTreeSet<(usize, usize)>),
    /// Predicted head per word, `0` = ROOT.
    Heads(&'a [usize]),
}

impl CriticalEdgeRecord {
    pub fn is_filtered(&self) -> bool {
        self.edge.is_none()
    }

    /// Marks whether the decoded structure contains the critical edge.
    /// Undirected structures match in either direction, head predictions
    /// must point from the dependent to the head.
    pub fn with_probe(mut self, decoded: DecodedStructure<'_>) -> Self {
        self.probe_hit = self.edge.as_ref().map(|e| match decoded {
            DecodedStructure::Undirected(edges) => edges.contains(&ordered(e.dependent, e.head)),
            DecodedStructure::Heads(heads) => heads.get(e.dependent - 1) == Some(&e.head),
        });
        self
    }
}

/// Splits a sentence into word tokens: whitespace, then leading and trailing
/// punctuation as separate tokens, then a trailing `'s` clitic.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let is_p = |c: char| c.is_ascii_punctuation() && c != '\'' && c != '-';
    let mut out = Vec::new();
    for piece in sentence.split_whitespace() {
        let mut word = piece;
        let mut lead = Vec::new();
        while let Some(c) = word.chars().next().filter(|c| is_p(*c)) {
            lead.push(c.to_string());
            word = &word[c.len_utf8()..];
        }
        let mut trail = Vec::new();
        while let Some(c) = word.chars().last().filter(|c| is_p(*c)) {
            trail.push(c.to_string());
            word = &word[..word.len() - c.len_utf8()];
        }
        out.extend(lead);
        if word.len() > 2 && word.ends_with("'s") {
            out.push(word[..word.len() - 2].to_string());
            out.push("'s".to_string());
        } else if !word.is_empty() {
            out.push(word.to_string());
        }
        out.extend(trail.into_iter().rev());
    }
    out
}

/// Token positions (0-based, in `acc`) that differ from `unacc` after
/// stripping the common prefix and suffix.
pub fn diff_region<A: AsRef<str>, B: AsRef<str>>(acc: &[A], unacc: &[B]) -> std::ops::Range<usize> {
    let prefix = acc.iter().zip(unacc).take_while(|(a, b)| a.as_ref() == b.as_ref()).count();
    let max_suffix = acc.len().min(unacc.len()) - prefix;
    let suffix = acc
        .iter()
        .rev()
        .zip(unacc.iter().rev())
        .take(max_suffix)
        .take_while(|(a, b)| a.as_ref() == b.as_ref())
        .count();
    prefix..acc.len() - suffix
}

/// Locates the critical edge of a pair in the gold parse of `s_acc`.
///
/// The acceptable sentence is read from the parse forms and diffed against
/// the tokenized unacceptable sentence. Subject-verb pairs keep the `nsubj`
/// arc whose head is a differing token; filler-gap pairs keep the arc of a
/// differing token labelled exactly `obj` or `obl`. Anything else is
/// filtered out.
pub fn find_critical_edge(pair: &MinimalPair, parse: &SentenceParse) -> Result<CriticalEdgeRecord> {
    let kind = critical_kind(&pair.uid).ok_or_else(|| Error::UnsupportedParadigm(pair.uid.clone()))?;
    let forms = parse.forms();
    let unacc = tokenize(&pair.s_unacc);
    let region = diff_region(&forms, &unacc);
    let in_region = |i: usize| region.contains(&(i - 1));
    let edge = match kind {
        CriticalKind::SubjectVerb => parse
            .tokens
            .iter()
            .find(|t| t.deprel == "nsubj" && t.head != 0 && in_region(t.head)),
        CriticalKind::FillerGap => parse
            .tokens
            .iter()
            .find(|t| in_region(t.index) && t.head != 0 && (t.deprel == "obj" || t.deprel == "obl")),
    }
    .map(|t| CriticalEdge {
        dependent: t.index,
        head: t.head,
        deprel: t.deprel.clone(),
    });
    if edge.is_none() {
        log::debug!("{} pair {} filtered out", pair.uid, pair.pair_index);
    }
    Ok(CriticalEdgeRecord {
        uid: pair.uid.clone(),
        pair_index: pair.pair_index,
        edge,
        probe_hit: None,
        outcome: pair.outcome(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub n: usize,
    pub hamming: f64,
    pub match_rate: f64,
    /// Fraction of records where the probe recovered the edge.
    pub probe_accuracy: f64,
    /// Fraction of records where the model resolved the pair.
    pub outcome_accuracy: f64,
}

/// Hamming distance between probe hits and pair outcomes over kept records.
pub fn critical_match_analysis<'a>(records: impl IntoIterator<Item = &'a CriticalEdgeRecord>) -> Result<MatchSummary> {
    let (mut n, mut mismatches, mut hits, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for r in records {
        if r.is_filtered() {
            continue;
        }
        let hit = r
            .probe_hit
            .ok_or_else(|| Error::Format(format!("{} pair {} has no probe decision", r.uid, r.pair_index)))?;
        let outcome = r.outcome.ok_or_else(|| Error::Unscored {
            uid: r.uid.clone(),
            index: r.pair_index,
        })?;
        n += 1;
        mismatches += (hit != outcome) as usize;
        hits += hit as usize;
        correct += outcome as usize;
    }
    if n == 0 {
        return Err(Error::Empty("critical-edge records"));
    }
    let hamming = mismatches as f64 / n as f64;
    Ok(MatchSummary {
        n,
        hamming,
        match_rate: (n - mismatches) as f64 / n as f64,
        probe_accuracy: hits as f64 / n as f64,
        outcome_accuracy: correct as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::parse_conllu;
    use proptest::prelude::*;

    fn pair(uid: &str, acc: &str, unacc: &str, scores: Option<(f64, f64)>) -> MinimalPair {
        MinimalPair {
            uid: uid.into(),
            phenomenon: phenomenon_of(uid).unwrap(),
            pair_index: 0,
            sentence_id: 0,
            s_acc: acc.into(),
            s_unacc: unacc.into(),
            logp_acc: scores.map(|s| s.0),
            logp_unacc: scores.map(|s| s.1),
        }
    }

    fn fixture(text: &str) -> SentenceParse {
        parse_conllu(text).unwrap().remove(0)
    }

    #[test]
    fn table_has_67_paradigms_in_13_phenomena() {
        let t = paradigm_table();
        assert_eq!(t.len(), 67);
        let used: BTreeSet<_> = t.values().collect();
        assert_eq!(used.len(), 13);
        assert_eq!(t["animate_subject_passive"], Phenomenon::SSelection);
        assert_eq!(t["wh_island"], Phenomenon::IslandEffects);
        for uid in CRITICAL_PARADIGMS {
            assert!(t.contains_key(uid));
        }
    }

    #[test]
    fn load_three_lines() {
        let text = r#"{"sentence_good": "Dogs bark.", "sentence_bad": "Dogs barks.", "UID": "regular_plural_subject_verb_agreement_1", "pairID": "0"}
{"sentence_good": "A cat runs.", "sentence_bad": "A cat run.", "UID": "regular_plural_subject_verb_agreement_1"}
{"sentence_good": "Who left?", "sentence_bad": "Who left it?", "UID": "wh_questions_subject_gap"}
"#;
        let pairs = parse_blimp(text, 10).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[1].pair_index, 1);
        assert_eq!(pairs[2].pair_index, 0);
        assert_eq!(pairs[2].sentence_id, 12);
        assert_eq!(pairs[2].phenomenon, Phenomenon::FillerGapDependency);
    }

    #[test]
    fn load_errors() {
        let missing = r#"{"sentence_good": "Dogs bark.", "UID": "transitive"}"#;
        match parse_blimp(missing, 0) {
            Err(Error::FormatAt { line: 1, message }) => assert!(message.contains("sentence_bad")),
            other => panic!("unexpected {other:?}"),
        }
        let unknown = r#"{"sentence_good": "a", "sentence_bad": "b", "UID": "made_up"}"#;
        match parse_blimp(unknown, 0) {
            Err(Error::UnknownParadigm { uid, known }) => {
                assert_eq!(uid, "made_up");
                assert!(known.contains("wh_island"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn accuracy_cases() {
        let uid = "transitive";
        let all = vec![pair(uid, "a", "b", Some((-1.0, -2.0))); 3];
        assert_eq!(minimal_pair_accuracy(&all).unwrap(), 1.0);
        let tie = [pair(uid, "a", "b", Some((-1.0, -1.0)))];
        assert_eq!(minimal_pair_accuracy(&tie).unwrap(), 0.0);
        let mut four = all.clone();
        four.push(pair(uid, "a", "b", Some((-3.0, -2.0))));
        assert_eq!(minimal_pair_accuracy(&four).unwrap(), 0.75);
        let unscored = [pair(uid, "a", "b", None)];
        assert!(matches!(minimal_pair_accuracy(&unscored), Err(Error::Unscored { .. })));
    }

    #[test]
    fn scores_round_trip_and_attach() {
        let rows = vec![
            ScoreRow { uid: "transitive".into(), pair_index: 0, logp_acc: -10.5, logp_unacc: -12.25 },
            ScoreRow { uid: "transitive".into(), pair_index: 1, logp_acc: -3.0, logp_unacc: -1.0 },
        ];
        let text = write_scores(&rows);
        assert!(text.starts_with("uid,pair_index,logp_acc,logp_unacc\n"));
        assert_eq!(parse_scores(&text).unwrap(), rows);
        let mut pairs = vec![pair("transitive", "a", "b", None), pair("transitive", "a", "b", None)];
        pairs[1].pair_index = 1;
        assert_eq!(attach_scores(&mut pairs, &rows), 2);
        assert_eq!(pairs[0].outcome(), Some(true));
        assert_eq!(pairs[1].outcome(), Some(false));
        assert!(matches!(parse_scores("uid,pair_index,logp_acc,logp_unacc\nx,zero,1,2\n"), Err(Error::FormatAt { line: 2, .. })));
    }

    #[test]
    fn tokenizer_and_diff() {
        assert_eq!(tokenize("The prints aggravate Nina."), ["The", "prints", "aggravate", "Nina", "."]);
        assert_eq!(tokenize("Who, \"Nina's\" cat?"), ["Who", ",", "\"", "Nina", "'s", "\"", "cat", "?"]);
        let a = tokenize("Marcus had remembered who some lady disliked.");
        let b = tokenize("Marcus had remembered that some lady disliked.");
        assert_eq!(diff_region(&a, &b), 3..4);
        let same = tokenize("a b");
        assert_eq!(diff_region(&same, &same), 2..2);
        // insertion: acc shorter than unacc
        let a = tokenize("x y");
        let b = tokenize("x q y");
        assert_eq!(diff_region(&a, &b), 1..1);
    }

    #[test]
    fn worked_fixtures() {
        let prints = fixture(include_str!("../tests/fixtures/prints.conllu"));
        let p = pair(
            "distractor_agreement_relational_noun",
            "The prints of every vase aggravate Nina.",
            "The prints of every vase aggravates Nina.",
            Some((-20.0, -21.0)),
        );
        let r = find_critical_edge(&p, &prints).unwrap();
        assert_eq!(r.edge, Some(CriticalEdge { dependent: 2, head: 6, deprel: "nsubj".into() }));
        assert_eq!(r.outcome, Some(true));

        let marcus = fixture(include_str!("../tests/fixtures/marcus.conllu"));
        let p = pair(
            "wh_vs_that_with_gap",
            "Marcus had remembered who some lady disliked.",
            "Marcus had remembered that some lady disliked.",
            None,
        );
        let r = find_critical_edge(&p, &marcus).unwrap();
        assert_eq!(r.edge, Some(CriticalEdge { dependent: 4, head: 7, deprel: "obj".into() }));

        let plays = fixture(include_str!("../tests/fixtures/plays.conllu"));
        let p = pair(
            "distractor_agreement_relative_clause",
            "The plays about art have alarmed Mitchell.",
            "The plays about art has alarmed Mitchell.",
            None,
        );
        let r = find_critical_edge(&p, &plays).unwrap();
        assert!(r.is_filtered());
        // deterministic
        assert_eq!(find_critical_edge(&p, &plays).unwrap(), r);
    }

    #[test]
    fn unsupported_paradigm() {
        let prints = fixture(include_str!("../tests/fixtures/prints.conllu"));
        let p = pair("transitive", "a", "b", None);
        assert!(matches!(find_critical_edge(&p, &prints), Err(Error::UnsupportedParadigm(_))));
    }

    #[test]
    fn filler_gap_requires_obj_or_obl() {
        let text = include_str!("../tests/fixtures/marcus.conllu").replace("7\tobj", "7\tnsubj");
        let parse = fixture(&text);
        let p = pair(
            "wh_vs_that_with_gap",
            "Marcus had remembered who some lady disliked.",
            "Marcus had remembered that some lady disliked.",
            None,
        );
        assert!(find_critical_edge(&p, &parse).unwrap().is_filtered());
    }

    #[test]
    fn probe_hit_directed_and_undirected() {
        let rec = CriticalEdgeRecord {
            uid: "wh_vs_that_with_gap".into(),
            pair_index: 0,
            edge: Some(CriticalEdge { dependent: 4, head: 7, deprel: "obj".into() }),
            probe_hit: None,
            outcome: Some(true),
        };
        let mst: BTreeSet<_> = [(4, 7)].into();
        assert_eq!(rec.clone().with_probe(DecodedStructure::Undirected(&mst)).probe_hit, Some(true));
        let heads = [3, 3, 0, 7, 6, 7, 3, 3];
        assert_eq!(rec.clone().with_probe(DecodedStructure::Heads(&heads)).probe_hit, Some(true));
        let reversed = [3, 3, 0, 0, 6, 7, 4, 3];
        assert_eq!(rec.with_probe(DecodedStructure::Heads(&reversed)).probe_hit, Some(false));
    }

    fn records(hits: &[bool], outcomes: &[bool]) -> Vec<CriticalEdgeRecord> {
        hits.iter()
            .zip(outcomes)
            .enumerate()
            .map(|(k, (&h, &o))| CriticalEdgeRecord {
                uid: "wh_vs_that_with_gap".into(),
                pair_index: k,
                edge: Some(CriticalEdge { dependent: 1, head: 2, deprel: "obj".into() }),
                probe_hit: Some(h),
                outcome: Some(o),
            })
            .collect()
    }

    #[test]
    fn match_analysis_cases() {
        let s = critical_match_analysis(&records(&[true, false], &[true, false])).unwrap();
        assert_eq!(s.hamming, 0.0);
        let s = critical_match_analysis(&records(&[true, false], &[false, true])).unwrap();
        assert_eq!(s.hamming, 1.0);
        let s = critical_match_analysis(&records(&[true, true, false, false], &[true, false, false, true])).unwrap();
        assert_eq!(s.hamming, 0.5);
        assert_eq!(s.probe_accuracy, 0.5);
        assert_eq!(s.outcome_accuracy, 0.5);
        assert!(matches!(critical_match_analysis(&[]), Err(Error::Empty(_))));
    }

    proptest! {
        #[test]
        fn match_rate_complements_hamming(bits in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
            let (h, o): (Vec<bool>, Vec<bool>) = bits.into_iter().unzip();
            let s = critical_match_analysis(&records(&h, &o)).unwrap();
            prop_assert_eq!(s.match_rate + s.hamming, 1.0);
        }

        #[test]
        fn accuracy_shift_invariant(scores in proptest::collection::vec((-50i32..0, -50i32..0), 1..30), shift in -1000i32..1000) {
            // integer-valued scores keep the shifted comparison exact
            let base: Vec<_> = scores.iter().map(|&(a, b)| pair("transitive", "a", "b", Some((a as f64, b as f64)))).collect();
            let moved: Vec<_> = scores.iter().map(|&(a, b)| pair("transitive", "a", "b", Some(((a + shift) as f64, (b + shift) as f64)))).collect();
            prop_assert_eq!(minimal_pair_accuracy(&base).unwrap(), minimal_pair_accuracy(&moved).unwrap());
        }
    }
}
