use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outcomes::Phenomenon;
use crate::probes::Family;

use super::ols::{design, holm_bonferroni, lrt, ols_fit, welch_ttest_greater, LrtResult, RegressionFit, WelchTest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Full,
    Phenomenon,
    Paradigm,
}

impl Granularity {
    pub const ALL: [Granularity; 3] = [Granularity::Full, Granularity::Phenomenon, Granularity::Paradigm];

    pub fn name(self) -> &'static str {
        match self {
            Granularity::Full => "full",
            Granularity::Phenomenon => "phenomenon",
            Granularity::Paradigm => "paradigm",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Granularity::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown granularity {s:?}")))
    }
}

/// How paradigm-level numbers are combined into a group value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Unweighted mean of the per-paradigm means.
    #[default]
    MeanOfParadigmMeans,
    /// Mean over all pooled sentences / pairs of the group.
    Pooled,
}

/// Running sum of a per-sentence score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSum {
    pub sum: f64,
    pub count: usize,
}

impl ScoreSum {
    pub fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// One model's numbers for one paradigm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParadigmCell {
    pub phenomenon: Phenomenon,
    pub pairs: usize,
    pub correct: usize,
    /// Per-family probe scores over the paradigm's acceptable sentences.
    pub scores: BTreeMap<Family, ScoreSum>,
}

/// Everything the regressions need from one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model_id: String,
    pub paradigms: BTreeMap<String, ParadigmCell>,
}

impl ModelRow {
    fn cells<'a>(&'a self, granularity: Granularity, group: &'a str) -> impl Iterator<Item = &'a ParadigmCell> + 'a {
        self.paradigms.iter().filter_map(move |(uid, c)| {
            let keep = match granularity {
                Granularity::Full => true,
                Granularity::Phenomenon => c.phenomenon.name() == group,
                Granularity::Paradigm => uid == group,
            };
            keep.then_some(c)
        })
    }

    /// Probe score for a group, `None` if no sentence was scored.
    pub fn predictor(&self, family: Family, granularity: Granularity, group: &str, agg: Aggregation) -> Option<f64> {
        let sums: Vec<ScoreSum> = self
            .cells(granularity, group)
            .filter_map(|c| c.scores.get(&family).copied())
            .filter(|s| s.count > 0)
            .collect();
        if sums.is_empty() {
            return None;
        }
        Some(match agg {
            Aggregation::MeanOfParadigmMeans => {
                sums.iter().map(|s| s.sum / s.count as f64).sum::<f64>() / sums.len() as f64
            }
            Aggregation::Pooled => {
                sums.iter().map(|s| s.sum).sum::<f64>() / sums.iter().map(|s| s.count).sum::<usize>() as f64
            }
        })
    }

    /// Minimal-pair accuracy for a group, `None` without pairs.
    pub fn accuracy(&self, granularity: Granularity, group: &str, agg: Aggregation) -> Option<f64> {
        let cells: Vec<&ParadigmCell> = self.cells(granularity, group).filter(|c| c.pairs > 0).collect();
        if cells.is_empty() {
            return None;
        }
        Some(match agg {
            Aggregation::MeanOfParadigmMeans => {
                cells.iter().map(|c| c.correct as f64 / c.pairs as f64).sum::<f64>() / cells.len() as f64
            }
            Aggregation::Pooled => {
                cells.iter().map(|c| c.correct).sum::<usize>() as f64 / cells.iter().map(|c| c.pairs).sum::<usize>() as f64
            }
        })
    }
}

/// A fit plus its Holm-corrected `β1` p-value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectedFit {
    pub fit: RegressionFit,
    pub p_beta1_corrected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectedLrt {
    pub test: LrtResult,
    pub p_corrected: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    InsufficientData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub family: Family,
    pub granularity: Granularity,
    pub group: String,
    pub status: RowStatus,
    /// Models used by the simple fit, with their predictor and response.
    pub models: Vec<String>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Models left out for missing values.
    pub excluded: Vec<String>,
    pub simple: Option<CorrectedFit>,
    pub multiple: Option<CorrectedFit>,
    pub lrt: Option<CorrectedLrt>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTable {
    pub granularity: Granularity,
    pub aggregation: Aggregation,
    pub rows: Vec<RegressionRow>,
}

/// Groups present at a granularity: `full`, the phenomenon names, or the
/// paradigm UIDs seen in any row.
pub fn groups(rows: &[ModelRow], granularity: Granularity) -> Vec<String> {
    match granularity {
        Granularity::Full => vec!["full".to_string()],
        Granularity::Phenomenon => {
            let seen: BTreeSet<Phenomenon> = rows.iter().flat_map(|r| r.paradigms.values().map(|c| c.phenomenon)).collect();
            seen.into_iter().map(|p| p.name().to_string()).collect()
        }
        Granularity::Paradigm => {
            let seen: BTreeSet<&String> = rows.iter().flat_map(|r| r.paradigms.keys()).collect();
            seen.into_iter().cloned().collect()
        }
    }
}

/// Simple fits of accuracy on each syntax probe's score, multiple fits
/// adding the control probe's score, and the LRT between them. Holm
/// correction runs over the groups of each family.
pub fn build_regression_table(
    rows: &[ModelRow],
    families: &[Family],
    granularity: Granularity,
    aggregation: Aggregation,
) -> RegressionTable {
    build_regression_table_for(rows, families, granularity, &groups(rows, granularity), aggregation)
}

/// As [`build_regression_table`], over an explicit list of groups. A group
/// without data yields an insufficient-data row.
pub fn build_regression_table_for(
    rows: &[ModelRow],
    families: &[Family],
    granularity: Granularity,
    group_names: &[String],
    aggregation: Aggregation,
) -> RegressionTable {
    let mut out = Vec::new();
    for &family in families {
        let mut family_rows: Vec<RegressionRow> = group_names
            .iter()
            .map(|g| fit_group(rows, family, granularity, g, aggregation))
            .collect();
        correct_family(&mut family_rows);
        out.extend(family_rows);
    }
    RegressionTable {
        granularity,
        aggregation,
        rows: out,
    }
}

fn fit_group(rows: &[ModelRow], family: Family, granularity: Granularity, group: &str, agg: Aggregation) -> RegressionRow {
    let mut models = Vec::new();
    let (mut x, mut y, mut x2) = (Vec::new(), Vec::new(), Vec::new());
    let mut excluded = Vec::new();
    for r in rows {
        match (r.predictor(family, granularity, group, agg), r.accuracy(granularity, group, agg)) {
            (Some(p), Some(a)) => {
                models.push(r.model_id.clone());
                x.push(p);
                y.push(a);
                x2.push(r.predictor(Family::Control, granularity, group, agg));
            }
            _ => excluded.push(r.model_id.clone()),
        }
    }
    if !excluded.is_empty() {
        log::warn!("{family}/{granularity}/{group}: excluded models without data: {}", excluded.join(", "));
    }
    let simple = ols_fit(&y, &design(&[&x])).ok();
    let (multiple, test) = if x2.iter().all(Option::is_some) {
        let c: Vec<f64> = x2.iter().flatten().copied().collect();
        match ols_fit(&y, &design(&[&x, &c])) {
            Ok(full) => {
                let test = simple.as_ref().and_then(|s| lrt(s, &full).ok());
                (Some(full), test)
            }
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };
    RegressionRow {
        family,
        granularity,
        group: group.to_string(),
        status: if simple.is_some() { RowStatus::Ok } else { RowStatus::InsufficientData },
        models,
        x,
        y,
        excluded,
        simple: simple.map(|fit| CorrectedFit {
            p_beta1_corrected: fit.p_beta1(),
            fit,
        }),
        multiple: multiple.map(|fit| CorrectedFit {
            p_beta1_corrected: fit.p_beta1(),
            fit,
        }),
        lrt: test.map(|test| CorrectedLrt {
            p_corrected: test.p_value,
            test,
        }),
    }
}

fn correct_family(rows: &mut [RegressionRow]) {
    fn apply<T>(items: Vec<&mut T>, get: impl Fn(&T) -> f64, set: impl Fn(&mut T, f64)) {
        let raw: Vec<f64> = items.iter().map(|t| get(t)).collect();
        // NaN p-values (degenerate fits) are left uncorrected
        let finite: Vec<usize> = (0..raw.len()).filter(|&k| raw[k].is_finite()).collect();
        let adjusted = holm_bonferroni(&finite.iter().map(|&k| raw[k]).collect::<Vec<_>>())
            .expect("p-values lie in [0, 1]");
        let mut items = items;
        for (slot, &k) in finite.iter().enumerate() {
            set(&mut *items[k], adjusted[slot]);
        }
    }
    apply(
        rows.iter_mut().filter_map(|r| r.simple.as_mut()).collect(),
        |f| f.fit.p_beta1(),
        |f, p| f.p_beta1_corrected = p,
    );
    apply(
        rows.iter_mut().filter_map(|r| r.multiple.as_mut()).collect(),
        |f| f.fit.p_beta1(),
        |f, p| f.p_beta1_corrected = p,
    );
    apply(
        rows.iter_mut().filter_map(|r| r.lrt.as_mut()).collect(),
        |l| l.test.p_value,
        |l, p| l.p_corrected = p,
    );
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl RegressionTable {
    pub const CSV_HEADER: &'static str = "family,granularity,group,n,status,\
simple_beta1,simple_p,simple_p_raw,simple_adj_r2,\
multiple_beta1,multiple_p,multiple_p_raw,multiple_adj_r2,\
lrt_stat,lrt_p,lrt_p_raw";

    /// CSV with corrected p-values in the `*_p` columns and raw values in
    /// `*_p_raw`. Missing values are empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let status = match r.status {
                RowStatus::Ok => "ok",
                RowStatus::InsufficientData => "insufficient-data",
            };
            let fit_cols = |f: &Option<CorrectedFit>| {
                [
                    cell(f.as_ref().map(|f| f.fit.beta1())),
                    cell(f.as_ref().map(|f| f.p_beta1_corrected)),
                    cell(f.as_ref().map(|f| f.fit.p_beta1())),
                    cell(f.as_ref().map(|f| f.fit.adj_r2)),
                ]
                .join(",")
            };
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.family,
                r.granularity,
                r.group,
                r.x.len(),
                status,
                fit_cols(&r.simple),
                fit_cols(&r.multiple),
                cell(r.lrt.as_ref().map(|l| l.test.statistic)),
                cell(r.lrt.as_ref().map(|l| l.p_corrected)),
                cell(r.lrt.as_ref().map(|l| l.test.p_value)),
            ));
        }
        s
    }

    pub fn row(&self, family: Family, group: &str) -> Option<&RegressionRow> {
        self.rows.iter().find(|r| r.family == family && r.group == group)
    }
}

/// Sentence-level comparison for one suite: probe scores of acceptable
/// sentences whose pair the model got right against those it got wrong.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteTTest {
    pub uid: String,
    pub n_correct: usize,
    pub n_incorrect: usize,
    /// `None` when the test is undefined.
    pub test: Option<WelchTest>,
    pub p_corrected: Option<f64>,
}

/// Welch tests per suite, Holm-corrected across the suites with a defined
/// test.
pub fn suite_ttests(suites: &[(String, Vec<f64>, Vec<f64>)]) -> Vec<SuiteTTest> {
    let mut out: Vec<SuiteTTest> = suites
        .iter()
        .map(|(uid, correct, incorrect)| SuiteTTest {
            uid: uid.clone(),
            n_correct: correct.len(),
            n_incorrect: incorrect.len(),
            test: welch_ttest_greater(correct, incorrect),
            p_corrected: None,
        })
        .collect();
    let defined: Vec<usize> = (0..out.len()).filter(|&k| out[k].test.is_some_and(|t| t.p_value.is_finite())).collect();
    let raw: Vec<f64> = defined.iter().map(|&k| out[k].test.unwrap().p_value).collect();
    let adjusted = holm_bonferroni(&raw).expect("p-values lie in [0, 1]");
    for (slot, &k) in defined.iter().enumerate() {
        out[k].p_corrected = Some(adjusted[slot]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, cells: &[(&str, Phenomenon, f64, f64, Option<f64>)]) -> ModelRow {
        ModelRow {
            model_id: id.into(),
            paradigms: cells
                .iter()
                .map(|&(uid, ph, acc, uuas, ctrl)| {
                    let mut scores = BTreeMap::new();
                    scores.insert(Family::Structural, ScoreSum { sum: uuas * 10.0, count: 10 });
                    if let Some(c) = ctrl {
                        scores.insert(Family::Control, ScoreSum { sum: c * 10.0, count: 10 });
                    }
                    (
                        uid.to_string(),
                        ParadigmCell {
                            phenomenon: ph,
                            pairs: 100,
                            correct: (acc * 100.0).round() as usize,
                            scores,
                        },
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn aggregation_modes() {
        let mut r = row(
            "m",
            &[
                ("anaphor_gender_agreement", Phenomenon::AnaphorAgreement, 0.5, 0.2, None),
                ("anaphor_number_agreement", Phenomenon::AnaphorAgreement, 1.0, 0.6, None),
            ],
        );
        r.paradigms.get_mut("anaphor_number_agreement").unwrap().scores.insert(Family::Structural, ScoreSum { sum: 1.8, count: 3 });
        r.paradigms.get_mut("anaphor_number_agreement").unwrap().pairs = 300;
        r.paradigms.get_mut("anaphor_number_agreement").unwrap().correct = 300;
        let g = Granularity::Phenomenon;
        let mean = r.predictor(Family::Structural, g, "anaphor_agreement", Aggregation::MeanOfParadigmMeans).unwrap();
        assert!((mean - 0.4).abs() < 1e-12);
        let pooled = r.predictor(Family::Structural, g, "anaphor_agreement", Aggregation::Pooled).unwrap();
        assert!((pooled - 3.8 / 13.0).abs() < 1e-12);
        assert_eq!(r.accuracy(g, "anaphor_agreement", Aggregation::MeanOfParadigmMeans), Some(0.75));
        assert_eq!(r.accuracy(g, "anaphor_agreement", Aggregation::Pooled), Some(350.0 / 400.0));
        assert_eq!(r.accuracy(g, "binding", Aggregation::Pooled), None);
    }

    #[test]
    fn full_granularity_is_uncorrected() {
        let rows: Vec<ModelRow> = (0..6)
            .map(|k| {
                let u = 0.3 + 0.1 * k as f64;
                let noise = [0.01, -0.02, 0.0, 0.015, -0.01, 0.005][k];
                row(&format!("m{k}"), &[("transitive", Phenomenon::ArgumentStructure, 0.5 + 0.3 * u + noise, u, Some(0.1 * (k % 3) as f64))])
            })
            .collect();
        let t = build_regression_table(&rows, &[Family::Structural], Granularity::Full, Aggregation::default());
        assert_eq!(t.rows.len(), 1);
        let s = t.rows[0].simple.as_ref().unwrap();
        assert_eq!(s.p_beta1_corrected, s.fit.p_beta1());
        let l = t.rows[0].lrt.as_ref().unwrap();
        assert_eq!(l.p_corrected, l.test.p_value);
    }

    #[test]
    fn thirteen_phenomena_corrected_together() {
        let uids: Vec<(&str, Phenomenon)> = crate::outcomes::paradigm_table()
            .iter()
            .map(|(u, p)| (u.as_str(), *p))
            .collect();
        let mut first: BTreeMap<Phenomenon, &str> = BTreeMap::new();
        for (u, p) in &uids {
            first.entry(*p).or_insert(u);
        }
        let rows: Vec<ModelRow> = (0..8)
            .map(|k| {
                let cells: Vec<_> = first
                    .iter()
                    .enumerate()
                    .map(|(j, (p, u))| {
                        let x = ((k * 7 + j * 3) % 11) as f64 / 11.0;
                        let y = 0.5 + 0.01 * (((k * 5 + j) % 7) as f64);
                        (*u, *p, y, x, None)
                    })
                    .collect();
                row(&format!("m{k}"), &cells)
            })
            .collect();
        let t = build_regression_table(&rows, &[Family::Structural], Granularity::Phenomenon, Aggregation::default());
        assert_eq!(t.rows.len(), 13);
        let fits: Vec<&CorrectedFit> = t.rows.iter().map(|r| r.simple.as_ref().unwrap()).collect();
        let min = fits.iter().min_by(|a, b| a.fit.p_beta1().total_cmp(&b.fit.p_beta1())).unwrap();
        assert_eq!(min.p_beta1_corrected, (13.0 * min.fit.p_beta1()).min(1.0));
        for f in &fits {
            assert!(f.p_beta1_corrected >= f.fit.p_beta1() && f.p_beta1_corrected <= 1.0);
        }
        assert!(t.rows.iter().all(|r| r.multiple.is_none() && r.lrt.is_none()));
    }

    #[test]
    fn insufficient_and_excluded() {
        let rows = vec![
            row("a", &[("transitive", Phenomenon::ArgumentStructure, 0.5, 0.2, None)]),
            row("b", &[("transitive", Phenomenon::ArgumentStructure, 0.6, 0.4, None)]),
            row("c", &[("wh_island", Phenomenon::IslandEffects, 0.6, 0.4, None)]),
        ];
        let t = build_regression_table(&rows, &[Family::Structural], Granularity::Phenomenon, Aggregation::default());
        let r = t.row(Family::Structural, "argument_structure").unwrap();
        assert_eq!(r.status, RowStatus::InsufficientData);
        assert_eq!(r.excluded, vec!["c".to_string()]);
        assert!(t.to_csv().contains("structural,phenomenon,argument_structure,2,insufficient-data,,,,,,,,,,,"));
    }

    #[test]
    fn suite_tests_corrected_within_model() {
        let suites = vec![
            ("a".to_string(), vec![0.9, 0.8, 0.85], vec![0.1, 0.2, 0.15]),
            ("b".to_string(), vec![0.5, 0.6], vec![0.55]),
            ("c".to_string(), vec![0.5, 0.6, 0.7], vec![0.5, 0.6, 0.7]),
        ];
        let out = suite_ttests(&suites);
        assert!(out[1].test.is_none() && out[1].p_corrected.is_none());
        let pa = out[0].test.unwrap().p_value;
        assert_eq!(out[0].p_corrected, Some((2.0 * pa).min(1.0)));
        assert_eq!(out[2].test.unwrap().p_value, 0.5);
    }
}
