//! Accuracy metrics and prediction-flip accounting.
//!
//! Every metric splits a sentence into units that are individually correct
//! or wrong: tokens for UAS/LAS, gold spans for SPAN_EM, and the whole
//! sentence for UCM/LCM/EM. Flip counts compare the old and new model unit
//! by unit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::structures::{Sentence, Structure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "UAS")]
    Uas,
    #[serde(rename = "LAS")]
    Las,
    #[serde(rename = "UCM")]
    Ucm,
    #[serde(rename = "LCM")]
    Lcm,
    #[serde(rename = "EM")]
    Em,
    #[serde(rename = "SPAN_EM")]
    SpanEm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Granularity {
    Word,
    Span,
    Structure,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::Uas,
        MetricKind::Las,
        MetricKind::Ucm,
        MetricKind::Lcm,
        MetricKind::Em,
        MetricKind::SpanEm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Uas => "UAS",
            MetricKind::Las => "LAS",
            MetricKind::Ucm => "UCM",
            MetricKind::Lcm => "LCM",
            MetricKind::Em => "EM",
            MetricKind::SpanEm => "SPAN_EM",
        }
    }

    pub fn granularity(self) -> Granularity {
        match self {
            MetricKind::Uas | MetricKind::Las => Granularity::Word,
            MetricKind::SpanEm => Granularity::Span,
            MetricKind::Ucm | MetricKind::Lcm | MetricKind::Em => Granularity::Structure,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown metric {:?}", s)))
    }
}

/// Per-unit correctness of `pred` against `gold`.
///
/// With `exclude_punct`, PUNCT tokens are not units for UAS/LAS and are
/// ignored by the UCM/LCM all-correct test. EM compares whole structures
/// and never excludes anything.
pub fn unit_outcomes(
    sentence: &Sentence,
    pred: &Structure,
    gold: &Structure,
    metric: MetricKind,
    exclude_punct: bool,
) -> Result<Vec<bool>, Error> {
    if pred.len() != gold.len() || gold.len() != sentence.len() {
        return Err(Error::Misaligned(format!(
            "sentence {}: prediction covers {} tokens, gold {}, sentence {}",
            sentence.id(),
            pred.len(),
            gold.len(),
            sentence.len()
        )));
    }
    if metric == MetricKind::Em {
        return Ok(vec![pred == gold]);
    }
    if metric == MetricKind::SpanEm {
        let (Structure::Span(p), Structure::Span(g)) = (pred, gold) else {
            return Err(Error::Config("SPAN_EM needs intent/slot trees".into()));
        };
        let predicted = p.decompose_to_spans();
        return Ok(g
            .decompose_to_spans()
            .iter()
            .map(|span| predicted.contains(span))
            .collect());
    }
    let (Structure::Dep(p), Structure::Dep(g)) = (pred, gold) else {
        return Err(Error::Config(format!("{} needs dependency trees", metric)));
    };
    let labeled = matches!(metric, MetricKind::Las | MetricKind::Lcm);
    let tokens: Vec<bool> = (0..g.len())
        .filter(|&t| !(exclude_punct && sentence.is_punct(t)))
        .map(|t| p.head(t) == g.head(t) && (!labeled || p.label(t) == g.label(t)))
        .collect();
    Ok(match metric.granularity() {
        Granularity::Word => tokens,
        _ => vec![tokens.iter().all(|&ok| ok)],
    })
}

/// `(correct_units, total_units)` for one sentence.
pub fn evaluate(
    sentence: &Sentence,
    pred: &Structure,
    gold: &Structure,
    metric: MetricKind,
    exclude_punct: bool,
) -> Result<(usize, usize), Error> {
    let units = unit_outcomes(sentence, pred, gold, metric, exclude_punct)?;
    Ok((units.iter().filter(|&&ok| ok).count(), units.len()))
}

/// Outcome of one unit under an old/new model pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flip {
    PositiveCongruent,
    Negative,
    Positive,
    BothWrong,
}

impl Flip {
    pub fn classify(old_correct: bool, new_correct: bool) -> Flip {
        match (old_correct, new_correct) {
            (true, true) => Flip::PositiveCongruent,
            (true, false) => Flip::Negative,
            (false, true) => Flip::Positive,
            (false, false) => Flip::BothWrong,
        }
    }
}

/// Flip counts over a test set. Rates are derived from the counts on
/// demand, so no rounding happens before formatting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlipReport {
    pub metric: MetricKind,
    pub total_units: usize,
    pub positive_congruent: usize,
    pub negative_flips: usize,
    pub positive_flips: usize,
    pub both_wrong: usize,
}

fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

impl FlipReport {
    pub fn empty(metric: MetricKind) -> Self {
        FlipReport {
            metric,
            total_units: 0,
            positive_congruent: 0,
            negative_flips: 0,
            positive_flips: 0,
            both_wrong: 0,
        }
    }

    pub fn add(&mut self, flip: Flip) {
        self.total_units += 1;
        match flip {
            Flip::PositiveCongruent => self.positive_congruent += 1,
            Flip::Negative => self.negative_flips += 1,
            Flip::Positive => self.positive_flips += 1,
            Flip::BothWrong => self.both_wrong += 1,
        }
    }

    pub fn merge(&mut self, other: &FlipReport) {
        self.total_units += other.total_units;
        self.positive_congruent += other.positive_congruent;
        self.negative_flips += other.negative_flips;
        self.positive_flips += other.positive_flips;
        self.both_wrong += other.both_wrong;
    }

    /// Report from aligned per-unit correctness streams.
    pub fn from_outcomes(metric: MetricKind, old_correct: &[bool], new_correct: &[bool]) -> Result<Self, Error> {
        if old_correct.len() != new_correct.len() {
            return Err(Error::Misaligned(format!(
                "{} old units vs {} new units",
                old_correct.len(),
                new_correct.len()
            )));
        }
        let mut report = FlipReport::empty(metric);
        for (&o, &n) in old_correct.iter().zip(new_correct) {
            report.add(Flip::classify(o, n));
        }
        Ok(report)
    }

    pub fn correct_old(&self) -> usize {
        self.positive_congruent + self.negative_flips
    }

    pub fn correct_new(&self) -> usize {
        self.positive_congruent + self.positive_flips
    }

    pub fn acc_old(&self) -> f64 {
        percent(self.correct_old(), self.total_units)
    }

    pub fn acc_new(&self) -> f64 {
        percent(self.correct_new(), self.total_units)
    }

    pub fn er_new(&self) -> f64 {
        percent(self.total_units - self.correct_new(), self.total_units)
    }

    pub fn nfr(&self) -> f64 {
        percent(self.negative_flips, self.total_units)
    }

    /// NFR / ER_new as a percentage; `None` when the new model makes no
    /// errors.
    pub fn nfi(&self) -> Option<f64> {
        let wrong = self.total_units - self.correct_new();
        (wrong > 0).then(|| percent(self.negative_flips, wrong))
    }

    pub fn to_record(&self) -> FlipRecord {
        FlipRecord {
            metric: self.metric,
            total_units: self.total_units,
            correct_old: self.correct_old(),
            correct_new: self.correct_new(),
            positive_flips: self.positive_flips,
            negative_flips: self.negative_flips,
            positive_congruent: self.positive_congruent,
            both_wrong: self.both_wrong,
            acc_old: format_percent(self.acc_old()),
            acc_new: format_percent(self.acc_new()),
            er_new: format_percent(self.er_new()),
            nfr: format_percent(self.nfr()),
            nfi: self.nfi().map(format_percent),
            nfi_undefined: self.nfi().is_none(),
        }
    }
}

pub fn format_percent(value: f64) -> String {
    format!("{:.2}", value)
}

/// Serialized form of a [`FlipReport`]: raw counts plus two-decimal
/// percentage strings. `nfi` is null when undefined.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipRecord {
    pub metric: MetricKind,
    pub total_units: usize,
    pub correct_old: usize,
    pub correct_new: usize,
    pub positive_flips: usize,
    pub negative_flips: usize,
    pub positive_congruent: usize,
    pub both_wrong: usize,
    pub acc_old: String,
    pub acc_new: String,
    pub er_new: String,
    pub nfr: String,
    pub nfi: Option<String>,
    pub nfi_undefined: bool,
}

impl FlipRecord {
    /// The raw counts, from which every rate can be recomputed.
    pub fn counts(&self) -> FlipReport {
        FlipReport {
            metric: self.metric,
            total_units: self.total_units,
            positive_congruent: self.positive_congruent,
            negative_flips: self.negative_flips,
            positive_flips: self.positive_flips,
            both_wrong: self.both_wrong,
        }
    }
}

/// Flip report of a new prediction stream against an old one.
pub fn flip_report(
    sentences: &[&Sentence],
    old_preds: &[Structure],
    new_preds: &[Structure],
    golds: &[Structure],
    metric: MetricKind,
    exclude_punct: bool,
) -> Result<FlipReport, Error> {
    let n = sentences.len();
    if old_preds.len() != n || new_preds.len() != n || golds.len() != n {
        return Err(Error::Misaligned(format!(
            "{} sentences, {} old, {} new, {} gold predictions",
            n,
            old_preds.len(),
            new_preds.len(),
            golds.len()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut report = FlipReport::empty(metric);
    for i in 0..n {
        let old = unit_outcomes(sentences[i], &old_preds[i], &golds[i], metric, exclude_punct)?;
        let new = unit_outcomes(sentences[i], &new_preds[i], &golds[i], metric, exclude_punct)?;
        report.merge(&FlipReport::from_outcomes(metric, &old, &new)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structures::{parse_top_tree, DepTree, Head, SpanTree};

    fn sentence() -> Sentence {
        Sentence::new(
            "s",
            vec!["He".into(), "left".into(), ".".into()],
            vec!["PRON".into(), "VERB".into(), "PUNCT".into()],
        )
        .unwrap()
    }

    fn tree(heads: Vec<Head>, labels: [&str; 3]) -> Structure {
        DepTree::new(heads, labels.iter().map(|s| s.to_string()).collect())
            .unwrap()
            .into()
    }

    #[test]
    fn identical_prediction_is_fully_correct() {
        let gold = tree(
            vec![Head::Word(1), Head::Root, Head::Word(1)],
            ["nsubj", "root", "punct"],
        );
        for metric in [
            MetricKind::Uas,
            MetricKind::Las,
            MetricKind::Ucm,
            MetricKind::Lcm,
            MetricKind::Em,
        ] {
            let (c, t) = evaluate(&sentence(), &gold, &gold, metric, true).unwrap();
            assert_eq!(c, t);
        }
    }

    #[test]
    fn punctuation_is_excluded() {
        let gold = tree(
            vec![Head::Word(1), Head::Root, Head::Word(1)],
            ["nsubj", "root", "punct"],
        );
        let pred = tree(
            vec![Head::Word(1), Head::Root, Head::Word(0)],
            ["nsubj", "root", "punct"],
        );
        assert_eq!(
            evaluate(&sentence(), &pred, &gold, MetricKind::Uas, true).unwrap(),
            (2, 2)
        );
        assert_eq!(
            evaluate(&sentence(), &pred, &gold, MetricKind::Uas, false).unwrap(),
            (2, 3)
        );
        assert_eq!(
            evaluate(&sentence(), &pred, &gold, MetricKind::Ucm, true).unwrap(),
            (1, 1)
        );
        assert_eq!(
            evaluate(&sentence(), &pred, &gold, MetricKind::Ucm, false).unwrap(),
            (0, 1)
        );
    }

    #[test]
    fn labels_only_matter_for_labeled_metrics() {
        let gold = tree(
            vec![Head::Word(1), Head::Root, Head::Word(1)],
            ["nsubj", "root", "punct"],
        );
        let pred = tree(vec![Head::Word(1), Head::Root, Head::Word(1)], ["obj", "root", "punct"]);
        assert_eq!(
            evaluate(&sentence(), &pred, &gold, MetricKind::Uas, true).unwrap(),
            (2, 2)
        );
        assert_eq!(
            evaluate(&sentence(), &pred, &gold, MetricKind::Las, true).unwrap(),
            (1, 2)
        );
        assert_eq!(
            evaluate(&sentence(), &pred, &gold, MetricKind::Lcm, true).unwrap(),
            (0, 1)
        );
    }

    #[test]
    fn figure_one_span_em() {
        let (words, gold) = parse_top_tree(
            "[IN:GET_DIRECTION Directions to [SL:DESTINATION [IN:FIND_EVENT \
             [SL:ORGANIZER the ] Eagles [SL:CATEGORY game ] ] ] ]",
        )
        .unwrap();
        let (_, pred) = parse_top_tree(
            "[IN:GET_DIRECTION Directions to [SL:DESTINATION [IN:FIND_EVENT \
             [SL:ORGANIZER the ] Eagles game ] ] ]",
        )
        .unwrap();
        let sentence = Sentence::untagged("fig1", words).unwrap();
        let gold = Structure::Span(SpanTree::new(gold).unwrap());
        let pred = Structure::Span(SpanTree::new(pred).unwrap());
        assert_eq!(
            evaluate(&sentence, &pred, &gold, MetricKind::SpanEm, false).unwrap(),
            (3, 4)
        );
        assert_eq!(
            evaluate(&sentence, &pred, &gold, MetricKind::Em, false).unwrap(),
            (0, 1)
        );
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let gold = tree(vec![Head::Word(1), Head::Root, Head::Word(1)], ["a", "b", "c"]);
        let short: Structure = DepTree::new(vec![Head::Root], vec!["a".into()]).unwrap().into();
        assert!(evaluate(&sentence(), &short, &gold, MetricKind::Uas, true).is_err());
    }

    #[test]
    fn nfi_undefined_for_perfect_new_model() {
        let report = FlipReport::from_outcomes(MetricKind::Uas, &[false, true], &[true, true]).unwrap();
        assert_eq!(report.nfi(), None);
        assert!(report.to_record().nfi_undefined);
        assert_eq!(report.nfr(), 0.0);
    }

    #[test]
    fn metric_names_parse() {
        for m in MetricKind::ALL {
            assert_eq!(m.name().parse::<MetricKind>().unwrap(), m);
        }
        assert_eq!("span_em".parse::<MetricKind>().unwrap(), MetricKind::SpanEm);
        assert!("BLEU".parse::<MetricKind>().is_err());
    }
}
