//! Triage metrics: recall, precision, F1, share of patents flagged, the
//! patents-left score and the weighted score M.
//!
//! ```text
//! PL = 1 − fp/N
//! M  = (w_r·R + w_p·P + w_pl·PL) / (w_r + w_p + w_pl)      default weights 4/1/1
//! ```
//!
//! Result tables print `%` = (tp+fp)/N rather than fp/N. Since
//! fp = (tp+fp)·(1−P), PL can be recovered as `1 − %·(1−P)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Label;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction and gold id sets differ: {only_predicted} only predicted, {only_gold} only gold (first: {example})")]
    IdMismatch {
        only_predicted: usize,
        only_gold: usize,
        example: String,
    },
    #[error("no gold-relevant patents: recall is undefined")]
    NoPositives,
    #[error("nothing to evaluate")]
    Empty,
    #[error("metric weights must be positive, got {0:?}")]
    BadWeights(MetricWeights),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(
    predicted: &BTreeMap<String, Label>,
    gold: &BTreeMap<String, Label>,
) -> Result<ConfusionCounts, MetricsError> {
    let p: BTreeSet<&String> = predicted.keys().collect();
    let g: BTreeSet<&String> = gold.keys().collect();
    if p != g {
        let only_predicted: Vec<_> = p.difference(&g).collect();
        let only_gold: Vec<_> = g.difference(&p).collect();
        let example = only_predicted
            .first()
            .or(only_gold.first())
            .map(|s| s.to_string())
            .unwrap_or_default();
        return Err(MetricsError::IdMismatch {
            only_predicted: only_predicted.len(),
            only_gold: only_gold.len(),
            example,
        });
    }
    let mut c = ConfusionCounts::default();
    for (id, truth) in gold {
        match (predicted[id], truth) {
            (Label::Relevant, Label::Relevant) => c.tp += 1,
            (Label::Relevant, Label::Irrelevant) => c.fp += 1,
            (Label::Irrelevant, Label::Irrelevant) => c.tn += 1,
            (Label::Irrelevant, Label::Relevant) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    pub w_recall: f64,
    pub w_precision: f64,
    pub w_patents_left: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self {
            w_recall: 4.0,
            w_precision: 1.0,
            w_patents_left: 1.0,
        }
    }
}

impl MetricWeights {
    pub fn new(w_recall: f64, w_precision: f64, w_patents_left: f64) -> Result<Self, MetricsError> {
        let w = Self {
            w_recall,
            w_precision,
            w_patents_left,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let ok = [self.w_recall, self.w_precision, self.w_patents_left]
            .iter()
            .all(|w| w.is_finite() && *w > 0.0);
        if ok {
            Ok(())
        } else {
            Err(MetricsError::BadWeights(*self))
        }
    }

    pub fn divisor(&self) -> f64 {
        self.w_recall + self.w_precision + self.w_patents_left
    }

    pub fn score(&self, recall: f64, precision: f64, patents_left: f64) -> f64 {
        (self.w_recall * recall + self.w_precision * precision + self.w_patents_left * patents_left)
            / self.divisor()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub percent_flagged: f64,
    pub patents_left: f64,
    pub score_m: f64,
    pub counts: ConfusionCounts,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn compute_metrics(c: ConfusionCounts, weights: &MetricWeights) -> Result<MetricsReport, MetricsError> {
    let n = c.total();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    if c.tp + c.fn_ == 0 {
        return Err(MetricsError::NoPositives);
    }
    let n = n as f64;
    let recall = c.tp as f64 / (c.tp + c.fn_) as f64;
    // An all-negative predictor gets precision 0 by convention.
    let precision = if c.tp + c.fp == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    };
    let patents_left = 1.0 - c.fp as f64 / n;
    Ok(MetricsReport {
        recall,
        precision,
        f1: f1_score(precision, recall),
        percent_flagged: (c.tp + c.fp) as f64 / n,
        patents_left,
        score_m: weights.score(recall, precision, patents_left),
        counts: c,
    })
}

/// Patents-left score from the share flagged and the precision.
pub fn patents_left_from_share(percent_flagged: f64, precision: f64) -> f64 {
    1.0 - percent_flagged * (1.0 - precision)
}

/// Score M from a published (R, P, %) row, with `%` as a fraction in [0, 1].
pub fn score_m_from_table_row(recall: f64, precision: f64, percent_flagged: f64, weights: &MetricWeights) -> f64 {
    weights.score(recall, precision, patents_left_from_share(percent_flagged, precision))
}

/// Stable sort by descending score M.
pub fn rank<L>(mut reports: Vec<(L, MetricsReport)>) -> Vec<(L, MetricsReport)> {
    reports.sort_by(|a, b| b.1.score_m.total_cmp(&a.1.score_m));
    reports
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(s: &str) -> BTreeMap<String, Label> {
        s.chars()
            .enumerate()
            .map(|(i, c)| {
                let l = if c == '1' { Label::Relevant } else { Label::Irrelevant };
                (format!("p{i:02}"), l)
            })
            .collect()
    }

    #[test]
    fn confusion_examples() {
        let gold = labels("1111000000");
        assert_eq!(
            confusion(&gold, &gold).unwrap(),
            ConfusionCounts { tp: 4, fp: 0, tn: 6, fn_: 0 }
        );
        let gold = labels("1000000000");
        let all = labels("1111111111");
        assert_eq!(
            confusion(&all, &gold).unwrap(),
            ConfusionCounts { tp: 1, fp: 9, tn: 0, fn_: 0 }
        );
        let mut other = gold.clone();
        other.insert("zz".into(), Label::Relevant);
        assert!(matches!(confusion(&other, &gold), Err(MetricsError::IdMismatch { only_predicted: 1, .. })));
    }

    #[test]
    fn confusion_matches_hand_count() {
        // hand-counted: (1,1) at 0,3,9,10,15,17; (1,0) at 2,7,12; (0,1) at 5,19
        let pred = labels("10110001011010010100");
        let gold = labels("10010100011000010101");
        let c = confusion(&pred, &gold).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 6, fp: 3, tn: 9, fn_: 2 });
        assert_eq!(c.total(), 20);
    }

    #[test]
    fn metrics_from_counts() {
        let w = MetricWeights::default();
        let perfect = compute_metrics(ConfusionCounts { tp: 7, fp: 0, tn: 93, fn_: 0 }, &w).unwrap();
        for v in [perfect.recall, perfect.precision, perfect.patents_left, perfect.score_m, perfect.f1] {
            assert_eq!(v, 1.0);
        }
        let none = compute_metrics(ConfusionCounts { tp: 0, fp: 0, tn: 9, fn_: 1 }, &w).unwrap();
        assert_eq!(none.precision, 0.0);
        assert_eq!(none.f1, 0.0);
        assert_eq!(
            compute_metrics(ConfusionCounts { tp: 0, fp: 1, tn: 9, fn_: 0 }, &w),
            Err(MetricsError::NoPositives)
        );
        assert_eq!(compute_metrics(ConfusionCounts::default(), &w), Err(MetricsError::Empty));
    }

    #[test]
    fn table_rows_reproduce_published_scores() {
        let w = MetricWeights::default();
        let cases = [
            (0.8330, 0.6618, 0.127, 0.8252, 0.7376),
            (0.9176, 0.6131, 0.151, 0.8709, 0.7351),
            (0.9451, 0.5833, 0.163, 0.8826, 0.7214),
            (0.6739, 0.6392, 0.177, 0.7118, 0.6561),
        ];
        for (r, p, pct, m, f1) in cases {
            assert!((score_m_from_table_row(r, p, pct, &w) - m).abs() <= 5e-4, "{r} {p} {pct}");
            assert!((f1_score(p, r) - f1).abs() <= 5e-4);
        }
        let pl = patents_left_from_share(0.127, 0.6618);
        assert!((pl - 0.9570486).abs() < 1e-9);
        assert_eq!(score_m_from_table_row(1.0, 1.0, 0.1, &w), 1.0);
    }

    #[test]
    fn ranking_is_stable_and_descending() {
        let w = MetricWeights::default();
        let a = compute_metrics(ConfusionCounts { tp: 5, fp: 5, tn: 90, fn_: 0 }, &w).unwrap();
        let b = compute_metrics(ConfusionCounts { tp: 4, fp: 5, tn: 90, fn_: 1 }, &w).unwrap();
        assert_eq!(rank(vec![("only", a)]).len(), 1);
        let ranked = rank(vec![("b", b), ("a1", a), ("a2", a)]);
        let order: Vec<_> = ranked.iter().map(|(l, _)| *l).collect();
        assert_eq!(order, ["a1", "a2", "b"]);
    }

    #[test]
    fn weights_must_be_positive() {
        assert!(MetricWeights::new(4.0, 1.0, 1.0).is_ok());
        assert!(MetricWeights::new(0.0, 1.0, 1.0).is_err());
        assert!(MetricWeights::new(1.0, -1.0, 1.0).is_err());
    }

    fn arb_counts() -> impl Strategy<Value = ConfusionCounts> {
        (1u64..200, 0u64..200, 0u64..500, 0u64..100).prop_map(|(tp, fp, tn, fn_)| ConfusionCounts { tp, fp, tn, fn_ })
    }

    proptest! {
        #[test]
        fn both_routes_agree(c in arb_counts()) {
            let w = MetricWeights::default();
            let r = compute_metrics(c, &w).unwrap();
            let via_row = score_m_from_table_row(r.recall, r.precision, r.percent_flagged, &w);
            prop_assert!((via_row - r.score_m).abs() <= 1e-12);
            let identity = r.patents_left + r.percent_flagged * (1.0 - r.precision);
            prop_assert!((identity - 1.0).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.score_m));
        }

        #[test]
        fn score_increases_in_each_component(
            r in 0.0f64..0.9, p in 0.0f64..0.9, pl in 0.0f64..0.9, d in 1e-6f64..0.1,
            wr in 0.1f64..10.0, wp in 0.1f64..10.0, wpl in 0.1f64..10.0,
        ) {
            let w = MetricWeights::new(wr, wp, wpl).unwrap();
            let base = w.score(r, p, pl);
            prop_assert!(w.score(r + d, p, pl) > base);
            prop_assert!(w.score(r, p + d, pl) > base);
            prop_assert!(w.score(r, p, pl + d) > base);
        }
    }
}
