//! Confidence-quality metrics over pooled (confidence, target) pairs:
//! normalised cross-entropy, precision-recall curves and average
//! precision.

use crate::EPS_CONFIDENCE;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no samples")]
    Empty,
    #[error("confidences ({confidences}) and targets ({targets}) differ in length")]
    LengthMismatch { confidences: usize, targets: usize },
    #[error("all targets identical: baseline entropy is zero and NCE is undefined")]
    DegenerateTargets,
    #[error("no positive targets")]
    NoPositives,
}

fn check_lengths(confidences: &[f64], targets: &[bool]) -> Result<(), MetricsError> {
    if confidences.len() != targets.len() {
        return Err(MetricsError::LengthMismatch {
            confidences: confidences.len(),
            targets: targets.len(),
        });
    }
    if confidences.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Mean binary cross-entropy, confidences clamped so the logs stay
/// finite.
fn mean_cross_entropy(confidences: &[f64], targets: &[bool]) -> f64 {
    let total: f64 = confidences
        .iter()
        .zip(targets)
        .map(|(&c, &t)| {
            let c = c.clamp(EPS_CONFIDENCE, 1.0 - EPS_CONFIDENCE);
            if t {
                -c.ln()
            } else {
                -(1.0 - c).ln()
            }
        })
        .sum();
    total / confidences.len() as f64
}

/// Normalised cross-entropy against the constant-correctness baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NceReport {
    pub nce: f64,
    /// Empirical correctness: fraction of positive targets.
    pub p_c: f64,
    /// Cross-entropy of always predicting `p_c`.
    pub h_baseline: f64,
    pub h_model: f64,
}

/// NCE = (H(baseline) − H(model)) / H(baseline). Positive means the
/// model beats the prevalence predictor; 1 is the (unreachable)
/// perfect score.
pub fn nce(confidences: &[f64], targets: &[bool]) -> Result<NceReport, MetricsError> {
    check_lengths(confidences, targets)?;
    let p_c = targets.iter().filter(|t| **t).count() as f64 / targets.len() as f64;
    if p_c <= 0.0 || p_c >= 1.0 {
        return Err(MetricsError::DegenerateTargets);
    }
    let h_baseline = -(p_c * p_c.ln() + (1.0 - p_c) * (1.0 - p_c).ln());
    let h_model = mean_cross_entropy(confidences, targets);
    Ok(NceReport {
        nce: (h_baseline - h_model) / h_baseline,
        p_c,
        h_baseline,
        h_model,
    })
}

/// Confusion counts of the "positive iff confidence ≥ θ" decision
/// rule. True negatives play no role in precision/recall.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl PrCounts {
    /// 1 by convention when nothing is predicted positive.
    pub fn precision(&self) -> f64 {
        let predicted = self.true_positives + self.false_positives;
        if predicted == 0 {
            1.0
        } else {
            self.true_positives as f64 / predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let positives = self.true_positives + self.false_negatives;
        if positives == 0 {
            0.0
        } else {
            self.true_positives as f64 / positives as f64
        }
    }
}

pub fn counts_at(
    confidences: &[f64],
    targets: &[bool],
    threshold: f64,
) -> Result<PrCounts, MetricsError> {
    check_lengths(confidences, targets)?;
    let mut counts = PrCounts {
        true_positives: 0,
        false_positives: 0,
        false_negatives: 0,
    };
    for (&c, &t) in confidences.iter().zip(targets) {
        match (c >= threshold, t) {
            (true, true) => counts.true_positives += 1,
            (true, false) => counts.false_positives += 1,
            (false, true) => counts.false_negatives += 1,
            (false, false) => {}
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision-recall curve with one point per distinct confidence value
/// (descending), equal confidences sharing a point. The leading point
/// is the empty decision rule (θ above every confidence), which takes
/// precision 1 by convention.
pub fn pr_curve(confidences: &[f64], targets: &[bool]) -> Result<Vec<PrPoint>, MetricsError> {
    check_lengths(confidences, targets)?;
    let positives = targets.iter().filter(|t| **t).count();
    if positives == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut idx: Vec<usize> = (0..confidences.len()).collect();
    idx.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]));

    let mut points = vec![PrPoint {
        threshold: f64::INFINITY,
        precision: 1.0,
        recall: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let theta = confidences[idx[i]];
        while i < idx.len() && confidences[idx[i]] == theta {
            if targets[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold: theta,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / positives as f64,
        });
    }
    Ok(points)
}

fn ap_from_points(points: &[PrPoint]) -> f64 {
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for p in points {
        ap += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    ap
}

/// Area under the PR curve by step interpolation over
/// descending-confidence prefixes, equal-confidence groups processed
/// atomically. Depends only on the ordering of the scores, so any
/// strictly increasing transform of them leaves it unchanged.
pub fn average_precision(confidences: &[f64], targets: &[bool]) -> Result<f64, MetricsError> {
    Ok(ap_from_points(&pr_curve(confidences, targets)?))
}

/// Everything the evaluation pipeline reports for one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub count: usize,
    pub p_c: f64,
    pub h_baseline: f64,
    pub h_model: f64,
    pub nce: f64,
    pub ap: f64,
    pub pr_points: Vec<PrPoint>,
    pub threshold_counts: Vec<(f64, PrCounts)>,
}

pub fn evaluate(
    confidences: &[f64],
    targets: &[bool],
    thresholds: &[f64],
) -> Result<EvalReport, MetricsError> {
    let n = nce(confidences, targets)?;
    let pr_points = pr_curve(confidences, targets)?;
    let ap = ap_from_points(&pr_points);
    let threshold_counts = thresholds
        .iter()
        .map(|&t| Ok((t, counts_at(confidences, targets, t)?)))
        .collect::<Result<Vec<_>, MetricsError>>()?;
    Ok(EvalReport {
        count: targets.len(),
        p_c: n.p_c,
        h_baseline: n.h_baseline,
        h_model: n.h_model,
        nce: n.nce,
        ap,
        pr_points,
        threshold_counts,
    })
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "samples               {}", self.count)?;
        writeln!(f, "empirical_correctness {:.6}", self.p_c)?;
        writeln!(f, "h_baseline            {:.6}", self.h_baseline)?;
        writeln!(f, "h_model               {:.6}", self.h_model)?;
        writeln!(f, "nce                   {:.6}", self.nce)?;
        writeln!(f, "average_precision     {:.6}", self.ap)?;
        for (theta, c) in &self.threshold_counts {
            writeln!(
                f,
                "threshold {:.4}: tp {} fp {} fn {} precision {:.6} recall {:.6}",
                theta,
                c.true_positives,
                c.false_positives,
                c.false_negatives,
                c.precision(),
                c.recall()
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nce_constant_prevalence_predictor_scores_zero() {
        let got = nce(&[0.5, 0.5, 0.5, 0.5], &[true, false, true, false]).unwrap();
        assert!(got.nce.abs() < 1e-12);
        assert_eq!(got.p_c, 0.5);
    }

    #[test]
    fn nce_perfect_clamped_predictions_approach_one() {
        let got = nce(&[1.0, 0.0], &[true, false]).unwrap();
        // With the 1e-6 clamp the best reachable NCE is
        // 1 - (-ln(1-1e-6))/ln 2 ≈ 1 - 1.44e-6, just short of 1.
        assert!(got.nce > 1.0 - 1.5e-6);
        assert!(got.nce < 1.0);
    }

    #[test]
    fn nce_two_point_hand_case() {
        let got = nce(&[0.9, 0.2], &[true, false]).unwrap();
        assert_eq!(got.p_c, 0.5);
        assert!((got.h_baseline - std::f64::consts::LN_2).abs() < 1e-12);
        // H_model = -(ln 0.9 + ln 0.8)/2.
        assert!((got.h_model - 0.16425203348601799).abs() < 1e-12);
        assert!((got.nce - 0.7630).abs() < 1e-4);
    }

    #[test]
    fn nce_rejects_degenerate_and_malformed_inputs() {
        assert_eq!(
            nce(&[0.5, 0.5], &[true, true]),
            Err(MetricsError::DegenerateTargets)
        );
        assert_eq!(
            nce(&[0.5, 0.5], &[false, false]),
            Err(MetricsError::DegenerateTargets)
        );
        assert_eq!(nce(&[], &[]), Err(MetricsError::Empty));
        assert_eq!(
            nce(&[0.5], &[true, false]),
            Err(MetricsError::LengthMismatch { confidences: 1, targets: 2 })
        );
    }

    #[test]
    fn nce_increases_as_predictions_sharpen() {
        let targets = [true, false, true, true, false];
        let base = [0.6, 0.4, 0.7, 0.55, 0.45];
        let mut last = f64::NEG_INFINITY;
        for step in 0..5 {
            let s = 0.2 * step as f64;
            let c: Vec<f64> = base
                .iter()
                .zip(&targets)
                .map(|(&c, &t)| c + s * (if t { 1.0 } else { 0.0 } - c))
                .collect();
            let got = nce(&c, &targets).unwrap().nce;
            assert!(got > last);
            last = got;
        }
    }

    #[test]
    fn counts_at_interior_threshold() {
        let c = [0.9, 0.2, 0.6];
        let t = [true, false, false];
        let got = counts_at(&c, &t, 0.5).unwrap();
        assert_eq!(
            got,
            PrCounts { true_positives: 1, false_positives: 1, false_negatives: 0 }
        );
        assert_eq!(got.precision(), 0.5);
        assert_eq!(got.recall(), 1.0);
    }

    #[test]
    fn counts_above_max_use_empty_rule_conventions() {
        let got = counts_at(&[0.9, 0.2], &[true, false], 0.95).unwrap();
        assert_eq!(got.true_positives, 0);
        assert_eq!(got.precision(), 1.0);
        assert_eq!(got.recall(), 0.0);
    }

    #[test]
    fn pr_curve_walks_distinct_thresholds() {
        let c = [0.9, 0.2, 0.6];
        let t = [true, false, false];
        let got = pr_curve(&c, &t).unwrap();
        assert_eq!(got.len(), 4);
        assert_eq!(got[0].threshold, f64::INFINITY);
        assert_eq!((got[0].precision, got[0].recall), (1.0, 0.0));
        assert_eq!(got[1].threshold, 0.9);
        assert_eq!((got[1].precision, got[1].recall), (1.0, 1.0));
        assert_eq!(got[2].threshold, 0.6);
        assert_eq!((got[2].precision, got[2].recall), (0.5, 1.0));
        // Everything predicted positive: recall 1, precision equals
        // prevalence.
        assert_eq!(got[3].threshold, 0.2);
        assert_eq!((got[3].precision, got[3].recall), (1.0 / 3.0, 1.0));
    }

    #[test]
    fn pr_curve_ties_share_one_point() {
        let c = [0.8, 0.8, 0.5];
        let t = [true, false, true];
        let got = pr_curve(&c, &t).unwrap();
        let thresholds: Vec<f64> = got.iter().map(|p| p.threshold).collect();
        assert_eq!(&thresholds[1..], &[0.8, 0.5]);
        assert_eq!((got[1].precision, got[1].recall), (0.5, 0.5));
        assert_eq!((got[2].precision, got[2].recall), (2.0 / 3.0, 1.0));
    }

    #[test]
    fn pr_curve_requires_a_positive() {
        assert_eq!(
            pr_curve(&[0.9, 0.2], &[false, false]),
            Err(MetricsError::NoPositives)
        );
    }

    #[test]
    fn ap_three_point_hand_case() {
        let got = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((got - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn ap_separated_scores_is_one() {
        let got = average_precision(&[0.9, 0.8, 0.3, 0.2], &[true, true, false, false]).unwrap();
        assert_eq!(got, 1.0);
    }

    #[test]
    fn ap_constant_scores_is_prevalence() {
        let got = average_precision(&[0.4; 4], &[true, false, false, true]).unwrap();
        assert!((got - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ap_invariant_under_strictly_increasing_warps() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..50 {
            let n = rng.gen_range(2..=12);
            // Quantised confidences so ties actually occur.
            let c: Vec<f64> = (0..n)
                .map(|_| (rng.gen_range(0.0f64..1.0) * 10.0).round() / 10.0)
                .collect();
            let mut t: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            t[rng.gen_range(0..n)] = true;
            let warped: Vec<f64> = c.iter().map(|&x| 1.0 / (1.0 + (-(3.0 * x - 1.0)).exp())).collect();
            let a = average_precision(&c, &t).unwrap();
            let b = average_precision(&warped, &t).unwrap();
            assert!((a - b).abs() < 1e-12, "ap {a} warped {b}");
        }
    }

    #[test]
    fn pr_curve_recall_monotone_and_counts_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for _ in 0..50 {
            let n = rng.gen_range(2..=20);
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut t: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            t[rng.gen_range(0..n)] = true;
            let positives = t.iter().filter(|x| **x).count();
            let points = pr_curve(&c, &t).unwrap();
            for pair in points.windows(2) {
                // Descending thresholds, so recall may only grow.
                assert!(pair[0].threshold > pair[1].threshold);
                assert!(pair[0].recall <= pair[1].recall);
            }
            for p in &points[1..] {
                let counts = counts_at(&c, &t, p.threshold).unwrap();
                assert_eq!(counts.true_positives + counts.false_negatives, positives);
                assert_eq!(counts.precision(), p.precision);
                assert_eq!(counts.recall(), p.recall);
            }
        }
    }

    #[test]
    fn evaluate_aggregates_the_individual_metrics() {
        let c = [0.9, 0.2, 0.6, 0.7];
        let t = [true, false, false, true];
        let report = evaluate(&c, &t, &[0.5]).unwrap();
        let n = nce(&c, &t).unwrap();
        assert_eq!(report.count, 4);
        assert_eq!(report.nce, n.nce);
        assert_eq!(report.p_c, n.p_c);
        assert_eq!(report.ap, average_precision(&c, &t).unwrap());
        assert_eq!(report.pr_points, pr_curve(&c, &t).unwrap());
        assert_eq!(report.threshold_counts.len(), 1);
        assert_eq!(report.threshold_counts[0].1, counts_at(&c, &t, 0.5).unwrap());
        assert!(report.nce <= 1.0 && (0.0..=1.0).contains(&report.p_c));
        let text = report.to_string();
        assert!(text.contains("nce") && text.contains("average_precision"));
    }
}
