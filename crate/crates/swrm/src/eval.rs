//! Regression-to-sentiment evaluation: two-class accuracies and weighted
//! F1 under both zero-label conventions, mean absolute error (also on the
//! conventional ×100 scale), and Pearson correlation.

use serde::{Deserialize, Serialize};

use crate::error::SwrmError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Negative vs non-negative over all samples (zero labels count as
    /// non-negative).
    pub has0_acc: f64,
    pub has0_f1: f64,
    /// Negative vs positive over samples with nonzero labels.
    pub non0_acc: f64,
    pub non0_f1: f64,
    pub mae: f64,
    /// Mean absolute error × 100, the scale results tables use.
    pub mae_x100: f64,
    /// Pearson correlation; 0 when either sequence is constant.
    pub corr: f64,
}

/// Weighted-average F1 over the two classes, weights = gold support.
/// Classes with degenerate precision/recall denominators score 0.
fn weighted_f1(gold: &[bool], pred: &[bool]) -> f64 {
    debug_assert_eq!(gold.len(), pred.len());
    let total = gold.len() as f64;
    let mut weighted = 0.0;
    for class in [true, false] {
        let support = gold.iter().filter(|&&g| g == class).count();
        if support == 0 {
            continue;
        }
        let tp = gold
            .iter()
            .zip(pred.iter())
            .filter(|&(&g, &p)| g == class && p == class)
            .count() as f64;
        let predicted = pred.iter().filter(|&&p| p == class).count() as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = tp / support as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        weighted += support as f64 * f1;
    }
    weighted / total
}

fn accuracy(gold: &[bool], pred: &[bool]) -> f64 {
    let hits = gold.iter().zip(pred.iter()).filter(|&(g, p)| g == p).count();
    hits as f64 / gold.len() as f64
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&x, &y) in xs.iter().zip(ys.iter()) {
        cov += (x - mean_x) * (y - mean_y);
        var_x += (x - mean_x).powi(2);
        var_y += (y - mean_y).powi(2);
    }
    if var_x == 0.0 || var_y == 0.0 {
        log::warn!("correlation undefined for a constant sequence, reporting 0");
        return 0.0;
    }
    cov / (var_x.sqrt() * var_y.sqrt())
}

/// Compute every report field from raw predicted and gold scores.
pub fn compute_metrics(preds: &[f64], labels: &[f64]) -> Result<MetricsReport, SwrmError> {
    if preds.len() != labels.len() {
        return Err(SwrmError::Metric(format!(
            "got {} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(SwrmError::Metric("no samples to evaluate".into()));
    }

    // All samples; negative vs non-negative on both sides.
    let has0_gold: Vec<bool> = labels.iter().map(|&l| l >= 0.0).collect();
    let has0_pred: Vec<bool> = preds.iter().map(|&p| p >= 0.0).collect();
    let has0_acc = accuracy(&has0_gold, &has0_pred);
    let has0_f1 = weighted_f1(&has0_gold, &has0_pred);

    // Nonzero labels only; a prediction of exactly 0 counts as positive.
    let nonzero: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != 0.0)
        .map(|(i, _)| i)
        .collect();
    let (non0_acc, non0_f1) = if nonzero.is_empty() {
        log::warn!("all labels are zero; negative-vs-positive metrics reported as 0");
        (0.0, 0.0)
    } else {
        let gold: Vec<bool> = nonzero.iter().map(|&i| labels[i] > 0.0).collect();
        let pred: Vec<bool> = nonzero.iter().map(|&i| preds[i] >= 0.0).collect();
        (accuracy(&gold, &pred), weighted_f1(&gold, &pred))
    };

    let mae = preds
        .iter()
        .zip(labels.iter())
        .map(|(p, l)| (p - l).abs())
        .sum::<f64>()
        / preds.len() as f64;

    Ok(MetricsReport {
        has0_acc,
        has0_f1,
        non0_acc,
        non0_f1,
        mae,
        mae_x100: 100.0 * mae,
        corr: pearson(preds, labels),
    })
}

/// Negative-vs-positive misclassification rate inside each stratum of the
/// boolean split (samples with zero labels are skipped, as in the Non0
/// view). A stratum with no scorable samples reports `None`.
pub fn stratified_misclassification(
    preds: &[f64],
    labels: &[f64],
    strata: &[bool],
) -> Result<(Option<f64>, Option<f64>), SwrmError> {
    if preds.len() != labels.len() || labels.len() != strata.len() {
        return Err(SwrmError::Metric(format!(
            "stratified inputs disagree on length: {} predictions, {} labels, {} flags",
            preds.len(),
            labels.len(),
            strata.len()
        )));
    }
    let rate_in = |wanted: bool| {
        let mut total = 0usize;
        let mut wrong = 0usize;
        for ((&p, &l), &flag) in preds.iter().zip(labels.iter()).zip(strata.iter()) {
            if flag != wanted || l == 0.0 {
                continue;
            }
            total += 1;
            if (p >= 0.0) != (l > 0.0) {
                wrong += 1;
            }
        }
        (total > 0).then(|| wrong as f64 / total as f64)
    };
    Ok((rate_in(true), rate_in(false)))
}

/// Field-wise mean of several reports, for multi-seed summaries.
pub fn mean_report(reports: &[MetricsReport]) -> Option<MetricsReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let sum = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Some(MetricsReport {
        has0_acc: sum(|r| r.has0_acc),
        has0_f1: sum(|r| r.has0_f1),
        non0_acc: sum(|r| r.non0_acc),
        non0_f1: sum(|r| r.non0_f1),
        mae: sum(|r| r.mae),
        mae_x100: sum(|r| r.mae_x100),
        corr: sum(|r| r.corr),
    })
}

/// Render reports as an aligned table in the conventional column order,
/// accuracies/F1/correlation on the ×100 scale alongside mae_x100.
pub fn metrics_table(rows: &[(String, MetricsReport)]) -> String {
    let mut out = String::new();
    let name_width = rows
        .iter()
        .map(|(name, _)| name.len())
        .chain(std::iter::once("run".len()))
        .max()
        .unwrap_or(3);
    out.push_str(&format!(
        "{:<name_width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}\n",
        "run", "Has0-Acc", "Has0-F1", "Non0-Acc", "Non0-F1", "MAE", "Corr"
    ));
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<name_width$}  {:>8.2}  {:>8.2}  {:>8.2}  {:>8.2}  {:>8.2}  {:>8.2}\n",
            name,
            100.0 * r.has0_acc,
            100.0 * r.has0_f1,
            100.0 * r.non0_acc,
            100.0 * r.non0_f1,
            r.mae_x100,
            100.0 * r.corr,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictions_score_perfectly() {
        let labels = [1.0, -2.0, 0.5, 2.5, -0.5];
        let r = compute_metrics(&labels, &labels).unwrap();
        assert_eq!(r.has0_acc, 1.0);
        assert_eq!(r.has0_f1, 1.0);
        assert_eq!(r.non0_acc, 1.0);
        assert_eq!(r.non0_f1, 1.0);
        assert_eq!(r.mae_x100, 0.0);
        assert!((r.corr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_sample_worked_example() {
        let preds = [-1.0, 1.0, 0.5];
        let labels = [-2.0, 1.0, -0.5];
        let r = compute_metrics(&preds, &labels).unwrap();
        assert!((r.mae_x100 - 66.67).abs() < 0.01);
        assert!((r.non0_acc - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.mae - r.mae_x100 / 100.0).abs() < 1e-12);
    }

    #[test]
    fn zero_prediction_counts_as_positive() {
        let r = compute_metrics(&[0.0], &[1.0]).unwrap();
        assert_eq!(r.non0_acc, 1.0);
        let r = compute_metrics(&[0.0], &[-1.0]).unwrap();
        assert_eq!(r.non0_acc, 0.0);
    }

    #[test]
    fn zero_labels_are_nonnegative_in_the_has0_view() {
        // Two samples: a zero label scored non-negative, a negative one
        // scored negative. Only the first survives... no: has0 keeps both.
        let preds = [0.3, -0.7];
        let labels = [0.0, -1.0];
        let r = compute_metrics(&preds, &labels).unwrap();
        assert_eq!(r.has0_acc, 1.0);
        // The Non0 view drops the zero label.
        assert_eq!(r.non0_acc, 1.0);
    }

    #[test]
    fn all_zero_labels_degrade_gracefully() {
        let r = compute_metrics(&[0.5, -0.5], &[0.0, 0.0]).unwrap();
        assert_eq!(r.non0_acc, 0.0);
        assert_eq!(r.non0_f1, 0.0);
        assert_eq!(r.has0_acc, 0.5);
    }

    #[test]
    fn weighted_f1_matches_a_hand_computed_confusion_matrix() {
        // Gold [+,+,+,−], pred [+,−,+,+]: positive class F1 = 2/3 with
        // support 3, negative class F1 = 0 with support 1 → weighted 0.5.
        let preds = [1.0, -1.0, 1.0, 1.0];
        let labels = [1.0, 1.0, 1.0, -1.0];
        let r = compute_metrics(&preds, &labels).unwrap();
        assert!((r.has0_f1 - 0.5).abs() < 1e-12);
        assert!((r.non0_f1 - 0.5).abs() < 1e-12);
        assert_eq!(r.has0_acc, 0.5);
    }

    #[test]
    fn mismatched_or_empty_inputs_are_metric_errors() {
        assert!(matches!(
            compute_metrics(&[1.0], &[1.0, 2.0]),
            Err(SwrmError::Metric(_))
        ));
        assert!(matches!(compute_metrics(&[], &[]), Err(SwrmError::Metric(_))));
    }

    #[test]
    fn metrics_ignore_sample_order() {
        let preds = [0.5, -1.5, 2.0, 0.0, -0.25];
        let labels = [1.0, -2.0, 1.5, -0.5, 0.0];
        let a = compute_metrics(&preds, &labels).unwrap();
        let order = [4, 2, 0, 3, 1];
        let preds_p: Vec<f64> = order.iter().map(|&i| preds[i]).collect();
        let labels_p: Vec<f64> = order.iter().map(|&i| labels[i]).collect();
        let b = compute_metrics(&preds_p, &labels_p).unwrap();
        // Counting metrics are exactly order-free; the summed ones only up
        // to floating-point reassociation.
        assert_eq!(a.has0_acc, b.has0_acc);
        assert_eq!(a.has0_f1, b.has0_f1);
        assert_eq!(a.non0_acc, b.non0_acc);
        assert_eq!(a.non0_f1, b.non0_f1);
        assert!((a.mae_x100 - b.mae_x100).abs() < 1e-12);
        assert!((a.corr - b.corr).abs() < 1e-12);
    }

    #[test]
    fn uniform_overprediction_shifts_mae_by_its_size() {
        let labels = [1.0, -0.5, 0.25, 2.0];
        let preds: Vec<f64> = labels.iter().map(|l| l + 0.5).collect();
        let base = compute_metrics(&preds, &labels).unwrap();
        let shifted: Vec<f64> = preds.iter().map(|p| p + 0.3).collect();
        let moved = compute_metrics(&shifted, &labels).unwrap();
        assert!((moved.mae_x100 - base.mae_x100 - 30.0).abs() < 1e-9);
    }

    #[test]
    fn correlation_survives_positive_affine_transforms() {
        let preds = [0.1, -0.4, 0.9, 0.3, -0.8];
        let labels = [0.2, -0.3, 1.1, 0.5, -0.9];
        let base = compute_metrics(&preds, &labels).unwrap().corr;
        let scaled: Vec<f64> = preds.iter().map(|p| 3.7 * p + 11.0).collect();
        let transformed = compute_metrics(&scaled, &labels).unwrap().corr;
        assert!((base - transformed).abs() < 1e-12);
    }

    #[test]
    fn constant_sequences_have_zero_correlation() {
        let r = compute_metrics(&[0.5, 0.5, 0.5], &[1.0, -1.0, 0.5]).unwrap();
        assert_eq!(r.corr, 0.0);
        let r = compute_metrics(&[1.0, -1.0, 0.5], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(r.corr, 0.0);
    }

    /// Independent recount: classify every sample from scratch and rebuild
    /// accuracy from the confusion matrix.
    fn recount_accuracies(preds: &[f64], labels: &[f64]) -> (f64, f64) {
        let mut has0_hits = 0usize;
        let mut non0_hits = 0usize;
        let mut non0_total = 0usize;
        for (&p, &l) in preds.iter().zip(labels.iter()) {
            if (p >= 0.0) == (l >= 0.0) {
                has0_hits += 1;
            }
            if l != 0.0 {
                non0_total += 1;
                if (p >= 0.0) == (l > 0.0) {
                    non0_hits += 1;
                }
            }
        }
        (
            has0_hits as f64 / preds.len() as f64,
            non0_hits as f64 / non0_total.max(1) as f64,
        )
    }

    #[test]
    fn accuracies_match_a_confusion_recount_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let n = rng.gen_range(1..40);
            let preds: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let labels: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.gen_bool(0.1) {
                        0.0
                    } else {
                        rng.gen_range(-3.0..3.0)
                    }
                })
                .collect();
            let r = compute_metrics(&preds, &labels).unwrap();
            let (has0, non0) = recount_accuracies(&preds, &labels);
            assert!((r.has0_acc - has0).abs() < 1e-9);
            if labels.iter().any(|&l| l != 0.0) {
                assert!((r.non0_acc - non0).abs() < 1e-9);
            }
            // The negative-vs-positive view never has more samples.
            assert!(r.non0_acc <= 1.0 && r.has0_acc <= 1.0);
        }
    }

    #[test]
    fn stratified_rates_on_a_controlled_split() {
        // Stratum A: one wrong of two scorable; stratum B: zero wrong of
        // one (its zero label is skipped).
        let preds = [1.0, -1.0, 1.0, 0.5];
        let labels = [1.0, 1.0, 1.0, 0.0];
        let strata = [true, true, false, false];
        let (with, without) =
            stratified_misclassification(&preds, &labels, &strata).unwrap();
        assert_eq!(with, Some(0.5));
        assert_eq!(without, Some(0.0));
    }

    #[test]
    fn all_correct_predictions_have_zero_rates() {
        let preds = [1.0, -1.0];
        let labels = [2.0, -2.0];
        let (with, without) =
            stratified_misclassification(&preds, &labels, &[true, false]).unwrap();
        assert_eq!(with, Some(0.0));
        assert_eq!(without, Some(0.0));
    }

    #[test]
    fn degenerate_strata_report_none() {
        let preds = [1.0, -1.0];
        let labels = [1.0, -2.0];
        let (with, without) =
            stratified_misclassification(&preds, &labels, &[true, true]).unwrap();
        assert!(with.is_some());
        assert_eq!(without, None);
        // Zero labels alone cannot be scored either.
        let (with, _) =
            stratified_misclassification(&[0.5], &[0.0], &[true]).unwrap();
        assert_eq!(with, None);
    }

    #[test]
    fn uniform_strata_reproduce_the_overall_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 60;
        let preds: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let labels: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let overall = 1.0 - compute_metrics(&preds, &labels).unwrap().non0_acc;
        let (with, _) =
            stratified_misclassification(&preds, &labels, &vec![true; n]).unwrap();
        assert!((with.unwrap() - overall).abs() < 1e-9);
    }

    #[test]
    fn stratified_matches_a_brute_force_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let n = rng.gen_range(1..30);
            let preds: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let labels: Vec<f64> = (0..n)
                .map(|_| if rng.gen_bool(0.15) { 0.0 } else { rng.gen_range(-2.0..2.0) })
                .collect();
            let strata: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            let (with, without) =
                stratified_misclassification(&preds, &labels, &strata).unwrap();
            for (wanted, got) in [(true, with), (false, without)] {
                let mut total = 0;
                let mut wrong = 0;
                for i in 0..n {
                    if strata[i] == wanted && labels[i] != 0.0 {
                        total += 1;
                        if (preds[i] >= 0.0) != (labels[i] > 0.0) {
                            wrong += 1;
                        }
                    }
                }
                match got {
                    None => assert_eq!(total, 0),
                    Some(rate) => {
                        assert!((rate - wrong as f64 / total as f64).abs() < 1e-12)
                    }
                }
            }
        }
    }

    #[test]
    fn mean_report_averages_every_field() {
        let a = compute_metrics(&[1.0, -1.0], &[1.0, -1.0]).unwrap();
        let b = compute_metrics(&[1.0, 1.0], &[1.0, -1.0]).unwrap();
        let mean = mean_report(&[a, b]).unwrap();
        assert!((mean.has0_acc - (a.has0_acc + b.has0_acc) / 2.0).abs() < 1e-12);
        assert!((mean.mae_x100 - (a.mae_x100 + b.mae_x100) / 2.0).abs() < 1e-12);
        assert!(mean_report(&[]).is_none());
    }

    #[test]
    fn table_mirrors_the_conventional_column_order() {
        let r = compute_metrics(&[-1.0, 1.0, 0.5], &[-2.0, 1.0, -0.5]).unwrap();
        let table = metrics_table(&[("seed-1111".into(), r)]);
        let header_cols: Vec<&str> = table.lines().next().unwrap().split_whitespace().collect();
        assert_eq!(
            header_cols,
            ["run", "Has0-Acc", "Has0-F1", "Non0-Acc", "Non0-F1", "MAE", "Corr"]
        );
        assert!(table.contains("66.67"));
    }
}
