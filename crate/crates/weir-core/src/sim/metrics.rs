//! Run-level metrics: traffic, energy ledger, resolution counts, and
//! classification quality against labeled frames.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityScore {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub slots: u64,
    pub frames_total: u64,
    pub frames_routine: u64,
    pub frames_insight: u64,
    /// Insight frames over all frames; 0 when the stream is empty.
    pub insight_rate: f64,
    pub packets_sent: u64,
    pub packets_dropped: u64,
    pub queue_len_final: u64,
    pub bytes_observed: u64,
    pub bytes_uplinked: u64,
    /// Uplinked over observed payload bytes; 0 when nothing was observed.
    pub uplink_fraction: f64,
    pub energy_harvested_wh: f64,
    /// Harvest lost to a full battery.
    pub energy_wasted_wh: f64,
    pub energy_base_load_wh: f64,
    pub energy_tx_wh: f64,
    pub energy_link_wh: f64,
    /// Nominal load the battery could not supply (hit empty).
    pub energy_unmet_wh: f64,
    pub soc_initial_wh: f64,
    pub soc_final_wh: f64,
    pub min_soc_wh: f64,
    /// Fraction of slots ending strictly below the critical threshold.
    pub lolp: f64,
    pub lolp_threshold_wh: f64,
    pub resolutions_master: u64,
    pub resolutions_expert: u64,
    pub resolutions_anomaly: u64,
    pub patches_delivered: u64,
    pub patches_pending_final: u64,
    pub evictions: u64,
    pub labeled_frames: u64,
    pub correct_predictions: u64,
    /// Correct over labeled; an insight frame predicts nothing and counts
    /// as incorrect here.
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_entity: BTreeMap<String, EntityScore>,
}

impl RunMetrics {
    /// Closed energy ledger: everything the battery took in minus
    /// everything it gave out must land on the final state of charge.
    pub fn energy_ledger_residual(&self) -> f64 {
        self.soc_initial_wh + self.energy_harvested_wh
            - self.energy_wasted_wh
            - (self.energy_base_load_wh + self.energy_tx_wh + self.energy_link_wh
                - self.energy_unmet_wh)
            - self.soc_final_wh
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Score labeled frames. Each element pairs the true entity with the
/// station's prediction (None when the frame became an insight, which
/// counts as a miss for the true class). Returns per-entity scores over
/// every class seen as truth or prediction, plus the macro-averaged F1 and
/// the raw correct count.
pub fn score_entities(
    labeled: &[(String, Option<String>)],
) -> (BTreeMap<String, EntityScore>, f64, u64) {
    let mut tallies: BTreeMap<String, (u64, u64, u64)> = BTreeMap::new();
    let mut correct = 0u64;
    for (truth, predicted) in labeled {
        tallies.entry(truth.clone()).or_default();
        if let Some(p) = predicted {
            tallies.entry(p.clone()).or_default();
        }
        match predicted {
            Some(p) if p == truth => {
                tallies.get_mut(truth).unwrap().0 += 1;
                correct += 1;
            }
            Some(p) => {
                tallies.get_mut(p).unwrap().1 += 1;
                tallies.get_mut(truth).unwrap().2 += 1;
            }
            None => tallies.get_mut(truth).unwrap().2 += 1,
        }
    }
    let mut per_entity = BTreeMap::new();
    let mut f1_sum = 0.0;
    for (entity, (tp, fp, fn_)) in &tallies {
        let precision = ratio(*tp, tp + fp);
        let recall = ratio(*tp, tp + fn_);
        let f1 = safe_div(2.0 * precision * recall, precision + recall);
        f1_sum += f1;
        per_entity.insert(
            entity.clone(),
            EntityScore {
                true_positives: *tp,
                false_positives: *fp,
                false_negatives: *fn_,
                precision,
                recall,
                f1,
            },
        );
    }
    let macro_f1 = safe_div(f1_sum, per_entity.len() as f64);
    (per_entity, macro_f1, correct)
}

pub(crate) fn fraction(num: u64, den: u64) -> f64 {
    ratio(num, den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn l(truth: &str, pred: Option<&str>) -> (String, Option<String>) {
        (truth.to_string(), pred.map(|p| p.to_string()))
    }

    #[test]
    fn perfect_predictions_score_one() {
        let labeled = vec![l("a", Some("a")), l("b", Some("b")), l("a", Some("a"))];
        let (per, macro_f1, correct) = score_entities(&labeled);
        assert_eq!(correct, 3);
        assert_eq!(macro_f1, 1.0);
        assert_eq!(per["a"].true_positives, 2);
        assert_eq!(per["a"].f1, 1.0);
    }

    #[test]
    fn misses_and_confusions_tally_per_class() {
        // Truth a predicted b: fp for b, fn for a. Insight on b: fn for b.
        let labeled = vec![l("a", Some("b")), l("b", None), l("b", Some("b"))];
        let (per, macro_f1, correct) = score_entities(&labeled);
        assert_eq!(correct, 1);
        assert_eq!(per["a"].false_negatives, 1);
        assert_eq!(per["a"].f1, 0.0);
        assert_eq!(per["b"].true_positives, 1);
        assert_eq!(per["b"].false_positives, 1);
        assert_eq!(per["b"].false_negatives, 1);
        assert_abs_diff_eq!(per["b"].precision, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(per["b"].recall, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(per["b"].f1, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(macro_f1, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn predicted_only_classes_enter_the_average() {
        // "ghost" never appears as truth but was predicted once.
        let labeled = vec![l("a", Some("ghost")), l("a", Some("a"))];
        let (per, macro_f1, _) = score_entities(&labeled);
        assert!(per.contains_key("ghost"));
        assert_eq!(per["ghost"].f1, 0.0);
        let expected = (per["a"].f1 + 0.0) / 2.0;
        assert_abs_diff_eq!(macro_f1, expected, epsilon = 1e-12);
    }

    #[test]
    fn empty_labels_score_zero_without_panicking() {
        let (per, macro_f1, correct) = score_entities(&[]);
        assert!(per.is_empty());
        assert_eq!(macro_f1, 0.0);
        assert_eq!(correct, 0);
    }
}
