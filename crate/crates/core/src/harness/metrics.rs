//! Ranking average precision and the full / rare / non-rare split.

use serde::{Deserialize, Serialize};

use crate::config::RareRule;
use crate::error::{AdcError, Result};
use crate::exec::{self, ExecMode};
use crate::harness::records::PredictionRecord;
use crate::numeric::LogitVector;

/// Average precision of `scores` against `positives`: rank by descending
/// score (earlier index first on ties) and average precision@k over the
/// ranks of the positives. `None` without positives.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positives.len());
    let n_pos = positives.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if positives[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
            if hits == n_pos {
                break;
            }
        }
    }
    Some(sum / n_pos as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: u64,
    pub mean_joint_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map_full: f64,
    /// Absent when no rare class has a ground-truth instance.
    pub map_rare: Option<f64>,
    pub map_nonrare: Option<f64>,
    /// `None` for classes without ground-truth instances.
    pub per_class_ap: Vec<Option<f64>>,
    /// Ground-truth instances per class among evaluated records.
    pub class_counts: Vec<u64>,
    pub rare_mask: Vec<bool>,
    /// Classes left out of every mean for lack of positives.
    pub excluded_classes: Vec<usize>,
    pub n_evaluated: usize,
    pub quality_trace: Vec<TracePoint>,
    /// Wall-clock time; kept out of the serialised report so reruns compare byte-for-byte.
    #[serde(skip)]
    pub runtime_ms: u128,
}

/// Marks rare classes from per-class frequencies.
pub fn rare_mask(freq: &[u64], rule: RareRule, threshold: u64) -> Vec<bool> {
    match rule {
        RareRule::Threshold => freq.iter().map(|&n| n < threshold).collect(),
        RareRule::BottomQuartile => {
            let mut order: Vec<usize> = (0..freq.len()).collect();
            // Least frequent first; among equals the later index counts as rarer.
            order.sort_by(|&a, &b| freq[a].cmp(&freq[b]).then(b.cmp(&a)));
            let mut mask = vec![false; freq.len()];
            for &c in order.iter().take(freq.len() / 4) {
                mask[c] = true;
            }
            mask
        }
    }
}

fn mean_where(ap: &[Option<f64>], keep: impl Fn(usize) -> bool) -> Option<f64> {
    let vals: Vec<f64> = ap
        .iter()
        .enumerate()
        .filter(|&(c, _)| keep(c))
        .filter_map(|(_, a)| *a)
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// How to split classes into rare and non-rare.
#[derive(Debug, Clone, PartialEq)]
pub struct RareSplit {
    /// Frequencies behind the split; `None` uses the ground-truth counts of
    /// the evaluated records.
    pub freq: Option<Vec<u64>>,
    pub rule: RareRule,
    pub threshold: u64,
}

/// One-vs-rest AP per class over the records that carry ground truth.
pub fn build_report(
    final_logits: &[LogitVector],
    records: &[PredictionRecord],
    n_classes: usize,
    split: &RareSplit,
    quality_trace: Vec<TracePoint>,
    mode: ExecMode,
) -> Result<EvalReport> {
    if final_logits.len() != records.len() {
        return Err(AdcError::Dimension {
            what: "final logits",
            expected: records.len(),
            got: final_logits.len(),
        });
    }
    let labelled: Vec<(usize, &LogitVector)> = records
        .iter()
        .zip(final_logits)
        .filter_map(|(r, l)| r.gt_class.map(|gt| (gt, l)))
        .collect();
    if labelled.is_empty() {
        return Err(AdcError::EvaluationUnavailable);
    }

    let mut class_counts = vec![0u64; n_classes];
    for &(gt, _) in &labelled {
        class_counts[gt] += 1;
    }
    let per_class_ap = exec::map_range(mode, n_classes, |c| {
        let scores: Vec<f64> = labelled.iter().map(|(_, l)| l.as_slice()[c]).collect();
        let positives: Vec<bool> = labelled.iter().map(|&(gt, _)| gt == c).collect();
        average_precision(&scores, &positives)
    });
    let excluded_classes: Vec<usize> = (0..n_classes)
        .filter(|&c| per_class_ap[c].is_none())
        .collect();
    let mask = rare_mask(
        split.freq.as_deref().unwrap_or(&class_counts),
        split.rule,
        split.threshold,
    );
    let map_full = mean_where(&per_class_ap, |_| true).expect("labelled records imply a positive");
    Ok(EvalReport {
        map_full,
        map_rare: mean_where(&per_class_ap, |c| mask[c]),
        map_nonrare: mean_where(&per_class_ap, |c| !mask[c]),
        per_class_ap,
        class_counts,
        rare_mask: mask,
        excluded_classes,
        n_evaluated: labelled.len(),
        quality_trace,
        runtime_ms: 0,
    })
}
