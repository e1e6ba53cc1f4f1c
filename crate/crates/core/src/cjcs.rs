//! Confidence-diversity joint cache selection.
//!
//! Each interaction class owns a bounded queue of cached samples. A new
//! sample joins the queue of its pseudo-label, every member of the enlarged
//! set is re-scored (diversity depends on the whole set, and confidence is
//! normalised by the set's maximum entropy), and the best `K` survive.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::AdcConfig;
use crate::error::{AdcError, Result};
use crate::exec::{self, ExecMode};
use crate::faca::{self, FrequencyTable};
use crate::numeric::{
    self, l2_normalize, ClassSpace, FeatureVector, InteractionClass, LogitVector, ProbVector,
};
use crate::seed;

/// One cached sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    /// Stored L2-normalised.
    pub feature: FeatureVector,
    pub logits: LogitVector,
    /// `softmax(logits)`.
    pub probs: ProbVector,
    /// `entropy(probs)`, kept alongside to avoid recomputation.
    pub entropy: f64,
    pub diversity: f64,
    pub confidence: f64,
    pub joint_score: f64,
    pub seq: u64,
    pub augmented: bool,
}

impl CacheEntry {
    pub fn new(feature: &FeatureVector, logits: LogitVector, seq: u64) -> Self {
        let probs = numeric::softmax(&logits);
        let entropy = numeric::entropy(&probs);
        Self {
            feature: l2_normalize(feature).feature,
            logits,
            probs,
            entropy,
            diversity: 0.0,
            confidence: 0.0,
            joint_score: 0.0,
            seq,
            augmented: false,
        }
    }

    /// Flat index of the class this entry votes for at retrieval.
    pub fn label(&self) -> usize {
        numeric::pseudo_label(&self.logits)
    }
}

/// Queue order: joint score descending, newer entries first on ties.
pub fn queue_order(a: &CacheEntry, b: &CacheEntry) -> Ordering {
    b.joint_score
        .total_cmp(&a.joint_score)
        .then_with(|| b.seq.cmp(&a.seq))
}

/// Bounded priority queue of one interaction class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassQueue {
    pub class: InteractionClass,
    pub entries: Vec<CacheEntry>,
    pub capacity: usize,
}

impl ClassQueue {
    pub fn new(class: InteractionClass, capacity: usize) -> Self {
        Self {
            class,
            entries: Vec::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn pair_term(a: &[f64], b: &[f64], bandwidth: f64) -> f64 {
    (1.0 - numeric::cosine(a, b)) * (-bandwidth * numeric::squared_distance(a, b)).exp()
}

fn diversity_denominator(len: usize, exclusive: bool) -> f64 {
    if exclusive && len > 1 {
        (len - 1) as f64
    } else {
        len as f64
    }
}

/// Diversity of member `k` within `features`: cosine dissimilarity damped by a
/// Gaussian of the Euclidean distance, summed over the other members and
/// divided by the full set size.
pub fn diversity_score(k: usize, temp: &[CacheEntry], bandwidth: f64) -> f64 {
    let features: Vec<&[f64]> = temp.iter().map(|e| e.feature.as_slice()).collect();
    diversity_of(k, &features, bandwidth, false)
}

pub(crate) fn diversity_of(k: usize, features: &[&[f64]], bandwidth: f64, exclusive: bool) -> f64 {
    let sum: f64 = features
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, f)| pair_term(features[k], f, bandwidth))
        .sum();
    sum / diversity_denominator(features.len(), exclusive)
}

/// `1 - H(p_k) / max_j H(p_j)`; one for every member when all entropies vanish.
pub fn confidence_score(k: usize, temp: &[CacheEntry]) -> f64 {
    let entropies: Vec<f64> = temp.iter().map(|e| e.entropy).collect();
    confidence_of(k, &entropies)
}

pub(crate) fn confidence_of(k: usize, entropies: &[f64]) -> f64 {
    let max = entropies.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        1.0
    } else {
        1.0 - entropies[k] / max
    }
}

pub fn joint_score(s_div: f64, s_conf: f64, tau: f64) -> f64 {
    tau * s_div + (1.0 - tau) * s_conf
}

fn combine(s_div: f64, s_conf: f64, cfg: &AdcConfig) -> f64 {
    if cfg.use_diversity {
        joint_score(s_div, s_conf, cfg.tau)
    } else {
        s_conf
    }
}

/// Re-scores every entry of `set` in place against the whole set.
pub(crate) fn rescore(set: &mut [CacheEntry], cfg: &AdcConfig) {
    let m = set.len();
    let mut div = vec![0.0; m];
    for i in 0..m {
        for j in i + 1..m {
            let t = pair_term(
                set[i].feature.as_slice(),
                set[j].feature.as_slice(),
                cfg.bandwidth,
            );
            div[i] += t;
            div[j] += t;
        }
    }
    let denom = diversity_denominator(m, cfg.diversity_exclusive_denominator);
    let max_h = set.iter().map(|e| e.entropy).fold(0.0, f64::max);
    for (e, d) in set.iter_mut().zip(div) {
        e.diversity = d / denom;
        e.confidence = if max_h <= 0.0 {
            1.0
        } else {
            1.0 - e.entropy / max_h
        };
        e.joint_score = combine(e.diversity, e.confidence, cfg);
    }
}

/// Scores a would-be member against an existing set without touching the set.
pub(crate) fn score_candidate(
    existing: &[CacheEntry],
    feature: &[f64],
    entropy: f64,
    cfg: &AdcConfig,
) -> (f64, f64, f64) {
    let sum: f64 = existing
        .iter()
        .map(|e| pair_term(feature, e.feature.as_slice(), cfg.bandwidth))
        .sum();
    let diversity =
        sum / diversity_denominator(existing.len() + 1, cfg.diversity_exclusive_denominator);
    let max_h = existing.iter().map(|e| e.entropy).fold(entropy, f64::max);
    let confidence = if max_h <= 0.0 {
        1.0
    } else {
        1.0 - entropy / max_h
    };
    (diversity, confidence, combine(diversity, confidence, cfg))
}

/// Per-class queues plus the running frequency table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheState {
    pub space: ClassSpace,
    pub dim: usize,
    /// Indexed by flat class index.
    pub queues: Vec<ClassQueue>,
    pub freq: FrequencyTable,
    pub global_seq: u64,
}

/// Per-entry line of the cache snapshot export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub class_index: usize,
    pub joint_score: f64,
    pub seq: u64,
    pub augmented: bool,
    pub feature: Vec<f64>,
}

impl CacheState {
    pub fn new(space: ClassSpace, dim: usize, freq: FrequencyTable) -> Result<Self> {
        if freq.counts.len() != space.n_classes() {
            return Err(AdcError::Dimension {
                what: "frequency table",
                expected: space.n_classes(),
                got: freq.counts.len(),
            });
        }
        if dim == 0 {
            return Err(AdcError::RejectedInput(
                "feature dimension must be positive".into(),
            ));
        }
        let queues = (0..space.n_classes())
            .map(|c| ClassQueue::new(space.class_of(c), 0))
            .collect();
        Ok(Self {
            space,
            dim,
            queues,
            freq,
            global_seq: 0,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.space.n_classes()
    }

    pub fn queue(&self, class: InteractionClass) -> &ClassQueue {
        &self.queues[self.space.flat(class)]
    }

    pub fn total_entries(&self) -> usize {
        self.queues.iter().map(ClassQueue::len).sum()
    }

    /// Mean joint score over every cached entry; zero for an empty cache.
    pub fn mean_joint_score(&self) -> f64 {
        let (sum, n) = self
            .queues
            .iter()
            .flat_map(|q| &q.entries)
            .fold((0.0, 0usize), |(s, n), e| (s + e.joint_score, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Inserts a sample under its pseudo-label and keeps the top entries of
    /// that class. Returns the pseudo-label.
    pub fn update(
        &mut self,
        feature: &FeatureVector,
        logits: &LogitVector,
        cfg: &AdcConfig,
    ) -> Result<InteractionClass> {
        if feature.dim() != self.dim {
            return Err(AdcError::Dimension {
                what: "feature",
                expected: self.dim,
                got: feature.dim(),
            });
        }
        if logits.len() != self.n_classes() {
            return Err(AdcError::Dimension {
                what: "logits",
                expected: self.n_classes(),
                got: logits.len(),
            });
        }
        let label = numeric::pseudo_label(logits);
        let entry = CacheEntry::new(feature, logits.clone(), self.global_seq);
        self.global_seq += 1;

        self.freq.observe(label);
        let k_final = faca::capacity(label, &self.freq, cfg);

        let queue = &mut self.queues[label];
        let mut temp = std::mem::take(&mut queue.entries);
        temp.push(entry);
        rescore(&mut temp, cfg);
        temp.sort_by(queue_order);
        temp.truncate(k_final);
        queue.entries = temp;
        queue.capacity = k_final;
        Ok(self.space.class_of(label))
    }

    /// Tops up every non-empty queue that is below its current capacity with
    /// augmented variants. `round` keys the random streams so repeated
    /// completions draw fresh variants. Returns the number of entries added.
    pub fn complete_all(&mut self, cfg: &AdcConfig, round: u64, mode: ExecMode) -> usize {
        let round_seed = seed::derive(cfg.seed, "complete", round);
        let targets: Vec<(usize, usize)> = (0..self.n_classes())
            .filter(|&c| !self.queues[c].is_empty())
            .map(|c| (c, faca::capacity(c, &self.freq, cfg)))
            .filter(|&(c, k)| k > self.queues[c].len())
            .collect();
        let queues = &self.queues;
        let additions = exec::map_slice(mode, &targets, |&(c, k)| {
            faca::completion_variants(
                &queues[c],
                k,
                cfg,
                seed::derive(round_seed, "class", c as u64),
            )
        });
        let mut added = 0;
        for (&(c, k), variants) in targets.iter().zip(additions) {
            added += variants.len();
            faca::append_variants(&mut self.queues[c], variants, k, &mut self.global_seq);
        }
        added
    }

    /// Every cached entry as an export record, in class then queue order.
    pub fn snapshot(&self) -> Vec<SnapshotRecord> {
        self.queues
            .iter()
            .enumerate()
            .flat_map(|(c, q)| {
                q.entries.iter().map(move |e| SnapshotRecord {
                    class_index: c,
                    joint_score: e.joint_score,
                    seq: e.seq,
                    augmented: e.augmented,
                    feature: e.feature.as_slice().to_vec(),
                })
            })
            .collect()
    }

    pub fn write_snapshot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for rec in self.snapshot() {
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| AdcError::io(path, e))?;
        self.write_snapshot(std::io::BufWriter::new(file))
            .map_err(|e| AdcError::io(path, e))
    }
}
