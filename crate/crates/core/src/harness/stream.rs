//! Synthetic long-tailed prediction streams.
//!
//! Class frequencies follow a Zipf law over the flat class index (index 0 is
//! the head). Every class has a fixed unit prototype built from a shared
//! per-object anchor plus a class-specific direction, so verbs of the same
//! object are close while objects are roughly orthogonal. The simulated base
//! model scores each class by cosine similarity to its prototype. A
//! `label_noise` fraction of samples is mislabelled towards frequent
//! classes, which is the long-tail bias the cache is meant to undo.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{AdcError, Result};
use crate::exec::{self, ExecMode};
use crate::harness::records::{PredictionRecord, RecordHeader};
use crate::numeric::{self, ClassSpace, FeatureVector, LogitVector};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamSpec {
    /// Optional; must equal `n_objects * n_verbs` when given.
    pub n_classes: Option<usize>,
    pub n_objects: usize,
    pub n_verbs: usize,
    pub dim: usize,
    pub n_samples: usize,
    pub zipf_exponent: f64,
    /// Weight of the class-specific direction against the shared object anchor.
    pub prototype_separation: f64,
    /// Standard deviation of the isotropic noise added to a prototype, before
    /// re-normalisation, measured relative to the unit prototype norm.
    pub feature_noise: f64,
    pub label_noise: f64,
    pub base_model_temperature: f64,
    pub seed: u64,
}

impl Default for StreamSpec {
    fn default() -> Self {
        Self {
            n_classes: None,
            n_objects: 10,
            n_verbs: 10,
            dim: 32,
            n_samples: 20_000,
            zipf_exponent: 1.5,
            prototype_separation: 1.0,
            feature_noise: 0.5,
            label_noise: 0.25,
            base_model_temperature: 0.1,
            seed: 0,
        }
    }
}

fn invalid(field: &str, message: &str) -> AdcError {
    AdcError::config(format!("stream.{field}"), message)
}

impl StreamSpec {
    pub fn space(&self) -> Result<ClassSpace> {
        ClassSpace::new(self.n_objects, self.n_verbs)
            .map_err(|_| invalid("n_objects", "n_objects and n_verbs must be positive"))
    }

    pub fn validate(&self) -> Result<()> {
        let space = self.space()?;
        if let Some(n) = self.n_classes {
            if n != space.n_classes() {
                return Err(invalid("n_classes", "must equal n_objects * n_verbs"));
            }
        }
        if self.dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        if self.n_samples == 0 {
            return Err(invalid("n_samples", "must be positive"));
        }
        if !(self.zipf_exponent > 0.0 && self.zipf_exponent.is_finite()) {
            return Err(invalid("zipf_exponent", "must be > 0"));
        }
        if !(self.prototype_separation > 0.0 && self.prototype_separation.is_finite()) {
            return Err(invalid("prototype_separation", "must be > 0"));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(invalid("feature_noise", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return Err(invalid("label_noise", "must lie in [0, 1)"));
        }
        if !(self.base_model_temperature > 0.0 && self.base_model_temperature.is_finite()) {
            return Err(invalid("base_model_temperature", "must be > 0"));
        }
        Ok(())
    }

    pub fn header(&self) -> RecordHeader {
        RecordHeader {
            d: self.dim,
            n_classes: self.n_objects * self.n_verbs,
            n_objects: self.n_objects,
            n_verbs: self.n_verbs,
        }
    }
}

/// Splits `total` samples over classes in proportion to `(c + 1)^-s` by
/// largest remainder. Counts are non-increasing in the class index.
pub fn zipf_counts(n_classes: usize, total: usize, exponent: f64) -> Vec<usize> {
    let weights: Vec<f64> = (1..=n_classes)
        .map(|r| (r as f64).powf(-exponent))
        .collect();
    let z: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / z * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().take(total - assigned) {
        counts[c] += 1;
    }
    counts
}

fn gaussian_unit(rng: &mut seed::Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = numeric::norm(&v);
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit class prototypes, indexed by flat class.
pub fn prototypes(spec: &StreamSpec) -> Vec<Vec<f64>> {
    let space = ClassSpace {
        n_objects: spec.n_objects,
        n_verbs: spec.n_verbs,
    };
    let mut rng = seed::child_rng(spec.seed, "prototypes", 0);
    let anchors: Vec<Vec<f64>> = (0..spec.n_objects)
        .map(|_| gaussian_unit(&mut rng, spec.dim))
        .collect();
    (0..space.n_classes())
        .map(|c| {
            let own = gaussian_unit(&mut rng, spec.dim);
            let anchor = &anchors[space.class_of(c).object_id];
            let v: Vec<f64> = anchor
                .iter()
                .zip(&own)
                .map(|(a, u)| a + spec.prototype_separation * u)
                .collect();
            let n = numeric::norm(&v);
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

/// Draws an index from `weights` excluding `skip`.
fn weighted_pick(rng: &mut seed::Rng, weights: &[usize], skip: usize) -> usize {
    let total: usize = weights
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .map(|(_, &w)| w)
        .sum();
    if total == 0 {
        // Only `skip` has mass; fall back to uniform over the others.
        let pick = rng.random_range(0..weights.len() - 1);
        return if pick >= skip { pick + 1 } else { pick };
    }
    let mut target = rng.random_range(0..total);
    for (i, &w) in weights.iter().enumerate() {
        if i == skip {
            continue;
        }
        if target < w {
            return i;
        }
        target -= w;
    }
    unreachable!("weighted draw ran past the total mass")
}

/// Generates the stream. Identical specs give identical streams.
pub fn generate_stream(spec: &StreamSpec, mode: ExecMode) -> Result<Vec<PredictionRecord>> {
    spec.validate()?;
    let space = spec.space()?;
    let n_classes = space.n_classes();
    let counts = zipf_counts(n_classes, spec.n_samples, spec.zipf_exponent);
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect();
    labels.shuffle(&mut seed::child_rng(spec.seed, "order", 0));

    let protos = prototypes(spec);
    let noise_scale = spec.feature_noise / (spec.dim as f64).sqrt();

    let make = |i: usize| -> PredictionRecord {
        let gt = labels[i];
        let mut rng = seed::child_rng(spec.seed, "sample", i as u64);
        let raw: Vec<f64> = protos[gt]
            .iter()
            .map(|p| p + noise_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = numeric::norm(&raw);
        let feature: Vec<f64> = raw.into_iter().map(|x| x / n).collect();

        let mut logits: Vec<f64> = protos
            .iter()
            .map(|p| numeric::dot(&feature, p) / spec.base_model_temperature)
            .collect();
        // The simulated model is right on clean samples.
        let top = numeric::argmax(&logits);
        logits.swap(gt, top);
        if n_classes > 1 && rng.random::<f64>() < spec.label_noise {
            let wrong = weighted_pick(&mut rng, &counts, gt);
            logits.swap(gt, wrong);
        }

        let true_object = space.class_of(gt).object_id;
        let object_pred = if spec.n_objects > 1 && rng.random::<f64>() < spec.label_noise {
            let pick = rng.random_range(0..spec.n_objects - 1);
            if pick >= true_object {
                pick + 1
            } else {
                pick
            }
        } else {
            true_object
        };

        PredictionRecord {
            id: format!("s{i:07}"),
            feature: FeatureVector::from_vec_unchecked(feature),
            logit_base: LogitVector::from_vec_unchecked(logits),
            object_pred,
            gt_class: Some(gt),
        }
    };
    Ok(exec::map_range(mode, labels.len(), make))
}
