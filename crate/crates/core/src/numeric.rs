//! Dense vector types and the handful of numeric primitives every other
//! module leans on: softmax, entropy, L2 normalisation and arg-max labelling.

use serde::{Deserialize, Serialize};

use crate::error::{AdcError, Result};

/// Norm below which a feature is treated as degenerate and left unnormalised.
pub const DEGENERATE_NORM: f64 = 1e-12;

fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(AdcError::RejectedInput(format!(
            "{what} coordinate {i} is not finite ({})",
            values[i]
        ))),
        None => Ok(()),
    }
}

/// Visual feature of one human-object pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite("feature", &values)?;
        if values.is_empty() {
            return Err(AdcError::RejectedInput("feature has zero dimension".into()));
        }
        Ok(Self(values))
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

/// Unnormalised per-class scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite("logit", &values)?;
        if values.is_empty() {
            return Err(AdcError::RejectedInput("logit vector is empty".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(n_classes: usize) -> Self {
        Self(vec![0.0; n_classes])
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// A probability distribution over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Accepts `values` if they are in `[0, 1]` and sum to one within 1e-9.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite("probability", &values)?;
        if values.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(AdcError::RejectedInput("probability outside [0, 1]".into()));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(AdcError::RejectedInput(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// An interaction class: an (object, verb) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InteractionClass {
    pub object_id: usize,
    pub verb_id: usize,
}

/// The object x verb grid that flat class indices are laid out on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSpace {
    pub n_objects: usize,
    pub n_verbs: usize,
}

impl ClassSpace {
    pub fn new(n_objects: usize, n_verbs: usize) -> Result<Self> {
        if n_objects == 0 || n_verbs == 0 {
            return Err(AdcError::RejectedInput(
                "class space needs at least one object and one verb".into(),
            ));
        }
        Ok(Self { n_objects, n_verbs })
    }

    pub fn n_classes(&self) -> usize {
        self.n_objects * self.n_verbs
    }

    pub fn flat(&self, class: InteractionClass) -> usize {
        debug_assert!(class.object_id < self.n_objects && class.verb_id < self.n_verbs);
        class.object_id * self.n_verbs + class.verb_id
    }

    pub fn class_of(&self, flat: usize) -> InteractionClass {
        debug_assert!(flat < self.n_classes());
        InteractionClass {
            object_id: flat / self.n_verbs,
            verb_id: flat % self.n_verbs,
        }
    }

    /// Flat indices of every class sharing `object_id`; contiguous by layout.
    pub fn classes_of_object(&self, object_id: usize) -> std::ops::Range<usize> {
        let start = object_id * self.n_verbs;
        start..start + self.n_verbs
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cosine similarity; zero when either side is degenerate.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom < DEGENERATE_NORM {
        0.0
    } else {
        dot(a, b) / denom
    }
}

/// Max-shifted exponential normalisation.
pub fn softmax(logits: &LogitVector) -> ProbVector {
    ProbVector(softmax_slice(logits.as_slice()))
}

pub(crate) fn softmax_slice(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &ProbVector) -> f64 {
    entropy_slice(p.as_slice())
}

pub(crate) fn entropy_slice(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Result of [`l2_normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub feature: FeatureVector,
    /// The input norm was below [`DEGENERATE_NORM`]; the feature passed through unchanged.
    pub degenerate: bool,
}

/// Scales `f` to unit L2 norm. Near-zero inputs are returned as-is and flagged.
pub fn l2_normalize(f: &FeatureVector) -> Normalized {
    let n = f.norm();
    if n < DEGENERATE_NORM {
        log::warn!("degenerate feature with norm {n:e}; left unnormalised");
        return Normalized {
            feature: f.clone(),
            degenerate: true,
        };
    }
    Normalized {
        feature: FeatureVector(f.0.iter().map(|v| v / n).collect()),
        degenerate: false,
    }
}

/// Arg-max flat class index; the lowest index wins ties.
pub fn pseudo_label(logits: &LogitVector) -> usize {
    argmax(logits.as_slice())
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
