//! Brute-force reference implementations shared by the integration tests and
//! the acceptance target. Nothing here calls into the scoring, capacity or
//! retrieval code under test; each formula is re-derived with scalar loops.

#![allow(dead_code)]

use adc_core::cjcs::CacheState;
use adc_core::faca::FrequencyTable;
use adc_core::numeric::{ClassSpace, FeatureVector, LogitVector};
use adc_core::{retrieval, AdcConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn first_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

fn entropy_of_logits(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    let mut h = 0.0;
    for l in logits {
        let p = (l - m).exp() / z;
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

/// `((n_max + g) / (n_c + g))^a * exp(-l * n_c / total)`, one when nothing was seen.
pub fn oracle_scaling(n_c: u64, counts: &[u64], cfg: &AdcConfig) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 1.0;
    }
    let n_max = *counts.iter().max().unwrap() as f64;
    let n = n_c as f64;
    ((n_max + cfg.gamma_smooth) / (n + cfg.gamma_smooth)).powf(cfg.alpha_alloc)
        * (-cfg.lambda_mod * n / total as f64).exp()
}

pub fn oracle_capacity(class: usize, counts: &[u64], cfg: &AdcConfig) -> usize {
    if !cfg.use_adaptive_capacity {
        return cfg.k_base;
    }
    let raw = (cfg.k_base as f64 * oracle_scaling(counts[class], counts, cfg)).floor();
    if raw >= cfg.k_max as f64 {
        cfg.k_max
    } else if raw <= cfg.k_min as f64 {
        cfg.k_min
    } else {
        raw as usize
    }
}

#[derive(Clone)]
struct OracleEntry {
    feature: Vec<f64>,
    entropy: f64,
    seq: u64,
}

/// Scores every member of `temp` from scratch and keeps the best `k`.
fn oracle_select(temp: &[OracleEntry], k: usize, cfg: &AdcConfig) -> Vec<OracleEntry> {
    let m = temp.len();
    let denom = if cfg.diversity_exclusive_denominator && m > 1 {
        (m - 1) as f64
    } else {
        m as f64
    };
    let max_h = temp.iter().map(|e| e.entropy).fold(0.0, f64::max);
    let mut scored: Vec<(f64, u64, usize)> = Vec::with_capacity(m);
    for a in 0..m {
        let mut div = 0.0;
        for b in 0..m {
            if a == b {
                continue;
            }
            let (fa, fb) = (&temp[a].feature, &temp[b].feature);
            let mut dot = 0.0;
            let mut na = 0.0;
            let mut nb = 0.0;
            let mut dist = 0.0;
            for i in 0..fa.len() {
                dot += fa[i] * fb[i];
                na += fa[i] * fa[i];
                nb += fb[i] * fb[i];
                dist += (fa[i] - fb[i]) * (fa[i] - fb[i]);
            }
            let cos = dot / (na.sqrt() * nb.sqrt());
            div += (1.0 - cos) * (-cfg.bandwidth * dist).exp();
        }
        div /= denom;
        let conf = if max_h <= 0.0 {
            1.0
        } else {
            1.0 - temp[a].entropy / max_h
        };
        let joint = if cfg.use_diversity {
            cfg.tau * div + (1.0 - cfg.tau) * conf
        } else {
            conf
        };
        scored.push((joint, temp[a].seq, a));
    }
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(y.1.cmp(&x.1)));
    scored.truncate(k);
    scored
        .into_iter()
        .map(|(_, _, i)| temp[i].clone())
        .collect()
}

fn random_space(rng: &mut ChaCha8Rng) -> ClassSpace {
    loop {
        let o = rng.random_range(1..=5);
        let v = rng.random_range(1..=5);
        if o * v <= 20 {
            return ClassSpace::new(o, v).unwrap();
        }
    }
}

/// A valid configuration with every score and capacity knob randomised.
/// `k_max` stays below 12 so a temporary set never exceeds 12 members.
pub fn random_config(rng: &mut ChaCha8Rng) -> AdcConfig {
    let k_min = rng.random_range(1..=4);
    let k_max = rng.random_range(k_min..=11);
    AdcConfig {
        tau: rng.random_range(0.0..=1.0),
        bandwidth: rng.random_range(0.05..4.0),
        alpha_alloc: rng.random_range(0.05..=1.0),
        gamma_smooth: rng.random_range(0.1..5.0),
        lambda_mod: rng.random_range(0.0..3.0),
        k_base: rng.random_range(1..=11),
        k_min,
        k_max,
        alpha_fuse: rng.random_range(0.0..8.0),
        beta: rng.random_range(0.1..12.0),
        use_diversity: rng.random_bool(0.8),
        use_adaptive_capacity: rng.random_bool(0.8),
        diversity_exclusive_denominator: rng.random_bool(0.3),
        global_fallback: rng.random_bool(0.5),
        ..AdcConfig::default()
    }
}

/// Logits whose argmax is concentrated on a few classes so queues overflow.
fn random_logits(rng: &mut ChaCha8Rng, n_classes: usize) -> Vec<f64> {
    let mut logits: Vec<f64> = gaussian(rng, n_classes)
        .into_iter()
        .map(|x| x * rng.random_range(0.1..4.0))
        .collect();
    if rng.random_bool(0.7) {
        let hot = rng.random_range(0..n_classes.min(3));
        logits[hot] += rng.random_range(0.0..6.0);
    }
    logits
}

pub struct Mismatch {
    pub instance: u64,
    pub step: usize,
    pub class: usize,
    pub expected: Vec<u64>,
    pub got: Vec<u64>,
}

/// Replays a random update sequence through both the cache and the oracle,
/// comparing the retained set of the touched queue after every update.
pub fn cjcs_instance(instance: u64) -> Result<usize, Mismatch> {
    let mut rng = rng(0xC1C5 ^ instance.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let space = random_space(&mut rng);
    let n = space.n_classes();
    let d = rng.random_range(1..=16);
    let cfg = random_config(&mut rng);
    cfg.validate().expect("random configs are valid");
    let steps = rng.random_range(1..=80);

    let mut state = CacheState::new(space, d, FrequencyTable::online(n)).unwrap();
    let mut queues: Vec<Vec<OracleEntry>> = vec![Vec::new(); n];
    let mut counts = vec![0u64; n];
    for step in 0..steps {
        let raw = loop {
            let v = gaussian(&mut rng, d);
            if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
                break v;
            }
        };
        let logits = random_logits(&mut rng, n);
        state
            .update(
                &FeatureVector::new(raw.clone()).unwrap(),
                &LogitVector::new(logits.clone()).unwrap(),
                &cfg,
            )
            .unwrap();

        let label = first_argmax(&logits);
        counts[label] += 1;
        let k = oracle_capacity(label, &counts, &cfg);
        let mut temp = std::mem::take(&mut queues[label]);
        temp.push(OracleEntry {
            feature: unit(&raw),
            entropy: entropy_of_logits(&logits),
            seq: step as u64,
        });
        assert!(temp.len() <= 12);
        queues[label] = oracle_select(&temp, k, &cfg);

        let mut expected: Vec<u64> = queues[label].iter().map(|e| e.seq).collect();
        let mut got: Vec<u64> = state.queues[label].entries.iter().map(|e| e.seq).collect();
        expected.sort_unstable();
        got.sort_unstable();
        if expected != got {
            return Err(Mismatch {
                instance,
                step,
                class: label,
                expected,
                got,
            });
        }
    }
    Ok(steps)
}

/// Builds a random cache, then checks one fused prediction against a
/// scalar-loop evaluation. Returns the worst relative error seen.
pub fn retrieval_instance(instance: u64) -> f64 {
    let mut rng = rng(0x8E7 ^ instance.wrapping_mul(0xD1B5_4A32_D192_ED03));
    let space = random_space(&mut rng);
    let n = space.n_classes();
    let d = rng.random_range(1..=16);
    let cfg = random_config(&mut rng);
    let mut state = CacheState::new(space, d, FrequencyTable::online(n)).unwrap();
    for _ in 0..rng.random_range(0..=60) {
        let f = FeatureVector::new(gaussian(&mut rng, d)).unwrap();
        let l = LogitVector::new(random_logits(&mut rng, n)).unwrap();
        state.update(&f, &l, &cfg).unwrap();
    }

    let query = gaussian(&mut rng, d);
    let base = gaussian(&mut rng, n)
        .into_iter()
        .map(|x| 3.0 * x)
        .collect::<Vec<_>>();
    let object = rng.random_range(0..space.n_objects);
    let got = retrieval::enhance(
        &state,
        &FeatureVector::new(query.clone()).unwrap(),
        &LogitVector::new(base.clone()).unwrap(),
        object,
        &cfg,
    )
    .unwrap();

    let q = unit(&query);
    let mut pool: Vec<(&[f64], &[f64])> = Vec::new();
    for c in 0..n {
        if c / space.n_verbs == object {
            for e in &state.queues[c].entries {
                pool.push((e.feature.as_slice(), e.logits.as_slice()));
            }
        }
    }
    if pool.is_empty() && cfg.global_fallback {
        for queue in &state.queues {
            for e in &queue.entries {
                pool.push((e.feature.as_slice(), e.logits.as_slice()));
            }
        }
    }
    let mut expected = base.clone();
    for (key, logits) in &pool {
        let mut a = 0.0;
        for i in 0..d {
            a += q[i] * key[i];
        }
        expected[first_argmax(logits)] += cfg.alpha_fuse * (cfg.beta * (a - 1.0)).exp();
    }

    if pool.is_empty() {
        assert_eq!(
            got.as_slice(),
            base.as_slice(),
            "empty retrieval must return base logits"
        );
        return 0.0;
    }
    got.as_slice()
        .iter()
        .zip(&expected)
        .map(|(g, e)| {
            let err = (g - e).abs();
            if e.abs() > 1e-300 {
                err / e.abs()
            } else {
                err
            }
        })
        .fold(0.0, f64::max)
}

/// A random frequency table with a heavy tail and some empty classes.
pub fn random_counts(rng: &mut ChaCha8Rng) -> Vec<u64> {
    let n = rng.random_range(1..=60);
    (0..n)
        .map(|_| {
            if rng.random_bool(0.1) {
                0
            } else {
                (rng.random_range(0.0f64..1.0).powi(3) * 5000.0) as u64
            }
        })
        .collect()
}
