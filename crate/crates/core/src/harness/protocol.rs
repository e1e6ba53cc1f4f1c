//! The two-pass test-time protocol.
//!
//! Pass one streams every record through the cache to initialise it, then
//! completes under-filled queues. Pass two predicts each record against the
//! cache, fuses the cache logits into the base logits, and keeps updating
//! the cache with the fused prediction, re-completing queues periodically.

use std::time::Instant;

use crate::cjcs::CacheState;
use crate::config::{AdcConfig, FrequencySource, Pass2Label, RareRule, RetrievalMode};
use crate::error::{AdcError, Result};
use crate::exec;
use crate::faca::FrequencyTable;
use crate::harness::metrics::{build_report, EvalReport, RareSplit, TracePoint};
use crate::harness::records::{check_record, PredictionRecord, RecordHeader};
use crate::harness::stream::{generate_stream, StreamSpec};
use crate::numeric::LogitVector;
use crate::retrieval;

#[derive(Debug, Clone)]
pub struct AdaptationOutput {
    pub final_logits: Vec<LogitVector>,
    pub report: EvalReport,
    pub cache: CacheState,
}

/// Final logits, quality trace and cache of a run, before evaluation.
#[derive(Debug, Clone)]
pub struct Adapted {
    pub final_logits: Vec<LogitVector>,
    pub quality_trace: Vec<TracePoint>,
    pub cache: CacheState,
}

fn initial_frequency(header: &RecordHeader, cfg: &AdcConfig) -> Result<FrequencyTable> {
    match (cfg.freq_source, &cfg.freq_file) {
        (FrequencySource::Offline, Some(path)) => {
            FrequencyTable::load_offline(path, header.n_classes)
        }
        (FrequencySource::Offline, None) => Err(AdcError::config(
            "freq_file",
            "required when freq_source = \"offline\"",
        )),
        (FrequencySource::Online, _) => Ok(FrequencyTable::online(header.n_classes)),
    }
}

struct Runner<'a> {
    cfg: &'a AdcConfig,
    state: CacheState,
    step: u64,
    trace: Vec<TracePoint>,
    round: u64,
}

impl Runner<'_> {
    fn commit(&mut self, record: &PredictionRecord, logits: &LogitVector) -> Result<()> {
        self.state.update(&record.feature, logits, self.cfg)?;
        self.step += 1;
        if self.step.is_multiple_of(self.cfg.trace_interval as u64) {
            self.trace.push(TracePoint {
                step: self.step,
                mean_joint_score: self.state.mean_joint_score(),
            });
        }
        Ok(())
    }

    fn complete(&mut self) {
        if self.cfg.use_augmentation {
            self.state.complete_all(self.cfg, self.round, self.cfg.exec);
            self.round += 1;
        }
    }

    fn label_logits<'r>(&self, base: &'r LogitVector, fused: &'r LogitVector) -> &'r LogitVector {
        match self.cfg.pass2_label {
            Pass2Label::Enhanced => fused,
            Pass2Label::Base => base,
        }
    }
}

/// Runs both passes and returns fused logits in record order.
pub fn adapt(
    records: &[PredictionRecord],
    header: &RecordHeader,
    cfg: &AdcConfig,
) -> Result<Adapted> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(AdcError::RejectedInput("no records to adapt on".into()));
    }
    for r in records {
        check_record(header, r).map_err(|m| AdcError::RejectedInput(format!("{}: {m}", r.id)))?;
    }
    let state = CacheState::new(header.space()?, header.d, initial_frequency(header, cfg)?)?;
    let mut run = Runner {
        cfg,
        state,
        step: 0,
        trace: Vec::new(),
        round: 0,
    };

    for r in records {
        run.commit(r, &r.logit_base)?;
    }
    run.complete();

    let interval = cfg.completion_interval;
    let mut final_logits = Vec::with_capacity(records.len());
    match cfg.retrieval_mode {
        RetrievalMode::Streaming => {
            for (i, r) in records.iter().enumerate() {
                let fused =
                    retrieval::enhance(&run.state, &r.feature, &r.logit_base, r.object_pred, cfg)?;
                run.commit(r, run.label_logits(&r.logit_base, &fused))?;
                final_logits.push(fused);
                if (i + 1).is_multiple_of(interval) {
                    run.complete();
                }
            }
        }
        RetrievalMode::Batched => {
            let mut done = 0usize;
            for batch in records.chunks(cfg.batch_size) {
                let state = &run.state;
                let fused = exec::map_slice(cfg.exec, batch, |r| {
                    retrieval::enhance(state, &r.feature, &r.logit_base, r.object_pred, cfg)
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                for (r, f) in batch.iter().zip(fused) {
                    run.commit(r, run.label_logits(&r.logit_base, &f))?;
                    final_logits.push(f);
                    done += 1;
                    if done.is_multiple_of(interval) {
                        run.complete();
                    }
                }
            }
        }
    }

    Ok(Adapted {
        final_logits,
        quality_trace: run.trace,
        cache: run.state,
    })
}

fn rare_split(cfg: &AdcConfig, cache_freq: &FrequencyTable, default_rule: RareRule) -> RareSplit {
    RareSplit {
        freq: (cfg.freq_source == FrequencySource::Offline).then(|| cache_freq.counts.clone()),
        rule: cfg.rare_rule.unwrap_or(default_rule),
        threshold: cfg.rare_threshold,
    }
}

/// Adapts on `records` and evaluates the fused logits. Without an explicit
/// `rare_rule` the rare split uses `rare_threshold`.
pub fn run_adaptation(
    records: &[PredictionRecord],
    header: &RecordHeader,
    cfg: &AdcConfig,
) -> Result<AdaptationOutput> {
    run_with_default_rule(records, header, cfg, RareRule::Threshold)
}

/// Like [`run_adaptation`], with `default_rule` used when `rare_rule` is unset.
pub fn run_with_default_rule(
    records: &[PredictionRecord],
    header: &RecordHeader,
    cfg: &AdcConfig,
    default_rule: RareRule,
) -> Result<AdaptationOutput> {
    let started = Instant::now();
    let adapted = adapt(records, header, cfg)?;
    let split = rare_split(cfg, &adapted.cache.freq, default_rule);
    let mut report = build_report(
        &adapted.final_logits,
        records,
        header.n_classes,
        &split,
        adapted.quality_trace,
        cfg.exec,
    )?;
    report.runtime_ms = started.elapsed().as_millis();
    Ok(AdaptationOutput {
        final_logits: adapted.final_logits,
        report,
        cache: adapted.cache,
    })
}

/// Evaluates the base logits alone, with the same rare split a run would use.
pub fn evaluate_base(
    records: &[PredictionRecord],
    header: &RecordHeader,
    cfg: &AdcConfig,
    default_rule: RareRule,
) -> Result<EvalReport> {
    let freq = initial_frequency(header, cfg)?;
    let base: Vec<LogitVector> = records.iter().map(|r| r.logit_base.clone()).collect();
    build_report(
        &base,
        records,
        header.n_classes,
        &rare_split(cfg, &freq, default_rule),
        Vec::new(),
        cfg.exec,
    )
}

/// A synthetic run together with the base-model report on the same stream.
#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub records: Vec<PredictionRecord>,
    pub header: RecordHeader,
    pub adc: AdaptationOutput,
    pub base: EvalReport,
}

/// Generates a stream and runs the protocol on it. Without an explicit
/// `rare_rule` the rare split is the bottom frequency quartile.
pub fn run_synthetic(spec: &StreamSpec, cfg: &AdcConfig) -> Result<SyntheticRun> {
    let records = generate_stream(spec, cfg.exec)?;
    let header = spec.header();
    let adc = run_with_default_rule(&records, &header, cfg, RareRule::BottomQuartile)?;
    let base = evaluate_base(&records, &header, cfg, RareRule::BottomQuartile)?;
    Ok(SyntheticRun {
        records,
        header,
        adc,
        base,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::ExecMode;

    fn spec() -> StreamSpec {
        StreamSpec {
            n_objects: 3,
            n_verbs: 3,
            dim: 8,
            n_samples: 900,
            seed: 4,
            ..Default::default()
        }
    }

    #[test]
    fn output_count_matches_input() {
        let run = run_synthetic(&spec(), &AdcConfig::default()).unwrap();
        assert_eq!(run.adc.final_logits.len(), run.records.len());
        assert_eq!(run.adc.report.n_evaluated, 900);
        assert_eq!(run.adc.report.quality_trace.len(), 18);
    }

    #[test]
    fn zero_fusion_reproduces_the_base_model() {
        let cfg = AdcConfig {
            alpha_fuse: 0.0,
            ..Default::default()
        };
        let run = run_synthetic(&spec(), &cfg).unwrap();
        for (r, l) in run.records.iter().zip(&run.adc.final_logits) {
            assert_eq!(&r.logit_base, l);
        }
        let mut adc = run.adc.report.clone();
        adc.quality_trace.clear();
        adc.runtime_ms = 0;
        assert_eq!(adc, run.base);
    }

    #[test]
    fn single_class_stream_fills_one_queue() {
        let header = RecordHeader {
            d: 3,
            n_classes: 4,
            n_objects: 2,
            n_verbs: 2,
        };
        let records: Vec<PredictionRecord> = (0..30)
            .map(|i| PredictionRecord {
                id: i.to_string(),
                feature: crate::numeric::FeatureVector::new(vec![1.0, (i as f64).sin(), 0.5])
                    .unwrap(),
                logit_base: LogitVector::new(vec![0.0, 0.0, 4.0, 1.0]).unwrap(),
                object_pred: 1,
                gt_class: Some(2),
            })
            .collect();
        let cfg = AdcConfig::default();
        let out = run_adaptation(&records, &header, &cfg).unwrap();
        let non_empty: Vec<usize> = out
            .cache
            .queues
            .iter()
            .enumerate()
            .filter(|(_, q)| !q.is_empty())
            .map(|(c, _)| c)
            .collect();
        assert_eq!(non_empty, vec![2]);
    }

    #[test]
    fn batched_mode_is_deterministic_and_mode_independent() {
        let cfg = AdcConfig {
            retrieval_mode: RetrievalMode::Batched,
            ..Default::default()
        };
        let par = run_synthetic(&spec(), &cfg).unwrap();
        let seq = run_synthetic(
            &spec(),
            &AdcConfig {
                exec: ExecMode::Sequential,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(par.adc.final_logits, seq.adc.final_logits);
        assert_eq!(par.adc.cache, seq.adc.cache);
    }

    #[test]
    fn empty_input_is_rejected() {
        let header = RecordHeader {
            d: 1,
            n_classes: 1,
            n_objects: 1,
            n_verbs: 1,
        };
        assert!(adapt(&[], &header, &AdcConfig::default()).is_err());
    }
}
