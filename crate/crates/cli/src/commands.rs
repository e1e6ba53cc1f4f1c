use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use adc_core::config::RareRule;
use adc_core::harness::{
    self, report, AdaptationOutput, EvalReport, PredictionRecord, RecordHeader, StreamSpec,
};
use adc_core::{AdcConfig, AdcError};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, Ablation, RunConfig, SweepSpec};
use crate::Failure;

pub const MANIFEST: &str = "manifest.toml";
pub const BASE_REPORT: &str = "base_report.json";
pub const FINAL_LOGITS: &str = "final_logits.jsonl";
pub const STREAM: &str = "stream.jsonl";
pub const CACHE: &str = "cache.jsonl";
pub const SUMMARY: &str = "summary.csv";
pub const TIMING: &str = "timing.json";

/// Where the records come from, with the rare rule that fits them.
struct Dataset {
    records: Vec<PredictionRecord>,
    header: RecordHeader,
    rule: RareRule,
}

fn synthetic(stream: Option<&StreamSpec>, cfg: &AdcConfig) -> Result<Dataset, Failure> {
    let spec = stream.ok_or_else(|| Failure::Config("a [stream] section is required".into()))?;
    Ok(Dataset {
        records: harness::generate_stream(spec, cfg.exec)?,
        header: spec.header(),
        rule: RareRule::BottomQuartile,
    })
}

fn replayed(path: &Path) -> Result<Dataset, Failure> {
    if !path.exists() {
        return Err(Failure::MissingInput(format!("input {}", path.display())));
    }
    let set = harness::load_records(path)?;
    let header = set
        .header
        .ok_or_else(|| Failure::Other(anyhow::anyhow!("{} holds no records", path.display())))?;
    Ok(Dataset {
        records: set.records,
        header,
        rule: RareRule::Threshold,
    })
}

fn dataset(run: &RunConfig, input: Option<&Path>) -> Result<Dataset, Failure> {
    match input {
        Some(p) => replayed(p),
        None => synthetic(run.stream.as_ref(), &run.adc),
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Other(anyhow::anyhow!("creating {}: {e}", dir.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .map_err(|e| Failure::Other(anyhow::anyhow!("writing {}: {e}", path.display())))
}

#[derive(Serialize)]
struct Timing {
    runtime_ms: u128,
}

fn finish(
    out: &Path,
    run: &RunConfig,
    command: &str,
    input: Option<&Path>,
    started: Instant,
) -> Result<(), Failure> {
    write(&out.join(MANIFEST), &config::manifest(run, command, input))?;
    let timing = Timing {
        runtime_ms: started.elapsed().as_millis(),
    };
    write(
        &out.join(TIMING),
        &serde_json::to_string_pretty(&timing).expect("timing serialises"),
    )
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

fn headline(label: &str, r: &EvalReport) -> String {
    format!(
        "{label}: map_full {:.4}  map_rare {}  map_nonrare {}",
        r.map_full,
        fmt_opt(r.map_rare),
        fmt_opt(r.map_nonrare)
    )
}

/// Adapts on the dataset, writing reports when ground truth is available.
fn adapt_and_report(
    data: &Dataset,
    cfg: &AdcConfig,
    out: &Path,
) -> Result<Option<AdaptationOutput>, Failure> {
    match harness::run_with_default_rule(&data.records, &data.header, cfg, data.rule) {
        Ok(result) => {
            report::write_report(out, &result.report)?;
            let base = harness::evaluate_base(&data.records, &data.header, cfg, data.rule)?;
            write(&out.join(BASE_REPORT), &report::report_json(&base))?;
            println!("{}", headline("base", &base));
            println!("{}", headline("adc ", &result.report));
            Ok(Some(result))
        }
        Err(AdcError::EvaluationUnavailable) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub struct Options<'a> {
    pub out: &'a Path,
    pub input: Option<&'a Path>,
    pub save_stream: bool,
    pub save_logits: bool,
}

pub fn synth(run: &RunConfig, opts: &Options) -> Result<(), Failure> {
    let started = Instant::now();
    let data = synthetic(run.stream.as_ref(), &run.adc)?;
    create_dir(opts.out)?;
    if opts.save_stream {
        harness::save_records(&opts.out.join(STREAM), &data.header, &data.records)?;
    }
    let result = adapt_and_report(&data, &run.adc, opts.out)?
        .expect("synthetic records always carry ground truth");
    if opts.save_logits {
        report::write_final_logits(
            &opts.out.join(FINAL_LOGITS),
            &data.records,
            &result.final_logits,
        )?;
    }
    finish(opts.out, run, "synth", None, started)
}

pub fn replay(run: &RunConfig, opts: &Options) -> Result<(), Failure> {
    let started = Instant::now();
    let input = opts
        .input
        .ok_or_else(|| Failure::Config("replay needs --input".into()))?;
    let data = replayed(input)?;
    create_dir(opts.out)?;
    let logits = match adapt_and_report(&data, &run.adc, opts.out)? {
        Some(result) => result.final_logits,
        None => {
            log::warn!("no record carries gt_class; writing fused logits only");
            harness::adapt(&data.records, &data.header, &run.adc)?.final_logits
        }
    };
    report::write_final_logits(&opts.out.join(FINAL_LOGITS), &data.records, &logits)?;
    finish(opts.out, run, "replay", Some(input), started)
}

pub fn export_cache(run: &RunConfig, opts: &Options) -> Result<(), Failure> {
    let started = Instant::now();
    let data = dataset(run, opts.input)?;
    create_dir(opts.out)?;
    let cache = harness::adapt(&data.records, &data.header, &run.adc)?.cache;
    cache.save_snapshot(&opts.out.join(CACHE))?;
    println!("cached entries: {}", cache.total_entries());
    finish(opts.out, run, "export-cache", opts.input, started)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub k_base: usize,
    pub tau: f64,
    pub alpha_fuse: f64,
    pub beta: f64,
    pub ablation: Option<Ablation>,
}

impl SweepPoint {
    pub fn config(&self, base: &AdcConfig) -> AdcConfig {
        let mut cfg = AdcConfig {
            k_base: self.k_base,
            tau: self.tau,
            alpha_fuse: self.alpha_fuse,
            beta: self.beta,
            ..base.clone()
        };
        if let Some(a) = self.ablation {
            a.apply(&mut cfg);
        }
        cfg
    }
}

fn axis<T: Clone>(values: &[T], fallback: T) -> Vec<T> {
    if values.is_empty() {
        vec![fallback]
    } else {
        values.to_vec()
    }
}

/// Cartesian product of the sweep axes, `ablation` varying fastest.
pub fn grid(sweep: &SweepSpec, base: &AdcConfig) -> Vec<SweepPoint> {
    let ablations: Vec<Option<Ablation>> = if sweep.ablation.is_empty() {
        vec![None]
    } else {
        sweep.ablation.iter().copied().map(Some).collect()
    };
    let mut points = Vec::new();
    for &k_base in &axis(&sweep.k_base, base.k_base) {
        for &tau in &axis(&sweep.tau, base.tau) {
            for &alpha_fuse in &axis(&sweep.alpha_fuse, base.alpha_fuse) {
                for &beta in &axis(&sweep.beta, base.beta) {
                    for &ablation in &ablations {
                        points.push(SweepPoint {
                            k_base,
                            tau,
                            alpha_fuse,
                            beta,
                            ablation,
                        });
                    }
                }
            }
        }
    }
    points
}

pub fn point_dir(out: &Path, index: usize) -> PathBuf {
    out.join("points").join(format!("p{index:03}"))
}

pub fn sweep(run: &RunConfig, opts: &Options) -> Result<(), Failure> {
    let started = Instant::now();
    let spec = run.sweep.clone().unwrap_or_default();
    let points = grid(&spec, &run.adc);
    let configs: Vec<AdcConfig> = points.iter().map(|p| p.config(&run.adc)).collect();
    for cfg in &configs {
        cfg.validate()?;
    }
    let data = dataset(run, opts.input)?;
    create_dir(opts.out)?;
    let base = harness::evaluate_base(&data.records, &data.header, &run.adc, data.rule)?;
    write(&opts.out.join(BASE_REPORT), &report::report_json(&base))?;

    let reports: Vec<EvalReport> = configs
        .par_iter()
        .map(|cfg| {
            harness::run_with_default_rule(&data.records, &data.header, cfg, data.rule)
                .map(|r| r.report)
        })
        .collect::<Result<_, _>>()?;

    let mut summary =
        String::from("point,k_base,tau,alpha_fuse,beta,ablation,map_full,map_rare,map_nonrare\n");
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (i, (p, r)) in points.iter().zip(&reports).enumerate() {
        report::write_report(&point_dir(opts.out, i), r)?;
        let _ = writeln!(
            summary,
            "p{i:03},{},{},{},{},{},{},{},{}",
            p.k_base,
            p.tau,
            p.alpha_fuse,
            p.beta,
            p.ablation.map(Ablation::name).unwrap_or("config"),
            r.map_full,
            cell(r.map_rare),
            cell(r.map_nonrare)
        );
        println!("{}", headline(&format!("p{i:03}"), r));
    }
    write(&opts.out.join(SUMMARY), &summary)?;
    let mut resolved = run.clone();
    resolved.sweep = Some(spec);
    finish(opts.out, &resolved, "sweep", opts.input, started)
}
