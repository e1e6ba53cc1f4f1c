//! Run configuration: a TOML file with `[adc]`, `[stream]` and `[sweep]`
//! sections, overridden by `--set key=value` and `--seed`.

use std::fs;
use std::path::Path;

use adc_core::harness::StreamSpec;
use adc_core::{seed, AdcConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::Failure;

/// Cumulative component ladder: each step switches on one more component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Confidence-only selection, fixed capacity, no augmentation.
    Baseline,
    Div,
    DivCap,
    Full,
}

impl Ablation {
    pub fn apply(self, cfg: &mut AdcConfig) {
        let (div, cap, aug) = match self {
            Ablation::Baseline => (false, false, false),
            Ablation::Div => (true, false, false),
            Ablation::DivCap => (true, true, false),
            Ablation::Full => (true, true, true),
        };
        cfg.use_diversity = div;
        cfg.use_adaptive_capacity = cap;
        cfg.use_augmentation = aug;
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Baseline => "baseline",
            Ablation::Div => "div",
            Ablation::DivCap => "div_cap",
            Ablation::Full => "full",
        }
    }
}

/// Grid axes. An empty axis keeps the `[adc]` value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub k_base: Vec<usize>,
    pub tau: Vec<f64>,
    pub alpha_fuse: Vec<f64>,
    pub beta: Vec<f64>,
    pub ablation: Vec<Ablation>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            k_base: vec![2, 4, 6, 8, 10, 12],
            tau: Vec::new(),
            alpha_fuse: Vec::new(),
            beta: Vec::new(),
            ablation: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub adc: AdcConfig,
    pub stream: Option<StreamSpec>,
    pub sweep: Option<SweepSpec>,
}

/// TOML integers are signed, so seeds written to a manifest stay below 2^63.
const SEED_MAX: u64 = i64::MAX as u64;

const SECTIONS: [&str; 3] = ["adc", "stream", "sweep"];

/// Parses the right-hand side of `--set` as a TOML value, falling back to a
/// bare string so `--set exec=sequential` works without quotes.
fn parse_value(raw: &str) -> Value {
    match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key just parsed"),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn apply_override(doc: &mut Table, assignment: &str) -> Result<(), Failure> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Failure::Config(format!("--set {assignment}: expected key=value")))?;
    let key = key.trim();
    let (section, field) = match key.split_once('.') {
        Some((s, f)) if SECTIONS.contains(&s) => (s, f),
        _ => ("adc", key),
    };
    let table = doc
        .entry(section)
        .or_insert_with(|| Value::Table(Table::new()))
        .as_table_mut()
        .ok_or_else(|| Failure::Config(format!("[{section}] must be a table")))?;
    table.insert(field.to_string(), parse_value(raw.trim()));
    Ok(())
}

fn read_doc(path: &Path) -> Result<Table, Failure> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Failure::MissingInput(format!("config {}", path.display())),
        _ => Failure::Other(anyhow::anyhow!("reading {}: {e}", path.display())),
    })?;
    toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// Loads the file (or the built-in defaults), applies overrides and derives
/// the stream seed from the root seed unless one was given explicitly.
pub fn resolve(
    path: Option<&Path>,
    overrides: &[String],
    seed_override: Option<u64>,
) -> Result<RunConfig, Failure> {
    let mut doc = match path {
        Some(p) => read_doc(p)?,
        None => {
            let mut t = Table::new();
            t.insert("stream".into(), Value::Table(Table::new()));
            t
        }
    };
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let stream_seed_given = doc
        .get("stream")
        .and_then(Value::as_table)
        .is_some_and(|t| t.contains_key("seed"));

    let mut cfg: RunConfig = Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| Failure::Config(e.message().to_string()))?;
    if let Some(s) = seed_override {
        cfg.adc.seed = s;
    }
    if cfg.adc.seed > SEED_MAX {
        return Err(Failure::Config(format!(
            "`seed` must not exceed {SEED_MAX}"
        )));
    }
    if let Some(stream) = cfg.stream.as_mut() {
        if !stream_seed_given {
            stream.seed = seed::derive(cfg.adc.seed, "stream", 0) & SEED_MAX;
        }
        stream.validate()?;
    }
    cfg.adc.validate()?;
    Ok(cfg)
}

/// The resolved configuration as a loadable TOML file.
pub fn manifest(cfg: &RunConfig, command: &str, input: Option<&Path>) -> String {
    let mut out = format!("# adc {command}");
    if let Some(p) = input {
        out.push_str(&format!(" --input {}", p.display()));
    }
    out.push_str("\n# Fully resolved configuration; pass back with --config to rerun.\n\n");
    out.push_str(&toml::to_string(cfg).expect("run config serialises"));
    out
}
