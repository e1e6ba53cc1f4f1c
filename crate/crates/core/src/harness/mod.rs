//! Synthetic streams, record replay, the two-pass protocol and evaluation.

pub mod metrics;
pub mod protocol;
pub mod records;
pub mod report;
pub mod stream;

pub use metrics::{average_precision, build_report, EvalReport, RareSplit, TracePoint};
pub use protocol::{
    adapt, evaluate_base, run_adaptation, run_synthetic, run_with_default_rule, AdaptationOutput,
    Adapted, SyntheticRun,
};
pub use records::{load_records, save_records, PredictionRecord, RecordHeader, RecordSet};
pub use stream::{generate_stream, StreamSpec};
