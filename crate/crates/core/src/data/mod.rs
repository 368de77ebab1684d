//! Rating-log ingestion, feedback thresholds, chronological splits and
//! synthetic clustered datasets.

mod records;
mod split;
mod synth;

pub use records::{
    binarize, export_tsv, ingest, ingest_reader, write_tsv, IngestOutcome, LineError, Rating, RatingKind,
    RatingRecord, Schema,
};
pub use split::{
    leave_one_out, parse_date, phase_split, EvalSplit, PhaseSplit, PhaseStats, DEFAULT_BOUNDARIES,
};
pub use synth::{synth_dataset, SynthConfig, SynthDataset};
