pub mod cli;
pub mod ingest;
pub mod regress;
pub mod report;
pub mod select;
pub mod stats;
pub mod synth;
pub mod timeseries;
