pub mod classify;
pub mod cluster;
pub mod decompose;
pub mod fit;
pub mod ingest;
pub mod predict;
pub mod report;
pub mod synth;
