//! Configuration, experiment pipelines and persistence.

mod config;
mod experiments;
mod maps;
mod matrix_io;
mod pipeline;
mod record;
mod sweep;

pub use config::{
    AccountantParams, Algorithm, DeltaCurveParams, ExperimentConfig, Mode, NoiseDemoParams,
    PipelineParams, PrivacyParams, SweepGrid,
};
pub use experiments::{
    accountant_table, delta_curves, h_ratio_table, noise_demo, write_dataset, write_sweep,
    DatasetManifest, HRatioRow, NoiseDemoRow, ACCOUNTANT_CSV, DELTA_CURVES_CSV, H_RATIO_CSV,
    MANIFEST_JSON, NOISE_DEMO_CSV, SWEEP_CSV, SWEEP_RUNS_CSV,
};
pub use maps::{
    estimated_mixing, export_spatial_maps, maps_for_record, mean_correlation, write_spatial_maps,
    SpatialMap,
};
pub use matrix_io::{
    load_matrix, load_matrix_csv, read_matrix, save_matrix, save_matrix_csv, write_csv_rows,
    write_matrix, MAGIC,
};
pub use pipeline::{cape_epsilon_for, run_once, run_once_in_context, stream_rng, Reduction, RunSpec};
pub use record::{LedgerTotals, RunRecord};
pub use sweep::{grid_points, run_sweep, summarize, GridPoint, RunRow, SweepOutput, SweepRow};
