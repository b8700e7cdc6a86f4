//! Modelling and simulation of an amplifier-less digital potentiostat loop:
//! a comparator drives an up/down counter, whose code sets a current DAC
//! feeding a parallel-RC electrode.
//!
//! The crate covers the sampled electrode model, linear stability analysis
//! (open-loop response, phase margin, root locus), a sample-accurate
//! time-domain simulator, describing-function limit-cycle prediction and
//! sampling-frequency selection for a target phase-margin band.

pub mod compare;
pub mod describing;
pub mod electrode;
pub mod error;
pub mod frequency;
pub mod linear;
pub mod opcond;
pub mod root_locus;
pub mod sim;
pub mod tf;

pub use compare::{
    default_r_sweep, run_comparison, write_comparison_csv, ComparisonReport, ComparisonRow,
    ComparisonSummary, RowStatus,
};
pub use describing::{comparator_describing_gain, predict_limit_cycle, LimitCyclePrediction};
pub use electrode::{step_update, zoh_load_tf, ElectrodeLoad, SampledLoad};
pub use error::{Error, Result};
pub use frequency::{
    bode_grid, freq_response, log_grid, phase_margin, write_response_csv, FrequencyResponsePoint,
    PhaseMargin,
};
pub use linear::{loop_gain_split, open_loop_tf, stability_check, LoopConfig, StabilityReport};
pub use opcond::{
    format_table, fs_for_pm, fs_range_for_pm, pm_at_fs, reference_conditions, table_report,
    write_table_csv, OperatingWindow, PmBand, TableEntry, TableRecord, TableRow,
};
pub use root_locus::{
    breakaway_gain, closed_loop_roots, gain_grid, locus_sweep, stability_limit, LocusSweep,
    RootKind, RootPair,
};
pub use sim::{
    extract_limit_cycle, simulate, simulate_linear, step_metrics, LimitCycleMeasurement,
    LinearTrace, SimConfig, SimTrace, StepMetrics, Waveform,
};
pub use tf::DiscreteRationalTF;
