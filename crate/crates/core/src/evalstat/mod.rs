//! Metrics, the repeated-run protocol, normality-gated significance tests
//! and the data-size / area-size sweeps.

mod metrics;
mod protocol;
mod significance;

pub use metrics::{evaluate, r2, rmse, EvalResult};
pub use protocol::{
    area_sweep, area_sweep_batch, data_sweep, data_sweep_batch, model_seed, multirun, multirun_batch, nested_subsets,
    run_record, run_seed, Metric, RunRecord, RunSample,
    SweepModel, SweepRow, SweepTable, CNN_SWEEP_RUNS, DEFAULT_AREA_SIDES_M, DEFAULT_FRACTIONS, DEFAULT_RUNS,
};
pub use significance::{
    bonferroni_threshold, compare_models, dagostino_pearson, paired_t_test, wilcoxon_signed_rank, NormalityScreen,
    NormalityTest, PairComparison, PairedTest, SignificanceReport, TestKind, ALPHA, DEFAULT_HYPOTHESES,
    NORMALITY_MIN_N, WILCOXON_EXACT_MAX_N,
};
