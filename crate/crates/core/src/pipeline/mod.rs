//! End-to-end experiments: configuration, cached feature extraction,
//! repetitions over random splits and result emission.

pub mod config;
pub mod experiment;
pub mod results;
pub mod store;
pub mod synthetic;

pub use config::{parse_usize_list, ExperimentConfig, Mode, Setting};
pub use experiment::{
    accuracy, codebook_sample, encode_items, encode_placed, encode_set, feature_store, fit_codebook, fit_setting,
    predict_setting, run_experiment, run_repetition, run_settings, training_kernels, Encoded, ExperimentOutput,
    RepetitionDetail, SettingFit,
};
pub use results::{emit_plot_data, emit_results_csv, plot_data, PlotAxis, ResultRow, ResultsTable, CSV_HEADER};
pub use store::{extract_features, FeatureCache, FeatureParams, FeatureStore};
