//! Automated feature engineering for tabular classification data.
//!
//! Learns which transformations raised the maximal information coefficient of
//! previously seen features, keys those outcomes by feature encodings, and
//! replays them on new datasets after a causal pre-selection of inputs.

pub mod causal;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod meta_features;
pub mod mic;
pub mod pipeline;
pub mod scaler;
pub mod stats;
pub mod synth;
pub mod transforms;
pub mod trm;

pub use causal::{fit_dag, rank_features, select_top, CausalRanking, DagOptions, WeightedDag};
pub use dataset::{load_csv, write_csv, preprocess, stratified_folds, Dataset, FoldPlan, Imputer};
pub use error::{Error, ErrorClass, Result};
pub use meta_features::{encode_dataset, encode_feature, DatasetEncoding, FeatureEncoding, MetaFeatureVector};
pub use mic::{mic, mic_gain, MicConfig};
pub use scaler::{recommend_scaler, ScalerDecision};
pub use transforms::{BinaryOp, ScalerKind, ScalerParams, TransformExpr, TransformId, UnaryOp};
pub use trm::{load_trm, save_trm, train_trm, Trm, TrmConfig, TrmRecord};
pub use pipeline::{transform_dataset, EngineeredDataset, Lineage, PipelineConfig, TransformPlan};
pub use eval::{compare, evaluate, Classifier, CompareConfig, EvalReport};
