//! Second stage: ensemble training, probability-set features, feature
//! selection and the patient-level random forest.

mod ensemble;
pub mod features;
pub mod forest;
pub mod selector;
pub mod tree;

pub use ensemble::{
    ensemble_train, fit_patient_classifier, member_seed, select_for_stack, PatientClassifier, StackConfig,
};
pub use features::{
    assemble_features, extract_stats, feature_names, filter_probabilities, patient_features, Class,
    FeatureTable, FilterConfig, FEATURES_PER_MEMBER, STAT_NAMES,
};
pub use forest::{mtry_sqrt, Forest, ForestConfig};
pub use selector::{select_features, stratified_folds, tune_k, KTuning, Selection, SelectorConfig};
pub use tree::{Node, Tree, TreeConfig};
