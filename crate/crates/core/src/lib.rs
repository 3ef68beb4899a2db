//! Harness for in-context-learning stance detection experiments.

pub mod backends;
pub mod budget;
pub mod corpus;
pub mod eval;
pub mod gateway;
pub mod jsonl;
pub mod postprocess;
pub mod promptlab;
pub mod runner;

pub use backends::{Backend, BackendConfig, BackendError, CompletionRecord, HttpBackend, ReplayBackend};
pub use budget::{filter_by_budget, BudgetOutcome, Exclusion, ModelProfile, TokenCounter};
pub use corpus::{ClassCounts, CorpusError, CorpusSplit, LabeledPost, Stance};
pub use eval::{f1_scores, ConditionTable, ConfusionMatrix, EvalError, F1Report};
pub use gateway::ExperimentConfig;
pub use postprocess::{extract_label, IllFormatCategory, ParseOutcome, ReviewItem, ReviewStore};
pub use promptlab::{ExperimentCell, RenderedPrompt, Sampling, TemplateKind};
pub use runner::{RunError, RunOptions, RunState, RunStore};
