//! Knowledge- and counterfactual-augmented causal reasoning over
//! multiple-choice benchmarks.
//!
//! The pipeline runs in four stages. [`knowledge`] pulls ConceptNet edges
//! for an item's concepts and verbalizes them. [`counterfactual`] derives
//! "what-if" probes from the strongest edges. [`prompting`] assembles a
//! budgeted prompt. [`provider`] sends the prompt to a model and parses the
//! answer. [`evaluation`] drives the stages over a dataset split and reports
//! accuracy, precision, recall and F1. [`causalnet`] holds the tooling for
//! the CausalNet scenario corpus.

pub mod causalnet;
pub mod corpus;
pub mod counterfactual;
pub mod evaluation;
pub mod exec;
pub mod knowledge;
pub mod lexicon;
pub mod prompting;
pub mod provider;
pub mod util;

pub use corpus::{CausalItem, DatasetDescriptor, DatasetName, DatasetSplit, QuestionKind, Task};
pub use evaluation::{EvalReport, MetricBlock, RunResult};
pub use knowledge::{ContextBundle, KnowledgeEdge};
pub use prompting::PromptPackage;
