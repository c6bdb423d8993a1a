//! Zero-shot taxonomy induction.
//!
//! Given a root concept and a flat term list, the pipeline retrieves and
//! refines definitions, selects candidate parents per term (is-a template
//! voting plus definition similarity), ranks them with a large model,
//! calibrates scores with structural features, and assembles the final tree
//! as a maximum spanning arborescence.

pub mod arborescence;
pub mod calibration;
pub mod config;
pub mod dataset;
pub mod definitions;
pub mod evaluation;
pub mod gateway;
pub mod oracle;
pub mod par;
pub mod pipeline;
pub mod ranking;
pub mod selection;
pub mod taxonomy;
pub mod term;

pub use arborescence::{ensure_attachable, max_arborescence, Arborescence, ArborescenceError, WeightedDigraph};
pub use calibration::{calibrate, compute_features, CalibratedEdge, StructuralFeatures};
pub use config::{Mutuality, PipelineConfig};
pub use dataset::{load_task, PredictedFile, Task, TaskFile};
pub use evaluation::{ancestor_closure, micro_average, score, MetricsReport};
pub use gateway::{ChatRequest, Gateway, GatewayError, LlmMode, Transcript};
pub use pipeline::{run_pipeline, DefinitionPlan, PipelineError, RunOptions, RunOutcome};
pub use taxonomy::{validate_taxonomy, CandidateEdge, EdgeStage, Taxonomy, Violation};
pub use term::{normalize_term, TermRecord};
