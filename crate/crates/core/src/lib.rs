//! Syntactic template retrieval.
//!
//! Templates are truncated constituency parses. A two-tower scorer estimates
//! how good a paraphrase a template will steer for a given source sentence;
//! it is trained from oracle quality values with a squared-error plus
//! pairwise-rank objective, and queried either for plain top-k or for a
//! diverse set of high-scoring templates.

pub mod library;
pub mod metrics;
pub mod model;
pub mod retrieval;
pub mod scalar;
pub mod synth;
pub mod syntree;
pub mod ted;
pub mod trainer;

pub use library::{LibraryError, TemplateEntry, TemplateLibrary};
pub use model::{Hyper, ModelError, QstrModel, TemplateEncodingCache, Vocab};
pub use retrieval::{DiverseSet, DtsOptions, RetrievalError, RetrievalResult, Scorer};
pub use scalar::Scalar;
pub use syntree::{parse_bracket, LinearTemplate, ParseError, SyntaxTree};
pub use ted::{normalized_ted, ted, PreparedTree, TedCosts};
pub use trainer::{Sample, TrainConfig, TrainError};

/// Double-precision scorer, the precision used for training and checkpoints.
pub type Model = QstrModel<f64>;
/// Single-precision scorer for cheaper inference.
pub type Model32 = QstrModel<f32>;
pub type Params = model::ModelParams<f64>;
pub type EncodingCache = TemplateEncodingCache<f64>;
