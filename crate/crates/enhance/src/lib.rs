//! Dual-task LLM enhancement of rule-based referring expressions.
//!
//! For each target a [`PromptPayload`] is built from guide images and the
//! target's rule expressions and sent to an OpenAI-compatible chat endpoint.
//! Replies are cached on disk by content hash, validated, and can be
//! exported as distillation pairs.

pub mod cache;
pub mod client;
pub mod cost;
pub mod distill;
mod error;
pub mod guides;
pub mod mock;
pub mod prompt;
pub mod validate;

pub use cache::DiskCache;
pub use client::{EndpointConfig, Enhancer, Fetched};
pub use cost::{estimate_cost, CostModel};
pub use distill::{export_distillation_pairs, TeacherRecord};
pub use error::{EnhanceError, Result};
pub use guides::{render_guides, GuidePair};
pub use prompt::{PromptPayload, INSTRUCTION_VERSION};
pub use validate::{validate_enhancement, EnhancementResult, ItemFlag, Validated};
