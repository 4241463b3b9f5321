//! Prompt templates, structured-answer parsing and model backends.

mod backend;
pub mod format;
mod gateway;
pub mod parse;
mod scripted;
mod template;

pub use backend::{Backend, Completion, Message, NetworkBackend, Role};
pub use gateway::{Gateway, PARSE_REASKS};
pub use parse::{parse_structured, Section, StructuredOutput};
pub use scripted::{assignment_answer, instances_from_names, ScriptedBackend, ScriptedMode, DEFAULT_ERROR_RATE};
pub use template::{bindings_of, render_prompt, PromptRequest, TemplateId};
