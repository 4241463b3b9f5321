pub mod analysis;
pub mod bench;
pub mod codegen;
pub mod config;
pub mod dsl;
pub mod engine;
pub mod evolve;
pub mod error;
pub mod examples;
pub mod facts;
pub mod layout;
pub mod llm;
pub mod manifest;
pub mod pipeline;
pub mod scene;
pub mod scene_json;
