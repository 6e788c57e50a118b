//! Experience and skill accumulation for tool-using multimodal agents.

pub mod accumulation;
pub mod config;
pub mod eval;
pub mod gateway;
pub mod index;
pub mod inference;
pub mod knowledge;
pub mod media;
pub mod pipeline;
pub mod retry;
pub mod runtime;
pub mod textutil;
pub mod tools;
