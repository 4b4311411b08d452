//! Session-oriented pipeline service for meshforge: backend gateway, session
//! state machine, HTTP API and the headless pipeline used by the CLI.

pub mod api;
pub mod config;
pub mod gateway;
pub mod mock_backend;
pub mod pipeline;
pub mod session;
pub mod store;

pub use config::ServiceConfig;
