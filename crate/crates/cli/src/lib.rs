//! HTTP service and command line front end for the scenedeck engine.

pub mod api;
pub mod commands;
pub mod config;
pub mod service;
