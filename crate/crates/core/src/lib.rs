//! Normative infrastructure toolkit: finite games, sanction games and
//! classification institutions, plus the Normative Orchards simulation with
//! scripted and chat-backed agents and an experiment harness.

pub mod agents;
pub mod env;
pub mod exec;
pub mod game;
pub mod harness;
pub mod institution;
pub mod oracle;
pub mod sanction;
