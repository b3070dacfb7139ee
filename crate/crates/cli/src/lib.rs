#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Configuration, file formats and subcommands of the `roughshe` binary.

pub mod commands;
pub mod config;
pub mod output;
