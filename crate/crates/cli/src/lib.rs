//! Command-line front end: CSV/JSON file formats and the `impute`,
//! `baseline` and `simulate` subcommands.

pub mod cli;
pub mod io;
pub mod run;
