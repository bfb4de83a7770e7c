pub mod audio;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod io;
pub mod nn;
pub mod rng;
pub mod scores;
pub mod video;
