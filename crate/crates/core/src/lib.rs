pub mod bands;
pub mod cli;
pub mod design;
pub mod fiber;
pub mod graph;
pub mod io;
pub mod limit;
pub mod selftest;
