pub mod error;
pub mod lattice;
pub mod walks;
pub mod percolation;
pub mod rng;
pub mod stats;
pub mod field;
pub mod fourier;
pub mod diagrams;
pub mod expansion;
pub mod bootstrap;
pub mod experiment;
