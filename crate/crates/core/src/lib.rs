pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod evolve;
pub mod kinematics;
pub mod noise;
pub mod quadrature;
pub mod report;
pub mod states;
