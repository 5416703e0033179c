pub mod catalog;
pub mod rng;
pub mod scene;
pub mod world;
pub mod planner;
pub mod provenance;
pub mod traj;
pub mod qa;
pub mod wire;
pub mod haystack;
pub mod eval;
pub mod cli;
