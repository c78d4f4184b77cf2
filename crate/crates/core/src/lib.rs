pub mod coefficients;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod noise;
pub mod scenario;
pub mod weights;
pub mod reference;
pub mod representation;
pub mod stats;
