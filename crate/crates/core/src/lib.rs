pub mod graph;
pub mod analysis;
pub mod milp;
pub mod solve;
pub mod placement;
pub mod plan;
pub mod oracle;
pub mod pipeline;
