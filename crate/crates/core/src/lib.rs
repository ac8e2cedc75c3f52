pub mod aligner;
pub mod corpus;
pub mod lifecycle;
pub mod llmgen;
pub mod metrics;
pub mod parallel;
pub mod pipeline;
pub mod pyast;
pub mod replay;
pub mod stats;
