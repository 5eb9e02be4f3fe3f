pub mod backend;
pub mod model;
pub mod prompting;
pub mod windowing;
pub mod decoding;
pub mod simkit;
pub mod metrics;
pub mod attention;
pub mod pipeline;
