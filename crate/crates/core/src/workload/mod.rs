//! Declarative job specs and the op streams generated from them.

mod generate;
mod jobspec;

pub use generate::{stream_seed, submitter_zones, OpStream, RateLimiter, StreamItem};
pub use jobspec::{Job, JobSpec, JobSpecError, Pattern, ZoneSet};
