//! Discrete-event simulator of a zoned-namespace SSD.
//!
//! [`device`] holds the functional zone model, [`perf`] the calibrated
//! timings, [`engine`] the event loop, [`host`] the host I/O paths,
//! [`workload`] job specs and op streams, and [`harness`] reports and
//! canned experiments.

pub mod device;
pub mod engine;
pub mod harness;
pub mod host;
pub mod perf;
pub mod workload;

pub use device::{DeviceGeometry, OpKind, ZnsDevice, ZnsError, Zone, ZoneAction, ZoneCommand, ZoneState};
pub use engine::{run, Completion, SimError, SimOutput, SimTime};
pub use host::{HostStack, StackConfig};
pub use perf::DeviceProfile;
pub use workload::{Job, JobSpec, Pattern, ZoneSet};
