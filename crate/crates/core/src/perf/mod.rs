//! Calibrated timing parameters and the profile fitter.

pub mod fit;
pub mod profile;

pub use fit::{fit_occupancy_model, read_samples, FitError, FitResult, Sample};
pub use profile::{
    Anchor, BaseLatencyRow, DeviceProfile, JitterMode, JitterSpec, LatencyPoint, OccupancyModel, ProfileError,
    SaturationModel, StationLimits, SurchargeTable,
};
