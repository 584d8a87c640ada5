use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{DeviceGeometry, OpKind, Zone, ZoneAction};
use crate::host::HostStack;

const MIB: f64 = 1024.0 * 1024.0;
/// Standard normal 95th percentile.
const Z95: f64 = 1.644_853_626_951_472_2;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("no base latency entry for {0}")]
    UnknownOpKind(String),
    #[error("invalid profile: {0}")]
    Invalid(String),
    #[error("profile parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("cannot read profile {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyPoint {
    pub request_bytes: u64,
    pub latency_us: f64,
}

/// Latency over request size for one (op, LBA format, stack) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseLatencyRow {
    pub op: OpKind,
    pub lba_format_bytes: u32,
    pub stack: HostStack,
    pub points: Vec<LatencyPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub occupancy: f64,
    pub latency_ms: f64,
}

/// Piecewise-linear latency over zone occupancy, clamped outside the anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyModel {
    pub anchors: Vec<Anchor>,
}

impl OccupancyModel {
    pub fn new(points: &[(f64, f64)]) -> Self {
        Self { anchors: points.iter().map(|&(occupancy, latency_ms)| Anchor { occupancy, latency_ms }).collect() }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.anchors.len() < 2 {
            return Err(ProfileError::Invalid("occupancy model needs at least two anchors".into()));
        }
        for pair in self.anchors.windows(2) {
            if pair[1].occupancy <= pair[0].occupancy {
                return Err(ProfileError::Invalid("occupancy anchors must be strictly increasing".into()));
            }
        }
        if self.anchors.iter().any(|a| !(0.0..=1.0).contains(&a.occupancy) || !a.latency_ms.is_finite()) {
            return Err(ProfileError::Invalid("occupancy anchors must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn eval(&self, occupancy: f64) -> f64 {
        let a = &self.anchors;
        if occupancy <= a[0].occupancy {
            return a[0].latency_ms;
        }
        let last = a[a.len() - 1];
        if occupancy >= last.occupancy {
            return last.latency_ms;
        }
        let i = a.partition_point(|p| p.occupancy <= occupancy);
        let (lo, hi) = (a[i - 1], a[i]);
        let t = (occupancy - lo.occupancy) / (hi.occupancy - lo.occupancy);
        lo.latency_ms + t * (hi.latency_ms - lo.latency_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationLimits {
    /// Op-rate ceiling; `None` leaves the station limited by slots only.
    pub max_iops: Option<f64>,
    pub parallelism_slots: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationModel {
    pub read: StationLimits,
    pub write: StationLimits,
    pub append: StationLimits,
    pub management: StationLimits,
    /// Shared by writes and appends.
    pub bandwidth_ceiling_mib_s: f64,
    /// Separate ceiling for reads; `None` means reads are not byte-limited.
    #[serde(default)]
    pub read_bandwidth_ceiling_mib_s: Option<f64>,
    /// Op-rate ceiling of the write station when no explicit one is given.
    pub inter_zone_write_max_iops: f64,
}

impl SaturationModel {
    pub fn station(&self, kind: OpKind) -> StationLimits {
        match kind {
            OpKind::Read => self.read,
            OpKind::Write => StationLimits {
                max_iops: Some(
                    self.write
                        .max_iops
                        .map_or(self.inter_zone_write_max_iops, |m| m.min(self.inter_zone_write_max_iops)),
                ),
                ..self.write
            },
            OpKind::Append => self.append,
            _ => self.management,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum JitterMode {
    #[default]
    None,
    Lognormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct JitterSpec {
    pub mode: JitterMode,
    /// Missing kinds default to 1, i.e. no spread.
    #[serde(default)]
    pub p95_over_median: BTreeMap<OpKind, f64>,
}

impl JitterSpec {
    pub fn ratio(&self, kind: OpKind) -> f64 {
        self.p95_over_median.get(&kind).copied().unwrap_or(1.0)
    }

    /// Draws a latency with median `base` and the configured p95/median
    /// spread. Consumes no randomness when the spread is 1.
    pub fn sample<R: Rng + ?Sized>(&self, base: f64, kind: OpKind, rng: &mut R) -> f64 {
        let ratio = self.ratio(kind);
        if self.mode == JitterMode::None || ratio <= 1.0 {
            return base;
        }
        let sigma = ratio.ln() / Z95;
        LogNormal::new(base.ln(), sigma).expect("finite parameters").sample(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurchargeTable {
    pub write: f64,
    pub append: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub id: String,
    pub geometry: DeviceGeometry,
    pub base_latency_us: Vec<BaseLatencyRow>,
    pub open_latency_us: f64,
    pub close_latency_us: f64,
    pub implicit_open_surcharge_us: SurchargeTable,
    pub reset_model: OccupancyModel,
    /// Added to a reset when the zone was finished with capacity left.
    pub reset_finished_delta_ms: f64,
    pub finish_model: OccupancyModel,
    pub reset_interference_multiplier: BTreeMap<OpKind, f64>,
    pub ceilings: SaturationModel,
    #[serde(default)]
    pub jitter: JitterSpec,
}

fn row(op: OpKind, fmt: u32, stack: HostStack, points: &[(u64, f64)], note: Option<&str>) -> BaseLatencyRow {
    BaseLatencyRow {
        op,
        lba_format_bytes: fmt,
        stack,
        points: points.iter().map(|&(request_bytes, latency_us)| LatencyPoint { request_bytes, latency_us }).collect(),
        note: note.map(str::to_owned),
    }
}

/// False for NaN as well as for non-positive values.
fn positive(x: f64) -> bool {
    x > 0.0
}

fn at_least_one(x: f64) -> bool {
    x >= 1.0
}

impl DeviceProfile {
    /// Calibration for the 1 TB WD ZN540.
    pub fn zn540() -> Self {
        use HostStack::*;
        use OpKind::*;
        const K4: u64 = 4096;
        const K8: u64 = 8192;
        let approx_512 = Some("approximate: 2x the 4 KiB format value");
        let base_latency_us = vec![
            row(Write, 4096, UserspaceDirect, &[(K4, 11.36), (K8, 11.76)], Some("8 KiB value from 85 KIOPS at QD1")),
            row(
                Append,
                4096,
                UserspaceDirect,
                &[(K4, 14.84), (K8, 14.02)],
                Some("4 KiB value: 4 KiB write plus the largest observed gap of 3.48 us"),
            ),
            row(Read, 4096, UserspaceDirect, &[(K4, 81.41)], Some("approximate, p95")),
            row(Write, 4096, KernelNosched, &[(K4, 12.62)], None),
            row(Write, 4096, KernelMergeSched, &[(K4, 14.47)], None),
            row(Write, 512, UserspaceDirect, &[(K4, 22.72), (K8, 23.52)], approx_512),
            row(Append, 512, UserspaceDirect, &[(K4, 29.68), (K8, 28.04)], approx_512),
            row(Read, 512, UserspaceDirect, &[(K4, 162.82)], approx_512),
        ];
        let reset_ratio = 17.94;
        let mut reset_interference_multiplier = BTreeMap::new();
        reset_interference_multiplier.insert(Read, 28.00 / reset_ratio);
        reset_interference_multiplier.insert(Write, 32.00 / reset_ratio);
        reset_interference_multiplier.insert(Append, 31.48 / reset_ratio);
        let mut p95_over_median = BTreeMap::new();
        p95_over_median.insert(Reset, 17.94 / 16.19);
        Self {
            id: "zn540".into(),
            geometry: DeviceGeometry::zn540(),
            base_latency_us,
            open_latency_us: 9.56,
            close_latency_us: 11.01,
            implicit_open_surcharge_us: SurchargeTable { write: 2.02, append: 2.83 },
            reset_model: OccupancyModel::new(&[(0.0, 0.5), (0.5, 11.60), (1.0, 16.19)]),
            reset_finished_delta_ms: 3.08,
            finish_model: OccupancyModel::new(&[(0.001, 907.51), (1.0, 3.07)]),
            reset_interference_multiplier,
            ceilings: SaturationModel {
                read: StationLimits { max_iops: Some(424_000.0), parallelism_slots: 64 },
                write: StationLimits { max_iops: None, parallelism_slots: 4 },
                append: StationLimits { max_iops: Some(132_000.0), parallelism_slots: 4 },
                management: StationLimits { max_iops: None, parallelism_slots: 1 },
                bandwidth_ceiling_mib_s: 1155.0,
                read_bandwidth_ceiling_mib_s: None,
                inter_zone_write_max_iops: 186_000.0,
            },
            jitter: JitterSpec { mode: JitterMode::None, p95_over_median },
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ProfileError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let profile: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| ProfileError::Parse { path: e.path().to_string(), message: e.inner().to_string() })?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ProfileError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    /// Checks hard constraints and returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>, ProfileError> {
        let bad = |m: &str| Err(ProfileError::Invalid(m.to_owned()));
        self.geometry.validate().map_err(|e| ProfileError::Invalid(e.to_string()))?;
        for r in &self.base_latency_us {
            if !r.op.is_io() {
                return bad("base latency rows are for read, write and append only");
            }
            if r.points.is_empty() {
                return bad("base latency row has no points");
            }
            if r.points.windows(2).any(|w| w[1].request_bytes <= w[0].request_bytes) {
                return bad("base latency points must have increasing request sizes");
            }
            if r.points.iter().any(|p| p.request_bytes == 0 || !positive(p.latency_us)) {
                return bad("base latencies and request sizes must be positive");
            }
        }
        let s = &self.implicit_open_surcharge_us;
        if !(self.open_latency_us > 0.0 && self.close_latency_us > 0.0) || s.write < 0.0 || s.append < 0.0 {
            return bad("management latencies must be positive");
        }
        self.reset_model.validate()?;
        self.finish_model.validate()?;
        if self.reset_model.anchors.iter().chain(&self.finish_model.anchors).any(|a| !positive(a.latency_ms)) {
            return bad("occupancy model latencies must be positive");
        }
        if self.reset_interference_multiplier.iter().any(|(k, &m)| !k.is_io() || !at_least_one(m)) {
            return bad("interference multipliers must be >= 1 and keyed by an I/O kind");
        }
        let c = &self.ceilings;
        for kind in OpKind::ALL {
            let st = c.station(kind);
            if st.parallelism_slots == 0 || st.max_iops.is_some_and(|m| !positive(m)) {
                return bad("station slots and rates must be positive");
            }
        }
        if !positive(c.bandwidth_ceiling_mib_s)
            || !positive(c.inter_zone_write_max_iops)
            || c.read_bandwidth_ceiling_mib_s.is_some_and(|b| !positive(b))
        {
            return bad("bandwidth ceilings must be positive");
        }
        if self.jitter.p95_over_median.values().any(|&r| !at_least_one(r) || !r.is_finite()) {
            return bad("jitter ratios must be >= 1");
        }
        let mut warnings = Vec::new();
        for w in self.base_latency_us.iter().filter(|r| r.op == OpKind::Write) {
            let Some(a) = self
                .base_latency_us
                .iter()
                .find(|r| r.op == OpKind::Append && r.lba_format_bytes == w.lba_format_bytes && r.stack == w.stack)
            else {
                continue;
            };
            for p in &w.points {
                if let Ok(al) = lookup(&a.points, p.request_bytes, c.bandwidth_ceiling_mib_s) {
                    if al < p.latency_us {
                        warnings.push(format!(
                            "append latency {al} us below write latency {} us at {} bytes ({} B format, {})",
                            p.latency_us, p.request_bytes, w.lba_format_bytes, w.stack
                        ));
                    }
                }
            }
        }
        Ok(warnings)
    }

    fn row(&self, kind: OpKind, lba_format: u32, stack: HostStack) -> Option<&BaseLatencyRow> {
        let find = |stack| {
            self.base_latency_us.iter().find(|r| r.op == kind && r.lba_format_bytes == lba_format && r.stack == stack)
        };
        find(stack).or_else(|| find(HostStack::UserspaceDirect))
    }

    /// Latency of an unloaded I/O. Sizes between table entries interpolate
    /// linearly; beyond the largest entry the request is bandwidth-bound.
    pub fn base_latency(
        &self,
        kind: OpKind,
        req_bytes: u64,
        lba_format: u32,
        stack: HostStack,
    ) -> Result<f64, ProfileError> {
        let row = self
            .row(kind, lba_format, stack)
            .ok_or_else(|| ProfileError::UnknownOpKind(format!("{kind} with {lba_format} B format on {stack}")))?;
        lookup(&row.points, req_bytes, self.ceilings.bandwidth_ceiling_mib_s)
    }

    pub fn finish_latency_ms(&self, occupancy: f64) -> f64 {
        self.finish_model.eval(occupancy)
    }

    pub fn reset_latency_ms(&self, occupancy: f64, finished_before_reset: bool) -> f64 {
        let delta = if finished_before_reset { self.reset_finished_delta_ms } else { 0.0 };
        self.reset_model.eval(occupancy) + delta
    }

    /// Unloaded latency of a management command against `zone` as it was
    /// before the command.
    pub fn management_latency_us(&self, action: ZoneAction, zone: &Zone) -> f64 {
        let occupancy = zone.occupancy(self.geometry.zone_cap_blocks);
        match action {
            ZoneAction::Open => self.open_latency_us,
            ZoneAction::Close => self.close_latency_us,
            ZoneAction::Finish => self.finish_latency_ms(occupancy) * 1000.0,
            ZoneAction::Reset => self.reset_latency_ms(occupancy, zone.finished_before_reset) * 1000.0,
        }
    }

    pub fn implicit_open_surcharge_us(&self, kind: OpKind) -> f64 {
        match kind {
            OpKind::Write => self.implicit_open_surcharge_us.write,
            OpKind::Append => self.implicit_open_surcharge_us.append,
            _ => 0.0,
        }
    }

    /// Largest multiplier among the concurrently running kinds.
    pub fn reset_interference_factor(&self, concurrent: &BTreeSet<OpKind>) -> f64 {
        concurrent.iter().filter_map(|k| self.reset_interference_multiplier.get(k)).fold(1.0, |acc, &m| acc.max(m))
    }

    /// Resets never slow down I/O.
    pub fn io_interference_factor(&self, _resets_in_flight: bool) -> f64 {
        1.0
    }

    pub fn sample_latency<R: Rng + ?Sized>(&self, base_us: f64, kind: OpKind, rng: &mut R) -> f64 {
        self.jitter.sample(base_us, kind, rng)
    }
}

fn lookup(points: &[LatencyPoint], req_bytes: u64, bandwidth_mib_s: f64) -> Result<f64, ProfileError> {
    if req_bytes == 0 {
        return Err(ProfileError::Invalid("request size must be positive".into()));
    }
    let first = points[0];
    let last = points[points.len() - 1];
    if req_bytes <= first.request_bytes {
        return Ok(first.latency_us);
    }
    if req_bytes >= last.request_bytes {
        let transfer_us = req_bytes as f64 / (bandwidth_mib_s * MIB) * 1e6;
        return Ok(last.latency_us.max(transfer_us));
    }
    let i = points.partition_point(|p| p.request_bytes <= req_bytes);
    let (lo, hi) = (points[i - 1], points[i]);
    if lo.request_bytes == req_bytes {
        return Ok(lo.latency_us);
    }
    let t = (req_bytes - lo.request_bytes) as f64 / (hi.request_bytes - lo.request_bytes) as f64;
    Ok(lo.latency_us + t * (hi.latency_us - lo.latency_us))
}
