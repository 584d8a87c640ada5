use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::device::{DeviceGeometry, DeviceReport, OpKind};
use crate::engine::{Completion, SimOutput, SimTime};
use crate::perf::DeviceProfile;
use crate::workload::JobSpec;

pub const REPORT_VERSION: u32 = 1;
const NS_PER_S: SimTime = 1_000_000_000;
const MIB: f64 = 1024.0 * 1024.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("percentile of an empty sample")]
    EmptyInput,
    #[error("percentile must lie in (0, 100]")]
    BadPercentile,
}

/// Nearest-rank percentile: the value at rank ceil(p/100 * n) of the sorted
/// sample.
pub fn percentile(values: &[f64], p: f64) -> Result<f64, StatsError> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

pub fn percentile_sorted<T: Copy>(sorted: &[T], p: f64) -> Result<T, StatsError> {
    if sorted.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(StatsError::BadPercentile);
    }
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpStats {
    pub count: u64,
    pub ok: u64,
    pub errors: BTreeMap<String, u64>,
    pub mean_latency_us: Option<f64>,
    pub median_latency_us: Option<f64>,
    pub p95_latency_us: Option<f64>,
    pub p99_latency_us: Option<f64>,
    pub max_latency_us: Option<f64>,
    pub throughput_iops: f64,
    pub throughput_mib_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub iops: Vec<f64>,
    pub mib_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub bucket_s: f64,
    pub ops: BTreeMap<String, SeriesStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub submissions: u64,
    pub device_commands: u64,
    pub merge_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSummary {
    pub peak_open_zones: u32,
    pub peak_active_zones: u32,
    pub empty_zone_resets: u64,
    pub zero_fill_reads: u64,
    pub final_state: DeviceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub geometry: DeviceGeometry,
    pub profile_id: String,
    pub jobspec_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub config: ConfigEcho,
    pub duration_virtual_s: f64,
    pub completions: u64,
    pub ops: BTreeMap<String, OpStats>,
    pub time_series: TimeSeries,
    pub merge: MergeReport,
    pub device: DeviceSummary,
}

/// SHA-256 of the job spec's canonical JSON.
pub fn jobspec_hash(spec: &JobSpec) -> String {
    let canonical = serde_json::to_string(spec).expect("job spec serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn op_stats(trace: &[Completion], kind: OpKind, window: SimTime, block_bytes: u32) -> OpStats {
    let mut errors = BTreeMap::new();
    let mut lat: Vec<SimTime> = Vec::new();
    let mut bytes = 0u64;
    let mut count = 0;
    for c in trace.iter().filter(|c| c.kind == kind) {
        count += 1;
        match c.error {
            Some(e) => *errors.entry(e.code().to_owned()).or_insert(0) += 1,
            None => {
                lat.push(c.latency_ns());
                bytes += u64::from(c.nblocks) * u64::from(block_bytes);
            }
        }
    }
    lat.sort_unstable();
    let us = |ns: SimTime| ns as f64 / 1000.0;
    let pct = |p| percentile_sorted(&lat, p).ok().map(us);
    let secs = window as f64 / 1e9;
    let ok = lat.len() as u64;
    let sum: u128 = lat.iter().map(|&l| u128::from(l)).sum();
    OpStats {
        count,
        ok,
        errors,
        mean_latency_us: (ok > 0).then(|| sum as f64 / ok as f64 / 1000.0),
        median_latency_us: pct(50.0),
        p95_latency_us: pct(95.0),
        p99_latency_us: pct(99.0),
        max_latency_us: lat.last().copied().map(us),
        throughput_iops: if secs > 0.0 { ok as f64 / secs } else { 0.0 },
        throughput_mib_s: if secs > 0.0 { bytes as f64 / MIB / secs } else { 0.0 },
    }
}

/// Completed ops and bytes per whole virtual second, per kind.
pub fn per_second(trace: &[Completion], kind: OpKind, end: SimTime, block_bytes: u32) -> SeriesStats {
    let n = end.div_ceil(NS_PER_S) as usize;
    let mut ops = vec![0u64; n];
    let mut bytes = vec![0u64; n];
    for c in trace.iter().filter(|c| c.kind == kind && c.is_ok()) {
        let b = ((c.complete / NS_PER_S) as usize).min(n.saturating_sub(1));
        ops[b] += 1;
        bytes[b] += u64::from(c.nblocks) * u64::from(block_bytes);
    }
    SeriesStats {
        iops: ops.iter().map(|&o| o as f64).collect(),
        mib_s: bytes.iter().map(|&b| b as f64 / MIB).collect(),
    }
}

impl RunReport {
    pub fn new(profile: &DeviceProfile, spec: &JobSpec, seed: u64, out: &SimOutput) -> Self {
        let block_bytes = profile.geometry.block_bytes;
        let window = out.end_time;
        let mut ops = BTreeMap::new();
        let mut series = BTreeMap::new();
        for kind in OpKind::ALL {
            ops.insert(kind.name().to_owned(), op_stats(&out.trace, kind, window, block_bytes));
            series.insert(kind.name().to_owned(), per_second(&out.trace, kind, window, block_bytes));
        }
        RunReport {
            version: REPORT_VERSION,
            config: ConfigEcho {
                geometry: profile.geometry,
                profile_id: profile.id.clone(),
                jobspec_hash: jobspec_hash(spec),
                seed,
            },
            duration_virtual_s: window as f64 / 1e9,
            completions: out.trace.len() as u64,
            ops,
            time_series: TimeSeries { bucket_s: 1.0, ops: series },
            merge: MergeReport {
                submissions: out.merge.submissions,
                device_commands: out.merge.device_commands,
                merge_rate: out.merge.merge_rate(),
            },
            device: DeviceSummary {
                peak_open_zones: out.peak_open_zones,
                peak_active_zones: out.peak_active_zones,
                empty_zone_resets: out.empty_resets,
                zero_fill_reads: out.trace.iter().filter(|c| c.zero_fill).count() as u64,
                final_state: out.final_device.clone(),
            },
        }
    }

    pub fn op(&self, kind: OpKind) -> &OpStats {
        &self.ops[kind.name()]
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub const TRACE_HEADER: [&str; 8] =
    ["submit_us", "complete_us", "op", "zone", "lba", "nblocks", "status", "latency_us"];

pub fn write_trace_csv<W: Write>(trace: &[Completion], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for c in trace {
        let status = c.error.map_or("ok", |e| e.code());
        w.write_record([
            (c.submit as f64 / 1000.0).to_string(),
            (c.complete as f64 / 1000.0).to_string(),
            c.kind.name().to_owned(),
            c.zone_id.to_string(),
            c.lba.map(|l| l.to_string()).unwrap_or_default(),
            c.nblocks.to_string(),
            status.to_owned(),
            c.latency_us().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
