use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{DeviceGeometry, OpKind};
use crate::host::StackConfig;

#[derive(Debug, Error)]
pub enum JobSpecError {
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid job spec: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    #[default]
    Sequential,
    Random,
}

/// Zones a job works on: the first `n` zones, or an explicit range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZoneSet {
    Count(u32),
    Range { start: u32, count: u32 },
}

impl Default for ZoneSet {
    fn default() -> Self {
        ZoneSet::Count(1)
    }
}

impl ZoneSet {
    pub fn start(&self) -> u32 {
        match *self {
            ZoneSet::Count(_) => 0,
            ZoneSet::Range { start, .. } => start,
        }
    }

    pub fn count(&self) -> u32 {
        match *self {
            ZoneSet::Count(n) => n,
            ZoneSet::Range { count, .. } => count,
        }
    }

    pub fn zones(&self) -> std::ops::Range<u32> {
        self.start()..self.start() + self.count()
    }
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Job {
    pub op: OpKind,
    #[serde(default)]
    pub pattern: Pattern,
    /// Required for read, write and append.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_bytes: Option<u64>,
    #[serde(default = "one")]
    pub queue_depth: u32,
    #[serde(default = "one")]
    pub num_submitters: u32,
    #[serde(default)]
    pub zone_set: ZoneSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit_mib_s: Option<f64>,
    /// No new commands are submitted after this much virtual time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_virtual_s: Option<f64>,
    /// Commands of kind `op` issued per submitter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op_count: Option<u64>,
    /// Fraction of zone capacity written, untimed, before a zone is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<f64>,
    /// Idle time after staging.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stabilize_s: Option<f64>,
    /// Issue a timed open before the first write or append to each zone.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub explicit_open: bool,
    /// Finish each zone, untimed, after staging it.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub stage_finish: bool,
    /// Reads cover the whole zone capacity rather than the staged extent.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub read_unwritten: bool,
    /// Empty the zones, untimed, and start over once they are all full.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub recycle_zones: bool,
}

impl Job {
    pub fn new(op: OpKind) -> Self {
        Self {
            op,
            pattern: Pattern::Sequential,
            request_bytes: None,
            queue_depth: 1,
            num_submitters: 1,
            zone_set: ZoneSet::Count(1),
            rate_limit_mib_s: None,
            duration_virtual_s: None,
            op_count: None,
            stage: None,
            stabilize_s: None,
            explicit_open: false,
            stage_finish: false,
            read_unwritten: false,
            recycle_zones: false,
        }
    }

    pub fn request_blocks(&self, block_bytes: u32) -> u32 {
        (self.request_bytes.unwrap_or(0) / u64::from(block_bytes)) as u32
    }

    pub fn stage_blocks(&self, geometry: &DeviceGeometry) -> u64 {
        (self.stage.unwrap_or(0.0) * geometry.zone_cap_blocks as f64).round() as u64
    }

    fn writes_zones(&self) -> bool {
        self.op != OpKind::Read
    }

    fn validate(&self, i: usize, g: &DeviceGeometry) -> Result<(), JobSpecError> {
        let err = |m: String| Err(JobSpecError::Validation(format!("jobs[{i}]: {m}")));
        if self.queue_depth == 0 {
            return err("queue_depth must be at least 1".into());
        }
        if self.num_submitters == 0 {
            return err("num_submitters must be at least 1".into());
        }
        let zs = self.zone_set;
        if zs.count() == 0 {
            return err("zone_set must contain at least one zone".into());
        }
        if u64::from(zs.start()) + u64::from(zs.count()) > u64::from(g.num_zones) {
            return err(format!(
                "zone_set {}..{} exceeds the {} zones of the device",
                zs.start(),
                u64::from(zs.start()) + u64::from(zs.count()),
                g.num_zones
            ));
        }
        if self.num_submitters > zs.count() {
            return err("num_submitters exceeds the number of zones".into());
        }
        if self.op.is_io() {
            let Some(bytes) = self.request_bytes else {
                return err(format!("request_bytes is required for {}", self.op));
            };
            if bytes == 0 || bytes % u64::from(g.block_bytes) != 0 {
                return err(format!(
                    "request_bytes {bytes} is not a positive multiple of the {} byte block",
                    g.block_bytes
                ));
            }
            if bytes / u64::from(g.block_bytes) > g.zone_cap_blocks {
                return err("request_bytes exceeds the zone capacity".into());
            }
        }
        if self.rate_limit_mib_s.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
            return err("rate_limit_mib_s must be positive".into());
        }
        if self.duration_virtual_s.is_some_and(|d| !(d > 0.0 && d.is_finite())) {
            return err("duration_virtual_s must be positive".into());
        }
        if self.op_count == Some(0) {
            return err("op_count must be at least 1".into());
        }
        if self.stage.is_some_and(|s| !(0.0..=1.0).contains(&s)) {
            return err("stage must be a fraction in [0, 1]".into());
        }
        if self.stabilize_s.is_some_and(|s| !(s >= 0.0 && s.is_finite())) {
            return err("stabilize_s must be non-negative".into());
        }
        if self.stage_finish && self.stage_blocks(g) == 0 {
            return err("stage_finish needs a non-empty stage".into());
        }
        let bounded = self.op_count.is_some() || self.duration_virtual_s.is_some();
        let endless = self.pattern == Pattern::Random || self.recycle_zones;
        if endless && !bounded {
            return err("random or recycling jobs need op_count or duration_virtual_s".into());
        }
        match self.op {
            OpKind::Read => {
                let extent = if self.read_unwritten { g.zone_cap_blocks } else { self.stage_blocks(g) };
                if extent < u64::from(self.request_blocks(g.block_bytes)) {
                    return err("reads need a staged extent of at least one request, or read_unwritten".into());
                }
            }
            OpKind::Open if self.stage_blocks(g) > 0 && !self.stage_finish => {
                return err("open needs an empty or closed zone; do not stage it".into());
            }
            OpKind::Finish => {
                let b = self.stage_blocks(g);
                if b == 0 || b >= g.zone_cap_blocks || self.stage_finish {
                    return err("finish needs a stage strictly between empty and full".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub jobs: Vec<Job>,
    #[serde(default)]
    pub stack: StackConfig,
    #[serde(default)]
    pub seed: u64,
}

impl JobSpec {
    pub fn single(job: Job) -> Self {
        Self { jobs: vec![job], stack: StackConfig::default(), seed: 0 }
    }

    /// Parses a spec document: either `{jobs, stack, seed}` or a bare job.
    pub fn parse(text: &str) -> Result<Self, JobSpecError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| JobSpecError::Parse { path: ".".into(), message: e.to_string() })?;
        let path_err = |e: serde_path_to_error::Error<serde_json::Error>| JobSpecError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        };
        if value.get("jobs").is_some() {
            serde_path_to_error::deserialize(value).map_err(path_err)
        } else {
            serde_path_to_error::deserialize(value).map(JobSpec::single).map_err(path_err)
        }
    }

    pub fn validate(&self, geometry: &DeviceGeometry) -> Result<(), JobSpecError> {
        let s = &self.stack;
        if !(s.merge_window_us >= 0.0 && s.merge_window_us.is_finite()) {
            return Err(JobSpecError::Validation("stack.merge_window_us must be non-negative".into()));
        }
        if s.max_merge_bytes < u64::from(geometry.block_bytes) {
            return Err(JobSpecError::Validation("stack.max_merge_bytes must hold at least one block".into()));
        }
        for (i, job) in self.jobs.iter().enumerate() {
            job.validate(i, geometry)?;
        }
        for (i, a) in self.jobs.iter().enumerate() {
            for (j, b) in self.jobs.iter().enumerate().skip(i + 1) {
                let (ra, rb) = (a.zone_set.zones(), b.zone_set.zones());
                if a.writes_zones() && b.writes_zones() && ra.start < rb.end && rb.start < ra.end {
                    return Err(JobSpecError::Validation(format!("jobs[{i}] and jobs[{j}] modify overlapping zones")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("job spec serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::host::HostStack;

    fn g() -> DeviceGeometry {
        DeviceGeometry::zn540()
    }

    #[test]
    fn minimal_bare_job() {
        let spec = JobSpec::parse(r#"{"op":"write","request_bytes":4096,"queue_depth":1,"op_count":1}"#).unwrap();
        spec.validate(&g()).unwrap();
        assert_eq!(spec.jobs.len(), 1);
        assert_eq!(spec.jobs[0].zone_set, ZoneSet::Count(1));
        assert_eq!(spec.stack.stack, HostStack::UserspaceDirect);
    }

    #[test]
    fn full_document() {
        let text = r#"{"jobs":[{"op":"append","request_bytes":8192,"queue_depth":4,"zone_set":{"start":10,"count":2},"op_count":5}],
                      "stack":{"stack":"kernel-merge-sched","merge_window_us":5},"seed":9}"#;
        let spec = JobSpec::parse(text).unwrap();
        spec.validate(&g()).unwrap();
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.stack.max_merge_bytes, 131072);
        assert_eq!(spec.jobs[0].zone_set.zones(), 10..12);
        assert_eq!(JobSpec::parse(&spec.to_json()).unwrap(), spec);
    }

    #[test]
    fn misaligned_request_is_rejected() {
        let spec = JobSpec::parse(r#"{"op":"write","request_bytes":3000,"op_count":1}"#).unwrap();
        assert!(matches!(spec.validate(&g()), Err(JobSpecError::Validation(_))));
    }

    #[test]
    fn zone_set_beyond_device() {
        let spec = JobSpec::parse(r#"{"op":"write","request_bytes":4096,"zone_set":1000}"#).unwrap();
        let msg = spec.validate(&g()).unwrap_err().to_string();
        assert!(msg.contains("904"), "{msg}");
    }

    #[test]
    fn parse_errors_carry_paths() {
        let err = JobSpec::parse(r#"{"jobs":[{"op":"write","queue_depth":"deep"}]}"#).unwrap_err();
        match err {
            JobSpecError::Parse { path, .. } => assert_eq!(path, "jobs[0].queue_depth"),
            e => panic!("{e}"),
        }
        assert!(JobSpec::parse(r#"{"op":"write","bogus":1}"#).is_err());
        assert!(JobSpec::parse("{").is_err());
    }

    #[test]
    fn semantic_checks() {
        let bad = [
            r#"{"op":"read","request_bytes":4096,"op_count":3}"#,
            r#"{"op":"finish","stage":1.0}"#,
            r#"{"op":"finish"}"#,
            r#"{"op":"write","request_bytes":4096,"pattern":"random"}"#,
            r#"{"op":"write","request_bytes":4096,"queue_depth":0}"#,
            r#"{"op":"write","request_bytes":4096,"num_submitters":2}"#,
            r#"{"op":"write","request_bytes":4096,"stage":1.5}"#,
            r#"{"op":"reset","stage_finish":true}"#,
            r#"{"op":"append"}"#,
        ];
        for text in bad {
            let spec = JobSpec::parse(text).unwrap();
            assert!(spec.validate(&g()).is_err(), "{text}");
        }
        let ok = r#"{"op":"read","request_bytes":4096,"read_unwritten":true,"op_count":3}"#;
        JobSpec::parse(ok).unwrap().validate(&g()).unwrap();
    }

    #[test]
    fn overlapping_writers_rejected() {
        let mut spec = JobSpec::single(Job { request_bytes: Some(4096), ..Job::new(OpKind::Write) });
        spec.jobs.push(Job {
            request_bytes: Some(4096),
            op_count: Some(1),
            read_unwritten: true,
            ..Job::new(OpKind::Read)
        });
        spec.validate(&g()).unwrap();
        spec.jobs.push(Job::new(OpKind::Reset));
        assert!(spec.validate(&g()).is_err());
    }
}
