use std::collections::VecDeque;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::device::{DeviceGeometry, OpKind, ZoneAction, ZoneCommand};
use crate::engine::SimTime;

use super::jobspec::{Job, Pattern};

/// One step of a submitter's op stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamItem {
    /// Untimed: reset the zone, write `blocks` sequentially, optionally
    /// finish it. Applied once the submitter has nothing in flight.
    Stage {
        zone: u32,
        blocks: u64,
        finish: bool,
    },
    /// Idle for a while once the submitter has nothing in flight. A zero
    /// pause only waits for the drain.
    Pause {
        ns: SimTime,
    },
    Command(ZoneCommand),
}

/// Zones handed to submitter `sub` of a job: round-robin over the zone set.
pub fn submitter_zones(job: &Job, sub: u32) -> Vec<u32> {
    job.zone_set.zones().skip(sub as usize).step_by(job.num_submitters as usize).collect()
}

/// Per-submitter seed derived from the run seed.
pub fn stream_seed(seed: u64, job: usize, sub: u32) -> u64 {
    let lane = (job as u64) << 32 | u64::from(sub);
    seed ^ lane.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Deterministic op stream for one submitter of one job. It tracks write
/// pointers itself and never looks at the device.
#[derive(Debug, Clone)]
pub struct OpStream {
    job: Job,
    geometry: DeviceGeometry,
    submitter: u32,
    zones: Vec<u32>,
    rng: ChaCha8Rng,
    req_blocks: u32,
    stage_blocks: u64,
    pause_ns: SimTime,
    /// Per-zone cursor; `None` until the zone is first touched in a pass.
    cursors: Vec<Option<u64>>,
    zone_idx: usize,
    passes: u64,
    emitted: u64,
    buffer: VecDeque<StreamItem>,
    done: bool,
}

impl OpStream {
    pub fn new(job: &Job, geometry: &DeviceGeometry, submitter: u32, seed: u64) -> Self {
        let zones = submitter_zones(job, submitter);
        Self {
            job: job.clone(),
            geometry: *geometry,
            submitter,
            cursors: vec![None; zones.len()],
            zones,
            rng: ChaCha8Rng::seed_from_u64(seed),
            req_blocks: job.request_blocks(geometry.block_bytes),
            stage_blocks: job.stage_blocks(geometry),
            pause_ns: (job.stabilize_s.unwrap_or(0.0) * 1e9).round() as SimTime,
            zone_idx: 0,
            passes: 0,
            emitted: 0,
            buffer: VecDeque::new(),
            done: false,
        }
    }

    pub fn op(&self) -> OpKind {
        self.job.op
    }

    pub fn zones(&self) -> &[u32] {
        &self.zones
    }

    fn cap(&self) -> u64 {
        self.geometry.zone_cap_blocks
    }

    fn bounded(&self) -> bool {
        self.job.op_count.is_some() || self.job.duration_virtual_s.is_some()
    }

    fn stage(&mut self, zone: u32) {
        self.buffer.push_back(StreamItem::Stage { zone, blocks: self.stage_blocks, finish: self.job.stage_finish });
        if self.pause_ns > 0 {
            self.buffer.push_back(StreamItem::Pause { ns: self.pause_ns });
        }
    }

    fn cmd(&mut self, c: ZoneCommand) {
        self.buffer.push_back(StreamItem::Command(c));
    }

    /// First touch of a zone in the current pass.
    fn touch(&mut self, idx: usize) -> u64 {
        if let Some(c) = self.cursors[idx] {
            return c;
        }
        let zone = self.zones[idx];
        if self.job.stage.is_some() || self.passes > 0 {
            self.stage(zone);
        }
        if self.job.explicit_open && self.stage_blocks < self.cap() {
            self.cmd(ZoneCommand::manage(ZoneAction::Open, zone, self.submitter));
            // I/O to the zone waits for the open to complete
            self.buffer.push_back(StreamItem::Pause { ns: 0 });
        }
        self.cursors[idx] = Some(self.stage_blocks);
        self.stage_blocks
    }

    fn io(&mut self, idx: usize, cursor: u64) {
        let zone = self.zones[idx];
        let n = u64::from(self.req_blocks).min(self.cap() - cursor) as u32;
        let lba = self.geometry.zslba(zone) + cursor;
        let c = match self.job.op {
            OpKind::Append => ZoneCommand::append(zone, n, self.submitter),
            _ => ZoneCommand::write(zone, lba, n, self.submitter),
        };
        self.cursors[idx] = Some(cursor + u64::from(n));
        self.cmd(c);
    }

    fn recycle(&mut self) -> bool {
        if !self.job.recycle_zones {
            return false;
        }
        self.passes += 1;
        self.cursors.iter_mut().for_each(|c| *c = None);
        self.zone_idx = 0;
        true
    }

    fn refill_writes(&mut self) -> bool {
        let cap = self.cap();
        match self.job.pattern {
            Pattern::Sequential => loop {
                if self.zone_idx == self.zones.len() && !self.recycle() {
                    return false;
                }
                let idx = self.zone_idx;
                let cursor = self.touch(idx);
                if cursor >= cap {
                    self.zone_idx += 1;
                    continue;
                }
                self.io(idx, cursor);
                return true;
            },
            Pattern::Random => loop {
                let open: Vec<usize> =
                    (0..self.zones.len()).filter(|&i| self.cursors[i].is_none_or(|c| c < cap)).collect();
                if open.is_empty() {
                    if self.stage_blocks >= cap || !self.recycle() {
                        return false;
                    }
                    continue;
                }
                let idx = open[self.rng.random_range(0..open.len())];
                let cursor = self.touch(idx);
                if cursor >= cap {
                    continue;
                }
                self.io(idx, cursor);
                return true;
            },
        }
    }

    fn refill_reads(&mut self) -> bool {
        let extent = if self.job.read_unwritten { self.cap() } else { self.stage_blocks };
        if self.passes == 0 {
            self.passes = 1;
            if self.job.stage.is_some() {
                for &zone in &self.zones.clone() {
                    self.buffer.push_back(StreamItem::Stage {
                        zone,
                        blocks: self.stage_blocks,
                        finish: self.job.stage_finish,
                    });
                }
                if self.pause_ns > 0 {
                    self.buffer.push_back(StreamItem::Pause { ns: self.pause_ns });
                }
            }
            self.cursors.iter_mut().for_each(|c| *c = Some(0));
        }
        let req = u64::from(self.req_blocks);
        let (idx, offset) = match self.job.pattern {
            Pattern::Sequential => {
                if self.zone_idx == self.zones.len() {
                    if !self.bounded() {
                        return false;
                    }
                    self.zone_idx = 0;
                    self.cursors.iter_mut().for_each(|c| *c = Some(0));
                }
                let idx = self.zone_idx;
                let offset = self.cursors[idx].unwrap_or(0);
                let next = offset + req;
                if next + req > extent {
                    self.zone_idx += 1;
                }
                self.cursors[idx] = Some(next);
                (idx, offset)
            }
            Pattern::Random => {
                let idx = self.rng.random_range(0..self.zones.len());
                let slots = extent / req;
                (idx, self.rng.random_range(0..slots) * req)
            }
        };
        let zone = self.zones[idx];
        let lba = self.geometry.zslba(zone) + offset;
        self.cmd(ZoneCommand::read(zone, lba, self.req_blocks, self.submitter));
        true
    }

    fn refill_manage(&mut self, action: ZoneAction) -> bool {
        if self.zone_idx == self.zones.len() {
            if !self.bounded() {
                return false;
            }
            self.zone_idx = 0;
        }
        let zone = self.zones[self.zone_idx];
        self.zone_idx += 1;
        self.stage(zone);
        if action == ZoneAction::Close && self.stage_blocks == 0 {
            self.cmd(ZoneCommand::manage(ZoneAction::Open, zone, self.submitter));
        }
        self.cmd(ZoneCommand::manage(action, zone, self.submitter));
        // leave the zone empty so its resources do not pile up
        self.buffer.push_back(StreamItem::Stage { zone, blocks: 0, finish: false });
        true
    }

    fn refill(&mut self) -> bool {
        match self.job.op {
            OpKind::Write | OpKind::Append => self.refill_writes(),
            OpKind::Read => self.refill_reads(),
            other => self.refill_manage(other.action().expect("management kind")),
        }
    }
}

impl Iterator for OpStream {
    type Item = StreamItem;

    fn next(&mut self) -> Option<StreamItem> {
        loop {
            if let Some(item) = self.buffer.front().copied() {
                if let StreamItem::Command(c) = item {
                    if c.kind == self.job.op {
                        if self.job.op_count.is_some_and(|n| self.emitted >= n) {
                            self.done = true;
                            self.buffer.clear();
                            return None;
                        }
                        self.emitted += 1;
                    }
                }
                self.buffer.pop_front();
                return Some(item);
            }
            if self.done || !self.refill() {
                self.done = true;
                return None;
            }
        }
    }
}

/// Byte token bucket shaping one job's submissions. Holds at most one
/// request's worth of tokens and starts empty.
#[derive(Debug, Clone)]
pub struct RateLimiter {
    bytes_per_ns: f64,
    capacity: f64,
    tokens: f64,
    last: SimTime,
}

impl RateLimiter {
    pub fn new(rate_mib_s: f64, capacity_bytes: u64) -> Self {
        Self { bytes_per_ns: rate_mib_s * 1024.0 * 1024.0 / 1e9, capacity: capacity_bytes as f64, tokens: 0.0, last: 0 }
    }

    fn refill(&mut self, now: SimTime) {
        if now > self.last {
            self.tokens = (self.tokens + (now - self.last) as f64 * self.bytes_per_ns).min(self.capacity);
            self.last = now;
        }
    }

    /// Takes `bytes` if available now; otherwise returns when they will be.
    pub fn try_take(&mut self, now: SimTime, bytes: u64) -> Result<(), SimTime> {
        self.refill(now);
        let need = bytes as f64;
        if self.tokens + 1e-6 >= need {
            self.tokens -= need;
            return Ok(());
        }
        let wait = ((need - self.tokens) / self.bytes_per_ns).ceil() as SimTime;
        Err(self.last + wait.max(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{ZnsDevice, ZnsError};
    use crate::workload::jobspec::ZoneSet;

    fn g() -> DeviceGeometry {
        DeviceGeometry::zn540()
    }

    fn commands(stream: OpStream) -> Vec<ZoneCommand> {
        stream
            .filter_map(|i| match i {
                StreamItem::Command(c) => Some(c),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn zone_fill_op_count() {
        let job = Job { request_bytes: Some(4096), ..Job::new(OpKind::Write) };
        let cmds = commands(OpStream::new(&job, &g(), 0, 1));
        assert_eq!(cmds.len(), 275_712);
        assert_eq!(cmds.last().unwrap().lba, Some(275_711));
    }

    #[test]
    fn tail_command_fills_zone_exactly() {
        let mut geo = g();
        geo.zone_cap_blocks = 10;
        geo.zone_size_blocks = 16;
        let job = Job { request_bytes: Some(4 * 4096), zone_set: ZoneSet::Count(2), ..Job::new(OpKind::Append) };
        let sizes: Vec<u32> = commands(OpStream::new(&job, &geo, 0, 1)).iter().map(|c| c.nblocks.unwrap()).collect();
        assert_eq!(sizes, vec![4, 4, 2, 4, 4, 2]);
    }

    #[test]
    fn sequential_writes_never_unaligned() {
        let mut geo = g();
        geo.zone_cap_blocks = 50;
        geo.zone_size_blocks = 64;
        geo.num_zones = 8;
        geo.max_open_zones = 8;
        geo.max_active_zones = 8;
        for pattern in [Pattern::Sequential, Pattern::Random] {
            let job = Job {
                request_bytes: Some(3 * 4096),
                zone_set: ZoneSet::Count(4),
                pattern,
                op_count: Some(500),
                recycle_zones: true,
                ..Job::new(OpKind::Write)
            };
            let mut dev = ZnsDevice::new(geo).unwrap();
            for item in OpStream::new(&job, &geo, 0, 3) {
                match item {
                    StreamItem::Stage { zone, .. } => {
                        let _ = dev.zone_manage(zone, ZoneAction::Reset);
                    }
                    StreamItem::Command(c) => {
                        let r = dev.submit_write(c.zone_id, c.lba.unwrap(), c.nblocks.unwrap());
                        assert_ne!(r.err(), Some(ZnsError::UnalignedWrite));
                        r.unwrap();
                    }
                    StreamItem::Pause { .. } => {}
                }
            }
        }
    }

    #[test]
    fn staged_management_stream() {
        let job = Job { stage: Some(0.5), zone_set: ZoneSet::Count(100), ..Job::new(OpKind::Reset) };
        let items: Vec<StreamItem> = OpStream::new(&job, &g(), 0, 0).collect();
        let resets = items.iter().filter(|i| matches!(i, StreamItem::Command(_))).count();
        assert_eq!(resets, 100);
        let stages: Vec<u64> = items
            .iter()
            .filter_map(|i| match i {
                StreamItem::Stage { blocks, .. } if *blocks > 0 => Some(*blocks),
                _ => None,
            })
            .collect();
        assert_eq!(stages.len(), 100);
        assert!(stages.iter().all(|&b| b == 137_856));
    }

    #[test]
    fn close_job_opens_first() {
        let job = Job { zone_set: ZoneSet::Count(2), ..Job::new(OpKind::Close) };
        let kinds: Vec<OpKind> = commands(OpStream::new(&job, &g(), 0, 0)).iter().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![OpKind::Open, OpKind::Close, OpKind::Open, OpKind::Close]);
    }

    #[test]
    fn random_reads_are_reproducible_and_aligned() {
        let job = Job {
            request_bytes: Some(8192),
            pattern: Pattern::Random,
            zone_set: ZoneSet::Count(4),
            stage: Some(0.25),
            op_count: Some(1000),
            ..Job::new(OpKind::Read)
        };
        let a = commands(OpStream::new(&job, &g(), 0, 42));
        let b = commands(OpStream::new(&job, &g(), 0, 42));
        let c = commands(OpStream::new(&job, &g(), 0, 43));
        assert_eq!(a, b);
        assert_ne!(a, c);
        let extent = job.stage_blocks(&g());
        for cmd in &a {
            let off = cmd.lba.unwrap() - g().zslba(cmd.zone_id);
            assert_eq!(off % 2, 0);
            assert!(off + 2 <= extent);
        }
    }

    #[test]
    fn submitters_split_zones() {
        let job =
            Job { num_submitters: 3, zone_set: ZoneSet::Range { start: 10, count: 7 }, ..Job::new(OpKind::Reset) };
        assert_eq!(submitter_zones(&job, 0), vec![10, 13, 16]);
        assert_eq!(submitter_zones(&job, 2), vec![12, 15]);
        assert_ne!(stream_seed(1, 0, 0), stream_seed(1, 0, 1));
    }

    #[test]
    fn rate_limiter_shapes() {
        let mut rl = RateLimiter::new(250.0, 128 * 1024);
        let bytes = 128 * 1024;
        let mut now = 0;
        let mut taken = 0u64;
        while now < 1_000_000_000 {
            match rl.try_take(now, bytes) {
                Ok(()) => taken += 1,
                Err(t) => now = t,
            }
        }
        // 250 MiB/s of 128 KiB requests is 2000/s
        assert!((1999..=2000).contains(&taken), "{taken}");
    }
}
