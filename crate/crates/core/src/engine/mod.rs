//! Discrete-event core. Virtual time is kept in integer nanoseconds.
//!
//! Within one timestep all due events are handled first, then queued work is
//! dispatched: zone gates and the merge scheduler, then the read, write and
//! append stations, and the management station last so that a reset sees the
//! I/O that started at the same instant.

mod resources;

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{DeviceReport, GeometryError, OpKind, ZnsDevice, ZnsError, Zone, ZoneAction, ZoneCommand};
use crate::host::{HostStack, MergeScheduler, MergeStats, PendingWrite};
use crate::perf::{DeviceProfile, ProfileError};
use crate::workload::{stream_seed, JobSpec, JobSpecError, OpStream, RateLimiter, StreamItem};

pub use resources::ByteBucket;
use resources::Station;

/// Burst size of the device-wide byte buckets.
const BUCKET_BYTES: u64 = 128 * 1024;

/// Virtual time in nanoseconds.
pub type SimTime = u64;

pub fn us_to_ns(us: f64) -> SimTime {
    (us * 1000.0).round() as SimTime
}

pub fn ns_to_us(ns: SimTime) -> f64 {
    ns as f64 / 1000.0
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    JobSpec(#[from] JobSpecError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("configuration error: {0}")]
    Config(String),
}

/// One finished submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    /// Submission order across the run.
    pub id: u64,
    pub job: u32,
    pub submitter: u32,
    pub kind: OpKind,
    pub zone_id: u32,
    /// Requested LBA for writes and reads; the assigned LBA for appends.
    pub lba: Option<u64>,
    pub nblocks: u32,
    pub error: Option<ZnsError>,
    pub submit: SimTime,
    pub complete: SimTime,
    pub zero_fill: bool,
}

impl Completion {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn latency_ns(&self) -> SimTime {
        self.complete - self.submit
    }

    pub fn latency_us(&self) -> f64 {
        ns_to_us(self.latency_ns())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    /// Sorted by completion time, then submission order.
    pub trace: Vec<Completion>,
    pub merge: MergeStats,
    pub peak_open_zones: u32,
    pub peak_active_zones: u32,
    pub final_device: DeviceReport,
    /// Zone states and write pointers at the end of the run.
    pub final_zones: Vec<Zone>,
    pub empty_resets: u64,
    pub end_time: SimTime,
    pub events: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EvKind {
    SubmitReady(usize),
    RateTokenRefill(usize),
    ServiceStart(usize),
    Complete(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Event {
    time: SimTime,
    submitter: u32,
    seq: u64,
    kind: EvKind,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        (other.time, other.submitter, other.seq).cmp(&(self.time, self.submitter, self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
struct Request {
    id: u64,
    cmd: ZoneCommand,
    job: usize,
    submitter: usize,
    submit: SimTime,
    zero_fill: bool,
}

#[derive(Debug, Clone)]
struct DevCmd {
    kind: OpKind,
    zone_id: u32,
    bytes: u64,
    implicit_open: bool,
    prior: Option<Zone>,
    members: Vec<usize>,
}

struct Submitter {
    job: usize,
    stream: OpStream,
    queue_depth: u32,
    outstanding: u32,
    pending: Option<StreamItem>,
    end: Option<SimTime>,
    blocked: bool,
    halted: bool,
    done: bool,
}

#[derive(Default)]
struct ZoneGate {
    busy: bool,
    queue: VecDeque<usize>,
}

/// Free-list backed storage so in-flight records stay bounded.
struct Slab<T> {
    items: Vec<Option<T>>,
    free: Vec<usize>,
}

impl<T> Slab<T> {
    fn new() -> Self {
        Self { items: Vec::new(), free: Vec::new() }
    }

    fn insert(&mut self, v: T) -> usize {
        if let Some(i) = self.free.pop() {
            self.items[i] = Some(v);
            i
        } else {
            self.items.push(Some(v));
            self.items.len() - 1
        }
    }

    fn get(&self, i: usize) -> &T {
        self.items[i].as_ref().expect("live slab entry")
    }

    fn remove(&mut self, i: usize) -> T {
        self.free.push(i);
        self.items[i].take().expect("live slab entry")
    }
}

fn station_index(kind: OpKind) -> usize {
    match kind {
        OpKind::Read => 0,
        OpKind::Write => 1,
        OpKind::Append => 2,
        _ => 3,
    }
}

struct Sim<'a> {
    profile: &'a DeviceProfile,
    stack: HostStack,
    now: SimTime,
    seq: u64,
    events: u64,
    heap: BinaryHeap<Event>,
    device: ZnsDevice,
    rng: ChaCha8Rng,
    submitters: Vec<Submitter>,
    limiters: Vec<Option<RateLimiter>>,
    requests: Slab<Request>,
    cmds: Slab<DevCmd>,
    next_request_id: u64,
    gates: Vec<ZoneGate>,
    ready_zones: BTreeSet<u32>,
    scheduler: Option<MergeScheduler>,
    stations: [Station; 4],
    write_bytes: ByteBucket,
    read_bytes: Option<ByteBucket>,
    in_service: [u32; 3],
    trace: Vec<Completion>,
    peak_open: u32,
    peak_active: u32,
    empty_resets: u64,
}

/// Runs a job spec to completion on a fresh device.
pub fn run(profile: &DeviceProfile, spec: &JobSpec, seed: u64) -> Result<SimOutput, SimError> {
    profile.validate()?;
    let geometry = profile.geometry;
    spec.validate(&geometry)?;
    let stack = spec.stack.stack;
    for job in spec.jobs.iter().filter(|j| j.op.is_io()) {
        let bytes = job.request_bytes.unwrap_or(0);
        profile.base_latency(job.op, bytes, geometry.block_bytes, stack)?;
    }

    let mut submitters = Vec::new();
    let mut limiters = Vec::new();
    for (j, job) in spec.jobs.iter().enumerate() {
        for s in 0..job.num_submitters {
            submitters.push(Submitter {
                job: j,
                stream: OpStream::new(job, &geometry, s, stream_seed(seed, j, s)),
                queue_depth: job.queue_depth,
                outstanding: 0,
                pending: None,
                end: job.duration_virtual_s.map(|d| (d * 1e9).round() as SimTime),
                blocked: false,
                halted: false,
                done: false,
            });
        }
        limiters.push(job.rate_limit_mib_s.map(|r| RateLimiter::new(r, job.request_bytes.unwrap_or(0))));
    }

    let c = &profile.ceilings;
    let station = |k: OpKind| {
        let l = c.station(k);
        Station::new(l.parallelism_slots, l.max_iops)
    };
    let mut sim = Sim {
        profile,
        stack,
        now: 0,
        seq: 0,
        events: 0,
        heap: BinaryHeap::new(),
        device: ZnsDevice::new(geometry)?,
        rng: ChaCha8Rng::seed_from_u64(seed),
        submitters,
        limiters,
        requests: Slab::new(),
        cmds: Slab::new(),
        next_request_id: 0,
        gates: (0..geometry.num_zones).map(|_| ZoneGate::default()).collect(),
        ready_zones: BTreeSet::new(),
        scheduler: stack.merges().then(|| MergeScheduler::new(&spec.stack, geometry.block_bytes)),
        stations: [station(OpKind::Read), station(OpKind::Write), station(OpKind::Append), station(OpKind::Reset)],
        write_bytes: ByteBucket::new(c.bandwidth_ceiling_mib_s, BUCKET_BYTES),
        read_bytes: c.read_bandwidth_ceiling_mib_s.map(|r| ByteBucket::new(r, BUCKET_BYTES)),
        in_service: [0; 3],
        trace: Vec::new(),
        peak_open: 0,
        peak_active: 0,
        empty_resets: 0,
    };
    for i in 0..sim.submitters.len() {
        sim.push(0, i as u32, EvKind::SubmitReady(i));
    }
    sim.main_loop();

    let mut trace = sim.trace;
    trace.sort_by_key(|c| (c.complete, c.id));
    Ok(SimOutput {
        end_time: trace.iter().map(|c| c.complete).max().unwrap_or(0),
        trace,
        merge: sim.scheduler.as_ref().map(|s| s.stats()).unwrap_or_default(),
        peak_open_zones: sim.peak_open,
        peak_active_zones: sim.peak_active,
        final_device: sim.device.device_report(),
        final_zones: sim.device.zones().to_vec(),
        empty_resets: sim.empty_resets,
        events: sim.events,
    })
}

impl Sim<'_> {
    fn push(&mut self, time: SimTime, submitter: u32, kind: EvKind) {
        self.seq += 1;
        self.heap.push(Event { time, submitter, seq: self.seq, kind });
    }

    fn main_loop(&mut self) {
        while let Some(first) = self.heap.peek() {
            debug_assert!(first.time >= self.now, "clock went backwards");
            self.now = first.time;
            loop {
                while self.heap.peek().is_some_and(|e| e.time == self.now) {
                    let ev = self.heap.pop().expect("peeked");
                    self.events += 1;
                    self.handle(ev.kind);
                }
                self.dispatch_all();
                if !self.heap.peek().is_some_and(|e| e.time == self.now) {
                    break;
                }
            }
        }
    }

    fn handle(&mut self, kind: EvKind) {
        match kind {
            EvKind::SubmitReady(s) | EvKind::RateTokenRefill(s) => {
                self.submitters[s].blocked = false;
                self.try_fill(s);
            }
            EvKind::ServiceStart(c) => self.begin_service(c),
            EvKind::Complete(c) => self.complete(c),
        }
    }

    fn note_device(&mut self) {
        self.peak_open = self.peak_open.max(self.device.open_zones());
        self.peak_active = self.peak_active.max(self.device.active_zones());
    }

    fn try_fill(&mut self, s: usize) {
        loop {
            let sub = &mut self.submitters[s];
            if sub.halted || sub.done || sub.blocked {
                return;
            }
            let Some(item) = sub.pending.take().or_else(|| sub.stream.next()) else {
                sub.done = true;
                return;
            };
            match item {
                StreamItem::Stage { .. } | StreamItem::Pause { .. } if sub.outstanding > 0 => {
                    sub.pending = Some(item);
                    return;
                }
                StreamItem::Stage { zone, blocks, finish } => {
                    let job = sub.job;
                    if let Err(e) = self.stage(zone, blocks, finish) {
                        let kind = self.submitters[s].stream_kind();
                        self.fail_unsubmitted(
                            s,
                            job,
                            ZoneCommand { kind, zone_id: zone, lba: None, nblocks: None, submitter_id: s as u32 },
                            e,
                        );
                        return;
                    }
                }
                StreamItem::Pause { ns: 0 } => {}
                StreamItem::Pause { ns } => {
                    sub.blocked = true;
                    let t = self.now + ns;
                    self.push(t, s as u32, EvKind::SubmitReady(s));
                    return;
                }
                StreamItem::Command(cmd) => {
                    if sub.outstanding >= sub.queue_depth {
                        sub.pending = Some(item);
                        return;
                    }
                    if sub.end.is_some_and(|end| self.now >= end) {
                        sub.done = true;
                        return;
                    }
                    let job = sub.job;
                    let bytes = cmd.bytes(self.device.geometry().block_bytes);
                    if bytes > 0 {
                        if let Some(limiter) = self.limiters[job].as_mut() {
                            if let Err(t) = limiter.try_take(self.now, bytes) {
                                let sub = &mut self.submitters[s];
                                sub.pending = Some(item);
                                sub.blocked = true;
                                self.push(t, s as u32, EvKind::RateTokenRefill(s));
                                return;
                            }
                        }
                    }
                    self.submit(s, job, cmd);
                }
            }
        }
    }

    fn stage(&mut self, zone: u32, blocks: u64, finish: bool) -> Result<(), ZnsError> {
        self.device.zone_manage(zone, ZoneAction::Reset)?;
        if blocks > 0 {
            let lba = self.device.geometry().zslba(zone);
            self.device.submit_write(zone, lba, blocks as u32)?;
            self.note_device();
            if finish && self.device.zone_report(zone)?.write_pointer < self.device.geometry().zone_cap_blocks {
                self.device.zone_manage(zone, ZoneAction::Finish)?;
            }
        }
        Ok(())
    }

    fn fail_unsubmitted(&mut self, s: usize, job: usize, cmd: ZoneCommand, e: ZnsError) {
        let id = self.next_request_id;
        self.next_request_id += 1;
        self.submitters[s].outstanding += 1;
        let r = self.requests.insert(Request { id, cmd, job, submitter: s, submit: self.now, zero_fill: false });
        self.finish_request(r, Some(e));
    }

    fn submit(&mut self, s: usize, job: usize, cmd: ZoneCommand) {
        let id = self.next_request_id;
        self.next_request_id += 1;
        self.submitters[s].outstanding += 1;
        let r = self.requests.insert(Request { id, cmd, job, submitter: s, submit: self.now, zero_fill: false });
        let block_bytes = self.device.geometry().block_bytes;
        match cmd.kind {
            OpKind::Append => match self.device.submit_append(cmd.zone_id, cmd.nblocks.unwrap_or(0)) {
                Ok(adm) => {
                    self.note_device();
                    self.requests.items[r].as_mut().expect("live").cmd.lba = Some(adm.lba);
                    self.enqueue(DevCmd {
                        kind: OpKind::Append,
                        zone_id: cmd.zone_id,
                        bytes: cmd.bytes(block_bytes),
                        implicit_open: adm.implicit_open,
                        prior: None,
                        members: vec![r],
                    });
                }
                Err(e) => self.finish_request(r, Some(e)),
            },
            OpKind::Read => match self.device.submit_read(cmd.lba.unwrap_or(0), cmd.nblocks.unwrap_or(0)) {
                Ok(adm) => {
                    self.requests.items[r].as_mut().expect("live").zero_fill = adm.zero_fill;
                    self.enqueue(DevCmd {
                        kind: OpKind::Read,
                        zone_id: cmd.zone_id,
                        bytes: cmd.bytes(block_bytes),
                        implicit_open: false,
                        prior: None,
                        members: vec![r],
                    });
                }
                Err(e) => self.finish_request(r, Some(e)),
            },
            OpKind::Write if self.scheduler.is_some() => {
                let w = PendingWrite {
                    request: r,
                    lba: cmd.lba.unwrap_or(0),
                    nblocks: cmd.nblocks.unwrap_or(0),
                    arrival: self.now,
                };
                self.scheduler.as_mut().expect("checked").submit(cmd.zone_id, w);
            }
            _ => {
                if cmd.zone_id as usize >= self.gates.len() {
                    self.finish_request(r, Some(ZnsError::BoundsExceeded));
                    return;
                }
                self.gates[cmd.zone_id as usize].queue.push_back(r);
                self.ready_zones.insert(cmd.zone_id);
            }
        }
    }

    fn enqueue(&mut self, cmd: DevCmd) {
        let st = station_index(cmd.kind);
        let c = self.cmds.insert(cmd);
        self.stations[st].queue.push_back(c);
    }

    /// Admits gated writes and management commands whose zone is free.
    fn dispatch_gates(&mut self) -> bool {
        let mut progress = false;
        let zones = std::mem::take(&mut self.ready_zones);
        let block_bytes = self.device.geometry().block_bytes;
        for zone in zones {
            while !self.gates[zone as usize].busy {
                let Some(r) = self.gates[zone as usize].queue.pop_front() else { break };
                progress = true;
                let cmd = self.requests.get(r).cmd;
                let result = match cmd.kind {
                    OpKind::Write => self
                        .device
                        .submit_write(zone, cmd.lba.unwrap_or(0), cmd.nblocks.unwrap_or(0))
                        .map(|adm| (adm.implicit_open, None)),
                    kind => {
                        let action = kind.action().expect("gated management op");
                        self.device.zone_manage(zone, action).map(|adm| {
                            if adm.noop {
                                self.empty_resets += 1;
                            }
                            (false, Some(adm.prior))
                        })
                    }
                };
                match result {
                    Ok((implicit_open, prior)) => {
                        self.note_device();
                        self.gates[zone as usize].busy = true;
                        self.enqueue(DevCmd {
                            kind: cmd.kind,
                            zone_id: zone,
                            bytes: cmd.bytes(block_bytes),
                            implicit_open,
                            prior,
                            members: vec![r],
                        });
                    }
                    Err(e) => self.finish_request(r, Some(e)),
                }
            }
        }
        progress
    }

    fn dispatch_scheduler(&mut self) -> bool {
        let Some(sched) = self.scheduler.as_mut() else { return false };
        if !sched.has_pending() {
            return false;
        }
        let block_bytes = self.device.geometry().block_bytes;
        for m in sched.dispatch() {
            match self.device.submit_write(m.zone_id, m.lba, m.nblocks) {
                Ok(adm) => {
                    self.note_device();
                    self.enqueue(DevCmd {
                        kind: OpKind::Write,
                        zone_id: m.zone_id,
                        bytes: u64::from(m.nblocks) * u64::from(block_bytes),
                        implicit_open: adm.implicit_open,
                        prior: None,
                        members: m.members,
                    });
                }
                Err(e) => {
                    self.scheduler.as_mut().expect("present").unlock(m.zone_id);
                    for r in m.members {
                        self.finish_request(r, Some(e));
                    }
                }
            }
        }
        true
    }

    fn dispatch_stations(&mut self) -> bool {
        let mut progress = false;
        for st in 0..4 {
            while self.stations[st].can_start() {
                progress = true;
                let c = self.stations[st].queue.pop_front().expect("non-empty");
                self.stations[st].busy += 1;
                let (kind, bytes) = {
                    let cmd = self.cmds.get(c);
                    (cmd.kind, cmd.bytes)
                };
                let ready = self.stations[st].pacer.as_ref().map_or(self.now as f64, |p| p.ready(self.now));
                let ready_ns = ready.ceil() as SimTime;
                let start = match kind {
                    OpKind::Write | OpKind::Append => self.write_bytes.reserve(ready_ns, bytes),
                    OpKind::Read => self.read_bytes.as_mut().map_or(ready_ns, |b| b.reserve(ready_ns, bytes)),
                    _ => ready_ns,
                };
                if let Some(p) = self.stations[st].pacer.as_mut() {
                    p.commit(ready, start);
                }
                if start == self.now {
                    self.begin_service(c);
                } else {
                    let sub = self.requests.get(self.cmds.get(c).members[0]).submitter as u32;
                    self.push(start, sub, EvKind::ServiceStart(c));
                }
            }
        }
        progress
    }

    fn dispatch_all(&mut self) {
        loop {
            let a = self.dispatch_scheduler();
            let b = self.dispatch_gates();
            let c = self.dispatch_stations();
            if !(a || b || c) {
                break;
            }
        }
    }

    fn concurrent_io(&self) -> BTreeSet<OpKind> {
        [OpKind::Read, OpKind::Write, OpKind::Append]
            .into_iter()
            .filter(|&k| self.in_service[station_index(k)] > 0)
            .collect()
    }

    fn begin_service(&mut self, c: usize) {
        let p = self.profile;
        let (kind, bytes, implicit_open, prior) = {
            let cmd = self.cmds.get(c);
            (cmd.kind, cmd.bytes, cmd.implicit_open, cmd.prior)
        };
        let block_bytes = self.device.geometry().block_bytes;
        let median_us = if kind.is_io() {
            let base = p.base_latency(kind, bytes, block_bytes, self.stack).expect("validated before the run");
            let surcharge = if implicit_open { p.implicit_open_surcharge_us(kind) } else { 0.0 };
            self.in_service[station_index(kind)] += 1;
            (base + surcharge) * p.io_interference_factor(self.stations[3].busy > 0)
        } else {
            let action = kind.action().expect("management op");
            let base = p.management_latency_us(action, &prior.expect("management snapshot"));
            if action == ZoneAction::Reset {
                base * p.reset_interference_factor(&self.concurrent_io())
            } else {
                base
            }
        };
        let latency_us = p.sample_latency(median_us, kind, &mut self.rng);
        let done = self.now + us_to_ns(latency_us).max(1);
        let sub = self.requests.get(self.cmds.get(c).members[0]).submitter as u32;
        self.push(done, sub, EvKind::Complete(c));
    }

    fn complete(&mut self, c: usize) {
        let cmd = self.cmds.remove(c);
        self.stations[station_index(cmd.kind)].busy -= 1;
        if cmd.kind.is_io() {
            self.in_service[station_index(cmd.kind)] -= 1;
        }
        match cmd.kind {
            OpKind::Read | OpKind::Append => {}
            OpKind::Write if self.scheduler.is_some() => {
                self.scheduler.as_mut().expect("checked").unlock(cmd.zone_id);
            }
            _ => {
                self.gates[cmd.zone_id as usize].busy = false;
                self.ready_zones.insert(cmd.zone_id);
            }
        }
        let mut subs = Vec::with_capacity(cmd.members.len());
        for r in cmd.members {
            subs.push(self.requests.get(r).submitter);
            self.finish_request(r, None);
        }
        subs.dedup();
        for s in subs {
            self.try_fill(s);
        }
    }

    fn finish_request(&mut self, r: usize, error: Option<ZnsError>) {
        let req = self.requests.remove(r);
        let sub = &mut self.submitters[req.submitter];
        sub.outstanding -= 1;
        if error.is_some() {
            sub.halted = true;
        }
        let lba = match req.cmd.kind {
            OpKind::Append if error.is_some() => None,
            _ => req.cmd.lba,
        };
        self.trace.push(Completion {
            id: req.id,
            job: req.job as u32,
            submitter: req.submitter as u32,
            kind: req.cmd.kind,
            zone_id: req.cmd.zone_id,
            lba,
            nblocks: req.cmd.nblocks.unwrap_or(0),
            error,
            submit: req.submit,
            complete: self.now,
            zero_fill: req.zero_fill,
        });
    }
}

impl Submitter {
    fn stream_kind(&self) -> OpKind {
        self.stream.op()
    }
}
