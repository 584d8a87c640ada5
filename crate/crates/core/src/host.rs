//! Host I/O path options: pass-through, kernel without a scheduler, and a
//! deadline-style scheduler that coalesces contiguous writes to a zone.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HostStack {
    #[default]
    UserspaceDirect,
    KernelNosched,
    KernelMergeSched,
}

impl HostStack {
    pub const ALL: [HostStack; 3] = [HostStack::UserspaceDirect, HostStack::KernelNosched, HostStack::KernelMergeSched];

    pub fn name(self) -> &'static str {
        match self {
            HostStack::UserspaceDirect => "userspace-direct",
            HostStack::KernelNosched => "kernel-nosched",
            HostStack::KernelMergeSched => "kernel-merge-sched",
        }
    }

    pub fn merges(self) -> bool {
        self == HostStack::KernelMergeSched
    }
}

impl fmt::Display for HostStack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_merge_window_us() -> f64 {
    20.0
}

fn default_max_merge_bytes() -> u64 {
    128 * 1024
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackConfig {
    #[serde(default)]
    pub stack: HostStack,
    /// Writes arriving within this window of the head write may join it.
    #[serde(default = "default_merge_window_us")]
    pub merge_window_us: f64,
    #[serde(default = "default_max_merge_bytes")]
    pub max_merge_bytes: u64,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self {
            stack: HostStack::default(),
            merge_window_us: default_merge_window_us(),
            max_merge_bytes: default_max_merge_bytes(),
        }
    }
}

impl StackConfig {
    pub fn with_stack(stack: HostStack) -> Self {
        Self { stack, ..Self::default() }
    }
}

/// A write waiting in the scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingWrite {
    pub request: usize,
    pub lba: u64,
    pub nblocks: u32,
    pub arrival: SimTime,
}

/// One device command built from one or more submitted writes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedWrite {
    pub zone_id: u32,
    pub lba: u64,
    pub nblocks: u32,
    /// Constituent requests in LBA order.
    pub members: Vec<usize>,
}

#[derive(Debug, Default, Clone)]
struct ZoneQueue {
    /// Sorted by LBA; the sequence number keeps duplicate LBAs distinct.
    pending: BTreeMap<(u64, u64), PendingWrite>,
    locked: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeStats {
    pub submissions: u64,
    pub device_commands: u64,
}

impl MergeStats {
    pub fn merge_rate(&self) -> f64 {
        if self.submissions == 0 {
            0.0
        } else {
            (self.submissions - self.device_commands) as f64 / self.submissions as f64
        }
    }
}

/// Per-zone write queues with a zone write lock: at most one device write
/// is outstanding per zone, and the next one is built when it completes.
#[derive(Debug, Clone)]
pub struct MergeScheduler {
    window: SimTime,
    max_blocks: u64,
    zones: BTreeMap<u32, ZoneQueue>,
    seq: u64,
    stats: MergeStats,
}

impl MergeScheduler {
    pub fn new(config: &StackConfig, block_bytes: u32) -> Self {
        Self {
            window: (config.merge_window_us * 1000.0).round() as SimTime,
            max_blocks: (config.max_merge_bytes / u64::from(block_bytes)).max(1),
            zones: BTreeMap::new(),
            seq: 0,
            stats: MergeStats::default(),
        }
    }

    pub fn stats(&self) -> MergeStats {
        self.stats
    }

    pub fn submit(&mut self, zone_id: u32, write: PendingWrite) {
        self.stats.submissions += 1;
        self.seq += 1;
        self.zones.entry(zone_id).or_default().pending.insert((write.lba, self.seq), write);
    }

    pub fn has_pending(&self) -> bool {
        self.zones.values().any(|q| !q.locked && !q.pending.is_empty())
    }

    /// Builds commands for every unlocked zone with queued writes and locks
    /// those zones.
    pub fn dispatch(&mut self) -> Vec<MergedWrite> {
        let mut out = Vec::new();
        for (&zone_id, queue) in self.zones.iter_mut() {
            if queue.locked || queue.pending.is_empty() {
                continue;
            }
            let (_, head) = queue.pending.pop_first().expect("non-empty");
            let mut merged = MergedWrite { zone_id, lba: head.lba, nblocks: head.nblocks, members: vec![head.request] };
            while let Some(entry) = queue.pending.first_entry() {
                let next = *entry.get();
                let contiguous = next.lba == merged.lba + u64::from(merged.nblocks);
                let in_window = next.arrival.abs_diff(head.arrival) <= self.window;
                let fits = u64::from(merged.nblocks) + u64::from(next.nblocks) <= self.max_blocks;
                if !(contiguous && in_window && fits) {
                    break;
                }
                entry.remove();
                merged.nblocks += next.nblocks;
                merged.members.push(next.request);
            }
            queue.locked = true;
            self.stats.device_commands += 1;
            out.push(merged);
        }
        out
    }

    pub fn unlock(&mut self, zone_id: u32) {
        if let Some(queue) = self.zones.get_mut(&zone_id) {
            queue.locked = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(request: usize, lba: u64, arrival: SimTime) -> PendingWrite {
        PendingWrite { request, lba, nblocks: 1, arrival }
    }

    fn sched(window_us: f64) -> MergeScheduler {
        let cfg =
            StackConfig { stack: HostStack::KernelMergeSched, merge_window_us: window_us, max_merge_bytes: 128 * 1024 };
        MergeScheduler::new(&cfg, 4096)
    }

    #[test]
    fn stack_names_round_trip() {
        for stack in HostStack::ALL {
            let json = serde_json::to_string(&stack).unwrap();
            assert_eq!(json, format!("\"{}\"", stack.name()));
            assert_eq!(serde_json::from_str::<HostStack>(&json).unwrap(), stack);
        }
    }

    #[test]
    fn sixteen_contiguous_writes_become_one_command() {
        let mut s = sched(20.0);
        for i in 0..16 {
            s.submit(0, write(i, i as u64, 0));
        }
        let cmds = s.dispatch();
        assert_eq!(cmds.len(), 1);
        assert_eq!(cmds[0].nblocks, 16);
        assert_eq!(cmds[0].members, (0..16).collect::<Vec<_>>());
        assert!(s.stats().merge_rate() >= 0.92);
    }

    #[test]
    fn different_zones_do_not_merge() {
        let mut s = sched(20.0);
        s.submit(0, write(0, 0, 0));
        s.submit(1, write(1, 1, 0));
        let cmds = s.dispatch();
        assert_eq!(cmds.len(), 2);
        assert!(cmds.iter().all(|c| c.members.len() == 1));
    }

    #[test]
    fn zone_lock_holds_later_writes() {
        let mut s = sched(20.0);
        s.submit(0, write(0, 0, 0));
        assert_eq!(s.dispatch().len(), 1);
        s.submit(0, write(1, 1, 5_000));
        assert!(s.dispatch().is_empty());
        s.unlock(0);
        let cmds = s.dispatch();
        assert_eq!(cmds[0].lba, 1);
    }

    #[test]
    fn late_arrival_outside_window_is_separate() {
        let mut s = sched(20.0);
        s.submit(0, write(9, 100, 0));
        s.dispatch();
        s.submit(0, write(0, 101, 10_000));
        s.submit(0, write(1, 102, 40_000));
        s.unlock(0);
        let first = s.dispatch();
        assert_eq!(first[0].members, vec![0]);
        s.unlock(0);
        assert_eq!(s.dispatch()[0].members, vec![1]);
    }

    #[test]
    fn size_cap_splits() {
        let mut s = sched(20.0);
        for i in 0..40 {
            s.submit(0, write(i, i as u64, 0));
        }
        let a = s.dispatch();
        assert_eq!(a[0].nblocks, 32);
        s.unlock(0);
        assert_eq!(s.dispatch()[0].nblocks, 8);
    }

    #[test]
    fn gap_stops_merge() {
        let mut s = sched(20.0);
        s.submit(0, write(0, 0, 0));
        s.submit(0, write(1, 2, 0));
        let cmds = s.dispatch();
        assert_eq!(cmds[0].members, vec![0]);
    }
}
