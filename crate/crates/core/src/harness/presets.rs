//! Canned experiments with built-in assertions against the calibration
//! targets of the shipped profile.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::OpKind;
use crate::engine::{run, Completion, SimError, SimOutput, SimTime};
use crate::host::{HostStack, StackConfig};
use crate::perf::{DeviceProfile, JitterMode};
use crate::workload::{Job, JobSpec, Pattern, ZoneSet};

use super::report::{percentile_sorted, RunReport};

const K4: u64 = 4096;
const SEED: u64 = 1;

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown preset `{0}`; see list-presets")]
    UnknownPreset(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// Equal up to floating-point noise.
    Exact,
    /// Equal after rounding both sides to this many decimals.
    Decimals(u32),
    /// Within this fraction of the expected value.
    Relative(f64),
    AtLeast,
    AtMost,
    /// A property; `actual` is 1 when it holds.
    Holds,
}

impl Check {
    fn passes(self, expected: f64, actual: f64) -> bool {
        match self {
            Check::Exact => (actual - expected).abs() <= 1e-9 * expected.abs().max(1.0),
            Check::Decimals(d) => {
                let f = 10f64.powi(d as i32);
                (actual * f).round() == (expected * f).round()
            }
            Check::Relative(t) => (actual - expected).abs() <= t * expected.abs(),
            Check::AtLeast => actual >= expected,
            Check::AtMost => actual <= expected,
            Check::Holds => actual == 1.0,
        }
    }

    fn describe(self) -> String {
        match self {
            Check::Exact => "exact".into(),
            Check::Decimals(d) => format!("{d} decimals"),
            Check::Relative(t) => format!("±{}%", (t * 100.0 * 1e6).round() / 1e6),
            Check::AtLeast => ">=".into(),
            Check::AtMost => "<=".into(),
            Check::Holds => "holds".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub label: String,
    pub unit: String,
    pub expected: f64,
    pub actual: f64,
    pub check: Check,
    pub passed: bool,
}

impl Assertion {
    pub fn line(&self) -> String {
        let mark = if self.passed { "PASS" } else { "FAIL" };
        if self.check == Check::Holds {
            format!("[{mark}] {}", self.label)
        } else {
            let unit = if self.unit.is_empty() { String::new() } else { format!(" {}", self.unit) };
            format!(
                "[{mark}] {}: {:.4}{unit} (expected {}{unit}, {})",
                self.label,
                self.actual,
                self.expected,
                self.check.describe()
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetRun {
    pub label: String,
    pub spec: JobSpec,
    pub seed: u64,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(String::len).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let fmt = |cells: &[String]| {
            cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ")
        };
        let mut out = fmt(&self.columns);
        for r in &self.rows {
            out.push('\n');
            out.push_str(&fmt(r));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetOutcome {
    pub name: String,
    pub description: String,
    pub table: Table,
    pub assertions: Vec<Assertion>,
    pub runs: Vec<PresetRun>,
}

impl PresetOutcome {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

pub const PRESETS: [(&str, &str); 12] = [
    ("obs2-stacks", "QD1 4 KiB write latency on each host stack"),
    ("obs3-reqsize", "QD1 write and append latency and IOPS over request size"),
    ("obs4-append-vs-write", "append versus write latency gap"),
    ("obs5to7-scaling", "intra- and inter-zone throughput scaling, merging, zone limits"),
    ("obs8-bandwidth", "device bandwidth ceiling for large requests"),
    ("obs9-open-close", "open/close cost and the implicit-open surcharge"),
    ("obs10-finish", "finish latency over zone occupancy"),
    ("obs10-reset", "reset latency over zone occupancy, finished and unfinished"),
    ("obs11-stability", "per-second throughput stability under rate-limited mixed load"),
    ("obs12-io-under-reset", "I/O latency with and without concurrent resets"),
    ("obs13-reset-under-io", "reset tail latency under concurrent I/O"),
    ("appendix-knee", "append versus write latency over concurrency at 4 KiB"),
];

pub fn run_preset(name: &str, profile: &DeviceProfile) -> Result<PresetOutcome, PresetError> {
    let description = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, d)| d.to_string())
        .ok_or_else(|| PresetError::UnknownPreset(name.to_owned()))?;
    let mut ctx = Ctx { profile: profile.clone(), runs: Vec::new(), assertions: Vec::new(), table: Table::new(&[]) };
    match name {
        "obs2-stacks" => obs2(&mut ctx)?,
        "obs3-reqsize" => obs3(&mut ctx)?,
        "obs4-append-vs-write" => obs4(&mut ctx)?,
        "obs5to7-scaling" => obs5to7(&mut ctx)?,
        "obs8-bandwidth" => obs8(&mut ctx)?,
        "obs9-open-close" => obs9(&mut ctx)?,
        "obs10-finish" => obs10_finish(&mut ctx)?,
        "obs10-reset" => obs10_reset(&mut ctx)?,
        "obs11-stability" => obs11(&mut ctx)?,
        "obs12-io-under-reset" => obs12(&mut ctx)?,
        "obs13-reset-under-io" => obs13(&mut ctx)?,
        "appendix-knee" => knee(&mut ctx)?,
        _ => unreachable!("listed preset without a body"),
    }
    Ok(PresetOutcome {
        name: name.to_owned(),
        description,
        table: ctx.table,
        assertions: ctx.assertions,
        runs: ctx.runs,
    })
}

struct Ctx {
    profile: DeviceProfile,
    runs: Vec<PresetRun>,
    assertions: Vec<Assertion>,
    table: Table,
}

impl Ctx {
    fn run(&mut self, label: &str, spec: JobSpec) -> Result<(SimOutput, RunReport), SimError> {
        self.run_with(label, spec, None)
    }

    fn run_with(
        &mut self,
        label: &str,
        spec: JobSpec,
        profile: Option<&DeviceProfile>,
    ) -> Result<(SimOutput, RunReport), SimError> {
        let profile = profile.unwrap_or(&self.profile);
        let out = run(profile, &spec, SEED)?;
        let report = RunReport::new(profile, &spec, SEED, &out);
        self.runs.push(PresetRun { label: label.to_owned(), spec, seed: SEED, report: report.clone() });
        Ok((out, report))
    }

    fn check(&mut self, label: impl Into<String>, unit: &str, expected: f64, actual: f64, check: Check) {
        self.assertions.push(Assertion {
            label: label.into(),
            unit: unit.to_owned(),
            expected,
            actual,
            check,
            passed: check.passes(expected, actual),
        });
    }

    fn holds(&mut self, label: impl Into<String>, ok: bool) {
        self.check(label, "", 1.0, if ok { 1.0 } else { 0.0 }, Check::Holds);
    }
}

fn spec(jobs: Vec<Job>, stack: HostStack) -> JobSpec {
    JobSpec { jobs, stack: StackConfig::with_stack(stack), seed: SEED }
}

fn io(op: OpKind, bytes: u64, qd: u32, count: u64) -> Job {
    Job {
        request_bytes: Some(bytes),
        queue_depth: qd,
        op_count: Some(count),
        explicit_open: op != OpKind::Read,
        ..Job::new(op)
    }
}

fn latencies_ns(out: &SimOutput, kind: OpKind) -> Vec<SimTime> {
    let mut v: Vec<SimTime> =
        out.trace.iter().filter(|c| c.kind == kind && c.is_ok()).map(Completion::latency_ns).collect();
    v.sort_unstable();
    v
}

fn kiops(r: &RunReport, kind: OpKind) -> f64 {
    r.op(kind).throughput_iops / 1000.0
}

fn median_us(r: &RunReport, kind: OpKind) -> f64 {
    r.op(kind).median_latency_us.unwrap_or(f64::NAN)
}

fn ms(us: f64) -> f64 {
    us / 1000.0
}

fn f2(x: f64) -> String {
    format!("{x:.2}")
}

fn obs2(ctx: &mut Ctx) -> Result<(), SimError> {
    ctx.table = Table::new(&["stack", "median_us", "p99_us"]);
    let mut med = BTreeMap::new();
    for stack in HostStack::ALL {
        let (_, r) = ctx.run(stack.name(), spec(vec![io(OpKind::Write, K4, 1, 1000)], stack))?;
        let w = r.op(OpKind::Write);
        ctx.table.row(vec![
            stack.name().into(),
            f2(median_us(&r, OpKind::Write)),
            f2(w.p99_latency_us.unwrap_or(f64::NAN)),
        ]);
        med.insert(stack, median_us(&r, OpKind::Write));
        let expected = match stack {
            HostStack::UserspaceDirect => 11.36,
            HostStack::KernelNosched => 12.62,
            HostStack::KernelMergeSched => 14.47,
        };
        ctx.check(format!("{stack} write 4 KiB median"), "us", expected, median_us(&r, OpKind::Write), Check::Exact);
        ctx.check(
            format!("{stack} write 4 KiB max"),
            "us",
            expected,
            w.max_latency_us.unwrap_or(f64::NAN),
            Check::Exact,
        );
    }
    let (u, k, m) =
        (med[&HostStack::UserspaceDirect], med[&HostStack::KernelNosched], med[&HostStack::KernelMergeSched]);
    ctx.check("userspace-direct advantage over kernel-nosched", "%", 9.98, (k - u) / k * 100.0, Check::Decimals(2));
    ctx.check("merge scheduler overhead", "us", 1.85, m - k, Check::Decimals(2));
    Ok(())
}

fn obs3(ctx: &mut Ctx) -> Result<(), SimError> {
    ctx.table = Table::new(&["op", "request_bytes", "median_us", "kiops", "mib_s"]);
    let mut res = BTreeMap::new();
    for op in [OpKind::Write, OpKind::Append] {
        for kib in [4u64, 8, 16, 32, 64, 128] {
            let (_, r) =
                ctx.run(&format!("{op}-{kib}k"), spec(vec![io(op, kib * 1024, 1, 2000)], HostStack::UserspaceDirect))?;
            let s = r.op(op);
            ctx.table.row(vec![
                op.name().into(),
                (kib * 1024).to_string(),
                f2(median_us(&r, op)),
                f2(kiops(&r, op)),
                f2(s.throughput_mib_s),
            ]);
            res.insert((op, kib), (median_us(&r, op), kiops(&r, op)));
        }
    }
    ctx.check("write 4 KiB latency", "us", 11.36, res[&(OpKind::Write, 4)].0, Check::Exact);
    ctx.check("append 8 KiB latency", "us", 14.02, res[&(OpKind::Append, 8)].0, Check::Exact);
    ctx.check("write 4 KiB throughput", "KIOPS", 85.0, res[&(OpKind::Write, 4)].1, Check::Relative(0.05));
    ctx.check("write 8 KiB throughput", "KIOPS", 85.0, res[&(OpKind::Write, 8)].1, Check::Relative(0.05));
    ctx.check("append 4 KiB throughput", "KIOPS", 66.0, res[&(OpKind::Append, 4)].1, Check::Relative(0.05));
    ctx.check("append 8 KiB throughput", "KIOPS", 69.0, res[&(OpKind::Append, 8)].1, Check::Relative(0.05));
    let lat = |op| [4u64, 8, 16, 32, 64, 128].map(|k| res[&(op, k)].0);
    ctx.holds("write latency non-decreasing above 8 KiB", lat(OpKind::Write)[1..].windows(2).all(|w| w[1] >= w[0]));
    ctx.holds("append latency non-decreasing above 8 KiB", lat(OpKind::Append)[1..].windows(2).all(|w| w[1] >= w[0]));
    Ok(())
}

fn obs4(ctx: &mut Ctx) -> Result<(), SimError> {
    ctx.table = Table::new(&["request_bytes", "write_us", "append_us", "gap_us", "gap_pct_of_append"]);
    let mut max_gap = 0.0f64;
    for kib in [4u64, 8] {
        let (_, w) = ctx.run(
            &format!("write-{kib}k"),
            spec(vec![io(OpKind::Write, kib * 1024, 1, 1000)], HostStack::UserspaceDirect),
        )?;
        let (_, a) = ctx.run(
            &format!("append-{kib}k"),
            spec(vec![io(OpKind::Append, kib * 1024, 1, 1000)], HostStack::UserspaceDirect),
        )?;
        let (wl, al) = (median_us(&w, OpKind::Write), median_us(&a, OpKind::Append));
        let gap = al - wl;
        max_gap = max_gap.max(gap);
        ctx.table.row(vec![(kib * 1024).to_string(), f2(wl), f2(al), f2(gap), f2(gap / al * 100.0)]);
        if kib == 4 {
            ctx.check("write 4 KiB latency", "us", 11.36, wl, Check::Exact);
        } else {
            ctx.check("append 8 KiB latency", "us", 14.02, al, Check::Exact);
        }
        ctx.holds(format!("append slower than write at {kib} KiB"), al > wl);
        ctx.check(format!("gap at {kib} KiB relative to append"), "%", 25.0, gap / al * 100.0, Check::AtMost);
    }
    ctx.check("largest append/write gap", "us", 3.48, max_gap, Check::Decimals(2));
    Ok(())
}

fn obs5to7(ctx: &mut Ctx) -> Result<(), SimError> {
    ctx.table = Table::new(&["series", "concurrency", "kiops", "mib_s", "merge_rate"]);
    let qds = [1u32, 2, 4, 8, 16, 32];
    let mut append = Vec::new();
    for &qd in &qds {
        let (_, r) = ctx.run(
            &format!("intra-append-qd{qd}"),
            spec(vec![io(OpKind::Append, K4, qd, 20_000)], HostStack::UserspaceDirect),
        )?;
        ctx.table.row(vec![
            "intra-zone append".into(),
            qd.to_string(),
            f2(kiops(&r, OpKind::Append)),
            f2(r.op(OpKind::Append).throughput_mib_s),
            "-".into(),
        ]);
        append.push(kiops(&r, OpKind::Append));
    }
    for (i, &qd) in qds.iter().enumerate().filter(|(_, &q)| q >= 4) {
        ctx.check(format!("intra-zone append QD{qd}"), "KIOPS", 132.0, append[i], Check::Relative(0.05));
    }
    ctx.holds("intra-zone append non-decreasing up to QD4", append[..3].windows(2).all(|w| w[1] >= w[0]));
    let sat = &append[2..];
    let (lo, hi) = sat.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    ctx.holds("intra-zone append flat within 2% beyond QD4", hi <= lo * 1.02);

    for &qd in &qds {
        let (_, r) = ctx.run(
            &format!("intra-write-nomerge-qd{qd}"),
            spec(vec![io(OpKind::Write, K4, qd, 20_000)], HostStack::UserspaceDirect),
        )?;
        ctx.table.row(vec![
            "intra-zone write".into(),
            qd.to_string(),
            f2(kiops(&r, OpKind::Write)),
            f2(r.op(OpKind::Write).throughput_mib_s),
            "-".into(),
        ]);
    }
    let mut merged = BTreeMap::new();
    for &qd in &qds {
        let (_, r) = ctx.run(
            &format!("intra-write-merged-qd{qd}"),
            spec(vec![io(OpKind::Write, K4, qd, 40_000)], HostStack::KernelMergeSched),
        )?;
        ctx.table.row(vec![
            "intra-zone write, merging".into(),
            qd.to_string(),
            f2(kiops(&r, OpKind::Write)),
            f2(r.op(OpKind::Write).throughput_mib_s),
            format!("{:.4}", r.merge.merge_rate),
        ]);
        merged.insert(qd, (kiops(&r, OpKind::Write), r.merge.merge_rate));
    }
    ctx.check("merged intra-zone write QD32", "KIOPS", 293.0, merged[&32].0, Check::Relative(0.05));
    ctx.check("merge rate at QD16", "fraction", 0.92, merged[&16].1, Check::AtLeast);

    let read = Job {
        pattern: Pattern::Random,
        read_unwritten: true,
        zone_set: ZoneSet::Count(1),
        ..io(OpKind::Read, K4, 128, 60_000)
    };
    let (_, r) = ctx.run("read-qd128", spec(vec![read], HostStack::UserspaceDirect))?;
    ctx.table.row(vec![
        "random read".into(),
        "128".into(),
        f2(kiops(&r, OpKind::Read)),
        f2(r.op(OpKind::Read).throughput_mib_s),
        "-".into(),
    ]);
    ctx.check("random read QD128", "KIOPS", 424.0, kiops(&r, OpKind::Read), Check::Relative(0.05));

    let mut peak = 0;
    let mut inter = BTreeMap::new();
    for zones in [1u32, 2, 4, 8, 14, 16] {
        let job = Job { num_submitters: zones, zone_set: ZoneSet::Count(zones), ..io(OpKind::Write, K4, 1, 10_000) };
        let (_, r) = ctx.run(&format!("inter-write-{zones}z"), spec(vec![job], HostStack::UserspaceDirect))?;
        ctx.table.row(vec![
            "inter-zone write".into(),
            zones.to_string(),
            f2(kiops(&r, OpKind::Write)),
            f2(r.op(OpKind::Write).throughput_mib_s),
            "-".into(),
        ]);
        peak = peak.max(r.device.peak_active_zones);
        inter.insert(zones, kiops(&r, OpKind::Write));
    }
    ctx.check("inter-zone write, 14 zones", "KIOPS", 186.0, inter[&14], Check::Relative(0.05));
    ctx.holds("inter-zone write never above the 14-zone ceiling", inter.values().all(|&k| k <= 186.0 * 1.05));
    ctx.check("peak active zones", "zones", 14.0, f64::from(peak), Check::AtMost);
    Ok(())
}

fn obs8(ctx: &mut Ctx) -> Result<(), SimError> {
    ctx.table = Table::new(&["op", "request_bytes", "zones", "qd", "mib_s"]);
    for zones in [2u32, 4] {
        for kib in [8u64, 16, 32, 64, 128] {
            let job = Job {
                num_submitters: zones,
                zone_set: ZoneSet::Count(zones),
                ..io(OpKind::Write, kib * 1024, 1, 4000)
            };
            let (_, r) = ctx.run(&format!("write-{kib}k-{zones}z"), spec(vec![job], HostStack::UserspaceDirect))?;
            let mib = r.op(OpKind::Write).throughput_mib_s;
            ctx.table.row(vec!["write".into(), (kib * 1024).to_string(), zones.to_string(), "1".into(), f2(mib)]);
            ctx.check(format!("write {kib} KiB over {zones} zones"), "MiB/s", 1155.0, mib, Check::Relative(0.05));
        }
    }
    let job = Job { num_submitters: 4, zone_set: ZoneSet::Count(4), ..io(OpKind::Append, 128 * 1024, 8, 4000) };
    let (_, r) = ctx.run("append-128k-4z-qd8", spec(vec![job], HostStack::UserspaceDirect))?;
    let mib = r.op(OpKind::Append).throughput_mib_s;
    ctx.table.row(vec!["append".into(), (128 * 1024).to_string(), "4".into(), "8".into(), f2(mib)]);
    ctx.check("append 128 KiB, 4 submitters at QD8", "MiB/s", 1155.0, mib, Check::Relative(0.05));
    let job = Job { num_submitters: 14, zone_set: ZoneSet::Count(14), ..io(OpKind::Write, K4, 1, 10_000) };
    let (_, r) = ctx.run("write-4k-14z", spec(vec![job], HostStack::UserspaceDirect))?;
    let mib = r.op(OpKind::Write).throughput_mib_s;
    ctx.table.row(vec!["write".into(), K4.to_string(), "14".into(), "1".into(), f2(mib)]);
    ctx.check("write 4 KiB over 14 zones", "MiB/s", 726.74, mib, Check::Relative(0.05));
    Ok(())
}

/// Latency of the first successful op per zone, and of all the others.
fn first_and_rest(out: &SimOutput, kind: OpKind) -> (Vec<SimTime>, Vec<SimTime>) {
    let mut seen = std::collections::BTreeSet::new();
    let mut ops: Vec<&Completion> = out.trace.iter().filter(|c| c.kind == kind && c.is_ok()).collect();
    ops.sort_by_key(|c| c.id);
    let (mut first, mut rest) = (Vec::new(), Vec::new());
    for c in ops {
        if seen.insert(c.zone_id) {
            first.push(c.latency_ns());
        } else {
            rest.push(c.latency_ns());
        }
    }
    (first, rest)
}

fn obs9(ctx: &mut Ctx) -> Result<(), SimError> {
    ctx.table = Table::new(&["measurement", "median_us", "max_us", "count"]);
    let job = Job { zone_set: ZoneSet::Count(100), ..Job::new(OpKind::Close) };
    let (_, r) = ctx.run("open-close-100z", spec(vec![job], HostStack::UserspaceDirect))?;
    for (kind, expected) in [(OpKind::Open, 9.56), (OpKind::Close, 11.01)] {
        let s = r.op(kind);
        ctx.table.row(vec![
            kind.name().into(),
            f2(median_us(&r, kind)),
            f2(s.max_latency_us.unwrap_or(f64::NAN)),
            s.ok.to_string(),
        ]);
        ctx.check(format!("{kind} latency median"), "us", expected, median_us(&r, kind), Check::Exact);
        ctx.check(format!("{kind} latency max"), "us", expected, s.max_latency_us.unwrap_or(f64::NAN), Check::Exact);
    }
    for (kind, bytes, base, surcharge) in [(OpKind::Write, K4, 11_360, 2_020), (OpKind::Append, 2 * K4, 14_020, 2_830)]
    {
        let job = Job {
            request_bytes: Some(bytes),
            pattern: Pattern::Random,
            zone_set: ZoneSet::Count(10),
            op_count: Some(300),
            ..Job::new(kind)
        };
        let (out, _) = ctx.run(&format!("{kind}-implicit-open"), spec(vec![job], HostStack::UserspaceDirect))?;
        let (first, rest) = first_and_rest(&out, kind);
        let extra = first.iter().map(|&f| f as f64 - base as f64).fold(f64::NAN, f64::max) / 1000.0;
        ctx.table.row(vec![
            format!("{kind} opening a zone"),
            f2(first[0] as f64 / 1000.0),
            f2(*first.iter().max().unwrap_or(&0) as f64 / 1000.0),
            first.len().to_string(),
        ]);
        ctx.table.row(vec![
            format!("{kind} to an open zone"),
            f2(rest[0] as f64 / 1000.0),
            f2(*rest.iter().max().unwrap_or(&0) as f64 / 1000.0),
            rest.len().to_string(),
        ]);
        ctx.check(format!("{kind} implicit-open surcharge"), "us", surcharge as f64 / 1000.0, extra, Check::Exact);
        ctx.holds(
            format!("every {kind} that opens a zone pays the surcharge"),
            first.iter().all(|&f| f == base + surcharge),
        );
        ctx.holds(format!("no other {kind} pays it"), rest.iter().all(|&l| l == base));
    }
    Ok(())
}

fn finish_stages(cap: u64) -> Vec<(String, f64)> {
    let mut v = vec![("1 block".to_string(), 1.0 / cap as f64)];
    for f in [0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9] {
        v.push((format!("{f}"), f));
    }
    v.push(("all but 1 block".to_string(), (cap - 1) as f64 / cap as f64));
    v
}

fn obs10_finish(ctx: &mut Ctx) -> Result<(), SimError> {
    ctx.table = Table::new(&["stage", "occupancy", "finish_ms"]);
    let cap = ctx.profile.geometry.zone_cap_blocks;
    let mut lat = Vec::new();
    for (label, frac) in finish_stages(cap) {
        let job =
            Job { stage: Some(frac), stabilize_s: Some(1.0), zone_set: ZoneSet::Count(5), ..Job::new(OpKind::Finish) };
        let blocks = job.stage_blocks(&ctx.profile.geometry);
        let (_, r) = ctx.run(&format!("finish-{label}"), spec(vec![job], HostStack::UserspaceDirect))?;
        let l = ms(median_us(&r, OpKind::Finish));
        ctx.table.row(vec![label, format!("{:.6}", blocks as f64 / cap as f64), format!("{l:.4}")]);
        lat.push(l);
    }
    ctx.check("finish of a 1-block zone", "ms", 907.51, lat[0], Check::Decimals(2));
    ctx.check("finish of a zone missing 1 block", "ms", 3.07, *lat.last().expect("rows"), Check::Decimals(2));
    ctx.holds("finish latency strictly decreasing in occupancy", lat.windows(2).all(|w| w[1] < w[0]));
    Ok(())
}

fn obs10_reset(ctx: &mut Ctx) -> Result<(), SimError> {
    ctx.table = Table::new(&["stage", "finished", "reset_ms", "count"]);
    let mut unfinished = Vec::new();
    let mut at = BTreeMap::new();
    let stages = [
        ("empty", 0.0, false),
        ("0.25", 0.25, false),
        ("0.5", 0.5, false),
        ("0.75", 0.75, false),
        ("1.0", 1.0, false),
        ("0.5", 0.5, true),
    ];
    for (label, frac, finished) in stages {
        let job =
            Job { stage: Some(frac), stage_finish: finished, zone_set: ZoneSet::Count(100), ..Job::new(OpKind::Reset) };
        let tag = if finished { "finished" } else { "open" };
        let (out, r) = ctx.run(&format!("reset-{label}-{tag}"), spec(vec![job], HostStack::UserspaceDirect))?;
        let lat = latencies_ns(&out, OpKind::Reset);
        let l = ms(median_us(&r, OpKind::Reset));
        ctx.table.row(vec![label.into(), finished.to_string(), format!("{l:.4}"), lat.len().to_string()]);
        ctx.holds(
            format!("all {} resets at stage {label} ({tag}) take the same time", lat.len()),
            lat.first() == lat.last(),
        );
        if frac == 0.0 {
            ctx.check(
                "resets of empty zones reported",
                "zones",
                100.0,
                r.device.empty_zone_resets as f64,
                Check::Exact,
            );
        }
        if finished {
            at.insert("finished", l);
        } else {
            unfinished.push(l);
            at.insert(label, l);
        }
    }
    ctx.check("reset of a half-full zone", "ms", 11.60, at["0.5"], Check::Exact);
    ctx.check("reset of a full zone", "ms", 16.19, at["1.0"], Check::Exact);
    ctx.check("reset of a half-full finished zone", "ms", 14.68, at["finished"], Check::Exact);
    ctx.check(
        "finished minus unfinished at half occupancy",
        "ms",
        3.08,
        at["finished"] - at["0.5"],
        Check::Decimals(6),
    );
    ctx.holds("reset latency non-decreasing in occupancy", unfinished.windows(2).all(|w| w[1] >= w[0]));
    Ok(())
}

fn coefficient_of_variation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

fn obs11(ctx: &mut Ctx) -> Result<(), SimError> {
    ctx.table = Table::new(&["write_limit_mib_s", "read_qd", "write_mib_s", "write_cv", "read_kiops", "read_cv"]);
    let warmup = 1;
    for rate in [250.0, 750.0, 1155.0] {
        for read_qd in [1u32, 32] {
            let writer = Job {
                request_bytes: Some(128 * 1024),
                queue_depth: 8,
                num_submitters: 4,
                zone_set: ZoneSet::Count(4),
                rate_limit_mib_s: Some(rate),
                duration_virtual_s: Some(6.0),
                recycle_zones: true,
                ..Job::new(OpKind::Append)
            };
            let reader = Job {
                request_bytes: Some(K4),
                queue_depth: read_qd,
                pattern: Pattern::Random,
                zone_set: ZoneSet::Range { start: 452, count: 452 },
                read_unwritten: true,
                duration_virtual_s: Some(6.0),
                ..Job::new(OpKind::Read)
            };
            let label = format!("mixed-{rate}-qd{read_qd}");
            let (_, r) = ctx.run(&label, spec(vec![writer, reader], HostStack::UserspaceDirect))?;
            let full = |k: OpKind| {
                let s = &r.time_series.ops[k.name()];
                // whole seconds after warm-up; the last bucket is partial
                let n = s.iops.len().saturating_sub(1);
                (s.mib_s[warmup.min(n)..n].to_vec(), s.iops[warmup.min(n)..n].to_vec())
            };
            let (wm, _) = full(OpKind::Append);
            let (_, ri) = full(OpKind::Read);
            let (wcv, rcv) = (coefficient_of_variation(&wm), coefficient_of_variation(&ri));
            let wmean = wm.iter().sum::<f64>() / wm.len() as f64;
            let rmean = ri.iter().sum::<f64>() / ri.len() as f64 / 1000.0;
            ctx.table.row(vec![
                format!("{rate}"),
                read_qd.to_string(),
                f2(wmean),
                format!("{wcv:.4}"),
                f2(rmean),
                format!("{rcv:.4}"),
            ]);
            ctx.check(format!("{label} write throughput CV"), "", 0.05, wcv, Check::AtMost);
            ctx.check(format!("{label} read throughput CV"), "", 0.05, rcv, Check::AtMost);
            ctx.check(format!("{label} write throughput within limit"), "MiB/s", rate, wmean, Check::AtMost);
        }
    }
    Ok(())
}

const FIRST_HALF: ZoneSet = ZoneSet::Range { start: 0, count: 452 };
const SECOND_HALF: ZoneSet = ZoneSet::Range { start: 452, count: 452 };

fn io_stream(kind: OpKind, duration_s: f64) -> Job {
    let mut job =
        Job { request_bytes: Some(K4), zone_set: SECOND_HALF, duration_virtual_s: Some(duration_s), ..Job::new(kind) };
    if kind == OpKind::Read {
        job.pattern = Pattern::Random;
        job.read_unwritten = true;
    }
    job
}

fn reset_stream(op_count: Option<u64>, duration_s: Option<f64>) -> Job {
    Job { stage: Some(1.0), zone_set: FIRST_HALF, op_count, duration_virtual_s: duration_s, ..Job::new(OpKind::Reset) }
}

fn obs12(ctx: &mut Ctx) -> Result<(), SimError> {
    ctx.table = Table::new(&["op", "resets", "count", "mean_us", "p95_us"]);
    for kind in [OpKind::Read, OpKind::Write, OpKind::Append] {
        let mut lat = Vec::new();
        for with_resets in [false, true] {
            let mut jobs = vec![io_stream(kind, 1.0)];
            if with_resets {
                jobs.push(reset_stream(None, Some(1.0)));
            }
            let tag = if with_resets { "with-resets" } else { "alone" };
            let (out, r) = ctx.run(&format!("{kind}-{tag}"), spec(jobs, HostStack::UserspaceDirect))?;
            let s = r.op(kind);
            ctx.table.row(vec![
                kind.name().into(),
                r.op(OpKind::Reset).ok.to_string(),
                s.ok.to_string(),
                format!("{:.4}", s.mean_latency_us.unwrap_or(f64::NAN)),
                f2(s.p95_latency_us.unwrap_or(f64::NAN)),
            ]);
            if with_resets {
                ctx.holds(format!("resets ran concurrently with {kind}"), r.op(OpKind::Reset).ok > 0);
            }
            lat.push(latencies_ns(&out, kind));
        }
        ctx.holds(
            format!("{kind} latency distribution identical with and without resets"),
            lat[0] == lat[1] && !lat[0].is_empty(),
        );
    }
    Ok(())
}

fn obs13(ctx: &mut Ctx) -> Result<(), SimError> {
    ctx.table = Table::new(&["concurrent", "jitter", "resets", "median_ms", "p95_ms"]);
    let mut jittered = ctx.profile.clone();
    jittered.jitter.mode = JitterMode::Lognormal;
    let cases =
        [(None, 17.94), (Some(OpKind::Read), 28.00), (Some(OpKind::Write), 32.00), (Some(OpKind::Append), 31.48)];
    let resets = 800;
    for (jitter, profile) in [(true, Some(&jittered)), (false, None)] {
        let count = if jitter { resets } else { 50 };
        let duration = if jitter { 30.0 } else { 2.0 };
        let mut p95s = Vec::new();
        for (io, expected) in cases {
            let mut jobs = vec![reset_stream(Some(count), None)];
            if let Some(kind) = io {
                jobs.push(io_stream(kind, duration));
            }
            let name = io.map_or("isolated".to_string(), |k| k.name().to_owned());
            let tag = if jitter { "lognormal" } else { "none" };
            let (out, r) =
                ctx.run_with(&format!("reset-{name}-jitter-{tag}"), spec(jobs, HostStack::UserspaceDirect), profile)?;
            let lat = latencies_ns(&out, OpKind::Reset);
            let p95 = percentile_sorted(&lat, 95.0).map_or(f64::NAN, |v| v as f64 / 1e6);
            ctx.table.row(vec![
                name.clone(),
                tag.into(),
                lat.len().to_string(),
                format!("{:.3}", ms(median_us(&r, OpKind::Reset))),
                format!("{p95:.3}"),
            ]);
            if jitter {
                ctx.check(format!("reset p95 with {name}"), "ms", expected, p95, Check::Relative(0.02));
            }
            p95s.push(p95);
        }
        if !jitter {
            for (i, (io, expected)) in cases.iter().enumerate().skip(1) {
                let name = io.map_or("", |k| k.name());
                ctx.check(
                    format!("reset slowdown under {name}, jitter off"),
                    "x",
                    expected / 17.94,
                    p95s[i] / p95s[0],
                    Check::Relative(1e-6),
                );
            }
        }
    }
    Ok(())
}

fn knee(ctx: &mut Ctx) -> Result<(), SimError> {
    ctx.table = Table::new(&["concurrency", "append_us", "append_kiops", "write_us", "write_kiops"]);
    let levels = [1u32, 2, 4, 8, 16, 32];
    let mut rows = Vec::new();
    for &c in &levels {
        let (_, a) = ctx
            .run(&format!("append-qd{c}"), spec(vec![io(OpKind::Append, K4, c, 20_000)], HostStack::UserspaceDirect))?;
        let (_, w) =
            ctx.run(&format!("write-qd{c}"), spec(vec![io(OpKind::Write, K4, c, 20_000)], HostStack::UserspaceDirect))?;
        let al = a.op(OpKind::Append).mean_latency_us.unwrap_or(f64::NAN);
        let wl = w.op(OpKind::Write).mean_latency_us.unwrap_or(f64::NAN);
        ctx.table.row(vec![c.to_string(), f2(al), f2(kiops(&a, OpKind::Append)), f2(wl), f2(kiops(&w, OpKind::Write))]);
        rows.push((c, al, wl));
    }
    for &(c, al, wl) in rows.iter().filter(|r| r.0 <= 4) {
        ctx.holds(format!("append below unmerged write at concurrency {c} ({al:.2} vs {wl:.2} us)"), al < wl);
    }
    let (a1, w1) = (rows[0].1, rows[0].2);
    for &(c, al, wl) in rows.iter().filter(|r| r.0 > 1 && r.0 <= 4) {
        ctx.holds(format!("write latency rises more than append up to concurrency {c}"), wl - w1 > al - a1);
    }
    let beyond: Vec<_> = rows.iter().filter(|r| r.0 >= 4).collect();
    for (name, pick) in [("append", 1usize), ("write", 2usize)] {
        let per: Vec<f64> = beyond.iter().map(|r| if pick == 1 { r.1 } else { r.2 } / f64::from(r.0)).collect();
        let (lo, hi) = per.iter().fold((f64::MAX, f64::MIN), |(l, h), &x| (l.min(x), h.max(x)));
        ctx.holds(format!("{name} latency grows linearly with concurrency beyond 4 (within 2%)"), hi <= lo * 1.02);
    }
    let ratios: Vec<f64> = rows.iter().filter(|r| r.0 >= 8).map(|r| r.2 / r.1).collect();
    let (lo, hi) = ratios.iter().fold((f64::MAX, f64::MIN), |(l, h), &x| (l.min(x), h.max(x)));
    ctx.holds(format!("write/append latency ratio constant beyond 4 within 2% ({lo:.3}..{hi:.3})"), hi <= lo * 1.02);
    Ok(())
}
