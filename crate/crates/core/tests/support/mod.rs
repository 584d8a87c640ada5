//! Shared test oracles.

#![allow(dead_code)]

use rand::{Rng, RngExt};
use znsim::device::{DeviceGeometry, ZnsError, ZoneAction, ZoneState};
use znsim::Completion;

/// Zone model that tracks every block individually and recounts resources by
/// scanning all zones.
#[derive(Debug, Clone)]
pub struct RefZone {
    pub state: ZoneState,
    pub written: Vec<bool>,
    pub finished_early: bool,
}

impl RefZone {
    pub fn wp(&self) -> u64 {
        self.written.iter().take_while(|&&w| w).count() as u64
    }
}

#[derive(Debug, Clone)]
pub struct RefDevice {
    pub g: DeviceGeometry,
    pub zones: Vec<RefZone>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefCmd {
    Write { zone: u32, offset: u64, n: u32 },
    Append { zone: u32, n: u32 },
    Read { lba: u64, n: u32 },
    Manage { zone: u32, action: ZoneAction },
}

/// Ok payload: assigned LBA for writes/appends, zero-fill flag for reads,
/// nothing for management.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefOk {
    Placed(u64),
    Read(bool),
    Managed,
}

impl RefDevice {
    pub fn new(g: DeviceGeometry) -> Self {
        let zone = RefZone {
            state: ZoneState::Empty,
            written: vec![false; g.zone_cap_blocks as usize],
            finished_early: false,
        };
        Self { g, zones: vec![zone; g.num_zones as usize] }
    }

    pub fn open_count(&self) -> u32 {
        self.zones.iter().filter(|z| matches!(z.state, ZoneState::ImplicitlyOpen | ZoneState::ExplicitlyOpen)).count()
            as u32
    }

    pub fn active_count(&self) -> u32 {
        self.zones
            .iter()
            .filter(|z| matches!(z.state, ZoneState::ImplicitlyOpen | ZoneState::ExplicitlyOpen | ZoneState::Closed))
            .count() as u32
    }

    /// Whether a zone in `state` may become open, and which limit stops it.
    fn can_open(&self, state: ZoneState) -> Result<(), ZnsError> {
        if state == ZoneState::Empty && self.active_count() >= self.g.max_active_zones {
            return Err(ZnsError::TooManyActiveZones);
        }
        if self.open_count() >= self.g.max_open_zones {
            return Err(ZnsError::TooManyOpenZones);
        }
        Ok(())
    }

    fn place(&mut self, zone: u32, offset: Option<u64>, n: u32) -> Result<RefOk, ZnsError> {
        let cap = self.g.zone_cap_blocks;
        let z = &self.zones[zone as usize];
        if z.state == ZoneState::Full {
            return Err(ZnsError::ZoneFull);
        }
        let wp = z.wp();
        if offset.is_some_and(|o| o != wp) {
            return Err(ZnsError::UnalignedWrite);
        }
        if n == 0 || wp + u64::from(n) > cap {
            return Err(ZnsError::BoundsExceeded);
        }
        let state = z.state;
        if matches!(state, ZoneState::Empty | ZoneState::Closed) {
            self.can_open(state)?;
        }
        let z = &mut self.zones[zone as usize];
        for b in wp..wp + u64::from(n) {
            z.written[b as usize] = true;
        }
        z.state = if z.written.iter().all(|&w| w) {
            ZoneState::Full
        } else if matches!(state, ZoneState::Empty | ZoneState::Closed) {
            ZoneState::ImplicitlyOpen
        } else {
            state
        };
        Ok(RefOk::Placed(u64::from(zone) * self.g.zone_size_blocks + wp))
    }

    pub fn apply(&mut self, cmd: RefCmd) -> Result<RefOk, ZnsError> {
        match cmd {
            RefCmd::Write { zone, offset, n } => self.place(zone, Some(offset), n),
            RefCmd::Append { zone, n } => self.place(zone, None, n),
            RefCmd::Read { lba, n } => {
                let total = u64::from(self.g.num_zones) * self.g.zone_size_blocks;
                if n == 0 || lba + u64::from(n) > total {
                    return Err(ZnsError::BoundsExceeded);
                }
                let unwritten = (lba..lba + u64::from(n)).any(|b| {
                    let z = &self.zones[(b / self.g.zone_size_blocks) as usize];
                    let off = b % self.g.zone_size_blocks;
                    off >= z.wp()
                });
                Ok(RefOk::Read(unwritten))
            }
            RefCmd::Manage { zone, action } => {
                let state = self.zones[zone as usize].state;
                let open = matches!(state, ZoneState::ImplicitlyOpen | ZoneState::ExplicitlyOpen);
                match action {
                    ZoneAction::Open => {
                        if !matches!(state, ZoneState::Empty | ZoneState::Closed) {
                            return Err(ZnsError::InvalidTransition);
                        }
                        self.can_open(state)?;
                        self.zones[zone as usize].state = ZoneState::ExplicitlyOpen;
                    }
                    ZoneAction::Close => {
                        if !open {
                            return Err(ZnsError::InvalidTransition);
                        }
                        self.zones[zone as usize].state = ZoneState::Closed;
                    }
                    ZoneAction::Finish => {
                        if matches!(state, ZoneState::Empty | ZoneState::Full) {
                            return Err(ZnsError::InvalidTransition);
                        }
                        let z = &mut self.zones[zone as usize];
                        z.finished_early = z.written.iter().any(|&w| !w);
                        z.state = ZoneState::Full;
                    }
                    ZoneAction::Reset => {
                        let z = &mut self.zones[zone as usize];
                        z.written.iter_mut().for_each(|w| *w = false);
                        z.finished_early = false;
                        z.state = ZoneState::Empty;
                    }
                }
                Ok(RefOk::Managed)
            }
        }
    }
}

/// Small device for exhaustive-ish checking: 4 zones of 8 blocks.
pub fn tiny_geometry() -> DeviceGeometry {
    DeviceGeometry {
        zone_size_blocks: 8,
        zone_cap_blocks: 8,
        num_zones: 4,
        block_bytes: 4096,
        max_open_zones: 2,
        max_active_zones: 3,
    }
}

/// Random command biased towards valid ones so sequences reach deep states.
pub fn random_cmd<R: Rng>(rng: &mut R, dev: &RefDevice) -> RefCmd {
    let zones = dev.g.num_zones;
    let zone = rng.random_range(0..zones);
    let n = rng.random_range(0..=4u32);
    match rng.random_range(0..10) {
        0..=2 => {
            let wp = dev.zones[zone as usize].wp();
            let offset = if rng.random_bool(0.8) { wp } else { rng.random_range(0..dev.g.zone_size_blocks) };
            RefCmd::Write { zone, offset, n }
        }
        3..=4 => RefCmd::Append { zone, n },
        5 => RefCmd::Read { lba: rng.random_range(0..u64::from(zones) * dev.g.zone_size_blocks + 2), n },
        6 => RefCmd::Manage { zone, action: ZoneAction::Open },
        7 => RefCmd::Manage { zone, action: ZoneAction::Close },
        8 => RefCmd::Manage { zone, action: ZoneAction::Finish },
        _ => RefCmd::Manage { zone, action: ZoneAction::Reset },
    }
}

/// Checks that the successful write/append extents in `trace` tile each
/// zone from its start without gaps or overlaps. Returns the per-zone
/// written block count.
pub fn check_tiling(trace: &[Completion], zone_size: u64) -> Result<Vec<(u32, u64)>, String> {
    use std::collections::BTreeMap;
    let mut per_zone: BTreeMap<u32, Vec<(u64, u64)>> = BTreeMap::new();
    for c in trace.iter().filter(|c| c.is_ok() && c.kind.is_io() && c.kind != znsim::OpKind::Read) {
        let lba = c.lba.ok_or("placed op without an LBA")?;
        per_zone.entry(c.zone_id).or_default().push((lba, u64::from(c.nblocks)));
    }
    let mut out = Vec::new();
    for (zone, mut extents) in per_zone {
        extents.sort_unstable();
        let mut next = u64::from(zone) * zone_size;
        for (lba, n) in extents {
            if lba != next {
                return Err(format!("zone {zone}: extent at {lba}, expected {next}"));
            }
            next += n;
        }
        out.push((zone, next - u64::from(zone) * zone_size));
    }
    Ok(out)
}

/// Ordinary least squares of y on [1, x].
pub fn ols(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}
