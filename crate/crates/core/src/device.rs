//! Functional model of a zoned namespace.
//!
//! [`ZnsDevice`] owns the zone table and enforces the zone state machine, the
//! sequential-write rule and the open/active zone limits. It knows nothing
//! about time: the engine asks it to admit commands and then decides how long
//! they take.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Static layout of the namespace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceGeometry {
    pub zone_size_blocks: u64,
    pub zone_cap_blocks: u64,
    pub num_zones: u32,
    pub block_bytes: u32,
    pub max_open_zones: u32,
    pub max_active_zones: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("all geometry counts must be non-zero")]
    ZeroCount,
    #[error("zone capacity ({cap}) exceeds zone size ({size})")]
    CapacityExceedsSize { cap: u64, size: u64 },
    #[error("block size must be 512 or 4096 bytes, got {0}")]
    BlockSize(u32),
    #[error("zone limits must satisfy max_open <= max_active <= num_zones")]
    Limits,
}

impl DeviceGeometry {
    /// 1 TB ZN540-class layout: 2,048 MiB zones holding 1,077 MiB each, 904
    /// zones, 4 KiB LBA format, 14 open/active zones.
    pub fn zn540() -> Self {
        const MIB: u64 = 1024 * 1024;
        Self {
            zone_size_blocks: 2048 * MIB / 4096,
            zone_cap_blocks: 1077 * MIB / 4096,
            num_zones: 904,
            block_bytes: 4096,
            max_open_zones: 14,
            max_active_zones: 14,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.zone_size_blocks == 0
            || self.zone_cap_blocks == 0
            || self.num_zones == 0
            || self.max_open_zones == 0
            || self.max_active_zones == 0
        {
            return Err(GeometryError::ZeroCount);
        }
        if self.zone_cap_blocks > self.zone_size_blocks {
            return Err(GeometryError::CapacityExceedsSize { cap: self.zone_cap_blocks, size: self.zone_size_blocks });
        }
        if self.block_bytes != 512 && self.block_bytes != 4096 {
            return Err(GeometryError::BlockSize(self.block_bytes));
        }
        if self.max_open_zones > self.max_active_zones || self.max_active_zones > self.num_zones {
            return Err(GeometryError::Limits);
        }
        Ok(())
    }

    /// Zone starting LBA.
    pub fn zslba(&self, zone_id: u32) -> u64 {
        u64::from(zone_id) * self.zone_size_blocks
    }

    pub fn namespace_blocks(&self) -> u64 {
        u64::from(self.num_zones) * self.zone_size_blocks
    }

    pub fn zone_of(&self, lba: u64) -> u32 {
        (lba / self.zone_size_blocks) as u32
    }

    pub fn zone_cap_bytes(&self) -> u64 {
        self.zone_cap_blocks * u64::from(self.block_bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ZoneState {
    Empty,
    ImplicitlyOpen,
    ExplicitlyOpen,
    Closed,
    Full,
}

impl ZoneState {
    pub const ALL: [ZoneState; 5] =
        [ZoneState::Empty, ZoneState::ImplicitlyOpen, ZoneState::ExplicitlyOpen, ZoneState::Closed, ZoneState::Full];

    pub fn is_open(self) -> bool {
        matches!(self, ZoneState::ImplicitlyOpen | ZoneState::ExplicitlyOpen)
    }

    /// Open or closed: the zone holds an active-zone resource.
    pub fn is_active(self) -> bool {
        self.is_open() || self == ZoneState::Closed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub id: u32,
    pub state: ZoneState,
    /// Offset of the next writable block, relative to the zone start.
    pub write_pointer: u64,
    /// Set when a finish sealed the zone with unwritten capacity left.
    pub finished_before_reset: bool,
}

impl Zone {
    fn new(id: u32) -> Self {
        Self { id, state: ZoneState::Empty, write_pointer: 0, finished_before_reset: false }
    }

    pub fn occupancy(&self, zone_cap_blocks: u64) -> f64 {
        self.write_pointer as f64 / zone_cap_blocks as f64
    }
}

/// Every command the namespace understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Read,
    Write,
    Append,
    Open,
    Close,
    Finish,
    Reset,
}

impl OpKind {
    pub const ALL: [OpKind; 7] =
        [OpKind::Read, OpKind::Write, OpKind::Append, OpKind::Open, OpKind::Close, OpKind::Finish, OpKind::Reset];

    pub fn is_io(self) -> bool {
        matches!(self, OpKind::Read | OpKind::Write | OpKind::Append)
    }

    pub fn action(self) -> Option<ZoneAction> {
        match self {
            OpKind::Open => Some(ZoneAction::Open),
            OpKind::Close => Some(ZoneAction::Close),
            OpKind::Finish => Some(ZoneAction::Finish),
            OpKind::Reset => Some(ZoneAction::Reset),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Read => "read",
            OpKind::Write => "write",
            OpKind::Append => "append",
            OpKind::Open => "open",
            OpKind::Close => "close",
            OpKind::Finish => "finish",
            OpKind::Reset => "reset",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ZoneAction {
    Open,
    Close,
    Finish,
    Reset,
}

impl ZoneAction {
    pub fn kind(self) -> OpKind {
        match self {
            ZoneAction::Open => OpKind::Open,
            ZoneAction::Close => OpKind::Close,
            ZoneAction::Finish => OpKind::Finish,
            ZoneAction::Reset => OpKind::Reset,
        }
    }
}

/// A command as submitted by a host-side submitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneCommand {
    pub kind: OpKind,
    pub zone_id: u32,
    /// Absolute LBA; only meaningful for writes and reads.
    pub lba: Option<u64>,
    /// Block count; only meaningful for I/O kinds.
    pub nblocks: Option<u32>,
    pub submitter_id: u32,
}

impl ZoneCommand {
    pub fn write(zone_id: u32, lba: u64, nblocks: u32, submitter_id: u32) -> Self {
        Self { kind: OpKind::Write, zone_id, lba: Some(lba), nblocks: Some(nblocks), submitter_id }
    }

    pub fn append(zone_id: u32, nblocks: u32, submitter_id: u32) -> Self {
        Self { kind: OpKind::Append, zone_id, lba: None, nblocks: Some(nblocks), submitter_id }
    }

    pub fn read(zone_id: u32, lba: u64, nblocks: u32, submitter_id: u32) -> Self {
        Self { kind: OpKind::Read, zone_id, lba: Some(lba), nblocks: Some(nblocks), submitter_id }
    }

    pub fn manage(action: ZoneAction, zone_id: u32, submitter_id: u32) -> Self {
        Self { kind: action.kind(), zone_id, lba: None, nblocks: None, submitter_id }
    }

    pub fn bytes(&self, block_bytes: u32) -> u64 {
        u64::from(self.nblocks.unwrap_or(0)) * u64::from(block_bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZnsError {
    #[error("write does not start at the zone write pointer")]
    UnalignedWrite,
    #[error("zone is full")]
    ZoneFull,
    #[error("active zone limit reached")]
    TooManyActiveZones,
    #[error("open zone limit reached")]
    TooManyOpenZones,
    #[error("access outside the zone or namespace bounds")]
    BoundsExceeded,
    #[error("zone state does not permit this transition")]
    InvalidTransition,
}

impl ZnsError {
    pub fn code(self) -> &'static str {
        match self {
            ZnsError::UnalignedWrite => "unaligned_write",
            ZnsError::ZoneFull => "zone_full",
            ZnsError::TooManyActiveZones => "too_many_active_zones",
            ZnsError::TooManyOpenZones => "too_many_open_zones",
            ZnsError::BoundsExceeded => "bounds_exceeded",
            ZnsError::InvalidTransition => "invalid_transition",
        }
    }
}

/// What the namespace reports back when it accepts a write or append.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteAdmission {
    /// LBA of the first block placed; the caller's LBA for writes, the
    /// device-chosen one for appends.
    pub lba: u64,
    /// This command moved the zone out of Empty/Closed implicitly.
    pub implicit_open: bool,
    /// This command wrote the last block of capacity.
    pub filled_zone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadAdmission {
    /// At least one block lies beyond a write pointer; its content reads back
    /// as zeroes.
    pub zero_fill: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ManageAdmission {
    /// Zone as it was before the command took effect.
    pub prior: Zone,
    /// Reset of an already-empty zone; accepted and ignored.
    pub noop: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeviceReport {
    pub empty: u32,
    pub implicitly_open: u32,
    pub explicitly_open: u32,
    pub closed: u32,
    pub full: u32,
    pub open_zones: u32,
    pub active_zones: u32,
}

impl DeviceReport {
    pub fn total(&self) -> u32 {
        self.empty + self.implicitly_open + self.explicitly_open + self.closed + self.full
    }
}

#[derive(Debug, Clone)]
pub struct ZnsDevice {
    geometry: DeviceGeometry,
    zones: Vec<Zone>,
    open: u32,
    active: u32,
}

impl ZnsDevice {
    pub fn new(geometry: DeviceGeometry) -> Result<Self, GeometryError> {
        geometry.validate()?;
        let zones = (0..geometry.num_zones).map(Zone::new).collect();
        Ok(Self { geometry, zones, open: 0, active: 0 })
    }

    pub fn geometry(&self) -> &DeviceGeometry {
        &self.geometry
    }

    pub fn open_zones(&self) -> u32 {
        self.open
    }

    pub fn active_zones(&self) -> u32 {
        self.active
    }

    pub fn zone_report(&self, zone_id: u32) -> Result<Zone, ZnsError> {
        self.zones.get(zone_id as usize).copied().ok_or(ZnsError::BoundsExceeded)
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn device_report(&self) -> DeviceReport {
        let mut report = DeviceReport { open_zones: self.open, active_zones: self.active, ..Default::default() };
        for zone in &self.zones {
            match zone.state {
                ZoneState::Empty => report.empty += 1,
                ZoneState::ImplicitlyOpen => report.implicitly_open += 1,
                ZoneState::ExplicitlyOpen => report.explicitly_open += 1,
                ZoneState::Closed => report.closed += 1,
                ZoneState::Full => report.full += 1,
            }
        }
        report
    }

    pub fn submit_write(&mut self, zone_id: u32, lba: u64, nblocks: u32) -> Result<WriteAdmission, ZnsError> {
        let zslba = self.geometry.zslba(zone_id);
        self.place(zone_id, Some(lba), nblocks).inspect(|adm| debug_assert!(adm.lba >= zslba))
    }

    /// Places `nblocks` at the current write pointer and returns where they
    /// landed.
    pub fn submit_append(&mut self, zone_id: u32, nblocks: u32) -> Result<WriteAdmission, ZnsError> {
        self.place(zone_id, None, nblocks)
    }

    pub fn submit_read(&self, lba: u64, nblocks: u32) -> Result<ReadAdmission, ZnsError> {
        let end = lba.checked_add(u64::from(nblocks)).ok_or(ZnsError::BoundsExceeded)?;
        if nblocks == 0 || end > self.geometry.namespace_blocks() {
            return Err(ZnsError::BoundsExceeded);
        }
        let size = self.geometry.zone_size_blocks;
        let first = self.geometry.zone_of(lba);
        let last = self.geometry.zone_of(end - 1);
        let zero_fill = (first..=last).any(|z| {
            let zone = &self.zones[z as usize];
            let zone_start = u64::from(z) * size;
            let hi = end.min(zone_start + size) - zone_start;
            hi > zone.write_pointer
        });
        Ok(ReadAdmission { zero_fill })
    }

    pub fn zone_manage(&mut self, zone_id: u32, action: ZoneAction) -> Result<ManageAdmission, ZnsError> {
        let prior = self.zone_report(zone_id)?;
        let state = prior.state;
        let mut noop = false;
        match action {
            ZoneAction::Open => {
                match state {
                    ZoneState::Empty => {
                        self.reserve(true, true)?;
                    }
                    ZoneState::Closed => {
                        self.reserve(false, true)?;
                    }
                    _ => return Err(ZnsError::InvalidTransition),
                }
                self.zones[zone_id as usize].state = ZoneState::ExplicitlyOpen;
            }
            ZoneAction::Close => {
                if !state.is_open() {
                    return Err(ZnsError::InvalidTransition);
                }
                self.open -= 1;
                self.zones[zone_id as usize].state = ZoneState::Closed;
            }
            ZoneAction::Finish => {
                if matches!(state, ZoneState::Empty | ZoneState::Full) {
                    return Err(ZnsError::InvalidTransition);
                }
                self.release(state);
                let cap = self.geometry.zone_cap_blocks;
                let zone = &mut self.zones[zone_id as usize];
                zone.state = ZoneState::Full;
                zone.finished_before_reset = zone.write_pointer < cap;
            }
            ZoneAction::Reset => {
                noop = state == ZoneState::Empty;
                self.release(state);
                let zone = &mut self.zones[zone_id as usize];
                zone.state = ZoneState::Empty;
                zone.write_pointer = 0;
                zone.finished_before_reset = false;
            }
        }
        Ok(ManageAdmission { prior, noop })
    }

    fn place(&mut self, zone_id: u32, lba: Option<u64>, nblocks: u32) -> Result<WriteAdmission, ZnsError> {
        let zone = self.zone_report(zone_id)?;
        if zone.state == ZoneState::Full {
            return Err(ZnsError::ZoneFull);
        }
        let target = self.geometry.zslba(zone_id) + zone.write_pointer;
        if let Some(lba) = lba {
            if lba != target {
                return Err(ZnsError::UnalignedWrite);
            }
        }
        let cap = self.geometry.zone_cap_blocks;
        if nblocks == 0 || zone.write_pointer + u64::from(nblocks) > cap {
            return Err(ZnsError::BoundsExceeded);
        }
        let implicit_open = match zone.state {
            ZoneState::Empty => {
                self.reserve(true, true)?;
                true
            }
            ZoneState::Closed => {
                self.reserve(false, true)?;
                true
            }
            _ => false,
        };
        let geometry_state = if implicit_open { ZoneState::ImplicitlyOpen } else { zone.state };
        let wp = zone.write_pointer + u64::from(nblocks);
        let filled_zone = wp == cap;
        let slot = &mut self.zones[zone_id as usize];
        slot.write_pointer = wp;
        slot.state = geometry_state;
        if filled_zone {
            self.release(geometry_state);
            self.zones[zone_id as usize].state = ZoneState::Full;
        }
        Ok(WriteAdmission { lba: target, implicit_open, filled_zone })
    }

    /// Claims the resources needed to open a zone. Fails without side effects.
    fn reserve(&mut self, needs_active: bool, needs_open: bool) -> Result<(), ZnsError> {
        if needs_active && self.active >= self.geometry.max_active_zones {
            return Err(ZnsError::TooManyActiveZones);
        }
        if needs_open && self.open >= self.geometry.max_open_zones {
            return Err(ZnsError::TooManyOpenZones);
        }
        self.active += u32::from(needs_active);
        self.open += u32::from(needs_open);
        Ok(())
    }

    fn release(&mut self, state: ZoneState) {
        if state.is_open() {
            self.open -= 1;
        }
        if state.is_active() {
            self.active -= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(zones: u32, cap: u64, open: u32, active: u32) -> ZnsDevice {
        ZnsDevice::new(DeviceGeometry {
            zone_size_blocks: cap * 2,
            zone_cap_blocks: cap,
            num_zones: zones,
            block_bytes: 4096,
            max_open_zones: open,
            max_active_zones: active,
        })
        .unwrap()
    }

    #[test]
    fn zn540_layout() {
        let g = DeviceGeometry::zn540();
        g.validate().unwrap();
        assert_eq!(g.zone_cap_blocks, 275_712);
        assert_eq!(g.zone_size_blocks, 524_288);
        assert_eq!(g.zslba(3), 3 * 524_288);
    }

    #[test]
    fn geometry_rejects_bad_limits() {
        let mut g = DeviceGeometry::zn540();
        g.max_open_zones = 15;
        assert_eq!(g.validate(), Err(GeometryError::Limits));
        g = DeviceGeometry::zn540();
        g.zone_cap_blocks = g.zone_size_blocks + 1;
        assert!(matches!(g.validate(), Err(GeometryError::CapacityExceedsSize { .. })));
        g = DeviceGeometry::zn540();
        g.block_bytes = 1024;
        assert_eq!(g.validate(), Err(GeometryError::BlockSize(1024)));
    }

    #[test]
    fn first_write_implicitly_opens() {
        let mut dev = tiny(4, 8, 4, 4);
        let adm = dev.submit_write(0, 0, 1).unwrap();
        assert!(adm.implicit_open);
        let z = dev.zone_report(0).unwrap();
        assert_eq!(z.state, ZoneState::ImplicitlyOpen);
        assert_eq!(z.write_pointer, 1);
        assert!(!dev.submit_write(0, 1, 1).unwrap().implicit_open);
    }

    #[test]
    fn unaligned_write_rejected() {
        let mut dev = tiny(4, 8, 4, 4);
        dev.submit_write(0, 0, 5).unwrap();
        assert_eq!(dev.submit_write(0, 3, 1), Err(ZnsError::UnalignedWrite));
        assert_eq!(dev.zone_report(0).unwrap().write_pointer, 5);
    }

    #[test]
    fn active_limit_of_fourteen() {
        let mut dev = ZnsDevice::new(DeviceGeometry::zn540()).unwrap();
        for z in 0..14 {
            dev.submit_write(z, dev.geometry().zslba(z), 1).unwrap();
        }
        let lba = dev.geometry().zslba(14);
        assert_eq!(dev.submit_write(14, lba, 1), Err(ZnsError::TooManyActiveZones));
        assert_eq!(dev.zone_report(14).unwrap().state, ZoneState::Empty);
    }

    #[test]
    fn open_limit_below_active_limit() {
        let mut dev = tiny(4, 8, 1, 2);
        dev.submit_write(0, 0, 1).unwrap();
        assert_eq!(dev.submit_append(1, 1), Err(ZnsError::TooManyOpenZones));
        dev.zone_manage(0, ZoneAction::Close).unwrap();
        dev.submit_append(1, 1).unwrap();
        // zone 0 is closed and still active; reopening needs an open slot
        assert_eq!(dev.submit_write(0, 1, 1), Err(ZnsError::TooManyOpenZones));
    }

    #[test]
    fn write_filling_zone_releases_slots() {
        let mut dev = tiny(2, 8, 1, 1);
        let adm = dev.submit_write(0, 0, 8).unwrap();
        assert!(adm.filled_zone);
        assert_eq!(dev.zone_report(0).unwrap().state, ZoneState::Full);
        assert_eq!((dev.open_zones(), dev.active_zones()), (0, 0));
        assert_eq!(dev.submit_append(0, 1), Err(ZnsError::ZoneFull));
    }

    #[test]
    fn crossing_capacity_is_rejected_whole() {
        let mut dev = tiny(2, 8, 2, 2);
        dev.submit_write(0, 0, 6).unwrap();
        assert_eq!(dev.submit_write(0, 6, 3), Err(ZnsError::BoundsExceeded));
        assert_eq!(dev.zone_report(0).unwrap().write_pointer, 6);
    }

    #[test]
    fn append_returns_zslba_then_advances() {
        let mut dev = tiny(2, 8, 2, 2);
        let zslba = dev.geometry().zslba(1);
        assert_eq!(dev.submit_append(1, 2).unwrap().lba, zslba);
        assert_eq!(dev.submit_append(1, 1).unwrap().lba, zslba + 2);
        assert_eq!(dev.zone_report(1).unwrap().write_pointer, 3);
    }

    #[test]
    fn append_to_full_zone() {
        let mut dev = tiny(1, 8, 1, 1);
        dev.submit_append(0, 8).unwrap();
        assert_eq!(dev.submit_append(0, 1), Err(ZnsError::ZoneFull));
    }

    #[test]
    fn reads() {
        let mut dev = tiny(2, 8, 2, 2);
        dev.submit_write(0, 0, 4).unwrap();
        assert!(!dev.submit_read(0, 1).unwrap().zero_fill);
        assert!(dev.submit_read(3, 2).unwrap().zero_fill);
        assert!(dev.submit_read(16, 1).unwrap().zero_fill);
        assert_eq!(dev.submit_read(32, 1), Err(ZnsError::BoundsExceeded));
        assert_eq!(dev.submit_read(31, 2), Err(ZnsError::BoundsExceeded));
    }

    #[test]
    fn finish_rules() {
        let mut dev = tiny(2, 8, 2, 2);
        assert_eq!(dev.zone_manage(0, ZoneAction::Finish), Err(ZnsError::InvalidTransition));
        dev.submit_write(0, 0, 3).unwrap();
        let adm = dev.zone_manage(0, ZoneAction::Finish).unwrap();
        assert_eq!(adm.prior.write_pointer, 3);
        let z = dev.zone_report(0).unwrap();
        assert_eq!(z.state, ZoneState::Full);
        assert!(z.finished_before_reset);
        assert_eq!(dev.active_zones(), 0);
        assert_eq!(dev.zone_manage(0, ZoneAction::Finish), Err(ZnsError::InvalidTransition));
    }

    #[test]
    fn reset_full_zone() {
        let mut dev = tiny(2, 8, 2, 2);
        dev.submit_write(0, 0, 8).unwrap();
        dev.zone_manage(0, ZoneAction::Reset).unwrap();
        let z = dev.zone_report(0).unwrap();
        assert_eq!((z.state, z.write_pointer), (ZoneState::Empty, 0));
    }

    #[test]
    fn reset_of_empty_zone_is_noop() {
        let mut dev = tiny(2, 8, 2, 2);
        assert!(dev.zone_manage(1, ZoneAction::Reset).unwrap().noop);
        dev.submit_write(1, 16, 2).unwrap();
        dev.zone_manage(1, ZoneAction::Reset).unwrap();
        let once = dev.zones().to_vec();
        dev.zone_manage(1, ZoneAction::Reset).unwrap();
        assert_eq!(dev.zones(), &once[..]);
    }

    #[test]
    fn open_close_open_conserves_slots() {
        let mut dev = tiny(4, 8, 2, 3);
        let before = dev.open_zones();
        dev.zone_manage(2, ZoneAction::Open).unwrap();
        assert_eq!(dev.open_zones(), before + 1);
        dev.zone_manage(2, ZoneAction::Close).unwrap();
        assert_eq!(dev.open_zones(), before);
        assert_eq!(dev.active_zones(), 1);
        dev.zone_manage(2, ZoneAction::Open).unwrap();
        assert_eq!(dev.zone_report(2).unwrap().state, ZoneState::ExplicitlyOpen);
        assert_eq!(dev.zone_manage(2, ZoneAction::Open), Err(ZnsError::InvalidTransition));
    }

    #[test]
    fn write_to_closed_zone_reopens_implicitly() {
        let mut dev = tiny(4, 8, 2, 2);
        dev.zone_manage(0, ZoneAction::Open).unwrap();
        dev.submit_write(0, 0, 1).unwrap();
        dev.zone_manage(0, ZoneAction::Close).unwrap();
        let adm = dev.submit_write(0, 1, 1).unwrap();
        assert!(adm.implicit_open);
        assert_eq!(dev.zone_report(0).unwrap().state, ZoneState::ImplicitlyOpen);
    }

    #[test]
    fn reports() {
        let mut dev = tiny(8, 8, 4, 4);
        let r = dev.device_report();
        assert_eq!((r.empty, r.open_zones, r.active_zones), (8, 0, 0));
        for z in 0..3 {
            dev.submit_append(z, 1).unwrap();
        }
        let r = dev.device_report();
        assert_eq!((r.implicitly_open, r.active_zones, r.total()), (3, 3, 8));
        assert_eq!(dev.zone_report(8), Err(ZnsError::BoundsExceeded));
    }
}
