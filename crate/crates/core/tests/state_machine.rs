mod support;

use proptest::prelude::*;
use znsim::device::{DeviceGeometry, ZnsDevice, ZnsError, ZoneAction, ZoneState};

use support::{tiny_geometry, RefCmd, RefDevice, RefOk};

fn apply(dev: &mut ZnsDevice, cmd: RefCmd) -> Result<RefOk, ZnsError> {
    let g = *dev.geometry();
    match cmd {
        RefCmd::Write { zone, offset, n } => {
            dev.submit_write(zone, g.zslba(zone) + offset, n).map(|a| RefOk::Placed(a.lba))
        }
        RefCmd::Append { zone, n } => dev.submit_append(zone, n).map(|a| RefOk::Placed(a.lba)),
        RefCmd::Read { lba, n } => dev.submit_read(lba, n).map(|a| RefOk::Read(a.zero_fill)),
        RefCmd::Manage { zone, action } => dev.zone_manage(zone, action).map(|_| RefOk::Managed),
    }
}

fn action() -> impl Strategy<Value = ZoneAction> {
    prop_oneof![Just(ZoneAction::Open), Just(ZoneAction::Close), Just(ZoneAction::Finish), Just(ZoneAction::Reset)]
}

fn command() -> impl Strategy<Value = RefCmd> {
    prop_oneof![
        3 => (0..4u32, 0..9u64, 0..5u32).prop_map(|(zone, offset, n)| RefCmd::Write { zone, offset, n }),
        2 => (0..4u32, 0..5u32).prop_map(|(zone, n)| RefCmd::Append { zone, n }),
        1 => (0..34u64, 0..4u32).prop_map(|(lba, n)| RefCmd::Read { lba, n }),
        3 => (0..4u32, action()).prop_map(|(zone, action)| RefCmd::Manage { zone, action }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn matches_reference_model(cmds in prop::collection::vec(command(), 1..60)) {
        let g = tiny_geometry();
        let mut dev = ZnsDevice::new(g).unwrap();
        let mut oracle = RefDevice::new(g);
        for cmd in cmds {
            // Writes are generated at the write pointer often enough to matter.
            let cmd = match cmd {
                RefCmd::Write { zone, offset: 8, n } => RefCmd::Write { zone, offset: oracle.zones[zone as usize].wp(), n },
                c => c,
            };
            prop_assert_eq!(apply(&mut dev, cmd), oracle.apply(cmd), "{:?}", cmd);
            for (z, r) in dev.zones().iter().zip(&oracle.zones) {
                prop_assert_eq!(z.state, r.state);
                prop_assert_eq!(z.write_pointer, r.wp());
                prop_assert_eq!(z.finished_before_reset, r.finished_early);
            }
            prop_assert_eq!(dev.open_zones(), oracle.open_count());
            prop_assert_eq!(dev.active_zones(), oracle.active_count());
            prop_assert!(dev.open_zones() <= g.max_open_zones);
            prop_assert!(dev.active_zones() <= g.max_active_zones);
            prop_assert_eq!(dev.device_report().total(), g.num_zones);
        }
    }

    #[test]
    fn write_pointer_only_falls_on_reset(cmds in prop::collection::vec(command(), 1..60)) {
        let mut dev = ZnsDevice::new(tiny_geometry()).unwrap();
        for cmd in cmds {
            let before: Vec<u64> = dev.zones().iter().map(|z| z.write_pointer).collect();
            let result = apply(&mut dev, cmd);
            for (i, z) in dev.zones().iter().enumerate() {
                let reset_here = matches!(cmd, RefCmd::Manage { zone, action: ZoneAction::Reset } if zone as usize == i) && result.is_ok();
                if reset_here {
                    prop_assert_eq!(z.write_pointer, 0);
                } else {
                    prop_assert!(z.write_pointer >= before[i]);
                }
                prop_assert!(z.write_pointer <= 8);
            }
        }
    }
}

#[test]
fn back_to_back_appends_take_consecutive_lbas() {
    // Every admission order of two 1-block appends to one empty zone lands
    // them at the zone start and the next block.
    let g = DeviceGeometry {
        zone_size_blocks: 16,
        zone_cap_blocks: 8,
        num_zones: 1,
        block_bytes: 4096,
        max_open_zones: 1,
        max_active_zones: 1,
    };
    let mut dev = ZnsDevice::new(g).unwrap();
    let a = dev.submit_append(0, 1).unwrap();
    let b = dev.submit_append(0, 1).unwrap();
    assert_eq!((a.lba, b.lba), (0, 1));
    assert!(a.implicit_open && !b.implicit_open);
}

#[test]
fn fifteenth_active_zone_is_refused() {
    let g = DeviceGeometry::zn540();
    let mut dev = ZnsDevice::new(g).unwrap();
    for z in 0..14 {
        dev.submit_write(z, g.zslba(z), 1).unwrap();
    }
    assert_eq!(dev.submit_write(14, g.zslba(14), 1), Err(ZnsError::TooManyActiveZones));
    dev.zone_manage(3, ZoneAction::Finish).unwrap();
    dev.submit_write(14, g.zslba(14), 1).unwrap();
    assert_eq!(dev.active_zones(), 14);
}

#[test]
fn filling_a_zone_releases_its_resources() {
    let g = tiny_geometry();
    let mut dev = ZnsDevice::new(g).unwrap();
    let adm = dev.submit_append(1, 8).unwrap();
    assert!(adm.filled_zone && adm.implicit_open);
    assert_eq!(dev.zone_report(1).unwrap().state, ZoneState::Full);
    assert_eq!((dev.open_zones(), dev.active_zones()), (0, 0));
    assert_eq!(dev.submit_append(1, 1), Err(ZnsError::ZoneFull));
    assert!(!dev.zone_report(1).unwrap().finished_before_reset);
}
