use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use regionpager_core::sim::MessageKind;
use regionpager_core::{
    parse_scenario, resolved_workload, run_scenario, run_scenario_with, Access, Asid, Charge,
    CycleMetrics, EventKind, FaultVerdict, Kernel, LayoutConfig, MemoryAccess, RegionLookup,
    RunOptions, Scheme, Tid, Trace, Translation, WorkloadConfig,
};

fn workload(seed: u64, faults: usize) -> regionpager_core::ScenarioFile {
    resolved_workload(&WorkloadConfig::new(seed, faults))
}

/// Replays context switches and checks each starts from the previous holder.
/// A return to user mode may precede the switch that hands the cpu over.
fn occupancy_is_consistent(trace: &Trace) -> Result<(), String> {
    let events = trace.events();
    let mut holder: Option<Tid> = None;
    for (i, e) in events.iter().enumerate() {
        match e.kind {
            EventKind::ContextSwitch { from, to } => {
                if holder.is_some_and(|h| h != from) {
                    return Err(format!(
                        "seq {}: switch from {from} while {holder:?} holds",
                        e.seq
                    ));
                }
                if from == to {
                    return Err(format!("seq {}: self switch", e.seq));
                }
                holder = Some(to);
            }
            EventKind::ModeSwitchKernelToUser { tid } if holder.is_none() => holder = Some(tid),
            EventKind::ModeSwitchKernelToUser { tid } if holder != Some(tid) => {
                let handover = events.get(i + 1).is_some_and(
                    |n| matches!(n.kind, EventKind::ContextSwitch { to, .. } if to == tid),
                );
                if !handover {
                    return Err(format!(
                        "seq {}: {tid} enters user mode without the cpu",
                        e.seq
                    ));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn suspend_resume_paired(trace: &Trace) -> Result<(), String> {
    let mut suspended = BTreeSet::new();
    for e in trace.events() {
        match e.kind {
            EventKind::Suspend { tid } => {
                if !suspended.insert(tid) {
                    return Err(format!("seq {}: double suspend of {tid}", e.seq));
                }
            }
            EventKind::Resume { tid } if !suspended.remove(&tid) => {
                return Err(format!("seq {}: resume of {tid} without suspend", e.seq));
            }
            _ => {}
        }
    }
    Ok(())
}

fn modes_alternate(trace: &Trace) -> Result<(), String> {
    // boot state is kernel mode
    let mut user = false;
    for e in trace.events() {
        match e.kind {
            EventKind::ModeSwitchUserToKernel { .. } if user => user = false,
            EventKind::ModeSwitchKernelToUser { .. } if !user => user = true,
            EventKind::ModeSwitchUserToKernel { .. } | EventKind::ModeSwitchKernelToUser { .. } => {
                return Err(format!("seq {}: mode switch into the current mode", e.seq))
            }
            _ => {}
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn engine_invariants_hold_on_random_workloads(seed in any::<u64>(), faults in 1usize..30) {
        let f = workload(seed, faults);
        for scheme in Scheme::ALL {
            let run = run_scenario(scheme, &f).unwrap();
            prop_assert_eq!(occupancy_is_consistent(&run.trace), Ok(()));
            prop_assert_eq!(suspend_resume_paired(&run.trace), Ok(()));
            prop_assert_eq!(modes_alternate(&run.trace), Ok(()));
        }
    }

    #[test]
    fn seeded_runs_are_reproducible(seed in any::<u64>(), order in any::<u64>()) {
        let f = workload(seed, 12);
        let opts = RunOptions { seed: Some(order), ..RunOptions::default() };
        for scheme in Scheme::ALL {
            let a = run_scenario_with(scheme, &f, &opts).unwrap();
            let b = run_scenario_with(scheme, &f, &opts).unwrap();
            prop_assert_eq!(a.trace.to_text(), b.trace.to_text());
        }
    }

    #[test]
    fn seeded_order_keeps_outcomes_equivalent(seed in any::<u64>(), order in any::<u64>()) {
        let f = workload(seed, 16);
        let opts = RunOptions { seed: Some(order), ..RunOptions::default() };
        let reference = run_scenario_with(Scheme::ProposedRegionDispatch, &f, &opts).unwrap();
        for scheme in Scheme::ALL {
            let r = run_scenario_with(scheme, &f, &opts).unwrap();
            prop_assert_eq!(r.page_tables(), reference.page_tables());
        }
    }

    #[test]
    fn every_fault_gets_exactly_one_verdict(seed in any::<u64>(), faults in 1usize..25) {
        let f = workload(seed, faults);
        for scheme in Scheme::ALL {
            let run = run_scenario(scheme, &f).unwrap();
            let mut per_cycle: BTreeMap<u32, u32> = BTreeMap::new();
            for e in run.trace.events() {
                if let (EventKind::Verdict { .. }, Charge::Cycle(c)) = (&e.kind, e.charge) {
                    *per_cycle.entry(c).or_default() += 1;
                }
            }
            prop_assert_eq!(per_cycle.len(), run.faults.len());
            prop_assert!(per_cycle.values().all(|&n| n == 1));
        }
    }

    #[test]
    fn fault_messages_reach_the_region_manager(seed in any::<u64>(), faults in 1usize..25) {
        let f = workload(seed, faults);
        let run = run_scenario(Scheme::ProposedRegionDispatch, &f).unwrap();
        let layout = LayoutConfig::default();
        for e in run.trace.events() {
            if let EventKind::IpcSend(m) = &e.kind {
                if m.kind != MessageKind::PageFault {
                    continue;
                }
                let asid = run.threads.iter().find(|t| t.tid == m.payload.faulter).unwrap().asid;
                let RegionLookup::Region(rid) = regionpager_core::region_id_of(&layout, m.payload.vaddr) else {
                    panic!("kernel address dispatched");
                };
                let manager = run.spaces[&asid].regions.slot(rid).unwrap().manager;
                prop_assert_eq!(Some(m.receiver), manager);
            }
        }
    }

    #[test]
    fn reflection_preserves_payload(seed in any::<u64>(), faults in 1usize..20) {
        let f = workload(seed, faults);
        let run = run_scenario(Scheme::L4PlusL4Re, &f).unwrap();
        let mut original = BTreeMap::new();
        let mut reflected = 0;
        for e in run.trace.events() {
            if let (EventKind::IpcSend(m), Charge::Cycle(c)) = (&e.kind, e.charge) {
                match m.kind {
                    MessageKind::PageFault => {
                        original.insert(c, m.payload);
                    }
                    MessageKind::Reflection => {
                        prop_assert_eq!(Some(&m.payload), original.get(&c));
                        reflected += 1;
                    }
                    MessageKind::Reply => {}
                }
            }
        }
        prop_assert_eq!(reflected, run.faults.len());
    }

    #[test]
    fn frames_are_unique_across_spaces(seed in any::<u64>(), faults in 1usize..40) {
        let f = workload(seed, faults);
        for scheme in Scheme::ALL {
            let run = run_scenario(scheme, &f).unwrap();
            let frames: Vec<u32> = run.page_tables().values().flatten().map(|&(_, fr, _)| fr).collect();
            let distinct: BTreeSet<u32> = frames.iter().copied().collect();
            prop_assert_eq!(frames.len(), distinct.len());
        }
    }

    #[test]
    fn totals_are_linear_in_fault_count(seed in any::<u64>(), faults in 1usize..40) {
        let f = workload(seed, faults);
        let per = [
            (Scheme::Monolithic, CycleMetrics::new(2, 0, 0, 0)),
            (Scheme::L4SinglePager, CycleMetrics::new(4, 2, 2, 1)),
            (Scheme::ProposedRegionDispatch, CycleMetrics::new(4, 2, 2, 1)),
            (Scheme::L4PlusL4Re, CycleMetrics::new(6, 3, 3, 2)),
        ];
        let n = faults as u32;
        for (scheme, m) in per {
            let report = regionpager_core::OverheadReport::from_runs(&[run_scenario(scheme, &f).unwrap()]);
            let t = report.rows[0].totals;
            prop_assert_eq!(t, CycleMetrics::new(n * m.mode_switches, n * m.context_switches, n * m.ipc_messages, n * m.pager_invocations));
        }
    }

    #[test]
    fn scenario_round_trip(seed in any::<u64>(), faults in 0usize..20) {
        let f = workload(seed, faults);
        let text = f.to_text();
        let again = parse_scenario(&text).unwrap();
        prop_assert_eq!(&again, &f);
        prop_assert_eq!(again.to_text(), text);
    }

    #[test]
    fn map_translate_unmap_round_trip(page in 0u32..32, frame in any::<u32>(), marker in 0u32..(1 << 31)) {
        let layout = LayoutConfig::small();
        let mut k = Kernel::new(Scheme::ProposedRegionDispatch, layout).unwrap();
        k.add_space(Asid(1)).unwrap();
        let vaddr = page << 12;
        let probe = |vaddr| MemoryAccess { tid: Tid(1), vaddr, access: Access::Read };
        k.map_page(Asid(1), vaddr, frame, marker).unwrap();
        prop_assert_eq!(k.translate(Asid(1), probe(vaddr + 7)).unwrap(), Translation::Frame(frame));
        k.unmap_page(Asid(1), vaddr, false).unwrap();
        let faulted = matches!(k.translate(Asid(1), probe(vaddr)).unwrap(), Translation::Fault(_));
        prop_assert!(faulted);
        prop_assert_eq!(k.space(Asid(1)).unwrap().page_table.entry(vaddr).marker.get(), marker);
    }

    #[test]
    fn dispatched_marker_is_last_written(marker in 0u32..(1 << 31), page in 0u32..4) {
        let mut k = Kernel::new(Scheme::ProposedRegionDispatch, LayoutConfig::small()).unwrap();
        k.add_space(Asid(1)).unwrap();
        k.add_space(Asid(2)).unwrap();
        k.spawn_applicant(Tid(1), Asid(1)).unwrap();
        k.add_pager(Tid(10), Asid(2), regionpager_core::PagerBehavior::zero_fill()).unwrap();
        k.assign_manager(Asid(1), 0, Tid(10)).unwrap();
        let vaddr = page << 12;
        k.pager_map(Tid(10), Asid(1), vaddr, 77, marker).unwrap();
        k.pager_unmap(Tid(10), Asid(1), vaddr, false).unwrap();
        k.hold_pager(Tid(10)).unwrap();
        k.run_thread(Tid(1)).unwrap();
        let Translation::Fault(ev) = k.translate(Asid(1), MemoryAccess { tid: Tid(1), vaddr, access: Access::Write }).unwrap() else {
            panic!("absent page must fault");
        };
        prop_assert_eq!(k.handle_fault(ev).unwrap(), FaultVerdict::DispatchedToPager(Tid(10)));
        let held = k.pager(Tid(10)).unwrap().pending.unwrap();
        prop_assert_eq!(held.payload.marker.get(), marker);
    }

    #[test]
    fn regions_partition_the_user_range(count in 1u32..64, shift in 12u32..20, base_pages in 0u32..16) {
        let cfg = LayoutConfig {
            user_base: base_pages << 12,
            region_size: 1 << shift,
            region_count: count,
            pages_per_region: 1 << (shift - 12),
        };
        prop_assume!(cfg.validate().is_ok());
        let mut expected_start = u64::from(cfg.user_base);
        for rid in 0..count {
            let b = cfg.region_bounds(rid);
            prop_assert_eq!(b.start, expected_start);
            prop_assert_eq!(regionpager_core::region_id_of(&cfg, b.start as u32), RegionLookup::Region(rid));
            prop_assert_eq!(regionpager_core::region_id_of(&cfg, (b.end - 1) as u32), RegionLookup::Region(rid));
            expected_start = b.end;
        }
        prop_assert_eq!(expected_start, cfg.user_end());
        if cfg.user_base > 0 {
            prop_assert_eq!(regionpager_core::region_id_of(&cfg, cfg.user_base - 1), RegionLookup::KernelRange);
        }
    }
}

#[test]
fn no_send_when_page_present_at_dispatch() {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../fixtures/classification.scn"
    ))
    .unwrap();
    let f = parse_scenario(&text).unwrap();
    for scheme in Scheme::ALL {
        let run = run_scenario(scheme, &f).unwrap();
        for rec in &run.faults {
            if rec.verdict == Some(FaultVerdict::ResumedWithoutPager) {
                let sends = regionpager_core::schemes::cycle_sends(&run.trace, rec.index);
                assert!(
                    sends.is_empty(),
                    "{scheme}: fault {} sent {sends:?}",
                    rec.index
                );
            }
        }
    }
}
