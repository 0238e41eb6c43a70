//! Seeded generator for multi-pager workloads in which every fault resolves.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::address_space::LayoutConfig;
use crate::pagers::{MarkerPolicy, PagerBehavior, PagerPolicy};
use crate::scenario::{DeclaredRole, ScenarioFile, Statement};
use crate::types::{Access, Asid, Tid, PAGE_SHIFT};

/// First frame handed to fixed backings; far above what the bump allocator reaches.
const FIXED_FRAME_BASE: u32 = 900_000;

#[derive(Debug, Clone)]
pub struct WorkloadConfig {
    pub seed: u64,
    pub faults: usize,
    /// Regions in use per address space.
    pub regions_per_space: u32,
}

impl WorkloadConfig {
    pub fn new(seed: u64, faults: usize) -> Self {
        Self {
            seed,
            faults,
            regions_per_space: 6,
        }
    }
}

/// Two client spaces with three threads, three pagers with different
/// policies, and `faults` accesses to distinct absent pages.
pub fn resolved_workload(cfg: &WorkloadConfig) -> ScenarioFile {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let layout = LayoutConfig::default();
    let pager_space = Asid(3);
    let client_spaces = [Asid(1), Asid(2)];
    let threads = [(Tid(1), Asid(1)), (Tid(2), Asid(1)), (Tid(3), Asid(2))];
    let pagers = [Tid(100), Tid(101), Tid(102)];

    // regions per space and their managers
    let mut managers: BTreeMap<(Asid, u32), Tid> = BTreeMap::new();
    for &asid in &client_spaces {
        let mut rids: Vec<u32> = (0..layout.region_count).collect();
        rids.shuffle(&mut rng);
        for &rid in rids.iter().take(cfg.regions_per_space as usize) {
            managers.insert((asid, rid), *pagers.choose(&mut rng).expect("non-empty"));
        }
    }
    let regions: Vec<(Asid, u32)> = managers.keys().copied().collect();

    // distinct pages; a region holds far more pages than any sane fault count
    let mut used: BTreeSet<(Asid, u32)> = BTreeSet::new();
    let mut accesses = Vec::with_capacity(cfg.faults);
    let mut backing: BTreeMap<u32, u32> = BTreeMap::new();
    while accesses.len() < cfg.faults {
        let &(tid, asid) = threads.choose(&mut rng).expect("non-empty");
        let candidates: Vec<u32> = regions
            .iter()
            .filter(|(a, _)| *a == asid)
            .map(|(_, r)| *r)
            .collect();
        let rid = *candidates
            .choose(&mut rng)
            .expect("every space has regions");
        let pages = layout.region_pages(rid);
        let vpn = rng.gen_range(pages);
        if !used.insert((asid, vpn)) {
            continue;
        }
        if managers[&(asid, rid)] == pagers[2] {
            // fixed backings are keyed by page number only, so keep them unique across spaces
            if backing.contains_key(&vpn) {
                used.remove(&(asid, vpn));
                continue;
            }
            backing.insert(vpn, FIXED_FRAME_BASE + backing.len() as u32);
        }
        let offset = rng.gen_range(0..1u32 << PAGE_SHIFT);
        let access = if rng.gen_bool(0.5) {
            Access::Read
        } else {
            Access::Write
        };
        accesses.push((tid, (vpn << PAGE_SHIFT) | offset, access));
    }

    let mut st = vec![
        Statement::Space(Asid(1)),
        Statement::Space(Asid(2)),
        Statement::Space(pager_space),
    ];
    st.push(Statement::Pager {
        tid: pagers[0],
        asid: pager_space,
        behavior: PagerBehavior {
            marker: MarkerPolicy::PageIndex,
            ..PagerBehavior::zero_fill()
        },
    });
    st.push(Statement::Pager {
        tid: pagers[1],
        asid: pager_space,
        behavior: PagerBehavior {
            marker: MarkerPolicy::Constant(7),
            ..PagerBehavior::zero_fill()
        },
    });
    st.push(Statement::Pager {
        tid: pagers[2],
        asid: pager_space,
        behavior: PagerBehavior::new(PagerPolicy::FixedBacking(backing)),
    });
    for (tid, asid) in threads {
        st.push(Statement::Thread {
            tid,
            asid,
            role: DeclaredRole::Applicant,
            pager: Some(*pagers.choose(&mut rng).expect("non-empty")),
        });
    }
    for (&(asid, rid), &pager) in &managers {
        st.push(Statement::Assign { asid, rid, pager });
    }
    for (tid, vaddr, access) in accesses {
        st.push(Statement::Access { tid, vaddr, access });
    }
    ScenarioFile::from_statements(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    #[test]
    fn deterministic_and_parsable() {
        let a = resolved_workload(&WorkloadConfig::new(7, 50));
        let b = resolved_workload(&WorkloadConfig::new(7, 50));
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(parse_scenario(&a.to_text()).unwrap(), a);
        let accesses = a
            .statements
            .iter()
            .filter(|s| matches!(s, Statement::Access { .. }))
            .count();
        assert_eq!(accesses, 50);
    }
}
