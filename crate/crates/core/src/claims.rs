//! Reproduction package: one entry per acceptance criterion, each checked
//! exactly against a shipped fixture or a seeded generator.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::address_space::{
    region_id_of, region_id_of_shift, ContractState, LayoutConfig, RegionLookup,
};
use crate::fault_dispatch::FaultVerdict;
use crate::kernel::{AccountingRule, Kernel};
use crate::mmu::FaultEvent;
use crate::pagers::PagerBehavior;
use crate::scenario::{parse_scenario, ScenarioError, ScenarioFile};
use crate::schemes::{
    check_expectations, cycle_sends, reduction, run_scenario_with, CycleMetrics, OverheadReport,
    Run, RunOptions, Scheme,
};
use crate::types::{Access, Asid, Tid, PAGE_SHIFT};
use crate::workload::{resolved_workload, WorkloadConfig};

#[derive(Debug, Error)]
pub enum ClaimError {
    #[error("missing fixture {0}")]
    MissingFixture(PathBuf),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Scenario {
        path: PathBuf,
        #[source]
        source: ScenarioError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClaimEntry {
    pub id: u32,
    pub name: &'static str,
    pub summary: &'static str,
    /// Fixture file name, relative to the fixtures directory.
    pub fixture: Option<&'static str>,
    pub expected: &'static str,
}

pub const CLAIMS: [ClaimEntry; 9] = [
    ClaimEntry {
        id: 1,
        name: "switch-counts",
        summary: "single resolved fault: per-scheme mode and context switch counts",
        fixture: Some("single_fault.scn"),
        expected: "Monolithic 2/0, L4SinglePager 4/2, Proposed 4/2, L4PlusL4Re 6/3; under 1s",
    },
    ClaimEntry {
        id: 2,
        name: "reduction",
        summary: "saving of the proposed scheme over the region-mapper scheme",
        fixture: Some("single_fault.scn"),
        expected: "mode (6-4)/6 = 1/3, ctx (3-2)/3 = 1/3",
    },
    ClaimEntry {
        id: 3,
        name: "region-id",
        summary: "division form, shift form and linear scan agree on region ids",
        fixture: None,
        expected: "0 mismatches over 10000 addresses per profile",
    },
    ClaimEntry {
        id: 4,
        name: "classification",
        summary: "fault verdict for every region condition of the small profile",
        fixture: Some("classification.scn"),
        expected: "KERNEL_RANGE, NO_PAGER, NOT_ACCEPTED, NOT_ACCEPTED, DISPATCHED, RESUMED_PRESENT",
    },
    ClaimEntry {
        id: 5,
        name: "concurrent-fault",
        summary: "second faulter finds the page restored and skips the pager",
        fixture: Some("concurrent_fault.scn"),
        expected: "A {4,2,2,1}; B {2,0,0,0} with no send in its segment",
    },
    ClaimEntry {
        id: 6,
        name: "contract",
        summary: "contract transitions stay in the declared set; revoked regions reject faults",
        fixture: Some("revoke.scn"),
        expected: "0 illegal transitions; 100% GP after revoke until re-assignment",
    },
    ClaimEntry {
        id: 7,
        name: "footprint",
        summary: "serialized region table of the default profile fits one page",
        fixture: None,
        expected: "4080 bytes <= 4096",
    },
    ClaimEntry {
        id: 8,
        name: "equivalence",
        summary: "randomized 50-fault workload: same page tables, ordered overheads",
        fixture: None,
        expected: "identical page tables; L4PlusL4Re > Proposed >= Monolithic per cycle; under 5s",
    },
    ClaimEntry {
        id: 9,
        name: "determinism",
        summary: "every fixture traces byte-identically across two runs",
        fixture: None,
        expected: "0 differing traces",
    },
];

/// Fixtures the claims read; all must exist before anything runs.
pub const FIXTURES: [&str; 7] = [
    "single_fault.scn",
    "concurrent_fault.scn",
    "classification.scn",
    "revoke.scn",
    "l4re_dbrange.scn",
    "multi_pager.scn",
    "zero.scn",
];

pub const REGION_ID_SAMPLES: usize = 10_000;
pub const CONTRACT_SEQUENCES: usize = 300;
pub const WORKLOAD_FAULTS: usize = 50;
pub const WORKLOAD_SEED: u64 = 0x5eed;
const SINGLE_FAULT_BUDGET: Duration = Duration::from_secs(1);
const WORKLOAD_BUDGET: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Default)]
pub struct ReproduceOptions {
    pub accounting: AccountingRule,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimOutcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

struct Ctx {
    dir: PathBuf,
    opts: RunOptions,
    files: BTreeMap<&'static str, ScenarioFile>,
}

type Check = Result<String, String>;

impl Ctx {
    fn file(&self, name: &str) -> &ScenarioFile {
        &self.files[name]
    }

    fn run(&self, scheme: Scheme, f: &ScenarioFile) -> Result<Run, String> {
        run_scenario_with(scheme, f, &self.opts).map_err(|e| e.to_string())
    }

    fn runs(&self, f: &ScenarioFile) -> Result<Vec<Run>, String> {
        f.supported_schemes()
            .into_iter()
            .map(|s| self.run(s, f))
            .collect()
    }

    fn expectations(&self, f: &ScenarioFile) -> Result<usize, String> {
        let mut checked = 0;
        for run in self.runs(f)? {
            let fails = check_expectations(f, &run);
            if let Some(first) = fails.first() {
                return Err(format!(
                    "{} expectation(s) failed, first: {first}",
                    fails.len()
                ));
            }
            checked += 1;
        }
        Ok(checked)
    }
}

/// Per-cycle counts of the single-fault fixture, in report order.
pub const SWITCH_COUNTS: [(Scheme, u32, u32); 4] = [
    (Scheme::Monolithic, 2, 0),
    (Scheme::L4SinglePager, 4, 2),
    (Scheme::ProposedRegionDispatch, 4, 2),
    (Scheme::L4PlusL4Re, 6, 3),
];

fn claim_switch_counts(cx: &Ctx) -> Check {
    let t0 = Instant::now();
    let f = cx.file("single_fault.scn");
    let mut got = Vec::new();
    for (scheme, mode, ctx) in SWITCH_COUNTS {
        let run = cx.run(scheme, f)?;
        if run.faults.len() != 1 {
            return Err(format!("{scheme}: {} faults, expected 1", run.faults.len()));
        }
        let m = run.cycle(0).map_err(|e| format!("{scheme}: {e}"))?;
        if (m.mode_switches, m.context_switches) != (mode, ctx) {
            return Err(format!(
                "{scheme}: {}/{}, expected {mode}/{ctx}",
                m.mode_switches, m.context_switches
            ));
        }
        got.push(format!("{} {}/{}", scheme.label(), mode, ctx));
    }
    let elapsed = t0.elapsed();
    if elapsed >= SINGLE_FAULT_BUDGET {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(got.join(", "))
}

fn claim_reduction(cx: &Ctx) -> Check {
    let f = cx.file("single_fault.scn");
    let runs = [
        cx.run(Scheme::ProposedRegionDispatch, f)?,
        cx.run(Scheme::L4PlusL4Re, f)?,
    ];
    let report = OverheadReport::from_runs(&runs);
    let p = report
        .row(Scheme::ProposedRegionDispatch)
        .expect("row")
        .totals;
    let r = report.row(Scheme::L4PlusL4Re).expect("row").totals;
    let mode = reduction(r.mode_switches, p.mode_switches);
    let ctx = reduction(r.context_switches, p.context_switches);
    let third = Some(Ratio::new(1, 3));
    if mode != third || ctx != third {
        return Err(format!("mode {mode:?}, ctx {ctx:?}"));
    }
    Ok("mode 1/3, ctx 1/3".into())
}

/// Region of `vaddr` by walking every region's bounds.
fn region_by_scan(cfg: &LayoutConfig, vaddr: u32) -> RegionLookup {
    let v = u64::from(vaddr);
    (0..cfg.region_count)
        .find(|&rid| cfg.region_bounds(rid).contains(&v))
        .map_or(RegionLookup::KernelRange, RegionLookup::Region)
}

fn claim_region_id(_: &Ctx) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for cfg in [LayoutConfig::default(), LayoutConfig::small()] {
        let end = cfg.user_end();
        for _ in 0..REGION_ID_SAMPLES {
            let v = rng.gen_range(u64::from(cfg.user_base)..end) as u32;
            let a = region_id_of(&cfg, v);
            if a != region_id_of_shift(&cfg, v)
                || a != region_by_scan(&cfg, v)
                || a == RegionLookup::KernelRange
            {
                mismatches += 1;
            }
        }
    }
    if mismatches > 0 {
        return Err(format!("{mismatches} mismatches"));
    }
    Ok(format!(
        "0 mismatches over {} addresses",
        2 * REGION_ID_SAMPLES
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionCondition {
    Unassigned,
    AssignedNotAccepting,
    Revoked,
    AcceptedAbsent,
    AcceptedPresent,
}

impl RegionCondition {
    pub const ALL: [RegionCondition; 5] = [
        RegionCondition::Unassigned,
        RegionCondition::AssignedNotAccepting,
        RegionCondition::Revoked,
        RegionCondition::AcceptedAbsent,
        RegionCondition::AcceptedPresent,
    ];

    pub fn expected_verdict(self) -> &'static str {
        match self {
            RegionCondition::Unassigned => "NO_PAGER",
            RegionCondition::AssignedNotAccepting | RegionCondition::Revoked => "NOT_ACCEPTED",
            RegionCondition::AcceptedAbsent => "DISPATCHED",
            RegionCondition::AcceptedPresent => "RESUMED_PRESENT",
        }
    }
}

/// Sets region `rid` of the small profile into `cond` and faults on its second page.
pub fn classify_case(scheme: Scheme, rid: u32, cond: RegionCondition) -> FaultVerdict {
    let layout = LayoutConfig::small();
    let mut k = Kernel::new(scheme, layout).expect("small layout is valid");
    let (space, pager_space, app, pager) = (Asid(1), Asid(2), Tid(1), Tid(10));
    k.add_space(space).unwrap();
    k.add_space(pager_space).unwrap();
    k.spawn_applicant(app, space).unwrap();
    k.add_pager(pager, pager_space, PagerBehavior::zero_fill())
        .unwrap();
    if scheme == Scheme::L4SinglePager {
        k.set_thread_pager(app, pager).unwrap();
    }
    if scheme == Scheme::L4PlusL4Re {
        k.add_region_mapper(Tid(11), space, None).unwrap();
    }
    let first = layout.region_pages(rid).start << PAGE_SHIFT;
    let target = first + (1 << PAGE_SHIFT);
    match cond {
        RegionCondition::Unassigned => {}
        RegionCondition::AssignedNotAccepting => {
            k.assign_manager(space, rid, pager).unwrap();
            k.refuse(space, rid, pager).unwrap();
        }
        RegionCondition::Revoked => {
            k.assign_manager(space, rid, pager).unwrap();
            k.pager_map(pager, space, first, 500, 0).unwrap();
            k.pager_unmap(pager, space, first, true).unwrap();
        }
        RegionCondition::AcceptedAbsent => {
            k.assign_manager(space, rid, pager).unwrap();
            k.pager_map(pager, space, first, 500, 0).unwrap();
        }
        RegionCondition::AcceptedPresent => {
            k.assign_manager(space, rid, pager).unwrap();
            k.pager_map(pager, space, target, 501, 0).unwrap();
        }
    }
    k.run_thread(app).unwrap();
    k.handle_fault(FaultEvent {
        tid: app,
        vaddr: target,
        access: Access::Read,
    })
    .expect("fault handling succeeds")
}

/// Faults above the user range of the small profile.
pub fn kernel_range_case(scheme: Scheme, vaddr: u32) -> FaultVerdict {
    let mut k = Kernel::new(scheme, LayoutConfig::small()).expect("valid");
    k.add_space(Asid(1)).unwrap();
    k.spawn_applicant(Tid(1), Asid(1)).unwrap();
    k.run_thread(Tid(1)).unwrap();
    k.handle_fault(FaultEvent {
        tid: Tid(1),
        vaddr,
        access: Access::Write,
    })
    .expect("fault handling succeeds")
}

fn claim_classification(cx: &Ctx) -> Check {
    let layout = LayoutConfig::small();
    let mut cases = 0;
    for scheme in Scheme::ALL {
        let end = layout.user_end() as u32;
        for v in [end, end + 0x1000, 0x8000_0000, u32::MAX] {
            let got = kernel_range_case(scheme, v);
            if got.code() != "KERNEL_RANGE" {
                return Err(format!("{scheme} {v:#x}: {got}"));
            }
            cases += 1;
        }
        for rid in 0..layout.region_count {
            for cond in RegionCondition::ALL {
                let got = classify_case(scheme, rid, cond);
                if got.code() != cond.expected_verdict() {
                    return Err(format!("{scheme} region {rid} {cond:?}: {got}"));
                }
                cases += 1;
            }
        }
    }
    let runs = cx.expectations(cx.file("classification.scn"))?;
    Ok(format!(
        "{cases} cases; fixture expectations hold under {runs} schemes"
    ))
}

fn claim_concurrent_fault(cx: &Ctx) -> Check {
    let run = cx.run(
        Scheme::ProposedRegionDispatch,
        cx.file("concurrent_fault.scn"),
    )?;
    let a = run.cycle(0).map_err(|e| e.to_string())?;
    let b = run.cycle(1).map_err(|e| e.to_string())?;
    if a != CycleMetrics::new(4, 2, 2, 1) {
        return Err(format!("A: {a}"));
    }
    if b != CycleMetrics::new(2, 0, 0, 0) {
        return Err(format!("B: {b}"));
    }
    let sends = cycle_sends(&run.trace, 1);
    if !sends.is_empty() {
        return Err(format!("B segment has {} send(s)", sends.len()));
    }
    let verdicts: Vec<_> = run
        .faults
        .iter()
        .map(|f| f.verdict.map(|v| v.code()))
        .collect();
    if verdicts != [Some("DISPATCHED"), Some("RESUMED_PRESENT")] {
        return Err(format!("verdicts {verdicts:?}"));
    }
    Ok(format!("A {{{a}}}, B {{{b}}}"))
}

/// Transitions a region's contract may take in one step.
pub fn contract_step_allowed(from: ContractState, to: ContractState) -> bool {
    use ContractState::*;
    from == to
        || matches!(
            (from, to),
            (Unassigned | Assigned | Accepted | Revoked, Assigned)
                | (Assigned, Accepted)
                | (Accepted, Revoked)
        )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractOp {
    Assign { rid: u32, pager: usize },
    Map { rid: u32, page: u32 },
    Unmap { rid: u32, page: u32, revoke: bool },
    Fault { rid: u32, page: u32 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContractReport {
    pub illegal: Vec<String>,
    pub faults_after_revoke: u32,
    pub gp_after_revoke: u32,
}

/// Replays `ops` on the small profile and checks every contract change.
pub fn replay_contract_ops(ops: &[ContractOp]) -> ContractReport {
    let layout = LayoutConfig::small();
    let mut k = Kernel::new(Scheme::ProposedRegionDispatch, layout).expect("valid");
    let (space, pager_space) = (Asid(1), Asid(2));
    let pagers = [Tid(10), Tid(11)];
    k.add_space(space).unwrap();
    k.add_space(pager_space).unwrap();
    for p in pagers {
        k.add_pager(p, pager_space, PagerBehavior::zero_fill())
            .unwrap();
    }
    let mut next_tid = 100;
    let mut frame = 500_000;
    let mut rep = ContractReport::default();
    for op in ops {
        let rid = match *op {
            ContractOp::Assign { rid, .. }
            | ContractOp::Map { rid, .. }
            | ContractOp::Unmap { rid, .. }
            | ContractOp::Fault { rid, .. } => rid,
        };
        let before = k.lookup_manager(space, rid).unwrap();
        let addr = |page: u32| (layout.region_pages(rid).start + page) << PAGE_SHIFT;
        match *op {
            ContractOp::Assign { pager, .. } => {
                k.assign_manager(space, rid, pagers[pager]).unwrap()
            }
            ContractOp::Map { page, .. } => {
                if let Some(m) = before.manager {
                    frame += 1;
                    // refused on a revoked region; that is part of the contract
                    let _ = k.pager_map(m, space, addr(page), frame, 0);
                }
            }
            ContractOp::Unmap { page, revoke, .. } => {
                if let Some(m) = before.manager {
                    let _ = k.pager_unmap(m, space, addr(page), revoke);
                }
            }
            ContractOp::Fault { page, .. } => {
                let tid = Tid(next_tid);
                next_tid += 1;
                k.spawn_applicant(tid, space).unwrap();
                k.run_thread(tid).unwrap();
                let v = k
                    .handle_fault(FaultEvent {
                        tid,
                        vaddr: addr(page),
                        access: Access::Read,
                    })
                    .expect("fault handling succeeds");
                if before.contract == ContractState::Revoked {
                    rep.faults_after_revoke += 1;
                    if v.is_general_protection() {
                        rep.gp_after_revoke += 1;
                    }
                }
            }
        }
        let after = k.lookup_manager(space, rid).unwrap();
        if !contract_step_allowed(before.contract, after.contract) {
            rep.illegal.push(format!(
                "{op:?}: {:?} -> {:?}",
                before.contract, after.contract
            ));
        }
    }
    rep
}

/// Random operation sequence biased towards maps and revoking unmaps.
pub fn random_contract_ops(rng: &mut impl Rng, len: usize) -> Vec<ContractOp> {
    let layout = LayoutConfig::small();
    (0..len)
        .map(|_| {
            let rid = rng.gen_range(0..2);
            let page = rng.gen_range(0..layout.pages_per_region);
            match rng.gen_range(0..10) {
                0 => ContractOp::Assign {
                    rid,
                    pager: rng.gen_range(0..2),
                },
                1..=3 => ContractOp::Map { rid, page },
                4..=6 => ContractOp::Unmap {
                    rid,
                    page,
                    revoke: rng.gen_bool(0.6),
                },
                _ => ContractOp::Fault { rid, page },
            }
        })
        .collect()
}

fn claim_contract(cx: &Ctx) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut total = ContractReport::default();
    for _ in 0..CONTRACT_SEQUENCES {
        let mut ops = vec![
            ContractOp::Assign { rid: 0, pager: 0 },
            ContractOp::Assign { rid: 1, pager: 1 },
        ];
        ops.extend(random_contract_ops(&mut rng, 40));
        let r = replay_contract_ops(&ops);
        total.illegal.extend(r.illegal);
        total.faults_after_revoke += r.faults_after_revoke;
        total.gp_after_revoke += r.gp_after_revoke;
    }
    if let Some(first) = total.illegal.first() {
        return Err(format!(
            "{} illegal transitions, first: {first}",
            total.illegal.len()
        ));
    }
    if total.faults_after_revoke == 0 {
        return Err("no fault hit a revoked region".into());
    }
    if total.gp_after_revoke != total.faults_after_revoke {
        return Err(format!(
            "{} of {} faults after revoke were GP",
            total.gp_after_revoke, total.faults_after_revoke
        ));
    }
    let runs = cx.expectations(cx.file("revoke.scn"))?;
    Ok(format!(
        "0 illegal transitions; {}/{} faults after revoke GP; fixture holds under {runs} schemes",
        total.gp_after_revoke, total.faults_after_revoke
    ))
}

fn claim_footprint(_: &Ctx) -> Check {
    let layout = LayoutConfig::default();
    let space = crate::address_space::AddressSpace::new(Asid(1), &layout);
    let n = space.regions.manager_ids_bytes().len();
    if n != 4080 || n > 4096 {
        return Err(format!("{n} bytes"));
    }
    Ok(format!("{n} bytes <= 4096"))
}

fn claim_equivalence(cx: &Ctx) -> Check {
    let t0 = Instant::now();
    let f = resolved_workload(&WorkloadConfig::new(WORKLOAD_SEED, WORKLOAD_FAULTS));
    let runs: Vec<Run> = Scheme::ALL
        .into_iter()
        .map(|s| cx.run(s, &f))
        .collect::<Result<_, _>>()?;
    let tables = runs[0].page_tables();
    for r in &runs {
        let unresolved = r.faults.iter().filter(|f| !f.resolved).count();
        if r.faults.len() != WORKLOAD_FAULTS || unresolved > 0 {
            return Err(format!(
                "{}: {} faults, {unresolved} unresolved",
                r.scheme,
                r.faults.len()
            ));
        }
        if r.page_tables() != tables {
            return Err(format!(
                "{}: page tables differ from {}",
                r.scheme, runs[0].scheme
            ));
        }
    }
    let by: BTreeMap<Scheme, &Run> = runs.iter().map(|r| (r.scheme, r)).collect();
    for i in 0..WORKLOAD_FAULTS as u32 {
        let m = |s: Scheme| by[&s].cycle(i).map_err(|e| format!("{s}: {e}"));
        let (re, p, mono) = (
            m(Scheme::L4PlusL4Re)?,
            m(Scheme::ProposedRegionDispatch)?,
            m(Scheme::Monolithic)?,
        );
        if !re.dominates(&p) || !p.at_least(&mono) {
            return Err(format!(
                "cycle {i}: l4re {{{re}}}, proposed {{{p}}}, monolithic {{{mono}}}"
            ));
        }
    }
    let elapsed = t0.elapsed();
    if elapsed >= WORKLOAD_BUDGET {
        return Err(format!("took {elapsed:?}"));
    }
    let pages: usize = tables.values().map(Vec::len).sum();
    Ok(format!(
        "{pages} pages identical across 4 schemes; ordering holds on {WORKLOAD_FAULTS} cycles"
    ))
}

/// Every `.scn` file in `dir`, sorted by name.
pub fn fixture_files(dir: &Path) -> Result<Vec<PathBuf>, ClaimError> {
    let rd = std::fs::read_dir(dir).map_err(|source| ClaimError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out: Vec<PathBuf> = rd
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "scn"))
        .collect();
    out.sort();
    Ok(out)
}

fn claim_determinism(cx: &Ctx) -> Check {
    let files = fixture_files(&cx.dir).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for path in &files {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let f = parse_scenario(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        for scheme in f.supported_schemes() {
            let a = cx.run(scheme, &f)?.trace.to_text();
            let b = cx.run(scheme, &f)?.trace.to_text();
            if a != b {
                return Err(format!("{} under {scheme}: traces differ", path.display()));
            }
            compared += 1;
        }
    }
    Ok(format!(
        "{compared} trace pairs identical over {} fixtures",
        files.len()
    ))
}

/// Loads a fixture, mapping absence to [`ClaimError::MissingFixture`].
pub fn load_fixture(dir: &Path, name: &str) -> Result<ScenarioFile, ClaimError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(ClaimError::MissingFixture(path));
    }
    let text = std::fs::read_to_string(&path).map_err(|source| ClaimError::Io {
        path: path.clone(),
        source,
    })?;
    parse_scenario(&text).map_err(|source| ClaimError::Scenario { path, source })
}

/// Checks every claim against the fixtures in `dir`.
pub fn reproduce_all(dir: &Path, opts: &ReproduceOptions) -> Result<Vec<ClaimOutcome>, ClaimError> {
    let mut files = BTreeMap::new();
    for name in FIXTURES {
        files.insert(name, load_fixture(dir, name)?);
    }
    let cx = Ctx {
        dir: dir.to_path_buf(),
        opts: RunOptions {
            seed: None,
            accounting: opts.accounting,
        },
        files,
    };
    let checks: [fn(&Ctx) -> Check; 9] = [
        claim_switch_counts,
        claim_reduction,
        claim_region_id,
        claim_classification,
        claim_concurrent_fault,
        claim_contract,
        claim_footprint,
        claim_equivalence,
        claim_determinism,
    ];
    Ok(CLAIMS
        .iter()
        .zip(checks)
        .map(|(c, check)| {
            let (passed, detail) = match check(&cx) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            ClaimOutcome {
                id: c.id,
                name: c.name,
                passed,
                detail,
            }
        })
        .collect())
}

pub fn summary_table(outcomes: &[ClaimOutcome]) -> String {
    let mut s = String::new();
    for o in outcomes {
        writeln!(
            s,
            "[{}] {:>2} {:<16} {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.detail
        )
        .unwrap();
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    writeln!(s, "{passed}/{} claims reproduced", outcomes.len()).unwrap();
    s
}
