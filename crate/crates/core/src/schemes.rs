//! The four fault-handling architectures, the scenario runner, per-cycle
//! metrics and the cross-scheme overhead report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_rational::Ratio;
use thiserror::Error;

use crate::address_space::AddressSpace;
use crate::fault_dispatch::FaultRecord;
use crate::kernel::{AccountingRule, Kernel, KernelError};
use crate::mmu::{MemoryAccess, Translation};
use crate::pagers::{FrameAllocator, MappingDatabase};
use crate::scenario::{DeclaredRole, ScenarioFile, Statement};
use crate::sim::{Charge, EventKind, MessageKind, SeededRoundRobin, ThreadControlBlock, Trace};
use crate::types::{Asid, Tid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    /// Paging logic inside the kernel.
    Monolithic,
    /// Classic L4: one pager per thread.
    L4SinglePager,
    /// L4 with a per-process region mapper that reflects faults.
    L4PlusL4Re,
    /// Kernel dispatches straight to the region's manager.
    ProposedRegionDispatch,
}

impl Scheme {
    /// Report order.
    pub const ALL: [Scheme; 4] = [
        Scheme::Monolithic,
        Scheme::L4SinglePager,
        Scheme::ProposedRegionDispatch,
        Scheme::L4PlusL4Re,
    ];

    /// Command-line and scenario spelling.
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Monolithic => "monolithic",
            Scheme::L4SinglePager => "l4-single",
            Scheme::L4PlusL4Re => "l4re",
            Scheme::ProposedRegionDispatch => "proposed",
        }
    }

    /// Row label in reports.
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Monolithic => "Monolithic",
            Scheme::L4SinglePager => "L4SinglePager",
            Scheme::L4PlusL4Re => "L4PlusL4Re",
            Scheme::ProposedRegionDispatch => "Proposed",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemeError {
    #[error("scheme {scheme}: {msg}")]
    SchemeMismatch { scheme: Scheme, msg: String },
    #[error("line {line}: {source}")]
    Kernel {
        line: usize,
        #[source]
        source: KernelError,
    },
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Reorder consecutive accesses with a seeded round-robin.
    pub seed: Option<u64>,
    pub accounting: AccountingRule,
}

/// Everything a scenario run leaves behind.
#[derive(Debug, Clone)]
pub struct Run {
    pub scheme: Scheme,
    pub trace: Trace,
    pub faults: Vec<FaultRecord>,
    pub spaces: BTreeMap<Asid, AddressSpace>,
    pub threads: Vec<ThreadControlBlock>,
    pub warnings: Vec<String>,
}

impl Run {
    pub fn cycle(&self, index: u32) -> Result<CycleMetrics, MetricsError> {
        cycle_metrics(&self.trace, index)
    }

    /// Metrics of every fault whose cycle completed, with its index.
    pub fn completed_cycles(&self) -> Vec<(u32, CycleMetrics)> {
        (0..self.faults.len() as u32)
            .filter_map(|i| self.cycle(i).ok().map(|m| (i, m)))
            .collect()
    }

    /// Present entries per space as (page number, frame, marker).
    pub fn page_tables(&self) -> BTreeMap<Asid, Vec<(u32, u32, u32)>> {
        self.spaces
            .iter()
            .map(|(&asid, s)| {
                let pages = s
                    .page_table
                    .entries()
                    .filter(|(_, e)| e.present)
                    .map(|(vpn, e)| (vpn, e.frame, e.marker.get()))
                    .collect();
                (asid, pages)
            })
            .collect()
    }
}

pub fn run_scenario(scheme: Scheme, scenario: &ScenarioFile) -> Result<Run, SchemeError> {
    run_scenario_with(scheme, scenario, &RunOptions::default())
}

struct Runner<'a> {
    scheme: Scheme,
    scenario: &'a ScenarioFile,
    kernel: Kernel,
    mappers: BTreeSet<Tid>,
}

impl Runner<'_> {
    fn mismatch(&self, msg: impl Into<String>) -> SchemeError {
        SchemeError::SchemeMismatch {
            scheme: self.scheme,
            msg: msg.into(),
        }
    }

    fn setup(&mut self) -> Result<(), SchemeError> {
        let scenario = self.scenario;
        let wrap = |i: usize| {
            move |source: KernelError| SchemeError::Kernel {
                line: scenario.line_of(i),
                source,
            }
        };
        let mut dbs: BTreeMap<Asid, MappingDatabase> = BTreeMap::new();
        let mut declared_mappers: BTreeMap<Asid, Tid> = BTreeMap::new();
        let mut applicants: Vec<(usize, Tid, Asid, Option<Tid>)> = Vec::new();
        let mut first_pager = None;
        let mut max_tid = 0;
        for (i, s) in scenario.statements.iter().enumerate() {
            match s {
                Statement::Space(asid) => self.kernel.add_space(*asid).map_err(wrap(i))?,
                Statement::Pager {
                    tid,
                    asid,
                    behavior,
                } => {
                    self.kernel
                        .add_pager(*tid, *asid, behavior.clone())
                        .map_err(wrap(i))?;
                    first_pager.get_or_insert(*tid);
                    max_tid = max_tid.max(tid.0);
                }
                Statement::Thread {
                    tid,
                    asid,
                    role,
                    pager,
                } => {
                    max_tid = max_tid.max(tid.0);
                    match role {
                        DeclaredRole::Applicant => {
                            self.kernel.spawn_applicant(*tid, *asid).map_err(wrap(i))?;
                            applicants.push((i, *tid, *asid, *pager));
                        }
                        DeclaredRole::RegionMapper => {
                            self.mappers.insert(*tid);
                            declared_mappers.insert(*asid, *tid);
                        }
                    }
                }
                Statement::DbRange {
                    asid,
                    start,
                    end,
                    pager,
                } => {
                    if self.scheme != Scheme::L4PlusL4Re {
                        return Err(self.mismatch(format!(
                            "line {}: mapping-database ranges need a region mapper",
                            scenario.line_of(i)
                        )));
                    }
                    dbs.entry(*asid)
                        .or_default()
                        .insert(*start, *end, *pager)
                        .map_err(|e| wrap(i)(e.into()))?;
                }
                _ => {}
            }
        }

        for (i, tid, _, pager) in &applicants {
            if self.scheme == Scheme::L4SinglePager {
                let p = pager.or(first_pager).ok_or_else(|| {
                    self.mismatch(format!("thread {tid} needs a pager but none is declared"))
                })?;
                self.kernel.set_thread_pager(*tid, p).map_err(wrap(*i))?;
            }
        }

        // region mappers: declared ones everywhere they exist, synthesized
        // ones for other spaces with applicants, ascending by space
        let mut next_tid = max_tid + 1;
        let mut spaces: BTreeSet<Asid> = applicants.iter().map(|a| a.2).collect();
        spaces.extend(declared_mappers.keys());
        for asid in spaces {
            let tid = match declared_mappers.get(&asid) {
                Some(&t) => t,
                None => {
                    if self.scheme != Scheme::L4PlusL4Re {
                        continue;
                    }
                    let t = Tid(next_tid);
                    next_tid += 1;
                    self.mappers.insert(t);
                    t
                }
            };
            let wrap_rm = |source| SchemeError::Kernel { line: 0, source };
            if self.scheme == Scheme::L4PlusL4Re {
                self.kernel
                    .add_region_mapper(tid, asid, dbs.remove(&asid))
                    .map_err(wrap_rm)?;
            } else {
                // idle: never runs outside its own scheme
                self.kernel.spawn_applicant(tid, asid).map_err(wrap_rm)?;
            }
        }
        Ok(())
    }

    fn access(
        &mut self,
        i: usize,
        tid: Tid,
        vaddr: u32,
        access: crate::types::Access,
        trap_only: bool,
    ) -> Result<(), SchemeError> {
        if self.mappers.contains(&tid) {
            return Err(self.mismatch(format!(
                "line {}: region mapper {tid} must never fault",
                self.scenario.line_of(i)
            )));
        }
        let line = self.scenario.line_of(i);
        let wrap = |source| SchemeError::Kernel { line, source };
        let k = &mut self.kernel;
        k.run_thread(tid).map_err(wrap)?;
        let asid = k
            .engine()
            .thread(tid)
            .map(|t| t.asid)
            .expect("declared thread exists");
        let t = k
            .translate(asid, MemoryAccess { tid, vaddr, access })
            .map_err(wrap)?;
        if let Translation::Fault(ev) = t {
            if trap_only {
                k.fault_trap(ev).map_err(wrap)?;
            } else {
                k.handle_fault(ev).map_err(wrap)?;
            }
        }
        Ok(())
    }

    fn exec(&mut self, i: usize, s: &Statement) -> Result<(), SchemeError> {
        let line = self.scenario.line_of(i);
        let wrap = |source| SchemeError::Kernel { line, source };
        let paged_by_thread = self.scheme != Scheme::Monolithic;
        match *s {
            Statement::Assign { asid, rid, pager } => {
                self.kernel.engine.set_charge(Charge::Scheduler);
                self.kernel.assign_manager(asid, rid, pager).map_err(wrap)
            }
            Statement::Refuse { asid, rid, pager } => {
                self.kernel.refuse(asid, rid, pager).map_err(wrap)
            }
            Statement::Access { tid, vaddr, access } => self.access(i, tid, vaddr, access, false),
            Statement::Trap { tid, vaddr, access } => self.access(i, tid, vaddr, access, true),
            Statement::Dispatch { tid } => {
                self.kernel.enter_parked(tid).map_err(wrap)?;
                self.kernel.fault_dispatch(tid).map_err(wrap)?;
                Ok(())
            }
            Statement::Hold { pager } => {
                if !paged_by_thread {
                    return Err(self.mismatch(format!("line {line}: no pager thread to hold")));
                }
                self.kernel.hold_pager(pager).map_err(wrap)
            }
            Statement::Step { pager } => {
                if !paged_by_thread {
                    return Err(self.mismatch(format!("line {line}: no pager thread to step")));
                }
                self.kernel.run_thread(pager).map_err(wrap)?;
                self.kernel.step_pager(pager).map_err(wrap)
            }
            Statement::Unmap {
                pager,
                asid,
                vaddr,
                revoke,
            } => {
                self.kernel.engine.set_charge(Charge::Scheduler);
                self.kernel
                    .pager_unmap(pager, asid, vaddr, revoke)
                    .map(|_| ())
                    .map_err(wrap)
            }
            _ => Ok(()),
        }
    }
}

/// Script order, with runs of consecutive accesses shuffled per thread when seeded.
fn script_order(scenario: &ScenarioFile, seed: Option<u64>) -> Vec<usize> {
    let script: Vec<usize> = (0..scenario.statements.len())
        .filter(|&i| !scenario.statements[i].is_declaration())
        .collect();
    let Some(seed) = seed else {
        return script;
    };
    let mut rr = SeededRoundRobin::new(seed);
    let mut out = Vec::with_capacity(script.len());
    let mut block: BTreeMap<Tid, std::collections::VecDeque<usize>> = BTreeMap::new();
    let mut flush = |block: &mut BTreeMap<Tid, std::collections::VecDeque<usize>>,
                     out: &mut Vec<usize>| {
        while !block.is_empty() {
            let candidates: Vec<Tid> = block.keys().copied().collect();
            let t = rr.pick(&candidates);
            let q = block.get_mut(&t).expect("picked from keys");
            out.push(q.pop_front().expect("queues are non-empty"));
            if q.is_empty() {
                block.remove(&t);
            }
        }
    };
    for i in script {
        match scenario.statements[i] {
            Statement::Access { tid, .. } => block.entry(tid).or_default().push_back(i),
            _ => {
                flush(&mut block, &mut out);
                out.push(i);
            }
        }
    }
    flush(&mut block, &mut out);
    out
}

pub fn run_scenario_with(
    scheme: Scheme,
    scenario: &ScenarioFile,
    options: &RunOptions,
) -> Result<Run, SchemeError> {
    if !scenario.supported_schemes().contains(&scheme) {
        return Err(SchemeError::SchemeMismatch {
            scheme,
            msg: "scenario does not list this scheme".into(),
        });
    }
    let mut kernel = Kernel::new(scheme, scenario.layout())
        .map_err(|source| SchemeError::Kernel { line: 0, source })?;
    kernel.set_accounting(options.accounting);
    if let Some(n) = scenario.frames() {
        kernel.set_frame_allocator(FrameAllocator::new(n));
    }
    let mut r = Runner {
        scheme,
        scenario,
        kernel,
        mappers: BTreeSet::new(),
    };
    r.setup()?;
    for i in script_order(scenario, options.seed) {
        r.exec(i, &scenario.statements[i])?;
    }
    let parts = r.kernel.into_parts();
    Ok(Run {
        scheme,
        trace: parts.trace,
        faults: parts.faults,
        spaces: parts.spaces,
        threads: parts.threads,
        warnings: parts.warnings,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CycleMetrics {
    pub mode_switches: u32,
    pub context_switches: u32,
    pub ipc_messages: u32,
    pub pager_invocations: u32,
}

impl CycleMetrics {
    pub fn new(mode: u32, ctx: u32, ipc: u32, pagers: u32) -> Self {
        Self {
            mode_switches: mode,
            context_switches: ctx,
            ipc_messages: ipc,
            pager_invocations: pagers,
        }
    }

    fn as_array(&self) -> [u32; 4] {
        [
            self.mode_switches,
            self.context_switches,
            self.ipc_messages,
            self.pager_invocations,
        ]
    }

    /// Strictly greater in every component.
    pub fn dominates(&self, other: &CycleMetrics) -> bool {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .all(|(a, b)| *a > b)
    }

    /// Greater or equal in every component.
    pub fn at_least(&self, other: &CycleMetrics) -> bool {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .all(|(a, b)| *a >= b)
    }
}

impl std::ops::AddAssign for CycleMetrics {
    fn add_assign(&mut self, o: Self) {
        self.mode_switches += o.mode_switches;
        self.context_switches += o.context_switches;
        self.ipc_messages += o.ipc_messages;
        self.pager_invocations += o.pager_invocations;
    }
}

impl fmt::Display for CycleMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mode={} ctx={} ipc={} pagers={}",
            self.mode_switches, self.context_switches, self.ipc_messages, self.pager_invocations
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("trace has no fault with index {0}")]
    NoSuchFault(u32),
    #[error("faulting thread of fault {0} never resumed")]
    IncompleteCycle(u32),
}

/// Counts the events billed to fault `index`, from its trap up to the
/// faulting thread getting the CPU back in user mode.
pub fn cycle_metrics(trace: &Trace, index: u32) -> Result<CycleMetrics, MetricsError> {
    let events = trace.events();
    let (start, faulter) = events
        .iter()
        .enumerate()
        .filter_map(|(i, e)| match e.kind {
            EventKind::ModeSwitchUserToKernel {
                tid,
                cause: crate::sim::TrapCause::Fault,
            } => Some((i, tid)),
            _ => None,
        })
        .nth(index as usize)
        .ok_or(MetricsError::NoSuchFault(index))?;
    let tag = Charge::Cycle(index);
    let mut end = None;
    for (i, e) in events.iter().enumerate().skip(start + 1) {
        if e.charge != tag {
            continue;
        }
        match e.kind {
            EventKind::ModeSwitchKernelToUser { tid } if tid == faulter => {
                let next_is_switch_in = events.get(i + 1).is_some_and(|n| {
                    n.charge == tag
                        && matches!(n.kind, EventKind::ContextSwitch { to, .. } if to == faulter)
                });
                end = Some(if next_is_switch_in { i + 1 } else { i });
                break;
            }
            EventKind::ContextSwitch { to, .. } if to == faulter => {
                end = Some(i);
                break;
            }
            _ => {}
        }
    }
    let end = end.ok_or(MetricsError::IncompleteCycle(index))?;
    let mut m = CycleMetrics::default();
    for e in events[start..=end].iter().filter(|e| e.charge == tag) {
        match e.kind {
            ref k if k.is_mode_switch() => m.mode_switches += 1,
            EventKind::ContextSwitch { .. } => m.context_switches += 1,
            EventKind::IpcSend(_) => m.ipc_messages += 1,
            EventKind::IpcReceive { .. } => m.pager_invocations += 1,
            _ => {}
        }
    }
    Ok(m)
}

/// Events billed to fault `index` that are message sends.
pub fn cycle_sends(trace: &Trace, index: u32) -> Vec<MessageKind> {
    trace
        .events()
        .iter()
        .filter(|e| e.charge == Charge::Cycle(index))
        .filter_map(|e| match &e.kind {
            EventKind::IpcSend(m) => Some(m.kind),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportRow {
    pub scheme: Scheme,
    pub faults: u32,
    pub completed: u32,
    pub totals: CycleMetrics,
}

/// Relative saving of `candidate` over `baseline`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reduction {
    pub baseline: Scheme,
    pub candidate: Scheme,
    /// `None` when the baseline count is zero.
    pub mode_switches: Option<Ratio<i64>>,
    pub context_switches: Option<Ratio<i64>>,
}

pub fn reduction(baseline: u32, candidate: u32) -> Option<Ratio<i64>> {
    (baseline != 0).then(|| {
        Ratio::new(
            i64::from(baseline) - i64::from(candidate),
            i64::from(baseline),
        )
    })
}

/// `33.3%`: one decimal, rounded half away from zero.
pub fn format_percent(r: &Ratio<i64>) -> String {
    let scaled = Ratio::new(*r.numer() * 1000, *r.denom())
        .round()
        .to_integer();
    let sign = if scaled < 0 { "-" } else { "" };
    let a = scaled.abs();
    format!("{sign}{}.{}%", a / 10, a % 10)
}

fn format_ratio(r: &Option<Ratio<i64>>) -> String {
    match r {
        Some(r) => format!("{} ({})", format_percent(r), r),
        None => "n/a".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    KeyValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverheadReport {
    pub rows: Vec<ReportRow>,
}

impl OverheadReport {
    pub fn from_runs(runs: &[Run]) -> Self {
        let mut runs: Vec<&Run> = runs.iter().collect();
        runs.sort_by_key(|r| Scheme::ALL.iter().position(|s| *s == r.scheme));
        let rows = runs
            .into_iter()
            .map(|r| {
                let cycles = r.completed_cycles();
                let mut totals = CycleMetrics::default();
                for (_, m) in &cycles {
                    totals += *m;
                }
                ReportRow {
                    scheme: r.scheme,
                    faults: r.faults.len() as u32,
                    completed: cycles.len() as u32,
                    totals,
                }
            })
            .collect();
        Self { rows }
    }

    pub fn row(&self, scheme: Scheme) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.scheme == scheme)
    }

    /// Every later row as baseline against every earlier row as candidate.
    pub fn reductions(&self) -> Vec<Reduction> {
        let mut out = Vec::new();
        for (j, base) in self.rows.iter().enumerate().rev() {
            for cand in self.rows[..j].iter().rev() {
                out.push(Reduction {
                    baseline: base.scheme,
                    candidate: cand.scheme,
                    mode_switches: reduction(base.totals.mode_switches, cand.totals.mode_switches),
                    context_switches: reduction(
                        base.totals.context_switches,
                        cand.totals.context_switches,
                    ),
                });
            }
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Table => self.to_table(),
            ReportFormat::KeyValue => self.to_kv(),
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{:<14} {:>6} {:>9} {:>5} {:>4} {:>4} {:>7}",
            "scheme", "faults", "completed", "mode", "ctx", "ipc", "pagers"
        )
        .unwrap();
        for r in &self.rows {
            writeln!(
                s,
                "{:<14} {:>6} {:>9} {:>5} {:>4} {:>4} {:>7}",
                r.scheme.label(),
                r.faults,
                r.completed,
                r.totals.mode_switches,
                r.totals.context_switches,
                r.totals.ipc_messages,
                r.totals.pager_invocations
            )
            .unwrap();
        }
        let reds = self.reductions();
        if !reds.is_empty() {
            writeln!(s).unwrap();
            writeln!(s, "{:<30} {:<14} ctx", "reduction", "mode").unwrap();
            for r in reds {
                writeln!(
                    s,
                    "{:<30} {:<14} {}",
                    format!("{} -> {}", r.baseline.label(), r.candidate.label()),
                    format_ratio(&r.mode_switches),
                    format_ratio(&r.context_switches)
                )
                .unwrap();
            }
        }
        s
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let n = r.scheme.name();
            for (k, v) in [
                ("faults", r.faults),
                ("completed", r.completed),
                ("mode_switches", r.totals.mode_switches),
                ("context_switches", r.totals.context_switches),
                ("ipc_messages", r.totals.ipc_messages),
                ("pager_invocations", r.totals.pager_invocations),
            ] {
                writeln!(s, "scheme.{n}.{k}={v}").unwrap();
            }
        }
        for r in self.reductions() {
            let prefix = format!("reduction.{}.{}", r.baseline.name(), r.candidate.name());
            for (k, v) in [
                ("mode_switches", &r.mode_switches),
                ("context_switches", &r.context_switches),
            ] {
                match v {
                    Some(v) => {
                        writeln!(s, "{prefix}.{k}={v}").unwrap();
                        writeln!(
                            s,
                            "{prefix}.{k}_pct={}",
                            format_percent(v).trim_end_matches('%')
                        )
                        .unwrap();
                    }
                    None => writeln!(s, "{prefix}.{k}=n/a").unwrap(),
                }
            }
        }
        s
    }
}

/// Runs the scenario under every scheme it supports and tabulates the totals.
pub fn overhead_report(scenario: &ScenarioFile) -> Result<OverheadReport, SchemeError> {
    overhead_report_with(scenario, &RunOptions::default()).map(|(r, _)| r)
}

pub fn overhead_report_with(
    scenario: &ScenarioFile,
    options: &RunOptions,
) -> Result<(OverheadReport, Vec<Run>), SchemeError> {
    let runs = scenario
        .supported_schemes()
        .into_iter()
        .map(|s| run_scenario_with(s, scenario, options))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((OverheadReport::from_runs(&runs), runs))
}

/// Mismatch between an `expect` line and what a run produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectationFailure {
    pub line: usize,
    pub scheme: Scheme,
    pub msg: String,
}

impl fmt::Display for ExpectationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {} [{}]: {}", self.line, self.scheme, self.msg)
    }
}

pub fn check_expectations(scenario: &ScenarioFile, run: &Run) -> Vec<ExpectationFailure> {
    let mut out = Vec::new();
    for (i, s) in scenario.statements.iter().enumerate() {
        let Statement::Expect(e) = s else { continue };
        if e.scheme.is_some_and(|s| s != run.scheme) {
            continue;
        }
        let mut fail = |msg: String| {
            out.push(ExpectationFailure {
                line: scenario.line_of(i),
                scheme: run.scheme,
                msg,
            })
        };
        let Some(rec) = run.faults.get(e.fault as usize) else {
            fail(format!("fault {} never happened", e.fault));
            continue;
        };
        let got = rec.verdict.map_or("NONE", |v| v.code());
        if got != e.verdict {
            fail(format!(
                "fault {}: verdict {got}, expected {}",
                e.fault, e.verdict
            ));
        }
        if !e.has_metrics() {
            continue;
        }
        match run.cycle(e.fault) {
            Err(err) => fail(err.to_string()),
            Ok(m) => {
                for (name, want, have) in [
                    ("mode", e.mode_switches, m.mode_switches),
                    ("ctx", e.context_switches, m.context_switches),
                    ("ipc", e.ipc_messages, m.ipc_messages),
                    ("pagers", e.pager_invocations, m.pager_invocations),
                ] {
                    if let Some(w) = want {
                        if w != have {
                            fail(format!("fault {}: {name}={have}, expected {w}", e.fault));
                        }
                    }
                }
            }
        }
    }
    out
}
