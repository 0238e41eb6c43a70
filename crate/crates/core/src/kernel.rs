//! Kernel state shared by every handling scheme: threads, address spaces,
//! pagers and the fault log. The fault path itself lives in
//! [`crate::fault_dispatch`]; MMU operations in [`crate::mmu`].

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::address_space::{AddressSpace, LayoutConfig, LayoutError, RegionSlot};
use crate::fault_dispatch::FaultRecord;
use crate::mmu::MmuError;
use crate::pagers::{
    FrameAllocator, MappingDatabase, PagerBehavior, PagerError, PagerPolicy, PagerState,
};
use crate::schemes::Scheme;
use crate::sim::{
    CpuMode, Engine, FaultPayload, SimError, ThreadRole, ThreadState, Trace, TrapCause,
};
use crate::types::{Asid, Tid};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Mmu(#[from] MmuError),
    #[error(transparent)]
    Pager(#[from] PagerError),
    #[error("address space {0} already exists")]
    DuplicateSpace(Asid),
    #[error("thread {0} is not a pager")]
    NotAPager(Tid),
    #[error("thread {0} does not hold the cpu")]
    NotRunning(Tid),
    #[error("no outstanding fault for thread {0}")]
    NoOutstandingFault(Tid),
    #[error("fault of thread {faulter} was dispatched to {expected}, not {got}")]
    WrongPager {
        faulter: Tid,
        expected: Tid,
        got: Tid,
    },
    #[error("thread {0} has no fault waiting for dispatch")]
    NotParked(Tid),
    #[error("thread {0} already has a fault in progress")]
    FaultInProgress(Tid),
    #[error("thread {pager} does not manage region {rid}")]
    NotManager { pager: Tid, rid: u32 },
    #[error("region {0} was revoked by its manager")]
    RegionRevoked(u32),
    #[error("no region mapper for address space {0}")]
    NoRegionMapper(Asid),
    #[error("no pager for thread {0}")]
    NoThreadPager(Tid),
    #[error("pager {0} has no pending message")]
    NothingPending(Tid),
}

/// Mode-switch accounting. Anything but `Standard` is a deliberate defect
/// used to check that the reproduction harness notices broken counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum AccountingRule {
    #[default]
    Standard,
    /// Drop the kernel-to-user switch that ends a fault cycle.
    OmitReturnModeSwitch,
}

/// A fault handed to a user-mode pager and not yet answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Outstanding {
    /// Thread whose reply the kernel waits for.
    pub pager: Tid,
    pub cycle: u32,
    pub asid: Asid,
    pub rid: u32,
    pub manager: Tid,
    pub payload: FaultPayload,
}

#[derive(Debug, Clone)]
pub struct Kernel {
    pub(crate) engine: Engine,
    pub(crate) scheme: Scheme,
    pub(crate) layout: LayoutConfig,
    pub(crate) spaces: BTreeMap<Asid, AddressSpace>,
    pub(crate) pagers: BTreeMap<Tid, PagerState>,
    pub(crate) frames: FrameAllocator,
    pub(crate) thread_pagers: BTreeMap<Tid, Tid>,
    pub(crate) region_mappers: BTreeMap<Asid, Tid>,
    /// Spaces whose region-mapper database follows the region table.
    pub(crate) auto_db: BTreeSet<Asid>,
    pub(crate) outstanding: BTreeMap<Tid, Outstanding>,
    /// Faulters trapped into the kernel whose dispatch step has not run.
    pub(crate) parked: BTreeMap<Tid, u32>,
    pub(crate) faults: Vec<FaultRecord>,
    /// Resolved faults per (behavior owner, space, region).
    pub(crate) resolved: BTreeMap<(Tid, Asid, u32), u32>,
    pub(crate) warnings: Vec<String>,
    pub(crate) accounting: AccountingRule,
}

impl Kernel {
    pub fn new(scheme: Scheme, layout: LayoutConfig) -> Result<Self, KernelError> {
        layout.validate()?;
        Ok(Self {
            engine: Engine::new(),
            scheme,
            layout,
            spaces: BTreeMap::new(),
            pagers: BTreeMap::new(),
            frames: FrameAllocator::default(),
            thread_pagers: BTreeMap::new(),
            region_mappers: BTreeMap::new(),
            auto_db: BTreeSet::new(),
            outstanding: BTreeMap::new(),
            parked: BTreeMap::new(),
            faults: Vec::new(),
            resolved: BTreeMap::new(),
            warnings: Vec::new(),
            accounting: AccountingRule::Standard,
        })
    }

    pub fn set_accounting(&mut self, rule: AccountingRule) {
        self.accounting = rule;
    }

    pub fn set_frame_allocator(&mut self, frames: FrameAllocator) {
        self.frames = frames;
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn layout(&self) -> &LayoutConfig {
        &self.layout
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn trace(&self) -> &Trace {
        self.engine.trace()
    }

    pub fn faults(&self) -> &[FaultRecord] {
        &self.faults
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn spaces(&self) -> impl Iterator<Item = &AddressSpace> {
        self.spaces.values()
    }

    pub fn space(&self, asid: Asid) -> Result<&AddressSpace, KernelError> {
        self.spaces
            .get(&asid)
            .ok_or(KernelError::Mmu(MmuError::UnknownSpace(asid)))
    }

    pub(crate) fn space_mut(&mut self, asid: Asid) -> Result<&mut AddressSpace, KernelError> {
        self.spaces
            .get_mut(&asid)
            .ok_or(KernelError::Mmu(MmuError::UnknownSpace(asid)))
    }

    pub fn pager(&self, tid: Tid) -> Option<&PagerState> {
        self.pagers.get(&tid)
    }

    pub(crate) fn pager_mut(&mut self, tid: Tid) -> Result<&mut PagerState, KernelError> {
        self.pagers.get_mut(&tid).ok_or(KernelError::NotAPager(tid))
    }

    pub fn add_space(&mut self, asid: Asid) -> Result<(), KernelError> {
        if self.spaces.contains_key(&asid) {
            return Err(KernelError::DuplicateSpace(asid));
        }
        self.spaces
            .insert(asid, AddressSpace::new(asid, &self.layout));
        Ok(())
    }

    pub fn spawn_applicant(&mut self, tid: Tid, asid: Asid) -> Result<(), KernelError> {
        self.space(asid)?;
        self.engine
            .spawn(tid, asid, ThreadRole::Applicant, ThreadState::Ready)?;
        Ok(())
    }

    pub fn add_pager(
        &mut self,
        tid: Tid,
        asid: Asid,
        behavior: PagerBehavior,
    ) -> Result<(), KernelError> {
        self.space(asid)?;
        if let PagerPolicy::FixedBacking(backing) = &behavior.policy {
            for &frame in backing.values() {
                self.frames.reserve(frame);
            }
        }
        self.engine
            .spawn(tid, asid, ThreadRole::Pager, ThreadState::BlockedOnReceive)?;
        self.pagers.insert(tid, PagerState::new(behavior));
        Ok(())
    }

    /// Registers `tid` as the region mapper of `asid`. With `db = None` the
    /// mapper's database mirrors the region table.
    pub fn add_region_mapper(
        &mut self,
        tid: Tid,
        asid: Asid,
        db: Option<MappingDatabase>,
    ) -> Result<(), KernelError> {
        self.space(asid)?;
        self.engine.spawn(
            tid,
            asid,
            ThreadRole::RegionMapper,
            ThreadState::BlockedOnReceive,
        )?;
        let auto = db.is_none();
        self.pagers.insert(
            tid,
            PagerState::new(PagerBehavior::new(PagerPolicy::Reflecting(
                db.unwrap_or_default(),
            ))),
        );
        self.region_mappers.insert(asid, tid);
        if auto {
            self.auto_db.insert(asid);
            self.rebuild_mapper_db(asid)?;
        }
        Ok(())
    }

    /// Classic per-thread pager, used by the single-pager scheme.
    pub fn set_thread_pager(&mut self, tid: Tid, pager: Tid) -> Result<(), KernelError> {
        self.engine.state(tid)?;
        if !self.pagers.contains_key(&pager) {
            return Err(KernelError::NotAPager(pager));
        }
        self.thread_pagers.insert(tid, pager);
        Ok(())
    }

    /// Marks `pager` as unwilling to service region `rid` of `asid`.
    pub fn refuse(&mut self, asid: Asid, rid: u32, pager: Tid) -> Result<(), KernelError> {
        self.space(asid)?.regions.slot(rid)?;
        self.space_mut(asid)?.refusals.insert((rid, pager));
        Ok(())
    }

    /// Parks the next message `pager` receives until [`Kernel::step_pager`].
    pub fn hold_pager(&mut self, pager: Tid) -> Result<(), KernelError> {
        self.pager_mut(pager)?.hold = true;
        Ok(())
    }

    fn rebuild_mapper_db(&mut self, asid: Asid) -> Result<(), KernelError> {
        let Some(&rm) = self.region_mappers.get(&asid) else {
            return Ok(());
        };
        let mut db = MappingDatabase::new();
        for (rid, slot) in self.space(asid)?.regions.iter() {
            if let RegionSlot {
                manager: Some(m), ..
            } = slot
            {
                let b = self.layout.region_bounds(rid);
                db.insert(b.start, b.end, m)?;
            }
        }
        self.pager_mut(rm)?.behavior.policy = PagerPolicy::Reflecting(db);
        Ok(())
    }

    pub(crate) fn on_assignment(&mut self, asid: Asid, rid: u32) -> Result<(), KernelError> {
        self.resolved
            .retain(|&(_, a, r), _| !(a == asid && r == rid));
        if self.auto_db.contains(&asid) {
            self.rebuild_mapper_db(asid)?;
        }
        Ok(())
    }

    /// Gives the CPU to `tid` in user mode, billing the hand-off to the scheduler.
    pub fn run_thread(&mut self, tid: Tid) -> Result<(), KernelError> {
        self.engine.set_charge(crate::sim::Charge::Scheduler);
        if self.engine.current() == Some(tid) && self.engine.mode() == CpuMode::User {
            return Ok(());
        }
        if self.parked.contains_key(&tid) {
            return Err(KernelError::FaultInProgress(tid));
        }
        if self.engine.mode() == CpuMode::User {
            self.engine.enter_kernel(TrapCause::Yield)?;
        }
        self.engine.return_to_user(tid)?;
        Ok(())
    }

    /// Switches the kernel back into a parked faulter so its dispatch step can run.
    pub fn enter_parked(&mut self, tid: Tid) -> Result<(), KernelError> {
        self.engine.set_charge(crate::sim::Charge::Scheduler);
        if !self.parked.contains_key(&tid) {
            return Err(KernelError::NotParked(tid));
        }
        if self.engine.current() == Some(tid) && self.engine.mode() == CpuMode::Kernel {
            return Ok(());
        }
        if self.engine.mode() == CpuMode::User {
            self.engine.enter_kernel(TrapCause::Yield)?;
        }
        self.engine.switch_in_kernel(tid)?;
        Ok(())
    }

    /// Final page tables and region tables, for cross-scheme comparison.
    pub fn into_parts(self) -> KernelParts {
        KernelParts {
            threads: self.engine.threads().cloned().collect(),
            trace: self.engine.into_trace(),
            faults: self.faults,
            spaces: self.spaces,
            warnings: self.warnings,
        }
    }
}

pub struct KernelParts {
    pub trace: Trace,
    pub faults: Vec<FaultRecord>,
    pub spaces: BTreeMap<Asid, AddressSpace>,
    pub threads: Vec<crate::sim::ThreadControlBlock>,
    pub warnings: Vec<String>,
}
