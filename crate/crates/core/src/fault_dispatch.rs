//! Zero-level page-fault handling.
//!
//! A fault is screened in a fixed order: kernel-range addresses, regions
//! without a manager, regions whose manager has not accepted (or has revoked)
//! the contract. Survivors are pure page faults. Right before the pager would
//! be invoked the present flag is read again, since another thread of the same
//! space may have had the page restored in the meantime; in that case the
//! faulter simply returns to user mode.
//!
//! The trap and the dispatch step are separate entry points so a scenario can
//! interleave other work between them.

use std::fmt;

use crate::address_space::{region_id_of, AddressSpace, ContractState, LayoutConfig, RegionLookup};
use crate::kernel::{AccountingRule, Kernel, KernelError, Outstanding};
use crate::mmu::{FaultEvent, Marker, MmuError, UnmapOutcome};
use crate::pagers::{on_page_fault, FaultContext, PagerAction};
use crate::schemes::Scheme;
use crate::sim::{
    Charge, CpuMode, Delivery, EventKind, FaultPayload, Message, MessageKind, ThreadState,
    TrapCause,
};
use crate::types::{vpn_of, Access, Asid, Tid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GpReason {
    KernelRange,
    NoPagerAssigned,
    PagerNotAccepted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultVerdict {
    DispatchedToPager(Tid),
    ResumedWithoutPager,
    GeneralProtection(GpReason),
}

impl FaultVerdict {
    /// Stable reason code used in traces and scenario expectations.
    pub fn code(&self) -> &'static str {
        match self {
            FaultVerdict::DispatchedToPager(_) => "DISPATCHED",
            FaultVerdict::ResumedWithoutPager => "RESUMED_PRESENT",
            FaultVerdict::GeneralProtection(GpReason::KernelRange) => "KERNEL_RANGE",
            FaultVerdict::GeneralProtection(GpReason::NoPagerAssigned) => "NO_PAGER",
            FaultVerdict::GeneralProtection(GpReason::PagerNotAccepted) => "NOT_ACCEPTED",
        }
    }

    pub fn is_general_protection(&self) -> bool {
        matches!(self, FaultVerdict::GeneralProtection(_))
    }
}

impl fmt::Display for FaultVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Verdict codes accepted in scenario files.
pub const VERDICT_CODES: [&str; 5] = [
    "KERNEL_RANGE",
    "NO_PAGER",
    "NOT_ACCEPTED",
    "RESUMED_PRESENT",
    "DISPATCHED",
];

/// Outcome of the zero-level decision procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    GeneralProtection(GpReason),
    /// The page is already present; nobody needs to be invoked.
    Present,
    Dispatch {
        rid: u32,
        manager: Tid,
        marker: Marker,
    },
}

/// Kernel range, assignment, contract; in that order.
fn screen(layout: &LayoutConfig, space: &AddressSpace, vaddr: u32) -> Result<(u32, Tid), GpReason> {
    let rid = match region_id_of(layout, vaddr) {
        RegionLookup::Region(rid) => rid,
        RegionLookup::KernelRange => return Err(GpReason::KernelRange),
    };
    let slot = space
        .regions
        .slot(rid)
        .expect("region id derived from layout is in range");
    let manager = slot.manager.ok_or(GpReason::NoPagerAssigned)?;
    match slot.contract {
        ContractState::Revoked => Err(GpReason::PagerNotAccepted),
        ContractState::Assigned if space.refuses(rid, manager) => Err(GpReason::PagerNotAccepted),
        _ => Ok((rid, manager)),
    }
}

/// Pure classification of a fault at `vaddr` against one address space.
pub fn classify(layout: &LayoutConfig, space: &AddressSpace, vaddr: u32) -> Classification {
    match screen(layout, space, vaddr) {
        Err(reason) => Classification::GeneralProtection(reason),
        Ok((rid, manager)) => {
            let pte = space.page_table.entry(vaddr);
            if pte.present {
                Classification::Present
            } else {
                Classification::Dispatch {
                    rid,
                    manager,
                    marker: pte.marker,
                }
            }
        }
    }
}

/// One fault and what became of it. `index` doubles as the trace cycle id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultRecord {
    pub index: u32,
    pub tid: Tid,
    pub asid: Asid,
    pub vaddr: u32,
    pub access: Access,
    pub verdict: Option<FaultVerdict>,
    /// A mapping was installed and the faulter resumed, or it found the page present.
    pub resolved: bool,
}

impl Kernel {
    /// Full zero-level path: trap followed immediately by dispatch.
    pub fn handle_fault(&mut self, ev: FaultEvent) -> Result<FaultVerdict, KernelError> {
        match self.fault_trap(ev)? {
            Some(v) => Ok(v),
            None => self.fault_dispatch(ev.tid),
        }
    }

    /// First phase: enter the kernel and screen the address. Returns the
    /// verdict for general-protection faults; otherwise the faulter stays
    /// parked in the kernel until [`Kernel::fault_dispatch`].
    pub fn fault_trap(&mut self, ev: FaultEvent) -> Result<Option<FaultVerdict>, KernelError> {
        if self.parked.contains_key(&ev.tid) || self.outstanding.contains_key(&ev.tid) {
            return Err(KernelError::FaultInProgress(ev.tid));
        }
        if self.engine.current() != Some(ev.tid) || self.engine.mode() != CpuMode::User {
            return Err(KernelError::NotRunning(ev.tid));
        }
        let asid = self
            .engine
            .thread(ev.tid)
            .map(|t| t.asid)
            .ok_or(crate::sim::SimError::UnknownThread(ev.tid))?;
        self.space(asid)?;

        let index = self.faults.len() as u32;
        self.faults.push(FaultRecord {
            index,
            tid: ev.tid,
            asid,
            vaddr: ev.vaddr,
            access: ev.access,
            verdict: None,
            resolved: false,
        });
        self.engine.set_charge(Charge::Cycle(index));
        self.engine.enter_kernel(TrapCause::Fault)?;

        match screen(&self.layout, self.space(asid)?, ev.vaddr) {
            Err(reason) => {
                let v = FaultVerdict::GeneralProtection(reason);
                self.conclude(index, v);
                self.engine.terminate(ev.tid)?;
                Ok(Some(v))
            }
            Ok(_) => {
                self.parked.insert(ev.tid, index);
                Ok(None)
            }
        }
    }

    /// Second phase: re-read the region slot and the page-table entry, then
    /// resume, dispatch, or reject.
    pub fn fault_dispatch(&mut self, tid: Tid) -> Result<FaultVerdict, KernelError> {
        let index = *self.parked.get(&tid).ok_or(KernelError::NotParked(tid))?;
        if self.engine.current() != Some(tid) || self.engine.mode() != CpuMode::Kernel {
            return Err(KernelError::NotRunning(tid));
        }
        self.parked.remove(&tid);
        self.engine.set_charge(Charge::Cycle(index));
        let rec = self.faults[index as usize];

        match classify(&self.layout, self.space(rec.asid)?, rec.vaddr) {
            Classification::GeneralProtection(reason) => {
                let v = FaultVerdict::GeneralProtection(reason);
                self.conclude(index, v);
                self.engine.terminate(tid)?;
                Ok(v)
            }
            Classification::Present => {
                let v = FaultVerdict::ResumedWithoutPager;
                self.conclude(index, v);
                self.faults[index as usize].resolved = true;
                self.return_from_fault(tid)?;
                Ok(v)
            }
            Classification::Dispatch {
                rid,
                manager,
                marker,
            } => {
                let payload = FaultPayload {
                    vaddr: rec.vaddr,
                    access: rec.access,
                    faulter: tid,
                    marker,
                };
                self.dispatch(index, rec.asid, rid, manager, payload)
            }
        }
    }

    fn conclude(&mut self, index: u32, verdict: FaultVerdict) {
        let rec = &mut self.faults[index as usize];
        rec.verdict = Some(verdict);
        let ev = EventKind::Verdict {
            tid: rec.tid,
            vaddr: rec.vaddr,
            access: rec.access,
            verdict,
        };
        self.engine.append_trace(ev);
    }

    fn return_from_fault(&mut self, tid: Tid) -> Result<(), KernelError> {
        let emit = self.accounting == AccountingRule::Standard;
        self.engine.return_to_user_with(tid, emit)?;
        Ok(())
    }

    fn dispatch(
        &mut self,
        index: u32,
        asid: Asid,
        rid: u32,
        manager: Tid,
        payload: FaultPayload,
    ) -> Result<FaultVerdict, KernelError> {
        let faulter = payload.faulter;
        let target = match self.scheme {
            Scheme::Monolithic => {
                return self.resolve_in_kernel(index, asid, rid, manager, payload)
            }
            Scheme::ProposedRegionDispatch => manager,
            Scheme::L4SinglePager => *self
                .thread_pagers
                .get(&faulter)
                .ok_or(KernelError::NoThreadPager(faulter))?,
            Scheme::L4PlusL4Re => *self
                .region_mappers
                .get(&asid)
                .ok_or(KernelError::NoRegionMapper(asid))?,
        };
        let v = FaultVerdict::DispatchedToPager(target);
        self.conclude(index, v);
        self.engine.suspend(faulter)?;
        self.outstanding.insert(
            faulter,
            Outstanding {
                pager: target,
                cycle: index,
                asid,
                rid,
                manager,
                payload,
            },
        );
        let msg = Message {
            sender: faulter,
            receiver: target,
            kind: MessageKind::PageFault,
            payload,
        };
        self.deliver(msg)?;
        Ok(v)
    }

    /// Monolithic handling: the paging logic runs in kernel context of the faulter.
    fn resolve_in_kernel(
        &mut self,
        index: u32,
        asid: Asid,
        rid: u32,
        manager: Tid,
        payload: FaultPayload,
    ) -> Result<FaultVerdict, KernelError> {
        let v = FaultVerdict::DispatchedToPager(Tid::KERNEL);
        self.conclude(index, v);
        let msg = Message {
            sender: payload.faulter,
            receiver: Tid::KERNEL,
            kind: MessageKind::PageFault,
            payload,
        };
        let actions = self.decide(manager, asid, rid, &msg)?;
        if actions.contains(&PagerAction::Wait) {
            // module refused: the faulter never comes back
            self.engine.suspend(payload.faulter)?;
            return Ok(v);
        }
        self.apply_transfer(asid, rid, &actions)?;
        self.note_resolved(index, manager, asid, rid);
        self.return_from_fault(payload.faulter)?;
        Ok(v)
    }

    /// Runs the pager policy of `owner` for a fault in region `rid`.
    fn decide(
        &mut self,
        owner: Tid,
        asid: Asid,
        rid: u32,
        msg: &Message,
    ) -> Result<Vec<PagerAction>, KernelError> {
        let behavior = self
            .pagers
            .get(&owner)
            .ok_or(KernelError::NotAPager(owner))?
            .behavior
            .clone();
        let page_in_region = vpn_of(msg.payload.vaddr) - self.layout.region_pages(rid).start;
        let resolved_in_region = self.resolved.get(&(owner, asid, rid)).copied().unwrap_or(0);
        let actions = on_page_fault(
            &behavior,
            msg,
            FaultContext {
                page_in_region,
                resolved_in_region,
                frames: &mut self.frames,
            },
        )?;
        Ok(actions)
    }

    /// Map items and revocations carried by a reply, applied in order.
    fn apply_transfer(
        &mut self,
        asid: Asid,
        rid: u32,
        actions: &[PagerAction],
    ) -> Result<(), KernelError> {
        for a in actions {
            match *a {
                PagerAction::Map {
                    vaddr,
                    frame,
                    marker,
                } => self.manager_map(asid, vaddr, frame, marker)?,
                PagerAction::RevokeRegion => self.revoke_region(asid, rid)?,
                _ => {}
            }
        }
        Ok(())
    }

    fn note_resolved(&mut self, index: u32, owner: Tid, asid: Asid, rid: u32) {
        self.faults[index as usize].resolved = true;
        *self.resolved.entry((owner, asid, rid)).or_insert(0) += 1;
    }

    /// Maps on behalf of the region's manager; the first map accepts the contract.
    fn manager_map(
        &mut self,
        asid: Asid,
        vaddr: u32,
        frame: u32,
        marker: Marker,
    ) -> Result<(), KernelError> {
        self.map_page(asid, vaddr, frame, marker.get())?;
        if let RegionLookup::Region(rid) = region_id_of(&self.layout, vaddr) {
            let space = self.space_mut(asid)?;
            if space.regions.slot(rid)?.contract == ContractState::Assigned {
                space.regions.set_contract(rid, ContractState::Accepted);
            }
        }
        Ok(())
    }

    /// Unmaps every present page of the region; the last one carries the revoke flag.
    fn revoke_region(&mut self, asid: Asid, rid: u32) -> Result<(), KernelError> {
        let pages: Vec<u32> = self
            .space(asid)?
            .page_table
            .present_pages(self.layout.region_pages(rid))
            .collect();
        let n = pages.len();
        for (i, vpn) in pages.into_iter().enumerate() {
            self.unmap_page(asid, vpn << crate::types::PAGE_SHIFT, i + 1 == n)?;
        }
        Ok(())
    }

    /// Explicit map by a pager into a region it manages.
    pub fn pager_map(
        &mut self,
        pager: Tid,
        asid: Asid,
        vaddr: u32,
        frame: u32,
        marker: u32,
    ) -> Result<(), KernelError> {
        let rid = self.managed_region(pager, asid, vaddr)?;
        if self.lookup_manager(asid, rid)?.contract == ContractState::Revoked {
            return Err(KernelError::RegionRevoked(rid));
        }
        let marker = Marker::new(marker)?;
        self.manager_map(asid, vaddr, frame, marker)
    }

    /// Explicit unmap by a pager from a region it manages.
    pub fn pager_unmap(
        &mut self,
        pager: Tid,
        asid: Asid,
        vaddr: u32,
        revoke: bool,
    ) -> Result<UnmapOutcome, KernelError> {
        self.managed_region(pager, asid, vaddr)?;
        self.unmap_page(asid, vaddr, revoke)
    }

    fn managed_region(&self, pager: Tid, asid: Asid, vaddr: u32) -> Result<u32, KernelError> {
        let rid = match region_id_of(&self.layout, vaddr) {
            RegionLookup::Region(rid) => rid,
            RegionLookup::KernelRange => return Err(MmuError::KernelAddress(vaddr).into()),
        };
        if self.lookup_manager(asid, rid)?.manager != Some(pager) {
            return Err(KernelError::NotManager { pager, rid });
        }
        Ok(rid)
    }

    /// Sends a fault notification and lets the receiver act on it if it could take it.
    fn deliver(&mut self, msg: Message) -> Result<(), KernelError> {
        match self.engine.send_sync(msg)? {
            Delivery::Delivered => self.pager_received(msg.receiver, msg),
            Delivery::Queued => {
                self.pager_mut(msg.receiver)?.inbox.push_back(msg);
                Ok(())
            }
            Delivery::Replied => unreachable!("fault notifications are never replies"),
        }
    }

    fn pager_received(&mut self, pager: Tid, msg: Message) -> Result<(), KernelError> {
        let st = self.pager_mut(pager)?;
        if st.hold {
            st.hold = false;
            st.pending = Some(msg);
            return Ok(());
        }
        self.run_pager(pager, msg)
    }

    /// Acts on a held or queued message. The caller gives `pager` the CPU first.
    pub fn step_pager(&mut self, pager: Tid) -> Result<(), KernelError> {
        if self.engine.current() != Some(pager) || self.engine.mode() != CpuMode::User {
            return Err(KernelError::NotRunning(pager));
        }
        let st = self.pager_mut(pager)?;
        if let Some(msg) = st.pending.take() {
            return self.run_pager(pager, msg);
        }
        let msg = st
            .inbox
            .pop_front()
            .ok_or(KernelError::NothingPending(pager))?;
        let cycle = self.cycle_of(&msg)?;
        self.engine.set_charge(Charge::Cycle(cycle));
        self.engine.receive(pager, &msg);
        self.run_pager(pager, msg)
    }

    pub fn has_pending(&self, pager: Tid) -> bool {
        self.pagers
            .get(&pager)
            .is_some_and(|p| p.pending.is_some() || !p.inbox.is_empty())
    }

    fn cycle_of(&self, msg: &Message) -> Result<u32, KernelError> {
        self.outstanding
            .get(&msg.payload.faulter)
            .map(|o| o.cycle)
            .ok_or(KernelError::NoOutstandingFault(msg.payload.faulter))
    }

    fn run_pager(&mut self, pager: Tid, msg: Message) -> Result<(), KernelError> {
        let faulter = msg.payload.faulter;
        let out = *self
            .outstanding
            .get(&faulter)
            .ok_or(KernelError::NoOutstandingFault(faulter))?;
        self.engine.set_charge(Charge::Cycle(out.cycle));
        let owner = self.behavior_owner(pager, out.manager);
        let actions = self.decide(owner, out.asid, out.rid, &msg)?;

        if let Some(&PagerAction::Forward { target }) = actions
            .iter()
            .find(|a| matches!(a, PagerAction::Forward { .. }))
        {
            if let Some(o) = self.outstanding.get_mut(&faulter) {
                o.pager = target;
            }
            return self.deliver(msg.reflect(pager, target));
        }
        if actions.contains(&PagerAction::Wait) {
            // silent drop: back to the receive loop, faulter stays suspended
            self.engine.enter_kernel(TrapCause::Syscall)?;
            self.engine.wait_for_message(pager)?;
            return self.settle_pager(pager);
        }
        self.reply_with(pager, faulter, &actions)
    }

    /// Whose policy resolves the fault. A classic single pager multiplexes on
    /// behalf of the region's manager; everyone else uses its own.
    fn behavior_owner(&self, pager: Tid, manager: Tid) -> Tid {
        match self.scheme {
            Scheme::L4SinglePager if self.region_mappers.values().all(|&rm| rm != pager) => manager,
            _ => pager,
        }
    }

    /// A pager that goes back to receiving with mail waiting stays ready.
    fn settle_pager(&mut self, pager: Tid) -> Result<(), KernelError> {
        if !self.pager_mut(pager)?.inbox.is_empty()
            && self.engine.state(pager)? == ThreadState::BlockedOnReceive
        {
            self.engine.set_state(pager, ThreadState::Ready)?;
        }
        Ok(())
    }

    /// Pager answers the fault of `faulter`, resuming it.
    pub fn pager_reply(&mut self, pager: Tid, faulter: Tid) -> Result<(), KernelError> {
        self.reply_with(pager, faulter, &[])
    }

    fn reply_with(
        &mut self,
        pager: Tid,
        faulter: Tid,
        actions: &[PagerAction],
    ) -> Result<(), KernelError> {
        let out = *self
            .outstanding
            .get(&faulter)
            .ok_or(KernelError::NoOutstandingFault(faulter))?;
        if out.pager != pager {
            return Err(KernelError::WrongPager {
                faulter,
                expected: out.pager,
                got: pager,
            });
        }
        self.engine.set_charge(Charge::Cycle(out.cycle));
        self.engine.send_sync(Message {
            sender: pager,
            receiver: faulter,
            kind: MessageKind::Reply,
            payload: out.payload,
        })?;
        self.apply_transfer(out.asid, out.rid, actions)?;
        self.outstanding.remove(&faulter);
        self.engine.resume(faulter)?;
        if actions.iter().any(|a| matches!(a, PagerAction::Map { .. })) {
            let owner = self.behavior_owner(pager, out.manager);
            self.note_resolved(out.cycle, owner, out.asid, out.rid);
        }
        self.return_from_fault(faulter)?;
        self.settle_pager(pager)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::address_space::RegionSlot;
    use crate::mmu::{MemoryAccess, Translation};
    use crate::pagers::{PagerBehavior, PagerPolicy};

    const A: Tid = Tid(1);
    const B: Tid = Tid(2);
    const P: Tid = Tid(10);
    const SPACE: Asid = Asid(1);

    fn kernel(scheme: Scheme, behavior: PagerBehavior) -> Kernel {
        let mut k = Kernel::new(scheme, LayoutConfig::small()).unwrap();
        k.add_space(SPACE).unwrap();
        k.add_space(Asid(2)).unwrap();
        k.spawn_applicant(A, SPACE).unwrap();
        k.spawn_applicant(B, SPACE).unwrap();
        k.add_pager(P, Asid(2), behavior).unwrap();
        k
    }

    fn fault(k: &mut Kernel, tid: Tid, vaddr: u32) -> FaultVerdict {
        k.run_thread(tid).unwrap();
        let t = k
            .translate(
                SPACE,
                MemoryAccess {
                    tid,
                    vaddr,
                    access: Access::Read,
                },
            )
            .unwrap();
        match t {
            Translation::Fault(ev) => k.handle_fault(ev).unwrap(),
            Translation::Frame(f) => panic!("expected fault, got frame {f}"),
        }
    }

    fn verdict_codes(k: &Kernel) -> Vec<&'static str> {
        k.faults()
            .iter()
            .map(|f| f.verdict.unwrap().code())
            .collect()
    }

    #[test]
    fn kernel_range_is_gp() {
        let mut k = kernel(Scheme::ProposedRegionDispatch, PagerBehavior::zero_fill());
        let top = LayoutConfig::small().user_end() as u32;
        assert_eq!(
            fault(&mut k, A, top),
            FaultVerdict::GeneralProtection(GpReason::KernelRange)
        );
        assert_eq!(k.engine().state(A), Ok(ThreadState::Terminated));
    }

    #[test]
    fn unassigned_is_gp() {
        let mut k = kernel(Scheme::ProposedRegionDispatch, PagerBehavior::zero_fill());
        assert_eq!(
            fault(&mut k, A, 0x100),
            FaultVerdict::GeneralProtection(GpReason::NoPagerAssigned)
        );
    }

    #[test]
    fn refusing_pager_is_gp() {
        let mut k = kernel(Scheme::ProposedRegionDispatch, PagerBehavior::zero_fill());
        k.assign_manager(SPACE, 0, P).unwrap();
        k.refuse(SPACE, 0, P).unwrap();
        assert_eq!(
            fault(&mut k, A, 0x100),
            FaultVerdict::GeneralProtection(GpReason::PagerNotAccepted)
        );
    }

    #[test]
    fn first_map_accepts_and_dispatches() {
        let mut k = kernel(Scheme::ProposedRegionDispatch, PagerBehavior::zero_fill());
        k.assign_manager(SPACE, 2, P).unwrap();
        let va = 0x8000 + 0x1234;
        assert_eq!(fault(&mut k, A, va), FaultVerdict::DispatchedToPager(P));
        assert_eq!(
            k.lookup_manager(SPACE, 2).unwrap(),
            RegionSlot {
                manager: Some(P),
                contract: ContractState::Accepted
            }
        );
        assert_eq!(k.space(SPACE).unwrap().page_table.lookup(va), Some(0));
        assert_eq!(k.engine().current(), Some(A));
        assert_eq!(k.engine().state(P), Ok(ThreadState::BlockedOnReceive));
        assert!(k.faults()[0].resolved);
    }

    #[test]
    fn dispatched_message_carries_stored_marker() {
        let mut k = kernel(Scheme::ProposedRegionDispatch, PagerBehavior::zero_fill());
        k.assign_manager(SPACE, 0, P).unwrap();
        k.pager_map(P, SPACE, 0x1000, 900, 4242).unwrap();
        k.pager_unmap(P, SPACE, 0x1000, false).unwrap();
        fault(&mut k, A, 0x1000);
        let sent: Vec<_> = k
            .trace()
            .events()
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::IpcSend(m) if m.kind == MessageKind::PageFault => Some(*m),
                _ => None,
            })
            .collect();
        assert_eq!(sent.len(), 1);
        assert_eq!(sent[0].payload.marker.get(), 4242);
        assert_eq!(sent[0].receiver, P);
    }

    #[test]
    fn never_mapped_pages_carry_marker_zero() {
        let mut k = kernel(Scheme::ProposedRegionDispatch, PagerBehavior::zero_fill());
        k.assign_manager(SPACE, 0, P).unwrap();
        k.hold_pager(P).unwrap();
        fault(&mut k, A, 0x3000);
        assert_eq!(
            k.pager(P).unwrap().pending.unwrap().payload.marker,
            Marker::ZERO
        );
    }

    #[test]
    fn revoke_only_on_last_page() {
        let mut k = kernel(Scheme::ProposedRegionDispatch, PagerBehavior::zero_fill());
        k.assign_manager(SPACE, 0, P).unwrap();
        k.pager_map(P, SPACE, 0x0000, 100, 0).unwrap();
        k.pager_map(P, SPACE, 0x1000, 101, 0).unwrap();
        assert_eq!(
            k.pager_unmap(P, SPACE, 0x0000, true),
            Ok(UnmapOutcome::RevokeIneffective)
        );
        assert_eq!(k.warnings().len(), 1);
        assert_eq!(
            k.lookup_manager(SPACE, 0).unwrap().contract,
            ContractState::Accepted
        );
        assert_eq!(
            k.pager_unmap(P, SPACE, 0x1000, true),
            Ok(UnmapOutcome::Revoked)
        );
        assert_eq!(
            k.lookup_manager(SPACE, 0).unwrap().contract,
            ContractState::Revoked
        );
        assert_eq!(
            fault(&mut k, A, 0x2000),
            FaultVerdict::GeneralProtection(GpReason::PagerNotAccepted)
        );
        assert_eq!(
            k.pager_map(P, SPACE, 0x2000, 5, 0),
            Err(KernelError::RegionRevoked(0))
        );
        // re-assignment reopens the region
        k.assign_manager(SPACE, 0, P).unwrap();
        assert_eq!(fault(&mut k, B, 0x2000), FaultVerdict::DispatchedToPager(P));
    }

    #[test]
    fn non_manager_cannot_map() {
        let mut k = kernel(Scheme::ProposedRegionDispatch, PagerBehavior::zero_fill());
        k.add_pager(Tid(11), Asid(2), PagerBehavior::zero_fill())
            .unwrap();
        k.assign_manager(SPACE, 0, P).unwrap();
        assert_eq!(
            k.pager_map(Tid(11), SPACE, 0, 1, 0),
            Err(KernelError::NotManager {
                pager: Tid(11),
                rid: 0
            })
        );
    }

    #[test]
    fn revoke_after_threshold_closes_region() {
        let b = PagerBehavior {
            revoke_after: Some(3),
            ..PagerBehavior::zero_fill()
        };
        let mut k = kernel(Scheme::ProposedRegionDispatch, b);
        k.assign_manager(SPACE, 1, P).unwrap();
        let base = 0x4000;
        for i in 0..3 {
            assert_eq!(
                fault(&mut k, A, base + i * 0x1000),
                FaultVerdict::DispatchedToPager(P)
            );
        }
        assert_eq!(
            k.lookup_manager(SPACE, 1).unwrap().contract,
            ContractState::Revoked
        );
        assert_eq!(
            k.space(SPACE)
                .unwrap()
                .page_table
                .present_pages(LayoutConfig::small().region_pages(1))
                .count(),
            0
        );
        assert_eq!(
            fault(&mut k, A, base + 0x3000),
            FaultVerdict::GeneralProtection(GpReason::PagerNotAccepted)
        );
        assert_eq!(
            verdict_codes(&k),
            vec!["DISPATCHED", "DISPATCHED", "DISPATCHED", "NOT_ACCEPTED"]
        );
    }

    #[test]
    fn present_recheck_skips_pager() {
        let mut k = kernel(Scheme::ProposedRegionDispatch, PagerBehavior::zero_fill());
        k.assign_manager(SPACE, 0, P).unwrap();
        k.hold_pager(P).unwrap();
        // A faults; pager takes the message but sits on it
        assert_eq!(fault(&mut k, A, 0x1000), FaultVerdict::DispatchedToPager(P));
        // B traps on the same page before the pager acts
        k.run_thread(B).unwrap();
        let ev = FaultEvent {
            tid: B,
            vaddr: 0x1000,
            access: Access::Read,
        };
        assert_eq!(k.fault_trap(ev).unwrap(), None);
        // pager gets the cpu and restores the page
        k.run_thread(P).unwrap();
        k.step_pager(P).unwrap();
        // B's dispatch step finds the page present
        k.enter_parked(B).unwrap();
        assert_eq!(
            k.fault_dispatch(B).unwrap(),
            FaultVerdict::ResumedWithoutPager
        );
        assert_eq!(k.engine().current(), Some(B));
        let b_sends = k
            .trace()
            .events()
            .iter()
            .filter(|e| e.charge == Charge::Cycle(1) && matches!(e.kind, EventKind::IpcSend(_)))
            .count();
        assert_eq!(b_sends, 0);
    }

    #[test]
    fn reply_errors() {
        let mut k = kernel(Scheme::ProposedRegionDispatch, PagerBehavior::zero_fill());
        k.add_pager(Tid(11), Asid(2), PagerBehavior::zero_fill())
            .unwrap();
        k.assign_manager(SPACE, 0, P).unwrap();
        k.hold_pager(P).unwrap();
        fault(&mut k, A, 0x0);
        assert_eq!(
            k.pager_reply(Tid(11), A),
            Err(KernelError::WrongPager {
                faulter: A,
                expected: P,
                got: Tid(11)
            })
        );
        k.pager_map(P, SPACE, 0x0, 3, 0).unwrap();
        k.pager_reply(P, A).unwrap();
        assert_eq!(k.engine().state(A), Ok(ThreadState::Running));
        assert_eq!(k.pager_reply(P, A), Err(KernelError::NoOutstandingFault(A)));
    }

    #[test]
    fn rejecting_pager_leaves_faulter_suspended() {
        let mut k = kernel(
            Scheme::ProposedRegionDispatch,
            PagerBehavior::new(PagerPolicy::Rejecting),
        );
        k.assign_manager(SPACE, 0, P).unwrap();
        assert_eq!(fault(&mut k, A, 0x0), FaultVerdict::DispatchedToPager(P));
        assert_eq!(k.engine().state(A), Ok(ThreadState::Suspended));
        assert_eq!(k.engine().state(P), Ok(ThreadState::BlockedOnReceive));
        assert!(!k.faults()[0].resolved);
        // the region was never accepted
        assert_eq!(
            k.lookup_manager(SPACE, 0).unwrap().contract,
            ContractState::Assigned
        );
    }

    #[test]
    fn classify_is_pure_function_of_tables() {
        let layout = LayoutConfig::small();
        let mut space = AddressSpace::new(SPACE, &layout);
        assert_eq!(
            classify(&layout, &space, 0),
            Classification::GeneralProtection(GpReason::NoPagerAssigned)
        );
        space.regions.assign(0, P).unwrap();
        assert_eq!(
            classify(&layout, &space, 0),
            Classification::Dispatch {
                rid: 0,
                manager: P,
                marker: Marker::ZERO
            }
        );
        space.page_table.map(0, 1, Marker::ZERO);
        assert_eq!(classify(&layout, &space, 0), Classification::Present);
    }
}
