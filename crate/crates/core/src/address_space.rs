//! Virtual address-space layout and the per-space region table.
//!
//! The user part of an address space starts at `user_base` and is cut into
//! `region_count` equally sized regions; everything else is kernel range.
//! Each region has at most one manager (a pager thread) recorded in the
//! region table together with the state of its servicing contract.

use std::collections::BTreeSet;
use std::ops::Range;

use thiserror::Error;

use crate::kernel::{Kernel, KernelError};
use crate::mmu::PageTable;
use crate::types::{Asid, Tid, PAGE_SHIFT, PAGE_SIZE};

/// Width of one manager id in the serialized region table.
pub const MANAGER_ID_BYTES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("region size {0:#x} is not a power of two")]
    NotPowerOfTwo(u32),
    #[error("region size {region_size:#x} != {pages} pages of 4KiB")]
    SizeMismatch { region_size: u32, pages: u32 },
    #[error("user range ends at {0:#x}, beyond the 32-bit address space")]
    ExceedsAddressSpace(u64),
    #[error("user base {0:#x} is not page aligned")]
    UnalignedBase(u32),
    #[error("layout has no regions")]
    NoRegions,
    #[error("region {0} out of range")]
    BadRegion(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutConfig {
    pub user_base: u32,
    pub region_size: u32,
    pub region_count: u32,
    pub pages_per_region: u32,
}

impl Default for LayoutConfig {
    /// 1020 regions of 1024 pages (4MiB) starting at address zero.
    fn default() -> Self {
        Self {
            user_base: 0,
            region_size: 4 << 20,
            region_count: 1020,
            pages_per_region: 1024,
        }
    }
}

impl LayoutConfig {
    /// 8 regions of 4 pages (16KiB), for exhaustive tests.
    pub fn small() -> Self {
        Self {
            user_base: 0,
            region_size: 16 << 10,
            region_count: 8,
            pages_per_region: 4,
        }
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.region_count == 0 {
            return Err(LayoutError::NoRegions);
        }
        if !self.region_size.is_power_of_two() {
            return Err(LayoutError::NotPowerOfTwo(self.region_size));
        }
        if u64::from(self.pages_per_region) * u64::from(PAGE_SIZE) != u64::from(self.region_size) {
            return Err(LayoutError::SizeMismatch {
                region_size: self.region_size,
                pages: self.pages_per_region,
            });
        }
        if !self.user_base.is_multiple_of(PAGE_SIZE) {
            return Err(LayoutError::UnalignedBase(self.user_base));
        }
        let end = self.user_end();
        if end > 1 << 32 {
            return Err(LayoutError::ExceedsAddressSpace(end));
        }
        Ok(())
    }

    /// One past the last user address.
    pub fn user_end(&self) -> u64 {
        u64::from(self.user_base) + u64::from(self.region_count) * u64::from(self.region_size)
    }

    pub fn region_shift(&self) -> u32 {
        self.region_size.trailing_zeros()
    }

    pub fn is_user(&self, vaddr: u32) -> bool {
        vaddr >= self.user_base && u64::from(vaddr) < self.user_end()
    }

    /// `[start, end)` of region `rid`.
    pub fn region_bounds(&self, rid: u32) -> Range<u64> {
        let start = u64::from(self.user_base) + u64::from(rid) * u64::from(self.region_size);
        start..start + u64::from(self.region_size)
    }

    /// Page numbers covered by region `rid`.
    pub fn region_pages(&self, rid: u32) -> Range<u32> {
        let b = self.region_bounds(rid);
        (b.start >> PAGE_SHIFT) as u32..(b.end >> PAGE_SHIFT) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionLookup {
    Region(u32),
    KernelRange,
}

/// Region id by division: `(vaddr - user_base) / region_size`.
pub fn region_id_of(cfg: &LayoutConfig, vaddr: u32) -> RegionLookup {
    if !cfg.is_user(vaddr) {
        return RegionLookup::KernelRange;
    }
    RegionLookup::Region((vaddr - cfg.user_base) / cfg.region_size)
}

/// Same as [`region_id_of`], with the division replaced by a shift.
pub fn region_id_of_shift(cfg: &LayoutConfig, vaddr: u32) -> RegionLookup {
    if !cfg.is_user(vaddr) {
        return RegionLookup::KernelRange;
    }
    RegionLookup::Region((vaddr - cfg.user_base) >> cfg.region_shift())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContractState {
    Unassigned,
    /// The consumer named a manager; the manager has not acted yet.
    Assigned,
    /// The manager mapped into the region.
    Accepted,
    /// The manager removed its last page with the revoke flag.
    Revoked,
}

impl ContractState {
    pub fn code(self) -> &'static str {
        match self {
            ContractState::Unassigned => "unassigned",
            ContractState::Assigned => "assigned",
            ContractState::Accepted => "accepted",
            ContractState::Revoked => "revoked",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionSlot {
    pub manager: Option<Tid>,
    pub contract: ContractState,
}

impl RegionSlot {
    pub const UNASSIGNED: RegionSlot = RegionSlot {
        manager: None,
        contract: ContractState::Unassigned,
    };
}

/// Fixed-size table of region managers, one slot per region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionTable {
    slots: Vec<RegionSlot>,
}

impl RegionTable {
    pub fn new(region_count: u32) -> Self {
        Self {
            slots: vec![RegionSlot::UNASSIGNED; region_count as usize],
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slot(&self, rid: u32) -> Result<RegionSlot, LayoutError> {
        self.slots
            .get(rid as usize)
            .copied()
            .ok_or(LayoutError::BadRegion(rid))
    }

    /// Last writer wins; any previous contract is reset to `Assigned`.
    pub fn assign(&mut self, rid: u32, manager: Tid) -> Result<(), LayoutError> {
        let slot = self
            .slots
            .get_mut(rid as usize)
            .ok_or(LayoutError::BadRegion(rid))?;
        *slot = RegionSlot {
            manager: Some(manager),
            contract: ContractState::Assigned,
        };
        Ok(())
    }

    pub(crate) fn set_contract(&mut self, rid: u32, contract: ContractState) {
        self.slots[rid as usize].contract = contract;
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, RegionSlot)> + '_ {
        self.slots.iter().enumerate().map(|(i, s)| (i as u32, *s))
    }

    /// The kernel's in-memory image: one little-endian manager id per region,
    /// zero for unassigned slots.
    pub fn manager_ids_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.slots.len() * MANAGER_ID_BYTES);
        for s in &self.slots {
            let id = s.manager.map_or(0, |t| t.0);
            out.extend_from_slice(&id.to_le_bytes());
        }
        out
    }
}

/// One simulated address space.
#[derive(Debug, Clone)]
pub struct AddressSpace {
    pub asid: Asid,
    pub page_table: PageTable,
    pub regions: RegionTable,
    /// (region, pager) pairs where the pager declined to service the region.
    pub refusals: BTreeSet<(u32, Tid)>,
}

impl AddressSpace {
    pub fn new(asid: Asid, layout: &LayoutConfig) -> Self {
        Self {
            asid,
            page_table: PageTable::new(),
            regions: RegionTable::new(layout.region_count),
            refusals: BTreeSet::new(),
        }
    }

    pub fn refuses(&self, rid: u32, pager: Tid) -> bool {
        self.refusals.contains(&(rid, pager))
    }
}

impl Kernel {
    /// Consumer side of the contract: names `pager` as manager of region `rid`.
    pub fn assign_manager(&mut self, asid: Asid, rid: u32, pager: Tid) -> Result<(), KernelError> {
        if !self.pagers.contains_key(&pager) {
            self.engine.state(pager)?;
            return Err(KernelError::NotAPager(pager));
        }
        self.space_mut(asid)?.regions.assign(rid, pager)?;
        self.on_assignment(asid, rid)
    }

    pub fn lookup_manager(&self, asid: Asid, rid: u32) -> Result<RegionSlot, KernelError> {
        Ok(self.space(asid)?.regions.slot(rid)?)
    }
}
