//! Simulated MMU: a flat page table per address space with present flags,
//! frames and the 31-bit pager-defined marker.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use thiserror::Error;

use crate::address_space::{region_id_of, ContractState, RegionLookup};
use crate::kernel::{Kernel, KernelError};
use crate::sim::EventKind;
use crate::types::{page_base, vpn_of, Access, Asid, Tid};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MmuError {
    #[error("marker {0:#x} does not fit in 31 bits")]
    MarkerOverflow(u32),
    #[error("page at {0:#010x} is not mapped")]
    NotMapped(u32),
    #[error("address {0:#010x} is in the kernel range")]
    KernelAddress(u32),
    #[error("unknown address space {0}")]
    UnknownSpace(Asid),
}

/// Pager-defined value kept in every page-table entry, present or not.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Marker(u32);

impl Marker {
    pub const ZERO: Marker = Marker(0);
    pub const MAX: u32 = (1 << 31) - 1;

    pub fn new(value: u32) -> Result<Self, MmuError> {
        if value > Self::MAX {
            Err(MmuError::MarkerOverflow(value))
        } else {
            Ok(Marker(value))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PageTableEntry {
    pub present: bool,
    /// Meaningless while `present` is false.
    pub frame: u32,
    pub marker: Marker,
}

/// Sparse single-level page table keyed by page number. Pages never touched
/// read as absent with marker zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PageTable {
    entries: BTreeMap<u32, PageTableEntry>,
}

impl PageTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entry(&self, vaddr: u32) -> PageTableEntry {
        self.entries
            .get(&vpn_of(vaddr))
            .copied()
            .unwrap_or_default()
    }

    pub fn lookup(&self, vaddr: u32) -> Option<u32> {
        let e = self.entry(vaddr);
        e.present.then_some(e.frame)
    }

    pub fn map(&mut self, vaddr: u32, frame: u32, marker: Marker) {
        self.entries.insert(
            vpn_of(vaddr),
            PageTableEntry {
                present: true,
                frame,
                marker,
            },
        );
    }

    /// Clears the present flag; the marker survives.
    pub fn unmap(&mut self, vaddr: u32) -> Result<(), MmuError> {
        match self.entries.get_mut(&vpn_of(vaddr)) {
            Some(e) if e.present => {
                e.present = false;
                Ok(())
            }
            _ => Err(MmuError::NotMapped(page_base(vaddr))),
        }
    }

    /// Present pages among page numbers `vpns`, ascending.
    pub fn present_pages(&self, vpns: Range<u32>) -> impl Iterator<Item = u32> + '_ {
        self.entries
            .range(vpns)
            .filter(|(_, e)| e.present)
            .map(|(&vpn, _)| vpn)
    }

    /// All entries ever written, including absent ones that carry a marker.
    pub fn entries(&self) -> impl Iterator<Item = (u32, PageTableEntry)> + '_ {
        self.entries.iter().map(|(&v, &e)| (v, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryAccess {
    pub tid: Tid,
    pub vaddr: u32,
    pub access: Access,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultEvent {
    pub tid: Tid,
    pub vaddr: u32,
    pub access: Access,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Translation {
    Frame(u32),
    Fault(FaultEvent),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnmapOutcome {
    Unmapped,
    /// Last present page removed with the revoke flag: the contract ended.
    Revoked,
    /// Revoke was asked for but did not apply; the page is unmapped anyway.
    RevokeIneffective,
}

impl Kernel {
    /// Hardware translation. Absent pages fault; classification is not done here.
    pub fn translate(&self, asid: Asid, access: MemoryAccess) -> Result<Translation, KernelError> {
        let space = self.space(asid)?;
        Ok(match space.page_table.lookup(access.vaddr) {
            Some(frame) => Translation::Frame(frame),
            None => Translation::Fault(FaultEvent {
                tid: access.tid,
                vaddr: access.vaddr,
                access: access.access,
            }),
        })
    }

    /// Installs a present entry. Manager checks belong to the caller.
    pub fn map_page(
        &mut self,
        asid: Asid,
        vaddr: u32,
        frame: u32,
        marker: u32,
    ) -> Result<(), KernelError> {
        let marker = Marker::new(marker)?;
        if !self.layout.is_user(vaddr) {
            return Err(MmuError::KernelAddress(vaddr).into());
        }
        self.space_mut(asid)?.page_table.map(vaddr, frame, marker);
        self.engine.append_trace(EventKind::MapPage {
            asid,
            vaddr: page_base(vaddr),
            frame,
            marker,
        });
        Ok(())
    }

    /// Clears a present entry. With `revoke`, removing the region's last
    /// present page ends an accepted contract.
    pub fn unmap_page(
        &mut self,
        asid: Asid,
        vaddr: u32,
        revoke: bool,
    ) -> Result<UnmapOutcome, KernelError> {
        let rid = match region_id_of(&self.layout, vaddr) {
            RegionLookup::Region(rid) => rid,
            RegionLookup::KernelRange => return Err(MmuError::KernelAddress(vaddr).into()),
        };
        let pages = self.layout.region_pages(rid);
        let space = self.space_mut(asid)?;
        space.page_table.unmap(vaddr)?;
        let mut outcome = UnmapOutcome::Unmapped;
        if revoke {
            let last = space.page_table.present_pages(pages).next().is_none();
            let accepted = space.regions.slot(rid)?.contract == ContractState::Accepted;
            if last && accepted {
                space.regions.set_contract(rid, ContractState::Revoked);
                outcome = UnmapOutcome::Revoked;
            } else {
                outcome = UnmapOutcome::RevokeIneffective;
            }
        }
        self.engine.append_trace(EventKind::UnmapPage {
            asid,
            vaddr: page_base(vaddr),
            revoke,
        });
        if outcome == UnmapOutcome::RevokeIneffective {
            self.warnings.push(format!(
                "revoke ignored for asid {asid} vaddr {:#010x}: region {rid} still has present pages or no accepted contract",
                page_base(vaddr)
            ));
        }
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::address_space::LayoutConfig;
    use crate::schemes::Scheme;

    fn kernel() -> Kernel {
        let mut k = Kernel::new(Scheme::ProposedRegionDispatch, LayoutConfig::small()).unwrap();
        k.add_space(Asid(1)).unwrap();
        k
    }

    fn read(vaddr: u32) -> MemoryAccess {
        MemoryAccess {
            tid: Tid(1),
            vaddr,
            access: Access::Read,
        }
    }

    #[test]
    fn marker_bounds() {
        assert_eq!(Marker::new(Marker::MAX).unwrap().get(), (1 << 31) - 1);
        assert_eq!(Marker::new(1 << 31), Err(MmuError::MarkerOverflow(1 << 31)));
    }

    #[test]
    fn map_translate_unmap() {
        let mut k = kernel();
        assert_eq!(
            k.translate(Asid(1), read(0)).unwrap(),
            Translation::Fault(FaultEvent {
                tid: Tid(1),
                vaddr: 0,
                access: Access::Read
            })
        );
        k.map_page(Asid(1), 0, 1, 0).unwrap();
        assert_eq!(
            k.translate(Asid(1), read(0x123)).unwrap(),
            Translation::Frame(1)
        );
        k.unmap_page(Asid(1), 0, false).unwrap();
        assert!(matches!(
            k.translate(Asid(1), read(0)).unwrap(),
            Translation::Fault(_)
        ));
        assert_eq!(
            k.unmap_page(Asid(1), 0, false),
            Err(KernelError::Mmu(MmuError::NotMapped(0)))
        );
    }

    #[test]
    fn marker_overflow_rejected_without_side_effects() {
        let mut k = kernel();
        assert_eq!(
            k.map_page(Asid(1), 0, 1, 1 << 31),
            Err(KernelError::Mmu(MmuError::MarkerOverflow(1 << 31)))
        );
        assert!(k.trace().is_empty());
    }

    #[test]
    fn marker_survives_unmap() {
        let mut k = kernel();
        k.map_page(Asid(1), 0x2000, 9, 77).unwrap();
        k.unmap_page(Asid(1), 0x2000, false).unwrap();
        let e = k.space(Asid(1)).unwrap().page_table.entry(0x2000);
        assert!(!e.present);
        assert_eq!(e.marker.get(), 77);
    }

    #[test]
    fn kernel_range_translate_faults() {
        let k = kernel();
        let top = LayoutConfig::small().user_end() as u32;
        assert!(matches!(
            k.translate(Asid(1), read(top)).unwrap(),
            Translation::Fault(_)
        ));
    }

    #[test]
    fn kernel_range_map_rejected() {
        let mut k = kernel();
        let top = LayoutConfig::small().user_end() as u32;
        assert_eq!(
            k.map_page(Asid(1), top, 1, 0),
            Err(KernelError::Mmu(MmuError::KernelAddress(top)))
        );
    }
}
