//! User-mode pager models and the region mapper's mapping database.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::mmu::Marker;
use crate::sim::Message;
use crate::types::{vpn_of, Tid};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PagerError {
    #[error("frame allocator exhausted after {0} frames")]
    OutOfFrames(u32),
    #[error("no mapping-database entry covers {0:#010x}")]
    NoDatabaseEntry(u32),
    #[error("range [{start:#x}, {end:#x}) overlaps an existing entry")]
    OverlappingRange { start: u64, end: u64 },
    #[error("range [{start:#x}, {end:#x}) is empty")]
    EmptyRange { start: u64, end: u64 },
    #[error("fixed backing has no frame for {0:#010x}")]
    NoBacking(u32),
    #[error("marker {0:#x} does not fit in 31 bits")]
    BadMarker(u32),
}

/// How a pager derives the marker it stores with each mapping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MarkerPolicy {
    #[default]
    Zero,
    /// Index of the page within its region.
    PageIndex,
    Constant(u32),
}

impl MarkerPolicy {
    pub fn marker_for(self, page_in_region: u32) -> Result<Marker, PagerError> {
        let v = match self {
            MarkerPolicy::Zero => 0,
            MarkerPolicy::PageIndex => page_in_region,
            MarkerPolicy::Constant(c) => c,
        };
        Marker::new(v).map_err(|_| PagerError::BadMarker(v))
    }
}

/// Region mapper's table of which pager serves which address range.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MappingDatabase {
    // start -> (end, target); ranges are half-open and disjoint
    ranges: BTreeMap<u64, (u64, Tid)>,
}

impl MappingDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, start: u64, end: u64, target: Tid) -> Result<(), PagerError> {
        if start >= end {
            return Err(PagerError::EmptyRange { start, end });
        }
        let overlaps_prev = self
            .ranges
            .range(..end)
            .next_back()
            .is_some_and(|(_, &(e, _))| e > start);
        if overlaps_prev {
            return Err(PagerError::OverlappingRange { start, end });
        }
        self.ranges.insert(start, (end, target));
        Ok(())
    }

    pub fn lookup(&self, vaddr: u32) -> Result<Tid, PagerError> {
        let v = u64::from(vaddr);
        match self.ranges.range(..=v).next_back() {
            Some((_, &(end, target))) if v < end => Ok(target),
            _ => Err(PagerError::NoDatabaseEntry(vaddr)),
        }
    }

    /// Drops every entry intersecting `[start, end)`.
    pub fn remove_overlapping(&mut self, start: u64, end: u64) {
        let doomed: Vec<u64> = self
            .ranges
            .range(..end)
            .filter(|(&s, &(e, _))| s < end && e > start)
            .map(|(&s, _)| s)
            .collect();
        for s in doomed {
            self.ranges.remove(&s);
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, u64, Tid)> + '_ {
        self.ranges.iter().map(|(&s, &(e, t))| (s, e, t))
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PagerPolicy {
    /// Fresh frame from the allocator for every fault.
    AnonymousZeroFill,
    /// Page number -> frame.
    FixedBacking(BTreeMap<u32, u32>),
    /// Never maps, never replies.
    Rejecting,
    /// Region-mapper behaviour: forward to whoever the database names.
    Reflecting(MappingDatabase),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PagerBehavior {
    pub policy: PagerPolicy,
    /// Revoke the region once this many faults in it have been resolved.
    pub revoke_after: Option<u32>,
    pub marker: MarkerPolicy,
}

impl PagerBehavior {
    pub fn new(policy: PagerPolicy) -> Self {
        Self {
            policy,
            revoke_after: None,
            marker: MarkerPolicy::Zero,
        }
    }

    pub fn zero_fill() -> Self {
        Self::new(PagerPolicy::AnonymousZeroFill)
    }
}

/// Bump allocator over physical frames, skipping frames reserved for fixed backings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameAllocator {
    next: u32,
    capacity: u32,
    reserved: BTreeSet<u32>,
}

impl FrameAllocator {
    pub const DEFAULT_CAPACITY: u32 = 1 << 20;

    pub fn new(capacity: u32) -> Self {
        Self {
            next: 0,
            capacity,
            reserved: BTreeSet::new(),
        }
    }

    pub fn reserve(&mut self, frame: u32) {
        self.reserved.insert(frame);
    }

    pub fn alloc(&mut self) -> Result<u32, PagerError> {
        while self.next < self.capacity {
            let f = self.next;
            self.next += 1;
            if !self.reserved.contains(&f) {
                return Ok(f);
            }
        }
        Err(PagerError::OutOfFrames(self.capacity))
    }
}

impl Default for FrameAllocator {
    fn default() -> Self {
        Self::new(Self::DEFAULT_CAPACITY)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PagerAction {
    Map {
        vaddr: u32,
        frame: u32,
        marker: Marker,
    },
    /// Unmap every present page of the faulting region, the last with the revoke flag.
    RevokeRegion,
    Reply,
    Forward {
        target: Tid,
    },
    /// Drop the message and go back to receiving.
    Wait,
}

/// What the pager knows about the fault besides the message itself.
pub struct FaultContext<'a> {
    pub page_in_region: u32,
    /// Faults in this region this pager resolved before the current one.
    pub resolved_in_region: u32,
    pub frames: &'a mut FrameAllocator,
}

/// Decides how a pager reacts to a fault notification.
pub fn on_page_fault(
    behavior: &PagerBehavior,
    msg: &Message,
    ctx: FaultContext<'_>,
) -> Result<Vec<PagerAction>, PagerError> {
    let vaddr = msg.payload.vaddr;
    let frame = match &behavior.policy {
        PagerPolicy::Rejecting => return Ok(vec![PagerAction::Wait]),
        PagerPolicy::Reflecting(db) => {
            return Ok(vec![PagerAction::Forward {
                target: db.lookup(vaddr)?,
            }])
        }
        PagerPolicy::AnonymousZeroFill => ctx.frames.alloc()?,
        PagerPolicy::FixedBacking(backing) => *backing
            .get(&vpn_of(vaddr))
            .ok_or(PagerError::NoBacking(vaddr))?,
    };
    let marker = behavior.marker.marker_for(ctx.page_in_region)?;
    let mut actions = vec![PagerAction::Map {
        vaddr,
        frame,
        marker,
    }];
    if behavior
        .revoke_after
        .is_some_and(|n| ctx.resolved_in_region + 1 >= n)
    {
        actions.push(PagerAction::RevokeRegion);
    }
    actions.push(PagerAction::Reply);
    Ok(actions)
}

/// Per-pager runtime state kept by the kernel.
#[derive(Debug, Clone)]
pub struct PagerState {
    pub behavior: PagerBehavior,
    /// Park the next received message instead of acting on it.
    pub hold: bool,
    /// Received but not yet acted upon.
    pub pending: Option<Message>,
    /// Sent while the pager was busy; not yet received.
    pub inbox: VecDeque<Message>,
}

impl PagerState {
    pub fn new(behavior: PagerBehavior) -> Self {
        Self {
            behavior,
            hold: false,
            pending: None,
            inbox: VecDeque::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{FaultPayload, MessageKind};
    use crate::types::Access;
    use proptest::prelude::*;

    fn msg(vaddr: u32) -> Message {
        Message {
            sender: Tid(1),
            receiver: Tid(2),
            kind: MessageKind::PageFault,
            payload: FaultPayload {
                vaddr,
                access: Access::Write,
                faulter: Tid(1),
                marker: Marker::ZERO,
            },
        }
    }

    #[test]
    fn db_basic() {
        let mut db = MappingDatabase::new();
        db.insert(0x1000, 0x3000, Tid(2)).unwrap();
        assert_eq!(db.lookup(0x2fff), Ok(Tid(2)));
        assert_eq!(db.lookup(0x1000), Ok(Tid(2)));
        assert_eq!(db.lookup(0x3000), Err(PagerError::NoDatabaseEntry(0x3000)));
        assert_eq!(db.lookup(0xfff), Err(PagerError::NoDatabaseEntry(0xfff)));
    }

    #[test]
    fn db_rejects_overlap_and_empty() {
        let mut db = MappingDatabase::new();
        db.insert(0x1000, 0x3000, Tid(2)).unwrap();
        for (s, e) in [
            (0x0, 0x1001),
            (0x2fff, 0x4000),
            (0x1800, 0x1900),
            (0x0, 0x10000),
        ] {
            assert_eq!(
                db.insert(s, e, Tid(3)),
                Err(PagerError::OverlappingRange { start: s, end: e })
            );
        }
        db.insert(0x3000, 0x4000, Tid(3)).unwrap();
        db.insert(0x0, 0x1000, Tid(4)).unwrap();
        assert_eq!(
            db.insert(0x5000, 0x5000, Tid(3)),
            Err(PagerError::EmptyRange {
                start: 0x5000,
                end: 0x5000
            })
        );
        db.remove_overlapping(0x2000, 0x3800);
        let left: Vec<_> = db.entries().collect();
        assert_eq!(left, vec![(0x0, 0x1000, Tid(4))]);
    }

    proptest! {
        #[test]
        fn db_matches_linear_scan(
            cuts in proptest::collection::btree_set(0u32..0x10_0000, 2..40),
            keep in proptest::collection::vec(any::<bool>(), 40),
            probes in proptest::collection::vec(0u32..0x11_0000, 64),
        ) {
            // consecutive cut points give disjoint ranges; drop some to leave holes
            let cuts: Vec<u32> = cuts.into_iter().collect();
            let mut ranges = Vec::new();
            let mut db = MappingDatabase::new();
            for (i, w) in cuts.windows(2).enumerate() {
                if keep[i] {
                    let t = Tid(i as u32 + 1);
                    db.insert(w[0].into(), w[1].into(), t).unwrap();
                    ranges.push((w[0], w[1], t));
                }
            }
            for p in probes {
                let want = ranges
                    .iter()
                    .find(|&&(s, e, _)| s <= p && p < e)
                    .map(|&(_, _, t)| t);
                prop_assert_eq!(db.lookup(p).ok(), want);
            }
        }
    }

    #[test]
    fn zero_fill_maps_then_replies() {
        let mut frames = FrameAllocator::new(4);
        frames.reserve(0);
        let b = PagerBehavior {
            marker: MarkerPolicy::PageIndex,
            ..PagerBehavior::zero_fill()
        };
        let acts = on_page_fault(
            &b,
            &msg(0x5123),
            FaultContext {
                page_in_region: 1,
                resolved_in_region: 0,
                frames: &mut frames,
            },
        )
        .unwrap();
        assert_eq!(
            acts,
            vec![
                PagerAction::Map {
                    vaddr: 0x5123,
                    frame: 1,
                    marker: Marker::new(1).unwrap()
                },
                PagerAction::Reply
            ]
        );
    }

    #[test]
    fn out_of_frames() {
        let mut frames = FrameAllocator::new(1);
        frames.alloc().unwrap();
        let r = on_page_fault(
            &PagerBehavior::zero_fill(),
            &msg(0),
            FaultContext {
                page_in_region: 0,
                resolved_in_region: 0,
                frames: &mut frames,
            },
        );
        assert_eq!(r, Err(PagerError::OutOfFrames(1)));
    }

    fn ctx(frames: &mut FrameAllocator) -> FaultContext<'_> {
        FaultContext {
            page_in_region: 0,
            resolved_in_region: 0,
            frames,
        }
    }

    #[test]
    fn fixed_backing() {
        let b = PagerBehavior::new(PagerPolicy::FixedBacking(BTreeMap::from([(5, 40)])));
        let mut frames = FrameAllocator::default();
        let acts = on_page_fault(&b, &msg(0x5000), ctx(&mut frames)).unwrap();
        assert!(matches!(acts[0], PagerAction::Map { frame: 40, .. }));
        assert_eq!(
            on_page_fault(&b, &msg(0x6000), ctx(&mut frames)),
            Err(PagerError::NoBacking(0x6000))
        );
    }

    #[test]
    fn rejecting_and_reflecting() {
        let mut frames = FrameAllocator::default();
        let r = on_page_fault(
            &PagerBehavior::new(PagerPolicy::Rejecting),
            &msg(0),
            FaultContext {
                page_in_region: 0,
                resolved_in_region: 0,
                frames: &mut frames,
            },
        );
        assert_eq!(r, Ok(vec![PagerAction::Wait]));

        let mut db = MappingDatabase::new();
        db.insert(0, 0x4000, Tid(9)).unwrap();
        let rm = PagerBehavior::new(PagerPolicy::Reflecting(db));
        assert_eq!(
            on_page_fault(&rm, &msg(0x3fff), ctx(&mut frames)),
            Ok(vec![PagerAction::Forward { target: Tid(9) }])
        );
        assert_eq!(
            on_page_fault(&rm, &msg(0x4000), ctx(&mut frames)),
            Err(PagerError::NoDatabaseEntry(0x4000))
        );
    }

    #[test]
    fn revoke_on_threshold() {
        let b = PagerBehavior {
            revoke_after: Some(3),
            ..PagerBehavior::zero_fill()
        };
        let mut frames = FrameAllocator::default();
        for (before, revokes) in [(0, false), (1, false), (2, true)] {
            let acts = on_page_fault(
                &b,
                &msg(0),
                FaultContext {
                    page_in_region: 0,
                    resolved_in_region: before,
                    frames: &mut frames,
                },
            )
            .unwrap();
            assert_eq!(acts.contains(&PagerAction::RevokeRegion), revokes);
            assert_eq!(acts.last(), Some(&PagerAction::Reply));
        }
    }

    #[test]
    fn constant_marker_overflow() {
        assert_eq!(
            MarkerPolicy::Constant(1 << 31).marker_for(0),
            Err(PagerError::BadMarker(1 << 31))
        );
    }
}
