use std::fmt;

use crate::types::{Asid, Tid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreadState {
    Running,
    Ready,
    Suspended,
    BlockedOnReceive,
    /// Killed by the generic exception path after a general-protection fault.
    Terminated,
}

impl ThreadState {
    /// Whether the scheduler may hand the CPU to a thread in this state.
    pub fn is_runnable(self) -> bool {
        matches!(self, ThreadState::Running | ThreadState::Ready)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ThreadRole {
    Applicant,
    Pager,
    RegionMapper,
    KernelInternal,
}

impl ThreadRole {
    pub fn code(self) -> &'static str {
        match self {
            ThreadRole::Applicant => "applicant",
            ThreadRole::Pager => "pager",
            ThreadRole::RegionMapper => "region-mapper",
            ThreadRole::KernelInternal => "kernel",
        }
    }
}

impl fmt::Display for ThreadRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadControlBlock {
    pub tid: Tid,
    pub asid: Asid,
    pub state: ThreadState,
    pub role: ThreadRole,
}
