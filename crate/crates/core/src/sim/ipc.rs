use std::fmt;

use crate::mmu::Marker;
use crate::types::{Access, Tid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    /// Kernel-generated fault notification, sent on behalf of the faulter.
    PageFault,
    /// A fault notification forwarded by a region mapper to the real pager.
    Reflection,
    /// Pager's answer to the faulter; resumes it.
    Reply,
}

impl MessageKind {
    pub fn code(self) -> &'static str {
        match self {
            MessageKind::PageFault => "PAGE_FAULT",
            MessageKind::Reflection => "REFLECTION",
            MessageKind::Reply => "REPLY",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Fault description carried by every message of a fault cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultPayload {
    pub vaddr: u32,
    pub access: Access,
    pub faulter: Tid,
    pub marker: Marker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message {
    pub sender: Tid,
    pub receiver: Tid,
    pub kind: MessageKind,
    pub payload: FaultPayload,
}

impl Message {
    /// The same fault, re-addressed from `sender` to `receiver`.
    pub fn reflect(&self, sender: Tid, receiver: Tid) -> Message {
        Message {
            sender,
            receiver,
            kind: MessageKind::Reflection,
            payload: self.payload,
        }
    }
}

/// Outcome of a synchronous send.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    /// Receiver was waiting and now holds the CPU.
    Delivered,
    /// Receiver was busy; the caller must park the message for it.
    Queued,
    /// A reply was issued; resuming the faulter is up to the caller.
    Replied,
}
