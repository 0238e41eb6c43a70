use std::fmt;

use crate::fault_dispatch::FaultVerdict;
use crate::mmu::Marker;
use crate::sim::ipc::{Message, MessageKind};
use crate::types::{Access, Asid, Tid};

/// Why the CPU entered the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrapCause {
    Fault,
    Syscall,
    /// Scheduler-directed hand-off of the CPU.
    Yield,
}

impl TrapCause {
    pub fn code(self) -> &'static str {
        match self {
            TrapCause::Fault => "fault",
            TrapCause::Syscall => "syscall",
            TrapCause::Yield => "yield",
        }
    }
}

/// Which account an event is billed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Charge {
    /// Scheduling and administrative work outside any fault cycle.
    Scheduler,
    /// Work done on behalf of the fault with this ordinal.
    Cycle(u32),
}

impl fmt::Display for Charge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Charge::Scheduler => f.write_str("-"),
            Charge::Cycle(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    ModeSwitchUserToKernel {
        tid: Tid,
        cause: TrapCause,
    },
    ModeSwitchKernelToUser {
        tid: Tid,
    },
    ContextSwitch {
        from: Tid,
        to: Tid,
    },
    IpcSend(Message),
    IpcReceive {
        tid: Tid,
        from: Tid,
        kind: MessageKind,
    },
    Suspend {
        tid: Tid,
    },
    Resume {
        tid: Tid,
    },
    MapPage {
        asid: Asid,
        vaddr: u32,
        frame: u32,
        marker: Marker,
    },
    UnmapPage {
        asid: Asid,
        vaddr: u32,
        revoke: bool,
    },
    Verdict {
        tid: Tid,
        vaddr: u32,
        access: Access,
        verdict: FaultVerdict,
    },
}

impl EventKind {
    pub fn is_mode_switch(&self) -> bool {
        matches!(
            self,
            EventKind::ModeSwitchUserToKernel { .. } | EventKind::ModeSwitchKernelToUser { .. }
        )
    }

    pub fn is_fault_trap(&self) -> bool {
        matches!(
            self,
            EventKind::ModeSwitchUserToKernel {
                cause: TrapCause::Fault,
                ..
            }
        )
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::ModeSwitchUserToKernel { tid, cause } => {
                write!(f, "MODE_U2K tid={tid} cause={}", cause.code())
            }
            EventKind::ModeSwitchKernelToUser { tid } => write!(f, "MODE_K2U tid={tid}"),
            EventKind::ContextSwitch { from, to } => {
                write!(f, "CONTEXT_SWITCH from={from} to={to}")
            }
            EventKind::IpcSend(m) => write!(
                f,
                "IPC_SEND from={} to={} kind={} vaddr={:#010x} access={} faulter={} marker={}",
                m.sender,
                m.receiver,
                m.kind,
                m.payload.vaddr,
                m.payload.access,
                m.payload.faulter,
                m.payload.marker
            ),
            EventKind::IpcReceive { tid, from, kind } => {
                write!(f, "IPC_RECEIVE tid={tid} from={from} kind={kind}")
            }
            EventKind::Suspend { tid } => write!(f, "SUSPEND tid={tid}"),
            EventKind::Resume { tid } => write!(f, "RESUME tid={tid}"),
            EventKind::MapPage {
                asid,
                vaddr,
                frame,
                marker,
            } => write!(
                f,
                "MAP_PAGE asid={asid} vaddr={vaddr:#010x} frame={frame} marker={marker}"
            ),
            EventKind::UnmapPage {
                asid,
                vaddr,
                revoke,
            } => write!(
                f,
                "UNMAP_PAGE asid={asid} vaddr={vaddr:#010x} revoke={}",
                u8::from(*revoke)
            ),
            EventKind::Verdict {
                tid,
                vaddr,
                access,
                verdict,
            } => {
                write!(
                    f,
                    "VERDICT tid={tid} vaddr={vaddr:#010x} access={access} verdict={}",
                    verdict.code()
                )?;
                if let FaultVerdict::DispatchedToPager(p) = verdict {
                    write!(f, " pager={p}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub charge: Charge,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} cycle={}", self.seq, self.kind, self.charge)
    }
}

/// Append-only event log of one simulation run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `kind` with the next sequence number and returns that number.
    pub fn append(&mut self, kind: EventKind, charge: Charge) -> u64 {
        let seq = self.events.len() as u64;
        self.events.push(TraceEvent { seq, kind, charge });
        seq
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Line-oriented export: `seq KIND key=value... cycle=N`, one event per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.events.len() * 48);
        for ev in &self.events {
            out.push_str(&ev.to_string());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k2u(t: u32) -> EventKind {
        EventKind::ModeSwitchKernelToUser { tid: Tid(t) }
    }

    #[test]
    fn first_event_gets_seq_zero() {
        let mut t = Trace::new();
        assert_eq!(t.append(k2u(1), Charge::Scheduler), 0);
        assert_eq!(t.append(k2u(1), Charge::Scheduler), 1);
    }

    #[test]
    fn seq_is_dense() {
        let mut t = Trace::new();
        for n in 0..257u64 {
            assert_eq!(t.append(k2u(1), Charge::Cycle(0)), n);
        }
        // counting oracle: N appends leave N-1 as the last number
        assert_eq!(t.events().last().unwrap().seq, 256);
        assert!(t.events().windows(2).all(|w| w[1].seq == w[0].seq + 1));
    }

    #[test]
    fn line_format() {
        let mut t = Trace::new();
        t.append(
            EventKind::ModeSwitchUserToKernel {
                tid: Tid(1),
                cause: TrapCause::Fault,
            },
            Charge::Cycle(0),
        );
        t.append(
            EventKind::ContextSwitch {
                from: Tid(1),
                to: Tid(2),
            },
            Charge::Scheduler,
        );
        assert_eq!(
            t.to_text(),
            "0 MODE_U2K tid=1 cause=fault cycle=0\n1 CONTEXT_SWITCH from=1 to=2 cycle=-\n"
        );
    }
}
