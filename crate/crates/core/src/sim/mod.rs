//! Deterministic single-CPU event engine.
//!
//! The engine owns the thread table, the current privilege level and the
//! trace. Every user/kernel transition it performs emits exactly one mode
//! switch event, and a context switch is emitted only when the thread holding
//! the CPU changes. Kernel work done on behalf of a thread is not a context
//! switch.

pub mod ipc;
pub mod sched;
pub mod thread;
pub mod trace;

use std::collections::BTreeMap;

use thiserror::Error;

pub use ipc::{Delivery, FaultPayload, Message, MessageKind};
pub use sched::{SchedDirective, SeededRoundRobin};
pub use thread::{ThreadControlBlock, ThreadRole, ThreadState};
pub use trace::{Charge, EventKind, Trace, TraceEvent, TrapCause};

use crate::types::{Asid, Tid};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("deadlock: no thread is ready or running")]
    Deadlock,
    #[error("unknown receiver {0}")]
    UnknownReceiver(Tid),
    #[error("unknown thread {0}")]
    UnknownThread(Tid),
    #[error("thread {0} is already registered")]
    DuplicateThread(Tid),
    #[error("tid 0 is reserved for the kernel")]
    ReservedTid,
    #[error("thread {0} is not runnable")]
    NotRunnable(Tid),
    #[error("thread {0} is not suspended")]
    NotSuspended(Tid),
    #[error("cpu is in {actual:?} mode, operation needs {expected:?}")]
    WrongMode { expected: CpuMode, actual: CpuMode },
    #[error("sender {0} does not hold the cpu")]
    SenderNotRunning(Tid),
    #[error("page-fault message names thread {0}, which is not suspended")]
    FaulterNotSuspended(Tid),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpuMode {
    User,
    Kernel,
}

#[derive(Debug, Clone)]
pub struct Engine {
    threads: BTreeMap<Tid, ThreadControlBlock>,
    trace: Trace,
    current: Option<Tid>,
    mode: CpuMode,
    charge: Charge,
}

impl Default for Engine {
    fn default() -> Self {
        Self::new()
    }
}

impl Engine {
    /// A powered-on machine: CPU in kernel mode, no thread scheduled yet.
    pub fn new() -> Self {
        Self {
            threads: BTreeMap::new(),
            trace: Trace::new(),
            current: None,
            mode: CpuMode::Kernel,
            charge: Charge::Scheduler,
        }
    }

    pub fn spawn(
        &mut self,
        tid: Tid,
        asid: Asid,
        role: ThreadRole,
        state: ThreadState,
    ) -> Result<(), SimError> {
        if tid == Tid::KERNEL {
            return Err(SimError::ReservedTid);
        }
        if self.threads.contains_key(&tid) {
            return Err(SimError::DuplicateThread(tid));
        }
        self.threads.insert(
            tid,
            ThreadControlBlock {
                tid,
                asid,
                state,
                role,
            },
        );
        Ok(())
    }

    pub fn thread(&self, tid: Tid) -> Option<&ThreadControlBlock> {
        self.threads.get(&tid)
    }

    pub fn threads(&self) -> impl Iterator<Item = &ThreadControlBlock> {
        self.threads.values()
    }

    pub fn state(&self, tid: Tid) -> Result<ThreadState, SimError> {
        self.threads
            .get(&tid)
            .map(|t| t.state)
            .ok_or(SimError::UnknownThread(tid))
    }

    pub(crate) fn set_state(&mut self, tid: Tid, state: ThreadState) -> Result<(), SimError> {
        let t = self
            .threads
            .get_mut(&tid)
            .ok_or(SimError::UnknownThread(tid))?;
        t.state = state;
        Ok(())
    }

    pub fn current(&self) -> Option<Tid> {
        self.current
    }

    pub fn mode(&self) -> CpuMode {
        self.mode
    }

    pub fn charge(&self) -> Charge {
        self.charge
    }

    /// Bills subsequent events to `charge`.
    pub fn set_charge(&mut self, charge: Charge) {
        self.charge = charge;
    }

    pub fn append_trace(&mut self, kind: EventKind) -> u64 {
        self.trace.append(kind, self.charge)
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    fn expect_mode(&self, expected: CpuMode) -> Result<(), SimError> {
        if self.mode == expected {
            Ok(())
        } else {
            Err(SimError::WrongMode {
                expected,
                actual: self.mode,
            })
        }
    }

    /// Hands the CPU to `tid`, emitting a context switch if the holder changes.
    fn set_running(&mut self, tid: Tid) -> Result<(), SimError> {
        if !self.state(tid)?.is_runnable() {
            return Err(SimError::NotRunnable(tid));
        }
        if let Some(prev) = self.current {
            if prev != tid {
                self.append_trace(EventKind::ContextSwitch {
                    from: prev,
                    to: tid,
                });
                if self.state(prev)? == ThreadState::Running {
                    self.set_state(prev, ThreadState::Ready)?;
                }
            }
        }
        self.set_state(tid, ThreadState::Running)?;
        self.current = Some(tid);
        Ok(())
    }

    pub fn schedule_next(&mut self, directive: SchedDirective<'_>) -> Result<Tid, SimError> {
        let candidates: Vec<Tid> = self
            .threads
            .values()
            .filter(|t| t.state.is_runnable())
            .map(|t| t.tid)
            .collect();
        if candidates.is_empty() {
            return Err(SimError::Deadlock);
        }
        let pick = match directive {
            SchedDirective::Deterministic(tid) => {
                if !candidates.contains(&tid) {
                    return Err(SimError::NotRunnable(tid));
                }
                tid
            }
            SchedDirective::SeededRoundRobin(rr) => rr.pick(&candidates),
        };
        self.set_running(pick)?;
        Ok(pick)
    }

    /// Traps the current thread into the kernel.
    pub fn enter_kernel(&mut self, cause: TrapCause) -> Result<(), SimError> {
        self.expect_mode(CpuMode::User)?;
        let tid = self.current.expect("user mode always has a current thread");
        self.append_trace(EventKind::ModeSwitchUserToKernel { tid, cause });
        self.mode = CpuMode::Kernel;
        Ok(())
    }

    /// Leaves the kernel into `tid`'s user context.
    pub fn return_to_user(&mut self, tid: Tid) -> Result<(), SimError> {
        self.return_to_user_with(tid, true)
    }

    pub(crate) fn return_to_user_with(
        &mut self,
        tid: Tid,
        emit_mode_switch: bool,
    ) -> Result<(), SimError> {
        self.expect_mode(CpuMode::Kernel)?;
        if !self.state(tid)?.is_runnable() {
            return Err(SimError::NotRunnable(tid));
        }
        if emit_mode_switch {
            self.append_trace(EventKind::ModeSwitchKernelToUser { tid });
        }
        self.set_running(tid)?;
        self.mode = CpuMode::User;
        Ok(())
    }

    /// Kernel-internal switch: the CPU stays in kernel mode under `tid`.
    pub fn switch_in_kernel(&mut self, tid: Tid) -> Result<(), SimError> {
        self.expect_mode(CpuMode::Kernel)?;
        self.schedule_next(SchedDirective::Deterministic(tid))?;
        Ok(())
    }

    pub fn suspend(&mut self, tid: Tid) -> Result<(), SimError> {
        self.state(tid)?;
        self.append_trace(EventKind::Suspend { tid });
        self.set_state(tid, ThreadState::Suspended)
    }

    pub fn resume(&mut self, tid: Tid) -> Result<(), SimError> {
        if self.state(tid)? != ThreadState::Suspended {
            return Err(SimError::NotSuspended(tid));
        }
        self.append_trace(EventKind::Resume { tid });
        self.set_state(tid, ThreadState::Ready)
    }

    pub(crate) fn terminate(&mut self, tid: Tid) -> Result<(), SimError> {
        self.set_state(tid, ThreadState::Terminated)
    }

    /// Puts a user thread back into its receive loop.
    pub(crate) fn wait_for_message(&mut self, tid: Tid) -> Result<(), SimError> {
        self.set_state(tid, ThreadState::BlockedOnReceive)
    }

    /// Rendezvous send.
    ///
    /// A user-mode sender traps first. Fault notifications and reflections are
    /// handed to a waiting receiver immediately (kernel exit plus context
    /// switch); a busy receiver leaves the message with the caller. Replies only
    /// record the send: resuming the faulter is the kernel's job.
    pub fn send_sync(&mut self, msg: Message) -> Result<Delivery, SimError> {
        let receiver_state = self
            .threads
            .get(&msg.receiver)
            .map(|t| t.state)
            .ok_or(SimError::UnknownReceiver(msg.receiver))?;
        if msg.kind == MessageKind::PageFault
            && self.state(msg.payload.faulter)? != ThreadState::Suspended
        {
            return Err(SimError::FaulterNotSuspended(msg.payload.faulter));
        }
        if self.mode == CpuMode::User {
            if self.current != Some(msg.sender) {
                return Err(SimError::SenderNotRunning(msg.sender));
            }
            self.enter_kernel(TrapCause::Syscall)?;
        }
        self.append_trace(EventKind::IpcSend(msg));
        match msg.kind {
            MessageKind::Reply => {
                self.wait_for_message(msg.sender)?;
                Ok(Delivery::Replied)
            }
            MessageKind::PageFault | MessageKind::Reflection => {
                if msg.kind == MessageKind::Reflection {
                    self.wait_for_message(msg.sender)?;
                }
                if receiver_state == ThreadState::BlockedOnReceive {
                    self.set_state(msg.receiver, ThreadState::Ready)?;
                    self.return_to_user(msg.receiver)?;
                    self.receive(msg.receiver, &msg);
                    Ok(Delivery::Delivered)
                } else {
                    Ok(Delivery::Queued)
                }
            }
        }
    }

    /// Records `tid` picking up `msg`.
    pub(crate) fn receive(&mut self, tid: Tid, msg: &Message) {
        self.append_trace(EventKind::IpcReceive {
            tid,
            from: msg.sender,
            kind: msg.kind,
        });
    }
}
