//! Deterministic simulator of microkernel page-fault dispatch.
//!
//! A fault in a user-range address is routed to the manager of the region it
//! falls in, looked up in a per-address-space region table. The same
//! scenario can be replayed under a monolithic kernel, a classic single-pager
//! microkernel, a microkernel with a per-process region mapper, and the
//! region-dispatch kernel, and the traces compared by mode switches, context
//! switches, messages and pager invocations.
//!
//! ```
//! use regionpager_core::{parse_scenario, run_scenario, Scheme};
//!
//! let text = "space 1\nspace 2\npager 10 space=2 policy=zero-fill\nthread 1 space=1\n\
//!             assign space=1 region=0 pager=10\naccess 1 0x1000 r\n";
//! let scenario = parse_scenario(text).unwrap();
//! let run = run_scenario(Scheme::ProposedRegionDispatch, &scenario).unwrap();
//! let m = run.cycle(0).unwrap();
//! assert_eq!((m.mode_switches, m.context_switches), (4, 2));
//! ```

pub mod address_space;
pub mod claims;
pub mod fault_dispatch;
pub mod kernel;
pub mod mmu;
pub mod pagers;
pub mod scenario;
pub mod schemes;
pub mod sim;
pub mod types;
pub mod workload;

pub use address_space::{
    region_id_of, region_id_of_shift, AddressSpace, ContractState, LayoutConfig, LayoutError,
    RegionLookup, RegionSlot, RegionTable, MANAGER_ID_BYTES,
};
pub use claims::{reproduce_all, ClaimEntry, ClaimError, ClaimOutcome, ReproduceOptions, CLAIMS};
pub use fault_dispatch::{classify, Classification, FaultRecord, FaultVerdict, GpReason};
pub use kernel::{AccountingRule, Kernel, KernelError};
pub use mmu::{
    FaultEvent, Marker, MemoryAccess, MmuError, PageTable, PageTableEntry, Translation,
    UnmapOutcome,
};
pub use pagers::{
    FrameAllocator, MappingDatabase, MarkerPolicy, PagerAction, PagerBehavior, PagerError,
    PagerPolicy,
};
pub use scenario::{parse_scenario, ScenarioError, ScenarioFile, Statement};
pub use schemes::{
    check_expectations, cycle_metrics, overhead_report, run_scenario, run_scenario_with,
    CycleMetrics, MetricsError, OverheadReport, ReportFormat, Run, RunOptions, Scheme, SchemeError,
};
pub use sim::{Charge, EventKind, Trace, TraceEvent};
pub use types::{Access, Asid, Tid, PAGE_SIZE};
pub use workload::{resolved_workload, WorkloadConfig};
