//! Line-oriented scenario files.
//!
//! One statement per line, `#` starts a comment, numbers are decimal or
//! `0x` hex. Declarations must precede their use. See `docs/scenario-format.md`
//! for the grammar.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::address_space::LayoutConfig;
use crate::fault_dispatch::VERDICT_CODES;
use crate::mmu::Marker;
use crate::pagers::{MappingDatabase, MarkerPolicy, PagerBehavior, PagerPolicy};
use crate::schemes::Scheme;
use crate::types::{Access, Asid, Tid};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("line {line}: parse error: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Semantic { line: usize, msg: String },
}

impl ScenarioError {
    pub fn line(&self) -> usize {
        match self {
            ScenarioError::Parse { line, .. } | ScenarioError::Semantic { line, .. } => *line,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclaredRole {
    Applicant,
    RegionMapper,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expectation {
    pub fault: u32,
    /// One of [`VERDICT_CODES`].
    pub verdict: String,
    pub mode_switches: Option<u32>,
    pub context_switches: Option<u32>,
    pub ipc_messages: Option<u32>,
    pub pager_invocations: Option<u32>,
    /// Only checked when running this scheme.
    pub scheme: Option<Scheme>,
}

impl Expectation {
    pub fn has_metrics(&self) -> bool {
        self.mode_switches.is_some()
            || self.context_switches.is_some()
            || self.ipc_messages.is_some()
            || self.pager_invocations.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Layout(LayoutConfig),
    Frames(u32),
    Schemes(Vec<Scheme>),
    Space(Asid),
    Thread {
        tid: Tid,
        asid: Asid,
        role: DeclaredRole,
        pager: Option<Tid>,
    },
    Pager {
        tid: Tid,
        asid: Asid,
        behavior: PagerBehavior,
    },
    Assign {
        asid: Asid,
        rid: u32,
        pager: Tid,
    },
    Refuse {
        asid: Asid,
        rid: u32,
        pager: Tid,
    },
    DbRange {
        asid: Asid,
        start: u64,
        end: u64,
        pager: Tid,
    },
    Access {
        tid: Tid,
        vaddr: u32,
        access: Access,
    },
    Trap {
        tid: Tid,
        vaddr: u32,
        access: Access,
    },
    Dispatch {
        tid: Tid,
    },
    Hold {
        pager: Tid,
    },
    Step {
        pager: Tid,
    },
    Unmap {
        pager: Tid,
        asid: Asid,
        vaddr: u32,
        revoke: bool,
    },
    Expect(Expectation),
}

impl Statement {
    /// Declarations are set up before any script statement runs.
    pub fn is_declaration(&self) -> bool {
        matches!(
            self,
            Statement::Layout(_)
                | Statement::Frames(_)
                | Statement::Schemes(_)
                | Statement::Space(_)
                | Statement::Thread { .. }
                | Statement::Pager { .. }
                | Statement::DbRange { .. }
                | Statement::Expect(_)
        )
    }
}

/// A parsed scenario. Equality ignores source line numbers.
#[derive(Debug, Clone, Default)]
pub struct ScenarioFile {
    pub statements: Vec<Statement>,
    /// Source line of each statement, for diagnostics.
    pub lines: Vec<usize>,
}

impl PartialEq for ScenarioFile {
    fn eq(&self, other: &Self) -> bool {
        self.statements == other.statements
    }
}

impl Eq for ScenarioFile {}

impl ScenarioFile {
    /// Builds a file from statements, numbering them as the serializer would.
    pub fn from_statements(statements: Vec<Statement>) -> Self {
        let lines = (1..=statements.len()).collect();
        Self { statements, lines }
    }

    pub fn layout(&self) -> LayoutConfig {
        self.statements
            .iter()
            .find_map(|s| match s {
                Statement::Layout(l) => Some(*l),
                _ => None,
            })
            .unwrap_or_default()
    }

    pub fn frames(&self) -> Option<u32> {
        self.statements.iter().find_map(|s| match s {
            Statement::Frames(n) => Some(*n),
            _ => None,
        })
    }

    /// Schemes the scenario is meant for; all of them unless restricted.
    /// Schemes the scenario runs under, in canonical order.
    pub fn supported_schemes(&self) -> Vec<Scheme> {
        let listed = self.statements.iter().find_map(|s| match s {
            Statement::Schemes(v) => Some(v),
            _ => None,
        });
        Scheme::ALL
            .into_iter()
            .filter(|s| listed.is_none_or(|v| v.contains(s)))
            .collect()
    }

    pub fn expectations(&self) -> impl Iterator<Item = &Expectation> {
        self.statements.iter().filter_map(|s| match s {
            Statement::Expect(e) => Some(e),
            _ => None,
        })
    }

    pub fn line_of(&self, index: usize) -> usize {
        self.lines.get(index).copied().unwrap_or(0)
    }

    /// Canonical text form; parsing it yields an equal file.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.statements {
            writeln!(out, "{}", StatementDisplay(s)).expect("write to string");
        }
        out
    }
}

impl FromStr for ScenarioFile {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_scenario(s)
    }
}

impl fmt::Display for ScenarioFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

struct StatementDisplay<'a>(&'a Statement);

impl fmt::Display for StatementDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Statement::Layout(l) => write!(
                f,
                "layout user_base={:#x} region_size={:#x} regions={} pages_per_region={}",
                l.user_base, l.region_size, l.region_count, l.pages_per_region
            ),
            Statement::Frames(n) => write!(f, "frames {n}"),
            Statement::Schemes(v) => {
                f.write_str("schemes")?;
                for s in v {
                    write!(f, " {}", s.name())?;
                }
                Ok(())
            }
            Statement::Space(a) => write!(f, "space {a}"),
            Statement::Thread {
                tid,
                asid,
                role,
                pager,
            } => {
                write!(f, "thread {tid} space={asid}")?;
                if *role == DeclaredRole::RegionMapper {
                    f.write_str(" role=region-mapper")?;
                }
                if let Some(p) = pager {
                    write!(f, " pager={p}")?;
                }
                Ok(())
            }
            Statement::Pager {
                tid,
                asid,
                behavior,
            } => {
                write!(f, "pager {tid} space={asid} policy=")?;
                match &behavior.policy {
                    PagerPolicy::AnonymousZeroFill => f.write_str("zero-fill")?,
                    PagerPolicy::Rejecting => f.write_str("rejecting")?,
                    PagerPolicy::FixedBacking(map) => {
                        f.write_str("fixed:")?;
                        for (i, (vpn, frame)) in map.iter().enumerate() {
                            if i > 0 {
                                f.write_str(",")?;
                            }
                            write!(f, "{vpn:#x}={frame}")?;
                        }
                    }
                    PagerPolicy::Reflecting(_) => f.write_str("reflecting")?,
                }
                if let Some(n) = behavior.revoke_after {
                    write!(f, " revoke_after={n}")?;
                }
                match behavior.marker {
                    MarkerPolicy::Zero => {}
                    MarkerPolicy::PageIndex => f.write_str(" marker=page-index")?,
                    MarkerPolicy::Constant(c) => write!(f, " marker=const:{c}")?,
                }
                Ok(())
            }
            Statement::Assign { asid, rid, pager } => {
                write!(f, "assign space={asid} region={rid} pager={pager}")
            }
            Statement::Refuse { asid, rid, pager } => {
                write!(f, "refuse space={asid} region={rid} pager={pager}")
            }
            Statement::DbRange {
                asid,
                start,
                end,
                pager,
            } => write!(
                f,
                "dbrange space={asid} start={start:#x} end={end:#x} pager={pager}"
            ),
            Statement::Access { tid, vaddr, access } => {
                write!(f, "access {tid} {vaddr:#x} {}", access_code(*access))
            }
            Statement::Trap { tid, vaddr, access } => {
                write!(f, "trap {tid} {vaddr:#x} {}", access_code(*access))
            }
            Statement::Dispatch { tid } => write!(f, "dispatch {tid}"),
            Statement::Hold { pager } => write!(f, "hold {pager}"),
            Statement::Step { pager } => write!(f, "step {pager}"),
            Statement::Unmap {
                pager,
                asid,
                vaddr,
                revoke,
            } => {
                write!(f, "unmap pager={pager} space={asid} vaddr={vaddr:#x}")?;
                if *revoke {
                    f.write_str(" revoke")?;
                }
                Ok(())
            }
            Statement::Expect(e) => {
                write!(f, "expect fault={} verdict={}", e.fault, e.verdict)?;
                for (k, v) in [
                    ("mode", e.mode_switches),
                    ("ctx", e.context_switches),
                    ("ipc", e.ipc_messages),
                    ("pagers", e.pager_invocations),
                ] {
                    if let Some(v) = v {
                        write!(f, " {k}={v}")?;
                    }
                }
                if let Some(s) = e.scheme {
                    write!(f, " scheme={}", s.name())?;
                }
                Ok(())
            }
        }
    }
}

fn access_code(a: Access) -> &'static str {
    match a {
        Access::Read => "r",
        Access::Write => "w",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Declared {
    Applicant(Asid),
    RegionMapper(Asid),
    Pager(Asid),
}

struct Parser {
    line: usize,
    statements: Vec<Statement>,
    lines: Vec<usize>,
    spaces: BTreeSet<Asid>,
    threads: BTreeMap<Tid, Declared>,
    mappers: BTreeSet<Asid>,
    dbs: BTreeMap<Asid, MappingDatabase>,
    layout: Option<LayoutConfig>,
    seen_setup: BTreeSet<&'static str>,
    applicants: usize,
}

/// Positional tokens and `key=value` pairs of one line.
struct Args<'a> {
    positional: Vec<&'a str>,
    kv: BTreeMap<&'a str, &'a str>,
    flags: BTreeSet<&'a str>,
}

fn parse_number<T: TryFrom<u64>>(s: &str) -> Option<T> {
    let v = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok()?,
        None => s.parse::<u64>().ok()?,
    };
    T::try_from(v).ok()
}

impl Parser {
    fn parse_err(&self, msg: impl Into<String>) -> ScenarioError {
        ScenarioError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn sem_err(&self, msg: impl Into<String>) -> ScenarioError {
        ScenarioError::Semantic {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn split<'a>(&self, tokens: &[&'a str], flags_ok: &[&str]) -> Result<Args<'a>, ScenarioError> {
        let mut args = Args {
            positional: Vec::new(),
            kv: BTreeMap::new(),
            flags: BTreeSet::new(),
        };
        for &t in tokens {
            if let Some((k, v)) = t.split_once('=') {
                if k.is_empty() || v.is_empty() {
                    return Err(self.parse_err(format!("malformed key=value `{t}`")));
                }
                if args.kv.insert(k, v).is_some() {
                    return Err(self.parse_err(format!("duplicate key `{k}`")));
                }
            } else if flags_ok.contains(&t) {
                args.flags.insert(t);
            } else if args.kv.is_empty() && args.flags.is_empty() {
                args.positional.push(t);
            } else {
                return Err(self.parse_err(format!("unexpected token `{t}`")));
            }
        }
        Ok(args)
    }

    fn check_keys(
        &self,
        args: &Args<'_>,
        required: &[&str],
        optional: &[&str],
    ) -> Result<(), ScenarioError> {
        for k in required {
            if !args.kv.contains_key(k) {
                return Err(self.parse_err(format!("missing `{k}=`")));
            }
        }
        for k in args.kv.keys() {
            if !required.contains(k) && !optional.contains(k) {
                return Err(self.parse_err(format!("unknown key `{k}`")));
            }
        }
        Ok(())
    }

    fn positional(&self, args: &Args<'_>, n: usize) -> Result<(), ScenarioError> {
        if args.positional.len() != n {
            return Err(self.parse_err(format!(
                "expected {n} positional argument(s), got {}",
                args.positional.len()
            )));
        }
        Ok(())
    }

    fn num<T: TryFrom<u64>>(&self, s: &str, what: &str) -> Result<T, ScenarioError> {
        parse_number(s).ok_or_else(|| self.parse_err(format!("bad {what} `{s}`")))
    }

    fn key<T: TryFrom<u64>>(&self, args: &Args<'_>, k: &str) -> Result<T, ScenarioError> {
        self.num(args.kv[k], k)
    }

    fn opt_key<T: TryFrom<u64>>(
        &self,
        args: &Args<'_>,
        k: &str,
    ) -> Result<Option<T>, ScenarioError> {
        args.kv.get(k).map(|v| self.num(v, k)).transpose()
    }

    fn access(&self, s: &str) -> Result<Access, ScenarioError> {
        match s {
            "r" | "R" => Ok(Access::Read),
            "w" | "W" => Ok(Access::Write),
            _ => Err(self.parse_err(format!("access must be r or w, got `{s}`"))),
        }
    }

    fn space(&self, asid: Asid) -> Result<Asid, ScenarioError> {
        if self.spaces.contains(&asid) {
            Ok(asid)
        } else {
            Err(self.sem_err(format!("undeclared space {asid}")))
        }
    }

    fn any_thread(&self, tid: Tid) -> Result<Declared, ScenarioError> {
        self.threads
            .get(&tid)
            .copied()
            .ok_or_else(|| self.sem_err(format!("undeclared thread {tid}")))
    }

    fn pager(&self, tid: Tid) -> Result<Tid, ScenarioError> {
        match self.any_thread(tid)? {
            Declared::Pager(_) => Ok(tid),
            _ => Err(self.sem_err(format!("thread {tid} is not a pager"))),
        }
    }

    fn rid(&self, rid: u32) -> Result<u32, ScenarioError> {
        let count = self.layout.unwrap_or_default().region_count;
        if rid < count {
            Ok(rid)
        } else {
            Err(self.sem_err(format!("region {rid} out of range (count {count})")))
        }
    }

    fn new_tid(&self, tid: Tid) -> Result<Tid, ScenarioError> {
        if tid == Tid::KERNEL {
            return Err(self.sem_err("tid 0 is reserved for the kernel"));
        }
        if self.threads.contains_key(&tid) {
            return Err(self.sem_err(format!("thread {tid} declared twice")));
        }
        Ok(tid)
    }

    fn setup_once(&mut self, what: &'static str) -> Result<(), ScenarioError> {
        if !self.spaces.is_empty() {
            return Err(self.sem_err(format!("`{what}` must precede all space declarations")));
        }
        if !self.seen_setup.insert(what) {
            return Err(self.sem_err(format!("`{what}` given twice")));
        }
        Ok(())
    }

    fn behavior(&self, args: &Args<'_>) -> Result<PagerBehavior, ScenarioError> {
        let policy = match args.kv["policy"] {
            "zero-fill" => PagerPolicy::AnonymousZeroFill,
            "rejecting" => PagerPolicy::Rejecting,
            p => match p.strip_prefix("fixed:") {
                Some(list) => {
                    let mut map = BTreeMap::new();
                    for item in list.split(',').filter(|_| !list.is_empty()) {
                        let (vpn, frame) = item
                            .split_once('=')
                            .ok_or_else(|| self.parse_err(format!("bad backing entry `{item}`")))?;
                        let vpn: u32 = self.num(vpn, "page number")?;
                        let frame: u32 = self.num(frame, "frame")?;
                        if map.insert(vpn, frame).is_some() {
                            return Err(self.sem_err(format!("page {vpn:#x} backed twice")));
                        }
                    }
                    PagerPolicy::FixedBacking(map)
                }
                None => return Err(self.parse_err(format!("unknown policy `{p}`"))),
            },
        };
        let marker = match args.kv.get("marker").copied() {
            None | Some("zero") => MarkerPolicy::Zero,
            Some("page-index") => MarkerPolicy::PageIndex,
            Some(m) => match m.strip_prefix("const:") {
                Some(v) => {
                    let v: u32 = self.num(v, "marker")?;
                    Marker::new(v).map_err(|e| self.sem_err(e.to_string()))?;
                    MarkerPolicy::Constant(v)
                }
                None => return Err(self.parse_err(format!("unknown marker policy `{m}`"))),
            },
        };
        let revoke_after = self.opt_key::<u32>(args, "revoke_after")?;
        if revoke_after == Some(0) {
            return Err(self.sem_err("revoke_after must be at least 1"));
        }
        Ok(PagerBehavior {
            policy,
            revoke_after,
            marker,
        })
    }

    fn statement(&mut self, tokens: &[&str]) -> Result<Statement, ScenarioError> {
        let (kw, rest) = tokens.split_first().expect("non-empty line");
        let stmt = match *kw {
            "layout" => {
                let a = self.split(rest, &[])?;
                self.positional(&a, 0)?;
                self.check_keys(
                    &a,
                    &["user_base", "region_size", "regions", "pages_per_region"],
                    &[],
                )?;
                self.setup_once("layout")?;
                let l = LayoutConfig {
                    user_base: self.key(&a, "user_base")?,
                    region_size: self.key(&a, "region_size")?,
                    region_count: self.key(&a, "regions")?,
                    pages_per_region: self.key(&a, "pages_per_region")?,
                };
                l.validate().map_err(|e| self.sem_err(e.to_string()))?;
                self.layout = Some(l);
                Statement::Layout(l)
            }
            "frames" => {
                let a = self.split(rest, &[])?;
                self.positional(&a, 1)?;
                self.check_keys(&a, &[], &[])?;
                self.setup_once("frames")?;
                Statement::Frames(self.num(a.positional[0], "frame count")?)
            }
            "schemes" => {
                let a = self.split(rest, &[])?;
                self.check_keys(&a, &[], &[])?;
                if a.positional.is_empty() {
                    return Err(self.parse_err("`schemes` needs at least one scheme"));
                }
                self.setup_once("schemes")?;
                let mut v = Vec::new();
                for s in &a.positional {
                    let s: Scheme = s.parse().map_err(|e: String| self.parse_err(e))?;
                    if v.contains(&s) {
                        return Err(self.sem_err(format!("scheme `{}` listed twice", s.name())));
                    }
                    v.push(s);
                }
                Statement::Schemes(v)
            }
            "space" => {
                let a = self.split(rest, &[])?;
                self.positional(&a, 1)?;
                self.check_keys(&a, &[], &[])?;
                let asid = Asid(self.num(a.positional[0], "space id")?);
                if !self.spaces.insert(asid) {
                    return Err(self.sem_err(format!("space {asid} declared twice")));
                }
                Statement::Space(asid)
            }
            "thread" => {
                let a = self.split(rest, &[])?;
                self.positional(&a, 1)?;
                self.check_keys(&a, &["space"], &["role", "pager"])?;
                let tid = self.new_tid(Tid(self.num(a.positional[0], "tid")?))?;
                let asid = self.space(Asid(self.key(&a, "space")?))?;
                let role = match a.kv.get("role").copied() {
                    None | Some("applicant") => DeclaredRole::Applicant,
                    Some("region-mapper") => DeclaredRole::RegionMapper,
                    Some(r) => return Err(self.parse_err(format!("unknown role `{r}`"))),
                };
                let pager = match self.opt_key::<u32>(&a, "pager")? {
                    Some(p) => Some(self.pager(Tid(p))?),
                    None => None,
                };
                match role {
                    DeclaredRole::Applicant => {
                        self.applicants += 1;
                        self.threads.insert(tid, Declared::Applicant(asid));
                    }
                    DeclaredRole::RegionMapper => {
                        if pager.is_some() {
                            return Err(self.sem_err("a region mapper has no pager"));
                        }
                        if !self.mappers.insert(asid) {
                            return Err(
                                self.sem_err(format!("space {asid} already has a region mapper"))
                            );
                        }
                        self.threads.insert(tid, Declared::RegionMapper(asid));
                    }
                }
                Statement::Thread {
                    tid,
                    asid,
                    role,
                    pager,
                }
            }
            "pager" => {
                let a = self.split(rest, &[])?;
                self.positional(&a, 1)?;
                self.check_keys(&a, &["space", "policy"], &["revoke_after", "marker"])?;
                let tid = self.new_tid(Tid(self.num(a.positional[0], "tid")?))?;
                let asid = self.space(Asid(self.key(&a, "space")?))?;
                let behavior = self.behavior(&a)?;
                self.threads.insert(tid, Declared::Pager(asid));
                Statement::Pager {
                    tid,
                    asid,
                    behavior,
                }
            }
            "assign" | "refuse" => {
                let a = self.split(rest, &[])?;
                self.positional(&a, 0)?;
                self.check_keys(&a, &["space", "region", "pager"], &[])?;
                let asid = self.space(Asid(self.key(&a, "space")?))?;
                let rid = self.rid(self.key(&a, "region")?)?;
                let pager = self.pager(Tid(self.key(&a, "pager")?))?;
                if *kw == "assign" {
                    Statement::Assign { asid, rid, pager }
                } else {
                    Statement::Refuse { asid, rid, pager }
                }
            }
            "dbrange" => {
                let a = self.split(rest, &[])?;
                self.positional(&a, 0)?;
                self.check_keys(&a, &["space", "start", "end", "pager"], &[])?;
                let asid = self.space(Asid(self.key(&a, "space")?))?;
                let start: u64 = self.key(&a, "start")?;
                let end: u64 = self.key(&a, "end")?;
                let pager = self.pager(Tid(self.key(&a, "pager")?))?;
                self.dbs
                    .entry(asid)
                    .or_default()
                    .insert(start, end, pager)
                    .map_err(|e| self.sem_err(e.to_string()))?;
                Statement::DbRange {
                    asid,
                    start,
                    end,
                    pager,
                }
            }
            "access" | "trap" => {
                let a = self.split(rest, &[])?;
                self.positional(&a, 3)?;
                self.check_keys(&a, &[], &[])?;
                let tid = Tid(self.num(a.positional[0], "tid")?);
                self.any_thread(tid)?;
                let vaddr = self.num(a.positional[1], "address")?;
                let access = self.access(a.positional[2])?;
                if *kw == "access" {
                    Statement::Access { tid, vaddr, access }
                } else {
                    Statement::Trap { tid, vaddr, access }
                }
            }
            "dispatch" => {
                let a = self.split(rest, &[])?;
                self.positional(&a, 1)?;
                self.check_keys(&a, &[], &[])?;
                let tid = Tid(self.num(a.positional[0], "tid")?);
                self.any_thread(tid)?;
                Statement::Dispatch { tid }
            }
            "hold" | "step" => {
                let a = self.split(rest, &[])?;
                self.positional(&a, 1)?;
                self.check_keys(&a, &[], &[])?;
                let pager = self.pager(Tid(self.num(a.positional[0], "tid")?))?;
                if *kw == "hold" {
                    Statement::Hold { pager }
                } else {
                    Statement::Step { pager }
                }
            }
            "unmap" => {
                let a = self.split(rest, &["revoke"])?;
                self.positional(&a, 0)?;
                self.check_keys(&a, &["pager", "space", "vaddr"], &[])?;
                let pager = self.pager(Tid(self.key(&a, "pager")?))?;
                let asid = self.space(Asid(self.key(&a, "space")?))?;
                Statement::Unmap {
                    pager,
                    asid,
                    vaddr: self.key(&a, "vaddr")?,
                    revoke: a.flags.contains("revoke"),
                }
            }
            "expect" => {
                let a = self.split(rest, &[])?;
                self.positional(&a, 0)?;
                self.check_keys(
                    &a,
                    &["fault", "verdict"],
                    &["mode", "ctx", "ipc", "pagers", "scheme"],
                )?;
                let verdict = a.kv["verdict"];
                if !VERDICT_CODES.contains(&verdict) {
                    return Err(self.parse_err(format!("unknown verdict `{verdict}`")));
                }
                let scheme = match a.kv.get("scheme") {
                    Some(s) => Some(s.parse().map_err(|e: String| self.parse_err(e))?),
                    None => None,
                };
                Statement::Expect(Expectation {
                    fault: self.key(&a, "fault")?,
                    verdict: verdict.to_string(),
                    mode_switches: self.opt_key(&a, "mode")?,
                    context_switches: self.opt_key(&a, "ctx")?,
                    ipc_messages: self.opt_key(&a, "ipc")?,
                    pager_invocations: self.opt_key(&a, "pagers")?,
                    scheme,
                })
            }
            other => return Err(self.parse_err(format!("unknown statement `{other}`"))),
        };
        Ok(stmt)
    }
}

/// Parses and validates a scenario.
pub fn parse_scenario(text: &str) -> Result<ScenarioFile, ScenarioError> {
    let mut p = Parser {
        line: 0,
        statements: Vec::new(),
        lines: Vec::new(),
        spaces: BTreeSet::new(),
        threads: BTreeMap::new(),
        mappers: BTreeSet::new(),
        dbs: BTreeMap::new(),
        layout: None,
        seen_setup: BTreeSet::new(),
        applicants: 0,
    };
    let mut total = 0;
    for (i, raw) in text.lines().enumerate() {
        total = i + 1;
        p.line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = body.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let stmt = p.statement(&tokens)?;
        p.statements.push(stmt);
        p.lines.push(i + 1);
    }
    if p.applicants == 0 {
        return Err(ScenarioError::Semantic {
            line: total,
            msg: "no threads declared".into(),
        });
    }
    Ok(ScenarioFile {
        statements: p.statements,
        lines: p.lines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "layout user_base=0 region_size=0x4000 regions=8 pages_per_region=4\n";

    #[test]
    fn empty_file() {
        assert_eq!(
            parse_scenario(""),
            Err(ScenarioError::Semantic {
                line: 0,
                msg: "no threads declared".into()
            })
        );
        assert_eq!(
            parse_scenario("# only a comment\n\n")
                .unwrap_err()
                .to_string(),
            "line 2: no threads declared"
        );
    }

    #[test]
    fn minimal_round_trip() {
        let text = format!(
            "{SMALL}space 1\nspace 2\npager 10 space=2 policy=fixed:0x1=5,0x2=6 revoke_after=2 marker=const:7\n\
             thread 1 space=1 pager=10 # applicant\nassign space=1 region=0 pager=10\n\
             access 1 0x1000 r\nunmap pager=10 space=1 vaddr=0x1000 revoke\n\
             expect fault=0 verdict=DISPATCHED mode=4 ctx=2 scheme=proposed\n"
        );
        let f = parse_scenario(&text).unwrap();
        assert_eq!(f.statements.len(), 9);
        assert_eq!(f.line_of(4), 5);
        let again = parse_scenario(&f.to_text()).unwrap();
        assert_eq!(again, f);
        assert_eq!(again.to_text(), f.to_text());
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let cases = [
            ("space 1\nthread 1 space=2\n", 2, "undeclared space 2"),
            (
                "space 1\nthread 1 space=1\nassign space=1 region=0 pager=1\n",
                3,
                "thread 1 is not a pager",
            ),
            ("space 1\nspace 1\n", 2, "space 1 declared twice"),
            (
                "space 1\nthread 0 space=1\n",
                2,
                "tid 0 is reserved for the kernel",
            ),
            (
                "space 1\nlayout user_base=0 region_size=0x4000 regions=8 pages_per_region=4\n",
                2,
                "`layout` must precede all space declarations",
            ),
        ];
        for (text, line, msg) in cases {
            assert_eq!(
                parse_scenario(text),
                Err(ScenarioError::Semantic {
                    line,
                    msg: msg.into()
                }),
                "{text}"
            );
        }
    }

    #[test]
    fn parse_errors() {
        for (text, line) in [
            ("bogus\n", 1),
            ("space x\n", 1),
            ("space 1\nthread 1 space=1\naccess 1 0x10 x\n", 3),
            ("space 1\nthread 1 space=1 colour=red\n", 2),
            (
                "space 1\nthread 1 space=1\nexpect fault=0 verdict=MAYBE\n",
                3,
            ),
            ("schemes warp\n", 1),
        ] {
            match parse_scenario(text) {
                Err(ScenarioError::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn overlapping_db_ranges_rejected() {
        let text = "space 1\npager 5 space=1 policy=zero-fill\nthread 1 space=1\n\
                    dbrange space=1 start=0x0 end=0x2000 pager=5\n\
                    dbrange space=1 start=0x1000 end=0x3000 pager=5\n";
        assert_eq!(parse_scenario(text).unwrap_err().line(), 5);
    }

    #[test]
    fn region_out_of_range() {
        let text = format!("{SMALL}space 1\npager 5 space=1 policy=zero-fill\nthread 1 space=1\nassign space=1 region=8 pager=5\n");
        assert_eq!(parse_scenario(&text).unwrap_err().line(), 5);
    }

    #[test]
    fn hex_and_decimal() {
        assert_eq!(parse_number::<u32>("0x10"), Some(16));
        assert_eq!(parse_number::<u32>("16"), Some(16));
        assert_eq!(parse_number::<u32>("0x1_0"), None);
        assert_eq!(parse_number::<u32>("0x100000000"), None);
    }
}
