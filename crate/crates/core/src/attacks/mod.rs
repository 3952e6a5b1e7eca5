// SPDX-License-Identifier: Apache-2.0

//! Key recovery through primary outputs only.
//!
//! The pipeline runs three phases against a [`ScanOracle`]:
//!
//! 1. a probe that checks whether M1a shifting really loads the regular
//!    cells (it does under DFS, not under MSSD); without it nothing below is
//!    trustworthy, so a failed probe ends the attack;
//! 2. per-output SAT attacks that treat secure cells as key inputs and
//!    regular cells as free inputs;
//! 3. shift-and-leak: a key bit is moved d positions into a leak cell whose
//!    value a leak condition makes visible on an output.

mod plan;
mod preprocess;

use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atpg::{cone_sources, gen_leak_condition, LeakCondition, Source, SourceRoles};
use crate::chip::{Cell, ModeInputs, ScanChainLayout, ScanOracle, StepOutput};
use crate::locking::{Key, LockedNetlist};
use crate::netlist::Cone;

pub use plan::{
    d_aware_roles, execute_plan, landings, plan_shift, plan_shift_via, rc_preload_sequence, shifted_roles, Infeasible,
    ShiftPlan,
};
pub use preprocess::{dip_loop, preprocess, probe_scan_control, DipOutcome};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AttackError {
    #[error("observed output {observed} is outside the decode map {expected:?}")]
    DecodeDomain { observed: bool, expected: [bool; 2] },
}

/// Counts pin operations passed through to an inner oracle.
pub struct Counting<'a> {
    inner: &'a mut dyn ScanOracle,
    pub queries: u64,
}

impl<'a> Counting<'a> {
    pub fn new(inner: &'a mut dyn ScanOracle) -> Self {
        Counting { inner, queries: 0 }
    }
}

impl ScanOracle for Counting<'_> {
    fn power_on(&mut self, mode: ModeInputs) {
        self.queries += 1;
        self.inner.power_on(mode);
    }

    fn step(&mut self, mode: ModeInputs, pi: &[bool], si: &[bool]) -> StepOutput {
        self.queries += 1;
        self.inner.step(mode, pi, si)
    }

    fn observe(&mut self, mode: ModeInputs, pi: &[bool]) -> Vec<bool> {
        self.queries += 1;
        self.inner.observe(mode, pi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BitStatus {
    Preprocessed,
    Leaked,
    Unrecovered,
}

impl fmt::Display for BitStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BitStatus::Preprocessed => "preprocessed",
            BitStatus::Leaked => "leaked",
            BitStatus::Unrecovered => "unrecovered",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitOutcome {
    pub index: usize,
    pub status: BitStatus,
    pub bit: Option<bool>,
    /// Pin operations spent by the step that produced this outcome.
    pub queries: u64,
    pub method: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub probe: f64,
    pub preprocess: f64,
    pub leak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub bits: Vec<BitOutcome>,
    pub probe_passed: bool,
    pub cones_attacked: usize,
    pub cones_unresolved: usize,
    pub total_queries: u64,
    /// Wall-clock seconds per phase.
    pub seconds: PhaseTimes,
}

impl AttackReport {
    pub fn recovered(&self) -> usize {
        self.bits.iter().filter(|b| b.bit.is_some()).count()
    }

    pub fn count(&self, status: BitStatus) -> usize {
        self.bits.iter().filter(|b| b.status == status).count()
    }

    pub fn recovered_key(&self) -> Vec<Option<bool>> {
        self.bits.iter().map(|b| b.bit).collect()
    }

    /// Indices of recovered bits that disagree with `key`.
    pub fn false_bits(&self, key: &Key) -> Vec<usize> {
        self.bits.iter().filter(|b| b.bit.is_some_and(|v| v != key.bit(b.index))).map(|b| b.index).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub seed: u64,
    /// Run the SAT phase before shift-and-leak.
    pub preprocess: bool,
    /// Random regular-cell loads tried by the scan-control probe.
    pub probe_patterns: usize,
    /// Upper bound on DIP iterations per output cone.
    pub dip_iterations: usize,
}

/// Default bound on DIP iterations per output cone.
pub const DEFAULT_DIP_CAP: usize = 10_000;

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig { seed: 0, preprocess: true, probe_patterns: 16, dip_iterations: DEFAULT_DIP_CAP }
    }
}

/// Static attacker view shared by the phases.
pub(crate) struct View<'a> {
    pub locked: &'a LockedNetlist,
    pub layout: &'a ScanChainLayout,
    pub functional: Vec<usize>,
    pub cones: Vec<Cone>,
}

impl<'a> View<'a> {
    pub fn new(locked: &'a LockedNetlist, layout: &'a ScanChainLayout) -> Self {
        let n = locked.netlist();
        View {
            locked,
            layout,
            functional: locked.functional_inputs(),
            cones: n.outputs().iter().map(|&o| n.fanin_cone(o)).collect(),
        }
    }

    /// The scan cell a source is read from, if any.
    pub fn cell_of(&self, s: Source) -> Option<Cell> {
        match s {
            Source::Flop(f) => Some(Cell::Rc(f)),
            Source::Input(p) => self.locked.key_index_of_input(p).map(Cell::Sc),
        }
    }

    /// Roles when every regular cell and functional PI is controllable and
    /// secure cells are unknown unless in `known`.
    pub fn static_roles(&self, cone: &Cone, leak: Source, known: &BTreeMap<usize, bool>) -> SourceRoles {
        let mut roles = SourceRoles::default();
        for s in cone_sources(cone) {
            if s == leak {
                continue;
            }
            match self.cell_of(s) {
                Some(Cell::Sc(k)) => match known.get(&k) {
                    Some(&b) => {
                        roles.known.insert(s, b);
                    }
                    None => {
                        roles.unknown.insert(s);
                    }
                },
                _ => {
                    roles.controllable.insert(s);
                }
            }
        }
        roles
    }
}

fn outcome(index: usize, status: BitStatus, bit: Option<bool>, queries: u64, method: String) -> BitOutcome {
    BitOutcome { index, status, bit, queries, method }
}

/// Full two-phase attack. Every bit reported as recovered comes from oracle
/// observations; nothing is guessed.
pub fn run_full_attack(
    oracle: &mut dyn ScanOracle,
    locked: &LockedNetlist,
    layout: &ScanChainLayout,
    config: &AttackConfig,
) -> AttackReport {
    let view = View::new(locked, layout);
    let k = locked.key_len();
    let mut oracle = Counting::new(oracle);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut bits: Vec<BitOutcome> =
        (0..k).map(|i| outcome(i, BitStatus::Unrecovered, None, 0, "none".into())).collect();
    let mut seconds = PhaseTimes::default();
    let report = |bits: Vec<BitOutcome>, probe_passed, cones_attacked, cones_unresolved, queries, seconds| {
        AttackReport { bits, probe_passed, cones_attacked, cones_unresolved, total_queries: queries, seconds }
    };

    let t = Instant::now();
    let probe_passed = preprocess::probe_inner(&mut oracle, &view, config.probe_patterns, &mut rng);
    seconds.probe = secs(t.elapsed());
    if !probe_passed {
        return report(bits, false, 0, 0, oracle.queries, seconds);
    }

    let mut known: BTreeMap<usize, bool> = BTreeMap::new();
    let (mut attacked, mut unresolved) = (0, 0);
    if config.preprocess {
        let t = Instant::now();
        let pre = preprocess::preprocess_inner(&mut oracle, &view, &known, config.dip_iterations);
        attacked = pre.attacked;
        unresolved = pre.unresolved;
        for (idx, (bit, queries, po)) in pre.bits {
            known.insert(idx, bit);
            bits[idx] = outcome(idx, BitStatus::Preprocessed, Some(bit), queries, format!("sat-dip po={po}"));
        }
        seconds.preprocess = secs(t.elapsed());
    }

    let t = Instant::now();
    leak_phase(&mut oracle, &view, &mut known, &mut bits);
    seconds.leak = secs(t.elapsed());
    let queries = oracle.queries;
    report(bits, true, attacked, unresolved, queries, seconds)
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Leak-cell candidates: regular cells from the scan-out end inward, all
/// chains interleaved by distance from scan-out.
fn leak_candidates(layout: &ScanChainLayout) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (c, chain) in layout.chains().iter().enumerate() {
        for (p, cell) in chain.iter().enumerate() {
            if let Cell::Rc(f) = *cell {
                out.push((chain.len() - 1 - p, c, f));
            }
        }
    }
    out.sort();
    out
}

fn leak_phase(oracle: &mut Counting<'_>, view: &View<'_>, known: &mut BTreeMap<usize, bool>, bits: &mut [BitOutcome]) {
    let candidates = leak_candidates(view.layout);
    // (key, leak flop, output, landing flop) → size of `known` when it last failed
    let mut failed: BTreeMap<(usize, usize, usize, usize), usize> = BTreeMap::new();
    loop {
        let mut progress = leak_pass(oracle, view, &candidates, known, bits, &mut failed, false);
        if !progress {
            progress = leak_pass(oracle, view, &candidates, known, bits, &mut failed, true);
        }
        if !progress {
            break;
        }
    }
}

/// One sweep over leak candidates. Without `realign`, plans shift the key bit
/// straight into the leak cell; with it, only plans that land the bit earlier
/// and carry it on through M1a are tried.
fn leak_pass(
    oracle: &mut Counting<'_>,
    view: &View<'_>,
    candidates: &[(usize, usize, usize)],
    known: &mut BTreeMap<usize, bool>,
    bits: &mut [BitOutcome],
    failed: &mut BTreeMap<(usize, usize, usize, usize), usize>,
    realign: bool,
) -> bool {
    let n = view.locked.netlist();
    let mut progress = false;
    for &(_, c, f) in candidates {
        let lc = Cell::Rc(f);
        let pl = view.layout.position(lc).pos;
        let chain = &view.layout.chains()[c];
        let leak = Source::Flop(f);
        for (po, cone) in view.cones.iter().enumerate() {
            if !cone.contains_flop(f) {
                continue;
            }
            let mut static_cond: Option<(usize, Option<LeakCondition>)> = None;
            for ps in (0..pl).rev() {
                let Cell::Sc(k) = chain[ps] else { continue };
                if known.contains_key(&k) {
                    continue;
                }
                let mut found: Option<(ShiftPlan, &str)> = None;
                if !realign {
                    if static_cond.as_ref().is_none_or(|(size, _)| *size != known.len()) {
                        let roles = view.static_roles(cone, leak, known);
                        static_cond = Some((known.len(), gen_leak_condition(n, cone, leak, &roles)));
                    }
                    found = static_cond
                        .as_ref()
                        .and_then(|(_, c)| c.as_ref())
                        .and_then(|cond| plan_shift(view.locked, view.layout, k, lc, cond, known).ok())
                        .map(|p| (p, "static"));
                    if found.is_none() && failed.get(&(k, f, po, f)) != Some(&known.len()) {
                        let roles = d_aware_roles(view.locked, view.layout, cone, leak, pl - ps, known);
                        found = gen_leak_condition(n, cone, leak, &roles)
                            .and_then(|cond| plan_shift(view.locked, view.layout, k, lc, &cond, known).ok())
                            .map(|p| (p, "shifted"));
                        if found.is_none() {
                            failed.insert((k, f, po, f), known.len());
                        }
                    }
                } else {
                    for (landing, d, e) in landings(view.layout, k, lc) {
                        let Cell::Rc(m) = landing else { continue };
                        if e == 0 || failed.get(&(k, f, po, m)) == Some(&known.len()) {
                            continue;
                        }
                        let roles = shifted_roles(view.locked, view.layout, cone, leak, d, e, known);
                        found = gen_leak_condition(n, cone, leak, &roles)
                            .and_then(|cond| plan_shift_via(view.locked, view.layout, k, landing, lc, &cond, known).ok())
                            .map(|p| (p, "realigned"));
                        if found.is_some() {
                            break;
                        }
                        failed.insert((k, f, po, m), known.len());
                    }
                }
                let Some((plan, method)) = found else { continue };
                let before = oracle.queries;
                if let Ok(bit) = execute_plan(oracle, view.locked, view.layout, &plan) {
                    known.insert(k, bit);
                    bits[k] = outcome(
                        k,
                        BitStatus::Leaked,
                        Some(bit),
                        oracle.queries - before,
                        format!(
                            "shift-and-leak lc={} po={} d={} e={} cond={method}",
                            n.name(n.flops()[f].q),
                            n.name(n.outputs()[po]),
                            plan.d,
                            plan.realign.len()
                        ),
                    );
                    progress = true;
                    if realign {
                        return true;
                    }
                }
            }
        }
    }
    progress
}
