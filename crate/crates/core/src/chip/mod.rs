// SPDX-License-Identifier: Apache-2.0

//! Pin-level model of a locked chip behind a secure scan architecture.
//!
//! Two variants are simulated. `Dfs` bypasses secure cells in M1a and blocks
//! scan read-out with a sticky flag once Test rises. `Mssd` routes a
//! shift-disable signal to every scan mux and gates the regular-cell clock for
//! one cycle on entry into M0 from M2.

mod layout;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::locking::{Key, LockedDesign, LockedNetlist};
use crate::netlist::Netlist;

pub use layout::{stitch, Cell, CellPos, ScPlacement, ScanChainLayout};

/// Scan-out value driven while read-out is blocked.
pub const MASK_VALUE: bool = true;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChipError {
    #[error("cannot build {requested} scan chains from {cells} cells")]
    ChainCount { requested: usize, cells: usize },
    #[error("invalid scan layout: {0}")]
    Layout(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    M0,
    M1a,
    M1b,
    M2,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::M0 => "M0",
            Mode::M1a => "M1a",
            Mode::M1b => "M1b",
            Mode::M2 => "M2",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeInputs {
    pub test: bool,
    pub se: bool,
}

impl ModeInputs {
    pub const M0: ModeInputs = ModeInputs { test: false, se: false };
    pub const M1A: ModeInputs = ModeInputs { test: false, se: true };
    pub const M1B: ModeInputs = ModeInputs { test: true, se: false };
    pub const M2: ModeInputs = ModeInputs { test: true, se: true };

    pub fn mode(self) -> Mode {
        match (self.test, self.se) {
            (false, false) => Mode::M0,
            (false, true) => Mode::M1a,
            (true, false) => Mode::M1b,
            (true, true) => Mode::M2,
        }
    }
}

impl From<Mode> for ModeInputs {
    fn from(m: Mode) -> Self {
        match m {
            Mode::M0 => ModeInputs::M0,
            Mode::M1a => ModeInputs::M1A,
            Mode::M1b => ModeInputs::M1B,
            Mode::M2 => ModeInputs::M2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefenseVariant {
    Dfs,
    Mssd,
}

impl fmt::Display for DefenseVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DefenseVariant::Dfs => "dfs",
            DefenseVariant::Mssd => "mssd",
        })
    }
}

/// Shift-disable value of the MSSD block.
pub fn sd_value(test: bool, se: bool, test_stable: bool) -> bool {
    test && se && test_stable
}

/// What an attacker can do with a working chip: drive pins, pulse the clock,
/// and read outputs.
pub trait ScanOracle {
    /// Power-on reset with the mode pins held at `mode`.
    fn power_on(&mut self, mode: ModeInputs);
    /// One clock pulse. `pi` covers the functional inputs, `si` one bit per chain.
    /// Outputs are sampled before the edge.
    fn step(&mut self, mode: ModeInputs, pi: &[bool], si: &[bool]) -> StepOutput;
    /// Change the mode pins and PIs without clocking, then read the POs.
    fn observe(&mut self, mode: ModeInputs, pi: &[bool]) -> Vec<bool>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutput {
    pub po: Vec<bool>,
    pub so: Vec<bool>,
    /// Whether scan-out was replaced by the mask value.
    pub masked: bool,
}

/// One pin operation, for the optional session trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub op: TraceOp,
    pub mode: Mode,
    pub pi: String,
    pub si: String,
    pub po: String,
    pub so: String,
    pub masked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceOp {
    PowerOn,
    Step,
    Observe,
}

fn bits(v: &[bool]) -> String {
    v.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Simulated working chip with a hidden key.
#[derive(Debug, Clone)]
pub struct ChipSession {
    netlist: Netlist,
    key: Key,
    layout: ScanChainLayout,
    variant: DefenseVariant,
    key_inputs: Vec<usize>,
    functional_inputs: Vec<usize>,
    rc: Vec<bool>,
    sc: Vec<bool>,
    prev_test: bool,
    /// DFS read-out block, set by any rising Test edge until power-on.
    srb: bool,
    /// MSSD transition detector: Test has risen since power-on.
    test_rose: bool,
    last_clocked: Option<Mode>,
    cg_countdown: u8,
    steps: u64,
    observes: u64,
    trace: Option<Vec<TraceRecord>>,
}

/// Powers on a chip for `design` in `mode`.
pub fn boot(design: &LockedDesign, layout: ScanChainLayout, variant: DefenseVariant, mode: ModeInputs) -> ChipSession {
    ChipSession::new(&design.locked, design.hidden_key().clone(), layout, variant, mode)
}

impl ChipSession {
    pub fn new(
        locked: &LockedNetlist,
        key: Key,
        layout: ScanChainLayout,
        variant: DefenseVariant,
        mode: ModeInputs,
    ) -> ChipSession {
        assert_eq!(key.len(), locked.key_len(), "key length");
        assert_eq!(layout.flop_count(), locked.netlist().flops().len(), "layout flop count");
        assert_eq!(layout.key_count(), locked.key_len(), "layout key count");
        let mut s = ChipSession {
            netlist: locked.netlist().clone(),
            key_inputs: (0..locked.key_len()).map(|k| locked.key_input_position(k)).collect(),
            functional_inputs: locked.functional_inputs(),
            rc: Vec::new(),
            sc: Vec::new(),
            key,
            layout,
            variant,
            prev_test: mode.test,
            srb: false,
            test_rose: false,
            last_clocked: None,
            cg_countdown: 0,
            steps: 0,
            observes: 0,
            trace: None,
        };
        s.reset(mode);
        s
    }

    fn reset(&mut self, mode: ModeInputs) {
        self.rc = vec![false; self.layout.flop_count()];
        self.sc = vec![false; self.layout.key_count()];
        self.prev_test = mode.test;
        self.srb = false;
        self.test_rose = false;
        self.last_clocked = None;
        self.cg_countdown = 0;
    }

    pub fn variant(&self) -> DefenseVariant {
        self.variant
    }

    pub fn layout(&self) -> &ScanChainLayout {
        &self.layout
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// The trace as newline-delimited JSON.
    pub fn trace_ndjson(&self) -> String {
        let mut out = String::new();
        for r in self.trace() {
            out.push_str(&serde_json::to_string(r).expect("trace records serialise"));
            out.push('\n');
        }
        out
    }

    /// (clock pulses, clockless observations) since creation.
    pub fn query_counts(&self) -> (u64, u64) {
        (self.steps, self.observes)
    }

    /// Simulator introspection for tests; not reachable through pins.
    pub fn cell_value(&self, cell: Cell) -> bool {
        match cell {
            Cell::Rc(f) => self.rc[f],
            Cell::Sc(k) => self.sc[k],
        }
    }

    pub fn set_cell_value(&mut self, cell: Cell, value: bool) {
        match cell {
            Cell::Rc(f) => self.rc[f] = value,
            Cell::Sc(k) => self.sc[k] = value,
        }
    }

    /// Simulator introspection: cell contents per chain, scan-in side first.
    pub fn chain_contents(&self) -> Vec<Vec<bool>> {
        self.layout.chains().iter().map(|c| c.iter().map(|&x| self.cell_value(x)).collect()).collect()
    }

    pub fn cg_countdown(&self) -> u8 {
        self.cg_countdown
    }

    fn full_pi(&self, pi: &[bool]) -> Vec<bool> {
        assert_eq!(pi.len(), self.functional_inputs.len(), "one bit per functional input");
        let mut full = vec![false; self.netlist.inputs().len()];
        for (&p, &v) in self.functional_inputs.iter().zip(pi) {
            full[p] = v;
        }
        for (k, &p) in self.key_inputs.iter().enumerate() {
            full[p] = self.sc[k];
        }
        full
    }

    /// Pin bookkeeping shared by clocked and clockless operations.
    fn latch_mode(&mut self, m: ModeInputs) {
        if !self.prev_test && m.test {
            self.srb = true;
            self.test_rose = true;
        }
        self.prev_test = m.test;
    }

    fn sd(&self, m: ModeInputs) -> bool {
        sd_value(m.test, m.se, !self.test_rose)
    }

    fn masked(&self, m: ModeInputs) -> bool {
        match self.variant {
            DefenseVariant::Dfs => !m.test || self.srb,
            DefenseVariant::Mssd => !self.sd(m),
        }
    }

    fn scan_out(&self, m: ModeInputs) -> (Vec<bool>, bool) {
        let masked = self.masked(m);
        let so = self
            .layout
            .chains()
            .iter()
            .map(|chain| if masked { MASK_VALUE } else { self.cell_value(*chain.last().unwrap()) })
            .collect();
        (so, masked)
    }

    fn record(&mut self, op: TraceOp, m: ModeInputs, pi: &[bool], si: &[bool], po: &[bool], so: &[bool], masked: bool) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceRecord {
                op,
                mode: m.mode(),
                pi: bits(pi),
                si: bits(si),
                po: bits(po),
                so: bits(so),
                masked,
            });
        }
    }
}

impl ScanOracle for ChipSession {
    fn power_on(&mut self, mode: ModeInputs) {
        self.reset(mode);
        self.record(TraceOp::PowerOn, mode, &[], &[], &[], &[], false);
    }

    fn step(&mut self, m: ModeInputs, pi: &[bool], si: &[bool]) -> StepOutput {
        assert_eq!(si.len(), self.layout.chain_count(), "one scan-in bit per chain");
        self.steps += 1;
        self.latch_mode(m);
        let mode = m.mode();
        let full = self.full_pi(pi);
        let (po, next) = self.netlist.eval_bool(&full, &self.rc);
        let (so, masked) = self.scan_out(m);

        let (rc_shift, sc_shift) = match self.variant {
            DefenseVariant::Dfs => (m.se, mode == Mode::M2),
            DefenseVariant::Mssd => {
                let sd = self.sd(m);
                (sd, sd && mode == Mode::M2)
            }
        };
        if self.variant == DefenseVariant::Mssd && mode == Mode::M0 && self.last_clocked == Some(Mode::M2) {
            self.cg_countdown = 1;
        }
        let rc_gated = self.cg_countdown > 0;
        let bypass_sc = mode == Mode::M1a;

        let mut rc = self.rc.clone();
        let mut sc = self.sc.clone();
        for (c, chain) in self.layout.chains().iter().enumerate() {
            for (p, &cell) in chain.iter().enumerate() {
                let upstream = |skip_sc: bool| -> bool {
                    let mut q = p;
                    while q > 0 {
                        q -= 1;
                        if !(skip_sc && chain[q].is_sc()) {
                            return self.cell_value(chain[q]);
                        }
                    }
                    si[c]
                };
                match cell {
                    Cell::Sc(k) => {
                        sc[k] = match mode {
                            Mode::M0 => self.key.bit(k),
                            Mode::M1a | Mode::M1b => self.sc[k],
                            Mode::M2 if sc_shift => upstream(false),
                            Mode::M2 => self.sc[k],
                        }
                    }
                    Cell::Rc(f) => {
                        rc[f] = if rc_gated {
                            self.rc[f]
                        } else if rc_shift {
                            upstream(bypass_sc)
                        } else {
                            next[f]
                        }
                    }
                }
            }
        }
        if rc_gated {
            self.cg_countdown -= 1;
        }
        self.rc = rc;
        self.sc = sc;
        self.last_clocked = Some(mode);
        self.record(TraceOp::Step, m, pi, si, &po, &so, masked);
        StepOutput { po, so, masked }
    }

    fn observe(&mut self, m: ModeInputs, pi: &[bool]) -> Vec<bool> {
        self.observes += 1;
        self.latch_mode(m);
        let full = self.full_pi(pi);
        let (po, _) = self.netlist.eval_bool(&full, &self.rc);
        self.record(TraceOp::Observe, m, pi, &[], &po, &[], self.masked(m));
        po
    }
}
