// SPDX-License-Identifier: Apache-2.0

//! Defense-side metrics: instrumentation overhead as a primitive tally and
//! stuck-at coverage of the original versus instrumented designs.
//!
//! Primitive inventories:
//!
//! | block | primitives |
//! |---|---|
//! | secure cell | 2 mux, 1 dff |
//! | DFS transition detector | 2 dff, 2 not, 1 and, 2 or |
//! | DFS scan-read blocking | 1 or per scan-out |
//! | MSSD shift disable | 1 delay, 1 not, 1 or, 2 and, 2 dff |
//! | MSSD clock gating | 1 nor, 1 or, 1 dff, 1 latch, 1 and |
//!
//! A mux is one primitive in the tally and three gates plus a shared
//! inverter in the netlist; the delay is a buffer, the latch a flop and the
//! MSSD scan-out a plain buffer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::atpg::{collapsed_faults, fault_coverage, pattern_stream};
use crate::chip::{Cell, DefenseVariant, ScanChainLayout};
use crate::locking::LockedNetlist;
use crate::netlist::{GateKind, Netlist, NetlistBuilder};

/// Text for report headers.
pub const SECURE_CELL_INVENTORY: &str = "secure cell = 2 mux + 1 dff";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Group {
    SecureCells,
    Masking,
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub design: String,
    pub variant: DefenseVariant,
    /// Gates plus flops of the locked design.
    pub baseline: usize,
    pub secure_cells: usize,
    pub scan_outs: usize,
    pub secure_cell_logic: usize,
    pub masking: usize,
    pub control: usize,
    pub added: usize,
    /// `100 * added / baseline`.
    pub percent: f64,
    /// Added primitives by kind.
    pub primitives: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignCoverage {
    pub design: String,
    pub faults: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub budget: usize,
    pub seed: u64,
    pub original: DesignCoverage,
    pub variants: Vec<DesignCoverage>,
}

impl CoverageReport {
    /// Largest |variant − original| coverage gap.
    pub fn max_loss(&self) -> f64 {
        self.variants.iter().map(|v| (v.coverage - self.original.coverage).abs()).fold(0.0, f64::max)
    }
}

struct Instrumenter {
    b: NetlistBuilder,
    group: Group,
    tally: BTreeMap<(Group, &'static str), usize>,
    inverted: BTreeMap<String, String>,
}

impl Instrumenter {
    fn fresh(&mut self, base: &str) -> String {
        let name = self.b.fresh_name(base);
        self.b.net(&name);
        name
    }

    fn count(&mut self, prim: &'static str) {
        *self.tally.entry((self.group, prim)).or_default() += 1;
    }

    fn input(&mut self, base: &str) -> String {
        let name = self.fresh(base);
        self.b.input(&name);
        name
    }

    fn gate(&mut self, prim: &'static str, kind: GateKind, ins: &[&str], base: &str) -> String {
        self.count(prim);
        self.raw_gate(kind, ins, base)
    }

    fn raw_gate(&mut self, kind: GateKind, ins: &[&str], base: &str) -> String {
        let out = self.fresh(base);
        self.b.gate(kind, ins, &out);
        out
    }

    fn flop(&mut self, prim: &'static str, d: &str, q: &str) {
        self.count(prim);
        self.b.flop(d, q);
    }

    /// `sel ? a : b`
    fn mux(&mut self, sel: &str, a: &str, b: &str) -> String {
        self.count("mux");
        let nsel = match self.inverted.get(sel) {
            Some(n) => n.clone(),
            None => {
                let n = self.raw_gate(GateKind::Not, &[sel], &format!("{sel}_n"));
                self.inverted.insert(sel.to_string(), n.clone());
                n
            }
        };
        let t = self.raw_gate(GateKind::And, &[sel, a], "mux_t");
        let f = self.raw_gate(GateKind::And, &[&nsel, b], "mux_f");
        self.raw_gate(GateKind::Or, &[&t, &f], "mux")
    }
}

/// Full-scan model of the locked design with secure cells and the defense
/// control logic made explicit. Key inputs become secure-cell flops loaded
/// from `keymem<i>` inputs; `test` and `se` are new inputs; scan-outs and the
/// MSSD clock enable are new outputs.
pub fn instrument(locked: &LockedNetlist, layout: &ScanChainLayout, variant: DefenseVariant) -> Netlist {
    instrument_tallied(locked, layout, variant).0
}

fn instrument_tallied(
    locked: &LockedNetlist,
    layout: &ScanChainLayout,
    variant: DefenseVariant,
) -> (Netlist, BTreeMap<(Group, &'static str), usize>) {
    let n = locked.netlist();
    let mut b = NetlistBuilder::new();
    for id in 0..n.net_count() {
        b.net(n.name(crate::netlist::NetId(id)));
    }
    for (p, &i) in n.inputs().iter().enumerate() {
        if locked.key_index_of_input(p).is_none() {
            b.input(n.name(i));
        }
    }
    for &o in n.outputs() {
        b.output(n.name(o));
    }
    for g in n.gates() {
        let ins: Vec<&str> = g.inputs.iter().map(|&i| n.name(i)).collect();
        b.gate(g.kind, &ins, n.name(g.output));
    }
    for f in n.flops() {
        b.flop(n.name(f.d), n.name(f.q));
    }
    let mut x = Instrumenter { b, group: Group::Control, tally: BTreeMap::new(), inverted: BTreeMap::new() };
    let test = x.input("test");
    let se = x.input("se");

    let (shift_sel, mask) = match variant {
        DefenseVariant::Dfs => {
            let prev = x.fresh("test_prev");
            x.flop("dff", &test, &prev);
            let nprev = x.gate("not", GateKind::Not, &[&prev], "test_prev_n");
            let rise = x.gate("and", GateKind::And, &[&test, &nprev], "test_rise");
            let srb = x.fresh("srb");
            let sticky = x.gate("or", GateKind::Or, &[&srb, &rise], "srb_next");
            x.flop("dff", &sticky, &srb);
            let ntest = x.gate("not", GateKind::Not, &[&test], "test_n");
            let mask = x.gate("or", GateKind::Or, &[&ntest, &srb], "scan_mask");
            (se.clone(), Some(mask))
        }
        DefenseVariant::Mssd => {
            let delayed = x.gate("delay", GateKind::Buf, &[&test], "test_dly");
            let ndelayed = x.gate("not", GateKind::Not, &[&delayed], "test_dly_n");
            let prev = x.fresh("test_prev");
            x.flop("dff", &test, &prev);
            let no_edge = x.gate("or", GateKind::Or, &[&ndelayed, &prev], "test_no_edge");
            let stable = x.fresh("test_stable");
            let keep = x.gate("and", GateKind::And, &[&stable, &no_edge], "test_stable_next");
            x.flop("dff", &keep, &stable);
            let sd = x.gate("and", GateKind::And, &[&test, &se, &stable], "sd");

            let m0 = x.gate("nor", GateKind::Nor, &[&test, &se], "mode_m0");
            let was_shift = x.fresh("cg_prev");
            x.flop("dff", &sd, &was_shift);
            let hold = x.gate("and", GateKind::And, &[&m0, &was_shift], "cg_hold");
            let latched = x.fresh("cg_latch");
            x.flop("latch", &hold, &latched);
            let gate_off = x.gate("or", GateKind::Or, &[&latched, &hold], "cg_off");
            x.b.output(&gate_off);
            (sd, None)
        }
    };

    for (c, chain) in layout.chains().iter().enumerate() {
        let mut prev: Option<String> = None;
        for cell in chain {
            match *cell {
                Cell::Rc(f) => prev = Some(n.name(n.flops()[f].q).to_string()),
                Cell::Sc(k) => {
                    x.group = Group::SecureCells;
                    let upstream = match prev.take() {
                        Some(p) => p,
                        None => x.input(&format!("si{c}")),
                    };
                    let q = n.name(n.inputs()[locked.key_input_position(k)]).to_string();
                    let mem = x.input(&format!("keymem{k}"));
                    let shifted = x.mux(&shift_sel, &upstream, &q);
                    let d = x.mux(&test, &shifted, &mem);
                    x.flop("dff", &d, &q);
                    prev = Some(q);
                }
            }
        }
        let last = prev.expect("chains are non-empty");
        x.group = Group::Masking;
        let so = match &mask {
            Some(mask) => x.gate("or", GateKind::Or, &[&last, mask], &format!("so{c}")),
            None => x.raw_gate(GateKind::Buf, &[&last], &format!("so{c}")),
        };
        x.b.output(&so);
    }
    let netlist = x.b.build().expect("instrumented netlist is well-formed");
    (netlist, x.tally)
}

/// Tally of the primitives `variant` adds to `locked` stitched as `layout`.
pub fn overhead(design: &str, locked: &LockedNetlist, layout: &ScanChainLayout, variant: DefenseVariant) -> OverheadReport {
    let n = locked.netlist();
    let (_, tally) = instrument_tallied(locked, layout, variant);
    let sum = |g: Group| tally.iter().filter(|((h, _), _)| *h == g).map(|(_, c)| c).sum::<usize>();
    let mut primitives: BTreeMap<String, usize> = BTreeMap::new();
    for ((_, p), c) in &tally {
        *primitives.entry(p.to_string()).or_default() += c;
    }
    primitives.retain(|_, c| *c > 0);
    let baseline = n.gates().len() + n.flops().len();
    let (secure_cell_logic, masking, control) = (sum(Group::SecureCells), sum(Group::Masking), sum(Group::Control));
    let added = secure_cell_logic + masking + control;
    OverheadReport {
        design: design.to_string(),
        variant,
        baseline,
        secure_cells: layout.key_count(),
        scan_outs: layout.chain_count(),
        secure_cell_logic,
        masking,
        control,
        added,
        percent: if baseline == 0 { 0.0 } else { 100.0 * added as f64 / baseline as f64 },
        primitives,
    }
}

/// Stuck-at coverage of `original` and each named instrumented design, each
/// under its own deterministic pattern stream of `budget` patterns.
pub fn coverage_compare(
    original: (&str, &Netlist),
    variants: &[(&str, &Netlist)],
    budget: usize,
    seed: u64,
) -> CoverageReport {
    let measure = |(design, n): (&str, &Netlist)| {
        let patterns = pattern_stream(n, budget.max(1), seed);
        DesignCoverage {
            design: design.to_string(),
            faults: collapsed_faults(n).len(),
            coverage: fault_coverage(n, &patterns).unwrap_or(1.0),
        }
    };
    CoverageReport {
        budget: budget.max(1),
        seed,
        original: measure(original),
        variants: variants.iter().map(|&v| measure(v)).collect(),
    }
}

#[cfg(test)]
mod tests;
