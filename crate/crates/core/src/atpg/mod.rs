// SPDX-License-Identifier: Apache-2.0

//! Leak-condition generation and stuck-at fault simulation.
//!
//! A leak condition asks: which values on the controllable sources make a
//! primary output a known function of one "leak" source, while every unknown
//! source sits at X? The question is posed as one CNF query over two copies of
//! the output cone, leak = 0 and leak = 1, each signal carried on two rails
//! (`one`, `zero`); a signal with neither rail set is X.

mod fault;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::netlist::{Cone, Driver, GateKind, NetId, Netlist, Ternary};
use crate::sat::{Cnf, Lit};

pub use fault::{
    collapsed_faults, detects, fault_coverage, pattern_stream, test_for_fault, AtpgError, Fault, Pattern,
};

/// A combinational source: a primary input (by position) or a flop output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    Input(usize),
    Flop(usize),
}

impl Source {
    pub fn net(self, n: &Netlist) -> NetId {
        match self {
            Source::Input(p) => n.inputs()[p],
            Source::Flop(f) => n.flops()[f].q,
        }
    }

    pub fn of_net(n: &Netlist, net: NetId) -> Option<Source> {
        match n.driver(net) {
            Driver::Input(p) => Some(Source::Input(p)),
            Driver::Flop(f) => Some(Source::Flop(f)),
            Driver::Gate(_) => None,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Input(p) => write!(f, "pi{p}"),
            Source::Flop(i) => write!(f, "ff{i}"),
        }
    }
}

/// Sources of a cone.
pub fn cone_sources(cone: &Cone) -> BTreeSet<Source> {
    cone.inputs.iter().map(|&p| Source::Input(p)).chain(cone.flops.iter().map(|&f| Source::Flop(f))).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakCondition {
    /// Output position of the observed PO.
    pub target: usize,
    pub leak: Source,
    /// Requirement per primary input position (X = unconstrained).
    pub inputs: Vec<Ternary>,
    /// Requirement per flop.
    pub flops: Vec<Ternary>,
    /// Observed PO value when the leak source holds 0 and 1.
    pub expected: [bool; 2],
    /// Sources that were declared unknown.
    pub unknown: BTreeSet<Source>,
}

impl LeakCondition {
    pub fn constraint(&self, s: Source) -> Ternary {
        match s {
            Source::Input(p) => self.inputs[p],
            Source::Flop(f) => self.flops[f],
        }
    }

    /// Every source with a required value.
    pub fn constrained(&self) -> Vec<(Source, bool)> {
        let ins = self.inputs.iter().enumerate().filter_map(|(p, t)| t.known().map(|b| (Source::Input(p), b)));
        let ffs = self.flops.iter().enumerate().filter_map(|(f, t)| t.known().map(|b| (Source::Flop(f), b)));
        ins.chain(ffs).collect()
    }

    /// Leaked bit for an observed PO value.
    pub fn decode(&self, observed: bool) -> Option<bool> {
        self.expected.iter().position(|&e| e == observed).map(|i| i == 1)
    }
}

/// Roles of the sources of a leak-condition query. Sources absent from all
/// three sets are treated as unknown.
#[derive(Debug, Clone, Default)]
pub struct SourceRoles {
    pub controllable: BTreeSet<Source>,
    pub unknown: BTreeSet<Source>,
    pub known: BTreeMap<Source, bool>,
}

#[derive(Clone, Copy)]
struct Rails {
    one: Lit,
    zero: Lit,
}

struct Query {
    cnf: Cnf,
    goal: Lit,
    controls: Vec<(Source, Lit)>,
}

fn rails_gate(cnf: &mut Cnf, kind: GateKind, ins: &[Rails]) -> Rails {
    let ones: Vec<Lit> = ins.iter().map(|r| r.one).collect();
    let zeros: Vec<Lit> = ins.iter().map(|r| r.zero).collect();
    let swap = |r: Rails| Rails { one: r.zero, zero: r.one };
    match kind {
        GateKind::And => Rails { one: cnf.and_n(&ones), zero: cnf.or_n(&zeros) },
        GateKind::Nand => swap(rails_gate(cnf, GateKind::And, ins)),
        GateKind::Or => Rails { one: cnf.or_n(&ones), zero: cnf.and_n(&zeros) },
        GateKind::Nor => swap(rails_gate(cnf, GateKind::Or, ins)),
        GateKind::Xor => {
            let (a, b) = (ins[0], ins[1]);
            let t1 = cnf.and2(a.one, b.zero);
            let t2 = cnf.and2(a.zero, b.one);
            let f1 = cnf.and2(a.zero, b.zero);
            let f2 = cnf.and2(a.one, b.one);
            Rails { one: cnf.or_n(&[t1, t2]), zero: cnf.or_n(&[f1, f2]) }
        }
        GateKind::Xnor => swap(rails_gate(cnf, GateKind::Xor, ins)),
        GateKind::Not => swap(ins[0]),
        GateKind::Buf => ins[0],
    }
}

fn build_query(n: &Netlist, cone: &Cone, leak: Source, roles: &SourceRoles) -> Query {
    let mut cnf = Cnf::new();
    let t = cnf.constant(true);
    let f = cnf.constant(false);
    let mut controls = Vec::new();
    let mut shared: BTreeMap<Source, Rails> = BTreeMap::new();
    for s in cone_sources(cone) {
        if s == leak {
            continue;
        }
        let rails = if let Some(&b) = roles.known.get(&s) {
            Rails { one: cnf.constant(b), zero: cnf.constant(!b) }
        } else if roles.controllable.contains(&s) && !roles.unknown.contains(&s) {
            let v = cnf.var();
            controls.push((s, v));
            Rails { one: v, zero: !v }
        } else {
            Rails { one: f, zero: f }
        };
        shared.insert(s, rails);
    }
    let mut outs = Vec::new();
    for leak_value in [false, true] {
        let mut rails: Vec<Option<Rails>> = vec![None; n.net_count()];
        for (&s, &r) in &shared {
            rails[s.net(n).0] = Some(r);
        }
        rails[leak.net(n).0] = Some(if leak_value { Rails { one: t, zero: f } } else { Rails { one: f, zero: t } });
        for &g in n.topo_order() {
            if !cone.gates.contains(&g) {
                continue;
            }
            let gate = &n.gates()[g];
            let ins: Vec<Rails> = gate.inputs.iter().map(|i| rails[i.0].expect("cone is closed")).collect();
            rails[gate.output.0] = Some(rails_gate(&mut cnf, gate.kind, &ins));
        }
        outs.push(rails[cone.output.0].expect("output in cone"));
    }
    let (a, b) = (outs[0], outs[1]);
    let d1 = cnf.and2(a.zero, b.one);
    let d2 = cnf.and2(a.one, b.zero);
    let goal = cnf.or_n(&[d1, d2]);
    Query { cnf, goal, controls }
}

fn ternary_pair(n: &Netlist, leak: Source, inputs: &[Ternary], flops: &[Ternary], target: NetId) -> [Ternary; 2] {
    let mut out = [Ternary::X; 2];
    for (i, v) in [false, true].into_iter().enumerate() {
        let mut ins = inputs.to_vec();
        let mut ffs = flops.to_vec();
        match leak {
            Source::Input(p) => ins[p] = v.into(),
            Source::Flop(f) => ffs[f] = v.into(),
        }
        out[i] = n.eval_ternary_nets(&ins, &ffs)[target.0];
    }
    out
}

fn leaks(pair: [Ternary; 2]) -> bool {
    pair[0].is_known() && pair[1].is_known() && pair[0] != pair[1]
}

/// Finds values for controllable sources of `cone` such that its output is
/// known under Kleene evaluation and differs between leak = 0 and leak = 1.
/// Constraints are relaxed to X greedily afterwards. Known sources appear in
/// the condition with their value unless relaxed.
pub fn gen_leak_condition(n: &Netlist, cone: &Cone, leak: Source, roles: &SourceRoles) -> Option<LeakCondition> {
    let sources = cone_sources(cone);
    assert!(sources.contains(&leak), "leak source outside the cone");
    assert!(roles.controllable.is_disjoint(&roles.unknown), "controllable and unknown overlap");
    let mut q = build_query(n, cone, leak, roles);
    if !q.cnf.solve(&[q.goal]) {
        return None;
    }
    let mut inputs = vec![Ternary::X; n.inputs().len()];
    let mut flops = vec![Ternary::X; n.flops().len()];
    let mut set = |s: Source, v: Ternary| match s {
        Source::Input(p) => inputs[p] = v,
        Source::Flop(f) => flops[f] = v,
    };
    for &(s, lit) in &q.controls {
        set(s, q.cnf.value(lit).into());
    }
    let mut relaxable: Vec<Source> = q.controls.iter().map(|&(s, _)| s).collect();
    for (&s, &b) in &roles.known {
        if sources.contains(&s) && s != leak {
            set(s, b.into());
            relaxable.push(s);
        }
    }
    let target = cone.output;
    debug_assert!(leaks(ternary_pair(n, leak, &inputs, &flops, target)));
    for s in relaxable {
        let slot = match s {
            Source::Input(p) => &mut inputs[p],
            Source::Flop(f) => &mut flops[f],
        };
        let saved = std::mem::replace(slot, Ternary::X);
        if !leaks(ternary_pair(n, leak, &inputs, &flops, target)) {
            match s {
                Source::Input(p) => inputs[p] = saved,
                Source::Flop(f) => flops[f] = saved,
            }
        }
    }
    let pair = ternary_pair(n, leak, &inputs, &flops, target);
    let expected = [pair[0].known().expect("known"), pair[1].known().expect("known")];
    let unknown = sources
        .iter()
        .copied()
        .filter(|s| *s != leak && !roles.known.contains_key(s) && !(roles.controllable.contains(s) && !roles.unknown.contains(s)))
        .collect();
    Some(LeakCondition {
        target: n.outputs().iter().position(|&o| o == target).expect("cone of a primary output"),
        leak,
        inputs,
        flops,
        expected,
        unknown,
    })
}

/// DIMACS text of the query [`gen_leak_condition`] would solve, goal asserted.
pub fn leak_condition_dimacs(n: &Netlist, cone: &Cone, leak: Source, roles: &SourceRoles) -> String {
    let mut q = build_query(n, cone, leak, roles);
    let goal = q.goal;
    q.cnf.clause(&[goal]);
    q.cnf.to_dimacs()
}

#[cfg(test)]
mod tests;
