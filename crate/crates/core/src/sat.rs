// SPDX-License-Identifier: Apache-2.0

//! CNF construction on top of an incremental CDCL solver.
//!
//! [`Cnf`] hands out literals, records every clause it forwards (so a query
//! can be dumped in DIMACS form), and offers Tseitin encodings for the gate
//! kinds of [`crate::netlist`].

use std::fmt::Write as _;

use varisat::{ExtendFormula, Solver};

use crate::netlist::{Driver, GateKind, NetId, Netlist};

pub use varisat::Lit;

pub struct Cnf {
    solver: Solver<'static>,
    clauses: Vec<Vec<Lit>>,
    vars: usize,
    truth: Lit,
    model: Vec<bool>,
}

impl Default for Cnf {
    fn default() -> Self {
        Self::new()
    }
}

impl Cnf {
    pub fn new() -> Self {
        let mut cnf = Cnf {
            solver: Solver::new(),
            clauses: Vec::new(),
            vars: 0,
            truth: Lit::from_dimacs(1),
            model: Vec::new(),
        };
        let t = cnf.var();
        cnf.truth = t;
        cnf.clause(&[t]);
        cnf
    }

    pub fn var(&mut self) -> Lit {
        self.vars += 1;
        Lit::from_dimacs(self.vars as isize)
    }

    pub fn constant(&self, value: bool) -> Lit {
        if value {
            self.truth
        } else {
            !self.truth
        }
    }

    pub fn clause(&mut self, lits: &[Lit]) {
        self.solver.add_clause(lits);
        self.clauses.push(lits.to_vec());
    }

    pub fn var_count(&self) -> usize {
        self.vars
    }

    pub fn clause_count(&self) -> usize {
        self.clauses.len()
    }

    /// Solves under `assumptions`; on success the model is kept for [`Cnf::value`].
    pub fn solve(&mut self, assumptions: &[Lit]) -> bool {
        self.solver.assume(assumptions);
        // Solver errors only arise from proof writers or interruption, neither used here.
        let sat = self.solver.solve().expect("solver failure");
        self.model.clear();
        if sat {
            let model = self.solver.model().expect("model after SAT");
            self.model = vec![false; self.vars + 1];
            for lit in model {
                let v = lit.var().to_dimacs() as usize;
                if v < self.model.len() {
                    self.model[v] = lit.is_positive();
                }
            }
        }
        sat
    }

    /// Value of `lit` in the last satisfying assignment.
    pub fn value(&self, lit: Lit) -> bool {
        let v = lit.var().to_dimacs() as usize;
        self.model.get(v).copied().unwrap_or(false) == lit.is_positive()
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.vars, self.clauses.len());
        for c in &self.clauses {
            for l in c {
                write!(out, "{} ", l.to_dimacs()).unwrap();
            }
            out.push_str("0\n");
        }
        out
    }

    /// `out <-> a AND b`
    pub fn and2(&mut self, a: Lit, b: Lit) -> Lit {
        self.and_n(&[a, b])
    }

    pub fn and_n(&mut self, ins: &[Lit]) -> Lit {
        let out = self.var();
        let mut long = vec![out];
        for &i in ins {
            self.clause(&[!out, i]);
            long.push(!i);
        }
        self.clause(&long);
        out
    }

    pub fn or_n(&mut self, ins: &[Lit]) -> Lit {
        let negated: Vec<Lit> = ins.iter().map(|&l| !l).collect();
        !self.and_n(&negated)
    }

    pub fn xor2(&mut self, a: Lit, b: Lit) -> Lit {
        let out = self.var();
        self.clause(&[!out, a, b]);
        self.clause(&[!out, !a, !b]);
        self.clause(&[out, !a, b]);
        self.clause(&[out, a, !b]);
        out
    }

    pub fn gate(&mut self, kind: GateKind, ins: &[Lit]) -> Lit {
        match kind {
            GateKind::And => self.and_n(ins),
            GateKind::Nand => !self.and_n(ins),
            GateKind::Or => self.or_n(ins),
            GateKind::Nor => !self.or_n(ins),
            GateKind::Xor => self.xor2(ins[0], ins[1]),
            GateKind::Xnor => !self.xor2(ins[0], ins[1]),
            GateKind::Not => !ins[0],
            GateKind::Buf => ins[0],
        }
    }

    /// Boolean encoding of the gates selected by `gates` (evaluation order is
    /// taken from the netlist). `source` supplies literals for nets driven by
    /// PIs or flops.
    pub fn encode_netlist(
        &mut self,
        netlist: &Netlist,
        gates: impl Fn(usize) -> bool,
        source: impl FnMut(&mut Cnf, NetId) -> Option<Lit>,
    ) -> Vec<Option<Lit>> {
        self.encode_netlist_forced(netlist, gates, source, |_| None)
    }

    /// As [`Cnf::encode_netlist`], with `force` replacing the value of chosen
    /// gate outputs (fault injection).
    pub fn encode_netlist_forced(
        &mut self,
        netlist: &Netlist,
        gates: impl Fn(usize) -> bool,
        mut source: impl FnMut(&mut Cnf, NetId) -> Option<Lit>,
        force: impl Fn(NetId) -> Option<Lit>,
    ) -> Vec<Option<Lit>> {
        let mut lits: Vec<Option<Lit>> = vec![None; netlist.net_count()];
        for net in (0..netlist.net_count()).map(NetId) {
            if !matches!(netlist.driver(net), Driver::Gate(_)) {
                lits[net.0] = source(self, net);
            }
        }
        for &g in netlist.topo_order() {
            if !gates(g) {
                continue;
            }
            let gate = &netlist.gates()[g];
            if let Some(forced) = force(gate.output) {
                lits[gate.output.0] = Some(forced);
                continue;
            }
            let ins: Option<Vec<Lit>> = gate.inputs.iter().map(|i| lits[i.0]).collect();
            let ins = ins.expect("gate input outside the encoded region");
            lits[gate.output.0] = Some(self.gate(gate.kind, &ins));
        }
        lits
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_bench;

    #[test]
    fn gate_encodings_match_truth_tables() {
        use GateKind::*;
        for kind in [And, Nand, Or, Nor, Xor, Xnor, Not, Buf] {
            let n = match kind {
                Not | Buf => 1,
                Xor | Xnor => 2,
                _ => 3,
            };
            for bits in 0..(1u32 << n) {
                let mut cnf = Cnf::new();
                let ins: Vec<Lit> = (0..n).map(|_| cnf.var()).collect();
                let out = cnf.gate(kind, &ins);
                let assume: Vec<Lit> =
                    ins.iter().enumerate().map(|(i, &l)| if bits >> i & 1 == 1 { l } else { !l }).collect();
                assert!(cnf.solve(&assume));
                let expect = kind.eval_words((0..n).map(|i| if bits >> i & 1 == 1 { !0 } else { 0 })) & 1 == 1;
                assert_eq!(cnf.value(out), expect, "{kind} {bits:b}");
            }
        }
    }

    #[test]
    fn netlist_encoding_and_dimacs() {
        let n = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = NAND(a, b)\n").unwrap();
        let mut cnf = Cnf::new();
        let lits = cnf.encode_netlist(&n, |_| true, |c, _| Some(c.var()));
        let y = lits[n.find("y").unwrap().0].unwrap();
        let a = lits[n.find("a").unwrap().0].unwrap();
        assert!(!cnf.solve(&[!y, !a]));
        assert!(cnf.solve(&[!y]));
        assert!(cnf.value(a));
        let dimacs = cnf.to_dimacs();
        assert!(dimacs.starts_with(&format!("p cnf {} {}", cnf.var_count(), cnf.clause_count())));
    }
}
