// SPDX-License-Identifier: Apache-2.0

//! Three-valued (Kleene) and bit-parallel Boolean evaluation.

use std::fmt;
use std::ops::{BitAnd, BitOr, BitXor, Not};

use super::{Driver, GateKind, Netlist};

/// A logic value under Kleene three-valued semantics; `X` is "unknown".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
pub enum Ternary {
    Zero,
    One,
    #[default]
    X,
}

impl Ternary {
    pub fn from_bool(b: bool) -> Ternary {
        if b {
            Ternary::One
        } else {
            Ternary::Zero
        }
    }

    pub fn known(self) -> Option<bool> {
        match self {
            Ternary::Zero => Some(false),
            Ternary::One => Some(true),
            Ternary::X => None,
        }
    }

    pub fn is_known(self) -> bool {
        self != Ternary::X
    }

    pub fn symbol(self) -> char {
        match self {
            Ternary::Zero => '0',
            Ternary::One => '1',
            Ternary::X => 'X',
        }
    }
}

impl From<bool> for Ternary {
    fn from(b: bool) -> Self {
        Ternary::from_bool(b)
    }
}

impl fmt::Display for Ternary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

impl Not for Ternary {
    type Output = Ternary;
    fn not(self) -> Ternary {
        match self {
            Ternary::Zero => Ternary::One,
            Ternary::One => Ternary::Zero,
            Ternary::X => Ternary::X,
        }
    }
}

impl BitAnd for Ternary {
    type Output = Ternary;
    fn bitand(self, rhs: Ternary) -> Ternary {
        match (self, rhs) {
            (Ternary::Zero, _) | (_, Ternary::Zero) => Ternary::Zero,
            (Ternary::One, Ternary::One) => Ternary::One,
            _ => Ternary::X,
        }
    }
}

impl BitOr for Ternary {
    type Output = Ternary;
    fn bitor(self, rhs: Ternary) -> Ternary {
        !(!self & !rhs)
    }
}

impl BitXor for Ternary {
    type Output = Ternary;
    fn bitxor(self, rhs: Ternary) -> Ternary {
        match (self.known(), rhs.known()) {
            (Some(a), Some(b)) => Ternary::from_bool(a ^ b),
            _ => Ternary::X,
        }
    }
}

impl GateKind {
    pub fn eval_ternary(self, mut inputs: impl Iterator<Item = Ternary>) -> Ternary {
        match self {
            GateKind::And => inputs.fold(Ternary::One, |a, b| a & b),
            GateKind::Nand => !inputs.fold(Ternary::One, |a, b| a & b),
            GateKind::Or => inputs.fold(Ternary::Zero, |a, b| a | b),
            GateKind::Nor => !inputs.fold(Ternary::Zero, |a, b| a | b),
            GateKind::Xor => inputs.fold(Ternary::Zero, |a, b| a ^ b),
            GateKind::Xnor => !inputs.fold(Ternary::Zero, |a, b| a ^ b),
            GateKind::Not => !inputs.next().unwrap_or(Ternary::X),
            GateKind::Buf => inputs.next().unwrap_or(Ternary::X),
        }
    }
}

impl Netlist {
    /// Values of every net, indexed by `NetId`, under Kleene semantics.
    pub fn eval_ternary_nets(&self, pi: &[Ternary], state: &[Ternary]) -> Vec<Ternary> {
        assert_eq!(pi.len(), self.inputs().len(), "one value per primary input");
        assert_eq!(state.len(), self.flops().len(), "one value per flop");
        let mut values = vec![Ternary::X; self.net_count()];
        for (net, &v) in self.inputs().iter().zip(pi) {
            values[net.0] = v;
        }
        for (flop, &v) in self.flops().iter().zip(state) {
            values[flop.q.0] = v;
        }
        for &g in self.topo_order() {
            let gate = &self.gates()[g];
            values[gate.output.0] = gate.kind.eval_ternary(gate.inputs.iter().map(|i| values[i.0]));
        }
        values
    }

    /// Returns (primary outputs, next state).
    pub fn eval_ternary(&self, pi: &[Ternary], state: &[Ternary]) -> (Vec<Ternary>, Vec<Ternary>) {
        let values = self.eval_ternary_nets(pi, state);
        let po = self.outputs().iter().map(|o| values[o.0]).collect();
        let next = self.flops().iter().map(|f| values[f.d.0]).collect();
        (po, next)
    }

    /// Bit-parallel evaluation: each word carries 64 independent patterns.
    pub fn eval_words_nets(&self, pi: &[u64], state: &[u64]) -> Vec<u64> {
        assert_eq!(pi.len(), self.inputs().len(), "one word per primary input");
        assert_eq!(state.len(), self.flops().len(), "one word per flop");
        let mut values = vec![0u64; self.net_count()];
        for (net, &v) in self.inputs().iter().zip(pi) {
            values[net.0] = v;
        }
        for (flop, &v) in self.flops().iter().zip(state) {
            values[flop.q.0] = v;
        }
        for &g in self.topo_order() {
            let gate = &self.gates()[g];
            values[gate.output.0] = gate.kind.eval_words(gate.inputs.iter().map(|i| values[i.0]));
        }
        values
    }

    pub fn eval_bool(&self, pi: &[bool], state: &[bool]) -> (Vec<bool>, Vec<bool>) {
        let to_word = |b: &bool| if *b { !0u64 } else { 0 };
        let pi: Vec<u64> = pi.iter().map(to_word).collect();
        let state: Vec<u64> = state.iter().map(to_word).collect();
        let values = self.eval_words_nets(&pi, &state);
        let po = self.outputs().iter().map(|o| values[o.0] & 1 == 1).collect();
        let next = self.flops().iter().map(|f| values[f.d.0] & 1 == 1).collect();
        (po, next)
    }

    /// Whether `net` is driven by combinational logic (as opposed to a PI or flop).
    pub fn is_gate_output(&self, net: super::NetId) -> bool {
        matches!(self.driver(net), Driver::Gate(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_bench;
    use proptest::prelude::*;
    use Ternary::{One, Zero, X};

    #[test]
    fn kleene_examples() {
        assert_eq!(GateKind::And.eval_ternary([Zero, X].into_iter()), Zero);
        assert_eq!(GateKind::And.eval_ternary([One, X].into_iter()), X);
        assert_eq!(GateKind::Xor.eval_ternary([One, Zero].into_iter()), One);
        assert_eq!(GateKind::Or.eval_ternary([X, One].into_iter()), One);
        assert_eq!(GateKind::Nor.eval_ternary([X, One].into_iter()), Zero);
        assert_eq!(GateKind::Xnor.eval_ternary([X, One].into_iter()), X);
        assert_eq!(GateKind::Nand.eval_ternary([Zero, X, X].into_iter()), One);
    }

    fn all_kinds() -> [GateKind; 8] {
        use GateKind::*;
        [And, Nand, Or, Nor, Xor, Xnor, Not, Buf]
    }

    fn arity(k: GateKind) -> usize {
        match k {
            GateKind::Not | GateKind::Buf => 1,
            GateKind::Xor | GateKind::Xnor => 2,
            _ => 3,
        }
    }

    #[test]
    fn ternary_agrees_with_words_on_known_values() {
        for kind in all_kinds() {
            let n = arity(kind);
            for bits in 0..(1u32 << n) {
                let bools: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
                let t = kind.eval_ternary(bools.iter().map(|&b| Ternary::from(b)));
                let w = kind.eval_words(bools.iter().map(|&b| if b { !0 } else { 0 }));
                assert_eq!(t, Ternary::from(w & 1 == 1), "{kind} {bools:?}");
            }
        }
    }

    proptest! {
        // Refining an X input never flips a known output.
        #[test]
        fn refinement_is_monotone(kind_ix in 0usize..8, vals in prop::collection::vec(0u8..3, 3), pick in 0usize..3, to in any::<bool>()) {
            let kind = all_kinds()[kind_ix];
            let n = arity(kind);
            let decode = |v: u8| [Zero, One, X][v as usize];
            let inputs: Vec<Ternary> = vals[..n].iter().map(|&v| decode(v)).collect();
            let before = kind.eval_ternary(inputs.iter().copied());
            let mut refined = inputs.clone();
            let i = pick % n;
            if refined[i] == X {
                refined[i] = Ternary::from(to);
            }
            let after = kind.eval_ternary(refined.into_iter());
            if before.is_known() {
                prop_assert_eq!(before, after);
            }
        }
    }

    #[test]
    fn netlist_eval_small() {
        let n = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\nq = DFF(d)\nd = XOR(a, q)\ny = AND(d, b)\n").unwrap();
        let (po, next) = n.eval_ternary(&[One, X], &[Zero]);
        assert_eq!(po, vec![X]);
        assert_eq!(next, vec![One]);
        let (po, next) = n.eval_bool(&[true, true], &[true]);
        assert_eq!(po, vec![false]);
        assert_eq!(next, vec![false]);
    }
}
