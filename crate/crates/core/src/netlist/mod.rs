// SPDX-License-Identifier: Apache-2.0

//! Gate-level netlists with flip-flops.
//!
//! A [`Netlist`] is immutable once built. Every net has exactly one driver
//! (a primary input, a gate output or a flop Q pin), the combinational part
//! is acyclic, and flops are indexed densely in declaration order.

mod bench;
mod cone;
mod sim;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub use bench::{parse_bench, write_bench};
pub use cone::Cone;
pub use sim::Ternary;

/// Index of a net inside one [`Netlist`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct NetId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    And,
    Nand,
    Or,
    Nor,
    Xor,
    Xnor,
    Not,
    Buf,
}

impl GateKind {
    /// Case-insensitive lookup of a bench gate keyword. `DFF` is not a gate.
    pub fn from_keyword(word: &str) -> Option<GateKind> {
        let kind = match word.to_ascii_uppercase().as_str() {
            "AND" => GateKind::And,
            "NAND" => GateKind::Nand,
            "OR" => GateKind::Or,
            "NOR" => GateKind::Nor,
            "XOR" => GateKind::Xor,
            "XNOR" => GateKind::Xnor,
            "NOT" | "INV" => GateKind::Not,
            "BUF" | "BUFF" => GateKind::Buf,
            _ => return None,
        };
        Some(kind)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            GateKind::And => "AND",
            GateKind::Nand => "NAND",
            GateKind::Or => "OR",
            GateKind::Nor => "NOR",
            GateKind::Xor => "XOR",
            GateKind::Xnor => "XNOR",
            GateKind::Not => "NOT",
            GateKind::Buf => "BUFF",
        }
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            GateKind::Not | GateKind::Buf => n == 1,
            GateKind::Xor | GateKind::Xnor => n == 2,
            GateKind::And | GateKind::Nand | GateKind::Or | GateKind::Nor => n >= 1,
        }
    }

    /// Evaluate on 64 packed Boolean patterns at once.
    pub fn eval_words(self, inputs: impl Iterator<Item = u64>) -> u64 {
        match self {
            GateKind::And => inputs.fold(!0, |a, b| a & b),
            GateKind::Nand => !inputs.fold(!0, |a, b| a & b),
            GateKind::Or => inputs.fold(0, |a, b| a | b),
            GateKind::Nor => !inputs.fold(0, |a, b| a | b),
            GateKind::Xor => inputs.fold(0, |a, b| a ^ b),
            GateKind::Xnor => !inputs.fold(0, |a, b| a ^ b),
            GateKind::Not => !inputs.fold(0, |_, b| b),
            GateKind::Buf => inputs.fold(0, |_, b| b),
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateKind,
    pub inputs: Vec<NetId>,
    pub output: NetId,
}

/// A D flip-flop. Its index in [`Netlist::flops`] is its stable identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flop {
    pub d: NetId,
    pub q: NetId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    Input(usize),
    Gate(usize),
    Flop(usize),
}

/// Source position of a statement, 1-based. `line == 0` means "not from text".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetlistError {
    #[error("{span}: syntax error: {message}")]
    Syntax { span: Span, message: String },
    #[error("{span}: unknown gate type `{keyword}`")]
    UnknownGate { span: Span, keyword: String },
    #[error("{span}: gate {kind} cannot take {count} inputs")]
    Arity { span: Span, kind: GateKind, count: usize },
    #[error("{span}: net `{net}` is used but never driven")]
    UndefinedNet { span: Span, net: String },
    #[error("{span}: net `{net}` already has a driver")]
    DuplicateDriver { span: Span, net: String },
    #[error("{span}: combinational cycle through net `{net}`")]
    CombinationalCycle { span: Span, net: String },
    #[error("`{0}` is not a primary output")]
    UnknownOutput(String),
}

/// Incremental construction of a [`Netlist`]; all validation happens in
/// [`NetlistBuilder::build`].
#[derive(Debug, Default, Clone)]
pub struct NetlistBuilder {
    names: Vec<String>,
    index: HashMap<String, NetId>,
    inputs: Vec<(NetId, Span)>,
    outputs: Vec<(NetId, Span)>,
    gates: Vec<(Gate, Span)>,
    flops: Vec<(Flop, Span)>,
    uses: Vec<(NetId, Span)>,
}

impl NetlistBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn net(&mut self, name: &str) -> NetId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = NetId(self.names.len());
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Returns `base`, or `base_<n>` for the smallest `n` that is not taken.
    pub fn fresh_name(&self, base: &str) -> String {
        if !self.contains(base) {
            return base.to_string();
        }
        (1..)
            .map(|n| format!("{base}_{n}"))
            .find(|candidate| !self.contains(candidate))
            .unwrap()
    }

    pub fn input(&mut self, name: &str) -> NetId {
        self.input_at(name, Span::default())
    }

    pub fn input_at(&mut self, name: &str, span: Span) -> NetId {
        let id = self.net(name);
        self.inputs.push((id, span));
        id
    }

    pub fn output(&mut self, name: &str) -> NetId {
        self.output_at(name, Span::default())
    }

    pub fn output_at(&mut self, name: &str, span: Span) -> NetId {
        let id = self.net(name);
        self.outputs.push((id, span));
        self.uses.push((id, span));
        id
    }

    pub fn gate(&mut self, kind: GateKind, inputs: &[&str], output: &str) -> NetId {
        self.gate_at(kind, inputs, output, Span::default())
    }

    pub fn gate_at(&mut self, kind: GateKind, inputs: &[&str], output: &str, span: Span) -> NetId {
        let inputs: Vec<NetId> = inputs.iter().map(|n| self.net(n)).collect();
        for &i in &inputs {
            self.uses.push((i, span));
        }
        let output = self.net(output);
        self.gates.push((Gate { kind, inputs, output }, span));
        output
    }

    pub fn flop(&mut self, d: &str, q: &str) -> NetId {
        self.flop_at(d, q, Span::default())
    }

    pub fn flop_at(&mut self, d: &str, q: &str, span: Span) -> NetId {
        let d = self.net(d);
        self.uses.push((d, span));
        let q = self.net(q);
        self.flops.push((Flop { d, q }, span));
        q
    }

    pub fn build(self) -> Result<Netlist, NetlistError> {
        let n = self.names.len();
        let mut drivers: Vec<Option<Driver>> = vec![None; n];

        let mut claim = |net: NetId, driver: Driver, span: Span, names: &[String]| {
            if drivers[net.0].is_some() {
                return Err(NetlistError::DuplicateDriver { span, net: names[net.0].clone() });
            }
            drivers[net.0] = Some(driver);
            Ok(())
        };
        for (i, &(net, span)) in self.inputs.iter().enumerate() {
            claim(net, Driver::Input(i), span, &self.names)?;
        }
        for (i, (gate, span)) in self.gates.iter().enumerate() {
            if !gate.kind.arity_ok(gate.inputs.len()) {
                return Err(NetlistError::Arity { span: *span, kind: gate.kind, count: gate.inputs.len() });
            }
            claim(gate.output, Driver::Gate(i), *span, &self.names)?;
        }
        for (i, &(flop, span)) in self.flops.iter().enumerate() {
            claim(flop.q, Driver::Flop(i), span, &self.names)?;
        }
        for &(net, span) in &self.uses {
            if drivers[net.0].is_none() {
                return Err(NetlistError::UndefinedNet { span, net: self.names[net.0].clone() });
            }
        }
        if let Some(net) = drivers.iter().position(Option::is_none) {
            return Err(NetlistError::UndefinedNet { span: Span::default(), net: self.names[net].clone() });
        }
        let drivers: Vec<Driver> = drivers.into_iter().flatten().collect();

        let mut fanout: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (g, (gate, _)) in self.gates.iter().enumerate() {
            for &i in &gate.inputs {
                if fanout[i.0].last() != Some(&g) {
                    fanout[i.0].push(g);
                }
            }
        }

        // Kahn's algorithm over gates only; PIs and flop outputs are sources.
        let mut pending: Vec<usize> = self
            .gates
            .iter()
            .map(|(gate, _)| {
                let mut ins = gate.inputs.clone();
                ins.sort();
                ins.dedup();
                ins.iter().filter(|i| matches!(drivers[i.0], Driver::Gate(_))).count()
            })
            .collect();
        let mut ready: Vec<usize> = (0..self.gates.len()).filter(|&g| pending[g] == 0).rev().collect();
        let mut order = Vec::with_capacity(self.gates.len());
        while let Some(g) = ready.pop() {
            order.push(g);
            for &succ in fanout[self.gates[g].0.output.0].iter().rev() {
                pending[succ] -= 1;
                if pending[succ] == 0 {
                    ready.push(succ);
                }
            }
        }
        if order.len() != self.gates.len() {
            let (gate, span) = self
                .gates
                .iter()
                .enumerate()
                .find(|&(g, _)| pending[g] > 0)
                .map(|(_, g)| g)
                .unwrap();
            return Err(NetlistError::CombinationalCycle { span: *span, net: self.names[gate.output.0].clone() });
        }

        Ok(Netlist {
            names: self.names,
            index: self.index,
            inputs: self.inputs.into_iter().map(|(id, _)| id).collect(),
            outputs: self.outputs.into_iter().map(|(id, _)| id).collect(),
            gates: self.gates.into_iter().map(|(g, _)| g).collect(),
            flops: self.flops.into_iter().map(|(f, _)| f).collect(),
            drivers,
            fanout,
            order,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Netlist {
    names: Vec<String>,
    index: HashMap<String, NetId>,
    inputs: Vec<NetId>,
    outputs: Vec<NetId>,
    gates: Vec<Gate>,
    flops: Vec<Flop>,
    drivers: Vec<Driver>,
    fanout: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl Netlist {
    pub fn net_count(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, net: NetId) -> &str {
        &self.names[net.0]
    }

    pub fn find(&self, name: &str) -> Option<NetId> {
        self.index.get(name).copied()
    }

    pub fn inputs(&self) -> &[NetId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[NetId] {
        &self.outputs
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn flops(&self) -> &[Flop] {
        &self.flops
    }

    pub fn driver(&self, net: NetId) -> Driver {
        self.drivers[net.0]
    }

    /// Gates that read `net`, each listed once.
    pub fn fanout(&self, net: NetId) -> &[usize] {
        &self.fanout[net.0]
    }

    /// Gate indices in a valid evaluation order.
    pub fn topo_order(&self) -> &[usize] {
        &self.order
    }

    pub fn input_position(&self, net: NetId) -> Option<usize> {
        match self.drivers[net.0] {
            Driver::Input(i) => Some(i),
            _ => None,
        }
    }

    pub fn output_position(&self, name: &str) -> Option<usize> {
        let id = self.find(name)?;
        self.outputs.iter().position(|&o| o == id)
    }

    /// True when some flop samples `net` on its D pin.
    pub fn feeds_flop(&self, net: NetId) -> bool {
        self.flops.iter().any(|f| f.d == net)
    }

    /// Builder pre-loaded with this netlist's declarations, for derived designs.
    pub fn to_builder(&self) -> NetlistBuilder {
        let mut b = NetlistBuilder::new();
        for name in &self.names {
            b.net(name);
        }
        for &i in &self.inputs {
            b.input(self.name(i));
        }
        for &o in &self.outputs {
            b.output(self.name(o));
        }
        for g in &self.gates {
            let ins: Vec<&str> = g.inputs.iter().map(|&i| self.name(i)).collect();
            b.gate(g.kind, &ins, self.name(g.output));
        }
        for f in &self.flops {
            b.flop(self.name(f.d), self.name(f.q));
        }
        b
    }
}
