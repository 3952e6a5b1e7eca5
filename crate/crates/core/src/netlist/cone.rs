// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use super::{Driver, NetId, Netlist, NetlistError};

/// Combinational fan-in cone of one primary output.
///
/// Traversal stops at primary inputs and flop Q outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cone {
    pub output: NetId,
    /// Positions into [`Netlist::inputs`].
    pub inputs: BTreeSet<usize>,
    /// Flop indices.
    pub flops: BTreeSet<usize>,
    /// Gate indices.
    pub gates: BTreeSet<usize>,
}

impl Cone {
    pub fn contains_flop(&self, flop: usize) -> bool {
        self.flops.contains(&flop)
    }

    pub fn contains_input(&self, position: usize) -> bool {
        self.inputs.contains(&position)
    }
}

impl Netlist {
    pub fn extract_fanin_cone(&self, po: &str) -> Result<Cone, NetlistError> {
        let net = self
            .find(po)
            .filter(|id| self.outputs().contains(id))
            .ok_or_else(|| NetlistError::UnknownOutput(po.to_string()))?;
        Ok(self.fanin_cone(net))
    }

    /// Backward reachability from any net.
    pub fn fanin_cone(&self, net: NetId) -> Cone {
        let mut cone = Cone {
            output: net,
            inputs: BTreeSet::new(),
            flops: BTreeSet::new(),
            gates: BTreeSet::new(),
        };
        let mut seen = vec![false; self.net_count()];
        let mut stack = vec![net];
        seen[net.0] = true;
        while let Some(n) = stack.pop() {
            match self.driver(n) {
                Driver::Input(i) => {
                    cone.inputs.insert(i);
                }
                Driver::Flop(f) => {
                    cone.flops.insert(f);
                }
                Driver::Gate(g) => {
                    cone.gates.insert(g);
                    for &i in &self.gates()[g].inputs {
                        if !seen[i.0] {
                            seen[i.0] = true;
                            stack.push(i);
                        }
                    }
                }
            }
        }
        cone
    }

    /// Gates reachable forward from `net` without crossing a flop.
    pub fn fanout_gates(&self, net: NetId) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack = vec![net];
        while let Some(n) = stack.pop() {
            for &g in self.fanout(n) {
                if out.insert(g) {
                    stack.push(self.gates()[g].output);
                }
            }
        }
        out
    }
}
