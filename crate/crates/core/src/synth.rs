// SPDX-License-Identifier: Apache-2.0

//! Seeded generator of random sequential benchmark circuits.
//!
//! Used for desk-scale experiments where published benchmark files are not at
//! hand. Every generated net is consumed by some gate, flop or output, so
//! there is no dangling logic.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::netlist::{GateKind, Netlist, NetlistBuilder};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthParams {
    pub inputs: usize,
    pub outputs: usize,
    pub flops: usize,
    pub gates: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams { inputs: 8, outputs: 12, flops: 32, gates: 300 }
    }
}

const KINDS: [(GateKind, u32); 8] = [
    (GateKind::And, 20),
    (GateKind::Nand, 15),
    (GateKind::Or, 18),
    (GateKind::Nor, 12),
    (GateKind::Xor, 15),
    (GateKind::Xnor, 6),
    (GateKind::Not, 8),
    (GateKind::Buf, 6),
];

fn pick_kind(rng: &mut ChaCha8Rng) -> GateKind {
    let total: u32 = KINDS.iter().map(|&(_, w)| w).sum();
    let mut r = rng.gen_range(0..total);
    for &(k, w) in &KINDS {
        if r < w {
            return k;
        }
        r -= w;
    }
    unreachable!()
}

/// Logic depth bound, roughly twice the binary log of the gate count.
fn max_depth(gates: usize) -> usize {
    (2 * (usize::BITS - gates.max(2).leading_zeros()) as usize).clamp(6, 24)
}

pub fn generate(p: &SynthParams, seed: u64) -> Netlist {
    assert!(p.inputs + p.flops >= 2, "need at least two sources");
    assert!(p.gates >= p.flops.max(1), "need at least one gate per flop");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = NetlistBuilder::new();
    let mut nets: Vec<String> = Vec::new();
    for i in 0..p.inputs {
        let name = format!("I{i}");
        b.input(&name);
        nets.push(name);
    }
    for f in 0..p.flops {
        nets.push(format!("Q{f}"));
    }
    let mut unused: Vec<usize> = (0..nets.len()).collect();
    let mut gates: Vec<(GateKind, Vec<usize>)> = Vec::new();
    let mut depth = vec![0usize; nets.len()];
    let max_depth = max_depth(p.gates);

    for _ in 0..p.gates {
        let kind = pick_kind(&mut rng);
        let arity = match kind {
            GateKind::Not | GateKind::Buf => 1,
            GateKind::Xor | GateKind::Xnor => 2,
            _ if rng.gen_bool(0.25) => 3,
            _ => 2,
        };
        let arity = arity.min(nets.len());
        let mut ins: Vec<usize> = Vec::with_capacity(arity);
        while ins.len() < arity {
            let candidate = if !unused.is_empty() && rng.gen_bool(0.5) {
                unused[rng.gen_range(0..unused.len())]
            } else {
                rng.gen_range(0..nets.len())
            };
            if depth[candidate] < max_depth && !ins.contains(&candidate) {
                ins.push(candidate);
            }
        }
        unused.retain(|u| !ins.contains(u));
        let id = nets.len();
        nets.push(format!("G{}", gates.len()));
        depth.push(1 + ins.iter().map(|&i| depth[i]).max().unwrap_or(0));
        unused.push(id);
        gates.push((kind, ins));
    }

    // Flop D pins come from the deeper half of the logic, preferring sinks.
    let first_gate = p.inputs + p.flops;
    let deep: Vec<usize> = (first_gate + p.gates / 2..nets.len()).collect();
    let mut d_pins = Vec::with_capacity(p.flops);
    for _ in 0..p.flops {
        let sinks: Vec<usize> = unused.iter().copied().filter(|u| *u >= first_gate && !d_pins.contains(u)).collect();
        let pick = if let Some(&s) = sinks.choose(&mut rng) {
            s
        } else {
            *deep.choose(&mut rng).unwrap()
        };
        unused.retain(|&u| u != pick);
        d_pins.push(pick);
    }

    // Remaining sinks (including never-read sources) become outputs; surplus
    // sinks are folded together with XOR so the output count stays on target.
    let mut sinks: Vec<usize> = unused.clone();
    sinks.shuffle(&mut rng);
    while sinks.len() > p.outputs.max(1) {
        let a = sinks.pop().unwrap();
        let c = sinks.pop().unwrap();
        let id = nets.len();
        nets.push(format!("G{}", gates.len()));
        gates.push((GateKind::Xor, vec![a, c]));
        sinks.insert(0, id);
    }
    while sinks.len() < p.outputs {
        let pick = rng.gen_range(first_gate..nets.len());
        if !sinks.contains(&pick) {
            sinks.push(pick);
        }
    }
    sinks.sort();

    for &s in &sinks {
        b.output(&nets[s]);
    }
    for (f, &d) in d_pins.iter().enumerate() {
        b.flop(&nets[d], &nets[p.inputs + f]);
    }
    for (g, (kind, ins)) in gates.iter().enumerate() {
        let names: Vec<&str> = ins.iter().map(|&i| nets[i].as_str()).collect();
        b.gate(*kind, &names, &format!("G{g}"));
    }
    b.build().expect("generator emits well-formed netlists")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let p = SynthParams::default();
        let a = generate(&p, 7);
        let b = generate(&p, 7);
        assert_eq!(a, b);
        assert_eq!(a.inputs().len(), p.inputs);
        assert_eq!(a.outputs().len(), p.outputs);
        assert_eq!(a.flops().len(), p.flops);
        assert!(a.gates().len() >= p.gates);
        assert_ne!(generate(&p, 8), a);
    }

    #[test]
    fn no_dangling_nets() {
        let n = generate(&SynthParams::default(), 3);
        for g in n.gates() {
            let used = !n.fanout(g.output).is_empty()
                || n.outputs().contains(&g.output)
                || n.flops().iter().any(|f| f.d == g.output);
            assert!(used, "{} dangles", n.name(g.output));
        }
    }
}
