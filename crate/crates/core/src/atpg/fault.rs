// SPDX-License-Identifier: Apache-2.0

//! Single stuck-at faults on the full-scan combinational view: primary inputs
//! and flop outputs are controllable, primary outputs and flop inputs are
//! observable.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{GateKind, NetId, Netlist};
use crate::sat::{Cnf, Lit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fault {
    pub net: NetId,
    pub stuck: bool,
}

/// A full Boolean assignment of primary inputs and flop outputs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pattern {
    pub inputs: Vec<bool>,
    pub state: Vec<bool>,
}

impl Pattern {
    pub fn random(n: &Netlist, rng: &mut impl Rng) -> Pattern {
        Pattern {
            inputs: (0..n.inputs().len()).map(|_| rng.gen()).collect(),
            state: (0..n.flops().len()).map(|_| rng.gen()).collect(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AtpgError {
    #[error("the netlist has no faults to simulate")]
    NoFaults,
}

fn observed_nets(n: &Netlist) -> Vec<bool> {
    let mut obs = vec![false; n.net_count()];
    for &o in n.outputs() {
        obs[o.0] = true;
    }
    for f in n.flops() {
        obs[f.d.0] = true;
    }
    obs
}

/// Stuck-at-0 and stuck-at-1 on every net, with faults on the single-fanout,
/// unobserved input of a BUF or NOT merged into the gate's output faults.
pub fn collapsed_faults(n: &Netlist) -> Vec<Fault> {
    let obs = observed_nets(n);
    let mut merged = vec![false; n.net_count()];
    for g in n.gates() {
        if matches!(g.kind, GateKind::Buf | GateKind::Not) {
            let i = g.inputs[0];
            if n.fanout(i).len() == 1 && !obs[i.0] {
                merged[i.0] = true;
            }
        }
    }
    (0..n.net_count())
        .filter(|&i| !merged[i])
        .flat_map(|i| [false, true].map(|stuck| Fault { net: NetId(i), stuck }))
        .collect()
}

struct FaultSim<'a> {
    n: &'a Netlist,
    obs: Vec<bool>,
    topo_rank: Vec<usize>,
}

impl<'a> FaultSim<'a> {
    fn new(n: &'a Netlist) -> Self {
        let mut topo_rank = vec![0; n.gates().len()];
        for (r, &g) in n.topo_order().iter().enumerate() {
            topo_rank[g] = r;
        }
        FaultSim { n, obs: observed_nets(n), topo_rank }
    }

    fn cone(&self, net: NetId) -> Vec<usize> {
        let mut gates: Vec<usize> = self.n.fanout_gates(net).into_iter().collect();
        gates.sort_by_key(|&g| self.topo_rank[g]);
        gates
    }

    /// Bit mask of the patterns in `good` (one word batch) that detect `fault`.
    fn detect_word(&self, fault: Fault, cone: &[usize], good: &[u64], scratch: &mut [u64]) -> u64 {
        let stuck = if fault.stuck { !0 } else { 0 };
        scratch[fault.net.0] = stuck;
        let mut diff = if self.obs[fault.net.0] { good[fault.net.0] ^ stuck } else { 0 };
        for &g in cone {
            let gate = &self.n.gates()[g];
            let v = gate.kind.eval_words(gate.inputs.iter().map(|i| scratch[i.0]));
            scratch[gate.output.0] = v;
            if self.obs[gate.output.0] {
                diff |= v ^ good[gate.output.0];
            }
        }
        scratch[fault.net.0] = good[fault.net.0];
        for &g in cone {
            let out = self.n.gates()[g].output.0;
            scratch[out] = good[out];
        }
        diff
    }
}

fn pack(patterns: &[Pattern], n: &Netlist) -> (Vec<u64>, Vec<u64>, u64) {
    let mut pi = vec![0u64; n.inputs().len()];
    let mut st = vec![0u64; n.flops().len()];
    for (b, p) in patterns.iter().enumerate() {
        for (i, &v) in p.inputs.iter().enumerate() {
            pi[i] |= (v as u64) << b;
        }
        for (i, &v) in p.state.iter().enumerate() {
            st[i] |= (v as u64) << b;
        }
    }
    let mask = if patterns.len() == 64 { !0 } else { (1u64 << patterns.len()) - 1 };
    (pi, st, mask)
}

/// Indices into `faults` detected by at least one pattern.
fn detected_set(n: &Netlist, faults: &[Fault], patterns: &[Pattern]) -> Vec<bool> {
    let sim = FaultSim::new(n);
    let cones: Vec<Vec<usize>> = faults.iter().map(|f| sim.cone(f.net)).collect();
    let mut detected = vec![false; faults.len()];
    for batch in patterns.chunks(64) {
        let (pi, st, mask) = pack(batch, n);
        let good = n.eval_words_nets(&pi, &st);
        let mut scratch = good.clone();
        for (i, f) in faults.iter().enumerate() {
            if !detected[i] && sim.detect_word(*f, &cones[i], &good, &mut scratch) & mask != 0 {
                detected[i] = true;
            }
        }
        if detected.iter().all(|&d| d) {
            break;
        }
    }
    detected
}

/// Fraction of collapsed stuck-at faults detected by some pattern.
pub fn fault_coverage(n: &Netlist, patterns: &[Pattern]) -> Result<f64, AtpgError> {
    let faults = collapsed_faults(n);
    if faults.is_empty() {
        return Err(AtpgError::NoFaults);
    }
    let hit = detected_set(n, &faults, patterns).iter().filter(|&&d| d).count();
    Ok(hit as f64 / faults.len() as f64)
}

/// Whether one pattern detects one fault.
pub fn detects(n: &Netlist, fault: Fault, pattern: &Pattern) -> bool {
    detected_set(n, &[fault], std::slice::from_ref(pattern))[0]
}

/// SAT-based test generation for a single fault; `None` when redundant.
pub fn test_for_fault(n: &Netlist, fault: Fault) -> Option<Pattern> {
    let mut cnf = Cnf::new();
    let good = cnf.encode_netlist(n, |_| true, |c, _| Some(c.var()));
    let good: Vec<Lit> = good.into_iter().map(|l| l.expect("every net encoded")).collect();
    let mut bad = good.clone();
    bad[fault.net.0] = cnf.constant(fault.stuck);
    let obs = observed_nets(n);
    let fanout: BTreeSet<usize> = n.fanout_gates(fault.net);
    let mut diffs = Vec::new();
    if obs[fault.net.0] {
        diffs.push(cnf.xor2(good[fault.net.0], bad[fault.net.0]));
    }
    for &g in n.topo_order() {
        if !fanout.contains(&g) {
            continue;
        }
        let gate = &n.gates()[g];
        let ins: Vec<Lit> = gate.inputs.iter().map(|i| bad[i.0]).collect();
        let out = cnf.gate(gate.kind, &ins);
        bad[gate.output.0] = out;
        if obs[gate.output.0] {
            diffs.push(cnf.xor2(good[gate.output.0], out));
        }
    }
    if diffs.is_empty() {
        return None;
    }
    let any = cnf.or_n(&diffs);
    if !cnf.solve(&[any]) {
        return None;
    }
    Some(Pattern {
        inputs: n.inputs().iter().map(|i| cnf.value(good[i.0])).collect(),
        state: n.flops().iter().map(|f| cnf.value(good[f.q.0])).collect(),
    })
}

const RANDOM_PREFIX: usize = 64;

/// Deterministic pattern sequence: 64 random patterns, then one SAT-generated
/// test for each fault they leave undetected (skipping faults already caught
/// by earlier tests), then random patterns. Truncated to `budget`, so a
/// smaller budget always yields a prefix of a larger one.
pub fn pattern_stream(n: &Netlist, budget: usize, seed: u64) -> Vec<Pattern> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Pattern> = (0..RANDOM_PREFIX.min(budget)).map(|_| Pattern::random(n, &mut rng)).collect();
    if out.len() == budget {
        return out;
    }
    let faults = collapsed_faults(n);
    let detected = detected_set(n, &faults, &out);
    let mut open: Vec<Fault> = faults.iter().zip(&detected).filter(|(_, &d)| !d).map(|(f, _)| *f).collect();
    while let Some(f) = open.first().copied() {
        if out.len() == budget {
            return out;
        }
        match test_for_fault(n, f) {
            Some(p) => {
                let caught = detected_set(n, &open, std::slice::from_ref(&p));
                let mut keep = caught.iter().map(|&c| !c);
                open.retain(|_| keep.next().unwrap());
                open.retain(|x| *x != f);
                out.push(p);
            }
            None => {
                open.remove(0);
            }
        }
    }
    while out.len() < budget {
        out.push(Pattern::random(n, &mut rng));
    }
    out
}
