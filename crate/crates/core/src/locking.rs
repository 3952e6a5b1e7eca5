// SPDX-License-Identifier: Apache-2.0

//! Key-gate insertion.
//!
//! Each key bit drives one XOR or XNOR gate spliced into an internal net. An
//! XOR gate is transparent when its key bit is 0 and an XNOR gate when it is
//! 1, so drawing the polarity from the key bit keeps the hidden key uniform.
//! Key inputs are ordinary primary inputs named `keyinput<i>`.
//!
//! Two placement strategies are provided: uniform random placement, and a
//! greedy interference heuristic in the spirit of strong logic locking
//! (reported as `sll-heuristic`, since the exact clique construction of the
//! original scheme is not reproduced).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{Driver, GateKind, NetId, Netlist, NetlistBuilder, NetlistError};
use crate::sat::{Cnf, Lit};

pub const KEY_INPUT_PREFIX: &str = "keyinput";

#[derive(Debug, Error)]
pub enum LockError {
    #[error("cannot place {requested} key gates: only {available} eligible internal nets")]
    TooManyKeyBits { requested: usize, available: usize },
    #[error("key length {got} does not match the {expected} key gates of the design")]
    KeyLength { expected: usize, got: usize },
    #[error("net `{0}` already uses the reserved key-input naming")]
    NameClash(String),
    #[error("key input `{0}` feeds something other than a single XOR/XNOR key gate")]
    KeyGateShape(String),
    #[error("key inputs are not numbered 0..K-1 (missing keyinput{0})")]
    KeyNumbering(usize),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Key(Vec<bool>);

impl Key {
    pub fn new(bits: Vec<bool>) -> Self {
        Key(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bit(&self, index: usize) -> bool {
        self.0[index]
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// One bit per line, `0` or `1`.
    pub fn to_text(&self) -> String {
        self.0.iter().map(|&b| if b { "1\n" } else { "0\n" }).collect()
    }

    pub fn from_text(text: &str) -> Option<Key> {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| match l {
                "0" => Some(false),
                "1" => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<bool>>>()
            .map(Key)
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    Xor,
    Xnor,
}

impl Polarity {
    /// The key bit under which this gate passes its host signal unchanged.
    pub fn transparent_bit(self) -> bool {
        matches!(self, Polarity::Xnor)
    }

    fn kind(self) -> GateKind {
        match self {
            Polarity::Xor => GateKind::Xor,
            Polarity::Xnor => GateKind::Xnor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyGateRecord {
    pub index: usize,
    /// Name of the net cut by the key gate; after locking it is the key gate output.
    pub host: String,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Rll,
    SllHeuristic,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Rll => "rll",
            Scheme::SllHeuristic => "sll-heuristic",
        })
    }
}

/// The attacker-visible part of a locked design: the netlist and where its
/// key inputs sit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockedNetlist {
    netlist: Netlist,
    records: Vec<KeyGateRecord>,
    /// `key_inputs[i]` is the primary-input position of `keyinput<i>`.
    key_inputs: Vec<usize>,
}

impl LockedNetlist {
    /// Recognises `keyinput<i>` primary inputs and the key gates they drive.
    pub fn from_netlist(netlist: Netlist) -> Result<Self, LockError> {
        let mut by_index = BTreeMap::new();
        for (pos, &net) in netlist.inputs().iter().enumerate() {
            let name = netlist.name(net);
            if let Some(idx) = name.strip_prefix(KEY_INPUT_PREFIX).and_then(|s| s.parse::<usize>().ok()) {
                by_index.insert(idx, pos);
            }
        }
        let mut key_inputs = Vec::with_capacity(by_index.len());
        for (expected, (idx, pos)) in by_index.into_iter().enumerate() {
            if idx != expected {
                return Err(LockError::KeyNumbering(expected));
            }
            key_inputs.push(pos);
        }
        let mut records = Vec::with_capacity(key_inputs.len());
        for (index, &pos) in key_inputs.iter().enumerate() {
            let net = netlist.inputs()[pos];
            let shape_err = || LockError::KeyGateShape(netlist.name(net).to_string());
            let [g] = netlist.fanout(net) else {
                return Err(shape_err());
            };
            let gate = &netlist.gates()[*g];
            let polarity = match gate.kind {
                GateKind::Xor => Polarity::Xor,
                GateKind::Xnor => Polarity::Xnor,
                _ => return Err(shape_err()),
            };
            if gate.inputs.iter().filter(|&&i| i == net).count() != 1 {
                return Err(shape_err());
            }
            records.push(KeyGateRecord { index, host: netlist.name(gate.output).to_string(), polarity });
        }
        Ok(LockedNetlist { netlist, records, key_inputs })
    }

    pub fn netlist(&self) -> &Netlist {
        &self.netlist
    }

    pub fn records(&self) -> &[KeyGateRecord] {
        &self.records
    }

    pub fn key_len(&self) -> usize {
        self.key_inputs.len()
    }

    pub fn key_input_position(&self, index: usize) -> usize {
        self.key_inputs[index]
    }

    /// Key index for a primary-input position, if that input is a key input.
    pub fn key_index_of_input(&self, position: usize) -> Option<usize> {
        self.key_inputs.iter().position(|&p| p == position)
    }

    /// Primary-input positions that are not key inputs, in declaration order.
    pub fn functional_inputs(&self) -> Vec<usize> {
        (0..self.netlist.inputs().len()).filter(|p| !self.key_inputs.contains(p)).collect()
    }

    /// Substitutes constants for the key inputs and folds each key gate into a
    /// buffer or inverter.
    pub fn apply_key(&self, key: &Key) -> Result<Netlist, LockError> {
        if key.len() != self.key_len() {
            return Err(LockError::KeyLength { expected: self.key_len(), got: key.len() });
        }
        let n = &self.netlist;
        let key_of_net = |net: NetId| n.input_position(net).and_then(|p| self.key_index_of_input(p));
        let mut b = NetlistBuilder::new();
        for &i in n.inputs() {
            if key_of_net(i).is_none() {
                b.input(n.name(i));
            }
        }
        for &o in n.outputs() {
            b.output(n.name(o));
        }
        for &g in n.topo_order() {
            let gate = &n.gates()[g];
            let keyed: Vec<usize> = gate.inputs.iter().filter_map(|&i| key_of_net(i)).collect();
            let out = n.name(gate.output);
            match keyed.as_slice() {
                [] => {
                    let ins: Vec<&str> = gate.inputs.iter().map(|&i| n.name(i)).collect();
                    b.gate(gate.kind, &ins, out);
                }
                [k] => {
                    let other = gate.inputs.iter().find(|&&i| key_of_net(i).is_none()).copied();
                    let other = other.ok_or_else(|| LockError::KeyGateShape(out.to_string()))?;
                    let invert = match gate.kind {
                        GateKind::Xor => key.bit(*k),
                        GateKind::Xnor => !key.bit(*k),
                        _ => return Err(LockError::KeyGateShape(out.to_string())),
                    };
                    let kind = if invert { GateKind::Not } else { GateKind::Buf };
                    b.gate(kind, &[n.name(other)], out);
                }
                _ => return Err(LockError::KeyGateShape(out.to_string())),
            }
        }
        for f in n.flops() {
            b.flop(n.name(f.d), n.name(f.q));
        }
        Ok(b.build()?)
    }
}

#[derive(Debug, Clone)]
pub struct LockedDesign {
    pub locked: LockedNetlist,
    key: Key,
    pub scheme: Scheme,
    /// Pairwise interference score of the chosen host nets.
    pub interference: u64,
}

impl LockedDesign {
    pub fn new(locked: LockedNetlist, key: Key, scheme: Scheme, interference: u64) -> Result<Self, LockError> {
        if key.len() != locked.key_len() {
            return Err(LockError::KeyLength { expected: locked.key_len(), got: key.len() });
        }
        Ok(LockedDesign { locked, key, scheme, interference })
    }

    pub fn netlist(&self) -> &Netlist {
        self.locked.netlist()
    }

    pub fn records(&self) -> &[KeyGateRecord] {
        self.locked.records()
    }

    pub fn hidden_key(&self) -> &Key {
        &self.key
    }

    pub fn apply_key(&self, key: &Key) -> Result<Netlist, LockError> {
        self.locked.apply_key(key)
    }
}

/// Gate-output nets that may host a key gate: not a flop D pin.
pub fn eligible_nets(n: &Netlist) -> Vec<NetId> {
    let flop_d: BTreeSet<NetId> = n.flops().iter().map(|f| f.d).collect();
    n.gates()
        .iter()
        .map(|g| g.output)
        .filter(|net| !flop_d.contains(net))
        .collect()
}

pub fn lock_rll(n: &Netlist, key_bits: usize, seed: u64) -> Result<LockedDesign, LockError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = shuffled_pool(n, key_bits, &mut rng)?;
    let hosts: Vec<NetId> = pool[..key_bits].to_vec();
    insert_key_gates(n, &hosts, Scheme::Rll, &mut rng)
}

pub fn lock_sll_heuristic(n: &Netlist, key_bits: usize, seed: u64) -> Result<LockedDesign, LockError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = shuffled_pool(n, key_bits, &mut rng)?;
    if key_bits == 1 {
        return insert_key_gates(n, &pool[..1], Scheme::SllHeuristic, &mut rng);
    }
    pool.truncate(SLL_POOL_LIMIT.max(key_bits));
    let scorer = Interference::new(n, &pool);
    let m = pool.len();

    // Seed the set with the best pair, then grow it greedily. Ties keep the
    // earliest candidate in the shuffled pool.
    let mut best = (0, 1, 0u64);
    for a in 0..m {
        for b in a + 1..m {
            let s = scorer.pair(a, b);
            if s > best.2 {
                best = (a, b, s);
            }
        }
    }
    let mut chosen = vec![best.0, best.1];
    let mut total: Vec<u64> = (0..m).map(|c| scorer.pair(c, best.0) + scorer.pair(c, best.1)).collect();
    while chosen.len() < key_bits {
        let next = (0..m)
            .filter(|c| !chosen.contains(c))
            .fold(None, |acc: Option<usize>, c| match acc {
                Some(a) if total[a] >= total[c] => Some(a),
                _ => Some(c),
            })
            .expect("pool holds at least key_bits candidates");
        chosen.push(next);
        for (c, t) in total.iter_mut().enumerate() {
            *t += scorer.pair(c, next);
        }
    }
    let hosts: Vec<NetId> = chosen.iter().map(|&c| pool[c]).collect();
    insert_key_gates(n, &hosts, Scheme::SllHeuristic, &mut rng)
}

const SLL_POOL_LIMIT: usize = 256;

fn shuffled_pool(n: &Netlist, key_bits: usize, rng: &mut ChaCha8Rng) -> Result<Vec<NetId>, LockError> {
    let mut pool = eligible_nets(n);
    if key_bits == 0 || key_bits > pool.len() {
        return Err(LockError::TooManyKeyBits { requested: key_bits, available: pool.len() });
    }
    pool.shuffle(rng);
    Ok(pool)
}

fn insert_key_gates(
    n: &Netlist,
    hosts: &[NetId],
    scheme: Scheme,
    rng: &mut ChaCha8Rng,
) -> Result<LockedDesign, LockError> {
    let bits: Vec<bool> = hosts.iter().map(|_| rng.gen::<bool>()).collect();
    for net in (0..n.net_count()).map(NetId) {
        let name = n.name(net);
        if name.starts_with(KEY_INPUT_PREFIX) && name[KEY_INPUT_PREFIX.len()..].parse::<usize>().is_ok() {
            return Err(LockError::NameClash(name.to_string()));
        }
    }

    let mut b = NetlistBuilder::new();
    for net in (0..n.net_count()).map(NetId) {
        b.net(n.name(net));
    }
    for &i in n.inputs() {
        b.input(n.name(i));
    }
    let key_names: Vec<String> = (0..hosts.len()).map(|i| format!("{KEY_INPUT_PREFIX}{i}")).collect();
    for k in &key_names {
        b.input(k);
    }
    for &o in n.outputs() {
        b.output(n.name(o));
    }
    let mut renamed: BTreeMap<NetId, String> = BTreeMap::new();
    for &h in hosts {
        let pre = b.fresh_name(&format!("{}_kg", n.name(h)));
        b.net(&pre);
        renamed.insert(h, pre);
    }
    for &g in n.topo_order() {
        let gate = &n.gates()[g];
        let ins: Vec<&str> = gate.inputs.iter().map(|&i| n.name(i)).collect();
        let out = renamed.get(&gate.output).map(String::as_str).unwrap_or(n.name(gate.output));
        b.gate(gate.kind, &ins, out);
    }
    let mut records = Vec::with_capacity(hosts.len());
    for (index, &h) in hosts.iter().enumerate() {
        let polarity = if bits[index] { Polarity::Xnor } else { Polarity::Xor };
        b.gate(polarity.kind(), &[&renamed[&h], &key_names[index]], n.name(h));
        records.push(KeyGateRecord { index, host: n.name(h).to_string(), polarity });
    }
    for f in n.flops() {
        b.flop(n.name(f.d), n.name(f.q));
    }
    let netlist = b.build()?;
    let locked = LockedNetlist::from_netlist(netlist)?;
    debug_assert_eq!(locked.records(), records.as_slice());
    let interference = interference_score(n, hosts);
    LockedDesign::new(locked, Key::new(bits), scheme, interference)
}

/// Pairwise interference between candidate host nets: the number of gates in
/// the intersection of their fan-out cones, doubled when one net lies on the
/// other's propagation path.
struct Interference {
    cones: Vec<Vec<u64>>,
    drivers: Vec<Option<usize>>,
}

impl Interference {
    fn new(n: &Netlist, nets: &[NetId]) -> Self {
        let words = n.gates().len().div_ceil(64).max(1);
        let cones = nets
            .iter()
            .map(|&net| {
                let mut bits = vec![0u64; words];
                for g in n.fanout_gates(net) {
                    bits[g / 64] |= 1 << (g % 64);
                }
                bits
            })
            .collect();
        let drivers = nets
            .iter()
            .map(|&net| match n.driver(net) {
                Driver::Gate(g) => Some(g),
                _ => None,
            })
            .collect();
        Interference { cones, drivers }
    }

    fn contains(&self, cone: usize, gate: Option<usize>) -> bool {
        gate.is_some_and(|g| self.cones[cone][g / 64] >> (g % 64) & 1 == 1)
    }

    fn pair(&self, a: usize, b: usize) -> u64 {
        if a == b {
            return 0;
        }
        let overlap: u64 = self.cones[a]
            .iter()
            .zip(&self.cones[b])
            .map(|(x, y)| (x & y).count_ones() as u64)
            .sum();
        let dominates = self.contains(a, self.drivers[b]) || self.contains(b, self.drivers[a]);
        if dominates {
            2 * overlap
        } else {
            overlap
        }
    }
}

/// Sum of pairwise interference over a set of host nets of `n`.
pub fn interference_score(n: &Netlist, hosts: &[NetId]) -> u64 {
    let scorer = Interference::new(n, hosts);
    let mut total = 0;
    for a in 0..hosts.len() {
        for b in a + 1..hosts.len() {
            total += scorer.pair(a, b);
        }
    }
    total
}

/// Searches for an input/state assignment on which the two netlists differ in
/// a primary output or a next-state value. Inputs and flops are matched by name;
/// inputs present in only one netlist are left free.
pub fn find_difference(a: &Netlist, b: &Netlist) -> Option<BTreeMap<String, bool>> {
    let mut cnf = Cnf::new();
    let mut shared: BTreeMap<String, Lit> = BTreeMap::new();
    let mut source = |cnf: &mut Cnf, n: &Netlist, net: NetId| -> Option<Lit> {
        if n.is_gate_output(net) {
            return None;
        }
        let name = n.name(net).to_string();
        Some(*shared.entry(name).or_insert_with(|| cnf.var()))
    };
    let la = cnf.encode_netlist(a, |_| true, |c, net| source(c, a, net));
    let lb = cnf.encode_netlist(b, |_| true, |c, net| source(c, b, net));
    let mut diffs = Vec::new();
    let observed = |n: &Netlist| -> Vec<(String, NetId)> {
        let mut v: Vec<(String, NetId)> = n.outputs().iter().map(|&o| (format!("po:{}", n.name(o)), o)).collect();
        v.extend(n.flops().iter().map(|f| (format!("d:{}", n.name(f.q)), f.d)));
        v
    };
    let ob: BTreeMap<String, NetId> = observed(b).into_iter().collect();
    for (name, na) in observed(a) {
        if let Some(&nb) = ob.get(&name) {
            let x = cnf.xor2(la[na.0].unwrap(), lb[nb.0].unwrap());
            diffs.push(x);
        }
    }
    let any = cnf.or_n(&diffs);
    if !cnf.solve(&[any]) {
        return None;
    }
    Some(shared.iter().map(|(k, &l)| (k.clone(), cnf.value(l))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_bench;
    use crate::synth::{generate, SynthParams};

    fn small() -> Netlist {
        parse_bench(
            "INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(y)\nOUTPUT(z)\n\
             n1 = AND(a, b)\nn2 = OR(n1, c)\nn3 = XOR(n2, a)\ny = NOT(n3)\nz = NAND(n1, n3)\n",
        )
        .unwrap()
    }

    fn exhaustive_outputs(n: &Netlist) -> Vec<Vec<bool>> {
        let k = n.inputs().len();
        (0..1u32 << k)
            .map(|v| {
                let pi: Vec<bool> = (0..k).map(|i| v >> i & 1 == 1).collect();
                n.eval_bool(&pi, &vec![false; n.flops().len()]).0
            })
            .collect()
    }

    #[test]
    fn xor_key_gate_with_zero_is_transparent() {
        let n = small();
        for seed in 0..20 {
            let d = lock_rll(&n, 1, seed).unwrap();
            let rec = &d.records()[0];
            let transparent = Key::new(vec![rec.polarity.transparent_bit()]);
            assert_eq!(d.hidden_key(), &transparent);
            let unlocked = d.apply_key(&transparent).unwrap();
            assert_eq!(exhaustive_outputs(&unlocked), exhaustive_outputs(&n));
        }
    }

    #[test]
    fn flipped_single_bit_changes_some_output() {
        let n = small();
        for seed in 0..20 {
            let d = lock_rll(&n, 1, seed).unwrap();
            let wrong = Key::new(vec![!d.hidden_key().bit(0)]);
            let unlocked = d.apply_key(&wrong).unwrap();
            assert_ne!(exhaustive_outputs(&unlocked), exhaustive_outputs(&n), "seed {seed}");
            assert!(find_difference(&unlocked, &n).is_some());
        }
    }

    #[test]
    fn xnor_with_one_becomes_buffer() {
        let n = small();
        let d = (0..50).map(|s| lock_rll(&n, 1, s).unwrap()).find(|d| d.records()[0].polarity == Polarity::Xnor).unwrap();
        let unlocked = d.apply_key(&Key::new(vec![true])).unwrap();
        let host = unlocked.find(&d.records()[0].host).unwrap();
        let g = &unlocked.gates()[match unlocked.driver(host) {
            Driver::Gate(g) => g,
            _ => unreachable!(),
        }];
        assert_eq!(g.kind, GateKind::Buf);
    }

    #[test]
    fn correct_key_is_equivalent_on_generated_circuit() {
        let n = generate(&SynthParams { gates: 200, ..SynthParams::default() }, 3);
        for seed in 0..4 {
            let d = lock_rll(&n, 8, seed).unwrap();
            assert_eq!(d.records().len(), 8);
            let unlocked = d.apply_key(d.hidden_key()).unwrap();
            assert_eq!(find_difference(&unlocked, &n), None);
        }
    }

    #[test]
    fn too_many_bits() {
        let n = small();
        let err = lock_rll(&n, 99, 0).unwrap_err();
        assert!(matches!(err, LockError::TooManyKeyBits { requested: 99, .. }));
        assert!(err.to_string().contains("99"));
    }

    #[test]
    fn deterministic_given_seed() {
        let n = generate(&SynthParams::default(), 1);
        let a = lock_sll_heuristic(&n, 6, 9).unwrap();
        let b = lock_sll_heuristic(&n, 6, 9).unwrap();
        assert_eq!(a.netlist(), b.netlist());
        assert_eq!(a.hidden_key(), b.hidden_key());
        let c = lock_rll(&n, 6, 9).unwrap();
        let d = lock_rll(&n, 6, 9).unwrap();
        assert_eq!(c.records(), d.records());
    }

    #[test]
    fn key_length_mismatch() {
        let d = lock_rll(&small(), 2, 0).unwrap();
        assert!(matches!(d.apply_key(&Key::new(vec![true])), Err(LockError::KeyLength { expected: 2, got: 1 })));
    }

    #[test]
    fn key_text_roundtrip() {
        let k = Key::new(vec![true, false, true]);
        assert_eq!(k.to_text(), "1\n0\n1\n");
        assert_eq!(Key::from_text(&k.to_text()), Some(k));
        assert_eq!(Key::from_text("2\n"), None);
    }
}
