// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::plan::rc_preload_sequence;
use super::{Counting, View};
use crate::atpg::{cone_sources, Source};
use crate::chip::{Cell, ModeInputs, ScanChainLayout, ScanOracle};
use crate::locking::LockedNetlist;
use crate::netlist::{Cone, Netlist};
use crate::sat::{Cnf, Lit};

/// Loads random regular-cell contents through M1a right after power-on (so
/// every secure cell still holds its reset value 0) and checks the outputs
/// against simulation. Passes only if at least two loads predict different
/// outputs and every prediction matches.
pub(crate) fn probe_inner(
    oracle: &mut Counting<'_>,
    view: &View<'_>,
    patterns: usize,
    rng: &mut ChaCha8Rng,
) -> bool {
    let n = view.locked.netlist();
    let idle = vec![false; view.functional.len()];
    let mut predictions = Vec::new();
    for _ in 0..patterns.max(2) {
        let load: Vec<bool> = (0..n.flops().len()).map(|_| rng.gen()).collect();
        oracle.power_on(ModeInputs::M1A);
        for si in rc_preload_sequence(view.layout, &load) {
            oracle.step(ModeInputs::M1A, &idle, &si);
        }
        let observed = oracle.observe(ModeInputs::M0, &idle);
        let (predicted, _) = n.eval_bool(&vec![false; n.inputs().len()], &load);
        if observed != predicted {
            return false;
        }
        predictions.push(predicted);
    }
    predictions.iter().any(|p| *p != predictions[0])
}

/// Public entry to the scan-control probe.
pub fn probe_scan_control(
    oracle: &mut dyn ScanOracle,
    locked: &LockedNetlist,
    layout: &ScanChainLayout,
    patterns: usize,
    seed: u64,
) -> bool {
    let mut counting = Counting::new(oracle);
    let view = View::new(locked, layout);
    probe_inner(&mut counting, &view, patterns, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// SAT phase on its own: key index → bit for every secure cell some output
/// cone pins down.
pub fn preprocess(oracle: &mut dyn ScanOracle, locked: &LockedNetlist, layout: &ScanChainLayout) -> BTreeMap<usize, bool> {
    let mut counting = Counting::new(oracle);
    let view = View::new(locked, layout);
    preprocess_inner(&mut counting, &view, &BTreeMap::new(), super::DEFAULT_DIP_CAP).bits.into_iter().map(|(k, (b, _, _))| (k, b)).collect()
}

/// Result of the SAT attack on one output cone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DipOutcome {
    /// Secure cells whose value is the same in every key consistent with the
    /// observations.
    pub determined: BTreeMap<usize, bool>,
    pub iterations: usize,
    pub queries: u64,
    /// False when the cap was hit or the observations admit no key.
    pub resolved: bool,
}

fn encode_cone(cnf: &mut Cnf, n: &Netlist, cone: &Cone, lit: &BTreeMap<Source, Lit>) -> Lit {
    let lits = cnf.encode_netlist(
        n,
        |g| cone.gates.contains(&g),
        |_, net| Source::of_net(n, net).and_then(|s| lit.get(&s).copied()),
    );
    lits[cone.output.0].expect("cone output encoded")
}

/// Miter-based DIP loop on output `po`. Regular cells and functional PIs are
/// the free inputs, secure cells the key; bits in `known` are constants. The
/// loop gives up after `4 * 2^#SC` iterations, at most [`DEFAULT_DIP_CAP`].
pub fn dip_loop(
    oracle: &mut dyn ScanOracle,
    locked: &LockedNetlist,
    layout: &ScanChainLayout,
    po: usize,
    known: &BTreeMap<usize, bool>,
) -> DipOutcome {
    let mut counting = Counting::new(oracle);
    let view = View::new(locked, layout);
    dip_loop_inner(&mut counting, &view, po, known, super::DEFAULT_DIP_CAP)
}

fn dip_loop_inner(
    oracle: &mut Counting<'_>,
    view: &View<'_>,
    po: usize,
    known: &BTreeMap<usize, bool>,
    max_iterations: usize,
) -> DipOutcome {
    let n = view.locked.netlist();
    let cone = &view.cones[po];
    let start = oracle.queries;
    let mut cnf = Cnf::new();
    let mut free: Vec<Source> = Vec::new();
    let mut keys: Vec<(usize, Source)> = Vec::new();
    let (mut x, mut k1, mut k2) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
    for s in cone_sources(cone) {
        match view.cell_of(s) {
            Some(Cell::Sc(k)) => {
                let (a, b) = match known.get(&k) {
                    Some(&v) => (cnf.constant(v), cnf.constant(v)),
                    None => {
                        keys.push((k, s));
                        (cnf.var(), cnf.var())
                    }
                };
                k1.insert(s, a);
                k2.insert(s, b);
            }
            _ => {
                free.push(s);
                x.insert(s, cnf.var());
            }
        }
    }
    let with = |a: &BTreeMap<Source, Lit>, b: &BTreeMap<Source, Lit>| -> BTreeMap<Source, Lit> {
        a.iter().chain(b.iter()).map(|(&s, &l)| (s, l)).collect()
    };
    let y1 = encode_cone(&mut cnf, n, cone, &with(&x, &k1));
    let y2 = encode_cone(&mut cnf, n, cone, &with(&x, &k2));
    let miter = cnf.xor2(y1, y2);

    let cap = if keys.len() >= 12 { max_iterations } else { (4usize << keys.len()).min(max_iterations) };
    let mut iterations = 0;
    let mut resolved = true;
    while cnf.solve(&[miter]) {
        if iterations == cap {
            resolved = false;
            break;
        }
        iterations += 1;
        let dip: BTreeMap<Source, bool> = free.iter().map(|s| (*s, cnf.value(x[s]))).collect();
        let observed = query(oracle, view, &dip)[po];
        let consts: BTreeMap<Source, Lit> = dip.iter().map(|(&s, &b)| (s, cnf.constant(b))).collect();
        for key in [&k1, &k2] {
            let y = encode_cone(&mut cnf, n, cone, &with(&consts, key));
            cnf.clause(&[if observed { y } else { !y }]);
        }
    }
    let mut determined = BTreeMap::new();
    if resolved && cnf.solve(&[]) {
        let witness: Vec<(usize, Lit, bool)> = keys.iter().map(|&(k, s)| (k, k1[&s], cnf.value(k1[&s]))).collect();
        for (k, lit, v) in witness {
            if !cnf.solve(&[if v { !lit } else { lit }]) {
                determined.insert(k, v);
            }
        }
    } else {
        resolved = false;
    }
    DipOutcome { determined, iterations, queries: oracle.queries - start, resolved }
}

/// Applies a DIP: key load in M0, regular cells loaded through M1a, then a
/// clockless switch to M0 with the DIP's primary inputs.
fn query(oracle: &mut Counting<'_>, view: &View<'_>, dip: &BTreeMap<Source, bool>) -> Vec<bool> {
    let n = view.locked.netlist();
    let mut load = vec![false; n.flops().len()];
    let mut pi = vec![false; view.functional.len()];
    for (&s, &b) in dip {
        match s {
            Source::Flop(f) => load[f] = b,
            Source::Input(p) => {
                let slot = view.functional.iter().position(|&q| q == p).expect("functional input");
                pi[slot] = b;
            }
        }
    }
    let idle = vec![false; view.functional.len()];
    oracle.power_on(ModeInputs::M0);
    oracle.step(ModeInputs::M0, &idle, &vec![false; view.layout.chain_count()]);
    for si in rc_preload_sequence(view.layout, &load) {
        oracle.step(ModeInputs::M1A, &idle, &si);
    }
    oracle.observe(ModeInputs::M0, &pi)
}

pub(crate) struct Preprocessed {
    /// key index → (bit, queries of its cone, output name)
    pub bits: BTreeMap<usize, (bool, u64, String)>,
    pub attacked: usize,
    pub unresolved: usize,
}

/// Runs the DIP loop on every output cone that reads at least one secure cell
/// not yet known, folding each cone's results into later cones.
pub(crate) fn preprocess_inner(
    oracle: &mut Counting<'_>,
    view: &View<'_>,
    known: &BTreeMap<usize, bool>,
    max_iterations: usize,
) -> Preprocessed {
    let n = view.locked.netlist();
    let mut known = known.clone();
    let mut out = Preprocessed { bits: BTreeMap::new(), attacked: 0, unresolved: 0 };
    for po in 0..n.outputs().len() {
        let open = cone_sources(&view.cones[po])
            .into_iter()
            .any(|s| matches!(view.cell_of(s), Some(Cell::Sc(k)) if !known.contains_key(&k)));
        if !open {
            continue;
        }
        out.attacked += 1;
        let r = dip_loop_inner(oracle, view, po, &known, max_iterations);
        if !r.resolved {
            out.unresolved += 1;
        }
        for (k, b) in r.determined {
            known.insert(k, b);
            out.bits.insert(k, (b, r.queries, n.name(n.outputs()[po]).to_string()));
        }
    }
    out
}
