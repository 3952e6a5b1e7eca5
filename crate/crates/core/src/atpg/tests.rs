// SPDX-License-Identifier: Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::demo::six_cell_chain;
use crate::locking::lock_rll;
use crate::netlist::parse_bench;
use crate::synth::{generate, SynthParams};

/// Plain Boolean evaluation of one net, written independently of the
/// library simulators.
fn eval_net(n: &Netlist, values: &mut Vec<Option<bool>>, net: NetId) -> bool {
    if let Some(v) = values[net.0] {
        return v;
    }
    let Driver::Gate(g) = n.driver(net) else { panic!("source without value") };
    let gate = &n.gates()[g];
    let ins: Vec<bool> = gate.inputs.clone().into_iter().map(|i| eval_net(n, values, i)).collect();
    let v = match gate.kind {
        GateKind::And => ins.iter().all(|&b| b),
        GateKind::Nand => !ins.iter().all(|&b| b),
        GateKind::Or => ins.iter().any(|&b| b),
        GateKind::Nor => !ins.iter().any(|&b| b),
        GateKind::Xor => ins[0] ^ ins[1],
        GateKind::Xnor => !(ins[0] ^ ins[1]),
        GateKind::Not => !ins[0],
        GateKind::Buf => ins[0],
    };
    values[net.0] = Some(v);
    v
}

/// Every assignment of the unconstrained cone sources gives PO = expected[leak].
fn validate(n: &Netlist, cone: &Cone, c: &LeakCondition) -> bool {
    let free: Vec<Source> = cone_sources(cone).into_iter().filter(|&s| s != c.leak && !c.constraint(s).is_known()).collect();
    assert!(free.len() <= 16);
    for bits in 0u32..(1 << free.len()) {
        for leak in [false, true] {
            let mut values = vec![None; n.net_count()];
            for (s, b) in c.constrained() {
                values[s.net(n).0] = Some(b);
            }
            for (i, s) in free.iter().enumerate() {
                values[s.net(n).0] = Some(bits >> i & 1 == 1);
            }
            values[c.leak.net(n).0] = Some(leak);
            if eval_net(n, &mut values, cone.output) != c.expected[leak as usize] {
                return false;
            }
        }
    }
    true
}

#[test]
fn six_cell_condition() {
    let (d, _) = six_cell_chain(true);
    let n = d.netlist();
    let cone = n.extract_fanin_cone("out0").unwrap();
    let roles = SourceRoles {
        controllable: (0..5).filter(|&f| f != 3).map(Source::Flop).collect(),
        unknown: [Source::Input(5)].into(),
        known: BTreeMap::new(),
    };
    let c = gen_leak_condition(n, &cone, Source::Flop(3), &roles).unwrap();
    assert_eq!(c.constrained(), vec![(Source::Flop(2), true), (Source::Flop(4), false)]);
    assert_eq!(c.expected, [false, true]);
    assert_eq!(c.decode(true), Some(true));
    assert!(validate(n, &cone, &c));
}

#[test]
fn direct_buffer_path() {
    let n = parse_bench("INPUT(a)\nOUTPUT(y)\nq = DFF(a)\ny = BUFF(q)\n").unwrap();
    let cone = n.extract_fanin_cone("y").unwrap();
    let c = gen_leak_condition(&n, &cone, Source::Flop(0), &SourceRoles::default()).unwrap();
    assert!(c.constrained().is_empty());
    assert_eq!(c.expected, [false, true]);
}

#[test]
fn blocked_by_unknown_and() {
    let n = parse_bench("INPUT(a)\nINPUT(k)\nOUTPUT(y)\nq = DFF(a)\nb = BUFF(q)\ny = AND(b, k)\n").unwrap();
    let cone = n.extract_fanin_cone("y").unwrap();
    let roles = SourceRoles { unknown: [Source::Input(1)].into(), ..Default::default() };
    assert!(gen_leak_condition(&n, &cone, Source::Flop(0), &roles).is_none());
    let roles = SourceRoles { known: [(Source::Input(1), true)].into(), ..Default::default() };
    let c = gen_leak_condition(&n, &cone, Source::Flop(0), &roles).unwrap();
    assert_eq!(c.constrained(), vec![(Source::Input(1), true)]);
}

fn small_instances() -> Vec<(Netlist, Vec<Source>)> {
    let mut out = Vec::new();
    for seed in 0..12 {
        let n = generate(&SynthParams { inputs: 3, outputs: 4, flops: 8, gates: 40 }, seed);
        let d = lock_rll(&n, 3, seed).unwrap();
        let keys: Vec<Source> = (0..3).map(|k| Source::Input(d.locked.key_input_position(k))).collect();
        out.push((d.netlist().clone(), keys));
    }
    out
}

#[test]
fn generated_conditions_pass_exhaustive_validation() {
    let mut checked = 0;
    for (n, keys) in small_instances() {
        for &o in n.outputs() {
            let cone = n.fanin_cone(o);
            let sources = cone_sources(&cone);
            for &leak in &sources {
                if keys.contains(&leak) {
                    continue;
                }
                let roles = SourceRoles {
                    controllable: sources.iter().copied().filter(|s| !keys.contains(s) && *s != leak).collect(),
                    unknown: keys.iter().copied().filter(|s| sources.contains(s)).collect(),
                    known: BTreeMap::new(),
                };
                if let Some(c) = gen_leak_condition(&n, &cone, leak, &roles) {
                    assert!(validate(&n, &cone, &c));
                    assert!(c.unknown.iter().all(|&u| c.constraint(u) == Ternary::X));
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 50, "{checked}");
}

/// Exists-check by enumerating controllable assignments under ternary simulation.
fn exists_by_enumeration(n: &Netlist, cone: &Cone, leak: Source, roles: &SourceRoles) -> bool {
    let ctrl: Vec<Source> = roles.controllable.iter().copied().filter(|s| cone_sources(cone).contains(s)).collect();
    assert!(ctrl.len() <= 18);
    let target = cone.output;
    for bits in 0u32..(1 << ctrl.len()) {
        let mut ins = vec![Ternary::X; n.inputs().len()];
        let mut ffs = vec![Ternary::X; n.flops().len()];
        fn set(ins: &mut [Ternary], ffs: &mut [Ternary], s: Source, v: Ternary) {
            match s {
                Source::Input(p) => ins[p] = v,
                Source::Flop(f) => ffs[f] = v,
            }
        }
        for (i, &s) in ctrl.iter().enumerate() {
            set(&mut ins, &mut ffs, s, Ternary::from(bits >> i & 1 == 1));
        }
        for (&s, &b) in &roles.known {
            set(&mut ins, &mut ffs, s, b.into());
        }
        let mut pair = [Ternary::X; 2];
        for v in [false, true] {
            set(&mut ins, &mut ffs, leak, v.into());
            pair[v as usize] = n.eval_ternary_nets(&ins, &ffs)[target.0];
        }
        if pair[0].is_known() && pair[1].is_known() && pair[0] != pair[1] {
            return true;
        }
    }
    false
}

#[test]
fn solver_agrees_with_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (n, keys) in small_instances() {
        for &o in n.outputs() {
            let cone = n.fanin_cone(o);
            let sources: Vec<Source> = cone_sources(&cone).into_iter().collect();
            let Some(&leak) = sources.iter().find(|s| !keys.contains(s)) else { continue };
            for _ in 0..4 {
                let mut roles = SourceRoles::default();
                for &s in &sources {
                    if s == leak {
                        continue;
                    }
                    match rng.gen_range(0..3) {
                        0 => {
                            roles.controllable.insert(s);
                        }
                        1 => {
                            roles.unknown.insert(s);
                        }
                        _ => {
                            roles.known.insert(s, rng.gen());
                        }
                    }
                }
                let found = gen_leak_condition(&n, &cone, leak, &roles).is_some();
                assert_eq!(found, exists_by_enumeration(&n, &cone, leak, &roles));
            }
        }
    }
}

#[test]
fn knowledge_never_hurts() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (n, keys) in small_instances() {
        for &o in n.outputs() {
            let cone = n.fanin_cone(o);
            let sources = cone_sources(&cone);
            for &leak in sources.iter().filter(|s| !keys.contains(s)) {
                let in_cone: Vec<Source> = keys.iter().copied().filter(|k| sources.contains(k)).collect();
                let mut roles = SourceRoles {
                    controllable: sources.iter().copied().filter(|s| !keys.contains(s) && *s != leak).collect(),
                    unknown: in_cone.iter().copied().collect(),
                    known: BTreeMap::new(),
                };
                let before = gen_leak_condition(&n, &cone, leak, &roles).is_some();
                for k in in_cone {
                    roles.unknown.remove(&k);
                    roles.known.insert(k, rng.gen());
                }
                let after = gen_leak_condition(&n, &cone, leak, &roles).is_some();
                assert!(!before || after);
            }
        }
    }
}

#[test]
fn dimacs_dump_is_well_formed() {
    let (d, _) = six_cell_chain(false);
    let n = d.netlist();
    let cone = n.extract_fanin_cone("out0").unwrap();
    let text = leak_condition_dimacs(n, &cone, Source::Flop(3), &SourceRoles::default());
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("p cnf "));
    let clauses: usize = header.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert_eq!(text.lines().count(), clauses + 1);
}

fn brute_force_detectable(n: &Netlist, fault: Fault) -> bool {
    let total = n.inputs().len() + n.flops().len();
    for bits in 0u32..(1 << total) {
        let mut good = vec![None; n.net_count()];
        for i in 0..total {
            let net = if i < n.inputs().len() { n.inputs()[i] } else { n.flops()[i - n.inputs().len()].q };
            good[net.0] = Some(bits >> i & 1 == 1);
        }
        let mut bad = good.clone();
        bad[fault.net.0] = Some(fault.stuck);
        let observed: Vec<NetId> = n.outputs().iter().copied().chain(n.flops().iter().map(|f| f.d)).collect();
        for o in observed {
            if eval_net(n, &mut good, o) != eval_net(n, &mut bad, o) {
                return true;
            }
        }
    }
    false
}

fn exhaustive_patterns(n: &Netlist) -> Vec<Pattern> {
    let (pi, ff) = (n.inputs().len(), n.flops().len());
    (0u32..(1 << (pi + ff)))
        .map(|b| Pattern {
            inputs: (0..pi).map(|i| b >> i & 1 == 1).collect(),
            state: (0..ff).map(|i| b >> (pi + i) & 1 == 1).collect(),
        })
        .collect()
}

#[test]
fn coverage_basics() {
    let n = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\n").unwrap();
    assert_eq!(fault_coverage(&n, &[]).unwrap(), 0.0);
    let y = n.find("y").unwrap();
    let p = Pattern { inputs: vec![false], state: vec![] };
    assert!(detects(&n, Fault { net: y, stuck: false }, &p));
    assert!(!detects(&n, Fault { net: y, stuck: true }, &p));
    assert_eq!(fault_coverage(&n, &exhaustive_patterns(&n)).unwrap(), 1.0);
}

#[test]
fn exhaustive_coverage_matches_brute_force() {
    for seed in 0..6 {
        let n = generate(&SynthParams { inputs: 4, outputs: 3, flops: 5, gates: 30 }, seed);
        let faults = collapsed_faults(&n);
        let detectable = faults.iter().filter(|&&f| brute_force_detectable(&n, f)).count();
        let cov = fault_coverage(&n, &exhaustive_patterns(&n)).unwrap();
        assert!((cov - detectable as f64 / faults.len() as f64).abs() < 1e-12);
        for &f in &faults {
            match test_for_fault(&n, f) {
                Some(p) => assert!(detects(&n, f, &p)),
                None => assert!(!brute_force_detectable(&n, f)),
            }
        }
    }
}

#[test]
fn coverage_grows_with_patterns_and_stream_is_prefix_closed() {
    let n = generate(&SynthParams { inputs: 6, outputs: 6, flops: 10, gates: 120 }, 8);
    let long = pattern_stream(&n, 200, 1);
    let short = pattern_stream(&n, 90, 1);
    assert_eq!(&long[..90], &short[..]);
    let mut last = 0.0;
    for k in [0, 10, 64, 80, 120, 200] {
        let c = fault_coverage(&n, &long[..k]).unwrap();
        assert!(c >= last);
        last = c;
    }
    let all: Vec<Fault> = collapsed_faults(&n);
    let detectable = all.iter().filter(|&&f| test_for_fault(&n, f).is_some()).count();
    assert!((last - detectable as f64 / all.len() as f64).abs() < 1e-12);
}
