// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;

use super::*;
use crate::chip::{stitch, ScPlacement};
use crate::demo::six_cell_chain;
use crate::locking::{lock_rll, LockedDesign};
use crate::netlist::parse_bench;
use crate::synth::{generate, SynthParams};

fn design(seed: u64, keys: usize) -> LockedDesign {
    let n = generate(&SynthParams { inputs: 6, outputs: 8, flops: 24, gates: 160 }, seed);
    lock_rll(&n, keys, seed).unwrap()
}

#[test]
fn dfs_pays_per_scan_out_and_mssd_a_constant() {
    let d = design(1, 8);
    for chains in [1, 2, 8, 16] {
        let layout = stitch(&d.locked, chains, 1, &ScPlacement::Interleaved).unwrap();
        let dfs = overhead("x", &d.locked, &layout, DefenseVariant::Dfs);
        let mssd = overhead("x", &d.locked, &layout, DefenseVariant::Mssd);
        assert_eq!(dfs.secure_cell_logic, 3 * 8);
        assert_eq!(mssd.secure_cell_logic, 3 * 8);
        assert_eq!((dfs.masking, dfs.control), (chains, 7));
        assert_eq!((mssd.masking, mssd.control), (0, 12));
        assert_eq!(dfs.added, dfs.secure_cell_logic + dfs.masking + dfs.control);
        assert_eq!(dfs.primitives["mux"], 16);
        assert_eq!(dfs.baseline, d.netlist().gates().len() + d.netlist().flops().len());
        assert!((dfs.percent - 100.0 * dfs.added as f64 / dfs.baseline as f64).abs() < 1e-12);
        if chains == 1 {
            // one OR plus the detector against the two MSSD blocks
            assert_eq!(mssd.added as i64 - dfs.added as i64, 12 - 8);
        }
        if chains >= 8 {
            assert!(mssd.added < dfs.added);
        }
        assert_eq!(dfs, overhead("x", &d.locked, &layout, DefenseVariant::Dfs));
    }
}

#[test]
fn tally_matches_instantiated_netlist() {
    let d = design(2, 6);
    for chains in [1, 3, 5] {
        let layout = stitch(&d.locked, chains, 2, &ScPlacement::Interleaved).unwrap();
        for variant in [DefenseVariant::Dfs, DefenseVariant::Mssd] {
            let r = overhead("x", &d.locked, &layout, variant);
            let m = instrument(&d.locked, &layout, variant);
            let base = d.netlist().gates().len() + d.netlist().flops().len();
            let added = m.gates().len() + m.flops().len() - base;
            let muxes = r.primitives["mux"];
            let select_inverters = 2;
            let so_buffers = if variant == DefenseVariant::Mssd { chains } else { 0 };
            assert_eq!(added, r.added - muxes + 3 * muxes + select_inverters + so_buffers, "{variant} {chains}");
            let latches = r.primitives.get("latch").copied().unwrap_or(0);
            assert_eq!(m.flops().len(), d.netlist().flops().len() + r.primitives["dff"] + latches);
            assert!(m.find("keyinput0").is_some_and(|q| m.input_position(q).is_none()));
        }
    }
}

#[test]
fn secure_cells_follow_the_mode_table() {
    let (d, layout) = six_cell_chain(true);
    // chain: Rc0 Rc1 Sc0 Rc2 Rc3 Rc4, so Sc0 shifts in from Rc1 (flop Q name "in3")
    for variant in [DefenseVariant::Dfs, DefenseVariant::Mssd] {
        let m = instrument(&d.locked, &layout, variant);
        let sc = m.flops().iter().position(|f| m.name(f.q) == "keyinput0").unwrap();
        let upstream = m.flops().iter().position(|f| m.name(f.q) == "in3").unwrap();
        let stable = m.flops().iter().position(|f| m.name(f.q) == "test_stable");
        let prev = m.flops().iter().position(|f| m.name(f.q) == "test_prev").unwrap();
        let pos = |name: &str| m.input_position(m.find(name).unwrap()).unwrap();
        for bits in 0u32..32 {
            let [test, se, mem, up, own] = std::array::from_fn(|i| bits >> i & 1 == 1);
            let mut pi = vec![false; m.inputs().len()];
            pi[pos("test")] = test;
            pi[pos("se")] = se;
            pi[pos("keymem0")] = mem;
            let mut st = vec![false; m.flops().len()];
            st[upstream] = up;
            st[sc] = own;
            st[prev] = true;
            if let Some(s) = stable {
                st[s] = true;
            }
            let (_, next) = m.eval_bool(&pi, &st);
            let want = match (test, se) {
                (false, _) => mem,
                (true, true) => up,
                (true, false) => own,
            };
            assert_eq!(next[sc], want, "{variant} test={test} se={se}");
        }
    }
}

#[test]
fn dfs_scan_out_is_masked_outside_test_and_after_a_rising_edge() {
    let (d, layout) = six_cell_chain(false);
    let m = instrument(&d.locked, &layout, DefenseVariant::Dfs);
    let so = m.output_position("so0").unwrap();
    let last = m.flops().iter().position(|f| m.name(f.q) == "in6").unwrap();
    let srb = m.flops().iter().position(|f| m.name(f.q) == "srb").unwrap();
    let pos = |name: &str| m.input_position(m.find(name).unwrap()).unwrap();
    for bits in 0u32..8 {
        let [test, sticky, value] = std::array::from_fn(|i| bits >> i & 1 == 1);
        let mut pi = vec![false; m.inputs().len()];
        pi[pos("test")] = test;
        let mut st = vec![false; m.flops().len()];
        st[last] = value;
        st[srb] = sticky;
        let (po, _) = m.eval_bool(&pi, &st);
        assert_eq!(po[so], if !test || sticky { true } else { value });
    }
}

#[test]
fn tiny_circuit_reaches_full_coverage_everywhere() {
    let n = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\nOUTPUT(q)\nr = DFF(t)\nt = AND(a, b)\ny = XOR(r, k)\nk = OR(a, b)\nq = BUF(r)\n").unwrap();
    let d = lock_rll(&n, 1, 0).unwrap();
    let layout = stitch(&d.locked, 1, 0, &ScPlacement::Interleaved).unwrap();
    let dfs = instrument(&d.locked, &layout, DefenseVariant::Dfs);
    let mssd = instrument(&d.locked, &layout, DefenseVariant::Mssd);
    let r = coverage_compare(("orig", d.netlist()), &[("dfs", &dfs), ("mssd", &mssd)], 10_000, 3);
    assert_eq!(r.original.coverage, 1.0);
    for v in &r.variants {
        assert_eq!(v.coverage, 1.0, "{}", v.design);
        assert!(v.faults > r.original.faults);
    }
    assert_eq!(r.max_loss(), 0.0);
}

#[test]
fn coverage_is_deterministic_and_bounded() {
    let d = design(4, 8);
    let layout = stitch(&d.locked, 2, 4, &ScPlacement::Interleaved).unwrap();
    let dfs = instrument(&d.locked, &layout, DefenseVariant::Dfs);
    let a = coverage_compare(("orig", d.netlist()), &[("dfs", &dfs)], 300, 9);
    let b = coverage_compare(("orig", d.netlist()), &[("dfs", &dfs)], 300, 9);
    assert_eq!(a, b);
    for c in std::iter::once(&a.original).chain(&a.variants) {
        assert!((0.0..=1.0).contains(&c.coverage));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn mssd_is_cheaper_from_eight_scan_outs(seed in 0u64..1000, keys in 1usize..12, extra in 0usize..8) {
        let d = design(seed % 7, keys);
        let cells = d.netlist().flops().len() + keys;
        let chains = (8 + extra).min(cells);
        let layout = stitch(&d.locked, chains, seed, &ScPlacement::Interleaved).unwrap();
        let dfs = overhead("x", &d.locked, &layout, DefenseVariant::Dfs);
        let mssd = overhead("x", &d.locked, &layout, DefenseVariant::Mssd);
        prop_assert!(mssd.added < dfs.added);
    }
}
