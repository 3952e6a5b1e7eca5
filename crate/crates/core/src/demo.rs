// SPDX-License-Identifier: Apache-2.0

//! Small hand-built locked designs with known leak behaviour.

use crate::chip::{Cell, ScanChainLayout};
use crate::locking::{Key, LockedDesign, LockedNetlist, Scheme};
use crate::netlist::parse_bench;

/// Six-cell single chain `in2 in3 SC in4 in5 in6` feeding one output
/// `out0 = in4·in5·¬in6 + in2·(in3 ⊕ k)·in6`.
///
/// With `in4 = 1, in6 = 0` the output equals `in5`, and the secure cell sits
/// two positions upstream of `in5`.
pub fn six_cell_chain(key_bit: bool) -> (LockedDesign, ScanChainLayout) {
    let bench = "\
INPUT(p2)
INPUT(p3)
INPUT(p4)
INPUT(p5)
INPUT(p6)
INPUT(keyinput0)
OUTPUT(out0)

in2 = DFF(p2)
in3 = DFF(p3)
in4 = DFF(p4)
in5 = DFF(p5)
in6 = DFF(p6)
k = XOR(in3, keyinput0)
n6 = NOT(in6)
t1 = AND(in4, in5, n6)
t2 = AND(in2, k, in6)
out0 = OR(t1, t2)
";
    let locked = LockedNetlist::from_netlist(parse_bench(bench).expect("valid bench")).expect("valid key gates");
    let design = LockedDesign::new(locked, Key::new(vec![key_bit]), Scheme::Rll, 0).expect("key length");
    let chain = vec![Cell::Rc(0), Cell::Rc(1), Cell::Sc(0), Cell::Rc(2), Cell::Rc(3), Cell::Rc(4)];
    let layout = ScanChainLayout::new(vec![chain], 5, 1).expect("valid layout");
    (design, layout)
}

/// A single output cone over three secure cells and one regular cell `r`:
/// `y = r · (r ⊙ k0) · (r ⊕ k1) · (r ⊙ k2)`. Only key `101` makes `y`
/// depend on `r`, so observing `y = 1` at `r = 1` pins down all three bits.
pub fn three_key_cone() -> (LockedDesign, ScanChainLayout) {
    let bench = "\
INPUT(p)
INPUT(keyinput0)
INPUT(keyinput1)
INPUT(keyinput2)
OUTPUT(y)

r = DFF(p)
n0 = XNOR(r, keyinput0)
n1 = XOR(r, keyinput1)
n2 = XNOR(r, keyinput2)
y = AND(r, n0, n1, n2)
";
    let locked = LockedNetlist::from_netlist(parse_bench(bench).expect("valid bench")).expect("valid key gates");
    let design = LockedDesign::new(locked, Key::new(vec![true, false, true]), Scheme::Rll, 0).expect("key length");
    let chain = vec![Cell::Sc(0), Cell::Sc(1), Cell::Rc(0), Cell::Sc(2)];
    let layout = ScanChainLayout::new(vec![chain], 1, 3).expect("valid layout");
    (design, layout)
}
