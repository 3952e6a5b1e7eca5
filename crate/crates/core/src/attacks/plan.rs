// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::AttackError;
use crate::atpg::{cone_sources, LeakCondition, Source, SourceRoles};
use crate::chip::{Cell, CellPos, ModeInputs, ScanChainLayout, ScanOracle};
use crate::locking::LockedNetlist;
use crate::netlist::Cone;

/// Pin program that moves one key bit into a leak cell and reads it out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftPlan {
    pub key_index: usize,
    pub leak_cell: Cell,
    pub chain: usize,
    /// M2 shift distance from the secure cell to the cell the key bit lands in.
    pub d: usize,
    /// Value per flop to load through M1a.
    pub preload: Vec<bool>,
    /// M2 scan-in bits, `scan_in[cycle][chain]`.
    pub scan_in: Vec<Vec<bool>>,
    /// M1a scan-in bits applied after the M2 shift, `realign[cycle][chain]`.
    /// Each cycle moves regular cells one step while secure cells hold.
    pub realign: Vec<Vec<bool>>,
    /// Functional PI values applied at observation.
    pub pi: Vec<bool>,
    /// Output position to read.
    pub target: usize,
    /// PO value observed when the key bit is 0 and 1.
    pub decode: [bool; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Infeasible {
    #[error("secure cell and leak cell are not in the same chain")]
    DifferentChains,
    #[error("leak cell is not downstream of the secure cell")]
    WrongDirection,
    #[error("the M2 shift must land the key bit in a regular cell at or before the leak cell")]
    BadLanding,
    #[error("leak condition was generated for another leak source")]
    LeakMismatch,
    #[error("position {pos} of chain {chain} would be fed by unknown secure cell {key}")]
    UnknownSource { chain: usize, pos: usize, key: usize },
    #[error("position {pos} of chain {chain} needs {want} but secure cell {key} holds {have}")]
    KnownMismatch { chain: usize, pos: usize, key: usize, want: bool, have: bool },
}

fn cell_of(locked: &LockedNetlist, s: Source) -> Option<Cell> {
    match s {
        Source::Flop(f) => Some(Cell::Rc(f)),
        Source::Input(p) => locked.key_index_of_input(p).map(Cell::Sc),
    }
}

/// Where a cell's content comes from after `d` M2 cycles followed by `e`
/// M1a cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Preload(usize),
    ScanIn { cycle: usize },
    Realign { cycle: usize },
    Key(usize),
}

/// Positions of the regular cells of `chain`, scan-in end first.
fn rc_path(layout: &ScanChainLayout, chain: usize) -> Vec<usize> {
    layout.chains()[chain].iter().enumerate().filter(|(_, c)| !c.is_sc()).map(|(p, _)| p).collect()
}

fn origin(layout: &ScanChainLayout, cell: Cell, d: usize, e: usize) -> Origin {
    let CellPos { chain, pos } = layout.position(cell);
    let pos = match cell {
        Cell::Sc(_) => pos,
        Cell::Rc(_) => {
            let path = rc_path(layout, chain);
            let r = path.iter().position(|&p| p == pos).expect("regular cell on its chain");
            if r < e {
                return Origin::Realign { cycle: e - 1 - r };
            }
            path[r - e]
        }
    };
    if pos < d {
        return Origin::ScanIn { cycle: d - 1 - pos };
    }
    match layout.chains()[chain][pos - d] {
        Cell::Rc(f) => Origin::Preload(f),
        Cell::Sc(k) => Origin::Key(k),
    }
}

/// Derives the preload and scan-in sequences that place every constrained
/// cell value of `cond` after the M2 shift, with the key bit of secure cell
/// `sc` landing in `lc`.
pub fn plan_shift(
    locked: &LockedNetlist,
    layout: &ScanChainLayout,
    sc: usize,
    lc: Cell,
    cond: &LeakCondition,
    known: &BTreeMap<usize, bool>,
) -> Result<ShiftPlan, Infeasible> {
    plan_shift_via(locked, layout, sc, lc, lc, cond, known)
}

/// Like [`plan_shift`], but the M2 shift drops the key bit into the regular
/// cell `landing` and M1a cycles then carry it along the regular-cell path
/// to `lc`.
pub fn plan_shift_via(
    locked: &LockedNetlist,
    layout: &ScanChainLayout,
    sc: usize,
    landing: Cell,
    lc: Cell,
    cond: &LeakCondition,
    known: &BTreeMap<usize, bool>,
) -> Result<ShiftPlan, Infeasible> {
    let (d, e) = distances(layout, sc, landing, lc)?;
    if cell_of(locked, cond.leak) != Some(lc) {
        return Err(Infeasible::LeakMismatch);
    }
    let chains = layout.chain_count();
    let functional = locked.functional_inputs();
    let mut preload = vec![false; layout.flop_count()];
    let mut scan_in = vec![vec![false; chains]; d];
    let mut realign = vec![vec![false; chains]; e];
    let mut pi = vec![false; functional.len()];
    for (s, want) in cond.constrained() {
        let Some(cell) = cell_of(locked, s) else {
            let Source::Input(p) = s else { unreachable!("flops are cells") };
            let slot = functional.iter().position(|&q| q == p).expect("functional input");
            pi[slot] = want;
            continue;
        };
        let CellPos { chain, pos } = layout.position(cell);
        match origin(layout, cell, d, e) {
            Origin::Preload(h) => preload[h] = want,
            Origin::ScanIn { cycle } => scan_in[cycle][chain] = want,
            Origin::Realign { cycle } => realign[cycle][chain] = want,
            Origin::Key(key) => match known.get(&key) {
                Some(&have) if have == want => {}
                Some(&have) => return Err(Infeasible::KnownMismatch { chain, pos, key, want, have }),
                None => return Err(Infeasible::UnknownSource { chain, pos, key }),
            },
        }
    }
    Ok(ShiftPlan {
        key_index: sc,
        leak_cell: lc,
        chain: layout.position(lc).chain,
        d,
        preload,
        scan_in,
        realign,
        pi,
        target: cond.target,
        decode: cond.expected,
    })
}

/// M2 distance `d` from `sc` to `landing` and M1a distance `e` from `landing`
/// to `lc` along the regular-cell path.
fn distances(layout: &ScanChainLayout, sc: usize, landing: Cell, lc: Cell) -> Result<(usize, usize), Infeasible> {
    let from = layout.position(Cell::Sc(sc));
    let mid = layout.position(landing);
    let to = layout.position(lc);
    if from.chain != to.chain || from.chain != mid.chain {
        return Err(Infeasible::DifferentChains);
    }
    if to.pos <= from.pos {
        return Err(Infeasible::WrongDirection);
    }
    if landing.is_sc() && landing != lc || mid.pos <= from.pos || mid.pos > to.pos {
        return Err(Infeasible::BadLanding);
    }
    let e = if landing == lc {
        0
    } else {
        let path = rc_path(layout, to.chain);
        let r = |p: usize| path.iter().position(|&q| q == p);
        match (r(mid.pos), r(to.pos)) {
            (Some(a), Some(b)) => b - a,
            _ => return Err(Infeasible::BadLanding),
        }
    };
    Ok((mid.pos - from.pos, e))
}

/// Source roles after `d` M2 shifts: a cell is controllable when its content
/// arrives from a regular cell or scan-in, known or unknown when it arrives
/// from a secure cell.
pub fn d_aware_roles(
    locked: &LockedNetlist,
    layout: &ScanChainLayout,
    cone: &Cone,
    leak: Source,
    d: usize,
    known: &BTreeMap<usize, bool>,
) -> SourceRoles {
    shifted_roles(locked, layout, cone, leak, d, 0, known)
}

/// Source roles after `d` M2 shifts and `e` M1a shifts.
pub fn shifted_roles(
    locked: &LockedNetlist,
    layout: &ScanChainLayout,
    cone: &Cone,
    leak: Source,
    d: usize,
    e: usize,
    known: &BTreeMap<usize, bool>,
) -> SourceRoles {
    let mut roles = SourceRoles::default();
    for s in cone_sources(cone) {
        if s == leak {
            continue;
        }
        let Some(cell) = cell_of(locked, s) else {
            roles.controllable.insert(s);
            continue;
        };
        match origin(layout, cell, d, e) {
            Origin::Key(k) => match known.get(&k) {
                Some(&b) => {
                    roles.known.insert(s, b);
                }
                None => {
                    roles.unknown.insert(s);
                }
            },
            _ => {
                roles.controllable.insert(s);
            }
        }
    }
    roles
}

/// Regular cells where an M2 shift can land the bit of `sc` on its way to
/// `lc`, nearest to `sc` first, each with its `(d, e)`.
pub fn landings(layout: &ScanChainLayout, sc: usize, lc: Cell) -> Vec<(Cell, usize, usize)> {
    let from = layout.position(Cell::Sc(sc));
    let to = layout.position(lc);
    if from.chain != to.chain || to.pos <= from.pos || lc.is_sc() {
        return Vec::new();
    }
    let chain = &layout.chains()[from.chain];
    (from.pos + 1..=to.pos)
        .filter(|&p| !chain[p].is_sc())
        .filter_map(|p| distances(layout, sc, chain[p], lc).ok().map(|(d, e)| (chain[p], d, e)))
        .collect()
}

/// Scan-in vectors (one per cycle) that leave `values[f]` in every regular
/// cell after `layout.max_rc_len()` M1a cycles.
pub fn rc_preload_sequence(layout: &ScanChainLayout, values: &[bool]) -> Vec<Vec<bool>> {
    let len = layout.max_rc_len();
    let mut seq = vec![vec![false; layout.chain_count()]; len];
    for (c, chain) in layout.chains().iter().enumerate() {
        let path: Vec<usize> = chain
            .iter()
            .filter_map(|x| match x {
                Cell::Rc(f) => Some(*f),
                Cell::Sc(_) => None,
            })
            .collect();
        for (i, f) in path.into_iter().enumerate() {
            seq[len - 1 - i][c] = values[f];
        }
    }
    seq
}

/// Boot in M0 to load the key, preload regular cells in M1a, shift `d` cycles
/// in M2, realign regular cells in M1a, then switch to M0 without a clock and
/// read the target output.
pub fn execute_plan(
    oracle: &mut dyn ScanOracle,
    locked: &LockedNetlist,
    layout: &ScanChainLayout,
    plan: &ShiftPlan,
) -> Result<bool, AttackError> {
    let idle = vec![false; locked.functional_inputs().len()];
    oracle.power_on(ModeInputs::M0);
    oracle.step(ModeInputs::M0, &idle, &vec![false; layout.chain_count()]);
    for si in rc_preload_sequence(layout, &plan.preload) {
        oracle.step(ModeInputs::M1A, &idle, &si);
    }
    for si in &plan.scan_in {
        oracle.step(ModeInputs::M2, &idle, si);
    }
    for si in &plan.realign {
        oracle.step(ModeInputs::M1A, &idle, si);
    }
    let observed = oracle.observe(ModeInputs::M0, &plan.pi)[plan.target];
    match plan.decode.iter().position(|&e| e == observed) {
        Some(i) if plan.decode[0] != plan.decode[1] => Ok(i == 1),
        _ => Err(AttackError::DecodeDomain { observed, expected: plan.decode }),
    }
}
