// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ChipError;
use crate::locking::LockedNetlist;
use crate::netlist::Netlist;

/// One scan cell: a regular cell wrapping flop `i`, or the secure cell of key bit `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cell {
    Rc(usize),
    Sc(usize),
}

impl Cell {
    pub fn is_sc(self) -> bool {
        matches!(self, Cell::Sc(_))
    }
}

/// Location of a cell: chain index and position (0 = next to scan-in).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellPos {
    pub chain: usize,
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanChainLayout {
    chains: Vec<Vec<Cell>>,
    #[serde(skip)]
    rc_pos: Vec<CellPos>,
    #[serde(skip)]
    sc_pos: Vec<CellPos>,
}

/// How secure cells are placed among regular cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScPlacement {
    /// Seeded shuffle of both cell kinds, secure cells spread at even
    /// intervals, then dealt round-robin into the chains.
    Interleaved,
    /// Use exactly these chains.
    Explicit(Vec<Vec<Cell>>),
}

impl ScanChainLayout {
    /// Checks that every flop and key bit appears exactly once.
    pub fn new(chains: Vec<Vec<Cell>>, flops: usize, keys: usize) -> Result<Self, ChipError> {
        let missing = CellPos { chain: usize::MAX, pos: usize::MAX };
        let mut rc_pos = vec![missing; flops];
        let mut sc_pos = vec![missing; keys];
        for (c, chain) in chains.iter().enumerate() {
            for (p, &cell) in chain.iter().enumerate() {
                let slot = match cell {
                    Cell::Rc(i) => rc_pos.get_mut(i),
                    Cell::Sc(i) => sc_pos.get_mut(i),
                };
                let slot = slot.ok_or(ChipError::Layout(format!("{cell:?} out of range")))?;
                if *slot != missing {
                    return Err(ChipError::Layout(format!("{cell:?} appears twice")));
                }
                *slot = CellPos { chain: c, pos: p };
            }
        }
        if let Some(f) = rc_pos.iter().position(|&p| p == missing) {
            return Err(ChipError::Layout(format!("flop {f} is not stitched")));
        }
        if let Some(k) = sc_pos.iter().position(|&p| p == missing) {
            return Err(ChipError::Layout(format!("key bit {k} has no secure cell")));
        }
        if chains.is_empty() {
            return Err(ChipError::Layout("no scan chains".into()));
        }
        Ok(ScanChainLayout { chains, rc_pos, sc_pos })
    }

    pub fn chains(&self) -> &[Vec<Cell>] {
        &self.chains
    }

    pub fn chain_count(&self) -> usize {
        self.chains.len()
    }

    pub fn flop_count(&self) -> usize {
        self.rc_pos.len()
    }

    pub fn key_count(&self) -> usize {
        self.sc_pos.len()
    }

    pub fn cell_count(&self) -> usize {
        self.rc_pos.len() + self.sc_pos.len()
    }

    pub fn position(&self, cell: Cell) -> CellPos {
        match cell {
            Cell::Rc(i) => self.rc_pos[i],
            Cell::Sc(i) => self.sc_pos[i],
        }
    }

    pub fn cell_at(&self, at: CellPos) -> Cell {
        self.chains[at.chain][at.pos]
    }

    pub fn max_chain_len(&self) -> usize {
        self.chains.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Longest run of regular cells in one chain (the M1a shift path length).
    pub fn max_rc_len(&self) -> usize {
        self.chains.iter().map(|c| c.iter().filter(|x| !x.is_sc()).count()).max().unwrap_or(0)
    }

    /// One line per chain: `chain <i>: rc:<flop Q net> key:<index> ...`.
    pub fn to_text(&self, netlist: &Netlist) -> String {
        let mut out = String::new();
        for (c, chain) in self.chains.iter().enumerate() {
            write!(out, "chain {c}:").unwrap();
            for cell in chain {
                match *cell {
                    Cell::Rc(f) => write!(out, " rc:{}", netlist.name(netlist.flops()[f].q)).unwrap(),
                    Cell::Sc(k) => write!(out, " key:{k}").unwrap(),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, locked: &LockedNetlist) -> Result<Self, ChipError> {
        let n = locked.netlist();
        let mut chains = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| ChipError::Layout(format!("line {}: {m}", line_no + 1));
            let (head, body) = line.split_once(':').ok_or_else(|| err("expected `chain <i>:`"))?;
            let index: usize = head
                .strip_prefix("chain")
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| err("expected `chain <i>:`"))?;
            if index != chains.len() {
                return Err(err("chains must be numbered in order"));
            }
            let mut chain = Vec::new();
            for tok in body.split_whitespace() {
                let cell = if let Some(name) = tok.strip_prefix("rc:") {
                    let q = n.find(name).ok_or_else(|| err(&format!("unknown net {name}")))?;
                    let f = n.flops().iter().position(|f| f.q == q).ok_or_else(|| err(&format!("{name} is not a flop")))?;
                    Cell::Rc(f)
                } else if let Some(k) = tok.strip_prefix("key:") {
                    Cell::Sc(k.parse().map_err(|_| err(&format!("bad key index {k}")))?)
                } else {
                    return Err(err(&format!("unrecognised cell `{tok}`")));
                };
                chain.push(cell);
            }
            chains.push(chain);
        }
        ScanChainLayout::new(chains, n.flops().len(), locked.key_len())
    }
}

/// Distributes all regular and secure cells of `locked` into `n_chains` chains.
pub fn stitch(
    locked: &LockedNetlist,
    n_chains: usize,
    seed: u64,
    policy: &ScPlacement,
) -> Result<ScanChainLayout, ChipError> {
    let flops = locked.netlist().flops().len();
    let keys = locked.key_len();
    match policy {
        ScPlacement::Explicit(chains) => ScanChainLayout::new(chains.clone(), flops, keys),
        ScPlacement::Interleaved => {
            let total = flops + keys;
            if n_chains == 0 || n_chains > total {
                return Err(ChipError::ChainCount { requested: n_chains, cells: total });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rcs: Vec<usize> = (0..flops).collect();
            let mut scs: Vec<usize> = (0..keys).collect();
            rcs.shuffle(&mut rng);
            scs.shuffle(&mut rng);
            // Secure cell j goes after regular cell floor((j + 1) * R / (K + 1)).
            let mut order = Vec::with_capacity(total);
            let mut next_sc = 0;
            for r in 0..=flops {
                while next_sc < keys && (next_sc + 1) * flops / (keys + 1) == r {
                    order.push(Cell::Sc(scs[next_sc]));
                    next_sc += 1;
                }
                if r < flops {
                    order.push(Cell::Rc(rcs[r]));
                }
            }
            let mut chains = vec![Vec::new(); n_chains];
            for (i, cell) in order.into_iter().enumerate() {
                chains[i % n_chains].push(cell);
            }
            ScanChainLayout::new(chains, flops, keys)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::locking::lock_rll;
    use crate::synth::{generate, SynthParams};

    fn design() -> LockedNetlist {
        let n = generate(&SynthParams { inputs: 4, outputs: 4, flops: 10, gates: 60 }, 2);
        lock_rll(&n, 3, 5).unwrap().locked
    }

    #[test]
    fn one_cell_per_chain() {
        let d = design();
        let layout = stitch(&d, 13, 0, &ScPlacement::Interleaved).unwrap();
        assert!(layout.chains().iter().all(|c| c.len() == 1));
        assert!(matches!(
            stitch(&d, 14, 0, &ScPlacement::Interleaved),
            Err(ChipError::ChainCount { requested: 14, cells: 13 })
        ));
    }

    #[test]
    fn seeds_change_layout_but_not_validity() {
        let d = design();
        let a = stitch(&d, 2, 1, &ScPlacement::Interleaved).unwrap();
        let b = stitch(&d, 2, 2, &ScPlacement::Interleaved).unwrap();
        assert_ne!(a, b);
        for l in [&a, &b] {
            assert!(ScanChainLayout::new(l.chains().to_vec(), 10, 3).is_ok());
        }
    }

    #[test]
    fn interleaving_keeps_secure_cells_off_the_tail() {
        let d = design();
        let l = stitch(&d, 1, 4, &ScPlacement::Interleaved).unwrap();
        let chain = &l.chains()[0];
        assert!(!chain.last().unwrap().is_sc());
        assert!(!chain[0].is_sc());
    }

    #[test]
    fn explicit_layout_validation() {
        let d = design();
        let mut chain: Vec<Cell> = (0..10).map(Cell::Rc).collect();
        chain.extend((0..3).map(Cell::Sc));
        assert!(stitch(&d, 1, 0, &ScPlacement::Explicit(vec![chain.clone()])).is_ok());
        chain.pop();
        assert!(stitch(&d, 1, 0, &ScPlacement::Explicit(vec![chain.clone()])).is_err());
        chain.push(Cell::Rc(0));
        assert!(stitch(&d, 1, 0, &ScPlacement::Explicit(vec![chain])).is_err());
    }

    #[test]
    fn text_roundtrip() {
        let d = design();
        let l = stitch(&d, 3, 9, &ScPlacement::Interleaved).unwrap();
        let text = l.to_text(d.netlist());
        assert_eq!(ScanChainLayout::from_text(&text, &d).unwrap(), l);
    }
}
