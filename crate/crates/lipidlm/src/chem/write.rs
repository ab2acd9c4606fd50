use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{BondOrder, MolGraph};
use super::ChemError;

/// Rule for ordering the unvisited neighbors at each atom during traversal.
#[derive(Debug, Clone)]
pub enum NeighborOrder {
    /// Ascending original atom index.
    Input,
    /// Seeded shuffle, independent per atom.
    Seeded(u64),
    /// Ascending value of the given per-atom key (used by canonicalization).
    Ranked(Vec<usize>),
}

/// Writes a SMILES string for `g` starting the depth-first traversal at
/// `start_atom`. The result always re-parses to a graph isomorphic to `g`.
pub fn write_smiles(
    g: &MolGraph,
    start_atom: usize,
    order: &NeighborOrder,
) -> Result<String, ChemError> {
    write_smiles_with_order(g, start_atom, order).map(|(s, _)| s)
}

/// Like [`write_smiles`] but also returns the atom visit order: entry `i` is
/// the original atom index of the `i`-th atom token in the output.
pub fn write_smiles_with_order(
    g: &MolGraph,
    start_atom: usize,
    order: &NeighborOrder,
) -> Result<(String, Vec<usize>), ChemError> {
    let n = g.n_atoms();
    if start_atom >= n {
        return Err(ChemError::AtomOutOfRange(start_atom, n));
    }
    if !g.is_connected() {
        return Err(ChemError::DisconnectedGraph);
    }

    let mut w = Writer {
        g,
        neighbor_order: precompute_orders(g, order),
        visited: vec![false; n],
        ring_openings: vec![Vec::new(); n],
        ring_closings: vec![Vec::new(); n],
        digits: DigitPool::new(),
        visit_order: Vec::with_capacity(n),
    };

    // Pass 1: spanning-tree DFS to find ring-closure edges.
    w.find_closures(start_atom);
    // Pass 2: emit.
    w.visited.iter_mut().for_each(|v| *v = false);
    let out = w.emit(start_atom, None);
    Ok((out, w.visit_order))
}

fn precompute_orders(g: &MolGraph, order: &NeighborOrder) -> Vec<Vec<usize>> {
    (0..g.n_atoms())
        .map(|i| {
            let mut nbrs: Vec<usize> = g.neighbors(i).to_vec();
            match order {
                NeighborOrder::Input => nbrs.sort_unstable(),
                NeighborOrder::Seeded(seed) => {
                    nbrs.sort_unstable();
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                    nbrs.shuffle(&mut rng);
                }
                NeighborOrder::Ranked(ranks) => {
                    nbrs.sort_unstable_by_key(|&j| (ranks[j], j));
                }
            }
            nbrs
        })
        .collect()
}

struct DigitPool {
    in_use: Vec<u16>,
}

impl DigitPool {
    fn new() -> DigitPool {
        DigitPool { in_use: Vec::new() }
    }
    fn acquire(&mut self) -> u16 {
        let mut d = 1;
        while self.in_use.contains(&d) {
            d += 1;
        }
        self.in_use.push(d);
        d
    }
    fn release(&mut self, d: u16) {
        if let Some(pos) = self.in_use.iter().position(|&x| x == d) {
            self.in_use.remove(pos);
        }
    }
}

struct Writer<'g> {
    g: &'g MolGraph,
    neighbor_order: Vec<Vec<usize>>,
    visited: Vec<bool>,
    /// atom → partners whose ring bond *opens* here (discovered in pass 1).
    ring_openings: Vec<Vec<usize>>,
    /// atom → (partner, digit) closures to emit (filled during pass 2).
    ring_closings: Vec<Vec<(usize, u16)>>,
    digits: DigitPool,
    visit_order: Vec<usize>,
}

impl<'g> Writer<'g> {
    fn find_closures(&mut self, start: usize) {
        let mut ancestors = vec![false; self.g.n_atoms()];
        self.find_closures_rec(start, None, &mut ancestors);
    }

    fn find_closures_rec(&mut self, v: usize, parent: Option<usize>, ancestors: &mut Vec<bool>) {
        ancestors[v] = true;
        self.visited[v] = true;
        for idx in 0..self.neighbor_order[v].len() {
            let w = self.neighbor_order[v][idx];
            if Some(w) == parent {
                continue;
            }
            if ancestors[w] {
                // Back edge: the ring opens at the ancestor, closes at v.
                self.ring_openings[w].push(v);
            } else if !self.visited[w] {
                self.find_closures_rec(w, Some(v), ancestors);
            }
        }
        ancestors[v] = false;
    }

    fn emit(&mut self, v: usize, parent: Option<usize>) -> String {
        self.visited[v] = true;
        self.visit_order.push(v);
        let mut seq = String::new();
        if let Some(p) = parent {
            seq.push_str(&self.bond_symbol(p, v));
        }
        seq.push_str(&self.atom_text(v));

        // Close rings opened earlier (smallest digit first).
        let mut closings = std::mem::take(&mut self.ring_closings[v]);
        closings.sort_unstable_by_key(|&(_, d)| d);
        for (partner, digit) in closings {
            seq.push_str(&self.bond_symbol(v, partner));
            seq.push_str(&digit_text(digit));
            self.digits.release(digit);
        }

        // Open ring digits for back edges rooted here.
        let openings = std::mem::take(&mut self.ring_openings[v]);
        for partner in openings {
            let digit = self.digits.acquire();
            seq.push_str(&digit_text(digit));
            self.ring_closings[partner].push((v, digit));
        }

        let mut branches: Vec<String> = Vec::new();
        for idx in 0..self.neighbor_order[v].len() {
            let w = self.neighbor_order[v][idx];
            if !self.visited[w] {
                branches.push(self.emit(w, Some(v)));
            }
        }
        if branches.len() > 1 {
            for b in &branches[..branches.len() - 1] {
                seq.push('(');
                seq.push_str(b);
                seq.push(')');
            }
        }
        if let Some(last) = branches.last() {
            seq.push_str(last);
        }
        seq
    }

    fn bond_symbol(&self, a: usize, b: usize) -> String {
        let bond = self
            .g
            .bond_between(a, b)
            .expect("traversal follows existing bonds");
        let both_aromatic = self.g.atom(a).aromatic && self.g.atom(b).aromatic;
        match bond.order {
            // A true single bond between two aromatic atoms must be explicit
            // or it would re-parse as aromatic.
            BondOrder::Single if both_aromatic => "-".to_string(),
            BondOrder::Single => String::new(),
            BondOrder::Double => "=".to_string(),
            BondOrder::Triple => "#".to_string(),
            BondOrder::Aromatic if both_aromatic => String::new(),
            BondOrder::Aromatic => ":".to_string(),
        }
    }

    fn atom_text(&self, idx: usize) -> String {
        let atom = self.g.atom(idx);
        let symbol = if atom.aromatic {
            atom.element.symbol().to_lowercase()
        } else {
            atom.element.symbol().to_string()
        };
        if atom.formal_charge == 0 && self.h_count_is_implicit(idx) {
            return symbol;
        }
        let mut s = String::from("[");
        s.push_str(&symbol);
        match atom.explicit_h {
            0 => {}
            1 => s.push('H'),
            h => {
                s.push('H');
                s.push_str(&h.to_string());
            }
        }
        match atom.formal_charge {
            0 => {}
            1 => s.push('+'),
            -1 => s.push('-'),
            c if c > 0 => s.push_str(&format!("+{c}")),
            c => s.push_str(&format!("-{}", -c)),
        }
        s.push(']');
        s
    }

    /// Would a bare atom symbol re-parse with the same hydrogen count?
    fn h_count_is_implicit(&self, idx: usize) -> bool {
        let atom = self.g.atom(idx);
        if atom.formal_charge != 0 {
            return false;
        }
        let used = self.g.bond_order_units(idx);
        let implied = atom
            .element
            .allowed_valences(0)
            .into_iter()
            .find(|&v| v >= used)
            .map(|v| v - used);
        implied == Some(atom.explicit_h)
    }
}

fn digit_text(d: u16) -> String {
    if d > 9 {
        format!("%{d}")
    } else {
        d.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::graph::{Atom, Element};
    use crate::chem::parse::parse_smiles;

    #[test]
    fn triangle_from_start_zero() {
        let g = parse_smiles("C1CC1").unwrap();
        assert_eq!(write_smiles(&g, 0, &NeighborOrder::Input).unwrap(), "C1CC1");
    }

    #[test]
    fn cco_from_oxygen() {
        let g = parse_smiles("CCO").unwrap();
        assert_eq!(write_smiles(&g, 2, &NeighborOrder::Input).unwrap(), "OCC");
        assert_eq!(write_smiles(&g, 0, &NeighborOrder::Input).unwrap(), "CCO");
        assert_eq!(write_smiles(&g, 1, &NeighborOrder::Input).unwrap(), "C(C)O");
    }

    #[test]
    fn ester_round_trip() {
        let s = "CC(=O)OCC";
        let g = parse_smiles(s).unwrap();
        assert_eq!(write_smiles(&g, 0, &NeighborOrder::Input).unwrap(), s);
    }

    #[test]
    fn charged_atom_round_trip() {
        let g = parse_smiles("C[N+](C)(C)C").unwrap();
        let out = write_smiles(&g, 0, &NeighborOrder::Input).unwrap();
        assert_eq!(out, "C[N+](C)(C)C");
    }

    #[test]
    fn visit_order_reported() {
        let g = parse_smiles("CCO").unwrap();
        let (s, order) = write_smiles_with_order(&g, 2, &NeighborOrder::Input).unwrap();
        assert_eq!(s, "OCC");
        assert_eq!(order, vec![2, 1, 0]);
    }

    #[test]
    fn aromatic_ring_round_trip() {
        let s = "c1ccccc1";
        let g = parse_smiles(s).unwrap();
        let out = write_smiles(&g, 0, &NeighborOrder::Input).unwrap();
        let re = parse_smiles(&out).unwrap();
        assert_eq!(re.n_atoms(), 6);
        assert!(re.atoms().iter().all(|a| a.aromatic));
    }

    #[test]
    fn disconnected_rejected() {
        let mut g = MolGraph::new();
        g.add_atom(Atom::new(Element::C));
        g.add_atom(Atom::new(Element::C));
        assert_eq!(
            write_smiles(&g, 0, &NeighborOrder::Input),
            Err(ChemError::DisconnectedGraph)
        );
    }

    #[test]
    fn seeded_order_is_deterministic() {
        let g = parse_smiles("CC(C)(O)CC").unwrap();
        let a = write_smiles(&g, 1, &NeighborOrder::Seeded(5)).unwrap();
        let b = write_smiles(&g, 1, &NeighborOrder::Seeded(5)).unwrap();
        assert_eq!(a, b);
    }
}
