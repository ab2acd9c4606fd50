use serde::{Deserialize, Serialize};

use super::ChemError;

/// Supported element set. Two-letter halogens are parsed for external inputs
/// but the corpus generator never emits them, keeping every corpus atom a
/// single character.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
}

impl Element {
    pub fn symbol(self) -> &'static str {
        match self {
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::P => "P",
            Element::S => "S",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Some(match s {
            "C" => Element::C,
            "N" => Element::N,
            "O" => Element::O,
            "P" => Element::P,
            "S" => Element::S,
            "F" => Element::F,
            "Cl" => Element::Cl,
            "Br" => Element::Br,
            _ => return None,
        })
    }

    /// True if the element supports an aromatic (lowercase) form in our dialect.
    pub fn supports_aromatic(self) -> bool {
        matches!(
            self,
            Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }

    /// Allowed total valences (bond order sum + hydrogens) for the element at
    /// the given formal charge. Cations on N/O/P/S gain a bond, anions lose
    /// one; carbon and halogens lose one either way.
    pub fn allowed_valences(self, charge: i8) -> Vec<u8> {
        let base: &[u8] = match self {
            Element::C => &[4],
            Element::N => &[3],
            Element::O => &[2],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
            Element::F | Element::Cl | Element::Br => &[1],
        };
        let shift: i16 = match self {
            Element::N | Element::O | Element::P | Element::S => i16::from(charge),
            Element::C | Element::F | Element::Cl | Element::Br => -i16::from(charge.abs()),
        };
        base.iter()
            .map(|&v| (i16::from(v) + shift).max(0) as u8)
            .collect()
    }

    pub fn max_valence(self, charge: i8) -> u8 {
        self.allowed_valences(charge).into_iter().max().unwrap_or(0)
    }
}

/// Tetrahedral chirality marker from a bracket atom. Parsed and preserved,
/// ignored by canonicalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chirality {
    /// `@` (counterclockwise)
    Ccw,
    /// `@@` (clockwise)
    Cw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    pub aromatic: bool,
    /// Resolved hydrogen count: explicit from brackets, or filled in by
    /// standard valence rules during parsing.
    pub explicit_h: u8,
    pub chirality: Option<Chirality>,
}

impl Atom {
    pub fn new(element: Element) -> Atom {
        Atom {
            element,
            formal_charge: 0,
            aromatic: false,
            explicit_h: 0,
            chirality: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Bond order in half-units so the aromatic order 1.5 stays integral.
    pub fn halves(self) -> u8 {
        match self {
            BondOrder::Single => 2,
            BondOrder::Double => 4,
            BondOrder::Triple => 6,
            BondOrder::Aromatic => 3,
        }
    }
}

/// Directional single-bond marker (`/` or `\`), preserved as an annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BondDir {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    /// Endpoint atom indices; stored as given, treated as unordered.
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub dir: Option<BondDir>,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if atom == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// Typed molecular graph: the semantic form of a SMILES string.
///
/// Atom order is meaningful (parse order / canonical order); adjacency lists
/// mirror bond insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<usize>>,
}

impl MolGraph {
    pub fn new() -> MolGraph {
        MolGraph::default()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn atom_mut(&mut self, i: usize) -> &mut Atom {
        &mut self.atoms[i]
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.adjacency.push(Vec::new());
        self.atoms.len() - 1
    }

    pub fn add_bond(&mut self, a: usize, b: usize, order: BondOrder) -> Result<usize, ChemError> {
        self.add_bond_with_dir(a, b, order, None)
    }

    pub fn add_bond_with_dir(
        &mut self,
        a: usize,
        b: usize,
        order: BondOrder,
        dir: Option<BondDir>,
    ) -> Result<usize, ChemError> {
        let n = self.atoms.len();
        if a >= n {
            return Err(ChemError::AtomOutOfRange(a, n));
        }
        if b >= n {
            return Err(ChemError::AtomOutOfRange(b, n));
        }
        if a == b {
            return Err(ChemError::InvalidBond(format!("self bond on atom {a}")));
        }
        if self.bond_between(a, b).is_some() {
            return Err(ChemError::InvalidBond(format!(
                "duplicate bond between atoms {a} and {b}"
            )));
        }
        self.bonds.push(Bond { a, b, order, dir });
        self.adjacency[a].push(b);
        self.adjacency[b].push(a);
        Ok(self.bonds.len() - 1)
    }

    /// Neighbor atom indices of `i`, in bond insertion order.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.bonds
            .iter()
            .find(|bond| (bond.a == a && bond.b == b) || (bond.a == b && bond.b == a))
    }

    /// Sum of bond orders at atom `i`, in half-units.
    pub fn bond_order_halves(&self, i: usize) -> u32 {
        self.bonds
            .iter()
            .filter(|b| b.a == i || b.b == i)
            .map(|b| u32::from(b.order.halves()))
            .sum()
    }

    /// Bond order sum at atom `i` in whole units, rounding aromatic halves up
    /// (an aromatic carbon with two ring bonds uses 3 of its 4 valences).
    pub fn bond_order_units(&self, i: usize) -> u8 {
        (self.bond_order_halves(i).div_ceil(2)) as u8
    }

    pub fn is_connected(&self) -> bool {
        if self.atoms.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.atoms.len()
    }

    /// Number of independent cycles (edges − atoms + components).
    pub fn cycle_rank(&self) -> usize {
        let components = self.component_count();
        self.bonds.len() + components - self.atoms.len()
    }

    fn component_count(&self) -> usize {
        let n = self.atoms.len();
        let mut seen = vec![false; n];
        let mut comps = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            comps += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for &w in &self.adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        comps
    }

    /// Per-atom ring membership: an atom is in a ring iff it is incident to a
    /// non-bridge edge. Graphs here are small (≤ ~130 atoms), so each edge is
    /// tested directly by a reachability check with that edge removed.
    pub fn ring_atoms(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let mut in_ring = vec![false; n];
        for (ei, b) in self.bonds.iter().enumerate() {
            if in_ring[b.a] && in_ring[b.b] {
                continue;
            }
            if !self.edge_is_bridge(ei) {
                in_ring[b.a] = true;
                in_ring[b.b] = true;
            }
        }
        in_ring
    }

    fn edge_is_bridge(&self, edge: usize) -> bool {
        let bond = &self.bonds[edge];
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![bond.a];
        seen[bond.a] = true;
        while let Some(v) = stack.pop() {
            for &w in &self.adjacency[v] {
                if (v == bond.a && w == bond.b) || (v == bond.b && w == bond.a) {
                    continue;
                }
                if !seen[w] {
                    if w == bond.b {
                        return false;
                    }
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        true
    }

    /// Rebuilds the graph with atom `order[i]` of `self` becoming atom `i`.
    /// `order` must be a permutation of `0..n_atoms`.
    pub fn reordered(&self, order: &[usize]) -> MolGraph {
        assert_eq!(order.len(), self.atoms.len());
        let mut inverse = vec![0usize; order.len()];
        for (new_idx, &old_idx) in order.iter().enumerate() {
            inverse[old_idx] = new_idx;
        }
        let mut g = MolGraph::new();
        for &old_idx in order {
            g.add_atom(self.atoms[old_idx]);
        }
        for b in &self.bonds {
            g.add_bond_with_dir(inverse[b.a], inverse[b.b], b.order, b.dir)
                .expect("permutation preserves bond validity");
        }
        g
    }

    /// Structural validation: adjacency consistency, valence ranges, and
    /// aromatic atoms confined to rings.
    pub fn validate(&self) -> Result<(), String> {
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            for &w in nbrs {
                if self.bond_between(i, w).is_none() {
                    return Err(format!("adjacency lists bond {i}-{w} missing from bonds"));
                }
            }
        }
        for b in &self.bonds {
            if b.order == BondOrder::Aromatic
                && !(self.atoms[b.a].aromatic && self.atoms[b.b].aromatic)
            {
                return Err(format!(
                    "aromatic bond {}-{} on non-aromatic atom",
                    b.a, b.b
                ));
            }
        }
        let rings = self.ring_atoms();
        for (i, atom) in self.atoms.iter().enumerate() {
            let used = u32::from(self.bond_order_units(i)) + u32::from(atom.explicit_h);
            let max = u32::from(atom.element.max_valence(atom.formal_charge));
            if used > max {
                return Err(format!(
                    "atom {i} ({}) exceeds valence: {used} > {max}",
                    atom.element.symbol()
                ));
            }
            if atom.aromatic && !rings[i] {
                return Err(format!("aromatic atom {i} is not in a ring"));
            }
        }
        Ok(())
    }
}
