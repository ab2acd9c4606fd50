//! Deterministic canonical SMILES.
//!
//! Ranking starts from the atom invariant (element, degree, charge, in-ring
//! flag, attached-H count), refines by neighborhood multisets (bond order +
//! neighbor rank) to a fixed point, and resolves remaining ties by
//! individualizing tied atoms one cell at a time, re-refining, and taking the
//! lexicographically smallest string emitted over all complete labelings.
//! For acyclic graphs the tie cells are pruned with rooted-subtree
//! certificates (equal certificates on a tree imply an automorphism, so one
//! branch suffices); cyclic graphs enumerate, which stays tiny for molecular
//! automorphism groups.

use std::collections::BTreeMap;

use super::graph::{BondOrder, MolGraph};
use super::write::{write_smiles_with_order, NeighborOrder};
use super::ChemError;

/// Canonical SMILES plus the permutation it induced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalForm {
    pub smiles: String,
    /// `atom_order[i]` is the original index of the atom at canonical ordinal `i`.
    pub atom_order: Vec<usize>,
}

/// Hard cap on tie-break leaves. Real molecules sit far below this; the cap
/// only guards against adversarial highly-symmetric ring systems.
const MAX_LABELINGS: usize = 20_000;

/// Computes the canonical form of a connected molecular graph. The output
/// depends only on the isomorphism class of `g`.
pub fn canonicalize(g: &MolGraph) -> Result<CanonicalForm, ChemError> {
    if g.n_atoms() == 0 {
        return Err(ChemError::AtomOutOfRange(0, 0));
    }
    if !g.is_connected() {
        return Err(ChemError::DisconnectedGraph);
    }

    // Neighbor lists with bond orders, computed once: refinement is the hot
    // loop and must not rescan the bond table.
    let nbrs: Vec<Vec<(u8, usize)>> = (0..g.n_atoms())
        .map(|i| {
            g.neighbors(i)
                .iter()
                .map(|&j| {
                    (
                        g.bond_between(i, j).expect("adjacency consistent").order.halves(),
                        j,
                    )
                })
                .collect()
        })
        .collect();

    let ranks = initial_ranks(g);
    let ranks = refine(&nbrs, ranks);

    let mut search = Search {
        g,
        nbrs: &nbrs,
        acyclic: g.cycle_rank() == 0,
        best: None,
        leaves: 0,
    };
    search.descend(ranks);
    let (smiles, atom_order) = search.best.expect("at least one labeling is explored");
    Ok(CanonicalForm { smiles, atom_order })
}

/// Initial invariant: (element, aromatic, degree, charge, in-ring, H count).
fn initial_ranks(g: &MolGraph) -> Vec<usize> {
    let in_ring = g.ring_atoms();
    let keys: Vec<(u8, bool, usize, i8, bool, u8)> = (0..g.n_atoms())
        .map(|i| {
            let a = g.atom(i);
            (
                element_code(g, i),
                a.aromatic,
                g.degree(i),
                a.formal_charge,
                in_ring[i],
                a.explicit_h,
            )
        })
        .collect();
    ranks_from_keys(&keys)
}

fn element_code(g: &MolGraph, i: usize) -> u8 {
    g.atom(i).element as u8
}

fn ranks_from_keys<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut sorted: Vec<K> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).expect("key present"))
        .collect()
}

/// Refines ranks by neighborhood multisets until the partition stabilizes.
/// `nbrs[i]` holds `(bond order halves, neighbor index)` pairs for atom `i`.
fn refine(nbrs: &[Vec<(u8, usize)>], mut ranks: Vec<usize>) -> Vec<usize> {
    loop {
        let n_classes = ranks.iter().max().map_or(0, |m| m + 1);
        let keys: Vec<(usize, Vec<(u8, usize)>)> = (0..nbrs.len())
            .map(|i| {
                let mut around: Vec<(u8, usize)> = nbrs[i]
                    .iter()
                    .map(|&(order, j)| (order, ranks[j]))
                    .collect();
                around.sort_unstable();
                (ranks[i], around)
            })
            .collect();
        let new_ranks = ranks_from_keys(&keys);
        let new_classes = new_ranks.iter().max().map_or(0, |m| m + 1);
        if new_classes == n_classes {
            return new_ranks;
        }
        ranks = new_ranks;
    }
}

struct Search<'g> {
    g: &'g MolGraph,
    nbrs: &'g [Vec<(u8, usize)>],
    acyclic: bool,
    best: Option<(String, Vec<usize>)>,
    leaves: usize,
}

impl<'g> Search<'g> {
    fn descend(&mut self, ranks: Vec<usize>) {
        if self.leaves >= MAX_LABELINGS {
            return;
        }
        match first_tied_cell(&ranks) {
            None => {
                self.leaves += 1;
                let root = ranks
                    .iter()
                    .position(|&r| r == 0)
                    .expect("rank 0 exists in a discrete partition");
                let (smiles, order) =
                    write_smiles_with_order(self.g, root, &NeighborOrder::Ranked(ranks.clone()))
                        .expect("connected graph always writes");
                if self
                    .best
                    .as_ref()
                    .map_or(true, |(best, _)| smiles < *best)
                {
                    self.best = Some((smiles, order));
                }
            }
            Some(cell) => {
                let candidates = if self.acyclic {
                    // Members with equal rooted-tree certificates are related
                    // by an automorphism; exploring one of them is enough.
                    let mut certed: Vec<(String, usize)> = cell
                        .iter()
                        .map(|&a| (tree_certificate(self.g, &ranks, a), a))
                        .collect();
                    certed.sort();
                    let min_cert = certed[0].0.clone();
                    vec![certed
                        .into_iter()
                        .find(|(c, _)| *c == min_cert)
                        .expect("nonempty cell")
                        .1]
                } else {
                    cell
                };
                for a in candidates {
                    let individualized = individualize(&ranks, a);
                    let refined = refine(self.nbrs, individualized);
                    self.descend(refined);
                }
            }
        }
    }
}

/// The lowest-rank cell with more than one member, or `None` when discrete.
fn first_tied_cell(ranks: &[usize]) -> Option<Vec<usize>> {
    let mut cells: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &r) in ranks.iter().enumerate() {
        cells.entry(r).or_default().push(i);
    }
    cells.into_values().find(|members| members.len() > 1)
}

/// Splits atom `a` out of its cell by giving it a strictly smaller rank.
fn individualize(ranks: &[usize], a: usize) -> Vec<usize> {
    let keys: Vec<(usize, usize)> = ranks
        .iter()
        .enumerate()
        .map(|(i, &r)| (r, usize::from(i != a)))
        .collect();
    ranks_from_keys(&keys)
}

/// Canonical encoding of the tree rooted at `root`. Two atoms in the same
/// refined cell of an acyclic graph are automorphic iff their certificates
/// match (rooted-tree isomorphism).
fn tree_certificate(g: &MolGraph, ranks: &[usize], root: usize) -> String {
    fn rec(g: &MolGraph, ranks: &[usize], v: usize, parent: Option<usize>) -> String {
        let mut children: Vec<String> = g
            .neighbors(v)
            .iter()
            .filter(|&&w| Some(w) != parent)
            .map(|&w| {
                let order = g.bond_between(v, w).expect("adjacent").order;
                format!("{}{}", bond_char(order), rec(g, ranks, w, Some(v)))
            })
            .collect();
        children.sort();
        let a = g.atom(v);
        format!(
            "({}:{}:{}:{}{})",
            ranks[v],
            a.element.symbol(),
            a.formal_charge,
            a.explicit_h,
            children.concat()
        )
    }
    rec(g, ranks, root, None)
}

fn bond_char(order: BondOrder) -> char {
    match order {
        BondOrder::Single => '-',
        BondOrder::Double => '=',
        BondOrder::Triple => '#',
        BondOrder::Aromatic => ':',
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse::parse_smiles;
    use crate::chem::write::{write_smiles, NeighborOrder};

    fn canon(s: &str) -> String {
        canonicalize(&parse_smiles(s).unwrap()).unwrap().smiles
    }

    #[test]
    fn same_molecule_same_string() {
        assert_eq!(canon("OCC"), canon("CCO"));
        assert_eq!(canon("C(C)O"), canon("CCO"));
        assert_eq!(canon("C1CC1"), canon("C1CC1"));
        assert_eq!(canon("CC(=O)OCC"), canon("CCOC(C)=O"));
        assert_eq!(canon("c1ccccc1"), canon("c1ccccc1"));
    }

    #[test]
    fn idempotent() {
        for s in ["CCO", "CC(=O)OCC", "C1CCCCC1O", "C[N+](C)(C)CCO", "C/C=C/C"] {
            let c1 = canon(s);
            let c2 = canon(&c1);
            assert_eq!(c1, c2, "canonicalization not idempotent for {s}");
        }
    }

    #[test]
    fn distinct_molecules_differ() {
        assert_ne!(canon("CCO"), canon("COC"));
        assert_ne!(canon("CC(=O)OC"), canon("CC(=O)CO"));
        assert_ne!(canon("C1CC1"), canon("CCC"));
    }

    #[test]
    fn permutation_invariance_small() {
        // All permutations of a 5-atom molecule produce one canonical string.
        let g = parse_smiles("CC(N)=O").unwrap();
        let base = canonicalize(&g).unwrap().smiles;
        let n = g.n_atoms();
        let mut perm: Vec<usize> = (0..n).collect();
        // Heap's algorithm, iterative.
        let mut c = vec![0usize; n];
        let mut i = 0;
        loop {
            let r = canonicalize(&g.reordered(&perm)).unwrap().smiles;
            assert_eq!(r, base, "permutation {perm:?} broke canonical stability");
            if i >= n {
                break;
            }
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn atom_order_is_bijection() {
        let g = parse_smiles("CC(=O)OCC").unwrap();
        let c = canonicalize(&g).unwrap();
        let mut seen = vec![false; g.n_atoms()];
        for &orig in &c.atom_order {
            assert!(!seen[orig]);
            seen[orig] = true;
        }
        assert!(seen.iter().all(|&s| s));
        // Re-parsing the canonical string reproduces an isomorphic graph:
        // atom at ordinal i has the element of original atom_order[i].
        let re = parse_smiles(&c.smiles).unwrap();
        for (i, &orig) in c.atom_order.iter().enumerate() {
            assert_eq!(re.atom(i).element, g.atom(orig).element);
        }
    }

    #[test]
    fn rearranged_starts_canonicalize_equal() {
        let s = "CCCCCCCCN(CCO)CC(=O)OCCCC";
        let g = parse_smiles(s).unwrap();
        let base = canonicalize(&g).unwrap().smiles;
        for start in 0..g.n_atoms() {
            let alt = write_smiles(&g, start, &NeighborOrder::Input).unwrap();
            let re = parse_smiles(&alt).unwrap();
            assert_eq!(canonicalize(&re).unwrap().smiles, base);
        }
    }

    #[test]
    fn symmetric_molecules() {
        // Highly symmetric cases exercise the tie-break search.
        assert_eq!(canon("CC(C)(C)C"), canon("CC(C)(C)C"));
        let g = parse_smiles("CC(C)(C)C").unwrap();
        let perm = vec![4, 3, 1, 0, 2];
        assert_eq!(canon("CC(C)(C)C"), canonicalize(&g.reordered(&perm)).unwrap().smiles);
        // Benzene from different ring writings.
        assert_eq!(canon("c1ccccc1"), canon("c1ccccc1"));
    }

    #[test]
    fn stereo_ignored() {
        assert_eq!(canon("C/C=C/C"), canon("CC=CC"));
        assert_eq!(canon("C[C@H](N)O"), canon("CC(N)O"));
    }

    #[test]
    fn disconnected_rejected() {
        let mut g = MolGraph::new();
        g.add_atom(crate::chem::Atom::new(crate::chem::Element::C));
        g.add_atom(crate::chem::Atom::new(crate::chem::Element::C));
        assert_eq!(canonicalize(&g), Err(ChemError::DisconnectedGraph));
    }
}
