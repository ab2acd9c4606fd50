//! Structural labels for lipids: tail counting, head/tail segmentation, the
//! connecting atom joining the two, and rearranged/decoy SMILES pairs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{
    canonicalize, parse_smiles, write_smiles, CanonicalForm, Element, MolGraph, NeighborOrder,
};
use crate::derive_seed;

/// Default minimum carbon run length for a terminal chain to count as a tail.
pub const DEFAULT_MIN_TAIL_LEN: usize = 4;

/// Attempts before `make_rearranged` gives up on tiny symmetric molecules.
const REARRANGE_ATTEMPTS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("no connecting atom: no head atom borders a tail region")]
    NoConnectingAtom,
    #[error("ambiguous connecting atom: candidates {0:?}")]
    AmbiguousConnectingAtom(Vec<usize>),
    #[error("record has no generation provenance; head/tail labels unavailable")]
    MissingProvenance,
    #[error("every rearrangement attempt reproduced the canonical text")]
    ExhaustedRetries,
    #[error("no adjacent heteroatom transposition yields a valid distinct molecule")]
    NoValidDecoy,
}

/// Per-atom region label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "H")]
    Head,
    #[serde(rename = "T")]
    Tail,
}

/// The structural ground truth attached to one lipid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralLabels {
    /// Number of tails, in `[2, 6]` for corpus lipids.
    pub n_tails: usize,
    /// Canonical ordinal of the atom joining head and tails.
    pub connecting_atom: usize,
    /// Region of each atom, in canonical order.
    pub atom_region: Vec<Region>,
}

/// A canonical SMILES paired with a rearranged or decoy second string.
/// `label` is true iff both members denote the same molecule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmilesPair {
    pub first: String,
    pub second: String,
    pub label: bool,
}

/// Head/tail region per atom, derived from a record's generation provenance:
/// head-fragment atoms plus the junction are `Head`, tail-fragment atoms are
/// `Tail`. External molecules without provenance cannot be labeled.
pub fn label_head_tail(record: &crate::corpus::LipidRecord) -> Result<Vec<Region>, AnalysisError> {
    let prov = record
        .provenance
        .as_ref()
        .ok_or(AnalysisError::MissingProvenance)?;
    Ok(prov
        .atom_frags
        .iter()
        .map(|tag| match tag {
            crate::corpus::FragTag::Head | crate::corpus::FragTag::Junction => Region::Head,
            crate::corpus::FragTag::Tail0 | crate::corpus::FragTag::Tail1 => Region::Tail,
        })
        .collect())
}

/// Lengths of all maximal terminal unbranched carbon runs.
///
/// A run starts at a degree-1 aliphatic carbon and extends through carbons of
/// degree ≤ 2 until the first branch point, heteroatom, or ring atom.
pub fn terminal_chain_lengths(g: &MolGraph) -> Vec<usize> {
    let mut lengths = Vec::new();
    for tip in 0..g.n_atoms() {
        if g.degree(tip) != 1 || !is_chain_carbon(g, tip) {
            continue;
        }
        let mut len = 1;
        let mut prev = tip;
        let mut cur = g.neighbors(tip)[0];
        while is_chain_carbon(g, cur) && g.degree(cur) <= 2 {
            len += 1;
            let next = g.neighbors(cur).iter().copied().find(|&w| w != prev);
            match next {
                Some(next) => {
                    prev = cur;
                    cur = next;
                }
                None => break,
            }
        }
        lengths.push(len);
    }
    lengths
}

fn is_chain_carbon(g: &MolGraph, i: usize) -> bool {
    g.atom(i).element == Element::C && !g.atom(i).aromatic
}

/// Counts terminal unbranched carbon chains of length ≥ `min_tail_len`.
pub fn count_tails(g: &MolGraph, min_tail_len: usize) -> usize {
    terminal_chain_lengths(g)
        .into_iter()
        .filter(|&len| len >= min_tail_len)
        .count()
}

/// Finds the unique head atom adjacent to a tail atom whose removal separates
/// every tail region from the head. The index is in the same atom order as
/// `region` (canonical order for corpus lipids).
pub fn find_connecting_atom(g: &MolGraph, region: &[Region]) -> Result<usize, AnalysisError> {
    assert_eq!(region.len(), g.n_atoms(), "region must cover all atoms");
    let candidates: Vec<usize> = (0..g.n_atoms())
        .filter(|&i| region[i] == Region::Head)
        .filter(|&i| g.neighbors(i).iter().any(|&j| region[j] == Region::Tail))
        .filter(|&i| separates_tails(g, region, i))
        .collect();
    match candidates.as_slice() {
        [] => Err(AnalysisError::NoConnectingAtom),
        [unique] => Ok(*unique),
        _ => Err(AnalysisError::AmbiguousConnectingAtom(candidates)),
    }
}

/// True if removing `cut` leaves no path from any head atom to any tail atom.
fn separates_tails(g: &MolGraph, region: &[Region], cut: usize) -> bool {
    let n = g.n_atoms();
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = (0..n)
        .filter(|&i| i != cut && region[i] == Region::Head)
        .collect();
    for &s in &stack {
        seen[s] = true;
    }
    while let Some(v) = stack.pop() {
        for &w in g.neighbors(v) {
            if w == cut || seen[w] {
                continue;
            }
            if region[w] == Region::Tail {
                return false;
            }
            seen[w] = true;
            stack.push(w);
        }
    }
    true
}

/// Writes a non-canonical SMILES for the molecule behind `c`: same structure,
/// different text. Deterministic in `(c, seed)`.
pub fn make_rearranged(c: &CanonicalForm, seed: u64) -> Result<String, AnalysisError> {
    let g = parse_smiles(&c.smiles).expect("canonical SMILES always parses");
    if g.n_atoms() < 2 {
        return Err(AnalysisError::ExhaustedRetries);
    }
    for attempt in 0..REARRANGE_ATTEMPTS {
        let sub = derive_seed(seed, "rearrange", attempt as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(sub);
        // Canonical emission starts at atom 0 of the re-parsed graph; start
        // anywhere else.
        let start = rng.gen_range(1..g.n_atoms());
        let s = write_smiles(&g, start, &NeighborOrder::Seeded(sub))
            .expect("canonical graph is connected");
        if s != c.smiles {
            debug_assert_eq!(
                canonicalize(&parse_smiles(&s).expect("writer output parses"))
                    .expect("connected")
                    .smiles,
                c.smiles
            );
            return Ok(s);
        }
    }
    Err(AnalysisError::ExhaustedRetries)
}

/// Builds a decoy: transposes one adjacent C↔O (ester-linkage positions
/// first) or C↔N character pair of the canonical string such that the result
/// parses and canonicalizes to a different molecule.
pub fn make_decoy(c: &CanonicalForm, seed: u64) -> Result<String, AnalysisError> {
    let bytes = c.smiles.as_bytes();
    let mut ester: Vec<usize> = Vec::new();
    let mut carbon_oxygen: Vec<usize> = Vec::new();
    let mut carbon_nitrogen: Vec<usize> = Vec::new();

    for i in 0..bytes.len().saturating_sub(1) {
        let pair = (bytes[i], bytes[i + 1]);
        let is_co = matches!(pair, (b'C', b'O') | (b'O', b'C'));
        let is_cn = matches!(pair, (b'C', b'N') | (b'N', b'C'));
        if !is_co && !is_cn {
            continue;
        }
        // The single-bonded ester oxygen and its chain carbon: ...C(=O)OC...
        let in_ester_motif = is_co && i >= 4 && &bytes[i - 4..=i + 1] == b"(=O)OC".as_slice();
        if in_ester_motif {
            ester.push(i);
        } else if is_co {
            carbon_oxygen.push(i);
        } else {
            carbon_nitrogen.push(i);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "decoy", 0));
    ester.shuffle(&mut rng);
    carbon_oxygen.shuffle(&mut rng);
    carbon_nitrogen.shuffle(&mut rng);

    for i in ester.into_iter().chain(carbon_oxygen).chain(carbon_nitrogen) {
        let mut swapped = bytes.to_vec();
        swapped.swap(i, i + 1);
        let candidate = String::from_utf8(swapped).expect("ASCII transposition");
        let Ok(g) = parse_smiles(&candidate) else {
            continue;
        };
        let Ok(canon) = canonicalize(&g) else {
            continue;
        };
        if canon.smiles != c.smiles {
            return Ok(candidate);
        }
    }
    Err(AnalysisError::NoValidDecoy)
}

/// Builds a 50/50 rearranged/decoy pair for one canonical SMILES. On the rare
/// molecule with no valid decoy the pair falls back to rearranged (the label
/// stays consistent with the construction).
pub fn make_pair(c: &CanonicalForm, seed: u64) -> SmilesPair {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "pair-coin", 0));
    let want_rearranged = rng.gen_bool(0.5);
    if want_rearranged {
        if let Ok(second) = make_rearranged(c, seed) {
            return SmilesPair {
                first: c.smiles.clone(),
                second,
                label: true,
            };
        }
    }
    match make_decoy(c, seed) {
        Ok(second) => SmilesPair {
            first: c.smiles.clone(),
            second,
            label: false,
        },
        Err(_) => {
            let second =
                make_rearranged(c, derive_seed(seed, "pair-fallback", 1)).unwrap_or_else(|_| {
                    // No rearrangement and no decoy can only happen for a
                    // single-atom molecule, which the corpus never contains.
                    c.smiles.clone()
                });
            SmilesPair {
                first: c.smiles.clone(),
                second,
                label: true,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Four-tail benchmark lipid: two branched ester arms on a hydroxybutyl
    // tertiary amine.
    pub const FOUR_TAIL_LIPID: &str =
        "CCCCCCCCC(CCCCCC)C(=O)OCCCCCCN(CCCCO)CCCCCCOC(=O)C(CCCCCC)CCCCCCCC";

    #[test]
    fn four_tail_lipid_counts_four() {
        let g = parse_smiles(FOUR_TAIL_LIPID).unwrap();
        assert_eq!(count_tails(&g, DEFAULT_MIN_TAIL_LEN), 4);
    }

    #[test]
    fn four_tail_lipid_nitrogen_ordinal() {
        // The sole nitrogen sits at atom ordinal 24 (0-based) in this writing.
        let g = parse_smiles(FOUR_TAIL_LIPID).unwrap();
        let n_idx: Vec<usize> = (0..g.n_atoms())
            .filter(|&i| g.atom(i).element == Element::N)
            .collect();
        assert_eq!(n_idx, vec![24]);
    }

    #[test]
    fn dioctylamine_has_two_tails() {
        let g = parse_smiles("N(CCCCCCCC)CCCCCCCC").unwrap();
        assert_eq!(count_tails(&g, DEFAULT_MIN_TAIL_LEN), 2);
    }

    #[test]
    fn short_chain_has_no_tails() {
        let g = parse_smiles("CCO").unwrap();
        assert_eq!(count_tails(&g, 4), 0);
        assert_eq!(count_tails(&g, 2), 1);
    }

    #[test]
    fn branch_point_terminates_runs() {
        // CCCC(CC)CCCC: runs stop short of the branch carbon, so the tips
        // are 3 and 4 carbons and the ethyl stub is 2.
        let g = parse_smiles("CCCC(CC)CCCC").unwrap();
        let mut lens = terminal_chain_lengths(&g);
        lens.sort_unstable();
        assert_eq!(lens, vec![2, 3, 4]);
        assert_eq!(count_tails(&g, 4), 1);
        // One more carbon on the short side makes both tips qualify.
        let g = parse_smiles("CCCCC(CC)CCCC").unwrap();
        assert_eq!(count_tails(&g, 4), 2);
    }

    #[test]
    fn connecting_atom_on_hand_labeled_graph() {
        // OCCN(CCCCC)CCCCC: label the OCC-N part head, both arms tail.
        let g = parse_smiles("OCCN(CCCCC)CCCCC").unwrap();
        let mut region = vec![Region::Tail; g.n_atoms()];
        for r in region.iter_mut().take(4) {
            *r = Region::Head;
        }
        assert_eq!(find_connecting_atom(&g, &region), Ok(3));
    }

    #[test]
    fn no_tails_means_no_connecting_atom() {
        let g = parse_smiles("OCCN").unwrap();
        let region = vec![Region::Head; g.n_atoms()];
        assert_eq!(
            find_connecting_atom(&g, &region),
            Err(AnalysisError::NoConnectingAtom)
        );
    }

    #[test]
    fn non_separating_candidates_rejected() {
        // Ring through head and tail regions: the head-tail border atoms do
        // not separate the regions, so there is no connecting atom.
        let g = parse_smiles("C1CCCCC1").unwrap();
        let mut region = vec![Region::Head; 6];
        region[3] = Region::Tail;
        region[4] = Region::Tail;
        assert_eq!(
            find_connecting_atom(&g, &region),
            Err(AnalysisError::NoConnectingAtom)
        );
    }

    #[test]
    fn rearranged_differs_but_same_molecule() {
        let c = canonicalize(&parse_smiles("CCO").unwrap()).unwrap();
        let r = make_rearranged(&c, 11).unwrap();
        assert_ne!(r, c.smiles);
        let back = canonicalize(&parse_smiles(&r).unwrap()).unwrap();
        assert_eq!(back.smiles, c.smiles);
    }

    #[test]
    fn rearranged_single_atom_exhausts() {
        let c = canonicalize(&parse_smiles("C").unwrap()).unwrap();
        assert_eq!(make_rearranged(&c, 0), Err(AnalysisError::ExhaustedRetries));
    }

    #[test]
    fn decoy_for_simple_ether() {
        let c = canonicalize(&parse_smiles("CCO").unwrap()).unwrap();
        assert_eq!(c.smiles, "CCO");
        let d = make_decoy(&c, 3).unwrap();
        assert_eq!(d, "COC");
        let dc = canonicalize(&parse_smiles(&d).unwrap()).unwrap();
        assert_ne!(dc.smiles, c.smiles);
    }

    #[test]
    fn decoy_requires_heteroatom() {
        let c = canonicalize(&parse_smiles("CCCC").unwrap()).unwrap();
        assert_eq!(make_decoy(&c, 0), Err(AnalysisError::NoValidDecoy));
    }

    #[test]
    fn decoy_is_one_transposition() {
        let c = canonicalize(&parse_smiles(FOUR_TAIL_LIPID).unwrap()).unwrap();
        let d = make_decoy(&c, 9).unwrap();
        let a = c.smiles.as_bytes();
        let b = d.as_bytes();
        assert_eq!(a.len(), b.len());
        let diffs: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
        assert_eq!(diffs.len(), 2);
        assert_eq!(diffs[1], diffs[0] + 1);
        assert_eq!(a[diffs[0]], b[diffs[1]]);
        assert_eq!(a[diffs[1]], b[diffs[0]]);
    }

    #[test]
    fn pair_labels_match_canonical_equality() {
        let c = canonicalize(&parse_smiles(FOUR_TAIL_LIPID).unwrap()).unwrap();
        let mut trues = 0;
        for seed in 0..40 {
            let pair = make_pair(&c, seed);
            let second = canonicalize(&parse_smiles(&pair.second).unwrap()).unwrap();
            assert_eq!(pair.label, second.smiles == pair.first);
            if pair.label {
                trues += 1;
            }
        }
        assert!(trues > 10 && trues < 30, "coin badly skewed: {trues}/40");
    }
}
