use std::collections::HashMap;

use thiserror::Error;

use super::graph::{Atom, BondDir, BondOrder, Chirality, Element, MolGraph};

/// Parse failure with the byte offset of the offending character.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unbalanced parenthesis at offset {0}")]
    UnbalancedParenthesis(usize),
    #[error("ring bond {digit} opened at offset {0} was never closed", digit = .1)]
    UnclosedRingBond(usize, u16),
    #[error("unknown element at offset {0}")]
    UnknownElement(usize),
    #[error("valence violation at offset {0}: {1}")]
    ValenceViolation(usize, String),
    #[error("bracket atom opened at offset {0} is never closed")]
    UnclosedBracket(usize),
    #[error("unexpected character '{1}' at offset {0}")]
    UnexpectedChar(usize, char),
    #[error("duplicate bond at offset {0}")]
    DuplicateBond(usize),
    #[error("ring closure at offset {0} reuses digit {1} on the same atom")]
    SelfRingBond(usize, u16),
    #[error("ring bond orders disagree at offset {0}")]
    RingBondMismatch(usize),
    #[error("bond at offset {0} has no preceding atom")]
    DanglingBond(usize),
    #[error("empty SMILES")]
    EmptyInput,
}

impl ParseError {
    /// Byte offset the error names (0 for empty input).
    pub fn offset(&self) -> usize {
        match self {
            ParseError::UnbalancedParenthesis(o)
            | ParseError::UnclosedRingBond(o, _)
            | ParseError::UnknownElement(o)
            | ParseError::ValenceViolation(o, _)
            | ParseError::UnclosedBracket(o)
            | ParseError::UnexpectedChar(o, _)
            | ParseError::DuplicateBond(o)
            | ParseError::SelfRingBond(o, _)
            | ParseError::RingBondMismatch(o)
            | ParseError::DanglingBond(o) => *o,
            ParseError::EmptyInput => 0,
        }
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    graph: MolGraph,
    /// Source offset of each atom, for valence diagnostics.
    atom_offsets: Vec<usize>,
    /// Whether each atom came from a bracket (explicit H already resolved).
    bracketed: Vec<bool>,
    /// Open ring closures: digit → (atom, pending order, pending dir, offset).
    rings: HashMap<u16, (usize, Option<BondOrder>, Option<BondDir>, usize)>,
    /// Branch stack of "previous atom" indices.
    stack: Vec<usize>,
    prev: Option<usize>,
    pending_order: Option<BondOrder>,
    pending_dir: Option<BondDir>,
    pending_offset: usize,
}

/// Parses a SMILES string into a molecular graph.
///
/// Atom order in the result matches the left-to-right order of atom tokens.
/// Implicit hydrogens are filled in by standard valence rules; every failure
/// names the byte offset it occurred at.
pub fn parse_smiles(s: &str) -> Result<MolGraph, ParseError> {
    if s.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let mut p = Parser {
        bytes: s.as_bytes(),
        pos: 0,
        graph: MolGraph::new(),
        atom_offsets: Vec::new(),
        bracketed: Vec::new(),
        rings: HashMap::new(),
        stack: Vec::new(),
        prev: None,
        pending_order: None,
        pending_dir: None,
        pending_offset: 0,
    };
    p.run()?;
    Ok(p.graph)
}

impl<'a> Parser<'a> {
    fn run(&mut self) -> Result<(), ParseError> {
        while self.pos < self.bytes.len() {
            let off = self.pos;
            let c = self.bytes[self.pos];
            match c {
                b'(' => {
                    let prev = self.prev.ok_or(ParseError::UnbalancedParenthesis(off))?;
                    if self.pending_order.is_some() {
                        return Err(ParseError::DanglingBond(self.pending_offset));
                    }
                    self.stack.push(prev);
                    self.pos += 1;
                }
                b')' => {
                    if self.pending_order.is_some() {
                        return Err(ParseError::DanglingBond(self.pending_offset));
                    }
                    let top = self
                        .stack
                        .pop()
                        .ok_or(ParseError::UnbalancedParenthesis(off))?;
                    self.prev = Some(top);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.pending_order.is_some() {
                        return Err(ParseError::DanglingBond(off));
                    }
                    let (order, dir) = match c {
                        b'-' => (BondOrder::Single, None),
                        b'=' => (BondOrder::Double, None),
                        b'#' => (BondOrder::Triple, None),
                        b':' => (BondOrder::Aromatic, None),
                        b'/' => (BondOrder::Single, Some(BondDir::Up)),
                        _ => (BondOrder::Single, Some(BondDir::Down)),
                    };
                    self.pending_order = Some(order);
                    self.pending_dir = dir;
                    self.pending_offset = off;
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    let digit = u16::from(c - b'0');
                    self.pos += 1;
                    self.ring_closure(digit, off)?;
                }
                b'%' => {
                    let d1 = self.bytes.get(self.pos + 1);
                    let d2 = self.bytes.get(self.pos + 2);
                    match (d1, d2) {
                        (Some(a), Some(b)) if a.is_ascii_digit() && b.is_ascii_digit() => {
                            let digit = u16::from(a - b'0') * 10 + u16::from(b - b'0');
                            self.pos += 3;
                            self.ring_closure(digit, off)?;
                        }
                        _ => return Err(ParseError::UnexpectedChar(off, '%')),
                    }
                }
                b'[' => {
                    let (atom, el_off) = self.parse_bracket_atom(off)?;
                    self.push_atom(atom, el_off, true)?;
                }
                _ => {
                    let atom = self.parse_bare_atom(off)?;
                    self.push_atom(atom, off, false)?;
                }
            }
        }
        if let Some(&top) = self.stack.last() {
            let _ = top;
            // Report at the end of input; the opening '(' offset is more useful.
            // We track it by re-scanning for the earliest unmatched '('.
            return Err(ParseError::UnbalancedParenthesis(
                self.earliest_unmatched_paren(),
            ));
        }
        if self.pending_order.is_some() {
            return Err(ParseError::DanglingBond(self.pending_offset));
        }
        if let Some((&digit, &(_, _, _, off))) = self
            .rings
            .iter()
            .min_by_key(|(_, &(_, _, _, off))| off)
            .map(|(d, v)| (d, v))
        {
            return Err(ParseError::UnclosedRingBond(off, digit));
        }
        if self.graph.n_atoms() == 0 {
            return Err(ParseError::EmptyInput);
        }
        self.resolve_hydrogens()?;
        self.check_aromatic_rings()?;
        Ok(())
    }

    fn earliest_unmatched_paren(&self) -> usize {
        let mut depth = 0usize;
        let mut opens: Vec<usize> = Vec::new();
        for (i, &b) in self.bytes.iter().enumerate() {
            match b {
                b'(' => {
                    opens.push(i);
                    depth += 1;
                }
                b')' if depth > 0 => {
                    opens.pop();
                    depth -= 1;
                }
                _ => {}
            }
        }
        opens.first().copied().unwrap_or(0)
    }

    fn parse_bare_atom(&mut self, off: usize) -> Result<Atom, ParseError> {
        let c = self.bytes[self.pos] as char;
        // Two-letter elements first.
        if c == 'C' || c == 'B' {
            let two: Option<Element> = match (c, self.bytes.get(self.pos + 1)) {
                ('C', Some(b'l')) => Some(Element::Cl),
                ('B', Some(b'r')) => Some(Element::Br),
                _ => None,
            };
            if let Some(el) = two {
                self.pos += 2;
                return Ok(Atom::new(el));
            }
            if c == 'B' {
                return Err(ParseError::UnknownElement(off));
            }
        }
        let (element, aromatic) = match c {
            'C' => (Element::C, false),
            'N' => (Element::N, false),
            'O' => (Element::O, false),
            'P' => (Element::P, false),
            'S' => (Element::S, false),
            'F' => (Element::F, false),
            'c' => (Element::C, true),
            'n' => (Element::N, true),
            'o' => (Element::O, true),
            'p' => (Element::P, true),
            's' => (Element::S, true),
            c if c.is_ascii_alphabetic() => return Err(ParseError::UnknownElement(off)),
            c => return Err(ParseError::UnexpectedChar(off, c)),
        };
        self.pos += 1;
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        Ok(atom)
    }

    fn parse_bracket_atom(&mut self, open_off: usize) -> Result<(Atom, usize), ParseError> {
        self.pos += 1; // consume '['
        let close = self.bytes[self.pos..]
            .iter()
            .position(|&b| b == b']')
            .map(|i| self.pos + i)
            .ok_or(ParseError::UnclosedBracket(open_off))?;

        let el_off = self.pos;
        if self.pos >= close {
            return Err(ParseError::UnknownElement(el_off));
        }
        let c = self.bytes[self.pos] as char;
        let (element, aromatic) = {
            // Two-letter first.
            let next = if self.pos + 1 < close {
                Some(self.bytes[self.pos + 1] as char)
            } else {
                None
            };
            match (c, next) {
                ('C', Some('l')) => {
                    self.pos += 2;
                    (Element::Cl, false)
                }
                ('B', Some('r')) => {
                    self.pos += 2;
                    (Element::Br, false)
                }
                _ => {
                    let (el, ar) = match c {
                        'C' => (Element::C, false),
                        'N' => (Element::N, false),
                        'O' => (Element::O, false),
                        'P' => (Element::P, false),
                        'S' => (Element::S, false),
                        'F' => (Element::F, false),
                        'c' => (Element::C, true),
                        'n' => (Element::N, true),
                        'o' => (Element::O, true),
                        'p' => (Element::P, true),
                        's' => (Element::S, true),
                        _ => return Err(ParseError::UnknownElement(el_off)),
                    };
                    self.pos += 1;
                    (el, ar)
                }
            }
        };

        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;

        // Optional chirality.
        if self.pos < close && self.bytes[self.pos] == b'@' {
            if self.pos + 1 < close && self.bytes[self.pos + 1] == b'@' {
                atom.chirality = Some(Chirality::Cw);
                self.pos += 2;
            } else {
                atom.chirality = Some(Chirality::Ccw);
                self.pos += 1;
            }
        }
        // Optional hydrogen count.
        if self.pos < close && self.bytes[self.pos] == b'H' {
            self.pos += 1;
            let mut h: u8 = 1;
            if self.pos < close && self.bytes[self.pos].is_ascii_digit() {
                h = self.bytes[self.pos] - b'0';
                self.pos += 1;
            }
            atom.explicit_h = h;
        }
        // Optional charge.
        if self.pos < close && (self.bytes[self.pos] == b'+' || self.bytes[self.pos] == b'-') {
            let sign: i8 = if self.bytes[self.pos] == b'+' { 1 } else { -1 };
            let sign_byte = self.bytes[self.pos];
            self.pos += 1;
            let mut magnitude: i8 = 1;
            if self.pos < close && self.bytes[self.pos].is_ascii_digit() {
                magnitude = (self.bytes[self.pos] - b'0') as i8;
                self.pos += 1;
            } else {
                while self.pos < close && self.bytes[self.pos] == sign_byte {
                    magnitude += 1;
                    self.pos += 1;
                }
            }
            atom.formal_charge = sign * magnitude;
        }
        if self.pos != close {
            return Err(ParseError::UnexpectedChar(
                self.pos,
                self.bytes[self.pos] as char,
            ));
        }
        self.pos = close + 1;
        Ok((atom, el_off))
    }

    fn push_atom(&mut self, atom: Atom, off: usize, bracketed: bool) -> Result<(), ParseError> {
        let idx = self.graph.add_atom(atom);
        self.atom_offsets.push(off);
        self.bracketed.push(bracketed);
        if let Some(prev) = self.prev {
            let order = self.pending_order.take().unwrap_or_else(|| {
                if self.graph.atom(prev).aromatic && self.graph.atom(idx).aromatic {
                    BondOrder::Aromatic
                } else {
                    BondOrder::Single
                }
            });
            let dir = self.pending_dir.take();
            self.graph
                .add_bond_with_dir(prev, idx, order, dir)
                .map_err(|_| ParseError::DuplicateBond(off))?;
        } else if self.pending_order.is_some() {
            return Err(ParseError::DanglingBond(self.pending_offset));
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_closure(&mut self, digit: u16, off: usize) -> Result<(), ParseError> {
        let atom = self.prev.ok_or(ParseError::DanglingBond(off))?;
        let order_here = self.pending_order.take();
        let dir_here = self.pending_dir.take();
        match self.rings.remove(&digit) {
            None => {
                self.rings.insert(digit, (atom, order_here, dir_here, off));
            }
            Some((open_atom, order_there, dir_there, _open_off)) => {
                if open_atom == atom {
                    return Err(ParseError::SelfRingBond(off, digit));
                }
                let order = match (order_there, order_here) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(ParseError::RingBondMismatch(off));
                    }
                    (Some(a), _) => a,
                    (None, Some(b)) => b,
                    (None, None) => {
                        if self.graph.atom(open_atom).aromatic && self.graph.atom(atom).aromatic {
                            BondOrder::Aromatic
                        } else {
                            BondOrder::Single
                        }
                    }
                };
                let dir = dir_there.or(dir_here);
                self.graph
                    .add_bond_with_dir(open_atom, atom, order, dir)
                    .map_err(|_| ParseError::DuplicateBond(off))?;
            }
        }
        Ok(())
    }

    /// Fills implicit hydrogens for bare atoms and validates valence.
    fn resolve_hydrogens(&mut self) -> Result<(), ParseError> {
        for i in 0..self.graph.n_atoms() {
            let used = self.graph.bond_order_units(i);
            let atom = *self.graph.atom(i);
            let allowed = atom.element.allowed_valences(atom.formal_charge);
            if self.bracketed[i] {
                let total = u32::from(used) + u32::from(atom.explicit_h);
                let max = u32::from(atom.element.max_valence(atom.formal_charge));
                if total > max {
                    return Err(ParseError::ValenceViolation(
                        self.atom_offsets[i],
                        format!(
                            "{} with charge {} carries valence {} (max {})",
                            atom.element.symbol(),
                            atom.formal_charge,
                            total,
                            max
                        ),
                    ));
                }
            } else {
                let target = allowed.iter().copied().find(|&v| v >= used);
                match target {
                    Some(v) => {
                        // Aromatic atoms donate one valence to the ring π system;
                        // the half-unit rounding in bond_order_units covers it.
                        self.graph.atom_mut(i).explicit_h = v - used;
                    }
                    None => {
                        return Err(ParseError::ValenceViolation(
                            self.atom_offsets[i],
                            format!(
                                "{} has bond order sum {} above its maximum valence",
                                atom.element.symbol(),
                                used
                            ),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_aromatic_rings(&self) -> Result<(), ParseError> {
        if !self.graph.atoms().iter().any(|a| a.aromatic) {
            return Ok(());
        }
        let rings = self.graph.ring_atoms();
        for (i, atom) in self.graph.atoms().iter().enumerate() {
            if atom.aromatic && !rings[i] {
                return Err(ParseError::ValenceViolation(
                    self.atom_offsets[i],
                    "aromatic atom outside a ring".to_string(),
                ));
            }
        }
        Ok(())
    }
}

/// Byte offsets of each atom's element character, in atom order.
///
/// For bracket atoms this is the element letter inside the bracket; for the
/// two-letter halogens it is the first letter. Only meaningful on strings
/// that parse successfully.
pub fn atom_char_offsets(s: &str) -> Vec<usize> {
    let bytes = s.as_bytes();
    let mut offsets = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'[' => {
                let close = bytes[i..]
                    .iter()
                    .position(|&b| b == b']')
                    .map(|p| i + p)
                    .unwrap_or(bytes.len());
                // Element char is the first alphabetic character in the bracket.
                let mut j = i + 1;
                while j < close && !bytes[j].is_ascii_alphabetic() {
                    j += 1;
                }
                if j < close {
                    offsets.push(j);
                }
                i = close + 1;
            }
            b'C' if bytes.get(i + 1) == Some(&b'l') => {
                offsets.push(i);
                i += 2;
            }
            b'B' if bytes.get(i + 1) == Some(&b'r') => {
                offsets.push(i);
                i += 2;
            }
            b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'c' | b'n' | b'o' | b'p' | b's' => {
                offsets.push(i);
                i += 1;
            }
            _ => {
                i += 1;
            }
        }
    }
    offsets
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cco_parses_to_three_atoms() {
        let g = parse_smiles("CCO").unwrap();
        assert_eq!(g.n_atoms(), 3);
        assert_eq!(g.atom(0).element, Element::C);
        assert_eq!(g.atom(1).element, Element::C);
        assert_eq!(g.atom(2).element, Element::O);
        assert_eq!(g.bonds().len(), 2);
        assert!(g.bond_between(0, 1).is_some());
        assert!(g.bond_between(1, 2).is_some());
        assert_eq!(g.atom(0).explicit_h, 3);
        assert_eq!(g.atom(1).explicit_h, 2);
        assert_eq!(g.atom(2).explicit_h, 1);
    }

    #[test]
    fn triangle_ring() {
        let g = parse_smiles("C1CC1").unwrap();
        assert_eq!(g.n_atoms(), 3);
        assert_eq!(g.bonds().len(), 3);
        for i in 0..3 {
            assert_eq!(g.degree(i), 2);
        }
    }

    #[test]
    fn unbalanced_paren_at_offset_1() {
        assert_eq!(
            parse_smiles("C("),
            Err(ParseError::UnbalancedParenthesis(1))
        );
        assert_eq!(
            parse_smiles("CC)C"),
            Err(ParseError::UnbalancedParenthesis(2))
        );
    }

    #[test]
    fn ester_motif_graph() {
        // Hand-drawn: atoms C C O O C C with atom 1 double-bonded to atom 2 (the =O),
        // single bond to atom 3 (the ester O), then O-C-C.
        let g = parse_smiles("CC(=O)OCC").unwrap();
        assert_eq!(g.n_atoms(), 6);
        let b = g.bond_between(1, 2).unwrap();
        assert_eq!(b.order, BondOrder::Double);
        assert_eq!(g.atom(2).element, Element::O);
        assert_eq!(g.bond_between(1, 3).unwrap().order, BondOrder::Single);
        assert_eq!(g.atom(3).element, Element::O);
        assert!(g.bond_between(3, 4).is_some());
        assert!(g.bond_between(4, 5).is_some());
        assert_eq!(g.bonds().len(), 5);
    }

    #[test]
    fn unclosed_ring_reports_opening_offset() {
        assert_eq!(parse_smiles("C1CC"), Err(ParseError::UnclosedRingBond(1, 1)));
    }

    #[test]
    fn unknown_element_offset() {
        assert_eq!(parse_smiles("CXC"), Err(ParseError::UnknownElement(1)));
    }

    #[test]
    fn valence_violation_offset() {
        // Carbon with five bonds.
        let err = parse_smiles("C(C)(C)(C)(C)C").unwrap_err();
        assert!(matches!(err, ParseError::ValenceViolation(0, _)));
        // Double-bonded oxygen with an extra neighbor.
        let err = parse_smiles("C=O(C)").unwrap_err();
        assert!(matches!(err, ParseError::ValenceViolation(2, _)));
    }

    #[test]
    fn bracket_atoms() {
        let g = parse_smiles("C[N+](C)(C)C").unwrap();
        assert_eq!(g.atom(1).formal_charge, 1);
        assert_eq!(g.atom(1).explicit_h, 0);
        assert_eq!(g.degree(1), 4);

        let g = parse_smiles("[NH4+]").unwrap();
        assert_eq!(g.atom(0).explicit_h, 4);
        assert_eq!(g.atom(0).formal_charge, 1);

        let g = parse_smiles("CC(=O)[O-]").unwrap();
        assert_eq!(g.atom(3).formal_charge, -1);
        assert_eq!(g.atom(3).explicit_h, 0);
    }

    #[test]
    fn bracket_valence_checked() {
        let err = parse_smiles("[NH5]").unwrap_err();
        assert!(matches!(err, ParseError::ValenceViolation(1, _)));
    }

    #[test]
    fn aromatic_ring_hydrogens() {
        let g = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(g.n_atoms(), 6);
        for i in 0..6 {
            assert!(g.atom(i).aromatic);
            assert_eq!(g.atom(i).explicit_h, 1);
        }
        for b in g.bonds() {
            assert_eq!(b.order, BondOrder::Aromatic);
        }
    }

    #[test]
    fn aromatic_atom_outside_ring_rejected() {
        let err = parse_smiles("cc").unwrap_err();
        assert!(matches!(err, ParseError::ValenceViolation(_, _)));
    }

    #[test]
    fn stereo_markers_preserved() {
        let g = parse_smiles("C/C=C/C").unwrap();
        assert_eq!(g.bond_between(0, 1).unwrap().dir, Some(BondDir::Up));
        let g = parse_smiles("C[C@H](N)O").unwrap();
        assert_eq!(g.atom(1).chirality, Some(Chirality::Ccw));
        assert_eq!(g.atom(1).explicit_h, 1);
    }

    #[test]
    fn dot_disconnection_unsupported() {
        let err = parse_smiles("C.C").unwrap_err();
        assert_eq!(err, ParseError::UnexpectedChar(1, '.'));
    }

    #[test]
    fn dangling_bond_rejected() {
        assert!(matches!(
            parse_smiles("C="),
            Err(ParseError::DanglingBond(1))
        ));
        assert!(matches!(
            parse_smiles("=C"),
            Err(ParseError::DanglingBond(0))
        ));
    }

    #[test]
    fn two_letter_elements() {
        let g = parse_smiles("ClCCBr").unwrap();
        assert_eq!(g.atom(0).element, Element::Cl);
        assert_eq!(g.atom(3).element, Element::Br);
        assert_eq!(g.n_atoms(), 4);
    }

    #[test]
    fn ring_bond_order_on_either_side() {
        let g = parse_smiles("C=1CCCCC=1").unwrap();
        assert_eq!(g.bond_between(0, 5).unwrap().order, BondOrder::Double);
        let g = parse_smiles("C=1CCCCC1").unwrap();
        assert_eq!(g.bond_between(0, 5).unwrap().order, BondOrder::Double);
        assert!(matches!(
            parse_smiles("C=1CCCCC-1"),
            Err(ParseError::RingBondMismatch(_))
        ));
    }

    #[test]
    fn atom_offsets_scan() {
        assert_eq!(atom_char_offsets("CCO"), vec![0, 1, 2]);
        assert_eq!(atom_char_offsets("C[N+](C)O"), vec![0, 2, 6, 8]);
        assert_eq!(atom_char_offsets("ClC"), vec![0, 2]);
        assert_eq!(atom_char_offsets("C1CC1"), vec![0, 2, 3]);
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_smiles(""), Err(ParseError::EmptyInput));
    }
}
