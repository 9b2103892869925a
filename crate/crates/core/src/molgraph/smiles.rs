//! SMILES reader and writer for the subset the engine exchanges: atoms,
//! bonds, branches, ring closures, bracket atoms (isotope, chirality tag,
//! hydrogen count, charge, atom class) and dot-separated fragments.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Atom, BondOrder, Element, GraphError, Molecule, MAX_ABS_CHARGE};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SmilesErrorKind {
    #[error("empty SMILES string")]
    Empty,
    #[error("unbalanced parenthesis")]
    UnbalancedParenthesis,
    #[error("empty branch")]
    EmptyBranch,
    #[error("ring closure {0} is never closed")]
    UnclosedRing(u32),
    #[error("ring closure bond orders disagree")]
    RingBondMismatch,
    #[error("unknown element symbol '{0}'")]
    UnknownElement(String),
    #[error("charge or hydrogen count outside brackets")]
    BracketOnlySyntax,
    #[error("wildcard atoms are not supported")]
    Wildcard,
    #[error("expected an atom")]
    ExpectedAtom,
    #[error("expected ']'")]
    ExpectedClosingBracket,
    #[error("bond without a following atom")]
    DanglingBond,
    #[error("formal charge magnitude exceeds {MAX_ABS_CHARGE}")]
    ChargeOutOfRange,
    #[error("quadruple bonds are not supported")]
    UnsupportedBond,
    #[error("unexpected character '{0}'")]
    Unexpected(char),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A SMILES syntax error with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind} at byte {offset}")]
pub struct SmilesError {
    pub offset: usize,
    pub kind: SmilesErrorKind,
}

impl SmilesError {
    fn new(offset: usize, kind: SmilesErrorKind) -> SmilesError {
        SmilesError { offset, kind }
    }
}

#[derive(Clone, Copy)]
struct BondSpec {
    order: BondOrder,
    stereo: Option<char>,
}

struct RingOpen {
    atom: usize,
    bond: Option<BondSpec>,
    offset: usize,
}

/// Parses one SMILES string into a (possibly disconnected) molecule.
///
/// Bare organic-subset atoms get hydrogens from their lowest normal valence
/// that accommodates the bond-order sum; aromatic atoms count one extra
/// unit and use only their lowest valence. Bracket atoms carry exactly the
/// hydrogens written. Explicit `[H]` atoms attached to a single heavy atom
/// are folded into that atom's hydrogen count.
pub fn parse_smiles(text: &str) -> Result<Molecule, SmilesError> {
    let mut parser = Parser {
        s: text.as_bytes(),
        pos: 0,
        mol: Molecule::new(),
        bracketed: Vec::new(),
    };
    parser.run()?;
    Ok(parser.finish())
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    mol: Molecule,
    bracketed: Vec<bool>,
}

impl Parser<'_> {
    fn err<T>(&self, offset: usize, kind: SmilesErrorKind) -> Result<T, SmilesError> {
        Err(SmilesError::new(offset, kind))
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        if self.s.iter().all(|c| c.is_ascii_whitespace()) {
            return self.err(0, SmilesErrorKind::Empty);
        }
        let mut prev: Option<usize> = None;
        let mut pending: Option<(BondSpec, usize)> = None;
        // (atom before the branch, offset of '(', atom count when opened)
        let mut branches: Vec<(usize, usize, usize)> = Vec::new();
        let mut rings: BTreeMap<u32, RingOpen> = BTreeMap::new();

        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    let Some(p) = prev else {
                        return self.err(start, SmilesErrorKind::ExpectedAtom);
                    };
                    if pending.is_some() {
                        return self.err(start, SmilesErrorKind::DanglingBond);
                    }
                    branches.push((p, start, self.mol.atom_count()));
                    self.pos += 1;
                }
                b')' => {
                    let Some((p, _, count)) = branches.pop() else {
                        return self.err(start, SmilesErrorKind::UnbalancedParenthesis);
                    };
                    if pending.is_some() {
                        return self.err(start, SmilesErrorKind::DanglingBond);
                    }
                    if self.mol.atom_count() == count {
                        return self.err(start, SmilesErrorKind::EmptyBranch);
                    }
                    prev = Some(p);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' | b'$' => {
                    if prev.is_none() || pending.is_some() {
                        return self.err(start, SmilesErrorKind::ExpectedAtom);
                    }
                    let spec = match c {
                        b'-' => BondSpec {
                            order: BondOrder::Single,
                            stereo: None,
                        },
                        b'=' => BondSpec {
                            order: BondOrder::Double,
                            stereo: None,
                        },
                        b'#' => BondSpec {
                            order: BondOrder::Triple,
                            stereo: None,
                        },
                        b':' => BondSpec {
                            order: BondOrder::Aromatic,
                            stereo: None,
                        },
                        b'/' => BondSpec {
                            order: BondOrder::Single,
                            stereo: Some('/'),
                        },
                        b'\\' => BondSpec {
                            order: BondOrder::Single,
                            stereo: Some('\\'),
                        },
                        _ => return self.err(start, SmilesErrorKind::UnsupportedBond),
                    };
                    pending = Some((spec, start));
                    self.pos += 1;
                }
                b'.' => {
                    if prev.is_none() || pending.is_some() || !branches.is_empty() {
                        return self.err(start, SmilesErrorKind::ExpectedAtom);
                    }
                    prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    let Some(p) = prev else {
                        return self.err(start, SmilesErrorKind::ExpectedAtom);
                    };
                    let num = self.ring_number()?;
                    let bond = pending.take().map(|(b, _)| b);
                    if let Some(open) = rings.remove(&num) {
                        let spec = match (open.bond, bond) {
                            (Some(x), Some(y)) if x.order != y.order => {
                                return self.err(start, SmilesErrorKind::RingBondMismatch)
                            }
                            (Some(x), _) => x,
                            (None, Some(y)) => y,
                            (None, None) => self.default_bond(open.atom, p),
                        };
                        self.mol
                            .add_bond_with_stereo(open.atom, p, spec.order, spec.stereo)
                            .map_err(|e| SmilesError::new(start, e.into()))?;
                    } else {
                        rings.insert(
                            num,
                            RingOpen {
                                atom: p,
                                bond,
                                offset: start,
                            },
                        );
                    }
                }
                b'[' => {
                    let idx = self.bracket_atom()?;
                    self.attach(idx, &mut prev, &mut pending, start)?;
                }
                b'*' => return self.err(start, SmilesErrorKind::Wildcard),
                b'+' | b'H' => return self.err(start, SmilesErrorKind::BracketOnlySyntax),
                c if c.is_ascii_alphabetic() => {
                    let idx = self.organic_atom()?;
                    self.attach(idx, &mut prev, &mut pending, start)?;
                }
                c => return self.err(start, SmilesErrorKind::Unexpected(c as char)),
            }
        }
        if let Some((_, offset)) = pending {
            return self.err(offset, SmilesErrorKind::DanglingBond);
        }
        if let Some((_, offset, _)) = branches.first() {
            return self.err(*offset, SmilesErrorKind::UnbalancedParenthesis);
        }
        if let Some((num, open)) = rings.iter().next() {
            return self.err(open.offset, SmilesErrorKind::UnclosedRing(*num));
        }
        if self.mol.is_empty() {
            return self.err(0, SmilesErrorKind::Empty);
        }
        Ok(())
    }

    fn attach(
        &mut self,
        idx: usize,
        prev: &mut Option<usize>,
        pending: &mut Option<(BondSpec, usize)>,
        offset: usize,
    ) -> Result<(), SmilesError> {
        if let Some(p) = *prev {
            let spec = match pending.take() {
                Some((b, _)) => b,
                None => self.default_bond(p, idx),
            };
            self.mol
                .add_bond_with_stereo(p, idx, spec.order, spec.stereo)
                .map_err(|e| SmilesError::new(offset, e.into()))?;
        }
        *prev = Some(idx);
        Ok(())
    }

    fn default_bond(&self, a: usize, b: usize) -> BondSpec {
        let order = if self.mol.atom(a).aromatic && self.mol.atom(b).aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        };
        BondSpec {
            order,
            stereo: None,
        }
    }

    fn ring_number(&mut self) -> Result<u32, SmilesError> {
        let start = self.pos;
        if self.peek() == Some(b'%') {
            let digits = self.s.get(self.pos + 1..self.pos + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    Ok(((d[0] - b'0') * 10 + (d[1] - b'0')) as u32)
                }
                _ => self.err(start, SmilesErrorKind::Unexpected('%')),
            }
        } else {
            let d = self.s[self.pos] - b'0';
            self.pos += 1;
            Ok(d as u32)
        }
    }

    fn organic_atom(&mut self) -> Result<usize, SmilesError> {
        let start = self.pos;
        let c = self.s[self.pos];
        let next = self.s.get(self.pos + 1).copied();
        let (symbol, aromatic, len) = match (c, next) {
            (b'B', Some(b'r')) => ("Br", false, 2),
            (b'C', Some(b'l')) => ("Cl", false, 2),
            (b'B', _) => ("B", false, 1),
            (b'C', _) => ("C", false, 1),
            (b'N', _) => ("N", false, 1),
            (b'O', _) => ("O", false, 1),
            (b'P', _) => ("P", false, 1),
            (b'S', _) => ("S", false, 1),
            (b'F', _) => ("F", false, 1),
            (b'I', _) => ("I", false, 1),
            (b'b', _) => ("B", true, 1),
            (b'c', _) => ("C", true, 1),
            (b'n', _) => ("N", true, 1),
            (b'o', _) => ("O", true, 1),
            (b'p', _) => ("P", true, 1),
            (b's', _) => ("S", true, 1),
            _ => {
                let end = self.s[start + 1..]
                    .iter()
                    .position(|b| !b.is_ascii_lowercase())
                    .map_or(self.s.len(), |p| start + 1 + p);
                let sym = String::from_utf8_lossy(&self.s[start..end]).into_owned();
                return self.err(start, SmilesErrorKind::UnknownElement(sym));
            }
        };
        self.pos += len;
        let element = Element::from_symbol(symbol).expect("organic subset symbols are valid");
        let idx = self
            .mol
            .add_atom(Atom::new(element).with_aromatic(aromatic));
        self.bracketed.push(false);
        Ok(idx)
    }

    fn digits(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .ok()?
            .parse()
            .ok()
    }

    fn bracket_atom(&mut self) -> Result<usize, SmilesError> {
        let open = self.pos;
        self.pos += 1;
        let isotope = self.digits();
        let sym_start = self.pos;
        let (element, aromatic) = match self.peek() {
            Some(b'*') => return self.err(sym_start, SmilesErrorKind::Wildcard),
            Some(c) if c.is_ascii_alphabetic() => {
                let lower = c.is_ascii_lowercase();
                let first = c.to_ascii_uppercase() as char;
                let second = self
                    .s
                    .get(self.pos + 1)
                    .copied()
                    .filter(u8::is_ascii_lowercase);
                let two = second.and_then(|s| {
                    let sym: String = [first, s as char].iter().collect();
                    Element::from_symbol(&sym)
                });
                match two {
                    Some(el) => {
                        self.pos += 2;
                        (el, lower)
                    }
                    None => {
                        let Some(el) = Element::from_symbol(&first.to_string()) else {
                            return self.err(
                                sym_start,
                                SmilesErrorKind::UnknownElement((c as char).to_string()),
                            );
                        };
                        self.pos += 1;
                        (el, lower)
                    }
                }
            }
            _ => return self.err(sym_start, SmilesErrorKind::ExpectedAtom),
        };

        let mut chirality = None;
        if self.peek() == Some(b'@') {
            let start = self.pos;
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
            } else if let Some(class) = self.s.get(self.pos..self.pos + 2) {
                if matches!(class, b"TH" | b"AL" | b"SP" | b"TB" | b"OH") {
                    self.pos += 2;
                    self.digits();
                }
            }
            chirality = Some(String::from_utf8_lossy(&self.s[start..self.pos]).into());
        }

        let mut h = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            h = self.digits().unwrap_or(1).min(u8::MAX as u32) as u8;
        }

        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let charge_start = self.pos;
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.digits() {
                charge = unit * n as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                }
            }
            if charge.abs() > MAX_ABS_CHARGE as i32 {
                return self.err(charge_start, SmilesErrorKind::ChargeOutOfRange);
            }
        }

        let mut map_id = None;
        if self.peek() == Some(b':') {
            self.pos += 1;
            map_id = self.digits();
            if map_id.is_none() {
                return self.err(self.pos, SmilesErrorKind::ExpectedClosingBracket);
            }
        }

        if self.peek() != Some(b']') {
            return self.err(self.pos.max(open), SmilesErrorKind::ExpectedClosingBracket);
        }
        self.pos += 1;

        let atom = Atom {
            element,
            formal_charge: charge as i8,
            implicit_h: h,
            aromatic,
            isotope: isotope.map(|i| i.min(u16::MAX as u32) as u16),
            map_id: map_id.filter(|&m| m > 0),
            chirality,
        };
        let idx = self.mol.add_atom(atom);
        self.bracketed.push(true);
        Ok(idx)
    }

    fn finish(mut self) -> Molecule {
        for i in 0..self.mol.atom_count() {
            if !self.bracketed[i] {
                let atom = self.mol.atom(i);
                let h = default_implicit_h(atom.element, atom.aromatic, self.mol.bond_order_sum(i))
                    .unwrap_or(0);
                self.mol.atom_mut(i).implicit_h = h;
            }
        }
        fold_explicit_hydrogens(self.mol)
    }
}

/// Hydrogen count a bare organic-subset atom receives. `None` for elements
/// that must always be bracketed.
pub(crate) fn default_implicit_h(element: Element, aromatic: bool, bond_sum: u8) -> Option<u8> {
    if !element.is_organic_subset() || (aromatic && !element.is_aromatic_subset()) {
        return None;
    }
    let valences = element.default_valences();
    let (valences, sum) = if aromatic {
        (&valences[..1], bond_sum + 1)
    } else {
        (valences, bond_sum)
    };
    Some(valences.iter().find(|&&v| v >= sum).map_or(0, |&v| v - sum))
}

fn is_foldable_hydrogen(mol: &Molecule, idx: usize) -> bool {
    let atom = mol.atom(idx);
    if atom.element != Element::H
        || atom.formal_charge != 0
        || atom.isotope.is_some()
        || atom.implicit_h != 0
        || atom.map_id.is_some()
        || mol.degree(idx) != 1
    {
        return false;
    }
    let (nbr, bond) = mol.neighbors(idx)[0];
    mol.bonds()[bond].order == BondOrder::Single && mol.atom(nbr).element != Element::H
}

fn fold_explicit_hydrogens(mol: Molecule) -> Molecule {
    let fold: Vec<bool> = (0..mol.atom_count())
        .map(|i| is_foldable_hydrogen(&mol, i))
        .collect();
    if !fold.iter().any(|&f| f) {
        return mol;
    }
    let mut out = Molecule::new();
    let mut new_index = vec![usize::MAX; mol.atom_count()];
    for (i, atom) in mol.atoms().iter().enumerate() {
        if !fold[i] {
            new_index[i] = out.add_atom(atom.clone());
        }
    }
    for (i, _) in mol.atoms().iter().enumerate() {
        if fold[i] {
            let (nbr, _) = mol.neighbors(i)[0];
            let target = out.atom_mut(new_index[nbr]);
            target.implicit_h = target.implicit_h.saturating_add(1);
        }
    }
    for bond in mol.bonds() {
        let (a, b) = bond.endpoints();
        if fold[a] || fold[b] {
            continue;
        }
        out.add_bond_with_stereo(new_index[a], new_index[b], bond.order, bond.stereo)
            .expect("reindexing preserves validity");
    }
    out
}

/// Writes SMILES with atoms visited in index order.
///
/// Stereo annotations are not emitted. Atom-map labels are.
pub fn write_smiles(mol: &Molecule) -> String {
    let priority: Vec<usize> = (0..mol.atom_count()).collect();
    write_with_priority(mol, &priority, true)
}

/// Writes SMILES, starting each fragment at its lowest-priority atom and
/// visiting neighbours in ascending priority.
pub(crate) fn write_with_priority(mol: &Molecule, priority: &[usize], with_maps: bool) -> String {
    let n = mol.atom_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| priority[i]);

    let sorted_neighbors: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|v| {
            let mut nb = mol.neighbors(v).to_vec();
            nb.sort_by_key(|&(w, _)| priority[w]);
            nb
        })
        .collect();

    // First pass: spanning forest and ring-closure bonds.
    let mut visited = vec![false; n];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut ring_open: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut ring_close: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut roots = Vec::new();
    let mut tree_bond = vec![false; mol.bonds().len()];
    let mut seen_bond = vec![false; mol.bonds().len()];
    for &start in &order {
        if visited[start] {
            continue;
        }
        roots.push(start);
        visited[start] = true;
        let mut stack = vec![(start, 0usize)];
        while let Some(top) = stack.last_mut() {
            let (v, pos) = *top;
            if pos == sorted_neighbors[v].len() {
                stack.pop();
                continue;
            }
            top.1 += 1;
            let (w, bond) = sorted_neighbors[v][pos];
            if seen_bond[bond] {
                continue;
            }
            seen_bond[bond] = true;
            if visited[w] {
                // w is an ancestor still on the stack: ring bond opened at w
                ring_open[w].push(bond);
                ring_close[v].push(bond);
            } else {
                visited[w] = true;
                tree_bond[bond] = true;
                children[v].push((w, bond));
                stack.push((w, 0));
            }
        }
    }

    let mut out = String::new();
    let mut digits: BTreeMap<usize, u32> = BTreeMap::new();
    let mut free: Vec<bool> = vec![true; 100];
    for (ri, &root) in roots.iter().enumerate() {
        if ri > 0 {
            out.push('.');
        }
        // explicit stack of emission tasks to avoid recursion depth limits
        enum Task {
            Atom(usize, Option<usize>),
            Text(&'static str),
        }
        let mut tasks = vec![Task::Atom(root, None)];
        while let Some(task) = tasks.pop() {
            let (v, via) = match task {
                Task::Text(t) => {
                    out.push_str(t);
                    continue;
                }
                Task::Atom(v, via) => (v, via),
            };
            if let Some(bond) = via {
                push_bond_symbol(&mut out, mol, bond);
            }
            push_atom(&mut out, mol, v, with_maps);
            // closings first, in the order the openings were emitted
            let mut closes = ring_close[v].clone();
            closes.sort_by_key(|b| digits.get(b).copied().unwrap_or(u32::MAX));
            for bond in closes {
                let d = digits.remove(&bond).expect("ring opened before closing");
                free[d as usize] = true;
                push_ring_digit(&mut out, d);
            }
            let mut opens = ring_open[v].clone();
            opens.sort_by_key(|&b| priority[mol.bonds()[b].other(v)]);
            for bond in opens {
                let d = (1..100)
                    .find(|&d| free[d])
                    .expect("fewer than 100 open rings") as u32;
                free[d as usize] = false;
                digits.insert(bond, d);
                push_bond_symbol(&mut out, mol, bond);
                push_ring_digit(&mut out, d);
            }
            let kids = &children[v];
            // push in reverse so the first child is emitted first
            for (i, &(w, bond)) in kids.iter().enumerate().rev() {
                let last = i + 1 == kids.len();
                if last {
                    tasks.push(Task::Atom(w, Some(bond)));
                } else {
                    tasks.push(Task::Text(")"));
                    tasks.push(Task::Atom(w, Some(bond)));
                    tasks.push(Task::Text("("));
                }
            }
        }
    }
    out
}

fn push_ring_digit(out: &mut String, d: u32) {
    if d < 10 {
        let _ = write!(out, "{d}");
    } else {
        let _ = write!(out, "%{d:02}");
    }
}

fn push_bond_symbol(out: &mut String, mol: &Molecule, bond: usize) {
    let b = &mol.bonds()[bond];
    let (x, y) = b.endpoints();
    let implied = if mol.atom(x).aromatic && mol.atom(y).aromatic {
        BondOrder::Aromatic
    } else {
        BondOrder::Single
    };
    if b.order != implied {
        out.push(b.order.smiles_symbol());
    }
}

fn push_atom(out: &mut String, mol: &Molecule, idx: usize, with_maps: bool) {
    let atom = mol.atom(idx);
    let map = if with_maps { atom.map_id } else { None };
    let bare = atom.formal_charge == 0
        && atom.isotope.is_none()
        && map.is_none()
        && default_implicit_h(atom.element, atom.aromatic, mol.bond_order_sum(idx))
            == Some(atom.implicit_h);
    let symbol = if atom.aromatic {
        atom.element.symbol().to_ascii_lowercase()
    } else {
        atom.element.symbol().to_string()
    };
    if bare {
        out.push_str(&symbol);
        return;
    }
    out.push('[');
    if let Some(iso) = atom.isotope {
        let _ = write!(out, "{iso}");
    }
    out.push_str(&symbol);
    match atom.implicit_h {
        0 => {}
        1 => out.push('H'),
        h => {
            let _ = write!(out, "H{h}");
        }
    }
    match atom.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => {
            let _ = write!(out, "+{c}");
        }
        c => {
            let _ = write!(out, "-{}", -c);
        }
    }
    if let Some(m) = map {
        let _ = write!(out, ":{m}");
    }
    out.push(']');
}
