//! Heavy-atom molecular graphs, SMILES input/output, canonical identity and
//! the multiset-of-species state used throughout the engine.
//!
//! Hydrogens are counts on heavy atoms and never graph nodes, with the sole
//! exception of hydrogen atoms that cannot be folded into a neighbour
//! (protons, hydrides, isotopically labelled hydrogen).

mod canon;
mod element;
mod smiles;
mod state;
pub mod valence;

pub use canon::{canonical_form, canonical_labeling};
pub use element::Element;
pub use smiles::{parse_smiles, write_smiles, SmilesError, SmilesErrorKind};
pub use state::{heavy_atom_census, state_key, Census, Species, StateBag};

use std::fmt;

pub const MAX_ABS_CHARGE: i8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to the bond-order sum used for implicit hydrogens.
    pub fn valence_contribution(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn smiles_symbol(self) -> char {
        match self {
            BondOrder::Single => '-',
            BondOrder::Double => '=',
            BondOrder::Triple => '#',
            BondOrder::Aromatic => ':',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BondOrder::Single => "single",
            BondOrder::Double => "double",
            BondOrder::Triple => "triple",
            BondOrder::Aromatic => "aromatic",
        }
    }

    pub fn from_name(name: &str) -> Option<BondOrder> {
        match name {
            "single" | "1" | "-" => Some(BondOrder::Single),
            "double" | "2" | "=" => Some(BondOrder::Double),
            "triple" | "3" | "#" => Some(BondOrder::Triple),
            "aromatic" | ":" => Some(BondOrder::Aromatic),
            _ => None,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

impl fmt::Display for BondOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A heavy atom with its hydrogen count folded in.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    pub implicit_h: u8,
    pub aromatic: bool,
    pub isotope: Option<u16>,
    pub map_id: Option<u32>,
    /// Opaque tetrahedral/other chirality tag as written in the input. Not
    /// part of canonical identity.
    pub chirality: Option<Box<str>>,
}

impl Atom {
    pub fn new(element: Element) -> Atom {
        Atom {
            element,
            formal_charge: 0,
            implicit_h: 0,
            aromatic: false,
            isotope: None,
            map_id: None,
            chirality: None,
        }
    }

    pub fn with_charge(mut self, charge: i8) -> Atom {
        self.formal_charge = charge;
        self
    }

    pub fn with_h(mut self, h: u8) -> Atom {
        self.implicit_h = h;
        self
    }

    pub fn with_aromatic(mut self, aromatic: bool) -> Atom {
        self.aromatic = aromatic;
        self
    }

    /// Attributes that participate in canonical identity.
    pub(crate) fn identity(&self) -> (u8, u16, i8, u8, bool) {
        (
            self.element.atomic_number(),
            self.isotope.unwrap_or(0),
            self.formal_charge,
            self.implicit_h,
            self.aromatic,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bond {
    a: usize,
    b: usize,
    pub order: BondOrder,
    /// Directional '/' or '\' marker from the input; informational only.
    pub stereo: Option<char>,
}

impl Bond {
    pub fn endpoints(&self) -> (usize, usize) {
        (self.a, self.b)
    }

    pub fn other(&self, atom: usize) -> usize {
        if atom == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("atom index {0} out of range")]
    NoSuchAtom(usize),
    #[error("bond endpoints must be distinct (atom {0})")]
    SelfBond(usize),
    #[error("atoms {0} and {1} are already bonded")]
    DuplicateBond(usize, usize),
}

/// An attributed undirected graph of heavy atoms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Molecule {
    pub fn new() -> Molecule {
        Molecule::default()
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.adjacency.push(Vec::new());
        self.atoms.len() - 1
    }

    pub fn add_bond(&mut self, a: usize, b: usize, order: BondOrder) -> Result<usize, GraphError> {
        self.add_bond_with_stereo(a, b, order, None)
    }

    pub(crate) fn add_bond_with_stereo(
        &mut self,
        a: usize,
        b: usize,
        order: BondOrder,
        stereo: Option<char>,
    ) -> Result<usize, GraphError> {
        let n = self.atoms.len();
        if a >= n {
            return Err(GraphError::NoSuchAtom(a));
        }
        if b >= n {
            return Err(GraphError::NoSuchAtom(b));
        }
        if a == b {
            return Err(GraphError::SelfBond(a));
        }
        if self.bond_between(a, b).is_some() {
            return Err(GraphError::DuplicateBond(a, b));
        }
        let idx = self.bonds.len();
        self.bonds.push(Bond {
            a: a.min(b),
            b: a.max(b),
            order,
            stereo,
        });
        self.adjacency[a].push((b, idx));
        self.adjacency[b].push((a, idx));
        Ok(idx)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, idx: usize) -> &Atom {
        &self.atoms[idx]
    }

    pub fn atom_mut(&mut self, idx: usize) -> &mut Atom {
        &mut self.atoms[idx]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `(neighbour, bond index)` pairs for an atom.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|(n, _)| *n == b)
            .map(|(_, i)| &self.bonds[*i])
    }

    fn bond_index(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|(n, _)| *n == b)
            .map(|(_, i)| *i)
    }

    /// Removes the bond between `a` and `b`, returning it. Other bond
    /// indices may change.
    pub fn remove_bond(&mut self, a: usize, b: usize) -> Option<Bond> {
        let idx = self.bond_index(a, b)?;
        self.adjacency[a].retain(|&(_, i)| i != idx);
        self.adjacency[b].retain(|&(_, i)| i != idx);
        let removed = self.bonds.swap_remove(idx);
        if idx < self.bonds.len() {
            let moved = self.bonds.len();
            let (x, y) = self.bonds[idx].endpoints();
            for end in [x, y] {
                for entry in &mut self.adjacency[end] {
                    if entry.1 == moved {
                        entry.1 = idx;
                    }
                }
            }
        }
        Some(removed)
    }

    /// Changes the order of an existing bond; false if there is none.
    pub fn set_bond_order(&mut self, a: usize, b: usize, order: BondOrder) -> bool {
        match self.bond_index(a, b) {
            Some(i) => {
                self.bonds[i].order = order;
                self.bonds[i].stereo = None;
                true
            }
            None => false,
        }
    }

    /// Sum of bond valence contributions around an atom.
    pub fn bond_order_sum(&self, atom: usize) -> u8 {
        self.adjacency[atom]
            .iter()
            .map(|(_, b)| self.bonds[*b].order.valence_contribution())
            .sum()
    }

    pub fn total_charge(&self) -> i32 {
        self.atoms.iter().map(|a| a.formal_charge as i32).sum()
    }

    pub fn total_h(&self) -> u32 {
        self.atoms.iter().map(|a| a.implicit_h as u32).sum()
    }

    /// Connected-component id per atom; components numbered by their lowest atom.
    pub fn component_ids(&self) -> (Vec<usize>, usize) {
        let n = self.atoms.len();
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = count;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &(w, _) in &self.adjacency[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    pub fn is_connected(&self) -> bool {
        self.component_ids().1 <= 1
    }

    /// Splits into connected components, preserving relative atom order.
    pub fn components(&self) -> Vec<Molecule> {
        let (comp, count) = self.component_ids();
        if count <= 1 {
            return vec![self.clone()];
        }
        let mut parts = vec![Molecule::new(); count];
        let mut local = vec![0usize; self.atoms.len()];
        for (i, atom) in self.atoms.iter().enumerate() {
            local[i] = parts[comp[i]].add_atom(atom.clone());
        }
        for bond in &self.bonds {
            let part = &mut parts[comp[bond.a]];
            part.add_bond_with_stereo(local[bond.a], local[bond.b], bond.order, bond.stereo)
                .expect("bonds of a valid molecule stay valid in its component");
        }
        parts
    }

    /// Returns the molecule with atom `i` moved to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Molecule {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length mismatch");
        let mut atoms: Vec<Option<Atom>> = vec![None; self.atoms.len()];
        for (i, atom) in self.atoms.iter().enumerate() {
            atoms[perm[i]] = Some(atom.clone());
        }
        let mut out = Molecule::new();
        for atom in atoms {
            out.add_atom(atom.expect("perm must be a bijection"));
        }
        let mut bonds: Vec<&Bond> = self.bonds.iter().collect();
        bonds.sort_by_key(|b| {
            let (x, y) = (perm[b.a], perm[b.b]);
            (x.min(y), x.max(y))
        });
        for bond in bonds {
            out.add_bond_with_stereo(perm[bond.a], perm[bond.b], bond.order, bond.stereo)
                .expect("permutation preserves validity");
        }
        out
    }

    /// Merges several molecules into one disconnected graph. Returns the
    /// merged graph and each input's atom offset.
    pub fn disjoint_union<'a, I>(parts: I) -> (Molecule, Vec<usize>)
    where
        I: IntoIterator<Item = &'a Molecule>,
    {
        let mut out = Molecule::new();
        let mut offsets = Vec::new();
        for part in parts {
            let offset = out.atoms.len();
            offsets.push(offset);
            for atom in &part.atoms {
                out.add_atom(atom.clone());
            }
            for bond in &part.bonds {
                out.add_bond_with_stereo(bond.a + offset, bond.b + offset, bond.order, bond.stereo)
                    .expect("disjoint parts cannot collide");
            }
        }
        (out, offsets)
    }

    /// Per-atom ring membership (atom lies on at least one cycle).
    pub fn ring_atoms(&self) -> Vec<bool> {
        let bridges = self.bridges();
        let mut in_ring = vec![false; self.atoms.len()];
        for (i, bond) in self.bonds.iter().enumerate() {
            if !bridges[i] {
                in_ring[bond.a] = true;
                in_ring[bond.b] = true;
            }
        }
        in_ring
    }

    /// Marks bonds whose removal disconnects the graph.
    fn bridges(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let mut is_bridge = vec![false; self.bonds.len()];
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut timer = 0;
        // iterative DFS: (vertex, parent bond, next neighbour position)
        let mut stack: Vec<(usize, usize, usize)> = Vec::new();
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            stack.push((root, usize::MAX, 0));
            while let Some(&mut (v, parent_bond, ref mut pos)) = stack.last_mut() {
                if *pos < self.adjacency[v].len() {
                    let (w, bond) = self.adjacency[v][*pos];
                    *pos += 1;
                    if bond == parent_bond {
                        continue;
                    }
                    if disc[w] == usize::MAX {
                        disc[w] = timer;
                        low[w] = timer;
                        timer += 1;
                        stack.push((w, bond, 0));
                    } else {
                        low[v] = low[v].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[v]);
                        if low[v] > disc[p] {
                            is_bridge[parent_bond] = true;
                        }
                    }
                }
            }
        }
        is_bridge
    }
}
