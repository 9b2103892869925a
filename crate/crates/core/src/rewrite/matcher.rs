use std::fmt::Write as _;

use crate::molgraph::{Species, StateBag};
use crate::template::{PatternAtom, PatternGraph};

/// Options that change how pattern components may be placed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchFlags {
    /// Each pattern component must land in a different molecule.
    pub distinct_molecules: bool,
}

/// A placement of every pattern slot on a (molecule, atom) position.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Embedding {
    /// `(slot, molecule index, atom index)`, ordered by slot.
    assignment: Vec<(u32, usize, usize)>,
    signature: String,
}

impl Embedding {
    pub fn new(mut assignment: Vec<(u32, usize, usize)>) -> Embedding {
        assignment.sort_unstable();
        let mut signature = String::new();
        for (i, (slot, mol, atom)) in assignment.iter().enumerate() {
            if i > 0 {
                signature.push(',');
            }
            let _ = write!(signature, "{slot}={mol}:{atom}");
        }
        Embedding {
            assignment,
            signature,
        }
    }

    pub fn empty() -> Embedding {
        Embedding::new(Vec::new())
    }

    pub fn assignment(&self) -> &[(u32, usize, usize)] {
        &self.assignment
    }

    /// `slot=mol:atom` pairs joined with commas, in slot order.
    pub fn signature(&self) -> &str {
        &self.signature
    }

    pub fn get(&self, slot: u32) -> Option<(usize, usize)> {
        self.assignment
            .binary_search_by_key(&slot, |&(s, _, _)| s)
            .ok()
            .map(|i| (self.assignment[i].1, self.assignment[i].2))
    }

    /// Molecule indices touched by the embedding, sorted and unique.
    pub fn molecules(&self) -> Vec<usize> {
        let mut mols: Vec<usize> = self.assignment.iter().map(|&(_, m, _)| m).collect();
        mols.sort_unstable();
        mols.dedup();
        mols
    }
}

/// True when the atom at `(species, atom)` satisfies every constraint of
/// `p` other than bonds.
pub fn atom_satisfies(p: &PatternAtom, species: &Species, atom: usize) -> bool {
    let a = species.molecule().atom(atom);
    if !p.elements.contains(a.element) {
        return false;
    }
    if p.charge.is_some_and(|q| q != a.formal_charge) {
        return false;
    }
    if p.exact_h.is_some_and(|h| h != a.implicit_h) {
        return false;
    }
    if p.min_h.is_some_and(|h| a.implicit_h < h) {
        return false;
    }
    if p.max_h.is_some_and(|h| a.implicit_h > h) {
        return false;
    }
    if p.aromatic.is_some_and(|ar| ar != a.aromatic) {
        return false;
    }
    if p.in_ring.is_some_and(|r| r != species.in_ring(atom)) {
        return false;
    }
    if p.max_degree
        .is_some_and(|d| species.molecule().degree(atom) > d as usize)
    {
        return false;
    }
    true
}

/// Every embedding of `pattern` into `state`, sorted by signature.
///
/// Matching is non-induced: pattern bonds must exist with the stated
/// order, while unbonded pattern pairs are unconstrained.
pub fn find_matches(pattern: &PatternGraph, state: &StateBag, flags: MatchFlags) -> Vec<Embedding> {
    if pattern.is_empty() {
        return Vec::new();
    }
    let plan = Plan::new(pattern, state);
    let mut search = Search {
        pattern,
        state,
        flags,
        plan: &plan,
        assigned: Vec::with_capacity(plan.order.len()),
        out: Vec::new(),
    };
    search.extend();
    let mut out = search.out;
    out.sort_by(|a, b| a.signature.cmp(&b.signature));
    out.dedup_by(|a, b| a.signature == b.signature);
    out
}

struct Step {
    slot: u32,
    component: usize,
    /// Earlier step whose atom this one must neighbour, if any.
    anchor: Option<usize>,
}

struct Plan {
    order: Vec<Step>,
}

impl Plan {
    /// Rarest slot first within each component, then breadth-first; components
    /// by their rarest slot.
    fn new(pattern: &PatternGraph, state: &StateBag) -> Plan {
        let count = |slot: u32| -> usize {
            let p = pattern.atom(slot).expect("slot in pattern");
            state
                .species()
                .iter()
                .map(|sp| {
                    (0..sp.molecule().atom_count())
                        .filter(|&i| atom_satisfies(p, sp, i))
                        .count()
                })
                .sum()
        };
        let mut comps: Vec<(usize, u32, usize)> = pattern
            .components()
            .iter()
            .enumerate()
            .map(|(ci, comp)| {
                let (n, s) = comp
                    .iter()
                    .map(|&s| (count(s), s))
                    .min()
                    .expect("components are non-empty");
                (n, s, ci)
            })
            .collect();
        comps.sort_unstable();
        let mut order: Vec<Step> = Vec::new();
        for (_, start, ci) in comps {
            let base = order.len();
            order.push(Step {
                slot: start,
                component: ci,
                anchor: None,
            });
            let mut head = base;
            while head < order.len() {
                let here = order[head].slot;
                let mut next: Vec<u32> = pattern
                    .neighbors(here)
                    .map(|(s, _)| s)
                    .filter(|s| !order[base..].iter().any(|st| st.slot == *s))
                    .collect();
                next.sort_unstable();
                for s in next {
                    order.push(Step {
                        slot: s,
                        component: ci,
                        anchor: Some(head),
                    });
                }
                head += 1;
            }
        }
        Plan { order }
    }
}

struct Search<'a> {
    pattern: &'a PatternGraph,
    state: &'a StateBag,
    flags: MatchFlags,
    plan: &'a Plan,
    /// (molecule, atom) per plan step.
    assigned: Vec<(usize, usize)>,
    out: Vec<Embedding>,
}

impl Search<'_> {
    fn extend(&mut self) {
        let depth = self.assigned.len();
        if depth == self.plan.order.len() {
            let assignment = self
                .plan
                .order
                .iter()
                .zip(&self.assigned)
                .map(|(st, &(m, a))| (st.slot, m, a))
                .collect();
            self.out.push(Embedding::new(assignment));
            return;
        }
        let step = &self.plan.order[depth];
        match step.anchor {
            Some(anchor) => {
                let (mol, at) = self.assigned[anchor];
                let species = &self.state.species()[mol];
                let candidates: Vec<usize> = species
                    .molecule()
                    .neighbors(at)
                    .iter()
                    .map(|&(n, _)| n)
                    .collect();
                for atom in candidates {
                    self.try_place(depth, mol, atom);
                }
            }
            None => {
                for mol in 0..self.state.len() {
                    if self.flags.distinct_molecules && self.molecule_taken(depth, mol) {
                        continue;
                    }
                    for atom in 0..self.state.species()[mol].molecule().atom_count() {
                        self.try_place(depth, mol, atom);
                    }
                }
            }
        }
    }

    /// Whether another component already sits in `mol`.
    fn molecule_taken(&self, depth: usize, mol: usize) -> bool {
        let comp = self.plan.order[depth].component;
        self.plan.order[..depth]
            .iter()
            .zip(&self.assigned)
            .any(|(st, &(m, _))| st.component != comp && m == mol)
    }

    fn try_place(&mut self, depth: usize, mol: usize, atom: usize) {
        if self.assigned.contains(&(mol, atom)) {
            return;
        }
        let step = &self.plan.order[depth];
        let species = &self.state.species()[mol];
        let p = self.pattern.atom(step.slot).expect("slot in pattern");
        if !atom_satisfies(p, species, atom) {
            return;
        }
        for (other, order) in self.pattern.neighbors(step.slot) {
            let Some(k) = self.plan.order[..depth]
                .iter()
                .position(|st| st.slot == other)
            else {
                continue;
            };
            let (om, oa) = self.assigned[k];
            if om != mol {
                return;
            }
            match species.molecule().bond_between(atom, oa) {
                Some(b) if order.is_none_or(|o| o == b.order) => {}
                _ => return,
            }
        }
        self.assigned.push((mol, atom));
        self.extend();
        self.assigned.pop();
    }
}
