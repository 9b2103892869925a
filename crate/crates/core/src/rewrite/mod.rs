//! Template matching and application over [`StateBag`]s.

mod matcher;

pub use matcher::{atom_satisfies, find_matches, Embedding, MatchFlags};

use std::collections::HashSet;
use std::sync::Arc;

use crate::molgraph::{Molecule, Species, StateBag, MAX_ABS_CHARGE};
use crate::template::{EditOp, ElementaryTemplate};

/// A template edit that could not be carried out on a concrete embedding.
/// These indicate a template that is too permissive for some input, not a
/// malformed input.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EditFault {
    #[error("slot :{0} is not assigned by the embedding")]
    Unassigned(u32),
    #[error("embedding points outside the state")]
    OutOfRange,
    #[error("delta_h drives hydrogens on slot :{0} below zero")]
    NegativeHydrogen(u32),
    #[error("charge on slot :{0} leaves the supported range")]
    ChargeOutOfRange(u32),
    #[error("no bond between slots :{0} and :{1}")]
    MissingBond(u32, u32),
    #[error("slots :{0} and :{1} are already bonded")]
    BondExists(u32, u32),
    #[error("slots :{0} and :{1} resolve to the same atom")]
    SameAtom(u32, u32),
    #[error("net charge change {charge:+} / hydrogen change {h:+} disagree with proton_implicit {expected:+}")]
    Ledger { charge: i32, h: i64, expected: i8 },
}

/// Applies the edits of `t` at embedding `e` and returns the successor state.
///
/// Molecules the embedding touches are merged, edited in authored order and
/// split into connected components again; all other species carry over.
pub fn apply(t: &ElementaryTemplate, s: &StateBag, e: &Embedding) -> Result<StateBag, EditFault> {
    if t.is_termination {
        return Ok(s.clone());
    }
    let touched = e.molecules();
    if touched.iter().any(|&m| m >= s.len()) {
        return Err(EditFault::OutOfRange);
    }
    let (mut merged, offsets) =
        Molecule::disjoint_union(touched.iter().map(|&m| s.species()[m].molecule()));
    let locate = |slot: u32| -> Result<usize, EditFault> {
        let (mol, atom) = e.get(slot).ok_or(EditFault::Unassigned(slot))?;
        let pos = touched.binary_search(&mol).expect("touched molecule");
        if atom >= s.species()[mol].molecule().atom_count() {
            return Err(EditFault::OutOfRange);
        }
        Ok(offsets[pos] + atom)
    };
    let pair = |a: u32, b: u32| -> Result<(usize, usize), EditFault> {
        let (x, y) = (locate(a)?, locate(b)?);
        if x == y {
            return Err(EditFault::SameAtom(a, b));
        }
        Ok((x, y))
    };
    for edit in &t.edits {
        match *edit {
            EditOp::MakeBond { a, b, order } => {
                let (x, y) = pair(a, b)?;
                merged
                    .add_bond(x, y, order)
                    .map_err(|_| EditFault::BondExists(a, b))?;
            }
            EditOp::BreakBond { a, b } => {
                let (x, y) = pair(a, b)?;
                merged
                    .remove_bond(x, y)
                    .ok_or(EditFault::MissingBond(a, b))?;
            }
            EditOp::SetOrder { a, b, order } => {
                let (x, y) = pair(a, b)?;
                if !merged.set_bond_order(x, y, order) {
                    return Err(EditFault::MissingBond(a, b));
                }
            }
            EditOp::DeltaH { slot, delta } => {
                let atom = merged.atom_mut(locate(slot)?);
                let h = atom.implicit_h as i16 + delta as i16;
                if h < 0 {
                    return Err(EditFault::NegativeHydrogen(slot));
                }
                atom.implicit_h = u8::try_from(h).map_err(|_| EditFault::OutOfRange)?;
            }
            EditOp::DeltaCharge { slot, delta } => {
                let atom = merged.atom_mut(locate(slot)?);
                let q = atom.formal_charge as i16 + delta as i16;
                if q.abs() > MAX_ABS_CHARGE as i16 {
                    return Err(EditFault::ChargeOutOfRange(slot));
                }
                atom.formal_charge = q as i8;
            }
            EditOp::SetAromatic { slot, aromatic } => {
                merged.atom_mut(locate(slot)?).aromatic = aromatic;
            }
        }
    }

    let before_q: i32 = touched
        .iter()
        .map(|&m| s.species()[m].molecule().total_charge())
        .sum();
    let before_h: i64 = touched
        .iter()
        .map(|&m| s.species()[m].molecule().total_h() as i64)
        .sum();
    let dq = merged.total_charge() - before_q;
    let dh = merged.total_h() as i64 - before_h;
    if dq != t.proton_implicit as i32 || dh != t.proton_implicit as i64 {
        return Err(EditFault::Ledger {
            charge: dq,
            h: dh,
            expected: t.proton_implicit,
        });
    }

    let mut species: Vec<Arc<Species>> = s
        .species()
        .iter()
        .enumerate()
        .filter(|(i, _)| touched.binary_search(i).is_err())
        .map(|(_, sp)| Arc::clone(sp))
        .collect();
    for part in merged.components() {
        species.push(Arc::new(Species::new(&part)));
    }
    Ok(StateBag::from_species(species))
}

/// True iff every agent pattern of `t` embeds somewhere in `s`.
pub fn check_required_agents(t: &ElementaryTemplate, s: &StateBag) -> bool {
    t.required_agents
        .iter()
        .all(|agent| !find_matches(agent, s, MatchFlags::default()).is_empty())
}

/// One way of applying a template to a state.
#[derive(Debug, Clone)]
pub struct Application {
    pub embedding: Embedding,
    pub successor: StateBag,
}

/// Every distinct successor of `s` under `t`, in embedding-signature order.
/// Embeddings whose successors coincide are collapsed onto the first one;
/// embeddings whose edits fault are skipped.
pub fn enumerate_applications(t: &ElementaryTemplate, s: &StateBag) -> Vec<Application> {
    if !check_required_agents(t, s) {
        return Vec::new();
    }
    enumerate_applications_ungated(t, s)
}

/// [`enumerate_applications`] without the agent check. Network expansion
/// gates conditions once at the root, since agents may be consumed by
/// earlier steps of the same mechanism.
pub fn enumerate_applications_ungated(t: &ElementaryTemplate, s: &StateBag) -> Vec<Application> {
    if t.is_termination {
        return vec![Application {
            embedding: Embedding::empty(),
            successor: s.clone(),
        }];
    }
    let flags = MatchFlags {
        distinct_molecules: t.distinct_molecules,
    };
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    for embedding in find_matches(&t.pattern, s, flags) {
        match apply(t, s, &embedding) {
            Ok(successor) => {
                if seen.insert(successor.key().to_string()) {
                    out.push(Application {
                        embedding,
                        successor,
                    });
                }
            }
            Err(fault) => {
                log::debug!("{}: skipping {}: {fault}", t.id, embedding.signature());
            }
        }
    }
    out
}
