//! Advisory valence check. Mechanistic intermediates legitimately carry
//! unusual valences and charges, so this only ever reports.

use super::{Element, Molecule};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValenceWarning {
    pub atom: usize,
    pub element: Element,
    pub valence: u8,
    pub allowed: u8,
}

impl std::fmt::Display for ValenceWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "atom {} ({}) has valence {} above allowed {}",
            self.atom, self.element, self.valence, self.allowed
        )
    }
}

fn allowed_valence(element: Element, charge: i8) -> Option<u8> {
    let max = element.max_valence()? as i16;
    let charge = charge as i16;
    let allowed = match element.atomic_number() {
        6 | 14 => max - charge.abs(),
        5 => max - charge,
        1 | 3 | 11 | 19 | 37 | 55 | 12 | 20 => max,
        _ => max + charge,
    };
    Some(allowed.max(0) as u8)
}

/// Atoms whose bond-order sum plus hydrogens exceeds the usual valence for
/// their charge by more than `slack`. Aromatic bonds count as one.
pub fn check(mol: &Molecule, slack: u8) -> Vec<ValenceWarning> {
    let mut out = Vec::new();
    for (i, atom) in mol.atoms().iter().enumerate() {
        let Some(allowed) = allowed_valence(atom.element, atom.formal_charge) else {
            continue;
        };
        let valence = mol.bond_order_sum(i).saturating_add(atom.implicit_h);
        if valence > allowed.saturating_add(slack) {
            out.push(ValenceWarning {
                atom: i,
                element: atom.element,
                valence,
                allowed,
            });
        }
    }
    out
}
