use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use super::canon::canonical_component;
use super::smiles::{parse_smiles, SmilesError};
use super::{Element, Molecule};

/// Heavy-atom counts per element.
pub type Census = BTreeMap<Element, usize>;

/// One connected molecule in canonical atom order, with cached identity.
#[derive(Debug, Clone)]
pub struct Species {
    mol: Molecule,
    smiles: String,
    ring_atoms: Vec<bool>,
}

impl Species {
    /// Canonicalises a connected molecule.
    pub fn new(mol: &Molecule) -> Species {
        debug_assert!(mol.is_connected());
        let (mol, smiles) = canonical_component(mol);
        let ring_atoms = mol.ring_atoms();
        Species {
            mol,
            smiles,
            ring_atoms,
        }
    }

    pub fn molecule(&self) -> &Molecule {
        &self.mol
    }

    /// Canonical SMILES.
    pub fn smiles(&self) -> &str {
        &self.smiles
    }

    pub fn in_ring(&self, atom: usize) -> bool {
        self.ring_atoms[atom]
    }
}

impl PartialEq for Species {
    fn eq(&self, other: &Self) -> bool {
        self.smiles == other.smiles
    }
}

impl Eq for Species {}

/// The multiset of species present at one point of a mechanism.
///
/// Species are kept sorted by canonical SMILES, so molecule indices are
/// stable for a given key.
#[derive(Debug, Clone)]
pub struct StateBag {
    species: Vec<Arc<Species>>,
    key: String,
}

impl StateBag {
    /// Builds a bag; disconnected inputs contribute one species per fragment.
    pub fn new<I>(molecules: I) -> StateBag
    where
        I: IntoIterator<Item = Molecule>,
    {
        let species = molecules
            .into_iter()
            .flat_map(|m| m.components())
            .filter(|m| !m.is_empty())
            .map(|m| Arc::new(Species::new(&m)))
            .collect();
        StateBag::from_species(species)
    }

    pub fn empty() -> StateBag {
        StateBag::from_species(Vec::new())
    }

    pub fn from_species(mut species: Vec<Arc<Species>>) -> StateBag {
        species.sort_by(|a, b| a.smiles.cmp(&b.smiles));
        let key = species
            .iter()
            .map(|s| s.smiles.as_str())
            .collect::<Vec<_>>()
            .join(".");
        StateBag { species, key }
    }

    pub fn from_smiles<S: AsRef<str>>(smiles: &[S]) -> Result<StateBag, SmilesError> {
        let mols = smiles
            .iter()
            .map(|s| parse_smiles(s.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(StateBag::new(mols))
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn species(&self) -> &[Arc<Species>] {
        &self.species
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    /// Canonical SMILES of every species, sorted (with repeats).
    pub fn smiles(&self) -> Vec<String> {
        self.species.iter().map(|s| s.smiles.clone()).collect()
    }

    /// True when every species in `wanted` is present, respecting multiplicity.
    pub fn contains_all(&self, wanted: &[String]) -> bool {
        let mut have: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &self.species {
            *have.entry(s.smiles.as_str()).or_default() += 1;
        }
        for w in wanted {
            match have.get_mut(w.as_str()) {
                Some(n) if *n > 0 => *n -= 1,
                _ => return false,
            }
        }
        true
    }

    pub fn total_charge(&self) -> i32 {
        self.species.iter().map(|s| s.mol.total_charge()).sum()
    }

    pub fn total_h(&self) -> u32 {
        self.species.iter().map(|s| s.mol.total_h()).sum()
    }
}

impl PartialEq for StateBag {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for StateBag {}

impl Hash for StateBag {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key.hash(state);
    }
}

impl fmt::Display for StateBag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key)
    }
}

/// Sorted canonical SMILES of all species joined with '.'.
pub fn state_key(state: &StateBag) -> String {
    state.key.clone()
}

/// Counts non-hydrogen atoms per element over every species.
pub fn heavy_atom_census(state: &StateBag) -> Census {
    let mut census = Census::new();
    for species in &state.species {
        for atom in species.mol.atoms() {
            if atom.element != Element::H {
                *census.entry(atom.element).or_default() += 1;
            }
        }
    }
    census
}
