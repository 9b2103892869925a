//! Canonical atom labelling by iterative invariant refinement with
//! individualisation of tied atoms.
//!
//! Atoms start coloured by (element, isotope, charge, hydrogens, aromatic,
//! degree). Colours are refined from sorted neighbour colours until stable.
//! While a colour class holds more than one atom, each member is
//! individualised in turn and the search recurses; the labelling whose
//! certificate (atom attributes in label order, then sorted labelled bonds)
//! is lexicographically smallest wins. Automorphisms discovered along the
//! way prune equivalent branches.

use super::smiles::write_with_priority;
use super::Molecule;

/// Returns a canonical label (0..n) for every atom.
///
/// Two molecules receive identical labelled graphs iff they are
/// isomorphic with respect to element, isotope, charge, hydrogen count,
/// aromatic flag and bond order. Map ids and stereo tags are ignored.
pub fn canonical_labeling(mol: &Molecule) -> Vec<usize> {
    let n = mol.atom_count();
    if n == 0 {
        return Vec::new();
    }
    let mut search = Search::new(mol);
    let initial = search.initial_colors();
    let mut prefix = Vec::new();
    search.run(initial, &mut prefix);
    search.best.expect("search visits at least one leaf").1
}

/// Canonical SMILES: fragments are canonicalised separately, sorted and
/// joined with '.'.
pub fn canonical_form(mol: &Molecule) -> String {
    let mut parts: Vec<String> = mol
        .components()
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| canonical_component(c).1)
        .collect();
    parts.sort();
    parts.join(".")
}

/// Renumbers one connected molecule into canonical order and returns it with
/// its canonical SMILES. Map ids and chirality tags are dropped.
pub(crate) fn canonical_component(mol: &Molecule) -> (Molecule, String) {
    let labels = canonical_labeling(mol);
    let mut renumbered = mol.permuted(&labels);
    for i in 0..renumbered.atom_count() {
        let atom = renumbered.atom_mut(i);
        atom.map_id = None;
        atom.chirality = None;
    }
    let identity: Vec<usize> = (0..renumbered.atom_count()).collect();
    let smiles = write_with_priority(&renumbered, &identity, false);
    (renumbered, smiles)
}

type Certificate = Vec<u64>;

struct Search<'a> {
    mol: &'a Molecule,
    neighbors: Vec<Vec<(usize, u8)>>,
    atom_codes: Vec<u64>,
    first: Option<(Certificate, Vec<usize>)>,
    best: Option<(Certificate, Vec<usize>)>,
    automorphisms: Vec<Vec<usize>>,
}

impl<'a> Search<'a> {
    fn new(mol: &'a Molecule) -> Search<'a> {
        let neighbors = (0..mol.atom_count())
            .map(|v| {
                mol.neighbors(v)
                    .iter()
                    .map(|&(w, b)| (w, mol.bonds()[b].order.code()))
                    .collect()
            })
            .collect();
        let atom_codes = mol
            .atoms()
            .iter()
            .map(|a| {
                let (z, iso, charge, h, aromatic) = a.identity();
                ((z as u64) << 40)
                    | ((iso as u64) << 24)
                    | (((charge as i16 + 128) as u64) << 16)
                    | ((h as u64) << 8)
                    | aromatic as u64
            })
            .collect();
        Search {
            mol,
            neighbors,
            atom_codes,
            first: None,
            best: None,
            automorphisms: Vec::new(),
        }
    }

    fn initial_colors(&self) -> Vec<usize> {
        let keys: Vec<(u64, usize)> = (0..self.mol.atom_count())
            .map(|v| (self.atom_codes[v], self.neighbors[v].len()))
            .collect();
        dense_ranks(&keys)
    }

    fn refine(&self, mut colors: Vec<usize>) -> Vec<usize> {
        let mut classes = class_count(&colors);
        loop {
            let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..colors.len())
                .map(|v| {
                    let mut sig: Vec<(usize, u8)> = self.neighbors[v]
                        .iter()
                        .map(|&(w, order)| (colors[w], order))
                        .collect();
                    sig.sort_unstable();
                    (colors[v], sig)
                })
                .collect();
            let next = dense_ranks(&keys);
            let next_classes = class_count(&next);
            colors = next;
            if next_classes == classes {
                return colors;
            }
            classes = next_classes;
        }
    }

    fn individualize(colors: &[usize], v: usize) -> Vec<usize> {
        let keys: Vec<(usize, bool)> = colors
            .iter()
            .enumerate()
            .map(|(u, &c)| (c, u != v))
            .collect();
        dense_ranks(&keys)
    }

    /// Smallest colour class with more than one member, in colour order.
    fn target_cell(colors: &[usize]) -> Option<Vec<usize>> {
        let mut counts = vec![0usize; colors.len()];
        for &c in colors {
            counts[c] += 1;
        }
        let color = counts.iter().position(|&k| k > 1)?;
        Some((0..colors.len()).filter(|&v| colors[v] == color).collect())
    }

    fn run(&mut self, colors: Vec<usize>, prefix: &mut Vec<usize>) {
        let colors = self.refine(colors);
        let Some(cell) = Self::target_cell(&colors) else {
            self.leaf(colors);
            return;
        };
        let mut explored: Vec<usize> = Vec::new();
        for v in cell {
            if !explored.is_empty() && self.equivalent_to_explored(v, &explored, prefix) {
                continue;
            }
            explored.push(v);
            prefix.push(v);
            let child = Self::individualize(&colors, v);
            self.run(child, prefix);
            prefix.pop();
        }
    }

    /// Orbit test under the automorphisms found so far that fix the prefix.
    fn equivalent_to_explored(&self, v: usize, explored: &[usize], prefix: &[usize]) -> bool {
        let n = self.mol.atom_count();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut any = false;
        for gamma in &self.automorphisms {
            if prefix.iter().any(|&p| gamma[p] != p) {
                continue;
            }
            any = true;
            for (x, &y) in gamma.iter().enumerate() {
                let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
                if rx != ry {
                    parent[rx.max(ry)] = rx.min(ry);
                }
            }
        }
        if !any {
            return false;
        }
        let rv = find(&mut parent, v);
        explored.iter().any(|&u| find(&mut parent, u) == rv)
    }

    fn certificate(&self, labels: &[usize]) -> Certificate {
        let n = labels.len();
        let mut at_label = vec![0usize; n];
        for (v, &l) in labels.iter().enumerate() {
            at_label[l] = v;
        }
        let mut cert: Certificate = at_label.iter().map(|&v| self.atom_codes[v]).collect();
        let mut edges: Vec<u64> = self
            .mol
            .bonds()
            .iter()
            .map(|b| {
                let (x, y) = b.endpoints();
                let (lx, ly) = (labels[x], labels[y]);
                let (lo, hi) = (lx.min(ly) as u64, lx.max(ly) as u64);
                (lo << 36) | (hi << 8) | b.order.code() as u64
            })
            .collect();
        edges.sort_unstable();
        cert.extend(edges);
        cert
    }

    fn leaf(&mut self, labels: Vec<usize>) {
        let cert = self.certificate(&labels);
        match (&self.first, &self.best) {
            (Some(first), Some(best)) => {
                if cert == first.0 {
                    let gamma = automorphism(&first.1, &labels);
                    self.push_automorphism(gamma);
                } else if cert == best.0 {
                    let gamma = automorphism(&best.1, &labels);
                    self.push_automorphism(gamma);
                } else if cert < best.0 {
                    self.best = Some((cert, labels));
                }
            }
            _ => {
                self.first = Some((cert.clone(), labels.clone()));
                self.best = Some((cert, labels));
            }
        }
    }

    fn push_automorphism(&mut self, gamma: Vec<usize>) {
        if gamma.iter().enumerate().any(|(i, &g)| i != g) {
            self.automorphisms.push(gamma);
        }
    }
}

/// Maps each vertex of labelling `b` to the vertex of labelling `a` that
/// carries the same label.
fn automorphism(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut at_label_a = vec![0usize; a.len()];
    for (v, &l) in a.iter().enumerate() {
        at_label_a[l] = v;
    }
    b.iter().map(|&l| at_label_a[l]).collect()
}

fn dense_ranks<K: Ord>(keys: &[K]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&x, &y| keys[x].cmp(&keys[y]));
    let mut ranks = vec![0usize; keys.len()];
    let mut rank = 0;
    for (i, &v) in order.iter().enumerate() {
        if i > 0 && keys[order[i - 1]] != keys[v] {
            rank += 1;
        }
        ranks[v] = rank;
    }
    ranks
}

fn class_count(colors: &[usize]) -> usize {
    colors.iter().copied().max().map_or(0, |m| m + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn canon(s: &str) -> String {
        canonical_form(&parse_smiles(s).unwrap())
    }

    #[test]
    fn isomorphic_inputs_agree() {
        assert_eq!(canon("OCC"), canon("CCO"));
        assert_eq!(canon("C1=CC=CC=C1"), canon("C=1C=CC=CC=1"));
        assert_eq!(canon("c1ccccc1O"), canon("Oc1ccccc1"));
        assert_eq!(canon("[Na+].[Cl-]"), canon("[Cl-].[Na+]"));
    }

    #[test]
    fn attribute_differences_separate() {
        assert_ne!(canon("CCO"), canon("CC[O-]"));
        assert_ne!(canon("CCO"), canon("COC"));
        assert_ne!(canon("C=CC"), canon("CCC"));
        assert_ne!(canon("c1ccccc1"), canon("C1=CC=CC=C1"));
        assert_ne!(canon("[13CH4]"), canon("C"));
    }

    #[test]
    fn map_ids_and_stereo_excluded() {
        assert_eq!(canon("[CH3:1][OH:2]"), canon("CO"));
        assert_eq!(canon("F/C=C/F"), canon("FC=CF"));
        assert_eq!(canon("N[C@@H](C)C(=O)O"), canon("N[C@H](C)C(=O)O"));
    }

    #[test]
    fn symmetric_molecules_terminate() {
        let s = "CC(C)(C)C(C(C)(C)C)(C(C)(C)C)C(C)(C)C";
        assert_eq!(canon(s), canon(s));
        let cubane = "C12C3C4C1C5C2C3C45";
        assert_eq!(canon(cubane).matches('C').count(), 8);
    }

    #[test]
    fn labeling_is_permutation() {
        let m = parse_smiles("CC(=O)Nc1ccc(O)cc1").unwrap();
        let mut labels = canonical_labeling(&m);
        labels.sort();
        assert_eq!(labels, (0..m.atom_count()).collect::<Vec<_>>());
    }
}
