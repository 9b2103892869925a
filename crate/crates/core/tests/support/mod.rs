//! Independent oracles and fixtures shared by integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};
use std::path::PathBuf;

use mechnet::beam::TableRanker;
use mechnet::metrics::{LogRecord, StepPredictionLog};
use mechnet::molgraph::{Molecule, StateBag};
use mechnet::network::{expand_network, ElementaryStepRecord, Limits, ReactionRecord};
use mechnet::template::{ElementSet, PatternAtom, PatternGraph, TemplatePack};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn corpus_smiles() -> Vec<String> {
    let path = repo_root().join("crates/core/tests/data/molecules.smi");
    std::fs::read_to_string(path)
        .expect("molecule corpus")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn desk_records() -> Vec<ReactionRecord> {
    let path = repo_root().join("data/desk_corpus.jsonl");
    std::fs::read_to_string(path)
        .expect("desk corpus")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("desk record"))
        .collect()
}

/// Canonical SMILES of every species in every desk network.
pub fn desk_species() -> Vec<String> {
    let pack = TemplatePack::starter();
    let mut out = BTreeSet::new();
    for r in desk_records() {
        if let Ok(net) = expand_network(&r, &pack, Limits::default(), false) {
            for node in net.nodes.values() {
                out.extend(node.state.smiles());
            }
        }
    }
    out.into_iter().collect()
}

// ---------------------------------------------------------------------------
// Brute-force pattern matching.

fn element_ok(set: &ElementSet, atom: &mechnet::molgraph::Atom) -> bool {
    match set {
        ElementSet::Any => true,
        ElementSet::Of(v) => v.contains(&atom.element),
    }
}

fn unary_ok(p: &PatternAtom, mol: &Molecule, rings: &[bool], i: usize) -> bool {
    let a = mol.atom(i);
    element_ok(&p.elements, a)
        && p.charge.is_none_or(|q| q == a.formal_charge)
        && p.exact_h.is_none_or(|h| h == a.implicit_h)
        && p.min_h.is_none_or(|h| a.implicit_h >= h)
        && p.max_h.is_none_or(|h| a.implicit_h <= h)
        && p.aromatic.is_none_or(|ar| ar == a.aromatic)
        && p.in_ring.is_none_or(|r| r == rings[i])
        && p.max_degree
            .is_none_or(|d| mol.neighbors(i).len() <= d as usize)
}

/// `(molecule, atom)` in a state.
type Position = (usize, usize);

/// Every injective slot assignment satisfying the pattern, as sorted
/// `slot=mol:atom` signatures. Bonds are checked only on complete
/// assignments.
pub fn brute_force_matches(
    pattern: &PatternGraph,
    state: &StateBag,
    distinct: bool,
) -> Vec<String> {
    let slots: Vec<&PatternAtom> = pattern.atoms().iter().collect();
    if slots.is_empty() {
        return Vec::new();
    }
    let rings: Vec<Vec<bool>> = state
        .species()
        .iter()
        .map(|s| s.molecule().ring_atoms())
        .collect();
    let candidates: Vec<Vec<(usize, usize)>> = slots
        .iter()
        .map(|p| {
            let mut c = Vec::new();
            for (m, sp) in state.species().iter().enumerate() {
                for i in 0..sp.molecule().atom_count() {
                    if unary_ok(p, sp.molecule(), &rings[m], i) {
                        c.push((m, i));
                    }
                }
            }
            c
        })
        .collect();
    let component_of = |slot: u32| {
        pattern
            .components()
            .iter()
            .position(|c| c.contains(&slot))
            .expect("slot in a component")
    };
    let mut out = Vec::new();
    let mut current: Vec<(usize, usize)> = Vec::new();
    fn rec(
        k: usize,
        candidates: &[Vec<(usize, usize)>],
        current: &mut Vec<(usize, usize)>,
        leaf: &mut dyn FnMut(&[Position]),
    ) {
        if k == candidates.len() {
            leaf(current);
            return;
        }
        for &c in &candidates[k] {
            if current.contains(&c) {
                continue;
            }
            current.push(c);
            rec(k + 1, candidates, current, leaf);
            current.pop();
        }
    }
    let mut leaf = |assign: &[(usize, usize)]| {
        let pos = |slot: u32| assign[slots.iter().position(|p| p.slot == slot).unwrap()];
        for b in pattern.bonds() {
            let (ma, ia) = pos(b.a);
            let (mb, ib) = pos(b.b);
            if ma != mb {
                return;
            }
            match state.species()[ma].molecule().bond_between(ia, ib) {
                Some(bond) if b.order.is_none_or(|o| o == bond.order) => {}
                _ => return,
            }
        }
        if distinct {
            for (i, p) in slots.iter().enumerate() {
                for (j, q) in slots.iter().enumerate() {
                    if component_of(p.slot) != component_of(q.slot) && assign[i].0 == assign[j].0 {
                        return;
                    }
                }
            }
        }
        let sig: Vec<String> = slots
            .iter()
            .zip(assign)
            .map(|(p, (m, a))| format!("{}={m}:{a}", p.slot))
            .collect();
        out.push(sig.join(","));
    };
    rec(0, &candidates, &mut current, &mut leaf);
    out.sort();
    out.dedup();
    out
}

/// Size of the brute-force search space.
pub fn brute_force_space(pattern: &PatternGraph, state: &StateBag) -> f64 {
    let positions: f64 = state
        .species()
        .iter()
        .map(|s| s.molecule().atom_count() as f64)
        .sum();
    positions.powi(pattern.atoms().len() as i32)
}

// ---------------------------------------------------------------------------
// Synthetic step rankings.

pub const STOP: usize = usize::MAX;

/// A random ranked transition table over `n` states; `table[i]` lists
/// successor indices in rank order with `STOP` for the stop candidate.
pub struct Synthetic {
    pub states: Vec<StateBag>,
    pub table: Vec<Vec<usize>>,
    pub ranker: TableRanker,
}

pub fn chain_state(i: usize) -> StateBag {
    StateBag::from_smiles(&["C".repeat(i + 1)]).expect("alkane")
}

impl Synthetic {
    pub fn from_table(table: Vec<Vec<usize>>) -> Synthetic {
        let states: Vec<StateBag> = (0..table.len()).map(chain_state).collect();
        let mut ranker = TableRanker::default();
        for (i, row) in table.iter().enumerate() {
            let order = row
                .iter()
                .map(|&j| {
                    if j == STOP {
                        states[i].clone()
                    } else {
                        states[j].clone()
                    }
                })
                .collect();
            ranker.insert(states[i].clone(), order);
        }
        Synthetic {
            states,
            table,
            ranker,
        }
    }

    pub fn random(rng: &mut ChaCha8Rng, n: usize) -> Synthetic {
        let mut table = Vec::with_capacity(n);
        for i in 0..n {
            let degree = rng.gen_range(0..=3);
            let mut succ: Vec<usize> = Vec::new();
            while succ.len() < degree {
                let j = if rng.gen_bool(0.85) && i + 1 < n {
                    rng.gen_range(i + 1..n)
                } else {
                    rng.gen_range(0..n)
                };
                if j != i && !succ.contains(&j) {
                    succ.push(j);
                }
            }
            succ.shuffle(rng);
            let at = rng.gen_range(0..=succ.len());
            succ.insert(at, STOP);
            table.push(succ);
        }
        Synthetic::from_table(table)
    }

    pub fn key(&self, i: usize) -> &str {
        self.states[i].key()
    }
}

/// A completed hypothesis from exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct Enumerated {
    pub acc_rank: f64,
    /// `(selected state key, rank)` per step, ending with the stop.
    pub path: Vec<(String, usize)>,
    pub end: usize,
}

/// Every simple path from `root` under the beam's rules: a stop selection
/// ends a path, a rank-1 stop forbids branching, revisits are skipped and
/// at most `max_depth` non-stop steps are taken. Sorted by accumulated rank,
/// then path.
#[allow(clippy::too_many_arguments)]
pub fn exhaustive(syn: &Synthetic, root: usize, gamma: f64, max_depth: usize) -> Vec<Enumerated> {
    fn dfs(
        syn: &Synthetic,
        node: usize,
        depth: usize,
        acc: f64,
        path: &mut Vec<(String, usize)>,
        seen: &mut HashSet<usize>,
        gamma: f64,
        max_depth: usize,
        out: &mut Vec<Enumerated>,
    ) {
        let row = &syn.table[node];
        let stop_first = row.first() == Some(&STOP);
        let weight = gamma.powi(depth as i32);
        for (idx, &next) in row.iter().enumerate() {
            let rank = idx + 1;
            if next == STOP {
                let mut p = path.clone();
                p.push((syn.key(node).to_string(), rank));
                out.push(Enumerated {
                    acc_rank: acc + weight * rank as f64,
                    path: p,
                    end: node,
                });
                continue;
            }
            if stop_first || seen.contains(&next) || depth == max_depth {
                continue;
            }
            seen.insert(next);
            path.push((syn.key(next).to_string(), rank));
            dfs(
                syn,
                next,
                depth + 1,
                acc + weight * rank as f64,
                path,
                seen,
                gamma,
                max_depth,
                out,
            );
            path.pop();
            seen.remove(&next);
        }
    }
    let mut out = Vec::new();
    let mut seen = HashSet::from([root]);
    dfs(
        syn,
        root,
        0,
        0.0,
        &mut Vec::new(),
        &mut seen,
        gamma,
        max_depth,
        &mut out,
    );
    out.sort_by(|a, b| {
        a.acc_rank.total_cmp(&b.acc_rank).then_with(|| {
            a.path
                .iter()
                .map(|(k, r)| (k.as_str(), *r))
                .cmp(b.path.iter().map(|(k, r)| (k.as_str(), *r)))
        })
    });
    out
}

// ---------------------------------------------------------------------------
// Synthetic prediction logs.

/// Per-reaction step ranks (`None` = truth absent) plus the matching log
/// and truth rows.
pub struct SyntheticLog {
    pub ranks: Vec<Vec<Option<usize>>>,
    pub log: Vec<LogRecord>,
    pub truth: Vec<ElementaryStepRecord>,
}

pub fn random_log(rng: &mut ChaCha8Rng) -> SyntheticLog {
    let reactions = rng.gen_range(1..=12);
    let mut ranks = Vec::new();
    let mut log = Vec::new();
    let mut truth = Vec::new();
    for r in 0..reactions {
        let rxn_id = format!("r{r}");
        let steps = rng.gen_range(1..=8);
        let mut per = Vec::new();
        for i in 0..steps {
            let rank = if rng.gen_bool(0.1) {
                None
            } else {
                Some(rng.gen_range(1..=12))
            };
            let answer = vec![format!("T{r}x{i}")];
            let len = rng.gen_range(rank.unwrap_or(0).max(1)..=12);
            let candidates: Vec<Vec<String>> = (1..=len)
                .map(|pos| {
                    if Some(pos) == rank {
                        answer.clone()
                    } else {
                        vec![format!("D{r}x{i}x{pos}")]
                    }
                })
                .collect();
            truth.push(ElementaryStepRecord {
                rxn_id: rxn_id.clone(),
                path_id: 0,
                step_index: i,
                before: vec!["X".into()],
                after: answer.clone(),
                template_id: "t".into(),
                is_termination: false,
            });
            log.push(LogRecord::Step(StepPredictionLog {
                rxn_id: rxn_id.clone(),
                path_id: 0,
                step_index: i,
                truth: answer,
                candidates,
            }));
            per.push(rank);
        }
        ranks.push(per);
    }
    log.shuffle(rng);
    SyntheticLog { ranks, log, truth }
}
