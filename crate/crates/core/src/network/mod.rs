//! Elementary-reaction networks built from reaction records: breadth-first
//! expansion, product location, pruning to productive pathways and
//! linearisation into step sequences.

mod dataset;
mod impurity;

pub use dataset::{
    assign_split, emit_dataset, pathway_rows, process_record, reproduce, write_dataset,
    DatasetOutput, ElementaryStepRecord, FailureCounts, Manifest, RecordOutcome, Reject,
    RejectReason, Reproduction, Split, SplitConfig, SplitCounts,
};
pub use impurity::{enumerate_impurities, export_dot, Impurity};

use std::collections::{BTreeSet, HashMap, VecDeque};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::molgraph::{canonical_form, parse_smiles, Molecule, SmilesError, StateBag};
use crate::rewrite::{check_required_agents, enumerate_applications_ungated};
use crate::template::{ElementaryTemplate, ReactionClassDef, TemplatePack};

/// One row of a reaction corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactionRecord {
    pub id: String,
    #[serde(rename = "class")]
    pub class_name: String,
    pub reactants: Vec<String>,
    #[serde(default)]
    pub agents: Vec<String>,
    pub products: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_depth: usize,
    pub max_nodes: usize,
    pub max_paths: usize,
}

impl Default for Limits {
    fn default() -> Limits {
        Limits {
            max_depth: 12,
            max_nodes: 5000,
            max_paths: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetworkError {
    #[error("no template class named {0:?}")]
    UnknownClass(String),
    #[error("cannot parse {smiles:?}: {source}")]
    Smiles {
        smiles: String,
        #[source]
        source: SmilesError,
    },
    #[error("record lists no products")]
    NoProducts,
}

/// A directed network edge; endpoints are state keys.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub from: String,
    pub template_id: String,
    pub signature: String,
    pub to: String,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub state: StateBag,
    /// Shortest distance from the root.
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Truncation {
    /// Some node at the depth limit still had applicable templates.
    pub depth: bool,
    /// The node limit stopped new states from being added.
    pub nodes: bool,
}

impl Truncation {
    pub fn any(&self) -> bool {
        self.depth || self.nodes
    }
}

#[derive(Debug, Clone)]
pub struct MechNetwork {
    /// Nodes in breadth-first discovery order; the root is first.
    pub nodes: IndexMap<String, Node>,
    pub edges: Vec<Edge>,
    pub root: String,
    pub max_depth: usize,
    pub truncation: Truncation,
    /// Conditions whose required agents were present at the root.
    pub active_conditions: usize,
}

impl MechNetwork {
    fn root_only(root: StateBag, max_depth: usize) -> MechNetwork {
        let key = root.key().to_string();
        let mut nodes = IndexMap::new();
        nodes.insert(
            key.clone(),
            Node {
                state: root,
                depth: 0,
            },
        );
        MechNetwork {
            nodes,
            edges: Vec::new(),
            root: key,
            max_depth,
            truncation: Truncation::default(),
            active_conditions: 0,
        }
    }

    pub fn state(&self, key: &str) -> Option<&StateBag> {
        self.nodes.get(key).map(|n| &n.state)
    }

    pub fn depth(&self, key: &str) -> Option<usize> {
        self.nodes.get(key).map(|n| n.depth)
    }

    pub fn root_state(&self) -> &StateBag {
        &self.nodes[&self.root].state
    }

    /// Outgoing edges of a node, in insertion order.
    pub fn out_edges<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.from == key)
    }

    /// Nodes without outgoing edges, in discovery order.
    pub fn terminal_nodes(&self) -> Vec<&str> {
        let sources: BTreeSet<&str> = self.edges.iter().map(|e| e.from.as_str()).collect();
        self.nodes
            .keys()
            .filter(|k| !sources.contains(k.as_str()))
            .map(String::as_str)
            .collect()
    }
}

fn parse_all(smiles: &[String]) -> Result<Vec<Molecule>, NetworkError> {
    smiles
        .iter()
        .map(|s| {
            parse_smiles(s).map_err(|source| NetworkError::Smiles {
                smiles: s.clone(),
                source,
            })
        })
        .collect()
}

/// Root state of a record: every reactant and agent once.
pub fn root_state(record: &ReactionRecord) -> Result<StateBag, NetworkError> {
    let mut all = record.reactants.clone();
    all.extend(record.agents.iter().cloned());
    Ok(StateBag::new(parse_all(&all)?))
}

/// Canonical SMILES of every recorded product fragment, sorted.
pub fn product_species(record: &ReactionRecord) -> Result<Vec<String>, NetworkError> {
    if record.products.is_empty() {
        return Err(NetworkError::NoProducts);
    }
    let mut out = Vec::new();
    for mol in parse_all(&record.products)? {
        out.extend(
            canonical_form(&mol)
                .split('.')
                .filter(|s| !s.is_empty())
                .map(String::from),
        );
    }
    out.sort();
    Ok(out)
}

/// Classes considered for a record: those matching its class name, or the
/// whole pack when `all_classes` is set.
pub fn classes_for<'a>(
    record: &ReactionRecord,
    pack: &'a TemplatePack,
    all_classes: bool,
) -> Result<Vec<&'a ReactionClassDef>, NetworkError> {
    let classes: Vec<&ReactionClassDef> = if all_classes {
        pack.classes.iter().collect()
    } else {
        pack.classes
            .iter()
            .filter(|c| c.matches(&record.class_name))
            .collect()
    };
    if classes.is_empty() && !all_classes {
        return Err(NetworkError::UnknownClass(record.class_name.clone()));
    }
    Ok(classes)
}

/// Breadth-first expansion of a record's root state under every step
/// template of every condition whose agents are present at the root.
pub fn expand_network(
    record: &ReactionRecord,
    pack: &TemplatePack,
    limits: Limits,
    all_classes: bool,
) -> Result<MechNetwork, NetworkError> {
    let classes = classes_for(record, pack, all_classes)?;
    let root = root_state(record)?;
    let mut active = 0;
    let mut templates: Vec<&ElementaryTemplate> = Vec::new();
    for class in classes {
        for cond in &class.conditions {
            let Some(first) = cond.steps.first() else {
                continue;
            };
            if check_required_agents(first, &root) {
                active += 1;
                templates.extend(cond.steps.iter());
            }
        }
    }
    Ok(expand_from(root, &templates, limits, active))
}

/// Expansion with an explicit template list; no agent gating.
pub fn expand_from(
    root: StateBag,
    templates: &[&ElementaryTemplate],
    limits: Limits,
    active_conditions: usize,
) -> MechNetwork {
    let mut net = MechNetwork::root_only(root, limits.max_depth);
    net.active_conditions = active_conditions;
    let mut i = 0;
    while i < net.nodes.len() {
        let (key, node) = net.nodes.get_index(i).expect("index in range");
        let key = key.clone();
        let state = node.state.clone();
        let depth = node.depth;
        i += 1;
        let mut found_any = false;
        for t in templates {
            for app in enumerate_applications_ungated(t, &state) {
                let to = app.successor.key().to_string();
                if to == key {
                    continue;
                }
                found_any = true;
                if depth >= limits.max_depth {
                    break;
                }
                if !net.nodes.contains_key(&to) {
                    if net.nodes.len() >= limits.max_nodes {
                        net.truncation.nodes = true;
                        continue;
                    }
                    net.nodes.insert(
                        to.clone(),
                        Node {
                            state: app.successor,
                            depth: depth + 1,
                        },
                    );
                }
                net.edges.push(Edge {
                    from: key.clone(),
                    template_id: t.id.clone(),
                    signature: app.embedding.signature().to_string(),
                    to,
                });
            }
            if found_any && depth >= limits.max_depth {
                net.truncation.depth = true;
                break;
            }
        }
    }
    net
}

/// Keys of nodes whose state holds every wanted species (with multiplicity).
pub fn find_product_nodes(net: &MechNetwork, products: &[String]) -> BTreeSet<String> {
    net.nodes
        .iter()
        .filter(|(_, n)| n.state.contains_all(products))
        .map(|(k, _)| k.clone())
        .collect()
}

fn distances<'a, F>(start: impl Iterator<Item = &'a str>, mut next: F) -> HashMap<&'a str, usize>
where
    F: FnMut(&'a str) -> Vec<&'a str>,
{
    let mut dist = HashMap::new();
    let mut queue = VecDeque::new();
    for s in start {
        if dist.insert(s, 0).is_none() {
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        let d = dist[u];
        for v in next(u) {
            if !dist.contains_key(v) {
                dist.insert(v, d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Restricts the network to nodes and edges on some root→product walk no
/// longer than the depth limit. Node depths are recomputed.
pub fn prune_to_product(net: &MechNetwork, product_keys: &BTreeSet<String>) -> MechNetwork {
    let limit = net.max_depth;
    let mut forward: HashMap<&str, Vec<&str>> = HashMap::new();
    let mut backward: HashMap<&str, Vec<&str>> = HashMap::new();
    for e in &net.edges {
        forward.entry(&e.from).or_default().push(&e.to);
        backward.entry(&e.to).or_default().push(&e.from);
    }
    let from_root = distances(std::iter::once(net.root.as_str()), |u| {
        forward.get(u).cloned().unwrap_or_default()
    });
    let targets = product_keys
        .iter()
        .map(String::as_str)
        .filter(|k| net.nodes.contains_key(*k));
    let to_product = distances(targets, |u| backward.get(u).cloned().unwrap_or_default());

    let edges: Vec<Edge> = net
        .edges
        .iter()
        .filter(|e| {
            match (
                from_root.get(e.from.as_str()),
                to_product.get(e.to.as_str()),
            ) {
                (Some(a), Some(b)) => a + 1 + b <= limit,
                _ => false,
            }
        })
        .cloned()
        .collect();
    let mut keep: BTreeSet<String> = BTreeSet::new();
    keep.insert(net.root.clone());
    for e in &edges {
        keep.insert(e.from.clone());
        keep.insert(e.to.clone());
    }
    let mut pruned = MechNetwork {
        nodes: IndexMap::new(),
        edges,
        root: net.root.clone(),
        max_depth: net.max_depth,
        truncation: net.truncation,
        active_conditions: net.active_conditions,
    };
    let mut adjacency: HashMap<&str, Vec<&str>> = HashMap::new();
    for e in &pruned.edges {
        adjacency.entry(&e.from).or_default().push(&e.to);
    }
    let depth = distances(std::iter::once(net.root.as_str()), |u| {
        adjacency.get(u).cloned().unwrap_or_default()
    });
    for (k, n) in &net.nodes {
        if keep.contains(k) {
            pruned.nodes.insert(
                k.clone(),
                Node {
                    state: n.state.clone(),
                    depth: depth.get(k.as_str()).copied().unwrap_or(0),
                },
            );
        }
    }
    pruned
}

/// One step of a linear pathway.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathStep {
    pub before: String,
    pub template_id: String,
    pub signature: String,
    pub after: String,
}

pub type Pathway = Vec<PathStep>;

/// Every simple root→product path of a pruned network, stopping at the
/// first product node reached. Outgoing edges are explored in
/// `(template_id, signature, target)` order. The flag reports whether
/// `max_paths` cut the enumeration short.
pub fn linearize_pathways(
    pruned: &MechNetwork,
    product_keys: &BTreeSet<String>,
    max_paths: usize,
) -> (Vec<Pathway>, bool) {
    let mut out_edges: HashMap<&str, Vec<&Edge>> = HashMap::new();
    for e in &pruned.edges {
        out_edges.entry(&e.from).or_default().push(e);
    }
    for list in out_edges.values_mut() {
        list.sort_by(|a, b| {
            (&a.template_id, &a.signature, &a.to).cmp(&(&b.template_id, &b.signature, &b.to))
        });
    }
    struct Walk<'a> {
        out_edges: HashMap<&'a str, Vec<&'a Edge>>,
        products: &'a BTreeSet<String>,
        max_paths: usize,
        max_depth: usize,
        on_path: BTreeSet<&'a str>,
        path: Vec<&'a Edge>,
        found: Vec<Pathway>,
        truncated: bool,
    }
    impl<'a> Walk<'a> {
        fn visit(&mut self, u: &'a str) {
            if self.truncated {
                return;
            }
            if self.products.contains(u) {
                if self.found.len() >= self.max_paths {
                    self.truncated = true;
                    return;
                }
                self.found.push(
                    self.path
                        .iter()
                        .map(|e| PathStep {
                            before: e.from.clone(),
                            template_id: e.template_id.clone(),
                            signature: e.signature.clone(),
                            after: e.to.clone(),
                        })
                        .collect(),
                );
                return;
            }
            if self.path.len() >= self.max_depth {
                return;
            }
            let edges = self.out_edges.get(u).cloned().unwrap_or_default();
            for e in edges {
                if self.on_path.contains(e.to.as_str()) {
                    continue;
                }
                self.on_path.insert(&e.to);
                self.path.push(e);
                self.visit(&e.to);
                self.path.pop();
                self.on_path.remove(e.to.as_str());
            }
        }
    }
    let mut walk = Walk {
        out_edges,
        products: product_keys,
        max_paths,
        max_depth: pruned.max_depth,
        on_path: BTreeSet::new(),
        path: Vec::new(),
        found: Vec::new(),
        truncated: false,
    };
    walk.on_path.insert(&pruned.root);
    walk.visit(&pruned.root);
    (walk.found, walk.truncated)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(
        id: &str,
        class: &str,
        reactants: &[&str],
        agents: &[&str],
        products: &[&str],
    ) -> ReactionRecord {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        ReactionRecord {
            id: id.into(),
            class_name: class.into(),
            reactants: v(reactants),
            agents: v(agents),
            products: v(products),
        }
    }

    /// Builds a network directly from labelled edges for structural tests.
    pub(crate) fn synthetic(edges: &[(&str, &str)], root: &str) -> MechNetwork {
        let mut nodes = IndexMap::new();
        let mut order = vec![root.to_string()];
        for (a, b) in edges {
            for k in [a, b] {
                if !order.iter().any(|o| o == k) {
                    order.push(k.to_string());
                }
            }
        }
        for k in &order {
            nodes.insert(
                k.clone(),
                Node {
                    state: StateBag::empty(),
                    depth: 0,
                },
            );
        }
        MechNetwork {
            nodes,
            edges: edges
                .iter()
                .map(|(a, b)| Edge {
                    from: a.to_string(),
                    template_id: format!("t/{a}{b}"),
                    signature: String::new(),
                    to: b.to_string(),
                })
                .collect(),
            root: root.to_string(),
            max_depth: 12,
            truncation: Truncation::default(),
            active_conditions: 1,
        }
    }

    #[test]
    fn diamond_keeps_both_routes() {
        let net = synthetic(
            &[("A", "B"), ("A", "C"), ("B", "D"), ("C", "D"), ("C", "E")],
            "A",
        );
        let products = BTreeSet::from(["D".to_string()]);
        let pruned = prune_to_product(&net, &products);
        assert_eq!(pruned.nodes.len(), 4);
        assert_eq!(pruned.edges.len(), 4);
        let (paths, truncated) = linearize_pathways(&pruned, &products, 64);
        assert!(!truncated);
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0][0].after, "B");
        let again = prune_to_product(&pruned, &products);
        assert_eq!(again.edges, pruned.edges);
        assert_eq!(
            again.nodes.keys().collect::<Vec<_>>(),
            pruned.nodes.keys().collect::<Vec<_>>()
        );
    }

    #[test]
    fn root_product_gives_empty_pathway() {
        let net = synthetic(&[("A", "B")], "A");
        let products = BTreeSet::from(["A".to_string()]);
        let pruned = prune_to_product(&net, &products);
        let (paths, _) = linearize_pathways(&pruned, &products, 64);
        assert_eq!(paths, vec![Vec::new()]);
        let none = prune_to_product(&net, &BTreeSet::new());
        assert_eq!(none.nodes.len(), 1);
        assert!(none.edges.is_empty());
    }

    #[test]
    fn cycles_do_not_repeat_and_paths_cap() {
        let net = synthetic(&[("A", "B"), ("B", "A"), ("B", "C"), ("A", "C")], "A");
        let products = BTreeSet::from(["C".to_string()]);
        let pruned = prune_to_product(&net, &products);
        let (paths, truncated) = linearize_pathways(&pruned, &products, 64);
        assert_eq!(paths.len(), 2);
        assert!(!truncated);
        let (paths, truncated) = linearize_pathways(&pruned, &products, 1);
        assert_eq!(paths.len(), 1);
        assert!(truncated);
    }

    #[test]
    fn unknown_class_is_an_error() {
        let pack = TemplatePack::starter();
        let r = record("x", "Bromo Suzuki coupling", &["CCO"], &[], &["CC"]);
        assert_eq!(
            expand_network(&r, &pack, Limits::default(), false).unwrap_err(),
            NetworkError::UnknownClass("Bromo Suzuki coupling".into())
        );
    }

    #[test]
    fn n_alkylation_network() {
        let pack = TemplatePack::starter();
        let r = record("n", "Bromo N-alkylation", &["CN", "CCBr"], &[], &["CNCC"]);
        let net = expand_network(&r, &pack, Limits::default(), false).unwrap();
        assert_eq!(net.nodes.len(), 3);
        let products = product_species(&r).unwrap();
        let keys = find_product_nodes(&net, &products);
        assert_eq!(keys.len(), 1);
        let pruned = prune_to_product(&net, &keys);
        let (paths, _) = linearize_pathways(&pruned, &keys, 64);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].len(), 2);
    }

    #[test]
    fn depth_and_node_limits_flag_truncation() {
        let pack = TemplatePack::starter();
        let r = record("n", "Bromo N-alkylation", &["CN", "CCBr"], &[], &["CNCC"]);
        let shallow = Limits {
            max_depth: 1,
            ..Limits::default()
        };
        let net = expand_network(&r, &pack, shallow, false).unwrap();
        assert_eq!(net.nodes.len(), 2);
        assert!(net.truncation.depth);
        let tiny = Limits {
            max_nodes: 1,
            ..Limits::default()
        };
        let net = expand_network(&r, &pack, tiny, false).unwrap();
        assert_eq!(net.nodes.len(), 1);
        assert!(net.truncation.nodes);
    }
}
