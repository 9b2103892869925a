use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use super::{MechNetwork, PathStep, Pathway};

/// A species the network can form that is neither recorded nor a reactant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Impurity {
    pub smiles: String,
    /// Depth of the shallowest terminal node holding the species.
    pub depth: usize,
    pub node: String,
    pub pathway: Pathway,
}

/// Shortest root→node pathways using the first-discovered edge into each node.
fn shortest_paths(net: &MechNetwork) -> HashMap<&str, Pathway> {
    let mut out_edges: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, e) in net.edges.iter().enumerate() {
        out_edges.entry(&e.from).or_default().push(i);
    }
    let mut paths: HashMap<&str, Pathway> = HashMap::new();
    paths.insert(&net.root, Vec::new());
    let mut queue = VecDeque::from([net.root.as_str()]);
    while let Some(u) = queue.pop_front() {
        for &i in out_edges.get(u).map(Vec::as_slice).unwrap_or_default() {
            let e = &net.edges[i];
            if paths.contains_key(e.to.as_str()) {
                continue;
            }
            let mut p = paths[u].clone();
            p.push(PathStep {
                before: e.from.clone(),
                template_id: e.template_id.clone(),
                signature: e.signature.clone(),
                after: e.to.clone(),
            });
            paths.insert(&e.to, p);
            queue.push_back(&e.to);
        }
    }
    paths
}

/// Species found in terminal nodes of an unpruned network that are absent
/// from both the recorded products and the root, each with one shortest
/// supporting pathway; sorted by depth, then SMILES.
pub fn enumerate_impurities(net: &MechNetwork, products: &[String]) -> Vec<Impurity> {
    let recorded: BTreeSet<&str> = products.iter().map(String::as_str).collect();
    let root_species: BTreeSet<String> = net.root_state().smiles().into_iter().collect();
    let paths = shortest_paths(net);
    let mut best: BTreeMap<String, (usize, usize, &str)> = BTreeMap::new();
    for key in net.terminal_nodes() {
        let Some(path) = paths.get(key) else {
            continue;
        };
        let order = net.nodes.get_index_of(key).expect("terminal node exists");
        for smiles in net.nodes[key].state.smiles() {
            if recorded.contains(smiles.as_str()) || root_species.contains(&smiles) {
                continue;
            }
            let cand = (path.len(), order, key);
            best.entry(smiles)
                .and_modify(|b| {
                    if (cand.0, cand.1) < (b.0, b.1) {
                        *b = cand;
                    }
                })
                .or_insert(cand);
        }
    }
    let mut out: Vec<Impurity> = best
        .into_iter()
        .map(|(smiles, (depth, _, key))| Impurity {
            smiles,
            depth,
            node: key.to_string(),
            pathway: paths[key].clone(),
        })
        .collect();
    out.sort_by(|a, b| (a.depth, &a.smiles).cmp(&(b.depth, &b.smiles)));
    out
}

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

/// DOT rendering. Nodes are `n0, n1, …` in discovery order; nodes in
/// `highlight` and edges between two highlighted nodes are drawn in red.
pub fn export_dot(net: &MechNetwork, highlight: &BTreeSet<String>) -> String {
    let mut s = String::from(
        "digraph mechnet {\n  rankdir=LR;\n  node [shape=box, fontname=\"Helvetica\"];\n",
    );
    for (i, (key, _)) in net.nodes.iter().enumerate() {
        let mut attrs = format!("label=\"{}\"", escape(key));
        if key == &net.root {
            attrs.push_str(", peripheries=2");
        }
        if highlight.contains(key) {
            attrs.push_str(", color=red");
        }
        let _ = writeln!(s, "  n{i} [{attrs}];");
    }
    for e in &net.edges {
        let (Some(a), Some(b)) = (
            net.nodes.get_index_of(&e.from),
            net.nodes.get_index_of(&e.to),
        ) else {
            continue;
        };
        let mut attrs = format!("label=\"{}\"", escape(&e.template_id));
        if highlight.contains(&e.from) && highlight.contains(&e.to) {
            attrs.push_str(", color=red, penwidth=2");
        }
        let _ = writeln!(s, "  n{a} -> n{b} [{attrs}];");
    }
    s.push_str("}\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{expand_network, product_species, Limits, ReactionRecord};
    use crate::template::TemplatePack;

    fn n_alkylation() -> (MechNetwork, Vec<String>) {
        let r = ReactionRecord {
            id: "n".into(),
            class_name: "Bromo N-alkylation".into(),
            reactants: vec!["CN".into(), "CCBr".into()],
            agents: vec![],
            products: vec!["CNCC".into()],
        };
        let net = expand_network(&r, &TemplatePack::starter(), Limits::default(), false).unwrap();
        (net, product_species(&r).unwrap())
    }

    #[test]
    fn bromide_is_an_impurity() {
        let (net, products) = n_alkylation();
        let imp = enumerate_impurities(&net, &products);
        assert_eq!(imp.len(), 1);
        assert_eq!(imp[0].smiles, "[Br-]");
        assert_eq!(imp[0].depth, 2);
        assert_eq!(imp[0].pathway.len(), 2);
    }

    #[test]
    fn dot_shape() {
        let (net, _) = n_alkylation();
        let dot = export_dot(&net, &BTreeSet::from([net.root.clone()]));
        assert!(dot.starts_with("digraph mechnet {"));
        assert_eq!(dot.matches(" -> ").count(), net.edges.len());
        assert_eq!(dot.matches("color=red").count(), 1);
        assert!(dot.ends_with("}\n"));
    }
}
