use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{build_ranking, Proposal, RankedCandidate, StepRanker};
use crate::molgraph::StateBag;
use crate::network::{ElementaryStepRecord, MechNetwork, Pathway};
use crate::rewrite::enumerate_applications_ungated;
use crate::template::{ElementaryTemplate, TemplatePack};

/// Ground-truth ranker over one reaction's network.
///
/// On a state of a known pathway, rank 1 is the next pathway state, or the
/// stop candidate at the pathway's end. The remaining network successors
/// follow in state-key order. States outside the network get a stop-only
/// ranking.
#[derive(Debug, Clone)]
pub struct OracleRanker {
    net: MechNetwork,
    /// Next pathway state per state key; `None` marks a pathway end.
    next: HashMap<String, Option<(String, String)>>,
}

impl OracleRanker {
    /// `net` supplies the alternatives, `paths` the true transitions; the
    /// first pathway through a state decides its successor.
    pub fn new(net: MechNetwork, paths: &[Pathway]) -> OracleRanker {
        let mut next: HashMap<String, Option<(String, String)>> = HashMap::new();
        for path in paths {
            for step in path {
                next.entry(step.before.clone())
                    .or_insert_with(|| Some((step.after.clone(), step.template_id.clone())));
            }
            let end = path.last().map_or(net.root.clone(), |s| s.after.clone());
            next.entry(end).or_insert(None);
        }
        OracleRanker { net, next }
    }
}

impl StepRanker for OracleRanker {
    fn rank(&self, state: &StateBag) -> Vec<RankedCandidate> {
        if !self.net.nodes.contains_key(state.key()) {
            return build_ranking(state, Vec::new());
        }
        let mut proposals = Vec::new();
        match self.next.get(state.key()) {
            Some(Some((key, template))) => proposals.push(Proposal {
                state: self
                    .net
                    .state(key)
                    .expect("pathway node in network")
                    .clone(),
                score: None,
                label: Some(template.clone()),
            }),
            Some(None) => proposals.push(Proposal::new(state.clone())),
            None => {}
        }
        let mut rest: BTreeMap<&str, &str> = BTreeMap::new();
        for e in self.net.out_edges(state.key()) {
            rest.entry(e.to.as_str()).or_insert(e.template_id.as_str());
        }
        for (key, template) in rest {
            proposals.push(Proposal {
                state: self.net.state(key).expect("edge target in network").clone(),
                score: None,
                label: Some(template.to_string()),
            });
        }
        build_ranking(state, proposals)
    }
}

/// Orders every template application at a state by how often its template
/// occurred in training rows, most frequent first, ties by successor key.
///
/// The stop candidate is counted from training termination rows whose state
/// had the same set of still-applicable template classes; it sits after
/// every successor with at least that count, so with no matching
/// termination data it goes last. Scores are add-one smoothed frequencies
/// normalised over the candidates offered.
#[derive(Debug, Clone)]
pub struct FrequencyRanker {
    templates: Vec<ElementaryTemplate>,
    counts: HashMap<String, usize>,
    stop_counts: HashMap<Vec<String>, usize>,
}

impl FrequencyRanker {
    pub fn train<'a, I>(rows: I, pack: &TemplatePack) -> FrequencyRanker
    where
        I: IntoIterator<Item = &'a ElementaryStepRecord>,
    {
        let mut ranker = FrequencyRanker {
            templates: pack.templates().cloned().collect(),
            counts: HashMap::new(),
            stop_counts: HashMap::new(),
        };
        for row in rows {
            if !row.is_termination {
                *ranker.counts.entry(row.template_id.clone()).or_default() += 1;
                continue;
            }
            match StateBag::from_smiles(&row.before) {
                Ok(state) => {
                    let live = live_classes(&ranker.applications(&state));
                    *ranker.stop_counts.entry(live).or_default() += 1;
                }
                Err(e) => log::warn!("{}: unreadable termination state: {e}", row.rxn_id),
            }
        }
        ranker
    }

    /// The untrained ranker: successors in key order, equal scores.
    pub fn uniform(pack: &TemplatePack) -> FrequencyRanker {
        FrequencyRanker::train(std::iter::empty(), pack)
    }

    pub fn count(&self, template_id: &str) -> usize {
        self.counts.get(template_id).copied().unwrap_or(0)
    }

    /// Training termination rows whose state left the same template classes
    /// applicable as `state` does.
    pub fn stop_count(&self, state: &StateBag) -> usize {
        let live = live_classes(&self.applications(state));
        self.stop_counts.get(&live).copied().unwrap_or(0)
    }

    pub fn is_uniform(&self) -> bool {
        self.counts.is_empty() && self.stop_counts.is_empty()
    }

    /// Every state-changing application at `state`, with its template.
    fn applications(&self, state: &StateBag) -> Vec<(&ElementaryTemplate, StateBag)> {
        let mut out = Vec::new();
        for t in &self.templates {
            for app in enumerate_applications_ungated(t, state) {
                if app.successor.key() != state.key() {
                    out.push((t, app.successor));
                }
            }
        }
        out
    }
}

/// Sorted, deduplicated class names of the given applications.
fn live_classes(apps: &[(&ElementaryTemplate, StateBag)]) -> Vec<String> {
    let mut names: Vec<String> = apps.iter().map(|(t, _)| t.class_name.clone()).collect();
    names.sort();
    names.dedup();
    names
}

impl StepRanker for FrequencyRanker {
    fn rank(&self, state: &StateBag) -> Vec<RankedCandidate> {
        let apps = self.applications(state);
        let stop = self
            .stop_counts
            .get(&live_classes(&apps))
            .copied()
            .unwrap_or(0);
        // Successor key -> (best count, template, successor).
        let mut best: HashMap<String, (usize, &str, StateBag)> = HashMap::new();
        for (t, successor) in apps {
            let c = self.count(&t.id);
            let key = successor.key().to_string();
            match best.get_mut(&key) {
                Some(entry)
                    if (c, std::cmp::Reverse(t.id.as_str()))
                        > (entry.0, std::cmp::Reverse(entry.1)) =>
                {
                    *entry = (c, t.id.as_str(), successor);
                }
                Some(_) => {}
                None => {
                    best.insert(key, (c, t.id.as_str(), successor));
                }
            }
        }
        let mut ordered: Vec<(String, (usize, &str, StateBag))> = best.into_iter().collect();
        ordered.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then_with(|| a.0.cmp(&b.0)));
        let total: f64 = ordered
            .iter()
            .map(|(_, (c, _, _))| (*c + 1) as f64)
            .sum::<f64>()
            + (stop + 1) as f64;
        let at = ordered.iter().filter(|(_, (c, _, _))| *c >= stop).count();
        let mut proposals: Vec<Proposal> = ordered
            .into_iter()
            .map(|(_, (c, id, s))| Proposal {
                state: s,
                score: Some((c + 1) as f64 / total),
                label: Some(id.to_string()),
            })
            .collect();
        proposals.insert(
            at,
            Proposal {
                state: state.clone(),
                score: Some((stop + 1) as f64 / total),
                label: None,
            },
        );
        build_ranking(state, proposals)
    }
}

/// Fixed rankings keyed by state, for synthetic networks.
#[derive(Debug, Clone, Default)]
pub struct TableRanker {
    rows: HashMap<String, Vec<Proposal>>,
}

impl TableRanker {
    /// Successors of `state` in rank order; a stop is appended when absent.
    pub fn insert(&mut self, state: StateBag, order: Vec<StateBag>) {
        self.rows.insert(
            state.key().to_string(),
            order.into_iter().map(Proposal::new).collect(),
        );
    }

    pub fn insert_scored(&mut self, state: StateBag, order: Vec<(StateBag, f64)>) {
        self.rows.insert(
            state.key().to_string(),
            order
                .into_iter()
                .map(|(s, p)| Proposal {
                    state: s,
                    score: Some(p),
                    label: None,
                })
                .collect(),
        );
    }
}

impl StepRanker for TableRanker {
    fn rank(&self, state: &StateBag) -> Vec<RankedCandidate> {
        let proposals = self.rows.get(state.key()).cloned().unwrap_or_default();
        build_ranking(state, proposals)
    }
}

#[derive(Serialize)]
struct ExternalRequest<'a> {
    state: &'a [String],
}

#[derive(Deserialize)]
struct ExternalResponse {
    candidates: Vec<ExternalCandidate>,
}

#[derive(Deserialize)]
struct ExternalCandidate {
    state: Vec<String>,
    rank: usize,
    #[serde(default)]
    score: Option<f64>,
}

struct Pipe {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// A ranker running in a child process, exchanging one JSON object per line:
/// requests `{"state":[smiles...]}`, responses
/// `{"candidates":[{"state":[...],"rank":n,"score":s}]}`.
///
/// A malformed reply degrades to a stop-only ranking and is logged.
pub struct ExternalRanker {
    child: Mutex<Child>,
    pipe: Mutex<Pipe>,
}

impl ExternalRanker {
    /// Starts `command` through `sh -c`.
    pub fn spawn(command: &str) -> io::Result<ExternalRanker> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ExternalRanker {
            child: Mutex::new(child),
            pipe: Mutex::new(Pipe { stdin, stdout }),
        })
    }

    fn exchange(&self, state: &StateBag) -> Result<Vec<ExternalCandidate>, String> {
        let smiles = state.smiles();
        let mut line = serde_json::to_string(&ExternalRequest { state: &smiles })
            .map_err(|e| e.to_string())?;
        line.push('\n');
        let mut pipe = self.pipe.lock().map_err(|e| e.to_string())?;
        pipe.stdin
            .write_all(line.as_bytes())
            .and_then(|_| pipe.stdin.flush())
            .map_err(|e| e.to_string())?;
        let mut reply = String::new();
        let n = pipe
            .stdout
            .read_line(&mut reply)
            .map_err(|e| e.to_string())?;
        if n == 0 {
            return Err("ranker process closed its output".into());
        }
        let resp: ExternalResponse = serde_json::from_str(&reply).map_err(|e| e.to_string())?;
        Ok(resp.candidates)
    }
}

impl StepRanker for ExternalRanker {
    fn rank(&self, state: &StateBag) -> Vec<RankedCandidate> {
        let mut candidates = match self.exchange(state) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("external ranker failed on {}: {e}", state.key());
                Vec::new()
            }
        };
        candidates.sort_by_key(|c| c.rank);
        let proposals = candidates
            .into_iter()
            .filter_map(|c| match StateBag::from_smiles(&c.state) {
                Ok(s) => Some(Proposal {
                    state: s,
                    score: c.score,
                    label: None,
                }),
                Err(e) => {
                    log::warn!("external ranker proposed an unreadable state: {e}");
                    None
                }
            })
            .collect();
        build_ranking(state, proposals)
    }
}

impl Drop for ExternalRanker {
    fn drop(&mut self) {
        if let Ok(child) = self.child.get_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{
        expand_network, find_product_nodes, linearize_pathways, pathway_rows, product_species,
        prune_to_product, Limits, ReactionRecord,
    };

    fn snar() -> (ReactionRecord, MechNetwork, Vec<Pathway>) {
        let r = ReactionRecord {
            id: "snar".into(),
            class_name: "SNAr ether synthesis".into(),
            reactants: vec!["CCO".into(), "Clc1ccc(cn1)[N+](=O)[O-]".into()],
            agents: vec![],
            products: vec!["CCOc1ccc(cn1)[N+](=O)[O-]".into()],
        };
        let net = expand_network(&r, &TemplatePack::starter(), Limits::default(), false).unwrap();
        let keys = find_product_nodes(&net, &product_species(&r).unwrap());
        let pruned = prune_to_product(&net, &keys);
        let (paths, _) = linearize_pathways(&pruned, &keys, 64);
        (r, net, paths)
    }

    #[test]
    fn oracle_follows_the_pathway() {
        let (_, net, paths) = snar();
        let oracle = OracleRanker::new(net.clone(), &paths);
        let path = &paths[0];
        for step in path {
            let r = oracle.rank(net.state(&step.before).unwrap());
            assert_eq!(r[0].state.key(), step.after);
            assert_eq!(r[0].label.as_deref(), Some(step.template_id.as_str()));
            assert!(r.iter().any(|c| c.is_stop));
        }
        // The second state is the deprotonated one; its top successor is the
        // anionic ring adduct.
        let second = net.state(&path[0].after).unwrap();
        let top = &oracle.rank(second)[0];
        assert!(top.label.as_deref().unwrap().ends_with("/2"));
        assert!(top
            .state
            .smiles()
            .iter()
            .any(|s| s.contains('-') && s.contains("OCC")));
        let end = net.state(&path.last().unwrap().after).unwrap();
        assert!(oracle.rank(end)[0].is_stop);
        let outside = StateBag::from_smiles(&["CCCC"]).unwrap();
        let r = oracle.rank(&outside);
        assert_eq!(r.len(), 1);
        assert!(r[0].is_stop);
    }

    #[test]
    fn frequency_orders_by_count() {
        let (r, net, paths) = snar();
        let rows = pathway_rows(&net, &r.id, &paths);
        let pack = TemplatePack::starter();
        let freq = FrequencyRanker::train(&rows, &pack);
        assert!(!freq.is_uniform());
        let uniform = FrequencyRanker::uniform(&pack);
        assert!(uniform.is_uniform());
        for row in rows.iter().filter(|r| !r.is_termination) {
            let before = StateBag::from_smiles(&row.before).unwrap();
            let ranked = freq.rank(&before);
            let counts: Vec<usize> = ranked
                .iter()
                .filter(|c| !c.is_stop)
                .map(|c| freq.count(c.label.as_deref().unwrap()))
                .collect();
            assert!(counts.windows(2).all(|w| w[0] >= w[1]));
            assert!(ranked.last().unwrap().is_stop);
            let total: f64 = ranked.iter().map(|c| c.score.unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-9);
            let u = uniform.rank(&before);
            let keys: Vec<&str> = u
                .iter()
                .filter(|c| !c.is_stop)
                .map(|c| c.state.key())
                .collect();
            assert!(keys.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn frequency_stop_follows_termination_counts() {
        let (r, net, paths) = snar();
        let rows = pathway_rows(&net, &r.id, &paths);
        let pack = TemplatePack::starter();
        let freq = FrequencyRanker::train(&rows, &pack);
        let end = rows.iter().find(|r| r.is_termination).unwrap();
        let state = StateBag::from_smiles(&end.before).unwrap();
        let stop = freq.stop_count(&state);
        assert_eq!(stop, 1);
        let ranked = freq.rank(&state);
        let ahead = ranked
            .iter()
            .filter(|c| !c.is_stop && freq.count(c.label.as_deref().unwrap()) >= stop)
            .count();
        let at = ranked.iter().position(|c| c.is_stop).unwrap();
        assert_eq!(at, ahead);
        let root = net.root_state();
        assert_eq!(FrequencyRanker::uniform(&pack).stop_count(root), 0);
    }

    #[test]
    fn table_ranker_ties_and_stop() {
        let a = StateBag::from_smiles(&["C"]).unwrap();
        let b = StateBag::from_smiles(&["CC"]).unwrap();
        let mut t = TableRanker::default();
        t.insert(a.clone(), vec![a.clone(), b.clone()]);
        let r = t.rank(&a);
        assert!(r[0].is_stop);
        assert_eq!(r[1].state.key(), "CC");
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn external_ranker_round_trip() {
        let script = r#"while read line; do echo '{"candidates":[{"state":["CC"],"rank":2,"score":0.25},{"state":["C"],"rank":1,"score":0.75}]}'; done"#;
        let ext = ExternalRanker::spawn(script).unwrap();
        let a = StateBag::from_smiles(&["C"]).unwrap();
        let r = ext.rank(&a);
        assert_eq!(r.len(), 2);
        assert!(r[0].is_stop);
        assert_eq!(r[1].state.key(), "CC");
        assert_eq!(r[1].score, Some(0.25));
    }

    #[test]
    fn external_ranker_failure_degrades_to_stop() {
        let ext = ExternalRanker::spawn("echo not-json").unwrap();
        let a = StateBag::from_smiles(&["CC"]).unwrap();
        let r = ext.rank(&a);
        assert_eq!(r.len(), 1);
        assert!(r[0].is_stop);
        let r = ext.rank(&a);
        assert_eq!(r.len(), 1);
    }
}
