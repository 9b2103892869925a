use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    expand_network, find_product_nodes, linearize_pathways, product_species, prune_to_product,
    Limits, MechNetwork, NetworkError, Pathway, ReactionRecord,
};
use crate::template::{TemplatePack, TERMINATION_ID};

/// One dataset row: a single elementary step of one pathway.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementaryStepRecord {
    pub rxn_id: String,
    pub path_id: usize,
    pub step_index: usize,
    pub before: Vec<String>,
    pub after: Vec<String>,
    pub template_id: String,
    pub is_termination: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl SplitConfig {
    pub fn new(ratios: [f64; 3], seed: u64) -> Result<SplitConfig, String> {
        if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(format!("split ratios must be non-negative: {ratios:?}"));
        }
        let sum: f64 = ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("split ratios must sum to 1, got {sum}"));
        }
        Ok(SplitConfig { ratios, seed })
    }

    /// Parses `a:b:c` and normalises the parts to sum to one.
    pub fn parse(text: &str, seed: u64) -> Result<SplitConfig, String> {
        let parts: Vec<f64> = text
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("bad split {text:?}: {e}"))?;
        let [a, b, c] = parts[..] else {
            return Err(format!("split {text:?} needs three parts"));
        };
        let sum = a + b + c;
        if sum.is_nan() || sum <= 0.0 {
            return Err(format!("split {text:?} sums to zero"));
        }
        SplitConfig::new([a / sum, b / sum, c / sum], seed)
    }
}

impl Default for SplitConfig {
    fn default() -> SplitConfig {
        SplitConfig {
            ratios: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }
}

/// Reaction-level split from a seeded hash of the reaction id.
pub fn assign_split(rxn_id: &str, cfg: &SplitConfig) -> Split {
    let mut h = Sha256::new();
    h.update(cfg.seed.to_le_bytes());
    h.update(rxn_id.as_bytes());
    let digest = h.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    let fraction = (u64::from_be_bytes(head) >> 11) as f64 / (1u64 << 53) as f64;
    if fraction < cfg.ratios[0] {
        Split::Train
    } else if fraction < cfg.ratios[0] + cfg.ratios[1] {
        Split::Val
    } else {
        Split::Test
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ParseError,
    UnknownClass,
    AgentsMissing,
    LimitHit,
    ProductNotFound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub rxn_id: String,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub enum RecordOutcome {
    Reproduced {
        rxn_id: String,
        split: Split,
        rows: Vec<ElementaryStepRecord>,
        pathways: usize,
        paths_truncated: bool,
        network_truncated: bool,
    },
    Rejected(Reject),
}

/// Rows for every pathway of a record plus one termination row each.
pub fn pathway_rows(
    net: &MechNetwork,
    rxn_id: &str,
    paths: &[Pathway],
) -> Vec<ElementaryStepRecord> {
    let smiles = |key: &str| net.state(key).expect("pathway node in network").smiles();
    let mut rows = Vec::new();
    for (path_id, path) in paths.iter().enumerate() {
        for (i, step) in path.iter().enumerate() {
            rows.push(ElementaryStepRecord {
                rxn_id: rxn_id.to_string(),
                path_id,
                step_index: i,
                before: smiles(&step.before),
                after: smiles(&step.after),
                template_id: step.template_id.clone(),
                is_termination: false,
            });
        }
        let last = path.last().map_or(net.root.as_str(), |s| s.after.as_str());
        rows.push(ElementaryStepRecord {
            rxn_id: rxn_id.to_string(),
            path_id,
            step_index: path.len(),
            before: smiles(last),
            after: smiles(last),
            template_id: TERMINATION_ID.to_string(),
            is_termination: true,
        });
    }
    rows
}

/// A record whose recorded products were reached.
#[derive(Debug, Clone)]
pub struct Reproduction {
    /// The full expanded network.
    pub network: MechNetwork,
    /// The network restricted to productive pathways.
    pub pruned: MechNetwork,
    pub products: Vec<String>,
    pub product_keys: BTreeSet<String>,
    pub pathways: Vec<Pathway>,
    pub paths_truncated: bool,
}

impl Reproduction {
    pub fn rows(&self, rxn_id: &str) -> Vec<ElementaryStepRecord> {
        pathway_rows(&self.pruned, rxn_id, &self.pathways)
    }
}

/// Expands, prunes and linearises one record, or says why it failed.
pub fn reproduce(
    record: &ReactionRecord,
    pack: &TemplatePack,
    limits: Limits,
    all_classes: bool,
) -> Result<Reproduction, Reject> {
    let reject = |reason, detail: String| Reject {
        rxn_id: record.id.clone(),
        reason,
        detail,
    };
    let products =
        product_species(record).map_err(|e| reject(RejectReason::ParseError, e.to_string()))?;
    let net = match expand_network(record, pack, limits, all_classes) {
        Ok(n) => n,
        Err(e @ NetworkError::UnknownClass(_)) => {
            return Err(reject(RejectReason::UnknownClass, e.to_string()))
        }
        Err(e) => return Err(reject(RejectReason::ParseError, e.to_string())),
    };
    let keys = find_product_nodes(&net, &products);
    if keys.is_empty() {
        return Err(if net.active_conditions == 0 {
            reject(
                RejectReason::AgentsMissing,
                "no condition has its required agents present".into(),
            )
        } else if net.truncation.any() {
            reject(
                RejectReason::LimitHit,
                format!(
                    "product not reached within limits ({} nodes)",
                    net.nodes.len()
                ),
            )
        } else {
            reject(
                RejectReason::ProductNotFound,
                format!("product absent from {} network states", net.nodes.len()),
            )
        });
    }
    let pruned = prune_to_product(&net, &keys);
    let (paths, paths_truncated) = linearize_pathways(&pruned, &keys, limits.max_paths);
    if paths.is_empty() {
        return Err(reject(
            RejectReason::LimitHit,
            "no simple pathway within the depth limit".into(),
        ));
    }
    Ok(Reproduction {
        network: net,
        pruned,
        products,
        product_keys: keys,
        pathways: paths,
        paths_truncated,
    })
}

/// [`reproduce`] plus split assignment.
pub fn process_record(
    record: &ReactionRecord,
    pack: &TemplatePack,
    limits: Limits,
    all_classes: bool,
    split: &SplitConfig,
) -> RecordOutcome {
    match reproduce(record, pack, limits, all_classes) {
        Err(r) => RecordOutcome::Rejected(r),
        Ok(rep) => RecordOutcome::Reproduced {
            rxn_id: record.id.clone(),
            split: assign_split(&record.id, split),
            rows: rep.rows(&record.id),
            pathways: rep.pathways.len(),
            paths_truncated: rep.paths_truncated,
            network_truncated: rep.network.truncation.any(),
        },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCounts {
    pub parse_error: usize,
    pub unknown_class: usize,
    pub agents_missing: usize,
    pub limit_hit: usize,
    pub product_not_found: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    fn bump(&mut self, split: Split, by: usize) {
        match split {
            Split::Train => self.train += by,
            Split::Val => self.val += by,
            Split::Test => self.test += by,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub total: usize,
    pub reproduced: usize,
    /// `None` when there were no records.
    pub coverage: Option<f64>,
    pub failures: FailureCounts,
    pub truncated_networks: usize,
    pub truncated_pathway_sets: usize,
    pub pathways: usize,
    pub reactions: SplitCounts,
    pub rows: SplitCounts,
    pub seed: u64,
    pub ratios: [f64; 3],
    pub max_depth: usize,
    pub max_nodes: usize,
    pub max_paths: usize,
    pub all_classes: bool,
}

#[derive(Debug, Clone)]
pub struct DatasetOutput {
    pub train: Vec<ElementaryStepRecord>,
    pub val: Vec<ElementaryStepRecord>,
    pub test: Vec<ElementaryStepRecord>,
    pub rejects: Vec<Reject>,
    pub manifest: Manifest,
}

/// Processes records in parallel and collects rows in input order.
/// Entries that already failed upstream (e.g. malformed JSON lines) are
/// passed through as rejects.
pub fn emit_dataset(
    records: &[Result<ReactionRecord, Reject>],
    pack: &TemplatePack,
    limits: Limits,
    split: &SplitConfig,
    all_classes: bool,
) -> DatasetOutput {
    let outcomes: Vec<RecordOutcome> = records
        .par_iter()
        .map(|r| match r {
            Ok(record) => process_record(record, pack, limits, all_classes, split),
            Err(reject) => RecordOutcome::Rejected(reject.clone()),
        })
        .collect();
    let mut out = DatasetOutput {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        rejects: Vec::new(),
        manifest: Manifest {
            total: records.len(),
            reproduced: 0,
            coverage: None,
            failures: FailureCounts::default(),
            truncated_networks: 0,
            truncated_pathway_sets: 0,
            pathways: 0,
            reactions: SplitCounts::default(),
            rows: SplitCounts::default(),
            seed: split.seed,
            ratios: split.ratios,
            max_depth: limits.max_depth,
            max_nodes: limits.max_nodes,
            max_paths: limits.max_paths,
            all_classes,
        },
    };
    let m = &mut out.manifest;
    for outcome in outcomes {
        match outcome {
            RecordOutcome::Reproduced {
                split,
                rows,
                pathways,
                paths_truncated,
                network_truncated,
                ..
            } => {
                m.reproduced += 1;
                m.pathways += pathways;
                m.truncated_pathway_sets += paths_truncated as usize;
                m.truncated_networks += network_truncated as usize;
                m.reactions.bump(split, 1);
                m.rows.bump(split, rows.len());
                match split {
                    Split::Train => out.train.extend(rows),
                    Split::Val => out.val.extend(rows),
                    Split::Test => out.test.extend(rows),
                }
            }
            RecordOutcome::Rejected(reject) => {
                let f = &mut m.failures;
                match reject.reason {
                    RejectReason::ParseError => f.parse_error += 1,
                    RejectReason::UnknownClass => f.unknown_class += 1,
                    RejectReason::AgentsMissing => f.agents_missing += 1,
                    RejectReason::LimitHit => f.limit_hit += 1,
                    RejectReason::ProductNotFound => f.product_not_found += 1,
                }
                out.rejects.push(reject);
            }
        }
    }
    if m.total > 0 {
        m.coverage = Some(m.reproduced as f64 / m.total as f64);
    }
    out
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut w = io::BufWriter::new(fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes `train.jsonl`, `val.jsonl`, `test.jsonl`, `rejects.jsonl` and
/// `manifest.json` into `dir`, creating it if needed.
pub fn write_dataset(dir: &Path, out: &DatasetOutput) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_jsonl(&dir.join("train.jsonl"), &out.train)?;
    write_jsonl(&dir.join("val.jsonl"), &out.val)?;
    write_jsonl(&dir.join("test.jsonl"), &out.test)?;
    write_jsonl(&dir.join("rejects.jsonl"), &out.rejects)?;
    let mut manifest = serde_json::to_string_pretty(&out.manifest)?;
    manifest.push('\n');
    fs::write(dir.join("manifest.json"), manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_parsing() {
        let s = SplitConfig::parse("8:1:1", 7).unwrap();
        assert!((s.ratios[0] - 0.8).abs() < 1e-12);
        assert!(SplitConfig::parse("1:1", 0).is_err());
        assert!(SplitConfig::parse("0:0:0", 0).is_err());
        assert!(SplitConfig::new([0.5, 0.5, 0.5], 0).is_err());
    }

    #[test]
    fn split_is_deterministic_and_degenerate_ratios_work() {
        let cfg = SplitConfig::default();
        for id in ["a", "b", "rxn-17"] {
            assert_eq!(assign_split(id, &cfg), assign_split(id, &cfg));
        }
        let all_train = SplitConfig::new([1.0, 0.0, 0.0], 3).unwrap();
        let all_test = SplitConfig::new([0.0, 0.0, 1.0], 3).unwrap();
        for i in 0..200 {
            let id = format!("r{i}");
            assert_eq!(assign_split(&id, &all_train), Split::Train);
            assert_eq!(assign_split(&id, &all_test), Split::Test);
        }
    }

    #[test]
    fn split_fractions_are_roughly_right() {
        let cfg = SplitConfig::default();
        let n = 5000;
        let train = (0..n)
            .filter(|i| assign_split(&format!("id{i}"), &cfg) == Split::Train)
            .count();
        let frac = train as f64 / n as f64;
        assert!((0.77..0.83).contains(&frac), "{frac}");
    }

    #[test]
    fn empty_input_has_undefined_coverage() {
        let out = emit_dataset(
            &[],
            &TemplatePack::starter(),
            Limits::default(),
            &SplitConfig::default(),
            false,
        );
        assert_eq!(out.manifest.coverage, None);
        assert!(out.train.is_empty() && out.rejects.is_empty());
    }
}
