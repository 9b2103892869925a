//! Scoring of prediction logs against dataset rows.
//!
//! A prediction log is JSON Lines with one header, one `step` record per
//! ranked dataset row and optional `beam` records for whole-mechanism runs.
//! A step's rank is the position of the first candidate whose species
//! multiset equals the truth; a truth absent from the candidates is a
//! failure (`None`), which propagates into the sequence rank.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{ElementaryStepRecord, Manifest};

/// Table columns used when no `k` list is given.
pub const DEFAULT_KS: [usize; 5] = [1, 2, 3, 5, 10];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no steps to score")]
    Empty,
    #[error("k values must be positive and strictly ascending, got {0:?}")]
    BadKs(Vec<usize>),
    #[error("reaction ids differ between log and truth (log only: {log_only:?}; truth only: {truth_only:?})")]
    Orphans {
        log_only: Vec<String>,
        truth_only: Vec<String>,
    },
    #[error("step {rxn_id} path {path_id} index {step_index} is not in the truth rows")]
    OutOfBounds {
        rxn_id: String,
        path_id: usize,
        step_index: usize,
    },
    #[error("coverage is undefined for zero records")]
    NoRecords,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub ranker: String,
    pub beam_width: usize,
    pub gamma: f64,
    pub mode: String,
    pub max_depth: usize,
    #[serde(default)]
    pub split: Option<String>,
}

/// The ranked candidates for one dataset row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepPredictionLog {
    pub rxn_id: String,
    pub path_id: usize,
    pub step_index: usize,
    pub truth: Vec<String>,
    /// Candidate states in rank order.
    pub candidates: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamFinalLog {
    pub state: Vec<String>,
    pub ranks: Vec<usize>,
    pub acc_rank: f64,
    #[serde(default)]
    pub acc_logprob: Option<f64>,
}

/// A whole-mechanism prediction for one reaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamPredictionLog {
    pub rxn_id: String,
    pub products: Vec<String>,
    pub finals: Vec<BeamFinalLog>,
    pub unfinished: usize,
}

impl BeamPredictionLog {
    /// Rank (1-based) of the first final holding every recorded product.
    pub fn product_rank(&self) -> Option<usize> {
        self.finals
            .iter()
            .position(|f| self.products.iter().all(|p| f.state.contains(p)))
            .map(|i| i + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Header(LogHeader),
    Step(StepPredictionLog),
    Beam(BeamPredictionLog),
}

/// Multiset equality of canonical SMILES lists.
pub fn states_match(truth: &[String], candidate: &[String]) -> bool {
    if truth.len() != candidate.len() {
        return false;
    }
    let mut a: Vec<&String> = truth.iter().collect();
    let mut b: Vec<&String> = candidate.iter().collect();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

/// 1-based rank of the truth among `candidates`, `None` when absent.
pub fn truth_rank(truth: &[String], candidates: &[Vec<String>]) -> Option<usize> {
    candidates
        .iter()
        .position(|c| states_match(truth, c))
        .map(|i| i + 1)
}

fn check_ks(ks: &[usize]) -> Result<(), MetricsError> {
    if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricsError::BadKs(ks.to_vec()));
    }
    Ok(())
}

fn within(rank: Option<usize>, k: usize) -> bool {
    rank.is_some_and(|r| r <= k)
}

/// Fraction of ranks at or below each `k`.
pub fn topk_accuracy(
    ranks: &[Option<usize>],
    ks: &[usize],
) -> Result<Vec<(usize, f64)>, MetricsError> {
    check_ks(ks)?;
    if ranks.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|&&r| within(r, k)).count();
            (k, hits as f64 / ranks.len() as f64)
        })
        .collect())
}

/// Worst rank over a sequence; any failure makes the sequence fail.
pub fn sequence_rank(ranks: &[Option<usize>]) -> Result<Option<usize>, MetricsError> {
    if ranks.is_empty() {
        return Err(MetricsError::Empty);
    }
    ranks
        .iter()
        .try_fold(0, |worst, r| r.map(|r| worst.max(r)))
        .map_or(Ok(None), |w| Ok(Some(w)))
}

/// Per-reaction step accuracy, averaged over reactions.
pub fn reaction_mean_topk(
    groups: &[Vec<Option<usize>>],
    ks: &[usize],
) -> Result<Vec<(usize, f64)>, MetricsError> {
    check_ks(ks)?;
    if groups.is_empty() || groups.iter().any(Vec::is_empty) {
        return Err(MetricsError::Empty);
    }
    Ok(ks
        .iter()
        .map(|&k| {
            let total: f64 = groups
                .iter()
                .map(|g| g.iter().filter(|&&r| within(r, k)).count() as f64 / g.len() as f64)
                .sum();
            (k, total / groups.len() as f64)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub total: usize,
    pub reproduced: usize,
    pub fraction: f64,
    pub parse_error: usize,
    pub unknown_class: usize,
    pub agents_missing: usize,
    pub limit_hit: usize,
    pub product_not_found: usize,
}

pub fn coverage(manifest: &Manifest) -> Result<Coverage, MetricsError> {
    if manifest.total == 0 {
        return Err(MetricsError::NoRecords);
    }
    let f = &manifest.failures;
    Ok(Coverage {
        total: manifest.total,
        reproduced: manifest.reproduced,
        fraction: manifest.reproduced as f64 / manifest.total as f64,
        parse_error: f.parse_error,
        unknown_class: f.unknown_class,
        agents_missing: f.agents_missing,
        limit_hit: f.limit_hit,
        product_not_found: f.product_not_found,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KAccuracy {
    pub k: usize,
    pub accuracy: f64,
}

fn table(pairs: Vec<(usize, f64)>) -> Vec<KAccuracy> {
    pairs
        .into_iter()
        .map(|(k, accuracy)| KAccuracy { k, accuracy })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub rxn_id: String,
    /// Step ranks of the best-scoring pathway; `null` marks a failure.
    pub per_step_ranks: Vec<Option<usize>>,
    pub sequence_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSummary {
    pub reactions: usize,
    /// Fraction whose best final holds the recorded products.
    pub product_top1: f64,
    /// Fraction with the recorded products in any final.
    pub product_any: f64,
    /// Fraction whose best final was reached through rank-1 choices only.
    pub rank1_sequences: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub steps: usize,
    pub reactions: usize,
    pub step_failures: usize,
    pub step_topk: Vec<KAccuracy>,
    pub reaction_mean_step_topk: Vec<KAccuracy>,
    pub sequence_topk: Vec<KAccuracy>,
    pub sequence_failures: usize,
    pub sequences: Vec<SequenceResult>,
    pub beam: Option<BeamSummary>,
}

impl EvalReport {
    pub fn accuracy(&self, k: usize) -> Option<f64> {
        self.step_topk.iter().find(|a| a.k == k).map(|a| a.accuracy)
    }

    pub fn sequence_accuracy(&self, k: usize) -> Option<f64> {
        self.sequence_topk
            .iter()
            .find(|a| a.k == k)
            .map(|a| a.accuracy)
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "steps {}  reactions {}  step failures {}  sequence failures {}",
            self.steps, self.reactions, self.step_failures, self.sequence_failures
        );
        let _ = write!(s, "{:<24}", "k");
        for a in &self.step_topk {
            let _ = write!(s, "{:>8}", a.k);
        }
        s.push('\n');
        for (name, rows) in [
            ("top-k elementary", &self.step_topk),
            ("top-k per reaction", &self.reaction_mean_step_topk),
            ("sequence rank <= k", &self.sequence_topk),
        ] {
            let _ = write!(s, "{name:<24}");
            for a in rows {
                let _ = write!(s, "{:>8.3}", a.accuracy);
            }
            s.push('\n');
        }
        if let Some(b) = &self.beam {
            let _ = writeln!(
                s,
                "beam: reactions {}  product top-1 {:.3}  product any {:.3}  rank-1 sequences {:.3}",
                b.reactions, b.product_top1, b.product_any, b.rank1_sequences
            );
        }
        s
    }
}

/// Scores the `step` and `beam` records of `log` against dataset rows.
///
/// Every reaction id must appear on both sides; a logged step absent from
/// the truth rows is an error, while a truth row without a logged step
/// counts as a failure.
pub fn evaluate(
    log: &[LogRecord],
    truth: &[ElementaryStepRecord],
    ks: &[usize],
) -> Result<EvalReport, MetricsError> {
    check_ks(ks)?;
    let mut rows: BTreeMap<(&str, usize, usize), &ElementaryStepRecord> = BTreeMap::new();
    for r in truth {
        rows.insert((r.rxn_id.as_str(), r.path_id, r.step_index), r);
    }
    let steps: Vec<&StepPredictionLog> = log
        .iter()
        .filter_map(|r| match r {
            LogRecord::Step(s) => Some(s),
            _ => None,
        })
        .collect();
    let log_ids: BTreeSet<&str> = steps.iter().map(|s| s.rxn_id.as_str()).collect();
    let truth_ids: BTreeSet<&str> = truth.iter().map(|r| r.rxn_id.as_str()).collect();
    if log_ids != truth_ids {
        return Err(MetricsError::Orphans {
            log_only: log_ids
                .difference(&truth_ids)
                .map(|s| s.to_string())
                .collect(),
            truth_only: truth_ids
                .difference(&log_ids)
                .map(|s| s.to_string())
                .collect(),
        });
    }
    let mut ranks: BTreeMap<(&str, usize, usize), Option<usize>> =
        rows.keys().map(|&k| (k, None)).collect();
    for s in &steps {
        let key = (s.rxn_id.as_str(), s.path_id, s.step_index);
        let Some(row) = rows.get(&key) else {
            return Err(MetricsError::OutOfBounds {
                rxn_id: s.rxn_id.clone(),
                path_id: s.path_id,
                step_index: s.step_index,
            });
        };
        ranks.insert(key, truth_rank(&row.after, &s.candidates));
    }
    let all: Vec<Option<usize>> = ranks.values().copied().collect();
    let step_topk = topk_accuracy(&all, ks)?;

    // Group by reaction, then pathway.
    let mut by_rxn: BTreeMap<&str, BTreeMap<usize, Vec<Option<usize>>>> = BTreeMap::new();
    for (&(rxn, path, _), &r) in &ranks {
        by_rxn
            .entry(rxn)
            .or_default()
            .entry(path)
            .or_default()
            .push(r);
    }
    let mut sequences = Vec::new();
    let mut groups = Vec::new();
    for (rxn, paths) in &by_rxn {
        let mut best: Option<(Option<usize>, &Vec<Option<usize>>)> = None;
        for per_step in paths.values() {
            let seq = sequence_rank(per_step)?;
            let better = match best {
                None => true,
                Some((b, _)) => match (seq, b) {
                    (Some(x), Some(y)) => x < y,
                    (Some(_), None) => true,
                    _ => false,
                },
            };
            if better {
                best = Some((seq, per_step));
            }
        }
        let (seq, per_step) = best.expect("reaction has at least one pathway");
        groups.push(per_step.clone());
        sequences.push(SequenceResult {
            rxn_id: rxn.to_string(),
            per_step_ranks: per_step.clone(),
            sequence_rank: seq,
        });
    }
    let seq_ranks: Vec<Option<usize>> = sequences.iter().map(|s| s.sequence_rank).collect();
    let sequence_topk = topk_accuracy(&seq_ranks, ks)?;
    let reaction_mean_step_topk = reaction_mean_topk(&groups, ks)?;

    let beams: Vec<&BeamPredictionLog> = log
        .iter()
        .filter_map(|r| match r {
            LogRecord::Beam(b) => Some(b),
            _ => None,
        })
        .collect();
    let beam = (!beams.is_empty()).then(|| {
        let n = beams.len() as f64;
        let top1 = beams.iter().filter(|b| b.product_rank() == Some(1)).count();
        let any = beams.iter().filter(|b| b.product_rank().is_some()).count();
        let rank1 = beams
            .iter()
            .filter(|b| {
                b.finals
                    .first()
                    .is_some_and(|f| f.ranks.iter().all(|&r| r == 1))
            })
            .count();
        BeamSummary {
            reactions: beams.len(),
            product_top1: top1 as f64 / n,
            product_any: any as f64 / n,
            rank1_sequences: rank1 as f64 / n,
        }
    });

    Ok(EvalReport {
        steps: all.len(),
        reactions: sequences.len(),
        step_failures: all.iter().filter(|r| r.is_none()).count(),
        step_topk: table(step_topk),
        reaction_mean_step_topk: table(reaction_mean_step_topk),
        sequence_topk: table(sequence_topk),
        sequence_failures: seq_ranks.iter().filter(|r| r.is_none()).count(),
        sequences,
        beam,
    })
}
