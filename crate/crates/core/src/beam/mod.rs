//! Step ranking and consecutive-prediction beam search.
//!
//! A [`StepRanker`] proposes ranked successor states for one state; the stop
//! candidate (a successor equal to the input) signals that the mechanism is
//! complete. [`beam_search`] chains rankings into full mechanisms, scoring
//! each hypothesis either by the discounted rank sum `R = Σ γⁿ rₙ` or by the
//! summed log-probability of its steps.

mod rankers;

use std::cmp::Ordering;
use std::collections::HashSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::molgraph::StateBag;

pub use rankers::{ExternalRanker, FrequencyRanker, OracleRanker, TableRanker};

/// One entry of a ranking.
#[derive(Debug, Clone)]
pub struct RankedCandidate {
    pub state: StateBag,
    /// 1 is best; ranks within one ranking are `1..=m` without gaps.
    pub rank: usize,
    pub score: Option<f64>,
    /// The candidate equals the state that was ranked.
    pub is_stop: bool,
    /// Template or transition that produced the candidate, when known.
    pub label: Option<String>,
}

/// A proposed successor before ranks are assigned.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub state: StateBag,
    pub score: Option<f64>,
    pub label: Option<String>,
}

impl Proposal {
    pub fn new(state: StateBag) -> Proposal {
        Proposal {
            state,
            score: None,
            label: None,
        }
    }
}

/// Turns an ordered proposal list into a ranking for `current`: later
/// duplicates of a state key are dropped, ranks are assigned in order and a
/// stop candidate is appended when none was proposed.
pub fn build_ranking(current: &StateBag, proposals: Vec<Proposal>) -> Vec<RankedCandidate> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut out: Vec<RankedCandidate> = Vec::with_capacity(proposals.len() + 1);
    for p in proposals {
        if !seen.insert(p.state.key().to_string()) {
            continue;
        }
        let is_stop = p.state.key() == current.key();
        out.push(RankedCandidate {
            rank: out.len() + 1,
            is_stop,
            state: p.state,
            score: p.score,
            label: p.label,
        });
    }
    if !seen.contains(current.key()) {
        out.push(RankedCandidate {
            rank: out.len() + 1,
            is_stop: true,
            state: current.clone(),
            score: None,
            label: None,
        });
    }
    out
}

/// Proposes ranked successors for a state. Implementations must be
/// deterministic and always include a stop candidate.
pub trait StepRanker: Sync {
    fn rank(&self, state: &StateBag) -> Vec<RankedCandidate>;
}

/// `Σ γⁿ rₙ` with `n` counted from zero.
pub fn discounted_rank(ranks: &[usize], gamma: f64) -> f64 {
    let mut total = 0.0;
    for (n, &r) in ranks.iter().enumerate() {
        total += step_weight(gamma, n) * r as f64;
    }
    total
}

fn step_weight(gamma: f64, depth: usize) -> f64 {
    gamma.powi(depth as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BeamMode {
    /// Minimise the discounted rank sum.
    #[default]
    Rank,
    /// Maximise the summed log-score.
    Prob,
}

impl BeamMode {
    pub fn name(self) -> &'static str {
        match self {
            BeamMode::Rank => "rank",
            BeamMode::Prob => "prob",
        }
    }

    pub fn from_name(name: &str) -> Option<BeamMode> {
        match name {
            "rank" => Some(BeamMode::Rank),
            "prob" => Some(BeamMode::Prob),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub beam_width: usize,
    pub gamma: f64,
    /// Largest number of non-stop steps a hypothesis may take.
    pub max_depth: usize,
    pub mode: BeamMode,
}

impl Default for BeamConfig {
    fn default() -> BeamConfig {
        BeamConfig {
            beam_width: 10,
            gamma: 0.5,
            max_depth: 12,
            mode: BeamMode::Rank,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<(), BeamError> {
        if self.beam_width == 0 {
            return Err(BeamError::InvalidConfig(
                "beam width must be at least 1".into(),
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(BeamError::InvalidConfig(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BeamError {
    #[error("invalid beam configuration: {0}")]
    InvalidConfig(String),
    #[error("probability mode needs scores, but the candidate {key} has none")]
    MissingScore { key: String },
    #[error("probability mode needs scores in (0, 1], got {score} for {key}")]
    BadScore { key: String, score: f64 },
}

/// One selection along a hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamStep {
    /// State key of the selected candidate.
    pub key: String,
    pub label: Option<String>,
    pub rank: usize,
    pub score: Option<f64>,
    pub is_stop: bool,
}

/// A hypothesis under expansion.
#[derive(Debug, Clone)]
pub struct BeamNode {
    pub state: StateBag,
    /// Number of non-stop steps taken.
    pub depth: usize,
    pub path: Vec<BeamStep>,
    pub acc_rank: f64,
    pub acc_logprob: Option<f64>,
    pub ancestor_keys: HashSet<String>,
}

/// A completed hypothesis; its last step is the stop selection.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamFinal {
    pub state: StateBag,
    pub path: Vec<BeamStep>,
    pub acc_rank: f64,
    pub acc_logprob: Option<f64>,
}

impl BeamFinal {
    pub fn ranks(&self) -> Vec<usize> {
        self.path.iter().map(|s| s.rank).collect()
    }

    /// Worst rank along the path.
    pub fn sequence_rank(&self) -> usize {
        self.path.iter().map(|s| s.rank).max().unwrap_or(1)
    }
}

#[derive(Debug, Clone, Default)]
pub struct BeamOutcome {
    /// Best first, at most `beam_width` entries.
    pub finals: Vec<BeamFinal>,
    /// Hypotheses abandoned at the depth limit.
    pub unfinished: usize,
}

fn path_keys(path: &[BeamStep]) -> impl Iterator<Item = (&str, usize)> {
    path.iter().map(|s| (s.key.as_str(), s.rank))
}

fn compare(
    mode: BeamMode,
    a: (f64, Option<f64>, &[BeamStep]),
    b: (f64, Option<f64>, &[BeamStep]),
) -> Ordering {
    let primary = match mode {
        BeamMode::Rank => a.0.total_cmp(&b.0),
        BeamMode::Prob => {
            b.1.unwrap_or(f64::NEG_INFINITY)
                .total_cmp(&a.1.unwrap_or(f64::NEG_INFINITY))
        }
    };
    primary.then_with(|| path_keys(a.2).cmp(path_keys(b.2)))
}

/// Orders finals best first under `mode`, breaking ties by path.
pub fn sort_finals(finals: &mut [BeamFinal], mode: BeamMode) {
    finals.sort_by(|a, b| {
        compare(
            mode,
            (a.acc_rank, a.acc_logprob, &a.path),
            (b.acc_rank, b.acc_logprob, &b.path),
        )
    });
}

fn extend(
    node: &BeamNode,
    cand: &RankedCandidate,
    cfg: &BeamConfig,
) -> Result<(f64, Option<f64>, BeamStep), BeamError> {
    let acc_rank = node.acc_rank + step_weight(cfg.gamma, node.depth) * cand.rank as f64;
    let acc_logprob = match cfg.mode {
        BeamMode::Rank => None,
        BeamMode::Prob => {
            let score = cand.score.ok_or_else(|| BeamError::MissingScore {
                key: cand.state.key().to_string(),
            })?;
            if !(score > 0.0 && score <= 1.0) {
                return Err(BeamError::BadScore {
                    key: cand.state.key().to_string(),
                    score,
                });
            }
            Some(node.acc_logprob.unwrap_or(0.0) + score.ln())
        }
    };
    let step = BeamStep {
        key: cand.state.key().to_string(),
        label: cand.label.clone(),
        rank: cand.rank,
        score: cand.score,
        is_stop: cand.is_stop,
    };
    Ok((acc_rank, acc_logprob, step))
}

/// Beam search from `root`.
///
/// Each layer ranks every live hypothesis, turns stop selections into
/// finals, drops children already seen on their own path and keeps the best
/// `beam_width` children. A hypothesis whose top-ranked candidate is the stop
/// finishes without further branching.
pub fn beam_search(
    root: &StateBag,
    ranker: &dyn StepRanker,
    cfg: &BeamConfig,
) -> Result<BeamOutcome, BeamError> {
    cfg.validate()?;
    let mut frontier = vec![BeamNode {
        state: root.clone(),
        depth: 0,
        path: Vec::new(),
        acc_rank: 0.0,
        acc_logprob: matches!(cfg.mode, BeamMode::Prob).then_some(0.0),
        ancestor_keys: HashSet::from([root.key().to_string()]),
    }];
    let mut finals: Vec<BeamFinal> = Vec::new();
    let mut unfinished = 0;
    while !frontier.is_empty() {
        let rankings: Vec<Vec<RankedCandidate>> =
            frontier.par_iter().map(|n| ranker.rank(&n.state)).collect();
        let mut children: Vec<BeamNode> = Vec::new();
        for (node, ranking) in frontier.iter().zip(rankings) {
            let stop_first = ranking.first().is_some_and(|c| c.is_stop);
            let mut blocked = false;
            for cand in &ranking {
                if cand.is_stop {
                    let (acc_rank, acc_logprob, step) = extend(node, cand, cfg)?;
                    let mut path = node.path.clone();
                    path.push(step);
                    finals.push(BeamFinal {
                        state: node.state.clone(),
                        path,
                        acc_rank,
                        acc_logprob,
                    });
                    continue;
                }
                if stop_first || node.ancestor_keys.contains(cand.state.key()) {
                    continue;
                }
                if node.depth == cfg.max_depth {
                    blocked = true;
                    continue;
                }
                let (acc_rank, acc_logprob, step) = extend(node, cand, cfg)?;
                let mut path = node.path.clone();
                path.push(step);
                let mut ancestor_keys = node.ancestor_keys.clone();
                ancestor_keys.insert(cand.state.key().to_string());
                children.push(BeamNode {
                    state: cand.state.clone(),
                    depth: node.depth + 1,
                    path,
                    acc_rank,
                    acc_logprob,
                    ancestor_keys,
                });
            }
            if blocked {
                unfinished += 1;
            }
        }
        children.sort_by(|a, b| {
            compare(
                cfg.mode,
                (a.acc_rank, a.acc_logprob, &a.path),
                (b.acc_rank, b.acc_logprob, &b.path),
            )
        });
        children.truncate(cfg.beam_width);
        frontier = children;
    }
    sort_finals(&mut finals, cfg.mode);
    finals.truncate(cfg.beam_width);
    Ok(BeamOutcome { finals, unfinished })
}
