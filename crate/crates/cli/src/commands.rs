use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use mechnet::beam::{
    beam_search, BeamConfig, BeamMode, ExternalRanker, FrequencyRanker, OracleRanker, StepRanker,
};
use mechnet::metrics::{
    coverage, evaluate, BeamFinalLog, BeamPredictionLog, LogHeader, LogRecord, MetricsError,
    StepPredictionLog, DEFAULT_KS,
};
use mechnet::molgraph::{parse_smiles, valence, StateBag};
use mechnet::network::{
    assign_split, emit_dataset, enumerate_impurities, expand_network, export_dot, product_species,
    reproduce, write_dataset, ElementaryStepRecord, Limits, Manifest, ReactionRecord, Reject,
    RejectReason, Split, SplitConfig,
};
use mechnet::template::{Severity, TemplatePack};

use crate::config::ConfigFile;
use crate::{
    BeamArgs, CanonArgs, DotArgs, EvalArgs, GenArgs, ImpuritiesArgs, NetworkArgs, ServeRankerArgs,
    SplitArgs, ValidatePackArgs,
};

const OK: u8 = 0;
const DOMAIN_FAILURE: u8 = 1;

struct NetworkSettings {
    pack: TemplatePack,
    limits: Limits,
    all_classes: bool,
    valence_slack: u8,
}

fn load_pack(path: Option<&Path>) -> Result<TemplatePack> {
    match path {
        None => Ok(TemplatePack::starter()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("cannot read pack {}", p.display()))?;
            TemplatePack::parse(&text).map_err(|e| anyhow!("{}: {e}", p.display()))
        }
    }
}

fn network_settings(cfg: &ConfigFile, a: &NetworkArgs) -> Result<NetworkSettings> {
    let pack_path: Option<PathBuf> = cfg.pick_opt(a.pack.clone(), "pack")?;
    let defaults = Limits::default();
    Ok(NetworkSettings {
        pack: load_pack(pack_path.as_deref())?,
        limits: Limits {
            max_depth: cfg.pick(a.max_depth, "max-depth", defaults.max_depth)?,
            max_nodes: cfg.pick(a.max_nodes, "max-nodes", defaults.max_nodes)?,
            max_paths: cfg.pick(a.max_paths, "max-paths", defaults.max_paths)?,
        },
        all_classes: cfg.switch(a.all_classes, "all-classes")?,
        valence_slack: cfg.pick(a.valence_slack, "valence-slack", 0)?,
    })
}

fn split_config(cfg: &ConfigFile, a: &SplitArgs) -> Result<SplitConfig> {
    let text = cfg.pick(a.split.clone(), "split", "8:1:1".to_string())?;
    let seed = cfg.pick(a.seed, "seed", 0u64)?;
    SplitConfig::parse(&text, seed).map_err(|e| anyhow!("--split {text}: {e}"))
}

/// Reaction records in file order; malformed lines become parse rejects.
fn read_reactions(path: &Path) -> Result<Vec<Result<ReactionRecord, Reject>>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read reactions {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str::<ReactionRecord>(line).map_err(|e| {
            let id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(|x| x.as_str()).map(str::to_string))
                .unwrap_or_else(|| format!("line:{}", i + 1));
            Reject {
                rxn_id: id,
                reason: RejectReason::ParseError,
                detail: e.to_string(),
            }
        }));
    }
    Ok(out)
}

fn read_rows(paths: &[PathBuf]) -> Result<Vec<ElementaryStepRecord>> {
    let mut rows = Vec::new();
    for p in paths {
        let text =
            fs::read_to_string(p).with_context(|| format!("cannot read rows {}", p.display()))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            rows.push(
                serde_json::from_str(line)
                    .with_context(|| format!("{} line {}", p.display(), i + 1))?,
            );
        }
    }
    Ok(rows)
}

/// Logs advisory valence warnings for every input species.
fn advise_valence(records: &[Result<ReactionRecord, Reject>], slack: u8) {
    for r in records.iter().flatten() {
        for s in r.reactants.iter().chain(&r.agents).chain(&r.products) {
            if let Ok(mol) = parse_smiles(s) {
                for w in valence::check(&mol, slack) {
                    log::warn!("{}: {s}: {w}", r.id);
                }
            }
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_jsonl<T: Serialize>(w: &mut dyn Write, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut *w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn validate_pack(cfg: &ConfigFile, a: ValidatePackArgs) -> Result<u8> {
    let path: Option<PathBuf> = cfg.pick_opt(a.pack.or(a.path), "pack")?;
    let pack = match &path {
        None => TemplatePack::starter(),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("cannot read pack {}", p.display()))?;
            match TemplatePack::parse(&text) {
                Ok(pack) => pack,
                Err(e) => {
                    eprintln!("{}:{e}", p.display());
                    return Ok(DOMAIN_FAILURE);
                }
            }
        }
    };
    let diags = pack.diagnostics();
    for d in &diags {
        eprintln!("{d}");
    }
    let errors = diags
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .count();
    let templates = pack.templates().count();
    eprintln!(
        "{} classes, {templates} templates, {errors} errors, {} warnings",
        pack.classes.len(),
        diags.len() - errors
    );
    Ok(if errors == 0 { OK } else { DOMAIN_FAILURE })
}

pub fn canon(cfg: &ConfigFile, a: CanonArgs) -> Result<u8> {
    let slack = cfg.pick(a.valence_slack, "valence-slack", 0)?;
    let inputs: Vec<String> = if a.smiles.is_empty() {
        io::stdin()
            .lock()
            .lines()
            .collect::<io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|l| !l.trim().is_empty())
            .collect()
    } else {
        a.smiles
    };
    let mut out = io::stdout().lock();
    let mut code = OK;
    for s in inputs {
        let s = s.trim();
        match parse_smiles(s) {
            Ok(mol) => {
                for w in valence::check(&mol, slack) {
                    eprintln!("warning: {s}: {w}");
                }
                writeln!(out, "{}", StateBag::new([mol]).key())?;
            }
            Err(e) => {
                eprintln!("{s}: {e}");
                code = DOMAIN_FAILURE;
            }
        }
    }
    Ok(code)
}

pub fn gen(cfg: &ConfigFile, a: GenArgs) -> Result<u8> {
    let net = network_settings(cfg, &a.network)?;
    let split = split_config(cfg, &a.split)?;
    let records = read_reactions(&a.reactions)?;
    advise_valence(&records, net.valence_slack);
    let out = emit_dataset(&records, &net.pack, net.limits, &split, net.all_classes);
    write_dataset(&a.out, &out).with_context(|| format!("cannot write {}", a.out.display()))?;
    let m = &out.manifest;
    match m.coverage {
        Some(c) => eprintln!(
            "{} of {} reactions reproduced (coverage {c:.3}); {} rows",
            m.reproduced,
            m.total,
            m.rows.train + m.rows.val + m.rows.test
        ),
        None => eprintln!("no reaction records; coverage undefined"),
    }
    Ok(OK)
}

enum RankerSpec {
    Oracle,
    Shared(Box<dyn StepRanker + Send>),
}

fn frequency_ranker(pack: &TemplatePack, train: &[PathBuf]) -> Result<FrequencyRanker> {
    if train.is_empty() {
        bail!("the frequency ranker needs --train rows");
    }
    let rows = read_rows(train)?;
    let ranker = FrequencyRanker::train(&rows, pack);
    if ranker.is_uniform() {
        log::warn!("no training steps; falling back to the uniform ranker");
    }
    Ok(ranker)
}

fn ranker_spec(name: &str, pack: &TemplatePack, train: &[PathBuf]) -> Result<RankerSpec> {
    if let Some(cmd) = name.strip_prefix("extern:") {
        let ext = ExternalRanker::spawn(cmd)
            .with_context(|| format!("cannot start external ranker {cmd:?}"))?;
        return Ok(RankerSpec::Shared(Box::new(ext)));
    }
    Ok(match name {
        "oracle" => RankerSpec::Oracle,
        "frequency" => RankerSpec::Shared(Box::new(frequency_ranker(pack, train)?)),
        "uniform" => RankerSpec::Shared(Box::new(FrequencyRanker::uniform(pack))),
        other => {
            bail!("unknown ranker {other:?} (expected oracle, frequency, uniform or extern:<cmd>)")
        }
    })
}

fn parse_split(name: &str) -> Result<Split> {
    Ok(match name {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => bail!("unknown split {other:?} (expected train, val or test)"),
    })
}

fn predict_record(
    record: &ReactionRecord,
    net: &NetworkSettings,
    spec: &RankerSpec,
    beam: &BeamConfig,
) -> Result<Vec<LogRecord>> {
    let rep = match reproduce(record, &net.pack, net.limits, net.all_classes) {
        Ok(r) => r,
        Err(reject) => {
            log::info!("{}: skipped ({:?})", record.id, reject.reason);
            return Ok(Vec::new());
        }
    };
    let oracle;
    let ranker: &dyn StepRanker = match spec {
        RankerSpec::Oracle => {
            oracle = OracleRanker::new(rep.network.clone(), &rep.pathways);
            &oracle
        }
        RankerSpec::Shared(r) => r.as_ref(),
    };
    let mut out = Vec::new();
    for row in rep.rows(&record.id) {
        let before = StateBag::from_smiles(&row.before)?;
        let candidates = ranker
            .rank(&before)
            .into_iter()
            .map(|c| c.state.smiles())
            .collect();
        out.push(LogRecord::Step(StepPredictionLog {
            rxn_id: row.rxn_id,
            path_id: row.path_id,
            step_index: row.step_index,
            truth: row.after,
            candidates,
        }));
    }
    let root = rep.network.root_state();
    let result = beam_search(root, ranker, beam).map_err(|e| anyhow!("{}: {e}", record.id))?;
    out.push(LogRecord::Beam(BeamPredictionLog {
        rxn_id: record.id.clone(),
        products: rep.products.clone(),
        finals: result
            .finals
            .iter()
            .map(|f| BeamFinalLog {
                state: f.state.smiles(),
                ranks: f.ranks(),
                acc_rank: f.acc_rank,
                acc_logprob: f.acc_logprob,
            })
            .collect(),
        unfinished: result.unfinished,
    }));
    Ok(out)
}

pub fn beam(cfg: &ConfigFile, a: BeamArgs) -> Result<u8> {
    let net = network_settings(cfg, &a.network)?;
    let split = split_config(cfg, &a.split)?;
    let mode_name = cfg.pick(a.mode, "mode", "rank".to_string())?;
    let mode = BeamMode::from_name(&mode_name)
        .ok_or_else(|| anyhow!("unknown mode {mode_name:?} (expected rank or prob)"))?;
    let beam = BeamConfig {
        beam_width: cfg.pick(a.beam, "beam", 10)?,
        gamma: cfg.pick(a.gamma, "gamma", 0.5)?,
        max_depth: net.limits.max_depth,
        mode,
    };
    beam.validate()?;
    let ranker_name = cfg.pick(a.ranker, "ranker", "oracle".to_string())?;
    let train: Vec<PathBuf> = if a.train.is_empty() {
        cfg.pick_opt(None, "train")?.into_iter().collect()
    } else {
        a.train
    };
    let spec = ranker_spec(&ranker_name, &net.pack, &train)?;
    let only = a.only_split.as_deref().map(parse_split).transpose()?;

    let records = read_reactions(&a.reactions)?;
    advise_valence(&records, net.valence_slack);
    let selected: Vec<&ReactionRecord> = records
        .iter()
        .flatten()
        .filter(|r| only.is_none_or(|s| assign_split(&r.id, &split) == s))
        .collect();
    let per_record: Vec<Vec<LogRecord>> = selected
        .par_iter()
        .map(|r| predict_record(r, &net, &spec, &beam))
        .collect::<Result<_>>()?;

    let mut w = output(a.out.as_deref())?;
    let header = LogRecord::Header(LogHeader {
        ranker: ranker_name,
        beam_width: beam.beam_width,
        gamma: beam.gamma,
        mode: mode.name().to_string(),
        max_depth: beam.max_depth,
        split: a.only_split,
    });
    write_jsonl(&mut w, &[header])?;
    for recs in &per_record {
        write_jsonl(&mut w, recs)?;
    }
    w.flush()?;
    Ok(OK)
}

fn parse_ks(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|k| {
            k.trim()
                .parse::<usize>()
                .with_context(|| format!("bad k {k:?}"))
        })
        .collect()
}

#[derive(Serialize)]
struct FullReport {
    #[serde(flatten)]
    eval: mechnet::metrics::EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    coverage: Option<mechnet::metrics::Coverage>,
}

pub fn eval(cfg: &ConfigFile, a: EvalArgs) -> Result<u8> {
    let ks = match cfg.pick_opt(a.topk, "topk")? {
        Some(text) => parse_ks(&text)?,
        None => DEFAULT_KS.to_vec(),
    };
    let text = fs::read_to_string(&a.predictions)
        .with_context(|| format!("cannot read {}", a.predictions.display()))?;
    let mut log = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        log.push(
            serde_json::from_str::<LogRecord>(line)
                .with_context(|| format!("{} line {}", a.predictions.display(), i + 1))?,
        );
    }
    let truth = read_rows(&a.truth)?;
    let report = match evaluate(&log, &truth, &ks) {
        Ok(r) => r,
        Err(e @ MetricsError::BadKs(_)) => bail!("{e}"),
        Err(MetricsError::Orphans {
            log_only,
            truth_only,
        }) => {
            eprintln!("reaction ids do not match between log and truth");
            for id in log_only {
                eprintln!("  only in log: {id}");
            }
            for id in truth_only {
                eprintln!("  only in truth: {id}");
            }
            return Ok(DOMAIN_FAILURE);
        }
        Err(e) => {
            eprintln!("{e}");
            return Ok(DOMAIN_FAILURE);
        }
    };
    let coverage = match &a.manifest {
        None => None,
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            let m: Manifest = serde_json::from_str(&text)
                .with_context(|| format!("cannot parse {}", p.display()))?;
            coverage(&m).ok()
        }
    };
    let mut out = io::stdout().lock();
    out.write_all(report.to_text().as_bytes())?;
    if let Some(c) = &coverage {
        writeln!(
            out,
            "coverage {:.3} ({} of {}; parse {} class {} agents {} limit {} product {})",
            c.fraction,
            c.reproduced,
            c.total,
            c.parse_error,
            c.unknown_class,
            c.agents_missing,
            c.limit_hit,
            c.product_not_found
        )?;
    }
    if let Some(p) = &a.json {
        let full = FullReport {
            eval: report,
            coverage,
        };
        let mut text = serde_json::to_string_pretty(&full)?;
        text.push('\n');
        fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(OK)
}

#[derive(Serialize)]
struct ImpurityStep<'a> {
    before: &'a str,
    template_id: &'a str,
    after: &'a str,
}

#[derive(Serialize)]
struct ImpurityLine<'a> {
    rxn_id: &'a str,
    smiles: &'a str,
    depth: usize,
    node: &'a str,
    pathway: Vec<ImpurityStep<'a>>,
}

pub fn impurities(cfg: &ConfigFile, a: ImpuritiesArgs) -> Result<u8> {
    let net = network_settings(cfg, &a.network)?;
    let records = read_reactions(&a.reactions)?;
    advise_valence(&records, net.valence_slack);
    let ok: Vec<&ReactionRecord> = records
        .iter()
        .filter_map(|r| match r {
            Ok(r) => Some(r),
            Err(rej) => {
                log::warn!("{}: {}", rej.rxn_id, rej.detail);
                None
            }
        })
        .collect();
    let results: Vec<Option<(Vec<mechnet::network::Impurity>, &ReactionRecord)>> = ok
        .par_iter()
        .map(|r| {
            let products = product_species(r).ok()?;
            match expand_network(r, &net.pack, net.limits, net.all_classes) {
                Ok(n) => Some((enumerate_impurities(&n, &products), *r)),
                Err(e) => {
                    log::warn!("{}: {e}", r.id);
                    None
                }
            }
        })
        .collect();
    let mut w = output(a.out.as_deref())?;
    for (imps, r) in results.iter().flatten() {
        let lines: Vec<ImpurityLine> = imps
            .iter()
            .map(|i| ImpurityLine {
                rxn_id: &r.id,
                smiles: &i.smiles,
                depth: i.depth,
                node: &i.node,
                pathway: i
                    .pathway
                    .iter()
                    .map(|s| ImpurityStep {
                        before: &s.before,
                        template_id: &s.template_id,
                        after: &s.after,
                    })
                    .collect(),
            })
            .collect();
        write_jsonl(&mut w, &lines)?;
    }
    w.flush()?;
    Ok(OK)
}

pub fn dot(cfg: &ConfigFile, a: DotArgs) -> Result<u8> {
    let net = network_settings(cfg, &a.network)?;
    let records = read_reactions(&a.reactions)?;
    let record = records
        .iter()
        .flatten()
        .find(|r| a.id.as_ref().is_none_or(|id| &r.id == id))
        .ok_or_else(|| match &a.id {
            Some(id) => anyhow!("no readable record with id {id:?}"),
            None => anyhow!("no readable record"),
        })?;
    let network = expand_network(record, &net.pack, net.limits, net.all_classes)
        .with_context(|| format!("cannot expand {}", record.id))?;
    let highlight: BTreeSet<String> =
        match reproduce(record, &net.pack, net.limits, net.all_classes) {
            Ok(rep) => rep.pruned.nodes.keys().cloned().collect(),
            Err(_) => BTreeSet::new(),
        };
    let mut w = output(a.out.as_deref())?;
    w.write_all(export_dot(&network, &highlight).as_bytes())?;
    w.flush()?;
    Ok(OK)
}

#[derive(serde::Deserialize)]
struct ServeRequest {
    state: Vec<String>,
}

#[derive(Serialize)]
struct ServeCandidate {
    state: Vec<String>,
    rank: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Serialize)]
struct ServeResponse {
    candidates: Vec<ServeCandidate>,
}

pub fn serve_ranker(cfg: &ConfigFile, a: ServeRankerArgs) -> Result<u8> {
    let pack_path: Option<PathBuf> = cfg.pick_opt(a.pack, "pack")?;
    let pack = load_pack(pack_path.as_deref())?;
    let ranker = match a.ranker.as_str() {
        "frequency" => frequency_ranker(&pack, &a.train)?,
        "uniform" => FrequencyRanker::uniform(&pack),
        other => bail!("serve-ranker supports frequency or uniform, not {other:?}"),
    };
    let stdin = io::stdin().lock();
    let mut out = io::stdout().lock();
    for line in stdin.lines() {
        let line = line?;
        let candidates = match serde_json::from_str::<ServeRequest>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| StateBag::from_smiles(&r.state).map_err(|e| e.to_string()))
        {
            Ok(state) => ranker
                .rank(&state)
                .into_iter()
                .map(|c| ServeCandidate {
                    state: c.state.smiles(),
                    rank: c.rank,
                    score: c.score,
                })
                .collect(),
            Err(e) => {
                log::warn!("bad ranker request: {e}");
                Vec::new()
            }
        };
        serde_json::to_writer(&mut out, &ServeResponse { candidates })?;
        out.write_all(b"\n")?;
        out.flush()?;
    }
    Ok(OK)
}
