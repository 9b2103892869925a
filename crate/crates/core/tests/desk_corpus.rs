mod support;

use std::collections::BTreeSet;
use std::time::Instant;

use mechnet::beam::{beam_search, BeamConfig, BeamMode, OracleRanker, StepRanker};
use mechnet::metrics::{evaluate, LogRecord, StepPredictionLog, DEFAULT_KS};
use mechnet::molgraph::{heavy_atom_census, StateBag};
use mechnet::network::{
    emit_dataset, expand_network, reproduce, ElementaryStepRecord, Limits, RejectReason,
    SplitConfig,
};
use mechnet::rewrite::enumerate_applications_ungated;
use mechnet::template::TemplatePack;

fn all_rows(pack: &TemplatePack) -> Vec<ElementaryStepRecord> {
    support::desk_records()
        .iter()
        .filter_map(|r| {
            reproduce(r, pack, Limits::default(), false)
                .ok()
                .map(|rep| rep.rows(&r.id))
        })
        .flatten()
        .collect()
}

fn canon(smiles: &[&str]) -> String {
    StateBag::from_smiles(smiles).unwrap().key().to_string()
}

#[test]
fn desk_corpus_coverage() {
    let records: Vec<_> = support::desk_records().into_iter().map(Ok).collect();
    assert_eq!(records.len(), 20);
    let out = emit_dataset(
        &records,
        &TemplatePack::starter(),
        Limits::default(),
        &SplitConfig::default(),
        false,
    );
    let m = &out.manifest;
    assert_eq!((m.total, m.reproduced), (20, 17));
    assert!((m.coverage.unwrap() - 0.85).abs() < 1e-12);
    assert_eq!(m.failures.unknown_class, 1);
    assert_eq!(m.failures.agents_missing, 1);
    assert_eq!(m.failures.product_not_found, 1);
}

#[test]
fn snar_network_has_six_terminal_candidates_and_one_pathway() {
    let pack = TemplatePack::starter();
    let record = support::desk_records()
        .into_iter()
        .find(|r| r.id == "snar-001")
        .unwrap();
    let started = Instant::now();
    let rep = reproduce(&record, &pack, Limits::default(), false).unwrap();
    let elapsed = started.elapsed();

    let terminal: BTreeSet<String> = rep
        .network
        .terminal_nodes()
        .iter()
        .flat_map(|k| rep.network.state(k).unwrap().smiles())
        .collect();
    assert!(terminal.len() >= 6, "terminal species: {terminal:?}");

    assert_eq!(rep.pathways.len(), 1);
    let path = &rep.pathways[0];
    assert_eq!(path.len(), 3);
    let last = rep.pruned.state(&path[2].after).unwrap();
    let ether = canon(&["CCOc1ccc(cn1)[N+](=O)[O-]"]);
    let chloride = canon(&["[Cl-]"]);
    assert!(last.smiles().contains(&ether));
    assert!(last.smiles().contains(&chloride));
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
}

#[test]
fn hydrolysis_needs_hydroxide() {
    let pack = TemplatePack::starter();
    let mut record = support::desk_records()
        .into_iter()
        .find(|r| r.id == "ester-001")
        .unwrap();
    let rep = reproduce(&record, &pack, Limits::default(), false).unwrap();
    assert!(!rep.pathways.is_empty());

    record.agents = vec!["[Na+]".to_string()];
    let net = expand_network(&record, &pack, Limits::default(), false).unwrap();
    assert_eq!(net.nodes.len(), 1);
    assert!(net.edges.is_empty());
    let reject = reproduce(&record, &pack, Limits::default(), false).unwrap_err();
    assert_eq!(reject.reason, RejectReason::AgentsMissing);
    let out = emit_dataset(
        &[Ok(record)],
        &pack,
        Limits::default(),
        &SplitConfig::default(),
        false,
    );
    assert_eq!(out.manifest.reproduced, 0);
    assert_eq!(out.manifest.coverage, Some(0.0));
    assert!(out.train.is_empty() && out.val.is_empty() && out.test.is_empty());
}

#[test]
fn every_step_conserves_atoms_and_charge() {
    let pack = TemplatePack::starter();
    let rows = all_rows(&pack);
    assert!(rows.len() > 40);
    let mut violations = Vec::new();
    for row in &rows {
        let before = StateBag::from_smiles(&row.before).unwrap();
        let after = StateBag::from_smiles(&row.after).unwrap();
        if heavy_atom_census(&before) != heavy_atom_census(&after) {
            violations.push(format!("{}#{} census", row.rxn_id, row.step_index));
        }
        let dq = after.total_charge() - before.total_charge();
        let implicit = pack
            .template(&row.template_id)
            .map_or(0, |t| t.proton_implicit as i32);
        if !(-1..=1).contains(&dq) || (dq != 0 && dq != implicit) {
            violations.push(format!(
                "{}#{} charge change {dq} (proton_implicit {implicit})",
                row.rxn_id, row.step_index
            ));
        }
        let dh = after.total_h() as i64 - before.total_h() as i64;
        if dq != 0 && dh != dq as i64 {
            violations.push(format!(
                "{}#{} hydrogen change {dh}",
                row.rxn_id, row.step_index
            ));
        }
    }
    assert!(violations.is_empty(), "{violations:#?}");
}

#[test]
fn replaying_rows_reproduces_every_after_state() {
    let pack = TemplatePack::starter();
    let rows = all_rows(&pack);
    let mut terminations = std::collections::BTreeMap::new();
    for row in &rows {
        if row.is_termination {
            assert_eq!(row.before, row.after);
            *terminations
                .entry((row.rxn_id.clone(), row.path_id))
                .or_insert(0) += 1;
            continue;
        }
        let template = pack
            .template(&row.template_id)
            .unwrap_or_else(|| panic!("unknown template {}", row.template_id));
        let before = StateBag::from_smiles(&row.before).unwrap();
        let want = StateBag::from_smiles(&row.after).unwrap();
        let produced: BTreeSet<String> = enumerate_applications_ungated(template, &before)
            .into_iter()
            .map(|a| a.successor.key().to_string())
            .collect();
        assert!(
            produced.contains(want.key()),
            "{}#{}: {} does not yield {}",
            row.rxn_id,
            row.step_index,
            row.template_id,
            want.key()
        );
    }
    let pathways: BTreeSet<(String, usize)> =
        rows.iter().map(|r| (r.rxn_id.clone(), r.path_id)).collect();
    assert_eq!(terminations.len(), pathways.len());
    assert!(terminations.values().all(|&n| n == 1));
    for ((id, path), _) in terminations {
        let last = rows
            .iter()
            .filter(|r| r.rxn_id == id && r.path_id == path)
            .max_by_key(|r| r.step_index)
            .unwrap();
        assert!(
            last.is_termination,
            "{id}/{path} does not end with termination"
        );
    }
}

#[test]
fn oracle_beam_recovers_every_reproduced_reaction() {
    let pack = TemplatePack::starter();
    let cfg = BeamConfig {
        beam_width: 1,
        mode: BeamMode::Rank,
        ..BeamConfig::default()
    };
    let started = Instant::now();
    let mut log = Vec::new();
    let mut truth = Vec::new();
    let mut reproduced = 0;
    for record in support::desk_records() {
        let Ok(rep) = reproduce(&record, &pack, Limits::default(), false) else {
            continue;
        };
        reproduced += 1;
        let oracle = OracleRanker::new(rep.network.clone(), &rep.pathways);
        let out = beam_search(rep.network.root_state(), &oracle, &cfg).unwrap();
        let best = &out.finals[0];
        assert!(best.state.contains_all(&rep.products), "{}", record.id);
        assert_eq!(best.sequence_rank(), 1, "{}", record.id);
        for row in rep.rows(&record.id) {
            let before = StateBag::from_smiles(&row.before).unwrap();
            log.push(LogRecord::Step(StepPredictionLog {
                rxn_id: row.rxn_id.clone(),
                path_id: row.path_id,
                step_index: row.step_index,
                truth: row.after.clone(),
                candidates: oracle
                    .rank(&before)
                    .into_iter()
                    .map(|c| c.state.smiles())
                    .collect(),
            }));
            truth.push(row);
        }
    }
    assert_eq!(reproduced, 17);
    let report = evaluate(&log, &truth, &DEFAULT_KS).unwrap();
    assert_eq!(report.accuracy(1), Some(1.0));
    assert_eq!(report.sequence_accuracy(1), Some(1.0));
    assert!(started.elapsed().as_secs_f64() < 10.0);
}
