mod common;

use std::path::{Path, PathBuf};

use serde_json::json;

use common::{recall_response, serve};
use reprobe::provider::http::ProviderEndpoint;
use reprobe::stimulus::Condition;
use reprobe::sweep::{
    run_sweep, write_report, EndpointSpec, ResultsStore, SweepConfig, ARBITRARY_SET,
};
use reprobe::toylm::{train_to_dir, SynthCorpusConfig, ToyConfig, ToyRunConfig, TrainConfig};
use reprobe::Error;

/// A toy model small enough to train in well under a second, with a
/// checkpoint at each of its 18 steps.
fn tiny_run() -> ToyRunConfig {
    ToyRunConfig {
        model: ToyConfig {
            vocab_size: 512,
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            context_len: 64,
            init_std: 0.02,
            seed: 0,
        },
        corpus: SynthCorpusConfig {
            seq_len: 32,
            filler_vocab: 512,
            ..Default::default()
        },
        train: TrainConfig {
            steps: 17,
            batch_tokens: 64,
            checkpoint_steps: (0..18).collect(),
            ..Default::default()
        },
    }
}

fn toy_dir(root: &Path) -> PathBuf {
    let dir = root.join("ckpt");
    train_to_dir(&tiny_run(), &dir, false).unwrap();
    dir
}

fn toy_config(root: &Path, ckpts: &Path, condition: Condition) -> SweepConfig {
    SweepConfig {
        endpoints: vec![EndpointSpec::Toy(ckpts.to_path_buf())],
        condition,
        bootstrap_b: 200,
        output_dir: root.join("results"),
        ..Default::default()
    }
}

#[test]
fn toy_sweep_resume_force_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpts = toy_dir(tmp.path());
    let cfg = toy_config(tmp.path(), &ckpts, Condition::Repeat);

    let first = run_sweep(&cfg, false).unwrap();
    assert_eq!(first.written.len(), 18);
    assert_eq!(first.exit_code(), 0);
    let store = ResultsStore::new(&cfg.output_dir);
    let rows = store.summaries().unwrap();
    assert_eq!(rows.len(), 18);
    for r in &rows {
        assert_eq!(r.model, "toy-ckpt");
        assert_eq!(r.set, ARBITRARY_SET);
        assert_eq!(r.n_vignettes, 230);
        assert_eq!(r.tokens_seen, r.step * 64);
        assert_eq!(r.per_position.len(), 3);
        assert!(r.ci_lo <= r.ci_hi);
    }
    let key = &first.written[5];
    assert_eq!(store.read_scores(key).unwrap().len(), 230);

    let again = run_sweep(&cfg, false).unwrap();
    assert!(again.written.is_empty());
    assert_eq!(again.skipped.len(), 18);
    assert_eq!(store.summaries().unwrap(), rows);

    let forced = run_sweep(&cfg, true).unwrap();
    assert_eq!(forced.written.len(), 18);
    assert_eq!(store.summaries().unwrap(), rows, "rescoring is deterministic");

    run_sweep(&toy_config(tmp.path(), &ckpts, Condition::Control), false).unwrap();
    let report = write_report(&store, &tmp.path().join("report")).unwrap();
    let svgs: Vec<&PathBuf> = report
        .files
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "svg"))
        .collect();
    assert_eq!(svgs.len(), 4);
    for svg in svgs {
        let text = std::fs::read_to_string(svg).unwrap();
        let doc = roxmltree::Document::parse(&text)
            .unwrap_or_else(|e| panic!("{}: {e}", svg.display()));
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }
    let summary = std::fs::read_to_string(tmp.path().join("report/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 36);
}

#[test]
fn empty_store_has_no_report() {
    let tmp = tempfile::tempdir().unwrap();
    let store = ResultsStore::new(tmp.path());
    assert!(matches!(
        write_report(&store, &tmp.path().join("report")),
        Err(Error::NoResults)
    ));
}

fn http_config(root: &Path, url: &str, steps: Vec<u64>) -> SweepConfig {
    let mut ep = ProviderEndpoint::new(url, "EleutherAI/pythia-70m", "main");
    ep.max_inflight = 2;
    SweepConfig {
        endpoints: vec![EndpointSpec::Http(ep)],
        steps,
        bootstrap_b: 200,
        output_dir: root.join("results"),
        ..Default::default()
    }
}

#[test]
fn http_sweep_records_failed_revisions() {
    let stub = serve(|req, _| match req["revision"].as_str() {
        Some("step4") => (500, json!({"error": "checkpoint corrupt"})),
        _ => (200, recall_response(req, -4.0, -0.5)),
    });
    let tmp = tempfile::tempdir().unwrap();
    let cfg = http_config(tmp.path(), &stub.url, vec![0, 4, 8]);
    let outcome = run_sweep(&cfg, false).unwrap();
    assert_eq!(outcome.written.len(), 2);
    assert_eq!(outcome.failures.len(), 1);
    assert_eq!(outcome.failures[0].revision, "step4");
    assert!(outcome.failures[0].message.contains("checkpoint corrupt"));
    assert_eq!(outcome.exit_code(), 2);

    let rows = ResultsStore::new(&cfg.output_dir).summaries().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].tokens_seen, 8 * 2_097_152);
    // Every repeated noun costs 0.5 nats against 4 on first sight.
    for r in &rows {
        assert!((r.lr - (1.0 - 0.5 / 4.0)).abs() < 1e-12, "{}", r.lr);
    }

    // Only the failed revision is retried on the next run.
    let retry = run_sweep(&cfg, false).unwrap();
    assert_eq!(retry.skipped.len(), 2);
    assert_eq!(retry.failures.len(), 1);
}

#[test]
fn unreachable_endpoint_stops_its_remaining_revisions() {
    let stub = serve(|req, _| match req["revision"].as_str() {
        Some("step4") => (503, json!({"error": "gone"})),
        _ => (200, recall_response(req, -4.0, -4.0)),
    });
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = http_config(tmp.path(), &stub.url, vec![0, 4, 8, 16]);
    cfg.condition = Condition::Control;
    let outcome = run_sweep(&cfg, false).unwrap();
    assert_eq!(outcome.written.len(), 1);
    let revs: Vec<&str> = outcome.failures.iter().map(|f| f.revision.as_str()).collect();
    assert_eq!(revs, ["step4", "step8", "step16"]);
    assert!(outcome.failures[1].message.starts_with("skipped"));
    assert_eq!(outcome.exit_code(), 2);
}

#[test]
fn dead_endpoint_fails_preflight() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let tmp = tempfile::tempdir().unwrap();
    let cfg = http_config(tmp.path(), &format!("http://127.0.0.1:{port}"), vec![0]);
    assert!(run_sweep(&cfg, false).is_err());
}
