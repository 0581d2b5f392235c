//! End-to-end exercises of the command pipeline: ingest -> tokenize ->
//! evolve -> analyze -> report, plus the error contracts behind the exit
//! codes.

use std::fs;
use std::path::{Path, PathBuf};

use evolm::cli::{run_command, CliError, Command, Verb};

struct Fixture {
    _dir: tempfile::TempDir,
    config_path: PathBuf,
    store_root: PathBuf,
}

fn write_corpus_tree(dir: &Path, files: &[(&str, &str)]) {
    for (name, text) in files {
        fs::write(dir.join(name), text).unwrap();
    }
}

/// A tiny Coq-flavored corpus plus a desk-scale config pointing at a fresh
/// store, both inside one temp dir.
fn fixture(corpus_files: &[(&str, &str)]) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = dir.path().join("src");
    fs::create_dir(&corpus_dir).unwrap();
    write_corpus_tree(&corpus_dir, corpus_files);
    let store_root = dir.path().join("store");
    let config_path = dir.path().join("config.toml");
    fs::write(
        &config_path,
        format!(
            r#"
[corpus]
name = "demo"
root = {corpus_root:?}
language = "coq"
strip_comments = false
split_ratio = 0.8

[tokenize]
method = "character"
bpe_vocab_size = 40

[sweep]
n_points = 4
iters = 30
n_boot = 2
probe_n_embd = 16
probe_block_size = 8

[evolve]
n_generations = 2
population_size = 4
elite_percent = 0.5
crossover_probability = 0.5
mutation_probability = 0.5
max_iters = 20
seed = 11
elitism = false
eval_iters = 10
n_boot = 2
decay_lr = true
mock_fitness = false

[space]
preset = "desk"
n_layer = [2, 2]
n_head_choices = [1, 2]
n_embd_log2 = [4, 4]
batch_log2 = [1, 1]
block_log2 = [3, 3]

[store]
root = {store_root:?}
"#,
            corpus_root = corpus_dir,
            store_root = store_root,
        ),
    )
    .unwrap();
    Fixture {
        _dir: dir,
        config_path,
        store_root,
    }
}

fn cmd(fixture: &Fixture, verb: Verb, overrides: &[&str]) -> Command {
    Command {
        verb,
        config_path: fixture.config_path.clone(),
        overrides: overrides.iter().map(|s| s.to_string()).collect(),
    }
}

fn default_corpus() -> Vec<(&'static str, &'static str)> {
    let body =
        "Lemma add_comm : forall n m, n + m = m + n. Proof. intros n m. induction n. auto. qed. ";
    vec![
        ("a.v", Box::leak(body.repeat(4).into_boxed_str())),
        ("b.v", Box::leak(body.repeat(3).into_boxed_str())),
    ]
}

#[test]
fn full_pipeline_runs_and_persists_artifacts() {
    let fx = fixture(&default_corpus());

    run_command(&cmd(&fx, Verb::Ingest, &[])).unwrap();
    assert!(fx.store_root.join("corpora/demo/train.txt").is_file());
    assert!(fx.store_root.join("corpora/demo/valid.txt").is_file());
    let manifest = fs::read_to_string(fx.store_root.join("corpora/demo/manifest.json")).unwrap();
    assert!(manifest.contains("\"file_count\": 2"));

    run_command(&cmd(&fx, Verb::Tokenize, &[])).unwrap();
    // exactly one run directory with tokenizer + streams
    let runs: Vec<_> = fs::read_dir(&fx.store_root)
        .unwrap()
        .filter_map(|e| {
            let e = e.unwrap();
            e.path().join("run.json").is_file().then_some(e.path())
        })
        .collect();
    assert_eq!(runs.len(), 1);
    let run_dir = &runs[0];
    assert!(run_dir.join("tokenizer.json").is_file());
    assert!(run_dir.join("streams/train.bin").is_file());
    assert!(run_dir.join("streams/valid.bin").is_file());
    assert!(run_dir.join("entropy.json").is_file());

    run_command(&cmd(&fx, Verb::Evolve, &[])).unwrap();
    assert!(run_dir.join("simulation.json").is_file());
    assert!(run_dir.join("checkpoints.csv").is_file());
    for g in 1..=2 {
        for i in 0..4 {
            assert!(
                run_dir
                    .join(format!("generations/g{g}/individual_{i}.json"))
                    .is_file(),
                "missing generation artifact g{g}/{i}"
            );
        }
    }
    let checkpoints = fs::read_to_string(run_dir.join("checkpoints.csv")).unwrap();
    assert!(checkpoints.starts_with("run_id,generation,individual,iter,train_loss,valid_loss"));
    // 2 gens x 4 individuals x 3 checkpoints (iters 0, 10, 20) + header
    assert_eq!(checkpoints.lines().count(), 1 + 2 * 4 * 3);

    run_command(&cmd(&fx, Verb::Analyze, &[])).unwrap();
    for name in [
        "normalized.csv",
        "factors.csv",
        "model_fits.json",
        "generation_summary.csv",
        "notes.txt",
    ] {
        assert!(
            fx.store_root.join("analysis").join(name).is_file(),
            "missing analysis/{name}"
        );
    }
    let notes = fs::read_to_string(fx.store_root.join("analysis/notes.txt")).unwrap();
    assert!(notes.contains("GEE"));

    run_command(&cmd(&fx, Verb::Report, &[])).unwrap();
    for name in [
        "fig1_val_train_ratio.svg",
        "fig2_valid_loss.svg",
        "fig3_corr_vs_loss.svg",
        "fig4_corr_vs_generation.svg",
        "fig5_calibrated_loss.svg",
        "generation_summary.csv",
        "table5_factors.csv",
        "table2_entropy.csv",
    ] {
        assert!(
            run_dir.join("reports").join(name).is_file(),
            "missing reports/{name}"
        );
    }
}

#[test]
fn reports_are_byte_identical_across_invocations() {
    let fx = fixture(&default_corpus());
    run_command(&cmd(&fx, Verb::Ingest, &[])).unwrap();
    run_command(&cmd(&fx, Verb::Tokenize, &[])).unwrap();
    run_command(&cmd(&fx, Verb::Evolve, &[])).unwrap();
    run_command(&cmd(&fx, Verb::Analyze, &[])).unwrap();
    run_command(&cmd(&fx, Verb::Report, &[])).unwrap();

    let run_dir: PathBuf = fs::read_dir(&fx.store_root)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            p.join("run.json").is_file().then_some(p)
        })
        .next()
        .unwrap();
    let snapshot = |name: &str| fs::read(run_dir.join("reports").join(name)).unwrap();
    let csv_a = snapshot("generation_summary.csv");
    let svg_a = snapshot("fig2_valid_loss.svg");
    let factors_a = snapshot("table5_factors.csv");

    run_command(&cmd(&fx, Verb::Analyze, &[])).unwrap();
    run_command(&cmd(&fx, Verb::Report, &[])).unwrap();
    assert_eq!(snapshot("generation_summary.csv"), csv_a);
    assert_eq!(snapshot("fig2_valid_loss.svg"), svg_a);
    assert_eq!(snapshot("table5_factors.csv"), factors_a);
}

#[test]
fn four_symbol_corpus_reports_two_bit_entropy_row() {
    let fx = fixture(&[("toy.v", Box::leak("abcd".repeat(40).into_boxed_str()))]);
    run_command(&cmd(&fx, Verb::Ingest, &[])).unwrap();
    run_command(&cmd(&fx, Verb::Tokenize, &[])).unwrap();
    let run_dir: PathBuf = fs::read_dir(&fx.store_root)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            p.join("run.json").is_file().then_some(p)
        })
        .next()
        .unwrap();
    let table2 = fs::read_to_string(run_dir.join("reports/table2_entropy.csv")).unwrap();
    assert!(
        table2.contains("demo,character,4,2.000000"),
        "unexpected entropy row: {table2}"
    );
}

#[test]
fn mock_evolve_persists_every_individual() {
    let fx = fixture(&default_corpus());
    // 5 generations x 6 individuals, straight to mock fitness: no ingest or
    // tokenize required
    run_command(&cmd(
        &fx,
        Verb::Evolve,
        &[
            "evolve.mock_fitness=true",
            "evolve.n_generations=5",
            "evolve.population_size=6",
        ],
    ))
    .unwrap();
    let run_dir: PathBuf = fs::read_dir(&fx.store_root)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            p.join("run.json").is_file().then_some(p)
        })
        .next()
        .unwrap();
    let mut count = 0;
    for g in 1..=5 {
        for i in 0..6 {
            if run_dir
                .join(format!("generations/g{g}/individual_{i}.json"))
                .is_file()
            {
                count += 1;
            }
        }
    }
    assert_eq!(count, 30);
}

#[test]
fn generation_summary_matches_checkpoint_csv_reaggregation() {
    let fx = fixture(&default_corpus());
    run_command(&cmd(&fx, Verb::Ingest, &[])).unwrap();
    run_command(&cmd(&fx, Verb::Tokenize, &[])).unwrap();
    run_command(&cmd(&fx, Verb::Evolve, &[])).unwrap();

    let run_dir: PathBuf = fs::read_dir(&fx.store_root)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            p.join("run.json").is_file().then_some(p)
        })
        .next()
        .unwrap();

    // independent oracle: recompute mean valid/train ratio per (generation,
    // iter) straight from the raw checkpoint CSV
    let csv = fs::read_to_string(run_dir.join("checkpoints.csv")).unwrap();
    let mut ratios: std::collections::BTreeMap<(usize, usize), Vec<f64>> = Default::default();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let generation: usize = cols[1].parse().unwrap();
        let iter: usize = cols[3].parse().unwrap();
        let train: f64 = cols[4].parse().unwrap();
        let valid: f64 = cols[5].parse().unwrap();
        ratios.entry((generation, iter)).or_default().push(valid / train);
    }

    let sim: evolm::SimulationResult =
        serde_json::from_slice(&fs::read(run_dir.join("simulation.json")).unwrap()).unwrap();
    let entropy: serde_json::Value =
        serde_json::from_slice(&fs::read(run_dir.join("entropy.json")).unwrap()).unwrap();
    let h = entropy["baseline_entropy_bits"].as_f64().unwrap();
    let summaries = evolm::analysis::generation_summary(&sim, h, h).unwrap();

    for summary in &summaries {
        for &(iter, mean_ratio) in &summary.mean_ratio_by_checkpoint {
            let oracle = &ratios[&(summary.generation, iter)];
            let oracle_mean = oracle.iter().sum::<f64>() / oracle.len() as f64;
            assert!(
                (mean_ratio - oracle_mean).abs() < 1e-9,
                "gen {} iter {iter}: summary {mean_ratio} vs CSV oracle {oracle_mean}",
                summary.generation
            );
        }
    }
}

#[test]
fn bpe_sweep_emits_elbow_data() {
    // enough distinct identifiers that the word vocabulary exceeds the
    // character vocabulary, as real corpora do
    let body: String = (0..60)
        .map(|i| format!("Lemma lem_{i} : forall x_{i}, f_{i} x_{i} = x_{i}. Proof. auto. qed. "))
        .collect();
    let fx = fixture(&[("m.v", Box::leak(body.into_boxed_str()))]);
    run_command(&cmd(&fx, Verb::Ingest, &[])).unwrap();
    run_command(&cmd(&fx, Verb::BpeSweep, &[])).unwrap();
    let elbow =
        fs::read_to_string(fx.store_root.join("corpora/demo/bpe_sweep_elbow.csv")).unwrap();
    assert_eq!(elbow.lines().count(), 1 + 4, "4 sweep points: {elbow}");
    let sweep = fs::read_to_string(fx.store_root.join("corpora/demo/bpe_sweep.json")).unwrap();
    assert!(sweep.contains("selected_vocab_size"));
}

#[test]
fn missing_prerequisites_map_to_exit_code_three() {
    let fx = fixture(&default_corpus());
    // tokenize without ingest
    let err = run_command(&cmd(&fx, Verb::Tokenize, &[])).unwrap_err();
    assert!(matches!(err, CliError::MissingArtifact { .. }), "{err:?}");
    assert_eq!(err.exit_code(), 3);
    // evolve without tokenize
    let err = run_command(&cmd(&fx, Verb::Evolve, &[])).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    // report on an empty store
    let err = run_command(&cmd(&fx, Verb::Report, &[])).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    // analyze on an empty store
    let err = run_command(&cmd(&fx, Verb::Analyze, &[])).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn bad_configs_map_to_exit_code_two() {
    let fx = fixture(&default_corpus());
    // unknown override key
    let err = run_command(&cmd(&fx, Verb::Ingest, &["corpus.nonsense=1"])).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    match err {
        CliError::BadConfig { key, .. } => assert_eq!(key, "corpus.nonsense"),
        other => panic!("expected BadConfig, got {other:?}"),
    }
    // invalid method
    let err = run_command(&cmd(&fx, Verb::Tokenize, &["tokenize.method=quantum"])).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    // missing config file
    let missing = Command {
        verb: Verb::Ingest,
        config_path: fx.config_path.with_file_name("absent.toml"),
        overrides: vec![],
    };
    assert_eq!(run_command(&missing).unwrap_err().exit_code(), 2);
    // config that fails evolution validation
    let err = run_command(&cmd(
        &fx,
        Verb::Evolve,
        &["evolve.mock_fitness=true", "evolve.population_size=1"],
    ))
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn evolve_twice_on_one_run_is_refused() {
    let fx = fixture(&default_corpus());
    run_command(&cmd(&fx, Verb::Ingest, &[])).unwrap();
    run_command(&cmd(&fx, Verb::Tokenize, &[])).unwrap();
    run_command(&cmd(&fx, Verb::Evolve, &[])).unwrap();
    let err = run_command(&cmd(&fx, Verb::Evolve, &[])).unwrap_err();
    assert!(matches!(err, CliError::Failure(_)), "{err:?}");
    // a fresh tokenize opens a fresh run, and evolve succeeds again
    run_command(&cmd(&fx, Verb::Tokenize, &[])).unwrap();
    run_command(&cmd(&fx, Verb::Evolve, &[])).unwrap();
}

#[test]
fn store_root_env_var_is_honored() {
    let fx = fixture(&default_corpus());
    // strip the [store] section by overriding root to empty? instead write a
    // config without store.root and set the env var
    let config = fs::read_to_string(&fx.config_path).unwrap();
    let without_store = config.replace(
        &format!("[store]\nroot = {:?}\n", fx.store_root),
        "",
    );
    fs::write(&fx.config_path, without_store).unwrap();
    let env_root = fx.store_root.parent().unwrap().join("env-store");
    std::env::set_var("EVOLM_STORE_ROOT", &env_root);
    let result = run_command(&cmd(&fx, Verb::Ingest, &[]));
    std::env::remove_var("EVOLM_STORE_ROOT");
    result.unwrap();
    assert!(env_root.join("corpora/demo/train.txt").is_file(),);
}
