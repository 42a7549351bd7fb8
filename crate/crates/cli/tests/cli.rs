use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hashee_core::corpus::parse_corpus;
use hashee_core::difficulty::{evaluate_predictions, parse_dataset, parse_metrics};
use hashee_core::flops::{report, BaselineSpec, ModelDims};
use hashee_core::hash::{build_frequency, load_table, CorpusStats, Vocab};
use hashee_core::model::{schedule, SchedulePolicy};
use tempfile::TempDir;

const CORPUS: &str = "a a a a b b c\nd e f a\n\nb c\n";

fn hashee(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hashee"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = hashee(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_of(dir: &Path, args: &[&str]) -> String {
    let out = hashee(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("c.txt"), CORPUS).unwrap();
    dir
}

#[test]
fn frequency_table_matches_library() {
    let dir = setup();
    ok(
        dir.path(),
        &[
            "build-hash",
            "--method",
            "frequency",
            "--buckets",
            "3",
            "--layers",
            "6",
            "--corpus",
            "c.txt",
            "--out",
            "t.hash",
        ],
    );
    let corpus = parse_corpus(CORPUS, false).unwrap();
    let vocab = Vocab::from_corpus(&corpus);
    let expected =
        build_frequency(&vocab, &CorpusStats::from_corpus(&corpus, &vocab), 3, 6).unwrap();
    assert_eq!(load_table(dir.path().join("t.hash")).unwrap(), expected);
    // a:5 b:3 c:2 then d, e, f once each.
    let t = &expected;
    let layer = |s: &str| t.layer_of(vocab.id(s).unwrap()).unwrap();
    assert_eq!(
        ["a", "b", "c", "d", "e", "f"].map(layer),
        [1, 1, 3, 3, 5, 5]
    );
}

#[test]
fn inconsistent_random_writes_phase_pair() {
    let dir = setup();
    ok(
        dir.path(),
        &[
            "--out-dir",
            "out",
            "build-hash",
            "--method",
            "random",
            "--consistent",
            "false",
            "--buckets",
            "2",
            "--layers",
            "4",
            "--corpus",
            "c.txt",
        ],
    );
    let train = load_table(dir.path().join("out/random.hash.train")).unwrap();
    let infer = load_table(dir.path().join("out/random.hash.infer")).unwrap();
    assert_eq!(train.vocab_size(), 6);
    assert_eq!(infer.vocab_size(), 6);
    assert!(!dir.path().join("out/random.hash").exists());
}

#[test]
fn bad_flags_are_named() {
    let dir = setup();
    let err = stderr_of(
        dir.path(),
        &[
            "build-hash",
            "--method",
            "frequency",
            "--buckets",
            "13",
            "--layers",
            "12",
            "--corpus",
            "c.txt",
        ],
    );
    assert!(err.contains("--buckets 13"), "{err}");
    let err = stderr_of(
        dir.path(),
        &[
            "build-hash",
            "--method",
            "clustered",
            "--buckets",
            "2",
            "--layers",
            "4",
            "--corpus",
            "c.txt",
        ],
    );
    assert!(err.contains("--embeddings"), "{err}");
    let err = stderr_of(
        dir.path(),
        &[
            "build-hash",
            "--method",
            "frequency",
            "--buckets",
            "2",
            "--layers",
            "4",
            "--corpus",
            "missing.txt",
        ],
    );
    assert!(err.contains("--corpus"), "{err}");
}

#[test]
fn flops_report_matches_library() {
    let dir = setup();
    ok(
        dir.path(),
        &[
            "build-hash",
            "--method",
            "frequency",
            "--buckets",
            "3",
            "--layers",
            "6",
            "--corpus",
            "c.txt",
            "--out",
            "t.hash",
        ],
    );
    ok(
        dir.path(),
        &[
            "--out-dir",
            "r",
            "flops-report",
            "--table",
            "t.hash",
            "--corpus",
            "c.txt",
            "--d-model",
            "8",
            "--heads",
            "2",
            "--d-ff",
            "16",
        ],
    );
    let table = load_table(dir.path().join("t.hash")).unwrap();
    let corpus = parse_corpus(CORPUS, false).unwrap();
    let vocab = table.vocab();
    let scheds: Vec<_> = corpus
        .documents
        .iter()
        .map(|d| schedule(&vocab.encode(d), &table, 6, &SchedulePolicy::default()).unwrap())
        .collect();
    let dims = ModelDims::new(8, 2, 16);
    let expected = report(
        &dims,
        6,
        &scheds,
        &BaselineSpec {
            num_layers: 6,
            dims,
        },
    )
    .unwrap();
    let text = fs::read_to_string(dir.path().join("r/flops.txt")).unwrap();
    let csv = fs::read_to_string(dir.path().join("r/flops.csv")).unwrap();
    assert_eq!(text, expected.to_text());
    assert_eq!(csv, expected.to_csv());
}

#[test]
fn all_last_layer_table_has_no_speedup() {
    let dir = setup();
    // One bucket over one layer: every token runs the whole (single-layer) model.
    ok(
        dir.path(),
        &[
            "build-hash",
            "--method",
            "frequency",
            "--buckets",
            "1",
            "--layers",
            "1",
            "--corpus",
            "c.txt",
            "--out",
            "t.hash",
        ],
    );
    let out = ok(
        dir.path(),
        &[
            "flops-report",
            "--table",
            "t.hash",
            "--corpus",
            "c.txt",
            "--d-model",
            "8",
            "--heads",
            "2",
            "--d-ff",
            "16",
        ],
    );
    assert!(out.contains("speedup         1.0000x"), "{out}");
}

#[test]
fn layer_mismatch_and_empty_corpus_fail() {
    let dir = setup();
    ok(
        dir.path(),
        &[
            "build-hash",
            "--method",
            "frequency",
            "--buckets",
            "3",
            "--layers",
            "6",
            "--corpus",
            "c.txt",
            "--out",
            "t.hash",
        ],
    );
    let err = stderr_of(
        dir.path(),
        &[
            "flops-report",
            "--table",
            "t.hash",
            "--corpus",
            "c.txt",
            "--layers",
            "12",
        ],
    );
    assert!(err.contains("--layers 12"), "{err}");
    fs::write(dir.path().join("empty.txt"), "\n\n").unwrap();
    let err = stderr_of(
        dir.path(),
        &["flops-report", "--table", "t.hash", "--corpus", "empty.txt"],
    );
    assert!(err.contains("--corpus"), "{err}");
}

#[test]
fn infer_is_deterministic_and_reloads() {
    let dir = setup();
    ok(
        dir.path(),
        &[
            "build-hash",
            "--method",
            "frequency",
            "--buckets",
            "2",
            "--layers",
            "3",
            "--corpus",
            "c.txt",
            "--out",
            "t.hash",
        ],
    );
    let args = [
        "--seed",
        "5",
        "infer",
        "--table",
        "t.hash",
        "--corpus",
        "c.txt",
        "--d-model",
        "8",
        "--heads",
        "2",
        "--d-ff",
        "16",
        "--save-model",
    ];
    ok(dir.path(), &args);
    let first = fs::read(dir.path().join("predictions.tsv")).unwrap();
    let model = fs::read(dir.path().join("model.txt")).unwrap();
    ok(dir.path(), &args);
    assert_eq!(fs::read(dir.path().join("predictions.tsv")).unwrap(), first);
    assert_eq!(fs::read(dir.path().join("model.txt")).unwrap(), model);

    ok(
        dir.path(),
        &[
            "--out-dir",
            "again",
            "infer",
            "--table",
            "t.hash",
            "--corpus",
            "c.txt",
            "--model",
            "model.txt",
        ],
    );
    assert_eq!(
        fs::read(dir.path().join("again/predictions.tsv")).unwrap(),
        first
    );

    let text = String::from_utf8(first).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "doc\tpred\texits");
    assert_eq!(lines.len(), 4);
    // Position 0 is pinned to the last layer.
    assert!(lines[1..]
        .iter()
        .all(|l| l.split('\t').nth(2).unwrap().starts_with("3")));
}

#[test]
fn difficulty_outputs_are_consistent() {
    let dir = setup();
    let args = [
        "--seed",
        "3",
        "--out-dir",
        "d",
        "difficulty",
        "--layers",
        "3",
        "--linear-m",
    ];
    ok(dir.path(), &args);
    let read = |name: &str| fs::read_to_string(dir.path().join("d").join(name)).unwrap();
    let metrics = read("metrics.tsv");
    let test = parse_dataset(&read("difficulty.test.tsv")).unwrap();
    let train = parse_dataset(&read("difficulty.train.tsv")).unwrap();
    assert_eq!(train.num_slots(), 3);
    assert_eq!(test.num_slots(), 3);

    let table = parse_metrics(&metrics).unwrap();
    let names: Vec<&str> = table.rows.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["Majority", "Linear-B", "Linear-M"]);

    // The all-positive predictor reproduces the Majority row when the
    // training split is majority-positive in every slot.
    let all_pos = vec![vec![true; 3]; test.len()];
    let m = evaluate_predictions(&all_pos, &test).unwrap();
    let majority = table.get("Majority").unwrap();
    if train.negative_counts().iter().all(|&n| 2 * n < train.len()) {
        assert_eq!(&m, majority);
    }

    ok(dir.path(), &args);
    assert_eq!(read("metrics.tsv"), metrics);
}

#[test]
fn ablation_schema() {
    let dir = setup();
    ok(
        dir.path(),
        &[
            "ablate-consistency",
            "--seeds",
            "1,2",
            "--epochs",
            "2",
            "--layers",
            "2",
            "--buckets",
            "2",
        ],
    );
    let text = fs::read_to_string(dir.path().join("ablation.tsv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "arm\tseed\taccuracy");
    assert_eq!(lines.len(), 1 + 2 * 3);
    for l in &lines[1..] {
        let cols: Vec<&str> = l.split('\t').collect();
        assert!(cols[0] == "rand-cons" || cols[0] == "rand-incons");
        let acc: f64 = cols[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
    let err = stderr_of(dir.path(), &["ablate-consistency", "--seeds", "4"]);
    assert!(err.contains("--seeds"), "{err}");
}
