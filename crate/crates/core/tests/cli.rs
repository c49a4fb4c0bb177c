use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn notemine(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_notemine"))
        .args(args)
        .current_dir(cwd)
        .env_remove("NOTEMINE_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn small_corpus(dir: &Path) {
    fs::write(
        dir.join("spec.json"),
        r#"{"docs_per_topic": 40, "vocab_size": 60, "k_true": 3, "missing_impression_rate": 0.1, "negation_rate": 0.2, "seed": 3}"#,
    )
    .unwrap();
    ok(&notemine(&["synth", "--spec", "spec.json", "--out", "corpus"], dir));
}

const CONFIG: &str = "[input]\npath = corpus/notes.jsonl\n\n[lda]\niterations = 80\nburn_in = 40\n\n[sweep]\ngrid = 2..4\n";

#[test]
fn missing_input_fails_in_ingest() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.cfg"), "[input]\npath = nowhere.jsonl\n").unwrap();
    let out = notemine(&["run", "--config", "run.cfg"], tmp.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ingest"), "{err}");
}

#[test]
fn resume_after_interrupted_fit_skips_earlier_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_corpus(dir);
    fs::write(dir.join("run.cfg"), CONFIG).unwrap();
    ok(&notemine(&["run", "--config", "run.cfg"], dir));
    let model = fs::read(dir.join("out/model.json")).unwrap();

    fs::remove_file(dir.join("out/model.json")).unwrap();
    let stdout = ok(&notemine(&["run", "--config", "run.cfg", "--resume"], dir));
    assert!(
        stdout.contains("skipped (up to date): ingest, preprocess, negate, phrases, vectorize, sweep\n"),
        "{stdout}"
    );
    assert_eq!(fs::read(dir.join("out/model.json")).unwrap(), model);

    let stdout = ok(&notemine(&["run", "--config", "run.cfg", "--resume"], dir));
    assert!(stdout.contains("sweep, fit, discriminate\n"), "{stdout}");
}

#[test]
fn changed_config_invalidates_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_corpus(dir);
    fs::write(dir.join("run.cfg"), CONFIG).unwrap();
    ok(&notemine(&["run", "--config", "run.cfg"], dir));
    fs::write(dir.join("run.cfg"), CONFIG.replace("iterations = 80", "iterations = 90")).unwrap();
    let stdout = ok(&notemine(&["run", "--config", "run.cfg", "--resume"], dir));
    assert!(
        stdout.contains("skipped (up to date): ingest, preprocess, negate, phrases, vectorize\n"),
        "{stdout}"
    );
}

#[test]
fn stages_run_standalone() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_corpus(dir);
    let w = ["--dir", "work"];
    let step = |args: &[&str]| ok(&notemine(&[args, &w[..]].concat(), dir));
    step(&["ingest", "--input", "corpus/notes.jsonl"]);
    step(&["preprocess"]);
    step(&["negate"]);
    step(&["vectorize", "--min-count", "3"]);
    let sweep = step(&["sweep", "--kmin", "2", "--kmax", "4", "--iterations", "60", "--burn-in", "30"]);
    assert!(sweep.contains("selected"), "{sweep}");
    step(&["fit", "--k", "3", "--iterations", "60", "--burn-in", "30"]);
    step(&["discriminate", "--top-n", "5"]);
    ok(&notemine(&["report", "--model", "work/model.json", "--out", "work/report"], dir));
    for f in ["table1.md", "table1.csv", "table2.md", "table2.tsv", "coherence.tsv", "funnel.txt"] {
        assert!(dir.join("work/report").join(f).exists(), "{f} missing");
    }
    let t2 = fs::read_to_string(dir.join("work/report/table2.md")).unwrap();
    assert!(t2.contains("χ²(2)"), "{t2}");
}

#[test]
fn negate_single_sentence() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&notemine(&["negate", "--text", "No acute cardiopulmonary process."], tmp.path()));
    assert!(out.contains("no_acute_cardiopulmonary_process"), "{out}");
}

#[test]
fn bad_thread_cap_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_notemine"))
        .args(["negate", "--text", "no edema"])
        .current_dir(tmp.path())
        .env("NOTEMINE_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("NOTEMINE_THREADS"));
}

#[test]
fn bundled_synthetic_config_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    fs::create_dir(root.join("configs")).unwrap();
    for f in ["synthetic.cfg", "synth_spec.json"] {
        fs::copy(configs.join(f), root.join("configs").join(f)).unwrap();
    }
    ok(&notemine(&["synth", "--spec", "configs/synth_spec.json", "--out", "synthetic"], root));
    let stdout = ok(&notemine(&["run", "--config", "configs/synthetic.cfg"], root));
    assert!(stdout.contains("topics: 5"), "{stdout}");
    for f in ["table1.md", "table2.md", "coherence.svg", "manifest.json", "summary.json"] {
        assert!(root.join("out/report").join(f).exists(), "{f} missing");
    }
    let manifest = fs::read_to_string(root.join("out/report/manifest.json")).unwrap();
    assert!(manifest.contains("tfidf_scale = 20"));
}
