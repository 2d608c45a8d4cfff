use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use gliomics::featsel::{FeatureTable, Resection};
use gliomics::imgvol::write_label_volume;
use gliomics::synthgen::{make_phantom, PhantomSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_gliomics");

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Run {
    let out = Command::new(BIN).args(args).output().expect("spawn gliomics");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

/// Two phantoms, one with TC == WT, written under `<dir>/<name>/seg.nii.gz`.
fn write_phantom(dir: &Path, name: &str, ric: f64) -> PathBuf {
    let v = make_phantom(&PhantomSpec::new([9.0, 7.0, 6.0], ric, [25, 21, 19], [1.0; 3])).unwrap();
    let p = dir.join(name).join("seg.nii.gz");
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    write_label_volume(&p, &v).unwrap();
    p
}

/// Table with age, RIC and three nuisance columns following the survival law.
fn write_table(path: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["RIC", "f1", "f2", "f3"].map(String::from).to_vec();
    let mut t = FeatureTable::empty(names);
    for i in 0..n {
        let age: f64 = rng.random_range(30.0..80.0);
        let ric: f64 = rng.random_range(0.2..1.0);
        let e: f64 = rng.sample(StandardNormal);
        let surv = (900.0 - 4.0 * age - 300.0 * ric + 50.0 * e).max(1.0);
        let f: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let res = if i % 7 == 3 { Resection::STR } else { Resection::GTR };
        t.push_row(format!("S{:03}", i + 1), vec![ric, f[0], f[1], f[2]], surv, age, res).unwrap();
    }
    t.write_csv(path).unwrap();
}

#[test]
fn extract_phantom_gives_163_value_columns() {
    let dir = tempfile::tempdir().unwrap();
    let seg = write_phantom(dir.path(), "subj", 0.6);
    let out = dir.path().join("f.csv");
    let r = run(&["extract", "--in", &s(&seg), "--out", &s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let t = FeatureTable::read_csv(&out).unwrap();
    assert_eq!(t.n_features(), 163);
    assert_eq!(t.subjects, vec!["subj"]);
    let header = fs::read_to_string(&out).unwrap().lines().nth(1).unwrap().split(',').count();
    assert_eq!(header, 4 + 163);
}

#[test]
fn ric_of_equal_core_and_whole_tumour_prints_one() {
    let dir = tempfile::tempdir().unwrap();
    let seg = write_phantom(dir.path(), "eq", 1.0);
    let r = run(&["ric", "--in", &s(&seg)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let first = r.stdout.lines().next().unwrap();
    assert_eq!(first, "RIC 1.000000");
    let j: Value = serde_json::from_str(&run(&["ric", "--in", &s(&seg), "--json"]).stdout).unwrap();
    assert!((j["ric"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn cv_twice_gives_identical_json() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("cohort_features.csv");
    write_table(&table, 60, 1);
    let args = ["cv", "--table", &s(&table), "--model", "invasiveness", "--k", "10", "--seed", "7", "--json"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(a.stdout, b.stdout);
    let j: Value = serde_json::from_str(&a.stdout).unwrap();
    assert_eq!(j["k"], 10);
    assert_eq!(j["seed"], 7);
    assert_eq!(j["per_fold"].as_array().unwrap().len(), 10);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    write_table(&table, 40, 2);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"model": "invasiveness", "k": 4, "seed": 9, "gtr_only": true}"#).unwrap();

    let from_cfg: Value =
        serde_json::from_str(&run(&["--json", "--config", &s(&cfg), "cv", "--table", &s(&table)]).stdout).unwrap();
    assert_eq!(from_cfg["k"], 4);
    assert_eq!(from_cfg["seed"], 9);
    assert_eq!(from_cfg["model"], "invasiveness");
    let gtr = FeatureTable::read_csv(&table).unwrap().resection.iter().filter(|r| **r == Resection::GTR).count();
    assert_eq!(from_cfg["n"], gtr);

    let r = run(&["cv", "--config", &s(&cfg), "--table", &s(&table), "--k", "5", "--model", "baseline", "--json"]);
    let j: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(j["k"], 5);
    assert_eq!(j["seed"], 9);
    assert_eq!(j["model"], "baseline");

    // keys that are not flags of the command are rejected like unknown flags
    fs::write(&cfg, r#"{"bogus_key": 1}"#).unwrap();
    assert_eq!(run(&["cv", "--config", &s(&cfg), "--table", &s(&table), "--model", "baseline"]).code, 1);
}

#[test]
fn study_reads_a_pipeline_config() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    write_table(&table, 30, 3);
    let cfg = dir.path().join("study.json");
    let out = dir.path().join("out");
    let body = serde_json::json!({
        "cohort_dir": "",
        "features_csv": s(&table),
        "output_dir": s(&out),
        "seed": 3,
        "folds": 5,
        "models": [
            {"name": "baseline", "model": {"type": "linear"}, "features": {"columns": []}, "add_age": true},
            {"name": "invasiveness", "model": {"type": "svr"}, "features": {"columns": ["age", "RIC"]}}
        ]
    });
    fs::write(&cfg, body.to_string()).unwrap();
    let r = run(&["study", "--config", &s(&cfg), "--json"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let j: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(j["reports"].as_array().unwrap().len(), 4);
    assert!(out.join("reports.json").exists());
    assert!(out.join("models/invasiveness.json").exists());
}

#[test]
fn exit_code_contract_on_malformed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let seg = write_phantom(d, "a", 0.5);
    let table = d.join("t.csv");
    write_table(&table, 20, 4);
    let junk = d.join("junk.nii");
    fs::write(&junk, vec![7u8; 400]).unwrap();
    let empty = d.join("empty.nii");
    fs::write(&empty, b"").unwrap();
    let ragged = d.join("ragged.csv");
    fs::write(&ragged, "# gliomics feature table v1\nsubject,age,survival_days,resection_status,x\nA,1,2\n").unwrap();
    let no_schema = d.join("plain.csv");
    fs::write(&no_schema, "subject,age\nA,1\n").unwrap();
    let bad_json = d.join("bad.json");
    fs::write(&bad_json, "{ not json").unwrap();
    let small = d.join("small.nii.gz");
    write_label_volume(&small, &make_phantom(&PhantomSpec::new([4.0, 3.0, 3.0], 0.5, [12, 11, 10], [1.0; 3])).unwrap())
        .unwrap();
    let missing = d.join("missing.nii");
    let blocked = d.join("t.csv").join("under_a_file.json");
    let (seg, table) = (s(&seg), s(&table));

    let cases: Vec<(Vec<String>, i32)> = vec![
        (vec!["ric", "--in", &s(&missing)], 2),
        (vec!["extract", "--in", &s(&missing)], 2),
        (vec!["extract", "--cohort", &s(&d.join("nowhere"))], 2),
        (vec!["cv", "--table", &s(&d.join("none.csv")), "--model", "baseline"], 2),
        (vec!["fuse", "--in", &seg, &s(&missing), "--out", &s(&d.join("o.nii"))], 2),
        (vec!["train", "--table", &table, "--model", "baseline", "--out", &s(&blocked)], 2),
        (vec!["cv", "--config", &s(&d.join("no.json")), "--table", &table, "--model", "baseline"], 2),
        (vec!["ric", "--in", &s(&junk)], 1),
        (vec!["ric", "--in", &s(&empty)], 1),
        (vec!["cv", "--table", &s(&ragged), "--model", "baseline"], 1),
        (vec!["cv", "--table", &s(&no_schema), "--model", "baseline"], 1),
        (vec!["cv", "--table", &table, "--model", "nosuch"], 1),
        (vec!["cv", "--table", &table, "--model", "baseline", "--k", "50"], 1),
        (vec!["cv", "--table", &table, "--model", "baseline", "--k", "1"], 1),
        (vec!["cv", "--table", &table, "--model", "baseline", "--t-low", "500", "--t-high", "400"], 1),
        (vec!["cv", "--table", &table, "--spec", &s(&bad_json)], 1),
        (vec!["cv", "--config", &s(&bad_json), "--table", &table, "--model", "baseline"], 1),
        (vec!["cv", "--table", &table, "--model", "baseline", "--unknown-flag"], 1),
        (vec!["cv", "--table", &table, "--model", "baseline", "--k", "ten"], 1),
        (vec!["select", "--table", &table, "--sizes", "99"], 1),
        (vec!["select", "--table", &table, "--threshold", "1.5"], 1),
        (vec!["fuse", "--in", &seg, &s(&small), "--out", &s(&d.join("o.nii"))], 1),
        (vec!["fuse", "--in", &seg, &seg, "--weights", "1,-1", "--out", &s(&d.join("o.nii"))], 1),
        (vec!["postproc", "--in", &seg, "--out", &s(&d.join("p.nii")), "--z-et", "0.5"], 1),
        (vec!["postproc", "--in", &seg, "--out", &s(&d.join("p.nii")), "--connectivity", "8"], 1),
        (vec!["segmetrics", "--pred", &seg, "--ref", &s(&small)], 1),
        (vec!["--threads", "0", "ric", "--in", &seg], 1),
        (vec!["study", "--out", &s(&d.join("st"))], 1),
        (vec!["nosuchcommand"], 1),
        (vec![], 1),
        (vec!["--help"], 0),
        (vec!["cv", "--help"], 0),
        (vec!["--version"], 0),
    ]
    .into_iter()
    .map(|(v, c)| (v.into_iter().map(String::from).collect(), c))
    .collect();

    for (args, want) in &cases {
        let r = run(args);
        assert_eq!(r.code, *want, "{args:?}\nstdout: {}\nstderr: {}", r.stdout, r.stderr);
        if *want != 0 {
            assert!(!r.stderr.is_empty(), "{args:?}: no message on stderr");
        }
        if *want != 0 && !args.is_empty() && !args.iter().any(|a| a == "nosuchcommand") {
            let mut with_json = args.clone();
            with_json.insert(0, "--json".into());
            let r = run(&with_json);
            assert_eq!(r.code, *want, "{with_json:?}");
            let j: Value = serde_json::from_str(&r.stdout).unwrap_or_else(|e| panic!("{with_json:?}: {e}: {}", r.stdout));
            assert_eq!(j["exit_code"], *want);
            assert!(j["error"].is_string());
        }
    }
}

#[test]
fn errors_name_the_command_and_subject() {
    let dir = tempfile::tempdir().unwrap();
    // a structure map with edema only has no tumour core
    let mut v = make_phantom(&PhantomSpec::new([9.0, 7.0, 6.0], 0.5, [25, 21, 19], [1.0; 3])).unwrap();
    let d = v.geometry().dims;
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                if v.get(x, y, z) != 0 {
                    v.set(x, y, z, 2);
                }
            }
        }
    }
    let p = dir.path().join("P17").join("seg.nii.gz");
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    write_label_volume(&p, &v).unwrap();
    let r = run(&["extract", "--in", &s(&p)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("extract") && r.stderr.contains("P17"), "{}", r.stderr);
}

/// Fixtures shared by the fuzz cases.
struct Fixture {
    _dir: tempfile::TempDir,
    seg: String,
    seg2: String,
    table: String,
    model: String,
    out: String,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let seg = write_phantom(dir.path(), "a", 0.5);
    let seg2 = write_phantom(dir.path(), "b", 0.8);
    let table = dir.path().join("t.csv");
    write_table(&table, 24, 5);
    let model = dir.path().join("m.json");
    let r = run(&["train", "--table", &s(&table), "--model", "invasiveness", "--out", &s(&model)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let out = s(&dir.path().join("out"));
    Fixture {
        seg: s(&seg),
        seg2: s(&seg2),
        table: s(&table),
        model: s(&model),
        out,
        _dir: dir,
    }
}

/// Base invocation plus optional extras for one command; extras may be invalid.
fn command_case(f: &Fixture, cmd: usize) -> (Vec<String>, Vec<Vec<String>>) {
    let v = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let o = |name: &str| format!("{}/{name}", f.out);
    match cmd {
        0 => (
            v(&["extract", "--in", &f.seg]),
            vec![v(&["--no-texture"]), v(&["--roi", "wt"]), v(&["--age", "50"]), v(&["--out", &o("f.csv")]), v(&["--no-ric", "--no-morphology", "--no-texture"])],
        ),
        1 => (v(&["ric", "--in", &f.seg]), vec![v(&["--tol", "1e-5"]), v(&["--tol", "-1"]), v(&["--in", "/nonexistent.nii"])]),
        2 => (
            v(&["select", "--table", &f.table, "--trees", "10", "--folds", "3"]),
            vec![v(&["--sizes", "1,2"]), v(&["--one-at-a-time"]), v(&["--importance", "permutation"]), v(&["--gtr-only"]), v(&["--seed", "4"]), v(&["--folds", "99"])],
        ),
        3 => (
            v(&["train", "--table", &f.table, "--out", &o("m.json")]),
            vec![v(&["--model", "baseline"]), v(&["--model", "invasiveness"]), v(&["--model", "bogus"]), v(&["--gtr-only"]), v(&["--t-low", "500"])],
        ),
        4 => (v(&["predict", "--model", &f.model, "--table", &f.table]), vec![v(&["--out", &o("p.csv")]), v(&["--t-high", "100"]), v(&["--model", &f.table])]),
        5 => (
            v(&["evaluate", "--model", &f.model, "--table", &f.table]),
            vec![v(&["--split", "holdout"]), v(&["--gtr-only"]), v(&["--out", &o("e.json")]), v(&["--t-low", "-3"])],
        ),
        6 => (
            v(&["cv", "--table", &f.table, "--model", "invasiveness"]),
            vec![v(&["--k", "3"]), v(&["--k", "0"]), v(&["--seed", "11"]), v(&["--gtr-only"]), v(&["--model", "baseline"]), v(&["--out", &o("cv.json")])],
        ),
        7 => (
            v(&["fuse", "--in", &f.seg, &f.seg2, &f.seg, "--out", &o("fz.nii.gz")]),
            vec![v(&["--weights", "1,2,1"]), v(&["--weights", "1"]), v(&["--out", &o("fz.nii")])],
        ),
        8 => (
            v(&["postproc", "--in", &f.seg, "--out", &o("pp.nii.gz")]),
            vec![v(&["--min-wt", "10"]), v(&["--no-repair"]), v(&["--connectivity", "6"]), v(&["--et-floor", "0"]), v(&["--z-et", "1"])],
        ),
        9 => (v(&["segmetrics", "--pred", &f.seg, "--ref", &f.seg2]), vec![v(&["--hd95"]), v(&["--ref", &f.seg])]),
        _ => (
            v(&["study", "--features-csv", &f.table, "--out", &o("study"), "--seed", "1"]),
            vec![v(&["--k", "3"]), v(&["--all-resections"]), v(&["--k", "1"])],
        ),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn json_output_always_parses(cmd in 0usize..11, picks in proptest::collection::vec(any::<bool>(), 6), threads in prop_oneof![Just(None), Just(Some(1usize)), Just(Some(3))]) {
        thread_local!(static FIX: Fixture = fixture());
        let (code, stdout, args) = FIX.with(|f| {
            let (mut args, extras) = command_case(f, cmd);
            for (extra, on) in extras.iter().zip(&picks) {
                if *on {
                    args.extend(extra.iter().cloned());
                }
            }
            args.insert(0, "--json".into());
            if let Some(t) = threads {
                args.insert(0, t.to_string());
                args.insert(0, "--threads".into());
            }
            let r = run(&args);
            (r.code, r.stdout, args)
        });
        let j: Value = serde_json::from_str(&stdout).map_err(|e| TestCaseError::fail(format!("{args:?}: {e}\n{stdout}")))?;
        prop_assert!([0, 1, 2].contains(&code), "{:?}: exit {}", args, code);
        if code != 0 {
            prop_assert_eq!(&j["exit_code"], &Value::from(code));
        }
    }
}

const DOC: &str = "../../docs/cli.md";

fn render_reference() -> String {
    let mut doc = String::from(
        "# gliomics command-line reference\n\nGenerated from `--help`; refresh with `GLIOMICS_BLESS=1 cargo test -p gliomics-cli --test cli`.\n",
    );
    let mut sections = vec![vec!["--help".to_string()]];
    for sub in ["extract", "ric", "select", "train", "predict", "evaluate", "cv", "study", "fuse", "postproc", "segmetrics", "synth"] {
        sections.push(vec![sub.to_string(), "--help".to_string()]);
    }
    for args in sections {
        let r = run(&args);
        assert_eq!(r.code, 0, "{args:?}");
        let title = if args.len() == 1 { "gliomics".to_string() } else { format!("gliomics {}", args[0]) };
        doc.push_str(&format!("\n## {title}\n\n```text\n{}```\n", r.stdout));
    }
    doc
}

#[test]
fn flag_reference_matches_help_output() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(DOC);
    let fresh = render_reference();
    if std::env::var_os("GLIOMICS_BLESS").is_some() {
        fs::write(&path, &fresh).unwrap();
    }
    let stored = fs::read_to_string(&path).unwrap_or_default();
    assert!(stored == fresh, "docs/cli.md is stale; rerun with GLIOMICS_BLESS=1");
}
