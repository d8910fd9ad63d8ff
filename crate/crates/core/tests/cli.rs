//! End-to-end runs of the `coref-adapt` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SPEC: &str = r#"
domain = "DOMAIN"
documents = 6
min_length = 28
max_length = 36
entities_min = 2
entities_max = 3
mentions_min = 2
mentions_max = 3
shared_entity_vocab = 20
domain_entity_vocab = 20
lexicon_shift = SHIFT
singletons_annotated = true
"#;

const CONFIG: &str = r#"
[corpus]
synthetic_source = "source.toml"
synthetic_target = "target.toml"
dev_documents = 3
test_documents = 4

[encoder]
embedding_dim = 8
hidden_dim = 8
width_dim = 4

[mention_detector]
hidden_dim = 8

[antecedent_linker]
hidden_dim = 8

[training]
source_epochs = 2
target_epochs = 2

[metrics]
bootstrap_iterations = 20

[experiment]
seeds = 1
baseline = "base"

[[experiment.grid]]
name = "base"

[[experiment.grid]]
name = "mentions"
objectives = "cl_s,md_t"
fraction = 0.5
budget_mode = "time"
q = 0.5
"#;

const CONLL: &str = "\
#begin document (doc1); part 000
doc1 0 0 The (0
doc1 0 1 cat 0)
doc1 0 2 saw -
doc1 0 3 it (0)

doc1 0 4 Then -
doc1 0 5 a (1
doc1 0 6 dog 1)
doc1 0 7 left -
#end document
";

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let s = Sandbox { dir };
        s.put("source.toml", &SPEC.replace("DOMAIN", "src").replace("SHIFT", "0.0"));
        s.put("target.toml", &SPEC.replace("DOMAIN", "tgt").replace("SHIFT", "0.5"));
        s.put("run.toml", CONFIG);
        s
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn put(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_coref-adapt"))
            .args(args)
            .env("COREF_ADAPT_RUNS", self.path("runs"))
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.run(args);
        assert!(
            o.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        String::from_utf8(o.stdout).unwrap()
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Last stdout line of a run-producing command is its run directory.
fn run_dir(stdout: &str) -> PathBuf {
    PathBuf::from(stdout.lines().last().unwrap())
}

fn manifest_without_clock(dir: &Path) -> Value {
    let mut m: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert!(m["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    m.as_object_mut().unwrap().remove("wall_clock_seconds");
    m
}

#[test]
fn prepare_converts_conll_to_standoff() {
    let s = Sandbox::new();
    let input = s.put("in.conll", CONLL);
    let out = s.ok(&["prepare", "--format", "conll", "--input", input.to_str().unwrap(), "--output", &s.p("out.jsonl")]);
    assert!(out.contains("documents           1"), "{out}");
    assert!(out.contains("clusters            2"), "{out}");
    let stats = s.ok(&["prepare", "--format", "standoff", "--input", &s.p("out.jsonl")]);
    assert_eq!(stats, out);
}

#[test]
fn unbalanced_brackets_are_an_input_error_with_a_line_number() {
    let s = Sandbox::new();
    let input = s.put("bad.conll", &CONLL.replace("doc1 0 1 cat 0)", "doc1 0 1 cat -"));
    let o = s.run(&["prepare", "--format", "conll", "--input", input.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line "), "{}", stderr(&o));
}

#[test]
fn synthetic_prepare_is_reproducible() {
    let s = Sandbox::new();
    let args = |out: &str| {
        vec![
            "prepare".to_string(),
            "--format".into(),
            "synthetic".into(),
            "--spec".into(),
            s.p("target.toml"),
            "--seed".into(),
            "9".into(),
            "--output".into(),
            s.p(out),
        ]
    };
    let a: Vec<String> = args("a.jsonl");
    let b: Vec<String> = args("b.jsonl");
    s.ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    s.ok(&b.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(fs::read(s.path("a.jsonl")).unwrap(), fs::read(s.path("b.jsonl")).unwrap());
}

#[test]
fn evaluating_gold_against_itself_is_perfect() {
    let s = Sandbox::new();
    s.ok(&["prepare", "--format", "synthetic", "--spec", &s.p("target.toml"), "--output", &s.p("gold.jsonl")]);
    let out = s.ok(&["evaluate", "--gold", &s.p("gold.jsonl"), "--sys", &s.p("gold.jsonl")]);
    let records: Vec<Value> = out
        .lines()
        .filter(|l| l.starts_with('{'))
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!records.is_empty());
    for r in &records {
        for key in ["P", "R", "F1", "avg_f1"] {
            assert_eq!(r[key].as_f64(), Some(1.0), "{r}");
        }
    }
}

#[test]
fn budget_prints_the_time_equivalent_fraction() {
    let s = Sandbox::new();
    let out = s.ok(&["budget", "--coref-fraction", "0.5"]);
    assert!(out.contains("mention fraction 0.925"), "{out}");
    let o = s.run(&["budget", "--coref-fraction", "1.5"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_and_objective_mistakes_exit_with_input_code() {
    let s = Sandbox::new();
    let cfg = s.put("typo.toml", &format!("{CONFIG}\n[budget]\nspeedupp = 2.0\n"));
    let o = s.run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("speedupp"), "{}", stderr(&o));

    let o = s.run(&["train", "--config", &s.p("missing.toml")]);
    assert_eq!(code(&o), 2);

    let o = s.run(&["adapt", "--config", &s.p("run.toml"), "--checkpoint", &s.p("none.json"), "--objectives", "cl_x"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("cl_x"));

    let o = s.run(&["adapt", "--config", &s.p("run.toml"), "--checkpoint", &s.p("none.json"), "--objectives", "md_t"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let o = s.run(&["evaluate", "--gold", "x"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_then_adapt_is_reproducible_with_a_manifest() {
    let s = Sandbox::new();
    let cfg = s.p("run.toml");
    let t1 = run_dir(&s.ok(&["train", "--config", &cfg, "--seed", "3"]));
    let m1 = manifest_without_clock(&t1);
    let model1 = fs::read(t1.join("model.json")).unwrap();
    let t2 = run_dir(&s.ok(&["train", "--config", &cfg, "--seed", "3"]));
    assert_eq!(t1, t2);
    assert_eq!(manifest_without_clock(&t2), m1);
    assert_eq!(fs::read(t2.join("model.json")).unwrap(), model1);
    assert_eq!(m1["command"], "train");
    assert_eq!(m1["seed"], 3);
    for key in ["model.json", "train_report.json"] {
        assert!(m1["outputs"][key].is_string(), "{m1}");
    }
    let inputs = m1["inputs"].as_object().unwrap();
    assert!(inputs.keys().any(|k| k.ends_with("source.toml")), "{m1}");
    assert!(inputs.keys().any(|k| k.ends_with("target.toml")), "{m1}");

    let ckpt = t1.join("model.json");
    let o = s.run(&["adapt", "--config", &cfg, "--checkpoint", ckpt.to_str().unwrap(), "--objectives", "cl_t", "--freeze", "enc,md,al"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let adapt = |seed: &str| {
        run_dir(&s.ok(&[
            "adapt",
            "--config",
            &cfg,
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--objectives",
            "cl_s,md_t",
            "--q",
            "0.5",
            "--seed",
            seed,
        ]))
    };
    let a1 = adapt("4");
    let metrics1 = fs::read_to_string(a1.join("metrics.jsonl")).unwrap();
    let m = manifest_without_clock(&a1);
    let a2 = adapt("4");
    assert_eq!(manifest_without_clock(&a2), m);
    assert_eq!(fs::read_to_string(a2.join("metrics.jsonl")).unwrap(), metrics1);
    assert_eq!(metrics1.lines().count(), 2 * 4);
    // A different seed is a different run directory under the same hash.
    let a3 = adapt("5");
    assert_ne!(a3, a1);
    assert_eq!(a3.parent(), a1.parent());

    // The adapted checkpoint scores through `evaluate` as well.
    let gold = s.path("gold.jsonl");
    s.ok(&["prepare", "--format", "synthetic", "--spec", &s.p("target.toml"), "--output", gold.to_str().unwrap()]);
    let out = s.ok(&[
        "evaluate",
        "--gold",
        gold.to_str().unwrap(),
        "--checkpoint",
        a1.join("model.json").to_str().unwrap(),
        "--scheme",
        "with",
    ]);
    assert_eq!(out.lines().filter(|l| l.starts_with('{')).count(), 4);

    let silver = run_dir(&s.ok(&["tag-silver", "--config", &cfg, "--checkpoint", ckpt.to_str().unwrap(), "--q", "0.5"]));
    assert!(silver.join("silver.jsonl").exists());
}

#[test]
fn experiment_writes_results() {
    let s = Sandbox::new();
    let dir = run_dir(&s.ok(&["experiment", "--config", &s.p("run.toml")]));
    let jsonl = fs::read_to_string(dir.join("results.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 4);
    assert!(fs::read_to_string(dir.join("results.txt")).unwrap().contains("mentions"));
}
