use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use syntempo::model::Vocab;
use syntempo::{Hyper, Model, TemplateLibrary};
use tempfile::TempDir;

fn syntempo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_syntempo")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let err = String::from_utf8(o.stderr.clone()).unwrap();
    let last = err.lines().last().expect("error line");
    serde_json::from_str(last).expect("machine-readable error")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tiny_model(dir: &Path, zero_head: bool) -> std::path::PathBuf {
    let sv = Vocab::build(["the", "cat", "sat"]);
    let tv = Vocab::build(["(", ")", "ROOT", "S", "NP", "VP"]);
    let mut h = Hyper::new(sv, tv);
    h.d_model = 8;
    h.n_layers = 1;
    h.n_heads = 2;
    h.ffn_hidden = 16;
    let mut m = Model::new(h, 5).unwrap();
    if zero_head {
        m.update_params(|p| {
            p.head_weight.fill(0.0);
            p.head_bias.fill(0.0);
        });
    }
    let path = dir.join("model.ckpt");
    m.save_checkpoint(&path).unwrap();
    path
}

#[test]
fn help_lists_every_flag() {
    let expected: &[(&str, &[&str])] = &[
        ("index", &["--targets", "--sources", "--max-levels", "--out", "--threads", "--config"]),
        (
            "train",
            &[
                "--dataset", "--library", "--oracle", "--out", "--log", "--dev", "--dev-fraction", "--d-model",
                "--layers", "--heads", "--ffn-hidden", "--max-sentence-len", "--max-template-len",
                "--no-head-bias", "--lambda-mse", "--lambda-rank", "--k", "--lr", "--weight-decay", "--epochs",
                "--batch-size", "--warmup-fraction", "--seed", "--threads",
            ],
        ),
        ("score", &["--checkpoint", "--source", "--template"]),
        ("retrieve", &["--checkpoint", "--library", "--input", "--cache", "--out", "--k"]),
        ("retrieve-diverse", &["--checkpoint", "--library", "--input", "--d", "--beta", "--strict-dts", "--replay-log"]),
        ("eval", &["--paraphrases", "--references", "--templates", "--embeddings", "--alpha", "--full-depth-ted"]),
        ("synth", &["--out-dir", "--sources", "--vocab", "--seed", "--planted-seed"]),
    ];
    for (sub, flags) in expected {
        let o = syntempo(&[sub, "--help"]);
        assert!(o.status.success(), "{sub} --help failed");
        let text = stdout(&o);
        for f in *flags {
            assert!(text.contains(f), "{sub} --help lacks {f}");
        }
    }
}

#[test]
fn zero_head_scores_one_half() {
    let dir = TempDir::new().unwrap();
    let ckpt = tiny_model(dir.path(), true);
    let o = syntempo(&["score", "--checkpoint", p(&ckpt), "--source", "the cat sat", "--template", "(ROOT (S (NP) (VP)))"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "0.500000\n");
}

#[test]
fn retrieve_single_entry_library() {
    let dir = TempDir::new().unwrap();
    let ckpt = tiny_model(dir.path(), false);
    let lib = TemplateLibrary::build_from_corpus(["(ROOT (S (NP) (VP)))"], None::<Vec<String>>, 4).unwrap();
    let lib_path = dir.path().join("lib.jsonl");
    lib.save(&lib_path).unwrap();
    let input = dir.path().join("in.txt");
    fs::write(&input, "the cat sat\n").unwrap();
    let o = syntempo(&["retrieve", "--checkpoint", p(&ckpt), "--library", p(&lib_path), "--input", p(&input), "--k", "1"]);
    assert!(o.status.success());
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["id"], 0);
    assert_eq!(lines[0]["rank"], 1);
    assert_eq!(lines[0]["template"], lib.entries()[0].tree.to_bracket());

    let o = syntempo(&["retrieve", "--checkpoint", p(&ckpt), "--library", p(&lib_path), "--input", p(&input), "--k", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");
}

#[test]
fn exit_codes() {
    let o = syntempo(&["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["code"], 2);

    let o = syntempo(&["score", "--checkpoint", "/nonexistent/model.ckpt", "--source", "a", "--template", "(A)"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "data");

    let dir = TempDir::new().unwrap();
    let targets = dir.path().join("t.txt");
    fs::write(&targets, "(ROOT (S (NP) (VP))\n").unwrap();
    let o = syntempo(&["index", "--targets", p(&targets), "--out", p(&dir.path().join("lib.jsonl"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("line 1"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("run.json");
    let out = dir.path().join("syn");
    fs::write(&config, format!(r#"{{"out_dir": {:?}, "sources": 30, "seed": 4}}"#, p(&out))).unwrap();
    let o = syntempo(&["--config", p(&config), "synth"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("targets.txt")).unwrap().lines().count(), 30);

    let o = syntempo(&["synth", "--config", p(&config), "--sources", "12"]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(out.join("targets.txt")).unwrap().lines().count(), 12);

    fs::write(&config, r#"{"sources": [1]}"#).unwrap();
    let o = syntempo(&["--config", p(&config), "synth", "--out-dir", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn small_pipeline() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let syn = d.join("syn");
    let lib = d.join("lib.jsonl");
    let ckpt = d.join("m.ckpt");
    let log = d.join("log.jsonl");
    assert!(syntempo(&["synth", "--out-dir", p(&syn), "--sources", "120", "--seed", "9"]).status.success());
    let o = syntempo(&[
        "index",
        "--targets",
        p(&syn.join("targets.txt")),
        "--sources",
        p(&syn.join("sources.txt")),
        "--out",
        p(&lib),
    ]);
    assert!(o.status.success());
    let o = syntempo(&[
        "train", "--dataset", p(&syn.join("dataset.jsonl")), "--library", p(&lib), "--oracle",
        p(&syn.join("oracle.jsonl")), "--out", p(&ckpt), "--log", p(&log), "--d-model", "8", "--layers", "1",
        "--heads", "2", "--ffn-hidden", "16", "--epochs", "2", "--no-head-bias",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(summary["dev_pcc"].is_number());
    assert_eq!(fs::read_to_string(&log).unwrap().lines().count(), 2);
    let model = Model::load_checkpoint(&ckpt).unwrap();
    assert!(!model.hyper().head_bias);

    let input = d.join("in.txt");
    fs::write(&input, "nn1 vbd2 .\ndt0 nn3 vbz1 nn4 .\n").unwrap();
    let replay = d.join("replay.jsonl");
    let o = syntempo(&[
        "retrieve-diverse", "--checkpoint", p(&ckpt), "--library", p(&lib), "--input", p(&input), "--d", "4",
        "--beta", "0.3", "--replay-log", p(&replay),
    ]);
    assert!(o.status.success());
    let out: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(out.len(), 8);
    for q in 0..2 {
        let scores: Vec<f64> = out.iter().filter(|r| r["query"] == q).map(|r| r["score"].as_f64().unwrap()).collect();
        assert_eq!(scores.len(), 4);
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    }
    let events = fs::read_to_string(&replay).unwrap();
    assert!(events.lines().filter(|l| l.contains(r#""kind":"push""#)).count() == 8);

    let cache = d.join("cache.bin");
    let run = |with_cache: bool| {
        let mut args = vec!["retrieve", "--checkpoint", p(&ckpt), "--library", p(&lib), "--input", p(&input), "--k", "5"];
        if with_cache {
            args.extend(["--cache", p(&cache)]);
        }
        stdout(&syntempo(&args))
    };
    let direct = run(false);
    let cached = run(true);
    assert!(cache.exists());
    let reused = run(true);
    let ids = |s: &str| -> Vec<u64> { s.lines().map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["id"].as_u64().unwrap()).collect() };
    assert_eq!(ids(&direct), ids(&cached));
    assert_eq!(cached, reused);
}

#[test]
fn eval_report() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let sets = d.join("sets.jsonl");
    fs::write(
        &sets,
        concat!(
            r#"{"source": "a b c d", "paraphrases": ["a b c d", "a b c d"], "paraphrase_trees": ["(S (NP) (VP))", "(S (VP))"]}"#,
            "\n",
            r#"{"source": "e f g h", "paraphrases": ["e f g h", "x y z w"], "paraphrase_trees": ["(S (NP) (VP))", "(S)"]}"#,
            "\n"
        ),
    )
    .unwrap();
    let refs = d.join("refs.txt");
    fs::write(&refs, "a b c d\ne f g h\n").unwrap();
    let templates = d.join("templates.txt");
    fs::write(&templates, "(S (NP) (VP))\n(S (NP) (VP))\n").unwrap();
    let emb = d.join("emb.jsonl");
    fs::write(
        &emb,
        concat!(r#"{"sentence": "a b c d", "vector": [1, 0]}"#, "\n", r#"{"sentence": "e f g h", "vector": [0, 2]}"#, "\n"),
    )
    .unwrap();
    let o = syntempo(&[
        "eval", "--paraphrases", p(&sets), "--references", p(&refs), "--templates", p(&templates), "--embeddings", p(&emb),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!((r["bleu_s"].as_f64().unwrap() - 100.0).abs() < 1e-9);
    assert!((r["ibleu"].as_f64().unwrap() - 60.0).abs() < 1e-9);
    assert_eq!(r["ted"].as_f64().unwrap(), 0.0);
    assert!((r["rep_rate"].as_f64().unwrap() - 25.0).abs() < 1e-9);
    assert!((r["cos_s"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    fs::write(&refs, "only one\n").unwrap();
    let o = syntempo(&["eval", "--paraphrases", p(&sets), "--references", p(&refs)]);
    assert_eq!(o.status.code(), Some(3));
}
