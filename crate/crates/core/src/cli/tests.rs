use std::collections::HashMap;

use clap::CommandFactory;

use super::schema::doc_drift;
use super::*;

const SPEC_COMMANDS: [&str; 20] = [
    "data-segment",
    "data-split-sentences",
    "data-sample-prompts",
    "data-ingest",
    "data-stats",
    "data-synth",
    "data-split",
    "embed-train",
    "embed-finetune",
    "embed-retrofit",
    "kb-match",
    "kb-paths",
    "kb-histogram",
    "train",
    "transfer",
    "eval",
    "ensemble",
    "probe-hypothesis-only",
    "report-gains",
    "grad-check",
];

fn mednli(out: &Path, args: &[&str]) -> i32 {
    let mut argv: Vec<String> = vec!["mednli".into()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.push("--out".into());
    argv.push(out.display().to_string());
    run(argv)
}

#[test]
fn every_subcommand_is_wired_and_described() {
    let clap_names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
    let described: Vec<&str> = COMMANDS.iter().map(|c| c.name).collect();
    assert_eq!(described, SPEC_COMMANDS);
    for name in SPEC_COMMANDS {
        assert!(clap_names.iter().any(|c| c == name), "{name}");
    }
}

#[test]
fn docs_match_schema() {
    for info in COMMANDS {
        let (undocumented, stale) = doc_drift(info);
        assert!(undocumented.is_empty() && stale.is_empty(), "{}: {undocumented:?} {stale:?}", info.name);
    }
}

#[test]
fn describe_train_mentions_patience_default() {
    let text = describe("train").unwrap();
    assert!(text.contains("train.patience = 5"), "{text}");
    assert!(text.contains("--set KEY=VALUE"));
}

#[test]
fn describe_unknown_lists_valid_subcommands() {
    let err = describe("trian").unwrap_err();
    assert_eq!(exit_code(&err), EXIT_CONFIG);
    let msg = err.to_string();
    for name in SPEC_COMMANDS {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn every_key_in_exactly_one_describe_output() {
    let mut seen: HashMap<String, usize> = HashMap::new();
    for info in COMMANDS {
        let text = describe(info.name).unwrap();
        for (key, _) in flatten_defaults(&(info.defaults)()) {
            let qualified = format!("{}.{}", info.name, key);
            assert!(text.contains(&format!("  {qualified} = ")), "{qualified}");
        }
        for line in text.lines() {
            if let Some((k, _)) = line.trim_start().split_once(" = ") {
                if line.starts_with("  ") && !line.starts_with("   ") {
                    *seen.entry(k.to_string()).or_default() += 1;
                }
            }
        }
    }
    assert!(seen.len() > 100);
    for (k, n) in seen {
        assert_eq!(n, 1, "{k}");
    }
}

#[test]
fn describe_has_no_numbered_references() {
    for info in COMMANDS {
        let text = describe(info.name).unwrap().to_lowercase();
        let words: Vec<&str> = text.split_whitespace().collect();
        for w in words.windows(2) {
            let numbered = w[1].trim_matches(|c: char| !c.is_alphanumeric()).chars().all(|c| c.is_ascii_digit());
            assert!(!(matches!(w[0], "table" | "section" | "figure" | "fig" | "eq") && numbered), "{}: {w:?}", info.name);
        }
    }
}

#[test]
fn unknown_key_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"model": {"hiden": 3}}"#).unwrap();
    let err = resolve_config(&ExperimentConfig::default(), Some(&cfg), &[]).unwrap_err();
    assert!(err.to_string().contains("hiden"), "{err}");
    assert_eq!(exit_code(&err), EXIT_CONFIG);
    let code = mednli(&dir.path().join("o"), &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
    assert_eq!(mednli(&dir.path().join("o"), &["train", "--set", "patience=0"]), EXIT_CONFIG);
    assert_eq!(mednli(&dir.path().join("o"), &["no-such-command"]), EXIT_CONFIG);
}

#[test]
fn merge_switches_enum_variants() {
    let mut base = serde_json::to_value(ExperimentConfig::default()).unwrap();
    merge_json(&mut base, serde_json::json!({"source": {"dir": "data/x"}, "model": {"hidden": 7}}));
    let cfg: ExperimentConfig = serde_json::from_value(base).unwrap();
    assert_eq!(cfg.source, crate::harness::DataSource::Dir("data/x".into()));
    assert_eq!(cfg.model.hidden, 7);
    assert_eq!(cfg.model.mlp, vec![128]);
}

const SMALL_TRAIN: &[&str] = &[
    "--set",
    "model.architecture=bow",
    "--set",
    "model.embedding_dim=8",
    "--set",
    "model.mlp=[8]",
    "--set",
    "model.trainable_embeddings=true",
    "--set",
    "seeds=[1,2]",
    "--set",
    "max_epochs=3",
    "--set",
    "name=small",
];

#[test]
fn train_writes_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut args = vec!["train"];
    args.extend_from_slice(SMALL_TRAIN);
    assert_eq!(mednli(&a, &args), EXIT_OK);
    assert_eq!(mednli(&b, &args), EXIT_OK);
    for f in [
        "small/1/run.json",
        "small/2/run.json",
        "small/report.json",
        "config.resolved.json",
    ] {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert_eq!(x, y, "{f}");
    }
    assert!(a.join("small/1/best.ckpt").exists());
    let resolved: ExperimentConfig =
        serde_json::from_str(&std::fs::read_to_string(a.join("config.resolved.json")).unwrap()).unwrap();
    assert_eq!(resolved.max_epochs, 3);

    // score the saved runs on the synthetic test split
    let data = dir.path().join("data");
    assert_eq!(mednli(&data, &["data-synth"]), EXIT_OK);
    let test = data.join("test.jsonl");
    let run1 = a.join("small/1");
    let ev = dir.path().join("eval");
    assert_eq!(
        mednli(
            &ev,
            &[
                "eval",
                "--set",
                &format!("run={}", run1.display()),
                "--set",
                &format!("dataset={}", test.display())
            ]
        ),
        EXIT_OK
    );
    let metrics: crate::harness::Metrics =
        serde_json::from_str(&std::fs::read_to_string(ev.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics.n, 24);
    let runs = format!("runs=[{:?},{:?}]", run1.display().to_string(), a.join("small/2").display().to_string());
    let en = dir.path().join("ens");
    assert_eq!(mednli(&en, &["ensemble", "--set", &runs, "--set", &format!("dataset={}", test.display())]), EXIT_OK);
    assert!(en.join("ensemble.json").exists());

    let gains = dir.path().join("gains");
    let report = a.join("small/report.json").display().to_string();
    assert_eq!(
        mednli(
            &gains,
            &[
                "report-gains",
                "--set",
                &format!("baseline={report}"),
                "--set",
                &format!("variants=[{report:?}]")
            ]
        ),
        EXIT_OK
    );
    let csv = std::fs::read_to_string(gains.join("gains.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with("+0.000000"), "{csv}");
}

#[test]
fn data_pipeline_commands() {
    let dir = tempfile::tempdir().unwrap();
    let notes = dir.path().join("notes");
    std::fs::create_dir_all(&notes).unwrap();
    std::fs::write(
        notes.join("n1.txt"),
        "CHIEF COMPLAINT: cough\nPAST MEDICAL HISTORY: Diabetes since 2004. History of pneumonia.\nMEDICATIONS: none\n",
    )
    .unwrap();
    let seg = dir.path().join("seg");
    assert_eq!(mednli(&seg, &["data-segment", "--set", &format!("input={}", notes.display())]), EXIT_OK);
    let sent = dir.path().join("sent");
    let sections = seg.join("sections.jsonl").display().to_string();
    assert_eq!(mednli(&sent, &["data-split-sentences", "--set", &format!("input={sections}")]), EXIT_OK);
    let cands = std::fs::read_to_string(sent.join("candidates.jsonl")).unwrap();
    assert_eq!(cands.lines().count(), 2, "{cands}");
    let prompts = dir.path().join("prompts");
    let cpath = sent.join("candidates.jsonl").display().to_string();
    assert_eq!(
        mednli(&prompts, &["data-sample-prompts", "--set", &format!("input={cpath}"), "--set", "n=2"]),
        EXIT_OK
    );
    assert_eq!(
        mednli(&prompts, &["data-sample-prompts", "--set", &format!("input={cpath}"), "--set", "n=3"]),
        EXIT_RUNTIME
    );
    let ann = dir.path().join("ann.jsonl");
    std::fs::write(
        &ann,
        concat!(
            r#"{"premise_id":"n1.0","hypothesis_entailment":"has diabetes","hypothesis_neutral":"has neuropathy","hypothesis_contradiction":"never had diabetes","annotator_id":"a"}"#,
            "\n",
            r#"{"premise_id":"n1.1","invalid":true,"annotator_id":"a"}"#,
            "\n"
        ),
    )
    .unwrap();
    let ing = dir.path().join("ing");
    assert_eq!(
        mednli(
            &ing,
            &[
                "data-ingest",
                "--set",
                &format!("prompts={}", prompts.join("prompts.txt").display()),
                "--set",
                &format!("annotations={}", ann.display())
            ]
        ),
        EXIT_OK
    );
    assert_eq!(std::fs::read_to_string(ing.join("pairs.jsonl")).unwrap().lines().count(), 3);
    assert_eq!(std::fs::read_to_string(ing.join("discards.jsonl")).unwrap().lines().count(), 1);

    let synth = dir.path().join("synth");
    assert_eq!(mednli(&synth, &["data-synth", "--set", "synth.train=30"]), EXIT_OK);
    let stats = dir.path().join("stats");
    assert_eq!(mednli(&stats, &["data-stats", "--set", &format!("dataset={}", synth.display())]), EXIT_OK);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(stats.join("stats.json")).unwrap()).unwrap();
    assert_eq!(report["splits"][0]["pairs"], 30);

    let split = dir.path().join("split");
    let train = synth.join("train.jsonl").display().to_string();
    assert_eq!(mednli(&split, &["data-split", "--set", &format!("input={train}")]), EXIT_OK);
    assert_eq!(
        mednli(
            &split,
            &[
                "data-split",
                "--set",
                &format!("input={train}"),
                "--set",
                "ratios=[0.5,0.5,0.5]"
            ]
        ),
        EXIT_CONFIG
    );
    assert_eq!(mednli(&dir.path().join("x"), &["data-stats"]), EXIT_CONFIG);

    let kb = dir.path().join("kb");
    assert_eq!(mednli(&kb, &["kb-match", "--set", &format!("dataset={train}")]), EXIT_OK);
    assert_eq!(mednli(&kb, &["kb-histogram", "--set", &format!("dataset={train}")]), EXIT_OK);
    assert_eq!(mednli(&kb, &["kb-paths"]), EXIT_OK);
    let paths: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(kb.join("paths.json")).unwrap()).unwrap();
    assert!(paths[0]["length"].is_u64());
    assert_eq!(mednli(&kb, &["kb-paths", "--set", r#"pairs=[["C020","nope"]]"#]), EXIT_RUNTIME);
}

#[test]
fn embedding_commands() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, "patient has pneumonia .\npatient denies diabetes .\nthe lung is clear .\n".repeat(5)).unwrap();
    let tr = dir.path().join("tr");
    let small = [
        "--set",
        "skipgram.dim=6",
        "--set",
        "skipgram.epochs=1",
        "--set",
        "skipgram.buckets=64",
    ];
    let mut args = vec!["embed-train", "--set"];
    let c = format!("corpus={}", corpus.display());
    args.push(&c);
    args.extend_from_slice(&small);
    assert_eq!(mednli(&tr, &args), EXIT_OK);
    let vectors = tr.join("vectors.txt").display().to_string();

    let ft = dir.path().join("ft");
    let init = format!("init={vectors}");
    let corpora = format!("corpora=[{:?}]", corpus.display().to_string());
    let mut args = vec!["embed-finetune", "--set", &init, "--set", &corpora];
    args.extend_from_slice(&small);
    assert_eq!(mednli(&ft, &args), EXIT_OK);
    let bad = ["embed-finetune", "--set", &init, "--set", &corpora, "--set", "skipgram.dim=7"];
    let code = mednli(&ft, &bad);
    assert_eq!(code, EXIT_CONFIG);

    let rf = dir.path().join("rf");
    assert_eq!(mednli(&rf, &["embed-retrofit", "--set", &format!("vectors={vectors}")]), EXIT_OK);
    let obj: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(rf.join("objective.json")).unwrap()).unwrap();
    let values: Vec<f64> = obj["objective"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    assert_eq!(
        mednli(
            &rf,
            &[
                "embed-retrofit",
                "--set",
                &format!("vectors={vectors}"),
                "--set",
                "retrofit.alpha=0"
            ]
        ),
        EXIT_CONFIG
    );
}

#[test]
fn grad_check_command() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mednli(dir.path(), &["grad-check", "--set", "instances=1"]), EXIT_OK);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("gradcheck.json")).unwrap()).unwrap();
    assert_eq!(report["failures"], 0);
}
