// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use curriculum_core::corpus::{write_corpus, Corpus, Document, Stage};
use curriculum_core::gradstore::{write_dump, CheckpointGradients};

fn curric(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curric"))
        .current_dir(dir)
        .env_remove("CURRIC_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{stdout}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

fn setup(dir: &Path) {
    let docs: Vec<Document> = (0..80u64)
        .map(|i| {
            let stage = Stage::ALL[(i % 5) as usize];
            let words: Vec<String> = (0..4 + i % 9).map(|k| format!("w{}", (i + k * k) % 17)).collect();
            Document::new(i, format!("src{}", i % 5), stage, &words.join(" "))
        })
        .collect();
    let c = Corpus::new("toy", docs).unwrap();
    write_corpus(&c, dir.join("corpus.jsonl")).unwrap();
    fs::create_dir(dir.join("dumps")).unwrap();
    for t in 0..3u32 {
        let vals: Vec<f32> = (0..80 * 6)
            .map(|k| ((k as u32).wrapping_mul(2246822519).wrapping_add(t * 7919) % 2001) as f32 / 1000.0 - 1.0)
            .collect();
        let g = CheckpointGradients::new(t, (0..80).collect(), 6, vals).unwrap();
        write_dump(&g, dir.join(format!("dumps/ckpt{t}.gdmp"))).unwrap();
    }
    fs::write(dir.join("loss.csv"), "step,loss\n0,4\n100,3\n200,5\n").unwrap();
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);

    let out = ok(&curric(dir, &["influence", "--corpus", "corpus.jsonl", "--dumps", "dumps"]));
    assert!(out.contains("80 documents x 3 checkpoints"));
    ok(&curric(dir, &["scores", "--corpus", "corpus.jsonl"]));
    let out = ok(&curric(
        dir,
        &["build", "--all", "--corpus", "corpus.jsonl", "--seed", "7", "--block-size", "10", "--segments", "4", "--epochs", "3"],
    ));
    assert_eq!(out.lines().filter(|l| l.contains(" ok ")).count(), 14, "{out}");
    for name in ["C_desc", "C_50", "C_E_asc", "C_A", "C_source", "C_PPL"] {
        assert!(dir.join(format!("out/{name}.cman")).exists());
        assert_eq!(fs::read_to_string(dir.join(format!("out/{name}.validation.txt"))).unwrap(), "ok\n");
    }

    let out = ok(&curric(
        dir,
        &[
            "analyze", "--corpus", "corpus.jsonl", "--segments", "10", "--manifests", "out/C_desc.cman", "out/C_asc.cman",
            "--loss", "loss.csv",
        ],
    ));
    assert!(out.contains("C_desc           C_asc            mean -1.000000"), "{out}");
    let ratios = fs::read_to_string(dir.join("out/loss.loss_ratio.tsv")).unwrap();
    assert!(ratios.contains("100\t3\t0.75"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(json["tau"][0]["per_epoch"], serde_json::json!([-1.0, -1.0, -1.0]));

    ok(&curric(dir, &["plot"]));
    for f in ["composition_C_desc.svg", "jsd.svg", "loss.svg"] {
        assert!(fs::read_to_string(dir.join("out").join(f)).unwrap().starts_with("<svg"));
    }
}

#[test]
fn self_comparison_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    ok(&curric(dir, &["build", "--strategy", "C_rand", "--corpus", "corpus.jsonl", "--epochs", "2"]));
    fs::copy(dir.join("out/C_rand.cman"), dir.join("copy.cman")).unwrap();
    ok(&curric(dir, &["analyze", "--corpus", "corpus.jsonl", "--segments", "5", "--manifests", "out/C_rand.cman", "copy.cman"]));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(json["jsd"][0]["value"], serde_json::json!(0.0));
}

#[test]
fn config_env_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    fs::write(
        dir.join("run.toml"),
        "corpus = \"corpus.jsonl\"\nseed = 3\nout_dir = \"cfg-out\"\n[strategy]\nepochs = 2\nsegments = 3\n",
    )
    .unwrap();
    let shown = ok(&curric(dir, &["config", "--config", "run.toml"]));
    assert!(shown.contains("seed = 3"));

    ok(&curric(dir, &["build", "--config", "run.toml", "--strategy", "C_source"]));
    assert!(dir.join("cfg-out/C_source.cman").exists());

    let out = Command::new(env!("CARGO_BIN_EXE_curric"))
        .current_dir(dir)
        .env("CURRIC_OUT_DIR", dir.join("env-out"))
        .args(["build", "--config", "run.toml", "--strategy", "C_rand"])
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.join("env-out/C_rand.cman").exists());

    // influence-based strategies need Φ
    let out = curric(dir, &["build", "--config", "run.toml", "--strategy", "C_E", "--direction", "desc"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("requires an influence matrix"));

    let out = curric(dir, &["build", "--config", "run.toml", "--strategy", "C_E"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("needs a direction"));

    fs::write(dir.join("bad.toml"), "corpus = \"nope.jsonl\"\n").unwrap();
    let out = curric(dir, &["config", "--config", "bad.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}

#[test]
fn corpus_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    let out = ok(&curric(dir, &["corpus", "inspect", "--corpus", "corpus.jsonl"]));
    assert!(out.starts_with("corpus toy: 80 documents"));
    let out = ok(&curric(dir, &["corpus", "equitoken", "--corpus", "corpus.jsonl", "--length", "5"]));
    assert!(out.contains("toy-equitoken5.jsonl"));
    let out = ok(&curric(dir, &["corpus", "stratify", "--corpus", "corpus.jsonl", "--words-per-stage", "40", "--seed", "1"]));
    assert!(out.contains("toy-stratified"));
    let out = curric(dir, &["corpus", "stratify", "--corpus", "corpus.jsonl", "--words-per-stage", "100000"]);
    assert!(!out.status.success());
}
