//! End-to-end tests of the `bbpe` binary: exit codes, artifacts, formats.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bbpe::serialization::save_family;
use bbpe::trainer::MergeRule;
use bbpe::vocab::{Provenance, TokenizerFamily, Vocabulary};

fn bbpe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bbpe"))
}

fn run(args: &[&str]) -> Output {
    bbpe().args(args).output().expect("binary runs")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Structured bytes with enough repetition to train a few hundred merges.
fn synthetic_binary(seed: u8, len: usize) -> Vec<u8> {
    let mut data = Vec::with_capacity(len);
    data.extend_from_slice(b"\x7fELF\x02\x01\x01\x00\x00\x00\x00\x00\x00\x00\x00\x00");
    let mut state = seed as u32 | 1;
    while data.len() < len {
        match (state >> 3) % 5 {
            0 => data.extend_from_slice(&[0x00; 16]),
            1 => data.extend_from_slice(b"/usr/lib/x86_64-linux-gnu/libc.so.6\x00"),
            2 => data.extend_from_slice(&[0x48, 0x89, 0xE5, 0x48, 0x83, 0xEC, 0x10]),
            3 => data.extend_from_slice(&[0x55, 0x48, 0x89, 0xE5, 0x5D, 0xC3]),
            _ => {
                // A touch of spread-out noise, still low entropy per chunk.
                data.push((state % 7) as u8);
                data.push(0x00);
            }
        }
        state = state.wrapping_mul(1664525).wrapping_add(1013904223);
    }
    data.truncate(len);
    data
}

fn write_corpus(dir: &Path, files: usize, bytes_each: usize) -> PathBuf {
    let manifest = dir.join("corpus.jsonl");
    let mut lines = String::from("# synthetic corpus\n");
    for i in 0..files {
        let path = dir.join(format!("bin{i:02}.bin"));
        fs::write(&path, synthetic_binary(i as u8 + 1, bytes_each)).unwrap();
        lines.push_str(&format!(
            "{{\"path\": \"{}\", \"platform\": \"linux\", \"format\": \"elf\", \"arch\": \"x86_64\", \"label\": \"benign\"}}\n",
            path.display()
        ));
    }
    fs::write(&manifest, lines).unwrap();
    manifest
}

#[test]
fn train_encode_decode_verify_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path(), 4, 40_000);
    let family_dir = dir.path().join("family");

    let output = run(&[
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        family_dir.to_str().unwrap(),
        "--sizes",
        "280,320",
        "--prefix",
        "tok",
    ]);
    assert!(
        output.status.success(),
        "train failed: {}",
        stderr_of(&output)
    );
    let summary: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(summary["ingest"]["files"], 4);
    assert_eq!(summary["training"]["requested_merges"], 320 - 263);
    assert!(family_dir.join("tok-280.json").exists());
    assert!(family_dir.join("tok-320.json").exists());
    assert!(family_dir.join("family.json").exists());

    // verify-family on a freshly sliced family passes.
    let output = run(&["verify-family", family_dir.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stderr_of(&output));

    // encode then decode reproduces the input bytes exactly.
    let sample = dir.path().join("bin00.bin");
    let tokenizer = family_dir.join("tok-320.json");
    let stream = dir.path().join("sample.tok");
    let restored = dir.path().join("restored.bin");
    let output = run(&[
        "encode",
        "--tokenizer",
        tokenizer.to_str().unwrap(),
        "--in",
        sample.to_str().unwrap(),
        "--out",
        stream.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    let stream_bytes = fs::read(&stream).unwrap();
    assert_eq!(&stream_bytes[..4], b"BBPE");
    assert_eq!(stream_bytes[5], 2, "small vocab uses 16-bit ids");

    let output = run(&[
        "decode",
        "--tokenizer",
        tokenizer.to_str().unwrap(),
        "--in",
        stream.to_str().unwrap(),
        "--out",
        restored.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    assert_eq!(fs::read(&restored).unwrap(), fs::read(&sample).unwrap());

    // Text mode round-trips too.
    let text_stream = dir.path().join("sample.txt");
    let restored_text = dir.path().join("restored2.bin");
    assert!(run(&[
        "encode",
        "--tokenizer",
        tokenizer.to_str().unwrap(),
        "--in",
        sample.to_str().unwrap(),
        "--out",
        text_stream.to_str().unwrap(),
        "--text",
    ])
    .status
    .success());
    let ids_text = fs::read_to_string(&text_stream).unwrap();
    assert!(ids_text.lines().all(|l| l.parse::<u32>().is_ok()));
    assert!(run(&[
        "decode",
        "--tokenizer",
        tokenizer.to_str().unwrap(),
        "--in",
        text_stream.to_str().unwrap(),
        "--out",
        restored_text.to_str().unwrap(),
        "--text",
    ])
    .status
    .success());
    assert_eq!(fs::read(&restored_text).unwrap(), fs::read(&sample).unwrap());

    // Decoding with the wrong tokenizer is an input error (exit 2).
    let other = family_dir.join("tok-280.json");
    let output = run(&[
        "decode",
        "--tokenizer",
        other.to_str().unwrap(),
        "--in",
        stream.to_str().unwrap(),
        "--out",
        restored.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("digest"));

    // analyze, bench, and inspect all run against the artifacts.
    let output = run(&["analyze", "--tokenizer", tokenizer.to_str().unwrap()]);
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout).into_owned();
    assert!(text.contains("length"));
    assert!(text.contains("instruction patterns"));

    let output = run(&[
        "analyze",
        "--family",
        family_dir.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(output.status.success());
    let rows: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);

    let output = run(&[
        "bench",
        "--manifest",
        manifest.to_str().unwrap(),
        "--family",
        family_dir.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    let doc: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(doc["report"]["overall"]["n"], 4);
    assert!(doc["comparison"]["relative_improvement"].as_f64().unwrap() >= 0.0);

    let output = run(&[
        "inspect",
        "--tokenizer",
        other.to_str().unwrap(),
        "--tokenizer",
        tokenizer.to_str().unwrap(),
        "--in",
        sample.to_str().unwrap(),
        "--limit",
        "32",
    ]);
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).contains("vocab 320"));
}

#[test]
fn train_on_empty_manifest_exits_2_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("empty.jsonl");
    fs::write(&manifest, "# nothing here\n").unwrap();
    let output = run(&[
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(
        stderr_of(&output).contains("no training data after entropy filtering"),
        "stderr: {}",
        stderr_of(&output)
    );
}

#[test]
fn fully_filtered_corpus_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // One chunk of maximum-entropy data: every byte value equally frequent.
    let mut noisy = Vec::new();
    for _ in 0..32 {
        noisy.extend(0..=255u8);
    }
    let path = dir.path().join("noise.bin");
    fs::write(&path, &noisy).unwrap();
    let manifest = dir.path().join("m.jsonl");
    fs::write(
        &manifest,
        format!("{{\"path\": \"{}\"}}\n", path.display()),
    )
    .unwrap();
    let output = run(&[
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--sizes",
        "280",
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("no training data after entropy filtering"));
}

#[test]
fn verify_family_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let rule = |rank: u32, left: u32, right: u32| MergeRule {
        rank,
        left,
        right,
        result: 256 + rank,
    };
    // Two members whose merge lists are not prefixes of each other.
    let small = Vocabulary::from_merges(vec![rule(0, 0x41, 0x42)]).unwrap();
    let large =
        Vocabulary::from_merges(vec![rule(0, 0x43, 0x44), rule(1, 0x45, 0x46)]).unwrap();
    let family = TokenizerFamily {
        members: vec![small, large],
        provenance: Provenance::unknown(),
    };
    save_family(&family, dir.path(), "broken").unwrap();

    let output = run(&["verify-family", dir.path().to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(3));
    assert!(stderr_of(&output).contains("diverge"));
    assert!(String::from_utf8_lossy(&output.stdout).contains("FAIL"));
}

#[test]
fn usage_errors_exit_1() {
    // Unknown flag.
    let output = run(&["train", "--bogus"]);
    assert_eq!(output.status.code(), Some(1));
    // analyze without a target.
    let output = run(&["analyze"]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr_of(&output).contains("--tokenizer or --family"));
    // inspect with one tokenizer.
    let dir = tempfile::tempdir().unwrap();
    let tok = dir.path().join("t.json");
    bbpe::serialization::save_tokenizer(&Vocabulary::base_alphabet(), &tok).unwrap();
    let input = dir.path().join("x.bin");
    fs::write(&input, b"x").unwrap();
    let output = run(&[
        "inspect",
        "--tokenizer",
        tok.to_str().unwrap(),
        "--in",
        input.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn nonexistent_manifest_exits_2() {
    let output = run(&[
        "bench",
        "--manifest",
        "/no/such/manifest.jsonl",
        "--tokenizer",
        "/no/such/tok.json",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["train", "--help"]).status.code(), Some(0));
}

#[test]
fn train_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path(), 2, 30_000);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let output = run(&[
            "train",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--sizes",
            "300",
        ]);
        assert!(output.status.success(), "{}", stderr_of(&output));
    }
    let a = fs::read(out_a.join("bbpe-300.json")).unwrap();
    let b = fs::read(out_b.join("bbpe-300.json")).unwrap();
    assert_eq!(a, b, "artifacts must be byte-identical across runs");
    let fa = fs::read(out_a.join("family.json")).unwrap();
    let fb = fs::read(out_b.join("family.json")).unwrap();
    assert_eq!(fa, fb);
}
