use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shotseg::attention::{write_dump, AttentionDims, AttentionDump, LabelClass, Span, SpanMap, VerdictQuery};
use shotseg::backend::stub::{StubReply, StubServer};
use shotseg::decoding::PredictionDump;
use shotseg::model::load_manifest;
use shotseg::pipeline::{segment_movie, ChapterDump, SegmentConfig};
use shotseg::prompting::{FrameStore, PromptBuilder, PromptOptions, PromptTemplate};
use shotseg::simkit::{MockBackend, NoiseParams, RecordingBackend};

fn shotseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shotseg"))
        .args(args)
        .env_remove("SHOTSEG_ENDPOINT")
        .env_remove("SHOTSEG_API_KEY")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = shotseg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    shotseg(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small synthetic corpus under `<tmp>/data`.
fn synth(tmp: &Path, movies: usize, shots: usize) -> PathBuf {
    let data = tmp.join("data");
    let n = movies.to_string();
    let k = shots.to_string();
    ok(&["synth", "--out", s(&data), "--num-movies", &n, "--shots-per-movie", &k, "--synth-seed", "4"]);
    data
}

#[test]
fn mock_round_trip_is_perfect_and_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 3, 45);
    let preds = tmp.path().join("preds");
    let again = tmp.path().join("again");
    ok(&["segment", "-m", s(&data), "--out", s(&preds)]);
    ok(&["segment", "-m", s(&data), "--out", s(&again)]);
    for entry in fs::read_dir(&preds).unwrap() {
        let p = entry.unwrap().path();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes, fs::read(again.join(p.file_name().unwrap())).unwrap());
        let dump = PredictionDump::from_json(&bytes).unwrap();
        let movie = load_manifest(data.join(format!("{}.manifest.json", dump.movie_id))).unwrap();
        assert_eq!(dump.decisions, movie.labels().unwrap());
    }

    let report_dir = tmp.path().join("report");
    let stdout = ok(&["evaluate", "-m", s(&data), "-p", s(&preds), "--out", s(&report_dir)]);
    assert!(stdout.contains("AP 1.0000"), "{stdout}");
    let report: serde_json::Value = serde_json::from_slice(&fs::read(report_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["segmentation"]["ap"], 1.0);
    assert_eq!(report["segmentation"]["best_f1"], 1.0);

    let sweep_dir = tmp.path().join("sweep");
    ok(&["sweep", "-m", s(&data), "-p", s(&preds), "--out", s(&sweep_dir)]);
    for f in ["pr.csv", "pr.svg", "f1_threshold.svg", "positions.csv", "report.json"] {
        assert!(sweep_dir.join(f).exists(), "{f} missing");
    }
}

#[test]
fn chaptering_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 2, 40);
    let preds = tmp.path().join("chap");
    ok(&["chapters", "-m", s(&data), "--out", s(&preds)]);
    let stdout = ok(&["evaluate", "-m", s(&data), "-p", s(&preds)]);
    assert!(stdout.contains("chapter F1 1.0000, tIoU 1.0000"), "{stdout}");
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(code(&["segment", "-m", "/nonexistent/x.manifest.json", "--out", s(&out)]), 3);
    assert_eq!(code(&["segment", "--out", s(&out)]), 2);
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"concurrency": 0}"#).unwrap();
    assert_eq!(code(&["--config", s(&cfg), "show-config"]), 2);
    fs::write(&cfg, "{not json").unwrap();
    assert_eq!(code(&["--config", s(&cfg), "show-config"]), 2);

    let data = synth(tmp.path(), 1, 20);
    let dead = ["--backend", "http", "--endpoint", "http://127.0.0.1:9/v1/chat/completions"];
    let mut args = vec!["segment", "-m", s(&data), "--out", s(&out)];
    args.extend(dead);
    assert_eq!(code(&args), 4);

    let server = StubServer::start().unwrap();
    server.set_default(StubReply::text("Shot 0: Yes").without_logprobs());
    let url = server.url();
    assert_eq!(code(&["segment", "-m", s(&data), "--out", s(&out), "--backend", "http", "--endpoint", &url]), 5);
    assert_eq!(code(&["health", "--endpoint", &url]), 5);
    server.set_default(StubReply::text("Yes"));
    assert_eq!(code(&["health", "--endpoint", &url]), 0);

    let preds = tmp.path().join("p");
    ok(&["segment", "-m", s(&data), "--out", s(&preds)]);
    let other = synth(&tmp.path().join("other"), 1, 20);
    let m = other.join("synth_0000.manifest.json");
    let mut movie: serde_json::Value = serde_json::from_slice(&fs::read(&m).unwrap()).unwrap();
    movie["shots"].as_array_mut().unwrap().pop();
    fs::write(&m, movie.to_string()).unwrap();
    assert_eq!(code(&["evaluate", "-m", s(&other), "-p", s(&preds)]), 6);
}

#[test]
fn http_dumps_match_mock_dumps() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 2, 33);
    let mock_out = tmp.path().join("mock");
    let http_out = tmp.path().join("http");
    ok(&["segment", "-m", s(&data), "--out", s(&mock_out), "--p-flip", "0.2", "--noise-seed", "7", "--frames-per-shot", "2"]);

    let server = StubServer::start().unwrap();
    let noise = NoiseParams { p_flip: 0.2, seed: 7, ..Default::default() };
    let rt = tokio::runtime::Runtime::new().unwrap();
    let options = PromptOptions { frames_per_shot: 2, ..Default::default() };
    for i in 0..2 {
        let movie = load_manifest(data.join(format!("synth_{i:04}.manifest.json"))).unwrap();
        let rec = RecordingBackend::new(MockBackend::new(noise.clone()).with_movie(&movie, vec![]));
        let builder = PromptBuilder::new(PromptTemplate::default(), options.clone(), FrameStore::new(&data));
        rt.block_on(segment_movie(&rec, &builder, &movie, &SegmentConfig::default())).unwrap();
        for (id, tr) in rec.recorded() {
            server.script(id, StubReply::from_transcript(tr));
        }
    }
    let url = server.url();
    ok(&["segment", "-m", s(&data), "--out", s(&http_out), "--backend", "http", "--endpoint", &url, "--frames-per-shot", "2"]);
    for i in 0..2 {
        let name = format!("synth_{i:04}.pred.json");
        assert_eq!(fs::read(mock_out.join(&name)).unwrap(), fs::read(http_out.join(&name)).unwrap());
    }
}

#[test]
fn scripted_chapter_replies() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 1, 8);
    let server = StubServer::start().unwrap();
    let url = server.url();
    let out = tmp.path().join("c");
    let run = |reply: &str| {
        server.set_default(StubReply::text(reply));
        ok(&["chapters", "-m", s(&data), "--out", s(&out), "--backend", "http", "--endpoint", &url]);
        ChapterDump::from_json(&fs::read(out.join("synth_0000.chapters.pred.json")).unwrap()).unwrap()
    };
    let d = run("00:00:00 - A");
    assert_eq!(d.chapters.len(), 1);
    assert_eq!((d.chapters[0].start_s, d.chapters[0].title.as_str()), (0.0, "A"));
    let d = run("00:00:05 - A\n00:00:02 - B");
    assert_eq!(d.chapters.len(), 1);
    assert_eq!(d.failures.len(), 1);
}

#[test]
fn attention_report_writes_shares() {
    let tmp = tempfile::tempdir().unwrap();
    let dims = AttentionDims { layers: 2, heads: 2, queries: 3, keys: 10 };
    let dump = AttentionDump::new(dims, vec![0.1; dims.len()]).unwrap();
    let span = |start, end, label, shot| Span { start, end, label, shot };
    let spans = SpanMap {
        spans: vec![
            span(0, 6, LabelClass::Visual, Some(0)),
            span(6, 8, LabelClass::Subtitle, Some(0)),
            span(8, 9, LabelClass::Actor, Some(0)),
            span(9, 10, LabelClass::Output, None),
        ],
        verdict_queries: vec![VerdictQuery { shot: 0, query: 2 }],
    };
    let path = tmp.path().join("a.attn");
    write_dump(&path, &dump, &spans).unwrap();
    let out = tmp.path().join("r");
    let stdout = ok(&["attention-report", "--dump", s(&path), "--out", s(&out)]);
    assert!(stdout.contains("Visual    0.600 |"), "{stdout}");
    for f in ["attention.json", "attention_shares.csv", "attention_per_shot.csv"] {
        assert!(out.join(f).exists());
    }
    fs::write(&path, b"garbage").unwrap();
    assert_eq!(code(&["attention-report", "--dump", s(&path)]), 3);
}

#[test]
fn flags_override_config_and_env() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, r#"{"concurrency": 3, "window": {"focus_len": 6}, "http": {"endpoint": "http://cfg"}}"#).unwrap();
    let show = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_shotseg"));
        cmd.args(["--config", s(&cfg), "show-config"]).args(extra).env_remove("SHOTSEG_ENDPOINT");
        if let Some(e) = env {
            cmd.env("SHOTSEG_ENDPOINT", e);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success());
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()
    };
    let v = show(&[], None);
    assert_eq!((v["concurrency"].as_u64(), v["window"]["focus_len"].as_u64()), (Some(3), Some(6)));
    assert_eq!(v["window"]["context_len"], 20);
    assert_eq!(v["http"]["endpoint"], "http://cfg");
    let v = show(&["--concurrency", "5", "--scheme", "concise-sampled"], Some("http://env"));
    assert_eq!(v["concurrency"], 5);
    assert_eq!(v["http"]["endpoint"], "http://env");
    assert_eq!(v["scheme"]["kind"], "concise_sampled");
    assert_eq!(v["scheme"]["runs"], 5);

    let dumped = tmp.path().join("dumped.json");
    fs::write(&dumped, serde_json::to_vec(&v).unwrap()).unwrap();
    let w = {
        let out = shotseg(&["--config", s(&dumped), "show-config"]);
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()
    };
    assert_eq!(v, w);
}

#[test]
fn validate_reports_bad_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 1, 10);
    assert!(ok(&["validate", "-m", s(&data)]).contains(": ok"));
    assert!(ok(&["validate", "-m", s(&data), "--mode", "chaptering"]).contains(": ok"));
    let bad = tmp.path().join("bad.manifest.json");
    fs::write(&bad, r#"{"movie_id": "b", "shots": [{"shot_id": 1, "frames": ["x.png"]}]}"#).unwrap();
    let out = shotseg(&["validate", "-m", s(&bad)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("non-consecutive"));
}
