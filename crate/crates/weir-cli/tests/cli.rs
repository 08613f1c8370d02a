//! End-to-end checks of the installed binary: exit codes, artifact files,
//! and stdout shapes. Everything runs against the bundled scenarios or a
//! throwaway bundle in a temp directory.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::tempdir;

fn weir() -> Command {
    Command::new(env!("CARGO_BIN_EXE_weir"))
}

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn demo_scenario() -> PathBuf {
    scenarios_dir().join("demo-salmon/scenario.toml")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("terminated by signal")
}

#[test]
fn validate_accepts_the_bundled_demo() {
    let out = weir().arg("validate").arg(demo_scenario()).output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("ok: demo-salmon"), "stdout: {text}");
    assert!(text.contains("10 frames"), "stdout: {text}");
}

#[test]
fn validate_rejects_a_reserve_above_capacity() {
    let dir = tempdir().unwrap();
    write_bundle(dir.path(), 20.0);
    let out = weir()
        .arg("validate")
        .arg(dir.path().join("scenario.toml"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "stdout: {}", stdout(&out));
    assert!(
        stderr(&out).contains("reserve"),
        "stderr: {}",
        stderr(&out)
    );
}

#[test]
fn validate_rejects_malformed_toml() {
    let dir = tempdir().unwrap();
    std::fs::write(dir.path().join("scenario.toml"), "version = \n").unwrap();
    let out = weir()
        .arg("validate")
        .arg(dir.path().join("scenario.toml"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn run_writes_the_artifact_set_and_reruns_identically() {
    let dir = tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for target in [&a, &b] {
        let out = weir()
            .arg("run")
            .arg(demo_scenario())
            .arg("--out")
            .arg(target)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    for name in [
        "run_summary.toml",
        "slots.csv",
        "events.jsonl",
        "anomalies.jsonl",
        "final_graph.toml",
    ] {
        let first = std::fs::read(a.join(name)).unwrap();
        let second = std::fs::read(b.join(name)).unwrap();
        assert_eq!(first, second, "{name} differs between reruns");
    }
    let summary = std::fs::read_to_string(a.join("run_summary.toml")).unwrap();
    assert!(summary.contains("name = \"demo-salmon\""), "{summary}");
    assert!(summary.contains("frames_total = 10"), "{summary}");
}

#[test]
fn run_without_out_prints_the_summary() {
    let out = weir().arg("run").arg(demo_scenario()).output().unwrap();
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("[scenario]"), "stdout: {text}");
    assert!(text.contains("[metrics]"), "stdout: {text}");
}

#[test]
fn seed_override_lands_in_the_stamp_and_compare_flags_it() {
    let dir = tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let base = weir()
        .arg("run")
        .arg(demo_scenario())
        .arg("--out")
        .arg(&a)
        .output()
        .unwrap();
    assert_eq!(code(&base), 0);
    let reseeded = weir()
        .arg("run")
        .arg(demo_scenario())
        .arg("--seed")
        .arg("99")
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert_eq!(code(&reseeded), 0);
    let summary = std::fs::read_to_string(b.join("run_summary.toml")).unwrap();
    assert!(summary.contains("seed = 99"), "{summary}");

    let same = weir()
        .arg("compare")
        .arg(a.join("run_summary.toml"))
        .arg(a.join("run_summary.toml"))
        .output()
        .unwrap();
    assert_eq!(code(&same), 0);
    assert!(stdout(&same).contains("summaries identical"));

    let diff = weir()
        .arg("compare")
        .arg(a.join("run_summary.toml"))
        .arg(b.join("run_summary.toml"))
        .output()
        .unwrap();
    assert_eq!(code(&diff), 3, "stdout: {}", stdout(&diff));
    assert!(stdout(&diff).contains("scenario.seed"), "{}", stdout(&diff));
}

#[test]
fn compare_calls_out_different_inputs() {
    let dir = tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let demo = weir()
        .arg("run")
        .arg(demo_scenario())
        .arg("--out")
        .arg(&a)
        .output()
        .unwrap();
    assert_eq!(code(&demo), 0);
    let other = weir()
        .arg("run")
        .arg(scenarios_dir().join("eviction-refetch/scenario.toml"))
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert_eq!(code(&other), 0);
    let diff = weir()
        .arg("compare")
        .arg(a.join("run_summary.toml"))
        .arg(b.join("run_summary.toml"))
        .output()
        .unwrap();
    assert_eq!(code(&diff), 3);
    assert!(stdout(&diff).contains("input mismatch"), "{}", stdout(&diff));
}

#[test]
fn gen_trace_expands_a_generator_deterministically() {
    let dir = tempdir().unwrap();
    let generator = dir.path().join("gen.toml");
    std::fs::write(
        &generator,
        "kind = \"sine\"\nslots = 96\nslot_minutes = 15\namp_wh = 1.0\n\
         sunrise_slot = 24\nday_slots = 48\njitter = 0.1\njitter_seed = 5\n",
    )
    .unwrap();
    let (a, b) = (dir.path().join("a.trace"), dir.path().join("b.trace"));
    for target in [&a, &b] {
        let out = weir()
            .arg("gen-trace")
            .arg(&generator)
            .arg("--out")
            .arg(target)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    let first = std::fs::read_to_string(&a).unwrap();
    assert_eq!(first, std::fs::read_to_string(&b).unwrap());
    assert!(first.starts_with("slot_minutes=15 unit=wh\n"), "{first}");
    assert_eq!(first.lines().count(), 97, "header plus one line per slot");

    let invalid = weir().arg("gen-trace").arg(dir.path().join("missing.toml")).output().unwrap();
    assert_eq!(code(&invalid), 3, "missing file is an io failure");
}

#[test]
fn explain_narrates_an_escalated_frame() {
    let dir = tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let out = weir()
        .arg("run")
        .arg(demo_scenario())
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);

    let explain = weir()
        .arg("explain")
        .arg(run_dir.join("events.jsonl"))
        .arg("s02")
        .output()
        .unwrap();
    assert_eq!(code(&explain), 0, "stderr: {}", stderr(&explain));
    let text = stdout(&explain);
    assert!(text.contains("escalated"), "{text}");
    assert!(text.contains("reviewer rule 0"), "{text}");
    assert!(text.contains("delivered"), "{text}");

    let missing = weir()
        .arg("explain")
        .arg(run_dir.join("events.jsonl"))
        .arg("nope")
        .output()
        .unwrap();
    assert_eq!(code(&missing), 3);
    assert!(stderr(&missing).contains("nope"), "{}", stderr(&missing));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = weir().arg("frobnicate").output().unwrap();
    assert_eq!(code(&out), 4);
}

/// Write a tiny single-community bundle whose reserve is `b_safe` Wh against
/// a 10 Wh pack.
fn write_bundle(dir: &Path, b_safe: f64) {
    std::fs::write(
        dir.join("graph.toml"),
        "version = 1\ncore = \"core\"\n\n[[communities]]\nid = \"core\"\npinned = true\n\n\
         [[communities]]\nid = \"x\"\n\n[[nodes]]\nid = \"xe\"\nkind = \"entity\"\n\
         label = \"xe\"\ncommunity = \"x\"\n",
    )
    .unwrap();
    std::fs::write(dir.join("stream.jsonl"), "{\"format\":\"stream\",\"version\":1}\n").unwrap();
    std::fs::write(
        dir.join("scenario.toml"),
        format!(
            "version = 1\nname = \"tiny\"\nhorizon_slots = 4\nslot_minutes = 15\nseed = 1\n\
             graph = \"graph.toml\"\nstream = \"stream.jsonl\"\n\n\
             [energy.generator]\nkind = \"constant\"\namp_wh = 0.1\n\n\
             [power]\ncapacity_wh = 10.0\ninitial_soc_wh = 10.0\nb_safe_wh = {b_safe}\n\
             base_load_wh = 0.0\ne_pkt_wh = 1.0\n\n[policy]\nkind = \"adaptive\"\n"
        ),
    )
    .unwrap();
}
