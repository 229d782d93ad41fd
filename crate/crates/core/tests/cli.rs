mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mxsim_core::mask::{self, BinaryMask, StageMap, StageMapPacked};
use mxsim_core::schedule::PrecisionSchedule;
use mxsim_core::workload::{derive_dilation_plan, LayerGraph};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn mxsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mxsim")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_mask(dir: &Path, name: &str, m: &BinaryMask) -> String {
    let p = dir.join(name);
    std::fs::write(&p, m.to_pbm()).unwrap();
    p.to_str().unwrap().to_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn maskgen_prints_ratios_and_writes_maps() {
    let tmp = tempfile::tempdir().unwrap();
    let graph = repo().join("configs/toy-unet.json");
    let large = repo().join("configs/masks/large.pbm");
    let out = tmp.path().join("maps");
    let o = mxsim(&["maskgen", "--mask", path(&large), "--graph", path(&graph), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().starts_with("level 0 64x64: S3 0.4287"), "{text}");
    assert_eq!(text.lines().count(), 3);

    let json = StageMap::from_json(&std::fs::read_to_string(out.join("level1.json")).unwrap()).unwrap();
    let packed = StageMap::from_packed(&std::fs::read(out.join("level1.stg2")).unwrap()).unwrap();
    assert_eq!(json, packed);
    assert_eq!((json.height(), json.width()), (32, 32));

    // Empty and full masks.
    let g: LayerGraph = LayerGraph::load(&graph).unwrap();
    let empty = write_mask(tmp.path(), "empty.pbm", &BinaryMask::new(64, 64).unwrap());
    let o = mxsim(&["maskgen", "--mask", &empty, "--graph", path(&graph), "--out", path(&out)]);
    assert!(stdout(&o).starts_with("level 0 64x64: S3 0.0000 S2 0.0000 S1 0.0000 S0 1.0000"));
    let full = write_mask(tmp.path(), "full.pbm", &BinaryMask::full(64, 64).unwrap());
    let o = mxsim(&["maskgen", "--mask", &full, "--graph", path(&graph), "--out", path(&out)]);
    assert!(stdout(&o).starts_with("level 0 64x64: S3 1.0000 S2 0.0000 S1 0.0000 S0 0.0000"));
    assert_eq!(derive_dilation_plan(&g).levels.len(), 3);
}

#[test]
fn bad_inputs_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let graph = repo().join("configs/toy-unet.json");
    let bad = tmp.path().join("bad.pbm");
    std::fs::write(&bad, "P1\n2 2\n1 0 1").unwrap();
    let o = mxsim(&["maskgen", "--mask", path(&bad), "--graph", path(&graph), "--out", path(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error"));

    let o = mxsim(&["maskgen", "--mask", "/nonexistent.pbm", "--graph", path(&graph), "--out", path(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));

    // Mask size does not match the graph.
    let small = write_mask(tmp.path(), "small.pbm", &BinaryMask::full(8, 8).unwrap());
    let o = mxsim(&["simulate", "--graph", path(&graph), "--mask", &small, "--out", path(&tmp.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(1));

    let cfg = tmp.path().join("g.json");
    std::fs::write(&cfg, r#"{"levels": [{"grid": [8, 8], "conv3x3": 1, "channels": 30}]}"#).unwrap();
    let o = mxsim(&["simulate", "--graph", path(&cfg), "--mask", &small, "--out", path(&tmp.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("levels[0].channels"));

    let o = mxsim(&["quantcheck", "--precision", "3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn quantcheck_reports_zero_mismatches() {
    for p in ["2", "4", "8"] {
        let o = mxsim(&["quantcheck", "--seed", "11", "--precision", p, "--blocks", "2000"]);
        assert!(o.status.success());
        let text = stdout(&o);
        assert!(text.contains("bitserial_mismatches 0"), "{text}");
        assert!(text.contains("bound_violations 0"), "{text}");
    }
}

fn simulate(tmp: &Path, mask: &str, out: &str, extra: &[&str]) -> String {
    let graph = repo().join("configs/toy-unet.json");
    let mut args = vec!["simulate", "--graph", path(&graph), "--mask", mask, "--out", out];
    args.extend_from_slice(extra);
    let o = Command::new(env!("CARGO_BIN_EXE_mxsim")).args(&args).current_dir(tmp).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

#[test]
fn simulate_matches_closed_form_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let small = repo().join("configs/masks/small.pbm");
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    let summary = simulate(tmp.path(), path(&small), path(&a), &[]);
    simulate(tmp.path(), path(&small), path(&b), &[]);
    assert!(summary.starts_with("latency "), "{summary}");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&a).unwrap()).unwrap();
    let got = report["summary"]["compute_speedup_vs_mxint8"].as_f64().unwrap();

    // Closed form over independently derived stage counts.
    let graph = LayerGraph::load(repo().join("configs/toy-unet.json")).unwrap();
    let main = mask::load_mask(&small).unwrap();
    let mut level_mask = main.clone();
    let plan = derive_dilation_plan(&graph);
    let mut counts = Vec::new();
    for (i, entry) in plan.levels.iter().enumerate() {
        if i > 0 {
            level_mask = common::downsample_oracle(&level_mask);
        }
        let stages = common::stages_oracle(&level_mask, entry.conv_count, entry.stage1_extra);
        let mut c = [0u64; 4];
        stages.iter().for_each(|s| c[s.index()] += 1);
        counts.push(c);
    }
    let layers = graph.layers();
    let sched = PrecisionSchedule::default();
    let base: u64 = (0..50)
        .map(|_| {
            let c: Vec<[u64; 4]> = graph.levels.iter().map(|l| [0, 0, 0, l.tokens() as u64]).collect();
            common::closed_form_mpu_cycles(&layers, &c, &sched.phase_tables[0], 1024)
        })
        .sum();
    let ours: u64 = (0..50u32)
        .map(|t| common::closed_form_mpu_cycles(&layers, &counts, sched.table_at(t).unwrap(), 1024))
        .sum();
    let predicted = base as f64 / ours as f64;
    assert!(
        (got - predicted).abs() / predicted <= 0.01,
        "simulated {got} vs closed form {predicted}"
    );
}

#[test]
fn full_mask_gives_unit_compute_speedup() {
    let tmp = tempfile::tempdir().unwrap();
    let full = write_mask(tmp.path(), "full.pbm", &BinaryMask::full(64, 64).unwrap());
    let out = tmp.path().join("r.json");
    simulate(tmp.path(), &full, path(&out), &[]);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report["summary"]["compute_speedup_vs_mxint8"].as_f64().unwrap(), 1.0);
    assert_eq!(report["summary"]["speedup_vs_mxint8"].as_f64().unwrap(), 1.0);
    // Every timestep costs exactly what the baseline costs.
    for s in report["timesteps"].as_array().unwrap() {
        assert_eq!(s["totals"], s["baseline"]);
    }
}

#[test]
fn all_mxint8_schedule_reproduces_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let sched = tmp.path().join("s.json");
    std::fs::write(&sched, r#"{"phase_tables": [["MXINT8","MXINT8","MXINT8","MXINT8"],["MXINT8","MXINT8","MXINT8","MXINT8"],["MXINT8","MXINT8","MXINT8","MXINT8"]]}"#).unwrap();
    let small = repo().join("configs/masks/small.pbm");
    let out = tmp.path().join("r.json");
    simulate(tmp.path(), path(&small), path(&out), &["--schedule", path(&sched)]);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report["totals"], report["baseline_totals"]);
}

#[test]
fn report_converts_to_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let small = repo().join("configs/masks/small.pbm");
    let json = tmp.path().join("r.json");
    simulate(tmp.path(), path(&small), path(&json), &["--hw", path(&repo().join("configs/hw-server.json"))]);
    let o = mxsim(&["report", "--input", path(&json), "--format", "csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("t,phase,refined,promoted_tokens,mpu_cycles"));
    assert_eq!(lines.count(), 50);

    // Round trip through the report command is byte-identical.
    let again = tmp.path().join("again.json");
    let o = mxsim(&["report", "--input", path(&json), "--out", path(&again)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&json).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn tampered_report_is_an_invariant_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/small-report.json");
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(src).unwrap()).unwrap();
    let e = v["totals"]["energy_pj"].as_u64().unwrap();
    v["totals"]["energy_pj"] = (e + 1).into();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_vec(&v).unwrap()).unwrap();
    let o = mxsim(&["report", "--input", path(&bad)]);
    assert_eq!(o.status.code(), Some(2));
}
