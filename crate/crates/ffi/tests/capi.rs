use std::ffi::{CStr, CString};
use std::ptr;

use mxsim_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mxsim_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn quantize_dot_round_trip() {
    let values: Vec<f64> = (0..32).map(|i| (i as f64 - 16.0) / 8.0).collect();
    let mut elems = [0i8; 32];
    let mut exp = 0u8;
    unsafe {
        assert_eq!(mxsim_quantize_block(values.as_ptr(), 8, elems.as_mut_ptr(), &mut exp), MxsimStatus::Ok);
        let mut back = [0f64; 32];
        assert_eq!(mxsim_dequantize_block(elems.as_ptr(), exp, 8, back.as_mut_ptr()), MxsimStatus::Ok);
        // Multiples of 1/8 up to 2 are exact at MXINT8.
        assert_eq!(back.to_vec(), values);

        let ones = [1i8; 32];
        let mut value = 0f32;
        let mut cycles = 0u32;
        // Activations all 1 at scale 2^0, weights all 1 at scale 2^0: sum is 32.
        let st = mxsim_block_dot(ones.as_ptr(), 127, 4, ones.as_ptr(), 127, &mut value, &mut cycles);
        assert_eq!(st, MxsimStatus::Ok);
        assert_eq!((value, cycles), (32.0, 2));
    }
}

#[test]
fn errors_map_to_status_codes() {
    let values = [0f64; 32];
    let mut elems = [0i8; 32];
    let mut exp = 0u8;
    unsafe {
        let st = mxsim_quantize_block(values.as_ptr(), 3, elems.as_mut_ptr(), &mut exp);
        assert_eq!(st, MxsimStatus::Range);
        assert!(last_error().contains("precision bits"));

        let st = mxsim_quantize_block(ptr::null(), 8, elems.as_mut_ptr(), &mut exp);
        assert_eq!(st, MxsimStatus::NullOrInvalidArgument);

        let mut bad = [0f64; 32];
        bad[3] = f64::NAN;
        let st = mxsim_quantize_block(bad.as_ptr(), 8, elems.as_mut_ptr(), &mut exp);
        assert_eq!(st, MxsimStatus::InvalidValue);

        // Element 3 does not fit MXINT2.
        let big = [3i8; 32];
        let mut out = [0f64; 32];
        assert_eq!(mxsim_dequantize_block(big.as_ptr(), 127, 2, out.as_mut_ptr()), MxsimStatus::InvalidValue);

        // A successful call clears the message.
        assert_eq!(mxsim_dequantize_block(elems.as_ptr(), 127, 8, out.as_mut_ptr()), MxsimStatus::Ok);
        assert_eq!(last_error(), "");
    }
}

#[test]
fn stage_map_lifecycle() {
    let (h, w) = (5usize, 5usize);
    let mut mask = vec![0u8; h * w];
    mask[12] = 1;
    unsafe {
        let mut map = ptr::null_mut();
        assert_eq!(mxsim_stage_map_build(mask.as_ptr(), h, w, 1, 1, &mut map), MxsimStatus::Ok);
        let (mut hh, mut ww) = (0, 0);
        assert_eq!(mxsim_stage_map_dims(map, &mut hh, &mut ww), MxsimStatus::Ok);
        assert_eq!((hh, ww), (5, 5));

        let mut codes = vec![0u8; 25];
        assert_eq!(mxsim_stage_map_codes(map, codes.as_mut_ptr(), 25), MxsimStatus::Ok);
        assert_eq!(codes[12], 3);
        assert_eq!(codes[6], 2);
        assert_eq!(codes[0], 1);
        assert_eq!(mxsim_stage_map_codes(map, codes.as_mut_ptr(), 24), MxsimStatus::Shape);

        let mut mask3 = [0u8; 9];
        mask3[0] = 1;
        let mut small = ptr::null_mut();
        assert_eq!(mxsim_stage_map_build(mask3.as_ptr(), 3, 3, 0, 0, &mut small), MxsimStatus::Ok);
        let mut promote = [1u8; 9];
        promote[8] = 0;
        assert_eq!(mxsim_stage_map_update_semantic(small, promote.as_ptr(), 9), MxsimStatus::Ok);
        let mut c = vec![0u8; 9];
        mxsim_stage_map_codes(small, c.as_mut_ptr(), 9);
        assert_eq!(c, vec![3, 1, 1, 1, 1, 1, 1, 1, 0]);

        mxsim_stage_map_free(map);
        mxsim_stage_map_free(small);
        mxsim_stage_map_free(ptr::null_mut());
    }
}

#[test]
fn schedule_queries() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(mxsim_schedule_default(&mut s), MxsimStatus::Ok);
        let mut bits = 0u8;
        let cases = [(0, 2, 8), (9, 2, 4), (17, 1, 4), (18, 1, 2), (49, 3, 8), (0, 0, 2)];
        for (t, stage, want) in cases {
            assert_eq!(mxsim_schedule_precision_at(s, t, stage, &mut bits), MxsimStatus::Ok);
            assert_eq!(bits, want, "t {t} stage {stage}");
        }
        assert_eq!(mxsim_schedule_precision_at(s, 50, 0, &mut bits), MxsimStatus::Range);
        assert_eq!(mxsim_schedule_precision_at(s, 0, 4, &mut bits), MxsimStatus::Range);
        mxsim_schedule_free(s);

        let bad = CString::new(r#"{"downgrade_points": [20, 10]}"#).unwrap();
        assert_eq!(mxsim_schedule_from_json(bad.as_ptr(), &mut s), MxsimStatus::Config);
        let good = CString::new(r#"{"total_steps": 6, "downgrade_points": [2, 4]}"#).unwrap();
        assert_eq!(mxsim_schedule_from_json(good.as_ptr(), &mut s), MxsimStatus::Ok);
        mxsim_schedule_free(s);
    }
}

#[test]
fn simulate_and_export() {
    let graph = CString::new(
        r#"{"levels": [{"grid": [8, 8], "conv3x3": 1, "channels": 32, "attention": true}], "timesteps": 6}"#,
    )
    .unwrap();
    let mut rows = vec![vec![0u8; 8]; 8];
    rows[4][4] = 1;
    let mask = CString::new(json_rows(&rows)).unwrap();
    let sched = CString::new(r#"{"total_steps": 6, "downgrade_points": [2, 4]}"#).unwrap();
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(mxsim_schedule_from_json(sched.as_ptr(), &mut s), MxsimStatus::Ok);
        let mut report = ptr::null_mut();
        let st = mxsim_simulate_json(graph.as_ptr(), mask.as_ptr(), ptr::null(), s, &mut report);
        assert_eq!(st, MxsimStatus::Ok, "{}", last_error());
        let (mut lat, mut comp) = (0.0, 0.0);
        assert_eq!(mxsim_report_speedup(report, &mut lat, &mut comp), MxsimStatus::Ok);
        assert!(comp > 1.0 && comp <= 4.0, "{comp}");
        assert!(lat >= 1.0);

        let mut json = ptr::null_mut();
        assert_eq!(mxsim_report_to_json(report, &mut json), MxsimStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        assert!(text.contains("\"schema\": \"mxsim-report/1\""));
        mxsim_string_free(json);
        mxsim_report_free(report);

        // The default schedule has 50 steps, the graph only 6.
        let st = mxsim_simulate_json(graph.as_ptr(), mask.as_ptr(), ptr::null(), ptr::null(), &mut report);
        assert_eq!(st, MxsimStatus::Config);
        let garbage = CString::new("P1\n2 2\n1 1 1").unwrap();
        let st = mxsim_simulate_json(graph.as_ptr(), garbage.as_ptr(), ptr::null(), s, &mut report);
        assert_eq!(st, MxsimStatus::Parse);
        mxsim_schedule_free(s);
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/mxsim.h");
    let source = include_str!("../src/lib.rs");
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for handle in ["MxsimStageMap", "MxsimSchedule", "MxsimReport"] {
        assert!(header.contains(&format!("typedef struct {handle} {handle};")));
    }
}

fn json_rows(rows: &[Vec<u8>]) -> String {
    let rows: Vec<String> = rows
        .iter()
        .map(|r| format!("[{}]", r.iter().map(u8::to_string).collect::<Vec<_>>().join(",")))
        .collect();
    format!("[{}]", rows.join(","))
}

/// Compiles and links the C example against the static library when a C
/// compiler is on the path.
#[test]
fn c_example_builds_and_runs() {
    use std::path::PathBuf;
    use std::process::Command;

    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // tests run from target/<profile>/deps; the static library sits one level up.
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    let lib = lib_dir.join("libmxsim_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let out = tempfile_path("smoke");
    let status = Command::new("cc")
        .arg(dir.join("examples/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success());
    let text = String::from_utf8(run.stdout).unwrap();
    assert!(text.contains("in 2 cycles"), "{text}");
    assert!(text.contains("MXINT2"), "{text}");
    let _ = std::fs::remove_file(out);
}

fn tempfile_path(stem: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("mxsim-{stem}-{}", std::process::id()))
}
