use std::ffi::{c_char, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use rshdp_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { rshdp_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf.iter().take(n.min(255)).map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn three_state_data() -> Vec<f64> {
    // Deterministic blocks around 0, 6 and 12 with a small wobble.
    (0..240).map(|t| 6.0 * ((t / 40) % 3) as f64 + 0.1 * ((t * 7 % 11) as f64 - 5.0) / 5.0).collect()
}

unsafe fn config(pairs: &[(&str, &str)]) -> *mut RshdpConfig {
    let mut cfg = ptr::null_mut();
    assert_eq!(rshdp_config_new(&mut cfg), RshdpStatus::Ok);
    for (k, v) in pairs {
        let (k, v) = (CString::new(*k).unwrap(), CString::new(*v).unwrap());
        assert_eq!(rshdp_config_set(cfg, k.as_ptr(), v.as_ptr()), RshdpStatus::Ok, "{}", last_error());
    }
    cfg
}

const SMALL: &[(&str, &str)] = &[
    ("emission", "gaussian"),
    ("model", "s-hdp"),
    ("truncation", "6"),
    ("iters", "40"),
    ("burnin", "20"),
    ("thin", "5"),
    ("seed", "3"),
];

#[test]
fn fit_round_trip_recovers_blocks_and_is_deterministic() {
    unsafe {
        let y = three_state_data();
        let mut seq = ptr::null_mut();
        assert_eq!(rshdp_sequence_new(y.as_ptr(), y.len(), 1, &mut seq), RshdpStatus::Ok);
        assert_eq!(rshdp_sequence_len(seq), 240);
        let cfg = config(SMALL);
        let mut runs = [ptr::null_mut(), ptr::null_mut()];
        for r in runs.iter_mut() {
            assert_eq!(rshdp_fit(cfg, seq, r), RshdpStatus::Ok, "{}", last_error());
        }
        let t = rshdp_run_len(runs[0]);
        assert_eq!(t, 240);
        let mut z = [vec![0usize; t], vec![0usize; t]];
        for (r, z) in runs.iter().zip(z.iter_mut()) {
            assert_eq!(rshdp_run_modal_states(*r, z.as_mut_ptr(), t), RshdpStatus::Ok);
        }
        assert_eq!(z[0], z[1]);
        let n = rshdp_run_sweeps(runs[0]);
        assert_eq!(n, 40);
        let mut ll = [vec![0.0; n], vec![0.0; n]];
        for (r, ll) in runs.iter().zip(ll.iter_mut()) {
            assert_eq!(rshdp_run_trace(*r, ll.as_mut_ptr(), ptr::null_mut(), n), RshdpStatus::Ok);
        }
        assert_eq!(ll[0].iter().map(|v| v.to_bits()).collect::<Vec<_>>(), ll[1].iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        let truth: Vec<usize> = (0..240).map(|t| (t / 40) % 3).collect();
        let (mut acc, mut f1) = (0.0, 0.0);
        assert_eq!(rshdp_evaluate(z[0].as_ptr(), truth.as_ptr(), t, &mut acc, &mut f1), RshdpStatus::Ok);
        assert!(acc > 0.99 && f1 > 0.99, "acc {acc} f1 {f1}");
        for r in runs {
            rshdp_run_free(r);
        }
        rshdp_config_free(cfg);
        rshdp_sequence_free(seq);
    }
}

#[test]
fn errors_map_to_status_codes_with_messages() {
    unsafe {
        let cfg = config(&[]);
        let (k, v) = (CString::new("burnin").unwrap(), CString::new("lots").unwrap());
        assert_eq!(rshdp_config_set(cfg, k.as_ptr(), v.as_ptr()), RshdpStatus::Config);
        assert!(last_error().contains("burnin"), "{}", last_error());

        let toml = CString::new("iters = 10\nburnin = 50").unwrap();
        assert_eq!(rshdp_config_apply_toml(cfg, toml.as_ptr()), RshdpStatus::Ok);
        let y = [0.0, 1.0, 2.0, 3.0];
        let mut seq = ptr::null_mut();
        assert_eq!(rshdp_sequence_new(y.as_ptr(), 4, 1, &mut seq), RshdpStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(rshdp_fit(cfg, seq, &mut run), RshdpStatus::Config);
        assert!(run.is_null());

        let nan = [f64::NAN];
        let mut bad = ptr::null_mut();
        assert_ne!(rshdp_sequence_new(nan.as_ptr(), 1, 1, &mut bad), RshdpStatus::Ok);
        assert!(bad.is_null());

        assert_eq!(rshdp_fit(ptr::null(), seq, &mut run), RshdpStatus::NullPointer);
        assert_eq!(rshdp_sequence_new(ptr::null(), 3, 1, &mut bad), RshdpStatus::NullPointer);
        assert_eq!(rshdp_run_len(ptr::null()), 0);
        rshdp_config_free(cfg);
        rshdp_sequence_free(seq);
        rshdp_run_free(ptr::null_mut());
    }
}

#[test]
fn short_output_buffer_is_reported() {
    unsafe {
        let y = three_state_data();
        let mut seq = ptr::null_mut();
        assert_eq!(rshdp_sequence_new(y.as_ptr(), y.len(), 1, &mut seq), RshdpStatus::Ok);
        let cfg = config(SMALL);
        let mut run = ptr::null_mut();
        assert_eq!(rshdp_fit(cfg, seq, &mut run), RshdpStatus::Ok);
        let mut z = vec![0usize; 10];
        assert_eq!(rshdp_run_modal_states(run, z.as_mut_ptr(), z.len()), RshdpStatus::BufferTooSmall);
        assert!(last_error().contains("240"));
        rshdp_run_free(run);
        rshdp_config_free(cfg);
        rshdp_sequence_free(seq);
    }
}

#[test]
fn evaluate_hand_example_and_error_truncation() {
    unsafe {
        let pred = [5usize, 5, 7, 7];
        let truth = [0usize, 0, 1, 1];
        let (mut acc, mut f1) = (0.0, 0.0);
        assert_eq!(rshdp_evaluate(pred.as_ptr(), truth.as_ptr(), 4, &mut acc, &mut f1), RshdpStatus::Ok);
        assert_eq!((acc, f1), (1.0, 1.0));
        assert_eq!(rshdp_evaluate(pred.as_ptr(), truth.as_ptr(), 4, ptr::null_mut(), &mut f1), RshdpStatus::NullPointer);
        let mut tiny = [1 as c_char; 4];
        let full = rshdp_last_error(tiny.as_mut_ptr(), tiny.len());
        assert!(full > 3);
        assert_eq!(tiny[3], 0);
        assert_eq!(rshdp_last_error(ptr::null_mut(), 0), full);
    }
}

#[test]
fn version_matches_package() {
    let v = unsafe { std::ffi::CStr::from_ptr(rshdp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_declares_api_and_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rshdp.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "rshdp_version",
        "rshdp_last_error",
        "rshdp_sequence_new",
        "rshdp_sequence_free",
        "rshdp_config_new",
        "rshdp_config_set",
        "rshdp_config_apply_toml",
        "rshdp_fit",
        "rshdp_run_modal_states",
        "rshdp_run_trace",
        "rshdp_evaluate",
        "RSHDP_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(text.contains(f), "header lacks {f}");
    }
    if Command::new("cc").arg("--version").output().is_err() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"rshdp.h\"\nint main(void) { RshdpConfig *c = 0; return rshdp_config_new(&c) == RSHDP_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}
