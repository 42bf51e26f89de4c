use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use otfs_ffi::*;

fn last_error() -> String {
    let p = otfs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_precoder(kind: OtfsPrecoderKind, m: usize, n: usize) -> *mut OtfsPrecoder {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { otfs_precoder_new(kind, m, n, f64::NAN, &mut p) }, OtfsStatus::Ok);
    assert!(!p.is_null());
    p
}

#[test]
fn precoder_handle_lifecycle() {
    let p = new_precoder(OtfsPrecoderKind::ProposedFreqSel, 2, 2);
    assert_eq!(unsafe { otfs_precoder_size(p) }, 4);

    let mut v = vec![0.0; 2 * 16];
    assert_eq!(unsafe { otfs_precoder_matrix(p, v.as_mut_ptr(), 16) }, OtfsStatus::Ok);
    // Columns of V are orthonormal.
    for a in 0..4 {
        for b in 0..4 {
            let (mut re, mut im) = (0.0, 0.0);
            for r in 0..4 {
                let (xr, xi) = (v[2 * (a * 4 + r)], v[2 * (a * 4 + r) + 1]);
                let (yr, yi) = (v[2 * (b * 4 + r)], v[2 * (b * 4 + r) + 1]);
                re += xr * yr + xi * yi;
                im += xr * yi - xi * yr;
            }
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((re - want).abs() < 1e-12 && im.abs() < 1e-12);
        }
    }

    // Applying to e_1 returns the second column.
    let input = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let mut out = [0.0; 8];
    assert_eq!(unsafe { otfs_precoder_apply(p, input.as_ptr(), out.as_mut_ptr(), 4) }, OtfsStatus::Ok);
    for k in 0..8 {
        assert!((out[k] - v[8 + k]).abs() < 1e-12);
    }

    assert_eq!(unsafe { otfs_precoder_apply(p, input.as_ptr(), out.as_mut_ptr(), 3) }, OtfsStatus::Dimension);
    let mut small = [0.0; 4];
    assert_eq!(unsafe { otfs_precoder_matrix(p, small.as_mut_ptr(), 2) }, OtfsStatus::BufferTooSmall);
    unsafe { otfs_precoder_free(p) };
    unsafe { otfs_precoder_free(ptr::null_mut()) };
}

#[test]
fn in_place_apply_is_allowed() {
    let p = new_precoder(OtfsPrecoderKind::PhaseRotation, 2, 1);
    let mut buf = [1.0, 0.0, 1.0, 0.0];
    let ptr_ = buf.as_mut_ptr();
    assert_eq!(unsafe { otfs_precoder_apply(p, ptr_, ptr_, 2) }, OtfsStatus::Ok);
    let step = otfs_default_phase_step(2, 1);
    assert!((buf[2] - step.cos()).abs() < 1e-15 && (buf[3] - step.sin()).abs() < 1e-15);
    unsafe { otfs_precoder_free(p) };
}

#[test]
fn unsupported_dimension_sets_message() {
    otfs_clear_error();
    assert!(otfs_last_error().is_null());
    let mut p = ptr::null_mut();
    let s = unsafe { otfs_precoder_new(OtfsPrecoderKind::ProposedFreqSel, 5, 1, f64::NAN, &mut p) };
    assert_eq!(s, OtfsStatus::UnsupportedDimension);
    assert!(p.is_null());
    assert!(last_error().contains("MN = 5"));
    let s = unsafe { otfs_precoder_new(OtfsPrecoderKind::Identity, 0, 1, f64::NAN, &mut p) };
    assert_eq!(s, OtfsStatus::Dimension);
    assert_eq!(unsafe { otfs_precoder_new(OtfsPrecoderKind::Identity, 2, 1, f64::NAN, ptr::null_mut()) }, OtfsStatus::NullPointer);
    assert_eq!(unsafe { otfs_precoder_size(ptr::null()) }, 0);
}

fn diversity_config(precoder: OtfsPrecoderChoice) -> OtfsDiversityConfig {
    OtfsDiversityConfig {
        m: 2,
        n: 2,
        channel: OtfsChannelKind::Fir,
        channel_param: 2.0,
        precoder,
        theta_step: f64::NAN,
        alphabet: OtfsAlphabet::Qpsk,
        pair_budget: 1_000_000,
        rank_tol: 1e-10,
        seed: 0,
    }
}

#[test]
fn diversity_certificate_through_c_abi() {
    let mut r = OtfsDiversityResult::default();
    let cfg = diversity_config(OtfsPrecoderChoice::Proposed);
    assert_eq!(unsafe { otfs_diversity(&cfg, &mut r) }, OtfsStatus::Ok);
    assert_eq!((r.g_d, r.max_diversity, r.pairs_examined), (2, 2, 6560));
    assert!(r.full_diversity && r.exhaustive && r.g_c > 0.0 && r.g_c_normalized.is_finite());

    let bem = OtfsDiversityConfig { channel: OtfsChannelKind::BemOrder, channel_param: 2.0, ..diversity_config(OtfsPrecoderChoice::Identity) };
    assert_eq!(unsafe { otfs_diversity(&bem, &mut r) }, OtfsStatus::Ok);
    assert!(r.g_d < 3 && !r.full_diversity && r.g_c_normalized.is_nan() && r.worst_pair_count > 0);

    let bad = OtfsDiversityConfig { channel_param: 1.5, ..cfg };
    assert_eq!(unsafe { otfs_diversity(&bad, &mut r) }, OtfsStatus::InvalidArgument);
    assert_eq!(unsafe { otfs_diversity(ptr::null(), &mut r) }, OtfsStatus::NullPointer);
}

fn ber_config() -> OtfsBerConfig {
    OtfsBerConfig {
        m: 2,
        n: 1,
        channel: OtfsChannelKind::Fir,
        channel_param: 2.0,
        precoder: OtfsPrecoderChoice::Proposed,
        theta_step: f64::NAN,
        alphabet: OtfsAlphabet::Bpsk,
        detector: OtfsDetector::Ml,
        max_frames: 2000,
        target_bit_errors: 100,
        seed: 3,
        delta_f: 15e3,
        carrier: 4e9,
        cp_len: -1,
    }
}

#[test]
fn ber_run_fills_records_and_is_deterministic() {
    let snr = [0.0, 10.0];
    let mut a = [OtfsBerRecord::default(); 2];
    let mut b = [OtfsBerRecord::default(); 2];
    let cfg = ber_config();
    assert_eq!(unsafe { otfs_ber_run(&cfg, snr.as_ptr(), 2, a.as_mut_ptr(), 2) }, OtfsStatus::Ok);
    assert_eq!(unsafe { otfs_ber_run(&cfg, snr.as_ptr(), 2, b.as_mut_ptr(), 2) }, OtfsStatus::Ok);
    assert_eq!(a, b);
    for r in &a {
        assert_eq!(r.bits, r.frames * 2);
        assert!((r.ber - r.bit_errors as f64 / r.bits as f64).abs() < 1e-15);
    }
    assert!(a[0].ber > a[1].ber);

    assert_eq!(unsafe { otfs_ber_run(&cfg, snr.as_ptr(), 2, a.as_mut_ptr(), 1) }, OtfsStatus::BufferTooSmall);
    let big = OtfsBerConfig { m: 128, n: 16, alphabet: OtfsAlphabet::Qpsk, ..cfg };
    assert_eq!(unsafe { otfs_ber_run(&big, snr.as_ptr(), 2, a.as_mut_ptr(), 2) }, OtfsStatus::Capacity);
    assert!(last_error().contains("lmmse"));
    let unsorted = [10.0, 0.0];
    assert_eq!(unsafe { otfs_ber_run(&cfg, unsorted.as_ptr(), 2, a.as_mut_ptr(), 2) }, OtfsStatus::InvalidArgument);
}

#[test]
fn errors_are_thread_local() {
    let mut p = ptr::null_mut();
    let _ = unsafe { otfs_precoder_new(OtfsPrecoderKind::ProposedFreqSel, 5, 1, f64::NAN, &mut p) };
    std::thread::spawn(|| assert!(otfs_last_error().is_null())).join().unwrap();
    assert!(!otfs_last_error().is_null());
}

#[test]
fn generated_header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/otfs_ffi.h");
    let text = std::fs::read_to_string(&header).expect("header generated by the build script");
    for name in [
        "otfs_precoder_new",
        "otfs_precoder_free",
        "otfs_precoder_apply",
        "otfs_precoder_matrix",
        "otfs_diversity",
        "otfs_ber_run",
        "otfs_last_error",
        "OTFS_STATUS_CAPACITY",
        "typedef struct OtfsPrecoder OtfsPrecoder",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // A C compiler is optional in the build environment.
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(&src, format!("#include \"{}\"\nint main(void) {{ return otfs_last_error() != 0; }}\n", header.display()))
        .unwrap();
    if let Ok(out) = Command::new("cc").args(["-std=c11", "-Wall", "-Werror", "-fsyntax-only"]).arg(&src).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
