//! C ABI over `otfs-core`.
//!
//! Every fallible entry point returns an [`OtfsStatus`]; on failure a
//! human-readable message is stored per thread and can be read with
//! [`otfs_last_error`]. Complex data crosses the boundary as interleaved
//! `(re, im)` doubles. Precoders are opaque handles owned by the caller and
//! released with [`otfs_precoder_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use otfs_core::analysis::{diversity_gain, DiversityOptions, Scenario};
use otfs_core::channel::ChannelFamily;
use otfs_core::detector::{DetectorKind, DEFAULT_ML_BUDGET};
use otfs_core::montecarlo::{run_ber, ChannelScenario, SimConfig};
use otfs_core::precoder::{
    default_phase_step, precoder_frequency_selective, precoder_identity, precoder_phase_rotation,
    precoder_time_selective, Precoder, PrecoderChoice,
};
use otfs_core::{Alphabet, Error, OtfsDims, C64};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OtfsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    UnsupportedDimension = 4,
    Capacity = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

/// Concrete precoder for [`otfs_precoder_new`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OtfsPrecoderKind {
    ProposedFreqSel = 0,
    ProposedTimeSel = 1,
    Identity = 2,
    PhaseRotation = 3,
}

/// Precoder selection for simulations and certificates; `Proposed` follows the channel family.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OtfsPrecoderChoice {
    Proposed = 0,
    Identity = 1,
    PhaseRotation = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OtfsAlphabet {
    Bpsk = 0,
    Qpsk = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OtfsDetector {
    Ml = 0,
    Lmmse = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OtfsChannelKind {
    /// `param` is the number of taps L.
    Fir = 0,
    /// `param` is the maximum Doppler in Hz.
    BemDoppler = 1,
    /// `param` is the BEM order Q.
    BemOrder = 2,
}

/// Opaque precoder handle.
pub struct OtfsPrecoder {
    inner: Precoder,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct OtfsDiversityConfig {
    pub m: usize,
    pub n: usize,
    /// `Fir` or `BemOrder`.
    pub channel: OtfsChannelKind,
    pub channel_param: f64,
    pub precoder: OtfsPrecoderChoice,
    /// Phase step of the rotation baseline; NaN selects `pi / (2 MN)`.
    pub theta_step: f64,
    pub alphabet: OtfsAlphabet,
    pub pair_budget: u64,
    pub rank_tol: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct OtfsDiversityResult {
    pub g_d: usize,
    pub max_diversity: usize,
    pub full_diversity: bool,
    pub g_c: f64,
    /// NaN unless full diversity was certified.
    pub g_c_normalized: f64,
    pub min_theta_projection: f64,
    pub pairs_examined: u64,
    pub exhaustive: bool,
    pub worst_pair_count: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct OtfsBerConfig {
    pub m: usize,
    pub n: usize,
    pub channel: OtfsChannelKind,
    pub channel_param: f64,
    pub precoder: OtfsPrecoderChoice,
    /// NaN selects `pi / (2 MN)`.
    pub theta_step: f64,
    pub alphabet: OtfsAlphabet,
    pub detector: OtfsDetector,
    pub max_frames: u64,
    pub target_bit_errors: u64,
    pub seed: u64,
    pub delta_f: f64,
    pub carrier: f64,
    /// Negative selects the default (L-1 for FIR, 0 for BEM).
    pub cp_len: i64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OtfsBerRecord {
    pub snr_db: f64,
    pub frames: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: OtfsStatus, msg: impl Into<String>) -> OtfsStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> OtfsStatus {
    match e {
        Error::Dimension(_) => OtfsStatus::Dimension,
        Error::UnsupportedDimension(_) => OtfsStatus::UnsupportedDimension,
        Error::Capacity(_) => OtfsStatus::Capacity,
        Error::Numerical(_) => OtfsStatus::Numerical,
        Error::Parameter(_) | Error::Precondition(_) | Error::DegenerateBasis(_) => OtfsStatus::InvalidArgument,
        _ => OtfsStatus::Internal,
    }
}

fn from_error(e: Error) -> OtfsStatus {
    fail(status_of(&e), e.to_string())
}

/// Runs `f`, converting panics into `Internal`.
fn guarded(f: impl FnOnce() -> OtfsStatus) -> OtfsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(OtfsStatus::Internal, "internal panic"),
    }
}

/// Message of the last failure on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn otfs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn otfs_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn dims(m: usize, n: usize) -> Result<OtfsDims, OtfsStatus> {
    OtfsDims::new(m, n).map_err(from_error)
}

fn step_or_default(theta_step: f64, d: OtfsDims) -> Result<f64, OtfsStatus> {
    if theta_step.is_nan() {
        Ok(default_phase_step(d))
    } else if theta_step.is_finite() {
        Ok(theta_step)
    } else {
        Err(fail(OtfsStatus::InvalidArgument, "theta_step must be finite or NaN"))
    }
}

/// Builds a precoder for an `m x n` grid and stores the handle in `*out`.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn otfs_precoder_new(
    kind: OtfsPrecoderKind,
    m: usize,
    n: usize,
    theta_step: f64,
    out: *mut *mut OtfsPrecoder,
) -> OtfsStatus {
    guarded(|| {
        if out.is_null() {
            return fail(OtfsStatus::NullPointer, "out is NULL");
        }
        let d = match dims(m, n) {
            Ok(d) => d,
            Err(s) => return s,
        };
        let built = match kind {
            OtfsPrecoderKind::ProposedFreqSel => precoder_frequency_selective(d),
            OtfsPrecoderKind::ProposedTimeSel => precoder_time_selective(d),
            OtfsPrecoderKind::Identity => Ok(precoder_identity(d)),
            OtfsPrecoderKind::PhaseRotation => match step_or_default(theta_step, d) {
                Ok(step) => Ok(precoder_phase_rotation(d, step)),
                Err(s) => return s,
            },
        };
        match built {
            Ok(p) => {
                *out = Box::into_raw(Box::new(OtfsPrecoder { inner: p }));
                OtfsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a handle; NULL is ignored.
///
/// # Safety
/// `p` must come from [`otfs_precoder_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn otfs_precoder_free(p: *mut OtfsPrecoder) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// `MN`, or 0 for NULL.
///
/// # Safety
/// `p` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn otfs_precoder_size(p: *const OtfsPrecoder) -> usize {
    p.as_ref().map_or(0, |p| p.inner.mn())
}

unsafe fn read_complex(data: *const f64, len: usize) -> Vec<C64> {
    std::slice::from_raw_parts(data, 2 * len).chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect()
}

unsafe fn write_complex(values: &[C64], out: *mut f64) {
    let dst = std::slice::from_raw_parts_mut(out, 2 * values.len());
    for (d, v) in dst.chunks_exact_mut(2).zip(values) {
        d[0] = v.re;
        d[1] = v.im;
    }
}

/// `output = V input` for `len = MN` complex samples.
///
/// # Safety
/// `input` and `output` must each hold `2 * len` doubles; they may alias.
#[no_mangle]
pub unsafe extern "C" fn otfs_precoder_apply(
    p: *const OtfsPrecoder,
    input: *const f64,
    output: *mut f64,
    len: usize,
) -> OtfsStatus {
    guarded(|| {
        let Some(p) = p.as_ref() else { return fail(OtfsStatus::NullPointer, "precoder is NULL") };
        if input.is_null() || output.is_null() {
            return fail(OtfsStatus::NullPointer, "input or output is NULL");
        }
        if len != p.inner.mn() {
            return fail(OtfsStatus::Dimension, format!("expected {} samples, got {len}", p.inner.mn()));
        }
        let mut x = read_complex(input, len);
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return fail(OtfsStatus::InvalidArgument, "input contains non-finite values");
        }
        p.inner.apply_in_place(&mut x);
        write_complex(&x, output);
        OtfsStatus::Ok
    })
}

/// Writes `V` column-major as `MN * MN` interleaved complex entries.
///
/// # Safety
/// `out` must hold `2 * len` doubles.
#[no_mangle]
pub unsafe extern "C" fn otfs_precoder_matrix(p: *const OtfsPrecoder, out: *mut f64, len: usize) -> OtfsStatus {
    guarded(|| {
        let Some(p) = p.as_ref() else { return fail(OtfsStatus::NullPointer, "precoder is NULL") };
        if out.is_null() {
            return fail(OtfsStatus::NullPointer, "out is NULL");
        }
        let need = p.inner.mn() * p.inner.mn();
        if len < need {
            return fail(OtfsStatus::BufferTooSmall, format!("need {need} entries, got {len}"));
        }
        write_complex(p.inner.v.as_slice(), out);
        OtfsStatus::Ok
    })
}

fn count_param(v: f64, what: &str) -> Result<usize, OtfsStatus> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(fail(OtfsStatus::InvalidArgument, format!("{what} must be a non-negative integer, got {v}")))
    }
}

fn choice(p: OtfsPrecoderChoice, theta_step: f64, d: OtfsDims) -> Result<PrecoderChoice, OtfsStatus> {
    Ok(match p {
        OtfsPrecoderChoice::Proposed => PrecoderChoice::Proposed,
        OtfsPrecoderChoice::Identity => PrecoderChoice::Identity,
        OtfsPrecoderChoice::PhaseRotation => {
            PrecoderChoice::PhaseRotation { theta_step: Some(step_or_default(theta_step, d)?) }
        }
    })
}

fn alphabet(a: OtfsAlphabet) -> Alphabet {
    match a {
        OtfsAlphabet::Bpsk => Alphabet::Bpsk,
        OtfsAlphabet::Qpsk => Alphabet::Qpsk,
    }
}

fn diversity_impl(cfg: &OtfsDiversityConfig) -> Result<OtfsDiversityResult, OtfsStatus> {
    let d = dims(cfg.m, cfg.n)?;
    let scenario = match cfg.channel {
        OtfsChannelKind::Fir => Scenario::FreqSel { taps: count_param(cfg.channel_param, "L")? },
        OtfsChannelKind::BemOrder => Scenario::TimeSel { order: count_param(cfg.channel_param, "Q")? },
        OtfsChannelKind::BemDoppler => {
            return Err(fail(OtfsStatus::InvalidArgument, "diversity needs an explicit BEM order"));
        }
    };
    let family = match scenario {
        Scenario::FreqSel { .. } => ChannelFamily::Fir,
        Scenario::TimeSel { .. } => ChannelFamily::Bem,
    };
    let p = choice(cfg.precoder, cfg.theta_step, d)?.build(family, d).map_err(from_error)?;
    let opts = DiversityOptions { pair_budget: cfg.pair_budget, rank_tol: cfg.rank_tol, seed: cfg.seed };
    if !(opts.rank_tol > 0.0) {
        return Err(fail(OtfsStatus::InvalidArgument, "rank_tol must be positive"));
    }
    let r = diversity_gain(scenario, &p.v, p.kind, d, alphabet(cfg.alphabet), &opts).map_err(from_error)?;
    Ok(OtfsDiversityResult {
        g_d: r.g_d,
        max_diversity: r.max_diversity,
        full_diversity: r.full_diversity,
        g_c: r.g_c,
        g_c_normalized: r.g_c_normalized.unwrap_or(f64::NAN),
        min_theta_projection: r.min_theta_projection,
        pairs_examined: r.pairs_examined,
        exhaustive: r.exhaustive,
        worst_pair_count: r.worst_pair_count,
    })
}

/// Diversity and coding-gain certificate.
///
/// # Safety
/// `cfg` must point to a valid config and `out` be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn otfs_diversity(cfg: *const OtfsDiversityConfig, out: *mut OtfsDiversityResult) -> OtfsStatus {
    guarded(|| {
        let Some(cfg) = cfg.as_ref() else { return fail(OtfsStatus::NullPointer, "cfg is NULL") };
        if out.is_null() {
            return fail(OtfsStatus::NullPointer, "out is NULL");
        }
        match diversity_impl(cfg) {
            Ok(r) => {
                *out = r;
                OtfsStatus::Ok
            }
            Err(s) => s,
        }
    })
}

fn ber_impl(cfg: &OtfsBerConfig, snr: &[f64]) -> Result<Vec<OtfsBerRecord>, OtfsStatus> {
    let d = dims(cfg.m, cfg.n)?;
    let scenario = match cfg.channel {
        OtfsChannelKind::Fir => ChannelScenario::FreqSel { taps: count_param(cfg.channel_param, "L")? },
        OtfsChannelKind::BemDoppler => ChannelScenario::TimeSel { f_max_hz: cfg.channel_param },
        OtfsChannelKind::BemOrder => ChannelScenario::TimeSelOrder { order: count_param(cfg.channel_param, "Q")? },
    };
    let detector = match cfg.detector {
        OtfsDetector::Ml => DetectorKind::Ml,
        OtfsDetector::Lmmse => DetectorKind::Lmmse,
    };
    let sim = SimConfig {
        dims: d,
        scenario,
        precoder: choice(cfg.precoder, cfg.theta_step, d)?,
        alphabet: alphabet(cfg.alphabet),
        detector,
        snr_grid_db: snr.to_vec(),
        max_frames: cfg.max_frames,
        target_bit_errors: cfg.target_bit_errors,
        master_seed: cfg.seed,
        delta_f: cfg.delta_f,
        carrier: cfg.carrier,
        cp_len: usize::try_from(cfg.cp_len).ok(),
        ml_budget: DEFAULT_ML_BUDGET,
    };
    let records = run_ber(&sim).map_err(from_error)?;
    Ok(records
        .into_iter()
        .map(|r| OtfsBerRecord { snr_db: r.snr_db, frames: r.frames, bits: r.bits, bit_errors: r.bit_errors, ber: r.ber })
        .collect())
}

/// Simulates `n_snr` SNR points and writes one record per point.
///
/// # Safety
/// `cfg` must be valid, `snr_db` must hold `n_snr` doubles and `out` must
/// hold `out_len` records.
#[no_mangle]
pub unsafe extern "C" fn otfs_ber_run(
    cfg: *const OtfsBerConfig,
    snr_db: *const f64,
    n_snr: usize,
    out: *mut OtfsBerRecord,
    out_len: usize,
) -> OtfsStatus {
    guarded(|| {
        let Some(cfg) = cfg.as_ref() else { return fail(OtfsStatus::NullPointer, "cfg is NULL") };
        if snr_db.is_null() || out.is_null() {
            return fail(OtfsStatus::NullPointer, "snr_db or out is NULL");
        }
        if out_len < n_snr {
            return fail(OtfsStatus::BufferTooSmall, format!("need {n_snr} records, got {out_len}"));
        }
        let snr = std::slice::from_raw_parts(snr_db, n_snr);
        match ber_impl(cfg, snr) {
            Ok(records) => {
                std::slice::from_raw_parts_mut(out, records.len()).copy_from_slice(&records);
                OtfsStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Default phase step `pi / (2 MN)` of the rotation baseline.
#[no_mangle]
pub extern "C" fn otfs_default_phase_step(m: usize, n: usize) -> f64 {
    OtfsDims::new(m, n).map_or(f64::NAN, default_phase_step)
}
