//! Seeded, reproducible BER experiments.
//!
//! Every frame draws its bits, channel and noise from independent ChaCha
//! streams keyed by `(master_seed, snr_index, frame_index)`. The result of a
//! frame therefore depends on nothing else, which makes parallel execution
//! and early stopping deterministic and keeps precoder comparisons paired.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{self, Scenario};
use crate::channel::{
    apply_bem_from, apply_fir_linear, bem_order, complex_gaussian, sample_bem_order, sample_fir, ChannelFamily,
    DiagonalizedChannel,
};
use crate::detector::{lmmse_detect, lmmse_soft_structured, ml_candidate_count, ml_detect_sphere, slice, DetectorConfig, DetectorKind, DEFAULT_ML_BUDGET};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::modem::{add_cp, otfs_demodulate, otfs_modulate, remove_cp, Alphabet, Frame, OtfsDims};
use crate::precoder::{Precoder, PrecoderChoice};

pub const DEFAULT_CARRIER_HZ: f64 = 4.0e9;
pub const DEFAULT_DELTA_F_HZ: f64 = 15.0e3;
pub const DEFAULT_TARGET_ERRORS: u64 = 500;
pub const DEFAULT_MAX_FRAMES: u64 = 1_000_000;

/// Above this size LMMSE uses the diagonalized form instead of a dense solve.
const DENSE_LMMSE_MAX_MN: usize = 64;
const BATCH: u64 = 512;

const STREAM_BITS: u64 = 0;
const STREAM_CHANNEL: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// Channel used by a simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelScenario {
    /// FIR with `taps` equal-power paths.
    FreqSel { taps: usize },
    /// BEM whose order follows from the maximum Doppler in Hz.
    TimeSel { f_max_hz: f64 },
    /// BEM with an explicit order.
    TimeSelOrder { order: usize },
}

impl ChannelScenario {
    pub fn family(&self) -> ChannelFamily {
        match self {
            ChannelScenario::FreqSel { .. } => ChannelFamily::Fir,
            _ => ChannelFamily::Bem,
        }
    }
}

impl fmt::Display for ChannelScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelScenario::FreqSel { taps } => write!(f, "fir:L={taps}"),
            ChannelScenario::TimeSel { f_max_hz } => write!(f, "bem:fmax={f_max_hz}"),
            ChannelScenario::TimeSelOrder { order } => write!(f, "bem:q={order}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dims: OtfsDims,
    pub scenario: ChannelScenario,
    pub precoder: PrecoderChoice,
    pub alphabet: Alphabet,
    pub detector: DetectorKind,
    pub snr_grid_db: Vec<f64>,
    pub max_frames: u64,
    pub target_bit_errors: u64,
    pub master_seed: u64,
    pub delta_f: f64,
    pub carrier: f64,
    /// Cyclic prefix length; `None` means `L - 1` for FIR and 0 for BEM.
    pub cp_len: Option<usize>,
    pub ml_budget: u64,
}

impl SimConfig {
    /// Config with the default carrier, spacing, stopping rule and budget.
    pub fn new(dims: OtfsDims, scenario: ChannelScenario, precoder: PrecoderChoice, detector: DetectorKind) -> Self {
        SimConfig {
            dims,
            scenario,
            precoder,
            alphabet: Alphabet::Qpsk,
            detector,
            snr_grid_db: vec![10.0],
            max_frames: DEFAULT_MAX_FRAMES,
            target_bit_errors: DEFAULT_TARGET_ERRORS,
            master_seed: 0,
            delta_f: DEFAULT_DELTA_F_HZ,
            carrier: DEFAULT_CARRIER_HZ,
            cp_len: None,
            ml_budget: DEFAULT_ML_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_frames == 0 {
            return Err(Error::Parameter("max_frames must be at least 1".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::Parameter("SNR grid is empty".into()));
        }
        if self.snr_grid_db.iter().any(|s| s.is_nan()) || self.snr_grid_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("SNR grid must be strictly increasing".into()));
        }
        if !(self.delta_f > 0.0) || !self.delta_f.is_finite() {
            return Err(Error::Parameter("delta_f must be positive".into()));
        }
        if !(self.carrier > 0.0) || !self.carrier.is_finite() {
            return Err(Error::Parameter("carrier must be positive".into()));
        }
        if self.ml_budget == 0 {
            return Err(Error::Parameter("ML budget must be at least 1".into()));
        }
        let mn = self.dims.mn();
        match self.scenario {
            ChannelScenario::FreqSel { taps } if taps == 0 || taps > mn => {
                return Err(Error::Dimension(format!("L = {taps} must lie in [1, MN = {mn}]")));
            }
            ChannelScenario::TimeSel { f_max_hz } if !(f_max_hz >= 0.0) || !f_max_hz.is_finite() => {
                return Err(Error::Parameter(format!("maximum Doppler must be non-negative, got {f_max_hz}")));
            }
            _ => {}
        }
        if self.cp_len() >= mn {
            return Err(Error::Dimension(format!("CP length {} must be shorter than MN = {mn}", self.cp_len())));
        }
        match self.detector {
            DetectorKind::Ml => {
                ml_candidate_count(self.alphabet, mn, self.ml_budget)?;
            }
            DetectorKind::Lmmse => {
                if self.snr_grid_db.iter().any(|s| noise_variance(*s) <= 0.0) {
                    return Err(Error::Parameter("LMMSE needs a finite SNR".into()));
                }
            }
        }
        Ok(())
    }

    pub fn cp_len(&self) -> usize {
        self.cp_len.unwrap_or(match self.scenario {
            ChannelScenario::FreqSel { taps } => taps.saturating_sub(1),
            _ => 0,
        })
    }

    /// `L` for FIR, `Q` for BEM.
    pub fn l_or_q(&self) -> Result<usize> {
        match self.scenario {
            ChannelScenario::FreqSel { taps } => Ok(taps),
            ChannelScenario::TimeSel { f_max_hz } => bem_order(self.dims, f_max_hz, self.delta_f),
            ChannelScenario::TimeSelOrder { order } => Ok(order),
        }
    }

    /// Scenario as seen by the pairwise analysis.
    pub fn analysis_scenario(&self) -> Result<Scenario> {
        Ok(match self.scenario {
            ChannelScenario::FreqSel { taps } => Scenario::FreqSel { taps },
            _ => Scenario::TimeSel { order: self.l_or_q()? },
        })
    }
}

/// `N0 = 10^(-snr/10)`; infinite SNR gives a noiseless channel.
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// `lo, lo+step, ..., hi` inclusive.
pub fn snr_grid(lo: f64, step: f64, hi: f64) -> Result<Vec<f64>> {
    if !lo.is_finite() || !hi.is_finite() || !(step > 0.0) || hi < lo {
        return Err(Error::Parameter(format!("bad SNR range {lo}:{step}:{hi}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub snr_db: f64,
    pub frames: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub precoder: String,
    pub detector: String,
    pub scenario: String,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L_or_Q")]
    pub l_or_q: usize,
    pub seed: u64,
    pub fingerprint: String,
}

/// Hex SHA-256 of the canonical JSON form of the config, first 16 digits.
pub fn fingerprint(cfg: &SimConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    let digest = Sha256::digest(&json);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based per-frame seed.
pub fn frame_seed(master: u64, snr_index: u64, frame_index: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ snr_index) ^ frame_index)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// One channel draw of either family.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelRealization {
    Fir(crate::channel::FirChannel),
    Bem(crate::channel::BemChannel),
}

impl ChannelRealization {
    pub fn diagonalized(&self, dims: OtfsDims) -> Result<DiagonalizedChannel> {
        match self {
            ChannelRealization::Fir(h) => DiagonalizedChannel::from_fir(h, dims),
            ChannelRealization::Bem(h) => DiagonalizedChannel::from_bem(h, dims),
        }
    }
}

/// Time-domain link for a precoded grid `xbar`: OTFS modulation, cyclic
/// prefix, channel, CN(0, n0) noise per received sample, prefix removal and
/// demodulation. `n0 = 0` draws no noise.
pub fn link_pipeline<R: Rng + ?Sized>(
    xbar: &[C64],
    channel: &ChannelRealization,
    dims: OtfsDims,
    lcp: usize,
    n0: f64,
    rng: &mut R,
) -> Result<Vec<C64>> {
    let s = otfs_modulate(xbar, dims)?;
    let tx = add_cp(&s, lcp)?;
    let mut rx = match channel {
        ChannelRealization::Fir(h) => apply_fir_linear(h, &tx),
        ChannelRealization::Bem(h) => apply_bem_from(h, &tx, -(lcp as i64)),
    };
    if n0 > 0.0 {
        rx.iter_mut().for_each(|v| *v += complex_gaussian(rng, n0));
    }
    let r = remove_cp(&rx, lcp)?;
    Ok(otfs_demodulate(&r, dims)?.into_vec())
}

/// Everything a frame needs that does not change between frames.
struct Link {
    dims: OtfsDims,
    alphabet: Alphabet,
    precoder: Precoder,
    detector: DetectorConfig,
    scenario: ChannelScenario,
    l_or_q: usize,
    lcp: usize,
    transforms: crate::linalg::fft::DdTransforms,
}

impl Link {
    fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let precoder = cfg.precoder.build(cfg.scenario.family(), cfg.dims)?;
        let detector = DetectorConfig { kind: cfg.detector, ml_budget: cfg.ml_budget, noise_var: 0.0 };
        Ok(Link {
            dims: cfg.dims,
            alphabet: cfg.alphabet,
            precoder,
            detector,
            scenario: cfg.scenario,
            l_or_q: cfg.l_or_q()?,
            lcp: cfg.cp_len(),
            transforms: cfg.dims.transforms(),
        })
    }

    fn draw_channel(&self, rng: &mut ChaCha8Rng) -> Result<ChannelRealization> {
        Ok(match self.scenario {
            ChannelScenario::FreqSel { taps } => ChannelRealization::Fir(sample_fir(taps, rng)?),
            _ => ChannelRealization::Bem(sample_bem_order(self.dims, self.l_or_q, rng)),
        })
    }

    /// Bit errors of one frame.
    fn frame(&self, seed: u64, n0: f64) -> Result<u64> {
        let mn = self.dims.mn();
        let mut bit_rng = stream(seed, STREAM_BITS);
        let mut ch_rng = stream(seed, STREAM_CHANNEL);
        let mut noise_rng = stream(seed, STREAM_NOISE);

        let k = self.alphabet.size();
        let sent = Frame::from_indices((0..mn).map(|_| bit_rng.random_range(0..k)).collect(), self.alphabet);
        let channel = self.draw_channel(&mut ch_rng)?;

        let mut xbar = sent.x.to_vec();
        self.precoder.apply_in_place(&mut xbar);
        let y = link_pipeline(&xbar, &channel, self.dims, self.lcp, n0, &mut noise_rng)?;
        let diag = channel.diagonalized(self.dims)?;
        let detected = match self.detector.kind {
            DetectorKind::Ml => ml_detect_sphere(&y, &self.effective_matrix(&diag), self.alphabet, &self.detector)?,
            DetectorKind::Lmmse => {
                let cfg = DetectorConfig { noise_var: n0, ..self.detector };
                if mn <= DENSE_LMMSE_MAX_MN {
                    lmmse_detect(&y, &self.effective_matrix(&diag), self.alphabet, &cfg)?
                } else {
                    let soft = lmmse_soft_structured(&y, &diag, &self.precoder, &self.transforms, n0)?;
                    slice(&soft, self.alphabet)
                }
            }
        };
        Ok(sent.bit_errors(&detected))
    }

    /// `A = H V`.
    fn effective_matrix(&self, diag: &DiagonalizedChannel) -> CMatrix {
        let h = diag.to_matrix(&self.transforms);
        &h * &self.precoder.v
    }
}

/// Simulates one SNR point.
fn run_point(link: &Link, cfg: &SimConfig, snr_index: usize, fp: &str) -> Result<BerRecord> {
    let snr_db = cfg.snr_grid_db[snr_index];
    let n0 = noise_variance(snr_db);
    let mut frames = 0u64;
    let mut errors = 0u64;
    'outer: while frames < cfg.max_frames {
        let end = (frames + BATCH).min(cfg.max_frames);
        let batch: Vec<u64> = (frames..end)
            .into_par_iter()
            .map(|f| link.frame(frame_seed(cfg.master_seed, snr_index as u64, f), n0))
            .collect::<Result<_>>()?;
        for e in batch {
            frames += 1;
            errors += e;
            if errors >= cfg.target_bit_errors {
                break 'outer;
            }
        }
    }
    let bits = frames * (cfg.dims.mn() * cfg.alphabet.bits_per_symbol()) as u64;
    Ok(BerRecord {
        snr_db,
        frames,
        bits,
        bit_errors: errors,
        ber: errors as f64 / bits as f64,
        precoder: cfg.precoder.to_string(),
        detector: cfg.detector.to_string(),
        scenario: cfg.scenario.family().to_string(),
        m: cfg.dims.m,
        n: cfg.dims.n,
        l_or_q: link.l_or_q,
        seed: cfg.master_seed,
        fingerprint: fp.to_string(),
    })
}

/// Runs every SNR point of `cfg`.
pub fn run_ber(cfg: &SimConfig) -> Result<Vec<BerRecord>> {
    let link = Link::new(cfg)?;
    let fp = fingerprint(cfg);
    (0..cfg.snr_grid_db.len()).map(|i| run_point(&link, cfg, i, &fp)).collect()
}

fn find_point(records: &[BerRecord], snr_db: f64) -> Result<&BerRecord> {
    records
        .iter()
        .find(|r| (r.snr_db - snr_db).abs() < 1e-9)
        .ok_or_else(|| Error::Parameter(format!("no record at {snr_db} dB")))
}

/// Minimum bit errors for a point to enter a slope estimate.
pub const MIN_SLOPE_ERRORS: u64 = 50;

/// `-(log10 BER(hi) - log10 BER(lo)) / ((hi - lo) / 10)`.
pub fn estimate_slope(records: &[BerRecord], lo_db: f64, hi_db: f64) -> Result<f64> {
    if !(hi_db > lo_db) {
        return Err(Error::Parameter(format!("slope needs lo < hi, got {lo_db} and {hi_db}")));
    }
    let lo = find_point(records, lo_db)?;
    let hi = find_point(records, hi_db)?;
    for r in [lo, hi] {
        if r.bit_errors < MIN_SLOPE_ERRORS {
            return Err(Error::StatisticalValidity(format!(
                "{} bit errors at {} dB, need at least {MIN_SLOPE_ERRORS}",
                r.bit_errors, r.snr_db
            )));
        }
    }
    Ok(-(hi.ber.log10() - lo.ber.log10()) / ((hi_db - lo_db) / 10.0))
}

/// SNR values where BER rises by more than three binomial standard
/// deviations between adjacent points that both have at least 100 errors.
pub fn monotonicity_violations(records: &[BerRecord]) -> Vec<f64> {
    records
        .windows(2)
        .filter(|w| w[0].bit_errors >= 100 && w[1].bit_errors >= 100)
        .filter(|w| {
            let var = |r: &BerRecord| r.ber * (1.0 - r.ber) / r.bits as f64;
            w[1].ber - w[0].ber > 3.0 * (var(&w[0]) + var(&w[1])).sqrt()
        })
        .map(|w| w[1].snr_db)
        .collect()
}

pub fn write_csv<W: Write>(records: &[BerRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::Parameter(format!("CSV write failed: {e}")))?;
    }
    w.flush().map_err(|e| Error::Parameter(format!("CSV write failed: {e}")))
}

pub fn to_csv_string(records: &[BerRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

pub fn to_json_string(records: &[BerRecord]) -> String {
    serde_json::to_string_pretty(records).expect("records serialize")
}

/// Frequency with which ML between `x` and `x - e` picks the wrong one
/// when `x` was sent, over `draws` channel and noise realizations.
pub fn simulate_pairwise_error(
    e: &[C64],
    scenario: Scenario,
    v: &CMatrix,
    dims: OtfsDims,
    snr_db: f64,
    draws: u64,
    seed: u64,
) -> Result<f64> {
    if draws == 0 {
        return Err(Error::Parameter("need at least one draw".into()));
    }
    let phi = analysis::phi(e, scenario, v, dims)?;
    let d = scenario.channel_dim();
    let n0 = noise_variance(snr_db);
    let mn = dims.mn();
    const CHUNK: u64 = 8192;
    let chunks = draws.div_ceil(CHUNK);
    let errors: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(frame_seed(seed, u64::MAX, c), 0);
            let count = CHUNK.min(draws - c * CHUNK);
            let mut err = 0u64;
            let mut h = vec![C64::new(0.0, 0.0); d];
            for _ in 0..count {
                h.iter_mut().for_each(|v| *v = complex_gaussian(&mut rng, 1.0 / d as f64));
                let diff = phi.mul_vec(&h);
                let mut metric = 0.0;
                for z in diff.iter().take(mn) {
                    let n = complex_gaussian(&mut rng, n0);
                    metric += z.norm_sqr() + 2.0 * (z.conj() * n).re;
                }
                if metric < 0.0 {
                    err += 1;
                }
            }
            err
        })
        .sum();
    Ok(errors as f64 / draws as f64)
}
