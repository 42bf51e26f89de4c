//! Frequency-selective (FIR) and time-selective (BEM) channels.
//!
//! The time-domain models are the ground truth. Both families reduce to
//! `H = W diag(g) W^H` on the delay-Doppler grid with a known unitary `W`:
//! `W = (F_N ⊗ I_M) F_MN^H` and `g = sqrt(MN) F_{MN x L} h` for FIR,
//! `W = F_N ⊗ I_M` and `g[c] = h[c]` for BEM. The `sqrt(MN)` factor is what
//! the convolution theorem requires under the unitary DFT convention.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::fft::DdTransforms;
use crate::linalg::{cis, CMatrix, CVector, C64};
use crate::modem::OtfsDims;

pub const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelFamily {
    Fir,
    Bem,
}

impl fmt::Display for ChannelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelFamily::Fir => "fir",
            ChannelFamily::Bem => "bem",
        })
    }
}

/// Maximum Doppler shift in Hz for a speed in km/h.
pub fn doppler_from_velocity(velocity_kmh: f64, carrier_hz: f64) -> f64 {
    velocity_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT
}

pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * sd, im * sd)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirChannel {
    pub taps: Vec<C64>,
}

impl FirChannel {
    pub fn new(taps: Vec<C64>) -> Result<Self> {
        if taps.is_empty() {
            return dim_err("an FIR channel needs at least one tap");
        }
        if taps.iter().any(|t| !t.re.is_finite() || !t.im.is_finite()) {
            return Err(Error::Contract("channel taps must be finite".into()));
        }
        Ok(FirChannel { taps })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// `sqrt(MN) F_{MN x L} h`, the unnormalized DFT of the zero-padded taps.
    pub fn frequency_response(&self, mn: usize) -> Result<Vec<C64>> {
        if self.len() > mn {
            return dim_err(format!("{} taps exceed the block length {mn}", self.len()));
        }
        Ok((0..mn)
            .map(|k| {
                self.taps
                    .iter()
                    .enumerate()
                    .map(|(p, h)| h * cis(-2.0 * PI * ((k * p) % mn) as f64 / mn as f64))
                    .sum()
            })
            .collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,re,im\n");
        for (p, h) in self.taps.iter().enumerate() {
            let _ = writeln!(out, "{p},{},{}", h.re, h.im);
        }
        out
    }
}

/// L i.i.d. CN(0, 1/L) taps.
pub fn sample_fir<R: Rng + ?Sized>(taps: usize, rng: &mut R) -> Result<FirChannel> {
    if taps == 0 {
        return dim_err("an FIR channel needs at least one tap");
    }
    let var = 1.0 / taps as f64;
    Ok(FirChannel { taps: (0..taps).map(|_| complex_gaussian(rng, var)).collect() })
}

/// Circular convolution `r[c] = sum_p h[p] s[(c-p) mod len]`.
pub fn apply_fir(ch: &FirChannel, s: &[C64]) -> Result<CVector> {
    let n = s.len();
    if ch.len() > n {
        return dim_err(format!("{} taps exceed the block length {n}", ch.len()));
    }
    let mut r = vec![C64::new(0.0, 0.0); n];
    for (c, rc) in r.iter_mut().enumerate() {
        for (p, h) in ch.taps.iter().enumerate() {
            *rc += h * s[(c + n - p) % n];
        }
    }
    Ok(CVector::from_vec(r))
}

/// Linear convolution truncated to the input length, as seen by a receiver
/// that starts sampling with the first transmitted sample.
pub fn apply_fir_linear(ch: &FirChannel, s: &[C64]) -> Vec<C64> {
    let mut r = vec![C64::new(0.0, 0.0); s.len()];
    for (c, rc) in r.iter_mut().enumerate() {
        for (p, h) in ch.taps.iter().enumerate().take(c + 1) {
            *rc += h * s[c - p];
        }
    }
    r
}

/// BEM order `Q = 2 ceil(N f_max / delta_f)`.
pub fn bem_order(dims: OtfsDims, f_max: f64, delta_f: f64) -> Result<usize> {
    if !(delta_f > 0.0) || !delta_f.is_finite() {
        return Err(Error::Parameter(format!("subcarrier spacing must be positive, got {delta_f}")));
    }
    if !(f_max >= 0.0) || !f_max.is_finite() {
        return Err(Error::Parameter(format!("maximum Doppler must be non-negative, got {f_max}")));
    }
    let fbar = f_max / delta_f;
    Ok(2 * (dims.n as f64 * fbar).ceil() as usize)
}

/// `omega_q = (2 pi / MN) (q - ceil(Q/2))` for `q = 0..=Q`.
pub fn bem_omegas(mn: usize, q: usize) -> Vec<f64> {
    let centre = q.div_ceil(2) as f64;
    (0..=q).map(|k| 2.0 * PI / mn as f64 * (k as f64 - centre)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BemChannel {
    pub q: usize,
    pub coeffs: Vec<C64>,
    pub omegas: Vec<f64>,
    pub f_max: f64,
    pub fbar_max: f64,
    pub dims: OtfsDims,
}

impl BemChannel {
    /// Channel with an explicit order and coefficients (no Doppler bookkeeping).
    pub fn with_order(dims: OtfsDims, q: usize, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != q + 1 {
            return dim_err(format!("order {q} needs {} coefficients, got {}", q + 1, coeffs.len()));
        }
        Ok(BemChannel { q, coeffs, omegas: bem_omegas(dims.mn(), q), f_max: f64::NAN, fbar_max: f64::NAN, dims })
    }

    /// Gain at time index `c` (may be negative inside a cyclic prefix).
    pub fn gain_at(&self, c: i64) -> C64 {
        self.coeffs.iter().zip(&self.omegas).map(|(cq, w)| cq * cis(w * c as f64)).sum()
    }

    /// `h[c]` for `c = 0..MN`.
    pub fn gains(&self) -> Vec<C64> {
        (0..self.dims.mn() as i64).map(|c| self.gain_at(c)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("q,omega,re,im\n");
        for (q, (c, w)) in self.coeffs.iter().zip(&self.omegas).enumerate() {
            let _ = writeln!(out, "{q},{w},{},{}", c.re, c.im);
        }
        out
    }
}

/// Draws BEM coefficients i.i.d. CN(0, 1/(Q+1)).
pub fn sample_bem<R: Rng + ?Sized>(dims: OtfsDims, f_max: f64, delta_f: f64, rng: &mut R) -> Result<BemChannel> {
    let q = bem_order(dims, f_max, delta_f)?;
    let mut ch = sample_bem_order(dims, q, rng);
    ch.f_max = f_max;
    ch.fbar_max = f_max / delta_f;
    Ok(ch)
}

pub fn sample_bem_order<R: Rng + ?Sized>(dims: OtfsDims, q: usize, rng: &mut R) -> BemChannel {
    let var = 1.0 / (q + 1) as f64;
    let coeffs = (0..=q).map(|_| complex_gaussian(rng, var)).collect();
    BemChannel::with_order(dims, q, coeffs).expect("coefficient count matches order")
}

/// `r[c] = h[c] s[c]`.
pub fn apply_bem(ch: &BemChannel, s: &[C64]) -> Result<CVector> {
    if s.len() != ch.dims.mn() {
        return dim_err(format!("expected length {}, got {}", ch.dims.mn(), s.len()));
    }
    Ok(CVector::from_vec(apply_bem_from(ch, s, 0)))
}

/// Time-varying gain applied to samples whose first index is `start`.
pub fn apply_bem_from(ch: &BemChannel, s: &[C64], start: i64) -> Vec<C64> {
    s.iter().enumerate().map(|(i, v)| ch.gain_at(start + i as i64) * v).collect()
}

/// A channel realization seen on the delay-Doppler grid as `W diag(g) W^H`.
#[derive(Clone, Debug)]
pub struct DiagonalizedChannel {
    pub family: ChannelFamily,
    pub gains: Vec<C64>,
}

impl DiagonalizedChannel {
    pub fn from_fir(ch: &FirChannel, dims: OtfsDims) -> Result<Self> {
        Ok(DiagonalizedChannel { family: ChannelFamily::Fir, gains: ch.frequency_response(dims.mn())? })
    }

    pub fn from_bem(ch: &BemChannel, dims: OtfsDims) -> Result<Self> {
        if ch.dims != dims {
            return dim_err("BEM channel drawn for a different grid");
        }
        Ok(DiagonalizedChannel { family: ChannelFamily::Bem, gains: ch.gains() })
    }

    /// `x <- W^H x`.
    pub fn to_eigenbasis(&self, t: &DdTransforms, x: &mut [C64]) {
        t.kron_fn_adj(x);
        if self.family == ChannelFamily::Fir {
            t.fft_mn(x);
        }
    }

    /// `x <- W x`.
    pub fn from_eigenbasis(&self, t: &DdTransforms, x: &mut [C64]) {
        if self.family == ChannelFamily::Fir {
            t.ifft_mn(x);
        }
        t.kron_fn(x);
    }

    /// `x <- H x`.
    pub fn apply_in_place(&self, t: &DdTransforms, x: &mut [C64]) {
        self.to_eigenbasis(t, x);
        x.iter_mut().zip(&self.gains).for_each(|(v, g)| *v *= g);
        self.from_eigenbasis(t, x);
    }

    pub fn to_matrix(&self, t: &DdTransforms) -> CMatrix {
        let mn = self.gains.len();
        let cols: Vec<Vec<C64>> = (0..mn)
            .map(|j| {
                let mut e = vec![C64::new(0.0, 0.0); mn];
                e[j] = C64::new(1.0, 0.0);
                self.apply_in_place(t, &mut e);
                e
            })
            .collect();
        CMatrix::from_columns(mn, &cols).expect("finite channel")
    }
}

/// Delay-Doppler matrix of an FIR channel, exactly matching
/// demodulate(apply_fir(modulate(.))).
pub fn effective_matrix_fir(ch: &FirChannel, dims: OtfsDims) -> Result<CMatrix> {
    Ok(DiagonalizedChannel::from_fir(ch, dims)?.to_matrix(&dims.transforms()))
}

/// Delay-Doppler matrix of a BEM channel,
/// `sum_q c_q (F_N ⊗ I_M) D_q (F_N^H ⊗ I_M)`.
pub fn effective_matrix_bem(ch: &BemChannel, dims: OtfsDims) -> Result<CMatrix> {
    Ok(DiagonalizedChannel::from_bem(ch, dims)?.to_matrix(&dims.transforms()))
}
