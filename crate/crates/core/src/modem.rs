//! OTFS modulation between the delay-Doppler grid and the time domain,
//! cyclic prefix handling, and the BPSK/QPSK alphabets.
//!
//! With rectangular pulses the ISFFT + Heisenberg pair collapses to
//! `S = X F_N^H` and the Wigner + SFFT pair to `Y = R F_N`, so the whole
//! chain is unitary.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::fft::DdTransforms;
use crate::linalg::{CVector, C64};

/// Delay-Doppler grid size: `m` delay bins by `n` Doppler bins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OtfsDims {
    pub m: usize,
    pub n: usize,
}

impl OtfsDims {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return dim_err(format!("grid must be at least 1x1, got M={m}, N={n}"));
        }
        if m.checked_mul(n).is_none() {
            return dim_err("M*N overflows");
        }
        Ok(OtfsDims { m, n })
    }

    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    pub fn transforms(&self) -> DdTransforms {
        DdTransforms::new(self.m, self.n)
    }
}

impl fmt::Display for OtfsDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.m, self.n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alphabet {
    Bpsk,
    Qpsk,
}

impl Alphabet {
    /// Constellation points; index `i` carries the bit pattern `i` written MSB first.
    pub fn points(&self) -> &'static [C64] {
        const BPSK: [C64; 2] = [C64::new(1.0, 0.0), C64::new(-1.0, 0.0)];
        const QPSK: [C64; 4] = [
            C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
            C64::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
            C64::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
            C64::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
        ];
        match self {
            Alphabet::Bpsk => &BPSK,
            Alphabet::Qpsk => &QPSK,
        }
    }

    pub fn size(&self) -> usize {
        self.points().len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        match self {
            Alphabet::Bpsk => 1,
            Alphabet::Qpsk => 2,
        }
    }

    /// Gray-mapped point for the bits `b0 b1 ...`.
    pub fn map(&self, bits: &[u8]) -> C64 {
        self.points()[self.index_of_bits(bits)]
    }

    pub fn index_of_bits(&self, bits: &[u8]) -> usize {
        debug_assert_eq!(bits.len(), self.bits_per_symbol());
        bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as usize)
    }

    pub fn bits_of_index(&self, idx: usize, out: &mut Vec<u8>) {
        let b = self.bits_per_symbol();
        for k in (0..b).rev() {
            out.push(((idx >> k) & 1) as u8);
        }
    }

    /// Per-entry differences `a - b` over all point pairs, zero first, then
    /// the remaining distinct values in first-seen order.
    pub fn difference_set(&self) -> Vec<C64> {
        let pts = self.points();
        let mut out = vec![C64::new(0.0, 0.0)];
        for a in pts {
            for b in pts {
                let d = a - b;
                if !out.iter().any(|o| (o - d).norm() < 1e-12) {
                    out.push(d);
                }
            }
        }
        out
    }
}

impl FromStr for Alphabet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Alphabet::Bpsk),
            "qpsk" => Ok(Alphabet::Qpsk),
            other => Err(Error::Parameter(format!("unknown alphabet '{other}' (bpsk|qpsk)"))),
        }
    }
}

impl fmt::Display for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alphabet::Bpsk => "bpsk",
            Alphabet::Qpsk => "qpsk",
        })
    }
}

/// One delay-Doppler frame of alphabet symbols together with its bits.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub x: CVector,
    pub bits: Vec<u8>,
    /// Alphabet index of each symbol.
    pub indices: Vec<usize>,
}

impl Frame {
    pub fn from_indices(indices: Vec<usize>, alphabet: Alphabet) -> Self {
        let pts = alphabet.points();
        let mut bits = Vec::with_capacity(indices.len() * alphabet.bits_per_symbol());
        for &i in &indices {
            alphabet.bits_of_index(i, &mut bits);
        }
        let x = CVector::from_vec(indices.iter().map(|&i| pts[i]).collect());
        Frame { x, bits, indices }
    }

    pub fn bit_errors(&self, other: &Frame) -> u64 {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count() as u64
    }
}

pub fn map_bits(bits: &[u8], alphabet: Alphabet, dims: OtfsDims) -> Result<Frame> {
    let b = alphabet.bits_per_symbol();
    if bits.len() != dims.mn() * b {
        return dim_err(format!("expected {} bits, got {}", dims.mn() * b, bits.len()));
    }
    if bits.iter().any(|&v| v > 1) {
        return Err(Error::Parameter("bits must be 0 or 1".into()));
    }
    let indices = bits.chunks(b).map(|c| alphabet.index_of_bits(c)).collect();
    Ok(Frame::from_indices(indices, alphabet))
}

pub fn demap(frame: &Frame) -> &[u8] {
    &frame.bits
}

fn check_len(v: &[C64], dims: OtfsDims) -> Result<()> {
    if v.len() != dims.mn() {
        return dim_err(format!("expected length MN={}, got {}", dims.mn(), v.len()));
    }
    Ok(())
}

/// `s = vec(invec(xbar, M) F_N^H)`.
pub fn otfs_modulate(xbar: &[C64], dims: OtfsDims) -> Result<CVector> {
    check_len(xbar, dims)?;
    let mut s = xbar.to_vec();
    dims.transforms().kron_fn_adj(&mut s);
    Ok(CVector::from_vec(s))
}

/// `y = vec(invec(r, M) F_N)`.
pub fn otfs_demodulate(r: &[C64], dims: OtfsDims) -> Result<CVector> {
    check_len(r, dims)?;
    let mut y = r.to_vec();
    dims.transforms().kron_fn(&mut y);
    Ok(CVector::from_vec(y))
}

/// Prepends the last `lcp` samples.
pub fn add_cp(s: &[C64], lcp: usize) -> Result<CVector> {
    if lcp >= s.len() {
        return dim_err(format!("CP length {lcp} must be shorter than the block ({})", s.len()));
    }
    let mut out = Vec::with_capacity(s.len() + lcp);
    out.extend_from_slice(&s[s.len() - lcp..]);
    out.extend_from_slice(s);
    Ok(CVector::from_vec(out))
}

/// Drops the first `lcp` samples.
pub fn remove_cp(v: &[C64], lcp: usize) -> Result<CVector> {
    if lcp >= v.len() {
        return dim_err(format!("CP length {lcp} must be shorter than the block ({})", v.len()));
    }
    Ok(CVector::from_vec(v[lcp..].to_vec()))
}
