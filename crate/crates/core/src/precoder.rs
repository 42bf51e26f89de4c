//! Vandermonde generators and the OTFS precoding matrices built from them.
//!
//! The generator rows are geometric in unit-modulus nodes
//! `alpha_k = exp(j pi num_k / den)`. Every supported family places the
//! nodes on a rotated `MN`-th root-of-unity grid,
//! `alpha_k = exp(j phi) exp(j 2 pi (k-1) / MN)`, so that
//! `Theta = F_MN^H diag(exp(j phi n))`. The dense matrices are built entry
//! by entry from the node definition; the rotated-DFT form is only used to
//! apply them quickly.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelFamily;
use crate::error::{dim_err, Error, Result};
use crate::linalg::fft::DdTransforms;
use crate::linalg::{cis, CMatrix, CVector, C64};
use crate::modem::OtfsDims;

/// Which node rule generated a Vandermonde matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VandermondeFamily {
    /// `MN = 1`, where the generator is the scalar 1.
    Trivial,
    /// `MN = 2^d`: `alpha_k = exp(j (4k-3) pi / (2 MN))`.
    PowerOfTwo,
    /// `MN = 3 * 2^d`: `alpha_k = exp(j (6k-1) pi / (3 MN))`.
    ThreeTimesPowerOfTwo,
    /// `MN = 2^d 3^t`: `alpha_k = exp(j (6k-5) pi / (3 MN))`.
    PowerOfTwoTimesPowerOfThree,
}

impl VandermondeFamily {
    /// Classifies `mn`, taking the first matching rule in the order listed above.
    pub fn classify(mn: usize) -> Result<Self> {
        if mn == 1 {
            return Ok(Self::Trivial);
        }
        if mn == 0 {
            return Err(Error::UnsupportedDimension(mn));
        }
        let twos = mn.trailing_zeros();
        let mut odd = mn >> twos;
        if odd == 1 {
            return Ok(Self::PowerOfTwo);
        }
        if odd == 3 {
            return Ok(Self::ThreeTimesPowerOfTwo);
        }
        if twos >= 1 {
            while odd % 3 == 0 {
                odd /= 3;
            }
            if odd == 1 {
                return Ok(Self::PowerOfTwoTimesPowerOfThree);
            }
        }
        Err(Error::UnsupportedDimension(mn))
    }

    /// `(num_k, den)` with `alpha_k = exp(j pi num_k / den)`, k 1-based.
    fn node(&self, k: usize, mn: usize) -> (u128, u128) {
        let (k, mn) = (k as u128, mn as u128);
        match self {
            Self::Trivial => (0, 1),
            Self::PowerOfTwo => (4 * k - 3, 2 * mn),
            Self::ThreeTimesPowerOfTwo => (6 * k - 1, 3 * mn),
            Self::PowerOfTwoTimesPowerOfThree => (6 * k - 5, 3 * mn),
        }
    }
}

/// Unit-modulus nodes `alpha_1..alpha_MN` of the generator.
pub fn vandermonde_nodes(mn: usize) -> Result<Vec<C64>> {
    let fam = VandermondeFamily::classify(mn)?;
    Ok((1..=mn)
        .map(|k| {
            let (num, den) = fam.node(k, mn);
            cis(PI * num as f64 / den as f64)
        })
        .collect())
}

/// The normalized Vandermonde generator and its normalization `xi = sqrt(MN)`.
pub fn vandermonde_theta(mn: usize) -> Result<(CMatrix, f64)> {
    let fam = VandermondeFamily::classify(mn)?;
    let xi = (mn as f64).sqrt();
    // alpha_k^n = exp(j pi (num_k n mod 2 den) / den), reduced exactly.
    let theta = CMatrix::from_fn(mn, mn, |row, col| {
        let (num, den) = fam.node(row + 1, mn);
        let e = (num * col as u128) % (2 * den);
        cis(PI * e as f64 / den as f64) / xi
    })?;
    Ok((theta, xi))
}

fn theta_phase(mn: usize) -> Result<f64> {
    let fam = VandermondeFamily::classify(mn)?;
    let (num, den) = fam.node(1, mn);
    Ok(PI * num as f64 / den as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecoderKind {
    ProposedFreqSel,
    ProposedTimeSel,
    Identity,
    PhaseRotation,
}

impl fmt::Display for PrecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecoderKind::ProposedFreqSel => "proposed-freq-sel",
            PrecoderKind::ProposedTimeSel => "proposed-time-sel",
            PrecoderKind::Identity => "identity",
            PrecoderKind::PhaseRotation => "phase-rotation",
        })
    }
}

/// Precoder selection independent of the channel family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecoderChoice {
    /// The Vandermonde precoder matched to the channel family.
    Proposed,
    Identity,
    /// Diagonal phase rotation; `None` uses `pi / (2 MN)`.
    PhaseRotation { theta_step: Option<f64> },
}

impl PrecoderChoice {
    pub fn build(&self, family: ChannelFamily, dims: OtfsDims) -> Result<Precoder> {
        match (self, family) {
            (PrecoderChoice::Proposed, ChannelFamily::Fir) => precoder_frequency_selective(dims),
            (PrecoderChoice::Proposed, ChannelFamily::Bem) => precoder_time_selective(dims),
            (PrecoderChoice::Identity, _) => Ok(precoder_identity(dims)),
            (PrecoderChoice::PhaseRotation { theta_step }, _) => {
                Ok(precoder_phase_rotation(dims, theta_step.unwrap_or_else(|| default_phase_step(dims))))
            }
        }
    }
}

impl FromStr for PrecoderChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "proposed" => Ok(PrecoderChoice::Proposed),
            "identity" | "none" => Ok(PrecoderChoice::Identity),
            "phase" => Ok(PrecoderChoice::PhaseRotation { theta_step: None }),
            _ => match s.strip_prefix("phase:") {
                Some(t) => {
                    let step: f64 = t
                        .parse()
                        .map_err(|_| Error::Parameter(format!("bad phase step '{t}'")))?;
                    if !step.is_finite() {
                        return Err(Error::Parameter("phase step must be finite".into()));
                    }
                    Ok(PrecoderChoice::PhaseRotation { theta_step: Some(step) })
                }
                None => Err(Error::Parameter(format!(
                    "unknown precoder '{s}' (proposed|identity|phase[:<theta>])"
                ))),
            },
        }
    }
}

impl fmt::Display for PrecoderChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrecoderChoice::Proposed => f.write_str("proposed"),
            PrecoderChoice::Identity => f.write_str("identity"),
            PrecoderChoice::PhaseRotation { theta_step: None } => f.write_str("phase"),
            PrecoderChoice::PhaseRotation { theta_step: Some(t) } => write!(f, "phase:{t}"),
        }
    }
}

pub fn default_phase_step(dims: OtfsDims) -> f64 {
    PI / (2.0 * dims.mn() as f64)
}

/// A precoding matrix `V` together with what generated it.
#[derive(Clone, Debug)]
pub struct Precoder {
    pub kind: PrecoderKind,
    pub dims: OtfsDims,
    pub v: CMatrix,
    /// Vandermonde generator, present for the proposed kinds.
    pub theta: Option<CMatrix>,
    pub xi: f64,
    /// Phase increment of the rotation baseline.
    pub theta_step: Option<f64>,
    fast: FastForm,
    transforms: DdTransforms,
}

#[derive(Clone, Debug)]
enum FastForm {
    Identity,
    Diagonal(Vec<C64>),
    /// `V = (F_N ⊗ I_M) [F_MN^H] F_MN^H diag(ramp)`; the bracketed factor
    /// is present only for the frequency-selective design.
    Vandermonde { ramp: Vec<C64>, extra_idft: bool },
}

fn ramp(mn: usize, phase: f64) -> Vec<C64> {
    (0..mn).map(|n| cis(phase * n as f64)).collect()
}

fn proposed(dims: OtfsDims, freq_sel: bool) -> Result<Precoder> {
    let mn = dims.mn();
    let (theta, xi) = vandermonde_theta(mn)?;
    let transforms = dims.transforms();
    let cols: Vec<Vec<C64>> = (0..mn)
        .map(|j| {
            let mut col = theta.column(j);
            if freq_sel {
                transforms.ifft_mn(&mut col);
            }
            transforms.kron_fn(&mut col);
            col
        })
        .collect();
    let v = CMatrix::from_columns(mn, &cols)?;
    Ok(Precoder {
        kind: if freq_sel { PrecoderKind::ProposedFreqSel } else { PrecoderKind::ProposedTimeSel },
        dims,
        v,
        theta: Some(theta),
        xi,
        theta_step: None,
        fast: FastForm::Vandermonde { ramp: ramp(mn, theta_phase(mn)?), extra_idft: freq_sel },
        transforms,
    })
}

/// `V = (F_N ⊗ I_M) F_MN^H Theta`.
pub fn precoder_frequency_selective(dims: OtfsDims) -> Result<Precoder> {
    proposed(dims, true)
}

/// `V = (F_N ⊗ I_M) Theta`.
pub fn precoder_time_selective(dims: OtfsDims) -> Result<Precoder> {
    proposed(dims, false)
}

pub fn precoder_identity(dims: OtfsDims) -> Precoder {
    Precoder {
        kind: PrecoderKind::Identity,
        dims,
        v: CMatrix::identity(dims.mn()),
        theta: None,
        xi: 1.0,
        theta_step: None,
        fast: FastForm::Identity,
        transforms: dims.transforms(),
    }
}

/// `V = diag(1, e^{j step}, ..., e^{j (MN-1) step})`.
pub fn precoder_phase_rotation(dims: OtfsDims, theta_step: f64) -> Precoder {
    let d = ramp(dims.mn(), theta_step);
    Precoder {
        kind: PrecoderKind::PhaseRotation,
        dims,
        v: CMatrix::from_diagonal(&d),
        theta: None,
        xi: 1.0,
        theta_step: Some(theta_step),
        fast: FastForm::Diagonal(d),
        transforms: dims.transforms(),
    }
}

impl Precoder {
    pub fn mn(&self) -> usize {
        self.dims.mn()
    }

    /// `x <- V x` using the factored form.
    pub fn apply_in_place(&self, x: &mut [C64]) {
        assert_eq!(x.len(), self.mn(), "precoder input must have length MN");
        match &self.fast {
            FastForm::Identity => {}
            FastForm::Diagonal(d) => x.iter_mut().zip(d).for_each(|(v, g)| *v *= g),
            FastForm::Vandermonde { ramp, extra_idft } => {
                x.iter_mut().zip(ramp).for_each(|(v, g)| *v *= g);
                self.transforms.ifft_mn(x);
                if *extra_idft {
                    self.transforms.ifft_mn(x);
                }
                self.transforms.kron_fn(x);
            }
        }
    }

    /// `x <- V^H x` using the factored form.
    pub fn apply_adjoint_in_place(&self, x: &mut [C64]) {
        assert_eq!(x.len(), self.mn(), "precoder input must have length MN");
        match &self.fast {
            FastForm::Identity => {}
            FastForm::Diagonal(d) => x.iter_mut().zip(d).for_each(|(v, g)| *v *= g.conj()),
            FastForm::Vandermonde { ramp, extra_idft } => {
                self.transforms.kron_fn_adj(x);
                if *extra_idft {
                    self.transforms.fft_mn(x);
                }
                self.transforms.fft_mn(x);
                x.iter_mut().zip(ramp).for_each(|(v, g)| *v *= g.conj());
            }
        }
    }

    /// Power-constraint value `Tr(V V^H)`.
    pub fn power(&self) -> f64 {
        self.v.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }
}

/// `xbar = V x`.
pub fn precode(p: &Precoder, x: &[C64]) -> Result<CVector> {
    if x.len() != p.mn() {
        return dim_err(format!("precoder expects length {}, got {}", p.mn(), x.len()));
    }
    let mut out = x.to_vec();
    p.apply_in_place(&mut out);
    Ok(CVector::from_vec(out))
}
