//! Symbol detection on the delay-Doppler grid given perfect CSI.
//!
//! ML search is exhaustive. Candidates are indexed with the first symbol as
//! the most significant base-|A| digit; the search splits the symbol vector
//! into a leading and a trailing half so that
//! `||y - A x||^2 = ||u_i||^2 + ||w_j||^2 - 2 Re(u_i^H w_j)` with
//! `u_i = y - A_1 x_1(i)` and `w_j = A_2 x_2(j)`, and all cross terms come
//! out of one real matrix product. Scanning `(i, j)` lexicographically with a
//! strict comparison keeps the smallest candidate index on ties.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::DiagonalizedChannel;
use crate::error::{dim_err, Error, Result};
use crate::linalg::fft::DdTransforms;
use crate::linalg::{eig_hermitian, CMatrix, C64};
use crate::modem::{Alphabet, Frame};
use crate::precoder::Precoder;

pub const DEFAULT_ML_BUDGET: u64 = 1 << 20;
const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Ml,
    Lmmse,
}

impl FromStr for DetectorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml" => Ok(DetectorKind::Ml),
            "lmmse" => Ok(DetectorKind::Lmmse),
            other => Err(Error::Parameter(format!("unknown detector '{other}' (ml|lmmse)"))),
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectorKind::Ml => "ml",
            DetectorKind::Lmmse => "lmmse",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    /// Maximum number of ML candidate evaluations.
    pub ml_budget: u64,
    /// Noise variance N0 used by LMMSE.
    pub noise_var: f64,
}

impl DetectorConfig {
    pub fn ml() -> Self {
        DetectorConfig { kind: DetectorKind::Ml, ml_budget: DEFAULT_ML_BUDGET, noise_var: 0.0 }
    }

    pub fn lmmse(noise_var: f64) -> Self {
        DetectorConfig { kind: DetectorKind::Lmmse, ml_budget: DEFAULT_ML_BUDGET, noise_var }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ml_budget == 0 {
            return Err(Error::Parameter("ML budget must be at least 1".into()));
        }
        if self.kind == DetectorKind::Lmmse && !(self.noise_var > 0.0) {
            return Err(Error::Parameter("LMMSE needs a positive noise variance".into()));
        }
        Ok(())
    }
}

/// Number of ML candidates, or a capacity error if it exceeds `budget`.
pub fn ml_candidate_count(alphabet: Alphabet, symbols: usize, budget: u64) -> Result<u64> {
    let count = u32::try_from(symbols).ok().and_then(|s| (alphabet.size() as u64).checked_pow(s));
    match count {
        Some(c) if c <= budget => Ok(c),
        _ => Err(Error::Capacity(format!(
            "ML search over {}^{symbols} candidates exceeds the budget of {budget}; use the lmmse detector",
            alphabet.size()
        ))),
    }
}

fn digits(mut idx: usize, k: usize, len: usize) -> Vec<usize> {
    let mut d = vec![0; len];
    for slot in d.iter_mut().rev() {
        *slot = idx % k;
        idx /= k;
    }
    d
}

/// Partial products `offset - sum_s A[:, first+s] pts[d_s]` for every digit string.
fn partial_products(
    a: &CMatrix,
    first: usize,
    len: usize,
    pts: &[C64],
    offset: Option<&[C64]>,
) -> (DMatrix<f64>, Vec<f64>) {
    let rows = a.rows();
    let k = pts.len();
    let count = k.pow(len as u32);
    let mut real = DMatrix::<f64>::zeros(2 * rows, count);
    let mut norms = vec![0.0; count];
    let cols: Vec<Vec<C64>> = (first..first + len).map(|j| a.column(j)).collect();
    let mut buf = vec![C64::new(0.0, 0.0); rows];
    for idx in 0..count {
        match offset {
            Some(y) => buf.copy_from_slice(y),
            None => buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0)),
        }
        let sign = if offset.is_some() { -1.0 } else { 1.0 };
        for (s, d) in digits(idx, k, len).into_iter().enumerate() {
            let sym = pts[d] * sign;
            for (b, a) in buf.iter_mut().zip(&cols[s]) {
                *b += a * sym;
            }
        }
        let mut col = real.column_mut(idx);
        for (r, b) in buf.iter().enumerate() {
            col[r] = b.re;
            col[rows + r] = b.im;
        }
        norms[idx] = buf.iter().map(|b| b.norm_sqr()).sum();
    }
    (real, norms)
}

/// Exact minimizer of `||y - A x||^2` over all symbol vectors.
pub fn ml_detect(y: &[C64], a_eff: &CMatrix, alphabet: Alphabet, cfg: &DetectorConfig) -> Result<Frame> {
    if cfg.ml_budget == 0 {
        return Err(Error::Parameter("ML budget must be at least 1".into()));
    }
    if y.len() != a_eff.rows() {
        return dim_err(format!("observation length {} vs matrix rows {}", y.len(), a_eff.rows()));
    }
    let symbols = a_eff.cols();
    ml_candidate_count(alphabet, symbols, cfg.ml_budget)?;
    let pts = alphabet.points();
    let k = pts.len();
    let lead = symbols / 2;
    let trail = symbols - lead;

    let (u, nu) = partial_products(a_eff, 0, lead, pts, Some(y));
    let (w, nw) = partial_products(a_eff, lead, trail, pts, None);
    let cross = u.transpose() * &w;

    let mut best = (f64::INFINITY, 0usize, 0usize);
    for i in 0..nu.len() {
        for j in 0..nw.len() {
            let cost = nu[i] + nw[j] - 2.0 * cross[(i, j)];
            if cost < best.0 {
                best = (cost, i, j);
            }
        }
    }
    let mut indices = digits(best.1, k, lead);
    indices.extend(digits(best.2, k, trail));
    Ok(Frame::from_indices(indices, alphabet))
}

/// Exact ML by depth-first search over the real-valued triangular form
/// `||Q^T y_r - R x_r||^2`, pruning branches whose partial cost already
/// exceeds the best leaf. Returns the same minimizer as [`ml_detect`]
/// except on exact metric ties.
pub fn ml_detect_sphere(y: &[C64], a_eff: &CMatrix, alphabet: Alphabet, cfg: &DetectorConfig) -> Result<Frame> {
    if cfg.ml_budget == 0 {
        return Err(Error::Parameter("ML budget must be at least 1".into()));
    }
    if y.len() != a_eff.rows() {
        return dim_err(format!("observation length {} vs matrix rows {}", y.len(), a_eff.rows()));
    }
    let symbols = a_eff.cols();
    ml_candidate_count(alphabet, symbols, cfg.ml_budget)?;
    let rows = a_eff.rows();
    // Real unknowns: Re x then, for QPSK, Im x; each takes the values +-amp.
    let (dims, amp) = match alphabet {
        Alphabet::Bpsk => (symbols, 1.0),
        Alphabet::Qpsk => (2 * symbols, std::f64::consts::FRAC_1_SQRT_2),
    };
    let mut ar = DMatrix::<f64>::zeros(2 * rows, dims);
    for j in 0..symbols {
        for i in 0..rows {
            let a = a_eff[(i, j)];
            ar[(i, j)] = a.re;
            ar[(rows + i, j)] = a.im;
            if alphabet == Alphabet::Qpsk {
                ar[(i, symbols + j)] = -a.im;
                ar[(rows + i, symbols + j)] = a.re;
            }
        }
    }
    let yr = DMatrix::<f64>::from_iterator(2 * rows, 1, y.iter().map(|v| v.re).chain(y.iter().map(|v| v.im)));
    if 2 * rows < dims {
        return ml_detect(y, a_eff, alphabet, cfg);
    }
    let qr = ar.qr();
    let r = qr.r();
    let z = qr.q().transpose() * yr;

    // Depth-first over levels dims-1 .. 0; `choice[k]` is 0 for the closer sign, 1 for the other.
    let mut best_cost = f64::INFINITY;
    let mut best = vec![0.0; dims];
    let mut x = vec![0.0; dims];
    let mut cost = vec![0.0; dims + 1];
    let mut order = vec![[0.0f64; 2]; dims];
    let mut incr = vec![[0.0f64; 2]; dims];
    let mut choice = vec![0usize; dims];
    let expand = |k: usize, x: &[f64], order: &mut [[f64; 2]], incr: &mut [[f64; 2]]| {
        let mut res = z[(k, 0)];
        for j in k + 1..dims {
            res -= r[(k, j)] * x[j];
        }
        let plus = (res - r[(k, k)] * amp).powi(2);
        let minus = (res + r[(k, k)] * amp).powi(2);
        if plus <= minus {
            order[k] = [amp, -amp];
            incr[k] = [plus, minus];
        } else {
            order[k] = [-amp, amp];
            incr[k] = [minus, plus];
        }
    };
    let mut k = dims - 1;
    expand(k, &x, &mut order, &mut incr);
    choice[k] = 0;
    loop {
        let c = choice[k];
        let candidate = if c < 2 { cost[k + 1] + incr[k][c] } else { f64::INFINITY };
        if candidate < best_cost {
            x[k] = order[k][c];
            cost[k] = candidate;
            if k == 0 {
                best_cost = candidate;
                best.copy_from_slice(&x);
                choice[k] += 1;
            } else {
                k -= 1;
                expand(k, &x, &mut order, &mut incr);
                choice[k] = 0;
            }
        } else {
            // Both children exhausted or pruned (the second is never cheaper than the first).
            k += 1;
            if k == dims {
                break;
            }
            choice[k] += 1;
        }
    }
    let indices = (0..symbols)
        .map(|s| match alphabet {
            Alphabet::Bpsk => usize::from(best[s] < 0.0),
            Alphabet::Qpsk => 2 * usize::from(best[s] < 0.0) + usize::from(best[symbols + s] < 0.0),
        })
        .collect();
    Ok(Frame::from_indices(indices, alphabet))
}

/// Nearest alphabet point per entry; ties go to the smaller alphabet index.
pub fn slice(v: &[C64], alphabet: Alphabet) -> Frame {
    let pts = alphabet.points();
    let indices = v
        .iter()
        .map(|z| {
            let mut best = (f64::INFINITY, 0);
            for (i, p) in pts.iter().enumerate() {
                let d = (z - p).norm_sqr();
                if d < best.0 {
                    best = (d, i);
                }
            }
            best.1
        })
        .collect();
    Frame::from_indices(indices, alphabet)
}

/// LMMSE soft estimate `A^H (A A^H + N0 I)^{-1} y`.
pub fn lmmse_soft(y: &[C64], a_eff: &CMatrix, noise_var: f64) -> Result<Vec<C64>> {
    if !(noise_var > 0.0) {
        return Err(Error::Parameter("LMMSE needs a positive noise variance".into()));
    }
    if y.len() != a_eff.rows() {
        return dim_err(format!("observation length {} vs matrix rows {}", y.len(), a_eff.rows()));
    }
    let n = a_eff.rows();
    let mut gram = (a_eff * &a_eff.adjoint()).into_inner();
    for i in 0..n {
        gram[(i, i)] += noise_var;
    }
    // Symmetrize rounding noise before the Hermitian solver.
    let gram = CMatrix::from_inner((&gram + gram.adjoint()) * C64::new(0.5, 0.0));
    let eig = eig_hermitian(&gram)?;
    let (hi, lo) = (eig.values[0], eig.values[n - 1]);
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(Error::Numerical(format!("LMMSE system is ill-conditioned (estimate {:.3e})", hi / lo)));
    }
    let u = &eig.vectors;
    let mut z = u.adjoint().mul_vec(y);
    z.iter_mut().zip(&eig.values).for_each(|(v, l)| *v /= l);
    let z = u.mul_vec(&z);
    Ok(a_eff.adjoint().mul_vec(&z))
}

pub fn lmmse_detect(y: &[C64], a_eff: &CMatrix, alphabet: Alphabet, cfg: &DetectorConfig) -> Result<Frame> {
    Ok(slice(&lmmse_soft(y, a_eff, cfg.noise_var)?, alphabet))
}

/// LMMSE for `A = H V` with `H = W diag(g) W^H` and unitary `V`, where the
/// estimate reduces to `V^H W diag(conj(g) / (|g|^2 + N0)) W^H y`.
pub fn lmmse_soft_structured(
    y: &[C64],
    channel: &DiagonalizedChannel,
    precoder: &Precoder,
    transforms: &DdTransforms,
    noise_var: f64,
) -> Result<Vec<C64>> {
    if !(noise_var > 0.0) {
        return Err(Error::Parameter("LMMSE needs a positive noise variance".into()));
    }
    if y.len() != channel.gains.len() || y.len() != precoder.mn() {
        return dim_err("observation, channel and precoder sizes disagree");
    }
    let (mut hi, mut lo) = (0.0f64, f64::INFINITY);
    for g in &channel.gains {
        let p = g.norm_sqr() + noise_var;
        hi = hi.max(p);
        lo = lo.min(p);
    }
    if hi / lo > MAX_CONDITION {
        return Err(Error::Numerical(format!("LMMSE system is ill-conditioned (estimate {:.3e})", hi / lo)));
    }
    let mut v = y.to_vec();
    channel.to_eigenbasis(transforms, &mut v);
    v.iter_mut()
        .zip(&channel.gains)
        .for_each(|(z, g)| *z *= g.conj() / (g.norm_sqr() + noise_var));
    channel.from_eigenbasis(transforms, &mut v);
    precoder.apply_adjoint_in_place(&mut v);
    Ok(v)
}
