//! Pairwise-error analysis of precoded OTFS.
//!
//! For a symbol pair `(x, x̂)` the noiseless observation difference is
//! `Φ(e) h` with `e = x - x̂`, because `Φ` is linear in its argument. The
//! rank and the nonzero eigenvalues of `C = Φ(e)^H Φ(e)` give the pairwise
//! diversity and coding gains; minimizing over all nonzero difference vectors
//! certifies the system-level gains.
//!
//! Frequency-selective: `Φ(x) = W diag(W^H V x) sqrt(MN) F_{MN x L}` with
//! `W = (F_N ⊗ I_M) F_MN^H`.
//! Time-selective: `Φ(x) = (F_N ⊗ I_M) diag((F_N^H ⊗ I_M) V x) B`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{bem_omegas, ChannelFamily};
use crate::error::{dim_err, Error, Result};
use crate::linalg::fft::DdTransforms;
use crate::linalg::{cis, eig_hermitian, rank_from_singular_values, singular_values, CMatrix, CVector, C64};
use crate::modem::{Alphabet, OtfsDims};
use crate::precoder::PrecoderKind;

/// Channel model seen by the pairwise analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// FIR channel with `taps` resolvable paths.
    FreqSel { taps: usize },
    /// BEM channel of order `order` (`order + 1` bases).
    TimeSel { order: usize },
}

impl Scenario {
    /// Number of channel coefficients, which caps the diversity order.
    pub fn channel_dim(&self) -> usize {
        match *self {
            Scenario::FreqSel { taps } => taps,
            Scenario::TimeSel { order } => order + 1,
        }
    }

    pub fn family(&self) -> ChannelFamily {
        match self {
            Scenario::FreqSel { .. } => ChannelFamily::Fir,
            Scenario::TimeSel { .. } => ChannelFamily::Bem,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::FreqSel { taps } => write!(f, "fir:L={taps}"),
            Scenario::TimeSel { order } => write!(f, "bem:q={order}"),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("bad scenario '{s}' (fir:L=<n>|bem:q=<n>)"));
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let (key, val) = arg.split_once('=').ok_or_else(bad)?;
        let n: usize = val.trim().parse().map_err(|_| bad())?;
        match (kind.trim(), key.trim().to_ascii_lowercase().as_str()) {
            ("fir", "l") if n >= 1 => Ok(Scenario::FreqSel { taps: n }),
            ("bem", "q") => Ok(Scenario::TimeSel { order: n }),
            _ => Err(bad()),
        }
    }
}

/// `B = [b_0 .. b_Q]` with `b_q[c] = exp(j omega_q c)`.
pub fn build_b(mn: usize, omegas: &[f64]) -> Result<CMatrix> {
    if omegas.is_empty() {
        return dim_err("at least one BEM frequency is required");
    }
    for (i, a) in omegas.iter().enumerate() {
        for b in &omegas[..i] {
            let d = (a - b).rem_euclid(2.0 * PI);
            if d.min(2.0 * PI - d) < 1e-9 {
                return Err(Error::DegenerateBasis(format!(
                    "BEM frequencies {b} and {a} coincide modulo 2 pi"
                )));
            }
        }
    }
    CMatrix::from_fn(mn, omegas.len(), |c, q| cis(omegas[q] * c as f64))
}

/// Per-scenario pieces of `Φ`: the map `T` with `Φ(e) = W diag(T e) G`,
/// the right factor `G` and the left unitary `W`.
struct PhiFactors {
    dims: OtfsDims,
    family: ChannelFamily,
    transforms: DdTransforms,
    /// `T = W^H V`, dense.
    t: CMatrix,
    /// `G = sqrt(MN) F_{MN x L}` or `B`.
    g: CMatrix,
}

impl PhiFactors {
    fn new(scenario: Scenario, v: &CMatrix, dims: OtfsDims) -> Result<Self> {
        let mn = dims.mn();
        if v.rows() != mn || v.cols() != mn {
            return dim_err(format!("precoder must be {mn}x{mn}"));
        }
        let g = match scenario {
            Scenario::FreqSel { taps } => {
                if taps == 0 || taps > mn {
                    return dim_err(format!("L = {taps} must lie in [1, MN = {mn}]"));
                }
                CMatrix::from_fn(mn, taps, |k, p| cis(-2.0 * PI * ((k * p) % mn) as f64 / mn as f64))?
            }
            Scenario::TimeSel { order } => build_b(mn, &bem_omegas(mn, order))?,
        };
        let family = scenario.family();
        let transforms = dims.transforms();
        let cols: Vec<Vec<C64>> = (0..mn)
            .map(|j| {
                let mut col = v.column(j);
                transforms.kron_fn_adj(&mut col);
                if family == ChannelFamily::Fir {
                    transforms.fft_mn(&mut col);
                }
                col
            })
            .collect();
        let t = CMatrix::from_columns(mn, &cols)?;
        Ok(PhiFactors { dims, family, transforms, t, g })
    }

    fn projection(&self, e: &[C64]) -> Vec<C64> {
        self.t.mul_vec(e)
    }

    fn phi_from_projection(&self, z: &[C64]) -> CMatrix {
        let mn = self.dims.mn();
        let cols: Vec<Vec<C64>> = (0..self.g.cols())
            .map(|p| {
                let mut col: Vec<C64> = (0..mn).map(|k| z[k] * self.g[(k, p)]).collect();
                if self.family == ChannelFamily::Fir {
                    self.transforms.ifft_mn(&mut col);
                }
                self.transforms.kron_fn(&mut col);
                col
            })
            .collect();
        CMatrix::from_columns(mn, &cols).expect("finite Φ")
    }

    fn phi(&self, x: &[C64]) -> CMatrix {
        self.phi_from_projection(&self.projection(x))
    }
}

fn check_len(x: &[C64], dims: OtfsDims) -> Result<()> {
    if x.len() != dims.mn() {
        return dim_err(format!("expected length MN={}, got {}", dims.mn(), x.len()));
    }
    Ok(())
}

/// `Φ(x)` for an FIR channel with `taps` paths (MN x L).
pub fn phi_freq(x: &[C64], v: &CMatrix, dims: OtfsDims, taps: usize) -> Result<CMatrix> {
    check_len(x, dims)?;
    Ok(PhiFactors::new(Scenario::FreqSel { taps }, v, dims)?.phi(x))
}

/// `Φ(x)` for a BEM channel with the given frequencies (MN x (Q+1)).
pub fn phi_time(x: &[C64], v: &CMatrix, dims: OtfsDims, omegas: &[f64]) -> Result<CMatrix> {
    check_len(x, dims)?;
    let mn = dims.mn();
    if v.rows() != mn || v.cols() != mn {
        return dim_err(format!("precoder must be {mn}x{mn}"));
    }
    let b = build_b(mn, omegas)?;
    let t = dims.transforms();
    let mut z = v.mul_vec(x);
    t.kron_fn_adj(&mut z);
    let cols: Vec<Vec<C64>> = (0..b.cols())
        .map(|q| {
            let mut col: Vec<C64> = (0..mn).map(|c| z[c] * b[(c, q)]).collect();
            t.kron_fn(&mut col);
            col
        })
        .collect();
    CMatrix::from_columns(mn, &cols)
}

/// `Φ(x)` for either scenario, BEM frequencies taken from the order.
pub fn phi(x: &[C64], scenario: Scenario, v: &CMatrix, dims: OtfsDims) -> Result<CMatrix> {
    check_len(x, dims)?;
    Ok(PhiFactors::new(scenario, v, dims)?.phi(x))
}

/// Rank and spectrum of `C = Φ(e)^H Φ(e)` for one difference vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseReport {
    pub e: CVector,
    pub rank: usize,
    /// Nonzero eigenvalues of `C`, descending.
    pub eigenvalues: Vec<f64>,
    /// Product of the eigenvalues when `C` has full rank, else 0.
    pub det_c: f64,
    /// `min_i |(T e)_i|^2`, the smallest squared entry of the rotated difference.
    pub min_projection: f64,
}

impl PairwiseReport {
    /// `(prod lambda_i)^(1/R)`, 0 for rank 0.
    pub fn coding_gain(&self) -> f64 {
        if self.rank == 0 {
            return 0.0;
        }
        let log: f64 = self.eigenvalues.iter().map(|l| l.ln()).sum();
        (log / self.rank as f64).exp()
    }
}

fn report_from_projection(f: &PhiFactors, e: &[C64], z: &[C64], rank_tol: f64) -> Result<PairwiseReport> {
    let phi = f.phi_from_projection(z);
    let rank = rank_from_singular_values(&singular_values(&phi), rank_tol);
    let c = (phi.adjoint() * &phi).into_inner();
    let c = CMatrix::from_inner((&c + c.adjoint()) * C64::new(0.5, 0.0));
    let eig = eig_hermitian(&c)?;
    let eigenvalues: Vec<f64> = eig.values.into_iter().take(rank).collect();
    let det_c = if rank == f.g.cols() { eigenvalues.iter().product() } else { 0.0 };
    let min_projection = z.iter().map(|v| v.norm_sqr()).fold(f64::INFINITY, f64::min);
    Ok(PairwiseReport { e: CVector::from_vec(e.to_vec()), rank, eigenvalues, det_c, min_projection })
}

pub fn pairwise_report(
    e: &[C64],
    scenario: Scenario,
    v: &CMatrix,
    dims: OtfsDims,
    rank_tol: f64,
) -> Result<PairwiseReport> {
    check_len(e, dims)?;
    if e.iter().all(|z| z.norm() == 0.0) {
        return Err(Error::Precondition("difference vector must be nonzero".into()));
    }
    let f = PhiFactors::new(scenario, v, dims)?;
    let z = f.projection(e);
    report_from_projection(&f, e, &z, rank_tol)
}

/// Minimum over reports of the pairwise coding gain `(prod lambda_i)^(1/R)`.
pub fn coding_gain(reports: &[PairwiseReport]) -> f64 {
    reports.iter().map(PairwiseReport::coding_gain).fold(f64::INFINITY, f64::min)
}

/// Pairwise error bound `1/2 prod 1 / (1 + rho lambda_i / (4 d))`.
pub fn pep_bound(eigenvalues: &[f64], rho: f64, d: usize) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(Error::Parameter(format!("SNR must be non-negative, got {rho}")));
    }
    if d == 0 {
        return Err(Error::Parameter("channel dimension must be positive".into()));
    }
    if eigenvalues.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::Parameter("eigenvalues must be non-negative".into()));
    }
    Ok(0.5 * eigenvalues.iter().map(|l| 1.0 / (1.0 + rho * l / (4.0 * d as f64))).product::<f64>())
}

/// Knobs for [`diversity_gain`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityOptions {
    /// Exhaustive enumeration is used when it needs at most this many vectors.
    pub pair_budget: u64,
    pub rank_tol: f64,
    /// Seed of the sampling fallback.
    pub seed: u64,
}

impl Default for DiversityOptions {
    fn default() -> Self {
        DiversityOptions { pair_budget: 1_000_000, rank_tol: crate::linalg::DEFAULT_RANK_TOL, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexList {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&[C64]> for ComplexList {
    fn from(v: &[C64]) -> Self {
        ComplexList { re: v.iter().map(|z| z.re).collect(), im: v.iter().map(|z| z.im).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub scenario: Scenario,
    pub dims: OtfsDims,
    pub precoder: PrecoderKind,
    pub alphabet: Alphabet,
    /// Minimum rank of `C` over the examined difference vectors.
    pub g_d: usize,
    /// `min(MN, L)` or `min(MN, Q+1)`.
    pub max_diversity: usize,
    pub full_diversity: bool,
    /// Minimum pairwise coding gain.
    pub g_c: f64,
    /// `det(R_h)^(1/D) det(C)^(1/D)` minimized, reported only at full diversity.
    pub g_c_normalized: Option<f64>,
    /// Smallest `|theta_i^T e|^2` seen; positive iff every `diag(Θe)` is nonsingular.
    pub min_theta_projection: f64,
    pub pairs_examined: u64,
    pub exhaustive: bool,
    pub rank_tol: f64,
    pub worst_pair_count: usize,
    /// Every examined difference vector attaining `g_d`.
    pub worst_pairs: Vec<ComplexList>,
    pub summary: String,
}

/// Number of nonzero difference vectors, if it fits in a u64.
pub fn difference_vector_count(alphabet: Alphabet, mn: usize) -> Option<u64> {
    let k = alphabet.difference_set().len() as u64;
    u32::try_from(mn).ok().and_then(|e| k.checked_pow(e)).map(|c| c - 1)
}

fn difference_vector(index: u64, deltas: &[C64], mn: usize) -> Vec<C64> {
    let k = deltas.len() as u64;
    let mut e = vec![C64::new(0.0, 0.0); mn];
    let mut idx = index;
    for slot in e.iter_mut().rev() {
        *slot = deltas[(idx % k) as usize];
        idx /= k;
    }
    e
}

struct PairSummary {
    rank: usize,
    gain: f64,
    det_c: f64,
    min_projection: f64,
}

/// Certifies the diversity order of `V` by enumerating difference vectors.
pub fn diversity_gain(
    scenario: Scenario,
    v: &CMatrix,
    precoder: PrecoderKind,
    dims: OtfsDims,
    alphabet: Alphabet,
    opts: &DiversityOptions,
) -> Result<DiversityReport> {
    if opts.pair_budget == 0 {
        return Err(Error::Parameter("pair budget must be at least 1".into()));
    }
    let f = PhiFactors::new(scenario, v, dims)?;
    let mn = dims.mn();
    let deltas = alphabet.difference_set();
    let total = difference_vector_count(alphabet, mn);
    let exhaustive = matches!(total, Some(t) if t <= opts.pair_budget);

    let vectors: Vec<Vec<C64>> = if exhaustive {
        (1..=total.unwrap()).map(|i| difference_vector(i, &deltas, mn)).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        (0..opts.pair_budget)
            .map(|_| loop {
                let e: Vec<C64> = (0..mn).map(|_| deltas[rng.random_range(0..deltas.len())]).collect();
                if e.iter().any(|z| z.norm() > 0.0) {
                    break e;
                }
            })
            .collect()
    };

    let summaries: Vec<PairSummary> = vectors
        .par_iter()
        .map(|e| {
            let z = f.projection(e);
            report_from_projection(&f, e, &z, opts.rank_tol).map(|r| PairSummary {
                rank: r.rank,
                gain: r.coding_gain(),
                det_c: r.det_c,
                min_projection: r.min_projection,
            })
        })
        .collect::<Result<_>>()?;

    let d = scenario.channel_dim();
    let max_diversity = d.min(mn);
    let g_d = summaries.iter().map(|s| s.rank).min().unwrap_or(0);
    let g_c = summaries.iter().map(|s| s.gain).fold(f64::INFINITY, f64::min);
    let full_diversity = g_d == d;
    let g_c_normalized = full_diversity.then(|| {
        let min_det = summaries.iter().map(|s| s.det_c).fold(f64::INFINITY, f64::min);
        min_det.powf(1.0 / d as f64) / d as f64
    });
    let min_theta_projection = summaries.iter().map(|s| s.min_projection).fold(f64::INFINITY, f64::min);
    let worst_pairs: Vec<ComplexList> = vectors
        .iter()
        .zip(&summaries)
        .filter(|(_, s)| s.rank == g_d)
        .map(|(e, _)| ComplexList::from(e.as_slice()))
        .collect();

    let scope = if exhaustive { "exhaustive" } else { "sampled" };
    let summary = if full_diversity {
        format!("full diversity certified ({scope}): min rank {g_d} equals the maximum {d}")
    } else {
        format!(
            "diversity deficiency ({scope}): min rank {g_d} < maximum {max_diversity}, attained by {} difference vectors",
            worst_pairs.len()
        )
    };

    Ok(DiversityReport {
        scenario,
        dims,
        precoder,
        alphabet,
        g_d,
        max_diversity,
        full_diversity,
        g_c,
        g_c_normalized,
        min_theta_projection,
        pairs_examined: vectors.len() as u64,
        exhaustive,
        rank_tol: opts.rank_tol,
        worst_pair_count: worst_pairs.len(),
        worst_pairs,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{effective_matrix_bem, effective_matrix_fir, sample_bem_order, sample_fir, BemChannel};
    use crate::linalg::{max_abs_diff, numerical_rank, DEFAULT_RANK_TOL};
    use crate::precoder::{precoder_frequency_selective, precoder_identity, precoder_time_selective};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn dims(m: usize, n: usize) -> OtfsDims {
        OtfsDims::new(m, n).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n).map(|_| crate::channel::complex_gaussian(r, 1.0)).collect()
    }

    #[test]
    fn phi_freq_linearity_oracle() {
        let mut r = rng(1);
        let d = dims(2, 2);
        let p = precoder_frequency_selective(d).unwrap();
        let x = random_vec(&mut r, 4);
        let phi = phi_freq(&x, &p.v, d, 2).unwrap();
        let vx = p.v.mul_vec(&x);
        for _ in 0..20 {
            let ch = sample_fir(2, &mut r).unwrap();
            let h = effective_matrix_fir(&ch, d).unwrap();
            assert!(max_abs_diff(&phi.mul_vec(&ch.taps), &h.mul_vec(&vx)) <= 1e-9);
        }
    }

    #[test]
    fn phi_freq_trivial_cases() {
        let d = dims(2, 2);
        let p = precoder_frequency_selective(d).unwrap();
        let x = random_vec(&mut rng(2), 4);
        let phi = phi_freq(&x, &p.v, d, 1).unwrap();
        assert!(max_abs_diff(&phi.mul_vec(&[c(1., 0.)]), &p.v.mul_vec(&x)) < 1e-12);
        let zero = phi_freq(&[c(0., 0.); 4], &p.v, d, 2).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        assert!(matches!(phi_freq(&x, &p.v, d, 5), Err(Error::Dimension(_))));
    }

    #[test]
    fn phi_time_linearity_oracle() {
        let mut r = rng(3);
        let d = dims(2, 2);
        let p = precoder_time_selective(d).unwrap();
        let x = random_vec(&mut r, 4);
        let omegas = bem_omegas(4, 2);
        let phi = phi_time(&x, &p.v, d, &omegas).unwrap();
        let vx = p.v.mul_vec(&x);
        for _ in 0..20 {
            let ch = sample_bem_order(d, 2, &mut r);
            let h = effective_matrix_bem(&ch, d).unwrap();
            assert!(max_abs_diff(&phi.mul_vec(&ch.coeffs), &h.mul_vec(&vx)) <= 1e-9);
        }
        // The generic builder agrees with the explicit-frequency one.
        let generic = super::phi(&x, Scenario::TimeSel { order: 2 }, &p.v, d).unwrap();
        assert!(generic.max_abs_diff(&phi) < 1e-12);
    }

    #[test]
    fn phi_time_trivial_cases() {
        let d = dims(2, 2);
        let p = precoder_time_selective(d).unwrap();
        let x = random_vec(&mut rng(4), 4);
        let phi = phi_time(&x, &p.v, d, &[0.0]).unwrap();
        assert_eq!(phi.cols(), 1);
        let c0 = c(0.3, -1.2);
        let want: Vec<C64> = p.v.mul_vec(&x).iter().map(|v| v * c0).collect();
        assert!(max_abs_diff(&phi.mul_vec(&[c0]), &want) < 1e-12);
        assert_eq!(phi_time(&[c(0., 0.); 4], &p.v, d, &[0.0, 1.0]).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn build_b_cases() {
        let b = build_b(3, &[0.0]).unwrap();
        assert!(b.as_slice().iter().all(|z| (z - c(1., 0.)).norm() < 1e-15));
        let b = build_b(4, &[-PI / 2.0, 0.0, PI / 2.0]).unwrap();
        assert_eq!(numerical_rank(&b, DEFAULT_RANK_TOL), 3);
        assert!(matches!(build_b(4, &[0.0, 0.0]), Err(Error::DegenerateBasis(_))));
        assert!(matches!(build_b(4, &[-PI, PI]), Err(Error::DegenerateBasis(_))));
    }

    #[test]
    fn linearity_and_consistency() {
        let mut r = rng(5);
        let d = dims(2, 2);
        for (scenario, p) in [
            (Scenario::FreqSel { taps: 3 }, precoder_frequency_selective(d).unwrap()),
            (Scenario::TimeSel { order: 2 }, precoder_time_selective(d).unwrap()),
        ] {
            for _ in 0..10 {
                let x = random_vec(&mut r, 4);
                let xh = random_vec(&mut r, 4);
                let e: Vec<C64> = x.iter().zip(&xh).map(|(a, b)| a - b).collect();
                let diff = CMatrix::from_inner(
                    phi(&x, scenario, &p.v, d).unwrap().inner() - phi(&xh, scenario, &p.v, d).unwrap().inner(),
                );
                let pe = phi(&e, scenario, &p.v, d).unwrap();
                assert!(diff.max_abs_diff(&pe) <= 1e-12);
                let rep = pairwise_report(&e, scenario, &p.v, d, DEFAULT_RANK_TOL).unwrap();
                assert_eq!(rep.rank, numerical_rank(&diff, DEFAULT_RANK_TOL));
            }
        }
    }

    #[test]
    fn pairwise_examples() {
        let d = dims(2, 1);
        let e = vec![c(2., 0.), c(2., 0.)];
        let id = precoder_identity(d);
        let sc = Scenario::FreqSel { taps: 2 };
        assert_eq!(pairwise_report(&e, sc, &id.v, d, DEFAULT_RANK_TOL).unwrap().rank, 1);
        let p = precoder_frequency_selective(d).unwrap();
        let rep = pairwise_report(&e, sc, &p.v, d, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rep.rank, 2);
        assert!(rep.det_c > 0.0);

        let one = pairwise_report(&e, Scenario::FreqSel { taps: 1 }, &p.v, d, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(one.rank, 1);

        let zero = vec![c(0., 0.); 2];
        assert!(matches!(pairwise_report(&zero, sc, &p.v, d, DEFAULT_RANK_TOL), Err(Error::Precondition(_))));
    }

    #[test]
    fn hand_computed_identity_deficiency() {
        // Unprecoded MN=2: W^H = F_2, so e = (2, 2) maps to (2 sqrt 2, 0) and
        // C = 8 * (1/2) [1 1; 1 1]-like rank-one Gram with trace 8.
        let d = dims(2, 1);
        let rep =
            pairwise_report(&[c(2., 0.), c(2., 0.)], Scenario::FreqSel { taps: 2 }, &precoder_identity(d).v, d, DEFAULT_RANK_TOL)
                .unwrap();
        assert_eq!(rep.eigenvalues.len(), 1);
        assert!((rep.eigenvalues[0] - 16.0).abs() < 1e-10, "{:?}", rep.eigenvalues);
        assert!(rep.min_projection < 1e-20);
    }

    #[test]
    fn unitary_invariance_of_spectrum() {
        let mut r = rng(6);
        let d = dims(2, 2);
        let p = precoder_frequency_selective(d).unwrap();
        let e = random_vec(&mut r, 4);
        let ph = phi(&e, Scenario::FreqSel { taps: 3 }, &p.v, d).unwrap();
        let q = crate::linalg::dft_matrix(4).unwrap();
        let rotated = &q * &ph;
        let a = eig_hermitian(&(ph.adjoint() * &ph)).unwrap().values;
        let b = eig_hermitian(&(rotated.adjoint() * &rotated)).unwrap().values;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-10 * a[0]);
        }
        assert_eq!(numerical_rank(&ph, DEFAULT_RANK_TOL), numerical_rank(&rotated, DEFAULT_RANK_TOL));
    }

    #[test]
    fn coding_gain_homogeneity_and_scalar_case() {
        let d = dims(2, 1);
        let p = precoder_frequency_selective(d).unwrap();
        let sc = Scenario::FreqSel { taps: 1 };
        let e = vec![c(2., 0.), c(-2., 0.)];
        let r1 = pairwise_report(&e, sc, &p.v, d, DEFAULT_RANK_TOL).unwrap();
        let e2: Vec<C64> = e.iter().map(|v| v * 2.0).collect();
        let r2 = pairwise_report(&e2, sc, &p.v, d, DEFAULT_RANK_TOL).unwrap();
        assert!((r2.eigenvalues[0] - 4.0 * r1.eigenvalues[0]).abs() < 1e-10);

        // Scalar closed form: lambda_1 = || diag(Theta e) sqrt(MN) F_{MN x 1} ||^2.
        let theta = p.theta.as_ref().unwrap();
        let mut min_closed = f64::INFINITY;
        for e in [[2., 0.], [0., 2.], [2., 2.], [2., -2.], [-2., 0.], [0., -2.], [-2., 2.], [-2., -2.]] {
            let e = [c(e[0], 0.), c(e[1], 0.)];
            let te = theta.mul_vec(&e);
            let f = crate::linalg::dft_submatrix(2, 1).unwrap();
            let closed: f64 = te.iter().enumerate().map(|(k, z)| (z * f[(k, 0)] * 2f64.sqrt()).norm_sqr()).sum();
            let rep = pairwise_report(&e, sc, &p.v, d, DEFAULT_RANK_TOL).unwrap();
            assert!((rep.eigenvalues[0] - closed).abs() < 1e-10);
            min_closed = min_closed.min(closed);
        }
        let report =
            diversity_gain(sc, &p.v, p.kind, d, Alphabet::Bpsk, &DiversityOptions::default()).unwrap();
        assert!((report.g_c - min_closed).abs() < 1e-10);
    }

    #[test]
    fn qpsk_full_diversity_small() {
        let d = dims(2, 2);
        let p = precoder_frequency_selective(d).unwrap();
        let rep = diversity_gain(Scenario::FreqSel { taps: 2 }, &p.v, p.kind, d, Alphabet::Qpsk, &DiversityOptions::default())
            .unwrap();
        assert_eq!(rep.pairs_examined, 6560);
        assert!(rep.exhaustive && rep.full_diversity);
        assert_eq!(rep.g_d, 2);
        assert!(rep.g_c > 0.0);
        assert!(rep.min_theta_projection > 0.0);
        let gn = rep.g_c_normalized.unwrap();
        assert!((gn - rep.g_c / 2.0).abs() < 1e-9 * rep.g_c);
    }

    #[test]
    fn single_path_always_diversity_one() {
        let d = dims(2, 1);
        for v in [precoder_identity(d).v, precoder_frequency_selective(d).unwrap().v] {
            let rep = diversity_gain(Scenario::FreqSel { taps: 1 }, &v, PrecoderKind::Identity, d, Alphabet::Qpsk, &DiversityOptions::default())
                .unwrap();
            assert_eq!(rep.g_d, 1);
        }
    }

    #[test]
    fn sampling_fallback_is_labelled() {
        let d = dims(4, 2);
        let p = precoder_frequency_selective(d).unwrap();
        let opts = DiversityOptions { pair_budget: 200, ..Default::default() };
        let rep = diversity_gain(Scenario::FreqSel { taps: 2 }, &p.v, p.kind, d, Alphabet::Qpsk, &opts).unwrap();
        assert!(!rep.exhaustive);
        assert_eq!(rep.pairs_examined, 200);
        assert!(rep.summary.contains("sampled"));
        let zero = DiversityOptions { pair_budget: 0, ..Default::default() };
        assert!(matches!(
            diversity_gain(Scenario::FreqSel { taps: 2 }, &p.v, p.kind, d, Alphabet::Qpsk, &zero),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn pep_bound_cases() {
        assert_eq!(pep_bound(&[1.0, 2.0], 0.0, 2).unwrap(), 0.5);
        let rho = 7.5;
        let got = pep_bound(&[8.0], rho, 2).unwrap();
        assert!((got - 1.0 / (2.0 * (1.0 + rho))).abs() < 1e-15);
        assert!(pep_bound(&[-1.0], 1.0, 1).is_err());
        assert!(pep_bound(&[1.0], -1.0, 1).is_err());
        let mut prev = 0.5;
        for k in 0..40 {
            let rho = 10f64.powf(k as f64 / 8.0 - 1.0);
            let b = pep_bound(&[3.0, 0.5], rho, 2).unwrap();
            assert!(b < prev && b > 0.0);
            prev = b;
        }
    }

    #[test]
    fn scenario_parsing() {
        assert_eq!("fir:L=3".parse::<Scenario>().unwrap(), Scenario::FreqSel { taps: 3 });
        assert_eq!("bem:q=2".parse::<Scenario>().unwrap(), Scenario::TimeSel { order: 2 });
        assert!("fir:L=0".parse::<Scenario>().is_err());
        assert!("fir".parse::<Scenario>().is_err());
        let _ = BemChannel::with_order(dims(1, 1), 0, vec![c(1., 0.)]).unwrap();
    }
}
