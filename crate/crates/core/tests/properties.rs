use otfs_core::analysis::{phi, pep_bound, Scenario};
use otfs_core::channel::{effective_matrix_fir, sample_fir};
use otfs_core::detector::{ml_detect_sphere, DetectorConfig};
use otfs_core::linalg::{numerical_rank, DEFAULT_RANK_TOL};
use otfs_core::modem::{demap, map_bits, otfs_demodulate, otfs_modulate, Frame};
use otfs_core::precoder::{precoder_frequency_selective, precoder_time_selective};
use otfs_core::{Alphabet, CMatrix, OtfsDims, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SUPPORTED: [usize; 8] = [2, 3, 4, 6, 8, 12, 16, 24];

fn dims_for(mn: usize) -> OtfsDims {
    let n = if mn % 2 == 0 { 2 } else { 1 };
    OtfsDims::new(mn / n, n).unwrap()
}

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C64::new(a, b)), len)
}

fn dist(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bits_survive_mapping(m in 1usize..6, n in 1usize..6, qpsk: bool, seed: u64) {
        let alphabet = if qpsk { Alphabet::Qpsk } else { Alphabet::Bpsk };
        let d = OtfsDims::new(m, n).unwrap();
        let bits: Vec<u8> = (0..d.mn() * alphabet.bits_per_symbol())
            .map(|k| ((seed >> (k % 64)) & 1) as u8)
            .collect();
        let frame = map_bits(&bits, alphabet, d).unwrap();
        prop_assert_eq!(demap(&frame), &bits[..]);
        for x in frame.x.iter() {
            prop_assert!((x.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn modulation_is_invertible((m, n, x) in (1usize..9, 1usize..9).prop_flat_map(|(m, n)| (Just(m), Just(n), complex_vec(m * n)))) {
        let d = OtfsDims::new(m, n).unwrap();
        let s = otfs_modulate(&x, d).unwrap();
        let energy_in: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let energy_out: f64 = s.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((energy_in - energy_out).abs() < 1e-9);
        prop_assert!(dist(&otfs_demodulate(&s, d).unwrap(), &x) < 1e-12);
    }

    #[test]
    fn fast_precoder_matches_dense((mn, x, time) in prop::sample::select(&SUPPORTED[..]).prop_flat_map(|mn| (Just(mn), complex_vec(mn), any::<bool>()))) {
        let d = dims_for(mn);
        let p = if time { precoder_time_selective(d) } else { precoder_frequency_selective(d) }.unwrap();
        prop_assert!(p.v.unitarity_error() < 1e-10);
        let mut fast = x.clone();
        p.apply_in_place(&mut fast);
        prop_assert!(dist(&fast, &p.v.mul_vec(&x)) < 1e-10);
        p.apply_adjoint_in_place(&mut fast);
        prop_assert!(dist(&fast, &x) < 1e-10);
    }

    #[test]
    fn phi_is_linear_and_rank_bounded(
        (x, y, a, taps, order, fir) in (complex_vec(4), complex_vec(4), (-2.0f64..2.0, -2.0f64..2.0), 1usize..5, 0usize..4, any::<bool>())
    ) {
        let d = OtfsDims::new(2, 2).unwrap();
        let (scenario, v) = if fir {
            (Scenario::FreqSel { taps }, precoder_frequency_selective(d).unwrap().v)
        } else {
            (Scenario::TimeSel { order }, precoder_time_selective(d).unwrap().v)
        };
        let a = C64::new(a.0, a.1);
        let combo: Vec<C64> = x.iter().zip(&y).map(|(p, q)| a * p + q).collect();
        let lhs = phi(&combo, scenario, &v, d).unwrap();
        let px = phi(&x, scenario, &v, d).unwrap();
        let py = phi(&y, scenario, &v, d).unwrap();
        let rhs = CMatrix::from_fn(lhs.rows(), lhs.cols(), |i, j| {
            a * px.inner()[(i, j)] + py.inner()[(i, j)]
        }).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
        prop_assert!(numerical_rank(&px, DEFAULT_RANK_TOL) <= d.mn().min(scenario.channel_dim()));
    }

    #[test]
    fn pep_bound_decreases_with_snr(eigs in prop::collection::vec(0.0f64..10.0, 1..6), rho in 0.0f64..1e3, step in 1e-3f64..1e3) {
        let lo = pep_bound(&eigs, rho, 2).unwrap();
        let hi = pep_bound(&eigs, rho + step, 2).unwrap();
        prop_assert!(hi <= lo);
        prop_assert!(lo <= 0.5);
    }

    #[test]
    fn sphere_search_is_the_exact_minimizer(seed: u64, noise in 0.0f64..1.5) {
        let d = OtfsDims::new(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = sample_fir(2, &mut rng).unwrap();
        let a = effective_matrix_fir(&ch, d).unwrap().try_mul(&precoder_frequency_selective(d).unwrap().v).unwrap();
        let y: Vec<C64> = (0..4)
            .map(|k| C64::new(((seed >> k) & 1) as f64 - 0.5, ((seed >> (k + 8)) & 1) as f64 - 0.5) * noise + C64::new(1.0, -1.0) * 0.5)
            .collect();
        let metric = |f: &Frame| -> f64 {
            a.mul_vec(&f.x).iter().zip(&y).map(|(p, q)| (p - q).norm_sqr()).sum()
        };
        let best = (0..256usize)
            .map(|k| Frame::from_indices((0..4).map(|s| (k >> (2 * s)) & 3).collect(), Alphabet::Qpsk))
            .map(|f| metric(&f))
            .fold(f64::INFINITY, f64::min);
        let got = ml_detect_sphere(&y, &a, Alphabet::Qpsk, &DetectorConfig::ml()).unwrap();
        prop_assert!(metric(&got) <= best + 1e-9);
    }
}
