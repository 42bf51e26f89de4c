//! Built-in property checks run by `otfs selfcheck`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{diversity_gain, DiversityOptions, Scenario};
use crate::channel::{effective_matrix_bem, effective_matrix_fir, sample_bem_order, sample_fir};
use crate::detector::{ml_detect, DetectorConfig};
use crate::linalg::{max_abs_diff, CMatrix, C64};
use crate::modem::{otfs_demodulate, otfs_modulate, Alphabet, Frame, OtfsDims};
use crate::montecarlo::{link_pipeline, ChannelRealization};
use crate::precoder::{precoder_frequency_selective, precoder_time_selective, vandermonde_theta, Precoder};

/// Grid sizes with a Vandermonde design.
pub const SUPPORTED_MN: &[usize] = &[2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64];

pub type Check = (&'static str, Result<(), String>);

fn ensure(ok: bool, detail: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(detail())
    }
}

fn dims_for(mn: usize) -> OtfsDims {
    let n = if mn % 2 == 0 { 2 } else { 1 };
    OtfsDims::new(mn / n, n).expect("positive grid")
}

fn unitarity() -> Result<(), String> {
    for &mn in SUPPORTED_MN {
        let (theta, _) = vandermonde_theta(mn).map_err(|e| e.to_string())?;
        let err = theta.unitarity_error();
        ensure(err <= 1e-10, || format!("MN={mn}: ||Θ^H Θ - I|| = {err:e}"))?;
        let d = dims_for(mn);
        for p in [precoder_frequency_selective(d), precoder_time_selective(d)] {
            let p = p.map_err(|e| e.to_string())?;
            let dev = (p.power() - mn as f64).abs();
            ensure(dev <= 1e-9, || format!("MN={mn} {}: |Tr(VV^H) - MN| = {dev:e}", p.kind))?;
        }
    }
    Ok(())
}

fn fast_precoder_matches_matrix() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for &mn in SUPPORTED_MN.iter().take(8) {
        let d = dims_for(mn);
        for p in [precoder_frequency_selective(d), precoder_time_selective(d)] {
            let p: Precoder = p.map_err(|e| e.to_string())?;
            let x: Vec<C64> = (0..mn).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let mut fast = x.clone();
            p.apply_in_place(&mut fast);
            let err = max_abs_diff(&fast, &p.v.mul_vec(&x));
            ensure(err <= 1e-10, || format!("MN={mn} {}: fast form deviates by {err:e}", p.kind))?;
        }
    }
    Ok(())
}

fn oracle_equivalence() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (m, n) in [(2, 2), (4, 2), (2, 4)] {
        let d = OtfsDims::new(m, n).map_err(|e| e.to_string())?;
        for case in 0..40 {
            let xbar: Vec<C64> = (0..d.mn()).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let (ch, h, lcp): (ChannelRealization, CMatrix, usize) = if case % 2 == 0 {
                let taps = 1 + case % d.mn().min(4);
                let ch = sample_fir(taps, &mut rng).map_err(|e| e.to_string())?;
                let h = effective_matrix_fir(&ch, d).map_err(|e| e.to_string())?;
                (ChannelRealization::Fir(ch), h, taps - 1)
            } else {
                let ch = sample_bem_order(d, 2, &mut rng);
                let h = effective_matrix_bem(&ch, d).map_err(|e| e.to_string())?;
                (ChannelRealization::Bem(ch), h, 0)
            };
            let y = link_pipeline(&xbar, &ch, d, lcp, 0.0, &mut rng).map_err(|e| e.to_string())?;
            let err: f64 = y.iter().zip(h.mul_vec(&xbar)).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            ensure(err <= 1e-9, || format!("{m}x{n} case {case}: ||Hx - pipeline(x)|| = {err:e}"))?;
        }
    }
    Ok(())
}

fn modem_round_trip() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for m in 1..=8 {
        for n in 1..=8 {
            let d = OtfsDims::new(m, n).map_err(|e| e.to_string())?;
            let x: Vec<C64> = (0..d.mn()).map(|_| C64::new(rng.random(), rng.random())).collect();
            let s = otfs_modulate(&x, d).map_err(|e| e.to_string())?;
            let back = otfs_demodulate(&s, d).map_err(|e| e.to_string())?;
            let err = max_abs_diff(&back, &x);
            ensure(err <= 1e-12, || format!("{m}x{n}: round trip error {err:e}"))?;
        }
    }
    Ok(())
}

fn ml_noiseless() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = OtfsDims::new(2, 2).map_err(|e| e.to_string())?;
    let p = precoder_frequency_selective(d).map_err(|e| e.to_string())?;
    for _ in 0..20 {
        let ch = sample_fir(2, &mut rng).map_err(|e| e.to_string())?;
        let a = &effective_matrix_fir(&ch, d).map_err(|e| e.to_string())? * &p.v;
        let sent = Frame::from_indices((0..4).map(|_| rng.random_range(0..4)).collect(), Alphabet::Qpsk);
        let got = ml_detect(&a.mul_vec(&sent.x), &a, Alphabet::Qpsk, &DetectorConfig::ml()).map_err(|e| e.to_string())?;
        ensure(got.indices == sent.indices, || "noiseless ML decision differs from the transmitted frame".into())?;
    }
    Ok(())
}

fn diversity_certificate() -> Result<(), String> {
    let d = OtfsDims::new(2, 2).map_err(|e| e.to_string())?;
    let p = precoder_frequency_selective(d).map_err(|e| e.to_string())?;
    let rep = diversity_gain(Scenario::FreqSel { taps: 2 }, &p.v, p.kind, d, Alphabet::Qpsk, &DiversityOptions::default())
        .map_err(|e| e.to_string())?;
    ensure(rep.exhaustive && rep.g_d == 2, || rep.summary.clone())
}

pub fn run_all() -> Vec<Check> {
    vec![
        ("vandermonde unitarity and power", unitarity()),
        ("fast precoder equals matrix", fast_precoder_matches_matrix()),
        ("channel oracle equivalence", oracle_equivalence()),
        ("modem round trip", modem_round_trip()),
        ("noiseless ML recovery", ml_noiseless()),
        ("full diversity at 2x2, L=2", diversity_certificate()),
    ]
}
