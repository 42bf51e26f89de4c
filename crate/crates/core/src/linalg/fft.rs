//! Fast unitary transforms matching [`super::dft_matrix`].
//!
//! `DdTransforms` applies the four structured factors that appear in every
//! OTFS expression without ever forming them densely: `F_MN`, `F_MN^H`,
//! `F_N ⊗ I_M` and `F_N^H ⊗ I_M`.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use super::C64;

/// Unitary forward/inverse FFT pair of a fixed size.
#[derive(Clone)]
pub struct UnitaryFft {
    len: usize,
    scale: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for UnitaryFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitaryFft").field("len", &self.len).finish()
    }
}

impl UnitaryFft {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "FFT length must be positive");
        let mut planner = FftPlanner::new();
        UnitaryFft {
            len,
            scale: 1.0 / (len as f64).sqrt(),
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// In place `buf <- F buf`.
    pub fn forward(&self, buf: &mut [C64]) {
        debug_assert_eq!(buf.len(), self.len);
        if self.len > 1 {
            self.forward.process(buf);
            buf.iter_mut().for_each(|z| *z *= self.scale);
        }
    }

    /// In place `buf <- F^H buf`.
    pub fn inverse(&self, buf: &mut [C64]) {
        debug_assert_eq!(buf.len(), self.len);
        if self.len > 1 {
            self.inverse.process(buf);
            buf.iter_mut().for_each(|z| *z *= self.scale);
        }
    }
}

/// Cached plans for an M x N delay-Doppler grid.
#[derive(Clone, Debug)]
pub struct DdTransforms {
    m: usize,
    n: usize,
    doppler: UnitaryFft,
    full: UnitaryFft,
}

impl DdTransforms {
    pub fn new(m: usize, n: usize) -> Self {
        DdTransforms { m, n, doppler: UnitaryFft::new(n), full: UnitaryFft::new(m * n) }
    }

    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    fn along_doppler(&self, buf: &mut [C64], inverse: bool) {
        assert_eq!(buf.len(), self.mn(), "buffer length must be MN");
        if self.n == 1 {
            return;
        }
        let mut row = vec![C64::new(0.0, 0.0); self.n];
        for d in 0..self.m {
            for (k, r) in row.iter_mut().enumerate() {
                *r = buf[d + self.m * k];
            }
            if inverse {
                self.doppler.inverse(&mut row);
            } else {
                self.doppler.forward(&mut row);
            }
            for (k, r) in row.iter().enumerate() {
                buf[d + self.m * k] = *r;
            }
        }
    }

    /// `buf <- (F_N ⊗ I_M) buf`, i.e. `vec(invec(buf) F_N)`.
    pub fn kron_fn(&self, buf: &mut [C64]) {
        self.along_doppler(buf, false);
    }

    /// `buf <- (F_N^H ⊗ I_M) buf`, i.e. `vec(invec(buf) F_N^H)`.
    pub fn kron_fn_adj(&self, buf: &mut [C64]) {
        self.along_doppler(buf, true);
    }

    /// `buf <- F_MN buf`.
    pub fn fft_mn(&self, buf: &mut [C64]) {
        self.full.forward(buf);
    }

    /// `buf <- F_MN^H buf`.
    pub fn ifft_mn(&self, buf: &mut [C64]) {
        self.full.inverse(buf);
    }
}
