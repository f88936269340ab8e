//! Linear convolution on a voxel grid through zero-padded 3D FFTs.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Convolver {
    /// Grid size per axis.
    n: [usize; 3],
    /// Padded size per axis, `2 n`.
    p: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Convolver {
    pub(crate) fn new(n: [usize; 3]) -> Self {
        let p = [2 * n[0], 2 * n[1], 2 * n[2]];
        let mut planner = FftPlanner::new();
        let forward = [planner.plan_fft_forward(p[0]), planner.plan_fft_forward(p[1]), planner.plan_fft_forward(p[2])];
        let inverse = [planner.plan_fft_inverse(p[0]), planner.plan_fft_inverse(p[1]), planner.plan_fft_inverse(p[2])];
        Self { n, p, forward, inverse }
    }

    pub(crate) fn padded_len(&self) -> usize {
        self.p.iter().product()
    }

    fn padded_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.p[1] + j) * self.p[2] + k
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [p0, p1, p2] = self.p;
        // z lines are contiguous
        plans[2].process(data);
        let mut line = vec![Complex64::default(); p0.max(p1)];
        for i in 0..p0 {
            for k in 0..p2 {
                for j in 0..p1 {
                    line[j] = data[(i * p1 + j) * p2 + k];
                }
                plans[1].process(&mut line[..p1]);
                for j in 0..p1 {
                    data[(i * p1 + j) * p2 + k] = line[j];
                }
            }
        }
        for j in 0..p1 {
            for k in 0..p2 {
                for i in 0..p0 {
                    line[i] = data[(i * p1 + j) * p2 + k];
                }
                plans[0].process(&mut line[..p0]);
                for i in 0..p0 {
                    data[(i * p1 + j) * p2 + k] = line[i];
                }
            }
        }
    }

    /// Spectrum of a kernel given as a function of the integer offset.
    /// The kernel must be even in every offset component, so its spectrum is
    /// real.
    pub(crate) fn kernel_spectrum(&self, kernel: impl Fn([i64; 3]) -> f64) -> Vec<f64> {
        let mut data = vec![Complex64::default(); self.padded_len()];
        let wrap = |idx: usize, n: usize, p: usize| -> Option<i64> {
            if idx < n {
                Some(idx as i64)
            } else if idx > p - n {
                Some(idx as i64 - p as i64)
            } else {
                None
            }
        };
        for i in 0..self.p[0] {
            let Some(di) = wrap(i, self.n[0], self.p[0]) else { continue };
            for j in 0..self.p[1] {
                let Some(dj) = wrap(j, self.n[1], self.p[1]) else { continue };
                for k in 0..self.p[2] {
                    let Some(dk) = wrap(k, self.n[2], self.p[2]) else { continue };
                    data[self.padded_index(i, j, k)] = Complex64::new(kernel([di, dj, dk]), 0.0);
                }
            }
        }
        self.transform(&mut data, &self.forward);
        let scale = 1.0 / self.padded_len() as f64;
        data.iter().map(|z| z.re * scale).collect()
    }

    /// Spectrum of a grid field (zero padded).
    pub(crate) fn field_spectrum(&self, field: &[f64]) -> Vec<Complex64> {
        let mut data = vec![Complex64::default(); self.padded_len()];
        for i in 0..self.n[0] {
            for j in 0..self.n[1] {
                let src = (i * self.n[1] + j) * self.n[2];
                let dst = self.padded_index(i, j, 0);
                for k in 0..self.n[2] {
                    data[dst + k] = Complex64::new(field[src + k], 0.0);
                }
            }
        }
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse transform restricted to the original grid.
    pub(crate) fn to_field(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spectrum, &self.inverse);
        let mut out = vec![0.0; self.n.iter().product()];
        for i in 0..self.n[0] {
            for j in 0..self.n[1] {
                let dst = (i * self.n[1] + j) * self.n[2];
                let src = self.padded_index(i, j, 0);
                for k in 0..self.n[2] {
                    out[dst + k] = spectrum[src + k].re;
                }
            }
        }
        out
    }

    /// `sum_{c'} K(c - c') field(c')`.
    pub(crate) fn convolve(&self, kernel_hat: &[f64], field: &[f64]) -> Vec<f64> {
        let mut s = self.field_spectrum(field);
        for (z, k) in s.iter_mut().zip(kernel_hat) {
            *z *= *k;
        }
        self.to_field(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_convolution() {
        let n = [3, 4, 2];
        let conv = Convolver::new(n);
        let kernel = |d: [i64; 3]| 1.0 / (1.0 + (d[0] * d[0] + 2 * d[1] * d[1] + 3 * d[2] * d[2]) as f64);
        let hat = conv.kernel_spectrum(kernel);
        let total = 24;
        let field: Vec<f64> = (0..total).map(|c| ((c * 7) % 5) as f64 - 1.5).collect();
        let fast = conv.convolve(&hat, &field);
        let idx = |c: usize| [(c / 8) as i64, ((c / 2) % 4) as i64, (c % 2) as i64];
        for c in 0..total {
            let a = idx(c);
            let direct: f64 = (0..total)
                .map(|cc| {
                    let b = idx(cc);
                    kernel([a[0] - b[0], a[1] - b[1], a[2] - b[2]]) * field[cc]
                })
                .sum();
            assert!((fast[c] - direct).abs() < 1e-12, "{c}: {} vs {direct}", fast[c]);
        }
    }
}
