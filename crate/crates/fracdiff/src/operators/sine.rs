//! Dirichlet sine eigenbasis of the second-difference Laplacian on a
//! uniform interval or rectangle grid, with `O(N log N)` transforms.

use super::domain::Domain;
use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Type-I discrete sine transform `y_k = sum_j x_j sin(pi j k / (n+1))`
/// (indices from 1), evaluated through a complex FFT of length `2(n+1)`.
#[derive(Clone)]
struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Dst1 {
    fn new(n: usize, planner: &mut FftPlanner<f64>) -> Self {
        Dst1 {
            n,
            fft: planner.plan_fft_forward(2 * (n + 1)),
        }
    }

    fn apply(&self, data: &mut [f64], buf: &mut Vec<Complex<f64>>) {
        let n = self.n;
        let m = 2 * (n + 1);
        buf.clear();
        buf.resize(m, Complex::new(0.0, 0.0));
        for j in 0..n {
            buf[j + 1].re = data[j];
            buf[m - 1 - j].re = -data[j];
        }
        self.fft.process(buf);
        for k in 0..n {
            data[k] = -0.5 * buf[k + 1].im;
        }
    }
}

#[derive(Clone)]
pub(crate) struct SineBasis {
    counts: [usize; 2],
    two_d: bool,
    weight: f64,
    norm: f64,
    axis_eigenvalues: [Vec<f64>; 2],
    /// Sorted modes as zero-based `(kx, ky)`.
    modes: Vec<(usize, usize)>,
    eigenvalues: Vec<f64>,
    dst: [Dst1; 2],
}

impl fmt::Debug for SineBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SineBasis")
            .field("counts", &self.counts)
            .field("modes", &self.modes.len())
            .finish()
    }
}

/// `4/h^2 sin^2(k pi / (2(n+1)))` for `k = 1..n`.
pub(crate) fn axis_eigenvalues(n: usize, length: f64) -> Vec<f64> {
    let h = length / (n + 1) as f64;
    (1..=n)
        .map(|k| {
            let s = (k as f64 * PI / (2.0 * (n + 1) as f64)).sin();
            4.0 * s * s / (h * h)
        })
        .collect()
}

impl SineBasis {
    pub fn new(domain: &Domain) -> Self {
        let counts = domain.counts();
        let lengths = domain.lengths();
        let lam_x = axis_eigenvalues(counts[0], lengths[0]);
        let lam_y = if domain.dim() == 1 {
            vec![0.0]
        } else {
            axis_eigenvalues(counts[1], lengths[1])
        };
        let mut modes: Vec<(usize, usize)> = (0..counts[1])
            .flat_map(|ky| (0..counts[0]).map(move |kx| (kx, ky)))
            .collect();
        let lam = |m: &(usize, usize)| lam_x[m.0] + lam_y[m.1];
        modes.sort_by(|a, b| lam(a).total_cmp(&lam(b)).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));
        let eigenvalues = modes.iter().map(lam).collect();
        let mut norm = (2.0 / lengths[0]).sqrt();
        if domain.dim() == 2 {
            norm *= (2.0 / lengths[1]).sqrt();
        }
        let mut planner = FftPlanner::new();
        let dst = [
            Dst1::new(counts[0], &mut planner),
            Dst1::new(counts[1], &mut planner),
        ];
        SineBasis {
            counts,
            two_d: domain.dim() == 2,
            weight: domain.weight(),
            norm,
            axis_eigenvalues: [lam_x, lam_y],
            modes,
            eigenvalues,
            dst,
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvalue of every mode in grid layout (index `kx + nx ky`).
    pub fn grid_eigenvalues(&self) -> Vec<f64> {
        let [nx, ny] = self.counts;
        let mut out = vec![0.0; nx * ny];
        for ky in 0..ny {
            for kx in 0..nx {
                out[kx + nx * ky] = self.axis_eigenvalues[0][kx] + self.axis_eigenvalues[1][ky];
            }
        }
        out
    }

    /// Weighted-orthonormal eigenvectors as columns, in sorted mode order.
    pub fn eigenvector_matrix(&self) -> DMatrix<f64> {
        let [nx, ny] = self.counts;
        let n = nx * ny;
        let sx: Vec<Vec<f64>> = (0..nx)
            .map(|k| {
                (0..nx)
                    .map(|j| (PI * ((j + 1) * (k + 1)) as f64 / (nx + 1) as f64).sin())
                    .collect()
            })
            .collect();
        let sy: Vec<Vec<f64>> = (0..ny)
            .map(|k| {
                (0..ny)
                    .map(|j| {
                        if !self.two_d {
                            1.0
                        } else {
                            (PI * ((j + 1) * (k + 1)) as f64 / (ny + 1) as f64).sin()
                        }
                    })
                    .collect()
            })
            .collect();
        let mut phi = DMatrix::zeros(n, n);
        for (col, &(kx, ky)) in self.modes.iter().enumerate() {
            for iy in 0..ny {
                for ix in 0..nx {
                    phi[(ix + nx * iy, col)] = self.norm * sx[kx][ix] * sy[ky][iy];
                }
            }
        }
        phi
    }

    fn transform(&self, v: &mut [f64]) {
        let [nx, ny] = self.counts;
        let mut buf = Vec::new();
        for row in v.chunks_mut(nx) {
            self.dst[0].apply(row, &mut buf);
        }
        if self.two_d {
            let mut col = vec![0.0; ny];
            for ix in 0..nx {
                for iy in 0..ny {
                    col[iy] = v[ix + nx * iy];
                }
                self.dst[1].apply(&mut col, &mut buf);
                for iy in 0..ny {
                    v[ix + nx * iy] = col[iy];
                }
            }
        }
    }

    /// Coefficients `Phi^T W v` in grid mode layout.
    pub fn analyze(&self, v: &[f64]) -> Vec<f64> {
        let mut c = v.to_vec();
        self.transform(&mut c);
        let scale = self.weight * self.norm;
        c.iter_mut().for_each(|x| *x *= scale);
        c
    }

    /// Grid function `Phi c` from grid-layout coefficients.
    pub fn synthesize(&self, c: &[f64]) -> Vec<f64> {
        let mut v = c.to_vec();
        self.transform(&mut v);
        v.iter_mut().for_each(|x| *x *= self.norm);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dst(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (1..=n)
            .map(|k| {
                (1..=n)
                    .map(|j| x[j - 1] * (PI * (j * k) as f64 / (n + 1) as f64).sin())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn dst_matches_direct_sum() {
        let x: Vec<f64> = (0..13).map(|i| ((i * 7 % 5) as f64) - 1.5).collect();
        let mut planner = FftPlanner::new();
        let d = Dst1::new(13, &mut planner);
        let mut y = x.clone();
        d.apply(&mut y, &mut Vec::new());
        for (a, b) in y.iter().zip(naive_dst(&x)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transforms_match_dense_basis() {
        for domain in [
            Domain::interval(1.3, 9).unwrap(),
            Domain::rectangle(1.0, 0.7, 5, 4).unwrap(),
        ] {
            let b = SineBasis::new(&domain);
            let phi = b.eigenvector_matrix();
            let n = domain.len();
            let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() + 0.2).collect();
            let c = b.analyze(&v);
            let back = b.synthesize(&c);
            for (a, b) in back.iter().zip(&v) {
                assert!((a - b).abs() < 1e-12);
            }
            // Orthonormality in the weighted inner product.
            let gram = phi.transpose() * &phi * domain.weight();
            let err = (gram - DMatrix::<f64>::identity(n, n)).abs().max();
            assert!(err < 1e-12, "{err}");
            // Grid-layout coefficients agree with the dense projection.
            let nx = domain.counts()[0];
            let grid_lam = b.grid_eigenvalues();
            for (col, &(kx, ky)) in b.modes.iter().enumerate() {
                let k = kx + nx * ky;
                assert_eq!(grid_lam[k], b.eigenvalues()[col]);
                let dense: f64 = (0..n).map(|i| phi[(i, col)] * v[i]).sum::<f64>() * domain.weight();
                assert!((c[k] - dense).abs() < 1e-12);
            }
        }
    }
}
