//! Cell-centred Cartesian grid on `[−L, L]²` and batched 1D FFTs.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_absorber_enabled() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Half-width L of the square domain, nm.
    pub extent: f64,
    /// fs
    pub dt: f64,
    pub n_steps: usize,
    /// Width of the absorbing frame, nm. Defaults to 10% of `extent`.
    #[serde(default)]
    pub absorber_width: Option<f64>,
    #[serde(default = "default_absorber_enabled")]
    pub absorber: bool,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 64 || self.ny < 64 {
            return Err(Error::validation("grid.nx/ny", "need at least 64 points per axis"));
        }
        if !(self.extent > 0.0) {
            return Err(Error::validation("grid.extent", "must be > 0"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::validation("grid.dt", "must be > 0"));
        }
        let w = self.absorber_width();
        if !(w >= 0.0) || w >= self.extent {
            return Err(Error::validation("grid.absorber_width", "must lie in [0, extent)"));
        }
        Ok(())
    }

    pub fn absorber_width(&self) -> f64 {
        self.absorber_width.unwrap_or(0.1 * self.extent)
    }

    /// Time step in ps.
    pub fn dt_ps(&self) -> f64 {
        self.dt * 1e-3
    }

    /// Radius inside which the grid is free of absorber, nm.
    pub fn clear_radius(&self) -> f64 {
        self.extent - if self.absorber { self.absorber_width() } else { 0.0 }
    }
}

/// Precomputed coordinates, wavenumbers and FFT plans.
#[derive(Clone)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub extent: f64,
    pub hx: f64,
    pub hy: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Angular wavenumbers in FFT order, nm⁻¹.
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("nx", &self.nx).field("ny", &self.ny).field("extent", &self.extent).finish()
    }
}

fn wavenumbers(n: usize, h: f64) -> Vec<f64> {
    let dk = std::f64::consts::TAU / (n as f64 * h);
    (0..n)
        .map(|i| {
            let j = if i <= n / 2 { i as isize } else { i as isize - n as isize };
            j as f64 * dk
        })
        .collect()
}

impl Grid {
    pub fn new(spec: &GridSpec) -> Result<Self> {
        spec.validate()?;
        let (nx, ny, l) = (spec.nx, spec.ny, spec.extent);
        let hx = 2.0 * l / nx as f64;
        let hy = 2.0 * l / ny as f64;
        let xs = (0..nx).map(|i| -l + (i as f64 + 0.5) * hx).collect();
        let ys = (0..ny).map(|j| -l + (j as f64 + 0.5) * hy).collect();
        let mut planner = FftPlanner::new();
        Ok(Grid {
            nx,
            ny,
            extent: l,
            hx,
            hy,
            xs,
            ys,
            kx: wavenumbers(nx, hx),
            ky: wavenumbers(ny, hy),
            fft_x: planner.plan_fft_forward(nx),
            ifft_x: planner.plan_fft_inverse(nx),
            fft_y: planner.plan_fft_forward(ny),
            ifft_y: planner.plan_fft_inverse(ny),
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// Row-major index, x fastest.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Scratch length needed by [`Grid::fft_rows`] and friends.
    pub fn scratch_len(&self) -> usize {
        [&self.fft_x, &self.ifft_x, &self.fft_y, &self.ifft_y]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0)
    }

    /// Unnormalized forward (or inverse) FFT along x of every row.
    pub fn fft_rows(&self, data: &mut [Complex64], inverse: bool, scratch: &mut [Complex64]) {
        let plan = if inverse { &self.ifft_x } else { &self.fft_x };
        plan.process_with_scratch(data, scratch);
    }

    /// FFT along y of every column, for data stored transposed (y fastest).
    pub fn fft_cols_transposed(&self, data: &mut [Complex64], inverse: bool, scratch: &mut [Complex64]) {
        let plan = if inverse { &self.ifft_y } else { &self.fft_y };
        plan.process_with_scratch(data, scratch);
    }

    /// `dst[i·ny + j] = src[j·nx + i]`.
    pub fn transpose(&self, src: &[Complex64], dst: &mut [Complex64]) {
        transpose_blocked(src, dst, self.nx, self.ny);
    }

    /// Inverse of [`Grid::transpose`].
    pub fn untranspose(&self, src: &[Complex64], dst: &mut [Complex64]) {
        transpose_blocked(src, dst, self.ny, self.nx);
    }

    /// `Σ|ψ|² h²`.
    pub fn norm_sqr(&self, psi: &[Complex64]) -> f64 {
        psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.cell_area()
    }

    /// `⟨a|b⟩ = Σ a* b h²`.
    pub fn inner(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>() * self.cell_area()
    }

    /// Spectral partial derivatives (∂x ψ, ∂y ψ).
    pub fn gradient(&self, psi: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut scratch = vec![Complex64::default(); self.scratch_len()];
        let (nx, ny) = (self.nx, self.ny);
        let mut dx = psi.to_vec();
        self.fft_rows(&mut dx, false, &mut scratch);
        for row in dx.chunks_mut(nx) {
            for (z, k) in row.iter_mut().zip(&self.kx) {
                *z *= Complex64::new(0.0, *k / nx as f64);
            }
        }
        self.fft_rows(&mut dx, true, &mut scratch);
        let mut t = vec![Complex64::default(); psi.len()];
        self.transpose(psi, &mut t);
        self.fft_cols_transposed(&mut t, false, &mut scratch);
        for col in t.chunks_mut(ny) {
            for (z, k) in col.iter_mut().zip(&self.ky) {
                *z *= Complex64::new(0.0, *k / ny as f64);
            }
        }
        self.fft_cols_transposed(&mut t, true, &mut scratch);
        let mut dy = vec![Complex64::default(); psi.len()];
        self.untranspose(&t, &mut dy);
        (dx, dy)
    }
}

/// Transposes a `rows × cols` row-major matrix (`cols` fastest) into `dst`.
fn transpose_blocked(src: &[Complex64], dst: &mut [Complex64], cols: usize, rows: usize) {
    const B: usize = 16;
    for jb in (0..rows).step_by(B) {
        for ib in (0..cols).step_by(B) {
            for j in jb..(jb + B).min(rows) {
                for i in ib..(ib + B).min(cols) {
                    dst[i * rows + j] = src[j * cols + i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(n: usize) -> GridSpec {
        GridSpec { nx: n, ny: n, extent: 100.0, dt: 1.0, n_steps: 1, absorber_width: None, absorber: false }
    }

    #[test]
    fn cell_centres_are_symmetric() {
        let g = Grid::new(&spec(64)).unwrap();
        for i in 0..64 {
            assert_relative_eq!(g.xs[i], -g.xs[63 - i], epsilon = 1e-12);
        }
        assert!(Grid::new(&spec(32)).is_err());
    }

    #[test]
    fn transpose_round_trip() {
        let s = GridSpec { nx: 64, ny: 96, ..spec(64) };
        let g = Grid::new(&s).unwrap();
        let a: Vec<Complex64> = (0..g.len()).map(|k| Complex64::new(k as f64, -(k as f64))).collect();
        let mut t = vec![Complex64::default(); g.len()];
        let mut b = vec![Complex64::default(); g.len()];
        g.transpose(&a, &mut t);
        assert_eq!(t[5 * 96 + 7], a[7 * 64 + 5]);
        g.untranspose(&t, &mut b);
        assert_eq!(a, b);
    }

    #[test]
    fn spectral_gradient_of_gaussian() {
        let g = Grid::new(&spec(128)).unwrap();
        let s = 12.0;
        let psi: Vec<Complex64> = g
            .ys
            .iter()
            .flat_map(|y| g.xs.iter().map(move |x| Complex64::new((-(x * x + y * y) / (2.0 * s * s)).exp(), 0.0)))
            .collect();
        let (dx, dy) = g.gradient(&psi);
        for (j, y) in g.ys.iter().enumerate().step_by(7) {
            for (i, x) in g.xs.iter().enumerate().step_by(5) {
                let f = (-(x * x + y * y) / (2.0 * s * s)).exp();
                assert!((dx[g.index(i, j)].re + x / (s * s) * f).abs() < 1e-10);
                assert!((dy[g.index(i, j)].re + y / (s * s) * f).abs() < 1e-10);
            }
        }
    }
}
