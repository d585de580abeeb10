//! Second-order, exactly unitary stepper for the electron Hamiltonian
//! `H = κ(−i∇ + q)² + V` with the gauge wavevector `q = eA/ħ`.
//!
//! `(−i∂x + qx)²` is the plain kinetic operator conjugated by `e^{iΛx}` with
//! `∂xΛx = −qx`, so each Cartesian part is exponentiated exactly by FFTs
//! sandwiched between gauge phases. This keeps the `A·∇`, `∇·A` and `A²`
//! couplings without any commutator error between them. The sequence per step
//! is `V/2, Kx/2, Ky, Kx/2, V/2` with the field frozen at the step midpoint.

use num_complex::Complex64;

use super::grid::Grid;
use super::{EvolvingState, OrbitalField};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::ring_model::{potential_unchecked, Material, RingStack};
use crate::units::HBAR;
use crate::vortex_field::PulseSpec;

/// A pulse together with its peak gauge wavevector `q₀ = eA₀/ħ` (nm⁻¹).
#[derive(Debug, Clone)]
pub struct Drive {
    pub pulse: PulseSpec,
    pub q0: f64,
}

/// `∫_{−L}^{x} U dx'` and `∫_{−L}^{y} U dy'` for the in-phase (`Re εF`) and
/// quadrature (`Im εF`) parts of the spatial field.
struct GaugeIntegrals {
    x_re: Vec<f64>,
    x_im: Vec<f64>,
    y_re: Vec<f64>,
    y_im: Vec<f64>,
    /// max |εF| over the grid, for the resolution check.
    peak: f64,
}

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

fn gauss(a: f64, b: f64, f: impl Fn(f64) -> Complex64) -> Complex64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    GAUSS4.iter().map(|(x, w)| f(mid + half * x) * (w * half)).sum()
}

impl GaugeIntegrals {
    fn new(grid: &Grid, pulse: &PulseSpec, exec: Execution) -> Self {
        let shape = pulse.profile();
        let [ex, ey] = pulse.polarization.vector();
        let l = grid.extent;
        let (nx, ny) = (grid.nx, grid.ny);
        // Rows: integrate along x for every y.
        let rows: Vec<Vec<Complex64>> = par::map(exec, &grid.ys, |&y| {
            let mut acc = Complex64::default();
            let mut lower = -l;
            grid.xs
                .iter()
                .map(|&x| {
                    acc += gauss(lower, x, |s| ex * shape.complex_at(s, y));
                    lower = x;
                    acc
                })
                .collect()
        });
        let cols: Vec<Vec<Complex64>> = par::map(exec, &grid.xs, |&x| {
            let mut acc = Complex64::default();
            let mut lower = -l;
            grid.ys
                .iter()
                .map(|&y| {
                    acc += gauss(lower, y, |s| ey * shape.complex_at(x, s));
                    lower = y;
                    acc
                })
                .collect()
        });
        let mut out = GaugeIntegrals {
            x_re: vec![0.0; nx * ny],
            x_im: vec![0.0; nx * ny],
            y_re: vec![0.0; nx * ny],
            y_im: vec![0.0; nx * ny],
            peak: 0.0,
        };
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                out.x_re[k] = rows[j][i].re;
                out.x_im[k] = rows[j][i].im;
                out.y_re[k] = cols[i][j].re;
                out.y_im[k] = cols[i][j].im;
                let f = shape.complex_at(grid.xs[i], grid.ys[j]);
                out.peak = out.peak.max((ex * f).norm()).max((ey * f).norm());
            }
        }
        out
    }
}

/// Pointwise phase factors for one driven step.
pub(crate) struct StepPhases {
    enter: Vec<Complex64>,
    x_to_y: Vec<Complex64>,
    y_to_x: Vec<Complex64>,
    leave: Vec<Complex64>,
}

pub struct Propagator {
    grid: Grid,
    dt: f64,
    potential: Vec<f64>,
    half_potential: Vec<Complex64>,
    /// `e^{−iV dt/2ħ}` times the absorbing mask (if any).
    half_potential_out: Vec<Complex64>,
    kx_half: Vec<Complex64>,
    kx_full: Vec<Complex64>,
    ky_full: Vec<Complex64>,
    drive: Option<(Drive, GaugeIntegrals)>,
    exec: Execution,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator").field("grid", &self.grid).field("dt", &self.dt).finish()
    }
}

fn kinetic_phases(k: &[f64], kappa: f64, tau: f64) -> Vec<Complex64> {
    let n = k.len() as f64;
    k.iter().map(|k| Complex64::from_polar(1.0 / n, -kappa * k * k * tau / HBAR)).collect()
}

/// `cos^{1/8}` ramp over the outer `width` of each axis.
pub fn absorber_mask(grid: &Grid, width: f64) -> Vec<f64> {
    let ramp = |s: f64| {
        let depth = s.abs() - (grid.extent - width);
        if width <= 0.0 || depth <= 0.0 {
            1.0
        } else {
            (std::f64::consts::FRAC_PI_2 * (depth / width).min(1.0)).cos().max(0.0).powf(0.125)
        }
    };
    grid.ys.iter().flat_map(|&y| grid.xs.iter().map(move |&x| ramp(x) * ramp(y))).collect()
}

impl Propagator {
    /// `dt` in ps; `absorber` is the absorbing frame width in nm.
    pub fn new(
        grid: &Grid,
        stack: &RingStack,
        material: &Material,
        drive: Option<Drive>,
        dt: f64,
        absorber: Option<f64>,
        exec: Execution,
    ) -> Result<Self> {
        let potential: Vec<f64> = grid
            .ys
            .iter()
            .flat_map(|&y| grid.xs.iter().map(move |&x| potential_unchecked(stack, x.hypot(y))))
            .collect();
        Self::with_potential(grid, potential, material.kinetic(), drive, dt, absorber, exec)
    }

    /// Same as [`Propagator::new`] for an arbitrary potential sampled on the
    /// grid (meV) and kinetic coefficient ħ²/2m* (meV·nm²).
    pub fn with_potential(
        grid: &Grid,
        potential: Vec<f64>,
        kappa: f64,
        drive: Option<Drive>,
        dt: f64,
        absorber: Option<f64>,
        exec: Execution,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::validation("grid.dt", "must be > 0"));
        }
        if potential.len() != grid.len() {
            return Err(Error::Contract("potential does not match the grid".into()));
        }
        let half_potential: Vec<Complex64> =
            potential.iter().map(|v| Complex64::from_polar(1.0, -v * dt / (2.0 * HBAR))).collect();
        let half_potential_out = match absorber {
            Some(w) => {
                let mask = absorber_mask(grid, w);
                half_potential.iter().zip(&mask).map(|(p, m)| p * m).collect()
            }
            None => half_potential.clone(),
        };
        let drive = match drive {
            Some(d) => {
                d.pulse.validate()?;
                let gauge = GaugeIntegrals::new(grid, &d.pulse, exec);
                let q_max = d.q0 * gauge.peak;
                let nyquist = std::f64::consts::PI / grid.hx.max(grid.hy);
                if !(q_max < 0.25 * nyquist) {
                    return Err(Error::Stability {
                        time_ps: 0.0,
                        message: format!(
                            "peak gauge wavevector {q_max:.3e} nm^-1 is not resolved by the grid (limit {:.3e}); \
                             refine the grid or lower the intensity",
                            0.25 * nyquist
                        ),
                    });
                }
                Some((d, gauge))
            }
            None => None,
        };
        Ok(Propagator {
            kx_half: kinetic_phases(&grid.kx, kappa, 0.5 * dt),
            kx_full: kinetic_phases(&grid.kx, kappa, dt),
            ky_full: kinetic_phases(&grid.ky, kappa, dt),
            grid: grid.clone(),
            dt,
            potential,
            half_potential,
            half_potential_out,
            drive,
            exec,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// ps
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn drive(&self) -> Option<&Drive> {
        self.drive.as_ref().map(|(d, _)| d)
    }

    /// Gauge wavevector `(qx, qy)` at grid cell `k` and time `t`, nm⁻¹.
    pub fn gauge_field(&self, k: usize, t: f64) -> (f64, f64) {
        let Some((d, _)) = &self.drive else { return (0.0, 0.0) };
        let shape = d.pulse.profile();
        let (i, j) = (k % self.grid.nx, k / self.grid.nx);
        let a = crate::vortex_field::vector_potential(&d.pulse, &shape, d.q0, self.grid.xs[i], self.grid.ys[j], t);
        (a.ax, a.ay)
    }

    fn phases(&self, t_mid: f64) -> Option<StepPhases> {
        let (drive, g) = self.drive.as_ref()?;
        let pulse = &drive.pulse;
        let env = pulse.envelope(t_mid);
        if env == 0.0 {
            return None;
        }
        let theta = pulse.omega() * t_mid + pulse.carrier_envelope_phase;
        // electron charge: Λ integrates −q
        let (c, s) = (-drive.q0 * env * theta.cos(), -drive.q0 * env * theta.sin());
        let n = self.grid.len();
        let mut out = StepPhases {
            enter: Vec::with_capacity(n),
            x_to_y: Vec::with_capacity(n),
            y_to_x: Vec::with_capacity(n),
            leave: Vec::with_capacity(n),
        };
        for k in 0..n {
            let lx = c * g.x_re[k] + s * g.x_im[k];
            let ly = c * g.y_re[k] + s * g.y_im[k];
            out.enter.push(self.half_potential[k] * Complex64::from_polar(1.0, -lx));
            out.x_to_y.push(Complex64::from_polar(1.0, lx - ly));
            out.y_to_x.push(Complex64::from_polar(1.0, ly - lx));
            out.leave.push(self.half_potential_out[k] * Complex64::from_polar(1.0, lx));
        }
        Some(out)
    }

    fn kick_rows(&self, psi: &mut [Complex64], phases: &[Complex64], scratch: &mut [Complex64]) {
        self.grid.fft_rows(psi, false, scratch);
        for row in psi.chunks_mut(self.grid.nx) {
            row.iter_mut().zip(phases).for_each(|(z, p)| *z *= p);
        }
        self.grid.fft_rows(psi, true, scratch);
    }

    fn kick_cols(&self, f: &mut OrbitalField) {
        self.grid.transpose(&f.psi, &mut f.work);
        self.grid.fft_cols_transposed(&mut f.work, false, &mut f.scratch);
        for col in f.work.chunks_mut(self.grid.ny) {
            col.iter_mut().zip(&self.ky_full).for_each(|(z, p)| *z *= p);
        }
        self.grid.fft_cols_transposed(&mut f.work, true, &mut f.scratch);
        self.grid.untranspose(&f.work, &mut f.psi);
    }

    fn advance(&self, f: &mut OrbitalField, phases: Option<&StepPhases>) {
        let mul = |psi: &mut [Complex64], p: &[Complex64]| psi.iter_mut().zip(p).for_each(|(z, p)| *z *= p);
        match phases {
            None => {
                mul(&mut f.psi, &self.half_potential);
                self.kick_rows(&mut f.psi, &self.kx_full, &mut f.scratch);
                self.kick_cols(f);
                mul(&mut f.psi, &self.half_potential_out);
            }
            Some(p) => {
                mul(&mut f.psi, &p.enter);
                self.kick_rows(&mut f.psi, &self.kx_half, &mut f.scratch);
                mul(&mut f.psi, &p.x_to_y);
                self.kick_cols(f);
                mul(&mut f.psi, &p.y_to_x);
                self.kick_rows(&mut f.psi, &self.kx_half, &mut f.scratch);
                mul(&mut f.psi, &p.leave);
            }
        }
    }

    /// Advances every orbital by one time step. Occupations are untouched.
    pub fn step(&self, state: &mut EvolvingState) {
        let t_mid = state.time + 0.5 * self.dt;
        let phases = self.phases(t_mid);
        par::for_each_mut(self.exec, &mut state.fields, |f| self.advance(f, phases.as_ref()));
        state.steps += 1;
        state.time = state.t0 + state.steps as f64 * self.dt;
    }

    /// Is the field on anywhere inside the step starting at `t`?
    pub fn driven_at(&self, t: f64) -> bool {
        self.drive.as_ref().is_some_and(|(d, _)| d.pulse.envelope(t + 0.5 * self.dt) > 0.0)
    }
}
