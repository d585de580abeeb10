//! Far-field emission observables computed from dipole traces.
//!
//! Fourier convention: `ã(ω) = ∫a(t)e^{iωt}dt`, so the positive-frequency
//! part `a⁺` oscillates as `e^{−iωt}` and the detector demodulates with
//! `e^{+iωt′}`. With this choice a counter-clockwise rotating dipole
//! (`μx = cos ωt`, `μy = sin ωt`) has `S3/S0 = +1` at `+ω`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::units::{C_LIGHT, E_CHARGE, EPS0};

#[derive(Debug, Clone, PartialEq)]
pub struct DipoleChannel {
    pub label: String,
    /// `None` for the whole-stack channel.
    pub ring_index: Option<usize>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Uniformly sampled dipole moments, e·nm (or e·nm/ps² after
/// [`second_derivative`]).
#[derive(Debug, Clone, PartialEq)]
pub struct DipoleTrace {
    pub t0: f64,
    /// ps
    pub dt: f64,
    pub channels: Vec<DipoleChannel>,
}

impl DipoleTrace {
    /// Builds a trace from explicit sample times, which must be uniform.
    pub fn from_times(times: &[f64], channels: Vec<DipoleChannel>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Contract("a trace needs at least two samples".into()));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        for w in times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1e-12) {
                return Err(Error::Contract("dipole trace is not uniformly sampled".into()));
            }
        }
        for c in &channels {
            if c.x.len() != times.len() || c.y.len() != times.len() {
                return Err(Error::Contract(format!("channel {} length mismatch", c.label)));
            }
        }
        Ok(DipoleTrace { t0: times[0], dt, channels })
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.x.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.t0 + k as f64 * self.dt).collect()
    }

    pub fn end(&self) -> f64 {
        self.t0 + (self.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn channel(&self, label: &str) -> Option<&DipoleChannel> {
        self.channels.iter().find(|c| c.label == label)
    }
}

/// Second derivative of a uniformly sampled series: centred 5-point stencil
/// inside, 5-point one-sided stencils at the two points nearest each end.
pub fn second_derivative_series(f: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = f.len();
    if n < 5 {
        return Err(Error::Contract(format!("second derivative needs >= 5 samples, got {n}")));
    }
    let c = 1.0 / (12.0 * dt * dt);
    let mut out = vec![0.0; n];
    for i in 2..n - 2 {
        out[i] = (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]) * c;
    }
    out[0] = (35.0 * f[0] - 104.0 * f[1] + 114.0 * f[2] - 56.0 * f[3] + 11.0 * f[4]) * c;
    out[1] = (11.0 * f[0] - 20.0 * f[1] + 6.0 * f[2] + 4.0 * f[3] - f[4]) * c;
    out[n - 1] = (35.0 * f[n - 1] - 104.0 * f[n - 2] + 114.0 * f[n - 3] - 56.0 * f[n - 4] + 11.0 * f[n - 5]) * c;
    out[n - 2] = (11.0 * f[n - 1] - 20.0 * f[n - 2] + 6.0 * f[n - 3] + 4.0 * f[n - 4] - f[n - 5]) * c;
    Ok(out)
}

pub fn second_derivative(trace: &DipoleTrace) -> Result<DipoleTrace> {
    let channels = trace
        .channels
        .iter()
        .map(|c| {
            Ok(DipoleChannel {
                label: c.label.clone(),
                ring_index: c.ring_index,
                x: second_derivative_series(&c.x, trace.dt)?,
                y: second_derivative_series(&c.y, trace.dt)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DipoleTrace { t0: trace.t0, dt: trace.dt, channels })
}

/// Gaussian detection window `G(t) = (2/π)^{1/4} ΔT^{−1/2} e^{−t²/ΔT²}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionWindow {
    /// ΔT, ps
    pub width: f64,
}

impl DetectionWindow {
    pub fn value(&self, t: f64) -> f64 {
        (2.0 / std::f64::consts::PI).powf(0.25) / self.width.sqrt() * (-(t * t) / (self.width * self.width)).exp()
    }

    /// Half-width of the support used in sums, ps.
    pub fn support(&self) -> f64 {
        4.0 * self.width
    }
}

/// Positive-frequency part `a⁺` of a real series (global zero-padded DFT),
/// so that `a = a⁺ + (a⁺)*`.
pub fn positive_frequency_part(a: &[f64]) -> Vec<Complex64> {
    let n = a.len();
    if n == 0 {
        return Vec::new();
    }
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(m, Complex64::default());
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    // Bins above m/2 carry e^{−iωt} in the forward-FFT convention.
    let scale = 1.0 / m as f64;
    for (k, z) in buf.iter_mut().enumerate() {
        *z *= if k == 0 || k == m / 2 {
            0.5 * scale
        } else if k > m / 2 {
            scale
        } else {
            0.0
        };
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    buf.truncate(n);
    buf
}

/// Positive-frequency parts of one channel's x and y components, plus the
/// sampling needed to filter them.
#[derive(Debug, Clone)]
pub struct AnalyticPair {
    pub t0: f64,
    pub dt: f64,
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

impl AnalyticPair {
    pub fn new(trace: &DipoleTrace, channel: &DipoleChannel) -> Self {
        AnalyticPair {
            t0: trace.t0,
            dt: trace.dt,
            x: positive_frequency_part(&channel.x),
            y: positive_frequency_part(&channel.y),
        }
    }
}

/// `∫a⁺(t′)G(t − t′)e^{iωt′}dt′` over the samples of `a⁺`; the flag is set
/// when the window support pokes out of the trace.
pub fn filtered_field(a_plus: &[Complex64], t0: f64, dt: f64, window: &DetectionWindow, omega: f64, t: f64) -> (Complex64, bool) {
    let (lo, hi, edge) = window_range(a_plus.len(), t0, dt, window, t);
    let mut acc = Complex64::default();
    for (n, a) in a_plus[lo..hi].iter().enumerate() {
        let tn = t0 + (lo + n) as f64 * dt;
        acc += a * Complex64::from_polar(window.value(t - tn), omega * tn);
    }
    (acc * dt, edge)
}

fn window_range(len: usize, t0: f64, dt: f64, window: &DetectionWindow, t: f64) -> (usize, usize, bool) {
    let s = window.support();
    let first = ((t - s - t0) / dt).ceil();
    let last = ((t + s - t0) / dt).floor();
    let edge = first < 0.0 || last > (len as f64 - 1.0);
    let lo = first.max(0.0) as usize;
    let hi = ((last + 1.0).max(0.0) as usize).min(len);
    (lo.min(hi), hi, edge)
}

/// Uniform time and frequency axes of a spectrogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axes {
    /// ps
    pub times: Vec<f64>,
    /// THz (cycles per ps)
    pub freqs: Vec<f64>,
}

impl Axes {
    /// `n_freq` bins spanning `[f_min, f_max]` inclusive, and times from
    /// `t_start` to `t_end` every `t_step`.
    pub fn uniform(t_start: f64, t_end: f64, t_step: f64, f_min: f64, f_max: f64, n_freq: usize) -> Result<Self> {
        if !(t_step > 0.0) || !(t_end >= t_start) {
            return Err(Error::validation("analysis.time_step", "need t_step > 0 and a non-empty interval"));
        }
        if n_freq < 2 || !(f_max > f_min) || f_min < 0.0 {
            return Err(Error::validation("analysis.frequency", "need >= 2 bins over a non-empty, non-negative range"));
        }
        let nt = ((t_end - t_start) / t_step + 1e-9).floor() as usize + 1;
        Ok(Axes {
            times: (0..nt).map(|k| t_start + k as f64 * t_step).collect(),
            freqs: (0..n_freq).map(|k| f_min + (f_max - f_min) * k as f64 / (n_freq - 1) as f64).collect(),
        })
    }
}

/// Time-resolved Stokes parameters of one channel, time-major `[t][f]`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub label: String,
    pub ring_index: Option<usize>,
    pub axes: Axes,
    pub window: DetectionWindow,
    pub s0: Vec<f64>,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub s3: Vec<f64>,
    /// Per time row: window support extends beyond the trace.
    pub edge: Vec<bool>,
}

/// `1/(6π²ε₀c³)` in SI.
pub fn stokes_prefactor() -> f64 {
    1.0 / (6.0 * std::f64::consts::PI.powi(2) * EPS0 * C_LIGHT.powi(3))
}

/// e·nm/ps² → C·m/s².
const ACCEL_SI: f64 = E_CHARGE * 1e-9 / 1e-24;

impl Spectrogram {
    pub fn nt(&self) -> usize {
        self.axes.times.len()
    }

    pub fn nf(&self) -> usize {
        self.axes.freqs.len()
    }

    pub fn max_s0(&self) -> f64 {
        self.s0.iter().cloned().fold(0.0, f64::max)
    }

    /// `(time index, freq index, S0)` of the global S0 maximum.
    pub fn peak(&self) -> (usize, usize, f64) {
        let (k, v) = self.s0.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (k, v)| if *v > acc.1 { (k, *v) } else { acc });
        (k / self.nf(), k % self.nf(), v)
    }

    /// Degree of polarization per bin (0 where S0 is below `floor`).
    pub fn degree_of_polarization(&self, floor: f64) -> Vec<f64> {
        (0..self.s0.len())
            .map(|k| {
                if self.s0[k] > floor {
                    (self.s1[k].powi(2) + self.s2[k].powi(2) + self.s3[k].powi(2)).sqrt() / self.s0[k]
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Normalized Stokes vector `(S1, S2, S3)/S0` at one bin.
    pub fn normalized(&self, it: usize, jf: usize) -> [f64; 3] {
        let k = it * self.nf() + jf;
        let s0 = self.s0[k];
        [self.s1[k] / s0, self.s2[k] / s0, self.s3[k] / s0]
    }
}

/// Stokes spectrograms of every channel of a μ̈ trace (e·nm/ps²).
pub fn stokes(accel: &DipoleTrace, window: DetectionWindow, axes: &Axes, exec: Execution) -> Vec<Spectrogram> {
    let k = stokes_prefactor();
    // SI scaling of |X|²: μ̈ in C·m/s², dt in s, G in s^{-1/2}.
    let unit = ACCEL_SI * ACCEL_SI * 1e-12;
    accel
        .channels
        .iter()
        .map(|ch| {
            let pair = AnalyticPair::new(accel, ch);
            let rows = par::map(exec, &axes.times, |&t| {
                let nf = axes.freqs.len();
                let mut row = vec![[0.0; 4]; nf];
                let mut edge = false;
                for (j, f) in axes.freqs.iter().enumerate() {
                    let omega = std::f64::consts::TAU * f;
                    let (x, ex) = filtered_field(&pair.x, pair.t0, pair.dt, &window, omega, t);
                    let (y, _) = filtered_field(&pair.y, pair.t0, pair.dt, &window, omega, t);
                    edge |= ex;
                    let xy = x.conj() * y;
                    row[j] = [
                        k * unit * (x.norm_sqr() + y.norm_sqr()),
                        k * unit * (x.norm_sqr() - y.norm_sqr()),
                        2.0 * k * unit * xy.re,
                        2.0 * k * unit * xy.im,
                    ];
                }
                (row, edge)
            });
            let n = axes.times.len() * axes.freqs.len();
            let mut s = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
            let mut edge = Vec::with_capacity(axes.times.len());
            for (row, e) in rows {
                for v in row {
                    for q in 0..4 {
                        s[q].push(v[q]);
                    }
                }
                edge.push(e);
            }
            let [s0, s1, s2, s3] = s;
            Spectrogram { label: ch.label.clone(), ring_index: ch.ring_index, axes: axes.clone(), window, s0, s1, s2, s3, edge }
        })
        .collect()
}

/// Morlet scalogram power `|W_x|² + |W_y|²`, time-major.
#[derive(Debug, Clone)]
pub struct Scalogram {
    pub label: String,
    pub axes: Axes,
    pub cycles: f64,
    pub power: Vec<f64>,
}

/// Complex Morlet transform of a real series at angular frequency `omega`:
/// `W = ∫a(t′)·(1/s)·ψ*((t′ − t)/s)dt′`, `ψ(u) = π^{−1/4}e^{iω₀u}e^{−u²/2}`,
/// `s = ω₀/ω` (L1 normalization, so a unit tone has a frequency-independent
/// response).
pub fn morlet_coefficient(a: &[f64], t0: f64, dt: f64, omega0: f64, omega: f64, t: f64) -> Complex64 {
    let s = omega0 / omega;
    let reach = 5.0 * s;
    let lo = (((t - reach - t0) / dt).ceil().max(0.0)) as usize;
    let hi = ((((t + reach - t0) / dt).floor() + 1.0).max(0.0) as usize).min(a.len());
    let norm = std::f64::consts::PI.powf(-0.25) / s;
    let mut acc = Complex64::default();
    for (n, v) in a.iter().enumerate().take(hi).skip(lo) {
        let u = (t0 + n as f64 * dt - t) / s;
        acc += Complex64::from_polar(v * (-0.5 * u * u).exp(), -omega0 * u);
    }
    acc * (norm * dt)
}

/// Morlet cross-check of the windowed-FT spectrogram. `cycles` is the
/// dimensionless centre frequency ω₀ of the mother wavelet.
pub fn wavelet_check(accel: &DipoleTrace, axes: &Axes, cycles: f64, exec: Execution) -> Vec<Scalogram> {
    accel
        .channels
        .iter()
        .map(|ch| {
            let rows = par::map(exec, &axes.times, |&t| {
                axes.freqs
                    .iter()
                    .map(|f| {
                        let omega = std::f64::consts::TAU * f;
                        if omega <= 0.0 {
                            return 0.0;
                        }
                        let wx = morlet_coefficient(&ch.x, accel.t0, accel.dt, cycles, omega, t);
                        let wy = morlet_coefficient(&ch.y, accel.t0, accel.dt, cycles, omega, t);
                        wx.norm_sqr() + wy.norm_sqr()
                    })
                    .collect::<Vec<f64>>()
            });
            Scalogram { label: ch.label.clone(), axes: axes.clone(), cycles, power: rows.into_iter().flatten().collect() }
        })
        .collect()
}

/// Pearson correlation of two maps restricted to `mask`.
pub fn masked_correlation(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    let pts: Vec<(f64, f64)> = a.iter().zip(b).zip(mask).filter(|(_, m)| **m).map(|((x, y), _)| (*x, *y)).collect();
    let n = pts.len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let (mx, my) = pts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / n, acc.1 + p.1 / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pts {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Planar `D_zz(t)` record with its summary numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrupoleDiagnostic {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Half the peak-to-peak excursion, e·nm².
    pub oscillation: f64,
}

/// `D_zz = −∫ρ̃ρ²` is produced by the propagator; this summarizes it.
pub fn quadrupole_diagnostic(values: &[f64]) -> QuadrupoleDiagnostic {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(*v), a.1.max(*v)));
    QuadrupoleDiagnostic { values: values.to_vec(), mean, oscillation: if values.is_empty() { 0.0 } else { 0.5 * (hi - lo) } }
}

#[cfg(test)]
mod tests;
