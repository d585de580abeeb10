//! Symmetric tridiagonal eigensolver: Sturm-sequence bisection for the
//! eigenvalues, inverse iteration (with partial-pivoting LU) for the vectors.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix with `diag[k]` and `off[k]` coupling k and k+1.
#[derive(Debug, Clone)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len());
        SymTridiag { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for k in 1..self.diag.len() {
            let e2 = self.off[k - 1] * self.off[k - 1];
            let prev = if q == 0.0 { f64::EPSILON * (self.off[k - 1].abs() + 1.0) } else { q };
            q = self.diag[k] - x - e2 / prev;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..n {
            let r = if k > 0 { self.off[k - 1].abs() } else { 0.0 }
                + if k + 1 < n { self.off[k].abs() } else { 0.0 };
            lo = lo.min(self.diag[k] - r);
            hi = hi.max(self.diag[k] + r);
        }
        (lo, hi)
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let (mut lo, hi0) = self.gershgorin();
        // Find a tight upper bracket by expanding from the lower end; the
        // Gershgorin upper bound can be enormous for singular potentials.
        let mut step = 1.0_f64.max(lo.abs() * 1e-3);
        let mut hi = lo + step;
        while self.count_below(hi) <= k && hi < hi0 {
            lo = hi;
            step *= 2.0;
            hi = (hi + step).min(hi0);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn matvec(&self, v: &[f64], out: &mut [f64]) {
        let n = self.len();
        for k in 0..n {
            let mut s = self.diag[k] * v[k];
            if k > 0 {
                s += self.off[k - 1] * v[k - 1];
            }
            if k + 1 < n {
                s += self.off[k] * v[k + 1];
            }
            out[k] = s;
        }
    }

    /// Residual norm ‖(T − λ)v‖ for a unit vector v.
    pub fn residual(&self, lambda: f64, v: &[f64]) -> f64 {
        let mut tv = vec![0.0; v.len()];
        self.matvec(v, &mut tv);
        tv.iter()
            .zip(v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Lowest `count` eigenpairs, eigenvectors unit-normalized in the
    /// Euclidean norm and mutually orthogonal.
    pub fn lowest(&self, count: usize) -> Result<Vec<(f64, Vec<f64>)>> {
        if count > self.len() {
            return Err(Error::Solver(format!(
                "requested {count} eigenpairs from a {}x{} matrix",
                self.len(),
                self.len()
            )));
        }
        let values: Vec<f64> = (0..count).map(|k| self.eigenvalue(k)).collect();
        let scale = self.diag.iter().map(|d| d.abs()).fold(0.0, f64::max).max(1.0);
        let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(count);
        for (k, &lambda) in values.iter().enumerate() {
            // Members of the current near-degenerate cluster must be
            // orthogonalized against each other explicitly.
            let cluster: Vec<usize> = (0..k)
                .filter(|&j| (values[j] - lambda).abs() < 1e-9 * scale.max(lambda.abs()))
                .collect();
            let v = self.inverse_iteration(lambda, k, &cluster, &pairs)?;
            let res = self.residual(lambda, &v);
            if !(res < 1e-6 * scale.max(1.0)) {
                return Err(Error::Solver(format!(
                    "inverse iteration for eigenvalue {k} ({lambda:.6e}) left residual {res:.3e}"
                )));
            }
            pairs.push((lambda, v));
        }
        Ok(pairs)
    }

    fn inverse_iteration(
        &self,
        lambda: f64,
        seed: usize,
        cluster: &[usize],
        found: &[(f64, Vec<f64>)],
    ) -> Result<Vec<f64>> {
        let n = self.len();
        let shift = lambda + (lambda.abs().max(1e-12)) * 1e-13 * (1.0 + seed as f64);
        let lu = TridiagLu::factor(self, shift);
        // Deterministic, non-symmetric starting vector.
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * (((i * 7919 + seed * 104_729) % 1013) as f64 / 1013.0))
            .collect();
        normalize(&mut v);
        for _ in 0..6 {
            lu.solve(&mut v);
            for &j in cluster {
                let u = &found[j].1;
                let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
            if !normalize(&mut v) {
                return Err(Error::Solver("inverse iteration collapsed to zero".into()));
            }
        }
        // Deterministic sign: largest component positive.
        let (imax, _) = v
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc });
        if v[imax] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        Ok(v)
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// LU factorization of T − σI with partial pivoting (LAPACK gttrf layout).
struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    ipiv: Vec<bool>,
}

impl TridiagLu {
    fn factor(t: &SymTridiag, sigma: f64) -> Self {
        let n = t.len();
        let mut dl = t.off.clone();
        let mut d: Vec<f64> = t.diag.iter().map(|x| x - sigma).collect();
        let mut du = t.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut ipiv = vec![false; n];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = f64::EPSILON;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                ipiv[i] = true;
            }
        }
        if n > 0 && d[n - 1] == 0.0 {
            d[n - 1] = f64::EPSILON;
        }
        TridiagLu { dl, d, du, du2, ipiv }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n.saturating_sub(1) {
            if self.ipiv[i] {
                b.swap(i, i + 1);
                b[i + 1] -= self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}
