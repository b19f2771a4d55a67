//! Small numerical kernels: Gauss–Legendre rules, tridiagonal solves,
//! Lagrange interpolation and dense least squares.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut x = vec![0.0f64; n];
    let mut w = vec![0.0f64; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (
        x.into_iter().map(T::lit).collect(),
        w.into_iter().map(T::lit).collect(),
    )
}

/// Integrates `g` over [a, b] with `pieces` panels of an `order`-point Gauss rule.
pub fn integrate_gl<T: Real, F: Fn(T) -> T>(g: F, a: T, b: T, pieces: usize, order: usize) -> T {
    let (x, w) = gauss_legendre::<T>(order);
    let h = (b - a) / T::from_usize_lossy(pieces);
    let half = T::lit(0.5) * h;
    let mut acc = T::zero();
    for p in 0..pieces {
        let mid = a + h * (T::from_usize_lossy(p) + T::lit(0.5));
        for (xi, wi) in x.iter().zip(&w) {
            acc += *wi * g(mid + half * *xi);
        }
    }
    acc * half
}

/// Tridiagonal system: `lower[i]` multiplies x[i-1], `upper[i]` multiplies x[i+1].
#[derive(Clone, Debug)]
pub struct Tridiag<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> Tridiag<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![T::zero(); n],
            diag: vec![T::zero(); n],
            upper: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[T], out: &mut [T]) {
        let n = self.len();
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                v += self.upper[i] * x[i + 1];
            }
            out[i] = v;
        }
    }

    /// Thomas algorithm. Returns `None` on a vanishing pivot.
    pub fn solve(&self, rhs: &[T]) -> Option<Vec<T>> {
        let n = self.len();
        let mut c = vec![T::zero(); n];
        let mut d = vec![T::zero(); n];
        let mut piv = self.diag[0];
        if piv == T::zero() || !piv.is_finite() {
            return None;
        }
        c[0] = if n > 1 {
            self.upper[0] / piv
        } else {
            T::zero()
        };
        d[0] = rhs[0] / piv;
        for i in 1..n {
            piv = self.diag[i] - self.lower[i] * c[i - 1];
            if piv == T::zero() || !piv.is_finite() {
                return None;
            }
            c[i] = if i + 1 < n {
                self.upper[i] / piv
            } else {
                T::zero()
            };
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / piv;
        }
        for i in (0..n - 1).rev() {
            let next = d[i + 1];
            d[i] -= c[i] * next;
        }
        Some(d)
    }
}

/// Lagrange interpolation through the points (xs, ys) evaluated at `x`.
pub fn lagrange<T: Real>(xs: &[T], ys: &[T], x: T) -> T {
    let mut acc = T::zero();
    for i in 0..xs.len() {
        let mut w = T::one();
        for j in 0..xs.len() {
            if i != j {
                w *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += w * ys[i];
    }
    acc
}

/// Start index of a `width`-point stencil centred on the interval `[idx, idx+1]`.
pub fn stencil_start(idx: usize, width: usize, n: usize) -> usize {
    let half = width / 2;
    let start = (idx + 1).saturating_sub(half);
    start.min(n.saturating_sub(width))
}

/// Weighted least squares fit: minimises Σ wᵢ (Σⱼ Aᵢⱼ cⱼ − yᵢ)².
#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residual_rms: f64,
}

pub fn weighted_least_squares(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> Option<LeastSquares> {
    let m = rows.len();
    let n = rows.first().map_or(0, |r| r.len());
    if m < n || n == 0 {
        return None;
    }
    let mut scale = vec![0.0f64; n];
    for r in rows {
        for (s, v) in scale.iter_mut().zip(r) {
            *s = s.max(v.abs());
        }
    }
    for s in scale.iter_mut() {
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let a = DMatrix::from_fn(m, n, |i, j| w[i].sqrt() * rows[i][j] / scale[j]);
    let b = DVector::from_fn(m, |i, _| w[i].sqrt() * y[i]);
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-14).ok()?;
    let resid = &a * &x - &b;
    let dof = (m - n).max(1) as f64;
    let s2 = resid.norm_squared() / dof;
    let ata = a.transpose() * &a;
    let cov = ata.pseudo_inverse(1e-300).ok()?;
    let coefficients = (0..n).map(|j| x[j] / scale[j]).collect();
    let std_errors = (0..n)
        .map(|j| (s2 * cov[(j, j)].max(0.0)).sqrt() / scale[j])
        .collect();
    Some(LeastSquares {
        coefficients,
        std_errors,
        residual_rms: (resid.norm_squared() / m as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let v: f64 = integrate_gl(|x: f64| x.powi(7) + 3.0 * x * x, 0.0, 2.0, 1, 4);
        assert!((v - (256.0 / 8.0 + 8.0)).abs() < 1e-12);
    }

    #[test]
    fn thomas_matches_dense() {
        let t = Tridiag {
            lower: vec![0.0f64, 1.0, -2.0, 0.5],
            diag: vec![4.0, 5.0, 6.0, 3.0],
            upper: vec![1.0, -1.0, 0.3, 0.0],
        };
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let mut b = vec![0.0; 4];
        t.apply(&x, &mut b);
        let y = t.solve(&b).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn least_squares_recovers_line() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| vec![1.0, *x]).collect();
        let y: Vec<f64> = xs.iter().map(|x| 2.0 - 3.0 * x).collect();
        let fit = weighted_least_squares(&rows, &y, &vec![1.0; 20]).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((fit.coefficients[1] + 3.0).abs() < 1e-12);
    }
}
