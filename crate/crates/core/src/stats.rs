//! Random variate generation and density evaluation.
//!
//! Every draw flows through a [`RandomStream`], a seeded ChaCha8 generator.
//! Streams are forked by index so that chains, replications and simulation
//! units each own an independent, reproducible sequence.
//!
//! Gamma variates take an explicit [`GammaParam`] so that the rate and scale
//! conventions can never be mixed up positionally.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform draws are clamped to `[UNIFORM_EPS, 1 - UNIFORM_EPS]` before any
/// log transform.
pub const UNIFORM_EPS: f64 = 1e-16;

/// Smallest Cholesky pivot accepted for a positive-definite matrix.
pub const MIN_PIVOT: f64 = 1e-12;

/// Relative symmetry tolerance for covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seedable source of uniform randomness.
///
/// The draw sequence is a pure function of the seed and the sequence of
/// calls made against the stream.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent child stream. Forking does not consume draws
    /// from the parent, so `fork(i)` is stable regardless of how far the
    /// parent has advanced.
    pub fn fork(&self, index: u64) -> RandomStream {
        let child = splitmix64(self.seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)));
        RandomStream::new(child)
    }

    /// Uniform draw on `[UNIFORM_EPS, 1 - UNIFORM_EPS]`.
    pub fn uniform(&mut self) -> f64 {
        let u: f64 = self.rng.random();
        u.clamp(UNIFORM_EPS, 1.0 - UNIFORM_EPS)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        let u: f64 = self.rng.random();
        lo + (hi - lo) * u
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform integer in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.rng);
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Symmetric positive-definite matrix with its lower Cholesky factor cached.
#[derive(Clone, Debug, PartialEq)]
pub struct CovMatrix {
    matrix: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl CovMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        Self::named(matrix, "covariance")
    }

    /// Like [`CovMatrix::new`], but names the matrix in any error.
    pub fn named(matrix: DMatrix<f64>, what: &str) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(Error::Shape(format!(
                "{what}: expected a non-empty square matrix, got {}x{}",
                n,
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::npd(what));
        }
        let scale = matrix.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::npd(format!("{what} (asymmetric)")));
                }
            }
        }
        let chol = cholesky(&matrix).ok_or_else(|| Error::npd(what))?;
        let log_det = 2.0 * chol.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            matrix,
            chol,
            log_det,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, variance: f64) -> Self {
        let sd = variance.sqrt();
        Self {
            matrix: DMatrix::identity(dim, dim) * variance,
            chol: DMatrix::identity(dim, dim) * sd,
            log_det: dim as f64 * variance.ln(),
        }
    }

    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(
            variances,
        )))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular `L` with `L Lᵀ = Σ`.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let linv = lower_inverse(&self.chol);
        let mut inv = linv.transpose() * linv;
        symmetrize(&mut inv);
        debug_assert_eq!(inv.nrows(), n);
        inv
    }

    /// Squared Mahalanobis distance `(x - mean)ᵀ Σ⁻¹ (x - mean)`.
    pub fn mahalanobis_sq(&self, x: &[f64], mean: &[f64]) -> f64 {
        let n = self.dim();
        let mut z = [0.0_f64; 16];
        let mut heap;
        let z: &mut [f64] = if n <= 16 {
            &mut z[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        let mut acc = 0.0;
        for i in 0..n {
            let mut s = x[i] - mean[i];
            for j in 0..i {
                s -= self.chol[(i, j)] * z[j];
            }
            z[i] = s / self.chol[(i, i)];
            acc += z[i] * z[i];
        }
        acc
    }

    /// Multivariate normal log-density at `x` with this covariance.
    pub fn log_density(&self, x: &[f64], mean: &[f64]) -> f64 {
        let n = self.dim() as f64;
        -0.5 * (n * LN_2PI + self.log_det + self.mahalanobis_sq(x, mean))
    }

    /// Writes `L z` into `out`.
    pub fn mul_chol(&self, z: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..=i {
                s += self.chol[(i, j)] * z[j];
            }
            out[i] = s;
        }
    }
}

impl Serialize for CovMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.matrix[(i, j)]).collect())
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CovMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(deserializer)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("covariance matrix must be square"));
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        CovMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

/// Lower Cholesky factor, or `None` when a pivot falls at or below
/// [`MIN_PIVOT`].
fn cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > MIN_PIVOT) {
            return None;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for col in 0..n {
        inv[(col, col)] = 1.0 / l[(col, col)];
        for i in (col + 1)..n {
            let mut s = 0.0;
            for k in col..i {
                s -= l[(i, k)] * inv[(k, col)];
            }
            inv[(i, col)] = s / l[(i, i)];
        }
    }
    inv
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Second parameter of a Gamma distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaParam {
    /// Density ∝ x^(shape−1) exp(−rate·x); mean shape/rate.
    Rate(f64),
    /// Density ∝ x^(shape−1) exp(−x/scale); mean shape·scale.
    Scale(f64),
}

impl GammaParam {
    pub fn scale(self) -> f64 {
        match self {
            GammaParam::Rate(r) => 1.0 / r,
            GammaParam::Scale(s) => s,
        }
    }

    fn value(self) -> f64 {
        match self {
            GammaParam::Rate(v) | GammaParam::Scale(v) => v,
        }
    }
}

pub fn sample_gamma(shape: f64, param: GammaParam, rng: &mut RandomStream) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) || !(param.value() > 0.0 && param.value().is_finite()) {
        return Err(Error::Domain(format!(
            "gamma requires positive finite parameters, got shape={shape}, {param:?}"
        )));
    }
    let dist = rand_distr::Gamma::new(shape, param.scale())
        .map_err(|e| Error::Domain(format!("gamma: {e}")))?;
    Ok(dist.sample(rng.rng_mut()))
}

/// Natural log of a Gamma(shape, 1) draw, stable for small shapes.
fn log_gamma_unit(shape: f64, rng: &mut RandomStream) -> f64 {
    if shape >= 1.0 {
        let g = rand_distr::Gamma::new(shape, 1.0).expect("validated shape");
        g.sample(rng.rng_mut()).ln()
    } else {
        // G(a) = G(a + 1) · U^(1/a)
        let g = rand_distr::Gamma::new(shape + 1.0, 1.0).expect("validated shape");
        let x: f64 = g.sample(rng.rng_mut());
        x.ln() + rng.uniform().ln() / shape
    }
}

pub fn sample_beta(a: f64, b: f64, rng: &mut RandomStream) -> Result<f64> {
    if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
        return Err(Error::Domain(format!(
            "beta requires positive parameters, got a={a}, b={b}"
        )));
    }
    let la = log_gamma_unit(a, rng);
    let lb = log_gamma_unit(b, rng);
    // x = Ga / (Ga + Gb) computed on the log scale
    let m = la.max(lb);
    let x = (la - m).exp() / ((la - m).exp() + (lb - m).exp());
    Ok(x.clamp(UNIFORM_EPS, 1.0 - UNIFORM_EPS))
}

pub fn sample_dirichlet(concentration: &[f64], rng: &mut RandomStream) -> Result<Vec<f64>> {
    if concentration.is_empty() {
        return Err(Error::Domain("dirichlet requires at least one entry".into()));
    }
    if let Some(bad) = concentration.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(Error::Domain(format!(
            "dirichlet concentration entries must be positive, got {bad}"
        )));
    }
    if concentration.len() == 1 {
        return Ok(vec![1.0]);
    }
    let logs: Vec<f64> = concentration
        .iter()
        .map(|&c| log_gamma_unit(c, rng))
        .collect();
    Ok(normalize_log_weights(&logs))
}

/// Normalizes log-weights to a probability vector via max-subtraction.
pub fn normalize_log_weights(logs: &[f64]) -> Vec<f64> {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    w
}

/// Draws a 0-based category index by cumulative-sum inversion of one uniform.
pub fn sample_categorical(probs: &[f64], rng: &mut RandomStream) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::Domain("categorical requires at least one category".into()));
    }
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "categorical probabilities must form a simplex (sum={total})"
        )));
    }
    Ok(invert_cumulative(probs, total, rng.uniform()))
}

pub(crate) fn invert_cumulative(weights: &[f64], total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = k;
        }
        acc += w;
        if target < acc {
            return k;
        }
    }
    last_positive
}

pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(UNIFORM_EPS, 1.0 - UNIFORM_EPS);
    -(-u.ln()).ln()
}

pub fn sample_gumbel(rng: &mut RandomStream) -> f64 {
    gumbel_from_uniform(rng.uniform())
}

/// Logistic CDF `1 / (1 + e^(−y))`.
pub fn logistic(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// Skew-normal-logistic draw by rejection from the N(mu, sigma²) envelope.
pub fn sample_snl(mu: f64, sigma: f64, lambda: f64, rng: &mut RandomStream) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("SNL requires sigma > 0, got {sigma}")));
    }
    loop {
        let x = mu + sigma * rng.standard_normal();
        if rng.uniform() <= logistic(lambda * (x - mu)) {
            return Ok(x);
        }
    }
}

/// SNL density `2 φ(x | mu, sigma) G(lambda (x − mu))`.
pub fn snl_density(x: f64, mu: f64, sigma: f64, lambda: f64) -> f64 {
    let z = (x - mu) / sigma;
    let phi = (-0.5 * z * z - 0.5 * LN_2PI).exp() / sigma;
    2.0 * phi * logistic(lambda * (x - mu))
}

pub fn sample_mvn(mean: &[f64], cov: &CovMatrix, rng: &mut RandomStream) -> Result<Vec<f64>> {
    if mean.len() != cov.dim() {
        return Err(Error::Shape(format!(
            "mean has length {} but covariance is {}x{}",
            mean.len(),
            cov.dim(),
            cov.dim()
        )));
    }
    let z: Vec<f64> = (0..mean.len()).map(|_| rng.standard_normal()).collect();
    let mut out = vec![0.0; mean.len()];
    cov.mul_chol(&z, &mut out);
    for (o, m) in out.iter_mut().zip(mean) {
        *o += m;
    }
    Ok(out)
}

pub fn log_density_mvn(x: &[f64], mean: &[f64], cov: &CovMatrix) -> Result<f64> {
    if x.len() != cov.dim() || mean.len() != cov.dim() {
        return Err(Error::Shape(format!(
            "point/mean lengths {}/{} do not match covariance dimension {}",
            x.len(),
            mean.len(),
            cov.dim()
        )));
    }
    Ok(cov.log_density(x, mean))
}

/// Inverse-Wishart draw with `df` degrees of freedom and scale matrix `scale`.
///
/// With `scale = C Cᵀ` and `A` the Bartlett factor of a standard Wishart,
/// the draw is `T Tᵀ` where `T = C A⁻ᵀ`; only a triangular inverse is needed.
pub fn sample_inverse_wishart(
    df: f64,
    scale: &CovMatrix,
    rng: &mut RandomStream,
) -> Result<CovMatrix> {
    let p = scale.dim();
    if !(df > (p as f64) - 1.0) || !df.is_finite() {
        return Err(Error::Domain(format!(
            "inverse Wishart requires df > dim - 1 (df={df}, dim={p})"
        )));
    }
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi2 = sample_gamma((df - i as f64) / 2.0, GammaParam::Scale(2.0), rng)?;
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = rng.standard_normal();
        }
    }
    let a_inv = lower_inverse(&a);
    let t = scale.cholesky() * a_inv.transpose();
    let mut omega = &t * t.transpose();
    symmetrize(&mut omega);
    CovMatrix::named(omega, "inverse-Wishart draw")
}

/// Empirical mean and covariance of a set of vectors (unbiased covariance).
pub fn sample_moments(xs: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let n = xs.len() as f64;
    let d = xs.first().map_or(0, |x| x.len());
    let mut mean = vec![0.0; d];
    for x in xs {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for x in xs {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (x[i] - mean[i]) * (x[j] - mean[j]) / (n - 1.0);
            }
        }
    }
    (mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fork_is_independent_of_parent_progress() {
        let mut parent = RandomStream::new(7);
        let a = parent.fork(3).uniform();
        parent.uniform();
        parent.uniform();
        let b = parent.fork(3).uniform();
        assert_eq!(a, b);
        assert_ne!(parent.fork(3).uniform(), parent.fork(4).uniform());
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RandomStream::new(99);
        let mut b = RandomStream::new(99);
        for _ in 0..100 {
            assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
        }
    }

    #[test]
    fn tiny_identity_rejected_as_non_pd() {
        let m = DMatrix::identity(2, 2) * 1e-12;
        assert!(matches!(
            CovMatrix::new(m),
            Err(Error::NonPositiveDefinite { .. })
        ));
        assert!(CovMatrix::new(DMatrix::identity(2, 2) * 1e-9).is_ok());
    }

    #[test]
    fn asymmetric_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(CovMatrix::new(m).is_err());
    }

    #[test]
    fn non_pd_error_names_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = CovMatrix::named(m, "Omega_3").unwrap_err();
        assert!(err.to_string().contains("Omega_3"));
    }

    #[test]
    fn log_density_analytic_values() {
        let cov = CovMatrix::identity(3);
        let x = [0.3, -1.0, 2.0];
        assert_relative_eq!(
            log_density_mvn(&x, &x, &cov).unwrap(),
            -1.5 * (2.0 * std::f64::consts::PI).ln(),
            epsilon = 1e-14
        );
        let cov1 = CovMatrix::identity(1);
        assert_relative_eq!(
            log_density_mvn(&[1.0], &[0.0], &cov1).unwrap(),
            -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn log_density_matches_direct_formula() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.2, 0.3, 1.5, 0.4, -0.2, 0.4, 1.0]);
        let cov = CovMatrix::new(m.clone()).unwrap();
        let x = [0.5, -0.7, 1.2];
        let mu = [0.1, 0.2, -0.3];
        let d = DVector::from_column_slice(&x) - DVector::from_column_slice(&mu);
        let inv = m.clone().try_inverse().unwrap();
        let q = (d.transpose() * inv * &d)[(0, 0)];
        let direct = -0.5 * (3.0 * LN_2PI + m.determinant().ln() + q);
        assert_relative_eq!(cov.log_density(&x, &mu), direct, epsilon = 1e-12);
        let id = cov.inverse() * &m;
        assert_relative_eq!(id, DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn gumbel_inversion_at_inverse_e() {
        assert_relative_eq!(gumbel_from_uniform((-1.0_f64).exp()), 0.0, epsilon = 1e-15);
        let top = gumbel_from_uniform(1.0);
        assert!(top.is_finite() && top > 30.0);
        assert!(gumbel_from_uniform(0.0).is_finite());
    }

    #[test]
    fn domain_errors() {
        let mut rng = RandomStream::new(1);
        assert!(matches!(
            sample_gamma(0.0, GammaParam::Rate(1.0), &mut rng),
            Err(Error::Domain(_))
        ));
        assert!(sample_gamma(1.0, GammaParam::Scale(-1.0), &mut rng).is_err());
        assert!(sample_beta(-1.0, 1.0, &mut rng).is_err());
        assert!(sample_dirichlet(&[1.0, 0.0], &mut rng).is_err());
        assert!(sample_categorical(&[0.3, 0.3, 0.3], &mut rng).is_err());
        assert!(sample_snl(0.0, 0.0, 1.0, &mut rng).is_err());
        let id2 = CovMatrix::identity(2);
        assert!(matches!(
            sample_inverse_wishart(1.0, &id2, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn degenerate_categorical_and_dirichlet() {
        let mut rng = RandomStream::new(5);
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
            assert_eq!(sample_dirichlet(&[3.5], &mut rng).unwrap(), vec![1.0]);
        }
    }

    #[test]
    fn dirichlet_small_concentrations_stay_finite() {
        let mut rng = RandomStream::new(11);
        for _ in 0..1000 {
            let w = sample_dirichlet(&[1e-3, 1e-3, 1e-3], &mut rng).unwrap();
            assert!(w.iter().all(|v| v.is_finite() && *v >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn snl_density_integrates_to_one() {
        for &(mu, lambda) in &[(0.0, 50.0), (1.0, -50.0), (-2.0, 70.0), (0.0, 0.0)] {
            let h = 1e-3;
            let total: f64 = (0..20_000)
                .map(|i| snl_density(mu - 10.0 + (i as f64 + 0.5) * h, mu, 1.0, lambda) * h)
                .sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-6);
        }
    }
}
