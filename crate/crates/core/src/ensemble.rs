//! Random class ensembles, feature matrices and noisy observations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub(crate) fn gaussian<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

pub(crate) fn gaussian_matrix<T: Scalar, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    scale: T,
    rng: &mut R,
) -> DMatrix<T> {
    // Column-major fill order, so draws are reproducible independent of layout tricks.
    DMatrix::from_fn(rows, cols, |_, _| gaussian::<T, R>(rng) * scale)
}

pub(crate) fn gaussian_vector<T: Scalar, R: Rng + ?Sized>(
    len: usize,
    scale: T,
    rng: &mut R,
) -> DVector<T> {
    DVector::from_fn(len, |_, _| gaussian::<T, R>(rng) * scale)
}

fn all_finite<T: Scalar>(xs: &[T]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// A class-conditional Gaussian supported on a k-dimensional linear
/// (`mean == None`) or affine subspace of R^N.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceClass<T: Scalar> {
    basis: DMatrix<T>,
    mean: Option<DVector<T>>,
}

impl<T: Scalar> SubspaceClass<T> {
    pub fn new(basis: DMatrix<T>, mean: Option<DVector<T>>) -> Result<Self> {
        let (n, k) = basis.shape();
        if k == 0 || k > n {
            return Err(Error::InvalidDimension(format!(
                "basis is {n}x{k}; need 1 <= k <= n"
            )));
        }
        if !all_finite(basis.as_slice()) {
            return Err(Error::NonFinite("class basis"));
        }
        if let Some(mu) = &mean {
            if mu.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "class mean length",
                    expected: n,
                    got: mu.len(),
                });
            }
            if !all_finite(mu.as_slice()) {
                return Err(Error::NonFinite("class mean"));
            }
        }
        Ok(Self { basis, mean })
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    pub fn mean(&self) -> Option<&DVector<T>> {
        self.mean.as_ref()
    }

    pub fn is_affine(&self) -> bool {
        self.mean.is_some()
    }

    /// Ambient dimension N.
    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Subspace dimension k.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// An M x N feature extractor with orthonormal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T: Scalar> {
    rows: DMatrix<T>,
}

impl<T: Scalar> FeatureMatrix<T> {
    /// Wraps `rows`, checking `M <= N` and orthonormality of the rows.
    pub fn new(rows: DMatrix<T>) -> Result<Self> {
        let (m, n) = rows.shape();
        if m == 0 || m > n {
            return Err(Error::InvalidDimension(format!(
                "feature matrix is {m}x{n}; need 1 <= M <= N"
            )));
        }
        if !all_finite(rows.as_slice()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        let phi = Self { rows };
        let dev = phi.orthonormality_error();
        if dev > T::ortho_tol(n) {
            return Err(Error::NotOrthonormal(dev.to_f64_lossy()));
        }
        Ok(phi)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n))
    }

    /// max |Phi Phi^T - I|.
    pub fn orthonormality_error(&self) -> T {
        let gram = &self.rows * self.rows.transpose();
        let m = gram.nrows();
        let mut worst = T::zero();
        for j in 0..m {
            for i in 0..m {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    pub fn rows(&self) -> &DMatrix<T> {
        &self.rows
    }

    /// Number of features M.
    pub fn m(&self) -> usize {
        self.rows.nrows()
    }

    /// Ambient dimension N.
    pub fn n(&self) -> usize {
        self.rows.ncols()
    }

    pub fn apply(&self, x: &DVector<T>) -> Result<DVector<T>> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "signal length",
                expected: self.n(),
                got: x.len(),
            });
        }
        Ok(&self.rows * x)
    }
}

/// Dimension ratios and growth exponents of a scaling regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams {
    pub nu: f64,
    pub kappa: f64,
    pub rho: f64,
    pub r: f64,
}

impl ScalingParams {
    pub fn new(nu: f64, kappa: f64, rho: f64, r: f64) -> Result<Self> {
        if !(nu.is_finite() && nu >= 1.0) {
            return Err(Error::domain("nu", nu, "nu >= 1"));
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::domain("kappa", kappa, "0 < kappa < 1"));
        }
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::domain("rho", rho, "rho >= 0"));
        }
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::domain("r", r, "r >= 0"));
        }
        Ok(Self { nu, kappa, rho, r })
    }
}

fn check_dims(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidDimension(format!(
            "k = {k}, n = {n}; need 1 <= k <= n"
        )));
    }
    Ok(())
}

/// Linear class: basis entries i.i.d. N(0, 1/k), no mean.
pub fn draw_linear_class<T: Scalar, R: Rng + ?Sized>(
    n: usize,
    k: usize,
    rng: &mut R,
) -> Result<SubspaceClass<T>> {
    check_dims(n, k)?;
    let scale = T::one() / T::from_usize_lossy(k).sqrt();
    let basis = gaussian_matrix(n, k, scale, rng);
    Ok(SubspaceClass { basis, mean: None })
}

/// Affine class: basis as for [`draw_linear_class`], mean i.i.d. N(0, 1).
pub fn draw_affine_class<T: Scalar, R: Rng + ?Sized>(
    n: usize,
    k: usize,
    rng: &mut R,
) -> Result<SubspaceClass<T>> {
    let mut class = draw_linear_class(n, k, rng)?;
    class.mean = Some(gaussian_vector(n, T::one(), rng));
    Ok(class)
}

/// Haar-distributed M x N matrix with orthonormal rows.
///
/// Orthonormalizes an N x M Gaussian matrix (thin QR with the sign of R's
/// diagonal folded into Q) and transposes it; never materializes N x N.
pub fn draw_feature_matrix<T: Scalar, R: Rng + ?Sized>(
    m: usize,
    n: usize,
    rng: &mut R,
) -> Result<FeatureMatrix<T>> {
    if m == 0 || m > n {
        return Err(Error::InvalidDimension(format!(
            "m = {m}, n = {n}; need 1 <= m <= n"
        )));
    }
    let g = gaussian_matrix::<T, R>(n, m, T::one(), rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..m {
        if r[(j, j)] < T::zero() {
            q.column_mut(j).neg_mut();
        }
    }
    FeatureMatrix::new(q.transpose())
}

/// One noisy feature vector `y = Phi (U h + mu) + z`.
pub fn sample_signal<T: Scalar, R: Rng + ?Sized>(
    class: &SubspaceClass<T>,
    phi: &FeatureMatrix<T>,
    sigma2: T,
    rng: &mut R,
) -> Result<DVector<T>> {
    if class.ambient_dim() != phi.n() {
        return Err(Error::DimensionMismatch {
            what: "class ambient dimension vs feature matrix columns",
            expected: phi.n(),
            got: class.ambient_dim(),
        });
    }
    check_sigma2(sigma2)?;
    let h = gaussian_vector::<T, R>(class.dim(), T::one(), rng);
    let mut x = &class.basis * h;
    if let Some(mu) = &class.mean {
        x += mu;
    }
    let mut y = phi.rows() * x;
    let sd = sigma2.sqrt();
    for v in y.iter_mut() {
        *v += gaussian::<T, R>(rng) * sd;
    }
    Ok(y)
}

pub(crate) fn check_sigma2<T: Scalar>(sigma2: T) -> Result<()> {
    if !(sigma2 > T::zero() && sigma2.is_finite()) {
        return Err(Error::domain("sigma2", sigma2.to_f64_lossy(), "sigma2 > 0"));
    }
    Ok(())
}

/// Floors `v`, snapping values within round-off of an integer to it first, so
/// that e.g. (1/1e-4)^0.75 gives 1000 rather than 999.
pub(crate) fn snapped_floor(v: f64) -> f64 {
    let nearest = v.round();
    if (v - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        v.floor()
    }
}

/// Number of classes `max(1, floor((1/sigma2)^(r/2)))`.
pub fn num_classes_for<T: Scalar>(sigma2: T, r: T) -> Result<u64> {
    check_sigma2(sigma2)?;
    let r = r.to_f64_lossy();
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::domain("r", r, "r >= 0"));
    }
    let s = sigma2.to_f64_lossy();
    let v = snapped_floor((0.5 * r * (1.0 / s).ln()).exp());
    if v >= u64::MAX as f64 {
        return Err(Error::Overflow {
            exponent: 0.5 * r * (1.0 / s).log2(),
        });
    }
    Ok((v as u64).max(1))
}

/// `(N, k, L) = (floor(nu m), max(1, floor(kappa m)), max(2, floor(2^(rho m))))`.
pub fn dims_for(m: usize, p: &ScalingParams) -> Result<(usize, usize, u64)> {
    if m == 0 {
        return Err(Error::InvalidDimension("m must be >= 1".into()));
    }
    let mf = m as f64;
    let n = snapped_floor(p.nu * mf) as usize;
    let k = (snapped_floor(p.kappa * mf) as usize).max(1);
    let exponent = p.rho * mf;
    if exponent >= 64.0 {
        return Err(Error::Overflow { exponent });
    }
    let l = (snapped_floor(exponent.exp2()) as u64).max(2);
    Ok((n, k, l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn rng(id: u64) -> rand_chacha::ChaCha8Rng {
        RngStream::new(42, id).rng()
    }

    #[test]
    fn linear_class_shape() {
        let c: SubspaceClass<f64> = draw_linear_class(4, 2, &mut rng(0)).unwrap();
        assert_eq!(c.basis().shape(), (4, 2));
        assert!(c.mean().is_none());
    }

    #[test]
    fn linear_class_variance_is_one_over_k() {
        let c: SubspaceClass<f64> = draw_linear_class(1000, 4, &mut rng(1)).unwrap();
        let xs = c.basis().as_slice();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((var - 0.25).abs() < 0.025, "var = {var}");
    }

    #[test]
    fn k_larger_than_n_rejected() {
        assert!(matches!(
            draw_linear_class::<f64, _>(2, 3, &mut rng(0)),
            Err(Error::InvalidDimension(_))
        ));
        assert!(matches!(
            draw_affine_class::<f64, _>(2, 0, &mut rng(0)),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn affine_class_mean() {
        let c: SubspaceClass<f64> = draw_affine_class(4, 2, &mut rng(2)).unwrap();
        assert_eq!(c.mean().unwrap().len(), 4);
        let c: SubspaceClass<f64> = draw_affine_class(1000, 2, &mut rng(3)).unwrap();
        let mu = c.mean().unwrap();
        let m = mu.mean();
        let var = mu.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 999.0;
        assert!((var - 1.0).abs() < 0.1, "var = {var}");
    }

    #[test]
    fn independent_streams_uncorrelated() {
        let a: SubspaceClass<f64> = draw_affine_class(2000, 2, &mut rng(10)).unwrap();
        let b: SubspaceClass<f64> = draw_affine_class(2000, 2, &mut rng(11)).unwrap();
        let (x, y) = (a.basis().as_slice(), b.basis().as_slice());
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - mx) * (b - my))
            .sum::<f64>();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        let corr = cov / (vx * vy).sqrt();
        assert!(corr.abs() < 0.1, "corr = {corr}");
    }

    #[test]
    fn feature_matrix_orthonormal() {
        let phi: FeatureMatrix<f64> = draw_feature_matrix(3, 3, &mut rng(4)).unwrap();
        assert!(phi.orthonormality_error() <= 1e-10);
        let phi: FeatureMatrix<f64> = draw_feature_matrix(1, 2, &mut rng(5)).unwrap();
        assert!((phi.rows().row(0).norm() - 1.0).abs() < 1e-12);
        assert!(draw_feature_matrix::<f64, _>(5, 4, &mut rng(0)).is_err());
    }

    #[test]
    fn feature_matrix_rejects_non_orthonormal() {
        let rows = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(
            FeatureMatrix::<f64>::new(rows),
            Err(Error::NotOrthonormal(_))
        ));
    }

    #[test]
    fn pure_noise_covariance() {
        let class = SubspaceClass::new(DMatrix::<f64>::zeros(3, 1), None).unwrap();
        let phi = FeatureMatrix::identity(3).unwrap();
        let sigma2 = 0.3;
        let mut r = rng(6);
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        let draws = 20_000;
        for _ in 0..draws {
            let y = sample_signal(&class, &phi, sigma2, &mut r).unwrap();
            acc += &y * y.transpose();
        }
        acc /= draws as f64;
        for i in 0..3 {
            assert!((acc[(i, i)] / sigma2 - 1.0).abs() < 0.1);
            for j in 0..3 {
                if i != j {
                    assert!(acc[(i, j)].abs() < 0.1 * sigma2);
                }
            }
        }
    }

    #[test]
    fn noiseless_limit_aligns_with_subspace() {
        let mut r = rng(7);
        let class: SubspaceClass<f64> = draw_linear_class(4, 1, &mut r).unwrap();
        let phi: FeatureMatrix<f64> = draw_feature_matrix(3, 4, &mut r).unwrap();
        let g = phi.rows() * class.basis();
        let g = g.column(0).normalize();
        for _ in 0..10 {
            let y = sample_signal(&class, &phi, 1e-12, &mut r).unwrap();
            assert!(y.normalize().dot(&g).abs() >= 0.999);
        }
    }

    #[test]
    fn sample_is_deterministic() {
        let class: SubspaceClass<f64> = draw_affine_class(5, 2, &mut rng(8)).unwrap();
        let phi: FeatureMatrix<f64> = draw_feature_matrix(3, 5, &mut rng(9)).unwrap();
        let a = sample_signal(&class, &phi, 0.1, &mut rng(12)).unwrap();
        let b = sample_signal(&class, &phi, 0.1, &mut rng(12)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_rejects_bad_inputs() {
        let class: SubspaceClass<f64> = draw_linear_class(5, 2, &mut rng(8)).unwrap();
        let phi = FeatureMatrix::<f64>::identity(4).unwrap();
        assert!(matches!(
            sample_signal(&class, &phi, 0.1, &mut rng(0)),
            Err(Error::DimensionMismatch { .. })
        ));
        let phi = FeatureMatrix::<f64>::identity(5).unwrap();
        assert!(matches!(
            sample_signal(&class, &phi, 0.0, &mut rng(0)),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn class_counts() {
        assert_eq!(num_classes_for(1.0, 2.0).unwrap(), 1);
        assert_eq!(num_classes_for(0.5, 0.0).unwrap(), 1);
        // 100^0.75 = 31.6227766...
        assert_eq!(num_classes_for(0.01, 1.5).unwrap(), 31);
        assert!(num_classes_for(0.0, 1.0).is_err());
        assert!(num_classes_for(-1.0f32, 1.0).is_err());
    }

    #[test]
    fn class_counts_monotone() {
        let sig = [1.0, 0.5, 0.1, 0.03, 0.01, 1e-3, 1e-4];
        let rs = [0.0, 0.3, 0.75, 1.0, 1.5, 1.8, 3.0];
        for &r in &rs {
            for w in sig.windows(2) {
                assert!(num_classes_for(w[0], r).unwrap() <= num_classes_for(w[1], r).unwrap());
            }
        }
        for &s in &sig {
            for w in rs.windows(2) {
                assert!(num_classes_for(s, w[0]).unwrap() <= num_classes_for(s, w[1]).unwrap());
            }
        }
    }

    #[test]
    fn scaling_dims() {
        let p = ScalingParams::new(1.0, 1.0 / 3.0, 1.0, 0.0).unwrap();
        assert_eq!(dims_for(3, &p).unwrap(), (3, 1, 8));
        let p = ScalingParams::new(2.0, 0.5, 0.0, 0.0).unwrap();
        assert_eq!(dims_for(10, &p).unwrap(), (20, 5, 2));
        let p = ScalingParams::new(1.0, 0.5, 2.0, 0.0).unwrap();
        assert!(matches!(dims_for(64, &p), Err(Error::Overflow { .. })));
        assert!(ScalingParams::new(1.0, 1.0, 0.0, 0.0).is_err());
        assert!(ScalingParams::new(0.5, 0.5, 0.0, 0.0).is_err());
    }
}
