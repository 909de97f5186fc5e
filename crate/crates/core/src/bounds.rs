//! Closed-form bounds and limit curves: Bhattacharyya distance and bound,
//! classification-capacity bounds, diversity-discrimination curves, the
//! Wishart minimum-eigenvalue limit and the predicted class count used for
//! the face experiment.
//!
//! Capacities are in bits per feature.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::classifier::ProjectedClass;
use crate::ensemble::{check_sigma2, gaussian_matrix, snapped_floor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Two Gaussians observed with equal prior probability.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPair<T: Scalar> {
    pub mean1: DVector<T>,
    pub mean2: DVector<T>,
    pub cov1: DMatrix<T>,
    pub cov2: DMatrix<T>,
}

impl<T: Scalar> GaussianPair<T> {
    pub fn new(
        mean1: DVector<T>,
        mean2: DVector<T>,
        cov1: DMatrix<T>,
        cov2: DMatrix<T>,
    ) -> Result<Self> {
        let m = mean1.len();
        for (what, got) in [
            ("second mean length", mean2.len()),
            ("first covariance rows", cov1.nrows()),
            ("first covariance columns", cov1.ncols()),
            ("second covariance rows", cov2.nrows()),
            ("second covariance columns", cov2.ncols()),
        ] {
            if got != m {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: m,
                    got,
                });
            }
        }
        for cov in [&cov1, &cov2] {
            let scale = cov.amax().max(T::one());
            if (cov - cov.transpose()).amax() > T::ortho_tol(m) * scale {
                return Err(Error::NotPositiveDefinite("covariance is not symmetric"));
            }
            if cov.clone().cholesky().is_none() {
                return Err(Error::NotPositiveDefinite("covariance"));
            }
        }
        Ok(Self {
            mean1,
            mean2,
            cov1,
            cov2,
        })
    }

    /// The pair of feature-space densities `N(Phi mu_i, G_i G_i^T + sigma2 I)`.
    pub fn from_projected(a: &ProjectedClass<T>, b: &ProjectedClass<T>, sigma2: T) -> Result<Self> {
        check_sigma2(sigma2)?;
        Self::new(
            a.proj_mean().clone(),
            b.proj_mean().clone(),
            a.covariance(sigma2),
            b.covariance(sigma2),
        )
    }
}

fn chol_log_det<T: Scalar>(m: &DMatrix<T>) -> Result<(nalgebra::Cholesky<T, nalgebra::Dyn>, T)> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("covariance"))?;
    let ld = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(T::zero(), |acc, d| acc + d.ln())
        * T::lit(2.0);
    Ok((chol, ld))
}

/// Bhattacharyya distance between the two Gaussians of `p`.
///
/// Determinants are taken in the log domain through Cholesky factors.
pub fn bhattacharyya_distance<T: Scalar>(p: &GaussianPair<T>) -> Result<T> {
    let half = T::lit(0.5);
    let avg = (&p.cov1 + &p.cov2) * half;
    let (avg_chol, ld_avg) = chol_log_det(&avg)?;
    let (_, ld1) = chol_log_det(&p.cov1)?;
    let (_, ld2) = chol_log_det(&p.cov2)?;
    let delta = &p.mean1 - &p.mean2;
    let solved = avg_chol.solve(&delta);
    let mahal = delta.dot(&solved);
    let b = half * (ld_avg - half * (ld1 + ld2)) + mahal / T::lit(8.0);
    Ok(b.max(T::zero()))
}

/// `exp(-B) / 2`, an upper bound on the ML pairwise error.
pub fn bhattacharyya_bound<T: Scalar>(p: &GaussianPair<T>) -> Result<T> {
    Ok(T::lit(0.5) * (-bhattacharyya_distance(p)?).exp())
}

fn check_kappa<T: Scalar>(kappa: T) -> Result<()> {
    if !(kappa > T::zero() && kappa < T::one()) {
        return Err(Error::domain(
            "kappa",
            kappa.to_f64_lossy(),
            "0 < kappa < 1",
        ));
    }
    Ok(())
}

/// Shared `(sqrt(1/(2 kappa)) - 1)^2` term of the lower bounds.
fn half_gap<T: Scalar>(kappa: T) -> T {
    let g = (T::one() / (T::lit(2.0) * kappa)).sqrt() - T::one();
    g * g
}

/// `(1-kappa)/2 log2(1/sigma2) + 1/2 log2(spread + sigma2) - kappa/2 log2((sqrt(1/kappa)-1)^2 + sigma2)`
fn capacity_upper<T: Scalar>(kappa: T, sigma2: T, spread: T) -> T {
    let half = T::lit(0.5);
    let g = (T::one() / kappa).sqrt() - T::one();
    (T::one() - kappa) * half * (T::one() / sigma2).log2() + half * (spread + sigma2).log2()
        - kappa * half * (g * g + sigma2).log2()
}

/// Lower and upper bounds on the linear-subspace classification capacity.
///
/// The lower bound is returned as is, even when negative.
pub fn c_linear_bounds<T: Scalar>(kappa: T, sigma2: T) -> Result<(T, T)> {
    check_kappa(kappa)?;
    check_sigma2(sigma2)?;
    let half = T::lit(0.5);
    let lower = kappa.min(T::one() - kappa) * half * (T::one() + half_gap(kappa) / sigma2).log2()
        - kappa * half;
    Ok((lower, capacity_upper(kappa, sigma2, T::one())))
}

/// Lower and upper bounds on the affine-subspace classification capacity.
pub fn c_affine_bounds<T: Scalar>(kappa: T, sigma2: T) -> Result<(T, T)> {
    check_kappa(kappa)?;
    check_sigma2(sigma2)?;
    let half = T::lit(0.5);
    let gap = if kappa < half {
        half_gap(kappa).min(half)
    } else {
        half_gap(kappa)
    };
    let lower = (T::one() - kappa) * half * (T::one() + gap / sigma2).log2() - kappa * half;
    Ok((lower, capacity_upper(kappa, sigma2, T::lit(2.0))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DdtKind {
    LinearUpper,
    LinearLower,
    LinearConjecture,
    Affine,
}

impl DdtKind {
    pub const ALL: [DdtKind; 4] = [
        DdtKind::LinearLower,
        DdtKind::LinearConjecture,
        DdtKind::LinearUpper,
        DdtKind::Affine,
    ];
}

/// A diversity-discrimination curve for fixed `(M, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DdtCurve {
    kind: DdtKind,
    m: usize,
    k: usize,
}

impl DdtCurve {
    pub fn new(kind: DdtKind, m: usize, k: usize) -> Result<Self> {
        if k == 0 || k >= m {
            return Err(Error::InvalidDimension(format!(
                "DDT needs 1 <= k < M, got M = {m}, k = {k}"
            )));
        }
        Ok(Self { kind, m, k })
    }

    pub fn kind(&self) -> DdtKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Diversity gain `d(r)` of `curve`.
pub fn ddt_eval<T: Scalar>(curve: &DdtCurve, r: T) -> Result<T> {
    if !(r >= T::zero() && r.is_finite()) {
        return Err(Error::domain("r", r.to_f64_lossy(), "r >= 0"));
    }
    let m = T::from_usize_lossy(curve.m);
    let k = T::from_usize_lossy(curve.k);
    let free = m - k;
    let zero = T::zero();
    let d = match curve.kind {
        DdtKind::LinearUpper => (free - r).min(k * (T::one() - r / m)),
        DdtKind::LinearLower => free.min(k) - r,
        DdtKind::LinearConjecture => free.min(k) * (T::one() - r / free).max(zero),
        DdtKind::Affine => free - r,
    };
    Ok(d.max(zero))
}

/// Almost-sure limit `(1 - sqrt(kappa))^2` of the smallest eigenvalue of `W / M`, `W ~ Wishart_k(M, I)`, `k/M -> kappa`.
pub fn wishart_min_eig_limit<T: Scalar>(kappa: T) -> Result<T> {
    if !(kappa > T::zero() && kappa <= T::one()) {
        return Err(Error::domain(
            "kappa",
            kappa.to_f64_lossy(),
            "0 < kappa <= 1",
        ));
    }
    let g = T::one() - kappa.sqrt();
    Ok(g * g)
}

/// Average over `draws` of the smallest eigenvalue of `G^T G / M` for an
/// `M x k` standard Gaussian `G`.
pub fn wishart_min_eig_empirical<T: Scalar, R: Rng + ?Sized>(
    m: usize,
    k: usize,
    draws: usize,
    rng: &mut R,
) -> Result<T> {
    if k == 0 || k > m || draws == 0 {
        return Err(Error::InvalidDimension(format!(
            "need 1 <= k <= M and draws >= 1 (M = {m}, k = {k}, draws = {draws})"
        )));
    }
    let scale = T::one() / T::from_usize_lossy(m);
    let mut total = T::zero();
    for _ in 0..draws {
        let g = gaussian_matrix::<T, R>(m, k, T::one(), rng);
        let w = g.tr_mul(&g) * scale;
        let eig = w.symmetric_eigenvalues();
        total += eig
            .iter()
            .copied()
            .fold(T::max_value().unwrap_or(T::one()), |a, b| a.min(b));
    }
    Ok(total / T::from_usize_lossy(draws))
}

/// Predicted number of reliably separable classes,
/// `max(1, min(floor((1/sigma2)^((m - k_model)/2)), l_max))`.
pub fn predicted_classes<T: Scalar>(
    sigma2: T,
    m: usize,
    k_model: usize,
    l_max: u64,
) -> Result<u64> {
    check_sigma2(sigma2)?;
    if m == 0 {
        return Err(Error::InvalidDimension("m must be >= 1".into()));
    }
    let exponent = 0.5 * (m as f64 - k_model as f64);
    let v = snapped_floor((exponent * (1.0 / sigma2.to_f64_lossy()).ln()).exp());
    let capped = if v >= l_max as f64 { l_max } else { v as u64 };
    Ok(capped.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn iso(m: usize, shift: f64) -> GaussianPair<f64> {
        let mut mean2 = DVector::zeros(m);
        mean2[0] = shift;
        GaussianPair::new(
            DVector::zeros(m),
            mean2,
            DMatrix::identity(m, m),
            DMatrix::identity(m, m),
        )
        .unwrap()
    }

    #[test]
    fn identical_distributions() {
        let p = iso(3, 0.0);
        assert_eq!(bhattacharyya_distance(&p).unwrap(), 0.0);
        assert_eq!(bhattacharyya_bound(&p).unwrap(), 0.5);
    }

    #[test]
    fn mean_shift_only() {
        let p = iso(4, 8f64.sqrt());
        assert_relative_eq!(bhattacharyya_distance(&p).unwrap(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(
            bhattacharyya_bound(&p).unwrap(),
            0.5 * (-1.0f64).exp(),
            epsilon = 1e-14
        );
        let p = iso(2, 0.7);
        assert_relative_eq!(
            bhattacharyya_distance(&p).unwrap(),
            0.49 / 8.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn scalar_variances() {
        // mpmath: 0.5*log(2/sqrt(3)) = 0.0719205181129...; 0.5*exp(-B) = 0.4653024295...
        let p = GaussianPair::new(
            DVector::zeros(1),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 3.0),
        )
        .unwrap();
        assert_relative_eq!(
            bhattacharyya_distance(&p).unwrap(),
            0.071_920_518_112_9,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            bhattacharyya_bound(&p).unwrap(),
            0.465_302_429_6,
            epsilon = 1e-9
        );
    }

    #[test]
    fn non_pd_rejected() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianPair::new(
            DVector::zeros(2),
            DVector::zeros(2),
            bad,
            DMatrix::identity(2, 2)
        )
        .is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(GaussianPair::new(
            DVector::zeros(2),
            DVector::zeros(2),
            asym,
            DMatrix::identity(2, 2)
        )
        .is_err());
    }

    #[test]
    fn linear_capacity_values() {
        let (lo, _) = c_linear_bounds(0.5, 3.7).unwrap();
        assert_eq!(lo, -0.25);
        let (_, up) = c_linear_bounds(0.5, 0.01).unwrap();
        // mpmath: 0.25*log2(100) + 0.5*log2(1.01) - 0.25*log2((sqrt(2)-1)^2 + 0.01)
        assert_relative_eq!(up, 2.283_486_543_18, epsilon = 1e-9);
        let (lo, _) = c_linear_bounds(0.125, 0.01).unwrap();
        assert_relative_eq!(lo, 101f64.log2() / 16.0 - 1.0 / 16.0, epsilon = 1e-14);
        assert_relative_eq!(lo, 0.353_6, epsilon = 1e-4);
        assert!(c_linear_bounds(1.5, 0.1).is_err());
        assert!(c_linear_bounds(0.5, 0.0).is_err());
    }

    #[test]
    fn affine_capacity_branches() {
        for s in [1e-4f64, 0.01, 0.3] {
            let (lin_lo, lin_up) = c_linear_bounds(0.5, s).unwrap();
            let (aff_lo, aff_up) = c_affine_bounds(0.5, s).unwrap();
            assert_relative_eq!(lin_lo, aff_lo, epsilon = 1e-15);
            assert_relative_eq!(
                aff_up - lin_up,
                0.5 * ((2.0 + s) / (1.0 + s)).log2(),
                epsilon = 1e-12
            );
            assert!(aff_up > lin_up);
            // Continuity across the kappa = 1/2 branch point.
            let (below, _) = c_affine_bounds(0.5 - 1e-9, s).unwrap();
            assert!((below - aff_lo).abs() < 1e-6);
        }
        // kappa = 1/4: (sqrt 2 - 1)^2 = 0.17157 < 1/2 is selected.
        let (lo, _) = c_affine_bounds(0.25, 0.01).unwrap();
        let gap = (2f64.sqrt() - 1.0).powi(2);
        assert!(gap < 0.5);
        assert_relative_eq!(
            lo,
            0.375 * (1.0 + gap / 0.01).log2() - 0.125,
            epsilon = 1e-12
        );
        // kappa = 0.05: the 1/2 cap applies.
        let (lo, _) = c_affine_bounds(0.05, 0.01).unwrap();
        assert_relative_eq!(lo, 0.475 * 51f64.log2() - 0.025, epsilon = 1e-12);
    }

    #[test]
    fn ddt_examples() {
        let aff = DdtCurve::new(DdtKind::Affine, 3, 1).unwrap();
        assert_eq!(ddt_eval(&aff, 0.0).unwrap(), 2.0);
        let conj = DdtCurve::new(DdtKind::LinearConjecture, 3, 1).unwrap();
        assert_relative_eq!(ddt_eval(&conj, 1.5).unwrap(), 0.25, epsilon = 1e-15);
        let up = DdtCurve::new(DdtKind::LinearUpper, 4, 1).unwrap();
        assert_eq!(ddt_eval(&up, 2.0).unwrap(), 0.5);
        assert!(DdtCurve::new(DdtKind::Affine, 3, 3).is_err());
        assert!(ddt_eval(&aff, -1.0).is_err());
    }

    #[test]
    fn ddt_upper_branch_slack() {
        // k(1 - r/M) alone only vanishes at r = M; the min still vanishes at M - k.
        let up = DdtCurve::new(DdtKind::LinearUpper, 4, 1).unwrap();
        assert_eq!(ddt_eval(&up, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn wishart_limit_values() {
        assert_eq!(wishart_min_eig_limit(1.0).unwrap(), 0.0);
        assert_eq!(wishart_min_eig_limit(0.25).unwrap(), 0.25);
        assert!(wishart_min_eig_limit(0.0).is_err());
        assert!(wishart_min_eig_limit(1.5).is_err());
    }

    #[test]
    fn predicted_class_counts() {
        assert_eq!(predicted_classes(0.25, 9, 9, 38).unwrap(), 1);
        assert_eq!(predicted_classes(0.25, 11, 9, 38).unwrap(), 4);
        assert_eq!(predicted_classes(0.25, 20, 9, 38).unwrap(), 38);
        assert_eq!(predicted_classes(0.25, 5, 9, 38).unwrap(), 1);
        assert!(predicted_classes(0.0, 5, 9, 38).is_err());
    }
}
