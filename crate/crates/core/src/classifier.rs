//! Maximum-likelihood classification among Gaussian classes with covariance
//! `G G^T + sigma2 I`.
//!
//! Densities are evaluated through the k x k core `C = sigma2 I + G^T G`:
//!
//! * `log|Sigma| = (M - k) log sigma2 + log|C|`
//! * `Sigma^-1 = (I - G C^-1 G^T) / sigma2`
//!
//! With `C = L L^T` and `W = L^-1 G^T`, the quadratic form is
//! `(|r|^2 - |W r|^2) / sigma2`, which costs O(Mk) per observation once the
//! class has been prepared.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::ensemble::{check_sigma2, gaussian, gaussian_vector, FeatureMatrix, SubspaceClass};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::stats::ErrorEstimate;

/// A class seen through the feature matrix: factor `G = Phi U` and mean `Phi mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedClass<T: Scalar> {
    factor: DMatrix<T>,
    proj_mean: DVector<T>,
}

impl<T: Scalar> ProjectedClass<T> {
    pub fn new(factor: DMatrix<T>, proj_mean: DVector<T>) -> Result<Self> {
        let (m, k) = factor.shape();
        if m == 0 || k == 0 {
            return Err(Error::InvalidDimension(format!("factor is {m}x{k}")));
        }
        if proj_mean.len() != m {
            return Err(Error::DimensionMismatch {
                what: "projected mean length",
                expected: m,
                got: proj_mean.len(),
            });
        }
        if !factor.iter().chain(proj_mean.iter()).all(|x| x.is_finite()) {
            return Err(Error::NonFinite("projected class"));
        }
        Ok(Self { factor, proj_mean })
    }

    pub fn factor(&self) -> &DMatrix<T> {
        &self.factor
    }

    pub fn proj_mean(&self) -> &DVector<T> {
        &self.proj_mean
    }

    pub fn m(&self) -> usize {
        self.factor.nrows()
    }

    pub fn k(&self) -> usize {
        self.factor.ncols()
    }

    /// Dense covariance `G G^T + sigma2 I` (M x M).
    pub fn covariance(&self, sigma2: T) -> DMatrix<T> {
        let m = self.m();
        &self.factor * self.factor.transpose() + DMatrix::identity(m, m) * sigma2
    }

    /// Draws `y = G h + Phi mu + z`.
    pub fn sample<R: Rng + ?Sized>(&self, sigma2: T, rng: &mut R) -> DVector<T> {
        let h = gaussian_vector::<T, R>(self.k(), T::one(), rng);
        let mut y = &self.factor * h + &self.proj_mean;
        let sd = sigma2.sqrt();
        for v in y.iter_mut() {
            *v += gaussian::<T, R>(rng) * sd;
        }
        y
    }
}

pub fn project_class<T: Scalar>(
    class: &SubspaceClass<T>,
    phi: &FeatureMatrix<T>,
) -> Result<ProjectedClass<T>> {
    if class.ambient_dim() != phi.n() {
        return Err(Error::DimensionMismatch {
            what: "class ambient dimension vs feature matrix columns",
            expected: phi.n(),
            got: class.ambient_dim(),
        });
    }
    let factor = phi.rows() * class.basis();
    let proj_mean = match class.mean() {
        Some(mu) => phi.rows() * mu,
        None => DVector::zeros(phi.m()),
    };
    Ok(ProjectedClass { factor, proj_mean })
}

/// A projected class prepared for repeated density evaluation at a fixed noise power.
#[derive(Debug, Clone)]
pub struct ClassDensity<T: Scalar> {
    // (L^-1 G^T)^T, M x k, column j is row j of W.
    whitened_t: DMatrix<T>,
    mean: DVector<T>,
    inv_sigma2: T,
    log_norm: T,
}

impl<T: Scalar> ClassDensity<T> {
    pub fn new(pc: &ProjectedClass<T>, sigma2: T) -> Result<Self> {
        check_sigma2(sigma2)?;
        let (m, k) = pc.factor.shape();
        let gt = pc.factor.transpose();
        let core = &gt * &pc.factor + DMatrix::identity(k, k) * sigma2;
        let chol = core
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("sigma2 I + G^T G"))?;
        let l = chol.l();
        let w = l
            .solve_lower_triangular(&gt)
            .ok_or(Error::NotPositiveDefinite("sigma2 I + G^T G"))?;
        let log_det_core = l.diagonal().iter().fold(T::zero(), |acc, d| acc + d.ln()) * T::lit(2.0);
        let log_det = T::lit(m as f64 - k as f64) * sigma2.ln() + log_det_core;
        let log_norm = -T::lit(0.5) * (T::from_usize_lossy(m) * T::two_pi().ln() + log_det);
        if !log_norm.is_finite() {
            return Err(Error::NonFinite("log-determinant"));
        }
        Ok(Self {
            whitened_t: w.transpose(),
            mean: pc.proj_mean.clone(),
            inv_sigma2: T::one() / sigma2,
            log_norm,
        })
    }

    pub fn m(&self) -> usize {
        self.mean.len()
    }

    /// `-1/2 log|2 pi Sigma|`, the density at the mean.
    pub fn log_norm(&self) -> T {
        self.log_norm
    }

    /// Log density at `y`; `y` must have length M (unchecked).
    pub fn log_density(&self, y: &DVector<T>) -> T {
        let ys = y.as_slice();
        let mu = self.mean.as_slice();
        let mut r2 = T::zero();
        for (a, b) in ys.iter().zip(mu) {
            let d = *a - *b;
            r2 += d * d;
        }
        let mut explained = T::zero();
        for col in self.whitened_t.column_iter() {
            let mut s = T::zero();
            for ((w, a), b) in col.iter().zip(ys).zip(mu) {
                s += *w * (*a - *b);
            }
            explained += s * s;
        }
        let quad = ((r2 - explained) * self.inv_sigma2).max(T::zero());
        self.log_norm - T::lit(0.5) * quad
    }
}

fn check_observation<T: Scalar>(y: &DVector<T>, m: usize) -> Result<()> {
    if y.len() != m {
        return Err(Error::DimensionMismatch {
            what: "observation length",
            expected: m,
            got: y.len(),
        });
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("observation"));
    }
    Ok(())
}

/// `log N(y; Phi mu, G G^T + sigma2 I)`.
pub fn log_likelihood<T: Scalar>(y: &DVector<T>, pc: &ProjectedClass<T>, sigma2: T) -> Result<T> {
    check_observation(y, pc.m())?;
    Ok(ClassDensity::new(pc, sigma2)?.log_density(y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult<T: Scalar> {
    pub chosen: usize,
    pub loglik: Vec<T>,
}

/// Index of the largest value, first one on ties.
fn argmax<T: Scalar>(values: impl IntoIterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_val: Option<T> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best_val {
            Some(b) if v <= b => {}
            _ => {
                best = i;
                best_val = Some(v);
            }
        }
    }
    best
}

/// Equal-prior ML classifier over a fixed set of classes and noise power.
#[derive(Debug, Clone)]
pub struct Classifier<T: Scalar> {
    densities: Vec<ClassDensity<T>>,
}

impl<T: Scalar> Classifier<T> {
    pub fn new(classes: &[ProjectedClass<T>], sigma2: T) -> Result<Self> {
        let first = classes.first().ok_or(Error::EmptyClassList)?;
        let m = first.m();
        let densities = classes
            .iter()
            .map(|pc| {
                if pc.m() != m {
                    return Err(Error::DimensionMismatch {
                        what: "class feature dimension",
                        expected: m,
                        got: pc.m(),
                    });
                }
                ClassDensity::new(pc, sigma2)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { densities })
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    pub fn m(&self) -> usize {
        self.densities[0].m()
    }

    pub fn classify(&self, y: &DVector<T>) -> Result<ClassificationResult<T>> {
        check_observation(y, self.m())?;
        let loglik: Vec<T> = self.densities.iter().map(|d| d.log_density(y)).collect();
        Ok(ClassificationResult {
            chosen: argmax(loglik.iter().copied()),
            loglik,
        })
    }

    /// Chosen index only; skips validation and the log-likelihood vector.
    pub fn decide(&self, y: &DVector<T>) -> usize {
        argmax(self.densities.iter().map(|d| d.log_density(y)))
    }
}

pub fn classify<T: Scalar>(
    y: &DVector<T>,
    classes: &[ProjectedClass<T>],
    sigma2: T,
) -> Result<ClassificationResult<T>> {
    Classifier::new(classes, sigma2)?.classify(y)
}

/// Monte Carlo estimate of the equal-prior pairwise error between `a` and `b`.
///
/// Trial `t` uses stream `stream.derive(t)`; the first `ceil(trials/2)` trials
/// draw from `a`, the rest from `b`.
pub fn pairwise_error_mc<T: Scalar>(
    a: &SubspaceClass<T>,
    b: &SubspaceClass<T>,
    phi: &FeatureMatrix<T>,
    sigma2: T,
    trials: u64,
    stream: RngStream,
) -> Result<ErrorEstimate> {
    if trials == 0 {
        return Err(Error::InvalidDimension("trials must be >= 1".into()));
    }
    let pair = [project_class(a, phi)?, project_class(b, phi)?];
    let clf = Classifier::new(&pair, sigma2)?;
    let from_a = trials.div_ceil(2);
    let errors = (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let truth = usize::from(t >= from_a);
            let y = pair[truth].sample(sigma2, &mut stream.derive(t).rng());
            clf.decide(&y) != truth
        })
        .count() as u64;
    Ok(ErrorEstimate::new(errors, trials))
}
