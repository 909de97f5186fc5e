//! Subspace classification on labeled image corpora: loading, train/test
//! split, per-class rank-k covariance estimation, noise-power estimation and
//! the error-vs-(M, L) experiment.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::bounds::predicted_classes;
use crate::classifier::{Classifier, ProjectedClass};
use crate::ensemble::{draw_feature_matrix, draw_linear_class, gaussian_vector, FeatureMatrix};
use crate::error::{Error, Result};
use crate::pgm::read_pgm;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::stats::ErrorEstimate;

/// Images as length-N vectors with contiguous labels `0..class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet<T: Scalar> {
    images: Vec<(usize, DVector<T>)>,
    n: usize,
    counts: Vec<usize>,
}

impl<T: Scalar> LabeledImageSet<T> {
    pub fn new(images: Vec<(usize, DVector<T>)>) -> Result<Self> {
        let n = images
            .first()
            .map(|(_, v)| v.len())
            .ok_or_else(|| Error::InsufficientData("no images".into()))?;
        if n == 0 {
            return Err(Error::InvalidDimension("images have no pixels".into()));
        }
        let classes = images.iter().map(|(l, _)| *l).max().unwrap_or(0) + 1;
        let mut counts = vec![0; classes];
        for (label, v) in &images {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "image length",
                    expected: n,
                    got: v.len(),
                });
            }
            counts[*label] += 1;
        }
        if let Some(label) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InsufficientData(format!(
                "label {label} has no images"
            )));
        }
        Ok(Self { images, n, counts })
    }

    pub fn images(&self) -> &[(usize, DVector<T>)] {
        &self.images
    }

    /// Ambient dimension N.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn class_count(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn class_vectors(&self, label: usize) -> Vec<&DVector<T>> {
        self.images
            .iter()
            .filter(|(l, _)| *l == label)
            .map(|(_, v)| v)
            .collect()
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::fs::DirEntry>> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

/// Loads `root/<class>/<image>.pgm`; classes are numbered in lexicographic
/// order of their directory names, pixels scaled to [0, 1], row-major.
pub fn load_image_dir<T: Scalar>(root: &Path) -> Result<LabeledImageSet<T>> {
    let mut images = Vec::new();
    let mut shape: Option<(usize, usize)> = None;
    let mut label = 0;
    for entry in sorted_entries(root)? {
        let class_dir = entry.path();
        if !class_dir.is_dir() {
            continue;
        }
        let mut found = 0;
        for file in sorted_entries(&class_dir)? {
            let path = file.path();
            let is_pgm = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
            if !is_pgm || !path.is_file() {
                continue;
            }
            let img = read_pgm(&path)?;
            let dims = (img.width, img.height);
            match shape {
                None => shape = Some(dims),
                Some(expected) if expected != dims => {
                    return Err(Error::ImageSize {
                        path,
                        expected,
                        got: dims,
                    });
                }
                _ => {}
            }
            images.push((
                label,
                DVector::from_iterator(img.pixels.len(), img.intensities().map(T::lit)),
            ));
            found += 1;
        }
        if found == 0 {
            return Err(Error::EmptyClass(class_dir));
        }
        label += 1;
    }
    if images.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} has no class subdirectories",
            root.display()
        )));
    }
    LabeledImageSet::new(images)
}

/// Per-class random halves; odd counts give the extra image to training.
pub fn split<T: Scalar>(
    set: &LabeledImageSet<T>,
    seed: u64,
) -> Result<(LabeledImageSet<T>, LabeledImageSet<T>)> {
    if let Some((label, &count)) = set.counts.iter().enumerate().find(|(_, &c)| c < 2) {
        return Err(Error::TooFewSamples { label, count });
    }
    let root = RngStream::new(seed, 0x5e1f);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in 0..set.class_count() {
        let mut members: Vec<&DVector<T>> = set.class_vectors(label);
        members.shuffle(&mut root.derive(label as u64).rng());
        let n_train = members.len().div_ceil(2);
        for (i, v) in members.into_iter().enumerate() {
            let dst = if i < n_train { &mut train } else { &mut test };
            dst.push((label, v.clone()));
        }
    }
    Ok((LabeledImageSet::new(train)?, LabeledImageSet::new(test)?))
}

/// Rank-k Gaussian model of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedClassModel<T: Scalar> {
    /// N x k orthonormal principal directions.
    pub directions: DMatrix<T>,
    /// `s_j / sqrt(count)` for each direction.
    pub scales: Vec<T>,
    /// `directions * diag(scales)`, so that `basis basis^T` is the rank-k
    /// approximation of the (un)centered second moment.
    pub basis: DMatrix<T>,
    /// Per-class mean, present only for affine estimation.
    pub mean: Option<DVector<T>>,
    pub k_model: usize,
}

fn estimate_from<T: Scalar>(
    samples: DMatrix<T>,
    k_model: usize,
    mean: Option<DVector<T>>,
) -> Result<EstimatedClassModel<T>> {
    let (n, count) = samples.shape();
    if k_model == 0 || k_model > n.min(count) {
        return Err(Error::InvalidDimension(format!(
            "k_model = {k_model} needs 1 <= k_model <= min(N = {n}, samples = {count})"
        )));
    }
    let svd = samples.svd(true, false);
    let u = svd
        .u
        .ok_or(Error::NotPositiveDefinite("SVD did not converge"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let norm = T::one() / T::from_usize_lossy(count).sqrt();
    let mut directions = DMatrix::zeros(n, k_model);
    let mut scales = Vec::with_capacity(k_model);
    for (j, &src) in order.iter().take(k_model).enumerate() {
        directions.set_column(j, &u.column(src));
        scales.push(svd.singular_values[src] * norm);
    }
    let mut basis = directions.clone();
    for (j, s) in scales.iter().enumerate() {
        basis.column_mut(j).scale_mut(*s);
    }
    Ok(EstimatedClassModel {
        directions,
        scales,
        basis,
        mean,
        k_model,
    })
}

fn stack<T: Scalar>(train: &[&DVector<T>]) -> Result<DMatrix<T>> {
    let first = train
        .first()
        .ok_or_else(|| Error::InsufficientData("no training vectors".into()))?;
    let n = first.len();
    if let Some(v) = train.iter().find(|v| v.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "training vector length",
            expected: n,
            got: v.len(),
        });
    }
    Ok(DMatrix::from_columns(
        &train.iter().map(|v| (*v).clone()).collect::<Vec<_>>(),
    ))
}

/// Zero-mean model from the top-k left singular vectors of the stacked,
/// uncentered training vectors.
pub fn estimate_subspace<T: Scalar>(
    train: &[&DVector<T>],
    k_model: usize,
) -> Result<EstimatedClassModel<T>> {
    estimate_from(stack(train)?, k_model, None)
}

/// Affine model: subtracts the class mean before the decomposition.
pub fn estimate_affine_subspace<T: Scalar>(
    train: &[&DVector<T>],
    k_model: usize,
) -> Result<EstimatedClassModel<T>> {
    let mut x = stack(train)?;
    let mean = x.column_mean();
    for mut col in x.column_iter_mut() {
        col -= &mean;
    }
    estimate_from(x, k_model, Some(mean))
}

impl<T: Scalar> EstimatedClassModel<T> {
    /// Same span with every direction carrying the RMS of the fitted scales,
    /// i.e. isotropic within the span.
    pub fn span_only(&self) -> Self {
        let k = T::from_usize_lossy(self.scales.len().max(1));
        let rms = (self.scales.iter().fold(T::zero(), |acc, s| acc + *s * *s) / k).sqrt();
        Self {
            directions: self.directions.clone(),
            scales: vec![rms; self.scales.len()],
            basis: &self.directions * rms,
            mean: self.mean.clone(),
            k_model: self.k_model,
        }
    }

    pub fn project(&self, phi: &FeatureMatrix<T>) -> Result<ProjectedClass<T>> {
        if self.basis.nrows() != phi.n() {
            return Err(Error::DimensionMismatch {
                what: "model ambient dimension vs feature matrix columns",
                expected: phi.n(),
                got: self.basis.nrows(),
            });
        }
        let mean = match &self.mean {
            Some(mu) => phi.rows() * mu,
            None => DVector::zeros(phi.m()),
        };
        ProjectedClass::new(phi.rows() * &self.basis, mean)
    }
}

/// Orthonormal basis for the numerical column span of `a`.
fn span_basis<T: Scalar>(a: DMatrix<T>) -> DMatrix<T> {
    let (m, k) = a.shape();
    let svd = a.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let s_max = svd
        .singular_values
        .iter()
        .copied()
        .fold(T::zero(), |x, y| x.max(y));
    let tol = s_max * T::default_epsilon() * T::from_usize_lossy(m.max(k)) * T::lit(10.0);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&j| svd.singular_values[j] > tol)
        .collect();
    DMatrix::from_fn(m, keep.len(), |i, j| u[(i, keep[j])])
}

/// Mean over images of `|residual|^2 / M`, where the residual is what remains
/// of `Phi x` (less `Phi mu` for affine models) after projecting onto the span
/// of its class's `Phi * basis`.
pub fn estimate_noise_power<T: Scalar>(
    test: &[(usize, DVector<T>)],
    models: &[EstimatedClassModel<T>],
    phi: &FeatureMatrix<T>,
) -> Result<T> {
    if test.is_empty() {
        return Err(Error::InsufficientData("no test vectors".into()));
    }
    let spans = models
        .iter()
        .map(|mdl| {
            let pc = mdl.project(phi)?;
            Ok((span_basis(pc.factor().clone()), pc.proj_mean().clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = T::from_usize_lossy(phi.m());
    let mut total = T::zero();
    for (label, x) in test {
        let (q, mu) = spans
            .get(*label)
            .ok_or_else(|| Error::InsufficientData(format!("no model for label {label}")))?;
        let y = phi.apply(x)? - mu;
        let coeff = q.tr_mul(&y);
        let resid = &y - q * coeff;
        total += resid.norm_squared() / m;
    }
    Ok(total / T::from_usize_lossy(test.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceConfig {
    pub m_grid: Vec<usize>,
    pub l_grid: Vec<usize>,
    pub k_model: usize,
    /// Error threshold defining "reliably discriminated".
    pub tau: f64,
    /// Cap on the predicted class count.
    pub l_max: u64,
    pub seed: u64,
    /// Subtract per-class means and classify with them.
    pub affine: bool,
    /// Drop the fitted per-direction energies; see [`EstimatedClassModel::span_only`].
    pub span_only: bool,
}

impl Default for FaceConfig {
    fn default() -> Self {
        Self {
            m_grid: (1..=40).collect(),
            l_grid: (1..=38).collect(),
            k_model: 9,
            tau: 0.2,
            l_max: 38,
            seed: 0,
            affine: false,
            span_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceReport {
    pub m_grid: Vec<usize>,
    pub l_grid: Vec<usize>,
    /// `errors[i][j]` for `m_grid[i]`, `l_grid[j]`.
    pub errors: Vec<Vec<ErrorEstimate>>,
    /// Noise power estimated at each M.
    pub sigma2_hat: Vec<f64>,
    /// Noise power handed to the classifier (floored away from 0).
    pub sigma2_used: Vec<f64>,
    /// Largest L in the grid with error below tau, 0 if none.
    pub max_l_empirical: Vec<usize>,
    pub predicted: Vec<u64>,
    pub tau: f64,
}

fn run_at_m<T: Scalar>(
    m: usize,
    stream: RngStream,
    models: &[EstimatedClassModel<T>],
    test: &LabeledImageSet<T>,
    config: &FaceConfig,
) -> Result<(Vec<ErrorEstimate>, f64, f64, usize, u64)> {
    let phi = draw_feature_matrix::<T, _>(m, test.n(), &mut stream.rng())?;
    let sigma2_hat = estimate_noise_power(test.images(), models, &phi)?;
    let features: Vec<(usize, DVector<T>)> = test
        .images()
        .iter()
        .map(|(l, x)| Ok((*l, phi.apply(x)?)))
        .collect::<Result<_>>()?;
    let energy = features
        .iter()
        .fold(T::zero(), |acc, (_, y)| acc + y.norm_squared())
        / T::from_usize_lossy(features.len() * m);
    let floor = energy * T::lit(1e-12);
    if floor <= T::zero() || !floor.is_finite() {
        return Err(Error::InsufficientData(
            "test features carry no energy".into(),
        ));
    }
    let sigma2 = sigma2_hat.max(floor);
    let projected = models
        .iter()
        .map(|mdl| mdl.project(&phi))
        .collect::<Result<Vec<_>>>()?;
    let mut row = Vec::with_capacity(config.l_grid.len());
    for &l in &config.l_grid {
        let clf = Classifier::new(&projected[..l], sigma2)?;
        let mut errors = 0u64;
        let mut trials = 0u64;
        for (label, y) in features.iter().filter(|(label, _)| *label < l) {
            trials += 1;
            if clf.decide(y) != *label {
                errors += 1;
            }
        }
        row.push(ErrorEstimate::new(errors, trials));
    }
    let max_l = config
        .l_grid
        .iter()
        .zip(&row)
        .filter(|(_, e)| e.p_hat < config.tau)
        .map(|(&l, _)| l)
        .max()
        .unwrap_or(0);
    let predicted = predicted_classes(sigma2, m, config.k_model, config.l_max)?;
    Ok((
        row,
        sigma2_hat.to_f64_lossy(),
        sigma2.to_f64_lossy(),
        max_l,
        predicted,
    ))
}

/// Error matrix over `(M, L)` using the first L classes, with the noise power
/// re-estimated from the test images at every M.
pub fn run_face_experiment<T: Scalar>(
    set: &LabeledImageSet<T>,
    config: &FaceConfig,
) -> Result<FaceReport> {
    if config.m_grid.is_empty() || config.l_grid.is_empty() {
        return Err(Error::InvalidDimension(
            "M and L grids must be non-empty".into(),
        ));
    }
    if let Some(&l) = config
        .l_grid
        .iter()
        .find(|&&l| l == 0 || l > set.class_count())
    {
        return Err(Error::InvalidDimension(format!(
            "L = {l} outside 1..={}",
            set.class_count()
        )));
    }
    if let Some(&m) = config.m_grid.iter().find(|&&m| m == 0 || m > set.n()) {
        return Err(Error::InvalidDimension(format!(
            "M = {m} outside 1..={}",
            set.n()
        )));
    }
    if !(config.tau > 0.0 && config.tau <= 1.0) {
        return Err(Error::domain("tau", config.tau, "0 < tau <= 1"));
    }
    let (train, test) = split(set, config.seed)?;
    let models = (0..set.class_count())
        .map(|label| {
            let vs = train.class_vectors(label);
            let model = if config.affine {
                estimate_affine_subspace(&vs, config.k_model)
            } else {
                estimate_subspace(&vs, config.k_model)
            }?;
            Ok(if config.span_only {
                model.span_only()
            } else {
                model
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let root = RngStream::new(config.seed, 0xfea7);
    let per_m = config
        .m_grid
        .par_iter()
        .enumerate()
        .map(|(i, &m)| run_at_m(m, root.derive(i as u64), &models, &test, config))
        .collect::<Result<Vec<_>>>()?;
    let mut report = FaceReport {
        m_grid: config.m_grid.clone(),
        l_grid: config.l_grid.clone(),
        errors: Vec::new(),
        sigma2_hat: Vec::new(),
        sigma2_used: Vec::new(),
        max_l_empirical: Vec::new(),
        predicted: Vec::new(),
        tau: config.tau,
    };
    for (row, s_hat, s_used, max_l, pred) in per_m {
        report.errors.push(row);
        report.sigma2_hat.push(s_hat);
        report.sigma2_used.push(s_used);
        report.max_l_empirical.push(max_l);
        report.predicted.push(pred);
    }
    Ok(report)
}

/// Corpus drawn from the model itself: each class is a random rank-`k`
/// linear class in R^n, images are `U h + z` with `z ~ N(0, sigma2 I)`.
pub fn synthetic_corpus<T: Scalar, R: Rng + ?Sized>(
    classes: usize,
    n: usize,
    k: usize,
    per_class: usize,
    sigma2: f64,
    rng: &mut R,
) -> Result<LabeledImageSet<T>> {
    if classes == 0 || per_class == 0 {
        return Err(Error::InvalidDimension(
            "need at least one class and one image per class".into(),
        ));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::domain("sigma2", sigma2, "sigma2 >= 0"));
    }
    let sd = T::lit(sigma2.sqrt());
    let mut images = Vec::with_capacity(classes * per_class);
    for label in 0..classes {
        let class = draw_linear_class::<T, R>(n, k, rng)?;
        for _ in 0..per_class {
            let h = gaussian_vector::<T, R>(k, T::one(), rng);
            let noise = gaussian_vector::<T, R>(n, sd, rng);
            images.push((label, class.basis() * h + noise));
        }
    }
    LabeledImageSet::new(images)
}
