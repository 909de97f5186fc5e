//! Seeded Monte Carlo sweeps over noise power and dimension, and slope fitting.
//!
//! Every grid point and ensemble is an independent work item with its own
//! stream `root.derive(grid_index).derive(ensemble_index)`; results are merged
//! in grid/ensemble order, so output does not depend on the rayon pool size.

use rand::Rng;
use rayon::prelude::*;

use crate::classifier::{project_class, Classifier, ProjectedClass};
use crate::ensemble::{
    check_sigma2, dims_for, draw_affine_class, draw_feature_matrix, draw_linear_class,
    num_classes_for, FeatureMatrix, ScalingParams, SubspaceClass,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;

pub use crate::stats::ErrorEstimate;

/// Rows whose class count exceeds this are skipped unless configured otherwise.
pub const DEFAULT_CLASS_CAP: u64 = 100_000;

/// Fewest observed errors for a row to enter a slope fit.
pub const MIN_ERRORS_FOR_FIT: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepMode {
    DdtLinear,
    DdtAffine,
    Capacity,
}

impl SweepMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepMode::DdtLinear => "ddt_linear",
            SweepMode::DdtAffine => "ddt_affine",
            SweepMode::Capacity => "capacity",
        }
    }
}

impl std::str::FromStr for SweepMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ddt_linear" | "linear" => Ok(SweepMode::DdtLinear),
            "ddt_affine" | "affine" => Ok(SweepMode::DdtAffine),
            "capacity" => Ok(SweepMode::Capacity),
            other => Err(format!("unknown sweep mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub mode: SweepMode,
    /// Ambient dimension N (DDT modes).
    pub n: usize,
    /// Feature count M (DDT modes).
    pub m: usize,
    /// Subspace dimension k (DDT modes).
    pub k: usize,
    /// Dimension ratios and rate (capacity mode).
    pub scaling: ScalingParams,
    pub sigma2_grid: Vec<f64>,
    /// Feature counts (capacity mode).
    pub m_grid: Vec<usize>,
    /// Discrimination gains (DDT modes).
    pub r_list: Vec<f64>,
    /// Rates swept in capacity mode; empty means just `scaling.rho`.
    pub rho_list: Vec<f64>,
    pub ensembles_per_point: usize,
    pub signals_per_ensemble: usize,
    pub master_seed: u64,
    pub class_cap: u64,
}

impl SweepConfig {
    /// The 3-feature, rank-1 DDT setup with 100 x 100 trials per point.
    pub fn ddt_default(mode: SweepMode) -> Self {
        Self {
            mode,
            n: 3,
            m: 3,
            k: 1,
            scaling: ScalingParams {
                nu: 1.0,
                kappa: 0.5,
                rho: 0.5,
                r: 0.0,
            },
            sigma2_grid: log_grid(1e-1, 1e-4, 8),
            m_grid: Vec::new(),
            r_list: vec![0.0, 0.75, 1.5, 1.8],
            rho_list: Vec::new(),
            ensembles_per_point: 100,
            signals_per_ensemble: 100,
            master_seed: 0,
            class_cap: DEFAULT_CLASS_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma2_grid.is_empty() {
            return Err(Error::InvalidDimension("sigma2 grid is empty".into()));
        }
        for &s in &self.sigma2_grid {
            check_sigma2(s)?;
        }
        if self.ensembles_per_point == 0 || self.signals_per_ensemble == 0 {
            return Err(Error::InvalidDimension(
                "ensembles_per_point and signals_per_ensemble must be >= 1".into(),
            ));
        }
        match self.mode {
            SweepMode::DdtLinear | SweepMode::DdtAffine => {
                if self.r_list.is_empty() {
                    return Err(Error::InvalidDimension("r list is empty".into()));
                }
                for &r in &self.r_list {
                    if !(r.is_finite() && r >= 0.0) {
                        return Err(Error::domain("r", r, "r >= 0"));
                    }
                }
                if self.k == 0 || self.k > self.n || self.m == 0 || self.m > self.n {
                    return Err(Error::InvalidDimension(format!(
                        "need 1 <= k <= N and 1 <= M <= N (N = {}, M = {}, k = {})",
                        self.n, self.m, self.k
                    )));
                }
            }
            SweepMode::Capacity => {
                if self.m_grid.is_empty() {
                    return Err(Error::InvalidDimension("M grid is empty".into()));
                }
                if self.m_grid.contains(&0) {
                    return Err(Error::InvalidDimension("M grid contains 0".into()));
                }
                let p = &self.scaling;
                ScalingParams::new(p.nu, p.kappa, p.rho, p.r)?;
                for &rho in &self.rho_list {
                    ScalingParams::new(p.nu, p.kappa, rho, p.r)?;
                }
            }
        }
        Ok(())
    }
}

/// `count` points from `from` to `to`, evenly spaced in log scale.
pub fn log_grid(from: f64, to: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![from],
        _ => {
            let (a, b) = (from.log10(), to.log10());
            (0..count)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowStatus {
    Computed,
    /// Computed after raising k or L to the well-posedness floor.
    Clamped,
    SkippedOverCap,
    SkippedOverflow,
}

impl RowStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowStatus::Computed => "ok",
            RowStatus::Clamped => "clamped",
            RowStatus::SkippedOverCap => "skipped_over_cap",
            RowStatus::SkippedOverflow => "skipped_overflow",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sigma2: f64,
    /// r for DDT sweeps, rho for capacity sweeps.
    pub gain: f64,
    /// Class count (0 when it overflowed).
    pub l: u64,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub estimate: Option<ErrorEstimate>,
    pub master_seed: u64,
    pub status: RowStatus,
}

/// Equal-prior misclassification rate among `classes` over `signals` trials.
pub fn estimate_error<T: Scalar>(
    classes: &[SubspaceClass<T>],
    phi: &FeatureMatrix<T>,
    sigma2: T,
    signals: u64,
    stream: RngStream,
) -> Result<ErrorEstimate> {
    if signals == 0 {
        return Err(Error::InvalidDimension("signals must be >= 1".into()));
    }
    let projected = classes
        .iter()
        .map(|c| project_class(c, phi))
        .collect::<Result<Vec<ProjectedClass<T>>>>()?;
    let clf = Classifier::new(&projected, sigma2)?;
    let l = projected.len();
    let mut rng = stream.rng();
    let mut errors = 0u64;
    for _ in 0..signals {
        let truth = rng.random_range(0..l);
        let y = projected[truth].sample(sigma2, &mut rng);
        if clf.decide(&y) != truth {
            errors += 1;
        }
    }
    Ok(ErrorEstimate::new(errors, signals))
}

struct PointPlan {
    sigma2: f64,
    gain: f64,
    n: usize,
    m: usize,
    k: usize,
    l: u64,
    affine: bool,
    status: RowStatus,
}

impl PointPlan {
    fn runnable(&self) -> bool {
        matches!(self.status, RowStatus::Computed | RowStatus::Clamped)
    }
}

fn run_ensemble<T: Scalar>(
    plan: &PointPlan,
    signals: u64,
    stream: RngStream,
) -> Result<ErrorEstimate> {
    let mut class_rng = stream.derive(0).rng();
    let classes = (0..plan.l)
        .map(|_| {
            if plan.affine {
                draw_affine_class::<T, _>(plan.n, plan.k, &mut class_rng)
            } else {
                draw_linear_class::<T, _>(plan.n, plan.k, &mut class_rng)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let phi = draw_feature_matrix::<T, _>(plan.m, plan.n, &mut stream.derive(1).rng())?;
    estimate_error(
        &classes,
        &phi,
        T::lit(plan.sigma2),
        signals,
        stream.derive(2),
    )
}

fn execute<T: Scalar>(config: &SweepConfig, plans: Vec<PointPlan>) -> Result<Vec<SweepRow>> {
    let root = RngStream::new(config.master_seed, 0);
    let ensembles = config.ensembles_per_point;
    let signals = config.signals_per_ensemble as u64;
    let work: Vec<(usize, usize)> = plans
        .iter()
        .enumerate()
        .filter(|(_, p)| p.runnable())
        .flat_map(|(g, _)| (0..ensembles).map(move |e| (g, e)))
        .collect();
    let results = work
        .par_iter()
        .map(|&(g, e)| {
            run_ensemble::<T>(&plans[g], signals, root.derive(g as u64).derive(e as u64))
        })
        .collect::<Vec<_>>();
    let mut per_point: Vec<Vec<ErrorEstimate>> = vec![Vec::new(); plans.len()];
    for (&(g, _), res) in work.iter().zip(results) {
        per_point[g].push(res?);
    }
    Ok(plans
        .into_iter()
        .zip(per_point)
        .map(|(p, parts)| SweepRow {
            sigma2: p.sigma2,
            gain: p.gain,
            l: p.l,
            m: p.m,
            n: p.n,
            k: p.k,
            estimate: ErrorEstimate::pooled(parts),
            master_seed: config.master_seed,
            status: p.status,
        })
        .collect())
}

/// One row per `(r, sigma2)` with `L = num_classes_for(sigma2, r)` classes,
/// raised to 2 when the formula gives fewer.
pub fn run_ddt_sweep<T: Scalar>(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let affine = match config.mode {
        SweepMode::DdtLinear => false,
        SweepMode::DdtAffine => true,
        SweepMode::Capacity => {
            return Err(Error::InvalidDimension(
                "run_ddt_sweep needs a DDT mode".into(),
            ));
        }
    };
    let mut plans = Vec::new();
    for &r in &config.r_list {
        for &sigma2 in &config.sigma2_grid {
            let raw = num_classes_for(sigma2, r)?;
            let (l, mut status) = if raw < 2 {
                (2, RowStatus::Clamped)
            } else {
                (raw, RowStatus::Computed)
            };
            if l > config.class_cap {
                status = RowStatus::SkippedOverCap;
            }
            plans.push(PointPlan {
                sigma2,
                gain: r,
                n: config.n,
                m: config.m,
                k: config.k,
                l,
                affine,
                status,
            });
        }
    }
    execute::<T>(config, plans)
}

/// One row per `(rho, sigma2, M)` with `(N, k, L) = dims_for(M)`; linear classes.
pub fn run_capacity_sweep<T: Scalar>(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if config.mode != SweepMode::Capacity {
        return Err(Error::InvalidDimension(
            "run_capacity_sweep needs capacity mode".into(),
        ));
    }
    let rhos = if config.rho_list.is_empty() {
        vec![config.scaling.rho]
    } else {
        config.rho_list.clone()
    };
    let mut plans = Vec::new();
    for rho in rhos {
        let p = ScalingParams {
            rho,
            ..config.scaling
        };
        for &sigma2 in &config.sigma2_grid {
            for &m in &config.m_grid {
                let plan = match dims_for(m, &p) {
                    Ok((n, k, l)) => {
                        let clamped = (p.kappa * m as f64).floor() < 1.0
                            || (p.rho * m as f64).exp2().floor() < 2.0;
                        let status = if l > config.class_cap {
                            RowStatus::SkippedOverCap
                        } else if clamped {
                            RowStatus::Clamped
                        } else {
                            RowStatus::Computed
                        };
                        PointPlan {
                            sigma2,
                            gain: p.rho,
                            n,
                            m,
                            k: k.min(n),
                            l,
                            affine: false,
                            status,
                        }
                    }
                    Err(Error::Overflow { .. }) => PointPlan {
                        sigma2,
                        gain: p.rho,
                        n: (p.nu * m as f64).floor() as usize,
                        m,
                        k: ((p.kappa * m as f64).floor() as usize).max(1),
                        l: 0,
                        affine: false,
                        status: RowStatus::SkippedOverflow,
                    },
                    Err(e) => return Err(e),
                };
                plans.push(plan);
            }
        }
    }
    execute::<T>(config, plans)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    /// Negated slope of log2(p_hat) against log2(1/sigma2)/2.
    pub d_hat: f64,
    /// OLS standard error of the slope (0 for an exact fit).
    pub stderr: f64,
    pub used_rows: usize,
}

/// Least-squares diversity-gain estimate from sweep rows of one gain.
///
/// Rows without an estimate, with `p_hat` of 0 or 1, or with fewer than
/// [`MIN_ERRORS_FOR_FIT`] errors are ignored.
pub fn fit_slope(rows: &[SweepRow]) -> Result<SlopeFit> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|row| {
            let e = row.estimate?;
            (e.p_hat > 0.0 && e.p_hat < 1.0 && e.errors >= MIN_ERRORS_FOR_FIT)
                .then(|| (0.5 * (1.0 / row.sigma2).log2(), e.p_hat.log2()))
        })
        .collect();
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable row(s), need at least 3",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData(
            "all usable rows share one sigma2".into(),
        ));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let stderr = (ssr / (n - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        d_hat: -slope,
        stderr,
        used_rows: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn row(sigma2: f64, errors: u64, trials: u64) -> SweepRow {
        SweepRow {
            sigma2,
            gain: 0.0,
            l: 2,
            m: 3,
            n: 3,
            k: 1,
            estimate: Some(ErrorEstimate::new(errors, trials)),
            master_seed: 0,
            status: RowStatus::Computed,
        }
    }

    #[test]
    fn exact_line_fit() {
        // p = sigma2 exactly => log2 p = -2 * (log2(1/sigma2)/2), d = 2.
        let rows: Vec<SweepRow> = [0.5, 0.25, 0.125, 0.0625]
            .iter()
            .map(|&s| row(s, (s * 1024.0) as u64, 1024))
            .collect();
        let fit = fit_slope(&rows).unwrap();
        assert!((fit.d_hat - 2.0).abs() < 1e-12);
        assert!(fit.stderr < 1e-12);
        assert_eq!(fit.used_rows, 4);
    }

    #[test]
    fn all_zero_rows_are_insufficient() {
        let rows: Vec<SweepRow> = [0.1, 0.01, 0.001].iter().map(|&s| row(s, 0, 100)).collect();
        assert!(matches!(fit_slope(&rows), Err(Error::InsufficientData(_))));
        let rows: Vec<SweepRow> = [0.1, 0.01, 0.001].iter().map(|&s| row(s, 5, 100)).collect();
        assert!(matches!(fit_slope(&rows), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn single_class_never_errs() {
        let mut r = RngStream::new(3, 0).rng();
        let c: SubspaceClass<f64> = draw_linear_class(3, 1, &mut r).unwrap();
        let phi = FeatureMatrix::identity(3).unwrap();
        let e = estimate_error(&[c], &phi, 0.5, 500, RngStream::new(3, 1)).unwrap();
        assert_eq!(e.errors, 0);
    }

    #[test]
    fn identical_pair_is_chance() {
        let mut r = RngStream::new(3, 0).rng();
        let c: SubspaceClass<f64> = draw_linear_class(3, 1, &mut r).unwrap();
        let phi = FeatureMatrix::identity(3).unwrap();
        let e = estimate_error(&[c.clone(), c], &phi, 0.5, 10_000, RngStream::new(3, 2)).unwrap();
        assert!(e.ci_low <= 0.5 && 0.5 <= e.ci_high, "{e:?}");
    }

    #[test]
    fn orthogonal_pair_noiseless() {
        let a = SubspaceClass::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), None).unwrap();
        let b = SubspaceClass::new(DMatrix::from_column_slice(2, 1, &[0.0, 1.0]), None).unwrap();
        let phi = FeatureMatrix::identity(2).unwrap();
        let e = estimate_error(&[a, b], &phi, 1e-8, 1000, RngStream::new(3, 3)).unwrap();
        assert_eq!(e.p_hat, 0.0);
    }

    #[test]
    fn class_counts_per_row() {
        let mut cfg = SweepConfig::ddt_default(SweepMode::DdtLinear);
        cfg.sigma2_grid = vec![1e-1, 1e-2, 1e-3, 1e-4];
        cfg.r_list = vec![1.5];
        cfg.ensembles_per_point = 1;
        cfg.signals_per_ensemble = 5;
        let rows = run_ddt_sweep::<f64>(&cfg).unwrap();
        let ls: Vec<u64> = rows.iter().map(|r| r.l).collect();
        assert_eq!(ls, vec![5, 31, 177, 1000]);
    }

    #[test]
    fn r_zero_is_clamped_to_two() {
        let mut cfg = SweepConfig::ddt_default(SweepMode::DdtLinear);
        cfg.r_list = vec![0.0];
        cfg.ensembles_per_point = 2;
        cfg.signals_per_ensemble = 10;
        for row in run_ddt_sweep::<f64>(&cfg).unwrap() {
            assert_eq!(row.l, 2);
            assert_eq!(row.status, RowStatus::Clamped);
            assert_eq!(row.estimate.unwrap().trials, 20);
        }
    }

    #[test]
    fn over_cap_rows_are_flagged() {
        let mut cfg = SweepConfig::ddt_default(SweepMode::DdtLinear);
        cfg.sigma2_grid = vec![1e-1, 1e-4];
        cfg.r_list = vec![1.8];
        cfg.class_cap = 100;
        cfg.ensembles_per_point = 1;
        cfg.signals_per_ensemble = 5;
        let rows = run_ddt_sweep::<f64>(&cfg).unwrap();
        assert_eq!(rows[0].status, RowStatus::Computed);
        assert_eq!(rows[1].status, RowStatus::SkippedOverCap);
        assert!(rows[1].estimate.is_none());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = SweepConfig::ddt_default(SweepMode::DdtLinear);
        cfg.sigma2_grid.clear();
        assert!(run_ddt_sweep::<f64>(&cfg).is_err());
        let mut cfg = SweepConfig::ddt_default(SweepMode::DdtLinear);
        cfg.r_list = vec![-1.0];
        assert!(run_ddt_sweep::<f64>(&cfg).is_err());
        let cfg = SweepConfig::ddt_default(SweepMode::Capacity);
        assert!(run_capacity_sweep::<f64>(&cfg).is_err());
        assert!(run_ddt_sweep::<f64>(&cfg).is_err());
    }

    #[test]
    fn capacity_single_m() {
        let mut cfg = SweepConfig::ddt_default(SweepMode::Capacity);
        cfg.scaling = ScalingParams::new(1.0, 0.25, 0.5, 0.0).unwrap();
        cfg.sigma2_grid = vec![0.01];
        cfg.m_grid = vec![8];
        cfg.ensembles_per_point = 2;
        cfg.signals_per_ensemble = 20;
        let rows = run_capacity_sweep::<f64>(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].n, rows[0].k, rows[0].l), (8, 2, 16));
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-1, 1e-4, 4);
        assert_eq!(g.len(), 4);
        for (a, b) in g.iter().zip([1e-1, 1e-2, 1e-3, 1e-4]) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
    }
}
