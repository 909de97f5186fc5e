//! Subcommand bodies. Each takes fully merged [`Params`], fills in defaults,
//! validates, runs, and returns the CSV text (metadata header included).

use std::fmt::Write as _;
use std::path::PathBuf;

use grasscap::experiments::DEFAULT_CLASS_CAP;
use grasscap::{
    c_affine_bounds, c_linear_bounds, ddt_eval, fit_slope, load_image_dir, log_grid,
    run_capacity_sweep, run_ddt_sweep, run_face_experiment, synthetic_corpus, DdtCurve, DdtKind,
    FaceConfig, LabeledImageSet64, RngStream, ScalingParams, SweepConfig, SweepMode, SweepRow,
};

use crate::config::Params;
use crate::error::CliError;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Shortest round-trip form, switching to exponent notation at extreme magnitudes.
struct F(f64);

impl std::fmt::Display for F {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn header(command: &str, params: &Params) -> String {
    let mut p = params.clone();
    p.set("command", command);
    p.header()
}

fn check_command(command: &str, params: &Params) -> Result<(), CliError> {
    match params.raw("command") {
        Some(c) if c != command => Err(invalid(format!("config is for `{c}`, not `{command}`"))),
        _ => Ok(()),
    }
}

fn positive_list(params: &Params, key: &str) -> Result<Vec<f64>, CliError> {
    let xs: Vec<f64> = params.get_list(key)?;
    if let Some(x) = xs.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(invalid(format!(
            "invalid value for {key}: {x} (must be > 0)"
        )));
    }
    Ok(xs)
}

fn nonneg_list(params: &Params, key: &str) -> Result<Vec<f64>, CliError> {
    let xs: Vec<f64> = params.get_list(key)?;
    if let Some(x) = xs.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(invalid(format!(
            "invalid value for {key}: {x} (must be >= 0)"
        )));
    }
    Ok(xs)
}

fn kappa_param(params: &Params) -> Result<f64, CliError> {
    let kappa: f64 = params.get("kappa")?;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(invalid(format!(
            "invalid value for kappa: {kappa} (must be in (0, 1))"
        )));
    }
    Ok(kappa)
}

fn count_param(params: &Params, key: &str) -> Result<usize, CliError> {
    let v: usize = params.get(key)?;
    if v == 0 {
        return Err(invalid(format!(
            "invalid value for {key}: 0 (must be >= 1)"
        )));
    }
    Ok(v)
}

/// Replaces `sigma2_from/sigma2_to/sigma2_points` with an explicit `sigma2` list.
fn resolve_sigma2_grid(
    params: &mut Params,
    from: f64,
    to: f64,
    points: usize,
) -> Result<(), CliError> {
    let from = params.remove("sigma2_from").map_or(Ok(from), |v| {
        v.parse()
            .map_err(|_| invalid(format!("invalid value for sigma2_from: `{v}`")))
    })?;
    let to = params.remove("sigma2_to").map_or(Ok(to), |v| {
        v.parse()
            .map_err(|_| invalid(format!("invalid value for sigma2_to: `{v}`")))
    })?;
    let points = params.remove("sigma2_points").map_or(Ok(points), |v| {
        v.parse()
            .map_err(|_| invalid(format!("invalid value for sigma2_points: `{v}`")))
    })?;
    if params.raw("sigma2").is_none() {
        if !(from > 0.0 && to > 0.0) || points == 0 {
            return Err(invalid(
                "invalid sigma2 grid: endpoints must be > 0 and points >= 1",
            ));
        }
        params.set("sigma2", join(&log_grid(from, to, points)));
    }
    Ok(())
}

pub fn cmd_bounds(mut params: Params) -> Result<String, CliError> {
    check_command("bounds", &params)?;
    params.set_default("kappa", 0.5);
    params.set_default("sigma2", "0.1,0.01,0.001,0.0001");
    params.set_default("m", 3);
    params.set_default("k", 1);
    params.set_default("r", "0,0.75,1.5,1.8");
    let kappa = kappa_param(&params)?;
    let sigma2 = positive_list(&params, "sigma2")?;
    let m = count_param(&params, "m")?;
    let k = count_param(&params, "k")?;
    if k >= m {
        return Err(invalid(format!(
            "invalid value for k: {k} (must be < m = {m})"
        )));
    }
    let rs = nonneg_list(&params, "r")?;

    let mut out = header("bounds", &params);
    out.push_str("# section=capacity\nsigma2,c_lin_low,c_lin_up,c_aff_low,c_aff_up\n");
    for &s in &sigma2 {
        let (ll, lu) = c_linear_bounds(kappa, s)?;
        let (al, au) = c_affine_bounds(kappa, s)?;
        writeln!(out, "{},{},{},{},{}", F(s), F(ll), F(lu), F(al), F(au)).unwrap();
    }
    out.push_str("# section=ddt\nr,d_lin_low,d_lin_conj,d_lin_up,d_aff\n");
    for &r in &rs {
        let d = DdtKind::ALL
            .iter()
            .map(|&kind| ddt_eval(&DdtCurve::new(kind, m, k)?, r))
            .collect::<grasscap::Result<Vec<f64>>>()?;
        writeln!(out, "{r},{}", join(&d)).unwrap();
    }
    Ok(out)
}

fn sweep_common(params: &mut Params, cfg: &mut SweepConfig) -> Result<(), CliError> {
    params.set_default("ensembles", cfg.ensembles_per_point);
    params.set_default("signals", cfg.signals_per_ensemble);
    params.set_default("class_cap", DEFAULT_CLASS_CAP);
    params.set_default("seed", 0);
    cfg.ensembles_per_point = count_param(params, "ensembles")?;
    cfg.signals_per_ensemble = count_param(params, "signals")?;
    cfg.class_cap = params.get("class_cap")?;
    cfg.master_seed = params.get("seed")?;
    Ok(())
}

fn write_rows(out: &mut String, mode: &str, rows: &[SweepRow]) {
    out.push_str(
        "# section=rows\nmode,sigma2,gain,l,m,n,k,errors,trials,p_hat,ci_low,ci_high,status,seed\n",
    );
    for r in rows {
        let est = match r.estimate {
            Some(e) => format!(
                "{},{},{},{},{}",
                e.errors,
                e.trials,
                F(e.p_hat),
                F(e.ci_low),
                F(e.ci_high)
            ),
            None => ",,,,".to_string(),
        };
        writeln!(
            out,
            "{mode},{},{},{},{},{},{},{est},{},{}",
            F(r.sigma2),
            r.gain,
            r.l,
            r.m,
            r.n,
            r.k,
            r.status.as_str(),
            r.master_seed
        )
        .unwrap();
    }
}

pub fn cmd_ddt(mut params: Params) -> Result<String, CliError> {
    check_command("ddt", &params)?;
    params.set_default("mode", "linear");
    let mode: SweepMode = params
        .raw("mode")
        .unwrap_or_default()
        .parse()
        .map_err(|e: String| invalid(format!("invalid value for mode: {e}")))?;
    if mode == SweepMode::Capacity {
        return Err(invalid(
            "invalid value for mode: use the `capacity` subcommand",
        ));
    }
    params.set(
        "mode",
        if mode == SweepMode::DdtAffine {
            "affine"
        } else {
            "linear"
        },
    );
    let mut cfg = SweepConfig::ddt_default(mode);
    params.set_default("n", cfg.n);
    params.set_default("m", cfg.m);
    params.set_default("k", cfg.k);
    params.set_default("r", join(&cfg.r_list));
    resolve_sigma2_grid(&mut params, 1e-1, 1e-4, 8)?;
    sweep_common(&mut params, &mut cfg)?;
    cfg.n = count_param(&params, "n")?;
    cfg.m = count_param(&params, "m")?;
    cfg.k = count_param(&params, "k")?;
    cfg.sigma2_grid = positive_list(&params, "sigma2")?;
    cfg.r_list = nonneg_list(&params, "r")?;
    if cfg.m > cfg.n {
        return Err(invalid(format!(
            "invalid value for m: {} (must be <= n = {})",
            cfg.m, cfg.n
        )));
    }
    if cfg.k > cfg.n {
        return Err(invalid(format!(
            "invalid value for k: {} (must be <= n = {})",
            cfg.k, cfg.n
        )));
    }
    let rows = run_ddt_sweep::<f64>(&cfg)?;

    let mut out = header("ddt", &params);
    write_rows(&mut out, mode.as_str(), &rows);
    out.push_str("# section=slopes\nr,d_hat,stderr,used_rows,d_theory,fit\n");
    let kind = if mode == SweepMode::DdtAffine {
        DdtKind::Affine
    } else {
        DdtKind::LinearConjecture
    };
    for &r in &cfg.r_list {
        let subset: Vec<SweepRow> = rows.iter().filter(|row| row.gain == r).cloned().collect();
        let theory = DdtCurve::new(kind, cfg.m, cfg.k)
            .and_then(|c| ddt_eval(&c, r))
            .map(|d| d.to_string())
            .unwrap_or_default();
        match fit_slope(&subset) {
            Ok(f) => writeln!(
                out,
                "{r},{},{},{},{theory},ok",
                F(f.d_hat),
                F(f.stderr),
                f.used_rows
            )
            .unwrap(),
            Err(_) => writeln!(out, "{r},,,0,{theory},insufficient").unwrap(),
        }
    }
    Ok(out)
}

pub fn cmd_capacity(mut params: Params) -> Result<String, CliError> {
    check_command("capacity", &params)?;
    let mut cfg = SweepConfig::ddt_default(SweepMode::Capacity);
    cfg.ensembles_per_point = 20;
    params.set_default("nu", 1);
    params.set_default("kappa", 0.25);
    params.set_default("rho", 0.1);
    params.set_default("sigma2", 0.01);
    params.set_default("m_grid", "4:12");
    sweep_common(&mut params, &mut cfg)?;
    let nu: f64 = params.get("nu")?;
    let kappa = kappa_param(&params)?;
    let rhos: Vec<f64> = params.get_list("rho")?;
    for &rho in &rhos {
        ScalingParams::new(nu, kappa, rho, 0.0).map_err(|e| invalid(e.to_string()))?;
    }
    cfg.scaling =
        ScalingParams::new(nu, kappa, rhos[0], 0.0).map_err(|e| invalid(e.to_string()))?;
    cfg.rho_list = rhos.clone();
    cfg.sigma2_grid = positive_list(&params, "sigma2")?;
    cfg.m_grid = params.get_list("m_grid")?;
    if cfg.m_grid.contains(&0) {
        return Err(invalid("invalid value for m_grid: entries must be >= 1"));
    }
    let rows = run_capacity_sweep::<f64>(&cfg)?;

    let mut out = header("capacity", &params);
    write_rows(&mut out, "capacity", &rows);
    out.push_str("# section=bounds\nsigma2,kappa,rho,c_lin_low,c_lin_up\n");
    for &rho in &rhos {
        for &s in &cfg.sigma2_grid {
            let (lo, up) = c_linear_bounds(kappa, s)?;
            writeln!(out, "{},{kappa},{rho},{},{}", F(s), F(lo), F(up)).unwrap();
        }
    }
    Ok(out)
}

pub fn cmd_faces(mut params: Params) -> Result<String, CliError> {
    check_command("faces", &params)?;
    params.set_default("synthetic", false);
    let synthetic = params.get_bool("synthetic")?;
    params.set_default("seed", 0);
    params.set_default("k_model", 9);
    params.set_default("tau", 0.2);
    params.set_default("l_max", 38);
    params.set_default("m_grid", "1:40");
    params.set_default("affine", false);
    params.set_default("span_only", false);
    let seed: u64 = params.get("seed")?;
    let set: LabeledImageSet64 = if synthetic {
        params.remove("data");
        params.set_default("classes", 10);
        params.set_default("pixels", 1024);
        params.set_default("per_class", 30);
        params.set_default("synthetic_k", 9);
        params.set_default("synthetic_sigma2", 0.001);
        let classes = count_param(&params, "classes")?;
        let pixels = count_param(&params, "pixels")?;
        let per_class = count_param(&params, "per_class")?;
        if per_class < 2 {
            return Err(invalid("invalid value for per_class: must be >= 2"));
        }
        let k = count_param(&params, "synthetic_k")?;
        if k > pixels {
            return Err(invalid(format!(
                "invalid value for synthetic_k: {k} (must be <= pixels)"
            )));
        }
        let s: f64 = params.get("synthetic_sigma2")?;
        if !(s >= 0.0 && s.is_finite()) {
            return Err(invalid(format!("invalid value for synthetic_sigma2: {s}")));
        }
        let mut rng = RngStream::new(seed, 0xc0de).rng();
        synthetic_corpus(classes, pixels, k, per_class, s, &mut rng)?
    } else {
        let dir: PathBuf = params
            .raw("data")
            .ok_or_else(|| invalid("faces needs --data <dir> or --synthetic"))?
            .into();
        if !dir.is_dir() {
            return Err(invalid(format!(
                "data directory {} does not exist",
                dir.display()
            )));
        }
        load_image_dir(&dir).map_err(|e| match e {
            grasscap::Error::Io { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Validation(other.to_string()),
        })?
    };
    params.set_default("l_grid", format!("1:{}", set.class_count()));
    let cfg = FaceConfig {
        m_grid: params.get_list("m_grid")?,
        l_grid: params.get_list("l_grid")?,
        k_model: count_param(&params, "k_model")?,
        tau: params.get("tau")?,
        l_max: params.get("l_max")?,
        seed,
        affine: params.get_bool("affine")?,
        span_only: params.get_bool("span_only")?,
    };
    if !(cfg.tau > 0.0 && cfg.tau <= 1.0) {
        return Err(invalid(format!(
            "invalid value for tau: {} (must be in (0, 1])",
            cfg.tau
        )));
    }
    let report = run_face_experiment(&set, &cfg)?;

    let mut out = header("faces", &params);
    out.push_str("# section=errors\nm,l,errors,trials,p_hat,ci_low,ci_high\n");
    for (i, &m) in report.m_grid.iter().enumerate() {
        for (j, &l) in report.l_grid.iter().enumerate() {
            let e = report.errors[i][j];
            writeln!(
                out,
                "{m},{l},{},{},{},{},{}",
                e.errors,
                e.trials,
                F(e.p_hat),
                F(e.ci_low),
                F(e.ci_high)
            )
            .unwrap();
        }
    }
    out.push_str("# section=classes\nm,sigma2_hat,sigma2_used,max_l_empirical,predicted_classes\n");
    for (i, &m) in report.m_grid.iter().enumerate() {
        writeln!(
            out,
            "{m},{},{},{},{}",
            F(report.sigma2_hat[i]),
            F(report.sigma2_used[i]),
            report.max_l_empirical[i],
            report.predicted[i]
        )
        .unwrap();
    }
    Ok(out)
}
