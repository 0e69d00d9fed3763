//! Command pipeline.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use toboggan_core::contour::ContourSpec;
use toboggan_core::discrete::{build_operators, pt_residual, OperatorPair};
use toboggan_core::io::{self, fmt_f64};
use toboggan_core::metric::{self, MetricResult};
use toboggan_core::shoot::{self, ShootConfig};
use toboggan_core::spectra::{self, Eigensystem};
use toboggan_core::Complex64;

use crate::config::{Command, ConfigError, KappaChoice, Resolved};
use crate::report::report_render;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver error: {0}")]
    Solver(#[from] toboggan_core::Error),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("output: {0}")]
    Output(#[from] io::IoError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Solver(_) => 3,
            RunError::Config(_) | RunError::Output(_) => 4,
        }
    }
}

fn solver<E: Into<toboggan_core::Error>>(e: E) -> RunError {
    RunError::Solver(e.into())
}

/// Files written by a successful run, relative to the output directory.
pub fn run(cfg: &Resolved) -> Result<Vec<PathBuf>, RunError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|source| ConfigError::Output {
        path: cfg.output_dir.clone(),
        source,
    })?;
    let mut out = Outputs {
        dir: cfg.output_dir.clone(),
        written: Vec::new(),
    };
    let result = match cfg.command {
        Command::Spectrum => spectrum(cfg, &mut out).map(|_| ()),
        Command::Metric => metric_cmd(cfg, &mut out),
        Command::Shoot => shoot_cmd(cfg, &mut out),
        Command::Compare => compare_cmd(cfg, &mut out),
        Command::Validate => validate_cmd(cfg, &mut out),
    };
    if let Err(e) = &result {
        #[derive(Serialize)]
        struct ErrorReport {
            exit_code: i32,
            message: String,
        }
        // Best effort: the original error is what gets reported.
        let _ = out.json(
            "error.json",
            &ErrorReport {
                exit_code: e.exit_code(),
                message: e.to_string(),
            },
        );
    }
    result.map(|()| out.written)
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(PathBuf::from(name));
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let p = self.path(name);
        io::write_json(&p, value)?;
        Ok(())
    }

    fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), RunError> {
        let p = self.path(name);
        io::write_table(&p, header, rows)?;
        Ok(())
    }
}

struct Solved {
    pair: OperatorPair,
    full: Eigensystem,
    real: Eigensystem,
}

fn solve(cfg: &Resolved) -> Result<Solved, RunError> {
    let pair = build_operators(&cfg.rectified, &cfg.grid).map_err(solver)?;
    let raw = spectra::solve_generalized(&pair, cfg.tolerances.pairing).map_err(solver)?;
    let full = spectra::normalize_biorthogonal(&raw, &pair.w).map_err(solver)?;
    let real = spectra::filter_real(&full, cfg.tolerances.filter_im).map_err(solver)?;
    Ok(Solved { pair, full, real })
}

#[derive(Debug, Serialize)]
struct SpectrumReport {
    n: usize,
    half_width: f64,
    h: f64,
    epsilon: f64,
    winding: u32,
    convention: String,
    modes_total: usize,
    modes_real: usize,
    discarded: usize,
    filter_im: f64,
    max_residual_right: f64,
    max_residual_left: f64,
    gram_offdiag_max: f64,
    completeness: f64,
    rebuild: f64,
    pt_residual: f64,
    weight_condition: f64,
}

fn spectrum(cfg: &Resolved, out: &mut Outputs) -> Result<Solved, RunError> {
    let s = solve(cfg)?;
    let g = spectra::gram(&s.full, &s.pair.w);
    let report = SpectrumReport {
        n: cfg.grid.n(),
        half_width: cfg.grid.half_width(),
        h: cfg.grid.spacing(),
        epsilon: cfg.grid.epsilon(),
        winding: cfg.contour.winding(),
        convention: format!("{:?}", cfg.convention).to_lowercase(),
        modes_total: s.full.modes(),
        modes_real: s.real.modes(),
        discarded: s.real.discarded,
        filter_im: cfg.tolerances.filter_im,
        max_residual_right: s.real.residual_right.iter().fold(0.0, |a, &b| a.max(b)),
        max_residual_left: s.real.residual_left.iter().fold(0.0, |a, &b| a.max(b)),
        gram_offdiag_max: spectra::gram_offdiag_max(&g),
        completeness: spectra::completeness_residual(&s.full, &s.pair.w).map_err(solver)?,
        rebuild: spectra::spectral_rebuild_residual(&s.full, &s.pair).map_err(solver)?,
        pt_residual: pt_residual(&s.pair),
        weight_condition: s.pair.weight_condition(),
    };
    out.table("spectrum.csv", &spectra::SPECTRUM_COLUMNS, &spectra::spectrum_rows(&s.real))?;
    out.json("residuals.json", &report)?;
    Ok(s)
}

fn random_kappa(rng: &mut ChaCha8Rng, m: usize) -> Vec<Complex64> {
    (0..m)
        .map(|_| {
            let modulus = rng.random_range(0.5..2.0);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            Complex64::from_polar(modulus, phase)
        })
        .collect()
}

fn metric_cmd(cfg: &Resolved, out: &mut Outputs) -> Result<(), RunError> {
    let s = spectrum(cfg, out)?;
    let kappa = match cfg.metric.kappa {
        KappaChoice::Ones => vec![Complex64::new(1.0, 0.0); s.full.modes()],
        KappaChoice::Random => random_kappa(&mut ChaCha8Rng::seed_from_u64(cfg.seed), s.full.modes()),
    };
    let result = metric::build_metric(&s.full, &s.pair.w, &kappa).map_err(solver)?;
    let diag = metric::diagnostics(&result, &s.pair).map_err(solver)?;
    let h = cfg.grid.spacing();
    let eps = cfg.grid.epsilon();
    for (name, m) in [("theta.bin", &result.theta), ("S.bin", &result.s), ("M.bin", &result.m)] {
        let p = out.path(name);
        out.written.push(PathBuf::from(format!("{name}.hdr")));
        io::write_matrix(&p, m, h, eps)?;
    }
    out.json("diagnostics.json", &diag)?;
    let value = serde_json::to_value(diag).map_err(io::IoError::from)?;
    if let Ok(text) = report_render(&value) {
        print!("{text}");
    }
    Ok(())
}

fn guesses(cfg: &Resolved) -> Result<Vec<Complex64>, RunError> {
    if !cfg.shoot.guesses.is_empty() {
        return Ok(cfg.shoot.guesses.iter().map(|&g| Complex64::new(g, 0.0)).collect());
    }
    Ok(rectified_low_modes(cfg)?.into_iter().map(|e| Complex64::new(e, 0.0)).collect())
}

fn rectified_low_modes(cfg: &Resolved) -> Result<Vec<f64>, RunError> {
    let pair = build_operators(&cfg.rectified, &cfg.compare_grid).map_err(solver)?;
    let values = spectra::eigenvalues_only(&pair).map_err(solver)?;
    let mut real = spectra::real_eigenvalues(&values, cfg.tolerances.filter_im);
    real.retain(|&e| e >= cfg.shoot.min_energy);
    real.truncate(cfg.shoot.modes);
    Ok(real)
}

fn shoot_config(cfg: &Resolved, contour: &ContourSpec, guesses: &[Complex64]) -> Result<ShootConfig, RunError> {
    let e_ref = guesses.iter().map(|g| g.norm()).fold(1.0, f64::max) * 1.5;
    let mut sc = ShootConfig::auto(&cfg.model, contour, Complex64::new(e_ref, 0.0)).map_err(solver)?;
    if let Some(g) = cfg.shoot.gamma_max {
        sc = ShootConfig::new(g, sc.steps).map_err(solver)?;
    }
    if let Some(steps) = cfg.shoot.steps {
        sc = sc.with_steps(steps).map_err(solver)?;
    }
    sc.root_tol = cfg.shoot.root_tol;
    sc.max_iter = cfg.shoot.max_iter;
    Ok(sc)
}

fn shoot_cmd(cfg: &Resolved, out: &mut Outputs) -> Result<(), RunError> {
    let g = guesses(cfg)?;
    let sc = shoot_config(cfg, &cfg.contour, &g)?;
    let reports = shoot::search(&cfg.model, &cfg.contour, &sc, &g, Default::default()).map_err(solver)?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let (re, im, status) = match &r.outcome {
                Ok(e) => (fmt_f64(e.re), fmt_f64(e.im), "converged".to_owned()),
                Err(err) => ("NaN".into(), "NaN".into(), err.to_string()),
            };
            vec![i.to_string(), fmt_f64(r.guess.re), re, im, r.iterations.to_string(), status]
        })
        .collect();
    out.table("roots.csv", &["index", "guess", "re_E", "im_E", "iterations", "status"], &rows)?;
    let scan = shoot::mismatch_scan(&cfg.model, &cfg.contour, &sc, cfg.shoot.scan_re, cfg.shoot.scan_im, Default::default());
    let rows: Vec<Vec<String>> = scan
        .iter()
        .map(|p| vec![fmt_f64(p.e.re), fmt_f64(p.e.im), fmt_f64(p.abs_f)])
        .collect();
    out.table("scan.csv", &["re_E", "im_E", "abs_F"], &rows)?;
    #[derive(Serialize)]
    struct ShootReport {
        gamma_max: f64,
        steps: usize,
        root_tol: f64,
        converged: usize,
        failed: usize,
    }
    let converged = reports.iter().filter(|r| r.outcome.is_ok()).count();
    out.json(
        "shoot.json",
        &ShootReport {
            gamma_max: sc.gamma_max,
            steps: sc.steps,
            root_tol: sc.root_tol,
            converged,
            failed: reports.len() - converged,
        },
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub index: usize,
    pub rectified: f64,
    pub shooting_re: f64,
    pub shooting_im: f64,
    pub rel_delta: f64,
}

fn compare_rows(cfg: &Resolved) -> Result<Vec<CompareRow>, RunError> {
    let rect = rectified_low_modes(cfg)?;
    let g: Vec<Complex64> = if cfg.shoot.guesses.is_empty() {
        rect.iter().map(|&e| Complex64::new(e, 0.0)).collect()
    } else {
        guesses(cfg)?
    };
    let sc = shoot_config(cfg, &cfg.contour, &g)?;
    let reports = shoot::search(&cfg.model, &cfg.contour, &sc, &g, Default::default()).map_err(solver)?;
    let roots = shoot::dedup_roots(reports.iter().filter_map(|r| r.outcome.clone().ok()));
    Ok(rect
        .iter()
        .enumerate()
        .map(|(index, &e)| {
            let nearest = roots
                .iter()
                .min_by(|a, b| (*a - e).norm().total_cmp(&(*b - e).norm()))
                .copied();
            match nearest {
                Some(r) => CompareRow {
                    index,
                    rectified: e,
                    shooting_re: r.re,
                    shooting_im: r.im,
                    rel_delta: (r - e).norm() / e.abs().max(1.0),
                },
                None => CompareRow {
                    index,
                    rectified: e,
                    shooting_re: f64::NAN,
                    shooting_im: f64::NAN,
                    rel_delta: f64::NAN,
                },
            }
        })
        .collect())
}

fn compare_cmd(cfg: &Resolved, out: &mut Outputs) -> Result<(), RunError> {
    let rows = compare_rows(cfg)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.index.to_string(),
                fmt_f64(r.rectified),
                fmt_f64(r.shooting_re),
                fmt_f64(r.shooting_im),
                fmt_f64(r.rel_delta),
            ]
        })
        .collect();
    out.table("compare.csv", &["index", "rectified", "shooting_re", "shooting_im", "rel_delta"], &table)?;
    out.json("compare.json", &rows)?;
    let worst = rows.iter().map(|r| r.rel_delta).fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) });
    if !(worst < cfg.tolerances.compare) {
        return Err(RunError::Validation(format!(
            "rectified and shooting eigenvalues differ by {worst:e} (tolerance {:e})",
            cfg.tolerances.compare
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `true` when the value must stay below the threshold, `false` when it
    /// must exceed it.
    pub upper: bool,
    pub passed: bool,
}

struct Checks {
    list: Vec<Check>,
}

impl Checks {
    fn below(&mut self, name: &str, value: f64, threshold: f64) -> Result<(), String> {
        self.push(name, value, threshold, true, value < threshold)
    }

    fn above(&mut self, name: &str, value: f64, threshold: f64) -> Result<(), String> {
        self.push(name, value, threshold, false, value > threshold)
    }

    fn push(&mut self, name: &str, value: f64, threshold: f64, upper: bool, passed: bool) -> Result<(), String> {
        self.list.push(Check {
            name: name.to_owned(),
            value,
            threshold,
            upper,
            passed,
        });
        if passed {
            Ok(())
        } else {
            let rel = if upper { "<" } else { ">" };
            Err(format!("{name} = {value:e}, required {rel} {threshold:e}"))
        }
    }
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

fn validate_cmd(cfg: &Resolved, out: &mut Outputs) -> Result<(), RunError> {
    let mut checks = Checks { list: Vec::new() };
    let outcome = validate_all(cfg, &mut checks);
    #[derive(Serialize)]
    struct ValidateReport<'a> {
        passed: bool,
        failure: Option<&'a str>,
        checks: &'a [Check],
    }
    let failure = match &outcome {
        Ok(Ok(())) => None,
        Ok(Err(msg)) => Some(msg.as_str()),
        Err(_) => None,
    };
    if let Err(e) = &outcome {
        eprintln!("validate: {e}");
    }
    out.json(
        "validate.json",
        &ValidateReport {
            passed: matches!(outcome, Ok(Ok(()))),
            failure,
            checks: &checks.list,
        },
    )?;
    match outcome {
        Ok(Ok(())) => Ok(()),
        Ok(Err(msg)) => Err(RunError::Validation(msg)),
        Err(e) => Err(e),
    }
}

/// Outer error: the run could not be carried out. Inner error: the first
/// violated invariant.
fn validate_all(cfg: &Resolved, c: &mut Checks) -> Result<Result<(), String>, RunError> {
    let tol = &cfg.tolerances;
    let s = solve(cfg)?;
    let pt = cfg.rectified.is_pt_symmetric();
    let w = &s.pair.w;
    macro_rules! check {
        ($e:expr) => {
            if let Err(msg) = $e {
                return Ok(Err(msg));
            }
        };
    }

    if pt {
        check!(c.below("pt_residual", pt_residual(&s.pair), tol.pt));
    }
    check!(c.below("residual_right", max_of(s.real.residual_right.iter().copied()), tol.residual));
    check!(c.below("residual_left", max_of(s.real.residual_left.iter().copied()), tol.residual));
    let gram = spectra::gram(&s.full, w);
    check!(c.below("gram_offdiag", spectra::gram_offdiag_max(&gram), tol.gram));
    let completeness = spectra::completeness_residual(&s.full, w).map_err(solver)?;
    check!(c.below("completeness", completeness, tol.completeness));
    let rebuild = spectra::spectral_rebuild_residual(&s.full, &s.pair).map_err(solver)?;
    check!(c.below("rebuild", rebuild, tol.rebuild));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draws: Vec<Vec<Complex64>> = (0..cfg.metric.kappa_draws.max(2))
        .map(|_| random_kappa(&mut rng, s.full.modes()))
        .collect();
    let mut sigma_dev: f64 = 0.0;
    let mut gram_dev: f64 = 0.0;
    let mut comp_dev: f64 = 0.0;
    let mut rebuild_dev: f64 = 0.0;
    for k in &draws {
        let es = spectra::apply_kappa(&s.full, k).map_err(solver)?;
        let renorm = spectra::normalize_biorthogonal(&es, w).map_err(solver)?;
        sigma_dev = sigma_dev.max(max_of(renorm.sigmas.iter().zip(&s.full.sigmas).map(|(a, b)| (a - b).norm())));
        let g = spectra::gram(&es, w);
        let d = max_of((0..g.nrows()).flat_map(|i| (0..g.ncols()).map(move |j| (i, j))).map(|(i, j)| (g[(i, j)] - gram[(i, j)]).norm()));
        gram_dev = gram_dev.max(d);
        comp_dev = comp_dev.max((spectra::completeness_residual(&es, w).map_err(solver)? - completeness).abs());
        rebuild_dev = rebuild_dev.max((spectra::spectral_rebuild_residual(&es, &s.pair).map_err(solver)? - rebuild).abs());
    }
    check!(c.below("kappa_sigma_shift", sigma_dev, tol.kappa));
    check!(c.below("kappa_gram_shift", gram_dev, tol.kappa.max(tol.gram)));
    check!(c.below("kappa_completeness_shift", comp_dev, tol.kappa.max(tol.completeness)));
    check!(c.below("kappa_rebuild_shift", rebuild_dev, tol.kappa.max(tol.rebuild)));

    if pt {
        let idx: Vec<usize> = (0..s.real.modes())
            .filter(|&k| s.real.lambdas[k].re >= cfg.shoot.min_energy)
            .take(5)
            .collect();
        let sub = s.real.select(&idx);
        let qp = spectra::quasiparity_leftkets(&sub, w).map_err(solver)?;
        check!(c.below("quasiparity_angle", max_of(qp.angles.iter().copied()), tol.collinearity));
    }

    let ones = vec![Complex64::new(1.0, 0.0); s.full.modes()];
    let res: MetricResult = metric::build_metric(&s.full, w, &ones).map_err(solver)?;
    check!(c.below("metric_ms", metric::ms_residual(&res), tol.ms));
    check!(c.below("metric_theta_w_identity", metric::theta_w_identity_residual(&s.full, &res.theta, w), tol.metric));
    let (qh, qw) = metric::quasi_hermiticity_residuals(&res.theta, &s.pair).map_err(solver)?;
    check!(c.below("metric_quasi_h", qh, tol.metric));
    check!(c.below("metric_quasi_w", qw, tol.metric));
    let (herm, min_eig) = metric::positivity_report(&res.theta).map_err(solver)?;
    check!(c.below("metric_hermiticity", herm, tol.metric));
    check!(c.above("metric_min_eig", min_eig, 0.0));
    let (ph, pw) = metric::physical_operators(&s.pair, &res.theta).map_err(solver)?;
    check!(c.below("physical_h", ph, tol.physical));
    check!(c.below("physical_w", pw, tol.physical));

    if cfg.contour.winding() == 0 {
        check!(c.below("degeneration_s_offdiag", metric::offdiag_ratio(&res.s), tol.metric));
        let single = metric::single_series_metric(&s.full);
        let diff = toboggan_core::linalg::frobenius((&res.theta - &single).as_ref())
            / toboggan_core::linalg::frobenius(single.as_ref());
        check!(c.below("degeneration_theta", diff, tol.degeneration));
    }

    let theta0 = metric::build_metric(&s.full, w, &draws[0]).map_err(solver)?.theta;
    let theta1 = metric::build_metric(&s.full, w, &draws[1]).map_err(solver)?.theta;
    let spread = toboggan_core::linalg::frobenius((&theta0 - &theta1).as_ref())
        / toboggan_core::linalg::frobenius(theta0.as_ref());
    check!(c.above("kappa_metric_spread", spread, 1e-3));
    for (name, t) in [("kappa_quasi_h_a", &theta0), ("kappa_quasi_h_b", &theta1)] {
        let (qh, _) = metric::quasi_hermiticity_residuals(t, &s.pair).map_err(solver)?;
        check!(c.below(name, qh, tol.metric));
    }

    let rows = compare_rows(cfg)?;
    check!(c.below("shoot_vs_rectified", max_of(rows.iter().map(|r| if r.rel_delta.is_nan() { f64::INFINITY } else { r.rel_delta })), tol.compare));
    let doubled = ContourSpec::new(2.0 * cfg.contour.epsilon(), cfg.contour.winding()).map_err(solver)?;
    let g: Vec<Complex64> = rows.iter().map(|r| Complex64::new(r.shooting_re, r.shooting_im)).collect();
    let sc = shoot_config(cfg, &doubled, &g)?;
    let moved = shoot::search(&cfg.model, &doubled, &sc, &g, Default::default()).map_err(solver)?;
    let shift = max_of(moved.iter().zip(&g).map(|(r, e)| match &r.outcome {
        Ok(x) => (x - e).norm() / e.norm().max(1.0),
        Err(_) => f64::INFINITY,
    }));
    check!(c.below("shoot_epsilon_independence", shift, tol.epsilon_independence));
    Ok(Ok(()))
}
