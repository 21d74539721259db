//! Command implementations: each builds what it needs from the parsed
//! experiment, writes machine-readable outputs stamped with the config hash,
//! and reports whether its checks passed.

use std::fs;
use std::path::{Path, PathBuf};

use fsp_core::constitutive::{analyze_profile, build_bundle, ConstitutiveBundle};
use fsp_core::degiorgi::{
    self, check_recursion, exponents, front_trace, radii, DeGiorgiParams, DensityMode,
    MIN_WINDOW_SNAPSHOTS,
};
use fsp_core::estimates::{energy_residual, grad_g_check, lemma2_check, min_gap_over_random_samples};
use fsp_core::solver::{solve, Medium, Trajectory};
use serde::Serialize;

use crate::config::{canonical_hash, CliError, Experiment};

/// What a command concluded; `main` maps `passed` onto exit codes 0 and 1.
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
}

const ENERGY_NOTE: &str =
    "dissipation identity audited in the halved form: both quadratic terms carry the 1/2 factor";

#[derive(Serialize)]
struct VerifyReport<'a> {
    config: &'a str,
    admissible: bool,
    finding: Option<&'static str>,
    a2_deviation: Option<f64>,
    report: fsp_core::constitutive::AdmissibilityReport,
}

#[derive(Serialize)]
struct TrajectorySidecar<'a> {
    config: &'a str,
    geometry: fsp_core::solver::Geometry,
    m: usize,
    dx: f64,
    dt: f64,
    epsilon: f64,
    snapshots: usize,
    times: &'a [f64],
}

#[derive(Serialize)]
struct ThresholdReport<'a> {
    config: &'a str,
    b: f64,
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "Rprime")]
    r_prime: f64,
    lambda: f64,
    j: f64,
    k: f64,
    gamma: f64,
    #[serde(rename = "S")]
    sobolev: f64,
    #[serde(rename = "D")]
    big_d: f64,
    threshold: f64,
    #[serde(rename = "T_star")]
    t_star: f64,
}

#[derive(Serialize)]
struct LemmaTwoView {
    lhs: f64,
    rhs: f64,
}

#[derive(Serialize)]
struct GradGView {
    lhs: f64,
    rhs: f64,
    c_min: f64,
}

#[derive(Serialize)]
struct EstimatesReport<'a> {
    config: &'a str,
    lemma1_min_gap: Option<f64>,
    lemma2: Option<LemmaTwoView>,
    energy_residual: f64,
    #[serde(rename = "grad_G")]
    grad_g: Option<GradGView>,
    energy_note: &'static str,
}

#[derive(Serialize)]
struct SweepReport<'a> {
    config: &'a str,
    epsilons: Vec<f64>,
    t_primes: Vec<f64>,
    c_mins: Option<Vec<f64>>,
    t_prime_rel_spread: f64,
    c_min_rel_spread: Option<f64>,
    all_localized: bool,
}

pub fn cmd_verify(exp: &Experiment) -> Result<Outcome, CliError> {
    let out = prepare_output(exp)?;
    let profile = exp.cfg.profile()?;
    let report = analyze_profile(&profile, exp.cfg.lambda)?;
    let (a2, finding) = if report.passed {
        let bundle = build_bundle(profile, exp.cfg.lambda)?;
        let grid = bundle.probe_grid(4);
        (Some(bundle.max_a2_deviation(&grid)), None)
    } else if !report.lambda_ok {
        (None, Some("InadmissibleLambda"))
    } else {
        (None, Some("ProfileChecksFailed"))
    };
    let passed = report.passed;
    let summary = if let Some(dev) = a2 {
        format!("admissible: C1 = {:.6}, transform identity deviation {dev:.2e}", report.c1)
    } else {
        format!("not admissible: {}", finding.unwrap_or("unknown"))
    };
    write_json(
        &out.join("report.json"),
        &VerifyReport { config: &exp.hash, admissible: passed, finding, a2_deviation: a2, report },
    )?;
    Ok(Outcome { passed, summary })
}

pub fn cmd_solve(exp: &Experiment) -> Result<Outcome, CliError> {
    let out = prepare_output(exp)?;
    let bundle = build_bundle_if_needed(exp)?;
    let formats = Formats::of(exp);
    let mut snapshot_counts = Vec::new();
    for (dir, traj) in run_all(exp, bundle.as_ref())? {
        let run_dir = out.join(&dir);
        ensure_dir(&run_dir)?;
        write_trajectory(&run_dir, &traj, &exp.hash, &formats)?;
        snapshot_counts.push(traj.states.len());
    }
    Ok(Outcome {
        passed: true,
        summary: format!(
            "stored {} run(s) with {:?} snapshots",
            snapshot_counts.len(),
            snapshot_counts
        ),
    })
}

pub fn cmd_localize(exp: &Experiment) -> Result<Outcome, CliError> {
    let dg = exp
        .cfg
        .degiorgi
        .as_ref()
        .ok_or_else(|| CliError::Config("localize needs a [degiorgi] section".into()))?;
    let out = prepare_output(exp)?;
    let bundle = build_bundle_if_needed(exp)?;
    let runs = run_all(exp, bundle.as_ref())?;

    let params = degiorgi_params(exp, bundle.as_ref())?;
    let formats = Formats::of(exp);
    let mut t_primes = Vec::new();
    for (dir, traj) in &runs {
        let run_dir = out.join(dir);
        ensure_dir(&run_dir)?;
        write_trajectory(&run_dir, traj, &exp.hash, &formats)?;
        let trace = front_trace(traj, dg.x0, dg.tol)?;
        write_fronts(&run_dir, &trace, &exp.hash, &formats)?;
        t_primes.push(trace.localization_time(dg.r_prime));
        if let (Some(bundle), Some(params)) = (bundle.as_ref(), params.as_ref()) {
            let y = y_ladder(traj, bundle, params, dg.x0, dg.n_max)?;
            write_ygrid(&run_dir, &y, params, &exp.hash, &formats)?;
        }
    }

    let all_localized = t_primes.iter().all(|&t| t > 0.0);
    // reference run: the least-regularized member of the sweep
    let reference = exp
        .cfg
        .epsilons()
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);

    let (passed, summary) = if let (Some(bundle), Some(params)) = (bundle.as_ref(), params.as_ref())
    {
        let traj = &runs[reference].1;
        let t_star = find_t_star(traj, bundle, params, dg.x0)?;
        write_json(
            &out.join("threshold.json"),
            &ThresholdReport {
                config: &exp.hash,
                b: params.b,
                r: params.big_r,
                r_prime: params.r_prime,
                lambda: params.lambda,
                j: params.j,
                k: params.k,
                gamma: params.gamma,
                sobolev: params.sobolev,
                big_d: params.big_d,
                threshold: params.threshold,
                t_star,
            },
        )?;
        let ok = all_localized && t_star > 0.0;
        (
            ok,
            format!(
                "T' = {:?} at tol {:.1e}; rung-0 energy under threshold up to T* = {t_star}",
                t_primes, dg.tol
            ),
        )
    } else {
        (
            all_localized,
            format!("T' = {t_primes:?} at tol {:.1e} (front diagnostics only)", dg.tol),
        )
    };
    Ok(Outcome { passed, summary })
}

pub fn cmd_estimate(exp: &Experiment) -> Result<Outcome, CliError> {
    let out = prepare_output(exp)?;
    let bundle = build_bundle_if_needed(exp)?;
    let params = degiorgi_params(exp, bundle.as_ref())?;
    let boundary = exp.cfg.boundary_data();
    let theta = exp.cfg.estimate_cutoff();
    let mut passed = true;
    let mut residuals = Vec::new();
    for (dir, traj) in run_all(exp, bundle.as_ref())? {
        let run_dir = out.join(&dir);
        ensure_dir(&run_dir)?;
        let medium = medium_view(exp, bundle.as_ref());
        let residual = energy_residual(&traj, &medium, &boundary)?;
        if let Some(bound) = exp.cfg.estimates.residual_bound {
            passed &= residual <= bound;
        }
        let (lemma1, lemma2, grad_g) = match bundle.as_ref() {
            Some(bundle) => {
                let gap = min_gap_over_random_samples(
                    bundle,
                    exp.cfg.estimates.samples,
                    exp.cfg.estimates.seed,
                );
                passed &= gap >= 0.0;
                let lemma2 = match (exp.cfg.degiorgi.as_ref(), params.as_ref()) {
                    (Some(dg), Some(params)) => {
                        let k_radius = radii(params.b, params.big_r, 1)?;
                        let horizon = *traj.times.last().expect("trajectory has snapshots");
                        let report = lemma2_check(&traj, bundle, params, dg.x0, k_radius, horizon)?;
                        passed &= report.margin >= 0.0;
                        Some(LemmaTwoView { lhs: report.lhs, rhs: report.rhs })
                    }
                    _ => None,
                };
                let gg = grad_g_check(&traj, bundle, |x| theta.eval((x - theta_center(exp)).abs()));
                (
                    Some(gap),
                    lemma2,
                    Some(GradGView {
                        lhs: gg.lhs,
                        rhs: gg.rhs_initial + gg.rhs_gradient,
                        c_min: gg.c_min,
                    }),
                )
            }
            None => (None, None, None),
        };
        residuals.push(residual);
        write_json(
            &run_dir.join("estimates.json"),
            &EstimatesReport {
                config: &exp.hash,
                lemma1_min_gap: lemma1,
                lemma2,
                energy_residual: residual,
                grad_g,
                energy_note: ENERGY_NOTE,
            },
        )?;
    }
    Ok(Outcome {
        passed,
        summary: format!("energy residuals {residuals:?}"),
    })
}

pub fn cmd_sweep(exp: &Experiment) -> Result<Outcome, CliError> {
    let epsilons = exp.cfg.epsilons().to_vec();
    if epsilons.len() < 2 {
        return Err(CliError::Config("sweep needs solver.eps_list with at least two entries".into()));
    }
    let dg = exp
        .cfg
        .degiorgi
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep needs a [degiorgi] section".into()))?;
    let out = prepare_output(exp)?;
    let bundle = build_bundle_if_needed(exp)?;
    let params = degiorgi_params(exp, bundle.as_ref())?;
    let theta = exp.cfg.estimate_cutoff();
    let formats = Formats::of(exp);

    struct WorkerOut {
        t_prime: f64,
        c_min: Option<f64>,
    }

    let mut slots: Vec<Option<Result<WorkerOut, CliError>>> = Vec::new();
    slots.resize_with(epsilons.len(), || None);
    std::thread::scope(|scope| {
        for (slot, &epsilon) in slots.iter_mut().zip(&epsilons) {
            let out = &out;
            let bundle = bundle.as_ref();
            let params = params.as_ref();
            let theta = &theta;
            let formats = &formats;
            scope.spawn(move || {
                *slot = Some((|| {
                    let traj = run_one(exp, bundle, epsilon)?;
                    let run_dir = out.join(run_dir_name(&epsilons_label(epsilon)));
                    ensure_dir(&run_dir)?;
                    write_trajectory(&run_dir, &traj, &exp.hash, formats)?;
                    let trace = front_trace(&traj, dg.x0, dg.tol)?;
                    write_fronts(&run_dir, &trace, &exp.hash, formats)?;
                    let c_min = match (bundle, params) {
                        (Some(bundle), Some(params)) => {
                            let y = y_ladder(&traj, bundle, params, dg.x0, dg.n_max)?;
                            write_ygrid(&run_dir, &y, params, &exp.hash, formats)?;
                            let gg = grad_g_check(&traj, bundle, |x| {
                                theta.eval((x - theta_center(exp)).abs())
                            });
                            Some(gg.c_min)
                        }
                        _ => None,
                    };
                    Ok(WorkerOut { t_prime: trace.localization_time(dg.r_prime), c_min })
                })());
            });
        }
    });

    let mut t_primes = Vec::new();
    let mut c_mins = Vec::new();
    for slot in slots {
        let result = slot.expect("every sweep worker reports");
        let worker = result?;
        t_primes.push(worker.t_prime);
        if let Some(c) = worker.c_min {
            c_mins.push(c);
        }
    }
    let all_localized = t_primes.iter().all(|&t| t > 0.0);
    let t_spread = rel_spread(&t_primes);
    let c_spread = if c_mins.len() == epsilons.len() { Some(rel_spread(&c_mins)) } else { None };
    write_json(
        &out.join("sweep.json"),
        &SweepReport {
            config: &exp.hash,
            epsilons: epsilons.clone(),
            t_primes: t_primes.clone(),
            c_mins: if c_mins.len() == epsilons.len() { Some(c_mins) } else { None },
            t_prime_rel_spread: t_spread,
            c_min_rel_spread: c_spread,
            all_localized,
        },
    )?;
    Ok(Outcome {
        passed: all_localized,
        summary: format!(
            "{} concurrent runs: T' = {t_primes:?}, relative spread {t_spread:.2e}",
            epsilons.len()
        ),
    })
}

/// Largest window whose rung-0 energy stays below the smallness threshold,
/// found by bisection; 0 when even the shortest usable window exceeds it.
fn find_t_star(
    traj: &Trajectory,
    bundle: &ConstitutiveBundle,
    params: &DeGiorgiParams,
    x0: f64,
) -> Result<f64, CliError> {
    if traj.times.len() < MIN_WINDOW_SNAPSHOTS {
        return Err(CliError::Config(format!(
            "bisection needs at least {MIN_WINDOW_SNAPSHOTS} snapshots, run stored {}",
            traj.times.len()
        )));
    }
    let y0 = |t: f64| {
        degiorgi::evaluate_y(traj, bundle, params, x0, t, 0, DensityMode::Excess)
            .map_err(CliError::from)
    };
    let horizon = *traj.times.last().expect("trajectory has snapshots");
    let t_lo = traj.times[MIN_WINDOW_SNAPSHOTS - 1];
    if y0(horizon)? <= params.threshold {
        return Ok(horizon);
    }
    if y0(t_lo)? > params.threshold {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (t_lo, horizon);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if y0(mid)? <= params.threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn y_ladder(
    traj: &Trajectory,
    bundle: &ConstitutiveBundle,
    params: &DeGiorgiParams,
    x0: f64,
    n_max: u32,
) -> Result<Vec<f64>, CliError> {
    let horizon = *traj.times.last().expect("trajectory has snapshots");
    (0..=n_max)
        .map(|n| {
            degiorgi::evaluate_y(traj, bundle, params, x0, horizon, n, DensityMode::Excess)
                .map_err(CliError::from)
        })
        .collect()
}

fn degiorgi_params(
    exp: &Experiment,
    bundle: Option<&ConstitutiveBundle>,
) -> Result<Option<DeGiorgiParams>, CliError> {
    let (Some(dg), Some(bundle)) = (exp.cfg.degiorgi.as_ref(), bundle) else {
        return Ok(None);
    };
    let dim = match exp.cfg.geometry() {
        fsp_core::solver::Geometry::Radial { dim, .. } => dim,
        fsp_core::solver::Geometry::Interval { .. } => return Ok(None),
    };
    if dim <= 2 {
        return Ok(None);
    }
    let b = dg.b.unwrap_or_else(|| crate::config::derived_b(dg.r, dg.r_prime));
    let params = exponents(dim, bundle.small_lambda(), b, dg.r, bundle.c1(), dg.sobolev)?;
    Ok(Some(params))
}

fn build_bundle_if_needed(exp: &Experiment) -> Result<Option<ConstitutiveBundle>, CliError> {
    if exp.cfg.solver.medium == "calibration" {
        return Ok(None);
    }
    let profile = exp.cfg.profile()?;
    Ok(Some(build_bundle(profile, exp.cfg.lambda)?))
}

fn medium_view<'a>(exp: &Experiment, bundle: Option<&'a ConstitutiveBundle>) -> Medium<'a> {
    match bundle {
        Some(bundle) => Medium::Bundle(bundle),
        None => Medium::Calibration {
            diffusivity: exp.cfg.solver.diffusivity.expect("validated at load"),
        },
    }
}

fn run_one(
    exp: &Experiment,
    bundle: Option<&ConstitutiveBundle>,
    epsilon: f64,
) -> Result<Trajectory, CliError> {
    let medium = medium_view(exp, bundle);
    solve(
        exp.cfg.geometry(),
        exp.cfg.geometry.m,
        &medium,
        &exp.cfg.solver_config(epsilon),
        exp.cfg.initial_data(),
        exp.cfg.boundary_data(),
    )
    .map_err(CliError::from)
}

/// Runs every configured epsilon, pairing each trajectory with its run
/// directory: "." for a single run, `eps-<value>` within a sweep list.
fn run_all(
    exp: &Experiment,
    bundle: Option<&ConstitutiveBundle>,
) -> Result<Vec<(String, Trajectory)>, CliError> {
    let epsilons = exp.cfg.epsilons();
    let mut runs = Vec::with_capacity(epsilons.len());
    for &epsilon in epsilons {
        let dir = if epsilons.len() == 1 {
            ".".to_string()
        } else {
            run_dir_name(&epsilons_label(epsilon))
        };
        runs.push((dir, run_one(exp, bundle, epsilon)?));
    }
    Ok(runs)
}

fn epsilons_label(epsilon: f64) -> String {
    format!("{epsilon:e}")
}

fn run_dir_name(label: &str) -> String {
    format!("eps-{label}")
}

fn theta_center(exp: &Experiment) -> f64 {
    exp.cfg.degiorgi.as_ref().map(|d| d.x0).unwrap_or(0.0)
}

fn rel_spread(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean == 0.0 {
        return 0.0;
    }
    values.iter().map(|&v| (v - mean).abs() / mean.abs()).fold(0.0, f64::max)
}

/// Creates the output directory, refuses to mix results of different
/// configurations, and echoes the merged config alongside the results.
fn prepare_output(exp: &Experiment) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(&exp.cfg.output.directory);
    ensure_dir(&dir)?;
    let echo_path = dir.join("config.toml");
    if echo_path.exists() {
        let previous = fs::read_to_string(&echo_path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", echo_path.display())))?;
        let table: toml::Table = previous
            .parse()
            .map_err(|e| CliError::Config(format!("{}: {e}", echo_path.display())))?;
        let stored = canonical_hash(&table);
        if stored != exp.hash {
            return Err(CliError::Config(format!(
                "output directory {} holds results for config {} but this run hashes to {}; \
                 use a fresh directory",
                dir.display(),
                &stored[..12],
                &exp.hash[..12]
            )));
        }
    }
    fs::write(&echo_path, &exp.echo)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", echo_path.display())))?;
    Ok(dir)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numerical(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

/// Which serializations of the data tables the run wants on disk.  Verdict
/// reports are always written; this only filters trajectory, front, and
/// ladder tables.
struct Formats {
    csv: bool,
    json: bool,
}

impl Formats {
    fn of(exp: &Experiment) -> Formats {
        let list = &exp.cfg.output.formats;
        Formats {
            csv: list.iter().any(|f| f == "csv"),
            json: list.iter().any(|f| f == "json"),
        }
    }
}

fn write_trajectory(
    dir: &Path,
    traj: &Trajectory,
    hash: &str,
    formats: &Formats,
) -> Result<(), CliError> {
    if formats.csv {
        let mut csv = format!("# config {hash}\n");
        csv.push('t');
        for i in 0..=traj.m {
            csv.push_str(&format!(",u_{i}"));
        }
        csv.push('\n');
        for (t, state) in traj.times.iter().zip(&traj.states) {
            csv.push_str(&format!("{t}"));
            for u in state {
                csv.push_str(&format!(",{u}"));
            }
            csv.push('\n');
        }
        fs::write(dir.join("trajectory.csv"), csv)
            .map_err(|e| CliError::Config(format!("cannot write trajectory.csv: {e}")))?;
    }
    if !formats.json {
        return Ok(());
    }
    write_json(
        &dir.join("trajectory.json"),
        &TrajectorySidecar {
            config: hash,
            geometry: traj.geometry,
            m: traj.m,
            dx: traj.dx,
            dt: traj.dt,
            epsilon: traj.epsilon,
            snapshots: traj.states.len(),
            times: &traj.times,
        },
    )
}

fn write_fronts(
    dir: &Path,
    trace: &fsp_core::degiorgi::FrontTrace,
    hash: &str,
    formats: &Formats,
) -> Result<(), CliError> {
    if !formats.csv {
        return Ok(());
    }
    let mut csv = format!("# config {hash}\nt,front_radius\n");
    for (t, r) in trace.times.iter().zip(&trace.front_radius) {
        csv.push_str(&format!("{t},{r}\n"));
    }
    fs::write(dir.join("fronts.csv"), csv)
        .map_err(|e| CliError::Config(format!("cannot write fronts.csv: {e}")))
}

fn write_ygrid(
    dir: &Path,
    y: &[f64],
    params: &DeGiorgiParams,
    hash: &str,
    formats: &Formats,
) -> Result<(), CliError> {
    if !formats.csv {
        return Ok(());
    }
    let margins = check_recursion(y, params);
    let expo = 1.0 + params.k * params.j;
    let b2 = params.b * params.b;
    let mut csv = format!("# config {hash}\nn,R_n,Y_n,recursion_rhs,margin\n");
    for (n, &value) in y.iter().enumerate() {
        let radius = radii(params.b, params.big_r, n as u32).map_err(CliError::from)?;
        let (rhs, margin) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (
                params.big_d * b2.powi(n as i32 - 1) * y[n - 1].powf(expo),
                margins[n - 1],
            )
        };
        csv.push_str(&format!("{n},{radius},{value},{rhs},{margin}\n"));
    }
    fs::write(dir.join("ygrid.csv"), csv)
        .map_err(|e| CliError::Config(format!("cannot write ygrid.csv: {e}")))
}
