//! Numerical audits of the inequalities the localization argument rests on:
//! the pointwise gap between the energy production and absorption terms, the
//! space-time interpolation bound, the dissipation identity tying the final
//! gradient energy to the initial one, and the uniform bound on the energy
//! norm of the transformed field.

use crate::constitutive::ConstitutiveBundle;
use crate::degiorgi::{self, cell_volume_weights, node_volume_weights, Cutoff, DeGiorgiError,
    DeGiorgiParams, DensityMode};
use crate::solver::{BoundaryData, Medium, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Denominator floor of the relative dissipation residual, so a run with
/// vanishing initial gradient energy still reports 0 rather than 0/0.
const RESIDUAL_FLOOR: f64 = 1e-30;

#[derive(Debug, Error)]
pub enum EstimatesError {
    #[error("bad sample: {0}")]
    BadSample(String),
    #[error("bad parameter: {0}")]
    BadParams(String),
    #[error("window holds {have} snapshots, need at least {need}")]
    InsufficientSnapshots { have: usize, need: usize },
    #[error("boundary ramp still active at the horizon {horizon} (ramp ends at {until})")]
    RampActive { horizon: f64, until: f64 },
}

fn lift(err: DeGiorgiError) -> EstimatesError {
    match err {
        DeGiorgiError::InsufficientSnapshots { have, need } => {
            EstimatesError::InsufficientSnapshots { have, need }
        }
        other => EstimatesError::BadParams(other.to_string()),
    }
}

/// One point of the density field together with the local gradients of the
/// field and of a Lipschitz weight, against a fixed bundle.
#[derive(Debug, Clone)]
pub struct PointSample<'a> {
    pub u: f64,
    pub grad_u: Vec<f64>,
    pub theta: f64,
    pub grad_theta: Vec<f64>,
    pub bundle: &'a ConstitutiveBundle,
}

impl<'a> PointSample<'a> {
    pub fn new(
        u: f64,
        grad_u: Vec<f64>,
        theta: f64,
        grad_theta: Vec<f64>,
        bundle: &'a ConstitutiveBundle,
    ) -> Result<Self, EstimatesError> {
        if !(u > 0.0 && u <= bundle.m()) {
            return Err(EstimatesError::BadSample(format!(
                "density {u} outside the bundle domain (0, {}]",
                bundle.m()
            )));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(EstimatesError::BadSample(format!("weight {theta} outside [0, 1]")));
        }
        if grad_u.is_empty() || grad_u.len() != grad_theta.len() {
            return Err(EstimatesError::BadSample(format!(
                "gradient dimensions disagree: {} vs {}",
                grad_u.len(),
                grad_theta.len()
            )));
        }
        if grad_u.iter().chain(&grad_theta).any(|v| !v.is_finite()) {
            return Err(EstimatesError::BadSample("gradients must be finite".into()));
        }
        Ok(PointSample { u, grad_u, theta, grad_theta, bundle })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pointwise gap between the production term and the absorbed part of the
/// energy inequality:
///
/// `grad u . grad(theta^2 F(u))  -  [ 1/2 |grad(theta G(u))|^2 - (2 C1^2 + 1) G(u)^2 |grad theta|^2 ]`
///
/// with every gradient expanded by the chain rule from the sample. The
/// comparison constant is the bundle's own; the gap is nonnegative whenever
/// that constant dominates `F / (G G')`.
pub fn lemma1_gap(sample: &PointSample) -> f64 {
    let bundle = sample.bundle;
    let u = sample.u;
    let (f, f_prime, g, g_prime) = (bundle.f(u), bundle.f_prime(u), bundle.g(u), bundle.g_prime(u));
    let c1 = bundle.c1();
    let uu = dot(&sample.grad_u, &sample.grad_u);
    let tt = dot(&sample.grad_theta, &sample.grad_theta);
    let ut = dot(&sample.grad_u, &sample.grad_theta);
    let th = sample.theta;

    // grad u . grad(theta^2 F) = 2 theta F (grad u . grad theta) + theta^2 F' |grad u|^2
    let production = 2.0 * th * f * ut + th * th * f_prime * uu;
    // |grad(theta G)|^2 = G^2 |grad theta|^2 + 2 theta G G' (grad u . grad theta)
    //                     + theta^2 G'^2 |grad u|^2
    let grad_theta_g = g * g * tt + 2.0 * th * g * g_prime * ut + th * th * g_prime * g_prime * uu;
    let absorbed = 0.5 * grad_theta_g - (2.0 * c1 * c1 + 1.0) * g * g * tt;
    production - absorbed
}

/// Smallest [`lemma1_gap`] over `count` reproducible random samples: densities
/// log-uniform across the bundle's probe range, gradients of one to three
/// components with magnitudes spread over four decades.
pub fn min_gap_over_random_samples(bundle: &ConstitutiveBundle, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = bundle.probe_grid(2);
    let (lo, hi) = (grid[0], *grid.last().unwrap());
    let ln_span = (hi / lo).ln();
    let mut min_gap = f64::INFINITY;
    for _ in 0..count {
        let u = lo * (rng.gen_range(0.0..1.0) * ln_span).exp();
        let dim = rng.gen_range(1..=3usize);
        let mut vector = |scale_allowed: bool| -> Vec<f64> {
            let magnitude = 10f64.powf(rng.gen_range(-2.0..2.0));
            (0..dim)
                .map(|_| rng.gen_range(-1.0..1.0) * if scale_allowed { magnitude } else { 1.0 })
                .collect()
        };
        let grad_u = vector(true);
        let grad_theta = vector(true);
        let theta = rng.gen_range(0.0..=1.0);
        let sample = PointSample { u, grad_u, theta, grad_theta, bundle };
        min_gap = min_gap.min(lemma1_gap(&sample));
    }
    min_gap
}

/// Both sides of the space-time interpolation bound for the excess on a
/// compact ball.
#[derive(Debug, Clone, Serialize)]
pub struct Lemma2Report {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; nonnegative when the bound holds on this run.
    pub margin: f64,
}

/// Audits `int_0^t int_K G(w)^2 <= S^{k(1+j)} t^{1-(1+j)k} [ ... ]^{1+jk}`
/// where the bracket is the rung-0 energy of the ladder without its time
/// prefactor and `K` is the ball of radius `k_radius` around `x0`.
///
/// The rung-0 cutoff must be identically 1 on `K`, so `k_radius` may not
/// exceed the first shrunk radius of the ladder.
pub fn lemma2_check(
    traj: &Trajectory,
    bundle: &ConstitutiveBundle,
    params: &DeGiorgiParams,
    x0: f64,
    k_radius: f64,
    t: f64,
) -> Result<Lemma2Report, EstimatesError> {
    let cutoff = Cutoff::for_rung(params.b, params.big_r, 0).map_err(lift)?;
    if !(k_radius > 0.0 && k_radius <= cutoff.plateau * (1.0 + 1e-12)) {
        return Err(EstimatesError::BadParams(format!(
            "compact radius {k_radius} must lie inside the rung-0 plateau {}",
            cutoff.plateau
        )));
    }

    // the bracket of the bound is the rung-0 energy with its time prefactor
    // stripped; this also enforces the snapshot gate and window checks
    let y0 = degiorgi::evaluate_y(traj, bundle, params, x0, t, 0, DensityMode::Excess)
        .map_err(lift)?;
    let bracket = y0 / t.powf(params.gamma);
    let kj = params.k * params.j;
    let prefactor = params.sobolev.powf(params.k * (1.0 + params.j));
    let rhs = prefactor * t.powf(1.0 - (1.0 + params.j) * params.k) * bracket.powf(1.0 + kj);

    let nodes = traj.nodes();
    let cell_w = cell_volume_weights(&traj.geometry, &nodes, traj.dx);
    let eps = traj.epsilon;
    let g_sq = |u: f64| {
        let g = bundle.g((u - eps).max(0.0));
        g * g
    };
    // space integral over K: cells whose endpoints both lie inside the ball
    let in_k: Vec<bool> = nodes.iter().map(|&x| (x - x0).abs() <= k_radius * (1.0 + 1e-12)).collect();
    let space = |state: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..nodes.len() - 1 {
            if in_k[i] && in_k[i + 1] {
                acc += 0.5 * (g_sq(state[i]) + g_sq(state[i + 1])) * cell_w[i];
            }
        }
        acc
    };

    let in_window = traj.times.iter().take_while(|&&tau| tau <= t * (1.0 + 1e-12)).count();
    let values: Vec<f64> = traj.states[..in_window].iter().map(|s| space(s)).collect();
    let mut lhs = 0.0;
    for s in 1..in_window {
        lhs += 0.5 * (values[s - 1] + values[s]) * (traj.times[s] - traj.times[s - 1]);
    }
    let t_last = traj.times[in_window - 1];
    if t > t_last && in_window < traj.times.len() {
        let t_next = traj.times[in_window];
        let v_next = space(&traj.states[in_window]);
        let frac = (t - t_last) / (t_next - t_last);
        let v_at = values[in_window - 1] + frac * (v_next - values[in_window - 1]);
        lhs += 0.5 * (values[in_window - 1] + v_at) * (t - t_last);
    }

    Ok(Lemma2Report { lhs, rhs, margin: rhs - lhs })
}

/// Relative defect of the dissipation identity over the whole stored run:
///
/// `| int_0^T int (dHtilde/dt)^2 + 1/2 int |grad u(T)|^2 - 1/2 int |grad g|^2 | / rhs`
///
/// with `Htilde' = P^{-1/2}` evaluated through the bundle's exact increment
/// (or `1/sqrt(D)` in calibration mode), difference quotients between
/// consecutive snapshots, and trapezoid quadrature in space.
///
/// Needs the boundary excess constant in time over the run, so a ramp that
/// is still rising at the horizon is rejected.
pub fn energy_residual(
    traj: &Trajectory,
    medium: &Medium,
    boundary: &BoundaryData,
) -> Result<f64, EstimatesError> {
    let horizon = *traj.times.last().expect("trajectory stores at least the initial snapshot");
    if let BoundaryData::Ramp { max, ramp_time } = boundary {
        if *max > 0.0 && horizon < *ramp_time {
            return Err(EstimatesError::RampActive { horizon, until: *ramp_time });
        }
    }
    if traj.states.len() < 2 {
        return Err(EstimatesError::BadParams(
            "dissipation audit needs at least two snapshots".into(),
        ));
    }

    let nodes = traj.nodes();
    let node_w = node_volume_weights(&traj.geometry, &nodes, traj.dx);
    let cell_w = cell_volume_weights(&traj.geometry, &nodes, traj.dx);
    let increment = |a: f64, b: f64| match medium {
        Medium::Bundle(bundle) => bundle.htilde_delta(a, b),
        Medium::Calibration { diffusivity } => (b - a) / diffusivity.sqrt(),
    };

    let mut rate = 0.0;
    for s in 1..traj.states.len() {
        let dt = traj.times[s] - traj.times[s - 1];
        let mut space = 0.0;
        for i in 0..nodes.len() {
            let q = increment(traj.states[s - 1][i], traj.states[s][i]) / dt;
            space += q * q * node_w[i];
        }
        rate += space * dt;
    }
    let grad_energy = |state: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..nodes.len() - 1 {
            let slope = (state[i + 1] - state[i]) / traj.dx;
            acc += slope * slope * cell_w[i];
        }
        acc
    };

    let lhs = rate + 0.5 * grad_energy(traj.final_state());
    let rhs = 0.5 * grad_energy(&traj.states[0]);
    Ok((lhs - rhs).abs() / rhs.max(RESIDUAL_FLOOR))
}

/// The energy-norm bound on the transformed field: left side, the two right
/// side integrals, and the smallest constant that closes the inequality.
#[derive(Debug, Clone, Serialize)]
pub struct GradGReport {
    pub lhs: f64,
    pub rhs_initial: f64,
    pub rhs_gradient: f64,
    /// `lhs / (rhs_initial + rhs_gradient)`, or 0 for a vanishing left side.
    /// Finiteness certifies the transformed field bounded in the energy norm.
    pub c_min: f64,
}

/// Audits `int int |grad(theta G(w))|^2 <= c int theta^2 G(w(0))^2
/// + c int int |grad theta|^2 G(w)^2` over the whole stored run.
///
/// `theta` is any weight of position, expected compactly supported in the
/// domain; the report carries the smallest admissible `c`.
pub fn grad_g_check(
    traj: &Trajectory,
    bundle: &ConstitutiveBundle,
    theta: impl Fn(f64) -> f64,
) -> GradGReport {
    let nodes = traj.nodes();
    let node_w = node_volume_weights(&traj.geometry, &nodes, traj.dx);
    let cell_w = cell_volume_weights(&traj.geometry, &nodes, traj.dx);
    let th: Vec<f64> = nodes.iter().map(|&x| theta(x)).collect();
    let eps = traj.epsilon;
    let g_of = |u: f64| bundle.g((u - eps).max(0.0));

    let weighted_grad = |state: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..nodes.len() - 1 {
            let slope = (th[i + 1] * g_of(state[i + 1]) - th[i] * g_of(state[i])) / traj.dx;
            acc += slope * slope * cell_w[i];
        }
        acc
    };
    let ramp_leak = |state: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..nodes.len() - 1 {
            let slope = (th[i + 1] - th[i]) / traj.dx;
            let g2 = 0.5 * (g_of(state[i]).powi(2) + g_of(state[i + 1]).powi(2));
            acc += slope * slope * g2 * cell_w[i];
        }
        acc
    };
    let time_trapezoid = |f: &dyn Fn(&[f64]) -> f64| -> f64 {
        let values: Vec<f64> = traj.states.iter().map(|s| f(s)).collect();
        let mut acc = 0.0;
        for s in 1..values.len() {
            acc += 0.5 * (values[s - 1] + values[s]) * (traj.times[s] - traj.times[s - 1]);
        }
        acc
    };

    let lhs = time_trapezoid(&weighted_grad);
    let rhs_initial: f64 =
        (0..nodes.len()).map(|i| th[i] * th[i] * g_of(traj.states[0][i]).powi(2) * node_w[i]).sum();
    let rhs_gradient = time_trapezoid(&ramp_leak);
    let denom = rhs_initial + rhs_gradient;
    let c_min = if lhs == 0.0 { 0.0 } else { lhs / denom };
    GradGReport { lhs, rhs_initial, rhs_gradient, c_min }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{build_bundle, DegeneracyProfile, ProfileKind, TailPolicy, ZetaSpec};
    use crate::degiorgi::exponents;
    use crate::solver::{solve, Geometry, InitialData, Scheme, SolverConfig};

    fn bundle_for(kind: ProfileKind, big_lambda: f64) -> ConstitutiveBundle {
        let tail = match kind {
            ProfileKind::Power { .. } => TailPolicy::ClosedForm,
            _ => TailPolicy::AdditiveConstant { i_tail: 0.0 },
        };
        let profile = DegeneracyProfile::new(kind, 1.0, tail).unwrap();
        build_bundle(profile, big_lambda).unwrap()
    }

    fn unit_power_bundle() -> ConstitutiveBundle {
        bundle_for(ProfileKind::Power { p: 1.0 }, 1.0)
    }

    /// Radial trajectory over `m` cells, time-independent field, `count`
    /// snapshots on [0, horizon].
    fn frozen_radial_trajectory(
        m: usize,
        length: f64,
        epsilon: f64,
        horizon: f64,
        count: usize,
        field: impl Fn(f64) -> f64,
    ) -> Trajectory {
        let dx = length / m as f64;
        let state: Vec<f64> = (0..=m).map(|i| epsilon + field(i as f64 * dx)).collect();
        let dt = horizon / (count - 1) as f64;
        Trajectory {
            geometry: Geometry::Radial { dim: 3, length },
            m,
            dx,
            dt,
            epsilon,
            times: (0..count).map(|s| s as f64 * dt).collect(),
            states: vec![state; count],
            step_extrema: Vec::new(),
        }
    }

    fn inner_bump(r: f64) -> f64 {
        let r0 = 0.2;
        if r < r0 {
            0.3 * (std::f64::consts::FRAC_PI_2 * r / r0).cos().powi(2)
        } else {
            0.0
        }
    }

    #[test]
    fn gap_vanishes_without_gradients() {
        let bundle = unit_power_bundle();
        let sample = PointSample::new(0.5, vec![0.0], 1.0, vec![0.0], &bundle).unwrap();
        assert_eq!(lemma1_gap(&sample), 0.0);
    }

    #[test]
    fn gap_is_one_half_for_the_linear_bundle() {
        // F = G = s there, so F' = G' = 1: production is |grad u|^2 = 1 and
        // the absorbed part is half of it
        let bundle = unit_power_bundle();
        let sample = PointSample::new(0.5, vec![1.0], 1.0, vec![0.0], &bundle).unwrap();
        let gap = lemma1_gap(&sample);
        assert!((gap - 0.5).abs() < 1e-9, "gap {gap}");
        // same value in three components
        let sample3 =
            PointSample::new(0.5, vec![1.0, 0.0, 0.0], 1.0, vec![0.0, 0.0, 0.0], &bundle).unwrap();
        assert!((lemma1_gap(&sample3) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn gap_never_negative_on_random_sweeps() {
        let linear = unit_power_bundle();
        let min_linear = min_gap_over_random_samples(&linear, 10_000, 7);
        assert!(min_linear >= 0.0, "linear bundle min gap {min_linear}");

        let quadratic = bundle_for(ProfileKind::Power { p: 2.0 }, 2.0);
        let min_quadratic = min_gap_over_random_samples(&quadratic, 2_000, 11);
        assert!(min_quadratic >= 0.0, "quadratic bundle min gap {min_quadratic}");
    }

    #[test]
    fn samples_reject_bad_inputs() {
        let bundle = unit_power_bundle();
        assert!(PointSample::new(2.0, vec![0.0], 1.0, vec![0.0], &bundle).is_err());
        assert!(PointSample::new(0.0, vec![0.0], 1.0, vec![0.0], &bundle).is_err());
        assert!(PointSample::new(0.5, vec![0.0], 1.5, vec![0.0], &bundle).is_err());
        assert!(PointSample::new(0.5, vec![0.0, 1.0], 1.0, vec![0.0], &bundle).is_err());
        assert!(PointSample::new(0.5, vec![f64::NAN], 1.0, vec![0.0], &bundle).is_err());
    }

    #[test]
    fn interpolation_bound_trivial_on_flat_fields() {
        let bundle = unit_power_bundle();
        let params = exponents(3, 1.0, 3.0, 0.5, bundle.c1(), None).unwrap();
        let traj = frozen_radial_trajectory(40, 1.0, 1e-3, 1.0, 12, |_| 0.0);
        let k_radius = params.big_r / 2.5;
        let report = lemma2_check(&traj, &bundle, &params, 0.0, k_radius, 1.0).unwrap();
        assert_eq!(report.lhs, 0.0);
        assert_eq!(report.rhs, 0.0);
        assert_eq!(report.margin, 0.0);
    }

    #[test]
    fn interpolation_bound_holds_on_a_bump() {
        let bundle = unit_power_bundle();
        let params = exponents(3, 1.0, 3.0, 0.5, bundle.c1(), None).unwrap();
        let traj = frozen_radial_trajectory(160, 1.0, 1e-3, 1.0, 12, inner_bump);
        let k_radius = params.big_r / 2.5; // inside the rung-0 plateau R_1 = 1/3
        let report = lemma2_check(&traj, &bundle, &params, 0.0, k_radius, 1.0).unwrap();
        assert!(report.lhs > 0.0);
        assert!(report.margin > 0.0, "lhs {} rhs {}", report.lhs, report.rhs);

        // the embedding constant enters only through the explicit prefactor
        let doubled =
            exponents(3, 1.0, 3.0, 0.5, bundle.c1(), Some(2.0 * params.sobolev)).unwrap();
        let scaled = lemma2_check(&traj, &bundle, &doubled, 0.0, k_radius, 1.0).unwrap();
        let factor = 2f64.powf(params.k * (1.0 + params.j));
        assert!((scaled.rhs / report.rhs - factor).abs() < 1e-12);
        assert_eq!(scaled.lhs, report.lhs);
    }

    #[test]
    fn interpolation_bound_rejects_oversized_compacts() {
        let bundle = unit_power_bundle();
        let params = exponents(3, 1.0, 3.0, 0.5, bundle.c1(), None).unwrap();
        let traj = frozen_radial_trajectory(40, 1.0, 1e-3, 1.0, 12, |_| 0.0);
        // larger than R_1 = 1/3: the rung-0 cutoff no longer covers it
        assert!(matches!(
            lemma2_check(&traj, &bundle, &params, 0.0, 0.4, 1.0),
            Err(EstimatesError::BadParams(_))
        ));
    }

    #[test]
    fn dissipation_residual_zero_on_flat_fields() {
        let traj = frozen_radial_trajectory(40, 1.0, 1e-3, 1.0, 12, |_| 0.0);
        let medium = Medium::Calibration { diffusivity: 1.0 };
        let residual = energy_residual(&traj, &medium, &BoundaryData::Zero).unwrap();
        assert_eq!(residual, 0.0);
    }

    #[test]
    fn dissipation_residual_first_order_on_the_heat_oracle() {
        let medium = Medium::Calibration { diffusivity: 1.0 };
        let geometry = Geometry::Interval { length: 1.0 };
        let run = |dt: f64| -> f64 {
            let config = SolverConfig {
                epsilon: 1e-3,
                scheme: Scheme::SemiImplicit,
                dt: Some(dt),
                t_final: 0.2,
                snapshot_stride: 1,
            };
            let traj = solve(
                geometry,
                128,
                &medium,
                &config,
                InitialData::Sine { height: 0.25 },
                BoundaryData::Zero,
            )
            .unwrap();
            energy_residual(&traj, &medium, &BoundaryData::Zero).unwrap()
        };
        let residuals = [run(0.02), run(0.01), run(0.005)];
        for pair in residuals.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!(order >= 0.9, "observed order {order} from residuals {residuals:?}");
        }
    }

    #[test]
    fn dissipation_audit_rejects_active_ramps() {
        let traj = frozen_radial_trajectory(40, 1.0, 1e-3, 0.5, 12, |_| 0.0);
        let medium = Medium::Calibration { diffusivity: 1.0 };
        let ramp = BoundaryData::Ramp { max: 0.1, ramp_time: 1.0 };
        assert!(matches!(
            energy_residual(&traj, &medium, &ramp),
            Err(EstimatesError::RampActive { .. })
        ));
        // a ramp that already finished is fine
        let done = BoundaryData::Ramp { max: 0.1, ramp_time: 0.25 };
        assert!(energy_residual(&traj, &medium, &done).is_ok());
    }

    #[test]
    fn energy_norm_bound_trivial_on_flat_fields() {
        let bundle = unit_power_bundle();
        let traj = frozen_radial_trajectory(40, 1.0, 1e-3, 1.0, 12, |_| 0.0);
        let cutoff = Cutoff::for_rung(3.0, 0.5, 0).unwrap();
        let report = grad_g_check(&traj, &bundle, |x| cutoff.eval(x.abs()));
        assert_eq!(report.lhs, 0.0);
        assert_eq!(report.c_min, 0.0);
    }

    #[test]
    fn energy_norm_bound_scales_homogeneously() {
        let bundle = unit_power_bundle();
        let traj = frozen_radial_trajectory(160, 1.0, 1e-3, 1.0, 12, inner_bump);
        // ramp crossing the bump support so the leak term is nonzero
        let cutoff = Cutoff { plateau: 0.1, support: 0.3, ramp: 0.2 };
        let full = grad_g_check(&traj, &bundle, |x| cutoff.eval(x.abs()));
        assert!(full.lhs > 0.0 && full.c_min.is_finite());

        let half = grad_g_check(&traj, &bundle, |x| 0.5 * cutoff.eval(x.abs()));
        assert!((half.lhs / full.lhs - 0.25).abs() < 1e-12);
        assert!((half.rhs_initial / full.rhs_initial - 0.25).abs() < 1e-12);
        assert!((half.rhs_gradient / full.rhs_gradient - 0.25).abs() < 1e-12);
        assert!((half.c_min / full.c_min - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transformed_density_ratio_is_the_reciprocal_profile() {
        // h P / F = 1 for every kind: the transformed flux is the profile's
        // own reciprocal, which the dissipation identity relies on
        let bundles = [
            bundle_for(ProfileKind::Power { p: 0.5 }, 0.5),
            bundle_for(ProfileKind::Power { p: 1.0 }, 1.0),
            bundle_for(ProfileKind::Power { p: 2.0 }, 2.0),
            bundle_for(ProfileKind::ExpInverse { gamma: 1.0 }, 1.0),
            {
                let profile = DegeneracyProfile::new(
                    ProfileKind::ZetaBounded { zeta: ZetaSpec::Const(1.0) },
                    1.0,
                    TailPolicy::AdditiveConstant { i_tail: 0.0 },
                )
                .unwrap();
                build_bundle(profile, 1.0).unwrap()
            },
        ];
        for bundle in &bundles {
            for &s in &bundle.probe_grid(6) {
                let ratio = bundle.small_h(s) * bundle.profile().p(s) / bundle.f(s);
                assert!(
                    (ratio - 1.0).abs() <= 1e-12,
                    "h P / F = {ratio} at s = {s:.3e}"
                );
            }
        }
    }
}
