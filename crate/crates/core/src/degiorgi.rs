//! Iteration machinery for the localization argument: the shrinking ball
//! ladder with its cutoff weights, the exponent pack that turns a dimension
//! and a decay index into recursion constants, the localized energy
//! functional evaluated on solver trajectories, the fast-geometric decay
//! lemma in closed form, and empirical tracking of the clean region around
//! a point.

use crate::constitutive::ConstitutiveBundle;
use crate::solver::{Geometry, Trajectory};
use crate::special;
use serde::Serialize;
use thiserror::Error;

/// Fewest stored snapshots a time window must contain before the energy
/// functional is willing to integrate over it.
pub const MIN_WINDOW_SNAPSHOTS: usize = 8;

#[derive(Debug, Error)]
pub enum DeGiorgiError {
    #[error("ball ratio b = {b} must exceed 2 so the ladder keeps a positive limit radius")]
    BadB { b: f64 },
    #[error("dimension {dim} unsupported: the exponent algebra needs dim >= 3")]
    DimensionUnsupported { dim: usize },
    #[error("bad parameter: {0}")]
    BadParams(String),
    #[error("window holds {have} snapshots, need at least {need}")]
    InsufficientSnapshots { have: usize, need: usize },
    #[error("density at the trace center is already {excess:.3e} above clean at t = 0")]
    CenterNotClean { excess: f64 },
}

/// Radius of the n-th ball in the shrinking ladder,
/// `R_n = R (b - 2 + b^{-n}) / (b - 1)`.
///
/// Starts at `R`, decreases strictly by `R b^{-(n+1)}` per rung, and
/// converges to `R (b - 2) / (b - 1)`.
pub fn radii(b: f64, big_r: f64, n: u32) -> Result<f64, DeGiorgiError> {
    check_ladder(b, big_r)?;
    Ok(big_r * (b - 2.0 + b.powi(-(n as i32))) / (b - 1.0))
}

/// Limit radius of the ladder, `R (b - 2) / (b - 1)`.
pub fn radii_limit(b: f64, big_r: f64) -> Result<f64, DeGiorgiError> {
    check_ladder(b, big_r)?;
    Ok(big_r * (b - 2.0) / (b - 1.0))
}

fn check_ladder(b: f64, big_r: f64) -> Result<(), DeGiorgiError> {
    if !(b > 2.0) {
        return Err(DeGiorgiError::BadB { b });
    }
    if !(big_r > 0.0 && big_r.is_finite()) {
        return Err(DeGiorgiError::BadParams(format!(
            "ladder needs a finite positive outer radius, got {big_r}"
        )));
    }
    Ok(())
}

/// Plateau-and-ramp weight for one ladder rung: 1 inside the next ball,
/// 0 outside the current one, linear in between.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Cutoff {
    /// Distance up to which the weight is 1.
    pub plateau: f64,
    /// Distance beyond which the weight is 0.
    pub support: f64,
    /// Width of the linear ramp between the two.
    pub ramp: f64,
}

impl Cutoff {
    /// Weight ramping from ball `n` down to ball `n + 1` of the ladder.
    pub fn for_rung(b: f64, big_r: f64, n: u32) -> Result<Self, DeGiorgiError> {
        let support = radii(b, big_r, n)?;
        // consecutive radii telescope to R b^{-(n+1)} exactly; computing the
        // width this way instead of subtracting the two near-equal closed
        // forms keeps the ramp slope accurate on deep rungs
        let ramp = big_r * b.powi(-(n as i32 + 1));
        Ok(Cutoff { plateau: support - ramp, support, ramp })
    }

    /// Weight at distance `dist` from the ladder center.
    pub fn eval(&self, dist: f64) -> f64 {
        ((self.support - dist) / self.ramp).clamp(0.0, 1.0)
    }

    /// Slope of the ramp. For rung `n` the width is `R b^{-(n+1)}`, so this
    /// equals `b^{n+1} / R` and bounds the Lipschitz constant of [`Self::eval`].
    pub fn slope(&self) -> f64 {
        1.0 / self.ramp
    }
}

/// Exponents and constants driving the nonlinear recursion for one
/// localization configuration.
#[derive(Debug, Clone, Serialize)]
pub struct DeGiorgiParams {
    pub dim: usize,
    pub b: f64,
    pub big_r: f64,
    /// Limit radius of the ladder, the ball the argument keeps clean.
    pub r_prime: f64,
    pub lambda: f64,
    /// Sobolev gain `2 / (dim - 2)`.
    pub j: f64,
    /// Interpolation weight `(2 - lambda) / (2 + 2 j - lambda)`.
    pub k: f64,
    /// Exponent of the time prefactor in the energy functional.
    pub gamma: f64,
    pub sobolev: f64,
    pub c1: f64,
    /// Constant in front of the recursion rhs.
    pub big_d: f64,
    /// Smallness bar on the first energy that makes the recursion collapse.
    pub threshold: f64,
}

/// Assembles the exponent pack for dimension `dim` and decay index `lambda`.
///
/// `sobolev` overrides the embedding constant; by default the sharp value
/// for the dimension is used. Fails for `dim <= 2` (the embedding exponent
/// degenerates) and for `lambda` outside `(0, 2)`.
pub fn exponents(
    dim: usize,
    lambda: f64,
    b: f64,
    big_r: f64,
    c1: f64,
    sobolev: Option<f64>,
) -> Result<DeGiorgiParams, DeGiorgiError> {
    if dim <= 2 {
        return Err(DeGiorgiError::DimensionUnsupported { dim });
    }
    check_ladder(b, big_r)?;
    if !(lambda > 0.0 && lambda < 2.0) {
        return Err(DeGiorgiError::BadParams(format!("lambda must lie in (0, 2), got {lambda}")));
    }
    if !(c1 > 0.0 && c1.is_finite()) {
        return Err(DeGiorgiError::BadParams(format!(
            "comparison constant must be positive and finite, got {c1}"
        )));
    }
    let sobolev = match sobolev {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => {
            return Err(DeGiorgiError::BadParams(format!(
                "embedding constant override must be positive, got {s}"
            )))
        }
        None => special::sobolev_constant(dim as u32),
    };

    let j = 2.0 / (dim as f64 - 2.0);
    let k = (2.0 - lambda) / (2.0 + 2.0 * j - lambda);
    let gamma = (1.0 - (1.0 + j) * k) / (k * j);
    // the exponents are not independent: eliminating j and k must reproduce
    // the same time exponent no matter the dimension
    let collapsed = lambda / (2.0 - lambda);
    assert!(
        (gamma - collapsed).abs() <= 1e-9 * (1.0 + gamma.abs()),
        "exponent identity broke: {gamma} vs {collapsed}"
    );

    let r_prime = big_r * (b - 2.0) / (b - 1.0);
    let big_d =
        (b.powi(4) / (big_r * big_r)) * (2.0 * c1 * c1 + 1.0) * sobolev.powf(k * (1.0 + j));
    let kj = k * j;
    let threshold = big_d.powf(-1.0 / kj) * b.powf(-2.0 / (kj * kj));

    Ok(DeGiorgiParams {
        dim,
        b,
        big_r,
        r_prime,
        lambda,
        j,
        k,
        gamma,
        sobolev,
        c1,
        big_d,
        threshold,
    })
}

/// How the energy functional reads the solver field: as the excess above
/// the regularization floor (the default), or as the raw density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DensityMode {
    Excess,
    Raw,
}

/// Localized energy of ladder rung `n` over the window `[0, t_prime]`:
///
/// `(t')^gamma [ sup_t int theta_n^2 H(w)  +  int int |grad(theta_n G(w))|^2 ]`
///
/// with `w` the field read per `mode` and `theta_n` the rung cutoff around
/// `x0`. Space integrals use the trapezoid rule on the solver grid (the
/// gradient term via centered cell differences) with the radial volume
/// weight where the geometry asks for it. The time integral is a trapezoid
/// over stored snapshots plus a linearly interpolated partial cell up to
/// `t_prime`; the sup scans stored snapshots only.
pub fn evaluate_y(
    traj: &Trajectory,
    bundle: &ConstitutiveBundle,
    params: &DeGiorgiParams,
    x0: f64,
    t_prime: f64,
    n: u32,
    mode: DensityMode,
) -> Result<f64, DeGiorgiError> {
    if !(t_prime > 0.0 && t_prime.is_finite()) {
        return Err(DeGiorgiError::BadParams(format!("window must be positive, got {t_prime}")));
    }
    let horizon = *traj.times.last().expect("trajectory stores at least the initial snapshot");
    if t_prime > horizon * (1.0 + 1e-9) {
        return Err(DeGiorgiError::BadParams(format!(
            "window {t_prime} extends past the stored trajectory (ends at {horizon})"
        )));
    }
    check_center(traj, x0)?;
    let cutoff = Cutoff::for_rung(params.b, params.big_r, n)?;

    let nodes = traj.nodes();
    let eps = traj.epsilon;
    let theta: Vec<f64> = nodes.iter().map(|&x| cutoff.eval((x - x0).abs())).collect();
    let node_w = node_volume_weights(&traj.geometry, &nodes, traj.dx);
    let cell_w = cell_volume_weights(&traj.geometry, &nodes, traj.dx);

    let in_window = traj.times.iter().take_while(|&&t| t <= t_prime * (1.0 + 1e-12)).count();
    if in_window < MIN_WINDOW_SNAPSHOTS {
        return Err(DeGiorgiError::InsufficientSnapshots {
            have: in_window,
            need: MIN_WINDOW_SNAPSHOTS,
        });
    }

    let w_of = |u: f64| match mode {
        DensityMode::Excess => (u - eps).max(0.0),
        DensityMode::Raw => u,
    };
    let mass_of = |state: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..nodes.len() {
            if theta[i] > 0.0 {
                acc += theta[i] * theta[i] * bundle.big_h(w_of(state[i])) * node_w[i];
            }
        }
        acc
    };
    let grad_of = |state: &[f64]| -> f64 {
        let psi: Vec<f64> = (0..nodes.len()).map(|i| theta[i] * bundle.g(w_of(state[i]))).collect();
        let mut acc = 0.0;
        for i in 0..nodes.len() - 1 {
            let slope = (psi[i + 1] - psi[i]) / traj.dx;
            acc += slope * slope * cell_w[i];
        }
        acc
    };

    let mut sup_mass = 0.0f64;
    let mut grad = Vec::with_capacity(in_window);
    for state in &traj.states[..in_window] {
        sup_mass = sup_mass.max(mass_of(state));
        grad.push(grad_of(state));
    }

    let mut time_int = 0.0;
    for s in 1..in_window {
        time_int += 0.5 * (grad[s - 1] + grad[s]) * (traj.times[s] - traj.times[s - 1]);
    }
    let t_last = traj.times[in_window - 1];
    if t_prime > t_last && in_window < traj.times.len() {
        let t_next = traj.times[in_window];
        let g_next = grad_of(&traj.states[in_window]);
        let frac = (t_prime - t_last) / (t_next - t_last);
        let g_at = grad[in_window - 1] + frac * (g_next - grad[in_window - 1]);
        time_int += 0.5 * (grad[in_window - 1] + g_at) * (t_prime - t_last);
    }

    Ok(t_prime.powf(params.gamma) * (sup_mass + time_int))
}

/// Margins of the recursion `Y_n <= D (b^2)^{n-1} Y_{n-1}^{1+kj}`.
///
/// Entry `i` is `rhs - Y_{i+1}` for the step bounding `Y_{i+1}`; all
/// nonnegative means the chain closes on this data. A single energy value
/// yields no steps to check.
pub fn check_recursion(y: &[f64], params: &DeGiorgiParams) -> Vec<f64> {
    let expo = 1.0 + params.k * params.j;
    let b2 = params.b * params.b;
    (1..y.len())
        .map(|n| params.big_d * b2.powi(n as i32 - 1) * y[n - 1].powf(expo) - y[n])
        .collect()
}

/// Closed-form bounds for a sequence obeying `y_{n+1} <= c b^n y_n^{1+e}`,
/// together with the smallness bar `theta = c^{-1/e} b^{-1/e^2}` under which
/// the bounds decay geometrically.
#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    /// Starting from at or below this value (with `b > 1`) the bounds decay
    /// like `theta b^{-n/e}`.
    pub theta: f64,
    pub log_theta: f64,
    /// `ln` of the bound per index; stays finite where the plain bound
    /// overflows or underflows.
    pub log_bounds: Vec<f64>,
    pub bounds: Vec<f64>,
    pub converges: bool,
}

/// Evaluates the closed-form bounds `y_n <= c^A b^{A/e - n/e} y_0^{(1+e)^n}`
/// with `A = ((1+e)^n - 1)/e` for `n = 0..=n_max`.
///
/// `b >= 1` is enough for the bounds themselves; strict decay additionally
/// needs `b > 1` and `y_0 <= theta`, reported via `converges`.
pub fn ladyzhenskaya(
    y0: f64,
    c: f64,
    b: f64,
    e: f64,
    n_max: usize,
) -> Result<DecayReport, DeGiorgiError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(DeGiorgiError::BadParams(format!("prefactor must be positive, got {c}")));
    }
    if !(b >= 1.0 && b.is_finite()) {
        return Err(DeGiorgiError::BadParams(format!("growth base must be >= 1, got {b}")));
    }
    if !(e > 0.0 && e <= 100.0) {
        return Err(DeGiorgiError::BadParams(format!(
            "superlinearity must lie in (0, 100], got {e}"
        )));
    }
    if !(y0 >= 0.0) {
        return Err(DeGiorgiError::BadParams(format!("starting value must be >= 0, got {y0}")));
    }
    if n_max > 500 {
        return Err(DeGiorgiError::BadParams(format!(
            "bound ladder capped at 500 rungs, asked for {n_max}"
        )));
    }

    let (ln_c, ln_b, ln_y0) = (c.ln(), b.ln(), y0.ln());
    let log_theta = -ln_c / e - ln_b / (e * e);
    let mut log_bounds = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        // growth = ((1+e)^n - 1)/e, and (1+e)^n = growth * e + 1 exactly
        let growth = ((1.0 + e).powi(n as i32) - 1.0) / e;
        log_bounds
            .push(growth * ln_c + (growth / e - n as f64 / e) * ln_b + (growth * e + 1.0) * ln_y0);
    }
    let bounds = log_bounds.iter().map(|&l| l.exp()).collect();
    let converges = b > 1.0 && ln_y0 <= log_theta;
    Ok(DecayReport { theta: log_theta.exp(), log_theta, log_bounds, bounds, converges })
}

/// Runs the recursion `y_{n+1} = c b^n y_n^{1+e}` with equality, in logs so
/// diverging chains stay representable. Returns `ln y_n` for `n = 0..=n_max`.
pub fn equality_recursion(y0: f64, c: f64, b: f64, e: f64, n_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(y0.ln());
    for n in 0..n_max {
        let prev = out[n];
        out.push(c.ln() + n as f64 * b.ln() + (1.0 + e) * prev);
    }
    out
}

/// Radius of the clean region around `x0` per stored snapshot: the largest
/// `r` such that the density sits within `tol` of the floor on every node
/// at distance `<= r`.
#[derive(Debug, Clone, Serialize)]
pub struct FrontTrace {
    pub times: Vec<f64>,
    pub front_radius: Vec<f64>,
    pub tol: f64,
    /// Distance from `x0` to the farthest grid node, the ceiling a fully
    /// clean snapshot reports.
    pub max_radius: f64,
}

/// Traces the clean radius around `x0` through a trajectory.
///
/// Loosening `tol` admits more nodes as clean, so the traced radius grows
/// with `tol`. Fails with [`DeGiorgiError::CenterNotClean`] when the node
/// nearest `x0` already exceeds the bar at `t = 0`.
pub fn front_trace(traj: &Trajectory, x0: f64, tol: f64) -> Result<FrontTrace, DeGiorgiError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(DeGiorgiError::BadParams(format!("tolerance must be positive, got {tol}")));
    }
    check_center(traj, x0)?;
    let nodes = traj.nodes();
    let dist: Vec<f64> = nodes.iter().map(|&x| (x - x0).abs()).collect();
    let max_radius = dist.iter().cloned().fold(0.0, f64::max);
    let eps = traj.epsilon;

    let nearest = (0..nodes.len())
        .min_by(|&a, &b2| dist[a].total_cmp(&dist[b2]))
        .expect("grid is nonempty");
    let excess0 = traj.states[0][nearest] - eps;
    if excess0 > tol {
        return Err(DeGiorgiError::CenterNotClean { excess: excess0 });
    }

    let mut front_radius = Vec::with_capacity(traj.states.len());
    for state in &traj.states {
        let mut first_dirty = f64::INFINITY;
        for i in 0..nodes.len() {
            if state[i] - eps > tol {
                first_dirty = first_dirty.min(dist[i]);
            }
        }
        let front = if first_dirty.is_infinite() {
            max_radius
        } else {
            // largest node distance strictly inside the dirty radius; ties
            // at the dirty distance stay excluded
            dist.iter().cloned().filter(|&d| d < first_dirty).fold(0.0, f64::max)
        };
        front_radius.push(front);
    }
    Ok(FrontTrace { times: traj.times.clone(), front_radius, tol, max_radius })
}

impl FrontTrace {
    /// Largest stored time through which the front never dips below `r`:
    /// the last snapshot time `t` with `front(s) >= r` for every stored
    /// `s <= t`, or 0 when already the initial snapshot fails.
    pub fn localization_time(&self, r: f64) -> f64 {
        let mut t = 0.0;
        for (i, &f) in self.front_radius.iter().enumerate() {
            if f >= r {
                t = self.times[i];
            } else {
                break;
            }
        }
        t
    }
}

fn check_center(traj: &Trajectory, x0: f64) -> Result<(), DeGiorgiError> {
    match traj.geometry {
        Geometry::Radial { .. } => {
            if x0 != 0.0 {
                return Err(DeGiorgiError::BadParams(format!(
                    "radial runs are centered at the origin, x0 must be 0, got {x0}"
                )));
            }
        }
        Geometry::Interval { length } => {
            if !(x0 > 0.0 && x0 < length) {
                return Err(DeGiorgiError::BadParams(format!(
                    "center {x0} must lie strictly inside the interval (0, {length})"
                )));
            }
        }
    }
    Ok(())
}

/// Trapezoid weights per node, including the volume element of the geometry.
pub(crate) fn node_volume_weights(geometry: &Geometry, nodes: &[f64], dx: f64) -> Vec<f64> {
    let meas = measure(geometry);
    let m = nodes.len();
    (0..m)
        .map(|i| {
            let end = i == 0 || i == m - 1;
            meas(nodes[i]) * dx * if end { 0.5 } else { 1.0 }
        })
        .collect()
}

/// Volume weight per grid cell, evaluated at the cell midpoint.
pub(crate) fn cell_volume_weights(geometry: &Geometry, nodes: &[f64], dx: f64) -> Vec<f64> {
    let meas = measure(geometry);
    (0..nodes.len() - 1).map(|i| meas(0.5 * (nodes[i] + nodes[i + 1])) * dx).collect()
}

fn measure(geometry: &Geometry) -> Box<dyn Fn(f64) -> f64> {
    match *geometry {
        Geometry::Interval { .. } => Box::new(|_| 1.0),
        Geometry::Radial { dim, .. } => {
            let area = special::unit_sphere_area(dim as u32);
            Box::new(move |r: f64| area * r.powi(dim as i32 - 1))
        }
    }
}
