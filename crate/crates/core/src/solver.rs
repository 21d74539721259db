//! Finite-difference solver for the regularized degenerate diffusion
//! equation, written in the time-weighted form
//!
//! ```text
//! u_t = c(u) lap(u),   c(u) = (F(u) + eps) / h(u) = P(u) + eps / h(u)
//! ```
//!
//! on an interval or a ball (radial coordinates), with the density floored at
//! `eps`: initial data `eps + g`, boundary data `eps + phi(t)`. The default
//! scheme freezes `c` at the current state and takes a backward Euler step,
//! which is an M-matrix solve and therefore inherits the discrete maximum
//! principle `eps <= u <= eps + max(sup g, sup phi)`; the solver re-checks
//! that envelope after every step and fails loudly instead of integrating
//! garbage. An explicit scheme is kept for cross-validation under a CFL
//! bound.
//!
//! A constant-coefficient calibration medium turns the scheme into the
//! classical heat equation, for which exact solutions pin down the
//! convergence orders of both discretizations.

use crate::constitutive::ConstitutiveBundle;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver setup: {0}")]
    BadConfig(String),
    #[error("state left the maximum-principle envelope at t = {t}: {detail}")]
    StepBlowup { t: f64, detail: String },
    #[error("explicit step dt = {dt} exceeds the stability bound {dt_max}")]
    CflViolation { dt: f64, dt_max: f64 },
}

/// Spatial domain. `Radial` means the ball of the given radius in `dim`
/// space dimensions, discretized along the radius with a symmetry stencil at
/// the center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Geometry {
    Interval { length: f64 },
    Radial { dim: usize, length: f64 },
}

impl Geometry {
    pub fn length(&self) -> f64 {
        match *self {
            Geometry::Interval { length } | Geometry::Radial { length, .. } => length,
        }
    }
}

/// Diffusion medium: either a full constitutive bundle or a constant
/// calibration diffusivity.
#[derive(Clone, Copy)]
pub enum Medium<'a> {
    Bundle(&'a ConstitutiveBundle),
    Calibration { diffusivity: f64 },
}

impl Medium<'_> {
    fn coeff(&self, u: f64, eps: f64) -> f64 {
        match *self {
            Medium::Bundle(b) => b.coeff(u, eps),
            Medium::Calibration { diffusivity } => diffusivity,
        }
    }

    fn density_ceiling(&self) -> f64 {
        match *self {
            Medium::Bundle(b) => b.m(),
            Medium::Calibration { .. } => f64::INFINITY,
        }
    }
}

/// Initial excess over the `eps` floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum InitialData {
    Zero,
    /// `height * cos^2(pi (x - center) / (2 radius))` inside the bump support,
    /// zero outside; compactly supported and C^1.
    Bump { center: f64, radius: f64, height: f64 },
    /// `height * sin(pi x / L)`; interval geometry only.
    Sine { height: f64 },
}

impl InitialData {
    pub fn eval(&self, x: f64, length: f64) -> f64 {
        match *self {
            InitialData::Zero => 0.0,
            InitialData::Bump { center, radius, height } => {
                let d = (x - center).abs();
                if d >= radius {
                    0.0
                } else {
                    let c = (std::f64::consts::FRAC_PI_2 * d / radius).cos();
                    height * c * c
                }
            }
            InitialData::Sine { height } => height * (std::f64::consts::PI * x / length).sin(),
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            InitialData::Zero => 0.0,
            InitialData::Bump { height, .. } | InitialData::Sine { height } => height,
        }
    }
}

/// Boundary excess over the `eps` floor, applied at both interval endpoints
/// or at the outer radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BoundaryData {
    Zero,
    /// Linear ramp from zero to `max` over `[0, ramp_time]`, constant after.
    Ramp { max: f64, ramp_time: f64 },
}

impl BoundaryData {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            BoundaryData::Zero => 0.0,
            BoundaryData::Ramp { max, ramp_time } => max * (t / ramp_time).clamp(0.0, 1.0),
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            BoundaryData::Zero => 0.0,
            BoundaryData::Ramp { max, .. } => max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Scheme {
    SemiImplicit,
    Explicit,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub scheme: Scheme,
    /// Step size; `None` picks `dx` for the semi-implicit scheme and a
    /// CFL-safe step for the explicit one.
    pub dt: Option<f64>,
    pub t_final: f64,
    /// Keep every `snapshot_stride`-th state (plus the initial and final one).
    pub snapshot_stride: usize,
}

/// Stored solve output: snapshot times and states (node values including the
/// `eps` floor), per-step extrema, and the grid that produced them.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub geometry: Geometry,
    pub m: usize,
    pub dx: f64,
    pub dt: f64,
    pub epsilon: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `(min, max)` of the state after every step, not just snapshots.
    pub step_extrema: Vec<(f64, f64)>,
}

impl Trajectory {
    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.m).map(|i| i as f64 * self.dx).collect()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    /// Snapshot index with time closest to `t`.
    pub fn snapshot_at(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &ti) in self.times.iter().enumerate() {
            if (ti - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }
}

fn radial_dim(geometry: Geometry) -> Result<usize, SolverError> {
    match geometry {
        Geometry::Interval { .. } => Ok(1),
        Geometry::Radial { dim, .. } => {
            if dim < 1 {
                return Err(SolverError::BadConfig("radial dimension must be >= 1".into()));
            }
            Ok(dim)
        }
    }
}

fn validate(
    geometry: Geometry,
    m: usize,
    medium: &Medium,
    config: &SolverConfig,
    g: InitialData,
    phi: BoundaryData,
) -> Result<(), SolverError> {
    let length = geometry.length();
    if !(length > 0.0 && length.is_finite()) {
        return Err(SolverError::BadConfig(format!("domain length {length} must be positive")));
    }
    if m < 4 {
        return Err(SolverError::BadConfig(format!("need at least 4 cells, got {m}")));
    }
    if !(config.epsilon > 0.0) {
        return Err(SolverError::BadConfig(format!(
            "regularization epsilon {} must be positive",
            config.epsilon
        )));
    }
    if !(config.t_final > 0.0) {
        return Err(SolverError::BadConfig("t_final must be positive".into()));
    }
    if config.snapshot_stride == 0 {
        return Err(SolverError::BadConfig("snapshot_stride must be >= 1".into()));
    }
    if let Some(dt) = config.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SolverError::BadConfig(format!("dt {dt} must be positive")));
        }
    }
    match g {
        InitialData::Bump { center, radius, height } => {
            if !(radius > 0.0 && height >= 0.0) {
                return Err(SolverError::BadConfig("bump needs radius > 0, height >= 0".into()));
            }
            // a radial bump may straddle the origin (its support folds onto
            // the center); an interval bump must clear both Dirichlet ends
            let lo_ok = match geometry {
                Geometry::Radial { .. } => center >= 0.0,
                Geometry::Interval { .. } => center - radius >= 0.0,
            };
            if !lo_ok || center + radius > length {
                return Err(SolverError::BadConfig(
                    "bump support must lie inside the domain".into(),
                ));
            }
        }
        InitialData::Sine { height } => {
            if height < 0.0 {
                return Err(SolverError::BadConfig("sine height must be >= 0".into()));
            }
            if matches!(geometry, Geometry::Radial { .. }) {
                return Err(SolverError::BadConfig(
                    "sine data is defined for interval geometry only".into(),
                ));
            }
        }
        InitialData::Zero => {}
    }
    if phi.sup() < 0.0 {
        return Err(SolverError::BadConfig("boundary data must be >= 0".into()));
    }
    let ceiling = medium.density_ceiling();
    let u_max = config.epsilon + g.sup().max(phi.sup());
    if u_max >= ceiling {
        return Err(SolverError::BadConfig(format!(
            "epsilon + data supremum = {u_max} reaches the density range ceiling {ceiling}"
        )));
    }
    Ok(())
}

/// Centered discrete Laplacian (radial form includes the `(N-1)/r` drift;
/// the center node uses the symmetry stencil `2N (u1 - u0)/dx^2`). Boundary
/// entries are filled with zeros since Dirichlet nodes never consult them.
pub fn laplacian_apply(geometry: Geometry, dx: f64, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut out = vec![0.0; n];
    let inv2 = 1.0 / (dx * dx);
    match geometry {
        Geometry::Interval { .. } => {
            for i in 1..n - 1 {
                out[i] = (u[i - 1] - 2.0 * u[i] + u[i + 1]) * inv2;
            }
        }
        Geometry::Radial { dim, .. } => {
            let nn = dim as f64;
            out[0] = 2.0 * nn * (u[1] - u[0]) * inv2;
            for i in 1..n - 1 {
                let r = i as f64 * dx;
                out[i] = (u[i - 1] - 2.0 * u[i] + u[i + 1]) * inv2
                    + (nn - 1.0) / r * (u[i + 1] - u[i - 1]) / (2.0 * dx);
            }
        }
    }
    out
}

/// Tridiagonal system solved in place by the Thomas algorithm; `sub[i]` and
/// `sup[i]` flank `diag[i]`, with `sub[0]` and `sup[n-1]` unused.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut scratch = vec![0.0; n];
    let mut d = diag[0];
    rhs[0] /= d;
    for i in 1..n {
        scratch[i] = sup[i - 1] / d;
        d = diag[i] - sub[i] * scratch[i];
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / d;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
}

struct StencilRow {
    sub: f64,
    diag: f64,
    sup: f64,
}

/// Row of `-lap` at interior node `i`, with the radial drift upwinded at
/// nodes where the centered form would break the M-matrix sign pattern
/// (possible only for `dim > 3`).
fn interior_row(geometry: Geometry, dx: f64, i: usize) -> StencilRow {
    let inv2 = 1.0 / (dx * dx);
    match geometry {
        Geometry::Interval { .. } => {
            StencilRow { sub: -inv2, diag: 2.0 * inv2, sup: -inv2 }
        }
        Geometry::Radial { dim, .. } => {
            let nn = dim as f64;
            let r = i as f64 * dx;
            let drift = (nn - 1.0) / (2.0 * dx * r);
            if inv2 >= drift {
                StencilRow {
                    sub: -(inv2 - drift),
                    diag: 2.0 * inv2,
                    sup: -(inv2 + drift),
                }
            } else {
                let beta = (nn - 1.0) / (r * dx);
                StencilRow {
                    sub: -inv2,
                    diag: 2.0 * inv2 + beta,
                    sup: -(inv2 + beta),
                }
            }
        }
    }
}

/// Integrate the regularized equation and record snapshots.
pub fn solve(
    geometry: Geometry,
    m: usize,
    medium: &Medium,
    config: &SolverConfig,
    g: InitialData,
    phi: BoundaryData,
) -> Result<Trajectory, SolverError> {
    validate(geometry, m, medium, config, g, phi)?;
    let eps = config.epsilon;
    let length = geometry.length();
    let dx = length / m as f64;
    let n = m + 1;
    let radial = matches!(geometry, Geometry::Radial { .. });
    let dim = radial_dim(geometry)?;

    let u_cap = eps + g.sup().max(phi.sup());
    let c_max = coeff_sup(medium, eps, u_cap)?;
    let diag_scale = if radial { 2.0 * dim as f64 } else { 2.0 };
    let dt_cfl = dx * dx / (diag_scale * c_max);
    let dt = match (config.dt, config.scheme) {
        (Some(dt), Scheme::Explicit) => {
            if dt > dt_cfl {
                return Err(SolverError::CflViolation { dt, dt_max: dt_cfl });
            }
            dt
        }
        (Some(dt), Scheme::SemiImplicit) => dt,
        (None, Scheme::Explicit) => 0.4 * dt_cfl,
        (None, Scheme::SemiImplicit) => dx,
    };
    let steps = (config.t_final / dt).ceil().max(1.0) as usize;
    let dt = config.t_final / steps as f64;

    let mut u: Vec<f64> = (0..n).map(|i| eps + g.eval(i as f64 * dx, length)).collect();
    apply_boundary(&mut u, radial, eps + phi.eval(0.0));

    let mut traj = Trajectory {
        geometry,
        m,
        dx,
        dt,
        epsilon: eps,
        times: vec![0.0],
        states: vec![u.clone()],
        step_extrema: Vec::with_capacity(steps),
    };

    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];

    for step in 1..=steps {
        let t_new = step as f64 * dt;
        let bval = eps + phi.eval(t_new);
        match config.scheme {
            Scheme::SemiImplicit => {
                // solve for the increment: the residual is assembled from
                // neighbor differences, so it vanishes identically on flat
                // stretches and quiescent regions stay bit-exact flat instead
                // of picking up elimination roundoff
                let mut rhs = vec![0.0; n];
                // Dirichlet rows: identity acting on the increment
                diag[0] = 1.0;
                sup[0] = 0.0;
                diag[n - 1] = 1.0;
                sub[n - 1] = 0.0;
                rhs[n - 1] = bval - u[n - 1];
                if radial {
                    let c0 = medium.coeff(u[0], eps);
                    let k = 2.0 * dim as f64 / (dx * dx);
                    diag[0] = 1.0 + dt * c0 * k;
                    sup[0] = -dt * c0 * k;
                    rhs[0] = dt * c0 * k * (u[1] - u[0]);
                } else {
                    rhs[0] = bval - u[0];
                }
                for i in 1..n - 1 {
                    let c = medium.coeff(u[i], eps);
                    if !c.is_finite() {
                        return Err(SolverError::StepBlowup {
                            t: t_new,
                            detail: format!("diffusion coefficient not finite at node {i}"),
                        });
                    }
                    let row = interior_row(geometry, dx, i);
                    sub[i] = dt * c * row.sub;
                    diag[i] = 1.0 + dt * c * row.diag;
                    sup[i] = dt * c * row.sup;
                    rhs[i] = -(sub[i] * (u[i - 1] - u[i]) + sup[i] * (u[i + 1] - u[i]));
                }
                thomas(&sub, &diag, &sup, &mut rhs);
                for (ui, di) in u.iter_mut().zip(&rhs) {
                    *ui += di;
                }
            }
            Scheme::Explicit => {
                let lap = laplacian_apply(geometry, dx, &u);
                let mut next = u.clone();
                let lo = if radial { 0 } else { 1 };
                for i in lo..n - 1 {
                    let c = medium.coeff(u[i], eps);
                    if !c.is_finite() {
                        return Err(SolverError::StepBlowup {
                            t: t_new,
                            detail: format!("diffusion coefficient not finite at node {i}"),
                        });
                    }
                    next[i] = u[i] + dt * c * lap[i];
                }
                u = next;
            }
        }
        apply_boundary(&mut u, radial, bval);

        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in &u {
            if !v.is_finite() {
                return Err(SolverError::StepBlowup {
                    t: t_new,
                    detail: "state contains a non-finite value".into(),
                });
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let slack = 1e-10 * (1.0 + u_cap.abs());
        if lo < eps - slack || hi > u_cap + slack {
            return Err(SolverError::StepBlowup {
                t: t_new,
                detail: format!(
                    "range [{lo}, {hi}] violates the envelope [{eps}, {u_cap}]"
                ),
            });
        }
        traj.step_extrema.push((lo, hi));
        if step % config.snapshot_stride == 0 || step == steps {
            traj.times.push(t_new);
            traj.states.push(u.clone());
        }
    }
    Ok(traj)
}

fn apply_boundary(u: &mut [f64], radial: bool, bval: f64) {
    let n = u.len();
    u[n - 1] = bval;
    if !radial {
        u[0] = bval;
    }
}

/// Supremum of the diffusion coefficient over the reachable density range,
/// sampled on a fine grid; exact for the calibration medium.
fn coeff_sup(medium: &Medium, eps: f64, u_cap: f64) -> Result<f64, SolverError> {
    match *medium {
        Medium::Calibration { diffusivity } => {
            if !(diffusivity > 0.0 && diffusivity.is_finite()) {
                return Err(SolverError::BadConfig(format!(
                    "calibration diffusivity {diffusivity} must be positive"
                )));
            }
            Ok(diffusivity)
        }
        Medium::Bundle(_) => {
            let mut sup = 0.0f64;
            for k in 0..=400 {
                let u = eps + (u_cap - eps) * k as f64 / 400.0;
                let c = medium.coeff(u, eps);
                if !c.is_finite() {
                    return Err(SolverError::BadConfig(format!(
                        "diffusion coefficient not finite at density {u} (epsilon too small \
                         for this profile's time weight)"
                    )));
                }
                sup = sup.max(c);
            }
            Ok(sup)
        }
    }
}

/// Solve the same problem for a strictly decreasing list of regularization
/// levels and compare successive solutions: the expected continuity bound is
/// `sup |u_hi - u_lo| <= (eps_hi - eps_lo)` up to discretization tolerance.
pub struct SweepOutcome {
    pub trajectories: Vec<Trajectory>,
    /// One row per adjacent pair `(eps_hi, eps_lo)`: the measured supremum of
    /// `|u_hi - u_lo|` over all common snapshots, and the bound itself.
    pub comparisons: Vec<(f64, f64, f64, f64)>,
}

pub fn epsilon_sweep(
    geometry: Geometry,
    m: usize,
    medium: &Medium,
    config: &SolverConfig,
    g: InitialData,
    phi: BoundaryData,
    epsilons: &[f64],
) -> Result<SweepOutcome, SolverError> {
    if epsilons.len() < 2 {
        return Err(SolverError::BadConfig("sweep needs at least two epsilons".into()));
    }
    if !epsilons.windows(2).all(|w| w[0] > w[1] && w[1] > 0.0) {
        return Err(SolverError::BadConfig(
            "sweep epsilons must be strictly decreasing and positive".into(),
        ));
    }
    // one shared step size so snapshots align across runs
    let dx = geometry.length() / m as f64;
    let dt = config.dt.unwrap_or(match config.scheme {
        Scheme::SemiImplicit => dx,
        Scheme::Explicit => {
            let cap = epsilons[0] + g.sup().max(phi.sup());
            0.4 * dx * dx / (2.0 * radial_dim(geometry)? as f64 * coeff_sup(medium, epsilons[0], cap)?)
        }
    });
    let mut trajectories = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let cfg = SolverConfig { epsilon: eps, dt: Some(dt), ..*config };
        trajectories.push(solve(geometry, m, medium, &cfg, g, phi)?);
    }
    let mut comparisons = Vec::new();
    for w in trajectories.windows(2) {
        let (hi, lo) = (&w[0], &w[1]);
        let mut sup = 0.0f64;
        for (sh, sl) in hi.states.iter().zip(&lo.states) {
            for (a, b) in sh.iter().zip(sl) {
                sup = sup.max((a - b).abs());
            }
        }
        comparisons.push((hi.epsilon, lo.epsilon, sup, hi.epsilon - lo.epsilon));
    }
    Ok(SweepOutcome { trajectories, comparisons })
}
