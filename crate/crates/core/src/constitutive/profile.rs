//! Degeneracy profiles: the diffusivity `P` as a function of density.
//!
//! A profile is positive and bounded on `(0, M]` and vanishes at zero density.
//! Everything derived from it flows through two primitives that stay
//! representable even when `P` underflows: `log P(s)` and the product
//! `P(s) * I(s)` with `I(s) = int_s^oo dt / (t P(t))`. The product is computed
//! as `int_s^M (P(s)/P(t)) dt/t` plus an optional tail constant, so the ratio
//! inside the integral never overflows no matter how fast `P` decays.

use crate::quad::{self, QuadError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstitutiveError {
    #[error("ratio sigma/tau unbounded on the sample grid: sup {sup:e} exceeds bound {bound:e}")]
    RatioUnbounded { sup: f64, bound: f64 },
    #[error("profile does not degenerate at zero: P near 0 is {limit:e}, above tolerance {tol:e}")]
    NotDegenerate { limit: f64, tol: f64 },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("tail integral did not converge")]
    QuadratureDivergent(#[from] QuadError),
    #[error("P*I appears unbounded toward zero (probes grew from {first:e} to {last:e})")]
    AUnbounded { first: f64, last: f64 },
    #[error(
        "Lambda = {lambda} inadmissible: needs (Lambda+1)/Lambda > A = {a_sup} \
         (admissible range is Lambda < {lambda_max:e})"
    )]
    InadmissibleLambda { lambda: f64, a_sup: f64, lambda_max: f64 },
    #[error("F not monotone on probe grid: F'({s:e}) <= 0")]
    NonMonotoneF { s: f64 },
    #[error("H'/G' degenerate at s = {s:e}: (Lambda+1)/Lambda - P*I = {margin:e}")]
    DegenerateRatio { s: f64, margin: f64 },
}

/// Named forms for the weight `zeta` in exponential-form profiles
/// `P(s) = exp(-int_s^1 zeta(t)/t dt)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ZetaSpec {
    /// `zeta(s) = c`, so `P(s) = s^c`.
    Const(f64),
    /// `zeta(s) = a + b s`, bounded on `(0, 1]`.
    Affine { a: f64, b: f64 },
    /// `zeta(s) = 1 + ln(1/s)`, unbounded at zero with slowly varying growth.
    OnePlusLogInv,
}

impl ZetaSpec {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ZetaSpec::Const(c) => *c,
            ZetaSpec::Affine { a, b } => a + b * s,
            ZetaSpec::OnePlusLogInv => 1.0 - s.ln(),
        }
    }

    /// `int_s^1 zeta(t)/t dt` in closed form.
    fn exponent(&self, s: f64) -> f64 {
        let ls = s.ln();
        match self {
            ZetaSpec::Const(c) => -c * ls,
            ZetaSpec::Affine { a, b } => -a * ls + b * (1.0 - s),
            ZetaSpec::OnePlusLogInv => -ls + 0.5 * ls * ls,
        }
    }

    fn bounded(&self) -> bool {
        !matches!(self, ZetaSpec::OnePlusLogInv)
    }
}

/// How the tail `int_M^oo dt/(t P(t))` of the density integral is handled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TailPolicy {
    /// Integrate the true tail analytically (power kind only, where it is finite).
    ClosedForm,
    /// Truncate at `M` and add a fixed constant (zero by default).
    AdditiveConstant { i_tail: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ProfileKind {
    /// `P(s) = s^p` with `p > 0`.
    Power { p: f64 },
    /// `P(s) = exp(-1/s^gamma)` with `gamma > 0`; flat to all orders at zero.
    ExpInverse { gamma: f64 },
    /// Exponential form with a positively bounded `zeta`.
    ZetaBounded { zeta: ZetaSpec },
    /// Exponential form with `zeta` diverging at zero.
    ZetaUnbounded { zeta: ZetaSpec },
    /// Piecewise log-log-linear interpolation of `(s, P)` samples.
    Tabulated { samples: Vec<(f64, f64)> },
    /// Constant diffusivity for solver validation; exempt from degeneracy and
    /// never usable for the constitutive construction.
    Calibration { diffusivity: f64 },
}

/// A validated degeneracy profile on `(0, M]`.
#[derive(Debug, Clone, Serialize)]
pub struct DegeneracyProfile {
    kind: ProfileKind,
    m: f64,
    tail: TailPolicy,
    /// Tabulated kinds only: knots in `(ln s, ln P)` for interpolation.
    #[serde(skip)]
    loglog: Vec<(f64, f64)>,
}

const PI_REL_TOL: f64 = 1e-11;

impl DegeneracyProfile {
    pub fn new(kind: ProfileKind, m: f64, tail: TailPolicy) -> Result<Self, ConstitutiveError> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(ConstitutiveError::InvalidProfile(format!("M must be positive, got {m}")));
        }
        if let TailPolicy::AdditiveConstant { i_tail } = tail {
            if !(i_tail >= 0.0 && i_tail.is_finite()) {
                return Err(ConstitutiveError::InvalidProfile(format!(
                    "tail constant must be finite and nonnegative, got {i_tail}"
                )));
            }
        }
        if matches!(tail, TailPolicy::ClosedForm) && !matches!(kind, ProfileKind::Power { .. }) {
            return Err(ConstitutiveError::InvalidProfile(
                "closed-form tail is only available for the power kind".into(),
            ));
        }
        let mut loglog = Vec::new();
        match &kind {
            ProfileKind::Power { p } => {
                if !(*p > 0.0 && p.is_finite()) {
                    return Err(ConstitutiveError::InvalidProfile(format!(
                        "power exponent must be positive, got {p}"
                    )));
                }
            }
            ProfileKind::ExpInverse { gamma } => {
                if !(*gamma > 0.0 && gamma.is_finite()) {
                    return Err(ConstitutiveError::InvalidProfile(format!(
                        "exp-inverse exponent must be positive, got {gamma}"
                    )));
                }
                if m > 1.0 {
                    return Err(ConstitutiveError::InvalidProfile(
                        "exp-inverse profiles use the unit density range; M must be <= 1".into(),
                    ));
                }
            }
            ProfileKind::ZetaBounded { zeta } => {
                if m > 1.0 {
                    return Err(ConstitutiveError::InvalidProfile(
                        "zeta profiles use the unit density range; M must be <= 1".into(),
                    ));
                }
                if !zeta.bounded() {
                    return Err(ConstitutiveError::InvalidProfile(
                        "zeta-bounded requires a bounded weight".into(),
                    ));
                }
                let inf = zeta.eval(1.0).min(zeta.eval(1e-12));
                if !(inf > 0.0) {
                    return Err(ConstitutiveError::InvalidProfile(
                        "zeta must stay positive on (0, 1]".into(),
                    ));
                }
            }
            ProfileKind::ZetaUnbounded { zeta } => {
                if m > 1.0 {
                    return Err(ConstitutiveError::InvalidProfile(
                        "zeta profiles use the unit density range; M must be <= 1".into(),
                    ));
                }
                if zeta.bounded() {
                    return Err(ConstitutiveError::InvalidProfile(
                        "zeta-unbounded requires a weight diverging at zero".into(),
                    ));
                }
            }
            ProfileKind::Tabulated { samples } => {
                if samples.len() < 4 {
                    return Err(ConstitutiveError::InvalidProfile(
                        "tabulated profiles need at least 4 samples".into(),
                    ));
                }
                for &(s, p) in samples {
                    if !(s > 0.0 && s <= m && p > 0.0 && p.is_finite()) {
                        return Err(ConstitutiveError::InvalidProfile(format!(
                            "bad sample ({s}, {p}): need 0 < s <= M and P finite positive"
                        )));
                    }
                }
                if !samples.windows(2).all(|w| w[0].0 < w[1].0) {
                    return Err(ConstitutiveError::InvalidProfile(
                        "tabulated sample abscissae must strictly increase".into(),
                    ));
                }
                loglog = samples.iter().map(|&(s, p)| (s.ln(), p.ln())).collect();
                // degeneracy: the left-end log-log slope must be positive so the
                // power-law extension vanishes at zero
                let (x0, y0) = loglog[0];
                let (x1, y1) = loglog[1];
                if (y1 - y0) / (x1 - x0) <= 0.0 {
                    return Err(ConstitutiveError::NotDegenerate {
                        limit: samples[0].1,
                        tol: 0.0,
                    });
                }
            }
            ProfileKind::Calibration { diffusivity } => {
                if !(*diffusivity > 0.0 && diffusivity.is_finite()) {
                    return Err(ConstitutiveError::InvalidProfile(format!(
                        "calibration diffusivity must be positive, got {diffusivity}"
                    )));
                }
            }
        }
        Ok(Self { kind, m, tail, loglog })
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn tail(&self) -> TailPolicy {
        self.tail
    }

    pub fn is_calibration(&self) -> bool {
        matches!(self.kind, ProfileKind::Calibration { .. })
    }

    /// Kinds with a derivative formula; the tabulated interpolant is only
    /// piecewise smooth and is excluded from derivative-based constants.
    pub fn differentiable(&self) -> bool {
        !matches!(self.kind, ProfileKind::Tabulated { .. })
    }

    fn guard_constitutive(&self) -> Result<(), ConstitutiveError> {
        if self.is_calibration() {
            return Err(ConstitutiveError::InvalidProfile(
                "calibration profiles carry no degeneracy structure".into(),
            ));
        }
        Ok(())
    }

    /// `ln P(s)` for `s > 0`. Stays finite where `P` itself under- or overflows.
    pub fn log_p(&self, s: f64) -> f64 {
        debug_assert!(s > 0.0);
        match &self.kind {
            ProfileKind::Power { p } => p * s.ln(),
            ProfileKind::ExpInverse { gamma } => -s.powf(-gamma),
            ProfileKind::ZetaBounded { zeta } | ProfileKind::ZetaUnbounded { zeta } => {
                -zeta.exponent(s)
            }
            ProfileKind::Tabulated { .. } => self.loglog_interp(s.ln()),
            ProfileKind::Calibration { diffusivity } => diffusivity.ln(),
        }
    }

    pub fn p(&self, s: f64) -> f64 {
        self.log_p(s).exp()
    }

    /// `P'(s)/P(s)`; piecewise constant slopes over `s` for tabulated kinds.
    pub fn dlog_p(&self, s: f64) -> f64 {
        debug_assert!(s > 0.0);
        match &self.kind {
            ProfileKind::Power { p } => p / s,
            ProfileKind::ExpInverse { gamma } => gamma * s.powf(-gamma - 1.0),
            ProfileKind::ZetaBounded { zeta } | ProfileKind::ZetaUnbounded { zeta } => {
                zeta.eval(s) / s
            }
            ProfileKind::Tabulated { .. } => self.loglog_slope(s.ln()) / s,
            ProfileKind::Calibration { .. } => 0.0,
        }
    }

    pub fn dp(&self, s: f64) -> f64 {
        self.p(s) * self.dlog_p(s)
    }

    fn loglog_interp(&self, x: f64) -> f64 {
        let pts = &self.loglog;
        let n = pts.len();
        if x <= pts[0].0 {
            let slope = (pts[1].1 - pts[0].1) / (pts[1].0 - pts[0].0);
            return pts[0].1 + slope * (x - pts[0].0);
        }
        if x >= pts[n - 1].0 {
            let slope = (pts[n - 1].1 - pts[n - 2].1) / (pts[n - 1].0 - pts[n - 2].0);
            return pts[n - 1].1 + slope * (x - pts[n - 1].0);
        }
        let i = pts.partition_point(|&(xk, _)| xk <= x) - 1;
        let (x0, y0) = pts[i];
        let (x1, y1) = pts[i + 1];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    fn loglog_slope(&self, x: f64) -> f64 {
        let pts = &self.loglog;
        let n = pts.len();
        let i = if x <= pts[0].0 {
            0
        } else if x >= pts[n - 1].0 {
            n - 2
        } else {
            pts.partition_point(|&(xk, _)| xk <= x) - 1
        };
        (pts[i + 1].1 - pts[i].1) / (pts[i + 1].0 - pts[i].0)
    }

    /// `P(s) * I(s)` with `I(s) = int_s^M dt/(t P(t)) + tail`.
    ///
    /// Computed as `int_s^M (P(s)/P(t)) dt/t` so the integrand lives in
    /// `(0, 1/t]` for every profile. The power kind and constant-zeta kinds
    /// have closed forms; the exp-inverse kind uses the substitution
    /// `w = s^-gamma - t^-gamma`, which maps the sharp boundary layer at
    /// `t = s` onto a plain `e^-w` decay.
    pub fn p_times_i(&self, s: f64) -> Result<f64, ConstitutiveError> {
        self.guard_constitutive()?;
        debug_assert!(s > 0.0 && s <= self.m * (1.0 + 1e-12));
        let s = s.min(self.m);
        let m = self.m;
        let truncated = match &self.kind {
            ProfileKind::Power { p } => {
                if matches!(self.tail, TailPolicy::ClosedForm) {
                    return Ok(1.0 / p);
                }
                (1.0 - (s / m).powf(*p)) / p
            }
            ProfileKind::ZetaBounded { zeta: ZetaSpec::Const(c) } => (1.0 - (s / m).powf(*c)) / c,
            ProfileKind::ExpInverse { gamma } => {
                let a = s.powf(-gamma);
                let w_end = (a - m.powf(-gamma)).min(745.0);
                if w_end <= 0.0 {
                    0.0
                } else {
                    // m <= 1 keeps a - w >= 1 on the whole w-range, so the
                    // integrand is smooth on e-fold panels and a fixed rule
                    // suffices; this sits inside other quadratures and must
                    // stay cheap
                    let f = |w: f64| (-w).exp() / (a - w);
                    let mut acc = 0.0;
                    let mut lo = 0.0_f64;
                    loop {
                        let hi = if lo == 0.0 { 1.0 } else { lo * 2.0 }.min(w_end);
                        acc += quad::gk15_composite(&f, lo, hi, 2);
                        if hi >= w_end {
                            break;
                        }
                        lo = hi;
                    }
                    acc / gamma
                }
            }
            _ => {
                let lp_s = self.log_p(s);
                let f = |t: f64| (lp_s - self.log_p(t)).exp() / t;
                quad::integrate_decaying(&f, s, m, PI_REL_TOL)?
            }
        };
        let tail_term = match self.tail {
            TailPolicy::ClosedForm => 0.0,
            TailPolicy::AdditiveConstant { i_tail } => {
                if i_tail == 0.0 {
                    0.0
                } else {
                    (self.log_p(s) + i_tail.ln()).exp()
                }
            }
        };
        Ok(truncated + tail_term)
    }

    /// `ln I(s)`. Finite wherever `P*I > 0`; `-inf` exactly at `s = M` under a
    /// zero-tail policy.
    pub fn log_i(&self, s: f64) -> Result<f64, ConstitutiveError> {
        let pi = self.p_times_i(s)?;
        let lp = self.log_p(s);
        // deep below the representable range P itself underflows (log_p hits
        // -inf) and the product P*I rounds to zero; the integral I still
        // diverges there, so report +inf rather than the NaN of ln(0) + inf
        if pi == 0.0 && lp == f64::NEG_INFINITY {
            return Ok(f64::INFINITY);
        }
        Ok(pi.ln() - lp)
    }

    /// `I(s)` directly. Overflows to `+inf` where the log exceeds range; use
    /// [`Self::log_i`] for small densities of rapidly degenerating kinds.
    pub fn eval_i(&self, s: f64) -> Result<f64, ConstitutiveError> {
        Ok(self.log_i(s)?.exp())
    }

    /// `s * I(s) * P'(s)`, evaluated as `s * (P'/P) * (P*I)` so it stays
    /// representable for every kind.
    pub fn s_i_dp(&self, s: f64) -> Result<f64, ConstitutiveError> {
        Ok(s * self.dlog_p(s) * self.p_times_i(s)?)
    }

    /// Smallest abscissa worth probing: tabulated kinds stop at their lowest
    /// sample, analytic kinds at a fixed fraction of `M`.
    pub fn probe_floor(&self) -> f64 {
        match &self.kind {
            ProfileKind::Tabulated { samples } => samples[0].0,
            _ => self.m * 1e-12,
        }
    }

    /// Largest abscissa where log-domain derived quantities stay finite: `M`
    /// itself for a closed-form tail, just inside `M` when the tail integral
    /// truncates to zero there.
    pub fn probe_ceiling(&self) -> f64 {
        match self.tail {
            TailPolicy::ClosedForm => self.m,
            TailPolicy::AdditiveConstant { i_tail } if i_tail > 0.0 => self.m,
            _ => self.m * (1.0 - 1e-9),
        }
    }
}

/// Collapse a two-function constitutive hypothesis (mobility `tau`, state law
/// `sigma`) into the single profile `P = sigma/tau`, sampled on `grid`.
///
/// Fails with `RatioUnbounded` when the sampled ratio exceeds `sup_bound` and
/// with `NotDegenerate` when the ratio does not vanish toward zero density
/// (value above `degeneracy_tol` at the lowest sample, or a flat log-log
/// slope there).
pub fn reduce_hypothesis(
    tau: impl Fn(f64) -> f64,
    sigma: impl Fn(f64) -> f64,
    grid: &[f64],
    m: f64,
    sup_bound: f64,
    degeneracy_tol: f64,
) -> Result<DegeneracyProfile, ConstitutiveError> {
    if grid.len() < 4 {
        return Err(ConstitutiveError::InvalidProfile("need at least 4 grid points".into()));
    }
    let mut samples = Vec::with_capacity(grid.len());
    let mut sup = 0.0f64;
    for &s in grid {
        let t = tau(s);
        let v = sigma(s) / t;
        if !(v > 0.0 && v.is_finite()) {
            return Err(ConstitutiveError::InvalidProfile(format!(
                "sigma/tau not positive finite at s = {s:e} (got {v})"
            )));
        }
        sup = sup.max(v);
        samples.push((s, v));
    }
    if sup > sup_bound {
        return Err(ConstitutiveError::RatioUnbounded { sup, bound: sup_bound });
    }
    let p0 = samples[0].1;
    let slope = (samples[1].1.ln() - p0.ln()) / (samples[1].0.ln() - samples[0].0.ln());
    if p0 > degeneracy_tol || slope <= 0.0 {
        return Err(ConstitutiveError::NotDegenerate { limit: p0, tol: degeneracy_tol });
    }
    DegeneracyProfile::new(
        ProfileKind::Tabulated { samples },
        m,
        TailPolicy::AdditiveConstant { i_tail: 0.0 },
    )
}
