//! The constitutive bundle: material functions derived from a degeneracy
//! profile and an exponent `Lambda`.
//!
//! With `I(s) = int_s^oo dt/(t P(t))` the construction is
//!
//! ```text
//! H(s) = [Lambda I(s)]^(-1/Lambda)          density transform
//! F(s) = H(s)^(Lambda+1) / s                modified diffusivity
//! h(s) = F(s) / P(s)                        time weight, H' = h
//! G(s) = int_0^s sqrt(F'(t)) dt             gradient transform
//! ```
//!
//! and the wave exponent is `lambda = 2/(Lambda + 1)`, in `(0, 2)`. All
//! evaluators run through `ln P` and `ln I` so rapidly degenerating profiles
//! stay representable; plain-value queries underflow to zero gracefully below
//! the documented range floor `s_min`.
//!
//! Admissibility gates the construction: with `A = sup P*I` over the density
//! range, monotonicity of `F` needs `(Lambda+1)/Lambda > A`, which also makes
//! `F'` positive and `G` well defined. `analyze_profile` estimates `A`, the
//! zero-density limit `a`, the derivative bound `B = sup s I P'`, and the
//! gradient-compatibility constant `C1 = sup F/(G G')`.

use super::profile::{ConstitutiveError, DegeneracyProfile};
use crate::quad::{self, CumulativeIntegral};
use serde::Serialize;

/// Estimated admissibility constants for one `(profile, Lambda)` pair.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    /// Exponent under test.
    pub big_lambda: f64,
    /// Wave exponent `2/(Lambda+1)`.
    pub small_lambda: f64,
    /// `A = sup P*I` over the density range (includes the zero-density limit).
    pub a_sup: f64,
    /// Limit of `P*I` at zero density.
    pub a_limit: f64,
    /// Uncertainty band of the extrapolated limit.
    pub a_limit_band: f64,
    /// `B = sup s I P'`; absent for kinds without a derivative formula.
    pub b_sup: Option<f64>,
    /// Zero-density limit of `s I P'`, with its band.
    pub b_limit: Option<f64>,
    pub b_limit_band: Option<f64>,
    /// Least admissible comparison constant, taken equal to `B`.
    pub mu: Option<f64>,
    /// `C1 = sup F/(G G')`; NaN when `Lambda` is inadmissible.
    pub c1: f64,
    /// Zero-range limit of `F/(G G')`, with its band (NaN when inadmissible).
    pub c1_limit: f64,
    pub c1_limit_band: f64,
    /// Upper end of the admissible `Lambda` range (`inf` when `A <= 1`).
    pub lambda_max: f64,
    /// Whether `(Lambda+1)/Lambda > A` holds.
    pub lambda_ok: bool,
    /// Floor below which log-domain evaluation of the derived functions would
    /// leave f64 range; probe grids start here.
    pub s_min: f64,
    pub passed: bool,
}

const LOG_RANGE: f64 = 650.0;
const STAT_GRID: usize = 384;
const C1_SLACK: f64 = 1.0 + 1e-6;

/// Estimate the admissibility constants of `profile` for exponent
/// `big_lambda`. Fails with `AUnbounded` when `P*I` grows without bound
/// toward zero density; an inadmissible `Lambda` is reported, not an error.
pub fn analyze_profile(
    profile: &DegeneracyProfile,
    big_lambda: f64,
) -> Result<AdmissibilityReport, ConstitutiveError> {
    if profile.is_calibration() {
        return Err(ConstitutiveError::InvalidProfile(
            "calibration profiles are for solver validation only".into(),
        ));
    }
    if !(big_lambda.is_finite() && (1e-3..=1e3).contains(&big_lambda)) {
        return Err(ConstitutiveError::InvalidProfile(format!(
            "Lambda must lie in [1e-3, 1e3], got {big_lambda}"
        )));
    }

    let s_min = find_s_min(profile, big_lambda)?;
    let lo = profile.probe_floor();
    let hi = profile.probe_ceiling();

    // sup of P*I over a log grid, polished around the grid argmax
    let pi = |s: f64| profile.p_times_i(s).unwrap_or(f64::NAN);
    let a_grid = sup_on_log_grid(&pi, lo, hi)?;

    // limit at zero on a geometric sequence; detect divergence before trusting
    // the extrapolation
    let seq = limit_sequence(&pi, profile.m() * 1e-2, lo)?;
    let (a_limit, a_limit_band) = quad::extrapolate_limit(&seq);
    let increasing = seq.windows(2).all(|w| w[1] > w[0] * (1.0 + 1e-12));
    if increasing && seq.last().unwrap() > &(1.5 * seq[0]) && a_limit_band > 0.05 * a_limit.abs() {
        return Err(ConstitutiveError::AUnbounded { first: seq[0], last: *seq.last().unwrap() });
    }
    let a_sup = a_grid.max(a_limit);

    let (b_sup, b_limit, b_limit_band) = if profile.differentiable() {
        let sidp = |s: f64| profile.s_i_dp(s).unwrap_or(f64::NAN);
        let b_grid = sup_on_log_grid(&sidp, lo, hi)?;
        let bseq = limit_sequence(&sidp, profile.m() * 1e-2, lo)?;
        let (bl, bb) = quad::extrapolate_limit(&bseq);
        (Some(b_grid.max(bl)), Some(bl), Some(bb))
    } else {
        (None, None, None)
    };

    let ratio = (big_lambda + 1.0) / big_lambda;
    let lambda_ok = ratio > a_sup;
    let lambda_max = if a_sup > 1.0 { 1.0 / (a_sup - 1.0) } else { f64::INFINITY };

    let (c1, c1_limit, c1_limit_band) = if lambda_ok {
        let core = BundleCore::construct(profile, big_lambda, s_min)?;
        let f = |s: f64| core.c1_ratio(profile, s);
        let c1_lo = s_min.max(lo);
        let grid = quad::log_grid(c1_lo, hi, 24);
        let sup = grid.iter().map(|&s| f(s)).fold(0.0f64, f64::max);
        let cseq = limit_sequence(&f, (c1_lo * 64.0).min(hi * 0.5), c1_lo)?;
        let (cl, cb) = quad::extrapolate_limit(&cseq);
        (sup * C1_SLACK, cl, cb)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };

    Ok(AdmissibilityReport {
        big_lambda,
        small_lambda: 2.0 / (big_lambda + 1.0),
        a_sup,
        a_limit,
        a_limit_band,
        b_sup,
        b_limit,
        b_limit_band,
        mu: b_sup,
        c1,
        c1_limit,
        c1_limit_band,
        lambda_max,
        lambda_ok,
        s_min,
        passed: lambda_ok && a_sup.is_finite(),
    })
}

/// Everything the evaluators need besides the profile itself.
#[derive(Debug, Clone)]
struct BundleCore {
    big_lambda: f64,
    ln_bc: f64,
    g_table: CumulativeIntegral,
}

impl BundleCore {
    fn construct(
        profile: &DegeneracyProfile,
        big_lambda: f64,
        _s_min: f64,
    ) -> Result<Self, ConstitutiveError> {
        let ln_bc = -(1.0 / big_lambda + 1.0) * big_lambda.ln();
        let ratio = (big_lambda + 1.0) / big_lambda;
        let m = profile.m();

        // F' must keep one sign on the range before G can be integrated. The
        // table floor truncates int_0^s sqrt(F'); 18 decades below M the lost
        // mass is far below every downstream tolerance. Zero-tail profiles
        // have I -> 0 at M, which blows F' up against the ceiling; knots are
        // graded toward it so no single panel straddles the boundary layer.
        let ceiling = profile.probe_ceiling();
        let mut knots = quad::log_grid(m * 1e-18, ceiling, 8);
        if ceiling < m {
            knots.retain(|&x| x <= m * 0.89);
            for k in 1..=8 {
                let x = m * (1.0 - 10f64.powi(-k));
                if x < ceiling {
                    knots.push(x);
                }
            }
            knots.push(ceiling);
        }
        for &s in knots.iter().skip(knots.len() / 2) {
            let margin = ratio - profile.p_times_i(s)?;
            if margin <= 0.0 {
                return Err(ConstitutiveError::NonMonotoneF { s });
            }
        }

        let integrand = |s: f64| g_prime_at(profile, big_lambda, ln_bc, s);
        let g_table = CumulativeIntegral::build(&integrand, knots, 1e-11)?;
        Ok(Self { big_lambda, ln_bc, g_table })
    }

    fn log_i(&self, profile: &DegeneracyProfile, s: f64) -> f64 {
        profile.log_i(s).unwrap_or(f64::NAN)
    }

    fn log_big_h(&self, profile: &DegeneracyProfile, s: f64) -> f64 {
        -(self.big_lambda.ln() + self.log_i(profile, s)) / self.big_lambda
    }

    fn log_f(&self, profile: &DegeneracyProfile, s: f64) -> f64 {
        let l = self.big_lambda;
        -((l + 1.0) / l) * (l.ln() + self.log_i(profile, s)) - s.ln()
    }

    fn log_f_prime(&self, profile: &DegeneracyProfile, s: f64) -> f64 {
        log_f_prime_at(profile, self.big_lambda, self.ln_bc, s)
    }

    fn g_prime_value(&self, profile: &DegeneracyProfile, s: f64) -> f64 {
        g_prime_at(profile, self.big_lambda, self.ln_bc, s)
    }

    fn g_value(&self, profile: &DegeneracyProfile, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let integrand = |t: f64| self.g_prime_value(profile, t);
        self.g_table.eval(&integrand, s)
    }

    fn c1_ratio(&self, profile: &DegeneracyProfile, s: f64) -> f64 {
        let g = self.g_value(profile, s);
        let log_gp = 0.5 * self.log_f_prime(profile, s);
        (self.log_f(profile, s) - log_gp - g.ln()).exp()
    }
}

/// `ln F'(s)` with `F' = Bc s^-2 I^(-1/L-2) P^-1 ((L+1)/L - P I)` and
/// `Bc = Lambda^(-1/Lambda-1)`. The last factor is the admissibility margin;
/// it is clamped at zero so an inadmissible probe yields `-inf`, not NaN.
fn log_f_prime_at(profile: &DegeneracyProfile, l: f64, ln_bc: f64, s: f64) -> f64 {
    let pi = profile.p_times_i(s).unwrap_or(f64::NAN);
    let log_i = pi.ln() - profile.log_p(s);
    let margin = (l + 1.0) / l - pi;
    ln_bc - 2.0 * s.ln() + (-1.0 / l - 2.0) * log_i - profile.log_p(s) + margin.max(0.0).ln()
}

/// `G'(s) = sqrt(F'(s))`, underflowing to zero instead of producing
/// subnormal noise deep below the range floor.
fn g_prime_at(profile: &DegeneracyProfile, l: f64, ln_bc: f64, s: f64) -> f64 {
    let lg = 0.5 * log_f_prime_at(profile, l, ln_bc, s);
    if lg < -745.0 {
        0.0
    } else {
        lg.exp()
    }
}

/// A validated constitutive bundle for an admissible `(profile, Lambda)` pair.
#[derive(Debug, Clone)]
pub struct ConstitutiveBundle {
    profile: DegeneracyProfile,
    core: BundleCore,
    small_lambda: f64,
    report: AdmissibilityReport,
}

/// Build the bundle, gating on admissibility and validating the derived
/// functions on a log-spaced probe grid: `F` strictly increasing, the
/// identity `[s F(s)]^(lambda/2) = H(s)` within 1e-8, `G <= sqrt(s F)`, and
/// the gradient-compatibility bound `F <= C1 G G'`.
pub fn build_bundle(
    profile: DegeneracyProfile,
    big_lambda: f64,
) -> Result<ConstitutiveBundle, ConstitutiveError> {
    let report = analyze_profile(&profile, big_lambda)?;
    if !report.lambda_ok {
        return Err(ConstitutiveError::InadmissibleLambda {
            lambda: big_lambda,
            a_sup: report.a_sup,
            lambda_max: report.lambda_max,
        });
    }
    let core = BundleCore::construct(&profile, big_lambda, report.s_min)?;
    let bundle = ConstitutiveBundle {
        small_lambda: 2.0 / (big_lambda + 1.0),
        core,
        report,
        profile,
    };
    bundle.validate_on_probe_grid()?;
    Ok(bundle)
}

impl ConstitutiveBundle {
    pub fn profile(&self) -> &DegeneracyProfile {
        &self.profile
    }

    pub fn report(&self) -> &AdmissibilityReport {
        &self.report
    }

    pub fn big_lambda(&self) -> f64 {
        self.core.big_lambda
    }

    /// Wave exponent `lambda = 2/(Lambda+1)`.
    pub fn small_lambda(&self) -> f64 {
        self.small_lambda
    }

    pub fn c1(&self) -> f64 {
        self.report.c1
    }

    pub fn s_min(&self) -> f64 {
        self.report.s_min
    }

    pub fn m(&self) -> f64 {
        self.profile.m()
    }

    pub fn log_i(&self, s: f64) -> f64 {
        self.core.log_i(&self.profile, s)
    }

    pub fn log_big_h(&self, s: f64) -> f64 {
        self.core.log_big_h(&self.profile, s)
    }

    /// Density transform `H`; zero at and below zero density.
    pub fn big_h(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        self.log_big_h(s).exp()
    }

    pub fn log_f(&self, s: f64) -> f64 {
        self.core.log_f(&self.profile, s)
    }

    /// Modified diffusivity `F`; zero at and below zero density.
    pub fn f(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        self.log_f(s).exp()
    }

    /// Time weight `h = F/P`.
    pub fn small_h(&self, s: f64) -> f64 {
        debug_assert!(s > 0.0);
        (self.log_f(s) - self.profile.log_p(s)).exp()
    }

    pub fn f_prime(&self, s: f64) -> f64 {
        self.core.log_f_prime(&self.profile, s).exp()
    }

    pub fn g_prime(&self, s: f64) -> f64 {
        self.core.g_prime_value(&self.profile, s)
    }

    /// Gradient transform `G(s) = int_0^s sqrt(F')`; zero at and below zero
    /// density, clamped to `G(M)` above the range.
    pub fn g(&self, s: f64) -> f64 {
        self.core.g_value(&self.profile, s)
    }

    pub fn big_h_prime(&self, s: f64) -> f64 {
        let l = self.core.big_lambda;
        (self.core.ln_bc + (-1.0 / l - 1.0) * self.log_i(s) - s.ln() - self.profile.log_p(s)).exp()
    }

    /// Diffusion coefficient of the regularized equation,
    /// `(F(u) + eps)/h(u) = P(u) + eps/h(u)`. May overflow to `inf` for
    /// profiles whose time weight collapses faster than `eps`; the solver
    /// treats that as a step failure.
    pub fn coeff(&self, u: f64, eps: f64) -> f64 {
        debug_assert!(u > 0.0);
        let log_h = self.log_f(u) - self.profile.log_p(u);
        self.profile.p(u) + eps * (-log_h).exp()
    }

    /// `int_a^b P(t)^(-1/2) dt`, the increment of the auxiliary transform with
    /// unit-speed comparison structure (`d/ds int P^{-1/2} = sqrt(h/F)`).
    pub fn htilde_delta(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let f = |t: f64| (-0.5 * self.profile.log_p(t)).exp();
        sign * quad::integrate(&f, lo, hi, 1e-10).unwrap_or(f64::NAN)
    }

    /// Deviation `|[s F(s)]^(lambda/2) / H(s) - 1|` of the exactness identity,
    /// evaluated in log-domain so the full density range is checkable.
    pub fn a2_deviation(&self, s: f64) -> f64 {
        let lhs = 0.5 * self.small_lambda * (s.ln() + self.log_f(s));
        ((lhs - self.log_big_h(s)).exp() - 1.0).abs()
    }

    pub fn max_a2_deviation(&self, samples: &[f64]) -> f64 {
        samples.iter().map(|&s| self.a2_deviation(s)).fold(0.0, f64::max)
    }

    /// Pointwise ratio `H'(s)/G'(s)`; diverges when `P*I` approaches the
    /// admissibility bound, reported as `DegenerateRatio`.
    pub fn ratio_hg(&self, s: f64) -> Result<f64, ConstitutiveError> {
        let l = self.core.big_lambda;
        let pi = self.profile.p_times_i(s)?;
        let margin = (l + 1.0) / l - pi;
        if margin <= 1e-10 * (l + 1.0) / l {
            return Err(ConstitutiveError::DegenerateRatio { s, margin });
        }
        let log_ratio = -0.5
            * (self.core.ln_bc + self.log_i(s) / l + self.profile.log_p(s) + margin.ln());
        Ok(log_ratio.exp())
    }

    /// Default probe grid: log-spaced from the range floor to the ceiling.
    pub fn probe_grid(&self, n_per_decade: usize) -> Vec<f64> {
        let lo = self.report.s_min.max(self.profile.probe_floor());
        quad::log_grid(lo, self.profile.probe_ceiling(), n_per_decade)
    }

    fn validate_on_probe_grid(&self) -> Result<(), ConstitutiveError> {
        let grid = self.probe_grid(12);
        let ratio = (self.core.big_lambda + 1.0) / self.core.big_lambda;
        for &s in &grid {
            let pi = self.profile.p_times_i(s)?;
            if ratio - pi <= 0.0 {
                return Err(ConstitutiveError::NonMonotoneF { s });
            }
            let dev = self.a2_deviation(s);
            if !(dev <= 1e-8) {
                return Err(ConstitutiveError::InvalidProfile(format!(
                    "exactness identity off by {dev:e} at s = {s:e}"
                )));
            }
            let g = self.g(s);
            let sf = (0.5 * (s.ln() + self.log_f(s))).exp();
            if g > sf * (1.0 + 1e-9) {
                return Err(ConstitutiveError::InvalidProfile(format!(
                    "G(s) = {g:e} exceeds sqrt(s F(s)) = {sf:e} at s = {s:e}"
                )));
            }
            let c1_bound = self.report.c1 * g * self.g_prime(s) * (1.0 + 1e-9);
            if self.f(s) > c1_bound {
                return Err(ConstitutiveError::InvalidProfile(format!(
                    "F exceeds C1 G G' at s = {s:e}"
                )));
            }
        }
        for w in grid.windows(2) {
            if !(self.big_h(w[1]) > self.big_h(w[0])) || !(self.g(w[1]) > self.g(w[0])) {
                return Err(ConstitutiveError::InvalidProfile(format!(
                    "H or G not strictly increasing near s = {:e}",
                    w[0]
                )));
            }
            if !(self.f(w[1]) > self.f(w[0])) {
                return Err(ConstitutiveError::NonMonotoneF { s: w[0] });
            }
        }
        Ok(())
    }
}

fn find_s_min(profile: &DegeneracyProfile, big_lambda: f64) -> Result<f64, ConstitutiveError> {
    let m = profile.m();
    let in_range = |s: f64| -> bool {
        let Ok(pi) = profile.p_times_i(s) else { return false };
        if !(pi > 0.0) {
            return false;
        }
        let log_i = pi.ln() - profile.log_p(s);
        let log_h = (big_lambda.ln() + log_i) / big_lambda;
        let log_f = ((big_lambda + 1.0) / big_lambda) * (big_lambda.ln() + log_i) + s.ln();
        // G' carries the steepest exponent: (1/(2L) + 1) log I plus half of log P
        let log_gp = (0.5 / big_lambda + 1.0) * log_i + 0.5 * profile.log_p(s).abs() + s.ln().abs();
        log_h.abs() < LOG_RANGE && log_f.abs() < LOG_RANGE && log_gp.abs() < LOG_RANGE
    };
    let floor = profile.probe_floor();
    if in_range(floor) {
        return Ok(floor);
    }
    let hi = m * 0.5;
    if !in_range(hi) {
        return Err(ConstitutiveError::InvalidProfile(
            "derived functions leave f64 range over the whole density interval".into(),
        ));
    }
    let (mut lo_ln, mut hi_ln) = (floor.ln(), hi.ln());
    for _ in 0..80 {
        let mid = 0.5 * (lo_ln + hi_ln);
        if in_range(mid.exp()) {
            hi_ln = mid;
        } else {
            lo_ln = mid;
        }
    }
    Ok(hi_ln.exp())
}

fn sup_on_log_grid(
    f: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
) -> Result<f64, ConstitutiveError> {
    let n_per_decade = (STAT_GRID as f64 / (hi / lo).log10().max(1.0)).ceil() as usize;
    let grid = quad::log_grid(lo, hi, n_per_decade.clamp(4, 64));
    let mut best = f64::NEG_INFINITY;
    let mut best_i = 0;
    for (i, &s) in grid.iter().enumerate() {
        let v = f(s);
        if !v.is_finite() {
            return Err(ConstitutiveError::InvalidProfile(format!(
                "P*I statistic non-finite at s = {s:e}"
            )));
        }
        if v > best {
            best = v;
            best_i = i;
        }
    }
    // golden-section polish between the argmax neighbors, in log abscissa
    let a = grid[best_i.saturating_sub(1)].ln();
    let b = grid[(best_i + 1).min(grid.len() - 1)].ln();
    let (mut lo_ln, mut hi_ln) = (a, b);
    let phi = 0.618_033_988_749_894_9;
    for _ in 0..48 {
        let d = hi_ln - lo_ln;
        let x1 = hi_ln - phi * d;
        let x2 = lo_ln + phi * d;
        if f(x1.exp()) >= f(x2.exp()) {
            hi_ln = x2;
        } else {
            lo_ln = x1;
        }
    }
    Ok(best.max(f((0.5 * (lo_ln + hi_ln)).exp())))
}

fn limit_sequence(
    f: &dyn Fn(f64) -> f64,
    s_start: f64,
    floor: f64,
) -> Result<Vec<f64>, ConstitutiveError> {
    let start = s_start.max(floor * 2.0);
    let mut vals = Vec::new();
    let mut s = start;
    while s >= floor * (1.0 - 1e-12) && vals.len() < 60 {
        let v = f(s);
        if !v.is_finite() {
            return Err(ConstitutiveError::InvalidProfile(format!(
                "limit probe non-finite at s = {s:e}"
            )));
        }
        vals.push(v);
        s *= 0.5;
    }
    Ok(vals)
}
