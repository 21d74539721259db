//! Adaptive quadrature and limit extrapolation.
//!
//! Everything downstream needs integrals of smooth positive integrands that
//! are steep near one endpoint (tail integrals of `1/(s P(s))`, cumulative
//! integrals of `G'`). A 15-point Gauss-Kronrod pair with recursive bisection
//! covers those; `integrate_decaying` pre-splits on a logarithmic scale so the
//! bisection starts near the steep end. `extrapolate_limit` turns samples on a
//! geometric grid into an endpoint limit with an uncertainty band.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not reach tolerance {rel_tol:e} on [{a:e}, {b:e}] (error estimate {err:e})")]
    DidNotConverge { a: f64, b: f64, rel_tol: f64, err: f64 },
    #[error("integrand returned a non-finite value near {at:e}")]
    NonFinite { at: f64 },
}

// 15-point Kronrod abscissae (positive half) with embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// One Gauss-Kronrod 15(7) panel. Returns the Kronrod value and the
/// |Kronrod - Gauss| error indicator, both scaled to the interval.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut res_g = fc * WG[3];
    let mut res_k = fc * WGK[7];
    for j in 0..3 {
        let x = h * XGK[2 * j + 1];
        let pair = f(c - x) + f(c + x);
        res_g += WG[j] * pair;
        res_k += WGK[2 * j + 1] * pair;
    }
    for j in 0..4 {
        let x = h * XGK[2 * j];
        let pair = f(c - x) + f(c + x);
        res_k += WGK[2 * j] * pair;
    }
    (res_k * h, (res_k - res_g).abs() * h)
}

const MAX_SPLITS: usize = 4000;

/// One panel in the adaptive queue, ordered by its error indicator so the
/// queue always refines where it hurts most.
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Adaptive integral of `f` over `[a, b]` to relative tolerance `rel_tol`.
///
/// Worst-panel-first refinement with a global error account. Termination is
/// guaranteed by three fences: panels narrower than a few ulps are never
/// split, the summed error indicator is compared against a floating noise
/// floor as well as the requested tolerance, and the total number of splits
/// is budgeted. Boundary-layer and endpoint-singular integrands settle into
/// graded panels instead of exploding the refinement tree.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    let (v0, e0) = gk15(f, a, b);
    if !v0.is_finite() {
        return Err(QuadError::NonFinite { at: 0.5 * (a + b) });
    }
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(Panel { a, b, value: v0, err: e0 });
    let (mut total, mut err_sum, mut mass) = (v0, e0, v0.abs());
    for _ in 0..MAX_SPLITS {
        let tol = (rel_tol * total.abs()).max(2e-15 * mass).max(1e-300);
        if err_sum <= tol {
            return Ok(resum(&heap));
        }
        let worst = heap.peek().unwrap();
        if (worst.b - worst.a) < f64::EPSILON * (worst.a.abs() + worst.b.abs()) * 4.0 {
            break;
        }
        let worst = heap.pop().unwrap();
        total -= worst.value;
        err_sum -= worst.err;
        mass -= worst.value.abs();
        let mid = 0.5 * (worst.a + worst.b);
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            let (v, e) = gk15(f, lo, hi);
            if !v.is_finite() {
                return Err(QuadError::NonFinite { at: 0.5 * (lo + hi) });
            }
            total += v;
            err_sum += e;
            mass += v.abs();
            heap.push(Panel { a: lo, b: hi, value: v, err: e });
        }
    }
    // ran out of budget, or the worst panel is a few ulps wide: accept if the
    // residual indicator is down in the rounding-noise regime
    let total = resum(&heap);
    if err_sum <= 1e-6 * total.abs().max(1e-3 * mass) {
        return Ok(total);
    }
    Err(QuadError::DidNotConverge { a, b, rel_tol, err: err_sum })
}

fn resum(heap: &std::collections::BinaryHeap<Panel>) -> f64 {
    heap.iter().map(|p| p.value).sum()
}

/// Integral over `[a, b]` of an integrand that is largest near `a` and decays
/// toward `b`, with `0 < a < b`. The interval is pre-split into panels
/// `[a, 2a], [2a, 4a], ...` so the adaptive pass resolves the steep end
/// without having to discover it by global bisection.
pub fn integrate_decaying<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<f64, QuadError> {
    if !(a > 0.0) || b <= a * 2.0 {
        return integrate(f, a, b, rel_tol);
    }
    let mut total = 0.0;
    let mut lo = a;
    while lo < b {
        let hi = (lo * 2.0).min(b);
        total += integrate(f, lo, hi, rel_tol)?;
        lo = hi;
    }
    Ok(total)
}

/// Cumulative integral of a fixed integrand over a knot grid.
///
/// `cum[i]` holds the integral from `knots[0]` to `knots[i]`; point queries add
/// one short Gauss-Kronrod panel from the bracketing knot. Queries below the
/// first knot return zero (the grids used here start at a floor far below any
/// resolvable contribution) and queries above the last knot clamp.
#[derive(Debug, Clone)]
pub struct CumulativeIntegral {
    knots: Vec<f64>,
    cum: Vec<f64>,
}

impl CumulativeIntegral {
    pub fn build<F: Fn(f64) -> f64>(f: &F, knots: Vec<f64>, rel_tol: f64) -> Result<Self, QuadError> {
        assert!(knots.len() >= 2, "need at least two knots");
        assert!(knots.windows(2).all(|w| w[0] < w[1]), "knots must increase");
        let mut cum = Vec::with_capacity(knots.len());
        cum.push(0.0);
        let mut acc = 0.0;
        for w in knots.windows(2) {
            acc += integrate(f, w[0], w[1], rel_tol)?;
            cum.push(acc);
        }
        Ok(Self { knots, cum })
    }

    pub fn eval<F: Fn(f64) -> f64>(&self, f: &F, s: f64) -> f64 {
        if s <= self.knots[0] {
            return 0.0;
        }
        let last = *self.knots.last().unwrap();
        if s >= last {
            return *self.cum.last().unwrap();
        }
        let i = match self.knots.binary_search_by(|k| k.partial_cmp(&s).unwrap()) {
            Ok(i) => return self.cum[i],
            Err(i) => i - 1,
        };
        // composite partial panel: a single rule misjudges integrands that
        // ramp over many orders of magnitude within one panel
        self.cum[i] + gk15_composite(f, self.knots[i], s, 8)
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }
}

/// Non-adaptive composite rule: `pieces` equal subintervals, one 15-point
/// evaluation each. For integrands known to be smooth at that resolution this
/// is as accurate as the adaptive driver at a fixed, predictable cost, which
/// matters when the integrand itself contains a quadrature.
pub fn gk15_composite<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, pieces: usize) -> f64 {
    debug_assert!(pieces >= 1 && b >= a);
    let h = (b - a) / pieces as f64;
    let mut acc = 0.0;
    for i in 0..pieces {
        acc += gk15(f, a + h * i as f64, a + h * (i + 1) as f64).0;
    }
    acc
}

/// Log-spaced grid from `lo` to `hi` inclusive with `per_decade` points per
/// decade (at least 2 points total).
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo);
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    let step = (hi.ln() - lo.ln()) / n as f64;
    let mut g: Vec<f64> = (0..=n).map(|i| (lo.ln() + step * i as f64).exp()).collect();
    g[0] = lo;
    *g.last_mut().unwrap() = hi;
    g
}

/// Limit of `f(s)` as `s -> 0` from samples `values[j] = f(s0 * q^-j)` on a
/// geometric grid with ratio `q > 1`. Richardson extrapolation on the last
/// three samples, assuming `f(s) = L + c s^alpha + o(s^alpha)`.
///
/// Returns `(limit, band)`; the band is a conservative uncertainty width. If
/// the samples do not look convergent, the band is widened instead of failing.
pub fn extrapolate_limit(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n >= 1);
    if n < 3 {
        return (values[n - 1], f64::INFINITY);
    }
    let (v0, v1, v2) = (values[n - 3], values[n - 2], values[n - 1]);
    let d1 = v1 - v0;
    let d2 = v2 - v1;
    let scale = v2.abs().max(1.0);
    if d2.abs() <= 1e-14 * scale {
        return (v2, d1.abs().max(1e-14 * scale));
    }
    let r = d1 / d2;
    if !(r > 1.02) {
        // not geometrically converging; report the last value with a wide band
        return (v2, (d1.abs() + d2.abs()) * 10.0);
    }
    let corr = d2 / (r - 1.0);
    (v2 + corr, corr.abs() + d2.abs() * 0.1 + 1e-14 * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk15_is_exact_on_low_degree_polynomials() {
        // degree <= 22 is integrated exactly by the 15-point Kronrod rule
        let f = |x: f64| 3.0 * x * x;
        let (v, e) = gk15(&f, 0.0, 2.0);
        assert!((v - 8.0).abs() < 1e-13, "got {v}");
        assert!(e < 1e-12);
    }

    #[test]
    fn adaptive_handles_steep_exponential() {
        // integral of exp(-1000 x) over [0, 1] = (1 - e^-1000)/1000
        let f = |x: f64| (-1000.0 * x).exp();
        let v = integrate(&f, 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 1e-3).abs() < 1e-13, "got {v}");
    }

    #[test]
    fn decaying_splitter_matches_closed_form_tail() {
        // integral of t^-2 over [s, 1] = 1/s - 1
        let s = 1e-6;
        let f = |t: f64| t.powi(-2);
        let v = integrate_decaying(&f, s, 1.0, 1e-11).unwrap();
        let exact = 1.0 / s - 1.0;
        assert!((v / exact - 1.0).abs() < 1e-10, "got {v} vs {exact}");
    }

    #[test]
    fn cumulative_integral_matches_point_queries() {
        let f = |x: f64| x.cos();
        let knots = log_grid(1e-4, 1.5, 8);
        let table = CumulativeIntegral::build(&f, knots, 1e-12).unwrap();
        for &s in &[2e-4, 0.037, 0.5, 1.2] {
            let got = table.eval(&f, s);
            let exact = s.sin() - 1e-4f64.sin();
            assert!((got - exact).abs() < 1e-12, "s={s}: {got} vs {exact}");
        }
    }

    #[test]
    fn limit_extrapolation_recovers_linear_correction() {
        // f(s) = 1 - s sampled at s = 0.1 * 2^-j
        let values: Vec<f64> = (0..12).map(|j| 1.0 - 0.1 * 0.5f64.powi(j)).collect();
        let (limit, band) = extrapolate_limit(&values);
        assert!((limit - 1.0).abs() < 1e-9, "limit {limit}");
        assert!(band < 1e-3, "band {band}");
    }

    #[test]
    fn limit_extrapolation_is_exact_on_constants() {
        let values = vec![0.5; 6];
        let (limit, band) = extrapolate_limit(&values);
        assert_eq!(limit, 0.5);
        assert!(band < 1e-12);
    }
}
