//! Exact gamma values at integer and half-integer arguments, and the derived
//! sphere and Sobolev constants used by the shrinking-radii machinery.
//!
//! Dimensions stay in single digits here, so the gamma function is only ever
//! needed at `N` or `N/2` with integer `N`; both have closed forms through
//! factorials and no general-purpose implementation is required.

/// Gamma(k) for a positive integer k, i.e. (k-1)!.
pub fn gamma_int(k: u32) -> f64 {
    assert!(k >= 1);
    (1..k).fold(1.0, |acc, i| acc * i as f64)
}

/// Gamma(n/2) for a positive integer n.
///
/// Even n reduces to a factorial; odd n uses
/// Gamma(k + 1/2) = (2k)! sqrt(pi) / (4^k k!).
pub fn gamma_half(n: u32) -> f64 {
    assert!(n >= 1);
    if n % 2 == 0 {
        gamma_int(n / 2)
    } else {
        let k = (n - 1) / 2;
        let mut num = std::f64::consts::PI.sqrt();
        // multiply (k - 1/2)(k - 3/2)...(1/2) onto sqrt(pi)
        for i in 0..k {
            num *= 0.5 + i as f64;
        }
        num
    }
}

/// Surface area of the unit sphere in R^N: 2 pi^{N/2} / Gamma(N/2).
pub fn unit_sphere_area(n: u32) -> f64 {
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma_half(n)
}

/// Sharp constant S in the critical embedding
/// `||psi||^2_{L^{2N/(N-2)}} <= S ||grad psi||^2_{L^2}` on R^N, N >= 3:
/// `S = [Gamma(N)/Gamma(N/2)]^{2/N} / (N (N-2) pi)`.
pub fn sobolev_constant(n: u32) -> f64 {
    assert!(n >= 3);
    let ratio = gamma_int(n) / gamma_half(n);
    ratio.powf(2.0 / n as f64) / (n as f64 * (n - 2) as f64 * std::f64::consts::PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gamma_values_match_closed_forms() {
        assert_eq!(gamma_int(1), 1.0);
        assert_eq!(gamma_int(5), 24.0);
        assert!((gamma_half(1) - PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half(3) - 0.5 * PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half(5) - 0.75 * PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(8), 6.0);
    }

    #[test]
    fn sphere_areas_match_known_dimensions() {
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-12);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-12);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn sobolev_constant_matches_dimension_three_value() {
        // known closed form in three dimensions: 1/S = 3 (pi/2)^{4/3}
        let s = sobolev_constant(3);
        let inv = 3.0 * (PI / 2.0).powf(4.0 / 3.0);
        assert!((s * inv - 1.0).abs() < 1e-12, "S = {s}, 1/S = {}", 1.0 / s);
    }

    #[test]
    fn sobolev_constant_decreases_with_dimension() {
        let mut prev = sobolev_constant(3);
        for n in 4..=8 {
            let s = sobolev_constant(n);
            assert!(s < prev, "S({n}) = {s} not below S({}) = {prev}", n - 1);
            prev = s;
        }
    }
}
