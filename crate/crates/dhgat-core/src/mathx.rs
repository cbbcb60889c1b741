//! Scalar math routed through `libm` so the crate builds without `std`
//! and produces bit-identical results on every platform.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

/// `e^x - 1`, accurate for small `x`.
#[inline]
pub fn exp_m1(x: f64) -> f64 {
    libm::expm1(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_std() {
        for &x in &[0.0, 1.0, -1.0, 0.5, 3.25, -7.5] {
            assert!((exp(x) - f64::exp(x)).abs() < 1e-15 * f64::exp(x).abs().max(1.0));
            assert!((abs(x) - f64::abs(x)).abs() == 0.0);
        }
        assert!((ln(2.0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(round(2.5), 3.0);
        assert_eq!(round(-2.5), -3.0);
    }
}
