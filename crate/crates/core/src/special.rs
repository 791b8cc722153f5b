//! Central and noncentral chi-square distribution functions and inverse
//! moments.
//!
//! Noncentral quantities use the Poisson mixture representation: a
//! noncentral chi-square with `nu` degrees of freedom and noncentrality
//! `delta2` is a central chi-square with `nu + 2R` degrees of freedom where
//! `R ~ Poisson(delta2 / 2)`.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

/// Poisson tail mass left out of every mixture series.
pub const DEFAULT_TAIL: f64 = 1e-12;

/// Central chi-square CDF with real degrees of freedom `nu > 0`.
pub fn chisq_cdf(x: f64, nu: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    gamma_lr(0.5 * nu, 0.5 * x)
}

/// Upper-`alpha` quantile of the central chi-square with `q` degrees of freedom.
pub fn chisq_upper_quantile(alpha: f64, q: usize) -> Result<f64> {
    check_alpha(alpha)?;
    let dist = ChiSquared::new(q as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(dist.inverse_cdf(1.0 - alpha))
}

/// Upper-`alpha` quantile of `F(d1, d2)`.
pub fn f_upper_quantile(alpha: f64, d1: usize, d2: usize) -> Result<f64> {
    check_alpha(alpha)?;
    let dist = FisherSnedecor::new(d1 as f64, d2 as f64)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(dist.inverse_cdf(1.0 - alpha))
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Poisson(`mean`) probabilities `first..first + weights.len()` covering all
/// but `tail` of the mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonWindow {
    pub first: usize,
    pub weights: Vec<f64>,
}

impl PoissonWindow {
    pub fn new(mean: f64, tail: f64) -> Self {
        assert!(mean >= 0.0 && mean.is_finite(), "poisson mean must be finite and >= 0");
        if mean == 0.0 {
            return PoissonWindow {
                first: 0,
                weights: vec![1.0],
            };
        }
        let ln_mean = mean.ln();
        let weight = |r: usize| (-mean + r as f64 * ln_mean - ln_gamma(r as f64 + 1.0)).exp();
        let mode = mean.floor() as usize;
        let half = 0.5 * tail;

        // Weights fall geometrically away from the mode, with ratio below
        // `rho`, so the remaining mass beyond a point is at most w*rho/(1-rho).
        let mut upper = Vec::new();
        let mut r = mode;
        loop {
            let w = weight(r);
            upper.push(w);
            let rho = mean / (r as f64 + 1.0);
            if rho < 1.0 && w * rho / (1.0 - rho) < half {
                break;
            }
            r += 1;
        }
        let mut lower = Vec::new();
        let mut r = mode;
        while r > 0 {
            let rho = r as f64 / mean;
            let w_here = if lower.is_empty() { upper[0] } else { *lower.last().unwrap() };
            if rho < 1.0 && w_here * rho / (1.0 - rho) < half {
                break;
            }
            r -= 1;
            lower.push(weight(r));
        }
        let first = mode - lower.len();
        lower.reverse();
        lower.extend(upper);
        PoissonWindow {
            first,
            weights: lower,
        }
    }

    /// `sum_r P(R = r) f(r)` over the window.
    pub fn expect(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * f(self.first + i))
            .sum()
    }
}

fn check_noncentral(nu: usize, delta2: f64) -> Result<()> {
    if nu == 0 {
        return Err(Error::InvalidInput("degrees of freedom must be >= 1".into()));
    }
    if !(delta2 >= 0.0) || !delta2.is_finite() {
        return Err(Error::InvalidInput(format!("noncentrality must be >= 0, got {delta2}")));
    }
    Ok(())
}

/// CDF at `x` of the chi-square with `nu` degrees of freedom and
/// noncentrality `delta2`.
pub fn noncentral_chisq_cdf(x: f64, nu: usize, delta2: f64) -> Result<f64> {
    noncentral_chisq_cdf_tol(x, nu, delta2, DEFAULT_TAIL)
}

pub fn noncentral_chisq_cdf_tol(x: f64, nu: usize, delta2: f64, tail: f64) -> Result<f64> {
    check_noncentral(nu, delta2)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    let window = PoissonWindow::new(0.5 * delta2, tail);
    let v = window.expect(|r| chisq_cdf(x, (nu + 2 * r) as f64));
    Ok(v.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvPower {
    /// `E[chi^-2]`
    Two,
    /// `E[chi^-4]`
    Four,
}

impl InvPower {
    fn shift(self) -> usize {
        match self {
            InvPower::Two => 2,
            InvPower::Four => 4,
        }
    }
}

/// `E[chi^-2]` or `E[chi^-4]` of a chi-square with `nu_base + s` degrees of
/// freedom and noncentrality `delta2`.
///
/// With `truncation = Some(k)` the expectation is restricted to the event
/// `chi^2 <= k`.
pub fn inv_moment(
    nu_base: usize,
    s: usize,
    power: InvPower,
    delta2: f64,
    truncation: Option<f64>,
) -> Result<f64> {
    inv_moment_tol(nu_base, s, power, delta2, truncation, DEFAULT_TAIL)
}

pub fn inv_moment_tol(
    nu_base: usize,
    s: usize,
    power: InvPower,
    delta2: f64,
    truncation: Option<f64>,
    tail: f64,
) -> Result<f64> {
    let nu = nu_base + s;
    check_noncentral(nu, delta2)?;
    if nu <= power.shift() {
        return Err(Error::DivergentMoment {
            degrees: nu as u32,
            power: power.shift() as u32,
        });
    }
    let window = PoissonWindow::new(0.5 * delta2, tail);
    let value = window.expect(|r| {
        let a = (nu + 2 * r - 2) as f64;
        match power {
            InvPower::Two => {
                let h = truncation.map_or(1.0, |k| chisq_cdf(k, a));
                h / a
            }
            InvPower::Four => {
                let b = (nu + 2 * r - 4) as f64;
                let h = truncation.map_or(1.0, |k| chisq_cdf(k, b));
                h / (a * b)
            }
        }
    });
    Ok(value)
}

/// `E[(1 - k chi^-2)^e I(chi^2 <= k)]` for `e` = 1 (`squared = false`) or 2,
/// with `nu_base + s` degrees of freedom.
pub fn truncated_shrink_moment(
    nu_base: usize,
    s: usize,
    k: f64,
    delta2: f64,
    squared: bool,
) -> Result<f64> {
    if k <= 0.0 {
        return Ok(0.0);
    }
    let h = noncentral_chisq_cdf(k, nu_base + s, delta2)?;
    let m2 = inv_moment(nu_base, s, InvPower::Two, delta2, Some(k))?;
    if squared {
        let m4 = inv_moment(nu_base, s, InvPower::Four, delta2, Some(k))?;
        Ok(h - 2.0 * k * m2 + k * k * m4)
    } else {
        Ok(h - k * m2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{ChiSquared as ChiSq, Distribution, StandardNormal};

    #[test]
    fn central_two_df_closed_form() {
        for x in [0.1, 1.0, 2.0, 7.5] {
            assert_abs_diff_eq!(chisq_cdf(x, 2.0), 1.0 - (-x / 2.0).exp(), epsilon = 1e-14);
        }
        assert_abs_diff_eq!(
            noncentral_chisq_cdf(2.0, 2, 0.0).unwrap(),
            1.0 - (-1.0f64).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn quantile_round_trip() {
        let c = chisq_upper_quantile(0.05, 3).unwrap();
        assert_abs_diff_eq!(c, 7.814727903251178, epsilon = 1e-8);
        assert_abs_diff_eq!(1.0 - chisq_cdf(c, 3.0), 0.05, epsilon = 1e-10);
        assert!(chisq_upper_quantile(0.0, 3).is_err());
    }

    #[test]
    fn poisson_window_mass() {
        for mean in [0.5, 1.0, 3.0, 25.0, 5000.0] {
            let w = PoissonWindow::new(mean, 1e-12);
            let total: f64 = w.weights.iter().sum();
            assert!((1.0 - total).abs() < 1e-11, "mean {mean}: {total}");
        }
        let w = PoissonWindow::new(5000.0, 1e-12);
        assert!(w.first > 4000 && w.weights.len() < 2000);
    }

    #[test]
    fn decreasing_in_noncentrality() {
        for nu in [1, 3, 8] {
            for x in [0.5, 3.0, 12.0] {
                let a = noncentral_chisq_cdf(x, nu, 0.0).unwrap();
                let b = noncentral_chisq_cdf(x, nu, 5.0).unwrap();
                let c = noncentral_chisq_cdf(x, nu, 20.0).unwrap();
                assert!(a >= b && b >= c);
            }
        }
    }

    #[test]
    fn truncation_is_stable() {
        for (nu, d) in [(3, 2.0), (5, 10.0), (7, 100.0)] {
            let a = noncentral_chisq_cdf_tol(6.0, nu, d, 1e-12).unwrap();
            let b = noncentral_chisq_cdf_tol(6.0, nu, d, 1e-15).unwrap();
            assert!((a - b).abs() < 1e-10);
            let a = inv_moment_tol(nu, 2, InvPower::Four, d, Some(3.0), 1e-12).unwrap();
            let b = inv_moment_tol(nu, 2, InvPower::Four, d, Some(3.0), 1e-15).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn inverse_moment_closed_forms() {
        assert_abs_diff_eq!(
            inv_moment(3, 2, InvPower::Two, 0.0, None).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            inv_moment(4, 2, InvPower::Four, 0.0, None).unwrap(),
            1.0 / 8.0,
            epsilon = 1e-14
        );
        assert_eq!(
            inv_moment(1, 1, InvPower::Two, 1.0, None),
            Err(Error::DivergentMoment { degrees: 2, power: 2 })
        );
        assert!(inv_moment(2, 2, InvPower::Four, 1.0, None).is_err());
    }

    #[test]
    fn truncated_moments_vanish_for_empty_event() {
        assert_eq!(truncated_shrink_moment(3, 2, 0.0, 1.0, true).unwrap(), 0.0);
        let tiny = truncated_shrink_moment(3, 2, 1e-8, 1.0, false).unwrap();
        assert!(tiny.abs() < 1e-9);
    }

    #[test]
    fn squared_truncated_moment_matches_quadrature() {
        // adaptive quadrature of (1 - k/x)^2 f(x) over [0, k], nu = 5, delta2 = 3, k = 2.5
        let v = truncated_shrink_moment(3, 2, 2.5, 3.0, true).unwrap();
        assert_abs_diff_eq!(v, 0.29128978192000904, epsilon = 1e-9);
        let v = truncated_shrink_moment(3, 2, 2.5, 3.0, false).unwrap();
        assert_abs_diff_eq!(v, -0.06258516063355567, epsilon = 1e-9);
    }

    fn noncentral_draw(rng: &mut ChaCha8Rng, nu: usize, delta2: f64) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let head = (z + delta2.sqrt()).powi(2);
        if nu > 1 {
            head + ChiSq::new((nu - 1) as f64).unwrap().sample(rng)
        } else {
            head
        }
    }

    #[test]
    fn sampling_oracle_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 200_000;
        let (nu, d, x) = (5, 3.0, 6.0);
        let mut hits = 0usize;
        let mut inv = Vec::with_capacity(draws);
        let mut trunc = 0.0;
        let mut trunc_sq = 0.0;
        let k = 2.5;
        for _ in 0..draws {
            let v = noncentral_draw(&mut rng, nu, d);
            if v <= x {
                hits += 1;
            }
            inv.push(1.0 / v);
            let t = if v <= k { 1.0 - k / v } else { 0.0 };
            trunc += t;
            trunc_sq += t * t;
        }
        let p = hits as f64 / draws as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((noncentral_chisq_cdf(x, nu, d).unwrap() - p).abs() < 4.0 * se);
        let mean = inv.iter().sum::<f64>() / draws as f64;
        let var = inv.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let exact = inv_moment(3, 2, InvPower::Two, d, None).unwrap();
        assert!((exact - mean).abs() < 4.0 * (var / draws as f64).sqrt());
        let exact = truncated_shrink_moment(3, 2, k, d, false).unwrap();
        let mean = trunc / draws as f64;
        let se = ((trunc_sq / draws as f64 - mean * mean) / draws as f64).sqrt();
        assert!((exact - mean).abs() < 4.0 * se, "{exact} vs {mean}");
    }
}
