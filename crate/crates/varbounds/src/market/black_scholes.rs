//! Black-Scholes forward pricing and the implied-volatility inversion.

use crate::error::{Error, Result};
use crate::math::{brent, norm_cdf, norm_pdf};

/// Undiscounted forward call value E(S_T − K)₊ for lognormal S_T with
/// E S_T = `forward` and volatility `vol`.
pub fn bs_call_forward(forward: f64, strike: f64, vol: f64, maturity: f64) -> f64 {
    if strike <= 0.0 {
        return forward;
    }
    let stdev = vol * maturity.sqrt();
    if stdev <= 1e-14 {
        return (forward - strike).max(0.0);
    }
    let d1 = ((forward / strike).ln() + 0.5 * stdev * stdev) / stdev;
    let d2 = d1 - stdev;
    forward * norm_cdf(d1) - strike * norm_cdf(d2)
}

/// Derivative of the forward call value in vol.
pub fn bs_vega_forward(forward: f64, strike: f64, vol: f64, maturity: f64) -> f64 {
    if strike <= 0.0 {
        return 0.0;
    }
    let stdev = vol * maturity.sqrt();
    if stdev <= 1e-14 {
        return 0.0;
    }
    let d1 = ((forward / strike).ln() + 0.5 * stdev * stdev) / stdev;
    forward * norm_pdf(d1) * maturity.sqrt()
}

/// Implied Black-Scholes volatility from an undiscounted forward call price.
///
/// The returned vol reprices the input to 1e-10·forward (safeguarded
/// bracketing plus a Newton polish).
pub fn implied_vol(price: f64, strike: f64, maturity: f64, forward: f64) -> Result<f64> {
    if !(forward > 0.0) || !(strike > 0.0) || !(maturity > 0.0) {
        return Err(Error::invalid_input(
            "implied_vol requires positive forward, strike and maturity",
        ));
    }
    let intrinsic = (forward - strike).max(0.0);
    let band_tol = 1e-12 * forward;
    if price < intrinsic - band_tol || price > forward + band_tol {
        return Err(Error::invalid_input(format!(
            "price {price:.6e} outside no-arbitrage band [{intrinsic:.6e}, {forward:.6e}]"
        )));
    }
    let clamped = price.clamp(intrinsic, forward);
    if clamped - intrinsic < 1e-14 * forward {
        return Ok(0.0);
    }

    let objective = |vol: f64| bs_call_forward(forward, strike, vol, maturity) - clamped;
    let mut hi = 1.0;
    while objective(hi) < 0.0 && hi < 64.0 {
        hi *= 2.0;
    }
    let mut vol = brent(&objective, 1e-12, hi, 1e-12, 200)?;
    // Newton polish for the last digits
    for _ in 0..3 {
        let diff = objective(vol);
        let vega = bs_vega_forward(forward, strike, vol, maturity);
        if vega < 1e-16 {
            break;
        }
        vol -= diff / vega;
        if vol <= 0.0 {
            vol = 1e-12;
        }
    }
    let residual = objective(vol).abs();
    if residual > 1e-10 * forward {
        return Err(Error::numerical(format!(
            "implied vol did not reprice input: residual {residual:.3e}"
        )));
    }
    Ok(vol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn at_the_money_round_trip() {
        let price = bs_call_forward(2.0, 2.0, 0.2, 1.0);
        let vol = implied_vol(price, 2.0, 1.0, 2.0).unwrap();
        assert!((vol - 0.2).abs() < 1e-8);
    }

    #[test]
    fn near_intrinsic_price_gives_near_zero_vol() {
        // a 1e-12 time value on an ITM strike pins the vol near zero
        let intrinsic = 2.0 - 1.5;
        let vol = implied_vol(intrinsic + 1e-12, 1.5, 1.0, 2.0).unwrap();
        assert!(vol < 0.05, "vol {vol}");
        let exact_intrinsic = implied_vol(intrinsic, 1.5, 1.0, 2.0).unwrap();
        assert_eq!(exact_intrinsic, 0.0);
    }

    #[test]
    fn random_round_trips_are_tight() {
        // moneyness restricted to |d| <= 2.5 so prices carry resolvable
        // time value in f64
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut max_err: f64 = 0.0;
        for _ in 0..100 {
            let sigma: f64 = rng.gen_range(0.05..0.8);
            let t: f64 = rng.gen_range(0.1..4.0);
            let u: f64 = rng.gen_range(-2.5..2.5);
            let k: f64 = 2.0 * (u * sigma * t.sqrt()).exp();
            let price = bs_call_forward(2.0, k, sigma, t);
            let vol = implied_vol(price, k, t, 2.0).unwrap();
            max_err = max_err.max((vol - sigma).abs());
        }
        assert!(max_err < 1e-8, "max round-trip error {max_err:.3e}");
    }

    #[test]
    fn out_of_band_prices_are_rejected() {
        assert!(implied_vol(2.5, 1.0, 1.0, 2.0).is_err());
        assert!(implied_vol(0.9, 1.0, 1.0, 2.0).is_err());
    }
}
