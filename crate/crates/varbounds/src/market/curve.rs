//! Call-price curves: construction, no-arbitrage validation and evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::heston::{heston_call_price, HestonParams};

/// Convexity slack allowed in second differences, relative to spot; sits
/// above the semi-analytic pricer's quadrature noise.
const CONVEXITY_TOL: f64 = 1e-8;
/// Largest admissible residual price at the last strike, relative to spot.
const TAIL_VALUE_TOL: f64 = 5e-2;

/// A call-price curve at a single maturity.
///
/// Prices are market premia C(K) with C(0) = S₀; evaluation between strikes
/// is piecewise linear, which preserves monotonicity and convexity of the
/// inputs, and beyond the last strike the curve continues with an
/// exponential tail matched in value and slope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallCurve {
    maturity: f64,
    /// Growth factor B_T = exp(∫₀ᵀ r dt).
    growth: f64,
    strikes: Vec<f64>,
    prices: Vec<f64>,
    /// Decay rate of the exponential tail beyond the last strike.
    tail_lambda: f64,
}

impl CallCurve {
    /// Build a curve from strike/price points. Requires a strike-0 row
    /// (whose price defines S₀), strictly increasing strikes, and prices
    /// satisfying the static no-arbitrage constraints.
    pub fn from_points(maturity: f64, growth: f64, strikes: Vec<f64>, prices: Vec<f64>) -> Result<Self> {
        if !(maturity > 0.0) {
            return Err(Error::invalid_input(format!("maturity must be > 0, got {maturity}")));
        }
        if !(growth > 0.0) {
            return Err(Error::invalid_input(format!("growth factor must be > 0, got {growth}")));
        }
        if strikes.len() != prices.len() {
            return Err(Error::invalid_input("strikes and prices must have equal length"));
        }
        if strikes.len() < 3 {
            return Err(Error::invalid_input("need at least 3 strike points"));
        }
        if strikes[0] != 0.0 {
            return Err(Error::invalid_input("first strike must be 0 (price there defines S0)"));
        }
        let s0 = prices[0];
        if !(s0 > 0.0) {
            return Err(Error::invalid_input("C(0) = S0 must be positive"));
        }
        for w in strikes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid_input(format!(
                    "strikes must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        // monotone decreasing, convex, and slope bounded below by -B_T^{-1}
        let mut offending = Vec::new();
        let n = strikes.len();
        let slope = |j: usize| (prices[j + 1] - prices[j]) / (strikes[j + 1] - strikes[j]);
        for j in 0..n - 1 {
            if prices[j + 1] > prices[j] + CONVEXITY_TOL * s0 {
                offending.push(format!("increasing price at K={}", strikes[j + 1]));
            }
        }
        for j in 1..n - 1 {
            if slope(j) < slope(j - 1) - CONVEXITY_TOL * s0 {
                offending.push(format!("convexity violated at K={}", strikes[j]));
            }
        }
        if slope(0) < -1.0 / growth - CONVEXITY_TOL {
            offending.push(format!(
                "slope at K=0 ({:.6}) below -1/B_T ({:.6})",
                slope(0),
                -1.0 / growth
            ));
        }
        if !offending.is_empty() {
            return Err(Error::Arbitrage {
                message: offending.join("; "),
            });
        }
        let last = prices[n - 1];
        if last > TAIL_VALUE_TOL * s0 {
            return Err(Error::invalid_input(format!(
                "price at largest strike is {last:.4e}, curve has not decayed (extend the strike grid)"
            )));
        }
        let last_slope = slope(n - 2);
        let tail_lambda = if last > 1e-14 * s0 && last_slope < -1e-14 {
            -last_slope / last
        } else {
            0.0
        };
        Ok(CallCurve {
            maturity,
            growth,
            strikes,
            prices,
            tail_lambda,
        })
    }

    /// Build a synthetic curve from a Heston model on a log-spaced strike
    /// grid wide enough for the tail to decay.
    pub fn from_heston(params: &HestonParams, maturity: f64, n_strikes: usize) -> Result<Self> {
        params.validate()?;
        let n = n_strikes.max(31);
        // crude width from the variance scale, then extend until decayed
        let total_var = params.expected_integrated_variance(maturity).max(1e-4);
        let width = 6.5 * total_var.sqrt() + 0.5;
        let mut lo_log = -width;
        let mut hi_log = width;
        let mut prices;
        let mut strikes;
        loop {
            strikes = vec![0.0];
            let m = n - 1;
            for j in 0..m {
                let l = lo_log + (hi_log - lo_log) * j as f64 / (m - 1) as f64;
                strikes.push(params.s0 * l.exp());
            }
            prices = Vec::with_capacity(strikes.len());
            for &k in &strikes {
                prices.push(heston_call_price(params, k, maturity)?);
            }
            let s0 = params.s0;
            if prices[prices.len() - 1] < 1e-5 * s0 || hi_log > 8.0 {
                // drop leading strikes with negligible extrinsic value to keep
                // the measure's left end clean
                break;
            }
            hi_log += 1.0;
            lo_log -= 0.25;
        }
        Self::from_points(maturity, params.growth_factor(maturity), strikes, prices)
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    /// Growth factor B_T = exp(∫r).
    pub fn growth(&self) -> f64 {
        self.growth
    }

    /// Spot S₀ = C(0).
    pub fn spot(&self) -> f64 {
        self.prices[0]
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    /// Call price at an arbitrary strike (piecewise linear inside the grid,
    /// exponential tail beyond).
    pub fn price(&self, strike: f64) -> f64 {
        let n = self.strikes.len();
        if strike <= 0.0 {
            return self.prices[0];
        }
        let last_k = self.strikes[n - 1];
        if strike >= last_k {
            let last_p = self.prices[n - 1];
            if self.tail_lambda == 0.0 {
                return last_p;
            }
            return last_p * (-self.tail_lambda * (strike - last_k)).exp();
        }
        let i = crate::math::cell_index(&self.strikes, strike);
        let w = (strike - self.strikes[i]) / (self.strikes[i + 1] - self.strikes[i]);
        self.prices[i] + w * (self.prices[i + 1] - self.prices[i])
    }

    /// Put price by call-put parity: P(K) = B_T⁻¹K − S₀ + C(K).
    pub fn put_price(&self, strike: f64) -> f64 {
        (strike / self.growth - self.spot() + self.price(strike)).max(0.0)
    }

    /// Chord slope of segment j (between strikes j and j+1).
    pub(crate) fn segment_slope(&self, j: usize) -> f64 {
        (self.prices[j + 1] - self.prices[j]) / (self.strikes[j + 1] - self.strikes[j])
    }

    /// Decay rate of the exponential tail (0 when the curve hits zero).
    pub(crate) fn tail_lambda(&self) -> f64 {
        self.tail_lambda
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::black_scholes::bs_call_forward;

    fn two_point_curve() -> CallCurve {
        // C(K) = max(2 - K, (3 - K)/2, 0) sampled on its kink structure
        let strikes = vec![0.0, 0.5, 1.0, 2.0, 3.0, 4.0];
        let prices = vec![2.0, 1.5, 1.0, 0.5, 0.0, 0.0];
        CallCurve::from_points(1.0, 1.0, strikes, prices).unwrap()
    }

    #[test]
    fn two_point_curve_validates_and_interpolates() {
        let c = two_point_curve();
        assert_eq!(c.spot(), 2.0);
        assert_eq!(c.price(0.75), 1.25);
        assert_eq!(c.price(2.5), 0.25);
        assert_eq!(c.price(10.0), 0.0);
        assert_eq!(c.put_price(2.0), 0.5);
    }

    #[test]
    fn rejects_non_convex_and_increasing_curves() {
        let err = CallCurve::from_points(
            1.0,
            1.0,
            vec![0.0, 1.0, 2.0, 3.0],
            vec![2.0, 1.0, 0.9, 0.0],
        )
        .unwrap_err();
        match err {
            Error::Arbitrage { message } => assert!(message.contains("K=2"), "{message}"),
            other => panic!("expected arbitrage error, got {other}"),
        }

        assert!(CallCurve::from_points(
            1.0,
            1.0,
            vec![0.0, 1.0, 2.0, 3.0],
            vec![2.0, 2.1, 1.0, 0.0]
        )
        .is_err());
    }

    #[test]
    fn rejects_slope_below_discount_bound() {
        // slope -1.5 at zero would imply negative mass
        assert!(CallCurve::from_points(
            1.0,
            1.0,
            vec![0.0, 1.0, 2.0, 3.0],
            vec![2.0, 0.5, 0.01, 0.0]
        )
        .is_err());
    }

    #[test]
    fn heston_curve_matches_pricer_between_nodes() {
        let p = HestonParams::experiment_base();
        let c = CallCurve::from_heston(&p, 1.0, 121).unwrap();
        assert_eq!(c.spot(), 2.0);
        // interpolation error at an off-grid strike is small
        let k = 2.13;
        let exact = heston_call_price(&p, k, 1.0).unwrap();
        assert!((c.price(k) - exact).abs() < 5e-4);
    }

    #[test]
    fn black_scholes_curve_builds() {
        let strikes: Vec<f64> = std::iter::once(0.0)
            .chain((0..200).map(|j| 0.2 * 1.0235f64.powi(j)))
            .collect();
        let prices: Vec<f64> = strikes.iter().map(|&k| bs_call_forward(2.0, k, 0.2, 1.0)).collect();
        let c = CallCurve::from_points(1.0, 1.0, strikes, prices).unwrap();
        assert!(c.tail_lambda() >= 0.0);
        assert!((c.price(2.0) - bs_call_forward(2.0, 2.0, 0.2, 1.0)).abs() < 1e-4);
    }
}
