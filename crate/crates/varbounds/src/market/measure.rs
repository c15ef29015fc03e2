//! Implied terminal-value measures, potential functions and embedding
//! feasibility.

use crate::error::{Error, Result};
use crate::market::curve::CallCurve;

/// Slope-jump threshold (relative to spot) above which a node is a
/// candidate atom of the implied measure.
const ATOM_SLOPE_TOL: f64 = 1e-6;
/// A candidate is flagged as an atom only when its slope jump dominates the
/// neighbouring jumps by this factor; smooth curvature fails this test.
const ATOM_DOMINANCE: f64 = 10.0;
/// Particles below this mass are dropped.
const MASS_EPS: f64 = 1e-15;

/// A probability measure on (0, ∞) in particle form: point masses at
/// strictly increasing locations, with flags separating genuine atoms from
/// discretised density cells.
#[derive(Debug, Clone)]
pub struct ImpliedMeasure {
    xs: Vec<f64>,
    masses: Vec<f64>,
    atom: Vec<bool>,
    mean: f64,
    tail_mass: f64,
    cum_mass: Vec<f64>,
    cum_wx: Vec<f64>,
}

impl ImpliedMeasure {
    /// Point mass at `x`.
    pub fn dirac(x: f64) -> Self {
        Self::from_particles(vec![x], vec![1.0], vec![true]).expect("dirac is a valid measure")
    }

    /// Assemble a measure from raw particles. Total mass must be 1 within
    /// 1e-8; it is then rescaled exactly.
    pub fn from_particles(xs: Vec<f64>, masses: Vec<f64>, atom: Vec<bool>) -> Result<Self> {
        if xs.is_empty() || xs.len() != masses.len() || xs.len() != atom.len() {
            return Err(Error::invalid_input("particle arrays empty or of unequal length"));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid_input("particle locations must be strictly increasing"));
            }
        }
        if xs[0] <= 0.0 {
            return Err(Error::invalid_input("measure must be supported on (0, inf)"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::invalid_input(format!(
                "total mass {total:.10} differs from 1 by more than 1e-8"
            )));
        }
        let mut kept_x = Vec::with_capacity(xs.len());
        let mut kept_m = Vec::with_capacity(xs.len());
        let mut kept_a = Vec::with_capacity(xs.len());
        for i in 0..xs.len() {
            if masses[i] < -1e-12 {
                return Err(Error::invalid_input(format!("negative mass at x={}", xs[i])));
            }
            if masses[i] > MASS_EPS {
                kept_x.push(xs[i]);
                kept_m.push(masses[i] / total);
                kept_a.push(atom[i]);
            }
        }
        if kept_x.is_empty() {
            return Err(Error::invalid_input("measure has no mass"));
        }
        let mut cum_mass = Vec::with_capacity(kept_x.len());
        let mut cum_wx = Vec::with_capacity(kept_x.len());
        let mut cm = 0.0;
        let mut cw = 0.0;
        let mut mean = 0.0;
        for i in 0..kept_x.len() {
            cm += kept_m[i];
            cw += kept_m[i] * kept_x[i];
            mean += kept_m[i] * kept_x[i];
            cum_mass.push(cm);
            cum_wx.push(cw);
        }
        Ok(ImpliedMeasure {
            xs: kept_x,
            masses: kept_m,
            atom: kept_a,
            mean,
            tail_mass: 0.0,
            cum_mass,
            cum_wx,
        })
    }

    /// Discretised uniform density on [a, b] (for tests and synthetic runs).
    pub fn uniform_density(a: f64, b: f64, n: usize) -> Self {
        let n = n.max(2);
        let h = (b - a) / n as f64;
        let xs: Vec<f64> = (0..n).map(|i| a + (i as f64 + 0.5) * h).collect();
        let masses = vec![1.0 / n as f64; n];
        let atom = vec![false; n];
        Self::from_particles(xs, masses, atom).expect("uniform grid is valid")
    }

    /// Extract the implied terminal-value measure from a call curve via the
    /// strike-derivative of prices.
    ///
    /// The returned particles live on the discounted-value axis x = K/B_T.
    /// All mass between strike 0 and the first positive strike is lumped at
    /// its conditional mean so the measure carries no atom at zero and its
    /// mean reproduces S₀ exactly; the tail beyond the last strike is
    /// discretised from the curve's exponential extension.
    pub fn from_curve(curve: &CallCurve) -> Result<Self> {
        let bt = curve.growth();
        let s0 = curve.spot();
        let base_k = curve.strikes();
        let base_p = curve.prices();
        let n_base = base_k.len();

        // extended strike/price lists including the discretised tail
        let mut ks: Vec<f64> = base_k.to_vec();
        let mut ps: Vec<f64> = base_p.to_vec();
        let last_p = base_p[n_base - 1];
        let lambda = curve.tail_lambda();
        let mut tail_mass = 0.0;
        if last_p > 1e-13 * s0 {
            if lambda <= 0.0 {
                return Err(Error::invalid_input(
                    "curve has residual value but no decaying tail; cannot complete the measure",
                ));
            }
            tail_mass = -bt * curve.segment_slope(n_base - 2);
            let step = 0.25 / lambda;
            let mut k = base_k[n_base - 1];
            let mut p = last_p;
            let mut guard = 0;
            while p > 1e-14 * s0 && guard < 600 {
                k += step;
                p = last_p * (-(lambda) * (k - base_k[n_base - 1])).exp();
                ks.push(k);
                ps.push(p);
                guard += 1;
            }
        }

        let m = ks.len();
        let slope = |j: usize| (ps[j + 1] - ps[j]) / (ks[j + 1] - ks[j]);

        // slope jumps per strike node (zero for the endpoints)
        let mut jumps = vec![0.0; m];
        for j in 1..m {
            let s_right = if j + 1 < m { slope(j) } else { 0.0 };
            let jump = s_right - slope(j - 1);
            if jump < -1e-8 {
                return Err(Error::Arbitrage {
                    message: format!("negative implied mass at strike {}", ks[j]),
                });
            }
            jumps[j] = jump.max(0.0);
        }

        // an atom is a slope jump that dominates the jumps at the adjacent
        // strike nodes; smooth curvature produces comparable neighbours
        let mut is_atom = vec![false; m];
        for j in 1..m {
            if jumps[j] <= ATOM_SLOPE_TOL * s0 {
                continue;
            }
            let left = jumps[j - 1];
            let right = if j + 1 < m { jumps[j + 1] } else { 0.0 };
            if jumps[j] > ATOM_DOMINANCE * left.max(right) {
                is_atom[j] = true;
            }
        }

        let mut xs = Vec::with_capacity(m);
        let mut masses = Vec::with_capacity(m);
        let mut atom = Vec::with_capacity(m);

        // mass below the first positive strike, placed at its conditional mean
        let s0_slope = slope(0);
        let low_mass = 1.0 + bt * s0_slope;
        let x1 = ks[1] / bt;
        if low_mass * x1 > 1e-12 * s0 {
            if low_mass < -1e-9 {
                return Err(Error::Arbitrage {
                    message: format!("slope at zero implies negative mass ({low_mass:.3e})"),
                });
            }
            let ex_low = s0 - ps[1] + x1 * bt * s0_slope;
            let xbar = (ex_low / low_mass).clamp(1e-12, x1 * (1.0 - 1e-9));
            xs.push(xbar);
            masses.push(low_mass);
            atom.push(false);
        }

        for j in 1..m {
            let mass = bt * jumps[j];
            if mass > MASS_EPS {
                xs.push(ks[j] / bt);
                masses.push(mass);
                atom.push(is_atom[j]);
            }
        }

        let mut measure = Self::from_particles(xs, masses, atom)?;
        measure.tail_mass = tail_mass;
        let mean_gap = (measure.mean - s0).abs();
        if mean_gap > 1e-6 * s0 {
            return Err(Error::numerical(format!(
                "implied measure mean {:.8} differs from S0 {:.8} by {:.2e}",
                measure.mean, s0, mean_gap
            )));
        }
        Ok(measure)
    }

    pub fn locations(&self) -> &[f64] {
        &self.xs
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn atom_flags(&self) -> &[bool] {
        &self.atom
    }

    /// Atoms as (location, mass) pairs.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        self.xs
            .iter()
            .zip(&self.masses)
            .zip(&self.atom)
            .filter(|(_, &a)| a)
            .map(|((&x, &m), _)| (x, m))
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Mass represented beyond the last input strike.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn support(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// CDF F(x) = µ((0, x]).
    pub fn cdf(&self, x: f64) -> f64 {
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => self.cum_mass[i],
            Err(0) => 0.0,
            Err(i) => self.cum_mass[i - 1],
        }
    }

    /// Inverse CDF for u in [0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0 - 1e-16);
        let i = match self
            .cum_mass
            .binary_search_by(|v| v.partial_cmp(&u).unwrap())
        {
            Ok(i) => i + 1,
            Err(i) => i,
        };
        self.xs[i.min(self.xs.len() - 1)]
    }

    /// Interval containing the central `p` fraction of the mass.
    pub fn central_range(&self, p: f64) -> (f64, f64) {
        let half_tail = 0.5 * (1.0 - p);
        (self.quantile(half_tail), self.quantile(1.0 - half_tail))
    }

    /// E(X − k)₊ under the measure.
    pub fn call_value(&self, k: f64) -> f64 {
        // locate first particle above k, then use suffix aggregates
        let i = match self.xs.binary_search_by(|v| v.partial_cmp(&k).unwrap()) {
            Ok(i) => i + 1,
            Err(i) => i,
        };
        if i >= self.xs.len() {
            return 0.0;
        }
        let total_m = self.cum_mass[self.cum_mass.len() - 1];
        let total_w = self.cum_wx[self.cum_wx.len() - 1];
        let below_m = if i == 0 { 0.0 } else { self.cum_mass[i - 1] };
        let below_w = if i == 0 { 0.0 } else { self.cum_wx[i - 1] };
        (total_w - below_w) - k * (total_m - below_m)
    }

    /// Potential U(x) = −∫|y − x| µ(dy), evaluated exactly from prefix sums.
    pub fn potential_at(&self, x: f64) -> f64 {
        let i = match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i + 1,
            Err(i) => i,
        };
        let total_m = self.cum_mass[self.cum_mass.len() - 1];
        let total_w = self.cum_wx[self.cum_wx.len() - 1];
        let below_m = if i == 0 { 0.0 } else { self.cum_mass[i - 1] };
        let below_w = if i == 0 { 0.0 } else { self.cum_wx[i - 1] };
        // ∫|y−x| = x(2F(x)−1) − 2W(x) + E X   with W(x)=∫_{y≤x} y dµ
        -(x * (2.0 * below_m - total_m) - 2.0 * below_w + total_w)
    }

    /// Potential function sampled on a grid.
    pub fn potential(&self, grid: &[f64]) -> PotentialFn {
        let values = grid.iter().map(|&x| self.potential_at(x)).collect();
        PotentialFn {
            xs: grid.to_vec(),
            values,
            mean: self.mean,
        }
    }

    /// Piecewise-constant density view: cell mass divided by cell width, for
    /// particles not flagged as atoms.
    pub fn density_view(&self) -> Vec<(f64, f64)> {
        let n = self.xs.len();
        let mut out = Vec::new();
        for i in 0..n {
            if self.atom[i] {
                continue;
            }
            let left = if i > 0 { self.xs[i - 1] } else { self.xs[i] };
            let right = if i + 1 < n { self.xs[i + 1] } else { self.xs[i] };
            let width = 0.5 * (right - left).max(f64::MIN_POSITIVE);
            if width > 0.0 {
                out.push((self.xs[i], self.masses[i] / width));
            }
        }
        out
    }
}

/// A grid-sampled potential function U(x) = −∫|y − x| µ(dy).
#[derive(Debug, Clone)]
pub struct PotentialFn {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub mean: f64,
}

impl PotentialFn {
    /// Max convexity excess; ≤ tol means the sampled potential is concave.
    pub fn concavity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 1..self.xs.len() - 1 {
            let h0 = self.xs[i] - self.xs[i - 1];
            let h1 = self.xs[i + 1] - self.xs[i];
            let second = (self.values[i + 1] - self.values[i]) / h1 - (self.values[i] - self.values[i - 1]) / h0;
            worst = worst.max(second);
        }
        worst
    }
}

/// Outcome of the embedding feasibility test U_ν ≥ U_µ with equal means.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Largest value of U_µ − U_ν (positive = violation).
    pub max_violation: f64,
    /// Location of the worst violation (or of the tightest point).
    pub location: f64,
    pub mean_gap: f64,
    pub reason: Option<String>,
}

/// Check that µ can be embedded from ν: equal means and U_ν ≥ U_µ pointwise.
pub fn feasibility_check(nu: &ImpliedMeasure, mu: &ImpliedMeasure) -> FeasibilityReport {
    let mean_gap = (nu.mean() - mu.mean()).abs();
    let scale = nu.mean().abs().max(1.0);
    if mean_gap > 1e-6 * scale {
        return FeasibilityReport {
            feasible: false,
            max_violation: f64::NAN,
            location: f64::NAN,
            mean_gap,
            reason: Some("mean".to_string()),
        };
    }
    // U_ν − U_µ is piecewise linear with kinks only at particle locations
    let mut points: Vec<f64> = nu.locations().iter().chain(mu.locations()).copied().collect();
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup();
    let mut worst = f64::NEG_INFINITY;
    let mut where_ = points[0];
    for &x in &points {
        let gap = mu.potential_at(x) - nu.potential_at(x);
        if gap > worst {
            worst = gap;
            where_ = x;
        }
    }
    let tol = 1e-9 * scale;
    FeasibilityReport {
        feasible: worst <= tol,
        max_violation: worst,
        location: where_,
        mean_gap,
        reason: if worst <= tol {
            None
        } else {
            Some("potential crossing".to_string())
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::black_scholes::bs_call_forward;
    use crate::market::curve::CallCurve;
    use crate::market::heston::HestonParams;
    use crate::math::norm_cdf;

    fn two_point_measure() -> ImpliedMeasure {
        ImpliedMeasure::from_particles(vec![1.0, 3.0], vec![0.5, 0.5], vec![true, true]).unwrap()
    }

    fn bs_curve(n: usize) -> CallCurve {
        let sigma = 0.2;
        let mut strikes = vec![0.0];
        let lo: f64 = 0.25;
        let hi: f64 = 12.0;
        for j in 0..n {
            strikes.push(lo * (hi / lo).powf(j as f64 / (n - 1) as f64));
        }
        let prices = strikes.iter().map(|&k| bs_call_forward(2.0, k, sigma, 1.0)).collect();
        CallCurve::from_points(1.0, 1.0, strikes, prices).unwrap()
    }

    #[test]
    fn two_point_curve_yields_exact_atoms() {
        let strikes = vec![0.0, 0.5, 1.0, 2.0, 3.0, 4.0];
        let prices = vec![2.0, 1.5, 1.0, 0.5, 0.0, 0.0];
        let curve = CallCurve::from_points(1.0, 1.0, strikes, prices).unwrap();
        let mu = ImpliedMeasure::from_curve(&curve).unwrap();
        let atoms = mu.atoms();
        assert_eq!(atoms.len(), 2);
        assert!((atoms[0].0 - 1.0).abs() < 1e-14 && (atoms[0].1 - 0.5).abs() < 1e-12);
        assert!((atoms[1].0 - 3.0).abs() < 1e-14 && (atoms[1].1 - 0.5).abs() < 1e-12);
        assert!((mu.mean() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn black_scholes_curve_recovers_lognormal_cdf() {
        let curve = bs_curve(900);
        let mu = ImpliedMeasure::from_curve(&curve).unwrap();
        assert!((mu.mean() - 2.0).abs() < 1e-7);
        assert!(mu.atoms().is_empty());
        // compare CDF at cell midpoints against the lognormal law
        let xs = mu.locations();
        let sigma = 0.2;
        let lognormal_cdf = |x: f64| norm_cdf(((x / 2.0).ln() + 0.5 * sigma * sigma) / sigma);
        let mut worst: f64 = 0.0;
        for i in 0..xs.len() - 1 {
            let mid = 0.5 * (xs[i] + xs[i + 1]);
            if !(0.8..=4.5).contains(&mid) {
                continue;
            }
            worst = worst.max((mu.cdf(mid) - lognormal_cdf(mid)).abs());
        }
        assert!(worst < 1e-4, "CDF mismatch {worst:.2e}");
    }

    #[test]
    fn heston_measure_integrates_to_one_with_spot_mean() {
        let p = HestonParams::experiment_base();
        let curve = CallCurve::from_heston(&p, 1.0, 201).unwrap();
        let mu = ImpliedMeasure::from_curve(&curve).unwrap();
        let total: f64 = mu.masses().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((mu.mean() - 2.0).abs() < 1e-4);
        assert!(mu.atoms().is_empty(), "smooth curve must not produce atoms");
    }

    #[test]
    fn breeden_litzenberger_round_trip() {
        let p = HestonParams::experiment_base();
        let curve = CallCurve::from_heston(&p, 1.0, 201).unwrap();
        let mu = ImpliedMeasure::from_curve(&curve).unwrap();
        let mut worst: f64 = 0.0;
        for (j, &k) in curve.strikes().iter().enumerate().skip(1) {
            let reprice = mu.call_value(k / curve.growth());
            worst = worst.max((reprice - curve.prices()[j]).abs());
        }
        assert!(worst < 1e-6, "round-trip error {worst:.2e}");
    }

    #[test]
    fn potential_of_dirac_is_absolute_value() {
        let nu = ImpliedMeasure::dirac(2.0);
        for x in [0.5, 1.0, 2.0, 3.7] {
            assert!((nu.potential_at(x) - (-(x - 2.0f64).abs())).abs() < 1e-14);
        }
    }

    #[test]
    fn potential_of_uniform_interval() {
        let mu = ImpliedMeasure::uniform_density(1.0, 3.0, 4000);
        assert!((mu.potential_at(2.0) - (-0.5)).abs() < 1e-6);
    }

    #[test]
    fn potential_call_duality_on_grid() {
        let p = HestonParams::experiment_base();
        let curve = CallCurve::from_heston(&p, 1.0, 201).unwrap();
        let mu = ImpliedMeasure::from_curve(&curve).unwrap();
        let s0 = curve.spot();
        let mut worst: f64 = 0.0;
        for &x in mu.locations().iter().filter(|&&x| x < 7.5) {
            let via_curve = s0 - x - 2.0 * curve.price(curve.growth() * x);
            worst = worst.max((mu.potential_at(x) - via_curve).abs());
        }
        assert!(worst < 1e-6, "duality gap {worst:.2e}");
    }

    #[test]
    fn potentials_are_concave() {
        let p = HestonParams::experiment_base();
        let curve = CallCurve::from_heston(&p, 1.0, 201).unwrap();
        let mu = ImpliedMeasure::from_curve(&curve).unwrap();
        let grid: Vec<f64> = (0..400).map(|i| 0.2 + i as f64 * 0.02).collect();
        let pot = mu.potential(&grid);
        assert!(pot.concavity_defect() < 1e-10);
    }

    #[test]
    fn feasibility_trivial_cases() {
        let nu = ImpliedMeasure::dirac(2.0);
        let mu = two_point_measure();
        assert!(feasibility_check(&nu, &mu).feasible);
        let self_report = feasibility_check(&mu, &mu);
        assert!(self_report.feasible);
        assert!(self_report.max_violation.abs() < 1e-14);
        // reversed pair crosses at x = 2
        let rev = feasibility_check(&mu, &nu);
        assert!(!rev.feasible);
        assert!((rev.location - 2.0).abs() < 1e-12);
        assert!((rev.max_violation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn feasibility_mean_mismatch() {
        let nu = ImpliedMeasure::dirac(2.0);
        let mu = ImpliedMeasure::dirac(2.1);
        let rep = feasibility_check(&nu, &mu);
        assert!(!rep.feasible);
        assert_eq!(rep.reason.as_deref(), Some("mean"));
    }

    #[test]
    fn quantiles_and_sampling_helpers() {
        let mu = two_point_measure();
        assert_eq!(mu.quantile(0.25), 1.0);
        assert_eq!(mu.quantile(0.75), 3.0);
        let (lo, hi) = mu.central_range(0.95);
        assert_eq!((lo, hi), (1.0, 3.0));
        assert_eq!(mu.cdf(0.9), 0.0);
        assert_eq!(mu.cdf(1.0), 0.5);
        assert_eq!(mu.cdf(3.0), 1.0);
    }
}
