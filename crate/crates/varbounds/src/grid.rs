//! Nonuniform space grids, time schedules and the monotone finite-difference
//! generator for dX = σ(x) dW.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::ImpliedMeasure;

/// Floor applied to the variance weight so the time-changed diffusion stays
/// nondegenerate (λ(x) = max(w(x), ε)).
pub const WEIGHT_FLOOR: f64 = 1e-3;

/// Weight function w(x) defining the weighted realised variance ∫ w(X) σ² dt.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Weight {
    /// Plain realised variance, w ≡ 1.
    Unit,
    /// Corridor variance, w(x) = 1_{x ∈ [a, b]}.
    Corridor { a: f64, b: f64 },
    /// Gamma-swap weighting, w(x) = x.
    Gamma,
}

impl Weight {
    pub fn lambda(&self, x: f64) -> f64 {
        let w = match self {
            Weight::Unit => 1.0,
            Weight::Corridor { a, b } => {
                if x >= *a && x <= *b {
                    1.0
                } else {
                    0.0
                }
            }
            Weight::Gamma => x,
        };
        w.max(WEIGHT_FLOOR)
    }

    /// Diffusion coefficient of the time-changed process: σ(x) = x·λ(x)^{-1/2}.
    pub fn sigma(&self, x: f64) -> f64 {
        x / self.lambda(x).sqrt()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    Log,
}

/// Local refinement request: cells within `half_width_cells` base cells of
/// `center` are split into `ratio` subcells.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Refinement {
    pub center: f64,
    pub ratio: usize,
    pub half_width_cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_nodes: usize,
    pub spacing: Spacing,
    /// Points snapped onto exact nodes (start values, atoms).
    #[serde(default)]
    pub special: Vec<f64>,
    #[serde(default)]
    pub refine: Vec<Refinement>,
}

/// Strictly increasing space grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceGrid {
    nodes: Vec<f64>,
}

/// Build a grid per the configuration: base spacing, snapping of special
/// points onto exact nodes, then local refinement.
pub fn build_grid(config: &GridConfig) -> Result<SpaceGrid> {
    if !(config.x_lo > 0.0) || !(config.x_hi > config.x_lo) {
        return Err(Error::invalid_input(format!(
            "domain must satisfy 0 < x_lo < x_hi, got [{}, {}]",
            config.x_lo, config.x_hi
        )));
    }
    if config.n_nodes < 3 {
        return Err(Error::invalid_input("need at least 3 grid nodes"));
    }
    let n = config.n_nodes;
    let mut nodes: Vec<f64> = match config.spacing {
        Spacing::Uniform => (0..n)
            .map(|i| config.x_lo + (config.x_hi - config.x_lo) * i as f64 / (n - 1) as f64)
            .collect(),
        Spacing::Log => {
            let l0 = config.x_lo.ln();
            let l1 = config.x_hi.ln();
            (0..n)
                .map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    };
    for &s in &config.special {
        if s <= config.x_lo || s >= config.x_hi {
            return Err(Error::invalid_input(format!(
                "special point {s} outside the open domain ({}, {})",
                config.x_lo, config.x_hi
            )));
        }
        let i = crate::math::nearest_index(&nodes, s);
        // never move the boundary nodes
        let i = i.clamp(1, nodes.len() - 2);
        nodes[i] = s;
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    nodes.dedup();

    for r in &config.refine {
        if r.ratio < 2 {
            continue;
        }
        let base = (config.x_hi - config.x_lo) / (n - 1) as f64;
        let local = match config.spacing {
            Spacing::Uniform => base,
            Spacing::Log => r.center * (config.x_hi / config.x_lo).ln() / (n - 1) as f64,
        };
        let w = r.half_width_cells as f64 * local;
        let mut refined = Vec::with_capacity(nodes.len() * 2);
        for i in 0..nodes.len() - 1 {
            refined.push(nodes[i]);
            let mid = 0.5 * (nodes[i] + nodes[i + 1]);
            if (mid - r.center).abs() <= w {
                let h = (nodes[i + 1] - nodes[i]) / r.ratio as f64;
                for k in 1..r.ratio {
                    refined.push(nodes[i] + h * k as f64);
                }
            }
        }
        refined.push(nodes[nodes.len() - 1]);
        nodes = refined;
    }

    for w in nodes.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::numerical("grid construction produced non-increasing nodes"));
        }
    }
    Ok(SpaceGrid { nodes })
}

impl SpaceGrid {
    /// Grid tailored to an embedding problem: covers both supports with
    /// margin, log spacing, atoms snapped to exact nodes, refinement around
    /// the initial-law atoms.
    pub fn for_embedding(
        nu: &ImpliedMeasure,
        mu: &ImpliedMeasure,
        n_nodes: usize,
        refine_ratio: usize,
    ) -> Result<Self> {
        let (nu_lo, nu_hi) = nu.support();
        let (mu_lo, mu_hi) = mu.support();
        let lo = nu_lo.min(mu_lo);
        let hi = nu_hi.max(mu_hi);
        let x_lo = (lo * 0.8).max(1e-8);
        let x_hi = hi * 1.25;
        let mut special: Vec<f64> = Vec::new();
        if nu.locations().len() <= 64 {
            special.extend_from_slice(nu.locations());
        } else {
            special.extend(nu.atoms().iter().map(|&(x, _)| x));
        }
        special.extend(mu.atoms().iter().map(|&(x, _)| x));
        special.retain(|&s| s > x_lo && s < x_hi);
        special.sort_by(|a, b| a.partial_cmp(b).unwrap());
        special.dedup();
        let refine = special
            .iter()
            .map(|&center| Refinement {
                center,
                ratio: refine_ratio.max(1),
                half_width_cells: 3,
            })
            .collect();
        build_grid(&GridConfig {
            x_lo,
            x_hi,
            n_nodes,
            spacing: Spacing::Log,
            special,
            refine,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains_node(&self, x: f64) -> bool {
        self.nodes
            .binary_search_by(|v| v.partial_cmp(&x).unwrap())
            .is_ok()
    }
}

/// Strictly increasing time levels t⁰ = 0 < t¹ < … with geometric refinement
/// near zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSchedule {
    times: Vec<f64>,
    dt_cap: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub t_max: f64,
    /// First step size; defaults to 1e-6·t_max.
    pub dt0: Option<f64>,
    /// Geometric growth factor of successive steps.
    pub growth: f64,
    /// Step cap after the geometric phase; defaults to t_max/400.
    pub dt_cap: Option<f64>,
}

impl ScheduleConfig {
    pub fn with_t_max(t_max: f64) -> Self {
        ScheduleConfig {
            t_max,
            dt0: None,
            growth: 1.08,
            dt_cap: None,
        }
    }
}

impl TimeSchedule {
    pub fn build(config: &ScheduleConfig) -> Result<Self> {
        if !(config.t_max > 0.0) {
            return Err(Error::invalid_input("t_max must be positive"));
        }
        if !(config.growth >= 1.0) {
            return Err(Error::invalid_input("growth must be >= 1"));
        }
        let dt0 = config.dt0.unwrap_or(1e-6 * config.t_max);
        let dt_cap = config.dt_cap.unwrap_or(config.t_max / 400.0).max(dt0);
        let mut times = vec![0.0];
        let mut t = 0.0;
        let mut dt = dt0;
        while t < config.t_max {
            t = (t + dt).min(config.t_max);
            times.push(t);
            dt = (dt * config.growth).min(dt_cap);
        }
        Ok(TimeSchedule { times, dt_cap })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Append uniform steps (at the cap size) until `t_target`.
    pub fn extend_to(&mut self, t_target: f64) {
        let mut t = self.t_max();
        while t < t_target {
            t = (t + self.dt_cap).min(t_target);
            self.times.push(t);
        }
    }

    /// Insert an exact time level, keeping the schedule strictly increasing.
    pub fn insert(&mut self, t: f64) {
        if t <= 0.0 || t > self.t_max() {
            return;
        }
        if let Err(i) = self
            .times
            .binary_search_by(|v| v.partial_cmp(&t).unwrap())
        {
            // skip if indistinguishable from a neighbour
            let close = |a: f64| (a - t).abs() < 1e-14 * self.t_max().max(1.0);
            if !close(self.times[i - 1]) && (i >= self.times.len() || !close(self.times[i])) {
                self.times.insert(i, t);
            }
        }
    }

    /// Truncate the schedule at `t` (inserting it first if needed).
    pub fn truncated_at(&self, t: f64) -> TimeSchedule {
        let mut s = self.clone();
        s.insert(t);
        let cut = s
            .times
            .iter()
            .position(|&v| v >= t - 1e-14 * self.t_max().max(1.0))
            .unwrap_or(s.times.len() - 1);
        s.times.truncate(cut + 1);
        s
    }
}

/// Tridiagonal Kushner generator (Lu)_i = c⁻(u_{i-1} − u_i) + c⁺(u_{i+1} − u_i)
/// with zero boundary rows; consistent with (σ²/2)·∂²ₓ on nonuniform grids.
#[derive(Debug, Clone)]
pub struct Generator {
    c_minus: Vec<f64>,
    c_plus: Vec<f64>,
}

/// Assemble the generator for diffusion coefficient `sigma_fn`.
pub fn assemble_generator(grid: &SpaceGrid, sigma_fn: impl Fn(f64) -> f64) -> Result<Generator> {
    let xs = grid.nodes();
    let n = xs.len();
    let mut c_minus = vec![0.0; n];
    let mut c_plus = vec![0.0; n];
    for i in 1..n - 1 {
        let sig = sigma_fn(xs[i]);
        if !(sig > 0.0) || !sig.is_finite() {
            return Err(Error::invalid_input(format!(
                "sigma must be strictly positive, got {sig} at x={}",
                xs[i]
            )));
        }
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        let s2 = sig * sig;
        c_minus[i] = s2 / (h0 * (h0 + h1));
        c_plus[i] = s2 / (h1 * (h0 + h1));
    }
    Ok(Generator { c_minus, c_plus })
}

impl Generator {
    pub fn len(&self) -> usize {
        self.c_minus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_minus.is_empty()
    }

    pub fn coefficients(&self) -> (&[f64], &[f64]) {
        (&self.c_minus, &self.c_plus)
    }

    /// Apply L to a field.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.len();
        out[0] = 0.0;
        out[n - 1] = 0.0;
        for i in 1..n - 1 {
            out[i] = self.c_minus[i] * (u[i - 1] - u[i]) + self.c_plus[i] * (u[i + 1] - u[i]);
        }
    }

    /// Bands of A = I − Δt·L (sub, diag, super).
    pub fn implicit_bands(&self, dt: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut lower = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut upper = vec![0.0; n];
        for i in 1..n - 1 {
            lower[i] = -dt * self.c_minus[i];
            upper[i] = -dt * self.c_plus[i];
            diag[i] = 1.0 + dt * (self.c_minus[i] + self.c_plus[i]);
        }
        (lower, diag, upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_grid(a: f64, b: f64, n: usize) -> SpaceGrid {
        build_grid(&GridConfig {
            x_lo: a,
            x_hi: b,
            n_nodes: n,
            spacing: Spacing::Uniform,
            special: vec![],
            refine: vec![],
        })
        .unwrap()
    }

    #[test]
    fn uniform_three_nodes() {
        let g = uniform_grid(1.0, 3.0, 3);
        assert_eq!(g.nodes(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn log_grid_snaps_special_point() {
        let g = build_grid(&GridConfig {
            x_lo: 0.2,
            x_hi: 20.0,
            n_nodes: 101,
            spacing: Spacing::Log,
            special: vec![2.0],
            refine: vec![],
        })
        .unwrap();
        assert!(g.contains_node(2.0));
        assert_eq!(g.len(), 101);
    }

    #[test]
    fn refinement_divides_local_spacing() {
        let g = build_grid(&GridConfig {
            x_lo: 1.0,
            x_hi: 3.0,
            n_nodes: 21,
            spacing: Spacing::Uniform,
            special: vec![2.0],
            refine: vec![Refinement {
                center: 2.0,
                ratio: 4,
                half_width_cells: 2,
            }],
        })
        .unwrap();
        let base = 0.1;
        let near: Vec<f64> = g
            .nodes()
            .windows(2)
            .filter(|w| (0.5 * (w[0] + w[1]) - 2.0).abs() < 0.15)
            .map(|w| w[1] - w[0])
            .collect();
        let min_near = near.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((min_near - base / 4.0).abs() < 1e-9, "min spacing {min_near}");
    }

    #[test]
    fn generator_annihilates_constants_and_linears() {
        let g = build_grid(&GridConfig {
            x_lo: 0.5,
            x_hi: 4.0,
            n_nodes: 41,
            spacing: Spacing::Log,
            special: vec![],
            refine: vec![],
        })
        .unwrap();
        let gen = assemble_generator(&g, |x| x).unwrap();
        let ones = vec![1.0; g.len()];
        let mut out = vec![0.0; g.len()];
        gen.apply(&ones, &mut out);
        assert!(out.iter().all(|&v| v.abs() < 1e-14));
        let xs: Vec<f64> = g.nodes().to_vec();
        gen.apply(&xs, &mut out);
        for (i, v) in out.iter().enumerate() {
            assert!(v.abs() < 1e-10, "Lx != 0 at node {i}: {v}");
        }
    }

    #[test]
    fn generator_is_exact_on_quadratics_for_gbm() {
        let g = uniform_grid(1.0, 3.0, 21);
        let gen = assemble_generator(&g, |x| x).unwrap();
        let phi: Vec<f64> = g.nodes().iter().map(|&x| x * x).collect();
        let mut out = vec![0.0; g.len()];
        gen.apply(&phi, &mut out);
        for i in 1..g.len() - 1 {
            let x = g.nodes()[i];
            assert!(
                (out[i] - x * x).abs() < 1e-12,
                "Lx^2 at {x}: {} vs {}",
                out[i],
                x * x
            );
        }
    }

    #[test]
    fn implicit_matrix_is_strictly_diagonally_dominant_m_matrix() {
        let g = build_grid(&GridConfig {
            x_lo: 0.3,
            x_hi: 9.0,
            n_nodes: 80,
            spacing: Spacing::Log,
            special: vec![2.0],
            refine: vec![Refinement {
                center: 2.0,
                ratio: 3,
                half_width_cells: 2,
            }],
        })
        .unwrap();
        let gen = assemble_generator(&g, |x| x).unwrap();
        for dt in [1e-6, 1e-3, 0.5, 10.0] {
            let (lo, di, up) = gen.implicit_bands(dt);
            for i in 0..g.len() {
                assert!(lo[i] <= 0.0 && up[i] <= 0.0);
                assert!(di[i] - (lo[i].abs() + up[i].abs()) >= 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        let g = uniform_grid(1.0, 3.0, 9);
        assert!(assemble_generator(&g, |x| x - 2.0).is_err());
    }

    #[test]
    fn schedule_geometry_and_extension() {
        let s = TimeSchedule::build(&ScheduleConfig {
            t_max: 1.0,
            dt0: Some(1e-6),
            growth: 1.1,
            dt_cap: Some(0.01),
        })
        .unwrap();
        let t = s.times();
        assert_eq!(t[0], 0.0);
        assert!((t[1] - 1e-6).abs() < 1e-18);
        assert!((t[2] - t[1]) <= 1.1000001 * (t[1] - t[0]));
        assert!(s.t_max() == 1.0);
        let max_step = t.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(max_step <= 0.01 + 1e-15);

        let mut s2 = s.clone();
        s2.extend_to(1.5);
        assert_eq!(s2.t_max(), 1.5);
        s2.insert(1.23456);
        assert!(s2.times().windows(2).all(|w| w[1] > w[0]));

        let trunc = s2.truncated_at(0.5);
        assert!((trunc.t_max() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn weight_floor_applies() {
        let w = Weight::Corridor { a: 1.0, b: 2.0 };
        assert_eq!(w.lambda(1.5), 1.0);
        assert_eq!(w.lambda(3.0), WEIGHT_FLOOR);
        assert_eq!(Weight::Unit.sigma(2.0), 2.0);
        let g = Weight::Gamma;
        assert!((g.sigma(4.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn grid_and_schedule_serialize() {
        let g = uniform_grid(1.0, 3.0, 5);
        let js = serde_json::to_string(&g).unwrap();
        let g2: SpaceGrid = serde_json::from_str(&js).unwrap();
        assert_eq!(g.nodes(), g2.nodes());
        let s = TimeSchedule::build(&ScheduleConfig::with_t_max(1.0)).unwrap();
        let js = serde_json::to_string(&s).unwrap();
        let s2: TimeSchedule = serde_json::from_str(&js).unwrap();
        assert_eq!(s.times().len(), s2.times().len());
    }
}
