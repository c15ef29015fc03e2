//! Linear complementarity problems w = Az + q, z ≥ 0, w ≥ 0, zᵀw = 0,
//! solved by the complementary-pivot (Lemke) method with warm-started
//! complementary bases.

use serde::Serialize;

use crate::error::{Error, Result};

/// Coefficient matrix, banded where the PDE stepping produces one and dense
/// as a fallback for general problems.
#[derive(Debug, Clone, Serialize)]
pub enum LcpMatrix {
    Tridiagonal {
        lower: Vec<f64>,
        diag: Vec<f64>,
        upper: Vec<f64>,
    },
    Dense {
        n: usize,
        /// Row-major entries.
        data: Vec<f64>,
    },
}

impl LcpMatrix {
    pub fn n(&self) -> usize {
        match self {
            LcpMatrix::Tridiagonal { diag, .. } => diag.len(),
            LcpMatrix::Dense { n, .. } => *n,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            LcpMatrix::Tridiagonal { lower, diag, upper } => {
                if i == j {
                    diag[i]
                } else if j + 1 == i {
                    lower[i]
                } else if j == i + 1 {
                    upper[i]
                } else {
                    0.0
                }
            }
            LcpMatrix::Dense { n, data } => data[i * n + j],
        }
    }

    pub fn mul(&self, z: &[f64], out: &mut [f64]) {
        let n = self.n();
        match self {
            LcpMatrix::Tridiagonal { lower, diag, upper } => {
                for i in 0..n {
                    let mut acc = diag[i] * z[i];
                    if i > 0 {
                        acc += lower[i] * z[i - 1];
                    }
                    if i + 1 < n {
                        acc += upper[i] * z[i + 1];
                    }
                    out[i] = acc;
                }
            }
            LcpMatrix::Dense { n, data } => {
                for i in 0..*n {
                    out[i] = data[i * n..(i + 1) * n]
                        .iter()
                        .zip(z)
                        .map(|(a, b)| a * b)
                        .sum();
                }
            }
        }
    }

    /// Solve A_BB z_B = −q_B over the index set marked in `basis`, returning
    /// the full-length z (zeros off the basis). None when a principal block
    /// is singular.
    fn principal_solve(&self, basis: &[bool], q: &[f64]) -> Option<Vec<f64>> {
        let n = self.n();
        let mut z = vec![0.0; n];
        match self {
            LcpMatrix::Tridiagonal { lower, diag, upper } => {
                // contiguous runs of basic indices stay tridiagonal
                let mut i = 0;
                while i < n {
                    if !basis[i] {
                        i += 1;
                        continue;
                    }
                    let start = i;
                    while i < n && basis[i] {
                        i += 1;
                    }
                    let end = i; // run [start, end)
                    let m = end - start;
                    let mut c = vec![0.0; m]; // modified upper
                    let mut d = vec![0.0; m]; // modified rhs
                    for k in 0..m {
                        let row = start + k;
                        let a = if k > 0 { lower[row] } else { 0.0 };
                        let b = diag[row];
                        let cc = if k + 1 < m { upper[row] } else { 0.0 };
                        let rhs = -q[row];
                        if k == 0 {
                            if b.abs() < 1e-300 {
                                return None;
                            }
                            c[k] = cc / b;
                            d[k] = rhs / b;
                        } else {
                            let denom = b - a * c[k - 1];
                            if denom.abs() < 1e-300 {
                                return None;
                            }
                            c[k] = cc / denom;
                            d[k] = (rhs - a * d[k - 1]) / denom;
                        }
                    }
                    for k in (0..m).rev() {
                        z[start + k] = d[k]
                            - if k + 1 < m {
                                c[k] * z[start + k + 1]
                            } else {
                                0.0
                            };
                    }
                }
                Some(z)
            }
            LcpMatrix::Dense { n, data } => {
                let idx: Vec<usize> = (0..*n).filter(|&i| basis[i]).collect();
                let m = idx.len();
                if m == 0 {
                    return Some(z);
                }
                let mut a = vec![0.0; m * m];
                let mut rhs = vec![0.0; m];
                for (r, &i) in idx.iter().enumerate() {
                    rhs[r] = -q[i];
                    for (c, &j) in idx.iter().enumerate() {
                        a[r * m + c] = data[i * n + j];
                    }
                }
                let sol = dense_solve(&mut a, &mut rhs, m)?;
                for (r, &i) in idx.iter().enumerate() {
                    z[i] = sol[r];
                }
                Some(z)
            }
        }
    }
}

/// Gaussian elimination with partial pivoting; consumes its inputs.
fn dense_solve(a: &mut [f64], rhs: &mut [f64], m: usize) -> Option<Vec<f64>> {
    let mut perm: Vec<usize> = (0..m).collect();
    for col in 0..m {
        let mut best = col;
        let mut best_val = a[perm[col] * m + col].abs();
        for r in col + 1..m {
            let v = a[perm[r] * m + col].abs();
            if v > best_val {
                best = r;
                best_val = v;
            }
        }
        if best_val < 1e-300 {
            return None;
        }
        perm.swap(col, best);
        let prow = perm[col];
        let pivot = a[prow * m + col];
        for r in col + 1..m {
            let row = perm[r];
            let factor = a[row * m + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..m {
                a[row * m + c] -= factor * a[prow * m + c];
            }
            rhs[row] -= factor * rhs[prow];
        }
    }
    let mut x = vec![0.0; m];
    for col in (0..m).rev() {
        let row = perm[col];
        let mut acc = rhs[row];
        for c in col + 1..m {
            acc -= a[row * m + c] * x[c];
        }
        x[col] = acc / a[row * m + col];
    }
    Some(x)
}

#[derive(Debug, Clone, Serialize)]
pub struct LcpProblem {
    pub matrix: LcpMatrix,
    pub q: Vec<f64>,
}

impl LcpProblem {
    pub fn tridiagonal(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>, q: Vec<f64>) -> Self {
        LcpProblem {
            matrix: LcpMatrix::Tridiagonal { lower, diag, upper },
            q,
        }
    }

    pub fn dense(n: usize, data: Vec<f64>, q: Vec<f64>) -> Self {
        LcpProblem {
            matrix: LcpMatrix::Dense { n, data },
            q,
        }
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    /// JSON dump of the problem and a candidate solution for failure triage.
    pub fn debug_json(&self, solution: Option<&LcpSolution>) -> String {
        #[derive(Serialize)]
        struct Dump<'a> {
            problem: &'a LcpProblem,
            solution: Option<&'a LcpSolution>,
        }
        serde_json::to_string_pretty(&Dump {
            problem: self,
            solution,
        })
        .unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
    }
}

/// How the solution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LcpMethod {
    /// q ≥ 0, trivial complementary basis.
    Trivial,
    /// Direct solve on the hinted basis verified immediately.
    WarmDirect,
    /// Hinted basis needed principal-pivot repair sweeps.
    Repaired { sweeps: usize },
    /// Full complementary-pivot run.
    Lemke,
}

#[derive(Debug, Clone, Serialize)]
pub struct LcpSolution {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    /// Indices where z is basic.
    pub basis: Vec<usize>,
    /// Lemke pivot count (0 for warm/repaired solves).
    pub pivots: usize,
    pub method: LcpMethod,
}

impl LcpSolution {
    /// max_i |min(z_i, w_i)|; complementarity and feasibility in one number.
    pub fn residual(&self) -> f64 {
        self.z
            .iter()
            .zip(&self.w)
            .map(|(&z, &w)| z.min(w).abs())
            .fold(0.0, f64::max)
    }
}

fn q_scale(q: &[f64]) -> f64 {
    1.0 + q.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn finalize(matrix: &LcpMatrix, q: &[f64], mut z: Vec<f64>, pivots: usize, method: LcpMethod) -> LcpSolution {
    for zi in z.iter_mut() {
        if *zi < 0.0 {
            *zi = 0.0;
        }
    }
    let mut w = vec![0.0; q.len()];
    matrix.mul(&z, &mut w);
    for (wi, qi) in w.iter_mut().zip(q) {
        *wi += qi;
    }
    let basis: Vec<usize> = z
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, _)| i)
        .collect();
    LcpSolution {
        z,
        w,
        basis,
        pivots,
        method,
    }
}

/// Solve the LCP by Lemke's complementary-pivot method.
///
/// With a `basis_hint` the solver first attempts the direct complementary
/// solve on that basis (zero pivots when the hint is exact), then bounded
/// principal-pivot repair sweeps, and only then falls back to a full Lemke
/// run with lexicographic degeneracy resolution and an all-ones covering
/// vector.
pub fn lemke_solve(problem: &LcpProblem, basis_hint: Option<&[usize]>) -> Result<LcpSolution> {
    let n = problem.n();
    if problem.matrix.n() != n {
        return Err(Error::invalid_input("matrix and q dimensions differ"));
    }
    let tol = 1e-11 * q_scale(&problem.q);

    if problem.q.iter().all(|&v| v >= 0.0) {
        return Ok(finalize(&problem.matrix, &problem.q, vec![0.0; n], 0, LcpMethod::Trivial));
    }

    if let Some(hint) = basis_hint {
        let mut mask = vec![false; n];
        for &i in hint {
            if i >= n {
                return Err(Error::invalid_input("basis hint index out of range"));
            }
            mask[i] = true;
        }
        if let Some(sol) = try_basis(&problem.matrix, &problem.q, &mask, tol) {
            return Ok(finalize(&problem.matrix, &problem.q, sol, 0, LcpMethod::WarmDirect));
        }
        if let Some((z, sweeps)) = principal_repair(&problem.matrix, &problem.q, &mut mask, tol, 64) {
            return Ok(finalize(
                &problem.matrix,
                &problem.q,
                z,
                0,
                LcpMethod::Repaired { sweeps },
            ));
        }
    }

    lemke_tableau(problem)
}

/// Direct complementary solve on a fixed basis; Some(z) when it verifies.
fn try_basis(matrix: &LcpMatrix, q: &[f64], mask: &[bool], tol: f64) -> Option<Vec<f64>> {
    let z = matrix.principal_solve(mask, q)?;
    let n = q.len();
    let mut w = vec![0.0; n];
    matrix.mul(&z, &mut w);
    for i in 0..n {
        w[i] += q[i];
        if mask[i] {
            if z[i] < -tol {
                return None;
            }
        } else if w[i] < -tol {
            return None;
        }
    }
    Some(z)
}

/// Principal-pivot (policy-iteration) repair of a near-correct basis. Each
/// sweep is one banded solve; converges in a few sweeps when the active set
/// moved by a few indices, and bails out on cycling.
fn principal_repair(
    matrix: &LcpMatrix,
    q: &[f64],
    mask: &mut [bool],
    tol: f64,
    max_sweeps: usize,
) -> Option<(Vec<f64>, usize)> {
    let n = q.len();
    let mut seen: std::collections::HashSet<Vec<u64>> = std::collections::HashSet::new();
    for sweep in 1..=max_sweeps {
        let key: Vec<u64> = mask
            .chunks(64)
            .map(|c| c.iter().enumerate().fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i)))
            .collect();
        if !seen.insert(key) {
            return None; // cycle
        }
        let z = matrix.principal_solve(mask, q)?;
        let mut w = vec![0.0; n];
        matrix.mul(&z, &mut w);
        let mut changed = false;
        for i in 0..n {
            w[i] += q[i];
            if mask[i] && z[i] < -tol {
                mask[i] = false;
                changed = true;
            } else if !mask[i] && w[i] < -tol {
                mask[i] = true;
                changed = true;
            }
        }
        if !changed {
            return Some((z, sweep));
        }
    }
    None
}

/// Full Lemke run on an explicit tableau.
fn lemke_tableau(problem: &LcpProblem) -> Result<LcpSolution> {
    let n = problem.n();
    let q = &problem.q;
    // variable indexing: 0 = z0, 1..=n are z_i, n+1..=2n are w_i
    let z0 = 0usize;
    let zvar = |i: usize| 1 + i;
    let wvar = |i: usize| 1 + n + i;
    let ncols = 2 * n + 2;
    let qcol = 2 * n + 1;

    // row equations: w_i − Σ m_ij z_j − z0 = q_i
    let mut t = vec![vec![0.0; ncols]; n];
    for i in 0..n {
        t[i][wvar(i)] = 1.0;
        for j in 0..n {
            let m = problem.matrix.get(i, j);
            if m != 0.0 {
                t[i][zvar(j)] = -m;
            }
        }
        t[i][z0] = -1.0;
        t[i][qcol] = q[i];
    }
    let mut basis: Vec<usize> = (0..n).map(wvar).collect();

    let pivot = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, row: usize, col: usize| {
        let p = t[row][col];
        for c in 0..ncols {
            t[row][c] /= p;
        }
        for r in 0..t.len() {
            if r != row && t[r][col] != 0.0 {
                let f = t[r][col];
                for c in 0..ncols {
                    t[r][c] -= f * t[row][c];
                }
                t[r][col] = 0.0;
            }
        }
        basis[row] = col;
    };

    // initial pivot: z0 enters at the most negative q row
    let mut row0 = 0;
    for i in 1..n {
        if t[i][qcol] < t[row0][qcol] {
            row0 = i;
        }
    }
    if t[row0][qcol] >= 0.0 {
        return Ok(finalize(&problem.matrix, q, vec![0.0; n], 0, LcpMethod::Trivial));
    }
    let mut leaving_var = basis[row0];
    pivot(&mut t, &mut basis, row0, z0);
    let mut pivots = 1usize;
    let max_pivots = 50 * n + 200;
    let piv_tol = 1e-11 * q_scale(q);

    loop {
        // entering variable: complement of the one that just left
        let entering = if leaving_var == z0 {
            unreachable!("z0 leaving ends the loop before re-entry");
        } else if leaving_var <= n {
            wvar(leaving_var - 1)
        } else {
            zvar(leaving_var - 1 - n)
        };

        // lexicographic minimum ratio test over rows with positive column entry
        let mut candidates: Vec<usize> = Vec::new();
        let mut best_ratio = f64::INFINITY;
        for r in 0..n {
            let coef = t[r][entering];
            if coef > piv_tol {
                let ratio = t[r][qcol] / coef;
                if ratio < best_ratio - 1e-13 * (1.0 + ratio.abs()) {
                    best_ratio = ratio;
                    candidates.clear();
                    candidates.push(r);
                } else if (ratio - best_ratio).abs() <= 1e-13 * (1.0 + ratio.abs()) {
                    candidates.push(r);
                }
            }
        }
        if candidates.is_empty() {
            return Err(Error::LcpRay { pivots });
        }
        let mut row = candidates[0];
        if candidates.len() > 1 {
            // compare rows of the (transformed) w-block lexicographically
            for col in 0..n {
                if candidates.len() == 1 {
                    break;
                }
                let vals: Vec<f64> = candidates
                    .iter()
                    .map(|&r| t[r][wvar(col)] / t[r][entering])
                    .collect();
                let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let keep: Vec<usize> = candidates
                    .iter()
                    .zip(&vals)
                    .filter(|(_, &v)| v <= min + 1e-12 * (1.0 + min.abs()))
                    .map(|(&r, _)| r)
                    .collect();
                candidates = keep;
            }
            row = candidates[0];
        }

        leaving_var = basis[row];
        pivot(&mut t, &mut basis, row, entering);
        pivots += 1;

        if leaving_var == z0 {
            let mut z = vec![0.0; n];
            for (r, &b) in basis.iter().enumerate() {
                if (1..=n).contains(&b) {
                    z[b - 1] = t[r][qcol];
                }
            }
            return Ok(finalize(&problem.matrix, q, z, pivots, LcpMethod::Lemke));
        }
        if pivots > max_pivots {
            let mut z = vec![0.0; n];
            for (r, &b) in basis.iter().enumerate() {
                if (1..=n).contains(&b) {
                    z[b - 1] = t[r][qcol];
                }
            }
            let sol = finalize(&problem.matrix, q, z, pivots, LcpMethod::Lemke);
            return Err(Error::LcpMaxPivots {
                pivots,
                residual: sol.residual(),
            });
        }
    }
}

/// Exhaustive complementary-basis enumeration; exact oracle for n ≤ 12.
pub fn brute_force_lcp(problem: &LcpProblem) -> Result<LcpSolution> {
    let n = problem.n();
    if n > 12 {
        return Err(Error::invalid_input("brute force limited to n <= 12"));
    }
    let tol = 1e-12 * q_scale(&problem.q);
    for bits in 0u32..(1 << n) {
        let mask: Vec<bool> = (0..n).map(|i| bits & (1 << i) != 0).collect();
        if let Some(z) = try_basis(&problem.matrix, &problem.q, &mask, tol) {
            return Ok(finalize(&problem.matrix, &problem.q, z, 0, LcpMethod::Trivial));
        }
    }
    Err(Error::numerical("no feasible complementary basis"))
}
