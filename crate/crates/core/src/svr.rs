//! Linear epsilon-insensitive support vector regression.
//!
//! Minimizes `0.5 * |w|^2 + penalty * sum(max(0, |y_i - w.x_i| - epsilon))`
//! by coordinate descent on the dual, where each dual variable lives in
//! `[-penalty, penalty]` and `w = sum(beta_i * x_i)`. Rows are sparse.

/// One sparse design row: `(column, value)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrConfig {
    pub epsilon: f64,
    pub penalty: f64,
    /// Passes over the data.
    pub max_iterations: usize,
    /// Largest dual step in a pass below which the solver stops.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrSolution {
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(row: &SparseRow, w: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| v * w[j]).sum()
}

/// Solves the problem on columns rescaled to unit max-magnitude; the returned
/// weights are in the original column units.
pub fn fit_linear_svr(rows: &[SparseRow], y: &[f64], ncols: usize, config: &SvrConfig) -> SvrSolution {
    assert_eq!(rows.len(), y.len());
    let mut scale = vec![0.0f64; ncols];
    for row in rows {
        for &(j, v) in row {
            scale[j] = scale[j].max(v.abs());
        }
    }
    for s in &mut scale {
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let scaled: Vec<SparseRow> = rows
        .iter()
        .map(|row| row.iter().map(|&(j, v)| (j, v / scale[j])).collect())
        .collect();
    let diag: Vec<f64> = scaled.iter().map(|r| r.iter().map(|&(_, v)| v * v).sum()).collect();

    let c = config.penalty;
    let mut beta = vec![0.0f64; rows.len()];
    let mut w = vec![0.0f64; ncols];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        let mut largest_step = 0.0f64;
        for i in 0..scaled.len() {
            let q = diag[i];
            if q == 0.0 {
                continue;
            }
            let g = dot(&scaled[i], &w) - y[i];
            let z = beta[i] - g / q;
            let shrunk = z.signum() * (z.abs() - config.epsilon / q).max(0.0);
            let next = shrunk.clamp(-c, c);
            let step = next - beta[i];
            if step != 0.0 {
                for &(j, v) in &scaled[i] {
                    w[j] += step * v;
                }
                beta[i] = next;
                largest_step = largest_step.max(step.abs() * q.sqrt());
            }
        }
        if largest_step < config.tolerance {
            converged = true;
            break;
        }
    }
    let weights = w.iter().zip(&scale).map(|(wj, s)| wj / s).collect();
    SvrSolution {
        weights,
        iterations,
        converged,
    }
}
