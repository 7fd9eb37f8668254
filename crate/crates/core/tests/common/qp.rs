//! Exact ε-SVR dual solutions by enumerating every KKT state assignment.
//!
//! Each coefficient is at −C, free negative, 0, free positive or +C. For each
//! assignment the free coefficients and the offset solve a linear system; the first
//! assignment whose solution satisfies every KKT condition is optimal (the dual is
//! convex). Only practical for n ≤ 8.

pub struct QpSolution {
    pub beta: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
}

pub fn kernel_matrix(x: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    x.iter()
        .map(|a| {
            x.iter()
                .map(|b| {
                    let d: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
                    (-gamma * d).exp()
                })
                .collect()
        })
        .collect()
}

pub fn dual_objective(k: &[Vec<f64>], y: &[f64], beta: &[f64], eps: f64) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += beta[i] * beta[j] * k[i][j];
        }
    }
    -0.5 * quad - eps * beta.iter().map(|b| b.abs()).sum::<f64>()
        + y.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
}

/// Population-variance standardization, matching what the model does internally.
pub fn standardize(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len() as f64;
    let d = x[0].len();
    let mut out = x.to_vec();
    for c in 0..d {
        let mean = x.iter().map(|r| r[c]).sum::<f64>() / n;
        let sd = (x.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for r in out.iter_mut() {
            r[c] = (r[c] - mean) / sd;
        }
    }
    out
}

fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let m = b.len();
    for col in 0..m {
        let piv = (col..m).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[piv][col].abs() < 1e-13 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..m {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..m {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

pub fn solve(k: &[Vec<f64>], y: &[f64], c: f64, eps: f64) -> QpSolution {
    let n = y.len();
    let tol = 1e-9;
    let mut state = vec![0u8; n];
    loop {
        if let Some(sol) = try_state(k, y, c, eps, &state, tol) {
            return sol;
        }
        // next assignment in base 5
        let mut pos = 0;
        loop {
            assert!(pos < n, "no KKT point found");
            state[pos] += 1;
            if state[pos] < 5 {
                break;
            }
            state[pos] = 0;
            pos += 1;
        }
    }
}

// 0: β = 0, 1: β = C, 2: β = −C, 3: free positive, 4: free negative
fn try_state(
    k: &[Vec<f64>],
    y: &[f64],
    c: f64,
    eps: f64,
    state: &[u8],
    tol: f64,
) -> Option<QpSolution> {
    let n = y.len();
    let mut beta = vec![0.0; n];
    let free: Vec<usize> = (0..n).filter(|&i| state[i] >= 3).collect();
    for i in 0..n {
        match state[i] {
            1 => beta[i] = c,
            2 => beta[i] = -c,
            _ => {}
        }
    }
    let fixed_sum: f64 = beta.iter().sum();
    let bias;
    if free.is_empty() {
        if fixed_sum.abs() > tol {
            return None;
        }
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let kb: f64 = (0..n).map(|j| k[i][j] * beta[j]).sum();
            let base = y[i] - kb; // residual = base − b
            match state[i] {
                0 => {
                    lo = lo.max(base - eps);
                    hi = hi.min(base + eps);
                }
                1 => hi = hi.min(base - eps),
                _ => lo = lo.max(base + eps),
            }
        }
        if lo > hi + tol {
            return None;
        }
        bias = 0.5 * (lo + hi);
    } else {
        let m = free.len();
        let mut a = vec![vec![0.0; m + 1]; m + 1];
        let mut rhs = vec![0.0; m + 1];
        for (r, &i) in free.iter().enumerate() {
            for (cc, &j) in free.iter().enumerate() {
                a[r][cc] = k[i][j];
            }
            a[r][m] = 1.0;
            let sigma = if state[i] == 3 { 1.0 } else { -1.0 };
            let fixed: f64 = (0..n)
                .filter(|j| state[*j] < 3)
                .map(|j| k[i][j] * beta[j])
                .sum();
            rhs[r] = y[i] - sigma * eps - fixed;
        }
        for cc in 0..m {
            a[m][cc] = 1.0;
        }
        rhs[m] = -fixed_sum;
        let sol = solve_linear(a, rhs)?;
        for (r, &i) in free.iter().enumerate() {
            let v = sol[r];
            let ok = if state[i] == 3 {
                v >= -tol && v <= c + tol
            } else {
                v <= tol && v >= -c - tol
            };
            if !ok {
                return None;
            }
            beta[i] = v;
        }
        bias = sol[m];
        for i in 0..n {
            if state[i] >= 3 {
                continue;
            }
            let f: f64 = (0..n).map(|j| k[i][j] * beta[j]).sum::<f64>() + bias;
            let r = y[i] - f;
            let ok = match state[i] {
                0 => r.abs() <= eps + tol,
                1 => r >= eps - tol,
                _ => r <= -eps + tol,
            };
            if !ok {
                return None;
            }
        }
    }
    let objective = dual_objective(k, y, &beta, eps);
    Some(QpSolution {
        beta,
        bias,
        objective,
    })
}
