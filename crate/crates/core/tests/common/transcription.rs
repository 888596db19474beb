//! Direct-transcription reference for the minimum-effort problem.
//!
//! The control is piecewise linear on a uniform grid, so the states and the
//! effort are exact quadratic/linear functions of the nodal controls. The
//! resulting QP is solved with a primal-dual active-set iteration and the KKT
//! conditions are verified before a solution is returned.

use cav_corridor::trajectory::linalg::solve_dense;

pub struct Transcription {
    pub t0: f64,
    pub h: f64,
    pub n: usize,
    pub p0: f64,
    pub v0: f64,
    /// `g[k][j]`: sensitivity of `p(t_k)` to `u_j`.
    g: Vec<Vec<f64>>,
}

pub struct OracleSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub v: Vec<f64>,
    pub effort: f64,
    pub active: usize,
}

impl OracleSolution {
    pub fn times(&self, t0: f64, h: f64) -> Vec<f64> {
        (0..self.p.len()).map(|k| t0 + h * k as f64).collect()
    }
}

impl Transcription {
    pub fn new(t0: f64, tf: f64, p0: f64, v0: f64, n: usize) -> Self {
        let h = (tf - t0) / n as f64;
        // p_{k+1} = p_k + h v_k + h²(2u_k + u_{k+1})/6, v_{k+1} = v_k + h(u_k + u_{k+1})/2
        let mut g = vec![vec![0.0; n + 1]; n + 1];
        let mut gv = vec![0.0; n + 1];
        for k in 0..n {
            let mut next = g[k].clone();
            for j in 0..=n {
                next[j] += h * gv[j];
            }
            next[k] += h * h / 3.0;
            next[k + 1] += h * h / 6.0;
            gv[k] += h / 2.0;
            gv[k + 1] += h / 2.0;
            g[k + 1] = next;
        }
        Self { t0, h, n, p0, v0, g }
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + self.h * k as f64
    }

    fn mass(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let h = self.h;
        let mut m = vec![vec![0.0; n + 1]; n + 1];
        for k in 0..n {
            m[k][k] += h / 3.0;
            m[k + 1][k + 1] += h / 3.0;
            m[k][k + 1] += h / 6.0;
            m[k + 1][k] += h / 6.0;
        }
        m
    }

    fn free_position(&self, k: usize) -> f64 {
        self.p0 + self.v0 * self.h * k as f64
    }

    fn states(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![self.p0];
        let mut v = vec![self.v0];
        for k in 0..self.n {
            let (pk, vk) = (p[k], v[k]);
            p.push(pk + self.h * vk + self.h * self.h * (2.0 * u[k] + u[k + 1]) / 6.0);
            v.push(vk + self.h * (u[k] + u[k + 1]) / 2.0);
        }
        (p, v)
    }

    /// Minimises `½∫u²` subject to `p(tf) = pf`, `u(tf) = 0` and
    /// `p(t_k) ≤ upper[k]` for every interior grid point with a finite bound.
    pub fn solve(&self, pf: f64, upper: &[f64]) -> Result<OracleSolution, String> {
        let n = self.n;
        let dim = n + 1;
        let m = self.mass();
        let cons: Vec<usize> = (1..n).filter(|&k| upper[k].is_finite()).collect();

        // Equality-constrained KKT matrix, shared by every solve below.
        let size = dim + 2;
        let mut kkt = vec![vec![0.0; size]; size];
        for i in 0..dim {
            kkt[i][..dim].copy_from_slice(&m[i]);
            kkt[i][dim] = self.g[n][i];
            kkt[dim][i] = self.g[n][i];
        }
        kkt[n][dim + 1] = 1.0;
        kkt[dim + 1][n] = 1.0;

        let mut rhs = vec![vec![0.0; size]];
        rhs[0][dim] = pf - self.free_position(n);
        for &k in &cons {
            let mut r = self.g[k].clone();
            r.extend([0.0, 0.0]);
            rhs.push(r);
        }
        let sols = solve_many(kkt, rhs).ok_or("singular KKT system")?;
        let u_free = &sols[0][..dim];
        let y: Vec<&[f64]> = sols[1..].iter().map(|s| &s[..dim]).collect();

        // Dual: minimise ½λᵀQλ − cᵀλ over λ ≥ 0.
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, z)| x * z).sum::<f64>();
        let nc = cons.len();
        let q: Vec<Vec<f64>> = (0..nc)
            .map(|i| (0..nc).map(|j| dot(&self.g[cons[i]], y[j])).collect())
            .collect();
        let c: Vec<f64> = cons
            .iter()
            .map(|&k| self.free_position(k) + dot(&self.g[k], u_free) - upper[k])
            .collect();
        let lambda = nonneg_qp(&q, &c)?;

        let mut u = u_free.to_vec();
        for (j, l) in lambda.iter().enumerate() {
            if *l != 0.0 {
                for i in 0..dim {
                    u[i] -= l * y[j][i];
                }
            }
        }
        let slack: Vec<f64> = cons
            .iter()
            .map(|&k| self.free_position(k) + dot(&self.g[k], &u) - upper[k])
            .collect();
        let worst_slack = slack.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let worst_comp = slack
            .iter()
            .zip(&lambda)
            .map(|(s, l)| (s * l).abs())
            .fold(0.0, f64::max);
        if worst_slack > 1e-8 || worst_comp > 1e-8 {
            return Err(format!(
                "KKT check failed: slack {worst_slack:e}, complementarity {worst_comp:e}"
            ));
        }
        let mu: Vec<f64> = m.iter().map(|row| dot(row, &u)).collect();
        let effort = 0.5 * dot(&mu, &u);
        let (p, v) = self.states(&u);
        Ok(OracleSolution {
            u,
            p,
            v,
            effort,
            active: lambda.iter().filter(|l| **l > 0.0).count(),
        })
    }
}

/// Lawson–Hanson style active set for `min ½xᵀQx − cᵀx, x ≥ 0` with `Q`
/// positive definite.
fn nonneg_qp(q: &[Vec<f64>], c: &[f64]) -> Result<Vec<f64>, String> {
    let n = c.len();
    let mut x = vec![0.0; n];
    let mut free = vec![false; n];
    let grad = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| c[i] - q[i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    };
    for _ in 0..10 * n + 10 {
        let w = grad(&x);
        let pick = (0..n)
            .filter(|&i| !free[i] && w[i] > 1e-12)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = pick else {
            return Ok(x);
        };
        free[j] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
            let sub: Vec<Vec<f64>> = idx.iter().map(|&i| idx.iter().map(|&k| q[i][k]).collect()).collect();
            let rhs: Vec<f64> = idx.iter().map(|&i| c[i]).collect();
            let z = solve_dense(sub, rhs).ok_or("singular dual subproblem")?;
            if z.iter().all(|v| *v > 0.0) {
                for (pos, &i) in idx.iter().enumerate() {
                    x[i] = z[pos];
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (pos, &i) in idx.iter().enumerate() {
                if z[pos] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - z[pos]));
                }
            }
            for (pos, &i) in idx.iter().enumerate() {
                x[i] += alpha * (z[pos] - x[i]);
                if x[i] <= 1e-15 {
                    x[i] = 0.0;
                    free[i] = false;
                }
            }
        }
    }
    Err("dual active set did not terminate".into())
}

/// Gauss-Jordan elimination against several right-hand sides at once.
fn solve_many(mut a: Vec<Vec<f64>>, rhs: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let k = rhs.len();
    let mut b: Vec<Vec<f64>> = (0..n).map(|i| rhs.iter().map(|r| r[i]).collect()).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        a[col].iter_mut().for_each(|x| *x /= d);
        b[col].iter_mut().for_each(|x| *x /= d);
        let (pa, pb) = (a[col].clone(), b[col].clone());
        for row in 0..n {
            if row == col || a[row][col] == 0.0 {
                continue;
            }
            let f = a[row][col];
            for (x, y) in a[row][col..].iter_mut().zip(&pa[col..]) {
                *x -= f * y;
            }
            for (x, y) in b[row].iter_mut().zip(&pb) {
                *x -= f * y;
            }
        }
    }
    Some((0..k).map(|j| (0..n).map(|i| b[i][j]).collect()).collect())
}
