//! Grasp-stability quadratic program.
//!
//! Given the grasp map and the contact normals, find nonnegative normal
//! force magnitudes minimizing the net object wrench, with at least one
//! magnitude pinned to 1 so the zero solution is excluded. The pin
//! disjunction is resolved exactly by enumerating all pins (k is small);
//! each restricted problem is solved by projected gradient descent with an
//! exact line search on the quadratic.

use crate::linalg::{dot, Mat};

pub const QP_MAX_ITERS: usize = 10_000;
/// Projected-gradient convergence ceiling (relative to the gradient scale).
/// Well-conditioned instances converge two orders tighter; degenerate-bound
/// instances are accepted at this level after a long zig-zag.
pub const QP_TOLERANCE: f64 = 1e-8;
const QP_TOLERANCE_TIGHT: f64 = 1e-10;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum QpError {
    #[error("grasp stability QP needs at least 3 contacts, got {0}")]
    TooFewContacts(usize),
    #[error("dimension mismatch: grasp map has {cols} columns for {k} normals")]
    DimensionMismatch { cols: usize, k: usize },
    #[error("projected gradient did not converge: residual {residual:.3e} after {iters} iterations")]
    NoConvergence { residual: f64, iters: usize },
}

/// Result of the stability QP.
#[derive(Debug, Clone)]
pub struct QpSolution {
    /// Optimal force magnitudes, all ≥ 0, with `c_star[pinned_index] == 1`.
    pub c_star: Vec<f64>,
    /// Norm of the (torque-weighted) net wrench at the optimum.
    pub wrench_norm: f64,
    /// Which magnitude was pinned to 1 in the winning restricted problem.
    pub pinned_index: usize,
}

/// Net object wrench for force magnitudes `c` along the contact normals:
/// the grasp-map image of the stacked scaled normals.
pub fn net_wrench(g: &Mat, normals: &[[f64; 2]], c: &[f64]) -> Result<[f64; 3], QpError> {
    let k = normals.len();
    if g.cols != 2 * k || c.len() != k {
        return Err(QpError::DimensionMismatch { cols: g.cols, k });
    }
    let mut stacked = vec![0.0; 2 * k];
    for i in 0..k {
        stacked[2 * i] = c[i] * normals[i][0];
        stacked[2 * i + 1] = c[i] * normals[i][1];
    }
    let w = g.matvec(&stacked);
    Ok([w[0], w[1], w[2]])
}

/// Per-contact wrench basis: column i is the object wrench produced by a
/// unit force along normal i, with the torque row scaled by `torque_weight`.
fn wrench_basis(g: &Mat, normals: &[[f64; 2]], torque_weight: f64) -> Mat {
    let k = normals.len();
    let mut basis = Mat::zeros(3, k);
    for i in 0..k {
        for r in 0..3 {
            let v = g.get(r, 2 * i) * normals[i][0] + g.get(r, 2 * i + 1) * normals[i][1];
            basis.set(r, i, if r == 2 { torque_weight * v } else { v });
        }
    }
    basis
}

/// Solve the stability QP with default torque weighting (1.0).
pub fn solve_stability_qp(g: &Mat, normals: &[[f64; 2]]) -> Result<QpSolution, QpError> {
    solve_stability_qp_weighted(g, normals, 1.0)
}

pub fn solve_stability_qp_weighted(
    g: &Mat,
    normals: &[[f64; 2]],
    torque_weight: f64,
) -> Result<QpSolution, QpError> {
    let k = normals.len();
    if k < 3 {
        return Err(QpError::TooFewContacts(k));
    }
    if g.cols != 2 * k {
        return Err(QpError::DimensionMismatch { cols: g.cols, k });
    }
    let basis = wrench_basis(g, normals, torque_weight);

    let mut best: Option<QpSolution> = None;
    for pin in 0..k {
        let c = solve_pinned(&basis, pin)?;
        let mut stacked = vec![0.0; k];
        stacked.copy_from_slice(&c);
        let w = apply_basis(&basis, &stacked);
        let norm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        let better = match &best {
            None => true,
            // Strict improvement keeps the lowest-index pin on ties.
            Some(b) => norm < b.wrench_norm - 1e-15,
        };
        if better {
            best = Some(QpSolution {
                c_star: c,
                wrench_norm: norm,
                pinned_index: pin,
            });
        }
    }
    Ok(best.expect("k >= 3 pins attempted"))
}

fn apply_basis(basis: &Mat, c: &[f64]) -> [f64; 3] {
    let w = basis.matvec(c);
    [w[0], w[1], w[2]]
}

/// Minimize ‖basis·c‖² over c ≥ 0 with c[pin] = 1, by projected gradient
/// with exact line search. Free variables are every index except the pin.
fn solve_pinned(basis: &Mat, pin: usize) -> Result<Vec<f64>, QpError> {
    let k = basis.cols;
    let free: Vec<usize> = (0..k).filter(|&i| i != pin).collect();
    let nf = free.len();

    // f(x) = ‖b_pin + B x‖²  →  ∇f = H x + g0, H = 2BᵀB, g0 = 2Bᵀb_pin
    let mut h = Mat::zeros(nf, nf);
    let mut g0 = vec![0.0; nf];
    for a in 0..nf {
        let ca = free[a];
        for b in 0..nf {
            let cb = free[b];
            let mut s = 0.0;
            for r in 0..3 {
                s += basis.get(r, ca) * basis.get(r, cb);
            }
            h.set(a, b, 2.0 * s);
        }
        let mut s = 0.0;
        for r in 0..3 {
            s += basis.get(r, ca) * basis.get(r, pin);
        }
        g0[a] = 2.0 * s;
    }

    let objective = |x: &[f64]| -> f64 {
        let hx = h.matvec(x);
        0.5 * dot(x, &hx) + dot(&g0, x)
    };

    let g0_norm = dot(&g0, &g0).sqrt();
    let mut x = vec![0.0; nf];
    let mut iters = 0;
    loop {
        let hx = h.matvec(&x);
        let mut grad = hx.clone();
        for (gi, g0i) in grad.iter_mut().zip(&g0) {
            *gi += g0i;
        }
        // Project the gradient onto the feasible cone: at an active bound
        // (x_i = 0) only descent directions that stay feasible count.
        let mut pg = vec![0.0; nf];
        for i in 0..nf {
            if x[i] > 0.0 || grad[i] < 0.0 {
                pg[i] = grad[i];
            }
        }
        let pg_norm = dot(&pg, &pg).sqrt();
        // Relative certificate: the float floor of the gradient grows with
        // the magnitudes entering its computation.
        let grad_scale = 1.0 + g0_norm + dot(&hx, &hx).sqrt();
        if pg_norm <= QP_TOLERANCE_TIGHT * grad_scale
            || (iters >= 2000 && pg_norm <= QP_TOLERANCE * grad_scale)
        {
            break;
        }
        if iters >= QP_MAX_ITERS {
            return Err(QpError::NoConvergence {
                residual: pg_norm,
                iters,
            });
        }

        // Plain gradient steps can zig-zag on ill-conditioned instances;
        // once that shows, finish the face identification with an exact
        // active-set pass and let the loop re-verify the certificate.
        if iters > 0 && iters % 64 == 0 {
            if let Some(better) = active_set_polish(&h, &g0, &x, &objective) {
                x = better;
                iters += 1;
                continue;
            }
        }

        // Exact line search along -pg for the quadratic: t* = pgᵀpg / pgᵀH pg,
        // capped so near-null curvature directions cannot blow the iterate
        // up, then backtracked if the projection spoiled the descent.
        let hp = h.matvec(&pg);
        let denom = dot(&pg, &hp);
        let mut t = if denom > 1e-300 {
            dot(&pg, &pg) / denom
        } else {
            f64::INFINITY
        };
        let x_scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let max_step = 10.0 * x_scale / pg_norm.max(1e-300);
        t = t.min(max_step);
        let f_old = objective(&x);
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = (0..nf).map(|i| (x[i] - t * pg[i]).max(0.0)).collect();
            if objective(&cand) <= f_old {
                x = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No representable descent left along the projected gradient:
            // accept the float-limit optimum, or report a genuine stall.
            if pg_norm <= 1e-6 {
                break;
            }
            return Err(QpError::NoConvergence {
                residual: pg_norm,
                iters,
            });
        }
        iters += 1;
    }

    let mut c = vec![0.0; k];
    for (a, &i) in free.iter().enumerate() {
        c[i] = x[a];
    }
    c[pin] = 1.0;
    Ok(c)
}

/// Lawson-Hanson-style active-set pass for min ½xᵀHx + g0ᵀx over x ≥ 0.
/// Returns a strictly better feasible point than `x0`, or None. Finite by
/// construction; used to break projected-gradient zig-zags.
fn active_set_polish(
    h: &Mat,
    g0: &[f64],
    x0: &[f64],
    objective: &impl Fn(&[f64]) -> f64,
) -> Option<Vec<f64>> {
    let n = g0.len();
    let mut x = x0.to_vec();
    let mut passive: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
    let trace: f64 = (0..n).map(|i| h.get(i, i)).sum();
    let ridge = 1e-12 * (trace / n.max(1) as f64).max(1e-12);

    let solve_passive = |passive: &[bool]| -> Option<Vec<f64>> {
        let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        if idx.is_empty() {
            return Some(vec![0.0; n]);
        }
        let m = idx.len();
        let mut hp = Mat::zeros(m, m);
        let mut rhs = vec![0.0; m];
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                hp.set(a, b, h.get(ia, ib));
            }
            rhs[a] = -g0[ia];
        }
        let y = crate::linalg::solve_spd(&hp, &rhs, ridge)?;
        let mut full = vec![0.0; n];
        for (a, &ia) in idx.iter().enumerate() {
            full[ia] = y[a];
        }
        Some(full)
    };

    for _ in 0..4 * n + 8 {
        // Inner feasibility loop: pull the unconstrained face optimum back
        // into the orthant, deactivating coordinates that hit the bound.
        let mut y = solve_passive(&passive)?;
        for _ in 0..n + 1 {
            let mut alpha = 1.0f64;
            let mut blocker = None;
            for i in 0..n {
                if passive[i] && y[i] < 0.0 && x[i] > y[i] {
                    let a = x[i] / (x[i] - y[i]);
                    if a < alpha {
                        alpha = a;
                        blocker = Some(i);
                    }
                }
            }
            match blocker {
                None => break,
                Some(b) => {
                    for i in 0..n {
                        if passive[i] {
                            x[i] = (x[i] + alpha * (y[i] - x[i])).max(0.0);
                        }
                    }
                    x[b] = 0.0;
                    passive[b] = false;
                    y = solve_passive(&passive)?;
                }
            }
        }
        for i in 0..n {
            x[i] = if passive[i] { y[i].max(0.0) } else { 0.0 };
        }
        // KKT: free the most negative gradient among active bounds.
        let grad = {
            let mut g = h.matvec(&x);
            for (gi, g0i) in g.iter_mut().zip(g0) {
                *gi += g0i;
            }
            g
        };
        let mut worst = None;
        let mut worst_g = -1e-12;
        for i in 0..n {
            if !passive[i] && grad[i] < worst_g {
                worst_g = grad[i];
                worst = Some(i);
            }
        }
        match worst {
            None => break,
            Some(i) => passive[i] = true,
        }
    }

    if objective(&x) < objective(&x0.to_vec()) - 1e-18 && x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Norm of the objective gradient projected onto the feasible cone at `c`
/// (pinned coordinate held fixed). Zero at an exact optimum.
pub fn optimality_residual(
    g: &Mat,
    normals: &[[f64; 2]],
    solution: &QpSolution,
    torque_weight: f64,
) -> f64 {
    let basis = wrench_basis(g, normals, torque_weight);
    let w = apply_basis(&basis, &solution.c_star);
    let mut acc = 0.0;
    for i in 0..basis.cols {
        if i == solution.pinned_index {
            continue;
        }
        let mut grad = 0.0;
        for r in 0..3 {
            grad += 2.0 * basis.get(r, i) * w[r];
        }
        if solution.c_star[i] > 0.0 || grad < 0.0 {
            acc += grad * grad;
        }
    }
    acc.sqrt()
}

/// Brute-force reference: grid sweeps of each free coordinate over
/// [0, hi] at `step`, repeated to convergence, for every pin. For a convex
/// quadratic, cyclic coordinate minimization on the grid reaches the global
/// optimum to within the grid resolution. Used by tests and `qp-check`.
pub fn grid_oracle_wrench(
    g: &Mat,
    normals: &[[f64; 2]],
    torque_weight: f64,
    hi: f64,
    step: f64,
) -> f64 {
    let k = normals.len();
    let basis = wrench_basis(g, normals, torque_weight);
    let steps = (hi / step).round() as usize;
    let mut best = f64::INFINITY;
    for pin in 0..k {
        let mut c = vec![0.0; k];
        c[pin] = 1.0;
        let mut current = {
            let w = apply_basis(&basis, &c);
            w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
        };
        loop {
            let mut improved = false;
            for i in 0..k {
                if i == pin {
                    continue;
                }
                // Sweep coordinate i over the grid, others fixed.
                let mut best_v = c[i];
                let mut best_f = current;
                for s in 0..=steps {
                    let v = s as f64 * step;
                    let old = c[i];
                    c[i] = v;
                    let w = apply_basis(&basis, &c);
                    let f = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
                    c[i] = old;
                    if f < best_f - 1e-15 {
                        best_f = f;
                        best_v = v;
                    }
                }
                if best_v != c[i] {
                    c[i] = best_v;
                    current = best_f;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        best = best.min(current);
    }
    best.sqrt()
}
