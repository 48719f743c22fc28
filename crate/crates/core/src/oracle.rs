//! Reference computations that share no kernels with the modules they check:
//! tensor Gauss–Legendre quadrature in the parameters, subset-enumeration
//! worst-case errors, Stechkin tail bounds and the weight condition on
//! truncation differences.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fem::LevelSystem;
use crate::qmc::{LatticeRule, PodWeights};

/// Largest tensor grid evaluated.
pub const TENSOR_BUDGET: usize = 10_000_000;

/// Gauss–Legendre rule on `[-1/2, 1/2]` from the eigen-decomposition of the
/// Jacobi matrix; weights sum to one.
pub fn golub_welsch(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(invalid("nodes_per_dim", "must be at least 1"));
    }
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let off = kf / (4.0 * kf * kf - 1.0).sqrt();
        jacobi[(k, k - 1)] = off;
        jacobi[(k - 1, k)] = off;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            // on [-1, 1] the weight is 2 v0²; map to [-1/2, 1/2] with unit mass
            (0.5 * eig.eigenvalues[i], v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// Value of a reference computation and how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceResult {
    pub value: f64,
    pub method: &'static str,
    pub nodes_per_dim: usize,
    pub s: usize,
    pub mesh_level: Option<usize>,
    /// `|Q_n − Q_{n−1}|` for the tensor rule with one node fewer per axis.
    pub residual_estimate: f64,
}

/// `∫_{[-1/2,1/2]^s} F` by the tensor Gauss rule with `nodes` points per axis.
/// Node values are reduced in lexicographic order.
pub fn tensor_quadrature<F>(s: usize, nodes: usize, integrand: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let total = (nodes as f64).powi(s as i32);
    if total > TENSOR_BUDGET as f64 {
        return Err(Error::BudgetExceeded(format!(
            "{nodes}^{s} tensor nodes exceed the budget of {TENSOR_BUDGET}"
        )));
    }
    let (x, w) = golub_welsch(nodes)?;
    let count = total as usize;
    let values: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|flat| {
            let mut y = vec![0.0; s];
            let mut weight = 1.0;
            let mut rest = flat;
            for yj in y.iter_mut() {
                let k = rest % nodes;
                rest /= nodes;
                *yj = x[k];
                weight *= w[k];
            }
            Ok(weight * integrand(&y)?)
        })
        .collect::<Result<_>>()?;
    // Neumaier summation in index order
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    Ok(sum + c)
}

/// `I_s(G(u_h^s))` on the mesh of `system` by tensor quadrature.
pub fn tensor_quadrature_reference(system: &LevelSystem<f64>, nodes_per_dim: usize) -> Result<ReferenceResult> {
    let s = system.truncation();
    let g = |y: &[f64]| system.g_value(y);
    let value = tensor_quadrature(s, nodes_per_dim, g)?;
    let residual_estimate = if nodes_per_dim > 1 {
        (value - tensor_quadrature(s, nodes_per_dim - 1, g)?).abs()
    } else {
        f64::INFINITY
    };
    Ok(ReferenceResult {
        value,
        method: "tensor Gauss-Legendre",
        nodes_per_dim,
        s,
        mesh_level: Some(system.mesh().level()),
        residual_estimate,
    })
}

/// Telescoped multi-level target `Σ_ℓ I_{s_ℓ}(G(u_ℓ^{s_ℓ}) − G(u_{ℓ−1}^{s_{ℓ−1}}))`
/// by tensor quadrature over the largest truncation.
pub fn telescoped_reference(systems: &[LevelSystem<f64>], nodes_per_dim: usize) -> Result<ReferenceResult> {
    let top = systems
        .last()
        .ok_or_else(|| invalid("systems", "need at least one level"))?;
    let s = systems.iter().map(|sys| sys.truncation()).max().unwrap_or(0);
    let integrand = |y: &[f64]| -> Result<f64> {
        let mut acc = 0.0;
        let mut coarse = 0.0;
        for sys in systems {
            let fine = sys.g_value(y)?;
            acc += fine - coarse;
            coarse = fine;
        }
        Ok(acc)
    };
    let value = tensor_quadrature(s, nodes_per_dim, integrand)?;
    let residual_estimate = if nodes_per_dim > 1 {
        (value - tensor_quadrature(s, nodes_per_dim - 1, integrand)?).abs()
    } else {
        f64::INFINITY
    };
    Ok(ReferenceResult {
        value,
        method: "tensor Gauss-Legendre (telescoped)",
        nodes_per_dim,
        s,
        mesh_level: Some(top.mesh().level()),
        residual_estimate,
    })
}

/// `min(1/(1/p − 1), 1) (Σ b_j^p)^{1/p} s^{−(1/p−1)}`; `tail_p_sum` adds a
/// declared analytic bound on `Σ b_j^p` beyond the supplied terms.
pub fn stechkin_tail(b: &[f64], p: f64, s: usize, tail_p_sum: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("p", format!("{p} must lie in (0, 1)")));
    }
    if s == 0 {
        return Err(invalid("s", "must be at least 1"));
    }
    for (j, w) in b.windows(2).enumerate() {
        if w[1] > w[0] {
            return Err(Error::NotMonotone { index: j + 1 });
        }
    }
    if b.iter().any(|&v| v < 0.0) || tail_p_sum < 0.0 {
        return Err(invalid("b", "entries must be nonnegative"));
    }
    let r = 1.0 / p - 1.0;
    let sum: f64 = b.iter().map(|v| v.powf(p)).sum::<f64>() + tail_p_sum;
    Ok((1.0 / r).min(1.0) * sum.powf(1.0 / p) * (s as f64).powf(-r))
}

/// Both sides of the weight condition and their ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationConditionReport {
    pub s_prev: usize,
    pub s_curr: usize,
    pub left: f64,
    pub right: f64,
    pub ratio: f64,
}

/// Left: `Σ_{u ⊆ 1:s_curr, u ∩ {s_prev+1:s_curr} ≠ ∅} (|u|!)² Π b_j² / γ_u`.
/// Right: `s_prev^{−2α} Σ_{u ⊆ 1:s_curr} ((|u|+n)!)² Π b_j² / γ_u`.
///
/// Both sums are accumulated per order with the factorials folded into the
/// recursion; `max_order` truncates the order (all orders when `None`).
pub fn verify_truncation_condition(
    w: &PodWeights,
    b: &[f64],
    s_prev: usize,
    s_curr: usize,
    n: usize,
    alpha: f64,
    max_order: Option<usize>,
) -> Result<TruncationConditionReport> {
    if !(s_prev >= 1 && s_prev < s_curr) {
        return Err(invalid("s_prev", format!("need 1 ≤ s_prev < s_curr, got {s_prev}, {s_curr}")));
    }
    if s_curr > w.s_max() || s_curr > b.len() {
        return Err(Error::DimensionMismatch {
            expected: s_curr,
            found: w.s_max().min(b.len()),
        });
    }
    let top = max_order.unwrap_or(s_curr).min(s_curr);
    let inv = 2.0 / (1.0 + w.lambda());
    // factor ratios between consecutive orders: Γ_ℓ/Γ_{ℓ−1} = (ℓ+3)^{2/(1+λ)}
    let gamma_ratio = |l: usize| ((l + 3) as f64).powf(inv);
    let left_ratio = |l: usize| (l * l) as f64 / gamma_ratio(l);
    let right_ratio = |l: usize| ((l + n) * (l + n)) as f64 / gamma_ratio(l);
    let n_fact_sq: f64 = (1..=n).map(|k| k as f64).product::<f64>().powi(2);

    // all[ℓ]: every subset so far; hit[ℓ]: subsets meeting the new block
    let mut all = vec![0.0; top + 1];
    let mut hit = vec![0.0; top + 1];
    let mut right = vec![0.0; top + 1];
    all[0] = 1.0;
    right[0] = n_fact_sq;
    for j in 0..s_curr {
        let c = b[j] * b[j] / w.product_factor(j);
        let new_block = j >= s_prev;
        for l in (1..=top).rev() {
            let add = c * left_ratio(l) * all[l - 1];
            if new_block {
                hit[l] += add;
            } else {
                hit[l] += c * left_ratio(l) * hit[l - 1];
            }
            all[l] += add;
            right[l] += c * right_ratio(l) * right[l - 1];
        }
    }
    let left: f64 = hit.iter().sum();
    let right = (s_prev as f64).powf(-2.0 * alpha) * right.iter().sum::<f64>();
    Ok(TruncationConditionReport {
        s_prev,
        s_curr,
        left,
        right,
        ratio: left / right,
    })
}

/// `e²_sh` by enumerating the nonempty subsets of `{0, …, s−1}` with explicit
/// weights keyed by sorted coordinate lists.
pub fn brute_force_wce(rule: &LatticeRule, weights: &BTreeMap<Vec<usize>, f64>) -> Result<f64> {
    let s = rule.s();
    if s > 3 {
        return Err(invalid("s", format!("{s} exceeds the enumeration limit 3")));
    }
    let n = rule.n();
    let b2 = |x: f64| x * x - x + 1.0 / 6.0;
    let mut total = 0.0;
    for mask in 1usize..(1 << s) {
        let u: Vec<usize> = (0..s).filter(|j| mask >> j & 1 == 1).collect();
        let weight = weights.get(&u).copied().unwrap_or(0.0);
        if weight == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for i in 0..n {
            let mut prod = 1.0;
            for &j in &u {
                let x = ((i * rule.z()[j]) % n) as f64 / n as f64;
                prod *= b2(x);
            }
            inner += prod;
        }
        total += weight * inner / n as f64;
    }
    Ok(total)
}

/// Explicit subset weights of a POD family for `s ≤ 3`.
pub fn expand_pod(w: &PodWeights, s: usize) -> BTreeMap<Vec<usize>, f64> {
    let mut out = BTreeMap::new();
    for mask in 1usize..(1 << s) {
        let u: Vec<usize> = (0..s).filter(|j| mask >> j & 1 == 1).collect();
        out.insert(u.clone(), w.set_weight(&u));
    }
    out
}
