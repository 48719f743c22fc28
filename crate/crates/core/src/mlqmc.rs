//! Scenario planner, multi-level and single-level randomly shifted lattice
//! estimators, and cost accounting.
//!
//! The planner works in `f64`; the estimators are generic over the scalar of
//! the finite element systems and accumulate in `f64`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fem::{AssemblyMode, FeMesh, FemConfig, LevelSystem};
use crate::field::CoefficientField;
use crate::geometry::Domain;
use crate::qmc::{cbc_construct, lambda_q, next_prime, random_shifts, LatticeRule, PodWeights};
use crate::real::{compensated_sum, Real};

/// Parameter-selection regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// k-orthogonal multiresolution field, no truncation error.
    Orthogonal,
    /// `p < q ≤ 1`, level-dependent truncation.
    Increasing,
    /// `p = q < 1`, level-constant truncation.
    Constant,
}

impl Scenario {
    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            1 => Ok(Scenario::Orthogonal),
            2 => Ok(Scenario::Increasing),
            3 => Ok(Scenario::Constant),
            _ => Err(invalid("mlqmc.scenario", format!("{i} is not one of 1, 2, 3"))),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Scenario::Orthogonal => 1,
            Scenario::Increasing => 2,
            Scenario::Constant => 3,
        }
    }
}

/// Accuracy target of a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanTarget {
    /// `L = ⌈log₂(1/ε)/τ⌉`.
    Epsilon(f64),
    Levels(usize),
}

/// Guardrails on plan sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanCaps {
    pub s_max: usize,
    pub n_max: usize,
    pub l_max: usize,
}

impl Default for PlanCaps {
    fn default() -> Self {
        Self {
            s_max: 4096,
            n_max: 1 << 20,
            l_max: 12,
        }
    }
}

/// Inputs of [`plan`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub target: PlanTarget,
    pub scenario: Scenario,
    pub p: f64,
    pub q: f64,
    pub tau: f64,
    pub d: usize,
    pub delta: f64,
    pub lambda_override: Option<f64>,
    /// `|J_n|` for the orthogonal scenario.
    pub level_counts: Option<Vec<usize>>,
    pub k: usize,
    pub h0: f64,
    pub m_star: usize,
    pub n0_scale: f64,
    pub caps: PlanCaps,
}

impl PlanRequest {
    pub fn new(target: PlanTarget, scenario: Scenario, p: f64, q: f64, tau: f64, d: usize) -> Self {
        Self {
            target,
            scenario,
            p,
            q,
            tau,
            d,
            delta: 0.1,
            lambda_override: None,
            level_counts: None,
            k: 1,
            h0: 1.0,
            m_star: 16,
            n0_scale: 1.0,
            caps: PlanCaps::default(),
        }
    }
}

/// Schedule of one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelPlan {
    pub level: usize,
    pub h: f64,
    pub s: usize,
    pub n: usize,
    pub m: usize,
    /// Cost units per solve.
    pub k_cost: f64,
    pub theta: u8,
}

/// Output of [`plan`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlPlan {
    pub scenario: Scenario,
    pub l: usize,
    pub tau: f64,
    pub d: usize,
    pub p: f64,
    pub q: f64,
    pub lambda: f64,
    pub eta: Option<f64>,
    pub xi: Option<f64>,
    /// Last level at which `s_ℓ` grows in the increasing scenario.
    pub crossover: Option<usize>,
    /// `N₀` before rounding to a prime, including `n0_scale`.
    pub n0: f64,
    pub n0_case: &'static str,
    pub levels: Vec<LevelPlan>,
}

impl MlPlan {
    pub fn s(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.s).collect()
    }

    pub fn n(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.n).collect()
    }

    pub fn s_max(&self) -> usize {
        self.levels.iter().map(|l| l.s).max().unwrap_or(0)
    }
}

// ⌈x⌉ tolerant to rounding noise in powers of two
fn ceil_tol(x: f64) -> f64 {
    (x * (1.0 - 1e-12)).ceil().max(1.0)
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Level schedule per the selected scenario.
pub fn plan(req: &PlanRequest) -> Result<MlPlan> {
    let PlanRequest { p, q, tau, d, .. } = *req;
    if !(tau > 0.0 && tau <= 2.0) {
        return Err(invalid("mlqmc.tau", format!("{tau} must lie in (0, 2]")));
    }
    if !(1..=2).contains(&d) {
        return Err(invalid("fem.dim", format!("{d} must be 1 or 2")));
    }
    if !(p > 0.0 && p < 1.0 && q >= p && q <= 1.0) {
        return Err(Error::InconsistentPlan(format!("need 0 < p < 1 and p ≤ q ≤ 1, got p = {p}, q = {q}")));
    }
    if !(2..=64).contains(&req.m_star) {
        return Err(invalid("mlqmc.m_star", format!("{} must lie in 2..=64", req.m_star)));
    }
    if !(req.n0_scale > 0.0) {
        return Err(invalid("mlqmc.N0_scale", "must be positive"));
    }
    if !(req.h0 > 0.0) {
        return Err(invalid("fem.h0", "must be positive"));
    }
    let l = match req.target {
        PlanTarget::Epsilon(eps) => {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(invalid("mlqmc.epsilon", format!("{eps} must lie in (0, 1)")));
            }
            ceil_tol((1.0 / eps).log2() / tau) as usize
        }
        PlanTarget::Levels(l) => l,
    };
    if l > req.caps.l_max {
        return Err(Error::CapExceeded {
            what: "L",
            value: l as f64,
            cap: req.caps.l_max as f64,
        });
    }
    let lambda = match req.lambda_override {
        Some(lam) => {
            if !(lam > 0.5 && lam <= 1.0) {
                return Err(invalid("qmc.lambda_override", format!("{lam} must lie in (1/2, 1]")));
            }
            lam
        }
        None => lambda_q(q, req.delta)?,
    };
    let lf = l as f64;
    let df = d as f64;
    let r = df / tau;
    let two_l = 2.0 * lambda;
    let power = lambda / (lambda + 1.0);

    let (eta, xi) = match req.scenario {
        Scenario::Orthogonal => (None, None),
        Scenario::Increasing => {
            if q == p {
                return Err(Error::InconsistentPlan(
                    "p = q leaves η undefined; use scenario 3".into(),
                ));
            }
            (Some(p * q / (q - p)), Some(p / (2.0 - 2.0 * p)))
        }
        Scenario::Constant => {
            if !near(p, q) || q >= 1.0 {
                return Err(Error::InconsistentPlan(format!(
                    "scenario 3 needs p = q < 1, got p = {p}, q = {q}"
                )));
            }
            (None, Some(p / (2.0 - 2.0 * p)))
        }
    };

    // truncation dimensions
    let mut s = Vec::with_capacity(l + 1);
    let mut crossover = None;
    match req.scenario {
        Scenario::Orthogonal => {
            let counts = req.level_counts.as_ref().ok_or_else(|| {
                Error::InconsistentPlan("scenario 1 needs the wavelet level counts".into())
            })?;
            if !(1..=2).contains(&req.k) {
                return Err(invalid("wavelet.k", format!("{} must be 1 or 2", req.k)));
            }
            if counts.len() < l + req.k {
                return Err(Error::InconsistentPlan(format!(
                    "level counts cover {} levels but L + k = {}",
                    counts.len(),
                    l + req.k
                )));
            }
            for ell in 0..=l {
                s.push(counts[..ell + req.k].iter().sum::<usize>());
            }
        }
        Scenario::Increasing => {
            let (eta, xi) = (eta.unwrap_or(0.0), xi.unwrap_or(0.0));
            let cap = ceil_tol(2f64.powf(lf * tau * xi));
            for ell in 0..=l {
                let grow = ceil_tol(2f64.powf(ell as f64 * tau * eta));
                s.push(grow.min(cap) as usize);
            }
            crossover = Some((lf * (q - p) / (q * (2.0 - 2.0 * p))).floor() as usize);
        }
        Scenario::Constant => {
            let xi = xi.unwrap_or(0.0);
            let v = ceil_tol(2f64.powf(lf * tau * xi)) as usize;
            s.resize(l + 1, v);
        }
    }
    if let Some(&top) = s.iter().max() {
        if top > req.caps.s_max {
            return Err(Error::CapExceeded {
                what: "s_L",
                value: top as f64,
                cap: req.caps.s_max as f64,
            });
        }
    }

    // N₀ case tables
    let ltau = lf * tau;
    let (n0, case): (f64, &'static str) = match req.scenario {
        Scenario::Orthogonal => {
            if near(df, 2.0 * tau * lambda) {
                (
                    2f64.powf(2.0 * ltau * lambda) * lf.max(1.0).powf(lambda * (lambda + 2.0) / (lambda + 1.0)),
                    "d = 2τλ",
                )
            } else if df < 2.0 * tau * lambda {
                (2f64.powf(2.0 * ltau * lambda), "d < 2τλ")
            } else {
                (
                    2f64.powf(ltau * (r + 2.0) * power) * lf.max(1.0).powf(power),
                    "d > 2τλ",
                )
            }
        }
        Scenario::Increasing => {
            let (eta, xi) = (eta.unwrap_or(0.0), xi.unwrap_or(0.0));
            if near(r, two_l - eta) {
                (2f64.powf(2.0 * ltau * lambda) * lf.max(1.0).powf(lambda), "d/τ = 2λ − η")
            } else if r < two_l - eta {
                (2f64.powf(2.0 * ltau * lambda), "d/τ < 2λ − η")
            } else if near(r, two_l) {
                (
                    2f64.powf(ltau * (2.0 * (lambda + 1.0) + xi) * power) * lf.max(1.0).powf(lambda),
                    "d/τ = 2λ",
                )
            } else if r < two_l {
                (
                    2f64.powf(ltau * (2.0 * (lambda + 1.0) + (xi / eta) * (r - two_l + eta)) * power),
                    "2λ − η < d/τ < 2λ",
                )
            } else {
                (2f64.powf(ltau * (2.0 + r + xi) * power), "d/τ > 2λ")
            }
        }
        Scenario::Constant => {
            let xi = xi.unwrap_or(0.0);
            let base = 2f64.powf(ltau * (2.0 * (lambda + 1.0) + xi) * power);
            if near(r, two_l) {
                (base * lf.max(1.0).powf(lambda), "d/τ = 2λ")
            } else if r < two_l {
                (base, "d/τ < 2λ")
            } else {
                (2f64.powf(ltau * (2.0 + r + xi) * power), "d/τ > 2λ")
            }
        }
    };
    let n0 = ceil_tol(n0) * req.n0_scale;

    let k_cost = |h: f64, s_l: usize| -> f64 {
        let vol = h.powf(-df);
        match req.scenario {
            Scenario::Orthogonal => vol * vol.ln().max(1.0),
            _ => vol * s_l as f64,
        }
    };
    let h_of = |ell: usize| req.h0 * 2f64.powi(-(ell as i32));
    let k0 = k_cost(req.h0, s[0]);
    let mut levels = Vec::with_capacity(l + 1);
    for (ell, &s_l) in s.iter().enumerate() {
        let h = h_of(ell);
        let k = k_cost(h, s_l);
        let ratio = (req.h0.powf(-2.0 * tau) * k0 * h.powf(2.0 * tau) / k).powf(power);
        let raw = ceil_tol(n0 * ratio);
        if raw > req.caps.n_max as f64 {
            return Err(Error::CapExceeded {
                what: "N_ℓ",
                value: raw,
                cap: req.caps.n_max as f64,
            });
        }
        let n = next_prime((raw as u64).max(2)) as usize;
        if n > req.caps.n_max {
            return Err(Error::CapExceeded {
                what: "N_ℓ",
                value: n as f64,
                cap: req.caps.n_max as f64,
            });
        }
        levels.push(LevelPlan {
            level: ell,
            h,
            s: s_l,
            n,
            m: req.m_star,
            k_cost: k,
            theta: u8::from(req.scenario != Scenario::Orthogonal),
        });
    }
    Ok(MlPlan {
        scenario: req.scenario,
        l,
        tau,
        d,
        p,
        q,
        lambda,
        eta,
        xi,
        crossover,
        n0,
        n0_case: case,
        levels,
    })
}

/// `Σ_ℓ m_ℓ N_ℓ K_ℓ`.
pub fn cost_model(plan: &MlPlan) -> f64 {
    plan.levels.iter().map(|l| l.m as f64 * l.n as f64 * l.k_cost).sum()
}

/// Per-level estimator statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    pub level: usize,
    pub mean: f64,
    /// Sample variance of the `m` shift averages.
    pub variance: f64,
    pub n: usize,
    pub s: usize,
    pub m: usize,
    pub solves: usize,
    pub cost: f64,
    pub shift_means: Vec<f64>,
}

/// Estimator output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlEstimate {
    pub value: f64,
    pub std_error: f64,
    pub levels: Vec<LevelStats>,
    pub cost_units: f64,
    pub wall_time: f64,
    pub seed: u64,
}

/// Runs `f` inside a pool of `MLQMCFE_THREADS` threads when that variable is set.
pub fn with_thread_pool<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    match std::env::var("MLQMCFE_THREADS") {
        Ok(v) => {
            let threads: usize = v
                .trim()
                .parse()
                .map_err(|_| invalid("MLQMCFE_THREADS", format!("`{v}` is not a thread count")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| invalid("MLQMCFE_THREADS", e.to_string()))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

/// `Q(Δ) = (1/N) Σ_i F(frac(i z/N + Δ) − 1/2)`; point values are reduced in index
/// order so the result does not depend on the thread count.
pub fn shifted_rule_average<T, F>(rule: &LatticeRule, shift: &[T], integrand: F) -> Result<f64>
where
    T: Real,
    F: Fn(&[T]) -> Result<f64> + Sync,
{
    let s = rule.s();
    let values: Vec<f64> = (1..=rule.n())
        .into_par_iter()
        .map_init(
            || vec![T::zero(); s],
            |y, i| {
                rule.point_into(i, shift, y);
                integrand(y)
            },
        )
        .collect::<Result<_>>()?;
    Ok(compensated_sum(values.iter().copied()) / rule.n() as f64)
}

fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = compensated_sum(xs.iter().copied()) / m;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = if xs.len() > 1 { compensated_sum(dev) / (m - 1.0) } else { 0.0 };
    (mean, var)
}

/// Multi-level estimate. `systems[ℓ]` is the level-`ℓ` discretization with
/// truncation `s_ℓ`; the level-`ℓ` integrand is
/// `G(u_ℓ^{s_ℓ}(y)) − G(u_{ℓ−1}^{s_{ℓ−1}}(y_{1:s_{ℓ−1}}))`.
pub fn ml_estimate<T: Real>(
    plan: &MlPlan,
    systems: &[LevelSystem<T>],
    rules: &[LatticeRule],
    seed: u64,
) -> Result<MlEstimate> {
    let start = Instant::now();
    let depth = plan.levels.len();
    if systems.len() < depth || rules.len() < depth {
        return Err(Error::DimensionMismatch {
            expected: depth,
            found: systems.len().min(rules.len()),
        });
    }
    for (lp, (sys, rule)) in plan.levels.iter().zip(systems.iter().zip(rules)) {
        if sys.truncation() != lp.s || rule.s() != lp.s {
            return Err(Error::DimensionMismatch {
                expected: lp.s,
                found: if sys.truncation() != lp.s { sys.truncation() } else { rule.s() },
            });
        }
        if rule.n() != lp.n {
            return Err(Error::DimensionMismatch {
                expected: lp.n,
                found: rule.n(),
            });
        }
        if sys.mesh().level() != lp.level {
            return Err(invalid("systems", format!("mesh level {} at plan level {}", sys.mesh().level(), lp.level)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shifts: Vec<Vec<Vec<T>>> = plan
        .levels
        .iter()
        .map(|lp| random_shifts(&mut rng, lp.m, lp.s))
        .collect();

    let mut levels = Vec::with_capacity(depth);
    for (ell, lp) in plan.levels.iter().enumerate() {
        let fine = &systems[ell];
        let coarse = if ell > 0 { Some(&systems[ell - 1]) } else { None };
        let integrand = |y: &[T]| -> Result<f64> {
            let gf = fine.g_value(y)?.to_f64_lossy();
            let gc = match coarse {
                Some(c) => c.g_value(y)?.to_f64_lossy(),
                None => 0.0,
            };
            Ok(gf - gc)
        };
        let shift_means = shifts[ell]
            .iter()
            .map(|shift| shifted_rule_average(&rules[ell], shift, integrand))
            .collect::<Result<Vec<f64>>>()?;
        let (mean, variance) = mean_and_variance(&shift_means);
        levels.push(LevelStats {
            level: ell,
            mean,
            variance,
            n: lp.n,
            s: lp.s,
            m: lp.m,
            solves: lp.m * lp.n * if ell > 0 { 2 } else { 1 },
            cost: lp.m as f64 * lp.n as f64 * lp.k_cost,
            shift_means,
        });
    }
    let means: Vec<f64> = levels.iter().map(|l| l.mean).collect();
    let value = compensated_sum(means);
    let var: f64 = levels.iter().map(|l| l.variance / l.m as f64).sum();
    Ok(MlEstimate {
        value,
        std_error: var.sqrt(),
        cost_units: levels.iter().map(|l| l.cost).sum(),
        levels,
        wall_time: start.elapsed().as_secs_f64(),
        seed,
    })
}

/// Single-level estimate with `m` random shifts; cost `m N h^{-d} s`.
pub fn sl_estimate<T: Real>(system: &LevelSystem<T>, rule: &LatticeRule, m: usize, seed: u64) -> Result<MlEstimate> {
    let start = Instant::now();
    let s = system.truncation();
    if rule.s() != s {
        return Err(Error::DimensionMismatch {
            expected: s,
            found: rule.s(),
        });
    }
    if m == 0 {
        return Err(invalid("m", "need at least one shift"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shifts: Vec<Vec<T>> = random_shifts(&mut rng, m, s);
    let shift_means = shifts
        .iter()
        .map(|shift| shifted_rule_average(rule, shift, |y| Ok(system.g_value(y)?.to_f64_lossy())))
        .collect::<Result<Vec<f64>>>()?;
    let (mean, variance) = mean_and_variance(&shift_means);
    let mesh = system.mesh();
    let k = mesh.h().to_f64_lossy().powi(-(mesh.spatial_dim() as i32)) * s.max(1) as f64;
    let cost = m as f64 * rule.n() as f64 * k;
    Ok(MlEstimate {
        value: mean,
        std_error: if m > 1 { (variance / m as f64).sqrt() } else { f64::NAN },
        levels: vec![LevelStats {
            level: mesh.level(),
            mean,
            variance,
            n: rule.n(),
            s,
            m,
            solves: m * rule.n(),
            cost,
            shift_means,
        }],
        cost_units: cost,
        wall_time: start.elapsed().as_secs_f64(),
        seed,
    })
}

/// Level systems `ℓ = 0..=L` for a plan: the fast path in the orthogonal
/// scenario, generic assembly with truncation `s_ℓ` otherwise.
pub fn build_level_systems<T: Real>(
    plan: &MlPlan,
    field: &CoefficientField<T>,
    h0: f64,
    config: &FemConfig<T>,
) -> Result<Vec<LevelSystem<T>>> {
    plan.levels
        .iter()
        .map(|lp| {
            let mesh = match field.domain() {
                Domain::Interval { length } => FeMesh::interval(length, h0, lp.level)?,
                Domain::UnitSquare => FeMesh::unit_square(lp.level)?,
            };
            let mode = match plan.scenario {
                Scenario::Orthogonal => AssemblyMode::OrthogonalFastPath,
                _ => AssemblyMode::Generic { s: lp.s },
            };
            let sys = LevelSystem::new(mesh, field, mode, config)?;
            if sys.truncation() != lp.s {
                return Err(Error::InconsistentPlan(format!(
                    "level {} plans s = {} but the field gives {}",
                    lp.level,
                    lp.s,
                    sys.truncation()
                )));
            }
            Ok(sys)
        })
        .collect()
}

/// One CBC generating vector per level, of dimension `s_ℓ` and size `N_ℓ`.
pub fn build_rules(plan: &MlPlan, weights: &PodWeights) -> Result<Vec<LatticeRule>> {
    plan.levels
        .iter()
        .map(|lp| Ok(cbc_construct(lp.s, lp.n, weights)?.rule))
        .collect()
}
