//! POD weights, component-by-component lattice construction for the
//! shift-averaged worst-case error in the weighted unanchored Sobolev space,
//! and randomly shifted lattice points on `[-1/2, 1/2]^s`.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::real::{frac, Real};
use crate::special::zeta;

/// Largest number of coordinates the weights support.
pub const MAX_DIMENSION: usize = 4096;

/// Lattice sizes above this use the FFT-based candidate search.
pub const FAST_CBC_THRESHOLD: usize = 1024;

/// `ρ(λ) = 2ζ(2λ) / (2π²)^λ`.
pub fn rho(lambda: f64) -> Result<f64> {
    if !(lambda > 0.5 && lambda <= 1.0) {
        return Err(invalid("lambda", format!("{lambda} must lie in (1/2, 1]")));
    }
    let two_pi2 = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
    Ok(2.0 * zeta(2.0 * lambda)? / two_pi2.powf(lambda))
}

/// Exponent `λ` as a function of the summability exponent `q`.
pub fn lambda_q(q: f64, delta: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(invalid("q", format!("{q} must lie in (0, 1]")));
    }
    if q <= 2.0 / 3.0 {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(invalid("qmc.delta", format!("{delta} must lie in (0, 1/2)")));
        }
        Ok(1.0 / (2.0 - 2.0 * delta))
    } else if q < 1.0 {
        Ok(q / (2.0 - q))
    } else {
        Ok(1.0)
    }
}

/// Product and order dependent weights `γ_u = Γ_{|u|} Π_{j∈u} γ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PodWeights {
    lambda: f64,
    log_order: Vec<f64>,
    product: Vec<f64>,
}

impl PodWeights {
    /// `Γ_ℓ = ((ℓ+3)!/6)^{2/(1+λ)}` and `γ_j = (β_j / √ρ(λ))^{2/(1+λ)}`.
    pub fn new(beta: &[f64], lambda: f64, s_max: usize) -> Result<Self> {
        let rho = rho(lambda)?;
        if s_max > MAX_DIMENSION {
            return Err(Error::CapExceeded {
                what: "s_max",
                value: s_max as f64,
                cap: MAX_DIMENSION as f64,
            });
        }
        if beta.len() < s_max {
            return Err(Error::DimensionMismatch {
                expected: s_max,
                found: beta.len(),
            });
        }
        let exponent = 2.0 / (1.0 + lambda);
        let mut product = Vec::with_capacity(s_max);
        for (j, &b) in beta.iter().take(s_max).enumerate() {
            if !(b > 0.0 && b.is_finite()) {
                return Err(invalid("beta", format!("beta[{j}] = {b} must be positive")));
            }
            product.push((b / rho.sqrt()).powf(exponent));
        }
        let mut log_order = Vec::with_capacity(s_max + 1);
        log_order.push(0.0);
        for l in 0..s_max {
            let next = log_order[l] + exponent * ((l + 4) as f64).ln();
            log_order.push(next);
        }
        Ok(Self {
            lambda,
            log_order,
            product,
        })
    }

    /// Weights from explicit factors; `log_order[0]` must be 0.
    pub fn from_parts(lambda: f64, log_order: Vec<f64>, product: Vec<f64>) -> Result<Self> {
        if log_order.first() != Some(&0.0) || log_order.len() != product.len() + 1 {
            return Err(invalid("weights", "need Γ_0 = 1 and one order factor per dimension plus one"));
        }
        if product.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(invalid("weights", "product factors must be finite and nonnegative"));
        }
        Ok(Self {
            lambda,
            log_order,
            product,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn s_max(&self) -> usize {
        self.product.len()
    }

    pub fn log_order_factor(&self, l: usize) -> f64 {
        self.log_order[l]
    }

    pub fn order_factor(&self, l: usize) -> f64 {
        self.log_order[l].exp()
    }

    /// `Γ_ℓ / Γ_{ℓ−1}` for `ℓ ≥ 1`.
    pub fn order_ratio(&self, l: usize) -> f64 {
        (self.log_order[l] - self.log_order[l - 1]).exp()
    }

    /// `γ_j` for 0-based `j`.
    pub fn product_factor(&self, j: usize) -> f64 {
        self.product[j]
    }

    /// `γ_u` for a set of 0-based coordinates.
    pub fn set_weight(&self, u: &[usize]) -> f64 {
        let log: f64 = u.iter().map(|&j| self.product[j].ln()).sum();
        (self.log_order[u.len()] + log).exp()
    }

    /// Scales every product factor by `c`; the weight of `u` scales by `c^{|u|}`.
    pub fn scaled_products(&self, c: f64) -> Self {
        Self {
            product: self.product.iter().map(|g| g * c).collect(),
            ..self.clone()
        }
    }
}

/// `B₂(x) = x² − x + 1/6`.
#[inline]
pub fn bernoulli2(x: f64) -> f64 {
    x * x - x + 1.0 / 6.0
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n % 2 == 0 || n % 3 == 0 {
        return false;
    }
    let mut k = 5u64;
    while k * k <= n {
        if n % k == 0 || n % (k + 2) == 0 {
            return false;
        }
        k += 6;
    }
    true
}

/// Smallest prime `≥ n`.
pub fn next_prime(n: u64) -> u64 {
    let mut m = n.max(2);
    while !is_prime(m) {
        m += 1;
    }
    m
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Rank-1 lattice rule with generating vector `z` and prime size `N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeRule {
    n: usize,
    z: Vec<usize>,
}

impl LatticeRule {
    pub fn new(n: usize, z: Vec<usize>) -> Result<Self> {
        if !is_prime(n as u64) {
            return Err(Error::NotPrime { value: n as u64 });
        }
        for (j, &zj) in z.iter().enumerate() {
            if zj == 0 || zj >= n.max(2) || gcd(zj as u64, n as u64) != 1 {
                return Err(invalid("z", format!("z[{j}] = {zj} is not a unit modulo {n}")));
            }
        }
        Ok(Self { n, z })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self) -> &[usize] {
        &self.z
    }

    /// The rule restricted to its first `s` coordinates.
    pub fn truncated(&self, s: usize) -> Self {
        Self {
            n: self.n,
            z: self.z[..s.min(self.z.len())].to_vec(),
        }
    }

    /// Writes point `i ∈ 1..=N`, `frac(i z / N + Δ) − 1/2`, into `out`.
    #[inline]
    pub fn point_into<T: Real>(&self, i: usize, shift: &[T], out: &mut [T]) {
        let nf = T::from_usize_lossy(self.n);
        for ((o, &zj), &d) in out.iter_mut().zip(&self.z).zip(shift) {
            let r = ((i as u128 * zj as u128) % self.n as u128) as usize;
            *o = frac(T::from_usize_lossy(r) / nf + d) - T::half();
        }
    }

    /// All `N` points, row-major.
    pub fn generate_points<T: Real>(&self, shift: &[T]) -> Result<Vec<T>> {
        if shift.len() != self.s() {
            return Err(Error::DimensionMismatch {
                expected: self.s(),
                found: shift.len(),
            });
        }
        let s = self.s();
        let mut out = vec![T::zero(); self.n * s];
        for (i, row) in out.chunks_mut(s.max(1)).enumerate().take(self.n) {
            self.point_into(i + 1, shift, row);
        }
        Ok(out)
    }

    /// Text form: header `s N lambda`, then one `z_j` per line.
    pub fn to_text(&self, lambda: f64) -> String {
        let mut out = format!("{} {} {}\n", self.s(), self.n, lambda);
        for z in &self.z {
            let _ = writeln!(out, "{z}");
        }
        out
    }

    /// Parses the text form, returning the rule and its `λ`.
    pub fn from_text(text: &str) -> Result<(Self, f64)> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            reason: "missing header".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: 1,
                reason: "header must be `s N lambda`".into(),
            });
        }
        let parse_err = |line: usize, what: &str| Error::Parse {
            line,
            reason: format!("cannot parse {what}"),
        };
        let s: usize = fields[0].parse().map_err(|_| parse_err(1, "s"))?;
        let n: usize = fields[1].parse().map_err(|_| parse_err(1, "N"))?;
        let lambda: f64 = fields[2].parse().map_err(|_| parse_err(1, "lambda"))?;
        let mut z = Vec::with_capacity(s);
        for (idx, line) in lines {
            z.push(line.trim().parse().map_err(|_| parse_err(idx + 1, "z_j"))?);
        }
        if z.len() != s {
            return Err(Error::Parse {
                line: 1,
                reason: format!("header declares {s} components, found {}", z.len()),
            });
        }
        Ok((Self::new(n, z)?, lambda))
    }
}

/// Per-step record of the construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CbcResult {
    pub rule: LatticeRule,
    /// `e²_{s'}` after choosing component `s'`.
    pub errors: Vec<f64>,
    pub fast: bool,
}

/// Order-scaled accumulators `A_ℓ(i) = Γ_ℓ Σ_{|u|=ℓ} Π_{j∈u} γ_j B₂({i z_j / N})`
/// for `i = 1..=N`, `ℓ = 0..=s'`.
struct Accumulators {
    n: usize,
    levels: Vec<Vec<f64>>,
}

impl Accumulators {
    fn new(n: usize) -> Self {
        Self {
            n,
            levels: vec![vec![1.0; n]],
        }
    }

    fn error(&self) -> f64 {
        let n = self.n as f64;
        self.levels[1..].iter().map(|a| a.iter().sum::<f64>()).sum::<f64>() / n
    }

    /// `V(i) = Σ_ℓ (Γ_ℓ/Γ_{ℓ−1}) A_{ℓ−1}(i)` for the next component.
    fn v(&self, w: &PodWeights) -> Vec<f64> {
        let mut v = vec![0.0; self.n];
        for (l, a) in self.levels.iter().enumerate() {
            let r = w.order_ratio(l + 1);
            for (vi, ai) in v.iter_mut().zip(a) {
                *vi += r * ai;
            }
        }
        v
    }

    fn push(&mut self, w: &PodWeights, gamma: f64, omega: &[f64]) {
        let depth = self.levels.len();
        self.levels.push(vec![0.0; self.n]);
        for l in (1..=depth).rev() {
            let r = gamma * w.order_ratio(l);
            let (lo, hi) = self.levels.split_at_mut(l);
            for ((t, p), o) in hi[0].iter_mut().zip(&lo[l - 1]).zip(omega) {
                *t += r * o * p;
            }
        }
    }
}

/// `ω(i) = B₂({i z / N})` for `i = 1..=N` (index `i − 1`).
fn omega_for(n: usize, z: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| bernoulli2(((i as u128 * z as u128) % n as u128) as f64 / n as f64))
        .collect()
}

/// Shift-averaged squared worst-case error of `rule` under POD weights.
pub fn shift_avg_wce(rule: &LatticeRule, w: &PodWeights) -> Result<f64> {
    if rule.s() > w.s_max() {
        return Err(Error::DimensionMismatch {
            expected: rule.s(),
            found: w.s_max(),
        });
    }
    let mut acc = Accumulators::new(rule.n());
    for (j, &z) in rule.z().iter().enumerate() {
        acc.push(w, w.product_factor(j), &omega_for(rule.n(), z));
    }
    Ok(acc.error())
}

/// Greedy component-by-component construction. Candidates are scanned in
/// increasing order and the smallest `z` whose error is within `1e-12`
/// relative of the minimum is taken.
pub fn cbc_construct(s: usize, n: usize, w: &PodWeights) -> Result<CbcResult> {
    cbc_construct_with(s, n, w, n > FAST_CBC_THRESHOLD)
}

/// As [`cbc_construct`] with an explicit choice of the candidate search.
pub fn cbc_construct_with(s: usize, n: usize, w: &PodWeights, fast: bool) -> Result<CbcResult> {
    if !is_prime(n as u64) {
        return Err(Error::NotPrime { value: n as u64 });
    }
    if s == 0 {
        return Err(invalid("s", "must be at least 1"));
    }
    if s > w.s_max() {
        return Err(Error::DimensionMismatch {
            expected: s,
            found: w.s_max(),
        });
    }
    // per-residue B₂ table, ω(k) for k = 0..N-1
    let table: Vec<f64> = (0..n).map(|k| bernoulli2(k as f64 / n as f64)).collect();
    let fft = if fast && n > 2 { Some(FastSearch::new(n, &table)) } else { None };
    let mut acc = Accumulators::new(n);
    let mut z = Vec::with_capacity(s);
    let mut errors = Vec::with_capacity(s);
    for j in 0..s {
        let gamma = w.product_factor(j);
        let base = acc.error();
        let chosen = if j == 0 || n == 2 {
            // the candidates permute {i/N}: all give the same error
            1
        } else {
            let v = acc.v(w);
            let scores: Vec<f64> = match &fft {
                Some(search) => search.scores(&v),
                None => (1..n)
                    .into_par_iter()
                    .map(|cand| {
                        (1..=n)
                            .map(|i| table[((i as u128 * cand as u128) % n as u128) as usize] * v[i - 1])
                            .sum::<f64>()
                    })
                    .collect(),
            };
            select(&scores, base, gamma / n as f64)
        };
        acc.push(w, gamma, &omega_for(n, chosen));
        errors.push(acc.error());
        z.push(chosen);
    }
    Ok(CbcResult {
        rule: LatticeRule::new(n, z)?,
        errors,
        fast: fft.is_some(),
    })
}

/// Smallest candidate `z = c + 1` within the tie tolerance of the minimum of
/// `base + scale * scores[c]`.
fn select(scores: &[f64], base: f64, scale: f64) -> usize {
    let values: Vec<f64> = scores.iter().map(|s| base + scale * s).collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * min.abs().max(f64::MIN_POSITIVE);
    values.iter().position(|&v| v <= min + tol).map_or(1, |c| c + 1)
}

/// Candidate scores `S(z) = Σ_{i=1}^{N} B₂({iz/N}) V(i)` for all `z` at once by a
/// cyclic correlation over the multiplicative group generated by a primitive root.
struct FastSearch {
    n: usize,
    perm: Vec<usize>,
    omega_hat: Vec<Complex<f64>>,
    fft: Arc<dyn rustfft::Fft<f64>>,
    ifft: Arc<dyn rustfft::Fft<f64>>,
    omega_zero: f64,
}

impl FastSearch {
    fn new(n: usize, table: &[f64]) -> Self {
        let g = primitive_root(n as u64) as usize;
        let m = n - 1;
        let mut perm = Vec::with_capacity(m);
        let mut p = 1usize;
        for _ in 0..m {
            perm.push(p);
            p = p * g % n;
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        let ifft = planner.plan_fft_inverse(m);
        let mut omega_hat: Vec<Complex<f64>> = perm.iter().map(|&k| Complex::new(table[k], 0.0)).collect();
        fft.process(&mut omega_hat);
        Self {
            n,
            perm,
            omega_hat,
            fft,
            ifft,
            omega_zero: table[0],
        }
    }

    fn scores(&self, v: &[f64]) -> Vec<f64> {
        let m = self.n - 1;
        // S(g^a) = Σ_b ω(g^{a+b}) V(g^b) + ω(0) V(N)
        let mut v_hat: Vec<Complex<f64>> = self.perm.iter().map(|&k| Complex::new(v[k - 1], 0.0)).collect();
        self.fft.process(&mut v_hat);
        let mut prod: Vec<Complex<f64>> = self
            .omega_hat
            .iter()
            .zip(&v_hat)
            .map(|(a, b)| a * b.conj())
            .collect();
        self.ifft.process(&mut prod);
        let tail = self.omega_zero * v[self.n - 1];
        let mut out = vec![0.0; m];
        for (a, c) in prod.iter().enumerate() {
            out[self.perm[a] - 1] = c.re / m as f64 + tail;
        }
        out
    }
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            out.push(p);
            while n % p == 0 {
                n /= p;
            }
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1u64;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = (r as u128 * b as u128 % m as u128) as u64;
        }
        b = (b as u128 * b as u128 % m as u128) as u64;
        e >>= 1;
    }
    r
}

/// Smallest primitive root of the prime `p`.
pub fn primitive_root(p: u64) -> u64 {
    if p == 2 {
        return 1;
    }
    let factors = prime_factors(p - 1);
    (2..p)
        .find(|&g| factors.iter().all(|&f| pow_mod(g, (p - 1) / f, p) != 1))
        .expect("a prime has a primitive root")
}

/// Shifts `Δ ∈ [0,1)^s` drawn in order from a seeded stream.
pub fn random_shifts<T: Real, R: rand::Rng>(rng: &mut R, count: usize, s: usize) -> Vec<Vec<T>> {
    (0..count)
        .map(|_| (0..s).map(|_| T::lit(rng.gen::<f64>())).collect())
        .collect()
}
