//! Affine-parametric diffusion coefficient `a(x, y) = ā(x) + Σ_j y_j ψ_j(x)`
//! and the decay sequences derived from its fluctuation norms.

use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::geometry::{Cell, Domain};
use crate::quadrature::SimplexRule;
use crate::real::Real;
use crate::special::zeta;
use crate::wavelet::WaveletBasis;

/// A system of fluctuation functions `ψ_1, ψ_2, …` (0-based index `j` here).
///
/// Norms are supplied analytically by each family.
pub trait FluctuationBasis<T: Real>: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    fn domain(&self) -> Domain;

    /// Number of available terms; `None` for an unbounded family.
    fn len(&self) -> Option<usize>;

    fn eval(&self, j: usize, x: &[T]) -> T;

    /// `‖ψ_j‖_∞`.
    fn sup_norm(&self, j: usize) -> T;

    /// `‖∇ψ_j‖_∞`, or `None` when ψ_j is not Lipschitz.
    fn grad_sup_norm(&self, j: usize) -> Option<T>;

    /// Upper bound on `sup_x Σ_j |ψ_j(x)|` over all terms.
    fn pointwise_bound(&self) -> T;

    /// `∫_K ψ_j dx`. The default uses the supplied rule.
    fn cell_integral(&self, j: usize, cell: &Cell<T>, rule: &SimplexRule<T>) -> T {
        let mut acc = T::zero();
        let dim = self.domain().dim();
        for (p, &w) in rule.points.iter().zip(&rule.weights) {
            let x = cell.map(p);
            acc = acc + w * self.eval(j, &x[..dim]);
        }
        acc * cell.measure()
    }

    /// True when the integrals returned by `cell_integral` are exact.
    fn exact_cell_integrals(&self) -> bool {
        false
    }

    fn as_wavelet(&self) -> Option<&WaveletBasis<T>> {
        None
    }
}

/// `ψ_j(x) = c j^{-ϑ} Π_d sin(jπ x_d / a)` with 1-based `j`.
#[derive(Debug, Clone)]
pub struct SineFamily<T> {
    c: T,
    theta: T,
    domain: Domain,
}

impl<T: Real> SineFamily<T> {
    pub fn new(c: T, theta: T, domain: Domain) -> Result<Self> {
        if !(c >= T::zero()) {
            return Err(invalid("field.c", format!("{c} must be nonnegative")));
        }
        if !(theta > T::one()) {
            return Err(invalid("field.theta", format!("{theta} must exceed 1 for summability")));
        }
        Ok(Self { c, theta, domain })
    }

    fn amplitude(&self, j: usize) -> T {
        self.c * T::from_usize_lossy(j + 1).powf(-self.theta)
    }

    fn freq(&self, j: usize) -> T {
        T::from_usize_lossy(j + 1) * T::PI() / T::lit(self.domain.extent())
    }
}

impl<T: Real> FluctuationBasis<T> for SineFamily<T> {
    fn name(&self) -> &'static str {
        "sine"
    }

    fn domain(&self) -> Domain {
        self.domain
    }

    fn len(&self) -> Option<usize> {
        None
    }

    fn eval(&self, j: usize, x: &[T]) -> T {
        let w = self.freq(j);
        x.iter().fold(self.amplitude(j), |acc, &xi| acc * (w * xi).sin())
    }

    fn sup_norm(&self, j: usize) -> T {
        self.amplitude(j)
    }

    fn grad_sup_norm(&self, j: usize) -> Option<T> {
        // |∇ψ|² = A² w² (cos² a sin² b + sin² a cos² b) ≤ A² w² in 2D as well
        Some(self.amplitude(j) * self.freq(j))
    }

    fn pointwise_bound(&self) -> T {
        self.c * zeta(self.theta).expect("theta > 1")
    }

    fn cell_integral(&self, j: usize, cell: &Cell<T>, rule: &SimplexRule<T>) -> T {
        match *cell {
            // antiderivative of sin(w x) is -cos(w x) / w
            Cell::Interval { x0, x1 } => {
                let w = self.freq(j);
                self.amplitude(j) * ((w * x0).cos() - (w * x1).cos()) / w
            }
            Cell::Triangle { .. } => {
                let mut acc = T::zero();
                for (p, &wq) in rule.points.iter().zip(&rule.weights) {
                    let x = cell.map(p);
                    acc = acc + wq * self.eval(j, &x);
                }
                acc * cell.measure()
            }
        }
    }

    fn exact_cell_integrals(&self) -> bool {
        self.domain.dim() == 1
    }
}

/// Indicator functions `ψ_j = c_j 1_{[l_j, r_j)}` on an interval. Useful as a
/// piecewise-constant family with prescribed norms.
#[derive(Debug, Clone)]
pub struct IndicatorFamily<T> {
    amplitudes: Vec<T>,
    supports: Vec<(T, T)>,
    domain: Domain,
}

impl<T: Real> IndicatorFamily<T> {
    pub fn new(amplitudes: Vec<T>, supports: Vec<(T, T)>, domain: Domain) -> Result<Self> {
        if domain.dim() != 1 {
            return Err(invalid("domain", "indicator family is one-dimensional"));
        }
        if amplitudes.len() != supports.len() {
            return Err(Error::DimensionMismatch {
                expected: amplitudes.len(),
                found: supports.len(),
            });
        }
        let ext = T::lit(domain.extent());
        for &(l, r) in &supports {
            if !(l >= T::zero() && r <= ext && l < r) {
                return Err(invalid("support", format!("[{l}, {r}) not inside the domain")));
            }
        }
        Ok(Self {
            amplitudes,
            supports,
            domain,
        })
    }
}

impl<T: Real> FluctuationBasis<T> for IndicatorFamily<T> {
    fn name(&self) -> &'static str {
        "indicator"
    }

    fn domain(&self) -> Domain {
        self.domain
    }

    fn len(&self) -> Option<usize> {
        Some(self.amplitudes.len())
    }

    fn eval(&self, j: usize, x: &[T]) -> T {
        let (l, r) = self.supports[j];
        if x[0] >= l && x[0] < r {
            self.amplitudes[j]
        } else {
            T::zero()
        }
    }

    fn sup_norm(&self, j: usize) -> T {
        self.amplitudes[j].abs()
    }

    fn grad_sup_norm(&self, _j: usize) -> Option<T> {
        None
    }

    fn pointwise_bound(&self) -> T {
        self.amplitudes.iter().map(|a| a.abs()).sum()
    }

    fn cell_integral(&self, j: usize, cell: &Cell<T>, _rule: &SimplexRule<T>) -> T {
        let (l, r) = self.supports[j];
        self.amplitudes[j] * cell.overlap_with_box([l, T::zero()], [r, T::zero()])
    }

    fn exact_cell_integrals(&self) -> bool {
        true
    }
}

/// Mean field `ā`.
#[derive(Clone)]
pub enum MeanField<T> {
    Constant(T),
    /// A Lipschitz function with declared `ess inf`, `sup` and `‖∇ā‖_∞`.
    Function {
        f: Arc<dyn Fn(&[T]) -> T + Send + Sync>,
        inf: T,
        sup: T,
        grad_sup: T,
    },
}

impl<T: Real> Debug for MeanField<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeanField::Constant(c) => write!(f, "Constant({c})"),
            MeanField::Function { inf, sup, grad_sup, .. } => f
                .debug_struct("Function")
                .field("inf", inf)
                .field("sup", sup)
                .field("grad_sup", grad_sup)
                .finish(),
        }
    }
}

impl<T: Real> MeanField<T> {
    pub fn eval(&self, x: &[T]) -> T {
        match self {
            MeanField::Constant(c) => *c,
            MeanField::Function { f, .. } => f(x),
        }
    }

    pub fn inf(&self) -> T {
        match self {
            MeanField::Constant(c) => *c,
            MeanField::Function { inf, .. } => *inf,
        }
    }

    pub fn sup(&self) -> T {
        match self {
            MeanField::Constant(c) => *c,
            MeanField::Function { sup, .. } => *sup,
        }
    }

    pub fn grad_sup(&self) -> T {
        match self {
            MeanField::Constant(_) => T::zero(),
            MeanField::Function { grad_sup, .. } => *grad_sup,
        }
    }

    fn cell_integral(&self, cell: &Cell<T>, rule: &SimplexRule<T>, dim: usize) -> T {
        match self {
            MeanField::Constant(c) => *c * cell.measure(),
            MeanField::Function { f, .. } => {
                let mut acc = T::zero();
                for (p, &w) in rule.points.iter().zip(&rule.weights) {
                    let x = cell.map(p);
                    acc = acc + w * f(&x[..dim]);
                }
                acc * cell.measure()
            }
        }
    }
}

/// The affine-parametric coefficient. Immutable after construction.
#[derive(Debug, Clone)]
pub struct CoefficientField<T: Real> {
    mean: MeanField<T>,
    basis: Arc<dyn FluctuationBasis<T>>,
    a_min: T,
    a_max: T,
}

impl<T: Real> CoefficientField<T> {
    /// Builds the field with bounds from the sufficient condition
    /// `a_min = ess inf ā − ½ sup_x Σ|ψ_j(x)|`, `a_max = sup ā + ½ sup_x Σ|ψ_j(x)|`.
    pub fn new(mean: MeanField<T>, basis: Arc<dyn FluctuationBasis<T>>) -> Result<Self> {
        let half_bound = T::half() * basis.pointwise_bound();
        let a_min = mean.inf() - half_bound;
        let a_max = mean.sup() + half_bound;
        if !(a_min > T::zero()) {
            return Err(Error::EllipticityViolated {
                value: a_min.to_f64_lossy(),
                a_min: 0.0,
            });
        }
        Ok(Self {
            mean,
            basis,
            a_min,
            a_max,
        })
    }

    /// Builds the field with user bounds, which must be implied by the
    /// sufficient condition.
    pub fn with_bounds(mean: MeanField<T>, basis: Arc<dyn FluctuationBasis<T>>, a_min: T, a_max: T) -> Result<Self> {
        let field = Self::new(mean, basis)?;
        if !(a_min > T::zero()) {
            return Err(invalid("field.a_min", format!("{a_min} must be positive")));
        }
        if a_min > field.a_min {
            return Err(Error::EllipticityViolated {
                value: field.a_min.to_f64_lossy(),
                a_min: a_min.to_f64_lossy(),
            });
        }
        if a_max < field.a_max {
            return Err(invalid(
                "field.a_max",
                format!("{a_max} is below the guaranteed upper bound {}", field.a_max),
            ));
        }
        Ok(Self { a_min, a_max, ..field })
    }

    pub fn mean(&self) -> &MeanField<T> {
        &self.mean
    }

    pub fn basis(&self) -> &dyn FluctuationBasis<T> {
        self.basis.as_ref()
    }

    pub fn basis_arc(&self) -> Arc<dyn FluctuationBasis<T>> {
        Arc::clone(&self.basis)
    }

    pub fn domain(&self) -> Domain {
        self.basis.domain()
    }

    pub fn spatial_dim(&self) -> usize {
        self.domain().dim()
    }

    pub fn a_min(&self) -> T {
        self.a_min
    }

    pub fn a_max(&self) -> T {
        self.a_max
    }

    /// Checks that `y` is admissible and not longer than the basis.
    pub fn check_parameters(&self, y: &[T]) -> Result<()> {
        if let Some(len) = self.basis.len() {
            if y.len() > len {
                return Err(Error::TruncationTooLarge {
                    requested: y.len(),
                    available: len,
                });
            }
        }
        let half = T::half();
        for (index, &v) in y.iter().enumerate() {
            if !(v >= -half && v <= half) {
                return Err(Error::ParameterOutOfRange {
                    index,
                    value: v.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }

    /// `ā(x) + Σ_{j<len(y)} y_j ψ_j(x)`; coordinates beyond `y` are anchored at 0.
    pub fn evaluate(&self, x: &[T], y: &[T]) -> Result<T> {
        self.domain().check_point(x)?;
        self.check_parameters(y)?;
        Ok(self.evaluate_unchecked(x, y))
    }

    pub fn evaluate_unchecked(&self, x: &[T], y: &[T]) -> T {
        y.iter()
            .enumerate()
            .filter(|(_, &yj)| yj != T::zero())
            .fold(self.mean.eval(x), |acc, (j, &yj)| acc + yj * self.basis.eval(j, x))
    }

    /// `∫_K ā dx`.
    pub fn mean_cell_integral(&self, cell: &Cell<T>, rule: &SimplexRule<T>) -> T {
        self.mean.cell_integral(cell, rule, self.spatial_dim())
    }

    /// Samples `a(x, y)` at random points and parameters and reports the
    /// observed range against `[a_min, a_max]`.
    pub fn sample_bounds(&self, s: usize, samples: usize, seed: u64) -> BoundsReport<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.spatial_dim();
        let ext = self.domain().extent();
        let s = self.basis.len().map_or(s, |len| s.min(len));
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        let mut y = vec![T::zero(); s];
        let mut x = vec![T::zero(); dim];
        for _ in 0..samples {
            for v in x.iter_mut() {
                *v = T::lit(rng.gen::<f64>() * ext);
            }
            for v in y.iter_mut() {
                *v = T::lit(rng.gen::<f64>() - 0.5);
            }
            let a = self.evaluate_unchecked(&x, &y);
            lo = lo.min(a);
            hi = hi.max(a);
        }
        BoundsReport {
            sampled_min: lo,
            sampled_max: hi,
            a_min: self.a_min,
            a_max: self.a_max,
            holds: lo >= self.a_min && hi <= self.a_max,
        }
    }

    /// `b_j`, `b̄_j` and `β_j` for `j < s_max`.
    pub fn derive_sequences(&self, params: &SequenceParams<T>, s_max: usize) -> Result<DecaySequences<T>> {
        params.validate()?;
        if s_max == 0 {
            return Err(invalid("s_max", "must be at least 1"));
        }
        if let Some(len) = self.basis.len() {
            if s_max > len {
                return Err(Error::TruncationTooLarge {
                    requested: s_max,
                    available: len,
                });
            }
        }
        let lipschitz = self.basis.grad_sup_norm(0).is_some();
        let mut grads = Vec::with_capacity(s_max);
        for j in 0..s_max {
            match self.basis.grad_sup_norm(j) {
                Some(g) => grads.push(g),
                None if lipschitz => return Err(Error::MissingGradientNorm { index: j }),
                // not Lipschitz: no gradient contribution to b̄
                None => grads.push(T::zero()),
            }
        }
        let sups: Vec<T> = (0..s_max).map(|j| self.basis.sup_norm(j)).collect();
        let b_const = match params.b_const {
            Some(b) => b,
            None => {
                let grad_sum: T = grads.iter().copied().sum();
                (self.mean.grad_sup() + T::half() * grad_sum) / self.a_min
            }
        };
        let b: Vec<T> = sups.iter().map(|&n| n / self.a_min).collect();
        let b_bar: Vec<T> = b
            .iter()
            .zip(&sups)
            .zip(&grads)
            .map(|((&bj, &sup), &grad)| bj + params.kappa * params.c_t * (grad + b_const * sup))
            .collect();
        let mut seqs = DecaySequences::from_parts(b, b_bar, params.p, params.q)?;
        seqs.kappa = params.kappa;
        seqs.b_const = b_const;
        seqs.c_t = params.c_t;
        seqs.gradient_terms = lipschitz;
        Ok(seqs)
    }
}

/// Sampled range of the coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsReport<T> {
    pub sampled_min: T,
    pub sampled_max: T,
    pub a_min: T,
    pub a_max: T,
    pub holds: bool,
}

/// Parameters of the decay sequences. `b_const: None` selects the computable
/// upper bound `(‖∇ā‖_∞ + ½ Σ_{j≤s_max} ‖∇ψ_j‖_∞) / a_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceParams<T> {
    pub p: T,
    pub q: T,
    pub kappa: T,
    pub b_const: Option<T>,
    pub c_t: T,
}

impl<T: Real> SequenceParams<T> {
    pub fn new(p: T, q: T) -> Self {
        Self {
            p,
            q,
            kappa: T::one(),
            b_const: None,
            c_t: T::one(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.p > T::zero() && self.p < T::one()) {
            return Err(invalid("p", format!("{} must lie in (0, 1)", self.p)));
        }
        if self.p > self.q {
            return Err(invalid("q", format!("p = {} exceeds q = {}", self.p, self.q)));
        }
        if self.q > T::one() {
            return Err(invalid("q", format!("{} must not exceed 1", self.q)));
        }
        if !(self.kappa > T::zero() && self.kappa <= T::one()) {
            return Err(invalid("kappa", format!("{} must lie in (0, 1]", self.kappa)));
        }
        if !(self.c_t >= T::zero()) || self.b_const.is_some_and(|b| !(b >= T::zero())) {
            return Err(invalid("C_t/B", "constants must be nonnegative"));
        }
        Ok(())
    }
}

/// `b_j = ‖ψ_j‖_∞ / a_min`, `b̄_j`, and `β_j = max(b̄_j, b_j^{p/q})`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySequences<T> {
    pub b: Vec<T>,
    pub b_bar: Vec<T>,
    pub beta: Vec<T>,
    pub p: T,
    pub q: T,
    pub kappa: T,
    pub b_const: T,
    pub c_t: T,
    /// Whether `b̄` includes gradient terms (false for non-Lipschitz families).
    pub gradient_terms: bool,
}

impl<T: Real> DecaySequences<T> {
    /// Assembles the sequences from given `b` and `b̄`, computing `β`.
    pub fn from_parts(b: Vec<T>, b_bar: Vec<T>, p: T, q: T) -> Result<Self> {
        if b.len() != b_bar.len() {
            return Err(Error::DimensionMismatch {
                expected: b.len(),
                found: b_bar.len(),
            });
        }
        if !(p > T::zero()) || p > q || q > T::one() {
            return Err(invalid("p, q", format!("need 0 < p <= q <= 1, got p = {p}, q = {q}")));
        }
        let ratio = p / q;
        let beta = b.iter().zip(&b_bar).map(|(&bj, &bbj)| bbj.max(bj.powf(ratio))).collect();
        Ok(Self {
            b,
            b_bar,
            beta,
            p,
            q,
            kappa: T::one(),
            b_const: T::zero(),
            c_t: T::one(),
            gradient_terms: false,
        })
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }
}

/// Declared envelope `b_j ≤ c j^{-ϑ}` (1-based `j`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraicEnvelope {
    pub c: f64,
    pub theta: f64,
}

impl AlgebraicEnvelope {
    /// Bound on `Σ_{j>s} (c j^{-ϑ})^r` by the integral from `s` to infinity.
    pub fn tail_bound(&self, r: f64, s: usize) -> f64 {
        let e = self.theta * r;
        if e <= 1.0 || s == 0 {
            return f64::INFINITY;
        }
        self.c.powf(r) * (s as f64).powf(1.0 - e) / (e - 1.0)
    }
}

/// Partial sums and summability flags.
#[derive(Debug, Clone, PartialEq)]
pub struct SummabilityReport {
    pub s_max: usize,
    pub sum_b_p: f64,
    pub sum_b_bar_q: f64,
    pub sum_beta_q: f64,
    /// Analytic tails `Σ_{j>s_max} b_j^p` and `Σ_{j>s_max} b_j` when an envelope is declared.
    pub tail_b_p: Option<f64>,
    pub tail_b: Option<f64>,
    /// For `q = 1`: `Σ b̄_j` must stay below `√6`.
    pub small_condition: Option<SmallCondition>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallCondition {
    pub partial_sum: f64,
    /// First 1-based index at which the partial sum of `b̄_j` reaches `√6`.
    pub exceeded_at: Option<usize>,
}

impl SmallCondition {
    pub fn holds(&self) -> bool {
        self.exceeded_at.is_none()
    }
}

pub fn summability_report<T: Real>(
    seqs: &DecaySequences<T>,
    s_max: usize,
    envelope: Option<AlgebraicEnvelope>,
) -> SummabilityReport {
    let n = s_max.min(seqs.len());
    let p = seqs.p.to_f64_lossy();
    let q = seqs.q.to_f64_lossy();
    let powsum = |v: &[T], e: f64| -> f64 {
        // smallest terms first
        v[..n].iter().rev().map(|x| x.to_f64_lossy().powf(e)).sum()
    };
    let small_condition = (q == 1.0).then(|| {
        let limit = 6f64.sqrt();
        let mut acc = 0.0;
        let mut exceeded_at = None;
        for (j, x) in seqs.b_bar[..n].iter().enumerate() {
            acc += x.to_f64_lossy();
            if exceeded_at.is_none() && acc >= limit {
                exceeded_at = Some(j + 1);
            }
        }
        SmallCondition {
            partial_sum: acc,
            exceeded_at,
        }
    });
    SummabilityReport {
        s_max: n,
        sum_b_p: powsum(&seqs.b, p),
        sum_b_bar_q: powsum(&seqs.b_bar, q),
        sum_beta_q: powsum(&seqs.beta, q),
        tail_b_p: envelope.map(|e| e.tail_bound(p, n)),
        tail_b: envelope.map(|e| e.tail_bound(1.0, n)),
        small_condition,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sine_field(c: f64, theta: f64) -> CoefficientField<f64> {
        let basis = SineFamily::new(c, theta, Domain::interval(1.0).unwrap()).unwrap();
        CoefficientField::new(MeanField::Constant(1.0), Arc::new(basis)).unwrap()
    }

    #[test]
    fn zero_parameters_give_the_mean() {
        let field = sine_field(0.2, 2.0);
        for x in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(field.evaluate(&[x], &[0.0; 7]).unwrap(), 1.0);
            assert_eq!(field.evaluate(&[x], &[]).unwrap(), 1.0);
        }
    }

    #[test]
    fn sine_family_substitution() {
        let field = sine_field(0.2, 2.0);
        let a = field.evaluate(&[0.5], &[0.5]).unwrap();
        assert_relative_eq!(a, 1.1, epsilon = 1e-15);
    }

    #[test]
    fn evaluate_rejects_bad_inputs() {
        let field = sine_field(0.2, 2.0);
        assert!(matches!(
            field.evaluate(&[0.5], &[0.6]),
            Err(Error::ParameterOutOfRange { index: 0, .. })
        ));
        assert!(matches!(field.evaluate(&[1.5], &[0.1]), Err(Error::PointOutsideDomain { .. })));
    }

    #[test]
    fn indicator_sequences_divide_by_a_min() {
        let domain = Domain::interval(2.0).unwrap();
        let amps = vec![0.4, 0.2, 0.1];
        let supports = vec![(0.0, 1.0), (1.0, 2.0), (0.0, 0.5)];
        let basis = IndicatorFamily::new(amps.clone(), supports, domain).unwrap();
        let field = CoefficientField::with_bounds(MeanField::Constant(3.0), Arc::new(basis), 2.0, 4.0).unwrap();
        let seqs = field.derive_sequences(&SequenceParams::new(0.5, 0.5), 3).unwrap();
        for (bj, cj) in seqs.b.iter().zip(&amps) {
            assert_relative_eq!(*bj, cj / 2.0, epsilon = 1e-15);
        }
        assert!(!seqs.gradient_terms);
    }

    #[test]
    fn degenerate_parameters_collapse_sequences() {
        let domain = Domain::interval(1.0).unwrap();
        let basis = IndicatorFamily::new(vec![0.3, 0.1], vec![(0.0, 0.5), (0.5, 1.0)], domain).unwrap();
        let field = CoefficientField::new(MeanField::Constant(1.0), Arc::new(basis)).unwrap();
        let params = SequenceParams {
            p: 0.5,
            q: 0.5,
            kappa: 1.0,
            b_const: Some(0.0),
            c_t: 1.0,
        };
        let seqs = field.derive_sequences(&params, 2).unwrap();
        assert_eq!(seqs.b, seqs.b_bar);
        assert_eq!(seqs.b, seqs.beta);
    }

    #[test]
    fn sine_b_bar_matches_hand_substitution() {
        // b_2 = (0.2 / 4) / 0.8 = 0.0625,
        // b̄_2 = 0.0625 + 0.5 (0.2 π / 2 + 0.25 · 0.05)
        let basis = SineFamily::new(0.2, 2.0, Domain::interval(1.0).unwrap()).unwrap();
        let field = CoefficientField::with_bounds(MeanField::Constant(1.0), Arc::new(basis), 0.8, 1.2).unwrap();
        let params = SequenceParams {
            p: 0.4,
            q: 0.6,
            kappa: 0.5,
            b_const: Some(0.25),
            c_t: 1.0,
        };
        let seqs = field.derive_sequences(&params, 2).unwrap();
        assert_relative_eq!(seqs.b[1], 0.0625, epsilon = 1e-15);
        let expected = 0.0625 + 0.5 * (0.2 * std::f64::consts::PI / 2.0 + 0.25 * 0.05);
        assert_relative_eq!(seqs.b_bar[1], expected, epsilon = 1e-15);
        assert_relative_eq!(seqs.b_bar[1], 0.225_829_6, epsilon = 1e-7);
    }

    #[test]
    fn derive_sequences_rejects_p_above_q() {
        let field = sine_field(0.2, 2.0);
        assert!(field.derive_sequences(&SequenceParams::new(0.6, 0.5), 4).is_err());
    }

    #[test]
    fn default_b_constant_uses_gradient_sum() {
        let field = sine_field(0.2, 2.0);
        let seqs = field.derive_sequences(&SequenceParams::new(0.5, 0.8), 3).unwrap();
        let grad_sum: f64 = (1..=3).map(|j| 0.2 * std::f64::consts::PI / j as f64).sum();
        assert_relative_eq!(seqs.b_const, 0.5 * grad_sum / field.a_min(), epsilon = 1e-14);
    }

    #[test]
    fn sampled_bounds_hold_for_sine_field() {
        let field = sine_field(0.3, 2.0);
        let report = field.sample_bounds(64, 2000, 11);
        assert!(report.holds, "{report:?}");
    }

    #[test]
    fn with_bounds_rejects_unsupported_a_min() {
        let basis = SineFamily::new(0.5, 2.0, Domain::interval(1.0).unwrap()).unwrap();
        // 1 - 0.5 ζ(2) / 2 ≈ 0.589
        let r = CoefficientField::with_bounds(MeanField::Constant(1.0), Arc::new(basis), 0.7, 2.0);
        assert!(matches!(r, Err(Error::EllipticityViolated { .. })));
    }

    #[test]
    fn small_condition_flags_harmonic_sequence() {
        let n = 20;
        let b_bar: Vec<f64> = (1..=n).map(|j| 1.0 / j as f64).collect();
        let seqs = DecaySequences::from_parts(b_bar.clone(), b_bar, 0.5, 1.0).unwrap();
        let report = summability_report(&seqs, n, None);
        let flag = report.small_condition.unwrap();
        // H_6 = 2.45 is the first harmonic number above √6
        assert_eq!(flag.exceeded_at, Some(6));
        assert!(!flag.holds());
    }

    #[test]
    fn zero_sequences_pass_every_check() {
        let zeros = vec![0.0_f64; 10];
        let seqs = DecaySequences::from_parts(zeros.clone(), zeros, 0.5, 1.0).unwrap();
        let report = summability_report(&seqs, 10, None);
        assert_eq!(report.sum_b_p, 0.0);
        assert_eq!(report.sum_b_bar_q, 0.0);
        assert_eq!(report.sum_beta_q, 0.0);
        assert!(report.small_condition.unwrap().holds());
    }
}
