//! Haar multiresolution fluctuation systems with level-wise flat indexing.
//!
//! Level `n = 0` holds the scaling indicators; level `n ≥ 1` holds
//! `ψ_m^n(x) = d_n ψ(2^n x − 2m)`, `ψ = 1_{[0,1)} − 1_{[1,2)}`. The flat index
//! enumerates level 0 completely, then level 1, and so on. In two dimensions
//! the tensor analogue on the unit square uses dyadic cells of side `2^{1−n}`
//! with three detail orientations per cell.

use std::ops::Range;

use crate::error::{invalid, Error, Result};
use crate::fem::FeMesh;
use crate::field::FluctuationBasis;
use crate::geometry::{Cell, Domain};
use crate::quadrature::SimplexRule;
use crate::real::Real;

/// Level scaling `d_n` for `n ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum HaarScaling<T> {
    /// `d_n = c 2^{-nϑ}`.
    Geometric { c: T, theta: T },
    /// Explicit `d_1, d_2, …` dominated by the declared envelope `c 2^{-nϑ}`.
    Tabulated { values: Vec<T>, c: T, theta: T },
}

impl<T: Real> HaarScaling<T> {
    pub fn geometric(c: T, theta: T) -> Self {
        HaarScaling::Geometric { c, theta }
    }

    fn validate(&self, max_level: usize) -> Result<()> {
        let (c, theta) = match self {
            HaarScaling::Geometric { c, theta } => (*c, *theta),
            HaarScaling::Tabulated { values, c, theta } => {
                if values.len() < max_level {
                    return Err(invalid("wavelet scaling", "fewer tabulated values than levels"));
                }
                for (i, &v) in values.iter().enumerate().take(max_level) {
                    let n = T::from_usize_lossy(i + 1);
                    let envelope = *c * T::two().powf(-n * *theta);
                    if !(v > T::zero()) || v > envelope * (T::one() + T::lit(1e-12)) {
                        return Err(invalid(
                            "wavelet scaling",
                            format!("d_{} = {v} is not positive or exceeds the envelope {envelope}", i + 1),
                        ));
                    }
                }
                (*c, *theta)
            }
        };
        if !(c > T::zero()) {
            return Err(invalid("wavelet.c", format!("{c} must be positive")));
        }
        if !(theta > T::zero()) {
            return Err(invalid(
                "wavelet.theta",
                format!("{theta} gives a non-summable level scaling"),
            ));
        }
        Ok(())
    }

    /// `d_n` for `n ≥ 1`.
    pub fn level_scale(&self, n: usize) -> T {
        debug_assert!(n >= 1);
        match self {
            HaarScaling::Geometric { c, theta } => *c * T::two().powf(-T::from_usize_lossy(n) * *theta),
            HaarScaling::Tabulated { values, .. } => values[n - 1],
        }
    }
}

/// Haar system on `[0, a]` (1D) or the unit square (2D).
#[derive(Debug, Clone)]
pub struct WaveletBasis<T> {
    dim: usize,
    a: usize,
    scaling: HaarScaling<T>,
    max_level: usize,
    k_order: usize,
    // offsets[n] = number of functions on levels < n
    offsets: Vec<usize>,
    scales: Vec<T>,
}

/// 1D Haar system on `[0, a]`.
pub fn haar_basis<T: Real>(a: usize, scaling: HaarScaling<T>, max_level: usize) -> Result<WaveletBasis<T>> {
    if a < 2 {
        return Err(invalid("wavelet.a", format!("{a} must be an integer >= 2")));
    }
    WaveletBasis::build(1, a, scaling, max_level)
}

/// Tensor Haar system on the unit square.
pub fn haar_basis_2d<T: Real>(scaling: HaarScaling<T>, max_level: usize) -> Result<WaveletBasis<T>> {
    WaveletBasis::build(2, 1, scaling, max_level)
}

impl<T: Real> WaveletBasis<T> {
    fn build(dim: usize, a: usize, scaling: HaarScaling<T>, max_level: usize) -> Result<Self> {
        scaling.validate(max_level)?;
        if max_level > 30 {
            return Err(invalid("wavelet.max_level", "at most 30 levels are supported"));
        }
        let mut offsets = Vec::with_capacity(max_level + 2);
        offsets.push(0);
        for n in 0..=max_level {
            let count = Self::count(dim, a, n);
            offsets.push(offsets[n] + count);
        }
        let scales = (0..=max_level)
            .map(|n| if n == 0 { T::one() } else { scaling.level_scale(n) })
            .collect();
        Ok(Self {
            dim,
            a,
            scaling,
            max_level,
            k_order: 1,
            offsets,
            scales,
        })
    }

    fn count(dim: usize, a: usize, n: usize) -> usize {
        match (dim, n) {
            (1, 0) => a,
            (1, _) => (1usize << (n - 1)) * a,
            (_, 0) => 1,
            (_, _) => 3 * (1usize << (2 * (n - 1))),
        }
    }

    pub fn spatial_dim(&self) -> usize {
        self.dim
    }

    /// Domain length `a` (1 in 2D).
    pub fn a(&self) -> usize {
        self.a
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn k_order(&self) -> usize {
        self.k_order
    }

    pub fn scaling(&self) -> &HaarScaling<T> {
        &self.scaling
    }

    /// Sup-norm shared by all functions of level `n`.
    pub fn level_scale(&self, n: usize) -> T {
        self.scales[n]
    }

    /// `|J_n|`.
    pub fn level_count(&self, n: usize) -> Result<usize> {
        self.check_level(n)?;
        Ok(self.offsets[n + 1] - self.offsets[n])
    }

    pub fn level_counts(&self) -> Vec<usize> {
        (0..=self.max_level).map(|n| self.offsets[n + 1] - self.offsets[n]).collect()
    }

    /// Flat indices of level `n`.
    pub fn level_range(&self, n: usize) -> Result<Range<usize>> {
        self.check_level(n)?;
        Ok(self.offsets[n]..self.offsets[n + 1])
    }

    pub fn total_len(&self) -> usize {
        self.offsets[self.max_level + 1]
    }

    fn check_level(&self, n: usize) -> Result<()> {
        if n > self.max_level {
            Err(Error::LevelOutOfRange {
                level: n,
                max_level: self.max_level,
            })
        } else {
            Ok(())
        }
    }

    /// `(n, m) ↦ j`.
    pub fn flat_index(&self, n: usize, m: usize) -> Result<usize> {
        let count = self.level_count(n)?;
        if m >= count {
            return Err(invalid("location", format!("m = {m} out of range for level {n} ({count})")));
        }
        Ok(self.offsets[n] + m)
    }

    /// `j ↦ (n, m)`.
    pub fn level_location(&self, j: usize) -> Option<(usize, usize)> {
        if j >= self.total_len() {
            return None;
        }
        // offsets is sorted; find the last n with offsets[n] <= j
        let n = self.offsets.partition_point(|&o| o <= j) - 1;
        Some((n, j - self.offsets[n]))
    }

    /// `s_ℓ = Σ_{n=0}^{ℓ+k−1} |J_n|`.
    pub fn s_ell_orthogonal(&self, ell: usize, k: usize) -> Result<usize> {
        if !(1..=2).contains(&k) {
            return Err(invalid("k", format!("{k} must be 1 or 2")));
        }
        let top = ell + k - 1;
        self.check_level(top)?;
        Ok(self.offsets[top + 1])
    }

    /// Side length of the level-`n` support (`1` at level 0, `2^{1−n}` above).
    pub fn support_width(&self, n: usize) -> T {
        if n == 0 {
            T::one()
        } else {
            T::two().powi(1 - n as i32)
        }
    }

    /// Axis-aligned support box of `ψ_j`.
    pub fn support(&self, j: usize) -> Option<([T; 2], [T; 2])> {
        let (n, m) = self.level_location(j)?;
        let w = self.support_width(n);
        Some(match self.dim {
            1 => {
                let x0 = T::from_usize_lossy(m) * w;
                ([x0, T::zero()], [x0 + w, T::zero()])
            }
            _ => {
                if n == 0 {
                    ([T::zero(); 2], [T::one(); 2])
                } else {
                    let (cx, cy) = self.cell_of(n, m);
                    let x0 = T::from_usize_lossy(cx) * w;
                    let y0 = T::from_usize_lossy(cy) * w;
                    ([x0, y0], [x0 + w, y0 + w])
                }
            }
        })
    }

    // 2D: m = 3 (cy 2^{n-1} + cx) + orientation
    fn cell_of(&self, n: usize, m: usize) -> (usize, usize) {
        let per_row = 1usize << (n - 1);
        let cell = m / 3;
        (cell % per_row, cell / per_row)
    }

    /// Location indices of level-`n` functions whose support meets the box.
    pub fn overlapping(&self, n: usize, lo: [T; 2], hi: [T; 2]) -> Vec<usize> {
        let w = self.support_width(n);
        let count = self.offsets[n + 1] - self.offsets[n];
        let range = |l: T, h: T, cells: usize| -> Range<usize> {
            let first = (l / w).floor().to_f64_lossy().max(0.0) as usize;
            let last = ((h / w).ceil().to_f64_lossy().max(0.0) as usize).min(cells);
            first..last.max(first)
        };
        match self.dim {
            1 => range(lo[0], hi[0], count).collect(),
            _ => {
                if n == 0 {
                    return vec![0];
                }
                let per_row = 1usize << (n - 1);
                let xs = range(lo[0], hi[0], per_row);
                let ys = range(lo[1], hi[1], per_row);
                let mut out = Vec::with_capacity(xs.len() * ys.len() * 3);
                for cy in ys {
                    for cx in xs.clone() {
                        let base = 3 * (cy * per_row + cx);
                        out.extend([base, base + 1, base + 2]);
                    }
                }
                out
            }
        }
    }

    /// Exact `∫_K ψ_j` (`squared = false`) or `∫_K ψ_j²` (`squared = true`).
    pub fn exact_cell_integral(&self, j: usize, cell: &Cell<T>, squared: bool) -> T {
        let (n, m) = match self.level_location(j) {
            Some(v) => v,
            None => return T::zero(),
        };
        let d = self.scales[n];
        let w = self.support_width(n);
        let amp = if squared { d * d } else { d };
        if self.dim == 1 {
            let x0 = T::from_usize_lossy(m) * w;
            if n == 0 {
                return amp * cell.overlap_with_box([x0, T::zero()], [x0 + w, T::zero()]);
            }
            let mid = x0 + T::half() * w;
            let pos = cell.overlap_with_box([x0, T::zero()], [mid, T::zero()]);
            let neg = cell.overlap_with_box([mid, T::zero()], [x0 + w, T::zero()]);
            return if squared { amp * (pos + neg) } else { amp * (pos - neg) };
        }
        if n == 0 {
            return amp * cell.overlap_with_box([T::zero(); 2], [T::one(); 2]);
        }
        let (cx, cy) = self.cell_of(n, m);
        let orientation = m % 3;
        let x0 = T::from_usize_lossy(cx) * w;
        let y0 = T::from_usize_lossy(cy) * w;
        let h = T::half() * w;
        let mut acc = T::zero();
        for (qx, qy) in [(0usize, 0usize), (1, 0), (0, 1), (1, 1)] {
            let lo = [x0 + T::from_usize_lossy(qx) * h, y0 + T::from_usize_lossy(qy) * h];
            let hi = [lo[0] + h, lo[1] + h];
            let area = cell.overlap_with_box(lo, hi);
            let sign = if squared { 1.0 } else { Self::quadrant_sign(orientation, qx, qy) };
            acc = acc + T::lit(sign) * area;
        }
        amp * acc
    }

    fn quadrant_sign(orientation: usize, qx: usize, qy: usize) -> f64 {
        let sx = if qx == 0 { 1.0 } else { -1.0 };
        let sy = if qy == 0 { 1.0 } else { -1.0 };
        match orientation {
            0 => sx,
            1 => sy,
            _ => sx * sy,
        }
    }

    fn eval_1d(&self, n: usize, m: usize, x: T) -> T {
        if n == 0 {
            let lo = T::from_usize_lossy(m);
            return if x >= lo && x < lo + T::one() { T::one() } else { T::zero() };
        }
        let t = T::two().powi(n as i32) * x - T::from_usize_lossy(2 * m);
        if t >= T::zero() && t < T::one() {
            self.scales[n]
        } else if t >= T::one() && t < T::two() {
            -self.scales[n]
        } else {
            T::zero()
        }
    }

    fn eval_2d(&self, n: usize, m: usize, x: &[T]) -> T {
        let inside = |v: T| v >= T::zero() && v < T::one();
        if n == 0 {
            return if inside(x[0]) && inside(x[1]) { T::one() } else { T::zero() };
        }
        let w = self.support_width(n);
        let (cx, cy) = self.cell_of(n, m);
        let u = (x[0] - T::from_usize_lossy(cx) * w) / w;
        let v = (x[1] - T::from_usize_lossy(cy) * w) / w;
        if !(inside(u) && inside(v)) {
            return T::zero();
        }
        let qx = usize::from(u >= T::half());
        let qy = usize::from(v >= T::half());
        self.scales[n] * T::lit(Self::quadrant_sign(m % 3, qx, qy))
    }
}

impl<T: Real> FluctuationBasis<T> for WaveletBasis<T> {
    fn name(&self) -> &'static str {
        "haar"
    }

    fn domain(&self) -> Domain {
        if self.dim == 1 {
            Domain::Interval { length: self.a as f64 }
        } else {
            Domain::UnitSquare
        }
    }

    fn len(&self) -> Option<usize> {
        Some(self.total_len())
    }

    fn eval(&self, j: usize, x: &[T]) -> T {
        match self.level_location(j) {
            None => T::zero(),
            Some((n, m)) if self.dim == 1 => self.eval_1d(n, m, x[0]),
            Some((n, m)) => self.eval_2d(n, m, x),
        }
    }

    fn sup_norm(&self, j: usize) -> T {
        self.level_location(j).map_or(T::zero(), |(n, _)| self.scales[n])
    }

    fn grad_sup_norm(&self, _j: usize) -> Option<T> {
        None
    }

    fn pointwise_bound(&self) -> T {
        // one function per level (three orientations in 2D) is nonzero at any x
        let per_level = T::from_usize_lossy(if self.dim == 1 { 1 } else { 3 });
        self.scales[1..].iter().fold(T::one(), |acc, &d| acc + per_level * d)
    }

    fn cell_integral(&self, j: usize, cell: &Cell<T>, _rule: &SimplexRule<T>) -> T {
        self.exact_cell_integral(j, cell, false)
    }

    fn exact_cell_integrals(&self) -> bool {
        true
    }

    fn as_wavelet(&self) -> Option<&WaveletBasis<T>> {
        Some(self)
    }
}

/// Outcome of the k-orthogonality verification against one mesh level.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityReport {
    pub level: usize,
    pub k: usize,
    pub passed: bool,
    /// `max |∫_K ψ_m^n| / (‖ψ_m^n‖_∞ |K|)` over `n ≥ ℓ + k`.
    pub max_orthogonality_defect: f64,
    /// `max (|K| ∫_K ψ² − (∫_K ψ)²) / (‖ψ‖_∞² |K|²)` over `n ≤ ℓ + k − 1`.
    pub max_representation_defect: f64,
    /// First offending `(n, m, cell)` if any.
    pub first_violation: Option<(usize, usize, usize)>,
    pub checked_functions: usize,
    pub multiresolution: bool,
}

/// Verifies `∫ ψ_m^n z_ℓ = 0` for all `n ≥ ℓ + k` and every piecewise constant
/// `z_ℓ` on the mesh (element indicators span that space), and that
/// `ψ_m^n` is piecewise constant on the mesh for `n ≤ ℓ + k − 1`.
///
/// Bases without multiresolution structure are checked with one function per
/// level, using the first `flat_terms` functions.
pub fn check_k_orthogonality<T: Real>(
    basis: &dyn FluctuationBasis<T>,
    mesh: &FeMesh<T>,
    k: usize,
    tolerance: f64,
    flat_terms: usize,
) -> Result<OrthogonalityReport> {
    if basis.domain() != mesh.domain() {
        return Err(Error::DomainMismatch);
    }
    if k != 1 {
        return Err(invalid("wavelet.k", "only k = 1 bases are implemented"));
    }
    let ell = mesh.level();
    let wavelet = basis.as_wavelet();
    let top = match wavelet {
        Some(w) => w.max_level(),
        None => flat_terms.saturating_sub(1),
    };
    let level_funcs = |n: usize| -> Range<usize> {
        match wavelet {
            Some(w) => w.level_range(n).expect("level within range"),
            None => n..n + 1,
        }
    };
    let rule = SimplexRule::<T>::interval(12);
    let tri_rule = SimplexRule::<T>::triangle(12);
    let integral = |j: usize, cell: &Cell<T>, squared: bool| -> T {
        match wavelet {
            Some(w) => w.exact_cell_integral(j, cell, squared),
            None => {
                let r = if mesh.spatial_dim() == 1 { &rule } else { &tri_rule };
                if squared {
                    let dim = mesh.spatial_dim();
                    let mut acc = T::zero();
                    for (p, &wq) in r.points.iter().zip(&r.weights) {
                        let x = cell.map(p);
                        let v = basis.eval(j, &x[..dim]);
                        acc = acc + wq * v * v;
                    }
                    acc * cell.measure()
                } else {
                    basis.cell_integral(j, cell, r)
                }
            }
        }
    };

    let mut report = OrthogonalityReport {
        level: ell,
        k,
        passed: true,
        max_orthogonality_defect: 0.0,
        max_representation_defect: 0.0,
        first_violation: None,
        checked_functions: 0,
        multiresolution: wavelet.is_some(),
    };
    let cells: Vec<Cell<T>> = (0..mesh.num_cells()).map(|c| mesh.cell(c)).collect();
    for n in 0..=top {
        let orthogonal_level = n >= ell + k;
        for j in level_funcs(n) {
            let norm = basis.sup_norm(j).to_f64_lossy();
            if norm == 0.0 {
                continue;
            }
            report.checked_functions += 1;
            for (c, cell) in cells.iter().enumerate() {
                let area = cell.measure().to_f64_lossy();
                let first = integral(j, cell, false).to_f64_lossy();
                let defect = if orthogonal_level {
                    let d = first.abs() / (norm * area);
                    report.max_orthogonality_defect = report.max_orthogonality_defect.max(d);
                    d
                } else {
                    let second = integral(j, cell, true).to_f64_lossy();
                    let d = (area * second - first * first).abs() / (norm * norm * area * area);
                    report.max_representation_defect = report.max_representation_defect.max(d);
                    d
                };
                if defect > tolerance && report.first_violation.is_none() {
                    let m = j - level_funcs(n).start;
                    report.first_violation = Some((n, m, c));
                    report.passed = false;
                }
            }
        }
    }
    Ok(report)
}
