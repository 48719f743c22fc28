//! Nested P1 finite element spaces, stiffness assembly for the parametric
//! coefficient, direct solves and the output functional.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::field::CoefficientField;
use crate::geometry::{Cell, Domain};
use crate::linalg::{dot, norm2, SymBanded};
use crate::quadrature::SimplexRule;
use crate::real::Real;
use crate::wavelet::check_k_orthogonality;

#[derive(Debug, Clone, PartialEq)]
enum Layout<T> {
    /// Nodes including both end points.
    Interval { nodes: Vec<T>, uniform: bool },
    /// Friedrichs–Keller triangulation with `n` squares per side.
    Square { n: usize },
}

/// One level of the mesh hierarchy. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeMesh<T> {
    domain: Domain,
    level: usize,
    h0: T,
    h: T,
    layout: Layout<T>,
}

/// Coarsest mesh width used when none is given: 1 on `[0, a]` for integer
/// `a ≥ 2`, otherwise `a / 2`, and `1/2` on the unit square.
pub fn default_h0(domain: Domain) -> f64 {
    match domain {
        Domain::Interval { length } if length >= 2.0 && length.fract() == 0.0 => 1.0,
        Domain::Interval { length } => length / 2.0,
        Domain::UnitSquare => 0.5,
    }
}

impl<T: Real> FeMesh<T> {
    /// Uniform mesh of `[0, a]` with width `h0 2^{-level}`; `a / h0` must be an integer.
    pub fn interval(a: f64, h0: f64, level: usize) -> Result<Self> {
        let domain = Domain::interval(a)?;
        if !(h0 > 0.0 && h0 <= a) {
            return Err(invalid("fem.h0", format!("{h0} must lie in (0, {a}]")));
        }
        let cells0 = (a / h0).round();
        if ((a / h0) - cells0).abs() > 1e-12 * cells0 {
            return Err(invalid("fem.h0", format!("{a} is not an integer multiple of {h0}")));
        }
        if level > 24 {
            return Err(invalid("fem.L", format!("level {level} is too fine")));
        }
        let n = cells0 as usize * (1usize << level);
        let h = T::lit(h0) / T::two().powi(level as i32);
        let nodes = (0..=n).map(|i| T::from_usize_lossy(i) * h).collect();
        Ok(Self {
            domain,
            level,
            h0: T::lit(h0),
            h,
            layout: Layout::Interval { nodes, uniform: true },
        })
    }

    /// Friedrichs–Keller mesh of the unit square with `h = 2^{-level} / 2`.
    pub fn unit_square(level: usize) -> Result<Self> {
        if level > 12 {
            return Err(invalid("fem.L", format!("level {level} is too fine")));
        }
        let n = 2usize << level;
        Ok(Self {
            domain: Domain::UnitSquare,
            level,
            h0: T::half(),
            h: T::one() / T::from_usize_lossy(n),
            layout: Layout::Square { n },
        })
    }

    /// 1D mesh from explicit node positions `0 = x_0 < … < x_n = a`, tagged
    /// with a level for orthogonality checks. `h` is the largest spacing.
    pub fn from_nodes_1d(nodes: Vec<T>, level: usize) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != T::zero() {
            return Err(invalid("mesh nodes", "need at least two nodes starting at 0"));
        }
        let mut h = T::zero();
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(invalid("mesh nodes", "nodes must be strictly increasing"));
            }
            h = h.max(w[1] - w[0]);
        }
        let a = nodes[nodes.len() - 1];
        Ok(Self {
            domain: Domain::interval(a.to_f64_lossy())?,
            level,
            h0: h * T::two().powi(level as i32),
            h,
            layout: Layout::Interval { nodes, uniform: false },
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn h0(&self) -> T {
        self.h0
    }

    pub fn spatial_dim(&self) -> usize {
        self.domain.dim()
    }

    /// True for uniform 1D meshes whose nodes are the multiples of `2^{-level}`.
    pub fn is_dyadic_interval(&self) -> bool {
        matches!(self.layout, Layout::Interval { uniform: true, .. })
            && self.h == T::two().powi(-(self.level as i32))
    }

    /// Number of interior nodes `M_ℓ`.
    pub fn num_dofs(&self) -> usize {
        match &self.layout {
            Layout::Interval { nodes, .. } => nodes.len() - 2,
            Layout::Square { n } => (n - 1) * (n - 1),
        }
    }

    pub fn num_cells(&self) -> usize {
        match &self.layout {
            Layout::Interval { nodes, .. } => nodes.len() - 1,
            Layout::Square { n } => 2 * n * n,
        }
    }

    /// Matrix bandwidth under the natural node ordering.
    pub fn bandwidth(&self) -> usize {
        match &self.layout {
            Layout::Interval { .. } => 1,
            Layout::Square { n } => *n,
        }
    }

    pub fn cell(&self, e: usize) -> Cell<T> {
        match &self.layout {
            Layout::Interval { nodes, .. } => Cell::Interval {
                x0: nodes[e],
                x1: nodes[e + 1],
            },
            Layout::Square { n } => {
                let ids = self.square_cell_nodes(*n, e);
                Cell::Triangle {
                    v: ids.map(|(i, j)| self.grid_point(i, j)),
                }
            }
        }
    }

    fn grid_point(&self, i: usize, j: usize) -> [T; 2] {
        [T::from_usize_lossy(i) * self.h, T::from_usize_lossy(j) * self.h]
    }

    fn square_cell_nodes(&self, n: usize, e: usize) -> [(usize, usize); 3] {
        let sq = e / 2;
        let (i, j) = (sq % n, sq / n);
        if e % 2 == 0 {
            [(i, j), (i + 1, j), (i + 1, j + 1)]
        } else {
            [(i, j), (i + 1, j + 1), (i, j + 1)]
        }
    }

    /// Interior degree-of-freedom index of each vertex of cell `e`.
    pub fn cell_dofs(&self, e: usize) -> [Option<usize>; 3] {
        match &self.layout {
            Layout::Interval { nodes, .. } => {
                let last = nodes.len() - 1;
                let dof = |k: usize| if k == 0 || k == last { None } else { Some(k - 1) };
                [dof(e), dof(e + 1), None]
            }
            Layout::Square { n } => self.square_cell_nodes(*n, e).map(|(i, j)| {
                if i == 0 || j == 0 || i == *n || j == *n {
                    None
                } else {
                    Some((j - 1) * (n - 1) + (i - 1))
                }
            }),
        }
    }

    /// Coordinates of interior node `dof`.
    pub fn dof_coords(&self, dof: usize) -> [T; 2] {
        match &self.layout {
            Layout::Interval { nodes, .. } => [nodes[dof + 1], T::zero()],
            Layout::Square { n } => {
                let (i, j) = (dof % (n - 1) + 1, dof / (n - 1) + 1);
                self.grid_point(i, j)
            }
        }
    }

    /// Gradients of the barycentric coordinates on cell `e`.
    pub fn cell_gradients(&self, e: usize) -> [[T; 2]; 3] {
        match self.cell(e) {
            Cell::Interval { x0, x1 } => {
                let g = T::one() / (x1 - x0);
                [[-g, T::zero()], [g, T::zero()], [T::zero(); 2]]
            }
            Cell::Triangle { v } => {
                let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
                [
                    [(v[1][1] - v[2][1]) / det, (v[2][0] - v[1][0]) / det],
                    [(v[2][1] - v[0][1]) / det, (v[0][0] - v[2][0]) / det],
                    [(v[0][1] - v[1][1]) / det, (v[1][0] - v[0][0]) / det],
                ]
            }
        }
    }

    /// Cell containing `x` and the barycentric coordinates of `x` in it.
    pub fn locate(&self, x: &[T]) -> Result<(usize, [T; 3])> {
        self.domain.check_point(x)?;
        match &self.layout {
            Layout::Interval { nodes, .. } => {
                let k = nodes.partition_point(|&p| p <= x[0]);
                let e = k.saturating_sub(1).min(nodes.len() - 2);
                let t = (x[0] - nodes[e]) / (nodes[e + 1] - nodes[e]);
                Ok((e, [T::one() - t, t, T::zero()]))
            }
            Layout::Square { n } => {
                let nf = T::from_usize_lossy(*n);
                let clamp = |v: T| (v * nf).floor().to_f64_lossy().clamp(0.0, (*n - 1) as f64) as usize;
                let (i, j) = (clamp(x[0]), clamp(x[1]));
                let u = x[0] * nf - T::from_usize_lossy(i);
                let v = x[1] * nf - T::from_usize_lossy(j);
                let sq = j * n + i;
                if u >= v {
                    Ok((2 * sq, [T::one() - u, u - v, v]))
                } else {
                    Ok((2 * sq + 1, [T::one() - v, u, v - u]))
                }
            }
        }
    }
}

/// Meshes `T_0, …, T_L` with the default coarsest width.
pub fn build_hierarchy<T: Real>(domain: Domain, levels: usize) -> Result<Vec<FeMesh<T>>> {
    let h0 = default_h0(domain);
    (0..=levels)
        .map(|l| match domain {
            Domain::Interval { length } => FeMesh::interval(length, h0, l),
            Domain::UnitSquare => FeMesh::unit_square(l),
        })
        .collect()
}

/// A source or functional representer in `L²(D)`.
#[derive(Clone)]
pub enum L2Function<T> {
    Constant(T),
    Function(Arc<dyn Fn(&[T]) -> T + Send + Sync>),
}

impl<T: Real> fmt::Debug for L2Function<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            L2Function::Constant(c) => write!(f, "Constant({c})"),
            L2Function::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl<T: Real> L2Function<T> {
    pub fn one() -> Self {
        L2Function::Constant(T::one())
    }

    pub fn eval(&self, x: &[T]) -> T {
        match self {
            L2Function::Constant(c) => *c,
            L2Function::Function(f) => f(x),
        }
    }

    /// `(∫ f φ_i)_i` over the interior hat functions.
    pub fn load_vector(&self, mesh: &FeMesh<T>, degree: usize) -> Vec<T> {
        let dim = mesh.spatial_dim();
        let rule = if dim == 1 {
            SimplexRule::interval(degree)
        } else {
            SimplexRule::triangle(degree)
        };
        let mut out = vec![T::zero(); mesh.num_dofs()];
        for e in 0..mesh.num_cells() {
            let cell = mesh.cell(e);
            let dofs = mesh.cell_dofs(e);
            let area = cell.measure();
            match self {
                L2Function::Constant(c) => {
                    let share = *c * area / T::from_usize_lossy(dim + 1);
                    for d in dofs.iter().flatten() {
                        out[*d] = out[*d] + share;
                    }
                }
                L2Function::Function(f) => {
                    for (p, &w) in rule.points.iter().zip(&rule.weights) {
                        let x = cell.map(p);
                        let fx = f(&x[..dim]) * w * area;
                        for (a, d) in dofs.iter().enumerate() {
                            if let Some(d) = d {
                                out[*d] = out[*d] + fx * p[a];
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// How the coefficient is integrated per element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssemblyMode {
    /// All terms `j < s` on every element.
    Generic { s: usize },
    /// Only the wavelets of levels `n ≤ ℓ + k − 1` overlapping each element,
    /// with truncation `s_ℓ`.
    OrthogonalFastPath,
}

/// Work counters of one assembly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssemblyStats {
    pub cells: usize,
    /// Coefficient terms visited (one cell integral each).
    pub term_evaluations: usize,
    /// Terms with a nonzero element integral.
    pub stored_terms: usize,
}

/// Discretization options.
#[derive(Debug, Clone)]
pub struct FemConfig<T: Real> {
    /// Polynomial exactness of the element quadrature for smooth data.
    pub quad_degree: usize,
    /// Bound on the normwise relative residual `‖b − Au‖ / (‖A‖ ‖u‖ + ‖b‖)`.
    pub solver_tol: T,
    pub f: L2Function<T>,
    pub g: L2Function<T>,
}

impl<T: Real> Default for FemConfig<T> {
    fn default() -> Self {
        let solver_tol = if T::epsilon() > T::lit(1e-10) { T::lit(1e-5) } else { T::lit(1e-12) };
        Self {
            quad_degree: 6,
            solver_tol,
            f: L2Function::one(),
            g: L2Function::one(),
        }
    }
}

/// Galerkin solution at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeSolution<T> {
    pub level: usize,
    pub values: Vec<T>,
    pub y: Vec<T>,
    pub relative_residual: f64,
}

/// Level-`ℓ` discretization with all `y`-independent data precomputed:
/// element gradient products, element integrals of `ā` and of the active
/// `ψ_j`, the load vector and the functional representer.
#[derive(Debug, Clone)]
pub struct LevelSystem<T: Real> {
    mesh: FeMesh<T>,
    field: CoefficientField<T>,
    mode: AssemblyMode,
    s: usize,
    solver_tol: T,
    local: Vec<[[T; 3]; 3]>,
    dofs: Vec<[Option<usize>; 3]>,
    mean_integrals: Vec<T>,
    term_ptr: Vec<usize>,
    term_index: Vec<u32>,
    term_value: Vec<T>,
    load: Vec<T>,
    functional: Vec<T>,
    stats: AssemblyStats,
}

impl<T: Real> LevelSystem<T> {
    pub fn new(mesh: FeMesh<T>, field: &CoefficientField<T>, mode: AssemblyMode, config: &FemConfig<T>) -> Result<Self> {
        if mesh.domain() != field.domain() {
            return Err(Error::DomainMismatch);
        }
        let dim = mesh.spatial_dim();
        let rule = if dim == 1 {
            SimplexRule::interval(config.quad_degree)
        } else {
            SimplexRule::triangle(config.quad_degree)
        };
        let basis = field.basis();
        let cells = mesh.num_cells();
        let mut stats = AssemblyStats {
            cells,
            ..Default::default()
        };
        let mut term_ptr = Vec::with_capacity(cells + 1);
        let mut term_index = Vec::new();
        let mut term_value = Vec::new();
        term_ptr.push(0);

        let s = match mode {
            AssemblyMode::Generic { s } => {
                if let Some(len) = basis.len() {
                    if s > len {
                        return Err(Error::TruncationTooLarge {
                            requested: s,
                            available: len,
                        });
                    }
                }
                for e in 0..cells {
                    let cell = mesh.cell(e);
                    for j in 0..s {
                        let v = basis.cell_integral(j, &cell, &rule);
                        stats.term_evaluations += 1;
                        if v != T::zero() {
                            term_index.push(j as u32);
                            term_value.push(v);
                        }
                    }
                    term_ptr.push(term_index.len());
                }
                s
            }
            AssemblyMode::OrthogonalFastPath => {
                let wavelet = basis.as_wavelet().ok_or_else(|| {
                    Error::ModeMismatch(format!("fast path needs a wavelet field, got {}", basis.name()))
                })?;
                let k = wavelet.k_order();
                let ell = mesh.level();
                let s = wavelet.s_ell_orthogonal(ell, k)?;
                if !mesh.is_dyadic_interval() {
                    let report = check_k_orthogonality(basis, &mesh, k, 1e-13, 0)?;
                    if !report.passed {
                        return Err(Error::ModeMismatch(format!(
                            "wavelet basis is not {k}-orthogonal to mesh level {ell} (first violation {:?})",
                            report.first_violation
                        )));
                    }
                }
                for e in 0..cells {
                    let cell = mesh.cell(e);
                    let (lo, hi) = cell.bounding_box();
                    for n in 0..(ell + k) {
                        let offset = wavelet.level_range(n)?.start;
                        for m in wavelet.overlapping(n, lo, hi) {
                            let j = offset + m;
                            let v = wavelet.exact_cell_integral(j, &cell, false);
                            stats.term_evaluations += 1;
                            if v != T::zero() {
                                term_index.push(j as u32);
                                term_value.push(v);
                            }
                        }
                    }
                    term_ptr.push(term_index.len());
                }
                s
            }
        };
        stats.stored_terms = term_index.len();

        let mut local = Vec::with_capacity(cells);
        let mut dofs = Vec::with_capacity(cells);
        let mut mean_integrals = Vec::with_capacity(cells);
        for e in 0..cells {
            let g = mesh.cell_gradients(e);
            let mut k = [[T::zero(); 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    k[a][b] = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                }
            }
            local.push(k);
            dofs.push(mesh.cell_dofs(e));
            mean_integrals.push(field.mean_cell_integral(&mesh.cell(e), &rule));
        }
        let load = config.f.load_vector(&mesh, config.quad_degree);
        let functional = config.g.load_vector(&mesh, config.quad_degree);
        Ok(Self {
            mesh,
            field: field.clone(),
            mode,
            s,
            solver_tol: config.solver_tol,
            local,
            dofs,
            mean_integrals,
            term_ptr,
            term_index,
            term_value,
            load,
            functional,
            stats,
        })
    }

    pub fn mesh(&self) -> &FeMesh<T> {
        &self.mesh
    }

    pub fn mode(&self) -> AssemblyMode {
        self.mode
    }

    /// Number of parameters the system reads from `y`.
    pub fn truncation(&self) -> usize {
        self.s
    }

    pub fn stats(&self) -> AssemblyStats {
        self.stats
    }

    pub fn load_vector(&self) -> &[T] {
        &self.load
    }

    pub fn functional_vector(&self) -> &[T] {
        &self.functional
    }

    /// `(∫_K a(·, y))_K` using the first `truncation()` entries of `y`.
    pub fn element_coefficients(&self, y: &[T]) -> Result<Vec<T>> {
        if y.len() < self.s {
            return Err(Error::DimensionMismatch {
                expected: self.s,
                found: y.len(),
            });
        }
        let y = &y[..self.s];
        self.field.check_parameters(y)?;
        let mut out = self.mean_integrals.clone();
        for (e, v) in out.iter_mut().enumerate() {
            for t in self.term_ptr[e]..self.term_ptr[e + 1] {
                *v = *v + y[self.term_index[t] as usize] * self.term_value[t];
            }
        }
        Ok(out)
    }

    pub fn assemble(&self, y: &[T]) -> Result<SymBanded<T>> {
        let coeffs = self.element_coefficients(y)?;
        let mut a = SymBanded::zeros(self.mesh.num_dofs(), self.mesh.bandwidth());
        for (e, &c) in coeffs.iter().enumerate() {
            let dofs = &self.dofs[e];
            let k = &self.local[e];
            for p in 0..3 {
                let Some(i) = dofs[p] else { continue };
                for q in 0..=p {
                    let Some(j) = dofs[q] else { continue };
                    if i == j && p != q {
                        continue;
                    }
                    let v = c * k[p][q];
                    a.add(i, j, v);
                }
            }
        }
        Ok(a)
    }

    pub fn solve(&self, y: &[T]) -> Result<FeSolution<T>> {
        let a = self.assemble(y)?;
        let values = solve_checked(&a, &self.load, self.solver_tol)?;
        let relative_residual = backward_error(&a, &values.0, &self.load);
        Ok(FeSolution {
            level: self.mesh.level(),
            values: values.0,
            y: y[..self.s].to_vec(),
            relative_residual,
        })
    }

    /// `G(u_h(y))`.
    pub fn g_value(&self, y: &[T]) -> Result<T> {
        let u = self.solve(y)?;
        Ok(dot(&self.functional, &u.values))
    }

    pub fn apply_functional(&self, u: &FeSolution<T>) -> T {
        dot(&self.functional, &u.values)
    }
}

fn backward_error<T: Real>(a: &SymBanded<T>, u: &[T], b: &[T]) -> f64 {
    let au = a.mul_vec(u);
    let r: Vec<T> = b.iter().zip(&au).map(|(&bi, &ai)| bi - ai).collect();
    let mut a_norm = 0.0f64;
    for i in 0..a.dim() {
        let lo = i.saturating_sub(a.bandwidth());
        let hi = (i + a.bandwidth() + 1).min(a.dim());
        let row: f64 = (lo..hi).map(|j| a.get(i, j).to_f64_lossy().abs()).sum();
        a_norm = a_norm.max(row);
    }
    let u_inf = u.iter().fold(0.0f64, |m, v| m.max(v.to_f64_lossy().abs()));
    let b_inf = b.iter().fold(0.0f64, |m, v| m.max(v.to_f64_lossy().abs()));
    let r_inf = r.iter().fold(0.0f64, |m, v| m.max(v.to_f64_lossy().abs()));
    let denom = a_norm * u_inf + b_inf;
    if denom == 0.0 {
        0.0
    } else {
        r_inf / denom
    }
}

/// Direct solve with one step of iterative refinement if the backward error
/// exceeds `tol`.
fn solve_checked<T: Real>(a: &SymBanded<T>, b: &[T], tol: T) -> Result<(Vec<T>,)> {
    if a.dim() == 0 {
        return Ok((Vec::new(),));
    }
    let chol = a.cholesky()?;
    let mut u = chol.solve(b);
    let tol = tol.to_f64_lossy();
    let mut err = backward_error(a, &u, b);
    if err > tol {
        let au = a.mul_vec(&u);
        let r: Vec<T> = b.iter().zip(&au).map(|(&bi, &ai)| bi - ai).collect();
        let du = chol.solve(&r);
        for (x, d) in u.iter_mut().zip(&du) {
            *x = *x + *d;
        }
        err = backward_error(a, &u, b);
    }
    if err > tol || !err.is_finite() {
        return Err(Error::SolverBreakdown {
            residual: err,
            tolerance: tol,
            pivot_ratio: chol.pivot_ratio(),
        });
    }
    Ok((u,))
}

/// Stiffness matrix of `mesh` at `y` (all of `y` in generic mode, the first
/// `s_ℓ` entries on the fast path).
pub fn assemble_stiffness<T: Real>(
    mesh: &FeMesh<T>,
    field: &CoefficientField<T>,
    y: &[T],
    fast_path: bool,
) -> Result<(SymBanded<T>, AssemblyStats)> {
    let mode = if fast_path {
        AssemblyMode::OrthogonalFastPath
    } else {
        AssemblyMode::Generic { s: y.len() }
    };
    let system = LevelSystem::new(mesh.clone(), field, mode, &FemConfig::default())?;
    Ok((system.assemble(y)?, system.stats()))
}

/// Galerkin solution for source `f`.
pub fn solve<T: Real>(
    mesh: &FeMesh<T>,
    field: &CoefficientField<T>,
    y: &[T],
    f: L2Function<T>,
    fast_path: bool,
) -> Result<FeSolution<T>> {
    let mode = if fast_path {
        AssemblyMode::OrthogonalFastPath
    } else {
        AssemblyMode::Generic { s: y.len() }
    };
    let config = FemConfig {
        f,
        ..FemConfig::default()
    };
    LevelSystem::new(mesh.clone(), field, mode, &config)?.solve(y)
}

/// `∫_D g u_h` for a representer `g`.
pub fn apply_functional<T: Real>(g: &L2Function<T>, mesh: &FeMesh<T>, values: &[T], quad_degree: usize) -> T {
    dot(&g.load_vector(mesh, quad_degree), values)
}

/// Value of the P1 function with interior nodal `values` at `x`.
pub fn evaluate<T: Real>(mesh: &FeMesh<T>, values: &[T], x: &[T]) -> Result<T> {
    if values.len() != mesh.num_dofs() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_dofs(),
            found: values.len(),
        });
    }
    let (e, bary) = mesh.locate(x)?;
    let dofs = mesh.cell_dofs(e);
    Ok(dofs
        .iter()
        .zip(&bary)
        .fold(T::zero(), |acc, (d, &b)| d.map_or(acc, |d| acc + b * values[d])))
}

/// Nodal interpolation of a coarse P1 function onto a finer nested mesh.
pub fn prolongate<T: Real>(coarse: &FeMesh<T>, fine: &FeMesh<T>, values: &[T]) -> Result<Vec<T>> {
    if coarse.domain() != fine.domain() || fine.level() < coarse.level() {
        return Err(Error::DomainMismatch);
    }
    let dim = fine.spatial_dim();
    (0..fine.num_dofs())
        .map(|d| {
            let x = fine.dof_coords(d);
            evaluate(coarse, values, &x[..dim])
        })
        .collect()
}

/// `|u_h|_{H¹}` of a nodal vector.
pub fn energy_seminorm<T: Real>(mesh: &FeMesh<T>, values: &[T]) -> T {
    let mut acc = T::zero();
    for e in 0..mesh.num_cells() {
        let g = mesh.cell_gradients(e);
        let dofs = mesh.cell_dofs(e);
        let mut grad = [T::zero(); 2];
        for (a, d) in dofs.iter().enumerate() {
            if let Some(d) = d {
                grad[0] = grad[0] + g[a][0] * values[*d];
                grad[1] = grad[1] + g[a][1] * values[*d];
            }
        }
        acc = acc + (grad[0] * grad[0] + grad[1] * grad[1]) * mesh.cell(e).measure();
    }
    acc.sqrt()
}

/// Writes rows `x [y] value` for every interior node.
pub fn write_nodal<T: Real, W: Write>(mesh: &FeMesh<T>, values: &[T], mut out: W) -> std::io::Result<()> {
    for (d, v) in values.iter().enumerate() {
        let x = mesh.dof_coords(d);
        if mesh.spatial_dim() == 1 {
            writeln!(out, "{} {}", x[0], v)?;
        } else {
            writeln!(out, "{} {} {}", x[0], x[1], v)?;
        }
    }
    Ok(())
}

/// Euclidean norm of a nodal vector.
pub fn nodal_norm<T: Real>(values: &[T]) -> T {
    norm2(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{MeanField, SineFamily};
    use crate::wavelet::{haar_basis, HaarScaling};

    fn constant_field(a: f64, domain: Domain) -> CoefficientField<f64> {
        let basis = SineFamily::new(0.0, 2.0, domain).unwrap();
        CoefficientField::new(MeanField::Constant(a), Arc::new(basis)).unwrap()
    }

    #[test]
    fn hierarchy_counts() {
        let h = build_hierarchy::<f64>(Domain::interval(2.0).unwrap(), 3).unwrap();
        assert_eq!(h[0].num_dofs(), 1);
        assert_eq!(h[3].num_dofs(), 15);
        assert_eq!(h[3].h(), 0.125);
        let sq = build_hierarchy::<f64>(Domain::UnitSquare, 2).unwrap();
        assert_eq!(sq[2].num_dofs(), 49);
        assert_eq!(sq[2].h(), 0.125);
        for w in sq.windows(2) {
            assert!(w[1].num_dofs() > w[0].num_dofs());
        }
    }

    #[test]
    fn laplacian_stencil() {
        let mesh = FeMesh::<f64>::interval(1.0, 0.5, 1).unwrap();
        let field = constant_field(1.0, mesh.domain());
        let (a, _) = assemble_stiffness(&mesh, &field, &[], false).unwrap();
        assert_eq!(a.dim(), 3);
        for i in 0..3 {
            assert!((a.get(i, i) - 8.0).abs() < 1e-14);
            if i > 0 {
                assert!((a.get(i, i - 1) + 4.0).abs() < 1e-14);
            }
        }
        assert_eq!(a.get(0, 2), 0.0);
    }

    #[test]
    fn nodal_exactness_in_1d() {
        let mesh = FeMesh::<f64>::interval(1.0, 0.5, 3).unwrap();
        let field = constant_field(1.0, mesh.domain());
        let u = solve(&mesh, &field, &[], L2Function::one(), false).unwrap();
        for (d, v) in u.values.iter().enumerate() {
            let x = mesh.dof_coords(d)[0];
            assert!((v - x * (1.0 - x) / 2.0).abs() < 1e-14);
        }
        assert!(u.relative_residual <= 1e-12);
    }

    #[test]
    fn scaling_with_constant_coefficient() {
        let mesh = FeMesh::<f64>::unit_square(2).unwrap();
        let one = constant_field(1.0, mesh.domain());
        let low = constant_field(0.25, mesh.domain());
        let u1 = solve(&mesh, &one, &[], L2Function::one(), false).unwrap();
        let u2 = solve(&mesh, &low, &[], L2Function::one(), false).unwrap();
        let n1 = energy_seminorm(&mesh, &u1.values);
        let n2 = energy_seminorm(&mesh, &u2.values);
        assert!((n2 - n1 / 0.25).abs() < 1e-12 * n2);
    }

    #[test]
    fn functional_of_interpolant() {
        let mesh = FeMesh::<f64>::interval(1.0, 0.5, 6).unwrap();
        let values: Vec<f64> = (0..mesh.num_dofs())
            .map(|d| {
                let x = mesh.dof_coords(d)[0];
                x * (1.0 - x) / 2.0
            })
            .collect();
        let g = apply_functional(&L2Function::one(), &mesh, &values, 6);
        let h = mesh.h();
        assert!((g - 1.0 / 12.0).abs() < h * h);
        assert_eq!(apply_functional(&L2Function::one(), &mesh, &vec![0.0; mesh.num_dofs()], 6), 0.0);
    }

    #[test]
    fn prolongation_preserves_functional() {
        for domain in [Domain::interval(1.0).unwrap(), Domain::UnitSquare] {
            let meshes = build_hierarchy::<f64>(domain, 3).unwrap();
            let basis = SineFamily::new(0.3, 2.0, domain).unwrap();
            let field = CoefficientField::new(MeanField::Constant(1.0), Arc::new(basis)).unwrap();
            let y = [0.3, -0.2, 0.45];
            let coarse = solve(&meshes[2], &field, &y, L2Function::one(), false).unwrap();
            let fine_values = prolongate(&meshes[2], &meshes[3], &coarse.values).unwrap();
            let g = L2Function::one();
            let gc = apply_functional(&g, &meshes[2], &coarse.values, 6);
            let gf = apply_functional(&g, &meshes[3], &fine_values, 6);
            assert!((gc - gf).abs() <= 1e-12 * gc.abs(), "{gc} vs {gf}");
            let x = if domain.dim() == 1 { vec![0.37] } else { vec![0.37, 0.61] };
            let vc = evaluate(&meshes[2], &coarse.values, &x).unwrap();
            let vf = evaluate(&meshes[3], &fine_values, &x).unwrap();
            assert!((vc - vf).abs() <= 1e-12 * vc.abs());
        }
    }

    #[test]
    fn sine_assembly_matches_dense_quadrature() {
        let domain = Domain::interval(1.0).unwrap();
        let basis = SineFamily::new(0.5, 2.0, domain).unwrap();
        let field = CoefficientField::new(MeanField::Constant(1.0), Arc::new(basis)).unwrap();
        let mesh = FeMesh::<f64>::interval(1.0, 0.5, 1).unwrap();
        let y = [0.41, -0.33, 0.12];
        let (a, _) = assemble_stiffness(&mesh, &field, &y, false).unwrap();
        // oracle: 200-point Gauss per element
        let (gx, gw) = crate::quadrature::gauss_legendre(200);
        let h = mesh.h();
        let mut elem = Vec::new();
        for e in 0..mesh.num_cells() {
            let x0 = e as f64 * h;
            let v: f64 = gx
                .iter()
                .zip(&gw)
                .map(|(t, w)| 0.5 * h * w * field.evaluate_unchecked(&[x0 + 0.5 * h * (t + 1.0)], &y))
                .sum();
            elem.push(v / (h * h));
        }
        for i in 0..3 {
            assert!((a.get(i, i) - (elem[i] + elem[i + 1])).abs() < 1e-13);
            if i > 0 {
                assert!((a.get(i, i - 1) + elem[i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn fast_path_counts_and_matches_generic() {
        let basis = haar_basis(2, HaarScaling::geometric(0.3, 1.0), 8).unwrap();
        let field = CoefficientField::new(MeanField::Constant(1.0), Arc::new(basis.clone())).unwrap();
        let mesh = FeMesh::<f64>::interval(2.0, 1.0, 4).unwrap();
        let s = basis.s_ell_orthogonal(4, 1).unwrap();
        let y: Vec<f64> = (0..basis.total_len()).map(|j| ((j * 7919) % 101) as f64 / 101.0 - 0.5).collect();
        let (fast, stats) = assemble_stiffness(&mesh, &field, &y, true).unwrap();
        assert_eq!(stats.term_evaluations, mesh.num_cells() * 5);
        let (generic, _) = assemble_stiffness(&mesh, &field, &y[..s], false).unwrap();
        let (full, _) = assemble_stiffness(&mesh, &field, &y, false).unwrap();
        assert!(fast.max_relative_difference(&generic) <= 1e-13);
        assert!(fast.max_relative_difference(&full) <= 1e-13);
    }

    #[test]
    fn fast_path_rejects_non_wavelet_fields() {
        let mesh = FeMesh::<f64>::interval(1.0, 0.5, 2).unwrap();
        let field = constant_field(1.0, mesh.domain());
        assert!(matches!(
            assemble_stiffness(&mesh, &field, &[0.0; 4], true),
            Err(Error::ModeMismatch(_))
        ));
    }

    #[test]
    fn locate_finds_the_containing_triangle() {
        let mesh = FeMesh::<f64>::unit_square(1).unwrap();
        for &(x, y) in &[(0.1, 0.05), (0.05, 0.1), (0.99, 0.99), (0.6, 0.3)] {
            let (e, bary) = mesh.locate(&[x, y]).unwrap();
            let p = mesh.cell(e).map(&bary);
            assert!((p[0] - x).abs() < 1e-14 && (p[1] - y).abs() < 1e-14);
            assert!(bary.iter().all(|&b| b >= -1e-14));
        }
    }
}
