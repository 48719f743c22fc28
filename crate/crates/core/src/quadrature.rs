//! Gauss rules on the reference interval and triangle.

use crate::real::Real;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed in `f64` by Newton
/// iteration on the three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature rule on a reference simplex, in barycentric coordinates.
///
/// For intervals the barycentric pair is `(1 - t, t)`; for triangles the triple
/// sums to one. Weights sum to one (the reference measure is normalised), so an
/// integral over a cell is `|K| * sum(w_q f(x_q))`.
#[derive(Debug, Clone)]
pub struct SimplexRule<T> {
    pub degree: usize,
    pub points: Vec<[T; 3]>,
    pub weights: Vec<T>,
}

impl<T: Real> SimplexRule<T> {
    /// Gauss rule on the unit interval exact for polynomials of `degree`.
    pub fn interval(degree: usize) -> Self {
        let n = degree / 2 + 1;
        let (x, w) = gauss_legendre(n);
        let points = x
            .iter()
            .map(|&xi| {
                let t = 0.5 * (xi + 1.0);
                [T::lit(1.0 - t), T::lit(t), T::zero()]
            })
            .collect();
        let weights = w.iter().map(|&wi| T::lit(0.5 * wi)).collect();
        Self {
            degree,
            points,
            weights,
        }
    }

    /// Collapsed (Duffy) tensor Gauss rule on the triangle, exact for total
    /// degree `degree`.
    pub fn triangle(degree: usize) -> Self {
        // the collapse adds one power of the radial variable
        let n = (degree + 1) / 2 + 1;
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (a, wa) in x.iter().zip(&w) {
            let u = 0.5 * (a + 1.0);
            for (b, wb) in x.iter().zip(&w) {
                let v = 0.5 * (b + 1.0);
                // (u, v) in the unit square -> (l1, l2) = (u, v (1 - u))
                let l1 = u;
                let l2 = v * (1.0 - u);
                let l0 = 1.0 - l1 - l2;
                // reference triangle area 1/2 normalised to 1
                let weight = 2.0 * 0.25 * wa * wb * (1.0 - u);
                points.push([T::lit(l0), T::lit(l1), T::lit(l2)]);
                weights.push(T::lit(weight));
            }
        }
        Self {
            degree,
            points,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}
