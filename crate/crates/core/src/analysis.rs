//! Least-squares rate fits for convergence tables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::fem::LevelSystem;
use crate::mlqmc::shifted_rule_average;
use crate::qmc::{random_shifts, LatticeRule};

/// Axis transform applied before the straight-line fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitScale {
    /// `log₂ y` against `log₂ x`.
    LogLog,
    /// `log₂ y` against `x`.
    SemiLog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceFit {
    pub scale: FitScale,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square deviation of the transformed data from the line.
    pub residual: f64,
    pub points: usize,
}

/// Fit `log₂ y = intercept + slope · X` with `X = log₂ x` or `X = x`.
pub fn convergence_table(x: &[f64], y: &[f64], scale: FitScale) -> Result<ConvergenceFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::InvalidData(format!("need at least 3 points, got {}", x.len())));
    }
    if y.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidData("errors must be positive and finite".into()));
    }
    if scale == FitScale::LogLog && x.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidData("abscissae must be positive on a log-log fit".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("abscissae must be finite".into()));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidData("duplicate abscissae".into()));
    }
    let xs: Vec<f64> = match scale {
        FitScale::LogLog => x.iter().map(|v| v.log2()).collect(),
        FitScale::SemiLog => x.to_vec(),
    };
    let ys: Vec<f64> = y.iter().map(|v| v.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    Ok(ConvergenceFit {
        scale,
        slope,
        intercept,
        residual: (ss / n).sqrt(),
        points: xs.len(),
    })
}

/// Truncation differences against a reference truncation `s_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationStudy {
    pub s: Vec<usize>,
    /// Mean of `|G(u^s(y)) − G(u^{s_ref}(y))|` over uniform samples `y`.
    pub pointwise: Vec<f64>,
    /// `|Q(G(u^s)) − Q(G(u^{s_ref}))|` averaged over shifts of one lattice rule.
    pub integral: Vec<f64>,
}

/// Pointwise and integral truncation differences on one mesh. The rule has
/// dimension `s_ref`; each truncation uses its leading coordinates.
pub fn truncation_study(
    reference: &LevelSystem<f64>,
    systems: &[LevelSystem<f64>],
    samples: usize,
    rule: &LatticeRule,
    shifts: usize,
    seed: u64,
) -> Result<TruncationStudy> {
    let s_ref = reference.truncation();
    if rule.s() != s_ref {
        return Err(Error::DimensionMismatch {
            expected: s_ref,
            found: rule.s(),
        });
    }
    if systems.iter().any(|sys| sys.truncation() > s_ref) {
        return Err(invalid("s", format!("truncations must not exceed s_ref = {s_ref}")));
    }
    if samples == 0 || shifts == 0 {
        return Err(invalid("samples", "need at least one sample and one shift"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pointwise = vec![0.0; systems.len()];
    for _ in 0..samples {
        let y: Vec<f64> = (0..s_ref).map(|_| rng.gen::<f64>() - 0.5).collect();
        let g_ref = reference.g_value(&y)?;
        for (acc, sys) in pointwise.iter_mut().zip(systems) {
            *acc += (sys.g_value(&y)? - g_ref).abs() / samples as f64;
        }
    }
    let shift_list: Vec<Vec<f64>> = random_shifts(&mut rng, shifts, s_ref);
    let mut integral = vec![0.0; systems.len()];
    for shift in &shift_list {
        let q_ref = shifted_rule_average(rule, shift, |y| reference.g_value(y))?;
        for (acc, sys) in integral.iter_mut().zip(systems) {
            let s = sys.truncation();
            let q = shifted_rule_average(&rule.truncated(s), &shift[..s], |y| sys.g_value(y))?;
            *acc += (q - q_ref) / shifts as f64;
        }
    }
    Ok(TruncationStudy {
        s: systems.iter().map(|sys| sys.truncation()).collect(),
        pointwise,
        integral: integral.into_iter().map(f64::abs).collect(),
    })
}
