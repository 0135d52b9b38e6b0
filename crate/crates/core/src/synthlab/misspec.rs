//! Controlled perturbations of oracle mean and spread estimates.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scores::RegressionOutputs;
use crate::special::normal_quantile;

/// Smallest spread a perturbed estimate may take.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Misspec {
    /// `σ̂ = σ + ε`, `ε ∼ N(0, λ²)`.
    SigmaShift(f64),
    /// `σ̂ = λσ`.
    SigmaScale(f64),
    /// `μ̂ = μ + ε`, `ε ∼ N(0, λ²)`.
    MuShiftConst(f64),
    /// `μ̂ = μ + ε`, `ε ∼ N(0, λ²σ̂²)`.
    MuShiftProp(f64),
    /// `σ̂² = 5(σ² − 0.5)² + 0.5` with the mean untouched.
    QuadraticVariance,
}

impl Misspec {
    pub fn parse(mode: &str, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::invalid(format!("misspecification parameter {lambda} is not finite")));
        }
        Ok(match mode {
            "sigma-shift" => Misspec::SigmaShift(lambda),
            "sigma-scale" => Misspec::SigmaScale(lambda),
            "mu-shift-const" => Misspec::MuShiftConst(lambda),
            "mu-shift-prop" => Misspec::MuShiftProp(lambda),
            "quadratic-variance" => Misspec::QuadraticVariance,
            other => return Err(Error::invalid(format!("unknown misspecification mode `{other}`"))),
        })
    }

    pub fn label(&self) -> String {
        match self {
            Misspec::SigmaShift(l) => format!("sigma-shift({l})"),
            Misspec::SigmaScale(l) => format!("sigma-scale({l})"),
            Misspec::MuShiftConst(l) => format!("mu-shift-const({l})"),
            Misspec::MuShiftProp(l) => format!("mu-shift-prop({l})"),
            Misspec::QuadraticVariance => "quadratic-variance".into(),
        }
    }
}

/// Perturbs `(μ, σ)`; the spread is clipped at [`SIGMA_FLOOR`].
pub fn misspecify(out: &RegressionOutputs, spec: Misspec, rng: &mut SeededRng) -> Result<RegressionOutputs> {
    let sigma = out.require_spread()?;
    let (mu, sigma_hat) = match spec {
        Misspec::SigmaShift(l) => (out.point, sigma + l * rng.normal()),
        Misspec::SigmaScale(l) => (out.point, l * sigma),
        Misspec::MuShiftConst(l) => (out.point + l * rng.normal(), sigma),
        Misspec::MuShiftProp(l) => (out.point + l * sigma * rng.normal(), sigma),
        Misspec::QuadraticVariance => {
            let v = sigma * sigma - 0.5;
            (out.point, (5.0 * v * v + 0.5).sqrt())
        }
    };
    Ok(RegressionOutputs::with_spread(mu, sigma_hat.max(SIGMA_FLOOR)))
}

/// Adds the normal-theory interval `μ ± z_{1−α/2}·σ` to outputs that carry
/// a spread.
pub fn gaussian_interval(out: &RegressionOutputs, alpha: f64) -> Result<RegressionOutputs> {
    let sigma = out.require_spread()?;
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    Ok(RegressionOutputs {
        lower: Some(out.point - z * sigma),
        upper: Some(out.point + z * sigma),
        ..*out
    })
}
