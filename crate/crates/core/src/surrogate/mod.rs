//! Hinge-basis (MARS) meta-model of hydraulic efficiency over
//! `(GVO deg, RBA deg, n_ED)`.
//!
//! A fitted [`EfficiencySurrogate`] carries two coefficient sets over the
//! same basis: one for the piecewise-linear hinges and one refit on the
//! C1 cubic-blended hinges. [`Smoothing`] selects which one `eval` uses.

mod linalg;
mod mars;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mars::{fit, FitConfig};

pub const VARIABLES: [&str; 3] = ["alpha_deg", "beta_deg", "n_ed"];
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    PiecewiseLinear,
    CubicC1,
}

/// One truncated linear factor `max(0, ±(x_var − knot))`.
///
/// `lower`/`upper` are the side knots of the cubic blend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hinge {
    pub var: usize,
    pub knot: f64,
    /// +1 for `max(0, x − t)`, −1 for `max(0, t − x)`.
    pub sign: i8,
    pub lower: f64,
    pub upper: f64,
}

impl Hinge {
    #[inline]
    fn linear(&self, x: f64) -> (f64, f64) {
        let d = x - self.knot;
        if self.sign > 0 {
            if d >= 0.0 {
                (d, 1.0)
            } else {
                (0.0, 0.0)
            }
        } else if d < 0.0 {
            (-d, -1.0)
        } else {
            (0.0, 0.0)
        }
    }

    #[inline]
    fn cubic(&self, x: f64) -> (f64, f64) {
        let (t, lo, hi) = (self.knot, self.lower, self.upper);
        if !(hi > lo) {
            return self.linear(x);
        }
        if self.sign > 0 {
            if x <= lo {
                (0.0, 0.0)
            } else if x >= hi {
                (x - t, 1.0)
            } else {
                let w = hi - lo;
                let p = (2.0 * hi + lo - 3.0 * t) / (w * w);
                let r = (2.0 * t - hi - lo) / (w * w * w);
                let s = x - lo;
                (p * s * s + r * s * s * s, 2.0 * p * s + 3.0 * r * s * s)
            }
        } else if x <= lo {
            (t - x, -1.0)
        } else if x >= hi {
            (0.0, 0.0)
        } else {
            let w = lo - hi;
            let p = (3.0 * t - 2.0 * lo - hi) / (w * w);
            let r = (lo + hi - 2.0 * t) / (w * w * w);
            let s = x - hi;
            (p * s * s + r * s * s * s, 2.0 * p * s + 3.0 * r * s * s)
        }
    }

    #[inline]
    fn value(&self, x: f64, smoothing: Smoothing) -> (f64, f64) {
        match smoothing {
            Smoothing::PiecewiseLinear => self.linear(x),
            Smoothing::CubicC1 => self.cubic(x),
        }
    }
}

/// Product of hinges; the empty product is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisTerm {
    pub hinges: Vec<Hinge>,
}

impl BasisTerm {
    pub fn intercept() -> Self {
        Self { hinges: Vec::new() }
    }

    pub fn degree(&self) -> usize {
        self.hinges.len()
    }

    pub fn uses(&self, var: usize) -> bool {
        self.hinges.iter().any(|h| h.var == var)
    }

    fn value(&self, x: &[f64; 3], smoothing: Smoothing) -> f64 {
        self.hinges.iter().map(|h| h.value(x[h.var], smoothing).0).product()
    }

    fn accumulate_gradient(&self, x: &[f64; 3], coef: f64, smoothing: Smoothing, grad: &mut [f64; 3]) {
        let parts: Vec<(f64, f64)> = self.hinges.iter().map(|h| h.value(x[h.var], smoothing)).collect();
        for (i, h) in self.hinges.iter().enumerate() {
            let mut d = parts[i].1;
            for (j, p) in parts.iter().enumerate() {
                if j != i {
                    d *= p.0;
                }
            }
            grad[h.var] += coef * d;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HingeBasis {
    pub terms: Vec<BasisTerm>,
}

/// Held-out and training diagnostics of a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitStats {
    /// Held-out mean squared error in the model's evaluation mode.
    pub mse: f64,
    /// Held-out coefficient of determination in the model's evaluation mode.
    pub r2: f64,
    pub linear: HoldoutScore,
    pub cubic: HoldoutScore,
    pub train_mse: f64,
    pub gcv: f64,
    /// GCV of the model at the end of the forward pass.
    pub forward_gcv: f64,
    pub forward_terms: usize,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoldoutScore {
    pub mse: f64,
    pub r2: f64,
}

impl FitStats {
    fn select(&mut self, smoothing: Smoothing) {
        let s = match smoothing {
            Smoothing::PiecewiseLinear => self.linear,
            Smoothing::CubicC1 => self.cubic,
        };
        self.mse = s.mse;
        self.r2 = s.r2;
    }
}

/// Value of a surrogate query, with a flag set when any input was clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub eta: f64,
    pub clamped: bool,
}

/// Fitted efficiency meta-model. Immutable and `Sync`.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencySurrogate {
    basis: HingeBasis,
    coefficients: Vec<f64>,
    cubic_coefficients: Vec<f64>,
    input_ranges: [[f64; 2]; 3],
    fit_stats: FitStats,
    smoothing: Smoothing,
}

impl EfficiencySurrogate {
    pub(crate) fn from_parts(
        basis: HingeBasis,
        coefficients: Vec<f64>,
        cubic_coefficients: Vec<f64>,
        input_ranges: [[f64; 2]; 3],
        fit_stats: FitStats,
        smoothing: Smoothing,
    ) -> Result<Self> {
        let m = basis.terms.len();
        if coefficients.len() != m || cubic_coefficients.len() != m {
            return Err(Error::Fit(format!(
                "basis has {m} terms but {} / {} coefficients",
                coefficients.len(),
                cubic_coefficients.len()
            )));
        }
        for r in &input_ranges {
            if !(r[0] <= r[1]) {
                return Err(Error::Fit("input range with min > max".into()));
            }
        }
        Ok(Self {
            basis,
            coefficients,
            cubic_coefficients,
            input_ranges,
            fit_stats,
            smoothing,
        })
    }

    pub fn basis(&self) -> &HingeBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        match self.smoothing {
            Smoothing::PiecewiseLinear => &self.coefficients,
            Smoothing::CubicC1 => &self.cubic_coefficients,
        }
    }

    pub fn input_ranges(&self) -> [[f64; 2]; 3] {
        self.input_ranges
    }

    pub fn fit_stats(&self) -> FitStats {
        self.fit_stats
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    /// Same basis and coefficient sets with a different evaluation mode.
    pub fn with_smoothing(&self, smoothing: Smoothing) -> Self {
        let mut fit_stats = self.fit_stats;
        fit_stats.select(smoothing);
        Self {
            smoothing,
            fit_stats,
            ..self.clone()
        }
    }

    /// Copy with every coefficient except the intercept replaced by zero.
    pub fn intercept_only(&self) -> Self {
        let zero_tail = |c: &[f64]| {
            c.iter()
                .enumerate()
                .map(|(i, &v)| if self.basis.terms[i].degree() == 0 { v } else { 0.0 })
                .collect()
        };
        Self {
            coefficients: zero_tail(&self.coefficients),
            cubic_coefficients: zero_tail(&self.cubic_coefficients),
            ..self.clone()
        }
    }

    fn clamp(&self, x: [f64; 3]) -> ([f64; 3], [bool; 3]) {
        let mut out = x;
        let mut flags = [false; 3];
        for i in 0..3 {
            let [lo, hi] = self.input_ranges[i];
            if x[i] < lo {
                out[i] = lo;
                flags[i] = true;
            } else if x[i] > hi {
                out[i] = hi;
                flags[i] = true;
            }
        }
        (out, flags)
    }

    /// Efficiency with out-of-range inputs clamped to the training ranges.
    pub fn predict(&self, alpha: f64, beta: f64, n_ed: f64) -> Prediction {
        let (x, flags) = self.clamp([alpha, beta, n_ed]);
        let eta = self
            .basis
            .terms
            .iter()
            .zip(self.coefficients())
            .map(|(t, c)| c * t.value(&x, self.smoothing))
            .sum();
        Prediction {
            eta,
            clamped: flags.iter().any(|&f| f),
        }
    }

    pub fn eval(&self, alpha: f64, beta: f64, n_ed: f64) -> f64 {
        self.predict(alpha, beta, n_ed).eta
    }

    /// Analytic gradient `(∂η/∂α, ∂η/∂β, ∂η/∂n_ED)`.
    ///
    /// Exactly on a piecewise-linear knot the right-sided derivative is
    /// returned. Components along clamped inputs are zero.
    pub fn eval_gradient(&self, alpha: f64, beta: f64, n_ed: f64) -> [f64; 3] {
        let (x, flags) = self.clamp([alpha, beta, n_ed]);
        let mut g = [0.0; 3];
        for (t, &c) in self.basis.terms.iter().zip(self.coefficients()) {
            t.accumulate_gradient(&x, c, self.smoothing, &mut g);
        }
        for i in 0..3 {
            if flags[i] {
                g[i] = 0.0;
            }
        }
        g
    }

    /// Distance from `x` to the nearest knot or side knot along `var`.
    pub fn knot_distance(&self, var: usize, x: f64) -> f64 {
        self.basis
            .terms
            .iter()
            .flat_map(|t| t.hinges.iter())
            .filter(|h| h.var == var)
            .flat_map(|h| [h.knot, h.lower, h.upper])
            .map(|k| (x - k).abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_document(&self) -> SurrogateDocument {
        SurrogateDocument {
            schema_version: SCHEMA_VERSION,
            kind: DOCUMENT_KIND.to_string(),
            variables: VARIABLES.iter().map(|s| s.to_string()).collect(),
            smoothing: self.smoothing,
            input_ranges: self.input_ranges,
            terms: self
                .basis
                .terms
                .iter()
                .enumerate()
                .map(|(i, t)| TermDocument {
                    coefficient: self.coefficients[i],
                    cubic_coefficient: self.cubic_coefficients[i],
                    hinges: t.hinges.clone(),
                })
                .collect(),
            fit_stats: self.fit_stats,
        }
    }

    pub fn from_document(doc: SurrogateDocument) -> Result<Self> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported surrogate schema_version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        if doc.kind != DOCUMENT_KIND {
            return Err(Error::Config(format!("unexpected document kind `{}`", doc.kind)));
        }
        if doc.variables != VARIABLES {
            return Err(Error::Config("unexpected surrogate variables".into()));
        }
        for t in &doc.terms {
            for h in &t.hinges {
                if h.var > 2 || (h.sign != 1 && h.sign != -1) {
                    return Err(Error::Config("malformed hinge in surrogate document".into()));
                }
            }
        }
        let basis = HingeBasis {
            terms: doc
                .terms
                .iter()
                .map(|t| BasisTerm {
                    hinges: t.hinges.clone(),
                })
                .collect(),
        };
        Self::from_parts(
            basis,
            doc.terms.iter().map(|t| t.coefficient).collect(),
            doc.terms.iter().map(|t| t.cubic_coefficient).collect(),
            doc.input_ranges,
            doc.fit_stats,
            doc.smoothing,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

const DOCUMENT_KIND: &str = "mars-efficiency-surrogate";

/// Versioned on-disk form of a surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateDocument {
    pub schema_version: u32,
    pub kind: String,
    pub variables: Vec<String>,
    pub smoothing: Smoothing,
    pub input_ranges: [[f64; 2]; 3],
    pub terms: Vec<TermDocument>,
    pub fit_stats: FitStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDocument {
    pub coefficient: f64,
    pub cubic_coefficient: f64,
    pub hinges: Vec<Hinge>,
}
