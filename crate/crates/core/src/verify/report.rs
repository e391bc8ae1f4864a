use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    ToeplitzSvd,
    FftCircular,
    GramBound,
    PowerIter,
    Jacobian,
}

impl std::str::FromStr for SpectrumMethod {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "toeplitz" | "toeplitz_svd" => Ok(Self::ToeplitzSvd),
            "fft" | "fft_circular" => Ok(Self::FftCircular),
            "gram" | "gram_bound" => Ok(Self::GramBound),
            "power" | "power_iter" => Ok(Self::PowerIter),
            "jacobian" => Ok(Self::Jacobian),
            other => Err(crate::Error::InvalidParam(format!(
                "unknown spectrum method {other:?}"
            ))),
        }
    }
}

/// What the checked map is supposed to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Requirement {
    /// All singular values within `1 ± tol`.
    Orthogonal,
    /// Largest singular value at most `1 + tol`.
    #[default]
    OneLipschitz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Orthogonal,
    OneLipschitz,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub method: SpectrumMethod,
    pub sigma_max: f64,
    /// For methods that only bound or estimate the top of the spectrum this
    /// is `0`, which is always a valid lower bound.
    pub sigma_min: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub all_values: Option<Vec<f64>>,
    pub tolerance: f64,
    pub requirement: Requirement,
    pub verdict: Verdict,
    pub input_shape: Vec<usize>,
    pub elapsed: f64,
    /// Input at which a Jacobian check failed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Vec<f64>>,
}

impl SpectrumReport {
    pub fn new(
        method: SpectrumMethod,
        sigma_max: f64,
        sigma_min: f64,
        tolerance: f64,
        requirement: Requirement,
    ) -> Self {
        let mut r = Self {
            method,
            sigma_max,
            sigma_min,
            all_values: None,
            tolerance,
            requirement,
            verdict: Verdict::Violation,
            input_shape: Vec::new(),
            elapsed: 0.0,
            witness: None,
        };
        r.verdict = r.judge();
        r
    }

    /// Build from a full list of singular values (any order).
    pub fn from_values(
        method: SpectrumMethod,
        mut values: Vec<f64>,
        tolerance: f64,
        requirement: Requirement,
    ) -> Self {
        values.sort_by(|a, b| a.total_cmp(b));
        let lo = values.first().copied().unwrap_or(0.0);
        let hi = values.last().copied().unwrap_or(0.0);
        let mut r = Self::new(method, hi, lo, tolerance, requirement);
        r.all_values = Some(values);
        r
    }

    pub fn with_shape(mut self, shape: &[usize]) -> Self {
        self.input_shape = shape.to_vec();
        self
    }

    pub fn with_elapsed(mut self, secs: f64) -> Self {
        self.elapsed = secs;
        self
    }

    pub fn with_requirement(mut self, requirement: Requirement, tolerance: f64) -> Self {
        self.requirement = requirement;
        self.tolerance = tolerance;
        self.verdict = self.judge();
        self
    }

    fn judge(&self) -> Verdict {
        if !self.sigma_max.is_finite() || self.sigma_max > 1.0 + self.tolerance {
            Verdict::Violation
        } else if self.sigma_min >= 1.0 - self.tolerance {
            Verdict::Orthogonal
        } else if self.requirement == Requirement::Orthogonal {
            Verdict::Violation
        } else {
            Verdict::OneLipschitz
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Violation
    }
}
