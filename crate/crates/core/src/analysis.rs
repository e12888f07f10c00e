//! Shannon entropy, conditional entropy and mutual information over finite
//! joint distributions, error-rate aggregation and the efficiency ratio
//! `secret bits / (qubits + classical bits)`. All logarithms are base 2 and
//! terms with zero probability contribute nothing.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{CheckId, CheckReport};

/// Allowed deviation of a distribution's total mass from one.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("probability {0} is negative or not finite")]
    BadProbability(f64),
    #[error("probabilities sum to {0}, not 1")]
    BadMass(f64),
    #[error("table of {rows}x{cols} does not match {len} entries")]
    Shape {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("no observations")]
    Empty,
    #[error("efficiency inputs must be non-negative with q_t + b_t > 0")]
    Efficiency,
}

fn validate(p: &[f64]) -> Result<(), AnalysisError> {
    if p.is_empty() {
        return Err(AnalysisError::Empty);
    }
    for &x in p {
        if !(x.is_finite() && x >= 0.0) {
            return Err(AnalysisError::BadProbability(x));
        }
    }
    let mass: f64 = p.iter().sum();
    if (mass - 1.0).abs() > MASS_TOLERANCE {
        return Err(AnalysisError::BadMass(mass));
    }
    Ok(())
}

fn entropy_unchecked(p: impl IntoIterator<Item = f64>) -> f64 {
    p.into_iter()
        .filter(|&x| x > 0.0)
        .map(|x| -x * libm::log2(x))
        .sum()
}

/// `H(X) = −Σ p log₂ p` in bits.
pub fn shannon_entropy(p: &[f64]) -> Result<f64, AnalysisError> {
    validate(p)?;
    Ok(entropy_unchecked(p.iter().copied()))
}

/// Joint distribution of X (rows) and Y (columns), stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    rows: usize,
    cols: usize,
    p: Vec<f64>,
}

impl JointDistribution {
    pub fn new(rows: usize, cols: usize, p: Vec<f64>) -> Result<Self, AnalysisError> {
        if rows * cols != p.len() {
            return Err(AnalysisError::Shape {
                rows,
                cols,
                len: p.len(),
            });
        }
        validate(&p)?;
        Ok(JointDistribution { rows, cols, p })
    }

    /// Plug-in estimate from raw counts.
    pub fn from_counts(rows: usize, cols: usize, counts: &[u64]) -> Result<Self, AnalysisError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(AnalysisError::Empty);
        }
        let p = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Self::new(rows, cols, p)
    }

    pub fn from_count_table<const R: usize, const C: usize>(
        table: &[[u64; C]; R],
    ) -> Result<Self, AnalysisError> {
        let flat: Vec<u64> = table.iter().flatten().copied().collect();
        Self::from_counts(R, C, &flat)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.p[x * self.cols + y]
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|x| (0..self.cols).map(|y| self.get(x, y)).sum())
            .collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|y| (0..self.rows).map(|x| self.get(x, y)).sum())
            .collect()
    }

    /// The same distribution with X and Y swapped.
    pub fn transpose(&self) -> JointDistribution {
        let mut p = Vec::with_capacity(self.p.len());
        for y in 0..self.cols {
            for x in 0..self.rows {
                p.push(self.get(x, y));
            }
        }
        JointDistribution {
            rows: self.cols,
            cols: self.rows,
            p,
        }
    }

    pub fn entropy_x(&self) -> f64 {
        entropy_unchecked(self.marginal_x())
    }

    pub fn entropy_y(&self) -> f64 {
        entropy_unchecked(self.marginal_y())
    }
}

/// `H(X|Y) = Σ_y p(y) H(X | Y = y)`.
pub fn conditional_entropy(joint: &JointDistribution) -> f64 {
    joint
        .marginal_y()
        .into_iter()
        .enumerate()
        .filter(|&(_, py)| py > 0.0)
        .map(|(y, py)| py * entropy_unchecked((0..joint.rows).map(|x| joint.get(x, y) / py)))
        .sum()
}

/// `I(X:Y) = H(X) − H(X|Y)`, clamped at zero against rounding.
pub fn mutual_information(joint: &JointDistribution) -> f64 {
    (joint.entropy_x() - conditional_entropy(joint)).max(0.0)
}

/// Closed-form BB84 values the two-step scheme is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bb84Reference {
    /// Sender/receiver information under intercept-resend.
    pub i_ab_attacked: f64,
    /// Sender/eavesdropper information (equal to eavesdropper/receiver).
    pub i_ae: f64,
    /// Sender/receiver information without an eavesdropper.
    pub i_ab_clean: f64,
}

pub fn reference_bb84() -> Bb84Reference {
    let log2_3 = libm::log2(3.0);
    let log2_5 = libm::log2(5.0);
    Bb84Reference {
        i_ab_attacked: 5.0 / 8.0 * log2_5 + 3.0 / 8.0 * log2_3 - 2.0,
        i_ae: 0.75 * log2_3 - 1.0,
        i_ab_clean: 0.75 * log2_3 - 1.0,
    }
}

/// Per-unit accounting for the efficiency ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyInputs {
    /// Secret bits received.
    pub secret_bits: f64,
    /// Qubits used.
    pub qubits: f64,
    /// Classical bits exchanged, not counting eavesdropping checks.
    pub classical_bits: f64,
}

impl EfficiencyInputs {
    pub fn new(secret_bits: f64, qubits: f64, classical_bits: f64) -> Result<Self, AnalysisError> {
        let ok = [secret_bits, qubits, classical_bits]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && qubits + classical_bits > 0.0;
        if !ok {
            return Err(AnalysisError::Efficiency);
        }
        Ok(EfficiencyInputs {
            secret_bits,
            qubits,
            classical_bits,
        })
    }

    /// Half a secret bit per qubit plus one bit of basis announcement.
    pub const BB84: EfficiencyInputs = EfficiencyInputs {
        secret_bits: 0.5,
        qubits: 1.0,
        classical_bits: 1.0,
    };

    /// One bit per pair of qubits.
    pub const EPR: EfficiencyInputs = EfficiencyInputs {
        secret_bits: 1.0,
        qubits: 2.0,
        classical_bits: 0.0,
    };

    /// Two bits per pair of qubits, no non-check classical traffic.
    pub const TWO_STEP: EfficiencyInputs = EfficiencyInputs {
        secret_bits: 2.0,
        qubits: 2.0,
        classical_bits: 0.0,
    };

    /// Accounting for `key_pairs` pairs that ended up as key.
    pub fn for_key_pairs(key_pairs: usize) -> Result<Self, AnalysisError> {
        let n = key_pairs as f64;
        Self::new(2.0 * n, 2.0 * n, 0.0)
    }
}

pub fn efficiency(inputs: &EfficiencyInputs) -> Result<f64, AnalysisError> {
    let denominator = inputs.qubits + inputs.classical_bits;
    if denominator.is_nan() || denominator <= 0.0 {
        return Err(AnalysisError::Efficiency);
    }
    Ok(inputs.secret_bits / denominator)
}

/// Mismatch count over a sample, with a binomial standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCount {
    pub mismatches: u64,
    pub samples: u64,
}

impl ErrorCount {
    pub fn rate(&self) -> Result<f64, AnalysisError> {
        if self.samples == 0 {
            return Err(AnalysisError::Empty);
        }
        Ok(self.mismatches as f64 / self.samples as f64)
    }

    pub fn standard_error(&self) -> Result<f64, AnalysisError> {
        let r = self.rate()?;
        Ok(libm::sqrt(r * (1.0 - r) / self.samples as f64))
    }

    pub fn add(&mut self, other: ErrorCount) {
        self.mismatches += other.mismatches;
        self.samples += other.samples;
    }
}

impl From<&CheckReport> for ErrorCount {
    fn from(r: &CheckReport) -> Self {
        ErrorCount {
            mismatches: r.mismatches as u64,
            samples: r.sample_size() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub standard_error: f64,
    pub samples: u64,
}

impl TryFrom<ErrorCount> for RateEstimate {
    type Error = AnalysisError;

    fn try_from(c: ErrorCount) -> Result<Self, AnalysisError> {
        Ok(RateEstimate {
            rate: c.rate()?,
            standard_error: c.standard_error()?,
            samples: c.samples,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QberSummary {
    pub first: Option<RateEstimate>,
    pub second: Option<RateEstimate>,
    pub overall: RateEstimate,
}

/// Pools check reports into per-check and overall error rates.
pub fn qber<'a>(
    reports: impl IntoIterator<Item = &'a CheckReport>,
) -> Result<QberSummary, AnalysisError> {
    let mut first = ErrorCount::default();
    let mut second = ErrorCount::default();
    for r in reports {
        match r.check {
            CheckId::First => first.add(r.into()),
            CheckId::Second => second.add(r.into()),
        }
    }
    let mut overall = first;
    overall.add(second);
    Ok(QberSummary {
        first: RateEstimate::try_from(first).ok(),
        second: RateEstimate::try_from(second).ok(),
        overall: overall.try_into()?,
    })
}
