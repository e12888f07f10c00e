//! Exact two-qubit pure states, the four Bell states and the two kinds of
//! measurement the protocol needs.
//!
//! Amplitudes are stored in the basis order `|00⟩, |01⟩, |10⟩, |11⟩`, where
//! the left bit is the first qubit (the half the sender keeps until the
//! second transmission) and the right bit is the second qubit (the half sent
//! first). States are plain values; every measurement returns a new state.

use core::f64::consts::FRAC_1_SQRT_2;
use core::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RandomSource;

/// Maximum deviation of `Σ|aᵢ|²` from one accepted for a valid state.
pub const NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum QuantumError {
    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("projection onto a zero-probability outcome")]
    DegenerateProjection,
}

/// A classical measurement outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub const fn value(self) -> u8 {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }

    pub const fn from_value(v: u8) -> Option<Bit> {
        match v {
            0 => Some(Bit::Zero),
            1 => Some(Bit::One),
            _ => None,
        }
    }
}

impl From<bool> for Bit {
    fn from(b: bool) -> Self {
        if b {
            Bit::One
        } else {
            Bit::Zero
        }
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Which particle of a pair an operation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Qubit {
    First,
    Second,
}

/// Whether the two halves of a Bell state give equal or opposite Z outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Equal,
    Opposite,
}

impl Parity {
    pub fn of(a: Bit, b: Bit) -> Parity {
        if a == b {
            Parity::Equal
        } else {
            Parity::Opposite
        }
    }
}

/// One of the four Bell states, carrying a 2-bit key code.
///
/// | label | state                | code |
/// |-------|----------------------|------|
/// | Psi1  | (|00⟩ + |11⟩)/√2     | 00   |
/// | Psi2  | (|00⟩ − |11⟩)/√2     | 01   |
/// | Psi3  | (|10⟩ + |01⟩)/√2     | 10   |
/// | Psi4  | (|10⟩ − |01⟩)/√2     | 11   |
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellLabel {
    Psi1,
    Psi2,
    Psi3,
    Psi4,
}

impl BellLabel {
    pub const ALL: [BellLabel; 4] = [
        BellLabel::Psi1,
        BellLabel::Psi2,
        BellLabel::Psi3,
        BellLabel::Psi4,
    ];

    /// The 2-bit key code, `0b00..=0b11`.
    pub const fn code(self) -> u8 {
        self as u8
    }

    pub const fn from_code(code: u8) -> Option<BellLabel> {
        match code {
            0 => Some(BellLabel::Psi1),
            1 => Some(BellLabel::Psi2),
            2 => Some(BellLabel::Psi3),
            3 => Some(BellLabel::Psi4),
            _ => None,
        }
    }

    /// Code as (high bit, low bit).
    pub const fn bits(self) -> (Bit, Bit) {
        let c = self.code();
        let hi = if c & 2 == 0 { Bit::Zero } else { Bit::One };
        let lo = if c & 1 == 0 { Bit::Zero } else { Bit::One };
        (hi, lo)
    }

    pub const fn from_bits(hi: Bit, lo: Bit) -> BellLabel {
        match (hi, lo) {
            (Bit::Zero, Bit::Zero) => BellLabel::Psi1,
            (Bit::Zero, Bit::One) => BellLabel::Psi2,
            (Bit::One, Bit::Zero) => BellLabel::Psi3,
            (Bit::One, Bit::One) => BellLabel::Psi4,
        }
    }

    pub const fn parity(self) -> Parity {
        match self {
            BellLabel::Psi1 | BellLabel::Psi2 => Parity::Equal,
            BellLabel::Psi3 | BellLabel::Psi4 => Parity::Opposite,
        }
    }

    pub const fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for BellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (hi, lo) = self.bits();
        write!(f, "{hi}{lo}")
    }
}

/// Normalized pure state of two qubits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitState {
    amplitudes: [Complex64; 4],
}

const fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

impl TwoQubitState {
    /// Builds a state, rejecting amplitudes whose squared norm differs from
    /// one by more than [`NORM_TOLERANCE`].
    pub fn new(amplitudes: [Complex64; 4]) -> Result<Self, QuantumError> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if norm.is_nan() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(QuantumError::NotNormalized(norm));
        }
        Ok(TwoQubitState { amplitudes })
    }

    /// Real amplitudes, normalized on the way in. Rejects the zero vector.
    pub fn from_real(amplitudes: [f64; 4]) -> Result<Self, QuantumError> {
        let norm: f64 = amplitudes.iter().map(|a| a * a).sum();
        if norm.is_nan() || norm <= 0.0 {
            return Err(QuantumError::NotNormalized(norm));
        }
        let scale = 1.0 / libm::sqrt(norm);
        Self::new(amplitudes.map(|a| re(a * scale)))
    }

    /// The computational basis state `|first second⟩`.
    pub fn basis(first: Bit, second: Bit) -> Self {
        let mut amplitudes = [re(0.0); 4];
        amplitudes[basis_index(first, second)] = re(1.0);
        TwoQubitState { amplitudes }
    }

    pub fn bell(label: BellLabel) -> Self {
        let h = FRAC_1_SQRT_2;
        let amplitudes = match label {
            BellLabel::Psi1 => [re(h), re(0.0), re(0.0), re(h)],
            BellLabel::Psi2 => [re(h), re(0.0), re(0.0), re(-h)],
            BellLabel::Psi3 => [re(0.0), re(h), re(h), re(0.0)],
            BellLabel::Psi4 => [re(0.0), re(-h), re(h), re(0.0)],
        };
        TwoQubitState { amplitudes }
    }

    pub fn amplitudes(&self) -> &[Complex64; 4] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &TwoQubitState) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Exact probabilities of reading 0 and 1 on `which` in the Z basis.
    pub fn z_probabilities(&self, which: Qubit) -> [f64; 2] {
        let mut p = [0.0; 2];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let (first, second) = basis_bits(i);
            let bit = match which {
                Qubit::First => first,
                Qubit::Second => second,
            };
            p[bit.value() as usize] += a.norm_sqr();
        }
        p
    }

    /// Projects `which` onto `outcome` and renormalizes.
    pub fn project_z(&self, which: Qubit, outcome: Bit) -> Result<Self, QuantumError> {
        let mut amplitudes = self.amplitudes;
        for (i, a) in amplitudes.iter_mut().enumerate() {
            let (first, second) = basis_bits(i);
            let bit = match which {
                Qubit::First => first,
                Qubit::Second => second,
            };
            if bit != outcome {
                *a = re(0.0);
            }
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if norm <= NORM_TOLERANCE {
            return Err(QuantumError::DegenerateProjection);
        }
        let scale = 1.0 / libm::sqrt(norm);
        TwoQubitState::new(amplitudes.map(|a| a * scale))
    }
}

fn basis_index(first: Bit, second: Bit) -> usize {
    ((first.value() as usize) << 1) | second.value() as usize
}

fn basis_bits(index: usize) -> (Bit, Bit) {
    (Bit::from(index & 2 != 0), Bit::from(index & 1 != 0))
}

pub fn make_bell_state(label: BellLabel) -> TwoQubitState {
    TwoQubitState::bell(label)
}

/// `|⟨bell(L)|state⟩|²` for each label, indexed by [`BellLabel::index`].
pub fn bell_overlap_probabilities(state: &TwoQubitState) -> [f64; 4] {
    BellLabel::ALL.map(|label| TwoQubitState::bell(label).inner(state).norm_sqr())
}

/// Z-basis measurement of one qubit with collapse.
pub fn measure_qubit_z(
    state: &TwoQubitState,
    which: Qubit,
    rng: &mut RandomSource,
) -> Result<(Bit, TwoQubitState), QuantumError> {
    let probabilities = state.z_probabilities(which);
    let outcome = if rng.pick_weighted(&probabilities) == 0 {
        Bit::Zero
    } else {
        Bit::One
    };
    let post = state.project_z(which, outcome)?;
    Ok((outcome, post))
}

/// Joint measurement of both qubits in the Bell basis. The post-measurement
/// state is the Bell state that was observed.
pub fn measure_bell_basis(
    state: &TwoQubitState,
    rng: &mut RandomSource,
) -> (BellLabel, TwoQubitState) {
    let probabilities = bell_overlap_probabilities(state);
    let label = BellLabel::ALL[rng.pick_weighted(&probabilities)];
    (label, TwoQubitState::bell(label))
}
