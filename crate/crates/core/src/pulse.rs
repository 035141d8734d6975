//! Gaussian pulse trains driving the cavity mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One Gaussian: amplitude (meV), centre (ps), width (ps, > 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse<T = f64> {
    pub amplitude: T,
    pub center: T,
    pub width: T,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PulseTrain<T = f64> {
    pulses: Vec<Pulse<T>>,
}

impl<T: Real> PulseTrain<T> {
    pub fn new(pulses: Vec<Pulse<T>>) -> Result<Self> {
        if let Some(p) = pulses.iter().find(|p| !(p.width > T::zero())) {
            return Err(Error::Domain(format!("pulse width must be positive, got {}", p.width)));
        }
        if pulses.iter().any(|p| !p.amplitude.is_finite() || !p.center.is_finite() || !p.width.is_finite()) {
            return Err(Error::Domain("pulse parameters must be finite".into()));
        }
        Ok(PulseTrain { pulses })
    }

    pub fn empty() -> Self {
        PulseTrain { pulses: Vec::new() }
    }

    pub fn pulses(&self) -> &[Pulse<T>] {
        &self.pulses
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    /// `Ω(t) = Σ_i A_i exp(−(t − t_i)² / (2 ξ_i²))`.
    pub fn amplitude(&self, t: T) -> T {
        let half = T::lit(0.5);
        self.pulses.iter().fold(T::zero(), |acc, p| {
            let z = (t - p.center) / p.width;
            acc + p.amplitude * (-half * z * z).exp()
        })
    }
}

pub fn pulse_amplitude<T: Real>(train: &PulseTrain<T>, t: T) -> T {
    train.amplitude(t)
}
