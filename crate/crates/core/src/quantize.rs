//! Local 1-bit processing at the sensors.
//!
//! The likelihood ratio of `y_q` under the Gaussian laws of the two
//! hypotheses is `c0 * exp(c1 * y^2)`, increasing in `|y|`. Thresholding the
//! ratio at `lambda` is therefore the same as thresholding `|y|` at a `tau`
//! that depends on `lambda`, and that is how [`quantize_lr`] works: it never
//! evaluates the ratio and never needs the sparsity. The direct quantizer
//! thresholds the signed observation instead.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::math::{f_func, upper_tail};
use crate::signal::{Hypothesis, NetworkModel, SignalModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuantizerKind {
    /// `b = 1` iff `|y| >= tau`.
    Lr,
    /// `z = 1` iff `y > zeta`.
    Direct,
}

impl fmt::Display for QuantizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuantizerKind::Lr => "lr",
            QuantizerKind::Direct => "direct",
        })
    }
}

impl FromStr for QuantizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lr" => Ok(QuantizerKind::Lr),
            "direct" => Ok(QuantizerKind::Direct),
            other => Err(Error::Config(format!(
                "unknown quantizer kind '{other}' (expected lr or direct)"
            ))),
        }
    }
}

/// Per-sensor 1-bit quantizers of one kind.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerBank {
    kind: QuantizerKind,
    thresholds: Vec<f64>,
}

impl QuantizerBank {
    pub fn new(kind: QuantizerKind, thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::Domain("quantizer bank is empty".into()));
        }
        if let Some(t) = thresholds.iter().find(|t| !t.is_finite()) {
            return Err(Error::Domain(format!("non-finite threshold {t}")));
        }
        if kind == QuantizerKind::Lr {
            if let Some(t) = thresholds.iter().find(|&&t| t <= 0.0) {
                // |y| >= t always holds, so the bit carries no information
                return Err(Error::Uninformative(format!(
                    "LR threshold {t} is not positive"
                )));
            }
        }
        Ok(QuantizerBank { kind, thresholds })
    }

    /// The same threshold at all `sensors` nodes.
    pub fn broadcast(kind: QuantizerKind, threshold: f64, sensors: usize) -> Result<Self> {
        QuantizerBank::new(kind, vec![threshold; sensors])
    }

    pub fn kind(&self) -> QuantizerKind {
        self.kind
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// Bank for the first `sensors` nodes.
    pub fn truncated(&self, sensors: usize) -> Result<Self> {
        if sensors == 0 || sensors > self.len() {
            return Err(Error::Contract(format!(
                "cannot take {sensors} of {} thresholds",
                self.len()
            )));
        }
        QuantizerBank::new(self.kind, self.thresholds[..sensors].to_vec())
    }
}

/// One trial's worth of sensor bits, as seen by the fusion center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitReport {
    pub bits: Vec<u8>,
    pub kind: QuantizerKind,
}

impl BitReport {
    pub fn new(bits: Vec<u8>, kind: QuantizerKind) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Contract("bit report entries must be 0 or 1".into()));
        }
        Ok(BitReport { bits, kind })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// `(c0, c1)` of the sensor's likelihood ratio `c0 * exp(c1 * y^2)`.
pub fn lr_coefficients(norm_sq: f64, noise_var: f64, signal: &SignalModel) -> (f64, f64) {
    let signal_power = signal.sparsity() * signal.nonzero_var() * norm_sq;
    let total = signal_power + noise_var;
    let c0 = (noise_var / total).sqrt();
    let c1 = signal_power / (2.0 * noise_var * total);
    (c0, c1)
}

/// Likelihood ratio `P(y | H1; p) / P(y | H0)` at sensor `sensor`.
pub fn lr_value(y: f64, network: &NetworkModel, sensor: usize, signal: &SignalModel) -> f64 {
    if signal.sparsity() == 0.0 {
        return 1.0;
    }
    let (c0, c1) = lr_coefficients(network.norms_sq()[sensor], network.noise_var(), signal);
    c0 * (c1 * y * y).exp()
}

/// The `|y|` threshold equivalent to thresholding the likelihood ratio at
/// `lambda`.
///
/// Fails when `lambda <= c0` (the ratio's minimum), where every observation
/// would be reported as 1.
pub fn lambda_to_tau(
    lambda: f64,
    network: &NetworkModel,
    sensor: usize,
    signal: &SignalModel,
) -> Result<f64> {
    if signal.sparsity() == 0.0 {
        return Err(Error::Uninformative(
            "likelihood ratio is identically 1 at zero sparsity".into(),
        ));
    }
    let (c0, c1) = lr_coefficients(network.norms_sq()[sensor], network.noise_var(), signal);
    if !(lambda > c0) {
        return Err(Error::Uninformative(format!(
            "lambda {lambda} does not exceed the ratio's minimum {c0}"
        )));
    }
    Ok(((lambda / c0).ln() / c1).sqrt())
}

/// Bit obtained by thresholding the likelihood ratio itself at `lambda`.
pub fn quantize_by_ratio(
    y: f64,
    lambda: f64,
    network: &NetworkModel,
    sensor: usize,
    signal: &SignalModel,
) -> u8 {
    u8::from(lr_value(y, network, sensor, signal) >= lambda)
}

fn check_row(y: &[f64], bank: &QuantizerBank, want: QuantizerKind) -> Result<()> {
    if bank.kind != want {
        return Err(Error::Contract(format!(
            "expected a {want} bank, got {}",
            bank.kind
        )));
    }
    if y.len() != bank.len() {
        return Err(Error::Contract(format!(
            "{} observations for {} quantizers",
            y.len(),
            bank.len()
        )));
    }
    Ok(())
}

/// `b_q = 1` iff `|y_q| >= tau_q`.
pub fn quantize_lr(y: &[f64], bank: &QuantizerBank) -> Result<BitReport> {
    check_row(y, bank, QuantizerKind::Lr)?;
    let bits = y
        .iter()
        .zip(&bank.thresholds)
        .map(|(v, tau)| u8::from(v.abs() >= *tau))
        .collect();
    Ok(BitReport {
        bits,
        kind: QuantizerKind::Lr,
    })
}

/// `z_q = 1` iff `y_q > zeta_q`.
pub fn quantize_direct(y: &[f64], bank: &QuantizerBank) -> Result<BitReport> {
    check_row(y, bank, QuantizerKind::Direct)?;
    let bits = y
        .iter()
        .zip(&bank.thresholds)
        .map(|(v, zeta)| u8::from(*v > *zeta))
        .collect();
    Ok(BitReport {
        bits,
        kind: QuantizerKind::Direct,
    })
}

pub fn quantize(y: &[f64], bank: &QuantizerBank) -> Result<BitReport> {
    match bank.kind {
        QuantizerKind::Lr => quantize_lr(y, bank),
        QuantizerKind::Direct => quantize_direct(y, bank),
    }
}

fn spread_at(
    hypothesis: Hypothesis,
    threshold: f64,
    norm_sq: f64,
    noise_var: f64,
    signal: &SignalModel,
) -> f64 {
    let t = match hypothesis {
        Hypothesis::H0 => 0.0,
        Hypothesis::H1 => signal.sparsity(),
    };
    f_func(threshold, t, norm_sq, signal.nonzero_var(), noise_var)
        .expect("network invariants guarantee a positive noise variance")
}

/// P(b_q = 1) for the LR quantizer with threshold `tau`.
pub fn bit_pmf_lr(
    network: &NetworkModel,
    sensor: usize,
    tau: f64,
    hypothesis: Hypothesis,
    signal: &SignalModel,
) -> f64 {
    let x = spread_at(
        hypothesis,
        tau,
        network.norms_sq()[sensor],
        network.noise_var(),
        signal,
    );
    2.0 * upper_tail(x)
}

/// P(z_q = 1) for the direct quantizer with threshold `zeta`.
pub fn bit_pmf_direct(
    network: &NetworkModel,
    sensor: usize,
    zeta: f64,
    hypothesis: Hypothesis,
    signal: &SignalModel,
) -> f64 {
    let x = spread_at(
        hypothesis,
        zeta,
        network.norms_sq()[sensor],
        network.noise_var(),
        signal,
    );
    upper_tail(x)
}
