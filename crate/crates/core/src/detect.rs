//! Fusion-center test statistics.
//!
//! All three detectors are locally most powerful tests in the sparsity `p`:
//! the score `d/dp log P(data; p)` at `p = 0`, divided by the square root of
//! its Fisher information so that it is standard normal under H0 for many
//! sensors.
//!
//! * Im-1-bit fuses `|y|`-thresholded bits. Per sensor the score is affine
//!   in `b_q`; its slope is the weight of the plain weighted bit sum exposed
//!   by [`im1bit_statistic_raw`].
//! * 1-bit fuses sign-thresholded bits `y > zeta`.
//! * cLMPT fuses the analog observations.
//!
//! The signal variance `sigma0^2` multiplies every score by the same
//! constant, so the normalized statistics never need it; neither do they
//! need `p`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fisher::{psi_direct, psi_lr};
use crate::math::{normal_pdf, upper_tail, upper_tail_inverse};
use crate::quantize::{quantize, BitReport, QuantizerBank, QuantizerKind};
use crate::signal::{Hypothesis, NetworkModel, SignalModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    /// LMPT on 1-bit quantized likelihood ratios.
    Im1Bit,
    /// Centralized LMPT on analog observations.
    Clmpt,
    /// LMPT on directly quantized observations.
    OneBit,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [
        DetectorKind::Im1Bit,
        DetectorKind::Clmpt,
        DetectorKind::OneBit,
    ];

    pub fn id(self) -> &'static str {
        match self {
            DetectorKind::Im1Bit => "im1bit",
            DetectorKind::Clmpt => "clmpt",
            DetectorKind::OneBit => "onebit",
        }
    }

    /// Quantizer kind the detector fuses, if any.
    pub fn quantizer(self) -> Option<QuantizerKind> {
        match self {
            DetectorKind::Im1Bit => Some(QuantizerKind::Lr),
            DetectorKind::OneBit => Some(QuantizerKind::Direct),
            DetectorKind::Clmpt => None,
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.id() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown detector '{}'", s.trim())))
    }
}

/// A detector as configured for an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    /// Quantizers of the fused sensors; `None` for cLMPT.
    pub bank: Option<QuantizerBank>,
    /// Fuse only the first `n` sensors of the network. `None` means all.
    pub sensors: Option<usize>,
}

impl DetectorSpec {
    pub fn new(
        kind: DetectorKind,
        bank: Option<QuantizerBank>,
        sensors: Option<usize>,
    ) -> Result<Self> {
        match (kind.quantizer(), &bank) {
            (None, None) => {}
            (None, Some(_)) => {
                return Err(Error::Contract(
                    "cLMPT does not take a quantizer bank".into(),
                ))
            }
            (Some(_), None) => {
                return Err(Error::Contract(format!("{kind} needs a quantizer bank")))
            }
            (Some(want), Some(b)) if b.kind() != want => {
                return Err(Error::Contract(format!(
                    "{kind} needs a {want} bank, got {}",
                    b.kind()
                )))
            }
            _ => {}
        }
        if sensors == Some(0) {
            return Err(Error::Contract(
                "detector must fuse at least one sensor".into(),
            ));
        }
        if let (Some(n), Some(b)) = (sensors, &bank) {
            if b.len() != n {
                return Err(Error::Contract(format!(
                    "{kind}: bank has {} thresholds for {n} sensors",
                    b.len()
                )));
            }
        }
        Ok(DetectorSpec {
            kind,
            bank,
            sensors,
        })
    }

    pub fn id(&self) -> &'static str {
        self.kind.id()
    }

    /// Number of fused sensors given the network size.
    pub fn fused(&self, network: &NetworkModel) -> usize {
        self.sensors.unwrap_or(network.sensors())
    }
}

/// Outcome of thresholding a normalized statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub statistic: f64,
    pub threshold: f64,
    pub declared: Hypothesis,
}

/// Threshold `upper_tail_inverse(pfa)`; H1 only on strict exceedance.
pub fn decide(statistic: f64, pfa: f64) -> Result<Decision> {
    let threshold = upper_tail_inverse(pfa)?;
    let declared = if statistic > threshold {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    };
    Ok(Decision {
        statistic,
        threshold,
        declared,
    })
}

fn check_bits(bits: &BitReport, want: QuantizerKind, sensors: usize) -> Result<()> {
    if bits.kind != want {
        return Err(Error::Contract(format!(
            "expected {want} bits, got {}",
            bits.kind
        )));
    }
    if bits.len() != sensors {
        return Err(Error::Contract(format!(
            "{} bits for {sensors} sensors",
            bits.len()
        )));
    }
    Ok(())
}

/// Weighted-bit-sum weights of the Im-1-bit detector:
/// `tau ||h||^2 exp(-tau^2 / 2 sigma_w^2) / ([1/2 - Phi(tau/sigma_w)] Phi(tau/sigma_w))`.
pub fn im1bit_weights(network: &NetworkModel, taus: &[f64]) -> Result<Vec<f64>> {
    if taus.len() > network.sensors() {
        return Err(Error::Contract(format!(
            "{} thresholds for {} sensors",
            taus.len(),
            network.sensors()
        )));
    }
    let sigma_w = network.noise_std();
    taus.iter()
        .zip(network.norms_sq())
        .map(|(&tau, &nsq)| {
            if !(tau > 0.0) {
                return Err(Error::Uninformative(format!(
                    "LR threshold {tau} is not positive"
                )));
            }
            let x = tau / sigma_w;
            let tail = upper_tail(x);
            let denom = (0.5 - tail) * tail;
            Ok(if denom > 0.0 {
                tau * nsq * (-0.5 * x * x).exp() / denom
            } else {
                0.0
            })
        })
        .collect()
}

/// Unnormalized Im-1-bit statistic `sum_q w_q b_q`.
pub fn im1bit_statistic_raw(bits: &BitReport, network: &NetworkModel, taus: &[f64]) -> Result<f64> {
    check_bits(bits, QuantizerKind::Lr, taus.len())?;
    let w = im1bit_weights(network, taus)?;
    Ok(bits
        .bits
        .iter()
        .zip(&w)
        .map(|(&b, w)| w * f64::from(b))
        .sum())
}

/// Score-test fusion of 1-bit reports.
///
/// Each sensor contributes `w_q (b_q - P0_q)`, where `P0_q` is its H0 bit
/// probability and `w_q` is proportional to `P0_q'(0) / (P0_q (1 - P0_q))`.
/// Dividing by `sqrt(sum w_q^2 P0_q (1 - P0_q))` gives exactly zero mean and
/// unit variance under H0.
#[derive(Debug, Clone, PartialEq)]
pub struct BitFusion {
    kind: QuantizerKind,
    weights: Vec<f64>,
    null_probs: Vec<f64>,
    offset: f64,
    scale: f64,
}

impl BitFusion {
    /// Im-1-bit fusion over the first `bank.len()` sensors of `network`.
    pub fn im1bit(network: &NetworkModel, bank: &QuantizerBank) -> Result<Self> {
        if bank.kind() != QuantizerKind::Lr {
            return Err(Error::Contract("Im-1-bit fusion needs an LR bank".into()));
        }
        let weights = im1bit_weights(network, bank.thresholds())?;
        let sigma_w = network.noise_std();
        let null_probs = bank
            .thresholds()
            .iter()
            .map(|&tau| 2.0 * upper_tail(tau / sigma_w))
            .collect();
        BitFusion::assemble(QuantizerKind::Lr, weights, null_probs)
    }

    /// 1-bit (direct quantization) fusion over the first `bank.len()` sensors.
    pub fn onebit(network: &NetworkModel, bank: &QuantizerBank) -> Result<Self> {
        if bank.kind() != QuantizerKind::Direct {
            return Err(Error::Contract("1-bit fusion needs a direct bank".into()));
        }
        if bank.len() > network.sensors() {
            return Err(Error::Contract(format!(
                "{} thresholds for {} sensors",
                bank.len(),
                network.sensors()
            )));
        }
        let sigma_w = network.noise_std();
        let mut weights = Vec::with_capacity(bank.len());
        let mut null_probs = Vec::with_capacity(bank.len());
        for (&zeta, &nsq) in bank.thresholds().iter().zip(network.norms_sq()) {
            let x = zeta / sigma_w;
            let p0 = upper_tail(x);
            let var = p0 * upper_tail(-x);
            // dP(z=1)/dp at p=0, per unit sigma0^2
            let slope = normal_pdf(x) * x * nsq / (2.0 * network.noise_var());
            weights.push(if var > 0.0 { slope / var } else { 0.0 });
            null_probs.push(p0);
        }
        BitFusion::assemble(QuantizerKind::Direct, weights, null_probs)
    }

    fn assemble(kind: QuantizerKind, weights: Vec<f64>, null_probs: Vec<f64>) -> Result<Self> {
        let offset = weights.iter().zip(&null_probs).map(|(w, p)| w * p).sum();
        let scale = weights
            .iter()
            .zip(&null_probs)
            .map(|(w, p)| w * w * p * (1.0 - p))
            .sum::<f64>()
            .sqrt();
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Uninformative(format!(
                "{kind} bank carries no Fisher information"
            )));
        }
        Ok(BitFusion {
            kind,
            weights,
            null_probs,
            offset,
            scale,
        })
    }

    pub fn sensors(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn null_probs(&self) -> &[f64] {
        &self.null_probs
    }

    pub fn raw(&self, bits: &BitReport) -> Result<f64> {
        check_bits(bits, self.kind, self.sensors())?;
        Ok(self.raw_unchecked(&bits.bits))
    }

    fn raw_unchecked(&self, bits: &[u8]) -> f64 {
        bits.iter()
            .zip(&self.weights)
            .map(|(&b, w)| w * f64::from(b))
            .sum()
    }

    pub fn normalized(&self, bits: &BitReport) -> Result<f64> {
        Ok(self.to_normalized(self.raw(bits)?))
    }

    /// Positive affine map from the raw weighted sum to the normalized statistic.
    pub fn to_normalized(&self, raw: f64) -> f64 {
        (raw - self.offset) / self.scale
    }

    /// Raw-sum threshold equivalent to normalized threshold `eta`.
    pub fn raw_threshold(&self, eta: f64) -> f64 {
        self.offset + eta * self.scale
    }

    /// Normalized statistic straight from observations, quantizing on the fly.
    fn score_observations(&self, y: &[f64], thresholds: &[f64]) -> f64 {
        let raw: f64 = match self.kind {
            QuantizerKind::Lr => y
                .iter()
                .zip(thresholds)
                .zip(&self.weights)
                .filter(|((v, t), _)| v.abs() >= **t)
                .map(|(_, w)| w)
                .sum(),
            QuantizerKind::Direct => y
                .iter()
                .zip(thresholds)
                .zip(&self.weights)
                .filter(|((v, t), _)| **v > **t)
                .map(|(_, w)| w)
                .sum(),
        };
        self.to_normalized(raw)
    }
}

/// Normalized Im-1-bit LMPT statistic.
pub fn im1bit_statistic_normalized(
    bits: &BitReport,
    network: &NetworkModel,
    bank: &QuantizerBank,
) -> Result<f64> {
    BitFusion::im1bit(network, bank)?.normalized(bits)
}

/// Normalized 1-bit LMPT statistic on directly quantized bits.
pub fn onebit_statistic(
    bits: &BitReport,
    network: &NetworkModel,
    bank: &QuantizerBank,
) -> Result<f64> {
    BitFusion::onebit(network, bank)?.normalized(bits)
}

/// Centralized LMPT: `sum_q ||h_q||^2 (y_q^2 / sigma_w^2 - 1) / sqrt(2 sum_q ||h_q||^4)`
/// over the first `y.len()` sensors.
pub fn clmpt_statistic(y: &[f64], network: &NetworkModel) -> Result<f64> {
    if y.is_empty() || y.len() > network.sensors() {
        return Err(Error::Contract(format!(
            "{} observations for a {}-sensor network",
            y.len(),
            network.sensors()
        )));
    }
    Ok(clmpt_unchecked(y, network.norms_sq(), network.noise_var()))
}

fn clmpt_unchecked(y: &[f64], norms_sq: &[f64], noise_var: f64) -> f64 {
    let mut score = 0.0;
    let mut info = 0.0;
    for (v, &nsq) in y.iter().zip(norms_sq) {
        score += nsq * (v * v / noise_var - 1.0);
        info += nsq * nsq;
    }
    score / (2.0 * info).sqrt()
}

/// A detector bound to a network, ready to score observation rows.
#[derive(Debug, Clone)]
pub struct FusionRule {
    spec: DetectorSpec,
    fused: usize,
    norms_sq: Vec<f64>,
    noise_var: f64,
    bits: Option<BitFusion>,
}

impl FusionRule {
    pub fn new(spec: &DetectorSpec, network: &NetworkModel) -> Result<Self> {
        let fused = spec.fused(network);
        if fused > network.sensors() {
            return Err(Error::Contract(format!(
                "{} fuses {fused} sensors but the network has {}",
                spec.id(),
                network.sensors()
            )));
        }
        let bits = match (&spec.bank, spec.kind) {
            (Some(bank), _) if bank.len() != fused => {
                return Err(Error::Contract(format!(
                    "{}: bank has {} thresholds for {fused} sensors",
                    spec.id(),
                    bank.len()
                )))
            }
            (Some(bank), DetectorKind::Im1Bit) => Some(BitFusion::im1bit(network, bank)?),
            (Some(bank), DetectorKind::OneBit) => Some(BitFusion::onebit(network, bank)?),
            _ => None,
        };
        Ok(FusionRule {
            spec: spec.clone(),
            fused,
            norms_sq: network.norms_sq()[..fused].to_vec(),
            noise_var: network.noise_var(),
            bits,
        })
    }

    pub fn spec(&self) -> &DetectorSpec {
        &self.spec
    }

    pub fn bit_fusion(&self) -> Option<&BitFusion> {
        self.bits.as_ref()
    }

    /// Normalized statistic of one trial; `y` covers the whole network.
    pub fn statistic(&self, y: &[f64]) -> f64 {
        let y = &y[..self.fused];
        match (&self.bits, &self.spec.bank) {
            (Some(fusion), Some(bank)) => fusion.score_observations(y, bank.thresholds()),
            _ => clmpt_unchecked(y, &self.norms_sq, self.noise_var),
        }
    }

    /// The sensors' bit report for one trial (bit detectors only).
    pub fn report(&self, y: &[f64]) -> Option<Result<BitReport>> {
        self.spec
            .bank
            .as_ref()
            .map(|bank| quantize(&y[..self.fused], bank))
    }
}

/// Predicted H1 mean of the normalized statistic, `p * sqrt(FI(0))`, using
/// the true `p` and `sigma0^2`. Sums per-sensor Fisher information, so it
/// also covers heterogeneous networks.
pub fn theoretical_mean(
    spec: &DetectorSpec,
    network: &NetworkModel,
    signal: &SignalModel,
) -> Result<f64> {
    let fused = spec.fused(network);
    if fused > network.sensors() {
        return Err(Error::Contract(format!(
            "{} fuses {fused} sensors but the network has {}",
            spec.id(),
            network.sensors()
        )));
    }
    let sigma_w = network.noise_std();
    let norms = &network.norms_sq()[..fused];
    // per-sensor FI kernel in units of ||h||^4 sigma0^4 / sigma_w^4
    let kernel: Vec<f64> = match (&spec.bank, spec.kind) {
        (None, _) => vec![0.5; fused],
        (Some(bank), DetectorKind::Im1Bit) => bank
            .thresholds()
            .iter()
            .map(|&t| psi_lr(t, sigma_w).map(|psi| psi / 4.0))
            .collect::<Result<_>>()?,
        (Some(bank), _) => bank
            .thresholds()
            .iter()
            .map(|&z| psi_direct(z, sigma_w) / 4.0)
            .collect(),
    };
    let snr_sq = (signal.nonzero_var() / network.noise_var()).powi(2);
    let info: f64 = kernel
        .iter()
        .zip(norms)
        .map(|(k, nsq)| k * nsq * nsq * snr_sq)
        .sum();
    Ok(signal.sparsity() * info.sqrt())
}
