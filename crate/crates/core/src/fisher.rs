//! Fisher information of the fused statistics, quantizer threshold design,
//! and sensor-count equivalence between detectors.
//!
//! At `p = 0` each sensor contributes `K(t) ||h||^4 sigma0^4 / sigma_w^4` to
//! the Fisher information, where `t` is the threshold in units of `sigma_w`:
//!
//! | detector | `K(t)`                                   |
//! |----------|------------------------------------------|
//! | Im-1-bit | `psi_lr(t) / 4`                          |
//! | 1-bit    | `psi_direct(t) / 4`                      |
//! | cLMPT    | `1 / 2`                                  |
//!
//! `K` never involves `||h||`, so maximizing the network's information
//! splits into one identical scalar problem per sensor.

use crate::detect::{DetectorKind, DetectorSpec};
use crate::error::{Error, Result};
use crate::math::{central_half, g_func, normal_pdf, upper_tail};
use crate::pso::{pso_maximize, OptResult, PsoConfig};
use crate::quantize::{QuantizerBank, QuantizerKind};
use crate::signal::{NetworkModel, SignalModel};

/// Per-sensor FI kernel of the LR quantizer,
/// `g(t) / ([1/2 - Phi(t)] Phi(t))` with `t = tau / sigma_w`.
pub fn psi_lr(tau: f64, sigma_w: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Uninformative(format!(
            "LR threshold {tau} is not positive"
        )));
    }
    if !(sigma_w > 0.0) {
        return Err(Error::Domain(format!(
            "sigma_w must be positive, got {sigma_w}"
        )));
    }
    Ok(psi_lr_normalized(tau / sigma_w))
}

fn psi_lr_normalized(t: f64) -> f64 {
    let denom = central_half(t) * upper_tail(t);
    if denom > 0.0 {
        g_func(t) / denom
    } else {
        0.0
    }
}

/// Per-sensor FI kernel of the direct quantizer,
/// `phi(t)^2 t^2 / (Phi(t) (1 - Phi(t)))` with `t = zeta / sigma_w`.
pub fn psi_direct(zeta: f64, sigma_w: f64) -> f64 {
    let t = zeta / sigma_w;
    let denom = upper_tail(t) * upper_tail(-t);
    if denom > 0.0 {
        (normal_pdf(t) * t).powi(2) / denom
    } else {
        0.0
    }
}

/// Im-1-bit Fisher information at sparsity `p_eval`, summed over the first
/// `taus.len()` sensors.
pub fn fisher_im1bit(
    network: &NetworkModel,
    signal: &SignalModel,
    taus: &[f64],
    p_eval: f64,
) -> Result<f64> {
    if taus.len() > network.sensors() {
        return Err(Error::Contract(format!(
            "{} thresholds for {} sensors",
            taus.len(),
            network.sensors()
        )));
    }
    if !(p_eval >= 0.0) {
        return Err(Error::Domain(format!("p_eval must be >= 0, got {p_eval}")));
    }
    let s0_sq = signal.nonzero_var();
    let mut total = 0.0;
    for (&tau, &nsq) in taus.iter().zip(network.norms_sq()) {
        if !(tau > 0.0) {
            return Err(Error::Uninformative(format!(
                "LR threshold {tau} is not positive"
            )));
        }
        let spread = p_eval * s0_sq * nsq + network.noise_var();
        let f = tau / spread.sqrt();
        let denom = central_half(f) * upper_tail(f);
        if denom > 0.0 {
            total += g_func(f) * nsq * nsq * s0_sq * s0_sq / (4.0 * spread * spread) / denom;
        }
    }
    Ok(total)
}

/// 1-bit (direct quantization) Fisher information at `p = 0`.
pub fn fisher_onebit(network: &NetworkModel, signal: &SignalModel, zetas: &[f64]) -> Result<f64> {
    if zetas.len() > network.sensors() {
        return Err(Error::Contract(format!(
            "{} thresholds for {} sensors",
            zetas.len(),
            network.sensors()
        )));
    }
    let snr_sq = (signal.nonzero_var() / network.noise_var()).powi(2);
    Ok(zetas
        .iter()
        .zip(network.norms_sq())
        .map(|(&z, &nsq)| psi_direct(z, network.noise_std()) / 4.0 * nsq * nsq * snr_sq)
        .sum())
}

/// cLMPT Fisher information at `p = 0` over the first `sensors` nodes.
pub fn fisher_clmpt(network: &NetworkModel, signal: &SignalModel, sensors: usize) -> f64 {
    let snr_sq = (signal.nonzero_var() / network.noise_var()).powi(2);
    network.norms_sq()[..sensors]
        .iter()
        .map(|nsq| 0.5 * nsq * nsq * snr_sq)
        .sum()
}

/// Maximize the per-sensor kernel of `kind` for noise level `sigma_w`.
///
/// The swarm searches `t = threshold / sigma_w` over `config.search_interval`;
/// the returned `argmax` and `spread` are in threshold units, `max_value` is
/// the kernel maximum (`psi`, not `psi / 4`).
pub fn optimize_threshold(
    kind: QuantizerKind,
    sigma_w: f64,
    config: &PsoConfig,
) -> Result<OptResult> {
    if !(sigma_w > 0.0 && sigma_w.is_finite()) {
        return Err(Error::Domain(format!(
            "sigma_w must be positive, got {sigma_w}"
        )));
    }
    if config.search_interval.0 <= 0.0 {
        return Err(Error::Domain(
            "threshold search interval must start above zero".into(),
        ));
    }
    let r = match kind {
        QuantizerKind::Lr => pso_maximize(psi_lr_normalized, config)?,
        QuantizerKind::Direct => pso_maximize(|t| psi_direct(t, 1.0), config)?,
    };
    Ok(OptResult {
        argmax: r.argmax * sigma_w,
        spread: r.spread * sigma_w,
        ..r
    })
}

/// Bank with every sensor at the information-maximizing threshold.
pub fn optimize_bank(
    network: &NetworkModel,
    kind: QuantizerKind,
    config: &PsoConfig,
) -> Result<(QuantizerBank, OptResult)> {
    let r = optimize_threshold(kind, network.noise_std(), config)?;
    let bank = QuantizerBank::broadcast(kind, r.argmax, network.sensors())?;
    Ok((bank, r))
}

/// Homogeneous FI kernel `K` of a detector (see the module table). Requires
/// a common threshold across the bank.
pub fn fi_factor(spec: &DetectorSpec, sigma_w: f64) -> Result<f64> {
    let common = |bank: &QuantizerBank| -> Result<f64> {
        let t = bank.thresholds()[0];
        if bank.thresholds().iter().any(|&v| v != t) {
            return Err(Error::Contract(format!(
                "{}: thresholds differ across sensors",
                spec.id()
            )));
        }
        Ok(t)
    };
    match (spec.kind, &spec.bank) {
        (DetectorKind::Clmpt, _) => Ok(0.5),
        (DetectorKind::Im1Bit, Some(bank)) => Ok(psi_lr(common(bank)?, sigma_w)? / 4.0),
        (DetectorKind::OneBit, Some(bank)) => Ok(psi_direct(common(bank)?, sigma_w) / 4.0),
        (kind, None) => Err(Error::Contract(format!("{kind} needs a quantizer bank"))),
    }
}

/// Sensors `candidate` needs per sensor of `reference` for equal asymptotic
/// deflection, `K_reference / K_candidate`. Only meaningful when every
/// `||h_q||^2` is the same.
pub fn sensor_equivalence(
    network: &NetworkModel,
    reference: &DetectorSpec,
    candidate: &DetectorSpec,
) -> Result<f64> {
    if !network.is_homogeneous() {
        return Err(Error::Contract(
            "sensor equivalence needs equal gain norms across sensors".into(),
        ));
    }
    let sigma_w = network.noise_std();
    let k_ref = fi_factor(reference, sigma_w)?;
    let k_cand = fi_factor(candidate, sigma_w)?;
    if !(k_cand > 0.0) {
        return Err(Error::Uninformative(format!(
            "{} carries no Fisher information",
            candidate.id()
        )));
    }
    Ok(k_ref / k_cand)
}
