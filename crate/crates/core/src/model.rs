//! Device, channel and energy model.
//!
//! Compression maps a payload fraction `eta = L / L0` to a distortion
//! `D = [b (eta^-a - 1)]+`. Transmission follows the Shannon rate of a
//! flat-fading link, and every frame charges processing, transmission, a
//! per-frame constant and a circuit term proportional to airtime.

use std::f64::consts::LN_2;
use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Rate-distortion curve and processing-energy model of one compressor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionParams {
    /// Curve exponent `a > 0`.
    pub a: f64,
    /// Curve scale `b > 0`.
    pub b: f64,
    /// Processing energy per output bit, joules/bit.
    pub e0_alpha: f64,
    /// Constant processing energy per *original* bit, joules/bit.
    pub beta_p: f64,
}

/// Transceiver parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub p_min: f64,
    pub p_max: f64,
    /// Power-amplifier efficiency in (0, 1].
    pub eta_a: f64,
    /// Circuit power drawn while transmitting, watts.
    pub e_c_rate: f64,
    /// Fixed energy spent in every frame, joules.
    pub beta_const: f64,
}

/// One sensor node. `l0` and `d_th` are cyclic per-frame sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub id: usize,
    pub radio: RadioParams,
    pub compression: CompressionParams,
    pub l0: Vec<f64>,
    pub d_th: Vec<f64>,
    /// Priority rank, 0 is the most important.
    pub priority: u32,
    /// Initial battery, joules.
    pub b0: f64,
    /// Distance to the sink, metres.
    pub distance: f64,
}

impl DeviceParams {
    pub fn l0_at(&self, frame: usize) -> f64 {
        self.l0[frame % self.l0.len()]
    }

    pub fn d_th_at(&self, frame: usize) -> f64 {
        self.d_th[frame % self.d_th.len()]
    }

    /// Number of frames after which `l0` and `d_th` repeat.
    pub fn period(&self) -> usize {
        lcm(self.l0.len().max(1), self.d_th.len().max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fading {
    None,
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Bandwidth, hertz.
    pub w: f64,
    /// Noise power spectral density, watts/hertz.
    pub n0: f64,
    pub path_loss_exp: f64,
    /// Extra attenuation applied to every link, decibels.
    pub reference_loss_db: f64,
    pub fading: Fading,
    /// Required probability of transmission in a frame.
    pub pr_tx: f64,
}

impl ChannelModel {
    /// Mean normalised gain `h0 = 10^(-loss/10) d^-alpha / (N0 W)`.
    pub fn mean_gain(&self, distance: f64) -> f64 {
        normalized_gain(distance, self) * 10f64.powf(-self.reference_loss_db / 10.0)
    }

    /// Fading threshold below which the node stays silent. Zero without fading.
    pub fn theta_tx(&self) -> Result<f64> {
        match self.fading {
            Fading::None => Ok(0.0),
            Fading::Rayleigh => theta_threshold(self.pr_tx),
        }
    }

    /// Fading coefficient of the worst channel the node must serve.
    pub fn worst_theta(&self) -> Result<f64> {
        match self.fading {
            Fading::None => Ok(1.0),
            Fading::Rayleigh => theta_threshold(self.pr_tx),
        }
    }
}

/// `theta_tx = -ln(pr_tx)` for unit-mean exponential fading.
pub fn theta_threshold(pr_tx: f64) -> Result<f64> {
    if !(pr_tx > 0.0 && pr_tx <= 1.0) {
        return Err(domain("pr_tx", pr_tx));
    }
    Ok(-pr_tx.ln())
}

/// Distortion of a payload fraction `eta_p` in (0, 1].
pub fn distortion(eta_p: f64, cp: &CompressionParams) -> Result<f64> {
    if !(eta_p > 0.0 && eta_p <= 1.0) {
        return Err(domain("eta_p", eta_p));
    }
    Ok((cp.b * (eta_p.powf(-cp.a) - 1.0)).max(0.0))
}

/// Smallest payload fraction whose distortion does not exceed `d`.
pub fn inverse_distortion(d: f64, cp: &CompressionParams) -> Result<f64> {
    if d.is_nan() || d < 0.0 {
        return Err(domain("distortion", d));
    }
    Ok((1.0 + d / cp.b).powf(-1.0 / cp.a))
}

/// Distortion of an `l_bits` payload cut from `l0` bits; infinite for an empty payload.
pub fn payload_distortion(l_bits: f64, l0: f64, cp: &CompressionParams) -> f64 {
    if l_bits <= 0.0 {
        return f64::INFINITY;
    }
    if l_bits >= l0 {
        return 0.0;
    }
    (cp.b * ((l0 / l_bits).powf(cp.a) - 1.0)).max(0.0)
}

/// `W log2(1 + h p)` in bits per second.
pub fn shannon_rate(h: f64, p: f64, w: f64) -> f64 {
    w * (h * p).ln_1p() / LN_2
}

/// Mean normalised gain `d^-alpha / (N0 W)` without extra attenuation.
pub fn normalized_gain(distance: f64, ch: &ChannelModel) -> f64 {
    distance.powf(-ch.path_loss_exp) / (ch.n0 * ch.w)
}

pub fn processing_energy(l_bits: f64, l0: f64, cp: &CompressionParams) -> Result<f64> {
    if l_bits.is_nan() || l_bits < 0.0 {
        return Err(domain("l_bits", l_bits));
    }
    Ok(cp.e0_alpha * l_bits + cp.beta_p * l0)
}

/// Largest payload whose processing energy fits in `e`; `None` if even an
/// empty payload does not fit or processing is free.
pub fn inverse_processing_energy(e: f64, l0: f64, cp: &CompressionParams) -> Option<f64> {
    let rest = e - cp.beta_p * l0;
    if rest < 0.0 || cp.e0_alpha <= 0.0 {
        return None;
    }
    Some(rest / cp.e0_alpha)
}

/// Energy of one frame: processing, radiated, constant and circuit terms.
pub fn total_energy(
    p: f64,
    tau: f64,
    l_bits: f64,
    l0: f64,
    radio: &RadioParams,
    cp: &CompressionParams,
) -> Result<f64> {
    Ok(processing_energy(l_bits, l0, cp)? + p * tau / radio.eta_a + radio.beta_const + radio.e_c_rate * tau)
}

/// Parameters of one node in one frame, with the link gain resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameNode {
    pub id: usize,
    pub radio: RadioParams,
    pub compression: CompressionParams,
    pub l0: f64,
    pub d_th: f64,
    pub w: f64,
    /// Mean normalised gain.
    pub h0: f64,
    pub theta_tx: f64,
    pub fading: Fading,
}

impl FrameNode {
    pub fn new(dev: &DeviceParams, ch: &ChannelModel, frame: usize) -> Result<Self> {
        Ok(FrameNode {
            id: dev.id,
            radio: dev.radio,
            compression: dev.compression,
            l0: dev.l0_at(frame),
            d_th: dev.d_th_at(frame),
            w: ch.w,
            h0: ch.mean_gain(dev.distance),
            theta_tx: ch.theta_tx()?,
            fading: ch.fading,
        })
    }

    /// Payload that meets distortion `d` exactly.
    pub fn bits_for_distortion(&self, d: f64) -> f64 {
        inverse_distortion(d, &self.compression).map_or(0.0, |eta| eta * self.l0)
    }

    /// Processing energy that does not depend on the payload.
    pub fn processing_offset(&self) -> f64 {
        self.compression.beta_p * self.l0
    }

    pub fn energy(&self, p: f64, tau: f64, l_bits: f64) -> f64 {
        self.compression.e0_alpha * l_bits
            + self.processing_offset()
            + p * tau / self.radio.eta_a
            + self.radio.beta_const
            + self.radio.e_c_rate * tau
    }

    /// Hash of every parameter, used to key solver caches.
    pub fn cache_key(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.id.hash(&mut h);
        for v in [
            self.radio.p_min,
            self.radio.p_max,
            self.radio.eta_a,
            self.radio.e_c_rate,
            self.radio.beta_const,
            self.compression.a,
            self.compression.b,
            self.compression.e0_alpha,
            self.compression.beta_p,
            self.l0,
            self.d_th,
            self.w,
            self.h0,
            self.theta_tx,
        ] {
            v.to_bits().hash(&mut h);
        }
        self.fading.hash(&mut h);
        h.finish()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}
