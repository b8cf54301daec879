//! Built-in device catalog and the TOML scenario format.
//!
//! A scenario file looks like
//!
//! ```toml
//! schema_version = 1
//! t_frame = 1.0
//! seed = 42
//!
//! [channel]
//! pr_tx = 0.2
//! reference_loss_db = 70.0
//!
//! [[groups]]
//! template = "g1"
//! count = 1
//! b0 = 240.0
//!
//! [run]
//! mode = "statistical"
//! sigma = [0.0, 0.5, 1.0]
//! ```
//!
//! Every section other than `schema_version` and at least one device is
//! optional. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eap::{EapConfig, SweepConfig};
use crate::error::{config, Error, Result};
use crate::frame::{FopMode, SolverConfig};
use crate::model::{ChannelModel, CompressionParams, DeviceParams, Fading, RadioParams};

pub const SCHEMA_VERSION: u32 = 1;

/// Frame length used when a scenario does not set one, seconds.
pub const DEFAULT_T_FRAME: f64 = 1.0;

pub const RN131C: RadioParams = RadioParams {
    p_min: 0.100,
    p_max: 0.2377,
    eta_a: 0.58,
    e_c_rate: 0.16775,
    beta_const: 1e-3,
};

pub const RC2400HP: RadioParams = RadioParams {
    p_min: 0.01122,
    p_max: 0.10715,
    eta_a: 0.23,
    e_c_rate: 0.06015,
    beta_const: 1e-3,
};

pub const DEFAULT_COMPRESSION: CompressionParams = CompressionParams {
    a: 0.35,
    b: 19.9,
    e0_alpha: 50e-9,
    beta_p: 0.0,
};

pub const DEFAULT_N0_DBM_HZ: f64 = -167.0;

/// Watts per hertz for a density given in dBm/Hz.
pub fn dbm_hz_to_w_hz(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn default_channel() -> ChannelModel {
    ChannelModel {
        w: 5e6,
        n0: dbm_hz_to_w_hz(DEFAULT_N0_DBM_HZ),
        path_loss_exp: 3.5,
        reference_loss_db: 0.0,
        fading: Fading::Rayleigh,
        pr_tx: 0.2,
    }
}

/// Named node template: placement, traffic, QoS, radio and priority.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTemplate {
    pub name: &'static str,
    pub radio_name: &'static str,
    pub radio: RadioParams,
    pub distance: f64,
    pub l0: f64,
    pub d_th: f64,
    pub priority: u32,
}

pub const G1: GroupTemplate = GroupTemplate {
    name: "g1",
    radio_name: "rn131c",
    radio: RN131C,
    distance: 4.0,
    l0: 2e6,
    d_th: 8.0,
    priority: 0,
};

pub const G2: GroupTemplate = GroupTemplate {
    name: "g2",
    radio_name: "rn131c",
    radio: RN131C,
    distance: 20.0,
    l0: 1e6,
    d_th: 15.0,
    priority: 1,
};

pub const G3: GroupTemplate = GroupTemplate {
    name: "g3",
    radio_name: "rc2400hp",
    radio: RC2400HP,
    distance: 100.0,
    l0: 1e4,
    d_th: 4.0,
    priority: 2,
};

pub const GROUPS: [GroupTemplate; 3] = [G1, G2, G3];

/// Periodic multiplier of the payload size used by the varying-traffic runs.
pub const DEFAULT_ZETA: [f64; 4] = [0.5, 1.0, 2.0, 1.0];

pub fn radio(name: &str) -> Option<RadioParams> {
    match name {
        "rn131c" => Some(RN131C),
        "rc2400hp" => Some(RC2400HP),
        _ => None,
    }
}

pub fn group(name: &str) -> Option<&'static GroupTemplate> {
    GROUPS.iter().find(|g| g.name == name)
}

/// A loaded, validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub devices: Vec<DeviceParams>,
    pub channel: ChannelModel,
    pub t_frame: f64,
    /// Templates the devices were instantiated from, in file order.
    pub groups: Vec<String>,
    pub zeta_pattern: Option<Vec<f64>>,
    pub seed: u64,
    pub run: RunConfig,
    pub solver: SolverConfig,
    pub eap: EapConfig,
    pub sweep: SweepConfig,
}

/// Experiment knobs of a scenario's `[run]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: FopMode,
    pub sigma: Vec<f64>,
    /// Dismiss nodes before allocating energy.
    pub admission: bool,
    /// Frame lengths of the dismissal sweep, seconds.
    pub t_sweep: Vec<f64>,
    /// Seeds per frame length in the dismissal sweep.
    pub dismissal_runs: usize,
    /// Processing slopes of the sensitivity sweep, joules/bit.
    pub slope_sweep: Vec<f64>,
    /// Fading samples per node in the policy dump.
    pub theta_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: FopMode::Statistical,
            sigma: vec![0.0, 0.5, 1.0],
            admission: false,
            t_sweep: vec![0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
            dismissal_runs: 100,
            slope_sweep: vec![0.0, 25e-9, 50e-9, 100e-9, 200e-9],
            theta_points: 64,
        }
    }
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: u32,
    t_frame: Option<f64>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    channel: RawChannel,
    #[serde(default)]
    compression: Option<RawCompression>,
    #[serde(default)]
    zeta_pattern: Option<Vec<f64>>,
    #[serde(default)]
    groups: Vec<RawGroup>,
    #[serde(default)]
    devices: Vec<RawDevice>,
    #[serde(default)]
    run: RunConfig,
    #[serde(default)]
    solver: SolverConfig,
    #[serde(default)]
    eap: EapConfig,
    #[serde(default)]
    sweep: SweepConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    w: Option<f64>,
    n0_dbm_hz: Option<f64>,
    path_loss_exp: Option<f64>,
    reference_loss_db: Option<f64>,
    fading: Option<Fading>,
    pr_tx: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCompression {
    a: Option<f64>,
    b: Option<f64>,
    e0_alpha: Option<f64>,
    beta_p: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RadioRef {
    Named(String),
    Inline(RadioParams),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    template: String,
    #[serde(default = "one")]
    count: usize,
    b0: f64,
    distance: Option<f64>,
    l0: Option<f64>,
    d_th: Option<f64>,
    priority: Option<u32>,
    radio: Option<RadioRef>,
    compression: Option<RawCompression>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    radio: RadioRef,
    distance: f64,
    l0: Vec<f64>,
    d_th: Vec<f64>,
    #[serde(default)]
    priority: u32,
    b0: f64,
    compression: Option<RawCompression>,
}

impl RawCompression {
    fn over(self, base: CompressionParams) -> CompressionParams {
        CompressionParams {
            a: self.a.unwrap_or(base.a),
            b: self.b.unwrap_or(base.b),
            e0_alpha: self.e0_alpha.unwrap_or(base.e0_alpha),
            beta_p: self.beta_p.unwrap_or(base.beta_p),
        }
    }
}

fn resolve_radio(r: &RadioRef, key: &str) -> Result<RadioParams> {
    match r {
        RadioRef::Named(n) => radio(n).ok_or_else(|| config(key, format!("unknown radio `{n}`"))),
        RadioRef::Inline(p) => Ok(*p),
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config(path.display().to_string(), format!("cannot read: {e}")))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawScenario) -> Result<Self> {
        if raw.schema_version != SCHEMA_VERSION {
            return Err(config(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", raw.schema_version),
            ));
        }
        let t_frame = match raw.t_frame {
            Some(t) => t,
            None => {
                log::warn!("t_frame not set, using the default of {DEFAULT_T_FRAME} s");
                DEFAULT_T_FRAME
            }
        };
        check_positive("t_frame", t_frame)?;

        let d = default_channel();
        let c = &raw.channel;
        let channel = ChannelModel {
            w: c.w.unwrap_or(d.w),
            n0: c.n0_dbm_hz.map_or(d.n0, dbm_hz_to_w_hz),
            path_loss_exp: c.path_loss_exp.unwrap_or(d.path_loss_exp),
            reference_loss_db: c.reference_loss_db.unwrap_or(d.reference_loss_db),
            fading: c.fading.unwrap_or(d.fading),
            pr_tx: c.pr_tx.unwrap_or(d.pr_tx),
        };
        check_positive("channel.w", channel.w)?;
        check_positive("channel.n0_dbm_hz", channel.n0)?;
        check_positive("channel.path_loss_exp", channel.path_loss_exp)?;
        if !channel.reference_loss_db.is_finite() {
            return Err(config("channel.reference_loss_db", "must be finite"));
        }
        if !(channel.pr_tx > 0.0 && channel.pr_tx <= 1.0) {
            return Err(config("channel.pr_tx", "must lie in (0, 1]"));
        }

        if let Some(z) = &raw.zeta_pattern {
            if z.is_empty() || z.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(config("zeta_pattern", "must be a non-empty list of positive numbers"));
            }
        }
        let zeta = raw.zeta_pattern.clone().unwrap_or_else(|| vec![1.0]);
        let base_cp = raw.compression.map_or(DEFAULT_COMPRESSION, |c| c.over(DEFAULT_COMPRESSION));

        let mut devices = Vec::new();
        let mut groups = Vec::new();
        for (gi, g) in raw.groups.iter().enumerate() {
            let key = |f: &str| format!("groups[{gi}].{f}");
            let t = group(&g.template).ok_or_else(|| config(key("template"), format!("unknown template `{}`", g.template)))?;
            let radio = match &g.radio {
                Some(r) => resolve_radio(r, &key("radio"))?,
                None => t.radio,
            };
            let l0 = g.l0.unwrap_or(t.l0);
            for _ in 0..g.count {
                devices.push(DeviceParams {
                    id: devices.len(),
                    radio,
                    compression: g.compression.map_or(base_cp, |c| c.over(base_cp)),
                    l0: zeta.iter().map(|z| z * l0).collect(),
                    d_th: vec![g.d_th.unwrap_or(t.d_th)],
                    priority: g.priority.unwrap_or(t.priority),
                    b0: g.b0,
                    distance: g.distance.unwrap_or(t.distance),
                });
                groups.push(t.name.to_string());
            }
        }
        for (di, r) in raw.devices.iter().enumerate() {
            let key = format!("devices[{di}].radio");
            devices.push(DeviceParams {
                id: devices.len(),
                radio: resolve_radio(&r.radio, &key)?,
                compression: r.compression.map_or(base_cp, |c| c.over(base_cp)),
                l0: r.l0.clone(),
                d_th: r.d_th.clone(),
                priority: r.priority,
                b0: r.b0,
                distance: r.distance,
            });
            groups.push(String::new());
        }
        if devices.is_empty() {
            return Err(config("groups", "scenario has no devices"));
        }
        for (i, dev) in devices.iter().enumerate() {
            validate_device(dev, i)?;
        }

        if raw.run.sigma.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(config("run.sigma", "weights must lie in [0, 1]"));
        }
        if raw.run.t_sweep.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(config("run.t_sweep", "frame lengths must be positive"));
        }
        if raw.run.slope_sweep.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(config("run.slope_sweep", "slopes must be non-negative"));
        }
        check_positive("solver.tol_gamma", raw.solver.tol_gamma)?;
        check_positive("eap.tol_conv", raw.eap.tol_conv)?;
        if raw.eap.samples < 2 {
            return Err(config("eap.samples", "need at least 2 samples"));
        }
        if raw.sweep.n_step == 0 {
            return Err(config("sweep.n_step", "must be at least 1"));
        }

        Ok(Scenario {
            devices,
            channel,
            t_frame,
            groups,
            zeta_pattern: raw.zeta_pattern,
            seed: raw.seed,
            run: raw.run,
            solver: raw.solver,
            eap: raw.eap,
            sweep: raw.sweep,
        })
    }

    /// Copy with every device's processing slope replaced.
    pub fn with_processing_slope(&self, e0_alpha: f64) -> Scenario {
        let mut s = self.clone();
        for d in &mut s.devices {
            d.compression.e0_alpha = e0_alpha;
        }
        s
    }

    /// Copy keeping only the listed device ids, renumbered from zero.
    pub fn restricted_to(&self, ids: &[usize]) -> Scenario {
        let mut s = self.clone();
        s.devices = ids
            .iter()
            .enumerate()
            .map(|(new, &old)| DeviceParams {
                id: new,
                ..self.devices[old].clone()
            })
            .collect();
        s.groups = ids.iter().map(|&i| self.groups[i].clone()).collect();
        s
    }
}

fn check_positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config(key, format!("must be positive and finite, found {v}")))
    }
}

fn validate_device(d: &DeviceParams, i: usize) -> Result<()> {
    let key = |f: &str| format!("devices[{i}].{f}");
    let r = &d.radio;
    if !(r.p_min > 0.0 && r.p_min <= r.p_max && r.p_max.is_finite()) {
        return Err(config(key("radio"), "need 0 < p_min <= p_max"));
    }
    if !(r.eta_a > 0.0 && r.eta_a <= 1.0) {
        return Err(config(key("radio.eta_a"), "must lie in (0, 1]"));
    }
    if !(r.e_c_rate >= 0.0 && r.beta_const >= 0.0) {
        return Err(config(key("radio"), "circuit terms must be non-negative"));
    }
    let cp = &d.compression;
    if !(cp.a > 0.0 && cp.b > 0.0 && cp.e0_alpha >= 0.0 && cp.beta_p >= 0.0) {
        return Err(config(key("compression"), "need a > 0, b > 0 and non-negative energy terms"));
    }
    if d.l0.is_empty() || d.l0.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(config(key("l0"), "payloads must be positive"));
    }
    if d.d_th.is_empty() || d.d_th.iter().any(|&v| !(v > 0.0)) {
        return Err(config(key("d_th"), "thresholds must be positive"));
    }
    if !(d.b0 > 0.0) {
        return Err(config(key("b0"), "battery must be positive"));
    }
    check_positive(&key("distance"), d.distance)
}
