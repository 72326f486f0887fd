//! Experiment files.
//!
//! A TOML document with one table per model layer. Every key has a default,
//! so a file only needs `scenario`. Validation collects every problem in one
//! pass and points at the offending line when the key is present in the
//! file.

use std::fmt;
use std::path::PathBuf;

use omr_core::bcl::{BclConfig, ExpectationMode, Expectations, XiMode};
use omr_core::channel::{thermal_noise, PhyConfig};
use omr_core::engine::{EngineConfig, RetransmitPolicy};
use omr_core::field::{FieldConfig, Point2D};
use omr_core::metrics::{mcs, McsEntry};
use omr_core::units::{db_to_linear, dbm_to_watts, per_km2, SPEED_OF_LIGHT};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    OmrTrials,
    BclTrials,
    Analytic,
    ComparePower,
    #[serde(rename = "compare-B", alias = "compare-b")]
    CompareB,
    CompareMcs,
    DelaySpread,
    Retransmissions,
    TwoPackets,
    Calibrate,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::OmrTrials => "omr-trials",
            Scenario::BclTrials => "bcl-trials",
            Scenario::Analytic => "analytic",
            Scenario::ComparePower => "compare-power",
            Scenario::CompareB => "compare-B",
            Scenario::CompareMcs => "compare-mcs",
            Scenario::DelaySpread => "delay-spread",
            Scenario::Retransmissions => "retransmissions",
            Scenario::TwoPackets => "two-packets",
            Scenario::Calibrate => "calibrate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    pub rho_km2: f64,
    pub epsilon: f64,
    pub length_m: f64,
    pub strip_width_m: f64,
    pub margin_m: f64,
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            rho_km2: 1500.0,
            epsilon: 0.25,
            length_m: 2000.0,
            strip_width_m: 200.0,
            margin_m: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhySection {
    pub carrier_hz: f64,
    pub alpha: f64,
    pub subcarriers: u32,
    pub subcarrier_spacing_hz: f64,
    pub noise_figure_db: f64,
    /// Overrides the thermal noise estimate when set.
    pub noise_power_w: Option<f64>,
    pub tx_dbm: f64,
    pub gamma_t_db: f64,
    pub tau: f64,
    pub mean_taps: f64,
    pub cp_s: f64,
    pub packet_s: f64,
    pub id_s: f64,
    pub rx_power_w: f64,
    pub data_rate_bps: f64,
    /// When set, replaces `gamma_t_db` with the MCS threshold and
    /// `data_rate_bps` with `bits_per_symbol · N_s / (1/Δf + T_cp)`.
    pub mcs: Option<String>,
}

impl Default for PhySection {
    fn default() -> Self {
        Self {
            carrier_hz: 2.4e9,
            alpha: 3.0,
            subcarriers: 64,
            subcarrier_spacing_hz: 15e3,
            noise_figure_db: 10.0,
            noise_power_w: None,
            tx_dbm: 24.0,
            gamma_t_db: 5.0,
            tau: 0.2,
            mean_taps: 4.0,
            cp_s: 4.7e-6,
            packet_s: 4e-3,
            id_s: 0.4e-3,
            rx_power_w: 0.06,
            data_rate_bps: 250e3,
            mcs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmrSection {
    pub rach_slots: u32,
    pub max_retransmissions: u32,
    /// Strip widening per retransmission; a quarter of the strip when unset.
    pub delta_w_m: Option<f64>,
    pub fa_rate: f64,
    pub delta_r_m: f64,
    /// RACH slot length used to derate the data rate in `compare-B` (s).
    pub rach_slot_s: f64,
}

impl Default for OmrSection {
    fn default() -> Self {
        Self {
            rach_slots: 16,
            max_retransmissions: 3,
            delta_w_m: None,
            fa_rate: 0.0,
            delta_r_m: 0.0,
            rach_slot_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum XiSetting {
    Fixed(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BclSection {
    pub tx_dbm: f64,
    /// Transmission range; the lone-transmitter reach at `tx_dbm` when unset.
    pub d_m: Option<f64>,
    pub n_p: u32,
    pub t_s: f64,
    /// A number in (0, 1] or `"geometric"`.
    pub xi: XiSetting,
    /// Supplied `[E[η], E[m_e], E[m_n]]`; simulated when unset.
    pub expectations: Option<[f64; 3]>,
    /// MCS of the baseline in `compare-mcs`.
    pub mcs: String,
}

impl Default for BclSection {
    fn default() -> Self {
        Self {
            tx_dbm: 33.0,
            d_m: None,
            n_p: 4,
            t_s: 1e-3,
            xi: XiSetting::Named("geometric".into()),
            expectations: None,
            mcs: "QPSK".into(),
        }
    }
}

/// Axes left empty fall back to the single value of the base settings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub tx_dbm: Option<Vec<f64>>,
    pub rho_km2: Option<Vec<f64>>,
    pub rach_slots: Option<Vec<u32>>,
    pub mcs: Option<Vec<String>>,
    pub ts_over_tp: Option<Vec<f64>>,
    pub strip_width_m: Option<Vec<f64>>,
    /// Coding gain applied to every MCS in `compare-mcs` (dB).
    pub coding_gain_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPacketSection {
    pub src_a: [f64; 2],
    pub src_b: [f64; 2],
    pub dst: [f64; 2],
    pub start_slot_b: usize,
    pub interference_radius_m: f64,
}

impl Default for TwoPacketSection {
    fn default() -> Self {
        Self {
            src_a: [0.0, 0.0],
            src_b: [0.0, 100.0],
            dst: [2000.0, 0.0],
            start_slot_b: 0,
            interference_radius_m: 500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub scenario: Scenario,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Worker threads; all available cores when 0.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub field: FieldSection,
    #[serde(default)]
    pub phy: PhySection,
    #[serde(default)]
    pub omr: OmrSection,
    #[serde(default)]
    pub bcl: BclSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub two_packets: TwoPacketSection,
}

fn default_seed() -> u64 {
    1
}

fn default_trials() -> usize {
    1000
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    /// 1-based line in the config text.
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.0 {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}

/// Line of `key` inside `[table]` (the root table when `table` is empty).
pub fn locate(text: &str, table: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line
                .trim_matches(|c| c == '[' || c == ']')
                .trim()
                .to_string();
            continue;
        }
        if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a config file.
pub fn validate_config(text: &str) -> Result<ExperimentFile, Diagnostics> {
    let file: ExperimentFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start));
        Diagnostics(vec![Diagnostic {
            line,
            key: "syntax".into(),
            message: e.message().to_string(),
        }])
    })?;
    let diags = check(&file, text);
    if diags.is_empty() {
        Ok(file)
    } else {
        Err(Diagnostics(diags))
    }
}

fn check(f: &ExperimentFile, text: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut req = |ok: bool, table: &str, key: &str, msg: &str| {
        if !ok {
            let name = if table.is_empty() {
                key.to_string()
            } else {
                format!("{table}.{key}")
            };
            out.push(Diagnostic {
                line: locate(text, table, key),
                key: name,
                message: msg.to_string(),
            });
        }
    };
    let fl = &f.field;
    req(f.trials >= 1, "", "trials", "must be >= 1");
    req(
        fl.rho_km2 > 0.0 && fl.rho_km2.is_finite(),
        "field",
        "rho_km2",
        "must be > 0",
    );
    req(
        fl.epsilon > 0.0 && fl.epsilon <= 1.0,
        "field",
        "epsilon",
        "duty cycle must lie in (0, 1]",
    );
    req(fl.length_m > 0.0, "field", "length_m", "must be > 0");
    req(
        fl.strip_width_m > 0.0,
        "field",
        "strip_width_m",
        "must be > 0",
    );
    req(fl.margin_m >= 0.0, "field", "margin_m", "must be >= 0");

    let p = &f.phy;
    req(p.carrier_hz > 0.0, "phy", "carrier_hz", "must be > 0");
    req(
        p.alpha >= 2.0,
        "phy",
        "alpha",
        "path-loss exponent must be >= 2",
    );
    req(p.subcarriers >= 1, "phy", "subcarriers", "must be >= 1");
    req(
        p.subcarrier_spacing_hz > 0.0,
        "phy",
        "subcarrier_spacing_hz",
        "must be > 0",
    );
    req(
        p.noise_power_w.is_none_or(|n| n > 0.0),
        "phy",
        "noise_power_w",
        "must be > 0",
    );
    req(p.tx_dbm.is_finite(), "phy", "tx_dbm", "must be finite");
    req(
        p.tau > 0.0 && p.tau < 1.0,
        "phy",
        "tau",
        "detection reliability must lie in (0, 1)",
    );
    req(
        p.gamma_t_db.is_finite(),
        "phy",
        "gamma_t_db",
        "must be finite",
    );
    req(p.packet_s > 0.0, "phy", "packet_s", "must be > 0");
    req(
        p.id_s >= 0.0 && p.id_s < p.packet_s,
        "phy",
        "id_s",
        "must lie in [0, packet_s)",
    );
    req(p.cp_s >= 0.0, "phy", "cp_s", "must be >= 0");
    req(p.rx_power_w >= 0.0, "phy", "rx_power_w", "must be >= 0");
    req(
        p.mcs.as_ref().is_none_or(|m| mcs(m).is_some()),
        "phy",
        "mcs",
        "unknown MCS; use QPSK, DQPSK, 8-DPSK or 16-DPSK",
    );
    req(p.data_rate_bps > 0.0, "phy", "data_rate_bps", "must be > 0");

    let o = &f.omr;
    let min_b = if f.scenario == Scenario::Analytic {
        3
    } else {
        2
    };
    req(
        o.rach_slots >= min_b,
        "omr",
        "rach_slots",
        if min_b == 3 {
            "B must be >= 3 for the analytic recursion"
        } else {
            "B must be >= 2"
        },
    );
    req(
        o.delta_w_m.is_none_or(|d| d >= 0.0),
        "omr",
        "delta_w_m",
        "must be >= 0",
    );
    req(
        (0.0..1.0).contains(&o.fa_rate),
        "omr",
        "fa_rate",
        "must lie in [0, 1)",
    );
    req(o.delta_r_m >= 0.0, "omr", "delta_r_m", "must be >= 0");
    req(o.rach_slot_s >= 0.0, "omr", "rach_slot_s", "must be >= 0");

    let b = &f.bcl;
    req(b.n_p >= 1, "bcl", "n_p", "must be >= 1");
    req(b.t_s > 0.0, "bcl", "t_s", "must be > 0");
    req(b.d_m.is_none_or(|d| d > 0.0), "bcl", "d_m", "must be > 0");
    req(
        match &b.xi {
            XiSetting::Fixed(x) => *x > 0.0 && *x <= 1.0,
            XiSetting::Named(s) => s == "geometric",
        },
        "bcl",
        "xi",
        "must be a number in (0, 1] or \"geometric\"",
    );
    req(
        b.expectations
            .is_none_or(|e| e.iter().all(|v| v.is_finite() && *v >= 0.0)),
        "bcl",
        "expectations",
        "must be three finite non-negative numbers",
    );
    req(mcs(&b.mcs).is_some(), "bcl", "mcs", "unknown MCS");

    let s = &f.sweep;
    let nonempty = |v: &Option<Vec<f64>>| v.as_ref().is_none_or(|v| !v.is_empty());
    req(
        nonempty(&s.tx_dbm),
        "sweep",
        "tx_dbm",
        "axis must not be empty",
    );
    req(
        nonempty(&s.rho_km2) && s.rho_km2.iter().flatten().all(|r| *r > 0.0),
        "sweep",
        "rho_km2",
        "axis must be non-empty with every density > 0",
    );
    req(
        s.rach_slots
            .as_ref()
            .is_none_or(|v| !v.is_empty() && v.iter().all(|b| *b >= min_b)),
        "sweep",
        "rach_slots",
        "axis must be non-empty with every B >= 2 (>= 3 for analytic)",
    );
    req(
        s.mcs
            .as_ref()
            .is_none_or(|v| !v.is_empty() && v.iter().all(|m| mcs(m).is_some())),
        "sweep",
        "mcs",
        "axis must be non-empty with known MCS names",
    );
    req(
        nonempty(&s.ts_over_tp) && s.ts_over_tp.iter().flatten().all(|r| *r > 0.0),
        "sweep",
        "ts_over_tp",
        "axis must be non-empty with every ratio > 0",
    );
    req(
        nonempty(&s.strip_width_m) && s.strip_width_m.iter().flatten().all(|w| *w > 0.0),
        "sweep",
        "strip_width_m",
        "axis must be non-empty with every width > 0",
    );
    let t = &f.two_packets;
    req(
        t.interference_radius_m >= 0.0,
        "two_packets",
        "interference_radius_m",
        "must be >= 0",
    );
    req(
        t.src_a != t.dst,
        "two_packets",
        "src_a",
        "must differ from dst",
    );
    req(
        t.src_b != t.dst,
        "two_packets",
        "src_b",
        "must differ from dst",
    );
    out
}

/// Command-line overrides of top-level keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl ExperimentFile {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.trials {
            self.trials = t;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
    }

    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.phy.subcarrier_spacing_hz + self.phy.cp_s
    }

    pub fn mcs_rate(&self, m: &McsEntry) -> f64 {
        m.data_rate(self.phy.subcarriers, self.symbol_duration())
    }

    /// PHY at the given transmit power with the base settings.
    pub fn phy_at(&self, tx_dbm: f64) -> PhyConfig {
        let p = &self.phy;
        let noise = p
            .noise_power_w
            .unwrap_or_else(|| thermal_noise(p.subcarrier_spacing_hz, p.noise_figure_db));
        let base = PhyConfig {
            wavelength: SPEED_OF_LIGHT / p.carrier_hz,
            alpha: p.alpha,
            subcarriers: p.subcarriers,
            noise_power: noise,
            tx_power: dbm_to_watts(tx_dbm),
            gamma_t: db_to_linear(p.gamma_t_db),
            tau: p.tau,
            mean_taps: p.mean_taps,
            cp_duration: p.cp_s,
            packet_duration: p.packet_s,
            id_duration: p.id_s,
            rx_power: p.rx_power_w,
            data_rate: p.data_rate_bps,
        };
        match &p.mcs {
            Some(m) => self.with_mcs(base, &mcs(m).expect("validated")),
            None => base,
        }
    }

    fn with_mcs(&self, phy: PhyConfig, m: &McsEntry) -> PhyConfig {
        PhyConfig {
            gamma_t: db_to_linear(m.effective_threshold_db()),
            data_rate: self.mcs_rate(m),
            ..phy
        }
    }

    /// PHY running `m` at its detection threshold less the coding gain.
    pub fn phy_with_mcs(&self, tx_dbm: f64, m: &McsEntry) -> PhyConfig {
        self.with_mcs(self.phy_at(tx_dbm), m)
    }

    pub fn field_at(&self, rho_km2: f64, strip_width: f64) -> FieldConfig {
        FieldConfig {
            rho: per_km2(rho_km2),
            epsilon: self.field.epsilon,
            length: self.field.length_m,
            strip_width,
            max_strip_width: strip_width,
            margin: self.field.margin_m,
        }
    }

    pub fn engine_at(
        &self,
        rho_km2: f64,
        strip_width: f64,
        phy: PhyConfig,
        rach_slots: u32,
    ) -> EngineConfig {
        let mut policy = RetransmitPolicy::for_width(strip_width);
        policy.max_retransmissions = self.omr.max_retransmissions;
        if let Some(d) = self.omr.delta_w_m {
            policy.delta_w = d;
        }
        policy.fa_rate = self.omr.fa_rate;
        let mut e = EngineConfig::new(self.field_at(rho_km2, strip_width), phy, policy, rach_slots);
        e.delta_r = self.omr.delta_r_m;
        e
    }

    /// Baseline PHY: the OMR settings at the baseline power.
    pub fn bcl_phy(&self) -> PhyConfig {
        self.phy_at(self.bcl.tx_dbm)
    }

    /// Baseline PHY for `compare-mcs`, running `bcl.mcs` with the sweep's
    /// coding gain.
    pub fn bcl_phy_mcs(&self) -> PhyConfig {
        let gain = self.sweep.coding_gain_db.unwrap_or(0.0);
        let m = mcs(&self.bcl.mcs)
            .expect("validated")
            .with_coding_gain(gain);
        self.phy_with_mcs(self.bcl.tx_dbm, &m)
    }

    /// Baseline config with `t_s` replaced when a `T_s/T_p` ratio is given.
    pub fn bcl_config(&self, phy: &PhyConfig, ts_over_tp: Option<f64>) -> BclConfig {
        let mut c = BclConfig::for_phy(phy);
        if let Some(d) = self.bcl.d_m {
            c.d_m = d;
        }
        c.n_p = self.bcl.n_p;
        c.t_s = ts_over_tp.map_or(self.bcl.t_s, |r| r * phy.packet_duration);
        c.xi = match self.bcl.xi {
            XiSetting::Fixed(x) => XiMode::Fixed(x),
            XiSetting::Named(_) => XiMode::Geometric,
        };
        c.expectations = match self.bcl.expectations {
            Some([eta, m_e, m_n]) => ExpectationMode::Supplied(Expectations { eta, m_e, m_n }),
            None => ExpectationMode::Simulated,
        };
        c
    }

    pub fn tx_axis(&self) -> Vec<f64> {
        self.sweep
            .tx_dbm
            .clone()
            .unwrap_or_else(|| vec![self.phy.tx_dbm])
    }

    pub fn rho_axis(&self) -> Vec<f64> {
        self.sweep
            .rho_km2
            .clone()
            .unwrap_or_else(|| vec![self.field.rho_km2])
    }

    pub fn b_axis(&self) -> Vec<u32> {
        self.sweep
            .rach_slots
            .clone()
            .unwrap_or_else(|| vec![self.omr.rach_slots])
    }

    pub fn mcs_axis(&self) -> Vec<McsEntry> {
        let gain = self.sweep.coding_gain_db.unwrap_or(0.0);
        self.sweep
            .mcs
            .clone()
            .unwrap_or_else(|| vec![self.phy.mcs.clone().unwrap_or_else(|| "DQPSK".into())])
            .iter()
            .map(|n| mcs(n).expect("validated").with_coding_gain(gain))
            .collect()
    }

    pub fn ts_axis(&self) -> Vec<Option<f64>> {
        self.sweep
            .ts_over_tp
            .as_ref()
            .map_or_else(|| vec![None], |v| v.iter().map(|r| Some(*r)).collect())
    }

    pub fn width_axis(&self) -> Vec<f64> {
        self.sweep
            .strip_width_m
            .clone()
            .unwrap_or_else(|| vec![self.field.strip_width_m])
    }

    pub fn two_packet_points(&self) -> [(Point2D, Point2D); 2] {
        let t = &self.two_packets;
        let p = |a: [f64; 2]| Point2D::new(a[0], a[1]);
        [(p(t.src_a), p(t.dst)), (p(t.src_b), p(t.dst))]
    }
}
