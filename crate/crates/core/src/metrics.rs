//! End-to-end cost assembly.
//!
//! The same formulas serve realized trial counts and analytic expectations;
//! [`CountMode`] records which one produced a figure.

use serde::{Deserialize, Serialize};

use crate::analytic::RecursionTable;
use crate::channel::PhyConfig;
use crate::engine::TrialResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    Realized,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopCost {
    pub energy: f64,
    pub hop_time: f64,
    pub retransmissions: f64,
}

/// Energy spent at one hop given the mean decoder count `E[L̃_i]`, the mean
/// transmitting relay count `E[K̃_{i-1}]` and the mean retransmissions.
pub fn hop_energy(e_l: f64, e_k_prev: f64, e_nr: f64, phy: &PhyConfig) -> f64 {
    let tp = phy.packet_duration;
    let tid = phy.id_duration;
    e_l * phy.rx_power * tp
        + (e_nr + 1.0) * e_k_prev * phy.tx_power * tp
        + (e_nr + 1.0) * e_k_prev * phy.rx_power * tid
        + (e_k_prev * tid + e_l * tp) * phy.busy_tone_power()
}

pub fn hop_cost(e_l: f64, e_k_prev: f64, e_nr: f64, phy: &PhyConfig) -> HopCost {
    HopCost {
        energy: hop_energy(e_l, e_k_prev, e_nr, phy),
        hop_time: phy.packet_duration * (1.0 + e_nr),
        retransmissions: e_nr,
    }
}

/// `T_p Σ (1 + E[n_r_i])` over the hops.
pub fn e2e_delay(retransmissions: &[f64], packet_duration: f64) -> f64 {
    packet_duration * retransmissions.iter().map(|n| 1.0 + n).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cost {
    /// Energy-delay product (J·s).
    pub edp: f64,
    /// EDP per transported packet payload `r·T_p` (J·s/bit).
    pub c_e2e: f64,
}

pub fn edp_and_cost(energy: f64, delay: f64, data_rate: f64, packet_duration: f64) -> Cost {
    let edp = energy * delay;
    Cost {
        edp,
        c_e2e: edp / (data_rate * packet_duration),
    }
}

/// `C_e2e(OMR) / C_e2e(BCL)`.
pub fn cost_ratio(omr: Cost, bcl: Cost) -> f64 {
    omr.c_e2e / bcl.c_e2e
}

/// End-to-end energy and delay of one delivery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndToEnd {
    pub mode: CountMode,
    pub energy: f64,
    pub delay: f64,
    /// Hops to the destination (mean over trials in realized mode).
    pub hops: f64,
    pub mean_retransmissions: f64,
    /// Trials that reached the destination, out of `trials`. Both are 0 in
    /// analytic mode.
    pub reached: usize,
    pub trials: usize,
}

impl EndToEnd {
    pub fn cost(&self, phy: &PhyConfig) -> Cost {
        edp_and_cost(self.energy, self.delay, phy.data_rate, phy.packet_duration)
    }
}

/// Energy and delay of one trial from its realized per-hop counts.
pub fn trial_energy_delay(trial: &TrialResult, phy: &PhyConfig) -> (f64, f64) {
    let energy = trial
        .hops
        .iter()
        .map(|h| {
            hop_energy(
                h.decoders as f64,
                h.k_prev as f64,
                h.retransmissions as f64,
                phy,
            )
        })
        .sum();
    let nr: Vec<f64> = trial
        .hops
        .iter()
        .map(|h| h.retransmissions as f64)
        .collect();
    (energy, e2e_delay(&nr, phy.packet_duration))
}

/// Means over the trials that reached the destination.
pub fn realized_end_to_end(trials: &[TrialResult], phy: &PhyConfig) -> Result<EndToEnd> {
    let ok: Vec<&TrialResult> = trials.iter().filter(|t| t.reached).collect();
    if ok.is_empty() {
        return Err(Error::Divergence("no trial reached the destination".into()));
    }
    let n = ok.len() as f64;
    let (mut energy, mut delay, mut hops, mut nr) = (0.0, 0.0, 0.0, 0.0);
    for t in &ok {
        let (e, d) = trial_energy_delay(t, phy);
        energy += e;
        delay += d;
        hops += t.q as f64;
        nr += t.hops.iter().map(|h| h.retransmissions as f64).sum::<f64>();
    }
    Ok(EndToEnd {
        mode: CountMode::Realized,
        energy: energy / n,
        delay: delay / n,
        hops: hops / n,
        mean_retransmissions: nr / hops,
        reached: ok.len(),
        trials: trials.len(),
    })
}

/// Energy and delay from the expected per-hop counts of the recursion.
pub fn analytic_end_to_end(table: &RecursionTable, phy: &PhyConfig) -> EndToEnd {
    let (l, kp, nr) = (table.mean_l(), table.mean_k_prev(), table.mean_nr());
    let energy = (0..table.q)
        .map(|i| hop_energy(l[i], kp[i], nr[i], phy))
        .sum();
    let nr = &nr[..table.q];
    EndToEnd {
        mode: CountMode::Analytic,
        energy,
        delay: e2e_delay(nr, phy.packet_duration),
        hops: table.q as f64,
        mean_retransmissions: nr.iter().sum::<f64>() / table.q.max(1) as f64,
        reached: 0,
        trials: 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    pub name: &'static str,
    /// Detection threshold at BER 1e-2, two-branch MRC, Gray coding (dB).
    pub detection_threshold_db: f64,
    pub bits_per_symbol: u32,
    pub coding_gain_db: f64,
}

impl McsEntry {
    pub fn effective_threshold_db(&self) -> f64 {
        self.detection_threshold_db - self.coding_gain_db
    }

    /// Bit rate for `subcarriers` parallel symbols of `symbol_duration`.
    pub fn data_rate(&self, subcarriers: u32, symbol_duration: f64) -> f64 {
        self.bits_per_symbol as f64 * subcarriers as f64 / symbol_duration
    }

    pub fn with_coding_gain(&self, gain_db: f64) -> Self {
        Self {
            coding_gain_db: gain_db,
            ..self.clone()
        }
    }
}

pub fn mcs_table() -> Vec<McsEntry> {
    vec![
        McsEntry {
            name: "QPSK",
            detection_threshold_db: 10.85,
            bits_per_symbol: 2,
            coding_gain_db: 0.0,
        },
        McsEntry {
            name: "DQPSK",
            detection_threshold_db: 12.8,
            bits_per_symbol: 2,
            coding_gain_db: 0.0,
        },
        McsEntry {
            name: "8-DPSK",
            detection_threshold_db: 15.6,
            bits_per_symbol: 3,
            coding_gain_db: 0.0,
        },
        McsEntry {
            name: "16-DPSK",
            detection_threshold_db: 18.5,
            bits_per_symbol: 4,
            coding_gain_db: 0.0,
        },
    ]
}

pub fn mcs(name: &str) -> Option<McsEntry> {
    mcs_table()
        .into_iter()
        .find(|m| m.name.eq_ignore_ascii_case(name))
}
