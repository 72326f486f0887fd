//! Contention-based beaconless forwarding baseline.
//!
//! The sender broadcasts an RTS. Awake neighbours that are closer to the
//! destination answer with a CTS in the slot given by their progress band,
//! best band first. A cycle with no awake candidate is repeated with fresh
//! wake draws. Candidates that collide in a slot split uniformly over the
//! slots of a new round until exactly one remains.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::PhyConfig;
use crate::error::{Error, Result};
use crate::field::{deploy_with, dist, FieldConfig, Point2D};
use crate::rng;

const MAX_HOPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectations {
    pub eta: f64,
    pub m_e: f64,
    pub m_n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ExpectationMode {
    /// Estimate `E[η]`, `E[m_e]`, `E[m_n]` by Monte Carlo.
    Simulated,
    /// Use the given expectations; hop counts are still simulated.
    Supplied(Expectations),
}

/// Fraction of in-range nodes that offer positive progress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XiMode {
    Fixed(f64),
    /// Measured over the simulated hops.
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BclConfig {
    /// Transmission range (m).
    pub d_m: f64,
    /// Slots per contention cycle.
    pub n_p: u32,
    /// RTS/CTS slot duration (s).
    pub t_s: f64,
    pub xi: XiMode,
    pub expectations: ExpectationMode,
    /// Empty cycles tolerated at one hop before the trial is declared failed.
    pub max_cycles: u32,
}

impl BclConfig {
    /// Range set to a lone transmitter's reach at `phy`'s transmit power.
    pub fn for_phy(phy: &PhyConfig) -> Self {
        Self {
            d_m: phy.single_hop_radius(),
            n_p: 4,
            t_s: 1e-3,
            xi: XiMode::Geometric,
            expectations: ExpectationMode::Simulated,
            max_cycles: 100_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.d_m > 0.0 && self.d_m.is_finite()) {
            return bad("d_m must be > 0");
        }
        if self.n_p == 0 {
            return bad("n_p must be >= 1");
        }
        if !(self.t_s > 0.0) {
            return bad("t_s must be > 0");
        }
        if let XiMode::Fixed(x) = self.xi {
            if !(x > 0.0 && x <= 1.0) {
                return bad("xi must lie in (0, 1]");
            }
        }
        if let ExpectationMode::Supplied(e) = self.expectations {
            if ![e.eta, e.m_e, e.m_n]
                .iter()
                .all(|v| v.is_finite() && *v >= 0.0)
            {
                return bad("supplied expectations must be finite and >= 0");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleOutcome {
    /// 1 for an empty cycle, else 0.
    pub eta: u32,
    pub m_e: u32,
    pub m_n: u32,
    /// Index into the candidate slice.
    pub winner: Option<usize>,
}

/// CTS slot of a candidate with the given progress; band 0 holds the
/// largest progress and band `b` covers `((1-(b+1)/N_p)d_m, (1-b/N_p)d_m]`.
pub fn progress_band(progress: f64, d_m: f64, n_p: u32) -> u32 {
    let b = ((d_m - progress) / d_m * n_p as f64).ceil() - 1.0;
    (b.max(0.0) as u32).min(n_p - 1)
}

/// One contention cycle among candidates with the given progress values.
pub fn contention_cycle<R: Rng + ?Sized>(
    progress: &[f64],
    d_m: f64,
    n_p: u32,
    rng: &mut R,
) -> CycleOutcome {
    if progress.is_empty() {
        return CycleOutcome {
            eta: 1,
            m_e: 0,
            m_n: 0,
            winner: None,
        };
    }
    let bands: Vec<u32> = progress
        .iter()
        .map(|&p| progress_band(p, d_m, n_p))
        .collect();
    let first = *bands.iter().min().expect("non-empty");
    let mut group: Vec<usize> = (0..progress.len()).filter(|&i| bands[i] == first).collect();
    let mut m_n = 1;
    // one slot per round would never separate colliders
    let slots = n_p.max(2);
    while group.len() > 1 {
        let picks: Vec<u32> = group.iter().map(|_| rng.random_range(0..slots)).collect();
        let s = *picks.iter().min().expect("non-empty");
        m_n += s + 1;
        group = group
            .iter()
            .zip(&picks)
            .filter(|(_, &p)| p == s)
            .map(|(&i, _)| i)
            .collect();
    }
    CycleOutcome {
        eta: 0,
        m_e: first,
        m_n,
        winner: Some(group[0]),
    }
}

/// Mean number of awake nodes inside the transmission disc, `ερπd_m²`.
pub fn awake_in_range(rho: f64, epsilon: f64, d_m: f64) -> f64 {
    epsilon * rho * PI * d_m * d_m
}

/// Sender-side handshake energy of one hop.
pub fn hop_energy_tx(
    e: &Expectations,
    xi: f64,
    awake: f64,
    cfg: &BclConfig,
    phy: &PhyConfig,
) -> f64 {
    let ns = phy.subcarriers as f64;
    let np = cfg.n_p as f64;
    phy.tx_power
        * cfg.t_s
        * ((e.m_e + 5.0 + e.eta * np) * ns
            + (1.0 + 2.0 * e.m_e * xi) * awake
            + 1.0
            + e.m_e
            + e.eta * np
            + xi * ns * awake / np
            + (2.0 + 3.0 * ns) * (e.m_n - 1.0))
        / ns
}

/// Listening energy of one hop.
pub fn hop_energy_rx(
    e: &Expectations,
    xi: f64,
    awake: f64,
    cfg: &BclConfig,
    phy: &PhyConfig,
) -> f64 {
    phy.rx_power
        * cfg.t_s
        * ((1.0 + 2.0 * xi * e.m_e) * awake
            + 2.0
            + e.m_e
            + e.eta * cfg.n_p as f64
            + 3.0 * (e.m_n - 1.0))
}

/// Handshake time of one hop.
pub fn hop_delay(e: &Expectations, cfg: &BclConfig) -> f64 {
    2.0 * (e.eta * cfg.n_p as f64 + e.m_e + e.m_n) * cfg.t_s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BclHop {
    pub eta: u32,
    pub m_e: u32,
    pub m_n: u32,
    /// Reduction of the distance to the destination (m).
    pub progress: f64,
    /// Nodes inside the disc.
    pub in_range: usize,
    /// Nodes inside the disc that are closer to the destination.
    pub positive: usize,
}

/// Contention at one hop. `positive` lists the progress of every in-range
/// node closer to the destination; `destination` is the destination's own
/// progress when it lies in range, and it is always awake.
///
/// Returns `None` when `max_cycles` empty cycles pass without a candidate.
pub fn hop_contention<R: Rng + ?Sized>(
    positive: &[f64],
    destination: Option<f64>,
    epsilon: f64,
    cfg: &BclConfig,
    rng: &mut R,
) -> Option<(CycleOutcome, u32, f64)> {
    let mut eta = 0u32;
    let mut awake = Vec::with_capacity(positive.len() + 1);
    loop {
        awake.clear();
        awake.extend(
            positive
                .iter()
                .copied()
                .filter(|_| rng.random_bool(epsilon)),
        );
        awake.extend(destination);
        let out = contention_cycle(&awake, cfg.d_m, cfg.n_p, rng);
        if out.winner.is_some() {
            let best = awake.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            return Some((out, eta, best));
        }
        eta += 1;
        if eta >= cfg.max_cycles {
            return None;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BclTrial {
    pub seed: u64,
    pub hops: Vec<BclHop>,
    pub reached: bool,
}

/// Field whose lateral extent holds a full transmission disc around the axis.
pub fn bcl_field(field: &FieldConfig, d_m: f64) -> FieldConfig {
    let mut f = field.clone();
    f.margin = f.margin.max(d_m);
    f.max_strip_width = f.max_strip_width.max(f.strip_width);
    f
}

/// One source-to-destination trial. The relay at each hop is the awake
/// candidate with the largest progress.
pub fn run_bcl_trial(cfg: &BclConfig, field: &FieldConfig, seed: u64) -> BclTrial {
    let field = bcl_field(field, cfg.d_m);
    let mut rng = rng::seeded(seed);
    let dep = deploy_with(&field, seed, &mut rng);
    let dst = field.destination();
    let mut sender = field.source();
    let mut hops = Vec::new();
    let mut positions: Vec<Point2D> = Vec::new();
    let mut positive: Vec<f64> = Vec::new();
    while hops.len() < MAX_HOPS {
        let to_dst = dist(sender, dst);
        positions.clear();
        positive.clear();
        let mut in_range = 0;
        for n in &dep.nodes[dep.x_range(sender.x - cfg.d_m, sender.x + cfg.d_m)] {
            let d = dist(n.pos, sender);
            if d > cfg.d_m || d == 0.0 {
                continue;
            }
            in_range += 1;
            let p = to_dst - dist(n.pos, dst);
            if p > 0.0 {
                positions.push(n.pos);
                positive.push(p);
            }
        }
        let dst_progress = (to_dst <= cfg.d_m).then_some(to_dst);
        if positive.is_empty() && dst_progress.is_none() {
            break;
        }
        let Some((out, eta, best)) =
            hop_contention(&positive, dst_progress, field.epsilon, cfg, &mut rng)
        else {
            break;
        };
        hops.push(BclHop {
            eta,
            m_e: out.m_e,
            m_n: out.m_n,
            progress: best,
            in_range,
            positive: positive.len(),
        });
        if dst_progress == Some(best) {
            return BclTrial {
                seed,
                hops,
                reached: true,
            };
        }
        let i = positive
            .iter()
            .position(|&p| p == best)
            .expect("winner is a candidate");
        sender = positions[i];
    }
    BclTrial {
        seed,
        hops,
        reached: false,
    }
}

pub fn run_bcl_trials(
    cfg: &BclConfig,
    field: &FieldConfig,
    base_seed: u64,
    n: usize,
) -> Vec<BclTrial> {
    use rayon::prelude::*;
    (0..n as u64)
        .into_par_iter()
        .map(|k| run_bcl_trial(cfg, field, rng::derive_seed(base_seed, k)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BclSummary {
    pub trials: usize,
    pub failures: usize,
    pub expectations: Expectations,
    pub xi: f64,
    pub mean_hops: f64,
    pub mean_progress: f64,
    pub energy_tx: f64,
    pub energy_rx: f64,
    /// Data packet transmission and reception per hop (J).
    pub energy_data: f64,
    pub hop_delay: f64,
    pub e2e_energy: f64,
    pub e2e_delay: f64,
}

/// Aggregates trials into end-to-end energy and delay. Each hop costs the
/// handshake formulas plus one data packet at `P_t + P_Rx` for `T_p`.
pub fn summarize(
    cfg: &BclConfig,
    field: &FieldConfig,
    phy: &PhyConfig,
    trials: &[BclTrial],
) -> Result<BclSummary> {
    let ok: Vec<&BclTrial> = trials.iter().filter(|t| t.reached).collect();
    if ok.is_empty() {
        return Err(Error::Divergence(
            "no beaconless trial reached the destination".into(),
        ));
    }
    let hops: Vec<&BclHop> = ok.iter().flat_map(|t| &t.hops).collect();
    let n = hops.len() as f64;
    let mean = |f: fn(&BclHop) -> f64| hops.iter().map(|h| f(h)).sum::<f64>() / n;
    let expectations = match cfg.expectations {
        ExpectationMode::Simulated => Expectations {
            eta: mean(|h| h.eta as f64),
            m_e: mean(|h| h.m_e as f64),
            m_n: mean(|h| h.m_n as f64),
        },
        ExpectationMode::Supplied(e) => e,
    };
    let xi = match cfg.xi {
        XiMode::Fixed(x) => x,
        XiMode::Geometric => {
            let inr: usize = hops.iter().map(|h| h.in_range).sum();
            let pos: usize = hops.iter().map(|h| h.positive).sum();
            if inr == 0 {
                1.0
            } else {
                pos as f64 / inr as f64
            }
        }
    };
    let awake = awake_in_range(field.rho, field.epsilon, cfg.d_m);
    let energy_tx = hop_energy_tx(&expectations, xi, awake, cfg, phy);
    let energy_rx = hop_energy_rx(&expectations, xi, awake, cfg, phy);
    let energy_data = (phy.tx_power + phy.rx_power) * phy.packet_duration;
    let delay = hop_delay(&expectations, cfg);
    let mean_hops = n / ok.len() as f64;
    Ok(BclSummary {
        trials: trials.len(),
        failures: trials.len() - ok.len(),
        expectations,
        xi,
        mean_hops,
        mean_progress: mean(|h| h.progress),
        energy_tx,
        energy_rx,
        energy_data,
        hop_delay: delay,
        e2e_energy: mean_hops * (energy_tx + energy_rx + energy_data),
        e2e_delay: mean_hops * (delay + phy.packet_duration),
    })
}

/// Simulates `n` trials and aggregates them.
pub fn run_bcl(
    cfg: &BclConfig,
    field: &FieldConfig,
    phy: &PhyConfig,
    base_seed: u64,
    n: usize,
) -> Result<BclSummary> {
    cfg.validate()?;
    field.validate()?;
    phy.validate()?;
    summarize(cfg, field, phy, &run_bcl_trials(cfg, field, base_seed, n))
}

/// Per-hop rows `trial_id,hop,eta,m_e,m_n,progress`.
pub fn write_hops<W: std::io::Write>(w: W, trials: &[BclTrial]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trial_id", "hop", "eta", "m_e", "m_n", "progress"])?;
    for (id, t) in trials.iter().enumerate() {
        for (h, hop) in t.hops.iter().enumerate() {
            out.write_record([
                id.to_string(),
                (h + 1).to_string(),
                hop.eta.to_string(),
                hop.m_e.to_string(),
                hop.m_n.to_string(),
                hop.progress.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
