//! Two packets forwarded at the same time over one deployment.
//!
//! Each flow runs the ordinary forwarding state machine in its own frame,
//! with its source at the origin and its destination on the positive x
//! axis. The flows advance in lock-step, one transmission slot each, and the
//! transmitters of one flow within `interference_radius` of a receiver add
//! to that receiver's noise floor while the other flow listens. This is a
//! coarse mean-power model; the engine tags a failed attempt as
//! interference-caused when the same attempt would have found relays with
//! no interference.

use serde::{Deserialize, Serialize};

use crate::channel::{mean_sinr, sigma_s2};
use crate::engine::{EngineConfig, Flow, FlowStatus, TrialResult};
use crate::error::{Error, Result};
use crate::field::{deploy_with, dist, Deployment, Node, Point2D};
use crate::rng;

/// Slot cap per flow; a flow needs at most `(1 + n_max)` slots per hop.
const MAX_SLOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub src: Point2D,
    pub dst: Point2D,
    /// Slot at which the source starts transmitting.
    pub start_slot: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoFlowConfig {
    /// Shared PHY, policy and density. `engine.field` also fixes the
    /// deployed rectangle, which must contain both flows' strips.
    pub engine: EngineConfig,
    pub flows: [FlowSpec; 2],
    /// Transmitters farther than this from a receiver do not interfere (m).
    pub interference_radius: f64,
}

impl TwoFlowConfig {
    pub fn validate(&self) -> Result<()> {
        self.engine.validate()?;
        if !(self.interference_radius >= 0.0) {
            return Err(Error::InvalidConfig(
                "interference_radius must be >= 0".into(),
            ));
        }
        for f in &self.flows {
            if dist(f.src, f.dst) == 0.0 {
                return Err(Error::InvalidConfig(
                    "flow source and destination coincide".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Rigid transform from world coordinates into a flow's frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    origin: Point2D,
    cos: f64,
    sin: f64,
}

impl Frame {
    pub fn new(src: Point2D, dst: Point2D) -> Self {
        let d = dist(src, dst);
        Self {
            origin: src,
            cos: (dst.x - src.x) / d,
            sin: (dst.y - src.y) / d,
        }
    }

    pub fn to_local(&self, p: Point2D) -> Point2D {
        let (dx, dy) = (p.x - self.origin.x, p.y - self.origin.y);
        Point2D::new(
            dx * self.cos + dy * self.sin,
            -dx * self.sin + dy * self.cos,
        )
    }

    pub fn to_world(&self, p: Point2D) -> Point2D {
        Point2D::new(
            self.origin.x + p.x * self.cos - p.y * self.sin,
            self.origin.y + p.x * self.sin + p.y * self.cos,
        )
    }

    fn deployment(&self, dep: &Deployment) -> Deployment {
        let mut nodes: Vec<Node> = dep
            .nodes
            .iter()
            .map(|n| Node {
                pos: self.to_local(n.pos),
                phase: n.phase,
            })
            .collect();
        nodes.sort_by(|a, b| a.pos.x.total_cmp(&b.pos.x));
        Deployment {
            nodes,
            seed: dep.seed,
        }
    }
}

/// The transmitters of one flow in one slot, in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub slot: usize,
    pub flow: usize,
    pub hop: usize,
    /// Failed attempts so far at this hop.
    pub attempt: u32,
    pub transmitters: Vec<Point2D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoFlowResult {
    pub seed: u64,
    pub flows: [TrialResult; 2],
    pub snapshots: Vec<Snapshot>,
    /// Slots until both flows stopped.
    pub slots: usize,
}

impl TwoFlowResult {
    pub fn both_reached(&self) -> bool {
        self.flows.iter().all(|f| f.reached)
    }

    /// Retransmissions tagged as caused by the other flow, per flow.
    pub fn interference_retransmissions(&self) -> [u32; 2] {
        self.flows
            .each_ref()
            .map(|f| f.hops.iter().map(|h| h.interference_retransmissions).sum())
    }
}

fn inr_at(p: Point2D, interferers: &[Point2D], radius: f64, cfg: &EngineConfig) -> f64 {
    let near: Vec<Point2D> = interferers
        .iter()
        .copied()
        .filter(|q| dist(p, *q) <= radius)
        .collect();
    if near.is_empty() {
        return 0.0;
    }
    match sigma_s2(p, &near, &cfg.phy) {
        Ok(s) => mean_sinr(s, &cfg.phy),
        // a receiver on top of an interferer hears nothing else
        Err(_) => f64::INFINITY,
    }
}

pub fn run_two_flows(cfg: &TwoFlowConfig, seed: u64) -> TwoFlowResult {
    let mut rng = rng::seeded(seed);
    let world = deploy_with(&cfg.engine.field, seed, &mut rng);
    let frames = cfg.flows.map(|f| Frame::new(f.src, f.dst));
    let deps = frames.each_ref().map(|fr| fr.deployment(&world));
    let mut flows: Vec<Flow> = (0..2)
        .map(|k| {
            let spec = cfg.flows[k];
            let dst = frames[k].to_local(spec.dst);
            let t0 = spec.start_slot as f64 * cfg.engine.phy.packet_duration;
            Flow::new(&cfg.engine, &deps[k], Point2D::ORIGIN, dst, k as u64, t0)
        })
        .collect();
    let mut rngs = [rng::trial_rng(seed, 1), rng::trial_rng(seed, 2)];
    let mut snapshots = Vec::new();
    let mut slot = 0;
    let active = |flows: &[Flow], k: usize, slot: usize| {
        !flows[k].is_done() && slot >= cfg.flows[k].start_slot
    };
    while slot < MAX_SLOTS && flows.iter().any(|f| !f.is_done()) {
        let tx: Vec<Vec<Point2D>> = (0..2)
            .map(|k| {
                if active(&flows, k, slot) {
                    flows[k]
                        .transmitters()
                        .into_iter()
                        .map(|p| frames[k].to_world(p))
                        .collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        for k in 0..2 {
            if !active(&flows, k, slot) {
                continue;
            }
            snapshots.push(Snapshot {
                slot,
                flow: k,
                hop: flows[k].header.hop_index,
                attempt: flows[k].attempt(),
                transmitters: tx[k].clone(),
            });
            let other = &tx[1 - k];
            let frame = frames[k];
            let engine = &cfg.engine;
            let radius = cfg.interference_radius;
            flows[k].step(&deps[k], &mut rngs[k], |p| {
                inr_at(frame.to_world(p), other, radius, engine)
            });
        }
        slot += 1;
    }
    for f in flows.iter_mut() {
        if !f.is_done() {
            f.status = FlowStatus::Failed;
        }
    }
    let mut it = flows
        .into_iter()
        .enumerate()
        .map(|(k, f)| f.finish(seed, deps[k].len()));
    let flows = [it.next().expect("two flows"), it.next().expect("two flows")];
    TwoFlowResult {
        seed,
        flows,
        snapshots,
        slots: slot,
    }
}

/// Snapshot rows `slot,flow,hop,attempt,x,y`, one per transmitter.
pub fn write_snapshots<W: std::io::Write>(w: W, res: &TwoFlowResult) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["slot", "flow", "hop", "attempt", "x", "y"])?;
    for s in &res.snapshots {
        for p in &s.transmitters {
            out.write_record([
                s.slot.to_string(),
                s.flow.to_string(),
                s.hop.to_string(),
                s.attempt.to_string(),
                p.x.to_string(),
                p.y.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PhyConfig;
    use crate::engine::RetransmitPolicy;
    use crate::field::FieldConfig;

    fn cfg(b_src: Point2D, b_dst: Point2D, margin: f64) -> TwoFlowConfig {
        let field = FieldConfig {
            rho: 1500e-6,
            epsilon: 0.25,
            length: 1000.0,
            strip_width: 200.0,
            max_strip_width: 200.0,
            margin,
        };
        TwoFlowConfig {
            engine: EngineConfig::new(
                field,
                PhyConfig::default().with_tx_dbm(24.0),
                RetransmitPolicy::for_width(200.0),
                16,
            ),
            flows: [
                FlowSpec {
                    src: Point2D::new(0.0, 0.0),
                    dst: Point2D::new(1000.0, 0.0),
                    start_slot: 0,
                },
                FlowSpec {
                    src: b_src,
                    dst: b_dst,
                    start_slot: 0,
                },
            ],
            interference_radius: 400.0,
        }
    }

    #[test]
    fn frame_round_trip() {
        let f = Frame::new(Point2D::new(10.0, -5.0), Point2D::new(-30.0, 25.0));
        let local_dst = f.to_local(Point2D::new(-30.0, 25.0));
        assert!((local_dst.x - 50.0).abs() < 1e-9 && local_dst.y.abs() < 1e-9);
        let p = Point2D::new(3.5, 7.25);
        let q = f.to_world(f.to_local(p));
        assert!(dist(p, q) < 1e-9);
    }

    #[test]
    fn disjoint_flows_do_not_interfere() {
        // 1.5 km apart with a 400 m interference radius
        let c = cfg(
            Point2D::new(0.0, 1500.0),
            Point2D::new(1000.0, 1500.0),
            1700.0,
        );
        for seed in 0..3 {
            let r = run_two_flows(&c, seed);
            assert_eq!(r.interference_retransmissions(), [0, 0]);
        }
    }

    #[test]
    fn isolated_flow_matches_single_flow_engine() {
        // with no interference a flow's trace is independent of the other flow
        let c = cfg(
            Point2D::new(0.0, 1500.0),
            Point2D::new(1000.0, 1500.0),
            1700.0,
        );
        let mut c0 = c.clone();
        c0.interference_radius = 0.0;
        let a = run_two_flows(&c, 4);
        let b = run_two_flows(&c0, 4);
        assert_eq!(a.flows, b.flows);
    }

    #[test]
    fn overlapping_flows_terminate_deterministically() {
        let c = cfg(Point2D::new(0.0, 80.0), Point2D::new(1000.0, 0.0), 300.0);
        let a = run_two_flows(&c, 1);
        let b = run_two_flows(&c, 1);
        assert_eq!(a, b);
        assert!(a.flows.iter().all(|f| f.reached || !f.hops.is_empty()));
        assert!(a.slots < MAX_SLOTS);
        let mut buf = Vec::new();
        write_snapshots(&mut buf, &a).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("slot,flow,hop,attempt,x,y"));
    }
}
