//! Node deployment geometry.
//!
//! The source sits at the origin and the destination at `(L, 0)`; the
//! forwarding strip is the band `|y| <= w/2` around that axis. Nodes are a
//! homogeneous Poisson process over a rectangle that covers the widest strip
//! a packet can reach plus a margin on every side.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub const ORIGIN: Point2D = Point2D::new(0.0, 0.0);

    pub fn dist(&self, other: &Point2D) -> f64 {
        dist(*self, *other)
    }
}

/// Euclidean distance.
pub fn dist(a: Point2D, b: Point2D) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    /// Node density in nodes per m².
    pub rho: f64,
    /// Duty cycle, fraction of time a node is awake.
    pub epsilon: f64,
    /// Source to destination distance (m).
    pub length: f64,
    /// Initial strip width (m).
    pub strip_width: f64,
    /// Widest strip the retransmission policy can reach (m); the field is
    /// sized for this width.
    pub max_strip_width: f64,
    /// Extra field beyond the strip in every direction (m).
    pub margin: f64,
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be > 0");
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad("epsilon must lie in (0, 1]");
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return bad("length must be > 0");
        }
        if !(self.strip_width > 0.0) {
            return bad("strip_width must be > 0");
        }
        if self.max_strip_width < self.strip_width {
            return bad("max_strip_width must be >= strip_width");
        }
        if !(self.margin >= 0.0) {
            return bad("margin must be >= 0");
        }
        Ok(())
    }

    /// `(x_min, x_max, y_half)` of the deployed rectangle.
    pub fn extent(&self) -> (f64, f64, f64) {
        (
            -self.margin,
            self.length + self.margin,
            self.max_strip_width / 2.0 + self.margin,
        )
    }

    pub fn area(&self) -> f64 {
        let (x0, x1, yh) = self.extent();
        (x1 - x0) * 2.0 * yh
    }

    pub fn source(&self) -> Point2D {
        Point2D::ORIGIN
    }

    pub fn destination(&self) -> Point2D {
        Point2D::new(self.length, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub pos: Point2D,
    /// Offset into the sleep cycle as a fraction of the period, in `[0, 1)`.
    pub phase: f64,
}

/// A realized deployment. Nodes are stored sorted by `x` so that range
/// queries along the axis are a binary search.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub nodes: Vec<Node>,
    pub seed: u64,
}

impl Deployment {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Indices of nodes with `x` in `[lo, hi]`.
    pub fn x_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = self.nodes.partition_point(|n| n.pos.x < lo);
        let end = self.nodes.partition_point(|n| n.pos.x <= hi);
        start..end.max(start)
    }

    /// Number of nodes inside the axis-aligned rectangle.
    pub fn count_in(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> usize {
        self.nodes[self.x_range(x0, x1)]
            .iter()
            .filter(|n| n.pos.y >= y0 && n.pos.y <= y1)
            .count()
    }
}

/// Poisson field over [`FieldConfig::extent`], reproducible from `seed`.
pub fn deploy(cfg: &FieldConfig, seed: u64) -> Deployment {
    let mut rng = rng::seeded(seed);
    deploy_with(cfg, seed, &mut rng)
}

pub fn deploy_with<R: Rng + ?Sized>(cfg: &FieldConfig, seed: u64, rng: &mut R) -> Deployment {
    let (x0, x1, yh) = cfg.extent();
    let mean = cfg.rho * cfg.area();
    let n = if mean > 0.0 {
        Poisson::new(mean)
            .map(|p| p.sample(rng) as usize)
            .unwrap_or(0)
    } else {
        0
    };
    let mut nodes: Vec<Node> = (0..n)
        .map(|_| Node {
            pos: Point2D::new(rng.random_range(x0..x1), rng.random_range(-yh..yh)),
            phase: rng.random::<f64>(),
        })
        .collect();
    nodes.sort_by(|a, b| a.pos.x.total_cmp(&b.pos.x));
    Deployment { nodes, seed }
}

/// Non-synchronized square-wave sleep schedule.
///
/// Each node sleeps for `sleep_duration` and is awake for the rest of a
/// period `sleep_duration / (1 - epsilon)`, so the long-run awake fraction
/// is exactly `epsilon`. The node's phase shifts its cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SleepSchedule {
    pub epsilon: f64,
    pub sleep_duration: f64,
}

impl SleepSchedule {
    pub fn new(epsilon: f64, sleep_duration: f64) -> Self {
        Self {
            epsilon,
            sleep_duration,
        }
    }

    pub fn period(&self) -> f64 {
        if self.epsilon >= 1.0 {
            f64::INFINITY
        } else {
            self.sleep_duration / (1.0 - self.epsilon)
        }
    }

    pub fn is_awake(&self, node: &Node, t: f64) -> bool {
        if self.epsilon >= 1.0 {
            return true;
        }
        let period = self.period();
        let awake = self.epsilon * period;
        (t + node.phase * period).rem_euclid(period) < awake
    }

    /// Asleep at `t` but awake at some point before `t + window`.
    pub fn wakes_during(&self, node: &Node, t: f64, window: f64) -> bool {
        if self.is_awake(node, t) {
            return false;
        }
        let period = self.period();
        let pos = (t + node.phase * period).rem_euclid(period);
        // asleep means pos is in [awake, period); wake at the next period start
        period - pos < window
    }
}

/// Forwarding strip of width `width` centred on the source-destination axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strip {
    pub width: f64,
}

impl Strip {
    pub fn contains(&self, p: Point2D) -> bool {
        in_strip(p, self.width)
    }
}

/// Closed membership test `|y| <= w/2`.
pub fn in_strip(p: Point2D, width: f64) -> bool {
    p.y.abs() <= width / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(rho: f64) -> FieldConfig {
        FieldConfig {
            rho,
            epsilon: 0.25,
            length: 2000.0,
            strip_width: 200.0,
            max_strip_width: 200.0,
            margin: 0.0,
        }
    }

    #[test]
    fn distance_basics() {
        let a = Point2D::new(0.0, 0.0);
        let b = Point2D::new(3.0, 4.0);
        assert_eq!(dist(a, b), 5.0);
        assert_eq!(dist(b, b), 0.0);
        assert_eq!(dist(a, b), dist(b, a));
    }

    #[test]
    fn strip_membership() {
        assert!(in_strip(Point2D::new(100.0, 0.0), 200.0));
        assert!(!in_strip(Point2D::new(100.0, 100.0001), 200.0));
        assert!(in_strip(Point2D::new(100.0, 100.0), 200.0));
        assert!(in_strip(Point2D::new(100.0, -100.0), 200.0));
        assert!(Strip { width: 50.0 }.contains(Point2D::new(0.0, -25.0)));
    }

    #[test]
    fn paper_density_mean_count() {
        // 1500 per km² over 0.2 km x 2 km
        let c = cfg(1500e-6);
        assert!((c.rho * c.area() - 600.0).abs() < 1e-9);
    }

    #[test]
    fn deploy_is_deterministic() {
        let c = cfg(1e-4);
        assert_eq!(deploy(&c, 7), deploy(&c, 7));
        assert_ne!(deploy(&c, 7).nodes, deploy(&c, 8).nodes);
    }

    #[test]
    fn nodes_inside_extent_and_sorted() {
        let mut c = cfg(1e-3);
        c.margin = 50.0;
        let d = deploy(&c, 3);
        let (x0, x1, yh) = c.extent();
        assert!(d.nodes.windows(2).all(|w| w[0].pos.x <= w[1].pos.x));
        for n in &d.nodes {
            assert!(n.pos.x >= x0 && n.pos.x < x1);
            assert!(n.pos.y.abs() <= yh);
            assert!((0.0..1.0).contains(&n.phase));
        }
        let r = d.x_range(100.0, 200.0);
        assert!(d.nodes[r.clone()]
            .iter()
            .all(|n| n.pos.x >= 100.0 && n.pos.x <= 200.0));
        let brute = d
            .nodes
            .iter()
            .filter(|n| n.pos.x >= 100.0 && n.pos.x <= 200.0)
            .count();
        assert_eq!(r.len(), brute);
    }

    #[test]
    fn tiny_density_mostly_empty() {
        // rho*A = 0.05 -> P[N=0] = e^-0.05
        let mut c = cfg(1.0);
        c.rho = 0.05 / c.area();
        let trials = 20_000;
        let empty = (0..trials).filter(|&s| deploy(&c, s).is_empty()).count();
        let p = empty as f64 / trials as f64;
        let expect = (-0.05f64).exp();
        let se = (expect * (1.0 - expect) / trials as f64).sqrt();
        assert!((p - expect).abs() < 4.0 * se, "{p} vs {expect}");
    }

    #[test]
    fn poisson_count_moments() {
        // rho*A = 50 over 10^4 seeds: mean and variance both 50
        let mut c = cfg(1.0);
        c.rho = 50.0 / c.area();
        let n = 10_000usize;
        let counts: Vec<f64> = (0..n as u64).map(|s| deploy(&c, s).len() as f64).collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let var = counts.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_mean = (50.0 / n as f64).sqrt();
        // Var of the sample variance for Poisson: (mu + 2 mu^2) / n
        let se_var = ((50.0 + 2.0 * 2500.0) / n as f64).sqrt();
        assert!((mean - 50.0).abs() < 3.0 * se_mean, "mean {mean}");
        assert!((var - 50.0).abs() < 3.0 * se_var, "var {var}");
    }

    #[test]
    fn sub_rectangle_counts_are_poisson() {
        let mut c = cfg(1.0);
        c.rho = 200.0 / c.area();
        let sub_area = 400.0 * 100.0;
        let mu = c.rho * sub_area;
        let n = 4000usize;
        let counts: Vec<f64> = (0..n as u64)
            .map(|s| deploy(&c, s).count_in(500.0, 900.0, -50.0, 50.0) as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let var = counts.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - mu).abs() < 3.0 * (mu / n as f64).sqrt());
        assert!((var - mu).abs() < 3.0 * ((mu + 2.0 * mu * mu) / n as f64).sqrt());
    }

    #[test]
    fn always_awake_at_full_duty() {
        let s = SleepSchedule::new(1.0, 0.01);
        let node = Node {
            pos: Point2D::ORIGIN,
            phase: 0.7,
        };
        assert!((0..100).all(|k| s.is_awake(&node, k as f64 * 0.0037)));
    }

    #[test]
    fn awake_fraction_matches_duty_cycle() {
        let s = SleepSchedule::new(0.25, 0.01);
        let node = Node {
            pos: Point2D::ORIGIN,
            phase: 0.3141,
        };
        let steps = 200_000;
        let horizon = 50.0;
        let awake = (0..steps)
            .filter(|k| s.is_awake(&node, *k as f64 * horizon / steps as f64))
            .count();
        let frac = awake as f64 / steps as f64;
        assert!((frac - 0.25).abs() < 0.01, "{frac}");
    }

    #[test]
    fn sleep_block_equals_sleep_duration() {
        let tp = 0.01;
        let s = SleepSchedule::new(0.25, tp);
        let node = Node {
            pos: Point2D::ORIGIN,
            phase: 0.0,
        };
        // awake on [0, eps*P), asleep on [eps*P, P) with P - eps*P = T_p
        let p = s.period();
        assert!((p * (1.0 - 0.25) - tp).abs() < 1e-15);
        assert!(s.is_awake(&node, 0.0));
        assert!(!s.is_awake(&node, 0.25 * p + 1e-9));
        assert!(s.is_awake(&node, p + 1e-9));
    }

    #[test]
    fn late_waker_detected() {
        let s = SleepSchedule::new(0.25, 0.01);
        let node = Node {
            pos: Point2D::ORIGIN,
            phase: 0.0,
        };
        let p = s.period();
        // asleep at 0.9P, wakes at P, within a window of T_p
        assert!(!s.is_awake(&node, 0.9 * p));
        assert!(s.wakes_during(&node, 0.9 * p, 0.01));
        assert!(!s.wakes_during(&node, 0.3 * p, 0.5 * 0.01));
    }
}
