//! Statistical model of OMR hop dynamics.
//!
//! Relay and decoder counts are carried as truncated integer distributions
//! and propagated hop by hop. Coverage contours follow a linear progress law
//! in the transmitting relay count and are drawn as circular arcs; decision
//! contours are arcs about the destination placed by a nearest-neighbour
//! distance estimate.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{detection_constant, DetectionConstant};
use crate::engine::{EngineConfig, TrialResult};
use crate::error::{Error, Result};

pub const TAIL_TOL: f64 = 1e-9;
pub const SUPPORT_CAP: usize = 4096;

/// Mixture weights below this are skipped; their mass is recovered by
/// renormalization.
const NEGLIGIBLE: f64 = 1e-12;

/// Probability mass function over `0..len`, with a bound on the mass lost to
/// truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntDist {
    pmf: Vec<f64>,
    tail: f64,
}

impl IntDist {
    pub fn point(k: usize) -> Self {
        let mut pmf = vec![0.0; k + 1];
        pmf[k] = 1.0;
        Self { pmf, tail: 0.0 }
    }

    pub fn from_pmf(pmf: Vec<f64>) -> Result<Self> {
        if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Domain(
                "pmf entries must be finite and non-negative".into(),
            ));
        }
        let tail = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
        Ok(Self { pmf, tail })
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn get(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }

    pub fn support_len(&self) -> usize {
        self.pmf.len()
    }

    pub fn tail_mass_bound(&self) -> f64 {
        self.tail
    }

    pub fn total(&self) -> f64 {
        self.pmf.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum::<f64>()
            / self.total()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.pmf
            .iter()
            .enumerate()
            .map(|(k, p)| (k as f64 - m).powi(2) * p)
            .sum::<f64>()
            / self.total()
    }

    /// Nonzero entries as `(k, p)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.pmf
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, p)| *p > 0.0)
    }

    /// Drops the longest suffix whose mass is below `tol`, then renormalizes.
    pub fn trimmed(mut self, tol: f64) -> Self {
        let mut cut = 0.0;
        while self.pmf.len() > 1 {
            let last = *self.pmf.last().unwrap();
            if cut + last >= tol {
                break;
            }
            cut += last;
            self.pmf.pop();
        }
        self.tail += cut;
        self.normalized()
    }

    pub fn normalized(mut self) -> Self {
        let t = self.total();
        if t > 0.0 {
            self.pmf.iter_mut().for_each(|p| *p /= t);
        }
        self
    }

    pub fn convolve(&self, other: &Self, tol: f64, cap: usize) -> Result<Self> {
        let mut out = vec![0.0; self.pmf.len() + other.pmf.len() - 1];
        for (a, pa) in self.iter() {
            for (b, pb) in other.iter() {
                out[a + b] += pa * pb;
            }
        }
        let d = Self {
            pmf: out,
            tail: self.tail + other.tail,
        }
        .trimmed(tol);
        d.capped(cap)
    }

    /// Conditions on a nonzero value.
    pub fn zero_truncated(&self) -> Result<Self> {
        let rest = self.total() - self.get(0);
        if rest <= 0.0 {
            return Err(Error::Domain("distribution has no mass above zero".into()));
        }
        let mut pmf = self.pmf.clone();
        pmf[0] = 0.0;
        Ok(Self {
            pmf,
            tail: self.tail,
        }
        .normalized())
    }

    /// Normalization check: total in `[1 - tol, 1]` up to rounding.
    pub fn check(&self, tol: f64) -> Result<()> {
        let t = self.total();
        if t < 1.0 - tol || t > 1.0 + 1e-12 {
            return Err(Error::Domain(format!(
                "distribution total {t} outside [1 - {tol}, 1]"
            )));
        }
        Ok(())
    }

    fn capped(self, cap: usize) -> Result<Self> {
        if self.pmf.len() > cap {
            let tail = self.pmf[cap..].iter().sum();
            return Err(Error::Truncation { cap, tail });
        }
        Ok(self)
    }
}

pub fn poisson_pmf(n: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let ln_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
    (n as f64 * mean.ln() - mean - ln_fact).exp()
}

/// Adds `w · Poisson(mean)` into `acc`, truncated where the remaining tail
/// is below `tol`.
fn add_poisson(acc: &mut Vec<f64>, w: f64, mean: f64, tol: f64, cap: usize) -> Result<()> {
    if mean <= 0.0 {
        if acc.is_empty() {
            acc.push(0.0);
        }
        acc[0] += w;
        return Ok(());
    }
    // multiplicative recurrence while e^-mean is representable
    let log_space = mean > 700.0;
    let ln_m = mean.ln();
    let mut lp = -mean;
    let mut p = (-mean).exp();
    let mut cum = 0.0;
    let mut k = 0usize;
    loop {
        if log_space {
            p = lp.exp();
        }
        if acc.len() <= k {
            acc.push(0.0);
        }
        acc[k] += w * p;
        cum += p;
        if k as f64 > mean && 1.0 - cum < tol {
            return Ok(());
        }
        k += 1;
        if k >= cap {
            return Err(Error::Truncation {
                cap,
                tail: 1.0 - cum,
            });
        }
        if log_space {
            lp += ln_m - (k as f64).ln();
        } else {
            p *= mean / k as f64;
        }
    }
}

pub fn poisson_dist(mean: f64, tol: f64, cap: usize) -> Result<IntDist> {
    let mut pmf = Vec::new();
    add_poisson(&mut pmf, 1.0, mean, tol, cap)?;
    Ok(IntDist { pmf, tail: 0.0 }.trimmed(tol))
}

/// Recursive resolvability term for `K` relays and `B` slots.
pub fn p_z(z: usize, k: usize, b: u32) -> f64 {
    let bf = b as f64;
    let p1 = ((bf - 1.0) / bf).powi(k as i32 - 1);
    if z <= 1 {
        return p1;
    }
    if z + 1 >= b as usize {
        return 0.0;
    }
    (2..=z).fold(p1, |p, zz| {
        let zf = zz as f64;
        p * ((bf - zf) / (bf - zf + 1.0)).powi(k as i32 - zz as i32)
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Probability that relay `j` is the first resolvable one among `k`, from
/// the inclusion-exclusion closed form with `p_z` evaluated at `B - 1`.
///
/// The `j = 0` branch carries the binomial `C(-1, z) = (-1)^z` and is not a
/// probability; [`j_pmf`] replaces it by the complement.
pub fn p_j(j: usize, k: usize, b: u32) -> Result<f64> {
    if k < 1 || b < 3 || j > k {
        return Err(Error::Domain(format!(
            "p_j needs K >= 1, B >= 3, j <= K (got j={j}, K={k}, B={b})"
        )));
    }
    let bm = b - 1;
    if j == 0 {
        return Ok(1.0 + (1..=k).map(|z| p_z(z, k, bm)).sum::<f64>());
    }
    let bf = b as f64;
    let head = ((bf - 1.0) / bf).powi(k as i32 - 1);
    let inner: f64 = 1.0
        + (1..j)
            .map(|z| {
                let sign = if z % 2 == 1 { -1.0 } else { 1.0 };
                sign * binomial(j - 1, z) * p_z(z, k, bm)
            })
            .sum::<f64>();
    Ok(head * inner)
}

/// Pmf of `j` over `0..=k`: closed-form values for `j >= 1` clamped to
/// `[0, 1]`, the complement at `j = 0`.
pub fn j_pmf(k: usize, b: u32) -> Result<Vec<f64>> {
    let mut pmf = vec![0.0; k + 1];
    for (j, p) in pmf.iter_mut().enumerate().skip(1) {
        *p = p_j(j, k, b)?.clamp(0.0, 1.0);
    }
    let s: f64 = pmf.iter().sum();
    if s > 1.0 {
        pmf.iter_mut().for_each(|p| *p /= s);
    } else {
        pmf[0] = 1.0 - s;
    }
    Ok(pmf)
}

/// Linear hop-progress law `Δx_H = φ·K̃ + β·U^(-1/α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressModel {
    /// Metres per transmitting relay.
    pub varphi: f64,
    pub beta: f64,
    pub u: DetectionConstant,
    pub alpha: f64,
}

impl ProgressModel {
    /// Single-transmitter reach `x_H_1(0) = U^(-1/α)`.
    pub fn r1(&self) -> f64 {
        self.u.radius(self.alpha)
    }

    pub fn step(&self, x_prev: f64, k_prev: f64) -> f64 {
        x_prev + self.varphi * k_prev + self.beta * self.r1()
    }

    /// `x_H_i(0)` for `i = ks.len() + 1` given `K̃_1..K̃_{i-1}`.
    pub fn closed_form(&self, ks: &[f64]) -> f64 {
        self.varphi * ks.iter().sum::<f64>() + ks.len() as f64 * self.beta * self.r1() + self.r1()
    }
}

pub fn x_h_step(x_prev: f64, k_prev: f64, model: &ProgressModel) -> f64 {
    model.step(x_prev, k_prev)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub model: ProgressModel,
    /// Mean absolute percentage error of the fit over the samples, in percent.
    pub mape: f64,
    /// Same, against the per-count sample means (counts with at least
    /// [`MIN_BIN`] samples), in percent.
    pub binned_mape: f64,
    pub samples: usize,
}

pub const MIN_BIN: usize = 30;

/// Least-squares fit of `(K̃_{i-1}, Δx_H_i(0))` pairs.
pub fn fit_progress(
    samples: &[(f64, f64)],
    u: DetectionConstant,
    alpha: f64,
) -> Result<Calibration> {
    let n = samples.len() as f64;
    let (mk, mx) = samples
        .iter()
        .fold((0.0, 0.0), |(a, b), (k, x)| (a + k / n, b + x / n));
    let skk: f64 = samples.iter().map(|(k, _)| (k - mk).powi(2)).sum();
    if samples.len() < 2 || skk == 0.0 {
        return Err(Error::Calibration(
            "samples must span at least two relay counts".into(),
        ));
    }
    let skx: f64 = samples.iter().map(|(k, x)| (k - mk) * (x - mx)).sum();
    let varphi = skx / skk;
    let intercept = mx - varphi * mk;
    let model = ProgressModel {
        varphi,
        beta: intercept / u.radius(alpha),
        u,
        alpha,
    };
    let errs: Vec<f64> = samples
        .iter()
        .filter(|(_, x)| *x != 0.0)
        .map(|(k, x)| ((varphi * k + intercept - x) / x).abs())
        .collect();
    let mape = 100.0 * errs.iter().sum::<f64>() / errs.len().max(1) as f64;
    let mut bins: std::collections::BTreeMap<i64, (f64, usize)> = Default::default();
    for (k, x) in samples {
        let e = bins.entry(k.round() as i64).or_default();
        e.0 += x;
        e.1 += 1;
    }
    let binned: Vec<f64> = bins
        .iter()
        .filter(|(_, (sum, n))| *n >= MIN_BIN && *sum != 0.0)
        .map(|(k, (sum, n))| {
            let mean = sum / *n as f64;
            ((varphi * *k as f64 + intercept - mean) / mean).abs()
        })
        .collect();
    let binned_mape = if binned.is_empty() {
        f64::NAN
    } else {
        100.0 * binned.iter().sum::<f64>() / binned.len() as f64
    };
    Ok(Calibration {
        model,
        mape,
        binned_mape,
        samples: samples.len(),
    })
}

/// [`fit_progress`] with the sample-size and slope requirements of a usable
/// network model.
/// `(K̃_{i-1}, x_H_i(0) - x_H_{i-1}(0))` pairs from consecutive hops.
pub fn progress_samples(trials: &[TrialResult]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for t in trials {
        for w in t.hops.windows(2) {
            if let (Some(a), Some(b)) = (w[0].x_h0, w[1].x_h0) {
                out.push((w[1].k_prev as f64, b - a));
            }
        }
    }
    out
}

pub fn calibrate_progress(
    samples: &[(f64, f64)],
    u: DetectionConstant,
    alpha: f64,
) -> Result<Calibration> {
    if samples.len() < 100 {
        return Err(Error::Calibration(format!(
            "{} samples, need at least 100",
            samples.len()
        )));
    }
    let c = fit_progress(samples, u, alpha)?;
    if c.model.varphi <= 0.0 {
        return Err(Error::Calibration(format!(
            "non-positive slope {}",
            c.model.varphi
        )));
    }
    Ok(c)
}

/// Mean distance to the `n`th nearest awake node in a half-plane sector,
/// radicand clamped at zero.
pub fn nn_offset(n: usize, rho: f64, epsilon: f64) -> f64 {
    (2.0 / (PI * epsilon * rho) * (n as f64 - 1.0 - PI / 4.0))
        .max(0.0)
        .sqrt()
}

pub fn x_c(x_h_prev: f64, j_prev: usize, rho: f64, epsilon: f64) -> Result<f64> {
    if j_prev == 0 {
        return Err(Error::NoResolvableRelay);
    }
    Ok(x_h_prev - nn_offset(j_prev, rho, epsilon))
}

/// Contour shapes in the strip, as `x` against the lateral offset `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Contour {
    /// Leading arc with the given on-axis apex; collapses onto its centre
    /// beyond `|y| = radius`.
    Front { apex: f64, radius: f64 },
    /// Trailing edge of the disc about `(center, 0)`.
    Rear { center: f64, radius: f64 },
    /// Boundary of the disc of `radius` about the destination at
    /// `(target, 0)`; eligible points lie to the right.
    Decision { target: f64, radius: f64 },
}

impl Contour {
    pub fn at(&self, y: f64) -> f64 {
        match *self {
            Contour::Front { apex, radius } => {
                apex - radius + (radius * radius - y * y).max(0.0).sqrt()
            }
            Contour::Rear { center, radius } => center - (radius * radius - y * y).max(0.0).sqrt(),
            Contour::Decision { target, radius } => {
                let r2 = radius * radius - y * y;
                if r2 < 0.0 {
                    f64::INFINITY
                } else {
                    target - r2.sqrt()
                }
            }
        }
    }

    pub fn axis(&self) -> f64 {
        self.at(0.0)
    }

    fn radius(&self) -> f64 {
        match *self {
            Contour::Front { radius, .. }
            | Contour::Rear { radius, .. }
            | Contour::Decision { radius, .. } => radius.abs(),
        }
    }
}

const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];
const PANELS: usize = 8;

/// Quadrature nodes over `0 <= y <= w/2`, split at the given kinks, with
/// weights doubled for even integrands over the full strip.
struct StripQuad {
    y: Vec<f64>,
    wt: Vec<f64>,
}

impl StripQuad {
    fn new(w: f64, kinks: &[f64]) -> Self {
        let half = w / 2.0;
        let mut cuts: Vec<f64> = kinks
            .iter()
            .copied()
            .filter(|k| *k > 0.0 && *k < half)
            .collect();
        cuts.push(0.0);
        cuts.push(half);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let (mut y, mut wt) = (Vec::new(), Vec::new());
        for seg in cuts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let panels = ((PANELS as f64 * (b - a) / half).ceil() as usize).max(2);
            let h = (b - a) / panels as f64;
            let hw = h / 2.0;
            for p in 0..panels {
                let mid = a + (p as f64 + 0.5) * h;
                for (x, g) in GL_NODES.iter().zip(GL_WEIGHTS) {
                    y.extend([mid - hw * x, mid + hw * x]);
                    wt.extend([2.0 * g * hw, 2.0 * g * hw]);
                }
            }
        }
        Self { y, wt }
    }

    fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.y.iter().zip(&self.wt).map(|(y, w)| w * f(*y)).sum()
    }
}

fn strip_integral<F: Fn(f64) -> f64>(f: F, w: f64, kinks: &[f64]) -> f64 {
    StripQuad::new(w, kinks).integrate(f)
}

/// Area of the strip between `lo` and `hi` where `hi` lies ahead.
pub fn between(lo: &Contour, hi: &Contour, w: f64) -> f64 {
    strip_integral(
        |y| (hi.at(y) - lo.at(y)).max(0.0),
        w,
        &[lo.radius(), hi.radius()],
    )
}

/// Area ahead of both `lo_a` and `lo_b` and behind `hi`.
pub fn between_max(lo_a: &Contour, lo_b: &Contour, hi: &Contour, w: f64) -> f64 {
    strip_integral(
        |y| (hi.at(y) - lo_a.at(y).max(lo_b.at(y))).max(0.0),
        w,
        &[lo_a.radius(), lo_b.radius(), hi.radius()],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Areas {
    /// Newly covered ground.
    pub a_d: f64,
    /// Newly covered ground ahead of the decision contour.
    pub a_r: f64,
    /// Ground covered by the previous hop only.
    pub a_d_minus: f64,
    /// Previously covered ground ahead of the decision contour.
    pub a_r_minus: f64,
}

pub fn areas(
    x_c: &Contour,
    x_h_prev: &Contour,
    x_h: &Contour,
    x_h_prev2: &Contour,
    w: f64,
) -> Result<Areas> {
    let slack = 1e-9 * x_h.axis().abs().max(1.0);
    if x_h_prev2.axis() > x_h_prev.axis() + slack
        || x_h_prev.axis() > x_h.axis() + slack
        || x_c.axis() > x_h_prev.axis() + slack
    {
        return Err(Error::Domain(
            "contours must satisfy x_C, x_H(i-2) <= x_H(i-1) <= x_H(i) on the axis".into(),
        ));
    }
    Ok(Areas {
        a_d: between(x_h_prev, x_h, w),
        a_r: between_max(x_c, x_h_prev, x_h, w),
        a_d_minus: between(x_h_prev2, x_h_prev, w),
        a_r_minus: between(x_c, x_h_prev, w),
    })
}

/// Expected retransmissions when the eligible region holds a Poisson number
/// of relays with mean `m`: `1 / (e^m - 1)`.
pub fn expected_retransmissions(m: f64) -> f64 {
    1.0 / m.exp_m1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticConfig {
    /// Node density (m⁻²).
    pub rho: f64,
    pub epsilon: f64,
    pub strip_width: f64,
    pub length: f64,
    pub alpha: f64,
    pub u: DetectionConstant,
    pub rach_slots: u32,
    /// Probability that a node in previously covered ground was asleep then.
    pub p_wk: f64,
    pub tail_tol: f64,
    pub support_cap: usize,
    pub max_hops: usize,
}

impl AnalyticConfig {
    pub fn from_engine(cfg: &EngineConfig) -> Self {
        Self {
            rho: cfg.field.rho,
            epsilon: cfg.field.epsilon,
            strip_width: cfg.field.strip_width,
            length: cfg.field.length,
            alpha: cfg.phy.alpha,
            u: detection_constant(&cfg.phy),
            rach_slots: cfg.rach_slots,
            p_wk: 1.0 - cfg.field.epsilon,
            tail_tol: TAIL_TOL,
            support_cap: SUPPORT_CAP,
            max_hops: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.rho > 0.0) {
            return bad("rho must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad("epsilon must lie in (0, 1]");
        }
        if !(self.strip_width > 0.0
            && self.length > 0.0
            && self.alpha > 0.0
            && self.u.value() > 0.0)
        {
            return bad("strip width, length, alpha and U must be positive");
        }
        if self.rach_slots < 3 {
            return bad("the resolvability model needs B >= 3");
        }
        if !(0.0..=1.0).contains(&self.p_wk) {
            return bad("p_wk must lie in [0, 1]");
        }
        Ok(())
    }

    fn density(&self) -> f64 {
        self.epsilon * self.rho
    }

    fn reach(&self, k: f64) -> f64 {
        self.u.colocated_radius(k, self.alpha)
    }

    fn decision(&self, x_c0: f64) -> Contour {
        Contour::Decision {
            target: self.length,
            radius: (self.length - x_c0).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopStats {
    pub hop: usize,
    /// `E[K̃_i]`.
    pub mean_k: f64,
    pub mean_k_new: f64,
    pub mean_k_late: f64,
    /// `E[L̃_i]`.
    pub mean_l: f64,
    pub mean_l_new: f64,
    pub mean_l_late: f64,
    /// `E[n_r_i]`.
    pub mean_nr: f64,
    /// Mean `x_H_i(0)`.
    pub x_h0: f64,
    pub k_dist: IntDist,
    pub l_dist: IntDist,
}

/// Distributions carried from hop `i - 1` into hop `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopRecursionState {
    pub i: usize,
    /// `K̃_{i-1}`.
    pub k_prev: IntDist,
    /// `K̃_{i-2}`.
    pub k_prev2: IntDist,
    /// `S_{i-2} = Σ_{n<=i-2} K̃_n`.
    pub s_prev2: IntDist,
    /// `E[K̃_{i-3}]`, fixing the arc radius of `x_H_{i-2}`.
    pub k_prev3_mean: f64,
    /// Mean `x_H_{i-1}(0)`.
    pub x_h_prev: f64,
}

/// Hop 1: the source alone, with exact disc geometry.
pub fn first_hop(cfg: &AnalyticConfig) -> Result<(HopStats, HopRecursionState)> {
    cfg.validate()?;
    let r1 = cfg.reach(1.0);
    let w = cfg.strip_width;
    let front = Contour::Front {
        apex: r1,
        radius: r1,
    };
    let rear = Contour::Rear {
        center: 0.0,
        radius: r1,
    };
    let a_d = between(&rear, &front, w);
    let a_r = between_max(&cfg.decision(0.0), &rear, &front, w);
    let m = cfg.density();
    let k = poisson_dist(m * a_r, cfg.tail_tol, cfg.support_cap)?.zero_truncated()?;
    let l = poisson_dist(m * a_d, cfg.tail_tol, cfg.support_cap)?;
    let stats = HopStats {
        hop: 1,
        mean_k: k.mean(),
        mean_k_new: k.mean(),
        mean_k_late: 0.0,
        mean_l: l.mean(),
        mean_l_new: l.mean(),
        mean_l_late: 0.0,
        mean_nr: expected_retransmissions(m * a_r),
        x_h0: r1,
        k_dist: k.clone(),
        l_dist: l,
    };
    let state = HopRecursionState {
        i: 2,
        k_prev: k,
        k_prev2: IntDist::point(1),
        s_prev2: IntDist::point(0),
        k_prev3_mean: 1.0,
        x_h_prev: r1,
    };
    Ok((stats, state))
}

#[derive(Default)]
struct Mix {
    k: Vec<f64>,
    k_late: Vec<f64>,
    nr: f64,
    weight: f64,
}

impl Mix {
    fn merge(mut self, o: Mix) -> Mix {
        for (dst, src) in [(&mut self.k, o.k), (&mut self.k_late, o.k_late)] {
            if dst.len() < src.len() {
                dst.resize(src.len(), 0.0);
            }
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
        self.nr += o.nr;
        self.weight += o.weight;
        self
    }
}

fn mixture(pmf: Vec<f64>, weight: f64, tol: f64) -> Result<IntDist> {
    let pmf: Vec<f64> = pmf.into_iter().map(|p| p / weight).collect();
    Ok(IntDist::from_pmf(pmf)?.trimmed(tol))
}

/// Strip quadrature with the current and previous contour sampled on it.
type StripGrid = (StripQuad, Vec<f64>, Vec<f64>);

/// Hop `i >= 2`: mixes Poisson counts over the previous relay count, the
/// partial sum locating the previous contour, and the first resolvable index.
pub fn propagate_hop(
    state: &HopRecursionState,
    cfg: &AnalyticConfig,
    model: &ProgressModel,
) -> Result<(HopStats, HopRecursionState)> {
    let i = state.i;
    let (w, m, tol, cap) = (
        cfg.strip_width,
        cfg.density(),
        cfg.tail_tol,
        cfg.support_cap,
    );
    let r1 = cfg.reach(1.0);
    let step0 = model.beta * r1;
    let r_prev = cfg.reach(state.k_prev2.mean());
    // x_H_{i-1}(0) when S_{i-2} = 0
    let base = r1 + (i - 2) as f64 * step0;

    let j_tables: Vec<Vec<f64>> = (0..state.k_prev.support_len())
        .map(|dk| {
            if dk == 0 {
                Ok(Vec::new())
            } else {
                j_pmf(dk, cfg.rach_slots)
            }
        })
        .collect::<Result<_>>()?;

    // contour samples relative to the apex of x_H_{i-1}, per previous relay count
    let prev_rel = Contour::Front {
        apex: 0.0,
        radius: r_prev,
    };
    let grids: Vec<Option<StripGrid>> = (0..state.k_prev.support_len())
        .map(|dk| {
            if dk == 0 {
                return None;
            }
            let new_rel = Contour::Front {
                apex: model.varphi * dk as f64 + step0,
                radius: cfg.reach(dk as f64),
            };
            let q = StripQuad::new(w, &[r_prev, new_rel.radius()]);
            let lo = q.y.iter().map(|y| prev_rel.at(*y)).collect();
            let hi = q.y.iter().map(|y| new_rel.at(*y)).collect();
            Some((q, lo, hi))
        })
        .collect();

    let s_terms: Vec<(usize, f64)> = state.s_prev2.iter().collect();
    let mix = s_terms
        .par_iter()
        .map(|&(s, ps)| -> Result<Mix> {
            let mut mix = Mix::default();
            let apex_prev = base + model.varphi * s as f64;
            for (dk, pk) in state.k_prev.iter() {
                if dk == 0 || ps * pk < NEGLIGIBLE {
                    continue;
                }
                let (q, lo, hi) = grids[dk].as_ref().expect("grid for positive count");
                for (j, &pj) in j_tables[dk].iter().enumerate() {
                    let wt = ps * pk * pj;
                    if wt < NEGLIGIBLE {
                        continue;
                    }
                    // all collided: the arc through the farthest relay
                    let n = if j == 0 { dk } else { j };
                    let xc0 = -nn_offset(n, cfg.rho, cfg.epsilon);
                    let Contour::Decision { radius, .. } = cfg.decision(apex_prev + xc0) else {
                        unreachable!()
                    };
                    let (mut a_r, mut a_rm) = (0.0, 0.0);
                    for n in 0..q.y.len() {
                        let y = q.y[n];
                        let r2 = radius * radius - y * y;
                        let xc = if r2 < 0.0 {
                            f64::INFINITY
                        } else {
                            cfg.length - apex_prev - r2.sqrt()
                        };
                        a_r += q.wt[n] * (hi[n] - xc.max(lo[n])).max(0.0);
                        a_rm += q.wt[n] * (lo[n] - xc).max(0.0);
                    }
                    add_poisson(&mut mix.k, wt, m * a_r, tol, cap)?;
                    add_poisson(&mut mix.k_late, wt, m * cfg.p_wk * a_rm, tol, cap)?;
                    // no retransmission once the destination itself is covered
                    if apex_prev + model.varphi * dk as f64 + step0 < cfg.length {
                        mix.nr += wt * expected_retransmissions(m * a_r);
                    }
                    mix.weight += wt;
                }
            }
            Ok(mix)
        })
        .try_reduce(Mix::default, |a, b| Ok(a.merge(b)))?;

    if !(mix.weight > 0.0) {
        return Err(Error::Divergence(format!(
            "no probability mass reached hop {i}"
        )));
    }
    let k_new = mixture(mix.k, mix.weight, tol)?;
    let k_late = mixture(mix.k_late, mix.weight, tol)?;
    let k_all = k_new.convolve(&k_late, tol, cap)?;
    // an empty relay set forces a retransmission, so only nonzero sets forward
    let k = k_all.zero_truncated().unwrap_or(k_all);
    let mean_nr = mix.nr / mix.weight;
    if !mean_nr.is_finite() {
        return Err(Error::Divergence(format!(
            "empty eligible region at hop {i}"
        )));
    }

    // decoders in new ground depend only on K̃_{i-1}
    let mut l_acc = Vec::new();
    for (dk, pk) in state.k_prev.iter() {
        let new = Contour::Front {
            apex: model.varphi * dk as f64 + step0,
            radius: cfg.reach(dk as f64),
        };
        add_poisson(&mut l_acc, pk, m * between(&prev_rel, &new, w), tol, cap)?;
    }
    let l_new = mixture(l_acc, state.k_prev.total(), tol)?;

    // late decoders in ground covered one hop earlier depend only on K̃_{i-2}
    let mut lm_acc = Vec::new();
    if i == 2 {
        let disc = between(
            &Contour::Rear {
                center: 0.0,
                radius: r1,
            },
            &Contour::Front {
                apex: r1,
                radius: r1,
            },
            w,
        );
        add_poisson(&mut lm_acc, 1.0, m * cfg.p_wk * disc, tol, cap)?;
    } else {
        let r_prev2 = cfg.reach(state.k_prev3_mean);
        for (k2, p2) in state.k_prev2.iter() {
            let hi = Contour::Front {
                apex: 0.0,
                radius: cfg.reach(k2 as f64),
            };
            let lo = Contour::Front {
                apex: -(model.varphi * k2 as f64 + step0),
                radius: r_prev2,
            };
            add_poisson(
                &mut lm_acc,
                p2,
                m * cfg.p_wk * between(&lo, &hi, w),
                tol,
                cap,
            )?;
        }
    }
    let l_late = mixture(lm_acc, state.k_prev2.total(), tol)?;
    let l = l_new.convolve(&l_late, tol, cap)?;

    for d in [&k, &l] {
        d.check(tol)?;
    }
    let x_h0 = state.x_h_prev + model.varphi * state.k_prev.mean() + step0;
    let stats = HopStats {
        hop: i,
        mean_k: k.mean(),
        mean_k_new: k_new.mean(),
        mean_k_late: k_late.mean(),
        mean_l: l.mean(),
        mean_l_new: l_new.mean(),
        mean_l_late: l_late.mean(),
        mean_nr,
        x_h0,
        k_dist: k.clone(),
        l_dist: l,
    };
    let next = HopRecursionState {
        i: i + 1,
        s_prev2: state.s_prev2.convolve(&state.k_prev, tol, cap)?,
        k_prev: k,
        k_prev2: state.k_prev.clone(),
        k_prev3_mean: state.k_prev2.mean(),
        x_h_prev: x_h0,
    };
    Ok((stats, next))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionTable {
    pub hops: Vec<HopStats>,
    /// Hops until the mean coverage contour passes the destination.
    pub q: usize,
}

impl RecursionTable {
    pub fn mean_k(&self) -> Vec<f64> {
        self.hops.iter().map(|h| h.mean_k).collect()
    }

    pub fn mean_l(&self) -> Vec<f64> {
        self.hops.iter().map(|h| h.mean_l).collect()
    }

    pub fn mean_nr(&self) -> Vec<f64> {
        self.hops.iter().map(|h| h.mean_nr).collect()
    }

    /// `E[K̃_{i-1}]` for `i = 1..=q`, with the source as `K̃_0 = 1`.
    pub fn mean_k_prev(&self) -> Vec<f64> {
        std::iter::once(1.0)
            .chain(self.hops.iter().map(|h| h.mean_k))
            .take(self.hops.len())
            .collect()
    }

    /// Columns `hop,E_K,E_L,E_nr,xH0`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["hop", "E_K", "E_L", "E_nr", "xH0"])?;
        for h in &self.hops {
            out.write_record([
                h.hop.to_string(),
                h.mean_k.to_string(),
                h.mean_l.to_string(),
                h.mean_nr.to_string(),
                h.x_h0.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// One `hop_<i>_pmf.csv` per hop with columns `n,p_K,p_L`.
    pub fn write_pmfs(&self, dir: &Path) -> csv::Result<()> {
        std::fs::create_dir_all(dir)?;
        for h in &self.hops {
            let mut out = csv::Writer::from_path(dir.join(format!("hop_{}_pmf.csv", h.hop)))?;
            out.write_record(["n", "p_K", "p_L"])?;
            for n in 0..h.k_dist.support_len().max(h.l_dist.support_len()) {
                out.write_record([
                    n.to_string(),
                    h.k_dist.get(n).to_string(),
                    h.l_dist.get(n).to_string(),
                ])?;
            }
            out.flush()?;
        }
        Ok(())
    }
}

/// Propagates hops until the mean coverage contour reaches the destination.
pub fn run_recursion(cfg: &AnalyticConfig, model: &ProgressModel) -> Result<RecursionTable> {
    let (first, mut state) = first_hop(cfg)?;
    let mut hops = vec![first];
    while hops.last().unwrap().x_h0 < cfg.length {
        if hops.len() >= cfg.max_hops {
            return Err(Error::Divergence(format!(
                "destination not reached within {} hops",
                cfg.max_hops
            )));
        }
        let advance = model.varphi * state.k_prev.mean() + model.beta * model.r1();
        if !(advance > 0.0) {
            return Err(Error::Divergence(format!(
                "hop {} advances by {advance} m",
                state.i
            )));
        }
        let (stats, next) = propagate_hop(&state, cfg, model)?;
        hops.push(stats);
        state = next;
    }
    let q = hops.len();
    Ok(RecursionTable { hops, q })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u3() -> DetectionConstant {
        DetectionConstant(1e-6)
    }

    #[test]
    fn p_z_examples() {
        assert_eq!(p_z(1, 1, 5), 1.0);
        assert_eq!(p_z(1, 2, 2), 0.5);
        assert_eq!(p_z(4, 6, 5), 0.0);
        assert_eq!(p_z(5, 6, 5), 0.0);
        let hand = (4.0f64 / 5.0).powi(3) * (3.0f64 / 4.0).powi(2);
        assert!((p_z(2, 4, 5) - hand).abs() < 1e-15);
    }

    #[test]
    fn p_z_non_increasing() {
        for b in 3..12u32 {
            for k in 1..15 {
                for z in 2..=k.min(b as usize + 1) {
                    assert!(
                        p_z(z, k, b) <= p_z(z - 1, k, b) + 1e-15,
                        "z={z} k={k} b={b}"
                    );
                }
            }
        }
    }

    #[test]
    fn p_j_first_branch() {
        for b in 3..10u32 {
            for k in 1..10usize {
                let expect = ((b as f64 - 1.0) / b as f64).powi(k as i32 - 1);
                assert!((p_j(1, k, b).unwrap() - expect).abs() < 1e-15);
            }
        }
        assert_eq!(p_j(1, 1, 4).unwrap(), 1.0);
        let pm = j_pmf(1, 4).unwrap();
        assert_eq!(pm, vec![0.0, 1.0]);
        assert!(p_j(0, 0, 4).is_err());
        assert!(p_j(1, 3, 2).is_err());
        assert!(p_j(4, 3, 5).is_err());
    }

    #[test]
    fn p_j_first_monotone() {
        for k in 1..20usize {
            for b in 3..30u32 {
                let a = p_j(1, k, b).unwrap();
                assert!(p_j(1, k, b + 1).unwrap() >= a);
                assert!(p_j(1, k + 1, b).unwrap() <= a);
            }
        }
    }

    #[test]
    fn j_pmf_is_distribution() {
        for b in 3..20u32 {
            for k in 1..40usize {
                let p = j_pmf(k, b).unwrap();
                assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn progress_recursion_matches_closed_form() {
        let model = ProgressModel {
            varphi: 4.3,
            beta: 0.8,
            u: u3(),
            alpha: 3.0,
        };
        let ks = [3.0, 7.0, 1.0, 12.0, 5.0, 9.0];
        let mut x = model.r1();
        for (n, k) in ks.iter().enumerate() {
            x = x_h_step(x, *k, &model);
            let c = model.closed_form(&ks[..=n]);
            assert!((x - c).abs() < 1e-12 * c);
        }
        assert_eq!(model.closed_form(&[]), model.r1());
        let flat = ProgressModel {
            varphi: 0.0,
            beta: 0.0,
            ..model
        };
        assert_eq!(x_h_step(17.0, 5.0, &flat), 17.0);
    }

    #[test]
    fn exact_linear_fit() {
        let u = u3();
        let r1 = u.radius(3.0);
        let samples: Vec<(f64, f64)> = (0..200)
            .map(|n| {
                let k = (n % 17 + 1) as f64;
                (k, 3.7 * k + 0.6 * r1)
            })
            .collect();
        let c = calibrate_progress(&samples, u, 3.0).unwrap();
        assert!((c.model.varphi - 3.7).abs() < 1e-9);
        assert!((c.model.beta - 0.6).abs() < 1e-9);
        assert!(c.mape < 1e-9);
        assert!(matches!(
            fit_progress(&[(2.0, 1.0); 5], u, 3.0),
            Err(Error::Calibration(_))
        ));
        assert!(matches!(
            calibrate_progress(&samples[..50], u, 3.0),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn colocated_law_is_nearly_linear() {
        // reach of K co-located relays measured from their position
        let u = u3();
        let pts: Vec<(f64, f64)> = (1..=10)
            .map(|k| (k as f64, u.colocated_radius(k as f64, 3.0)))
            .collect();
        let c = fit_progress(&pts, u, 3.0).unwrap();
        assert!(c.mape <= 5.5, "mape {}", c.mape);
        let m = c.model;
        let big: Vec<f64> = pts
            .iter()
            .filter(|(k, _)| *k > 3.0)
            .map(|(k, x)| ((m.varphi * k + m.beta * m.r1() - x) / x).abs())
            .collect();
        assert!(100.0 * big.iter().sum::<f64>() / big.len() as f64 <= 3.0);
    }

    #[test]
    fn x_c_clamp() {
        let (rho, eps) = (1.5e-3, 0.25);
        assert_eq!(x_c(500.0, 1, rho, eps).unwrap(), 500.0);
        assert!(x_c(500.0, 2, rho, eps).unwrap() < 500.0);
        assert!(matches!(
            x_c(500.0, 0, rho, eps),
            Err(Error::NoResolvableRelay)
        ));
        let off = 500.0 - x_c(500.0, 3, 1e3, 1.0).unwrap();
        assert!(off < 1e-1);
        let hand = (2.0 / (PI * eps * rho) * (4.0 - 1.0 - PI / 4.0)).sqrt();
        assert!((500.0 - x_c(500.0, 4, rho, eps).unwrap() - hand).abs() < 1e-12);
    }

    #[test]
    fn poisson_values() {
        assert_eq!(poisson_pmf(0, 0.0), 1.0);
        assert_eq!(poisson_pmf(2, 0.0), 0.0);
        let hand = (-2.0f64).exp() * 8.0 / 6.0;
        assert!((poisson_pmf(3, 2.0) - hand).abs() < 1e-15);
        for m in [0.3, 4.0, 37.5, 410.0] {
            let d = poisson_dist(m, TAIL_TOL, SUPPORT_CAP).unwrap();
            d.check(TAIL_TOL).unwrap();
            assert!((d.mean() - m).abs() < 1e-6 * m.max(1.0));
            let direct: f64 = (0..d.support_len()).map(|n| poisson_pmf(n, m)).sum();
            assert!((direct - 1.0).abs() < 2e-9);
        }
        assert!(matches!(
            poisson_dist(5000.0, TAIL_TOL, 4096),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn convolution_adds_means() {
        let a = poisson_dist(3.2, TAIL_TOL, SUPPORT_CAP).unwrap();
        let b = IntDist::from_pmf(vec![0.1, 0.2, 0.0, 0.7]).unwrap();
        let c = a.convolve(&b, TAIL_TOL, SUPPORT_CAP).unwrap();
        c.check(TAIL_TOL).unwrap();
        // trimming at the tail tolerance shifts moments by at most tol·support
        assert!((c.mean() - a.mean() - b.mean()).abs() < 1e-7);
        assert!((c.variance() - a.variance() - b.variance()).abs() < 1e-6);
    }

    #[test]
    fn zero_truncation() {
        let d = IntDist::from_pmf(vec![0.5, 0.25, 0.25])
            .unwrap()
            .zero_truncated()
            .unwrap();
        assert_eq!(d.pmf(), &[0.0, 0.5, 0.5]);
        assert!(IntDist::point(0).zero_truncated().is_err());
        assert!(IntDist::from_pmf(vec![0.5, -0.1]).is_err());
    }

    #[test]
    fn flat_contours_give_rectangles() {
        let big = 1e9;
        let lo = Contour::Front {
            apex: 100.0,
            radius: big,
        };
        let hi = Contour::Front {
            apex: 160.0,
            radius: big,
        };
        assert!((between(&lo, &hi, 200.0) - 200.0 * 60.0).abs() < 1e-2);
    }

    #[test]
    fn decision_at_prev_coincides() {
        let prev = Contour::Front {
            apex: 400.0,
            radius: 180.0,
        };
        let new = Contour::Front {
            apex: 520.0,
            radius: 230.0,
        };
        let prev2 = Contour::Front {
            apex: 290.0,
            radius: 150.0,
        };
        let a = areas(&prev, &prev, &new, &prev2, 200.0).unwrap();
        assert!((a.a_r - a.a_d).abs() < 1e-9 * a.a_d);
        assert_eq!(a.a_r_minus, 0.0);
        assert!(areas(&prev, &new, &prev, &prev2, 200.0).is_err());
    }

    #[test]
    fn retransmission_expectation_decreasing() {
        let mut last = f64::INFINITY;
        for m in [0.1, 0.5, 1.0, 3.0, 10.0] {
            let e = expected_retransmissions(m);
            assert!(e < last);
            last = e;
        }
        assert!((expected_retransmissions(1.0) - 1.0 / (1f64.exp() - 1.0)).abs() < 1e-15);
    }
}
