//! Scenario execution.
//!
//! Every scenario writes one CSV per sweep point under `points/`, rows of
//! the fixed-schema `summary.csv`, and a plot recipe. A point that fails is
//! recorded in `error_manifest.csv` and the remaining points still run.
//! Every point reuses the experiment seed, so points differ only in their
//! parameters.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use omr_core::analytic::{
    calibrate_progress, progress_samples, run_recursion, AnalyticConfig, Calibration,
};
use omr_core::bcl::{bcl_field, run_bcl_trials, summarize, write_hops, BclSummary};
use omr_core::channel::{detection_constant, PhyConfig};
use omr_core::concurrent::{run_two_flows, write_snapshots, FlowSpec, TwoFlowConfig};
use omr_core::engine::{run_trials, write_trace, EngineConfig, TrialResult};
use omr_core::metrics::{
    analytic_end_to_end, cost_ratio, edp_and_cost, realized_end_to_end, Cost, EndToEnd,
};

use crate::config::{ExperimentFile, Scenario};

pub const SUMMARY_COLUMNS: [&str; 10] = [
    "protocol",
    "P_t_dbm",
    "rho",
    "B",
    "mcs",
    "E_e2e_J",
    "l_e2e_s",
    "EDP",
    "C_e2e",
    "cost_ratio",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub protocol: String,
    pub tx_dbm: f64,
    pub rho_km2: f64,
    /// Absent for the baseline.
    pub rach_slots: Option<u32>,
    pub mcs: String,
    pub energy: f64,
    pub delay: f64,
    pub cost: Cost,
    pub cost_ratio: Option<f64>,
}

impl SummaryRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.protocol.clone(),
            self.tx_dbm.to_string(),
            self.rho_km2.to_string(),
            self.rach_slots.map(|b| b.to_string()).unwrap_or_default(),
            self.mcs.clone(),
            self.energy.to_string(),
            self.delay.to_string(),
            self.cost.edp.to_string(),
            self.cost.c_e2e.to_string(),
            self.cost_ratio.map(|r| r.to_string()).unwrap_or_default(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointError {
    pub point: String,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct RunReport {
    pub summary: Vec<SummaryRow>,
    pub errors: Vec<PointError>,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

type PointResult<T> = std::result::Result<T, String>;

struct Ctx<'a> {
    cfg: &'a ExperimentFile,
    out: PathBuf,
    report: RunReport,
}

impl Ctx<'_> {
    fn point_file(&mut self, name: &str) -> PointResult<BufWriter<File>> {
        let path = self.out.join("points").join(format!("{name}.csv"));
        let f = File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        self.report.files.push(path);
        Ok(BufWriter::new(f))
    }

    fn fail(&mut self, point: &str, message: impl Into<String>) {
        self.report.errors.push(PointError {
            point: point.to_string(),
            message: message.into(),
        });
    }

    fn omr(&self, rho: f64, width: f64, phy: PhyConfig, b: u32) -> EngineConfig {
        self.cfg.engine_at(rho, width, phy, b)
    }

    /// Runs OMR trials and writes their trace.
    fn omr_trials(&mut self, name: &str, engine: &EngineConfig) -> PointResult<Vec<TrialResult>> {
        engine.validate().map_err(|e| e.to_string())?;
        let trials = run_trials(engine, self.cfg.seed, self.cfg.trials);
        let w = self.point_file(name)?;
        write_trace(w, &trials).map_err(|e| e.to_string())?;
        Ok(trials)
    }

    fn bcl(
        &mut self,
        name: &str,
        rho: f64,
        phy: &PhyConfig,
        ts_over_tp: Option<f64>,
    ) -> PointResult<BclSummary> {
        let c = self.cfg.bcl_config(phy, ts_over_tp);
        c.validate().map_err(|e| e.to_string())?;
        let field = bcl_field(&self.cfg.field_at(rho, self.cfg.field.strip_width_m), c.d_m);
        let trials = run_bcl_trials(&c, &field, self.cfg.seed, self.cfg.trials);
        let w = self.point_file(name)?;
        write_hops(w, &trials).map_err(|e| e.to_string())?;
        summarize(&c, &field, phy, &trials).map_err(|e| e.to_string())
    }

    fn push(&mut self, row: SummaryRow) {
        self.report.summary.push(row);
    }
}

fn omr_row(
    label: &str,
    tx: f64,
    rho: f64,
    b: u32,
    mcs: &str,
    e: &EndToEnd,
    phy: &PhyConfig,
) -> SummaryRow {
    SummaryRow {
        protocol: label.to_string(),
        tx_dbm: tx,
        rho_km2: rho,
        rach_slots: Some(b),
        mcs: mcs.to_string(),
        energy: e.energy,
        delay: e.delay,
        cost: e.cost(phy),
        cost_ratio: None,
    }
}

fn bcl_row(
    label: &str,
    tx: f64,
    rho: f64,
    mcs: &str,
    s: &BclSummary,
    phy: &PhyConfig,
) -> SummaryRow {
    SummaryRow {
        protocol: label.to_string(),
        tx_dbm: tx,
        rho_km2: rho,
        rach_slots: None,
        mcs: mcs.to_string(),
        energy: s.e2e_energy,
        delay: s.e2e_delay,
        cost: edp_and_cost(
            s.e2e_energy,
            s.e2e_delay,
            phy.data_rate,
            phy.packet_duration,
        ),
        cost_ratio: None,
    }
}

fn ts_suffix(ts: Option<f64>) -> String {
    ts.map(|r| format!("[Ts/Tp={r}]")).unwrap_or_default()
}

fn ts_tag(ts: Option<f64>) -> String {
    ts.map(|r| format!("_ts{r}")).unwrap_or_default()
}

fn phy_mcs_label(cfg: &ExperimentFile) -> String {
    cfg.phy.mcs.clone().unwrap_or_default()
}

/// Runs the experiment and writes its outputs under `cfg.out`.
pub fn run(cfg: &ExperimentFile) -> std::io::Result<RunReport> {
    fs::create_dir_all(cfg.out.join("points"))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if cfg.workers > 0 {
        pool = pool.num_threads(cfg.workers);
    }
    let pool = pool
        .build()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let mut ctx = Ctx {
        cfg,
        out: cfg.out.clone(),
        report: RunReport::default(),
    };
    pool.install(|| match cfg.scenario {
        Scenario::OmrTrials => omr_trials(&mut ctx),
        Scenario::BclTrials => bcl_trials(&mut ctx),
        Scenario::Analytic => analytic(&mut ctx),
        Scenario::ComparePower => compare_power(&mut ctx),
        Scenario::CompareB => compare_b(&mut ctx),
        Scenario::CompareMcs => compare_mcs(&mut ctx),
        Scenario::DelaySpread => delay_spread(&mut ctx),
        Scenario::Retransmissions => retransmissions(&mut ctx),
        Scenario::TwoPackets => two_packets(&mut ctx),
        Scenario::Calibrate => calibrate(&mut ctx),
    })?;
    write_summary(&ctx.out.join("summary.csv"), &ctx.report.summary)?;
    fs::write(
        ctx.out.join(format!("{}.plot.txt", cfg.scenario.name())),
        recipe(cfg.scenario),
    )?;
    let manifest = ctx.out.join("error_manifest.csv");
    if ctx.report.errors.is_empty() {
        if manifest.exists() {
            fs::remove_file(&manifest)?;
        }
    } else {
        let mut w = csv::Writer::from_path(&manifest)?;
        w.write_record(["point", "error"])?;
        for e in &ctx.report.errors {
            w.write_record([&e.point, &e.message])?;
        }
        w.flush()?;
    }
    Ok(ctx.report)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn omr_trials(ctx: &mut Ctx) -> std::io::Result<()> {
    let cfg = ctx.cfg;
    for rho in cfg.rho_axis() {
        for width in cfg.width_axis() {
            for b in cfg.b_axis() {
                for tx in cfg.tx_axis() {
                    let name = format!("omr_tx{tx}_rho{rho}_B{b}_w{width}");
                    let phy = cfg.phy_at(tx);
                    let engine = ctx.omr(rho, width, phy.clone(), b);
                    let res = ctx
                        .omr_trials(&name, &engine)
                        .and_then(|t| realized_end_to_end(&t, &phy).map_err(|e| e.to_string()));
                    match res {
                        Ok(e) => {
                            ctx.push(omr_row("OMR", tx, rho, b, &phy_mcs_label(cfg), &e, &phy))
                        }
                        Err(e) => ctx.fail(&name, e),
                    }
                }
            }
        }
    }
    Ok(())
}

fn bcl_trials(ctx: &mut Ctx) -> std::io::Result<()> {
    let cfg = ctx.cfg;
    let phy = cfg.bcl_phy();
    let mut table = Vec::new();
    for rho in cfg.rho_axis() {
        for ts in cfg.ts_axis() {
            let name = format!("bcl_rho{rho}{}", ts_tag(ts));
            match ctx.bcl(&name, rho, &phy, ts) {
                Ok(s) => {
                    table.push(vec![
                        rho.to_string(),
                        ts.map(|r| r.to_string()).unwrap_or_default(),
                        s.expectations.eta.to_string(),
                        s.expectations.m_e.to_string(),
                        s.expectations.m_n.to_string(),
                        s.xi.to_string(),
                        s.mean_hops.to_string(),
                        s.failures.to_string(),
                    ]);
                    let label = format!("BCL{}", ts_suffix(ts));
                    ctx.push(bcl_row(
                        &label,
                        cfg.bcl.tx_dbm,
                        rho,
                        &phy_mcs_label(cfg),
                        &s,
                        &phy,
                    ));
                }
                Err(e) => ctx.fail(&name, e),
            }
        }
    }
    write_table(
        &ctx.out.join("bcl_expectations.csv"),
        &[
            "rho",
            "ts_over_tp",
            "E_eta",
            "E_m_e",
            "E_m_n",
            "xi",
            "mean_hops",
            "failures",
        ],
        &table,
    )
}

/// Calibrates the progress law on the engine, then runs the recursion.
fn calibrated(
    ctx: &mut Ctx,
    name: &str,
    engine: &EngineConfig,
) -> PointResult<(Vec<TrialResult>, Calibration)> {
    let trials = ctx.omr_trials(name, engine)?;
    let samples = progress_samples(&trials);
    let c = calibrate_progress(&samples, detection_constant(&engine.phy), engine.phy.alpha)
        .map_err(|e| e.to_string())?;
    Ok((trials, c))
}

fn analytic(ctx: &mut Ctx) -> std::io::Result<()> {
    let cfg = ctx.cfg;
    for rho in cfg.rho_axis() {
        for b in cfg.b_axis() {
            for tx in cfg.tx_axis() {
                let name = format!("analytic_tx{tx}_rho{rho}_B{b}");
                let phy = cfg.phy_at(tx);
                let engine = ctx.omr(rho, cfg.field.strip_width_m, phy.clone(), b);
                let res = calibrated(ctx, &format!("{name}_sim"), &engine).and_then(|(_, c)| {
                    let a = AnalyticConfig::from_engine(&engine);
                    run_recursion(&a, &c.model).map_err(|e| e.to_string())
                });
                match res {
                    Ok(table) => {
                        let w = ctx.point_file(&name).map_err(std::io::Error::other)?;
                        table.write_csv(w)?;
                        let e = analytic_end_to_end(&table, &phy);
                        ctx.push(omr_row(
                            "OMR-analytic",
                            tx,
                            rho,
                            b,
                            &phy_mcs_label(cfg),
                            &e,
                            &phy,
                        ));
                    }
                    Err(e) => ctx.fail(&name, e),
                }
            }
        }
    }
    Ok(())
}

fn compare_power(ctx: &mut Ctx) -> std::io::Result<()> {
    let cfg = ctx.cfg;
    let bphy = cfg.bcl_phy();
    let b = cfg.omr.rach_slots;
    for rho in cfg.rho_axis() {
        // OMR runs do not depend on the baseline's T_s
        let mut omr = Vec::new();
        for tx in cfg.tx_axis() {
            let name = format!("omr_tx{tx}_rho{rho}_B{b}");
            let phy = cfg.phy_at(tx);
            let engine = ctx.omr(rho, cfg.field.strip_width_m, phy.clone(), b);
            let res = ctx
                .omr_trials(&name, &engine)
                .and_then(|t| realized_end_to_end(&t, &phy).map_err(|e| e.to_string()));
            match res {
                Ok(e) => omr.push((
                    tx,
                    omr_row("OMR", tx, rho, b, &phy_mcs_label(cfg), &e, &phy),
                )),
                Err(e) => ctx.fail(&name, e),
            }
        }
        for ts in cfg.ts_axis() {
            let name = format!("bcl_rho{rho}{}", ts_tag(ts));
            let base = match ctx.bcl(&name, rho, &bphy, ts) {
                Ok(s) => bcl_row(
                    &format!("BCL{}", ts_suffix(ts)),
                    cfg.bcl.tx_dbm,
                    rho,
                    &phy_mcs_label(cfg),
                    &s,
                    &bphy,
                ),
                Err(e) => {
                    ctx.fail(&name, e);
                    continue;
                }
            };
            let bcost = base.cost;
            ctx.push(base);
            for (_, row) in &omr {
                let mut r = row.clone();
                r.protocol = format!("OMR{}", ts_suffix(ts));
                r.cost_ratio = Some(cost_ratio(r.cost, bcost));
                ctx.push(r);
            }
        }
    }
    Ok(())
}

/// Rate left for data when a RACH of `b` slots precedes every packet.
fn derated(phy: &PhyConfig, b: u32, slot: f64) -> PhyConfig {
    let tp = phy.packet_duration;
    PhyConfig {
        data_rate: phy.data_rate * tp / (tp + b as f64 * slot),
        ..phy.clone()
    }
}

fn compare_b(ctx: &mut Ctx) -> std::io::Result<()> {
    let cfg = ctx.cfg;
    let bphy = cfg.bcl_phy();
    let tx = cfg.phy.tx_dbm;
    for rho in cfg.rho_axis() {
        let name = format!("bcl_rho{rho}");
        let base = match ctx.bcl(&name, rho, &bphy, None) {
            Ok(s) => bcl_row("BCL", cfg.bcl.tx_dbm, rho, &phy_mcs_label(cfg), &s, &bphy),
            Err(e) => {
                ctx.fail(&name, e);
                continue;
            }
        };
        let bcost = base.cost;
        ctx.push(base);
        for b in cfg.b_axis() {
            let name = format!("omr_tx{tx}_rho{rho}_B{b}");
            let phy = cfg.phy_at(tx);
            let engine = ctx.omr(rho, cfg.field.strip_width_m, phy.clone(), b);
            let cost_phy = derated(&phy, b, cfg.omr.rach_slot_s);
            let res = ctx
                .omr_trials(&name, &engine)
                .and_then(|t| realized_end_to_end(&t, &cost_phy).map_err(|e| e.to_string()));
            match res {
                Ok(e) => {
                    let mut r = omr_row("OMR", tx, rho, b, &phy_mcs_label(cfg), &e, &cost_phy);
                    r.cost_ratio = Some(cost_ratio(r.cost, bcost));
                    ctx.push(r);
                }
                Err(e) => ctx.fail(&name, e),
            }
        }
    }
    Ok(())
}

fn compare_mcs(ctx: &mut Ctx) -> std::io::Result<()> {
    let cfg = ctx.cfg;
    let bphy = cfg.bcl_phy_mcs();
    let b = cfg.omr.rach_slots;
    for rho in cfg.rho_axis() {
        let name = format!("bcl_rho{rho}_{}", cfg.bcl.mcs);
        let base = match ctx.bcl(&name, rho, &bphy, None) {
            Ok(s) => bcl_row("BCL", cfg.bcl.tx_dbm, rho, &cfg.bcl.mcs, &s, &bphy),
            Err(e) => {
                ctx.fail(&name, e);
                continue;
            }
        };
        let bcost = base.cost;
        ctx.push(base);
        for m in cfg.mcs_axis() {
            for tx in cfg.tx_axis() {
                let name = format!("omr_tx{tx}_rho{rho}_B{b}_{}", m.name);
                let phy = cfg.phy_with_mcs(tx, &m);
                let engine = ctx.omr(rho, cfg.field.strip_width_m, phy.clone(), b);
                let res = ctx
                    .omr_trials(&name, &engine)
                    .and_then(|t| realized_end_to_end(&t, &phy).map_err(|e| e.to_string()));
                match res {
                    Ok(e) => {
                        let mut r = omr_row("OMR", tx, rho, b, m.name, &e, &phy);
                        r.cost_ratio = Some(cost_ratio(r.cost, bcost));
                        ctx.push(r);
                    }
                    Err(e) => ctx.fail(&name, e),
                }
            }
        }
    }
    Ok(())
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

fn delay_spread(ctx: &mut Ctx) -> std::io::Result<()> {
    let cfg = ctx.cfg;
    let b = cfg.omr.rach_slots;
    let tx = cfg.phy.tx_dbm;
    let mut table = Vec::new();
    for rho in cfg.rho_axis() {
        for width in cfg.width_axis() {
            let name = format!("spread_rho{rho}_w{width}");
            let phy = cfg.phy_at(tx);
            let engine = ctx.omr(rho, width, phy.clone(), b);
            let trials = match ctx.omr_trials(&name, &engine) {
                Ok(t) => t,
                Err(e) => {
                    ctx.fail(&name, e);
                    continue;
                }
            };
            let spreads: Vec<f64> = trials.iter().filter_map(|t| t.delay_spread).collect();
            if spreads.is_empty() {
                ctx.fail(&name, "no trial reached the destination");
                continue;
            }
            let (m, s) = mean_std(&spreads);
            table.push(vec![
                rho.to_string(),
                width.to_string(),
                spreads.len().to_string(),
                m.to_string(),
                s.to_string(),
                phy.cp_duration.to_string(),
            ]);
            match realized_end_to_end(&trials, &phy) {
                Ok(e) => ctx.push(omr_row("OMR", tx, rho, b, &phy_mcs_label(cfg), &e, &phy)),
                Err(e) => ctx.fail(&name, e.to_string()),
            }
        }
    }
    write_table(
        &ctx.out.join("delay_spread.csv"),
        &["rho", "w", "samples", "mean_s", "std_s", "T_cp_s"],
        &table,
    )
}

/// Per-hop mean retransmissions over trials that recorded the hop.
pub fn per_hop_mean_nr(trials: &[TrialResult]) -> Vec<f64> {
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for t in trials {
        for (i, h) in t.hops.iter().enumerate() {
            if sums.len() <= i {
                sums.push((0.0, 0));
            }
            sums[i].0 += h.retransmissions as f64;
            sums[i].1 += 1;
        }
    }
    sums.into_iter().map(|(s, n)| s / n as f64).collect()
}

fn retransmissions(ctx: &mut Ctx) -> std::io::Result<()> {
    let cfg = ctx.cfg;
    let b = cfg.omr.rach_slots;
    let mut table = Vec::new();
    for rho in cfg.rho_axis() {
        for tx in cfg.tx_axis() {
            let name = format!("nr_tx{tx}_rho{rho}_B{b}");
            let phy = cfg.phy_at(tx);
            let engine = ctx.omr(rho, cfg.field.strip_width_m, phy.clone(), b);
            let res = calibrated(ctx, &name, &engine).and_then(|(trials, c)| {
                let a = AnalyticConfig::from_engine(&engine);
                let t = run_recursion(&a, &c.model).map_err(|e| e.to_string())?;
                Ok((trials, t))
            });
            let (trials, analytic) = match res {
                Ok(x) => x,
                Err(e) => {
                    ctx.fail(&name, e);
                    continue;
                }
            };
            let sim = per_hop_mean_nr(&trials);
            let an = analytic.mean_nr();
            for h in 0..sim.len().max(an.len()) {
                let cell = |v: &[f64]| v.get(h).map(|x| x.to_string()).unwrap_or_default();
                table.push(vec![
                    tx.to_string(),
                    rho.to_string(),
                    (h + 1).to_string(),
                    cell(&sim),
                    cell(&an),
                ]);
            }
            match realized_end_to_end(&trials, &phy) {
                Ok(e) => ctx.push(omr_row("OMR", tx, rho, b, &phy_mcs_label(cfg), &e, &phy)),
                Err(e) => ctx.fail(&name, e.to_string()),
            }
            let e = analytic_end_to_end(&analytic, &phy);
            ctx.push(omr_row(
                "OMR-analytic",
                tx,
                rho,
                b,
                &phy_mcs_label(cfg),
                &e,
                &phy,
            ));
        }
    }
    write_table(
        &ctx.out.join("retransmissions.csv"),
        &["P_t_dbm", "rho", "hop", "E_nr_sim", "E_nr_analytic"],
        &table,
    )
}

fn two_packets(ctx: &mut Ctx) -> std::io::Result<()> {
    let cfg = ctx.cfg;
    let tx = cfg.phy.tx_dbm;
    let b = cfg.omr.rach_slots;
    let rho = cfg.field.rho_km2;
    let phy = cfg.phy_at(tx);
    let [(a_src, dst), (b_src, _)] = cfg.two_packet_points();
    let mut engine = ctx.omr(rho, cfg.field.strip_width_m, phy.clone(), b);
    // the deployment must hold both flows' strips wherever they point
    let spread = [a_src, b_src]
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(0.0, f64::max);
    engine.field.length = dst.x.abs().max(dst.y.abs()).max(engine.field.length);
    engine.field.margin = engine.field.margin.max(spread + engine.field.strip_width);
    let tf = TwoFlowConfig {
        engine,
        flows: [
            FlowSpec {
                src: a_src,
                dst,
                start_slot: 0,
            },
            FlowSpec {
                src: b_src,
                dst,
                start_slot: cfg.two_packets.start_slot_b,
            },
        ],
        interference_radius: cfg.two_packets.interference_radius_m,
    };
    if let Err(e) = tf.validate() {
        ctx.fail("two_packets", e.to_string());
        return Ok(());
    }
    let res = run_two_flows(&tf, cfg.seed);
    let w = ctx
        .point_file("two_packets_snapshots")
        .map_err(std::io::Error::other)?;
    write_snapshots(w, &res).map_err(std::io::Error::other)?;
    let tagged = res.interference_retransmissions();
    let mut table = Vec::new();
    for (k, label) in ["A", "B"].iter().enumerate() {
        let f = &res.flows[k];
        let name = format!("two_packets_flow{label}");
        let w = ctx.point_file(&name).map_err(std::io::Error::other)?;
        write_trace(w, std::slice::from_ref(f)).map_err(std::io::Error::other)?;
        table.push(vec![
            label.to_string(),
            f.reached.to_string(),
            f.hops.len().to_string(),
            f.hops
                .iter()
                .map(|h| h.retransmissions)
                .sum::<u32>()
                .to_string(),
            tagged[k].to_string(),
        ]);
        match realized_end_to_end(std::slice::from_ref(f), &phy) {
            Ok(e) => ctx.push(omr_row(
                &format!("OMR-flow{label}"),
                tx,
                rho,
                b,
                &phy_mcs_label(cfg),
                &e,
                &phy,
            )),
            Err(e) => ctx.fail(&name, e.to_string()),
        }
    }
    write_table(
        &ctx.out.join("two_packets.csv"),
        &[
            "flow",
            "reached",
            "hops",
            "retransmissions",
            "interference_retransmissions",
        ],
        &table,
    )
}

fn calibrate(ctx: &mut Ctx) -> std::io::Result<()> {
    let cfg = ctx.cfg;
    let mut table = Vec::new();
    for rho in cfg.rho_axis() {
        for b in cfg.b_axis() {
            for tx in cfg.tx_axis() {
                let name = format!("calib_tx{tx}_rho{rho}_B{b}");
                let phy = cfg.phy_at(tx);
                let engine = ctx.omr(rho, cfg.field.strip_width_m, phy.clone(), b);
                match calibrated(ctx, &name, &engine) {
                    Ok((trials, c)) => {
                        table.push(vec![
                            tx.to_string(),
                            rho.to_string(),
                            b.to_string(),
                            c.samples.to_string(),
                            c.model.varphi.to_string(),
                            c.model.beta.to_string(),
                            c.mape.to_string(),
                            c.binned_mape.to_string(),
                        ]);
                        match realized_end_to_end(&trials, &phy) {
                            Ok(e) => {
                                ctx.push(omr_row("OMR", tx, rho, b, &phy_mcs_label(cfg), &e, &phy))
                            }
                            Err(e) => ctx.fail(&name, e.to_string()),
                        }
                    }
                    Err(e) => ctx.fail(&name, e),
                }
            }
        }
    }
    write_table(
        &ctx.out.join("calibration.csv"),
        &[
            "P_t_dbm",
            "rho",
            "B",
            "samples",
            "varphi",
            "beta",
            "mape_pct",
            "binned_mape_pct",
        ],
        &table,
    )
}

/// Plain-text plot recipe naming the data file and axes.
pub fn recipe(s: Scenario) -> String {
    let (data, x, y, group, note) = match s {
        Scenario::OmrTrials => (
            "summary.csv",
            "P_t_dbm",
            "C_e2e",
            "rho",
            "end-to-end cost per point",
        ),
        Scenario::BclTrials => (
            "bcl_expectations.csv",
            "rho",
            "E_eta,E_m_e,E_m_n",
            "ts_over_tp",
            "contention expectations",
        ),
        Scenario::Analytic => (
            "points/analytic_*.csv",
            "hop",
            "E_K,E_L",
            "file",
            "per-hop expected relays and decoders",
        ),
        Scenario::ComparePower => (
            "summary.csv where protocol starts with OMR",
            "P_t_dbm",
            "cost_ratio",
            "rho,protocol",
            "cost ratio against the baseline; values below 1 favour OMR",
        ),
        Scenario::CompareB => (
            "summary.csv where protocol = OMR",
            "B",
            "cost_ratio",
            "rho",
            "cost ratio against RACH size",
        ),
        Scenario::CompareMcs => (
            "summary.csv where protocol = OMR",
            "P_t_dbm",
            "cost_ratio",
            "mcs,rho",
            "cost ratio per modulation",
        ),
        Scenario::DelaySpread => (
            "delay_spread.csv",
            "w",
            "mean_s (error bars std_s)",
            "rho",
            "forwarding delay spread; compare with T_cp_s",
        ),
        Scenario::Retransmissions => (
            "retransmissions.csv",
            "hop",
            "E_nr_sim,E_nr_analytic",
            "P_t_dbm,rho",
            "mean retransmissions per hop",
        ),
        Scenario::TwoPackets => (
            "points/two_packets_snapshots.csv",
            "x",
            "y",
            "slot,flow",
            "scatter of transmitters per slot; attempt > 0 marks a retransmission",
        ),
        Scenario::Calibrate => (
            "points/calib_*.csv",
            "K (previous hop)",
            "xH0 increment",
            "file",
            "fit line from calibration.csv",
        ),
    };
    format!("scenario: {}\ndata: {data}\nx: {x}\ny: {y}\ngroup: {group}\nplot: lines with markers\nnote: {note}\n", s.name())
}
