//! Scene construction and the output-scheduling run loop.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use log::{error, info};
use ulsph::diagnostics::{energy_report, energy_report_where, momentum_report, uniformity_metric};
use ulsph::io::{self, SeriesWriter, SnapshotFormat};
use ulsph::scenes::{self, TaylorBar};
use ulsph::{Scene, Solver};

use crate::config::{parse_format, Resolution, RunConfig, SceneKind};

pub const SERIES_FILE: &str = "series.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const SNAPSHOT_DIR: &str = "snapshots";

/// How a run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed { time: f64 },
    Aborted { message: String },
}

pub enum AnyScene {
    Two(Scene<2>),
    Three(Scene<3>),
}

fn material_with(cfg: &RunConfig, body: &str, base: &ulsph::Material) -> anyhow::Result<ulsph::Material> {
    cfg.material_for(body).apply(base).with_context(|| format!("material of body '{body}'"))
}

/// Builds the configured scene with all overrides applied.
pub fn build_scene(cfg: &RunConfig) -> anyhow::Result<AnyScene> {
    let ratio = |r: Resolution| match r {
        Resolution::Ratio(n) => n,
        Resolution::Spacing(_) => unreachable!("ratio scene"),
    };
    let spacing = |r: Resolution| match r {
        Resolution::Spacing(dp) => dp,
        Resolution::Ratio(_) => unreachable!("spacing scene"),
    };
    let mut scene = match cfg.scene {
        SceneKind::OscillatingPlate => {
            let mut p = scenes::PlateParams { h_over_dp: ratio(cfg.resolution), ..Default::default() };
            p.vf = cfg.vf.unwrap_or(p.vf);
            p.material = material_with(cfg, "plate", &p.material)?;
            AnyScene::Two(scenes::oscillating_plate_with(&p)?)
        }
        SceneKind::CollidingRings => {
            let mut p = scenes::RingsParams { dp: spacing(cfg.resolution), ..Default::default() };
            p.v0_factor = cfg.v0_factor.unwrap_or(p.v0_factor);
            let left = material_with(cfg, "left", &p.material)?;
            if left != material_with(cfg, "right", &p.material)? {
                bail!("the two rings share one material; set it in [material] or identically for both");
            }
            p.material = left;
            AnyScene::Two(scenes::colliding_rings_with(&p)?)
        }
        SceneKind::SpinningPlate => {
            let mut p = scenes::SpinningParams { dp: spacing(cfg.resolution), ..Default::default() };
            p.material = material_with(cfg, "plate", &p.material)?;
            AnyScene::Two(scenes::spinning_plate_with(&p)?)
        }
        SceneKind::BendingColumn => {
            let mut p = scenes::ColumnParams { l_over_dp: ratio(cfg.resolution), ..Default::default() };
            p.material = material_with(cfg, "column", &p.material)?;
            AnyScene::Three(scenes::bending_column_with(&p)?)
        }
        SceneKind::TaylorBarRound | SceneKind::TaylorBarSquare => {
            let kind = if cfg.scene == SceneKind::TaylorBarRound { TaylorBar::Round } else { TaylorBar::Square };
            let mut p = scenes::TaylorParams::new(kind, ratio(cfg.resolution));
            p.material = material_with(cfg, "bar", &p.material)?;
            AnyScene::Three(scenes::taylor_bar_with(&p)?)
        }
        SceneKind::Hvi => {
            let mut p = scenes::HviParams { dp: spacing(cfg.resolution), ..Default::default() };
            p.projectile = material_with(cfg, "projectile", &p.projectile)?;
            p.target = material_with(cfg, "target", &p.target)?;
            AnyScene::Two(scenes::hvi_with(&p)?)
        }
    };
    match &mut scene {
        AnyScene::Two(s) => configure(s, cfg)?,
        AnyScene::Three(s) => configure(s, cfg)?,
    }
    Ok(scene)
}

fn configure<const D: usize>(scene: &mut Scene<D>, cfg: &RunConfig) -> anyhow::Result<()> {
    scene.settings.method = cfg.method;
    if let Some(xi) = cfg.xi {
        scene.set_xi(xi)?;
    }
    if let Some(t) = cfg.end_time {
        scene.end_time = t;
    }
    if let Some(dt) = cfg.sample_every {
        scene.sample_interval = dt;
    }
    Ok(())
}

/// Output schedule and provenance of a run.
#[derive(Debug, Clone)]
pub struct Plan {
    pub out: PathBuf,
    pub end_time: f64,
    pub sample_every: f64,
    pub snapshot_every: f64,
    pub format: SnapshotFormat,
    pub bodies: Vec<String>,
    pub header: Vec<(String, String)>,
}

fn format_name(f: SnapshotFormat) -> &'static str {
    match f {
        SnapshotFormat::Csv => "csv",
        SnapshotFormat::Vtk => "vtk",
    }
}

/// Resolved configuration as header lines.
pub fn header_for<const D: usize>(cfg: &RunConfig, scene: &Scene<D>, plan_every: (f64, f64)) -> Vec<(String, String)> {
    let mut h: Vec<(String, String)> = vec![
        ("ulsph_version".into(), env!("CARGO_PKG_VERSION").into()),
        ("scene".into(), cfg.scene.name().into()),
        ("dimension".into(), D.to_string()),
        ("method".into(), cfg.method.name().into()),
        ("dp".into(), scene.dp().to_string()),
        ("end_time".into(), scene.end_time.to_string()),
        ("sample_every".into(), plan_every.0.to_string()),
        ("snapshot_every".into(), plan_every.1.to_string()),
        ("format".into(), format_name(cfg.format).into()),
        ("deterministic".into(), cfg.deterministic.to_string()),
        ("bodies".into(), scene.bodies.join(",")),
    ];
    if let Resolution::Ratio(r) = cfg.resolution {
        h.push(("ratio".into(), r.to_string()));
    }
    for (k, v) in &scene.parameters {
        h.push((format!("scene.{k}"), v.clone()));
    }
    for (k, m) in scene.particles.materials.iter().enumerate() {
        h.push((
            format!("material.{k}"),
            format!(
                "rho0={} E={} nu={} c0={} sigmaY={} kappa={} p_min={} xi={}",
                m.density,
                m.youngs_modulus,
                m.poisson_ratio,
                m.sound_speed,
                m.plasticity.map_or("none".to_string(), |p| p.yield_stress.to_string()),
                m.plasticity.map_or("none".to_string(), |p| p.hardening_modulus.to_string()),
                m.failure_pressure.map_or("none".to_string(), |p| p.to_string()),
                m.xi
            ),
        ));
    }
    for (k, v) in &scene.references {
        h.push((format!("reference.{k}"), v.to_string()));
    }
    h
}

/// Fresh run from a resolved configuration.
pub fn run_config(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    match build_scene(cfg)? {
        AnyScene::Two(scene) => start(cfg, &scene),
        AnyScene::Three(scene) => start(cfg, &scene),
    }
}

fn start<const D: usize>(cfg: &RunConfig, scene: &Scene<D>) -> anyhow::Result<Outcome> {
    let snapshot_every = cfg.snapshot_every.unwrap_or(scene.end_time / 10.0);
    let plan = Plan {
        out: cfg.out.clone(),
        end_time: scene.end_time,
        sample_every: scene.sample_interval,
        snapshot_every,
        format: cfg.format,
        bodies: scene.bodies.clone(),
        header: header_for(cfg, scene, (scene.sample_interval, snapshot_every)),
    };
    info!(
        "{}: {} particles, dp = {}, method {}, to t = {}",
        cfg.scene.name(),
        scene.particles.len(),
        scene.dp(),
        cfg.method.name(),
        scene.end_time
    );
    drive(Solver::from_scene(scene), &plan)
}

/// Settings a resumed run may change.
#[derive(Debug, Clone, Default)]
pub struct ResumeOverrides {
    pub end_time: Option<f64>,
    pub out: Option<PathBuf>,
    pub snapshot_every: Option<f64>,
    pub format: Option<SnapshotFormat>,
}

fn header_value<'a>(header: &'a [(String, String)], key: &str, path: &Path) -> anyhow::Result<&'a str> {
    header
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .with_context(|| format!("checkpoint {} lacks header key '{key}'", path.display()))
}

fn header_f64(header: &[(String, String)], key: &str, path: &Path) -> anyhow::Result<f64> {
    let v = header_value(header, key, path)?;
    v.parse().with_context(|| format!("header key '{key}' = '{v}' is not a number"))
}

/// Continues a run from a checkpoint written by this driver.
pub fn resume(path: &Path, o: &ResumeOverrides) -> anyhow::Result<Outcome> {
    match io::checkpoint_dimension(path)? {
        2 => resume_dim::<2>(path, o),
        3 => resume_dim::<3>(path, o),
        d => bail!("unsupported dimension {d} in {}", path.display()),
    }
}

fn resume_dim<const D: usize>(path: &Path, o: &ResumeOverrides) -> anyhow::Result<Outcome> {
    let mut header = io::checkpoint_header(path)?;
    let solver = io::read_checkpoint::<D>(path)?;
    let format = match o.format {
        Some(f) => f,
        None => parse_format(header_value(&header, "format", path)?).map_err(anyhow::Error::msg)?,
    };
    let plan = Plan {
        out: o.out.clone().unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default()),
        end_time: o.end_time.map_or_else(|| header_f64(&header, "end_time", path), Ok)?,
        sample_every: header_f64(&header, "sample_every", path)?,
        snapshot_every: o.snapshot_every.map_or_else(|| header_f64(&header, "snapshot_every", path), Ok)?,
        format,
        bodies: header_value(&header, "bodies", path)?.split(',').map(str::to_string).collect(),
        header: Vec::new(),
    };
    for (k, v) in header.iter_mut() {
        match k.as_str() {
            "end_time" => *v = plan.end_time.to_string(),
            "snapshot_every" => *v = plan.snapshot_every.to_string(),
            "format" => *v = format_name(format).into(),
            _ => {}
        }
    }
    header.retain(|(k, _)| k != "resumed_from");
    header.push(("resumed_from".into(), solver.time().to_string()));
    info!("resuming {} at t = {} to t = {}", path.display(), solver.time(), plan.end_time);
    drive(solver, &Plan { header, ..plan })
}

fn series_columns<const D: usize>(solver: &Solver<D>, bodies: &[String]) -> Vec<String> {
    const AXES: [&str; 3] = ["x", "y", "z"];
    let mut cols = vec!["time".to_string()];
    for o in solver.observers() {
        for a in &AXES[..D] {
            cols.push(format!("{}_{a}", o.name));
        }
        for a in &AXES[..D] {
            cols.push(format!("{}_d{a}", o.name));
        }
    }
    cols.extend(["kinetic", "strain", "total"].map(String::from));
    if bodies.len() > 1 {
        for b in bodies {
            cols.push(format!("{b}_kinetic"));
            cols.push(format!("{b}_total"));
        }
    }
    for a in &AXES[..D] {
        cols.push(format!("p{a}"));
    }
    cols.push("angular_z".into());
    if D == 3 {
        cols.extend(["angular_x", "angular_y"].map(String::from));
    }
    cols.extend(["uniformity", "failed"].map(String::from));
    cols
}

fn series_row<const D: usize>(solver: &Solver<D>, bodies: &[String]) -> Vec<f64> {
    let sys = &solver.sys;
    let t = solver.time();
    let mut row = vec![t];
    for o in solver.observers() {
        row.extend(o.position(sys).iter());
        row.extend(o.displacement(sys).iter());
    }
    let e = energy_report(sys, t);
    row.extend([e.kinetic, e.strain, e.total]);
    if bodies.len() > 1 {
        for b in 0..bodies.len() as u32 {
            let eb = energy_report_where(sys, t, |i| sys.body[i] == b);
            row.extend([eb.kinetic, eb.total]);
        }
    }
    let m = momentum_report(sys, solver.reference_point());
    row.extend(m.linear.iter());
    row.push(m.angular[2]);
    if D == 3 {
        row.extend([m.angular[0], m.angular[1]]);
    }
    row.push(uniformity_metric(sys, solver.table()));
    row.push(sys.failed.iter().filter(|&&f| f).count() as f64);
    row
}

/// Index of the first multiple of `every` strictly after `t`.
fn next_index(t: f64, every: f64) -> u64 {
    // t / every can round below an exact multiple, so step past every
    // sample time that is not strictly ahead of t.
    let mut k = (t / every).floor().max(0.0) as u64;
    while (k as f64) * every <= t || near(k as f64 * every, t) {
        k += 1;
    }
    k
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

/// Advances to the end time, writing the series at every sample time and a
/// snapshot plus checkpoint at every snapshot time. On a numerical abort the
/// last state is written as `abort.<ext>`.
pub fn drive<const D: usize>(mut solver: Solver<D>, plan: &Plan) -> anyhow::Result<Outcome> {
    let snap_dir = plan.out.join(SNAPSHOT_DIR);
    fs::create_dir_all(&snap_dir).with_context(|| format!("creating {}", snap_dir.display()))?;
    let mut series = SeriesWriter::create(
        &plan.out.join(SERIES_FILE),
        &plan.header,
        &series_columns(&solver, &plan.bodies),
    )?;
    let snapshot = |solver: &Solver<D>, name: String| -> anyhow::Result<()> {
        let path = snap_dir.join(format!("{name}.{}", plan.format.extension()));
        let mut header = plan.header.clone();
        header.push(("time".into(), solver.time().to_string()));
        io::write_snapshot(&solver.sys, &path, plan.format, &header)?;
        Ok(())
    };
    let checkpoint = |solver: &Solver<D>| -> anyhow::Result<()> {
        io::write_checkpoint(solver, &plan.out.join(CHECKPOINT_FILE), &plan.header)?;
        Ok(())
    };

    series.write_row(&series_row(&solver, &plan.bodies))?;
    let mut last_row = solver.time();
    if solver.time() == 0.0 {
        snapshot(&solver, format!("snapshot_{:05}", 0))?;
    }
    let mut next_sample = next_index(solver.time(), plan.sample_every);
    let mut next_snap = next_index(solver.time(), plan.snapshot_every);
    while solver.time() < plan.end_time && !near(solver.time(), plan.end_time) {
        let ts = next_sample as f64 * plan.sample_every;
        let tn = next_snap as f64 * plan.snapshot_every;
        let target = ts.min(tn).min(plan.end_time);
        if let Err(e) = solver.run_until(target, |_| {}) {
            error!("numerical abort: {e}");
            snapshot(&solver, "abort".into())?;
            series.flush()?;
            return Ok(Outcome::Aborted { message: e.to_string() });
        }
        let t = solver.time();
        if near(t, ts) || t >= ts {
            series.write_row(&series_row(&solver, &plan.bodies))?;
            last_row = t;
            next_sample = next_index(t, plan.sample_every);
        }
        if near(t, tn) || t >= tn {
            snapshot(&solver, format!("snapshot_{next_snap:05}"))?;
            checkpoint(&solver)?;
            next_snap = next_index(t, plan.snapshot_every);
        }
    }
    let t = solver.time();
    if t != last_row {
        series.write_row(&series_row(&solver, &plan.bodies))?;
    }
    snapshot(&solver, "final".into())?;
    checkpoint(&solver)?;
    series.flush()?;
    let stats = solver.stats();
    info!(
        "done at t = {t}: {} advection and {} acoustic steps",
        stats.advection_steps, stats.acoustic_steps
    );
    Ok(Outcome::Completed { time: t })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_indices() {
        assert_eq!(next_index(0.0, 0.005), 1);
        assert_eq!(next_index(0.1, 0.005), 21);
        assert_eq!(next_index(20.0 * 0.005, 0.005), 21);
        assert_eq!(next_index(0.1012, 0.005), 21);
        assert_eq!(next_index(29.0 * 0.005, 0.005), 30);
        assert_eq!(next_index(0.145, 0.005), 30);
    }
}
