//! Run configuration: TOML file, flags and environment merged into one
//! resolved [`RunConfig`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use ulsph::io::SnapshotFormat;
use ulsph::Method;

/// Benchmark scenes the driver can build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    OscillatingPlate,
    CollidingRings,
    SpinningPlate,
    BendingColumn,
    TaylorBarRound,
    TaylorBarSquare,
    Hvi,
}

/// How a scene's resolution is specified natively.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NativeResolution {
    /// Particles across a characteristic length.
    Ratio { name: &'static str, length: f64, default: usize },
    /// Particle spacing, with the length used to translate a ratio.
    Spacing { length: f64, default: f64 },
}

impl SceneKind {
    pub const ALL: [SceneKind; 7] = [
        SceneKind::OscillatingPlate,
        SceneKind::CollidingRings,
        SceneKind::SpinningPlate,
        SceneKind::BendingColumn,
        SceneKind::TaylorBarRound,
        SceneKind::TaylorBarSquare,
        SceneKind::Hvi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::OscillatingPlate => "oscillating_plate",
            SceneKind::CollidingRings => "colliding_rings",
            SceneKind::SpinningPlate => "spinning_plate",
            SceneKind::BendingColumn => "bending_column",
            SceneKind::TaylorBarRound => "taylor_bar_round",
            SceneKind::TaylorBarSquare => "taylor_bar_square",
            SceneKind::Hvi => "hvi",
        }
    }

    pub fn dimension(self) -> usize {
        match self {
            SceneKind::BendingColumn | SceneKind::TaylorBarRound | SceneKind::TaylorBarSquare => 3,
            _ => 2,
        }
    }

    pub fn resolution(self) -> NativeResolution {
        use ulsph::scenes;
        match self {
            SceneKind::OscillatingPlate => NativeResolution::Ratio { name: "H/dp", length: 0.02, default: 10 },
            SceneKind::BendingColumn => NativeResolution::Ratio { name: "L/dp", length: 1.0, default: 6 },
            SceneKind::TaylorBarRound => {
                NativeResolution::Ratio { name: "R/dp", length: scenes::ROUND_BAR_RADIUS, default: 6 }
            }
            SceneKind::TaylorBarSquare => {
                NativeResolution::Ratio { name: "L/dp", length: scenes::SQUARE_BAR_SIDE, default: 10 }
            }
            SceneKind::CollidingRings => NativeResolution::Spacing { length: 0.01, default: 0.001 },
            SceneKind::SpinningPlate => NativeResolution::Spacing { length: 1.0, default: 0.05 },
            SceneKind::Hvi => NativeResolution::Spacing { length: 0.002, default: 2.0e-4 },
        }
    }

    /// Body names grouped by shared material.
    pub fn material_groups(self) -> &'static [&'static [&'static str]] {
        match self {
            SceneKind::OscillatingPlate | SceneKind::SpinningPlate => &[&["plate"]],
            SceneKind::CollidingRings => &[&["left", "right"]],
            SceneKind::BendingColumn => &[&["column"]],
            SceneKind::TaylorBarRound | SceneKind::TaylorBarSquare => &[&["bar"]],
            SceneKind::Hvi => &[&["projectile"], &["target"]],
        }
    }
}

impl std::str::FromStr for SceneKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SceneKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = SceneKind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown scene '{s}'; expected one of: {}", names.join(", "))
        })
    }
}

pub fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

pub fn parse_format(s: &str) -> Result<SnapshotFormat, String> {
    match s.to_ascii_lowercase().as_str() {
        "csv" => Ok(SnapshotFormat::Csv),
        "vtk" => Ok(SnapshotFormat::Vtk),
        other => Err(format!("unknown snapshot format '{other}'; expected csv or vtk")),
    }
}

/// Material keys accepted in `[material]` and `[body.<name>]` sections.
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialOverride {
    pub rho0: Option<f64>,
    #[serde(rename = "E")]
    pub youngs_modulus: Option<f64>,
    pub nu: Option<f64>,
    #[serde(rename = "sigmaY")]
    pub yield_stress: Option<f64>,
    pub kappa: Option<f64>,
    pub p_min: Option<f64>,
    pub xi: Option<f64>,
    pub c0: Option<f64>,
}

impl MaterialOverride {
    fn or(self, base: MaterialOverride) -> MaterialOverride {
        MaterialOverride {
            rho0: self.rho0.or(base.rho0),
            youngs_modulus: self.youngs_modulus.or(base.youngs_modulus),
            nu: self.nu.or(base.nu),
            yield_stress: self.yield_stress.or(base.yield_stress),
            kappa: self.kappa.or(base.kappa),
            p_min: self.p_min.or(base.p_min),
            xi: self.xi.or(base.xi),
            c0: self.c0.or(base.c0),
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == MaterialOverride::default()
    }

    /// Applies the overrides to `base`. A sound speed that was set
    /// independently of the elastic constants survives unless `c0` is given.
    pub fn apply(&self, base: &ulsph::Material) -> anyhow::Result<ulsph::Material> {
        if self.is_empty() {
            return Ok(*base);
        }
        let derived = ulsph::Material::elastic(base.density, base.youngs_modulus, base.poisson_ratio)?;
        let explicit_c0 = (base.sound_speed != derived.sound_speed).then_some(base.sound_speed);
        let rho0 = self.rho0.unwrap_or(base.density);
        let e = self.youngs_modulus.unwrap_or(base.youngs_modulus);
        let nu = self.nu.unwrap_or(base.poisson_ratio);
        let sy = self.yield_stress.or(base.plasticity.map(|p| p.yield_stress));
        let mut m = match sy {
            Some(sy) => {
                let kappa = self.kappa.or(base.plasticity.map(|p| p.hardening_modulus)).unwrap_or(0.0);
                ulsph::Material::plastic(rho0, e, nu, sy, kappa)?
            }
            None if self.kappa.is_some() => bail!("kappa requires a plastic material (set sigmaY)"),
            None => ulsph::Material::elastic(rho0, e, nu)?,
        };
        if let Some(c0) = self.c0.or(explicit_c0) {
            m = m.with_sound_speed(c0)?;
        }
        if let Some(p) = self.p_min.or(base.failure_pressure) {
            m = m.with_failure_pressure(p)?;
        }
        m.with_xi(self.xi.unwrap_or(base.xi)).map_err(Into::into)
    }
}

/// `[run]` section of the config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRun {
    pub scene: Option<String>,
    pub ratio: Option<usize>,
    pub dp: Option<f64>,
    pub method: Option<String>,
    pub xi: Option<f64>,
    pub end_time: Option<f64>,
    pub out: Option<PathBuf>,
    pub snapshot_every: Option<f64>,
    pub sample_every: Option<f64>,
    pub threads: Option<usize>,
    pub deterministic: Option<bool>,
    pub format: Option<String>,
    pub vf: Option<f64>,
    pub v0_factor: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: FileRun,
    #[serde(default)]
    pub material: MaterialOverride,
    #[serde(default)]
    pub body: BTreeMap<String, MaterialOverride>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Values supplied on the command line or through the environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scene: Option<SceneKind>,
    pub ratio: Option<usize>,
    pub dp: Option<f64>,
    pub method: Option<Method>,
    pub xi: Option<f64>,
    pub end_time: Option<f64>,
    pub out: Option<PathBuf>,
    pub snapshot_every: Option<f64>,
    pub sample_every: Option<f64>,
    pub threads: Option<usize>,
    pub deterministic: bool,
    pub format: Option<SnapshotFormat>,
    pub vf: Option<f64>,
    pub v0_factor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolution {
    Ratio(usize),
    Spacing(f64),
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scene: SceneKind,
    pub resolution: Resolution,
    pub method: Method,
    pub xi: Option<f64>,
    pub end_time: Option<f64>,
    pub out: PathBuf,
    pub snapshot_every: Option<f64>,
    pub sample_every: Option<f64>,
    pub threads: Option<usize>,
    pub deterministic: bool,
    pub format: SnapshotFormat,
    pub vf: Option<f64>,
    pub v0_factor: Option<f64>,
    pub material: MaterialOverride,
    pub bodies: BTreeMap<String, MaterialOverride>,
}

pub const DEFAULT_OUT: &str = "ulsph-out";

fn positive(name: &str, v: Option<f64>) -> anyhow::Result<Option<f64>> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => bail!("{name} must be positive and finite, got {x}"),
        other => Ok(other),
    }
}

impl RunConfig {
    /// Merges flags over the file; flags win.
    pub fn resolve(file: FileConfig, flags: Overrides) -> anyhow::Result<Self> {
        let run = file.run;
        let scene = match (flags.scene, run.scene) {
            (Some(s), _) => s,
            (None, Some(name)) => name.parse::<SceneKind>().map_err(anyhow::Error::msg)?,
            (None, None) => bail!("no scene given; use --scene or set run.scene in the config file"),
        };
        let method = match (flags.method, run.method) {
            (Some(m), _) => m,
            (None, Some(m)) => parse_method(&m).map_err(anyhow::Error::msg)?,
            (None, None) => Method::Gnog,
        };
        let format = match (flags.format, run.format) {
            (Some(f), _) => f,
            (None, Some(f)) => parse_format(&f).map_err(anyhow::Error::msg)?,
            (None, None) => SnapshotFormat::Csv,
        };
        let (ratio, dp) = if flags.ratio.is_some() || flags.dp.is_some() {
            (flags.ratio, flags.dp)
        } else {
            (run.ratio, run.dp)
        };
        let resolution = resolve_resolution(scene, ratio, dp)?;

        let vf = flags.vf.or(run.vf);
        if vf.is_some() && scene != SceneKind::OscillatingPlate {
            bail!("vf applies to oscillating_plate only, not {}", scene.name());
        }
        let v0_factor = positive("v0_factor", flags.v0_factor.or(run.v0_factor))?;
        if v0_factor.is_some() && scene != SceneKind::CollidingRings {
            bail!("v0_factor applies to colliding_rings only, not {}", scene.name());
        }
        let known: Vec<&str> = scene.material_groups().iter().flat_map(|g| g.iter().copied()).collect();
        for name in file.body.keys() {
            if !known.contains(&name.as_str()) {
                bail!("scene {} has no body '{name}'; bodies: {}", scene.name(), known.join(", "));
            }
        }
        let xi = flags.xi.or(run.xi);
        if let Some(x) = xi {
            if !(x.is_finite() && x >= 0.0) {
                bail!("xi must be non-negative and finite, got {x}");
            }
        }
        if let Some(0) = flags.threads.or(run.threads) {
            bail!("threads must be at least 1");
        }
        Ok(Self {
            scene,
            resolution,
            method,
            xi,
            end_time: positive("end_time", flags.end_time.or(run.end_time))?,
            out: flags.out.or(run.out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            snapshot_every: positive("snapshot_every", flags.snapshot_every.or(run.snapshot_every))?,
            sample_every: positive("sample_every", flags.sample_every.or(run.sample_every))?,
            threads: flags.threads.or(run.threads),
            deterministic: flags.deterministic || run.deterministic.unwrap_or(false),
            format,
            vf,
            v0_factor,
            material: file.material,
            bodies: file.body,
        })
    }

    /// Material override for one body: its own section over `[material]`.
    pub fn material_for(&self, body: &str) -> MaterialOverride {
        self.bodies.get(body).copied().unwrap_or_default().or(self.material)
    }
}

fn resolve_resolution(scene: SceneKind, ratio: Option<usize>, dp: Option<f64>) -> anyhow::Result<Resolution> {
    if ratio.is_some() && dp.is_some() {
        bail!("give either ratio or dp, not both");
    }
    let dp = positive("dp", dp)?;
    Ok(match (scene.resolution(), ratio, dp) {
        (NativeResolution::Ratio { default, .. }, None, None) => Resolution::Ratio(default),
        (NativeResolution::Ratio { .. }, Some(r), None) => Resolution::Ratio(r),
        (NativeResolution::Ratio { name, length, .. }, None, Some(dp)) => {
            let r = length / dp;
            if (r - r.round()).abs() > 1e-6 * r || r.round() < 1.0 {
                bail!("dp = {dp} does not divide the {} reference length {length} ({name} = {r})", scene.name());
            }
            Resolution::Ratio(r.round() as usize)
        }
        (NativeResolution::Spacing { default, .. }, None, None) => Resolution::Spacing(default),
        (NativeResolution::Spacing { .. }, None, Some(dp)) => Resolution::Spacing(dp),
        (NativeResolution::Spacing { length, .. }, Some(r), None) => {
            if r == 0 {
                bail!("ratio must be at least 1");
            }
            Resolution::Spacing(length / r as f64)
        }
        (_, Some(_), Some(_)) => unreachable!("rejected above"),
    })
}
