//! Snapshot, time-series and checkpoint files.
//!
//! Every file starts with `#` comment lines carrying the run configuration.
//! Floating-point values are written in their shortest round-trip form, so a
//! checkpoint restores the exact state.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diagnostics::{von_mises_strain, von_mises_stress, Observer};
use crate::forces::{Method, PressureFlux};
use crate::integrator::{Solver, SolverError, SolverSettings};
use crate::kernel::KernelSpec;
use crate::material::{Material, Plasticity};
use crate::neighbor::PairAccumulator;
use crate::particles::{ParticleKind, ParticleSystem};
use crate::{Tensor, Vector};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: VTK export failed: {message}")]
    Vtk { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: checkpoint is {found}D, expected {expected}D")]
    Dimension { path: PathBuf, found: usize, expected: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_header(out: &mut impl Write, header: &[(String, String)], path: &Path) -> Result<(), IoError> {
    for (k, v) in header {
        writeln!(out, "# {k} = {v}").map_err(io_err(path))?;
    }
    Ok(())
}

/// Snapshot file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SnapshotFormat {
    #[default]
    Csv,
    Vtk,
}

impl SnapshotFormat {
    pub fn extension(self) -> &'static str {
        match self {
            SnapshotFormat::Csv => "csv",
            SnapshotFormat::Vtk => "vtk",
        }
    }
}

/// Snapshot column names in file order.
pub fn snapshot_columns<const D: usize>() -> Vec<&'static str> {
    let mut cols = vec!["id", "body", "x", "y"];
    if D == 3 {
        cols.push("z");
    }
    cols.extend(["vx", "vy"]);
    if D == 3 {
        cols.push("vz");
    }
    cols.extend(["rho", "p", "vm_stress", "vm_strain", "gamma", "failed"]);
    cols
}

/// Writes one snapshot. Wall particles are omitted.
pub fn write_snapshot<const D: usize>(
    sys: &ParticleSystem<D>,
    path: &Path,
    format: SnapshotFormat,
    header: &[(String, String)],
) -> Result<(), IoError> {
    match format {
        SnapshotFormat::Csv => write_snapshot_csv(sys, path, header),
        SnapshotFormat::Vtk => write_snapshot_vtk(sys, path, header),
    }
}

fn write_snapshot_csv<const D: usize>(
    sys: &ParticleSystem<D>,
    path: &Path,
    header: &[(String, String)],
) -> Result<(), IoError> {
    let mut out = create(path)?;
    write_header(&mut out, header, path)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |source| IoError::Csv { path: path.to_path_buf(), source };
    w.write_record(snapshot_columns::<D>()).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::with_capacity(16);
    for i in (0..sys.len()).filter(|&i| !sys.is_wall(i)) {
        row.clear();
        row.push(i.to_string());
        row.push(sys.body[i].to_string());
        row.extend(sys.position[i].iter().map(|x| x.to_string()));
        row.extend(sys.velocity[i].iter().map(|x| x.to_string()));
        row.push(sys.density[i].to_string());
        row.push(sys.pressure[i].to_string());
        row.push(von_mises_stress(&sys.shear_stress[i]).to_string());
        row.push(von_mises_strain(&sys.shear_strain[i]).to_string());
        row.push(sys.gamma[i].to_string());
        row.push(u8::from(sys.failed[i]).to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn write_snapshot_vtk<const D: usize>(
    sys: &ParticleSystem<D>,
    path: &Path,
    header: &[(String, String)],
) -> Result<(), IoError> {
    use vtkio::model::{
        Attribute, Attributes, ByteOrder, DataSet, Piece, PolyDataPiece, Version, VertexNumbers, Vtk,
    };
    let ids: Vec<usize> = (0..sys.len()).filter(|&i| !sys.is_wall(i)).collect();
    let mut points = Vec::with_capacity(3 * ids.len());
    let mut velocity = Vec::with_capacity(3 * ids.len());
    for &i in &ids {
        for k in 0..3 {
            points.push(if k < D { sys.position[i][k] } else { 0.0 });
            velocity.push(if k < D { sys.velocity[i][k] } else { 0.0 });
        }
    }
    let scalar = |name: &str, f: &dyn Fn(usize) -> f64| {
        Attribute::scalars(name, 1).with_data(ids.iter().map(|&i| f(i)).collect::<Vec<f64>>())
    };
    let mut vertices = Vec::with_capacity(2 * ids.len());
    for k in 0..ids.len() {
        vertices.extend([1u32, k as u32]);
    }
    let piece = PolyDataPiece {
        points: points.into(),
        verts: Some(VertexNumbers::Legacy { num_cells: ids.len() as u32, vertices }),
        lines: None,
        polys: None,
        strips: None,
        data: Attributes {
            point: vec![
                scalar("id", &|i| i as f64),
                scalar("body", &|i| sys.body[i] as f64),
                Attribute::vectors("velocity").with_data(velocity),
                scalar("rho", &|i| sys.density[i]),
                scalar("p", &|i| sys.pressure[i]),
                scalar("vm_stress", &|i| von_mises_stress(&sys.shear_stress[i])),
                scalar("vm_strain", &|i| von_mises_strain(&sys.shear_strain[i])),
                scalar("gamma", &|i| sys.gamma[i]),
                scalar("failed", &|i| f64::from(u8::from(sys.failed[i]))),
            ],
            cell: Vec::new(),
        },
    };
    let title = header.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ");
    let vtk = Vtk {
        version: Version { major: 4, minor: 2 },
        // Legacy titles are limited to one line of 256 characters.
        title: title.chars().take(255).collect(),
        byte_order: ByteOrder::BigEndian,
        data: DataSet::PolyData { meta: None, pieces: vec![Piece::Inline(Box::new(piece))] },
        file_path: None,
    };
    vtk.export_ascii(path).map_err(|e| IoError::Vtk { path: path.to_path_buf(), message: e.to_string() })
}

/// Streaming CSV writer for sampled scalar channels.
pub struct SeriesWriter {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
    width: usize,
}

impl SeriesWriter {
    pub fn create(path: &Path, header: &[(String, String)], columns: &[String]) -> Result<Self, IoError> {
        let mut out = create(path)?;
        write_header(&mut out, header, path)?;
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(columns).map_err(|source| IoError::Csv { path: path.to_path_buf(), source })?;
        Ok(Self { path: path.to_path_buf(), writer, width: columns.len() })
    }

    pub fn write_row(&mut self, values: &[f64]) -> Result<(), IoError> {
        assert_eq!(values.len(), self.width, "row width does not match the header");
        self.writer
            .write_record(values.iter().map(|v| v.to_string()))
            .map_err(|source| IoError::Csv { path: self.path.clone(), source })
    }

    pub fn flush(&mut self) -> Result<(), IoError> {
        self.writer.flush().map_err(io_err(&self.path))
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

const CHECKPOINT_MAGIC: &str = "ulsph-checkpoint 1";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn kind_code(k: ParticleKind) -> &'static str {
    match k {
        ParticleKind::Free => "F",
        ParticleKind::Clamped => "C",
        ParticleKind::Wall => "W",
    }
}

/// Writes the complete solver state, including pair penalties.
pub fn write_checkpoint<const D: usize>(
    solver: &Solver<D>,
    path: &Path,
    header: &[(String, String)],
) -> Result<(), IoError> {
    let mut out = create(path)?;
    let mut s = String::new();
    let _ = writeln!(s, "{CHECKPOINT_MAGIC}");
    for (k, v) in header {
        let _ = writeln!(s, "# {k} = {v}");
    }
    let settings = solver.settings();
    let _ = writeln!(s, "dim {D}");
    let _ = writeln!(s, "time {}", solver.time());
    let _ = writeln!(s, "dp {}", solver.kernel().dp);
    let _ = writeln!(
        s,
        "settings {} {} {} {} {} {}",
        settings.method.name(),
        match settings.flux {
            PressureFlux::Riemann => "riemann",
            PressureFlux::Mean => "mean",
        },
        settings.cfl_advection,
        settings.cfl_acoustic,
        fmt_opt(settings.fixed_acoustic_dt),
        settings.speed_limit_factor,
    );
    let _ = writeln!(s, "gravity {}", join(settings.gravity.iter()));
    let _ = writeln!(s, "reference {}", join(solver.reference_point().iter()));
    let sys = &solver.sys;
    for m in &sys.materials {
        let (sy, kappa) = m.plasticity.map_or((None, None), |p| (Some(p.yield_stress), Some(p.hardening_modulus)));
        let _ = writeln!(
            s,
            "material {} {} {} {} {} {} {} {} {} {}",
            m.density,
            m.youngs_modulus,
            m.poisson_ratio,
            m.bulk_modulus,
            m.shear_modulus,
            m.sound_speed,
            fmt_opt(sy),
            fmt_opt(kappa),
            fmt_opt(m.failure_pressure),
            m.xi
        );
    }
    for o in solver.observers() {
        let _ = writeln!(s, "observer {} {} {}", o.name, o.particle, join(o.initial_position.iter()));
    }
    let drho = solver.drho_dt();
    for i in 0..sys.len() {
        let _ = writeln!(
            s,
            "p {} {} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            kind_code(sys.kind[i]),
            sys.body[i],
            sys.material[i],
            join(sys.position[i].iter()),
            join(sys.velocity[i].iter()),
            sys.density[i],
            sys.mass[i],
            sys.pressure[i],
            join(sys.shear_stress[i].iter()),
            join(sys.shear_strain[i].iter()),
            sys.hardening[i],
            sys.gamma[i],
            u8::from(sys.failed[i]),
            drho[i],
            sys.volume[i],
            join(solver.accelerations()[i].iter()),
        );
    }
    let penalty = solver.penalty();
    for (p, (i, j)) in penalty.keys().enumerate() {
        let v = penalty.slot(p);
        if v.iter().any(|x| *x != 0.0) {
            let _ = writeln!(s, "pair {i} {j} {}", join(v.iter()));
        }
    }
    out.write_all(s.as_bytes()).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

fn join<'a>(values: impl Iterator<Item = &'a f64>) -> String {
    values.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Dimension recorded in a checkpoint file.
pub fn checkpoint_dimension(path: &Path) -> Result<usize, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if let Some(rest) = line.strip_prefix("dim ") {
            return rest.trim().parse().map_err(|_| IoError::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: format!("invalid dimension '{rest}'"),
            });
        }
    }
    Err(IoError::Parse { path: path.to_path_buf(), line: 0, message: "missing dimension".into() })
}

/// Header comments (`# key = value`) of a checkpoint.
pub fn checkpoint_header(path: &Path) -> Result<Vec<(String, String)>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some((k, v)) = rest.split_once(" = ") {
                out.push((k.to_string(), v.to_string()));
            }
        } else if line.starts_with("dim ") {
            break;
        }
    }
    Ok(out)
}

struct Tokens<'a> {
    path: &'a Path,
    line: usize,
    iter: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn err(&self, message: String) -> IoError {
        IoError::Parse { path: self.path.to_path_buf(), line: self.line, message }
    }

    fn word(&mut self) -> Result<&'a str, IoError> {
        let line = self.line;
        let path = self.path;
        self.iter
            .next()
            .ok_or_else(|| IoError::Parse { path: path.to_path_buf(), line, message: "missing field".into() })
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        let w = self.word()?.to_string();
        w.parse().map_err(|_| self.err(format!("invalid number '{w}'")))
    }

    fn opt(&mut self) -> Result<Option<f64>, IoError> {
        let w = self.word()?.to_string();
        if w == "none" {
            Ok(None)
        } else {
            w.parse().map(Some).map_err(|_| self.err(format!("invalid number '{w}'")))
        }
    }

    fn int<T: std::str::FromStr>(&mut self) -> Result<T, IoError> {
        let w = self.word()?.to_string();
        w.parse().map_err(|_| self.err(format!("invalid integer '{w}'")))
    }

    fn vector<const D: usize>(&mut self) -> Result<Vector<D>, IoError> {
        let mut v = Vector::<D>::zeros();
        for k in 0..D {
            v[k] = self.f64()?;
        }
        Ok(v)
    }

    fn tensor<const D: usize>(&mut self) -> Result<Tensor<D>, IoError> {
        // Column-major, matching nalgebra iteration order.
        let mut t = Tensor::<D>::zeros();
        for c in 0..D {
            for r in 0..D {
                t[(r, c)] = self.f64()?;
            }
        }
        Ok(t)
    }
}

/// Restores a solver written by [`write_checkpoint`].
pub fn read_checkpoint<const D: usize>(path: &Path) -> Result<Solver<D>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut time = None;
    let mut dp = None;
    let mut settings = SolverSettings::<D>::default();
    let mut reference = None;
    let mut materials = Vec::new();
    let mut observers = Vec::new();
    let mut particles: Vec<String> = Vec::new();
    let mut pairs = Vec::new();
    let mut first = true;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if first {
            if line.trim() != CHECKPOINT_MAGIC {
                return Err(IoError::Parse { path: path.to_path_buf(), line: 1, message: "not a checkpoint file".into() });
            }
            first = false;
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut t = Tokens { path, line: n + 1, iter: line.split_whitespace() };
        match t.word()? {
            "dim" => {
                let found: usize = t.int()?;
                if found != D {
                    return Err(IoError::Dimension { path: path.to_path_buf(), found, expected: D });
                }
            }
            "time" => time = Some(t.f64()?),
            "dp" => dp = Some(t.f64()?),
            "settings" => {
                let method = t.word()?.to_string();
                settings.method = method.parse::<Method>().map_err(|e| t.err(e))?;
                settings.flux = match t.word()? {
                    "riemann" => PressureFlux::Riemann,
                    "mean" => PressureFlux::Mean,
                    other => return Err(t.err(format!("unknown pressure flux '{other}'"))),
                };
                settings.cfl_advection = t.f64()?;
                settings.cfl_acoustic = t.f64()?;
                settings.fixed_acoustic_dt = t.opt()?;
                settings.speed_limit_factor = t.f64()?;
            }
            "gravity" => settings.gravity = t.vector()?,
            "reference" => reference = Some(t.vector::<D>()?),
            "material" => {
                let density = t.f64()?;
                let youngs_modulus = t.f64()?;
                let poisson_ratio = t.f64()?;
                let bulk_modulus = t.f64()?;
                let shear_modulus = t.f64()?;
                let sound_speed = t.f64()?;
                let sy = t.opt()?;
                let kappa = t.opt()?;
                let failure_pressure = t.opt()?;
                let xi = t.f64()?;
                let plasticity = sy.map(|yield_stress| Plasticity { yield_stress, hardening_modulus: kappa.unwrap_or(0.0) });
                materials.push(Material {
                    density,
                    youngs_modulus,
                    poisson_ratio,
                    bulk_modulus,
                    shear_modulus,
                    sound_speed,
                    plasticity,
                    failure_pressure,
                    xi,
                });
            }
            "observer" => {
                let name = t.word()?.to_string();
                let particle = t.int()?;
                let initial_position = t.vector()?;
                observers.push(Observer { name, particle, initial_position });
            }
            "p" => particles.push(line.clone()),
            "pair" => {
                let i: usize = t.int()?;
                let j: usize = t.int()?;
                pairs.push(((i, j), t.vector::<D>()?));
            }
            other => return Err(t.err(format!("unknown record '{other}'"))),
        }
    }
    let missing = |what: &str| IoError::Parse { path: path.to_path_buf(), line: 0, message: format!("missing {what}") };
    let time = time.ok_or_else(|| missing("time"))?;
    let dp = dp.ok_or_else(|| missing("dp"))?;

    let mut sys = ParticleSystem::<D>::new(materials);
    let mut drho = Vec::with_capacity(particles.len());
    let mut accel = Vec::with_capacity(particles.len());
    for (n, line) in particles.iter().enumerate() {
        let mut t = Tokens { path, line: n + 1, iter: line.split_whitespace() };
        t.word()?;
        let kind = match t.word()? {
            "F" => ParticleKind::Free,
            "C" => ParticleKind::Clamped,
            "W" => ParticleKind::Wall,
            other => return Err(t.err(format!("unknown particle kind '{other}'"))),
        };
        let body: u32 = t.int()?;
        let material: u16 = t.int()?;
        if material as usize >= sys.materials.len() {
            return Err(t.err(format!("material index {material} out of range")));
        }
        sys.position.push(t.vector()?);
        sys.velocity.push(t.vector()?);
        sys.density.push(t.f64()?);
        sys.mass.push(t.f64()?);
        sys.pressure.push(t.f64()?);
        sys.shear_stress.push(t.tensor()?);
        sys.shear_strain.push(t.tensor()?);
        sys.hardening.push(t.f64()?);
        sys.gamma.push(t.f64()?);
        sys.failed.push(t.int::<u8>()? != 0);
        drho.push(t.f64()?);
        sys.volume.push(t.f64()?);
        accel.push(t.vector::<D>()?);
        sys.kind.push(kind);
        sys.body.push(body);
        sys.material.push(material);
    }

    let mut solver = Solver::new(sys, KernelSpec::new(dp), settings)?;
    solver.drho_dt = drho;
    solver.accel = accel;
    solver.time = time;
    if let Some(r) = reference {
        solver.reference_point = r;
    }
    solver.penalty = PairAccumulator::from_entries(&solver.table, &pairs);
    solver.set_observers(observers);
    Ok(solver)
}
