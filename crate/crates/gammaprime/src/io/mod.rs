//! On-disk artifacts: field snapshots as legacy-VTK structured-points text,
//! the per-step energy log (`run.csv`), and versioned binary checkpoints
//! with human-readable text manifests.
//!
//! All floating-point text uses 17 significant digits (`{:.16e}`), which
//! round-trips `f64` exactly, and the checkpoint container is fixed
//! little-endian regardless of host byte order, so artifacts written on one
//! machine restore bit-identically on another.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::energy::EnergyBreakdown;
use crate::grid::{BoundaryCondition, Grid, GridError};
use crate::state::DiscreteState;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed artifact: {0}")]
    Format(String),
    #[error("artifact grid is invalid: {0}")]
    Grid(#[from] GridError),
}

fn bc_name(bc: BoundaryCondition) -> &'static str {
    match bc {
        BoundaryCondition::Periodic => "periodic",
        BoundaryCondition::Neumann => "neumann",
    }
}

fn bc_from_name(name: &str) -> Result<BoundaryCondition, ArtifactError> {
    match name {
        "periodic" => Ok(BoundaryCondition::Periodic),
        "neumann" => Ok(BoundaryCondition::Neumann),
        other => Err(ArtifactError::Format(format!("unknown boundary condition '{other}'"))),
    }
}

// ---------------------------------------------------------------------------
// Field snapshots (legacy VTK structured points, ASCII)
// ---------------------------------------------------------------------------

/// Write the fields as a legacy-VTK structured-points file. Cell-centered
/// values are emitted as point data (the usual convention for uniform
/// phase-field dumps); the title line carries the simulation time and the
/// boundary condition so a snapshot is self-describing.
pub fn write_snapshot(
    grid: &Grid,
    state: &DiscreteState,
    t: f64,
    path: &Path,
) -> Result<(), ArtifactError> {
    let n = grid.ncells();
    let dims = grid.dims();
    let h = grid.spacing();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "t={:.16e} bc={}", t, bc_name(grid.bc))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2])?;
    writeln!(w, "ORIGIN 0.0 0.0 0.0")?;
    writeln!(w, "SPACING {:.16e} {:.16e} {:.16e}", h[0], h[1], h[2])?;
    writeln!(w, "POINT_DATA {n}")?;
    writeln!(w, "SCALARS c double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in &state.c {
        writeln!(w, "{v:.16e}")?;
    }
    writeln!(w, "SCALARS eta double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in &state.eta {
        writeln!(w, "{v:.16e}")?;
    }
    if !state.u.is_empty() {
        writeln!(w, "VECTORS u double")?;
        for i in 0..n {
            let ux = state.u[0][i];
            let uy = state.u.get(1).map_or(0.0, |v| v[i]);
            let uz = state.u.get(2).map_or(0.0, |v| v[i]);
            writeln!(w, "{ux:.16e} {uy:.16e} {uz:.16e}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A snapshot read back from disk. `dims`/`spacing` cover the active axes
/// only (trailing singleton axes trimmed); `u` has one component per active
/// axis, or is empty when the file carries no displacement field.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub bc: BoundaryCondition,
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub c: Vec<f64>,
    pub eta: Vec<f64>,
    pub u: Vec<Vec<f64>>,
}

impl Snapshot {
    pub fn grid(&self) -> Result<Grid, GridError> {
        Grid::new(&self.dims, &self.spacing, self.bc)
    }

    pub fn state(&self) -> DiscreteState {
        let cbar0 = crate::grid::tree_sum(&self.c) / self.c.len() as f64;
        DiscreteState { c: self.c.clone(), eta: self.eta.clone(), u: self.u.clone(), cbar0 }
    }
}

fn parse_f64(tok: &str, what: &str) -> Result<f64, ArtifactError> {
    tok.parse::<f64>()
        .map_err(|_| ArtifactError::Format(format!("bad {what} value '{tok}'")))
}

fn parse_usize(tok: &str, what: &str) -> Result<usize, ArtifactError> {
    tok.parse::<usize>()
        .map_err(|_| ArtifactError::Format(format!("bad {what} value '{tok}'")))
}

fn next_line<B: BufRead>(
    lines: &mut std::io::Lines<B>,
    what: &str,
) -> Result<String, ArtifactError> {
    lines
        .next()
        .transpose()?
        .ok_or_else(|| ArtifactError::Format(format!("unexpected end of file before {what}")))
}

/// Read a snapshot written by [`write_snapshot`]. The parser accepts the
/// exact structure this crate writes (it is a file-format contract, not a
/// general VTK reader).
pub fn read_snapshot(path: &Path) -> Result<Snapshot, ArtifactError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();

    let magic = next_line(&mut lines, "header")?;
    if !magic.starts_with("# vtk DataFile") {
        return Err(ArtifactError::Format("not a legacy VTK file".into()));
    }
    let title = next_line(&mut lines, "title")?;
    let mut t = f64::NAN;
    let mut bc = None;
    for tok in title.split_whitespace() {
        if let Some(v) = tok.strip_prefix("t=") {
            t = parse_f64(v, "time")?;
        } else if let Some(v) = tok.strip_prefix("bc=") {
            bc = Some(bc_from_name(v)?);
        }
    }
    let bc = bc.ok_or_else(|| ArtifactError::Format("title carries no bc= tag".into()))?;
    if !t.is_finite() {
        return Err(ArtifactError::Format("title carries no finite t= tag".into()));
    }
    let ascii = next_line(&mut lines, "format")?;
    if ascii.trim() != "ASCII" {
        return Err(ArtifactError::Format("only ASCII snapshots are supported".into()));
    }
    let dataset = next_line(&mut lines, "dataset")?;
    if dataset.trim() != "DATASET STRUCTURED_POINTS" {
        return Err(ArtifactError::Format("only STRUCTURED_POINTS snapshots are supported".into()));
    }

    let mut dims3 = [1usize; 3];
    let mut spacing3 = [1.0f64; 3];
    let npoints = loop {
        let line = next_line(&mut lines, "geometry header")?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("DIMENSIONS") => {
                for d in dims3.iter_mut() {
                    *d = parse_usize(
                        toks.next().ok_or_else(|| {
                            ArtifactError::Format("DIMENSIONS needs three values".into())
                        })?,
                        "dimension",
                    )?;
                }
            }
            Some("ORIGIN") => {}
            Some("SPACING") => {
                for s in spacing3.iter_mut() {
                    *s = parse_f64(
                        toks.next().ok_or_else(|| {
                            ArtifactError::Format("SPACING needs three values".into())
                        })?,
                        "spacing",
                    )?;
                }
            }
            Some("POINT_DATA") => {
                break parse_usize(
                    toks.next()
                        .ok_or_else(|| ArtifactError::Format("POINT_DATA needs a count".into()))?,
                    "point count",
                )?;
            }
            other => {
                return Err(ArtifactError::Format(format!(
                    "unexpected geometry line '{}'",
                    other.unwrap_or("")
                )))
            }
        }
    };
    if npoints != dims3[0] * dims3[1] * dims3[2] || npoints == 0 {
        return Err(ArtifactError::Format(format!(
            "POINT_DATA {npoints} does not match DIMENSIONS {dims3:?}"
        )));
    }
    let ndim = (1..3).rev().find(|&a| dims3[a] > 1).map_or(1, |a| a + 1);

    let mut c = None;
    let mut eta = None;
    let mut u: Vec<Vec<f64>> = Vec::new();
    loop {
        let Some(line) = lines.next().transpose()? else { break };
        if line.trim().is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("SCALARS") => {
                let name = toks
                    .next()
                    .ok_or_else(|| ArtifactError::Format("SCALARS without a name".into()))?
                    .to_string();
                let lut = next_line(&mut lines, "LOOKUP_TABLE")?;
                if !lut.starts_with("LOOKUP_TABLE") {
                    return Err(ArtifactError::Format(format!(
                        "SCALARS {name} not followed by LOOKUP_TABLE"
                    )));
                }
                let mut vals = Vec::with_capacity(npoints);
                for _ in 0..npoints {
                    let line = next_line(&mut lines, &format!("{name} data"))?;
                    vals.push(parse_f64(line.trim(), &name)?);
                }
                match name.as_str() {
                    "c" => c = Some(vals),
                    "eta" => eta = Some(vals),
                    _ => {}
                }
            }
            Some("VECTORS") => {
                let mut comps = vec![Vec::with_capacity(npoints); 3];
                for _ in 0..npoints {
                    let line = next_line(&mut lines, "vector data")?;
                    let mut toks = line.split_whitespace();
                    for comp in comps.iter_mut() {
                        comp.push(parse_f64(
                            toks.next().ok_or_else(|| {
                                ArtifactError::Format("vector row needs three values".into())
                            })?,
                            "displacement",
                        )?);
                    }
                }
                comps.truncate(ndim);
                u = comps;
            }
            other => {
                return Err(ArtifactError::Format(format!(
                    "unexpected data section '{}'",
                    other.unwrap_or("")
                )))
            }
        }
    }
    let c = c.ok_or_else(|| ArtifactError::Format("snapshot has no 'c' field".into()))?;
    let eta = eta.ok_or_else(|| ArtifactError::Format("snapshot has no 'eta' field".into()))?;
    Ok(Snapshot {
        t,
        bc,
        dims: dims3[..ndim].to_vec(),
        spacing: spacing3[..ndim].to_vec(),
        c,
        eta,
        u,
    })
}

// ---------------------------------------------------------------------------
// Per-step energy log
// ---------------------------------------------------------------------------

pub const RUN_CSV_HEADER: &str = "t,dt,E_total,E1,E2,E3,E4,mean_c,newton_iters,gmres_avg,retries";

/// Append-per-row writer for `run.csv`. Every row is flushed so an aborted
/// run still leaves a complete log of its accepted steps.
pub struct RunLog {
    out: BufWriter<File>,
}

impl RunLog {
    /// Start a fresh log (truncates) and write the header row.
    pub fn create(path: &Path) -> Result<RunLog, ArtifactError> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{RUN_CSV_HEADER}")?;
        out.flush()?;
        Ok(RunLog { out })
    }

    /// Continue an existing log (resumed runs append; the header is already
    /// there). Creates the file with a header if it does not exist.
    pub fn append(path: &Path) -> Result<RunLog, ArtifactError> {
        if !path.exists() {
            return RunLog::create(path);
        }
        let out = BufWriter::new(OpenOptions::new().append(true).open(path)?);
        Ok(RunLog { out })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn write_row(
        &mut self,
        t: f64,
        dt: f64,
        energy: &EnergyBreakdown,
        mean_c: f64,
        newton_iters: usize,
        gmres_avg: f64,
        retries: usize,
    ) -> Result<(), ArtifactError> {
        writeln!(
            self.out,
            "{t:.16e},{dt:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{mean_c:.16e},{newton_iters},{gmres_avg:.16e},{retries}",
            energy.total(),
            energy.e1,
            energy.e2,
            energy.e3,
            energy.e4,
        )?;
        self.out.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Checkpoints (versioned binary, little-endian, with a text manifest)
// ---------------------------------------------------------------------------

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"GPFCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume a run exactly: the discrete state (including
/// the frozen eigenstrain reference `cbar0`), the simulation clock, and the
/// adaptive-controller internals.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub bc: BoundaryCondition,
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub t: f64,
    pub zeta: f64,
    pub x_prime: f64,
    pub steps_accepted: u64,
    pub cbar0: f64,
    pub c: Vec<f64>,
    pub eta: Vec<f64>,
    pub u: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn grid(&self) -> Result<Grid, GridError> {
        Grid::new(&self.dims, &self.spacing, self.bc)
    }

    /// Rebuild the state verbatim. `cbar0` is restored from the container,
    /// not recomputed from `c`: it was frozen at initialization and the
    /// current composition only matches its mean to rounding error.
    pub fn state(&self) -> DiscreteState {
        DiscreteState {
            c: self.c.clone(),
            eta: self.eta.clone(),
            u: self.u.clone(),
            cbar0: self.cbar0,
        }
    }
}

fn w_f64s(w: &mut impl Write, vals: &[f64]) -> std::io::Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

struct Bin<R: Read> {
    r: R,
}

impl<R: Read> Bin<R> {
    fn u8(&mut self) -> Result<u8, ArtifactError> {
        let mut b = [0u8; 1];
        self.r.read_exact(&mut b)?;
        Ok(b[0])
    }
    fn u32(&mut self) -> Result<u32, ArtifactError> {
        let mut b = [0u8; 4];
        self.r.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64(&mut self) -> Result<u64, ArtifactError> {
        let mut b = [0u8; 8];
        self.r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn f64(&mut self) -> Result<f64, ArtifactError> {
        let mut b = [0u8; 8];
        self.r.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ArtifactError> {
        let mut bytes = vec![0u8; n * 8];
        self.r.read_exact(&mut bytes)?;
        Ok(bytes.chunks_exact(8).map(|ch| f64::from_le_bytes(ch.try_into().unwrap())).collect())
    }
}

/// Write the checkpoint container plus a `<path>.manifest` text file
/// describing it.
pub fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), ArtifactError> {
    let n: usize = ckpt.dims.iter().product();
    assert_eq!(ckpt.c.len(), n, "composition length must match the grid");
    assert_eq!(ckpt.eta.len(), n, "order-parameter length must match the grid");
    for comp in &ckpt.u {
        assert_eq!(comp.len(), n, "displacement length must match the grid");
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&[
        match ckpt.bc {
            BoundaryCondition::Periodic => 0u8,
            BoundaryCondition::Neumann => 1u8,
        },
        ckpt.dims.len() as u8,
        ckpt.u.len() as u8,
        0u8,
    ])?;
    for &d in &ckpt.dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w_f64s(&mut w, &ckpt.spacing)?;
    w_f64s(&mut w, &[ckpt.t, ckpt.zeta, ckpt.x_prime])?;
    w.write_all(&ckpt.steps_accepted.to_le_bytes())?;
    w_f64s(&mut w, &[ckpt.cbar0])?;
    w_f64s(&mut w, &ckpt.c)?;
    w_f64s(&mut w, &ckpt.eta)?;
    for comp in &ckpt.u {
        w_f64s(&mut w, comp)?;
    }
    w.flush()?;
    drop(w);

    let manifest_path = manifest_path(path);
    let mut m = BufWriter::new(File::create(manifest_path)?);
    writeln!(m, "checkpoint-manifest")?;
    writeln!(m, "format-version = {CHECKPOINT_VERSION}")?;
    writeln!(m, "byte-order = little-endian")?;
    writeln!(m, "bc = {}", bc_name(ckpt.bc))?;
    writeln!(m, "dims = {:?}", ckpt.dims)?;
    writeln!(m, "spacing = {:?}", ckpt.spacing)?;
    let mut fields = vec!["c".to_string(), "eta".to_string()];
    fields.extend((0..ckpt.u.len()).map(|k| format!("u{k}")));
    writeln!(m, "fields = {}", fields.join(" "))?;
    writeln!(m, "t = {:.16e}", ckpt.t)?;
    writeln!(m, "steps-accepted = {}", ckpt.steps_accepted)?;
    writeln!(m, "zeta = {:.16e}", ckpt.zeta)?;
    writeln!(m, "x-prime = {:.16e}", ckpt.x_prime)?;
    writeln!(m, "cbar0 = {:.16e}", ckpt.cbar0)?;
    writeln!(m, "payload-values-per-field = {n}")?;
    m.flush()?;
    Ok(())
}

/// Path of the text manifest written next to a checkpoint.
pub fn manifest_path(ckpt_path: &Path) -> std::path::PathBuf {
    let mut os = ckpt_path.as_os_str().to_os_string();
    os.push(".manifest");
    std::path::PathBuf::from(os)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, ArtifactError> {
    let mut r = Bin { r: BufReader::new(File::open(path)?) };
    let mut magic = [0u8; 8];
    r.r.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(ArtifactError::Format("not a checkpoint container".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(ArtifactError::Format(format!(
            "checkpoint version {version} is not supported (this build reads {CHECKPOINT_VERSION})"
        )));
    }
    let bc = match r.u8()? {
        0 => BoundaryCondition::Periodic,
        1 => BoundaryCondition::Neumann,
        other => return Err(ArtifactError::Format(format!("unknown bc code {other}"))),
    };
    let ndim = r.u8()? as usize;
    let d = r.u8()? as usize;
    let _reserved = r.u8()?;
    if ndim == 0 || ndim > 3 || d > ndim {
        return Err(ArtifactError::Format(format!("implausible ranks ndim={ndim}, d={d}")));
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let v = r.u64()? as usize;
        if v < 2 || v > 1 << 24 {
            return Err(ArtifactError::Format(format!("implausible dimension {v}")));
        }
        dims.push(v);
    }
    let spacing = r.f64s(ndim)?;
    let t = r.f64()?;
    let zeta = r.f64()?;
    let x_prime = r.f64()?;
    let steps_accepted = r.u64()?;
    let cbar0 = r.f64()?;
    let n: usize = dims.iter().product();
    let c = r.f64s(n)?;
    let eta = r.f64s(n)?;
    let mut u = Vec::with_capacity(d);
    for _ in 0..d {
        u.push(r.f64s(n)?);
    }
    let mut trailing = [0u8; 1];
    match r.r.read(&mut trailing)? {
        0 => {}
        _ => return Err(ArtifactError::Format("trailing bytes after checkpoint payload".into())),
    }
    Ok(Checkpoint { bc, dims, spacing, t, zeta, x_prime, steps_accepted, cbar0, c, eta, u })
}
