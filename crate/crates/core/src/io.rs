//! Run configuration, snapshot persistence, diagnostics tables, and run
//! manifests.
//!
//! # Snapshot format
//!
//! A snapshot is a single self-describing binary file: a line-oriented
//! ASCII header terminated by `end-header`, followed immediately by the
//! raw payload. Header lines, in order:
//!
//! ```text
//! obflow-snapshot v1
//! byte-order little-endian
//! resolution <n0> <n1> <n2> <n3>
//! period <L0> <L1> <L2> <L3>
//! time <t>
//! step <k>
//! fields <m>
//! field <name> components <c> symmetry <tag>     (m lines)
//! payload-bytes <B>
//! checksum-sha256 <64 hex digits>
//! end-header
//! ```
//!
//! All floating-point header values are printed with 17 significant
//! digits, which reparses to the identical IEEE-754 bit pattern. The
//! payload holds the listed fields in order; each field is stored
//! component-major (all nodes of component 0, then component 1, ...),
//! nodes in the grid's native row-major order (axis 0 slowest), every
//! value a little-endian IEEE-754 binary64. The checksum is the SHA-256
//! of the payload bytes, so `read(write(x))` is bitwise identical and
//! any payload corruption is detected.
//!
//! # Diagnostics tables
//!
//! `emit_report` writes the same records as CSV (for humans and plotting)
//! and JSON (for machines). The column schema is stable:
//!
//! `t, step, volume, integral_q, integral_obstruction_sq, sup_riemann,
//!  sup_grad_riemann_1 ... sup_grad_riemann_M, sup_smoothing_sum`
//!
//! where `M` is the highest covariant-derivative order tracked by any
//! record in the table (the derivative columns are absent when no record
//! tracks them) and `sup_smoothing_sum` is empty / `null` when a record
//! does not carry it. Floats are printed with 17 significant digits;
//! non-finite values print as `nan` / `inf` / `-inf` in CSV and `null`
//! in JSON. Emission is a pure function of the records: re-emitting the
//! same table gives byte-identical files.
//!
//! # Run configuration
//!
//! A run is described by a TOML file with a mandatory `experiment` kind
//! and a mandatory top-level `seed`; unknown keys anywhere are rejected
//! with a line/column-pointered message. Section-by-section schema (all
//! sections beyond `experiment`/`seed` optional unless the experiment
//! requires them — see `RunConfig::validate`):
//!
//! ```text
//! experiment = "flow"        # check-identities | chart-check | flow |
//!                            # rescale | gradient-check | mode-decay |
//!                            # smoothing-probe
//! seed = 42                  # master RNG seed, mandatory
//! out_dir = "runs/demo"      # optional; the CLI --out flag overrides it
//!
//! [grid]
//! resolution = [16, 16, 1, 1]
//! period = [6.283..., ...]   # optional, default 2*pi on every axis
//!
//! [stencil]
//! accuracy_order = 4         # 2 | 4 | 6
//!
//! [initial_data]
//! kind = "random-band"       # flat | random-band | single-mode |
//!                            # conformal-bump | anisotropic-mode
//! amplitude = 0.02
//! band = 2                   # random-band: highest wavenumber used
//! modes = 6                  # random-band: modes per component
//! wave = [1, 0, 0, 0]        # single-mode / anisotropic-mode
//! component = [2, 2]         # which metric component is perturbed
//! scale = 1.0                # anisotropic-mode: base diag(scale,1,1,1)
//! width = 1.5                # conformal-bump: concentration
//! seed = 7                   # optional override of the master seed
//!
//! [flow]
//! gauge = "plain"            # plain | deturck
//! sigma = 0.02
//! t_end = 1e-3
//! max_steps = 10000000
//! record_every = 10
//! snapshot_every = 10
//! curvature_ceiling = 0.2    # optional
//! derivative_orders = 0
//!
//! [chart]                    # chart-check
//! metric = "sphere"          # flat | constant-conformal |
//!                            # conformally-flat | sphere | product-spheres
//! radius = 1.0               # sphere
//! factor = 1.0               # constant-conformal
//! amplitude = 0.3            # conformally-flat
//! width = 1.5                # conformally-flat
//! center = [0, 0, 0, 0]      # conformally-flat
//! r1 = 1.0                   # product-spheres
//! r2 = 1.0
//! point = [0, 0, 0, 0]       # optional; defaults to a chart-interior point
//! fd_step = 1e-2
//!
//! [gradient_check]
//! epsilon = 1e-5
//! pairs = 3
//! amplitude = 0.02
//!
//! [mode_decay]
//! wave = [1, 0, 0, 0]
//! amplitude = 1e-4
//! t_end = 8.0
//! resolution = 16
//! sigma = 0.08
//! samples = 40
//!
//! [rescale]
//! lambda = 2.0
//! t0 = 0.0
//! input = "runs/base"        # optional: rescale a stored run instead of
//!                            # evolving one first
//!
//! [smoothing]
//! orders = 3                 # highest |grad^j Rm| tracked
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chart::ChartMetric;
use crate::diag::DiagnosticsRecord;
use crate::flow::{FlowConfig, FlowState, Gauge, Termination, Trajectory};
use crate::grid::{Field, GridSpec, TWO_PI};
use crate::seeded;
use crate::tensor::MetricField;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Float <-> text with guaranteed bit-exact round trips.
// ---------------------------------------------------------------------------

/// Print a float with 17 significant digits, enough that parsing the text
/// recovers the identical bit pattern (Rust's parser is correctly rounded).
/// Non-finite values print as `nan`, `inf`, `-inf`.
pub fn format_f64_17(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.16e}")
    }
}

/// Inverse of `format_f64_17`.
pub fn parse_f64_17(s: &str) -> Result<f64> {
    match s {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s
            .parse::<f64>()
            .map_err(|e| Error::SnapshotFormat(format!("bad float literal {s:?}: {e}"))),
    }
}

// ---------------------------------------------------------------------------
// Snapshot files.
// ---------------------------------------------------------------------------

const SNAPSHOT_MAGIC: &str = "obflow-snapshot";
const SNAPSHOT_VERSION: u32 = 1;

/// One entry of the header's field list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldEntry {
    pub name: String,
    pub ncomp: usize,
    /// Free-form symmetry/variance tag, e.g. `sym2-covariant` or `scalar`.
    pub symmetry: String,
}

/// Parsed snapshot header.
#[derive(Debug, Clone)]
pub struct SnapshotHeader {
    pub version: u32,
    pub grid: GridSpec,
    pub time: f64,
    pub step: usize,
    pub fields: Vec<FieldEntry>,
}

fn snapshot_err(path: &Path, what: impl std::fmt::Display) -> Error {
    Error::SnapshotFormat(format!("{}: {what}", path.display()))
}

/// Write one snapshot file. Field names and symmetry tags must be
/// whitespace-free tokens; all fields must live on the same grid.
pub fn write_snapshot(
    path: &Path,
    time: f64,
    step: usize,
    fields: &[(&str, &str, &Field)],
) -> Result<()> {
    if fields.is_empty() {
        return Err(snapshot_err(path, "snapshot needs at least one field"));
    }
    let grid = fields[0].2.grid();
    for (name, sym, f) in fields {
        grid.same_grid(f.grid())?;
        if name.split_whitespace().count() != 1 || sym.split_whitespace().count() != 1 {
            return Err(snapshot_err(
                path,
                format!("field name/symmetry must be single tokens, got {name:?} {sym:?}"),
            ));
        }
    }
    let mut payload: Vec<u8> = Vec::new();
    for (_, _, f) in fields {
        for c in 0..f.ncomp() {
            for v in f.comp(c) {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let digest = hex::encode(Sha256::digest(&payload));
    let res = grid.resolution();
    let per = grid.period();
    let mut header = String::new();
    let _ = writeln!(header, "{SNAPSHOT_MAGIC} v{SNAPSHOT_VERSION}");
    let _ = writeln!(header, "byte-order little-endian");
    let _ = writeln!(header, "resolution {} {} {} {}", res[0], res[1], res[2], res[3]);
    let _ = writeln!(
        header,
        "period {} {} {} {}",
        format_f64_17(per[0]),
        format_f64_17(per[1]),
        format_f64_17(per[2]),
        format_f64_17(per[3])
    );
    let _ = writeln!(header, "time {}", format_f64_17(time));
    let _ = writeln!(header, "step {step}");
    let _ = writeln!(header, "fields {}", fields.len());
    for (name, sym, f) in fields {
        let _ = writeln!(header, "field {name} components {} symmetry {sym}", f.ncomp());
    }
    let _ = writeln!(header, "payload-bytes {}", payload.len());
    let _ = writeln!(header, "checksum-sha256 {digest}");
    let _ = writeln!(header, "end-header");
    let mut bytes = header.into_bytes();
    bytes.extend_from_slice(&payload);
    fs::write(path, bytes)?;
    Ok(())
}

/// Read a snapshot file back, verifying structure and checksum.
pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, Vec<Field>)> {
    let bytes = fs::read(path)?;
    let marker = b"end-header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| snapshot_err(path, "missing end-header marker"))?;
    let header_text = std::str::from_utf8(&bytes[..end + marker.len()])
        .map_err(|e| snapshot_err(path, format!("header is not UTF-8: {e}")))?;
    let payload = &bytes[end + marker.len()..];

    let mut lines = header_text.lines();
    let mut next = |what: &str| -> Result<&str> {
        lines
            .next()
            .ok_or_else(|| snapshot_err(path, format!("truncated header before {what}")))
    };
    let magic = next("magic")?;
    let version: u32 = match magic.strip_prefix(&format!("{SNAPSHOT_MAGIC} v")) {
        Some(v) => v
            .parse()
            .map_err(|_| snapshot_err(path, format!("bad version token {magic:?}")))?,
        None => return Err(snapshot_err(path, format!("bad magic line {magic:?}"))),
    };
    if version != SNAPSHOT_VERSION {
        return Err(snapshot_err(
            path,
            format!("unsupported format version {version} (expected {SNAPSHOT_VERSION})"),
        ));
    }
    let order = next("byte-order")?;
    if order != "byte-order little-endian" {
        return Err(snapshot_err(path, format!("unsupported byte order line {order:?}")));
    }

    fn tokens<'a>(line: &'a str, key: &str, n: usize, path: &Path) -> Result<Vec<&'a str>> {
        let rest = line
            .strip_prefix(key)
            .ok_or_else(|| snapshot_err(path, format!("expected `{key}...`, got {line:?}")))?;
        let toks: Vec<&str> = rest.split_whitespace().collect();
        if toks.len() != n {
            return Err(snapshot_err(
                path,
                format!("line {line:?}: expected {n} values after `{key}`"),
            ));
        }
        Ok(toks)
    }

    let res_toks = tokens(next("resolution")?, "resolution", 4, path)?;
    let mut resolution = [0usize; 4];
    for (i, t) in res_toks.iter().enumerate() {
        resolution[i] = t
            .parse()
            .map_err(|_| snapshot_err(path, format!("bad resolution token {t:?}")))?;
    }
    let per_toks = tokens(next("period")?, "period", 4, path)?;
    let mut period = [0.0f64; 4];
    for (i, t) in per_toks.iter().enumerate() {
        period[i] = parse_f64_17(t)?;
    }
    let time = parse_f64_17(tokens(next("time")?, "time", 1, path)?[0])?;
    let step: usize = tokens(next("step")?, "step", 1, path)?[0]
        .parse()
        .map_err(|_| snapshot_err(path, "bad step token"))?;
    let nfields: usize = tokens(next("fields")?, "fields", 1, path)?[0]
        .parse()
        .map_err(|_| snapshot_err(path, "bad field count"))?;
    let mut entries = Vec::with_capacity(nfields);
    for _ in 0..nfields {
        let toks = tokens(next("field")?, "field", 5, path)?;
        if toks[1] != "components" || toks[3] != "symmetry" {
            return Err(snapshot_err(path, format!("malformed field line {toks:?}")));
        }
        entries.push(FieldEntry {
            name: toks[0].to_string(),
            ncomp: toks[2]
                .parse()
                .map_err(|_| snapshot_err(path, "bad component count"))?,
            symmetry: toks[4].to_string(),
        });
    }
    let payload_bytes: usize = tokens(next("payload-bytes")?, "payload-bytes", 1, path)?[0]
        .parse()
        .map_err(|_| snapshot_err(path, "bad payload byte count"))?;
    let digest = tokens(next("checksum-sha256")?, "checksum-sha256", 1, path)?[0].to_string();

    if payload.len() != payload_bytes {
        return Err(snapshot_err(
            path,
            format!(
                "payload is {} bytes but the header declares {payload_bytes}",
                payload.len()
            ),
        ));
    }
    let actual = hex::encode(Sha256::digest(payload));
    if actual != digest {
        return Err(snapshot_err(
            path,
            format!("checksum mismatch: header says {digest}, payload hashes to {actual}"),
        ));
    }

    let grid = GridSpec::new(resolution, period)?;
    let nnodes = grid.num_nodes();
    let expected: usize = entries.iter().map(|e| e.ncomp * nnodes * 8).sum();
    if expected != payload_bytes {
        return Err(snapshot_err(
            path,
            format!("field list implies {expected} payload bytes, header says {payload_bytes}"),
        ));
    }
    let mut fields_out = Vec::with_capacity(entries.len());
    let mut off = 0usize;
    for e in &entries {
        let count = e.ncomp * nnodes;
        let mut data = Vec::with_capacity(count);
        for i in 0..count {
            let s = off + 8 * i;
            let mut b = [0u8; 8];
            b.copy_from_slice(&payload[s..s + 8]);
            data.push(f64::from_le_bytes(b));
        }
        off += count * 8;
        fields_out.push(Field::from_data(&grid, e.ncomp, data)?);
    }
    Ok((
        SnapshotHeader {
            version,
            grid,
            time,
            step,
            fields: entries,
        },
        fields_out,
    ))
}

// ---------------------------------------------------------------------------
// Trajectory persistence.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryMeta {
    format: u32,
    termination: Termination,
    final_time: f64,
    steps_taken: usize,
    gauge: Gauge,
    accuracy_order: usize,
    rescaled: bool,
    snapshot_files: Vec<String>,
    records: Vec<DiagnosticsRecord>,
}

const TRAJECTORY_META: &str = "trajectory.toml";

/// Persist a trajectory: one snapshot file per sampled state plus a
/// `trajectory.toml` carrying the scalar diagnostics and run metadata.
/// Returns the paths written (metadata file first).
pub fn save_trajectory(dir: &Path, traj: &Trajectory) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = vec![dir.join(TRAJECTORY_META)];
    let mut files = Vec::with_capacity(traj.snapshots.len());
    for (i, st) in traj.snapshots.iter().enumerate() {
        let name = format!("snapshot_{i:05}.snap");
        let p = dir.join(&name);
        write_snapshot(&p, st.t, st.step, &[("metric", "sym2-covariant", st.g.comps())])?;
        files.push(name);
        paths.push(p);
    }
    let meta = TrajectoryMeta {
        format: SNAPSHOT_VERSION,
        termination: traj.termination,
        final_time: traj.final_time,
        steps_taken: traj.steps_taken,
        gauge: traj.gauge,
        accuracy_order: traj.accuracy_order,
        rescaled: traj.rescaled,
        snapshot_files: files,
        records: traj.records.clone(),
    };
    let text = toml::to_string_pretty(&meta)
        .map_err(|e| Error::SnapshotFormat(format!("trajectory metadata: {e}")))?;
    fs::write(&paths[0], text)?;
    Ok(paths)
}

/// Reload a trajectory saved by `save_trajectory`; bitwise faithful.
pub fn load_trajectory(dir: &Path) -> Result<Trajectory> {
    let meta_path = dir.join(TRAJECTORY_META);
    let text = fs::read_to_string(&meta_path)?;
    let meta: TrajectoryMeta = toml::from_str(&text)
        .map_err(|e| Error::SnapshotFormat(format!("{}: {e}", meta_path.display())))?;
    if meta.format != SNAPSHOT_VERSION {
        return Err(Error::SnapshotFormat(format!(
            "{}: unsupported trajectory format {}",
            meta_path.display(),
            meta.format
        )));
    }
    let mut snapshots = Vec::with_capacity(meta.snapshot_files.len());
    let mut grid: Option<GridSpec> = None;
    for name in &meta.snapshot_files {
        let p = dir.join(name);
        let (head, mut fields) = read_snapshot(&p)?;
        if fields.len() != 1 || head.fields[0].name != "metric" {
            return Err(snapshot_err(&p, "expected a single `metric` field"));
        }
        if let Some(g) = &grid {
            g.same_grid(&head.grid)?;
        } else {
            grid = Some(head.grid.clone());
        }
        let g = MetricField::new(fields.remove(0))?;
        snapshots.push(FlowState {
            t: head.time,
            step: head.step,
            g,
        });
    }
    if snapshots.is_empty() {
        return Err(snapshot_err(&meta_path, "trajectory lists no snapshots"));
    }
    Ok(Trajectory {
        snapshots,
        records: meta.records,
        termination: meta.termination,
        final_time: meta.final_time,
        steps_taken: meta.steps_taken,
        gauge: meta.gauge,
        accuracy_order: meta.accuracy_order,
        rescaled: meta.rescaled,
    })
}

fn f64_bits_eq(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits()
}

/// Bitwise equality of two trajectories: every float compared by bit
/// pattern, including all metric components.
pub fn trajectory_bitwise_equal(a: &Trajectory, b: &Trajectory) -> bool {
    if a.termination != b.termination
        || !f64_bits_eq(a.final_time, b.final_time)
        || a.steps_taken != b.steps_taken
        || a.gauge != b.gauge
        || a.accuracy_order != b.accuracy_order
        || a.rescaled != b.rescaled
        || a.snapshots.len() != b.snapshots.len()
        || a.records.len() != b.records.len()
    {
        return false;
    }
    for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
        if !f64_bits_eq(x.t, y.t) || x.step != y.step {
            return false;
        }
        if x.g.grid().same_grid(y.g.grid()).is_err() {
            return false;
        }
        let dx = x.g.comps().data();
        let dy = y.g.comps().data();
        if dx.len() != dy.len() || dx.iter().zip(dy).any(|(u, v)| !f64_bits_eq(*u, *v)) {
            return false;
        }
    }
    for (x, y) in a.records.iter().zip(&b.records) {
        if !f64_bits_eq(x.t, y.t)
            || x.step != y.step
            || !f64_bits_eq(x.volume, y.volume)
            || !f64_bits_eq(x.integral_q, y.integral_q)
            || !f64_bits_eq(x.integral_obstruction_sq, y.integral_obstruction_sq)
            || !f64_bits_eq(x.sup_riemann, y.sup_riemann)
            || x.sup_grad_riemann.len() != y.sup_grad_riemann.len()
            || x.sup_grad_riemann
                .iter()
                .zip(&y.sup_grad_riemann)
                .any(|(u, v)| !f64_bits_eq(*u, *v))
        {
            return false;
        }
        match (x.sup_smoothing_sum, y.sup_smoothing_sum) {
            (None, None) => {}
            (Some(u), Some(v)) if f64_bits_eq(u, v) => {}
            _ => return false,
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Diagnostics tables (CSV + JSON).
// ---------------------------------------------------------------------------

fn grad_columns(records: &[DiagnosticsRecord]) -> usize {
    records.iter().map(|r| r.sup_grad_riemann.len()).max().unwrap_or(0)
}

/// Render the CSV table (schema in the module docs).
pub fn render_csv(records: &[DiagnosticsRecord]) -> String {
    let m = grad_columns(records);
    let mut out = String::new();
    out.push_str("t,step,volume,integral_q,integral_obstruction_sq,sup_riemann");
    for j in 1..=m {
        let _ = write!(out, ",sup_grad_riemann_{j}");
    }
    out.push_str(",sup_smoothing_sum\n");
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            format_f64_17(r.t),
            r.step,
            format_f64_17(r.volume),
            format_f64_17(r.integral_q),
            format_f64_17(r.integral_obstruction_sq),
            format_f64_17(r.sup_riemann)
        );
        for j in 0..m {
            out.push(',');
            if let Some(v) = r.sup_grad_riemann.get(j) {
                out.push_str(&format_f64_17(*v));
            }
        }
        out.push(',');
        if let Some(v) = r.sup_smoothing_sum {
            out.push_str(&format_f64_17(v));
        }
        out.push('\n');
    }
    out
}

fn json_f64(v: f64) -> String {
    if v.is_finite() {
        format_f64_17(v)
    } else {
        "null".to_string()
    }
}

/// Render the JSON table: an array of objects with the same columns as
/// the CSV (derivative norms as one array-valued key).
pub fn render_json(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::from("[");
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str("\n  {");
        let _ = write!(
            out,
            "\"t\": {}, \"step\": {}, \"volume\": {}, \"integral_q\": {}, \
             \"integral_obstruction_sq\": {}, \"sup_riemann\": {}",
            json_f64(r.t),
            r.step,
            json_f64(r.volume),
            json_f64(r.integral_q),
            json_f64(r.integral_obstruction_sq),
            json_f64(r.sup_riemann)
        );
        out.push_str(", \"sup_grad_riemann\": [");
        for (j, v) in r.sup_grad_riemann.iter().enumerate() {
            if j > 0 {
                out.push_str(", ");
            }
            out.push_str(&json_f64(*v));
        }
        out.push(']');
        let _ = write!(
            out,
            ", \"sup_smoothing_sum\": {}",
            r.sup_smoothing_sum.map_or("null".to_string(), json_f64)
        );
        out.push('}');
    }
    if !records.is_empty() {
        out.push('\n');
    }
    out.push_str("]\n");
    out
}

/// Write `<stem>.csv` and `<stem>.json` under `dir`; returns both paths.
pub fn emit_report(
    dir: &Path,
    stem: &str,
    records: &[DiagnosticsRecord],
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&csv_path, render_csv(records))?;
    fs::write(&json_path, render_json(records))?;
    Ok((csv_path, json_path))
}

// ---------------------------------------------------------------------------
// Run configuration.
// ---------------------------------------------------------------------------

/// The seven experiment entry points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CheckIdentities,
    ChartCheck,
    Flow,
    Rescale,
    GradientCheck,
    ModeDecay,
    SmoothingProbe,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::CheckIdentities => "check-identities",
            ExperimentKind::ChartCheck => "chart-check",
            ExperimentKind::Flow => "flow",
            ExperimentKind::Rescale => "rescale",
            ExperimentKind::GradientCheck => "gradient-check",
            ExperimentKind::ModeDecay => "mode-decay",
            ExperimentKind::SmoothingProbe => "smoothing-probe",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub resolution: [usize; 4],
    #[serde(default)]
    pub period: Option<[f64; 4]>,
}

impl GridSection {
    pub fn to_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.resolution, self.period.unwrap_or([TWO_PI; 4]))
    }
}

fn default_accuracy() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StencilSection {
    #[serde(default = "default_accuracy")]
    pub accuracy_order: usize,
}

impl Default for StencilSection {
    fn default() -> Self {
        StencilSection {
            accuracy_order: default_accuracy(),
        }
    }
}

/// Catalog of initial metrics for grid experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialDataKind {
    /// The flat metric.
    Flat,
    /// Identity plus independent band-limited random perturbations of all
    /// ten components (symmetrized, SPD-checked).
    RandomBand,
    /// Identity plus `amplitude * sin(wave . x)` on one component.
    SingleMode,
    /// Conformal metric `exp(2u) delta` with the periodic bump
    /// `u = amplitude * exp(width * (cos(x_1) - 1))`.
    ConformalBump,
    /// `diag(scale, 1, 1, 1)` plus `amplitude * cos(wave . x)` on one
    /// component: the stressed anisotropic family used by blow-up runs.
    AnisotropicMode,
}

fn default_amplitude() -> f64 {
    0.01
}
fn default_band() -> i64 {
    2
}
fn default_modes() -> usize {
    6
}
fn default_wave() -> [i64; 4] {
    [1, 0, 0, 0]
}
fn default_component() -> [usize; 2] {
    [2, 2]
}
fn default_scale() -> f64 {
    1.0
}
fn default_width() -> f64 {
    1.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDataSection {
    pub kind: InitialDataKind,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_band")]
    pub band: i64,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_wave")]
    pub wave: [i64; 4],
    #[serde(default = "default_component")]
    pub component: [usize; 2],
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    /// Overrides the run's master seed for the random draw.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for InitialDataSection {
    fn default() -> Self {
        InitialDataSection {
            kind: InitialDataKind::Flat,
            amplitude: default_amplitude(),
            band: default_band(),
            modes: default_modes(),
            wave: default_wave(),
            component: default_component(),
            scale: default_scale(),
            width: default_width(),
            seed: None,
        }
    }
}

impl InitialDataSection {
    /// Materialize the described metric on a grid. `master_seed` is used
    /// unless the section overrides it.
    pub fn build(&self, grid: &GridSpec, master_seed: u64) -> Result<MetricField> {
        let seed = self.seed.unwrap_or(master_seed);
        let [ci, cj] = self.component;
        if ci >= 4 || cj >= 4 {
            return Err(Error::BadConfig(format!(
                "initial_data.component indices must lie in 0..4, got [{ci}, {cj}]"
            )));
        }
        let comp = crate::algebra::SYM_INDEX[ci][cj];
        match self.kind {
            InitialDataKind::Flat => Ok(MetricField::identity(grid)),
            InitialDataKind::RandomBand => {
                seeded::random_metric(grid, self.band, self.amplitude, self.modes, seed)
            }
            InitialDataKind::SingleMode => {
                let wave = self.wave;
                let amp = self.amplitude;
                let mut f = MetricField::identity(grid).comps().clone();
                let base = f.comp(comp)[0];
                f.fill_comp(comp, |x| {
                    let phase: f64 =
                        (0..4).map(|a| wave[a] as f64 * x[a]).sum();
                    base + amp * phase.sin()
                });
                MetricField::new(f)
            }
            InitialDataKind::ConformalBump => {
                let amp = self.amplitude;
                let width = self.width;
                let mut f = Field::zeros(grid, 10);
                for i in 0..4 {
                    let c = crate::algebra::SYM_INDEX[i][i];
                    f.fill_comp(c, |x| {
                        let u = amp * (width * (x[0].cos() - 1.0)).exp();
                        (2.0 * u).exp()
                    });
                }
                MetricField::new(f)
            }
            InitialDataKind::AnisotropicMode => {
                let wave = self.wave;
                let amp = self.amplitude;
                let scale = self.scale;
                let mut f = Field::zeros(grid, 10);
                for i in 0..4 {
                    let d = crate::algebra::SYM_INDEX[i][i];
                    let v = if i == 0 { scale } else { 1.0 };
                    f.fill_comp(d, |_| v);
                }
                let base_plane: Vec<f64> = f.comp(comp).to_vec();
                f.fill_comp(comp, |x| {
                    let phase: f64 = (0..4).map(|a| wave[a] as f64 * x[a]).sum();
                    phase.cos() * amp
                });
                for (dst, b) in f.comp_mut(comp).iter_mut().zip(&base_plane) {
                    *dst += b;
                }
                MetricField::new(f)
            }
        }
    }
}

fn default_sigma() -> f64 {
    0.02
}
fn default_t_end() -> f64 {
    1e-3
}
fn default_max_steps() -> usize {
    10_000_000
}
fn default_cadence() -> usize {
    10
}
fn default_gauge() -> Gauge {
    Gauge::Plain
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    #[serde(default = "default_gauge")]
    pub gauge: Gauge,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_cadence")]
    pub record_every: usize,
    #[serde(default = "default_cadence")]
    pub snapshot_every: usize,
    #[serde(default)]
    pub curvature_ceiling: Option<f64>,
    #[serde(default)]
    pub derivative_orders: usize,
}

impl Default for FlowSection {
    fn default() -> Self {
        FlowSection {
            gauge: default_gauge(),
            sigma: default_sigma(),
            t_end: default_t_end(),
            max_steps: default_max_steps(),
            record_every: default_cadence(),
            snapshot_every: default_cadence(),
            curvature_ceiling: None,
            derivative_orders: 0,
        }
    }
}

impl FlowSection {
    pub fn to_flow_config(&self, accuracy_order: usize) -> FlowConfig {
        FlowConfig {
            accuracy_order,
            gauge: self.gauge,
            sigma: self.sigma,
            t_end: self.t_end,
            max_steps: self.max_steps,
            record_every: self.record_every,
            snapshot_every: self.snapshot_every,
            curvature_ceiling: self.curvature_ceiling,
            derivative_orders: self.derivative_orders,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartKind {
    Flat,
    ConstantConformal,
    ConformallyFlat,
    Sphere,
    ProductSpheres,
}

fn default_one() -> f64 {
    1.0
}
fn default_chart_amp() -> f64 {
    0.3
}
fn default_fd_step() -> f64 {
    1e-2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSection {
    pub metric: ChartKind,
    #[serde(default = "default_one")]
    pub factor: f64,
    #[serde(default = "default_chart_amp")]
    pub amplitude: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default)]
    pub center: [f64; 4],
    #[serde(default = "default_one")]
    pub radius: f64,
    #[serde(default = "default_one")]
    pub r1: f64,
    #[serde(default = "default_one")]
    pub r2: f64,
    /// Evaluation point; when omitted, the origin (or the band center of
    /// the product-spheres chart) is used.
    #[serde(default)]
    pub point: Option<[f64; 4]>,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

impl ChartSection {
    pub fn to_chart(&self) -> ChartMetric {
        match self.metric {
            ChartKind::Flat => ChartMetric::Flat,
            ChartKind::ConstantConformal => ChartMetric::ConstantConformal {
                factor: self.factor,
            },
            ChartKind::ConformallyFlat => ChartMetric::ConformallyFlat {
                amplitude: self.amplitude,
                width: self.width,
                center: self.center,
            },
            ChartKind::Sphere => ChartMetric::SphereStereographic {
                radius: self.radius,
            },
            ChartKind::ProductSpheres => ChartMetric::ProductSpheres {
                r1: self.r1,
                r2: self.r2,
            },
        }
    }

    pub fn eval_point(&self) -> [f64; 4] {
        self.point.unwrap_or(match self.metric {
            ChartKind::ProductSpheres => {
                let q = std::f64::consts::FRAC_PI_2;
                [q, 0.0, q, 0.0]
            }
            _ => [0.0; 4],
        })
    }
}

fn default_epsilon() -> f64 {
    1e-5
}
fn default_pairs() -> usize {
    3
}
fn default_gradient_amp() -> f64 {
    0.02
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientSection {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_gradient_amp")]
    pub amplitude: f64,
}

impl Default for GradientSection {
    fn default() -> Self {
        GradientSection {
            epsilon: default_epsilon(),
            pairs: default_pairs(),
            amplitude: default_gradient_amp(),
        }
    }
}

fn default_mode_amp() -> f64 {
    1e-4
}
fn default_mode_t_end() -> f64 {
    8.0
}
fn default_mode_res() -> usize {
    16
}
fn default_mode_sigma() -> f64 {
    0.08
}
fn default_mode_samples() -> usize {
    40
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeDecaySection {
    pub wave: [i64; 4],
    #[serde(default = "default_mode_amp")]
    pub amplitude: f64,
    #[serde(default = "default_mode_t_end")]
    pub t_end: f64,
    #[serde(default = "default_mode_res")]
    pub resolution: usize,
    #[serde(default = "default_mode_sigma")]
    pub sigma: f64,
    #[serde(default = "default_mode_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescaleSection {
    pub lambda: f64,
    #[serde(default)]
    pub t0: f64,
    /// Directory of a stored run to rescale; when omitted, the experiment
    /// first evolves a run from the grid/initial-data/flow sections.
    #[serde(default)]
    pub input: Option<String>,
}

fn default_orders() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingSection {
    #[serde(default = "default_orders")]
    pub orders: usize,
}

impl Default for SmoothingSection {
    fn default() -> Self {
        SmoothingSection {
            orders: default_orders(),
        }
    }
}

/// A fully parsed run description. `seed` is mandatory; every section
/// rejects unknown keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub stencil: StencilSection,
    #[serde(default)]
    pub initial_data: Option<InitialDataSection>,
    #[serde(default)]
    pub flow: Option<FlowSection>,
    #[serde(default)]
    pub chart: Option<ChartSection>,
    #[serde(default)]
    pub gradient_check: Option<GradientSection>,
    #[serde(default)]
    pub mode_decay: Option<ModeDecaySection>,
    #[serde(default)]
    pub rescale: Option<RescaleSection>,
    #[serde(default)]
    pub smoothing: Option<SmoothingSection>,
}

impl RunConfig {
    /// Cross-field checks beyond the TOML schema: the experiment's
    /// required sections must be present and numeric parameters sane.
    pub fn validate(&self) -> Result<()> {
        let p = self.stencil.accuracy_order;
        if !matches!(p, 2 | 4 | 6) {
            return Err(Error::ConfigParse(format!(
                "stencil.accuracy_order: must be 2, 4 or 6, got {p}"
            )));
        }
        let need = |ok: bool, what: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::ConfigParse(format!(
                    "experiment {:?} requires the [{what}] section",
                    self.experiment.as_str()
                )))
            }
        };
        match self.experiment {
            ExperimentKind::CheckIdentities | ExperimentKind::GradientCheck => {
                need(self.grid.is_some(), "grid")?
            }
            ExperimentKind::Flow | ExperimentKind::SmoothingProbe => {
                need(self.grid.is_some(), "grid")?;
            }
            ExperimentKind::ChartCheck => need(self.chart.is_some(), "chart")?,
            ExperimentKind::ModeDecay => need(self.mode_decay.is_some(), "mode_decay")?,
            ExperimentKind::Rescale => {
                need(self.rescale.is_some(), "rescale")?;
                let r = self.rescale.as_ref().unwrap();
                if r.input.is_none() {
                    need(self.grid.is_some(), "grid")?;
                }
                if !(r.lambda > 0.0 && r.lambda.is_finite()) {
                    return Err(Error::ConfigParse(format!(
                        "rescale.lambda: must be positive and finite, got {}",
                        r.lambda
                    )));
                }
            }
        }
        if let Some(g) = &self.grid {
            g.to_spec()?;
        }
        if let Some(f) = &self.flow {
            if !(f.sigma > 0.0) || !(f.t_end >= 0.0) {
                return Err(Error::ConfigParse(
                    "flow.sigma must be positive and flow.t_end nonnegative".into(),
                ));
            }
        }
        if let Some(gc) = &self.gradient_check {
            if !(gc.epsilon > 0.0) || gc.pairs == 0 {
                return Err(Error::ConfigParse(
                    "gradient_check.epsilon must be positive and pairs nonzero".into(),
                ));
            }
        }
        if let Some(md) = &self.mode_decay {
            if md.wave.iter().all(|&k| k == 0) {
                return Err(Error::ConfigParse(
                    "mode_decay.wave: at least one component must be nonzero".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Parse and validate a config from TOML text. Schema violations carry
/// the TOML parser's line/column pointer.
pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parse a config file; errors name the file.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
    parse_run_config(&text).map_err(|e| match e {
        Error::ConfigParse(msg) => Error::ConfigParse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

// ---------------------------------------------------------------------------
// Run manifests.
// ---------------------------------------------------------------------------

/// Written next to every experiment's artifacts: enough to reproduce the
/// run (full config echo + seed + code version) and to learn how it ended
/// without parsing logs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format: u32,
    pub code_version: String,
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Validated worker cap (from OBFLOW_THREADS; 1 = serial).
    pub threads: usize,
    /// `completed`, or a short reason for a numerical stop.
    pub outcome: String,
    /// Termination reason when the experiment ran a flow.
    #[serde(default)]
    pub termination: Option<Termination>,
    /// Artifact file names, relative to the manifest's directory.
    pub artifacts: Vec<String>,
    /// Full echo of the configuration the run used.
    pub config: RunConfig,
}

pub const MANIFEST_FILE: &str = "manifest.toml";

pub fn save_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(MANIFEST_FILE);
    let text = toml::to_string_pretty(manifest)
        .map_err(|e| Error::SnapshotFormat(format!("manifest serialization: {e}")))?;
    fs::write(&path, text)?;
    Ok(path)
}

pub fn load_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
    let m: RunManifest = toml::from_str(&text)
        .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
    Ok(m)
}
