//! On-disk formats.
//!
//! * Snapshot files: a text form (header lines, then one row per line) and
//!   a binary form (one text header line, then row-major little-endian
//!   f64). Floats in text files are printed with Rust's shortest
//!   round-trip notation, so both forms reload bit-exactly.
//! * ROM databases: a directory holding `manifest.txt` plus three factor
//!   matrices per training node.
//! * Error reports and run logs: plain text, machine-parseable.
//!
//! Every format starts with a magic token and a version tag; unknown
//! versions are rejected explicitly rather than misread.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use stpod_core::interp::RomDatabase;
use stpod_core::manifold::StiefelPoint;
use stpod_core::metrics::ErrorReport;
use stpod_core::osvd::PodFactors;
use stpod_core::rvpfem::StepLog;
use stpod_core::{FieldKind, SnapshotMatrix, SnapshotMeta};

pub const SNAPSHOT_MAGIC: &str = "stpod-snapshot";
pub const SNAPSHOT_BIN_MAGIC: &str = "stpod-snapshot-bin";
pub const MATRIX_MAGIC: &str = "stpod-matrix";
pub const MANIFEST_MAGIC: &str = "stpod-rom-manifest";
pub const REPORT_MAGIC: &str = "stpod-error-report";
pub const FORMAT_VERSION: &str = "v1";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {what}")]
    Parse {
        path: PathBuf,
        line: usize,
        what: String,
    },
    #[error("{path}: unsupported format version {found:?} (this build reads {expected})")]
    UnsupportedVersion {
        path: PathBuf,
        found: String,
        expected: &'static str,
    },
    #[error("{path}: not a {expected} file")]
    BadMagic { path: PathBuf, expected: &'static str },
    #[error("{path}: header promises {expected} values but the body holds {found}")]
    HeaderBodyMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: {what}")]
    Invalid { path: PathBuf, what: String },
}

type Result<T> = std::result::Result<T, FormatError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Whole-file atomic write: temp sibling + rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotFormat {
    Text,
    Binary,
}

pub fn write_snapshot(path: &Path, snap: &SnapshotMatrix, format: SnapshotFormat) -> Result<()> {
    validate_units(path, &snap.meta.units)?;
    let (rows, cols) = snap.data.shape();
    let mut out = Vec::new();
    match format {
        SnapshotFormat::Binary => {
            let header = format!(
                "{SNAPSHOT_BIN_MAGIC} {FORMAT_VERSION} kind={} rows={rows} cols={cols} param={:e} units={} dt={:e}\n",
                snap.kind, snap.param, snap.meta.units, snap.meta.dt
            );
            out.extend_from_slice(header.as_bytes());
            for r in 0..rows {
                for c in 0..cols {
                    out.extend_from_slice(&snap.data[(r, c)].to_le_bytes());
                }
            }
        }
        SnapshotFormat::Text => {
            out.extend_from_slice(format!("{SNAPSHOT_MAGIC} {FORMAT_VERSION}\n").as_bytes());
            out.extend_from_slice(format!("kind {}\n", snap.kind).as_bytes());
            out.extend_from_slice(format!("rows {rows}\n").as_bytes());
            out.extend_from_slice(format!("cols {cols}\n").as_bytes());
            out.extend_from_slice(format!("param {:e}\n", snap.param).as_bytes());
            out.extend_from_slice(format!("units {}\n", snap.meta.units).as_bytes());
            out.extend_from_slice(format!("dt {:e}\n", snap.meta.dt).as_bytes());
            for r in 0..rows {
                let mut line = String::new();
                for c in 0..cols {
                    if c > 0 {
                        line.push(' ');
                    }
                    line.push_str(&format!("{:e}", snap.data[(r, c)]));
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
        }
    }
    write_atomic(path, &out)
}

pub fn read_snapshot(path: &Path) -> Result<SnapshotMatrix> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let first_nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| FormatError::BadMagic {
            path: path.to_path_buf(),
            expected: SNAPSHOT_MAGIC,
        })?;
    let first_line = String::from_utf8_lossy(&bytes[..first_nl]).into_owned();
    let mut tokens = first_line.split_whitespace();
    match tokens.next() {
        Some(SNAPSHOT_BIN_MAGIC) => read_snapshot_binary(path, &first_line, &bytes[first_nl + 1..]),
        Some(SNAPSHOT_MAGIC) => read_snapshot_text(path, &bytes),
        _ => Err(FormatError::BadMagic {
            path: path.to_path_buf(),
            expected: SNAPSHOT_MAGIC,
        }),
    }
}

fn check_version(path: &Path, token: Option<&str>) -> Result<()> {
    match token {
        Some(FORMAT_VERSION) => Ok(()),
        other => Err(FormatError::UnsupportedVersion {
            path: path.to_path_buf(),
            found: other.unwrap_or("<missing>").to_string(),
            expected: FORMAT_VERSION,
        }),
    }
}

fn parse_kind(path: &Path, line: usize, s: &str) -> Result<FieldKind> {
    FieldKind::parse(s).ok_or_else(|| FormatError::Parse {
        path: path.to_path_buf(),
        line,
        what: format!("unknown field kind {s:?}"),
    })
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| FormatError::Parse {
        path: path.to_path_buf(),
        line,
        what: format!("cannot parse {what} from {s:?}"),
    })
}

fn validate_units(path: &Path, units: &str) -> Result<()> {
    if units.is_empty() || units.contains(char::is_whitespace) {
        return Err(FormatError::Invalid {
            path: path.to_path_buf(),
            what: format!("units {units:?} must be a single non-empty token"),
        });
    }
    Ok(())
}

fn read_snapshot_binary(path: &Path, header: &str, body: &[u8]) -> Result<SnapshotMatrix> {
    let mut tokens = header.split_whitespace();
    tokens.next(); // magic
    check_version(path, tokens.next())?;
    let mut kind = None;
    let mut rows = None;
    let mut cols = None;
    let mut param = None;
    let mut units = None;
    let mut dt = None;
    for tok in tokens {
        let (key, value) = tok.split_once('=').ok_or_else(|| FormatError::Parse {
            path: path.to_path_buf(),
            line: 1,
            what: format!("malformed header token {tok:?}"),
        })?;
        match key {
            "kind" => kind = Some(parse_kind(path, 1, value)?),
            "rows" => rows = Some(parse_num::<usize>(path, 1, value, "rows")?),
            "cols" => cols = Some(parse_num::<usize>(path, 1, value, "cols")?),
            "param" => param = Some(parse_num::<f64>(path, 1, value, "param")?),
            "units" => units = Some(value.to_string()),
            "dt" => dt = Some(parse_num::<f64>(path, 1, value, "dt")?),
            other => {
                return Err(FormatError::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    what: format!("unknown header key {other:?}"),
                })
            }
        }
    }
    let missing = |what: &str| FormatError::Parse {
        path: path.to_path_buf(),
        line: 1,
        what: format!("missing header key {what:?}"),
    };
    let (rows, cols) = (rows.ok_or_else(|| missing("rows"))?, cols.ok_or_else(|| missing("cols"))?);
    let expected = rows * cols;
    if body.len() != expected * 8 {
        return Err(FormatError::HeaderBodyMismatch {
            path: path.to_path_buf(),
            expected,
            found: body.len() / 8,
        });
    }
    let mut data = DMatrix::zeros(rows, cols);
    for i in 0..expected {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&body[8 * i..8 * i + 8]);
        data[(i / cols, i % cols)] = f64::from_le_bytes(buf);
    }
    Ok(SnapshotMatrix::new(
        data,
        param.ok_or_else(|| missing("param"))?,
        kind.ok_or_else(|| missing("kind"))?,
        SnapshotMeta {
            units: units.ok_or_else(|| missing("units"))?,
            dt: dt.ok_or_else(|| missing("dt"))?,
        },
    ))
}

fn read_snapshot_text(path: &Path, bytes: &[u8]) -> Result<SnapshotMatrix> {
    let text = std::str::from_utf8(bytes).map_err(|_| FormatError::Parse {
        path: path.to_path_buf(),
        line: 1,
        what: "file is not valid UTF-8".to_string(),
    })?;
    let mut lines = text.lines().enumerate();
    let (_, magic_line) = lines.next().ok_or_else(|| FormatError::BadMagic {
        path: path.to_path_buf(),
        expected: SNAPSHOT_MAGIC,
    })?;
    let mut tok = magic_line.split_whitespace();
    tok.next();
    check_version(path, tok.next())?;

    let mut header = std::collections::BTreeMap::new();
    for _ in 0..6 {
        let (idx, line) = lines.next().ok_or_else(|| FormatError::Parse {
            path: path.to_path_buf(),
            line: 0,
            what: "truncated header".to_string(),
        })?;
        let (key, value) = line.split_once(' ').ok_or_else(|| FormatError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            what: format!("malformed header line {line:?}"),
        })?;
        header.insert(key.to_string(), (idx + 1, value.to_string()));
    }
    let get = |key: &str| -> Result<(usize, String)> {
        header.get(key).cloned().ok_or_else(|| FormatError::Parse {
            path: path.to_path_buf(),
            line: 1,
            what: format!("missing header key {key:?}"),
        })
    };
    let (l, kind) = get("kind")?;
    let kind = parse_kind(path, l, &kind)?;
    let (l, rows) = get("rows")?;
    let rows: usize = parse_num(path, l, &rows, "rows")?;
    let (l, cols) = get("cols")?;
    let cols: usize = parse_num(path, l, &cols, "cols")?;
    let (l, param) = get("param")?;
    let param: f64 = parse_num(path, l, &param, "param")?;
    let (_, units) = get("units")?;
    let (l, dt) = get("dt")?;
    let dt: f64 = parse_num(path, l, &dt, "dt")?;

    let mut values = Vec::with_capacity(rows * cols);
    for (idx, line) in lines {
        for field in line.split_whitespace() {
            values.push(parse_num::<f64>(path, idx + 1, field, "matrix entry")?);
        }
    }
    if values.len() != rows * cols {
        return Err(FormatError::HeaderBodyMismatch {
            path: path.to_path_buf(),
            expected: rows * cols,
            found: values.len(),
        });
    }
    let data = DMatrix::from_row_slice(rows, cols, &values);
    Ok(SnapshotMatrix::new(
        data,
        param,
        kind,
        SnapshotMeta {
            units: units.to_string(),
            dt,
        },
    ))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(64 + rows * cols * 8);
    out.extend_from_slice(
        format!("{MATRIX_MAGIC} {FORMAT_VERSION} rows={rows} cols={cols}\n").as_bytes(),
    );
    for r in 0..rows {
        for c in 0..cols {
            out.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
    write_atomic(path, &out)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let first_nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| FormatError::BadMagic {
            path: path.to_path_buf(),
            expected: MATRIX_MAGIC,
        })?;
    let header = String::from_utf8_lossy(&bytes[..first_nl]).into_owned();
    let mut tok = header.split_whitespace();
    if tok.next() != Some(MATRIX_MAGIC) {
        return Err(FormatError::BadMagic {
            path: path.to_path_buf(),
            expected: MATRIX_MAGIC,
        });
    }
    check_version(path, tok.next())?;
    let mut rows = None;
    let mut cols = None;
    for t in tok {
        match t.split_once('=') {
            Some(("rows", v)) => rows = Some(parse_num::<usize>(path, 1, v, "rows")?),
            Some(("cols", v)) => cols = Some(parse_num::<usize>(path, 1, v, "cols")?),
            _ => {}
        }
    }
    let (rows, cols) = match (rows, cols) {
        (Some(r), Some(c)) => (r, c),
        _ => {
            return Err(FormatError::Parse {
                path: path.to_path_buf(),
                line: 1,
                what: "matrix header needs rows= and cols=".to_string(),
            })
        }
    };
    let body = &bytes[first_nl + 1..];
    if body.len() != rows * cols * 8 {
        return Err(FormatError::HeaderBodyMismatch {
            path: path.to_path_buf(),
            expected: rows * cols,
            found: body.len() / 8,
        });
    }
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows * cols {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&body[8 * i..8 * i + 8]);
        m[(i / cols, i % cols)] = f64::from_le_bytes(buf);
    }
    Ok(m)
}

fn factor_names(k: usize) -> (String, String, String) {
    (
        format!("phi_{k:03}.mat"),
        format!("sigma_{k:03}.mat"),
        format!("psi_{k:03}.mat"),
    )
}

pub fn write_rom_database(dir: &Path, db: &RomDatabase, provenance: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = String::new();
    manifest.push_str(&format!("{MANIFEST_MAGIC} {FORMAT_VERSION}\n"));
    manifest.push_str(&format!("format_version {}\n", db.format_version()));
    manifest.push_str(&format!("field {}\n", db.field_kind()));
    manifest.push_str(&format!("mode {}\n", db.mode()));
    manifest.push_str(&format!("ref_index {}\n", db.ref_index()));
    manifest.push_str(&format!("nodes {}\n", db.params().len()));
    manifest.push_str(&format!("rows {}\n", db.n()));
    manifest.push_str(&format!("cols {}\n", db.m()));
    manifest.push_str(&format!("units {}\n", db.meta().units));
    manifest.push_str(&format!("dt {:e}\n", db.meta().dt));
    manifest.push_str("params");
    for p in db.params() {
        manifest.push_str(&format!(" {p:e}"));
    }
    manifest.push('\n');
    manifest.push_str(&format!("created_by {provenance}\n"));

    for (k, f) in db.factors().iter().enumerate() {
        let (phi, sigma, psi) = factor_names(k);
        write_matrix(&dir.join(phi), f.phi_p.matrix())?;
        write_matrix(
            &dir.join(sigma),
            &DMatrix::from_column_slice(f.sigma_p.len(), 1, f.sigma_p.as_slice()),
        )?;
        write_matrix(&dir.join(psi), f.psi_p.matrix())?;
    }
    write_atomic(&dir.join("manifest.txt"), manifest.as_bytes())
}

pub fn read_rom_database(dir: &Path) -> Result<RomDatabase> {
    let manifest_path = dir.join("manifest.txt");
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let mut lines = text.lines().enumerate();
    let (_, magic_line) = lines.next().ok_or_else(|| FormatError::BadMagic {
        path: manifest_path.clone(),
        expected: MANIFEST_MAGIC,
    })?;
    let mut tok = magic_line.split_whitespace();
    if tok.next() != Some(MANIFEST_MAGIC) {
        return Err(FormatError::BadMagic {
            path: manifest_path.clone(),
            expected: MANIFEST_MAGIC,
        });
    }
    check_version(&manifest_path, tok.next())?;

    let mut fields = std::collections::BTreeMap::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line.split_once(' ').ok_or_else(|| FormatError::Parse {
            path: manifest_path.clone(),
            line: idx + 1,
            what: format!("malformed manifest line {line:?}"),
        })?;
        fields.insert(key.to_string(), (idx + 1, value.to_string()));
    }
    let get = |key: &str| -> Result<(usize, String)> {
        fields.get(key).cloned().ok_or_else(|| FormatError::Parse {
            path: manifest_path.clone(),
            line: 1,
            what: format!("missing manifest key {key:?}"),
        })
    };
    let (l, v) = get("format_version")?;
    let format_version: u32 = parse_num(&manifest_path, l, &v, "format_version")?;
    if format_version != stpod_core::interp::ROM_FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion {
            path: manifest_path.clone(),
            found: format_version.to_string(),
            expected: "1",
        });
    }
    let (l, v) = get("field")?;
    let kind = parse_kind(&manifest_path, l, &v)?;
    let (l, v) = get("mode")?;
    let mode: usize = parse_num(&manifest_path, l, &v, "mode")?;
    let (l, v) = get("ref_index")?;
    let ref_index: usize = parse_num(&manifest_path, l, &v, "ref_index")?;
    let (l, v) = get("nodes")?;
    let nodes: usize = parse_num(&manifest_path, l, &v, "nodes")?;
    let (_, units) = get("units")?;
    let (l, v) = get("dt")?;
    let dt: f64 = parse_num(&manifest_path, l, &v, "dt")?;
    let (l, v) = get("params")?;
    let params: Vec<f64> = v
        .split_whitespace()
        .map(|s| parse_num::<f64>(&manifest_path, l, s, "parameter"))
        .collect::<Result<_>>()?;
    if params.len() != nodes {
        return Err(FormatError::Invalid {
            path: manifest_path.clone(),
            what: format!("manifest lists {nodes} nodes but {} params", params.len()),
        });
    }

    let mut factors = Vec::with_capacity(nodes);
    for k in 0..nodes {
        let (phi_name, sigma_name, psi_name) = factor_names(k);
        let phi = read_matrix(&dir.join(&phi_name))?;
        let sigma = read_matrix(&dir.join(&sigma_name))?;
        let psi = read_matrix(&dir.join(&psi_name))?;
        let invalid = |what: String| FormatError::Invalid {
            path: dir.join(&phi_name),
            what,
        };
        if mode == 0 || phi.ncols() != mode || psi.ncols() != mode || sigma.nrows() != mode {
            return Err(invalid(format!(
                "factor shapes disagree with mode {mode} at node {k}"
            )));
        }
        let phi_p = StiefelPoint::new(phi)
            .map_err(|e| invalid(format!("spatial factor {k} is off the manifold: {e}")))?;
        let psi_p = StiefelPoint::new(psi)
            .map_err(|e| invalid(format!("temporal factor {k} is off the manifold: {e}")))?;
        factors.push(PodFactors {
            phi_p,
            sigma_p: DVector::from_column_slice(sigma.as_slice()),
            psi_p,
            mode,
        });
    }

    RomDatabase::from_parts(
        params,
        factors,
        ref_index,
        kind,
        format_version,
        SnapshotMeta {
            units: units.clone(),
            dt,
        },
    )
    .map_err(|e| FormatError::Invalid {
        path: manifest_path,
        what: e.to_string(),
    })
}

/// Error report: human-readable and line-parseable at the same time.
pub fn write_error_report(
    path: &Path,
    report: &ErrorReport,
    pred: &Path,
    truth: &Path,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{REPORT_MAGIC} {FORMAT_VERSION}\n"));
    out.push_str(&format!("pred {}\n", pred.display()));
    out.push_str(&format!("truth {}\n", truth.display()));
    out.push_str(&format!("frobenius {:e}\n", report.frobenius));
    out.push_str(&format!("columns {}\n", report.per_column_l2.len()));
    out.push_str("col relative_l2\n");
    for (i, e) in report.per_column_l2.iter().enumerate() {
        out.push_str(&format!("{} {e:e}\n", i + 1));
    }
    out.push_str("mode cumulative_energy\n");
    for (i, e) in report.energy_curve.iter().enumerate() {
        out.push_str(&format!("{} {e:e}\n", i + 1));
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_run_log(path: &Path, friction_m: f64, logs: &[StepLog]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("stpod-fem-run-log {FORMAT_VERSION}\n"));
    out.push_str(&format!("friction_m {friction_m:e}\n"));
    out.push_str("step iterations direct velocity_error residual_norm captured\n");
    for log in logs {
        out.push_str(&format!(
            "{} {} {} {:e} {:e} {}\n",
            log.step,
            log.iterations,
            log.direct_iterations,
            log.velocity_error,
            log.residual_norm,
            log.captured_nodes
        ));
    }
    write_atomic(path, out.as_bytes())
}
