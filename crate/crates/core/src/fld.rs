//! `.fld` field container: a short text header followed by a raw
//! little-endian `f64` payload.
//!
//! ```text
//! LLAB-FIELD
//! version 1
//! kind potential
//! dim 1
//! r0 64
//! n 8
//! values 512
//! extra 64
//! provenance {"source":"anderson",...}
//! sha256 <hex digest of the payload bytes>
//! end
//! <values as f64 LE, row-major> <extra as f64 LE>
//! ```
//!
//! `extra` holds the Anderson amplitudes for potentials and is `0` otherwise.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::landscape::LandscapeField;
use crate::potential::{PotentialField, Provenance};

pub const MAGIC: &str = "LLAB-FIELD";
pub const FORMAT_VERSION: u32 = 1;
pub const EXTENSION: &str = "fld";

/// Decoded contents of a field file.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRecord {
    pub kind: String,
    pub grid: TorusGrid,
    pub values: Vec<f64>,
    pub extra: Vec<f64>,
    pub provenance: serde_json::Value,
    pub sha256: String,
}

pub fn payload_digest(values: &[f64], extra: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for v in values.iter().chain(extra) {
        hasher.update(v.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

pub fn encode(
    kind: &str,
    grid: &TorusGrid,
    values: &[f64],
    extra: &[f64],
    provenance: &serde_json::Value,
) -> Vec<u8> {
    let digest = payload_digest(values, extra);
    let mut out = Vec::with_capacity(256 + 8 * (values.len() + extra.len()));
    let _ = write!(
        out,
        "{MAGIC}\nversion {FORMAT_VERSION}\nkind {kind}\ndim {}\nr0 {}\nn {}\nvalues {}\nextra {}\nprovenance {}\nsha256 {digest}\nend\n",
        grid.dim(),
        grid.side_length(),
        grid.points_per_unit(),
        values.len(),
        extra.len(),
        provenance,
    );
    for v in values.iter().chain(extra) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<FieldRecord> {
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let len = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("header ends early".into()))?;
        pos += len + 1;
        std::str::from_utf8(&rest[..len]).map_err(|_| Error::Format("header is not UTF-8".into()))
    };
    if next_line()? != MAGIC {
        return Err(Error::Format("missing LLAB-FIELD magic".into()));
    }
    let mut field = |name: &str| -> Result<String> {
        let line = next_line()?;
        line.strip_prefix(name)
            .and_then(|v| v.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| Error::Format(format!("expected `{name}`, found `{line}`")))
    };
    let int = |s: String, name: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::Format(format!("bad {name}: {s}")))
    };
    let version = int(field("version")?, "version")?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let kind = field("kind")?;
    let dim = int(field("dim")?, "dim")?;
    let r0 = int(field("r0")?, "r0")?;
    let n = int(field("n")?, "n")?;
    let count = int(field("values")?, "values")?;
    let extra_count = int(field("extra")?, "extra")?;
    let provenance: serde_json::Value = serde_json::from_str(&field("provenance")?)
        .map_err(|e| Error::Format(format!("provenance: {e}")))?;
    let sha256 = field("sha256")?;
    if next_line()? != "end" {
        return Err(Error::Format("missing end of header".into()));
    }
    let grid = TorusGrid::new(dim, r0, n).map_err(|e| Error::Format(e.to_string()))?;
    if count != grid.total_points() {
        return Err(Error::Format(format!("{count} values for a grid of {}", grid.total_points())));
    }
    let payload = &bytes[pos..];
    if payload.len() != 8 * (count + extra_count) {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            8 * (count + extra_count)
        )));
    }
    let mut floats = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    let values: Vec<f64> = floats.by_ref().take(count).collect();
    let extra: Vec<f64> = floats.collect();
    let found = payload_digest(&values, &extra);
    if found != sha256 {
        return Err(Error::ChecksumMismatch { expected: sha256, found });
    }
    Ok(FieldRecord { kind, grid, values, extra, provenance, sha256 })
}

pub fn read(path: &Path) -> Result<FieldRecord> {
    decode(&fs::read(path)?)
}

fn expect_kind(record: &FieldRecord, kind: &str) -> Result<()> {
    if record.kind == kind {
        Ok(())
    } else {
        Err(Error::Format(format!("expected a {kind} field, found {}", record.kind)))
    }
}

/// Write a potential; returns the payload digest.
pub fn save_field(path: &Path, field: &PotentialField) -> Result<String> {
    save_field_with(path, field, None)
}

/// Write a potential, optionally stamping the run's configuration hash into
/// the provenance.
pub fn save_field_with(path: &Path, field: &PotentialField, config_sha256: Option<&str>) -> Result<String> {
    let mut provenance = serde_json::to_value(field.provenance()).expect("provenance serializes");
    if let Some(h) = config_sha256 {
        provenance["config_sha256"] = h.into();
    }
    let extra = field.omegas().unwrap_or(&[]);
    fs::write(path, encode("potential", field.grid(), field.values(), extra, &provenance))?;
    Ok(payload_digest(field.values(), extra))
}

pub fn load_field(path: &Path) -> Result<PotentialField> {
    let record = read(path)?;
    expect_kind(&record, "potential")?;
    let mut prov = record.provenance.clone();
    if let Some(obj) = prov.as_object_mut() {
        obj.remove("config_sha256");
    }
    let provenance: Provenance =
        serde_json::from_value(prov).map_err(|e| Error::Format(format!("provenance: {e}")))?;
    let omegas = (!record.extra.is_empty()).then_some(record.extra);
    PotentialField::with_omegas(record.grid, record.values, omegas, provenance)
        .map_err(|e| Error::Format(e.to_string()))
}

/// Write a landscape `u`, linking it to the digest of the potential it solves.
pub fn save_landscape(
    path: &Path,
    landscape: &LandscapeField,
    potential_sha256: &str,
    config_sha256: Option<&str>,
) -> Result<String> {
    let mut provenance = serde_json::json!({
        "source": "landscape",
        "potential_sha256": potential_sha256,
        "residual_norm": landscape.residual_norm(),
        "iterations": landscape.iterations(),
    });
    if let Some(h) = config_sha256 {
        provenance["config_sha256"] = h.into();
    }
    fs::write(path, encode("landscape", landscape.grid(), landscape.u(), &[], &provenance))?;
    Ok(payload_digest(landscape.u(), &[]))
}

pub fn load_landscape(path: &Path) -> Result<LandscapeField> {
    let record = read(path)?;
    expect_kind(&record, "landscape")?;
    let residual = record.provenance["residual_norm"].as_f64().unwrap_or(f64::NAN);
    let iterations = record.provenance["iterations"].as_u64().unwrap_or(0) as usize;
    LandscapeField::from_parts(record.grid, record.values, residual, iterations)
        .map_err(|e| Error::Format(e.to_string()))
}
