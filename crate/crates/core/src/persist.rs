//! Versioned little-endian model container with a JSON sidecar.
//!
//! The layout is described in `docs/format.md`. Loading a saved model yields a
//! value equal to the original, bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FilterBank;
use crate::ocsc::{OcscConfig, OcscModel};
use crate::prox::{ConstraintKind, ConstraintSetTag};
use crate::scsc::{ScscConfig, ScscModel};
use crate::solvers::admm::AdmmState;
use crate::stats::HistoryStats;
use crate::tensor::{FilterSupport, SpectralArray};

pub const FORMAT_VERSION: u32 = 1;
pub const SCSC_MAGIC: &[u8; 4] = b"SCSC";
pub const OCSC_MAGIC: &[u8; 4] = b"OCSC";

/// Which learner a container holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Scsc,
    Ocsc,
}

/// Scalar metadata, as stored in the header and mirrored in the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub kind: ModelKind,
    pub version: u32,
    /// Number of stored filters (`R` for SCSC, `K` for OCSC).
    pub filters: usize,
    pub k: usize,
    pub filter_extents: Vec<usize>,
    pub padded_extents: Vec<usize>,
    pub tag: Option<ConstraintSetTag>,
    pub beta: f64,
    pub seed: u64,
    pub samples_seen: u64,
    pub has_stats: bool,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn complex(&mut self, values: &[Complex64]) {
        for c in values {
            self.f64(c.re);
            self.f64(c.im);
        }
    }
    fn spectra(&mut self, s: &[SpectralArray]) {
        for a in s {
            self.complex(a.data());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated file: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn complex(&mut self, n: usize) -> Result<Vec<Complex64>> {
        (0..n)
            .map(|_| Ok(Complex64::new(self.f64()?, self.f64()?)))
            .collect()
    }
    fn spectra(&mut self, count: usize, shape: &[usize]) -> Result<Vec<SpectralArray>> {
        let p: usize = shape.iter().product();
        (0..count)
            .map(|_| SpectralArray::new(shape.to_vec(), self.complex(p)?))
            .collect()
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn tag_code(tag: Option<&ConstraintSetTag>) -> u8 {
    match tag.map(|t| t.kind) {
        None => 0,
        Some(ConstraintKind::WeightL1Ball) => 1,
        Some(ConstraintKind::WeightL2Ball) => 2,
        Some(ConstraintKind::FilterUnitBall) => 3,
    }
}

fn tag_from_code(code: u8, radius: f64) -> Result<Option<ConstraintSetTag>> {
    let kind = match code {
        0 => return Ok(None),
        1 => ConstraintKind::WeightL1Ball,
        2 => ConstraintKind::WeightL2Ball,
        3 => ConstraintKind::FilterUnitBall,
        other => return Err(Error::Format(format!("unknown constraint tag {other}"))),
    };
    Ok(Some(ConstraintSetTag { kind, radius }))
}

fn write_header(w: &mut Writer, meta: &ModelMetadata) -> Result<()> {
    w.0.extend_from_slice(match meta.kind {
        ModelKind::Scsc => SCSC_MAGIC,
        ModelKind::Ocsc => OCSC_MAGIC,
    });
    w.u32(meta.version as usize)?;
    w.u32(meta.filters)?;
    w.u32(meta.k)?;
    w.u32(meta.filter_extents.len())?;
    for &m in &meta.filter_extents {
        w.u32(m)?;
    }
    for &p in &meta.padded_extents {
        w.u32(p)?;
    }
    w.u8(tag_code(meta.tag.as_ref()));
    w.f64(meta.tag.map_or(0.0, |t| t.radius));
    w.f64(meta.beta);
    w.u64(meta.seed);
    w.u64(meta.samples_seen);
    Ok(())
}

fn read_header(r: &mut Reader<'_>) -> Result<ModelMetadata> {
    let kind = match r.take(4)? {
        m if m == SCSC_MAGIC => ModelKind::Scsc,
        m if m == OCSC_MAGIC => ModelKind::Ocsc,
        m => return Err(Error::Format(format!("bad magic {m:?}"))),
    };
    let version = r.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let filters = r.u32()?;
    let k = r.u32()?;
    let ndim = r.u32()?;
    if ndim == 0 || ndim > 8 {
        return Err(Error::Format(format!("implausible dimension count {ndim}")));
    }
    let filter_extents = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let padded_extents = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let code = r.u8()?;
    let radius = r.f64()?;
    let tag = tag_from_code(code, radius)?;
    let beta = r.f64()?;
    let seed = r.u64()?;
    let samples_seen = r.u64()?;
    Ok(ModelMetadata {
        kind,
        version,
        filters,
        k,
        filter_extents,
        padded_extents,
        tag,
        beta,
        seed,
        samples_seen,
        has_stats: false,
    })
}

fn write_body(
    w: &mut Writer,
    bank: &FilterBank,
    stats: &HistoryStats,
    admm: &AdmmState,
    config_json: &str,
) -> Result<()> {
    w.spectra(bank.spectra());
    w.u8(1);
    w.complex(stats.second_moments());
    w.complex(stats.cross_terms());
    w.f64(stats.energy());
    w.f64(admm.rho);
    w.spectra(&admm.primal);
    w.spectra(&admm.auxiliary);
    w.spectra(&admm.dual);
    w.u32(config_json.len())?;
    w.0.extend_from_slice(config_json.as_bytes());
    Ok(())
}

struct Body {
    bank: FilterBank,
    stats: HistoryStats,
    admm: AdmmState,
    config_json: String,
}

fn read_body(r: &mut Reader<'_>, meta: &mut ModelMetadata) -> Result<Body> {
    let support = FilterSupport::new(meta.filter_extents.clone(), meta.padded_extents.clone())
        .map_err(|e| Error::Format(e.to_string()))?;
    let shape = meta.padded_extents.clone();
    let n = meta.filters;
    let spectra = r.spectra(n, &shape)?;
    let bank = FilterBank::from_spectra(spectra, &support).map_err(|e| Error::Format(e.to_string()))?;
    if r.u8()? != 1 {
        return Err(Error::Format("statistics payload is missing".into()));
    }
    meta.has_stats = true;
    let p: usize = shape.iter().product();
    let h = r.complex(n * n * p)?;
    let g = r.complex(n * p)?;
    let energy = r.f64()?;
    let stats = HistoryStats::from_moments(n, shape.clone(), h, g, energy, meta.samples_seen)
        .map_err(|e| Error::Format(e.to_string()))?;
    let rho = r.f64()?;
    let admm = AdmmState {
        primal: r.spectra(n, &shape)?,
        auxiliary: r.spectra(n, &shape)?,
        dual: r.spectra(n, &shape)?,
        rho,
    };
    let len = r.u32()?;
    let config_json = String::from_utf8(r.take(len)?.to_vec())
        .map_err(|_| Error::Format("configuration is not UTF-8".into()))?;
    r.finish()?;
    Ok(Body {
        bank,
        stats,
        admm,
        config_json,
    })
}

impl ScscModel {
    pub fn metadata(&self) -> ModelMetadata {
        ModelMetadata {
            kind: ModelKind::Scsc,
            version: FORMAT_VERSION,
            filters: self.config.r,
            k: self.config.k,
            filter_extents: self.support().extents().to_vec(),
            padded_extents: self.support().padded_extents().to_vec(),
            tag: Some(self.config.tag),
            beta: self.config.beta,
            seed: self.seed,
            samples_seen: self.stats.count(),
            has_stats: true,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer(Vec::new());
        write_header(&mut w, &self.metadata())?;
        let config = serde_json::to_string(&self.config).map_err(|e| Error::Format(e.to_string()))?;
        write_body(&mut w, &self.bank, &self.stats, &self.admm, &config)?;
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let mut meta = read_header(&mut r)?;
        if meta.kind != ModelKind::Scsc {
            return Err(Error::Format("container holds a shared-dictionary model".into()));
        }
        let body = read_body(&mut r, &mut meta)?;
        let config: ScscConfig =
            serde_json::from_str(&body.config_json).map_err(|e| Error::Format(e.to_string()))?;
        if config.r != meta.filters || config.k != meta.k || Some(config.tag) != meta.tag || config.beta != meta.beta {
            return Err(Error::Format("configuration disagrees with the header".into()));
        }
        Ok(ScscModel {
            bank: body.bank,
            stats: body.stats,
            admm: body.admm,
            config,
            seed: meta.seed,
        })
    }

    /// Write `path` and a JSON sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        write_sidecar(path, &self.metadata())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

impl OcscModel {
    pub fn metadata(&self) -> ModelMetadata {
        ModelMetadata {
            kind: ModelKind::Ocsc,
            version: FORMAT_VERSION,
            filters: self.config.k,
            k: self.config.k,
            filter_extents: self.support().extents().to_vec(),
            padded_extents: self.support().padded_extents().to_vec(),
            tag: None,
            beta: self.config.beta,
            seed: self.seed,
            samples_seen: self.stats.count(),
            has_stats: true,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer(Vec::new());
        write_header(&mut w, &self.metadata())?;
        let config = serde_json::to_string(&self.config).map_err(|e| Error::Format(e.to_string()))?;
        write_body(&mut w, &self.dict, &self.stats, &self.admm, &config)?;
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let mut meta = read_header(&mut r)?;
        if meta.kind != ModelKind::Ocsc {
            return Err(Error::Format("container holds a sample-dependent model".into()));
        }
        let body = read_body(&mut r, &mut meta)?;
        let config: OcscConfig =
            serde_json::from_str(&body.config_json).map_err(|e| Error::Format(e.to_string()))?;
        if config.k != meta.filters || config.beta != meta.beta {
            return Err(Error::Format("configuration disagrees with the header".into()));
        }
        Ok(OcscModel {
            dict: body.bank,
            stats: body.stats,
            admm: body.admm,
            config,
            seed: meta.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        write_sidecar(path, &self.metadata())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Path of the JSON sidecar for a model file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    path.with_file_name(name)
}

fn write_sidecar(path: &Path, meta: &ModelMetadata) -> Result<()> {
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

/// Header of a model file, without decoding the payload.
pub fn read_metadata(bytes: &[u8]) -> Result<ModelMetadata> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let mut meta = read_header(&mut r)?;
    let p: usize = meta.padded_extents.iter().product();
    r.take(meta.filters * p * 16)?;
    meta.has_stats = r.u8()? == 1;
    Ok(meta)
}
