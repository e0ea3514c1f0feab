//! CSV and JSON persistence, and the hashed run manifest.
//!
//! Data files use fixed headers with units in the column names:
//!
//! * Rabi scans: `tau_us,probability,shots`
//! * spectra: `detuning_MHz,probability,shots`

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lineshape::SpectrumDataset;
use crate::sideband::RabiDataset;
use crate::units::{mhz_to_rad_s, rad_s_to_mhz, s_to_us, us_to_s};

pub const RABI_HEADER: [&str; 3] = ["tau_us", "probability", "shots"];
pub const SPECTRUM_HEADER: [&str; 3] = ["detuning_MHz", "probability", "shots"];

/// Writes a header and rows; floats should already be formatted.
pub fn write_table<P, I>(path: P, header: &[&str], rows: I) -> Result<()>
where
    P: AsRef<Path>,
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn open_reader(path: &Path, header: &[&str; 3]) -> Result<csv::Reader<fs::File>> {
    if !path.is_file() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let h = r.headers()?;
    if h.iter().ne(header.iter().copied()) {
        return Err(Error::Config(format!(
            "{}: expected header {}, found {}",
            path.display(),
            header.join(","),
            h.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(r)
}

fn read_triples(path: &Path, header: &[&str; 3]) -> Result<(Vec<f64>, Vec<f64>, Vec<u32>)> {
    let mut r = open_reader(path, header)?;
    let (mut x, mut p, mut n) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.deserialize() {
        let (a, b, c): (f64, f64, u32) = rec?;
        x.push(a);
        p.push(b);
        n.push(c);
    }
    Ok((x, p, n))
}

fn triples<'a>(x: impl Iterator<Item = f64> + 'a, p: &'a [f64], n: &'a [u32]) -> impl Iterator<Item = Vec<String>> + 'a {
    x.zip(p).zip(n).map(|((x, p), n)| vec![x.to_string(), p.to_string(), n.to_string()])
}

pub fn write_rabi_csv(path: impl AsRef<Path>, d: &RabiDataset) -> Result<()> {
    write_table(path, &RABI_HEADER, triples(d.taus.iter().map(|&t| s_to_us(t)), &d.probs, &d.shots))
}

pub fn read_rabi_csv(path: impl AsRef<Path>) -> Result<RabiDataset> {
    let (t, p, n) = read_triples(path.as_ref(), &RABI_HEADER)?;
    RabiDataset::new(t.into_iter().map(us_to_s).collect(), p, n)
}

pub fn write_spectrum_csv(path: impl AsRef<Path>, d: &SpectrumDataset) -> Result<()> {
    write_table(
        path,
        &SPECTRUM_HEADER,
        triples(d.detunings.iter().map(|&w| rad_s_to_mhz(w)), &d.probs, &d.shots),
    )
}

pub fn read_spectrum_csv(path: impl AsRef<Path>) -> Result<SpectrumDataset> {
    let (x, p, n) = read_triples(path.as_ref(), &SPECTRUM_HEADER)?;
    SpectrumDataset::new(x.into_iter().map(mhz_to_rad_s).collect(), p, n)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the run directory, with `/` separators.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Content listing of a run directory. Holds no timestamps, so identical runs give identical
/// manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub version: String,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// A run directory that remembers every file written through it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(OutputDir { root, files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Absolute path for `rel`, creating parent directories and recording the file.
    pub fn path(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        if !self.files.iter().any(|f| f == rel) {
            self.files.push(rel.to_string());
        }
        Ok(p)
    }

    pub fn rabi(&mut self, rel: &str, d: &RabiDataset) -> Result<()> {
        write_rabi_csv(self.path(rel)?, d)
    }

    pub fn spectrum(&mut self, rel: &str, d: &SpectrumDataset) -> Result<()> {
        write_spectrum_csv(self.path(rel)?, d)
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        write_json(self.path(rel)?, value)
    }

    pub fn table<I>(&mut self, rel: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        write_table(self.path(rel)?, header, rows)
    }

    /// Hashes every recorded file and writes the manifest.
    pub fn finish(&self, name: &str, seed: u64, failed_stage: Option<&str>) -> Result<Manifest> {
        let mut files = Vec::with_capacity(self.files.len());
        let mut rels = self.files.clone();
        rels.sort();
        for rel in rels {
            let p = self.root.join(&rel);
            if !p.is_file() {
                continue;
            }
            files.push(ManifestEntry {
                sha256: sha256_file(&p)?,
                bytes: fs::metadata(&p)?.len(),
                path: rel,
            });
        }
        let m = Manifest {
            name: name.to_string(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            complete: failed_stage.is_none(),
            failed_stage: failed_stage.map(str::to_string),
            files,
        };
        write_json(self.root.join(MANIFEST_FILE), &m)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rabi_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = RabiDataset::new(vec![1e-6, 2.5e-6, 1e-5], vec![0.0, 0.31, 1.0], vec![100, 100, 50]).unwrap();
        let p = dir.path().join("r.csv");
        write_rabi_csv(&p, &d).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("tau_us,probability,shots\n"));
        let back = read_rabi_csv(&p).unwrap();
        assert_eq!(back.probs, d.probs);
        for (a, b) in back.taus.iter().zip(&d.taus) {
            assert!((a / b - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn spectrum_csv_checks_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "x,y,z\n1,0.5,10\n").unwrap();
        assert!(matches!(read_spectrum_csv(&p), Err(Error::Config(_))));
        assert!(matches!(read_spectrum_csv(dir.path().join("none.csv")), Err(Error::MissingInput(_))));
    }

    #[test]
    fn manifest_lists_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path().join("run")).unwrap();
        out.json("b/x.json", &vec![1, 2, 3]).unwrap();
        out.table("a.csv", &["h"], vec![vec!["1".to_string()]]).unwrap();
        let m = out.finish("t", 7, None).unwrap();
        assert_eq!(m.files.len(), 2);
        assert_eq!(m.files[0].path, "a.csv");
        assert_eq!(m.files[0].sha256, hex::encode(Sha256::digest(b"h\n1\n")));
        assert!(m.complete);
    }
}
