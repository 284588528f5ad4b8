use std::collections::BTreeMap;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageFormat, Luma, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::sample::{ReferringExpr, Sample, Segment};
use crate::encoders::Vocabulary;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const GRAMMAR_ID: &str = "shapes-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub samples: usize,
    pub segments: usize,
    pub referring: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub counts: Counts,
    pub seed: u64,
    pub canvas: usize,
    pub vocabulary: BTreeMap<String, u32>,
    pub grammar: String,
    /// Relative file path to lowercase hex SHA-256.
    pub checksums: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AnnotationRecord {
    index: usize,
    segments: Vec<Segment>,
    caption: String,
    referring: Vec<ReferringExpr>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn image_name(i: usize) -> String {
    format!("images/{i:06}.png")
}

fn panoptic_name(i: usize) -> String {
    format!("panoptic/{i:06}.png")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn encode_png<F>(write: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Cursor<Vec<u8>>) -> image::ImageResult<()>,
{
    let mut buf = Cursor::new(Vec::new());
    write(&mut buf)?;
    Ok(buf.into_inner())
}

/// Write `samples` under `dir` (created if missing) and return the manifest.
pub fn write_dataset(dir: &Path, samples: &[Sample], seed: u64) -> Result<Manifest> {
    for sub in ["images", "panoptic"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut checksums = BTreeMap::new();
    let mut annotations = String::new();
    let canvas = samples.first().map(|s| s.height).unwrap_or(0);
    for (i, s) in samples.iter().enumerate() {
        s.validate()?;
        let rgb = RgbImage::from_raw(s.width as u32, s.height as u32, s.rgb.clone())
            .ok_or_else(|| Error::input("rgb buffer size mismatch"))?;
        let bytes = encode_png(|c| rgb.write_to(c, ImageFormat::Png))?;
        checksums.insert(image_name(i), sha256_hex(&bytes));
        write_file(&dir.join(image_name(i)), &bytes)?;

        let ids: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(s.width as u32, s.height as u32, s.segment_map.clone())
                .ok_or_else(|| Error::input("segment map size mismatch"))?;
        let bytes = encode_png(|c| ids.write_to(c, ImageFormat::Png))?;
        checksums.insert(panoptic_name(i), sha256_hex(&bytes));
        write_file(&dir.join(panoptic_name(i)), &bytes)?;

        let record = AnnotationRecord {
            index: i,
            segments: s.segments.clone(),
            caption: s.caption.clone(),
            referring: s.referring.clone(),
        };
        annotations.push_str(&serde_json::to_string(&record)?);
        annotations.push('\n');
    }
    checksums.insert("annotations.jsonl".into(), sha256_hex(annotations.as_bytes()));
    write_file(&dir.join("annotations.jsonl"), annotations.as_bytes())?;

    let vocab: BTreeMap<String, u32> =
        serde_json::from_str(&Vocabulary::standard().to_json())?;
    let manifest = Manifest {
        version: FORMAT_VERSION,
        counts: Counts {
            samples: samples.len(),
            segments: samples.iter().map(|s| s.segments.len()).sum(),
            referring: samples.iter().map(|s| s.referring.len()).sum(),
        },
        seed,
        canvas,
        vocabulary: vocab,
        grammar: GRAMMAR_ID.into(),
        checksums,
    };
    write_file(
        &dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(manifest)
}

/// A dataset directory opened for reading. Annotations are loaded eagerly,
/// images and segment maps on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    dir: PathBuf,
    manifest: Manifest,
    records: Vec<AnnotationRecord>,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.json");
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("manifest.json: {e}")))?;
        if manifest.version != FORMAT_VERSION {
            return Err(Error::format(format!(
                "dataset version {} is not supported (expected {FORMAT_VERSION})",
                manifest.version
            )));
        }
        let apath = dir.join("annotations.jsonl");
        let bytes = fs::read(&apath).map_err(|e| Error::io(&apath, e))?;
        check(&manifest, "annotations.jsonl", &bytes, "annotations")?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::format("annotations.jsonl is not UTF-8"))?;
        let records: Vec<AnnotationRecord> = text
            .lines()
            .enumerate()
            .map(|(i, line)| {
                serde_json::from_str(line)
                    .map_err(|e| Error::format(format!("annotations.jsonl line {}: {e}", i + 1)))
            })
            .collect::<Result<_>>()?;
        if records.len() != manifest.counts.samples
            || records.iter().enumerate().any(|(i, r)| r.index != i)
        {
            return Err(Error::format(format!(
                "manifest lists {} samples but annotations hold {}",
                manifest.counts.samples,
                records.len()
            )));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            records,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn captions(&self) -> Vec<String> {
        self.records.iter().map(|r| r.caption.clone()).collect()
    }

    pub fn sample(&self, i: usize) -> Result<Sample> {
        let record = self
            .records
            .get(i)
            .ok_or_else(|| Error::input(format!("sample index {i} out of range")))?;
        let what = |kind: &str| format!("sample {i} {kind}");

        let name = image_name(i);
        let bytes = fs::read(self.dir.join(&name)).map_err(|e| Error::io(self.dir.join(&name), e))?;
        check(&self.manifest, &name, &bytes, &what("image"))?;
        let rgb = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
            .map_err(|e| Error::format(format!("{}: {e}", what("image"))))?
            .to_rgb8();

        let name = panoptic_name(i);
        let bytes = fs::read(self.dir.join(&name)).map_err(|e| Error::io(self.dir.join(&name), e))?;
        check(&self.manifest, &name, &bytes, &what("panoptic map"))?;
        let ids = match image::load_from_memory_with_format(&bytes, ImageFormat::Png)
            .map_err(|e| Error::format(format!("{}: {e}", what("panoptic map"))))?
        {
            image::DynamicImage::ImageLuma16(buf) => buf,
            _ => {
                return Err(Error::format(format!(
                    "{} is not a 16-bit single-channel PNG",
                    what("panoptic map")
                )))
            }
        };
        if ids.dimensions() != rgb.dimensions() {
            return Err(Error::format(format!("{}: size differs from image", what("panoptic map"))));
        }
        let sample = Sample {
            height: rgb.height() as usize,
            width: rgb.width() as usize,
            rgb: rgb.into_raw(),
            segment_map: ids.into_raw(),
            segments: record.segments.clone(),
            caption: record.caption.clone(),
            referring: record.referring.clone(),
        };
        sample
            .validate()
            .map_err(|e| Error::format(format!("{}: {e}", what("annotations"))))?;
        Ok(sample)
    }

    pub fn samples(&self) -> Result<Vec<Sample>> {
        (0..self.len()).map(|i| self.sample(i)).collect()
    }
}

fn check(manifest: &Manifest, name: &str, bytes: &[u8], what: &str) -> Result<()> {
    let expected = manifest
        .checksums
        .get(name)
        .ok_or_else(|| Error::format(format!("{what}: {name} missing from manifest")))?;
    if &sha256_hex(bytes) != expected {
        return Err(Error::format(format!("{what}: checksum mismatch for {name}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DataConfig;
    use crate::data::generate_sample;

    fn corpus(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| generate_sample(i as u64, &DataConfig::default()).unwrap())
            .collect()
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let samples = corpus(4);
        let m = write_dataset(dir.path(), &samples, 9).unwrap();
        assert_eq!(m.counts.samples, 4);
        let ds = Dataset::open(dir.path()).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.samples().unwrap(), samples);
        let images = fs::read_dir(dir.path().join("images")).unwrap().count();
        assert_eq!(images, m.counts.samples);
    }

    #[test]
    fn corrupted_panoptic_names_the_sample() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &corpus(3), 0).unwrap();
        let p = dir.path().join("panoptic/000002.png");
        let mut bytes = fs::read(&p).unwrap();
        let k = bytes.len() / 2;
        bytes[k] ^= 0xff;
        fs::write(&p, bytes).unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        assert!(ds.sample(1).is_ok());
        let err = ds.sample(2).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.to_string().contains("sample 2"), "{err}");
    }

    #[test]
    fn version_mismatch_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = write_dataset(dir.path(), &corpus(1), 0).unwrap();
        m.version = 99;
        fs::write(dir.path().join("manifest.json"), serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(Dataset::open(dir.path()), Err(Error::Format(_))));
    }
}
