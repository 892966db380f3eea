//! On-disk example repository: `records.jsonl` holds one JSON object per
//! record, `tensors.blob` holds images and signatures as little-endian f32
//! referenced by element offset, and `manifest.json` records counts, seeds
//! and the committed lengths of both files.
//!
//! Readers only consider the prefix committed in the manifest, so a
//! partially written append is never observed.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sigdetect_core::attacks::GenerationStats;
use sigdetect_core::explainer::XaiSignature;
use sigdetect_core::records::{count_records, AttackMeta, ExampleRecord, Split};
use sigdetect_core::Tensor;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const BLOB_MAGIC: &[u8; 8] = b"SGDBLOB\0";
const BLOB_HEADER: u64 = 12;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const BLOB_FILE: &str = "tensors.blob";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub record_count: usize,
    /// Committed byte lengths of the record and blob files.
    pub records_len: u64,
    pub blob_len: u64,
    /// Counts keyed `split/normal` and `split/adversarial/method/metric`.
    pub counts: BTreeMap<String, usize>,
    pub seeds: BTreeMap<String, u64>,
    pub model_sha256: String,
    /// Train-split indices of the explainer background samples.
    pub background_indices: Vec<usize>,
    pub signed: bool,
    /// Generator statistics per split.
    pub generation: BTreeMap<String, GenerationStats>,
}

/// Location of a tensor inside the blob file, in f32 elements after the header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BlobRef {
    offset: u64,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SignatureRef {
    neurons: usize,
    classes: usize,
    offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RecordLine {
    id: String,
    split: Split,
    adversarial: u8,
    true_label: usize,
    predicted_label: usize,
    source_index: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    attack: Option<AttackMeta>,
    image: BlobRef,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    signature: Option<SignatureRef>,
}

#[derive(Debug)]
pub struct Repository {
    dir: PathBuf,
    manifest: Manifest,
}

impl Repository {
    /// Creates an empty repository in `dir`, replacing any existing one.
    pub fn create(dir: &Path, manifest: Manifest) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let mut blob = File::create(dir.join(BLOB_FILE)).map_err(Error::io(dir.join(BLOB_FILE)))?;
        blob.write_all(BLOB_MAGIC)
            .and_then(|_| blob.write_all(&FORMAT_VERSION.to_le_bytes()))
            .map_err(Error::io(dir.join(BLOB_FILE)))?;
        File::create(dir.join(RECORDS_FILE)).map_err(Error::io(dir.join(RECORDS_FILE)))?;
        let repo = Repository {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                format_version: FORMAT_VERSION,
                record_count: 0,
                records_len: 0,
                blob_len: BLOB_HEADER,
                counts: BTreeMap::new(),
                ..manifest
            },
        };
        repo.write_manifest()?;
        Ok(repo)
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(Error::io(&path))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Corrupt {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                path,
                found: manifest.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let repo = Repository {
            dir: dir.to_path_buf(),
            manifest,
        };
        repo.check_blob_header()?;
        Ok(repo)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn manifest_mut(&mut self) -> &mut Manifest {
        &mut self.manifest
    }

    pub fn write_manifest(&self) -> Result<()> {
        let path = self.dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(Error::io(path))
    }

    fn check_blob_header(&self) -> Result<()> {
        let path = self.dir.join(BLOB_FILE);
        let mut head = [0u8; BLOB_HEADER as usize];
        File::open(&path)
            .and_then(|mut f| f.read_exact(&mut head))
            .map_err(Error::io(&path))?;
        if &head[..8] != BLOB_MAGIC {
            return Err(Error::Corrupt {
                path,
                detail: "bad blob magic".into(),
            });
        }
        let version = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                path,
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(())
    }

    /// Appends `records` and commits the new lengths and counts.
    pub fn append(&mut self, records: &[ExampleRecord]) -> Result<()> {
        let rpath = self.dir.join(RECORDS_FILE);
        let bpath = self.dir.join(BLOB_FILE);
        let mut lines = Vec::new();
        let mut blob = Vec::new();
        let mut offset = (self.manifest.blob_len - BLOB_HEADER) / 4;
        let mut push = |values: &[f32]| {
            let at = offset;
            for v in values {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            offset += values.len() as u64;
            at
        };
        for r in records {
            r.validate()?;
            let line = RecordLine {
                id: r.id.clone(),
                split: r.split,
                adversarial: r.label(),
                true_label: r.true_label,
                predicted_label: r.predicted_label,
                source_index: r.source_index,
                attack: r.attack.clone(),
                image: BlobRef {
                    offset: push(r.image.data()),
                    shape: r.image.shape().to_vec(),
                },
                signature: r.signature.as_ref().map(|s| SignatureRef {
                    neurons: s.neurons,
                    classes: s.classes,
                    offset: push(&s.values),
                }),
            };
            serde_json::to_writer(&mut lines, &line).expect("record serializes");
            lines.push(b'\n');
        }
        append_at(&bpath, self.manifest.blob_len, &blob)?;
        append_at(&rpath, self.manifest.records_len, &lines)?;
        self.manifest.blob_len += blob.len() as u64;
        self.manifest.records_len += lines.len() as u64;
        self.manifest.record_count += records.len();
        let mut counts = std::mem::take(&mut self.manifest.counts);
        for (k, v) in count_records(records) {
            *counts.entry(k).or_insert(0) += v;
        }
        self.manifest.counts = counts;
        self.write_manifest()
    }

    /// Replaces every record (used after signing).
    pub fn rewrite(&mut self, records: &[ExampleRecord]) -> Result<()> {
        let manifest = self.manifest.clone();
        *self = Repository::create(&self.dir, manifest)?;
        self.append(records)
    }

    /// Reads every committed record.
    pub fn load_all(&self) -> Result<Vec<ExampleRecord>> {
        self.check_blob_header()?;
        let rpath = self.dir.join(RECORDS_FILE);
        let bpath = self.dir.join(BLOB_FILE);
        let mut blob = Vec::new();
        File::open(&bpath)
            .and_then(|f| f.take(self.manifest.blob_len).read_to_end(&mut blob))
            .map_err(Error::io(&bpath))?;
        if (blob.len() as u64) < self.manifest.blob_len {
            return Err(Error::Corrupt {
                path: bpath,
                detail: format!("{} bytes, manifest commits {}", blob.len(), self.manifest.blob_len),
            });
        }
        let values = &blob[BLOB_HEADER as usize..];
        let elements = values.len() / 4;
        let read = |offset: u64, n: usize, line: usize| -> Result<Vec<f32>> {
            let start = offset as usize;
            if start.checked_add(n).map_or(true, |end| end > elements) {
                return Err(Error::Record {
                    path: rpath.clone(),
                    line,
                    detail: format!("tensor offset {offset}+{n} outside the blob ({elements} values)"),
                });
            }
            Ok(values[4 * start..4 * (start + n)]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect())
        };
        let file = File::open(&rpath).map_err(Error::io(&rpath))?;
        let reader = BufReader::new(file.take(self.manifest.records_len));
        let mut out = Vec::with_capacity(self.manifest.record_count);
        for (k, line) in reader.lines().enumerate() {
            let lineno = k + 1;
            let line = line.map_err(Error::io(&rpath))?;
            let rec: RecordLine = serde_json::from_str(&line).map_err(|e| Error::Record {
                path: rpath.clone(),
                line: lineno,
                detail: e.to_string(),
            })?;
            let bad = |detail: String| Error::Record {
                path: rpath.clone(),
                line: lineno,
                detail,
            };
            let n: usize = rec.image.shape.iter().product();
            let image = Tensor::new(rec.image.shape.clone(), read(rec.image.offset, n, lineno)?)
                .map_err(|e| bad(e.to_string()))?;
            let signature = match rec.signature {
                Some(s) => Some(XaiSignature {
                    neurons: s.neurons,
                    classes: s.classes,
                    values: read(s.offset, s.neurons * s.classes, lineno)?,
                }),
                None => None,
            };
            if (rec.adversarial == 1) != rec.attack.is_some() {
                return Err(bad("adversarial flag disagrees with attack metadata".into()));
            }
            let record = ExampleRecord {
                id: rec.id,
                split: rec.split,
                image,
                true_label: rec.true_label,
                predicted_label: rec.predicted_label,
                source_index: rec.source_index,
                attack: rec.attack,
                signature,
            };
            record.validate().map_err(|e| bad(e.to_string()))?;
            out.push(record);
        }
        if out.len() != self.manifest.record_count {
            return Err(Error::Corrupt {
                path: rpath,
                detail: format!("{} records, manifest commits {}", out.len(), self.manifest.record_count),
            });
        }
        Ok(out)
    }
}

/// Writes `bytes` at `at`, dropping anything past the committed length first.
fn append_at(path: &Path, at: u64, bytes: &[u8]) -> Result<()> {
    let mut f = OpenOptions::new().write(true).open(path).map_err(Error::io(path))?;
    f.set_len(at)
        .and_then(|_| f.seek(SeekFrom::Start(at)))
        .and_then(|_| f.write_all(bytes))
        .and_then(|_| f.flush())
        .map_err(Error::io(path))
}
