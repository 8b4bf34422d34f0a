//! Calibrated area–weight samples: CSV ingestion, deterministic
//! train/validation splitting, and mask-derived sample construction.
//!
//! Two CSV schemas are accepted (header row required, UTF-8, `.` decimals,
//! LF or CRLF):
//!
//! * schema A: `id,area_cm2,weight_g[,cohort]`
//! * schema B: `id,mask_path,weight_g,mm_per_pixel[,cohort]` — areas are
//!   computed from the referenced mask files on load; relative paths
//!   resolve against the CSV's directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{self, mask_area, ImagingError, MaskImage};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error at {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: header {header:?} does not match schema {schema}")]
    BadHeader {
        path: PathBuf,
        header: Vec<String>,
        schema: &'static str,
    },
    #[error("{path} line {line}: missing column {column}")]
    MissingColumn {
        path: PathBuf,
        line: u64,
        column: &'static str,
    },
    #[error("{path} line {line}: non-numeric {column} value {value:?}")]
    NonNumeric {
        path: PathBuf,
        line: u64,
        column: &'static str,
        value: String,
    },
    #[error("{path} line {line}: weight must be positive, got {value}")]
    NonPositiveWeight {
        path: PathBuf,
        line: u64,
        value: f64,
    },
    #[error("{path} line {line}: area must be non-negative, got {value}")]
    NegativeArea {
        path: PathBuf,
        line: u64,
        value: f64,
    },
    #[error("{path}: duplicate id {id:?} on lines {first_line} and {second_line}")]
    DuplicateId {
        path: PathBuf,
        id: String,
        first_line: u64,
        second_line: u64,
    },
    #[error("duplicate id {id:?} in samples {first_index} and {second_index}")]
    DuplicateIdInMemory {
        id: String,
        first_index: usize,
        second_index: usize,
    },
    #[error("sample {id:?}: weight must be positive, got {value}")]
    BadWeight { id: String, value: f64 },
    #[error("sample {id:?}: area must be non-negative and finite, got {value}")]
    BadArea { id: String, value: f64 },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("dataset {name:?} has {len} samples; splitting needs at least one per side")]
    TooSmallToSplit { name: String, len: usize },
    #[error("mask error for sample {id:?}: {source}")]
    Mask {
        id: String,
        #[source]
        source: ImagingError,
    },
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// One calibrated area–weight observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    /// Fish silhouette area in cm². Zero means the mask was empty; such
    /// samples are kept so outlier reporting can surface them, but every
    /// fit rejects them.
    pub area_cm2: f64,
    /// Measured mass in grams.
    pub weight_g: f64,
    pub cohort: Option<String>,
}

impl Sample {
    pub fn new(id: impl Into<String>, area_cm2: f64, weight_g: f64) -> Self {
        Self {
            id: id.into(),
            area_cm2,
            weight_g,
            cohort: None,
        }
    }

    /// Flag for samples whose mask contained no foreground.
    pub fn is_zero_area(&self) -> bool {
        self.area_cm2 == 0.0
    }
}

/// Ordered, id-unique collection of samples. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (index, sample) in samples.iter().enumerate() {
            if sample.weight_g <= 0.0 || !sample.weight_g.is_finite() {
                return Err(DatasetError::BadWeight {
                    id: sample.id.clone(),
                    value: sample.weight_g,
                });
            }
            if sample.area_cm2 < 0.0 || !sample.area_cm2.is_finite() {
                return Err(DatasetError::BadArea {
                    id: sample.id.clone(),
                    value: sample.area_cm2,
                });
            }
            if let Some(&first_index) = seen.get(sample.id.as_str()) {
                return Err(DatasetError::DuplicateIdInMemory {
                    id: sample.id.clone(),
                    first_index,
                    second_index: index,
                });
            }
            seen.insert(&sample.id, index);
        }
        Ok(Self {
            name: name.into(),
            samples,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    pub fn areas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.area_cm2).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.weight_g).collect()
    }
}

/// Outcome of a deterministic train/validation split.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub train: Dataset,
    pub validation: Dataset,
    pub seed: u64,
}

/// CSV schema selector for [`load_samples`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleSchema {
    /// Schema A: `id,area_cm2,weight_g[,cohort]`.
    AreaWeight,
    /// Schema B: `id,mask_path,weight_g,mm_per_pixel[,cohort]`.
    MaskPath,
}

fn schema_a_header(header: &csv::StringRecord) -> bool {
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    cols.len() >= 3
        && cols[0] == "id"
        && cols[1] == "area_cm2"
        && cols[2] == "weight_g"
        && (cols.len() == 3 || (cols.len() == 4 && cols[3] == "cohort"))
}

fn schema_b_header(header: &csv::StringRecord) -> bool {
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    cols.len() >= 4
        && cols[0] == "id"
        && cols[1] == "mask_path"
        && cols[2] == "weight_g"
        && cols[3] == "mm_per_pixel"
        && (cols.len() == 4 || (cols.len() == 5 && cols[4] == "cohort"))
}

struct RowCursor<'a> {
    path: &'a Path,
    line: u64,
    record: &'a csv::StringRecord,
}

impl<'a> RowCursor<'a> {
    fn field(&self, index: usize, column: &'static str) -> Result<&'a str> {
        self.record
            .get(index)
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .ok_or(DatasetError::MissingColumn {
                path: self.path.to_path_buf(),
                line: self.line,
                column,
            })
    }

    fn numeric(&self, index: usize, column: &'static str) -> Result<f64> {
        let raw = self.field(index, column)?;
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| DatasetError::NonNumeric {
                path: self.path.to_path_buf(),
                line: self.line,
                column,
                value: raw.to_string(),
            })
    }

    fn optional(&self, index: usize) -> Option<String> {
        self.record
            .get(index)
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(str::to_string)
    }
}

/// Load samples from CSV under the declared schema.
///
/// Every malformed row is reported with its 1-based file line number; a
/// duplicate id names both offending lines. Row order is preserved.
pub fn load_samples(path: impl AsRef<Path>, schema: SampleSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|source| DatasetError::Csv {
            path: path.to_path_buf(),
            source,
        })?;

    let header = reader
        .headers()
        .map_err(|source| DatasetError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let header_ok = match schema {
        SampleSchema::AreaWeight => schema_a_header(&header),
        SampleSchema::MaskPath => schema_b_header(&header),
    };
    if !header_ok {
        return Err(DatasetError::BadHeader {
            path: path.to_path_buf(),
            header: header.iter().map(str::to_string).collect(),
            schema: match schema {
                SampleSchema::AreaWeight => "id,area_cm2,weight_g[,cohort]",
                SampleSchema::MaskPath => "id,mask_path,weight_g,mm_per_pixel[,cohort]",
            },
        });
    }

    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut samples = Vec::new();
    let mut lines_by_id: HashMap<String, u64> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|source| DatasetError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = RowCursor {
            path,
            line,
            record: &record,
        };

        let id = row.field(0, "id")?.to_string();
        if let Some(&first_line) = lines_by_id.get(&id) {
            return Err(DatasetError::DuplicateId {
                path: path.to_path_buf(),
                id,
                first_line,
                second_line: line,
            });
        }
        lines_by_id.insert(id.clone(), line);

        let sample = match schema {
            SampleSchema::AreaWeight => {
                let area = row.numeric(1, "area_cm2")?;
                let weight = row.numeric(2, "weight_g")?;
                if weight <= 0.0 {
                    return Err(DatasetError::NonPositiveWeight {
                        path: path.to_path_buf(),
                        line,
                        value: weight,
                    });
                }
                if area < 0.0 {
                    return Err(DatasetError::NegativeArea {
                        path: path.to_path_buf(),
                        line,
                        value: area,
                    });
                }
                Sample {
                    id,
                    area_cm2: area,
                    weight_g: weight,
                    cohort: row.optional(3),
                }
            }
            SampleSchema::MaskPath => {
                let mask_rel = row.field(1, "mask_path")?;
                let weight = row.numeric(2, "weight_g")?;
                let mm_per_pixel = row.numeric(3, "mm_per_pixel")?;
                if weight <= 0.0 {
                    return Err(DatasetError::NonPositiveWeight {
                        path: path.to_path_buf(),
                        line,
                        value: weight,
                    });
                }
                let mask_path = base_dir.join(mask_rel);
                let mask = imaging::io::read_mask(&mask_path, mm_per_pixel).map_err(|source| {
                    DatasetError::Mask {
                        id: id.clone(),
                        source,
                    }
                })?;
                Sample {
                    id,
                    area_cm2: mask_area(&mask),
                    weight_g: weight,
                    cohort: row.optional(4),
                }
            }
        };
        samples.push(sample);
    }

    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    Dataset::new(name, samples)
}

/// Write a dataset as schema-A CSV. Loading the file back yields
/// field-equal samples (empty cohort round-trips as absent).
pub fn save_samples(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|source| DatasetError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    writer
        .write_record(["id", "area_cm2", "weight_g", "cohort"])
        .map_err(|source| DatasetError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    for sample in dataset.iter() {
        writer
            .write_record([
                sample.id.as_str(),
                &format_float(sample.area_cm2),
                &format_float(sample.weight_g),
                sample.cohort.as_deref().unwrap_or(""),
            ])
            .map_err(|source| DatasetError::Csv {
                path: path.to_path_buf(),
                source,
            })?;
    }
    writer.flush().map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Shortest decimal form that round-trips through f64.
pub(crate) fn format_float(value: f64) -> String {
    format!("{value}")
}

/// Deterministic random split: a seeded permutation is drawn and the first
/// `round(train_fraction · n)` samples become the training side.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<SplitResult> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(train_fraction));
    }
    let n = dataset.len();
    // round-half-up keeps the boundary deterministic across platforms
    let n_train = (train_fraction * n as f64 + 0.5).floor() as usize;
    if n < 2 || n_train == 0 || n_train == n {
        return Err(DatasetError::TooSmallToSplit {
            name: dataset.name.clone(),
            len: n,
        });
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let pick = |idx: &[usize]| -> Vec<Sample> {
        idx.iter().map(|&i| dataset.samples[i].clone()).collect()
    };
    let train = Dataset::new(format!("{}-train", dataset.name), pick(&indices[..n_train]))
        .expect("subset of a valid dataset is valid");
    let validation = Dataset::new(format!("{}-val", dataset.name), pick(&indices[n_train..]))
        .expect("subset of a valid dataset is valid");
    Ok(SplitResult {
        train,
        validation,
        seed,
    })
}

/// Build samples from calibrated masks; the area of each mask comes from
/// [`mask_area`]. Empty masks yield zero-area samples rather than errors.
pub fn samples_from_masks(masks: &[(MaskImage, f64, String)]) -> Result<Dataset> {
    let samples = masks
        .iter()
        .map(|(mask, weight_g, id)| Sample {
            id: id.clone(),
            area_cm2: mask_area(mask),
            weight_g: *weight_g,
            cohort: None,
        })
        .collect();
    Dataset::new("from-masks", samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    fn sample_dataset(n: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| Sample::new(format!("f{i:03}"), 100.0 + i as f64, 150.0 + i as f64))
            .collect();
        Dataset::new("test", samples).unwrap()
    }

    #[test]
    fn load_schema_a_preserves_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            &dir,
            "a.csv",
            "id,area_cm2,weight_g\nf1,100,170\nf2,200,480\nf3,300,880\n",
        );
        let ds = load_samples(&path, SampleSchema::AreaWeight).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.areas(), vec![100.0, 200.0, 300.0]);
        assert_eq!(ds.samples()[0].id, "f1");
        assert_eq!(ds.samples()[2].weight_g, 880.0);
    }

    #[test]
    fn load_accepts_crlf_and_cohort() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            &dir,
            "a.csv",
            "id,area_cm2,weight_g,cohort\r\nf1,100,170,site-a\r\nf2,200,480,\r\n",
        );
        let ds = load_samples(&path, SampleSchema::AreaWeight).unwrap();
        assert_eq!(ds.samples()[0].cohort.as_deref(), Some("site-a"));
        assert_eq!(ds.samples()[1].cohort, None);
    }

    #[test]
    fn load_rejects_negative_weight_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            &dir,
            "a.csv",
            "id,area_cm2,weight_g\nf1,100,170\nf2,200,-5\n",
        );
        let err = load_samples(&path, SampleSchema::AreaWeight).unwrap_err();
        match err {
            DatasetError::NonPositiveWeight { line, value, .. } => {
                assert_eq!(line, 3);
                assert_eq!(value, -5.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_rejects_duplicate_id_citing_both_lines() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("id,area_cm2,weight_g\n");
        for i in 0..6 {
            let id = if i == 0 || i == 5 {
                "f001".to_string()
            } else {
                format!("g{i}")
            };
            body.push_str(&format!("{id},100,170\n"));
        }
        let path = write_csv(&dir, "a.csv", &body);
        let err = load_samples(&path, SampleSchema::AreaWeight).unwrap_err();
        match err {
            DatasetError::DuplicateId {
                id,
                first_line,
                second_line,
                ..
            } => {
                assert_eq!(id, "f001");
                assert_eq!(first_line, 2);
                assert_eq!(second_line, 7);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_rejects_non_numeric_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "a.csv", "id,area_cm2,weight_g\nf1,wide,170\n");
        let err = load_samples(&path, SampleSchema::AreaWeight).unwrap_err();
        match err {
            DatasetError::NonNumeric {
                line,
                column,
                value,
                ..
            } => {
                assert_eq!(line, 2);
                assert_eq!(column, "area_cm2");
                assert_eq!(value, "wide");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_rejects_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "a.csv", "id,area_cm2,weight_g\nf1,100\n");
        let err = load_samples(&path, SampleSchema::AreaWeight).unwrap_err();
        assert!(matches!(err, DatasetError::MissingColumn { line: 2, .. }));
    }

    #[test]
    fn load_rejects_wrong_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "a.csv", "id,area,weight\nf1,100,170\n");
        assert!(matches!(
            load_samples(&path, SampleSchema::AreaWeight),
            Err(DatasetError::BadHeader { .. })
        ));
    }

    #[test]
    fn schema_b_computes_areas_from_masks() {
        let dir = tempfile::tempdir().unwrap();
        let mask = MaskImage::filled(100, 100, 1.0, true).unwrap();
        imaging::io::write_mask(dir.path().join("full.pgm"), &mask).unwrap();
        let path = write_csv(
            &dir,
            "b.csv",
            "id,mask_path,weight_g,mm_per_pixel\nf1,full.pgm,170,1.0\n",
        );
        let ds = load_samples(&path, SampleSchema::MaskPath).unwrap();
        assert_eq!(ds.samples()[0].area_cm2, 100.0);
        assert_eq!(ds.samples()[0].weight_g, 170.0);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = sample_dataset(5);
        ds.samples[2].cohort = Some("site-b".to_string());
        ds.samples[4].area_cm2 = 123.456789;
        let path = dir.path().join("out.csv");
        save_samples(&ds, &path).unwrap();
        let back = load_samples(&path, SampleSchema::AreaWeight).unwrap();
        assert_eq!(back.samples(), ds.samples());
    }

    #[test]
    fn split_80_20() {
        let ds = sample_dataset(10);
        let result = split(&ds, 0.8, 42).unwrap();
        assert_eq!(result.train.len(), 8);
        assert_eq!(result.validation.len(), 2);
    }

    #[test]
    fn split_is_deterministic() {
        let ds = sample_dataset(25);
        let a = split(&ds, 0.8, 7).unwrap();
        let b = split(&ds, 0.8, 7).unwrap();
        assert_eq!(a.train.samples(), b.train.samples());
        assert_eq!(a.validation.samples(), b.validation.samples());
    }

    #[test]
    fn split_1072_gives_858_train() {
        let ds = sample_dataset(1072);
        let result = split(&ds, 0.8, 1).unwrap();
        assert_eq!(result.train.len(), 858);
        assert_eq!(result.validation.len(), 214);
    }

    #[test]
    fn split_partition_is_exact() {
        let ds = sample_dataset(17);
        let result = split(&ds, 0.6, 3).unwrap();
        let mut ids: Vec<&str> = result
            .train
            .iter()
            .chain(result.validation.iter())
            .map(|s| s.id.as_str())
            .collect();
        ids.sort_unstable();
        let mut expected: Vec<&str> = ds.iter().map(|s| s.id.as_str()).collect();
        expected.sort_unstable();
        assert_eq!(ids, expected);
    }

    #[test]
    fn split_seeds_differ() {
        let ds = sample_dataset(10);
        let base = split(&ds, 0.8, 0).unwrap();
        let differing = (1..=100u64).any(|seed| {
            let other = split(&ds, 0.8, seed).unwrap();
            other.train.samples() != base.train.samples()
        });
        assert!(differing, "100 seeds produced identical partitions");
    }

    #[test]
    fn split_rejects_degenerate_sizes() {
        let ds = sample_dataset(1);
        assert!(matches!(
            split(&ds, 0.8, 0),
            Err(DatasetError::TooSmallToSplit { .. })
        ));
        let ds = sample_dataset(3);
        assert!(split(&ds, 0.99, 0).is_err());
        assert!(split(&ds, 1.0, 0).is_err());
        assert!(split(&ds, 0.0, 0).is_err());
    }

    #[test]
    fn samples_from_masks_converts_units() {
        let full = MaskImage::filled(100, 100, 1.0, true).unwrap();
        let half = MaskImage::from_fn(200, 100, 1.0, |x, _| x < 100).unwrap();
        let empty = MaskImage::filled(10, 10, 1.0, false).unwrap();
        let ds = samples_from_masks(&[
            (full, 170.0, "a".to_string()),
            (half, 170.0, "b".to_string()),
            (empty, 90.0, "c".to_string()),
        ])
        .unwrap();
        assert_eq!(ds.areas(), vec![100.0, 100.0, 0.0]);
        assert!(!ds.samples()[0].is_zero_area());
        assert!(ds.samples()[2].is_zero_area());
    }

    #[test]
    fn samples_from_masks_linear_in_pixel_count() {
        let m1 = MaskImage::from_fn(200, 100, 1.0, |x, _| x < 50).unwrap();
        let m2 = MaskImage::from_fn(200, 100, 1.0, |x, _| x < 100).unwrap();
        let ds = samples_from_masks(&[(m1, 100.0, "a".to_string()), (m2, 200.0, "b".to_string())])
            .unwrap();
        assert_eq!(ds.areas(), vec![50.0, 100.0]);
    }

    #[test]
    fn dataset_rejects_duplicates_and_bad_values() {
        let dup = vec![Sample::new("x", 1.0, 1.0), Sample::new("x", 2.0, 2.0)];
        assert!(matches!(
            Dataset::new("d", dup),
            Err(DatasetError::DuplicateIdInMemory { .. })
        ));
        assert!(Dataset::new("d", vec![Sample::new("x", 1.0, 0.0)]).is_err());
        assert!(Dataset::new("d", vec![Sample::new("x", -1.0, 1.0)]).is_err());
        assert!(Dataset::new("d", vec![Sample::new("x", 0.0, 1.0)]).is_ok());
    }
}
