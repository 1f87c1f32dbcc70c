//! Manifest, binary feature file and label CSV.
//!
//! Feature binary layout: `b"CHEF"`, `u32` version (1), `u32` rows, `u32`
//! cols, then `rows * cols` little-endian `f64` in row-major order. Labels
//! are a CSV with header `id,kind,values`; class indices in files are 1-based.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, LabelState, Splits};
use crate::error::{ChefError, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"CHEF";
pub const FORMAT_VERSION: u32 = 1;
/// Tolerance on probability-vector sums read from text.
pub const LOAD_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    #[default]
    Bin,
    Csv,
}

/// Split membership: an explicit id list or a half-open range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSpec {
    Ids(Vec<usize>),
    Range { start: usize, end: usize },
}

impl SplitSpec {
    fn expand(&self) -> Vec<usize> {
        match self {
            SplitSpec::Ids(ids) => ids.clone(),
            SplitSpec::Range { start, end } => (*start..*end).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSplits {
    pub train: SplitSpec,
    pub validation: SplitSpec,
    pub test: SplitSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub features: PathBuf,
    pub labels: PathBuf,
    pub num_classes: usize,
    pub splits: ManifestSplits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    #[serde(default)]
    pub format: FeatureFormat,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| ChefError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| ChefError::io(path, e))
}

pub(crate) fn encode_header(magic: &[u8; 4], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16);
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out
}

/// Parses a 16-byte header and returns `(rows, cols)`.
pub(crate) fn decode_header(bytes: &[u8], magic: &[u8; 4]) -> Result<(usize, usize)> {
    if bytes.len() < 16 || &bytes[..4] != magic {
        return Err(ChefError::Format(format!(
            "bad magic, expected {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != FORMAT_VERSION {
        return Err(ChefError::Format(format!("unsupported version {}", word(4))));
    }
    Ok((word(8) as usize, word(12) as usize))
}

pub(crate) fn decode_f64s(bytes: &[u8], count: usize) -> Result<Vec<f64>> {
    if bytes.len() < count * 8 {
        return Err(ChefError::Format(format!(
            "truncated payload: need {} bytes, have {}",
            count * 8,
            bytes.len()
        )));
    }
    Ok(bytes[..count * 8]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_features_bin(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let bytes = read(path)?;
    let (rows, cols) = decode_header(&bytes, FEATURE_MAGIC)?;
    let values = decode_f64s(&bytes[16..], rows * cols)?;
    if bytes.len() != 16 + rows * cols * 8 {
        return Err(ChefError::Format("trailing bytes after feature payload".into()));
    }
    Ok((values, rows, cols))
}

fn read_features_csv(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let text = String::from_utf8(read(path)?).map_err(|e| ChefError::Format(e.to_string()))?;
    let mut values = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let row = match parsed {
            Ok(r) => r,
            // header row
            Err(_) if lineno == 0 => continue,
            Err(e) => return Err(ChefError::Format(format!("{}:{}: {e}", path.display(), lineno + 1))),
        };
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(ChefError::Format(format!(
                    "{}:{}: expected {c} columns, found {}",
                    path.display(),
                    lineno + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    Ok((values, rows, cols.unwrap_or(0)))
}

struct LabelRows {
    labels: BTreeMap<usize, LabelState>,
    truth: BTreeMap<usize, usize>,
}

fn parse_class(field: &str, num_classes: usize, ctx: &str) -> Result<usize> {
    let c: usize = field
        .trim()
        .parse()
        .map_err(|_| ChefError::Format(format!("{ctx}: bad class index {field:?}")))?;
    if c == 0 || c > num_classes {
        return Err(ChefError::Validation(format!("{ctx}: class {c} outside 1..={num_classes}")));
    }
    Ok(c - 1)
}

fn read_label_csv(path: &Path, num_classes: usize) -> Result<LabelRows> {
    let text = String::from_utf8(read(path)?).map_err(|e| ChefError::Format(e.to_string()))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "") == "id,kind,values" => {}
        _ => {
            return Err(ChefError::Format(format!(
                "{}: missing header \"id,kind,values\"",
                path.display()
            )))
        }
    }
    let mut rows = LabelRows {
        labels: BTreeMap::new(),
        truth: BTreeMap::new(),
    };
    for (lineno, line) in lines {
        let ctx = format!("{}:{}", path.display(), lineno + 1);
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(ChefError::Format(format!("{ctx}: expected id,kind,values")));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| ChefError::Format(format!("{ctx}: bad id {:?}", fields[0])))?;
        let single = || {
            if fields.len() != 3 {
                return Err(ChefError::Format(format!("{ctx}: expected a single class")));
            }
            parse_class(fields[2], num_classes, &ctx)
        };
        let label = match fields[1] {
            "gt" => {
                rows.truth.insert(id, single()?);
                continue;
            }
            "det" => LabelState::Deterministic(single()?),
            "clean" => LabelState::Cleaned(single()?),
            "prob" => {
                let p: std::result::Result<Vec<f64>, _> =
                    fields[2..].iter().map(|f| f.parse::<f64>()).collect();
                let p = p.map_err(|e| ChefError::Format(format!("{ctx}: {e}")))?;
                LabelState::Probabilistic(checked_probabilities(p, num_classes, &ctx)?)
            }
            other => return Err(ChefError::Format(format!("{ctx}: unknown kind {other:?}"))),
        };
        if rows.labels.insert(id, label).is_some() {
            return Err(ChefError::Consistency(format!("{ctx}: duplicate label for sample {id}")));
        }
    }
    Ok(rows)
}

/// Validates a probability vector read from text and re-normalizes it when
/// its sum is off by more than rounding noise.
fn checked_probabilities(mut p: Vec<f64>, num_classes: usize, ctx: &str) -> Result<Vec<f64>> {
    if p.len() != num_classes {
        return Err(ChefError::Format(format!(
            "{ctx}: {} probabilities for {num_classes} classes",
            p.len()
        )));
    }
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (sum - 1.0).abs() > LOAD_SUM_TOL {
        return Err(ChefError::Validation(format!("{ctx}: probabilities {p:?} do not sum to 1")));
    }
    if (sum - 1.0).abs() > 1e-12 {
        p.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(p)
}

/// Loads a dataset from its JSON manifest. Relative paths resolve against
/// the manifest's directory.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let text = read(manifest_path)?;
    let manifest: Manifest = serde_json::from_slice(&text)
        .map_err(|e| ChefError::Format(format!("{}: {e}", manifest_path.display())))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

    let (raw, rows, cols) = match manifest.format {
        FeatureFormat::Bin => read_features_bin(&resolve(&manifest.features))?,
        FeatureFormat::Csv => read_features_csv(&resolve(&manifest.features))?,
    };
    let c = manifest.num_classes;
    let mut label_rows = read_label_csv(&resolve(&manifest.labels), c)?;
    if label_rows.labels.len() != rows {
        return Err(ChefError::Consistency(format!(
            "{} label rows for {rows} feature rows",
            label_rows.labels.len()
        )));
    }
    if let Some(gt_path) = &manifest.ground_truth {
        let gt = read_label_csv(&resolve(gt_path), c)?;
        label_rows.truth.extend(gt.truth);
        // deterministic rows in a ground-truth file count as truth as well
        for (id, l) in gt.labels {
            if let Some(class) = l.class() {
                label_rows.truth.insert(id, class);
            }
        }
    }
    let mut labels = Vec::with_capacity(rows);
    for (expected, (id, label)) in label_rows.labels.into_iter().enumerate() {
        if id != expected {
            return Err(ChefError::Consistency(format!("label ids must cover 0..{rows}; missing {expected}")));
        }
        labels.push(label);
    }
    let mut truth = vec![None; rows];
    for (id, class) in label_rows.truth {
        if id >= rows {
            return Err(ChefError::Consistency(format!("ground truth for unknown sample {id}")));
        }
        truth[id] = Some(class);
    }
    let splits = Splits {
        train: manifest.splits.train.expand(),
        validation: manifest.splits.validation.expand(),
        test: manifest.splits.test.expand(),
    };
    let ds = Dataset::from_parts(raw, cols, labels, truth, c, splits);
    ds.validate()?;
    Ok(ds)
}

fn label_row(id: usize, label: &LabelState) -> String {
    match label {
        LabelState::Deterministic(c) => format!("{id},det,{}", c + 1),
        LabelState::Cleaned(c) => format!("{id},clean,{}", c + 1),
        LabelState::Probabilistic(p) => {
            let vals: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
            format!("{id},prob,{}", vals.join(","))
        }
    }
}

/// Writes `manifest.json`, the feature file, `labels.csv` and (when any
/// ground truth is known) `ground_truth.csv` into `dir`. Returns the
/// manifest path.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>, format: FeatureFormat) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| ChefError::io(dir, e))?;
    let n = dataset.len();
    let d = dataset.raw_dim();

    let features_name = match format {
        FeatureFormat::Bin => "features.bin",
        FeatureFormat::Csv => "features.csv",
    };
    match format {
        FeatureFormat::Bin => {
            let mut bytes = encode_header(FEATURE_MAGIC, n, d);
            bytes.reserve(n * d * 8);
            for i in 0..n {
                for v in dataset.raw_x(i) {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
            write(&dir.join(features_name), &bytes)?;
        }
        FeatureFormat::Csv => {
            let mut text = String::new();
            for i in 0..n {
                let row: Vec<String> = dataset.raw_x(i).iter().map(|v| format!("{v:?}")).collect();
                text.push_str(&row.join(","));
                text.push('\n');
            }
            write(&dir.join(features_name), text.as_bytes())?;
        }
    }

    let mut labels = String::from("id,kind,values\n");
    for (i, l) in dataset.labels().iter().enumerate() {
        labels.push_str(&label_row(i, l));
        labels.push('\n');
    }
    write(&dir.join("labels.csv"), labels.as_bytes())?;

    let ground_truth = if dataset.has_ground_truth() {
        let mut gt = String::from("id,kind,values\n");
        for i in 0..n {
            if let Some(c) = dataset.ground_truth(i) {
                gt.push_str(&format!("{i},gt,{}\n", c + 1));
            }
        }
        write(&dir.join("ground_truth.csv"), gt.as_bytes())?;
        Some(PathBuf::from("ground_truth.csv"))
    } else {
        None
    };

    let splits = dataset.splits();
    let manifest = Manifest {
        features: PathBuf::from(features_name),
        labels: PathBuf::from("labels.csv"),
        num_classes: dataset.num_classes(),
        splits: ManifestSplits {
            train: SplitSpec::Ids(splits.train.clone()),
            validation: SplitSpec::Ids(splits.validation.clone()),
            test: SplitSpec::Ids(splits.test.clone()),
        },
        ground_truth,
        format,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write(&path, &json)?;
    Ok(path)
}
