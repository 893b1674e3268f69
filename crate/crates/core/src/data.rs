//! Labelled examples with a binary sensitive attribute: CSV ingestion, stratified
//! splitting and a synthetic generator with controllable group bias.
//!
//! Class ids are zero-based everywhere in the Rust API and in JSON configuration;
//! CSV files and exported reports refer to classes by name.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary sensitive attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Group {
    Zero,
    One,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::Zero, Group::One];

    pub fn index(self) -> usize {
        match self {
            Group::Zero => 0,
            Group::One => 1,
        }
    }

    pub fn other(self) -> Group {
        match self {
            Group::Zero => Group::One,
            Group::One => Group::Zero,
        }
    }
}

impl From<Group> for u8 {
    fn from(g: Group) -> u8 {
        g.index() as u8
    }
}

impl TryFrom<u8> for Group {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Group::Zero),
            1 => Ok(Group::One),
            other => Err(Error::Domain(format!("group must be 0 or 1, got {other}"))),
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
    pub group: Group,
}

/// Per-class `[group 0, group 1]` counts.
pub type SupportTable = Vec<[usize; 2]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    num_classes: usize,
    num_features: usize,
    class_names: Vec<String>,
    feature_names: Vec<String>,
    group_names: [String; 2],
}

impl Dataset {
    /// Validates shapes and label ranges and requires every class to occur at least once.
    pub fn new(
        examples: Vec<LabeledExample>,
        num_classes: usize,
        num_features: usize,
    ) -> Result<Self> {
        let ds = Self::unchecked(
            examples,
            num_classes,
            num_features,
            default_class_names(num_classes),
            default_feature_names(num_features),
        )?;
        if let Some(k) = ds.support().iter().position(|s| s[0] + s[1] == 0) {
            return Err(Error::Input(format!("class {k} has no examples")));
        }
        Ok(ds)
    }

    fn unchecked(
        examples: Vec<LabeledExample>,
        num_classes: usize,
        num_features: usize,
        class_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Input(format!("need at least 2 classes, got {num_classes}")));
        }
        if num_features == 0 {
            return Err(Error::Input("need at least one feature".into()));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.features.len() != num_features {
                return Err(Error::Input(format!(
                    "example {i} has {} features, expected {num_features}",
                    ex.features.len()
                )));
            }
            if ex.label >= num_classes {
                return Err(Error::Input(format!(
                    "example {i} has label {} outside 0..{num_classes}",
                    ex.label
                )));
            }
            if ex.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::Input(format!("example {i} has non-finite features")));
            }
        }
        Ok(Self {
            examples,
            num_classes,
            num_features,
            class_names,
            feature_names,
            group_names: ["0".into(), "1".into()],
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_classes {
            return Err(Error::Input(format!(
                "{} class names for {} classes",
                names.len(),
                self.num_classes
            )));
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_features {
            return Err(Error::Input(format!(
                "{} feature names for {} features",
                names.len(),
                self.num_features
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn with_group_names(mut self, names: [String; 2]) -> Self {
        self.group_names = names;
        self
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn group_names(&self) -> &[String; 2] {
        &self.group_names
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn groups(&self) -> Vec<Group> {
        self.examples.iter().map(|e| e.group).collect()
    }

    pub fn support(&self) -> SupportTable {
        let mut table = vec![[0usize; 2]; self.num_classes];
        for ex in &self.examples {
            table[ex.label][ex.group.index()] += 1;
        }
        table
    }

    /// Row-major feature matrix of the selected examples.
    pub fn features_of(&self, indices: &[usize]) -> Array2<f64> {
        let mut m = Array2::zeros((indices.len(), self.num_features));
        for (row, &i) in indices.iter().enumerate() {
            for (c, &x) in self.examples[i].features.iter().enumerate() {
                m[[row, c]] = x;
            }
        }
        m
    }

    pub fn all_features(&self) -> Array2<f64> {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.features_of(&idx)
    }

    /// Same metadata, selected examples (in the given order). Classes may be absent.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            num_classes: self.num_classes,
            num_features: self.num_features,
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
            group_names: self.group_names.clone(),
        }
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            format_version: 1,
            n: self.len(),
            num_classes: self.num_classes,
            num_features: self.num_features,
            support: self
                .support()
                .iter()
                .zip(&self.class_names)
                .map(|(s, name)| SupportRow {
                    class: name.clone(),
                    group0: s[0],
                    group1: s[1],
                })
                .collect(),
        }
    }
}

fn default_class_names(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("class_{i}")).collect()
}

fn default_feature_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("f{i}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportRow {
    pub class: String,
    pub group0: usize,
    pub group1: usize,
}

/// Dataset summary JSON: sizes plus the per-(class, group) support table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub format_version: u32,
    pub n: usize,
    pub num_classes: usize,
    pub num_features: usize,
    pub support: Vec<SupportRow>,
}

/// Training indices grouped by `(class, group)` stratum.
#[derive(Debug, Clone)]
pub struct StratumIndex {
    strata: Vec<[Vec<usize>; 2]>,
}

impl StratumIndex {
    pub fn new(dataset: &Dataset) -> Self {
        let mut strata = vec![[Vec::new(), Vec::new()]; dataset.num_classes()];
        for (i, ex) in dataset.examples().iter().enumerate() {
            strata[ex.label][ex.group.index()].push(i);
        }
        Self { strata }
    }

    pub fn stratum(&self, class: usize, group: Group) -> &[usize] {
        self.strata
            .get(class)
            .map(|s| s[group.index()].as_slice())
            .unwrap_or(&[])
    }

    pub fn count(&self, class: usize, group: Group) -> usize {
        self.stratum(class, group).len()
    }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Column roles of a dataset CSV file.
///
/// Dialect: comma separated, UTF-8, mandatory header row, `.` as decimal mark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub label_column: String,
    pub group_column: String,
    /// Feature columns in order; `None` means every other column, in file order.
    pub feature_columns: Option<Vec<String>>,
    /// Known class names. When absent, labels are 1-based integers if they all
    /// parse as such, otherwise the sorted set of distinct label strings.
    pub class_names: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label_column: "label".into(),
            group_column: "group".into(),
            feature_columns: None,
            class_names: None,
        }
    }
}

impl CsvSchema {
    /// Schema that reads back exactly what [`save_csv`] writes for `dataset`.
    pub fn for_dataset(dataset: &Dataset) -> Self {
        Self {
            feature_columns: Some(dataset.feature_names().to_vec()),
            class_names: Some(dataset.class_names().to_vec()),
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let ds = read_csv(file, schema)?;
    log::info!(
        "loaded {} examples from {} (K = {}, p = {})",
        ds.len(),
        path.display(),
        ds.num_classes(),
        ds.num_features()
    );
    for (name, s) in ds.class_names().iter().zip(ds.support()) {
        log::info!("  {name}: group0 = {}, group1 = {}", s[0], s[1]);
    }
    Ok(ds)
}

fn row_error(e: csv::Error) -> Error {
    let Some(row) = e.position().map(|p| p.line() as usize) else {
        return e.into();
    };
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        _ => e.to_string(),
    };
    Error::Parse {
        row,
        column: String::new(),
        message,
    }
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 1,
            column: name.to_string(),
            message: "missing column".into(),
        })
    };
    let label_col = find(&schema.label_column)?;
    let group_col = find(&schema.group_column)?;
    let feature_cols: Vec<usize> = match &schema.feature_columns {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&c| c != label_col && c != group_col)
            .collect(),
    };
    if feature_cols.is_empty() {
        return Err(Error::Parse {
            row: 1,
            column: String::new(),
            message: "no feature columns".into(),
        });
    }
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| headers[c].to_string()).collect();

    let mut rows: Vec<(Vec<f64>, String, Group, usize)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(row_error)?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let cell = |c: usize| record.get(c).unwrap_or("").trim();
        let mut features = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let v: f64 = cell(c).parse().map_err(|_| Error::Parse {
                row,
                column: headers[c].to_string(),
                message: format!("non-numeric feature `{}`", cell(c)),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: headers[c].to_string(),
                    message: format!("non-finite feature `{}`", cell(c)),
                });
            }
            features.push(v);
        }
        let group = match cell(group_col) {
            "0" => Group::Zero,
            "1" => Group::One,
            other => {
                return Err(Error::Parse {
                    row,
                    column: schema.group_column.clone(),
                    message: format!("group must be 0 or 1, got `{other}`"),
                })
            }
        };
        rows.push((features, cell(label_col).to_string(), group, row));
    }

    let (class_names, lookup): (Vec<String>, Box<dyn Fn(&str) -> Option<usize>>) =
        match &schema.class_names {
            Some(names) => {
                let names = names.clone();
                let table = names.clone();
                (names, Box::new(move |s| table.iter().position(|n| n == s)))
            }
            None => {
                let ints: Option<Vec<usize>> =
                    rows.iter().map(|r| r.1.parse::<usize>().ok().filter(|&v| v >= 1)).collect();
                match ints {
                    Some(ids) => {
                        let k = ids.iter().copied().max().unwrap_or(0);
                        (
                            default_class_names(k),
                            Box::new(move |s| s.parse::<usize>().ok().map(|v| v - 1)),
                        )
                    }
                    None => {
                        let names: Vec<String> = rows
                            .iter()
                            .map(|r| r.1.clone())
                            .collect::<BTreeSet<_>>()
                            .into_iter()
                            .collect();
                        let table = names.clone();
                        (names, Box::new(move |s| table.iter().position(|n| n == s)))
                    }
                }
            }
        };

    let mut examples = Vec::with_capacity(rows.len());
    for (features, label, group, row) in rows {
        let label = lookup(&label).ok_or_else(|| Error::Parse {
            row,
            column: schema.label_column.clone(),
            message: format!("unknown label `{label}`"),
        })?;
        examples.push(LabeledExample {
            features,
            label,
            group,
        });
    }
    let k = class_names.len();
    let p = feature_names.len();
    Dataset::new(examples, k, p)?
        .with_class_names(class_names)?
        .with_feature_names(feature_names)
}

/// Writes features, class name and group; readable with [`CsvSchema::for_dataset`].
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(dataset, file)
}

pub fn write_csv<W: std::io::Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = dataset.feature_names().iter().map(String::as_str).collect();
    header.push("label");
    header.push("group");
    wtr.write_record(&header)?;
    for ex in dataset.examples() {
        let mut rec: Vec<String> = ex.features.iter().map(|x| x.to_string()).collect();
        rec.push(dataset.class_names()[ex.label].clone());
        rec.push(ex.group.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Stratified train/validation/test split over `(class, group)` strata.
///
/// Each stratum is shuffled with `seed` and cut at `round(n·f_train)` and
/// `round(n·f_val)`; the remainder goes to test. Examples keep their original
/// relative order inside each split.
pub fn split(dataset: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Splits> {
    validate_fractions(fractions)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let index = StratumIndex::new(dataset);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for class in 0..dataset.num_classes() {
        for group in Group::BOTH {
            let mut members = index.stratum(class, group).to_vec();
            let n = members.len();
            if n == 0 {
                continue;
            }
            if n < 3 {
                log::warn!(
                    "stratum (class {class}, group {group}) has {n} examples; \
                     some splits receive none"
                );
            }
            members.shuffle(&mut rng);
            let n_train = ((n as f64 * fractions[0]).round() as usize).min(n);
            let n_val = ((n as f64 * fractions[1]).round() as usize).min(n - n_train);
            parts[0].extend_from_slice(&members[..n_train]);
            parts[1].extend_from_slice(&members[n_train..n_train + n_val]);
            parts[2].extend_from_slice(&members[n_train + n_val..]);
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    Ok(Splits {
        train: dataset.subset(&parts[0]),
        val: dataset.subset(&parts[1]),
        test: dataset.subset(&parts[2]),
    })
}

pub(crate) fn validate_fractions(f: [f64; 3]) -> Result<()> {
    if f.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Config(format!("split fractions must be positive, got {f:?}")));
    }
    let sum: f64 = f.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions sum to {sum}, expected 1")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Group-conditional distortion of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBias {
    pub class: usize,
    /// Class whose cluster the group-1 examples are pushed toward.
    pub toward: usize,
    /// Shift of group-1 examples, in units of `noise_std`.
    #[serde(default)]
    pub shift: f64,
    /// Probability that a group-1 example of `class` is labelled `toward`.
    #[serde(default)]
    pub label_flip: f64,
}

/// Gaussian class clusters with optional group-1 bias on selected classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub num_features: usize,
    /// `[group 0, group 1]` example counts per generating class.
    pub counts: Vec<[usize; 2]>,
    /// Distance of each class centre from the origin.
    pub separation: f64,
    pub noise_std: f64,
    #[serde(default)]
    pub biases: Vec<ClassBias>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn balanced(num_classes: usize, num_features: usize, per_group: usize, seed: u64) -> Self {
        Self {
            num_classes,
            num_features,
            counts: vec![[per_group, per_group]; num_classes],
            separation: 3.0,
            noise_std: 1.0,
            biases: Vec::new(),
            seed,
        }
    }

    /// Four classes, ten features, 1,000 examples per (class, group); group-1
    /// examples of class 2 are shifted two standard deviations toward class 3.
    pub fn acceptance(seed: u64) -> Self {
        Self {
            biases: vec![ClassBias {
                class: 2,
                toward: 3,
                shift: 2.0,
                label_flip: 0.0,
            }],
            ..Self::balanced(4, 10, 1000, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_features == 0 {
            return Err(Error::Config("need K ≥ 2 and p ≥ 1".into()));
        }
        if self.counts.len() != self.num_classes {
            return Err(Error::Config(format!(
                "{} count rows for {} classes",
                self.counts.len(),
                self.num_classes
            )));
        }
        if !(self.noise_std > 0.0) || !self.separation.is_finite() {
            return Err(Error::Config("noise_std must be positive, separation finite".into()));
        }
        for b in &self.biases {
            if b.class >= self.num_classes || b.toward >= self.num_classes || b.class == b.toward {
                return Err(Error::Config(format!(
                    "bias {} → {} is not a pair of distinct classes",
                    b.class, b.toward
                )));
            }
            if !(0.0..0.5).contains(&b.label_flip) {
                return Err(Error::Config(format!(
                    "label flip rate {} outside [0, 0.5)",
                    b.label_flip
                )));
            }
            if !b.shift.is_finite() {
                return Err(Error::Config("bias shift must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Samples a dataset from `spec`. Examples are emitted class by class, group 0
/// before group 1, so counts per generating class match `spec.counts` exactly.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let (k, p) = (spec.num_classes, spec.num_features);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let centers: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            if c < p {
                let mut v = vec![0.0; p];
                v[c] = spec.separation;
                v
            } else {
                let raw: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                raw.iter().map(|x| x * spec.separation / norm).collect()
            }
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))?;

    let mut examples = Vec::with_capacity(spec.counts.iter().map(|c| c[0] + c[1]).sum());
    for class in 0..k {
        let bias = spec.biases.iter().find(|b| b.class == class);
        for group in Group::BOTH {
            let mut offset = vec![0.0; p];
            if let (Some(b), Group::One) = (bias, group) {
                let dir: Vec<f64> = centers[b.toward]
                    .iter()
                    .zip(&centers[class])
                    .map(|(t, c)| t - c)
                    .collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                for (o, d) in offset.iter_mut().zip(&dir) {
                    *o = d / norm * b.shift * spec.noise_std;
                }
            }
            for _ in 0..spec.counts[class][group.index()] {
                let features: Vec<f64> = (0..p)
                    .map(|d| centers[class][d] + offset[d] + noise.sample(&mut rng))
                    .collect();
                let mut label = class;
                if let (Some(b), Group::One) = (bias, group) {
                    if b.label_flip > 0.0 && rng.random::<f64>() < b.label_flip {
                        label = b.toward;
                    }
                }
                examples.push(LabeledExample {
                    features,
                    label,
                    group,
                });
            }
        }
    }
    Dataset::new(examples, k, p)
}
