//! Tabular data model: feature schemas, instances, the dense encoding used
//! by the optimizers, the mixed-type distance and CSV ingestion.
//!
//! Continuous features are min-max scaled to `[0, 1]`; categorical features
//! become one-hot blocks that the counterfactual optimizers relax to the
//! probability simplex. Distances are computed on raw values: MAD-normalized
//! L1 for continuous features plus a mismatch indicator for categorical ones,
//! each term averaged within its kind.

use std::collections::HashSet;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous { min: f64, max: f64 },
    Categorical { levels: Vec<String> },
}

impl FeatureKind {
    pub fn is_continuous(&self) -> bool {
        matches!(self, FeatureKind::Continuous { .. })
    }

    /// Number of encoded entries this feature occupies.
    pub fn width(&self) -> usize {
        match self {
            FeatureKind::Continuous { .. } => 1,
            FeatureKind::Categorical { levels } => levels.len(),
        }
    }
}

fn default_mutable() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default = "default_mutable")]
    pub mutable: bool,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>, min: f64, max: f64) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Continuous { min, max },
            mutable: true,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical {
                levels: levels.into_iter().map(Into::into).collect(),
            },
            mutable: true,
        }
    }

    pub fn immutable(mut self) -> Self {
        self.mutable = false;
        self
    }
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    features: Vec<FeatureSpec>,
}

/// Ordered, validated list of feature specifications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct FeatureSchema {
    features: Vec<FeatureSpec>,
    offsets: Vec<usize>,
    width: usize,
}

impl TryFrom<RawSchema> for FeatureSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        FeatureSchema::new(raw.features)
    }
}

impl From<FeatureSchema> for RawSchema {
    fn from(schema: FeatureSchema) -> Self {
        RawSchema {
            features: schema.features,
        }
    }
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Schema("schema has no features".into()));
        }
        let mut seen = HashSet::new();
        for f in &features {
            if f.name.trim().is_empty() {
                return Err(Error::Schema("feature names must be non-empty".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
            }
            match &f.kind {
                FeatureKind::Continuous { min, max } => {
                    if !(min.is_finite() && max.is_finite() && min < max) {
                        return Err(Error::Schema(format!(
                            "feature `{}`: continuous range must be finite with min < max, got [{min}, {max}]",
                            f.name
                        )));
                    }
                }
                FeatureKind::Categorical { levels } => {
                    let distinct: HashSet<&String> = levels.iter().collect();
                    if levels.len() < 2 || distinct.len() != levels.len() {
                        return Err(Error::Schema(format!(
                            "feature `{}`: categorical features need at least 2 distinct levels",
                            f.name
                        )));
                    }
                }
            }
        }
        let mut offsets = Vec::with_capacity(features.len());
        let mut width = 0;
        for f in &features {
            offsets.push(width);
            width += f.kind.width();
        }
        Ok(FeatureSchema {
            features,
            offsets,
            width,
        })
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> &FeatureSpec {
        &self.features[index]
    }

    /// Number of features (not encoded entries).
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Encoded vector width.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Encoded entry range `[start, end)` for feature `index`.
    pub fn block(&self, index: usize) -> std::ops::Range<usize> {
        let start = self.offsets[index];
        start..start + self.features[index].kind.width()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn n_continuous(&self) -> usize {
        self.features.iter().filter(|f| f.kind.is_continuous()).count()
    }

    pub fn n_categorical(&self) -> usize {
        self.len() - self.n_continuous()
    }

    /// Hex SHA-256 of the canonical JSON form; stored alongside persisted models.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("schema serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self, inst: &Instance) -> Result<()> {
        if inst.len() != self.len() {
            return Err(Error::Schema(format!(
                "instance has {} values, schema has {} features",
                inst.len(),
                self.len()
            )));
        }
        for (spec, value) in self.features.iter().zip(inst.values()) {
            match (&spec.kind, value) {
                (FeatureKind::Continuous { min, max }, FeatureValue::Real(v)) => {
                    if !(v.is_finite() && *v >= *min && *v <= *max) {
                        return Err(Error::Schema(format!(
                            "feature `{}`: value {v} outside [{min}, {max}]",
                            spec.name
                        )));
                    }
                }
                (FeatureKind::Categorical { levels }, FeatureValue::Level(l)) => {
                    if *l >= levels.len() {
                        return Err(Error::Schema(format!(
                            "feature `{}`: level index {l} out of range ({} levels)",
                            spec.name,
                            levels.len()
                        )));
                    }
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "feature `{}`: value kind does not match schema",
                        spec.name
                    )))
                }
            }
        }
        Ok(())
    }

    /// Dense encoding: continuous entries `(v - min) / (max - min)`, categorical one-hot.
    pub fn encode(&self, inst: &Instance) -> Result<EncodedVector> {
        self.validate(inst)?;
        let mut out = vec![0.0; self.width];
        for (i, spec) in self.features.iter().enumerate() {
            let start = self.offsets[i];
            match (&spec.kind, inst.values[i]) {
                (FeatureKind::Continuous { min, max }, FeatureValue::Real(v)) => {
                    out[start] = (v - min) / (max - min);
                }
                (FeatureKind::Categorical { .. }, FeatureValue::Level(l)) => {
                    out[start + l] = 1.0;
                }
                _ => unreachable!("validated above"),
            }
        }
        Ok(EncodedVector(out))
    }

    /// Inverse of [`encode`](Self::encode): continuous entries are unscaled and
    /// clamped, categorical blocks resolved by argmax (ties go to the lowest index).
    pub fn decode(&self, vec: &[f64]) -> Result<Instance> {
        if vec.len() != self.width {
            return Err(Error::Schema(format!(
                "encoded vector has {} entries, schema width is {}",
                vec.len(),
                self.width
            )));
        }
        let values = self
            .features
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let block = &vec[self.block(i)];
                match &spec.kind {
                    FeatureKind::Continuous { min, max } => {
                        let e = if block[0].is_nan() { 0.0 } else { block[0].clamp(0.0, 1.0) };
                        FeatureValue::Real((min + e * (max - min)).clamp(*min, *max))
                    }
                    FeatureKind::Categorical { .. } => FeatureValue::Level(argmax(block)),
                }
            })
            .collect();
        Ok(Instance { values })
    }

    /// Mixed-type distance between two schema-valid instances.
    pub fn distance(&self, a: &Instance, b: &Instance, scales: &DistanceScales) -> Result<f64> {
        self.validate(a)?;
        self.validate(b)?;
        if scales.len() != self.len() {
            return Err(Error::Schema("distance scales do not match schema".into()));
        }
        let mut cont = 0.0;
        let mut cat = 0.0;
        for (i, (va, vb)) in a.values.iter().zip(&b.values).enumerate() {
            match (va, vb) {
                (FeatureValue::Real(x), FeatureValue::Real(y)) => cont += (x - y).abs() / scales.get(i),
                (FeatureValue::Level(x), FeatureValue::Level(y)) => cat += f64::from(u8::from(x != y)),
                _ => unreachable!("validated above"),
            }
        }
        let n_cont = self.n_continuous();
        let n_cat = self.n_categorical();
        let mut d = 0.0;
        if n_cont > 0 {
            d += cont / n_cont as f64;
        }
        if n_cat > 0 {
            d += cat / n_cat as f64;
        }
        Ok(d)
    }

    /// Level name of a categorical value, or the formatted number for continuous ones.
    pub fn display_value(&self, index: usize, value: FeatureValue) -> String {
        match (&self.features[index].kind, value) {
            (FeatureKind::Categorical { levels }, FeatureValue::Level(l)) => {
                levels.get(l).cloned().unwrap_or_else(|| format!("#{l}"))
            }
            (_, FeatureValue::Real(v)) => format!("{v}"),
            (_, FeatureValue::Level(l)) => format!("#{l}"),
        }
    }

    /// JSON object mapping feature name to its raw value (number or level name).
    pub fn instance_to_json(&self, inst: &Instance) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (i, spec) in self.features.iter().enumerate() {
            let v = match (&spec.kind, inst.values.get(i)) {
                (FeatureKind::Categorical { levels }, Some(FeatureValue::Level(l))) => {
                    serde_json::Value::String(levels.get(*l).cloned().unwrap_or_default())
                }
                (_, Some(FeatureValue::Real(v))) => serde_json::json!(v),
                _ => serde_json::Value::Null,
            };
            map.insert(spec.name.clone(), v);
        }
        serde_json::Value::Object(map)
    }

    /// Parse an instance from a name → value JSON object or a positional array.
    pub fn instance_from_json(&self, value: &serde_json::Value) -> Result<Instance> {
        let cells: Vec<serde_json::Value> = match value {
            serde_json::Value::Array(items) => items.clone(),
            serde_json::Value::Object(map) => self
                .features
                .iter()
                .map(|f| {
                    map.get(&f.name)
                        .cloned()
                        .ok_or_else(|| Error::Schema(format!("instance is missing feature `{}`", f.name)))
                })
                .collect::<Result<_>>()?,
            _ => return Err(Error::Schema("instance must be a JSON object or array".into())),
        };
        if cells.len() != self.len() {
            return Err(Error::Schema(format!(
                "instance has {} values, schema has {} features",
                cells.len(),
                self.len()
            )));
        }
        let values = self
            .features
            .iter()
            .zip(&cells)
            .map(|(spec, cell)| {
                let text = match cell {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                self.parse_cell(spec, &text)
            })
            .collect::<std::result::Result<Vec<_>, String>>()
            .map_err(Error::Schema)?;
        let inst = Instance::new(values);
        self.validate(&inst)?;
        Ok(inst)
    }

    fn parse_cell(&self, spec: &FeatureSpec, text: &str) -> std::result::Result<FeatureValue, String> {
        let text = text.trim();
        match &spec.kind {
            FeatureKind::Continuous { min, max } => {
                let v: f64 = text
                    .parse()
                    .map_err(|_| format!("cannot parse `{text}` as a number for `{}`", spec.name))?;
                if !(v.is_finite() && v >= *min && v <= *max) {
                    return Err(format!("value {v} outside [{min}, {max}] for `{}`", spec.name));
                }
                Ok(FeatureValue::Real(v))
            }
            FeatureKind::Categorical { levels } => levels
                .iter()
                .position(|l| l == text)
                .map(FeatureValue::Level)
                .ok_or_else(|| format!("unknown level `{text}` for `{}`", spec.name)),
        }
    }
}

fn argmax(block: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in block.iter().enumerate() {
        if *v > block[best] {
            best = i;
        }
    }
    best
}

/// A single raw feature value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureValue {
    Real(f64),
    Level(usize),
}

impl FeatureValue {
    pub fn as_real(self) -> Option<f64> {
        match self {
            FeatureValue::Real(v) => Some(v),
            FeatureValue::Level(_) => None,
        }
    }

    pub fn as_level(self) -> Option<usize> {
        match self {
            FeatureValue::Level(l) => Some(l),
            FeatureValue::Real(_) => None,
        }
    }
}

/// Raw feature values in schema order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    values: Vec<FeatureValue>,
}

impl Instance {
    pub fn new(values: Vec<FeatureValue>) -> Self {
        Instance { values }
    }

    /// All-continuous instance.
    pub fn reals(values: &[f64]) -> Self {
        Instance {
            values: values.iter().copied().map(FeatureValue::Real).collect(),
        }
    }

    pub fn values(&self) -> &[FeatureValue] {
        &self.values
    }

    pub fn get(&self, index: usize) -> FeatureValue {
        self.values[index]
    }

    pub fn set(&mut self, index: usize, value: FeatureValue) {
        self.values[index] = value;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Key with continuous values rounded to `decimals`; used to deduplicate candidates.
    pub fn rounded_key(&self, decimals: i32) -> Vec<i64> {
        let factor = 10f64.powi(decimals);
        self.values
            .iter()
            .map(|v| match v {
                FeatureValue::Real(x) => (x * factor).round() as i64,
                FeatureValue::Level(l) => *l as i64,
            })
            .collect()
    }
}

/// Dense optimization vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedVector(pub Vec<f64>);

impl Deref for EncodedVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for EncodedVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Per-feature divisors for continuous distance terms. Entries for categorical
/// features are unused and kept at 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceScales {
    scales: Vec<f64>,
}

impl DistanceScales {
    pub fn new(scales: Vec<f64>) -> Result<Self> {
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Schema("distance scales must be positive and finite".into()));
        }
        Ok(DistanceScales { scales })
    }

    /// Feature ranges as scales (the fallback used when no data is at hand).
    pub fn from_ranges(schema: &FeatureSchema) -> Self {
        let scales = schema
            .features()
            .iter()
            .map(|f| match f.kind {
                FeatureKind::Continuous { min, max } => max - min,
                FeatureKind::Categorical { .. } => 1.0,
            })
            .collect();
        DistanceScales { scales }
    }

    pub fn get(&self, feature: usize) -> f64 {
        self.scales[feature]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }
}

/// MAD of each continuous column; falls back to the schema range when the MAD is 0.
pub fn compute_scales(data: &Dataset) -> DistanceScales {
    let schema = data.schema();
    let scales = schema
        .features()
        .iter()
        .enumerate()
        .map(|(i, f)| match f.kind {
            FeatureKind::Continuous { min, max } => {
                let column: Vec<f64> = data.rows().iter().filter_map(|r| r.get(i).as_real()).collect();
                let m = stats::mad(&column);
                if m > 0.0 {
                    m
                } else {
                    max - min
                }
            }
            FeatureKind::Categorical { .. } => 1.0,
        })
        .collect();
    DistanceScales { scales }
}

/// The relaxed distance on encoded vectors: a weighted L1 norm whose weights make
/// it coincide with [`FeatureSchema::distance`] on exact encodings. Categorical
/// blocks contribute half their L1 difference, so a one-hot mismatch counts 1.
#[derive(Clone, Debug)]
pub struct EncodedMetric {
    weights: Vec<f64>,
}

impl EncodedMetric {
    pub fn new(schema: &FeatureSchema, scales: &DistanceScales) -> Self {
        let n_cont = schema.n_continuous().max(1) as f64;
        let n_cat = schema.n_categorical().max(1) as f64;
        let mut weights = vec![0.0; schema.width()];
        for (i, f) in schema.features().iter().enumerate() {
            match f.kind {
                FeatureKind::Continuous { min, max } => {
                    weights[schema.block(i).start] = (max - min) / (scales.get(i) * n_cont);
                }
                FeatureKind::Categorical { .. } => {
                    for e in schema.block(i) {
                        weights[e] = 0.5 / n_cat;
                    }
                }
            }
        }
        EncodedMetric { weights }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * (x - y).abs())
            .sum()
    }

    /// Subgradient of `distance(a, b)` with respect to `a` (zero at ties), accumulated
    /// into `out` after multiplying by `factor`.
    pub fn accumulate_grad(&self, a: &[f64], b: &[f64], factor: f64, out: &mut [f64]) {
        for (e, w) in self.weights.iter().enumerate() {
            let diff = a[e] - b[e];
            if diff > 0.0 {
                out[e] += factor * w;
            } else if diff < 0.0 {
                out[e] -= factor * w;
            }
        }
    }
}

/// Rows of instances with binary labels.
#[derive(Clone, Debug)]
pub struct Dataset {
    schema: FeatureSchema,
    rows: Vec<Instance>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rows: Vec<Instance>, labels: Vec<u8>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Schema("dataset has no rows".into()));
        }
        if rows.len() != labels.len() {
            return Err(Error::Schema(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|l| **l > 1) {
            return Err(Error::Schema(format!("label {bad} is not binary")));
        }
        for r in &rows {
            schema.validate(r)?;
        }
        Ok(Dataset { schema, rows, labels })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Instance] {
        &self.rows
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn encoded_rows(&self) -> Vec<EncodedVector> {
        self.rows
            .iter()
            .map(|r| self.schema.encode(r).expect("rows validated on construction"))
            .collect()
    }

    /// Per-feature median (continuous) or modal level (categorical, ties to the lowest index).
    pub fn median_instance(&self) -> Instance {
        let values = self
            .schema
            .features()
            .iter()
            .enumerate()
            .map(|(i, f)| match &f.kind {
                FeatureKind::Continuous { .. } => {
                    let column: Vec<f64> = self.rows.iter().filter_map(|r| r.get(i).as_real()).collect();
                    FeatureValue::Real(stats::median(&column))
                }
                FeatureKind::Categorical { levels } => {
                    let mut counts = vec![0usize; levels.len()];
                    for r in &self.rows {
                        if let Some(l) = r.get(i).as_level() {
                            counts[l] += 1;
                        }
                    }
                    let mut best = 0;
                    for (l, c) in counts.iter().enumerate() {
                        if *c > counts[best] {
                            best = l;
                        }
                    }
                    FeatureValue::Level(best)
                }
            })
            .collect();
        Instance::new(values)
    }

    /// Write the dataset as CSV with a header row; the label goes last.
    pub fn write_csv(&self, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_to_io)?;
        let mut header: Vec<String> = self.schema.names().iter().map(|s| s.to_string()).collect();
        header.push(label_column.to_string());
        w.write_record(&header).map_err(csv_to_io)?;
        for (row, label) in self.rows.iter().zip(&self.labels) {
            let mut record: Vec<String> = row
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| self.schema.display_value(i, *v))
                .collect();
            record.push(label.to_string());
            w.write_record(&record).map_err(csv_to_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_to_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Schema file: the feature list plus the name of the label column.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchemaFile {
    #[serde(flatten)]
    pub schema: FeatureSchema,
    pub label: String,
}

impl SchemaFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Read a CSV file (header row mandatory) into a [`Dataset`].
pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema, label_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Ingest {
                row: 0,
                column: String::new(),
                message: format!("{other:?}"),
            },
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Ingest {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?
        .clone();
    let column_of = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Ingest {
            row: 0,
            column: name.to_string(),
            message: "column missing from header".into(),
        })
    };
    let feature_cols: Vec<usize> = schema
        .features()
        .iter()
        .map(|f| column_of(&f.name))
        .collect::<Result<_>>()?;
    let label_col = column_of(label_column)?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Ingest {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let cell = |col: usize, name: &str| {
            record.get(col).ok_or_else(|| Error::Ingest {
                row,
                column: name.to_string(),
                message: "missing cell".into(),
            })
        };
        let mut values = Vec::with_capacity(schema.len());
        for (spec, col) in schema.features().iter().zip(&feature_cols) {
            let text = cell(*col, &spec.name)?;
            let v = schema.parse_cell(spec, text).map_err(|message| Error::Ingest {
                row,
                column: spec.name.clone(),
                message,
            })?;
            values.push(v);
        }
        let text = cell(label_col, label_column)?;
        let label = match text.parse::<f64>() {
            Ok(0.0) => 0,
            Ok(1.0) => 1,
            _ => {
                return Err(Error::Ingest {
                    row,
                    column: label_column.to_string(),
                    message: format!("label `{text}` is not 0 or 1"),
                })
            }
        };
        rows.push(Instance::new(values));
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::Ingest {
            row: 0,
            column: String::new(),
            message: "file has no data rows".into(),
        });
    }
    Dataset::new(schema.clone(), rows, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn mixed_schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            FeatureSpec::continuous("age", 0.0, 10.0),
            FeatureSpec::categorical("color", ["A", "B", "C"]),
        ])
        .unwrap()
    }

    #[test]
    fn encode_scales_and_one_hots() {
        let s = mixed_schema();
        let inst = Instance::new(vec![FeatureValue::Real(5.0), FeatureValue::Level(1)]);
        assert_eq!(s.encode(&inst).unwrap().0, vec![0.5, 0.0, 1.0, 0.0]);
        let top = Instance::new(vec![FeatureValue::Real(10.0), FeatureValue::Level(0)]);
        assert_eq!(s.encode(&top).unwrap()[0], 1.0);
    }

    #[test]
    fn encode_rejects_mismatch() {
        let s = mixed_schema();
        assert!(s.encode(&Instance::reals(&[1.0])).is_err());
        assert!(s.encode(&Instance::reals(&[1.0, 2.0])).is_err());
        let bad_level = Instance::new(vec![FeatureValue::Real(1.0), FeatureValue::Level(3)]);
        assert!(s.encode(&bad_level).is_err());
    }

    #[test]
    fn decode_ties_and_clamps() {
        let s = mixed_schema();
        let inst = s.decode(&[1.2, 0.4, 0.4, 0.2]).unwrap();
        assert_eq!(inst.get(0), FeatureValue::Real(10.0));
        assert_eq!(inst.get(1), FeatureValue::Level(0));
        assert!(s.decode(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn distance_examples() {
        let cat = FeatureSchema::new(vec![
            FeatureSpec::categorical("a", ["x", "y"]),
            FeatureSpec::categorical("b", ["x", "y"]),
        ])
        .unwrap();
        let scales = DistanceScales::from_ranges(&cat);
        let p = Instance::new(vec![FeatureValue::Level(0), FeatureValue::Level(1)]);
        let q = Instance::new(vec![FeatureValue::Level(0), FeatureValue::Level(0)]);
        assert_eq!(cat.distance(&p, &p, &scales).unwrap(), 0.0);
        assert_eq!(cat.distance(&p, &q, &scales).unwrap(), 0.5);

        let cont = FeatureSchema::new(vec![FeatureSpec::continuous("x", 0.0, 10.0)]).unwrap();
        let mad = DistanceScales::new(vec![1.5]).unwrap();
        let d = cont
            .distance(&Instance::reals(&[1.0]), &Instance::reals(&[4.0]), &mad)
            .unwrap();
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn encoded_metric_matches_raw_distance() {
        let s = mixed_schema();
        let scales = DistanceScales::new(vec![2.0, 1.0]).unwrap();
        let a = Instance::new(vec![FeatureValue::Real(3.0), FeatureValue::Level(0)]);
        let b = Instance::new(vec![FeatureValue::Real(7.0), FeatureValue::Level(2)]);
        let raw = s.distance(&a, &b, &scales).unwrap();
        let metric = EncodedMetric::new(&s, &scales);
        let enc = metric.distance(&s.encode(&a).unwrap(), &s.encode(&b).unwrap());
        assert!((raw - enc).abs() < 1e-12);
        assert!((raw - 3.0).abs() < 1e-12);
    }

    fn dataset_of(values: &[f64], min: f64, max: f64) -> Dataset {
        let s = FeatureSchema::new(vec![FeatureSpec::continuous("v", min, max)]).unwrap();
        let rows = values.iter().map(|v| Instance::reals(&[*v])).collect();
        Dataset::new(s, rows, vec![0; values.len()]).unwrap()
    }

    #[test]
    fn scales_mad_and_fallback() {
        assert_eq!(compute_scales(&dataset_of(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.0, 10.0)).get(0), 1.0);
        assert_eq!(compute_scales(&dataset_of(&[4.0, 4.0, 4.0], 0.0, 10.0)).get(0), 10.0);
        assert_eq!(compute_scales(&dataset_of(&[0.0, 0.0, 0.0, 100.0], 0.0, 100.0)).get(0), 100.0);
    }

    #[test]
    fn schema_invariants() {
        assert!(FeatureSchema::new(vec![FeatureSpec::continuous("x", 1.0, 1.0)]).is_err());
        assert!(FeatureSchema::new(vec![FeatureSpec::continuous("x", 0.0, f64::INFINITY)]).is_err());
        assert!(FeatureSchema::new(vec![FeatureSpec::categorical("c", ["a"])]).is_err());
        assert!(FeatureSchema::new(vec![FeatureSpec::categorical("c", ["a", "a"])]).is_err());
        assert!(FeatureSchema::new(vec![
            FeatureSpec::continuous("x", 0.0, 1.0),
            FeatureSpec::continuous("x", 0.0, 1.0)
        ])
        .is_err());
        assert!(FeatureSchema::new(vec![FeatureSpec::continuous("", 0.0, 1.0)]).is_err());
    }

    #[test]
    fn schema_json_format() {
        let text = r#"{"features":[
            {"name":"age","kind":{"continuous":{"min":0,"max":10}},"mutable":true},
            {"name":"color","kind":{"categorical":{"levels":["A","B","C"]}},"mutable":false}
        ],"label":"y"}"#;
        let file: SchemaFile = serde_json::from_str(text).unwrap();
        assert_eq!(file.label, "y");
        assert_eq!(file.schema, {
            let mut s = mixed_schema();
            s.features[1].mutable = false;
            s
        });
        let bad = r#"{"features":[{"name":"a","kind":{"categorical":{"levels":["x"]}}}],"label":"y"}"#;
        assert!(serde_json::from_str::<SchemaFile>(bad).is_err());
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_csv_parses_rows() {
        let f = write_tmp("age,color,y\n1,A,0\n5.5,B,1\n10,C,1\n");
        let d = load_csv(f.path(), &mixed_schema(), "y").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.labels(), &[0, 1, 1]);
        assert_eq!(d.rows()[1].get(0), FeatureValue::Real(5.5));
    }

    #[test]
    fn load_csv_errors_cite_location() {
        let f = write_tmp("age,color,y\n1,A,0\n2,Z,1\n");
        match load_csv(f.path(), &mixed_schema(), "y") {
            Err(Error::Ingest { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "color");
            }
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("age,color,y\n1,A,2\n");
        assert!(matches!(
            load_csv(f.path(), &mixed_schema(), "y"),
            Err(Error::Ingest { row: 1, .. })
        ));
        let f = write_tmp("age,y\n1,0\n");
        assert!(matches!(
            load_csv(f.path(), &mixed_schema(), "y"),
            Err(Error::Ingest { row: 0, .. })
        ));
        let f = write_tmp("age,color,y\nabc,A,0\n");
        assert!(matches!(
            load_csv(f.path(), &mixed_schema(), "y"),
            Err(Error::Ingest { row: 1, .. })
        ));
    }

    #[test]
    fn median_instance_uses_mode_for_categoricals() {
        let s = mixed_schema();
        let rows = vec![
            Instance::new(vec![FeatureValue::Real(1.0), FeatureValue::Level(2)]),
            Instance::new(vec![FeatureValue::Real(3.0), FeatureValue::Level(2)]),
            Instance::new(vec![FeatureValue::Real(8.0), FeatureValue::Level(0)]),
        ];
        let d = Dataset::new(s, rows, vec![0, 1, 0]).unwrap();
        let m = d.median_instance();
        assert_eq!(m.get(0), FeatureValue::Real(3.0));
        assert_eq!(m.get(1), FeatureValue::Level(2));
    }
}
