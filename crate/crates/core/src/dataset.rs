//! Categorical tables: schema, record storage, CSV ingestion and
//! contingency tables (one-way and full cross-tabulations).
//!
//! Records are stored row-major as level indices in the schema's declared
//! level order. Cell indices of a cross-tabulation are mixed-radix with the
//! first listed axis most significant, so the full-table cell of a record is
//! `sum_j level_j * stride_j` with `stride_j = prod_{k > j} K_k`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tables with at most this many cells are stored densely.
pub const DENSE_CELL_LIMIT: u64 = 1 << 24;

const ROW_CHUNK: usize = 8192;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("schema has no attributes")]
    EmptySchema,
    #[error("attribute {0:?} is declared more than once")]
    DuplicateAttribute(String),
    #[error("attribute {attribute:?} declares level {level:?} more than once")]
    DuplicateLevel { attribute: String, level: String },
    #[error("attribute {0:?} must have at least 2 levels")]
    TooFewLevels(String),
    #[error("invalid label {0:?}: labels are restricted to [A-Za-z0-9_ -]")]
    InvalidLabel(String),
    #[error("full cross-tabulation size overflows 64 bits")]
    CellCountOverflow,
    #[error("input is empty")]
    EmptyInput,
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },
    #[error("line {line}: missing value for attribute {attribute:?}")]
    MissingValue { line: u64, attribute: String },
    #[error("line {line}: unknown level {level:?} for attribute {attribute:?}")]
    UnknownLevel { line: u64, attribute: String, level: String },
    #[error("header does not match schema: {0}")]
    HeaderMismatch(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("attribute index {0} is out of range")]
    AttributeOutOfRange(usize),
    #[error("attribute {0} is listed more than once")]
    DuplicateAxis(usize),
    #[error("attribute selection is empty")]
    EmptySelection,
    #[error("record {record}: level {level} is out of range for attribute {attribute}")]
    LevelOutOfRange { record: usize, attribute: usize, level: u32 },
    #[error("record has {found} values, schema has {expected} attributes")]
    RecordWidth { expected: usize, found: usize },
    #[error("datasets do not share a schema")]
    SchemaMismatch,
    #[error("table has {cells} cells, above the dense storage limit of {limit}")]
    TableTooLarge { cells: u64, limit: u64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | ' ' | '-'))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub levels: Vec<String>,
}

impl Attribute {
    pub fn new<S: Into<String>, L: Into<String>>(name: S, levels: impl IntoIterator<Item = L>) -> Self {
        Self {
            name: name.into(),
            levels: levels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn cardinality(&self) -> usize {
        self.levels.len()
    }
}

#[derive(Deserialize)]
struct RawSchema {
    attributes: Vec<Attribute>,
}

/// Ordered list of categorical attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct Schema {
    attributes: Vec<Attribute>,
    #[serde(skip)]
    strides: Vec<u64>,
    #[serde(skip)]
    cells: u64,
}

impl TryFrom<RawSchema> for Schema {
    type Error = DatasetError;

    fn try_from(raw: RawSchema) -> Result<Self> {
        Schema::new(raw.attributes)
    }
}

impl Schema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(DatasetError::EmptySchema);
        }
        let mut names = BTreeSet::new();
        for attr in &attributes {
            if !valid_label(&attr.name) {
                return Err(DatasetError::InvalidLabel(attr.name.clone()));
            }
            if !names.insert(attr.name.as_str()) {
                return Err(DatasetError::DuplicateAttribute(attr.name.clone()));
            }
            if attr.levels.len() < 2 {
                return Err(DatasetError::TooFewLevels(attr.name.clone()));
            }
            let mut seen = BTreeSet::new();
            for level in &attr.levels {
                if !valid_label(level) {
                    return Err(DatasetError::InvalidLabel(level.clone()));
                }
                if !seen.insert(level.as_str()) {
                    return Err(DatasetError::DuplicateLevel {
                        attribute: attr.name.clone(),
                        level: level.clone(),
                    });
                }
            }
        }
        let cards: Vec<u64> = attributes.iter().map(|a| a.levels.len() as u64).collect();
        let cells = cards
            .iter()
            .try_fold(1u64, |acc, &k| acc.checked_mul(k))
            .ok_or(DatasetError::CellCountOverflow)?;
        let mut strides = vec![1u64; cards.len()];
        for j in (0..cards.len().saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * cards[j + 1];
        }
        Ok(Self {
            attributes,
            strides,
            cells,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut s = String::new();
        File::open(path)?.read_to_string(&mut s)?;
        Self::from_json_str(&s)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, j: usize) -> &Attribute {
        &self.attributes[j]
    }

    /// Number of attributes `p`.
    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn cardinality(&self, j: usize) -> usize {
        self.attributes[j].levels.len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.attributes.iter().map(Attribute::cardinality).collect()
    }

    pub fn max_cardinality(&self) -> usize {
        self.attributes.iter().map(Attribute::cardinality).max().unwrap_or(0)
    }

    /// Number of cells `N` in the full cross-tabulation.
    pub fn cell_count(&self) -> u64 {
        self.cells
    }

    /// Mixed-radix strides of the full cross-tabulation.
    pub fn strides(&self) -> &[u64] {
        &self.strides
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn level_index(&self, j: usize, label: &str) -> Option<u32> {
        self.attributes[j]
            .levels
            .iter()
            .position(|l| l == label)
            .map(|i| i as u32)
    }

    pub fn names(&self) -> Vec<&str> {
        self.attributes.iter().map(|a| a.name.as_str()).collect()
    }

    /// Full-table cell index of a record.
    pub fn cell_index(&self, record: &[u32]) -> u64 {
        record
            .iter()
            .zip(&self.strides)
            .map(|(&l, &s)| u64::from(l) * s)
            .sum()
    }

    /// Inverse of [`Schema::cell_index`].
    pub fn decode_cell(&self, mut index: u64, out: &mut [u32]) {
        for (j, &s) in self.strides.iter().enumerate() {
            out[j] = (index / s) as u32;
            index %= s;
        }
    }
}

/// Where a CSV loader gets its schema from.
#[derive(Debug, Clone)]
pub enum SchemaSource {
    Fixed(Arc<Schema>),
    /// Levels are the lexicographically sorted distinct values of each column.
    Infer,
}

/// `n` records over `p` categorical attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoricalDataset {
    schema: Arc<Schema>,
    levels: Vec<u32>,
    n: usize,
}

impl CategoricalDataset {
    pub fn new(schema: Arc<Schema>, records: Vec<Vec<u32>>) -> Result<Self> {
        let p = schema.len();
        let mut levels = Vec::with_capacity(records.len() * p);
        for r in &records {
            if r.len() != p {
                return Err(DatasetError::RecordWidth {
                    expected: p,
                    found: r.len(),
                });
            }
            levels.extend_from_slice(r);
        }
        Self::from_flat(schema, levels)
    }

    /// Builds a dataset from row-major level indices.
    pub fn from_flat(schema: Arc<Schema>, levels: Vec<u32>) -> Result<Self> {
        let p = schema.len();
        if !levels.len().is_multiple_of(p) {
            return Err(DatasetError::RecordWidth {
                expected: p,
                found: levels.len() % p,
            });
        }
        let cards = schema.cardinalities();
        for (i, row) in levels.chunks_exact(p).enumerate() {
            for (j, (&l, &k)) in row.iter().zip(&cards).enumerate() {
                if l as usize >= k {
                    return Err(DatasetError::LevelOutOfRange {
                        record: i,
                        attribute: j,
                        level: l,
                    });
                }
            }
        }
        let n = levels.len() / p;
        Ok(Self { schema, levels, n })
    }

    /// Emits `counts[c]` records for each full-table cell `c`, in cell order.
    pub fn from_cell_counts(schema: Arc<Schema>, counts: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let p = schema.len();
        let mut levels = Vec::new();
        let mut buf = vec![0u32; p];
        for (cell, count) in counts {
            if count == 0 {
                continue;
            }
            schema.decode_cell(cell, &mut buf);
            for _ in 0..count {
                levels.extend_from_slice(&buf);
            }
        }
        let n = levels.len() / p;
        Self { schema, levels, n }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn record(&self, i: usize) -> &[u32] {
        let p = self.schema.len();
        &self.levels[i * p..(i + 1) * p]
    }

    pub fn value(&self, i: usize, j: usize) -> u32 {
        self.levels[i * self.schema.len() + j]
    }

    pub fn records(&self) -> std::slice::ChunksExact<'_, u32> {
        self.levels.chunks_exact(self.schema.len())
    }

    pub fn flat_levels(&self) -> &[u32] {
        &self.levels
    }

    /// Full-table cell index of every record.
    pub fn cell_indices(&self) -> Vec<u64> {
        self.records().map(|r| self.schema.cell_index(r)).collect()
    }

    pub fn ensure_same_schema(&self, other: &CategoricalDataset) -> Result<()> {
        if self.schema == other.schema {
            Ok(())
        } else {
            Err(DatasetError::SchemaMismatch)
        }
    }

    pub fn load_csv(path: impl AsRef<Path>, source: SchemaSource) -> Result<Self> {
        Self::read_csv(BufReader::new(File::open(path)?), source)
    }

    pub fn read_csv<R: Read>(reader: R, source: SchemaSource) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut rows = rdr.records();
        let header = match rows.next() {
            Some(h) => h?,
            None => return Err(DatasetError::EmptyInput),
        };
        let header: Vec<String> = header.iter().map(str::to_owned).collect();
        if header.iter().all(String::is_empty) {
            return Err(DatasetError::EmptyInput);
        }

        let mut raw: Vec<csv::StringRecord> = Vec::new();
        for row in rows {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            if row.len() != header.len() {
                return Err(DatasetError::RaggedRow {
                    line,
                    expected: header.len(),
                    found: row.len(),
                });
            }
            for (field, name) in row.iter().zip(&header) {
                if field.is_empty() {
                    return Err(DatasetError::MissingValue {
                        line,
                        attribute: name.clone(),
                    });
                }
            }
            raw.push(row);
        }

        let schema = match source {
            SchemaSource::Fixed(schema) => schema,
            SchemaSource::Infer => {
                let attributes = header
                    .iter()
                    .enumerate()
                    .map(|(c, name)| {
                        let distinct: BTreeSet<&str> = raw.iter().map(|r| &r[c]).collect();
                        Attribute::new(name.clone(), distinct)
                    })
                    .collect();
                Arc::new(Schema::new(attributes)?)
            }
        };

        // column c of the file feeds schema attribute column_to_attr[c]
        let mut column_to_attr = Vec::with_capacity(header.len());
        for name in &header {
            let j = schema
                .index_of(name)
                .ok_or_else(|| DatasetError::HeaderMismatch(format!("unexpected column {name:?}")))?;
            column_to_attr.push(j);
        }
        let mut seen = vec![false; schema.len()];
        for &j in &column_to_attr {
            if std::mem::replace(&mut seen[j], true) {
                return Err(DatasetError::HeaderMismatch(format!(
                    "column {:?} appears twice",
                    schema.attribute(j).name
                )));
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(DatasetError::HeaderMismatch(format!(
                "missing column {:?}",
                schema.attribute(j).name
            )));
        }

        let lookup: Vec<HashMap<&str, u32>> = schema
            .attributes()
            .iter()
            .map(|a| {
                a.levels
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (l.as_str(), i as u32))
                    .collect()
            })
            .collect();
        let p = schema.len();
        let mut levels = vec![0u32; raw.len() * p];
        for (i, row) in raw.iter().enumerate() {
            let line = row.position().map_or(0, |p| p.line());
            for (field, &j) in row.iter().zip(&column_to_attr) {
                let level = *lookup[j].get(field).ok_or_else(|| DatasetError::UnknownLevel {
                    line,
                    attribute: schema.attribute(j).name.clone(),
                    level: field.to_owned(),
                })?;
                levels[i * p + j] = level;
            }
        }
        Ok(Self {
            n: raw.len(),
            schema,
            levels,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        let schema = &self.schema;
        writeln!(w, "{}", schema.names().join(","))?;
        let mut line = String::new();
        for r in self.records() {
            line.clear();
            for (j, &l) in r.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&schema.attribute(j).levels[l as usize]);
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

/// Cell storage of a contingency table, keyed by linear cell index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellCounts {
    Dense(Vec<u64>),
    Sparse(BTreeMap<u64, u64>),
}

/// Counts over the cross product of a subset of attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    axes: Vec<usize>,
    cardinalities: Vec<usize>,
    strides: Vec<u64>,
    cells: u64,
    counts: CellCounts,
    total: u64,
}

impl ContingencyTable {
    /// Attributes (schema indices) defining the table's axes, in axis order.
    pub fn axes(&self) -> &[usize] {
        &self.axes
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn cell_count(&self) -> u64 {
        self.cells
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &CellCounts {
        &self.counts
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.counts, CellCounts::Dense(_))
    }

    pub fn dense(&self) -> Option<&[u64]> {
        match &self.counts {
            CellCounts::Dense(v) => Some(v),
            CellCounts::Sparse(_) => None,
        }
    }

    /// Linear cell index of a level tuple given in axis order.
    pub fn index_of(&self, levels: &[usize]) -> u64 {
        levels
            .iter()
            .zip(&self.strides)
            .map(|(&l, &s)| l as u64 * s)
            .sum()
    }

    pub fn decode(&self, mut index: u64) -> Vec<usize> {
        self.strides
            .iter()
            .map(|&s| {
                let l = index / s;
                index %= s;
                l as usize
            })
            .collect()
    }

    pub fn get_index(&self, index: u64) -> u64 {
        match &self.counts {
            CellCounts::Dense(v) => v[index as usize],
            CellCounts::Sparse(m) => m.get(&index).copied().unwrap_or(0),
        }
    }

    pub fn get(&self, levels: &[usize]) -> u64 {
        self.get_index(self.index_of(levels))
    }

    /// Non-zero cells in increasing index order.
    pub fn nonzero(&self) -> Vec<(u64, u64)> {
        match &self.counts {
            CellCounts::Dense(v) => v
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (i as u64, c))
                .collect(),
            CellCounts::Sparse(m) => m.iter().filter(|(_, &c)| c > 0).map(|(&i, &c)| (i, c)).collect(),
        }
    }

    pub fn zero_cells(&self) -> u64 {
        match &self.counts {
            CellCounts::Dense(v) => v.iter().filter(|&&c| c == 0).count() as u64,
            CellCounts::Sparse(m) => self.cells - m.values().filter(|&&c| c > 0).count() as u64,
        }
    }

    /// Sums out every axis not listed in `keep` (schema attribute indices).
    pub fn marginalize(&self, keep: &[usize]) -> Result<ContingencyTable> {
        let positions: Vec<usize> = keep
            .iter()
            .map(|a| {
                self.axes
                    .iter()
                    .position(|x| x == a)
                    .ok_or(DatasetError::AttributeOutOfRange(*a))
            })
            .collect::<Result<_>>()?;
        let cards: Vec<usize> = positions.iter().map(|&p| self.cardinalities[p]).collect();
        let mut out = TableAccumulator::new(keep.to_vec(), cards, DENSE_CELL_LIMIT)?;
        for (index, count) in self.nonzero() {
            let levels = self.decode(index);
            let target = positions
                .iter()
                .zip(&out.strides)
                .map(|(&p, &s)| levels[p] as u64 * s)
                .sum();
            out.add(target, count);
        }
        Ok(out.finish())
    }
}

struct TableAccumulator {
    axes: Vec<usize>,
    cardinalities: Vec<usize>,
    strides: Vec<u64>,
    cells: u64,
    counts: CellCounts,
}

impl TableAccumulator {
    fn new(axes: Vec<usize>, cardinalities: Vec<usize>, dense_limit: u64) -> Result<Self> {
        let cells = cardinalities
            .iter()
            .try_fold(1u64, |acc, &k| acc.checked_mul(k as u64))
            .ok_or(DatasetError::CellCountOverflow)?;
        let mut strides = vec![1u64; cardinalities.len()];
        for j in (0..cardinalities.len().saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * cardinalities[j + 1] as u64;
        }
        let counts = if cells <= dense_limit {
            CellCounts::Dense(vec![0; cells as usize])
        } else {
            CellCounts::Sparse(BTreeMap::new())
        };
        Ok(Self {
            axes,
            cardinalities,
            strides,
            cells,
            counts,
        })
    }

    fn add(&mut self, index: u64, count: u64) {
        match &mut self.counts {
            CellCounts::Dense(v) => v[index as usize] += count,
            CellCounts::Sparse(m) => *m.entry(index).or_insert(0) += count,
        }
    }

    fn merge(mut self, other: TableAccumulator) -> Self {
        match (&mut self.counts, other.counts) {
            (CellCounts::Dense(a), CellCounts::Dense(b)) => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
            (CellCounts::Sparse(a), CellCounts::Sparse(b)) => {
                for (k, v) in b {
                    *a.entry(k).or_insert(0) += v;
                }
            }
            _ => unreachable!("accumulators share a storage mode"),
        }
        self
    }

    fn empty_like(&self) -> Self {
        let counts = match &self.counts {
            CellCounts::Dense(v) => CellCounts::Dense(vec![0; v.len()]),
            CellCounts::Sparse(_) => CellCounts::Sparse(BTreeMap::new()),
        };
        Self {
            axes: self.axes.clone(),
            cardinalities: self.cardinalities.clone(),
            strides: self.strides.clone(),
            cells: self.cells,
            counts,
        }
    }

    fn finish(self) -> ContingencyTable {
        let total = match &self.counts {
            CellCounts::Dense(v) => v.iter().sum(),
            CellCounts::Sparse(m) => m.values().sum(),
        };
        ContingencyTable {
            axes: self.axes,
            cardinalities: self.cardinalities,
            strides: self.strides,
            cells: self.cells,
            counts: self.counts,
            total,
        }
    }
}

fn validate_axes(schema: &Schema, attrs: &[usize]) -> Result<()> {
    if attrs.is_empty() {
        return Err(DatasetError::EmptySelection);
    }
    let mut seen = BTreeSet::new();
    for &a in attrs {
        if a >= schema.len() {
            return Err(DatasetError::AttributeOutOfRange(a));
        }
        if !seen.insert(a) {
            return Err(DatasetError::DuplicateAxis(a));
        }
    }
    Ok(())
}

/// Cross-tabulates `data` over `attrs` (axis order as given).
pub fn cross_tabulate(data: &CategoricalDataset, attrs: &[usize]) -> Result<ContingencyTable> {
    cross_tabulate_with_limit(data, attrs, DENSE_CELL_LIMIT)
}

/// As [`cross_tabulate`], storing densely only when the table has at most
/// `dense_limit` cells.
pub fn cross_tabulate_with_limit(
    data: &CategoricalDataset,
    attrs: &[usize],
    dense_limit: u64,
) -> Result<ContingencyTable> {
    let schema = data.schema();
    validate_axes(schema, attrs)?;
    let cards: Vec<usize> = attrs.iter().map(|&a| schema.cardinality(a)).collect();
    let proto = TableAccumulator::new(attrs.to_vec(), cards, dense_limit)?;
    let p = schema.len();
    let strides = proto.strides.clone();
    let acc = data
        .flat_levels()
        .par_chunks(ROW_CHUNK * p)
        .fold(
            || proto.empty_like(),
            |mut acc, chunk| {
                for r in chunk.chunks_exact(p) {
                    let idx = attrs
                        .iter()
                        .zip(&strides)
                        .map(|(&a, &s)| u64::from(r[a]) * s)
                        .sum();
                    acc.add(idx, 1);
                }
                acc
            },
        )
        .reduce(|| proto.empty_like(), TableAccumulator::merge);
    Ok(acc.finish())
}

/// Full cross-tabulation over every attribute in schema order.
pub fn full_table(data: &CategoricalDataset) -> Result<ContingencyTable> {
    let all: Vec<usize> = (0..data.schema().len()).collect();
    cross_tabulate(data, &all)
}

/// One-way table of `attr` over the whole dataset.
pub fn one_way_counts(data: &CategoricalDataset, attr: usize) -> Result<Vec<u64>> {
    if attr >= data.schema().len() {
        return Err(DatasetError::AttributeOutOfRange(attr));
    }
    let mut counts = vec![0u64; data.schema().cardinality(attr)];
    for r in data.records() {
        counts[r[attr] as usize] += 1;
    }
    Ok(counts)
}

/// One-way table of `attr` over the listed rows.
pub fn one_way_counts_in(data: &CategoricalDataset, rows: &[u32], attr: usize) -> Result<Vec<u64>> {
    if attr >= data.schema().len() {
        return Err(DatasetError::AttributeOutOfRange(attr));
    }
    let mut counts = vec![0u64; data.schema().cardinality(attr)];
    for &i in rows {
        counts[data.value(i as usize, attr) as usize] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_schema(p: usize) -> Arc<Schema> {
        let attrs = (0..p).map(|j| Attribute::new(format!("a{j}"), ["0", "1"])).collect();
        Arc::new(Schema::new(attrs).unwrap())
    }

    #[test]
    fn inferred_schema_reads_back() {
        let csv = "answer,flag\nyes,0\nno,1\nno,0\n";
        let d = CategoricalDataset::read_csv(csv.as_bytes(), SchemaSource::Infer).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.schema().cardinalities(), vec![2, 2]);
        // sorted distinct: "no" < "yes"
        assert_eq!(d.record(0), &[1, 0]);
        assert_eq!(d.record(1), &[0, 1]);
    }

    #[test]
    fn unknown_level_rejected_under_fixed_schema() {
        let schema = Arc::new(Schema::new(vec![Attribute::new("voted", ["no", "yes"])]).unwrap());
        let err = CategoricalDataset::read_csv("voted\nyes\nmaybe\n".as_bytes(), SchemaSource::Fixed(schema))
            .unwrap_err();
        assert!(err.to_string().contains("unknown level"), "{err}");
    }

    #[test]
    fn ragged_and_empty_inputs() {
        let err = CategoricalDataset::read_csv("a,b\n0,1\n1\n".as_bytes(), SchemaSource::Infer).unwrap_err();
        assert!(matches!(err, DatasetError::RaggedRow { found: 1, .. }), "{err}");
        let err = CategoricalDataset::read_csv("".as_bytes(), SchemaSource::Infer).unwrap_err();
        assert!(matches!(err, DatasetError::EmptyInput));
        let err = CategoricalDataset::read_csv("a,b\n0,\n1,1\n".as_bytes(), SchemaSource::Infer).unwrap_err();
        assert!(matches!(err, DatasetError::MissingValue { .. }));
    }

    #[test]
    fn header_columns_may_be_permuted() {
        let schema = binary_schema(2);
        let d = CategoricalDataset::read_csv("a1,a0\n1,0\n".as_bytes(), SchemaSource::Fixed(schema.clone())).unwrap();
        assert_eq!(d.record(0), &[0, 1]);
        let err = CategoricalDataset::read_csv("a1,zz\n1,0\n".as_bytes(), SchemaSource::Fixed(schema)).unwrap_err();
        assert!(matches!(err, DatasetError::HeaderMismatch(_)));
    }

    #[test]
    fn schema_validation() {
        assert!(matches!(
            Schema::new(vec![Attribute::new("a", ["0", "1"]), Attribute::new("a", ["0", "1"])]),
            Err(DatasetError::DuplicateAttribute(_))
        ));
        assert!(matches!(
            Schema::new(vec![Attribute::new("a", ["0", "0"])]),
            Err(DatasetError::DuplicateLevel { .. })
        ));
        assert!(matches!(Schema::new(vec![Attribute::new("a", ["0"])]), Err(DatasetError::TooFewLevels(_))));
        assert!(matches!(
            Schema::new(vec![Attribute::new("a", ["x,y", "z"])]),
            Err(DatasetError::InvalidLabel(_))
        ));
        let wide: Vec<Attribute> = (0..70).map(|j| Attribute::new(format!("a{j}"), ["0", "1"])).collect();
        assert!(matches!(Schema::new(wide), Err(DatasetError::CellCountOverflow)));
    }

    #[test]
    fn schema_json_round_trip_validates() {
        let json = r#"{"attributes":[{"name":"voted","levels":["0","1"]},{"name":"age","levels":["18","19","20"]}]}"#;
        let s = Schema::from_json_str(json).unwrap();
        assert_eq!(s.cell_count(), 6);
        assert_eq!(s.strides(), &[3, 1]);
        let again = Schema::from_json_str(&s.to_json_pretty()).unwrap();
        assert_eq!(s, again);
        let bad = r#"{"attributes":[{"name":"voted","levels":["0"]}]}"#;
        assert!(Schema::from_json_str(bad).is_err());
    }

    #[test]
    fn cross_tab_examples() {
        let schema = binary_schema(2);
        let d = CategoricalDataset::new(schema.clone(), vec![vec![0, 0]; 4]).unwrap();
        let t = cross_tabulate(&d, &[0, 1]).unwrap();
        assert_eq!(t.get(&[0, 0]), 4);
        assert_eq!(t.total(), 4);
        assert_eq!(t.nonzero(), vec![(0, 4)]);

        let d = CategoricalDataset::new(schema, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]).unwrap();
        let t = cross_tabulate(&d, &[0, 1]).unwrap();
        assert_eq!(t.dense().unwrap(), &[1, 1, 1, 1]);
        assert!(matches!(cross_tabulate(&d, &[0, 0]), Err(DatasetError::DuplicateAxis(0))));
        assert!(matches!(cross_tabulate(&d, &[]), Err(DatasetError::EmptySelection)));
    }

    #[test]
    fn sparse_storage_matches_dense() {
        let schema = binary_schema(3);
        let rows = vec![vec![0, 1, 1], vec![1, 1, 0], vec![0, 1, 1]];
        let d = CategoricalDataset::new(schema, rows).unwrap();
        let dense = cross_tabulate_with_limit(&d, &[2, 0, 1], 1 << 20).unwrap();
        let sparse = cross_tabulate_with_limit(&d, &[2, 0, 1], 2).unwrap();
        assert!(dense.is_dense() && !sparse.is_dense());
        assert_eq!(dense.nonzero(), sparse.nonzero());
        assert_eq!(dense.zero_cells(), sparse.zero_cells());
        assert_eq!(sparse.get(&[1, 0, 1]), 2);
    }

    #[test]
    fn one_way_examples() {
        let schema = binary_schema(1);
        let d = CategoricalDataset::new(schema, [0, 0, 0, 1, 1, 1].iter().map(|&l| vec![l]).collect()).unwrap();
        assert_eq!(one_way_counts(&d, 0).unwrap(), vec![3, 3]);
        assert_eq!(one_way_counts_in(&d, &[], 0).unwrap(), vec![0, 0]);
        assert_eq!(one_way_counts_in(&d, &[0, 4], 0).unwrap(), vec![1, 1]);
    }

    #[test]
    fn csv_round_trip() {
        let schema = binary_schema(2);
        let d = CategoricalDataset::new(schema.clone(), vec![vec![0, 1], vec![1, 1]]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "a0,a1\n0,1\n1,1\n");
        let back = CategoricalDataset::read_csv(buf.as_slice(), SchemaSource::Fixed(schema)).unwrap();
        assert_eq!(back, d);
    }
}
