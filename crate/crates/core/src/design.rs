//! Tabular data ingestion: column schema, dummy encoding, penalty weights.
//!
//! A factor with `p_k + 1` levels is encoded as `p_k` binary columns; the
//! reference level (first in the schema's level list) is dropped and shows up
//! as an all-zero dummy block. Continuous columns are copied verbatim, never
//! standardized; the `||x_{j,k}||^q` weights play that role.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView2, s};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ColumnKind {
    Continuous,
    Categorical {
        /// First entry is the reference level. Empty until resolved when the
        /// schema file omitted the level list.
        levels: Vec<String>,
        /// True when the levels were inferred from data rather than listed.
        #[serde(default)]
        inferred: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaColumn {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

/// Ordered column description parsed from a schema file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<SchemaColumn>,
}

/// Parses the plain-text schema grammar: one column per line,
/// `name,kind[,level1|level2|...]`, `#` starts a comment line.
pub fn parse_schema(text: &str) -> Result<Schema> {
    let mut columns = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.splitn(3, ',').map(str::trim).collect();
        if parts.len() < 2 {
            return Err(Error::Schema(format!(
                "line {lineno}: expected `name,kind[,levels]`, got `{line}`"
            )));
        }
        let name = parts[0].to_string();
        if name.is_empty() {
            return Err(Error::Schema(format!("line {lineno}: empty column name")));
        }
        if !seen.insert(name.clone()) {
            return Err(Error::Schema(format!(
                "line {lineno}: duplicate column name `{name}`"
            )));
        }
        let kind = match parts[1] {
            "continuous" => {
                if parts.len() == 3 && !parts[2].is_empty() {
                    return Err(Error::Schema(format!(
                        "line {lineno}: continuous column `{name}` cannot list levels"
                    )));
                }
                ColumnKind::Continuous
            }
            "categorical" => {
                let levels: Vec<String> = if parts.len() == 3 && !parts[2].is_empty() {
                    parts[2].split('|').map(|s| s.trim().to_string()).collect()
                } else {
                    Vec::new()
                };
                if !levels.is_empty() {
                    let mut uniq = HashSet::new();
                    for l in &levels {
                        if l.is_empty() {
                            return Err(Error::Schema(format!(
                                "line {lineno}: empty level name in `{name}`"
                            )));
                        }
                        if !uniq.insert(l.clone()) {
                            return Err(Error::Schema(format!(
                                "line {lineno}: duplicate level `{l}` in `{name}`"
                            )));
                        }
                    }
                    if levels.len() < 2 {
                        return Err(Error::Schema(format!(
                            "line {lineno}: categorical `{name}` needs >= 2 levels"
                        )));
                    }
                }
                ColumnKind::Categorical {
                    levels,
                    inferred: false,
                }
            }
            other => {
                return Err(Error::Schema(format!(
                    "line {lineno}: unknown kind `{other}` (expected continuous|categorical)"
                )));
            }
        };
        columns.push(SchemaColumn { name, kind });
    }
    if columns.is_empty() {
        return Err(Error::Schema("no columns".into()));
    }
    Ok(Schema { columns })
}

impl Schema {
    /// Fills in level lists that were omitted from the schema file, using the
    /// lexicographically sorted distinct values observed in `data` (first =
    /// reference). Returns the names of columns whose levels were inferred.
    pub fn resolve_levels(&mut self, data: &Dataset) -> Result<Vec<String>> {
        let mut inferred_names = Vec::new();
        for col in &mut self.columns {
            if let ColumnKind::Categorical { levels, inferred } = &mut col.kind {
                if levels.is_empty() {
                    let idx = data.column_index(&col.name)?;
                    let mut distinct: Vec<String> = data
                        .rows
                        .iter()
                        .map(|r| r[idx].clone())
                        .collect::<HashSet<_>>()
                        .into_iter()
                        .collect();
                    distinct.sort();
                    if distinct.len() < 2 {
                        return Err(Error::Schema(format!(
                            "categorical `{}` has {} distinct value(s) in data; need >= 2",
                            col.name,
                            distinct.len()
                        )));
                    }
                    *levels = distinct;
                    *inferred = true;
                    inferred_names.push(col.name.clone());
                }
            }
        }
        Ok(inferred_names)
    }

    /// Stable digest of the resolved schema, embedded in model files so a
    /// saved model refuses incompatible data descriptions.
    pub fn fingerprint(&self) -> String {
        let mut canon = String::new();
        for c in &self.columns {
            match &c.kind {
                ColumnKind::Continuous => {
                    let _ = writeln!(canon, "{},continuous", c.name);
                }
                ColumnKind::Categorical { levels, .. } => {
                    let _ = writeln!(canon, "{},categorical,{}", c.name, levels.join("|"));
                }
            }
        }
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Raw tabular data: a header row plus string cells.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Dataset {
    pub fn from_reader<R: std::io::Read>(rdr: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(rdr);
        let headers = reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            rows.push(record.iter().map(|c| c.trim().to_string()).collect());
        }
        Ok(Dataset { headers, rows })
    }

    pub fn from_csv_path(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| {
            Error::Data(format!("cannot open data file `{}`: {e}", path.display()))
        })?;
        Self::from_reader(file)
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column `{name}` not found in data header")))
    }

    /// Parses a column as numeric (used for the response).
    pub fn numeric_column(&self, name: &str) -> Result<Array1<f64>> {
        let idx = self.column_index(name)?;
        let mut out = Vec::with_capacity(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            let cell = &row[idx];
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!(
                    "row {}: non-numeric value `{cell}` in column `{name}`",
                    i + 1
                ))
            })?;
            out.push(v);
        }
        Ok(Array1::from(out))
    }

    /// The single header column not named in the schema; used as the default
    /// response column.
    pub fn infer_response(&self, schema: &Schema) -> Result<String> {
        let known: HashSet<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
        let candidates: Vec<&String> = self
            .headers
            .iter()
            .filter(|h| !known.contains(h.as_str()))
            .collect();
        match candidates.as_slice() {
            [one] => Ok((*one).clone()),
            [] => Err(Error::Data(
                "no response column: every data column appears in the schema; pass --response"
                    .into(),
            )),
            many => Err(Error::Data(format!(
                "ambiguous response column (candidates: {}); pass --response",
                many.iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum GroupKind {
    Continuous,
    /// `levels[0]` is the reference; column `cols.start + j` carries level
    /// `levels[j + 1]`.
    Factor { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    pub cols: Range<usize>,
    #[serde(flatten)]
    pub kind: GroupKind,
}

impl Group {
    pub fn len(&self) -> usize {
        self.cols.end - self.cols.start
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn is_factor(&self) -> bool {
        matches!(self.kind, GroupKind::Factor { .. })
    }

    /// Number of levels including the reference (factors only).
    pub fn n_levels(&self) -> usize {
        match &self.kind {
            GroupKind::Factor { levels } => levels.len(),
            GroupKind::Continuous => 0,
        }
    }
}

/// Dummy-encoded numeric design with group structure. Column 0 is the
/// all-ones intercept; groups cover columns `1..p`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: Array2<f64>,
    pub groups: Vec<Group>,
    pub n: usize,
    pub p: usize,
}

impl DesignMatrix {
    pub fn r(&self) -> usize {
        self.groups.len()
    }

    pub fn block(&self, k: usize) -> ArrayView2<'_, f64> {
        let g = &self.groups[k];
        self.x.slice(s![.., g.cols.start..g.cols.end])
    }

    pub fn column_norm(&self, j: usize) -> f64 {
        self.x.column(j).dot(&self.x.column(j)).sqrt()
    }

    /// Human-readable name for a non-intercept column.
    pub fn column_name(&self, j: usize) -> String {
        for g in &self.groups {
            if g.cols.contains(&j) {
                return match &g.kind {
                    GroupKind::Continuous => g.name.clone(),
                    GroupKind::Factor { levels } => {
                        format!("{}={}", g.name, levels[j - g.cols.start + 1])
                    }
                };
            }
        }
        if j == 0 {
            "(intercept)".into()
        } else {
            format!("col{j}")
        }
    }

    /// Decodes the factor level of row `i` in group `k` (tests the all-zero
    /// row => reference rule).
    pub fn decode_level(&self, i: usize, k: usize) -> Result<&str> {
        let g = &self.groups[k];
        let GroupKind::Factor { levels } = &g.kind else {
            return Err(Error::Dimension(format!("group {k} is not a factor")));
        };
        for (j, col) in g.cols.clone().enumerate() {
            if self.x[[i, col]] == 1.0 {
                return Ok(&levels[j + 1]);
            }
        }
        Ok(&levels[0])
    }

    /// Plain row subset; the group structure is copied unchanged.
    pub fn subset_rows(&self, rows: &[usize]) -> DesignMatrix {
        let mut x = Array2::zeros((rows.len(), self.p));
        for (out_i, &i) in rows.iter().enumerate() {
            x.row_mut(out_i).assign(&self.x.row(i));
        }
        DesignMatrix {
            x,
            groups: self.groups.clone(),
            n: rows.len(),
            p: self.p,
        }
    }
}

/// Record of what `prune_for_training` removed.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DropReport {
    /// Factors removed because the training rows realize at most one level.
    pub dropped_factors: Vec<String>,
    /// (factor, level) pairs removed because the level is unseen in training.
    pub dropped_levels: Vec<(String, String)>,
}

impl DropReport {
    pub fn is_empty(&self) -> bool {
        self.dropped_factors.is_empty() && self.dropped_levels.is_empty()
    }
}

impl DesignMatrix {
    /// Rebuilds the design keeping only factor levels realized in
    /// `train_rows`. Factors that degenerate to a single realized level are
    /// removed entirely. Returns the pruned design (over all n rows), the
    /// drop report, and a per-row flag telling whether the row only uses
    /// retained levels (rows using a dropped level must be excluded from any
    /// test split).
    pub fn prune_for_training(&self, train_rows: &[usize]) -> (DesignMatrix, DropReport, Vec<bool>) {
        let mut report = DropReport::default();
        let mut row_ok = vec![true; self.n];
        let mut keep_cols: Vec<usize> = vec![0];
        let mut groups: Vec<Group> = Vec::new();
        let mut next_col = 1usize;

        for g in &self.groups {
            match &g.kind {
                GroupKind::Continuous => {
                    keep_cols.push(g.cols.start);
                    groups.push(Group {
                        name: g.name.clone(),
                        cols: next_col..next_col + 1,
                        kind: GroupKind::Continuous,
                    });
                    next_col += 1;
                }
                GroupKind::Factor { levels } => {
                    // realized[0] = reference seen (an all-zero block row)
                    let mut realized = vec![false; levels.len()];
                    for &i in train_rows {
                        let mut any = false;
                        for (j, col) in g.cols.clone().enumerate() {
                            if self.x[[i, col]] == 1.0 {
                                realized[j + 1] = true;
                                any = true;
                            }
                        }
                        if !any {
                            realized[0] = true;
                        }
                    }
                    let n_realized = realized.iter().filter(|&&b| b).count();
                    if n_realized <= 1 {
                        report.dropped_factors.push(g.name.clone());
                        // rows using any level of a dropped factor stay valid:
                        // the factor simply leaves the model
                        continue;
                    }
                    // mark rows that use an unrealized level
                    for i in 0..self.n {
                        let mut level = 0usize;
                        for (j, col) in g.cols.clone().enumerate() {
                            if self.x[[i, col]] == 1.0 {
                                level = j + 1;
                            }
                        }
                        if !realized[level] {
                            row_ok[i] = false;
                        }
                    }
                    let mut new_levels: Vec<String> = Vec::new();
                    // keep the original reference first when realized;
                    // otherwise the first realized level becomes the reference
                    let mut level_order: Vec<usize> = Vec::new();
                    if realized[0] {
                        level_order.push(0);
                    }
                    for j in 1..levels.len() {
                        if realized[j] {
                            level_order.push(j);
                        } else {
                            report
                                .dropped_levels
                                .push((g.name.clone(), levels[j].clone()));
                        }
                    }
                    if !realized[0] {
                        report
                            .dropped_levels
                            .push((g.name.clone(), levels[0].clone()));
                    }
                    for &j in &level_order {
                        new_levels.push(levels[j].clone());
                    }
                    // non-reference retained levels each keep their column;
                    // if the reference changed, the new reference's column is
                    // dropped (its rows become all-zero in the block)
                    let kept_dummies: Vec<usize> = level_order[1..]
                        .iter()
                        .map(|&j| g.cols.start + j - 1)
                        .collect();
                    let p_k = kept_dummies.len();
                    keep_cols.extend(&kept_dummies);
                    groups.push(Group {
                        name: g.name.clone(),
                        cols: next_col..next_col + p_k,
                        kind: GroupKind::Factor { levels: new_levels },
                    });
                    next_col += p_k;
                }
            }
        }

        let p = keep_cols.len();
        let mut x = Array2::zeros((self.n, p));
        for (out_j, &j) in keep_cols.iter().enumerate() {
            x.column_mut(out_j).assign(&self.x.column(j));
        }
        (
            DesignMatrix {
                x,
                groups,
                n: self.n,
                p,
            },
            report,
            row_ok,
        )
    }
}

/// Dummy-encodes `data` against a fully resolved schema.
pub fn encode(data: &Dataset, schema: &Schema) -> Result<DesignMatrix> {
    let n = data.rows.len();
    if n == 0 {
        return Err(Error::Data("no data rows".into()));
    }
    // resolve column indices and count p
    let mut p = 1usize;
    let mut groups = Vec::with_capacity(schema.columns.len());
    let mut col_indices = Vec::with_capacity(schema.columns.len());
    for col in &schema.columns {
        col_indices.push(data.column_index(&col.name)?);
        match &col.kind {
            ColumnKind::Continuous => {
                groups.push(Group {
                    name: col.name.clone(),
                    cols: p..p + 1,
                    kind: GroupKind::Continuous,
                });
                p += 1;
            }
            ColumnKind::Categorical { levels, .. } => {
                if levels.len() < 2 {
                    return Err(Error::Schema(format!(
                        "categorical `{}` has unresolved or too few levels",
                        col.name
                    )));
                }
                let p_k = levels.len() - 1;
                groups.push(Group {
                    name: col.name.clone(),
                    cols: p..p + p_k,
                    kind: GroupKind::Factor {
                        levels: levels.clone(),
                    },
                });
                p += p_k;
            }
        }
    }

    let mut x = Array2::zeros((n, p));
    x.column_mut(0).fill(1.0);
    for (i, row) in data.rows.iter().enumerate() {
        for (g, (col, &data_idx)) in schema.columns.iter().zip(&col_indices).enumerate() {
            let cell = &row[data_idx];
            if cell.is_empty() {
                return Err(Error::Data(format!(
                    "row {}: missing value in column `{}`",
                    i + 1,
                    col.name
                )));
            }
            let group = &groups[g];
            match &col.kind {
                ColumnKind::Continuous => {
                    let v: f64 = cell.parse().map_err(|_| {
                        Error::Data(format!(
                            "row {}: non-numeric value `{cell}` in continuous column `{}`",
                            i + 1,
                            col.name
                        ))
                    })?;
                    x[[i, group.cols.start]] = v;
                }
                ColumnKind::Categorical { levels, .. } => {
                    let pos = levels.iter().position(|l| l == cell).ok_or_else(|| {
                        Error::Data(format!(
                            "row {}: unseen level `{cell}` in column `{}`",
                            i + 1,
                            col.name
                        ))
                    })?;
                    if pos > 0 {
                        x[[i, group.cols.start + pos - 1]] = 1.0;
                    }
                }
            }
        }
    }

    Ok(DesignMatrix { x, groups, n, p })
}

/// Diagonal penalty weights, one strictly positive entry per non-intercept
/// column. Indexed by design column `j` via `w[j - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub w: Vec<f64>,
    pub q: f64,
}

impl WeightMatrix {
    pub fn for_column(&self, j: usize) -> f64 {
        self.w[j - 1]
    }
}

/// Default weights `w_{j,k} = ||x_{j,k}||^q`; q = 1 by default, [1, 2] is the
/// optimal range under an orthogonal design.
pub fn default_weights(design: &DesignMatrix, q: f64) -> Result<WeightMatrix> {
    let mut w = Vec::with_capacity(design.p - 1);
    for j in 1..design.p {
        let norm = design.column_norm(j);
        if norm == 0.0 {
            return Err(Error::Data(format!(
                "all-zero column `{}`",
                design.column_name(j)
            )));
        }
        w.push(norm.powf(q));
    }
    Ok(WeightMatrix { w, q })
}

/// Column-norm extremes of the design: x_M, x_m, and the weight-relative
/// maximum x_W = max ||x_{j,k}|| / w_{j,k}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSummary {
    pub x_max: f64,
    pub x_min: f64,
    pub x_w: f64,
}

pub fn norm_summary(design: &DesignMatrix, weights: &WeightMatrix) -> NormSummary {
    let mut x_max = 0.0_f64;
    let mut x_min = f64::INFINITY;
    let mut x_w = 0.0_f64;
    for j in 1..design.p {
        let norm = design.column_norm(j);
        x_max = x_max.max(norm);
        x_min = x_min.min(norm);
        x_w = x_w.max(norm / weights.for_column(j));
    }
    NormSummary { x_max, x_min, x_w }
}
