use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::rng::{derive_seed, rng_from_seed, Role};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Binary,
    /// Indicator column for one level of the named categorical predictor.
    Dummy(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    pub fn continuous(name: impl Into<String>) -> Self {
        Self::new(name, ColumnKind::Continuous)
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self::new(name, ColumnKind::Binary)
    }

    pub fn dummy(name: impl Into<String>, categorical: impl Into<String>) -> Self {
        Self::new(name, ColumnKind::Dummy(categorical.into()))
    }
}

/// Fairness subgroup membership, one code per row indexing `levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgroups {
    pub column: String,
    pub levels: Vec<String>,
    pub codes: Vec<u32>,
}

impl Subgroups {
    pub fn from_labels(column: impl Into<String>, labels: &[String]) -> Self {
        let levels: Vec<String> = labels
            .iter()
            .cloned()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<&str, u32> = levels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i as u32))
            .collect();
        let codes = labels.iter().map(|l| index[l.as_str()]).collect();
        Self {
            column: column.into(),
            levels,
            codes,
        }
    }

    fn select(&self, idx: &[usize]) -> Self {
        Self {
            column: self.column.clone(),
            levels: self.levels.clone(),
            codes: idx.iter().map(|&i| self.codes[i]).collect(),
        }
    }
}

/// Predictor values of a population: `n_rows × P` design columns plus
/// optional subgroup labels. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseMix {
    columns: Vec<Column>,
    values: Matrix,
    subgroups: Option<Subgroups>,
}

impl CaseMix {
    /// Validates column kinds against the values: finite entries, 0/1
    /// binary and dummy columns, mutually exclusive dummies per categorical.
    pub fn new(columns: Vec<Column>, values: Matrix, subgroups: Option<Subgroups>) -> Result<Self> {
        if columns.len() != values.cols() {
            return Err(Error::Schema(format!(
                "{} columns declared but rows have {} entries",
                columns.len(),
                values.cols()
            )));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        if let Some(sg) = &subgroups {
            if sg.codes.len() != values.rows() {
                return Err(Error::Schema(format!(
                    "subgroup column `{}` has {} labels for {} rows",
                    sg.column,
                    sg.codes.len(),
                    values.rows()
                )));
            }
        }
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (j, c) in columns.iter().enumerate() {
            if let ColumnKind::Dummy(g) = &c.kind {
                groups.entry(g.as_str()).or_default().push(j);
            }
        }
        for i in 0..values.rows() {
            let row = values.row(i);
            for (j, c) in columns.iter().enumerate() {
                let v = row[j];
                if !v.is_finite() {
                    return Err(Error::InvalidValue {
                        row: i + 1,
                        column: c.name.clone(),
                        message: format!("non-finite value {v}"),
                    });
                }
                if c.kind != ColumnKind::Continuous && v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidValue {
                        row: i + 1,
                        column: c.name.clone(),
                        message: format!("expected 0 or 1, found {v}"),
                    });
                }
            }
            for (g, cols) in &groups {
                let on: f64 = cols.iter().map(|&j| row[j]).sum();
                if on > 1.0 {
                    return Err(Error::InvalidValue {
                        row: i + 1,
                        column: columns[cols[0]].name.clone(),
                        message: format!("more than one dummy of `{g}` set"),
                    });
                }
            }
        }
        Ok(Self {
            columns,
            values,
            subgroups,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn subgroups(&self) -> Option<&Subgroups> {
        self.subgroups.as_ref()
    }

    pub fn with_subgroups(mut self, subgroups: Subgroups) -> Result<Self> {
        if subgroups.codes.len() != self.n_rows() {
            return Err(Error::Schema("subgroup labels do not match row count".into()));
        }
        self.subgroups = Some(subgroups);
        Ok(self)
    }

    /// Rows at `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            columns: self.columns.clone(),
            values: self.values.select_rows(idx),
            subgroups: self.subgroups.as_ref().map(|s| s.select(idx)),
        }
    }

    /// Appends `k` independent standard-normal columns `noise_1..noise_k`.
    pub fn with_noise_columns(&self, k: usize, seed: u64) -> Result<Self> {
        use rand_distr::{Distribution, StandardNormal};
        let extra: Vec<Vec<f64>> = (0..k)
            .map(|j| {
                let mut rng = rng_from_seed(derive_seed(seed, j as u64, Role::Noise));
                (0..self.n_rows())
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect()
            })
            .collect();
        let mut columns = self.columns.clone();
        columns.extend((1..=k).map(|j| Column::continuous(format!("noise_{j}"))));
        Self::new(
            columns,
            self.values.append_columns(&extra),
            self.subgroups.clone(),
        )
    }

    /// Splits the rows once into two disjoint sets: `first_rows` randomly
    /// chosen rows (kept in original order) and the remainder.
    pub fn split(&self, first_rows: usize, seed: u64) -> Result<(Self, Self)> {
        if first_rows > self.n_rows() {
            return Err(Error::InvalidArgument(format!(
                "cannot reserve {first_rows} rows from a case-mix of {}",
                self.n_rows()
            )));
        }
        let mut idx: Vec<usize> = (0..self.n_rows()).collect();
        let mut rng = rng_from_seed(derive_seed(seed, 0, Role::Split));
        idx.shuffle(&mut rng);
        let (a, b) = idx.split_at_mut(first_rows);
        a.sort_unstable();
        b.sort_unstable();
        Ok((self.select_rows(a), self.select_rows(b)))
    }
}

/// Reads a CSV case-mix. Only the declared schema columns are kept (other
/// columns in the file are ignored); `subgroup` names a column whose values
/// are read as labels.
pub fn ingest_casemix(
    file_path: impl AsRef<Path>,
    schema: &[Column],
    subgroup: Option<&str>,
) -> Result<CaseMix> {
    let file = std::fs::File::open(file_path.as_ref())?;
    read_casemix(file, schema, subgroup)
}

pub fn read_casemix<R: Read>(reader: R, schema: &[Column], subgroup: Option<&str>) -> Result<CaseMix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = Vec::with_capacity(schema.len());
    for c in schema {
        idx.push(position(&c.name).ok_or_else(|| {
            Error::Schema(format!("column `{}` not found in file header", c.name))
        })?);
    }
    let sg_idx = match subgroup {
        Some(name) => Some(position(name).ok_or_else(|| {
            Error::Schema(format!("subgroup column `{name}` not found in file header"))
        })?),
        None => None,
    };

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0usize;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (c, &j) in schema.iter().zip(&idx) {
            let cell = record.get(j).unwrap_or("");
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                return Err(Error::MissingValue {
                    row,
                    column: c.name.clone(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: c.name.clone(),
                message: format!("`{cell}` is not a number"),
            })?;
            data.push(v);
        }
        if let Some(j) = sg_idx {
            let cell = record.get(j).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::MissingValue {
                    row,
                    column: subgroup.unwrap_or_default().to_string(),
                });
            }
            labels.push(cell.to_string());
        }
        n += 1;
    }
    let subgroups = subgroup.map(|name| Subgroups::from_labels(name, &labels));
    CaseMix::new(schema.to_vec(), Matrix::new(n, schema.len(), data), subgroups)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema3() -> Vec<Column> {
        vec![
            Column::continuous("a"),
            Column::continuous("b"),
            Column::continuous("c"),
        ]
    }

    #[test]
    fn reads_plain_continuous_file() {
        let csv = "a,b,c\n1,2,3\n4,5,6\n7,8,9\n1.5,2.5,3.5\n0,0,0\n";
        let cm = read_casemix(csv.as_bytes(), &schema3(), None).unwrap();
        assert_eq!(cm.n_cols(), 3);
        assert_eq!(cm.n_rows(), 5);
        assert_eq!(cm.row(3), &[1.5, 2.5, 3.5]);
    }

    #[test]
    fn binary_column_rejects_fraction_with_location() {
        let csv = "x,flag\n1,0\n2,0.5\n";
        let schema = vec![Column::continuous("x"), Column::binary("flag")];
        match read_casemix(csv.as_bytes(), &schema, None) {
            Err(Error::InvalidValue { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "flag");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_parse_and_missing_value_errors() {
        let schema = vec![Column::continuous("x"), Column::continuous("y")];
        assert!(matches!(
            read_casemix("x\n1\n".as_bytes(), &schema, None),
            Err(Error::Schema(_))
        ));
        match read_casemix("x,y\n1,2\n3,abc\n".as_bytes(), &schema, None) {
            Err(Error::Parse { row: 2, column, .. }) => assert_eq!(column, "y"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            read_casemix("x,y\n1,\n".as_bytes(), &schema, None),
            Err(Error::MissingValue { row: 1, .. })
        ));
    }

    #[test]
    fn dummies_must_be_exclusive() {
        let schema = vec![Column::dummy("h1", "hist"), Column::dummy("h2", "hist")];
        assert!(read_casemix("h1,h2\n1,0\n0,1\n0,0\n".as_bytes(), &schema, None).is_ok());
        assert!(read_casemix("h1,h2\n1,1\n".as_bytes(), &schema, None).is_err());
    }

    #[test]
    fn subgroup_labels_are_read_separately() {
        let csv = "x,eth\n1,b\n2,a\n3,b\n";
        let cm = read_casemix(csv.as_bytes(), &[Column::continuous("x")], Some("eth")).unwrap();
        let sg = cm.subgroups().unwrap();
        assert_eq!(sg.levels, vec!["a", "b"]);
        assert_eq!(sg.codes, vec![1, 0, 1]);
        assert_eq!(cm.n_cols(), 1);
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let cm = CaseMix::new(vec![Column::continuous("id")], Matrix::from_rows(&rows), None).unwrap();
        let (a, b) = cm.split(30, 5).unwrap();
        assert_eq!(a.n_rows(), 30);
        assert_eq!(b.n_rows(), 70);
        let mut all: Vec<f64> = a.values().data().iter().chain(b.values().data()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..100).map(|i| i as f64).collect::<Vec<_>>());
    }
}
