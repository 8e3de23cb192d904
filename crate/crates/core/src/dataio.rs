//! Censored datasets: validation, CSV loading and per-row censoring partitions.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::Scalar;

/// Status code of an observed entry.
pub const OBSERVED: i8 = 0;
/// Status code of a right-censored entry (recorded at the upper bound).
pub const RIGHT: i8 = 1;
/// Status code of a left-censored entry (recorded at the lower bound).
pub const LEFT: i8 = -1;

/// Responses with per-entry censoring status, column bounds and predictors.
///
/// Censored entries are stored at the bound they were censored at. The
/// design matrix with a leading column of ones is built once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoredDataset<F> {
    y: Array2<F>,
    status: Array2<i8>,
    lower: Array1<F>,
    upper: Array1<F>,
    x: Array2<F>,
    design: Array2<F>,
    column_names: Option<Vec<String>>,
    predictor_names: Option<Vec<String>>,
}

impl<F: Scalar> CensoredDataset<F> {
    /// Build from explicit status codes, checking every invariant.
    pub fn new(
        y: Array2<F>,
        status: Array2<i8>,
        lower: Array1<F>,
        upper: Array1<F>,
        x: Array2<F>,
    ) -> Result<Self> {
        let (n, p) = y.dim();
        if n == 0 || p == 0 || x.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "need n, p, q >= 1 (got n={}, p={}, q={})",
                n,
                p,
                x.ncols()
            )));
        }
        if status.dim() != (n, p) || x.nrows() != n || lower.len() != p || upper.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "responses {}x{}, status {}x{}, predictors {}x{}, bounds {}/{}",
                n,
                p,
                status.nrows(),
                status.ncols(),
                x.nrows(),
                x.ncols(),
                lower.len(),
                upper.len()
            )));
        }
        for k in 0..p {
            if !(lower[k] < upper[k]) || lower[k].is_nan() || upper[k].is_nan() {
                return Err(Error::InvalidBounds {
                    column: k,
                    lower: lower[k].as_f64(),
                    upper: upper[k].as_f64(),
                });
            }
        }
        for ((i, j), v) in x.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, column: j });
            }
        }
        for k in 0..p {
            let mut observed = 0usize;
            for i in 0..n {
                let v = y[[i, k]];
                let code = status[[i, k]];
                let ok = match code {
                    OBSERVED => {
                        if !v.is_finite() {
                            return Err(Error::NonFinite { row: i, column: k });
                        }
                        observed += 1;
                        v >= lower[k] && v <= upper[k]
                    }
                    RIGHT => v == upper[k] && v.is_finite(),
                    LEFT => v == lower[k] && v.is_finite(),
                    _ => false,
                };
                if !ok {
                    return Err(Error::InconsistentStatus {
                        row: i,
                        column: k,
                        code,
                    });
                }
            }
            if observed == 0 {
                return Err(Error::FullyCensoredColumn(k));
            }
        }
        let q = x.ncols();
        let mut design = Array2::<F>::ones((n, q + 1));
        design.slice_mut(s![.., 1..]).assign(&x);
        Ok(Self {
            y,
            status,
            lower,
            upper,
            x,
            design,
            column_names: None,
            predictor_names: None,
        })
    }

    /// Build from raw recorded responses: values at or beyond a bound are
    /// flagged censored and clamped to it.
    pub fn from_raw(
        raw: Array2<F>,
        lower: Array1<F>,
        upper: Array1<F>,
        x: Array2<F>,
    ) -> Result<Self> {
        let (n, p) = raw.dim();
        if lower.len() != p || upper.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "{} response columns but {}/{} bounds",
                p,
                lower.len(),
                upper.len()
            )));
        }
        let mut y = raw;
        let mut status = Array2::<i8>::zeros((n, p));
        for i in 0..n {
            for k in 0..p {
                let v = y[[i, k]];
                if v.is_nan() {
                    return Err(Error::NonFinite { row: i, column: k });
                }
                if v >= upper[k] {
                    status[[i, k]] = RIGHT;
                    y[[i, k]] = upper[k];
                } else if v <= lower[k] {
                    status[[i, k]] = LEFT;
                    y[[i, k]] = lower[k];
                }
            }
        }
        Self::new(y, status, lower, upper, x)
    }

    pub fn with_names(
        mut self,
        column_names: Option<Vec<String>>,
        predictor_names: Option<Vec<String>>,
    ) -> Self {
        if column_names.as_ref().map_or(true, |c| c.len() == self.p()) {
            self.column_names = column_names;
        }
        if predictor_names.as_ref().map_or(true, |c| c.len() == self.q()) {
            self.predictor_names = predictor_names;
        }
        self
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn q(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> ArrayView2<'_, F> {
        self.y.view()
    }

    pub fn status(&self) -> ArrayView2<'_, i8> {
        self.status.view()
    }

    pub fn lower(&self) -> ArrayView1<'_, F> {
        self.lower.view()
    }

    pub fn upper(&self) -> ArrayView1<'_, F> {
        self.upper.view()
    }

    /// Predictors without the intercept column (`n x q`).
    pub fn x(&self) -> ArrayView2<'_, F> {
        self.x.view()
    }

    /// Design matrix `[1, X]` (`n x (q+1)`).
    pub fn design(&self) -> ArrayView2<'_, F> {
        self.design.view()
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    pub fn predictor_names(&self) -> Option<&[String]> {
        self.predictor_names.as_deref()
    }

    pub fn has_censoring(&self) -> bool {
        self.status.iter().any(|&s| s != OBSERVED)
    }

    pub fn censored_count(&self) -> usize {
        self.status.iter().filter(|&&s| s != OBSERVED).count()
    }

    pub fn partition(&self, row: usize) -> Result<CensorPartition> {
        censor_partition(self, row)
    }

    /// The same values with every entry treated as observed, so censored
    /// entries are taken at their bound.
    pub fn clamped(&self) -> Self {
        let mut out = self.clone();
        out.status.fill(OBSERVED);
        out
    }

    /// Reorder response columns (and their bounds and names).
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        let p = self.p();
        let mut seen = vec![false; p];
        if perm.len() != p || perm.iter().any(|&k| k >= p || std::mem::replace(&mut seen[k], true)) {
            return Err(Error::InvalidArgument("not a permutation of the columns".into()));
        }
        let y = Array2::from_shape_fn((self.n(), p), |(i, k)| self.y[[i, perm[k]]]);
        let status = Array2::from_shape_fn((self.n(), p), |(i, k)| self.status[[i, perm[k]]]);
        let lower = Array1::from_shape_fn(p, |k| self.lower[perm[k]]);
        let upper = Array1::from_shape_fn(p, |k| self.upper[perm[k]]);
        let names = self
            .column_names
            .as_ref()
            .map(|c| perm.iter().map(|&k| c[k].clone()).collect());
        Ok(Self::new(y, status, lower, upper, self.x.clone())?
            .with_names(names, self.predictor_names.clone()))
    }
}

/// Index sets of one row: observed, left-censored and right-censored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CensorPartition {
    pub observed: Vec<usize>,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl CensorPartition {
    pub fn from_status(codes: &[i8]) -> Self {
        let mut part = Self::default();
        for (k, &c) in codes.iter().enumerate() {
            match c {
                LEFT => part.left.push(k),
                RIGHT => part.right.push(k),
                _ => part.observed.push(k),
            }
        }
        part
    }

    /// Censored indices (left and right) in ascending order.
    pub fn censored(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.left.iter().chain(self.right.iter()).copied().collect();
        c.sort_unstable();
        c
    }

    pub fn n_censored(&self) -> usize {
        self.left.len() + self.right.len()
    }
}

pub fn censor_partition<F: Scalar>(dataset: &CensoredDataset<F>, row: usize) -> Result<CensorPartition> {
    if row >= dataset.n() {
        return Err(Error::InvalidArgument(format!(
            "row {} out of range for {} rows",
            row,
            dataset.n()
        )));
    }
    let codes: Vec<i8> = dataset.status.row(row).to_vec();
    Ok(CensorPartition::from_status(&codes))
}

/// A bound given once for every column or column by column.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundSpec {
    Global(f64),
    PerColumn(Vec<f64>),
}

impl BoundSpec {
    fn expand(&self, p: usize, which: &str) -> Result<Vec<f64>> {
        match self {
            BoundSpec::Global(v) => Ok(vec![*v; p]),
            BoundSpec::PerColumn(v) if v.len() == p => Ok(v.clone()),
            BoundSpec::PerColumn(v) => Err(Error::DimensionMismatch(format!(
                "{} {} bounds for {} response columns",
                v.len(),
                which,
                p
            ))),
        }
    }

    /// Read per-column bounds from a file of numbers separated by commas,
    /// whitespace or newlines. `inf`/`-inf` are accepted.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut out = Vec::new();
        for tok in text.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok.parse().map_err(|_| Error::NonNumeric {
                row: 0,
                column: out.len(),
                token: tok.to_string(),
            })?;
            out.push(v);
        }
        if out.is_empty() {
            return Err(Error::EmptyFile(path.to_path_buf()));
        }
        Ok(BoundSpec::PerColumn(out))
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    if header.iter().all(|h| h.is_empty()) || rows.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(table_check(Table { header, rows }, path)?)
}

fn table_check(t: Table, path: &Path) -> Result<Table> {
    for (i, r) in t.rows.iter().enumerate() {
        if r.len() != t.header.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                i + 1,
                r.len(),
                t.header.len()
            )));
        }
    }
    Ok(t)
}

/// Load responses and predictors from CSV files with header rows.
///
/// Non-numeric predictor columns are treated as categorical and dummy-encoded
/// against their first level in sorted order.
pub fn load_dataset<F: Scalar>(
    response_path: &Path,
    predictor_path: &Path,
    lower: &BoundSpec,
    upper: &BoundSpec,
) -> Result<CensoredDataset<F>> {
    let resp = read_table(response_path)?;
    let pred = read_table(predictor_path)?;
    let (n, p) = (resp.rows.len(), resp.header.len());
    if pred.rows.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} response rows but {} predictor rows",
            n,
            pred.rows.len()
        )));
    }
    let mut raw = Array2::<F>::zeros((n, p));
    for (i, row) in resp.rows.iter().enumerate() {
        for (k, tok) in row.iter().enumerate() {
            let v: f64 = tok.parse().map_err(|_| Error::NonNumeric {
                row: i,
                column: k,
                token: tok.clone(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumeric {
                    row: i,
                    column: k,
                    token: tok.clone(),
                });
            }
            raw[[i, k]] = F::lit(v);
        }
    }
    let (x, predictor_names) = encode_predictors::<F>(&pred)?;
    let lo = lower.expand(p, "lower")?;
    let hi = upper.expand(p, "upper")?;
    let lower = Array1::from_iter(lo.into_iter().map(F::lit));
    let upper = Array1::from_iter(hi.into_iter().map(F::lit));
    Ok(CensoredDataset::from_raw(raw, lower, upper, x)?
        .with_names(Some(resp.header), Some(predictor_names)))
}

fn encode_predictors<F: Scalar>(t: &Table) -> Result<(Array2<F>, Vec<String>)> {
    let n = t.rows.len();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for (j, name) in t.header.iter().enumerate() {
        let parsed: Option<Vec<f64>> = t.rows.iter().map(|r| r[j].parse::<f64>().ok()).collect();
        match parsed {
            Some(vals) => {
                if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { row: i, column: j });
                }
                columns.push(vals);
                names.push(name.clone());
            }
            None => {
                let levels: BTreeSet<&str> = t.rows.iter().map(|r| r[j].as_str()).collect();
                for level in levels.iter().skip(1) {
                    columns.push(
                        t.rows
                            .iter()
                            .map(|r| if r[j] == *level { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    names.push(format!("{}:{}", name, level));
                }
            }
        }
    }
    if columns.is_empty() {
        return Err(Error::DimensionMismatch(
            "predictor file yields no columns after encoding".into(),
        ));
    }
    let x = Array2::from_shape_fn((n, columns.len()), |(i, j)| F::lit(columns[j][i]));
    Ok((x, names))
}

/// Write responses (censored entries at their bound) and numeric predictors.
pub fn write_dataset<F: Scalar>(
    dataset: &CensoredDataset<F>,
    response_path: &Path,
    predictor_path: &Path,
) -> Result<()> {
    let ynames: Vec<String> = dataset
        .column_names()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| (1..=dataset.p()).map(|k| format!("y{}", k)).collect());
    let xnames: Vec<String> = dataset
        .predictor_names()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| (1..=dataset.q()).map(|k| format!("x{}", k)).collect());
    write_matrix(response_path, &ynames, dataset.y())?;
    write_matrix(predictor_path, &xnames, dataset.x())
}

fn write_matrix<F: Scalar>(path: &Path, header: &[String], m: ArrayView2<F>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{}", v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn no_censoring_gives_zero_status() {
        let ds = CensoredDataset::from_raw(
            array![[1.0, 2.0], [3.0, 4.0]],
            array![0.0, 0.0],
            array![10.0, 10.0],
            array![[1.0], [2.0]],
        )
        .unwrap();
        assert!(ds.status().iter().all(|&s| s == 0));
        assert!(!ds.has_censoring());
        assert_eq!(ds.design().row(1).to_vec(), vec![1.0, 2.0]);
    }

    #[test]
    fn upper_limit_of_detection_flags_right_censoring() {
        let dir = tempfile::tempdir().unwrap();
        let resp = write(dir.path(), "y.csv", "a,b\n31.5,50\n50,22\n12,55\n");
        let pred = write(dir.path(), "x.csv", "z\n0.1\n0.2\n0.3\n");
        let ds: CensoredDataset<f64> = load_dataset(
            &resp,
            &pred,
            &BoundSpec::Global(f64::NEG_INFINITY),
            &BoundSpec::Global(50.0),
        )
        .unwrap();
        assert_eq!(ds.status(), array![[0i8, 1], [1, 0], [0, 1]]);
        assert_eq!(ds.y()[[2, 1]], 50.0);
        assert_eq!(ds.column_names().unwrap(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn fully_censored_column_is_rejected() {
        let r = CensoredDataset::from_raw(
            array![[1.0, 5.0], [2.0, 5.0]],
            array![f64::NEG_INFINITY, f64::NEG_INFINITY],
            array![5.0, 5.0],
            array![[1.0], [2.0]],
        );
        assert!(matches!(r, Err(Error::FullyCensoredColumn(1))));
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let pred = write(dir.path(), "x.csv", "z\n0.1\n0.2\n");
        let na = write(dir.path(), "na.csv", "a\n1\nNA\n");
        let short = write(dir.path(), "short.csv", "a\n1\n");
        let empty = write(dir.path(), "empty.csv", "");
        let g = |v| BoundSpec::Global(v);
        assert!(matches!(
            load_dataset::<f64>(&na, &pred, &g(f64::NEG_INFINITY), &g(50.0)),
            Err(Error::NonNumeric { row: 1, .. })
        ));
        assert!(matches!(
            load_dataset::<f64>(&short, &pred, &g(f64::NEG_INFINITY), &g(50.0)),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            load_dataset::<f64>(&empty, &pred, &g(f64::NEG_INFINITY), &g(50.0)),
            Err(Error::EmptyFile(_))
        ));
        let ok = write(dir.path(), "ok.csv", "a\n1\n2\n");
        assert!(matches!(
            load_dataset::<f64>(&ok, &pred, &g(3.0), &g(3.0)),
            Err(Error::InvalidBounds { .. })
        ));
    }

    #[test]
    fn categorical_predictors_are_dummy_encoded() {
        let dir = tempfile::tempdir().unwrap();
        let resp = write(dir.path(), "y.csv", "a\n1\n2\n3\n4\n");
        let pred = write(dir.path(), "x.csv", "z,f\n0.5,t414\n1.5,normal\n2.5,t1114\n3.5,t414\n");
        let ds: CensoredDataset<f64> = load_dataset(
            &resp,
            &pred,
            &BoundSpec::Global(f64::NEG_INFINITY),
            &BoundSpec::Global(50.0),
        )
        .unwrap();
        // sorted levels: normal (reference), t1114, t414
        assert_eq!(ds.q(), 3);
        assert_eq!(
            ds.predictor_names().unwrap(),
            &["z".to_string(), "f:t1114".to_string(), "f:t414".to_string()]
        );
        assert_eq!(ds.x().column(1).to_vec(), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(ds.x().column(2).to_vec(), vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn partitions() {
        assert_eq!(
            CensorPartition::from_status(&[0, 0, 0]),
            CensorPartition {
                observed: vec![0, 1, 2],
                left: vec![],
                right: vec![]
            }
        );
        let p = CensorPartition::from_status(&[0, 1, -1]);
        assert_eq!((p.observed, p.right, p.left), (vec![0], vec![1], vec![2]));
        let p = CensorPartition::from_status(&[1, 1, 1]);
        assert!(p.observed.is_empty());
        assert_eq!(p.right, vec![0, 1, 2]);
    }

    #[test]
    fn permutation_moves_bounds() {
        let ds = CensoredDataset::from_raw(
            array![[1.0, 5.0], [2.0, 1.0]],
            array![0.0, f64::NEG_INFINITY],
            array![9.0, 5.0],
            array![[1.0], [2.0]],
        )
        .unwrap();
        let pd = ds.permute_columns(&[1, 0]).unwrap();
        assert_eq!(pd.upper().to_vec(), vec![5.0, 9.0]);
        assert_eq!(pd.status()[[0, 0]], RIGHT);
        assert!(ds.permute_columns(&[0, 0]).is_err());
    }

    proptest! {
        #[test]
        fn partition_is_exhaustive_and_disjoint(codes in prop::collection::vec(-1i8..=1, 1..40)) {
            let part = CensorPartition::from_status(&codes);
            let mut all: Vec<usize> = part.observed.iter()
                .chain(part.left.iter()).chain(part.right.iter()).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..codes.len()).collect::<Vec<_>>());
            for &k in &part.left { prop_assert_eq!(codes[k], LEFT); }
            for &k in &part.right { prop_assert_eq!(codes[k], RIGHT); }
        }

        #[test]
        fn write_then_load_is_identity(
            vals in prop::collection::vec(-60.0f64..60.0, 12),
            xs in prop::collection::vec(-5.0f64..5.0, 4),
        ) {
            let raw = Array2::from_shape_vec((4, 3), vals).unwrap();
            let x = Array2::from_shape_vec((4, 1), xs).unwrap();
            let mut raw = raw;
            // keep one observed entry per column
            for k in 0..3 { raw[[0, k]] = 0.0; }
            let lo = array![-50.0, f64::NEG_INFINITY, -40.0];
            let hi = array![50.0, 30.0, f64::INFINITY];
            let ds = CensoredDataset::from_raw(raw, lo, hi, x).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let (yp, xp) = (dir.path().join("y.csv"), dir.path().join("x.csv"));
            write_dataset(&ds, &yp, &xp).unwrap();
            let back: CensoredDataset<f64> = load_dataset(
                &yp, &xp,
                &BoundSpec::PerColumn(vec![-50.0, f64::NEG_INFINITY, -40.0]),
                &BoundSpec::PerColumn(vec![50.0, 30.0, f64::INFINITY]),
            ).unwrap();
            prop_assert_eq!(back.y(), ds.y());
            prop_assert_eq!(back.status(), ds.status());
            prop_assert_eq!(back.lower(), ds.lower());
            prop_assert_eq!(back.upper(), ds.upper());
            prop_assert_eq!(back.x(), ds.x());
        }
    }
}
