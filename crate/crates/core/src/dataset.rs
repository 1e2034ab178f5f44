//! Data model, CSV ingestion, train/analysis splitting and imputation residuals.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lstsq_min_norm;

/// Outcome vector `y` with two covariate blocks: `X1` (the covariates whose
/// reliance is measured) and `X2` (all remaining covariates).
///
/// Covariates are stored row-major so that single observations can be
/// borrowed as slices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x1: Vec<f64>,
    x2: Vec<f64>,
    p1: usize,
    p2: usize,
    outcome_name: String,
    x1_names: Vec<String>,
    x2_names: Vec<String>,
}

/// Train/analysis split request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Number of rows assigned to the training part.
    pub n_train: usize,
    /// Seed for the uniform random partition.
    pub seed: u64,
}

impl Dataset {
    /// Build a dataset from row-major covariate blocks with generated column names.
    pub fn new(y: Vec<f64>, x1: Vec<f64>, p1: usize, x2: Vec<f64>, p2: usize) -> Result<Self> {
        let x1_names = (0..p1).map(|j| format!("x1_{j}")).collect();
        let x2_names = (0..p2).map(|j| format!("x2_{j}")).collect();
        Self::with_names(y, x1, p1, x2, p2, "y".into(), x1_names, x2_names)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_names(
        y: Vec<f64>,
        x1: Vec<f64>,
        p1: usize,
        x2: Vec<f64>,
        p2: usize,
        outcome_name: String,
        x1_names: Vec<String>,
        x2_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::InvalidDataset(format!("need at least 2 rows, got {n}")));
        }
        if p1 == 0 {
            return Err(Error::InvalidDataset("X1 must have at least one column".into()));
        }
        if x1.len() != n * p1 || x2.len() != n * p2 {
            return Err(Error::DimensionMismatch(format!(
                "covariate blocks have {} and {} entries, expected {} and {}",
                x1.len(),
                x2.len(),
                n * p1,
                n * p2
            )));
        }
        if x1_names.len() != p1 || x2_names.len() != p2 {
            return Err(Error::DimensionMismatch("column name count".into()));
        }
        Ok(Self { y, x1, x2, p1, p2, outcome_name, x1_names, x2_names })
    }

    /// Build from nalgebra matrices.
    pub fn from_matrices(y: &[f64], x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<Self> {
        Self::new(y.to_vec(), row_major(x1), x1.ncols(), row_major(x2), x2.ncols())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p1(&self) -> usize {
        self.p1
    }

    pub fn p2(&self) -> usize {
        self.p2
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x1_row(&self, i: usize) -> &[f64] {
        &self.x1[i * self.p1..(i + 1) * self.p1]
    }

    pub fn x2_row(&self, i: usize) -> &[f64] {
        &self.x2[i * self.p2..(i + 1) * self.p2]
    }

    /// Concatenated covariate row `(x1, x2)`.
    pub fn full_row(&self, i: usize) -> Vec<f64> {
        let mut r = self.x1_row(i).to_vec();
        r.extend_from_slice(self.x2_row(i));
        r
    }

    pub fn x1_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.p1, &self.x1)
    }

    pub fn x2_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.p2, &self.x2)
    }

    /// `[X1 X2]` as an n×(p1+p2) matrix.
    pub fn covariate_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let p = self.p1 + self.p2;
        DMatrix::from_fn(n, p, |i, j| {
            if j < self.p1 {
                self.x1[i * self.p1 + j]
            } else {
                self.x2[i * self.p2 + j - self.p1]
            }
        })
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn x1_names(&self) -> &[String] {
        &self.x1_names
    }

    pub fn x2_names(&self) -> &[String] {
        &self.x2_names
    }

    /// Header in storage order: outcome, X1 columns, X2 columns.
    pub fn column_names(&self) -> Vec<String> {
        let mut v = vec![self.outcome_name.clone()];
        v.extend(self.x1_names.iter().cloned());
        v.extend(self.x2_names.iter().cloned());
        v
    }

    /// New dataset made of the given rows (repetitions allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut y = Vec::with_capacity(rows.len());
        let mut x1 = Vec::with_capacity(rows.len() * self.p1);
        let mut x2 = Vec::with_capacity(rows.len() * self.p2);
        for &i in rows {
            y.push(self.y[i]);
            x1.extend_from_slice(self.x1_row(i));
            x2.extend_from_slice(self.x2_row(i));
        }
        Self::with_names(
            y,
            x1,
            self.p1,
            x2,
            self.p2,
            self.outcome_name.clone(),
            self.x1_names.clone(),
            self.x2_names.clone(),
        )
    }

    /// Copy with a constant column of ones appended to X2.
    pub fn with_intercept_column(&self) -> Self {
        let n = self.n();
        let p2 = self.p2 + 1;
        let mut x2 = Vec::with_capacity(n * p2);
        for i in 0..n {
            x2.extend_from_slice(self.x2_row(i));
            x2.push(1.0);
        }
        let mut x2_names = self.x2_names.clone();
        x2_names.push("(intercept)".into());
        Self {
            y: self.y.clone(),
            x1: self.x1.clone(),
            x2,
            p1: self.p1,
            p2,
            outcome_name: self.outcome_name.clone(),
            x1_names: self.x1_names.clone(),
            x2_names,
        }
    }

    /// Copy with X1 replaced (same shape).
    pub fn with_x1(&self, x1: &DMatrix<f64>) -> Result<Self> {
        if x1.nrows() != self.n() || x1.ncols() != self.p1 {
            return Err(Error::DimensionMismatch("replacement X1 shape".into()));
        }
        let mut out = self.clone();
        out.x1 = row_major(x1);
        Ok(out)
    }

    /// Write as CSV with a header row (outcome, X1 columns, X2 columns).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(self.column_names()).map_err(csv_err)?;
        for i in 0..self.n() {
            let mut rec = vec![self.y[i].to_string()];
            rec.extend(self.x1_row(i).iter().map(|v| v.to_string()));
            rec.extend(self.x2_row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

/// Load a CSV file. `outcome_col` becomes `y`, `x1_cols` become X1 (in the
/// given order) and every other column becomes X2 in file order.
pub fn load_csv(path: impl AsRef<Path>, outcome_col: &str, x1_cols: &[&str]) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!(),
            },
            _ => csv_err(e),
        })?;
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyFile);
    }
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_idx = find(outcome_col)?;
    let x1_idx: Vec<usize> = x1_cols.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let x2_idx: Vec<usize> =
        (0..header.len()).filter(|j| *j != y_idx && !x1_idx.contains(j)).collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let mut vals = Vec::with_capacity(header.len());
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                row: r + 1,
                column: header[j].clone(),
                value: cell.to_string(),
            })?;
            vals.push(v);
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    let y: Vec<f64> = rows.iter().map(|r| r[y_idx]).collect();
    let x1: Vec<f64> = rows.iter().flat_map(|r| x1_idx.iter().map(move |&j| r[j])).collect();
    let x2: Vec<f64> = rows.iter().flat_map(|r| x2_idx.iter().map(move |&j| r[j])).collect();
    Dataset::with_names(
        y,
        x1,
        x1_idx.len(),
        x2,
        x2_idx.len(),
        header[y_idx].clone(),
        x1_idx.iter().map(|&j| header[j].clone()).collect(),
        x2_idx.iter().map(|&j| header[j].clone()).collect(),
    )
}

/// Uniform random partition into `(train, analysis)`; row order within each
/// part follows the original order.
pub fn split(data: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let n = data.n();
    if spec.n_train == 0 || spec.n_train >= n {
        return Err(Error::InvalidSplitSize { n_train: spec.n_train, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    idx.shuffle(&mut rng);
    let mut train = idx[..spec.n_train].to_vec();
    let mut analysis = idx[spec.n_train..].to_vec();
    train.sort_unstable();
    analysis.sort_unstable();
    Ok((data.select_rows(&train)?, data.select_rows(&analysis)?))
}

/// Replace X1 by its residual after a least-squares fit on `[1, X2]`
/// (minimum-norm coefficients when the design is rank deficient).
pub fn impute_residualize(data: &Dataset) -> Result<Dataset> {
    if data.p2() == 0 {
        return Err(Error::NoX2Columns);
    }
    let n = data.n();
    let x2 = data.x2_matrix();
    let design = DMatrix::from_fn(n, data.p2() + 1, |i, j| if j == 0 { 1.0 } else { x2[(i, j - 1)] });
    let x1 = data.x1_matrix();
    let coef = lstsq_min_norm(&design, &x1);
    let resid = &x1 - &design * coef;
    data.with_x1(&resid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_row_file() {
        let f = write_tmp("y,a,b\n1,2,3\n4,5,6\n7,8,9\n");
        let d = load_csv(f.path(), "y", &["a"]).unwrap();
        assert_eq!((d.n(), d.p1(), d.p2()), (3, 1, 1));
        assert_eq!(d.y(), &[1.0, 4.0, 7.0]);
        assert_eq!(d.x2_row(2), &[9.0]);
        assert_eq!(d.x2_names(), &["b".to_string()]);
    }

    #[test]
    fn missing_column_is_reported() {
        let f = write_tmp("y,a,b\n1,2,3\n4,5,6\n");
        assert!(matches!(load_csv(f.path(), "y", &["zz"]), Err(Error::MissingColumn(c)) if c == "zz"));
    }

    #[test]
    fn empty_x2_block_is_allowed() {
        let f = write_tmp("y,a\n1,2\n4,5\n");
        let d = load_csv(f.path(), "y", &["a"]).unwrap();
        assert_eq!(d.p2(), 0);
        assert!(d.x2_row(1).is_empty());
    }

    #[test]
    fn non_numeric_cell_has_position() {
        let f = write_tmp("y,a,b\n1,2,3\n4,oops,6\n");
        match load_csv(f.path(), "y", &["a"]) {
            Err(Error::NonNumericCell { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_only_file_is_empty() {
        let f = write_tmp("y,a\n");
        assert!(matches!(load_csv(f.path(), "y", &["a"]), Err(Error::EmptyFile)));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let n = 400;
        let d = Dataset::new((0..n).map(|i| i as f64).collect(), vec![0.0; n], 1, vec![], 0).unwrap();
        let spec = SplitSpec { n_train: 200, seed: 7 };
        let (a, b) = split(&d, spec).unwrap();
        assert_eq!((a.n(), b.n()), (200, 200));
        let (a2, b2) = split(&d, spec).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        let mut all: Vec<f64> = a.y().iter().chain(b.y()).cloned().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..n).map(|i| i as f64).collect::<Vec<_>>());
        assert!(matches!(
            split(&d, SplitSpec { n_train: n, seed: 1 }),
            Err(Error::InvalidSplitSize { .. })
        ));
    }

    #[test]
    fn imputation_of_exact_linear_function_is_zero() {
        let n = 20;
        let x2: Vec<f64> = (0..2 * n).map(|k| ((k * 37 % 11) as f64) - 3.0).collect();
        let x1: Vec<f64> = (0..n).map(|i| 1.5 + 2.0 * x2[2 * i] - 0.5 * x2[2 * i + 1]).collect();
        let d = Dataset::new(vec![0.0; n], x1, 1, x2, 2).unwrap();
        let r = impute_residualize(&d).unwrap();
        for i in 0..n {
            assert!(r.x1_row(i)[0].abs() < 1e-10);
        }
        assert_eq!(r.x2_matrix(), d.x2_matrix());
        assert_eq!(r.y(), d.y());
    }

    #[test]
    fn imputation_needs_x2() {
        let d = Dataset::new(vec![0.0, 1.0], vec![1.0, 2.0], 1, vec![], 0).unwrap();
        assert!(matches!(impute_residualize(&d), Err(Error::NoX2Columns)));
    }
}
