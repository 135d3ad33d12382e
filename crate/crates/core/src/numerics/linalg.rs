use super::ShapeError;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self, ShapeError> {
        Self::from_vec(rows, cols, vec![0.0; rows * cols])
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        if rows == 0 || cols == 0 {
            return Err(ShapeError::EmptyMatrix { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(ShapeError::mismatch(
                "Matrix::from_vec",
                format!("{rows}x{cols}"),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, ShapeError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(ShapeError::mismatch(
                    "Matrix::from_rows",
                    format!("row length {cols}"),
                    format!("row length {}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }
}

fn shape_str(m: &Matrix) -> String {
    format!("{}x{}", m.rows, m.cols)
}

/// `W x`.
pub fn matvec(w: &Matrix, x: &[f64]) -> Result<Vec<f64>, ShapeError> {
    if w.cols != x.len() {
        return Err(ShapeError::mismatch(
            "matvec",
            shape_str(w),
            format!("vector of length {}", x.len()),
        ));
    }
    Ok((0..w.rows)
        .map(|i| w.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect())
}

/// `Wᵀ d`, accumulated row by row in ascending row order.
pub fn matvec_transposed(w: &Matrix, d: &[f64]) -> Result<Vec<f64>, ShapeError> {
    if w.rows != d.len() {
        return Err(ShapeError::mismatch(
            "matvec_transposed",
            shape_str(w),
            format!("vector of length {}", d.len()),
        ));
    }
    let mut out = vec![0.0; w.cols];
    for (i, &di) in d.iter().enumerate() {
        axpy(&mut out, di, w.row(i));
    }
    Ok(out)
}

/// `Wᵀ d` restricted to the rows listed in `active`.
///
/// Rows are accumulated in the order given; with `active = 0..rows` the
/// result is bit-identical to [`matvec_transposed`]. Returns the result and
/// the number of multiply-accumulates performed, `active.len() * cols`.
pub fn sparse_matvec_transposed(
    w: &Matrix,
    d: &[f64],
    active: &[usize],
) -> Result<(Vec<f64>, u64), ShapeError> {
    if w.rows != d.len() {
        return Err(ShapeError::mismatch(
            "sparse_matvec_transposed",
            shape_str(w),
            format!("vector of length {}", d.len()),
        ));
    }
    check_indices("sparse_matvec_transposed", active, d.len())?;
    let mut out = vec![0.0; w.cols];
    for &i in active {
        axpy(&mut out, d[i], w.row(i));
    }
    Ok((out, (active.len() * w.cols) as u64))
}

pub fn hadamard(a: &[f64], b: &[f64]) -> Result<Vec<f64>, ShapeError> {
    if a.len() != b.len() {
        return Err(ShapeError::mismatch(
            "hadamard",
            format!("length {}", a.len()),
            format!("length {}", b.len()),
        ));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
}

/// `G[i, :] += d[i] * a` for every `i` in `active`; other rows are untouched.
/// Returns the multiply-accumulate count, `active.len() * a.len()`.
pub fn outer_accumulate_rows(
    g: &mut Matrix,
    d: &[f64],
    a: &[f64],
    active: &[usize],
) -> Result<u64, ShapeError> {
    if g.rows != d.len() || g.cols != a.len() {
        return Err(ShapeError::mismatch(
            "outer_accumulate_rows",
            shape_str(g),
            format!("outer({} x {})", d.len(), a.len()),
        ));
    }
    check_indices("outer_accumulate_rows", active, d.len())?;
    for &i in active {
        axpy(g.row_mut(i), d[i], a);
    }
    Ok((active.len() * a.len()) as u64)
}

fn check_indices(op: &'static str, active: &[usize], len: usize) -> Result<(), ShapeError> {
    match active.iter().find(|&&i| i >= len) {
        Some(&index) => Err(ShapeError::IndexOutOfRange { op, index, len }),
        None => Ok(()),
    }
}

#[inline]
fn axpy(out: &mut [f64], scale: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += scale * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Prng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut Prng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.next_gaussian()).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn random_vec(len: usize, rng: &mut Prng) -> Vec<f64> {
        (0..len).map(|_| rng.next_gaussian()).collect()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len()
            && a.iter()
                .zip(b)
                .all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + y.abs()))
    }

    #[test]
    fn matvec_small_cases() {
        let id = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(matvec(&id, &[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        let w = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(matvec(&w, &[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn matvec_matches_double_loop() {
        let mut rng = Prng::new(11);
        let w = random_matrix(5, 7, &mut rng);
        let x = random_vec(7, &mut rng);
        let raw = w.as_slice();
        let mut expected = vec![0.0; 5];
        for i in 0..5 {
            for j in 0..7 {
                expected[i] += raw[i * 7 + j] * x[j];
            }
        }
        assert!(close(&matvec(&w, &x).unwrap(), &expected));
    }

    #[test]
    fn matvec_reports_both_shapes() {
        let w = Matrix::zeros(2, 3).unwrap();
        let msg = matvec(&w, &[1.0]).unwrap_err().to_string();
        assert!(msg.contains("2x3") && msg.contains("length 1"), "{msg}");
    }

    #[test]
    fn matvec_transposed_cases() {
        let id = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(matvec_transposed(&id, &[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        let w = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(matvec_transposed(&w, &[1.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        assert!(matvec_transposed(&w, &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn matvec_transposed_matches_explicit_transpose() {
        let mut rng = Prng::new(12);
        let w = random_matrix(6, 4, &mut rng);
        let d = random_vec(6, &mut rng);
        let expected = matvec(&w.transpose(), &d).unwrap();
        assert!(close(&matvec_transposed(&w, &d).unwrap(), &expected));
    }

    #[test]
    fn sparse_matvec_transposed_degenerate_sets() {
        let mut rng = Prng::new(13);
        let w = random_matrix(6, 4, &mut rng);
        let d = random_vec(6, &mut rng);
        let all: Vec<usize> = (0..6).collect();
        let (full, macs) = sparse_matvec_transposed(&w, &d, &all).unwrap();
        assert_eq!(full, matvec_transposed(&w, &d).unwrap());
        assert_eq!(macs, 24);
        let (empty, macs) = sparse_matvec_transposed(&w, &d, &[]).unwrap();
        assert_eq!(empty, vec![0.0; 4]);
        assert_eq!(macs, 0);
    }

    #[test]
    fn sparse_matvec_transposed_matches_masked_dense() {
        let mut rng = Prng::new(14);
        let w = random_matrix(6, 4, &mut rng);
        let d = random_vec(6, &mut rng);
        let active = [1usize, 4];
        let masked: Vec<f64> = (0..6)
            .map(|i| if active.contains(&i) { d[i] } else { 0.0 })
            .collect();
        let (got, macs) = sparse_matvec_transposed(&w, &d, &active).unwrap();
        assert!(close(&got, &matvec_transposed(&w, &masked).unwrap()));
        assert_eq!(macs, 8);
    }

    #[test]
    fn sparse_matvec_transposed_rejects_bad_index() {
        let w = Matrix::zeros(2, 2).unwrap();
        let err = sparse_matvec_transposed(&w, &[1.0, 1.0], &[2]).unwrap_err();
        assert!(matches!(
            err,
            ShapeError::IndexOutOfRange {
                index: 2,
                len: 2,
                ..
            }
        ));
    }

    #[test]
    fn hadamard_cases() {
        assert_eq!(
            hadamard(&[1.0, 2.0, 3.0], &[1.0; 3]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        assert_eq!(hadamard(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(hadamard(&[1.0], &[1.0, 2.0]).is_err());
        let mut rng = Prng::new(15);
        let a = random_vec(9, &mut rng);
        let b = random_vec(9, &mut rng);
        let got = hadamard(&a, &b).unwrap();
        for i in 0..9 {
            assert_eq!(got[i], a[i] * b[i]);
        }
    }

    #[test]
    fn outer_accumulate_rows_cases() {
        let mut g = Matrix::zeros(2, 2).unwrap();
        assert_eq!(
            outer_accumulate_rows(&mut g, &[1.0, 1.0], &[2.0, 3.0], &[]).unwrap(),
            0
        );
        assert_eq!(g, Matrix::zeros(2, 2).unwrap());
        let macs = outer_accumulate_rows(&mut g, &[1.0, 1.0], &[2.0, 3.0], &[0, 1]).unwrap();
        assert_eq!(macs, 4);
        assert_eq!(g, Matrix::from_rows(&[[2.0, 3.0], [2.0, 3.0]]).unwrap());
        assert!(outer_accumulate_rows(&mut g, &[1.0], &[2.0, 3.0], &[0]).is_err());
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn outer_accumulate_rows_matches_masked_dense_outer() {
        let mut rng = Prng::new(16);
        let base = random_matrix(5, 3, &mut rng);
        let d = random_vec(5, &mut rng);
        let a = random_vec(3, &mut rng);
        let active = [0usize, 3];
        let mut g = base.clone();
        outer_accumulate_rows(&mut g, &d, &a, &active).unwrap();
        for i in 0..5 {
            let di = if active.contains(&i) { d[i] } else { 0.0 };
            for j in 0..3 {
                let expected = base.get(i, j) + di * a[j];
                assert!((g.get(i, j) - expected).abs() < 1e-14);
            }
        }
        assert_eq!(g.row(1), base.row(1));
    }

    #[test]
    fn matrix_constructor_checks() {
        assert!(Matrix::zeros(0, 3).is_err());
        assert!(Matrix::from_vec(2, 2, vec![0.0; 3]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }
}
