//! Small linear-algebra layer: operators on coefficient vectors and
//! Hilbert–Schmidt noise matrices.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<S> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<S>,
}

impl<S: Scalar> SparseMatrix<S> {
    /// Builds an `n × n` matrix; duplicate entries are summed.
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, S)>) -> Self {
        entries.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<S> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            assert!(r < n && c < n, "triplet out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { n, row_ptr, col_idx, values }
    }

    fn add_apply(&self, alpha: S, v: &[S], out: &mut [S]) {
        for r in 0..self.n {
            let mut acc = S::zero();
            for j in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[j] * v[self.col_idx[j]];
            }
            out[r] += alpha * acc;
        }
    }

    fn add_apply_transpose(&self, alpha: S, v: &[S], out: &mut [S]) {
        for r in 0..self.n {
            let vr = alpha * v[r];
            for j in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.col_idx[j]] += self.values[j] * vr;
            }
        }
    }

    fn to_dense(&self) -> DenseMatrix<S> {
        let mut d = DenseMatrix::zeros(self.n);
        for r in 0..self.n {
            for j in self.row_ptr[r]..self.row_ptr[r + 1] {
                d.data[r * self.n + self.col_idx[j]] += self.values[j];
            }
        }
        d
    }
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<S> {
    n: usize,
    data: Vec<S>,
}

impl<S: Scalar> DenseMatrix<S> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![S::zero(); n * n] }
    }

    pub fn from_row_major(n: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: data.len() });
        }
        Ok(Self { n, data })
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.n + c]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `½(A + Aᵀ)`.
    pub fn symmetric_part(&self) -> Self {
        let n = self.n;
        let mut data = vec![S::zero(); n * n];
        for r in 0..n {
            for c in 0..n {
                data[r * n + c] = S::c(0.5) * (self.get(r, c) + self.get(c, r));
            }
        }
        Self { n, data }
    }

    /// Eigenvalues (ascending) and unit eigenvectors of a symmetric matrix by
    /// cyclic Jacobi rotations. Eigenvector `j` is column `j` of the
    /// returned row-major matrix.
    pub fn symmetric_eigen(&self) -> (Vec<S>, Self) {
        let n = self.n;
        let mut a = self.data.clone();
        let mut v = vec![S::zero(); n * n];
        for i in 0..n {
            v[i * n + i] = S::one();
        }
        for _sweep in 0..100 {
            let off: S = (0..n).flat_map(|r| (0..n).filter(move |&c| c != r).map(move |c| (r, c))).map(|(r, c)| a[r * n + c] * a[r * n + c]).sum();
            if off <= S::epsilon() * S::epsilon() * a.iter().map(|&x| x * x).sum::<S>() || off == S::zero() {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq == S::zero() {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (S::c(2.0) * apq);
                    let sign = if theta >= S::zero() { S::one() } else { -S::one() };
                    let t = sign / (theta.abs() + (theta * theta + S::one()).sqrt());
                    let c = (t * t + S::one()).sqrt().recip();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k * n + p], a[k * n + q]);
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&i| a[i * n + i]).collect();
        let mut vecs = vec![S::zero(); n * n];
        for (newc, &oldc) in order.iter().enumerate() {
            for r in 0..n {
                vecs[r * n + newc] = v[r * n + oldc];
            }
        }
        (values, Self { n, data: vecs })
    }

    fn add_apply(&self, alpha: S, v: &[S], out: &mut [S]) {
        for (r, row) in self.data.chunks_exact(self.n).enumerate() {
            out[r] += alpha * row.iter().zip(v).map(|(&a, &b)| a * b).sum::<S>();
        }
    }

    fn add_apply_transpose(&self, alpha: S, v: &[S], out: &mut [S]) {
        for (r, row) in self.data.chunks_exact(self.n).enumerate() {
            let vr = alpha * v[r];
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * vr;
            }
        }
    }
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<S> {
    n: usize,
    lu: Vec<S>,
    perm: Vec<usize>,
}

impl<S: Scalar> Lu<S> {
    pub fn factor(mut a: DenseMatrix<S>) -> Option<Self> {
        let n = a.n;
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.data.iter().fold(S::zero(), |m, &x| m.max(x.abs()));
        let tiny = scale * S::epsilon() * S::from_usize_lossy(n.max(1));
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|r| (r, a.data[r * n + k].abs()))
                .fold((k, S::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pv > tiny) {
                return None;
            }
            if p != k {
                for c in 0..n {
                    a.data.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let piv = a.data[k * n + k];
            for r in k + 1..n {
                let f = a.data[r * n + k] / piv;
                a.data[r * n + k] = f;
                for c in k + 1..n {
                    let u = a.data[k * n + c];
                    a.data[r * n + c] -= f * u;
                }
            }
        }
        Some(Self { n, lu: a.data, perm })
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.n;
        let mut x: Vec<S> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            for c in 0..r {
                let l = self.lu[r * n + c];
                let xc = x[c];
                x[r] -= l * xc;
            }
        }
        for r in (0..n).rev() {
            for c in r + 1..n {
                let u = self.lu[r * n + c];
                let xc = x[c];
                x[r] -= u * xc;
            }
            x[r] /= self.lu[r * n + r];
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[S]) -> Vec<S> {
        let n = self.n;
        // Aᵀ = Uᵀ Lᵀ P
        let mut y = b.to_vec();
        for r in 0..n {
            for c in 0..r {
                let u = self.lu[c * n + r];
                let yc = y[c];
                y[r] -= u * yc;
            }
            y[r] /= self.lu[r * n + r];
        }
        for r in (0..n).rev() {
            for c in r + 1..n {
                let l = self.lu[c * n + r];
                let yc = y[c];
                y[r] -= l * yc;
            }
        }
        let mut x = vec![S::zero(); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }
}

/// Linear operator on coefficient vectors of a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator<S> {
    Zero(usize),
    Diagonal(Vec<S>),
    Sparse(SparseMatrix<S>),
    Dense(DenseMatrix<S>),
}

impl<S: Scalar> Operator<S> {
    pub fn dim(&self) -> usize {
        match self {
            Operator::Zero(n) => *n,
            Operator::Diagonal(d) => d.len(),
            Operator::Sparse(s) => s.n,
            Operator::Dense(d) => d.n,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Operator::Zero(_))
    }

    /// `out += alpha · Op v`
    pub fn add_apply(&self, alpha: S, v: &[S], out: &mut [S]) {
        match self {
            Operator::Zero(_) => {}
            Operator::Diagonal(d) => {
                for ((o, &di), &vi) in out.iter_mut().zip(d).zip(v) {
                    *o += alpha * di * vi;
                }
            }
            Operator::Sparse(s) => s.add_apply(alpha, v, out),
            Operator::Dense(d) => d.add_apply(alpha, v, out),
        }
    }

    /// `out += alpha · Opᵀ v`
    pub fn add_apply_transpose(&self, alpha: S, v: &[S], out: &mut [S]) {
        match self {
            Operator::Zero(_) | Operator::Diagonal(_) => self.add_apply(alpha, v, out),
            Operator::Sparse(s) => s.add_apply_transpose(alpha, v, out),
            Operator::Dense(d) => d.add_apply_transpose(alpha, v, out),
        }
    }

    pub fn apply(&self, v: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); v.len()];
        self.add_apply(S::one(), v, &mut out);
        out
    }

    pub fn apply_transpose(&self, v: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); v.len()];
        self.add_apply_transpose(S::one(), v, &mut out);
        out
    }

    fn to_dense(&self) -> DenseMatrix<S> {
        match self {
            Operator::Zero(n) => DenseMatrix::zeros(*n),
            Operator::Diagonal(d) => {
                let mut m = DenseMatrix::zeros(d.len());
                for (i, &x) in d.iter().enumerate() {
                    m.data[i * d.len() + i] = x;
                }
                m
            }
            Operator::Sparse(s) => s.to_dense(),
            Operator::Dense(d) => d.clone(),
        }
    }

    /// Prepares solves with `I + c · Op`.
    pub fn shifted(&self, c: S) -> Option<ShiftedSolver<S>> {
        match self {
            Operator::Zero(n) => Some(ShiftedSolver::Identity(*n)),
            Operator::Diagonal(d) => {
                let mut inv = Vec::with_capacity(d.len());
                for &x in d {
                    let den = S::one() + c * x;
                    if !(den.abs() > S::epsilon()) {
                        return None;
                    }
                    inv.push(den.recip());
                }
                Some(ShiftedSolver::Diagonal(inv))
            }
            _ => {
                let mut m = self.to_dense();
                let n = m.n;
                for x in m.data.iter_mut() {
                    *x *= c;
                }
                for i in 0..n {
                    m.data[i * n + i] += S::one();
                }
                Lu::factor(m).map(ShiftedSolver::Lu)
            }
        }
    }
}

/// Factorized `I + c · Op`.
#[derive(Debug, Clone)]
pub enum ShiftedSolver<S> {
    Identity(usize),
    Diagonal(Vec<S>),
    Lu(Lu<S>),
}

impl<S: Scalar> ShiftedSolver<S> {
    pub fn solve_in_place(&self, rhs: &mut [S]) {
        match self {
            ShiftedSolver::Identity(_) => {}
            ShiftedSolver::Diagonal(inv) => {
                for (r, &i) in rhs.iter_mut().zip(inv) {
                    *r *= i;
                }
            }
            ShiftedSolver::Lu(lu) => {
                let x = lu.solve(rhs);
                rhs.copy_from_slice(&x);
            }
        }
    }

    pub fn solve_transpose_in_place(&self, rhs: &mut [S]) {
        match self {
            ShiftedSolver::Lu(lu) => {
                let x = lu.solve_transpose(rhs);
                rhs.copy_from_slice(&x);
            }
            _ => self.solve_in_place(rhs),
        }
    }
}

/// Element of `L₂(U, H)` truncated to `rows × cols`: column `n` is the image
/// of the `n`-th basis vector of `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMatrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> NoiseMatrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn from_columns(rows: usize, columns: &[Vec<S>]) -> Result<Self> {
        let mut m = Self::zeros(rows, columns.len());
        for (n, c) in columns.iter().enumerate() {
            crate::error::check_dim(rows, c.len())?;
            m.column_mut(n).copy_from_slice(c);
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, n: usize) -> &[S] {
        &self.data[n * self.rows..(n + 1) * self.rows]
    }

    pub fn column_mut(&mut self, n: usize) -> &mut [S] {
        &mut self.data[n * self.rows..(n + 1) * self.rows]
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = S::zero());
    }

    /// Hilbert–Schmidt norm squared `|||·|||²_H` (Frobenius).
    pub fn hs_norm_sq(&self) -> S {
        self.data.iter().map(|&x| x * x).sum()
    }

    /// `out += alpha · M ψ`
    pub fn add_apply(&self, alpha: S, psi: &[S], out: &mut [S]) {
        for (n, &p) in psi.iter().enumerate().take(self.cols) {
            if p == S::zero() {
                continue;
            }
            let a = alpha * p;
            for (o, &c) in out.iter_mut().zip(self.column(n)) {
                *o += a * c;
            }
        }
    }

    pub fn apply(&self, psi: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.rows];
        self.add_apply(S::one(), psi, &mut out);
        out
    }

    /// `Mᵀ w`, i.e. `(⟨col_n, w⟩)_n`.
    pub fn apply_transpose(&self, w: &[S]) -> Vec<S> {
        (0..self.cols).map(|n| crate::scalar::dot(self.column(n), w)).collect()
    }

    /// `self += alpha · other`
    pub fn add_scaled(&mut self, alpha: S, other: &NoiseMatrix<S>) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }
}

/// `B₀(t, u)`: one operator per noise column, so that `(B₀ v) e_n = op_n v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnOperators<S> {
    pub ops: Vec<Operator<S>>,
}

impl<S: Scalar> ColumnOperators<S> {
    pub fn zero(dim: usize, cols: usize) -> Self {
        Self { ops: (0..cols).map(|_| Operator::Zero(dim)).collect() }
    }

    pub fn cols(&self) -> usize {
        self.ops.len()
    }

    pub fn is_zero(&self) -> bool {
        self.ops.iter().all(Operator::is_zero)
    }

    /// `out += B₀ v` as a noise matrix.
    pub fn add_apply(&self, v: &[S], out: &mut NoiseMatrix<S>) {
        for (n, op) in self.ops.iter().enumerate() {
            op.add_apply(S::one(), v, out.column_mut(n));
        }
    }

    pub fn apply(&self, v: &[S]) -> NoiseMatrix<S> {
        let mut out = NoiseMatrix::zeros(v.len(), self.cols());
        self.add_apply(v, &mut out);
        out
    }

    /// `out += alpha · (B₀ v) ψ`
    pub fn add_apply_combined(&self, alpha: S, psi: &[S], v: &[S], out: &mut [S]) {
        for (op, &p) in self.ops.iter().zip(psi) {
            if p != S::zero() {
                op.add_apply(alpha * p, v, out);
            }
        }
    }

    /// `out += alpha · (Σ_n ψ_n op_n)ᵀ w`
    pub fn add_apply_combined_transpose(&self, alpha: S, psi: &[S], w: &[S], out: &mut [S]) {
        for (op, &p) in self.ops.iter().zip(psi) {
            if p != S::zero() {
                op.add_apply_transpose(alpha * p, w, out);
            }
        }
    }
}
