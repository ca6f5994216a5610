//! Exact enumeration of the integer transforms U with ZU binary, for small Z,
//! plus the constructive transforms implied by dependencies between features.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{BinaryMatrix, IntMatrix, TransformMatrix};
use crate::pdc::PdcKind;
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnumerationLimits {
    pub max_n: usize,
    pub max_k: usize,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self { max_n: 16, max_k: 5 }
    }
}

/// Why enumeration over integer columns is known to be complete.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Certificate {
    /// Features first become active on pairwise distinct rows. `rows[m]` is
    /// the first row of feature `column_order[m]`; restricted to these rows
    /// and columns, Z is lower triangular with unit diagonal.
    FirstAppearance { rows: Vec<usize>, column_order: Vec<usize> },
    /// The K×K submatrix on these rows has determinant ±1.
    UnimodularSubmatrix { rows: Vec<usize> },
    NotFound,
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        !matches!(self, Certificate::NotFound)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceClassReport {
    /// One representative per class, columns sorted lexicographically.
    pub canonical_transforms: Vec<TransformMatrix>,
    pub count: usize,
    pub identifiable: bool,
    pub certification: Certificate,
    /// All nonzero integer u with Zu binary, sorted.
    pub candidate_columns: Vec<Vec<i64>>,
    /// Targets b reproduced exactly by a non-integer u; nonzero means the
    /// integer enumeration may miss members.
    pub non_integer_columns: usize,
}

fn check_limits(z: &BinaryMatrix, limits: EnumerationLimits) -> Result<()> {
    let (n, k) = z.shape();
    if n > limits.max_n || k > limits.max_k {
        return Err(Error::Size(format!(
            "enumeration limited to N ≤ {}, K ≤ {}; got N = {n}, K = {k}",
            limits.max_n, limits.max_k
        )));
    }
    Ok(())
}

/// Every nonzero integer column u with Zu ∈ {0,1}^N, found by solving Zu = b
/// for each binary target b. Returns the sorted columns and the number of
/// targets hit by a non-integer u.
pub fn exhaustive_candidate_columns(z: &BinaryMatrix, limits: EnumerationLimits) -> Result<(Vec<Vec<i64>>, usize)> {
    check_limits(z, limits)?;
    z.require_full_column_rank()?;
    let (n, k) = z.shape();
    let zr = z.to_real();
    let gram = zr.transpose() * &zr;
    let pinv: DMatrix<f64> = gram
        .lu()
        .solve(&zr.transpose())
        .ok_or_else(|| Error::Domain("singular Gram matrix".into()))?;

    let mut columns = BTreeSet::new();
    let mut non_integer = 0;
    for mask in 1u32..(1u32 << n) {
        let mut u = DVector::<f64>::zeros(k);
        for row in 0..n {
            if mask >> row & 1 == 1 {
                u += pinv.column(row);
            }
        }
        let rounded: Vec<i64> = u.iter().map(|v| v.round() as i64).collect();
        let hits = z.mul_column(&rounded).iter().enumerate().all(|(row, &v)| v == (mask >> row & 1) as i64);
        if hits {
            columns.insert(rounded);
            continue;
        }
        let zu = &zr * &u;
        let err: f64 = (0..n).map(|row| (zu[row] - (mask >> row & 1) as f64).powi(2)).sum::<f64>().sqrt();
        if err <= 1e-8 {
            non_integer += 1;
        }
    }
    Ok((columns.into_iter().collect(), non_integer))
}

/// Fraction-free echelon basis for incremental independence tests.
struct Echelon {
    rows: Vec<(usize, Vec<i128>)>,
}

impl Echelon {
    fn new() -> Self {
        Self { rows: Vec::new() }
    }

    fn reduce(&self, v: &[i64]) -> Vec<i128> {
        let mut v: Vec<i128> = v.iter().map(|&x| x as i128).collect();
        for (p, b) in &self.rows {
            let a = v[*p];
            if a == 0 {
                continue;
            }
            let bp = b[*p];
            for (x, y) in v.iter_mut().zip(b) {
                *x = bp * *x - a * y;
            }
            let g = v.iter().fold(0i128, |g, &x| gcd(g, x.abs()));
            if g > 1 {
                v.iter_mut().for_each(|x| *x /= g);
            }
        }
        v
    }

    /// Adds `v` if independent of the current basis.
    fn push(&mut self, v: &[i64]) -> bool {
        let r = self.reduce(v);
        match r.iter().position(|&x| x != 0) {
            Some(p) => {
                self.rows.push((p, r));
                true
            }
            None => false,
        }
    }

    fn pop(&mut self) {
        self.rows.pop();
    }
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Visits every K-subset of `columns` (in index order) whose columns are
/// linearly independent.
pub fn for_each_regular_subset(columns: &[Vec<i64>], k: usize, mut visit: impl FnMut(&[usize])) {
    fn go(
        columns: &[Vec<i64>],
        k: usize,
        start: usize,
        chosen: &mut Vec<usize>,
        basis: &mut Echelon,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if chosen.len() == k {
            visit(chosen);
            return;
        }
        let need = k - chosen.len();
        for idx in start..columns.len() {
            if columns.len() - idx < need {
                break;
            }
            if basis.push(&columns[idx]) {
                chosen.push(idx);
                go(columns, k, idx + 1, chosen, basis, visit);
                chosen.pop();
                basis.pop();
            }
        }
    }
    if k == 0 || columns.iter().any(|c| c.len() != k) {
        return;
    }
    go(columns, k, 0, &mut Vec::with_capacity(k), &mut Echelon::new(), &mut visit);
}

pub fn count_regular_subsets(columns: &[Vec<i64>], k: usize) -> usize {
    let mut count = 0;
    for_each_regular_subset(columns, k, |_| count += 1);
    count
}

/// Regular K×K matrices assembled from distinct columns, one per column set,
/// in canonical (sorted-column) form.
pub fn regular_subsets(columns: &[Vec<i64>], k: usize) -> Vec<TransformMatrix> {
    let sorted: Vec<Vec<i64>> = columns.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let mut out = Vec::new();
    for_each_regular_subset(&sorted, k, |idx| {
        let cols: Vec<Vec<i64>> = idx.iter().map(|&i| sorted[i].clone()).collect();
        out.push(IntMatrix::from_columns(&cols).expect("columns share length k"));
    });
    out
}

pub fn enumerate_equivalents(z: &BinaryMatrix, limits: EnumerationLimits) -> Result<EquivalenceClassReport> {
    let (candidate_columns, non_integer_columns) = exhaustive_candidate_columns(z, limits)?;
    let canonical_transforms = regular_subsets(&candidate_columns, z.cols());
    let count = canonical_transforms.len();
    Ok(EquivalenceClassReport {
        canonical_transforms,
        count,
        identifiable: count == 1,
        certification: certify_integer_closure(z)?,
        candidate_columns,
        non_integer_columns,
    })
}

fn submatrix_det(z: &BinaryMatrix, rows: &[usize]) -> i128 {
    let k = z.cols();
    let data: Vec<i64> = rows.iter().flat_map(|&r| z.row(r).iter().map(|&v| v as i64)).collect();
    IntMatrix::new(k, k, data).expect("square").det()
}

const RANDOM_ROW_SUBSETS: usize = 20_000;

pub fn certify_integer_closure(z: &BinaryMatrix) -> Result<Certificate> {
    z.require_full_column_rank()?;
    let (n, k) = z.shape();

    let first: Vec<Option<usize>> = (0..k).map(|c| (0..n).find(|&r| z.get(r, c) == 1)).collect();
    if let Some(first) = first.iter().copied().collect::<Option<Vec<usize>>>() {
        let distinct: BTreeSet<usize> = first.iter().copied().collect();
        if distinct.len() == k {
            let mut column_order: Vec<usize> = (0..k).collect();
            column_order.sort_by_key(|&c| first[c]);
            let rows = column_order.iter().map(|&c| first[c]).collect();
            return Ok(Certificate::FirstAppearance { rows, column_order });
        }
    }

    let unimodular = |rows: &[usize]| submatrix_det(z, rows).abs() == 1;
    if n <= 16 {
        let mut found = None;
        let mut rows = Vec::with_capacity(k);
        fn search(n: usize, k: usize, start: usize, rows: &mut Vec<usize>, ok: &dyn Fn(&[usize]) -> bool) -> bool {
            if rows.len() == k {
                return ok(rows);
            }
            for r in start..=n - (k - rows.len()) {
                rows.push(r);
                if search(n, k, r + 1, rows, ok) {
                    return true;
                }
                rows.pop();
            }
            false
        }
        if search(n, k, 0, &mut rows, &unimodular) {
            found = Some(rows);
        }
        return Ok(found.map_or(Certificate::NotFound, |rows| Certificate::UnimodularSubmatrix { rows }));
    }

    // Greedy: rows in order, keeping each one that raises the rank.
    let mut basis = Echelon::new();
    let mut greedy = Vec::new();
    for r in 0..n {
        let row: Vec<i64> = z.row(r).iter().map(|&v| v as i64).collect();
        if basis.push(&row) {
            greedy.push(r);
            if greedy.len() == k {
                break;
            }
        }
    }
    if greedy.len() == k && unimodular(&greedy) {
        return Ok(Certificate::UnimodularSubmatrix { rows: greedy });
    }
    let mut rng = seeded(0x5eed);
    for _ in 0..RANDOM_ROW_SUBSETS {
        let mut rows = sample(&mut rng, n, k).into_vec();
        rows.sort_unstable();
        if unimodular(&rows) {
            return Ok(Certificate::UnimodularSubmatrix { rows });
        }
    }
    Ok(Certificate::NotFound)
}

fn check_pair(i: usize, j: usize, k: usize) -> Result<()> {
    if i == j {
        return Err(Error::Index(format!("feature pair needs distinct indices, got ({i}, {j})")));
    }
    if i >= k || j >= k {
        return Err(Error::Index(format!("indices ({i}, {j}) out of range for K = {k}")));
    }
    Ok(())
}

/// Identity with column i replaced by e_i + e_j: feature i absorbs feature j.
pub fn r_transform(i: usize, j: usize, k: usize) -> Result<TransformMatrix> {
    check_pair(i, j, k)?;
    let mut u = IntMatrix::identity(k);
    u.set(j, i, 1);
    Ok(u)
}

/// Inverse of `r_transform(i, j, k)`: column i is e_i − e_j.
pub fn r_inverse_transform(i: usize, j: usize, k: usize) -> Result<TransformMatrix> {
    check_pair(i, j, k)?;
    let mut u = IntMatrix::identity(k);
    u.set(j, i, -1);
    Ok(u)
}

/// Identity with column i replaced by e_j − e_i: feature i becomes z_j − z_i.
pub fn q_transform(i: usize, j: usize, k: usize) -> Result<TransformMatrix> {
    check_pair(i, j, k)?;
    let mut u = IntMatrix::identity(k);
    u.set(i, i, -1);
    u.set(j, i, 1);
    Ok(u)
}

/// Non-identity transforms that keep ZU binary whenever Z satisfies the given
/// condition on features (i, j).
pub fn pdc_transform(kind: PdcKind, i: usize, j: usize, k: usize) -> Result<Vec<TransformMatrix>> {
    check_pair(i, j, k)?;
    Ok(match kind {
        PdcKind::Pdc1 => vec![r_transform(i, j, k)?, r_transform(j, i, k)?],
        // z_i ⊆ z_j, so z_j − z_i is binary (placed in column i or column j)
        PdcKind::Pdc2 => vec![q_transform(i, j, k)?, r_inverse_transform(j, i, k)?],
        // z_j ⊆ z_i
        PdcKind::Pdc3 => vec![q_transform(j, i, k)?, r_inverse_transform(i, j, k)?],
    })
}

/// All regular matrices built from {e_1, …, e_K} ∪ {e_b − e_i : i ≠ b}, the
/// transforms available whenever feature b is constantly active.
pub fn bias_transform_family(k: usize, bias_index: usize) -> Result<Vec<TransformMatrix>> {
    if k < 2 {
        return Err(Error::Domain(format!("bias family needs K ≥ 2, got {k}")));
    }
    if bias_index >= k {
        return Err(Error::Index(format!("bias index {bias_index} out of range for K = {k}")));
    }
    let unit = |i: usize| (0..k).map(|r| (r == i) as i64).collect::<Vec<i64>>();
    let mut columns: Vec<Vec<i64>> = (0..k).map(unit).collect();
    for i in (0..k).filter(|&i| i != bias_index) {
        let mut c = unit(bias_index);
        c[i] = -1;
        columns.push(c);
    }
    Ok(regular_subsets(&columns, k))
}

/// (K+1)·2^(K−2).
pub fn bias_family_size(k: usize) -> usize {
    assert!(k >= 2);
    (k + 1) << (k - 2)
}
