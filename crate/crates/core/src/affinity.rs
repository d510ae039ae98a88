//! Affinity matrices.
//!
//! The fourth-order tensor `alpha[i][j][k][l]` (and its sixth-order
//! labeled/unlabeled extension) is stored as a dense square matrix over the
//! canonical flattened batch positions described in [`crate::batch`]. Row `a`
//! holds the weights anchor `a` assigns to every other entry: positive values
//! attract, negative values repel, zero ignores.

use std::fmt;

use crate::batch::RepresentationBatch;
use crate::error::{GclError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    size: usize,
    data: Vec<f64>,
    n_labeled: usize,
    n_unlabeled: usize,
}

/// How the unlabeled/unlabeled block of [`semi_affinity`] is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnlabeledBlock {
    /// Same pattern as the labeled block: other view attracts, everything else repels.
    #[default]
    Verbatim,
    /// Other view attracts; distinct unlabeled samples are ignored instead of repelled.
    Relaxed,
}

impl AffinityMatrix {
    pub fn zeros(n_labeled: usize, n_unlabeled: usize) -> Self {
        let size = 2 * (n_labeled + n_unlabeled);
        Self {
            size,
            data: vec![0.0; size * size],
            n_labeled,
            n_unlabeled,
        }
    }

    /// Wraps an arbitrary square matrix; `rows` must be `size x size` with an
    /// even size. The matrix is treated as a single labeled group.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if !size.is_multiple_of(2) {
            return Err(GclError::Shape(format!("affinity size {size} is odd")));
        }
        let mut data = Vec::with_capacity(size * size);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != size {
                return Err(GclError::Shape(format!(
                    "row {r} has {} entries, expected {size}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        Ok(Self {
            size,
            data,
            n_labeled: size / 2,
            n_unlabeled: 0,
        })
    }

    /// Reinterprets the group sizes; `n_labeled + n_unlabeled` must be unchanged.
    pub fn with_groups(mut self, n_labeled: usize, n_unlabeled: usize) -> Result<Self> {
        if 2 * (n_labeled + n_unlabeled) != self.size {
            return Err(GclError::Shape(format!(
                "groups ({n_labeled}, {n_unlabeled}) do not cover size {}",
                self.size
            )));
        }
        self.n_labeled = n_labeled;
        self.n_unlabeled = n_unlabeled;
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n_labeled(&self) -> usize {
        self.n_labeled
    }

    pub fn n_unlabeled(&self) -> usize {
        self.n_unlabeled
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.size + b]
    }

    pub fn set(&mut self, a: usize, b: usize, value: f64) {
        self.data[a * self.size + b] = value;
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.data[a * self.size..(a + 1) * self.size]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.size.max(1)).take(self.size)
    }

    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    pub fn transpose(&self) -> Self {
        let mut out = self.clone();
        for a in 0..self.size {
            for b in 0..self.size {
                out.set(b, a, self.get(a, b));
            }
        }
        out
    }

    /// Sub-matrix over positions `rows x cols`.
    pub fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Vec<Vec<f64>> {
        rows.map(|a| self.row(a)[cols.clone()].to_vec()).collect()
    }
}

impl fmt::Display for AffinityMatrix {
    /// Plain-text grid: one row per line, entries separated by single spaces.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.rows() {
            let mut first = true;
            for v in row {
                if !first {
                    f.write_str(" ")?;
                }
                first = false;
                write!(f, "{v}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Flattened position of `(index, slot)` inside a single group of `n` items.
fn pos(i: usize, k: usize) -> usize {
    2 * i + k
}

fn require_classes(n: usize, min: usize, name: &str) -> Result<()> {
    if n < min {
        return Err(GclError::Affinity(format!(
            "{name} needs at least {min} classes, got {n}"
        )));
    }
    Ok(())
}

fn fill(n: usize, rule: impl Fn(usize, usize, usize, usize) -> f64) -> AffinityMatrix {
    let mut m = AffinityMatrix::zeros(n, 0);
    for i in 0..n {
        for k in 0..2 {
            for j in 0..n {
                for l in 0..2 {
                    m.set(pos(i, k), pos(j, l), rule(i, j, k, l));
                }
            }
        }
    }
    m
}

/// Pairs: query `(i, 1)` attracts `(i, 2)`; `(i, 2)` repels `(i + 1 mod N, 1)`.
pub fn type1_affinity(n: usize) -> Result<AffinityMatrix> {
    require_classes(n, 2, "type 1 affinity")?;
    Ok(fill(n, |i, j, k, l| {
        if k < l && i == j {
            1.0
        } else if k > l && i == (j + n - 1) % n {
            -1.0
        } else {
            0.0
        }
    }))
}

/// Triplets: each anchor attracts its other view and repels the other view of
/// the next class.
pub fn type2_affinity(n: usize) -> Result<AffinityMatrix> {
    require_classes(n, 2, "type 2 affinity")?;
    Ok(fill(n, |i, j, k, l| {
        if k != l && i == j {
            1.0
        } else if k != l && i == (j + n - 1) % n {
            -1.0
        } else {
            0.0
        }
    }))
}

/// Episode affinity: slot-1 anchors attract their own slot-2 entry and repel
/// every other slot-2 entry. Slot-2 rows are empty.
pub fn type3_affinity(n: usize) -> Result<AffinityMatrix> {
    require_classes(n, 1, "type 3 affinity")?;
    Ok(fill(n, |i, j, k, l| match (k < l, i == j) {
        (true, true) => 1.0,
        (true, false) => -1.0,
        _ => 0.0,
    }))
}

pub fn episode_affinity(n: usize) -> Result<AffinityMatrix> {
    type3_affinity(n)
}

/// NT-Xent affinity: each anchor attracts its other view, ignores itself and
/// repels every other entry.
pub fn type4_affinity(n: usize) -> Result<AffinityMatrix> {
    require_classes(n, 1, "type 4 affinity")?;
    Ok(ntxent_block(n, UnlabeledBlock::Verbatim))
}

pub fn ntxent_affinity(n: usize) -> Result<AffinityMatrix> {
    type4_affinity(n)
}

fn ntxent_block(n: usize, block: UnlabeledBlock) -> AffinityMatrix {
    fill(n, |i, j, k, l| match (i == j, k == l, block) {
        (true, false, _) => 1.0,
        (true, true, _) => 0.0,
        (false, _, UnlabeledBlock::Verbatim) => -1.0,
        (false, _, UnlabeledBlock::Relaxed) => 0.0,
    })
}

/// Semi-supervised affinity over `N` labeled and `N'` unlabeled pairs. Both
/// diagonal blocks follow the NT-Xent pattern, both cross-group blocks repel.
pub fn semi_affinity(n_labeled: usize, n_unlabeled: usize, block: UnlabeledBlock) -> Result<AffinityMatrix> {
    if n_labeled + n_unlabeled == 0 {
        return Err(GclError::Affinity("semi affinity over an empty batch".into()));
    }
    let labeled = ntxent_block(n_labeled, UnlabeledBlock::Verbatim);
    let unlabeled = ntxent_block(n_unlabeled, block);
    let cut = 2 * n_labeled;
    let mut m = AffinityMatrix::zeros(n_labeled, n_unlabeled);
    for a in 0..m.size {
        for b in 0..m.size {
            let v = match (a < cut, b < cut) {
                (true, true) => labeled.get(a, b),
                (false, false) => unlabeled.get(a - cut, b - cut),
                _ => -1.0,
            };
            m.set(a, b, v);
        }
    }
    Ok(m)
}

/// Which anchor rows contribute to the ratio loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorMask {
    active: Vec<bool>,
}

impl AnchorMask {
    pub fn is_active(&self, a: usize) -> bool {
        self.active[a]
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.active.iter().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AffinityValues {
    /// Only -1, 0 and +1 are accepted.
    #[default]
    Ternary,
    /// Any finite real weight.
    General,
}

/// Checks that `affinity` fits `batch` and marks anchors without any positive
/// entry as inactive.
pub fn validate(
    affinity: &AffinityMatrix,
    batch: &RepresentationBatch,
    values: AffinityValues,
) -> Result<AnchorMask> {
    if affinity.size != batch.len() {
        return Err(GclError::Shape(format!(
            "affinity of size {} for a batch of {} entries",
            affinity.size,
            batch.len()
        )));
    }
    for (idx, v) in affinity.data.iter().enumerate() {
        let ok = match values {
            AffinityValues::Ternary => *v == -1.0 || *v == 0.0 || *v == 1.0,
            AffinityValues::General => v.is_finite(),
        };
        if !ok {
            return Err(GclError::Affinity(format!(
                "entry ({}, {}) = {v} not allowed",
                idx / affinity.size,
                idx % affinity.size
            )));
        }
    }
    Ok(AnchorMask {
        active: affinity
            .rows()
            .map(|row| row.iter().any(|v| *v > 0.0))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::Group;

    fn dummy_batch(n: usize) -> RepresentationBatch {
        RepresentationBatch::from_pairs(Group::Labeled, vec![(vec![0.0], vec![1.0]); n]).unwrap()
    }

    fn row_counts(row: &[f64]) -> (usize, usize, usize) {
        let pos = row.iter().filter(|v| **v > 0.0).count();
        let neg = row.iter().filter(|v| **v < 0.0).count();
        (pos, neg, row.len() - pos - neg)
    }

    #[test]
    fn type1_rows() {
        let m = type1_affinity(2).unwrap();
        assert_eq!(row_counts(m.row(0)), (1, 0, 3));
        let m = type1_affinity(3).unwrap();
        let mask = validate(&m, &dummy_batch(3), AffinityValues::Ternary).unwrap();
        for a in 0..6 {
            let (p, n, _) = row_counts(m.row(a));
            if mask.is_active(a) {
                assert_eq!(p + n, 1);
            }
        }
        // (i=1, k=2) repels (i=2, k=1)
        assert_eq!(m.get(1, 2), -1.0);
        assert_eq!(m.data.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn type2_rows() {
        let m = type2_affinity(2).unwrap();
        // anchor (1,1): +1 on (1,2), -1 on (2,2)
        assert_eq!(m.row(0), &[0.0, 1.0, 0.0, -1.0]);
        let m = type2_affinity(5).unwrap();
        for a in 0..10 {
            assert_eq!(m.get(a, a), 0.0);
            assert_eq!(row_counts(m.row(a)), (1, 1, 8));
        }
    }

    #[test]
    fn type3_rows() {
        let m = type3_affinity(3).unwrap();
        for i in 0..3 {
            let row = m.row(2 * i);
            assert_eq!(row_counts(row), (1, 2, 3));
            assert!(row.iter().step_by(2).all(|v| *v == 0.0), "only slot-2 columns");
            assert!(m.row(2 * i + 1).iter().all(|v| *v == 0.0));
        }
        let mask = validate(&m, &dummy_batch(3), AffinityValues::Ternary).unwrap();
        assert_eq!(mask.active_count(), 3);

        let single = type3_affinity(1).unwrap();
        assert_eq!(single.row(0), &[0.0, 1.0]);
    }

    #[test]
    fn type4_rows() {
        for n in 2..6 {
            let m = type4_affinity(n).unwrap();
            for a in 0..2 * n {
                assert_eq!(row_counts(m.row(a)), (1, 2 * n - 2, 1));
            }
            assert_eq!(m, m.transpose());
        }
        let m = type4_affinity(2).unwrap();
        assert!((0..4).all(|a| m.get(a, a) == 0.0));
        let mask = validate(&type4_affinity(3).unwrap(), &dummy_batch(3), AffinityValues::Ternary).unwrap();
        assert_eq!(mask.active_count(), 6);
    }

    #[test]
    fn pair_types_need_two_classes() {
        assert!(type1_affinity(1).is_err());
        assert!(type2_affinity(1).is_err());
        assert!(type3_affinity(0).is_err());
        assert!(type4_affinity(0).is_err());
    }

    #[test]
    fn semi_blocks() {
        let m = semi_affinity(2, 3, UnlabeledBlock::Verbatim).unwrap();
        assert_eq!(m.size(), 10);
        assert_eq!(m.block(0..4, 4..10), vec![vec![-1.0; 6]; 4]);
        assert_eq!(m.block(4..10, 0..4), vec![vec![-1.0; 4]; 6]);
        let labeled = type4_affinity(2).unwrap();
        assert_eq!(m.block(0..4, 0..4), labeled.block(0..4, 0..4));
        let unlabeled = type4_affinity(3).unwrap();
        assert_eq!(m.block(4..10, 4..10), unlabeled.block(0..6, 0..6));
        for a in 0..10 {
            assert_eq!(row_counts(m.row(a)).0, 1);
        }
        assert_eq!(semi_affinity(3, 0, UnlabeledBlock::Verbatim).unwrap(), type4_affinity(3).unwrap());
    }

    #[test]
    fn relaxed_unlabeled_block_ignores_other_samples() {
        let m = semi_affinity(1, 2, UnlabeledBlock::Relaxed).unwrap();
        assert_eq!(m.get(2, 3), 1.0);
        assert_eq!(m.get(2, 4), 0.0);
        assert_eq!(m.get(2, 0), -1.0);
        assert_eq!(m.block(0..2, 0..2), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn density_counts() {
        let counts = |n| {
            [
                type1_affinity(n).unwrap().nonzero_count(),
                type2_affinity(n).unwrap().nonzero_count(),
                type3_affinity(n).unwrap().nonzero_count(),
                type4_affinity(n).unwrap().nonzero_count(),
            ]
        };
        // Closed forms: 2N, 4N, N^2, 4N^2 - 2N.
        for n in 2..12 {
            assert_eq!(counts(n), [2 * n, 4 * n, n * n, 4 * n * n - 2 * n]);
        }
        // Type 2 and type 3 only separate once N > 4.
        assert_eq!(counts(3), [6, 12, 9, 30]);
        assert_eq!(counts(4), [8, 16, 16, 56]);
        for n in 5..12 {
            let c = counts(n);
            assert!(c.windows(2).all(|w| w[0] < w[1]), "N={n}: {c:?}");
        }
    }

    #[test]
    fn validate_rejects_bad_values_and_sizes() {
        let mut m = type4_affinity(2).unwrap();
        assert!(matches!(
            validate(&m, &dummy_batch(3), AffinityValues::Ternary),
            Err(GclError::Shape(_))
        ));
        m.set(0, 1, 0.5);
        assert!(validate(&m, &dummy_batch(2), AffinityValues::Ternary).is_err());
        assert!(validate(&m, &dummy_batch(2), AffinityValues::General).is_ok());
        m.set(0, 1, f64::INFINITY);
        assert!(validate(&m, &dummy_batch(2), AffinityValues::General).is_err());
    }

    #[test]
    fn all_zero_matrix_is_inactive() {
        let m = AffinityMatrix::zeros(2, 0);
        let mask = validate(&m, &dummy_batch(2), AffinityValues::Ternary).unwrap();
        assert_eq!(mask.active_count(), 0);
    }

    #[test]
    fn display_grid() {
        let m = type3_affinity(2).unwrap();
        assert_eq!(m.to_string(), "0 1 0 -1\n0 0 0 0\n0 -1 0 1\n0 0 0 0\n");
    }
}
