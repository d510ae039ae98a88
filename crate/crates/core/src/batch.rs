//! Representation batches.
//!
//! A [`RepresentationBatch`] is the flat set of embeddings a loss is evaluated
//! over. Every entry carries a `(group, index, slot)` tag. Entries are stored in
//! canonical order: labeled entries sorted by `(index, slot)`, then unlabeled
//! entries sorted the same way, so entry `(u, i, k)` lives at position
//! `2 * (offset_u + i) + k`. Affinity matrices use the same flattening.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;

use crate::error::{GclError, Result};

pub type Embedding = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    Labeled,
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    First,
    Second,
}

impl Slot {
    pub fn index(self) -> usize {
        match self {
            Slot::First => 0,
            Slot::Second => 1,
        }
    }

    pub fn other(self) -> Slot {
        match self {
            Slot::First => Slot::Second,
            Slot::Second => Slot::First,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchEntry {
    pub z: Embedding,
    pub group: Group,
    /// Zero-based class (labeled) or sample (unlabeled) index within the group.
    pub index: usize,
    pub slot: Slot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationBatch {
    entries: Vec<BatchEntry>,
    n_labeled: usize,
    n_unlabeled: usize,
    dim: usize,
}

impl RepresentationBatch {
    /// Builds a single-group batch from `(slot 1, slot 2)` embedding pairs.
    pub fn from_pairs(group: Group, pairs: Vec<(Embedding, Embedding)>) -> Result<Self> {
        let dim = pairs.first().map(|(a, _)| a.len()).unwrap_or(0);
        let mut entries = Vec::with_capacity(2 * pairs.len());
        for (index, (first, second)) in pairs.into_iter().enumerate() {
            for (slot, z) in [(Slot::First, first), (Slot::Second, second)] {
                check_embedding(&z, dim)?;
                entries.push(BatchEntry {
                    z,
                    group,
                    index,
                    slot,
                });
            }
        }
        let n = entries.len() / 2;
        let (n_labeled, n_unlabeled) = match group {
            Group::Labeled => (n, 0),
            Group::Unlabeled => (0, n),
        };
        Ok(Self {
            entries,
            n_labeled,
            n_unlabeled,
            dim,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            entries: Vec::new(),
            n_labeled: 0,
            n_unlabeled: 0,
            dim,
        }
    }

    pub fn entries(&self) -> &[BatchEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_labeled(&self) -> usize {
        self.n_labeled
    }

    pub fn n_unlabeled(&self) -> usize {
        self.n_unlabeled
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embedding(&self, pos: usize) -> &[f64] {
        &self.entries[pos].z
    }

    pub fn embeddings(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.iter().map(|e| e.z.as_slice())
    }

    /// Canonical flattened position of `(group, index, slot)`.
    pub fn position(&self, group: Group, index: usize, slot: Slot) -> Option<usize> {
        let (offset, count) = match group {
            Group::Labeled => (0, self.n_labeled),
            Group::Unlabeled => (self.n_labeled, self.n_unlabeled),
        };
        (index < count).then(|| 2 * (offset + index) + slot.index())
    }

    /// Returns a copy with every embedding replaced by `f(position, z)`.
    pub fn map_embeddings(&self, mut f: impl FnMut(usize, &[f64]) -> Embedding) -> Result<Self> {
        let mapped: Vec<Embedding> = self
            .entries
            .iter()
            .enumerate()
            .map(|(pos, e)| f(pos, &e.z))
            .collect();
        let dim = mapped.first().map_or(self.dim, Vec::len);
        let mut out = self.clone();
        for (entry, z) in out.entries.iter_mut().zip(mapped) {
            check_embedding(&z, dim)?;
            entry.z = z;
        }
        out.dim = dim;
        Ok(out)
    }
}

fn check_embedding(z: &[f64], dim: usize) -> Result<()> {
    if z.len() != dim {
        return Err(GclError::Shape(format!(
            "embedding of length {} in a batch of dimension {dim}",
            z.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(GclError::Numeric("embedding has non-finite entries".into()));
    }
    Ok(())
}

fn mean(vectors: &[Embedding]) -> Embedding {
    let dim = vectors[0].len();
    let mut acc = vec![0.0; dim];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let inv = 1.0 / vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    acc
}

/// Labeled utterances grouped by class.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    classes: BTreeMap<usize, Vec<usize>>,
}

impl LabeledSet {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(GclError::Shape(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (pos, &label) in labels.iter().enumerate() {
            classes.entry(label).or_default().push(pos);
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.classes.iter().map(|(c, m)| (*c, m.as_slice()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMiniBatch {
    pub labels: Vec<usize>,
    /// `samples[i][k]` is the k-th feature vector drawn for class `labels[i]`.
    pub samples: Vec<Vec<Vec<f64>>>,
}

impl LabeledMiniBatch {
    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledMiniBatch {
    pub samples: Vec<Vec<f64>>,
}

/// Draws `n_classes` distinct classes, then `per_class` distinct samples from
/// each, yielding `n_classes * per_class` samples.
pub fn two_step_sample<R: Rng + ?Sized>(
    set: &LabeledSet,
    n_classes: usize,
    per_class: usize,
    rng: &mut R,
) -> Result<LabeledMiniBatch> {
    if n_classes == 0 || per_class == 0 {
        return Err(GclError::Param(
            "two-step sampling needs at least one class and one sample".into(),
        ));
    }
    let eligible: Vec<(usize, &[usize])> = set
        .classes()
        .filter(|(_, members)| members.len() >= per_class)
        .collect();
    if eligible.len() < n_classes {
        return Err(GclError::Capacity(format!(
            "{n_classes} classes with at least {per_class} samples requested, {} available",
            eligible.len()
        )));
    }
    let mut labels = Vec::with_capacity(n_classes);
    let mut samples = Vec::with_capacity(n_classes);
    for c in index::sample(rng, eligible.len(), n_classes) {
        let (label, members) = eligible[c];
        let picks = index::sample(rng, members.len(), per_class);
        labels.push(label);
        samples.push(
            picks
                .into_iter()
                .map(|m| set.features[members[m]].clone())
                .collect(),
        );
    }
    Ok(LabeledMiniBatch { labels, samples })
}

/// Slot 1 is the query (first encoding of each class); slot 2 is the mean of
/// the remaining `K' - 1` support encodings.
pub fn build_prototype_batch(encoded: &[Vec<Embedding>]) -> Result<RepresentationBatch> {
    query_prototype_pairs(encoded, Group::Labeled)
}

/// Multi-view extension for unlabeled samples: slot 1 is the first view,
/// slot 2 the mean of the remaining views. Experimental.
pub fn build_multiview_batch(views: &[Vec<Embedding>]) -> Result<RepresentationBatch> {
    query_prototype_pairs(views, Group::Unlabeled)
}

fn query_prototype_pairs(encoded: &[Vec<Embedding>], group: Group) -> Result<RepresentationBatch> {
    let mut pairs = Vec::with_capacity(encoded.len());
    for (i, row) in encoded.iter().enumerate() {
        if row.len() < 2 {
            return Err(GclError::Shape(format!(
                "entry {i} has {} encodings, at least 2 required",
                row.len()
            )));
        }
        pairs.push((row[0].clone(), mean(&row[1..])));
    }
    RepresentationBatch::from_pairs(group, pairs)
}

/// Routes a gradient over a prototype batch back to the `N x K'` encodings it
/// was built from.
pub fn scatter_prototype_grad(grad: &[Embedding], per_class: usize) -> Result<Vec<Vec<Embedding>>> {
    if per_class < 2 || !grad.len().is_multiple_of(2) {
        return Err(GclError::Shape(
            "prototype gradient needs K' >= 2 and paired entries".into(),
        ));
    }
    let share = 1.0 / (per_class - 1) as f64;
    Ok(grad
        .chunks(2)
        .map(|pair| {
            let support: Embedding = pair[1].iter().map(|g| g * share).collect();
            std::iter::once(pair[0].clone())
                .chain(std::iter::repeat_n(support, per_class - 1))
                .collect()
        })
        .collect())
}

/// Slot 1 is the encoded query, slot 2 a per-class weight vector used as the
/// prototype.
pub fn build_weight_batch(encoded: &[Embedding], weights: &[Embedding]) -> Result<RepresentationBatch> {
    if encoded.len() != weights.len() {
        return Err(GclError::Shape(format!(
            "{} queries but {} weight vectors",
            encoded.len(),
            weights.len()
        )));
    }
    let pairs = encoded
        .iter()
        .cloned()
        .zip(weights.iter().cloned())
        .collect();
    RepresentationBatch::from_pairs(Group::Labeled, pairs)
}

/// A per-sample view transform.
pub trait ViewTransform {
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityView;

impl ViewTransform for IdentityView {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

/// Slot `k` of sample `i` is `encode(t_k[i](u_i))`.
pub fn build_augmented_batch<T, F>(
    samples: &UnlabeledMiniBatch,
    first: &[T],
    second: &[T],
    mut encode: F,
) -> Result<RepresentationBatch>
where
    T: ViewTransform,
    F: FnMut(&[f64]) -> Result<Embedding>,
{
    let n = samples.samples.len();
    if first.len() != n || second.len() != n {
        return Err(GclError::Shape(format!(
            "{n} samples but {}/{} transforms",
            first.len(),
            second.len()
        )));
    }
    let mut pairs = Vec::with_capacity(n);
    for ((u, t1), t2) in samples.samples.iter().zip(first).zip(second) {
        let z1 = encode(&t1.apply(u))?;
        let z2 = encode(&t2.apply(u))?;
        pairs.push((z1, z2));
    }
    RepresentationBatch::from_pairs(Group::Unlabeled, pairs)
}

/// Concatenates an all-labeled batch and an all-unlabeled batch.
pub fn merge_semi_batch(
    labeled: &RepresentationBatch,
    unlabeled: &RepresentationBatch,
) -> Result<RepresentationBatch> {
    if labeled.n_unlabeled > 0 {
        return Err(GclError::Composition(
            "labeled part contains unlabeled entries".into(),
        ));
    }
    if unlabeled.n_labeled > 0 {
        return Err(GclError::Composition(
            "unlabeled part contains labeled entries".into(),
        ));
    }
    if unlabeled.is_empty() {
        return Ok(labeled.clone());
    }
    if labeled.is_empty() {
        return Ok(unlabeled.clone());
    }
    if labeled.dim != unlabeled.dim {
        return Err(GclError::Composition(format!(
            "dimension {} vs {}",
            labeled.dim, unlabeled.dim
        )));
    }
    let mut entries = labeled.entries.clone();
    entries.extend(unlabeled.entries.iter().cloned());
    Ok(RepresentationBatch {
        entries,
        n_labeled: labeled.n_labeled,
        n_unlabeled: unlabeled.n_unlabeled,
        dim: labeled.dim,
    })
}

/// Inverse of [`merge_semi_batch`].
pub fn split_by_group(batch: &RepresentationBatch) -> (RepresentationBatch, RepresentationBatch) {
    let cut = 2 * batch.n_labeled;
    let part = |entries: &[BatchEntry], n_labeled, n_unlabeled| RepresentationBatch {
        entries: entries.to_vec(),
        n_labeled,
        n_unlabeled,
        dim: batch.dim,
    };
    (
        part(&batch.entries[..cut], batch.n_labeled, 0),
        part(&batch.entries[cut..], 0, batch.n_unlabeled),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamName};

    fn toy_set(classes: usize, per_class: usize) -> LabeledSet {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for k in 0..per_class {
                features.push(vec![c as f64, k as f64]);
                labels.push(c);
            }
        }
        LabeledSet::new(features, labels).unwrap()
    }

    #[test]
    fn two_step_sample_shapes() {
        let set = toy_set(6, 5);
        let mut rng = stream(1, StreamName::Batches);
        let mb = two_step_sample(&set, 2, 3, &mut rng).unwrap();
        assert_eq!(mb.n_classes(), 2);
        assert_eq!(mb.n_samples(), 6);
        assert_ne!(mb.labels[0], mb.labels[1]);
        for (label, rows) in mb.labels.iter().zip(&mb.samples) {
            let mut ks: Vec<i64> = rows.iter().map(|r| r[1] as i64).collect();
            assert!(rows.iter().all(|r| r[0] as usize == *label));
            ks.sort_unstable();
            ks.dedup();
            assert_eq!(ks.len(), 3, "drawn without replacement");
        }
    }

    #[test]
    fn two_step_sample_single_pair() {
        let set = toy_set(1, 2);
        let mut rng = stream(3, StreamName::Batches);
        let mb = two_step_sample(&set, 1, 2, &mut rng).unwrap();
        let mut rows = mb.samples[0].clone();
        rows.sort_by(|a, b| a[1].total_cmp(&b[1]));
        assert_eq!(rows, vec![vec![0.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn two_step_sample_is_deterministic() {
        let set = toy_set(4, 4);
        let a = two_step_sample(&set, 2, 2, &mut stream(9, StreamName::Batches)).unwrap();
        let b = two_step_sample(&set, 2, 2, &mut stream(9, StreamName::Batches)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_step_sample_capacity_errors() {
        let set = toy_set(3, 2);
        let mut rng = stream(0, StreamName::Batches);
        assert!(matches!(
            two_step_sample(&set, 4, 2, &mut rng),
            Err(GclError::Capacity(_))
        ));
        assert!(matches!(
            two_step_sample(&set, 2, 3, &mut rng),
            Err(GclError::Capacity(_))
        ));
    }

    #[test]
    fn prototype_of_single_support_is_that_support() {
        let batch = build_prototype_batch(&[vec![vec![1.0, 2.0], vec![3.0, 4.0]]]).unwrap();
        assert_eq!(batch.embedding(1), &[3.0, 4.0]);
    }

    #[test]
    fn prototype_is_support_mean() {
        let batch =
            build_prototype_batch(&[vec![vec![9.0, 9.0], vec![1.0, 0.0], vec![0.0, 1.0]]]).unwrap();
        assert_eq!(batch.embedding(0), &[9.0, 9.0]);
        assert_eq!(batch.embedding(1), &[0.5, 0.5]);
    }

    #[test]
    fn prototype_batch_cardinality() {
        let batch = build_prototype_batch(&[
            vec![vec![0.0], vec![1.0]],
            vec![vec![2.0], vec![3.0]],
        ])
        .unwrap();
        assert_eq!(batch.len(), 4);
        assert_eq!(batch.n_labeled(), 2);
        assert_eq!(batch.n_unlabeled(), 0);
        for i in 0..2 {
            for slot in [Slot::First, Slot::Second] {
                let pos = batch.position(Group::Labeled, i, slot).unwrap();
                let e = &batch.entries()[pos];
                assert_eq!((e.index, e.slot, e.group), (i, slot, Group::Labeled));
            }
        }
    }

    #[test]
    fn prototype_batch_rejects_single_encoding() {
        assert!(matches!(
            build_prototype_batch(&[vec![vec![0.0]]]),
            Err(GclError::Shape(_))
        ));
    }

    #[test]
    fn scatter_splits_prototype_gradient_evenly() {
        let grads = vec![vec![1.0, 2.0], vec![3.0, 6.0]];
        let out = scatter_prototype_grad(&grads, 4).unwrap();
        assert_eq!(out[0][0], vec![1.0, 2.0]);
        for k in 1..4 {
            assert_eq!(out[0][k], vec![1.0, 2.0]);
        }
    }

    #[test]
    fn weight_batch_passes_weights_through() {
        let mut rng = stream(5, StreamName::Init);
        let q: Vec<Embedding> = (0..3).map(|_| vec![rng.random(), rng.random()]).collect();
        let w: Vec<Embedding> = (0..3).map(|_| vec![rng.random(), rng.random()]).collect();
        let batch = build_weight_batch(&q, &w).unwrap();
        assert_eq!(batch.len(), 6);
        for i in 0..3 {
            assert_eq!(batch.embedding(2 * i + 1), w[i].as_slice());
        }
        assert_eq!(build_weight_batch(&q[..1], &w[..1]).unwrap().len(), 2);
        assert!(matches!(
            build_weight_batch(&q, &[vec![1.0], vec![1.0], vec![1.0]]),
            Err(GclError::Shape(_))
        ));
    }

    #[test]
    fn identity_views_duplicate_slots() {
        let samples = UnlabeledMiniBatch {
            samples: vec![vec![1.0, -1.0], vec![0.5, 2.0]],
        };
        let ids = [IdentityView, IdentityView];
        let batch =
            build_augmented_batch(&samples, &ids, &ids, |x| Ok(x.iter().map(|v| v * 2.0).collect()))
                .unwrap();
        assert_eq!(batch.len(), 4);
        assert_eq!(batch.n_unlabeled(), 2);
        assert_eq!(batch.embedding(0), batch.embedding(1));
        assert_eq!(batch.embedding(2), batch.embedding(3));
    }

    #[test]
    fn augmented_batch_propagates_encoder_failure() {
        let samples = UnlabeledMiniBatch {
            samples: vec![vec![1.0]],
        };
        let err = build_augmented_batch(&samples, &[IdentityView], &[IdentityView], |_| {
            Err(GclError::Numeric("boom".into()))
        });
        assert!(matches!(err, Err(GclError::Numeric(_))));
    }

    #[test]
    fn merge_and_split_round_trip() {
        let z0 = RepresentationBatch::from_pairs(
            Group::Labeled,
            vec![(vec![0.0, 1.0], vec![1.0, 0.0]), (vec![2.0, 2.0], vec![3.0, 3.0])],
        )
        .unwrap();
        let z1 = RepresentationBatch::from_pairs(
            Group::Unlabeled,
            (0..3).map(|i| (vec![i as f64, 0.0], vec![0.0, i as f64])).collect(),
        )
        .unwrap();
        let merged = merge_semi_batch(&z0, &z1).unwrap();
        assert_eq!(merged.len(), 10);
        assert_eq!(merged.n_labeled(), 2);
        assert_eq!(merged.n_unlabeled(), 3);
        assert_eq!(merged.position(Group::Unlabeled, 0, Slot::First), Some(4));
        let (a, b) = split_by_group(&merged);
        assert_eq!(a, z0);
        assert_eq!(b, z1);
        assert_eq!(merge_semi_batch(&z0, &RepresentationBatch::empty(2)).unwrap(), z0);
    }

    #[test]
    fn merge_rejects_bad_composition() {
        let z0 = RepresentationBatch::from_pairs(Group::Labeled, vec![(vec![0.0], vec![1.0])]).unwrap();
        let z1 =
            RepresentationBatch::from_pairs(Group::Unlabeled, vec![(vec![0.0, 1.0], vec![1.0, 0.0])])
                .unwrap();
        assert!(matches!(merge_semi_batch(&z1, &z0), Err(GclError::Composition(_))));
        assert!(matches!(merge_semi_batch(&z0, &z1), Err(GclError::Composition(_))));
    }

    #[test]
    fn from_pairs_rejects_ragged_and_non_finite() {
        assert!(RepresentationBatch::from_pairs(Group::Labeled, vec![(vec![0.0], vec![0.0, 1.0])]).is_err());
        assert!(matches!(
            RepresentationBatch::from_pairs(Group::Labeled, vec![(vec![f64::NAN], vec![0.0])]),
            Err(GclError::Numeric(_))
        ));
    }
}
