use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, Example, EXAMPLE_DIM, IMPLANT_INDEX};
use crate::rng;

/// Per-class slots in a stratified batch, `[negative, positive]`.
///
/// Each present class gets `batch_size · n_c / N` slots, floored, at least
/// one; leftover slots go to the largest remainders and any excess created
/// by the floor guard is taken from the largest quota.
pub fn sbs_quotas(batch_size: usize, counts: [usize; 2]) -> [usize; 2] {
    let total: usize = counts.iter().sum();
    let ideal = counts.map(|c| batch_size as f64 * c as f64 / total as f64);
    let mut quota = [0usize; 2];
    for c in 0..2 {
        if counts[c] > 0 {
            quota[c] = (ideal[c].floor() as usize).max(1);
        }
    }
    while quota.iter().sum::<usize>() < batch_size {
        let c = (0..2)
            .filter(|&c| counts[c] > 0)
            .max_by(|&a, &b| {
                (ideal[a] - quota[a] as f64)
                    .total_cmp(&(ideal[b] - quota[b] as f64))
                    .then(a.cmp(&b))
            })
            .expect("at least one class present");
        quota[c] += 1;
    }
    while quota.iter().sum::<usize>() > batch_size {
        let c = if quota[0] >= quota[1] { 0 } else { 1 };
        quota[c] -= 1;
    }
    quota
}

/// Cycles through a class in shuffled order, reshuffling at every pass.
#[derive(Debug, Clone)]
struct ClassCursor {
    members: Vec<usize>,
    next: usize,
}

impl ClassCursor {
    fn new(members: Vec<usize>, rng: &mut ChaCha8Rng) -> Self {
        let mut cursor = ClassCursor { members, next: 0 };
        cursor.members.shuffle(rng);
        cursor
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.next == self.members.len() {
            self.members.shuffle(rng);
            self.next = 0;
        }
        self.next += 1;
        self.members[self.next - 1]
    }
}

/// Endless iterator of index batches with fixed per-class quotas.
#[derive(Debug, Clone)]
pub struct StratifiedBatches {
    classes: [ClassCursor; 2],
    quotas: [usize; 2],
    len: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl StratifiedBatches {
    pub fn quotas(&self) -> [usize; 2] {
        self.quotas
    }

    /// Batches in one pass over the data, `⌈N / batch_size⌉`.
    pub fn batches_per_epoch(&self) -> usize {
        self.len.div_ceil(self.batch_size)
    }
}

impl Iterator for StratifiedBatches {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let mut batch = Vec::with_capacity(self.batch_size);
        for c in 0..2 {
            for _ in 0..self.quotas[c] {
                batch.push(self.classes[c].draw(&mut self.rng));
            }
        }
        Some(batch)
    }
}

/// Stratified batch sampling over `labels`. Sampling within a class is
/// without replacement until the class is exhausted, then reshuffled.
pub fn stratified_batches(
    labels: &[bool],
    batch_size: usize,
    seed: u64,
) -> Result<StratifiedBatches, DatasetError> {
    if batch_size < 2 {
        return Err(DatasetError::InvalidBatchSize(batch_size));
    }
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| labels[i]);
    if pos.is_empty() || neg.is_empty() {
        return Err(DatasetError::SingleClassDataset);
    }
    let quotas = sbs_quotas(batch_size, [neg.len(), pos.len()]);
    let mut rng = rng::stream(seed, rng::BATCHES);
    let classes = [ClassCursor::new(neg, &mut rng), ClassCursor::new(pos, &mut rng)];
    Ok(StratifiedBatches {
        classes,
        quotas,
        len: labels.len(),
        batch_size,
        rng,
    })
}

/// Endless iterator of uniformly shuffled index batches, reshuffled after
/// each pass over the data.
#[derive(Debug, Clone)]
pub struct ShuffledBatches {
    all: ClassCursor,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl ShuffledBatches {
    pub fn new(len: usize, batch_size: usize, seed: u64) -> Result<Self, DatasetError> {
        if batch_size < 1 || len == 0 {
            return Err(DatasetError::InvalidBatchSize(batch_size));
        }
        let mut rng = rng::stream(seed, rng::BATCHES);
        let all = ClassCursor::new((0..len).collect(), &mut rng);
        Ok(ShuffledBatches {
            all,
            batch_size: batch_size.min(len),
            rng,
        })
    }
}

impl Iterator for ShuffledBatches {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        Some((0..self.batch_size).map(|_| self.all.draw(&mut self.rng)).collect())
    }
}

struct Classes {
    minority: Vec<usize>,
    majority: Vec<usize>,
}

fn classes(examples: &[Example]) -> Result<Classes, DatasetError> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..examples.len()).partition(|&i| examples[i].label);
    if pos.is_empty() || neg.is_empty() {
        return Err(DatasetError::SingleClassDataset);
    }
    Ok(if pos.len() <= neg.len() {
        Classes {
            minority: pos,
            majority: neg,
        }
    } else {
        Classes {
            minority: neg,
            majority: pos,
        }
    })
}

fn check_ratio(ratio: f64) -> Result<(), DatasetError> {
    if ratio > 0.0 && ratio.is_finite() {
        Ok(())
    } else {
        Err(DatasetError::InvalidRatio(ratio))
    }
}

/// Drops majority examples uniformly until `minority / majority = ratio`.
/// Survivors keep their original order.
pub fn random_undersample(
    examples: &[Example],
    ratio: f64,
    seed: u64,
) -> Result<Vec<Example>, DatasetError> {
    check_ratio(ratio)?;
    let Classes { minority, majority } = classes(examples)?;
    let target = ((minority.len() as f64 / ratio).round() as usize).clamp(1, majority.len());
    let mut rng = rng::stream(seed, rng::RESAMPLE);
    let mut keep: Vec<usize> = index::sample(&mut rng, majority.len(), target)
        .into_iter()
        .map(|i| majority[i])
        .chain(minority)
        .collect();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| examples[i].clone()).collect())
}

/// Appends minority duplicates drawn with replacement until
/// `minority / majority = ratio`.
pub fn random_oversample(
    examples: &[Example],
    ratio: f64,
    seed: u64,
) -> Result<Vec<Example>, DatasetError> {
    check_ratio(ratio)?;
    let Classes { minority, majority } = classes(examples)?;
    let target = (ratio * majority.len() as f64).round() as usize;
    let extra = target.saturating_sub(minority.len());
    let mut rng = rng::stream(seed, rng::RESAMPLE);
    let mut out = examples.to_vec();
    out.extend((0..extra).map(|_| examples[minority[rng.random_range(0..minority.len())]].clone()));
    Ok(out)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Generates `n_new` synthetic minority examples by interpolating towards
/// one of the `k` nearest minority neighbours. Only the new examples are
/// returned. The implant flag is re-binarized at 0.5.
pub fn smote_interpolate(
    examples: &[Example],
    k: usize,
    n_new: usize,
    seed: u64,
) -> Result<Vec<Example>, DatasetError> {
    let Classes { minority, .. } = classes(examples)?;
    if minority.len() <= k || k == 0 {
        return Err(DatasetError::TooFewMinority {
            have: minority.len(),
            k,
        });
    }
    let neighbours: Vec<Vec<usize>> = minority
        .iter()
        .map(|&i| {
            let mut others: Vec<(f64, usize)> = minority
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (squared_distance(&examples[i].x, &examples[j].x), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();

    let mut rng = rng::stream(seed, rng::RESAMPLE);
    Ok((0..n_new)
        .map(|n| {
            let m = rng.random_range(0..minority.len());
            let base = &examples[minority[m]];
            let other = &examples[neighbours[m][rng.random_range(0..k)]];
            let u: f64 = rng.random();
            let mut x: Vec<f64> = base
                .x
                .iter()
                .zip(&other.x)
                .map(|(a, b)| a + u * (b - a))
                .collect();
            if x.len() == EXAMPLE_DIM {
                x[IMPLANT_INDEX] = if x[IMPLANT_INDEX] >= 0.5 { 1.0 } else { 0.0 };
            }
            Example {
                x,
                label: base.label,
                patient_id: base.patient_id.clone(),
                image_id: format!("smote-{n}"),
            }
        })
        .collect())
}
