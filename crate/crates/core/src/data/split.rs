use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class validation draw: `per_class_from_train` samples from the train
/// set and `per_class_from_extra` from the extra set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub per_class_from_train: usize,
    pub per_class_from_extra: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            per_class_from_train: 400,
            per_class_from_extra: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SplitSource {
    Train,
    Extra,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSplit {
    /// Train-sourced indices first, then extra-sourced, each ascending.
    pub validation: Vec<(SplitSource, usize)>,
    pub train_rest: Vec<usize>,
    pub extra_rest: Vec<usize>,
}

fn draw(labels: &[u8], per_class: usize, rng: &mut ChaCha8Rng, source: &str) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut picked = Vec::with_capacity(per_class * 10);
    for class in 0..10u8 {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < per_class {
            return Err(Error::invalid(format!(
                "class {class} has {} {source} samples, {per_class} requested",
                members.len()
            )));
        }
        members.shuffle(rng);
        picked.extend_from_slice(&members[..per_class]);
    }
    picked.sort_unstable();
    let mut chosen = vec![false; labels.len()];
    for &i in &picked {
        chosen[i] = true;
    }
    let rest = (0..labels.len()).filter(|&i| !chosen[i]).collect();
    Ok((picked, rest))
}

/// Seeded uniform per-class draw from both sources. Validation and remainders
/// are disjoint and together cover every input index.
pub fn build_validation_split(train_labels: &[u8], extra_labels: &[u8], spec: &SplitSpec) -> Result<ValidationSplit> {
    if let Some(bad) = train_labels.iter().chain(extra_labels).find(|&&l| l > 9) {
        return Err(Error::invalid(format!("label {bad} outside 0..=9")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (train_val, train_rest) = draw(train_labels, spec.per_class_from_train, &mut rng, "train")?;
    rng.set_stream(1);
    let (extra_val, extra_rest) = draw(extra_labels, spec.per_class_from_extra, &mut rng, "extra")?;
    let validation = train_val
        .into_iter()
        .map(|i| (SplitSource::Train, i))
        .chain(extra_val.into_iter().map(|i| (SplitSource::Extra, i)))
        .collect();
    Ok(ValidationSplit {
        validation,
        train_rest,
        extra_rest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(per_class: usize) -> Vec<u8> {
        (0..10u8).flat_map(|c| std::iter::repeat(c).take(per_class)).collect()
    }

    #[test]
    fn exact_counts_exhaust_sources() {
        let s = build_validation_split(&balanced(400), &balanced(200), &SplitSpec::default()).unwrap();
        assert_eq!(s.validation.len(), 6000);
        assert!(s.train_rest.is_empty());
        assert!(s.extra_rest.is_empty());
    }

    #[test]
    fn deterministic_in_seed() {
        let (t, e) = (balanced(450), balanced(260));
        let spec = SplitSpec { seed: 5, ..SplitSpec::default() };
        assert_eq!(build_validation_split(&t, &e, &spec).unwrap(), build_validation_split(&t, &e, &spec).unwrap());
        let other = SplitSpec { seed: 6, ..SplitSpec::default() };
        assert_ne!(build_validation_split(&t, &e, &spec).unwrap(), build_validation_split(&t, &e, &other).unwrap());
    }

    #[test]
    fn insufficient_class_is_named() {
        let mut t = balanced(400);
        t.retain(|&l| l != 7);
        t.extend(std::iter::repeat(7).take(399));
        match build_validation_split(&t, &balanced(200), &SplitSpec::default()) {
            Err(Error::InvalidArgument(msg)) => assert!(msg.contains("class 7")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
