//! Media-level split assignment: every patch of a media item inherits the
//! split of the whole item, stratified per (kind, label) class.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DatasetError, MediaItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Split proportions and the seed that keys the assignment. Granularity
/// is fixed at media level.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64, seed: u64) -> Result<Self, DatasetError> {
        let spec = SplitSpec {
            train_frac,
            val_frac,
            test_frac,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let sum = self.train_frac + self.val_frac + self.test_frac;
        if (sum - 1.0).abs() > 1e-9
            || self.train_frac < 0.0
            || self.val_frac < 0.0
            || self.test_frac < 0.0
        {
            return Err(DatasetError::BadSplitFractions([
                self.train_frac,
                self.val_frac,
                self.test_frac,
            ]));
        }
        Ok(())
    }

    /// The 80/10/10 protocol split.
    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            train_frac: 0.8,
            val_frac: 0.1,
            test_frac: 0.1,
            seed,
        }
    }
}

fn id_rank(seed: u64, id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Largest-remainder allocation of `n` items over the three fractions,
/// guaranteeing at least one item per nonzero fraction.
fn allocate(n: usize, spec: &SplitSpec) -> [usize; 3] {
    let fracs = [spec.train_frac, spec.val_frac, spec.test_frac];
    let ideal: Vec<f64> = fracs.iter().map(|f| f * n as f64).collect();
    let mut counts: [usize; 3] = [
        ideal[0].floor() as usize,
        ideal[1].floor() as usize,
        ideal[2].floor() as usize,
    ];
    let mut assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        (ideal[b] - counts[b] as f64)
            .partial_cmp(&(ideal[a] - counts[a] as f64))
            .expect("finite")
    });
    let mut cursor = 0;
    while assigned < n {
        counts[order[cursor % 3]] += 1;
        assigned += 1;
        cursor += 1;
    }
    // every nonzero fraction must land at least one item
    for i in 0..3 {
        if fracs[i] > 0.0 && counts[i] == 0 {
            let donor = (0..3)
                .max_by_key(|&j| counts[j])
                .expect("three splits");
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    counts
}

/// Assign a split to every media item. The assignment is a deterministic
/// function of (item id, seed): items are ranked per class by a keyed
/// hash of their id, then sliced by the requested fractions.
pub fn assign_splits(
    items: &[MediaItem],
    spec: &SplitSpec,
) -> Result<BTreeMap<String, Split>, DatasetError> {
    spec.validate()?;
    let mut classes: BTreeMap<(super::MediaKind, String), Vec<&MediaItem>> = BTreeMap::new();
    for item in items {
        classes
            .entry((item.kind, item.platform_label.clone()))
            .or_default()
            .push(item);
    }
    let mut out = BTreeMap::new();
    for ((kind, label), mut members) in classes {
        if members.len() < 3 {
            return Err(DatasetError::TooFewMedia {
                class: format!("{kind:?}/{label}"),
                count: members.len(),
            });
        }
        members.sort_by_key(|m| id_rank(spec.seed, &m.id));
        let counts = allocate(members.len(), spec);
        for (i, member) in members.iter().enumerate() {
            let split = if i < counts[0] {
                Split::Train
            } else if i < counts[0] + counts[1] {
                Split::Val
            } else {
                Split::Test
            };
            out.insert(member.id.clone(), split);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::MediaKind;

    fn media(id: &str, label: &str) -> MediaItem {
        MediaItem {
            id: id.into(),
            kind: MediaKind::Video,
            platform_label: label.into(),
            source_path: id.into(),
            device_id: None,
        }
    }

    #[test]
    fn ten_videos_split_8_1_1() {
        let items: Vec<MediaItem> = (0..10).map(|i| media(&format!("v{i}"), "YT")).collect();
        let splits = assign_splits(&items, &SplitSpec::standard(5)).unwrap();
        let count = |s: Split| splits.values().filter(|&&v| v == s).count();
        assert_eq!(count(Split::Train), 8);
        assert_eq!(count(Split::Val), 1);
        assert_eq!(count(Split::Test), 1);
    }

    #[test]
    fn same_seed_same_assignment() {
        let items: Vec<MediaItem> = (0..25).map(|i| media(&format!("v{i}"), "YT")).collect();
        let a = assign_splits(&items, &SplitSpec::standard(42)).unwrap();
        let b = assign_splits(&items, &SplitSpec::standard(42)).unwrap();
        assert_eq!(a, b);
        let c = assign_splits(&items, &SplitSpec::standard(43)).unwrap();
        assert_ne!(a, c, "a different seed should shuffle the assignment");
    }

    #[test]
    fn two_media_in_a_class_is_error() {
        let items = vec![media("a", "YT"), media("b", "YT")];
        assert!(matches!(
            assign_splits(&items, &SplitSpec::standard(1)),
            Err(DatasetError::TooFewMedia { count: 2, .. })
        ));
    }

    #[test]
    fn fractions_must_sum_to_one() {
        assert!(SplitSpec::new(0.8, 0.1, 0.2, 1).is_err());
        assert!(SplitSpec::new(0.8, 0.1, 0.1, 1).is_ok());
    }

    #[test]
    fn every_nonzero_fraction_gets_an_item() {
        let items: Vec<MediaItem> = (0..3).map(|i| media(&format!("v{i}"), "YT")).collect();
        let splits = assign_splits(&items, &SplitSpec::standard(9)).unwrap();
        for s in [Split::Train, Split::Val, Split::Test] {
            assert!(splits.values().any(|&v| v == s), "missing {s:?}");
        }
    }

    #[test]
    fn classes_are_stratified_independently() {
        let mut items: Vec<MediaItem> = (0..10).map(|i| media(&format!("y{i}"), "YT")).collect();
        items.extend((0..10).map(|i| media(&format!("n{i}"), "NAT")));
        let splits = assign_splits(&items, &SplitSpec::standard(3)).unwrap();
        for label in ["y", "n"] {
            let train = (0..10)
                .filter(|i| splits[&format!("{label}{i}")] == Split::Train)
                .count();
            assert_eq!(train, 8, "class {label}");
        }
    }
}
