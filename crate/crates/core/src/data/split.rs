use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{OsdaError, Result};

/// Known/unknown partition of a dataset's classes. Both lists hold original
/// class indices in ascending order of class name; a known class's position
/// in `known` is its compact training label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OsdaSplit {
    pub known: Vec<usize>,
    pub unknown: Vec<usize>,
}

/// Sort class names lexicographically and take the first `known_count` as
/// the known set.
pub fn make_osda_split(class_names: &[String], known_count: usize) -> Result<OsdaSplit> {
    if known_count == 0 || known_count >= class_names.len() {
        return Err(OsdaError::invalid(format!(
            "known_count must satisfy 0 < known_count < {} (number of classes), got {known_count}",
            class_names.len()
        )));
    }
    let mut seen = HashSet::new();
    for name in class_names {
        if !seen.insert(name.as_str()) {
            return Err(OsdaError::invalid(format!("duplicate class name `{name}`")));
        }
    }
    let mut order: Vec<usize> = (0..class_names.len()).collect();
    order.sort_by(|&a, &b| class_names[a].cmp(&class_names[b]));
    let unknown = order.split_off(known_count);
    Ok(OsdaSplit {
        known: order,
        unknown,
    })
}

impl OsdaSplit {
    pub fn num_known(&self) -> usize {
        self.known.len()
    }

    pub fn num_classes(&self) -> usize {
        self.known.len() + self.unknown.len()
    }

    /// Compact training label of an original class index, `None` for unknowns.
    pub fn compact_index(&self, class: usize) -> Option<usize> {
        self.known.iter().position(|&k| k == class)
    }

    pub fn known_names(&self, class_names: &[String]) -> Vec<String> {
        self.known.iter().map(|&k| class_names[k].clone()).collect()
    }

    pub fn unknown_names(&self, class_names: &[String]) -> Vec<String> {
        self.unknown.iter().map(|&k| class_names[k].clone()).collect()
    }

    pub(crate) fn validate_for(&self, class_names: &[String]) -> Result<()> {
        let mut all: Vec<usize> = self.known.iter().chain(&self.unknown).copied().collect();
        all.sort_unstable();
        if all != (0..class_names.len()).collect::<Vec<_>>() {
            return Err(OsdaError::invalid(format!(
                "split does not partition the {} classes of the dataset",
                class_names.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn smallest_valid_split() {
        let s = make_osda_split(&names(&["a", "b"]), 1).unwrap();
        assert_eq!(s.known, vec![0]);
        assert_eq!(s.unknown, vec![1]);
    }

    #[test]
    fn sorts_before_taking_known() {
        let n = names(&["zebra", "apple", "mug"]);
        let s = make_osda_split(&n, 2).unwrap();
        assert_eq!(s.known_names(&n), names(&["apple", "mug"]));
        assert_eq!(s.unknown_names(&n), names(&["zebra"]));
        assert_eq!(s.compact_index(1), Some(0));
        assert_eq!(s.compact_index(0), None);
    }

    #[test]
    fn rejects_bad_counts_and_duplicates() {
        let n = names(&["a", "b", "c"]);
        assert!(make_osda_split(&n, 0).is_err());
        assert!(make_osda_split(&n, 3).is_err());
        assert!(make_osda_split(&names(&["a", "a", "b"]), 1).is_err());
    }

    proptest! {
        #[test]
        fn partition_and_determinism(
            set in proptest::collection::hash_set("[a-z]{1,6}", 2..40),
            frac in 0.0f64..1.0,
        ) {
            let n: Vec<String> = set.into_iter().collect();
            let k = 1 + ((n.len() - 2) as f64 * frac) as usize;
            let s = make_osda_split(&n, k).unwrap();
            prop_assert_eq!(&s, &make_osda_split(&n, k).unwrap());
            prop_assert_eq!(s.known.len(), k);
            let mut all: Vec<usize> = s.known.iter().chain(&s.unknown).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n.len()).collect::<Vec<_>>());
            let max_known = s.known.iter().map(|&i| &n[i]).max().unwrap();
            prop_assert!(s.unknown.iter().all(|&i| &n[i] > max_known));
        }
    }
}
