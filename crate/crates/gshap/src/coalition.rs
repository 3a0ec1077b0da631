//! Coalitions of players, exact Shapley kernel weights, and feature
//! partitions.
//!
//! A player is either an individual feature or a feature group; both kinds of
//! Shapley computation run on the same coalition machinery. Coalitions are
//! 64-bit masks, which caps the player count at 63; exact enumeration is
//! additionally refused above a configurable soft cap because the powerset
//! sum grows as `2^players`.

use std::collections::BTreeSet;
use std::fmt;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};
use serde_json::Value;

use crate::error::{Error, Result};

/// Hard capacity of the bitmask representation.
pub const MAX_PLAYERS: usize = 63;

/// Default refusal cap for exact powerset enumeration.
pub const DEFAULT_PLAYER_CAP: usize = 25;

/// A subset of players identified by a bitmask over indices `0..player_count`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct Coalition {
    mask: u64,
}

impl Coalition {
    pub const EMPTY: Coalition = Coalition { mask: 0 };

    pub fn from_mask(mask: u64) -> Self {
        Coalition { mask }
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = 0u64;
        for i in indices {
            debug_assert!(i < 64);
            mask |= 1 << i;
        }
        Coalition { mask }
    }

    /// The coalition of all `n` players.
    pub fn grand(n: usize) -> Self {
        debug_assert!(n <= MAX_PLAYERS);
        if n == 0 {
            Coalition::EMPTY
        } else {
            Coalition {
                mask: (1u64 << n) - 1,
            }
        }
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    /// Number of members (popcount).
    pub fn size(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn contains(&self, player: usize) -> bool {
        player < 64 && self.mask & (1 << player) != 0
    }

    pub fn with(&self, player: usize) -> Self {
        debug_assert!(player < 64);
        Coalition {
            mask: self.mask | (1 << player),
        }
    }

    pub fn union(&self, other: Coalition) -> Self {
        Coalition {
            mask: self.mask | other.mask,
        }
    }

    /// Member indices in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..64).filter(move |i| self.mask & (1 << i) != 0)
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Iterator over all subsets of `player_count` players that exclude one
/// designated player.
pub struct SubsetIter {
    next: u64,
    count: u64,
    excluded: u32,
}

impl Iterator for SubsetIter {
    type Item = Coalition;

    fn next(&mut self) -> Option<Coalition> {
        if self.next == self.count {
            return None;
        }
        let k = self.next;
        self.next += 1;
        // Insert a zero bit at the excluded position.
        let low = k & ((1u64 << self.excluded) - 1);
        let high = (k >> self.excluded) << (self.excluded + 1);
        Some(Coalition::from_mask(low | high))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rem = (self.count - self.next) as usize;
        (rem, Some(rem))
    }
}

/// Enumerate every coalition `S ⊆ {0..player_count} \ {excluded_player}`,
/// i.e. the summation domain of the Shapley formula for that player.
///
/// Yields exactly `2^(player_count-1)` coalitions, each once, with the
/// default enumeration cap of [`DEFAULT_PLAYER_CAP`] players.
pub fn enumerate_subsets(player_count: usize, excluded_player: usize) -> Result<SubsetIter> {
    enumerate_subsets_capped(player_count, excluded_player, DEFAULT_PLAYER_CAP)
}

/// [`enumerate_subsets`] with an explicit refusal cap.
pub fn enumerate_subsets_capped(
    player_count: usize,
    excluded_player: usize,
    cap: usize,
) -> Result<SubsetIter> {
    if player_count > MAX_PLAYERS {
        return Err(Error::PlayerCapacity(player_count));
    }
    if player_count > cap {
        return Err(Error::EnumerationCap {
            players: player_count,
            cap,
        });
    }
    if player_count == 0 || excluded_player >= player_count {
        return Err(Error::InvalidArgument(format!(
            "excluded player {excluded_player} not in 0..{player_count}"
        )));
    }
    Ok(SubsetIter {
        next: 0,
        count: 1u64 << (player_count - 1),
        excluded: excluded_player as u32,
    })
}

/// Exact Shapley kernel weight `|S|! (P - |S| - 1)! / P!`.
///
/// Held as a rational over big integers; converted to floating point only
/// when aggregating contributions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapleyWeight {
    value: BigRational,
}

impl ShapleyWeight {
    pub fn exact(&self) -> &BigRational {
        &self.value
    }

    pub fn as_f64(&self) -> f64 {
        self.value.to_f64().expect("weight fits in f64")
    }
}

fn factorial(n: usize) -> BigInt {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= BigInt::from(k);
    }
    acc
}

/// Weight of a coalition of `coalition_size` players out of `player_count`.
pub fn shapley_weight(coalition_size: usize, player_count: usize) -> Result<ShapleyWeight> {
    if player_count == 0 || coalition_size >= player_count {
        return Err(Error::WeightDomain {
            size: coalition_size,
            players: player_count,
        });
    }
    let numer = factorial(coalition_size) * factorial(player_count - coalition_size - 1);
    let denom = factorial(player_count);
    Ok(ShapleyWeight {
        value: BigRational::new(numer, denom),
    })
}

/// All weights for a fixed player count, as f64, indexed by coalition size.
pub(crate) fn weight_row(player_count: usize) -> Result<Vec<f64>> {
    (0..player_count)
        .map(|s| shapley_weight(s, player_count).map(|w| w.as_f64()))
        .collect()
}

/// One labelled group of a [`FeaturePartition`].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGroup {
    label: String,
    members: Vec<usize>,
    mask: u64,
}

impl FeatureGroup {
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Member feature indices, ascending.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn coalition(&self) -> Coalition {
        Coalition::from_mask(self.mask)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// A validated partition of the feature set `{0..M}` into disjoint,
/// covering, non-empty groups.
///
/// Group order is preserved from construction but carries no meaning:
/// explanations key their output by group label, and any permutation of the
/// group list yields the same values per label.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePartition {
    groups: Vec<FeatureGroup>,
    m: usize,
}

impl FeaturePartition {
    /// Validate unlabelled index sets; groups are labelled `G1..Gk` in order.
    pub fn new(groups: Vec<Vec<usize>>, m: usize) -> Result<Self> {
        let labelled = groups
            .into_iter()
            .enumerate()
            .map(|(i, g)| (format!("G{}", i + 1), g))
            .collect();
        Self::with_labels(labelled, m)
    }

    /// Validate labelled index sets.
    pub fn with_labels(groups: Vec<(String, Vec<usize>)>, m: usize) -> Result<Self> {
        if m == 0 || m > MAX_PLAYERS {
            return Err(Error::InvalidArgument(format!(
                "feature count {m} not in 1..={MAX_PLAYERS}"
            )));
        }
        if groups.is_empty() {
            return Err(Error::InvalidArgument(
                "partition must contain at least one group".into(),
            ));
        }
        let mut owner: Vec<Option<usize>> = vec![None; m];
        let mut out = Vec::with_capacity(groups.len());
        for (gi, (label, members)) in groups.into_iter().enumerate() {
            if label.is_empty() {
                return Err(Error::InvalidArgument(
                    "partition group labels must be non-empty".into(),
                ));
            }
            if members.is_empty() {
                return Err(Error::PartitionEmptyGroup { group: label });
            }
            let mut sorted: Vec<usize> = members;
            sorted.sort_unstable();
            let mut mask = 0u64;
            for &f in &sorted {
                if f >= m {
                    return Err(Error::PartitionIndexRange {
                        feature: f,
                        group: label,
                        m,
                    });
                }
                if let Some(prev) = owner[f] {
                    let other: &FeatureGroup = &out[prev];
                    return Err(Error::PartitionOverlap {
                        feature: f,
                        group: label,
                        other: if prev == gi {
                            label.clone()
                        } else {
                            other.label.clone()
                        },
                    });
                }
                owner[f] = Some(gi);
                mask |= 1 << f;
            }
            // A duplicate inside one group also trips the overlap check above
            // because owner[f] is set on first sight.
            out.push(FeatureGroup {
                label,
                members: sorted,
                mask,
            });
        }
        if let Some(feature) = owner.iter().position(Option::is_none) {
            return Err(Error::PartitionGap { feature, m });
        }
        Ok(FeaturePartition { groups: out, m })
    }

    /// The trivial partition with one singleton group per feature.
    pub fn singletons(m: usize) -> Result<Self> {
        Self::new((0..m).map(|i| vec![i]).collect(), m)
    }

    /// Parse from a JSON document `{"M": n, "groups": {"<label>": [i, ...]}}`.
    ///
    /// Group order follows the document; labels are arbitrary non-empty
    /// strings and indices are 0-based.
    pub fn from_json_str(json: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(json)?;
        let m = doc
            .get("M")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::InvalidArgument("partition spec needs integer field 'M'".into()))?
            as usize;
        let groups = doc
            .get("groups")
            .and_then(Value::as_object)
            .ok_or_else(|| {
                Error::InvalidArgument("partition spec needs object field 'groups'".into())
            })?;
        let mut labelled = Vec::with_capacity(groups.len());
        for (label, indices) in groups {
            let arr = indices.as_array().ok_or_else(|| {
                Error::InvalidArgument(format!("group '{label}' must be an array of indices"))
            })?;
            let mut members = Vec::with_capacity(arr.len());
            for v in arr {
                let i = v.as_u64().ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "group '{label}' contains a non-integer index: {v}"
                    ))
                })? as usize;
                members.push(i);
            }
            labelled.push((label.clone(), members));
        }
        Self::with_labels(labelled, m)
    }

    /// Total feature count M.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of groups G.
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &FeatureGroup {
        &self.groups[i]
    }

    pub fn labels(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.label.clone()).collect()
    }

    /// Index of the group containing `feature`.
    pub fn group_of(&self, feature: usize) -> usize {
        self.groups
            .iter()
            .position(|g| g.coalition().contains(feature))
            .expect("partition covers every feature")
    }

    /// Expand a coalition over group indices into the coalition of all
    /// features contained in those groups.
    pub fn feature_mask(&self, group_coalition: Coalition) -> Coalition {
        let mut mask = 0u64;
        for (i, g) in self.groups.iter().enumerate() {
            if group_coalition.contains(i) {
                mask |= g.mask;
            }
        }
        Coalition::from_mask(mask)
    }

    /// Same partition with the group list reordered by `order` (a
    /// permutation of `0..G`).
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.groups.len() {
            return Err(Error::InvalidArgument(
                "permutation length must equal the group count".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        let mut groups = Vec::with_capacity(order.len());
        for &i in order {
            if i >= self.groups.len() || !seen.insert(i) {
                return Err(Error::InvalidArgument(format!(
                    "invalid group permutation index {i}"
                )));
            }
            groups.push(self.groups[i].clone());
        }
        Ok(FeaturePartition { groups, m: self.m })
    }
}

/// Validate raw index sets against a feature count (spec-level entry point).
pub fn validate_partition(groups: Vec<Vec<usize>>, m: usize) -> Result<FeaturePartition> {
    FeaturePartition::new(groups, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::FromPrimitive;
    use proptest::prelude::*;

    fn binomial(n: usize, k: usize) -> BigInt {
        factorial(n) / (factorial(k) * factorial(n - k))
    }

    #[test]
    fn enumerate_single_player() {
        let subsets: Vec<_> = enumerate_subsets(1, 0).unwrap().collect();
        assert_eq!(subsets, vec![Coalition::EMPTY]);
    }

    #[test]
    fn enumerate_three_players_excluding_middle() {
        let subsets: Vec<_> = enumerate_subsets(3, 1).unwrap().collect();
        let expect: Vec<Coalition> = [0b000u64, 0b001, 0b100, 0b101]
            .iter()
            .map(|&m| Coalition::from_mask(m))
            .collect();
        assert_eq!(subsets, expect);
    }

    #[test]
    fn enumerate_ten_players() {
        let subsets: Vec<_> = enumerate_subsets(10, 0).unwrap().collect();
        assert_eq!(subsets.len(), 512);
        assert!(subsets.iter().all(|s| !s.contains(0)));
        let mut sorted = subsets.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 512);
    }

    #[test]
    fn enumeration_matches_powerset_up_to_twelve_players() {
        for p in 1..=12usize {
            for j in [0, p / 2, p - 1] {
                let mut got: Vec<u64> = enumerate_subsets(p, j).unwrap().map(|c| c.mask()).collect();
                got.sort_unstable();
                let mut want: Vec<u64> = (0..1u64 << p)
                    .filter(|m| m & (1 << j) == 0)
                    .collect();
                want.sort_unstable();
                assert_eq!(got, want, "players={p} excluded={j}");
            }
        }
    }

    #[test]
    fn enumeration_caps() {
        assert!(matches!(
            enumerate_subsets(70, 0),
            Err(Error::PlayerCapacity(70))
        ));
        assert!(matches!(
            enumerate_subsets(30, 0),
            Err(Error::EnumerationCap {
                players: 30,
                cap: DEFAULT_PLAYER_CAP
            })
        ));
        assert!(enumerate_subsets_capped(30, 0, 35).is_ok());
    }

    #[test]
    fn weight_small_cases() {
        assert_eq!(shapley_weight(0, 1).unwrap().as_f64(), 1.0);
        let w = shapley_weight(1, 3).unwrap();
        assert_eq!(
            w.exact(),
            &BigRational::new(BigInt::from(1), BigInt::from(6))
        );
        assert!(matches!(
            shapley_weight(3, 3),
            Err(Error::WeightDomain { size: 3, players: 3 })
        ));
    }

    #[test]
    fn weights_over_enumerated_subsets_sum_to_one_exactly() {
        // Independent route: enumerate all 16 subsets of the other four
        // players and sum their exact weights.
        for j in 0..5 {
            let mut total = BigRational::zero();
            for s in enumerate_subsets(5, j).unwrap() {
                total += shapley_weight(s.size(), 5).unwrap().exact();
            }
            assert_eq!(total, BigRational::one());
        }
    }

    #[test]
    fn weight_normalization_exact_up_to_twenty_players() {
        for p in 1..=20usize {
            let mut total = BigRational::zero();
            for s in 0..p {
                let count = BigRational::from_integer(binomial(p - 1, s));
                total += count * shapley_weight(s, p).unwrap().exact();
            }
            assert_eq!(total, BigRational::one(), "players={p}");
        }
    }

    #[test]
    fn weights_positive() {
        for p in 1..=20usize {
            for s in 0..p {
                assert!(shapley_weight(s, p).unwrap().as_f64() > 0.0);
            }
        }
    }

    #[test]
    fn partition_paper_grouping_a_is_valid() {
        let p = FeaturePartition::new(
            vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![8, 9]],
            10,
        )
        .unwrap();
        assert_eq!(p.group_count(), 3);
        assert_eq!(p.group(2).members(), &[8, 9]);
        assert_eq!(p.group_of(5), 1);
    }

    #[test]
    fn partition_rejects_overlap_gap_empty_and_range() {
        let overlap = FeaturePartition::new(vec![vec![0], vec![0, 1]], 2);
        assert!(matches!(
            overlap,
            Err(Error::PartitionOverlap { feature: 0, .. })
        ));

        let gap = FeaturePartition::new(vec![vec![0, 1]], 3);
        assert!(matches!(gap, Err(Error::PartitionGap { feature: 2, m: 3 })));

        let empty = FeaturePartition::new(vec![vec![0, 1], vec![]], 2);
        assert!(matches!(empty, Err(Error::PartitionEmptyGroup { .. })));

        let range = FeaturePartition::new(vec![vec![0, 7]], 2);
        assert!(matches!(
            range,
            Err(Error::PartitionIndexRange { feature: 7, .. })
        ));
    }

    #[test]
    fn partition_from_json_keeps_document_order() {
        let p = FeaturePartition::from_json_str(
            r#"{"M": 4, "groups": {"cars": [2, 3], "people": [0, 1]}}"#,
        )
        .unwrap();
        assert_eq!(p.labels(), vec!["cars".to_string(), "people".to_string()]);
        assert_eq!(p.group(0).members(), &[2, 3]);
    }

    #[test]
    fn feature_mask_expands_groups() {
        let p = FeaturePartition::new(vec![vec![0, 1], vec![2], vec![3, 4]], 5).unwrap();
        let t = Coalition::from_indices([0, 2]);
        assert_eq!(p.feature_mask(t).mask(), 0b11011);
    }

    proptest! {
        #[test]
        fn coalition_roundtrip(mask in 0u64..(1 << 16)) {
            let c = Coalition::from_mask(mask);
            let back = Coalition::from_indices(c.iter());
            prop_assert_eq!(c, back);
            prop_assert_eq!(c.size(), mask.count_ones() as usize);
        }

        #[test]
        fn random_partitions_validate_or_fail_cleanly(
            assignment in proptest::collection::vec(0usize..4, 1..20)
        ) {
            // Build groups from a random assignment: always a valid partition
            // once empty groups are dropped.
            let m = assignment.len();
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); 4];
            for (f, &g) in assignment.iter().enumerate() {
                groups[g].push(f);
            }
            groups.retain(|g| !g.is_empty());
            let p = FeaturePartition::new(groups, m).unwrap();
            let total: usize = p.groups().iter().map(FeatureGroup::len).sum();
            prop_assert_eq!(total, m);
            prop_assert_eq!(p.feature_mask(Coalition::grand(p.group_count())),
                            Coalition::grand(m));
        }
    }

    #[test]
    fn weight_matches_f64_conversion() {
        let w = shapley_weight(3, 10).unwrap();
        let expect = BigRational::from_f64(w.as_f64()).unwrap();
        let diff = (w.exact() - expect).to_f64().unwrap().abs();
        assert!(diff < 1e-18);
    }
}
