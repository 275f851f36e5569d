use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::index::{Engine, SimilarityIndex};
use crate::error::{Error, Result};

/// A 1..5 Likert rating of one elicitation item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRating {
    pub item_id: String,
    pub rating: u8,
    #[serde(default)]
    pub is_attention_check: bool,
}

impl PreferenceRating {
    pub fn new(item_id: impl Into<String>, rating: u8) -> Result<Self> {
        let r = Self {
            item_id: item_id.into(),
            rating,
            is_attention_check: false,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.rating) {
            return Err(Error::OutOfRange(format!(
                "rating {} for `{}` is outside 1..5",
                self.rating, self.item_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingWeight {
    pub item_id: String,
    pub weight: f64,
}

/// Turns ratings into weights summing to one; attention checks carry none.
pub fn normalize_ratings(ratings: &[PreferenceRating]) -> Result<Vec<RatingWeight>> {
    for r in ratings {
        r.validate()?;
    }
    let kept: Vec<&PreferenceRating> = ratings.iter().filter(|r| !r.is_attention_check).collect();
    if kept.is_empty() {
        return Err(Error::NoPreferences);
    }
    let total: f64 = kept.iter().map(|r| f64::from(r.rating)).sum();
    Ok(kept
        .into_iter()
        .map(|r| RatingWeight {
            item_id: r.item_id.clone(),
            weight: f64::from(r.rating) / total,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationEntry {
    pub painting_id: String,
    pub aggregate_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub engine: Engine,
    pub entries: Vec<RecommendationEntry>,
    pub weights: Vec<RatingWeight>,
    /// Set when fewer than the requested number of paintings were available.
    pub truncated: bool,
}

impl RecommendationList {
    pub fn painting_ids(&self) -> Vec<&str> {
        self.entries
            .iter()
            .map(|e| e.painting_id.as_str())
            .collect()
    }
}

/// Top-`n` paintings by rating-weighted distance to the rated items, for
/// every painting the `admit` filter accepts.
pub fn recommend_filtered(
    index: &SimilarityIndex,
    ratings: &[PreferenceRating],
    n: usize,
    admit: impl Fn(&str) -> bool,
) -> Result<RecommendationList> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let weights = normalize_ratings(ratings)?;
    let rows = weights
        .iter()
        .map(|w| {
            index
                .row_index(&w.item_id)
                .ok_or_else(|| Error::UnknownItem(w.item_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    // Same-domain elicitation: never hand a rated painting back.
    let rated: HashSet<&str> = if index.engine().is_cross_domain() {
        HashSet::new()
    } else {
        ratings.iter().map(|r| r.item_id.as_str()).collect()
    };

    let mut scored: Vec<RecommendationEntry> = index
        .col_ids()
        .iter()
        .enumerate()
        .filter(|(_, id)| !rated.contains(id.as_str()) && admit(id))
        .map(|(j, id)| {
            let aggregate = rows
                .iter()
                .zip(&weights)
                .map(|(&i, w)| w.weight * index.distance(i, j))
                .sum();
            RecommendationEntry {
                painting_id: id.clone(),
                aggregate_distance: aggregate,
            }
        })
        .collect();
    scored.sort_by(|a, b| {
        a.aggregate_distance
            .total_cmp(&b.aggregate_distance)
            .then_with(|| a.painting_id.cmp(&b.painting_id))
    });
    let truncated = scored.len() < n;
    scored.truncate(n);
    Ok(RecommendationList {
        engine: index.engine(),
        entries: scored,
        weights,
        truncated,
    })
}

pub fn recommend(
    index: &SimilarityIndex,
    ratings: &[PreferenceRating],
    n: usize,
) -> Result<RecommendationList> {
    recommend_filtered(index, ratings, n, |_| true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Semantics;
    use ndarray::array;
    use std::collections::BTreeMap;

    fn rating(id: &str, r: u8) -> PreferenceRating {
        PreferenceRating::new(id, r).unwrap()
    }

    fn toy(
        engine: Engine,
        semantics: Semantics,
        values: ndarray::Array2<f64>,
        rows: &[&str],
        cols: &[&str],
    ) -> SimilarityIndex {
        SimilarityIndex::new(
            engine,
            semantics,
            rows.iter().map(|s| s.to_string()).collect(),
            cols.iter().map(|s| s.to_string()).collect(),
            values,
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn normalization_examples() {
        let w = normalize_ratings(&[rating("a", 5)]).unwrap();
        assert_eq!(w[0].weight, 1.0);
        let w = normalize_ratings(&[rating("a", 2), rating("b", 2)]).unwrap();
        assert_eq!((w[0].weight, w[1].weight), (0.5, 0.5));
        let w = normalize_ratings(&[rating("a", 1), rating("b", 4)]).unwrap();
        assert_eq!((w[0].weight, w[1].weight), (0.2, 0.8));
        let check = PreferenceRating {
            is_attention_check: true,
            ..rating("c", 1)
        };
        assert!(matches!(
            normalize_ratings(std::slice::from_ref(&check)),
            Err(Error::NoPreferences)
        ));
        let w = normalize_ratings(&[check, rating("a", 3)]).unwrap();
        assert_eq!(w.len(), 1);
        assert!(PreferenceRating::new("x", 6).is_err());
        assert!(PreferenceRating::new("x", 0).is_err());
    }

    #[test]
    fn single_rating_follows_row_order() {
        let idx = toy(
            Engine::Haydn,
            Semantics::Distance,
            array![[0.4, 0.1, 0.3, 0.2]],
            &["m"],
            &["a", "b", "c", "d"],
        );
        let list = recommend(&idx, &[rating("m", 3)], 4).unwrap();
        assert_eq!(list.painting_ids(), vec!["b", "d", "c", "a"]);
        assert!(!list.truncated);
    }

    #[test]
    fn weighted_two_track_example() {
        // weights 0.2 / 0.8
        let idx = toy(
            Engine::Mozart,
            Semantics::Distance,
            array![[0.0, 1.0, 2.0, 3.0], [3.0, 2.0, 1.0, 0.0]],
            &["m1", "m2"],
            &["p1", "p2", "p3", "p4"],
        );
        let list = recommend(&idx, &[rating("m1", 1), rating("m2", 4)], 4).unwrap();
        // p1: 2.4, p2: 1.8, p3: 1.2, p4: 0.6
        assert_eq!(list.painting_ids(), vec!["p4", "p3", "p2", "p1"]);
        assert!((list.entries[0].aggregate_distance - 0.6).abs() < 1e-12);
    }

    #[test]
    fn ties_break_by_id_and_truncation_flags() {
        let idx = toy(
            Engine::Haydn,
            Semantics::Distance,
            array![[0.5, 0.5, 0.1]],
            &["m"],
            &["z", "a", "k"],
        );
        let list = recommend(&idx, &[rating("m", 2)], 5).unwrap();
        assert_eq!(list.painting_ids(), vec!["k", "a", "z"]);
        assert!(list.truncated);
    }

    #[test]
    fn similarity_indices_rank_by_one_minus_similarity() {
        let idx = toy(
            Engine::Salieri,
            Semantics::Similarity,
            array![[0.9, -0.2, 0.5]],
            &["m"],
            &["a", "b", "c"],
        );
        let list = recommend(&idx, &[rating("m", 5)], 2).unwrap();
        assert_eq!(list.painting_ids(), vec!["a", "c"]);
        assert!((list.entries[0].aggregate_distance - 0.1).abs() < 1e-12);
    }

    #[test]
    fn visual_engine_skips_rated_paintings() {
        let idx = toy(
            Engine::Visual,
            Semantics::Similarity,
            array![[1.0, 0.9, 0.1], [0.9, 1.0, 0.2], [0.1, 0.2, 1.0]],
            &["a", "b", "c"],
            &["a", "b", "c"],
        );
        let check = PreferenceRating {
            is_attention_check: true,
            ..rating("c", 1)
        };
        let list = recommend(&idx, &[rating("a", 5), check], 3).unwrap();
        assert_eq!(list.painting_ids(), vec!["b"]);
        assert!(list.truncated);
    }

    #[test]
    fn errors() {
        let idx = toy(
            Engine::Haydn,
            Semantics::Distance,
            array![[0.1]],
            &["m"],
            &["p"],
        );
        assert!(
            matches!(recommend(&idx, &[rating("nope", 3)], 1), Err(Error::UnknownItem(id)) if id == "nope")
        );
        assert!(recommend(&idx, &[rating("m", 3)], 0).is_err());
    }
}
