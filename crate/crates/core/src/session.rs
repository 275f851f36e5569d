//! Study sessions: elicitation sampling, the event-sourced session state
//! machine, and the JSON shapes exchanged with clients.
//!
//! A session is only ever changed by applying a [`SessionEvent`]; replaying a
//! session's events in order rebuilds it exactly.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::catalog::Modality;
use crate::engine::{Engine, PreferenceRating, RecommendationList};
use crate::error::{Error, Result};

/// Items shown per elicited modality, attention check included.
pub const ELICITATION_ITEMS: usize = 11;
pub const ATTENTION_RATING: u8 = 1;
pub const DEFAULT_RECOMMENDATIONS: usize = 3;
pub const QUALITY_METRICS: [&str; 6] = [
    "accuracy",
    "diversity",
    "novelty",
    "serendipity",
    "immersion",
    "engagement",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Created,
    Elicited,
    Recommended,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitationItem {
    pub item_id: String,
    pub modality: Modality,
    pub attention_check: bool,
}

/// Draws the elicitation set: `ELICITATION_ITEMS` music tracks, plus as many
/// paintings for the visual engine, one of each flagged as attention check.
pub fn sample_elicitation(
    engine: Engine,
    seed: u64,
    music_pool: &[String],
    painting_pool: &[String],
) -> Result<Vec<ElicitationItem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |pool: &[String], modality: Modality| -> Result<Vec<ElicitationItem>> {
        if pool.len() < ELICITATION_ITEMS {
            return Err(Error::InsufficientData(format!(
                "{} curated {modality} items, elicitation needs {ELICITATION_ITEMS}",
                pool.len()
            )));
        }
        let mut picked: Vec<&String> = pool.choose_multiple(&mut rng, ELICITATION_ITEMS).collect();
        picked.shuffle(&mut rng);
        let check = rng.random_range(0..ELICITATION_ITEMS);
        Ok(picked
            .into_iter()
            .enumerate()
            .map(|(i, id)| ElicitationItem {
                item_id: id.clone(),
                modality,
                attention_check: i == check,
            })
            .collect())
    };
    let mut items = draw(music_pool, Modality::Music)?;
    if engine == Engine::Visual {
        items.extend(draw(painting_pool, Modality::Painting)?);
    }
    Ok(items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoodPhase {
    Pre,
    Post,
}

/// Mood category plus optional short-form PANAS item scores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoodPayload {
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panas: Option<Vec<u8>>,
}

impl MoodPayload {
    pub fn validate(&self) -> Result<()> {
        if self.category.trim().is_empty() {
            return Err(Error::Validation("mood category must not be empty".into()));
        }
        if let Some(scores) = &self.panas {
            if !(10..=11).contains(&scores.len()) {
                return Err(Error::Validation(format!(
                    "PANAS short form has 10 or 11 items, got {}",
                    scores.len()
                )));
            }
            if let Some(bad) = scores.iter().find(|s| !(1..=5).contains(*s)) {
                return Err(Error::Validation(format!(
                    "PANAS score {bad} is outside 1..5"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub painting_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspects: Option<String>,
}

/// The six 1..5 recommendation-quality ratings, in `QUALITY_METRICS` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityFeedback {
    pub accuracy: u8,
    pub diversity: u8,
    pub novelty: u8,
    pub serendipity: u8,
    pub immersion: u8,
    pub engagement: u8,
}

impl QualityFeedback {
    /// Parses a metric-name to score object, naming any missing, unknown or
    /// out-of-range metric.
    pub fn from_json(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Validation("feedback must be a JSON object".into()))?;
        if let Some(extra) = obj.keys().find(|k| !QUALITY_METRICS.contains(&k.as_str())) {
            return Err(Error::Validation(format!(
                "unknown quality metric `{extra}`"
            )));
        }
        let missing: Vec<&str> = QUALITY_METRICS
            .iter()
            .copied()
            .filter(|m| !obj.contains_key(*m))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Validation(format!(
                "missing quality metric: {}",
                missing.join(", ")
            )));
        }
        let score = |name: &str| -> Result<u8> {
            obj[name]
                .as_u64()
                .filter(|s| (1..=5).contains(s))
                .map(|s| s as u8)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "quality metric `{name}` must be an integer in 1..5"
                    ))
                })
        };
        Ok(Self {
            accuracy: score("accuracy")?,
            diversity: score("diversity")?,
            novelty: score("novelty")?,
            serendipity: score("serendipity")?,
            immersion: score("immersion")?,
            engagement: score("engagement")?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        Self::from_json(&serde_json::to_value(self).expect("feedback serializes")).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionOutcome {
    Passed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    SessionCreated {
        session_id: String,
        engine: Engine,
        seed: u64,
        items: Vec<ElicitationItem>,
        at_ms: u64,
    },
    RatingsSubmitted {
        session_id: String,
        ratings: Vec<PreferenceRating>,
        at_ms: u64,
    },
    RecommendationsServed {
        session_id: String,
        n: usize,
        list: RecommendationList,
        at_ms: u64,
    },
    MoodRecorded {
        session_id: String,
        phase: MoodPhase,
        mood: MoodPayload,
        at_ms: u64,
    },
    ReflectionsRecorded {
        session_id: String,
        reflections: Vec<Reflection>,
        at_ms: u64,
    },
    FeedbackRecorded {
        session_id: String,
        feedback: QualityFeedback,
        at_ms: u64,
    },
}

impl SessionEvent {
    pub fn session_id(&self) -> &str {
        match self {
            SessionEvent::SessionCreated { session_id, .. }
            | SessionEvent::RatingsSubmitted { session_id, .. }
            | SessionEvent::RecommendationsServed { session_id, .. }
            | SessionEvent::MoodRecorded { session_id, .. }
            | SessionEvent::ReflectionsRecorded { session_id, .. }
            | SessionEvent::FeedbackRecorded { session_id, .. } => session_id,
        }
    }

    fn at_ms(&self) -> u64 {
        match self {
            SessionEvent::SessionCreated { at_ms, .. }
            | SessionEvent::RatingsSubmitted { at_ms, .. }
            | SessionEvent::RecommendationsServed { at_ms, .. }
            | SessionEvent::MoodRecorded { at_ms, .. }
            | SessionEvent::ReflectionsRecorded { at_ms, .. }
            | SessionEvent::FeedbackRecorded { at_ms, .. } => *at_ms,
        }
    }
}

/// Client-side rating, before attention flags are attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingInput {
    pub item_id: String,
    pub rating: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub engine: Engine,
    pub seed: u64,
    pub state: SessionState,
    pub elicitation: Vec<ElicitationItem>,
    pub ratings: Vec<PreferenceRating>,
    pub attention: Option<AttentionOutcome>,
    pub recommendation_n: Option<usize>,
    pub recommendations: Option<RecommendationList>,
    pub mood_pre: Option<MoodPayload>,
    pub mood_post: Option<MoodPayload>,
    pub reflections: BTreeMap<String, Reflection>,
    pub quality_feedback: Option<QualityFeedback>,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

fn conflict(msg: impl Into<String>) -> Error {
    Error::State(msg.into())
}

impl Session {
    /// Starts a session from its creation event.
    pub fn from_created(event: &SessionEvent) -> Result<Self> {
        let SessionEvent::SessionCreated {
            session_id,
            engine,
            seed,
            items,
            at_ms,
        } = event
        else {
            return Err(conflict("a session must start with its creation event"));
        };
        Ok(Self {
            session_id: session_id.clone(),
            engine: *engine,
            seed: *seed,
            state: SessionState::Created,
            elicitation: items.clone(),
            ratings: Vec::new(),
            attention: None,
            recommendation_n: None,
            recommendations: None,
            mood_pre: None,
            mood_post: None,
            reflections: BTreeMap::new(),
            quality_feedback: None,
            created_at_ms: *at_ms,
            updated_at_ms: *at_ms,
        })
    }

    /// Checks a rating submission against the elicitation set and attaches
    /// attention flags.
    pub fn prepare_ratings(&self, input: &[RatingInput]) -> Result<Vec<PreferenceRating>> {
        if self.state != SessionState::Created {
            return Err(conflict(format!(
                "ratings already submitted (session is {:?})",
                self.state
            )));
        }
        let expected: BTreeMap<&str, bool> = self
            .elicitation
            .iter()
            .map(|i| (i.item_id.as_str(), i.attention_check))
            .collect();
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(input.len());
        for r in input {
            let Some(&attention) = expected.get(r.item_id.as_str()) else {
                return Err(Error::Validation(format!(
                    "`{}` is not an elicitation item of this session",
                    r.item_id
                )));
            };
            if !seen.insert(r.item_id.as_str()) {
                return Err(Error::Validation(format!(
                    "`{}` rated more than once",
                    r.item_id
                )));
            }
            if !(1..=5).contains(&r.rating) {
                return Err(Error::Validation(format!(
                    "rating {} for `{}` is outside 1..5",
                    r.rating, r.item_id
                )));
            }
            out.push(PreferenceRating {
                item_id: r.item_id.clone(),
                rating: r.rating,
                is_attention_check: attention,
            });
        }
        let missing: Vec<&str> = expected
            .keys()
            .copied()
            .filter(|id| !seen.contains(id))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Validation(format!(
                "missing ratings for: {}",
                missing.join(", ")
            )));
        }
        Ok(out)
    }

    /// Ratings that drive the engine: music for cross-domain engines,
    /// paintings for the visual baseline.
    pub fn engine_ratings(&self) -> Vec<PreferenceRating> {
        let wanted = if self.engine.is_cross_domain() {
            Modality::Music
        } else {
            Modality::Painting
        };
        let modality: BTreeMap<&str, Modality> = self
            .elicitation
            .iter()
            .map(|i| (i.item_id.as_str(), i.modality))
            .collect();
        self.ratings
            .iter()
            .filter(|r| modality.get(r.item_id.as_str()) == Some(&wanted))
            .cloned()
            .collect()
    }

    /// Painting ids that must never be recommended in this session.
    pub fn excluded_paintings(&self) -> BTreeSet<String> {
        self.elicitation
            .iter()
            .filter(|i| i.modality == Modality::Painting)
            .map(|i| i.item_id.clone())
            .collect()
    }

    pub fn recommended_ids(&self) -> BTreeSet<&str> {
        self.recommendations
            .iter()
            .flat_map(|l| l.entries.iter().map(|e| e.painting_id.as_str()))
            .collect()
    }

    /// Validates and applies one event. Used both live and during replay.
    pub fn apply(&mut self, event: &SessionEvent) -> Result<()> {
        if event.session_id() != self.session_id {
            return Err(conflict(format!(
                "event for `{}` applied to `{}`",
                event.session_id(),
                self.session_id
            )));
        }
        match event {
            SessionEvent::SessionCreated { .. } => return Err(conflict("session already exists")),
            SessionEvent::RatingsSubmitted { ratings, .. } => {
                let input: Vec<RatingInput> = ratings
                    .iter()
                    .map(|r| RatingInput {
                        item_id: r.item_id.clone(),
                        rating: r.rating,
                    })
                    .collect();
                let prepared = self.prepare_ratings(&input)?;
                if &prepared != ratings {
                    return Err(Error::Validation(
                        "attention flags disagree with the elicitation set".into(),
                    ));
                }
                let passed = ratings
                    .iter()
                    .filter(|r| r.is_attention_check)
                    .all(|r| r.rating == ATTENTION_RATING);
                self.ratings = ratings.clone();
                self.attention = Some(if passed {
                    AttentionOutcome::Passed
                } else {
                    AttentionOutcome::Failed
                });
                self.state = SessionState::Elicited;
            }
            SessionEvent::RecommendationsServed { n, list, .. } => {
                if self.state != SessionState::Elicited {
                    return Err(conflict(format!(
                        "recommendations need submitted ratings (session is {:?})",
                        self.state
                    )));
                }
                let excluded = self.excluded_paintings();
                if let Some(bad) = list
                    .entries
                    .iter()
                    .find(|e| excluded.contains(&e.painting_id))
                {
                    return Err(conflict(format!(
                        "`{}` was an elicitation item",
                        bad.painting_id
                    )));
                }
                self.recommendation_n = Some(*n);
                self.recommendations = Some(list.clone());
                self.state = SessionState::Recommended;
            }
            SessionEvent::MoodRecorded { phase, mood, .. } => {
                mood.validate()?;
                match phase {
                    MoodPhase::Pre => {
                        if self.state == SessionState::Completed {
                            return Err(conflict("session is completed"));
                        }
                        if self.mood_pre.is_some() {
                            return Err(conflict("pre-session mood already recorded"));
                        }
                        self.mood_pre = Some(mood.clone());
                    }
                    MoodPhase::Post => {
                        if self.state != SessionState::Recommended {
                            return Err(conflict(format!(
                                "post-session mood needs recommendations (session is {:?})",
                                self.state
                            )));
                        }
                        if self.mood_post.is_some() {
                            return Err(conflict("post-session mood already recorded"));
                        }
                        self.mood_post = Some(mood.clone());
                    }
                }
            }
            SessionEvent::ReflectionsRecorded { reflections, .. } => {
                if self.state != SessionState::Recommended {
                    return Err(conflict(format!(
                        "reflections need recommendations (session is {:?})",
                        self.state
                    )));
                }
                if reflections.is_empty() {
                    return Err(Error::Validation("no reflections given".into()));
                }
                let shown = self.recommended_ids();
                for r in reflections {
                    if !shown.contains(r.painting_id.as_str()) {
                        return Err(Error::Validation(format!(
                            "`{}` was not recommended in this session",
                            r.painting_id
                        )));
                    }
                    if r.text.trim().is_empty() {
                        return Err(Error::Validation(format!(
                            "reflection on `{}` is empty",
                            r.painting_id
                        )));
                    }
                }
                for r in reflections {
                    self.reflections.insert(r.painting_id.clone(), r.clone());
                }
            }
            SessionEvent::FeedbackRecorded { feedback, .. } => {
                feedback.validate()?;
                if self.state != SessionState::Recommended {
                    return Err(conflict(format!(
                        "feedback needs recommendations (session is {:?})",
                        self.state
                    )));
                }
                if self.mood_post.is_none() {
                    return Err(conflict("record the post-session mood before feedback"));
                }
                self.quality_feedback = Some(feedback.clone());
                self.state = SessionState::Completed;
            }
        }
        self.updated_at_ms = event.at_ms();
        Ok(())
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.session_id.clone(),
            engine: self.engine,
            state: self.state,
            attention: self.attention.clone(),
            elicitation_items: self.elicitation.len(),
            recommendations: self
                .recommendations
                .as_ref()
                .map(|l| l.painting_ids().iter().map(|s| s.to_string()).collect()),
            mood_pre: self.mood_pre.clone(),
            mood_post: self.mood_post.clone(),
            reflections: self.reflections.values().cloned().collect(),
            quality_feedback: self.quality_feedback.clone(),
            created_at_ms: self.created_at_ms,
            updated_at_ms: self.updated_at_ms,
        }
    }
}

/// Rebuilds every session from an ordered event stream.
pub fn replay<'a>(
    events: impl IntoIterator<Item = &'a SessionEvent>,
) -> Result<BTreeMap<String, Session>> {
    let mut sessions = BTreeMap::new();
    for event in events {
        match event {
            SessionEvent::SessionCreated { session_id, .. } => {
                if sessions.contains_key(session_id) {
                    return Err(conflict(format!("session `{session_id}` created twice")));
                }
                sessions.insert(session_id.clone(), Session::from_created(event)?);
            }
            other => sessions
                .get_mut(other.session_id())
                .ok_or_else(|| Error::UnknownItem(other.session_id().to_string()))?
                .apply(other)?,
        }
    }
    Ok(sessions)
}

// Wire shapes shared by the HTTP service and its clients.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub engine: Engine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Client-facing session summary: attention flags of items are not exposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub engine: Engine,
    pub state: SessionState,
    pub attention: Option<AttentionOutcome>,
    pub elicitation_items: usize,
    pub recommendations: Option<Vec<String>>,
    pub mood_pre: Option<MoodPayload>,
    pub mood_post: Option<MoodPayload>,
    pub reflections: Vec<Reflection>,
    pub quality_feedback: Option<QualityFeedback>,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicItem {
    pub item_id: String,
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationView {
    pub session_id: String,
    pub items: Vec<PublicItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsRequest {
    pub ratings: Vec<RatingInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendedPainting {
    pub painting_id: String,
    pub aggregate_distance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationsView {
    pub session_id: String,
    pub engine: Engine,
    pub paintings: Vec<RecommendedPainting>,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoodRequest {
    pub phase: MoodPhase,
    #[serde(flatten)]
    pub mood: MoodPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionsRequest {
    pub reflections: Vec<Reflection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub engines: Vec<Engine>,
    pub sessions: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RecommendationEntry;
    use serde_json::json;

    fn pool(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i:02}")).collect()
    }

    fn created(engine: Engine) -> (Session, SessionEvent) {
        let items = sample_elicitation(engine, 7, &pool("m", 30), &pool("p", 30)).unwrap();
        let ev = SessionEvent::SessionCreated {
            session_id: "s1".into(),
            engine,
            seed: 7,
            items,
            at_ms: 100,
        };
        (Session::from_created(&ev).unwrap(), ev)
    }

    fn rate_all(s: &Session, attention: u8) -> Vec<RatingInput> {
        s.elicitation
            .iter()
            .map(|i| RatingInput {
                item_id: i.item_id.clone(),
                rating: if i.attention_check { attention } else { 4 },
            })
            .collect()
    }

    fn served(s: &Session, ids: &[&str]) -> SessionEvent {
        SessionEvent::RecommendationsServed {
            session_id: s.session_id.clone(),
            n: ids.len(),
            list: RecommendationList {
                engine: s.engine,
                entries: ids
                    .iter()
                    .map(|id| RecommendationEntry {
                        painting_id: id.to_string(),
                        aggregate_distance: 0.1,
                    })
                    .collect(),
                weights: Vec::new(),
                truncated: false,
            },
            at_ms: 300,
        }
    }

    fn mood(phase: MoodPhase, category: &str) -> SessionEvent {
        SessionEvent::MoodRecorded {
            session_id: "s1".into(),
            phase,
            mood: MoodPayload {
                category: category.into(),
                panas: None,
            },
            at_ms: 400,
        }
    }

    #[test]
    fn sampling_shapes_and_determinism() {
        let h = sample_elicitation(Engine::Haydn, 3, &pool("m", 40), &pool("p", 40)).unwrap();
        assert_eq!(h.len(), 11);
        assert_eq!(h.iter().filter(|i| i.attention_check).count(), 1);
        assert!(h.iter().all(|i| i.modality == Modality::Music));
        let v = sample_elicitation(Engine::Visual, 3, &pool("m", 40), &pool("p", 40)).unwrap();
        assert_eq!(v.len(), 22);
        assert_eq!(v.iter().filter(|i| i.attention_check).count(), 2);
        assert_eq!(
            v.iter()
                .filter(|i| i.modality == Modality::Painting)
                .count(),
            11
        );
        assert_eq!(
            h,
            sample_elicitation(Engine::Haydn, 3, &pool("m", 40), &pool("p", 40)).unwrap()
        );
        assert!(sample_elicitation(Engine::Haydn, 3, &pool("m", 10), &pool("p", 40)).is_err());
    }

    #[test]
    fn attention_outcomes() {
        for (rating, outcome) in [(1, AttentionOutcome::Passed), (4, AttentionOutcome::Failed)] {
            let (mut s, _) = created(Engine::Haydn);
            let ratings = s.prepare_ratings(&rate_all(&s, rating)).unwrap();
            s.apply(&SessionEvent::RatingsSubmitted {
                session_id: "s1".into(),
                ratings,
                at_ms: 200,
            })
            .unwrap();
            assert_eq!(s.attention, Some(outcome));
            assert_eq!(s.state, SessionState::Elicited);
        }
    }

    #[test]
    fn rating_validation() {
        let (s, _) = created(Engine::Haydn);
        let mut r = rate_all(&s, 1);
        r[0].rating = 6;
        assert!(matches!(s.prepare_ratings(&r), Err(Error::Validation(_))));
        let mut r = rate_all(&s, 1);
        let dropped = r.pop().unwrap();
        let err = s.prepare_ratings(&r).unwrap_err().to_string();
        assert!(err.contains(&dropped.item_id), "{err}");
        let mut r = rate_all(&s, 1);
        r.push(r[0].clone());
        assert!(s.prepare_ratings(&r).is_err());
        let mut r = rate_all(&s, 1);
        r[0].item_id = "zzz".into();
        assert!(s.prepare_ratings(&r).is_err());
    }

    #[test]
    fn lifecycle_and_replay() {
        let (mut s, created_ev) = created(Engine::Haydn);
        let mut log = vec![created_ev];
        assert!(matches!(
            s.apply(&served(&s, &["p1"])),
            Err(Error::State(_))
        ));
        let ratings = s.prepare_ratings(&rate_all(&s, 1)).unwrap();
        let steps = vec![
            mood(MoodPhase::Pre, "negative"),
            SessionEvent::RatingsSubmitted {
                session_id: "s1".into(),
                ratings,
                at_ms: 200,
            },
            served(&s, &["p1", "p2", "p3"]),
            SessionEvent::ReflectionsRecorded {
                session_id: "s1".into(),
                reflections: vec![Reflection {
                    painting_id: "p2".into(),
                    text: "calm".into(),
                    aspects: Some("colour".into()),
                }],
                at_ms: 500,
            },
            mood(MoodPhase::Post, "positive"),
            SessionEvent::FeedbackRecorded {
                session_id: "s1".into(),
                feedback: QualityFeedback::from_json(&json!({
                    "accuracy": 4, "diversity": 3, "novelty": 5,
                    "serendipity": 2, "immersion": 4, "engagement": 5
                }))
                .unwrap(),
                at_ms: 600,
            },
        ];
        for ev in steps {
            s.apply(&ev).unwrap();
            log.push(ev);
        }
        assert_eq!(s.state, SessionState::Completed);
        assert_eq!(s.mood_pre.as_ref().unwrap().category, "negative");
        assert_eq!(s.mood_post.as_ref().unwrap().category, "positive");
        let rebuilt = replay(&log).unwrap();
        assert_eq!(
            serde_json::to_vec(&rebuilt["s1"]).unwrap(),
            serde_json::to_vec(&s).unwrap()
        );
    }

    #[test]
    fn wrong_order_is_a_conflict() {
        let (mut s, _) = created(Engine::Haydn);
        assert!(matches!(
            s.apply(&mood(MoodPhase::Post, "x")),
            Err(Error::State(_))
        ));
        s.apply(&mood(MoodPhase::Pre, "x")).unwrap();
        assert!(matches!(
            s.apply(&mood(MoodPhase::Pre, "y")),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn feedback_schema() {
        let five =
            json!({"accuracy": 4, "diversity": 3, "novelty": 5, "serendipity": 2, "immersion": 4});
        let err = QualityFeedback::from_json(&five).unwrap_err().to_string();
        assert!(err.contains("engagement"), "{err}");
        let bad = json!({"accuracy": 0, "diversity": 3, "novelty": 5, "serendipity": 2, "immersion": 4, "engagement": 1});
        assert!(QualityFeedback::from_json(&bad).is_err());
    }

    #[test]
    fn panas_lengths() {
        let ok = MoodPayload {
            category: "calm".into(),
            panas: Some(vec![3; 10]),
        };
        assert!(ok.validate().is_ok());
        let eleven = MoodPayload {
            panas: Some(vec![3; 11]),
            ..ok.clone()
        };
        assert!(eleven.validate().is_ok());
        let short = MoodPayload {
            panas: Some(vec![3; 9]),
            ..ok
        };
        assert!(short.validate().is_err());
    }

    #[test]
    fn visual_sessions_rate_paintings_and_exclude_them() {
        let (s, _) = created(Engine::Visual);
        assert_eq!(s.excluded_paintings().len(), 11);
        let ratings = s.prepare_ratings(&rate_all(&s, 1)).unwrap();
        let mut s2 = s.clone();
        s2.apply(&SessionEvent::RatingsSubmitted {
            session_id: "s1".into(),
            ratings,
            at_ms: 1,
        })
        .unwrap();
        assert!(s2
            .engine_ratings()
            .iter()
            .all(|r| r.item_id.starts_with('p')));
        let elicited = s.excluded_paintings().into_iter().next().unwrap();
        assert!(s2.apply(&served(&s2, &[elicited.as_str()])).is_err());
    }
}
