//! Valence-arousal coordinates and the affective math shared by every engine.
//!
//! All items, music or painting, live in the same `[-1, 1]²` valence-arousal
//! plane. Distances in that plane drive the Haydn engine directly and supply
//! the soft pair targets for contrastive training of the Mozart engine.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the valence-arousal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVa", into = "RawVa")]
pub struct VaVector {
    valence: f64,
    arousal: f64,
}

#[derive(Serialize, Deserialize)]
struct RawVa {
    valence: f64,
    arousal: f64,
}

impl TryFrom<RawVa> for VaVector {
    type Error = Error;
    fn try_from(raw: RawVa) -> Result<Self> {
        VaVector::new(raw.valence, raw.arousal)
    }
}

impl From<VaVector> for RawVa {
    fn from(va: VaVector) -> Self {
        RawVa {
            valence: va.valence,
            arousal: va.arousal,
        }
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && (-1.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("{name} {x} is outside [-1, 1]")))
    }
}

impl VaVector {
    pub fn new(valence: f64, arousal: f64) -> Result<Self> {
        check_unit("valence", valence)?;
        check_unit("arousal", arousal)?;
        Ok(Self { valence, arousal })
    }

    /// Builds a vector from arbitrary finite values, clamping into range.
    pub fn clamped(valence: f64, arousal: f64) -> Result<Self> {
        if !valence.is_finite() || !arousal.is_finite() {
            return Err(Error::OutOfRange(format!(
                "non-finite valence/arousal ({valence}, {arousal})"
            )));
        }
        Ok(Self {
            valence: valence.clamp(-1.0, 1.0),
            arousal: arousal.clamp(-1.0, 1.0),
        })
    }

    /// Maps a DEAM per-song annotation on its 1..9 rating scale into `[-1, 1]`.
    pub fn from_deam_scale(valence: f64, arousal: f64) -> Result<Self> {
        Self::new((valence - 5.0) / 4.0, (arousal - 5.0) / 4.0)
    }

    pub fn valence(&self) -> f64 {
        self.valence
    }

    pub fn arousal(&self) -> f64 {
        self.arousal
    }

    pub fn to_array(&self) -> [f64; 2] {
        [self.valence, self.arousal]
    }
}

/// Euclidean distance between two points of the valence-arousal plane.
pub fn va_distance(a: &VaVector, b: &VaVector) -> f64 {
    let dv = a.valence - b.valence;
    let da = a.arousal - b.arousal;
    (dv * dv + da * da).sqrt()
}

/// Gaussian kernel turning a distance into a similarity in `(0, 1]`.
pub fn gaussian_similarity(distance: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "kernel bandwidth must be positive, got {sigma}"
        )));
    }
    if !(distance >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "distance must be nonnegative, got {distance}"
        )));
    }
    Ok((-(distance * distance) / (2.0 * sigma * sigma)).exp())
}

/// Emotion words with their annotated intensities for one item.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmotionIntensityMap(BTreeMap<String, f64>);

impl EmotionIntensityMap {
    pub fn new(entries: BTreeMap<String, f64>) -> Result<Self> {
        let map = Self(entries);
        map.validate()?;
        Ok(map)
    }

    fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::DegenerateLabel("no emotion entries".into()));
        }
        for (word, &w) in &self.0 {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::DegenerateLabel(format!(
                    "intensity of `{word}` must be a nonnegative number, got {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

impl FromIterator<(String, f64)> for EmotionIntensityMap {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Word-level valence/arousal norms, stored in `[-1, 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VaLexicon {
    entries: BTreeMap<String, VaVector>,
}

impl VaLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: impl Into<String>, va: VaVector) {
        self.entries.insert(word.into().to_lowercase(), va);
    }

    pub fn get(&self, word: &str) -> Option<&VaVector> {
        self.entries.get(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `word<TAB>valence<TAB>arousal` lines with scores on the `[0, 1]`
    /// source scale. Extra trailing columns (dominance) are ignored, as is a
    /// non-numeric header line.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut lexicon = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                message,
            };
            let mut cols = line.split('\t');
            let word = cols.next().unwrap_or_default().trim();
            let (Some(v), Some(a)) = (cols.next(), cols.next()) else {
                return Err(parse_err(
                    "expected word, valence and arousal columns".into(),
                ));
            };
            let (v, a) = match (v.trim().parse::<f64>(), a.trim().parse::<f64>()) {
                (Ok(v), Ok(a)) => (v, a),
                _ if lineno == 0 => continue,
                _ => return Err(parse_err(format!("non-numeric scores in `{line}`"))),
            };
            if !(0.0..=1.0).contains(&v) || !(0.0..=1.0).contains(&a) {
                return Err(parse_err(format!("scores for `{word}` outside [0, 1]")));
            }
            lexicon.insert(word, VaVector::new(2.0 * v - 1.0, 2.0 * a - 1.0)?);
        }
        Ok(lexicon)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// Converts a multi-label emotion annotation into one V-A point: the
/// intensity-weighted mean of the lexicon coordinates of each word.
pub fn emotions_to_va(labels: &EmotionIntensityMap, lexicon: &VaLexicon) -> Result<VaVector> {
    labels.validate()?;
    let total: f64 = labels.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateLabel(
            "all emotion intensities are zero".into(),
        ));
    }
    let (mut v, mut a) = (0.0, 0.0);
    for (word, w) in labels.iter() {
        let point = lexicon
            .get(word)
            .ok_or_else(|| Error::MissingLexiconEntry(word.to_string()))?;
        let weight = w / total;
        v += weight * point.valence();
        a += weight * point.arousal();
    }
    VaVector::clamped(v, a)
}

/// Per-song annotation spread, on the annotation's source scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityStats {
    pub valence_sd: f64,
    pub arousal_sd: f64,
}

pub const MAX_VALENCE_SD: f64 = 1.75;
pub const MAX_AROUSAL_SD: f64 = 1.0;

/// Keeps a song unless its annotators disagreed too much.
pub fn deam_stability_filter(stats: &StabilityStats) -> bool {
    stats.valence_sd <= MAX_VALENCE_SD && stats.arousal_sd <= MAX_AROUSAL_SD
}

/// Keeps positive-valence items with a clearly non-neutral arousal.
pub fn therapeutic_curation_filter(va: &VaVector) -> bool {
    va.valence() > 0.1 && (va.arousal() <= -0.1 || va.arousal() >= 0.1)
}
