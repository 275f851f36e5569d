use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::matrix::read_afmx;
use crate::affect::{
    deam_stability_filter, emotions_to_va, EmotionIntensityMap, StabilityStats, VaLexicon, VaVector,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Music,
    Painting,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Music => "music",
            Modality::Painting => "painting",
        })
    }
}

/// One catalog item with its raw features and affective label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub modality: Modality,
    /// Signal features: acoustic for music, visual for paintings.
    pub features: Vec<f64>,
    /// Text-description embedding, when available.
    pub text_features: Option<Vec<f64>>,
    pub va: VaVector,
    pub stability: Option<StabilityStats>,
    pub metadata: BTreeMap<String, String>,
}

impl FeatureRecord {
    /// Signal features followed by text features, when present.
    pub fn combined_features(&self) -> Vec<f64> {
        let mut out = self.features.clone();
        if let Some(t) = &self.text_features {
            out.extend_from_slice(t);
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModalityProvenance {
    pub source: Option<PathBuf>,
    pub records_read: usize,
    pub dropped_unstable: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub music: ModalityProvenance,
    pub paintings: ModalityProvenance,
    pub generator: Option<String>,
}

/// Validated music and painting collections.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    music: Vec<FeatureRecord>,
    paintings: Vec<FeatureRecord>,
    pub provenance: Provenance,
}

fn check_modality(records: &[FeatureRecord], modality: Modality) -> Result<()> {
    let mut dims: Option<(usize, Option<usize>)> = None;
    for r in records {
        if r.modality != modality {
            return Err(Error::InvalidCatalog(format!(
                "record `{}` is {} but listed among {modality} items",
                r.id, r.modality
            )));
        }
        if r.features.is_empty() {
            return Err(Error::InvalidCatalog(format!(
                "record `{}` has no features",
                r.id
            )));
        }
        if r.features
            .iter()
            .chain(r.text_features.iter().flatten())
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidCatalog(format!(
                "record `{}` has non-finite features",
                r.id
            )));
        }
        let shape = (r.features.len(), r.text_features.as_ref().map(Vec::len));
        match dims {
            None => dims = Some(shape),
            Some(d) if d != shape => return Err(Error::InvalidCatalog(format!(
                "record `{}` has feature dimensions {shape:?}, other {modality} records have {d:?}",
                r.id
            ))),
            _ => {}
        }
    }
    Ok(())
}

impl Catalog {
    pub fn new(
        music: Vec<FeatureRecord>,
        paintings: Vec<FeatureRecord>,
        provenance: Provenance,
    ) -> Result<Self> {
        check_modality(&music, Modality::Music)?;
        check_modality(&paintings, Modality::Painting)?;
        let mut seen = HashSet::new();
        for r in music.iter().chain(&paintings) {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self {
            music,
            paintings,
            provenance,
        })
    }

    pub fn music(&self) -> &[FeatureRecord] {
        &self.music
    }

    pub fn paintings(&self) -> &[FeatureRecord] {
        &self.paintings
    }

    pub fn records(&self, modality: Modality) -> &[FeatureRecord] {
        match modality {
            Modality::Music => &self.music,
            Modality::Painting => &self.paintings,
        }
    }

    pub fn get(&self, id: &str) -> Option<&FeatureRecord> {
        self.music
            .iter()
            .chain(&self.paintings)
            .find(|r| r.id == id)
    }

    /// Fails unless both modalities are populated.
    pub fn require_nonempty(&self) -> Result<()> {
        if self.music.is_empty() || self.paintings.is_empty() {
            return Err(Error::InvalidCatalog(format!(
                "engines need both modalities, catalog has {} music and {} paintings",
                self.music.len(),
                self.paintings.len()
            )));
        }
        Ok(())
    }

    pub fn ids(&self, modality: Modality) -> Vec<String> {
        self.records(modality)
            .iter()
            .map(|r| r.id.clone())
            .collect()
    }

    pub fn va_matrix(&self, modality: Modality) -> Array2<f64> {
        let recs = self.records(modality);
        Array2::from_shape_fn((recs.len(), 2), |(i, j)| recs[i].va.to_array()[j])
    }

    pub fn feature_matrix(&self, modality: Modality) -> Array2<f64> {
        rows_to_matrix(self.records(modality).iter().map(|r| r.features.clone()))
    }

    pub fn combined_feature_matrix(&self, modality: Modality) -> Array2<f64> {
        rows_to_matrix(
            self.records(modality)
                .iter()
                .map(FeatureRecord::combined_features),
        )
    }
}

fn rows_to_matrix(rows: impl Iterator<Item = Vec<f64>>) -> Array2<f64> {
    let rows: Vec<Vec<f64>> = rows.collect();
    let cols = rows.first().map_or(0, Vec::len);
    Array2::from_shape_vec((rows.len(), cols), rows.into_iter().flatten().collect())
        .expect("catalog validation guarantees rectangular features")
}

/// Scale of the `valence`/`arousal` fields of a feature-file record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VaScale {
    /// Already in `[-1, 1]`.
    #[default]
    Signed,
    /// DEAM 1..9 annotation scale.
    Deam,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixRef {
    pub path: String,
    pub row: usize,
}

/// One line of a feature file, as written by the extraction tooling.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub modality: Option<Modality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arousal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub va_scale: Option<VaScale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_ref: Option<MatrixRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_features: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_features_ref: Option<MatrixRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valence_sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arousal_sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotions: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<BTreeMap<String, Value>>,
}

impl From<&FeatureRecord> for RawRecord {
    fn from(r: &FeatureRecord) -> Self {
        RawRecord {
            id: r.id.clone(),
            modality: Some(r.modality),
            valence: Some(r.va.valence()),
            arousal: Some(r.va.arousal()),
            features: Some(r.features.clone()),
            text_features: r.text_features.clone(),
            valence_sd: r.stability.map(|s| s.valence_sd),
            arousal_sd: r.stability.map(|s| s.arousal_sd),
            metadata: (!r.metadata.is_empty()).then(|| {
                r.metadata
                    .iter()
                    .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                    .collect()
            }),
            ..Default::default()
        }
    }
}

struct SidecarCache<'a> {
    base: &'a Path,
    loaded: HashMap<PathBuf, Array2<f64>>,
}

impl SidecarCache<'_> {
    fn row(&mut self, r: &MatrixRef) -> std::result::Result<Vec<f64>, String> {
        let path = self.base.join(&r.path);
        if !self.loaded.contains_key(&path) {
            let m = read_afmx(&path).map_err(|e| e.to_string())?;
            self.loaded.insert(path.clone(), m);
        }
        let m = &self.loaded[&path];
        if r.row >= m.nrows() {
            return Err(format!(
                "row {} out of range for {} ({} rows)",
                r.row,
                r.path,
                m.nrows()
            ));
        }
        Ok(m.row(r.row).to_vec())
    }
}

fn resolve_vector(
    inline: Option<Vec<f64>>,
    reference: Option<&MatrixRef>,
    sidecars: &mut SidecarCache<'_>,
    field: &str,
) -> std::result::Result<Option<Vec<f64>>, String> {
    match (inline, reference) {
        (Some(_), Some(_)) => Err(format!("both `{field}` and `{field}_ref` given")),
        (Some(v), None) => Ok(Some(v)),
        (None, Some(r)) => sidecars.row(r).map(Some),
        (None, None) => Ok(None),
    }
}

fn metadata_string(v: Value) -> String {
    match v {
        Value::String(s) => s,
        other => other.to_string(),
    }
}

fn convert(
    raw: RawRecord,
    expected: Modality,
    lexicon: Option<&VaLexicon>,
    sidecars: &mut SidecarCache<'_>,
) -> std::result::Result<FeatureRecord, String> {
    if raw.id.trim().is_empty() {
        return Err("empty `id`".into());
    }
    let modality = raw.modality.unwrap_or(expected);
    if modality != expected {
        return Err(format!(
            "record `{}` is {modality} but the file holds {expected} items",
            raw.id
        ));
    }
    let features = resolve_vector(
        raw.features,
        raw.features_ref.as_ref(),
        sidecars,
        "features",
    )?
    .ok_or_else(|| {
        format!(
            "record `{}` has neither `features` nor `features_ref`",
            raw.id
        )
    })?;
    let text_features = resolve_vector(
        raw.text_features,
        raw.text_features_ref.as_ref(),
        sidecars,
        "text_features",
    )?;
    let va = match (raw.valence, raw.arousal, raw.emotions) {
        (Some(v), Some(a), _) => match raw.va_scale.unwrap_or_default() {
            VaScale::Signed => VaVector::new(v, a),
            VaScale::Deam => VaVector::from_deam_scale(v, a),
        }
        .map_err(|e| format!("record `{}`: {e}", raw.id))?,
        (None, None, Some(emotions)) => {
            let lexicon = lexicon.ok_or_else(|| {
                format!(
                    "record `{}` carries only emotion labels and no lexicon was given",
                    raw.id
                )
            })?;
            let labels = EmotionIntensityMap::new(emotions)
                .map_err(|e| format!("record `{}`: {e}", raw.id))?;
            emotions_to_va(&labels, lexicon).map_err(|e| format!("record `{}`: {e}", raw.id))?
        }
        _ => return Err(format!("record `{}` is missing valence/arousal", raw.id)),
    };
    let stability = match (raw.valence_sd, raw.arousal_sd) {
        (Some(v), Some(a)) if v >= 0.0 && a >= 0.0 && v.is_finite() && a.is_finite() => {
            Some(StabilityStats {
                valence_sd: v,
                arousal_sd: a,
            })
        }
        (None, None) => None,
        _ => {
            return Err(format!(
                "record `{}` has incomplete or invalid SD statistics",
                raw.id
            ))
        }
    };
    Ok(FeatureRecord {
        id: raw.id,
        modality,
        features,
        text_features,
        va,
        stability,
        metadata: raw
            .metadata
            .unwrap_or_default()
            .into_iter()
            .map(|(k, v)| (k, metadata_string(v)))
            .collect(),
    })
}

/// Reads one JSON-lines feature file; sidecar references resolve relative
/// to the file's directory. Returns kept records and the unstable-drop count.
pub fn read_feature_file(
    path: &Path,
    modality: Modality,
    lexicon: Option<&VaLexicon>,
) -> Result<(Vec<FeatureRecord>, ModalityProvenance)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut sidecars = SidecarCache {
        base,
        loaded: HashMap::new(),
    };
    let mut kept = Vec::new();
    let mut prov = ModalityProvenance {
        source: Some(path.to_path_buf()),
        ..Default::default()
    };
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let record = convert(raw, modality, lexicon, &mut sidecars).map_err(parse_err)?;
        prov.records_read += 1;
        if record
            .stability
            .as_ref()
            .is_some_and(|s| !deam_stability_filter(s))
        {
            prov.dropped_unstable += 1;
            continue;
        }
        kept.push(record);
    }
    Ok((kept, prov))
}

/// Loads and validates a catalog from music and painting feature files.
pub fn load_catalog(
    music_path: &Path,
    paintings_path: &Path,
    lexicon: Option<&VaLexicon>,
) -> Result<Catalog> {
    let (music, music_prov) = read_feature_file(music_path, Modality::Music, lexicon)?;
    let (paintings, painting_prov) =
        read_feature_file(paintings_path, Modality::Painting, lexicon)?;
    Catalog::new(
        music,
        paintings,
        Provenance {
            music: music_prov,
            paintings: painting_prov,
            generator: None,
        },
    )
}

pub fn write_feature_file(records: &[FeatureRecord], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, &RawRecord::from(r)).expect("records serialize");
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Which items may be shown to participants: therapeutic V-A curation plus an
/// optional reviewer allowlist of painting ids.
#[derive(Debug, Clone, Default)]
pub struct CurationPolicy {
    pub painting_allowlist: Option<BTreeSet<String>>,
}

impl CurationPolicy {
    pub fn with_allowlist_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ids = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        Ok(Self {
            painting_allowlist: Some(ids),
        })
    }

    pub fn admits(&self, record: &FeatureRecord) -> bool {
        if !crate::affect::therapeutic_curation_filter(&record.va) {
            return false;
        }
        match (&self.painting_allowlist, record.modality) {
            (Some(allow), Modality::Painting) => allow.contains(&record.id),
            _ => true,
        }
    }

    pub fn curated_ids(&self, catalog: &Catalog, modality: Modality) -> Vec<String> {
        catalog
            .records(modality)
            .iter()
            .filter(|r| self.admits(r))
            .map(|r| r.id.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, lines: &[&str]) -> PathBuf {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        path
    }

    #[test]
    fn minimal_load() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "m.jsonl",
            &[r#"{"id":"m1","modality":"music","valence":0.2,"arousal":0.3,"features":[1,2]}"#],
        );
        let p = write(
            dir.path(),
            "p.jsonl",
            &[
                r#"{"id":"p1","modality":"painting","valence":0.2,"arousal":0.3,"features":[1,2,3],"metadata":{"title":"Lake","year":1890}}"#,
            ],
        );
        let cat = load_catalog(&m, &p, None).unwrap();
        assert_eq!((cat.music().len(), cat.paintings().len()), (1, 1));
        assert_eq!(cat.paintings()[0].metadata["year"], "1890");
        assert_eq!(cat, load_catalog(&m, &p, None).unwrap());
    }

    #[test]
    fn duplicate_ids_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "m.jsonl",
            &[r#"{"id":"x","modality":"music","valence":0,"arousal":0,"features":[1]}"#],
        );
        let p = write(
            dir.path(),
            "p.jsonl",
            &[r#"{"id":"x","modality":"painting","valence":0,"arousal":0,"features":[1]}"#],
        );
        assert!(matches!(load_catalog(&m, &p, None), Err(Error::DuplicateId(id)) if id == "x"));
    }

    #[test]
    fn unstable_songs_are_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "m.jsonl",
            &[
                r#"{"id":"m1","valence":5.5,"arousal":6,"va_scale":"deam","valence_sd":2.0,"arousal_sd":0.5,"features":[1]}"#,
                r#"{"id":"m2","valence":7,"arousal":3,"va_scale":"deam","valence_sd":1.0,"arousal_sd":0.5,"features":[1]}"#,
            ],
        );
        let p = write(
            dir.path(),
            "p.jsonl",
            &[r#"{"id":"p1","valence":0,"arousal":0,"features":[1]}"#],
        );
        let cat = load_catalog(&m, &p, None).unwrap();
        assert_eq!(cat.music().len(), 1);
        assert_eq!(cat.provenance.music.dropped_unstable, 1);
        assert_eq!(cat.music()[0].va.to_array(), [0.5, -0.5]);
    }

    #[test]
    fn emotions_and_sidecars() {
        let dir = tempfile::tempdir().unwrap();
        let feats = Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        super::super::matrix::write_afmx(&feats, &dir.path().join("p.afmx")).unwrap();
        let m = write(
            dir.path(),
            "m.jsonl",
            &[r#"{"id":"m1","valence":0.1,"arousal":0.1,"features":[1]}"#],
        );
        let p = write(
            dir.path(),
            "p.jsonl",
            &[
                r#"{"id":"p1","emotions":{"joy":3,"fear":1},"features_ref":{"path":"p.afmx","row":1}}"#,
            ],
        );
        let mut lex = VaLexicon::new();
        lex.insert("joy", VaVector::new(0.8, 0.5).unwrap());
        lex.insert("fear", VaVector::new(-0.6, 0.7).unwrap());
        let cat = load_catalog(&m, &p, Some(&lex)).unwrap();
        let painting = &cat.paintings()[0];
        assert_eq!(painting.features, vec![3.0, 4.0]);
        assert!((painting.va.valence() - 0.45).abs() < 1e-12);
        assert!(load_catalog(&m, &p, None).is_err());
    }

    #[test]
    fn explicit_va_wins_over_emotions() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "m.jsonl",
            &[r#"{"id":"m1","valence":0.1,"arousal":0.1,"features":[1]}"#],
        );
        let p = write(
            dir.path(),
            "p.jsonl",
            &[
                r#"{"id":"p1","valence":-0.3,"arousal":0.2,"emotions":{"unknown":1},"features":[1]}"#,
            ],
        );
        let cat = load_catalog(&m, &p, None).unwrap();
        assert_eq!(cat.paintings()[0].va.to_array(), [-0.3, 0.2]);
    }

    #[test]
    fn load_errors_are_descriptive() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(
            dir.path(),
            "ok.jsonl",
            &[r#"{"id":"p1","valence":0,"arousal":0,"features":[1]}"#],
        );
        let cases = [
            r#"{"id":"m1","valence":0.1,"features":[1]}"#,
            r#"{"id":"m1","valence":0.1,"arousal":0.1}"#,
            r#"{"id":"m1","valence":3,"arousal":0.1,"features":[1]}"#,
            r#"not json"#,
        ];
        for case in cases {
            let m = write(dir.path(), "m.jsonl", &[case]);
            let err = load_catalog(&m, &ok, None).unwrap_err();
            assert!(matches!(err, Error::Parse { line: 1, .. }), "{case}: {err}");
        }
        let m = write(
            dir.path(),
            "m.jsonl",
            &[
                r#"{"id":"m1","valence":0,"arousal":0,"features":[1]}"#,
                r#"{"id":"m2","valence":0,"arousal":0,"features":[1,2]}"#,
            ],
        );
        assert!(matches!(
            load_catalog(&m, &ok, None),
            Err(Error::InvalidCatalog(_))
        ));
        assert!(matches!(
            load_catalog(&dir.path().join("missing.jsonl"), &ok, None),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn curation_respects_allowlist() {
        let rec = |id: &str, modality, v, a| FeatureRecord {
            id: id.into(),
            modality,
            features: vec![0.0],
            text_features: None,
            va: VaVector::new(v, a).unwrap(),
            stability: None,
            metadata: BTreeMap::new(),
        };
        let policy = CurationPolicy {
            painting_allowlist: Some(["p1".to_string()].into()),
        };
        assert!(policy.admits(&rec("p1", Modality::Painting, 0.5, 0.3)));
        assert!(!policy.admits(&rec("p2", Modality::Painting, 0.5, 0.3)));
        assert!(!policy.admits(&rec("p1", Modality::Painting, 0.5, 0.0)));
        assert!(policy.admits(&rec("m9", Modality::Music, 0.5, -0.3)));
    }
}
