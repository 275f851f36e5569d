use std::collections::BTreeMap;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::index::{Engine, Semantics, SimilarityIndex};
use crate::affect::{va_distance, VaVector};
use crate::catalog::{encode_afmx, Catalog, Modality, PreprocessedBundle};
use crate::checksum::sha256_hex;
use crate::error::{Error, Result};

/// How Salieri compares its 256D embeddings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SalieriMetric {
    #[default]
    Cosine,
    Euclidean,
}

impl FromStr for SalieriMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cosine" => Ok(Self::Cosine),
            "euclidean" => Ok(Self::Euclidean),
            other => Err(Error::InvalidParameter(format!(
                "unknown Salieri metric `{other}`"
            ))),
        }
    }
}

fn check_rows(ids: &[String], m: ArrayView2<f64>, what: &str) -> Result<()> {
    if ids.len() != m.nrows() {
        return Err(Error::Shape(format!(
            "{what}: {} ids for {} rows",
            ids.len(),
            m.nrows()
        )));
    }
    Ok(())
}

/// Pairwise Euclidean distances between the rows of `a` and `b`.
pub fn euclidean_matrix(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "{}D rows against {}D rows",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok(Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
        a.row(i)
            .iter()
            .zip(b.row(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }))
}

/// Pairwise cosine similarities, clamped to `[-1, 1]`. A zero row is an
/// error naming its id.
pub fn cosine_matrix(
    a: ArrayView2<f64>,
    a_ids: &[String],
    b: ArrayView2<f64>,
    b_ids: &[String],
) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "{}D rows against {}D rows",
            a.ncols(),
            b.ncols()
        )));
    }
    let norms = |m: ArrayView2<f64>, ids: &[String]| -> Result<Vec<f64>> {
        m.rows()
            .into_iter()
            .zip(ids)
            .map(|(r, id)| {
                let n = r.dot(&r).sqrt();
                if n > 0.0 && n.is_finite() {
                    Ok(n)
                } else {
                    Err(Error::DegenerateEmbedding(id.clone()))
                }
            })
            .collect()
    };
    let na = norms(a, a_ids)?;
    let nb = norms(b, b_ids)?;
    let dots = a.dot(&b.t());
    Ok(Array2::from_shape_fn(dots.dim(), |(i, j)| {
        (dots[[i, j]] / (na[i] * nb[j])).clamp(-1.0, 1.0)
    }))
}

fn digest(m: &Array2<f64>) -> String {
    sha256_hex(&encode_afmx(m))
}

fn va_table(va: &[VaVector]) -> Array2<f64> {
    Array2::from_shape_fn((va.len(), 2), |(i, j)| va[i].to_array()[j])
}

/// Rating-free affective baseline: V-A distance between every track and painting.
pub fn haydn_from_va(
    music_ids: &[String],
    music: &[VaVector],
    painting_ids: &[String],
    paintings: &[VaVector],
) -> Result<SimilarityIndex> {
    if music.is_empty() || paintings.is_empty() {
        return Err(Error::InvalidCatalog(
            "Haydn needs at least one track and one painting".into(),
        ));
    }
    if music_ids.len() != music.len() || painting_ids.len() != paintings.len() {
        return Err(Error::Shape("ids do not align with V-A rows".into()));
    }
    let values = Array2::from_shape_fn((music.len(), paintings.len()), |(i, j)| {
        va_distance(&music[i], &paintings[j])
    });
    let info = BTreeMap::from([
        ("music_va_sha256".to_string(), digest(&va_table(music))),
        (
            "painting_va_sha256".to_string(),
            digest(&va_table(paintings)),
        ),
    ]);
    SimilarityIndex::new(
        Engine::Haydn,
        Semantics::Distance,
        music_ids.to_vec(),
        painting_ids.to_vec(),
        values,
        info,
    )
}

pub fn build_haydn_index(catalog: &Catalog) -> Result<SimilarityIndex> {
    catalog.require_nonempty()?;
    let va = |m: Modality| catalog.records(m).iter().map(|r| r.va).collect::<Vec<_>>();
    haydn_from_va(
        &catalog.ids(Modality::Music),
        &va(Modality::Music),
        &catalog.ids(Modality::Painting),
        &va(Modality::Painting),
    )
}

fn bundle_info(
    bundle: &PreprocessedBundle,
    rows: &Array2<f64>,
    cols: &Array2<f64>,
) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("rows_sha256".to_string(), digest(rows)),
        ("cols_sha256".to_string(), digest(cols)),
        (
            "seed".to_string(),
            bundle.config.mozart.train.seed.to_string(),
        ),
    ])
}

/// Euclidean distances between the joint embeddings.
pub fn build_mozart_index(bundle: &PreprocessedBundle) -> Result<SimilarityIndex> {
    check_rows(
        &bundle.music_ids,
        bundle.mozart_music.view(),
        "mozart music",
    )?;
    check_rows(
        &bundle.painting_ids,
        bundle.mozart_paintings.view(),
        "mozart paintings",
    )?;
    let values = euclidean_matrix(bundle.mozart_music.view(), bundle.mozart_paintings.view())?;
    let mut info = bundle_info(bundle, &bundle.mozart_music, &bundle.mozart_paintings);
    info.insert("sigma".into(), bundle.config.mozart.sigma.to_string());
    info.insert("margin".into(), bundle.config.mozart.margin.to_string());
    SimilarityIndex::new(
        Engine::Mozart,
        Semantics::Distance,
        bundle.music_ids.clone(),
        bundle.painting_ids.clone(),
        values,
        info,
    )
}

/// Cosine similarity (or Euclidean distance) between the two-stream embeddings.
pub fn build_salieri_index(
    bundle: &PreprocessedBundle,
    metric: SalieriMetric,
) -> Result<SimilarityIndex> {
    check_rows(
        &bundle.music_ids,
        bundle.salieri_music.view(),
        "salieri music",
    )?;
    check_rows(
        &bundle.painting_ids,
        bundle.salieri_paintings.view(),
        "salieri paintings",
    )?;
    let (m, p) = (bundle.salieri_music.view(), bundle.salieri_paintings.view());
    let (semantics, values) = match metric {
        SalieriMetric::Cosine => (
            Semantics::Similarity,
            cosine_matrix(m, &bundle.music_ids, p, &bundle.painting_ids)?,
        ),
        SalieriMetric::Euclidean => (Semantics::Distance, euclidean_matrix(m, p)?),
    };
    let mut info = bundle_info(bundle, &bundle.salieri_music, &bundle.salieri_paintings);
    info.insert(
        "metric".into(),
        match metric {
            SalieriMetric::Cosine => "cosine",
            SalieriMetric::Euclidean => "euclidean",
        }
        .into(),
    );
    SimilarityIndex::new(
        Engine::Salieri,
        semantics,
        bundle.music_ids.clone(),
        bundle.painting_ids.clone(),
        values,
        info,
    )
}

/// Square painting-by-painting cosine similarity over raw visual features.
pub fn build_visual_index(
    painting_ids: &[String],
    features: ArrayView2<f64>,
) -> Result<SimilarityIndex> {
    check_rows(painting_ids, features, "visual features")?;
    if painting_ids.len() < 2 {
        return Err(Error::InvalidCatalog(format!(
            "the visual index needs at least two paintings, got {}",
            painting_ids.len()
        )));
    }
    let values = cosine_matrix(features, painting_ids, features, painting_ids)?;
    let info = BTreeMap::from([("features_sha256".to_string(), digest(&features.to_owned()))]);
    SimilarityIndex::new(
        Engine::Visual,
        Semantics::Similarity,
        painting_ids.to_vec(),
        painting_ids.to_vec(),
        values,
        info,
    )
}

/// Builds the named engine's index from a bundle (Haydn uses its V-A tables).
pub fn build_index(
    engine: Engine,
    bundle: &PreprocessedBundle,
    salieri: SalieriMetric,
) -> Result<SimilarityIndex> {
    match engine {
        Engine::Haydn => {
            let rows = |m: &Array2<f64>| -> Result<Vec<VaVector>> {
                m.rows()
                    .into_iter()
                    .map(|r| VaVector::new(r[0], r[1]))
                    .collect()
            };
            haydn_from_va(
                &bundle.music_ids,
                &rows(&bundle.va_music)?,
                &bundle.painting_ids,
                &rows(&bundle.va_paintings)?,
            )
        }
        Engine::Mozart => build_mozart_index(bundle),
        Engine::Salieri => build_salieri_index(bundle, salieri),
        Engine::Visual => build_visual_index(&bundle.painting_ids, bundle.visual_paintings.view()),
    }
}
