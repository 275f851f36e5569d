//! Full preprocessing pipeline: V-A tables, Mozart joint embeddings, Salieri
//! two-stream embeddings and raw visual features, plus the on-disk bundle.
//!
//! A bundle directory holds one `AFMX` file per matrix, one `AFNN` file per
//! trained encoder, `scalers.json`, and `manifest.json` with item ids, the
//! configuration, training histories and the SHA-256 of every other file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::matrix::{decode_afmx, encode_afmx};
use super::record::{Catalog, Modality};
use super::scale::{minmax_scale, ScalerParams};
use crate::affect::VaVector;
use crate::checksum::sha256_hex;
use crate::engine::mozart::{enrich, project, train_mozart_projection, MozartConfig};
use crate::error::{Error, Result};
use crate::neural::{checkpoint, train_autoencoder, AdamConfig, Mlp, TrainConfig, TrainHistory};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCALERS_FILE: &str = "scalers.json";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Encoder sizes after the input dimension.
    pub autoencoder_layers: Vec<usize>,
    pub autoencoder: TrainConfig,
    pub mozart: MozartConfig,
    pub optimizer: AdamConfig,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            autoencoder_layers: vec![1024, 512, 256],
            autoencoder: TrainConfig::default(),
            mozart: MozartConfig::default(),
            optimizer: AdamConfig::default(),
        }
    }
}

impl PreprocessConfig {
    /// Applies one seed to every training stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.autoencoder.seed = seed;
        self.mozart.train.seed = seed;
        self
    }

    pub fn with_epochs(mut self, max_epochs: usize, patience: usize) -> Self {
        self.autoencoder.max_epochs = max_epochs;
        self.autoencoder.patience = patience;
        self.mozart.train.max_epochs = max_epochs;
        self.mozart.train.patience = patience;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.autoencoder.batch_size = batch_size;
        self.mozart.train.batch_size = batch_size;
        self
    }

    fn stage_config(&self, offset: u64) -> TrainConfig {
        TrainConfig {
            seed: self.autoencoder.seed.wrapping_add(offset),
            ..self.autoencoder
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scalers {
    pub music: ScalerParams,
    pub paintings: ScalerParams,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BundleHistories {
    pub autoencoder_music: Option<TrainHistory>,
    pub autoencoder_paintings: Option<TrainHistory>,
    pub salieri_music: Option<TrainHistory>,
    pub salieri_paintings: Option<TrainHistory>,
    pub projection: Option<TrainHistory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleModels {
    pub encoder_music: Mlp,
    pub encoder_paintings: Mlp,
    pub salieri_music: Mlp,
    pub salieri_paintings: Mlp,
    pub projection: Mlp,
}

/// Everything the four engines need, aligned with `music_ids` and
/// `painting_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedBundle {
    pub music_ids: Vec<String>,
    pub painting_ids: Vec<String>,
    pub va_music: Array2<f64>,
    pub va_paintings: Array2<f64>,
    pub mozart_music: Array2<f64>,
    pub mozart_paintings: Array2<f64>,
    pub salieri_music: Array2<f64>,
    pub salieri_paintings: Array2<f64>,
    pub visual_paintings: Array2<f64>,
    pub models: BundleModels,
    pub scalers: Scalers,
    pub config: PreprocessConfig,
    pub histories: BundleHistories,
}

fn va_rows(matrix: ArrayView2<f64>) -> Result<Vec<VaVector>> {
    matrix
        .rows()
        .into_iter()
        .map(|r| VaVector::new(r[0], r[1]))
        .collect()
}

pub fn preprocess_cdr(catalog: &Catalog, config: &PreprocessConfig) -> Result<PreprocessedBundle> {
    catalog.require_nonempty()?;
    let va_music = catalog.va_matrix(Modality::Music);
    let va_paintings = catalog.va_matrix(Modality::Painting);

    let sizes = |dim: usize| {
        let mut s = vec![dim];
        s.extend_from_slice(&config.autoencoder_layers);
        s
    };
    let raw_m = catalog.feature_matrix(Modality::Music);
    let raw_p = catalog.feature_matrix(Modality::Painting);
    let ae_m = train_autoencoder(
        raw_m.view(),
        &sizes(raw_m.ncols()),
        &config.stage_config(0),
        &config.optimizer,
    )?;
    let ae_p = train_autoencoder(
        raw_p.view(),
        &sizes(raw_p.ncols()),
        &config.stage_config(1),
        &config.optimizer,
    )?;
    let (reduced_m, scaler_m) = minmax_scale(ae_m.encode(raw_m.view())?.view())?;
    let (reduced_p, scaler_p) = minmax_scale(ae_p.encode(raw_p.view())?.view())?;

    let va_m = va_rows(va_music.view())?;
    let va_p = va_rows(va_paintings.view())?;
    let enriched_m = enrich(reduced_m.view(), &va_m)?;
    let enriched_p = enrich(reduced_p.view(), &va_p)?;
    let fit = train_mozart_projection(
        enriched_m.view(),
        enriched_p.view(),
        &va_m,
        &va_p,
        &config.mozart,
    )?;
    let mozart_music = project(&fit.head, enriched_m.view())?;
    let mozart_paintings = project(&fit.head, enriched_p.view())?;

    let two_m = catalog.combined_feature_matrix(Modality::Music);
    let two_p = catalog.combined_feature_matrix(Modality::Painting);
    let sal_m = train_autoencoder(
        two_m.view(),
        &sizes(two_m.ncols()),
        &config.stage_config(2),
        &config.optimizer,
    )?;
    let sal_p = train_autoencoder(
        two_p.view(),
        &sizes(two_p.ncols()),
        &config.stage_config(3),
        &config.optimizer,
    )?;
    let salieri_music = sal_m.encode(two_m.view())?;
    let salieri_paintings = sal_p.encode(two_p.view())?;

    Ok(PreprocessedBundle {
        music_ids: catalog.ids(Modality::Music),
        painting_ids: catalog.ids(Modality::Painting),
        va_music,
        va_paintings,
        mozart_music,
        mozart_paintings,
        salieri_music,
        salieri_paintings,
        visual_paintings: raw_p,
        histories: BundleHistories {
            autoencoder_music: Some(ae_m.history),
            autoencoder_paintings: Some(ae_p.history),
            salieri_music: Some(sal_m.history),
            salieri_paintings: Some(sal_p.history),
            projection: Some(fit.history),
        },
        models: BundleModels {
            encoder_music: ae_m.encoder,
            encoder_paintings: ae_p.encoder,
            salieri_music: sal_m.encoder,
            salieri_paintings: sal_p.encoder,
            projection: fit.head,
        },
        scalers: Scalers {
            music: scaler_m,
            paintings: scaler_p,
        },
        config: config.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub version: u32,
    pub music_ids: Vec<String>,
    pub painting_ids: Vec<String>,
    pub config: PreprocessConfig,
    pub histories: BundleHistories,
    /// File name to lowercase hex SHA-256.
    pub files: BTreeMap<String, String>,
}

impl PreprocessedBundle {
    fn matrices(&self) -> [(&'static str, &Array2<f64>); 7] {
        [
            ("va_music.afmx", &self.va_music),
            ("va_paintings.afmx", &self.va_paintings),
            ("mozart_music.afmx", &self.mozart_music),
            ("mozart_paintings.afmx", &self.mozart_paintings),
            ("salieri_music.afmx", &self.salieri_music),
            ("salieri_paintings.afmx", &self.salieri_paintings),
            ("visual_paintings.afmx", &self.visual_paintings),
        ]
    }

    fn networks(&self) -> [(&'static str, &Mlp); 5] {
        [
            ("encoder_music.afnn", &self.models.encoder_music),
            ("encoder_paintings.afnn", &self.models.encoder_paintings),
            ("salieri_music.afnn", &self.models.salieri_music),
            ("salieri_paintings.afnn", &self.models.salieri_paintings),
            ("projection.afnn", &self.models.projection),
        ]
    }

    /// Writes the bundle into `dir`, creating it if needed. Returns the manifest.
    pub fn save(&self, dir: &Path) -> Result<BundleManifest> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = BTreeMap::new();
        let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
            let path = dir.join(name);
            files.insert(name.to_string(), sha256_hex(&bytes));
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
        };
        for (name, m) in self.matrices() {
            put(name, encode_afmx(m))?;
        }
        for (name, net) in self.networks() {
            put(name, checkpoint::encode(net))?;
        }
        let scalers = serde_json::to_vec_pretty(&self.scalers).expect("scalers serialize");
        put(SCALERS_FILE, scalers)?;
        let manifest = BundleManifest {
            version: BUNDLE_VERSION,
            music_ids: self.music_ids.clone(),
            painting_ids: self.painting_ids.clone(),
            config: self.config.clone(),
            histories: self.histories.clone(),
            files,
        };
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    /// Reads a bundle, verifying every file against the manifest checksums.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: BundleManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if manifest.version != BUNDLE_VERSION {
            return Err(Error::Format(format!(
                "unsupported bundle version {}",
                manifest.version
            )));
        }
        let read = |name: &str| -> Result<Vec<u8>> {
            let expected = manifest
                .files
                .get(name)
                .ok_or_else(|| Error::Integrity(format!("manifest does not list {name}")))?;
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if &sha256_hex(&bytes) != expected {
                return Err(Error::Integrity(format!(
                    "{} does not match its manifest checksum",
                    path.display()
                )));
            }
            Ok(bytes)
        };
        let matrix = |name: &str| read(name).and_then(|b| decode_afmx(&b));
        let network = |name: &str| read(name).and_then(|b| checkpoint::decode(&b));
        let scalers: Scalers = serde_json::from_slice(&read(SCALERS_FILE)?)
            .map_err(|e| Error::Format(format!("{SCALERS_FILE}: {e}")))?;

        let bundle = Self {
            va_music: matrix("va_music.afmx")?,
            va_paintings: matrix("va_paintings.afmx")?,
            mozart_music: matrix("mozart_music.afmx")?,
            mozart_paintings: matrix("mozart_paintings.afmx")?,
            salieri_music: matrix("salieri_music.afmx")?,
            salieri_paintings: matrix("salieri_paintings.afmx")?,
            visual_paintings: matrix("visual_paintings.afmx")?,
            models: BundleModels {
                encoder_music: network("encoder_music.afnn")?,
                encoder_paintings: network("encoder_paintings.afnn")?,
                salieri_music: network("salieri_music.afnn")?,
                salieri_paintings: network("salieri_paintings.afnn")?,
                projection: network("projection.afnn")?,
            },
            scalers,
            music_ids: manifest.music_ids,
            painting_ids: manifest.painting_ids,
            config: manifest.config,
            histories: manifest.histories,
        };
        bundle.check_alignment()?;
        Ok(bundle)
    }

    fn check_alignment(&self) -> Result<()> {
        let (nm, np) = (self.music_ids.len(), self.painting_ids.len());
        for (name, m) in self.matrices() {
            let expected = if name.contains("music") { nm } else { np };
            if m.nrows() != expected {
                return Err(Error::Shape(format!(
                    "{name} has {} rows for {expected} ids",
                    m.nrows()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::synth::synth_catalog;

    pub(crate) fn small_config() -> PreprocessConfig {
        let mut c = PreprocessConfig {
            autoencoder_layers: vec![12, 6],
            ..PreprocessConfig::default()
        }
        .with_seed(4)
        .with_epochs(3, 2)
        .with_batch_size(8);
        c.mozart.projection_layers = vec![8, 4];
        c
    }

    #[test]
    fn bundle_shapes_follow_layers() {
        let cat = synth_catalog(1, 24, 30, 4, 10, 14);
        let b = preprocess_cdr(&cat, &small_config()).unwrap();
        assert_eq!(b.va_music.dim(), (24, 2));
        assert_eq!(b.va_paintings.dim(), (30, 2));
        assert_eq!(b.mozart_music.dim(), (24, 4));
        assert_eq!(b.mozart_paintings.dim(), (30, 4));
        assert_eq!(b.salieri_music.dim(), (24, 6));
        assert_eq!(b.salieri_paintings.dim(), (30, 6));
        assert_eq!(b.visual_paintings.dim(), (30, 14));
        assert_eq!(b.models.salieri_music.input_dim(), 10 + 16);
    }

    #[test]
    fn rerun_is_identical_and_save_round_trips() {
        let cat = synth_catalog(2, 20, 20, 2, 6, 6);
        let a = preprocess_cdr(&cat, &small_config()).unwrap();
        let b = preprocess_cdr(&cat, &small_config()).unwrap();
        assert_eq!(a, b);

        let dir = tempfile::tempdir().unwrap();
        let m1 = a.save(dir.path()).unwrap();
        let loaded = PreprocessedBundle::load(dir.path()).unwrap();
        let other = tempfile::tempdir().unwrap();
        let m2 = loaded.save(other.path()).unwrap();
        assert_eq!(m1.files, m2.files);
        assert_eq!(loaded.music_ids, a.music_ids);
    }

    #[test]
    fn tampered_file_is_an_integrity_error() {
        let cat = synth_catalog(3, 20, 20, 2, 6, 6);
        let b = preprocess_cdr(&cat, &small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path()).unwrap();
        let target = dir.path().join("mozart_music.afmx");
        let mut bytes = fs::read(&target).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x40;
        fs::write(&target, bytes).unwrap();
        assert!(matches!(
            PreprocessedBundle::load(dir.path()),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn empty_paintings_rejected() {
        let cat = synth_catalog(1, 20, 20, 2, 6, 6);
        let empty = Catalog::new(cat.music().to_vec(), Vec::new(), Default::default()).unwrap();
        assert!(matches!(
            preprocess_cdr(&empty, &small_config()),
            Err(Error::InvalidCatalog(_))
        ));
    }
}
