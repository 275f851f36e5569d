//! Synthetic clustered catalogs with known ground truth, for tests and demos.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::record::{Catalog, FeatureRecord, Modality, Provenance};
use crate::affect::VaVector;

/// Metadata key holding an item's ground-truth cluster.
pub const CLUSTER_KEY: &str = "cluster";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_music: usize,
    pub n_paintings: usize,
    pub n_clusters: usize,
    pub feature_dim_music: usize,
    pub feature_dim_paintings: usize,
    pub text_dim: usize,
    pub va_noise_sd: f64,
    pub feature_noise_sd: f64,
}

impl SynthSpec {
    pub fn new(
        seed: u64,
        n_music: usize,
        n_paintings: usize,
        n_clusters: usize,
        dim_m: usize,
        dim_p: usize,
    ) -> Self {
        Self {
            seed,
            n_music,
            n_paintings,
            n_clusters,
            feature_dim_music: dim_m,
            feature_dim_paintings: dim_p,
            text_dim: 16,
            va_noise_sd: 0.1,
            feature_noise_sd: 0.1,
        }
    }
}

const QUADRANTS: [(f64, f64); 4] = [(0.5, 0.5), (-0.5, 0.5), (-0.5, -0.5), (0.5, -0.5)];

/// Cluster centers: quadrant midpoints for up to four clusters, otherwise
/// evenly spaced on the circle through them.
pub fn cluster_centers(n_clusters: usize) -> Vec<VaVector> {
    let n = n_clusters.max(1);
    (0..n)
        .map(|k| {
            let (v, a) = if n <= 4 {
                QUADRANTS[k]
            } else {
                let angle =
                    std::f64::consts::FRAC_PI_4 + k as f64 * std::f64::consts::TAU / n as f64;
                let r = std::f64::consts::FRAC_1_SQRT_2;
                (r * angle.cos(), r * angle.sin())
            };
            VaVector::new(v, a).expect("centers lie inside the unit square")
        })
        .collect()
}

/// Index of the nearest center to `va`.
pub fn nearest_center(va: &VaVector, centers: &[VaVector]) -> usize {
    centers
        .iter()
        .enumerate()
        .min_by(|a, b| {
            crate::affect::va_distance(va, a.1).total_cmp(&crate::affect::va_distance(va, b.1))
        })
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Cluster-specific affine map from V-A to feature space.
struct Embedding {
    weights: Vec<[f64; 2]>,
    offset: Vec<f64>,
}

impl Embedding {
    fn draw(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let weights = (0..dim)
            .map(|_| [normal.sample(rng), normal.sample(rng)])
            .collect();
        let offset = (0..dim).map(|_| normal.sample(rng)).collect();
        Self { weights, offset }
    }

    fn apply(&self, va: &VaVector, noise: &Normal<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let [v, a] = va.to_array();
        self.weights
            .iter()
            .zip(&self.offset)
            .map(|(w, b)| w[0] * v + w[1] * a + b + noise.sample(rng))
            .collect()
    }
}

fn generate(
    spec: &SynthSpec,
    modality: Modality,
    count: usize,
    dim: usize,
    centers: &[VaVector],
) -> Vec<FeatureRecord> {
    let (va_stream, feat_stream, text_stream, prefix) = match modality {
        Modality::Music => (1, 3, 5, "m"),
        Modality::Painting => (2, 4, 6, "p"),
    };
    let mut va_rng = stream(spec.seed, va_stream);
    let mut feat_rng = stream(spec.seed, feat_stream);
    let mut text_rng = stream(spec.seed, text_stream);
    let feature_maps: Vec<Embedding> = centers
        .iter()
        .map(|_| Embedding::draw(dim, &mut feat_rng))
        .collect();
    let text_maps: Vec<Embedding> = centers
        .iter()
        .map(|_| Embedding::draw(spec.text_dim, &mut text_rng))
        .collect();
    let va_noise = Normal::new(0.0, spec.va_noise_sd).unwrap();
    let feat_noise = Normal::new(0.0, spec.feature_noise_sd).unwrap();

    (0..count)
        .map(|i| {
            let cluster = i % centers.len();
            let center = centers[cluster];
            let va = VaVector::clamped(
                center.valence() + va_noise.sample(&mut va_rng),
                center.arousal() + va_noise.sample(&mut va_rng),
            )
            .expect("finite draws");
            let features = feature_maps[cluster].apply(&va, &feat_noise, &mut feat_rng);
            let text = (spec.text_dim > 0)
                .then(|| text_maps[cluster].apply(&va, &feat_noise, &mut text_rng));
            let id = format!("{prefix}{i:04}");
            let asset = match modality {
                Modality::Music => format!("synth://music/{id}.wav"),
                Modality::Painting => format!("synth://paintings/{id}.png"),
            };
            let metadata = BTreeMap::from([
                (CLUSTER_KEY.to_string(), cluster.to_string()),
                ("title".to_string(), format!("Synthetic {modality} {i}")),
                ("asset".to_string(), asset),
            ]);
            FeatureRecord {
                id,
                modality,
                features,
                text_features: text,
                va,
                stability: None,
                metadata,
            }
        })
        .collect()
}

/// Clustered catalog: V-A draws around cluster centers, features as noisy
/// cluster-specific affine embeddings of each item's V-A. V-A, feature and
/// text draws use independent RNG streams.
pub fn synth_catalog_with(spec: &SynthSpec) -> Catalog {
    let centers = cluster_centers(spec.n_clusters);
    let music = generate(
        spec,
        Modality::Music,
        spec.n_music,
        spec.feature_dim_music,
        &centers,
    );
    let paintings = generate(
        spec,
        Modality::Painting,
        spec.n_paintings,
        spec.feature_dim_paintings,
        &centers,
    );
    let provenance = Provenance {
        generator: Some(format!("{spec:?}")),
        ..Default::default()
    };
    Catalog::new(music, paintings, provenance).expect("generated catalogs are valid")
}

pub fn synth_catalog(
    seed: u64,
    n_music: usize,
    n_paintings: usize,
    n_clusters: usize,
    feature_dim_music: usize,
    feature_dim_paintings: usize,
) -> Catalog {
    synth_catalog_with(&SynthSpec::new(
        seed,
        n_music,
        n_paintings,
        n_clusters,
        feature_dim_music,
        feature_dim_paintings,
    ))
}
