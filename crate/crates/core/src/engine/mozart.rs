//! Projection head for the joint music-painting space.
//!
//! Both modalities go through one shared head. Every pair in a mini-batch,
//! cross- or intra-modal, contributes a contrastive term whose target
//! similarity is the Gaussian kernel of the pair's V-A distance and whose
//! weight is the product of the members' modality weights.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affect::{gaussian_similarity, va_distance, VaVector};
use crate::error::{Error, Result};
use crate::neural::{
    check_finite, contrastive_pair_grad, modality_weights, split_indices, Activation, Adam,
    AdamConfig, EarlyStopping, EpochRecord, Mlp, MlpGrads, StopSignal, TrainConfig, TrainHistory,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MozartConfig {
    pub sigma: f64,
    pub margin: f64,
    /// Sizes after the enriched input, e.g. `[256, 128]`.
    pub projection_layers: Vec<usize>,
    pub train: TrainConfig,
    pub optimizer: AdamConfig,
}

impl Default for MozartConfig {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            margin: 0.5,
            projection_layers: vec![256, 128],
            train: TrainConfig::default(),
            optimizer: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionFit {
    pub head: Mlp,
    pub history: TrainHistory,
}

/// Item of the merged training pool.
#[derive(Clone, Copy)]
struct PoolItem {
    row: usize,
    va: VaVector,
    weight: f64,
}

struct Pool<'a> {
    music: ArrayView2<'a, f64>,
    paintings: ArrayView2<'a, f64>,
    n_music: usize,
}

impl Pool<'_> {
    fn gather(&self, items: &[PoolItem]) -> Array2<f64> {
        let mut out = Array2::zeros((items.len(), self.music.ncols()));
        for (k, it) in items.iter().enumerate() {
            let src = if it.row < self.n_music {
                self.music.row(it.row)
            } else {
                self.paintings.row(it.row - self.n_music)
            };
            out.row_mut(k).assign(&src);
        }
        out
    }
}

/// Mean weighted contrastive loss over all unordered pairs of `outputs`,
/// with its gradient wrt each output row.
fn pairwise_loss(
    outputs: &Array2<f64>,
    items: &[PoolItem],
    sigma: f64,
    margin: f64,
) -> Result<(f64, Array2<f64>)> {
    let n = items.len();
    let mut grad = Array2::zeros(outputs.raw_dim());
    if n < 2 {
        return Ok((0.0, grad));
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let mut loss = 0.0;
    for i in 0..n {
        let zi = outputs.row(i);
        let zi = zi.as_slice().expect("standard layout");
        for j in (i + 1)..n {
            let zj = outputs.row(j);
            let zj = zj.as_slice().expect("standard layout");
            let s = gaussian_similarity(va_distance(&items[i].va, &items[j].va), sigma)?;
            let (l, g) = contrastive_pair_grad(zi, zj, s, margin)?;
            let w = items[i].weight * items[j].weight / pairs;
            loss += w * l;
            for (k, gk) in g.iter().enumerate() {
                grad[[i, k]] += w * gk;
                grad[[j, k]] -= w * gk;
            }
        }
    }
    Ok((loss, grad))
}

/// Forward and backward pass of one batch: the weighted contrastive loss
/// over all pairs of rows and its gradient wrt the head's parameters.
pub fn batch_loss_and_grad(
    head: &Mlp,
    inputs: ArrayView2<f64>,
    va: &[VaVector],
    weights: &[f64],
    sigma: f64,
    margin: f64,
) -> Result<(f64, MlpGrads)> {
    if inputs.nrows() != va.len() || va.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} rows, {} V-A labels and {} weights",
            inputs.nrows(),
            va.len(),
            weights.len()
        )));
    }
    let items: Vec<PoolItem> = va
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(row, (&va, &weight))| PoolItem { row, va, weight })
        .collect();
    let cache = head.forward_cached(inputs)?;
    let (loss, grad) = pairwise_loss(cache.output(), &items, sigma, margin)?;
    let (grads, _) = head.backward(&cache, grad.view())?;
    Ok((loss, grads))
}

fn evaluate(head: &Mlp, pool: &Pool<'_>, items: &[PoolItem], config: &MozartConfig) -> Result<f64> {
    let x = pool.gather(items);
    let z = head.forward_batch(x.view())?;
    Ok(pairwise_loss(&z, items, config.sigma, config.margin)?.0)
}

/// Trains the shared projection head on enriched embeddings (rows aligned
/// with the V-A slices) by minimizing the weighted kernel contrastive loss.
pub fn train_mozart_projection(
    music: ArrayView2<f64>,
    paintings: ArrayView2<f64>,
    music_va: &[VaVector],
    painting_va: &[VaVector],
    config: &MozartConfig,
) -> Result<ProjectionFit> {
    config.train.validate()?;
    config.optimizer.validate()?;
    if !(config.margin > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "margin must be positive, got {}",
            config.margin
        )));
    }
    gaussian_similarity(0.0, config.sigma)?;
    if music.ncols() != paintings.ncols() {
        return Err(Error::Shape(format!(
            "music embeddings are {}D, painting embeddings {}D",
            music.ncols(),
            paintings.ncols()
        )));
    }
    if music.nrows() != music_va.len() || paintings.nrows() != painting_va.len() {
        return Err(Error::Shape(
            "V-A labels do not align with embedding rows".into(),
        ));
    }
    if music.nrows() < 2 || paintings.nrows() < 2 {
        return Err(Error::InsufficientData(
            "projection training needs at least two items per modality".into(),
        ));
    }
    let (lambda_m, lambda_p) = modality_weights(music.nrows(), paintings.nrows())?;
    let n_music = music.nrows();
    let pool = Pool {
        music,
        paintings,
        n_music,
    };
    let music_items: Vec<PoolItem> = (0..n_music)
        .map(|i| PoolItem {
            row: i,
            va: music_va[i],
            weight: lambda_m,
        })
        .collect();
    let painting_items: Vec<PoolItem> = (0..paintings.nrows())
        .map(|i| PoolItem {
            row: n_music + i,
            va: painting_va[i],
            weight: lambda_p,
        })
        .collect();

    let seed = config.train.seed;
    let mut split_rng = ChaCha8Rng::seed_from_u64(seed);
    let (m_train, m_val) = split_indices(
        music_items.len(),
        config.train.validation_fraction,
        &mut split_rng,
    );
    let (p_train, p_val) = split_indices(
        painting_items.len(),
        config.train.validation_fraction,
        &mut split_rng,
    );
    let mut m_train: Vec<PoolItem> = m_train.into_iter().map(|i| music_items[i]).collect();
    let mut p_train: Vec<PoolItem> = p_train.into_iter().map(|i| painting_items[i]).collect();
    let val: Vec<PoolItem> = m_val
        .into_iter()
        .map(|i| music_items[i])
        .chain(p_val.into_iter().map(|i| painting_items[i]))
        .collect();

    let mut sizes = vec![music.ncols()];
    sizes.extend_from_slice(&config.projection_layers);
    let mut head = Mlp::init(
        &sizes,
        Activation::Relu,
        seed.wrapping_mul(3).wrapping_add(101),
    )?;
    let mut opt = Adam::for_mlp(config.optimizer, &head)?;
    let mut batch_rng = ChaCha8Rng::seed_from_u64(seed);
    batch_rng.set_stream(2);

    let all_train: Vec<PoolItem> = m_train.iter().chain(&p_train).copied().collect();
    let initial_train = check_finite(
        evaluate(&head, &pool, &all_train, config)?,
        "projection train",
    )?;
    let initial_val = check_finite(
        evaluate(&head, &pool, &val, config)?,
        "projection validation",
    )?;
    let mut stopper = EarlyStopping::new(config.train.patience, initial_val);
    let mut best = head.clone();
    let mut history = TrainHistory {
        initial_train_loss: initial_train,
        initial_validation_loss: initial_val,
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };

    let half = (config.train.batch_size / 2).max(1);
    let per_batch_m = half.min(m_train.len());
    let per_batch_p = half.min(p_train.len());
    let batches = m_train.len().max(p_train.len()).div_ceil(half);

    for epoch in 1..=config.train.max_epochs {
        m_train.shuffle(&mut batch_rng);
        p_train.shuffle(&mut batch_rng);
        let mut epoch_loss = 0.0;
        for b in 0..batches {
            // Each modality contributes up to half a batch; the smaller one
            // cycles so every batch stays stratified.
            let items: Vec<PoolItem> = (0..per_batch_m)
                .map(|t| m_train[(b * half + t) % m_train.len()])
                .chain((0..per_batch_p).map(|t| p_train[(b * half + t) % p_train.len()]))
                .collect();
            let x = pool.gather(&items);
            let va: Vec<VaVector> = items.iter().map(|it| it.va).collect();
            let weights: Vec<f64> = items.iter().map(|it| it.weight).collect();
            let (loss, grads) =
                batch_loss_and_grad(&head, x.view(), &va, &weights, config.sigma, config.margin)?;
            epoch_loss += check_finite(loss, "projection train")?;
            opt.step_mlp(&mut head, &grads)?;
        }
        let train_loss = epoch_loss / batches as f64;
        let val_loss = check_finite(
            evaluate(&head, &pool, &val, config)?,
            "projection validation",
        )?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss: val_loss,
        });
        let (improved, signal) = stopper.observe(epoch, val_loss);
        if improved {
            best = head.clone();
        }
        if let StopSignal::Stop = signal {
            history.stopped_early = epoch < config.train.max_epochs;
            break;
        }
    }
    history.best_epoch = stopper.best_epoch();
    Ok(ProjectionFit {
        head: best,
        history,
    })
}

/// Applies a trained head to every row.
pub fn project(head: &Mlp, enriched: ArrayView2<f64>) -> Result<Array2<f64>> {
    head.forward_batch(enriched)
}

/// Appends the V-A columns to reduced embeddings.
pub fn enrich(reduced: ArrayView2<f64>, va: &[VaVector]) -> Result<Array2<f64>> {
    if reduced.nrows() != va.len() {
        return Err(Error::Shape(
            "V-A labels do not align with embedding rows".into(),
        ));
    }
    let va_cols = Array2::from_shape_fn((va.len(), 2), |(i, j)| va[i].to_array()[j]);
    ndarray::concatenate(Axis(1), &[reduced, va_cols.view()])
        .map_err(|e| Error::Shape(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradient_check;
    use rand::Rng;

    fn config(epochs: usize) -> MozartConfig {
        MozartConfig {
            projection_layers: vec![8, 4],
            train: TrainConfig {
                max_epochs: epochs,
                patience: epochs.min(5),
                batch_size: 16,
                seed: 3,
                validation_fraction: 0.2,
            },
            optimizer: AdamConfig {
                learning_rate: 1e-2,
                ..AdamConfig::default()
            },
            ..MozartConfig::default()
        }
    }

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn pairwise_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = random(5, 3, &mut rng) * 0.3;
        let items: Vec<PoolItem> = (0..5)
            .map(|i| PoolItem {
                row: i,
                va: VaVector::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    .unwrap(),
                weight: if i < 2 { 0.7 } else { 0.3 },
            })
            .collect();
        let report = gradient_check(
            |flat| {
                let z = Array2::from_shape_vec((5, 3), flat.to_vec()).unwrap();
                let (l, g) = pairwise_loss(&z, &items, 0.5, 0.5).unwrap();
                (l, g.into_raw_vec_and_offset().0)
            },
            z.as_slice().unwrap(),
            1e-6,
            1e-4,
        );
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn shared_va_collapses_embeddings() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random(24, 6, &mut rng);
        let p = random(24, 6, &mut rng);
        let va = vec![VaVector::new(0.3, 0.3).unwrap(); 24];
        let fit = train_mozart_projection(m.view(), p.view(), &va, &va, &config(40)).unwrap();
        let h = &fit.history;
        assert!(h.final_train_loss() < 0.1 * h.initial_train_loss, "{h:?}");
    }

    #[test]
    fn separates_distant_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let centers = [
            VaVector::new(0.6, 0.6).unwrap(),
            VaVector::new(-0.6, -0.6).unwrap(),
        ];
        let cluster = |i: usize| i % 2;
        let m = Array2::from_shape_fn((30, 6), |(i, j)| {
            if j < 2 {
                centers[cluster(i)].to_array()[j]
            } else {
                0.0
            }
        }) + random(30, 6, &mut rng) * 0.2;
        let p = Array2::from_shape_fn((30, 6), |(i, j)| {
            if j >= 4 {
                centers[cluster(i)].to_array()[j - 4]
            } else {
                0.0
            }
        }) + random(30, 6, &mut rng) * 0.2;
        let va: Vec<VaVector> = (0..30).map(|i| centers[cluster(i)]).collect();
        let fit = train_mozart_projection(m.view(), p.view(), &va, &va, &config(50)).unwrap();
        let zm = project(&fit.head, m.view()).unwrap();
        let zp = project(&fit.head, p.view()).unwrap();
        let (mut intra, mut inter, mut ni, mut nx) = (0.0, 0.0, 0, 0);
        for i in 0..30 {
            for j in 0..30 {
                let d = (&zm.row(i) - &zp.row(j)).mapv(|x| x * x).sum().sqrt();
                if cluster(i) == cluster(j) {
                    intra += d;
                    ni += 1;
                } else {
                    inter += d;
                    nx += 1;
                }
            }
        }
        assert!(inter / nx as f64 > intra / ni as f64);
    }

    #[test]
    fn reruns_are_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = random(20, 5, &mut rng);
        let p = random(30, 5, &mut rng);
        let mv: Vec<VaVector> = (0..20)
            .map(|i| VaVector::new(0.05 * i as f64 - 0.5, 0.2).unwrap())
            .collect();
        let pv: Vec<VaVector> = (0..30)
            .map(|i| VaVector::new(0.2, 0.03 * i as f64 - 0.5).unwrap())
            .collect();
        let a = train_mozart_projection(m.view(), p.view(), &mv, &pv, &config(6)).unwrap();
        let b = train_mozart_projection(m.view(), p.view(), &mv, &pv, &config(6)).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.head, b.head);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let m = Array2::zeros((4, 3));
        let p = Array2::zeros((4, 5));
        let va = vec![VaVector::new(0.0, 0.0).unwrap(); 4];
        assert!(matches!(
            train_mozart_projection(m.view(), p.view(), &va, &va, &config(2)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn enrich_appends_va() {
        let z = Array2::from_elem((2, 3), 0.5);
        let va = [
            VaVector::new(0.1, -0.2).unwrap(),
            VaVector::new(0.3, 0.4).unwrap(),
        ];
        let e = enrich(z.view(), &va).unwrap();
        assert_eq!(e.ncols(), 5);
        assert_eq!(e.row(1).to_vec(), vec![0.5, 0.5, 0.5, 0.3, 0.4]);
    }
}
