//! Index construction for the four engines and top-n recommendation.

mod build;
mod index;
pub mod mozart;
mod recommend;

pub use build::{
    build_haydn_index, build_index, build_mozart_index, build_salieri_index, build_visual_index,
    cosine_matrix, euclidean_matrix, haydn_from_va, SalieriMetric,
};
pub use index::{Engine, Semantics, SimilarityIndex, AFIX_MAGIC, AFIX_VERSION};
pub use mozart::{batch_loss_and_grad, train_mozart_projection, MozartConfig, ProjectionFit};
pub use recommend::{
    normalize_ratings, recommend, recommend_filtered, PreferenceRating, RatingWeight,
    RecommendationEntry, RecommendationList,
};
