//! Feature-file ingestion, validated catalogs, scaling, synthetic corpora and
//! the preprocessing pipeline.

mod matrix;
pub mod preprocess;
mod record;
mod scale;
pub mod synth;

pub use matrix::{
    decode_afmx, encode_afmx, read_afmx, write_afmx, EmbeddingMatrix, Stage, AFMX_MAGIC,
};
pub use preprocess::{preprocess_cdr, BundleManifest, PreprocessConfig, PreprocessedBundle};
pub use record::{
    load_catalog, read_feature_file, write_feature_file, Catalog, CurationPolicy, FeatureRecord,
    MatrixRef, Modality, ModalityProvenance, Provenance, RawRecord, VaScale,
};
pub use scale::{minmax_scale, ScalerParams};
