use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use affectrec_core::affect::VaLexicon;
use affectrec_core::catalog::synth::synth_catalog;
use affectrec_core::catalog::{
    load_catalog, preprocess_cdr, write_feature_file, Catalog, CurationPolicy, Modality,
    PreprocessConfig, PreprocessedBundle,
};
use affectrec_core::checksum::sha256_hex;
use affectrec_core::engine::{
    build_haydn_index, build_index as build_engine_index, recommend_filtered, PreferenceRating,
    RecommendationList, SimilarityIndex,
};
use affectrec_core::evaluation::{ranking_overlap, retrieval_probe, shuffled_null};
use affectrec_core::session::replay;
use affectrec_core::Error;
use affectrec_service::log::read_events;

use crate::{
    emit, BuildIndexArgs, CliError, CliResult, EngineArg, ExportCommand, OverlapArgs,
    PreprocessArgs, ProbeArgs, RatingSource, RecommendArgs, SynthArgs,
};

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn load(music: &Path, paintings: &Path, lexicon: Option<&Path>) -> CliResult<Catalog> {
    let lexicon = lexicon.map(VaLexicon::load).transpose()?;
    Ok(load_catalog(music, paintings, lexicon.as_ref())?)
}

pub fn synth(a: SynthArgs, json: bool) -> CliResult {
    let catalog = synth_catalog(
        a.seed,
        a.music_count,
        a.painting_count,
        a.clusters,
        a.music_dim,
        a.painting_dim,
    );
    fs::create_dir_all(&a.out).map_err(io(&a.out))?;
    let music = a.out.join("music.jsonl");
    let paintings = a.out.join("paintings.jsonl");
    write_feature_file(catalog.music(), &music)?;
    write_feature_file(catalog.paintings(), &paintings)?;
    let out = json!({
        "music": music,
        "paintings": paintings,
        "music_count": catalog.music().len(),
        "painting_count": catalog.paintings().len(),
    });
    emit(json, &out, || {
        format!("wrote {}\nwrote {}", music.display(), paintings.display())
    });
    Ok(())
}

pub fn preprocess(a: PreprocessArgs, json: bool) -> CliResult {
    let catalog = load(
        &a.catalog.music,
        &a.catalog.paintings,
        a.catalog.lexicon.as_deref(),
    )?;
    let mut config = PreprocessConfig::default()
        .with_seed(a.seed)
        .with_epochs(a.epochs, a.patience)
        .with_batch_size(a.batch_size);
    config.mozart.sigma = a.sigma;
    config.mozart.margin = a.margin;
    config.optimizer.learning_rate = a.learning_rate;
    config.mozart.optimizer.learning_rate = a.learning_rate;
    config.autoencoder_layers = a.dims;
    config.mozart.projection_layers = a.projection_dims;
    let bundle = preprocess_cdr(&catalog, &config)?;
    let manifest = bundle.save(&a.out)?;
    emit(json, &manifest, || {
        let mut t = format!("bundle written to {}\n", a.out.display());
        for (file, sha) in &manifest.files {
            t.push_str(&format!("{sha}  {file}\n"));
        }
        t
    });
    Ok(())
}

#[derive(Serialize)]
struct BuiltIndex {
    engine: String,
    path: String,
    rows: usize,
    cols: usize,
    sha256: String,
}

pub fn build_index(a: BuildIndexArgs, json: bool) -> CliResult {
    let engines = EngineArg::expand(&a.engine);
    if a.dump_csv.is_some() && engines.len() != 1 {
        return Err(CliError::Usage(
            "--dump-csv needs exactly one engine".into(),
        ));
    }
    let needs_bundle = engines
        .iter()
        .any(|e| *e != affectrec_core::engine::Engine::Haydn)
        || a.music.is_none();
    let bundle = match (&a.bundle, needs_bundle) {
        (Some(dir), _) => Some(PreprocessedBundle::load(dir)?),
        (None, true) => {
            return Err(CliError::Usage(
                "--bundle is required (only haydn can be built from --music/--paintings)".into(),
            ))
        }
        (None, false) => None,
    };
    let catalog = match (&a.music, &a.paintings, &bundle) {
        (Some(m), Some(p), None) => Some(load(m, p, a.lexicon.as_deref())?),
        _ => None,
    };
    fs::create_dir_all(&a.out).map_err(io(&a.out))?;
    let mut built = Vec::new();
    for engine in engines {
        let index = match (&bundle, &catalog) {
            (Some(b), _) => build_engine_index(engine, b, a.salieri_metric)?,
            (None, Some(c)) => build_haydn_index(c)?,
            (None, None) => unreachable!("checked above"),
        };
        let path = a.out.join(format!("{engine}.afix"));
        let bytes = index.encode();
        fs::write(&path, &bytes).map_err(io(&path))?;
        if let Some(csv) = &a.dump_csv {
            // Print the stored (single-precision) values, not the in-memory ones.
            write_csv(&SimilarityIndex::decode(&bytes)?, Some(csv))?;
        }
        built.push(BuiltIndex {
            engine: engine.to_string(),
            path: path.display().to_string(),
            rows: index.row_ids().len(),
            cols: index.col_ids().len(),
            sha256: sha256_hex(&bytes),
        });
    }
    emit(json, &built, || {
        built
            .iter()
            .map(|b| format!("{}: {}x{} -> {}\n", b.engine, b.rows, b.cols, b.path))
            .collect()
    });
    Ok(())
}

fn write_csv(index: &SimilarityIndex, out: Option<&Path>) -> CliResult {
    match out {
        Some(p) if p != Path::new("-") => {
            let f = fs::File::create(p).map_err(io(p))?;
            let mut w = std::io::BufWriter::new(f);
            index
                .write_csv(&mut w)
                .and_then(|_| w.flush())
                .map_err(io(p))?;
        }
        _ => {
            let stdout = std::io::stdout();
            index
                .write_csv(stdout.lock())
                .map_err(io(Path::new("<stdout>")))?;
        }
    }
    Ok(())
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum RatingsFile {
    List(Vec<PreferenceRating>),
    Wrapped { ratings: Vec<PreferenceRating> },
}

pub fn read_ratings(src: &RatingSource) -> CliResult<Vec<PreferenceRating>> {
    let mut out = Vec::new();
    if let Some(path) = &src.ratings {
        let text = fs::read_to_string(path).map_err(io(path))?;
        let parsed: RatingsFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        out = match parsed {
            RatingsFile::List(r) | RatingsFile::Wrapped { ratings: r } => r,
        };
    }
    for spec in &src.rate {
        let (id, r) = spec
            .rsplit_once('=')
            .ok_or_else(|| CliError::Usage(format!("--rate expects ID=RATING, got `{spec}`")))?;
        let rating: u8 = r
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("rating `{r}` is not an integer")))?;
        out.push(PreferenceRating::new(id.trim(), rating)?);
    }
    if out.is_empty() {
        return Err(CliError::Usage(
            "no ratings given (use --ratings or --rate)".into(),
        ));
    }
    Ok(out)
}

fn print_list(list: &RecommendationList, json: bool) {
    emit(json, list, || {
        let mut t = String::new();
        for (rank, e) in list.entries.iter().enumerate() {
            t.push_str(&format!(
                "{}\t{}\t{:.6}\n",
                rank + 1,
                e.painting_id,
                e.aggregate_distance
            ));
        }
        if list.truncated {
            t.push_str("(fewer paintings available than requested)\n");
        }
        t
    });
}

pub fn recommend(a: RecommendArgs, json: bool) -> CliResult {
    let index = SimilarityIndex::load(&a.index)?;
    let ratings = read_ratings(&a.ratings)?;
    let admitted: Option<BTreeSet<String>> = match (&a.curation.music, &a.curation.paintings) {
        (Some(m), Some(p)) => {
            let catalog = load(m, p, a.curation.lexicon.as_deref())?;
            let policy = match &a.curation.allowlist {
                Some(path) => CurationPolicy::with_allowlist_file(path)?,
                None => CurationPolicy::default(),
            };
            Some(
                policy
                    .curated_ids(&catalog, Modality::Painting)
                    .into_iter()
                    .collect(),
            )
        }
        _ => None,
    };
    let list = recommend_filtered(&index, &ratings, a.n, |p| {
        admitted.as_ref().is_none_or(|set| set.contains(p))
    })?;
    print_list(&list, json);
    Ok(())
}

fn full_ranking(index: &SimilarityIndex, ratings: &[PreferenceRating]) -> CliResult<Vec<String>> {
    let n = index.col_ids().len();
    let list = recommend_filtered(index, ratings, n, |_| true)?;
    Ok(list.entries.into_iter().map(|e| e.painting_id).collect())
}

pub fn overlap(a: OverlapArgs, json: bool) -> CliResult {
    let ia = SimilarityIndex::load(&a.a)?;
    let ib = SimilarityIndex::load(&a.b)?;
    let ratings = read_ratings(&a.ratings)?;
    let mut report = ranking_overlap(
        &full_ranking(&ia, &ratings)?,
        &full_ranking(&ib, &ratings)?,
        a.k,
    )?;
    report.config_a = format!("{}:{}", ia.engine(), a.a.display());
    report.config_b = format!("{}:{}", ib.engine(), a.b.display());
    emit(json, &report, || report.to_text());
    Ok(())
}

fn read_labels(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    let mut labels = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, label) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: "expected `id<TAB>label`".into(),
        })?;
        labels.insert(id.trim().to_string(), label.trim().to_string());
    }
    Ok(labels)
}

pub fn probe(a: ProbeArgs, json: bool) -> CliResult {
    let index = SimilarityIndex::load(&a.index)?;
    let labels = match (&a.labels, &a.music, &a.paintings) {
        (Some(path), _, _) => read_labels(path)?,
        (None, Some(m), Some(p)) => {
            let catalog = load(m, p, None)?;
            catalog
                .music()
                .iter()
                .chain(catalog.paintings())
                .filter_map(|r| {
                    r.metadata
                        .get(&a.label_key)
                        .map(|l| (r.id.clone(), l.clone()))
                })
                .collect()
        }
        _ => {
            return Err(CliError::Usage(
                "give --labels or --music/--paintings".into(),
            ))
        }
    };
    let report = retrieval_probe(&index, &labels)?;
    let shuffled = if a.null_seeds > 0 {
        Some(shuffled_null(&index, &labels, a.null_seeds)?)
    } else {
        None
    };
    let out = json!({ "probe": report, "null": shuffled });
    emit(json, &out, || {
        let mut t = report.to_text();
        if let Some(n) = &shuffled {
            t.push_str(&format!(
                "shuffled null over {} seeds: mean top1 {:.4} (se {:.4}, chance {:.4}, within 3 se: {})\n",
                n.seeds, n.mean_top1, n.standard_error, n.chance, n.within_three_se
            ));
        }
        t
    });
    Ok(())
}

pub fn export(c: ExportCommand) -> CliResult {
    match c {
        ExportCommand::Index { index, out } => {
            write_csv(&SimilarityIndex::load(&index)?, out.as_deref())
        }
        ExportCommand::Sessions { log, out } => {
            if !log.exists() {
                return Err(
                    Error::io(&log, std::io::Error::from(std::io::ErrorKind::NotFound)).into(),
                );
            }
            let events = read_events(&log)?;
            let sessions = replay(&events)?;
            let mut text = String::new();
            for session in sessions.values() {
                text.push_str(&serde_json::to_string(session).expect("sessions serialize"));
                text.push('\n');
            }
            match out {
                Some(p) => fs::write(&p, text).map_err(io(&p))?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}
