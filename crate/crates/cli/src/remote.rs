use std::io::Write;
use std::sync::Arc;

use serde_json::{Map, Value};

use affectrec_client::Client;
use affectrec_core::engine::Engine;
use affectrec_core::session::{MoodPayload, RatingInput, Reflection, SessionView};
use affectrec_core::Error;
use affectrec_service::{shutdown_signal, AppState, ServiceConfig};

use crate::offline::read_ratings;
use crate::{emit, CliError, CliResult, EngineArg, ServeArgs, SessionArgs, SessionCommand};

fn runtime() -> CliResult<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start async runtime: {e}")))
}

pub fn serve(a: ServeArgs) -> CliResult {
    let config = ServiceConfig {
        index_dir: a.index_dir,
        engines: EngineArg::expand(&a.engine),
        music: a.music,
        paintings: a.paintings,
        lexicon: a.lexicon,
        allowlist: a.allowlist,
        log_path: a.log,
        attention_music_asset: a.attention_music_asset,
        attention_painting_asset: a.attention_painting_asset,
    };
    let app = Arc::new(AppState::load(config)?);
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.listen)
            .await
            .map_err(|e| Error::io(a.listen.to_string(), e))?;
        let addr = listener
            .local_addr()
            .map_err(|e| Error::io(a.listen.to_string(), e))?;
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
        affectrec_service::serve(app.clone(), listener, shutdown_signal())
            .await
            .map_err(|e| Error::io(app.log_path(), e))?;
        Ok(())
    })
}

fn one(engine: EngineArg) -> CliResult<Engine> {
    match EngineArg::expand(&[engine]).as_slice() {
        [e] => Ok(*e),
        _ => Err(CliError::Usage("pick a single engine".into())),
    }
}

fn view_text(v: &SessionView) -> String {
    let mut t = format!("session {} ({}): {:?}\n", v.session_id, v.engine, v.state);
    if let Some(a) = &v.attention {
        t.push_str(&format!("attention: {a:?}\n"));
    }
    if let Some(recs) = &v.recommendations {
        t.push_str(&format!("recommended: {}\n", recs.join(", ")));
    }
    t
}

fn parse_scores(pairs: &[String]) -> CliResult<Value> {
    let mut map = Map::new();
    for p in pairs {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--score expects METRIC=SCORE, got `{p}`")))?;
        let score: u64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("score `{v}` is not an integer")))?;
        map.insert(k.trim().to_string(), Value::from(score));
    }
    Ok(Value::Object(map))
}

pub fn session(a: SessionArgs, json: bool) -> CliResult {
    let client = Client::new(a.url);
    runtime()?.block_on(async move {
        match a.command {
            SessionCommand::Health => {
                let h = client.health().await?;
                emit(json, &h, || {
                    let engines: Vec<String> = h.engines.iter().map(|e| e.to_string()).collect();
                    format!(
                        "{} engines=[{}] sessions={}",
                        h.status,
                        engines.join(","),
                        h.sessions
                    )
                });
            }
            SessionCommand::Create { engine, seed } => {
                let v = client.create_session(one(engine)?, seed).await?;
                emit(json, &v, || view_text(&v));
            }
            SessionCommand::Show { id } => {
                let v = client.session(&id).await?;
                emit(json, &v, || view_text(&v));
            }
            SessionCommand::Items { id } => {
                let items = client.elicitation(&id).await?;
                emit(json, &items, || {
                    items
                        .items
                        .iter()
                        .map(|i| {
                            format!(
                                "{}\t{}\t{}\n",
                                i.item_id,
                                i.modality,
                                i.asset.as_deref().unwrap_or("-")
                            )
                        })
                        .collect()
                });
            }
            SessionCommand::Rate { id, ratings } => {
                let ratings = read_ratings(&ratings)?
                    .into_iter()
                    .map(|r| RatingInput {
                        item_id: r.item_id,
                        rating: r.rating,
                    })
                    .collect();
                let v = client.submit_ratings(&id, ratings).await?;
                emit(json, &v, || view_text(&v));
            }
            SessionCommand::Recommend { id, n } => {
                let recs = client.recommendations(&id, n).await?;
                emit(json, &recs, || {
                    recs.paintings
                        .iter()
                        .enumerate()
                        .map(|(k, p)| {
                            format!(
                                "{}\t{}\t{:.6}\n",
                                k + 1,
                                p.painting_id,
                                p.aggregate_distance
                            )
                        })
                        .collect()
                });
            }
            SessionCommand::Mood {
                id,
                phase,
                category,
                panas,
            } => {
                let v = client
                    .mood(&id, phase.into(), MoodPayload { category, panas })
                    .await?;
                emit(json, &v, || view_text(&v));
            }
            SessionCommand::Reflect {
                id,
                painting,
                text,
                aspects,
            } => {
                let r = Reflection {
                    painting_id: painting,
                    text,
                    aspects,
                };
                let v = client.reflections(&id, vec![r]).await?;
                emit(json, &v, || view_text(&v));
            }
            SessionCommand::Feedback { id, scores } => {
                let v = client.feedback(&id, &parse_scores(&scores)?).await?;
                emit(json, &v, || view_text(&v));
            }
        }
        Ok(())
    })
}
