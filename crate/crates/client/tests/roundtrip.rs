use std::sync::Arc;

use affectrec_client::{Client, ClientError};
use affectrec_core::catalog::synth::synth_catalog;
use affectrec_core::catalog::{write_feature_file, Modality};
use affectrec_core::engine::{build_haydn_index, Engine};
use affectrec_core::session::{MoodPayload, MoodPhase, RatingInput, Reflection, SessionState};
use affectrec_service::{serve, AppState, ServiceConfig};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

struct Running {
    _dir: tempfile::TempDir,
    state: Arc<AppState>,
    client: Client,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

async fn start() -> Running {
    let dir = tempfile::tempdir().unwrap();
    let catalog = synth_catalog(9, 60, 60, 4, 5, 5);
    let music = dir.path().join("music.jsonl");
    let paintings = dir.path().join("paintings.jsonl");
    write_feature_file(catalog.records(Modality::Music), &music).unwrap();
    write_feature_file(catalog.records(Modality::Painting), &paintings).unwrap();
    build_haydn_index(&catalog)
        .unwrap()
        .save(&dir.path().join("haydn.afix"))
        .unwrap();
    let config = ServiceConfig {
        index_dir: dir.path().to_path_buf(),
        engines: vec![Engine::Haydn],
        music,
        paintings,
        lexicon: None,
        allowlist: None,
        log_path: dir.path().join("log").join("events.jsonl"),
        attention_music_asset: None,
        attention_painting_asset: None,
    };
    let state = Arc::new(AppState::load(config).unwrap());
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(serve(state.clone(), listener, async {
        let _ = rx.await;
    }));
    Running {
        _dir: dir,
        state,
        client: Client::new(format!("http://{addr}/")),
        stop: Some(tx),
        task,
    }
}

#[tokio::test]
async fn client_drives_a_full_session() {
    let mut run = start().await;
    let c = &run.client;
    assert_eq!(c.health().await.unwrap().engines, vec![Engine::Haydn]);

    let view = c.create_session(Engine::Haydn, Some(4)).await.unwrap();
    let id = view.session_id.clone();
    assert_eq!(view.state, SessionState::Created);
    let items = c.elicitation(&id).await.unwrap().items;
    assert_eq!(items.len(), 11);

    let hidden = run.state.snapshot(&id).unwrap().elicitation;
    let ratings = hidden
        .iter()
        .map(|i| RatingInput {
            item_id: i.item_id.clone(),
            rating: if i.attention_check { 1 } else { 5 },
        })
        .collect();
    let view = c.submit_ratings(&id, ratings).await.unwrap();
    assert_eq!(view.state, SessionState::Elicited);

    let recs = c.recommendations(&id, 3).await.unwrap();
    assert_eq!(recs.paintings.len(), 3);
    let shown = recs.paintings[0].painting_id.clone();
    c.reflections(
        &id,
        vec![Reflection {
            painting_id: shown,
            text: "quiet water".into(),
            aspects: Some("colour".into()),
        }],
    )
    .await
    .unwrap();
    c.mood(
        &id,
        MoodPhase::Post,
        MoodPayload {
            category: "relaxed".into(),
            panas: None,
        },
    )
    .await
    .unwrap();
    let done = c
        .feedback(
            &id,
            &json!({"accuracy": 5, "diversity": 4, "novelty": 3, "serendipity": 3, "immersion": 4, "engagement": 4}),
        )
        .await
        .unwrap();
    assert_eq!(done.state, SessionState::Completed);
    assert_eq!(c.session(&id).await.unwrap(), done);

    run.stop.take().unwrap().send(()).unwrap();
    run.task.await.unwrap().unwrap();
}

#[tokio::test]
async fn api_errors_carry_status_and_code() {
    let mut run = start().await;
    let c = &run.client;
    let err = c.session("nope").await.unwrap_err();
    assert_eq!(err.status().map(|s| s.as_u16()), Some(404));
    assert_eq!(err.code(), Some("not_found"));

    let err = c.create_session(Engine::Salieri, None).await.unwrap_err();
    assert_eq!(err.code(), Some("not_ready"));

    let id = c
        .create_session(Engine::Haydn, None)
        .await
        .unwrap()
        .session_id;
    let err = c
        .feedback(&id, &json!({"accuracy": 5, "vibes": 2}))
        .await
        .unwrap_err();
    assert_eq!(err.code(), Some("validation"));
    assert!(err.to_string().contains("vibes"), "{err}");

    run.stop.take().unwrap().send(()).unwrap();
    run.task.await.unwrap().unwrap();
}

#[tokio::test]
async fn unreachable_service_is_a_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = Client::new(format!("http://{addr}"))
        .health()
        .await
        .unwrap_err();
    assert!(matches!(err, ClientError::Transport { .. }), "{err}");
    assert_eq!(err.code(), None);
}
