use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use phaseforge_core::consensus::{and_merge, apply_resolutions, pairwise_agreement, ResolutionLedger};
use phaseforge_core::evaluation::{eval_report, PredictionLog};
use phaseforge_core::formats::{
    parse_track_csv, write_manifest_json, write_prediction_csv, write_track_csv, CaseManifest,
};
use phaseforge_core::label::{validate_track, FrameTrack, PhaseId, PhaseTaxonomy};
use phaseforge_core::store::ProjectStore;
use phaseforge_service::session::{QueueView, Session};
use phaseforge_service::{router, AppState, StaticTokens};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

struct Harness {
    _dir: TempDir,
    store: ProjectStore,
    app: Router,
}

impl Harness {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let store = ProjectStore::open(dir.path()).unwrap();
        let app = router(AppState::new(store.clone()));
        Self { _dir: dir, store, app }
    }

    async fn call(&self, method: Method, uri: &str, body: Body, content_type: &str) -> (StatusCode, Vec<u8>) {
        call(&self.app, method, uri, body, content_type, None).await
    }

    async fn json(&self, method: Method, uri: &str, body: Value) -> (StatusCode, Value) {
        let (status, bytes) = self.call(method, uri, Body::from(body.to_string()), "application/json").await;
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    async fn get(&self, uri: &str) -> (StatusCode, Vec<u8>) {
        self.call(Method::GET, uri, Body::empty(), "text/plain").await
    }

    async fn put_csv(&self, uri: &str, csv: String) -> (StatusCode, Value) {
        let (status, bytes) = self.call(Method::PUT, uri, Body::from(csv), "text/csv").await;
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    /// Project `p` with case `c` whose tracks disagree exactly on `blank`.
    async fn seeded_case(&self, c: &str, frames: usize, blanks: &[(usize, usize)]) -> Vec<FrameTrack> {
        let _ = self
            .json(Method::POST, "/api/projects", json!({ "project_id": "p", "taxonomy": "cholec" }))
            .await;
        let manifest = write_manifest_json(&CaseManifest::new(c, frames));
        let (s, _) =
            self.call(Method::POST, "/api/projects/p/cases", Body::from(manifest), "application/json").await;
        assert_eq!(s, StatusCode::CREATED);
        let base: Vec<PhaseId> = (0..frames).map(|k| (k * 7 / frames) as PhaseId).collect();
        let mut other = base.clone();
        for &(a, b) in blanks {
            for k in a..=b {
                other[k] = (base[k] + 1) % 7;
            }
        }
        let tracks = vec![
            FrameTrack::from_phases(c, "ann1", &base).unwrap(),
            FrameTrack::from_phases(c, "ann2", &other).unwrap(),
        ];
        for t in &tracks {
            let (s, _) = self
                .put_csv(&format!("/api/projects/p/cases/{c}/tracks/{}", t.annotator_id), write_track_csv(t))
                .await;
            assert_eq!(s, StatusCode::OK);
        }
        let (s, _) =
            self.json(Method::POST, &format!("/api/projects/p/cases/{c}/consensus"), json!({})).await;
        assert_eq!(s, StatusCode::OK);
        tracks
    }

    async fn resolve(
        &self,
        c: &str,
        id: &str,
        start: usize,
        end: usize,
        label: PhaseId,
    ) -> (StatusCode, Value) {
        let body = json!({
            "submission_id": id, "start_frame": start, "end_frame": end, "label": label, "inspector_id": "insp"
        });
        self.json(Method::POST, &format!("/api/projects/p/cases/{c}/resolutions"), body).await
    }

    async fn pending(&self, c: &str) -> Vec<(usize, usize)> {
        let (s, body) = self.get(&format!("/api/projects/p/cases/{c}/blanks")).await;
        assert_eq!(s, StatusCode::OK);
        let view: QueueView = serde_json::from_slice(&body).unwrap();
        view.pending.iter().map(|b| (b.start_frame, b.end_frame)).collect()
    }
}

async fn call(
    app: &Router,
    method: Method,
    uri: &str,
    body: Body,
    content_type: &str,
    token: Option<&str>,
) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri).header(header::CONTENT_TYPE, content_type);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

#[tokio::test]
async fn partial_resolution_splits_the_pending_segment() {
    let h = Harness::new();
    h.seeded_case("c1", 300, &[(100, 150)]).await;
    assert_eq!(h.pending("c1").await, vec![(100, 150)]);
    let (s, view) = h.resolve("c1", "s1", 100, 120, 2).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(view["pending"][0]["start_frame"], 121);
    assert_eq!(h.pending("c1").await, vec![(121, 150)]);
    let (s, _) = h.resolve("c1", "s2", 121, 150, 5).await;
    assert_eq!(s, StatusCode::OK);
    assert!(h.pending("c1").await.is_empty());
}

#[tokio::test]
async fn rejected_submissions() {
    let h = Harness::new();
    h.seeded_case("c1", 300, &[(100, 150)]).await;
    // touches agreed frame 99
    assert_eq!(h.resolve("c1", "a", 99, 120, 1).await.0, StatusCode::CONFLICT);
    assert_eq!(h.resolve("c1", "b", 100, 120, 42).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(h.resolve("c1", "c", 100, 120, 1).await.0, StatusCode::OK);
    assert_eq!(h.resolve("c1", "d", 110, 130, 1).await.0, StatusCode::CONFLICT);
    // same id, different content
    assert_eq!(h.resolve("c1", "c", 121, 130, 1).await.0, StatusCode::CONFLICT);
    assert_eq!(h.resolve("nope", "e", 100, 120, 1).await.0, StatusCode::NOT_FOUND);
    assert_eq!(h.store.events("p", "c1").unwrap().len(), 1);
}

#[tokio::test]
async fn retries_are_idempotent() {
    let h = Harness::new();
    h.seeded_case("c1", 300, &[(100, 150), (200, 210)]).await;
    let first = h.resolve("c1", "s1", 100, 150, 3).await;
    let again = h.resolve("c1", "s1", 100, 150, 3).await;
    assert_eq!(first, again);
    assert_eq!(h.store.events("p", "c1").unwrap().len(), 1);

    // re-running consensus on unchanged tracks keeps the draft and its resolutions
    let (_, summary) = h.json(Method::POST, "/api/projects/p/cases/c1/consensus", json!({})).await;
    assert_eq!(summary["created"], false);
    assert_eq!(summary["draft_version"], 1);
    assert_eq!(h.pending("c1").await, vec![(200, 210)]);
}

#[tokio::test]
async fn export_requires_every_blank_resolved() {
    let h = Harness::new();
    let tracks = h.seeded_case("c1", 300, &[(100, 150)]).await;
    let (s, body) = h.get("/api/projects/p/cases/c1/export").await;
    assert_eq!(s, StatusCode::CONFLICT);
    let err: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(err["detail"]["remaining"], json!([{ "start_frame": 100, "end_frame": 150 }]));
    assert_eq!(err["detail"]["remaining_frames"], 51);

    assert_eq!(h.get("/api/projects/p/cases/zz/export").await.0, StatusCode::NOT_FOUND);

    h.resolve("c1", "s1", 100, 150, 4).await;
    let (s, body) = h.get("/api/projects/p/cases/c1/export").await;
    assert_eq!(s, StatusCode::OK);
    let exported = parse_track_csv(&body).unwrap();
    assert!(validate_track(&exported, &PhaseTaxonomy::cholecystectomy()).issues.is_empty());

    let (_, stored) = h.store.draft("p", "c1").unwrap();
    let ledger = Session::new(1, stored, h.store.events("p", "c1").unwrap()).ledger();
    let expected = apply_resolutions(&and_merge(&tracks).unwrap(), &ledger).unwrap();
    assert_eq!(exported.labels(), expected.track.labels());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_conflicting_submissions() {
    let h = Harness::new();
    let cases: Vec<String> = (0..12).map(|i| format!("c{i}")).collect();
    for c in &cases {
        h.seeded_case(c, 200, &[(50, 90)]).await;
    }
    for c in &cases {
        let mut handles = Vec::new();
        for (id, start, end) in [("left", 50, 80), ("right", 60, 90)] {
            let app = h.app.clone();
            let uri = format!("/api/projects/p/cases/{c}/resolutions");
            let body = json!({
                "submission_id": id, "start_frame": start, "end_frame": end, "label": 1, "inspector_id": id
            });
            handles.push(tokio::spawn(async move {
                call(&app, Method::POST, &uri, Body::from(body.to_string()), "application/json", None).await.0
            }));
        }
        let mut statuses = Vec::new();
        for handle in handles {
            statuses.push(handle.await.unwrap());
        }
        statuses.sort();
        assert_eq!(statuses, vec![StatusCode::OK, StatusCode::CONFLICT], "case {c}");
        assert_eq!(h.store.events("p", c).unwrap().len(), 1);
    }
}

#[tokio::test]
async fn randomized_sequences_replay_to_the_core_result() {
    let h = Harness::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = format!("r{seed}");
        let frames = rng.gen_range(50..400);
        let mut blanks = Vec::new();
        let mut k = rng.gen_range(0..10);
        while k + 2 < frames {
            let end = (k + rng.gen_range(0..20)).min(frames - 1);
            blanks.push((k, end));
            k = end + rng.gen_range(2..40);
        }
        let tracks = h.seeded_case(&case, frames, &blanks).await;
        let draft = and_merge(&tracks).unwrap();

        // cut every blank segment into random pieces
        let mut pieces = Vec::new();
        for &(a, b) in &blanks {
            let mut s = a;
            while s <= b {
                let e = (s + rng.gen_range(0..8)).min(b);
                pieces.push((s, e, rng.gen_range(0..7) as PhaseId));
                s = e + 1;
            }
        }
        pieces.shuffle(&mut rng);

        let mut accepted = Vec::new();
        for (i, &(s, e, label)) in pieces.iter().enumerate() {
            let id = format!("sub{i}");
            if rng.gen_bool(0.2) {
                // straddles into an agreed or already-resolved frame
                let bad_end = (e + 1).min(frames - 1);
                let status = h.resolve(&case, &format!("bad{i}"), s, bad_end, label).await.0;
                let ok_range = draft.merged().labels()[s..=bad_end].iter().all(|l| l.is_blank())
                    && !accepted.iter().any(|&(a, b, _)| a <= bad_end && s <= b);
                if status == StatusCode::OK {
                    assert!(ok_range);
                    accepted.push((s, bad_end, label));
                    continue;
                }
                assert_eq!(status, StatusCode::CONFLICT);
            }
            let status = h.resolve(&case, &id, s, e, label).await.0;
            if accepted.iter().any(|&(a, b, _)| a <= e && s <= b) {
                assert_eq!(status, StatusCode::CONFLICT);
                continue;
            }
            assert_eq!(status, StatusCode::OK);
            if rng.gen_bool(0.3) {
                assert_eq!(h.resolve(&case, &id, s, e, label).await.0, StatusCode::OK);
            }
            accepted.push((s, e, label));
        }

        // the test's own ledger, built from what the API acknowledged
        let events = h.store.events("p", &case).unwrap();
        assert_eq!(events.len(), accepted.len());
        let ledger = ResolutionLedger::new(events.iter().map(|e| e.entry.clone()).collect());
        for (&(s, e, label), event) in accepted.iter().zip(&events) {
            assert_eq!(
                (event.entry.start_frame, event.entry.end_frame, event.entry.assigned_label),
                (s, e, label)
            );
        }
        let expected = apply_resolutions(&draft, &ledger).unwrap();

        let (_, stored) = h.store.draft("p", &case).unwrap();
        let replayed = Session::new(1, stored, events).resolved().unwrap();
        assert_eq!(replayed, expected);

        let (status, body) = h.get(&format!("/api/projects/p/cases/{case}/export")).await;
        if expected.complete {
            assert_eq!(status, StatusCode::OK);
            assert_eq!(parse_track_csv(&body).unwrap().labels(), expected.track.labels());
        } else {
            assert_eq!(status, StatusCode::CONFLICT);
        }
        for k in 0..frames {
            if draft.is_agreed(k) {
                assert_eq!(expected.track.labels()[k], draft.merged().labels()[k]);
            }
        }
    }
}

#[tokio::test]
async fn stats_match_the_core_computation() {
    let h = Harness::new();
    let tracks = h.seeded_case("c1", 300, &[(100, 150)]).await;
    let (s, body) = h.get("/api/projects/p/cases/c1/stats?max_distance=30").await;
    assert_eq!(s, StatusCode::OK);
    let stats: Value = serde_json::from_slice(&body).unwrap();
    let core = pairwise_agreement(&tracks).unwrap();
    assert_eq!(stats["agreement"], serde_json::to_value(&core).unwrap());
    assert_eq!(stats["reference"], "ann1");
    assert_eq!(stats["boundary_profile"]["bins"].as_array().unwrap().len(), 31);
    let disagreeing: u64 = stats["boundary_profile"]["bins"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["disagreeing_frames"].as_u64().unwrap())
        .sum();
    assert_eq!(disagreeing, 51);
    assert_eq!(h.get("/api/projects/p/cases/c1/stats?reference=ghost").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn track_upload_validation() {
    let h = Harness::new();
    h.seeded_case("c1", 10, &[]).await;
    let uri = "/api/projects/p/cases/c1/tracks/ann3";
    assert_eq!(h.put_csv(uri, "frame,label\n0,0".into()).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(h.put_csv(uri, "frame,phase\n0,0\n2,0".into()).await.0, StatusCode::BAD_REQUEST);
    let short = write_track_csv(&FrameTrack::from_phases("c1", "ann3", &[0; 9]).unwrap());
    let (s, body) = h.put_csv(uri, short).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["detail"]["issues"][0]["code"], "length_mismatch");
    let unknown = write_track_csv(&FrameTrack::from_phases("c1", "ann3", &[9; 10]).unwrap());
    assert_eq!(h.put_csv(uri, unknown).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let blank =
        format!("frame,phase\n{}", (0..10).map(|k| format!("{k},BLANK")).collect::<Vec<_>>().join("\n"));
    assert_eq!(h.put_csv(uri, blank).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let good = write_track_csv(&FrameTrack::from_phases("c1", "x", &[1; 10]).unwrap());
    assert_eq!(
        h.put_csv("/api/projects/p/cases/c1/tracks/consensus", good.clone()).await.0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(
        h.put_csv("/api/projects/p/cases/nope/tracks/ann3", good.clone()).await.0,
        StatusCode::NOT_FOUND
    );
    let (s, body) = h.put_csv(uri, good).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["frame_count"], 10);
    assert_eq!(h.store.track("p", "c1", "ann3").unwrap().annotator_id, "ann3");
}

#[tokio::test]
async fn project_and_case_endpoints() {
    let h = Harness::new();
    let (s, info) =
        h.json(Method::POST, "/api/projects", json!({ "project_id": "g", "taxonomy": "gastrectomy" })).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(info["taxonomy"]["phases"].as_array().unwrap().len(), 27);
    let (s, _) =
        h.json(Method::POST, "/api/projects", json!({ "project_id": "g", "taxonomy": "cholec" })).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) =
        h.json(Method::POST, "/api/projects", json!({ "project_id": "h", "taxonomy": "hernia" })).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let custom = serde_json::to_value(PhaseTaxonomy::numbered(3).unwrap()).unwrap();
    let (s, _) =
        h.json(Method::POST, "/api/projects", json!({ "project_id": "n3", "taxonomy": custom })).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, _) =
        h.json(Method::POST, "/api/projects", json!({ "project_id": "../x", "taxonomy": "cholec" })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (_, list) = h.get("/api/projects").await;
    assert_eq!(serde_json::from_slice::<Vec<String>>(&list).unwrap(), vec!["g", "n3"]);

    let bad = h.call(Method::POST, "/api/projects/g/cases", Body::from("{"), "application/json").await;
    assert_eq!(bad.0, StatusCode::BAD_REQUEST);
    let missing = write_manifest_json(&CaseManifest::new("c", 5));
    assert_eq!(
        h.call(Method::POST, "/api/projects/zz/cases", Body::from(missing.clone()), "").await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        h.call(Method::POST, "/api/projects/g/cases", Body::from(missing), "").await.0,
        StatusCode::CREATED
    );
    let (s, case) = h.get("/api/projects/g/cases/c").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&case).unwrap()["manifest"]["frame_count"], 5);
    assert_eq!(h.get("/api/projects/g/cases/c/blanks").await.0, StatusCode::CONFLICT);
    assert_eq!(
        h.json(Method::POST, "/api/projects/g/cases/c/consensus", json!({})).await.0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
}

#[tokio::test]
async fn evaluate_against_annotator_and_consensus() {
    let h = Harness::new();
    let tracks = h.seeded_case("c1", 70, &[(20, 29)]).await;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..70)
        .map(|_| {
            let raw: Vec<f64> = (0..7).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|x| x / total).collect()
        })
        .collect();
    let log = PredictionLog::new("c1", 7, 0, rows).unwrap();
    let body = json!({ "case_id": "c1", "predictions": write_prediction_csv(&log), "reference": "ann1", "model": "m1" });
    let (s, report) = h.json(Method::POST, "/api/projects/p/evaluate", body.clone()).await;
    assert_eq!(s, StatusCode::OK);
    let expected = eval_report(&log, &tracks[0], &PhaseTaxonomy::cholecystectomy()).unwrap();
    assert_eq!(report, serde_json::to_value(&expected).unwrap());
    assert!(h.store.report::<Value>("p", "eval.c1.m1.ann1").is_ok());

    let mut con = body.clone();
    con["reference"] = json!("consensus");
    assert_eq!(h.json(Method::POST, "/api/projects/p/evaluate", con.clone()).await.0, StatusCode::CONFLICT);
    h.resolve("c1", "s", 20, 29, 0).await;
    assert_eq!(h.json(Method::POST, "/api/projects/p/evaluate", con).await.0, StatusCode::OK);

    let mut wrong = body;
    wrong["predictions"] = json!("frame,c0,c1\n0,0.5,0.5");
    assert_eq!(h.json(Method::POST, "/api/projects/p/evaluate", wrong).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn bearer_tokens_gate_the_api() {
    let dir = TempDir::new().unwrap();
    let store = ProjectStore::open(dir.path()).unwrap();
    let app = router(AppState::with_auth(store, Arc::new(StaticTokens::new(["secret"]))));
    let list = |token| call(&app, Method::GET, "/api/projects", Body::empty(), "", token);
    assert_eq!(list(None).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(list(Some("guess")).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(list(Some("secret")).await.0, StatusCode::OK);
    assert_eq!(call(&app, Method::GET, "/api/spec", Body::empty(), "", None).await.0, StatusCode::OK);
}

#[tokio::test]
async fn spec_lists_every_endpoint_and_index_is_served() {
    let h = Harness::new();
    let (s, body) = h.get("/api/spec").await;
    assert_eq!(s, StatusCode::OK);
    let spec: Value = serde_json::from_slice(&body).unwrap();
    let paths = spec["paths"].as_object().unwrap();
    for (path, method) in [
        ("/api/projects", "post"),
        ("/api/projects/{p}/cases", "post"),
        ("/api/projects/{p}/cases/{c}/tracks/{annotator}", "put"),
        ("/api/projects/{p}/cases/{c}/consensus", "post"),
        ("/api/projects/{p}/cases/{c}/blanks", "get"),
        ("/api/projects/{p}/cases/{c}/resolutions", "post"),
        ("/api/projects/{p}/cases/{c}/stats", "get"),
        ("/api/projects/{p}/cases/{c}/export", "get"),
        ("/api/projects/{p}/evaluate", "post"),
    ] {
        assert!(paths[path].get(method).is_some(), "{method} {path}");
    }
    let (s, html) = h.get("/").await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(html).unwrap().contains("/api/spec"));
}

#[tokio::test]
async fn serves_over_tcp() {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let dir = TempDir::new().unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let state = AppState::new(ProjectStore::open(dir.path()).unwrap());
    tokio::spawn(phaseforge_service::serve(listener, state));
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    stream.write_all(b"GET /api/projects HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).await.unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.ends_with("[]"));
}
