mod support;

use axum::http::StatusCode;
use fmgc_core::fm::PHONE_MODEL;
use serde_json::{json, Value};
use support::{Client, Reply};

fn assert_error(r: &Reply, status: StatusCode, code: &str) {
    assert_eq!(r.status, status, "{}", r.text);
    assert_eq!(r.json["code"], code, "{}", r.text);
    assert!(r.json["message"].is_string());
}

async fn phone_session(c: &Client, members: &[&str]) -> String {
    let model = c.post_text("/api/models", PHONE_MODEL).await;
    assert_eq!(model.status, StatusCode::CREATED);
    let s = c.post("/api/sessions", json!({"model_id": model.json["id"], "members": members})).await;
    assert_eq!(s.status, StatusCode::CREATED, "{}", s.text);
    s.json["id"].as_str().unwrap().to_string()
}

async fn set(c: &Client, sid: &str, member: &str, feature: &str, value: &str, version: u64) -> Reply {
    c.put(
        &format!("/api/sessions/{sid}/members/{member}/preferences/{feature}"),
        json!({"value": value, "version": version}),
    )
    .await
}

fn version(r: &Reply) -> u64 {
    r.json["version"].as_u64().unwrap()
}

#[tokio::test]
async fn model_routes() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    let r = c.post_text("/api/models", PHONE_MODEL).await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert_eq!(r.json["feature_count"], 5);
    assert_eq!(r.json["id"], "m1");
    assert_eq!(r.json["version"], 1);
    assert_eq!(r.json["phase"], Value::Null);
    assert_eq!(r.json["constraints"][0], json!({"id": "c1", "expr": "(not (and Basic GPS))"}));

    let g = c.get("/api/models/m1").await;
    assert_eq!(g.status, StatusCode::OK);
    assert_eq!(g.text, r.text);

    let j = c.post("/api/models", json!({"text": "model m\nroot R\n"})).await;
    assert_eq!(j.status, StatusCode::CREATED);
    assert_eq!(j.json["id"], "m2");

    let bad = c.post_text("/api/models", "model m\nroot R\noptional R R\n").await;
    assert_error(&bad, StatusCode::UNPROCESSABLE_ENTITY, "parse_error");
    assert!(bad.json["message"].as_str().unwrap().contains("line 3"));
    assert_error(&c.post("/api/models", json!({"txt": 1})).await, StatusCode::BAD_REQUEST, "malformed_body");
    assert_error(&c.get("/api/models/m9").await, StatusCode::NOT_FOUND, "not_found");
    assert_error(&c.get("/api/nowhere").await, StatusCode::NOT_FOUND, "not_found");
    assert_error(&c.get("/api/sessions").await, StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed");
}

#[tokio::test]
async fn matrix_routes() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    let csv = "member,item,rating\na,c1,1\na,c2,2\nb,c1,2\nb,c2,1\n";
    let r = c.post_text("/api/matrices?kind=order", csv).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
    assert_eq!(r.json["kind"], "constraint_order");
    assert_eq!(r.json["ratings"], 4);
    assert_eq!(c.get("/api/matrices/x1").await.text, r.text);
    assert_error(&c.post_text("/api/matrices", csv).await, StatusCode::BAD_REQUEST, "malformed_body");
    assert_error(&c.post_text("/api/matrices?kind=weird", csv).await, StatusCode::BAD_REQUEST, "malformed_body");
    let dup = c.post_text("/api/matrices?kind=order", "member,item,rating\na,c1,1\na,c1,2\n").await;
    assert_error(&dup, StatusCode::UNPROCESSABLE_ENTITY, "invalid_interactions");
    let choice = c.post_text("/api/matrices?kind=choice", "member,item,rating\na,GPS,1\n").await;
    assert_eq!(choice.status, StatusCode::CREATED);

    let model = c.post_text("/api/models", PHONE_MODEL).await;
    let wrong = c
        .post("/api/sessions", json!({"model_id": model.json["id"], "members": ["a"], "matrix_ids": {"order": "x2"}}))
        .await;
    assert_error(&wrong, StatusCode::UNPROCESSABLE_ENTITY, "kind_mismatch");
    let ok = c
        .post(
            "/api/sessions",
            json!({"model_id": model.json["id"], "members": ["a"], "matrix_ids": {"order": "x1", "choice": "x2"}}),
        )
        .await;
    assert_eq!(ok.status, StatusCode::CREATED, "{}", ok.text);
    assert_eq!(ok.json["interaction_data"], json!({"order": true, "choice": true}));
    assert_eq!(ok.json["id"], "s1");
}

#[tokio::test]
async fn session_creation_errors_do_not_consume_ids() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    c.post_text("/api/models", PHONE_MODEL).await;
    assert_error(&c.post("/api/sessions", json!({"model_id": "m7", "members": ["a"]})).await, StatusCode::NOT_FOUND, "not_found");
    assert_error(&c.post("/api/sessions", json!({"model_id": "m1", "members": []})).await, StatusCode::UNPROCESSABLE_ENTITY, "no_members");
    assert_error(&c.post("/api/sessions", json!({"model_id": "m1", "members": ["a", "a"]})).await, StatusCode::UNPROCESSABLE_ENTITY, "duplicate_member");
    assert_error(&c.post("/api/sessions", json!({"model_id": "m1", "members": ["a b"]})).await, StatusCode::UNPROCESSABLE_ENTITY, "invalid_member");
    assert_error(&c.post_text("/api/sessions", "{").await, StatusCode::BAD_REQUEST, "malformed_body");
    let s = c.post("/api/sessions", json!({"model_id": "m1", "members": ["a"]})).await;
    assert_eq!(s.json["id"], "s1");
    assert_eq!(s.json["phase"], "elicitation");
    assert_eq!(s.json["version"], 1);
    assert_error(&c.get("/api/sessions/s2").await, StatusCode::NOT_FOUND, "not_found");
}

#[tokio::test]
async fn versions_advance_once_per_mutation() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    let sid = phone_session(&c, &["u1", "u2"]).await;
    assert_eq!(version(&set(&c, &sid, "u1", "GPS", "include", 1).await), 2);
    assert_eq!(version(&set(&c, &sid, "u2", "GPS", "include", 2).await), 3);
    let g = c.get(&format!("/api/sessions/{sid}")).await;
    assert_eq!(version(&g), 3);
    assert_eq!(g.json["preferences"]["u1"]["GPS"], json!({"value": "include", "provenance": "stated"}));
    assert_eq!(g.json["preferences"]["u1"]["HD"], Value::Null);
}

#[tokio::test]
async fn rejected_writes_leave_no_trace() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    let sid = phone_session(&c, &["u1", "u2"]).await;
    set(&c, &sid, "u1", "GPS", "include", 1).await;
    let uri = format!("/api/sessions/{sid}");
    let before = c.get(&uri).await.text;
    let file = std::fs::read(dir.path().join("sessions").join(format!("{sid}.json"))).unwrap();

    assert_error(&set(&c, &sid, "u1", "GPS", "exclude", 1).await, StatusCode::CONFLICT, "version_conflict");
    assert_error(&set(&c, &sid, "u1", "Wifi", "include", 2).await, StatusCode::UNPROCESSABLE_ENTITY, "unknown_feature");
    assert_error(&set(&c, &sid, "zed", "GPS", "include", 2).await, StatusCode::UNPROCESSABLE_ENTITY, "unknown_member");
    assert_error(&set(&c, &sid, "u1", "GPS", "maybe", 2).await, StatusCode::BAD_REQUEST, "malformed_body");
    let no_version = c.put(&format!("{uri}/members/u1/preferences/GPS"), json!({"value": "exclude"})).await;
    assert_error(&no_version, StatusCode::BAD_REQUEST, "malformed_body");
    assert_error(&c.post(&format!("{uri}/step"), json!({})).await, StatusCode::BAD_REQUEST, "malformed_body");
    assert_error(&c.post(&format!("{uri}/diagnoses/0/apply"), json!({"version": 2})).await, StatusCode::CONFLICT, "illegal_phase");
    assert_error(&c.post(&format!("{uri}/diagnoses/x/apply"), json!({"version": 2})).await, StatusCode::BAD_REQUEST, "malformed_body");
    assert_error(&c.get(&format!("{uri}/conflicts/GPS/patterns")).await, StatusCode::NOT_FOUND, "unknown_conflict");
    assert_error(&c.post(&format!("{uri}/proposals/p1/accept"), json!({"member": "u1", "version": 2})).await, StatusCode::NOT_FOUND, "unknown_proposal");

    assert_eq!(c.get(&uri).await.text, before);
    assert_eq!(std::fs::read(dir.path().join("sessions").join(format!("{sid}.json"))).unwrap(), file);
}

#[tokio::test]
async fn negotiation_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    let sid = phone_session(&c, &["u1", "u2"]).await;
    let uri = format!("/api/sessions/{sid}");
    set(&c, &sid, "u1", "Basic", "include", 1).await;
    let mut v = version(&set(&c, &sid, "u2", "Basic", "exclude", 2).await);
    for _ in 0..3 {
        let r = c.post(&format!("{uri}/step"), json!({"version": v})).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text);
        v = version(&r);
    }
    let conflicts = c.get(&format!("{uri}/conflicts")).await;
    assert_eq!(conflicts.json["phase"], "negotiation");
    assert_eq!(conflicts.json["conflicts"][0]["feature"], "Basic");
    assert_eq!(conflicts.json["conflicts"][0]["positions"], json!({"u1": "include", "u2": "exclude"}));

    let patterns = c.get(&format!("{uri}/conflicts/Basic/patterns")).await;
    assert_eq!(patterns.status, StatusCode::OK);
    let first = &patterns.json["patterns"][0];
    assert_eq!(first["kind"], "suggest_alternative");
    assert!(first["text"].as_str().unwrap().contains("could be an alternative"));
    assert_eq!(version(&patterns), v);

    let p = c
        .post(&format!("{uri}/conflicts/Basic/proposals"), json!({"member": "u2", "value": "exclude", "rationale": "HD", "version": v}))
        .await;
    assert_eq!(p.status, StatusCode::CREATED, "{}", p.text);
    assert_eq!(p.json["proposal_id"], "p1");
    v = version(&p);
    for m in ["u1", "u2"] {
        let r = c.post(&format!("{uri}/proposals/p1/accept"), json!({"member": m, "version": v})).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text);
        v = version(&r);
    }
    let again = c.post(&format!("{uri}/proposals/p1/accept"), json!({"member": "u1", "version": v})).await;
    assert_eq!(version(&again), v);
    let done = c.post(&format!("{uri}/step"), json!({"version": v})).await;
    assert_eq!(done.json["phase"], "complete");
    assert_eq!(done.json["group_decisions"]["Basic"], "exclude");
}

#[tokio::test]
async fn diagnosis_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    let sid = phone_session(&c, &["u1", "u2"]).await;
    let uri = format!("/api/sessions/{sid}");
    let mut v = 1;
    for (m, f) in [("u1", "Basic"), ("u2", "GPS")] {
        v = version(&set(&c, &sid, m, f, "include", v).await);
    }
    for _ in 0..3 {
        v = version(&c.post(&format!("{uri}/step"), json!({"version": v})).await);
    }
    let d = c.get(&format!("{uri}/diagnoses")).await;
    assert_eq!(d.json["phase"], "diagnosis");
    assert_eq!(d.json["complete"], true);
    assert_eq!(d.json["diagnoses"][0]["retract"], json!([{"feature": "Basic", "value": "include"}]));
    assert_eq!(d.json["diagnoses"][0]["group_score"], 1);
    assert_error(&set(&c, &sid, "u1", "HD", "include", v).await, StatusCode::CONFLICT, "illegal_phase");
    assert_error(&c.post(&format!("{uri}/diagnoses/5/apply"), json!({"version": v})).await, StatusCode::UNPROCESSABLE_ENTITY, "invalid_diagnosis_index");

    let applied = c.post(&format!("{uri}/diagnoses/0/apply"), json!({"version": v})).await;
    assert_eq!(applied.status, StatusCode::OK, "{}", applied.text);
    assert_eq!(applied.json["phase"], "aggregation");
    let d = c.get(&format!("{uri}/diagnoses")).await;
    assert_eq!(d.json["diagnoses"], json!([]));
    assert_eq!(d.json["complete"], Value::Null);
}

#[tokio::test]
async fn reconfigure_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    let sid = phone_session(&c, &["u1"]).await;
    let uri = format!("/api/sessions/{sid}");
    let mut v = 1;
    for f in ["HD", "GPS"] {
        v = version(&set(&c, &sid, "u1", f, "include", v).await);
    }
    let r = c
        .post(
            &format!("{uri}/reconfigure"),
            json!({"version": v, "changes": [
                {"type": "add_feature", "name": "Camera", "parent": "Phone", "relation": "optional"},
                {"type": "add_constraint", "expr": "(not (and HD GPS))"},
            ]}),
        )
        .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    assert_eq!(r.json["phase"], "diagnosis");
    assert!(r.json["model"].as_str().unwrap().contains("optional Phone Camera"));
    v = version(&r);
    let bad = c
        .post(&format!("{uri}/reconfigure"), json!({"version": v, "changes": [{"type": "add_constraint", "expr": "(and Zoom)"}]}))
        .await;
    assert_error(&bad, StatusCode::UNPROCESSABLE_ENTITY, "unknown_feature");
    let bad = c.post(&format!("{uri}/reconfigure"), json!({"version": v, "changes": [{"type": "rename"}]})).await;
    assert_error(&bad, StatusCode::BAD_REQUEST, "malformed_body");
    assert_eq!(version(&c.get(&uri).await), v);
}

#[tokio::test]
async fn next_constraint_and_visits() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::open(dir.path());
    let model = c
        .post_text(
            "/api/models",
            "model m\nroot R\noptional R A\noptional R B\noptional R C\n\
             constraint (implies A B)\nconstraint (implies B C)\nconstraint (or A B)\nconstraint (or A B C)\n",
        )
        .await;
    let csv = "member,item,rating\nh1,c1,1\nh1,c2,2\nh1,c3,3\nh1,c4,4\nh2,c1,1\nh2,c2,2\nh2,c3,4\nh2,c4,3\n";
    let m = c.post_text("/api/matrices?kind=order", csv).await;
    let s = c
        .post("/api/sessions", json!({"model_id": model.json["id"], "members": ["u"], "matrix_ids": {"order": m.json["id"]}}))
        .await;
    let uri = format!("/api/sessions/{}", s.json["id"].as_str().unwrap());

    let cold = c.get(&format!("{uri}/next-constraint")).await;
    assert_eq!(cold.json["recommendation"]["constraint"], "c4");
    assert_eq!(cold.json["recommendation"]["basis"], "cold_start");

    let mut v = 1;
    for cid in ["c1", "c2"] {
        let r = c.post(&format!("{uri}/members/u/visits/{cid}"), json!({"version": v})).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text);
        v = version(&r);
    }
    assert_eq!(v, 3);
    let rec = c.get(&format!("{uri}/next-constraint")).await;
    assert_eq!(rec.json["recommendation"]["constraint"], "c4");
    assert_eq!(rec.json["recommendation"]["group_score"], 2.5);
    assert_eq!(rec.json["recommendation"]["tie_break_used"], "importance");
    assert_eq!(rec.json["version"], 3);
    assert_error(&c.post(&format!("{uri}/members/u/visits/c9"), json!({"version": v})).await, StatusCode::UNPROCESSABLE_ENTITY, "unknown_constraint");
    assert_error(&c.post(&format!("{uri}/members/u/visits/zz"), json!({"version": v})).await, StatusCode::UNPROCESSABLE_ENTITY, "unknown_constraint");
}

#[tokio::test]
async fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (sid, before) = {
        let c = Client::open(dir.path());
        let sid = phone_session(&c, &["u1", "u2"]).await;
        let mut v = 1;
        for m in ["u1", "u2"] {
            for (f, val) in [("HD", "include"), ("GPS", "include")] {
                v = version(&set(&c, &sid, m, f, val, v).await);
            }
        }
        for _ in 0..3 {
            v = version(&c.post(&format!("/api/sessions/{sid}/step"), json!({"version": v})).await);
        }
        let g = c.get(&format!("/api/sessions/{sid}")).await;
        assert_eq!(g.json["phase"], "complete");
        (sid, g.text)
    };
    let c = Client::open(dir.path());
    assert_eq!(c.get(&format!("/api/sessions/{sid}")).await.text, before);
    // Id allocation resumes after the stored documents.
    let m = c.post_text("/api/models", PHONE_MODEL).await;
    assert_eq!(m.json["id"], "m2");
}

#[tokio::test]
async fn concurrent_writers_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let c = std::sync::Arc::new(Client::open(dir.path()));
    let sid = phone_session(&c, &["u1", "u2"]).await;
    let mut tasks = Vec::new();
    for (m, f) in [("u1", "GPS"), ("u2", "HD"), ("u1", "HD"), ("u2", "GPS")] {
        let c = c.clone();
        let sid = sid.clone();
        tasks.push(tokio::spawn(async move { set(&c, &sid, m, f, "include", 1).await.status }));
    }
    let mut statuses = Vec::new();
    for t in tasks {
        statuses.push(t.await.unwrap());
    }
    assert_eq!(statuses.iter().filter(|s| **s == StatusCode::OK).count(), 1);
    assert_eq!(statuses.iter().filter(|s| **s == StatusCode::CONFLICT).count(), 3);
    assert_eq!(version(&c.get(&format!("/api/sessions/{sid}")).await), 2);
}
