use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use casealot_cli::{router, AppState};
use casealot_core::auditlog::{actions, AuditLog, SteppingClock};
use casealot_core::corpus::{generate, Corpus, CorpusConfig};
use casealot_core::{default_rules, Platform, PlatformConfig, Scheduler};
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn corpus(n: usize) -> Corpus {
    generate(&CorpusConfig {
        n_lawsuits: n,
        rule_mix: [0.05, 0.1, 0.05],
        seed: 13,
        ..Default::default()
    })
    .unwrap()
}

fn platform(c: &Corpus) -> Platform {
    let clock = Arc::new(SteppingClock::new(
        Utc.with_ymd_and_hms(2016, 6, 24, 10, 57, 25).unwrap(),
        1,
    ));
    Platform::new(
        c.court.clone(),
        default_rules(),
        AuditLog::in_memory(clock),
        PlatformConfig::default(),
    )
    .unwrap()
}

/// A gateway over a platform that already distributed `c`.
fn seeded(c: &Corpus) -> (Router, Vec<String>) {
    let mut p = platform(c);
    for r in &c.records {
        p.submit(r.lawsuit.clone()).unwrap();
    }
    p.run(Scheduler::Deterministic).unwrap();
    let ids = p
        .outcomes()
        .iter()
        .map(|o| o.distribution_id.clone())
        .collect();
    (router(AppState::new(p, Scheduler::Deterministic)), ids)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

fn encode(case: &str) -> String {
    case.replace('.', "%2E")
}

#[tokio::test]
async fn lawsuit_view_carries_assignment_and_justification() {
    let c = corpus(30);
    let (app, _) = seeded(&c);
    let case = c.records[3].lawsuit.case_number.to_string();
    let (status, v) = call(&app, "GET", &format!("/lawsuits/{}", encode(&case)), None).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["case_number"], case);
    assert_eq!(v["procedural_class"], c.records[3].lawsuit.procedural_class);
    assert!(v["parties"].as_array().is_some());
    assert_eq!(v["body"], v["distribution"]["body"]);
    assert_eq!(v["magistrate"], v["distribution"]["magistrate"]);
    assert!(v["distribution"]["justification"]["impeded"].is_array());
    assert!(v["distribution"]["distribution_id"]
        .as_str()
        .unwrap()
        .starts_with("DA01-"));

    let (status, v) = call(&app, "GET", "/lawsuits/9999-99.2099.5.99.999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "unknown_case");
    let (status, v) = call(&app, "GET", "/lawsuits/not-a-case", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "malformed_case_number");
}

#[tokio::test]
async fn distribution_equals_logged_outcome() {
    let c = corpus(10);
    let mut p = platform(&c);
    for r in &c.records {
        p.submit(r.lawsuit.clone()).unwrap();
    }
    p.run(Scheduler::Deterministic).unwrap();
    let logged: Vec<(String, Value)> = {
        let log = p.audit();
        log.records()
            .map(Result::unwrap)
            .filter(|r| r.action == actions::RECORD_OUTCOME)
            .map(|r| (r.distribution_id.unwrap(), r.payload))
            .collect()
    };
    let app = router(AppState::new(p, Scheduler::Deterministic));
    for (id, payload) in logged {
        let (status, v) = call(&app, "GET", &format!("/distributions/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(v, payload);
    }
    let (status, v) = call(&app, "GET", "/distributions/DA01-999999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "unknown_distribution");
}

#[tokio::test]
async fn trace_pages_without_gaps() {
    let c = corpus(3);
    let (app, ids) = seeded(&c);
    let id = &ids[0];
    let (_, first) = call(&app, "GET", &format!("/distributions/{id}/trace"), None).await;
    let total = first["total"].as_u64().unwrap() as usize;
    assert!(total >= 84);
    assert_eq!(first["limit"], 200);
    assert_eq!(first["rows"].as_array().unwrap().len(), total.min(200));
    let row = &first["rows"][0];
    assert_eq!(row["date"], "2016-06-24");
    assert!(row["time"].as_str().unwrap().starts_with("10:57:"));
    assert_eq!(row["agent"], "DA01");
    assert_eq!(row["action"], "start-distribution");

    let mut seqs = Vec::new();
    let mut offset = 0;
    loop {
        let (status, page) = call(
            &app,
            "GET",
            &format!("/distributions/{id}/trace?offset={offset}&limit=25"),
            None,
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        let rows = page["rows"].as_array().unwrap();
        if rows.is_empty() {
            break;
        }
        seqs.extend(rows.iter().map(|r| r["seq"].as_u64().unwrap()));
        offset += rows.len();
    }
    assert_eq!(seqs.len(), total);
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1));

    let (status, v) = call(
        &app,
        "GET",
        &format!("/distributions/{id}/trace?limit=0"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "invalid_limit");
    let (status, _) = call(
        &app,
        "GET",
        &format!("/distributions/{id}/trace?limit=abc"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn empty_platform_reports_four_zero_rows() {
    let c = corpus(0);
    let app = router(AppState::new(platform(&c), Scheduler::Deterministic));
    let (status, v) = call(&app, "GET", "/stats/rules", None).await;
    assert_eq!(status, StatusCode::OK);
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r["rule_number"], i + 1);
        assert_eq!(r["count"], 0);
    }
    let (_, t) = call(&app, "GET", "/stats/throughput", None).await;
    assert_eq!(t["running"], false);
    assert_eq!(t["distributed"], 0);
    let (_, agents) = call(&app, "GET", "/agents", None).await;
    assert_eq!(agents.as_array().unwrap().len(), 55);
}

#[tokio::test]
async fn suspended_magistrate_leaves_later_justifications() {
    let c = corpus(20);
    let app = router(AppState::new(platform(&c), Scheduler::Deterministic));
    let (status, v) = call(
        &app,
        "POST",
        "/agents/MKA/lifecycle",
        Some(json!({"state": "suspended"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["from"], "active");
    let inline: Vec<Value> = c
        .records
        .iter()
        .map(|r| serde_json::to_value(r).unwrap())
        .collect();
    let (status, v) = call(
        &app,
        "POST",
        "/distributions/run",
        Some(json!({"corpus": inline, "wait": true})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["report"]["distributed"], 20);
    for r in &c.records {
        let case = encode(&r.lawsuit.case_number.to_string());
        let (_, view) = call(&app, "GET", &format!("/lawsuits/{case}"), None).await;
        assert_ne!(view["magistrate"], "MKA");
        let members = view["distribution"]["justification"]["eligible_members"].to_string();
        assert!(!members.contains("\"MKA\""));
    }
    let (_, agents) = call(&app, "GET", "/agents", None).await;
    let mka = agents
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["label"] == "MKA")
        .unwrap();
    assert_eq!(mka["state"], "suspended");

    let (status, v) = call(
        &app,
        "POST",
        "/agents/NOBODY/lifecycle",
        Some(json!({"state": "active"})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "unknown_agent");
    let (status, v) = call(
        &app,
        "POST",
        "/agents/MKA/lifecycle",
        Some(json!({"state": "asleep"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "invalid_body");
}

#[tokio::test]
async fn async_run_reports_progress_then_settles() {
    let c = corpus(40);
    let app = router(AppState::new(platform(&c), Scheduler::Deterministic));
    let dir = tempfile::tempdir().unwrap();
    casealot_core::corpus::export(&c, dir.path()).unwrap();
    let path = dir.path().join("corpus.jsonl");
    let (status, v) = call(
        &app,
        "POST",
        "/distributions/run",
        Some(json!({"corpus": path})),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    assert_eq!(v["submitted"], 40);
    let mut polls = 0;
    loop {
        let (_, t) = call(&app, "GET", "/stats/throughput", None).await;
        if t["running"] == false && t["distributed"] == 40 {
            assert_eq!(t["last_run"]["distributed"], 40);
            break;
        }
        polls += 1;
        assert!(polls < 600, "run never settled: {t}");
        tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    }
    let (_, stats) = call(&app, "GET", "/stats/rules", None).await;
    let total: u64 = stats
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["count"].as_u64().unwrap())
        .sum();
    assert_eq!(total, 40);

    let (status, v) = call(
        &app,
        "POST",
        "/distributions/run",
        Some(json!({"corpus": path, "wait": true})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "duplicate_lawsuit");
    let (status, v) = call(
        &app,
        "POST",
        "/distributions/run",
        Some(json!({"corpus": "/nonexistent.jsonl"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "corpus_unreadable");
}

#[tokio::test]
async fn redistribution_links_predecessor() {
    let c = corpus(5);
    let (app, ids) = seeded(&c);
    let case = c.records[0].lawsuit.case_number.to_string();
    let path = format!("/lawsuits/{}/redistribute", encode(&case));
    let (status, v) = call(
        &app,
        "POST",
        &path,
        Some(json!({"reason": "rapporteur on leave"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let new_id = v["distribution_id"].as_str().unwrap().to_owned();
    let old_id = v["justification"]["supersedes"]
        .as_str()
        .unwrap()
        .to_owned();
    assert!(ids.contains(&old_id));
    assert_eq!(
        v["justification"]["redistribution_reason"],
        "rapporteur on leave"
    );

    let (_, trace) = call(&app, "GET", &format!("/distributions/{new_id}/trace"), None).await;
    assert_eq!(trace["predecessor"], old_id);
    let (_, history) = call(
        &app,
        "GET",
        &format!("/lawsuits/{}/distributions", encode(&case)),
        None,
    )
    .await;
    assert_eq!(history.as_array().unwrap().len(), 2);

    let (status, v) = call(&app, "POST", &path, Some(json!({"reason": " "}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "missing_reason");
    let (status, v) = call(
        &app,
        "POST",
        "/lawsuits/9999-99.2099.5.99.999/redistribute",
        Some(json!({"reason": "x"})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "redistribution_of_unknown_case");
}

#[tokio::test]
async fn registered_impediment_bars_the_magistrate() {
    let c = corpus(1);
    let app = router(AppState::new(platform(&c), Scheduler::Deterministic));
    let lawsuit = &c.records[0].lawsuit;
    let case = lawsuit.case_number.to_string();
    let all: Vec<String> = c
        .court
        .magistrates
        .iter()
        .map(|m| m.id.to_string())
        .collect();
    for m in &all[..26] {
        let body = json!({"kind": "case", "target": case, "reason": "participated in the decision under appeal"});
        let (status, v) = call(
            &app,
            "POST",
            &format!("/agents/{m}/impediments"),
            Some(body),
        )
        .await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
    }
    let (status, _) = call(
        &app,
        "POST",
        "/distributions/run",
        Some(json!({"corpus": [lawsuit], "wait": true})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (_, view) = call(&app, "GET", &format!("/lawsuits/{}", encode(&case)), None).await;
    assert_eq!(view["magistrate"], all[26]);
    assert_eq!(
        view["distribution"]["justification"]["impeded"]
            .as_array()
            .unwrap()
            .len(),
        26
    );

    let (status, v) = call(
        &app,
        "POST",
        "/agents/PA00/impediments",
        Some(json!({"kind": "party", "target": "P1", "reason": "x"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "not_a_magistrate");
}

#[tokio::test]
async fn unknown_route_is_a_json_404() {
    let app = router(AppState::new(
        platform(&corpus(0)),
        Scheduler::Deterministic,
    ));
    let (status, v) = call(&app, "GET", "/nowhere", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "no_route");
}
