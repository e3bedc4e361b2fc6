//! In-process HTTP client over the service router.
#![allow(dead_code)]

use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use fmgc_service::{router, Store};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub struct Client {
    app: Router,
}

pub struct Reply {
    pub status: StatusCode,
    pub text: String,
    pub json: Value,
}

impl Client {
    /// A fresh service instance over `dir`, as after a process restart.
    pub fn open(dir: &Path) -> Client {
        Client { app: router(Store::open(dir).unwrap()).unwrap() }
    }

    pub async fn send(&self, method: &str, uri: &str, content_type: &str, body: String) -> Reply {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", content_type)
            .body(Body::from(body))
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let text = String::from_utf8(bytes.to_vec()).unwrap();
        let json = serde_json::from_str(&text).unwrap_or(Value::Null);
        Reply { status, text, json }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.send("GET", uri, "application/json", String::new()).await
    }

    pub async fn post(&self, uri: &str, body: Value) -> Reply {
        self.send("POST", uri, "application/json", body.to_string()).await
    }

    pub async fn put(&self, uri: &str, body: Value) -> Reply {
        self.send("PUT", uri, "application/json", body.to_string()).await
    }

    pub async fn post_text(&self, uri: &str, text: &str) -> Reply {
        self.send("POST", uri, "text/plain", text.to_string()).await
    }
}
