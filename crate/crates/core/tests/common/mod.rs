#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nudgecred::feed::{parse_feed, Feed};
use nudgecred::nudge::NudgeConfig;
use nudgecred::registry::Registry;
use nudgecred::service::{serve_until, AppState, AssignmentMode, GroupAssigner, ServiceConfig};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn study_feed() -> Feed {
    let file = std::fs::File::open(fixture("study_feed.jsonl")).unwrap();
    parse_feed("study", std::io::BufReader::new(file)).unwrap()
}

/// A service on an ephemeral port, stopped on drop.
pub struct TestServer {
    pub base: String,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    rt: Option<tokio::runtime::Runtime>,
    handle: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
    client: reqwest::blocking::Client,
}

impl TestServer {
    pub fn start(store_dir: &Path, salt: &str, mode: AssignmentMode) -> TestServer {
        let state = AppState::new(ServiceConfig {
            registry: Registry::default_edition(),
            feed: study_feed(),
            store_dir: store_dir.to_path_buf(),
            assigner: GroupAssigner::new(salt, mode),
            nudge: NudgeConfig::default(),
            shuffle_seed: None,
        })
        .unwrap();
        let rt = tokio::runtime::Runtime::new().unwrap();
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let handle = rt.spawn(serve_until(listener, Arc::new(state), async {
            let _ = rx.await;
        }));
        TestServer {
            base,
            stop: Some(tx),
            rt: Some(rt),
            handle: Some(handle),
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let (Some(rt), Some(h)) = (self.rt.take(), self.handle.take()) {
            rt.block_on(h).unwrap().unwrap();
        }
    }

    pub fn get(&self, path: &str) -> (u16, serde_json::Value) {
        let resp = self.client.get(format!("{}{path}", self.base)).send().unwrap();
        let status = resp.status().as_u16();
        (status, serde_json::from_str(&resp.text().unwrap()).unwrap_or(serde_json::Value::Null))
    }

    pub fn get_text(&self, path: &str) -> (u16, String) {
        let resp = self.client.get(format!("{}{path}", self.base)).send().unwrap();
        (resp.status().as_u16(), resp.text().unwrap())
    }

    pub fn post(&self, path: &str, body: &serde_json::Value) -> (u16, serde_json::Value) {
        self.post_raw(path, &body.to_string())
    }

    pub fn post_raw(&self, path: &str, body: &str) -> (u16, serde_json::Value) {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .unwrap();
        let status = resp.status().as_u16();
        (status, serde_json::from_str(&resp.text().unwrap()).unwrap_or(serde_json::Value::Null))
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn rating(post: &str, participant: &str, items: [u8; 5]) -> serde_json::Value {
    serde_json::json!({
        "post_id": post,
        "participant_id": participant,
        "items": items,
        "interest": 3,
    })
}
