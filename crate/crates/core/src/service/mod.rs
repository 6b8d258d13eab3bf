//! Local JSON API over the store, the analyses and the knowledge catalog.
//!
//! [`Service::handle`] is a pure request dispatcher; [`serve`] binds it to
//! HTTP. Every response body is an envelope: `{"schema", "data"}` on success,
//! `{"schema": "error/1", "error": {"code", "message"}}` otherwise. The store
//! is re-read on every request.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use serde_json::{json, Value};

use crate::canonical;
use crate::dataflow::{build_dependency_graph, explain, PatternTable, FLOW_SCHEMA};
use crate::hash::ContentHash;
use crate::knowledge::{score_source, KnowledgeStore, LinkTarget, SuitabilityWeights};
use crate::recommender::{recommendations_json, CellRef, VectorIndex};
use crate::recorder::diff::DIFF_SCHEMA;
use crate::recorder::store::SNAPSHOT_SCHEMA;
use crate::recorder::tree::TREE_SCHEMA;
use crate::recorder::{Store, StoreError};
use crate::reviewer::{run_review, Catalog, REPORT_SCHEMA};

pub const ERROR_SCHEMA: &str = "error/1";
pub const NODE_SCHEMA: &str = "node/1";
pub const LINKS_SCHEMA: &str = "knowledge-links/1";
pub const DEFAULT_PORT: u16 = 7333;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub body: String,
}

struct ApiError {
    status: u16,
    code: &'static str,
    message: String,
}

fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError { status: 400, code: "BadRequest", message: message.into() }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let (status, code) = match &e {
            StoreError::UnknownNode(_) => (404, "UnknownNode"),
            StoreError::AmbiguousNode(_) => (400, "AmbiguousNode"),
            StoreError::Locked(_) => (409, "StoreLocked"),
            StoreError::Corrupt(_) => (500, "StoreCorrupt"),
            StoreError::Io { .. } => (500, "Io"),
        };
        ApiError { status, code, message: e.to_string() }
    }
}

fn envelope(schema: &str, mut data: Value) -> Response {
    // the envelope carries the schema
    if let Some(obj) = data.as_object_mut() {
        obj.remove("schema");
    }
    Response { status: 200, body: canonical::value_to_string(&json!({ "schema": schema, "data": data })) }
}

fn error_response(e: ApiError) -> Response {
    Response {
        status: e.status,
        body: canonical::value_to_string(&json!({
            "schema": ERROR_SCHEMA,
            "error": { "code": e.code, "message": e.message },
        })),
    }
}

pub struct Service {
    repo_dir: PathBuf,
    catalog: Catalog,
    weights: SuitabilityWeights,
    index: Option<Arc<VectorIndex>>,
}

impl Service {
    pub fn new(repo_dir: impl Into<PathBuf>) -> Service {
        Service {
            repo_dir: repo_dir.into(),
            catalog: Catalog::shipped(),
            weights: SuitabilityWeights::shipped(),
            index: None,
        }
    }

    pub fn with_catalog(mut self, catalog: Catalog) -> Self {
        self.catalog = catalog;
        self
    }

    pub fn with_weights(mut self, weights: SuitabilityWeights) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_index(mut self, index: VectorIndex) -> Self {
        self.index = Some(Arc::new(index));
        self
    }

    /// Dispatches one request. `target` is the path with optional query string.
    pub fn handle(&self, method: &str, target: &str, body: &str) -> Response {
        let (path, query) = target.split_once('?').unwrap_or((target, ""));
        let params: HashMap<String, String> = form_urlencoded::parse(query.as_bytes()).into_owned().collect();
        match self.route(method, path, &params, body) {
            Ok(r) => r,
            Err(e) => error_response(e),
        }
    }

    fn route(&self, method: &str, path: &str, params: &HashMap<String, String>, body: &str) -> Result<Response, ApiError> {
        let segments: Vec<&str> = path.trim_end_matches('/').split('/').skip(1).collect();
        let expect = |m: &str| {
            if method.eq_ignore_ascii_case(m) {
                Ok(())
            } else {
                Err(ApiError { status: 405, code: "MethodNotAllowed", message: format!("{path} expects {m}") })
            }
        };
        match segments.as_slice() {
            ["api", "tree"] => {
                expect("GET")?;
                Ok(envelope(TREE_SCHEMA, self.store()?.tree().to_json_value()))
            }
            ["api", "snapshot", id] => {
                expect("GET")?;
                let store = self.store()?;
                let id = store.resolve(id)?;
                Ok(envelope(SNAPSHOT_SCHEMA, snapshot_data(&store, &id)?))
            }
            ["api", "diff"] => {
                expect("GET")?;
                let store = self.store()?;
                let a = store.resolve(param(params, "a")?)?;
                let b = store.resolve(param(params, "b")?)?;
                Ok(envelope(DIFF_SCHEMA, store.diff(&a, &b)?.to_json_value()))
            }
            ["api", "checkout"] => {
                expect("POST")?;
                let req = json_body(body)?;
                let mut store = self.store()?;
                let id = store.resolve(body_str(&req, "node_id")?)?;
                store.checkout(&id)?;
                Ok(envelope(SNAPSHOT_SCHEMA, snapshot_data(&store, &id)?))
            }
            ["api", "annotate"] => {
                expect("POST")?;
                let req = json_body(body)?;
                let mut store = self.store()?;
                let id = store.resolve(body_str(&req, "node_id")?)?;
                let snap = store.annotate(&id, body_str(&req, "comment")?)?;
                Ok(envelope(NODE_SCHEMA, serde_json::to_value(snap).expect("snapshot serializes")))
            }
            ["api", "flow"] => {
                expect("GET")?;
                let store = self.store()?;
                let nb = store.notebook(&store.resolve(param(params, "node")?)?)?;
                let (_, flow) = explain(&nb, PatternTable::shipped(), None);
                Ok(envelope(FLOW_SCHEMA, flow.to_json_value()))
            }
            ["api", "review"] => {
                expect("GET")?;
                let store = self.store()?;
                let nb = store.notebook(&store.resolve(param(params, "node")?)?)?;
                let report = run_review(&nb, &self.catalog, &build_dependency_graph(&nb));
                Ok(envelope(REPORT_SCHEMA, report.to_json_value()))
            }
            ["api", "recommend", "cell"] => {
                expect("GET")?;
                let index = self.index.as_ref().ok_or_else(|| ApiError {
                    status: 404,
                    code: "IndexNotFound",
                    message: "no recommendation index loaded; run `protoml index <corpus>` first".into(),
                })?;
                let store = self.store()?;
                let nb = store.notebook(&store.resolve(param(params, "node")?)?)?;
                let cell_id = param(params, "cell")?;
                let cell = nb
                    .cell(cell_id)
                    .ok_or_else(|| ApiError { status: 404, code: "UnknownCell", message: format!("no cell {cell_id:?}") })?;
                let k = match params.get("k") {
                    None => 5,
                    Some(k) => k.parse::<usize>().ok().filter(|&k| k > 0).ok_or_else(|| bad_request("k must be a positive integer"))?,
                };
                let recs = index.recommend_cells(&cell.source, k, None::<&CellRef>);
                Ok(envelope(crate::recommender::RECOMMENDATIONS_SCHEMA, recommendations_json("cell", &recs)))
            }
            ["api", "knowledge"] => {
                expect("GET")?;
                let target = match (params.get("cell"), params.get("node")) {
                    (Some(cell), None) => cell.parse::<LinkTarget>().map_err(|e| bad_request(e.to_string()))?,
                    (None, Some(node)) => {
                        let store = self.store()?;
                        LinkTarget::Snapshot { node_id: store.resolve(node)? }
                    }
                    _ => return Err(bad_request("expected exactly one of `cell` or `node`")),
                };
                let catalog = KnowledgeStore::new(&self.repo_dir).load().map_err(|e| ApiError {
                    status: 500,
                    code: "KnowledgeCorrupt",
                    message: e.to_string(),
                })?;
                let items: Vec<Value> = catalog
                    .sources_for(&target)
                    .into_iter()
                    .map(|(src, link)| {
                        json!({ "source": src, "link": link, "suitability": score_source(src, &self.weights) })
                    })
                    .collect();
                Ok(envelope(LINKS_SCHEMA, json!({ "target": target, "items": items })))
            }
            _ => Err(ApiError { status: 404, code: "NotFound", message: format!("no endpoint {path}") }),
        }
    }

    fn store(&self) -> Result<Store, ApiError> {
        Ok(Store::open(&self.repo_dir)?)
    }
}

fn snapshot_data(store: &Store, id: &ContentHash) -> Result<Value, ApiError> {
    let header = store.snapshot(id)?;
    let nb = store.notebook(id)?;
    Ok(json!({ "header": header, "notebook": nb.canonical_value() }))
}

fn param<'a>(params: &'a HashMap<String, String>, key: &str) -> Result<&'a str, ApiError> {
    params
        .get(key)
        .map(String::as_str)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bad_request(format!("missing query parameter {key:?}")))
}

fn json_body(body: &str) -> Result<Value, ApiError> {
    serde_json::from_str(body).map_err(|e| bad_request(format!("request body is not JSON: {e}")))
}

fn body_str<'a>(v: &'a Value, key: &str) -> Result<&'a str, ApiError> {
    v.get(key).and_then(Value::as_str).ok_or_else(|| bad_request(format!("body field {key:?} must be a string")))
}

/// A running HTTP server; dropped or stopped to shut down.
pub struct ServerHandle {
    server: Arc<tiny_http::Server>,
    workers: Vec<JoinHandle<()>>,
    addr: SocketAddr,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    /// Blocks until the workers exit.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    fn shutdown(&mut self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Serves `service` on `addr` with a few worker threads.
pub fn serve(service: Service, addr: &str) -> Result<ServerHandle, String> {
    let server = Arc::new(tiny_http::Server::http(addr).map_err(|e| format!("cannot bind {addr}: {e}"))?);
    let bound = server.server_addr().to_ip().ok_or("server is not bound to an IP address")?;
    let service = Arc::new(service);
    let workers = (0..4)
        .map(|_| {
            let server = server.clone();
            let service = service.clone();
            thread::spawn(move || {
                while let Ok(mut request) = server.recv() {
                    let mut body = String::new();
                    let response = match request.as_reader().read_to_string(&mut body) {
                        Ok(_) => service.handle(request.method().as_str(), request.url(), &body),
                        Err(e) => error_response(bad_request(format!("unreadable body: {e}"))),
                    };
                    let header = tiny_http::Header::from_bytes("Content-Type", "application/json; charset=utf-8")
                        .expect("static header is valid");
                    let _ = request.respond(
                        tiny_http::Response::from_string(response.body)
                            .with_status_code(response.status)
                            .with_header(header),
                    );
                }
            })
        })
        .collect();
    Ok(ServerHandle { server, workers, addr: bound })
}
