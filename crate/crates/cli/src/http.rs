//! HTTP front end for the health server and an HTTP client transport.

use std::fs;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde_json::Value;
use tiny_http::{Header, Method as HttpMethod, Request, Response, Server};
use uhs_core::api::{ApiRequest, ApiResponse, ErrorBody, Method, Transport, TransportError, API_PREFIX};
use uhs_core::server::{handle, HealthServer, MAX_LONG_POLL_MS};

/// Client side: sends API requests to `base_url` (e.g. `http://127.0.0.1:8080`).
pub struct HttpTransport {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(5))
            .timeout_read(Duration::from_millis(MAX_LONG_POLL_MS + 10_000))
            .build();
        Self { base_url: base_url.trim_end_matches('/').to_owned(), agent }
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &ApiRequest) -> Result<ApiResponse, TransportError> {
        let url = format!("{}{}", self.base_url, req.path);
        let mut r = self.agent.request(req.method.as_str(), &url);
        if let Some(t) = &req.token {
            r = r.set("Authorization", &format!("Bearer {t}"));
        }
        let result = match &req.body {
            Some(body) => r.send_json(body),
            None => r.call(),
        };
        let resp = match result {
            Ok(resp) => resp,
            Err(ureq::Error::Status(_, resp)) => resp,
            Err(e) => return Err(TransportError(e.to_string())),
        };
        let status = resp.status();
        let text = resp.into_string().map_err(|e| TransportError(e.to_string()))?;
        let body = if text.trim().is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&text).map_err(|e| TransportError(format!("non-JSON response ({status}): {e}")))?
        };
        Ok(ApiResponse { status, body })
    }
}

fn json_header() -> Header {
    Header::from_bytes("Content-Type", "application/json").expect("static header")
}

fn respond_json(req: Request, resp: ApiResponse) {
    let body = serde_json::to_vec(&resp.body).expect("values serialize");
    let _ = req.respond(Response::from_data(body).with_status_code(resp.status).with_header(json_header()));
}

fn bad_request(message: String) -> ApiResponse {
    let body = ErrorBody { error: "bad_request".into(), message };
    ApiResponse { status: 400, body: serde_json::to_value(body).expect("serializes") }
}

fn bearer(req: &Request) -> Option<String> {
    req.headers()
        .iter()
        .find(|h| h.field.equiv("Authorization"))
        .and_then(|h| h.value.as_str().strip_prefix("Bearer ").map(|t| t.trim().to_owned()))
}

fn serve_api(server: &HealthServer, mut req: Request) {
    let method = match req.method() {
        HttpMethod::Get => Method::Get,
        HttpMethod::Post => Method::Post,
        _ => {
            let body = ErrorBody { error: "method_not_allowed".into(), message: req.method().to_string() };
            return respond_json(
                req,
                ApiResponse { status: 405, body: serde_json::to_value(body).expect("serializes") },
            );
        }
    };
    let mut raw = String::new();
    if let Err(e) = req.as_reader().read_to_string(&mut raw) {
        return respond_json(req, bad_request(format!("unreadable body: {e}")));
    }
    let body = if raw.trim().is_empty() {
        None
    } else {
        match serde_json::from_str(&raw) {
            Ok(v) => Some(v),
            Err(e) => return respond_json(req, bad_request(format!("malformed JSON: {e}"))),
        }
    };
    let api = ApiRequest { method, path: req.url().to_owned(), token: bearer(&req), body };
    let resp = handle(server, &api);
    respond_json(req, resp);
}

/// Maps a URL path to a file under `root`, refusing anything that escapes it.
pub fn static_path(root: &Path, url: &str) -> Option<PathBuf> {
    let path = url.split(['?', '#']).next().unwrap_or("");
    let mut out = root.to_path_buf();
    for c in Path::new(path.trim_start_matches('/')).components() {
        match c {
            Component::Normal(p) => out.push(p),
            Component::CurDir => {}
            _ => return None,
        }
    }
    if out.is_dir() {
        out.push("index.html");
    }
    Some(out)
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json" | "map") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        _ => "application/octet-stream",
    }
}

fn serve_static(root: Option<&Path>, req: Request) {
    let not_found = || Response::from_string("not found").with_status_code(404);
    let Some(root) = root else {
        let _ = req.respond(not_found());
        return;
    };
    if *req.method() != HttpMethod::Get {
        let _ = req.respond(Response::from_string("method not allowed").with_status_code(405));
        return;
    }
    match static_path(root, req.url()).and_then(|p| fs::read(&p).ok().map(|b| (p, b))) {
        Some((path, bytes)) => {
            let header = Header::from_bytes("Content-Type", content_type(&path)).expect("static header");
            let _ = req.respond(Response::from_data(bytes).with_header(header));
        }
        None => {
            let _ = req.respond(not_found());
        }
    }
}

/// Blocks serving requests; each request gets its own thread so long polls
/// do not hold up other clients.
pub fn serve(server: Arc<HealthServer>, listener: Server) {
    let static_dir = server.config().static_dir.clone();
    for req in listener.incoming_requests() {
        let server = server.clone();
        let static_dir = static_dir.clone();
        thread::spawn(move || {
            if req.url().starts_with(API_PREFIX) {
                serve_api(&server, req);
            } else {
                serve_static(static_dir.as_deref(), req);
            }
        });
    }
}
