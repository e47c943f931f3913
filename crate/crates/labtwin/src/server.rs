//! Read-only HTTP API over a dataset, a scene and a static asset root.

use std::collections::HashMap;
use std::fs::File;
use std::io;
use std::os::unix::fs::FileExt;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use labtwin_core::geom::Vec3;
use labtwin_core::scene::SceneDefinition;
use labtwin_core::sim::{CameraPose, EngineError, SessionState};
use serde::Serialize;
use tower_http::compression::CompressionLayer;
use tower_http::cors::CorsLayer;

use crate::dataset::{DatasetError, LodDataset};
use crate::scene_io::{parse_scene, SceneError};

const JSON: &str = "application/json";

/// Everything the handlers read; immutable after startup.
#[derive(Debug)]
pub struct AppState {
    dataset: Result<LodDataset, String>,
    bin: Option<File>,
    scene: SceneDefinition,
    scene_bytes: Vec<u8>,
    assets: Option<PathBuf>,
}

impl AppState {
    /// Loads the dataset and scene. A dataset that fails validation is kept
    /// as an error so its endpoints answer 503; a bad scene is fatal.
    pub fn load(dataset_dir: &Path, scene_path: &Path, assets: Option<PathBuf>) -> Result<Self, SceneError> {
        let scene_bytes = std::fs::read(scene_path)
            .map_err(|source| SceneError::Io { path: scene_path.to_path_buf(), source })?;
        let scene = parse_scene(&scene_bytes, scene_path)?;
        let dataset = LodDataset::open(dataset_dir).map_err(|e| e.to_string());
        Ok(Self::from_parts(dataset, scene, scene_bytes, assets))
    }

    pub fn from_parts(
        dataset: Result<LodDataset, String>,
        scene: SceneDefinition,
        scene_bytes: Vec<u8>,
        assets: Option<PathBuf>,
    ) -> Self {
        let (dataset, bin) = match dataset {
            Ok(ds) => match File::open(ds.bin_path()) {
                Ok(f) => (Ok(ds), Some(f)),
                Err(e) => (Err(DatasetError::Io { path: ds.bin_path(), source: e }.to_string()), None),
            },
            Err(e) => (Err(e), None),
        };
        AppState { dataset, bin, scene, scene_bytes, assets: assets.and_then(|a| a.canonicalize().ok()) }
    }

    pub fn dataset(&self) -> Result<&LodDataset, &str> {
        self.dataset.as_ref().map_err(String::as_str)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RouterOptions {
    pub cors: bool,
}

impl Default for RouterOptions {
    fn default() -> Self {
        RouterOptions { cors: true }
    }
}

pub fn router(state: Arc<AppState>, opts: RouterOptions) -> Router {
    // Node blobs stay uncompressed so byte ranges refer to the stored bytes.
    let only_json = |_: StatusCode, _: axum::http::Version, h: &HeaderMap, _: &axum::http::Extensions| {
        h.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).is_some_and(|v| v.starts_with(JSON))
    };
    let app = Router::new()
        .route("/api/manifest", get(manifest))
        .route("/api/hierarchy", get(hierarchy))
        .route("/api/nodes/{name}", get(node))
        .route("/api/scene", get(scene))
        .route("/api/assets/{*path}", get(asset))
        .route("/api/guidance", get(guidance))
        .fallback(|| async { error(StatusCode::NOT_FOUND, "no such endpoint") })
        .layer(CompressionLayer::new().gzip(true).compress_when(only_json))
        .with_state(state);
    if opts.cors {
        app.layer(CorsLayer::permissive())
    } else {
        app
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    #[derive(Serialize)]
    struct Body {
        error: String,
    }
    (status, Json(Body { error: message.into() })).into_response()
}

fn unavailable(reason: &str) -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, format!("dataset failed validation: {reason}"))
}

fn etag(ds: &LodDataset, suffix: &str) -> String {
    format!("\"{}:{suffix}\"", ds.manifest().hierarchy_digest)
}

fn not_modified(req: &HeaderMap, tag: &str) -> bool {
    req.get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == tag || t.trim() == "*"))
}

fn json_bytes(bytes: Vec<u8>, tag: Option<String>, req: &HeaderMap) -> Response {
    let mut resp = if tag.as_deref().is_some_and(|t| not_modified(req, t)) {
        StatusCode::NOT_MODIFIED.into_response()
    } else {
        ([(header::CONTENT_TYPE, JSON)], bytes).into_response()
    };
    if let Some(t) = tag {
        resp.headers_mut().insert(header::ETAG, HeaderValue::from_str(&t).expect("ascii etag"));
    }
    resp
}

async fn manifest(State(s): State<Arc<AppState>>, req: HeaderMap) -> Response {
    match s.dataset() {
        Ok(ds) => json_bytes(ds.manifest_bytes().to_vec(), Some(etag(ds, "manifest")), &req),
        Err(e) => unavailable(e),
    }
}

async fn hierarchy(State(s): State<Arc<AppState>>, req: HeaderMap) -> Response {
    match s.dataset() {
        Ok(ds) => json_bytes(ds.hierarchy_bytes().to_vec(), Some(etag(ds, "hierarchy")), &req),
        Err(e) => unavailable(e),
    }
}

async fn scene(State(s): State<Arc<AppState>>) -> Response {
    json_bytes(s.scene_bytes.clone(), None, &HeaderMap::new())
}

/// Single `bytes=` range resolved against `len`: `Ok(None)` means the whole
/// body, `Err(())` an unsatisfiable or malformed range.
fn parse_range(value: &str, len: u64) -> Result<Option<(u64, u64)>, ()> {
    let spec = value.trim().strip_prefix("bytes=").ok_or(())?;
    if spec.contains(',') {
        // Multipart ranges are not served; the full body is a valid answer.
        return Ok(None);
    }
    let (a, b) = spec.split_once('-').ok_or(())?;
    let (a, b) = (a.trim(), b.trim());
    let range = if a.is_empty() {
        let n: u64 = b.parse().map_err(|_| ())?;
        if n == 0 || len == 0 {
            return Err(());
        }
        (len.saturating_sub(n), len - 1)
    } else {
        let start: u64 = a.parse().map_err(|_| ())?;
        let end = if b.is_empty() { len.saturating_sub(1) } else { b.parse::<u64>().map_err(|_| ())?.min(len.saturating_sub(1)) };
        if start >= len || end < start {
            return Err(());
        }
        (start, end)
    };
    Ok(Some(range))
}

async fn node(State(s): State<Arc<AppState>>, UrlPath(name): UrlPath<String>, req: HeaderMap) -> Response {
    let ds = match s.dataset() {
        Ok(ds) => ds,
        Err(e) => return unavailable(e),
    };
    let Some(entry) = ds.entry(&name) else {
        return error(StatusCode::NOT_FOUND, format!("unknown node {name:?}"));
    };
    let tag = etag(ds, &entry.name.to_string());
    let len = entry.byte_size;
    let base = |status: StatusCode| {
        let mut r = Response::builder()
            .status(status)
            .header(header::CONTENT_TYPE, "application/octet-stream")
            .header(header::ACCEPT_RANGES, "bytes")
            .header(header::ETAG, &tag);
        r = r.header(header::CACHE_CONTROL, "public, max-age=31536000, immutable");
        r
    };
    if not_modified(&req, &tag) {
        return base(StatusCode::NOT_MODIFIED).body(Body::empty()).unwrap();
    }
    let range = match req.get(header::RANGE).map(|v| v.to_str().map_err(|_| ()).and_then(|v| parse_range(v, len))) {
        None => None,
        Some(Ok(r)) => r,
        Some(Err(())) => {
            return base(StatusCode::RANGE_NOT_SATISFIABLE)
                .header(header::CONTENT_RANGE, format!("bytes */{len}"))
                .body(Body::empty())
                .unwrap()
        }
    };
    let (start, end) = range.unwrap_or((0, len.saturating_sub(1)));
    let count = if len == 0 { 0 } else { end - start + 1 };
    let state = Arc::clone(&s);
    let offset = entry.byte_offset + start;
    let read = tokio::task::spawn_blocking(move || -> io::Result<Vec<u8>> {
        let mut buf = vec![0u8; count as usize];
        state.bin.as_ref().expect("valid dataset has an open bin").read_exact_at(&mut buf, offset)?;
        Ok(buf)
    })
    .await;
    let bytes = match read {
        Ok(Ok(b)) => b,
        Ok(Err(e)) => return error(StatusCode::INTERNAL_SERVER_ERROR, format!("reading node {name}: {e}")),
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    match range {
        Some(_) => base(StatusCode::PARTIAL_CONTENT)
            .header(header::CONTENT_RANGE, format!("bytes {start}-{end}/{len}"))
            .body(Body::from(bytes))
            .unwrap(),
        None => base(StatusCode::OK).body(Body::from(bytes)).unwrap(),
    }
}

/// Maps an asset request onto the asset root. `None` means the path tries
/// to leave the root.
fn jail(root: &Path, requested: &str) -> Option<PathBuf> {
    if requested.contains('\\') || requested.contains('\0') {
        return None;
    }
    let rel = Path::new(requested);
    let mut out = root.to_path_buf();
    for c in rel.components() {
        match c {
            Component::Normal(p) => out.push(p),
            Component::CurDir => {}
            Component::ParentDir | Component::RootDir | Component::Prefix(_) => return None,
        }
    }
    Some(out)
}

pub fn content_type(path: &Path) -> &'static str {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("svg") => "image/svg+xml",
        Some("html" | "htm") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json") => JSON,
        Some("wasm") => "application/wasm",
        Some("txt") => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

async fn asset(State(s): State<Arc<AppState>>, UrlPath(path): UrlPath<String>) -> Response {
    let Some(root) = s.assets.as_deref() else {
        return error(StatusCode::NOT_FOUND, "no asset directory configured");
    };
    let Some(candidate) = jail(root, &path) else {
        return error(StatusCode::FORBIDDEN, "path escapes the asset root");
    };
    // Symlinks may still point outside the root.
    let real = match tokio::fs::canonicalize(&candidate).await {
        Ok(p) => p,
        Err(_) => return error(StatusCode::NOT_FOUND, format!("no asset {path:?}")),
    };
    if !real.starts_with(root) {
        return error(StatusCode::FORBIDDEN, "path escapes the asset root");
    }
    match tokio::fs::read(&real).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&real))], bytes).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, format!("no asset {path:?}")),
    }
}

/// Body of `/api/guidance`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct GuidanceResponse {
    pub exit_id: String,
    pub bearing_deg: f64,
    pub relative_bearing_deg: f64,
    pub distance_m: f64,
    pub arrived: bool,
}

/// Fresh escape episode from `position` facing `yaw_deg`, then one guidance
/// update: the stateless evaluation behind `/api/guidance`.
pub fn guidance_at(scene: &SceneDefinition, position: Vec3, yaw_deg: f64) -> Result<GuidanceResponse, EngineError> {
    let state = SessionState::new(CameraPose::new(position, yaw_deg, 0.0)).start_escape(scene)?;
    let g = state.update_guidance(scene)?.guidance;
    Ok(GuidanceResponse {
        exit_id: g.exit_id,
        bearing_deg: g.bearing_deg,
        relative_bearing_deg: g.relative_bearing_deg,
        distance_m: g.distance_m,
        arrived: g.arrived,
    })
}

async fn guidance(State(s): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> Response {
    let coord = |k: &str, required: bool| -> Result<f64, String> {
        match q.get(k) {
            None if !required => Ok(0.0),
            None => Err(format!("missing query parameter {k}")),
            Some(v) => match v.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(format!("query parameter {k} must be a finite number, got {v:?}")),
            },
        }
    };
    let parsed = (|| Ok::<_, String>((coord("x", true)?, coord("y", true)?, coord("z", true)?, coord("yaw", false)?)))();
    let (x, y, z, yaw) = match parsed {
        Ok(v) => v,
        Err(m) => return error(StatusCode::BAD_REQUEST, m),
    };
    match guidance_at(&s.scene, Vec3::new(x, y, z), yaw) {
        Ok(g) => Json(g).into_response(),
        Err(EngineError::NoExits) => error(StatusCode::CONFLICT, "scene has no exits"),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// Serves `app` on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}
