//! Shared helpers: a raw HTTP/1.1 client (so paths reach the server
//! verbatim), an in-process server and small dataset fixtures.
#![allow(dead_code)]

use std::convert::Infallible;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use labtwin::dataset::{build_octree, BuildReport};
use labtwin::scene_io::{demo_scene, scene_bytes};
use labtwin::server::{router, serve, AppState, RouterOptions};
use labtwin::synth::{SynthShape, SynthSpec};
use labtwin_core::geom::{Aabb, BoundsAccumulator};
use labtwin_core::octree::BuildConfig;
use labtwin_core::point::ColorPoint;

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn data_path(name: &str) -> PathBuf {
    crate_dir().join("data").join(name)
}

pub fn room(count: u64, seed: u64) -> Vec<ColorPoint> {
    SynthSpec { shape: SynthShape::RoomWithAisles, count, seed }.points().collect()
}

pub fn tight_bounds(points: &[ColorPoint]) -> Aabb {
    let mut acc = BoundsAccumulator::new();
    for p in points {
        acc.add(p.position());
    }
    acc.bounds().expect("non-empty cloud")
}

pub fn build_dir(points: &[ColorPoint], cfg: &BuildConfig, dir: &Path) -> BuildReport {
    build_octree(points.iter().copied().map(Ok::<_, Infallible>), tight_bounds(points), cfg, dir, None).unwrap()
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    /// Body with any gzip content encoding removed.
    pub fn decoded(&self) -> Vec<u8> {
        if self.header("content-encoding") == Some("gzip") {
            let mut out = Vec::new();
            flate2::read::GzDecoder::new(&self.body[..]).read_to_end(&mut out).unwrap();
            out
        } else {
            self.body.clone()
        }
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.decoded()).unwrap()
    }
}

fn dechunk(mut raw: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    loop {
        let end = raw.windows(2).position(|w| w == b"\r\n").expect("chunk size line");
        let size = usize::from_str_radix(std::str::from_utf8(&raw[..end]).unwrap().split(';').next().unwrap().trim(), 16)
            .unwrap();
        raw = &raw[end + 2..];
        if size == 0 {
            return out;
        }
        out.extend_from_slice(&raw[..size]);
        raw = &raw[size + 2..];
    }
}

/// Sends one request with `Connection: close` and reads the whole reply.
pub fn http_get(addr: SocketAddr, path: &str, headers: &[(&str, &str)]) -> HttpResponse {
    let mut s = TcpStream::connect(addr).unwrap();
    let mut req = format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n");
    for (k, v) in headers {
        req.push_str(&format!("{k}: {v}\r\n"));
    }
    req.push_str("\r\n");
    s.write_all(req.as_bytes()).unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).unwrap();
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("header terminator");
    let head = std::str::from_utf8(&raw[..split]).unwrap();
    let mut lines = head.split("\r\n");
    let status = lines.next().unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    let headers: Vec<(String, String)> = lines
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim().to_ascii_lowercase(), v.trim().to_string()))
        .collect();
    let body = &raw[split + 4..];
    let chunked = headers.iter().any(|(k, v)| k == "transfer-encoding" && v.contains("chunked"));
    let body = if chunked { dechunk(body) } else { body.to_vec() };
    HttpResponse { status, headers, body }
}

pub struct TestServer {
    pub addr: SocketAddr,
    _rt: tokio::runtime::Runtime,
}

pub fn start_server(state: AppState, opts: RouterOptions) -> TestServer {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(Arc::new(state), opts);
    rt.spawn(serve(listener, app, std::future::pending()));
    TestServer { addr, _rt: rt }
}

/// A built room dataset, the demo scene and an asset root, all in `dir`.
pub struct Site {
    pub dataset: PathBuf,
    pub scene: PathBuf,
    pub assets: PathBuf,
}

pub fn make_site(dir: &Path, points: u64, cfg: &BuildConfig) -> Site {
    let dataset = dir.join("ds");
    build_dir(&room(points, 11), cfg, &dataset);
    let scene = dir.join("scene.json");
    std::fs::write(&scene, scene_bytes(&demo_scene())).unwrap();
    let assets = dir.join("web");
    std::fs::create_dir_all(assets.join("eq")).unwrap();
    std::fs::write(assets.join("eq/press500t.jpg"), b"\xff\xd8\xff\xe0fake-jpeg").unwrap();
    std::fs::write(assets.join("index.html"), b"<!doctype html><title>lab</title>").unwrap();
    std::fs::write(dir.join("secret.txt"), b"outside the root").unwrap();
    Site { dataset, scene, assets }
}

pub fn serve_site(site: &Site) -> TestServer {
    let state = AppState::load(&site.dataset, &site.scene, Some(site.assets.clone())).unwrap();
    start_server(state, RouterOptions::default())
}
