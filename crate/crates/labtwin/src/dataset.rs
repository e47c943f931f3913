//! On-disk LOD datasets: `manifest.json`, `hierarchy.json` and `octree.bin`.
//!
//! [`build_octree`] is out-of-core. A top stage keeps the first few levels
//! below a unit's root in memory and spills deeper points, in input order, to
//! one file per node at the spill level. Each spill file is then built as its
//! own unit, in memory if it fits the budget and by the same spill scheme
//! otherwise. Units write their node blobs in name order, so merging them is
//! a sequential copy. Every node sees its points in input order, so the output
//! is identical to a single in-memory pass.

use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use labtwin_core::geom::Aabb;
use labtwin_core::grid::PoissonGrid;
use labtwin_core::octree::{
    assemble_hierarchy, BuildConfig, BuildError, LodGeometry, LodHierarchy, LodManifest, NodeName, OctreeNode,
    Placement, PointRecord, SubtreeBuilder, BYTES_PER_POINT, RECORD_LAYOUT, RECORD_SIZE,
};
use labtwin_core::point::ColorPoint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cloud_io::CloudError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const HIERARCHY_FILE: &str = "hierarchy.json";
pub const BIN_FILE: &str = "octree.bin";
pub const FORMAT_VERSION: u32 = 1;

/// Deepest spill level below a unit root; bounds the number of spill files.
const MAX_SPILL_DEPTH: u8 = 3;
const RECORD: usize = RECORD_SIZE as usize;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Input(#[from] CloudError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("{path}: malformed JSON: {message}")]
    Json { path: PathBuf, message: String },
    #[error("{path}: digest mismatch (manifest says {expected}, file hashes to {actual})")]
    DigestMismatch { path: PathBuf, expected: String, actual: String },
    #[error("{path}: dataset version {found} is not supported (expected {FORMAT_VERSION})")]
    VersionSkew { path: PathBuf, found: u32 },
    #[error("{path}: truncated: expected {expected} bytes, found {actual}")]
    Truncated { path: PathBuf, expected: u64, actual: u64 },
    #[error("{path}: inconsistent hierarchy: {message}")]
    Inconsistent { path: PathBuf, message: String },
    #[error("unknown node {0}")]
    UnknownNode(String),
}

impl From<Infallible> for DatasetError {
    fn from(e: Infallible) -> Self {
        match e {}
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// One element of `hierarchy.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyEntry {
    pub name: NodeName,
    pub level: u8,
    pub num_points: u64,
    pub byte_offset: u64,
    pub byte_size: u64,
    pub child_mask: u8,
    pub overflow: bool,
    /// `sha256:<hex>` of the node blob.
    pub checksum: String,
}

pub fn sha256_tag(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

/// Summary of a finished build.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildReport {
    pub manifest: LodManifest,
    pub node_count: usize,
    pub depth: u8,
    /// Spill files written by the out-of-core stage (0 for in-memory builds).
    pub spill_chunks: usize,
}

/// Node produced by a unit, before byte offsets are assigned.
#[derive(Debug, Clone)]
struct UnitNode {
    name: NodeName,
    num_points: u64,
    overflow: bool,
    checksum: String,
}

struct Ctx<'a> {
    geom: &'a LodGeometry,
    cfg: &'a BuildConfig,
    work: &'a Path,
}

impl Ctx<'_> {
    fn in_memory_limit(&self) -> u64 {
        self.cfg.memory_budget / 2
    }

    /// Levels below a unit root held by its top stage.
    fn spill_depth(&self, root: NodeName) -> Result<u8, BuildError> {
        let per_node = u64::from(self.cfg.leaf_capacity).saturating_mul(BYTES_PER_POINT);
        let limit = self.cfg.memory_budget / 4;
        let room = self.geom.max_level() - root.level();
        let mut depth = 0u8;
        let mut nodes = 0u64;
        while depth < MAX_SPILL_DEPTH.min(room) {
            let next = nodes + 8u64.pow(depth as u32);
            if next.saturating_mul(per_node) > limit {
                break;
            }
            nodes = next;
            depth += 1;
        }
        if depth == 0 {
            return Err(BuildError::MemoryBudget { budget: self.cfg.memory_budget, needed: per_node.saturating_mul(4) });
        }
        Ok(depth)
    }

    fn spill_path(&self, name: NodeName) -> PathBuf {
        self.work.join(format!("spill-{name}.rec"))
    }

    fn unit_path(&self, name: NodeName) -> PathBuf {
        self.work.join(format!("unit-{name}.bin"))
    }
}

/// Writes `nodes` (sorted) to `out` and returns their descriptors.
fn write_nodes(nodes: &[labtwin_core::octree::BuiltNode], out: &Path) -> Result<Vec<UnitNode>, DatasetError> {
    let file = File::create(out).map_err(io_err(out))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    let mut descs = Vec::with_capacity(nodes.len());
    let mut buf = Vec::new();
    for n in nodes {
        buf.clear();
        for r in &n.records {
            buf.extend_from_slice(&r.to_bytes());
        }
        w.write_all(&buf).map_err(io_err(out))?;
        descs.push(UnitNode {
            name: n.name,
            num_points: n.records.len() as u64,
            overflow: n.overflow,
            checksum: sha256_tag(&buf),
        });
    }
    w.flush().map_err(io_err(out))?;
    Ok(descs)
}

/// Buffered appends to per-node spill files.
struct Spiller<'a> {
    ctx: &'a Ctx<'a>,
    buffers: HashMap<NodeName, Vec<u8>>,
    counts: BTreeMap<NodeName, u64>,
    buffered: usize,
    cap: usize,
}

impl<'a> Spiller<'a> {
    fn new(ctx: &'a Ctx<'a>) -> Self {
        let cap = (ctx.cfg.memory_budget / 8).clamp(1 << 16, 64 << 20) as usize;
        Spiller { ctx, buffers: HashMap::new(), counts: BTreeMap::new(), buffered: 0, cap }
    }

    fn push(&mut self, name: NodeName, rec: &PointRecord) -> Result<(), DatasetError> {
        self.buffers.entry(name).or_default().extend_from_slice(&rec.to_bytes());
        *self.counts.entry(name).or_default() += 1;
        self.buffered += RECORD;
        if self.buffered >= self.cap {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), DatasetError> {
        for (name, buf) in self.buffers.iter_mut().filter(|(_, b)| !b.is_empty()) {
            let path = self.ctx.spill_path(*name);
            let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
            f.write_all(buf).map_err(io_err(&path))?;
            buf.clear();
        }
        self.buffered = 0;
        Ok(())
    }

    fn finish(mut self) -> Result<BTreeMap<NodeName, u64>, DatasetError> {
        self.flush()?;
        Ok(self.counts)
    }
}

fn spill_records(path: &Path) -> Result<impl Iterator<Item = Result<PointRecord, DatasetError>>, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::with_capacity(1 << 20, file);
    let path = path.to_path_buf();
    Ok(std::iter::from_fn(move || {
        let mut b = [0u8; RECORD];
        match r.read_exact(&mut b) {
            Ok(()) => Some(Ok(PointRecord::from_bytes(&b))),
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => None,
            Err(e) => Some(Err(DatasetError::Io { path: path.clone(), source: e })),
        }
    }))
}

/// Builds the subtree rooted at `root` from `records` into `out`, returning
/// its nodes in name order. `count` is the exact record count when known.
fn build_unit<I>(
    ctx: &Ctx<'_>,
    root: NodeName,
    records: I,
    count: Option<u64>,
    out: &Path,
    chunks: &mut usize,
) -> Result<Vec<UnitNode>, DatasetError>
where
    I: Iterator<Item = Result<PointRecord, DatasetError>>,
{
    let fits = count.is_some_and(|n| n.saturating_mul(BYTES_PER_POINT) <= ctx.in_memory_limit());
    if fits || root.level() == ctx.geom.max_level() {
        let mut b = SubtreeBuilder::new(ctx.geom, ctx.cfg.leaf_capacity, root, None);
        for r in records {
            b.insert(r?);
            if b.approx_bytes() > ctx.cfg.memory_budget {
                return Err(BuildError::MemoryBudget {
                    budget: ctx.cfg.memory_budget,
                    needed: count.unwrap_or(0).saturating_mul(BYTES_PER_POINT),
                }
                .into());
            }
        }
        return write_nodes(&b.finish(), out);
    }

    let spill_level = root.level() + ctx.spill_depth(root)?;
    let mut top = SubtreeBuilder::new(ctx.geom, ctx.cfg.leaf_capacity, root, Some(spill_level));
    let mut spiller = Spiller::new(ctx);
    for r in records {
        let r = r?;
        if let Placement::Spill(name) = top.insert(r) {
            spiller.push(name, &r)?;
        }
    }
    let spilled = spiller.finish()?;
    *chunks += spilled.len();
    log::debug!("unit {root}: {} top points, {} spill chunks", top.stored_points(), spilled.len());

    let top_path = ctx.work.join(format!("top-{root}.bin"));
    let top_nodes = write_nodes(&top.finish(), &top_path)?;

    // Chunks that fit run in parallel batches sharing half the budget; the
    // rest are split again one at a time.
    let limit = ctx.in_memory_limit();
    let mut batches: Vec<Vec<(NodeName, u64)>> = Vec::new();
    let mut batch_bytes = u64::MAX;
    let mut large = Vec::new();
    for (&name, &n) in &spilled {
        let bytes = n.saturating_mul(BYTES_PER_POINT);
        if bytes > limit {
            large.push((name, n));
            continue;
        }
        if batch_bytes.saturating_add(bytes) > limit {
            batches.push(Vec::new());
            batch_bytes = 0;
        }
        batches.last_mut().unwrap().push((name, n));
        batch_bytes += bytes;
    }
    let mut children: BTreeMap<NodeName, Vec<UnitNode>> = BTreeMap::new();
    for batch in batches {
        let built: Vec<_> = batch
            .par_iter()
            .map(|&(name, n)| {
                let src = ctx.spill_path(name);
                let mut sub_chunks = 0;
                let nodes = build_unit(ctx, name, spill_records(&src)?, Some(n), &ctx.unit_path(name), &mut sub_chunks)?;
                fs::remove_file(&src).map_err(io_err(&src))?;
                Ok((name, nodes))
            })
            .collect::<Result<_, DatasetError>>()?;
        children.extend(built);
    }
    for (name, n) in large {
        let src = ctx.spill_path(name);
        let nodes = build_unit(ctx, name, spill_records(&src)?, Some(n), &ctx.unit_path(name), chunks)?;
        fs::remove_file(&src).map_err(io_err(&src))?;
        children.insert(name, nodes);
    }

    // Merge: top nodes and child units interleave in name order; each child
    // unit is one contiguous run.
    let mut merged: Vec<(NodeName, Option<NodeName>, UnitNode)> = Vec::new();
    for n in top_nodes {
        merged.push((n.name, None, n));
    }
    for (&chunk, nodes) in &children {
        for n in nodes {
            merged.push((n.name, Some(chunk), n.clone()));
        }
    }
    merged.sort_by_key(|m| m.0);

    let file = File::create(out).map_err(io_err(out))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    let mut top_reader = BufReader::with_capacity(1 << 20, File::open(&top_path).map_err(io_err(&top_path))?);
    let mut current: Option<(NodeName, BufReader<File>, PathBuf)> = None;
    let mut out_nodes = Vec::with_capacity(merged.len());
    for (_, source, node) in merged {
        let bytes = node.num_points * RECORD_SIZE;
        match source {
            None => copy_exact(&mut top_reader, &mut w, bytes, &top_path, out)?,
            Some(chunk) => {
                if current.as_ref().map(|c| c.0) != Some(chunk) {
                    if let Some((_, _, done)) = current.take() {
                        fs::remove_file(&done).map_err(io_err(&done))?;
                    }
                    let p = ctx.unit_path(chunk);
                    let f = File::open(&p).map_err(io_err(&p))?;
                    current = Some((chunk, BufReader::with_capacity(1 << 20, f), p));
                }
                let (_, reader, p) = current.as_mut().unwrap();
                copy_exact(reader, &mut w, bytes, p, out)?;
            }
        }
        out_nodes.push(node);
    }
    if let Some((_, _, done)) = current.take() {
        fs::remove_file(&done).map_err(io_err(&done))?;
    }
    w.flush().map_err(io_err(out))?;
    drop(top_reader);
    fs::remove_file(&top_path).map_err(io_err(&top_path))?;
    Ok(out_nodes)
}

fn copy_exact(r: &mut impl Read, w: &mut impl Write, bytes: u64, from: &Path, to: &Path) -> Result<(), DatasetError> {
    let copied = io::copy(&mut r.take(bytes), w).map_err(io_err(to))?;
    if copied != bytes {
        return Err(DatasetError::Truncated { path: from.to_path_buf(), expected: bytes, actual: copied });
    }
    Ok(())
}

/// Builds a dataset in `out_dir` from points inside `bounds`.
///
/// `count_hint` lets small inputs skip the spill stage.
pub fn build_octree<I, E>(
    points: I,
    bounds: Aabb,
    cfg: &BuildConfig,
    out_dir: &Path,
    count_hint: Option<u64>,
) -> Result<BuildReport, DatasetError>
where
    I: IntoIterator<Item = Result<ColorPoint, E>>,
    DatasetError: From<E>,
{
    let geom = LodGeometry::new(bounds, cfg)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let work = out_dir.join(format!(".build-{}", std::process::id()));
    fs::create_dir_all(&work).map_err(io_err(&work))?;
    let result = build_into(points, bounds, cfg, &geom, out_dir, &work, count_hint);
    let _ = fs::remove_dir_all(&work);
    result
}

fn build_into<I, E>(
    points: I,
    bounds: Aabb,
    cfg: &BuildConfig,
    geom: &LodGeometry,
    out_dir: &Path,
    work: &Path,
    count_hint: Option<u64>,
) -> Result<BuildReport, DatasetError>
where
    I: IntoIterator<Item = Result<ColorPoint, E>>,
    DatasetError: From<E>,
{
    let ctx = Ctx { geom, cfg, work };
    let mut index = 0u64;
    let records = points.into_iter().map(|p| {
        let p = p?;
        if !p.is_finite() {
            return Err(BuildError::NonFinite { index }.into());
        }
        if !bounds.contains(p.position()) {
            return Err(BuildError::OutsideBounds { index }.into());
        }
        index += 1;
        Ok(geom.quantize(&p))
    });
    let bin = out_dir.join(BIN_FILE);
    let mut chunks = 0;
    let nodes = build_unit(&ctx, NodeName::ROOT, records, count_hint, &bin, &mut chunks)?;
    if nodes.is_empty() {
        let _ = fs::remove_file(&bin);
        return Err(BuildError::EmptyInput.into());
    }
    let hierarchy = assemble_hierarchy(geom, nodes.iter().map(|n| (n.name, n.num_points, n.overflow)))?;
    let entries: Vec<HierarchyEntry> = hierarchy
        .iter()
        .zip(&nodes)
        .map(|(h, n)| HierarchyEntry {
            name: h.name,
            level: h.level,
            num_points: h.num_points,
            byte_offset: h.byte_offset,
            byte_size: h.byte_size,
            child_mask: h.child_mask,
            overflow: h.overflow,
            checksum: n.checksum.clone(),
        })
        .collect();
    let hierarchy_bytes = to_json(&entries);
    let hpath = out_dir.join(HIERARCHY_FILE);
    fs::write(&hpath, &hierarchy_bytes).map_err(io_err(&hpath))?;
    let manifest = LodManifest {
        version: FORMAT_VERSION,
        bounds: geom.cube(),
        root_spacing: geom.root_spacing(),
        total_points: entries.iter().map(|e| e.num_points).sum(),
        record: RECORD_LAYOUT.into(),
        hierarchy_digest: sha256_tag(&hierarchy_bytes),
        max_level: geom.max_level(),
        overflow_nodes: entries.iter().filter(|e| e.overflow).map(|e| e.name).collect(),
    };
    let mpath = out_dir.join(MANIFEST_FILE);
    fs::write(&mpath, to_json(&manifest)).map_err(io_err(&mpath))?;
    Ok(BuildReport {
        node_count: entries.len(),
        depth: entries.iter().map(|e| e.level).max().unwrap_or(0),
        manifest,
        spill_chunks: chunks,
    })
}

/// Pretty JSON with a trailing newline; key order follows field order.
pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

/// Exact multiset fingerprint of a point set in dataset space: count plus
/// wrapping sums of the f32 offset bit patterns and of the colors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Fingerprint {
    pub count: u64,
    pub offset_bits: [u64; 3],
    pub color_sum: [u64; 3],
}

impl Fingerprint {
    pub fn add(&mut self, r: &PointRecord) {
        self.count += 1;
        for i in 0..3 {
            self.offset_bits[i] = self.offset_bits[i].wrapping_add(u64::from(r.offset[i].to_bits()));
            self.color_sum[i] += u64::from(r.rgb[i]);
        }
    }
}

/// A node holding two points closer than its spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonViolation {
    pub node: NodeName,
    pub spacing: f64,
    pub distance: f64,
}

/// A loaded, digest-verified dataset.
#[derive(Debug, Clone)]
pub struct LodDataset {
    dir: PathBuf,
    manifest: LodManifest,
    manifest_bytes: Vec<u8>,
    hierarchy_bytes: Vec<u8>,
    entries: Vec<HierarchyEntry>,
    nodes: Vec<OctreeNode>,
    index: HashMap<NodeName, usize>,
    geometry: LodGeometry,
    bin_len: u64,
}

fn parse_json<T: for<'de> Deserialize<'de>>(bytes: &[u8], path: &Path) -> Result<T, DatasetError> {
    serde_json::from_slice(bytes).map_err(|e| DatasetError::Json { path: path.to_path_buf(), message: e.to_string() })
}

impl LodDataset {
    /// Loads and verifies a dataset: version, hierarchy digest, hierarchy
    /// consistency and `octree.bin` length.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let dir = dir.as_ref().to_path_buf();
        let mpath = dir.join(MANIFEST_FILE);
        let manifest_bytes = fs::read(&mpath).map_err(io_err(&mpath))?;
        #[derive(Deserialize)]
        struct Version {
            version: u32,
        }
        let v: Version = parse_json(&manifest_bytes, &mpath)?;
        if v.version != FORMAT_VERSION {
            return Err(DatasetError::VersionSkew { path: mpath, found: v.version });
        }
        let manifest: LodManifest = parse_json(&manifest_bytes, &mpath)?;
        let hpath = dir.join(HIERARCHY_FILE);
        let hierarchy_bytes = fs::read(&hpath).map_err(io_err(&hpath))?;
        let actual = sha256_tag(&hierarchy_bytes);
        if actual != manifest.hierarchy_digest {
            return Err(DatasetError::DigestMismatch { path: hpath, expected: manifest.hierarchy_digest.clone(), actual });
        }
        let entries: Vec<HierarchyEntry> = parse_json(&hierarchy_bytes, &hpath)?;
        let geometry = LodGeometry::from_parts(manifest.bounds, manifest.root_spacing, manifest.max_level);
        let bad = |message: String| DatasetError::Inconsistent { path: hpath.clone(), message };
        let nodes = assemble_hierarchy(&geometry, entries.iter().map(|e| (e.name, e.num_points, e.overflow)))
            .map_err(|e| bad(e.to_string()))?;
        for (e, n) in entries.iter().zip(&nodes) {
            let same = e.level == n.level
                && e.byte_offset == n.byte_offset
                && e.byte_size == n.byte_size
                && e.child_mask == n.child_mask;
            if !same {
                return Err(bad(format!("node {} disagrees with its recomputed layout", e.name)));
            }
        }
        if nodes.first().map(|n| n.name) != Some(NodeName::ROOT) {
            return Err(bad("missing root node".into()));
        }
        let total: u64 = entries.iter().map(|e| e.num_points).sum();
        if total != manifest.total_points {
            return Err(bad(format!("total_points {} but nodes hold {total}", manifest.total_points)));
        }
        let bpath = dir.join(BIN_FILE);
        let bin_len = fs::metadata(&bpath).map_err(io_err(&bpath))?.len();
        let expected = nodes.last().map_or(0, |n| n.byte_offset + n.byte_size);
        if bin_len != expected {
            return Err(DatasetError::Truncated { path: bpath, expected, actual: bin_len });
        }
        let index = entries.iter().enumerate().map(|(i, e)| (e.name, i)).collect();
        Ok(LodDataset { dir, manifest, manifest_bytes, hierarchy_bytes, entries, nodes, index, geometry, bin_len })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &LodManifest {
        &self.manifest
    }

    pub fn manifest_bytes(&self) -> &[u8] {
        &self.manifest_bytes
    }

    pub fn hierarchy_bytes(&self) -> &[u8] {
        &self.hierarchy_bytes
    }

    pub fn entries(&self) -> &[HierarchyEntry] {
        &self.entries
    }

    pub fn nodes(&self) -> &[OctreeNode] {
        &self.nodes
    }

    pub fn geometry(&self) -> &LodGeometry {
        &self.geometry
    }

    pub fn bin_path(&self) -> PathBuf {
        self.dir.join(BIN_FILE)
    }

    pub fn bin_len(&self) -> u64 {
        self.bin_len
    }

    pub fn hierarchy(&self) -> LodHierarchy {
        LodHierarchy::new(self.nodes.clone())
    }

    pub fn entry(&self, name: &str) -> Option<&HierarchyEntry> {
        let name: NodeName = name.parse().ok()?;
        self.index.get(&name).map(|&i| &self.entries[i])
    }

    pub fn depth(&self) -> u8 {
        self.entries.iter().map(|e| e.level).max().unwrap_or(0)
    }

    /// Raw blob of one node.
    pub fn read_node_bytes(&self, name: &str) -> Result<Vec<u8>, DatasetError> {
        let e = self.entry(name).ok_or_else(|| DatasetError::UnknownNode(name.into()))?;
        let path = self.bin_path();
        let mut f = File::open(&path).map_err(io_err(&path))?;
        f.seek(SeekFrom::Start(e.byte_offset)).map_err(io_err(&path))?;
        let mut buf = Vec::with_capacity(e.byte_size as usize);
        let n = f.take(e.byte_size).read_to_end(&mut buf).map_err(io_err(&path))? as u64;
        if n != e.byte_size {
            return Err(DatasetError::Truncated { path, expected: e.byte_offset + e.byte_size, actual: e.byte_offset + n });
        }
        Ok(buf)
    }

    pub fn read_node_records(&self, name: &str) -> Result<Vec<PointRecord>, DatasetError> {
        let bytes = self.read_node_bytes(name)?;
        Ok(bytes.chunks_exact(RECORD).map(|c| PointRecord::from_bytes(c.try_into().unwrap())).collect())
    }

    pub fn read_node_points(&self, name: &str) -> Result<Vec<ColorPoint>, DatasetError> {
        Ok(self.read_node_records(name)?.iter().map(|r| self.geometry.to_world(r)).collect())
    }

    /// Streams every node in file order as `(entry, blob)`.
    pub fn for_each_node(&self, mut f: impl FnMut(&HierarchyEntry, &[u8])) -> Result<(), DatasetError> {
        let path = self.bin_path();
        let mut r = BufReader::with_capacity(1 << 20, File::open(&path).map_err(io_err(&path))?);
        let mut buf = Vec::new();
        for e in &self.entries {
            buf.resize(e.byte_size as usize, 0);
            r.read_exact(&mut buf).map_err(io_err(&path))?;
            f(e, &buf);
        }
        Ok(())
    }

    /// Nodes whose blob no longer matches its recorded checksum.
    pub fn corrupt_nodes(&self) -> Result<Vec<NodeName>, DatasetError> {
        let mut bad = Vec::new();
        self.for_each_node(|e, blob| {
            if sha256_tag(blob) != e.checksum {
                bad.push(e.name);
            }
        })?;
        Ok(bad)
    }

    pub fn fingerprint(&self) -> Result<Fingerprint, DatasetError> {
        let mut fp = Fingerprint::default();
        self.for_each_node(|_, blob| {
            for c in blob.chunks_exact(RECORD) {
                fp.add(&PointRecord::from_bytes(c.try_into().unwrap()));
            }
        })?;
        Ok(fp)
    }

    /// Exact check of the per-node spacing on every non-overflow node.
    pub fn audit_poisson(&self) -> Result<Vec<PoissonViolation>, DatasetError> {
        let mut out = Vec::new();
        self.for_each_node(|e, blob| {
            if e.overflow || e.num_points < 2 {
                return;
            }
            let spacing = self.geometry.spacing(e.level);
            let mut grid = PoissonGrid::new(spacing);
            let mut closest = f64::INFINITY;
            for c in blob.chunks_exact(RECORD) {
                let p = PointRecord::from_bytes(c.try_into().unwrap()).local();
                if grid.conflicts(p) {
                    let d = grid.positions().iter().map(|q| q.distance(p)).fold(f64::INFINITY, f64::min);
                    closest = closest.min(d);
                }
                grid.insert(p);
            }
            if closest < spacing {
                out.push(PoissonViolation { node: e.name, spacing, distance: closest });
            }
        })?;
        Ok(out)
    }
}

/// Fingerprint of source points as the dataset would store them.
pub fn source_fingerprint<I, E>(points: I, geometry: &LodGeometry) -> Result<Fingerprint, E>
where
    I: IntoIterator<Item = Result<ColorPoint, E>>,
{
    let mut fp = Fingerprint::default();
    for p in points {
        fp.add(&geometry.quantize(&p?));
    }
    Ok(fp)
}

/// Manifest and node list of a verified dataset.
pub fn load_hierarchy(dir: impl AsRef<Path>) -> Result<(LodManifest, Vec<OctreeNode>), DatasetError> {
    let ds = LodDataset::open(dir)?;
    Ok((ds.manifest, ds.nodes))
}

/// World-space points of one node.
pub fn read_node_points(dir: impl AsRef<Path>, name: &str) -> Result<Vec<ColorPoint>, DatasetError> {
    LodDataset::open(dir)?.read_node_points(name)
}

/// Largest quantization error of a stored coordinate, per axis.
pub fn quantization_bound(manifest: &LodManifest) -> f64 {
    let s = manifest.bounds.size();
    s.x.max(s.y).max(s.z) * f64::from(f32::EPSILON)
}

#[cfg(test)]
mod tests {
    use super::*;
    use labtwin_core::octree::{build_in_memory, RootSpacing};

    fn cloud(n: usize) -> Vec<ColorPoint> {
        crate::synth::SynthSpec { shape: crate::synth::SynthShape::RoomWithAisles, count: n as u64, seed: 9 }
            .points()
            .collect()
    }

    fn bounds(pts: &[ColorPoint]) -> Aabb {
        pts.iter().skip(1).fold(Aabb::from_point(pts[0].position()), |mut b, p| {
            b.extend(p.position());
            b
        })
    }

    #[test]
    fn single_point_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let p = ColorPoint::new(1.0, 2.0, 3.0, 4, 5, 6);
        let b = Aabb::from_point(p.position());
        let rep = build_octree([Ok::<_, Infallible>(p)], b, &BuildConfig::default(), dir.path(), Some(1)).unwrap();
        assert_eq!(rep.node_count, 1);
        let ds = LodDataset::open(dir.path()).unwrap();
        assert_eq!(ds.read_node_points("r").unwrap().len(), 1);
        assert_eq!(ds.bin_len(), 16);
    }

    #[test]
    fn spilled_build_matches_in_memory() {
        let pts = cloud(30_000);
        let b = bounds(&pts);
        // A tiny budget forces several spill stages.
        let cfg = BuildConfig {
            root_spacing: RootSpacing::Auto,
            leaf_capacity: 200,
            max_level: 10,
            memory_budget: 200 * BYTES_PER_POINT * 4 * 9 + 1,
        };
        let dir = tempfile::tempdir().unwrap();
        let rep = build_octree(pts.iter().copied().map(Ok::<_, Infallible>), b, &cfg, dir.path(), None).unwrap();
        assert!(rep.spill_chunks > 8, "{}", rep.spill_chunks);
        let ds = LodDataset::open(dir.path()).unwrap();
        let reference = build_in_memory(pts.iter().copied(), b, &cfg).unwrap();
        assert_eq!(ds.nodes(), reference.nodes.as_slice());
        for (n, blob) in reference.nodes.iter().zip(&reference.blobs) {
            assert_eq!(&ds.read_node_records(&n.name.to_string()).unwrap(), blob);
        }
        assert!(ds.corrupt_nodes().unwrap().is_empty());
        assert!(ds.audit_poisson().unwrap().is_empty());
        assert!(!dir.path().join(format!(".build-{}", std::process::id())).exists());
    }

    #[test]
    fn budget_too_small_is_reported() {
        let pts = cloud(100);
        let cfg = BuildConfig { memory_budget: 1000, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let err = build_octree(pts.iter().copied().map(Ok::<_, Infallible>), bounds(&pts), &cfg, dir.path(), None)
            .unwrap_err();
        assert!(matches!(err, DatasetError::Build(BuildError::MemoryBudget { .. })), "{err}");
    }

    #[test]
    fn flipped_hierarchy_byte_names_the_file() {
        let pts = cloud(2000);
        let dir = tempfile::tempdir().unwrap();
        build_octree(pts.iter().copied().map(Ok::<_, Infallible>), bounds(&pts), &BuildConfig::default(), dir.path(), None)
            .unwrap();
        let h = dir.path().join(HIERARCHY_FILE);
        let mut bytes = fs::read(&h).unwrap();
        let i = bytes.len() / 2;
        bytes[i] ^= 0x01;
        fs::write(&h, bytes).unwrap();
        let err = LodDataset::open(dir.path()).unwrap_err();
        assert!(matches!(err, DatasetError::DigestMismatch { .. }));
        assert!(err.to_string().contains(HIERARCHY_FILE), "{err}");
    }

    #[test]
    fn truncated_bin_and_version_skew_rejected() {
        let pts = cloud(500);
        let dir = tempfile::tempdir().unwrap();
        build_octree(pts.iter().copied().map(Ok::<_, Infallible>), bounds(&pts), &BuildConfig::default(), dir.path(), None)
            .unwrap();
        let bin = dir.path().join(BIN_FILE);
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 16]).unwrap();
        assert!(matches!(LodDataset::open(dir.path()), Err(DatasetError::Truncated { .. })));
        fs::write(&bin, &bytes).unwrap();
        let m = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&m).unwrap().replace("\"version\": 1", "\"version\": 2");
        fs::write(&m, text).unwrap();
        assert!(matches!(LodDataset::open(dir.path()), Err(DatasetError::VersionSkew { found: 2, .. })));
    }

    #[test]
    fn corrupt_blob_names_the_node() {
        let pts = cloud(3000);
        let dir = tempfile::tempdir().unwrap();
        build_octree(pts.iter().copied().map(Ok::<_, Infallible>), bounds(&pts), &BuildConfig::default(), dir.path(), None)
            .unwrap();
        let ds = LodDataset::open(dir.path()).unwrap();
        let victim = ds.entries().iter().rfind(|e| e.num_points > 0).unwrap().clone();
        let bin = dir.path().join(BIN_FILE);
        let mut bytes = fs::read(&bin).unwrap();
        bytes[victim.byte_offset as usize] ^= 0xff;
        fs::write(&bin, bytes).unwrap();
        assert_eq!(LodDataset::open(dir.path()).unwrap().corrupt_nodes().unwrap(), vec![victim.name]);
    }

    #[test]
    fn unknown_node_is_an_error() {
        let pts = cloud(10);
        let dir = tempfile::tempdir().unwrap();
        build_octree(pts.iter().copied().map(Ok::<_, Infallible>), bounds(&pts), &BuildConfig::default(), dir.path(), None)
            .unwrap();
        assert!(matches!(read_node_points(dir.path(), "r777"), Err(DatasetError::UnknownNode(_))));
        assert!(matches!(read_node_points(dir.path(), "zzz"), Err(DatasetError::UnknownNode(_))));
    }
}
