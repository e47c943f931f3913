//! Colored point cloud files: whitespace `x y z r g b` text, uncompressed LAS
//! (point formats 2 and 3) and the internal `LTPC` binary.
//!
//! Readers stream one record at a time through a fixed-size buffer.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use labtwin_core::geom::{Aabb, BoundsAccumulator};
use labtwin_core::point::ColorPoint;
use thiserror::Error;

const BUFFER_BYTES: usize = 1 << 16;

pub const LTPC_MAGIC: &[u8; 4] = b"LTPC";
pub const LTPC_VERSION: u32 = 1;
const LTPC_HEADER: usize = 16;
const LTPC_RECORD: usize = 32;

/// Coordinate resolution of written LAS files, meters.
pub const LAS_SCALE: f64 = 0.001;
const LAS_HEADER_SIZE: u16 = 227;
const LAS_WRITE_FORMAT: u8 = 2;
const LAS_FORMAT2_LEN: u16 = 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    XyzrgbText,
    Las,
    InternalBinary,
}

impl CloudFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            CloudFormat::XyzrgbText => "xyzrgb",
            CloudFormat::Las => "las",
            CloudFormat::InternalBinary => "internal-binary",
        }
    }

    /// Guess from a file extension: `.las`, `.ltpc`/`.bin`, anything else text.
    pub fn from_extension(path: &Path) -> CloudFormat {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("las") => CloudFormat::Las,
            Some("ltpc") | Some("bin") => CloudFormat::InternalBinary,
            _ => CloudFormat::XyzrgbText,
        }
    }
}

impl fmt::Display for CloudFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CloudFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xyzrgb" | "xyzrgb-text" | "text" => Ok(CloudFormat::XyzrgbText),
            "las" => Ok(CloudFormat::Las),
            "internal-binary" | "ltpc" | "binary" => Ok(CloudFormat::InternalBinary),
            other => Err(format!("unknown cloud format {other:?} (expected xyzrgb, las or internal-binary)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: line {line}: {message}")]
    Line { path: PathBuf, line: u64, message: String },
    #[error("{path}: byte offset {offset}: {message}")]
    Record { path: PathBuf, offset: u64, message: String },
    #[error("{path}: unsupported LAS point format {format} (supported: 2, 3)")]
    UnsupportedLasFormat { path: PathBuf, format: u8 },
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: u64 },
}

impl CloudError {
    fn io(path: &Path, source: io::Error) -> Self {
        CloudError::Io { path: path.to_path_buf(), source }
    }

    fn record(path: &Path, offset: u64, message: impl Into<String>) -> Self {
        CloudError::Record { path: path.to_path_buf(), offset, message: message.into() }
    }
}

/// Count and tight bounds of everything read or written so far.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CloudSummary {
    pub count: u64,
    /// `None` for an empty cloud.
    pub bounds: Option<Aabb>,
}

#[derive(Debug)]
struct LasLayout {
    scale: [f64; 3],
    offset: [f64; 3],
    record_len: usize,
    rgb_at: usize,
}

enum Source {
    Text { reader: BufReader<File>, line: String, line_no: u64 },
    Las { reader: BufReader<File>, layout: LasLayout, remaining: u64, offset: u64, record: Vec<u8> },
    Binary { reader: BufReader<File>, remaining: u64, offset: u64 },
}

/// Streaming reader over one cloud file. Yields points in file order; the
/// summary is complete once the iterator is exhausted.
pub struct CloudReader {
    path: PathBuf,
    source: Source,
    acc: BoundsAccumulator,
    declared: Option<u64>,
    failed: bool,
}

impl fmt::Debug for CloudReader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CloudReader").field("path", &self.path).field("read", &self.acc.count()).finish()
    }
}

fn read_exact_at(reader: &mut impl Read, buf: &mut [u8], path: &Path, offset: u64, what: &str) -> Result<(), CloudError> {
    reader.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CloudError::record(path, offset, format!("file truncated inside {what}")),
        _ => CloudError::io(path, e),
    })
}

fn le_f64(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes(b[at..at + 2].try_into().unwrap())
}

impl CloudReader {
    pub fn open(path: impl AsRef<Path>, format: CloudFormat) -> Result<Self, CloudError> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| CloudError::io(&path, e))?;
        let mut reader = BufReader::with_capacity(BUFFER_BYTES, file);
        let (source, declared) = match format {
            CloudFormat::XyzrgbText => (Source::Text { reader, line: String::new(), line_no: 0 }, None),
            CloudFormat::InternalBinary => {
                let mut head = [0u8; LTPC_HEADER];
                let n = read_full(&mut reader, &mut head).map_err(|e| CloudError::io(&path, e))?;
                if n == 0 {
                    // A zero-length file is an empty cloud.
                    (Source::Binary { reader, remaining: 0, offset: 0 }, Some(0))
                } else {
                    if n < LTPC_HEADER {
                        return Err(CloudError::record(&path, n as u64, "file truncated inside header"));
                    }
                    if &head[0..4] != LTPC_MAGIC {
                        return Err(CloudError::record(&path, 0, "missing LTPC magic"));
                    }
                    let version = le_u32(&head, 4);
                    if version != LTPC_VERSION {
                        return Err(CloudError::record(&path, 4, format!("unsupported LTPC version {version}")));
                    }
                    let count = u64::from_le_bytes(head[8..16].try_into().unwrap());
                    (Source::Binary { reader, remaining: count, offset: LTPC_HEADER as u64 }, Some(count))
                }
            }
            CloudFormat::Las => {
                let (layout, count, data_offset) = read_las_header(&mut reader, &path)?;
                reader.seek(SeekFrom::Start(data_offset)).map_err(|e| CloudError::io(&path, e))?;
                let record = vec![0u8; layout.record_len];
                (Source::Las { reader, layout, remaining: count, offset: data_offset, record }, Some(count))
            }
        };
        Ok(CloudReader { path, source, acc: BoundsAccumulator::new(), declared, failed: false })
    }

    /// Record count announced by the file header, if the format has one.
    pub fn declared_count(&self) -> Option<u64> {
        self.declared
    }

    pub fn summary(&self) -> CloudSummary {
        CloudSummary { count: self.acc.count(), bounds: self.acc.bounds() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn next_point(&mut self) -> Result<Option<ColorPoint>, CloudError> {
        let path = &self.path;
        match &mut self.source {
            Source::Text { reader, line, line_no } => loop {
                line.clear();
                let n = reader.read_line(line).map_err(|e| CloudError::io(path, e))?;
                if n == 0 {
                    return Ok(None);
                }
                *line_no += 1;
                let t = line.trim();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                return parse_text_line(t).map(Some).map_err(|message| CloudError::Line {
                    path: path.clone(),
                    line: *line_no,
                    message,
                });
            },
            Source::Binary { reader, remaining, offset } => {
                if *remaining == 0 {
                    let mut probe = [0u8; 1];
                    let extra = read_full(reader, &mut probe).map_err(|e| CloudError::io(path, e))?;
                    if extra != 0 {
                        return Err(CloudError::record(path, *offset, "trailing bytes after the declared records"));
                    }
                    return Ok(None);
                }
                let mut rec = [0u8; LTPC_RECORD];
                read_exact_at(reader, &mut rec, path, *offset, "a point record")?;
                let p = ColorPoint::new(le_f64(&rec, 0), le_f64(&rec, 8), le_f64(&rec, 16), rec[24], rec[25], rec[26]);
                if !p.is_finite() {
                    return Err(CloudError::record(path, *offset, "non-finite coordinate"));
                }
                *remaining -= 1;
                *offset += LTPC_RECORD as u64;
                Ok(Some(p))
            }
            Source::Las { reader, layout, remaining, offset, record } => {
                if *remaining == 0 {
                    return Ok(None);
                }
                read_exact_at(reader, record, path, *offset, "a point record")?;
                let coord = |i: usize| {
                    let raw = i32::from_le_bytes(record[i * 4..i * 4 + 4].try_into().unwrap());
                    raw as f64 * layout.scale[i] + layout.offset[i]
                };
                let c = |k: usize| (le_u16(record, layout.rgb_at + 2 * k) >> 8) as u8;
                let p = ColorPoint::new(coord(0), coord(1), coord(2), c(0), c(1), c(2));
                *remaining -= 1;
                *offset += layout.record_len as u64;
                Ok(Some(p))
            }
        }
    }
}

impl Iterator for CloudReader {
    type Item = Result<ColorPoint, CloudError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_point() {
            Ok(Some(p)) => {
                self.acc.add(p.position());
                Some(Ok(p))
            }
            Ok(None) => None,
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

fn read_full(reader: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match reader.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

fn parse_text_line(t: &str) -> Result<ColorPoint, String> {
    let mut fields = t.split_whitespace();
    let mut coord = |axis: &str| -> Result<f64, String> {
        let s = fields.next().ok_or_else(|| format!("expected 6 fields, missing {axis}"))?;
        let v: f64 = s.parse().map_err(|_| format!("bad {axis} coordinate {s:?}"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("non-finite {axis} coordinate {s:?}"))
        }
    };
    let (x, y, z) = (coord("x")?, coord("y")?, coord("z")?);
    let mut channel = |name: &str| -> Result<u8, String> {
        let s = fields.next().ok_or_else(|| format!("expected 6 fields, missing {name}"))?;
        s.parse().map_err(|_| format!("bad {name} channel {s:?} (expected integer 0-255)"))
    };
    let (r, g, b) = (channel("r")?, channel("g")?, channel("b")?);
    if let Some(extra) = fields.next() {
        return Err(format!("expected 6 fields, found extra {extra:?}"));
    }
    Ok(ColorPoint::new(x, y, z, r, g, b))
}

fn read_las_header(reader: &mut BufReader<File>, path: &Path) -> Result<(LasLayout, u64, u64), CloudError> {
    let mut h = [0u8; LAS_HEADER_SIZE as usize];
    read_exact_at(reader, &mut h, path, 0, "the LAS header")?;
    if &h[0..4] != b"LASF" {
        return Err(CloudError::record(path, 0, "missing LASF signature"));
    }
    let (major, minor) = (h[24], h[25]);
    if major != 1 || minor > 4 {
        return Err(CloudError::record(path, 24, format!("unsupported LAS version {major}.{minor}")));
    }
    let data_offset = le_u32(&h, 96) as u64;
    let format = h[104] & 0x3f;
    let record_len = le_u16(&h, 105) as usize;
    let mut count = le_u32(&h, 107) as u64;
    let rgb_at = match format {
        2 => 20,
        3 => 28,
        _ => return Err(CloudError::UnsupportedLasFormat { path: path.to_path_buf(), format }),
    };
    if record_len < rgb_at + 6 {
        return Err(CloudError::record(path, 105, format!("record length {record_len} too short for format {format}")));
    }
    if minor >= 4 && count == 0 {
        // LAS 1.4 keeps the full count in a 64-bit field after the legacy header.
        let mut ext = [0u8; 8];
        reader.seek(SeekFrom::Start(247)).map_err(|e| CloudError::io(path, e))?;
        read_exact_at(reader, &mut ext, path, 247, "the LAS 1.4 header")?;
        count = u64::from_le_bytes(ext);
    }
    let layout = LasLayout {
        scale: [le_f64(&h, 131), le_f64(&h, 139), le_f64(&h, 147)],
        offset: [le_f64(&h, 155), le_f64(&h, 163), le_f64(&h, 171)],
        record_len,
        rgb_at,
    };
    if layout.scale.iter().any(|s| !(s.is_finite() && *s != 0.0)) {
        return Err(CloudError::record(path, 131, "invalid coordinate scale"));
    }
    Ok((layout, count, data_offset))
}

/// Opens a streaming reader.
pub fn read_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<CloudReader, CloudError> {
    CloudReader::open(path, format)
}

/// Reads a whole file into memory.
pub fn read_cloud_all(path: impl AsRef<Path>, format: CloudFormat) -> Result<(Vec<ColorPoint>, CloudSummary), CloudError> {
    let mut reader = CloudReader::open(path, format)?;
    let points = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((points, reader.summary()))
}

/// Streams a file once for its count and bounds.
pub fn scan_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<CloudSummary, CloudError> {
    let mut reader = CloudReader::open(path, format)?;
    for p in reader.by_ref() {
        p?;
    }
    Ok(reader.summary())
}

/// Writes `points` in `format`; returns the number written.
pub fn write_cloud<I>(points: I, path: impl AsRef<Path>, format: CloudFormat) -> Result<u64, CloudError>
where
    I: IntoIterator<Item = ColorPoint>,
{
    try_write_cloud(points.into_iter().map(Ok::<_, CloudError>), path, format).map(|s| s.count)
}

/// Like [`write_cloud`] over a fallible stream; returns the written summary.
pub fn try_write_cloud<I, E>(points: I, path: impl AsRef<Path>, format: CloudFormat) -> Result<CloudSummary, E>
where
    I: IntoIterator<Item = Result<ColorPoint, E>>,
    E: From<CloudError>,
{
    let path = path.as_ref();
    let io = |e: io::Error| CloudError::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut w = BufWriter::with_capacity(BUFFER_BYTES, file);
    let mut acc = BoundsAccumulator::new();
    match format {
        CloudFormat::XyzrgbText => {
            for p in points {
                let p = p?;
                check_finite(&p, acc.count())?;
                writeln!(w, "{} {} {} {} {} {}", p.x, p.y, p.z, p.r, p.g, p.b).map_err(io)?;
                acc.add(p.position());
            }
        }
        CloudFormat::InternalBinary => {
            w.write_all(&[0u8; LTPC_HEADER]).map_err(io)?;
            for p in points {
                let p = p?;
                check_finite(&p, acc.count())?;
                let mut rec = [0u8; LTPC_RECORD];
                rec[0..8].copy_from_slice(&p.x.to_le_bytes());
                rec[8..16].copy_from_slice(&p.y.to_le_bytes());
                rec[16..24].copy_from_slice(&p.z.to_le_bytes());
                rec[24..27].copy_from_slice(&p.rgb());
                w.write_all(&rec).map_err(io)?;
                acc.add(p.position());
            }
            let mut head = [0u8; LTPC_HEADER];
            head[0..4].copy_from_slice(LTPC_MAGIC);
            head[4..8].copy_from_slice(&LTPC_VERSION.to_le_bytes());
            head[8..16].copy_from_slice(&acc.count().to_le_bytes());
            w.seek(SeekFrom::Start(0)).map_err(io)?;
            w.write_all(&head).map_err(io)?;
        }
        CloudFormat::Las => {
            w.write_all(&[0u8; LAS_HEADER_SIZE as usize]).map_err(io)?;
            let mut offset: Option<[f64; 3]> = None;
            for p in points {
                let p = p?;
                check_finite(&p, acc.count())?;
                // Offsets come from the first point so coordinates stay in i32 range.
                let o = *offset.get_or_insert([p.x.floor(), p.y.floor(), p.z.floor()]);
                let mut rec = [0u8; LAS_FORMAT2_LEN as usize];
                for (i, v) in [p.x, p.y, p.z].into_iter().enumerate() {
                    let q = ((v - o[i]) / LAS_SCALE).round();
                    if !(q >= i32::MIN as f64 && q <= i32::MAX as f64) {
                        return Err(CloudError::record(path, 0, format!("point {} out of LAS coordinate range", acc.count())).into());
                    }
                    rec[i * 4..i * 4 + 4].copy_from_slice(&(q as i32).to_le_bytes());
                }
                rec[14] = 1; // single return
                for (k, c) in p.rgb().into_iter().enumerate() {
                    rec[20 + 2 * k..22 + 2 * k].copy_from_slice(&(c as u16 * 257).to_le_bytes());
                }
                w.write_all(&rec).map_err(io)?;
                acc.add(p.position());
            }
            let header = las_header(acc.count(), acc.bounds(), offset.unwrap_or([0.0; 3]));
            let header = header.map_err(|m| CloudError::record(path, 107, m))?;
            w.seek(SeekFrom::Start(0)).map_err(io)?;
            w.write_all(&header).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;
    Ok(CloudSummary { count: acc.count(), bounds: acc.bounds() })
}

fn check_finite(p: &ColorPoint, index: u64) -> Result<(), CloudError> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(CloudError::NonFinite { index })
    }
}

fn las_header(count: u64, bounds: Option<Aabb>, offset: [f64; 3]) -> Result<[u8; LAS_HEADER_SIZE as usize], String> {
    let count32 = u32::try_from(count).map_err(|_| format!("{count} points exceed the LAS 1.2 record limit"))?;
    let mut h = [0u8; LAS_HEADER_SIZE as usize];
    h[0..4].copy_from_slice(b"LASF");
    h[24] = 1;
    h[25] = 2;
    let name = b"labtwin";
    h[26..26 + name.len()].copy_from_slice(name);
    h[58..58 + name.len()].copy_from_slice(name);
    h[94..96].copy_from_slice(&LAS_HEADER_SIZE.to_le_bytes());
    h[96..100].copy_from_slice(&(LAS_HEADER_SIZE as u32).to_le_bytes());
    h[104] = LAS_WRITE_FORMAT;
    h[105..107].copy_from_slice(&LAS_FORMAT2_LEN.to_le_bytes());
    h[107..111].copy_from_slice(&count32.to_le_bytes());
    h[111..115].copy_from_slice(&count32.to_le_bytes());
    for (i, at) in [131, 139, 147].into_iter().enumerate() {
        h[at..at + 8].copy_from_slice(&LAS_SCALE.to_le_bytes());
        h[at + 24..at + 32].copy_from_slice(&offset[i].to_le_bytes());
    }
    if let Some(b) = bounds {
        let pairs = [(b.max.x, b.min.x), (b.max.y, b.min.y), (b.max.z, b.min.z)];
        for (i, (hi, lo)) in pairs.into_iter().enumerate() {
            let at = 179 + 16 * i;
            h[at..at + 8].copy_from_slice(&hi.to_le_bytes());
            h[at + 8..at + 16].copy_from_slice(&lo.to_le_bytes());
        }
    }
    Ok(h)
}
