//! File formats shared across the pipeline.
//!
//! Binary: "MGR1" graphs and "EMB1" embedding tables, little-endian, with
//! byte-offset-tracked readers so format violations report where they broke.
//! Text: tab-separated event logs, modality vector tables, task datasets, and
//! probe reports. Cell ids serialize as unsigned 64-bit decimals in text and
//! 8-byte little-endian values in binary.

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::{EventRecord, MobilityGraph};
use crate::hexgrid::{cell_of, CellId, GeoCoord, GridConfig};
use crate::probe::{TaskDataset, TaskUnit, UnitKind};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const GRAPH_MAGIC: &[u8; 4] = b"MGR1";
const EMB_MAGIC: &[u8; 4] = b"EMB1";

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn new(inner: R) -> Self {
        CountingReader { inner, offset: 0 }
    }

    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Format { offset: self.offset, msg: msg.into() }
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|e| Error::Format { offset: self.offset, msg: format!("short read: {e}") })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn read_f32(&mut self) -> Result<f32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(f32::from_le_bytes(b))
    }

    fn read_f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        if &b != magic {
            return Err(Error::Format {
                offset: 0,
                msg: format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&b),
                    String::from_utf8_lossy(magic)
                ),
            });
        }
        Ok(())
    }
}

fn checked_len(n: u64, what: &str, offset: u64) -> Result<usize> {
    const LIMIT: u64 = 1 << 33;
    if n > LIMIT {
        return Err(Error::Format { offset, msg: format!("{what} count {n} is implausible") });
    }
    Ok(n as usize)
}

// ---- MGR1 graph format ----

pub fn write_graph(path: impl AsRef<Path>, g: &MobilityGraph) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(GRAPH_MAGIC)?;
    w.write_all(&(g.len() as u64).to_le_bytes())?;
    w.write_all(&(g.num_arcs() as u64).to_le_bytes())?;
    for c in g.nodes() {
        w.write_all(&c.0.to_le_bytes())?;
    }
    for &o in g.row_offsets() {
        w.write_all(&(o as u64).to_le_bytes())?;
    }
    for &c in g.col_indices() {
        w.write_all(&c.to_le_bytes())?;
    }
    for &x in g.weights() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<MobilityGraph> {
    let mut r = CountingReader::new(BufReader::new(File::open(path)?));
    r.expect_magic(GRAPH_MAGIC)?;
    let n = checked_len(r.read_u64()?, "node", r.offset)?;
    let arcs = checked_len(r.read_u64()?, "arc", r.offset)?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        nodes.push(CellId(r.read_u64()?));
    }
    let mut row_offsets = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        row_offsets.push(r.read_u64()? as usize);
    }
    if *row_offsets.last().unwrap_or(&0) != arcs {
        return Err(r.fail(format!(
            "edge count {arcs} disagrees with final row offset {}",
            row_offsets.last().unwrap_or(&0)
        )));
    }
    let mut col_indices = Vec::with_capacity(arcs);
    for _ in 0..arcs {
        col_indices.push(r.read_u32()?);
    }
    let mut weights = Vec::with_capacity(arcs);
    for _ in 0..arcs {
        weights.push(r.read_f64()?);
    }
    let offset = r.offset;
    MobilityGraph::from_csr(nodes, row_offsets, col_indices, weights)
        .map_err(|e| Error::Format { offset, msg: e.to_string() })
}

// ---- EMB1 embedding format ----

pub fn write_embeddings(path: impl AsRef<Path>, t: &EmbeddingTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(EMB_MAGIC)?;
    w.write_all(&(t.len() as u64).to_le_bytes())?;
    w.write_all(&(t.dim() as u64).to_le_bytes())?;
    for c in t.cells() {
        w.write_all(&c.0.to_le_bytes())?;
    }
    for &x in t.data() {
        w.write_all(&(x as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let mut r = CountingReader::new(BufReader::new(File::open(path)?));
    r.expect_magic(EMB_MAGIC)?;
    let rows = checked_len(r.read_u64()?, "row", r.offset)?;
    let dim = checked_len(r.read_u64()?, "dim", r.offset)?;
    if rows.checked_mul(dim).is_none() {
        return Err(r.fail("rows x dim overflows"));
    }
    let mut cells = Vec::with_capacity(rows);
    for _ in 0..rows {
        cells.push(CellId(r.read_u64()?));
    }
    let mut data = Vec::with_capacity(rows * dim);
    for _ in 0..rows * dim {
        data.push(r.read_f32()? as f64);
    }
    let offset = r.offset;
    EmbeddingTable::new(cells, dim, data).map_err(|e| Error::Format { offset, msg: e.to_string() })
}

// ---- event logs ----

/// Parse a tab-separated event stream. Rows are either pre-tokenized
/// `entity \t cell_id \t bucket` or raw `entity \t lat \t lon \t bucket`;
/// raw rows require a grid config for tokenization.
pub fn parse_events(
    reader: impl BufRead,
    grid: Option<&GridConfig>,
) -> Result<Vec<EventRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let fail = |msg: String| Error::Parse { line: lineno, msg };
        let record = match fields.len() {
            3 => {
                let cell = fields[1]
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| fail(format!("cell id '{}': {e}", fields[1])))?;
                let bucket = fields[2]
                    .trim()
                    .parse::<u32>()
                    .map_err(|e| fail(format!("bucket '{}': {e}", fields[2])))?;
                EventRecord { entity: fields[0].to_string(), cell: CellId(cell), bucket }
            }
            4 => {
                let cfg = grid.ok_or_else(|| {
                    fail("lat/lon row but no grid config given for tokenization".into())
                })?;
                let lat = fields[1]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| fail(format!("lat '{}': {e}", fields[1])))?;
                let lon = fields[2]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| fail(format!("lon '{}': {e}", fields[2])))?;
                let bucket = fields[3]
                    .trim()
                    .parse::<u32>()
                    .map_err(|e| fail(format!("bucket '{}': {e}", fields[3])))?;
                let cell = cell_of(GeoCoord { lat, lon }, cfg)
                    .map_err(|e| fail(e.to_string()))?;
                EventRecord { entity: fields[0].to_string(), cell, bucket }
            }
            k => return Err(fail(format!("expected 3 or 4 tab-separated fields, got {k}"))),
        };
        out.push(record);
    }
    Ok(out)
}

pub fn read_events(path: impl AsRef<Path>, grid: Option<&GridConfig>) -> Result<Vec<EventRecord>> {
    parse_events(BufReader::new(File::open(path)?), grid)
}

pub fn write_events(path: impl AsRef<Path>, events: &[EventRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for ev in events {
        writeln!(w, "{}\t{}\t{}", ev.entity, ev.cell, ev.bucket)?;
    }
    w.flush()?;
    Ok(())
}

// ---- graph text interchange ----

/// `cell_a \t cell_b \t weight`, one undirected edge per line.
pub fn write_graph_tsv(path: impl AsRef<Path>, g: &MobilityGraph) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (a, b, weight) in g.undirected_edges() {
        writeln!(w, "{}\t{}\t{}", g.nodes()[a as usize], g.nodes()[b as usize], weight)?;
    }
    w.flush()?;
    Ok(())
}

/// Import an undirected edge list; duplicate pairs sum their weights.
pub fn read_graph_tsv(path: impl AsRef<Path>) -> Result<MobilityGraph> {
    let reader = BufReader::new(File::open(path)?);
    let mut edges: std::collections::BTreeMap<(u64, u64), f64> = std::collections::BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |msg: String| Error::Parse { line: lineno, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(fail(format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        let a = fields[0]
            .trim()
            .parse::<u64>()
            .map_err(|e| fail(format!("cell '{}': {e}", fields[0])))?;
        let b = fields[1]
            .trim()
            .parse::<u64>()
            .map_err(|e| fail(format!("cell '{}': {e}", fields[1])))?;
        let w = fields[2]
            .trim()
            .parse::<f64>()
            .map_err(|e| fail(format!("weight '{}': {e}", fields[2])))?;
        if a == b {
            return Err(fail(format!("self-loop on cell {a}")));
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(fail(format!("weight {w} must be positive")));
        }
        *edges.entry((a.min(b), a.max(b))).or_insert(0.0) += w;
    }
    MobilityGraph::from_weighted_pairs(edges)
}

// ---- modality vector tables ----

/// `cell_id \t v1,v2,...` per line; all rows must share one dimension.
pub fn read_modality_tsv(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let reader = BufReader::new(File::open(path)?);
    let mut cells = Vec::new();
    let mut data = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |msg: String| Error::Parse { line: lineno, msg };
        let (cell_s, vec_s) = line
            .split_once('\t')
            .ok_or_else(|| fail("expected 'cell<TAB>v1,v2,...'".into()))?;
        let cell = cell_s
            .trim()
            .parse::<u64>()
            .map_err(|e| fail(format!("cell id '{cell_s}': {e}")))?;
        let mut row = Vec::new();
        for piece in vec_s.split(',') {
            row.push(
                piece
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| fail(format!("component '{piece}': {e}")))?,
            );
        }
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(fail(format!("dimension {} differs from first row's {d}", row.len())))
            }
            _ => {}
        }
        cells.push(CellId(cell));
        data.extend_from_slice(&row);
    }
    let dim = dim.ok_or_else(|| Error::Parse { line: 0, msg: "empty modality table".into() })?;
    EmbeddingTable::new(cells, dim, data).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })
}

pub fn write_modality_tsv(path: impl AsRef<Path>, t: &EmbeddingTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, cell) in t.cells().iter().enumerate() {
        let row: Vec<String> = t.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}\t{}", cell, row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

// ---- task datasets ----

/// First line is the unit kind (`point`, `grid`, or `admin`); each row is
/// `unit_id \t cell1,cell2,... \t target`.
pub fn read_task(path: impl AsRef<Path>, name: &str) -> Result<TaskDataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let kind = loop {
        match lines.next() {
            Some((idx, line)) => {
                let line = line.map_err(|e| Error::Parse { line: idx + 1, msg: e.to_string() })?;
                let t = line.trim();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                break UnitKind::parse(t).ok_or(Error::Parse {
                    line: idx + 1,
                    msg: format!("unknown unit kind '{t}'"),
                })?;
            }
            None => return Err(Error::Parse { line: 0, msg: "empty task file".into() }),
        }
    };
    let mut units = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |msg: String| Error::Parse { line: lineno, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(fail(format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        let mut cells = Vec::new();
        for piece in fields[1].split(',') {
            let id = piece
                .trim()
                .parse::<u64>()
                .map_err(|e| fail(format!("cell id '{piece}': {e}")))?;
            cells.push(CellId(id));
        }
        let target = fields[2]
            .trim()
            .parse::<f64>()
            .map_err(|e| fail(format!("target '{}': {e}", fields[2])))?;
        units.push(TaskUnit { unit_id: fields[0].to_string(), cells, target });
    }
    TaskDataset::new(name.to_string(), kind, units)
}

pub fn write_task(path: impl AsRef<Path>, task: &TaskDataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", task.unit_kind.as_str())?;
    for u in &task.units {
        let cells: Vec<String> = u.cells.iter().map(|c| c.to_string()).collect();
        writeln!(w, "{}\t{}\t{}", u.unit_id, cells.join(","), u.target)?;
    }
    w.flush()?;
    Ok(())
}

// ---- digests ----

/// FNV-1a 64-bit digest of a file, hex-encoded. Manifest fingerprinting, not
/// cryptography.
pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let mut f = BufReader::new(File::open(path)?);
    let mut hash: u64 = 0xCBF2_9CE4_8422_2325;
    let mut buf = [0u8; 8192];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        for &b in &buf[..n] {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    Ok(format!("{hash:016x}"))
}
