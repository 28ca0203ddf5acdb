//! CSV tables, binary snapshots and run manifests.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Boundary, FieldKind, GridField, GridSpec};

pub const SNAPSHOT_MAGIC: &[u8; 9] = b"FRACFLOW1";

/// Scalars are written with 17 significant digits, so they round-trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// A header plus rows of preformatted cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w);
        wr.write_record(&self.header)?;
        for r in &self.rows {
            wr.write_record(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        let header = rd.headers()?.iter().map(String::from).collect();
        let rows = rd
            .records()
            .map(|r| r.map(|r| r.iter().map(String::from).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(CsvTable { header, rows })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub field: GridField,
    pub time: f64,
}

/// Layout (little-endian): magic, `u32` dim, `u64` dims, `f64` origin,
/// `f64` spacing, `f64` time, `u8` kind (0 phase, 1 scalar), then the
/// row-major `f64` payload.
pub fn write_snapshot(path: &Path, field: &GridField, time: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let g = field.grid();
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&(g.dim() as u32).to_le_bytes())?;
    for &n in g.dims() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for &v in g.origin().iter().chain(g.spacing()) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&time.to_le_bytes())?;
    w.write_all(&[match field.kind() {
        FieldKind::Phase => 0u8,
        FieldKind::Scalar => 1u8,
    }])?;
    for &v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot`]. The boundary condition
/// is not stored; the grid comes back periodic.
pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let mut cur = &bytes[..];
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(Error::Snapshot("truncated header or payload".into()));
        }
        let (a, b) = cur.split_at(n);
        cur = b;
        Ok(a)
    };
    if take(SNAPSHOT_MAGIC.len())? != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
    let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if dim == 0 || dim > 8 {
        return Err(Error::Snapshot(format!("implausible dimension {dim}")));
    }
    let mut dims = Vec::with_capacity(dim);
    for _ in 0..dim {
        dims.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
    }
    let mut origin = Vec::with_capacity(dim);
    for _ in 0..dim {
        origin.push(f64_at(take(8)?));
    }
    let mut spacing = Vec::with_capacity(dim);
    for _ in 0..dim {
        spacing.push(f64_at(take(8)?));
    }
    let time = f64_at(take(8)?);
    let kind = take(1)?[0];
    let len = dims.iter().try_fold(1usize, |a, &n| a.checked_mul(n));
    let len = len.ok_or_else(|| Error::Snapshot("dims overflow".into()))?;
    let payload = take(len.checked_mul(8).ok_or_else(|| Error::Snapshot("dims overflow".into()))?)?;
    let values: Vec<f64> = payload.chunks_exact(8).map(f64_at).collect();
    if !cur.is_empty() {
        return Err(Error::Snapshot(format!("{} trailing bytes", cur.len())));
    }
    let grid = GridSpec::new(dims, origin, spacing, Boundary::Periodic)
        .map_err(|e| Error::Snapshot(e.to_string()))?;
    let field = match kind {
        0 => GridField::phase(grid, values),
        1 => GridField::scalar(grid, values),
        k => return Err(Error::Snapshot(format!("unknown kind tag {k}"))),
    }
    .map_err(|e| Error::Snapshot(e.to_string()))?;
    Ok(Snapshot { field, time })
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(vec![8, 12], vec![-1.0, 0.5], vec![0.25, 0.125], Boundary::Periodic).unwrap()
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        CsvTable::new(&["a", "b"]).write(&p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "a,b\r\n");
        let back = CsvTable::read(&p).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn row_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut t = CsvTable::new(&["step", "time", "label"]);
        let x = 0.1 + 0.2;
        t.push(vec!["3".into(), fmt_f64(x), "a,\"b\"".into()]);
        t.write(&p).unwrap();
        let back = CsvTable::read(&p).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.rows[0][1].parse::<f64>().unwrap(), x);
    }

    #[test]
    fn many_rows_scale_linearly() {
        let dir = tempfile::tempdir().unwrap();
        let size = |n: usize| {
            let p = dir.path().join(format!("t{n}.csv"));
            let mut t = CsvTable::new(&["v"]);
            for _ in 0..n {
                t.push(vec![fmt_f64(1.0)]);
            }
            t.write(&p).unwrap();
            assert_eq!(CsvTable::read(&p).unwrap().len(), n);
            std::fs::metadata(&p).unwrap().len()
        };
        let (a, b) = (size(5_000), size(10_000));
        let row = fmt_f64(1.0).len() as u64 + 2;
        assert_eq!(b - a, 5_000 * row);
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.ffs");
        let f = GridField::ball(grid(), &[0.0, 1.2], 0.5).unwrap();
        write_snapshot(&p, &f, 0.125).unwrap();
        let len = std::fs::metadata(&p).unwrap().len() as usize;
        assert_eq!(len, 9 + 4 + 2 * 8 * 3 + 8 + 1 + 96 * 8);
        let s = read_snapshot(&p).unwrap();
        assert_eq!(s, Snapshot { field: f, time: 0.125 });

        let v: Vec<f64> = (0..96).map(|i| (i as f64).sin()).collect();
        let g = GridField::scalar(grid(), v).unwrap();
        write_snapshot(&p, &g, -1.0).unwrap();
        assert_eq!(read_snapshot(&p).unwrap().field, g);
    }

    #[test]
    fn snapshot_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.ffs");
        let f = GridField::constant_phase(grid(), true);
        write_snapshot(&p, &f, 0.0).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_snapshot(&p), Err(Error::Snapshot(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(read_snapshot(&p), Err(Error::Snapshot(_))));
        let mut half = bytes;
        let n = half.len();
        half[n - 8..].copy_from_slice(&0.5f64.to_le_bytes());
        std::fs::write(&p, &half).unwrap();
        assert!(matches!(read_snapshot(&p), Err(Error::Snapshot(_))));
    }
}
