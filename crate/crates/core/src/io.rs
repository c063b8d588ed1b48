//! Plain binary containers and CSV exports.
//!
//! Binary payloads are little-endian f64 after a one-line ASCII header.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::forward::{CollarJet, DtnKind, DtnMatrix};
use crate::mesh::{Domain, ScalarField};

const GHOST: i64 = 2;

fn read_header<R: BufRead>(r: &mut R, magic: &str) -> Result<Vec<String>> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
    if words.len() < 2 || words[0] != magic || words[1] != "v1" {
        return Err(Error::Format(format!("expected '{magic} v1' header, got '{}'", line.trim_end())));
    }
    Ok(words[2..].to_vec())
}

fn parse<T: std::str::FromStr>(w: Option<&String>, what: &str) -> Result<T> {
    w.and_then(|s| s.parse().ok()).ok_or_else(|| Error::Format(format!("bad or missing {what} in header")))
}

fn write_f64s<W: Write>(w: &mut W, xs: impl IntoIterator<Item = f64>) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Field sampled on the physical n1 × n_perp × n_perp box; cells without a node are 0.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldBox {
    pub dims: [usize; 3],
    pub values: Vec<C64>,
}

impl FieldBox {
    pub fn from_nodes(d: &Domain, nodal: &[C64]) -> Self {
        let dims = [d.n1, d.n_perp, d.n_perp];
        let mut values = vec![C64::new(0.0, 0.0); dims[0] * dims[1] * dims[2]];
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let c = [i as i64 + GHOST, j as i64 + GHOST, k as i64 + GHOST];
                    if let Some(v) = d.node_at_cell(c).filter(|&v| v < nodal.len()) {
                        values[(i * dims[1] + j) * dims[2] + k] = nodal[v];
                    }
                }
            }
        }
        FieldBox { dims, values }
    }

    /// Nodal values for every node of `d` that lies in the box.
    pub fn to_field(&self, d: &Domain) -> Result<ScalarField> {
        if self.dims != [d.n1, d.n_perp, d.n_perp] {
            return Err(Error::Format(format!("field box {:?} does not match the domain grid", self.dims)));
        }
        let mut u = ScalarField::zeros(d);
        for (v, c) in d.cells.iter().enumerate() {
            let idx: Vec<i64> = c.iter().map(|&x| x as i64 - GHOST).collect();
            if idx.iter().zip(&self.dims).all(|(&x, &n)| x >= 0 && (x as usize) < n) {
                let (i, j, k) = (idx[0] as usize, idx[1] as usize, idx[2] as usize);
                u.values[v] = self.values[(i * self.dims[1] + j) * self.dims[2] + k];
            }
        }
        Ok(u)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "biharm-field v1 {} {} {}", self.dims[0], self.dims[1], self.dims[2])?;
        write_f64s(&mut w, self.values.iter().flat_map(|z| [z.re, z.im]))
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let h = read_header(&mut r, "biharm-field")?;
        let dims = [parse(h.first(), "n1")?, parse(h.get(1), "n_perp")?, parse(h.get(2), "n_perp")?];
        let n = dims[0] * dims[1] * dims[2];
        let raw = read_f64s(&mut r, 2 * n)?;
        Ok(FieldBox { dims, values: raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect() })
    }
}

/// Dense collar operator with weights; `label` carries free-form header metadata.
#[derive(Clone, Debug)]
pub struct OperatorDump {
    pub kind: String,
    pub label: Vec<(String, f64)>,
    pub entries: Mat<f64>,
    pub weights: Vec<f64>,
}

impl OperatorDump {
    pub fn of_dtn(m: &DtnMatrix) -> Self {
        let kind = match m.kind {
            DtnKind::Full => "dtn-full",
            DtnKind::Difference => "dtn-difference",
        };
        OperatorDump { kind: kind.into(), label: Vec::new(), entries: m.entries.clone(), weights: m.weights.clone() }
    }

    pub fn to_dtn(&self) -> Result<DtnMatrix> {
        let kind = match self.kind.as_str() {
            "dtn-full" => DtnKind::Full,
            "dtn-difference" => DtnKind::Difference,
            k => return Err(Error::Format(format!("'{k}' is not a DtN dump"))),
        };
        Ok(DtnMatrix { entries: self.entries.clone(), weights: self.weights.clone(), kind })
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.weights.len();
        write!(w, "biharm-dtn v1 {} {n}", self.kind)?;
        for (k, v) in &self.label {
            write!(w, " {k}={v}")?;
        }
        writeln!(w)?;
        write_f64s(&mut w, (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| self.entries[(i, j)]))?;
        write_f64s(&mut w, self.weights.iter().copied())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let h = read_header(&mut r, "biharm-dtn")?;
        let kind = h.first().cloned().ok_or_else(|| Error::Format("missing kind".into()))?;
        let n: usize = parse(h.get(1), "dimension")?;
        let mut label = Vec::new();
        for kv in &h[2..] {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Format(format!("bad header field '{kv}'")))?;
            label.push((k.to_string(), v.parse().map_err(|_| Error::Format(format!("bad value in '{kv}'")))?));
        }
        let raw = read_f64s(&mut r, n * n)?;
        let weights = read_f64s(&mut r, n)?;
        Ok(OperatorDump { kind, label, entries: Mat::from_fn(n, n, |i, j| raw[i * n + j]), weights })
    }
}

/// Complex collar vector.
pub fn write_jet<W: Write>(mut w: W, jet: &CollarJet) -> Result<()> {
    writeln!(w, "biharm-jet v1 {}", jet.len())?;
    write_f64s(&mut w, jet.values.iter().flat_map(|z| [z.re, z.im]))
}

pub fn read_jet<R: Read>(r: R) -> Result<CollarJet> {
    let mut r = BufReader::new(r);
    let h = read_header(&mut r, "biharm-jet")?;
    let n: usize = parse(h.first(), "length")?;
    let raw = read_f64s(&mut r, 2 * n)?;
    Ok(CollarJet { values: raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect() })
}

/// Transversal plane `i` (x₁ cell index) of a field as CSV: y,z,re,im.
pub fn write_plane_csv<W: Write>(mut w: W, d: &Domain, u: &ScalarField, i: usize) -> Result<()> {
    writeln!(w, "y,z,re,im")?;
    for (v, c) in d.cells.iter().enumerate().take(d.n_interior) {
        if c[0] as i64 - GHOST == i as i64 {
            let z = u.values[v];
            writeln!(w, "{},{},{:e},{:e}", d.pos[v][1], d.pos[v][2], z.re, z.im)?;
        }
    }
    Ok(())
}

pub fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_domain, DomainConfig};

    fn domain() -> Domain {
        build_domain(&DomainConfig { x1_extent: 0.5, transversal_radius: 0.4, n1: 8, n_perp: 9 }).unwrap()
    }

    #[test]
    fn field_round_trip() {
        let d = domain();
        let u = ScalarField::from_fn(&d, |x| C64::new(x[0] + x[1], x[2]));
        let b = FieldBox::from_nodes(&d, &u.values);
        let mut buf = Vec::new();
        b.write(&mut buf).unwrap();
        assert!(buf.starts_with(b"biharm-field v1 8 9 9\n"));
        let back = FieldBox::read(&buf[..]).unwrap();
        assert_eq!(back, b);
        let v = back.to_field(&d).unwrap();
        for k in 0..d.n_interior {
            assert_eq!(v.values[k], u.values[k]);
        }
    }

    #[test]
    fn dump_round_trip_keeps_label() {
        let dump = OperatorDump {
            kind: "single-layer".into(),
            label: vec![("h".into(), 0.05), ("lambda".into(), 0.5)],
            entries: Mat::from_fn(3, 3, |i, j| (i * 3 + j) as f64),
            weights: vec![1.0, 2.0, 3.0],
        };
        let mut buf = Vec::new();
        dump.write(&mut buf).unwrap();
        let back = OperatorDump::read(&buf[..]).unwrap();
        assert_eq!(back.label, dump.label);
        assert_eq!(back.entries, dump.entries);
        assert!(back.to_dtn().is_err());
    }

    #[test]
    fn truncated_and_foreign_files_are_rejected() {
        let jet = CollarJet { values: vec![C64::new(1.0, -2.0); 4] };
        let mut buf = Vec::new();
        write_jet(&mut buf, &jet).unwrap();
        assert_eq!(read_jet(&buf[..]).unwrap(), jet);
        assert!(matches!(read_jet(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(FieldBox::read(&buf[..]), Err(Error::Format(_))));
    }
}
