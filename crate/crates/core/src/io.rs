//! File formats: edge lists, CSV matrices, embedding sidecars and JSON
//! summaries. Every writer goes through a temporary file in the target
//! directory followed by a rename.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embed::{Embedding, EmbeddingKind};
use crate::error::{Error, Result};
use crate::graph::{read_edge_list, write_edge_list, SymmetricGraph};
use crate::model::{LatentSample, ModelConfig, Provenance};
use crate::signature::Signature;

/// Writes `bytes` to `path` so that readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Seventeen significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

pub fn read_model_config(path: &Path) -> Result<ModelConfig> {
    read_json(path)
}

pub fn read_graph(path: &Path) -> Result<SymmetricGraph> {
    read_edge_list(BufReader::new(File::open(path)?), 0)
}

pub fn write_graph(path: &Path, graph: &SymmetricGraph) -> Result<()> {
    let mut buf = Vec::new();
    write_edge_list(graph, &mut buf)?;
    write_atomic(path, &buf)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, msg: format!("{other:?}") },
    }
}

/// CSV text with a header row and one formatted row per entry of `rows`.
pub fn csv_text<I, R>(header: &[String], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// `node,<prefix>1,..,<prefix>d` followed by one row per matrix row.
pub fn indexed_matrix_csv(m: &DMatrix<f64>, prefix: &str) -> Result<Vec<u8>> {
    let mut header = vec!["node".to_string()];
    header.extend((1..=m.ncols()).map(|c| format!("{prefix}{c}")));
    csv_text(
        &header,
        (0..m.nrows()).map(|i| {
            let mut row = vec![i.to_string()];
            row.extend((0..m.ncols()).map(|c| format_float(m[(i, c)])));
            row
        }),
    )
}

pub fn write_indexed_matrix(path: &Path, m: &DMatrix<f64>, prefix: &str) -> Result<()> {
    write_atomic(path, &indexed_matrix_csv(m, prefix)?)
}

/// Reads a CSV whose first column is a 0-based node index; rows may come in
/// any order but every index `0..n` must appear once.
pub fn read_indexed_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut r = csv::ReaderBuilder::new().from_path(path).map_err(csv_error)?;
    let header: Vec<String> = r.headers().map_err(csv_error)?.iter().skip(1).map(String::from).collect();
    let d = header.len();
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let line = k + 2;
        let parse_err = |msg: String| Error::Parse { line, msg };
        let node = rec[0].trim().parse::<usize>().map_err(|_| parse_err(format!("bad node index `{}`", &rec[0])))?;
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>().map_err(|_| parse_err(format!("bad number `{v}`"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != d {
            return Err(parse_err(format!("expected {d} values, got {}", values.len())));
        }
        rows.push((node, values));
    }
    rows.sort_by_key(|r| r.0);
    for (k, (node, _)) in rows.iter().enumerate() {
        if *node != k {
            return Err(Error::InvalidInput(format!("node indices must cover 0..{} exactly once", rows.len())));
        }
    }
    let m = DMatrix::from_fn(rows.len(), d, |i, c| rows[i].1[c]);
    Ok((header, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub kind: EmbeddingKind,
    pub p: usize,
    pub q: usize,
    pub eigenvalues: Vec<f64>,
}

/// The JSON file stored next to an embedding CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_embedding(path: &Path, embedding: &Embedding) -> Result<()> {
    write_indexed_matrix(path, &embedding.points, "x")?;
    let sidecar = EmbeddingSidecar {
        kind: embedding.kind,
        p: embedding.signature.p,
        q: embedding.signature.q,
        eigenvalues: embedding.eigenvalues.clone(),
    };
    write_json(&sidecar_path(path), &sidecar)
}

pub fn read_embedding(path: &Path) -> Result<Embedding> {
    let (_, points) = read_indexed_matrix(path)?;
    let side = sidecar_path(path);
    let sidecar: EmbeddingSidecar = read_json(&side)
        .map_err(|e| Error::InvalidInput(format!("embedding sidecar {}: {e}", side.display())))?;
    let signature = Signature::new(sidecar.p, sidecar.q);
    if signature.d() != points.ncols() || sidecar.eigenvalues.len() != points.ncols() {
        return Err(Error::DimensionMismatch { expected: points.ncols(), got: signature.d() });
    }
    Ok(Embedding { points, signature, eigenvalues: sidecar.eigenvalues, kind: sidecar.kind })
}

/// Community labels (`node,z`) or membership vectors (`node,pi1..piK`).
pub fn write_provenance(path: &Path, latent: &LatentSample) -> Result<()> {
    match &latent.provenance {
        Provenance::Communities(z) => write_labels(path, z),
        Provenance::Memberships(pi) => write_indexed_matrix(path, pi, "pi"),
        Provenance::Given => Err(Error::InvalidInput("latent positions have no block structure".into())),
    }
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let header = ["node".to_string(), "z".to_string()];
    let bytes = csv_text(&header, labels.iter().enumerate().map(|(i, z)| [i.to_string(), z.to_string()]))?;
    write_atomic(path, &bytes)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let (header, m) = read_indexed_matrix(path)?;
    if header.len() != 1 {
        return Err(Error::InvalidInput(format!("label file needs columns node,z; got {} value columns", header.len())));
    }
    m.iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidInput(format!("label {v} is not a non-negative integer")))
            }
        })
        .collect()
}

/// Row-major nested vectors, the JSON layout for matrices.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn embedding_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.csv");
        let e = Embedding {
            points: DMatrix::from_row_slice(3, 2, &[0.1, -0.2, 1.0 / 3.0, 2e-17, -5.5, 7.0]),
            signature: Signature::new(1, 1),
            eigenvalues: vec![2.5, -1.25],
            kind: EmbeddingKind::Laplacian,
        };
        write_embedding(&p, &e).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("node,x1,x2\n0,"));
        assert_eq!(read_embedding(&p).unwrap(), e);
        let side: serde_json::Value = read_json(&sidecar_path(&p)).unwrap();
        assert_eq!(side["kind"], "laplacian");
        assert_eq!(side["q"], 1);
    }

    #[test]
    fn missing_sidecar_and_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_indexed_matrix(&p, &DMatrix::from_element(2, 2, 1.0), "x").unwrap();
        assert!(matches!(read_embedding(&p), Err(Error::InvalidInput(_))));
        std::fs::write(&p, "node,x1\n0,1.0\n0,2.0\n").unwrap();
        assert!(read_indexed_matrix(&p).is_err());
        std::fs::write(&p, "node,x1\n0,abc\n").unwrap();
        assert!(matches!(read_indexed_matrix(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.csv");
        write_labels(&p, &[1, 0, 2]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "node,z\n0,1\n1,0\n2,2\n");
        assert_eq!(read_labels(&p).unwrap(), vec![1, 0, 2]);
    }

    proptest! {
        #[test]
        fn float_format_round_trips(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            prop_assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
    }
}
