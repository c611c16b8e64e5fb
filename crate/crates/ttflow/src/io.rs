//! File formats: binary tensor-train dumps, CSV reports, MatrixMarket
//! exports.
//!
//! The `.tt3` format is: magic bytes `TT3\0`, then five little-endian
//! 64-bit unsigned integers (three mode sizes, two ranks), then the three
//! cores as contiguous little-endian IEEE-754 doubles in row-major order.

use crate::linalg::{sp_iter, sp_nnz, SpMat};
use crate::tt::TensorTrain3;
use ndarray::{Array2, Array3};
use std::io::{self, Read, Write};
use std::path::Path;

const TT3_MAGIC: &[u8; 4] = b"TT3\0";

pub fn write_tt3(path: &Path, t: &TensorTrain3) -> io::Result<()> {
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(TT3_MAGIC)?;
    let (n1, n2, n3) = t.mode_sizes();
    let (k1, k2) = t.ranks();
    for v in [n1, n2, n3, k1, k2] {
        f.write_all(&(v as u64).to_le_bytes())?;
    }
    for v in t.core1().iter() {
        f.write_all(&v.to_le_bytes())?;
    }
    for v in t.core2().iter() {
        f.write_all(&v.to_le_bytes())?;
    }
    for v in t.core3().iter() {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()
}

pub fn read_tt3(path: &Path) -> io::Result<TensorTrain3> {
    let mut f = io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != TT3_MAGIC {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "not a TT3 file",
        ));
    }
    let mut dims = [0usize; 5];
    for d in dims.iter_mut() {
        let mut buf = [0u8; 8];
        f.read_exact(&mut buf)?;
        *d = u64::from_le_bytes(buf) as usize;
    }
    let [n1, n2, n3, k1, k2] = dims;
    let mut read_f64s = |count: usize| -> io::Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            f.read_exact(&mut buf)?;
            out.push(f64::from_le_bytes(buf));
        }
        Ok(out)
    };
    let core1 = Array2::from_shape_vec((n1, k1), read_f64s(n1 * k1)?)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    let core2 = Array3::from_shape_vec((k1, n2, k2), read_f64s(k1 * n2 * k2)?)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    let core3 = Array2::from_shape_vec((k2, n3), read_f64s(k2 * n3)?)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    TensorTrain3::from_cores(core1, core2, core3)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}

/// Writes a sparse matrix in MatrixMarket coordinate format.
pub fn write_matrix_market(path: &Path, a: &SpMat) -> io::Result<()> {
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(f, "{} {} {}", a.nrows(), a.ncols(), sp_nnz(a))?;
    for (i, j, v) in sp_iter(a) {
        writeln!(f, "{} {} {:.16e}", i + 1, j + 1, v)?;
    }
    f.flush()
}

/// Writes a dense vector in MatrixMarket array format.
pub fn write_vector_market(path: &Path, v: &ndarray::Array1<f64>) -> io::Result<()> {
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "%%MatrixMarket matrix array real general")?;
    writeln!(f, "{} 1", v.len())?;
    for x in v.iter() {
        writeln!(f, "{x:.16e}")?;
    }
    f.flush()
}

/// CSV writer with a schema-version comment line.
pub struct CsvWriter {
    file: io::BufWriter<std::fs::File>,
}

pub const CSV_SCHEMA: &str = "ttflow-csv-v1";

impl CsvWriter {
    pub fn create(path: &Path, columns: &[&str]) -> io::Result<Self> {
        let mut file = io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "# schema: {CSV_SCHEMA}")?;
        writeln!(file, "{}", columns.join(","))?;
        Ok(Self { file })
    }

    pub fn row(&mut self, fields: &[String]) -> io::Result<()> {
        writeln!(self.file, "{}", fields.join(","))
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.file.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tt3_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let t = TensorTrain3::from_cores(
            Array2::from_shape_fn((5, 2), |_| rng.gen_range(-1.0..1.0)),
            Array3::from_shape_fn((2, 4, 3), |_| rng.gen_range(-1.0..1.0)),
            Array2::from_shape_fn((3, 6), |_| rng.gen_range(-1.0..1.0)),
        )
        .unwrap();
        let dir = std::env::temp_dir().join("ttflow_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.tt3");
        write_tt3(&path, &t).unwrap();
        let back = read_tt3(&path).unwrap();
        assert_eq!(back.mode_sizes(), t.mode_sizes());
        assert_eq!(back.ranks(), t.ranks());
        assert_eq!(back.core1(), t.core1());
        assert_eq!(back.core2(), t.core2());
        assert_eq!(back.core3(), t.core3());
        // byte-level header check
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"TT3\0");
        assert_eq!(u64::from_le_bytes(bytes[4..12].try_into().unwrap()), 5);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 4);
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 6);
        assert_eq!(u64::from_le_bytes(bytes[28..36].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[36..44].try_into().unwrap()), 3);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn matrix_market_format() {
        let a = crate::linalg::sp_from_triplets(2, 3, &[(0, 0, 1.5), (1, 2, -2.0)]);
        let dir = std::env::temp_dir().join("ttflow_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mat.mtx");
        write_matrix_market(&path, &a).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "%%MatrixMarket matrix coordinate real general"
        );
        assert_eq!(lines.next().unwrap(), "2 3 2");
        assert!(text.contains("1 1 1.5"));
        assert!(text.contains("2 3 -2."));
        std::fs::remove_file(&path).ok();
    }
}
