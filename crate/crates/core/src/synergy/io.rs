//! On-disk formats: trajectory binaries with a metadata sidecar, grouping
//! documents, and labelled matrix CSV files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::kmedoids::GroupingResult;
use super::selection::SelectionRow;
use super::trajectory::TrajectoryBuffer;
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const TRAJECTORY_MAGIC: &[u8; 11] = b"DYNSYNTRAJ1";
const HEADER_LEN: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub model: String,
    pub muscle_names: Vec<String>,
    pub n_steps: usize,
    pub n_muscles: usize,
    pub dt: f64,
    pub seed: u64,
    /// SHA-256 of the binary file.
    pub sha256: String,
}

/// Sidecar path for a trajectory file: `<file>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn trajectory_bytes(buffer: &TrajectoryBuffer) -> Vec<u8> {
    let (rows, cols) = buffer.lengths.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * 8);
    out.extend_from_slice(TRAJECTORY_MAGIC);
    out.resize(16, 0);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    out.extend_from_slice(&buffer.dt.to_le_bytes());
    out.resize(HEADER_LEN, 0);
    for j in 0..cols {
        for i in 0..rows {
            out.extend_from_slice(&buffer.lengths[(i, j)].to_le_bytes());
        }
    }
    out
}

/// Writes the binary matrix and its JSON sidecar.
pub fn write_trajectory(path: &Path, buffer: &TrajectoryBuffer, seed: u64) -> Result<TrajectoryMeta> {
    let bytes = trajectory_bytes(buffer);
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let meta = TrajectoryMeta {
        model: buffer.model.clone(),
        muscle_names: buffer.muscle_names.clone(),
        n_steps: buffer.n_steps(),
        n_muscles: buffer.n_muscles(),
        dt: buffer.dt,
        seed,
        sha256: sha256_hex(&bytes),
    };
    write_json(&sidecar_path(path), &meta)?;
    Ok(meta)
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

/// Reads a trajectory, checking it against its sidecar.
pub fn read_trajectory(path: &Path) -> Result<(TrajectoryBuffer, TrajectoryMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let meta: TrajectoryMeta = read_json(&sidecar_path(path))?;
    if sha256_hex(&bytes) != meta.sha256 {
        return Err(Error::Checksum(path.display().to_string()));
    }
    if bytes.len() < HEADER_LEN || &bytes[..11] != TRAJECTORY_MAGIC {
        return Err(Error::format("trajectory", "missing DYNSYNTRAJ1 header"));
    }
    let rows = read_u64(&bytes, 16) as usize;
    let cols = read_u64(&bytes, 24) as usize;
    let dt = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(Error::format("trajectory", "payload size does not match header"));
    }
    if rows != meta.n_steps || cols != meta.n_muscles || cols != meta.muscle_names.len() {
        return Err(Error::format("trajectory", "header disagrees with sidecar"));
    }
    let mut lengths = Matrix::zeros(rows, cols);
    for (k, chunk) in bytes[HEADER_LEN..].chunks_exact(8).enumerate() {
        lengths[(k % rows, k / rows)] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    let buffer = TrajectoryBuffer {
        model: meta.model.clone(),
        muscle_names: meta.muscle_names.clone(),
        dt,
        lengths,
    };
    Ok((buffer, meta))
}

/// The grouping document consumed by training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupingFile {
    pub model: String,
    pub seed: u64,
    pub n_groups: usize,
    pub groups: Vec<Vec<usize>>,
    pub medoids: Vec<usize>,
    #[serde(default)]
    pub selection_table: Vec<SelectionRow>,
}

impl GroupingFile {
    pub fn new(model: &str, grouping: &GroupingResult, table: &[SelectionRow]) -> Self {
        GroupingFile {
            model: model.to_string(),
            seed: grouping.seed,
            n_groups: grouping.n_groups(),
            groups: grouping.groups.clone(),
            medoids: grouping.medoids.clone(),
            selection_table: table.to_vec(),
        }
    }

    pub fn grouping(&self) -> Result<GroupingResult> {
        if self.n_groups != self.groups.len() {
            return Err(Error::format("grouping", "n_groups disagrees with groups"));
        }
        GroupingResult::new(self.groups.clone(), self.medoids.clone(), f64::NAN, self.seed)
            .map_err(|e| Error::format("grouping", e))
    }
}

/// Content hash of a partition, independent of medoids, cost and seed.
pub fn grouping_hash(grouping: &GroupingResult) -> String {
    sha256_hex(serde_json::to_string(&grouping.groups).unwrap().as_bytes())
}

pub fn write_grouping(path: &Path, file: &GroupingFile) -> Result<()> {
    write_json(path, file)
}

pub fn read_grouping(path: &Path) -> Result<(GroupingFile, GroupingResult)> {
    let file: GroupingFile = read_json(path)?;
    let g = file.grouping()?;
    Ok((file, g))
}

/// Row-major CSV with a header row of muscle names.
pub fn write_matrix_csv(path: &Path, names: &[String], m: &Matrix) -> Result<()> {
    if names.len() != m.cols() {
        return Err(Error::param("one name per matrix column required"));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(names).map_err(|e| csv_error(path, e))?;
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|v| format!("{v:?}")))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let names: Vec<String> = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        for v in rec.iter() {
            data.push(v.parse::<f64>().map_err(|e| Error::format("matrix csv", e))?);
        }
        rows += 1;
    }
    Ok((names.clone(), Matrix::from_vec(rows, names.len(), data)))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::format("csv", e)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format("json", e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format("json", format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buffer() -> TrajectoryBuffer {
        TrajectoryBuffer {
            model: "toy".into(),
            muscle_names: vec!["a".into(), "b".into()],
            dt: 0.01,
            lengths: Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5]),
        }
    }

    #[test]
    fn trajectory_layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.bin");
        let meta = write_trajectory(&path, &buffer(), 4).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 64 + 6 * 8);
        assert_eq!(&bytes[..11], b"DYNSYNTRAJ1");
        assert_eq!(read_u64(&bytes, 16), 3);
        assert_eq!(read_u64(&bytes, 24), 2);
        // Column-major: first column then second.
        let first: Vec<f64> = bytes[64..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(first, vec![1.0, 3.0, 5.0, 2.0, 4.0, 6.5]);

        let (back, meta2) = read_trajectory(&path).unwrap();
        assert_eq!(back, buffer());
        assert_eq!(meta, meta2);
        assert_eq!(meta.seed, 4);
    }

    #[test]
    fn corrupted_trajectory_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.bin");
        write_trajectory(&path, &buffer(), 0).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[70] ^= 1;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_trajectory(&path), Err(Error::Checksum(_))));
    }

    #[test]
    fn grouping_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grouping.json");
        let g = GroupingResult::new(vec![vec![0, 2], vec![1]], vec![2, 1], 0.5, 3).unwrap();
        let table = vec![SelectionRow { n_groups: 2, d_max: 1.5, d_min: 1.5 }];
        write_grouping(&path, &GroupingFile::new("arm", &g, &table)).unwrap();
        let (file, back) = read_grouping(&path).unwrap();
        assert_eq!(back.groups, g.groups);
        assert_eq!(back.medoids, g.medoids);
        assert_eq!(file.selection_table, table);
        assert_eq!(grouping_hash(&back), grouping_hash(&g));

        let text = fs::read_to_string(&path).unwrap().replace("\"n_groups\": 2", "\"n_groups\": 3");
        fs::write(&path, text).unwrap();
        assert!(read_grouping(&path).is_err());
    }

    #[test]
    fn matrix_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let names = vec!["x".to_string(), "y".to_string()];
        let m = Matrix::from_vec(2, 2, vec![1.0, -0.1, -0.1, 1.0 / 3.0]);
        write_matrix_csv(&path, &names, &m).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x,y\n"));
        let (n2, m2) = read_matrix_csv(&path).unwrap();
        assert_eq!(n2, names);
        assert_eq!(m2, m);
    }
}
