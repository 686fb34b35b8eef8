//! Instance directories.
//!
//! ```text
//! <dir>/header.json        {"d", "r", "t", "m", "sigma", "seed", "ground_truth"}
//! <dir>/examples.bin       (t*m) x d, task-major
//! <dir>/observations.bin   (t*m) x 1
//! <dir>/u_star.bin         d x r   (only with ground truth)
//! <dir>/v_star.bin         t x r   (only with ground truth)
//! ```
//!
//! Each `.bin` file is the 8-byte magic `MLLAM\0v1`, the row and column
//! counts as little-endian `u64`, then the entries as little-endian `f64`
//! in row-major order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{GroundTruth, ProblemInstance, RegressorSet, Subspace, TaskData};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MLLAM\0v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceHeader {
    pub d: usize,
    pub r: usize,
    pub t: usize,
    pub m: usize,
    pub sigma: f64,
    pub seed: Option<u64>,
    pub ground_truth: bool,
}

fn write_matrix(path: &Path, mat: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(mat.nrows() as u64).to_le_bytes())?;
    out.write_all(&(mat.ncols() as u64).to_le_bytes())?;
    for i in 0..mat.nrows() {
        for j in 0..mat.ncols() {
            out.write_all(&mat[(i, j)].to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path)?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err(bad("missing MLLAM\\0v1 magic prefix".into()));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[k..k + 8].try_into().unwrap()) as usize;
    let (rows, cols) = (word(8), word(16));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(24))
        .ok_or_else(|| bad(format!("implausible shape {rows}x{cols}")))?;
    if bytes.len() != expected {
        return Err(bad(format!(
            "{rows}x{cols} needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Writes `instance` under `dir`, creating it if needed.
pub fn save_instance(instance: &ProblemInstance, dir: &Path) -> Result<()> {
    let m = instance.uniform_samples().ok_or_else(|| {
        Error::InvalidDimensions("instance files require the same m for every task".into())
    })?;
    let (d, r) = instance.dims();
    let t = instance.num_tasks();
    fs::create_dir_all(dir)?;

    let header = InstanceHeader {
        d,
        r,
        t,
        m,
        sigma: instance.noise_sigma(),
        seed: instance.seed(),
        ground_truth: instance.ground_truth().is_some(),
    };
    fs::write(
        dir.join("header.json"),
        serde_json::to_string_pretty(&header)?,
    )?;

    let mut examples = DMatrix::zeros(t * m, d);
    let mut observations = DMatrix::zeros(t * m, 1);
    for (i, task) in instance.tasks().iter().enumerate() {
        examples.rows_mut(i * m, m).copy_from(task.examples());
        observations
            .rows_mut(i * m, m)
            .copy_from(task.observations());
    }
    write_matrix(&dir.join("examples.bin"), &examples)?;
    write_matrix(&dir.join("observations.bin"), &observations)?;
    if let Some(gt) = instance.ground_truth() {
        write_matrix(&dir.join("u_star.bin"), gt.u_star.basis())?;
        write_matrix(&dir.join("v_star.bin"), gt.v_star.coefficients())?;
    }
    Ok(())
}

fn expect_shape(path: PathBuf, mat: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if mat.shape() != (rows, cols) {
        return Err(Error::Format {
            path,
            reason: format!(
                "expected {rows}x{cols}, found {}x{}",
                mat.nrows(),
                mat.ncols()
            ),
        });
    }
    Ok(())
}

/// Reads an instance written by [`save_instance`].
pub fn load_instance(dir: &Path) -> Result<ProblemInstance> {
    let header: InstanceHeader =
        serde_json::from_str(&fs::read_to_string(dir.join("header.json"))?)?;
    let InstanceHeader { d, r, t, m, .. } = header;

    let examples = read_matrix(&dir.join("examples.bin"))?;
    expect_shape(dir.join("examples.bin"), &examples, t * m, d)?;
    let observations = read_matrix(&dir.join("observations.bin"))?;
    expect_shape(dir.join("observations.bin"), &observations, t * m, 1)?;

    let tasks = (0..t)
        .map(|i| {
            TaskData::new(
                examples.rows(i * m, m).into_owned(),
                DVector::from_iterator(m, observations.rows(i * m, m).iter().copied()),
                i,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let ground_truth = if header.ground_truth {
        let u = read_matrix(&dir.join("u_star.bin"))?;
        expect_shape(dir.join("u_star.bin"), &u, d, r)?;
        let v = read_matrix(&dir.join("v_star.bin"))?;
        expect_shape(dir.join("v_star.bin"), &v, t, r)?;
        Some(GroundTruth {
            u_star: Subspace::new(u)?,
            v_star: RegressorSet::new(v),
        })
    } else {
        None
    };

    let mut instance = ProblemInstance::new(tasks, d, r, header.sigma, ground_truth)?;
    instance.seed = header.seed;
    Ok(instance)
}
