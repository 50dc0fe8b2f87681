//! Short-burst transition datasets and their on-disk layout.
//!
//! A dataset directory holds `meta.json` plus one `burst_<idx>.csv` per
//! initial condition. CSV rows are endpoints written with 17 significant
//! digits so that values reload bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sde::{euler_maruyama_burst, SdeSpec};

/// Endpoints `x(t*)` of independent trajectories started at `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Burst {
    pub z: Vec<f64>,
    /// Row-major `n_samples × dim`.
    pub samples: Vec<f64>,
}

impl Burst {
    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.samples.chunks_exact(self.dim())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurstDataset {
    pub bursts: Vec<Burst>,
    pub t_star: f64,
    pub seed: u64,
    pub spec_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    t_star: f64,
    seed: u64,
    spec_hash: String,
    dim: usize,
    n_samples: usize,
    grid: Vec<Vec<f64>>,
}

/// Evenly spaced tensor grid on `[lo, hi]^dim` with `points` per axis;
/// the first coordinate varies slowest.
pub fn tensor_grid(lo: f64, hi: f64, points: usize, dim: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = if points == 1 {
        vec![0.5 * (lo + hi)]
    } else {
        (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect()
    };
    let mut grid = vec![Vec::new()];
    for _ in 0..dim {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    grid
}

/// RNG stream for burst `index` of a run seeded with `seed`.
pub fn burst_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// One burst per grid point, each on its own RNG substream.
pub fn generate_dataset(
    spec: &SdeSpec,
    z_grid: &[Vec<f64>],
    n_samples: usize,
    seed: u64,
) -> Result<BurstDataset> {
    spec.validate()?;
    if z_grid.is_empty() {
        return Err(Error::Parameter("z grid is empty".into()));
    }
    let bursts = z_grid
        .par_iter()
        .enumerate()
        .map(|(index, z)| {
            let mut rng = burst_rng(seed, index);
            euler_maruyama_burst(spec, z, n_samples, &mut rng)
                .map(|samples| Burst {
                    z: z.clone(),
                    samples,
                })
                .map_err(|e| e.at_z(z))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BurstDataset {
        bursts,
        t_star: spec.t_star,
        seed,
        spec_hash: spec.digest(),
    })
}

fn burst_csv(burst: &Burst) -> String {
    let dim = burst.dim();
    let mut out = String::with_capacity(burst.samples.len() * 26 + 8);
    let header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for p in burst.points() {
        for (i, v) in p.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes `contents` to `path` via a temporary file and rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl BurstDataset {
    pub fn dim(&self) -> usize {
        self.bursts.first().map(Burst::dim).unwrap_or(0)
    }

    pub fn n_samples(&self) -> usize {
        self.bursts.first().map(Burst::len).unwrap_or(0)
    }

    pub fn grid(&self) -> Vec<Vec<f64>> {
        self.bursts.iter().map(|b| b.z.clone()).collect()
    }

    fn meta(&self) -> Meta {
        Meta {
            t_star: self.t_star,
            seed: self.seed,
            spec_hash: self.spec_hash.clone(),
            dim: self.dim(),
            n_samples: self.n_samples(),
            grid: self.grid(),
        }
    }

    /// SHA-256 over the persisted representation.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.meta()).expect("meta serializes"));
        for b in &self.bursts {
            h.update(burst_csv(b).as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, b) in self.bursts.iter().enumerate() {
            write_atomic(&dir.join(format!("burst_{i}.csv")), burst_csv(b).as_bytes())?;
        }
        // meta last: its presence marks a complete dataset.
        let meta = serde_json::to_vec_pretty(&self.meta())?;
        write_atomic(&dir.join("meta.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: Meta =
            serde_json::from_str(&text).map_err(|e| Error::format(&meta_path, e.to_string()))?;
        let mut bursts = Vec::with_capacity(meta.grid.len());
        for (i, z) in meta.grid.iter().enumerate() {
            let path = dir.join(format!("burst_{i}.csv"));
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let mut lines = text.lines();
            let header = lines.next().unwrap_or_default();
            if header.split(',').count() != meta.dim || z.len() != meta.dim {
                return Err(Error::format(
                    &path,
                    format!("expected {} columns", meta.dim),
                ));
            }
            let mut samples = Vec::with_capacity(meta.n_samples * meta.dim);
            for (row, line) in lines.enumerate() {
                let before = samples.len();
                for field in line.split(',') {
                    let v: f64 = field.trim().parse().map_err(|_| {
                        Error::format(&path, format!("row {}: bad number '{field}'", row + 1))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::format(&path, format!("row {}: non-finite", row + 1)));
                    }
                    samples.push(v);
                }
                if samples.len() - before != meta.dim {
                    return Err(Error::format(
                        &path,
                        format!("row {}: wrong width", row + 1),
                    ));
                }
            }
            if samples.len() != meta.n_samples * meta.dim {
                return Err(Error::format(
                    &path,
                    format!("expected {} rows", meta.n_samples),
                ));
            }
            bursts.push(Burst {
                z: z.clone(),
                samples,
            });
        }
        Ok(Self {
            bursts,
            t_star: meta.t_star,
            seed: meta.seed,
            spec_hash: meta.spec_hash,
        })
    }
}
