//! Dataset generation and storage for 1D transient PDEs.
//!
//! A dataset is a block of trajectories [N, N_t, s, c] plus the metadata
//! needed to interpret it: query times, per-sample PDE parameters, and the
//! affine map from the internal unit grid to the physical domain. Advection
//! trajectories come from the exact translated-profile solution
//! ([`advection`]), Burgers trajectories from a conservative finite-volume
//! scheme ([`burgers`]) cross-checked against a Cole–Hopf quadrature oracle
//! ([`cole_hopf`]). [`format`] fixes the on-disk byte layout.

pub mod advection;
pub mod burgers;
pub mod cole_hopf;
pub mod format;
pub mod ic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{Array, ArrayError, Scalar};
use crate::rng::Rng;

use burgers::FvGrid;
use ic::IcConfig;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dt {dt:.6e} violates the {bound} limit {limit:.6e}")]
    Cfl { bound: &'static str, dt: f64, limit: f64 },
    #[error("time {t} is not a whole number of solver steps of dt {dt:.6e}")]
    Misaligned { t: f64, dt: f64 },
    #[error("times must start at 0 and strictly increase")]
    BadTimes,
    #[error("invalid: {what}")]
    Invalid { what: String },
    #[error("bad magic: not a dataset file")]
    BadMagic,
    #[error("unsupported dataset format version {0}")]
    BadVersion(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("metadata does not match payload: {what}")]
    MetaMismatch { what: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("metadata JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Array(#[from] ArrayError),
}

pub(crate) fn check_times(times: &[f64]) -> Result<(), DataError> {
    if times.is_empty() || times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DataError::BadTimes);
    }
    Ok(())
}

/// Affine map between the internal unit grid and the physical domain:
/// point i sits at unit coordinate (i + stagger)/s and physical coordinate
/// offset + length · (i + stagger)/s. Vertex grids have stagger 0, cell
/// centers 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainMap {
    pub offset: f64,
    pub length: f64,
    pub stagger: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    /// PDE name: "advection" or "burgers".
    pub pde: String,
    /// Trajectory count.
    pub n: usize,
    /// Stored timesteps per trajectory.
    pub n_t: usize,
    /// Spatial points per frame.
    pub s: usize,
    /// Channels.
    pub c: usize,
    /// Spatial dimensionality of the grid.
    pub d: usize,
    pub times: Vec<f64>,
    /// Per-sample PDE parameter vectors (β or ν here).
    pub params: Vec<Vec<f64>>,
    pub seed: u64,
    pub domain: DomainMap,
    /// Solver step (frame spacing for the exact advection solution).
    pub dt: f64,
    /// Physical grid spacing.
    pub dx: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl DatasetMeta {
    /// Internal [0,1) coordinates the model consumes.
    pub fn unit_grid(&self) -> Vec<f64> {
        (0..self.s).map(|i| (i as f64 + self.domain.stagger) / self.s as f64).collect()
    }

    pub fn physical_grid(&self) -> Vec<f64> {
        self.unit_grid()
            .into_iter()
            .map(|u| self.domain.offset + self.domain.length * u)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar> {
    pub meta: DatasetMeta,
    /// [N, N_t, s, c] row-major.
    pub values: Array<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn validate(&self) -> Result<(), DataError> {
        let m = &self.meta;
        if self.values.shape() != [m.n, m.n_t, m.s, m.c] {
            return Err(DataError::MetaMismatch {
                what: format!(
                    "values shape {:?} vs metadata [{}, {}, {}, {}]",
                    self.values.shape(),
                    m.n,
                    m.n_t,
                    m.s,
                    m.c
                ),
            });
        }
        if m.times.len() != m.n_t {
            return Err(DataError::MetaMismatch {
                what: format!("{} times for n_t {}", m.times.len(), m.n_t),
            });
        }
        check_times(&m.times)?;
        if m.params.len() != m.n {
            return Err(DataError::MetaMismatch {
                what: format!("{} parameter vectors for n {}", m.params.len(), m.n),
            });
        }
        if let Some(first) = m.params.first() {
            if m.params.iter().any(|p| p.len() != first.len()) {
                return Err(DataError::MetaMismatch {
                    what: "ragged parameter vectors".into(),
                });
            }
        }
        Ok(())
    }

    /// One trajectory, [N_t, s, c].
    pub fn sample_values(&self, i: usize) -> Array<T> {
        let m = &self.meta;
        let block = m.n_t * m.s * m.c;
        Array::from_vec(
            vec![m.n_t, m.s, m.c],
            self.values.data()[i * block..(i + 1) * block].to_vec(),
        )
        .expect("validated dataset slices cleanly")
    }

    /// One frame of one trajectory, [s, c].
    pub fn frame(&self, i: usize, k: usize) -> Array<T> {
        let m = &self.meta;
        let block = m.n_t * m.s * m.c;
        let fr = m.s * m.c;
        let base = i * block + k * fr;
        Array::from_vec(vec![m.s, m.c], self.values.data()[base..base + fr].to_vec())
            .expect("validated dataset slices cleanly")
    }

    pub fn params(&self, i: usize) -> &[f64] {
        &self.meta.params[i]
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset { meta: self.meta.clone(), values: self.values.cast() }
    }

    /// Keeps every k-th spatial point. Vertex grids stay vertex-aligned;
    /// staggered grids keep their points' true coordinates (stagger shrinks
    /// to stagger/k).
    pub fn subsample_space(&self, k: usize) -> Result<Dataset<T>, DataError> {
        let m = &self.meta;
        if k == 0 || m.s % k != 0 {
            return Err(DataError::Invalid {
                what: format!("stride {k} does not divide s {}", m.s),
            });
        }
        let s_new = m.s / k;
        let mut data = Vec::with_capacity(m.n * m.n_t * s_new * m.c);
        let old = self.values.data();
        for i_n in 0..m.n {
            for i_t in 0..m.n_t {
                let frame = (i_n * m.n_t + i_t) * m.s * m.c;
                for j in 0..s_new {
                    let p = frame + j * k * m.c;
                    data.extend_from_slice(&old[p..p + m.c]);
                }
            }
        }
        let mut meta = m.clone();
        meta.s = s_new;
        meta.dx = m.dx * k as f64;
        meta.domain.stagger = m.domain.stagger / k as f64;
        Ok(Dataset {
            meta,
            values: Array::from_vec(vec![m.n, m.n_t, s_new, m.c], data)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// "advection" (domain [0,1), exact solver) or "burgers" (domain
    /// (−1,1), finite-volume solver).
    pub pde: String,
    pub n: usize,
    pub s: usize,
    pub n_t: usize,
    pub t_final: f64,
    /// PDE parameter per sample, cycled: sample i gets value i mod len.
    pub param_values: Vec<f64>,
    /// IC family; its `length` is overridden by the PDE's domain length.
    pub ic: IcConfig,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            pde: "advection".into(),
            n: 512,
            s: 64,
            n_t: 21,
            t_final: 2.0,
            param_values: vec![0.4],
            ic: IcConfig::default(),
            seed: 0,
        }
    }
}

/// Generates the full dataset in f64. Each sample owns an independent RNG
/// stream, so trajectories are reproducible in isolation and safe to build
/// in parallel.
pub fn generate(cfg: &DataConfig) -> Result<Dataset<f64>, DataError> {
    use rayon::prelude::*;

    if cfg.n == 0 || cfg.n_t < 2 || cfg.s == 0 || cfg.t_final <= 0.0 {
        return Err(DataError::Invalid {
            what: format!(
                "need n ≥ 1, n_t ≥ 2, s ≥ 1, t_final > 0; got n={}, n_t={}, s={}, t_final={}",
                cfg.n, cfg.n_t, cfg.s, cfg.t_final
            ),
        });
    }
    if cfg.param_values.is_empty() {
        return Err(DataError::Invalid { what: "param_values is empty".into() });
    }
    let domain = match cfg.pde.as_str() {
        "advection" => DomainMap { offset: 0.0, length: 1.0, stagger: 0.0 },
        "burgers" => DomainMap { offset: -1.0, length: 2.0, stagger: 0.5 },
        other => {
            return Err(DataError::Invalid { what: format!("unknown pde '{other}'") });
        }
    };
    let times: Vec<f64> =
        (0..cfg.n_t).map(|k| k as f64 * cfg.t_final / (cfg.n_t - 1) as f64).collect();
    let frame = cfg.t_final / (cfg.n_t - 1) as f64;
    let dx = domain.length / cfg.s as f64;
    let mut ic_cfg = cfg.ic.clone();
    ic_cfg.length = domain.length;

    // One solver step for the whole dataset: budgeted for the family-wide
    // amplitude bound and the largest ν, so every sample satisfies the
    // solver's own stability checks.
    let amp_bound =
        cfg.ic.j_modes as f64 * cfg.ic.amp_range[0].abs().max(cfg.ic.amp_range[1].abs());
    let dt = match cfg.pde.as_str() {
        "burgers" => {
            let nu_max = cfg.param_values.iter().fold(0.0f64, |m, &v| m.max(v));
            burgers::stable_dt(frame, dx, amp_bound, nu_max)
        }
        _ => frame,
    };

    let trajectories: Vec<Array<f64>> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::new(cfg.seed, i as u64);
            let ic = ic::sample_ic(&mut rng, &ic_cfg);
            let p = cfg.param_values[i % cfg.param_values.len()];
            match cfg.pde.as_str() {
                "advection" => {
                    let grid: Vec<f64> =
                        (0..cfg.s).map(|j| j as f64 * dx).collect();
                    advection::solve_advection(&ic, p, &times, &grid)
                }
                _ => {
                    let grid = FvGrid { s: cfg.s, length: domain.length, offset: domain.offset };
                    burgers::solve_burgers(&ic, p, &grid, dt, &times)
                }
            }
        })
        .collect::<Result<_, _>>()?;

    let mut data = Vec::with_capacity(cfg.n * cfg.n_t * cfg.s);
    for t in &trajectories {
        data.extend_from_slice(t.data());
    }
    let params = (0..cfg.n)
        .map(|i| vec![cfg.param_values[i % cfg.param_values.len()]])
        .collect();
    let ds = Dataset {
        meta: DatasetMeta {
            pde: cfg.pde.clone(),
            n: cfg.n,
            n_t: cfg.n_t,
            s: cfg.s,
            c: 1,
            d: 1,
            times,
            params,
            seed: cfg.seed,
            domain,
            dt,
            dx,
            config_hash: None,
        },
        values: Array::from_vec(vec![cfg.n, cfg.n_t, cfg.s, 1], data)?,
    };
    ds.validate()?;
    Ok(ds)
}
