//! Brownian increments on uniform grids, with exact coarsening.
//!
//! A fine grid is generated once per trajectory; coarser grids are obtained by
//! summing consecutive pairs, so every resolution reads the same Brownian path.
//!
//! Binary dump layout (all little-endian): `n_steps: u64`, `dt: f64`,
//! `seed: u64`, `stream: u64`, `path: u64`, then `n_steps` increments as `f64`.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::rng::SeedId;
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("grid has {0} steps, coarsening needs an even count")]
    OddStepCount(usize),
    #[error("{n_steps} steps cannot be halved {halvings} times")]
    IndivisibleStepCount { n_steps: usize, halvings: u32 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec<T> {
    pub horizon: T,
    pub n_steps: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn new(horizon: T, n_steps: usize) -> Result<Self, PathError> {
        if n_steps == 0 {
            return Err(PathError::InvalidGrid("n_steps must be >= 1".into()));
        }
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(PathError::InvalidGrid(
                "horizon must be finite and > 0".into(),
            ));
        }
        Ok(Self { horizon, n_steps })
    }

    #[inline]
    pub fn dt(&self) -> T {
        self.horizon / T::from_count(self.n_steps)
    }

    /// Time of grid point `k`.
    pub fn time(&self, k: usize) -> T {
        self.horizon * T::from_count(k) / T::from_count(self.n_steps)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BrownianGrid<T> {
    spec: GridSpec<T>,
    increments: Vec<T>,
    seed_id: SeedId,
}

impl<T: Real> BrownianGrid<T> {
    /// Draws `n_steps` i.i.d. `N(0, dt)` increments from the counter stream `seed_id`.
    pub fn generate(spec: GridSpec<T>, seed_id: SeedId) -> Self {
        let mut normals = vec![0.0f64; spec.n_steps];
        seed_id.fill_normals(&mut normals);
        let sqrt_dt = spec.dt().sqrt();
        let increments = normals.into_iter().map(|z| T::lit(z) * sqrt_dt).collect();
        Self {
            spec,
            increments,
            seed_id,
        }
    }

    /// Wraps explicit increments (tests, replay of dumped grids).
    pub fn from_increments(
        spec: GridSpec<T>,
        increments: Vec<T>,
        seed_id: SeedId,
    ) -> Result<Self, PathError> {
        if increments.len() != spec.n_steps {
            return Err(PathError::InvalidGrid(format!(
                "{} increments for {} steps",
                increments.len(),
                spec.n_steps
            )));
        }
        Ok(Self {
            spec,
            increments,
            seed_id,
        })
    }

    pub fn spec(&self) -> GridSpec<T> {
        self.spec
    }
    pub fn increments(&self) -> &[T] {
        &self.increments
    }
    pub fn seed_id(&self) -> SeedId {
        self.seed_id
    }
    pub fn dt(&self) -> T {
        self.spec.dt()
    }

    /// Same path with every increment negated (`B = -W`).
    pub fn negated(&self) -> Self {
        Self {
            spec: self.spec,
            increments: self.increments.iter().map(|&x| -x).collect(),
            seed_id: self.seed_id,
        }
    }

    /// Sum of all increments, `W_T`.
    pub fn terminal(&self) -> T {
        self.increments.iter().fold(T::zero(), |acc, &x| acc + x)
    }

    /// Halves the resolution by summing consecutive pairs.
    pub fn coarsen(&self) -> Result<Self, PathError> {
        if !self.spec.n_steps.is_multiple_of(2) {
            return Err(PathError::OddStepCount(self.spec.n_steps));
        }
        let increments = self
            .increments
            .chunks_exact(2)
            .map(|p| p[0] + p[1])
            .collect();
        Ok(Self {
            spec: GridSpec {
                horizon: self.spec.horizon,
                n_steps: self.spec.n_steps / 2,
            },
            increments,
            seed_id: self.seed_id,
        })
    }

    /// `[g, coarsen(g), coarsen^2(g), ...]` with `n_levels` entries.
    pub fn restrict_to_ladder(&self, n_levels: u32) -> Result<Vec<Self>, PathError> {
        if n_levels == 0 {
            return Ok(Vec::new());
        }
        let halvings = n_levels - 1;
        let divisible =
            halvings < usize::BITS && self.spec.n_steps.is_multiple_of(1usize << halvings);
        if !divisible {
            return Err(PathError::IndivisibleStepCount {
                n_steps: self.spec.n_steps,
                halvings,
            });
        }
        let mut out = Vec::with_capacity(n_levels as usize);
        out.push(self.clone());
        for _ in 0..halvings {
            let next = out.last().expect("nonempty").coarsen()?;
            out.push(next);
        }
        Ok(out)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&(self.spec.n_steps as u64).to_le_bytes())?;
        w.write_all(&self.dt().to_f64_lossy().to_le_bytes())?;
        w.write_all(&self.seed_id.seed.to_le_bytes())?;
        w.write_all(&u64::from(self.seed_id.stream).to_le_bytes())?;
        w.write_all(&self.seed_id.path.to_le_bytes())?;
        for x in &self.increments {
            w.write_all(&x.to_f64_lossy().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> io::Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> io::Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let n_steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let dt = f64::from_le_bytes(next(&mut r)?);
        let seed = u64::from_le_bytes(next(&mut r)?);
        let stream = u64::from_le_bytes(next(&mut r)?) as u32;
        let path = u64::from_le_bytes(next(&mut r)?);
        let mut increments = Vec::with_capacity(n_steps);
        for _ in 0..n_steps {
            increments.push(T::lit(f64::from_le_bytes(next(&mut r)?)));
        }
        let spec = GridSpec::new(T::lit(dt * n_steps as f64), n_steps)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        Ok(Self {
            spec,
            increments,
            seed_id: SeedId::new(seed, stream, path),
        })
    }
}
