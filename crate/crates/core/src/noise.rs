//! Wiener increments for the adapted components w and the auxiliary
//! components w_hat, drawn from reproducible counter-based streams.
//!
//! Every logical stream is a ChaCha8 generator keyed by (master seed,
//! purpose, path, attempt) with the replicate index as its stream number, so
//! adding replicates never changes existing ones.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scenario::TimeGrid;

/// Identifies one logical random stream under a master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamId {
    /// The adapted components for w-path number `path`.
    W(u64),
    /// Auxiliary components for one Monte Carlo replicate. `attempt` is bumped
    /// when a replicate is resampled after a failure.
    Aux { path: u64, replicate: u64, attempt: u32 },
    /// Anything else (probe jitter, statistical tests).
    Extra { purpose: u64, index: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoisePlan {
    pub master_seed: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl NoisePlan {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn rng(&self, id: StreamId) -> ChaCha8Rng {
        let (purpose, a, b, stream) = match id {
            StreamId::W(path) => (1u64, path, 0u64, 0u64),
            StreamId::Aux {
                path,
                replicate,
                attempt,
            } => (2, path, attempt as u64, replicate),
            StreamId::Extra { purpose, index } => (3, purpose, 0, index),
        };
        let mut state = self.master_seed;
        for word in [purpose, a, b] {
            state = splitmix64(&mut state) ^ word;
        }
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream);
        rng
    }

    /// Fills `out` with independent N(0, variance) draws from the stream.
    pub fn fill_normal(&self, id: StreamId, variance: f64, out: &mut [f64]) {
        let mut rng = self.rng(id);
        let scale = variance.sqrt();
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = scale * z;
        }
    }

    /// Increments of the m adapted components.
    pub fn sample_w(&self, grid: &TimeGrid, m: usize, id: StreamId) -> WienerPath {
        let mut w = vec![0.0; grid.n_steps() * m];
        self.fill_normal(id, grid.dt(), &mut w);
        WienerPath {
            grid: *grid,
            m,
            d: 0,
            w,
            w_hat: Vec::new(),
        }
    }

    /// Increments of the d auxiliary components for one replicate.
    pub fn sample_aux(&self, grid: &TimeGrid, d: usize, id: StreamId) -> WienerPath {
        let mut w_hat = vec![0.0; grid.n_steps() * d];
        self.fill_normal(id, grid.dt(), &mut w_hat);
        WienerPath {
            grid: *grid,
            m: 0,
            d,
            w: Vec::new(),
            w_hat,
        }
    }

    /// The stream for replicate `replicate` of w-path `path`, first attempt.
    pub fn aux_id(path: u64, replicate: u64) -> StreamId {
        StreamId::Aux {
            path,
            replicate,
            attempt: 0,
        }
    }
}

/// Increments of w (n_steps x m) and w_hat (n_steps x d), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WienerPath {
    grid: TimeGrid,
    m: usize,
    d: usize,
    w: Vec<f64>,
    w_hat: Vec<f64>,
}

impl WienerPath {
    pub fn from_increments(
        grid: TimeGrid,
        m: usize,
        d: usize,
        w: Vec<f64>,
        w_hat: Vec<f64>,
    ) -> Result<Self> {
        let n = grid.n_steps();
        if w.len() != n * m || w_hat.len() != n * d {
            return Err(Error::GridMismatch(format!(
                "increment matrices must be {n}x{m} and {n}x{d}"
            )));
        }
        Ok(Self { grid, m, d, w, w_hat })
    }

    /// Path with no randomness in either part.
    pub fn zero(grid: TimeGrid, m: usize, d: usize) -> Self {
        Self {
            grid,
            m,
            d,
            w: vec![0.0; grid.n_steps() * m],
            w_hat: vec![0.0; grid.n_steps() * d],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn aux_dim(&self) -> usize {
        self.d
    }

    pub fn dw(&self, step: usize) -> &[f64] {
        &self.w[step * self.m..(step + 1) * self.m]
    }

    pub fn dw_mut(&mut self, step: usize) -> &mut [f64] {
        &mut self.w[step * self.m..(step + 1) * self.m]
    }

    pub fn dw_hat(&self, step: usize) -> &[f64] {
        &self.w_hat[step * self.d..(step + 1) * self.d]
    }

    pub fn dw_hat_mut(&mut self, step: usize) -> &mut [f64] {
        &mut self.w_hat[step * self.d..(step + 1) * self.d]
    }

    pub fn w_increments(&self) -> &[f64] {
        &self.w
    }

    pub fn w_hat_increments(&self) -> &[f64] {
        &self.w_hat
    }

    /// Path values of w^k on the nodes, starting at 0.
    pub fn cumulative_w(&self, k: usize) -> Vec<f64> {
        cumulative(&self.w, self.m, k)
    }

    pub fn cumulative_w_hat(&self, r: usize) -> Vec<f64> {
        cumulative(&self.w_hat, self.d, r)
    }

    /// Sub-path on [t_i, t_j], re-zeroed at t_i.
    pub fn restrict(&self, i: usize, j: usize) -> Result<WienerPath> {
        let n = self.grid.n_steps();
        if !(i < j && j <= n) {
            return Err(Error::Index(format!(
                "restriction needs 0 <= i < j <= {n}, got i = {i}, j = {j}"
            )));
        }
        Ok(WienerPath {
            grid: self.grid.sub(i, j),
            m: self.m,
            d: self.d,
            w: self.w[i * self.m..j * self.m].to_vec(),
            w_hat: self.w_hat[i * self.d..j * self.d].to_vec(),
        })
    }

    /// Appends `next`, which must continue with the same step and widths.
    pub fn concat(&self, next: &WienerPath) -> Result<WienerPath> {
        if self.m != next.m || self.d != next.d || self.grid.dt() != next.grid.dt() {
            return Err(Error::GridMismatch("paths do not share widths and step".into()));
        }
        let steps = self.grid.n_steps() + next.grid.n_steps();
        let grid = TimeGrid::new(steps as f64 * self.grid.dt(), steps)?;
        let mut w = self.w.clone();
        w.extend_from_slice(&next.w);
        let mut w_hat = self.w_hat.clone();
        w_hat.extend_from_slice(&next.w_hat);
        Ok(WienerPath {
            grid,
            m: self.m,
            d: self.d,
            w,
            w_hat,
        })
    }

    /// The same path on the grid with half as many steps: increments are summed pairwise.
    pub fn coarsen(&self) -> Result<WienerPath> {
        let n = self.grid.n_steps();
        if n % 2 != 0 {
            return Err(Error::GridMismatch(format!("cannot halve {n} steps")));
        }
        let grid = TimeGrid::new(self.grid.t_final(), n / 2)?;
        let pair_sums = |data: &[f64], width: usize| -> Vec<f64> {
            let mut out = vec![0.0; n / 2 * width];
            for step in 0..n / 2 {
                for c in 0..width {
                    out[step * width + c] =
                        data[2 * step * width + c] + data[(2 * step + 1) * width + c];
                }
            }
            out
        };
        Ok(WienerPath {
            grid,
            m: self.m,
            d: self.d,
            w: pair_sums(&self.w, self.m),
            w_hat: pair_sums(&self.w_hat, self.d),
        })
    }

    /// Combines the w part of `self` with the w_hat part of `aux`.
    pub fn with_aux(&self, aux: &WienerPath) -> Result<WienerPath> {
        if self.grid != aux.grid {
            return Err(Error::GridMismatch("w and w_hat grids differ".into()));
        }
        Ok(WienerPath {
            grid: self.grid,
            m: self.m,
            d: aux.d,
            w: self.w.clone(),
            w_hat: aux.w_hat.clone(),
        })
    }

    /// SHA-256 of the w increments as little-endian bytes, in hex.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for v in &self.w {
            hasher.update(v.to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Binary layout: `n_steps`, `m`, `d` as u64 little-endian, then the w rows
    /// (n_steps x m) and the w_hat rows (n_steps x d) as f64 little-endian.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        for h in [self.grid.n_steps(), self.m, self.d] {
            out.write_all(&(h as u64).to_le_bytes())?;
        }
        for v in self.w.iter().chain(&self.w_hat) {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the layout written by [`WienerPath::dump`]; the header must agree with `grid`.
    pub fn load<R: Read>(mut input: R, grid: &TimeGrid) -> Result<WienerPath> {
        let mut word = [0u8; 8];
        let mut header = [0usize; 3];
        for h in header.iter_mut() {
            input.read_exact(&mut word)?;
            *h = usize::try_from(u64::from_le_bytes(word))
                .map_err(|_| Error::Parse("header value too large".into()))?;
        }
        let [n, m, d] = header;
        if n != grid.n_steps() {
            return Err(Error::GridMismatch(format!(
                "dump has {n} steps, grid has {}",
                grid.n_steps()
            )));
        }
        let mut read_block = |len: usize| -> Result<Vec<f64>> {
            let mut v = Vec::with_capacity(len);
            for _ in 0..len {
                input.read_exact(&mut word)?;
                v.push(f64::from_le_bytes(word));
            }
            Ok(v)
        };
        let w = read_block(n * m)?;
        let w_hat = read_block(n * d)?;
        Ok(WienerPath {
            grid: *grid,
            m,
            d,
            w,
            w_hat,
        })
    }
}

fn cumulative(data: &[f64], width: usize, c: usize) -> Vec<f64> {
    let n = if width == 0 { 0 } else { data.len() / width };
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(acc);
    for step in 0..n {
        acc += data[step * width + c];
        out.push(acc);
    }
    out
}
