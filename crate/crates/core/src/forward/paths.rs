use std::io::{self, Read, Write};

use super::grid::TimeGrid;
use super::noise::NoiseSource;
use super::stepper::Stepper;
use crate::error::{Error, Result};
use crate::model::{Functional, ModelSpec};
use crate::parallel::{map_chunks, CHUNK};

const MAGIC: &[u8; 5] = b"PIDE1";

/// Simulated forward paths stored step-major: the `M` states of step `k`
/// are contiguous, which is the access pattern of the backward regressions.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    grid: TimeGrid,
    dim: usize,
    mark_dim: usize,
    paths: usize,
    seed: u64,
    /// `states[(k * M + p) * d + j]`, `k = 0..=N`.
    states: Vec<f64>,
    /// `dw[(k * M + p) * d + j]`, `k = 0..N`.
    dw: Vec<f64>,
    /// Jumps of `(k, p)` are `jump_offsets[k*M+p]..jump_offsets[k*M+p+1]`.
    jump_offsets: Vec<usize>,
    /// Absolute jump times.
    jump_times: Vec<f64>,
    jump_marks: Vec<f64>,
}

/// Output of one chunk of paths, stored path-major.
struct ChunkPaths {
    states: Vec<f64>,
    dw: Vec<f64>,
    counts: Vec<usize>,
    times: Vec<f64>,
    marks: Vec<f64>,
}

/// Simulates `paths` trajectories from `x0` on `grid`.
///
/// Path `p` draws the noise of step `k` from the stream addressed by
/// `(seed, p, grid.noise_offset() + k)`, so output is independent of the
/// number of worker threads, and simulations restarted at a grid node of
/// the same lattice reuse the same noise.
pub fn simulate_paths(
    model: &ModelSpec,
    grid: &TimeGrid,
    x0: &[f64],
    paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    simulate_paths_from(model, grid, &vec![x0.to_vec(); 1], paths, seed)
}

/// As [`simulate_paths`], with per-path initial states. `starts` holds either
/// one point shared by all paths or one point per path.
pub fn simulate_paths_from(
    model: &ModelSpec,
    grid: &TimeGrid,
    starts: &[Vec<f64>],
    paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    let d = model.dim();
    if paths == 0 {
        return Err(Error::invalid("path count must be >= 1"));
    }
    if starts.len() != 1 && starts.len() != paths {
        return Err(Error::invalid(format!(
            "expected 1 or {paths} initial states, got {}",
            starts.len()
        )));
    }
    if let Some(s) = starts.iter().find(|s| s.len() != d) {
        return Err(Error::invalid(format!("initial state {s:?} has dimension != {d}")));
    }
    model.jump_measure().validate()?;
    let n = grid.steps();
    let ld = model.jump_measure().mark_dim();
    let noise = NoiseSource::new(seed);
    let offset = grid.noise_offset();

    let chunks = map_chunks(paths, CHUNK, |range| -> Result<ChunkPaths> {
        let mut stepper = Stepper::new(model, grid.dt());
        let mut rec = stepper.new_record();
        let len = range.len();
        let mut out = ChunkPaths {
            states: Vec::with_capacity(len * (n + 1) * d),
            dw: Vec::with_capacity(len * n * d),
            counts: Vec::with_capacity(len * n),
            times: Vec::new(),
            marks: Vec::new(),
        };
        for p in range {
            let mut x = starts[if starts.len() == 1 { 0 } else { p }].clone();
            out.states.extend_from_slice(&x);
            for k in 0..n {
                let mut rng = noise.at(p as u64, offset.wrapping_add(k as u64));
                if !stepper.advance(&mut x, &mut rng, &mut rec, None) {
                    return Err(Error::Numeric(format!(
                        "state {x:?} at path {p}, step {}",
                        k + 1
                    )));
                }
                out.states.extend_from_slice(&x);
                out.dw.extend_from_slice(&rec.dw);
                out.counts.push(rec.jump_times.len());
                let tk = grid.time(k);
                out.times.extend(rec.jump_times.iter().map(|tau| tk + tau));
                out.marks.extend_from_slice(&rec.jump_marks);
            }
        }
        Ok(out)
    });
    let chunks = chunks.into_iter().collect::<Result<Vec<_>>>()?;

    // Single-point assembly into step-major layout.
    let mut states = vec![0.0; (n + 1) * paths * d];
    let mut dw = vec![0.0; n * paths * d];
    let mut counts = vec![0usize; n * paths];
    let mut p0 = 0;
    for c in &chunks {
        let len = c.counts.len() / n.max(1);
        for lp in 0..len {
            let p = p0 + lp;
            for k in 0..=n {
                let src = (lp * (n + 1) + k) * d;
                let dst = (k * paths + p) * d;
                states[dst..dst + d].copy_from_slice(&c.states[src..src + d]);
            }
            for k in 0..n {
                let src = (lp * n + k) * d;
                let dst = (k * paths + p) * d;
                dw[dst..dst + d].copy_from_slice(&c.dw[src..src + d]);
                counts[k * paths + p] = c.counts[lp * n + k];
            }
        }
        p0 += len;
    }
    let mut jump_offsets = Vec::with_capacity(n * paths + 1);
    jump_offsets.push(0);
    for &c in &counts {
        jump_offsets.push(jump_offsets.last().unwrap() + c);
    }
    let total = *jump_offsets.last().unwrap();
    let mut jump_times = vec![0.0; total];
    let mut jump_marks = vec![0.0; total * ld];
    let mut p0 = 0;
    for c in &chunks {
        let len = c.counts.len() / n.max(1);
        let mut cursor = 0;
        for lp in 0..len {
            let p = p0 + lp;
            for k in 0..n {
                let cnt = c.counts[lp * n + k];
                let dst = jump_offsets[k * paths + p];
                jump_times[dst..dst + cnt].copy_from_slice(&c.times[cursor..cursor + cnt]);
                jump_marks[dst * ld..(dst + cnt) * ld]
                    .copy_from_slice(&c.marks[cursor * ld..(cursor + cnt) * ld]);
                cursor += cnt;
            }
        }
        p0 += len;
    }

    Ok(PathBundle {
        grid: *grid,
        dim: d,
        mark_dim: ld,
        paths,
        seed,
        states,
        dw,
        jump_offsets,
        jump_times,
        jump_marks,
    })
}

impl PathBundle {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mark_dim(&self) -> usize {
        self.mark_dim
    }

    pub fn num_paths(&self) -> usize {
        self.paths
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// State of path `p` at node `k`.
    pub fn state(&self, k: usize, p: usize) -> &[f64] {
        let i = (k * self.paths + p) * self.dim;
        &self.states[i..i + self.dim]
    }

    /// All states at node `k`, path after path.
    pub fn states_at(&self, k: usize) -> &[f64] {
        let m = self.paths * self.dim;
        &self.states[k * m..(k + 1) * m]
    }

    /// Brownian increment of path `p` over step `k`.
    pub fn dw(&self, k: usize, p: usize) -> &[f64] {
        let i = (k * self.paths + p) * self.dim;
        &self.dw[i..i + self.dim]
    }

    pub fn jump_count(&self, k: usize, p: usize) -> usize {
        let i = k * self.paths + p;
        self.jump_offsets[i + 1] - self.jump_offsets[i]
    }

    /// Jump times (absolute) of path `p` in `(t_k, t_{k+1}]`.
    pub fn jump_times(&self, k: usize, p: usize) -> &[f64] {
        let i = k * self.paths + p;
        &self.jump_times[self.jump_offsets[i]..self.jump_offsets[i + 1]]
    }

    /// Marks of the jumps of path `p` in step `k`, concatenated.
    pub fn jump_marks(&self, k: usize, p: usize) -> &[f64] {
        let i = k * self.paths + p;
        let l = self.mark_dim;
        &self.jump_marks[self.jump_offsets[i] * l..self.jump_offsets[i + 1] * l]
    }

    /// Total jump count of path `p` over the whole horizon.
    pub fn total_jumps(&self, p: usize) -> usize {
        (0..self.steps()).map(|k| self.jump_count(k, p)).sum()
    }

    /// Compensated increments `Σ_jumps γ_i(e) - Δ Σ_j w_j γ_i(e_j)`, laid out as
    /// `out[(k * M + p) * q + i]`.
    pub fn compensated_increments(&self, model: &ModelSpec, functionals: &[Functional]) -> Vec<f64> {
        let q = functionals.len();
        let n = self.steps();
        let m = self.paths;
        if q == 0 {
            return Vec::new();
        }
        let dt = self.grid.dt();
        let l = self.mark_dim;
        let comp: Vec<f64> = functionals
            .iter()
            .map(|g| dt * model.jump_measure().integrate(|e| g(e)))
            .collect();
        let mut out = vec![0.0; n * m * q];
        for k in 0..n {
            for p in 0..m {
                let row = &mut out[(k * m + p) * q..(k * m + p + 1) * q];
                for (i, r) in row.iter_mut().enumerate() {
                    *r = -comp[i];
                }
                for e in self.jump_marks(k, p).chunks_exact(l.max(1)) {
                    for (i, g) in functionals.iter().enumerate() {
                        row[i] += g(e);
                    }
                }
            }
        }
        out
    }

    /// Terminal states `X_N`, path after path.
    pub fn terminal_states(&self) -> &[f64] {
        self.states_at(self.steps())
    }

    /// CSV dump with columns `path,step,time,x0..x{d-1},n_jumps`; `n_jumps` counts
    /// the jumps in `(t_{k-1}, t_k]` (0 at the first node).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "path,step,time")?;
        for j in 0..self.dim {
            write!(w, ",x{j}")?;
        }
        writeln!(w, ",n_jumps")?;
        for p in 0..self.paths {
            for k in 0..=self.steps() {
                write!(w, "{p},{k},{}", self.grid.time(k))?;
                for v in self.state(k, p) {
                    write!(w, ",{v}")?;
                }
                let nj = if k == 0 { 0 } else { self.jump_count(k - 1, p) };
                writeln!(w, ",{nj}")?;
            }
        }
        Ok(())
    }

    /// Binary dump, little-endian: `b"PIDE1"`, then `u32` dimension, path count
    /// and node count `N+1`, then `f64` states in node-major order
    /// (`(node * M + path) * d + j`).
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.dim, self.paths, self.steps() + 1] {
            let v = u32::try_from(v)
                .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "size exceeds u32"))?;
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.states {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// States read back from a binary dump.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDump {
    pub dim: usize,
    pub paths: usize,
    pub nodes: usize,
    pub states: Vec<f64>,
}

pub fn read_binary<R: Read>(mut r: R) -> Result<StateDump> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::invalid("bad magic in path dump"));
    }
    let mut word = [0u8; 4];
    let mut header = [0usize; 3];
    for h in header.iter_mut() {
        r.read_exact(&mut word)?;
        *h = u32::from_le_bytes(word) as usize;
    }
    let [dim, paths, nodes] = header;
    let mut states = vec![0.0; dim * paths * nodes];
    let mut buf = [0u8; 8];
    for s in states.iter_mut() {
        r.read_exact(&mut buf)?;
        *s = f64::from_le_bytes(buf);
    }
    Ok(StateDump { dim, paths, nodes, states })
}

/// Endpoint of a single path, without storing the trajectory.
pub(crate) fn simulate_endpoint(
    model: &ModelSpec,
    grid: &TimeGrid,
    x0: &[f64],
    noise: &NoiseSource,
    path: usize,
) -> Result<Vec<f64>> {
    let mut stepper = Stepper::new(model, grid.dt());
    let mut rec = stepper.new_record();
    let mut x = x0.to_vec();
    let offset = grid.noise_offset();
    for k in 0..grid.steps() {
        let mut rng = noise.at(path as u64, offset.wrapping_add(k as u64));
        if !stepper.advance(&mut x, &mut rng, &mut rec, None) {
            return Err(Error::Numeric(format!("state {x:?} at path {path}, step {}", k + 1)));
        }
    }
    Ok(x)
}
