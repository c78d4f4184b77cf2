//! Conditional Monte Carlo estimate of
//!
//! ```text
//! v_t(x) = E^[ (psi eta_t)(y*) 1{gamma = 0} + (U_t - U_gamma eta_t / eta_gamma)(y*) ],
//! y* = Y^{-1}_{0,t}(x),
//! ```
//!
//! with the adapted path w held fixed and the auxiliary noise w_hat resampled
//! per replicate. gamma is the last time in (0, t] at which the inverse
//! characteristic s -> Y_{0,s}(y*) is outside D; it is not a stopping time,
//! so whole trajectories are computed before it is located.

use std::io::Write;

use rayon::prelude::*;

use crate::coefficients::{CoefficientField, Local, MAX_DIM};
use crate::error::{Error, Result};
use crate::flow::{flatten, seed_lattice, Characteristics, Guess, ImageTable, Inversion, LazyImages, Observer, Workspace};
use crate::noise::{NoisePlan, StreamId, WienerPath};
use crate::scenario::{DomainSpec, ExitDetection, TimeGrid};
use crate::stats::mean_stderr;
use crate::weights::{WeightAccumulator, WeightPaths};

/// Evaluation point: a grid node in time and a point of D.
#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    pub node: usize,
    pub x: Vec<f64>,
}

/// Grid exit time: the largest node index k in (0, t] with
/// signed_distance(z_k) <= 0, or 0 if there is none. Returns (gamma, k).
pub fn exit_time(trajectory: &[Vec<f64>], node: usize, domain: &DomainSpec, grid: &TimeGrid) -> (f64, usize) {
    let k = (1..=node)
        .rev()
        .find(|&k| domain.signed_distance(&trajectory[k]) <= 0.0)
        .unwrap_or(0);
    (grid.node(k), k)
}

/// Per-node data the payoff needs, collected during a flow integration.
#[derive(Clone, Debug)]
pub struct PathRecord {
    /// Signed distance of each node.
    pub dist: Vec<f64>,
    /// n^T (sigma sigma^T + rho rho^T) n at each node, n the distance gradient.
    pub normal_diffusion: Vec<f64>,
    pub weights: WeightAccumulator,
    normal: [f64; MAX_DIM],
}

impl PathRecord {
    pub fn new(dt: f64) -> Self {
        Self {
            dist: Vec::new(),
            normal_diffusion: Vec::new(),
            weights: WeightAccumulator::new(dt, None),
            normal: [0.0; MAX_DIM],
        }
    }
}

struct Tracking<'r> {
    domain: &'r DomainSpec,
    record: &'r mut PathRecord,
}

impl Observer for Tracking<'_> {
    fn begin(&mut self, start: usize) {
        self.record.dist.clear();
        self.record.normal_diffusion.clear();
        self.record.weights.begin(start);
    }

    fn node(&mut self, _i: usize, z: &[f64]) {
        let d = z.len();
        self.record.dist.push(self.domain.signed_distance(z));
        self.domain.distance_gradient(z, &mut self.record.normal[..d]);
    }

    fn step(&mut self, i: usize, local: &Local, dw: &[f64]) {
        self.record.weights.step(i, local, dw);
        let n = &self.record.normal;
        let d = local.d;
        let mut a = 0.0;
        for p in 0..d {
            for q in 0..d {
                a += n[p] * local.diffusion(p, q) * n[q];
            }
        }
        self.record.normal_diffusion.push(a);
    }
}

/// Payoff of one replicate at node `t`.
///
/// With [`ExitDetection::Grid`] gamma is the grid exit time. With
/// [`ExitDetection::Bridge`] the probability that a Brownian bridge between
/// two inside nodes touches the boundary, exp(-2 d_j d_{j+1} / (a_j dt)), is
/// integrated out: the steps after the last outside node are scanned
/// backwards and each possible last crossing contributes its payoff, using
/// the step endpoint closer to the boundary as gamma.
pub fn payoff_from_record(
    psi_y: f64,
    dist: &[f64],
    normal_diffusion: &[f64],
    weights: &WeightPaths,
    t: usize,
    dt: f64,
    mode: ExitDetection,
) -> f64 {
    let eta = &weights.eta;
    let u = &weights.u;
    let hard = (1..=t).rev().find(|&k| dist[k] <= 0.0).unwrap_or(0);
    let after_exit = |k: usize| u[t] - u[k] * eta[t] / eta[k];
    let hard_value = if hard == 0 {
        psi_y * eta[t] + u[t]
    } else {
        after_exit(hard)
    };
    if mode == ExitDetection::Grid || t == 0 {
        return hard_value;
    }
    let lowest = if hard > 0 { hard + 1 } else { 0 };
    let mut survive = 1.0;
    let mut total = 0.0;
    for j in (lowest..t).rev() {
        let (a, b) = (dist[j], dist[j + 1]);
        let p = if a <= 0.0 || b <= 0.0 {
            1.0
        } else if a.is_infinite() || b.is_infinite() || normal_diffusion[j] <= 0.0 {
            0.0
        } else {
            (-2.0 * a * b / (normal_diffusion[j] * dt)).exp()
        };
        if p > 0.0 {
            let k = if a < b { j } else { j + 1 };
            total += survive * p * after_exit(k);
            survive *= 1.0 - p;
            if survive == 0.0 {
                break;
            }
        }
    }
    total + survive * hard_value
}

/// Everything computed for one query and one replicate.
#[derive(Clone, Debug)]
pub struct CharacteristicBundle {
    pub query: Query,
    pub y_star: Vec<f64>,
    pub residual: f64,
    /// Y_{0,s}(y*) for s = 0..=node, flattened.
    pub trajectory: Vec<f64>,
    pub gamma: f64,
    pub gamma_index: usize,
    pub weights: WeightPaths,
    pub psi_y: f64,
}

impl CharacteristicBundle {
    /// Payoff with grid exit detection.
    pub fn payoff(&self) -> f64 {
        let t = self.query.node;
        let eta = &self.weights.eta;
        let u = &self.weights.u;
        let k = self.gamma_index;
        let tail = u[t] - u[k] * eta[t] / eta[k];
        if k == 0 {
            self.psi_y * eta[t] + tail
        } else {
            tail
        }
    }
}

/// Inverts the flow at the query and collects trajectory, exit time and weights.
pub fn build_bundle<C: CoefficientField + ?Sized>(
    ch: &Characteristics<'_, C>,
    domain: &DomainSpec,
    table: &ImageTable,
    query: &Query,
    tolerance: f64,
) -> Result<CharacteristicBundle> {
    struct Full<'r> {
        inner: Tracking<'r>,
        states: &'r mut Vec<f64>,
    }
    impl Observer for Full<'_> {
        fn begin(&mut self, start: usize) {
            self.inner.begin(start);
            self.states.clear();
        }
        fn node(&mut self, i: usize, z: &[f64]) {
            self.inner.node(i, z);
            self.states.extend_from_slice(z);
        }
        fn step(&mut self, i: usize, local: &Local, dw: &[f64]) {
            self.inner.step(i, local, dw);
        }
    }
    let mut record = PathRecord::new(ch.clock().dt());
    let mut states = Vec::new();
    let mut ws = ch.workspace();
    let inv = ch.invert(
        table,
        &query.x,
        tolerance,
        &mut Full {
            inner: Tracking {
                domain,
                record: &mut record,
            },
            states: &mut states,
        },
        &mut ws,
    )?;
    record.weights.check()?;
    let d = ch.dim();
    let nodes: Vec<Vec<f64>> = states.chunks(d).map(|c| c.to_vec()).collect();
    let (gamma, gamma_index) = exit_time(&nodes, query.node, domain, ch.clock());
    Ok(CharacteristicBundle {
        query: query.clone(),
        psi_y: ch.coeffs().psi(&inv.y),
        y_star: inv.y,
        residual: inv.residual,
        trajectory: states,
        gamma,
        gamma_index,
        weights: record.weights.paths,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorOptions {
    pub samples: usize,
    pub tolerance: f64,
    pub exit: ExitDetection,
    /// Seed lattice spacing is diam(D) / seeds_per_diameter.
    pub seeds_per_diameter: usize,
    pub master_seed: u64,
    /// Index of the w path; keys the auxiliary streams.
    pub path_index: u64,
    pub retain_payoffs: bool,
    pub max_attempts: u32,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            tolerance: 1e-8,
            exit: ExitDetection::Bridge,
            seeds_per_diameter: 32,
            master_seed: 0,
            path_index: 0,
            retain_payoffs: false,
            max_attempts: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationEstimate {
    pub query: Query,
    pub t: f64,
    pub samples: usize,
    pub mean: f64,
    pub stderr: f64,
    /// Replicates resampled after a failed inversion.
    pub failures: usize,
    pub max_residual: f64,
    pub payoffs: Option<Vec<f64>>,
}

struct Outcome {
    payoffs: Vec<f64>,
    failures: usize,
    max_residual: f64,
}

struct Scratch {
    ws: Workspace,
    record: PathRecord,
    aux: Vec<f64>,
}

/// Estimates v at every query for the fixed adapted path `w`; replicate j
/// uses the auxiliary stream (path_index, j) for all queries. The mean is a
/// pairwise sum in replicate order, so the result does not depend on the
/// number of worker threads.
pub fn estimate_v<C: CoefficientField + ?Sized>(
    domain: &DomainSpec,
    coeffs: &C,
    w: &WienerPath,
    queries: &[Query],
    opts: &EstimatorOptions,
) -> Result<Vec<RepresentationEstimate>> {
    let grid = *w.grid();
    let d = coeffs.dim();
    if w.modes() != coeffs.modes() {
        return Err(Error::GridMismatch("w path width differs from the number of modes".into()));
    }
    if opts.samples == 0 {
        return Err(Error::Validation("samples must be at least 1".into()));
    }
    for q in queries {
        if q.node > grid.n_steps() {
            return Err(Error::Validation(format!("query node {} beyond the grid", q.node)));
        }
        if q.x.len() != d || q.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("query point {:?} is not a point of R^{d}", q.x)));
        }
    }
    let seeds = flatten(&seed_lattice(domain, opts.seeds_per_diameter));
    let mut nodes: Vec<usize> = queries.iter().map(|q| q.node).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let plan = NoisePlan::new(opts.master_seed);

    let replicate = |scratch: &mut Scratch, r: usize| -> Result<Outcome> {
        let mut failures = 0;
        for attempt in 0..opts.max_attempts {
            let id = StreamId::Aux {
                path: opts.path_index,
                replicate: r as u64,
                attempt,
            };
            scratch.aux.resize(grid.n_steps() * d, 0.0);
            plan.fill_normal(id, grid.dt(), &mut scratch.aux);
            let path = WienerPath::from_increments(
                grid,
                w.modes(),
                d,
                w.w_increments().to_vec(),
                scratch.aux.clone(),
            )?;
            let ch = Characteristics::new(coeffs, &path)?;
            match one_replicate(&ch, domain, &seeds, &nodes, queries, opts, scratch) {
                Ok((payoffs, max_residual)) => {
                    return Ok(Outcome {
                        payoffs,
                        failures,
                        max_residual,
                    })
                }
                Err(e) if e.is_numerical() => failures += 1,
                Err(e) => return Err(e),
            }
        }
        Err(Error::TooManyFailures {
            failures,
            samples: 1,
        })
    };

    let outcomes: Vec<Outcome> = (0..opts.samples)
        .into_par_iter()
        .map_init(
            || Scratch {
                ws: Workspace::new(d, coeffs.modes()),
                record: PathRecord::new(grid.dt()),
                aux: Vec::new(),
            },
            |scratch, r| replicate(scratch, r),
        )
        .collect::<Result<Vec<_>>>()?;

    let failures: usize = outcomes.iter().map(|o| o.failures).sum();
    if failures * 100 > opts.samples {
        return Err(Error::TooManyFailures {
            failures,
            samples: opts.samples,
        });
    }
    let max_residual = outcomes.iter().map(|o| o.max_residual).fold(0.0, f64::max);
    let mut column = vec![0.0; opts.samples];
    Ok(queries
        .iter()
        .enumerate()
        .map(|(qi, q)| {
            for (r, o) in outcomes.iter().enumerate() {
                column[r] = o.payoffs[qi];
            }
            let (mean, stderr) = mean_stderr(&column);
            RepresentationEstimate {
                query: q.clone(),
                t: grid.node(q.node),
                samples: opts.samples,
                mean,
                stderr,
                failures,
                max_residual,
                payoffs: opts.retain_payoffs.then(|| column.clone()),
            }
        })
        .collect())
}

fn one_replicate<C: CoefficientField + ?Sized>(
    ch: &Characteristics<'_, C>,
    domain: &DomainSpec,
    seeds: &[f64],
    nodes: &[usize],
    queries: &[Query],
    opts: &EstimatorOptions,
    scratch: &mut Scratch,
) -> Result<(Vec<f64>, f64)> {
    let dt = ch.clock().dt();
    let lazy = ch.dim() == 1;
    let mut tables = Vec::with_capacity(nodes.len());
    let mut lazy_tables = Vec::with_capacity(nodes.len());
    for &node in nodes {
        if lazy {
            lazy_tables.push(LazyImages::new(seeds, node));
        } else {
            tables.push(ch.seed_images(seeds, node, false, &mut scratch.ws)?);
        }
    }
    let mut previous: Vec<Option<Inversion>> = vec![None; nodes.len()];
    let mut payoffs = Vec::with_capacity(queries.len());
    let mut max_residual = 0.0f64;
    for q in queries {
        if q.node == 0 {
            payoffs.push(ch.coeffs().psi(&q.x));
            continue;
        }
        // outside D the characteristic exits at once and v vanishes
        if !domain.contains(&q.x) {
            payoffs.push(0.0);
            continue;
        }
        let slot = nodes.binary_search(&q.node).unwrap();
        let inv = if lazy {
            let table = &mut lazy_tables[slot];
            let last = seeds.len() - 1;
            let (lo, hi) = (table.image(ch, 0, &mut scratch.ws)?, table.image(ch, last, &mut scratch.ws)?);
            if !(lo <= q.x[0] && q.x[0] <= hi) {
                return Err(Error::OutOfRange { node: q.node });
            }
            let mut tracking = Tracking {
                domain,
                record: &mut scratch.record,
            };
            match &previous[slot] {
                Some(p) => ch.invert_from(
                    q.node,
                    Guess {
                        y: &p.y,
                        image: &p.image,
                        jacobian: Some(&p.jacobian),
                    },
                    &q.x,
                    opts.tolerance,
                    &mut tracking,
                    &mut scratch.ws,
                )?,
                None => {
                    let j = table.nearest(ch, q.x[0], &mut scratch.ws)?.ok_or(Error::OutOfRange { node: q.node })?;
                    let y = [table.seed(j)];
                    let guess = Guess {
                        y: &y,
                        image: &q.x,
                        jacobian: None,
                    };
                    ch.invert_from(q.node, guess, &q.x, opts.tolerance, &mut tracking, &mut scratch.ws)?
                }
            }
        } else {
            let table = &tables[slot];
            if !table.covers(&q.x) {
                return Err(Error::OutOfRange { node: q.node });
            }
            // earlier solutions at the same node join the seeds as starting points
            let seed = table.nearest(&q.x);
            let seed_gap = squared_gap(table.image(seed), &q.x);
            let guess = match &previous[slot] {
                Some(p) if squared_gap(&p.image, &q.x) <= seed_gap => Guess {
                    y: &p.y,
                    image: &p.image,
                    jacobian: Some(&p.jacobian),
                },
                _ => Guess {
                    y: table.seed(seed),
                    image: table.image(seed),
                    jacobian: None,
                },
            };
            ch.invert_from(
                q.node,
                guess,
                &q.x,
                opts.tolerance,
                &mut Tracking {
                    domain,
                    record: &mut scratch.record,
                },
                &mut scratch.ws,
            )?
        };
        scratch.record.weights.check()?;
        max_residual = max_residual.max(inv.residual);
        let rec = &scratch.record;
        payoffs.push(payoff_from_record(
            ch.coeffs().psi(&inv.y),
            &rec.dist,
            &rec.normal_diffusion,
            &rec.weights.paths,
            q.node,
            dt,
            opts.exit,
        ));
        previous[slot] = Some(inv);
    }
    Ok((payoffs, max_residual))
}

fn squared_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// CSV rows: scenario id, t, x components, samples, estimate, stderr, failures.
pub fn write_estimates_csv<W: Write>(mut out: W, scenario: &str, estimates: &[RepresentationEstimate]) -> Result<()> {
    let d = estimates.first().map_or(1, |e| e.query.x.len());
    let xs: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    writeln!(out, "scenario,t,{},samples,v,stderr,failures", xs.join(","))?;
    for e in estimates {
        let x: Vec<String> = e.query.x.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(
            out,
            "{scenario},{:.16e},{},{},{:.16e},{:.16e},{}",
            e.t,
            x.join(","),
            e.samples,
            e.mean,
            e.stderr,
            e.failures
        )?;
    }
    Ok(())
}
