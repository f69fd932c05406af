//! Euler-Maruyama integration and path ensembles.

use rayon::prelude::*;

use crate::dynamics::{BoundaryPolicy, Dynamics};
use crate::error::{Error, Result};
use crate::rng::{make_stream, RandomStream};
use crate::schedule::TimeSchedule;

/// A single integrated path with every step stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub schedule: TimeSchedule,
    pub dimension: usize,
    /// Row-major `(n_steps + 1) x dimension`.
    pub states: Vec<f64>,
    /// First step at which a clamp-absorb bound was reached.
    pub absorbed_at: Option<usize>,
}

impl Path {
    pub fn state(&self, step: usize) -> &[f64] {
        &self.states[step * self.dimension..(step + 1) * self.dimension]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.schedule.n_steps())
    }
}

/// Steps whose normals are drawn from the stream in one call.
const NOISE_CHUNK: usize = 256;

/// Runs the scheme, handing every post-step state to `record`. Returns the
/// absorption step, if any. The stream ends just past the last variate used.
fn integrate(
    dynamics: &Dynamics,
    x0: &[f64],
    schedule: &TimeSchedule,
    stream: &mut RandomStream,
    mut record: impl FnMut(usize, &[f64]),
) -> Result<Option<usize>> {
    dynamics.check_state(x0)?;
    let dim = dynamics.dimension();
    struct Step<'a> {
        drift: &'a (dyn Fn(f64) -> f64 + Send + Sync),
        amplitude: &'a (dyn Fn(f64) -> f64 + Send + Sync),
        clamp: Option<(f64, f64)>,
    }
    let parts: Vec<Step> = dynamics
        .components()
        .iter()
        .map(|c| {
            let (drift, amplitude) = c.functions();
            let clamp = c
                .bounds()
                .filter(|b| b.policy == BoundaryPolicy::ClampAbsorb)
                .map(|b| (b.lower, b.upper));
            Step {
                drift,
                amplitude,
                clamp,
            }
        })
        .collect();
    let dt = schedule.dt();
    let sqrt_dt = dt.sqrt();
    let n_steps = schedule.n_steps();
    let start = stream.position();
    let mut used = 0u64;
    let mut noise = vec![0.0; dim * NOISE_CHUNK.min(n_steps.max(1))];
    let mut x = x0.to_vec();
    record(0, &x);
    let mut absorbed_at = None;
    let mut k = 0;
    while k < n_steps {
        let steps = (n_steps - k).min(NOISE_CHUNK);
        if absorbed_at.is_none() {
            stream.fill_normals(&mut noise[..steps * dim]);
        }
        for z in noise[..steps * dim].chunks_exact(dim) {
            if absorbed_at.is_none() {
                used += dim as u64;
                let mut hit = false;
                for (i, part) in parts.iter().enumerate() {
                    let xi = x[i];
                    let dw = sqrt_dt * z[i];
                    let mut next = xi + (part.drift)(xi) * dt + (part.amplitude)(xi) * dw;
                    if let Some((lower, upper)) = part.clamp {
                        if next >= upper {
                            next = upper;
                            hit = true;
                        } else if next <= lower {
                            next = lower;
                            hit = true;
                        }
                    }
                    if !next.is_finite() {
                        stream.seek(start + used);
                        return Err(Error::NonFinite { step: k + 1 });
                    }
                    x[i] = next;
                }
                if hit {
                    absorbed_at = Some(k + 1);
                }
            }
            k += 1;
            record(k, &x);
        }
    }
    stream.seek(start + used);
    Ok(absorbed_at)
}

/// Integrates one path of `dynamics` from `x0` with noise from `stream`.
pub fn euler_maruyama(
    dynamics: &Dynamics,
    x0: &[f64],
    schedule: &TimeSchedule,
    stream: &mut RandomStream,
) -> Result<Path> {
    let dim = dynamics.dimension();
    let mut states = Vec::with_capacity((schedule.n_steps() + 1) * dim);
    let absorbed_at = integrate(dynamics, x0, schedule, stream, |_, x| {
        states.extend_from_slice(x)
    })?;
    Ok(Path {
        schedule: *schedule,
        dimension: dim,
        states,
        absorbed_at,
    })
}

/// Which steps an ensemble keeps in memory. Step 0 and the terminal step
/// are always kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    All,
    Every(usize),
    Terminal,
    Steps(Vec<usize>),
}

impl Record {
    fn steps(&self, n_steps: usize) -> Vec<usize> {
        let mut steps: Vec<usize> = match self {
            Record::All => (0..=n_steps).collect(),
            Record::Every(k) => (0..=n_steps).step_by((*k).max(1)).collect(),
            Record::Terminal => vec![],
            Record::Steps(v) => v.iter().copied().filter(|&s| s <= n_steps).collect(),
        };
        steps.push(0);
        steps.push(n_steps);
        steps.sort_unstable();
        steps.dedup();
        steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub schedule: TimeSchedule,
    pub n_paths: usize,
    pub dimension: usize,
    pub recorded_steps: Vec<usize>,
    /// `n_paths x recorded_steps.len() x dimension`, row-major.
    pub states: Vec<f64>,
    pub absorbed_at: Vec<Option<usize>>,
    pub master_seed: u64,
    pub description: String,
}

impl PathEnsemble {
    pub fn recorded_index(&self, step: usize) -> Option<usize> {
        self.recorded_steps.binary_search(&step).ok()
    }

    fn stride(&self) -> usize {
        self.recorded_steps.len() * self.dimension
    }

    pub fn state(&self, path: usize, step: usize) -> Option<&[f64]> {
        let r = self.recorded_index(step)?;
        let start = path * self.stride() + r * self.dimension;
        Some(&self.states[start..start + self.dimension])
    }

    pub fn terminal(&self, path: usize) -> &[f64] {
        self.state(path, self.schedule.n_steps())
            .expect("terminal step is always recorded")
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_paths).map(move |p| self.terminal(p))
    }
}

/// Simulates `n_paths` paths, path `p` using stream `(master_seed, p)`, and
/// keeps every step.
pub fn simulate_ensemble(
    dynamics: &Dynamics,
    x0: &[f64],
    schedule: &TimeSchedule,
    n_paths: usize,
    master_seed: u64,
) -> Result<PathEnsemble> {
    simulate_ensemble_recorded(dynamics, x0, schedule, n_paths, master_seed, &Record::All)
}

/// As [`simulate_ensemble`] but keeping only the steps selected by `record`.
/// Results do not depend on the size of the rayon pool it runs in.
pub fn simulate_ensemble_recorded(
    dynamics: &Dynamics,
    x0: &[f64],
    schedule: &TimeSchedule,
    n_paths: usize,
    master_seed: u64,
    record: &Record,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::InvalidParameter {
            name: "n_paths",
            reason: "must be at least 1".into(),
        });
    }
    dynamics.check_state(x0)?;
    let dim = dynamics.dimension();
    let recorded_steps = record.steps(schedule.n_steps());
    let stride = recorded_steps.len() * dim;
    let mut states = vec![0.0; n_paths * stride];
    let mut absorbed_at = vec![None; n_paths];

    let outcomes: Vec<Result<()>> = states
        .par_chunks_mut(stride)
        .zip(absorbed_at.par_iter_mut())
        .enumerate()
        .map(|(p, (chunk, absorbed))| {
            let mut stream = make_stream(master_seed, p as u64);
            let mut next = 0;
            *absorbed = integrate(dynamics, x0, schedule, &mut stream, |k, x| {
                if next < recorded_steps.len() && recorded_steps[next] == k {
                    chunk[next * dim..(next + 1) * dim].copy_from_slice(x);
                    next += 1;
                }
            })
            .map_err(|e| Error::Path {
                path: p,
                source: Box::new(e),
            })?;
            Ok(())
        })
        .collect();
    if let Some(err) = outcomes.into_iter().find_map(|r| r.err()) {
        return Err(err);
    }

    Ok(PathEnsemble {
        schedule: *schedule,
        n_paths,
        dimension: dim,
        recorded_steps,
        states,
        absorbed_at,
        master_seed,
        description: dynamics.description().to_string(),
    })
}

/// Per-component sample moments at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub step: usize,
    pub time: f64,
    pub n_paths: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub mean_standard_error: Vec<f64>,
    pub variance_standard_error: Vec<f64>,
}

pub fn ensemble_moments(ensemble: &PathEnsemble, step: usize) -> Result<Moments> {
    if step > ensemble.schedule.n_steps() {
        return Err(Error::Domain(format!(
            "step {step} beyond the schedule ({} steps)",
            ensemble.schedule.n_steps()
        )));
    }
    if ensemble.n_paths < 2 {
        return Err(Error::VarianceUndefined {
            n_paths: ensemble.n_paths,
        });
    }
    let r = ensemble
        .recorded_index(step)
        .ok_or(Error::StepNotRecorded { step })?;
    let dim = ensemble.dimension;
    let stride = ensemble.stride();
    let n = ensemble.n_paths as f64;
    let value = |p: usize, c: usize| ensemble.states[p * stride + r * dim + c];

    let mut mean = vec![0.0; dim];
    let mut variance = vec![0.0; dim];
    let mut mean_se = vec![0.0; dim];
    let mut var_se = vec![0.0; dim];
    for c in 0..dim {
        let m = (0..ensemble.n_paths).map(|p| value(p, c)).sum::<f64>() / n;
        let (mut m2, mut m4) = (0.0, 0.0);
        for p in 0..ensemble.n_paths {
            let d = value(p, c) - m;
            let d2 = d * d;
            m2 += d2;
            m4 += d2 * d2;
        }
        let var = m2 / (n - 1.0);
        let central2 = m2 / n;
        let central4 = m4 / n;
        mean[c] = m;
        variance[c] = var;
        mean_se[c] = (var / n).sqrt();
        // large-sample standard error of the unbiased variance
        let v = (central4 - central2 * central2 * (n - 3.0) / (n - 1.0)) / n;
        var_se[c] = v.max(0.0).sqrt();
    }
    Ok(Moments {
        step,
        time: ensemble.schedule.time(step),
        n_paths: ensemble.n_paths,
        mean,
        variance,
        mean_standard_error: mean_se,
        variance_standard_error: var_se,
    })
}
