// SPDX-License-Identifier: Apache-2.0

//! Gaussian-process tuning of the overlap weight and the seven cost weights
//! against a self-normalized proxy objective.
//!
//! Parameters live in the open unit cube: `u[0]` is the overlap weight and
//! `u[1..]` are half the cost weights, so the defaults sit inside the cube.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::driver::{run_pipeline, PipelineConfig};
use crate::error::{Error, Result};
use crate::evaluator::Metrics;
use crate::netlist::Design;
use crate::rng;

pub const DIM: usize = 8;
const EPS: f64 = 1e-9;
const EDGE: f64 = 1e-6;
const HALTON_BASES: [u32; DIM] = [2, 3, 5, 7, 11, 13, 17, 19];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneSpec {
    pub budget: usize,
    /// Random candidates scored by expected improvement per step.
    pub candidates: usize,
}

impl Default for TuneSpec {
    fn default() -> Self {
        TuneSpec {
            budget: 50,
            candidates: 2000,
        }
    }
}

pub fn encode(config: &PipelineConfig) -> [f64; DIM] {
    let mut u = [0.0; DIM];
    u[0] = config.lambda;
    for t in 0..7 {
        u[t + 1] = config.weights.w[t] / 2.0;
    }
    u.map(|v| v.clamp(EDGE, 1.0 - EDGE))
}

pub fn decode(u: &[f64; DIM], base: &PipelineConfig) -> PipelineConfig {
    let mut cfg = base.clone();
    cfg.lambda = u[0];
    for t in 0..7 {
        cfg.weights.w[t] = 2.0 * u[t + 1];
    }
    cfg
}

/// Proxy quality terms of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyTerms {
    pub hpwl: f64,
    pub notch: f64,
    pub periphery: f64,
}

impl From<&Metrics> for ProxyTerms {
    fn from(m: &Metrics) -> Self {
        ProxyTerms {
            hpwl: m.hpwl,
            notch: m.total_notch,
            periphery: m.mean_periphery_dist,
        }
    }
}

impl ProxyTerms {
    /// Sum of guarded ratios against `baseline`; exactly 3 for the baseline.
    pub fn objective(&self, baseline: &ProxyTerms) -> f64 {
        let ratio = |v: f64, o: f64| (v + EPS) / (o + EPS);
        ratio(self.hpwl, baseline.hpwl) + ratio(self.notch, baseline.notch) + ratio(self.periphery, baseline.periphery)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSample {
    pub u: [f64; DIM],
    pub lambda: f64,
    pub w: [f64; 7],
    /// `None` when the pipeline failed for this point.
    pub objective: Option<f64>,
    pub terms: Option<ProxyTerms>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    /// Best configuration found; `place --config` accepts this file directly.
    pub config: PipelineConfig,
    pub best_objective: f64,
    pub best_index: usize,
    pub baseline: ProxyTerms,
    pub history: Vec<TuneSample>,
}

impl TuneResult {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("tune result serializes");
        s.push('\n');
        s
    }
}

/// Halton point `index` (1-based) shifted by `offset` modulo 1.
fn halton(index: u64, offset: &[f64; DIM]) -> [f64; DIM] {
    let mut u = [0.0; DIM];
    for (d, &base) in HALTON_BASES.iter().enumerate() {
        let (mut f, mut r, mut i) = (1.0, 0.0, index);
        while i > 0 {
            f /= f64::from(base);
            r += f * (i % u64::from(base)) as f64;
            i /= u64::from(base);
        }
        u[d] = ((r + offset[d]) % 1.0).clamp(EDGE, 1.0 - EDGE);
    }
    u
}

/// Zero-mean GP on standardized targets with an isotropic squared-exponential kernel.
struct Surrogate {
    xs: Vec<[f64; DIM]>,
    alpha: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    length: f64,
    mean: f64,
    scale: f64,
}

const NOISE: f64 = 1e-6;

fn kernel(a: &[f64; DIM], b: &[f64; DIM], length: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-0.5 * d2 / (length * length)).exp()
}

impl Surrogate {
    fn fit(xs: &[[f64; DIM]], ys: &[f64]) -> Option<Surrogate> {
        let n = ys.len();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(n, ys.iter().map(|v| (v - mean) / scale));
        let mut best: Option<(f64, Surrogate)> = None;
        for length in [0.1, 0.2, 0.4, 0.8, 1.6] {
            let k = DMatrix::from_fn(n, n, |i, j| kernel(&xs[i], &xs[j], length) + if i == j { NOISE } else { 0.0 });
            let Some(chol) = k.cholesky() else { continue };
            let alpha = chol.solve(&y);
            let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
            let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det;
            if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                best = Some((
                    lml,
                    Surrogate {
                        xs: xs.to_vec(),
                        alpha,
                        chol,
                        length,
                        mean,
                        scale,
                    },
                ));
            }
        }
        best.map(|b| b.1)
    }

    /// Posterior mean and standard deviation in objective units.
    fn predict(&self, x: &[f64; DIM]) -> (f64, f64) {
        let ks = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|xi| kernel(xi, x, self.length)));
        let mu = ks.dot(&self.alpha);
        let v = self.chol.solve(&ks);
        let var = (1.0 - ks.dot(&v)).max(1e-12);
        (self.mean + self.scale * mu, self.scale * var.sqrt())
    }
}

fn expected_improvement(mu: f64, sigma: f64, best: f64, normal: &Normal) -> f64 {
    let z = (best - mu) / sigma;
    (best - mu) * normal.cdf(z) + sigma * normal.pdf(z)
}

/// Tunes `base`'s overlap and cost weights on `design`. The first sample is
/// always `base` itself and serves as the normalization baseline.
pub fn tune(design: &Design, base: &PipelineConfig, spec: &TuneSpec, seed: u64) -> Result<TuneResult> {
    if spec.budget == 0 {
        return Err(Error::Config("tuning budget must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, "tune", 0);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let offset: [f64; DIM] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
    let n_init = spec.budget.div_ceil(5).max(1);

    let u0 = encode(base);
    let baseline_metrics = run_pipeline(design, &decode(&u0, base))?;
    let baseline = ProxyTerms::from(&baseline_metrics.metrics);
    let sample = |u: [f64; DIM], terms: Option<ProxyTerms>| {
        let cfg = decode(&u, base);
        TuneSample {
            u,
            lambda: cfg.lambda,
            w: cfg.weights.w,
            objective: terms.map(|t| t.objective(&baseline)),
            terms,
        }
    };
    let mut history = vec![sample(u0, Some(baseline))];

    while history.len() < spec.budget {
        let i = history.len();
        let u = if i < n_init {
            halton(i as u64, &offset)
        } else {
            let pts: Vec<([f64; DIM], f64)> = history.iter().filter_map(|s| s.objective.map(|o| (s.u, o))).collect();
            let xs: Vec<[f64; DIM]> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let incumbent = ys.iter().copied().fold(f64::INFINITY, f64::min);
            let best_u = pts.iter().find(|p| p.1 == incumbent).map(|p| p.0).unwrap_or(u0);
            match Surrogate::fit(&xs, &ys) {
                Some(gp) => {
                    let mut pick = (f64::NEG_INFINITY, best_u);
                    for c in 0..spec.candidates.max(1) {
                        let cand: [f64; DIM] = if c % 4 == 0 {
                            std::array::from_fn(|d| (best_u[d] + rng.gen_range(-0.05..0.05)).clamp(EDGE, 1.0 - EDGE))
                        } else {
                            std::array::from_fn(|_| rng.gen_range(EDGE..1.0 - EDGE))
                        };
                        let (mu, sigma) = gp.predict(&cand);
                        let ei = expected_improvement(mu, sigma, incumbent, &normal);
                        if ei > pick.0 {
                            pick = (ei, cand);
                        }
                    }
                    pick.1
                }
                None => std::array::from_fn(|_| rng.gen_range(EDGE..1.0 - EDGE)),
            }
        };
        let terms = run_pipeline(design, &decode(&u, base)).ok().map(|r| ProxyTerms::from(&r.metrics));
        history.push(sample(u, terms));
    }

    let (best_index, best_objective) = history
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.objective.map(|o| (i, o)))
        .fold((0, f64::INFINITY), |acc, (i, o)| if o < acc.1 { (i, o) } else { acc });
    Ok(TuneResult {
        config: decode(&history[best_index].u, base),
        best_objective,
        best_index,
        baseline,
        history,
    })
}
