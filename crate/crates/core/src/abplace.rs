// SPDX-License-Identifier: Apache-2.0

//! Angle-based macro placement on an axis-aligned ellipse.
//!
//! Every unplaced macro is parameterized by one angle, so its center is
//! `(cx + a cos t, cy + b sin t)`. The objective adds connection-weighted
//! distances to all entities and a smoothed pairwise overlap area among the
//! unplaced macros.

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::netlist::ChipOutline;
use crate::rng::Rng;

const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EllipseSchedule {
    pub beta_init: f64,
    pub beta_finish: f64,
    /// Iterations over which the scale decays from `beta_init` to `beta_finish`.
    pub steps: u32,
    /// Explicit per-iteration shrink factor, overriding the one implied by `steps`.
    pub gamma: Option<f64>,
}

impl Default for EllipseSchedule {
    fn default() -> Self {
        EllipseSchedule {
            beta_init: 0.9,
            beta_finish: 0.5,
            steps: 10,
            gamma: None,
        }
    }
}

impl EllipseSchedule {
    pub fn gamma(&self) -> f64 {
        self.gamma
            .unwrap_or_else(|| (self.beta_finish / self.beta_init).powf(1.0 / f64::from(self.steps)))
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.gamma();
        if !(0.0 < self.beta_finish && self.beta_finish <= self.beta_init && self.beta_init < 1.0)
            || self.steps == 0
            || !(0.0 < g && g <= 1.0)
        {
            return Err(Error::Config(format!(
                "ellipse schedule needs 0 < beta_finish <= beta_init < 1, got {} / {}",
                self.beta_finish, self.beta_init
            )));
        }
        Ok(())
    }

    pub fn ellipse(&self, outline: &ChipOutline, k: usize) -> Ellipse {
        build_ellipse(outline, self.beta_init, self.beta_finish, self.gamma(), k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub a: f64,
    pub b: f64,
    pub center: Point,
    /// Scaling of the half-dimensions at this iteration.
    pub scale: f64,
    pub k: usize,
}

pub fn build_ellipse(outline: &ChipOutline, beta_init: f64, beta_finish: f64, gamma: f64, k: usize) -> Ellipse {
    let e = k.saturating_sub(1).min(i32::MAX as usize) as i32;
    let scale = (beta_init * gamma.powi(e)).max(beta_finish);
    Ellipse {
        a: scale * outline.width / 2.0,
        b: scale * outline.height / 2.0,
        center: outline.center(),
        scale,
        k,
    }
}

impl Ellipse {
    pub fn point(&self, theta: f64) -> Point {
        Point::new(
            self.center.x + self.a * theta.cos(),
            self.center.y + self.b * theta.sin(),
        )
    }

    /// Derivative of [`Ellipse::point`] with respect to the angle.
    pub fn tangent(&self, theta: f64) -> Point {
        Point::new(-self.a * theta.sin(), self.b * theta.cos())
    }
}

pub fn wrap_angle(t: f64) -> f64 {
    let w = t.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Full-quadrant angle of each position about the ellipse center. A macro
/// exactly at the center draws a uniform angle from `rng`.
pub fn project_macros(positions: &[Point], ellipse: &Ellipse, rng: &mut Rng) -> Vec<f64> {
    positions
        .iter()
        .map(|p| {
            let dx = p.x - ellipse.center.x;
            let dy = p.y - ellipse.center.y;
            if dx == 0.0 && dy == 0.0 {
                rng.gen_range(0.0..TAU)
            } else {
                wrap_angle(dy.atan2(dx))
            }
        })
        .collect()
}

fn smooth_abs(x: f64, eps: f64) -> f64 {
    (x * x + eps * eps).sqrt() - eps
}

fn smooth_abs_grad(x: f64, eps: f64) -> f64 {
    x / (x * x + eps * eps).sqrt()
}

/// One angle-optimization instance.
#[derive(Debug, Clone)]
pub struct AngleProblem<'a> {
    pub ellipse: Ellipse,
    /// Entity index of every unplaced macro, one per angle.
    pub unplaced: Vec<usize>,
    /// (width, height) of every unplaced macro.
    pub sizes: Vec<(f64, f64)>,
    /// Fixed position of every entity; unused for unplaced entries.
    pub anchors: Vec<Point>,
    pub a: &'a DMatrix<f64>,
    pub lambda: f64,
    pub eps: f64,
}

impl<'a> AngleProblem<'a> {
    pub fn new(
        ellipse: Ellipse,
        unplaced: Vec<usize>,
        sizes: Vec<(f64, f64)>,
        anchors: Vec<Point>,
        a: &'a DMatrix<f64>,
        lambda: f64,
    ) -> Self {
        AngleProblem {
            ellipse,
            unplaced,
            sizes,
            anchors,
            a,
            lambda,
            eps: 1e-6,
        }
    }

    pub fn positions(&self, theta: &[f64]) -> Vec<Point> {
        theta.iter().map(|&t| self.ellipse.point(t)).collect()
    }

    /// Objective value and analytic gradient with respect to the angles.
    pub fn objective(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let n = self.unplaced.len();
        let eps = self.eps;
        let pts = self.positions(theta);
        let tan: Vec<Point> = theta.iter().map(|&t| self.ellipse.tangent(t)).collect();
        let mut slot_of = vec![usize::MAX; self.a.nrows()];
        for (s, &e) in self.unplaced.iter().enumerate() {
            slot_of[e] = s;
        }
        let mut value = 0.0;
        let mut grad = vec![0.0; n];

        for (s, &ei) in self.unplaced.iter().enumerate() {
            let pi = pts[s];
            for ej in 0..self.a.ncols() {
                let w = self.a[(ei, ej)];
                if w == 0.0 || ej == ei {
                    continue;
                }
                let other = slot_of[ej];
                let pj = if other == usize::MAX { self.anchors[ej] } else { pts[other] };
                let (dx, dy) = (pi.x - pj.x, pi.y - pj.y);
                let r = (dx * dx + dy * dy + eps * eps).sqrt();
                value += w * r;
                grad[s] += w * (dx * tan[s].x + dy * tan[s].y) / r;
                if other != usize::MAX {
                    grad[other] -= w * (dx * tan[other].x + dy * tan[other].y) / r;
                }
            }
        }

        if self.lambda != 0.0 {
            for i in 0..n {
                for j in i + 1..n {
                    let (dx, dy) = (pts[i].x - pts[j].x, pts[i].y - pts[j].y);
                    let ox = (self.sizes[i].0 + self.sizes[j].0) / 2.0 - smooth_abs(dx, eps);
                    let oy = (self.sizes[i].1 + self.sizes[j].1) / 2.0 - smooth_abs(dy, eps);
                    if ox <= 0.0 || oy <= 0.0 {
                        continue;
                    }
                    value += self.lambda * ox * oy;
                    let gdx = -oy * smooth_abs_grad(dx, eps) * self.lambda;
                    let gdy = -ox * smooth_abs_grad(dy, eps) * self.lambda;
                    grad[i] += gdx * tan[i].x + gdy * tan[i].y;
                    grad[j] -= gdx * tan[j].x + gdy * tan[j].y;
                }
            }
        }
        (value, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeConfig {
    pub max_iters: usize,
    /// Relative objective change below which the descent stops.
    pub tol: f64,
    pub initial_step: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            max_iters: 500,
            tol: 1e-6,
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub theta: Vec<f64>,
    /// Objective after initialization and after every accepted step.
    pub trace: Vec<f64>,
}

/// Sign-based descent with per-angle adaptive steps. A step is taken only if
/// it lowers the objective; otherwise it is halved up to 40 times, and the
/// run ends when no halving helps.
pub fn optimize(problem: &AngleProblem<'_>, theta0: &[f64], cfg: &OptimizeConfig) -> Result<OptimizeResult> {
    let n = theta0.len();
    let mut theta = theta0.to_vec();
    let (mut f, mut g) = problem.objective(&theta);
    let finite = |f: f64, g: &[f64]| f.is_finite() && g.iter().all(|v| v.is_finite());
    if !finite(f, &g) {
        return Err(Error::NonFinite(format!("initial objective {f}")));
    }
    let mut trace = vec![f];
    let mut step = vec![cfg.initial_step; n];
    let mut prev_sign = vec![0.0f64; n];
    let (grow, shrink, max_step, min_step) = (1.2, 0.5, 0.5, 1e-12);

    for _ in 0..cfg.max_iters {
        let sign: Vec<f64> = g.iter().map(|&v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 }).collect();
        for i in 0..n {
            let agree = sign[i] * prev_sign[i];
            if agree > 0.0 {
                step[i] = (step[i] * grow).min(max_step);
            } else if agree < 0.0 {
                step[i] = (step[i] * shrink).max(min_step);
            }
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = (0..n).map(|i| theta[i] - t * sign[i] * step[i]).collect();
            let (fc, gc) = problem.objective(&cand);
            if !finite(fc, &gc) {
                return Err(Error::NonFinite(format!("objective {fc} during line search")));
            }
            if fc < f {
                accepted = Some((cand, fc, gc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else { break };
        let rel = (f - fc) / f.abs().max(1e-300);
        theta = cand;
        f = fc;
        g = gc;
        prev_sign = sign;
        trace.push(f);
        if rel < cfg.tol {
            break;
        }
    }
    theta.iter_mut().for_each(|t| *t = wrap_angle(*t));
    Ok(OptimizeResult { theta, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn outline(w: f64, h: f64) -> ChipOutline {
        ChipOutline::new(w, h).unwrap()
    }

    #[test]
    fn ellipse_schedule_values() {
        let s = EllipseSchedule::default();
        let e1 = s.ellipse(&outline(100.0, 100.0), 1);
        assert_eq!((e1.a, e1.b), (45.0, 45.0));
        let e11 = s.ellipse(&outline(100.0, 100.0), 11);
        assert!((e11.a - 25.0).abs() < 1e-12);
        assert!((e11.scale - 0.5).abs() < 1e-12);
        let e2 = s.ellipse(&outline(200.0, 100.0), 2);
        assert!(e2.a < 90.0 && e2.b < 45.0);
        assert_eq!(s.ellipse(&outline(100.0, 100.0), 30).scale, 0.5);
    }

    #[test]
    fn projection_cases() {
        let e = Ellipse {
            a: 10.0,
            b: 10.0,
            center: Point::new(50.0, 50.0),
            scale: 0.2,
            k: 1,
        };
        let mut r = rng::stream(1, "t", 0);
        let t = project_macros(&[Point::new(53.0, 54.0)], &e, &mut r)[0];
        assert!((t - 4f64.atan2(3.0)).abs() < 1e-12);
        let p = e.point(t);
        assert!((p.x - 56.0).abs() < 1e-12 && (p.y - 58.0).abs() < 1e-12);

        let e2 = Ellipse { b: 5.0, ..e };
        let t = project_macros(&[Point::new(50.0, 57.0)], &e2, &mut r)[0];
        assert!((t - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let p = e2.point(t);
        assert!((p.x - 50.0).abs() < 1e-12 && (p.y - 55.0).abs() < 1e-12);

        let t = project_macros(&[Point::new(40.0, 40.0)], &e, &mut r)[0];
        assert!(t > std::f64::consts::PI && t < 1.5 * std::f64::consts::PI);
    }

    #[test]
    fn center_projection_is_seeded() {
        let e = build_ellipse(&outline(100.0, 100.0), 0.9, 0.5, 0.95, 1);
        let a = project_macros(&[e.center], &e, &mut rng::stream(3, "p", 0))[0];
        let b = project_macros(&[e.center], &e, &mut rng::stream(3, "p", 0))[0];
        assert_eq!(a, b);
        assert!((0.0..TAU).contains(&a));
    }

    #[test]
    fn coincident_unit_squares_overlap_once() {
        let e = build_ellipse(&outline(100.0, 100.0), 0.9, 0.5, 0.95, 1);
        let a = DMatrix::zeros(2, 2);
        let p = AngleProblem::new(e, vec![0, 1], vec![(1.0, 1.0); 2], vec![Point::default(); 2], &a, 0.02);
        let (v, _) = p.objective(&[1.0, 1.0]);
        assert!((v - 0.02).abs() < 1e-12, "{v}");
    }

    #[test]
    fn separated_macros_have_no_overlap() {
        let e = build_ellipse(&outline(100.0, 100.0), 0.9, 0.5, 0.95, 1);
        let a = DMatrix::zeros(2, 2);
        let p = AngleProblem::new(e, vec![0, 1], vec![(2.0, 2.0); 2], vec![Point::default(); 2], &a, 1.0);
        let (v, g) = p.objective(&[0.0, std::f64::consts::PI]);
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_anchor_distance_and_convergence() {
        let e = build_ellipse(&outline(100.0, 100.0), 0.9, 0.5, 0.95, 1);
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = 1.0;
        let phi = 2.3;
        let anchor = e.point(phi);
        let p = AngleProblem::new(e, vec![0], vec![(4.0, 4.0)], vec![Point::default(), anchor], &a, 0.02);
        let (v, _) = p.objective(&[0.5]);
        assert!((v - e.point(0.5).dist(anchor)).abs() < 1e-5);
        let res = optimize(&p, &[0.5], &OptimizeConfig::default()).unwrap();
        assert!((res.theta[0] - phi).abs() < 1e-3, "{}", res.theta[0]);
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_problem_leaves_angles_unchanged() {
        let e = build_ellipse(&outline(100.0, 60.0), 0.9, 0.5, 0.95, 1);
        let a = DMatrix::zeros(3, 3);
        let p = AngleProblem::new(e, vec![0, 1, 2], vec![(1.0, 1.0); 3], vec![Point::default(); 3], &a, 0.0);
        let theta0 = [0.1, 2.0, 5.0];
        let res = optimize(&p, &theta0, &OptimizeConfig::default()).unwrap();
        assert_eq!(res.theta, theta0.to_vec());
    }
}
