// SPDX-License-Identifier: Apache-2.0

//! Mixed-size placement prototype.
//!
//! Quadratic clique wirelength is minimized by damped Jacobi-preconditioned
//! descent while a bin-density field pushes instances out of bins whose
//! utilization exceeds the current target density. Fixed macros count as
//! fully occupied bins.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::connectivity::CellCluster;
use crate::error::{Error, Result};
use crate::evaluator;
use crate::geometry::{Point, Rect};
use crate::netlist::{Design, PinRef};
use crate::rng;

/// Geometric target-density decay from `td_init` to `td_finish` over
/// `steps` iterations, clamped at `td_finish` afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensitySchedule {
    pub td_init: f64,
    pub td_finish: f64,
    pub steps: u32,
}

impl Default for DensitySchedule {
    fn default() -> Self {
        DensitySchedule {
            td_init: 0.92,
            td_finish: 0.5,
            steps: 10,
        }
    }
}

impl DensitySchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.td_finish && self.td_finish <= self.td_init && self.td_init < 1.0) || self.steps == 0 {
            return Err(Error::Config(format!(
                "density schedule needs 0 < td_finish <= td_init < 1, got {} / {}",
                self.td_finish, self.td_init
            )));
        }
        Ok(())
    }

    pub fn decay(&self) -> f64 {
        (self.td_finish / self.td_init).powf(1.0 / f64::from(self.steps))
    }

    /// Target density at 1-based iteration `k`.
    pub fn at(&self, k: usize) -> f64 {
        let e = k.saturating_sub(1).min(i32::MAX as usize) as i32;
        (self.td_init * self.decay().powi(e)).max(self.td_finish)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrototypeConfig {
    /// Upper bound on bins per side; small designs use a coarser grid.
    pub bins: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Overflow ratio below which spreading stops ramping.
    pub overflow_target: f64,
    pub jitter_frac: f64,
    pub divergence_window: usize,
}

impl Default for PrototypeConfig {
    fn default() -> Self {
        PrototypeConfig {
            bins: 128,
            max_iters: 500,
            rel_tol: 1e-5,
            overflow_target: 0.1,
            jitter_frac: 0.01,
            divergence_window: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    /// Center of every instance, indexed by instance id.
    pub positions: Vec<Point>,
    pub density_used: f64,
    pub hpwl: f64,
    pub iterations: usize,
}

struct Grid {
    n: usize,
    bw: f64,
    bh: f64,
}

impl Grid {
    fn bin_area(&self) -> f64 {
        self.bw * self.bh
    }

    /// Adds `scale * overlap` of `r` with each bin.
    fn splat(&self, map: &mut [f64], r: &Rect, scale: f64) {
        let n = self.n;
        let x0 = ((r.x / self.bw).floor().max(0.0) as usize).min(n - 1);
        let x1 = ((r.x2() / self.bw).ceil().max(1.0) as usize).min(n);
        let y0 = ((r.y / self.bh).floor().max(0.0) as usize).min(n - 1);
        let y1 = ((r.y2() / self.bh).ceil().max(1.0) as usize).min(n);
        for by in y0..y1 {
            let ly = (r.y2().min((by + 1) as f64 * self.bh) - r.y.max(by as f64 * self.bh)).max(0.0);
            if ly == 0.0 {
                continue;
            }
            for bx in x0..x1 {
                let lx = (r.x2().min((bx + 1) as f64 * self.bw) - r.x.max(bx as f64 * self.bw)).max(0.0);
                map[by * n + bx] += scale * lx * ly;
            }
        }
    }

    /// Bilinear sample of the gradient of `field` at `p`, per unit length.
    fn gradient(&self, field: &[f64], p: Point) -> (f64, f64) {
        let n = self.n;
        let at = |x: isize, y: isize| -> f64 {
            let x = x.clamp(0, n as isize - 1) as usize;
            let y = y.clamp(0, n as isize - 1) as usize;
            field[y * n + x]
        };
        let gx = |x: isize, y: isize| (at(x + 1, y) - at(x - 1, y)) / (2.0 * self.bw);
        let gy = |x: isize, y: isize| (at(x, y + 1) - at(x, y - 1)) / (2.0 * self.bh);
        let fx = p.x / self.bw - 0.5;
        let fy = p.y / self.bh - 0.5;
        let ix = fx.floor() as isize;
        let iy = fy.floor() as isize;
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let lerp = |g: &dyn Fn(isize, isize) -> f64| {
            (1.0 - ty) * ((1.0 - tx) * g(ix, iy) + tx * g(ix + 1, iy))
                + ty * ((1.0 - tx) * g(ix, iy + 1) + tx * g(ix + 1, iy + 1))
        };
        (lerp(&gx), lerp(&gy))
    }
}

/// Running-sum box blur of radius `r` along rows then columns.
fn box_blur(src: &[f64], n: usize, r: usize, out: &mut [f64], tmp: &mut [f64]) {
    let norm = 1.0 / (2 * r + 1) as f64;
    for y in 0..n {
        let row = &src[y * n..(y + 1) * n];
        let mut acc: f64 = row[..=r.min(n - 1)].iter().sum();
        for x in 0..n {
            tmp[y * n + x] = acc * norm;
            if x + r + 1 < n {
                acc += row[x + r + 1];
            }
            if x >= r {
                acc -= row[x - r];
            }
        }
    }
    for x in 0..n {
        let mut acc: f64 = (0..=r.min(n - 1)).map(|y| tmp[y * n + x]).sum();
        for y in 0..n {
            out[y * n + x] = acc * norm;
            if y + r + 1 < n {
                acc += tmp[(y + r + 1) * n + x];
            }
            if y >= r {
                acc -= tmp[(y - r) * n + x];
            }
        }
    }
}

/// Multi-scale smoothed overflow potential.
fn potential(overflow: &[f64], n: usize, field: &mut [f64]) {
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n * n];
    let mut tmp = vec![0.0; n * n];
    field.iter_mut().for_each(|f| *f = 0.0);
    for r in [1usize, (n / 16).max(2), (n / 4).max(3)] {
        box_blur(overflow, n, r, &mut a, &mut tmp);
        box_blur(&a, n, r, &mut b, &mut tmp);
        field.iter_mut().zip(&b).for_each(|(f, v)| *f += v);
    }
}

fn clamp_center(p: Point, w: f64, h: f64, design: &Design) -> Point {
    let (cw, ch) = (design.outline.width, design.outline.height);
    let cx = if w >= cw { cw / 2.0 } else { p.x.clamp(w / 2.0, cw - w / 2.0) };
    let cy = if h >= ch { ch / 2.0 } else { p.y.clamp(h / 2.0, ch - h / 2.0) };
    Point::new(cx, cy)
}

/// Runs one prototype round at iteration `k`. `fixed` lists placed macros
/// with their lower-left rectangles; every other macro and every cell moves.
pub fn run_prototype(
    design: &Design,
    fixed: &[(usize, Rect)],
    schedule: &DensitySchedule,
    k: usize,
    seed: u64,
    cfg: &PrototypeConfig,
) -> Result<Prototype> {
    schedule.validate()?;
    let td = schedule.at(k);
    let n_inst = design.instances.len();
    let mut is_fixed = vec![false; n_inst];
    let mut pos = vec![design.outline.center(); n_inst];
    for &(m, r) in fixed {
        is_fixed[m] = true;
        pos[m] = r.center();
    }
    let movable: Vec<usize> = (0..n_inst).filter(|&i| !is_fixed[i]).collect();
    if movable.is_empty() {
        let hpwl = evaluator::hpwl(design, &pos)?;
        return Ok(Prototype {
            positions: pos,
            density_used: td,
            hpwl,
            iterations: 0,
        });
    }

    let mut rng = rng::stream(seed, "prototype", k as u64);
    let jitter = cfg.jitter_frac * design.outline.width.min(design.outline.height);
    let c = design.outline.center();
    for &i in &movable {
        let inst = &design.instances[i];
        let p = Point::new(
            c.x + rng.gen_range(-1.0..=1.0) * jitter,
            c.y + rng.gen_range(-1.0..=1.0) * jitter,
        );
        pos[i] = clamp_center(p, inst.width, inst.height, design);
    }

    let side = ((movable.len() as f64).sqrt().ceil() as usize * 2).next_power_of_two();
    let nb = side.clamp(16, cfg.bins.max(16));
    let grid = Grid {
        n: nb,
        bw: design.outline.width / nb as f64,
        bh: design.outline.height / nb as f64,
    };
    let mut obstacle = vec![0.0; nb * nb];
    for &(_, r) in fixed {
        grid.splat(&mut obstacle, &r, 1.0);
    }
    let movable_area: f64 = movable.iter().map(|&i| design.instances[i].area()).sum::<f64>().max(1e-12);

    // Jacobi diagonal of the clique Laplacian with pair weight 2/q.
    let mut diag = vec![0.0; n_inst];
    for net in &design.nets {
        let q = net.pins.len() as f64;
        let w = 2.0 / q;
        for pin in &net.pins {
            if let PinRef::Instance(i) = pin.target {
                diag[i] += 2.0 * w * (q - 1.0);
            }
        }
    }

    let mut grad = vec![Point::default(); n_inst];
    let mut density = vec![0.0; nb * nb];
    let mut overflow = vec![0.0; nb * nb];
    let mut field = vec![0.0; nb * nb];
    let bin_area = grid.bin_area();
    let damping = 0.8;
    let mut eta = -1.0f64;
    let mut prev: Option<(f64, f64)> = None; // (wirelength, density penalty)
    let mut prev_obj = f64::INFINITY;
    let mut rising = 0usize;
    let mut iterations = 0;

    for it in 0..cfg.max_iters {
        iterations = it + 1;
        // Quadratic wirelength and its gradient.
        grad.iter_mut().for_each(|g| *g = Point::default());
        let mut wl = 0.0;
        for net in &design.nets {
            let q = net.pins.len() as f64;
            let w = 2.0 / q;
            let (mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0);
            for pin in &net.pins {
                let p = pin_pos(design, &pos, pin.target, pin.offset);
                sx += p.x;
                sy += p.y;
                sxx += p.x * p.x;
                syy += p.y * p.y;
            }
            wl += w * (q * sxx - sx * sx + q * syy - sy * sy);
            for pin in &net.pins {
                if let PinRef::Instance(i) = pin.target {
                    let p = pin_pos(design, &pos, pin.target, pin.offset);
                    grad[i].x += 2.0 * w * (q * p.x - sx);
                    grad[i].y += 2.0 * w * (q * p.y - sy);
                }
            }
        }

        // Bin density and overflow.
        // Fixed blockages reduce a bin's capacity but never overflow on their own.
        density.iter_mut().for_each(|d| *d = 0.0);
        for &i in &movable {
            let inst = &design.instances[i];
            // Macros count at the target density so a lone macro never overflows.
            let weight = if i < design.num_macros { td } else { 1.0 };
            grid.splat(&mut density, &Rect::centered(pos[i], inst.width, inst.height), weight);
        }
        let mut penalty = 0.0;
        let mut overflow_area = 0.0;
        for ((o, d), blocked) in overflow.iter_mut().zip(&density).zip(&obstacle) {
            let capacity = (td * bin_area - blocked).max(0.0);
            *o = ((d - capacity) / bin_area).max(0.0);
            penalty += *o * *o * bin_area;
            overflow_area += *o * bin_area;
        }
        let tau = overflow_area / movable_area;
        potential(&overflow, nb, &mut field);

        let mut dgrad = vec![(0.0, 0.0); movable.len()];
        let (mut wl_norm, mut d_norm) = (0.0, 0.0);
        for (slot, &i) in movable.iter().enumerate() {
            let a = design.instances[i].area().max(bin_area * 1e-3);
            let (gx, gy) = grid.gradient(&field, pos[i]);
            dgrad[slot] = (a * gx, a * gy);
            wl_norm += grad[i].x.abs() + grad[i].y.abs();
            d_norm += (a * gx).abs() + (a * gy).abs();
        }
        if eta < 0.0 {
            eta = if d_norm > 0.0 && wl_norm > 0.0 { 0.1 * wl_norm / d_norm } else { 1.0 };
        }

        if let Some((pwl, pd)) = prev {
            let before = pwl + eta * pd;
            let after = wl + eta * penalty;
            if after > before && tau <= cfg.overflow_target {
                // Spread enough and no longer improving: the density force
                // only approximates the penalty gradient, so stop here.
                break;
            }
            rising = if after > before { rising + 1 } else { 0 };
            if rising >= cfg.divergence_window {
                return Err(Error::Divergence(rising));
            }
        }
        let obj = wl + eta * penalty;
        let converged = tau <= cfg.overflow_target
            && prev_obj.is_finite()
            && (prev_obj - obj).abs() <= cfg.rel_tol * obj.abs().max(1e-12);
        if converged {
            break;
        }
        prev_obj = obj;
        prev = Some((wl, penalty));

        let s2 = grid.bw * grid.bh;
        for (slot, &i) in movable.iter().enumerate() {
            let inst = &design.instances[i];
            let a = inst.area().max(bin_area * 1e-3);
            let pre = diag[i] + eta * a / s2;
            if pre <= 0.0 {
                continue;
            }
            let (dx, dy) = dgrad[slot];
            let step = Point::new(
                -damping * (grad[i].x + eta * dx) / pre,
                -damping * (grad[i].y + eta * dy) / pre,
            );
            let next = Point::new(pos[i].x + step.x, pos[i].y + step.y);
            pos[i] = clamp_center(next, inst.width, inst.height, design);
        }
        if tau > cfg.overflow_target {
            eta *= 1.05;
        }
    }

    let hpwl = evaluator::hpwl(design, &pos)?;
    Ok(Prototype {
        positions: pos,
        density_used: td,
        hpwl,
        iterations,
    })
}

fn pin_pos(design: &Design, pos: &[Point], target: PinRef, offset: Point) -> Point {
    match target {
        PinRef::Instance(i) => Point::new(pos[i].x + offset.x, pos[i].y + offset.y),
        PinRef::Port(p) => design.ports[p].pos,
    }
}

/// Injection file: `{"positions":[{"ref": name, "x": cx, "y": cy}]}` with
/// instance centers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrototypeFile {
    pub positions: Vec<PositionRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositionRecord {
    #[serde(rename = "ref")]
    pub reference: String,
    pub x: f64,
    pub y: f64,
}

impl Prototype {
    pub fn to_file_format(&self, design: &Design) -> PrototypeFile {
        PrototypeFile {
            positions: design
                .instances
                .iter()
                .map(|i| PositionRecord {
                    reference: i.name.clone(),
                    x: self.positions[i.id].x,
                    y: self.positions[i.id].y,
                })
                .collect(),
        }
    }
}

pub fn prototype_from_file(design: &Design, file: &PrototypeFile) -> Result<Prototype> {
    let by_name: HashMap<&str, (f64, f64)> = file
        .positions
        .iter()
        .map(|p| (p.reference.as_str(), (p.x, p.y)))
        .collect();
    let mut positions = Vec::with_capacity(design.instances.len());
    for inst in &design.instances {
        let p = match (by_name.get(inst.name.as_str()), inst.fixed) {
            (Some(&(x, y)), _) => Point::new(x, y),
            (None, Some(ll)) => Point::new(ll.x + inst.width / 2.0, ll.y + inst.height / 2.0),
            (None, None) => return Err(Error::MissingInstance(inst.name.clone())),
        };
        positions.push(clamp_center(p, inst.width, inst.height, design));
    }
    let hpwl = evaluator::hpwl(design, &positions)?;
    Ok(Prototype {
        positions,
        density_used: f64::NAN,
        hpwl,
        iterations: 0,
    })
}

pub fn inject_prototype(design: &Design, path: impl AsRef<Path>) -> Result<Prototype> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: PrototypeFile = serde_json::from_str(&text).map_err(Error::from_json)?;
    prototype_from_file(design, &file)
}

/// Area-weighted mean of member cell centers (plain mean for zero-area
/// clusters); empty clusters sit at the outline center.
pub fn cluster_centroids(design: &Design, prototype: &Prototype, clusters: &[CellCluster]) -> Vec<Point> {
    clusters
        .iter()
        .map(|c| {
            let total: f64 = c.members.iter().map(|&m| design.instances[m].area()).sum();
            if c.members.is_empty() {
                return design.outline.center();
            }
            let weight = |m: usize| if total > 0.0 { design.instances[m].area() } else { 1.0 };
            let norm: f64 = c.members.iter().map(|&m| weight(m)).sum();
            let (sx, sy) = c.members.iter().fold((0.0, 0.0), |(sx, sy), &m| {
                let p = prototype.positions[m];
                (sx + weight(m) * p.x, sy + weight(m) * p.y)
            });
            Point::new(sx / norm, sy / norm)
        })
        .collect()
}

/// Uniformly random centers for every movable instance, used as the
/// wirelength baseline.
pub fn random_positions(design: &Design, fixed: &[(usize, Rect)], seed: u64) -> Vec<Point> {
    let mut rng = rng::stream(seed, "random-prototype", 0);
    let mut pos: Vec<Point> = design
        .instances
        .iter()
        .map(|inst| {
            let p = Point::new(
                rng.gen_range(0.0..=design.outline.width),
                rng.gen_range(0.0..=design.outline.height),
            );
            clamp_center(p, inst.width, inst.height, design)
        })
        .collect();
    for &(m, r) in fixed {
        pos[m] = r.center();
    }
    pos
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{generate_synthetic, ChipOutline, SyntheticSpec};

    #[test]
    fn schedule_endpoints() {
        let s = DensitySchedule::default();
        assert_eq!(s.at(1), 0.92);
        assert!((s.at(11) - 0.5).abs() <= 1e-12);
        assert_eq!(s.at(15), 0.5);
        for k in 1..30 {
            assert!(s.at(k + 1) <= s.at(k));
        }
    }

    #[test]
    fn invalid_schedule_rejected() {
        let s = DensitySchedule {
            td_init: 0.4,
            td_finish: 0.5,
            steps: 10,
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn single_macro_pulled_to_port() {
        let d = Design::from_json(
            r#"{"outline":{"width":100,"height":100},
                "macros":[{"name":"m","width":10,"height":10}],
                "ports":[{"name":"p","x":0,"y":50}],
                "nets":[{"name":"n","pins":[{"ref":"m"},{"ref":"p"}]}]}"#,
        )
        .unwrap();
        let p = run_prototype(&d, &[], &DensitySchedule::default(), 1, 1, &PrototypeConfig::default()).unwrap();
        // Port-adjacent legal position: center at half the macro width.
        assert!(p.positions[0].dist(Point::new(5.0, 50.0)) <= 5.0, "{:?}", p.positions[0]);
        assert_eq!(p.density_used, 0.92);
    }

    #[test]
    fn empty_movable_set_is_noop() {
        let d = Design::from_json(
            r#"{"outline":{"width":100,"height":100},
                "macros":[{"name":"m","width":10,"height":10}],
                "ports":[{"name":"p","x":0,"y":50}],
                "nets":[{"name":"n","pins":[{"ref":"m"},{"ref":"p"}]}]}"#,
        )
        .unwrap();
        let r = Rect::new(20.0, 30.0, 10.0, 10.0);
        let p = run_prototype(&d, &[(0, r)], &DensitySchedule::default(), 3, 1, &PrototypeConfig::default()).unwrap();
        assert_eq!(p.positions[0], Point::new(25.0, 35.0));
        assert_eq!(p.hpwl, 25.0 + 15.0);
        assert_eq!(p.iterations, 0);
    }

    #[test]
    fn deterministic_and_better_than_random() {
        let d = generate_synthetic(&SyntheticSpec::new(4, 8, 200, 300, ChipOutline::new(100.0, 100.0).unwrap())).unwrap();
        let cfg = PrototypeConfig::default();
        let a = run_prototype(&d, &[], &DensitySchedule::default(), 1, 7, &cfg).unwrap();
        let b = run_prototype(&d, &[], &DensitySchedule::default(), 1, 7, &cfg).unwrap();
        assert_eq!(a, b);
        let rand = evaluator::hpwl(&d, &random_positions(&d, &[], 7)).unwrap();
        assert!(a.hpwl < rand, "{} vs {}", a.hpwl, rand);
        let die = d.outline.rect();
        for (i, p) in a.positions.iter().enumerate() {
            let inst = &d.instances[i];
            assert!(Rect::centered(*p, inst.width, inst.height).within(&die, 1e-9));
        }
    }

    #[test]
    fn centroids_are_area_weighted() {
        let d = Design::from_json(
            r#"{"outline":{"width":100,"height":100},
                "cells":[{"name":"a","width":1,"height":1},{"name":"b","width":1,"height":1},
                         {"name":"c","width":1,"height":1},{"name":"e","width":3,"height":1}]}"#,
        )
        .unwrap();
        let proto = Prototype {
            positions: vec![
                Point::new(0.0, 0.0),
                Point::new(10.0, 0.0),
                Point::new(0.0, 0.0),
                Point::new(4.0, 0.0),
            ],
            density_used: 0.9,
            hpwl: 0.0,
            iterations: 0,
        };
        let clusters = vec![
            CellCluster {
                id: 0,
                members: vec![0, 1],
                centroid: Point::default(),
            },
            CellCluster {
                id: 1,
                members: vec![2, 3],
                centroid: Point::default(),
            },
        ];
        let c = cluster_centroids(&d, &proto, &clusters);
        assert_eq!(c[0], Point::new(5.0, 0.0));
        assert_eq!(c[1], Point::new(3.0, 0.0));
    }

    #[test]
    fn injection_requires_every_instance() {
        let d = Design::from_json(
            r#"{"outline":{"width":100,"height":100},
                "macros":[{"name":"m","width":10,"height":10}],
                "cells":[{"name":"a","width":1,"height":1}]}"#,
        )
        .unwrap();
        let full = PrototypeFile {
            positions: vec![
                PositionRecord { reference: "m".into(), x: 30.0, y: 40.0 },
                PositionRecord { reference: "a".into(), x: 1.0, y: 2.0 },
            ],
        };
        let p = prototype_from_file(&d, &full).unwrap();
        assert_eq!(p.positions, vec![Point::new(30.0, 40.0), Point::new(1.0, 2.0)]);
        let partial = PrototypeFile {
            positions: full.positions[..1].to_vec(),
        };
        match prototype_from_file(&d, &partial) {
            Err(Error::MissingInstance(name)) => assert_eq!(name, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
