// SPDX-License-Identifier: Apache-2.0

//! Macro relocation: pick a (group, corner) pair by preference, try the
//! group at every empty slot of that corner's packing tree, refine the best
//! candidates with a small evolutionary search and commit the winner.

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::connectivity::MacroGroup;
use crate::error::{Error, Result};
use crate::evaluator::keepout_overlap;
use crate::geometry::{union_area, Point, Rect};
use crate::netlist::{ChipOutline, Design};
use crate::packing::{Corner, PackedPlacement, PackingTree, SlotRef};
use crate::rng::Rng;

pub const PENALTY_NAMES: [&str; 7] = ["disp", "conn", "peri", "group_bb", "corner_bb", "io", "notch"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    /// Candidate cost weights, in [`PENALTY_NAMES`] order.
    pub w: [f64; 7],
    /// Preference weights: group area, corner utilization, corner I/O area, distance.
    pub alpha: [f64; 4],
    /// Divide each preference term by its largest magnitude before weighting.
    pub normalize_preference: bool,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            w: [0.4, 0.4, 1.0, 1.6, 1.6, 1.6, 1.0],
            alpha: [5.0, 0.5, 4.0, 1.0],
            normalize_preference: false,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        if self.w.iter().chain(&self.alpha).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("cost and preference weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Keepout extent around every port, as fractions of the die.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IoKeepout {
    /// Inward depth as a fraction of min(W, H).
    pub depth_frac: f64,
    /// Extent along the edge as a fraction of that edge's length.
    pub width_frac: f64,
}

impl Default for IoKeepout {
    fn default() -> Self {
        IoKeepout {
            depth_frac: 0.05,
            width_frac: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IoRegions {
    pub rects: Vec<Rect>,
}

impl IoRegions {
    pub fn from_ports(design: &Design, keepout: &IoKeepout) -> Self {
        let (w, h) = (design.outline.width, design.outline.height);
        let die = design.outline.rect();
        let depth = keepout.depth_frac * w.min(h);
        let tol = design.outline.boundary_tol();
        let rects = design
            .ports
            .iter()
            .filter_map(|p| {
                let (x, y) = (p.pos.x, p.pos.y);
                let along_x = keepout.width_frac * w;
                let along_y = keepout.width_frac * h;
                let r = if y.abs() <= tol {
                    Rect::new(x - along_x / 2.0, 0.0, along_x, depth)
                } else if (y - h).abs() <= tol {
                    Rect::new(x - along_x / 2.0, h - depth, along_x, depth)
                } else if x.abs() <= tol {
                    Rect::new(0.0, y - along_y / 2.0, depth, along_y)
                } else {
                    Rect::new(w - depth, y - along_y / 2.0, depth, along_y)
                };
                r.intersection(&die)
            })
            .collect();
        IoRegions { rects }
    }

    /// Area of the keepout union inside `region`.
    pub fn area_in(&self, region: &Rect) -> f64 {
        let clipped: Vec<Rect> = self.rects.iter().filter_map(|r| r.intersection(region)).collect();
        union_area(&clipped)
    }
}

/// Corners whose quadrant is more than half keepout.
pub fn banned_corners(io: &IoRegions, outline: &ChipOutline) -> [bool; 4] {
    Corner::ALL.map(|c| {
        let q = c.quadrant(outline);
        io.area_in(&q) > 0.5 * q.area()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceMatrix {
    /// One row per entry of `groups`, one column per corner.
    pub values: Vec<[f64; 4]>,
    pub groups: Vec<usize>,
}

impl PreferenceMatrix {
    /// Largest finite entry not masked, ties going to the lowest (row, corner).
    pub fn argmax(&self, masked: &[[bool; 4]]) -> Option<(usize, Corner)> {
        let mut best: Option<(f64, usize, Corner)> = None;
        for (r, row) in self.values.iter().enumerate() {
            for c in Corner::ALL {
                let v = row[c.index()];
                if masked[r][c.index()] || v == f64::NEG_INFINITY {
                    continue;
                }
                if best.is_none_or(|(bv, _, _)| v > bv) {
                    best = Some((v, r, c));
                }
            }
        }
        best.map(|(_, r, c)| (r, c))
    }
}

/// Per-group inputs to the preference formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupSummary {
    pub area: f64,
    /// Gravity center of the member ellipse positions.
    pub center: Point,
}

/// `alpha1 * area - (alpha2 * util + alpha3 * io + alpha4 * dist)`, with
/// banned corners set to minus infinity.
pub fn compute_preference(
    groups: &[(usize, GroupSummary)],
    corner_util: [f64; 4],
    io: &IoRegions,
    outline: &ChipOutline,
    weights: &CostWeights,
) -> Result<PreferenceMatrix> {
    let banned = banned_corners(io, outline);
    let io_area = Corner::ALL.map(|c| io.area_in(&c.quadrant(outline)));
    let dist = |g: &GroupSummary, c: Corner| g.center.dist(c.point(outline));
    let scale = |vals: &mut dyn Iterator<Item = f64>| -> f64 {
        if !weights.normalize_preference {
            return 1.0;
        }
        let m = vals.fold(0.0, |m: f64, v| m.max(v.abs()));
        if m > 0.0 {
            1.0 / m
        } else {
            1.0
        }
    };
    let s_area = scale(&mut groups.iter().map(|g| g.1.area));
    let s_util = scale(&mut corner_util.iter().copied());
    let s_io = scale(&mut io_area.iter().copied());
    let s_dist = scale(&mut groups.iter().flat_map(|g| Corner::ALL.map(|c| dist(&g.1, c))));
    let [a1, a2, a3, a4] = weights.alpha;
    let values: Vec<[f64; 4]> = groups
        .iter()
        .map(|(_, g)| {
            Corner::ALL.map(|c| {
                let j = c.index();
                if banned[j] {
                    f64::NEG_INFINITY
                } else {
                    a1 * s_area * g.area
                        - (a2 * s_util * corner_util[j] + a3 * s_io * io_area[j] + a4 * s_dist * dist(g, c))
                }
            })
        })
        .collect();
    if values.iter().all(|row| row.iter().all(|v| *v == f64::NEG_INFINITY)) {
        return Err(Error::AllBanned);
    }
    Ok(PreferenceMatrix {
        values,
        groups: groups.iter().map(|g| g.0).collect(),
    })
}

/// Free space that is too narrow to use: cells of the grid induced by all
/// rectangle edges and the die boundary whose horizontal or vertical free run
/// is shorter than `threshold`.
pub fn notch_area(rects: &[Rect], outline: &ChipOutline, threshold: f64) -> f64 {
    notch_area_in(rects, outline, threshold, outline.rect())
}

/// [`notch_area`] restricted to cells inside `region`. Runs are measured in
/// `region` grown by `threshold`, which is exact for cells inside `region`.
pub fn notch_area_in(rects: &[Rect], outline: &ChipOutline, threshold: f64, region: Rect) -> f64 {
    let die = outline.rect();
    let Some(window) = region.inflate(threshold).intersection(&die) else {
        return 0.0;
    };
    let Some(count) = region.intersection(&die) else { return 0.0 };
    let blocks: Vec<Rect> = rects.iter().filter_map(|r| r.intersection(&window)).collect();
    let mut xs = vec![window.x, window.x2(), count.x, count.x2()];
    let mut ys = vec![window.y, window.y2(), count.y, count.y2()];
    for b in &blocks {
        xs.extend([b.x, b.x2()]);
        ys.extend([b.y, b.y2()]);
    }
    for v in [&mut xs, &mut ys] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let (nx, ny) = (xs.len() - 1, ys.len() - 1);
    if nx == 0 || ny == 0 {
        return 0.0;
    }
    let idx = |v: &[f64], t: f64| v.partition_point(|&a| a < t);
    let mut busy = vec![false; nx * ny];
    for b in &blocks {
        let (i0, i1) = (idx(&xs, b.x), idx(&xs, b.x2()));
        let (j0, j1) = (idx(&ys, b.y), idx(&ys, b.y2()));
        for j in j0..j1 {
            for i in i0..i1 {
                busy[j * nx + i] = true;
            }
        }
    }
    let mut notch = vec![false; nx * ny];
    for j in 0..ny {
        let mut i = 0;
        while i < nx {
            if busy[j * nx + i] {
                i += 1;
                continue;
            }
            let start = i;
            while i < nx && !busy[j * nx + i] {
                i += 1;
            }
            if xs[i] - xs[start] < threshold {
                (start..i).for_each(|k| notch[j * nx + k] = true);
            }
        }
    }
    for i in 0..nx {
        let mut j = 0;
        while j < ny {
            if busy[j * nx + i] {
                j += 1;
                continue;
            }
            let start = j;
            while j < ny && !busy[j * nx + i] {
                j += 1;
            }
            if ys[j] - ys[start] < threshold {
                (start..j).for_each(|k| notch[k * nx + i] = true);
            }
        }
    }
    let mut area = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let cx = 0.5 * (xs[i] + xs[i + 1]);
            let cy = 0.5 * (ys[j] + ys[j + 1]);
            if notch[j * nx + i] && cx > count.x && cx < count.x2() && cy > count.y && cy < count.y2() {
                area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
            }
        }
    }
    area
}

/// Packing trees plus the committed macro positions of each corner.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerState {
    pub trees: [PackingTree; 4],
    pub placed: [Vec<(usize, Rect)>; 4],
}

impl Default for CornerState {
    fn default() -> Self {
        CornerState {
            trees: Corner::ALL.map(PackingTree::new),
            placed: Default::default(),
        }
    }
}

impl CornerState {
    pub fn utilization(&self) -> [f64; 4] {
        Corner::ALL.map(|c| self.placed[c.index()].iter().map(|(_, r)| r.area()).sum())
    }

    pub fn commit(&mut self, candidate: &Candidate) {
        let j = candidate.corner.index();
        self.trees[j] = candidate.tree.clone();
        self.placed[j] = candidate.placement.macros.iter().map(|p| (p.macro_id, p.rect)).collect();
    }
}

/// Everything a candidate evaluation reads.
#[derive(Debug, Clone)]
pub struct RelocContext<'a> {
    pub outline: ChipOutline,
    /// Footprint per macro.
    pub sizes: &'a [(f64, f64)],
    pub halo: f64,
    pub continue_probability: f64,
    pub a: &'a DMatrix<f64>,
    /// Current position of every entity (placed macro centers, cluster
    /// centroids, ellipse positions of unplaced macros).
    pub entity_pos: &'a [Point],
    pub io: &'a IoRegions,
    pub notch_threshold: f64,
    pub corners: &'a CornerState,
    /// Macros fixed by the input design.
    pub preplaced: &'a [Rect],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub corner: Corner,
    pub slot: SlotRef,
    pub tree: PackingTree,
    /// Node ids of the group inside `tree`.
    pub group_nodes: Vec<usize>,
    pub placement: PackedPlacement,
    /// Raw penalties; `None` when the placement is illegal.
    pub raw: Option<[f64; 7]>,
    pub cost: f64,
}

impl RelocContext<'_> {
    /// Packs `tree`, sets the legality flags and computes raw penalties for
    /// the macros in `members` when legal.
    pub fn evaluate(&self, corner: Corner, tree: &PackingTree, members: &[usize]) -> (PackedPlacement, Option<[f64; 7]>) {
        let j = corner.index();
        let mut placement = tree.pack(self.sizes, &self.outline, self.halo);
        if placement.flags.out_of_bounds {
            return (placement, None);
        }
        let obstacles: Vec<Rect> = Corner::ALL
            .iter()
            .filter(|c| c.index() != j)
            .flat_map(|c| self.corners.placed[c.index()].iter().map(|p| p.1))
            .chain(self.preplaced.iter().copied())
            .collect();
        placement.check_against(&obstacles, &self.corners.placed[j], self.halo, self.outline.boundary_tol());
        if !placement.flags.is_legal() {
            return (placement, None);
        }

        let group: Vec<Rect> = members
            .iter()
            .map(|&m| placement.rect_of(m).expect("group member missing from packed tree"))
            .collect();
        let centers: Vec<Point> = group.iter().map(Rect::center).collect();
        let die = self.outline.rect();

        let disp = members
            .iter()
            .zip(&centers)
            .map(|(&m, c)| c.dist(self.entity_pos[m]))
            .sum();
        let mut conn = 0.0;
        for (k, &m) in members.iter().enumerate() {
            for e in 0..self.a.ncols() {
                let w = self.a[(m, e)];
                if w == 0.0 {
                    continue;
                }
                let pe = members
                    .iter()
                    .position(|&o| o == e)
                    .map_or(self.entity_pos[e], |o| centers[o]);
                conn += w * centers[k].dist(pe);
            }
        }
        let peri = group.iter().map(|r| r.boundary_gap(&die)).sum();
        let group_bbox = Rect::union_bbox(group.iter().copied()).map_or(0.0, |r| r.area());
        let corner_bbox: f64 = Corner::ALL
            .iter()
            .map(|c| {
                let rects: Vec<Rect> = if c.index() == j {
                    placement.macros.iter().map(|p| p.rect).collect()
                } else {
                    self.corners.placed[c.index()].iter().map(|p| p.1).collect()
                };
                Rect::union_bbox(rects).map_or(0.0, |r| r.area())
            })
            .sum();
        let io = keepout_overlap(&group, &self.io.rects);
        let notch = match Rect::union_bbox(group.iter().copied()) {
            Some(region) => {
                let all: Vec<Rect> = placement.macros.iter().map(|p| p.rect).chain(obstacles).collect();
                notch_area_in(&all, &self.outline, self.notch_threshold, region)
            }
            None => 0.0,
        };
        (placement, Some([disp, conn, peri, group_bbox, corner_bbox, io, notch]))
    }
}

/// Per-term min/max of a candidate batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBounds {
    pub min: [f64; 7],
    pub max: [f64; 7],
}

impl NormBounds {
    pub fn from_batch<'a>(raws: impl IntoIterator<Item = &'a [f64; 7]>) -> Self {
        let mut b = NormBounds {
            min: [f64::INFINITY; 7],
            max: [f64::NEG_INFINITY; 7],
        };
        for r in raws {
            for t in 0..7 {
                b.min[t] = b.min[t].min(r[t]);
                b.max[t] = b.max[t].max(r[t]);
            }
        }
        b
    }

    /// Weighted sum of min-max normalized terms; a constant term scores 0.
    pub fn score(&self, raw: Option<&[f64; 7]>, w: &[f64; 7]) -> f64 {
        let Some(raw) = raw else { return f64::INFINITY };
        (0..7)
            .map(|t| {
                let span = self.max[t] - self.min[t];
                if span > 0.0 {
                    w[t] * (raw[t] - self.min[t]) / span
                } else {
                    0.0
                }
            })
            .sum()
    }
}

/// Normalizes a batch of raw penalty vectors and returns scalar costs.
pub fn evaluate_costs(raws: &[Option<[f64; 7]>], w: &[f64; 7]) -> Vec<f64> {
    let bounds = NormBounds::from_batch(raws.iter().flatten());
    raws.iter().map(|r| bounds.score(r.as_ref(), w)).collect()
}

/// Best candidate per slot of `corner`, each slot sampled with `n_eps`
/// evaluations of a mutation walk started from a random subtree. Also
/// returns the normalization bounds of the whole batch.
pub fn try_assignment(
    ctx: &RelocContext<'_>,
    group: &MacroGroup,
    corner: Corner,
    n_eps: usize,
    weights: &CostWeights,
    rng: &mut Rng,
) -> (Vec<Candidate>, Option<NormBounds>) {
    let base = &ctx.corners.trees[corner.index()];
    let mut batch: Vec<(usize, Candidate)> = Vec::new();
    for (s, slot) in base.enumerate_slots().into_iter().enumerate() {
        let mut tree = base.clone();
        let nodes = tree.attach_subtree(slot, &group.members, rng);
        let mut last_legal: Option<PackingTree> = None;
        for e in 0..n_eps.max(1) {
            if e > 0 {
                if let Some(t) = &last_legal {
                    tree = t.clone();
                }
                tree.mutate_nodes(&nodes, ctx.continue_probability, rng);
            }
            let (placement, raw) = ctx.evaluate(corner, &tree, &group.members);
            if raw.is_some() {
                last_legal = Some(tree.clone());
            }
            batch.push((
                s,
                Candidate {
                    corner,
                    slot,
                    tree: tree.clone(),
                    group_nodes: nodes.clone(),
                    placement,
                    raw,
                    cost: f64::INFINITY,
                },
            ));
        }
    }
    if batch.iter().all(|(_, c)| c.raw.is_none()) {
        return (Vec::new(), None);
    }
    let bounds = NormBounds::from_batch(batch.iter().filter_map(|(_, c)| c.raw.as_ref()));
    let mut best: Vec<Option<Candidate>> = vec![None; batch.last().map_or(0, |b| b.0 + 1)];
    for (s, mut cand) in batch {
        cand.cost = bounds.score(cand.raw.as_ref(), &weights.w);
        if cand.cost.is_finite() && best[s].as_ref().is_none_or(|b| cand.cost < b.cost) {
            best[s] = Some(cand);
        }
    }
    (best.into_iter().flatten().collect(), Some(bounds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchBudget {
    pub n_total: usize,
    pub n_pop: usize,
    pub n_eps: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            n_total: 100,
            n_pop: 5,
            n_eps: 20,
        }
    }
}

impl SearchBudget {
    pub fn generations(&self) -> usize {
        self.n_total / self.n_pop.max(1)
    }
}

/// Outcome of [`corner_packing_search`].
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Candidate,
    pub generations: usize,
    pub initial_best: f64,
}

/// Elitist evolutionary refinement with binary tournaments. Offspring are
/// scored against the fixed `bounds` so parent and child costs compare.
pub fn corner_packing_search(
    ctx: &RelocContext<'_>,
    group: &MacroGroup,
    candidates: Vec<Candidate>,
    bounds: &NormBounds,
    budget: &SearchBudget,
    weights: &CostWeights,
    rng: &mut Rng,
) -> SearchResult {
    assert!(!candidates.is_empty(), "search needs at least one candidate");
    let n_pop = budget.n_pop.max(1);
    let by_cost = |a: &Candidate, b: &Candidate| a.cost.total_cmp(&b.cost);
    let mut pop = candidates;
    pop.sort_by(by_cost);
    let initial_best = pop[0].cost;
    pop.truncate(n_pop);

    let offspring_of = |parent: &Candidate, rng: &mut Rng| -> Candidate {
        let mut child = parent.clone();
        child.tree.mutate_nodes(&child.group_nodes, ctx.continue_probability, rng);
        let (placement, raw) = ctx.evaluate(child.corner, &child.tree, &group.members);
        child.cost = bounds.score(raw.as_ref(), &weights.w);
        child.placement = placement;
        child.raw = raw;
        child
    };

    let seeds = pop.len();
    while pop.len() < n_pop {
        let parent = pop[rng.gen_range(0..seeds)].clone();
        pop.push(offspring_of(&parent, rng));
    }
    pop.sort_by(by_cost);

    let generations = budget.generations();
    for _ in 0..generations {
        let mut children = Vec::with_capacity(n_pop);
        for _ in 0..n_pop {
            let (i, k) = (rng.gen_range(0..pop.len()), rng.gen_range(0..pop.len()));
            let winner = if pop[k].cost < pop[i].cost { k } else { i };
            children.push(offspring_of(&pop[winner], rng));
        }
        pop.extend(children);
        pop.sort_by(by_cost);
        pop.truncate(n_pop);
    }
    SearchResult {
        best: pop.swap_remove(0),
        generations,
        initial_best,
    }
}

/// One accepted assignment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelocationEvent {
    pub group: usize,
    pub corner: Corner,
    pub slots: usize,
    pub cost: f64,
    pub raw: [f64; 7],
}

#[derive(Debug, Clone, Default)]
pub struct RelocateOutcome {
    pub events: Vec<RelocationEvent>,
    /// (group, corner) pairs rejected because no slot was legal.
    pub rejected: Vec<(usize, Corner)>,
    pub placed_macros: usize,
}

/// One relocation pass: commits groups in preference order until at least
/// `n_min` macros are placed or every remaining pair has been rejected.
/// `groups` holds the unplaced groups and `summaries` their preference inputs.
#[allow(clippy::too_many_arguments)]
pub fn relocate(
    ctx_template: &RelocContext<'_>,
    corners: &mut CornerState,
    groups: &[&MacroGroup],
    summaries: &[GroupSummary],
    n_min: usize,
    weights: &CostWeights,
    budget: &SearchBudget,
    rng: &mut Rng,
) -> Result<RelocateOutcome> {
    let keyed: Vec<(usize, GroupSummary)> = groups.iter().map(|g| g.id).zip(summaries.iter().copied()).collect();
    let pref = compute_preference(&keyed, corners.utilization(), ctx_template.io, &ctx_template.outline, weights)?;
    let mut masked = vec![[false; 4]; groups.len()];
    let mut outcome = RelocateOutcome::default();
    while outcome.placed_macros < n_min {
        let Some((row, corner)) = pref.argmax(&masked) else { break };
        let group = groups[row];
        let snapshot = corners.clone();
        let ctx = RelocContext {
            corners: &snapshot,
            ..ctx_template.clone()
        };
        let (cands, bounds) = try_assignment(&ctx, group, corner, budget.n_eps, weights, rng);
        let Some(bounds) = bounds.filter(|_| !cands.is_empty()) else {
            masked[row][corner.index()] = true;
            outcome.rejected.push((group.id, corner));
            continue;
        };
        let slots = cands.len();
        let result = corner_packing_search(&ctx, group, cands, &bounds, budget, weights, rng);
        corners.commit(&result.best);
        masked[row] = [true; 4];
        outcome.placed_macros += group.len();
        outcome.events.push(RelocationEvent {
            group: group.id,
            corner,
            slots,
            cost: result.best.cost,
            raw: result.best.raw.expect("committed candidate is legal"),
        });
    }
    Ok(outcome)
}
