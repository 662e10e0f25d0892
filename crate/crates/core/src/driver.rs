// SPDX-License-Identifier: Apache-2.0

//! The outer placement loop: prototype, ellipse, angle optimization and
//! relocation, repeated until every macro is fixed.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::abplace::{optimize, project_macros, AngleProblem, Ellipse, EllipseSchedule, OptimizeConfig};
use crate::connectivity::{
    build_matrix, cluster_cells, extract_dataflow, extract_direct, group_macros, CellCluster, ConnectionMatrix,
    ConnectivityDump, MacroGroup,
};
use crate::error::{Error, Result};
use crate::evaluator::{render_svg, Metrics, MetricsInput, PenaltySums, RenderAnnotations, Stage, StageClock, StageTimings};
use crate::geometry::{Point, Rect};
use crate::netlist::Design;
use crate::packing::Corner;
use crate::prototyper::{
    cluster_centroids, inject_prototype, run_prototype, DensitySchedule, Prototype, PrototypeConfig,
};
use crate::relocator::{
    banned_corners, relocate, CornerState, CostWeights, GroupSummary, IoKeepout, IoRegions, RelocContext,
    RelocationEvent, SearchBudget,
};
use crate::rng;

/// Where reference positions come from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum PrototypeMode {
    #[default]
    Internal,
    File(PathBuf),
}

impl FromStr for PrototypeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "internal" => Ok(PrototypeMode::Internal),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(PrototypeMode::File(PathBuf::from(p))),
                _ => Err(Error::Config(format!("prototype mode must be `internal` or `file:<path>`, got `{s}`"))),
            },
        }
    }
}

impl fmt::Display for PrototypeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrototypeMode::Internal => f.write_str("internal"),
            PrototypeMode::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl Serialize for PrototypeMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PrototypeMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Every tunable of a run. Missing JSON fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub density: DensitySchedule,
    pub ellipse: EllipseSchedule,
    /// Overlap weight of the angle objective.
    pub lambda: f64,
    pub abplace: OptimizeConfig,
    pub weights: CostWeights,
    pub budget: SearchBudget,
    /// Each relocation pass fixes at least this fraction of the movable macros.
    pub n_min_fraction: f64,
    pub continue_probability: f64,
    pub d_max: usize,
    pub net_degree_cap: usize,
    pub cluster_target: usize,
    pub footprint_tol: f64,
    pub signature_cosine: f64,
    pub max_iterations: usize,
    pub halo: f64,
    pub io_keepout: IoKeepout,
    /// Defaults to twice the mean standard-cell height.
    pub notch_threshold: Option<f64>,
    pub prototype: PrototypeMode,
    pub prototyper: PrototypeConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            density: DensitySchedule::default(),
            ellipse: EllipseSchedule::default(),
            lambda: 0.02,
            abplace: OptimizeConfig::default(),
            weights: CostWeights::default(),
            budget: SearchBudget::default(),
            n_min_fraction: 0.1,
            continue_probability: 2.0 / 3.0,
            d_max: 3,
            net_degree_cap: 64,
            cluster_target: 16,
            footprint_tol: 0.01,
            signature_cosine: 0.9,
            max_iterations: 20,
            halo: 0.0,
            io_keepout: IoKeepout::default(),
            notch_threshold: None,
            prototype: PrototypeMode::Internal,
            prototyper: PrototypeConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.density.validate()?;
        self.ellipse.validate()?;
        self.weights.validate()?;
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if !(0.0 < self.continue_probability && self.continue_probability < 1.0) {
            return bad("continue_probability must lie in (0, 1)");
        }
        if !(0.0 < self.n_min_fraction && self.n_min_fraction <= 1.0) {
            return bad("n_min_fraction must lie in (0, 1]");
        }
        if self.budget.n_pop == 0 || self.budget.n_eps == 0 {
            return bad("n_pop and n_eps must be positive");
        }
        if self.d_max == 0 || self.cluster_target == 0 || self.max_iterations == 0 {
            return bad("d_max, cluster_target and max_iterations must be positive");
        }
        if !(self.halo >= 0.0 && self.halo.is_finite()) {
            return bad("halo must be finite and non-negative");
        }
        Ok(())
    }

    /// Parses a config document. A document with a top-level `config`
    /// object (as written by the tuner) yields that object.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(Error::from_json)?;
        let inner = match value.get("config") {
            Some(c) if c.is_object() => c.clone(),
            _ => value,
        };
        let cfg: PipelineConfig = serde_json::from_value(inner).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn n_min(&self, movable: usize) -> usize {
        ((self.n_min_fraction * movable as f64).ceil() as usize).max(1)
    }
}

/// What happened in one outer iteration.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub density: f64,
    pub ellipse: Ellipse,
    pub unplaced_before: usize,
    pub n_min: usize,
    pub placed_now: usize,
    pub prototype_iterations: usize,
    pub prototype_hpwl: f64,
    pub abplace_trace: Vec<f64>,
    pub relocations: Vec<RelocationEvent>,
    pub rejected: Vec<(usize, Corner)>,
    /// Groups split in two after being rejected everywhere.
    pub split_groups: Vec<usize>,
    #[serde(skip)]
    pub trees: Vec<String>,
    #[serde(skip)]
    pub contours: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunState {
    /// 1-based index of the next iteration.
    pub k: usize,
    /// Fixed rectangle per macro once placed.
    pub placed: Vec<Option<Rect>>,
    /// Iteration that fixed each macro; 0 for macros fixed by the input.
    pub placed_at: Vec<Option<usize>>,
    pub groups: Vec<MacroGroup>,
    pub corners: CornerState,
    pub ellipse: Option<Ellipse>,
    pub prototype: Option<Prototype>,
    pub log: Vec<IterationRecord>,
    pub penalties: PenaltySums,
    pub clock: StageClock,
}

impl RunState {
    pub fn unplaced(&self) -> Vec<usize> {
        (0..self.placed.len()).filter(|&m| self.placed[m].is_none()).collect()
    }

    pub fn fixed(&self) -> Vec<(usize, Rect)> {
        self.placed
            .iter()
            .enumerate()
            .filter_map(|(m, r)| r.map(|r| (m, r)))
            .collect()
    }
}

/// Design-level data prepared once per run.
#[derive(Debug, Clone)]
pub struct Pipeline<'d> {
    pub design: &'d Design,
    pub config: PipelineConfig,
    pub clusters: Vec<CellCluster>,
    pub conn: ConnectionMatrix,
    pub initial_groups: Vec<MacroGroup>,
    pub io: IoRegions,
    pub notch_threshold: f64,
    sizes: Vec<(f64, f64)>,
    preplaced: Vec<Rect>,
    injected: Option<Prototype>,
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct FinalPlacement {
    pub rects: Vec<Rect>,
    pub groups: Vec<Option<usize>>,
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
    pub metrics: Metrics,
    pub timings: StageTimings,
    pub ellipse: Option<Ellipse>,
    pub keepouts: Vec<Rect>,
}

fn default_notch_threshold(design: &Design) -> f64 {
    let cells = design.cells();
    if cells.is_empty() {
        0.01 * design.outline.width.min(design.outline.height)
    } else {
        2.0 * cells.iter().map(|c| c.height).sum::<f64>() / cells.len() as f64
    }
}

/// Clusters, connection matrix and macro groups for `design`.
pub fn analyze(design: &Design, config: &PipelineConfig) -> (Vec<CellCluster>, ConnectionMatrix, Vec<MacroGroup>) {
    let clusters = cluster_cells(design, config.cluster_target);
    let wl = extract_direct(design, &clusters, config.net_degree_cap);
    let df = extract_dataflow(design, &clusters, config.d_max);
    let conn = build_matrix(wl, df, design.num_macros);
    let groups = group_macros(design, &conn, config.footprint_tol, config.signature_cosine);
    (clusters, conn, groups)
}

impl<'d> Pipeline<'d> {
    pub fn new(design: &'d Design, config: PipelineConfig, trace: bool) -> Result<(Self, RunState)> {
        config.validate()?;
        let mut clock = StageClock::new(trace);
        let (clusters, conn, groups) = clock.time(Stage::Clustering, || analyze(design, &config));
        let io = clock.time(Stage::Io, || IoRegions::from_ports(design, &config.io_keepout));
        let injected = match &config.prototype {
            PrototypeMode::Internal => None,
            PrototypeMode::File(p) => Some(inject_prototype(design, p)?),
        };
        let mut placed = vec![None; design.num_macros];
        let mut placed_at = vec![None; design.num_macros];
        let mut preplaced = Vec::new();
        for m in design.macros() {
            if let Some(ll) = m.fixed {
                let r = Rect::new(ll.x, ll.y, m.width, m.height);
                placed[m.id] = Some(r);
                placed_at[m.id] = Some(0);
                preplaced.push(r);
            }
        }
        let pipeline = Pipeline {
            design,
            notch_threshold: config.notch_threshold.unwrap_or_else(|| default_notch_threshold(design)),
            sizes: design.macros().iter().map(|m| (m.width, m.height)).collect(),
            config,
            clusters,
            conn,
            initial_groups: groups.clone(),
            io,
            preplaced,
            injected,
        };
        let state = RunState {
            k: 1,
            placed,
            placed_at,
            groups,
            corners: CornerState::default(),
            ellipse: None,
            prototype: None,
            log: Vec::new(),
            penalties: PenaltySums::default(),
            clock,
        };
        Ok((pipeline, state))
    }

    pub fn connectivity_dump(&self) -> ConnectivityDump<'_> {
        ConnectivityDump::new(&self.initial_groups, &self.clusters, &self.conn)
    }

    fn movable_count(&self) -> usize {
        self.design.macros().iter().filter(|m| m.fixed.is_none()).count()
    }

    /// Prototype for iteration `k`. If the placer diverges at this target
    /// density, the schedule is walked back one step at a time.
    fn prototype(&self, fixed: &[(usize, Rect)], k: usize) -> Result<Prototype> {
        match &self.injected {
            None => {
                let mut step = k;
                loop {
                    let cfg = &self.config;
                    match run_prototype(self.design, fixed, &cfg.density, step, cfg.seed, &cfg.prototyper) {
                        Err(Error::Divergence(_)) if step > 1 => step -= 1,
                        other => return other,
                    }
                }
            }
            Some(p) => {
                let mut p = p.clone();
                for &(m, r) in fixed {
                    p.positions[m] = r.center();
                }
                Ok(p)
            }
        }
    }

    /// One outer iteration. A no-op once every macro is placed.
    pub fn step(&self, state: &mut RunState) -> Result<()> {
        let unplaced = state.unplaced();
        if unplaced.is_empty() {
            return Ok(());
        }
        let cfg = &self.config;
        let k = state.k;
        let design = self.design;
        let fixed = state.fixed();

        let proto = state.clock.time(Stage::Prototype, || self.prototype(&fixed, k))?;
        let centroids = cluster_centroids(design, &proto, &self.clusters);
        let ellipse = cfg.ellipse.ellipse(&design.outline, k);

        let mut anchors: Vec<Point> = vec![design.outline.center(); self.conn.entity_count()];
        for m in 0..design.num_macros {
            anchors[m] = state.placed[m].map_or(proto.positions[m], |r| r.center());
        }
        for (c, p) in centroids.iter().enumerate() {
            anchors[self.conn.cluster_entity(c)] = *p;
        }

        let result = state.clock.time(Stage::Abplace, || {
            let starts: Vec<Point> = unplaced.iter().map(|&m| proto.positions[m]).collect();
            let theta0 = project_macros(&starts, &ellipse, &mut rng::stream(cfg.seed, "project", k as u64));
            let sizes = unplaced.iter().map(|&m| self.sizes[m]).collect();
            let problem = AngleProblem::new(ellipse, unplaced.clone(), sizes, anchors.clone(), &self.conn.a, cfg.lambda);
            optimize(&problem, &theta0, &cfg.abplace)
        })?;
        let mut entity_pos = anchors;
        for (s, &m) in unplaced.iter().enumerate() {
            entity_pos[m] = ellipse.point(result.theta[s]);
        }

        let open: Vec<&MacroGroup> = state
            .groups
            .iter()
            .filter(|g| g.members.iter().all(|&m| state.placed[m].is_none()))
            .collect();
        let summaries: Vec<GroupSummary> = open
            .iter()
            .map(|g| {
                let n = g.members.len() as f64;
                let (sx, sy) = g
                    .members
                    .iter()
                    .fold((0.0, 0.0), |(x, y), &m| (x + entity_pos[m].x, y + entity_pos[m].y));
                GroupSummary {
                    area: g.members.iter().map(|&m| self.sizes[m].0 * self.sizes[m].1).sum(),
                    center: Point::new(sx / n, sy / n),
                }
            })
            .collect();
        let n_min = cfg.n_min(self.movable_count());
        let before = state.corners.clone();
        let ctx = RelocContext {
            outline: design.outline,
            sizes: &self.sizes,
            halo: cfg.halo,
            continue_probability: cfg.continue_probability,
            a: &self.conn.a,
            entity_pos: &entity_pos,
            io: &self.io,
            notch_threshold: self.notch_threshold,
            corners: &before,
            preplaced: &self.preplaced,
        };
        let mut reloc_rng = rng::stream(cfg.seed, "relocate", k as u64);
        let outcome = state.clock.time(Stage::Relocating, || {
            relocate(
                &ctx,
                &mut state.corners,
                &open,
                &summaries,
                n_min,
                &cfg.weights,
                &cfg.budget,
                &mut reloc_rng,
            )
        });
        let outcome = outcome.map_err(|e| match e {
            Error::AllBanned => Error::Placement(format!("iteration {k}: every group/corner assignment is banned")),
            other => other,
        })?;

        let mut placed_now = 0;
        for corner in &state.corners.placed {
            for &(m, r) in corner {
                match state.placed[m] {
                    Some(old) if old != r => {
                        return Err(Error::Placement(format!(
                            "iteration {k}: macro `{}` moved after being fixed",
                            design.instances[m].name
                        )))
                    }
                    Some(_) => {}
                    None => {
                        state.placed[m] = Some(r);
                        state.placed_at[m] = Some(k);
                        placed_now += 1;
                    }
                }
            }
        }
        for ev in &outcome.events {
            state.penalties.add(&ev.raw);
        }

        // Groups rejected in every allowed corner are halved for the next round.
        let banned = banned_corners(&self.io, &design.outline);
        let allowed = banned.iter().filter(|b| !**b).count();
        let mut split = Vec::new();
        let mut next_id = state.groups.iter().map(|g| g.id).max().map_or(0, |m| m + 1);
        let mut regrouped = Vec::with_capacity(state.groups.len());
        for g in std::mem::take(&mut state.groups) {
            let rejections = outcome.rejected.iter().filter(|r| r.0 == g.id).count();
            if g.len() > 1 && allowed > 0 && rejections >= allowed && state.placed[g.members[0]].is_none() {
                let half = g.len() / 2;
                let mut a = g.clone();
                let mut b = g.clone();
                a.members.truncate(half);
                b.members.drain(..half);
                b.id = next_id;
                next_id += 1;
                split.push(g.id);
                regrouped.push(a);
                regrouped.push(b);
            } else {
                regrouped.push(g);
            }
        }
        state.groups = regrouped;

        let names = |m: usize| design.instances[m].name.clone();
        state.log.push(IterationRecord {
            k,
            density: proto.density_used,
            ellipse,
            unplaced_before: unplaced.len(),
            n_min,
            placed_now,
            prototype_iterations: proto.iterations,
            prototype_hpwl: proto.hpwl,
            abplace_trace: result.trace,
            relocations: outcome.events,
            rejected: outcome.rejected,
            split_groups: split.clone(),
            trees: state.corners.trees.iter().map(|t| t.dump(names)).collect(),
            contours: Corner::ALL
                .iter()
                .map(|c| {
                    let t = &state.corners.trees[c.index()];
                    let p = t.pack(&self.sizes, &design.outline, cfg.halo);
                    p.contour
                        .segments()
                        .iter()
                        .map(|s| format!("{:?},{},{},{}\n", c, s.0, s.1, s.2))
                        .collect()
                })
                .collect(),
        });
        state.ellipse = Some(ellipse);
        state.prototype = Some(proto);
        state.k += 1;
        if placed_now == 0 && split.is_empty() {
            return Err(Error::Stuck {
                iteration: k,
                unplaced: unplaced.len(),
            });
        }
        Ok(())
    }

    /// Steps until done; fails past the iteration cap.
    pub fn run(&self, state: &mut RunState) -> Result<()> {
        while !state.unplaced().is_empty() {
            if state.k > self.config.max_iterations {
                return Err(Error::CapExceeded(self.config.max_iterations));
            }
            self.step(state)?;
        }
        Ok(())
    }

    /// Final cell prototype, metrics and timings of a finished state.
    pub fn finish(&self, mut state: RunState) -> Result<FinalPlacement> {
        let rects: Vec<Rect> = state
            .placed
            .iter()
            .map(|r| r.ok_or_else(|| Error::Placement("finish called with unplaced macros".into())))
            .collect::<Result<_>>()?;
        let fixed = state.fixed();
        let final_k = self.config.density.steps as usize + 1;
        let cells = state.clock.time(Stage::Prototype, || self.prototype(&fixed, final_k))?;
        let metrics = self.metrics_for(&rects, &cells, state.log.len(), state.penalties)?;
        let mut groups = vec![None; self.design.num_macros];
        for g in &self.initial_groups {
            for &m in &g.members {
                groups[m] = Some(g.id);
            }
        }
        Ok(FinalPlacement {
            rects,
            groups,
            iterations: state.log.len(),
            log: std::mem::take(&mut state.log),
            metrics,
            timings: state.clock.finish(),
            ellipse: state.ellipse,
            keepouts: self.io.rects.clone(),
        })
    }

    fn metrics_for(&self, rects: &[Rect], cells: &Prototype, iterations: usize, penalties: PenaltySums) -> Result<Metrics> {
        let centroids = cluster_centroids(self.design, cells, &self.clusters);
        Metrics::compute(
            &MetricsInput {
                design: self.design,
                rects,
                centers: &cells.positions,
                clusters: &self.clusters,
                centroids: &centroids,
                keepouts: &self.io.rects,
                halo: self.config.halo,
                notch_threshold: self.notch_threshold,
            },
            iterations,
            penalties,
        )
    }

    /// Metrics of an arbitrary complete macro placement, with cells placed
    /// by a prototype run around the fixed macros.
    pub fn evaluate(&self, rects: &[Rect]) -> Result<Metrics> {
        let fixed: Vec<(usize, Rect)> = rects.iter().copied().enumerate().collect();
        let cells = self.prototype(&fixed, self.config.density.steps as usize + 1)?;
        self.metrics_for(rects, &cells, 0, PenaltySums::default())
    }
}

/// Runs the whole flow.
pub fn run_pipeline(design: &Design, config: &PipelineConfig) -> Result<FinalPlacement> {
    let (pipeline, mut state) = Pipeline::new(design, config.clone(), false)?;
    pipeline.run(&mut state)?;
    pipeline.finish(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacedMacroRecord {
    pub name: String,
    /// Lower-left corner.
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementFile {
    pub macros: Vec<PlacedMacroRecord>,
}

impl PlacementFile {
    pub fn new(design: &Design, rects: &[Rect]) -> Self {
        PlacementFile {
            macros: design
                .macros()
                .iter()
                .zip(rects)
                .map(|(m, r)| PlacedMacroRecord {
                    name: m.name.clone(),
                    x: r.x,
                    y: r.y,
                    width: r.w,
                    height: r.h,
                })
                .collect(),
        }
    }

    /// Rectangles in macro order; every macro must appear exactly once.
    pub fn rects(&self, design: &Design) -> Result<Vec<Rect>> {
        let index = design.instance_by_name();
        let mut rects = vec![None; design.num_macros];
        for rec in &self.macros {
            match index.get(rec.name.as_str()) {
                Some(&i) if i < design.num_macros => {
                    let m = &design.instances[i];
                    if rects[i].is_some() {
                        return Err(Error::Placement(format!("macro `{}` listed twice", rec.name)));
                    }
                    rects[i] = Some(Rect::new(rec.x, rec.y, m.width, m.height));
                }
                _ => return Err(Error::Placement(format!("unknown macro `{}`", rec.name))),
            }
        }
        rects
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| Error::MissingInstance(design.instances[i].name.clone())))
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(Error::from_json)
    }
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes placement.json, metrics.json, layout.svg and runtime.json into
/// `out`, plus the per-iteration trace directory when `trace` is set.
pub fn write_outputs(out: &Path, design: &Design, result: &FinalPlacement, trace: bool) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("placement.json"), &PlacementFile::new(design, &result.rects))?;
    write_json(&out.join("metrics.json"), &result.metrics)?;
    write_json(&out.join("runtime.json"), &result.timings)?;
    let notes = RenderAnnotations {
        groups: result.groups.clone(),
        keepouts: result.keepouts.clone(),
        ellipse: result.ellipse,
    };
    let svg_path = out.join("layout.svg");
    fs::write(&svg_path, render_svg(design, &result.rects, &notes)).map_err(|e| Error::io(&svg_path, e))?;
    if !trace {
        return Ok(());
    }
    let dir = out.join("trace");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut iterations = String::new();
    let mut relocations = String::new();
    for rec in &result.log {
        iterations.push_str(&serde_json::to_string(rec).map_err(|e| Error::Config(e.to_string()))?);
        iterations.push('\n');
        for ev in &rec.relocations {
            let line = serde_json::json!({"k": rec.k, "event": ev});
            relocations.push_str(&line.to_string());
            relocations.push('\n');
        }
        let mut csv = String::from("step,objective\n");
        for (i, v) in rec.abplace_trace.iter().enumerate() {
            csv.push_str(&format!("{i},{v}\n"));
        }
        let files = [
            (format!("abplace_k{}.csv", rec.k), csv),
            (format!("trees_k{}.txt", rec.k), rec.trees.concat()),
            (
                format!("contours_k{}.csv", rec.k),
                format!("corner,x0,x1,height\n{}", rec.contours.concat()),
            ),
        ];
        for (name, body) in files {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
    }
    for (name, body) in [("iterations.jsonl", iterations), ("relocation.jsonl", relocations)] {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
