// SPDX-License-Identifier: Apache-2.0

//! Placement metrics, SVG rendering and per-stage wall-clock accounting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::abplace::Ellipse;
use crate::connectivity::CellCluster;
use crate::error::{Error, Result};
use crate::geometry::{pairwise_overlap, Point, Rect};
use crate::netlist::{Design, Net, PinRef};
use crate::relocator::notch_area;

/// Span of a point set: (max x − min x) + (max y − min y).
pub fn bbox_half_perimeter(points: impl IntoIterator<Item = Point>) -> f64 {
    let mut it = points.into_iter();
    let Some(first) = it.next() else { return 0.0 };
    let (mut x0, mut x1, mut y0, mut y1) = (first.x, first.x, first.y, first.y);
    for p in it {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    (x1 - x0) + (y1 - y0)
}

fn pin_points<'a>(design: &'a Design, net: &'a Net, centers: &'a [Point]) -> impl Iterator<Item = Point> + 'a {
    net.pins.iter().map(move |pin| {
        let base = match pin.target {
            PinRef::Instance(i) => centers[i],
            PinRef::Port(p) => design.ports[p].pos,
        };
        Point::new(base.x + pin.offset.x, base.y + pin.offset.y)
    })
}

/// Total HPWL with every instance at `centers[id]`.
pub fn hpwl(design: &Design, centers: &[Point]) -> Result<f64> {
    if centers.len() != design.instances.len() {
        return Err(Error::Placement(format!(
            "cannot resolve pins: {} positions for {} instances",
            centers.len(),
            design.instances.len()
        )));
    }
    Ok(design
        .nets
        .iter()
        .map(|net| bbox_half_perimeter(pin_points(design, net, centers)))
        .sum())
}

/// Instance centers for macro-stage evaluation: macros at `macro_centers`,
/// every cell at the centroid of its cluster.
pub fn centers_with_centroids(
    design: &Design,
    macro_centers: &[Point],
    clusters: &[CellCluster],
    centroids: &[Point],
) -> Vec<Point> {
    let mut centers = vec![design.outline.center(); design.instances.len()];
    centers[..design.num_macros].copy_from_slice(&macro_centers[..design.num_macros]);
    for (c, cluster) in clusters.iter().enumerate() {
        for &m in &cluster.members {
            centers[m] = centroids[c];
        }
    }
    centers
}

/// HPWL over the nets touching at least one macro.
pub fn macro_hpwl(design: &Design, centers: &[Point]) -> Result<f64> {
    if centers.len() != design.instances.len() {
        return Err(Error::Placement(format!(
            "cannot resolve pins: {} positions for {} instances",
            centers.len(),
            design.instances.len()
        )));
    }
    Ok(design
        .nets
        .iter()
        .filter(|n| {
            n.pins
                .iter()
                .any(|p| matches!(p.target, PinRef::Instance(i) if i < design.num_macros))
        })
        .map(|net| bbox_half_perimeter(pin_points(design, net, centers)))
        .sum())
}

pub fn mean_periphery_distance(rects: &[Rect], die: &Rect) -> f64 {
    if rects.is_empty() {
        return 0.0;
    }
    rects.iter().map(|r| r.boundary_gap(die)).sum::<f64>() / rects.len() as f64
}

pub fn keepout_overlap(rects: &[Rect], keepouts: &[Rect]) -> f64 {
    rects
        .iter()
        .map(|r| {
            let pieces: Vec<Rect> = keepouts.iter().filter_map(|k| r.intersection(k)).collect();
            crate::geometry::union_area(&pieces)
        })
        .sum()
}

/// Raw relocation penalties summed over every accepted candidate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltySums {
    pub displacement: f64,
    pub connection: f64,
    pub periphery: f64,
    pub group_bbox: f64,
    pub corner_bbox: f64,
    pub io: f64,
    pub notch: f64,
}

impl PenaltySums {
    pub fn add(&mut self, raw: &[f64; 7]) {
        self.displacement += raw[0];
        self.connection += raw[1];
        self.periphery += raw[2];
        self.group_bbox += raw[3];
        self.corner_bbox += raw[4];
        self.io += raw[5];
        self.notch += raw[6];
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// All nets, cells at their final prototype positions.
    pub hpwl: f64,
    /// Nets touching a macro, cells at their cluster centroids.
    pub macro_hpwl: f64,
    pub total_overlap: f64,
    pub total_notch: f64,
    pub mean_periphery_dist: f64,
    pub io_overlap: f64,
    pub out_of_bounds: usize,
    pub iterations: usize,
    pub penalties: PenaltySums,
}

/// Inputs that depend on the final macro placement.
#[derive(Debug, Clone)]
pub struct MetricsInput<'a> {
    pub design: &'a Design,
    /// Final macro rectangles, one per macro.
    pub rects: &'a [Rect],
    /// Every instance center after the final cell prototype.
    pub centers: &'a [Point],
    pub clusters: &'a [CellCluster],
    pub centroids: &'a [Point],
    pub keepouts: &'a [Rect],
    pub halo: f64,
    pub notch_threshold: f64,
}

impl Metrics {
    pub fn compute(input: &MetricsInput<'_>, iterations: usize, penalties: PenaltySums) -> Result<Metrics> {
        let design = input.design;
        let die = design.outline.rect();
        let tol = design.outline.boundary_tol();
        let macro_centers: Vec<Point> = input.rects.iter().map(Rect::center).collect();
        let stage = centers_with_centroids(design, &macro_centers, input.clusters, input.centroids);
        let inflated: Vec<Rect> = input.rects.iter().map(|r| r.inflate(input.halo)).collect();
        Ok(Metrics {
            hpwl: hpwl(design, input.centers)?,
            macro_hpwl: macro_hpwl(design, &stage)?,
            total_overlap: pairwise_overlap(&inflated, tol),
            total_notch: notch_area(input.rects, &design.outline, input.notch_threshold),
            mean_periphery_dist: mean_periphery_distance(input.rects, &die),
            io_overlap: keepout_overlap(input.rects, input.keepouts),
            out_of_bounds: input.rects.iter().filter(|r| !r.within(&die, tol)).count(),
            iterations,
            penalties,
        })
    }
}

/// Extra layers drawn on top of the placement.
#[derive(Debug, Clone, Default)]
pub struct RenderAnnotations {
    /// Group id per macro; `None` for pre-placed macros.
    pub groups: Vec<Option<usize>>,
    pub keepouts: Vec<Rect>,
    pub ellipse: Option<Ellipse>,
}

fn group_color(g: usize) -> String {
    // Golden-angle hue walk keeps neighbouring ids apart.
    let hue = (g as f64 * 137.507_764) % 360.0;
    format!("hsl({hue:.1},65%,55%)")
}

/// SVG document with the outline, I/O keepouts, macros colored by group and
/// the final ellipse, all to scale with y pointing up.
pub fn render_svg(design: &Design, rects: &[Rect], notes: &RenderAnnotations) -> String {
    let (w, h) = (design.outline.width, design.outline.height);
    let stroke = 0.002 * w.max(h);
    let flip = |r: &Rect| (r.x, h - r.y2(), r.w, r.h);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" width="800" height="{}">"#,
        (800.0 * h / w).round()
    );
    let _ = writeln!(
        svg,
        r##"<rect class="outline" x="0" y="0" width="{w}" height="{h}" fill="#ffffff" stroke="#000000" stroke-width="{stroke}"/>"##
    );
    for k in &notes.keepouts {
        let (x, y, kw, kh) = flip(k);
        let _ = writeln!(
            svg,
            r##"<rect class="keepout" x="{x}" y="{y}" width="{kw}" height="{kh}" fill="#f4a6a6" fill-opacity="0.5"/>"##
        );
    }
    for (i, r) in rects.iter().enumerate() {
        let (x, y, rw, rh) = flip(r);
        let fill = match notes.groups.get(i).copied().flatten() {
            Some(g) => group_color(g),
            None => "#808080".to_string(),
        };
        let name = xml_escape(&design.instances[i].name);
        let _ = writeln!(
            svg,
            r##"<rect class="macro" data-name="{name}" x="{x}" y="{y}" width="{rw}" height="{rh}" fill="{fill}" stroke="#202020" stroke-width="{stroke}"/>"##
        );
    }
    if let Some(e) = &notes.ellipse {
        let _ = writeln!(
            svg,
            r##"<ellipse class="ellipse" cx="{}" cy="{}" rx="{}" ry="{}" fill="none" stroke="#1f4fbf" stroke-dasharray="{}" stroke-width="{stroke}"/>"##,
            e.center.x,
            h - e.center.y,
            e.a,
            e.b,
            4.0 * stroke
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// A random overlap-free macro placement, used as a wirelength baseline.
/// Macros go down largest first at uniformly drawn positions; after too many
/// misses the attempt restarts, and a deterministic shelf packing is the last
/// resort. Macros fixed by the design keep their position.
pub fn random_legal_rects(design: &Design, halo: f64, seed: u64) -> Vec<Rect> {
    let (w, h) = (design.outline.width, design.outline.height);
    let mut order: Vec<usize> = (0..design.num_macros).filter(|&m| design.instances[m].fixed.is_none()).collect();
    order.sort_by(|&a, &b| design.instances[b].area().total_cmp(&design.instances[a].area()).then(a.cmp(&b)));
    let mut base = vec![Rect::default(); design.num_macros];
    let mut pinned = Vec::new();
    for m in design.macros() {
        if let Some(ll) = m.fixed {
            base[m.id] = Rect::new(ll.x, ll.y, m.width, m.height);
            pinned.push(base[m.id].inflate(halo));
        }
    }
    let clear = |r: &Rect, taken: &[Rect]| taken.iter().all(|t| r.inflate(halo).overlap_area(t) == 0.0);
    for attempt in 0..20u64 {
        let mut rng = crate::rng::stream(seed, "random-legal", attempt);
        let mut rects = base.clone();
        let mut taken = pinned.clone();
        let ok = order.iter().all(|&m| {
            let inst = &design.instances[m];
            let (mw, mh) = (inst.width + 2.0 * halo, inst.height + 2.0 * halo);
            if mw > w || mh > h {
                return false;
            }
            for _ in 0..2000 {
                let r = Rect::new(
                    halo + rng.gen_range(0.0..=w - mw),
                    halo + rng.gen_range(0.0..=h - mh),
                    inst.width,
                    inst.height,
                );
                if clear(&r, &taken) {
                    rects[m] = r;
                    taken.push(r.inflate(halo));
                    return true;
                }
            }
            false
        });
        if ok {
            return rects;
        }
    }
    let mut rects = base;
    let (mut x, mut y, mut row) = (0.0, 0.0, 0.0f64);
    for &m in &order {
        let inst = &design.instances[m];
        let (mw, mh) = (inst.width + 2.0 * halo, inst.height + 2.0 * halo);
        if x + mw > w {
            x = 0.0;
            y += row;
            row = 0.0;
        }
        rects[m] = Rect::new(x + halo, y + halo, inst.width, inst.height);
        x += mw;
        row = row.max(mh);
    }
    rects
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Clustering,
    Io,
    Prototype,
    Abplace,
    Relocating,
}

impl Stage {
    fn key(self) -> &'static str {
        match self {
            Stage::Clustering => "clustering",
            Stage::Io => "io",
            Stage::Prototype => "prototype",
            Stage::Abplace => "abplace",
            Stage::Relocating => "relocating",
        }
    }
}

/// Wall-clock accumulator for one pipeline run.
#[derive(Debug, Clone)]
pub struct StageClock {
    start: Instant,
    enabled: bool,
    spent: BTreeMap<Stage, Duration>,
}

impl StageClock {
    pub fn new(enabled: bool) -> Self {
        StageClock {
            start: Instant::now(),
            enabled,
            spent: BTreeMap::new(),
        }
    }

    /// Runs `f`, charging its duration to `stage`.
    pub fn time<T>(&mut self, stage: Stage, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        *self.spent.entry(stage).or_default() += t0.elapsed();
        out
    }

    pub fn finish(&self) -> StageTimings {
        let total = self.start.elapsed().as_secs_f64();
        if !self.enabled {
            return StageTimings {
                total,
                stages: BTreeMap::new(),
            };
        }
        let mut stages: BTreeMap<String, f64> = self
            .spent
            .iter()
            .map(|(s, d)| (s.key().to_string(), d.as_secs_f64()))
            .collect();
        let accounted: f64 = stages.values().sum();
        stages.insert("others".into(), (total - accounted).max(0.0));
        StageTimings { total, stages }
    }
}

/// Seconds per stage; `others` absorbs everything not charged to a stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub total: f64,
    pub stages: BTreeMap<String, f64>,
}
