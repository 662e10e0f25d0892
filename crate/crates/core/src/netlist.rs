// SPDX-License-Identifier: Apache-2.0

//! Design model and JSON interchange.
//!
//! Instances are stored macros first, so macro ids are `0..num_macros` and
//! std-cell ids follow. The first pin of every net is its driver; dataflow
//! extraction relies on that convention.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChipOutline {
    pub width: f64,
    pub height: f64,
}

impl ChipOutline {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::Dimension(format!(
                "outline must be positive, got {width}x{height}"
            )));
        }
        Ok(ChipOutline { width, height })
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> Point {
        Point::new(self.width / 2.0, self.height / 2.0)
    }

    pub fn rect(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width, self.height)
    }

    pub fn boundary_tol(&self) -> f64 {
        1e-9 * self.width.max(self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstanceKind {
    Macro,
    Cell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: usize,
    pub name: String,
    pub kind: InstanceKind,
    pub width: f64,
    pub height: f64,
    pub is_flip_flop: bool,
    pub hier: Vec<String>,
    /// Lower-left corner of a pre-placed macro.
    pub fixed: Option<Point>,
}

impl Instance {
    pub fn is_macro(&self) -> bool {
        self.kind == InstanceKind::Macro
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Port {
    pub id: usize,
    pub name: String,
    pub pos: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PinRef {
    Instance(usize),
    Port(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pin {
    pub target: PinRef,
    /// Offset from the instance center.
    pub offset: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub id: usize,
    pub name: String,
    pub pins: Vec<Pin>,
}

impl Net {
    pub fn driver(&self) -> &Pin {
        &self.pins[0]
    }

    pub fn sinks(&self) -> &[Pin] {
        &self.pins[1..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub outline: ChipOutline,
    pub instances: Vec<Instance>,
    pub ports: Vec<Port>,
    pub nets: Vec<Net>,
    pub num_macros: usize,
}

impl Design {
    pub fn macro_count(&self) -> usize {
        self.num_macros
    }

    pub fn cell_count(&self) -> usize {
        self.instances.len() - self.num_macros
    }

    pub fn macros(&self) -> &[Instance] {
        &self.instances[..self.num_macros]
    }

    pub fn cells(&self) -> &[Instance] {
        &self.instances[self.num_macros..]
    }

    pub fn macro_area(&self) -> f64 {
        self.macros().iter().map(Instance::area).sum()
    }

    pub fn instance_by_name(&self) -> HashMap<&str, usize> {
        self.instances
            .iter()
            .map(|i| (i.name.as_str(), i.id))
            .collect()
    }

    /// Nets incident to every instance, by instance id.
    pub fn incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.instances.len()];
        for net in &self.nets {
            for pin in &net.pins {
                if let PinRef::Instance(i) = pin.target {
                    if inc[i].last() != Some(&net.id) {
                        inc[i].push(net.id);
                    }
                }
            }
        }
        inc
    }

    /// Builds and validates a design from its interchange form.
    pub fn from_file_format(file: DesignFile) -> Result<Self> {
        let outline = ChipOutline::new(file.outline.width, file.outline.height)?;
        let mut names: HashMap<String, PinRef> = HashMap::new();
        let mut instances = Vec::with_capacity(file.macros.len() + file.cells.len());

        for m in file.macros {
            if !(m.width > 0.0 && m.height > 0.0) {
                return Err(Error::Dimension(format!(
                    "macro `{}` has non-positive size {}x{}",
                    m.name, m.width, m.height
                )));
            }
            let id = instances.len();
            if names.insert(m.name.clone(), PinRef::Instance(id)).is_some() {
                return Err(Error::DuplicateName(m.name));
            }
            instances.push(Instance {
                id,
                name: m.name,
                kind: InstanceKind::Macro,
                width: m.width,
                height: m.height,
                is_flip_flop: false,
                hier: m.hier,
                fixed: m.fixed,
            });
        }
        let num_macros = instances.len();
        for c in file.cells {
            if c.width < 0.0 || c.height < 0.0 {
                return Err(Error::Dimension(format!(
                    "cell `{}` has negative size {}x{}",
                    c.name, c.width, c.height
                )));
            }
            let id = instances.len();
            if names.insert(c.name.clone(), PinRef::Instance(id)).is_some() {
                return Err(Error::DuplicateName(c.name));
            }
            instances.push(Instance {
                id,
                name: c.name,
                kind: InstanceKind::Cell,
                width: c.width,
                height: c.height,
                is_flip_flop: c.is_ff,
                hier: c.hier,
                fixed: None,
            });
        }

        let tol = outline.boundary_tol();
        let mut ports = Vec::with_capacity(file.ports.len());
        for p in file.ports {
            let on_edge = [p.x, p.y, outline.width - p.x, outline.height - p.y]
                .iter()
                .fold(f64::INFINITY, |a, d| a.min(d.abs()));
            let inside = p.x >= -tol
                && p.y >= -tol
                && p.x <= outline.width + tol
                && p.y <= outline.height + tol;
            if !inside || on_edge > tol {
                return Err(Error::Dimension(format!(
                    "port `{}` at ({}, {}) is not on the chip boundary",
                    p.name, p.x, p.y
                )));
            }
            let id = ports.len();
            if names.insert(p.name.clone(), PinRef::Port(id)).is_some() {
                return Err(Error::DuplicateName(p.name));
            }
            ports.push(Port {
                id,
                name: p.name,
                pos: Point::new(p.x, p.y),
            });
        }

        let mut nets = Vec::with_capacity(file.nets.len());
        for n in file.nets {
            if n.pins.len() < 2 {
                return Err(Error::DegenerateNet(n.name));
            }
            let mut pins = Vec::with_capacity(n.pins.len());
            for p in &n.pins {
                let target = *names.get(&p.reference).ok_or_else(|| Error::DanglingReference {
                    net: n.name.clone(),
                    reference: p.reference.clone(),
                })?;
                pins.push(Pin {
                    target,
                    offset: Point::new(p.dx, p.dy),
                });
            }
            nets.push(Net {
                id: nets.len(),
                name: n.name,
                pins,
            });
        }

        let design = Design {
            outline,
            instances,
            ports,
            nets,
            num_macros,
        };
        let area = design.macro_area();
        if area > outline.area() {
            return Err(Error::InfeasibleArea {
                area,
                budget: outline.area(),
            });
        }
        for m in design.macros() {
            if let Some(p) = m.fixed {
                let r = Rect::new(p.x, p.y, m.width, m.height);
                if !r.within(&outline.rect(), tol) {
                    return Err(Error::Dimension(format!(
                        "pre-placed macro `{}` lies outside the outline",
                        m.name
                    )));
                }
            }
        }
        Ok(design)
    }

    pub fn to_file_format(&self) -> DesignFile {
        let pin_name = |t: PinRef| match t {
            PinRef::Instance(i) => self.instances[i].name.clone(),
            PinRef::Port(p) => self.ports[p].name.clone(),
        };
        DesignFile {
            outline: OutlineRecord {
                width: self.outline.width,
                height: self.outline.height,
            },
            macros: self
                .macros()
                .iter()
                .map(|m| MacroRecord {
                    name: m.name.clone(),
                    width: m.width,
                    height: m.height,
                    hier: m.hier.clone(),
                    fixed: m.fixed,
                })
                .collect(),
            cells: self
                .cells()
                .iter()
                .map(|c| CellRecord {
                    name: c.name.clone(),
                    width: c.width,
                    height: c.height,
                    is_ff: c.is_flip_flop,
                    hier: c.hier.clone(),
                })
                .collect(),
            ports: self
                .ports
                .iter()
                .map(|p| PortRecord {
                    name: p.name.clone(),
                    x: p.pos.x,
                    y: p.pos.y,
                })
                .collect(),
            nets: self
                .nets
                .iter()
                .map(|n| NetRecord {
                    name: n.name.clone(),
                    pins: n
                        .pins
                        .iter()
                        .map(|p| PinRecord {
                            reference: pin_name(p.target),
                            dx: p.offset.x,
                            dy: p.offset.y,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_format()).expect("design serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DesignFile = serde_json::from_str(text).map_err(Error::from_json)?;
        Self::from_file_format(file)
    }
}

pub fn load_design(path: impl AsRef<Path>) -> Result<Design> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Design::from_json(&text)
}

pub fn save_design(design: &Design, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, design.to_json()).map_err(|e| Error::io(path, e))
}

// Interchange records.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub outline: OutlineRecord,
    #[serde(default)]
    pub macros: Vec<MacroRecord>,
    #[serde(default)]
    pub cells: Vec<CellRecord>,
    #[serde(default)]
    pub ports: Vec<PortRecord>,
    #[serde(default)]
    pub nets: Vec<NetRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutlineRecord {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MacroRecord {
    pub name: String,
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub hier: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<Point>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRecord {
    pub name: String,
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub is_ff: bool,
    #[serde(default)]
    pub hier: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortRecord {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetRecord {
    pub name: String,
    pub pins: Vec<PinRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PinRecord {
    #[serde(rename = "ref")]
    pub reference: String,
    #[serde(default)]
    pub dx: f64,
    #[serde(default)]
    pub dy: f64,
}

/// Parameters of the synthetic benchmark generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_macros: usize,
    pub n_cells: usize,
    pub n_nets: usize,
    pub outline: ChipOutline,
    /// Fraction of the outline covered by macros.
    pub macro_utilization: f64,
    pub hier_fanout: usize,
    pub hier_depth: usize,
    pub ff_fraction: f64,
    pub n_ports: usize,
    /// Probability that a net stays inside one hierarchy leaf.
    pub locality: f64,
}

impl SyntheticSpec {
    pub fn new(seed: u64, n_macros: usize, n_cells: usize, n_nets: usize, outline: ChipOutline) -> Self {
        SyntheticSpec {
            seed,
            n_macros,
            n_cells,
            n_nets,
            outline,
            macro_utilization: 0.3,
            hier_fanout: 3,
            hier_depth: 2,
            ff_fraction: 0.25,
            n_ports: 16,
            locality: 0.8,
        }
    }

    /// Scales cells, nets and outline with the macro count.
    pub fn scaled(seed: u64, n_macros: usize) -> Self {
        let side = 100.0 * (n_macros.max(8) as f64 / 8.0).sqrt();
        let mut spec = SyntheticSpec::new(
            seed,
            n_macros,
            25 * n_macros.max(8),
            35 * n_macros.max(8),
            ChipOutline {
                width: side,
                height: side,
            },
        );
        spec.hier_depth = if n_macros > 40 { 3 } else { 2 };
        spec
    }
}

/// Deterministic synthetic design with a balanced hierarchy, macro arrays
/// per hierarchy leaf and nets biased toward intra-leaf connectivity.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Design> {
    if spec.n_macros == 0 {
        return Err(Error::Config("n_macros must be at least 1".into()));
    }
    let budget = 0.6 * spec.outline.area();
    let target_area = spec.macro_utilization * spec.outline.area();
    if target_area > budget {
        return Err(Error::InfeasibleArea {
            area: target_area,
            budget,
        });
    }
    let mut rng = rng::stream(spec.seed, "synthetic", 0);
    let fanout = spec.hier_fanout.max(1);

    let mut leaves: Vec<Vec<String>> = vec![Vec::new()];
    for level in 0..spec.hier_depth {
        leaves = leaves
            .into_iter()
            .flat_map(|p| {
                (0..fanout).map(move |c| {
                    let mut q = p.clone();
                    q.push(format!("u{level}_{c}"));
                    q
                })
            })
            .collect();
    }

    // Macro arrays: each type shares a footprint and a hierarchy leaf.
    let mut footprints: Vec<(f64, f64, usize)> = Vec::new(); // (w, h, leaf)
    let mut remaining = spec.n_macros;
    while remaining > 0 {
        let count = [1usize, 2, 2, 4, 4, 4, 8][rng.gen_range(0..7)].min(remaining);
        let aspect: f64 = rng.gen_range(0.5..2.0);
        let area: f64 = rng.gen_range(0.5..1.5);
        let leaf = rng.gen_range(0..leaves.len());
        for _ in 0..count {
            footprints.push(((area * aspect).sqrt(), (area / aspect).sqrt(), leaf));
        }
        remaining -= count;
    }
    let raw: f64 = footprints.iter().map(|f| f.0 * f.1).sum();
    let scale = (target_area / raw).sqrt();
    let max_w = 0.3 * spec.outline.width;
    let max_h = 0.3 * spec.outline.height;

    let mut file = DesignFile {
        outline: OutlineRecord {
            width: spec.outline.width,
            height: spec.outline.height,
        },
        macros: Vec::new(),
        cells: Vec::new(),
        ports: Vec::new(),
        nets: Vec::new(),
    };
    let quant = |v: f64| (v * 1e3).round() / 1e3;
    for (i, &(w, h, leaf)) in footprints.iter().enumerate() {
        file.macros.push(MacroRecord {
            name: format!("m{i}"),
            width: quant((w * scale).min(max_w)),
            height: quant((h * scale).min(max_h)),
            hier: leaves[leaf].clone(),
            fixed: None,
        });
    }
    let macro_area: f64 = file.macros.iter().map(|m| m.width * m.height).sum();
    if macro_area > budget {
        return Err(Error::InfeasibleArea {
            area: macro_area,
            budget,
        });
    }

    let mut cells_by_leaf: Vec<Vec<usize>> = vec![Vec::new(); leaves.len()];
    for i in 0..spec.n_cells {
        let leaf = rng.gen_range(0..leaves.len());
        cells_by_leaf[leaf].push(i);
        file.cells.push(CellRecord {
            name: format!("c{i}"),
            width: [1.0, 1.0, 2.0, 3.0][rng.gen_range(0..4)],
            height: 1.0,
            is_ff: rng.gen_bool(spec.ff_fraction.clamp(0.0, 1.0)),
            hier: leaves[leaf].clone(),
        });
    }

    let (w, h) = (spec.outline.width, spec.outline.height);
    for i in 0..spec.n_ports {
        let t: f64 = rng.gen_range(0.0..1.0);
        let (x, y) = match rng.gen_range(0..4) {
            0 => (quant(t * w), 0.0),
            1 => (w, quant(t * h)),
            2 => (quant(t * w), h),
            _ => (0.0, quant(t * h)),
        };
        file.ports.push(PortRecord {
            name: format!("p{i}"),
            x,
            y,
        });
    }

    let macro_leaf: Vec<usize> = footprints.iter().map(|f| f.2).collect();
    let pick_cell = |rng: &mut rng::Rng, leaf: usize| -> Option<String> {
        let pool = &cells_by_leaf[leaf];
        if pool.is_empty() || !rng.gen_bool(spec.locality.clamp(0.0, 1.0)) {
            if spec.n_cells == 0 {
                return None;
            }
            return Some(format!("c{}", rng.gen_range(0..spec.n_cells)));
        }
        Some(format!("c{}", pool[rng.gen_range(0..pool.len())]))
    };
    let pin = |name: String| PinRecord {
        reference: name,
        dx: 0.0,
        dy: 0.0,
    };

    let mut net_id = 0usize;
    let mut push_net = |file: &mut DesignFile, pins: Vec<PinRecord>| {
        if pins.len() >= 2 {
            file.nets.push(NetRecord {
                name: format!("n{net_id}"),
                pins,
            });
            net_id += 1;
        }
    };

    // Macro nets: every macro drives and receives a few local nets; arrays
    // of one type share a bus with a cell of their leaf.
    let macro_nets = (spec.n_nets / 3).max(spec.n_macros * 2).min(spec.n_nets);
    let mut budget_nets = spec.n_nets;
    let mut type_start = 0;
    while type_start < footprints.len() && budget_nets > 0 {
        let leaf = footprints[type_start].2;
        let mut type_end = type_start + 1;
        while type_end < footprints.len()
            && footprints[type_end].2 == leaf
            && footprints[type_end].0 == footprints[type_start].0
        {
            type_end += 1;
        }
        if let Some(c) = pick_cell(&mut rng, leaf) {
            let mut pins = vec![pin(c)];
            pins.extend((type_start..type_end).map(|m| pin(format!("m{m}"))));
            push_net(&mut file, pins);
            budget_nets = budget_nets.saturating_sub(1);
        }
        type_start = type_end;
    }
    let mut made = 0;
    while made < macro_nets && budget_nets > 0 {
        let m = made % spec.n_macros;
        let leaf = macro_leaf[m];
        let fan = rng.gen_range(1..=3);
        let mut others: Vec<PinRecord> = (0..fan)
            .filter_map(|_| pick_cell(&mut rng, leaf).map(pin))
            .collect();
        if rng.gen_bool(0.15) && spec.n_macros > 1 {
            let other = rng.gen_range(0..spec.n_macros);
            if other != m {
                others.push(pin(format!("m{other}")));
            }
        }
        if !others.is_empty() {
            let mut pins = Vec::with_capacity(others.len() + 1);
            if rng.gen_bool(0.5) {
                pins.push(pin(format!("m{m}")));
                pins.extend(others);
            } else {
                pins.push(others.remove(0));
                pins.push(pin(format!("m{m}")));
                pins.extend(others);
            }
            push_net(&mut file, pins);
        }
        made += 1;
        budget_nets = budget_nets.saturating_sub(1);
    }

    let n_ports = spec.n_ports;
    while budget_nets > 0 && spec.n_cells > 0 {
        let leaf = rng.gen_range(0..leaves.len());
        let fan = [1usize, 1, 1, 2, 2, 3, 4][rng.gen_range(0..7)];
        let mut pins: Vec<PinRecord> = (0..=fan)
            .filter_map(|_| pick_cell(&mut rng, leaf).map(pin))
            .collect();
        pins.dedup_by(|a, b| a.reference == b.reference);
        if n_ports > 0 && rng.gen_bool(0.05) {
            let p = pin(format!("p{}", rng.gen_range(0..n_ports)));
            if rng.gen_bool(0.5) {
                pins.insert(0, p);
            } else {
                pins.push(p);
            }
        }
        push_net(&mut file, pins);
        budget_nets -= 1;
    }

    Design::from_file_format(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "outline": {"width": 100, "height": 100},
        "macros": [{"name": "m0", "width": 10, "height": 10, "hier": ["a"]}],
        "ports": [{"name": "p0", "x": 0, "y": 5}],
        "nets": [{"name": "n0", "pins": [{"ref": "m0"}, {"ref": "p0"}]}]
    }"#;

    #[test]
    fn minimal_design_loads() {
        let d = Design::from_json(MINIMAL).unwrap();
        assert_eq!(d.instances.len(), 1);
        assert_eq!(d.ports.len(), 1);
        assert_eq!(d.nets.len(), 1);
        assert_eq!(d.nets[0].pins[0].offset, Point::new(0.0, 0.0));
    }

    #[test]
    fn dangling_reference_names_the_target() {
        let text = MINIMAL.replace(r#"{"ref": "p0"}"#, r#"{"ref": "m9"}"#);
        let err = Design::from_json(&text).unwrap_err();
        match err {
            Error::DanglingReference { net, reference } => {
                assert_eq!(net, "n0");
                assert_eq!(reference, "m9");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn port_off_boundary_rejected() {
        let text = MINIMAL.replace(r#""x": 0, "y": 5"#, r#""x": 3, "y": 5"#);
        assert!(matches!(Design::from_json(&text), Err(Error::Dimension(_))));
    }

    #[test]
    fn non_positive_macro_rejected() {
        let text = MINIMAL.replace(r#""width": 10, "height": 10"#, r#""width": 0, "height": 10"#);
        assert!(matches!(Design::from_json(&text), Err(Error::Dimension(_))));
    }

    #[test]
    fn parse_error_carries_line() {
        let err = Design::from_json("{\n \"outline\": {\"width\": 1,, }").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn single_pin_net_rejected() {
        let text = MINIMAL.replace(r#", {"ref": "p0"}"#, "");
        assert!(matches!(Design::from_json(&text), Err(Error::DegenerateNet(_))));
    }

    #[test]
    fn round_trip_preserves_design() {
        let spec = SyntheticSpec::new(3, 6, 80, 120, ChipOutline::new(100.0, 100.0).unwrap());
        let d = generate_synthetic(&spec).unwrap();
        let back = Design::from_json(&d.to_json()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn synthetic_is_deterministic_and_seed_sensitive() {
        let outline = ChipOutline::new(100.0, 100.0).unwrap();
        let a = generate_synthetic(&SyntheticSpec::new(1, 8, 200, 300, outline)).unwrap();
        let b = generate_synthetic(&SyntheticSpec::new(1, 8, 200, 300, outline)).unwrap();
        let c = generate_synthetic(&SyntheticSpec::new(2, 8, 200, 300, outline)).unwrap();
        assert_eq!(a.macro_count(), 8);
        assert_eq!(a.to_json(), b.to_json());
        assert_ne!(a.nets, c.nets);
    }

    #[test]
    fn synthetic_scale_target() {
        let d = generate_synthetic(&SyntheticSpec::scaled(1, 132)).unwrap();
        assert_eq!(d.macro_count(), 132);
    }

    #[test]
    fn over_budget_utilization_rejected() {
        let mut spec = SyntheticSpec::new(1, 8, 10, 10, ChipOutline::new(100.0, 100.0).unwrap());
        spec.macro_utilization = 0.7;
        assert!(matches!(generate_synthetic(&spec), Err(Error::InfeasibleArea { .. })));
    }
}
