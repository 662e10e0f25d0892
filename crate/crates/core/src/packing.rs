// SPDX-License-Identifier: Apache-2.0

//! Corner-anchored packing trees.
//!
//! Each corner owns a binary tree packed in pre-order inside a local frame
//! whose origin is the corner and whose axes point into the die. A left child
//! sits to the right of its parent, a right child on top of it, and the
//! vertical position comes from a contour of everything packed so far.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::geometry::Rect;
use crate::netlist::ChipOutline;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Corner {
    BL,
    BR,
    TL,
    TR,
}

impl Corner {
    pub const ALL: [Corner; 4] = [Corner::BL, Corner::BR, Corner::TL, Corner::TR];

    pub fn index(self) -> usize {
        self as usize
    }

    fn flips(self) -> (bool, bool) {
        match self {
            Corner::BL => (false, false),
            Corner::BR => (true, false),
            Corner::TL => (false, true),
            Corner::TR => (true, true),
        }
    }

    /// The die corner this tree grows from.
    pub fn point(self, outline: &ChipOutline) -> crate::geometry::Point {
        let (fx, fy) = self.flips();
        crate::geometry::Point::new(
            if fx { outline.width } else { 0.0 },
            if fy { outline.height } else { 0.0 },
        )
    }

    /// The quarter of the die nearest this corner.
    pub fn quadrant(self, outline: &ChipOutline) -> Rect {
        let (hw, hh) = (outline.width / 2.0, outline.height / 2.0);
        let (fx, fy) = self.flips();
        Rect::new(if fx { hw } else { 0.0 }, if fy { hh } else { 0.0 }, hw, hh)
    }

    /// Maps a corner-local rectangle to chip coordinates.
    pub fn to_chip(self, local: Rect, outline: &ChipOutline) -> Rect {
        let (fx, fy) = self.flips();
        Rect::new(
            if fx { outline.width - local.x - local.w } else { local.x },
            if fy { outline.height - local.y - local.h } else { local.y },
            local.w,
            local.h,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub macro_id: usize,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub parent: Option<usize>,
}

/// An empty child position where a subtree can be attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotRef {
    Root,
    Left(usize),
    Right(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mutation {
    Swap,
    RotateLeft,
    RotateRight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingTree {
    pub corner: Corner,
    nodes: Vec<Node>,
    root: Option<usize>,
}

impl PackingTree {
    pub fn new(corner: Corner) -> Self {
        PackingTree {
            corner,
            nodes: Vec::new(),
            root: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> Option<usize> {
        self.root
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn macros(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().map(|n| n.macro_id)
    }

    pub fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack: Vec<usize> = self.root.into_iter().collect();
        while let Some(n) = stack.pop() {
            order.push(n);
            let node = &self.nodes[n];
            stack.extend(node.right);
            stack.extend(node.left);
        }
        order
    }

    /// The k+1 empty child positions of a k-node tree, in pre-order.
    pub fn enumerate_slots(&self) -> Vec<SlotRef> {
        if self.root.is_none() {
            return vec![SlotRef::Root];
        }
        let mut slots = Vec::with_capacity(self.nodes.len() + 1);
        for n in self.preorder() {
            if self.nodes[n].left.is_none() {
                slots.push(SlotRef::Left(n));
            }
            if self.nodes[n].right.is_none() {
                slots.push(SlotRef::Right(n));
            }
        }
        slots
    }

    /// Places a new leaf at an empty slot and returns its node id.
    ///
    /// Panics if the slot is occupied.
    pub fn insert(&mut self, slot: SlotRef, macro_id: usize) -> usize {
        let id = self.nodes.len();
        let parent = match slot {
            SlotRef::Root => {
                assert!(self.root.is_none(), "root slot is occupied");
                self.root = Some(id);
                None
            }
            SlotRef::Left(p) => {
                assert!(self.nodes[p].left.is_none(), "left slot of {p} is occupied");
                self.nodes[p].left = Some(id);
                Some(p)
            }
            SlotRef::Right(p) => {
                assert!(self.nodes[p].right.is_none(), "right slot of {p} is occupied");
                self.nodes[p].right = Some(id);
                Some(p)
            }
        };
        self.nodes.push(Node {
            macro_id,
            left: None,
            right: None,
            parent,
        });
        id
    }

    /// Grows a random binary subtree over `macros` (shuffled) from `slot`
    /// and returns its node ids; the first one is the subtree root.
    pub fn attach_subtree(&mut self, slot: SlotRef, macros: &[usize], rng: &mut Rng) -> Vec<usize> {
        let mut order = macros.to_vec();
        order.shuffle(rng);
        let mut added = Vec::with_capacity(order.len());
        let mut open: Vec<SlotRef> = vec![slot];
        for m in order {
            let s = open.swap_remove(rng.gen_range(0..open.len()));
            let id = self.insert(s, m);
            open.push(SlotRef::Left(id));
            open.push(SlotRef::Right(id));
            added.push(id);
        }
        added
    }

    fn subtree_nodes(&self, root: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].left);
            stack.extend(self.nodes[n].right);
        }
        out
    }

    /// Removes the subtree rooted at `root`, renumbering the remaining nodes
    /// in their original relative order.
    pub fn detach_subtree(&mut self, root: usize) {
        let doomed = self.subtree_nodes(root);
        let mut gone = vec![false; self.nodes.len()];
        doomed.iter().for_each(|&n| gone[n] = true);
        match self.nodes[root].parent {
            None => self.root = None,
            Some(p) => {
                let pn = &mut self.nodes[p];
                if pn.left == Some(root) {
                    pn.left = None;
                } else {
                    pn.right = None;
                }
            }
        }
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut next = 0;
        for (i, g) in gone.iter().enumerate() {
            if !g {
                remap[i] = next;
                next += 1;
            }
        }
        let fix = |o: Option<usize>| o.map(|i| remap[i]);
        let old = std::mem::take(&mut self.nodes);
        self.nodes = old
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !gone[*i])
            .map(|(_, n)| Node {
                macro_id: n.macro_id,
                left: fix(n.left),
                right: fix(n.right),
                parent: fix(n.parent),
            })
            .collect();
        self.root = fix(self.root);
    }

    fn replace_child(&mut self, parent: Option<usize>, old: usize, new: usize) {
        match parent {
            None => self.root = Some(new),
            Some(p) => {
                if self.nodes[p].left == Some(old) {
                    self.nodes[p].left = Some(new);
                } else {
                    self.nodes[p].right = Some(new);
                }
            }
        }
        self.nodes[new].parent = parent;
    }

    /// Applies one operator at `x`; rotations without the needed child are no-ops.
    pub fn apply(&mut self, op: Mutation, x: usize) {
        match op {
            Mutation::Swap => {
                let n = &mut self.nodes[x];
                std::mem::swap(&mut n.left, &mut n.right);
            }
            Mutation::RotateLeft => {
                let Some(y) = self.nodes[x].right else { return };
                let inner = self.nodes[y].left;
                self.replace_child(self.nodes[x].parent, x, y);
                self.nodes[x].right = inner;
                if let Some(c) = inner {
                    self.nodes[c].parent = Some(x);
                }
                self.nodes[y].left = Some(x);
                self.nodes[x].parent = Some(y);
            }
            Mutation::RotateRight => {
                let Some(y) = self.nodes[x].left else { return };
                let inner = self.nodes[y].right;
                self.replace_child(self.nodes[x].parent, x, y);
                self.nodes[x].left = inner;
                if let Some(c) = inner {
                    self.nodes[c].parent = Some(x);
                }
                self.nodes[y].right = Some(x);
                self.nodes[x].parent = Some(y);
            }
        }
    }

    /// Runs one mutation sequence at nodes drawn from `candidates`: each step
    /// continues with probability `p` and picks an operator uniformly.
    /// Returns the number of operators applied.
    pub fn mutate_nodes(&mut self, candidates: &[usize], p: f64, rng: &mut Rng) -> usize {
        let mut count = 0;
        while rng.gen_bool(p) {
            let op = [Mutation::Swap, Mutation::RotateLeft, Mutation::RotateRight][rng.gen_range(0..3)];
            if !candidates.is_empty() {
                let x = candidates[rng.gen_range(0..candidates.len())];
                self.apply(op, x);
            }
            count += 1;
        }
        count
    }

    /// [`PackingTree::mutate_nodes`] over the whole tree.
    pub fn mutate(&mut self, p: f64, rng: &mut Rng) -> usize {
        let all: Vec<usize> = (0..self.nodes.len()).collect();
        self.mutate_nodes(&all, p, rng)
    }

    /// Checks parent/child consistency and reachability of every node.
    pub fn is_proper(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<(usize, Option<usize>)> = self.root.map(|r| (r, None)).into_iter().collect();
        while let Some((n, parent)) = stack.pop() {
            if seen[n] || self.nodes[n].parent != parent {
                return false;
            }
            seen[n] = true;
            stack.extend(self.nodes[n].left.map(|c| (c, Some(n))));
            stack.extend(self.nodes[n].right.map(|c| (c, Some(n))));
        }
        seen.iter().all(|&s| s)
    }

    /// Indented text dump, `L`/`R` marking the child side.
    pub fn dump(&self, names: impl Fn(usize) -> String) -> String {
        let mut out = format!("{:?}\n", self.corner);
        let mut stack: Vec<(usize, usize, char)> = self.root.map(|r| (r, 0, '*')).into_iter().collect();
        while let Some((n, depth, side)) = stack.pop() {
            let _ = writeln!(out, "{}{side} {}", "  ".repeat(depth + 1), names(self.nodes[n].macro_id));
            stack.extend(self.nodes[n].right.map(|c| (c, depth + 1, 'R')));
            stack.extend(self.nodes[n].left.map(|c| (c, depth + 1, 'L')));
        }
        out
    }

    /// Packs the tree. `sizes[macro_id]` is the macro footprint and `halo`
    /// inflates every side during packing.
    pub fn pack(&self, sizes: &[(f64, f64)], outline: &ChipOutline, halo: f64) -> PackedPlacement {
        let mut contour = Contour::new();
        let mut local = vec![Rect::default(); self.nodes.len()];
        let mut placed = Vec::with_capacity(self.nodes.len());
        for n in self.preorder() {
            let node = &self.nodes[n];
            let (w, h) = sizes[node.macro_id];
            let (w, h) = (w + 2.0 * halo, h + 2.0 * halo);
            let x = match node.parent {
                None => 0.0,
                Some(p) if self.nodes[p].left == Some(n) => local[p].x2(),
                Some(p) => local[p].x,
            };
            let y = contour.query(x, x + w);
            contour.update(x, x + w, y + h);
            local[n] = Rect::new(x, y, w, h);
            let chip = self.corner.to_chip(local[n], outline).inflate(-halo);
            placed.push(PackedMacro {
                macro_id: node.macro_id,
                node: n,
                rect: chip,
            });
        }
        let die = outline.rect();
        let tol = outline.boundary_tol();
        let out_of_bounds = placed.iter().any(|p| !p.rect.inflate(halo).within(&die, tol));
        PackedPlacement {
            corner: self.corner,
            macros: placed,
            contour,
            flags: LegalityFlags {
                out_of_bounds,
                ..LegalityFlags::default()
            },
        }
    }
}

/// Upper envelope of packed rectangles along the local x-axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    /// (x0, x1, height) segments, sorted and contiguous from 0 to infinity.
    segments: Vec<(f64, f64, f64)>,
}

impl Default for Contour {
    fn default() -> Self {
        Self::new()
    }
}

impl Contour {
    pub fn new() -> Self {
        Contour {
            segments: vec![(0.0, f64::INFINITY, 0.0)],
        }
    }

    pub fn segments(&self) -> &[(f64, f64, f64)] {
        &self.segments
    }

    /// Highest segment over the open span (a, b).
    pub fn query(&self, a: f64, b: f64) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.0 < b && s.1 > a)
            .map(|s| s.2)
            .fold(0.0, f64::max)
    }

    /// Height at local x (right-continuous).
    pub fn height_at(&self, x: f64) -> f64 {
        self.segments
            .iter()
            .find(|s| s.0 <= x && x < s.1)
            .map_or(0.0, |s| s.2)
    }

    pub fn update(&mut self, a: f64, b: f64, height: f64) {
        if b <= a {
            return;
        }
        let mut next = Vec::with_capacity(self.segments.len() + 2);
        let mut inserted = false;
        for &(x0, x1, y) in &self.segments {
            if x1 <= a || x0 >= b {
                if x0 >= b && !inserted {
                    next.push((a, b, height));
                    inserted = true;
                }
                next.push((x0, x1, y));
                continue;
            }
            if x0 < a {
                next.push((x0, a, y));
            }
            if !inserted {
                next.push((a, b, height));
                inserted = true;
            }
            if x1 > b {
                next.push((b, x1, y));
            }
        }
        if !inserted {
            next.push((a, b, height));
        }
        next.dedup_by(|cur, prev| {
            if prev.2 == cur.2 && prev.1 == cur.0 {
                prev.1 = cur.1;
                true
            } else {
                false
            }
        });
        self.segments = next;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegalityFlags {
    pub overlap_other_corner: bool,
    pub out_of_bounds: bool,
    pub moved_fixed: bool,
}

impl LegalityFlags {
    pub fn is_legal(&self) -> bool {
        !(self.overlap_other_corner || self.out_of_bounds || self.moved_fixed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackedMacro {
    pub macro_id: usize,
    pub node: usize,
    /// Chip coordinates, halo excluded.
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedPlacement {
    pub corner: Corner,
    /// In packing (pre-)order.
    pub macros: Vec<PackedMacro>,
    /// Local-frame contour after the pass.
    pub contour: Contour,
    pub flags: LegalityFlags,
}

impl PackedPlacement {
    pub fn rect_of(&self, macro_id: usize) -> Option<Rect> {
        self.macros.iter().find(|p| p.macro_id == macro_id).map(|p| p.rect)
    }

    /// Sets the cross-corner flags: overlap (with halos) against `obstacles`
    /// and drift of previously placed macros away from `fixed`. Penetration
    /// up to `tol` counts as touching.
    pub fn check_against(&mut self, obstacles: &[Rect], fixed: &[(usize, Rect)], halo: f64, tol: f64) {
        self.flags.overlap_other_corner = self.macros.iter().any(|p| {
            let r = p.rect.inflate(halo);
            obstacles.iter().any(|o| r.overlap_area_tol(&o.inflate(halo), tol) > 0.0)
        });
        self.flags.moved_fixed = fixed.iter().any(|&(m, want)| match self.rect_of(m) {
            Some(got) => (got.x - want.x).abs() > 1e-9 || (got.y - want.y).abs() > 1e-9,
            None => true,
        });
    }
}
