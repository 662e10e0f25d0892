// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned rectangle anchored at its lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Rect { x, y, w, h }
    }

    pub fn centered(c: Point, w: f64, h: f64) -> Self {
        Rect::new(c.x - w / 2.0, c.y - h / 2.0, w, h)
    }

    pub fn x2(&self) -> f64 {
        self.x + self.w
    }

    pub fn y2(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn inflate(&self, d: f64) -> Rect {
        Rect::new(self.x - d, self.y - d, self.w + 2.0 * d, self.h + 2.0 * d)
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let x1 = self.x.max(other.x);
        let y1 = self.y.max(other.y);
        let x2 = self.x2().min(other.x2());
        let y2 = self.y2().min(other.y2());
        (x2 > x1 && y2 > y1).then(|| Rect::new(x1, y1, x2 - x1, y2 - y1))
    }

    pub fn overlap_area(&self, other: &Rect) -> f64 {
        self.intersection(other).map_or(0.0, |r| r.area())
    }

    /// Like [`Rect::overlap_area`], but a penetration of at most `tol` along
    /// either axis counts as touching. Mirrored corner coordinates can
    /// disagree with their neighbors by a few ulps.
    pub fn overlap_area_tol(&self, other: &Rect, tol: f64) -> f64 {
        let dx = self.x2().min(other.x2()) - self.x.max(other.x);
        let dy = self.y2().min(other.y2()) - self.y.max(other.y);
        if dx > tol && dy > tol {
            dx * dy
        } else {
            0.0
        }
    }

    /// True when `self` lies inside `outer` up to `tol`.
    pub fn within(&self, outer: &Rect, tol: f64) -> bool {
        self.x >= outer.x - tol
            && self.y >= outer.y - tol
            && self.x2() <= outer.x2() + tol
            && self.y2() <= outer.y2() + tol
    }

    /// Smallest distance from any edge of `self` to the boundary of `outer`.
    pub fn boundary_gap(&self, outer: &Rect) -> f64 {
        (self.x - outer.x)
            .min(self.y - outer.y)
            .min(outer.x2() - self.x2())
            .min(outer.y2() - self.y2())
            .max(0.0)
    }

    pub fn union_bbox(rects: impl IntoIterator<Item = Rect>) -> Option<Rect> {
        let mut it = rects.into_iter();
        let first = it.next()?;
        let (mut x1, mut y1, mut x2, mut y2) = (first.x, first.y, first.x2(), first.y2());
        for r in it {
            x1 = x1.min(r.x);
            y1 = y1.min(r.y);
            x2 = x2.max(r.x2());
            y2 = y2.max(r.y2());
        }
        Some(Rect::new(x1, y1, x2 - x1, y2 - y1))
    }
}

/// Area of the union of `rects`, by coordinate compression.
pub fn union_area(rects: &[Rect]) -> f64 {
    let rects: Vec<&Rect> = rects.iter().filter(|r| r.w > 0.0 && r.h > 0.0).collect();
    if rects.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = rects.iter().flat_map(|r| [r.x, r.x2()]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut area = 0.0;
    let mut spans: Vec<(f64, f64)> = Vec::with_capacity(rects.len());
    for win in xs.windows(2) {
        let (xa, xb) = (win[0], win[1]);
        spans.clear();
        spans.extend(
            rects
                .iter()
                .filter(|r| r.x <= xa && r.x2() >= xb)
                .map(|r| (r.y, r.y2())),
        );
        if spans.is_empty() {
            continue;
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut covered = 0.0;
        let (mut lo, mut hi) = spans[0];
        for &(a, b) in &spans[1..] {
            if a > hi {
                covered += hi - lo;
                lo = a;
                hi = b;
            } else {
                hi = hi.max(b);
            }
        }
        covered += hi - lo;
        area += covered * (xb - xa);
    }
    area
}

/// Total pairwise intersection area over unordered pairs, ignoring
/// penetrations up to `tol`.
pub fn pairwise_overlap(rects: &[Rect], tol: f64) -> f64 {
    let mut total = 0.0;
    for (i, a) in rects.iter().enumerate() {
        for b in &rects[i + 1..] {
            total += a.overlap_area_tol(b, tol);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_of_overlapping_squares() {
        let a = Rect::new(0.0, 0.0, 2.0, 2.0);
        let b = Rect::new(1.0, 1.0, 2.0, 2.0);
        assert_eq!(union_area(&[a, b]), 7.0);
        assert_eq!(union_area(&[a, a]), 4.0);
        assert_eq!(union_area(&[]), 0.0);
    }

    #[test]
    fn touching_rectangles_do_not_overlap() {
        let a = Rect::new(0.0, 0.0, 10.0, 5.0);
        let b = Rect::new(10.0, 0.0, 8.0, 6.0);
        assert_eq!(a.overlap_area(&b), 0.0);
        assert_eq!(a.overlap_area(&a), 50.0);
        let c = Rect::new(10.0 - 1e-12, 0.0, 8.0, 6.0);
        assert!(a.overlap_area(&c) > 0.0);
        assert_eq!(a.overlap_area_tol(&c, 1e-9), 0.0);
    }

    #[test]
    fn boundary_gap_is_min_edge_distance() {
        let die = Rect::new(0.0, 0.0, 100.0, 100.0);
        assert_eq!(Rect::new(0.0, 0.0, 10.0, 10.0).boundary_gap(&die), 0.0);
        assert_eq!(Rect::new(20.0, 30.0, 10.0, 10.0).boundary_gap(&die), 20.0);
    }
}
