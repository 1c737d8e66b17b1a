//! Axis-aligned boxes in corner format.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[x1, y1, x2, y2]` in continuous image coordinates.
///
/// Construction rejects non-finite coordinates and boxes with zero or
/// negative extent, so every `Box2D` has positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Box2D {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl Box2D {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x1 >= x2 || y1 >= y2 {
            return Err(Error::InvalidBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Area of the overlap with `other`; zero when the boxes only touch.
    pub fn intersection_area(&self, other: &Box2D) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// True when the boxes share a region of positive area.
    pub fn overlaps(&self, other: &Box2D) -> bool {
        self.intersection_area(other) > 0.0
    }

    /// Splits the box into a `grid × grid` lattice of equal cells, row-major
    /// (cell `(x, y)` at position `y * grid + x`).
    pub fn grid_cells(&self, grid: usize) -> Vec<Box2D> {
        let cw = self.width() / grid as f64;
        let ch = self.height() / grid as f64;
        let mut cells = Vec::with_capacity(grid * grid);
        for y in 0..grid {
            for x in 0..grid {
                let x1 = self.x1 + cw * x as f64;
                let y1 = self.y1 + ch * y as f64;
                // Pin the outer edges so the lattice covers the box exactly.
                let x2 = if x + 1 == grid { self.x2 } else { self.x1 + cw * (x + 1) as f64 };
                let y2 = if y + 1 == grid { self.y2 } else { self.y1 + ch * (y + 1) as f64 };
                cells.push(Box2D { x1, y1, x2, y2 });
            }
        }
        cells
    }
}

impl TryFrom<[f64; 4]> for Box2D {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Box2D::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Box2D> for [f64; 4] {
    fn from(b: Box2D) -> Self {
        b.to_array()
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &Box2D, b: &Box2D) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Smallest box enclosing both inputs.
pub fn union_box(a: &Box2D, b: &Box2D) -> Box2D {
    Box2D {
        x1: a.x1.min(b.x1),
        y1: a.y1.min(b.y1),
        x2: a.x2.max(b.x2),
        y2: a.y2.max(b.y2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> Box2D {
        Box2D::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn iou_closed_forms() {
        assert_eq!(iou(&b(0., 0., 1., 1.), &b(0., 0., 1., 1.)), 1.0);
        assert_eq!(iou(&b(0., 0., 1., 1.), &b(2., 2., 3., 3.)), 0.0);
        let v = iou(&b(0., 0., 2., 2.), &b(1., 1., 3., 3.));
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn touching_boxes_do_not_overlap() {
        assert_eq!(iou(&b(0., 0., 1., 1.), &b(1., 0., 2., 1.)), 0.0);
        assert!(!b(0., 0., 1., 1.).overlaps(&b(1., 0., 2., 1.)));
    }

    #[test]
    fn union_box_examples() {
        assert_eq!(union_box(&b(0., 0., 1., 1.), &b(2., 2., 3., 3.)), b(0., 0., 3., 3.));
        let x = b(0.5, 1.0, 4.0, 2.5);
        assert_eq!(union_box(&x, &x), x);
        assert_eq!(union_box(&b(0., 0., 4., 4.), &b(1., 1., 2., 2.)), b(0., 0., 4., 4.));
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(Box2D::new(0., 0., 0., 1.).is_err());
        assert!(Box2D::new(1., 0., 0., 1.).is_err());
        assert!(Box2D::new(0., 0., f64::NAN, 1.).is_err());
        assert!(Box2D::new(0., 0., f64::INFINITY, 1.).is_err());
        assert!(serde_json::from_str::<Box2D>("[0, 0, 1, 0]").is_err());
    }

    #[test]
    fn grid_cells_tile_the_box() {
        let r = b(10., 20., 40., 50.);
        let cells = r.grid_cells(3);
        assert_eq!(cells.len(), 9);
        let total: f64 = cells.iter().map(|c| c.area()).sum();
        assert!((total - r.area()).abs() < 1e-9);
        assert_eq!(cells[0].to_array(), [10., 20., 20., 30.]);
        assert_eq!(cells[8].x2(), 40.);
        assert_eq!(cells[8].y2(), 50.);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_box() -> impl Strategy<Value = Box2D> {
            (-50.0..50.0f64, -50.0..50.0f64, 0.1..40.0f64, 0.1..40.0f64)
                .prop_map(|(x, y, w, h)| Box2D::new(x, y, x + w, y + h).unwrap())
        }

        proptest! {
            #[test]
            fn iou_symmetric_and_bounded(a in arb_box(), c in arb_box()) {
                let ab = iou(&a, &c);
                prop_assert_eq!(ab, iou(&c, &a));
                prop_assert!((0.0..=1.0).contains(&ab));
                prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
            }

            #[test]
            fn union_box_lattice_laws(a in arb_box(), c in arb_box(), d in arb_box()) {
                prop_assert_eq!(union_box(&a, &c), union_box(&c, &a));
                prop_assert_eq!(
                    union_box(&union_box(&a, &c), &d),
                    union_box(&a, &union_box(&c, &d))
                );
                prop_assert_eq!(union_box(&a, &a), a);
            }
        }
    }
}
