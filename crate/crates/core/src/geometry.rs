//! Axis-aligned rectangles in the package x-y plane.

/// Absolute tolerance, in meters, for edge coincidence and containment.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn from_origin_size(origin: [f64; 2], size: [f64; 2]) -> Self {
        Rect {
            x0: origin[0],
            y0: origin[1],
            x1: origin[0] + size[0],
            y1: origin[1] + size[1],
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Rect {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }

    /// Area of the intersection, zero when the rectangles only touch.
    pub fn overlap_area(&self, other: &Rect) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w > EPS && h > EPS {
            w * h
        } else {
            0.0
        }
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.overlap_area(other) > 0.0
    }

    pub fn contains_rect(&self, inner: &Rect) -> bool {
        inner.x0 >= self.x0 - EPS
            && inner.y0 >= self.y0 - EPS
            && inner.x1 <= self.x1 + EPS
            && inner.y1 <= self.y1 + EPS
    }

    /// Closed containment of a point.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x0 - EPS && x <= self.x1 + EPS && y >= self.y0 - EPS && y <= self.y1 + EPS
    }

    /// Splits the rectangle into an `nx` by `ny` grid and returns cell `(i, j)`.
    pub fn cell(&self, nx: usize, ny: usize, i: usize, j: usize) -> Rect {
        let dx = self.width() / nx as f64;
        let dy = self.height() / ny as f64;
        // Outer edges are pinned to the parent so neighbouring blocks stay flush.
        let x0 = if i == 0 { self.x0 } else { self.x0 + dx * i as f64 };
        let x1 = if i + 1 == nx { self.x1 } else { self.x0 + dx * (i + 1) as f64 };
        let y0 = if j == 0 { self.y0 } else { self.y0 + dy * j as f64 };
        let y1 = if j + 1 == ny { self.y1 } else { self.y0 + dy * (j + 1) as f64 };
        Rect { x0, y0, x1, y1 }
    }
}

/// Length of the shared segment of two intervals, zero if they only touch.
pub fn interval_overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    let len = a1.min(b1) - a0.max(b0);
    if len > EPS {
        len
    } else {
        0.0
    }
}
