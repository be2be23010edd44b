use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangular observation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Window {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        let w = Window { xmin, xmax, ymin, ymax };
        w.validate()?;
        Ok(w)
    }

    pub fn unit_square() -> Self {
        Window { xmin: 0.0, xmax: 1.0, ymin: 0.0, ymax: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.xmin, self.xmax, self.ymin, self.ymax].iter().all(|v| v.is_finite());
        if !finite || self.xmax <= self.xmin || self.ymax <= self.ymin {
            return Err(Error::Parameter(format!("window {self:?} has no positive area")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.xmin && p[0] <= self.xmax && p[1] >= self.ymin && p[1] <= self.ymax
    }

    /// Distance from an interior point to the window boundary.
    pub fn border_distance(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.xmin).min(self.xmax - p[0]).min(p[1] - self.ymin).min(self.ymax - p[1])
    }

    pub fn dilate(&self, r: f64) -> Window {
        Window { xmin: self.xmin - r, xmax: self.xmax + r, ymin: self.ymin - r, ymax: self.ymax + r }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Window {
        Window { xmin: self.xmin + dx, xmax: self.xmax + dx, ymin: self.ymin + dy, ymax: self.ymax + dy }
    }

    /// Wraps a point onto the torus spanned by the window.
    pub fn wrap(&self, p: [f64; 2]) -> [f64; 2] {
        let wrap1 = |v: f64, lo: f64, len: f64| {
            let w = lo + (v - lo).rem_euclid(len);
            // rem_euclid can round up to exactly `len`
            if w >= lo + len { lo } else { w }
        };
        [wrap1(p[0], self.xmin, self.width()), wrap1(p[1], self.ymin, self.height())]
    }
}

/// Planar point pattern, optionally marked with integer types.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    points: Vec<[f64; 2]>,
    window: Window,
    marks: Option<Vec<u32>>,
}

impl PointPattern {
    pub fn new(points: Vec<[f64; 2]>, window: Window, marks: Option<Vec<u32>>) -> Result<Self> {
        window.validate()?;
        if let Some(m) = &marks {
            if m.len() != points.len() {
                return Err(Error::Dimension(format!("{} marks for {} points", m.len(), points.len())));
            }
        }
        if let Some(i) = points.iter().position(|&p| !window.contains(p)) {
            return Err(Error::Parameter(format!("point {i} {:?} lies outside the window", points[i])));
        }
        Ok(PointPattern { points, window, marks })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn marks(&self) -> Option<&[u32]> {
        self.marks.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn intensity(&self) -> f64 {
        self.points.len() as f64 / self.window.area()
    }

    /// Distinct marks in ascending order; empty when unmarked.
    pub fn types(&self) -> Vec<u32> {
        let mut t: Vec<u32> = self.marks.iter().flatten().copied().collect();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// Points carrying mark `mark`, as an unmarked pattern.
    pub fn subpattern(&self, mark: u32) -> PointPattern {
        let points = match &self.marks {
            Some(m) => self.points.iter().zip(m).filter(|(_, &k)| k == mark).map(|(p, _)| *p).collect(),
            None => Vec::new(),
        };
        PointPattern { points, window: self.window, marks: None }
    }

    pub fn unmarked(&self) -> PointPattern {
        PointPattern { points: self.points.clone(), window: self.window, marks: None }
    }

    /// Translates the pattern together with its window.
    pub fn translate(&self, dx: f64, dy: f64) -> PointPattern {
        PointPattern {
            points: self.points.iter().map(|p| [p[0] + dx, p[1] + dy]).collect(),
            window: self.window.translate(dx, dy),
            marks: self.marks.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_validation_and_geometry() {
        assert!(Window::new(0.0, 0.0, 0.0, 1.0).is_err());
        let w = Window::new(0.0, 2.0, 1.0, 2.0).unwrap();
        assert_eq!(w.area(), 2.0);
        assert_eq!(w.border_distance([0.5, 1.2]), 0.2_f64.min(0.5).min(1.2 - 1.0));
        assert_eq!(w.wrap([2.5, 0.5]), [0.5, 1.5]);
        assert_eq!(w.wrap([2.0, 2.0]), [0.0, 1.0]);
    }

    #[test]
    fn pattern_rejects_outside_points() {
        let w = Window::unit_square();
        assert!(PointPattern::new(vec![[0.5, 1.5]], w, None).is_err());
        assert!(PointPattern::new(vec![[0.5, 0.5]], w, Some(vec![])).is_err());
    }

    #[test]
    fn subpatterns_by_mark() {
        let w = Window::unit_square();
        let p = PointPattern::new(vec![[0.1, 0.1], [0.2, 0.2], [0.3, 0.3]], w, Some(vec![2, 1, 2])).unwrap();
        assert_eq!(p.types(), vec![1, 2]);
        assert_eq!(p.subpattern(2).len(), 2);
        assert_eq!(p.subpattern(7).len(), 0);
    }
}
