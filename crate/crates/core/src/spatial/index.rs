//! Uniform cell grid for fixed-radius and nearest-neighbour queries.

use super::pattern::Window;

pub(crate) struct CellGrid<'a> {
    points: &'a [[f64; 2]],
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    /// `start[c]..start[c + 1]` indexes `order` for cell `c`.
    start: Vec<u32>,
    order: Vec<u32>,
}

impl<'a> CellGrid<'a> {
    pub fn new(points: &'a [[f64; 2]], window: &Window, cell: f64) -> Self {
        let cell = cell.max(window.width().max(window.height()) / 1024.0);
        let nx = ((window.width() / cell).ceil() as usize).max(1);
        let ny = ((window.height() / cell).ceil() as usize).max(1);
        let mut grid = CellGrid {
            points,
            x0: window.xmin,
            y0: window.ymin,
            cell,
            nx,
            ny,
            start: vec![0; nx * ny + 1],
            order: vec![0; points.len()],
        };
        let cells: Vec<usize> = points.iter().map(|&p| grid.cell_index(p)).collect();
        for &c in &cells {
            grid.start[c + 1] += 1;
        }
        for c in 0..nx * ny {
            grid.start[c + 1] += grid.start[c];
        }
        let mut fill = grid.start.clone();
        for (i, &c) in cells.iter().enumerate() {
            grid.order[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        grid
    }

    /// Grid sized for roughly `per_cell` points per cell.
    pub fn with_occupancy(points: &'a [[f64; 2]], window: &Window, per_cell: f64) -> Self {
        let n = points.len().max(1) as f64;
        Self::new(points, window, (window.area() * per_cell / n).sqrt())
    }

    fn coords(&self, p: [f64; 2]) -> (usize, usize) {
        let cx = (((p[0] - self.x0) / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
        let cy = (((p[1] - self.y0) / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
        (cx, cy)
    }

    fn cell_index(&self, p: [f64; 2]) -> usize {
        let (cx, cy) = self.coords(p);
        cy * self.nx + cx
    }

    fn cell_points(&self, cx: usize, cy: usize) -> &[u32] {
        let c = cy * self.nx + cx;
        &self.order[self.start[c] as usize..self.start[c + 1] as usize]
    }

    /// Calls `f(j, d)` for every indexed point `j` within distance `r` of `q`.
    pub fn for_each_within(&self, q: [f64; 2], r: f64, mut f: impl FnMut(usize, f64)) {
        let lo = self.coords([q[0] - r, q[1] - r]);
        let hi = self.coords([q[0] + r, q[1] + r]);
        let r2 = r * r;
        for cy in lo.1..=hi.1 {
            for cx in lo.0..=hi.0 {
                for &j in self.cell_points(cx, cy) {
                    let p = self.points[j as usize];
                    let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
                    let d2 = dx * dx + dy * dy;
                    if d2 <= r2 {
                        f(j as usize, d2.sqrt());
                    }
                }
            }
        }
    }

    /// Nearest-point distances for many queries. Queries are bucketed by
    /// cell so each cell's 3 x 3 neighbourhood is gathered once; queries
    /// whose neighbourhood does not settle the answer fall back to `nearest`.
    pub fn nearest_batch(&self, queries: &[[f64; 2]]) -> Vec<f64> {
        let ncell = self.nx * self.ny;
        let cells: Vec<usize> = queries.iter().map(|&q| self.cell_index(q)).collect();
        let mut start = vec![0usize; ncell + 1];
        for &c in &cells {
            start[c + 1] += 1;
        }
        for c in 0..ncell {
            start[c + 1] += start[c];
        }
        let mut fill = start.clone();
        let mut order = vec![0usize; queries.len()];
        for (i, &c) in cells.iter().enumerate() {
            order[fill[c]] = i;
            fill[c] += 1;
        }
        let mut out = vec![f64::INFINITY; queries.len()];
        let mut near: Vec<[f64; 2]> = Vec::new();
        let settled = self.cell * self.cell;
        for c in 0..ncell {
            if start[c] == start[c + 1] {
                continue;
            }
            let (cx, cy) = (c % self.nx, c / self.nx);
            near.clear();
            for ny in cy.saturating_sub(1)..=(cy + 1).min(self.ny - 1) {
                for nx in cx.saturating_sub(1)..=(cx + 1).min(self.nx - 1) {
                    near.extend(self.cell_points(nx, ny).iter().map(|&j| self.points[j as usize]));
                }
            }
            for &i in &order[start[c]..start[c + 1]] {
                let q = queries[i];
                let best2 = near
                    .iter()
                    .map(|p| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
                    .fold(f64::INFINITY, f64::min);
                out[i] = if best2 <= settled { best2.sqrt() } else { self.nearest(q, None) };
            }
        }
        out
    }

    /// Distance from `q` to the nearest indexed point other than `exclude`;
    /// infinite when there is none.
    pub fn nearest(&self, q: [f64; 2], exclude: Option<usize>) -> f64 {
        let (qx, qy) = self.coords(q);
        let mut best2 = f64::INFINITY;
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            let x_lo = qx as isize - ring as isize;
            let x_hi = (qx + ring) as isize;
            let y_lo = qy as isize - ring as isize;
            let y_hi = (qy + ring) as isize;
            for cy in y_lo..=y_hi {
                if cy < 0 || cy >= self.ny as isize {
                    continue;
                }
                let on_edge_row = cy == y_lo || cy == y_hi;
                let step = if on_edge_row { 1 } else { (x_hi - x_lo).max(1) as usize };
                let mut cx = x_lo;
                while cx <= x_hi {
                    if cx >= 0 && cx < self.nx as isize {
                        for &j in self.cell_points(cx as usize, cy as usize) {
                            if Some(j as usize) == exclude {
                                continue;
                            }
                            let p = self.points[j as usize];
                            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                            if d2 < best2 {
                                best2 = d2;
                            }
                        }
                    }
                    cx += step as isize;
                }
            }
            // anything in ring + 1 is at least ring * cell away
            let reach = ring as f64 * self.cell;
            if best2 <= reach * reach {
                break;
            }
        }
        best2.sqrt()
    }
}
