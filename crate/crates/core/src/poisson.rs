//! Poisson disk sampling over a rectangle (Bridson's dart throwing with a
//! background grid).
//!
//! The background grid has cell side `r / sqrt(2)`, so a cell holds at most
//! one accepted sample and every conflicting neighbour of a candidate lies in
//! the surrounding 5x5 block of cells. Candidates around an active sample are
//! drawn uniformly by area from the annulus `[r, 2r)`. A sample that produces
//! no acceptable candidate after `k` attempts retires from the active list;
//! sampling ends when the list is empty.
//!
//! The sampler does not promise maximality: with finite `k` small gaps can
//! remain. Callers that need full coverage (see [`crate::tiling`]) close
//! those gaps themselves.

use std::f64::consts::{SQRT_2, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Candidate attempts per active sample.
pub const DEFAULT_ATTEMPTS: u32 = 30;

const MAX_GRID_CELLS: u64 = 1 << 31;

/// The rectangle `[0, width] x [0, height]` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleDomain {
    width: f64,
    height: f64,
}

impl SampleDomain {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        if !(width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0) {
            return Err(Error::validation(format!(
                "sample domain must have positive size, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Samples with pairwise distance at least `radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<Point>,
    pub radius: f64,
    pub seed: u64,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// One `{"x": .., "y": ..}` object per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            out.push_str(&serde_json::to_string(p).expect("points serialize"));
            out.push('\n');
        }
        out
    }

    /// Parse the line format written by [`PointSet::to_json_lines`].
    pub fn from_json_lines(text: &str, radius: f64, seed: u64) -> Result<Self> {
        let points = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::json("points file", e)))
            .collect::<Result<Vec<Point>>>()?;
        Ok(Self {
            points,
            radius,
            seed,
        })
    }
}

struct Grid {
    cell: f64,
    cols: usize,
    rows: usize,
    slots: Vec<Option<u32>>,
}

impl Grid {
    fn new(domain: &SampleDomain, radius: f64) -> Result<Self> {
        let cell = radius / SQRT_2;
        let cols = (domain.width / cell).ceil().max(1.0);
        let rows = (domain.height / cell).ceil().max(1.0);
        if cols * rows > MAX_GRID_CELLS as f64 {
            return Err(Error::validation(format!(
                "radius {radius} too small for a {}x{} domain",
                domain.width, domain.height
            )));
        }
        let (cols, rows) = (cols as usize, rows as usize);
        Ok(Self {
            cell,
            cols,
            rows,
            slots: vec![None; cols * rows],
        })
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let cx = ((p.x / self.cell) as usize).min(self.cols - 1);
        let cy = ((p.y / self.cell) as usize).min(self.rows - 1);
        (cx, cy)
    }

    fn insert(&mut self, p: Point, index: u32) {
        let (cx, cy) = self.cell_of(p);
        self.slots[cy * self.cols + cx] = Some(index);
    }

    fn is_free(&self, p: Point, points: &[Point], radius_sq: f64) -> bool {
        let (cx, cy) = self.cell_of(p);
        let x0 = cx.saturating_sub(2);
        let y0 = cy.saturating_sub(2);
        let x1 = (cx + 2).min(self.cols - 1);
        let y1 = (cy + 2).min(self.rows - 1);
        for gy in y0..=y1 {
            for gx in x0..=x1 {
                if let Some(i) = self.slots[gy * self.cols + gx] {
                    if points[i as usize].distance_sq(&p) < radius_sq {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Draw a Poisson disk sample set over `domain`.
///
/// Deterministic in `(domain, radius, attempts, seed)`.
pub fn sample_poisson(
    domain: SampleDomain,
    radius: f64,
    attempts: u32,
    seed: u64,
) -> Result<PointSet> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::validation(format!("radius must be positive, got {radius}")));
    }
    if attempts == 0 {
        return Err(Error::validation("attempt count must be at least 1"));
    }

    let mut rng = rng_from_seed(seed);
    let mut grid = Grid::new(&domain, radius)?;
    let radius_sq = radius * radius;

    let first = Point {
        x: rng.random::<f64>() * domain.width,
        y: rng.random::<f64>() * domain.height,
    };
    let mut points = vec![first];
    grid.insert(first, 0);
    let mut active: Vec<u32> = vec![0];

    while !active.is_empty() {
        let slot = rng.random_range(0..active.len());
        let parent = points[active[slot] as usize];
        let mut accepted = false;
        for _ in 0..attempts {
            let angle = rng.random::<f64>() * TAU;
            // Uniform by area over the annulus [r, 2r).
            let dist = (radius_sq * (1.0 + 3.0 * rng.random::<f64>())).sqrt();
            let candidate = Point {
                x: parent.x + dist * angle.cos(),
                y: parent.y + dist * angle.sin(),
            };
            if candidate.x < 0.0
                || candidate.y < 0.0
                || candidate.x >= domain.width
                || candidate.y >= domain.height
            {
                continue;
            }
            if grid.is_free(candidate, &points, radius_sq) {
                let index = points.len() as u32;
                points.push(candidate);
                grid.insert(candidate, index);
                active.push(index);
                accepted = true;
                break;
            }
        }
        if !accepted {
            active.swap_remove(slot);
        }
    }

    Ok(PointSet {
        points,
        radius,
        seed,
    })
}

/// Brute-force O(n^2) check that every pair is at least `radius` apart.
pub fn verify_min_distance(set: &PointSet) -> bool {
    let radius_sq = set.radius * set.radius;
    let pts = &set.points;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            if pts[i].distance_sq(&pts[j]) < radius_sq {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn domain(w: f64, h: f64) -> SampleDomain {
        SampleDomain::new(w, h).unwrap()
    }

    #[test]
    fn radius_beyond_diagonal_gives_one_point() {
        let set = sample_poisson(domain(100.0, 100.0), 200.0, 30, 1).unwrap();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn min_distance_holds_on_large_domain() {
        let set = sample_poisson(domain(1000.0, 1000.0), 50.0, 30, 7).unwrap();
        assert!(set.len() > 100);
        assert!(verify_min_distance(&set));
        assert!(set.points.iter().all(|p| domain(1000.0, 1000.0).contains(*p)));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = sample_poisson(domain(1000.0, 1000.0), 50.0, 30, 7).unwrap();
        let b = sample_poisson(domain(1000.0, 1000.0), 50.0, 30, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_poisson(domain(1000.0, 1000.0), 50.0, 30, 8).unwrap();
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(sample_poisson(domain(10.0, 10.0), 0.0, 30, 0).is_err());
        assert!(sample_poisson(domain(10.0, 10.0), -1.0, 30, 0).is_err());
        assert!(sample_poisson(domain(10.0, 10.0), 1.0, 0, 0).is_err());
        assert!(SampleDomain::new(0.0, 10.0).is_err());
    }

    #[test]
    fn verify_examples() {
        let r = 5.0;
        let set = |pts: Vec<(f64, f64)>| PointSet {
            points: pts.into_iter().map(|(x, y)| Point { x, y }).collect(),
            radius: r,
            seed: 0,
        };
        assert!(verify_min_distance(&set(vec![])));
        assert!(verify_min_distance(&set(vec![(0.0, 0.0), (0.0, r)])));
        assert!(!verify_min_distance(&set(vec![(0.0, 0.0), (0.0, r - 0.001)])));
    }

    #[test]
    fn density_below_packing_bound() {
        for (i, (w, h, r)) in [(2000.0, 1000.0, 20.0), (4096.0, 4096.0, 64.0), (640.0, 480.0, 8.0)]
            .into_iter()
            .enumerate()
        {
            let set = sample_poisson(domain(w, h), r, 30, i as u64).unwrap();
            let bound = 4.0 * w * h / (PI * r * r) * 1.05;
            assert!((set.len() as f64) <= bound, "{} > {bound}", set.len());
        }
    }

    #[test]
    fn json_lines_round_trip() {
        let set = sample_poisson(domain(300.0, 200.0), 40.0, 30, 3).unwrap();
        let text = set.to_json_lines();
        assert!(text.lines().next().unwrap().starts_with("{\"x\":"));
        let back = PointSet::from_json_lines(&text, 40.0, 3).unwrap();
        assert_eq!(back, set);
    }
}
