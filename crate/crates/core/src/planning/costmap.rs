//! Rolling costmap with a navigability base layer, scan marking and
//! inflation by an exact Euclidean distance transform.

use std::path::Path;

use image::{GrayImage, Luma};
use thiserror::Error;

use crate::geometry::{Pose2, Vec2};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("navigability image: {0}")]
    Image(#[from] image::ImageError),
    #[error("navigability grid: {0}")]
    Invalid(String),
}

/// Static navigability map: a grayscale grid where values below 128 mark
/// non-navigable cells. The last image row sits at `origin.y`, so the image
/// reads like a map with north up.
#[derive(Debug, Clone, PartialEq)]
pub struct NavGrid {
    pub resolution: f64,
    /// World position of the lower-left corner.
    pub origin: Vec2,
    pub width: usize,
    pub height: usize,
    /// Row-major from the bottom row, `true` where navigable.
    pub navigable: Vec<bool>,
}

pub const NAVIGABLE_THRESHOLD: u8 = 128;

impl NavGrid {
    pub fn all_navigable(width: usize, height: usize, resolution: f64, origin: Vec2) -> Self {
        Self {
            resolution,
            origin,
            width,
            height,
            navigable: vec![true; width * height],
        }
    }

    pub fn from_image(img: &GrayImage, resolution: f64, origin: Vec2) -> Result<Self, GridError> {
        if !(resolution > 0.0) {
            return Err(GridError::Invalid("resolution must be positive".into()));
        }
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut navigable = vec![true; w * h];
        for row in 0..h {
            for col in 0..w {
                let px = img.get_pixel(col as u32, (h - 1 - row) as u32).0[0];
                navigable[row * w + col] = px >= NAVIGABLE_THRESHOLD;
            }
        }
        Ok(Self {
            resolution,
            origin,
            width: w,
            height: h,
            navigable,
        })
    }

    pub fn to_image(&self) -> GrayImage {
        let (w, h) = (self.width as u32, self.height as u32);
        GrayImage::from_fn(w, h, |x, y| {
            let row = (h - 1 - y) as usize;
            Luma([if self.navigable[row * self.width + x as usize] { 255 } else { 0 }])
        })
    }

    /// Loads a binary PGM (or any grayscale format the decoder recognizes).
    pub fn load(path: &Path, resolution: f64, origin: Vec2) -> Result<Self, GridError> {
        let img = image::ImageReader::open(path)
            .map_err(image::ImageError::IoError)?
            .with_guessed_format()
            .map_err(image::ImageError::IoError)?
            .decode()?
            .to_luma8();
        Self::from_image(&img, resolution, origin)
    }

    pub fn save_pgm(&self, path: &Path) -> Result<(), GridError> {
        self.to_image().save_with_format(path, image::ImageFormat::Pnm)?;
        Ok(())
    }

    pub fn cell(&self, p: Vec2) -> Option<(usize, usize)> {
        let c = (p - self.origin) / self.resolution;
        let (i, j) = (c.x.floor(), c.y.floor());
        if i < 0.0 || j < 0.0 || i >= self.width as f64 || j >= self.height as f64 {
            None
        } else {
            Some((i as usize, j as usize))
        }
    }

    /// Points outside the grid count as navigable.
    pub fn is_navigable(&self, p: Vec2) -> bool {
        self.cell(p).is_none_or(|(i, j)| self.navigable[j * self.width + i])
    }

    /// Marks every cell whose center lies in the axis-aligned rectangle.
    pub fn block_rect(&mut self, min: Vec2, max: Vec2) {
        for j in 0..self.height {
            for i in 0..self.width {
                let c = self.origin + Vec2::new(i as f64 + 0.5, j as f64 + 0.5) * self.resolution;
                if c.x >= min.x && c.x <= max.x && c.y >= min.y && c.y <= max.y {
                    self.navigable[j * self.width + i] = false;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellState {
    Free,
    Inflated,
    Lethal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostmapConfig {
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// Half footprint plus clearance [m].
    pub inflation_radius: f64,
}

impl Default for CostmapConfig {
    fn default() -> Self {
        Self {
            resolution: 0.1,
            width: 200,
            height: 200,
            inflation_radius: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Costmap {
    pub config: CostmapConfig,
    /// World position of the lower-left corner of cell (0, 0).
    pub origin: Vec2,
    cells: Vec<CellState>,
    /// Squared distance to the nearest lethal cell center, in cells.
    dist2: Vec<f64>,
}

/// One-dimensional squared distance transform of sampled function `f`
/// (lower envelope of parabolas). Infinite samples are skipped.
fn dt1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0f64; n + 1];
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            let p = v[k as usize];
            let pf = p as f64;
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            if s <= z[k as usize] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k as usize] = q;
            z[k as usize] = s;
            z[k as usize + 1] = f64::INFINITY;
            break;
        }
    }
    if k < 0 {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut j = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[j + 1] < qf {
            j += 1;
        }
        let p = v[j] as f64;
        *o = (qf - p) * (qf - p) + f[v[j]];
    }
}

/// Exact squared Euclidean distance transform of a binary grid (row-major,
/// `width` columns), in cell units.
pub fn squared_distance_transform(sites: &[bool], width: usize, height: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = sites.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let mut col = vec![0.0; height];
    let mut col_out = vec![0.0; height];
    for i in 0..width {
        for j in 0..height {
            col[j] = grid[j * width + i];
        }
        dt1d(&col, &mut col_out);
        for j in 0..height {
            grid[j * width + i] = col_out[j];
        }
    }
    let mut row_out = vec![0.0; width];
    for j in 0..height {
        let row = &grid[j * width..(j + 1) * width];
        dt1d(row, &mut row_out);
        grid[j * width..(j + 1) * width].copy_from_slice(&row_out);
    }
    grid
}

impl Costmap {
    pub fn new(config: CostmapConfig) -> Self {
        let n = config.width * config.height;
        Self {
            config,
            origin: Vec2::zeros(),
            cells: vec![CellState::Free; n],
            dist2: vec![f64::INFINITY; n],
        }
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn height(&self) -> usize {
        self.config.height
    }

    pub fn resolution(&self) -> f64 {
        self.config.resolution
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new(i as f64 + 0.5, j as f64 + 0.5) * self.config.resolution
    }

    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let c = (p - self.origin) / self.config.resolution;
        let (i, j) = (c.x.floor(), c.y.floor());
        if i < 0.0 || j < 0.0 || i >= self.config.width as f64 || j >= self.config.height as f64 {
            None
        } else {
            Some((i as usize, j as usize))
        }
    }

    pub fn state(&self, i: usize, j: usize) -> CellState {
        self.cells[j * self.config.width + i]
    }

    /// State at a world point; outside the window counts as free.
    pub fn state_at(&self, p: Vec2) -> CellState {
        self.cell_of(p).map_or(CellState::Free, |(i, j)| self.state(i, j))
    }

    /// Distance from the cell containing `p` to the nearest lethal cell
    /// center [m]; infinite outside the window or with no lethal cells.
    pub fn clearance_at(&self, p: Vec2) -> f64 {
        self.cell_of(p).map_or(f64::INFINITY, |(i, j)| {
            self.dist2[j * self.config.width + i].sqrt() * self.config.resolution
        })
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == state).count()
    }

    /// Recenters on `robot`, rebuilds lethal cells from the base layer and
    /// the scan points, then inflates.
    pub fn update(&mut self, points: &[Vec2], base: Option<&NavGrid>, robot: &Pose2) {
        let res = self.config.resolution;
        let (w, h) = (self.config.width, self.config.height);
        self.origin = Vec2::new(
            ((robot.x / res).floor() - (w / 2) as f64) * res,
            ((robot.y / res).floor() - (h / 2) as f64) * res,
        );
        let mut lethal = vec![false; w * h];
        if let Some(nav) = base {
            for j in 0..h {
                for i in 0..w {
                    if !nav.is_navigable(self.cell_center(i, j)) {
                        lethal[j * w + i] = true;
                    }
                }
            }
        }
        for p in points {
            if let Some((i, j)) = self.cell_of(*p) {
                lethal[j * w + i] = true;
            }
        }
        self.dist2 = squared_distance_transform(&lethal, w, h);
        let r_cells2 = (self.config.inflation_radius / res).powi(2) + 1e-9;
        for (k, cell) in self.cells.iter_mut().enumerate() {
            *cell = if lethal[k] {
                CellState::Lethal
            } else if self.dist2[k] <= r_cells2 {
                CellState::Inflated
            } else {
                CellState::Free
            };
        }
    }

    /// Whether a lethal cell center lies inside the square footprint of
    /// half-size `half` at `pose`.
    pub fn footprint_hits_lethal(&self, pose: &Pose2, half: f64) -> bool {
        let res = self.config.resolution;
        let reach = half * std::f64::consts::SQRT_2;
        let span = |c: f64, o: f64, n: usize| {
            let lo = ((c - reach - o) / res).floor().max(0.0) as i64;
            let hi = ((c + reach - o) / res).floor().min(n as f64 - 1.0) as i64;
            lo..=hi
        };
        for j in span(pose.y, self.origin.y, self.config.height) {
            for i in span(pose.x, self.origin.x, self.config.width) {
                let (i, j) = (i as usize, j as usize);
                if self.state(i, j) != CellState::Lethal {
                    continue;
                }
                let local = pose.to_local(self.cell_center(i, j));
                if local.x.abs() <= half && local.y.abs() <= half {
                    return true;
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_matches_brute_force() {
        let (w, h) = (13, 9);
        let mut sites = vec![false; w * h];
        for k in [5, 40, 77, 100] {
            sites[k] = true;
        }
        let d = squared_distance_transform(&sites, w, h);
        for j in 0..h {
            for i in 0..w {
                let brute = sites
                    .iter()
                    .enumerate()
                    .filter(|(_, &s)| s)
                    .map(|(k, _)| {
                        let (si, sj) = ((k % w) as f64, (k / w) as f64);
                        (i as f64 - si).powi(2) + (j as f64 - sj).powi(2)
                    })
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(d[j * w + i], brute);
            }
        }
    }

    #[test]
    fn empty_transform_is_infinite() {
        assert!(squared_distance_transform(&[false; 6], 3, 2).iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn empty_inputs_leave_map_free() {
        let mut cm = Costmap::new(CostmapConfig::default());
        let nav = NavGrid::all_navigable(50, 50, 0.1, Vec2::new(-2.5, -2.5));
        cm.update(&[], Some(&nav), &Pose2::default());
        assert_eq!(cm.count(CellState::Free), 200 * 200);
    }

    #[test]
    fn single_point_inflates_disc() {
        let mut cm = Costmap::new(CostmapConfig::default());
        cm.update(&[Vec2::new(1.05, 0.05)], None, &Pose2::default());
        assert_eq!(cm.count(CellState::Lethal), 1);
        // Cells with centers within 5 cells: lattice points in a radius-5 disc, minus the center.
        let lattice = (-5i32..=5)
            .flat_map(|a| (-5i32..=5).map(move |b| (a, b)))
            .filter(|(a, b)| a * a + b * b <= 25)
            .count();
        assert_eq!(cm.count(CellState::Inflated), lattice - 1);
    }

    #[test]
    fn image_round_trip_keeps_orientation() {
        let mut nav = NavGrid::all_navigable(4, 3, 0.5, Vec2::new(0.0, 0.0));
        nav.navigable[0] = false;
        let back = NavGrid::from_image(&nav.to_image(), 0.5, Vec2::zeros()).unwrap();
        assert_eq!(back, nav);
        assert!(!back.is_navigable(Vec2::new(0.1, 0.1)));
        assert!(back.is_navigable(Vec2::new(0.1, 1.4)));
        assert!(back.is_navigable(Vec2::new(-5.0, 0.0)));
    }
}
