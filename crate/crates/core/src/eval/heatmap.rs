use crate::dataio::Point;
use crate::error::{Error, Result};
use crate::model::ForecastSet;

/// Placement of a heatmap in world coordinates. Cell `(row, col)` covers
/// `origin + [col, row] * cell_size` up to the next cell, as in scene grids.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatmapGeometry {
    pub height: usize,
    pub width: usize,
    pub cell_size: f64,
    pub origin: Point,
}

impl HeatmapGeometry {
    /// A `size × size` grid centred on `center`.
    pub fn centered(center: Point, size: usize, cell_size: f64) -> Self {
        let half = size as f64 * cell_size / 2.0;
        HeatmapGeometry {
            height: size,
            width: size,
            cell_size,
            origin: [center[0] - half, center[1] - half],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config(format!("heatmap of {}x{} cells", self.height, self.width)));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) || !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("heatmap cell size must be positive and origin finite".into()));
        }
        Ok(())
    }

    /// Cell holding `p`; points outside are clamped to the border so no
    /// count is lost.
    pub fn cell_of(&self, p: Point) -> (usize, usize) {
        let f = |v: f64, o: f64, n: usize| {
            let c = ((v - o) / self.cell_size).floor();
            if c.is_nan() || c < 0.0 {
                0
            } else {
                (c as usize).min(n - 1)
            }
        };
        (f(p[1], self.origin[1], self.height), f(p[0], self.origin[0], self.width))
    }
}

/// Counts of predicted points per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapGrid {
    pub geometry: HeatmapGeometry,
    /// Row-major, `height * width`.
    pub counts: Vec<u64>,
}

impl HeatmapGrid {
    pub fn from_points<'a>(geometry: HeatmapGeometry, points: impl IntoIterator<Item = &'a Point>) -> Result<Self> {
        geometry.validate()?;
        let mut counts = vec![0; geometry.height * geometry.width];
        for &p in points {
            let (r, c) = geometry.cell_of(p);
            counts[r * geometry.width + c] += 1;
        }
        Ok(HeatmapGrid { geometry, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn at(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.geometry.width + col]
    }

    /// Counts divided by the total; all zeros for an empty map.
    pub fn density(&self) -> Vec<f64> {
        let t = self.total();
        self.counts
            .iter()
            .map(|&c| if t == 0 { 0.0 } else { c as f64 / t as f64 })
            .collect()
    }

    /// A geometry comment line followed by one line of counts per row,
    /// top row (largest `y`) first.
    pub fn to_ascii(&self) -> String {
        let g = &self.geometry;
        let mut out = format!(
            "# heatmap height={} width={} cell_size={} origin_x={} origin_y={} total={}\n",
            g.height,
            g.width,
            g.cell_size,
            g.origin[0],
            g.origin[1],
            self.total()
        );
        for r in (0..g.height).rev() {
            let row: Vec<String> = (0..g.width).map(|c| self.at(r, c).to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Bins every world-frame point of every sample in `forecasts`.
pub fn heatmap(forecasts: &ForecastSet, geometry: HeatmapGeometry) -> Result<HeatmapGrid> {
    if forecasts.k() == 0 {
        return Err(Error::Config("heatmap of zero samples".into()));
    }
    let world = forecasts.world_samples();
    HeatmapGrid::from_points(geometry, world.iter().flatten())
}
