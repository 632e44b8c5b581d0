use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Value used for cells outside a scene grid.
pub const OUT_OF_BOUNDS: f64 = 1.0;

/// Rasterized static scene. Channel 0 is obstacle probability. Cell
/// `(row, col)` covers world `[ox + col·cs, ox + (col+1)·cs) ×
/// [oy + row·cs, oy + (row+1)·cs)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGrid {
    pub scene_id: String,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub cell_size: f64,
    pub origin: [f64; 2],
    /// `channels × height × width`, row-major.
    pub data: Vec<f64>,
}

impl SceneGrid {
    pub fn new(
        scene_id: impl Into<String>,
        height: usize,
        width: usize,
        channels: usize,
        cell_size: f64,
        origin: [f64; 2],
        data: Vec<f64>,
    ) -> Result<Self> {
        let g = SceneGrid {
            scene_id: scene_id.into(),
            height,
            width,
            channels,
            cell_size,
            origin,
            data,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn empty(scene_id: impl Into<String>, height: usize, width: usize, cell_size: f64, origin: [f64; 2]) -> Result<Self> {
        SceneGrid::new(scene_id, height, width, 1, cell_size, origin, vec![0.0; height * width])
    }

    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::Data(format!(
                "degenerate grid {}x{}x{}",
                self.channels, self.height, self.width
            )));
        }
        if !(self.cell_size > 0.0) || !self.cell_size.is_finite() {
            return Err(Error::Data(format!("cell size must be positive, got {}", self.cell_size)));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::Data("grid origin must be finite".into()));
        }
        let n = self.channels * self.height * self.width;
        if self.data.len() != n {
            return Err(Error::Data(format!(
                "grid needs {n} values, has {}",
                self.data.len()
            )));
        }
        if let Some(v) = self.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("grid value {v} outside [0, 1]")));
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, channel: usize, row: isize, col: isize) -> f64 {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            OUT_OF_BOUNDS
        } else {
            self.data[(channel * self.height + row as usize) * self.width + col as usize]
        }
    }

    pub fn set(&mut self, channel: usize, row: usize, col: usize, v: f64) {
        self.data[(channel * self.height + row) * self.width + col] = v;
    }

    /// Cell containing a world point (may be out of range).
    pub fn cell_of(&self, p: [f64; 2]) -> (isize, isize) {
        let col = ((p[0] - self.origin[0]) / self.cell_size).floor() as isize;
        let row = ((p[1] - self.origin[1]) / self.cell_size).floor() as isize;
        (row, col)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} {} {} {} {} {}\n",
            self.height, self.width, self.channels, self.cell_size, self.origin[0], self.origin[1]
        );
        for row in self.data.chunks_exact(self.width) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    /// Parses the grid text format: a header `H W C cell_size origin_x
    /// origin_y` followed by `C·H·W` reals in row-major order.
    pub fn parse(text: &str, scene_id: &str, origin: &Path) -> Result<Self> {
        let mut tokens = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| {
                l.split('#')
                    .next()
                    .unwrap_or("")
                    .split_whitespace()
                    .map(move |t| (i + 1, t))
            });
        let perr = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut header = Vec::with_capacity(6);
        for _ in 0..6 {
            let (line, t) = tokens
                .next()
                .ok_or_else(|| perr(1, "truncated grid header".into()))?;
            header.push((line, t));
        }
        let dim = |k: usize| -> Result<usize> {
            header[k]
                .1
                .parse::<usize>()
                .map_err(|_| perr(header[k].0, format!("bad grid extent `{}`", header[k].1)))
        };
        let real = |k: usize| -> Result<f64> {
            header[k]
                .1
                .parse::<f64>()
                .map_err(|_| perr(header[k].0, format!("bad grid header value `{}`", header[k].1)))
        };
        let (h, w, c) = (dim(0)?, dim(1)?, dim(2)?);
        let cs = real(3)?;
        let o = [real(4)?, real(5)?];
        let n = h.saturating_mul(w).saturating_mul(c);
        let mut data = Vec::with_capacity(n.min(1 << 24));
        for (line, t) in tokens {
            let v: f64 = t
                .parse()
                .map_err(|_| perr(line, format!("bad grid value `{t}`")))?;
            data.push(v);
        }
        SceneGrid::new(scene_id, h, w, c, cs, o, data)
    }

    pub fn load(path: &Path, scene_id: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SceneGrid::parse(&text, scene_id, path)
    }
}

/// Fixed-size `C×out_h×out_w` crop centred on a world point. Cells outside
/// the grid read as [`OUT_OF_BOUNDS`].
pub fn crop_scene(grid: &SceneGrid, center: [f64; 2], out_h: usize, out_w: usize) -> Result<Tensor> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Data("crop size must be positive".into()));
    }
    if !center.iter().all(|v| v.is_finite()) {
        return Err(Error::Data("crop centre must be finite".into()));
    }
    let fx = (center[0] - grid.origin[0]) / grid.cell_size;
    let fy = (center[1] - grid.origin[1]) / grid.cell_size;
    let col0 = (fx - out_w as f64 / 2.0 + 0.5).floor() as isize;
    let row0 = (fy - out_h as f64 / 2.0 + 0.5).floor() as isize;
    let mut data = Vec::with_capacity(grid.channels * out_h * out_w);
    for c in 0..grid.channels {
        for r in 0..out_h {
            for q in 0..out_w {
                data.push(grid.at(c, row0 + r as isize, col0 + q as isize));
            }
        }
    }
    Tensor::new(vec![grid.channels, out_h, out_w], data)
}

/// Central `out_h×out_w` window of a `C×H×W` tensor.
pub fn center_crop(t: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let [c, h, w] = t.shape() else {
        return Err(Error::shape("center_crop", "C×H×W", format!("{:?}", t.shape())));
    };
    let (c, h, w) = (*c, *h, *w);
    if out_h > h || out_w > w {
        return Err(Error::shape("center_crop", format!("≤ {h}x{w}"), format!("{out_h}x{out_w}")));
    }
    let (r0, q0) = ((h - out_h) / 2, (w - out_w) / 2);
    let mut data = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        for r in 0..out_h {
            let base = (ch * h + r0 + r) * w + q0;
            data.extend_from_slice(&t.data()[base..base + out_w]);
        }
    }
    Tensor::new(vec![c, out_h, out_w], data)
}

/// Nearest-neighbour rotation of a `C×H×W` crop about its centre by
/// `angle` radians (counter-clockwise in world axes). Cells whose source
/// falls outside the crop read as [`OUT_OF_BOUNDS`].
pub fn rotate_crop(t: &Tensor, angle: f64) -> Result<Tensor> {
    let [c, h, w] = t.shape() else {
        return Err(Error::shape("rotate_crop", "C×H×W", format!("{:?}", t.shape())));
    };
    let (c, h, w) = (*c, *h, *w);
    if angle == 0.0 {
        return Ok(t.clone());
    }
    let (sin, cos) = angle.sin_cos();
    let (hh, hw) = (h as f64 / 2.0, w as f64 / 2.0);
    let mut data = Vec::with_capacity(t.len());
    for ch in 0..c {
        for r in 0..h {
            for q in 0..w {
                let dx = q as f64 + 0.5 - hw;
                let dy = r as f64 + 0.5 - hh;
                // inverse rotation maps the output cell back to its source
                let sx = cos * dx + sin * dy;
                let sy = -sin * dx + cos * dy;
                let sq = (sx + hw).floor() as isize;
                let sr = (sy + hh).floor() as isize;
                let v = if sr < 0 || sq < 0 || sr as usize >= h || sq as usize >= w {
                    OUT_OF_BOUNDS
                } else {
                    t.data()[(ch * h + sr as usize) * w + sq as usize]
                };
                data.push(v);
            }
        }
    }
    Tensor::new(vec![c, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> SceneGrid {
        let data = (0..h * w).map(|i| i as f64 / (h * w) as f64).collect();
        SceneGrid::new("t", h, w, 1, 1.0, [0.0, 0.0], data).unwrap()
    }

    #[test]
    fn centred_crop_is_exact_sub_block() {
        let g = ramp(8, 8);
        let c = crop_scene(&g, [4.0, 4.0], 4, 4).unwrap();
        for r in 0..4 {
            for q in 0..4 {
                assert_eq!(c.data()[r * 4 + q], g.data[(r + 2) * 8 + q + 2]);
            }
        }
    }

    #[test]
    fn crop_outside_grid_is_all_ones() {
        let g = ramp(8, 8);
        let c = crop_scene(&g, [100.0, -50.0], 3, 5).unwrap();
        assert!(c.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn crop_near_edge_matches_index_oracle() {
        let g = SceneGrid::new(
            "t",
            6,
            10,
            2,
            0.5,
            [-1.0, 2.0],
            (0..120).map(|i| (i % 7) as f64 / 7.0).collect(),
        )
        .unwrap();
        let center = [-0.6, 2.3];
        let (oh, ow) = (4, 6);
        let c = crop_scene(&g, center, oh, ow).unwrap();
        for ch in 0..2 {
            for r in 0..oh {
                for q in 0..ow {
                    // world centre of the crop cell, then the grid cell it falls in
                    let x = center[0] + (q as f64 + 0.5 - ow as f64 / 2.0) * 0.5;
                    let y = center[1] + (r as f64 + 0.5 - oh as f64 / 2.0) * 0.5;
                    let gc = ((x + 1.0) / 0.5).floor() as isize;
                    let gr = ((y - 2.0) / 0.5).floor() as isize;
                    let expect = if gr < 0 || gc < 0 || gr >= 6 || gc >= 10 {
                        1.0
                    } else {
                        g.data[(ch * 6 + gr as usize) * 10 + gc as usize]
                    };
                    assert_eq!(c.data()[(ch * oh + r) * ow + q], expect, "ch{ch} r{r} q{q}");
                }
            }
        }
        assert!(c.data().contains(&1.0));
    }

    #[test]
    fn text_round_trip_and_errors() {
        let g = ramp(3, 4);
        let back = SceneGrid::parse(&g.to_text(), "t", Path::new("m")).unwrap();
        assert_eq!(back, g);
        assert!(SceneGrid::parse("2 2 1 0.5 0 0\n0 0 0", "t", Path::new("m")).is_err());
        assert!(SceneGrid::parse("2 2 1 0 0 0\n0 0 0 0", "t", Path::new("m")).is_err());
        assert!(SceneGrid::parse("2 2 1 1 0 0\n0 0 0 2", "t", Path::new("m")).is_err());
    }

    #[test]
    fn quarter_turn_permutes_cells() {
        let t = Tensor::new(vec![1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        // counter-clockwise in (x=col, y=row) axes: (col1,row0) → (col1,row1)
        let r = rotate_crop(&t, std::f64::consts::FRAC_PI_2).unwrap();
        assert_eq!(r.data(), &[0.3, 0.1, 0.4, 0.2]);
        let back = rotate_crop(&r, -std::f64::consts::FRAC_PI_2).unwrap();
        assert_eq!(back, t);
        assert_eq!(rotate_crop(&t, 0.0).unwrap(), t);
    }

    #[test]
    fn center_crop_takes_middle() {
        let t = Tensor::new(vec![1, 4, 4], (0..16).map(|v| v as f64).collect()).unwrap();
        let c = center_crop(&t, 2, 2).unwrap();
        assert_eq!(c.data(), &[5.0, 6.0, 9.0, 10.0]);
    }
}
