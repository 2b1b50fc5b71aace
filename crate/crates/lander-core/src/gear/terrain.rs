//! Heightfield terrain with bilinear interpolation.
//!
//! Grids come from three places: a flat constructor, a plain-text file
//! (rows of space-separated heights in meters, optional `# cell_size` /
//! `# origin` directives), or seeded generation that drops a flat block of
//! random height under each foot of the platform.

use rand::Rng;

use super::GearError;

#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    /// Row-major heights, `rows` along y, `cols` along x.
    heights: Vec<f64>,
    rows: usize,
    cols: usize,
    cell_size: f64,
    /// World coordinates of grid node (0, 0).
    origin: (f64, f64),
}

impl Terrain {
    pub fn new(
        heights: Vec<f64>,
        rows: usize,
        cols: usize,
        cell_size: f64,
        origin: (f64, f64),
    ) -> Result<Self, GearError> {
        if rows < 2 || cols < 2 || heights.len() != rows * cols {
            return Err(GearError::Terrain(format!(
                "grid shape mismatch: {}x{} with {} heights",
                rows,
                cols,
                heights.len()
            )));
        }
        if !(cell_size > 0.0) {
            return Err(GearError::Terrain(format!("bad cell size {cell_size}")));
        }
        if heights.iter().any(|h| !h.is_finite()) {
            return Err(GearError::Terrain("non-finite height in grid".into()));
        }
        Ok(Self {
            heights,
            rows,
            cols,
            cell_size,
            origin,
        })
    }

    /// Flat ground of the given half-extent centered on the origin.
    pub fn flat(half_extent: f64) -> Self {
        let cell = half_extent.max(0.1);
        Self::new(
            vec![0.0; 9],
            3,
            3,
            cell,
            (-cell, -cell),
        )
        .expect("flat grid is always valid")
    }

    /// Seeded uneven terrain: a flat square block of height uniform in
    /// `[0, max_step]` under each of the given foot positions, floor
    /// elsewhere.
    pub fn foot_blocks<R: Rng>(
        foot_xy: &[(f64, f64)],
        max_step: f64,
        block_half_size: f64,
        rng: &mut R,
    ) -> Self {
        let cell = 0.03;
        let extent = foot_xy
            .iter()
            .flat_map(|(x, y)| [x.abs(), y.abs()])
            .fold(0.3_f64, f64::max)
            + 0.3;
        let cols = (2.0 * extent / cell).ceil() as usize + 1;
        let rows = cols;
        let origin = (-extent, -extent);
        let mut heights = vec![0.0; rows * cols];
        for (fx, fy) in foot_xy {
            let h = rng.gen_range(0.0..=max_step);
            for r in 0..rows {
                for c in 0..cols {
                    let x = origin.0 + c as f64 * cell;
                    let y = origin.1 + r as f64 * cell;
                    if (x - fx).abs() <= block_half_size && (y - fy).abs() <= block_half_size {
                        heights[r * cols + c] = h;
                    }
                }
            }
        }
        Self::new(heights, rows, cols, cell, origin).expect("generated grid is valid")
    }

    /// Single block of the given height under one foot; used by tests.
    pub fn single_block(foot_xy: (f64, f64), height: f64, block_half_size: f64) -> Self {
        let cell = 0.03;
        let extent = foot_xy.0.abs().max(foot_xy.1.abs()).max(0.3) + 0.3;
        let cols = (2.0 * extent / cell).ceil() as usize + 1;
        let origin = (-extent, -extent);
        let mut heights = vec![0.0; cols * cols];
        for r in 0..cols {
            for c in 0..cols {
                let x = origin.0 + c as f64 * cell;
                let y = origin.1 + r as f64 * cell;
                if (x - foot_xy.0).abs() <= block_half_size
                    && (y - foot_xy.1).abs() <= block_half_size
                {
                    heights[r * cols + c] = height;
                }
            }
        }
        Self::new(heights, cols, cols, cell, origin).expect("generated grid is valid")
    }

    /// Parse the plain-text grid format. Lines starting with `#` may carry
    /// `# cell_size <m>` or `# origin <x> <y>`; all other lines are rows of
    /// space-separated heights in meters.
    pub fn from_text(text: &str) -> Result<Self, GearError> {
        let mut cell_size = 0.1;
        let mut origin: Option<(f64, f64)> = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                match parts.next() {
                    Some("cell_size") => {
                        cell_size = parts
                            .next()
                            .and_then(|v| v.parse().ok())
                            .ok_or_else(|| {
                                GearError::Terrain(format!("line {}: bad cell_size", lineno + 1))
                            })?;
                    }
                    Some("origin") => {
                        let x = parts.next().and_then(|v| v.parse().ok());
                        let y = parts.next().and_then(|v| v.parse().ok());
                        match (x, y) {
                            (Some(x), Some(y)) => origin = Some((x, y)),
                            _ => {
                                return Err(GearError::Terrain(format!(
                                    "line {}: bad origin",
                                    lineno + 1
                                )))
                            }
                        }
                    }
                    _ => {} // plain comment
                }
                continue;
            }
            let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            let row = row.map_err(|e| {
                GearError::Terrain(format!("line {}: {}", lineno + 1, e))
            })?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(GearError::Terrain(format!(
                        "line {}: ragged row ({} values, expected {})",
                        lineno + 1,
                        row.len(),
                        first.len()
                    )));
                }
            }
            rows.push(row);
        }
        if rows.len() < 2 || rows[0].len() < 2 {
            return Err(GearError::Terrain("grid needs at least 2x2 values".into()));
        }
        let nrows = rows.len();
        let ncols = rows[0].len();
        let origin = origin.unwrap_or((
            -0.5 * (ncols - 1) as f64 * cell_size,
            -0.5 * (nrows - 1) as f64 * cell_size,
        ));
        Self::new(rows.concat(), nrows, ncols, cell_size, origin)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, GearError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GearError::Terrain(format!("{}: {}", path.display(), e)))?;
        Self::from_text(&text)
    }

    pub fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        (
            self.origin,
            (
                self.origin.0 + (self.cols - 1) as f64 * self.cell_size,
                self.origin.1 + (self.rows - 1) as f64 * self.cell_size,
            ),
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (lo, hi) = self.bounds();
        x >= lo.0 && x <= hi.0 && y >= lo.1 && y <= hi.1
    }

    /// Bilinearly interpolated height. Coordinates are clamped to the grid,
    /// so queries just outside the bounds read the edge value.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let fx = ((x - self.origin.0) / self.cell_size).clamp(0.0, (self.cols - 1) as f64);
        let fy = ((y - self.origin.1) / self.cell_size).clamp(0.0, (self.rows - 1) as f64);
        let c0 = (fx.floor() as usize).min(self.cols - 2);
        let r0 = (fy.floor() as usize).min(self.rows - 2);
        let tx = fx - c0 as f64;
        let ty = fy - r0 as f64;
        let h = |r: usize, c: usize| self.heights[r * self.cols + c];
        let top = h(r0, c0) * (1.0 - tx) + h(r0, c0 + 1) * tx;
        let bot = h(r0 + 1, c0) * (1.0 - tx) + h(r0 + 1, c0 + 1) * tx;
        top * (1.0 - ty) + bot * ty
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flat_is_zero_everywhere() {
        let t = Terrain::flat(1.0);
        assert_eq!(t.height_at(0.0, 0.0), 0.0);
        assert_eq!(t.height_at(0.7, -0.3), 0.0);
    }

    #[test]
    fn bilinear_interpolates_midpoints() {
        let t = Terrain::new(
            vec![0.0, 0.0, 0.1, 0.1],
            2,
            2,
            1.0,
            (0.0, 0.0),
        )
        .unwrap();
        assert!((t.height_at(0.5, 0.5) - 0.05).abs() < 1e-12);
        assert!((t.height_at(0.25, 0.0) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn text_roundtrip_with_directives() {
        let text = "# cell_size 0.5\n# origin -0.5 -0.5\n0 0 0\n0 0.2 0\n0 0 0\n";
        let t = Terrain::from_text(text).unwrap();
        assert!((t.height_at(0.0, 0.0) - 0.2).abs() < 1e-12);
        assert_eq!(t.height_at(-0.5, -0.5), 0.0);
    }

    #[test]
    fn text_rejects_ragged_rows() {
        assert!(Terrain::from_text("0 0 0\n0 0\n").is_err());
    }

    #[test]
    fn text_rejects_garbage() {
        assert!(Terrain::from_text("0 zero 0\n0 0 0\n").is_err());
    }

    #[test]
    fn foot_blocks_is_seed_deterministic() {
        let feet = [(0.3, 0.3), (0.3, -0.3), (-0.3, -0.3), (-0.3, 0.3)];
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let ta = Terrain::foot_blocks(&feet, 0.08, 0.08, &mut a);
        let tb = Terrain::foot_blocks(&feet, 0.08, 0.08, &mut b);
        assert_eq!(ta, tb);
        for (x, y) in feet {
            let h = ta.height_at(x, y);
            assert!((0.0..=0.08).contains(&h));
        }
    }
}
