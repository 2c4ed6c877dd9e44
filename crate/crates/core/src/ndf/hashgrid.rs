//! Multiresolution hash-grid feature levels.

use rand::Rng;

/// Second prime of the spatial hash; the first is 1.
const HASH_PRIME: u64 = 2_654_435_761;

/// One resolution level: a fixed-size table of `T` feature vectors of
/// length `F`, addressed densely when the `(N+1)²` lattice fits and through
/// a spatial hash otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct HashGridLevel {
    pub level_index: usize,
    pub resolution: usize,
    features: usize,
    table_size: usize,
    table: Vec<f64>,
}

/// The four lattice corners surrounding a point at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corners {
    pub slots: [u32; 4],
    pub weights: [f64; 4],
}

impl HashGridLevel {
    pub fn new(level_index: usize, resolution: usize, table_size: usize, features: usize, rng: &mut impl Rng) -> Self {
        let table = (0..table_size * features)
            .map(|_| rng.random_range(-1e-4..1e-4))
            .collect();
        Self {
            level_index,
            resolution,
            features,
            table_size,
            table,
        }
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn table_size(&self) -> usize {
        self.table_size
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut [f64] {
        &mut self.table
    }

    /// True when every lattice corner gets its own slot.
    pub fn is_dense(&self) -> bool {
        let side = self.resolution + 1;
        side * side <= self.table_size
    }

    /// Table slot of lattice corner `(cx, cy)`.
    pub fn slot(&self, cx: usize, cy: usize) -> usize {
        if self.is_dense() {
            cy * (self.resolution + 1) + cx
        } else {
            let h = (cx as u64).wrapping_mul(1) ^ (cy as u64).wrapping_mul(HASH_PRIME);
            // Table sizes are powers of two.
            (h & (self.table_size as u64 - 1)) as usize
        }
    }

    /// Corners and bilinear weights for a normalized point, clamped to [0,1]².
    /// Order: (x0,y0), (x1,y0), (x0,y1), (x1,y1).
    pub fn corners(&self, x: [f64; 2]) -> Corners {
        let n = self.resolution;
        let cell = |t: f64| {
            let p = t.clamp(0.0, 1.0) * n as f64;
            let i = (p.floor() as usize).min(n - 1);
            (i, p - i as f64)
        };
        let (ix, fx) = cell(x[0]);
        let (iy, fy) = cell(x[1]);
        let slot = |cx, cy| self.slot(cx, cy) as u32;
        Corners {
            slots: [slot(ix, iy), slot(ix + 1, iy), slot(ix, iy + 1), slot(ix + 1, iy + 1)],
            weights: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
        }
    }

    /// Blend the corner features into `out` (length `F`).
    pub fn gather(&self, corners: &Corners, out: &mut [f64]) {
        out.fill(0.0);
        for (&s, &w) in corners.slots.iter().zip(&corners.weights) {
            let entry = &self.table[s as usize * self.features..(s as usize + 1) * self.features];
            for (o, e) in out.iter_mut().zip(entry) {
                *o += w * e;
            }
        }
    }
}

/// Scatter feature-space gradients back into a level's table gradient.
pub fn scatter(grad_table: &mut [f64], features: usize, corners: &Corners, grad_features: &[f64]) {
    for (&s, &w) in corners.slots.iter().zip(&corners.weights) {
        let entry = &mut grad_table[s as usize * features..(s as usize + 1) * features];
        for (e, g) in entry.iter_mut().zip(grad_features) {
            *e += w * g;
        }
    }
}

/// `round(linspace(coarse, fine, levels))`.
pub fn level_resolutions(levels: usize, coarse: usize, fine: usize) -> Vec<usize> {
    if levels == 1 {
        return vec![coarse];
    }
    (0..levels)
        .map(|l| (coarse as f64 + l as f64 * (fine as f64 - coarse as f64) / (levels - 1) as f64).round() as usize)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn level(resolution: usize, table_size: usize) -> HashGridLevel {
        HashGridLevel::new(0, resolution, table_size, 2, &mut ChaCha8Rng::seed_from_u64(3))
    }

    #[test]
    fn default_resolutions() {
        assert_eq!(level_resolutions(6, 32, 128), vec![32, 51, 70, 90, 109, 128]);
        assert_eq!(level_resolutions(2, 4, 8), vec![4, 8]);
    }

    #[test]
    fn dense_exactly_when_lattice_fits() {
        assert!(level(4, 64).is_dense());
        assert!(level(7, 64).is_dense());
        assert!(!level(8, 64).is_dense());
        let l = level(4, 64);
        assert_eq!(l.slot(2, 3), 3 * 5 + 2);
    }

    #[test]
    fn hash_is_pure_and_in_range() {
        let l = level(128, 1 << 12);
        assert!(!l.is_dense());
        for (cx, cy) in [(0, 0), (128, 128), (17, 99)] {
            assert_eq!(l.slot(cx, cy), l.slot(cx, cy));
            assert!(l.slot(cx, cy) < 1 << 12);
        }
        assert_eq!(l.slot(5, 0), 5);
        assert_eq!(l.slot(3, 1), (3 ^ 2_654_435_761) & ((1 << 12) - 1));
    }

    #[test]
    fn lattice_point_returns_table_entry() {
        let l = level(4, 64);
        let c = l.corners([0.5, 0.25]);
        assert_eq!(c.weights, [1.0, 0.0, 0.0, 0.0]);
        let mut out = [0.0; 2];
        l.gather(&c, &mut out);
        let s = l.slot(2, 1);
        assert_eq!(out, [l.table()[2 * s], l.table()[2 * s + 1]]);
        // Upper boundary stays inside the lattice.
        let edge = l.corners([1.0, 1.0]);
        assert_eq!(edge.weights, [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(edge.slots[3] as usize, l.slot(4, 4));
    }
}
