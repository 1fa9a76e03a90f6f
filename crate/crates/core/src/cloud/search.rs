//! Uniform-bin spatial index for radius and k-nearest queries.
//!
//! Queries return id-sorted results so that repeated calls with identical
//! inputs are identical, and the accelerated path matches a brute-force
//! distance scan exactly.

use nalgebra::Point3;

use super::NodeCloud;

#[derive(Debug, Clone)]
pub struct SearchGrid {
    coords: Vec<Point3<f64>>,
    min: Point3<f64>,
    inv_bin: f64,
    dims: [usize; 3],
    bins: Vec<Vec<u32>>,
    diameter: f64,
    /// Distance from each node to its nearest distinct neighbour.
    nn_dist: Vec<f64>,
}

impl SearchGrid {
    pub fn new(cloud: &NodeCloud) -> Self {
        let coords: Vec<Point3<f64>> = cloud.coords().to_vec();
        let mut min = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut max = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &coords {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        if coords.is_empty() {
            min = Point3::origin();
            max = Point3::origin();
        }
        let extent = max - min;
        let diameter = extent.norm();
        let volume = (extent.x.max(1e-300)) * (extent.y.max(1e-300)) * (extent.z.max(1e-300));
        // Aim for a handful of nodes per bin; degenerate extents collapse to
        // a single bin along that axis.
        let target = (volume / coords.len().max(1) as f64).cbrt() * 1.5;
        let bin = if target.is_finite() && target > 0.0 {
            target
        } else {
            1.0
        };
        let mut dims = [1usize; 3];
        for a in 0..3 {
            dims[a] = ((extent[a] / bin).ceil() as usize).clamp(1, 128);
        }
        let mut grid = Self {
            coords,
            min,
            inv_bin: 0.0,
            dims,
            bins: vec![Vec::new(); dims[0] * dims[1] * dims[2]],
            diameter,
            nn_dist: Vec::new(),
        };
        // One shared bin size keeps the index cubic-ish; the per-axis clamp
        // above only limits memory.
        grid.inv_bin = 1.0 / bin;
        for (id, p) in grid.coords.iter().enumerate() {
            let b = grid.bin_of(p);
            grid.bins[b].push(id as u32);
        }
        grid.nn_dist = (0..grid.coords.len())
            .map(|i| grid.mean_knn_distance(&grid.coords[i], 1))
            .collect();
        grid
    }

    /// Distance from node `i` to its nearest distinct neighbour.
    pub fn node_spacing(&self, i: usize) -> f64 {
        self.nn_dist[i]
    }

    /// Characteristic node spacing around a query point: the mean
    /// nearest-neighbour distance of the 4 nodes closest to `x`. A smooth
    /// function of position on graded clouds and exactly the lattice spacing
    /// on a regular grid.
    pub fn local_spacing(&self, x: &Point3<f64>) -> f64 {
        let mut r = 1.0 / self.inv_bin;
        loop {
            let ids = self.within(x, r);
            if ids.len() >= 4 || r > 2.0 * self.diameter.max(1.0 / self.inv_bin) {
                if ids.is_empty() {
                    return 0.0;
                }
                let mut by_dist: Vec<(f64, usize)> = ids
                    .iter()
                    .map(|&id| ((self.coords[id] - x).norm(), id))
                    .collect();
                by_dist.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let k = by_dist.len().min(4);
                return by_dist[..k].iter().map(|&(_, id)| self.nn_dist[id]).sum::<f64>()
                    / k as f64;
            }
            r *= 1.6;
        }
    }

    fn bin_index(&self, p: &Point3<f64>) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let raw = ((p[a] - self.min[a]) * self.inv_bin).floor();
            idx[a] = (raw.max(0.0) as usize).min(self.dims[a] - 1);
        }
        idx
    }

    fn bin_of(&self, p: &Point3<f64>) -> usize {
        let [i, j, k] = self.bin_index(p);
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    /// Bounding-box diagonal of the indexed cloud.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// All node ids within distance `r` of `x` (inclusive), ascending.
    pub fn within(&self, x: &Point3<f64>, r: f64) -> Vec<usize> {
        let r2 = r * r;
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let lo_raw = ((x[a] - r - self.min[a]) * self.inv_bin).floor();
            let hi_raw = ((x[a] + r - self.min[a]) * self.inv_bin).floor();
            lo[a] = (lo_raw.max(0.0) as usize).min(self.dims[a] - 1);
            hi[a] = (hi_raw.max(0.0) as usize).min(self.dims[a] - 1);
        }
        let mut out = Vec::new();
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let bin = &self.bins[(k * self.dims[1] + j) * self.dims[0] + i];
                    for &id in bin {
                        let d2 = (self.coords[id as usize] - x).norm_squared();
                        if d2 <= r2 {
                            out.push(id as usize);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Mean distance from `x` to its `k` nearest nodes, excluding exact
    /// coincidences (so a query at a node measures the spacing to its
    /// neighbours). Returns 0.0 only for degenerate clouds.
    pub fn mean_knn_distance(&self, x: &Point3<f64>, k: usize) -> f64 {
        let mut r = 1.0 / self.inv_bin;
        loop {
            let ids = self.within(x, r);
            let mut dists: Vec<f64> = ids
                .iter()
                .map(|&id| (self.coords[id] - x).norm())
                .filter(|&d| d > 0.0)
                .collect();
            if dists.len() >= k {
                dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
                return dists[..k].iter().sum::<f64>() / k as f64;
            }
            if r > 2.0 * self.diameter.max(1.0 / self.inv_bin) {
                if dists.is_empty() {
                    return 0.0;
                }
                dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let n = dists.len().min(k);
                return dists[..n].iter().sum::<f64>() / n as f64;
            }
            r *= 1.6;
        }
    }

    /// Distance to the nearest distinct node.
    pub fn nearest_distance(&self, x: &Point3<f64>) -> f64 {
        self.mean_knn_distance(x, 1)
    }
}
