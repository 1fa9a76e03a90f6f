//! Node clouds, tetrahedral background integration grids, Gauss points, and
//! radius-based support queries with adaptive sizing.

mod generate;
mod io;
mod search;

pub use generate::{generate_cube_grid, generate_cylinder_grid};
pub use io::{load_grid, load_node_set, save_grid, save_node_set};
pub use search::SearchGrid;

use std::collections::BTreeMap;

use nalgebra::Point3;

use crate::{Error, Result};

/// Scattered nodes of the reference configuration plus named node sets used
/// to attach boundary conditions.
#[derive(Debug, Clone)]
pub struct NodeCloud {
    coords: Vec<Point3<f64>>,
    sets: BTreeMap<String, Vec<usize>>,
}

impl NodeCloud {
    pub fn new(coords: Vec<Point3<f64>>) -> Result<Self> {
        for (i, p) in coords.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::Data(format!("node {i} has a non-finite coordinate")));
            }
        }
        Ok(Self {
            coords,
            sets: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coord(&self, id: usize) -> &Point3<f64> {
        &self.coords[id]
    }

    pub fn coords(&self) -> &[Point3<f64>] {
        &self.coords
    }

    /// Registers a named node set. Ids are sorted and deduplicated.
    pub fn add_set(&mut self, name: impl Into<String>, mut ids: Vec<usize>) -> Result<()> {
        ids.sort_unstable();
        ids.dedup();
        if let Some(&bad) = ids.iter().find(|&&id| id >= self.coords.len()) {
            return Err(Error::Data(format!(
                "node set references node {bad}, but the cloud has {} nodes",
                self.coords.len()
            )));
        }
        self.sets.insert(name.into(), ids);
        Ok(())
    }

    pub fn set(&self, name: &str) -> Option<&[usize]> {
        self.sets.get(name).map(Vec::as_slice)
    }

    pub fn sets(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.sets.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Tetrahedral background grid carrying the volumetric quadrature. Cell
/// vertices may coincide with cloud nodes (generated shapes do) but the data
/// model does not require it.
#[derive(Debug, Clone)]
pub struct IntegrationGrid {
    vertices: Vec<Point3<f64>>,
    cells: Vec<[usize; 4]>,
    regions: Vec<u32>,
}

/// Volume below which a tetrahedron is treated as degenerate (m^3).
pub const DEGENERATE_VOLUME: f64 = 1e-18;

fn signed_volume(v: &[Point3<f64>], cell: &[usize; 4]) -> f64 {
    let a = v[cell[0]];
    let e1 = v[cell[1]] - a;
    let e2 = v[cell[2]] - a;
    let e3 = v[cell[3]] - a;
    e1.cross(&e2).dot(&e3) / 6.0
}

impl IntegrationGrid {
    /// Builds a grid, repairing negative cell orientations by swapping the
    /// last two vertices. Degenerate cells are rejected.
    pub fn new(
        vertices: Vec<Point3<f64>>,
        mut cells: Vec<[usize; 4]>,
        regions: Vec<u32>,
    ) -> Result<Self> {
        if regions.len() != cells.len() {
            return Err(Error::Data(format!(
                "{} cells but {} region ids",
                cells.len(),
                regions.len()
            )));
        }
        for (i, p) in vertices.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::Data(format!(
                    "cell vertex {i} has a non-finite coordinate"
                )));
            }
        }
        for (i, cell) in cells.iter_mut().enumerate() {
            if let Some(&bad) = cell.iter().find(|&&id| id >= vertices.len()) {
                return Err(Error::Data(format!(
                    "cell {i} references vertex {bad}, but the grid has {} vertices",
                    vertices.len()
                )));
            }
            let vol = signed_volume(&vertices, cell);
            if vol.abs() < DEGENERATE_VOLUME {
                return Err(Error::Data(format!(
                    "cell {i} is degenerate (|volume| = {:.3e} m^3)",
                    vol.abs()
                )));
            }
            if vol < 0.0 {
                cell.swap(2, 3);
            }
        }
        Ok(Self {
            vertices,
            cells,
            regions,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, i: usize) -> [usize; 4] {
        self.cells[i]
    }

    pub fn region(&self, i: usize) -> u32 {
        self.regions[i]
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 4]] {
        &self.cells
    }

    pub fn cell_volume(&self, i: usize) -> f64 {
        signed_volume(&self.vertices, &self.cells[i])
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.cells.len()).map(|i| self.cell_volume(i)).sum()
    }

    pub fn cell_centroid(&self, i: usize) -> Point3<f64> {
        let c = self.cells[i];
        let mut acc = nalgebra::Vector3::zeros();
        for id in c {
            acc += self.vertices[id].coords;
        }
        Point3::from(acc / 4.0)
    }

    /// Reassigns region ids from a predicate on cell centroids. Used to build
    /// multi-material models on generated grids.
    pub fn assign_regions<F: Fn(&Point3<f64>) -> u32>(&mut self, f: F) {
        for i in 0..self.cells.len() {
            self.regions[i] = f(&self.cell_centroid(i));
        }
    }

    /// True when cell vertices are exactly the cloud nodes, which lets output
    /// writers emit the tetrahedra instead of point cells.
    pub fn vertices_match(&self, cloud: &NodeCloud) -> bool {
        self.vertices.len() == cloud.len()
            && self
                .vertices
                .iter()
                .zip(cloud.coords())
                .all(|(a, b)| a == b)
    }
}

/// One quadrature point of the 4-point Gauss rule.
#[derive(Debug, Clone, Copy)]
pub struct GaussPoint {
    pub position: Point3<f64>,
    /// Volume measure carried by the point (m^3), V_cell / 4.
    pub weight: f64,
    pub cell: usize,
    pub region: u32,
}

/// Barycentric coordinates of the degree-2 4-point rule: (BETA, ALPHA, ALPHA,
/// ALPHA) and permutations.
pub const GAUSS_ALPHA: f64 = 0.138_196_601_125_010_5; // (5 - sqrt(5)) / 20
pub const GAUSS_BETA: f64 = 0.585_410_196_624_968_5; // (5 + 3 sqrt(5)) / 20

/// Expands a grid into its Gauss points, 4 per cell, each with weight
/// V_cell / 4. The rule integrates quadratic polynomials exactly.
pub fn gauss_points(grid: &IntegrationGrid) -> Vec<GaussPoint> {
    let mut points = Vec::with_capacity(4 * grid.cell_count());
    for i in 0..grid.cell_count() {
        let cell = grid.cell(i);
        let v: [Point3<f64>; 4] = [
            grid.vertices[cell[0]],
            grid.vertices[cell[1]],
            grid.vertices[cell[2]],
            grid.vertices[cell[3]],
        ];
        let weight = grid.cell_volume(i) / 4.0;
        let region = grid.region(i);
        for k in 0..4 {
            let mut bary = [GAUSS_ALPHA; 4];
            bary[k] = GAUSS_BETA;
            let mut pos = nalgebra::Vector3::zeros();
            for (b, vert) in bary.iter().zip(v.iter()) {
                pos += *b * vert.coords;
            }
            points.push(GaussPoint {
                position: Point3::from(pos),
                weight,
                cell: i,
                region,
            });
        }
    }
    points
}

/// Parameters of the adaptive support query.
#[derive(Debug, Clone, Copy)]
pub struct SupportParams {
    /// Minimum node count; the quadratic basis needs at least its 10 monomials.
    pub n_min: usize,
    /// Initial radius as a multiple of the local characteristic spacing
    /// (mean distance to the 4 nearest nodes).
    pub r_init_factor: f64,
    /// Multiplicative growth applied until `n_min` nodes are inside.
    pub growth: f64,
}

impl Default for SupportParams {
    fn default() -> Self {
        Self {
            n_min: 10,
            r_init_factor: 1.8,
            growth: 1.2,
        }
    }
}

/// Result of a support query: node ids (ascending) and the radius that
/// produced them.
#[derive(Debug, Clone)]
pub struct SupportQueryResult {
    pub nodes: Vec<usize>,
    pub r_sd: f64,
}

/// Returns all nodes within `r_sd`, growing the radius from `r_init` by 1.2
/// until at least `n_min` nodes are inside. Fails once the radius exceeds
/// twice the domain diameter.
pub fn find_support(
    x: &Point3<f64>,
    cloud: &NodeCloud,
    index: &SearchGrid,
    n_min: usize,
    r_init: f64,
) -> Result<SupportQueryResult> {
    debug_assert!(r_init > 0.0);
    let limit = 2.0 * index.diameter().max(r_init);
    let mut r_sd = r_init;
    loop {
        let nodes = index.within(x, r_sd);
        if nodes.len() >= n_min {
            return Ok(SupportQueryResult { nodes, r_sd });
        }
        if r_sd > limit {
            return Err(Error::SupportExhausted {
                x: x.x,
                y: x.y,
                z: x.z,
                radius: r_sd,
                found: nodes.len(),
                needed: n_min,
            });
        }
        let _ = cloud;
        r_sd *= 1.2;
    }
}

/// Initial support radius at a query point: `factor` times the local
/// characteristic node spacing (mean nearest-neighbour distance of the 4
/// nodes closest to the query), with a bounding-box fallback for degenerate
/// clouds. Tying the radius to the cloud spacing keeps it a smooth function
/// of position, so the shape-function field stays integrable by the
/// background quadrature.
pub fn initial_support_radius(index: &SearchGrid, x: &Point3<f64>, factor: f64) -> f64 {
    let h = index.local_spacing(x);
    if h > 0.0 {
        factor * h
    } else {
        index.diameter().max(f64::MIN_POSITIVE)
    }
}

/// Minimum pairwise distance between nodes of a support. Used by the
/// interpolation-deviation bound.
pub fn support_r_min(cloud: &NodeCloud, support: &SupportQueryResult) -> f64 {
    let mut r_min = f64::INFINITY;
    for (k, &i) in support.nodes.iter().enumerate() {
        for &j in &support.nodes[k + 1..] {
            let d = (cloud.coord(i) - cloud.coord(j)).norm();
            if d < r_min {
                r_min = d;
            }
        }
    }
    r_min
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Point3, Vector3};

    fn unit_reference_tet() -> IntegrationGrid {
        let verts = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        IntegrationGrid::new(verts, vec![[0, 1, 2, 3]], vec![0]).unwrap()
    }

    /// Exact integral of a monomial of total degree <= 2 over a tetrahedron,
    /// from the barycentric formula
    /// integral of l0^a l1^b l2^c l3^d dV = 6 V a! b! c! d! / (a+b+c+d+3)!.
    fn exact_monomial_integral(v: &[Point3<f64>; 4], ex: [u32; 3]) -> f64 {
        let vol = (v[1] - v[0]).cross(&(v[2] - v[0])).dot(&(v[3] - v[0])).abs() / 6.0;
        let comp = |axis: usize| [v[0][axis], v[1][axis], v[2][axis], v[3][axis]];
        match ex {
            [0, 0, 0] => vol,
            [1, 0, 0] | [0, 1, 0] | [0, 0, 1] => {
                let axis = ex.iter().position(|&e| e == 1).unwrap();
                let c = comp(axis);
                vol * c.iter().sum::<f64>() / 4.0
            }
            [2, 0, 0] | [0, 2, 0] | [0, 0, 2] => {
                let axis = ex.iter().position(|&e| e == 2).unwrap();
                let c = comp(axis);
                let sum: f64 = c.iter().sum();
                let sq: f64 = c.iter().map(|x| x * x).sum();
                // integral x^2 = V/20 (sum_i sum_j xi xj + sum_i xi^2)
                vol / 20.0 * (sum * sum + sq)
            }
            _ => {
                // mixed xy/xz/yz
                let (a, b) = match ex {
                    [1, 1, 0] => (0, 1),
                    [1, 0, 1] => (0, 2),
                    [0, 1, 1] => (1, 2),
                    _ => panic!("unsupported exponent {ex:?}"),
                };
                let ca = comp(a);
                let cb = comp(b);
                let sa: f64 = ca.iter().sum();
                let sb: f64 = cb.iter().sum();
                let dot: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
                vol / 20.0 * (sa * sb + dot)
            }
        }
    }

    fn quadrature_integral(grid: &IntegrationGrid, ex: [u32; 3]) -> f64 {
        gauss_points(grid)
            .iter()
            .map(|gp| {
                let p = gp.position;
                gp.weight
                    * p.x.powi(ex[0] as i32)
                    * p.y.powi(ex[1] as i32)
                    * p.z.powi(ex[2] as i32)
            })
            .sum()
    }

    #[test]
    fn gauss_weights_sum_to_reference_volume() {
        let grid = unit_reference_tet();
        let sum: f64 = gauss_points(&grid).iter().map(|g| g.weight).sum();
        assert_relative_eq!(sum, 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn gauss_rule_integrates_x_squared_on_reference_tet() {
        // Frozen from the exact monomial formula: a! b! c! 6V / (a+b+c+3)!
        // with a=2 gives 2 * 6 * (1/6) / 5! = 1/60.
        let grid = unit_reference_tet();
        let val = quadrature_integral(&grid, [2, 0, 0]);
        assert_relative_eq!(val, 1.0 / 60.0, epsilon = 1e-15);
    }

    #[test]
    fn gauss_rule_exact_for_quadratics_on_random_tets() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let monomials: [[u32; 3]; 10] = [
            [0, 0, 0],
            [1, 0, 0],
            [0, 1, 0],
            [0, 0, 1],
            [2, 0, 0],
            [0, 2, 0],
            [0, 0, 2],
            [1, 1, 0],
            [1, 0, 1],
            [0, 1, 1],
        ];
        for _ in 0..50 {
            let mut v: [Point3<f64>; 4] = std::array::from_fn(|_| {
                Point3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            });
            let vol = (v[1] - v[0]).cross(&(v[2] - v[0])).dot(&(v[3] - v[0])) / 6.0;
            if vol.abs() < 1e-3 {
                continue;
            }
            if vol < 0.0 {
                v.swap(2, 3);
            }
            let grid =
                IntegrationGrid::new(v.to_vec(), vec![[0, 1, 2, 3]], vec![0]).unwrap();
            for ex in monomials {
                let exact = exact_monomial_integral(&v, ex);
                let quad = quadrature_integral(&grid, ex);
                let scale = exact.abs().max(1e-6);
                assert!(
                    ((quad - exact) / scale).abs() < 1e-12,
                    "monomial {ex:?}: quad {quad} vs exact {exact}"
                );
            }
        }
    }

    #[test]
    fn gauss_points_lie_strictly_inside_their_cell() {
        let grid = unit_reference_tet();
        for gp in gauss_points(&grid) {
            let p = gp.position;
            assert!(p.x > 0.0 && p.y > 0.0 && p.z > 0.0);
            assert!(p.x + p.y + p.z < 1.0);
            assert_relative_eq!(gp.weight, 1.0 / 24.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn grid_repairs_negative_orientation() {
        let verts = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        // Swapped order gives negative signed volume.
        let grid = IntegrationGrid::new(verts, vec![[0, 2, 1, 3]], vec![0]).unwrap();
        assert!(grid.cell_volume(0) > 0.0);
        assert_relative_eq!(grid.cell_volume(0), 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn grid_rejects_degenerate_cell() {
        let verts = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.5, 0.5, 0.0),
        ];
        let err = IntegrationGrid::new(verts, vec![[0, 1, 2, 3]], vec![0]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn cloud_rejects_non_finite_coordinates() {
        let err = NodeCloud::new(vec![Point3::new(f64::NAN, 0.0, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn node_set_ids_are_range_checked() {
        let mut cloud = NodeCloud::new(vec![Point3::origin()]).unwrap();
        assert!(cloud.add_set("ok", vec![0]).is_ok());
        assert!(cloud.add_set("bad", vec![1]).is_err());
    }

    #[test]
    fn support_postconditions_at_center_and_corner() {
        let (cloud, _) = generate_cube_grid(0.1, 6).unwrap();
        let index = SearchGrid::new(&cloud);
        let h = 0.02;
        for x in [Point3::new(0.05, 0.05, 0.05), Point3::origin()] {
            let sup = find_support(&x, &cloud, &index, 10, 1.5 * h).unwrap();
            assert!(sup.nodes.len() >= 10);
            for &i in &sup.nodes {
                assert!((cloud.coord(i) - x).norm() <= sup.r_sd + 1e-15);
            }
            let mut sorted = sup.nodes.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, sup.nodes, "support ids must come back sorted");
        }
    }

    #[test]
    fn support_fails_on_pathological_cloud() {
        // Two coincident nodes cannot ever provide 10 support members.
        let cloud = NodeCloud::new(vec![Point3::origin(), Point3::origin()]).unwrap();
        let index = SearchGrid::new(&cloud);
        let err = find_support(&Point3::origin(), &cloud, &index, 10, 0.1).unwrap_err();
        assert!(matches!(err, Error::SupportExhausted { .. }));
    }

    #[test]
    fn translation_moves_gauss_points_with_cells() {
        let grid = unit_reference_tet();
        let shifted = IntegrationGrid::new(
            grid.vertices()
                .iter()
                .map(|p| p + Vector3::new(1.0, 2.0, 3.0))
                .collect(),
            grid.cells().to_vec(),
            vec![0],
        )
        .unwrap();
        let a = gauss_points(&grid);
        let b = gauss_points(&shifted);
        for (ga, gb) in a.iter().zip(&b) {
            assert_relative_eq!(ga.weight, gb.weight, epsilon = 1e-15);
            assert_relative_eq!(
                (gb.position - ga.position - Vector3::new(1.0, 2.0, 3.0)).norm(),
                0.0,
                epsilon = 1e-12
            );
        }
    }
}
