//! Structured cloud and background-grid generators for the benchmark shapes.

use std::f64::consts::PI;

use nalgebra::Point3;

use super::{IntegrationGrid, NodeCloud};
use crate::{Error, Result};

/// Regular lattice cube of `nodes_per_edge`^3 nodes on [0, edge]^3. Each of
/// the (nodes_per_edge - 1)^3 sub-cubes is split into 6 tetrahedra sharing the
/// main diagonal, which is conforming across neighbours. Node sets: "bottom",
/// "top", "xmin", "xmax", "ymin", "ymax".
pub fn generate_cube_grid(edge: f64, nodes_per_edge: usize) -> Result<(NodeCloud, IntegrationGrid)> {
    if nodes_per_edge < 2 {
        return Err(Error::Config(format!(
            "nodes_per_edge must be at least 2, got {nodes_per_edge}"
        )));
    }
    if !(edge > 0.0 && edge.is_finite()) {
        return Err(Error::Config(format!("edge must be positive, got {edge}")));
    }

    let n = nodes_per_edge;
    let node_id = |i: usize, j: usize, k: usize| (k * n + j) * n + i;
    let coord = |i: usize| edge * (i as f64 / (n - 1) as f64);

    let mut coords = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                coords.push(Point3::new(coord(i), coord(j), coord(k)));
            }
        }
    }
    let mut cloud = NodeCloud::new(coords)?;

    let mut bottom = Vec::new();
    let mut top = Vec::new();
    let mut xmin = Vec::new();
    let mut xmax = Vec::new();
    let mut ymin = Vec::new();
    let mut ymax = Vec::new();
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let id = node_id(i, j, k);
                if k == 0 {
                    bottom.push(id);
                }
                if k == n - 1 {
                    top.push(id);
                }
                if i == 0 {
                    xmin.push(id);
                }
                if i == n - 1 {
                    xmax.push(id);
                }
                if j == 0 {
                    ymin.push(id);
                }
                if j == n - 1 {
                    ymax.push(id);
                }
            }
        }
    }
    cloud.add_set("bottom", bottom)?;
    cloud.add_set("top", top)?;
    cloud.add_set("xmin", xmin)?;
    cloud.add_set("xmax", xmax)?;
    cloud.add_set("ymin", ymin)?;
    cloud.add_set("ymax", ymax)?;

    // Six tetrahedra per sub-cube, one per permutation of the axis order
    // along the path (0,0,0) -> (1,1,1).
    const AXIS_ORDERS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let m = n - 1;
    let mut cells = Vec::with_capacity(6 * m * m * m);
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                let base = [i, j, k];
                for order in AXIS_ORDERS {
                    let mut corner = base;
                    let mut tet = [node_id(corner[0], corner[1], corner[2]), 0, 0, 0];
                    for (step, &axis) in order.iter().enumerate() {
                        corner[axis] += 1;
                        tet[step + 1] = node_id(corner[0], corner[1], corner[2]);
                    }
                    cells.push(tet);
                }
            }
        }
    }
    let regions = vec![0u32; cells.len()];
    let grid = IntegrationGrid::new(cloud.coords().to_vec(), cells, regions)?;
    Ok((cloud, grid))
}

/// Count of a hexagonal-ring disk with `nr` rings: 1 + 3 nr (nr + 1).
fn disk_node_count(nr: usize) -> usize {
    1 + 3 * nr * (nr + 1)
}

fn ring_start(k: usize) -> usize {
    if k == 0 {
        0
    } else {
        1 + 3 * k * (k - 1)
    }
}

/// Triangles of the hexagonal-ring disk, counter-clockwise.
fn disk_triangles(nr: usize) -> Vec<[usize; 3]> {
    let mut tris = Vec::with_capacity(6 * nr * nr);
    for k in 1..=nr {
        let outer = ring_start(k);
        let outer_len = 6 * k;
        for s in 0..6 {
            for i in 0..k {
                let o0 = outer + (s * k + i) % outer_len;
                let o1 = outer + (s * k + i + 1) % outer_len;
                if k == 1 {
                    tris.push([o0, o1, 0]);
                    continue;
                }
                let inner = ring_start(k - 1);
                let inner_len = 6 * (k - 1);
                let in0 = inner + (s * (k - 1) + i) % inner_len;
                tris.push([o0, o1, in0]);
                if i + 1 < k {
                    let in1 = inner + (s * (k - 1) + i + 1) % inner_len;
                    tris.push([in0, o1, in1]);
                }
            }
        }
    }
    tris
}

/// Placements mapping a prism onto itself (bottom rotations and the
/// upside-down flips), used to bring the smallest vertex id to slot 0.
const PRISM_PLACEMENTS: [[usize; 6]; 6] = [
    [0, 1, 2, 3, 4, 5],
    [1, 2, 0, 4, 5, 3],
    [2, 0, 1, 5, 3, 4],
    [3, 5, 4, 0, 2, 1],
    [5, 4, 3, 2, 1, 0],
    [4, 3, 5, 1, 0, 2],
];

/// Splits a prism (bottom v0 v1 v2, top v3 v4 v5, verticals i <-> i+3) into 3
/// tetrahedra. Every quad face is cut along the diagonal through its smallest
/// global vertex id, so the splits of face-adjacent prisms agree.
fn split_prism(p: [usize; 6]) -> [[usize; 4]; 3] {
    let v = PRISM_PLACEMENTS
        .iter()
        .map(|perm| std::array::from_fn::<usize, 6, _>(|i| p[perm[i]]))
        .min_by_key(|cand| cand[0])
        .unwrap();
    if v[1].min(v[5]) < v[2].min(v[4]) {
        [
            [v[0], v[1], v[2], v[5]],
            [v[0], v[1], v[5], v[4]],
            [v[0], v[4], v[5], v[3]],
        ]
    } else {
        [
            [v[0], v[1], v[2], v[4]],
            [v[0], v[4], v[2], v[5]],
            [v[0], v[4], v[5], v[3]],
        ]
    }
}

/// Cylinder of the given height and diameter on z in [0, height], axis
/// through the origin. Layers of hexagonal node rings are extruded into
/// prisms and split into tetrahedra. Ring and layer counts are chosen so the
/// volumetric node density matches `target_spacing`^-3; the average spacing
/// (V/N)^(1/3) lands within 20% of the target. Node sets: "bottom", "top".
pub fn generate_cylinder_grid(
    height: f64,
    diameter: f64,
    target_spacing: f64,
) -> Result<(NodeCloud, IntegrationGrid)> {
    for (name, v) in [
        ("height", height),
        ("diameter", diameter),
        ("target_spacing", target_spacing),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    let radius = diameter / 2.0;
    let volume = PI * radius * radius * height;
    let target_total = volume / target_spacing.powi(3);
    // Unit-density step of a hex-prism lattice: dz * (sqrt(3)/2) dr^2 = s^3
    // with dr = dz = q s.
    let step = target_spacing * (2.0 / 3.0_f64.sqrt()).cbrt();
    let nz = ((height / step).round() as usize).max(1);
    let layers = nz + 1;
    let per_layer_target = target_total / layers as f64;
    let mut nr = 1usize;
    let mut best = (disk_node_count(1) as f64 - per_layer_target).abs();
    for k in 2.. {
        let diff = (disk_node_count(k) as f64 - per_layer_target).abs();
        if diff < best {
            best = diff;
            nr = k;
        } else {
            break;
        }
    }

    let disk_n = disk_node_count(nr);
    let mut coords = Vec::with_capacity(disk_n * layers);
    for l in 0..layers {
        let z = height * (l as f64 / nz as f64);
        coords.push(Point3::new(0.0, 0.0, z));
        for k in 1..=nr {
            let r = radius * (k as f64 / nr as f64);
            let count = 6 * k;
            for j in 0..count {
                let theta = 2.0 * PI * (j as f64 / count as f64);
                coords.push(Point3::new(r * theta.cos(), r * theta.sin(), z));
            }
        }
    }
    let mut cloud = NodeCloud::new(coords)?;
    cloud.add_set("bottom", (0..disk_n).collect())?;
    cloud.add_set("top", (nz * disk_n..layers * disk_n).collect())?;

    let tris = disk_triangles(nr);
    let mut cells = Vec::with_capacity(3 * tris.len() * nz);
    for l in 0..nz {
        let lo = l * disk_n;
        let hi = (l + 1) * disk_n;
        for t in &tris {
            let prism = [lo + t[0], lo + t[1], lo + t[2], hi + t[0], hi + t[1], hi + t[2]];
            cells.extend_from_slice(&split_prism(prism));
        }
    }
    let regions = vec![0u32; cells.len()];
    let grid = IntegrationGrid::new(cloud.coords().to_vec(), cells, regions)?;
    Ok((cloud, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::gauss_points;
    use approx::assert_relative_eq;
    use std::collections::HashMap;

    #[test]
    fn cube_cloud_1_counts_match() {
        let (cloud, grid) = generate_cube_grid(0.1, 6).unwrap();
        assert_eq!(cloud.len(), 216);
        assert_eq!(grid.cell_count(), 750);
        assert_eq!(cloud.set("bottom").unwrap().len(), 36);
        assert_eq!(cloud.set("top").unwrap().len(), 36);
    }

    #[test]
    fn cube_cloud_4_counts_match() {
        let (cloud, grid) = generate_cube_grid(0.1, 41).unwrap();
        assert_eq!(cloud.len(), 68_921);
        assert_eq!(grid.cell_count(), 384_000);
    }

    #[test]
    fn smallest_cube_is_a_single_split_subcube() {
        let (cloud, grid) = generate_cube_grid(0.1, 2).unwrap();
        assert_eq!(cloud.len(), 8);
        assert_eq!(grid.cell_count(), 6);
    }

    #[test]
    fn cube_rejects_too_few_nodes() {
        assert!(generate_cube_grid(0.1, 1).is_err());
        assert!(generate_cube_grid(0.0, 6).is_err());
        assert!(generate_cube_grid(-1.0, 6).is_err());
    }

    #[test]
    fn cube_volume_is_conserved() {
        let (_, grid) = generate_cube_grid(0.1, 6).unwrap();
        assert_relative_eq!(grid.total_volume(), 1e-3, max_relative = 1e-12);
        let gauss_sum: f64 = gauss_points(&grid).iter().map(|g| g.weight).sum();
        assert_relative_eq!(gauss_sum, grid.total_volume(), max_relative = 1e-12);
    }

    #[test]
    fn cube_grid_is_conforming() {
        // Every interior triangular face must be shared by exactly 2 cells.
        let (cloud, grid) = generate_cube_grid(0.1, 4).unwrap();
        let mut faces: HashMap<[usize; 3], usize> = HashMap::new();
        for c in 0..grid.cell_count() {
            let cell = grid.cell(c);
            for omit in 0..4 {
                let mut face: Vec<usize> = (0..4).filter(|&i| i != omit).map(|i| cell[i]).collect();
                face.sort_unstable();
                *faces.entry([face[0], face[1], face[2]]).or_insert(0) += 1;
            }
        }
        for (&face, &count) in &faces {
            assert!(
                count == 1 || count == 2,
                "face {face:?} shared by {count} cells"
            );
        }
        // Boundary faces tile the cube surface: sum of their areas = 6 L^2.
        let area: f64 = faces
            .iter()
            .filter(|(_, &c)| c == 1)
            .map(|(f, _)| {
                let a = cloud.coord(f[0]);
                let b = cloud.coord(f[1]);
                let c = cloud.coord(f[2]);
                (b - a).cross(&(c - a)).norm() / 2.0
            })
            .sum();
        assert_relative_eq!(area, 6.0 * 0.01, max_relative = 1e-12);
    }

    #[test]
    fn cylinder_cloud_1_count_near_reference() {
        let (cloud, _) = generate_cylinder_grid(0.1, 0.1, 0.00822).unwrap();
        let n = cloud.len() as f64;
        assert!(
            (n - 1089.0).abs() <= 0.3 * 1089.0,
            "node count {n} outside +/-30% of 1089"
        );
    }

    #[test]
    fn cylinder_cloud_2_count_near_reference() {
        let (cloud, _) = generate_cylinder_grid(0.1, 0.1, 0.00444).unwrap();
        let n = cloud.len() as f64;
        assert!(
            (n - 7769.0).abs() <= 0.3 * 7769.0,
            "node count {n} outside +/-30% of 7769"
        );
    }

    #[test]
    fn cylinder_volume_within_faceting_error() {
        for spacing in [0.00822, 0.00444] {
            let (_, grid) = generate_cylinder_grid(0.1, 0.1, spacing).unwrap();
            let exact = PI * 0.05 * 0.05 * 0.1;
            let vol = grid.total_volume();
            assert!(
                ((vol - exact) / exact).abs() < 0.02,
                "faceted volume {vol} deviates more than 2% from {exact}"
            );
        }
    }

    #[test]
    fn cylinder_average_spacing_within_20_percent() {
        for spacing in [0.00822, 0.00444, 0.0017] {
            let (cloud, grid) = generate_cylinder_grid(0.1, 0.1, spacing).unwrap();
            let measured = (grid.total_volume() / cloud.len() as f64).cbrt();
            assert!(
                ((measured - spacing) / spacing).abs() < 0.2,
                "measured spacing {measured} vs target {spacing}"
            );
        }
    }

    #[test]
    fn cylinder_grid_is_conforming() {
        let (_, grid) = generate_cylinder_grid(0.05, 0.04, 0.01).unwrap();
        let mut faces: HashMap<[usize; 3], usize> = HashMap::new();
        for c in 0..grid.cell_count() {
            let cell = grid.cell(c);
            for omit in 0..4 {
                let mut face: Vec<usize> = (0..4).filter(|&i| i != omit).map(|i| cell[i]).collect();
                face.sort_unstable();
                *faces.entry([face[0], face[1], face[2]]).or_insert(0) += 1;
            }
        }
        for (&face, &count) in &faces {
            assert!(
                count == 1 || count == 2,
                "face {face:?} shared by {count} cells"
            );
        }
    }

    #[test]
    fn cylinder_rejects_bad_dimensions() {
        assert!(generate_cylinder_grid(0.0, 0.1, 0.01).is_err());
        assert!(generate_cylinder_grid(0.1, -0.1, 0.01).is_err());
        assert!(generate_cylinder_grid(0.1, 0.1, 0.0).is_err());
    }

    #[test]
    fn cylinder_sets_sit_on_their_planes() {
        let (cloud, _) = generate_cylinder_grid(0.1, 0.1, 0.00822).unwrap();
        for &id in cloud.set("bottom").unwrap() {
            assert_eq!(cloud.coord(id).z, 0.0);
        }
        for &id in cloud.set("top").unwrap() {
            assert_eq!(cloud.coord(id).z, 0.1);
        }
    }
}
