//! Run artifacts: VTK legacy snapshots and the step-series CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::cloud::{IntegrationGrid, NodeCloud};
use crate::Result;

use super::SeriesRow;

/// Writes a legacy ASCII UNSTRUCTURED_GRID snapshot with the displacement
/// field as point vectors. When the background grid's vertices coincide with
/// the cloud nodes the tetrahedra are emitted (cell type 10); otherwise each
/// node becomes a VERTEX cell.
pub fn write_vtk(
    path: &Path,
    cloud: &NodeCloud,
    grid: Option<&IntegrationGrid>,
    u: &[Vector3<f64>],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "meshless displacement field")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", cloud.len())?;
    for p in cloud.coords() {
        writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
    }

    match grid.filter(|g| g.vertices_match(cloud)) {
        Some(g) => {
            let m = g.cell_count();
            writeln!(out, "CELLS {} {}", m, 5 * m)?;
            for c in g.cells() {
                writeln!(out, "4 {} {} {} {}", c[0], c[1], c[2], c[3])?;
            }
            writeln!(out, "CELL_TYPES {m}")?;
            for _ in 0..m {
                writeln!(out, "10")?;
            }
        }
        None => {
            let n = cloud.len();
            writeln!(out, "CELLS {} {}", n, 2 * n)?;
            for i in 0..n {
                writeln!(out, "1 {i}")?;
            }
            writeln!(out, "CELL_TYPES {n}")?;
            for _ in 0..n {
                writeln!(out, "1")?;
            }
        }
    }

    writeln!(out, "POINT_DATA {}", cloud.len())?;
    writeln!(out, "VECTORS displacement double")?;
    for v in u {
        writeln!(out, "{} {} {}", v.x, v.y, v.z)?;
    }
    out.flush()?;
    Ok(())
}

/// Step series: step, time, kinetic proxy, max increment.
pub fn write_summary_csv(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "step,time,kinetic_proxy,max_increment")?;
    for r in rows {
        writeln!(
            out,
            "{},{:e},{:e},{:e}",
            r.step, r.time, r.kinetic_proxy, r.max_increment
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::generate_cube_grid;

    #[test]
    fn vtk_snapshot_has_cells_when_vertices_match() {
        let dir = std::env::temp_dir().join(format!("mtled-vtk-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let (cloud, grid) = generate_cube_grid(0.1, 3).unwrap();
        let u = vec![Vector3::new(1e-3, 0.0, 0.0); cloud.len()];
        let path = dir.join("snap.vtk");
        write_vtk(&path, &cloud, Some(&grid), &u).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0"));
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains(&format!("POINTS {} double", cloud.len())));
        assert!(text.contains(&format!("CELLS {} {}", grid.cell_count(), 5 * grid.cell_count())));
        assert!(text.contains("VECTORS displacement double"));
        let type_lines = text.lines().filter(|l| *l == "10").count();
        assert_eq!(type_lines, grid.cell_count());
    }

    #[test]
    fn vtk_snapshot_falls_back_to_vertex_cells() {
        let dir = std::env::temp_dir().join(format!("mtled-vtk2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let (cloud, _) = generate_cube_grid(0.1, 3).unwrap();
        let u = vec![Vector3::zeros(); cloud.len()];
        let path = dir.join("points.vtk");
        write_vtk(&path, &cloud, None, &u).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(&format!("CELLS {} {}", cloud.len(), 2 * cloud.len())));
    }
}
