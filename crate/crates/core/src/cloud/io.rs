//! ASCII file formats for clouds, background cells, and node sets.
//!
//! Nodes: one node per line, "x y z" in meters, 0-based implicit ids.
//! Cells: one cell per line, four 0-based vertex ids.
//! Node sets: one integer id per line.
//! "#" starts a comment in all three formats.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Point3;

use super::{IntegrationGrid, NodeCloud};
use crate::{Error, Result};

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            None
        } else {
            Some((i + 1, line))
        }
    })
}

fn load_nodes(path: &Path) -> Result<Vec<Point3<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut coords = Vec::new();
    for (lineno, line) in data_lines(&text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_error(
                path,
                lineno,
                format!("expected 3 coordinates, found {}", fields.len()),
            ));
        }
        let mut p = [0.0f64; 3];
        for (k, f) in fields.iter().enumerate() {
            p[k] = f
                .parse::<f64>()
                .map_err(|e| parse_error(path, lineno, format!("bad coordinate {f:?}: {e}")))?;
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "{}:{lineno}: non-finite coordinate",
                path.display()
            )));
        }
        coords.push(Point3::new(p[0], p[1], p[2]));
    }
    Ok(coords)
}

fn load_cells(path: &Path, node_count: usize) -> Result<Vec<[usize; 4]>> {
    let text = fs::read_to_string(path)?;
    let mut cells = Vec::new();
    for (lineno, line) in data_lines(&text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_error(
                path,
                lineno,
                format!("expected 4 vertex ids, found {}", fields.len()),
            ));
        }
        let mut cell = [0usize; 4];
        for (k, f) in fields.iter().enumerate() {
            cell[k] = f
                .parse::<usize>()
                .map_err(|e| parse_error(path, lineno, format!("bad vertex id {f:?}: {e}")))?;
            if cell[k] >= node_count {
                return Err(parse_error(
                    path,
                    lineno,
                    format!("vertex id {} out of range (node count {})", cell[k], node_count),
                ));
            }
        }
        cells.push(cell);
    }
    Ok(cells)
}

/// Loads a cloud and its background grid. Cell orientations are repaired to
/// positive volume; degenerate cells are rejected.
pub fn load_grid(nodes_path: &Path, cells_path: &Path) -> Result<(NodeCloud, IntegrationGrid)> {
    let coords = load_nodes(nodes_path)?;
    let cells = load_cells(cells_path, coords.len())?;
    let cloud = NodeCloud::new(coords)?;
    let regions = vec![0u32; cells.len()];
    let grid = IntegrationGrid::new(cloud.coords().to_vec(), cells, regions)?;
    Ok((cloud, grid))
}

/// Writes the nodes and cells files. Coordinates round-trip exactly.
pub fn save_grid(
    cloud: &NodeCloud,
    grid: &IntegrationGrid,
    nodes_path: &Path,
    cells_path: &Path,
) -> Result<()> {
    let mut nodes = String::new();
    for p in cloud.coords() {
        nodes.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    fs::write(nodes_path, nodes)?;

    let mut cells = String::new();
    for c in grid.cells() {
        cells.push_str(&format!("{} {} {} {}\n", c[0], c[1], c[2], c[3]));
    }
    fs::write(cells_path, cells)?;
    Ok(())
}

pub fn load_node_set(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let mut ids = Vec::new();
    for (lineno, line) in data_lines(&text) {
        let id = line
            .parse::<usize>()
            .map_err(|e| parse_error(path, lineno, format!("bad node id {line:?}: {e}")))?;
        ids.push(id);
    }
    Ok(ids)
}

pub fn save_node_set(ids: &[usize], path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    for id in ids {
        writeln!(file, "{id}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::generate_cube_grid;

    fn tmpdir(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("mtled-io-{name}-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tmpdir("roundtrip");
        let (cloud, grid) = generate_cube_grid(0.1, 6).unwrap();
        let nodes = dir.join("nodes.txt");
        let cells = dir.join("cells.txt");
        save_grid(&cloud, &grid, &nodes, &cells).unwrap();
        let (cloud2, grid2) = load_grid(&nodes, &cells).unwrap();
        assert_eq!(cloud2.len(), cloud.len());
        assert_eq!(grid2.cell_count(), grid.cell_count());
        for (a, b) in cloud.coords().iter().zip(cloud2.coords()) {
            assert_eq!(a, b);
        }
        for i in 0..grid.cell_count() {
            assert_eq!(grid.cell(i), grid2.cell(i));
        }
    }

    #[test]
    fn negative_volume_cell_is_repaired_on_load() {
        let dir = tmpdir("repair");
        let nodes = dir.join("nodes.txt");
        let cells = dir.join("cells.txt");
        fs::write(&nodes, "0 0 0\n1 0 0\n0 1 0\n0 0 1\n").unwrap();
        // Vertex order chosen to give negative signed volume.
        fs::write(&cells, "0 2 1 3\n").unwrap();
        let (_, grid) = load_grid(&nodes, &cells).unwrap();
        assert!(grid.cell_volume(0) > 0.0);
    }

    #[test]
    fn nan_coordinate_is_a_data_error() {
        let dir = tmpdir("nan");
        let nodes = dir.join("nodes.txt");
        fs::write(&nodes, "nan 0 0\n").unwrap();
        let err = load_nodes(&nodes).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let dir = tmpdir("badline");
        let nodes = dir.join("nodes.txt");
        fs::write(&nodes, "# header\n0 0 0\n0 0\n").unwrap();
        match load_nodes(&nodes).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let dir = tmpdir("comments");
        let nodes = dir.join("nodes.txt");
        fs::write(&nodes, "# full line\n\n0 0 0 # trailing\n1 0 0\n").unwrap();
        assert_eq!(load_nodes(&nodes).unwrap().len(), 2);
    }

    #[test]
    fn node_set_round_trips() {
        let dir = tmpdir("set");
        let path = dir.join("set_top.txt");
        save_node_set(&[3, 1, 4], &path).unwrap();
        assert_eq!(load_node_set(&path).unwrap(), vec![3, 1, 4]);
    }

    #[test]
    fn cell_vertex_out_of_range_is_reported() {
        let dir = tmpdir("range");
        let nodes = dir.join("nodes.txt");
        let cells = dir.join("cells.txt");
        fs::write(&nodes, "0 0 0\n1 0 0\n0 1 0\n0 0 1\n").unwrap();
        fs::write(&cells, "0 1 2 9\n").unwrap();
        assert!(matches!(
            load_grid(&nodes, &cells).unwrap_err(),
            Error::Parse { .. }
        ));
    }
}
