//! Legacy-VTK structured-points output, one scalar cell field per file.

use std::io::Write;
use std::path::Path;

use crate::mesh::SubdomainGrid;

/// Write one subdomain's cell pressures as an ASCII STRUCTURED_POINTS file.
/// Values must be ordered row-major with j outermost, matching the dof
/// enumeration within a grid.
pub fn write_structured_points(
    path: &Path,
    title: &str,
    grid: &SubdomainGrid,
    cell_values: &[f64],
) -> std::io::Result<()> {
    assert_eq!(cell_values.len(), grid.cell_count());
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} 1", grid.nx + 1, grid.ny + 1)?;
    writeln!(w, "ORIGIN {:.9e} {:.9e} 0", grid.x0, grid.y0)?;
    writeln!(w, "SPACING {:.9e} {:.9e} 1", grid.hx(), grid.hy())?;
    writeln!(w, "CELL_DATA {}", grid.cell_count())?;
    writeln!(w, "SCALARS pressure double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in cell_values {
        writeln!(w, "{v:.9e}")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_value_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.vtk");
        let grid = SubdomainGrid::new(0, 0.0, 0.5, 0.0, 1.0, 2, 2).unwrap();
        write_structured_points(&path, "test dump", &grid, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[3], "DATASET STRUCTURED_POINTS");
        assert_eq!(lines[4], "DIMENSIONS 3 3 1");
        assert_eq!(lines[7], "CELL_DATA 4");
        assert_eq!(lines[8], "SCALARS pressure double 1");
        assert_eq!(lines.len(), 10 + 4);
        assert!(lines[10].starts_with("1.0"));
    }
}
