//! Deterministic run outputs: legacy ASCII VTK per level, one CSV run
//! table, one plain-text solver log. Floats print in shortest round-trip
//! form, so identical runs produce byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::adaptive::RunRecord;
use crate::error::{Error, Result};

/// Unstructured-grid VTK with the point field u_h and the per-element
/// derived fields.
pub fn vtk_for_level(record: &crate::adaptive::LevelRecord) -> String {
    let mesh = &record.mesh;
    let fields = &record.fields;
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(out, "level {}", record.level);
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", mesh.vertices.len());
    for p in &mesh.vertices {
        let _ = writeln!(out, "{} {} 0", p.x, p.y);
    }
    let nt = mesh.triangles.len();
    let _ = writeln!(out, "CELLS {} {}", nt, 4 * nt);
    for t in &mesh.triangles {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {nt}");
    for _ in 0..nt {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "POINT_DATA {}", mesh.vertices.len());
    out.push_str("SCALARS u_h double 1\nLOOKUP_TABLE default\n");
    for i in 0..mesh.vertices.len() {
        let _ = writeln!(out, "{}", record.state.x[i]);
    }
    let _ = writeln!(out, "CELL_DATA {nt}");
    out.push_str("VECTORS sigma double\n");
    for s in &fields.sigma {
        let _ = writeln!(out, "{} {} 0", s.x, s.y);
    }
    out.push_str("SCALARS xi double 1\nLOOKUP_TABLE default\n");
    for v in &fields.xi {
        let _ = writeln!(out, "{v}");
    }
    out.push_str("SCALARS micro_flag int 1\nLOOKUP_TABLE default\n");
    for &m in &fields.micro_flag {
        let _ = writeln!(out, "{}", m as u8);
    }
    out.push_str("SCALARS unique_region int 1\nLOOKUP_TABLE default\n");
    for &m in &fields.unique_region {
        let _ = writeln!(out, "{}", m as u8);
    }
    out.push_str("SCALARS indicator double 1\nLOOKUP_TABLE default\n");
    for v in &record.report.indicator {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn csv_for_run(run: &RunRecord) -> String {
    let mut out = String::from(
        "level,n_elements,n_dofs,J_h,eta_Omega,eta_C1,eta_C2,eta_S,dist_surrogate,solver_iterations\n",
    );
    for l in &run.levels {
        let dist = l.dist_surrogate.map(|d| format!("{d}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            l.level,
            l.n_elements,
            l.n_dofs,
            l.energy,
            l.eta_omega,
            l.eta_c1,
            l.eta_c2,
            l.eta_s,
            dist,
            l.solver_iterations
        );
    }
    out
}

/// One record per solver iteration, per level.
pub fn log_for_run(run: &RunRecord) -> String {
    let mut out = String::new();
    for l in &run.levels {
        let _ = writeln!(
            out,
            "level {} elements {} dofs {} eta {}",
            l.level, l.n_elements, l.n_dofs, l.eta_total
        );
        for it in &l.state.iterations {
            let _ = writeln!(
                out,
                "  iter {} energy {} residual {} active {}",
                it.index, it.energy, it.residual, it.active_set
            );
        }
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Write every per-level VTK, the CSV table and the log into `dir`.
/// Returns the created file paths.
pub fn write_outputs(run: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    for l in &run.levels {
        let path = dir.join(format!("level_{:03}.vtk", l.level));
        write_file(&path, &vtk_for_level(l))?;
        written.push(path);
    }
    let csv = dir.join("run.csv");
    write_file(&csv, &csv_for_run(run))?;
    written.push(csv);
    let log = dir.join("run.log");
    write_file(&log, &log_for_run(run))?;
    written.push(log);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive::{adaptive_loop, AdaptiveConfig};
    use crate::energy::ProblemData;
    use crate::mesh::{generate_initial_mesh, BoundaryLabel, Geometry};
    use crate::potential::WellParams;
    use nalgebra::Vector2;

    fn tiny_run() -> RunRecord {
        let labels = vec![
            BoundaryLabel::Signorini,
            BoundaryLabel::Transmission,
            BoundaryLabel::Transmission,
            BoundaryLabel::Transmission,
        ];
        let mesh = generate_initial_mesh(&Geometry::UnitSquare, &labels, 0.5).unwrap();
        let well = WellParams::new(Vector2::new(-1.0, 0.0), Vector2::new(1.0, 0.0)).unwrap();
        let config = AdaptiveConfig {
            max_levels: 3,
            ..Default::default()
        };
        adaptive_loop(mesh, &well, &ProblemData::constants(0.2, 0.0, 0.0), &config).unwrap()
    }

    #[test]
    fn vtk_structure_is_wellformed() {
        let run = tiny_run();
        let vtk = vtk_for_level(&run.levels[0]);
        assert!(vtk.starts_with("# vtk DataFile Version 3.0\n"));
        let n_pts = run.levels[0].mesh.vertices.len();
        let nt = run.levels[0].mesh.triangles.len();
        assert!(vtk.contains(&format!("POINTS {n_pts} double")));
        assert!(vtk.contains(&format!("CELLS {nt} {}", 4 * nt)));
        assert!(vtk.contains("SCALARS xi double 1"));
        assert!(vtk.contains("VECTORS sigma double"));
        // every cell line references valid points
        let lines: Vec<&str> = vtk.lines().collect();
        let cells_at = lines.iter().position(|l| l.starts_with("CELLS")).unwrap();
        for l in &lines[cells_at + 1..cells_at + 1 + nt] {
            let idx: Vec<usize> = l
                .split_whitespace()
                .skip(1)
                .map(|t| t.parse().unwrap())
                .collect();
            assert_eq!(idx.len(), 3);
            assert!(idx.iter().all(|&i| i < n_pts));
        }
    }

    #[test]
    fn csv_has_header_and_one_row_per_level() {
        let run = tiny_run();
        let csv = csv_for_run(&run);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), run.levels.len() + 1);
        assert!(lines[0].starts_with("level,n_elements,n_dofs,J_h"));
        for row in &lines[1..] {
            assert_eq!(row.split(',').count(), 10);
        }
    }

    #[test]
    fn identical_runs_produce_identical_bytes() {
        let a = tiny_run();
        let b = tiny_run();
        assert_eq!(csv_for_run(&a), csv_for_run(&b));
        for (la, lb) in a.levels.iter().zip(&b.levels) {
            assert_eq!(vtk_for_level(la), vtk_for_level(lb));
        }
        assert_eq!(log_for_run(&a), log_for_run(&b));
    }

    #[test]
    fn zero_data_run_writes_all_zero_fields() {
        let labels = vec![
            BoundaryLabel::Signorini,
            BoundaryLabel::Transmission,
            BoundaryLabel::Transmission,
            BoundaryLabel::Transmission,
        ];
        let mesh = generate_initial_mesh(&Geometry::UnitSquare, &labels, 0.5).unwrap();
        let well = WellParams::new(Vector2::new(-1.0, 0.0), Vector2::new(1.0, 0.0)).unwrap();
        let run =
            adaptive_loop(mesh, &well, &ProblemData::zero(), &AdaptiveConfig::default()).unwrap();
        let vtk = vtk_for_level(&run.levels[0]);
        // all scalar sections carry zeros (micro_flag is all ones: the zero
        // gradient sits inside the relaxed well)
        let section = |name: &str| -> Vec<f64> {
            let lines: Vec<&str> = vtk.lines().collect();
            let at = lines.iter().position(|l| l.starts_with(name)).unwrap();
            lines[at + 2..]
                .iter()
                .map_while(|l| l.split_whitespace().next()?.parse().ok())
                .collect()
        };
        assert!(section("SCALARS u_h").iter().all(|&v| v == 0.0));
        assert!(section("SCALARS xi").iter().all(|&v| v == 0.0));
        assert!(section("SCALARS indicator").iter().all(|&v| v == 0.0));
        assert!(section("SCALARS micro_flag").iter().all(|&v| v == 1.0));
    }
}
