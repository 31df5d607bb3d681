//! Legacy VTK, Matrix Market and CSV output.

use std::io::{self, BufRead, Write};

use anyhow::{bail, Context};
use gradfem_core::analysis::{RateRow, RateTable};
use gradfem_core::mesh::{Mesh, RegionLabel};
use gradfem_core::sparse::CsrMatrix;

/// Writes `mesh` as an ASCII legacy VTK unstructured grid of tetrahedra, with
/// optional nodal data `point_data` (one value per mesh node).
pub fn write_vtk<W: Write>(
    out: &mut W,
    mesh: &Mesh,
    title: &str,
    point_data: &[(&str, &[f64])],
) -> io::Result<()> {
    let points = mesh.points();
    let tets = mesh.tets();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    // The title line may not contain newlines and is capped at 256 bytes.
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", points.len())?;
    for p in points {
        writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
    }
    writeln!(out, "CELLS {} {}", tets.len(), 5 * tets.len())?;
    for t in tets {
        let [a, b, c, d] = t.vertices;
        writeln!(out, "4 {a} {b} {c} {d}")?;
    }
    writeln!(out, "CELL_TYPES {}", tets.len())?;
    for _ in tets {
        writeln!(out, "10")?;
    }
    writeln!(out, "CELL_DATA {}", tets.len())?;
    writeln!(out, "SCALARS singular int 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for t in tets {
        writeln!(out, "{}", t.singular_vertex.is_some() as u8)?;
    }
    writeln!(out, "SCALARS layer int 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for t in tets {
        let layer = match t.region {
            RegionLabel::Omega => -1,
            RegionLabel::Ring { layer, .. } => layer as i64,
            RegionLabel::Core { level, .. } => level as i64,
        };
        writeln!(out, "{layer}")?;
    }
    if !point_data.is_empty() {
        writeln!(out, "POINT_DATA {}", points.len())?;
        for (name, values) in point_data {
            if values.len() != points.len() {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidInput,
                    format!("{name}: {} values for {} points", values.len(), points.len()),
                ));
            }
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for v in values.iter() {
                writeln!(out, "{v}")?;
            }
        }
    }
    Ok(())
}

/// Writes the lower triangle of a symmetric matrix in Matrix Market
/// coordinate format (1-based indices).
pub fn write_matrix_market<W: Write>(out: &mut W, a: &CsrMatrix) -> io::Result<()> {
    let n = a.dim();
    let lower: usize = (0..n).map(|i| a.row(i).filter(|&(j, _)| j <= i).count()).sum();
    writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(out, "{n} {n} {lower}")?;
    for i in 0..n {
        for (j, v) in a.row(i).filter(|&(j, _)| j <= i) {
            writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}

/// Reads a real coordinate Matrix Market file, general or symmetric.
pub fn read_matrix_market<R: BufRead>(input: R) -> anyhow::Result<CsrMatrix> {
    let mut lines = input.lines();
    let header = lines.next().context("empty file")??;
    let h: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if h.len() < 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" || h[2] != "coordinate" || h[3] != "real" {
        bail!("unsupported header '{header}'");
    }
    let symmetric = match h[4].as_str() {
        "symmetric" => true,
        "general" => false,
        other => bail!("unsupported symmetry '{other}'"),
    };
    let mut size = None;
    let mut entries = Vec::new();
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if size.is_none() {
            let rows: usize = f.first().context("size line")?.parse()?;
            let cols: usize = f.get(1).context("size line")?.parse()?;
            if rows != cols {
                bail!("matrix is {rows} x {cols}, not square");
            }
            size = Some(rows);
            continue;
        }
        if f.len() != 3 {
            bail!("bad entry line '{line}'");
        }
        let i: usize = f[0].parse()?;
        let j: usize = f[1].parse()?;
        let v: f64 = f[2].parse()?;
        let n = size.unwrap_or(0);
        if i == 0 || j == 0 || i > n || j > n {
            bail!("entry ({i}, {j}) outside a {n} x {n} matrix");
        }
        entries.push((i - 1, j - 1, v));
    }
    let n = size.context("missing size line")?;
    let mut a = CsrMatrix::from_pairs(n, entries.iter().map(|&(i, j, _)| (i as u32, j as u32)));
    for &(i, j, v) in &entries {
        a.add(i, j, v);
        if symmetric && i != j {
            a.add(j, i, v);
        }
    }
    Ok(a)
}

const COLUMNS: [&str; 8] = ["level", "dim", "tets", "error", "rate", "kappa", "iterations", "eigenvalue"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn row_record(r: &RateRow) -> [String; 8] {
    [
        r.level.to_string(),
        r.dim.to_string(),
        r.tets.to_string(),
        opt(r.error),
        opt(r.rate),
        opt(r.kappa),
        opt(r.iterations),
        opt(r.eigenvalue),
    ]
}

/// One CSV row per level; empty cells for missing values.
pub fn write_table_csv<W: Write>(out: W, table: &RateTable) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in &table.rows {
        w.write_record(row_record(r))?;
    }
    w.flush()?;
    Ok(())
}

/// The rates of several studies side by side, one column per `k`, shaped
/// like the published tables. Rows run over every level any study reached.
pub fn write_sweep_csv<W: Write>(out: W, tables: &[(f64, Option<&RateTable>)]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![String::from("level")];
    header.extend(tables.iter().map(|(k, _)| format!("k={k}")));
    w.write_record(&header)?;
    let max_level = tables
        .iter()
        .filter_map(|(_, t)| t.and_then(|t| t.rows.last()).map(|r| r.level))
        .max();
    if let Some(max_level) = max_level {
        for level in 0..=max_level {
            let mut record = vec![level.to_string()];
            record.extend(tables.iter().map(|(_, t)| opt(t.and_then(|t| t.rate(level)))));
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use gradfem_core::geometry::ORIGIN;

    #[test]
    fn matrix_market_round_trip() {
        let dense = [4.0, -1.0, 0.5, -1.0, 3.0, 0.0, 0.5, 0.0, 2.0];
        let a = CsrMatrix::from_dense(3, &dense);
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, &a).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real symmetric\n3 3 5\n"));
        let b = read_matrix_market(buf.as_slice()).unwrap();
        assert_eq!(b.to_dense(), dense.to_vec());
    }

    #[test]
    fn matrix_market_rejects_bad_input() {
        assert!(read_matrix_market("%%MatrixMarket matrix array real general\n".as_bytes()).is_err());
        let out_of_range = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        assert!(read_matrix_market(out_of_range.as_bytes()).is_err());
    }

    #[test]
    fn vtk_layout() {
        let mesh = Mesh::cube(&[ORIGIN]).unwrap();
        let values = vec![1.0; mesh.node_count()];
        let mut buf = Vec::new();
        write_vtk(&mut buf, &mesh, "level 0", &[("u", &values)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("POINTS 9 double\n"));
        assert!(text.contains("CELLS 12 60\n"));
        assert!(text.contains(&format!("CELL_TYPES 12\n{}", "10\n".repeat(12))));
        assert!(text.contains("POINT_DATA 9\nSCALARS u double 1\n"));
        let mut short = Vec::new();
        assert!(write_vtk(&mut short, &mesh, "x", &[("u", &values[..3])]).is_err());
    }

    #[test]
    fn csv_tables() {
        let table = RateTable {
            k: 0.3,
            rows: vec![
                RateRow { level: 0, dim: 2, tets: 12, ..Default::default() },
                RateRow { level: 1, dim: 16, tets: 96, error: Some(0.5), rate: Some(0.75), ..Default::default() },
            ],
        };
        let mut buf = Vec::new();
        write_table_csv(&mut buf, &table).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "level,dim,tets,error,rate,kappa,iterations,eigenvalue\n0,2,12,,,,,\n1,16,96,0.5,0.75,,,\n"
        );
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &[(0.3, Some(&table)), (0.5, None)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "level,k=0.3,k=0.5\n0,,\n1,0.75,\n");
    }
}
