//! Plain-text tables: one mesh node per line for fields, coordinate triplets
//! for operators.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fem::SparseMatrix;
use crate::solver::GridField;
use crate::weights::Point;

pub const NODE_HEADER: &str = "x y quadrature_weight boundary value";

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRow {
    pub point: Point,
    pub quadrature_weight: f64,
    pub boundary: bool,
    pub value: f64,
}

/// Values are written with 17 significant digits so a read recovers them
/// exactly.
pub fn write_field(field: &GridField) -> String {
    let mesh = &field.mesh;
    let mut out = String::with_capacity(96 * mesh.n_nodes());
    out.push_str(NODE_HEADER);
    out.push('\n');
    for i in 0..mesh.n_nodes() {
        let p = mesh.nodes[i];
        writeln!(
            out,
            "{:.16e} {:.16e} {:.16e} {} {:.16e}",
            p[0],
            p[1],
            mesh.quadrature_weights[i],
            u8::from(mesh.boundary[i]),
            field.values[i]
        )
        .expect("writing to a string");
    }
    out
}

pub fn read_field(text: &str) -> Result<Vec<NodeRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.split_whitespace().eq(NODE_HEADER.split_whitespace()) => {}
        _ => return Err(Error::Config(format!("node table must start with the header `{NODE_HEADER}`"))),
    }
    lines
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Config(format!("line {}: expected 5 numeric columns, got `{line}`", n + 1));
            if cols.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            let boundary = match cols[3] {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            };
            Ok(NodeRow {
                point: [num(cols[0])?, num(cols[1])?],
                quadrature_weight: num(cols[2])?,
                boundary,
                value: num(cols[4])?,
            })
        })
        .collect()
}

/// `row column value`, zero-based, in row-major order.
pub fn write_triplets(matrix: &SparseMatrix) -> String {
    let mut out = String::from("row column value\n");
    for (i, j, v) in matrix.triplets() {
        writeln!(out, "{i} {j} {v:.16e}").expect("writing to a string");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::stiffness;
    use crate::mesh::DiskMesh;
    use std::sync::Arc;

    #[test]
    fn field_round_trip() {
        let mesh = Arc::new(DiskMesh::graded_disk(1.0, 5, 12, 1.5).unwrap());
        let f = GridField::from_fn(mesh.clone(), |p| (p[0] * 3.7).sin() + p[1] / 3.0);
        let rows = read_field(&write_field(&f)).unwrap();
        assert_eq!(rows.len(), mesh.n_nodes());
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.point, mesh.nodes[i]);
            assert_eq!(r.quadrature_weight, mesh.quadrature_weights[i]);
            assert_eq!(r.boundary, mesh.boundary[i]);
            assert_eq!(r.value, f.values[i]);
        }
    }

    #[test]
    fn malformed_tables() {
        assert!(read_field("").is_err());
        assert!(read_field("x y\n1 2\n").is_err());
        assert!(read_field(&format!("{NODE_HEADER}\n0 0 1 2 0\n")).is_err());
        assert!(read_field(&format!("{NODE_HEADER}\n0 0 1 0\n")).is_err());
        assert_eq!(read_field(&format!("{NODE_HEADER}\n")).unwrap().len(), 0);
    }

    #[test]
    fn triplets_reproduce_the_matrix() {
        let mesh = DiskMesh::graded_disk(1.0, 4, 8, 1.0).unwrap();
        let k = stiffness(&mesh);
        let text = write_triplets(&k);
        let mut count = 0;
        for line in text.lines().skip(1) {
            let c: Vec<&str> = line.split_whitespace().collect();
            let (i, j, v): (usize, usize, f64) = (c[0].parse().unwrap(), c[1].parse().unwrap(), c[2].parse().unwrap());
            assert_eq!(k.get(i, j), v);
            count += 1;
        }
        assert_eq!(count, k.triplets().count());
    }
}
