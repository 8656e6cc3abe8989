//! Field files: an 8-byte magic, the little-endian length of a JSON header, the header,
//! then all components as little-endian `f64` in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::norms::FieldRef;
use super::{Grid, Location, ScalarField, StaggeredField};
use crate::error::{Error, Result};
use crate::geometry::DomainSpec;

const MAGIC: &[u8; 8] = b"DCLABFLD";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Scalar,
    Faces,
    Edges,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentHeader {
    pub shape: [usize; 3],
    /// Node alignment per axis.
    pub stagger: [bool; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub kind: FieldKind,
    pub domain: DomainSpec,
    pub cells: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub components: Vec<ComponentHeader>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StoredField {
    Scalar(ScalarField),
    Staggered(StaggeredField),
}

/// Component arrays with their node alignment.
type Components<'a> = Vec<(&'a Array3<f64>, [bool; 3])>;

pub fn write_field(out: &mut impl Write, grid: &Grid, field: FieldRef) -> Result<()> {
    let (kind, arrays): (FieldKind, Components) = match field {
        FieldRef::Scalar(s) => {
            s.check(grid)?;
            (FieldKind::Scalar, vec![(&s.data, [false; 3])])
        }
        FieldRef::Vector(v) => {
            v.check(grid, v.location)?;
            let kind = match v.location {
                Location::Faces => FieldKind::Faces,
                Location::Edges => FieldKind::Edges,
            };
            (kind, (0..3).map(|c| (&v.comps[c], v.location.stagger(c))).collect())
        }
    };
    let header = FieldHeader {
        kind,
        domain: grid.domain.clone(),
        cells: grid.cells,
        spacing: grid.spacing,
        origin: grid.origin,
        components: arrays
            .iter()
            .map(|(a, s)| ComponentHeader { shape: [a.shape()[0], a.shape()[1], a.shape()[2]], stagger: *s })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for (a, _) in arrays {
        for v in a.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_field(input: &mut impl Read) -> Result<(Grid, StoredField)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 24 {
        return Err(Error::Format(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: FieldHeader = serde_json::from_slice(&json)?;
    let grid = Grid::new(header.domain.clone(), header.cells)?;
    let expected: Vec<[bool; 3]> = match header.kind {
        FieldKind::Scalar => vec![[false; 3]],
        FieldKind::Faces => (0..3).map(|c| Location::Faces.stagger(c)).collect(),
        FieldKind::Edges => (0..3).map(|c| Location::Edges.stagger(c)).collect(),
    };
    if header.components.len() != expected.len() {
        return Err(Error::Format("wrong number of components".into()));
    }
    let mut arrays = Vec::new();
    for (comp, stag) in header.components.iter().zip(expected) {
        if comp.stagger != stag || comp.shape != grid.shape(stag) {
            return Err(Error::Format(format!("component layout {comp:?} inconsistent with the grid")));
        }
        let n: usize = comp.shape.iter().product();
        let mut bytes = vec![0u8; 8 * n];
        input.read_exact(&mut bytes)?;
        let data: Vec<f64> =
            bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        arrays.push(Array3::from_shape_vec(comp.shape, data).map_err(|e| Error::Format(e.to_string()))?);
    }
    let field = match header.kind {
        FieldKind::Scalar => StoredField::Scalar(ScalarField { data: arrays.remove(0) }),
        kind => {
            let location = if kind == FieldKind::Faces { Location::Faces } else { Location::Edges };
            let mut it = arrays.into_iter();
            let comps = [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()];
            StoredField::Staggered(StaggeredField { location, comps })
        }
    };
    Ok((grid, field))
}

pub fn save_field(path: &Path, grid: &Grid, field: FieldRef) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_field(&mut f, grid, field)?;
    f.flush()?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<(Grid, StoredField)> {
    read_field(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_faces_and_scalars() {
        let grid = Grid::unit_cube(4).unwrap();
        let v = StaggeredField::from_fn(&grid, Location::Faces, |x| [x[0], x[1] * x[2], -x[2]]);
        let mut buf = Vec::new();
        write_field(&mut buf, &grid, FieldRef::Vector(&v)).unwrap();
        let (g2, back) = read_field(&mut buf.as_slice()).unwrap();
        assert_eq!(g2, grid);
        assert_eq!(back, StoredField::Staggered(v));

        let s = ScalarField::from_fn(&grid, |x| x[0] - x[2]);
        let mut buf = Vec::new();
        write_field(&mut buf, &grid, FieldRef::Scalar(&s)).unwrap();
        assert_eq!(read_field(&mut buf.as_slice()).unwrap().1, StoredField::Scalar(s));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let grid = Grid::unit_cube(4).unwrap();
        let s = ScalarField::zeros(&grid);
        let mut buf = Vec::new();
        write_field(&mut buf, &grid, FieldRef::Scalar(&s)).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_field(&mut buf.as_slice()).is_err());
        assert!(read_field(&mut &b"NOTAFILE........"[..]).is_err());
    }
}
