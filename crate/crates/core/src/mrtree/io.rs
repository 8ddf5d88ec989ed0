//! Plain-text dumps of leaves and flattened fields.

use std::io::{BufRead, Write};

use super::Tree;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, NodeKey};
use crate::state::{CellState, Field};

pub const LEAF_DUMP_HEADER: &str = "level,i,j,x_center,y_center,v,u_e,w";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafRecord {
    pub key: NodeKey,
    pub center: [f64; 2],
    pub value: CellState,
}

pub fn leaf_records(tree: &Tree) -> Vec<LeafRecord> {
    tree.leaves()
        .into_iter()
        .map(|k| {
            let (x, y) = tree.grid().center(k);
            LeafRecord { key: k, center: [x, y], value: tree.value(k).unwrap() }
        })
        .collect()
}

pub fn write_leaf_dump<W: Write>(mut w: W, records: &[LeafRecord]) -> std::io::Result<()> {
    writeln!(w, "{LEAF_DUMP_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{:e},{:e},{:e},{:e},{:e}",
            r.key.level, r.key.i, r.key.j, r.center[0], r.center[1], r.value.v, r.value.ue, r.value.w
        )?;
    }
    Ok(())
}

pub fn read_leaf_dump<R: BufRead>(r: R) -> Result<Vec<LeafRecord>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Config(format!("leaf dump: {e}")))?;
        if n == 0 {
            if line.trim() != LEAF_DUMP_HEADER {
                return Err(Error::Config(format!("leaf dump: unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(Error::Config(format!("leaf dump line {}: expected 8 columns", n + 1)));
        }
        let bad = |c: &str| Error::Config(format!("leaf dump line {}: cannot parse {c:?}", n + 1));
        let int = |c: &str| c.trim().parse::<i64>().map_err(|_| bad(c));
        let float = |c: &str| c.trim().parse::<f64>().map_err(|_| bad(c));
        out.push(LeafRecord {
            key: NodeKey::new(int(cols[0])? as u8, int(cols[1])? as i32, int(cols[2])? as i32),
            center: [float(cols[3])?, float(cols[4])?],
            value: CellState::new(float(cols[5])?, float(cols[6])?, float(cols[7])?),
        });
    }
    Ok(out)
}

/// `i,j,value` for one field of a row-major finest-level array.
pub fn write_flattened<W: Write>(mut w: W, level: u8, values: &[CellState], field: Field) -> std::io::Result<()> {
    let n = GridSpec::cells_per_side(level) as usize;
    writeln!(w, "i,j,value")?;
    for j in 0..n {
        for i in 0..n {
            writeln!(w, "{i},{j},{:e}", values[j * n + i].get(field))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mrtree::MrConfig;
    use crate::state::FieldMask;

    #[test]
    fn leaf_dump_round_trips() {
        let g = GridSpec::new(2.0, 3).unwrap();
        let mut t = Tree::root(g, MrConfig::new(0.1), FieldMask::BIDOMAIN, CellState::new(0.25, -1.5e-7, 3.0));
        t.refine_node(NodeKey::ROOT);
        let recs = leaf_records(&t);
        let mut buf = Vec::new();
        write_leaf_dump(&mut buf, &recs).unwrap();
        let back = read_leaf_dump(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
        assert!(read_leaf_dump("x,y\n".as_bytes()).is_err());
    }

    #[test]
    fn flattened_layout() {
        let vals: Vec<CellState> = (0..4).map(|k| CellState::splat(k as f64)).collect();
        let mut buf = Vec::new();
        write_flattened(&mut buf, 1, &vals, Field::V).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().nth(2).unwrap(), "1,0,1e0");
        assert_eq!(s.lines().count(), 5);
    }
}
