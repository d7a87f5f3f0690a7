use std::collections::BTreeMap;

use super::{GeomError, TriangleMesh};

/// Closed loops of boundary edges (edges with one incident face), each following
/// face orientation and starting at its smallest vertex index. Sorted by
/// descending length; equal lengths keep ascending start vertex.
pub fn boundary_loops(mesh: &TriangleMesh) -> Result<Vec<Vec<usize>>, GeomError> {
    let mut incidence: BTreeMap<(usize, usize), (u32, (usize, usize))> = BTreeMap::new();
    for f in &mesh.faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            let e = incidence.entry((a.min(b), a.max(b))).or_insert((0, (a, b)));
            e.0 += 1;
            if e.0 > 2 {
                return Err(GeomError::NonManifold(a.min(b), a.max(b)));
            }
        }
    }
    // outgoing boundary half-edges per vertex
    let mut next: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (count, (a, b)) in incidence.values() {
        if *count == 1 {
            next.entry(*a).or_default().push(*b);
        }
    }
    for v in next.values_mut() {
        v.sort_unstable();
    }
    let mut loops = Vec::new();
    loop {
        let Some((&start, _)) = next.iter().find(|(_, outs)| !outs.is_empty()) else {
            break;
        };
        let mut cycle = vec![start];
        let mut cur = start;
        loop {
            let outs = next.get_mut(&cur).expect("boundary vertex");
            if outs.is_empty() {
                // open chain, which a consistently oriented manifold cannot produce
                return Err(GeomError::NonManifold(cur, cur));
            }
            let nxt = outs.remove(0);
            if nxt == start {
                break;
            }
            cycle.push(nxt);
            cur = nxt;
        }
        loops.push(cycle);
    }
    loops.sort_by(|a, b| b.len().cmp(&a.len()));
    Ok(loops)
}
