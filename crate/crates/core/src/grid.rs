//! Lattice geometry.
//!
//! Nodes are addressed by 1-based `(x, y)` coordinates with `1 <= x <= width`
//! and `1 <= y <= height`, and stored row-major at index
//! `(y - 1) * width + (x - 1)`. Neighborhoods are king-move (Chebyshev)
//! shells truncated at the lattice boundary; nothing wraps around.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Returned by [`GridMap::distance_to_set`] when the set is empty.
pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub x: u32,
    pub y: u32,
}

impl NodeId {
    pub const fn new(x: u32, y: u32) -> Self {
        NodeId { x, y }
    }

    /// Chebyshev distance. Coordinates need not lie in any particular grid.
    pub fn chebyshev(self, other: NodeId) -> u32 {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Rectangular lattice together with its partition into areas.
///
/// Areas are 0-based internally (`0..areas`); file formats and CSV output
/// use 1-based area labels.
#[derive(Debug, Clone)]
pub struct GridMap {
    width: u32,
    height: u32,
    areas: usize,
    area_of: Vec<u16>,
}

impl GridMap {
    /// Partition into `areas` rectangular blocks laid out on a
    /// `rows x cols` tiling with `cols = ceil(sqrt(areas))`. Blocks past
    /// the last area index are merged into the last area.
    pub fn with_blocks(width: u32, height: u32, areas: usize) -> Result<Self> {
        check_dims(width, height, areas)?;
        let cols = (areas as f64).sqrt().ceil() as u32;
        let rows = (areas as u32).div_ceil(cols);
        let mut area_of = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            let by = (y as u64 * rows as u64 / height as u64) as u32;
            for x in 0..width {
                let bx = (x as u64 * cols as u64 / width as u64) as u32;
                let block = (by * cols + bx) as usize;
                area_of.push(block.min(areas - 1) as u16);
            }
        }
        Ok(GridMap {
            width,
            height,
            areas,
            area_of,
        })
    }

    /// Explicit assignment, one 1-based area label per node in row-major order.
    pub fn with_assignment(width: u32, height: u32, areas: usize, labels: &[u16]) -> Result<Self> {
        check_dims(width, height, areas)?;
        let expected = width as usize * height as usize;
        if labels.len() != expected {
            return Err(Error::Config(format!(
                "area assignment has {} entries, grid has {expected} nodes",
                labels.len()
            )));
        }
        let mut area_of = Vec::with_capacity(expected);
        for (idx, &label) in labels.iter().enumerate() {
            if label == 0 || label as usize > areas {
                return Err(Error::Config(format!(
                    "node index {idx} has area label {label}, expected 1..={areas}"
                )));
            }
            area_of.push(label - 1);
        }
        Ok(GridMap {
            width,
            height,
            areas,
            area_of,
        })
    }

    /// Reads an assignment file: `height` lines of `width` whitespace- or
    /// comma-separated 1-based area labels. Lines starting with `#` are skipped.
    pub fn from_assignment_file(
        path: &Path,
        width: u32,
        height: u32,
        areas: usize,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut labels = Vec::with_capacity(width as usize * height as usize);
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            for tok in line.split(|c: char| c == ',' || c.is_whitespace()) {
                if tok.is_empty() {
                    continue;
                }
                let label = tok.parse::<u16>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("bad area label {tok:?}: {e}"),
                })?;
                labels.push(label);
            }
        }
        Self::with_assignment(width, height, areas, &labels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.area_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.area_of.is_empty()
    }

    pub fn areas(&self) -> usize {
        self.areas
    }

    pub fn contains(&self, node: NodeId) -> bool {
        (1..=self.width).contains(&node.x) && (1..=self.height).contains(&node.y)
    }

    pub fn check(&self, node: NodeId) -> Result<()> {
        if self.contains(node) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "node {node} outside {}x{} grid",
                self.width, self.height
            )))
        }
    }

    /// Row-major index. The node must be inside the grid.
    #[inline]
    pub fn index(&self, node: NodeId) -> usize {
        debug_assert!(self.contains(node));
        (node.y as usize - 1) * self.width as usize + (node.x as usize - 1)
    }

    #[inline]
    pub fn node(&self, index: usize) -> NodeId {
        let w = self.width as usize;
        NodeId::new((index % w) as u32 + 1, (index / w) as u32 + 1)
    }

    #[inline]
    pub fn area_at(&self, index: usize) -> usize {
        self.area_of[index] as usize
    }

    pub fn area(&self, node: NodeId) -> usize {
        self.area_at(self.index(node))
    }

    pub fn area_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.areas];
        for &a in &self.area_of {
            sizes[a as usize] += 1;
        }
        sizes
    }

    /// Areas with no nodes assigned. Allowed, but usually a configuration slip.
    pub fn empty_areas(&self) -> Vec<usize> {
        self.area_sizes()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n == 0)
            .map(|(h, _)| h)
            .collect()
    }

    /// King-move neighbors of `node`: 3, 5 or 8 nodes depending on the boundary.
    pub fn neighbors1(&self, node: NodeId) -> Result<Vec<NodeId>> {
        self.k_neighbors(node, 1)
    }

    /// Nodes at Chebyshev distance exactly `k` from `node`, clipped to the grid.
    pub fn k_neighbors(&self, node: NodeId, k: u32) -> Result<Vec<NodeId>> {
        self.check(node)?;
        if k == 0 {
            return Err(Error::Domain("neighbor order k must be at least 1".into()));
        }
        let mut out = Vec::with_capacity(8 * k as usize);
        self.for_each_in_box(node, k, |j, _| {
            if node.chebyshev(j) == k {
                out.push(j);
            }
        });
        Ok(out)
    }

    pub fn distance(&self, i: NodeId, j: NodeId) -> Result<u32> {
        self.check(i)?;
        self.check(j)?;
        Ok(i.chebyshev(j))
    }

    /// Minimum distance from `node` to any member of `set`; [`UNREACHABLE`]
    /// when the set is empty.
    pub fn distance_to_set(&self, node: NodeId, set: &NodeSet) -> Result<u32> {
        self.check(node)?;
        if set.is_empty() {
            return Ok(UNREACHABLE);
        }
        let max_k = self.width.max(self.height);
        for k in 0..=max_k {
            if self.shell_hits(node, k, set) {
                return Ok(k);
            }
        }
        Ok(UNREACHABLE)
    }

    /// True when some member of `set` lies within distance `radius` of `node`.
    pub fn any_within(&self, node: NodeId, radius: u32, set: &NodeSet) -> bool {
        let mut hit = false;
        self.for_each_in_box(node, radius, |_, idx| hit |= set.contains(idx));
        hit
    }

    /// Number of members of `set` among the king-move neighbors of `index`.
    #[inline]
    pub fn burning_neighbors(&self, index: usize, set: &NodeSet) -> u32 {
        let node = self.node(index);
        let mut count = 0;
        self.for_each_in_box(node, 1, |_, j| {
            if j != index && set.contains(j) {
                count += 1;
            }
        });
        count
    }

    /// Calls `f(node, index)` for every in-grid node of the
    /// `(2r+1) x (2r+1)` box centred on `center`, row by row.
    #[inline]
    pub fn for_each_in_box(&self, center: NodeId, r: u32, mut f: impl FnMut(NodeId, usize)) {
        let x0 = center.x.saturating_sub(r).max(1);
        let x1 = center.x.saturating_add(r).min(self.width);
        let y0 = center.y.saturating_sub(r).max(1);
        let y1 = center.y.saturating_add(r).min(self.height);
        let w = self.width as usize;
        for y in y0..=y1 {
            let row = (y as usize - 1) * w;
            for x in x0..=x1 {
                f(NodeId::new(x, y), row + x as usize - 1);
            }
        }
    }

    fn shell_hits(&self, node: NodeId, k: u32, set: &NodeSet) -> bool {
        if k == 0 {
            return set.contains(self.index(node));
        }
        let mut hit = false;
        let x0 = node.x as i64 - k as i64;
        let x1 = node.x as i64 + k as i64;
        let y0 = node.y as i64 - k as i64;
        let y1 = node.y as i64 + k as i64;
        let mut probe = |x: i64, y: i64| {
            if x >= 1 && y >= 1 && x <= self.width as i64 && y <= self.height as i64 {
                let idx = (y as usize - 1) * self.width as usize + (x as usize - 1);
                hit |= set.contains(idx);
            }
        };
        for x in x0..=x1 {
            probe(x, y0);
            probe(x, y1);
        }
        for y in (y0 + 1)..y1 {
            probe(x0, y);
            probe(x1, y);
        }
        hit
    }
}

fn check_dims(width: u32, height: u32, areas: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Config(format!(
            "grid dimensions must be positive, got {width}x{height}"
        )));
    }
    if areas == 0 || areas > u16::MAX as usize {
        return Err(Error::Config(format!(
            "area count must be in 1..=65535, got {areas}"
        )));
    }
    Ok(())
}

/// Set of lattice nodes as a bitset over row-major indices.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct NodeSet {
    words: Vec<u64>,
    capacity: usize,
}

impl NodeSet {
    pub fn new(capacity: usize) -> Self {
        NodeSet {
            words: vec![0; capacity.div_ceil(64)],
            capacity,
        }
    }

    pub fn for_grid(grid: &GridMap) -> Self {
        Self::new(grid.len())
    }

    pub fn from_nodes(grid: &GridMap, nodes: impl IntoIterator<Item = NodeId>) -> Result<Self> {
        let mut set = Self::for_grid(grid);
        for node in nodes {
            grid.check(node)?;
            set.insert(grid.index(node));
        }
        Ok(set)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.words[index >> 6] >> (index & 63) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, index: usize) {
        self.words[index >> 6] |= 1 << (index & 63);
    }

    #[inline]
    pub fn remove(&mut self, index: usize) {
        self.words[index >> 6] &= !(1 << (index & 63));
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Overwrites word `k`; bits beyond the capacity are ignored.
    pub fn set_word(&mut self, k: usize, word: u64) {
        let tail = self.capacity - k * 64;
        self.words[k] = if tail < 64 {
            word & ((1u64 << tail) - 1)
        } else {
            word
        };
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + bit)
            })
        })
    }

    pub fn union_with(&mut self, other: &NodeSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &NodeSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn difference_with(&mut self, other: &NodeSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid10() -> GridMap {
        GridMap::with_blocks(10, 10, 1).unwrap()
    }

    fn sorted(mut v: Vec<NodeId>) -> Vec<NodeId> {
        v.sort();
        v
    }

    #[test]
    fn interior_node_has_eight_neighbors() {
        assert_eq!(grid10().neighbors1(NodeId::new(5, 5)).unwrap().len(), 8);
    }

    #[test]
    fn corner_and_edge_neighborhoods_are_truncated() {
        let g = grid10();
        assert_eq!(
            sorted(g.neighbors1(NodeId::new(1, 1)).unwrap()),
            vec![NodeId::new(1, 2), NodeId::new(2, 1), NodeId::new(2, 2)]
        );
        assert_eq!(g.neighbors1(NodeId::new(1, 5)).unwrap().len(), 5);
    }

    #[test]
    fn out_of_grid_node_is_a_domain_error() {
        let g = grid10();
        assert!(matches!(
            g.neighbors1(NodeId::new(0, 3)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            g.neighbors1(NodeId::new(11, 3)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn shells_have_8k_nodes_in_the_interior() {
        let g = GridMap::with_blocks(50, 50, 1).unwrap();
        assert_eq!(g.k_neighbors(NodeId::new(25, 25), 2).unwrap().len(), 16);
        assert_eq!(g.k_neighbors(NodeId::new(25, 25), 3).unwrap().len(), 24);
    }

    #[test]
    fn corner_shell_of_order_two() {
        // (1,3),(2,3),(3,3),(3,1),(3,2)
        assert_eq!(grid10().k_neighbors(NodeId::new(1, 1), 2).unwrap().len(), 5);
    }

    #[test]
    fn distances() {
        let g = grid10();
        let a = NodeId::new(1, 1);
        assert_eq!(g.distance(a, a).unwrap(), 0);
        assert_eq!(g.distance(a, NodeId::new(4, 2)).unwrap(), 3);
        assert_eq!(g.distance(NodeId::new(2, 2), NodeId::new(2, 5)).unwrap(), 3);
    }

    #[test]
    fn distance_to_sets() {
        let g = grid10();
        let a = NodeId::new(1, 1);
        let empty = NodeSet::for_grid(&g);
        assert_eq!(g.distance_to_set(a, &empty).unwrap(), UNREACHABLE);
        let u = NodeSet::from_nodes(&g, [NodeId::new(4, 1), NodeId::new(1, 5)]).unwrap();
        assert_eq!(g.distance_to_set(a, &u).unwrap(), 3);
        let with_a = NodeSet::from_nodes(&g, [a]).unwrap();
        assert_eq!(g.distance_to_set(a, &with_a).unwrap(), 0);
    }

    #[test]
    fn block_partition_covers_four_quadrants() {
        let g = GridMap::with_blocks(4, 4, 4).unwrap();
        assert_eq!(g.area(NodeId::new(1, 1)), 0);
        assert_eq!(g.area(NodeId::new(4, 1)), 1);
        assert_eq!(g.area(NodeId::new(1, 4)), 2);
        assert_eq!(g.area(NodeId::new(4, 4)), 3);
        assert_eq!(g.area_sizes(), vec![4; 4]);
        assert!(g.empty_areas().is_empty());
    }

    #[test]
    fn explicit_assignment_flags_empty_areas() {
        let labels = vec![1u16; 9];
        let g = GridMap::with_assignment(3, 3, 2, &labels).unwrap();
        assert_eq!(g.empty_areas(), vec![1]);
        assert!(GridMap::with_assignment(3, 3, 2, &[3u16; 9]).is_err());
        assert!(GridMap::with_assignment(3, 3, 2, &[1u16; 8]).is_err());
    }

    #[test]
    fn nodeset_ops() {
        let mut a = NodeSet::new(130);
        a.insert(0);
        a.insert(64);
        a.insert(129);
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![0, 64, 129]);
        let mut b = NodeSet::new(130);
        b.insert(64);
        let mut c = a.clone();
        c.intersect_with(&b);
        assert_eq!(c.len(), 1);
        assert!(b.is_subset(&a));
        a.difference_with(&b);
        assert!(!a.contains(64));
        assert_eq!(a.len(), 2);
    }
}
