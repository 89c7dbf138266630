//! Connected-component labelling of binary masks.

use crate::error::{Error, Result};
use crate::image::BinaryMask;

/// Which neighbours of a pixel count as adjacent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Connectivity {
    /// N, S, E and W neighbours.
    Four,
    /// All eight neighbours.
    #[default]
    Eight,
}

impl Connectivity {
    pub fn from_number(n: u32) -> Option<Self> {
        match n {
            4 => Some(Self::Four),
            8 => Some(Self::Eight),
            _ => None,
        }
    }
}

/// Component labels, `0` for unset pixels and `1..=K` in first-encounter
/// raster order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentLabels {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    /// Index `k` holds the size of label `k`; index 0 is unused and zero.
    sizes: Vec<usize>,
}

impl ComponentLabels {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_at(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn num_components(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn component_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn mask_of(&self, label: u32) -> BinaryMask {
        let bits = self.labels.iter().map(|&l| l == label).collect();
        BinaryMask::from_vec(self.width, self.height, bits).expect("dimensions carried over")
    }

    /// Label of the largest component; ties go to the smallest label.
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<(u32, usize)> = None;
        for (label, &size) in self.sizes.iter().enumerate().skip(1) {
            if best.is_none_or(|(_, s)| size > s) {
                best = Some((label as u32, size));
            }
        }
        best.map(|(l, _)| l)
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass union-find labelling.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabels {
    let (w, h) = mask.dims();
    let bits = mask.bits();
    let mut provisional = vec![0u32; w * h];
    let mut sets = DisjointSet::new();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !bits[i] {
                continue;
            }
            // Already-visited neighbours: W and N, plus NW and NE for 8-connectivity.
            let mut neighbours = [0u32; 4];
            let mut n = 0;
            let mut push = |l: u32| {
                if l != 0 {
                    neighbours[n] = l;
                    n += 1;
                }
            };
            if x > 0 {
                push(provisional[i - 1]);
            }
            if y > 0 {
                push(provisional[i - w]);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        push(provisional[i - w - 1]);
                    }
                    if x + 1 < w {
                        push(provisional[i - w + 1]);
                    }
                }
            }
            provisional[i] = if n == 0 {
                sets.make()
            } else {
                let first = neighbours[0];
                for &other in &neighbours[1..n] {
                    sets.union(first, other);
                }
                first
            };
        }
    }

    // Relabel roots in raster order of first encounter.
    let mut final_of_root = vec![0u32; sets.parent.len()];
    let mut sizes = vec![0usize];
    let mut labels = vec![0u32; w * h];
    for i in 0..w * h {
        let p = provisional[i];
        if p == 0 {
            continue;
        }
        let root = sets.find(p) as usize;
        if final_of_root[root] == 0 {
            sizes.push(0);
            final_of_root[root] = (sizes.len() - 1) as u32;
        }
        let l = final_of_root[root];
        labels[i] = l;
        sizes[l as usize] += 1;
    }

    ComponentLabels {
        width: w,
        height: h,
        labels,
        sizes,
    }
}

/// Mask of the largest connected component (earliest in raster order on ties).
pub fn largest_component(mask: &BinaryMask, connectivity: Connectivity) -> Result<BinaryMask> {
    let comps = label_components(mask, connectivity);
    comps
        .largest()
        .map(|l| comps.mask_of(l))
        .ok_or(Error::EmptyMask)
}

/// `mask \ component`, requiring `component ⊆ mask`.
pub fn remove_component(mask: &BinaryMask, component: &BinaryMask) -> Result<BinaryMask> {
    if mask.dims() != component.dims() {
        return Err(Error::DimensionMismatch {
            expected: mask.dims(),
            actual: component.dims(),
        });
    }
    if !component.is_subset_of(mask) {
        return Err(Error::SubsetViolation);
    }
    mask.difference(component)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        BinaryMask::from_fn(w, h, |x, y| rows[y].as_bytes()[x] == b'#')
    }

    #[test]
    fn diagonal_pixels() {
        let m = mask(&["#.", ".#"]);
        assert_eq!(label_components(&m, Connectivity::Eight).num_components(), 1);
        assert_eq!(label_components(&m, Connectivity::Four).num_components(), 2);
    }

    #[test]
    fn empty_mask() {
        let m = BinaryMask::new(5, 5);
        assert_eq!(label_components(&m, Connectivity::Eight).num_components(), 0);
        assert!(matches!(largest_component(&m, Connectivity::Eight), Err(Error::EmptyMask)));
    }

    #[test]
    fn u_shape_merges_and_raster_order() {
        let m = mask(&["#.#..#", "#.#..#", "###..."]);
        let c = label_components(&m, Connectivity::Four);
        assert_eq!(c.num_components(), 2);
        assert_eq!(c.label_at(0, 0), 1);
        assert_eq!(c.label_at(2, 0), 1);
        assert_eq!(c.label_at(5, 0), 2);
        assert_eq!(c.component_sizes(), &[0, 7, 2]);
    }

    #[test]
    fn largest_picks_bigger_blob_and_breaks_ties_early() {
        let m = mask(&["###.....", "........", "....####", "......#."]);
        let big = largest_component(&m, Connectivity::Eight).unwrap();
        assert_eq!(big.count(), 5);
        assert!(big.get(4, 2));

        let tie = mask(&["##..##"]);
        let first = largest_component(&tie, Connectivity::Eight).unwrap();
        assert!(first.get(0, 0) && !first.get(4, 0));
    }

    #[test]
    fn remove_component_cases() {
        let m = mask(&["##.", "..#"]);
        let single = mask(&["##.", "..#"]);
        let largest = largest_component(&single, Connectivity::Eight).unwrap();
        assert!(remove_component(&single, &largest).unwrap().is_empty());
        assert_eq!(remove_component(&m, &BinaryMask::new(3, 2)).unwrap(), m);
        let outside = mask(&["..#", "..."]);
        assert!(matches!(remove_component(&m, &outside), Err(Error::SubsetViolation)));
    }
}
