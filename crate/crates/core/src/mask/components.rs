use super::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// Per-pixel component ids; `0` is background, components are `1..=count`
/// numbered in raster order of their first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabels {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: usize,
}

impl ComponentLabels {
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn component_mask(&self, id: u32) -> BinaryMask {
        BinaryMask::from_bits(
            self.width,
            self.height,
            self.labels.iter().map(|&l| l == id).collect(),
        )
        .expect("labels sized to the source mask")
    }

    /// One mask per component, in id order.
    pub fn masks(&self) -> Vec<BinaryMask> {
        (1..=self.count as u32)
            .map(|id| self.component_mask(id))
            .collect()
    }

    /// Pixel count of each component, indexed by `id - 1`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in &self.labels {
            if l > 0 {
                sizes[l as usize - 1] += 1;
            }
        }
        sizes
    }
}

pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabels {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (x, y) = ((idx % w) as isize, (idx / w) as isize);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if !mask.get_or_bg(nx, ny) {
                    continue;
                }
                let n = ny as usize * w + nx as usize;
                if labels[n] == 0 {
                    labels[n] = next;
                    stack.push(n);
                }
            }
        }
    }
    ComponentLabels {
        width: w,
        height: h,
        labels,
        count: next as usize,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mask_has_no_components() {
        let cc = connected_components(&BinaryMask::new(4, 4), Connectivity::Eight);
        assert_eq!(cc.count(), 0);
    }

    #[test]
    fn disjoint_singletons() {
        let mut m = BinaryMask::new(4, 4);
        m.set(0, 0, true);
        m.set(3, 3, true);
        assert_eq!(connected_components(&m, Connectivity::Eight).count(), 2);
    }

    #[test]
    fn diagonal_pair_depends_on_connectivity() {
        let mut m = BinaryMask::new(2, 2);
        m.set(0, 0, true);
        m.set(1, 1, true);
        assert_eq!(connected_components(&m, Connectivity::Eight).count(), 1);
        assert_eq!(connected_components(&m, Connectivity::Four).count(), 2);
    }

    #[test]
    fn ids_are_contiguous_and_sizes_add_up() {
        let m = BinaryMask::from_ascii(&["##..#", "....#", "#.#..", "#...#"]);
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(cc.count(), 5);
        assert_eq!(cc.sizes().iter().sum::<usize>(), m.count());
        assert_eq!(cc.get(0, 0), 1);
        assert_eq!(cc.get(4, 0), 2);
        let union = cc
            .masks()
            .iter()
            .fold(BinaryMask::new(5, 4), |acc, c| acc.union(c));
        assert_eq!(union, m);
    }
}
