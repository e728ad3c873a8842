use super::BinaryMask;
use crate::error::{Error, Result};

/// Splits `[start, start + extent)` into `ceil(extent / cell)` equal bands, or
/// one band when the extent fits in a cell.
fn bands(start: usize, extent: usize, cell: usize) -> Vec<(usize, usize)> {
    let n = if extent > cell {
        extent.div_ceil(cell)
    } else {
        1
    };
    (0..n)
        .map(|i| (start + i * extent / n, start + (i + 1) * extent / n))
        .collect()
}

/// Cuts a component along whichever axes its bounding box exceeds
/// `cell_size`, using equally spaced cuts. Empty cells are dropped; the pieces
/// are disjoint and their union is the input.
pub fn partition_component(component: &BinaryMask, cell_size: usize) -> Result<Vec<BinaryMask>> {
    if cell_size == 0 {
        return Err(Error::invalid("cell_size must be >= 1"));
    }
    let Some((x0, y0, x1, y1)) = component.bounding_box() else {
        return Ok(Vec::new());
    };
    let cols = bands(x0, x1 - x0 + 1, cell_size);
    let rows = bands(y0, y1 - y0 + 1, cell_size);
    if cols.len() == 1 && rows.len() == 1 {
        return Ok(vec![component.clone()]);
    }
    let mut pieces = Vec::with_capacity(cols.len() * rows.len());
    for &(ry0, ry1) in &rows {
        for &(cx0, cx1) in &cols {
            let piece = BinaryMask::from_fn(component.width(), component.height(), |x, y| {
                (cx0..cx1).contains(&x) && (ry0..ry1).contains(&y) && component.get(x, y)
            });
            if !piece.is_empty() {
                pieces.push(piece);
            }
        }
    }
    Ok(pieces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(w: usize, h: usize, bw: usize, bh: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            (5..5 + bw).contains(&x) && (7..7 + bh).contains(&y)
        })
    }

    #[test]
    fn small_component_is_not_split() {
        let m = block(64, 64, 30, 20);
        assert_eq!(partition_component(&m, 64).unwrap(), vec![m]);
    }

    #[test]
    fn wide_component_gets_vertical_cuts() {
        let m = block(200, 40, 150, 20);
        let pieces = partition_component(&m, 64).unwrap();
        assert_eq!(pieces.len(), 3);
        for p in &pieces {
            let (_, py0, _, py1) = p.bounding_box().unwrap();
            assert_eq!((py0, py1), (7, 26));
        }
    }

    #[test]
    fn large_component_gets_grid() {
        let m = block(200, 200, 150, 130);
        let pieces = partition_component(&m, 64).unwrap();
        assert_eq!(pieces.len(), 9);
        assert_eq!(
            pieces.iter().map(BinaryMask::count).sum::<usize>(),
            m.count()
        );
    }

    #[test]
    fn empty_input_yields_nothing() {
        assert!(partition_component(&BinaryMask::new(3, 3), 2)
            .unwrap()
            .is_empty());
        assert!(partition_component(&BinaryMask::new(3, 3), 0).is_err());
    }
}
