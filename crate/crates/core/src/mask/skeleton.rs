//! Two-subiteration parallel thinning (Guo & Hall, 1989, algorithm A1).
//!
//! Neighbour bits, counter-clockwise from east:
//!
//! ```text
//!   NW(3) N(2) NE(1)
//!   W(4)   P   E(0)
//!   SW(5) S(6) SE(7)
//! ```
//!
//! A pixel is deleted in a subiteration when
//! * exactly one 8-connected run of foreground borders it (`C(P) = 1`),
//! * `2 <= min(N1, N2) <= 3`, which protects endpoints and spurs,
//! * the subiteration-specific directional condition holds.
//!
//! Deletion is simultaneous within a subiteration. Only pixels with a
//! background 4-neighbour can satisfy `C(P) = 1`, so each pass only visits
//! the current border.

use std::sync::OnceLock;

use super::BinaryMask;

fn bit(n: u8, i: usize) -> bool {
    n >> (i % 8) & 1 == 1
}

fn deletable(n: u8, second: bool) -> bool {
    let crossing = [0, 2, 4, 6]
        .iter()
        .filter(|&&i| !bit(n, i) && (bit(n, i + 1) || bit(n, i + 2)))
        .count();
    if crossing != 1 {
        return false;
    }
    let (mut n1, mut n2) = (0, 0);
    for k in [1, 3, 5, 7] {
        n1 += (bit(n, k) || bit(n, k - 1)) as u32;
        n2 += (bit(n, k) || bit(n, k + 1)) as u32;
    }
    if !(2..=3).contains(&n1.min(n2)) {
        return false;
    }
    if second {
        !((bit(n, 5) || bit(n, 6) || !bit(n, 3)) && bit(n, 4))
    } else {
        !((bit(n, 1) || bit(n, 2) || !bit(n, 7)) && bit(n, 0))
    }
}

fn luts() -> &'static [[bool; 256]; 2] {
    static LUTS: OnceLock<[[bool; 256]; 2]> = OnceLock::new();
    LUTS.get_or_init(|| {
        let mut t = [[false; 256]; 2];
        for n in 0..=255u8 {
            t[0][n as usize] = deletable(n, false);
            t[1][n as usize] = deletable(n, true);
        }
        t
    })
}

/// Thins the mask to a one-pixel-wide skeleton, preserving the number of
/// 8-connected components. Pixels outside the canvas count as background.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    let pw = w + 2;
    let mut grid = vec![0u8; pw * (h + 2)];
    for (x, y) in mask.foreground() {
        grid[(y + 1) * pw + x + 1] = 1;
    }
    // E, NE, N, NW, W, SW, S, SE as offsets into the padded grid.
    let pwi = pw as isize;
    let offs: [isize; 8] = [1, 1 - pwi, -pwi, -1 - pwi, -1, pwi - 1, pwi, pwi + 1];
    let code = |g: &[u8], i: usize| -> u8 {
        offs.iter().enumerate().fold(0u8, |acc, (b, &o)| {
            acc | (g[(i as isize + o) as usize] << b)
        })
    };
    let has_bg4 =
        |g: &[u8], i: usize| g[i + 1] == 0 || g[i - 1] == 0 || g[i + pw] == 0 || g[i - pw] == 0;

    let mut queued = vec![false; grid.len()];
    let mut border: Vec<usize> = Vec::new();
    for i in 0..grid.len() {
        if grid[i] == 1 && has_bg4(&grid, i) {
            border.push(i);
            queued[i] = true;
        }
    }

    let tables = luts();
    let mut doomed = Vec::new();
    loop {
        let mut changed = false;
        for table in tables {
            doomed.clear();
            doomed.extend(
                border
                    .iter()
                    .copied()
                    .filter(|&i| grid[i] == 1 && table[code(&grid, i) as usize]),
            );
            if doomed.is_empty() {
                continue;
            }
            changed = true;
            for &i in &doomed {
                grid[i] = 0;
            }
            let mut next: Vec<usize> = Vec::with_capacity(border.len() + doomed.len());
            for &i in &border {
                queued[i] = false;
            }
            for &i in &border {
                if grid[i] == 1 && !queued[i] {
                    queued[i] = true;
                    next.push(i);
                }
            }
            for &i in &doomed {
                for n in [i + 1, i - 1, i + pw, i - pw] {
                    if grid[n] == 1 && !queued[n] {
                        queued[n] = true;
                        next.push(n);
                    }
                }
            }
            // Keep the visiting order independent of deletion history.
            next.sort_unstable();
            border = next;
        }
        if !changed {
            break;
        }
    }

    BinaryMask::from_fn(w, h, |x, y| grid[(y + 1) * pw + x + 1] == 1)
}
