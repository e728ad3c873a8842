//! Synthetic scenes for tests, benchmarks and demos: random multi-class
//! label maps, matching RGB images, and squiggles drawn inside each class.

use rand::Rng;

use crate::label::LabelMask;
use crate::mask::{connected_components, distance_transform, Connectivity, Point};
use crate::nn::Tensor;
use crate::signal::Squiggle;

/// Overlapping random ellipses over background; later ellipses win.
pub fn random_label_map(
    width: usize,
    height: usize,
    classes: u8,
    blobs: usize,
    rng: &mut impl Rng,
) -> LabelMask {
    let mut labels = LabelMask::new(width, height);
    let short = width.min(height) as f64;
    for _ in 0..blobs {
        let class = rng.random_range(1..=classes.max(1));
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let rx = rng.random_range(0.08..0.35) * short;
        let ry = rng.random_range(0.08..0.35) * short;
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let (s, c) = theta.sin_cos();
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let u = (dx * c + dy * s) / rx;
                let v = (-dx * s + dy * c) / ry;
                if u * u + v * v <= 1.0 {
                    labels.set(x, y, class);
                }
            }
        }
    }
    labels
}

/// A colour per class plus uniform noise, as a `(3, H, W)` tensor.
pub fn scene_image(labels: &LabelMask, rng: &mut impl Rng) -> Tensor {
    const COLORS: [[f32; 3]; 6] = [
        [0.95, 0.93, 0.95],
        [0.55, 0.20, 0.45],
        [0.90, 0.55, 0.70],
        [0.25, 0.20, 0.55],
        [0.75, 0.65, 0.75],
        [0.60, 0.40, 0.60],
    ];
    let (w, h) = labels.dims();
    let n = w * h;
    let mut data = vec![0.0f32; 3 * n];
    for (i, &l) in labels.labels().iter().enumerate() {
        let base = COLORS[l as usize % COLORS.len()];
        for k in 0..3 {
            data[k * n + i] = (base[k] + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0);
        }
    }
    Tensor::from_vec(&[3, h, w], data).expect("sized from the label map")
}

/// One stroke per class, through the deepest pixel of its largest
/// component. The swept disk always stays inside that component.
pub fn squiggles_for(labels: &LabelMask) -> Vec<Squiggle> {
    let mut out = Vec::new();
    for class in labels.classes() {
        let mask = labels.class_mask(class);
        let cc = connected_components(&mask, Connectivity::Eight);
        let sizes = cc.sizes();
        let biggest = (1..=cc.count() as u32)
            .max_by_key(|&id| (sizes[id as usize - 1], std::cmp::Reverse(id)))
            .expect("class is present");
        let dist = distance_transform(&mask);
        let (w, _) = mask.dims();
        let (best, depth) = cc
            .labels()
            .iter()
            .zip(dist.values())
            .enumerate()
            .filter(|(_, (&id, _))| id == biggest)
            .map(|(i, (_, &d))| (i, d))
            .fold(
                (0, f64::MIN),
                |acc, (i, d)| if d > acc.1 { (i, d) } else { acc },
            );
        let (x, y) = ((best % w) as f64, (best / w) as f64);
        let squiggle = if depth >= 3.0 {
            let reach = depth.floor() - 2.0;
            Squiggle::new(
                vec![
                    Point::new(x - reach, y),
                    Point::new(x, y),
                    Point::new(x + reach, y),
                ],
                class,
                1.0,
            )
        } else if depth >= 2.0 {
            Squiggle::new(vec![Point::new(x, y)], class, 1.0)
        } else {
            Squiggle::new(vec![Point::new(x, y)], class, 0.5)
        };
        out.push(squiggle.expect("valid stroke"));
    }
    out
}
