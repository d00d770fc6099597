//! Procedural grayscale shapes (rectangles, crosses, blobs) in `[0, 1]`.

use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Rectangle,
    Cross,
    Blob,
}

/// One `side × side` image, flattened row-major.
pub fn shape_image(kind: ShapeKind, side: usize, rng: &mut SeededRng) -> Tensor {
    let mut img = vec![0.0; side * side];
    let intensity = rng.uniform_range(0.6, 1.0);
    match kind {
        ShapeKind::Rectangle => {
            let h = 2 + rng.below(side - 2);
            let w = 2 + rng.below(side - 2);
            let r0 = rng.below(side - h + 1);
            let c0 = rng.below(side - w + 1);
            for r in r0..r0 + h {
                for c in c0..c0 + w {
                    img[r * side + c] = intensity;
                }
            }
        }
        ShapeKind::Cross => {
            let row = 1 + rng.below(side - 2);
            let col = 1 + rng.below(side - 2);
            let thick = 1 + rng.below(2);
            for r in 0..side {
                for c in 0..side {
                    let on_row = r >= row && r < (row + thick).min(side);
                    let on_col = c >= col && c < (col + thick).min(side);
                    if on_row || on_col {
                        img[r * side + c] = intensity;
                    }
                }
            }
        }
        ShapeKind::Blob => {
            let cr = rng.uniform_range(1.5, side as f64 - 2.5);
            let cc = rng.uniform_range(1.5, side as f64 - 2.5);
            let width = rng.uniform_range(0.9, 2.0);
            for r in 0..side {
                for c in 0..side {
                    let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
                    img[r * side + c] = intensity * (-d2 / (2.0 * width * width)).exp();
                }
            }
        }
    }
    Tensor::vector(img)
}

/// `count` shapes cycling through the three kinds.
pub fn shapes_dataset(count: usize, side: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = SeededRng::new(seed);
    let kinds = [ShapeKind::Rectangle, ShapeKind::Cross, ShapeKind::Blob];
    (0..count)
        .map(|i| shape_image(kinds[i % 3], side, &mut rng))
        .collect()
}
