//! Anti-aliasing-free rasterization of scenes into 32x32x3 images.
//!
//! Shape membership tests use integer arithmetic on doubled pixel-center
//! coordinates, so rendering is bit-deterministic and every pixel is exactly
//! a background or object color.

use super::scene::{SceneSpec, Shape, CELL_SIDE, GRID_SIDE, IMAGE_SIDE};
use crate::tensor::Tensor;

/// True when cell-local pixel (r, c) lies inside the shape.
fn inside(shape: Shape, r: usize, c: usize) -> bool {
    let (r, c) = (r as i64, c as i64);
    let side = CELL_SIDE as i64; // 16
    match shape {
        // 10x10 block inset 3px from the cell border
        Shape::Square => (3..side - 3).contains(&r) && (3..side - 3).contains(&c),
        // radius-5 disc around the cell center, tested on doubled coords:
        // (r + 0.5 - 8)^2 + (c + 0.5 - 8)^2 <= 25
        Shape::Circle => {
            let dy = 2 * r + 1 - side;
            let dx = 2 * c + 1 - side;
            dy * dy + dx * dx <= 100
        }
        // isoceles wedge, apex at the top, 10 rows tall, base 10 px wide:
        // |2c + 1 - 16| <= r - 2 for r in 3..=12
        Shape::Triangle => {
            let half = 2 * c + 1 - side;
            (3..side - 3).contains(&r) && half.abs() <= r - 2
        }
    }
}

/// Rasterizes a scene into an `[IMAGE_SIDE, IMAGE_SIDE, 3]` tensor in [0, 1].
pub fn render(scene: &SceneSpec) -> Tensor {
    let bg = scene.background.rgb();
    let mut data = Vec::with_capacity(IMAGE_SIDE * IMAGE_SIDE * 3);
    for _ in 0..IMAGE_SIDE * IMAGE_SIDE {
        data.extend_from_slice(&bg);
    }
    for obj in &scene.objects {
        let cell_row = (obj.cell / GRID_SIDE) * CELL_SIDE;
        let cell_col = (obj.cell % GRID_SIDE) * CELL_SIDE;
        let rgb = obj.color.rgb();
        for r in 0..CELL_SIDE {
            for c in 0..CELL_SIDE {
                if inside(obj.shape, r, c) {
                    let px = ((cell_row + r) * IMAGE_SIDE + cell_col + c) * 3;
                    data[px..px + 3].copy_from_slice(&rgb);
                }
            }
        }
    }
    Tensor::new(alloc::vec![IMAGE_SIDE, IMAGE_SIDE, 3], data).expect("fixed shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::scene::{BackgroundColor, ObjectColor, SceneObject};
    use alloc::vec::Vec;

    fn scene(objects: Vec<SceneObject>, background: BackgroundColor) -> SceneSpec {
        SceneSpec {
            objects,
            background,
            seed: 0,
        }
    }

    #[test]
    fn empty_scene_is_constant_background() {
        let img = render(&scene(Vec::new(), BackgroundColor::Gray));
        assert!(img.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn red_square_pixels_exactly_within_cell_bounds() {
        let img = render(&scene(
            alloc::vec![SceneObject {
                shape: Shape::Square,
                color: ObjectColor::Red,
                cell: 3, // bottom-right cell: rows 16.., cols 16..
            }],
            BackgroundColor::White,
        ));
        let mut red_pixels = 0;
        for r in 0..IMAGE_SIDE {
            for c in 0..IMAGE_SIDE {
                let px = (r * IMAGE_SIDE + c) * 3;
                let rgb = &img.data()[px..px + 3];
                if rgb == [1.0, 0.0, 0.0] {
                    red_pixels += 1;
                    assert!((16..32).contains(&r) && (16..32).contains(&c));
                    assert!((19..29).contains(&r) && (19..29).contains(&c));
                } else {
                    assert_eq!(rgb, [1.0, 1.0, 1.0]);
                }
            }
        }
        assert_eq!(red_pixels, 100); // 10x10 block
    }

    #[test]
    fn shapes_have_distinct_masks() {
        let count = |shape: Shape| {
            (0..CELL_SIDE)
                .flat_map(|r| (0..CELL_SIDE).map(move |c| (r, c)))
                .filter(|&(r, c)| inside(shape, r, c))
                .count()
        };
        let (sq, ci, tr) = (count(Shape::Square), count(Shape::Circle), count(Shape::Triangle));
        assert_eq!(sq, 100);
        assert!(ci < sq && tr < sq, "circle {ci}, triangle {tr}");
        assert!(ci > 50 && tr > 20);
    }

    #[test]
    fn render_generate_roundtrip_is_deterministic() {
        let a = render(&crate::data::generate_scene(77));
        let b = render(&crate::data::generate_scene(77));
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
