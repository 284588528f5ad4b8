use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::DataConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
    Cross,
    Ring,
}

impl Shape {
    pub const ALL: [Shape; 5] = [
        Shape::Circle,
        Shape::Square,
        Shape::Triangle,
        Shape::Cross,
        Shape::Ring,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
            Shape::Cross => "cross",
            Shape::Ring => "ring",
        }
    }

    pub fn from_name(name: &str) -> Option<Shape> {
        Shape::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Category id of the shape.
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Purple,
}

impl Color {
    pub const ALL: [Color; 5] = [Color::Red, Color::Green, Color::Blue, Color::Yellow, Color::Purple];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Purple => "purple",
        }
    }

    pub fn from_name(name: &str) -> Option<Color> {
        Color::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [220, 40, 40],
            Color::Green => [40, 190, 70],
            Color::Blue => [40, 90, 230],
            Color::Yellow => [235, 215, 40],
            Color::Purple => [160, 60, 200],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub color: Color,
    pub cx: i64,
    pub cy: i64,
    pub radius: u32,
}

impl SceneObject {
    /// Hard-edge coverage test at the center of pixel `(x, y)`, in doubled
    /// integer coordinates so the result is exact on every platform.
    pub fn covers(&self, x: usize, y: usize) -> bool {
        let dx = 2 * x as i64 + 1 - 2 * self.cx;
        let dy = 2 * y as i64 + 1 - 2 * self.cy;
        let r = 2 * self.radius as i64;
        let (ax, ay) = (dx.abs(), dy.abs());
        match self.shape {
            Shape::Circle => dx * dx + dy * dy <= r * r,
            Shape::Ring => {
                let d2 = dx * dx + dy * dy;
                d2 <= r * r && 4 * d2 >= r * r
            }
            Shape::Square => 10 * ax <= 7 * r && 10 * ay <= 7 * r,
            // upward triangle inscribed in the radius circle
            Shape::Triangle => dy >= -r && 2 * dy <= r && 26 * ax <= 15 * (dy + r),
            Shape::Cross => {
                (10 * ax <= 9 * r && 3 * ay <= r) || (10 * ay <= 9 * r && 3 * ax <= r)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub objects: Vec<SceneObject>,
    pub canvas: usize,
    pub background: [u8; 3],
}

/// Draw a scene: 1..=max_objects objects with unique (shape, color) pairs
/// and pairwise center distance at least the sum of radii.
pub fn generate_scene(seed: u64, config: &DataConfig) -> Result<SceneSpec> {
    if config.max_objects == 0 {
        return Err(Error::input("max_objects must be at least 1"));
    }
    if config.min_radius < 2 || config.max_radius < config.min_radius {
        return Err(Error::input("invalid radius range"));
    }
    let canvas = config.canvas as i64;
    if canvas < 2 * config.max_radius as i64 + 2 {
        return Err(Error::input("canvas too small for max_radius"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wanted = rng.random_range(1..=config.max_objects);
    let gray = rng.random_range(16u8..=64);
    let mut objects: Vec<SceneObject> = Vec::with_capacity(wanted);
    'place: for _ in 0..wanted {
        for _attempt in 0..200 {
            let radius = rng.random_range(config.min_radius..=config.max_radius);
            let r = radius as i64;
            let cx = rng.random_range(r..=canvas - r);
            let cy = rng.random_range(r..=canvas - r);
            let clear = objects.iter().all(|o| {
                let (dx, dy) = (o.cx - cx, o.cy - cy);
                let min = o.radius as i64 + r;
                dx * dx + dy * dy >= min * min
            });
            if !clear {
                continue;
            }
            let free: Vec<(Shape, Color)> = Shape::ALL
                .iter()
                .flat_map(|&s| Color::ALL.iter().map(move |&c| (s, c)))
                .filter(|&(s, c)| !objects.iter().any(|o| o.shape == s && o.color == c))
                .collect();
            let (shape, color) = free[rng.random_range(0..free.len())];
            objects.push(SceneObject {
                shape,
                color,
                cx,
                cy,
                radius,
            });
            continue 'place;
        }
        break;
    }
    Ok(SceneSpec {
        objects,
        canvas: config.canvas,
        background: [gray, gray, gray],
    })
}

/// Render `scene` to 8-bit RGB and a segment-id map; object `k` of the
/// list gets segment id `k + 1`, uncovered pixels keep id 0.
pub fn rasterize(scene: &SceneSpec) -> (Vec<u8>, Vec<u16>) {
    let n = scene.canvas;
    let mut rgb = Vec::with_capacity(n * n * 3);
    let mut ids = vec![0u16; n * n];
    for y in 0..n {
        for x in 0..n {
            let hit = scene.objects.iter().position(|o| o.covers(x, y));
            let color = match hit {
                Some(k) => {
                    ids[y * n + x] = k as u16 + 1;
                    scene.objects[k].color.rgb()
                }
                None => scene.background,
            };
            rgb.extend_from_slice(&color);
        }
    }
    (rgb, ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(max_objects: usize) -> DataConfig {
        DataConfig {
            max_objects,
            ..DataConfig::default()
        }
    }

    #[test]
    fn scenes_respect_invariants() {
        for seed in 0..300 {
            let s = generate_scene(seed, &config(4)).unwrap();
            assert!((1..=4).contains(&s.objects.len()));
            for (i, a) in s.objects.iter().enumerate() {
                let r = a.radius as i64;
                assert!(a.cx >= r && a.cx <= 64 - r && a.cy >= r && a.cy <= 64 - r);
                for b in &s.objects[i + 1..] {
                    let min = (a.radius + b.radius) as i64;
                    assert!((a.cx - b.cx).pow(2) + (a.cy - b.cy).pow(2) >= min * min);
                    assert!(!(a.shape == b.shape && a.color == b.color));
                }
            }
        }
    }

    #[test]
    fn single_object_bound() {
        for seed in 0..50 {
            assert_eq!(generate_scene(seed, &config(1)).unwrap().objects.len(), 1);
        }
    }

    #[test]
    fn zero_objects_is_an_input_error() {
        assert!(matches!(generate_scene(0, &config(0)), Err(Error::Input(_))));
    }

    #[test]
    fn shapes_stay_inside_their_radius_and_do_not_overlap() {
        for seed in 0..100 {
            let s = generate_scene(seed, &config(4)).unwrap();
            for y in 0..64 {
                for x in 0..64 {
                    let hits = s.objects.iter().filter(|o| o.covers(x, y)).count();
                    assert!(hits <= 1);
                }
            }
            for o in &s.objects {
                let covered = (0..64usize)
                    .flat_map(|y| (0..64usize).map(move |x| (x, y)))
                    .filter(|&(x, y)| o.covers(x, y))
                    .count();
                assert!(covered > 0);
            }
        }
    }

    #[test]
    fn segment_union_equals_object_pixels() {
        let s = generate_scene(7, &config(4)).unwrap();
        let (rgb, ids) = rasterize(&s);
        for (p, &id) in ids.iter().enumerate() {
            let (x, y) = (p % 64, p / 64);
            let any = s.objects.iter().any(|o| o.covers(x, y));
            assert_eq!(id != 0, any);
            if id == 0 {
                assert_eq!(&rgb[p * 3..p * 3 + 3], &s.background);
            }
        }
    }
}
