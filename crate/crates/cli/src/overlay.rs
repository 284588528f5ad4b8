use image::{Rgb, RgbImage};

/// Fixed colors keyed by label, cycled for labels above eight.
pub const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

/// Blend a label map given at `stride` over `image`; label 0 is left as is.
pub fn render(image: &RgbImage, labels: &[u32], stride: usize) -> RgbImage {
    let (w, h) = image.dimensions();
    let cols = w as usize / stride;
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let label = labels[(y as usize / stride) * cols + x as usize / stride];
            if label == 0 {
                continue;
            }
            let c = PALETTE[(label as usize - 1) % PALETTE.len()];
            let p = image.get_pixel(x, y).0;
            let mix = |a: u8, b: u8| ((u16::from(a) + u16::from(b)) / 2) as u8;
            out.put_pixel(x, y, Rgb([mix(p[0], c[0]), mix(p[1], c[1]), mix(p[2], c[2])]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn void_keeps_pixels_and_labels_blend() {
        let img = RgbImage::from_pixel(4, 4, Rgb([0, 0, 0]));
        let out = render(&img, &[0, 1, 0, 9], 2);
        assert_eq!(out.dimensions(), (4, 4));
        assert_eq!(out.get_pixel(0, 0).0, [0, 0, 0]);
        assert_eq!(out.get_pixel(3, 0).0, [115, 12, 37]);
        assert_eq!(out.get_pixel(3, 3).0, out.get_pixel(3, 0).0);
    }
}
