/// Additive cross-attention bias over `positions` feature locations for
/// `m` latent rows followed by `n` text rows.
///
/// A latent row is 0 where the previous mask logit is foreground
/// (`sigmoid >= 0.5`, i.e. logit `>= 0`) and `-inf` elsewhere; a row with
/// no foreground falls back to all zeros. Text rows are all zeros.
pub fn cross_attention_bias(prev_logits: &[f64], m: usize, positions: usize, n: usize) -> Vec<f64> {
    assert_eq!(prev_logits.len(), m * positions, "logits must be m x positions");
    let mut out = vec![0.0; (m + n) * positions];
    for (i, row) in prev_logits.chunks(positions).enumerate() {
        if row.iter().any(|&l| l >= 0.0) {
            for (o, &l) in out[i * positions..(i + 1) * positions].iter_mut().zip(row) {
                *o = if l >= 0.0 { 0.0 } else { f64::NEG_INFINITY };
            }
        }
    }
    out
}

/// Bias restricting every one of `rows` queries to `region`; an empty
/// region leaves attention unrestricted.
pub fn region_bias(region: &[bool], rows: usize) -> Vec<f64> {
    let row: Vec<f64> = if region.iter().any(|&r| r) {
        region
            .iter()
            .map(|&r| if r { 0.0 } else { f64::NEG_INFINITY })
            .collect()
    } else {
        vec![0.0; region.len()]
    };
    row.repeat(rows)
}

/// Average-pool `rows` maps of size `h x w` by an integer `factor`.
pub fn downsample_logits(logits: &[f64], rows: usize, h: usize, w: usize, factor: usize) -> Vec<f64> {
    if factor == 1 {
        return logits.to_vec();
    }
    let (oh, ow) = (h / factor, w / factor);
    let norm = (factor * factor) as f64;
    let mut out = vec![0.0; rows * oh * ow];
    for r in 0..rows {
        let src = &logits[r * h * w..(r + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                out[r * oh * ow + (y / factor) * ow + x / factor] += src[y * w + x] / norm;
            }
        }
    }
    out
}

/// Boolean variant of [`downsample_logits`]: a coarse cell is on when any
/// of its fine cells is.
pub fn downsample_region(region: &[bool], h: usize, w: usize, factor: usize) -> Vec<bool> {
    let (oh, ow) = (h / factor, w / factor);
    let mut out = vec![false; oh * ow];
    for y in 0..h {
        for x in 0..w {
            if region[y * w + x] {
                out[(y / factor) * ow + x / factor] = true;
            }
        }
    }
    out
}
