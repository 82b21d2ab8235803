//! Detector-side preprocessing: breast/background segmentation, tissue
//! intensity normalization, Gaussian-noise augmentation, and the
//! percentile-saturating bit-depth quantization that models threshold-based
//! format conversion.


use crate::error::{Error, Result};
use crate::raster::{BinaryMask, GrayImage};
use crate::rng::{rng_for, sample_standard_normal};

/// Gaussian-noise augmentation parameters. `sigma` is expressed in 8-bit
/// intensity units applied after normalization.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentationConfig {
    pub sigma: f64,
    pub seed: u64,
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return Err(Error::Validation(format!("sigma {} must be >= 0", self.sigma)));
        }
        Ok(())
    }
}

/// Segments the image into background and tissue: a two-class
/// variance-maximizing global threshold (Otsu) followed by a largest
/// 8-connected component rule, so bright off-breast artifacts drop out.
pub fn segment_breast(img: &GrayImage) -> Result<BinaryMask> {
    let (w, h) = (img.width(), img.height());
    let max = img.max_value();
    let first = img.pixels()[0];
    if img.pixels().iter().all(|&v| v == first) {
        return Err(Error::Validation("no tissue found: image is constant".into()));
    }

    // 256-bin histogram over the declared dynamic range
    let bins = 256usize;
    let scale = (bins - 1) as f64 / max as f64;
    let mut hist = [0u64; 256];
    for &v in img.pixels() {
        hist[(v as f64 * scale).round() as usize] += 1;
    }
    let threshold_bin = otsu_threshold(&hist);
    let threshold = (threshold_bin as f64 / scale).floor() as u16;

    let mut above = BinaryMask::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            if img.get(x, y) > threshold {
                above.set(x, y, true);
            }
        }
    }
    if above.is_empty() {
        return Err(Error::Validation("no tissue found: nothing above threshold".into()));
    }
    Ok(largest_component(&above))
}

/// Otsu's method on a histogram: the bin maximizing between-class variance.
fn otsu_threshold(hist: &[u64; 256]) -> usize {
    let total: u64 = hist.iter().sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let mut best = (0usize, -1.0f64);
    let mut w0 = 0u64;
    let mut sum0 = 0.0;
    for t in 0..256 {
        w0 += hist[t];
        if w0 == 0 {
            continue;
        }
        let w1 = total - w0;
        if w1 == 0 {
            break;
        }
        sum0 += t as f64 * hist[t] as f64;
        let mean0 = sum0 / w0 as f64;
        let mean1 = (sum_all - sum0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (mean0 - mean1).powi(2);
        if between > best.1 {
            best = (t, between);
        }
    }
    best.0
}

fn largest_component(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut best: Vec<usize> = Vec::new();
    for start in 0..w * h {
        if !mask.bits()[start] || seen[start] {
            continue;
        }
        let mut component = vec![start];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(idx) = stack.pop() {
            let (x, y) = ((idx % w) as i64, (idx / w) as i64);
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if mask.bits()[nidx] && !seen[nidx] {
                        seen[nidx] = true;
                        stack.push(nidx);
                        component.push(nidx);
                    }
                }
            }
        }
        if component.len() > best.len() {
            best = component;
        }
    }
    let mut out = BinaryMask::zeros(w, h);
    for idx in best {
        out.set(idx % w, idx / w, true);
    }
    out
}

/// Min–max rescales tissue intensities to 8-bit `[0, 255]`, forcing
/// background to 0. Monotone on tissue pixels.
pub fn normalize_intensities(img: &GrayImage, tissue: &BinaryMask) -> Result<GrayImage> {
    if img.width() != tissue.width() || img.height() != tissue.height() {
        return Err(Error::Shape(format!(
            "image {}x{} and tissue mask {}x{} differ",
            img.width(),
            img.height(),
            tissue.width(),
            tissue.height()
        )));
    }
    if tissue.is_empty() {
        return Err(Error::Validation("tissue mask is empty".into()));
    }
    let mut lo = u16::MAX;
    let mut hi = 0u16;
    for y in 0..img.height() {
        for x in 0..img.width() {
            if tissue.get(x, y) {
                let v = img.get(x, y);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if lo == hi {
        return Err(Error::Validation("degenerate intensity range".into()));
    }
    let span = (hi - lo) as f64;
    let mut pixels = vec![0u16; img.width() * img.height()];
    for y in 0..img.height() {
        for x in 0..img.width() {
            if tissue.get(x, y) {
                let v = (img.get(x, y).saturating_sub(lo)) as f64 / span;
                pixels[y * img.width() + x] = (v * 255.0).round() as u16;
            }
        }
    }
    GrayImage::new(img.width(), img.height(), 8, pixels)
}

/// Adds clamped per-pixel Gaussian noise. Deterministic in `cfg.seed`; the
/// paired mask is untouched by construction (masks never pass through here).
pub fn add_gaussian_noise(img: &GrayImage, cfg: &AugmentationConfig) -> Result<GrayImage> {
    cfg.validate()?;
    let max = img.max_value() as f64;
    let mut rng = rng_for(cfg.seed, "gaussian-noise", 0);
    let pixels = img
        .pixels()
        .iter()
        .map(|&v| {
            let noisy = v as f64 + cfg.sigma * sample_standard_normal(&mut rng);
            noisy.round().clamp(0.0, max) as u16
        })
        .collect();
    GrayImage::new(img.width(), img.height(), img.bit_depth(), pixels)
}

/// Saturates intensities above the given percentile, then linearly rescales
/// to 8-bit. `percentile = 0` disables saturation (plain linear rescale).
/// Models the threshold applied when converting raw acquisitions to 8-bit
/// files; detection output can be sensitive to it, so it is swept in tests.
pub fn quantize(img: &GrayImage, threshold_percentile: f64) -> Result<GrayImage> {
    if !(0.0..100.0).contains(&threshold_percentile) {
        return Err(Error::Validation(format!(
            "threshold percentile {threshold_percentile} must lie in [0, 100)"
        )));
    }
    let mut sorted: Vec<u16> = img.pixels().to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let cap = if threshold_percentile == 0.0 {
        sorted[n - 1]
    } else {
        // nearest-rank percentile
        let rank = ((threshold_percentile / 100.0) * n as f64).ceil() as usize;
        sorted[rank.clamp(1, n) - 1]
    };
    let cap = cap.max(1);
    let pixels = img
        .pixels()
        .iter()
        .map(|&v| {
            let clipped = v.min(cap) as f64;
            ((clipped / cap as f64) * 255.0).round() as u16
        })
        .collect();
    GrayImage::new(img.width(), img.height(), 8, pixels)
}

/// Per-image augmentation seed: global seed mixed with the image id, so
/// parallel per-image application stays reproducible.
pub fn noise_seed_for_image(base_seed: u64, image_id: &str) -> u64 {
    crate::rng::derive_seed(base_seed, image_id, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_phantom, PhantomSpec};

    fn image_from(values: &[u16], w: usize, h: usize, depth: u8) -> GrayImage {
        GrayImage::new(w, h, depth, values.to_vec()).unwrap()
    }

    #[test]
    fn segments_phantom_breast_within_tolerance() {
        let spec = PhantomSpec::default();
        for index in 0..4 {
            let sample = generate_phantom(&spec, index).unwrap();
            let seg = segment_breast(&sample.image).unwrap();
            let mut diff = 0usize;
            for y in 0..spec.height {
                for x in 0..spec.width {
                    if seg.get(x, y) != sample.breast_mask.get(x, y) {
                        diff += 1;
                    }
                }
            }
            let frac = diff as f64 / (spec.width * spec.height) as f64;
            assert!(frac <= 0.02, "index {index}: symmetric difference {frac}");
        }
    }

    #[test]
    fn constant_image_has_no_tissue() {
        let img = image_from(&[0; 64], 8, 8, 8);
        let err = segment_breast(&img).unwrap_err();
        assert!(err.to_string().contains("no tissue found"));
    }

    #[test]
    fn disconnected_bright_artifact_is_excluded() {
        // 16x16: a large bright block plus a distant 2-pixel artifact
        let mut values = vec![0u16; 256];
        for y in 2..10 {
            for x in 2..10 {
                values[y * 16 + x] = 200;
            }
        }
        values[15 * 16 + 14] = 250;
        values[15 * 16 + 15] = 250;
        let img = image_from(&values, 16, 16, 8);
        let seg = segment_breast(&img).unwrap();
        assert!(seg.get(5, 5));
        assert!(!seg.get(14, 15) && !seg.get(15, 15));
        assert_eq!(seg.count(), 64);
    }

    #[test]
    fn normalization_maps_endpoints() {
        let mut values = vec![0u16; 16];
        let mut mask = BinaryMask::zeros(4, 4);
        for i in 0..8 {
            values[i] = 10 + (i as u16) * 100 / 7; // spans 10..110 over tissue
            mask.set(i % 4, i / 4, true);
        }
        values[7] = 110;
        let img = image_from(&values, 4, 4, 8);
        let out = normalize_intensities(&img, &mask).unwrap();
        let tissue_vals: Vec<u16> = (0..8).map(|i| out.pixels()[i]).collect();
        assert_eq!(*tissue_vals.iter().min().unwrap(), 0);
        assert_eq!(*tissue_vals.iter().max().unwrap(), 255);
        // background forced to zero
        assert!(out.pixels()[8..].iter().all(|&v| v == 0));
    }

    #[test]
    fn normalization_is_idempotent_on_full_range() {
        let values: Vec<u16> = (0..16).map(|i| (i * 17) as u16).collect();
        let mut mask = BinaryMask::zeros(4, 4);
        for y in 0..4 {
            for x in 0..4 {
                mask.set(x, y, true);
            }
        }
        let img = image_from(&values, 4, 4, 8);
        let out = normalize_intensities(&img, &mask).unwrap();
        for i in 0..16 {
            let expected = ((values[i] as f64 / 255.0) * 255.0).round() as u16;
            assert!((out.pixels()[i] as i32 - expected as i32).abs() <= 1);
        }
    }

    #[test]
    fn normalization_preserves_rank_order() {
        let spec = PhantomSpec::default();
        let sample = generate_phantom(&spec, 0).unwrap();
        let tissue = segment_breast(&sample.image).unwrap();
        let out = normalize_intensities(&sample.image, &tissue).unwrap();
        for y in 0..sample.image.height() {
            for x in 1..sample.image.width() {
                if tissue.get(x, y) && tissue.get(x - 1, y) {
                    let (a, b) = (sample.image.get(x - 1, y), sample.image.get(x, y));
                    let (na, nb) = (out.get(x - 1, y), out.get(x, y));
                    if a < b {
                        assert!(na <= nb, "monotonicity violated at ({x},{y})");
                    }
                }
            }
        }
    }

    #[test]
    fn constant_tissue_region_is_degenerate() {
        let mut mask = BinaryMask::zeros(4, 4);
        mask.set(0, 0, true);
        mask.set(1, 0, true);
        let img = image_from(&[99; 16], 4, 4, 8);
        let err = normalize_intensities(&img, &mask).unwrap_err();
        assert!(err.to_string().contains("degenerate intensity range"));
    }

    #[test]
    fn zero_sigma_is_identity() {
        let img = image_from(&[5, 10, 200, 255], 2, 2, 8);
        let cfg = AugmentationConfig { sigma: 0.0, seed: 1 };
        assert_eq!(add_gaussian_noise(&img, &cfg).unwrap(), img);
    }

    #[test]
    fn noise_statistics_match_sigma() {
        let img = image_from(&vec![128u16; 256 * 256], 256, 256, 8);
        let cfg = AugmentationConfig { sigma: 2.0, seed: 7 };
        let noisy = add_gaussian_noise(&img, &cfg).unwrap();
        let n = noisy.pixels().len() as f64;
        let mean = noisy.pixels().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = noisy
            .pixels()
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        assert!((127.5..=128.5).contains(&mean), "mean {mean}");
        assert!((1.9..=2.1).contains(&std), "std {std}");
    }

    #[test]
    fn same_noise_seed_is_deterministic() {
        let img = image_from(&(0..256).map(|i| i as u16).collect::<Vec<_>>(), 16, 16, 8);
        let cfg = AugmentationConfig { sigma: 2.0, seed: 3 };
        assert_eq!(
            add_gaussian_noise(&img, &cfg).unwrap(),
            add_gaussian_noise(&img, &cfg).unwrap()
        );
    }

    #[test]
    fn quantize_zero_percentile_is_linear_rescale() {
        let values: Vec<u16> = (0..64).map(|i| i * 64).collect(); // 12-bit-ish ramp
        let img = image_from(&values, 8, 8, 12);
        let out = quantize(&img, 0.0).unwrap();
        let max_in = 63 * 64;
        for i in 0..64 {
            let expected = ((values[i] as f64 / max_in as f64) * 255.0).round() as u16;
            assert_eq!(out.pixels()[i], expected);
        }
    }

    #[test]
    fn quantize_saturates_outliers_and_expands_range() {
        // 99% of pixels in [0, 100], 1% saturated-bright outliers
        let mut values = vec![0u16; 1000];
        for (i, v) in values.iter_mut().enumerate().take(990) {
            *v = (i % 101) as u16;
        }
        for v in values.iter_mut().skip(990) {
            *v = 60_000;
        }
        let img = image_from(&values, 100, 10, 16);
        let out = quantize(&img, 99.0).unwrap();
        // outliers hit the ceiling
        for i in 990..1000 {
            assert_eq!(out.pixels()[i], 255);
        }
        // non-outlier dynamic range spans at least 90% of the output range
        let non_outliers = &out.pixels()[..990];
        let lo = *non_outliers.iter().min().unwrap();
        let hi = *non_outliers.iter().max().unwrap();
        assert!((hi - lo) as f64 >= 0.9 * 255.0, "span {}", hi - lo);
    }

    #[test]
    fn quantize_is_monotone() {
        let values: Vec<u16> = vec![3, 8, 8, 20, 100, 220, 255, 255, 31, 7, 90, 64, 12, 0, 5, 255];
        let img = image_from(&values, 4, 4, 8);
        let out = quantize(&img, 90.0).unwrap();
        let mut pairs: Vec<(u16, u16)> = values
            .iter()
            .zip(out.pixels())
            .map(|(&a, &b)| (a, b))
            .collect();
        pairs.sort_unstable();
        for w in pairs.windows(2) {
            assert!(w[0].1 <= w[1].1, "quantize not monotone: {pairs:?}");
        }
    }
}
