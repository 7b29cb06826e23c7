//! 8-bit grayscale buffers and resampling.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Bilinear resample of a row-major 8-bit image using pixel-centre alignment.
pub fn resize_bilinear(src: &[u8], width: usize, height: usize, out_w: usize, out_h: usize) -> Vec<u8> {
    resize_bilinear_f32(
        &src.iter().map(|&v| v as f32).collect::<Vec<_>>(),
        width,
        height,
        out_w,
        out_h,
    )
    .into_iter()
    .map(to_u8)
    .collect()
}

pub fn resize_bilinear_f32(src: &[f32], width: usize, height: usize, out_w: usize, out_h: usize) -> Vec<f32> {
    assert_eq!(src.len(), width * height, "source buffer size");
    let sx = width as f64 / out_w as f64;
    let sy = height as f64 / out_h as f64;
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (height - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(height - 1);
        let wy = (fy - y0 as f64) as f32;
        for x in 0..out_w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (width - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(width - 1);
            let wx = (fx - x0 as f64) as f32;
            let top = src[y0 * width + x0] * (1.0 - wx) + src[y0 * width + x1] * wx;
            let bottom = src[y1 * width + x0] * (1.0 - wx) + src[y1 * width + x1] * wx;
            out.push(top * (1.0 - wy) + bottom * wy);
        }
    }
    out
}

pub fn to_u8(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Intersection over union of two images binarized at `threshold`
/// (pixel >= threshold is foreground). Two empty images have IoU 1.
pub fn binary_iou(a: &[u8], b: &[u8], threshold: u8) -> f64 {
    assert_eq!(a.len(), b.len());
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.iter().zip(b) {
        let (p, q) = (p >= threshold, q >= threshold);
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
