//! Space-to-depth reshaping between frame tensors and patch tensors.

use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// `[C, H, W]` -> `[C*p*p, H/p, W/p]`. Pure index permutation; output channel
/// `c*p*p + py*p + px` holds the patch offset `(py, px)` of input channel `c`.
pub fn patchify(frame: &Tensor, patch: usize) -> Result<Tensor> {
    let s = frame.shape();
    if s.len() != 3 {
        return Err(Error::ShapeMismatch(format!("patchify wants [C, H, W], got {s:?}")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::ShapeMismatch(format!(
            "spatial dims {h}x{w} not divisible by patch {patch}"
        )));
    }
    let (hp, wp) = (h / patch, w / patch);
    let src = frame.data();
    let mut data = vec![0.0; src.len()];
    for ci in 0..c {
        for py in 0..patch {
            for px in 0..patch {
                let oc = (ci * patch + py) * patch + px;
                for y in 0..hp {
                    for x in 0..wp {
                        data[(oc * hp + y) * wp + x] =
                            src[(ci * h + y * patch + py) * w + x * patch + px];
                    }
                }
            }
        }
    }
    Tensor::new(vec![c * patch * patch, hp, wp], data)
}

/// Inverse of [`patchify`]: `[C*p*p, H/p, W/p]` -> `[C, H, W]`.
pub fn unpatchify(patched: &Tensor, patch: usize) -> Result<Tensor> {
    let s = patched.shape();
    if s.len() != 3 {
        return Err(Error::ShapeMismatch(format!("unpatchify wants rank 3, got {s:?}")));
    }
    let (cp, hp, wp) = (s[0], s[1], s[2]);
    if patch == 0 || cp % (patch * patch) != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{cp} channels not divisible by patch area {}",
            patch * patch
        )));
    }
    let c = cp / (patch * patch);
    let (h, w) = (hp * patch, wp * patch);
    let src = patched.data();
    let mut data = vec![0.0; src.len()];
    for ci in 0..c {
        for py in 0..patch {
            for px in 0..patch {
                let oc = (ci * patch + py) * patch + px;
                for y in 0..hp {
                    for x in 0..wp {
                        data[(ci * h + y * patch + py) * w + x * patch + px] =
                            src[(oc * hp + y) * wp + x];
                    }
                }
            }
        }
    }
    Tensor::new(vec![c, h, w], data)
}
