use crate::error::{Error, Result};
use crate::model::{ConvLayerSpec, TensorShape};

use super::tensor::Tensor;

/// Weights laid out `[out][in_per_group][ky][kx]`.
pub fn weight_len(layer: &ConvLayerSpec) -> usize {
    layer.out_channels * layer.in_per_group() * layer.kernel * layer.kernel
}

fn check(x: &Tensor, layer: &ConvLayerSpec, weights: &[f64]) -> Result<()> {
    layer.validate()?;
    if x.shape.channels != layer.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "layer expects {} input channels, tensor has {}",
            layer.in_channels, x.shape.channels
        )));
    }
    if weights.len() != weight_len(layer) {
        return Err(Error::ShapeMismatch(format!(
            "expected {} weights, got {}",
            weight_len(layer),
            weights.len()
        )));
    }
    Ok(())
}

/// Direct convolution with zero padding `k / 2`. Each output sums over
/// input channel, then kernel row, then kernel column, ascending.
pub fn conv2d_direct(x: &Tensor, layer: &ConvLayerSpec, weights: &[f64]) -> Result<Tensor> {
    conv2d_core(x, layer, weights, layer.padding(), None, None)
}

/// Convolution without padding; the caller supplies any halo.
pub fn conv2d_valid(x: &Tensor, layer: &ConvLayerSpec, weights: &[f64]) -> Result<Tensor> {
    conv2d_core(x, layer, weights, 0, None, None)
}

/// Padded convolution restricted to active input and output channels.
/// Inactive outputs are zero; inactive inputs are never read.
pub fn conv2d_channel_subset(
    x: &Tensor,
    layer: &ConvLayerSpec,
    weights: &[f64],
    in_active: Option<&[bool]>,
    out_active: Option<&[bool]>,
) -> Result<Tensor> {
    if in_active.is_some_and(|m| m.len() != layer.in_channels)
        || out_active.is_some_and(|m| m.len() != layer.out_channels)
    {
        return Err(Error::MaskShapeMismatch("channel mask length differs from layer".into()));
    }
    conv2d_core(x, layer, weights, layer.padding(), in_active, out_active)
}

fn conv2d_core(
    x: &Tensor,
    layer: &ConvLayerSpec,
    weights: &[f64],
    pad: usize,
    in_active: Option<&[bool]>,
    out_active: Option<&[bool]>,
) -> Result<Tensor> {
    check(x, layer, weights)?;
    let (h, w) = (x.shape.height, x.shape.width);
    let k = layer.kernel;
    let s = layer.stride;
    if h + 2 * pad < k || w + 2 * pad < k {
        return Err(Error::ShapeMismatch("input smaller than kernel".into()));
    }
    let oh = (h + 2 * pad - k) / s + 1;
    let ow = (w + 2 * pad - k) / s + 1;
    let out_shape = TensorShape {
        channels: layer.out_channels,
        height: oh,
        width: ow,
    };
    let mut out = Tensor::zeros(x.n, out_shape);
    let ipg = layer.in_per_group();
    let opg = layer.out_per_group();
    for b in 0..x.n {
        for o in 0..layer.out_channels {
            if out_active.is_some_and(|m| !m[o]) {
                continue;
            }
            let g = o / opg;
            let wo = &weights[o * ipg * k * k..(o + 1) * ipg * k * k];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..ipg {
                        let c = g * ipg + ci;
                        if in_active.is_some_and(|m| !m[c]) {
                            continue;
                        }
                        for ky in 0..k {
                            let iy = (oy * s + ky) as isize - pad as isize;
                            for kx in 0..k {
                                let ix = (ox * s + kx) as isize - pad as isize;
                                acc += wo[(ci * k + ky) * k + kx] * x.at_padded(b, c, iy, ix);
                            }
                        }
                    }
                    out.set(b, o, oy, ox, acc);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_zero() {
        let shape = TensorShape::new(3, 5, 4).unwrap();
        let x = Tensor::random(2, shape, 1);
        let layer = ConvLayerSpec::pointwise(3, 3, 1).unwrap();
        let mut id = vec![0.0; 9];
        for c in 0..3 {
            id[c * 3 + c] = 1.0;
        }
        assert_eq!(conv2d_direct(&x, &layer, &id).unwrap(), x);
        let z = conv2d_direct(&x, &layer, &[0.0; 9]).unwrap();
        assert!(z.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = Tensor::random(1, TensorShape::new(3, 4, 4).unwrap(), 1);
        let layer = ConvLayerSpec::pointwise(4, 3, 1).unwrap();
        assert!(matches!(conv2d_direct(&x, &layer, &[0.0; 12]), Err(Error::ShapeMismatch(_))));
        let layer = ConvLayerSpec::pointwise(3, 3, 1).unwrap();
        assert!(matches!(conv2d_direct(&x, &layer, &[0.0; 2]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn strided_output_size() {
        let x = Tensor::random(1, TensorShape::new(2, 8, 8).unwrap(), 3);
        let layer = ConvLayerSpec::new(2, 4, 3, 2, 2).unwrap();
        let y = conv2d_direct(&x, &layer, &vec![0.5; weight_len(&layer)]).unwrap();
        assert_eq!(y.shape, TensorShape::new(4, 4, 4).unwrap());
    }
}
