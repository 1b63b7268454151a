use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Concatenates NCHW tensors along the channel axis, in argument order.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat_channels", "no inputs"))?;
    let (n, _, h, w) = first.dims4("concat_channels")?;
    let mut total = 0;
    for p in parts {
        let (pn, pc, ph, pw) = p.dims4("concat_channels")?;
        for (axis, expected, actual) in [("batch", n, pn), ("height", h, ph), ("width", w, pw)] {
            if expected != actual {
                return Err(Error::Dimension {
                    op: "concat_channels",
                    axis,
                    expected,
                    actual,
                });
            }
        }
        total += pc;
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * total * plane);
    for ni in 0..n {
        for p in parts {
            let c = p.shape()[1];
            data.extend_from_slice(&p.data()[ni * c * plane..(ni + 1) * c * plane]);
        }
    }
    Tensor::from_vec(&[n, total, h, w], data)
}

/// Inverse of [`concat_channels`]: splits a gradient into channel groups.
pub fn split_channels(input: &Tensor, channels: &[usize]) -> Result<Vec<Tensor>> {
    let (n, c, h, w) = input.dims4("split_channels")?;
    let sum: usize = channels.iter().sum();
    if sum != c {
        return Err(Error::Dimension {
            op: "split_channels",
            axis: "channel",
            expected: sum,
            actual: c,
        });
    }
    let plane = h * w;
    let mut out: Vec<Vec<f32>> = channels
        .iter()
        .map(|&k| Vec::with_capacity(n * k * plane))
        .collect();
    for ni in 0..n {
        let mut offset = ni * c * plane;
        for (dst, &k) in out.iter_mut().zip(channels) {
            dst.extend_from_slice(&input.data()[offset..offset + k * plane]);
            offset += k * plane;
        }
    }
    out.into_iter()
        .zip(channels)
        .map(|(data, &k)| Tensor::from_vec(&[n, k, h, w], data))
        .collect()
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "add",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = a.clone();
    out.add_assign(b)?;
    Ok(out)
}

/// `(N, ...)` to `(N, F)`.
pub fn flatten(input: &Tensor) -> Result<Tensor> {
    let n = input.shape()[0];
    let f = input.len() / n;
    input.clone().reshape(&[n, f])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_shapes() {
        let a = Tensor::zeros(&[1, 2, 4, 4]);
        let b = Tensor::zeros(&[1, 3, 4, 4]);
        assert_eq!(concat_channels(&[&a, &b]).unwrap().shape(), &[1, 5, 4, 4]);
    }

    #[test]
    fn concat_then_split_round_trips() {
        let a = Tensor::from_fn(&[2, 1, 2, 2], |i| i as f32);
        let b = Tensor::from_fn(&[2, 2, 2, 2], |i| 100.0 + i as f32);
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(&cat.data()[..4], &a.data()[..4]);
        assert_eq!(&cat.data()[4..12], &b.data()[..8]);
        let parts = split_channels(&cat, &[1, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::zeros(&[1, 2, 4, 4]);
        let b = Tensor::zeros(&[1, 2, 4, 2]);
        assert!(matches!(
            concat_channels(&[&a, &b]),
            Err(Error::Dimension { axis: "width", .. })
        ));
    }

    #[test]
    fn add_zeros_is_identity() {
        let x = Tensor::from_fn(&[2, 3], |i| i as f32 * 1.5);
        assert_eq!(add(&x, &Tensor::zeros(&[2, 3])).unwrap(), x);
        assert!(add(&x, &Tensor::zeros(&[3, 2])).is_err());
    }

    #[test]
    fn flatten_keeps_elements() {
        let x = Tensor::from_fn(&[2, 3, 4, 5], |i| i as f32);
        let f = flatten(&x).unwrap();
        assert_eq!(f.shape(), &[2, 60]);
        assert_eq!(f.data(), x.data());
    }
}
