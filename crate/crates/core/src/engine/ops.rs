use super::EngineError;
use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

/// Non-overlapping 2×2 max pooling. Height and width must both be even.
pub fn maxpool2(input: &Tensor) -> Result<Tensor, EngineError> {
    let (c, h, w) = input.chw()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(EngineError::Shape(format!(
            "maxpool2 needs even height and width, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for y in 0..oh {
            let top = &plane[2 * y * w..(2 * y + 1) * w];
            let bottom = &plane[(2 * y + 1) * w..(2 * y + 2) * w];
            for x in 0..ow {
                let m = top[2 * x].max(top[2 * x + 1]).max(bottom[2 * x]).max(bottom[2 * x + 1]);
                out.push(m);
            }
        }
    }
    Tensor::new(&[c, oh, ow], out)
}

/// Global average pooling: the spatial mean of every channel.
pub fn gap(input: &Tensor) -> Result<Vec<f32>, EngineError> {
    let (c, h, w) = input.chw()?;
    let plane = h * w;
    Ok(input
        .data()
        .chunks_exact(plane)
        .take(c)
        .map(|p| (p.iter().map(|&v| v as f64).sum::<f64>() / plane as f64) as f32)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_examples() {
        let t = Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::full(&[2, 2], -3.0).unwrap();
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
        let pos = Tensor::from_fn(&[5], |i| i as f32).unwrap();
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn maxpool_examples() {
        let t = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(maxpool2(&t).unwrap().data(), &[4.0]);
        let c = Tensor::full(&[3, 6, 4], 1.5).unwrap();
        let p = maxpool2(&c).unwrap();
        assert_eq!(p.shape(), &[3, 3, 2]);
        assert!(p.data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn maxpool_rejects_odd() {
        assert!(maxpool2(&Tensor::zeros(&[1, 3, 4]).unwrap()).is_err());
        assert!(maxpool2(&Tensor::zeros(&[1, 4, 5]).unwrap()).is_err());
    }

    #[test]
    fn gap_examples() {
        let t = Tensor::full(&[4, 5, 3], 3.0).unwrap();
        assert_eq!(gap(&t).unwrap(), vec![3.0; 4]);
        let big = Tensor::zeros(&[512, 7, 7]).unwrap();
        assert_eq!(gap(&big).unwrap().len(), 512);
    }
}
