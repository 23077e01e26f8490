use super::{conv2d, maxpool2, relu, EngineError, WeightBundle};
use crate::tensor::Tensor;

/// Spatial size every network input is resized to.
pub const INPUT_SIZE: usize = 224;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv3x3 { in_channels: usize, out_channels: usize },
    Relu,
    MaxPool2,
}

/// Ordered layer list. Constructed only through [`NetworkSpec::new`] so the
/// channel chain is always consistent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
}

const VGG16_BLOCKS: [&[usize]; 5] = [&[64, 64], &[128, 128], &[256, 256, 256], &[512, 512, 512], &[512, 512, 512]];

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self, EngineError> {
        let mut channels = 3;
        let mut convs = 0;
        for (i, layer) in layers.iter().enumerate() {
            if let LayerSpec::Conv3x3 { in_channels, out_channels } = *layer {
                if in_channels == 0 || out_channels == 0 {
                    return Err(EngineError::Spec(format!("layer {i}: channel counts must be positive")));
                }
                if in_channels != channels {
                    return Err(EngineError::Spec(format!(
                        "layer {i}: conv expects {in_channels} input channels but receives {channels}"
                    )));
                }
                channels = out_channels;
                convs += 1;
            }
        }
        if convs == 0 {
            return Err(EngineError::Spec("network has no convolution layers".into()));
        }
        Ok(Self { layers })
    }

    /// The convolutional trunk of the 16-layer VGG configuration (no batch
    /// norm), ending at the fifth max-pool.
    pub fn vgg16_pool5() -> Self {
        let mut layers = Vec::new();
        let mut channels = 3;
        for block in VGG16_BLOCKS {
            for &out in block {
                layers.push(LayerSpec::Conv3x3 { in_channels: channels, out_channels: out });
                layers.push(LayerSpec::Relu);
                channels = out;
            }
            layers.push(LayerSpec::MaxPool2);
        }
        Self { layers }
    }

    /// A cheap two-convolution stand-in with the same 512×7×7 output
    /// geometry as the VGG16 trunk: three pools, conv, pool, conv, pool.
    pub fn compact(hidden: usize) -> Result<Self, EngineError> {
        use LayerSpec::*;
        Self::new(vec![
            MaxPool2,
            MaxPool2,
            MaxPool2,
            Conv3x3 { in_channels: 3, out_channels: hidden },
            Relu,
            MaxPool2,
            Conv3x3 { in_channels: hidden, out_channels: 512 },
            Relu,
            MaxPool2,
        ])
    }

    /// Recognizes the network a weight bundle was built for: the VGG16 trunk
    /// when the thirteen conv shapes match, otherwise the compact stand-in.
    pub fn infer_from(weights: &WeightBundle) -> Result<Self, EngineError> {
        let vgg = Self::vgg16_pool5();
        if weights.validate_against(&vgg).is_ok() {
            return Ok(vgg);
        }
        if let [first, _] = weights.entries() {
            let compact = Self::compact(first.kernel.shape()[0])?;
            if weights.validate_against(&compact).is_ok() {
                return Ok(compact);
            }
        }
        Err(EngineError::Mismatch(format!(
            "weight bundle with {} entries matches neither the VGG16 trunk nor the compact network",
            weights.entries().len()
        )))
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// `(in, out)` channel counts of each conv layer, in order.
    pub fn conv_layers(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .filter_map(|l| match *l {
                LayerSpec::Conv3x3 { in_channels, out_channels } => Some((in_channels, out_channels)),
                _ => None,
            })
            .collect()
    }

    pub fn pool_count(&self) -> usize {
        self.layers.iter().filter(|l| **l == LayerSpec::MaxPool2).count()
    }

    /// Output shape for a `(3, h, w)` input, or an error if a pool would see
    /// an odd extent.
    pub fn output_shape(&self, h: usize, w: usize) -> Result<[usize; 3], EngineError> {
        let (mut c, mut h, mut w) = (3, h, w);
        for layer in &self.layers {
            match *layer {
                LayerSpec::Conv3x3 { out_channels, .. } => c = out_channels,
                LayerSpec::Relu => {}
                LayerSpec::MaxPool2 => {
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(EngineError::Shape(format!("pool applied to odd extent {h}x{w}")));
                    }
                    h /= 2;
                    w /= 2;
                }
            }
        }
        Ok([c, h, w])
    }
}

/// Runs `image` (already preprocessed, `3×224×224`) through every layer of
/// `spec` and returns the final pooled activation map.
pub fn forward_to_pool5(
    spec: &NetworkSpec,
    weights: &WeightBundle,
    image: &Tensor,
) -> Result<Tensor, EngineError> {
    weights.validate_against(spec)?;
    if image.shape() != [3, INPUT_SIZE, INPUT_SIZE] {
        return Err(EngineError::Shape(format!(
            "network input must be 3x{INPUT_SIZE}x{INPUT_SIZE}, got {:?}",
            image.shape()
        )));
    }
    forward(spec, weights, image)
}

/// Layer-by-layer evaluation without the input-size restriction.
pub fn forward(spec: &NetworkSpec, weights: &WeightBundle, image: &Tensor) -> Result<Tensor, EngineError> {
    let mut entries = weights.entries().iter();
    let mut x = image.clone();
    for layer in spec.layers() {
        x = match layer {
            LayerSpec::Conv3x3 { .. } => {
                let e = entries.next().expect("validated weight count");
                conv2d(&x, &e.kernel, &e.bias)?
            }
            LayerSpec::Relu => relu(&x),
            LayerSpec::MaxPool2 => maxpool2(&x)?,
        };
    }
    Ok(x)
}
