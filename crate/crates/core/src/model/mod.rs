//! The MapLUR network and its training protocol.

mod augment;
mod train;

pub use augment::{augment, dihedral, Dihedral};
pub use train::{
    predict, predict_batch, stratified_validation_split, train, train_with, EarlyStopping, EpochRecord, StopDecision,
    TrainConfig, TrainedModel,
};

use crate::autodiff::{Affine, BatchNorm2d, Conv2d, ConvGeometry, Flatten, Layer, Linear, MaxPool2d, Relu, Sequential};
use crate::error::{invalid, Result};
use crate::prelude::*;
use crate::rng;

/// Network topology: `conv_layers` blocks of conv(3×3, same) → batch norm →
/// ReLU, max pooling (2×2, stride 2) after the 1-based block indices in
/// `pool_after`, then flatten → linear(`hidden`) → ReLU → linear(1).
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MapLurSpec {
    pub in_channels: usize,
    pub input_px: usize,
    pub conv_layers: usize,
    pub filters: usize,
    pub pool_after: Vec<usize>,
    pub hidden: usize,
}

impl MapLurSpec {
    pub const INPUT_PX: usize = 224;
    pub const DESK_INPUT_PX: usize = 64;

    /// The full architecture on 224 px inputs.
    pub fn build(in_channels: usize) -> Result<Self> {
        if in_channels != 3 && in_channels != 6 {
            return Err(invalid(format!("MapLUR takes 3 or 6 input channels, got {in_channels}")));
        }
        Ok(Self {
            in_channels,
            input_px: Self::INPUT_PX,
            conv_layers: 15,
            filters: 16,
            pool_after: vec![1, 3, 5, 7, 10, 13],
            hidden: 128,
        })
    }

    /// Same topology on 64 px inputs (trace 64→32→16→8→4→2→1).
    pub fn desk(in_channels: usize) -> Result<Self> {
        Ok(Self { input_px: Self::DESK_INPUT_PX, ..Self::build(in_channels)? })
    }

    pub fn with_input_px(mut self, px: usize) -> Result<Self> {
        self.input_px = px;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.filters == 0 || self.hidden == 0 || self.conv_layers == 0 {
            return Err(invalid("network dimensions must be positive"));
        }
        if self.pool_after.iter().any(|&i| i == 0 || i > self.conv_layers) {
            return Err(invalid("pool positions must name existing conv blocks"));
        }
        if self.pool_after.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("pool positions must be strictly increasing"));
        }
        if self.final_extent() == 0 {
            return Err(invalid(format!("{} px input pools away to nothing", self.input_px)));
        }
        Ok(())
    }

    /// Spatial extent at the input and after every pooling layer.
    pub fn spatial_trace(&self) -> Vec<usize> {
        let mut trace = vec![self.input_px];
        let mut s = self.input_px;
        for _ in &self.pool_after {
            s /= 2;
            trace.push(s);
        }
        trace
    }

    fn final_extent(&self) -> usize {
        *self.spatial_trace().last().unwrap_or(&0)
    }

    pub fn flatten_size(&self) -> usize {
        let s = self.final_extent();
        self.filters * s * s
    }

    /// Trainable parameters: conv kernels and biases, batch-norm scale and
    /// shift, and the two fully connected layers.
    pub fn trainable_parameter_count(&self) -> usize {
        let f = self.filters;
        let first = self.in_channels * 9 * f + f;
        let rest = (self.conv_layers - 1) * (f * 9 * f + f);
        let bn = self.conv_layers * 2 * f;
        let fc = self.flatten_size() * self.hidden + self.hidden;
        let out = self.hidden + 1;
        first + rest + bn + fc + out
    }

    /// Instantiates the network with seeded Kaiming-uniform weights. The
    /// final affine stage maps standardized outputs back to target units.
    pub fn network(&self, seed: u64) -> Result<Sequential<f32>> {
        self.validate()?;
        let mut layers = Vec::new();
        let mut channels = self.in_channels;
        for block in 1..=self.conv_layers {
            layers.push(Layer::Conv2d(Conv2d::new(channels, self.filters, ConvGeometry::SAME3)));
            layers.push(Layer::BatchNorm2d(BatchNorm2d::new(self.filters)));
            layers.push(Layer::Relu(Relu::new()));
            if self.pool_after.contains(&block) {
                layers.push(Layer::MaxPool2d(MaxPool2d::new(2, 2)));
            }
            channels = self.filters;
        }
        layers.push(Layer::Flatten(Flatten::new()));
        layers.push(Layer::Linear(Linear::new(self.flatten_size(), self.hidden)));
        layers.push(Layer::Relu(Relu::new()));
        layers.push(Layer::Linear(Linear::new(self.hidden, 1)));
        layers.push(Layer::Affine(Affine::new(1.0, 0.0)));
        let mut net = Sequential::new(layers);
        net.init(&mut rng::seeded(seed));
        Ok(net)
    }
}
