//! Network architecture descriptors and FLOPs accounting.

use std::fmt;
use std::str::FromStr;

use crate::error::NnError;

/// Rows of the reference canvas (one per reference line).
pub const CANVAS_ROWS: usize = 4;
/// Columns of the reference canvas: 64 left + 4 middle + 64 right.
pub const CANVAS_COLS: usize = 132;
pub const CANVAS_LEN: usize = CANVAS_ROWS * CANVAS_COLS;
/// Hand-crafted feature vector length: 67 histogram bins, 5 neighbor modes, QP.
pub const FEATURE_LEN: usize = 73;
/// Offset of the first non-histogram hand-crafted feature.
pub const HIST_LEN: usize = 67;
pub const NUM_CLASSES: usize = 67;

/// Named architecture variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Parallel-branch trunk, 2048-wide classifier, hand-crafted features at every layer.
    Dlimd,
    /// Reduced variant: last conv layer has 16 maps and hidden layers 128 nodes.
    DlimdL,
    /// Hand-crafted features only; the canvas trunk is removed.
    AblationH,
    /// Learned features only; no hand-crafted side input.
    AblationL,
    /// Learned features plus hand-crafted features without the gradient histogram.
    AblationHPrimeL,
    /// Hand-crafted features joined only at the first fully connected layer.
    AblationHlFirst,
    /// Serial 128-map trunk with the standard classifier.
    Serial,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Dlimd,
        Variant::DlimdL,
        Variant::AblationH,
        Variant::AblationL,
        Variant::AblationHPrimeL,
        Variant::AblationHlFirst,
        Variant::Serial,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Dlimd => "dlimd",
            Variant::DlimdL => "dlimd-l",
            Variant::AblationH => "ablation-h",
            Variant::AblationL => "ablation-l",
            Variant::AblationHPrimeL => "ablation-hprime-l",
            Variant::AblationHlFirst => "ablation-hl-first",
            Variant::Serial => "serial-fig9",
        }
    }

    pub fn architecture(self) -> Architecture {
        let base = Architecture {
            trunk: Trunk::Parallel { last_maps: 64 },
            hidden: 2048,
            side: SideInput::Full,
            side_every_layer: true,
        };
        match self {
            Variant::Dlimd => base,
            Variant::DlimdL => Architecture {
                trunk: Trunk::Parallel { last_maps: 16 },
                hidden: 128,
                ..base
            },
            Variant::AblationH => Architecture { trunk: Trunk::Absent, ..base },
            Variant::AblationL => Architecture { side: SideInput::Absent, ..base },
            Variant::AblationHPrimeL => Architecture { side: SideInput::NoHistogram, ..base },
            Variant::AblationHlFirst => Architecture { side_every_layer: false, ..base },
            Variant::Serial => Architecture { trunk: Trunk::Serial, ..base },
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.tag() == s)
            .ok_or_else(|| NnError::UnknownVariant(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trunk {
    /// Three two-branch stages (1x1 and 3x3, concatenated to 128 maps),
    /// then 3x3 128->64 and 3x3 64->`last_maps`.
    Parallel { last_maps: usize },
    /// 1x1 1->128, 3x3 128->128, 1x1 128->128, 3x3 128->64, 3x3 64->64.
    Serial,
    Absent,
}

/// Which hand-crafted entries are fed beside the learned features.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SideInput {
    Full,
    NoHistogram,
    Absent,
}

impl SideInput {
    pub fn range(self) -> std::ops::Range<usize> {
        match self {
            SideInput::Full => 0..FEATURE_LEN,
            SideInput::NoHistogram => HIST_LEN..FEATURE_LEN,
            SideInput::Absent => 0..0,
        }
    }

    pub fn len(self) -> usize {
        self.range().len()
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub trunk: Trunk,
    pub hidden: usize,
    pub side: SideInput,
    pub side_every_layer: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub name: String,
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FcShape {
    pub name: String,
    /// Width of the previous layer's output (or flattened trunk output).
    pub prev: usize,
    /// Width of the hand-crafted side input joined at this layer.
    pub side: usize,
    pub out: usize,
}

impl FcShape {
    pub fn inputs(&self) -> usize {
        self.prev + self.side
    }
}

fn conv(name: &str, kernel: usize, in_channels: usize, out_channels: usize) -> ConvShape {
    ConvShape { name: name.to_string(), kernel, in_channels, out_channels }
}

impl Architecture {
    /// Conv stages; layers within a stage share their input and their
    /// outputs are concatenated channel-wise.
    pub fn stages(&self) -> Vec<Vec<ConvShape>> {
        match self.trunk {
            Trunk::Parallel { last_maps } => vec![
                vec![conv("conv1a", 1, 1, 64), conv("conv1b", 3, 1, 64)],
                vec![conv("conv2a", 1, 128, 64), conv("conv2b", 3, 128, 64)],
                vec![conv("conv3a", 1, 128, 64), conv("conv3b", 3, 128, 64)],
                vec![conv("conv4", 3, 128, 64)],
                vec![conv("conv5", 3, 64, last_maps)],
            ],
            Trunk::Serial => vec![
                vec![conv("conv1", 1, 1, 128)],
                vec![conv("conv2", 3, 128, 128)],
                vec![conv("conv3", 1, 128, 128)],
                vec![conv("conv4", 3, 128, 64)],
                vec![conv("conv5", 3, 64, 64)],
            ],
            Trunk::Absent => Vec::new(),
        }
    }

    /// Channels produced by the last trunk stage (0 without a trunk).
    pub fn trunk_channels(&self) -> usize {
        self.stages()
            .last()
            .map(|s| s.iter().map(|c| c.out_channels).sum())
            .unwrap_or(0)
    }

    /// Length of the flattened learned-feature vector.
    pub fn flat_dim(&self) -> usize {
        CANVAS_LEN * self.trunk_channels()
    }

    pub fn fc_layers(&self) -> Vec<FcShape> {
        let side = self.side.len();
        (0..5)
            .map(|i| FcShape {
                name: format!("fc{}", i + 1),
                prev: if i == 0 { self.flat_dim() } else { self.hidden },
                side: if i == 0 || self.side_every_layer { side } else { 0 },
                out: if i == 4 { NUM_CLASSES } else { self.hidden },
            })
            .collect()
    }

    /// Per-layer descriptors in execution order.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        for stage in self.stages() {
            for c in stage {
                specs.push(LayerSpec {
                    name: c.name,
                    kind: LayerKind::Conv {
                        kernel: c.kernel,
                        in_channels: c.in_channels,
                        out_channels: c.out_channels,
                        height: CANVAS_ROWS,
                        width: CANVAS_COLS,
                    },
                    activation: Activation::Relu,
                });
            }
        }
        let fcs = self.fc_layers();
        let last = fcs.len() - 1;
        for (i, fc) in fcs.into_iter().enumerate() {
            specs.push(LayerSpec {
                name: fc.name.clone(),
                kind: LayerKind::Full { inputs: fc.inputs(), outputs: fc.out },
                activation: if i == last { Activation::Softmax } else { Activation::Relu },
            });
        }
        specs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Softmax,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    /// Stride-1, same-padded convolution over an `height x width` map.
    Conv { kernel: usize, in_channels: usize, out_channels: usize, height: usize, width: usize },
    Full { inputs: usize, outputs: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub activation: Activation,
}

impl LayerSpec {
    /// Floating-point operations of one forward pass through this layer.
    ///
    /// Convolution: `2 H W (C_in K^2 + 1) C_out`; fully connected: `(2 I - 1) O`.
    pub fn flops(&self) -> u64 {
        match self.kind {
            LayerKind::Conv { kernel, in_channels, out_channels, height, width } => {
                let (h, w, k) = (height as u64, width as u64, kernel as u64);
                2 * h * w * (in_channels as u64 * k * k + 1) * out_channels as u64
            }
            LayerKind::Full { inputs, outputs } => (2 * inputs as u64 - 1) * outputs as u64,
        }
    }
}

pub fn flops(specs: &[LayerSpec]) -> Vec<u64> {
    specs.iter().map(LayerSpec::flops).collect()
}

/// Leading two digits and exponent of `v` rounded to three significant
/// digits: 77_924_352 -> (77, 7), 38_995_968 -> (39, 7).
pub fn two_digits(v: u64) -> (u64, u32) {
    if v < 100 {
        return if v < 10 { (v * 10, 0) } else { (v, 1) };
    }
    let mut exp = v.ilog10();
    let unit = 10u64.pow(exp - 2);
    let mut three = (v + unit / 2) / unit;
    if three == 1000 {
        three = 100;
        exp += 1;
    }
    (three / 10, exp)
}

/// `7.7e7` style rendering of [`two_digits`].
pub fn short_flops(v: u64) -> String {
    let (d, e) = two_digits(v);
    format!("{}.{}e{}", d / 10, d % 10, e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dlimd_shapes() {
        let arch = Variant::Dlimd.architecture();
        assert_eq!(arch.flat_dim(), 33792);
        let fcs = arch.fc_layers();
        assert_eq!(fcs[0].inputs(), 33792 + 73);
        for fc in &fcs[1..4] {
            assert_eq!(fc.inputs(), 2048 + 73);
            assert_eq!(fc.out, 2048);
        }
        assert_eq!(fcs[4].out, 67);
    }

    #[test]
    fn reduced_variant_shapes() {
        let arch = Variant::DlimdL.architecture();
        assert_eq!(arch.flat_dim(), 8448);
        assert_eq!(arch.fc_layers()[0].inputs(), 8448 + 73);
        assert_eq!(arch.fc_layers()[1].inputs(), 128 + 73);
    }

    #[test]
    fn hand_crafted_only_has_73_inputs() {
        let arch = Variant::AblationH.architecture();
        assert!(arch.stages().is_empty());
        assert_eq!(arch.fc_layers()[0].inputs(), 73);
    }

    #[test]
    fn first_layer_only_variant_drops_side_input_later() {
        let fcs = Variant::AblationHlFirst.architecture().fc_layers();
        assert_eq!(fcs[0].side, 73);
        assert!(fcs[1..].iter().all(|f| f.side == 0));
        // Same first layer as the standard network.
        assert_eq!(fcs[0], Variant::Dlimd.architecture().fc_layers()[0]);
    }

    #[test]
    fn conv_and_fc_flops_examples() {
        let specs = Variant::Dlimd.architecture().layer_specs();
        let f = flops(&specs);
        assert_eq!(f[0], 135_168);
        assert_eq!(f[3], 77_924_352);
        assert_eq!(f[8], 138_708_992);
        assert_eq!(specs.len(), 13);
    }

    #[test]
    fn two_digit_rendering() {
        assert_eq!(two_digits(135_168), (13, 5));
        assert_eq!(two_digits(77_924_352), (77, 7));
        assert_eq!(two_digits(99), (99, 1));
        assert_eq!(two_digits(7), (70, 0));
        assert_eq!(two_digits(38_995_968), (39, 7));
        assert_eq!(two_digits(675_840), (67, 5));
        assert_eq!(two_digits(9_996), (10, 4));
        assert_eq!(short_flops(284_147), "2.8e5");
    }

    #[test]
    fn tags_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.tag().parse::<Variant>().unwrap(), v);
        }
        assert!("bogus".parse::<Variant>().is_err());
    }
}
