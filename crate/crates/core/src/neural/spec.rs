//! Network description and the per-layer geometry derived from it.

use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::error::{Result, SlpError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

/// The final power-scaling stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `X̂ = X_temp / ‖X_temp‖_F · sqrt(min(‖X_temp‖_F, P·N_par))`, taken
    /// literally: the output squared norm is `min(‖X_temp‖_F, P·N_par)`.
    #[default]
    Literal,
    /// Euclidean projection onto `‖X̂‖_F² ≤ P·N_par`.
    BallProjection,
}

/// Architecture of the precoding network.
///
/// The input is `H` as a `K × N_t` image with two channels (real and
/// imaginary parts). Convolutions use "same" padding. Their flattened output
/// feeds `branches` identical stacks of dense layers; `residual_links`
/// `(src, dst)` add the output of layer `src` to that of layer `dst` inside
/// every branch. The branch outputs are concatenated into the trunk, which
/// ends in a linear layer of width `2·N_t·N_par`. Every hidden layer is
/// followed by the activation and then batch normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub users: usize,
    pub antennas: usize,
    /// PSK order `M`.
    pub order: usize,
    /// Average power per symbol vector `P`.
    pub power_budget: f64,
    pub conv_layers: Vec<ConvSpec>,
    pub branches: usize,
    pub branch_widths: Vec<usize>,
    pub residual_links: Vec<(usize, usize)>,
    pub trunk_widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "yes")]
    pub batch_norm: bool,
    #[serde(default)]
    pub scaling: Scaling,
}

fn yes() -> bool {
    true
}

impl NetworkSpec {
    /// Full-size architecture: three convolutions of 256 filters (the first
    /// `K × 1` with stride `(K, 1)`), two branches of widths
    /// 2048/2048/8192/2048/8192 with the third layer's output added to the
    /// fifth, and a 2048-wide trunk layer.
    pub fn full(users: usize, antennas: usize, order: usize, power_budget: f64) -> Self {
        Self {
            users,
            antennas,
            order,
            power_budget,
            conv_layers: vec![
                ConvSpec {
                    filters: 256,
                    kernel: (users, 1),
                    stride: (users, 1),
                },
                ConvSpec {
                    filters: 256,
                    kernel: (1, 1),
                    stride: (1, 1),
                },
                ConvSpec {
                    filters: 256,
                    kernel: (1, 1),
                    stride: (1, 1),
                },
            ],
            branches: 2,
            branch_widths: vec![2048, 2048, 8192, 2048, 8192],
            residual_links: vec![(2, 4)],
            trunk_widths: vec![2048],
            activation: Activation::Relu,
            batch_norm: true,
            scaling: Scaling::Literal,
        }
    }

    /// [`full`](Self::full) with every width divided by `divisor`.
    pub fn narrowed(users: usize, antennas: usize, order: usize, power_budget: f64, divisor: usize) -> Self {
        let d = divisor.max(1);
        let shrink = |w: usize| (w / d).max(1);
        let mut spec = Self::full(users, antennas, order, power_budget);
        spec.conv_layers.iter_mut().for_each(|c| c.filters = shrink(c.filters));
        spec.branch_widths.iter_mut().for_each(|w| *w = shrink(*w));
        spec.trunk_widths.iter_mut().for_each(|w| *w = shrink(*w));
        spec
    }

    pub fn constellation(&self) -> Result<Constellation> {
        Constellation::new(self.order, 0.0)
    }

    pub fn n_par(&self) -> Result<usize> {
        self.constellation()?.reduced_count(self.users)
    }

    pub fn output_dim(&self) -> Result<usize> {
        Ok(2 * self.antennas * self.n_par()?)
    }

    /// Input tensor shape `(channels, K, N_t)`.
    pub fn input_shape(&self) -> (usize, usize, usize) {
        (2, self.users, self.antennas)
    }

    pub fn validate(&self) -> Result<()> {
        self.plan().map(|_| ())
    }

    pub(crate) fn plan(&self) -> Result<Plan> {
        if self.users == 0 || self.antennas == 0 {
            return Err(SlpError::arg("network needs at least one user and one antenna"));
        }
        if !(self.power_budget > 0.0) || !self.power_budget.is_finite() {
            return Err(SlpError::arg("power budget must be positive"));
        }
        let n_par = self.n_par()?;
        let output = 2 * self.antennas * n_par;

        let mut layers = Vec::new();
        let (mut h, mut w, mut c) = (self.users, self.antennas, 2);
        for (i, conv) in self.conv_layers.iter().enumerate() {
            let (kh, kw) = conv.kernel;
            let (sh, sw) = conv.stride;
            if conv.filters == 0 || kh == 0 || kw == 0 || sh == 0 || sw == 0 {
                return Err(SlpError::arg(format!("conv layer {} has a zero dimension", i + 1)));
            }
            let (out_h, out_w) = (h.div_ceil(sh), w.div_ceil(sw));
            let pad_h = ((out_h - 1) * sh + kh).saturating_sub(h);
            let pad_w = ((out_w - 1) * sw + kw).saturating_sub(w);
            layers.push(Layer {
                name: format!("conv{}", i + 1),
                kind: Kind::Conv(ConvGeom {
                    in_h: h,
                    in_w: w,
                    cin: c,
                    kh,
                    kw,
                    sh,
                    sw,
                    out_h,
                    out_w,
                    pad_t: pad_h / 2,
                    pad_l: pad_w / 2,
                }),
                fan_in: kh * kw * c,
                out: conv.filters,
                hidden: true,
            });
            (h, w, c) = (out_h, out_w, conv.filters);
        }
        let flat = h * w * c;

        if (self.branches == 0) != self.branch_widths.is_empty() {
            return Err(SlpError::arg("branch count and branch widths disagree"));
        }
        for &(src, dst) in &self.residual_links {
            if src >= dst || dst >= self.branch_widths.len() {
                return Err(SlpError::arg(format!("residual link ({src}, {dst}) out of order or range")));
            }
            if self.branch_widths[src] != self.branch_widths[dst] {
                return Err(SlpError::arg(format!(
                    "residual link ({src}, {dst}) joins widths {} and {}",
                    self.branch_widths[src], self.branch_widths[dst]
                )));
            }
        }
        if self.branch_widths.iter().chain(&self.trunk_widths).any(|&w| w == 0) {
            return Err(SlpError::arg("dense layer width must be positive"));
        }
        let dense = |name: String, fan_in: usize, out: usize, hidden: bool| Layer {
            name,
            kind: Kind::Dense,
            fan_in,
            out,
            hidden,
        };
        for b in 0..self.branches {
            let mut fan_in = flat;
            for (i, &width) in self.branch_widths.iter().enumerate() {
                layers.push(dense(format!("branch{}.fc{}", b + 1, i + 1), fan_in, width, true));
                fan_in = width;
            }
        }
        let mut fan_in = match self.branch_widths.last() {
            Some(&w) => w * self.branches,
            None => flat,
        };
        for (i, &width) in self.trunk_widths.iter().enumerate() {
            layers.push(dense(format!("trunk.fc{}", i + 1), fan_in, width, true));
            fan_in = width;
        }
        layers.push(dense("output".into(), fan_in, output, false));

        Ok(Plan {
            layers,
            convs: self.conv_layers.len(),
            branches: self.branches,
            branch_len: self.branch_widths.len(),
            links: self.residual_links.clone(),
            input: 2 * self.users * self.antennas,
            output,
            activation: self.activation,
            batch_norm: self.batch_norm,
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_t: usize,
    pub pad_l: usize,
}

impl ConvGeom {
    /// True when the im2col matrix is the input itself.
    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.sh == 1 && self.sw == 1
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Kind {
    Conv(ConvGeom),
    Dense,
}

/// One affine layer. Its input is viewed as a `rows × fan_in` matrix and its
/// output as `rows × out`, with `rows = batch · positions`.
#[derive(Debug, Clone)]
pub(crate) struct Layer {
    pub name: String,
    pub kind: Kind,
    pub fan_in: usize,
    pub out: usize,
    /// Hidden layers carry the activation and batch normalization.
    pub hidden: bool,
}

impl Layer {
    pub fn positions(&self) -> usize {
        match &self.kind {
            Kind::Conv(g) => g.out_h * g.out_w,
            Kind::Dense => 1,
        }
    }
}

/// Layers in declaration order: convolutions, branch 1, branch 2, ...,
/// trunk, output.
#[derive(Debug, Clone)]
pub(crate) struct Plan {
    pub layers: Vec<Layer>,
    pub convs: usize,
    pub branches: usize,
    pub branch_len: usize,
    pub links: Vec<(usize, usize)>,
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
    pub batch_norm: bool,
}

impl Plan {
    pub fn branch_layer(&self, b: usize, i: usize) -> usize {
        self.convs + b * self.branch_len + i
    }

    pub fn trunk_start(&self) -> usize {
        self.convs + self.branches * self.branch_len
    }

    pub fn has_bn(&self, li: usize) -> bool {
        self.batch_norm && self.layers[li].hidden
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_architecture_shapes() {
        let spec = NetworkSpec::full(3, 4, 4, 1.0);
        let plan = spec.plan().unwrap();
        assert_eq!(plan.layers.len(), 3 + 10 + 1 + 1);
        assert_eq!(spec.output_dim().unwrap(), 2 * 4 * 16);
        // The (K, 1) stride collapses the user axis.
        match &plan.layers[0].kind {
            Kind::Conv(g) => assert_eq!((g.out_h, g.out_w, g.pad_t, g.pad_l), (1, 4, 0, 0)),
            Kind::Dense => panic!(),
        }
        assert_eq!(plan.layers[3].fan_in, 4 * 256);
        assert_eq!(plan.layers[plan.trunk_start()].fan_in, 2 * 8192);
        assert_eq!(plan.layers.last().unwrap().out, 128);
    }

    #[test]
    fn same_padding_geometry() {
        let mut spec = NetworkSpec::narrowed(3, 5, 4, 1.0, 64);
        spec.conv_layers = vec![ConvSpec {
            filters: 2,
            kernel: (3, 2),
            stride: (2, 2),
        }];
        let plan = spec.plan().unwrap();
        match &plan.layers[0].kind {
            // out = ceil(3/2) x ceil(5/2); pad rows (2-1)*2+3-3 = 2, cols (3-1)*2+2-5 = 1.
            Kind::Conv(g) => assert_eq!((g.out_h, g.out_w, g.pad_t, g.pad_l), (2, 3, 1, 0)),
            Kind::Dense => panic!(),
        }
    }

    #[test]
    fn rejects_bad_residuals() {
        let mut spec = NetworkSpec::narrowed(2, 2, 4, 1.0, 64);
        spec.residual_links = vec![(1, 2)];
        assert!(spec.validate().is_err());
        spec.residual_links = vec![(4, 2)];
        assert!(spec.validate().is_err());
        spec.residual_links = vec![(0, 1)];
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn spec_roundtrips_through_json() {
        let spec = NetworkSpec::narrowed(3, 4, 4, 1.0, 16);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<NetworkSpec>(&text).unwrap(), spec);
    }
}
