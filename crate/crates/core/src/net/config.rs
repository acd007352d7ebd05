use std::fmt;

use crate::error::{Error, Result};
use crate::kernels::valid_out_len;

/// Activation shape `[channels, height, width]` for a single sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape { channels, height, width }
    }

    pub const fn flat(units: usize) -> Self {
        Shape::new(units, 1, 1)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    BinConv2d,
    BinConv1d,
    MaxPool,
    BatchNorm,
    Sign,
    BinDense,
    Softmax,
}

impl LayerKind {
    pub const ALL: [LayerKind; 7] = [
        LayerKind::BinConv2d,
        LayerKind::BinConv1d,
        LayerKind::MaxPool,
        LayerKind::BatchNorm,
        LayerKind::Sign,
        LayerKind::BinDense,
        LayerKind::Softmax,
    ];

    pub fn code(self) -> u8 {
        match self {
            LayerKind::BinConv2d => 1,
            LayerKind::BinConv1d => 2,
            LayerKind::MaxPool => 3,
            LayerKind::BatchNorm => 4,
            LayerKind::Sign => 5,
            LayerKind::BinDense => 6,
            LayerKind::Softmax => 7,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::BinConv2d => "binconv2d",
            LayerKind::BinConv1d => "binconv1d",
            LayerKind::MaxPool => "maxpool",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Sign => "sign",
            LayerKind::BinDense => "bindense",
            LayerKind::Softmax => "softmax",
        }
    }
}

/// One layer of a network description.
///
/// `BatchNorm` carries its channel count so descriptors are self-checking;
/// `new_batchnorm` configs may leave it at 0 and have it filled in by
/// [`NetworkConfig::new`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    BinConv2d { filters: usize, kernel: (usize, usize), stride: (usize, usize) },
    BinConv1d { filters: usize, kernel: usize, stride: usize },
    MaxPool { pool: (usize, usize) },
    BatchNorm { channels: usize },
    Sign,
    BinDense { units: usize },
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::BinConv2d { .. } => LayerKind::BinConv2d,
            LayerSpec::BinConv1d { .. } => LayerKind::BinConv1d,
            LayerSpec::MaxPool { .. } => LayerKind::MaxPool,
            LayerSpec::BatchNorm { .. } => LayerKind::BatchNorm,
            LayerSpec::Sign => LayerKind::Sign,
            LayerSpec::BinDense { .. } => LayerKind::BinDense,
            LayerSpec::Softmax => LayerKind::Softmax,
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(
            self,
            LayerSpec::BinConv2d { .. } | LayerSpec::BinConv1d { .. } | LayerSpec::BinDense { .. }
        )
    }

    /// Kind-specific dimensions in descriptor order.
    pub fn dims(&self) -> Vec<u32> {
        let d = |v: usize| v as u32;
        match *self {
            LayerSpec::BinConv2d { filters, kernel, stride } => {
                vec![d(filters), d(kernel.0), d(kernel.1), d(stride.0), d(stride.1)]
            }
            LayerSpec::BinConv1d { filters, kernel, stride } => {
                vec![d(filters), d(kernel), d(stride)]
            }
            LayerSpec::MaxPool { pool } => vec![d(pool.0), d(pool.1)],
            LayerSpec::BatchNorm { channels } => vec![d(channels)],
            LayerSpec::BinDense { units } => vec![d(units)],
            LayerSpec::Sign | LayerSpec::Softmax => vec![],
        }
    }

    pub fn from_dims(kind: LayerKind, dims: &[u32]) -> Result<Self> {
        let expected = match kind {
            LayerKind::BinConv2d => 5,
            LayerKind::BinConv1d => 3,
            LayerKind::MaxPool => 2,
            LayerKind::BatchNorm | LayerKind::BinDense => 1,
            LayerKind::Sign | LayerKind::Softmax => 0,
        };
        if dims.len() != expected {
            return Err(Error::dim(format!(
                "{} takes {expected} dims, got {}",
                kind.name(),
                dims.len()
            )));
        }
        let d: Vec<usize> = dims.iter().map(|&v| v as usize).collect();
        Ok(match kind {
            LayerKind::BinConv2d => LayerSpec::BinConv2d {
                filters: d[0],
                kernel: (d[1], d[2]),
                stride: (d[3], d[4]),
            },
            LayerKind::BinConv1d => LayerSpec::BinConv1d { filters: d[0], kernel: d[1], stride: d[2] },
            LayerKind::MaxPool => LayerSpec::MaxPool { pool: (d[0], d[1]) },
            LayerKind::BatchNorm => LayerSpec::BatchNorm { channels: d[0] },
            LayerKind::BinDense => LayerSpec::BinDense { units: d[0] },
            LayerKind::Sign => LayerSpec::Sign,
            LayerKind::Softmax => LayerSpec::Softmax,
        })
    }

    /// Shape of the layer output for a given input shape.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            LayerSpec::BinConv2d { filters, kernel, stride } => Ok(Shape::new(
                filters,
                valid_out_len(input.height, kernel.0, stride.0)?,
                valid_out_len(input.width, kernel.1, stride.1)?,
            )),
            LayerSpec::BinConv1d { filters, kernel, stride } => {
                if input.height != 1 {
                    return Err(Error::dim(format!(
                        "binconv1d needs a one-row input, got {input}"
                    )));
                }
                Ok(Shape::new(filters, 1, valid_out_len(input.width, kernel, stride)?))
            }
            LayerSpec::MaxPool { pool } => Ok(Shape::new(
                input.channels,
                valid_out_len(input.height, pool.0, pool.0)?,
                valid_out_len(input.width, pool.1, pool.1)?,
            )),
            LayerSpec::BatchNorm { channels } => {
                if channels != input.channels {
                    return Err(Error::dim(format!(
                        "batchnorm over {channels} channels fed {input}"
                    )));
                }
                Ok(input)
            }
            LayerSpec::BinDense { units } => Ok(Shape::flat(units)),
            LayerSpec::Sign | LayerSpec::Softmax => Ok(input),
        }
    }

    /// Weight tensor shape for binary layers given the layer input shape.
    pub fn weight_shape(&self, input: Shape) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::BinConv2d { filters, kernel, .. } => {
                Some(vec![filters, input.channels, kernel.0, kernel.1])
            }
            LayerSpec::BinConv1d { filters, kernel, .. } => Some(vec![filters, input.channels, kernel]),
            LayerSpec::BinDense { units } => Some(vec![units, input.len()]),
            _ => None,
        }
    }

    fn positive_dims(&self) -> bool {
        self.dims().iter().all(|&d| d > 0)
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::BinConv2d { filters, kernel, stride } => {
                write!(f, "binconv2d {filters} {}x{}", kernel.0, kernel.1)?;
                if stride != (1, 1) {
                    write!(f, " stride={}x{}", stride.0, stride.1)?;
                }
                Ok(())
            }
            LayerSpec::BinConv1d { filters, kernel, stride } => {
                write!(f, "binconv1d {filters} {kernel}")?;
                if stride != 1 {
                    write!(f, " stride={stride}")?;
                }
                Ok(())
            }
            LayerSpec::MaxPool { pool } => write!(f, "maxpool {}x{}", pool.0, pool.1),
            LayerSpec::BatchNorm { .. } => write!(f, "batchnorm"),
            LayerSpec::Sign => write!(f, "sign"),
            LayerSpec::BinDense { units } => write!(f, "bindense {units}"),
            LayerSpec::Softmax => write!(f, "softmax"),
        }
    }
}

/// Declarative architecture: input shape, ordered layers and class count.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkConfig {
    name: String,
    input: Shape,
    layers: Vec<LayerSpec>,
    class_count: usize,
    shapes: Vec<Shape>,
}

impl NetworkConfig {
    /// Validates the shape chain. Batch-norm layers declared with 0 channels
    /// pick up the channel count of their input.
    pub fn new(
        name: impl Into<String>,
        input: Shape,
        mut layers: Vec<LayerSpec>,
        class_count: usize,
    ) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::Parameter(format!("invalid network name {name:?}")));
        }
        if input.is_empty() {
            return Err(Error::dim("input shape must be positive"));
        }
        if class_count == 0 {
            return Err(Error::Parameter("class count must be positive".into()));
        }
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        let mut shape = input;
        shapes.push(shape);
        for (i, layer) in layers.iter_mut().enumerate() {
            if let LayerSpec::BatchNorm { channels } = layer {
                if *channels == 0 {
                    *channels = shape.channels;
                }
            }
            if !layer.positive_dims() {
                return Err(Error::dim(format!("layer {i} ({layer}) has a zero dimension")));
            }
            shape = layer
                .output_shape(shape)
                .map_err(|e| Error::dim(format!("layer {i} ({layer}): {e}")))?;
            shapes.push(shape);
        }
        if !layers.is_empty() && shape.len() != class_count {
            return Err(Error::dim(format!(
                "network output {shape} does not match {class_count} classes"
            )));
        }
        Ok(NetworkConfig { name, input, layers, class_count, shapes })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Input shape of layer `i`.
    pub fn shape_before(&self, i: usize) -> Shape {
        self.shapes[i]
    }

    /// Output shape of layer `i`.
    pub fn shape_after(&self, i: usize) -> Shape {
        self.shapes[i + 1]
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes.last().unwrap()
    }

    pub fn weight_shape(&self, i: usize) -> Option<Vec<usize>> {
        self.layers[i].weight_shape(self.shapes[i])
    }

    pub fn weight_len(&self, i: usize) -> usize {
        self.weight_shape(i).map_or(0, |s| s.iter().product())
    }

    /// Total number of binary weights.
    pub fn binary_param_count(&self) -> usize {
        (0..self.layers.len()).map(|i| self.weight_len(i)).sum()
    }

    /// Real-valued parameters kept at inference time: a scale and a shift
    /// per batch-norm channel.
    pub fn real_param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                LayerSpec::BatchNorm { channels } => 2 * channels,
                _ => 0,
            })
            .sum()
    }

    pub fn with_class_count(&self, classes: usize) -> Result<Self> {
        let mut layers = self.layers.clone();
        let last_dense = layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::BinDense { .. }))
            .ok_or_else(|| Error::Parameter("config has no dense output layer".into()))?;
        layers[last_dense] = LayerSpec::BinDense { units: classes };
        for l in &mut layers[last_dense + 1..] {
            if let LayerSpec::BatchNorm { channels } = l {
                *channels = classes;
            }
        }
        NetworkConfig::new(self.name.clone(), self.input, layers, classes)
    }

    pub fn with_name(&self, name: impl Into<String>) -> Result<Self> {
        NetworkConfig::new(name, self.input, self.layers.clone(), self.class_count)
    }

    /// Canonical text form, also used for the config digest.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "name = {}\ninput = {}\nclasses = {}\n",
            self.name, self.input, self.class_count
        );
        for l in &self.layers {
            s.push_str(&format!("layer = {l}\n"));
        }
        s
    }

    /// Parses `key = value` lines (`name`, `input`, `classes`, `preset`,
    /// repeated `layer`), each paired with its line number for errors.
    pub fn parse_lines<'a>(
        lines: impl IntoIterator<Item = (usize, &'a str)>,
    ) -> Result<Self> {
        let mut name = None;
        let mut input = None;
        let mut classes = None;
        let mut preset: Option<NetworkConfig> = None;
        let mut layers = Vec::new();
        let mut last_line = 0;
        for (line_no, raw) in lines {
            last_line = line_no;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line: line_no, message };
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            match key {
                "name" => name = Some(value.to_string()),
                "input" => input = Some(parse_shape(value).map_err(err)?),
                "classes" => {
                    classes = Some(value.parse::<usize>().map_err(|e| err(format!("classes: {e}")))?)
                }
                "preset" => {
                    preset = Some(preset_by_name(value).ok_or_else(|| err(format!("unknown preset {value:?}")))?)
                }
                "layer" => layers.push(parse_layer(value).map_err(err)?),
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        let at_end = |message: String| Error::Config { line: last_line, message };
        let built = match preset {
            Some(p) => {
                let mut cfg = if layers.is_empty() {
                    p
                } else {
                    NetworkConfig::new(p.name.clone(), input.unwrap_or(p.input), layers, classes.unwrap_or(p.class_count))
                        .map_err(|e| at_end(e.to_string()))?
                };
                if let Some(c) = classes {
                    if c != cfg.class_count {
                        cfg = cfg.with_class_count(c).map_err(|e| at_end(e.to_string()))?;
                    }
                }
                if let Some(n) = name {
                    cfg = cfg.with_name(n).map_err(|e| at_end(e.to_string()))?;
                }
                cfg
            }
            None => NetworkConfig::new(
                name.ok_or_else(|| at_end("missing name".into()))?,
                input.ok_or_else(|| at_end("missing input".into()))?,
                layers,
                classes.ok_or_else(|| at_end("missing classes".into()))?,
            )
            .map_err(|e| at_end(e.to_string()))?,
        };
        Ok(built)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_lines(text.lines().enumerate().map(|(i, l)| (i + 1, l)))
    }
}

fn parse_pair(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.split_once('x')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

fn parse_shape(s: &str) -> std::result::Result<Shape, String> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| format!("bad shape {s:?}: {e}"))?;
    match parts[..] {
        [c, h, w] => Ok(Shape::new(c, h, w)),
        [h, w] => Ok(Shape::new(1, h, w)),
        [n] => Ok(Shape::flat(n)),
        _ => Err(format!("bad shape {s:?}")),
    }
}

fn parse_layer(s: &str) -> std::result::Result<LayerSpec, String> {
    let mut parts = s.split_whitespace();
    let kind = parts.next().ok_or("empty layer")?;
    let mut positional = Vec::new();
    let mut stride = None;
    for p in parts {
        match p.strip_prefix("stride=") {
            Some(v) => stride = Some(v.to_string()),
            None => positional.push(p),
        }
    }
    let num = |i: usize| -> std::result::Result<usize, String> {
        positional
            .get(i)
            .ok_or(format!("{kind}: missing argument {}", i + 1))?
            .parse::<usize>()
            .map_err(|e| format!("{kind}: {e}"))
    };
    let pair = |i: usize| -> std::result::Result<(usize, usize), String> {
        let v = positional.get(i).ok_or(format!("{kind}: missing extent"))?;
        parse_pair(v).ok_or(format!("{kind}: bad extent {v:?}"))
    };
    let arity = |n: usize| -> std::result::Result<(), String> {
        if positional.len() == n {
            Ok(())
        } else {
            Err(format!("{kind}: expected {n} arguments, got {}", positional.len()))
        }
    };
    let spec = match kind {
        "binconv2d" => {
            arity(2)?;
            let stride = match &stride {
                Some(v) => parse_pair(v).ok_or(format!("bad stride {v:?}"))?,
                None => (1, 1),
            };
            LayerSpec::BinConv2d { filters: num(0)?, kernel: pair(1)?, stride }
        }
        "binconv1d" => {
            arity(2)?;
            let stride = match &stride {
                Some(v) => v.parse().map_err(|e| format!("bad stride: {e}"))?,
                None => 1,
            };
            LayerSpec::BinConv1d { filters: num(0)?, kernel: num(1)?, stride }
        }
        "maxpool" => {
            arity(1)?;
            let v = positional[0];
            let pool = parse_pair(v)
                .or_else(|| v.parse().ok().map(|p| (1, p)))
                .ok_or(format!("maxpool: bad extent {v:?}"))?;
            LayerSpec::MaxPool { pool }
        }
        "batchnorm" => {
            arity(0)?;
            LayerSpec::BatchNorm { channels: 0 }
        }
        "sign" => {
            arity(0)?;
            LayerSpec::Sign
        }
        "bindense" => {
            arity(1)?;
            LayerSpec::BinDense { units: num(0)? }
        }
        "softmax" => {
            arity(0)?;
            LayerSpec::Softmax
        }
        other => return Err(format!("unknown layer kind {other:?}")),
    };
    if stride.is_some() && !matches!(kind, "binconv2d" | "binconv1d") {
        return Err(format!("{kind} takes no stride"));
    }
    Ok(spec)
}

/// Name of the reconstructed 297k-parameter architecture.
pub const BIPEDALNET_V1: &str = "bipedalnet-v1";

/// Two 2-d convolutions across the sensor rows, then two 1-d temporal
/// convolutions, a 152-unit hidden dense layer and a 50-way output.
/// Each convolution is followed by max-pool, batch norm and sign.
pub fn bipedalnet_v1() -> NetworkConfig {
    use LayerSpec::*;
    let bn = BatchNorm { channels: 0 };
    NetworkConfig::new(
        BIPEDALNET_V1,
        Shape::new(1, 6, 200),
        vec![
            BinConv2d { filters: 32, kernel: (3, 5), stride: (1, 1) },
            MaxPool { pool: (2, 2) },
            bn,
            Sign,
            BinConv2d { filters: 64, kernel: (2, 5), stride: (1, 1) },
            MaxPool { pool: (1, 2) },
            bn,
            Sign,
            BinConv1d { filters: 128, kernel: 3, stride: 1 },
            MaxPool { pool: (1, 2) },
            bn,
            Sign,
            BinConv1d { filters: 128, kernel: 3, stride: 1 },
            MaxPool { pool: (1, 2) },
            bn,
            Sign,
            BinDense { units: 152 },
            bn,
            Sign,
            BinDense { units: 50 },
            bn,
            Softmax,
        ],
        50,
    )
    .expect("bipedalnet-v1 is a valid config")
}

/// Accelerometer-only variant of bipedalnet-v1 (3 sensor rows).
pub fn bipedalnet_v1_acc() -> NetworkConfig {
    use LayerSpec::*;
    let bn = BatchNorm { channels: 0 };
    NetworkConfig::new(
        "bipedalnet-v1-acc",
        Shape::new(1, 3, 200),
        vec![
            BinConv2d { filters: 32, kernel: (2, 5), stride: (1, 1) },
            MaxPool { pool: (2, 2) },
            bn,
            Sign,
            BinConv2d { filters: 64, kernel: (1, 5), stride: (1, 1) },
            MaxPool { pool: (1, 2) },
            bn,
            Sign,
            BinConv1d { filters: 128, kernel: 3, stride: 1 },
            MaxPool { pool: (1, 2) },
            bn,
            Sign,
            BinConv1d { filters: 128, kernel: 3, stride: 1 },
            MaxPool { pool: (1, 2) },
            bn,
            Sign,
            BinDense { units: 152 },
            bn,
            Sign,
            BinDense { units: 50 },
            bn,
            Softmax,
        ],
        50,
    )
    .expect("bipedalnet-v1-acc is a valid config")
}

pub fn preset_by_name(name: &str) -> Option<NetworkConfig> {
    match name {
        BIPEDALNET_V1 => Some(bipedalnet_v1()),
        "bipedalnet-v1-acc" => Some(bipedalnet_v1_acc()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bipedalnet_param_counts() {
        let cfg = bipedalnet_v1();
        let per_layer: Vec<usize> = (0..cfg.layers().len())
            .map(|i| cfg.weight_len(i))
            .filter(|&n| n > 0)
            .collect();
        assert_eq!(per_layer, vec![480, 20_480, 24_576, 49_152, 194_560, 7_600]);
        assert_eq!(cfg.binary_param_count(), 296_848);
        assert_eq!(cfg.real_param_count(), 1_108);
    }

    #[test]
    fn bipedalnet_shape_chain() {
        let cfg = bipedalnet_v1();
        let s = |c, h, w| Shape::new(c, h, w);
        let expected = [
            s(1, 6, 200),
            s(32, 4, 196),
            s(32, 2, 98),
            s(32, 2, 98),
            s(32, 2, 98),
            s(64, 1, 94),
            s(64, 1, 47),
            s(64, 1, 47),
            s(64, 1, 47),
            s(128, 1, 45),
            s(128, 1, 22),
            s(128, 1, 22),
            s(128, 1, 22),
            s(128, 1, 20),
            s(128, 1, 10),
            s(128, 1, 10),
            s(128, 1, 10),
            Shape::flat(152),
            Shape::flat(152),
            Shape::flat(152),
            Shape::flat(50),
            Shape::flat(50),
            Shape::flat(50),
        ];
        assert_eq!(cfg.shapes, expected);
        assert_eq!(cfg.shape_before(16).len(), 1280);
    }

    #[test]
    fn small_counts() {
        let cfg = NetworkConfig::new("d", Shape::flat(10), vec![LayerSpec::BinDense { units: 5 }], 5).unwrap();
        assert_eq!(cfg.binary_param_count(), 50);
        let empty = NetworkConfig::new("e", Shape::flat(3), vec![], 3).unwrap();
        assert_eq!(empty.binary_param_count(), 0);
    }

    #[test]
    fn broken_chain_is_rejected() {
        let err = NetworkConfig::new(
            "bad",
            Shape::new(1, 6, 20),
            vec![LayerSpec::BinConv1d { filters: 4, kernel: 3, stride: 1 }],
            4,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
        let err = NetworkConfig::new(
            "bad",
            Shape::new(1, 1, 4),
            vec![LayerSpec::BinConv1d { filters: 4, kernel: 5, stride: 1 }],
            4,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
        assert!(NetworkConfig::new("bad", Shape::flat(4), vec![LayerSpec::BinDense { units: 3 }], 4).is_err());
    }

    #[test]
    fn text_round_trip() {
        for cfg in [bipedalnet_v1(), bipedalnet_v1_acc(), bipedalnet_v1().with_class_count(21).unwrap()] {
            let parsed = NetworkConfig::parse(&cfg.to_text()).unwrap();
            assert_eq!(parsed, cfg);
        }
        let strided = NetworkConfig::parse(
            "name = s\ninput = 2x2x30\nclasses = 4\nlayer = binconv2d 3 2x4 stride=1x2\nlayer = binconv1d 5 3 stride=2\nlayer = bindense 4\n",
        )
        .unwrap();
        assert_eq!(NetworkConfig::parse(&strided.to_text()).unwrap(), strided);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = NetworkConfig::parse("name = x\ninput = 1x2x3\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
        let err = NetworkConfig::parse("name = x\nlayer = conv3d 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
    }

    #[test]
    fn preset_with_overrides() {
        let cfg = NetworkConfig::parse("preset = bipedalnet-v1\nclasses = 21\n").unwrap();
        assert_eq!(cfg.class_count(), 21);
        assert_eq!(cfg.real_param_count(), 1_008 + 42);
        assert_eq!(cfg.name(), BIPEDALNET_V1);
    }

    #[test]
    fn kind_codes_round_trip() {
        for k in LayerKind::ALL {
            assert_eq!(LayerKind::from_code(k.code()), Some(k));
        }
        assert_eq!(LayerKind::from_code(0), None);
    }
}
