//! Self-describing text checkpoints.
//!
//! A checkpoint is a single UTF-8 document of `key value...` lines with a
//! fixed emission order, so byte equality of two checkpoints implies model
//! equality. Parameter arrays are written as decimal floats in shortest
//! round-trip form (Rust's default float `Display`), which reparse to the
//! exact same bits.
//!
//! Layout, in order:
//!
//! ```text
//! osrlab-checkpoint
//! format_version 1
//! kind backbone | recognizer
//! <body>
//! end
//! ```
//!
//! A backbone body: `seed`, `epochs`, `final_loss`, `origin`, `classes N`
//! followed by N `class <name>` lines, `input_shape`, `feature_layers N`
//! followed by N `layer <kind> [dims]` lines, `fc1 <width>`,
//! `fc_soft <classes>`, then one `tensor <name> <len>` line plus a line of
//! floats per parameter tensor in canonical order. A recognizer body is
//! `delta` plus the backbone body between `backbone_begin`/`backbone_end`
//! and the confidence subnetwork (`input`, `hidden`, `seed`, tensors)
//! between `cs_begin`/`cs_end`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{BackboneNet, LayerSpec, WeightInit};
use crate::osrnet::{assemble, ConfidenceSubnetwork, OpenSetRecognizer};

const MAGIC: &str = "osrlab-checkpoint";
const FORMAT_VERSION: u32 = 1;

fn push_floats(out: &mut String, name: &str, values: &[f64]) {
    out.push_str(&format!("tensor {name} {}\n", values.len()));
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        out.push_str(&format!("{v}"));
        first = false;
    }
    out.push('\n');
}

fn backbone_body(net: &BackboneNet, out: &mut String) {
    out.push_str(&format!("seed {}\n", net.init_seed()));
    out.push_str(&format!("epochs {}\n", net.trained_epochs()));
    match net.final_loss() {
        Some(l) => out.push_str(&format!("final_loss {l}\n")),
        None => out.push_str("final_loss none\n"),
    }
    out.push_str(&format!("origin {}\n", net.origin()));
    out.push_str(&format!("classes {}\n", net.class_names().len()));
    for name in net.class_names() {
        out.push_str(&format!("class {name}\n"));
    }
    out.push_str("input_shape");
    for d in net.input_shape() {
        out.push_str(&format!(" {d}"));
    }
    out.push('\n');
    let specs = net.feature_specs();
    out.push_str(&format!("feature_layers {}\n", specs.len()));
    for spec in &specs {
        match spec {
            LayerSpec::Dense { in_dim, out_dim } => {
                out.push_str(&format!("layer dense {in_dim} {out_dim}\n"))
            }
            LayerSpec::Relu => out.push_str("layer relu\n"),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
            } => out.push_str(&format!("layer conv2d {in_channels} {out_channels}\n")),
            LayerSpec::Flatten => out.push_str("layer flatten\n"),
            LayerSpec::Softmax => out.push_str("layer softmax\n"),
        }
    }
    out.push_str(&format!("fc1 {}\n", net.fc1_width()));
    out.push_str(&format!("fc_soft {}\n", net.n_classes()));
    let names = net.param_names();
    for (name, values) in names.iter().zip(net.param_slices()) {
        push_floats(out, name, values);
    }
}

pub fn backbone_to_string(net: &BackboneNet) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("format_version {FORMAT_VERSION}\n"));
    out.push_str("kind backbone\n");
    backbone_body(net, &mut out);
    out.push_str("end\n");
    out
}

fn cs_body(cs: &ConfidenceSubnetwork, out: &mut String) {
    out.push_str(&format!("input {}\n", cs.input_width()));
    out.push_str(&format!("hidden {}\n", cs.hidden_width()));
    out.push_str(&format!("seed {}\n", cs.init_seed()));
    push_floats(out, "cs.h1.weight", &cs.h1.weights);
    push_floats(out, "cs.h1.bias", &cs.h1.biases);
    push_floats(out, "cs.h2.weight", &cs.h2.weights);
    push_floats(out, "cs.h2.bias", &cs.h2.biases);
    push_floats(out, "cs.out.weight", &cs.out.weights);
    push_floats(out, "cs.out.bias", &cs.out.biases);
}

pub fn recognizer_to_string(osr: &OpenSetRecognizer) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("format_version {FORMAT_VERSION}\n"));
    out.push_str("kind recognizer\n");
    out.push_str(&format!("delta {}\n", osr.delta));
    out.push_str("backbone_begin\n");
    backbone_body(&osr.backbone, &mut out);
    out.push_str("backbone_end\n");
    out.push_str("cs_begin\n");
    cs_body(&osr.cs, &mut out);
    out.push_str("cs_end\n");
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    lines: Vec<&'a str>,
    cursor: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            lines: text.lines().collect(),
            cursor: 0,
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Checkpoint {
            line: self.cursor,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        let line = self
            .lines
            .get(self.cursor)
            .copied()
            .ok_or(Error::Checkpoint {
                line: self.cursor,
                message: "unexpected end of checkpoint".into(),
            })?;
        self.cursor += 1;
        Ok(line)
    }

    fn expect(&mut self, literal: &str) -> Result<()> {
        let line = self.next()?;
        if line != literal {
            return Err(self.err(format!("expected {literal:?}, got {line:?}")));
        }
        Ok(())
    }

    /// Next line split as `key rest`; fails unless the key matches.
    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest),
            None if line == key => Ok(""),
            _ => Err(self.err(format!("expected key {key:?}, got {line:?}"))),
        }
    }

    fn keyed_parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let rest = self.keyed(key)?;
        rest.parse::<T>()
            .map_err(|_| self.err(format!("cannot parse {rest:?} as {key}")))
    }
}

fn parse_tensor(lines: &mut Lines<'_>, want_name: &str, want_len: usize) -> Result<Vec<f64>> {
    let header = lines.keyed("tensor")?;
    let (name, len) = header
        .rsplit_once(' ')
        .ok_or_else(|| lines.err("malformed tensor header"))?;
    if name != want_name {
        return Err(lines.err(format!("expected tensor {want_name:?}, got {name:?}")));
    }
    let len: usize = len
        .parse()
        .map_err(|_| lines.err(format!("bad tensor length {len:?}")))?;
    if len != want_len {
        return Err(lines.err(format!(
            "tensor {name} has {len} values, expected {want_len}"
        )));
    }
    let data_line = if len == 0 { "" } else { lines.next()? };
    let mut values = Vec::with_capacity(len);
    for tok in data_line.split_whitespace() {
        let v: f64 = tok
            .parse()
            .map_err(|_| lines.err(format!("bad float {tok:?} in tensor {name}")))?;
        values.push(v);
    }
    if values.len() != len {
        return Err(lines.err(format!(
            "tensor {name} has {} values, header says {len}",
            values.len()
        )));
    }
    Ok(values)
}

fn parse_backbone_body(lines: &mut Lines<'_>) -> Result<BackboneNet> {
    let seed: u64 = lines.keyed_parse("seed")?;
    let epochs: usize = lines.keyed_parse("epochs")?;
    let final_loss_raw = lines.keyed("final_loss")?.to_string();
    let final_loss = if final_loss_raw == "none" {
        None
    } else {
        Some(
            final_loss_raw
                .parse::<f64>()
                .map_err(|_| lines.err(format!("bad final_loss {final_loss_raw:?}")))?,
        )
    };
    let origin = lines.keyed("origin")?.to_string();
    let n_names: usize = lines.keyed_parse("classes")?;
    let mut class_names = Vec::with_capacity(n_names);
    for _ in 0..n_names {
        class_names.push(lines.keyed("class")?.to_string());
    }
    let shape_raw = lines.keyed("input_shape")?;
    let input_shape: Vec<usize> = shape_raw
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| lines.err(format!("bad dim {t:?}"))))
        .collect::<Result<_>>()?;
    let n_layers: usize = lines.keyed_parse("feature_layers")?;
    let mut specs = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let rest = lines.keyed("layer")?;
        let mut toks = rest.split_whitespace();
        let kind = toks.next().unwrap_or("");
        let spec = match kind {
            "dense" => {
                let in_dim = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| lines.err("dense layer needs in dim"))?;
                let out_dim = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| lines.err("dense layer needs out dim"))?;
                LayerSpec::Dense { in_dim, out_dim }
            }
            "conv2d" => {
                let in_channels = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| lines.err("conv layer needs in channels"))?;
                let out_channels = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| lines.err("conv layer needs out channels"))?;
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                }
            }
            "relu" => LayerSpec::Relu,
            "flatten" => LayerSpec::Flatten,
            "softmax" => LayerSpec::Softmax,
            other => return Err(lines.err(format!("unknown layer kind {other:?}"))),
        };
        specs.push(spec);
    }
    let fc1_width: usize = lines.keyed_parse("fc1")?;
    let n_classes: usize = lines.keyed_parse("fc_soft")?;
    if n_classes != class_names.len() {
        return Err(lines.err(format!(
            "{} class names but fc_soft width {n_classes}",
            class_names.len()
        )));
    }

    let mut net = BackboneNet::new(
        &input_shape,
        &specs,
        fc1_width,
        n_classes,
        WeightInit::Zeros,
        seed,
    )
    .map_err(|e| lines.err(format!("invalid architecture: {e}")))?;
    let names = net.param_names();
    let lens: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
    for ((name, len), slot) in names.iter().zip(lens).zip(net.param_slices_mut()) {
        let values = parse_tensor(lines, name, len)?;
        slot.copy_from_slice(&values);
    }
    net.set_training_context(&class_names, &origin)
        .map_err(|e| lines.err(e.to_string()))?;
    net.restore_metadata(seed, epochs, final_loss);
    Ok(net)
}

fn parse_cs_body(lines: &mut Lines<'_>) -> Result<ConfidenceSubnetwork> {
    let input: usize = lines.keyed_parse("input")?;
    let hidden: usize = lines.keyed_parse("hidden")?;
    let seed: u64 = lines.keyed_parse("seed")?;
    let mut cs = ConfidenceSubnetwork::new(input, hidden, WeightInit::Zeros, seed)
        .map_err(|e| lines.err(e.to_string()))?;
    cs.h1.weights = parse_tensor(lines, "cs.h1.weight", input * hidden)?;
    cs.h1.biases = parse_tensor(lines, "cs.h1.bias", hidden)?;
    cs.h2.weights = parse_tensor(lines, "cs.h2.weight", hidden * hidden)?;
    cs.h2.biases = parse_tensor(lines, "cs.h2.bias", hidden)?;
    cs.out.weights = parse_tensor(lines, "cs.out.weight", hidden)?;
    cs.out.biases = parse_tensor(lines, "cs.out.bias", 1)?;
    cs.restore_seed(seed);
    Ok(cs)
}

fn parse_header<'a>(lines: &mut Lines<'a>) -> Result<&'a str> {
    lines.expect(MAGIC)?;
    let version: u32 = lines.keyed_parse("format_version")?;
    if version != FORMAT_VERSION {
        return Err(lines.err(format!("unsupported format_version {version}")));
    }
    lines.keyed("kind")
}

pub fn backbone_from_str(text: &str) -> Result<BackboneNet> {
    let mut lines = Lines::new(text);
    let kind = parse_header(&mut lines)?;
    if kind != "backbone" {
        return Err(lines.err(format!("expected kind backbone, got {kind:?}")));
    }
    let net = parse_backbone_body(&mut lines)?;
    lines.expect("end")?;
    Ok(net)
}

pub fn recognizer_from_str(text: &str) -> Result<OpenSetRecognizer> {
    let mut lines = Lines::new(text);
    let kind = parse_header(&mut lines)?;
    if kind != "recognizer" {
        return Err(lines.err(format!("expected kind recognizer, got {kind:?}")));
    }
    let delta: f64 = lines.keyed_parse("delta")?;
    lines.expect("backbone_begin")?;
    let backbone = parse_backbone_body(&mut lines)?;
    lines.expect("backbone_end")?;
    lines.expect("cs_begin")?;
    let cs = parse_cs_body(&mut lines)?;
    lines.expect("cs_end")?;
    lines.expect("end")?;
    assemble(backbone, cs, delta)
}

pub fn cs_to_string(cs: &ConfidenceSubnetwork) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("format_version {FORMAT_VERSION}\n"));
    out.push_str("kind confidence-subnetwork\n");
    cs_body(cs, &mut out);
    out.push_str("end\n");
    out
}

pub fn cs_from_str(text: &str) -> Result<ConfidenceSubnetwork> {
    let mut lines = Lines::new(text);
    let kind = parse_header(&mut lines)?;
    if kind != "confidence-subnetwork" {
        return Err(lines.err(format!("expected kind confidence-subnetwork, got {kind:?}")));
    }
    let cs = parse_cs_body(&mut lines)?;
    lines.expect("end")?;
    Ok(cs)
}

pub fn save_cs(cs: &ConfidenceSubnetwork, path: &Path) -> Result<()> {
    std::fs::write(path, cs_to_string(cs))?;
    Ok(())
}

pub fn load_cs(path: &Path) -> Result<ConfidenceSubnetwork> {
    cs_from_str(&std::fs::read_to_string(path)?)
}

pub fn save_backbone(net: &BackboneNet, path: &Path) -> Result<()> {
    std::fs::write(path, backbone_to_string(net))?;
    Ok(())
}

pub fn load_backbone(path: &Path) -> Result<BackboneNet> {
    backbone_from_str(&std::fs::read_to_string(path)?)
}

pub fn save_recognizer(osr: &OpenSetRecognizer, path: &Path) -> Result<()> {
    std::fs::write(path, recognizer_to_string(osr))?;
    Ok(())
}

pub fn load_recognizer(path: &Path) -> Result<OpenSetRecognizer> {
    recognizer_from_str(&std::fs::read_to_string(path)?)
}
