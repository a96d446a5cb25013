//! Plain-text parameter checkpoints.
//!
//! ```text
//! mcm-network v1
//! input_dim 9
//! hidden_dims 64 64
//! output_dims 4 8
//! head_extra_input_dims 0 9
//! leaky_slope 1e-2
//! layer 9 64
//! w <fan_in * fan_out values, row-major>
//! b <fan_out values>
//! ...
//! end
//! ```
//!
//! Floats are written in shortest round-trip form, so a write/read cycle is
//! bit-exact.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::network::{Dense, Network, NetworkSpec, ParamSet};

pub const NETWORK_HEADER: &str = "mcm-network v1";

fn join_usize(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn join_f64<'a>(v: impl Iterator<Item = &'a f64>) -> String {
    v.map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

pub fn write_network(net: &Network, out: &mut impl Write) -> std::io::Result<()> {
    let spec = net.spec();
    writeln!(out, "{NETWORK_HEADER}")?;
    writeln!(out, "input_dim {}", spec.input_dim)?;
    writeln!(out, "hidden_dims {}", join_usize(&spec.hidden_dims))?;
    writeln!(out, "output_dims {}", join_usize(&spec.output_dims))?;
    writeln!(out, "head_extra_input_dims {}", join_usize(&spec.head_extra_input_dims))?;
    writeln!(out, "leaky_slope {:e}", spec.leaky_slope)?;
    for layer in net.params().layers() {
        writeln!(out, "layer {} {}", layer.fan_in(), layer.fan_out())?;
        writeln!(out, "w {}", join_f64(layer.weight.iter()))?;
        writeln!(out, "b {}", join_f64(layer.bias.iter()))?;
    }
    writeln!(out, "end")
}

/// Line reader that tracks the line number for error messages.
pub(crate) struct Lines<'a, R: BufRead> {
    inner: &'a mut R,
    line_no: usize,
}

impl<'a, R: BufRead> Lines<'a, R> {
    pub(crate) fn new(inner: &'a mut R) -> Self {
        Self { inner, line_no: 0 }
    }

    pub(crate) fn next_line(&mut self) -> Result<String> {
        let mut s = String::new();
        let n = self
            .inner
            .read_line(&mut s)
            .map_err(|e| Error::Checkpoint(format!("read failed: {e}")))?;
        self.line_no += 1;
        if n == 0 {
            return Err(Error::Checkpoint(format!(
                "unexpected end of input at line {}",
                self.line_no
            )));
        }
        Ok(s.trim_end_matches(['\n', '\r']).to_string())
    }

    pub(crate) fn field<'l>(&self, line: &'l str, key: &str) -> Result<&'l str> {
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest),
            None if line == key => Ok(""),
            _ => Err(Error::Checkpoint(format!(
                "line {}: expected `{key}`, found `{line}`",
                self.line_no
            ))),
        }
    }

    pub(crate) fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::Checkpoint(format!("line {}: {msg}", self.line_no))
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, T::Err> {
    s.split_whitespace().map(str::parse).collect()
}

pub fn read_network(input: &mut impl BufRead) -> Result<Network> {
    let mut lines = Lines::new(input);
    read_network_lines(&mut lines)
}

pub(crate) fn read_network_lines<R: BufRead>(lines: &mut Lines<'_, R>) -> Result<Network> {
    let header = lines.next_line()?;
    if header != NETWORK_HEADER {
        return Err(lines.err(format!("unsupported header `{header}`")));
    }
    let mut usizes = |key: &str| -> Result<Vec<usize>> {
        let l = lines.next_line()?;
        let v = lines.field(&l, key)?;
        parse_list(v).map_err(|e| lines.err(format!("{key}: {e}")))
    };
    let input_dim = usizes("input_dim")?;
    let hidden_dims = usizes("hidden_dims")?;
    let output_dims = usizes("output_dims")?;
    let head_extra_input_dims = usizes("head_extra_input_dims")?;
    let l = lines.next_line()?;
    let leaky_slope: f64 = lines
        .field(&l, "leaky_slope")?
        .parse()
        .map_err(|e| lines.err(format!("leaky_slope: {e}")))?;
    if input_dim.len() != 1 {
        return Err(lines.err("input_dim must be a single value"));
    }
    let spec = NetworkSpec {
        input_dim: input_dim[0],
        hidden_dims,
        output_dims,
        head_extra_input_dims,
        leaky_slope,
    };
    spec.validate()?;
    let mut params = Network::zeros(spec.clone())?.params().clone();
    let expected: Vec<(usize, usize)> = params.layers().map(|l| (l.fan_in(), l.fan_out())).collect();
    let mut read_layers = Vec::with_capacity(expected.len());
    for (fan_in, fan_out) in expected {
        let l = lines.next_line()?;
        let dims: Vec<usize> = parse_list(lines.field(&l, "layer")?).map_err(|e| lines.err(e))?;
        if dims != [fan_in, fan_out] {
            return Err(lines.err(format!("layer is {dims:?}, spec requires [{fan_in}, {fan_out}]")));
        }
        let l = lines.next_line()?;
        let w: Vec<f64> = parse_list(lines.field(&l, "w")?).map_err(|e| lines.err(e))?;
        let l = lines.next_line()?;
        let b: Vec<f64> = parse_list(lines.field(&l, "b")?).map_err(|e| lines.err(e))?;
        let weight = Array2::from_shape_vec((fan_in, fan_out), w).map_err(|e| lines.err(e))?;
        if b.len() != fan_out {
            return Err(lines.err(format!("bias has {} values, expected {fan_out}", b.len())));
        }
        read_layers.push(Dense {
            weight,
            bias: Array1::from(b),
        });
    }
    let l = lines.next_line()?;
    lines.field(&l, "end")?;
    let n_trunk = params.trunk.len();
    let mut it = read_layers.into_iter();
    params = ParamSet {
        trunk: it.by_ref().take(n_trunk).collect(),
        heads: it.collect(),
    };
    Ok(Network::from_params(spec, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStreams;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = NetworkSpec {
            input_dim: 4,
            hidden_dims: vec![6, 5],
            output_dims: vec![3, 7],
            head_extra_input_dims: vec![0, 2],
            leaky_slope: 0.01,
        };
        let mut net = Network::init(spec, &mut SeedStreams::new(8).stream(2)).unwrap();
        net.params_mut().heads[1].bias[0] = 1e-300;
        net.params_mut().heads[1].bias[1] = -0.0;
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        let back = read_network(&mut buf.as_slice()).unwrap();
        assert_eq!(back, net);
        let bits = |n: &Network| n.params().iter().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&net));
    }

    #[test]
    fn bad_header_and_truncation_are_errors() {
        assert!(read_network(&mut "mcm-network v9\n".as_bytes()).is_err());
        let net = Network::init(
            NetworkSpec::single(2, 2).with_hidden(&[3]),
            &mut SeedStreams::new(1).stream(1),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        let cut = &buf[..buf.len() - 10];
        assert!(read_network(&mut &cut[..]).is_err());
    }
}
