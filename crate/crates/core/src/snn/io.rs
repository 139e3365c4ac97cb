//! SNN1 network checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "SNN1" | flags u16 (bit 0: quantized) | layer_count u16 | steps u32
//! input channels u32 | height u32 | width u32
//! [quantized only] sigma f64 | units f64
//! per layer:
//!   kind u8 (0 pool, 1 conv, 2 dense) | reserved u8
//!   in u32 | out u32 | kernel u16 | padding u16 | stride u16
//!   current_decay f64 | voltage_decay f64 | threshold f64
//!   weight_count u32
//!   float:     weight_count x f32
//!   quantized: step f32 | weight_count x i8   (weight = i8 * step)
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::network::{Layer, LayerKind, LayerSpec, Network, Quantization, Shape};
use super::NeuronParams;
use crate::error::{Error, Result};

pub const SNN1_MAGIC: &[u8; 4] = b"SNN1";
const FLAG_QUANTIZED: u16 = 1;

pub fn write_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_network_to(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_network_to<W: Write>(net: &Network, w: &mut W) -> Result<()> {
    net.validate()?;
    let mut buf = Vec::new();
    buf.extend_from_slice(SNN1_MAGIC);
    let flags = if net.quantization.is_some() { FLAG_QUANTIZED } else { 0 };
    buf.extend_from_slice(&flags.to_le_bytes());
    buf.extend_from_slice(&(net.layers.len() as u16).to_le_bytes());
    buf.extend_from_slice(&(net.steps as u32).to_le_bytes());
    for v in [net.input.channels, net.input.height, net.input.width] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    if let Some(q) = net.quantization {
        buf.extend_from_slice(&q.sigma.to_le_bytes());
        buf.extend_from_slice(&q.units.to_le_bytes());
    }
    for layer in &net.layers {
        let s = &layer.spec;
        buf.push(s.kind.code());
        buf.push(0);
        buf.extend_from_slice(&(s.in_channels as u32).to_le_bytes());
        buf.extend_from_slice(&(s.out_channels as u32).to_le_bytes());
        for v in [s.kernel, s.padding, s.stride] {
            buf.extend_from_slice(&(v as u16).to_le_bytes());
        }
        for v in [layer.params.current_decay, layer.params.voltage_decay, layer.params.threshold] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(layer.weights.len() as u32).to_le_bytes());
        match net.quantization {
            None => {
                for &wt in &layer.weights {
                    buf.extend_from_slice(&wt.to_le_bytes());
                }
            }
            Some(q) => {
                let step = q.step();
                buf.extend_from_slice(&(step as f32).to_le_bytes());
                for &wt in &layer.weights {
                    let m = (wt as f64 / step).round();
                    if !(-128.0..=127.0).contains(&m) || q.dequantize(m as i8) != wt {
                        return Err(Error::Numeric(format!(
                            "weight {wt} is not on the quantization grid of step {step}"
                        )));
                    }
                    buf.push(m as i8 as u8);
                }
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_network(path: impl AsRef<Path>) -> Result<Network> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    read_network_from(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(self.pos as u64, format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_bits(self.u32(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn read_network_from(bytes: &[u8]) -> Result<Network> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != SNN1_MAGIC {
        return Err(Error::parse(0, "not an SNN1 file"));
    }
    let flags = c.u16("flags")?;
    let layer_count = c.u16("layer count")? as usize;
    let steps = c.u32("steps")? as usize;
    let input =
        Shape::new(c.u32("input channels")? as usize, c.u32("input height")? as usize, c.u32("input width")? as usize);
    let quantization = if flags & FLAG_QUANTIZED != 0 {
        Some(Quantization { sigma: c.f64("sigma")?, units: c.f64("units")? })
    } else {
        None
    };

    let mut layers = Vec::with_capacity(layer_count);
    let mut shape = input;
    for i in 0..layer_count {
        let at = c.pos as u64;
        let code = c.u8("layer kind")?;
        let kind =
            LayerKind::from_code(code).ok_or_else(|| Error::parse(at, format!("layer {i}: unknown kind {code}")))?;
        c.u8("reserved")?;
        let spec = LayerSpec {
            kind,
            in_channels: c.u32("in")? as usize,
            out_channels: c.u32("out")? as usize,
            kernel: c.u16("kernel")? as usize,
            padding: c.u16("padding")? as usize,
            stride: c.u16("stride")? as usize,
        };
        let params = NeuronParams {
            current_decay: c.f64("current decay")?,
            voltage_decay: c.f64("voltage decay")?,
            threshold: c.f64("threshold")?,
        };
        let output = spec.output_shape(shape).map_err(|e| Error::parse(at, format!("layer {i}: {e}")))?;
        let count_at = c.pos as u64;
        let count = c.u32("weight count")? as usize;
        if count != spec.weight_count() {
            return Err(Error::parse(
                count_at,
                format!("layer {i}: {count} weights, expected {}", spec.weight_count()),
            ));
        }
        let weights = match quantization {
            None => (0..count).map(|_| c.f32("weight")).collect::<Result<Vec<_>>>()?,
            Some(q) => {
                let step_at = c.pos as u64;
                let step = c.f32("quantization step")?;
                if step != q.step() as f32 {
                    return Err(Error::parse(step_at, format!("layer {i}: step {step} disagrees with header")));
                }
                c.take(count, "quantized weights")?.iter().map(|&b| q.dequantize(b as i8)).collect()
            }
        };
        layers.push(Layer { spec, params, input: shape, output, weights });
        shape = output;
    }
    if c.pos != bytes.len() {
        return Err(Error::parse(c.pos as u64, "trailing bytes after last layer"));
    }
    let net = Network { input, layers, steps, quantization };
    net.validate().map_err(|e| Error::parse(0, e.to_string()))?;
    Ok(net)
}

impl Quantization {
    /// Synaptic current per unit of the stored 8-bit mantissa.
    pub fn step(&self) -> f64 {
        self.sigma / self.units
    }

    pub fn dequantize(&self, mantissa: i8) -> f32 {
        (mantissa as f64 * self.sigma / self.units) as f32
    }
}
