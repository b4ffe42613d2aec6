//! Image I/O and the encoder, transform, decoder stylization path.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::graph::{execute, Graph};
use crate::tensor::{Shape4, Tensor4};
use crate::transform::{aggregate_features, sandwich_swap, split_aggregate, TransferConfig};

/// Reads an 8-bit RGB PPM (P6) or PNG into a (1, 3, h, w) tensor in [0, 1].
pub fn read_image(path: &Path) -> Result<Tensor4> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Image(format!("{}: {other}", path.display())),
    })?;
    let DynamicImage::ImageRgb8(rgb) = img else {
        return Err(Error::Image(format!(
            "{}: expected 8-bit RGB, got {:?}",
            path.display(),
            img.color()
        )));
    };
    Ok(rgb_to_tensor(&rgb))
}

pub fn rgb_to_tensor(rgb: &RgbImage) -> Tensor4 {
    let (w, h) = rgb.dimensions();
    Tensor4::from_fn(Shape4::new(1, 3, h as usize, w as usize), |_, c, y, x| {
        rgb.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    })
}

/// Clamps to [0, 1] and rounds to the nearest 8-bit level.
pub fn tensor_to_rgb(t: &Tensor4) -> Result<RgbImage> {
    let s = t.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::Shape(format!("an RGB image needs shape (1, 3, h, w), got {s}")));
    }
    let mut img = RgbImage::new(s.w as u32, s.h as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        for c in 0..3 {
            let v = t.at(0, c, y as usize, x as usize);
            let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            px[c] = (v * 255.0).round() as u8;
        }
    }
    Ok(img)
}

/// Writes PPM (P6) for `.ppm`, PNG for `.png`.
pub fn write_image(t: &Tensor4, path: &Path) -> Result<()> {
    let img = tensor_to_rgb(t)?;
    let format = ImageFormat::from_path(path)
        .map_err(|_| Error::Image(format!("{}: unknown image extension", path.display())))?;
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    let res = match format {
        ImageFormat::Pnm => img.write_with_encoder(
            PnmEncoder::new(&mut w).with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary)),
        ),
        ImageFormat::Png => img.write_to(&mut w, ImageFormat::Png),
        other => {
            return Err(Error::Image(format!(
                "{}: unsupported output format {other:?} (use .ppm or .png)",
                path.display()
            )))
        }
    };
    res.map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

/// Largest cumulative stride over the given encoder tensors.
pub fn encoder_stride(g: &Graph, taps: &[String]) -> Result<usize> {
    taps.iter().try_fold(1, |acc, t| Ok(acc.max(g.total_stride(t)?)))
}

/// Runs the encoder and returns the requested taps in order.
pub fn encode(g: &Graph, img: &Tensor4, taps: &[String]) -> Result<Vec<Tensor4>> {
    if taps.is_empty() {
        return Err(Error::InvalidArgument("encode needs at least one tap".into()));
    }
    let stride = encoder_stride(g, taps)?;
    let s = img.shape();
    if s.h % stride != 0 || s.w % stride != 0 {
        return Err(Error::Shape(format!(
            "image size {}x{} is not divisible by the encoder stride; height and width must be multiples of {stride}",
            s.h, s.w
        )));
    }
    let names: Vec<&str> = taps.iter().map(String::as_str).collect();
    let mut out = execute(g, img, &names)?;
    Ok(taps.iter().map(|t| out.remove(t).expect("requested tap")).collect())
}

/// Encoder tensors used for stylization: declared taps, or the outputs when none are declared.
pub fn default_taps(encoder: &Graph) -> Vec<String> {
    if encoder.taps.is_empty() {
        encoder.outputs.clone()
    } else {
        encoder.taps.clone()
    }
}

#[derive(Clone, Debug)]
pub struct StyleJob<'a> {
    pub content: &'a Tensor4,
    pub style: &'a Tensor4,
    pub encoder: &'a Graph,
    pub decoder: &'a Graph,
    /// One tap per encoder block, shallow to deep; the last is the bottleneck.
    pub taps: Vec<String>,
    pub cfg: TransferConfig,
}

impl<'a> StyleJob<'a> {
    pub fn new(content: &'a Tensor4, style: &'a Tensor4, encoder: &'a Graph, decoder: &'a Graph, cfg: TransferConfig) -> Self {
        Self {
            content,
            style,
            encoder,
            decoder,
            taps: default_taps(encoder),
            cfg,
        }
    }

    fn check(&self) -> Result<()> {
        if self.taps.is_empty() {
            return Err(Error::InvalidArgument("style job has no encoder taps".into()));
        }
        for t in &self.taps {
            if !self.encoder.has_tensor(t) {
                return Err(Error::UnknownTap(t.clone()));
            }
        }
        if self.decoder.outputs.len() != 1 {
            return Err(Error::Validation(format!(
                "decoder must have exactly one output, has {}",
                self.decoder.outputs.len()
            )));
        }
        self.cfg.validate()
    }
}

fn decode(decoder: &Graph, bottleneck: &Tensor4, content: Shape4) -> Result<Tensor4> {
    let width = bottleneck.shape().c;
    if decoder.input.channels != width {
        return Err(Error::Shape(format!(
            "decoder expects {} input channels, bottleneck slice has {width}",
            decoder.input.channels
        )));
    }
    let mut out = execute(decoder, bottleneck, &[])?;
    let img = out.remove(&decoder.outputs[0]).expect("decoder output");
    let s = img.shape();
    if (s.c, s.h, s.w) != (3, content.h, content.w) {
        return Err(Error::Shape(format!(
            "decoder produced {s}, expected an RGB image of {}x{}",
            content.h, content.w
        )));
    }
    Ok(img)
}

fn aggregate(feats: &[Tensor4]) -> Result<(Tensor4, crate::transform::AggregateLayout)> {
    let deep = feats.last().expect("non-empty").shape();
    aggregate_features(feats, (deep.h, deep.w))
}

/// Encodes both images, transforms the aggregated features and decodes the bottleneck slice.
pub fn stylize(job: &StyleJob) -> Result<Tensor4> {
    job.check()?;
    let fc = encode(job.encoder, job.content, &job.taps)?;
    let fs = encode(job.encoder, job.style, &job.taps)?;
    let (ac, layout) = aggregate(&fc)?;
    let (as_, _) = aggregate(&fs)?;
    let fcs = sandwich_swap(&ac, &as_, &job.cfg)?;
    let parts = split_aggregate(&fcs, &layout)?;
    let bottleneck = parts.last().expect("non-empty layout");
    decode(job.decoder, bottleneck, job.content.shape())
}

/// Decoder applied to the untouched bottleneck of `img`.
pub fn reconstruct(encoder: &Graph, decoder: &Graph, img: &Tensor4, taps: &[String]) -> Result<Tensor4> {
    let feats = encode(encoder, img, taps)?;
    decode(decoder, feats.last().expect("non-empty"), img.shape())
}
