use std::path::Path;

use candle_core::{Device, Tensor};
use image::imageops::FilterType;
use image::{GrayImage, ImageBuffer, Luma};

use super::checkpoint::load_checkpoint;
use super::eval::tensor_to_maps;
use crate::data::load_image;
use crate::error::{Error, Result};
use crate::metrics::AttentionMap;
use crate::model::FblNet;

/// Predicted map for one image file, on the model's `S x S` grid, with the
/// source `(width, height)`. Runs in eval mode and restores the mode.
pub fn predict_map(model: &mut FblNet, image_path: &Path) -> Result<(AttentionMap, (u32, u32))> {
    let s = model.plan.input_side;
    let (pixels, size) = load_image(image_path, s)?;
    let x = Tensor::from_vec(pixels, (1, 3, s, s), &Device::Cpu)?;
    let prev = model.mode();
    model.eval();
    let pred = model.predict(&x);
    if prev.is_train() {
        model.train();
    }
    let map = tensor_to_maps(&pred?)?.remove(0);
    Ok((map, size))
}

/// `A` scaled to `[0, 255]`, optionally resized to the source resolution.
pub fn heatmap_image(map: &AttentionMap, native: Option<(u32, u32)>) -> GrayImage {
    let img: ImageBuffer<Luma<f32>, Vec<f32>> = ImageBuffer::from_fn(map.width as u32, map.height as u32, |x, y| {
        Luma([map.get(y as usize, x as usize) as f32])
    });
    let img = match native {
        Some((w, h)) if (w, h) != img.dimensions() => image::imageops::resize(&img, w, h, FilterType::Triangle),
        _ => img,
    };
    ImageBuffer::from_fn(img.width(), img.height(), |x, y| {
        Luma([(img.get_pixel(x, y).0[0].clamp(0.0, 1.0) * 255.0).round() as u8])
    })
}

pub fn predict_to_file(model: &mut FblNet, image_path: &Path, out_path: &Path, native_size: bool) -> Result<()> {
    let (map, size) = predict_map(model, image_path)?;
    let img = heatmap_image(&map, native_size.then_some(size));
    if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    img.save(out_path)?;
    Ok(())
}

pub fn predict_checkpoint(ckpt: &Path, image_path: &Path, out_path: &Path, native_size: bool) -> Result<()> {
    let mut state = load_checkpoint(ckpt)?;
    predict_to_file(&mut state.model, image_path, out_path, native_size)
}
