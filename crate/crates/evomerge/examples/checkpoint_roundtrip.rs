//! Checkpoint I/O: build a small mixed-dtype checkpoint, write it in the
//! safetensors container format, read it back byte-exactly, and run the
//! structural compatibility check used before every merge.
//!
//! Run with: `cargo run --example checkpoint_roundtrip`

use std::collections::BTreeMap;
use std::error::Error;

use evomerge::checkpoint::{
    read_checkpoint, validate_compat, write_checkpoint, Dtype, Tensor, TensorMap,
};

fn main() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.safetensors");

    // A checkpoint is a named map of dense tensors plus optional string
    // metadata. Dtypes can be mixed per tensor.
    let mut model = TensorMap::new();
    model.insert(
        "layers.0.weight",
        Tensor::from_f32(vec![2, 3], &[0.5, -1.25, 2.0, 0.0, 3.5, -0.75]),
    )?;
    model.insert(
        "layers.0.bias",
        Tensor::from_f64(Dtype::F16, vec![2], &[0.125, -0.5]).map_err(|e| e.to_string())?,
    )?;
    model.insert(
        "head.weight",
        Tensor::from_f64(Dtype::Bf16, vec![4], &[1.0, 2.0, -3.0, 0.25]).map_err(|e| e.to_string())?,
    )?;
    let mut metadata = BTreeMap::new();
    metadata.insert("format".to_string(), "pt".to_string());
    metadata.insert("producer".to_string(), "checkpoint_roundtrip example".to_string());
    model.set_metadata(Some(metadata));

    write_checkpoint(&model, &path)?;
    let bytes = std::fs::read(&path)?;
    println!("wrote {} ({} bytes)", path.display(), bytes.len());

    // The container is an 8-byte little-endian header length, a JSON
    // header, then the raw tensor buffers packed in name order.
    let header_len = u64::from_le_bytes(bytes[..8].try_into()?);
    println!("header: {} bytes of JSON", header_len);
    println!("{}", std::str::from_utf8(&bytes[8..8 + header_len as usize])?);

    let loaded = read_checkpoint(&path)?;
    println!("\nround trip equal: {}", loaded == model);
    for (name, tensor) in loaded.iter() {
        println!("  {name}: {} {:?} = {:?}", tensor.dtype(), tensor.shape(), tensor.to_f64_vec());
    }

    // validate_compat reports structural drift between checkpoints instead
    // of failing: missing tensors, shape or dtype disagreements.
    let mut other = TensorMap::new();
    other.insert(
        "layers.0.weight",
        Tensor::from_f32(vec![3, 2], &[1.0; 6]), // transposed shape
    )?;
    other.insert("layers.0.bias", Tensor::from_f32(vec![2], &[0.0, 0.0]))?; // f32, not f16
    let report = validate_compat(&[&model, &other])?;
    println!("\ncompatible with a drifted checkpoint: {}", report.compatible);
    println!("  missing per checkpoint: {:?}", report.missing_keys);
    println!("  shape mismatches: {:?}", report.shape_mismatches);
    println!("  dtype mismatches: {:?}", report.dtype_mismatches);
    Ok(())
}
