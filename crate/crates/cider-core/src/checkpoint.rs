//! Model checkpoints as deterministic JSON: an architecture header plus named
//! tensors. Floats serialize in shortest round-trip form, so save/load/save
//! produces identical bytes and identical weights.

use crate::autodiff::Mat;
use crate::error::{CiderError, Result};
use crate::gnn::{Activation, GcnLayer, TaskModel};
use crate::model::CiderParams;
use serde_json::{json, Map, Value};
use std::path::Path;

const FORMAT_VERSION: u64 = 1;

fn tensor_json(m: &Mat) -> Value {
    json!({"shape": [m.rows, m.cols], "data": m.data})
}

fn tensor_from(tensors: &Value, name: &str) -> Result<Mat> {
    let t = tensors
        .get(name)
        .ok_or_else(|| CiderError::contract(format!("checkpoint lacks tensor '{name}'")))?;
    let shape = t
        .get("shape")
        .and_then(Value::as_array)
        .filter(|s| s.len() == 2)
        .ok_or_else(|| CiderError::contract(format!("tensor '{name}' lacks a [rows, cols] shape")))?;
    let rows = shape[0].as_u64().unwrap_or(0) as usize;
    let cols = shape[1].as_u64().unwrap_or(0) as usize;
    let data = t
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| CiderError::contract(format!("tensor '{name}' lacks data")))?;
    if data.len() != rows * cols {
        return Err(CiderError::contract(format!(
            "tensor '{name}' holds {} values for shape {rows}x{cols}",
            data.len()
        )));
    }
    let mut values = Vec::with_capacity(data.len());
    for v in data {
        let f = v
            .as_f64()
            .ok_or_else(|| CiderError::contract(format!("tensor '{name}' has a non-numeric entry")))?;
        if !f.is_finite() {
            return Err(CiderError::contract(format!(
                "tensor '{name}' has a non-finite entry"
            )));
        }
        values.push(f);
    }
    Mat::from_vec(rows, cols, values)
}

fn write_checkpoint(path: &Path, kind: &str, architecture: Value, tensors: Map<String, Value>) -> Result<()> {
    let v = json!({
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "architecture": architecture,
        "tensors": Value::Object(tensors),
    });
    let mut text = serde_json::to_string_pretty(&v)
        .map_err(|e| CiderError::contract(format!("serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CiderError::io(path, e))
}

fn read_checkpoint(path: &Path, kind: &str) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CiderError::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CiderError::Parse {
        file: path.display().to_string(),
        line: e.line(),
        detail: e.to_string(),
    })?;
    if v.get("format_version").and_then(Value::as_u64) != Some(FORMAT_VERSION) {
        return Err(CiderError::contract(format!(
            "unsupported checkpoint format in {}",
            path.display()
        )));
    }
    let found = v.get("kind").and_then(Value::as_str).unwrap_or("");
    if found != kind {
        return Err(CiderError::contract(format!(
            "checkpoint/architecture mismatch: {} holds a '{found}' model, expected '{kind}'",
            path.display()
        )));
    }
    Ok(v)
}

fn arch_usize(arch: &Value, key: &str) -> Result<usize> {
    arch.get(key)
        .and_then(Value::as_u64)
        .map(|u| u as usize)
        .ok_or_else(|| CiderError::contract(format!("architecture lacks '{key}'")))
}

pub fn save_task_checkpoint(model: &TaskModel, path: &Path) -> Result<()> {
    let arch = json!({
        "d": model.feature_dim(),
        "hidden": model.d_pool(),
        "layers": model.layers.len(),
        "classes": model.class_count,
    });
    let mut tensors = Map::new();
    for (i, layer) in model.layers.iter().enumerate() {
        tensors.insert(format!("layer_{i:02}_w"), tensor_json(&layer.w));
        tensors.insert(format!("layer_{i:02}_b"), tensor_json(&layer.b));
    }
    tensors.insert("head_w".into(), tensor_json(&model.head_w));
    tensors.insert("head_b".into(), tensor_json(&model.head_b));
    write_checkpoint(path, "task", arch, tensors)
}

pub fn load_task_checkpoint(path: &Path) -> Result<TaskModel> {
    let v = read_checkpoint(path, "task")?;
    let arch = v
        .get("architecture")
        .ok_or_else(|| CiderError::contract("checkpoint lacks an architecture header"))?;
    let d = arch_usize(arch, "d")?;
    let hidden = arch_usize(arch, "hidden")?;
    let layer_count = arch_usize(arch, "layers")?;
    let classes = arch_usize(arch, "classes")?;
    if layer_count == 0 || classes == 0 || d == 0 || hidden == 0 {
        return Err(CiderError::contract("degenerate architecture header"));
    }
    let tensors = v
        .get("tensors")
        .ok_or_else(|| CiderError::contract("checkpoint lacks tensors"))?;
    let mut layers = Vec::with_capacity(layer_count);
    for i in 0..layer_count {
        let w = tensor_from(tensors, &format!("layer_{i:02}_w"))?;
        let expect_in = if i == 0 { d } else { hidden };
        if w.rows != expect_in || w.cols != hidden {
            return Err(CiderError::contract(format!(
                "checkpoint/architecture mismatch: layer {i} weight is {}x{}, expected {expect_in}x{hidden}",
                w.rows, w.cols
            )));
        }
        let b = tensor_from(tensors, &format!("layer_{i:02}_b"))?;
        if b.rows != 1 || b.cols != hidden {
            return Err(CiderError::contract(format!(
                "checkpoint/architecture mismatch: layer {i} bias is {}x{}, expected 1x{hidden}",
                b.rows, b.cols
            )));
        }
        let activation = if i + 1 == layer_count {
            Activation::Identity
        } else {
            Activation::Relu
        };
        layers.push(GcnLayer { w, b, activation });
    }
    let head_w = tensor_from(tensors, "head_w")?;
    let head_b = tensor_from(tensors, "head_b")?;
    if head_w.rows != hidden || head_w.cols != classes || head_b.rows != 1 || head_b.cols != classes
    {
        return Err(CiderError::contract(
            "checkpoint/architecture mismatch: head shapes disagree with the header",
        ));
    }
    Ok(TaskModel {
        layers,
        head_w,
        head_b,
        class_count: classes,
    })
}

pub fn save_cider_checkpoint(params: &CiderParams, path: &Path) -> Result<()> {
    let arch = json!({
        "d": params.feature_dim(),
        "hidden": params.hidden_dim(),
        "latent": params.latent,
        "trained_steps": params.trained_steps,
    });
    let mut tensors = Map::new();
    tensors.insert("shared_w".into(), tensor_json(&params.shared.w));
    tensors.insert("shared_b".into(), tensor_json(&params.shared.b));
    tensors.insert("causal_mu_w".into(), tensor_json(&params.causal_mu.w));
    tensors.insert("causal_mu_b".into(), tensor_json(&params.causal_mu.b));
    tensors.insert("causal_lv_w".into(), tensor_json(&params.causal_lv.w));
    tensors.insert("causal_lv_b".into(), tensor_json(&params.causal_lv.b));
    tensors.insert("spurious_mu_w".into(), tensor_json(&params.spurious_mu.w));
    tensors.insert("spurious_mu_b".into(), tensor_json(&params.spurious_mu.b));
    tensors.insert("spurious_lv_w".into(), tensor_json(&params.spurious_lv.w));
    tensors.insert("spurious_lv_b".into(), tensor_json(&params.spurious_lv.b));
    write_checkpoint(path, "cider", arch, tensors)
}

pub fn load_cider_checkpoint(path: &Path) -> Result<CiderParams> {
    let v = read_checkpoint(path, "cider")?;
    let arch = v
        .get("architecture")
        .ok_or_else(|| CiderError::contract("checkpoint lacks an architecture header"))?;
    let d = arch_usize(arch, "d")?;
    let hidden = arch_usize(arch, "hidden")?;
    let latent = arch_usize(arch, "latent")?;
    let trained_steps = arch
        .get("trained_steps")
        .and_then(Value::as_u64)
        .ok_or_else(|| CiderError::contract("architecture lacks 'trained_steps'"))?;
    let tensors = v
        .get("tensors")
        .ok_or_else(|| CiderError::contract("checkpoint lacks tensors"))?;

    let expect = |m: &Mat, name: &str, rows: usize, cols: usize| -> Result<()> {
        if m.rows != rows || m.cols != cols {
            return Err(CiderError::contract(format!(
                "checkpoint/architecture mismatch: {name} is {}x{}, expected {rows}x{cols}",
                m.rows, m.cols
            )));
        }
        Ok(())
    };
    let load_layer = |name: &str, rows: usize, activation: Activation| -> Result<GcnLayer> {
        let w = tensor_from(tensors, &format!("{name}_w"))?;
        expect(&w, &format!("{name}_w"), rows, latent)?;
        let b = tensor_from(tensors, &format!("{name}_b"))?;
        expect(&b, &format!("{name}_b"), 1, latent)?;
        Ok(GcnLayer { w, b, activation })
    };
    let causal_mu = load_layer("causal_mu", hidden, Activation::Identity)?;
    let causal_lv = load_layer("causal_lv", hidden, Activation::Identity)?;
    let spurious_mu = load_layer("spurious_mu", hidden + latent, Activation::Identity)?;
    let spurious_lv = load_layer("spurious_lv", hidden + latent, Activation::Identity)?;
    let shared_w = tensor_from(tensors, "shared_w")?;
    expect(&shared_w, "shared_w", d, hidden)?;
    let shared_b = tensor_from(tensors, "shared_b")?;
    expect(&shared_b, "shared_b", 1, hidden)?;

    Ok(CiderParams {
        shared: GcnLayer {
            w: shared_w,
            b: shared_b,
            activation: Activation::Relu,
        },
        causal_mu,
        causal_lv,
        spurious_mu,
        spurious_lv,
        latent,
        trained_steps,
    })
}
