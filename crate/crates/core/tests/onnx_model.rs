#![cfg(feature = "onnx")]

use std::path::Path;

use fasctrack::architecture::measure_masks;
use fasctrack::ingest::MODEL_SIZE;
use fasctrack::segmentation::{normalize_input, OnnxModel};
use fasctrack::synthetic::{SyntheticFascicle, SyntheticScene};
use fasctrack::{
    process_frame, Aggregation, Calibration, ClassKind, Frame, MaskTemplate, PipelineConfig, SegmentationBackend,
    SegmentationError,
};
use image::{GrayImage, Luma};
use prost::Message;
use tract_onnx::pb::{
    tensor_shape_proto::{dimension, Dimension},
    type_proto, GraphProto, ModelProto, NodeProto, OperatorSetIdProto, TensorProto, TensorShapeProto, TypeProto,
    ValueInfoProto,
};

fn value_info(name: &str, dims: &[i64]) -> ValueInfoProto {
    ValueInfoProto {
        name: name.into(),
        r#type: Some(TypeProto {
            value: Some(type_proto::Value::TensorType(type_proto::Tensor {
                elem_type: 1,
                shape: Some(TensorShapeProto {
                    dim: dims
                        .iter()
                        .map(|&d| Dimension {
                            value: Some(dimension::Value::DimValue(d)),
                            ..Default::default()
                        })
                        .collect(),
                }),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn node(op: &str, inputs: &[&str], output: &str) -> NodeProto {
    NodeProto {
        op_type: op.into(),
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: vec![output.into()],
        name: output.into(),
        ..Default::default()
    }
}

fn scalar(name: &str, v: f32) -> TensorProto {
    TensorProto {
        name: name.into(),
        data_type: 1,
        float_data: vec![v],
        ..Default::default()
    }
}

const GRID: i64 = MODEL_SIZE as i64;

/// Write a model with input `x` of the model-grid shape and output `y`.
fn write_model(path: &Path, nodes: Vec<NodeProto>, constants: Vec<TensorProto>, out_dims: &[i64]) {
    let model = ModelProto {
        ir_version: 7,
        opset_import: vec![OperatorSetIdProto {
            domain: String::new(),
            version: 13,
        }],
        graph: Some(GraphProto {
            name: "test".into(),
            node: nodes,
            initializer: constants,
            input: vec![value_info("x", &[1, 1, GRID, GRID])],
            output: vec![value_info("y", out_dims)],
            ..Default::default()
        }),
        ..Default::default()
    };
    std::fs::write(path, model.encode_to_vec()).unwrap();
}

fn sigmoid_model(path: &Path) {
    write_model(path, vec![node("Sigmoid", &["x"], "y")], vec![], &[1, 1, GRID, GRID]);
}

/// y = x^2: only bright pixels pass a 0.5 threshold.
fn square_model(path: &Path) {
    write_model(path, vec![node("Mul", &["x", "x"], "y")], vec![], &[1, 1, GRID, GRID]);
}

/// y = exp(-50 (x - c)^2): a bump selecting intensities near `c`.
fn bump_model(path: &Path, c: f32) {
    write_model(
        path,
        vec![
            node("Sub", &["x", "c"], "d"),
            node("Mul", &["d", "d"], "sq"),
            node("Mul", &["sq", "k"], "e"),
            node("Exp", &["e"], "y"),
        ],
        vec![scalar("c", c), scalar("k", -50.0)],
        &[1, 1, GRID, GRID],
    );
}

fn ramp_input() -> Vec<f32> {
    normalize_input(&GrayImage::from_fn(MODEL_SIZE, MODEL_SIZE, |x, y| Luma([((x * 3 + y) % 256) as u8])))
}

#[test]
fn inference_is_bitwise_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sigmoid.onnx");
    sigmoid_model(&path);
    let model = OnnxModel::load(&path, ClassKind::Fascicle).unwrap();
    let input = ramp_input();
    let a = model.predict(&input, MODEL_SIZE, MODEL_SIZE).unwrap();
    let b = model.predict(&input, MODEL_SIZE, MODEL_SIZE).unwrap();
    let bits = |m: &fasctrack::segmentation::ProbabilityMap| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    let expected = 1.0 / (1.0 + (-input[5]).exp());
    assert!((a.values()[5] - expected).abs() < 1e-6);
    assert!(a.values().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn wrong_grid_is_an_inference_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sigmoid.onnx");
    sigmoid_model(&path);
    let model = OnnxModel::load(&path, ClassKind::Aponeurosis).unwrap();
    let input = vec![0.5; 256 * 256];
    assert!(matches!(model.predict(&input, 256, 256), Err(SegmentationError::Inference(_))));
}

#[test]
fn unreadable_models_fail_to_load() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.onnx");
    std::fs::write(&garbage, b"definitely not protobuf").unwrap();
    assert!(matches!(
        OnnxModel::load(&garbage, ClassKind::Fascicle),
        Err(SegmentationError::ModelLoad { .. })
    ));
    assert!(matches!(
        OnnxModel::load(&dir.path().join("missing.onnx"), ClassKind::Fascicle),
        Err(SegmentationError::ModelLoad { .. })
    ));
}

#[test]
fn output_contract_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.onnx");
    write_model(&flat, vec![node("Flatten", &["x"], "y")], vec![], &[1, GRID * GRID]);
    let model = OnnxModel::load(&flat, ClassKind::Fascicle).unwrap();
    assert!(matches!(
        model.predict(&ramp_input(), MODEL_SIZE, MODEL_SIZE),
        Err(SegmentationError::Inference(_))
    ));

    let neg = dir.path().join("neg.onnx");
    write_model(&neg, vec![node("Neg", &["x"], "y")], vec![], &[1, 1, GRID, GRID]);
    let model = OnnxModel::load(&neg, ClassKind::Fascicle).unwrap();
    assert!(model.predict(&ramp_input(), MODEL_SIZE, MODEL_SIZE).is_err());
}

#[test]
fn model_backend_matches_mask_backend() {
    let dir = tempfile::tempdir().unwrap();
    let scene = SyntheticScene {
        fascicles: vec![
            SyntheticFascicle::new(200.0, 250.0, 45.0, 100.0),
            SyntheticFascicle::new(320.0, 250.0, 45.0, 100.0),
        ],
        ..Default::default()
    };
    scene.write_oracle_files(dir.path(), "scene").unwrap();
    let apo = scene.aponeurosis_mask();
    let fasc = scene.fascicle_mask();
    let pixels = GrayImage::from_fn(scene.width, scene.height, |x, y| {
        Luma([if apo.get(x, y) {
            255
        } else if fasc.get(x, y) {
            100
        } else {
            0
        }])
    });
    let mut frame = Frame::new(pixels, 0).unwrap();
    frame.name = Some("scene".into());

    let apo_path = dir.path().join("apo.onnx");
    let fasc_path = dir.path().join("fasc.onnx");
    square_model(&apo_path);
    bump_model(&fasc_path, 100.0 / 255.0);

    let config = PipelineConfig::new(Calibration::isotropic(0.1).unwrap(), Aggregation::Median);
    let models = SegmentationBackend::from_models(&apo_path, &fasc_path).unwrap();
    let masks = models.masks_for(&frame, config.binarize_threshold).unwrap();
    assert!(masks.aponeurosis == apo);
    assert!(masks.fascicle == fasc);

    let from_models = process_frame(&frame, &models, &config).unwrap();
    let files = SegmentationBackend::from_masks(MaskTemplate::for_directory(dir.path()));
    let from_files = process_frame(&frame, &files, &config).unwrap();
    assert_eq!(from_models, from_files);
    assert_eq!(from_models, measure_masks(&masks, 0, None, &config));
    assert_eq!(from_models.fascicles.len(), 2);
}
