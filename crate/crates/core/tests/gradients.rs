use av2t_core::adapter::AdapterTap;
use av2t_core::encoders::{AudioEmbedding, ImageEmbedding};
use av2t_core::gradcheck::{check_loss, check_pipeline, check_prompt};
use av2t_core::nn::{component_rng, Activation, Affine};
use av2t_core::pipeline::{prepare_frame, ModelState};
use av2t_core::*;
use ndarray::{Array1, Array2, Array3};
use rand::Rng;

const TOL: f64 = 1e-3;

fn unit(rng: &mut impl Rng, n: usize) -> Array1<f64> {
    let v: Array1<f64> = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
    let norm = v.dot(&v).sqrt();
    v / norm
}

#[test]
fn loss_gradient_on_random_3x3_masks() {
    let mut rng = component_rng(1, "grad/loss");
    for _ in 0..20 {
        let preds: Vec<Array2<f64>> = (0..2)
            .map(|_| Array2::from_shape_fn((3, 3), |_| rng.random_range(0.05..0.95)))
            .collect();
        let gts: Vec<Array2<f64>> = (0..2)
            .map(|_| Array2::from_shape_fn((3, 3), |_| rng.random_bool(0.5) as u8 as f64))
            .collect();
        let report = check_loss(&preds, &gts, 1e-6).unwrap();
        assert!(report.worst() <= TOL, "{report:?}");
    }
}

#[test]
fn prompt_gradient_at_tiny_dims() {
    let mut rng = component_rng(2, "grad/prompt");
    for source in PromptSource::ALL {
        for act in [Activation::Gelu, Activation::Silu, Activation::Tanh] {
            let params = ProjectionParams::init(3, 3, 2, 2, 2, act, &mut rng);
            let a = AudioEmbedding(unit(&mut rng, 3));
            let v = ImageEmbedding(unit(&mut rng, 3));
            let c = Array1::from_shape_fn(2, |_| rng.random_range(-1.0..1.0));
            let report = check_prompt(&a, &v, &params, source, &c, 1e-6).unwrap();
            assert_eq!(report.max_error.len(), 6);
            assert!(report.worst() <= TOL, "{source:?} {act:?}: {report:?}");
        }
    }
}

fn tiny_setup(
    tap: AdapterTap,
    adapter_enabled: bool,
) -> (EncoderSuite, ModelState, pipeline::FrameInput, Array2<f64>) {
    let mut desc = BackendDescriptor::stub(5);
    desc.patch_size = 4;
    desc.image_side = 4;
    desc.audio_samples = 64;
    desc.channels = vec![6, 5, 4];
    let suite = EncoderSuite::stub(desc.clone()).unwrap();
    let mut cfg = RunConfig {
        seed: 9,
        ..RunConfig::default()
    };
    cfg.train.input_resolution = Some(8);
    cfg.train.adapter_enabled = adapter_enabled;
    cfg.model.d_s = 4;
    cfg.model.decoder_hidden = 3;
    cfg.model.adapter_tap = tap;
    let mut state = ModelState::init(&cfg, &desc).unwrap();
    // Non-zero adapters so every path carries gradient.
    let mut rng = component_rng(3, "grad/adapters");
    for m in state.params.adapters.maps.iter_mut() {
        *m = Affine::fan_in_uniform(m.out_dim(), m.in_dim(), &mut rng);
    }
    let frame = Frame::new(
        1,
        Array3::from_shape_fn((3, 8, 8), |_| rng.random_range(0.0..1.0)),
    );
    let audio = AudioSegment {
        samples: (0..100).map(|_| rng.random_range(-0.5..0.5)).collect(),
        sample_rate: 100,
        index: 1,
    };
    let input = prepare_frame(&suite, &frame, &audio, 8).unwrap();
    let gt = Array2::from_shape_fn((8, 8), |(y, x)| {
        ((2..6).contains(&y) && x >= 3) as u8 as f64
    });
    (suite, state, input, gt)
}

#[test]
fn end_to_end_gradient_on_one_8x8_frame() {
    for tap in [AdapterTap::Fused, AdapterTap::TextSpace] {
        let (suite, state, input, gt) = tiny_setup(tap, true);
        let report = check_pipeline(&suite, &state, &input, &gt, 1e-6).unwrap();
        let groups: Vec<&str> = report.max_error.keys().map(|s| s.as_str()).collect();
        for prefix in ["projection.", "adapters.", "decoder."] {
            assert!(
                groups.iter().any(|g| g.starts_with(prefix)),
                "no {prefix} group"
            );
        }
        assert!(report.worst() <= TOL, "{tap:?}: {report:?}");
    }
}

#[test]
fn end_to_end_gradient_without_adapters() {
    let (suite, state, input, gt) = tiny_setup(AdapterTap::Fused, false);
    let report = check_pipeline(&suite, &state, &input, &gt, 1e-6).unwrap();
    assert!(report.worst() <= TOL, "{report:?}");
}
