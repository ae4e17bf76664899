use dlimd_nn::{gradient_check, GradCheck, Input, Network, Pick, Variant, CANVAS_COLS, CANVAS_LEN, FEATURE_LEN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(variant: Variant, seed: u64, checks: usize, eps: f64, pick: Pick) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f64>::new(variant, seed);
    for t in &mut net.params_mut().tensors {
        if t.shape.len() == 1 {
            for v in &mut t.data {
                *v = rng.gen_range(-0.05..0.05);
            }
        }
    }
    // One padded small-block canvas, one dense canvas.
    let mut canvases = vec![vec![0.0f32; CANVAS_LEN]; 2];
    for r in 0..4 {
        let v: f32 = rng.gen();
        for c in 0..CANVAS_COLS {
            canvases[0][r * CANVAS_COLS + c] = if (60..72).contains(&c) { rng.gen() } else { v };
            canvases[1][r * CANVAS_COLS + c] = rng.gen();
        }
    }
    let feats: Vec<Vec<f32>> =
        (0..2).map(|_| (0..FEATURE_LEN).map(|_| rng.gen()).collect()).collect();
    let inputs: Vec<Input> =
        (0..2).map(|i| Input { canvas: &canvases[i], features: &feats[i] }).collect();
    gradient_check(&mut net, &inputs, &[5, 40], checks, eps, pick, seed).unwrap()
}

#[test]
fn every_layer_backward_matches_small_step_differences() {
    for (v, seed) in [(Variant::DlimdL, 1), (Variant::AblationHlFirst, 2), (Variant::AblationH, 3)] {
        let r = check(v, seed, 60, 1e-6, Pick::PerTensor);
        assert!(r.worst <= 1e-6, "{v}: worst relative error {}", r.worst);
        assert!(r.per_tensor.iter().all(|&n| n > 0), "{v}: untested tensor {:?}", r.per_tensor);
    }
}

#[test]
fn reduced_network_matches_central_differences_at_1e3() {
    for seed in 10..13 {
        let r = check(Variant::DlimdL, seed, 50, 1e-3, Pick::Uniform);
        assert!(r.worst <= 1e-4, "seed {seed}: worst relative error {}", r.worst);
        assert!(r.kinks <= r.checked, "seed {seed}: {} kinks", r.kinks);
    }
}

#[test]
fn kink_crossings_are_detected() {
    // Biases of early layers shift whole feature maps, so large steps flip units.
    let r = check(Variant::DlimdL, 4, 10, 0.05, Pick::Uniform);
    assert!(r.kinks > 0);
}
