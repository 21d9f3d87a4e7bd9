use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskmap::checkpoint::{load_heads, load_predictor, ModelFile};
use riskmap::encoder::{
    backward_heads, extract_features, forward_heads, softplus, softplus_inv, MlpHead, OutputTransform, RiskHeads,
    RiskParams, SceneFeatures, FEATURE_DIM,
};
use riskmap::predictor::PredictorModel;
use riskmap::scenario::{generate_scenarios, ScenarioKind};
use riskmap::training::gradient_check;

fn random_features(rng: &mut ChaCha8Rng) -> SceneFeatures {
    let mut f = [0.0; FEATURE_DIM];
    f.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    SceneFeatures(f)
}

fn jitter(params: &[f64], rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    params.iter().map(|p| p + rng.random_range(-scale..scale)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn mlp_gradients_match_differences_for_every_transform() {
    let transforms = [
        OutputTransform::Exp,
        OutputTransform::Softplus,
        OutputTransform::Tanh,
        OutputTransform::Identity,
    ];
    for transform in transforms {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut head = MlpHead::new(&[6, 8, 8, 4], transform, &[0.1], &mut rng);
            let p = jitter(&head.params(), &mut rng, 0.3);
            head.set_params(&p);
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let up: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (grad, dx) = head.backward(&head.forward_cached(&x), &up);

            let by_params = |q: &[f64]| {
                let mut h = head.clone();
                h.set_params(q);
                dot(&h.forward(&x), &up)
            };
            let r = gradient_check(by_params, &p, &grad, 1e-4);
            assert!(r.passed, "{transform:?} seed {seed}: {r:?}");

            let by_input = |z: &[f64]| dot(&head.forward(z), &up);
            let r = gradient_check(by_input, &x, &dx, 1e-4);
            assert!(r.passed, "{transform:?} input seed {seed}: {r:?}");
        }
    }
}

fn flatten(p: &RiskParams) -> Vec<f64> {
    let mut out = p.beta.clone();
    out.extend(&p.lambda);
    out.extend(p.w_smooth);
    out.push(p.w_d);
    out.extend(&p.v_bar);
    out
}

#[test]
fn head_gradients_match_differences() {
    for tv in [false, true] {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut heads = RiskHeads::new(tv, 30, seed);
            let p = jitter(&heads.params(), &mut rng, 0.05);
            heads.set_params(&p);
            let f = random_features(&mut rng);
            let out = forward_heads(&f, &heads, tv).unwrap();
            let mut up = out.zeros_like();
            up.beta.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            up.lambda.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            up.w_smooth = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            up.w_d = rng.random_range(-1.0..1.0);
            up.v_bar.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            let up_flat = flatten(&up);

            let grad = backward_heads(&f, &heads, &up).unwrap().flat();
            assert_eq!(grad.len(), heads.param_count());
            let loss = |q: &[f64]| {
                let mut h = heads.clone();
                h.set_params(q);
                dot(&flatten(&forward_heads(&f, &h, tv).unwrap()), &up_flat)
            };
            let r = gradient_check(loss, &p, &grad, 1e-4);
            assert!(r.passed, "tv {tv} seed {seed}: {r:?}");
        }
    }
}

#[test]
fn mismatched_upstream_is_rejected() {
    let heads = RiskHeads::new(true, 30, 0);
    let f = SceneFeatures([0.0; FEATURE_DIM]);
    let up = RiskParams::constant([0.0; 3], [0.0; 3], [0.0; 2], 0.0, vec![0.0; 30]);
    assert!(backward_heads(&f, &heads, &up).is_err());
}

#[test]
fn features_are_finite_and_ignore_agent_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kind in ScenarioKind::ALL {
        for s in generate_scenarios(kind, 5, 31).unwrap() {
            let f = extract_features(&s);
            assert!(f.0.iter().all(|v| v.is_finite()), "{kind:?}");
            let mut shuffled = s.clone();
            for i in (1..shuffled.agents.len()).rev() {
                shuffled.agents.swap(i, rng.random_range(0..=i));
            }
            let g = extract_features(&shuffled);
            for (a, b) in f.0.iter().zip(&g.0) {
                assert!((a - b).abs() < 1e-12, "{kind:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn checkpoints_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let heads = RiskHeads::new(true, 30, 8);
    let predictor = PredictorModel::new(3, 30, 8);
    let hp = dir.path().join("planner.json");
    let pp = dir.path().join("predictor.json");
    ModelFile::from_heads(&heads).save(&hp).unwrap();
    ModelFile::from_predictor(&predictor).save(&pp).unwrap();
    assert_eq!(load_heads(&hp).unwrap(), heads);
    assert_eq!(load_predictor(&pp).unwrap(), predictor);
    // identical models serialize to identical bytes
    assert_eq!(
        ModelFile::from_heads(&heads).to_json(),
        std::fs::read_to_string(&hp).unwrap()
    );
    // a file from the other stage is refused
    assert!(load_heads(&pp).is_err());
    assert!(load_predictor(&hp).is_err());
    assert!(load_heads(dir.path().join("missing.json")).is_err());
}

#[test]
fn head_outputs_respect_their_ranges() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..10 {
        let mut heads = RiskHeads::new(true, 30, seed);
        let p = jitter(&heads.params(), &mut rng, 1.0);
        heads.set_params(&p);
        let out = forward_heads(&random_features(&mut rng), &heads, true).unwrap();
        assert!(out.beta.iter().all(|&b| b > 0.0));
        assert!(out.w_smooth.iter().all(|&w| w >= 0.0) && out.w_d >= 0.0);
        assert!(out.v_bar.iter().all(|&v| v >= 0.0));
    }
}

proptest! {
    #[test]
    fn softplus_inverse_round_trips(y in 1e-6..100.0f64) {
        prop_assert!((softplus(softplus_inv(y)) - y).abs() <= 1e-9 * y.max(1.0));
    }
}
