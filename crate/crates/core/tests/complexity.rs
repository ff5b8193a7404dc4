//! Closed-form parameter and FLOP counts against built models.

use ntae::models::{bias_free_param_count, closed_form_counts, Autoencoder, ModePlan, Model, ModelKind, ModelSpec};
use ntae::rng::SeededRng;

const KINDS: [ModelKind; 3] = [ModelKind::MaNtae, ModelKind::Tfnn, ModelKind::Dae];

fn spec(kind: ModelKind, shape: &[usize], plan: &ModePlan) -> ModelSpec {
    ModelSpec {
        kind,
        sample_shape: shape.to_vec(),
        plan: plan.clone(),
        skip_connections: None,
        activation: Default::default(),
    }
}

#[test]
fn closed_form_matches_built_models() {
    let mut rng = SeededRng::new(11);
    let mut case = 0;
    while case < 20 {
        let order = 1 + rng.below(3);
        let shape: Vec<usize> = (0..order).map(|_| 2 + rng.below(7)).collect();
        let alpha = 0.25 + 0.5 * rng.uniform();
        // Small extents at small alpha can round a width to zero; draw again.
        let Ok(plan) = ModePlan::all_modes(&shape, alpha) else {
            continue;
        };
        case += 1;
        let free = bias_free_param_count(&plan) as usize;
        for kind in KINDS {
            let model = Model::build(&spec(kind, &shape, &plan), case as u64).unwrap();
            let counts = closed_form_counts(kind, &shape, &plan).unwrap();
            assert_eq!(model.param_count() as u64, counts.total, "{kind} {shape:?}");
            assert_eq!(model.bias_count() as u64, counts.biases, "{kind} {shape:?}");
            if kind != ModelKind::Dae {
                assert_eq!(model.param_count() - model.bias_count(), free, "{kind} {shape:?}");
            }
        }
        // Bias-free count by hand: each stage has two I x H and two H x K matrices.
        let by_hand: usize = plan
            .stages()
            .iter()
            .map(|s| 2 * s.input * s.hidden + 2 * s.hidden * s.latent)
            .sum();
        assert_eq!(free, by_hand);
    }
}

#[test]
fn flattening_model_grows_faster_with_extent() {
    for order in [3usize, 4] {
        let mut last = 0.0;
        for dim in [8usize, 10, 20, 40, 80] {
            let shape = vec![dim; order - 1];
            let plan = ModePlan::all_modes(&shape, 0.5).unwrap();
            let dae = closed_form_counts(ModelKind::Dae, &shape, &plan).unwrap().weights() as f64;
            let ma = closed_form_counts(ModelKind::MaNtae, &shape, &plan).unwrap().weights() as f64;
            let ratio = dae / ma;
            assert!(ratio > last, "order {order} dim {dim}: ratio {ratio} after {last}");
            last = ratio;
        }
    }
}

#[test]
fn reference_sizes() {
    // Order 3 with I = 20 at alpha = 0.5: two stages of 20 -> 10 -> 5.
    let shape = [20, 20];
    let plan = ModePlan::all_modes(&shape, 0.5).unwrap();
    assert_eq!(bias_free_param_count(&plan), 2 * 2 * (20 * 10 + 10 * 5));
    assert_eq!(bias_free_param_count(&plan), 1000);
    let ma = closed_form_counts(ModelKind::MaNtae, &shape, &plan).unwrap();
    assert_eq!(ma.biases, 2 * (2 * 10 + 5 + 20));
    let dae = closed_form_counts(ModelKind::Dae, &shape, &plan).unwrap();
    assert_eq!(dae.weights(), 2 * (400 * 100 + 100 * 25));
    assert_eq!(dae.total, 85_625);
}

#[test]
fn ratio_grows_over_the_documented_extents() {
    for order in [3usize, 4, 5] {
        let ratios: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&dim| {
                let shape = vec![dim; order - 1];
                let plan = ModePlan::all_modes(&shape, 0.5).unwrap();
                let dae = closed_form_counts(ModelKind::Dae, &shape, &plan).unwrap().total as f64;
                let ma = closed_form_counts(ModelKind::MaNtae, &shape, &plan).unwrap().total as f64;
                dae / ma
            })
            .collect();
        assert!(ratios.windows(2).all(|w| w[1] > w[0]), "order {order}: {ratios:?}");
    }
}

#[test]
fn sweep_of_a_hundred_configs_is_fast() {
    let cfg: ntae::experiments::ParamSweepConfig = ntae::experiments::parse_config(
        "orders = [3, 4, 5]\ndims = [10, 20, 30, 40, 50, 60, 70, 80, 90, 100]\nalphas = [0.3, 0.4, 0.5, 0.6]\n",
    )
    .unwrap();
    let t0 = std::time::Instant::now();
    let report = ntae::experiments::param_sweep(&cfg).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    // 120 grid points, one row per model.
    assert_eq!(report.tables[0].rows.len(), 120 * 3);
    assert!(secs < 1.0, "{secs} s");
}
