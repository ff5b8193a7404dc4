//! Tensor files, label sidecars and checkpoints.

use ntae::datagen::{synth_tucker_batch, train_test_split, SynthConfig};
use ntae::io::{decode_tensor, encode_tensor, load_tensor, read_labels, save_tensor, write_labels, Dtype};
use ntae::models::{Autoencoder, ModePlan, Model, ModelKind, ModelSpec};
use ntae::training::{load_checkpoint, save_checkpoint, train_with_state, AdamState, TrainConfig};
use ntae::DenseTensor;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ntt1_round_trip_is_bitwise(
        shape in prop::collection::vec(1usize..5, 1..6),
        seed in any::<u64>(),
        specials in any::<bool>(),
    ) {
        let mut x = DenseTensor::random_normal(&shape, seed).unwrap();
        if specials {
            let d = x.data_mut();
            d[0] = -0.0;
            if d.len() > 2 {
                d[1] = f64::MIN_POSITIVE / 4.0;
                d[2] = f64::MAX;
            }
        }
        let bytes = encode_tensor(&x, Dtype::F64);
        let (y, used) = decode_tensor(&bytes, 0).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(y.shape(), x.shape());
        prop_assert!(y.data().iter().zip(x.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_or_corrupted_blobs_are_rejected(seed in any::<u64>(), cut in any::<prop::sample::Index>()) {
        let x = DenseTensor::random_normal(&[3, 4], seed).unwrap();
        let bytes = encode_tensor(&x, Dtype::F64);
        let n = cut.index(bytes.len());
        prop_assert!(decode_tensor(&bytes[..n], 0).is_err());
        let mut flipped = bytes.clone();
        flipped[n] ^= 0x40;
        prop_assert!(decode_tensor(&flipped, 0).is_err());
    }
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let x = DenseTensor::random_normal(&[5, 2, 3], 1).unwrap();
    let path = dir.path().join("x.ntt");
    save_tensor(&path, &x).unwrap();
    assert_eq!(load_tensor(&path).unwrap(), x);

    let labels = vec![3, 0, 1, 1, 2];
    let lpath = dir.path().join("y.txt");
    write_labels(&lpath, &labels).unwrap();
    assert_eq!(read_labels(&lpath).unwrap(), labels);
    assert!(load_tensor(dir.path().join("missing.ntt")).is_err());
}

fn spec(kind: ModelKind) -> ModelSpec {
    let shape = vec![8, 8];
    ModelSpec {
        kind,
        plan: ModePlan::all_modes(&shape, 0.5).unwrap(),
        sample_shape: shape,
        skip_connections: if kind == ModelKind::MaNtae { Some(true) } else { None },
        activation: Default::default(),
    }
}

#[test]
fn checkpoints_restore_models_and_optimizer_state() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_tucker_batch(&SynthConfig {
        batch: 20,
        ..SynthConfig::new(3, 8, 2)
    })
    .unwrap();
    let (tr, _) = train_test_split(&data, 0.8, 3).unwrap();
    let cfg = TrainConfig {
        minibatch: Some(4),
        ..TrainConfig::new(2)
    };
    for kind in [ModelKind::MaNtae, ModelKind::Tfnn, ModelKind::Dae] {
        let mut model = Model::build(&spec(kind), 7).unwrap();
        let mut state = AdamState::new(model.params());
        train_with_state(&mut model, &mut state, &tr, None, &cfg).unwrap();

        let path = dir.path().join(format!("{kind}.ntck"));
        save_checkpoint(&path, &model, Some(&state)).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.model, model, "{kind}");
        assert_eq!(ck.optimizer.as_ref(), Some(&state), "{kind}");

        // Resuming from the restored state matches resuming in memory.
        let (mut a, mut sa) = (model.clone(), state.clone());
        let (mut b, mut sb) = (ck.model, ck.optimizer.unwrap());
        train_with_state(&mut a, &mut sa, &tr, None, &cfg).unwrap();
        train_with_state(&mut b, &mut sb, &tr, None, &cfg).unwrap();
        assert_eq!(a, b, "{kind}");

        let bare = dir.path().join(format!("{kind}_bare.ntck"));
        save_checkpoint(&bare, &model, None).unwrap();
        assert!(load_checkpoint(&bare).unwrap().optimizer.is_none());

        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint(&path).is_err(), "{kind}: corruption went unnoticed");
    }
}
