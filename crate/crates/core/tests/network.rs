mod common;

use common::{blueprint, model};
use unirep::network::{apply_sharing, ParamGroup, SharingConfig, SharingMode};
use unirep::norm::{Mode, NormStrategy};
use unirep::{ops, Dims4, DomainId, Error, Tensor4};

fn batch(t: usize, seed: u64) -> Tensor4<f32> {
    let mut s = seed;
    Tensor4::from_fn(Dims4::new(8, 8, 3, t), |_, _, _, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 40) as f32 / (1u64 << 24) as f32) - 0.5
    })
}

fn d(i: usize) -> DomainId {
    DomainId::new(i).unwrap()
}

#[test]
fn single_domain_collapses_every_mode() {
    let x = batch(4, 1);
    let reference = model(&[5], SharingMode::NoSharing, 3);
    let logits = reference.forward(&x, d(1), Mode::Train, false).unwrap().logits;
    for mode in [SharingMode::FullSharing, SharingMode::DeepSharing, SharingMode::Partial(vec![1])] {
        let m = model(&[5], mode.clone(), 3);
        assert_eq!(m.param_counts(), reference.param_counts(), "{mode:?}");
        let l = m.forward(&x, d(1), Mode::Train, false).unwrap().logits;
        assert_eq!(l, logits, "{mode:?}");
    }
}

#[test]
fn deep_sharing_has_one_classifier_per_domain() {
    let m = model(&[3, 4, 5], SharingMode::DeepSharing, 0);
    let classifiers: Vec<_> = (0..m.bank.tensors.len())
        .filter(|&i| m.group(i) == ParamGroup::Classifier)
        .map(|i| m.bank.tensors[i].value.dims())
        .collect();
    assert_eq!(classifiers.len(), 6);
    let single = model(&[3], SharingMode::NoSharing, 0).param_counts();
    assert_eq!(m.param_counts().conv(), single.conv());
}

#[test]
fn full_sharing_keeps_the_single_domain_weight_count() {
    let full = model(&[4, 4, 4], SharingMode::FullSharing, 0).param_counts();
    let single = model(&[4], SharingMode::NoSharing, 0).param_counts();
    assert_eq!(full.non_norm(), single.non_norm());
    let none = model(&[4, 4, 4], SharingMode::NoSharing, 0).param_counts();
    assert_eq!(none.non_norm(), 3 * single.non_norm());
}

#[test]
fn zero_weights_give_uniform_loss() {
    let mut m = model(&[7], SharingMode::DeepSharing, 0);
    for p in &mut m.bank.tensors {
        p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let (loss, _, _) = m.loss_and_grads(&batch(3, 2), &[0, 3, 6], d(1)).unwrap();
    assert!((loss - (7f64).ln()).abs() < 1e-6, "{loss}");
}

#[test]
fn full_sharing_domains_differ_by_class_pairing() {
    let bp = blueprint(&[6, 6], NormStrategy::default());
    let m = apply_sharing::<f64>(&bp, &SharingConfig::new(SharingMode::FullSharing, 1), 11).unwrap();
    let p2 = m.pairing(d(2)).unwrap().to_vec();
    assert_eq!(m.pairing(d(1)).unwrap(), &[0, 1, 2, 3, 4, 5]);
    assert_ne!(p2, vec![0, 1, 2, 3, 4, 5]);
    let x = batch(3, 5).cast::<f64>();
    let l1 = m.forward(&x, d(1), Mode::Train, false).unwrap().logits;
    let l2 = m.forward(&x, d(2), Mode::Train, false).unwrap().logits;
    for t in 0..3 {
        for (y, &unit) in p2.iter().enumerate() {
            assert_eq!(l2.at(0, 0, y, t), l1.at(0, 0, unit, t));
        }
    }
}

#[test]
fn construction_and_forward_are_deterministic() {
    let a = model(&[3, 3], SharingMode::NoSharing, 9);
    let b = model(&[3, 3], SharingMode::NoSharing, 9);
    assert_eq!(a, b);
    let x = batch(2, 3);
    let f1 = a.forward(&x, d(2), Mode::Train, false).unwrap().logits;
    let f2 = a.forward(&x, d(2), Mode::Train, false).unwrap().logits;
    assert_eq!(f1, f2);
    assert_ne!(a, model(&[3, 3], SharingMode::NoSharing, 10));
}

#[test]
fn other_domains_scales_get_exactly_zero_gradient() {
    let m = model(&[3, 3], SharingMode::DeepSharing, 1);
    let (_, grads, _) = m.loss_and_grads(&batch(4, 1), &[0, 1, 2, 0], d(1)).unwrap();
    let b2 = m.binding(d(2)).unwrap();
    for r in b2.norm_refs() {
        let entry = m.bank.sites[r.site].coll.scale_slot(d(2)).unwrap();
        let slot = m.bank.scale_slot(r.site, entry);
        assert!(!grads.is_touched(slot) && !grads.is_touched(slot + 1));
    }
    assert!(!grads.is_touched(b2.fc_weight));
    // Shared convolutions do receive gradient.
    assert!(grads.norm_sq(b2.stem) > 0.0);
}

#[test]
fn shared_weights_get_gradient_from_every_domain() {
    let m = model(&[3, 3, 3], SharingMode::DeepSharing, 2);
    let stem = m.binding(d(1)).unwrap().stem;
    for i in 1..=3 {
        let (_, g, _) = m.loss_and_grads(&batch(4, i as u64), &[0, 1, 2, 1], d(i)).unwrap();
        assert!(g.norm_sq(stem) > 0.0, "domain {i}");
    }
}

#[test]
fn backward_without_tape_is_a_lifecycle_error() {
    let m = model(&[3], SharingMode::DeepSharing, 0);
    let x = batch(2, 0);
    let fwd = m.forward(&x, d(1), Mode::Train, false).unwrap();
    let (_, dl) = ops::softmax_cross_entropy(&fwd.logits, &[0, 1]).unwrap();
    assert!(matches!(m.backward(&fwd, &dl), Err(Error::Lifecycle(_))));
    let mut kept = m.forward(&x, d(1), Mode::Train, true).unwrap();
    assert!(m.backward(&kept, &dl).is_ok());
    kept.discard_tape();
    assert!(matches!(m.backward(&kept, &dl), Err(Error::Lifecycle(_))));
}

#[test]
fn unknown_domain_is_rejected() {
    let m = model(&[3, 3], SharingMode::DeepSharing, 0);
    let err = m.forward(&batch(1, 0), d(3), Mode::Train, false).err().unwrap();
    assert!(matches!(err, Error::DomainIndex { index: 3, count: 2 }));
}

#[test]
fn frozen_mode_needs_accumulated_moments() {
    let m = model(&[3], SharingMode::DeepSharing, 0);
    let err = m.forward(&batch(2, 0), d(1), Mode::Frozen, false).err().unwrap();
    assert!(matches!(err, Error::UnfrozenMoments));
}

#[test]
fn doubling_filters_quadruples_residual_weights() {
    let bp1 = blueprint(&[4, 4], NormStrategy::default());
    let bp2 = unirep::network::build_blueprint(bp1.preset, 2, bp1.norm, &bp1.classes)
        .unwrap()
        .with_input(8, 3)
        .unwrap();
    let deep = |bp: &unirep::network::Blueprint, m| {
        apply_sharing::<f32>(bp, &SharingConfig::new(SharingMode::DeepSharing, m), 0)
            .unwrap()
            .param_counts()
    };
    let (c1, c2) = (deep(&bp1, 1), deep(&bp2, 2));
    assert_eq!(c2.residual, 4 * c1.residual);
    assert_eq!(c2.stem, 2 * c1.stem);
}
