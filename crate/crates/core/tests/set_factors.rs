//! Partition, merge and label shifting on Gaussian-mixture set densities.

use proptest::prelude::*;
use setbp::gaussian::Gaussian;
use setbp::mixture::GaussianMixture;
use setbp::rfs::{BernoulliComponent, Label, PoissonProcess};
use setbp::set_factors::{merge_ppps, partition_ppp, shift_label, LabeledDensity};
use setbp::Error;

fn ppp(components: &[(f64, f64, f64)]) -> PoissonProcess {
    let mut m = GaussianMixture::new();
    for &(w, x, var) in components {
        m.push(w, Gaussian::isotropic(&[x, -x], var)).unwrap();
    }
    PoissonProcess::undetected(m)
}

/// Component parameters as sortable bit patterns.
fn sorted_params(p: &PoissonProcess) -> Vec<Vec<u64>> {
    let mut out: Vec<Vec<u64>> = p
        .intensity
        .components
        .iter()
        .map(|c| {
            let mut bits = vec![c.log_weight.to_bits()];
            bits.extend(c.gaussian.mean.iter().map(|v| v.to_bits()));
            bits.extend(c.gaussian.cov.iter().map(|v| v.to_bits()));
            bits
        })
        .collect();
    out.sort();
    out
}

#[test]
fn merge_gives_weighted_mixture() {
    let merged = merge_ppps(&[ppp(&[(1.0, 0.0, 1.0)]), ppp(&[(2.0, 3.0, 1.0)])]).unwrap();
    let weights: Vec<f64> = merged.intensity.components.iter().map(|c| c.weight()).collect();
    assert_eq!(weights.len(), 2);
    assert!((weights[0] - 1.0).abs() < 1e-15);
    assert!((weights[1] - 2.0).abs() < 1e-15);
    assert!((merged.mass() - 3.0).abs() < 1e-14);
}

#[test]
fn merge_of_one_input_is_identity() {
    let p = ppp(&[(0.5, 1.0, 2.0), (1.5, -1.0, 0.5)]);
    assert_eq!(merge_ppps(std::slice::from_ref(&p)).unwrap(), p);
}

#[test]
fn empty_intensity_is_merge_identity() {
    let p = ppp(&[(0.5, 1.0, 2.0)]);
    let empty = PoissonProcess::default();
    assert_eq!(merge_ppps(&[empty.clone(), p.clone()]).unwrap(), p);
    assert_eq!(merge_ppps(&[p.clone(), empty]).unwrap(), p);
}

#[test]
fn merge_rejects_labeled_inputs() {
    let mut labeled = ppp(&[(1.0, 0.0, 1.0)]);
    labeled.label = Label(2);
    assert!(matches!(merge_ppps(&[ppp(&[]), labeled]), Err(Error::Label(_))));
}

#[test]
fn partition_copies_input() {
    let p = ppp(&[(0.3, 1.0, 1.0), (0.7, 2.0, 4.0)]);
    let parts = partition_ppp(&p, 3).unwrap();
    assert_eq!(parts.len(), 3);
    assert!(parts.iter().all(|q| *q == p));
    assert_eq!(partition_ppp(&p, 1).unwrap(), vec![p]);
    let empty = PoissonProcess::default();
    assert!(partition_ppp(&empty, 2).unwrap().iter().all(|q| q.intensity.is_empty()));
    assert!(matches!(partition_ppp(&empty, 0), Err(Error::Argument(_))));
}

#[test]
fn conversion_to_new_landmark_label() {
    let previous_landmarks = 2;
    let measurement = 1;
    let d = LabeledDensity::Poisson(ppp(&[(1.0, 0.0, 1.0)]));
    let shifted = shift_label(&d, previous_landmarks + measurement).unwrap();
    assert_eq!(shifted.label(), Label(3));
}

#[test]
fn zero_shift_and_inverse_shift_are_identity() {
    let b = BernoulliComponent::gaussian(0.4, Gaussian::isotropic(&[1.0, 2.0], 0.3), Label(4))
        .unwrap();
    let d = LabeledDensity::Bernoulli(b);
    assert_eq!(shift_label(&d, 0).unwrap(), d);
    let there = shift_label(&d, 5).unwrap();
    assert_eq!(shift_label(&there, -5).unwrap(), d);
    assert!(matches!(shift_label(&d, -5), Err(Error::Label(_))));
}

fn arb_ppp() -> impl Strategy<Value = PoissonProcess> {
    prop::collection::vec((1e-3..10.0f64, -50.0..50.0f64, 0.01..20.0f64), 0..5)
        .prop_map(|c| ppp(&c))
}

proptest! {
    #[test]
    fn merge_is_commutative(a in arb_ppp(), b in arb_ppp()) {
        let ab = merge_ppps(&[a.clone(), b.clone()]).unwrap();
        let ba = merge_ppps(&[b, a]).unwrap();
        prop_assert_eq!(sorted_params(&ab), sorted_params(&ba));
    }

    #[test]
    fn merge_is_associative(a in arb_ppp(), b in arb_ppp(), c in arb_ppp()) {
        let left = merge_ppps(&[merge_ppps(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
        let right = merge_ppps(&[a.clone(), merge_ppps(&[b.clone(), c.clone()]).unwrap()]).unwrap();
        let flat = merge_ppps(&[a, b, c]).unwrap();
        prop_assert_eq!(sorted_params(&left), sorted_params(&right));
        prop_assert_eq!(sorted_params(&left), sorted_params(&flat));
    }

    #[test]
    fn merge_adds_expected_cardinality(inputs in prop::collection::vec(arb_ppp(), 1..5)) {
        let merged = merge_ppps(&inputs).unwrap();
        let input_sum: f64 = inputs
            .iter()
            .flat_map(|p| p.intensity.components.iter().map(|c| c.weight()))
            .sum();
        let merged_sum: f64 = merged.intensity.components.iter().map(|c| c.weight()).sum();
        prop_assert_eq!(merged_sum.to_bits(), input_sum.to_bits());
    }

    #[test]
    fn partition_then_merge_reproduces_input(p in arb_ppp(), n in 1usize..6) {
        let mut parts = partition_ppp(&p, n).unwrap();
        parts.truncate(1);
        parts.extend(std::iter::repeat_n(PoissonProcess::default(), n - 1));
        prop_assert_eq!(merge_ppps(&parts).unwrap(), p);
    }

    #[test]
    fn shift_preserves_parameters(
        p in arb_ppp(),
        r in 0.0..=1.0f64,
        start in 1u32..100,
        offset in 0i64..100,
    ) {
        let poisson = LabeledDensity::Poisson(p.clone());
        match shift_label(&poisson, offset).unwrap() {
            LabeledDensity::Poisson(q) => prop_assert_eq!(q.intensity, p.intensity),
            other => prop_assert!(false, "kind changed: {other:?}"),
        }
        let b = BernoulliComponent::gaussian(r, Gaussian::isotropic(&[0.5, 1.5], 2.0), Label(start)).unwrap();
        match shift_label(&LabeledDensity::Bernoulli(b.clone()), offset).unwrap() {
            LabeledDensity::Bernoulli(q) => {
                prop_assert_eq!(q.existence.to_bits(), b.existence.to_bits());
                prop_assert_eq!(q.density, b.density);
                prop_assert_eq!(i64::from(q.label.0), i64::from(start) + offset);
            }
            other => prop_assert!(false, "kind changed: {other:?}"),
        }
    }
}
