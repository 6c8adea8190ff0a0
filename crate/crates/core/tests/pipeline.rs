use inverse_erm::basis::{BasisFamily, IndexDomain, MultiIndex};
use inverse_erm::estimators::{delta_net_minimize, dense_minimize, dense_truncation};
use inverse_erm::models::{sample_density, simulate_white_noise, Observation, TruthSpec};
use inverse_erm::operators::SvdOperator;
use inverse_erm::spaces::{
    build_delta_net, quadratic_risk, CoefficientVector, Ellipsoid, LatticeNet, Net,
};
use proptest::prelude::*;

fn trig() -> IndexDomain {
    IndexDomain::Trig { dim: 1 }
}

#[test]
fn net_text_round_trip_preserves_the_estimate() {
    let e = Ellipsoid::polynomial(trig(), 2.0, 1.0).unwrap();
    let op = SvdOperator::convolution(trig(), 1.0, 1.0).unwrap();
    let net = build_delta_net(&e, 0.4).unwrap();
    let back = Net::read_text(net.to_text().as_bytes(), BasisFamily::Trig).unwrap();
    assert_eq!(back.len(), net.len());
    assert_eq!(back.support(), net.support());

    let theta = CoefficientVector::from_entries(
        BasisFamily::Trig,
        [(MultiIndex::cos(0), 0.3), (MultiIndex::cos(1), 0.1)],
    )
    .unwrap();
    let truth = TruthSpec::new(theta, e).unwrap();
    let obs =
        Observation::WhiteNoise(simulate_white_noise(&truth, &op, net.support(), 500, 11).unwrap());
    let a = delta_net_minimize(&net, &obs, &op).unwrap();
    let b = delta_net_minimize(&back, &obs, &op).unwrap();
    assert_eq!(a.estimate, b.estimate);
    assert_eq!(a.risk_value, b.risk_value);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lattice_minimum_matches_exhaustive_search(
        z in prop::collection::vec(-0.6f64..0.6, 7),
        delta in 0.45f64..0.9,
    ) {
        let e = Ellipsoid::polynomial(trig(), 2.0, 1.0).unwrap();
        let lattice = LatticeNet::new(&e, delta).unwrap();
        let net = Net::from_lattice(&lattice, BasisFamily::Trig, 100_000).unwrap();
        let z = &z[..lattice.support().len().min(z.len())];
        prop_assume!(z.len() == lattice.support().len());
        let best = net
            .raw_points()
            .iter()
            .map(|p| quadratic_risk(p, z))
            .fold(f64::INFINITY, f64::min);
        let min = lattice.minimize(z).unwrap();
        prop_assert!((min.risk - best).abs() <= 1e-12, "{} vs {best}", min.risk);
        let count = lattice.cardinality().unwrap();
        prop_assert!((net.len() as f64 - count).abs() <= 1e-9 * count);
    }
}

#[test]
fn density_estimates_improve_with_sample_size() {
    let e = Ellipsoid::polynomial(trig(), 2.0, 2.0).unwrap();
    let op = SvdOperator::convolution(trig(), 1.0, 1.0).unwrap();
    let theta = CoefficientVector::from_entries(
        BasisFamily::Trig,
        [(MultiIndex::cos(0), 1.0), (MultiIndex::cos(1), 0.4)],
    )
    .unwrap();
    let truth = TruthSpec::density(theta, e.clone(), &op, 0.1).unwrap();
    let error = |n: usize| -> f64 {
        (0..10)
            .map(|seed| {
                let obs = Observation::Sample(sample_density(&truth, &op, n, seed).unwrap());
                let m = dense_truncation(&e, 0.2).unwrap();
                let est = dense_minimize(&e, &obs, &op, m, 1e-10).unwrap();
                est.estimate.distance(truth.theta()).powi(2)
            })
            .sum::<f64>()
            / 10.0
    };
    let small = error(100);
    let large = error(10_000);
    assert!(large < small / 5.0, "{small} -> {large}");
}
