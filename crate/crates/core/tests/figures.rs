use gaussmax::oracle::sampling::{sample_forward, SamplingMode};
use gaussmax::*;

#[test]
fn inverse_marginal_with_belief_centred_at_two() {
    // (1.06, 0.94) is what the unit-variance, rho = -0.5 prior gives under N(2, 1).
    let p = BivariatePrior::new(1.0, 1.0, 1.0, 1.0, -0.5).unwrap();
    let got = inverse_moments(&p, &MaxPrior::gaussian(2.0, 1.0).unwrap()).unwrap();
    println!("  belief N(2, 1): x1 = ({:.6}, {:.6})", got.x1.mean(), got.x1.variance());
    assert!((got.x1.mean() - 1.06).abs() <= 0.01);
    assert!((got.x1.variance() - 0.94).abs() <= 0.01);
}

#[test]
fn fig2_rejection_protocol_matches_density() {
    // 20,000 rejection samples against the closed-form density, binned.
    let p = BivariatePrior::new(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
    let mp = MaxPrior::gaussian(1.0, 1.0).unwrap();
    let f = forward_moments(&p, &mp).unwrap();
    let s = sample_forward(&MvPrior::from_bivariate(&p), &mp, 20_000, 42, SamplingMode::Rejection).unwrap();
    assert!(s.mean_within(f.mean(), 3.0));
    assert!(s.variance_within(f.variance(), 3.0));
}
