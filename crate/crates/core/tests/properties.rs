use hlflock::analysis::{corollary1_partial_sums, derive_bound_params};
use hlflock::config::SimConfig;
use hlflock::{
    simulate, step, sup_norm, to_relative, Frame, FlockState, Hierarchy, InitialCondition, InteractionKind,
    InteractionModel, RngStream, Scenario, Vec3, WeightMatrix,
};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(a, b, c)| Vec3::new(a, b, c))
}

fn kind() -> impl Strategy<Value = InteractionKind> {
    prop_oneof![
        (0.0..2.0f64).prop_map(|alpha| InteractionKind::PowerLaw { alpha }),
        (0.01..1.0f64, 0.0..2.0f64).prop_map(|(p, alpha)| InteractionKind::BernoulliFailure { p, alpha }),
        (0.01..1.0f64, 0.0..2.0f64)
            .prop_map(|(p, alpha)| InteractionKind::ScaledRandom { p, alpha, distribution: None }),
        (0.01..1.0f64, 0.0..2.0f64).prop_map(|(p, alpha)| InteractionKind::RandomEnvironment { p, alpha }),
        (0.3..2.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(sigma, beta, g)| InteractionKind::DeterministicCs {
            gain: g * sigma.powf(2.0 * beta),
            sigma,
            beta
        }),
    ]
}

/// A valid hierarchy on `k` birds: each follower picks a non-empty subset of
/// lower labels from the mask bits.
fn hierarchy(k: usize) -> impl Strategy<Value = Hierarchy> {
    prop::collection::vec(any::<u8>(), k - 1).prop_map(move |masks| {
        let mut sets = vec![Vec::new()];
        for (n, m) in masks.into_iter().enumerate() {
            let i = n + 2;
            let mut l: Vec<usize> = (1..i).filter(|&j| m & (1 << ((j - 1) % 8)) != 0).collect();
            if l.is_empty() {
                l.push(1 + (m as usize) % (i - 1));
            }
            sets.push(l);
        }
        Hierarchy::from_leader_sets(sets).unwrap()
    })
}

fn scenario() -> impl Strategy<Value = Scenario> {
    (2usize..7).prop_flat_map(|k| {
        (
            hierarchy(k),
            kind(),
            0.05..1.0f64,
            prop::collection::vec(vec3(5.0), k),
            prop::collection::vec(vec3(1.0), k),
        )
            .prop_map(move |(hier, kind, hf, positions, velocities)| {
                Scenario::new(
                    hier,
                    InteractionModel::new(kind).unwrap(),
                    hf / (k - 1) as f64,
                    InitialCondition::Explicit { positions, velocities },
                )
                .unwrap()
            })
    })
}

fn close(a: &[Vec3], b: &[Vec3], scale: f64) -> bool {
    a.iter().zip(b).all(|(p, q)| (*p - *q).norm() <= 1e-12 * scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn frames_agree(sc in scenario(), seed in any::<u64>()) {
        let abs = simulate(&sc, RngStream::new(seed, 0), Frame::Absolute, 80).unwrap();
        let rel = simulate(&sc, RngStream::new(seed, 0), Frame::Relative, 80).unwrap();
        for (a, r) in abs.states.iter().zip(&rel.states) {
            let c = to_relative(a).unwrap();
            let scale = 1.0 + a.sup_position() + a.sup_velocity();
            prop_assert!(close(c.positions(), r.positions(), scale));
            prop_assert!(close(c.velocities(), r.velocities(), scale));
        }
    }

    #[test]
    fn galilean_shift_commutes_with_step(sc in scenario(), shift in vec3(10.0), boost in vec3(3.0)) {
        // same weights on a boosted, shifted copy; differences stay equal
        let s = sc.initial_state(&RngStream::new(0, 0), Frame::Absolute).unwrap();
        let w = WeightMatrix::constant(&sc.hierarchy, 1, 0.5).unwrap();
        let moved = FlockState::new(
            0,
            s.positions().iter().map(|&x| x + shift).collect(),
            s.velocities().iter().map(|&v| v + boost).collect(),
            Frame::Absolute,
        ).unwrap();
        let (a, b) = (step(&s, &sc.hierarchy, &w, sc.h).unwrap(), step(&moved, &sc.hierarchy, &w, sc.h).unwrap());
        let scale = 20.0;
        let back_v: Vec<Vec3> = b.velocities().iter().map(|&v| v - boost).collect();
        let back_x: Vec<Vec3> = b.positions().iter().map(|&x| x - shift - sc.h * boost).collect();
        prop_assert!(close(a.velocities(), &back_v, scale));
        prop_assert!(close(a.positions(), &back_x, scale));
    }

    #[test]
    fn sup_norm_ignores_order(mut vs in prop::collection::vec(vec3(10.0), 1..10), rot in 0usize..10) {
        let before = sup_norm(&vs);
        let n = vs.len();
        vs.rotate_left(rot % n);
        vs.reverse();
        prop_assert_eq!(sup_norm(&vs), before);
    }

    #[test]
    fn pathwise_monotone(sc in scenario(), seed in any::<u64>()) {
        let traj = simulate(&sc, RngStream::new(seed, 0), Frame::Relative, 100).unwrap();
        for w in traj.states.windows(2) {
            prop_assert!(w[1].sup_velocity() <= w[0].sup_velocity() * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn config_round_trip(p in 0.01..1.0f64, alpha in 0.0..2.0f64, speed in 0.0..3.0f64, seed in any::<u64>(), k in 2usize..8) {
        let text = format!(
            "k = {k}\nh = {h}\nhorizon = 10\nseed = {seed}\n[hierarchy]\npreset = \"star\"\n[model]\nkind = \"random_environment\"\np = {p}\nalpha = {alpha}\n[initial]\nmode = \"sampled\"\nbox_side = 1.0\nspeed = {speed}\n",
            h = 1.0 / (k - 1) as f64
        );
        let cfg = SimConfig::from_toml(&text).unwrap();
        let once = cfg.to_toml();
        let again = SimConfig::from_toml(&once).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.to_toml(), once);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Monte Carlo mean of each kind's weight dominates its certificate.
    #[test]
    fn certificate_is_sound(kind in kind(), d in 0.0..5.0f64, seed in any::<u64>()) {
        let m = InteractionModel::new(kind).unwrap();
        let cert = m.certificate();
        let floor = cert.p / (1.0 + d).powf(cert.alpha);
        let rng = RngStream::new(seed, 0);
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|t| m.weight(d, rng.uniform(t, 0, 0, 0))).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        prop_assert!(draws.iter().all(|w| (0.0..=1.0).contains(w)));
        prop_assert!(mean + 4.0 * sd / (n as f64).sqrt() >= floor * (1.0 - 1e-12), "mean {mean} below {floor}");
        prop_assert!(m.expected_weight(d) >= floor * (1.0 - 1e-12));
    }
}

#[test]
fn corollary1_series_converges_for_subcritical_chain() {
    // δ_t from the bound constants: constant in t
    let s = FlockState::new(
        0,
        vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(1.0, 1.0, 0.0)],
        vec![Vec3::ZERO, Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.0, 0.2, 0.0), Vec3::new(0.0, 0.0, 0.3)],
        Frame::Relative,
    )
    .unwrap();
    let hier = Hierarchy::chain(4).unwrap();
    let bp = derive_bound_params(&s, &hier, 0.3, hlflock::Certificate { p: 0.5, alpha: 0.5 }).unwrap();
    let diag = corollary1_partial_sums(&bp, 4, |_| 1.0, 1_000_000).unwrap();
    assert!(diag.converged, "{diag:?}");
    // independent check: direct summation to far past the stopping point
    let rate = bp.p / ((2.0 * bp.v0).powf(bp.alpha) * (1.0 - bp.alpha));
    let term = |t: u64| (t as f64).powi(2) * (-rate * (bp.h * t as f64).powf(0.5)).exp();
    let direct: f64 = (1..=4 * diag.terms).map(term).sum();
    let further: f64 = (1..=8 * diag.terms).map(term).sum();
    assert!((further - direct).abs() <= 1e-12 * direct);
    // stopping once a block adds < 1e-6 leaves a tail of order 1e-5
    assert!((diag.partial_sum - direct).abs() <= 1e-4 * direct, "{} vs {direct}", diag.partial_sum);
}
