//! Property tests: structural invariants of the lazy engine over random valid
//! parameters and seeds.

use proptest::prelude::*;

use sepwalk_core::engine::{Engine, EngineConfig};
use sepwalk_core::environment::{AgentRegistry, Geometry, PathPurpose};
use sepwalk_core::experiment::{run_replica, ReplicaSpec};
use sepwalk_core::model::{confirmation_gap, DerivedConstants, ModelParams};
use sepwalk_core::randomness::StateDraws;
use sepwalk_core::stats::BlockSample;

fn valid_params() -> impl Strategy<Value = ModelParams> {
    (0.05..1.5f64, 0.05..1.5f64, 0.5..4.0f64, 0.5..4.0f64, 0.0..=1.0f64).prop_map(|(b0, b1, d0, d1, rho)| {
        let floor = b0.max(b1) + 1.0;
        ModelParams::new(floor + d0, floor + d1, b0, b1, rho).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn engine_keeps_its_bookkeeping(p in valid_params(), seed in any::<u64>()) {
        let mut cfg = EngineConfig::new(p, seed);
        cfg.check_couplings = true;
        cfg.check_invariants = true;
        let mut e = Engine::new(cfg, StateDraws::new(seed, p.rho)).unwrap();
        e.run_until(40.0).unwrap();
        prop_assert_eq!(e.couplings().violations(), 0);
        let w = *e.walker();
        prop_assert!(w.m <= w.x);
        prop_assert!(w.x.unsigned_abs() <= w.n);

        let (open, ledger) = e.finish().unwrap();
        prop_assert!(ledger.reconciles(), "{:?}", ledger);
        let mut t = 0.0;
        let mut x = 0;
        for (i, b) in e.blocks().iter().enumerate() {
            prop_assert_eq!(b.index, i as u64);
            prop_assert_eq!(b.is_first, i == 0);
            prop_assert!((b.start_time - t).abs() <= 1e-12 * (1.0 + t));
            prop_assert!(b.duration > 0.0);
            // the delayed first block may open with a left step
            prop_assert!(b.is_first || b.displacement >= 0);
            prop_assert!(b.confirmed_at >= b.start_time + b.duration);
            t = b.start_time + b.duration;
            x += b.displacement;
        }
        prop_assert!(open.censored);
        prop_assert!((open.start_time - t).abs() <= 1e-12 * (1.0 + t));
        prop_assert_eq!(x + open.displacement, w.x);
    }

    #[test]
    fn replicas_are_reproducible(p in valid_params(), seed in any::<u64>(), index in 0u64..1000) {
        let spec = ReplicaSpec::new(p, 20.0);
        let a = run_replica(&spec, seed, index).unwrap();
        let b = run_replica(&spec, seed, index).unwrap();
        // the censored block's confirmation time is NaN
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn confirmation_gap_meets_the_tolerance(r in 0.01..0.99f64, k in 1i32..16) {
        let eps = 10f64.powi(-k);
        let g = confirmation_gap(r, eps);
        prop_assert!(r.powi(g as i32) <= eps);
        prop_assert!(g == 1 || r.powi(g as i32 - 1) > eps);
    }

    #[test]
    fn derived_constants_are_consistent(p in valid_params()) {
        let c = DerivedConstants::new(&p, 1e-12).unwrap();
        prop_assert!(c.speed_lower_bound > 1.0);
        prop_assert!(c.ruin_ratio > 0.0 && c.ruin_ratio < 1.0);
        prop_assert!(c.completion_margin() > 0.0);
    }

    /// A right-Poisson path crosses an edge exactly when the edge rings while
    /// the path sits on its left end; paths that meet move together.
    #[test]
    fn y_paths_follow_their_arrows(arrows in proptest::collection::vec(-3i64..12, 0..200)) {
        let mut reg = AgentRegistry::new(Geometry::Line);
        let a = reg.spawn_y_path(0.0, 0, PathPurpose::Diagnostic);
        let b = reg.spawn_y_path(0.0, 2, PathPurpose::Diagnostic);
        let (mut pa, mut pb) = (0, 2);
        for e in arrows {
            reg.apply_arrow(e).unwrap();
            if e == pa { pa += 1; }
            if e == pb { pb += 1; }
            prop_assert_eq!(reg.path_position(a.id), pa);
            prop_assert_eq!(reg.path_position(b.id), pb);
            prop_assert!(pa <= pb);
        }
        prop_assert!(reg.check_invariants().is_ok());
    }

    #[test]
    fn cutoff_sample_only_keeps_early_blocks(p in valid_params(), seed in any::<u64>(), cutoff in 0.0..30.0f64) {
        let r = run_replica(&ReplicaSpec::new(p, 30.0), seed, 0).unwrap();
        let s = BlockSample::from_blocks_before(&r.blocks, 1, cutoff);
        let expect = r.blocks.iter().filter(|b| !b.is_first && b.start_time < cutoff).count();
        prop_assert_eq!(s.len(), expect);
    }
}
