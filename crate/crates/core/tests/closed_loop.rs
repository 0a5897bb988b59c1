use proptest::prelude::*;

use rdbs_core::kernels::{build_kernel_set, KernelSet, PlantParams};
use rdbs_core::pdesim::{run, InitialCondition, Scheduler, SimConfig};
use rdbs_core::trigger::{TriggerDesign, TriggerParams};

fn set(m: usize) -> KernelSet<f64> {
    build_kernel_set(PlantParams::reference(), m).unwrap()
}

fn config(m: usize, dt: f64) -> SimConfig<f64> {
    SimConfig {
        intervals: m,
        dt,
        ..SimConfig::reference()
    }
}

// Scaling the data by s and m0 by s^2 maps trajectories onto each other.
// Powers of two keep every floating-point operation exact.
#[test]
fn trigger_is_homogeneous_when_m0_scales_with_data() {
    let ks = set(64);
    let base = config(64, 1e-3);
    let reference = {
        let tp = TriggerParams::synthesize(&ks, TriggerDesign::reference()).unwrap();
        run(&base, &ks, &Scheduler::Event(tp)).unwrap()
    };
    for s in [0.25, 4.0, 16.0] {
        let mut design = TriggerDesign::reference();
        design.m0 *= s * s;
        let tp = TriggerParams::synthesize(&ks, design).unwrap();
        let mut cfg = base.clone();
        cfg.u0 = base.u0.scaled(s);
        cfg.uhat0 = base.uhat0.scaled(s);
        let log = run(&cfg, &ks, &Scheduler::Event(tp)).unwrap();
        assert_eq!(log.events, reference.events, "scale {s}");
        for (a, b) in log.norm_u.iter().zip(&reference.norm_u) {
            assert_eq!(*a, b * s);
        }
    }
}

#[test]
fn refinement_changes_terminal_norm_little() {
    let coarse = {
        let ks = set(161);
        let tp = TriggerParams::synthesize(&ks, TriggerDesign::reference()).unwrap();
        run(&config(161, 1e-3), &ks, &Scheduler::Event(tp)).unwrap()
    };
    let fine = {
        let ks = set(322);
        let tp = TriggerParams::synthesize(&ks, TriggerDesign::reference()).unwrap();
        run(&config(322, 5e-4), &ks, &Scheduler::Event(tp)).unwrap()
    };
    let a = *coarse.norm_u.last().unwrap();
    let b = *fine.norm_u.last().unwrap();
    assert!((a - b).abs() / b < 0.05, "{a} vs {b}");
}

#[test]
fn identical_configs_give_identical_logs() {
    let ks = set(161);
    let tp = TriggerParams::synthesize(&ks, TriggerDesign::reference()).unwrap();
    let cfg = SimConfig::reference();
    let a = run(&cfg, &ks, &Scheduler::Event(tp)).unwrap();
    let b = run(&cfg, &ks, &Scheduler::Event(tp)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn slow_sampling_beyond_certificate_still_runs() {
    let ks = set(64);
    let cfg = config(64, 1e-3);
    let log = run(&cfg, &ks, &Scheduler::Periodic { period: 0.05 }).unwrap();
    assert_eq!(log.events.len(), 21);
    assert!(log.norm_u.iter().all(|v| v.is_finite()));
}

#[test]
fn snapshots_are_recorded() {
    let ks = set(32);
    let mut cfg = config(32, 1e-3);
    cfg.horizon = 0.01;
    cfg.snapshot_every = Some(5);
    let log = run(&cfg, &ks, &Scheduler::OpenLoop).unwrap();
    assert_eq!(log.snapshots.len(), 3);
    assert_eq!(log.snapshots[0].u.len(), 33);
    let mut buf = Vec::new();
    log.write_snapshots_csv(&mut buf, ks.grid).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 3 * 33);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn trigger_invariants_hold_for_smooth_data(
        a in proptest::collection::vec(-8.0f64..8.0, 4),
        b in proptest::collection::vec(-8.0f64..8.0, 4),
        eta in prop_oneof![Just(1.0f64), Just(100.0)],
    ) {
        let ks = set(48);
        let poly = |c: &[f64]| {
            let mut v = vec![0.0];
            v.extend_from_slice(c);
            InitialCondition::Polynomial(v)
        };
        let mut cfg = config(48, 1e-3);
        cfg.horizon = 0.5;
        cfg.u0 = poly(&a);
        cfg.uhat0 = poly(&b);
        let tp = TriggerParams::synthesize(&ks, TriggerDesign { eta, ..TriggerDesign::reference() }).unwrap();
        let log = run(&cfg, &ks, &Scheduler::Event(tp)).unwrap();
        prop_assert_eq!(log.violations, 0);
        for (&m, &d) in log.m.iter().zip(&log.d) {
            prop_assert!(m < 0.0);
            prop_assert!(d * d <= -tp.gamma * m);
        }
        prop_assert!(log.events.windows(2).all(|w| w[1] - w[0] >= 1e-3 - 1e-12));
    }
}
