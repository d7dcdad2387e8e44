use proptest::prelude::*;
use slicelab::sim::{AllocationPlan, SimConfig, SimState};

fn run(cfg: SimConfig, seed: u64, actions: &[[f64; 2]]) -> SimState {
    let mut sim = SimState::new(cfg, seed).unwrap();
    sim.enable_audit();
    for a in actions {
        let m = sim.config().num_rbgs;
        sim.step_interval(&AllocationPlan::from_shares(a, m));
        let ledger = sim.packet_ledger();
        assert_eq!(ledger.arrived, ledger.delivered + ledger.queued, "packet conservation");
        for t in sim.take_audit() {
            assert!(t.granted <= m, "granted {} of {m}", t.granted);
            assert_eq!(t.per_slice.iter().sum::<usize>(), t.granted);
            if t.backlog_left {
                assert_eq!(t.granted, m, "idle RBG while a UE is backlogged");
            }
        }
    }
    sim
}

fn config(ues: [usize; 3], rate_mbps: f64) -> SimConfig {
    SimConfig { ue_counts: ues.to_vec(), per_ue_rate_bps: rate_mbps * 1e6, ttis_per_step: 20, ..SimConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conservation_and_grant_limits(
        seed in any::<u64>(),
        ues in prop::array::uniform3(0usize..8),
        rate in 0.2f64..6.0,
        actions in prop::collection::vec(prop::array::uniform2(-0.2f64..1.2), 8),
    ) {
        run(config(ues, rate), seed, &actions);
    }
}

#[test]
fn metric_streams_are_bit_identical_for_equal_inputs() {
    let actions: Vec<[f64; 2]> = (0..12).map(|i| [0.05 * i as f64, 0.6 - 0.04 * i as f64]).collect();
    let stream = |seed| {
        let mut sim = SimState::new(config([4, 6, 3], 2.0), seed).unwrap();
        actions
            .iter()
            .flat_map(|a| sim.step_interval(&AllocationPlan::from_shares(a, 20)))
            .map(|m| [m.t_rx.to_bits(), m.t_tx.to_bits(), m.util.to_bits(), m.d_vio.to_bits(), m.d_avg.to_bits()])
            .collect::<Vec<_>>()
    };
    assert_eq!(stream(7), stream(7));
    assert_ne!(stream(7), stream(8));
}

#[test]
fn metrics_stay_in_range() {
    let sim_cfg = config([6, 6, 5], 4.0);
    let mut sim = SimState::new(sim_cfg, 3).unwrap();
    for i in 0..10 {
        for m in sim.step_interval(&AllocationPlan::from_shares(&[0.1 * i as f64, 0.3], 20)) {
            assert!(m.is_finite());
            assert!((0.0..=1.0).contains(&m.util) && (0.0..=1.0).contains(&m.d_vio));
            assert!(m.t_rx >= 0.0 && m.t_tx >= 0.0 && m.d_avg >= 0.0);
        }
    }
}
