use mpsched::engine::congestion::CongestionState;
use mpsched::estimator::estimate_wait;
use mpsched::scheduler::{schedule_qaware, SchedContext};
use mpsched::types::{PacketKind, RateSample};
use mpsched::workload::{generate_web, web_sites, ObjectSizes};
use mpsched::{
    EstimatorMode, Packet, PacketId, PathConfig, PolicyKind, ScenarioConfig, SchedulerDecision,
    Simulation, SubflowId, SubflowState, WorkloadSpec,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_path() -> impl Strategy<Value = PathConfig> {
    (
        1.0f64..20.0,
        0.5f64..30.0,
        prop_oneof![Just(0.0), 0.0f64..0.05],
        2usize..60,
        0.0f64..1.0,
    )
        .prop_map(|(mbps, delay_ms, loss, queue, jitter_ms)| {
            let mut p = PathConfig::new("p", mbps * 1e6, delay_ms / 1e3);
            p.loss_rate = loss;
            p.queue_capacity = queue;
            p.access_jitter = jitter_ms / 1e3;
            p
        })
}

fn arb_workload(paths: usize) -> impl Strategy<Value = WorkloadSpec> {
    prop_oneof![
        (1.0f64..30.0, 0.0f64..0.5).prop_map(|(mbps, start)| WorkloadSpec::Cbr {
            rate: mbps * 1e6,
            start,
            duration: 1.5
        }),
        (1u64..3_000_000).prop_map(|size| WorkloadSpec::FileTransfer { size, start: 0.0 }),
        (1.0f64..20.0).prop_map(|mbps| WorkloadSpec::Poisson {
            rate: mbps * 1e6,
            start: 0.0,
            duration: 1.5
        }),
        (0..paths, 1.0f64..15.0).prop_map(|(p, mbps)| WorkloadSpec::UdpBurst {
            path: SubflowId(p),
            rate: mbps * 1e6,
            start: 0.3,
            stop: 1.0
        }),
    ]
}

fn arb_scenario() -> impl Strategy<Value = ScenarioConfig> {
    prop::collection::vec(arb_path(), 1..=3)
        .prop_flat_map(|paths| {
            let n = paths.len();
            (
                Just(paths),
                arb_workload(n),
                prop::collection::vec(arb_workload(n), 0..2),
                prop::sample::select(PolicyKind::ALL.to_vec()),
                any::<bool>(),
                1usize..80,
                any::<u64>(),
            )
        })
        .prop_map(|(paths, first, rest, policy, rtt_route, buffer, seed)| {
            let mut workloads = vec![first];
            workloads.extend(rest);
            if workloads.iter().all(WorkloadSpec::is_cross_traffic) {
                workloads.push(WorkloadSpec::Cbr {
                    rate: 4e6,
                    start: 0.0,
                    duration: 1.0,
                });
            }
            let policy = if policy == PolicyKind::DapsLite && paths.len() != 2 {
                PolicyKind::QAware
            } else {
                policy
            };
            let mut cfg = ScenarioConfig::new(paths, workloads, 2.0, seed).with_scheduler(policy);
            cfg.send_buffer = buffer;
            if rtt_route {
                cfg.estimator_mode = EstimatorMode::RttMinusWait;
            }
            cfg
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conservation_holds_after_every_event(cfg in arb_scenario()) {
        let mut sim = Simulation::new(&cfg).unwrap();
        let mut last = sim.now();
        let mut queued: Vec<u64> = vec![0; cfg.paths.len()];
        let mut completed: Vec<u64> = vec![0; cfg.paths.len()];
        while sim.step() {
            sim.check_invariants();
            prop_assert!(sim.now() >= last);
            last = sim.now();
            for (i, f) in sim.flows().iter().enumerate() {
                prop_assert!(f.counters.num_queued >= queued[i] && f.counters.num_completed >= completed[i]);
                queued[i] = f.counters.num_queued;
                completed[i] = f.counters.num_completed;
            }
        }
    }

    #[test]
    fn same_seed_same_report(cfg in arb_scenario()) {
        let a = mpsched::run(&cfg).unwrap();
        let b = mpsched::run(&cfg).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
    }
}

fn arb_flows() -> impl Strategy<Value = Vec<SubflowState>> {
    prop::collection::vec(
        (
            1usize..30,
            0usize..30,
            1u64..40,
            0u64..40,
            1e-4f64..0.5,
            1e-3f64..0.5,
        ),
        2..=2,
    )
    .prop_flat_map(|v| {
        let extra = prop::collection::vec(
            (
                1usize..30,
                0usize..30,
                1u64..40,
                0u64..40,
                1e-4f64..0.5,
                1e-3f64..0.5,
            ),
            0..=3,
        );
        (Just(v), extra)
    })
    .prop_map(|(mut v, extra)| {
        v.extend(extra);
        v.into_iter()
            .enumerate()
            .map(|(i, (cap, n, cwnd, in_flight, s, srtt))| {
                let mut f = SubflowState::new(SubflowId(i), cap, srtt, CongestionState::new(cwnd));
                let n = n.min(cap);
                f.device_queue = (0..n)
                    .map(|j| Packet::new(PacketId(j as u64), 1500, PacketKind::CrossTraffic))
                    .collect();
                f.counters.num_queued = n as u64;
                f.in_flight = in_flight.min(cwnd);
                f.service_estimate = s;
                f.srtt = srtt;
                f.srtt_sampled = true;
                f
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn no_policy_assigns_to_a_blocked_flow(flows in arb_flows(), pending in 1usize..100, window in 0usize..100) {
        let ctx = SchedContext { pending, send_window: window };
        for kind in PolicyKind::ALL {
            if kind == PolicyKind::DapsLite && flows.len() != 2 {
                continue;
            }
            let mut policy = kind.build();
            for _ in 0..5 {
                if let SchedulerDecision::Assign(k) = policy.decide(&flows, &ctx) {
                    prop_assert!(flows[k.index()].admissible(), "{} chose blocked {}", kind, k);
                }
            }
        }
    }

    #[test]
    fn policies_are_deterministic(flows in arb_flows(), window in 0usize..100) {
        let ctx = SchedContext { pending: 10, send_window: window };
        for kind in PolicyKind::ALL {
            if kind == PolicyKind::DapsLite && flows.len() != 2 {
                continue;
            }
            let (mut a, mut b) = (kind.build(), kind.build());
            for _ in 0..8 {
                prop_assert_eq!(a.decide(&flows, &ctx), b.decide(&flows, &ctx));
            }
        }
    }

    #[test]
    fn qaware_ignores_common_dyadic_scaling(flows in arb_flows(), exp in -30i32..30) {
        let c = 2f64.powi(exp);
        let mut scaled = flows.clone();
        for f in &mut scaled {
            f.service_estimate *= c;
        }
        prop_assert_eq!(schedule_qaware(&flows), schedule_qaware(&scaled));
    }

    #[test]
    fn wait_grows_with_occupancy(a in 0u64..500, b in 0u64..500, dp in 0u64..50, dt in 0.0f64..0.1, s in 1e-4f64..0.1) {
        let at = |n: u64| {
            let mut f = SubflowState::new(SubflowId(0), 1000, 0.01, CongestionState::new(10));
            f.counters.num_queued = n;
            f.service_estimate = s;
            f.dequeue_rate_sample = RateSample { delta_packets: dp, delta_t: dt };
            estimate_wait(&f)
        };
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(at(lo) <= at(hi));
    }

    #[test]
    fn web_objects_add_up_to_the_page(seed in any::<u64>(), site in 0usize..6, pareto in any::<bool>()) {
        let site = &web_sites()[site];
        let sizes = if pareto { ObjectSizes::Pareto { shape: 1.2 } } else { ObjectSizes::Uniform };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let objects = generate_web(site, (10e6, 30e6), sizes, 1448, &mut rng);
        prop_assert_eq!(objects.len(), site.object_count as usize);
        let total: u64 = objects.iter().map(|o| o.bytes).sum();
        prop_assert!(total.abs_diff(site.total_bytes()) <= 1448);
        prop_assert!(objects.iter().all(|o| (10e6..=30e6).contains(&o.rate)));
    }
}
