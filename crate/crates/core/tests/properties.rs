use napcoll::collectives::Algorithm;
use napcoll::costmodel::{model_nap, model_rd, model_smp};
use napcoll::topology::{nap_partner, node_of};
use napcoll::{ClusterShape, CostParams, Locality, PartnerAction, ReduceOp, ReductionBuffer};
use proptest::prelude::*;

type Model = fn(usize, usize, f64, &CostParams) -> napcoll::Result<f64>;

fn shapes() -> impl Strategy<Value = ClusterShape> {
    (1usize..=12, prop::sample::select(vec![1usize, 2, 4, 8]))
        .prop_map(|(n, ppn)| ClusterShape::new(n, ppn).unwrap())
}

fn power_shapes() -> impl Strategy<Value = ClusterShape> {
    (prop::sample::select(vec![2usize, 4, 8, 16]), 0u32..=3)
        .prop_filter("at most 4096 ranks", |(ppn, k)| ppn.pow(*k + 1) <= 4096)
        .prop_map(|(ppn, k)| ClusterShape::new(ppn.pow(k), ppn).unwrap())
}

fn op() -> impl Strategy<Value = ReduceOp> {
    prop::sample::select(vec![ReduceOp::Sum, ReduceOp::Max, ReduceOp::Min])
}

fn i64_inputs(p: usize, s: usize) -> impl Strategy<Value = Vec<ReductionBuffer>> {
    prop::collection::vec(prop::collection::vec(any::<i64>(), s), p)
        .prop_map(|rows| rows.into_iter().map(ReductionBuffer::from_i64).collect())
}

fn fold(inputs: &[ReductionBuffer], op: ReduceOp) -> ReductionBuffer {
    inputs[1..]
        .iter()
        .fold(inputs[0].clone(), |acc, b| op.combine(&acc, b).unwrap())
}

fn params() -> impl Strategy<Value = CostParams> {
    (
        1e-8f64..1e-5,
        1e-12f64..1e-8,
        1e-7f64..1e-4,
        1e8f64..1e10,
        1e8f64..1e11,
        1e-12f64..1e-8,
    )
        .prop_map(
            |(alpha_local, beta_local, alpha, r_b, r_n, gamma)| CostParams {
                alpha_local,
                beta_local,
                alpha,
                r_b,
                r_n,
                gamma,
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_supported_algorithm_matches_the_fold(
        (shape, inputs) in shapes().prop_flat_map(|shape| (Just(shape), i64_inputs(shape.total_ranks(), 3))),
        op in op(),
    ) {
        let expected = fold(&inputs, op);
        for alg in Algorithm::ALL {
            if alg.check_shape(&shape).is_ok() {
                let result = alg.run(&inputs, op, &shape).unwrap();
                prop_assert!(result.buffers.iter().all(|b| *b == expected), "{} on {}", alg, shape);
            }
        }
    }

    #[test]
    fn float_sums_stay_within_the_reassociation_bound(
        (shape, rows) in shapes().prop_flat_map(|shape| {
            (Just(shape), prop::collection::vec(prop::collection::vec(-1.0f64..=1.0, 2), shape.total_ranks()))
        }),
    ) {
        let inputs: Vec<_> = rows.iter().cloned().map(ReductionBuffer::from_f64).collect();
        let p = shape.total_ranks();
        let bound = (p * 2) as f64 * 2f64.powi(-48);
        for alg in Algorithm::ALL {
            if alg.check_shape(&shape).is_err() {
                continue;
            }
            let result = alg.run(&inputs, ReduceOp::Sum, &shape).unwrap();
            for j in 0..2 {
                let serial: f64 = rows.iter().map(|r| r[j]).sum();
                let magnitude: f64 = rows.iter().map(|r| r[j].abs()).sum();
                for b in &result.buffers {
                    prop_assert!((b.as_f64().unwrap()[j] - serial).abs() <= bound * magnitude);
                }
            }
        }
    }

    #[test]
    fn partners_pair_up_across_nodes(shape in power_shapes(), rank_seed in any::<usize>()) {
        let rank = rank_seed % shape.total_ranks();
        for step in 0..shape.nap_steps().unwrap() {
            match nap_partner(rank, step, &shape).unwrap() {
                PartnerAction::Exchange(peer) => {
                    prop_assert_eq!(nap_partner(peer, step, &shape).unwrap(), PartnerAction::Exchange(rank));
                    prop_assert_ne!(node_of(peer, &shape).unwrap(), node_of(rank, &shape).unwrap());
                    prop_assert_eq!(peer % shape.ppn() == rank % shape.ppn(), false);
                }
                PartnerAction::Idle => {}
                other => prop_assert!(false, "{:?} on a power shape", other),
            }
        }
    }

    #[test]
    fn non_divisible_partners_are_consistent(n in 1usize..=40, ppn in prop::sample::select(vec![2usize, 4, 8])) {
        let shape = ClusterShape::new(n, ppn).unwrap();
        for step in 0..shape.nap_steps().unwrap() {
            for rank in 0..shape.total_ranks() {
                match nap_partner(rank, step, &shape).unwrap() {
                    PartnerAction::Exchange(peer) => {
                        prop_assert_eq!(nap_partner(peer, step, &shape).unwrap(), PartnerAction::Exchange(rank));
                    }
                    PartnerAction::ExtraSendTo(targets) => {
                        for t in targets {
                            prop_assert_eq!(nap_partner(t, step, &shape).unwrap(), PartnerAction::ExtraRecvFrom(rank));
                        }
                    }
                    PartnerAction::ExtraRecvFrom(src) => {
                        let sends = matches!(nap_partner(src, step, &shape).unwrap(),
                            PartnerAction::ExtraSendTo(t) if t.contains(&rank));
                        prop_assert!(sends);
                    }
                    PartnerAction::Idle => {}
                }
            }
        }
    }

    #[test]
    fn runs_are_deterministic(shape in shapes(), seed in any::<u64>()) {
        let inputs = napcoll::inputs::seeded_inputs(shape.total_ranks(), 2, napcoll::ElementKind::F64, seed);
        for alg in Algorithm::ALL {
            if alg.check_shape(&shape).is_ok() {
                let a = alg.run(&inputs, ReduceOp::Sum, &shape).unwrap();
                let b = alg.run(&inputs, ReduceOp::Sum, &shape).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn locality_agrees_with_node_of(shape in shapes(), a in any::<usize>(), b in any::<usize>()) {
        let (a, b) = (a % shape.total_ranks(), b % shape.total_ranks());
        let class = Locality::classify(a, b, &shape).unwrap();
        let same_node = node_of(a, &shape).unwrap() == node_of(b, &shape).unwrap();
        prop_assert_eq!(class.is_internode(), !same_node);
        if class == Locality::IntraSocket {
            prop_assert_eq!(shape.socket_of(a).unwrap(), shape.socket_of(b).unwrap());
        }
    }

    #[test]
    fn models_grow_with_every_cost_term(
        base in params(),
        log2_p in 4u32..=16,
        log2_ppn in 1u32..=4,
        s in 1.0f64..1e6,
        scale in 1.0f64..10.0,
    ) {
        let (p, ppn) = (1usize << log2_p, 1usize << log2_ppn);
        let models: [Model; 3] = [model_rd, model_smp, model_nap];
        for model in models {
            let t = model(p, ppn, s, &base).unwrap();
            prop_assert!(model(p, ppn, s * scale, &base).unwrap() >= t);
            for bump in [
                CostParams { alpha: base.alpha * scale, ..base },
                CostParams { alpha_local: base.alpha_local * scale, ..base },
                CostParams { gamma: base.gamma * scale, ..base },
            ] {
                prop_assert!(model(p, ppn, s, &bump).unwrap() >= t);
            }
        }
    }
}
