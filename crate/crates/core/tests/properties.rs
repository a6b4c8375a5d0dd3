mod common;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use common::oracle::*;
use common::{build_sources, quiet_panics};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tms_core::datastore::{FleetStore, RoadGraph, UpdateOutcome, VehicleState, VehicleStatus};
use tms_core::depgraph::topological_order;
use tms_core::event::{EventDescriptor, EventPayload};
use tms_core::geo::GeoPoint;
use tms_core::protocol::{decode_frame, marshal_frame, unmarshal_frame, FrameError};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn order_of(graph: &[(String, Vec<String>)]) -> Result<Vec<String>, tms_core::CycleError> {
    topological_order(graph.iter().map(|(id, deps)| (id.as_str(), deps.iter().map(String::as_str))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn codec_round_trips(seed in any::<u64>()) {
        let msg = random_message(&mut rng(seed));
        let bytes = marshal_frame(&msg);
        let (decoded, used) = decode_frame(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(&decoded, &msg);
        let mut cursor = std::io::Cursor::new(&bytes);
        prop_assert_eq!(unmarshal_frame(&mut cursor).unwrap(), msg);
    }

    #[test]
    fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
        match decode_frame(&bytes) {
            Ok((msg, used)) => {
                prop_assert!(used <= bytes.len());
                prop_assert_eq!(&marshal_frame(&msg)[..], &bytes[..used]);
            }
            Err(FrameError::Decode(_)) | Err(FrameError::TruncatedStream) | Err(FrameError::Closed) => {}
            Err(other) => prop_assert!(false, "unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_frames_are_errors(seed in any::<u64>(), cut in any::<prop::sample::Index>()) {
        let bytes = marshal_frame(&random_message(&mut rng(seed)));
        let cut = cut.index(bytes.len());
        prop_assert!(decode_frame(&bytes[..cut]).is_err());
    }

    #[test]
    fn topological_order_respects_dags(seed in any::<u64>()) {
        let graph = random_dag(&mut rng(seed), 30);
        let order = order_of(&graph).unwrap();
        prop_assert_eq!(respects_all_edges(&order, &graph), Ok(()));
    }

    #[test]
    fn cycles_are_named(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut graph = random_dag(&mut r, 30);
        inject_cycle(&mut r, &mut graph);
        let err = order_of(&graph).unwrap_err();
        prop_assert!(is_true_cycle(&err.members, &graph), "{:?}", err.members);
        prop_assert_eq!(err.members.iter().min(), err.members.first());
    }

    #[test]
    fn propagation_matches_oracle(seed in any::<u64>()) {
        quiet_panics();
        let chain = random_source_chain(&mut rng(seed));
        let log = Arc::new(Mutex::new(Vec::new()));
        let sources = build_sources(&chain, &log);
        let ev = EventDescriptor::new("probe", "x", EventPayload::Empty, 0).unwrap();
        let trace = sources[0].propagate_event(&ev);
        let expected = expected_trace(&chain);
        prop_assert_eq!(trace.labels(), expected.clone());
        let ran: Vec<String> = expected.into_iter().filter(|l| !l.ends_with(":order")).collect();
        prop_assert_eq!(log.lock().unwrap().clone(), ran);
        let failed = trace.failures().count();
        let scripted = chain.iter().map(|s| {
            if listener_order_by_scanning(&s.listeners).is_some() { s.failing.len() } else { 1 }
        }).sum::<usize>();
        prop_assert_eq!(failed, scripted);
    }

    #[test]
    fn routes_match_exhaustive_search(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (nodes, edges) = random_weighted_graph(&mut r, 7);
        let mut g = RoadGraph::new();
        for (i, n) in nodes.iter().enumerate() {
            g.add_node(n.clone(), GeoPoint::new(i as f64 * 0.01, 0.0)).unwrap();
        }
        for ((a, b), w) in &edges {
            g.add_edge(a, b, *w).unwrap();
        }
        for from in &nodes {
            for to in &nodes {
                let got = g.shortest_route(from, to).unwrap();
                let want = best_simple_path(&edges, from, to);
                match (got, want) {
                    (None, None) => {}
                    (Some(route), Some((cost, path))) => {
                        prop_assert_eq!(route.total_seconds, cost);
                        prop_assert_eq!(route.nodes, path);
                    }
                    (got, want) => prop_assert!(false, "{from}->{to}: got {got:?}, oracle {want:?}"),
                }
            }
        }
    }

    #[test]
    fn fleet_last_update_is_monotone(timestamps in proptest::collection::vec(0u64..50, 1..40)) {
        let store = FleetStore::new();
        let mut high = 0;
        for ts in timestamps {
            let outcome = store.record_telemetry("v", GeoPoint::new(1.0, 1.0), ts as f64, ts).unwrap();
            prop_assert_eq!(outcome == UpdateOutcome::Applied, ts >= high);
            high = high.max(ts);
            let s = store.get_vehicle_state("v").unwrap();
            prop_assert_eq!(s.last_update, high);
            prop_assert_eq!(s.speed, high as f64);
        }
    }
}

#[test]
fn snapshots_are_never_torn() {
    // Each write keeps speed, latitude and last_update equal, so a reader
    // seeing a mix of two writes would notice.
    let store = Arc::new(FleetStore::new());
    let stop = Arc::new(AtomicBool::new(false));
    let writers: Vec<_> = (0..4)
        .map(|w| {
            let store = Arc::clone(&store);
            thread::spawn(move || {
                for ts in 1..2_000u64 {
                    let v = (ts % 80) as f64;
                    store
                        .update_vehicle_state(VehicleState {
                            vehicle_id: format!("v{}", (ts + w) % 5),
                            position: Some(GeoPoint::new(v, v)),
                            speed: v,
                            last_update: ts,
                            status: VehicleStatus::LoggedIn,
                        })
                        .unwrap();
                }
            })
        })
        .collect();
    let reader = {
        let store = Arc::clone(&store);
        let stop = Arc::clone(&stop);
        thread::spawn(move || {
            let mut seen: BTreeMap<String, u64> = BTreeMap::new();
            let mut reads = 0;
            while !stop.load(Ordering::SeqCst) {
                let snap = store.fleet_snapshot();
                assert!(snap.windows(2).all(|w| w[0].vehicle_id < w[1].vehicle_id));
                for s in snap {
                    let p = s.position.unwrap();
                    assert_eq!((p.lat, p.lon), (s.speed, s.speed), "torn state {s:?}");
                    assert_eq!(s.speed, (s.last_update % 80) as f64, "torn state {s:?}");
                    let last = seen.entry(s.vehicle_id.clone()).or_default();
                    assert!(s.last_update >= *last, "went backwards: {s:?}");
                    *last = s.last_update;
                }
                reads += 1;
            }
            reads
        })
    };
    for w in writers {
        w.join().unwrap();
    }
    stop.store(true, Ordering::SeqCst);
    assert!(reader.join().unwrap() > 0);
}
