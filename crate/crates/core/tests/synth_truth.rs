use zflow::attribute::{run_pipeline, PipelineConfig};
use zflow::cluster::build_clusters;
use zflow::link::find_round_trips;
use zflow::model::TxKind;
use zflow::stats::{address_stats, kind_breakdown, pool_series, zz_joinsplit_stats};
use zflow::synth::{evaluate, generate, ScenarioConfig};
use zflow::tsb::{scan, TsbConfig};
use zflow::Snapshot;

#[test]
fn default_scenario_matches_truth() {
    let cfg = ScenarioConfig::default();
    let syn = generate(&cfg).unwrap();
    let snap = Snapshot::from_block_records(syn.blocks.clone()).unwrap();
    let truth = &syn.truth;
    assert_eq!(snap.digest(), truth.digest);

    let kinds = kind_breakdown(&snap, 0..=cfg.blocks - 1).unwrap();
    for k in TxKind::ALL {
        assert_eq!(kinds.count(k), truth.kind_count(k), "{k:?}");
    }
    let series = pool_series(&snap).unwrap();
    assert_eq!(series.points.len(), truth.pool_ledger.len());
    for (p, t) in series.points.iter().zip(&truth.pool_ledger) {
        assert_eq!(p.balance.zat(), t.balance_zat, "height {}", t.height);
    }
    let a = address_stats(&snap);
    assert_eq!(a.distinct_t, truth.address_stats.distinct_t);
    assert_eq!(a.ever_shielding_inputs, truth.address_stats.ever_shielding_inputs);
    assert_eq!(a.ever_deshielding_outputs, truth.address_stats.ever_deshielding_outputs);
    let zz = zz_joinsplit_stats(&snap);
    assert_eq!(zz.private_tx_count, truth.zz.private_tx_count);

    let mut reg = syn.registry(&snap).unwrap();
    let clusters = build_clusters(&snap, true, &syn.exclusion_set()).unwrap();
    let attr = run_pipeline(&snap, &mut reg, &PipelineConfig::default()).unwrap();
    let trips = find_round_trips(&snap, cfg.round_trip_max_gap);
    let tsb = scan(&snap, &clusters, &reg, &syn.schedule, &TsbConfig::default()).unwrap();
    let ev = evaluate(&snap, &clusters, &attr, &trips, cfg.round_trip_max_gap, Some(&tsb), truth).unwrap();
    assert_eq!(ev.pure_clusters, ev.multi_address_clusters);
    assert_eq!((ev.h5.fp, ev.h5.fn_), (0, 0));
    assert_eq!((ev.h3.fp, ev.h3.fn_), (0, 0));
    assert_eq!((ev.h4.fp, ev.h4.fn_), (0, 0));
    assert_eq!((ev.tsb.fp, ev.tsb.fn_), (0, 0));
    assert!(attr.converged && attr.conflicts.is_empty());
}
