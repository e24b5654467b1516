//! Browser bindings: generate a synthetic chain in memory and run the
//! breakdown, linking and attribution analyses over it.
//!
//! Every export returns a JSON string; failures surface as a thrown string.

use std::cell::RefCell;

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use zflow::attribute::{run_pipeline, Attribution, PipelineConfig};
use zflow::link::linked_value_curve;
use zflow::model::TxKind;
use zflow::stats::{kind_breakdown, pool_series};
use zflow::synth::{generate, ScenarioConfig, Synthetic};
use zflow::Snapshot;

/// Upper bound on points sent to the pool chart.
const CHART_POINTS: usize = 400;

struct Loaded {
    synthetic: Synthetic,
    snap: Snapshot,
}

thread_local! {
    static CHAIN: RefCell<Option<Loaded>> = const { RefCell::new(None) };
}

fn err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn with_chain<T>(f: impl FnOnce(&Loaded) -> Result<T, JsValue>) -> Result<T, JsValue> {
    CHAIN.with(|c| match c.borrow().as_ref() {
        Some(l) => f(l),
        None => Err(err("no chain generated yet")),
    })
}

/// Generates a chain and returns its kind breakdown and pool balance series.
#[wasm_bindgen]
pub fn simulate(seed: u32, blocks: u32) -> Result<String, JsValue> {
    let cfg = ScenarioConfig {
        seed: seed as u64,
        blocks,
        ..ScenarioConfig::default()
    };
    cfg.validate().map_err(err)?;
    let synthetic = generate(&cfg).map_err(err)?;
    let snap = Snapshot::from_block_records(synthetic.blocks.clone()).map_err(err)?;
    let out = summary(&snap)?;
    CHAIN.with(|c| *c.borrow_mut() = Some(Loaded { synthetic, snap }));
    Ok(out.to_string())
}

fn summary(snap: &Snapshot) -> Result<Value, JsValue> {
    let tip = snap.tip().ok_or_else(|| err("empty chain"))?;
    let kinds = kind_breakdown(snap, 0..=tip).map_err(err)?;
    let series = pool_series(snap).map_err(err)?;
    let step = series.points.len().div_ceil(CHART_POINTS).max(1);
    let pool: Vec<Value> = series
        .points
        .iter()
        .enumerate()
        .filter(|(i, _)| i % step == 0 || *i + 1 == series.points.len())
        .map(|(_, p)| json!({ "height": p.height, "balance_zec": p.balance.to_zec_string() }))
        .collect();
    Ok(json!({
        "blocks": tip + 1,
        "transactions": kinds.total(),
        "kinds": TxKind::ALL.iter().map(|k| json!({
            "kind": k.as_str(),
            "count": kinds.count(*k),
            "percent": kinds.percent(*k),
        })).collect::<Vec<_>>(),
        "pool": pool,
        "total_deposited_zec": series.total_deposited.to_zec_string(),
        "total_withdrawn_zec": series.total_withdrawn.to_zec_string(),
        "final_balance_zec": series.final_balance().to_zec_string(),
    }))
}

/// Cumulative round-trip links for comma-separated ascending gaps.
#[wasm_bindgen]
pub fn linked_curve(gaps: &str) -> Result<String, JsValue> {
    let gaps: Vec<u32> = gaps
        .split(',')
        .map(str::trim)
        .filter(|g| !g.is_empty())
        .map(|g| g.parse::<u32>().map_err(|_| err(format!("bad gap {g:?}"))))
        .collect::<Result<_, _>>()?;
    if gaps.is_empty() || gaps.contains(&0) {
        return Err(err("gaps must be positive integers"));
    }
    with_chain(|l| {
        let points = linked_value_curve(&l.snap, &gaps).map_err(err)?;
        let rows: Vec<Value> = points
            .iter()
            .map(|p| json!({ "gap": p.gap, "links": p.links, "value_zec": p.value.to_zec_string() }))
            .collect();
        Ok(Value::Array(rows).to_string())
    })
}

/// Runs the attribution pipeline and returns deposit and withdrawal
/// coverage per category.
#[wasm_bindgen]
pub fn attribution(founder_value: bool, pool_payout: bool) -> Result<String, JsValue> {
    with_chain(|l| {
        let mut reg = l.synthetic.registry(&l.snap).map_err(err)?;
        let cfg = PipelineConfig {
            founder_value,
            pool_payout,
            ..PipelineConfig::default()
        };
        let r = run_pipeline(&l.snap, &mut reg, &cfg).map_err(err)?;
        let side = |s: &zflow::attribute::CoverageSide| {
            [Attribution::Founder, Attribution::Miner, Attribution::Other]
                .iter()
                .map(|c| {
                    json!({
                        "category": c.as_str(),
                        "count": s.get(*c).tx_count,
                        "count_percent": s.count_percent(*c),
                        "value_zec": s.get(*c).value.to_zec_string(),
                        "value_percent": s.value_percent(*c),
                    })
                })
                .collect::<Vec<_>>()
        };
        Ok(json!({
            "rounds": r.rounds,
            "converged": r.converged,
            "new_tags": r.new_tags.len(),
            "deposits": side(&r.coverage.deposits),
            "withdrawals": side(&r.coverage.withdrawals),
        })
        .to_string())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_chain_round_trip() {
        let s: Value = serde_json::from_str(&simulate(7, 600).unwrap()).unwrap();
        assert_eq!(s["blocks"], 600);
        let curve: Value = serde_json::from_str(&linked_curve("1,10,100").unwrap()).unwrap();
        let links: Vec<u64> = curve.as_array().unwrap().iter().map(|p| p["links"].as_u64().unwrap()).collect();
        assert!(links.windows(2).all(|w| w[0] <= w[1]));
        let a: Value = serde_json::from_str(&attribution(true, true).unwrap()).unwrap();
        assert_eq!(a["converged"], true);
    }
}
