//! `throughput [horizon] [generic|homogeneous|probe]`

use std::time::Instant;

use sepwalk_core::engine::{Engine, EngineConfig};
use sepwalk_core::model::ModelParams;
use sepwalk_core::randomness::StateDraws;

fn main() {
    let mut args = std::env::args().skip(1);
    let horizon = args.next().map_or(20_000.0, |s| s.parse().unwrap());
    let case = args.next().unwrap_or_else(|| "generic".into());
    let p = match case.as_str() {
        "homogeneous" => ModelParams::homogeneous(3.0, 0.5, 0.5).unwrap(),
        _ => ModelParams::new(2.5, 4.0, 0.4, 0.6, 0.6).unwrap(),
    };
    let mut cfg = EngineConfig::new(p, 1);
    if case == "probe" {
        cfg.probe_rate = 1.0;
    }
    let start = Instant::now();
    let mut e = Engine::new(cfg, StateDraws::new(1, p.rho)).unwrap();
    e.run_until(horizon).unwrap();
    let el = start.elapsed().as_secs_f64();
    let c = e.counters();
    println!("{:?}", c);
    println!("x={} blocks={} {:.1} ns/event, {:.3} s", e.walker().x, e.blocks().len(), el * 1e9 / c.events as f64, el);
    let b = e.blocks();
    let n = b.len() as f64;
    let mt: f64 = b.iter().map(|b| b.duration).sum::<f64>() / n;
    let mk: f64 = b.iter().map(|b| b.attempts as f64).sum::<f64>() / n;
    let lag: f64 = b.iter().map(|b| b.confirmed_at - b.start_time - b.duration).sum::<f64>() / n;
    println!("mean dtau {mt:.3} mean attempts {mk:.3} mean confirmation lag {lag:.2}");
}
