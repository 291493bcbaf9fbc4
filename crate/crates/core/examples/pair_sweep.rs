//! Sweeps every pair of three contexts, one of which carries no regime
//! information, and reports held-out P/L per pair.

use mutual_ae::config::{DataSource, RunConfig};
use mutual_ae::pipeline;

fn main() -> mutual_ae::Result<()> {
    let mut cfg = RunConfig::from_json(include_str!("../configs/quickstart.json"))?;
    if let DataSource::Synthetic(p) = &mut cfg.data {
        p.contexts = 3;
        p.uninformative = vec![2];
    }
    let data = pipeline::load_data(&cfg)?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    for e in pipeline::pair_sweep(&cfg, &data, workers)? {
        println!(
            "{} + {}: agreement {:.3}, total return {:+.3} / {:+.3}{}",
            e.first,
            e.second,
            e.agreement_level,
            e.results[0].summary.total_return,
            e.results[1].summary.total_return,
            if e.duplicate { " (duplicate contexts)" } else { "" }
        );
    }
    Ok(())
}
