//! Trades held-out planted data twice: with the ground-truth library and
//! with one learned from denoised reconstructions.

use mutual_ae::config::RunConfig;
use mutual_ae::dialogue::AeId;
use mutual_ae::pipeline;
use mutual_ae::strategy::Summary;

fn report(name: &str, s: &Summary) {
    println!(
        "{name:<16} {} periods, total return {:+.3}, max drawdown {:.3}, hit rate {:.2}, mean exposure {:+.3}",
        s.periods, s.total_return, s.max_drawdown, s.hit_rate, s.mean_exposure
    );
}

fn main() -> mutual_ae::Result<()> {
    let cfg = RunConfig::from_json(include_str!("../configs/quickstart.json"))?;
    let data = pipeline::load_data(&cfg)?;
    let truth = data.synthetic.as_ref().expect("synthetic data");
    let sets = [pipeline::windows(&cfg, &data.pairs[0])?, pipeline::windows(&cfg, &data.pairs[1])?];

    let oracle = pipeline::oracle_library(&cfg, truth, 0, &sets[0])?;
    let res = pipeline::backtest_held_out(&cfg, &data.pairs[0], &sets[0], &oracle)?;
    report("oracle library", &res.summary);

    let trained = pipeline::train(&cfg, &sets[0], &sets[1], false, |_| Ok(()))?;
    let d = &trained.mutual;
    let lib = pipeline::build_library(&cfg, d.ae(AeId::First), &data.pairs[0], &sets[0], d.epochs_completed())?;
    let res = pipeline::backtest_held_out(&cfg, &data.pairs[0], &sets[0], &lib)?;
    report("learned library", &res.summary);
    for p in res.periods.iter().take(5) {
        println!("  {}  theta {:.3}  exposure {:+.3}  return {:+.4}  cumulative {:+.4}", p.date, p.theta, p.exposure, p.target_return, p.cumulative);
    }
    Ok(())
}
