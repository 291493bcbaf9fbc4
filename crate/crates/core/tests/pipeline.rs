use mutual_ae::config::{DataSource, RunConfig};
use mutual_ae::pipeline;

fn tiny(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::from_json(
        r#"{
          "data": { "kind": "synthetic", "length": 700, "contexts": 3 },
          "ae1": { "window": 16, "channels": 4, "code_dim": 4 },
          "ae2": { "window": 16, "channels": 4, "code_dim": 3 },
          "dialogue": { "epochs": 2, "pretrain_epochs": 2, "batches": 20, "translator": { "epochs": 3 } },
          "regimes": { "k": 2, "profile_len": 8 },
          "strategy": { "horizon": 2 }
        }"#,
    )
    .unwrap();
    if let DataSource::Synthetic(p) = &mut cfg.data {
        p.seed = seed;
    }
    cfg
}

#[test]
fn sweep_flags_duplicates_and_ignores_worker_count() {
    let cfg = tiny(3);
    let mut data = pipeline::load_data(&cfg).unwrap();
    data.pairs[2] = mutual_ae::dataio::SeriesPair { context_name: "x1_copy".into(), ..data.pairs[0].clone() };
    let serial = pipeline::pair_sweep(&cfg, &data, 1).unwrap();
    let names: Vec<(&str, &str, bool)> = serial.iter().map(|e| (e.first.as_str(), e.second.as_str(), e.duplicate)).collect();
    assert_eq!(names, [("x1", "x2", false), ("x1", "x1_copy", true), ("x2", "x1_copy", false)]);
    assert!(serial.iter().all(|e| (0.0..=1.0).contains(&e.agreement_level)));
    assert_eq!(serial, pipeline::pair_sweep(&cfg, &data, 3).unwrap());
}

#[test]
fn oracle_libraries_trade_profitably() {
    let mut profitable = 0;
    for seed in 0..10 {
        let mut cfg = tiny(seed);
        cfg.ae1.window = 32;
        cfg.ae2.window = 32;
        cfg.regimes.profile_len = 24;
        cfg.regimes.k = 3;
        cfg.strategy.horizon = 4;
        if let DataSource::Synthetic(p) = &mut cfg.data {
            p.length = 2000;
        }
        let data = pipeline::load_data(&cfg).unwrap();
        let truth = data.synthetic.as_ref().unwrap();
        let set = pipeline::windows(&cfg, &data.pairs[0]).unwrap();
        let lib = pipeline::oracle_library(&cfg, truth, 0, &set).unwrap();
        let result = pipeline::backtest_held_out(&cfg, &data.pairs[0], &set, &lib).unwrap();
        assert!(result.periods.windows(2).all(|w| w[1].index - w[0].index == 4));
        assert!(result.periods[0].index >= pipeline::held_out_start(&set) + 23);
        profitable += usize::from(result.summary.total_return > 0.0);
    }
    assert!(profitable >= 8, "{profitable}/10 seeds profitable");
}
