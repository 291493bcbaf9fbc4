//! Builds a pattern library from a trained autoencoder and compares it with
//! the library of the generator's noiseless ground truth.

use mutual_ae::config::RunConfig;
use mutual_ae::dialogue::AeId;
use mutual_ae::pipeline;
use mutual_ae::regimes::distance;

fn main() -> mutual_ae::Result<()> {
    let cfg = RunConfig::from_json(include_str!("../configs/quickstart.json"))?;
    let data = pipeline::load_data(&cfg)?;
    let truth = data.synthetic.as_ref().expect("synthetic data");
    let sets = [pipeline::windows(&cfg, &data.pairs[0])?, pipeline::windows(&cfg, &data.pairs[1])?];
    let trained = pipeline::train(&cfg, &sets[0], &sets[1], false, |_| Ok(()))?;
    let d = &trained.mutual;

    let learned = pipeline::build_library(&cfg, d.ae(AeId::First), &data.pairs[0], &sets[0], d.epochs_completed())?;
    let oracle = pipeline::oracle_library(&cfg, truth, 0, &sets[0])?;
    for p in learned.profiles() {
        let nearest = oracle
            .profiles()
            .filter(|o| o.class == p.class)
            .map(|o| distance(&p.values, &o.values).expect("same length"))
            .fold(f64::INFINITY, f64::min);
        println!(
            "{:>4} cluster {} ({:>4} windows): first {:+.2} last {:+.2}, nearest oracle profile at mse {nearest:.3}",
            p.class.to_string(),
            p.cluster,
            p.members,
            p.values[0],
            p.values[p.values.len() - 1]
        );
    }
    let dir = std::env::temp_dir().join("mutual_ae_pattern_library");
    let path = pipeline::write_library(&dir, "x1", &learned)?;
    println!("wrote {}", path.display());
    Ok(())
}
