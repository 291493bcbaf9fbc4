//! Exports a planted dataset in the CSV schema and reads it back through
//! the same loader used for market data.

use mutual_ae::dataio::{generate_synthetic, load_csv, write_csv, PlantedPreset};

fn main() -> mutual_ae::Result<()> {
    let data = generate_synthetic(&PlantedPreset { length: 300, seed: 4, ..PlantedPreset::default() }.build())?;
    let dir = std::env::temp_dir().join("mutual_ae_csv_roundtrip");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("planted.csv");
    let columns: Vec<(&str, &[f64])> = std::iter::once((data.spec.target_name.as_str(), data.prices.as_slice()))
        .chain(data.spec.contexts.iter().zip(&data.contexts).map(|(c, v)| (c.name.as_str(), v.as_slice())))
        .collect();
    write_csv(&path, &data.dates, &columns)?;

    for (c, spec) in data.spec.contexts.iter().enumerate() {
        let pair = load_csv(&path, &data.spec.target_name, &spec.name, data.spec.horizon, 32)?;
        let same = pair == data.pairs[c];
        println!("{}: {} rows, identical to the generated pair: {same}", spec.name, pair.len());
    }
    println!("{}", path.display());
    Ok(())
}
