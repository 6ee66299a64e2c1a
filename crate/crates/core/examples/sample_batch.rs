//! Draw a batch from the fitted approximation and write it as CSV and binary.

use pgn::batch::SampleBatch;
use pgn::levy::LevyMeasure1D;
use pgn::matching::fit_default;
use pgn::sampler::{sample_pgn, PgnSampler};

fn main() -> pgn::Result<()> {
    let measure = LevyMeasure1D::LogSingular { c: 2.0 };
    let params = fit_default(&measure, 0.05, false)?;
    let sampler = PgnSampler::new(&measure, &params)?;
    println!(
        "tail rate {:.3}, envelope acceptance {:.3}",
        sampler.tail().rate(),
        sampler.tail().acceptance()
    );

    let batch = sample_pgn(&measure, &params, 100_000, 42)?;
    let dir = std::env::temp_dir();
    batch.write_csv(std::fs::File::create(dir.join("pgn_sample.csv"))?)?;
    let bin = dir.join("pgn_sample.bin");
    batch.write_binary(std::fs::File::create(&bin)?)?;
    let back = SampleBatch::read_binary(std::fs::File::open(&bin)?)?;
    assert_eq!(back, batch);

    let mean = batch.values().iter().sum::<f64>() / batch.n() as f64;
    println!("n = {} mean = {mean:.4} spec hash {}", batch.n(), batch.spec_hash_hex());
    Ok(())
}
