//! Evaluate the total-variation bound over a log grid of truncation radii.

use pgn::bounds::{dtv_bound_1d, q_floor_sq};
use pgn::levy::LevyMeasure1D;
use pgn::matching::{match5, match_sym9};

fn main() -> pgn::Result<()> {
    let measure = LevyMeasure1D::trunc_stable(1.0, 1.5, 1.0);
    println!("{:>10} {:>12} {:>12} {:>10}", "r", "asym", "sym", "Q6/floor");
    for k in 0..=8 {
        let r = 10f64.powf(-1.0 - k as f64 * 0.25);
        let asym = dtv_bound_1d(&measure, &match5(&measure, r)?)?;
        let sym = dtv_bound_1d(&measure, &match_sym9(&measure, r)?)?;
        println!(
            "{r:>10.3e} {:>12.4e} {:>12.4e} {:>10.4}",
            asym.dtv_bound,
            sym.dtv_bound,
            asym.qs[&6].powi(2) / q_floor_sq(6)
        );
    }
    Ok(())
}
