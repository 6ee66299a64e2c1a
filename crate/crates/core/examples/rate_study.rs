//! KS distances of the approximation and the normal baseline from a
//! fine-truncation reference. Pass `n` as the first argument.

use pgn::levy::LevyMeasure1D;
use pgn::validation::rate_study;

fn main() -> pgn::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse::<f64>().ok())
        .map_or(1_000_000, |v| v as usize);
    let measure = LevyMeasure1D::trunc_stable(1.0, 0.5, 1.0);
    let res = rate_study(&measure, &[0.4, 0.2, 0.1, 0.05], false, n, 100.0, 11)?;
    print!("{}", res.to_csv());
    println!("noise floor {:.2e} (flag {})", res.noise_floor, res.noise_floor_flag);
    if let (Some(p), Some(q)) = (res.slope_pgn, res.slope_normal) {
        println!("slopes: pgn {:.3} ± {:.3}, normal {:.3} ± {:.3}", p.slope, p.se, q.slope, q.se);
    }
    Ok(())
}
