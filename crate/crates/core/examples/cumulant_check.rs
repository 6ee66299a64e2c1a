//! Compare empirical cumulants of sampled draws with the target measure.

use pgn::levy::LevyMeasure1D;
use pgn::matching::fit_default;
use pgn::sampler::sample_pgn;
use pgn::validation::{empirical_cumulants, DEFAULT_BATCHES};

fn main() -> pgn::Result<()> {
    let measure = LevyMeasure1D::trunc_stable(1.0, 1.0, 1.0);
    let params = fit_default(&measure, 1.0, false)?;
    let batch = sample_pgn(&measure, &params, 2_000_000, 7)?;
    for est in empirical_cumulants(batch.values(), 4, DEFAULT_BATCHES)?.iter().skip(1) {
        let target = measure.cumulant(est.order)?;
        println!(
            "κ{} = {:.5} ± {:.5} (target {target:.5}, z = {:+.2})",
            est.order,
            est.estimate,
            est.standard_error,
            est.z(target)
        );
    }
    Ok(())
}
