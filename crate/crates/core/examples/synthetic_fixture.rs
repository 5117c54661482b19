//! Writes the synthetic 47-sample expression matrix used by the EPR tests.
//!
//! Usage: cargo run -p shrinkmean --example synthetic_fixture -- <out.csv> [seed]

use std::sync::Arc;

use shrinkmean::io::{write_matrix_csv, Dataset};
use shrinkmean::model::{build_mean, generate_sample, stream_rng, Covariance};
use shrinkmean::{CovarianceSpec, ErrorDist, MeanSpec, ProblemInstance};

const SAMPLES: usize = 47;
const GENES: usize = 200;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().ok_or("missing output path")?;
    let seed: u64 = args.next().map_or(Ok(2024), |s| s.parse())?;

    let mut rng = stream_rng(seed, 0);
    // gene-level means around a common offset, so shrinkage has something to borrow
    let mu = build_mean(&MeanSpec::Mu1 { tau: 0.5 }, GENES, &mut rng)?.add_scalar(2.0);
    let cov = Arc::new(Covariance::from_spec(&CovarianceSpec::Sigma1, GENES, None)?);
    let inst = ProblemInstance::new(mu, cov, SAMPLES, ErrorDist::Normal)?;
    let data = generate_sample(&inst, &mut stream_rng(seed, 1));

    let mut ds = Dataset::new(data, "synthetic");
    ds.row_labels = (1..=SAMPLES).map(|i| format!("array{i:02}")).collect();
    ds.column_labels = (1..=GENES).map(|j| format!("gene{j:03}")).collect();
    write_matrix_csv(&ds, &out)?;
    Ok(())
}
