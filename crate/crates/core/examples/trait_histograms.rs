//! Write one SVG histogram per trait, with the median marked, for the
//! personalities of a synthetic population.
//!
//! ```text
//! cargo run --example trait_histograms -- [out_dir]
//! ```

use std::path::PathBuf;

use pncf::corpus::{generate_synthetic, SyntheticSpec};
use pncf::personality::trait_distribution;
use pncf::plot::write_plots;

fn main() -> pncf::Result<()> {
    let dir: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("plots"));
    let data = generate_synthetic(SyntheticSpec::new(1000, 10, 5, 0.8), 0)?;
    for s in trait_distribution(&data.personalities, 20)? {
        println!("{:<18} n={} median {:.2} mean {:.2}", s.trait_.name(), s.count, s.median, s.mean);
    }
    for path in write_plots(&data.personalities, &dir, 20)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
