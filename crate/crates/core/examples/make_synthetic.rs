//! Writes a synthetic trainingData.csv / validationData.csv pair.
//!
//! Usage: cargo run --example make_synthetic -- DIR [TRAIN_ROWS] [VALIDATION_ROWS] [SEED]

use std::path::PathBuf;

fn main() -> mtwifi::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(dir) = args.first().map(PathBuf::from) else {
        eprintln!("usage: make_synthetic DIR [TRAIN_ROWS] [VALIDATION_ROWS] [SEED]");
        std::process::exit(1);
    };
    let num = |i: usize, default: u64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    std::fs::create_dir_all(&dir).map_err(|e| mtwifi::Error::io(&dir, e))?;
    mtwifi::synthetic::write_uji_pair(&dir, num(1, 2000) as usize, num(2, 400) as usize, num(3, 7))?;
    println!("wrote {}", dir.display());
    Ok(())
}
