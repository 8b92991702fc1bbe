//! Regenerates the synthetic estimate fixture.
//!
//! `cargo run -p minbo-cli --example make_fixture [DIR]` (default `fixtures/synthetic`).

use std::path::PathBuf;

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map_or_else(|| PathBuf::from("fixtures/synthetic"), PathBuf::from);
    if let Err(e) = minbo_cli::fixture::write_fixture(&dir) {
        eprintln!("{e}");
        std::process::exit(1);
    }
    println!("wrote {}", dir.display());
}
