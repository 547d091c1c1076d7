//! Regenerates the synthetic fixtures under `fixtures/`.
//!
//! cargo run -p mcl-core --example write_fixtures -- fixtures

use std::path::PathBuf;

use mcl_core::data::{synthetic, write_generic};

/// Seed shared with the fixture consistency test.
const FIXTURE_SEED: u64 = 7;

fn main() {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    for (dir, ds) in [
        ("movielens-mini", synthetic::movielens_like(FIXTURE_SEED)),
        ("amazon-mini", synthetic::amazon_like(FIXTURE_SEED)),
        ("yelp-mini", synthetic::yelp_like(FIXTURE_SEED)),
    ] {
        let path = root.join(dir);
        std::fs::create_dir_all(&path).expect("create fixture directory");
        write_generic(&path, &ds).expect("write fixture");
        println!("{}: {} nodes, {} edges", path.display(), ds.hin.num_nodes(), ds.hin.num_edges());
    }
}
