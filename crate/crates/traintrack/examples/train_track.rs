//! Compute a relative train track representative for an outer automorphism.
//!
//! ```text
//! cargo run --example train_track -- "a -> aabA; b -> a"
//! ```
//!
//! With no argument, runs the conjugated Fibonacci map above: its rose
//! representative takes an illegal turn, and the folding loop recovers the
//! golden-ratio train track map.

use traintrack::auto::parse_automorphism;
use traintrack::toprep::rtt;

fn main() {
    let spec = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "a -> aabA; b -> a".to_string());
    let phi = match parse_automorphism(&spec) {
        Ok(phi) => phi,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    let out = match rtt(&phi, &[]) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(3);
        }
    };

    println!("moves applied:");
    for entry in &out.log {
        println!("  {}", entry.step);
    }
    println!();
    let rep = &out.rep;
    println!(
        "representative: {} vertices, {} edges, {} strata",
        rep.graph.n_verts,
        rep.graph.n_edges(),
        rep.filtration.strata.len()
    );
    for (i, s) in rep.filtration.strata.iter().enumerate() {
        let names: Vec<String> = s
            .edges
            .iter()
            .map(|&e| rep.graph.edges[e.0 as usize].name.clone())
            .collect();
        println!("  stratum {}: {:?} edges {}", i + 1, s.kind, names.join(" "));
    }
    for (e, img) in rep.edge_image.iter().enumerate() {
        println!(
            "  f({}) = {}",
            rep.graph.edges[e].name,
            rep.graph.show_path(img)
        );
    }
    let report = rep.check_rtt().expect("structure is sound");
    println!(
        "train track conditions: {}",
        if report.pass { "pass" } else { "FAIL" }
    );
}
