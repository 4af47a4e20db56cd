//! Parse a bundled case file, validate it, and round-trip the canonical
//! JSON form.
//!
//! ```bash
//! cargo run -p acopf --example parse_and_validate
//! ```

use acopf::casefile::{parse_case, validate, Network};

fn main() {
    let parsed = parse_case(acopf::cases::CASE39).expect("bundled case parses");
    for w in &parsed.warnings {
        println!("warning: {w}");
    }
    let net = parsed.network;
    println!(
        "case39: {} buses, {} branches, {} generators, base {} MVA",
        net.buses.len(),
        net.branches.len(),
        net.gens.len(),
        net.base_mva
    );

    let violations = validate(&net);
    println!("validation violations: {}", violations.len());

    let json = net.to_canonical_json();
    let back = Network::from_json(&json).expect("round trip");
    assert_eq!(json, back.to_canonical_json(), "serialization is canonical");
    println!("round-trip OK ({} bytes of JSON)", json.len());

    // Branch admittances use the g - jb convention.
    let br = &net.branches[0];
    println!(
        "first branch: z = {} + j{}  ->  y = {:.4} - j{:.4}, b_hat = {:.4}",
        br.r, br.x, br.g, br.b, br.b_hat
    );
}
