//! Built-in study networks and the bundled case files.
//!
//! The built-ins carry the parameters that appear in the study material:
//! `twobus` is the single line with admittance `1 - j4` feeding a unit load,
//! `threebus-mesh` the triangle with admittances `1-j4, 1-j4, 0.1-j0.4`, and
//! `threebus-tree` a two-line feeder exhibiting a pair of nearby solutions.
//! The 9-bus and 39-bus cases ship as ordinary case files and are also
//! embedded so the binary works from any directory.

use crate::casefile::{parse_case, Branch, Bus, BusKind, Gen, Network, ParseError};
use crate::model::ReducedNetwork;

pub const CASE9: &str = include_str!("../data/case9.m");
pub const CASE39: &str = include_str!("../data/case39.m");

/// Names accepted wherever a case path is expected.
pub const BUILTIN_NAMES: &[&str] = &["twobus", "threebus-mesh", "threebus-tree", "case9", "case39"];

fn bus(id: u32, kind: BusKind, pd: f64, qd: f64, v_min: f64, v_max: f64) -> Bus {
    Bus { id, kind, pd, qd, v_min, v_max }
}

/// Admittance `1 - j4` corresponds to the impedance `(1 + j4)/17`.
pub fn twobus() -> Network {
    Network {
        base_mva: 100.0,
        buses: vec![
            bus(1, BusKind::Reference, 0.0, 0.0, 0.9, 1.1),
            bus(2, BusKind::Load, 1.0, 0.0, 0.9, 1.1),
        ],
        branches: vec![Branch::new(0, 1, 1.0 / 17.0, 4.0 / 17.0, 0.0, 0.0).unwrap()],
        gens: vec![Gen {
            bus: 0,
            p_min: 0.0,
            p_max: 10.0,
            q_min: -10.0,
            q_max: 10.0,
            cost: vec![0.0, 1.0],
        }],
        ref_bus: 0,
    }
}

/// Symmetric load used for the bundled mesh triangle; inside the regime
/// where the penalized landscape has four stationary points.
pub const MESH_LOAD: f64 = 1.875;

pub fn threebus_mesh() -> Network {
    threebus_mesh_with_load(MESH_LOAD)
}

pub fn threebus_mesh_with_load(load: f64) -> Network {
    // The capacitive load-bus support keeps the full problem feasible inside
    // the voltage box; the fixed-voltage reduction ignores reactive power.
    Network {
        base_mva: 100.0,
        buses: vec![
            bus(1, BusKind::Reference, 0.0, 0.0, 0.9, 1.1),
            bus(2, BusKind::Load, load, -0.5, 0.9, 1.1),
            bus(3, BusKind::Load, load, -0.5, 0.9, 1.1),
        ],
        branches: vec![
            Branch::new(0, 1, 1.0 / 17.0, 4.0 / 17.0, 0.0, 0.0).unwrap(),
            Branch::new(0, 2, 1.0 / 17.0, 4.0 / 17.0, 0.0, 0.0).unwrap(),
            Branch::new(1, 2, 0.1 / 0.17, 0.4 / 0.17, 0.0, 0.0).unwrap(),
        ],
        gens: vec![Gen {
            bus: 0,
            p_min: 0.0,
            p_max: 20.0,
            q_min: -20.0,
            q_max: 20.0,
            cost: vec![0.0, 1.0],
        }],
        ref_bus: 0,
    }
}

/// A two-line feeder (reference - bus 2 - bus 3) with distributed generation
/// at bus 2 (negative active load) and capacitive support at bus 3, tight
/// voltage bounds, and a no-load cost term. Two local solutions exist with a
/// cost ratio of about 1.0021; the lower-voltage one costs more, and the
/// iterative escape reaches the better one in a single outer iteration.
pub fn threebus_tree() -> Network {
    Network {
        base_mva: 100.0,
        buses: vec![
            bus(1, BusKind::Reference, 0.0, 0.0, 0.95, 1.05),
            bus(2, BusKind::Load, -1.552, 1.0426, 0.95, 1.05),
            bus(3, BusKind::Load, 1.4756, -2.0444, 0.95, 1.05),
        ],
        branches: vec![
            Branch::new(0, 1, 0.1172, 0.4531, 0.0, 0.0).unwrap(),
            Branch::new(1, 2, 0.0955, 0.1099, 0.0, 0.0).unwrap(),
        ],
        gens: vec![Gen {
            bus: 0,
            p_min: 0.0,
            p_max: 10.0,
            q_min: -10.0,
            q_max: 10.0,
            cost: vec![34.0, 1.0],
        }],
        ref_bus: 0,
    }
}

/// Fixed-voltage reduction of the bundled mesh triangle.
pub fn threebus_mesh_reduced(load: f64) -> ReducedNetwork {
    ReducedNetwork::from_network(&threebus_mesh_with_load(load)).expect("single ref generator")
}

/// Resolves a case argument: a built-in name first, otherwise a path.
pub fn load_case(name_or_path: &str) -> Result<(Network, Vec<String>), ParseError> {
    match name_or_path {
        "twobus" => Ok((twobus(), Vec::new())),
        "threebus-mesh" => Ok((threebus_mesh(), Vec::new())),
        "threebus-tree" => Ok((threebus_tree(), Vec::new())),
        "case9" => {
            let p = parse_case(CASE9)?;
            Ok((p.network, p.warnings))
        }
        "case39" => {
            let p = parse_case(CASE39)?;
            Ok((p.network, p.warnings))
        }
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| ParseError::Syntax {
                line: 0,
                msg: format!("cannot read `{path}`: {e}"),
            })?;
            let p = parse_case(&text)?;
            Ok((p.network, p.warnings))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casefile::validate;

    #[test]
    fn builtins_validate() {
        for name in ["twobus", "threebus-mesh", "threebus-tree"] {
            let (net, _) = load_case(name).unwrap();
            assert!(validate(&net).is_empty(), "{name} failed validation");
        }
    }

    #[test]
    fn bundled_case39_dimensions() {
        let (net, _) = load_case("case39").unwrap();
        assert_eq!(net.buses.len(), 39);
        assert_eq!(net.branches.len(), 46);
        assert_eq!(net.gens.len(), 10);
        assert!(validate(&net).is_empty());
    }

    #[test]
    fn bundled_case9_dimensions() {
        let (net, _) = load_case("case9").unwrap();
        assert_eq!(net.buses.len(), 9);
        assert_eq!(net.branches.len(), 9);
        assert_eq!(net.gens.len(), 3);
        assert!(validate(&net).is_empty());
    }

    #[test]
    fn missing_file_is_an_input_error() {
        assert!(load_case("definitely-missing.m").is_err());
    }
}
