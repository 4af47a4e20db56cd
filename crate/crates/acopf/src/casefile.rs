//! Case-file parsing, validation and canonical serialization.
//!
//! The input format is the widely used steady-state case text with
//! `baseMVA`, `bus`, `gen`, `branch` and `gencost` tables (MATPOWER-compatible
//! column order). All quantities are normalized to per-unit on the system MVA
//! base during parsing. Columns beyond those the model needs are ignored with
//! a warning, as are transformer taps and phase shifts (normalized to 1∠0).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sign convention: a branch with series impedance `r + jx` has series
/// admittance `g - jb` with `g = r/(r²+x²)` and `b = x/(r²+x²)`, so `b > 0`
/// for inductive lines. `b_hat = b - 0.5·b_c` folds in the line-charging
/// susceptance `b_c`.
pub fn branch_admittance(r: f64, x: f64, b_c: f64) -> Result<(f64, f64, f64), ParseError> {
    let z2 = r * r + x * x;
    if z2 == 0.0 {
        return Err(ParseError::ZeroImpedance);
    }
    let g = r / z2;
    let b = x / z2;
    Ok((g, b, b - 0.5 * b_c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    /// Load bus (PQ).
    Load,
    /// Generator bus (PV).
    Generator,
    /// Reference (slack) bus; its angle is fixed to 0 rad downstream.
    Reference,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bus {
    /// External integer id from the case file.
    pub id: u32,
    pub kind: BusKind,
    /// Active load, p.u.
    pub pd: f64,
    /// Reactive load, p.u.
    pub qd: f64,
    /// Voltage magnitude bounds, p.u.
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    /// Internal bus indices (positions in `Network::buses`).
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series resistance and reactance, p.u.
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, p.u.
    pub b_c: f64,
    /// Apparent-power flow limit, p.u.; 0 means unlimited.
    pub s_max: f64,
    /// Derived series conductance/susceptance in the `g - jb` convention.
    pub g: f64,
    pub b: f64,
    /// `b - 0.5·b_c`.
    pub b_hat: f64,
}

impl Branch {
    pub fn new(
        from_bus: usize,
        to_bus: usize,
        r: f64,
        x: f64,
        b_c: f64,
        s_max: f64,
    ) -> Result<Self, ParseError> {
        let (g, b, b_hat) = branch_admittance(r, x, b_c)?;
        Ok(Branch { from_bus, to_bus, r, x, b_c, s_max, g, b, b_hat })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Gen {
    /// Internal bus index.
    pub bus: usize,
    /// Active output bounds, p.u.
    pub p_min: f64,
    pub p_max: f64,
    /// Reactive output bounds, p.u.
    pub q_min: f64,
    pub q_max: f64,
    /// Polynomial cost coefficients on per-unit active output,
    /// lowest degree first.
    pub cost: Vec<f64>,
}

impl Gen {
    /// Evaluates the cost polynomial at `pg` (Horner form).
    pub fn cost_at(&self, pg: f64) -> f64 {
        self.cost.iter().rev().fold(0.0, |acc, &c| acc * pg + c)
    }

    /// Marginal cost dc/dPg at `pg`.
    pub fn marginal_cost_at(&self, pg: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.cost.iter().enumerate().skip(1).rev() {
            acc = acc * pg + k as f64 * c;
        }
        acc
    }

    /// Second derivative of the cost polynomial at `pg`.
    pub fn cost_curvature_at(&self, pg: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.cost.iter().enumerate().skip(2).rev() {
            acc = acc * pg + (k * (k - 1)) as f64 * c;
        }
        acc
    }
}

/// A parsed, per-unit network. The ground truth for the optimization model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    /// Power base, MVA.
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub gens: Vec<Gen>,
    /// Index of the reference bus in `buses`.
    pub ref_bus: usize,
}

impl Network {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Internal index for an external bus id.
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Canonical JSON serialization with stable key order.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Network, ParseError> {
        serde_json::from_str(text).map_err(|e| ParseError::Json(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing required table `{0}`")]
    MissingTable(&'static str),
    #[error("duplicate bus id {0}")]
    DuplicateBusId(u32),
    #[error("unknown bus {0}")]
    UnknownBus(u32),
    #[error("zero-impedance branch")]
    ZeroImpedance,
    #[error("no reference bus in bus table")]
    NoReferenceBus,
    #[error("unsupported piecewise-linear cost model for generator {0}")]
    PiecewiseCost(usize),
    #[error("gencost row count {got} does not match generator count {want}")]
    GencostCount { got: usize, want: usize },
    #[error("invalid JSON network: {0}")]
    Json(String),
}

/// Result of `parse_case`: the network plus non-fatal normalization warnings.
#[derive(Debug)]
pub struct Parsed {
    pub network: Network,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Bus,
    Gen,
    Branch,
    Gencost,
}

/// Parses MATPOWER-style case text into a per-unit [`Network`].
pub fn parse_case(text: &str) -> Result<Parsed, ParseError> {
    let mut base_mva: Option<f64> = None;
    let mut bus_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut gen_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut branch_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut gencost_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();

    let mut section = Section::None;
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw.find('%') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() || line.starts_with("function") || line.contains("mpc.version") {
            continue;
        }
        if let Some(eq) = line.find('=') {
            let lhs = line[..eq].trim();
            let rhs = line[eq + 1..].trim();
            match lhs {
                "mpc.baseMVA" => {
                    let v = rhs.trim_end_matches(';').trim();
                    base_mva = Some(v.parse().map_err(|_| ParseError::Syntax {
                        line: lineno,
                        msg: format!("invalid baseMVA value `{v}`"),
                    })?);
                    continue;
                }
                "mpc.bus" => {
                    section = Section::Bus;
                    continue;
                }
                "mpc.gen" => {
                    section = Section::Gen;
                    continue;
                }
                "mpc.branch" => {
                    section = Section::Branch;
                    continue;
                }
                "mpc.gencost" => {
                    section = Section::Gencost;
                    continue;
                }
                _ => {
                    // Other assignments (bus names, areas, ...) are ignored.
                    if lhs.starts_with("mpc.") {
                        warnings.push(format!("line {lineno}: ignored table `{lhs}`"));
                        section = Section::None;
                    }
                    continue;
                }
            }
        }
        if line.starts_with("];") || line == "]" {
            section = Section::None;
            continue;
        }
        if section == Section::None {
            continue;
        }
        let row = line.trim_end_matches(';').trim();
        if row.is_empty() {
            continue;
        }
        let mut vals = Vec::new();
        for tok in row.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| ParseError::Syntax {
                line: lineno,
                msg: format!("invalid number `{tok}`"),
            })?;
            vals.push(v);
        }
        match section {
            Section::Bus => bus_rows.push((lineno, vals)),
            Section::Gen => gen_rows.push((lineno, vals)),
            Section::Branch => branch_rows.push((lineno, vals)),
            Section::Gencost => gencost_rows.push((lineno, vals)),
            Section::None => unreachable!(),
        }
    }

    let base = base_mva.ok_or(ParseError::MissingTable("baseMVA"))?;
    if bus_rows.is_empty() {
        return Err(ParseError::MissingTable("bus"));
    }
    if gen_rows.is_empty() {
        return Err(ParseError::MissingTable("gen"));
    }
    if branch_rows.is_empty() {
        return Err(ParseError::MissingTable("branch"));
    }
    if gencost_rows.is_empty() {
        return Err(ParseError::MissingTable("gencost"));
    }

    let need = |line: usize, row: &[f64], n: usize, what: &str| -> Result<(), ParseError> {
        if row.len() < n {
            Err(ParseError::Syntax {
                line,
                msg: format!("{what} row needs at least {n} columns, got {}", row.len()),
            })
        } else {
            Ok(())
        }
    };

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut ref_bus = None;
    for (line, row) in &bus_rows {
        need(*line, row, 13, "bus")?;
        let id = row[0] as u32;
        if buses.iter().any(|b: &Bus| b.id == id) {
            return Err(ParseError::DuplicateBusId(id));
        }
        let kind = match row[1] as i64 {
            3 => BusKind::Reference,
            2 => BusKind::Generator,
            _ => BusKind::Load,
        };
        if kind == BusKind::Reference && ref_bus.is_none() {
            ref_bus = Some(buses.len());
        }
        if row[4] != 0.0 || row[5] != 0.0 {
            warnings.push(format!(
                "line {line}: bus {id} shunt (Gs, Bs) ignored; the model has no bus shunts"
            ));
        }
        buses.push(Bus {
            id,
            kind,
            pd: row[2] / base,
            qd: row[3] / base,
            v_min: row[12],
            v_max: row[11],
        });
    }
    let ref_bus = ref_bus.ok_or(ParseError::NoReferenceBus)?;

    let lookup = |id: f64| -> Result<usize, ParseError> {
        let id = id as u32;
        buses
            .iter()
            .position(|b| b.id == id)
            .ok_or(ParseError::UnknownBus(id))
    };

    let mut branches = Vec::with_capacity(branch_rows.len());
    for (line, row) in &branch_rows {
        need(*line, row, 11, "branch")?;
        if row[10] == 0.0 {
            warnings.push(format!("line {line}: out-of-service branch dropped"));
            continue;
        }
        let from_bus = lookup(row[0])?;
        let to_bus = lookup(row[1])?;
        if row[8] != 0.0 && row[8] != 1.0 {
            warnings.push(format!(
                "line {line}: transformer tap ratio {} normalized to 1",
                row[8]
            ));
        }
        if row.len() > 9 && row[9] != 0.0 {
            warnings.push(format!(
                "line {line}: phase shift {}° normalized to 0",
                row[9]
            ));
        }
        branches.push(
            Branch::new(from_bus, to_bus, row[2], row[3], row[4], row[5] / base).map_err(
                |e| match e {
                    ParseError::ZeroImpedance => ParseError::Syntax {
                        line: *line,
                        msg: "zero-impedance branch".into(),
                    },
                    other => other,
                },
            )?,
        );
    }

    let mut gen_buses = Vec::new();
    let mut kept_gencost_rows = Vec::new();
    for (k, (line, row)) in gen_rows.iter().enumerate() {
        need(*line, row, 10, "gen")?;
        if row[7] <= 0.0 {
            warnings.push(format!("line {line}: out-of-service generator dropped"));
            continue;
        }
        gen_buses.push((*line, lookup(row[0])?, row.clone()));
        kept_gencost_rows.push(k);
    }
    if gencost_rows.len() != gen_rows.len() {
        return Err(ParseError::GencostCount {
            got: gencost_rows.len(),
            want: gen_rows.len(),
        });
    }

    let mut gens = Vec::with_capacity(gen_buses.len());
    for (slot, (line, bus, row)) in gen_buses.iter().enumerate() {
        let (cost_line, cost_row) = &gencost_rows[kept_gencost_rows[slot]];
        need(*cost_line, cost_row, 4, "gencost")?;
        if cost_row[0] as i64 != 2 {
            return Err(ParseError::PiecewiseCost(slot));
        }
        let n = cost_row[3] as usize;
        need(*cost_line, cost_row, 4 + n, "gencost")?;
        // Highest degree first in the file; store lowest first, rebased so the
        // polynomial takes per-unit output: c_pu[k] = c_mw[k] * base^k.
        let mut cost: Vec<f64> = cost_row[4..4 + n].iter().rev().copied().collect();
        for (k, c) in cost.iter_mut().enumerate() {
            *c *= base.powi(k as i32);
        }
        let _ = line;
        gens.push(Gen {
            bus: *bus,
            p_min: row[9] / base,
            p_max: row[8] / base,
            q_min: row[4] / base,
            q_max: row[3] / base,
            cost,
        });
    }

    Ok(Parsed {
        network: Network { base_mva: base, buses, branches, gens, ref_bus },
        warnings,
    })
}

/// Checks every structural invariant; returns one description per violation.
/// Violations are data, not failures.
pub fn validate(net: &Network) -> Vec<String> {
    let mut out = Vec::new();
    let n = net.buses.len();

    let refs = net
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Reference)
        .count();
    if refs == 0 {
        out.push("no reference bus".to_string());
    } else if refs > 1 {
        out.push("multiple reference buses".to_string());
    }
    if net.ref_bus >= n {
        out.push(format!("ref_bus index {} out of range", net.ref_bus));
    }

    for (i, b) in net.buses.iter().enumerate() {
        if !(b.v_min > 0.0 && b.v_min <= b.v_max) {
            out.push(format!("bus {}: v_min > v_max or nonpositive bound", b.id));
        }
        if !b.pd.is_finite() || !b.qd.is_finite() {
            out.push(format!("bus {}: non-finite load", b.id));
        }
        let _ = i;
    }

    for (k, br) in net.branches.iter().enumerate() {
        if br.from_bus >= n || br.to_bus >= n {
            out.push(format!("branch {k}: endpoint out of range"));
            continue;
        }
        if br.r * br.r + br.x * br.x == 0.0 {
            out.push(format!("branch {k}: zero impedance"));
        }
        if (br.b_hat - (br.b - 0.5 * br.b_c)).abs() != 0.0 {
            out.push(format!("branch {k}: b_hat != b - 0.5*b_c"));
        }
    }

    // Connectivity of the branch graph (all stored branches are in service).
    if n > 0 && !net.branches.is_empty() {
        let mut seen = vec![false; n];
        let mut stack = vec![net.ref_bus.min(n - 1)];
        seen[stack[0]] = true;
        while let Some(i) = stack.pop() {
            for br in &net.branches {
                for (a, b) in [(br.from_bus, br.to_bus), (br.to_bus, br.from_bus)] {
                    if a == i && a < n && b < n && !seen[b] {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            out.push("branch graph is not connected".to_string());
        }
    }

    for (k, g) in net.gens.iter().enumerate() {
        if g.bus >= n {
            out.push(format!("gen {k}: references missing bus"));
            continue;
        }
        if g.p_min > g.p_max {
            out.push(format!("gen {k}: p_min > p_max"));
        }
        if g.q_min > g.q_max {
            out.push(format!("gen {k}: q_min > q_max"));
        }
        // Nondecreasing cost on [p_min, p_max], checked by sampling.
        let samples = 33;
        let mut prev = g.cost_at(g.p_min);
        let mut ok = true;
        for s in 1..=samples {
            let p = g.p_min + (g.p_max - g.p_min) * s as f64 / samples as f64;
            let c = g.cost_at(p);
            if c < prev - 1e-9 * (1.0 + prev.abs()) {
                ok = false;
                break;
            }
            prev = c;
        }
        if !ok {
            out.push(format!("gen {k}: cost not nondecreasing on [p_min, p_max]"));
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_BUS_CASE: &str = "\
function mpc = twobus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t345\t1\t1.1\t0.9;
\t2\t1\t100\t0\t0\t0\t1\t1\t0\t345\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t1000\t-1000\t1\t100\t1\t1000\t0;
];
mpc.branch = [
\t1\t2\t0.058823529411764705\t0.23529411764705882\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
mpc.gencost = [
\t2\t0\t0\t2\t0.01\t0;
];
";

    #[test]
    fn parses_minimal_two_bus_case() {
        let parsed = parse_case(TWO_BUS_CASE).unwrap();
        let net = parsed.network;
        assert_eq!(net.buses.len(), 2);
        assert_eq!(net.branches.len(), 1);
        assert_eq!(net.gens.len(), 1);
        assert_eq!(net.ref_bus, 0);
        // Load converted to per-unit.
        assert!((net.buses[1].pd - 1.0).abs() < 1e-15);
        // z = (1 + j4)/17 gives y = 1 - j4.
        let br = &net.branches[0];
        assert!((br.g - 1.0).abs() < 1e-12);
        assert!((br.b - 4.0).abs() < 1e-12);
        // MW-based linear cost 0.01 $/MW becomes 1 $/p.u.
        assert!((net.gens[0].cost[1] - 1.0).abs() < 1e-12);
        assert!(validate(&net).is_empty());
    }

    #[test]
    fn admittance_matches_hand_inversion() {
        // Invert z = (g + jb)/(g² + b²) by hand: r = 1/17, x = 4/17 maps to
        // g = 1, b = 4.
        let (g, b, b_hat) = branch_admittance(1.0 / 17.0, 4.0 / 17.0, 0.0).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
        assert!((b - 4.0).abs() < 1e-12);
        assert!((b_hat - 4.0).abs() < 1e-12);

        let (g, b, b_hat) = branch_admittance(0.0, 1.0, 0.0).unwrap();
        assert_eq!((g, b, b_hat), (0.0, 1.0, 1.0));

        let (_, b, b_hat) = branch_admittance(0.0, 1.0, 0.2).unwrap();
        assert!((b_hat - (b - 0.1)).abs() < 1e-15);

        assert!(matches!(
            branch_admittance(0.0, 0.0, 0.0),
            Err(ParseError::ZeroImpedance)
        ));
    }

    #[test]
    fn impedance_round_trip() {
        for (r, x) in [(0.01, 0.1), (0.0, 0.25), (1.0 / 17.0, 4.0 / 17.0), (0.3, 0.04)] {
            let (g, b, _) = branch_admittance(r, x, 0.0).unwrap();
            let y2 = g * g + b * b;
            let (rr, xx) = (g / y2, b / y2);
            assert!((rr - r).abs() <= 1e-12 * (1.0 + r.abs()));
            assert!((xx - x).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn unknown_bus_is_an_error() {
        let text = TWO_BUS_CASE.replace("\t1\t2\t0.0588", "\t1\t99\t0.0588");
        match parse_case(&text) {
            Err(ParseError::UnknownBus(99)) => {}
            other => panic!("expected unknown-bus error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_carries_line_number() {
        let text = TWO_BUS_CASE.replace("mpc.baseMVA = 100;", "mpc.baseMVA = oops;");
        match parse_case(&text) {
            Err(ParseError::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn validate_reports_bad_bounds_and_double_reference() {
        let mut net = parse_case(TWO_BUS_CASE).unwrap().network;
        net.buses[1].v_min = 1.1;
        net.buses[1].v_max = 1.05;
        let report = validate(&net);
        assert!(report.iter().any(|v| v.contains("v_min > v_max")));

        let mut net2 = parse_case(TWO_BUS_CASE).unwrap().network;
        net2.buses[1].kind = BusKind::Reference;
        let report = validate(&net2);
        assert!(report.iter().any(|v| v.contains("multiple reference buses")));
    }

    #[test]
    fn serialization_round_trips_field_for_field() {
        let net = parse_case(TWO_BUS_CASE).unwrap().network;
        let json = net.to_canonical_json();
        let back = Network::from_json(&json).unwrap();
        assert_eq!(json, back.to_canonical_json());
        assert_eq!(net.buses.len(), back.buses.len());
        assert_eq!(net.branches[0].b_hat, back.branches[0].b_hat);
    }

    #[test]
    fn tap_ratio_normalized_with_warning() {
        let text = TWO_BUS_CASE.replace(
            "\t0\t0\t0\t0\t0\t1\t-360\t360;",
            "\t0\t0\t0\t1.025\t0\t1\t-360\t360;",
        );
        let parsed = parse_case(&text).unwrap();
        assert!(parsed.warnings.iter().any(|w| w.contains("tap ratio")));
    }
}

#[cfg(test)]
pub(crate) use tests::TWO_BUS_CASE;
