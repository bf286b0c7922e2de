//! MATPOWER case-file parsing and bus-admittance assembly.
//!
//! Reads the `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and `mpc.branch` tables of
//! a version-2 case file; any other `mpc.*` section is skipped and recorded
//! on the parsed case so callers can surface it. The admittance matrix
//! follows the standard branch model: series admittance `ys = 1/(r + jx)`,
//! total line-charging susceptance `b`, off-nominal tap ratio `τ` and phase
//! shift `θ` on the *from* side,
//!
//! ```text
//! Y_ff = (ys + j·b/2) / τ²      Y_ft = −ys / (τ·e^{−jθ})
//! Y_tf = −ys / (τ·e^{+jθ})      Y_tt =  ys + j·b/2
//! ```
//!
//! with bus shunts `(Gs + j·Bs)/baseMVA` added on the diagonal. Oscillator
//! coupling strengths are read off the assembled off-diagonal entries,
//! either as moduli or as susceptances.

use std::collections::HashMap;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// One `mpc.bus` row (leading columns; the rest are power-flow settings the
/// oscillator models do not use).
#[derive(Debug, Clone)]
pub struct BusRecord {
    pub id: usize,
    /// 1 = load, 2 = generator, 3 = reference.
    pub bus_type: u8,
    /// Active / reactive demand, MW / MVAr.
    pub pd: f64,
    pub qd: f64,
    /// Shunt conductance / susceptance, MW / MVAr at 1 p.u. voltage.
    pub gs: f64,
    pub bs: f64,
}

/// One `mpc.gen` row.
#[derive(Debug, Clone)]
pub struct GenRecord {
    pub bus: usize,
    /// Active power setpoint, MW.
    pub pg: f64,
    pub in_service: bool,
}

/// One `mpc.branch` row.
#[derive(Debug, Clone)]
pub struct BranchRecord {
    pub from: usize,
    pub to: usize,
    /// Series impedance and total charging susceptance, p.u.
    pub r: f64,
    pub x: f64,
    pub b: f64,
    /// Off-nominal tap ratio (0 means none, i.e. 1).
    pub tap: f64,
    /// Phase shift, degrees.
    pub shift_deg: f64,
    pub in_service: bool,
}

/// Parsed case file.
#[derive(Debug, Clone)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub gens: Vec<GenRecord>,
    pub branches: Vec<BranchRecord>,
    /// `mpc.*` sections present in the file but not consumed.
    pub ignored_sections: Vec<String>,
}

/// Dense complex admittance matrix.
#[derive(Debug, Clone)]
pub struct YBus {
    n: usize,
    data: Vec<Complex64>,
}

impl YBus {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    fn add(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] += v;
    }
}

/// How branch admittances become oscillator coupling strengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingMode {
    /// `K_ij = |Y_ij|`.
    Magnitude,
    /// `K_ij = Im(Y_ij)`.
    Susceptance,
}

impl GridCase {
    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    /// Map external bus ids to dense 0-based indices, in file order.
    pub fn bus_index(&self) -> HashMap<usize, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    /// Dense indices of in-service generator buses, ascending, deduplicated.
    pub fn generator_buses(&self) -> Result<Vec<usize>> {
        let index = self.bus_index();
        let mut out = Vec::new();
        for g in self.gens.iter().filter(|g| g.in_service) {
            let &i = index
                .get(&g.bus)
                .ok_or_else(|| Error::invalid(format!("generator at unknown bus {}", g.bus)))?;
            if !out.contains(&i) {
                out.push(i);
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Assemble the bus admittance matrix over in-service branches.
    pub fn ybus(&self) -> Result<YBus> {
        let n = self.n_bus();
        let index = self.bus_index();
        let mut y = YBus {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        };
        for br in self.branches.iter().filter(|b| b.in_service) {
            let (&f, &t) = match (index.get(&br.from), index.get(&br.to)) {
                (Some(f), Some(t)) => (f, t),
                _ => {
                    return Err(Error::invalid(format!(
                        "branch {}–{} references an unknown bus",
                        br.from, br.to
                    )))
                }
            };
            let z = Complex64::new(br.r, br.x);
            if z.norm() == 0.0 {
                return Err(Error::invalid(format!(
                    "branch {}–{} has zero impedance",
                    br.from, br.to
                )));
            }
            let ys = z.inv();
            let charge = Complex64::new(0.0, 0.5 * br.b);
            let tap = if br.tap == 0.0 { 1.0 } else { br.tap };
            let shift = Complex64::from_polar(tap, br.shift_deg.to_radians());
            y.add(f, f, (ys + charge) / (tap * tap));
            y.add(t, t, ys + charge);
            y.add(f, t, -ys / shift.conj());
            y.add(t, f, -ys / shift);
        }
        for (i, bus) in self.buses.iter().enumerate() {
            y.add(i, i, Complex64::new(bus.gs, bus.bs) / self.base_mva);
        }
        Ok(y)
    }

    /// Coupling-strength matrix from the assembled admittances
    /// (zero diagonal).
    pub fn coupling(&self, mode: CouplingMode) -> Result<Matrix> {
        let y = self.ybus()?;
        let n = y.n();
        Ok(Matrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                match mode {
                    CouplingMode::Magnitude => y.get(i, j).norm(),
                    CouplingMode::Susceptance => y.get(i, j).im,
                }
            }
        }))
    }
}

/// Parse a MATPOWER case from text.
pub fn parse_case(text: &str) -> Result<GridCase> {
    let mut base_mva = None;
    let mut tables: HashMap<String, Vec<Vec<f64>>> = HashMap::new();
    let mut ignored = Vec::new();
    // Name of the table currently being read, or of an unknown section
    // being skipped until its closing bracket.
    let mut open: Option<(String, bool)> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw.find('%') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }

        if let Some((name, known)) = open.clone() {
            let (body, closes) = match line.find(']') {
                Some(p) => (&line[..p], true),
                None => (line, false),
            };
            if known {
                parse_rows(body, lineno, tables.get_mut(&name).expect("open table"))?;
            }
            if closes {
                open = None;
            }
            continue;
        }

        if let Some(rest) = line.strip_prefix("mpc.") {
            let (name, after) = match rest.find('=') {
                Some(p) => (rest[..p].trim().to_string(), rest[p + 1..].trim()),
                None => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected assignment, got `{line}`"),
                    })
                }
            };
            match name.as_str() {
                "baseMVA" => {
                    let v = after.trim_end_matches(';').trim();
                    base_mva = Some(v.parse::<f64>().map_err(|_| Error::Parse {
                        line: lineno,
                        msg: format!("invalid baseMVA `{v}`"),
                    })?);
                }
                "version" => {}
                "bus" | "gen" | "branch" => {
                    let body = after.strip_prefix('[').ok_or_else(|| Error::Parse {
                        line: lineno,
                        msg: format!("expected `[` to open mpc.{name}"),
                    })?;
                    let table = tables.entry(name.clone()).or_default();
                    let (body, closes) = match body.find(']') {
                        Some(p) => (&body[..p], true),
                        None => (body, false),
                    };
                    parse_rows(body, lineno, table)?;
                    if !closes {
                        open = Some((name, true));
                    }
                }
                _ => {
                    ignored.push(name.clone());
                    // Skip a bracketed section's body; single-line
                    // assignments are already consumed.
                    if after.contains('[') && !after.contains(']') {
                        open = Some((name, false));
                    }
                }
            }
        } else if line.starts_with("function") {
            // Case files open with `function mpc = <name>`.
        } else {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("unexpected content `{line}`"),
            });
        }
    }

    let base_mva = base_mva.ok_or_else(|| Error::Parse {
        line: 0,
        msg: "missing mpc.baseMVA".into(),
    })?;
    if !(base_mva > 0.0) {
        return Err(Error::invalid(format!("baseMVA {base_mva}")));
    }
    let bus_rows = tables.remove("bus").ok_or_else(|| Error::Parse {
        line: 0,
        msg: "missing mpc.bus table".into(),
    })?;
    let branch_rows = tables.remove("branch").ok_or_else(|| Error::Parse {
        line: 0,
        msg: "missing mpc.branch table".into(),
    })?;
    let gen_rows = tables.remove("gen").unwrap_or_default();

    let mut buses = Vec::with_capacity(bus_rows.len());
    for row in &bus_rows {
        if row.len() < 6 {
            return Err(Error::invalid(format!(
                "bus row needs ≥ 6 columns, got {}",
                row.len()
            )));
        }
        buses.push(BusRecord {
            id: row[0] as usize,
            bus_type: row[1] as u8,
            pd: row[2],
            qd: row[3],
            gs: row[4],
            bs: row[5],
        });
    }
    let mut seen = HashMap::new();
    for b in &buses {
        if seen.insert(b.id, ()).is_some() {
            return Err(Error::invalid(format!("duplicate bus id {}", b.id)));
        }
    }

    let mut gens = Vec::with_capacity(gen_rows.len());
    for row in &gen_rows {
        if row.len() < 8 {
            return Err(Error::invalid(format!(
                "gen row needs ≥ 8 columns, got {}",
                row.len()
            )));
        }
        gens.push(GenRecord {
            bus: row[0] as usize,
            pg: row[1],
            in_service: row[7] > 0.0,
        });
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for row in &branch_rows {
        if row.len() < 11 {
            return Err(Error::invalid(format!(
                "branch row needs ≥ 11 columns, got {}",
                row.len()
            )));
        }
        branches.push(BranchRecord {
            from: row[0] as usize,
            to: row[1] as usize,
            r: row[2],
            x: row[3],
            b: row[4],
            tap: row[8],
            shift_deg: row[9],
            in_service: row[10] > 0.0,
        });
    }

    let case = GridCase {
        base_mva,
        buses,
        gens,
        branches,
        ignored_sections: ignored,
    };
    let index = case.bus_index();
    for br in &case.branches {
        if !index.contains_key(&br.from) || !index.contains_key(&br.to) {
            return Err(Error::invalid(format!(
                "branch {}–{} references an unknown bus",
                br.from, br.to
            )));
        }
    }
    Ok(case)
}

/// Parse semicolon-terminated numeric rows from one line of a table body.
fn parse_rows(body: &str, lineno: usize, table: &mut Vec<Vec<f64>>) -> Result<()> {
    for chunk in body.split(';') {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in chunk.split_whitespace() {
            row.push(tok.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid number `{tok}`"),
            })?);
        }
        table.push(row);
    }
    Ok(())
}

/// Load a case from disk.
pub fn load_case(path: impl AsRef<Path>) -> Result<GridCase> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Parse {
        line: 0,
        msg: format!("{}: {e}", path.as_ref().display()),
    })?;
    parse_case(&text)
}
