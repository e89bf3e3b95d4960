use std::path::PathBuf;

use hk_core::{GridOptions, Json, SolverOptions};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{Failure, Flags};

pub const DEFAULT_TUPLE_BUDGET: usize = 100_000;

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub solver: SolverOptions,
    pub grid: GridOptions,
    pub tuple_budget: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

fn epsilon_schedule(s: &str) -> Result<(f64, f64, f64), Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Failure::input(format!("--epsilon-schedule expects start:end:factor, got \"{s}\""));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    Ok((v[0], v[1], v[2]))
}

impl RunConfig {
    pub fn from_flags(flags: &Flags) -> Result<Self, Failure> {
        let mut solver = SolverOptions { seed: flags.seed, ..SolverOptions::default() };
        if let Some(t) = flags.tolerance {
            if !(t > 0.0) {
                return Err(Failure::input("--tolerance must be positive"));
            }
            solver.tolerance = t;
        }
        if let Some(s) = &flags.epsilon_schedule {
            let (a, b, f) = epsilon_schedule(s)?;
            solver.epsilon_start = a;
            solver.epsilon_end = b;
            solver.epsilon_factor = f;
            solver.epsilon_floor = solver.epsilon_floor.min(b);
        }
        if let Some(n) = flags.max_iter {
            solver.max_iterations = n;
        }
        solver.validate().map_err(|e| Failure::input(e.to_string()))?;
        let mut grid = GridOptions { seed: flags.seed, ..GridOptions::default() };
        if let Some(n) = flags.grid {
            if n == 0 {
                return Err(Failure::input("--grid must be positive"));
            }
            grid.per_axis = Some(n);
        }
        if let Some(p) = flags.pad {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Failure::input("--pad must be finite and nonnegative"));
            }
            grid.pad = p;
        }
        let tuple_budget = flags.tuple_budget.unwrap_or(DEFAULT_TUPLE_BUDGET);
        if tuple_budget == 0 {
            return Err(Failure::input("--tuple-budget must be positive"));
        }
        Ok(RunConfig { solver, grid, tuple_budget, seed: flags.seed, out: flags.out.clone() })
    }

    pub fn to_json(&self) -> Json {
        from_value(&serde_json::to_value(self).expect("config serializes"))
    }

    /// Hash over the command, the configuration and the input bytes.
    pub fn hash(&self, command: &str, extra: &Json, inputs: &[Vec<u8>]) -> String {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(b"\n");
        h.update(self.to_json().render().as_bytes());
        h.update(extra.render().as_bytes());
        for bytes in inputs {
            h.update(digest(bytes).as_bytes());
        }
        hex(&h.finalize())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn from_value(v: &Value) -> Json {
    match v {
        Value::Null => Json::Null,
        Value::Bool(b) => Json::Bool(*b),
        Value::Number(n) => match n.as_i64() {
            Some(i) => Json::Int(i),
            None => Json::Num(n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => Json::str(s.clone()),
        Value::Array(a) => Json::Arr(a.iter().map(from_value).collect()),
        Value::Object(m) => Json::Obj(m.iter().map(|(k, v)| (k.clone(), from_value(v))).collect()),
    }
}
