//! Versioned text dump of model tables. Floats use the shortest
//! round-tripping decimal form, so decode(encode(m)) is bit-exact.

use std::fmt::Write as _;

use super::{Ensemble, ModelDims, StochasticMatrix, WorldModel};
use crate::dist::Categorical;
use crate::{Error, Result};

const MODEL_MAGIC: &str = "pepper-worldmodel v1";
const ENSEMBLE_MAGIC: &str = "pepper-ensemble v1";

/// Upper bound on the number of table entries a dump may declare.
const MAX_ENTRIES: usize = 1 << 24;
const MAX_MEMBERS: usize = 64;

fn write_row(out: &mut String, row: &[f64]) {
    for (i, x) in row.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:?}");
    }
    out.push('\n');
}

fn write_matrix(out: &mut String, label: &str, m: &StochasticMatrix) {
    out.push_str(label);
    out.push('\n');
    for r in 0..m.rows() {
        write_row(out, m.row(r));
    }
}

fn write_model(out: &mut String, model: &WorldModel) {
    let d = model.dims();
    let _ = writeln!(out, "{MODEL_MAGIC}");
    let _ = writeln!(out, "dims {} {} {} {}", d.n_states, d.n_actions, d.n_obs, d.n_rewards);
    out.push_str("init\n");
    write_row(out, model.init().probs());
    for a in 0..d.n_actions {
        write_matrix(out, &format!("trans {a}"), model.trans(a));
    }
    write_matrix(out, "obs", model.obs());
    write_matrix(out, "rew", model.rew());
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        for (n, line) in self.inner.by_ref() {
            self.last = n + 1;
            let line = line.trim();
            if !line.is_empty() {
                return Ok(line);
            }
        }
        Err(Error::parse(self.last + 1, "unexpected end of input"))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.last, msg)
    }

    fn expect(&mut self, want: &str) -> Result<()> {
        let line = self.next()?;
        if line != want {
            return Err(self.err(format!("expected `{want}`")));
        }
        Ok(())
    }

    fn row(&mut self, len: usize) -> Result<Vec<f64>> {
        let line = self.next()?;
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(format!("bad number {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != len {
            return Err(self.err(format!("expected {len} values, found {}", row.len())));
        }
        Ok(row)
    }

    fn matrix(&mut self, label: &str, rows: usize, cols: usize) -> Result<StochasticMatrix> {
        self.expect(label)?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.row(cols)?);
        }
        StochasticMatrix::new(rows, cols, data).map_err(|e| self.err(e.to_string()))
    }

    fn count(&mut self, key: &str, n: usize) -> Result<Vec<usize>> {
        let line = self.next()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        let vals = parts
            .map(|t| t.parse::<usize>().map_err(|_| self.err(format!("bad count {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != n {
            return Err(self.err(format!("`{key}` takes {n} values")));
        }
        Ok(vals)
    }

    fn model(&mut self) -> Result<WorldModel> {
        self.expect(MODEL_MAGIC)?;
        let v = self.count("dims", 4)?;
        let d = ModelDims {
            n_states: v[0],
            n_actions: v[1],
            n_obs: v[2],
            n_rewards: v[3],
        };
        if [d.n_states, d.n_actions, d.n_obs, d.n_rewards].contains(&0) {
            return Err(self.err("dimensions must be positive"));
        }
        let entries = d
            .n_states
            .checked_mul(d.n_states)
            .and_then(|x| x.checked_mul(d.n_actions))
            .and_then(|x| x.checked_add(d.n_states.checked_mul(d.n_obs.checked_add(d.n_rewards)?)?));
        if entries.is_none_or(|e| e > MAX_ENTRIES) {
            return Err(self.err("model too large"));
        }
        self.expect("init")?;
        let init = Categorical::new(self.row(d.n_states)?).map_err(|e| self.err(e.to_string()))?;
        let trans = (0..d.n_actions)
            .map(|a| self.matrix(&format!("trans {a}"), d.n_states, d.n_states))
            .collect::<Result<Vec<_>>>()?;
        let obs = self.matrix("obs", d.n_states, d.n_obs)?;
        let rew = self.matrix("rew", d.n_states, d.n_rewards)?;
        WorldModel::new(init, trans, obs, rew)
    }

    fn finish(&mut self) -> Result<()> {
        match self.next() {
            Ok(_) => Err(self.err("trailing content")),
            Err(_) => Ok(()),
        }
    }
}

impl WorldModel {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_model(&mut out, self);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        let model = lines.model()?;
        lines.finish()?;
        Ok(model)
    }
}

impl Ensemble {
    pub fn to_text(&self) -> String {
        let mut out = format!("{ENSEMBLE_MAGIC}\nmembers {}\n", self.len());
        for m in self.members() {
            write_model(&mut out, m);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        lines.expect(ENSEMBLE_MAGIC)?;
        let m = lines.count("members", 1)?[0];
        if m > MAX_MEMBERS {
            return Err(lines.err("too many members"));
        }
        let members = (0..m).map(|_| lines.model()).collect::<Result<Vec<_>>>()?;
        lines.finish()?;
        Ensemble::new(members)
    }
}
