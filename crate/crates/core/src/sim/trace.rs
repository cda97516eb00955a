//! Episode traces and their CSV and binary encodings.
//!
//! CSV: one `# key=value ...` header line, the column header, then one row per
//! step. Floats use the shortest representation that parses back to the same
//! value; `h` may be `inf` (no obstacle) or `NaN` (not evaluated).
//!
//! Binary (little endian): magic `AEGT`, `u32` version, `u32` name length,
//! name bytes, `u64` seed, `u8` filter flag, `f64` margin, `f64` dt, `u32` row
//! count, then per row `u32 t`, 18 `f64` (p, h, u_vla, u_safe) and two `u8`
//! flags.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use super::SimError;
use crate::filter::Action;

pub const CSV_COLUMNS: [&str; 21] = [
    "t", "px", "py", "pz", "h", "vvx", "vvy", "vvz", "wvx", "wvy", "wvz", "gvla", "vsx", "vsy", "vsz", "wsx", "wsy",
    "wsz", "gsafe", "active", "collided",
];

pub const BINARY_MAGIC: &[u8; 4] = b"AEGT";
pub const BINARY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub t: usize,
    pub p: Vector3<f64>,
    pub h: f64,
    pub u_vla: Action,
    pub u_safe: Action,
    pub active: bool,
    pub collided: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub scenario: String,
    pub seed: u64,
    pub filter_on: bool,
    pub margin: f64,
    pub dt: f64,
    pub steps: Vec<TraceStep>,
}

fn fmt_flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

impl Trace {
    pub fn new(scenario: &str, seed: u64, filter_on: bool, margin: f64, dt: f64) -> Self {
        Self {
            scenario: scenario.to_string(),
            seed,
            filter_on,
            margin,
            dt,
            steps: Vec::new(),
        }
    }

    pub fn min_h(&self) -> f64 {
        self.steps.iter().map(|s| s.h).fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# scenario={} seed={} filter={} margin={} dt={}\n",
            self.scenario,
            self.seed,
            if self.filter_on { "on" } else { "off" },
            self.margin,
            self.dt
        );
        out.push_str(&CSV_COLUMNS.join(","));
        out.push('\n');
        for s in &self.steps {
            let mut cells = vec![s.t.to_string()];
            cells.extend(s.p.iter().map(|v| v.to_string()));
            cells.push(s.h.to_string());
            cells.extend(s.u_vla.to_array().iter().map(|v| v.to_string()));
            cells.extend(s.u_safe.to_array().iter().map(|v| v.to_string()));
            cells.push(fmt_flag(s.active).into());
            cells.push(fmt_flag(s.collided).into());
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, SimError> {
        let err = |line: usize, msg: String| SimError::TraceFormat { line, msg };
        let mut lines = text.lines().enumerate();
        let (_, meta) = lines.next().ok_or_else(|| err(1, "empty trace".into()))?;
        let meta = meta
            .strip_prefix("# ")
            .ok_or_else(|| err(1, "missing `# scenario=...` line".into()))?;
        let mut trace = Trace::new("", 0, false, 0.0, 0.0);
        for kv in meta.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| err(1, format!("bad field {kv:?}")))?;
            let bad = |_| err(1, format!("bad value for {k}: {v:?}"));
            match k {
                "scenario" => trace.scenario = v.to_string(),
                "seed" => trace.seed = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "filter" => trace.filter_on = v == "on",
                "margin" => trace.margin = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "dt" => trace.dt = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                _ => return Err(err(1, format!("unknown field {k:?}"))),
            }
        }
        let (_, header) = lines.next().ok_or_else(|| err(2, "missing column header".into()))?;
        if header != CSV_COLUMNS.join(",") {
            return Err(err(2, "unexpected column header".into()));
        }
        for (i, line) in lines {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != CSV_COLUMNS.len() {
                return Err(err(
                    n,
                    format!("expected {} columns, found {}", CSV_COLUMNS.len(), cells.len()),
                ));
            }
            let f = |j: usize| {
                cells[j]
                    .parse::<f64>()
                    .map_err(|_| err(n, format!("bad number {:?}", cells[j])))
            };
            let flag = |j: usize| match cells[j] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(err(n, format!("bad flag {other:?}"))),
            };
            let action = |base: usize| -> Result<Action, SimError> {
                let mut a = [0.0; 7];
                for (k, slot) in a.iter_mut().enumerate() {
                    *slot = f(base + k)?;
                }
                Ok(Action::from_array(&a))
            };
            trace.steps.push(TraceStep {
                t: cells[0]
                    .parse()
                    .map_err(|_| err(n, format!("bad step index {:?}", cells[0])))?,
                p: Vector3::new(f(1)?, f(2)?, f(3)?),
                h: f(4)?,
                u_vla: action(5)?,
                u_safe: action(12)?,
                active: flag(19)?,
                collided: flag(20)?,
            });
        }
        Ok(trace)
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + self.scenario.len() + self.steps.len() * 150);
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.scenario.len() as u32).to_le_bytes());
        out.extend_from_slice(self.scenario.as_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.push(self.filter_on as u8);
        out.extend_from_slice(&self.margin.to_le_bytes());
        out.extend_from_slice(&self.dt.to_le_bytes());
        out.extend_from_slice(&(self.steps.len() as u32).to_le_bytes());
        for s in &self.steps {
            out.extend_from_slice(&(s.t as u32).to_le_bytes());
            let floats =
                s.p.iter()
                    .chain([&s.h])
                    .copied()
                    .chain(s.u_vla.to_array())
                    .chain(s.u_safe.to_array());
            for v in floats {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.push(s.active as u8);
            out.push(s.collided as u8);
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self, SimError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != BINARY_MAGIC {
            return Err(r.error("bad magic"));
        }
        let version = r.u32()?;
        if version != BINARY_VERSION {
            return Err(r.error(&format!("unsupported version {version}")));
        }
        let name_len = r.u32()? as usize;
        let scenario = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| r.error("name is not UTF-8"))?;
        let seed = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let filter_on = r.take(1)?[0] != 0;
        let margin = r.f64()?;
        let dt = r.f64()?;
        let rows = r.u32()? as usize;
        let mut trace = Trace::new(&scenario, seed, filter_on, margin, dt);
        for _ in 0..rows {
            let t = r.u32()? as usize;
            let mut v = [0.0; 18];
            for slot in v.iter_mut() {
                *slot = r.f64()?;
            }
            let flags = r.take(2)?;
            let (active, collided) = (flags[0] != 0, flags[1] != 0);
            trace.steps.push(TraceStep {
                t,
                p: Vector3::new(v[0], v[1], v[2]),
                h: v[3],
                u_vla: Action::from_array(v[4..11].try_into().expect("7 values")),
                u_safe: Action::from_array(v[11..18].try_into().expect("7 values")),
                active,
                collided,
            });
        }
        if r.pos != bytes.len() {
            return Err(r.error("trailing bytes"));
        }
        Ok(trace)
    }

    /// Writes CSV, or the binary log when the extension is `.bin`.
    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        let bytes = if path.extension().is_some_and(|e| e == "bin") {
            self.to_binary()
        } else {
            self.to_csv().into_bytes()
        };
        fs::write(path, bytes).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let bytes = fs::read(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if bytes.starts_with(BINARY_MAGIC) {
            Self::from_binary(&bytes)
        } else {
            let text = String::from_utf8(bytes).map_err(|_| SimError::TraceFormat {
                line: 0,
                msg: "trace is neither UTF-8 CSV nor a binary log".into(),
            })?;
            Self::from_csv(&text)
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn error(&self, msg: &str) -> SimError {
        SimError::TraceFormat {
            line: 0,
            msg: format!("byte {}: {msg}", self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], SimError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| self.error("truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, SimError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, SimError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
