//! Per-step simulation record and its CSV form.

use std::io::{Read, Write};
use std::path::Path;

use crate::{Error, Result};

/// Quantities of one vehicle at one instant. Leader rows carry zeros in every
/// field except the velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleSample {
    pub velocity: f64,
    /// Reduced gap to the predecessor, `d̃_i`.
    pub distance: f64,
    /// Reduced distance to the virtual predecessor as seen by the controller.
    pub virtual_distance: f64,
    pub beta: f64,
    pub overall_delay: f64,
    pub tau: f64,
    pub lookahead_index: usize,
    pub weight_l_minus_1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub time: f64,
    pub vehicles: Vec<VehicleSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub n_vehicles: usize,
    pub rows: Vec<TraceRow>,
}

const FIELDS: [&str; 8] = ["v", "d", "d_s", "beta", "delta_hat", "tau", "l", "a_lm1"];

impl Trace {
    pub fn new(n_vehicles: usize) -> Self {
        Self {
            n_vehicles,
            rows: Vec::new(),
        }
    }

    pub fn header(n_vehicles: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for i in 0..n_vehicles {
            h.extend(FIELDS.iter().map(|f| format!("{f}_{i}")));
        }
        h
    }

    /// Column `field` of vehicle `i` over time.
    pub fn series(&self, i: usize, field: impl Fn(&VehicleSample) -> f64) -> Vec<f64> {
        self.rows.iter().map(|r| field(&r.vehicles[i])).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.time).collect()
    }

    /// Row index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.rows.partition_point(|r| r.time < t - 1e-9)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::header(self.n_vehicles))?;
        let mut rec = Vec::with_capacity(1 + 8 * self.n_vehicles);
        for row in &self.rows {
            if row.vehicles.len() != self.n_vehicles {
                return Err(Error::Validation(format!(
                    "trace row at t = {} has {} vehicles, expected {}",
                    row.time,
                    row.vehicles.len(),
                    self.n_vehicles
                )));
            }
            rec.clear();
            rec.push(fmt(row.time));
            for s in &row.vehicles {
                rec.extend([
                    fmt(s.velocity),
                    fmt(s.distance),
                    fmt(s.virtual_distance),
                    fmt(s.beta),
                    fmt(s.overall_delay),
                    fmt(s.tau),
                    s.lookahead_index.to_string(),
                    fmt(s.weight_l_minus_1),
                ]);
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let cols = header.len();
        if cols == 0 || (cols - 1) % FIELDS.len() != 0 {
            return Err(Error::Validation(format!(
                "trace header has {cols} columns"
            )));
        }
        let n = (cols - 1) / FIELDS.len();
        if header.iter().ne(Self::header(n).iter().map(String::as_str)) {
            return Err(Error::Validation("unexpected trace header".into()));
        }
        let mut trace = Trace::new(n);
        for rec in r.records() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec[k].parse::<f64>().map_err(|e| {
                    Error::Validation(format!("column {}: {e}", &header[k]))
                })
            };
            let mut vehicles = Vec::with_capacity(n);
            for i in 0..n {
                let b = 1 + i * FIELDS.len();
                vehicles.push(VehicleSample {
                    velocity: num(b)?,
                    distance: num(b + 1)?,
                    virtual_distance: num(b + 2)?,
                    beta: num(b + 3)?,
                    overall_delay: num(b + 4)?,
                    tau: num(b + 5)?,
                    lookahead_index: rec[b + 6].parse().map_err(|e| {
                        Error::Validation(format!("column {}: {e}", &header[b + 6]))
                    })?,
                    weight_l_minus_1: num(b + 7)?,
                });
            }
            trace.rows.push(TraceRow {
                time: num(0)?,
                vehicles,
            });
        }
        Ok(trace)
    }
}

// Debug formatting of f64 is the shortest string that parses back to the same value.
fn fmt(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_trace_csv(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    trace.write_csv(std::io::BufWriter::new(file))
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Trace> {
    let file = std::fs::File::open(path)?;
    Trace::read_csv(std::io::BufReader::new(file))
}
