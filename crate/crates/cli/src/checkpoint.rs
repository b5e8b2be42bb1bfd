//! Exact optimizer checkpoints stored beside the trace CSV.
//!
//! Floats are written as IEEE-754 bit patterns so a resumed run continues from
//! the same state bit for bit.

use std::fmt::Write as _;

use cavity_forge_core::geometry::ParamVector;
use cavity_forge_core::optimizer::{Checkpoint, DescentState, EpochRecord, OptimizationTrace};

const MAGIC: &str = "cavity-forge checkpoint 1";

/// Path of the sidecar for a trace file.
pub fn sidecar(trace: &std::path::Path) -> std::path::PathBuf {
    let mut s = trace.as_os_str().to_owned();
    s.push(".ckpt");
    s.into()
}

fn bits(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{:016x}", x.to_bits())).collect::<Vec<_>>().join(" ")
}

fn unbits(s: &str) -> Result<Vec<f64>, String> {
    s.split_whitespace()
        .map(|w| u64::from_str_radix(w, 16).map(f64::from_bits).map_err(|_| format!("bad float bits `{w}`")))
        .collect()
}

fn arr8(v: Vec<f64>) -> Result<[f64; 8], String> {
    v.try_into().map_err(|v: Vec<f64>| format!("expected 8 values, got {}", v.len()))
}

pub fn render(config_digest: &str, trace: &OptimizationTrace, ckpt: &Checkpoint) -> String {
    let mut s = String::new();
    writeln!(s, "{MAGIC}").unwrap();
    writeln!(s, "config_sha256 = {config_digest}").unwrap();
    writeln!(s, "tau_ff_floor = {}", bits(&[trace.tau_ff_floor])).unwrap();
    writeln!(s, "epoch = {}", ckpt.epoch).unwrap();
    writeln!(s, "t = {}", ckpt.state.t).unwrap();
    writeln!(s, "m = {}", bits(&ckpt.state.m)).unwrap();
    writeln!(s, "v = {}", bits(&ckpt.state.v)).unwrap();
    writeln!(s, "latent = {}", bits(&ckpt.state.latent)).unwrap();
    writeln!(s, "params = {}", bits(&ckpt.state.params.0)).unwrap();
    writeln!(s, "reference = {}", bits(&ckpt.reference)).unwrap();
    for r in trace.records() {
        let mut vals = vec![r.q_ref, r.frequency, r.q_factor, r.tau_ff, r.tau_f, r.tau_q, r.overlap_a, r.total];
        vals.extend_from_slice(&r.params.0);
        writeln!(s, "record = {} {} {}", r.epoch, r.stage, bits(&vals)).unwrap();
    }
    s
}

#[derive(Debug)]
pub struct Loaded {
    pub config_digest: String,
    pub trace: OptimizationTrace,
    pub checkpoint: Checkpoint,
}

pub fn parse(text: &str) -> Result<Loaded, String> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err("not a checkpoint file".into());
    }
    let mut config_digest = None;
    let mut floor = None;
    let (mut epoch, mut t) = (None, None);
    let (mut m, mut v, mut latent, mut params, mut reference) = (None, None, None, None, None);
    let mut records = Vec::new();
    for line in lines {
        let (k, val) = line.split_once(" = ").ok_or_else(|| format!("malformed line `{line}`"))?;
        match k {
            "config_sha256" => config_digest = Some(val.to_string()),
            "tau_ff_floor" => floor = unbits(val)?.first().copied(),
            "epoch" => epoch = Some(val.parse::<usize>().map_err(|e| e.to_string())?),
            "t" => t = Some(val.parse::<u64>().map_err(|e| e.to_string())?),
            "m" => m = Some(arr8(unbits(val)?)?),
            "v" => v = Some(arr8(unbits(val)?)?),
            "latent" => latent = Some(arr8(unbits(val)?)?),
            "params" => params = Some(arr8(unbits(val)?)?),
            "reference" => reference = Some(unbits(val)?),
            "record" => {
                let mut it = val.splitn(3, ' ');
                let epoch: usize = it.next().unwrap_or("").parse().map_err(|_| "bad record epoch")?;
                let stage: usize = it.next().unwrap_or("").parse().map_err(|_| "bad record stage")?;
                let x = unbits(it.next().unwrap_or(""))?;
                if x.len() != 16 {
                    return Err(format!("record {epoch}: expected 16 values, got {}", x.len()));
                }
                records.push(EpochRecord {
                    epoch,
                    stage,
                    q_ref: x[0],
                    frequency: x[1],
                    q_factor: x[2],
                    tau_ff: x[3],
                    tau_f: x[4],
                    tau_q: x[5],
                    overlap_a: x[6],
                    total: x[7],
                    params: ParamVector(x[8..16].try_into().unwrap()),
                });
            }
            other => return Err(format!("unknown checkpoint key `{other}`")),
        }
    }
    let missing = |k: &str| format!("checkpoint is missing `{k}`");
    let mut trace = OptimizationTrace::new(floor.ok_or_else(|| missing("tau_ff_floor"))?);
    for r in records {
        trace.push(r).map_err(|e| e.to_string())?;
    }
    let checkpoint = Checkpoint {
        epoch: epoch.ok_or_else(|| missing("epoch"))?,
        state: DescentState {
            t: t.ok_or_else(|| missing("t"))?,
            m: m.ok_or_else(|| missing("m"))?,
            v: v.ok_or_else(|| missing("v"))?,
            latent: latent.ok_or_else(|| missing("latent"))?,
            params: ParamVector(params.ok_or_else(|| missing("params"))?),
        },
        reference: reference.ok_or_else(|| missing("reference"))?,
    };
    Ok(Loaded {
        config_digest: config_digest.ok_or_else(|| missing("config_sha256"))?,
        trace,
        checkpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let params = ParamVector([0.355, 0.07, 0.0700000001, 0.07, 0.07, 0.07, 0.07, 0.07]);
        let mut trace = OptimizationTrace::new(0.7);
        trace
            .push(EpochRecord {
                epoch: 0,
                stage: 0,
                q_ref: 1000.0,
                params,
                frequency: 1.0895512345678901,
                q_factor: 1280.123456789,
                tau_ff: 0.88,
                tau_f: 1.0,
                tau_q: 0.1 + 0.2,
                overlap_a: 1.0,
                total: 0.029,
            })
            .unwrap();
        let ckpt = Checkpoint {
            epoch: 0,
            state: DescentState {
                t: 3,
                m: [1e-300, -0.0, 3.0, 4.0, 5.0, 6.0, 7.0, f64::MIN_POSITIVE],
                v: [0.5; 8],
                latent: [0.1; 8],
                params,
            },
            reference: vec![0.25, -1.0 / 3.0],
        };
        let loaded = parse(&render("abc", &trace, &ckpt)).unwrap();
        assert_eq!(loaded.config_digest, "abc");
        assert_eq!(loaded.trace, trace);
        assert_eq!(loaded.checkpoint, ckpt);
    }
}
