use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use ddgate_core::bath::coherence::{doubled_gate_coherence, fid_coherence, repeated_gate_coherence};
use ddgate_core::bath::dense::{exact_state_fidelity, DENSE_BATH_LIMIT};
use ddgate_core::bath::select::{select_bath, selection_window};
use ddgate_core::bath::{generate_bath, BathSpec, SpinBath};
use ddgate_core::io::{to_json, BathFile, DesignFile};
use ddgate_core::linalg::{ONE, ZERO};
use ddgate_core::propagator::bloch_trajectory;
use ddgate_core::{design_gate, rng, Branch, DDConstraintSet, GateKind, SystemParameters};
use num_complex::Complex64 as C64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::LoadedConfig;
use crate::failure::{CliResult, Failure};
use crate::output::{csv_bytes, num, write_atomic, Record};

/// Per-subtask seed streams split from the config seed.
const STREAM_DESIGN: u64 = 0;
const STREAM_SWEEP: u64 = 1;
const STREAM_BATH: u64 = 2;
const STREAM_STATE_BATH: u64 = 3;
const STREAM_COHERENCE_BATH: u64 = 4;

pub const SWEEP_HEADER: [&str; 8] = [
    "gate",
    "n_pulses",
    "fidelity",
    "gate_time_us",
    "state_fidelity",
    "l_2tg",
    "seed",
    "status",
];

pub struct Context {
    pub cfg: LoadedConfig,
    pub out: PathBuf,
    pub seed: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_sha256: &'a str,
    outputs: Vec<&'a str>,
}

impl Context {
    fn prepare_out(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out)
            .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", self.out.display())))
    }

    fn write(&self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let p = self.out.join(name);
        write_atomic(&p, bytes)?;
        Ok(p)
    }

    fn manifest(&self, command: &str, outputs: Vec<&str>) -> CliResult<()> {
        let m = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            config_sha256: &self.cfg.sha256,
            outputs,
        };
        self.write("manifest.json", to_json(&m)?.as_bytes())?;
        Ok(())
    }
}

fn superposition_input() -> [C64; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [ZERO, ONE * h, ZERO, ONE * h]
}

pub fn design(ctx: &Context) -> CliResult<Vec<Record>> {
    let c = &ctx.cfg.config;
    let section = ctx.cfg.section(&c.design, "design")?;
    let params = ctx.cfg.params()?;
    let opt = section.optimizer.build(section.n_pulses, rng::split(ctx.seed, STREAM_DESIGN));
    opt.validate()?;
    let constraints = DDConstraintSet {
        order: section.order,
        ..DDConstraintSet::default()
    };
    constraints.validate()?;
    let gate = section.gate.target();
    let result = design_gate(&params, &gate, &opt, &constraints)?;
    let file = DesignFile::new(&result, &params, &gate);

    ctx.prepare_out()?;
    ctx.write("design.json", to_json(&file)?.as_bytes())?;
    ctx.manifest("design", vec!["design.json"])?;
    Ok(vec![vec![
        ("gate", json!(section.gate.name())),
        ("n_pulses", json!(result.n_pulses())),
        ("fidelity", json!(result.fidelity)),
        ("gate_time_us", json!(result.gate_time)),
        ("converged", json!(result.converged)),
        ("output", json!(ctx.out.join("design.json").display().to_string())),
    ]])
}

struct SweepBaths {
    state: SpinBath,
    coherence: SpinBath,
}

fn selected(spec: &BathSpec, seed: u64) -> CliResult<SpinBath> {
    let spec = BathSpec { seed, ..spec.clone() };
    Ok(select_bath(&spec)?.bath)
}

fn sweep_cell(
    params: &SystemParameters,
    ctx: &Context,
    gate: GateKind,
    n: usize,
    seed: u64,
    baths: &SweepBaths,
) -> Vec<String> {
    let c = &ctx.cfg.config;
    let section = c.sweep.as_ref().expect("validated");
    let opt = section.optimizer.build(n, seed);
    let constraints = DDConstraintSet {
        order: section.order,
        ..DDConstraintSet::default()
    };
    let target = gate.target();
    let row = |f: String, t: String, s: String, l: String, status: String| {
        vec![gate.name().to_string(), n.to_string(), f, t, s, l, seed.to_string(), status]
    };
    let result = match design_gate(params, &target, &opt, &constraints) {
        Ok(r) => r,
        Err(e) => return row(String::new(), String::new(), String::new(), String::new(), format!("error: {e}")),
    };
    let state = exact_state_fidelity(params, &baths.state, &result.sequence, &target, &superposition_input());
    let l2 = doubled_gate_coherence(&baths.coherence, &result.sequence).norm();
    match state {
        Ok(s) => row(num(result.fidelity), num(result.gate_time), num(s), num(l2), "ok".into()),
        Err(e) => row(
            num(result.fidelity),
            num(result.gate_time),
            String::new(),
            num(l2),
            format!("error: {e}"),
        ),
    }
}

/// Rows already completed in an earlier run, keyed by `(gate, n_pulses)`.
fn completed_rows(path: &Path) -> CliResult<HashMap<(String, String), Vec<String>>> {
    let mut done = HashMap::new();
    if !path.exists() {
        return Ok(done);
    }
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != SWEEP_HEADER {
        return Err(Failure::Config(format!("{} has an unexpected header", path.display())));
    }
    for rec in r.records() {
        let rec: Vec<String> = rec?.iter().map(str::to_string).collect();
        if rec.len() == SWEEP_HEADER.len() && rec[7] == "ok" {
            done.insert((rec[0].clone(), rec[1].clone()), rec);
        }
    }
    Ok(done)
}

pub fn sweep(ctx: &Context) -> CliResult<Vec<Record>> {
    let c = &ctx.cfg.config;
    let section = ctx.cfg.section(&c.sweep, "sweep")?;
    let params = ctx.cfg.params()?;
    for &n in &section.n_pulses {
        section.optimizer.build(n, 0).validate()?;
    }
    DDConstraintSet {
        order: section.order,
        ..DDConstraintSet::default()
    }
    .validate()?;
    section.state_bath.validate()?;
    section.coherence_bath.validate()?;
    match section.state_bath.n_spins {
        Some(n) if n <= DENSE_BATH_LIMIT => {}
        other => {
            return Err(Failure::Capacity(format!(
                "sweep.state_bath.n_spins = {other:?}; the state-fidelity engine takes at most {DENSE_BATH_LIMIT} spins"
            )));
        }
    }

    let out_path = ctx.out.join("sweep.csv");
    let manifest_path = ctx.out.join("manifest.json");
    if manifest_path.exists() {
        let m: Value = crate::config::read_json(&manifest_path)?;
        let same = m["command"] == "sweep" && m["config_sha256"] == ctx.cfg.sha256.as_str() && m["seed"] == ctx.seed;
        if !same {
            return Err(Failure::Config(format!(
                "{} holds results from a different config or seed",
                ctx.out.display()
            )));
        }
    }
    let done = completed_rows(&out_path)?;
    ctx.prepare_out()?;
    ctx.manifest("sweep", vec!["sweep.csv"])?;

    let cells: Vec<(GateKind, usize)> = section
        .gates
        .iter()
        .flat_map(|&g| section.n_pulses.iter().map(move |&n| (g, n)))
        .collect();
    let mut rows: Vec<Vec<String>> = Vec::with_capacity(cells.len());
    let pending = cells
        .iter()
        .any(|(g, n)| !done.contains_key(&(g.name().to_string(), n.to_string())));
    let baths = if pending {
        Some(SweepBaths {
            state: selected(&section.state_bath, rng::split(ctx.seed, STREAM_STATE_BATH))?,
            coherence: selected(&section.coherence_bath, rng::split(ctx.seed, STREAM_COHERENCE_BATH))?,
        })
    } else {
        None
    };
    let sweep_seed = rng::split(ctx.seed, STREAM_SWEEP);
    for (k, &(g, n)) in cells.iter().enumerate() {
        let key = (g.name().to_string(), n.to_string());
        let row = match done.get(&key) {
            Some(r) => r.clone(),
            None => sweep_cell(&params, ctx, g, n, rng::split(sweep_seed, k as u64), baths.as_ref().expect("pending")),
        };
        rows.push(row);
        // rewrite after every cell so an interrupted sweep can resume
        let mut partial = rows.clone();
        partial.extend(done.values().filter(|r| !rows.iter().any(|x| x[0] == r[0] && x[1] == r[1])).cloned());
        write_atomic(&out_path, &csv_bytes(&SWEEP_HEADER, &partial)?)?;
    }
    write_atomic(&out_path, &csv_bytes(&SWEEP_HEADER, &rows)?)?;

    Ok(rows
        .iter()
        .map(|r| {
            let f = |s: &str| s.parse::<f64>().map(Value::from).unwrap_or(Value::Null);
            vec![
                ("gate", json!(r[0])),
                ("n_pulses", json!(r[1].parse::<usize>().unwrap_or(0))),
                ("fidelity", f(&r[2])),
                ("gate_time_us", f(&r[3])),
                ("state_fidelity", f(&r[4])),
                ("l_2tg", f(&r[5])),
                ("status", json!(r[7])),
            ]
        })
        .collect())
}

pub fn bath(ctx: &Context) -> CliResult<Vec<Record>> {
    let c = &ctx.cfg.config;
    let section = ctx.cfg.section(&c.bath, "bath")?;
    let spec = BathSpec {
        seed: rng::split(ctx.seed, STREAM_BATH),
        ..section.spec.clone()
    };
    spec.validate()?;
    let (default_t, default_dt) = selection_window(&spec);
    let t_max = section.fid_t_max_us.unwrap_or(default_t);
    let dt = section.fid_dt_us.unwrap_or(default_dt);
    if !(dt > 0.0 && t_max >= 0.0) {
        return Err(Failure::Config("fid_dt_us must be positive and fid_t_max_us nonnegative".into()));
    }
    let (bath, candidate) = if section.select {
        let s = select_bath(&spec)?;
        (s.bath, Some(s.candidate))
    } else {
        (generate_bath(&spec)?, None)
    };
    let fid = fid_coherence(&bath, t_max, dt)?;
    let t2star = fid.t2star();
    let file = BathFile::new(&bath, &spec, t2star);
    let fid_rows: Vec<Vec<String>> = fid
        .series
        .samples
        .iter()
        .map(|(t, l)| vec![num(*t), num(l.re), num(l.im), num(l.norm())])
        .collect();

    ctx.prepare_out()?;
    ctx.write("bath.json", to_json(&file)?.as_bytes())?;
    ctx.write("fid.csv", &csv_bytes(&COHERENCE_HEADER, &fid_rows)?)?;
    ctx.manifest("bath", vec!["bath.json", "fid.csv"])?;
    let mut rec: Record = vec![
        ("n_spins", json!(bath.len())),
        ("seed", json!(bath.seed)),
        ("candidate", json!(candidate)),
        ("t2star_us", json!(t2star)),
    ];
    if let Err(d) = &fid.fit {
        rec.push(("fit", json!(d.reason)));
    }
    Ok(vec![rec])
}

pub const COHERENCE_HEADER: [&str; 4] = ["t_us", "re_L", "im_L", "abs_L"];

pub fn coherence(ctx: &Context) -> CliResult<Vec<Record>> {
    let c = &ctx.cfg.config;
    let section = ctx.cfg.section(&c.coherence, "coherence")?;
    let (seq, design_params) = ctx.cfg.sequence_input(&section.design, &section.sequence)?;
    let bath = ctx.cfg.bath_file(&section.bath)?.to_bath()?;
    let psi = section.target_state.resolve()?;
    let params = match design_params {
        Some(p) => p,
        None => ctx.cfg.params()?,
    };
    if section.repeats.is_empty() {
        return Err(Failure::Config("coherence: repeats is empty".into()));
    }
    let samples = repeated_gate_coherence(&params, &bath, &seq, &psi, &section.repeats, section.allow_odd)?;
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            let l = if section.include_target { s.coherence() } else { s.bath };
            vec![num(s.total_time), num(l.re), num(l.im), num(l.norm())]
        })
        .collect();

    ctx.prepare_out()?;
    ctx.write("coherence.csv", &csv_bytes(&COHERENCE_HEADER, &rows)?)?;
    ctx.manifest("coherence", vec!["coherence.csv"])?;
    Ok(samples
        .iter()
        .map(|s| {
            vec![
                ("repeats", json!(s.repeats)),
                ("t_us", json!(s.total_time)),
                ("abs_L_bath", json!(s.bath.norm())),
                ("abs_L_target", json!(s.target.norm())),
                ("abs_L", json!(s.coherence().norm())),
            ]
        })
        .collect())
}

pub fn trajectory(ctx: &Context) -> CliResult<Vec<Record>> {
    let c = &ctx.cfg.config;
    let section = ctx.cfg.section(&c.trajectory, "trajectory")?;
    let (seq, design_params) = ctx.cfg.sequence_input(&section.design, &section.sequence)?;
    let params = match design_params {
        Some(p) => p,
        None => ctx.cfg.params()?,
    };
    let branch = Branch::from_index(section.branch)?;
    let psi = section.psi0.resolve()?;
    let points = bloch_trajectory(&params, &seq, branch, psi, section.dt_us)?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| vec![num(p.t), num(p.x), num(p.y), num(p.z)])
        .collect();

    ctx.prepare_out()?;
    ctx.write("trajectory.csv", &csv_bytes(&["t_us", "x", "y", "z"], &rows)?)?;
    ctx.manifest("trajectory", vec!["trajectory.csv"])?;
    let last = points.last().expect("nonempty trajectory");
    Ok(vec![vec![
        ("points", json!(points.len())),
        ("t_end_us", json!(last.t)),
        ("x", json!(last.x)),
        ("y", json!(last.y)),
        ("z", json!(last.z)),
    ]])
}

pub fn verify(ctx: &Context) -> CliResult<Vec<Record>> {
    let c = &ctx.cfg.config;
    let section = ctx.cfg.section(&c.verify, "verify")?;
    let path = ctx.cfg.resolve(&section.design);
    let file: DesignFile = crate::config::read_json(&path)?;
    let report = file.verify().map_err(|e| Failure::input(&path.display().to_string(), e))?;
    let rec = vec![
        ("design", json!(path.display().to_string())),
        ("stored_fidelity", json!(report.stored_fidelity)),
        ("recomputed_fidelity", json!(report.recomputed_fidelity)),
        ("bit_exact", json!(report.fidelity_bit_exact && report.gate_time_bit_exact)),
        ("symmetric", json!(report.symmetric)),
        ("echo_residual_us", json!(report.echo_residual_us)),
    ];
    if !report.passed() {
        return Err(Failure::Verification(format!(
            "{}: stored fidelity {:?}, recomputed {:?}, gate time bit-exact {}, symmetric {}, echo residual {:e} us",
            path.display(),
            report.stored_fidelity,
            report.recomputed_fidelity,
            report.gate_time_bit_exact,
            report.symmetric,
            report.echo_residual_us
        )));
    }
    Ok(vec![rec])
}
