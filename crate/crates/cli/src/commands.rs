use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DVector;
use tpgate::basis::{alpha_ratio, build_landau_basis};
use tpgate::control::{
    bloch_trajectory, embed, fidelity_scan_b, gate_matrix, reference_qubit_state, repeated_application, state_tomography,
    synthesize_logged, ControlProblem, ControlVector, EffectiveTemplate, Gate, SynthesisResult,
};
use tpgate::coulomb::{coulomb_element, form_factor, FormFactor};
use tpgate::effective::{evolve, populations, Encoding, EvolveOptions, StateVector, C64};
use tpgate::fewbody::{crossing_estimate, high_field_window, FewBodySolver};
use tpgate::pulse::PulseTrain;
use tpgate::response::{ResponseTable, RESPONSE_HEADER};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{num, sha256_hex, OutputDir};

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

pub fn coulomb(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let c = &cfg.coulomb;
    let mut head = vec!["q".to_string()];
    head.extend(c.alphas.iter().map(|a| format!("F_alpha={a}")));
    let rows = (0..c.q_points)
        .map(|k| {
            let q = c.q_max * k as f64 / (c.q_points - 1) as f64;
            let mut row = vec![num(q)];
            for &a in &c.alphas {
                row.push(num(form_factor(a, q)?));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    out.write_csv("formfactor.csv", &head, &rows)?;

    let basis = build_landau_basis(cfg.fewbody.levels, cfg.fewbody.per_level);
    let states: Vec<_> = basis.orbitals().iter().copied().take(c.states).collect();
    let mut head = vec!["B".to_string(), "alpha".to_string()];
    head.extend(states.iter().map(|o| format!("V_n{}_l{}", o.n, o.l)));
    let rows = c
        .fields
        .points()?
        .into_iter()
        .map(|b| {
            let alpha = alpha_ratio(cfg.material.well_width, b)?;
            let ff = FormFactor::finite(alpha)?;
            let mut row = vec![num(b), num(alpha)];
            for &o in &states {
                row.push(num(coulomb_element([o; 4], ff, c.tolerance)?));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    out.write_csv("coulomb_vs_B.csv", &head, &rows)
}

pub fn spectrum(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    use rayon::prelude::*;
    let solver = FewBodySolver::new(cfg.material.clone(), cfg.fewbody)?;
    let fields = cfg.spectrum.fields.points()?;
    let rows = fields.par_iter().map(|&b| solver.binding_energies(b)).collect::<Result<Vec<_>, _>>()?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![num(r.b), num(r.e_singlet), num(r.e_triplet), num(r.e_exciton_electron), num(r.eb_singlet), num(r.eb_triplet)])
        .collect();
    out.write_csv("binding.csv", &header(&["B", "E_S", "E_T", "E_X_plus_e", "Eb_S", "Eb_T"]), &table)?;
    let samples: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.b, r.eb_singlet, r.eb_triplet)).collect();
    match crossing_estimate(&high_field_window(&samples), cfg.spectrum.crossing_degree) {
        Ok(b) => out.note("crossing_field_T", b),
        Err(e) => out.note("crossing_field_T", format!("none: {e}")),
    }
    Ok(())
}

/// Response table from the cache when present, otherwise computed (and cached).
pub fn response_table(cfg: &RunConfig, out: &mut OutputDir) -> Result<Arc<ResponseTable>, CliError> {
    let key_src = serde_json::to_string(&(&cfg.material, &cfg.fewbody, &cfg.field_grid)).map_err(|e| CliError::Io(e.to_string()))?;
    let key = sha256_hex(key_src.as_bytes());
    out.inputs.insert("response_inputs".into(), key.clone());
    let cache = cfg.resolved_cache_dir().map(|d| d.join(format!("response-{}.csv", &key[..24])));
    if let Some(path) = &cache {
        if let Ok(f) = std::fs::File::open(path) {
            let table = ResponseTable::read_csv(std::io::BufReader::new(f))?;
            out.note("response_cache", "hit");
            return Ok(Arc::new(table));
        }
    }
    let table = ResponseTable::compute(&cfg.field_grid, &cfg.material, &cfg.fewbody)?;
    out.note("response_cache", if cache.is_some() { "miss" } else { "disabled" });
    if let Some(path) = &cache {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        crate::output::write_atomic(path, &buf)?;
    }
    Ok(Arc::new(table))
}

pub fn response(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let table = response_table(cfg, out)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    out.write("response.csv", &buf)?;
    out.note("response_columns", RESPONSE_HEADER);
    out.note("interpolation", if table.interpolates() { "natural_cubic_spline" } else { "disabled" });
    Ok(())
}

pub fn template(cfg: &RunConfig, table: &ResponseTable) -> Result<EffectiveTemplate, CliError> {
    let e = &cfg.effective;
    let base = match e.omega_cavity {
        Some(w) => w,
        None => table.at(e.resonance_field)?.omega_x,
    };
    let omega_cavity = base + e.cavity_offset;
    Ok(EffectiveTemplate {
        omega_cavity,
        g_x: cfg.material.g_x,
        g_t: cfg.material.g_t,
        omega_l: e.omega_l.unwrap_or(omega_cavity),
        n_ph: e.n_ph,
        hbar: cfg.material.hbar,
    })
}

fn default_encoding(gate: Gate) -> Encoding {
    if gate == Gate::ISwap {
        Encoding::Qudit
    } else {
        Encoding::Exciton
    }
}

fn problem(cfg: &RunConfig, gate: Gate, table: Arc<ResponseTable>) -> Result<ControlProblem, CliError> {
    let encoding = cfg.encoding.unwrap_or(default_encoding(gate));
    let mut synth = cfg.synthesis.clone();
    synth.optimizer.seed = cfg.seed;
    Ok(ControlProblem::new(gate_matrix(gate, encoding)?, template(cfg, &table)?, table, synth)?)
}

/// Extra artifacts requested on the command line.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub trajectory: bool,
    pub scan: bool,
    pub tomography: bool,
    pub repeat: Option<usize>,
}

fn scan_fields(cfg: &RunConfig) -> Vec<f64> {
    let s = &cfg.scan;
    let n = ((s.stop - s.start) / s.step + 1e-9).floor() as usize + 1;
    (0..n).map(|k| s.start + k as f64 * s.step).collect()
}

/// Default initial state for trajectories and tomography.
fn initial_encoded(cfg: &RunConfig, encoding: Encoding) -> Result<DVector<C64>, CliError> {
    if !cfg.evolve.initial.is_empty() {
        let v = DVector::from_iterator(cfg.evolve.initial.len(), cfg.evolve.initial.iter().map(|[re, im]| C64::new(*re, *im)));
        if v.len() != encoding.dim() {
            return Err(CliError::Usage(format!("evolve.initial needs {} amplitudes", encoding.dim())));
        }
        let n = v.norm();
        if !(n > 0.0) {
            return Err(CliError::Usage("evolve.initial must not vanish".into()));
        }
        return Ok(v / C64::new(n, 0.0));
    }
    Ok(match encoding.dim() {
        2 => reference_qubit_state(),
        _ => {
            let r = std::f64::consts::FRAC_1_SQRT_2;
            DVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(r, 0.0), C64::new(0.0, r), C64::new(0.0, 0.0)])
        }
    })
}

fn write_trajectory(out: &mut OutputDir, traj: &[StateVector], p: &ControlProblem, x: &ControlVector, encoding: Encoding) -> Result<(), CliError> {
    let params = p.params_at(x.field())?;
    let basis = params.basis()?;
    let labels = basis.labels();
    let mut head = vec!["t".to_string()];
    head.extend(labels.iter().map(|l| l.to_string()));
    head.push("norm".into());
    let rows = traj
        .iter()
        .map(|s| {
            let mut row = vec![num(s.t)];
            row.extend(populations(s, &basis, &labels)?.into_iter().map(num));
            row.push(num(s.norm()));
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    out.write_csv("trajectory.csv", &head, &rows)?;
    if encoding.dim() == 2 {
        let bloch = bloch_trajectory(traj, &basis, encoding)?;
        let rows: Vec<Vec<String>> = traj.iter().zip(&bloch).map(|(s, v)| vec![num(s.t), num(v[0]), num(v[1]), num(v[2])]).collect();
        out.write_csv("bloch.csv", &header(&["t", "x", "y", "z"]), &rows)?;
    }
    Ok(())
}

fn trajectory(p: &ControlProblem, x: &ControlVector, psi: &DVector<C64>, opts: &EvolveOptions, tf: f64) -> Result<Vec<StateVector>, CliError> {
    let params = p.params_at(x.field())?;
    let basis = params.basis()?;
    let psi0 = embed(psi, &basis, p.target.encoding, 0.0)?;
    Ok(evolve(&psi0, tf, &params, &x.train()?, opts)?)
}

fn write_artifacts(cfg: &RunConfig, out: &mut OutputDir, p: &ControlProblem, r: &SynthesisResult, art: &Artifacts) -> Result<(), CliError> {
    let encoding = p.target.encoding;
    let psi = initial_encoded(cfg, encoding)?;
    let mut opts = p.config.evolve;
    opts.sample_every = opts.sample_every.max(10);
    if art.trajectory {
        let traj = trajectory(p, &r.controls, &psi, &opts, r.gate_time)?;
        write_trajectory(out, &traj, p, &r.controls, encoding)?;
    }
    if art.scan {
        let psi0 = (encoding.dim() == 2).then_some(&psi);
        let scan = fidelity_scan_b(p, &r.controls, &scan_fields(cfg), psi0)?;
        let rows: Vec<Vec<String>> = scan.iter().map(|(b, f)| vec![num(*b), num(*f)]).collect();
        out.write_csv("scan.csv", &header(&["B", "fidelity"]), &rows)?;
    }
    if art.tomography {
        let traj = trajectory(p, &r.controls, &psi, &EvolveOptions { sample_every: usize::MAX, ..opts }, r.gate_time)?;
        let last = traj.last().ok_or_else(|| CliError::Usage("empty trajectory".into()))?;
        let params = p.params_at(r.field)?;
        let rho = state_tomography(last, &params.basis()?, &encoding.labels())?;
        let target = &p.target.matrix * &psi;
        let ideal = &target * target.adjoint();
        let mut rows = Vec::new();
        for i in 0..rho.nrows() {
            for j in 0..rho.ncols() {
                rows.push(vec![i.to_string(), j.to_string(), num(rho[(i, j)].re), num(rho[(i, j)].im), num(ideal[(i, j)].re), num(ideal[(i, j)].im)]);
            }
        }
        out.write_csv("tomography.csv", &header(&["row", "col", "re", "im", "target_re", "target_im"]), &rows)?;
    }
    if let Some(k) = art.repeat {
        let u = r.u();
        let mut rows = Vec::new();
        for start in 1..encoding.dim().min(3) {
            let e = DVector::from_fn(encoding.dim(), |i, _| C64::new((i == start) as i32 as f64, 0.0));
            for (step, pops) in repeated_application(&u, &e, k)?.into_iter().enumerate() {
                let mut row = vec![start.to_string(), (step + 1).to_string()];
                row.extend(pops.into_iter().map(num));
                rows.push(row);
            }
        }
        let mut head = header(&["initial", "step"]);
        head.extend((0..encoding.dim()).map(|i| format!("P{i}")));
        out.write_csv("repeated.csv", &head, &rows)?;
    }
    Ok(())
}

pub fn synthesize(cfg: &RunConfig, out: &mut OutputDir, art: &Artifacts) -> Result<(), CliError> {
    let gate = cfg.gate.ok_or_else(|| CliError::Usage("synthesize needs a target gate (--gate)".into()))?;
    let table = response_table(cfg, out)?;
    let p = problem(cfg, gate, table)?;
    let mut log = Vec::new();
    let result = synthesize_logged(&p, &mut log);
    let rows: Vec<Vec<String>> = log.iter().enumerate().map(|(k, v)| vec![(k + 1).to_string(), num(*v)]).collect();
    out.write_csv("trace.csv", &header(&["evaluation", "best_objective"]), &rows)?;
    let r = result?;
    out.write_json("result.json", &r)?;
    out.note("objective", r.objective);
    out.note("process_fidelity", r.process_fidelity);
    out.note("average_infidelity", r.average_infidelity);
    write_artifacts(cfg, out, &p, &r, art)
}

fn load_result(path: &PathBuf) -> Result<SynthesisResult, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn evolve_cmd(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let table = response_table(cfg, out)?;
    let (gate, controls, tf) = match &cfg.evolve.result {
        Some(path) => {
            let r = load_result(path)?;
            out.inputs.insert("result".into(), sha256_hex(serde_json::to_string(&r).unwrap_or_default().as_bytes()));
            (r.gate, r.controls, r.gate_time)
        }
        None => {
            let e = &cfg.evolve;
            PulseTrain::new(e.pulses.clone())?;
            (cfg.gate.unwrap_or(Gate::I), ControlVector::new(&e.pulses, e.field, None), e.gate_time)
        }
    };
    let mut cfg = cfg.clone();
    cfg.synthesis.gate_time = Some(tf);
    cfg.synthesis.pulses = controls.pulses;
    cfg.synthesis.optimize_gate_time = false;
    let encoding = cfg.encoding.unwrap_or(default_encoding(gate));
    cfg.encoding = Some(encoding);
    let p = problem(&cfg, if encoding.dim() == 4 { Gate::ISwap } else { gate }, table)?;
    let controls = ControlVector::new(&controls.train()?.pulses().to_vec(), controls.field(), None);
    let psi = initial_encoded(&cfg, encoding)?;
    let mut opts = p.config.evolve;
    opts.sample_every = opts.sample_every.max(10);
    let traj = trajectory(&p, &controls, &psi, &opts, tf)?;
    write_trajectory(out, &traj, &p, &controls, encoding)
}

pub fn scan(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let path = cfg.evolve.result.as_ref().ok_or_else(|| CliError::Usage("scan needs a synthesis result (--result)".into()))?;
    let r = load_result(path)?;
    let table = response_table(cfg, out)?;
    let mut cfg = cfg.clone();
    cfg.synthesis = r.config.clone();
    cfg.synthesis.gate_time = Some(r.gate_time);
    cfg.synthesis.optimize_gate_time = false;
    cfg.synthesis.pulses = r.controls.pulses;
    cfg.encoding = Some(r.encoding);
    let mut p = problem(&cfg, r.gate, table)?;
    p.template = r.template;
    let controls = ControlVector::new(&r.pulses, r.field, None);
    let psi = initial_encoded(&cfg, r.encoding)?;
    let psi0 = (r.encoding.dim() == 2).then_some(&psi);
    let scan = fidelity_scan_b(&p, &controls, &scan_fields(&cfg), psi0)?;
    let rows: Vec<Vec<String>> = scan.iter().map(|(b, f)| vec![num(*b), num(*f)]).collect();
    out.write_csv("scan.csv", &header(&["B", "fidelity"]), &rows)
}
