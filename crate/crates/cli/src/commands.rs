//! The workflows behind each subcommand. Each returns a one-line
//! summary for the terminal; the data goes to files.

use fsi_core::bifurcation::{locate_crossing, trace_branch, BaseFlow, Branch, BranchSolver, HopfPoint};
use fsi_core::evolution::{self, decay_metrics, random_perturbation, DecayOptions, EvolState, EvolveOptions, EvolveStatus};
use fsi_core::linalg::dense;
use fsi_core::periodic::{frequency_from_period, resonance_scan, solve_periodic_linear, time_domain_residual, ModeForcing};
use fsi_core::spectral::{assemble_linearization, check_h2prime, eigs_near, multiplicity_hints};
use fsi_core::steady::{compute_thresholds, continue_steady, SteadyState, Threshold, Thresholds};
use fsi_core::{Error, Mesh, Operators, Params, Projector, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{num, Output};
use crate::CliError;

type Res<T> = Result<T, CliError>;

fn operators(cfg: &RunConfig) -> Res<Operators> {
    Ok(Operators::new(&Mesh::build(&cfg.mesh)?))
}

/// Steady state at `params.lambda`, reached by continuation from rest in
/// steps of at most `continuation.max_step`.
fn steady_at(cfg: &RunConfig, ops: &Operators, p: &Params) -> Res<SteadyState> {
    let n = (p.lambda / cfg.continuation.max_step).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=n).map(|i| p.lambda * i as f64 / n as f64).collect();
    let mut states = continue_steady(p, ops, &grid, cfg.newton)?;
    Ok(states.pop().expect("nonempty continuation"))
}

fn threshold(t: Threshold) -> Value {
    match t {
        Threshold::Finite(v) => json!(v),
        Threshold::Unbounded => json!("unbounded"),
    }
}

fn thresholds_json(lambda: f64, t: &Thresholds) -> Value {
    json!({
        "lambda": lambda,
        "lambda1": threshold(t.lambda1),
        "lambda2": threshold(t.lambda2),
        "theta1": t.theta1,
        "theta2": t.theta2,
        "gamma": t.gamma(lambda),
    })
}

fn steady_json(s: &SteadyState, t: &Thresholds) -> Value {
    json!({
        "lambda": s.lambda,
        "chi0": s.chi0,
        "drag": s.reaction[0],
        "reaction": s.reaction,
        "residual": s.residual,
        "newton_iterations": s.newton_iterations,
        "lambda1": threshold(t.lambda1),
        "lambda2": threshold(t.lambda2),
    })
}

fn write_steady(out: &Output, ops: &Operators, s: &SteadyState) -> Res<()> {
    let extra = json!({"lambda": s.lambda, "chi0": s.chi0});
    out.snapshot("steady_velocity.bin", &ops.mesh, "steady velocity (coupled)", &s.u0.values, extra.clone())?;
    out.snapshot("steady_pressure.bin", &ops.mesh, "steady pressure", &s.p0.values, extra)?;
    Ok(())
}

pub fn steady(cfg: &RunConfig, out: &Output) -> Res<String> {
    let p = cfg.effective_params()?;
    p.require_positive_varpi()?;
    let ops = operators(cfg)?;
    let s = steady_at(cfg, &ops, &p)?;
    let t = compute_thresholds(&ops, &s)?;
    write_steady(out, &ops, &s)?;
    let path = out.json("steady.json", &steady_json(&s, &t))?;
    Ok(format!("steady: lambda {} chi0 {:?} residual {:.2e} -> {}", s.lambda, s.chi0, s.residual, path.display()))
}

pub fn thresholds(cfg: &RunConfig, out: &Output) -> Res<String> {
    let p = cfg.effective_params()?;
    p.require_positive_varpi()?;
    let ops = operators(cfg)?;
    let s = steady_at(cfg, &ops, &p)?;
    let t = compute_thresholds(&ops, &s)?;
    let path = out.json("thresholds.json", &thresholds_json(s.lambda, &t))?;
    Ok(format!(
        "thresholds: lambda1 {} lambda2 {} -> {}",
        t.lambda1.value(),
        t.lambda2.value(),
        path.display()
    ))
}

pub fn evolve(cfg: &RunConfig, out: &Output) -> Res<String> {
    let e = &cfg.evolve;
    let p = cfg.effective_params()?;
    p.require_positive_varpi()?;
    let ops = operators(cfg)?;
    let s = steady_at(cfg, &ops, &p)?;
    let t = compute_thresholds(&ops, &s)?;
    let proj = Projector::new(&ops, p.varpi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let u = random_perturbation(&ops, &p, &proj, &mut rng, e.amplitude)?;
    let s0 = EvolState::new(&ops, u, vec![0.0; ops.dim()])?;
    let opts = EvolveOptions {
        linearized: e.linearized,
        cfl_max: e.cfl_max,
        snapshot_stride: e.snapshot_stride,
    };
    let r = evolution::evolve(&ops, &p, &s.u0.values, &s0, e.t_final, e.dt, opts)?;
    let rows: Vec<Vec<String>> = r.log.rows().iter().map(|row| row.iter().map(|v| num(*v)).collect()).collect();
    out.csv("energy.csv", &["t", "E", "normD", "normGrad", "|chi|", "|chidot|"], &rows)?;
    for (i, st) in r.trajectory.iter().enumerate() {
        let extra = json!({"t": st.t, "chi": st.chi, "chidot": st.chidot});
        out.snapshot(&format!("evolve_{i:05}.bin"), &ops.mesh, "perturbation velocity (coupled)", &st.u.values, extra)?;
    }
    let d = DecayOptions {
        transient_fraction: e.transient_fraction,
        ..Default::default()
    };
    let decay = decay_metrics(&r.log, p.lambda, Some(t.lambda2.value()), d)?;
    let summary = json!({
        "lambda": p.lambda,
        "lambda2": threshold(t.lambda2),
        "status": r.status,
        "samples": r.log.len(),
        "initial_energy": r.log.energy[0],
        "final_energy": r.log.energy[r.log.len() - 1],
        "decay": decay,
    });
    let path = out.json("evolve.json", &summary)?;
    if let EvolveStatus::NonFinite { t } = r.status {
        return Err(Error::solver(format!("state became non-finite at t = {t}"), f64::NAN).into());
    }
    Ok(format!(
        "evolve: {} samples, rate {:.4e}, decayed {} -> {}",
        r.log.len(),
        decay.rate,
        decay.decayed,
        path.display()
    ))
}

pub fn spectrum(cfg: &RunConfig, out: &Output) -> Res<String> {
    let sc = &cfg.spectrum;
    let p = cfg.effective_params()?;
    p.require_positive_varpi()?;
    let ops = operators(cfg)?;
    let s = steady_at(cfg, &ops, &p)?;
    let l = assemble_linearization(&ops, &p, &s)?;
    let shifts: Vec<C64> = sc.shifts.iter().map(|z| C64::new(0.0, *z)).collect();
    let pairs = eigs_near(&l, &shifts, sc.per_shift)?;
    let nus: Vec<C64> = pairs.iter().map(|q| q.nu).collect();
    let hints = multiplicity_hints(&nus, sc.multiplicity_tol);
    let eig: Vec<Value> = pairs
        .iter()
        .zip(&hints)
        .map(|(q, h)| json!({"re": q.nu.re, "im": q.nu.im, "residual": q.residual, "amult_hint": h}))
        .collect();
    // the least stable oscillatory eigenvalue carries the harmonic check
    let critical = pairs.iter().filter(|q| q.nu.im > 1e-8).min_by(|a, b| a.nu.re.total_cmp(&b.nu.re));
    let h2 = match critical {
        Some(c) => Some(check_h2prime(&l, c.nu, sc.h2_kmax, sc.h2_tol)?),
        None => None,
    };
    let report = json!({
        "lambda": p.lambda,
        "eigenvalues": eig,
        "critical": critical.map(|c| json!({"re": c.nu.re, "im": c.nu.im})),
        "h2": h2,
    });
    let path = out.json("spectrum.json", &report)?;
    let lead = nus.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    Ok(format!("spectrum: {} eigenvalues, min Re nu {lead:.6e} -> {}", nus.len(), path.display()))
}

pub fn resonance(cfg: &RunConfig, out: &Output) -> Res<String> {
    let r = &cfg.resonance;
    let p = cfg.effective_params()?;
    if r.k_min > r.k_max {
        return Err(CliError::Config("resonance.k_min exceeds resonance.k_max".into()));
    }
    if !(r.zeta0.is_finite() && r.zeta0 > 0.0) {
        return Err(CliError::Config("resonance.zeta0 must be positive".into()));
    }
    if let Some(v) = r.varpi.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(CliError::Config(format!("resonance.varpi entries must be nonnegative (got {v})")));
    }
    let ops = operators(cfg)?;
    let ks: Vec<i32> = (r.k_min..=r.k_max).filter(|k| *k != 0).collect();
    let rows = resonance_scan(&ops, &ks, &r.varpi, r.zeta0, &p)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|x| vec![x.k.to_string(), num(x.varpi), num(x.sigma_min), num(x.cond)])
        .collect();
    let path = out.csv("resonance.csv", &["k", "varpi", "sigma_min", "cond"], &table)?;
    let smin = rows.iter().map(|x| x.sigma_min).fold(f64::INFINITY, f64::min);
    Ok(format!("resonance: {} rows, smallest sigma_min {smin:.6e} -> {}", rows.len(), path.display()))
}

pub fn periodic(cfg: &RunConfig, out: &Output) -> Res<String> {
    let pc = &cfg.periodic;
    let p = cfg.effective_params()?;
    p.require_positive_varpi()?;
    let ops = operators(cfg)?;
    let zeta0 = match pc.period {
        Some(t) => frequency_from_period(t)?,
        None => pc.zeta0,
    };
    if pc.body_force.len() != ops.dim() {
        return Err(CliError::Config(format!(
            "periodic.body_force needs {} entries (got {})",
            ops.dim(),
            pc.body_force.len()
        )));
    }
    if let Some(k) = pc.modes.iter().find(|k| **k < 1 || **k as usize > pc.k_trunc) {
        return Err(CliError::Config(format!("periodic.modes entry {k} outside 1..={}", pc.k_trunc)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let forcing: Vec<ModeForcing> = pc
        .modes
        .iter()
        .map(|&k| ModeForcing {
            k,
            f: (pc.fluid_force != 0.0).then(|| {
                (0..ops.n_coupled())
                    .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * pc.fluid_force)
                    .collect()
            }),
            g: None,
            big_f: pc.body_force.iter().map(|v| C64::new(*v, 0.0)).collect(),
        })
        .collect();
    let sol = solve_periodic_linear(&ops, &p, zeta0, &forcing, pc.k_trunc)?;
    let tres = time_domain_residual(&ops, &p, &sol, &forcing, pc.samples);
    let mut manifest = Vec::new();
    for m in &sol.modes {
        let re = dense::re(&m.w);
        let im = dense::im(&m.w);
        let w_norm = (ops.inner(&re, &re, p.varpi)? + ops.inner(&im, &im, p.varpi)?).sqrt();
        let inter: Vec<f64> = m.w.iter().flat_map(|v| [v.re, v.im]).collect();
        let file = format!("mode_{:02}.bin", m.k);
        out.snapshot(&file, &ops.mesh, "mode velocity (re, im interleaved)", &inter, json!({"k": m.k, "zeta0": zeta0}))?;
        manifest.push(json!({"k": m.k, "w_norm": w_norm, "xi": m.xi, "residual": m.residual, "snapshot": file}));
    }
    let report = json!({"zeta0": zeta0, "k_trunc": pc.k_trunc, "time_residual": tres, "modes": manifest});
    let path = out.json("periodic.json", &report)?;
    Ok(format!("periodic: {} modes, time-domain residual {tres:.2e} -> {}", sol.modes.len(), path.display()))
}

fn hopf_json(h: &HopfPoint) -> Value {
    json!({
        "lambda0": h.lambda0,
        "zeta0": h.zeta0,
        "nu": h.eigpair.nu,
        "eigen_residual": h.eigpair.residual,
        "bracket": [h.bracket.0, h.bracket.1],
        "iterations": h.iterations,
        "nu_prime": h.crossing.nu_prime,
        "pairing": h.crossing.raw,
        "frame_real_part": h.crossing.frame_real_part,
        "normalization": h.frame.normalization(),
        "fd_derivative": h.fd_derivative,
        "secant_slope": h.secant_slope,
        "h2": h.h2,
        "h1": h.h1,
    })
}

fn branch_json(b: &Branch) -> Value {
    let points: Vec<Value> = b
        .points
        .iter()
        .map(|p| {
            json!({
                "epsilon": p.epsilon,
                "mu": p.mu,
                "zeta": p.zeta,
                "mode_norms": p.mode_norms,
                "side": p.side,
                "side_residual": p.side_residual,
                "residual": p.residual,
                "time_residual": p.time_residual,
                "newton_iterations": p.newton_iterations,
                "limit_defect": p.limit_defect,
            })
        })
        .collect();
    json!({
        "lambda0": b.lambda0,
        "zeta0": b.zeta0,
        "classification": b.classification,
        "limit_defects": b.limit_defects,
        "terminated": b.terminated,
        "points": points,
    })
}

/// Crossing on `[crossing] interval` and the branch over the epsilon grid.
fn crossing_and_branch(cfg: &RunConfig, ops: &Operators, out: &Output, p: &Params) -> Res<(HopfPoint, Branch)> {
    let [lo, hi] = cfg.crossing.interval;
    let hopf = locate_crossing(ops, p, (lo, hi), BaseFlow::Steady, &cfg.crossing.solver)?;
    let s0 = hopf.steady.as_ref().ok_or_else(|| Error::solver("crossing without a steady state", f64::NAN))?;
    let lin = assemble_linearization(ops, &hopf.params, s0)?;
    let solver = BranchSolver::new(ops, &lin, &hopf, cfg.branch.solver.clone())?;
    let b = trace_branch(&solver, &cfg.branch.epsilons)?;
    if cfg.branch.snapshots {
        for (i, pt) in b.points.iter().enumerate() {
            let v = &pt.state.at(0.0)[..ops.n_coupled()];
            let extra = json!({"epsilon": pt.epsilon, "mu": pt.mu, "zeta": pt.zeta, "tau": 0.0});
            out.snapshot(&format!("branch_{i:02}.bin"), &ops.mesh, "branch velocity at tau = 0 (coupled)", v, extra)?;
        }
    }
    Ok((hopf, b))
}

fn branch_outcome(b: &Branch) -> Res<()> {
    match &b.terminated {
        Some(why) => Err(Error::solver(format!("branch incomplete: {why}"), f64::NAN).into()),
        None => Ok(()),
    }
}

pub fn branch(cfg: &RunConfig, out: &Output) -> Res<String> {
    let p = cfg.effective_params()?;
    p.require_positive_varpi()?;
    let ops = operators(cfg)?;
    let (hopf, b) = crossing_and_branch(cfg, &ops, out, &p)?;
    let report = json!({"crossing": hopf_json(&hopf), "branch": branch_json(&b)});
    let path = out.json("branch.json", &report)?;
    branch_outcome(&b)?;
    Ok(format!(
        "branch: lambda0 {:.8} zeta0 {:.8}, {} points, {:?} (mu2 {:.6}) -> {}",
        hopf.lambda0,
        hopf.zeta0,
        b.points.len(),
        b.classification.kind,
        b.classification.mu2,
        path.display()
    ))
}

pub fn pipeline(cfg: &RunConfig, out: &Output) -> Res<String> {
    let p = cfg.effective_params()?;
    p.require_positive_varpi()?;
    let ops = operators(cfg)?;
    let s = steady_at(cfg, &ops, &p)?;
    let t = compute_thresholds(&ops, &s)?;
    write_steady(out, &ops, &s)?;
    let (hopf, b) = crossing_and_branch(cfg, &ops, out, &p)?;
    let report = json!({
        "steady": steady_json(&s, &t),
        "thresholds": thresholds_json(s.lambda, &t),
        "crossing": hopf_json(&hopf),
        "branch": branch_json(&b),
    });
    let path = out.json("pipeline.json", &report)?;
    branch_outcome(&b)?;
    Ok(format!(
        "pipeline: lambda2 {} at lambda {}, crossing lambda0 {:.8}, {:?} branch -> {}",
        t.lambda2.value(),
        s.lambda,
        hopf.lambda0,
        b.classification.kind,
        path.display()
    ))
}
