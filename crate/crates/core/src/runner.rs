//! Subcommand execution: builds the artifacts for a [`RunConfig`] inside a
//! dedicated worker pool and writes them with manifests.

use std::path::PathBuf;
use std::time::Instant;

use serde_json::{json, Map, Value};

use crate::analytics::{p_star, CriticalPoints, ExponentReport, MomentBound};
use crate::brw::{fit_max_medians, moment_blowup_check, run_brw, BrwMode, BrwParams, Verdict};
use crate::config::{
    AnalyticsConfig, BrwCliMode, BrwConfig, LaplaceConfig, LaplaceInit, MomentsConfig, Params, PrbmConfig,
    RgChainConfig, RunConfig, SimulateLmeConfig, ThetaCheckConfig,
};
use crate::error::{LabError, Result};
use crate::laplace::{iterate_phi, moments_from_phi, solve_stationary, stationary_residual, GridFunction};
use crate::lme::{self, LmeParams};
use crate::moments::{factorial_bound_constant, moment_table};
use crate::output::{real, version_string, write_outputs, Artifact, Cell, CsvTable, RunManifest};
use crate::prbm::estimate_dq;
use crate::rgchain::{run_flow, RgParams};
use crate::rng::derive_stream;
use crate::stats::ks_distance;
use crate::theta::ThetaLaw;

/// Artifacts plus the numerical tolerances they were produced with.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub tolerances: Value,
}

/// Computes the artifacts of `cfg` on `threads` workers without touching disk.
pub fn compute(cfg: &RunConfig, threads: usize) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LabError::Config(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(|| match &cfg.params {
        Params::Analytics(p) => analytics(p),
        Params::ThetaCheck(p) => theta_check(p, cfg.seed),
        Params::SimulateLme(p) => simulate_lme(p, cfg.seed),
        Params::Moments(p) => moments(p),
        Params::Laplace(p) => laplace(p),
        Params::Brw(p) => brw(p, cfg.seed),
        Params::RgChain(p) => rg_chain(p, cfg.seed),
        Params::Prbm(p) => prbm(p, cfg.seed),
    })
}

/// Runs `cfg` and writes its outputs under `cfg.out_dir`.
pub fn execute(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let threads = cfg.effective_threads()?;
    let start = Instant::now();
    let out = compute(cfg, threads)?;
    let manifest = RunManifest {
        file: String::new(),
        version: version_string(),
        subcommand: cfg.subcommand.name().into(),
        seed: cfg.seed,
        threads,
        config: serde_json::to_value(cfg).map_err(|e| LabError::Contract(e.to_string()))?,
        tolerances: out.tolerances,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_outputs(&out.artifacts, &cfg.out_dir, &manifest)
}

fn bound_value(b: MomentBound<f64>) -> Value {
    match b {
        MomentBound::Unbounded => json!("unbounded"),
        MomentBound::Finite(p) => real(p),
    }
}

fn analytics(p: &AnalyticsConfig) -> Result<RunOutput> {
    let rep = ExponentReport::<f64>::new(p.q, p.b)?;
    let crit = CriticalPoints::<f64>::compute(p.kmax)?;
    let q_k: Map<String, Value> = crit.q_k.iter().map(|(k, v)| (k.to_string(), real(*v))).collect();
    let doc = json!({
        "q": real(rep.q),
        "b": real(rep.b),
        "T": real(rep.t),
        "Tprime": real(rep.t_prime),
        "H": real(rep.h),
        "d": real(rep.d),
        "q_c": real(crit.q_c),
        "p_star": if p.q < crit.q_c { bound_value(p_star(p.q)?) } else { json!("undefined") },
        "q_k": q_k,
    });
    Ok(RunOutput {
        artifacts: vec![Artifact::json("analytics.json", doc)],
        tolerances: json!({"root_abs_f": 1e-12, "quadrature_rel": 1e-10}),
    })
}

fn theta_check(p: &ThetaCheckConfig, seed: u64) -> Result<RunOutput> {
    let mut table = CsvTable::new(["epsilon", "ks_distance", "mean_sin2", "predicted"]);
    for (i, &eps) in p.epsilons.iter().enumerate() {
        let law = ThetaLaw::new(eps)?;
        let mut rng = derive_stream(seed, &[0x5443, i as u64]);
        let mut draws: Vec<f64> = (0..p.draws).map(|_| law.sample(&mut rng)).collect();
        let mean_sin2 = draws.iter().map(|t| t.sin().powi(2)).sum::<f64>() / p.draws as f64;
        let ks = ks_distance(&mut draws, |t| law.cdf(t).unwrap_or(f64::NAN));
        let predicted = law.expect(|t| t.sin().powi(2)).value;
        table.push(vec![eps.into(), ks.into(), mean_sin2.into(), predicted.into()]);
    }
    Ok(RunOutput {
        artifacts: vec![Artifact::csv("theta_check.csv", table)],
        tolerances: json!({"quadrature_rel": 1e-10}),
    })
}

fn power_label(p: f64) -> String {
    format!("{p}")
}

fn simulate_lme(p: &SimulateLmeConfig, seed: u64) -> Result<RunOutput> {
    let params = LmeParams {
        q: p.q,
        b: p.b,
        n_max: p.n_max,
        pool_size: p.pool_size,
        seed,
        track_powers: p.track_powers.clone(),
        checkpoints: p.checkpoints.clone(),
    };
    let traj = lme::run::<f64>(&params)?;
    let mut header = vec!["n".to_string(), "logZ".to_string()];
    for &pw in &p.track_powers {
        header.push(format!("moment_{}", power_label(pw)));
        header.push(format!("se_{}", power_label(pw)));
    }
    let mut table = CsvTable::new(header);
    for cp in &traj.checkpoints {
        let mut row = vec![Cell::from(cp.n), Cell::from(cp.log_z)];
        for m in &cp.moments {
            row.push(m.value.into());
            row.push(m.se.into());
        }
        table.push(row);
    }
    // Fits use the upper two decades of checkpoints.
    let n_hi = p.n_max;
    let n_lo = (n_hi / 100).max(2);
    let tq = crate::analytics::t_of_q(p.q)?;
    let mut slopes = Vec::new();
    for (i, &pw) in p.track_powers.iter().enumerate() {
        let fit = traj.log_moment_slope(i, n_lo, n_hi);
        let predicted = -p.b * (crate::analytics::t_of_q(pw * p.q)? - pw * tq);
        slopes.push(json!({
            "p": real(pw),
            "slope": fit.map(|f| real(f.0)).unwrap_or(Value::Null),
            "se": fit.map(|f| real(f.1)).unwrap_or(Value::Null),
            "bound": real(predicted),
        }));
    }
    let last = traj.last();
    let summary = json!({
        "q": real(p.q),
        "b": real(p.b),
        "fit_range": [n_lo, n_hi],
        "final_n": last.n,
        "final_logZ": real(last.log_z),
        "logZ_over_ln_n": if last.n > 1 { real(last.log_z / (last.n as f64).ln()) } else { Value::Null },
        "minus_b_T": real(-p.b * tq),
        "moment_slopes": slopes,
    });
    Ok(RunOutput {
        artifacts: vec![
            Artifact::csv("simulate_lme.csv", table),
            Artifact::json("simulate_lme.json", summary),
        ],
        tolerances: json!({"tn_quadrature_abs": 1e-14, "jackknife_blocks": lme::BLOCKS}),
    })
}

fn moments(p: &MomentsConfig) -> Result<RunOutput> {
    let table = moment_table(p.q, p.kmax)?;
    let bound = if p.q < 1.0 {
        Some(factorial_bound_constant(p.q, &table)?)
    } else {
        None
    };
    let mut csv = CsvTable::new(["k", "M_k", "denominator", "bound_Ckk!"]);
    let mut ln_fact = 0.0;
    for (i, &m) in table.m.iter().enumerate() {
        let k = i + 1;
        ln_fact += (k as f64).ln();
        let b = match &bound {
            Some(fb) => Cell::Real((k as f64 * fb.c.ln() + ln_fact).exp()),
            None => Cell::Empty,
        };
        csv.push(vec![k.into(), m.into(), table.denominators[i].into(), b]);
    }
    let doc = json!({
        "q": real(p.q),
        "kmax": p.kmax,
        "valid_upto": table.valid_upto,
        "C": bound.as_ref().map(|b| real(b.c)).unwrap_or(Value::Null),
        "k0": bound.as_ref().map(|b| json!(b.k0)).unwrap_or(Value::Null),
        "bound_holds": bound.as_ref().map(|b| json!(b.holds)).unwrap_or(Value::Null),
    });
    Ok(RunOutput {
        artifacts: vec![Artifact::csv("moments.csv", csv), Artifact::json("moments.json", doc)],
        tolerances: json!({"pair_integral_rel": 1e-11}),
    })
}

fn laplace(p: &LaplaceConfig) -> Result<RunOutput> {
    let init = match p.init {
        LaplaceInit::Exponential => GridFunction::exponential(),
        LaplaceInit::Rational => GridFunction::rational(),
    };
    let it = iterate_phi(p.q, p.b, 1, 1 + p.iterations, &init)?;
    let sol = solve_stationary(p.q, &it.grid)?;
    let phi = sol.grid.phi();
    let mut csv = CsvTable::new(["t", "phi", "residual"]);
    for (&t, &f) in sol.grid.t_grid.iter().zip(&phi) {
        csv.push(vec![t.into(), f.into(), stationary_residual(p.q, &sol.grid, t)?.into()]);
    }
    let fit = moments_from_phi(&sol.grid, 4)?;
    let doc = json!({
        "q": real(p.q),
        "b": real(p.b),
        "init": p.init,
        "iterations": it.steps,
        "iteration_last_change": real(it.last_change),
        "max_projection": real(it.max_projection),
        "newton_steps": sol.newton_steps,
        "discrete_residual": real(sol.discrete_residual),
        "moments": fit.moments.iter().map(|&m| real(m)).collect::<Vec<_>>(),
        "moment_fit_rms": real(fit.rms_residual),
        "ill_conditioned": fit.ill_conditioned,
    });
    Ok(RunOutput {
        artifacts: vec![Artifact::csv("laplace.csv", csv), Artifact::json("laplace.json", doc)],
        tolerances: json!({"newton_residual": 1e-11, "residual_quadrature_abs": 1e-12, "residual_quadrature_rel": 1e-10}),
    })
}

fn brw(p: &BrwConfig, seed: u64) -> Result<RunOutput> {
    let beta = p.beta();
    if p.mode == BrwCliMode::Blowup {
        let r = moment_blowup_check(beta, p.p, p.replicas, seed)?;
        let mut csv = CsvTable::new(["beta", "p", "moment_20", "moment_40", "threshold", "verdict"]);
        let verdict = match r.verdict {
            Verdict::Stable => "stable",
            Verdict::Growing => "growing",
        };
        csv.push(vec![
            beta.into(),
            p.p.into(),
            r.moment_20.into(),
            r.moment_40.into(),
            r.threshold.into(),
            verdict.into(),
        ]);
        return Ok(RunOutput {
            artifacts: vec![Artifact::csv("brw_blowup.csv", csv)],
            tolerances: json!({"growth_factor": 2.0}),
        });
    }
    let (mode, name) = match p.mode {
        BrwCliMode::Cascade => (BrwMode::Cascade, "cascade"),
        BrwCliMode::Derivative => (BrwMode::Derivative, "derivative"),
        _ => (BrwMode::Max, "max"),
    };
    let params = BrwParams {
        beta,
        depth: p.depth,
        replicas: p.replicas,
        seed,
    };
    let records = run_brw(&params, mode)?;
    let mut csv = CsvTable::new(["n", "mean", "mean_se", "median", "m2", "m2_se"]);
    for r in &records {
        csv.push(vec![
            r.n.into(),
            r.mean.value.into(),
            r.mean.se.into(),
            r.median.into(),
            r.m2.value.into(),
            r.m2.se.into(),
        ]);
    }
    let mut artifacts = vec![Artifact::csv(&format!("brw_{name}.csv"), csv)];
    if mode == BrwMode::Max && p.depth >= 13 {
        let fit = fit_max_medians(&records, 10, p.depth);
        artifacts.push(Artifact::json(
            "brw_max.json",
            json!({
                "beta": real(beta),
                "fit_range": [10, p.depth],
                "velocity": real(fit.velocity),
                "velocity_se": real(fit.velocity_se),
                "log_coefficient": real(fit.log_coefficient),
                "log_coefficient_se": real(fit.log_coefficient_se),
            }),
        ));
    }
    Ok(RunOutput {
        artifacts,
        tolerances: json!({}),
    })
}

fn rg_chain(p: &RgChainConfig, seed: u64) -> Result<RunOutput> {
    let params = RgParams {
        n_sites: p.n_sites,
        b: p.b,
        a: p.a,
        n_max: p.n_max,
        q_list: p.q_list.clone(),
        seed,
        replicas: p.replicas,
    };
    let rec = run_flow(&params)?;
    let mut header = vec!["n".to_string()];
    for &q in &p.q_list {
        header.push(format!("mean_lnP_{q}"));
    }
    header.extend(["resonance_density", "beta_emp", "overlap_fraction"].map(String::from));
    let mut csv = CsvTable::new(header);
    for cp in &rec.checkpoints {
        let mut row = vec![Cell::from(cp.n)];
        row.extend(cp.mean_ln_p.iter().map(|&x| Cell::Real(x)));
        match rec.scales.iter().find(|s| s.m == cp.n) {
            Some(s) => row.extend([s.density.into(), s.beta_emp.into(), s.overlap_fraction.into()]),
            None => row.extend([Cell::Empty, Cell::Empty, Cell::Empty]),
        }
        csv.push(row);
    }
    let (m_lo, m_hi) = (10.min(p.n_max), p.n_max);
    let mut flows = Vec::new();
    for (i, &q) in p.q_list.iter().enumerate() {
        flows.push(json!({
            "q": real(q),
            "slope": rec.ipr_slope(i, m_lo, m_hi).map(real).unwrap_or(Value::Null),
            "predicted": real(rec.predicted_slope(q, m_lo, m_hi)?),
        }));
    }
    let doc = json!({
        "n_sites": p.n_sites,
        "b": real(p.b),
        "a": real(p.a),
        "fit_range": [m_lo, m_hi],
        "beta_emp": real(rec.mean_beta(m_lo, m_hi)),
        "rotations": rec.rotations,
        "max_norm_error": real(rec.max_norm_error),
        "max_gap_error": real(rec.max_gap_error),
        "max_disjoint_ipr_error": real(rec.max_disjoint_ipr_error),
        "max_orthogonality_error": real(rec.max_orthogonality_error),
        "flows": flows,
    });
    Ok(RunOutput {
        artifacts: vec![Artifact::csv("rg_chain.csv", csv), Artifact::json("rg_chain.json", doc)],
        tolerances: json!({"exactness": 1e-12}),
    })
}

fn prbm(p: &PrbmConfig, seed: u64) -> Result<RunOutput> {
    let (fits, diag) = estimate_dq(p.b, &p.n_list, p.realizations, seed, &p.q_list)?;
    let mut csv = CsvTable::new(["N", "q", "mean_lnP", "se"]);
    for fit in &fits {
        for s in &fit.sizes {
            csv.push(vec![s.n.into(), s.q.into(), s.mean_ln_p.into(), s.se.into()]);
        }
    }
    let doc = json!({
        "b": real(p.b),
        "n_list": p.n_list,
        "realizations": p.realizations,
        "scaled_reconstruction": real(diag.scaled_reconstruction),
        "orthonormality": real(diag.orthonormality),
        "fits": fits.iter().map(|f| json!({
            "q": real(f.q),
            "slope": real(f.slope),
            "stderr": real(f.stderr),
            "d": real(f.d),
            "residuals": f.residuals.iter().map(|&r| real(r)).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    Ok(RunOutput {
        artifacts: vec![Artifact::csv("prbm.csv", csv), Artifact::json("prbm.json", doc)],
        tolerances: json!({"reconstruction_scaled": 1e-9, "orthonormality": 1e-10}),
    })
}
