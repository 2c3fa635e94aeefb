use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dcgrid_core::simulator::verdict;
use dcgrid_core::sweep::{
    min_capacitance_curves, minc_csv, rmax_csv, rmax_map, tau_csv, tau_sweep, ScanMode, SweepGrid,
    SweepOptions,
};
use dcgrid_core::{
    assess_with, simulate, solve_equilibrium, step_load, Classification, JacobianStructure,
    StateVector,
};
use log::info;

use crate::config::RunConfig;
use crate::{plot, Cli, Command, EXIT_OK, EXIT_UNSTABLE};

pub fn dispatch(cli: &Cli, command: &Command, configs: &[RunConfig]) -> Result<u8> {
    match command {
        Command::Plot { input, output } => cmd_plot(input, output),
        Command::SweepRmax => cmd_sweep_rmax(cli, at_least_one(configs)?),
        Command::TuneTau => cmd_tune_tau(cli, at_least_one(configs)?),
        Command::Equilibrium => cmd_equilibrium(cli, single(configs)?),
        Command::Assess => cmd_assess(cli, single(configs)?),
        Command::Simulate => cmd_simulate(cli, single(configs)?),
        Command::StepLoad => cmd_step_load(cli, single(configs)?),
        Command::SweepMinc => cmd_sweep_minc(cli, single(configs)?),
    }
}

fn single(configs: &[RunConfig]) -> Result<&RunConfig> {
    match configs {
        [cfg] => Ok(cfg),
        [] => bail!("this command needs --config <path>"),
        _ => bail!("this command takes exactly one --config"),
    }
}

fn at_least_one(configs: &[RunConfig]) -> Result<&[RunConfig]> {
    if configs.is_empty() {
        bail!("this command needs at least one --config <path>");
    }
    Ok(configs)
}

fn structure(cli: &Cli) -> JacobianStructure {
    if cli.paper_structure {
        JacobianStructure::BlockDiagonal
    } else {
        JacobianStructure::Exact
    }
}

fn write_output(cli: &Cli, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display()))?;
    let path = cli.out.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    info!("wrote {}", path.display());
    println!("wrote {}", path.display());
    Ok(path)
}

fn sweep_grid(cli: &Cli, cfg: &RunConfig) -> SweepGrid {
    SweepGrid {
        c_values: cfg.sweep.c_farad.clone(),
        l_values: cfg.sweep.l_henry.clone(),
        d_values: cfg.sweep.d_pu.clone(),
        criterion: cli.criterion,
    }
}

fn sweep_options(cli: &Cli, cfg: &RunConfig) -> SweepOptions {
    SweepOptions {
        structure: structure(cli),
        classify: cfg.simulation.classify_options(),
        scan: if cfg.sweep.bisection {
            ScanMode::Bisection
        } else {
            ScanMode::Linear
        },
        jobs: cli.jobs,
    }
}

fn cmd_equilibrium(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    let params = cfg.params()?;
    let eq = solve_equilibrium(&params)?;
    let s = &eq.state;
    println!("operating point {}", cfg.name());
    println!("  v      = {:.6} p.u.", s.v());
    for j in 0..s.n() {
        println!(
            "  ESS {}: i_B = {:.6} p.u., alpha = {:.6}, bus-side current = {:.6} p.u.",
            j + 1,
            s.i_b()[j],
            s.alpha()[j],
            eq.i_dc[j]
        );
    }
    println!("  residual = {:.3e}", eq.residual_norm);

    let mut csv = String::from("quantity,value\n");
    for (label, x) in StateVector::labels(s.n()).iter().zip(s.as_slice()) {
        csv.push_str(&format!("{label},{x:.17e}\n"));
    }
    for (j, x) in eq.i_dc.iter().enumerate() {
        csv.push_str(&format!("i_dc_{},{x:.17e}\n", j + 1));
    }
    csv.push_str(&format!("residual_norm,{:.17e}\n", eq.residual_norm));
    write_output(cli, "equilibrium.csv", &csv)?;
    Ok(EXIT_OK)
}

fn cmd_assess(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    let params = cfg.params()?;
    let report = assess_with(&params, structure(cli))?;
    println!("operating point {}", cfg.name());
    for z in &report.eigenvalues {
        println!("  {:+.6e} {:+.6e}i", z.re, z.im);
    }
    println!("r_max = {:.6e} s^-1", report.r_max);
    let verdict = if report.ssasc {
        "stable"
    } else if report.marginal {
        "marginal"
    } else {
        "unstable"
    };
    println!("verdict: {verdict}");
    write_output(cli, "eigs.csv", &report.to_csv())?;
    Ok(if report.ssasc { EXIT_OK } else { EXIT_UNSTABLE })
}

fn cmd_simulate(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    let params = cfg.params()?;
    let opts = cfg.simulation.classify_options();
    let eq = solve_equilibrium(&params)?;
    let mut x0 = eq.state.clone();
    let iv = x0.layout().v();
    x0.as_mut_slice()[iv] *= 1.0 + opts.perturbation;
    let traj = simulate(&params, &x0, opts.t_end, &opts.controls)?;
    let v = verdict(&traj, &eq.state, &opts);
    write_output(cli, "trajectory.csv", &traj.to_csv())?;
    println!(
        "verdict: {:?} (initial deviation {:.3e}, final {:.3e}, peak {:.3e}, {:?})",
        v.classification, v.initial_deviation, v.final_deviation, v.peak_deviation, v.termination
    );
    Ok(if v.classification == Classification::Unstable {
        EXIT_UNSTABLE
    } else {
        EXIT_OK
    })
}

fn cmd_step_load(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    let Some(step) = &cfg.step_load else {
        bail!("config has no [step_load] section");
    };
    let params = cfg.params()?;
    let traj = step_load(
        &params,
        step.delta_p_pu,
        step.t_step_seconds,
        step.t_end_seconds,
        &cfg.simulation.controls(),
    )?;
    write_output(cli, "trajectory.csv", &traj.to_csv())?;
    let last = traj.final_state();
    println!(
        "load step {:+} p.u. at t = {} s: v(T) = {:.6} p.u., {:?}",
        step.delta_p_pu,
        step.t_step_seconds,
        last.v(),
        traj.termination
    );
    Ok(if traj.divergent() {
        EXIT_UNSTABLE
    } else {
        EXIT_OK
    })
}

fn cmd_sweep_minc(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    let params = cfg.params()?;
    let [lo, hi] = cfg.sweep.c_scan_farad;
    let curves = min_capacitance_curves(
        &params,
        &sweep_grid(cli, cfg),
        (lo, hi),
        cfg.sweep.c_resolution_farad,
        &sweep_options(cli, cfg),
    )?;
    for c in &curves {
        match c.c_min {
            Some(x) => println!(
                "D = {:<6} L = {:.3e} H: C_min = {:.4e} F",
                c.droop, c.l_b, x
            ),
            None => println!(
                "D = {:<6} L = {:.3e} H: not found below {hi:.4e} F",
                c.droop, c.l_b
            ),
        }
    }
    write_output(cli, "minc.csv", &minc_csv(&curves))?;
    Ok(EXIT_OK)
}

fn cmd_sweep_rmax(cli: &Cli, configs: &[RunConfig]) -> Result<u8> {
    let ops = configs
        .iter()
        .map(|c| Ok((c.name(), c.params()?)))
        .collect::<Result<Vec<_>>>()?;
    let rows = rmax_map(
        &ops,
        &sweep_grid(cli, &configs[0]),
        &sweep_options(cli, &configs[0]),
    )?;
    let stable = rows
        .iter()
        .filter(|r| r.r_max.is_some_and(|x| x < 0.0))
        .count();
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    println!("{} cells: {stable} stable, {failed} errors", rows.len());
    write_output(cli, "rmax.csv", &rmax_csv(&rows))?;
    Ok(EXIT_OK)
}

fn cmd_tune_tau(cli: &Cli, configs: &[RunConfig]) -> Result<u8> {
    let ops = configs
        .iter()
        .map(|c| c.params())
        .collect::<Result<Vec<_>>>()?;
    let cfg = &configs[0];
    let tuning = tau_sweep(
        &ops,
        &sweep_grid(cli, cfg),
        &cfg.sweep.tau_candidates_seconds,
        &sweep_options(cli, cfg),
    )?;
    for r in &tuning.results {
        println!(
            "tau = {:.3e} s: {} cells pass the eigenvalue test, {} counterexamples",
            r.tau, r.ssasc_cells, r.counterexamples
        );
    }
    write_output(cli, "tau.csv", &tau_csv(&tuning.results))?;
    let tau_star = tuning.tau_star()?;
    println!("tau* = {tau_star:.3e} s");
    Ok(EXIT_OK)
}

fn cmd_plot(input: &Path, output: &Path) -> Result<u8> {
    let text =
        fs::read_to_string(input).with_context(|| format!("cannot read {}", input.display()))?;
    let svg = plot::render(&text).with_context(|| format!("cannot plot {}", input.display()))?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(output, svg).with_context(|| format!("cannot write {}", output.display()))?;
    println!("wrote {}", output.display());
    Ok(EXIT_OK)
}
