//! The four experiment drivers: discrete simulation, robustness sweep,
//! continuum steady state and closed-form analytics.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde_json::json;

use hyperpol::analytics::{
    alpha_coefficient, attenuation, buildup_exponential, cooling_rate_discrete,
    optimal_nucleus_distance, spin_diffusion_constant, Protocol,
};
use hyperpol::continuum::{
    evaluate_rate_field, half_mass_radius, polarized_spin_count, solve_steady_state,
};
use hyperpol::dynamics::{initial_state, nv_reset_state, run_lindblad, run_unitary, TimeSeries};
use hyperpol::physics::RegisterModel;
use hyperpol::pulse::build_schedule;

use crate::config::ExperimentConfig;
use crate::output::write_csv;
use crate::CliError;

pub fn simulate(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let geometry = config.geometry()?;
    let constants = config.constants();
    let model =
        RegisterModel::from_geometry(&geometry, &constants).map_err(CliError::from_config_stage)?;
    let params = config.schedule_params()?;
    let schedule = build_schedule(&params).map_err(CliError::from_config_stage)?;
    let policy = config.reinit_policy()?;
    let noise = config.noise_model()?;
    let noise_cfg = config.noise.clone().unwrap_or_default();

    let nv = nv_reset_state(noise_cfg.nv_init_fidelity, config.reinit_form()?)
        .map_err(CliError::from_config_stage)?;
    let init = initial_state(&model, &nv).map_err(CliError::from_config_stage)?;

    let series: TimeSeries = match &noise {
        Some(n) => {
            run_lindblad(&model, &schedule, n, &init, &policy).map_err(CliError::from_run)?
        }
        None => run_unitary(&model, &schedule, &init, &policy).map_err(CliError::from_run)?,
    };

    let mut header = String::from("t_us,pol_nv,pol_electron");
    for k in 1..=series.nucleus_count() {
        header.push_str(&format!(",pol_nucleus_{k}"));
    }
    let rows = (0..series.len()).map(|i| {
        let mut row = vec![series.times[i]];
        for site in &series.sites {
            row.push(site[i]);
        }
        row
    });
    let mut files = vec![write_csv(out, "timeseries.csv", &header, rows)?];

    // analytic exponential-buildup curves at the same strobe times
    if series.nucleus_count() > 0 {
        let alpha = alpha_coefficient(
            params
                .n_harmonic
                .ok_or_else(|| CliError::config("config: sequence.n_harmonic required"))?,
        )
        .map_err(CliError::from_config_stage)?;
        let t_cycle = match policy.every_sequences {
            Some(k) => 2.0 * params.tau * k as f64,
            None => schedule.total_duration(),
        };
        let b_perp = model.b_perp_list();
        let rates: Vec<f64> = (0..b_perp.len())
            .map(|i| cooling_rate_discrete(i, t_cycle, model.a_zz, &b_perp, alpha))
            .collect();
        let mut header = String::from("t_us");
        for k in 1..=rates.len() {
            header.push_str(&format!(",pred_nucleus_{k}"));
        }
        let rows = series.times.iter().map(|&t| {
            let mut row = vec![t];
            for &u in &rates {
                row.push(buildup_exponential(0.0, u, t));
            }
            row
        });
        files.push(write_csv(out, "overlay.csv", &header, rows)?);
    }
    Ok(files)
}

pub fn sweep(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let geometry = config.geometry()?;
    let constants = config.constants();
    let model =
        RegisterModel::from_geometry(&geometry, &constants).map_err(CliError::from_config_stage)?;
    let params = config.schedule_params()?;
    let sweep_cfg = config
        .sweep
        .clone()
        .ok_or_else(|| CliError::config("config: sweep block required"))?;
    let delta_mhz = sweep_cfg.delta_nv_mhz.values()?;
    let omega_mhz = sweep_cfg.omega_error_mhz.values()?;
    let delta: Vec<f64> = delta_mhz.iter().map(|v| TAU * v).collect();
    let omega: Vec<f64> = omega_mhz.iter().map(|v| TAU * v).collect();
    let target = config.sweep_target()?;
    let horizon = sweep_cfg
        .horizon_us
        .unwrap_or(2.0 * params.tau * params.sequences as f64);

    let result =
        hyperpol::dynamics::robustness_sweep(&model, &params, &delta, &omega, target, horizon)
            .map_err(CliError::from_run)?;

    let mut header = String::from("delta_nv_mhz");
    for v in &omega_mhz {
        header.push_str(&format!(",omega_error_{v:.4}_mhz"));
    }
    let pol_rows = result.max_polarization.clone();
    let time_rows = result.time_to_extremum.clone();
    let row_iter = |matrix: Vec<Vec<f64>>| {
        let delta_mhz = delta_mhz.clone();
        matrix.into_iter().enumerate().map(move |(i, row)| {
            let mut cells = vec![delta_mhz[i]];
            cells.extend(row);
            cells
        })
    };
    let files = vec![
        write_csv(out, "sweep_polarization.csv", &header, row_iter(pol_rows))?,
        write_csv(out, "sweep_time.csv", &header, row_iter(time_rows))?,
    ];
    Ok(files)
}

pub fn continuum(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let scenario = config.scenario()?;
    let protocol = config.protocol()?;
    let c = config.continuum.clone().unwrap_or_default();

    let b0 = scenario.b0(protocol).map_err(CliError::from_run)?;
    let cycle = scenario
        .optimal_cycle(protocol, b0)
        .map_err(CliError::from_config_stage)?;
    let grid = scenario.pde_grid();
    let source = match protocol {
        Protocol::Mediated => scenario.geometry.electron_position_nm,
        Protocol::Direct => scenario.geometry.nv_position_nm(),
    };
    let field = evaluate_rate_field(
        &grid,
        &scenario.geometry,
        &scenario.constants,
        scenario.gamma_n_mhz_per_g,
        protocol,
        cycle.t_cycle,
        scenario.alpha(protocol).map_err(CliError::from_config_stage)?,
        b0,
        &scenario.practicalities(protocol),
    )
    .map_err(CliError::from_run)?;
    let diffusion = c
        .diffusion_nm2_per_s
        .unwrap_or_else(|| spin_diffusion_constant(scenario.density_nm3, scenario.gamma_n_mhz_per_g));
    let (p, record) = solve_steady_state(
        &field,
        scenario.gamma1_per_s,
        diffusion,
        scenario.steady_state_tolerance,
    )
    .map_err(CliError::from_run)?;
    let n_polarized = polarized_spin_count(&p, &grid);
    let r_half = half_mass_radius(&p, &grid, &source);

    // xy slice at the diamond interface (first cell layer)
    let header = "x_nm,y_nm,z_nm,polarization";
    let xy_rows = (0..grid.ny).flat_map(|j| {
        let (p, grid) = (&p, &grid);
        (0..grid.nx).map(move |i| {
            let c = grid.cell_center(i, j, 0);
            vec![c.x, c.y, c.z, p.values[grid.index(i, j, 0)]]
        })
    });
    let mut files = vec![write_csv(out, "slice_xy.csv", header, xy_rows)?];

    // xz slice through the source
    let j_mid = (0..grid.ny)
        .min_by(|&a, &b| {
            let da = (grid.cell_center(0, a, 0).y - source.y).abs();
            let db = (grid.cell_center(0, b, 0).y - source.y).abs();
            da.partial_cmp(&db).unwrap()
        })
        .unwrap_or(grid.ny / 2);
    let xz_rows = (0..grid.nz).flat_map(|k| {
        let (p, grid) = (&p, &grid);
        (0..grid.nx).map(move |i| {
            let c = grid.cell_center(i, j_mid, k);
            vec![c.x, c.y, c.z, p.values[grid.index(i, j_mid, k)]]
        })
    });
    files.push(write_csv(out, "slice_xz.csv", header, xz_rows)?);

    files.push(write_csv(
        out,
        "buildup.csv",
        "t_s,n_polarized",
        record.n_history.iter().map(|&(t, n)| vec![t, n]),
    )?);

    files.push(crate::output::write_json(
        out,
        "convergence.json",
        &json!({
            "protocol": match protocol { Protocol::Mediated => "mediated", Protocol::Direct => "direct" },
            "b0_mhz": b0 / TAU,
            "sequences": cycle.sequences,
            "t_cycle_us": cycle.t_cycle,
            "diffusion_nm2_per_s": diffusion,
            "time_s": record.time_s,
            "steps": record.steps,
            "residual_per_s": record.residual_per_s,
            "n_polarized": n_polarized,
            "half_mass_radius_nm": r_half,
        }),
    )?);

    if !c.t2_sweep_us.is_empty() {
        let sweep = scenario
            .t2_sweep(&c.t2_sweep_us)
            .map_err(CliError::from_run)?;
        files.push(write_csv(
            out,
            "t2_sweep.csv",
            "t2_electron_us,n_polarized",
            sweep.into_iter().map(|(t2, n)| vec![t2, n]),
        )?);
    }
    Ok(files)
}

pub fn analytics(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let scenario = config.scenario()?;
    let a_zz = scenario.a_zz().map_err(CliError::from_config_stage)?;
    let mut report = json!({
        "a_zz_mhz": a_zz / TAU,
        "electron_position_nm": [
            scenario.geometry.electron_position_nm.x,
            scenario.geometry.electron_position_nm.y,
            scenario.geometry.electron_position_nm.z,
        ],
        "diffusion_nm2_per_s":
            spin_diffusion_constant(scenario.density_nm3, scenario.gamma_n_mhz_per_g),
        "optimal_nucleus_distance_nm": optimal_nucleus_distance(
            (scenario.geometry.electron_position_nm - scenario.geometry.nv_position_nm()).norm(),
            alpha_coefficient(3).map_err(CliError::from_config_stage)?,
            scenario.gamma_n_mhz_per_g,
            scenario.constants.gamma_e_mhz_per_g,
        ),
    });

    for protocol in [Protocol::Mediated, Protocol::Direct] {
        let tau = scenario.tau(protocol).map_err(CliError::from_config_stage)?;
        let b0 = scenario.b0(protocol).map_err(CliError::from_run)?;
        let cycle = scenario
            .optimal_cycle(protocol, b0)
            .map_err(CliError::from_config_stage)?;
        let key = match protocol {
            Protocol::Mediated => "mediated",
            Protocol::Direct => "direct",
        };
        report[key] = json!({
            "tau_us": tau,
            "alpha": scenario.alpha(protocol).map_err(CliError::from_config_stage)?,
            "b0_mhz": b0 / TAU,
            "optimal_sequences": cycle.sequences,
            "optimal_t_cycle_us": cycle.t_cycle,
            "continuous_t_cycle_us": cycle.t_continuous,
        });
    }

    if let Some(seq) = &config.sequence {
        if let Some(omega_mhz) = seq.omega_mhz {
            let tau = scenario
                .tau(config.protocol()?)
                .map_err(CliError::from_config_stage)?;
            report["attenuation"] = json!(
                attenuation(TAU * omega_mhz, tau).map_err(CliError::from_config_stage)?
            );
        }
    }

    Ok(vec![crate::output::write_json(out, "analytics.json", &report)?])
}
