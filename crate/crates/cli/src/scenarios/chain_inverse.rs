//! Joint state–parameter estimation on the four-mass chain with the 3–4
//! connection stiffness unknown. One truth simulation is shared by all
//! replicates; each replicate draws fresh accelerometer noise and feeds
//! every compared method the identical measurement rows. Variants toggle
//! deterministic vs probabilistic interface messages, a learned interface
//! law, and the monolithic single-node reference.

use kalgraph::metrics::{coverage, nll, rmse};
use kalgraph::sindy::{fit_interface_law, reconstruct_kinematics, SindyConfig};
use kalgraph::testbeds::chain::{
    acceleration_measurements, chain4_central_graph, chain4_graph, Chain4Spec, ChainNodeOptions,
    ChainSystem, ChainTruth, CHAIN4_BACK, CHAIN4_CENTRAL, CHAIN4_CENTRAL_KAPPA_INDEX,
    CHAIN4_FRONT, CHAIN4_KAPPA_INDEX,
};
use kalgraph::{
    run_schedule, InterfaceLaw, MeasurementSet, MessageMode, MetricReport, NodeId, RunTrace,
};

use super::{mean, replicate_rng, steps_for};
use crate::{CliError, RunConfig, ScenarioOutput, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Distributed deterministic messages vs the centralized reference.
    Deterministic,
    /// Probabilistic vs deterministic messages, both distributed.
    Probabilistic,
    /// Probabilistic messages through a law learned from interface data.
    Learned,
    /// Centralized reference alone.
    CentralizedOnly,
}

/// One method's outcome on one replicate.
struct RepStats {
    rmse: f64,
    coverage: f64,
    nll: f64,
    k4_hat: f64,
    k4_rel_err: f64,
    runtime: f64,
}

pub fn run(cfg: &RunConfig, variant: Variant) -> Result<ScenarioOutput, CliError> {
    let c = &cfg.chain;
    let chain = ChainSystem::uniform(4, c.mass, c.stiffness, c.damping, c.dt)?;
    let steps = steps_for(c.t_final, c.dt);
    let mut init = vec![0.0; 8];
    init[0] = c.x1_init;
    init[4] = c.v1_init;
    let truth = chain.simulate(&init, &|_| vec![0.0; 4], steps)?;

    let mut out = ScenarioOutput::default();

    let learned_law = if variant == Variant::Learned {
        let (law, sindy_report) = train_interface_law(cfg, &chain)?;
        out.metrics.push(sindy_report);
        Some(law)
    } else {
        None
    };

    // (label, message mode, law override, centralized?)
    let methods: Vec<(&str, MessageMode, Option<InterfaceLaw>, bool)> = match variant {
        Variant::Deterministic => vec![
            ("distributed", MessageMode::Deterministic, None, false),
            ("centralized", MessageMode::Deterministic, None, true),
        ],
        Variant::Probabilistic => vec![
            ("jacobi-prob", MessageMode::Probabilistic, None, false),
            ("jacobi-det", MessageMode::Deterministic, None, false),
        ],
        Variant::Learned => vec![(
            "learned-prob",
            MessageMode::Probabilistic,
            learned_law.clone(),
            false,
        )],
        Variant::CentralizedOnly => {
            vec![("centralized", MessageMode::Deterministic, None, true)]
        }
    };

    let mut reports: Vec<MetricReport> = methods
        .iter()
        .map(|(label, ..)| MetricReport::new(*label))
        .collect();
    let mut stats_by_method: Vec<Vec<RepStats>> = methods.iter().map(|_| Vec::new()).collect();

    for r in 0..cfg.replicates {
        let rng = replicate_rng(cfg, r);
        let mut rng_front = rng.derive("meas-a1");
        let mut rng_back = rng.derive("meas-a4");
        let a1 = acceleration_measurements(&truth, 0, c.accel_noise_std, &mut rng_front)?;
        let a4 = acceleration_measurements(&truth, 3, c.accel_noise_std, &mut rng_back)?;

        for (m, (label, mode, law, central)) in methods.iter().enumerate() {
            let spec = chain4_spec(cfg, &chain, *mode, law.clone())?;
            let (trace, stats) = if *central {
                let graph = chain4_central_graph(&spec, &init)?;
                let mut meas = MeasurementSet::empty(steps);
                let rows: Vec<Vec<f64>> = a1
                    .iter()
                    .zip(&a4)
                    .map(|(f, b)| vec![f[0], b[0]])
                    .collect();
                meas.insert_dense(CHAIN4_CENTRAL, rows)?;
                let trace = run_schedule(&graph, &cfg.schedule(steps), &meas)?;
                let stats = centralized_stats(&trace, &truth, &spec)?;
                (trace, stats)
            } else {
                let graph = chain4_graph(&spec, &init)?;
                let mut meas = MeasurementSet::empty(steps);
                meas.insert_dense(CHAIN4_FRONT, a1.clone())?;
                meas.insert_dense(CHAIN4_BACK, a4.clone())?;
                let trace = run_schedule(&graph, &cfg.schedule(steps), &meas)?;
                let stats = distributed_stats(&trace, &truth, &spec)?;
                (trace, stats)
            };

            if r == 0 {
                out.tables.push(kappa_table(label, &trace, &spec, *central)?);
                out.tables.push(state_table(label, &trace, *central)?);
            }
            let rep = &mut reports[m];
            rep.insert(format!("state_rmse_rep{r}"), stats.rmse);
            rep.insert(format!("coverage95_rep{r}"), stats.coverage);
            rep.insert(format!("nll_rep{r}"), stats.nll);
            rep.insert(format!("k4_hat_rep{r}"), stats.k4_hat);
            rep.insert(format!("k4_rel_err_rep{r}"), stats.k4_rel_err);
            rep.insert(format!("runtime_seconds_rep{r}"), stats.runtime);
            stats_by_method[m].push(stats);
        }
    }

    for (rep, stats) in reports.iter_mut().zip(&stats_by_method) {
        rep.insert("replicates", stats.len() as f64);
        rep.insert("state_rmse_mean", mean(&stats.iter().map(|s| s.rmse).collect::<Vec<_>>()));
        rep.insert(
            "coverage95_mean",
            mean(&stats.iter().map(|s| s.coverage).collect::<Vec<_>>()),
        );
        rep.insert("nll_mean", mean(&stats.iter().map(|s| s.nll).collect::<Vec<_>>()));
        rep.insert(
            "k4_rel_err_mean",
            mean(&stats.iter().map(|s| s.k4_rel_err).collect::<Vec<_>>()),
        );
        rep.insert(
            "runtime_seconds_mean",
            mean(&stats.iter().map(|s| s.runtime).collect::<Vec<_>>()),
        );
    }
    out.metrics.extend(reports);
    Ok(out)
}

fn chain4_spec(
    cfg: &RunConfig,
    chain: &ChainSystem,
    mode: MessageMode,
    law: Option<InterfaceLaw>,
) -> Result<Chain4Spec, CliError> {
    let c = &cfg.chain;
    let mut spec = Chain4Spec::new(chain.clone())?;
    spec.kappa_init = c.kappa_init;
    spec.kappa_prior_std = c.kappa_prior_std;
    spec.q_kappa = c.q_kappa;
    spec.opts = ChainNodeOptions {
        q_state: c.q_state,
        r_accel: c.accel_noise_std * c.accel_noise_std,
        p0_state: c.p0_state,
        mode,
        ..ChainNodeOptions::default()
    };
    spec.law = law;
    Ok(spec)
}

fn node_trace<'a>(trace: &'a RunTrace, id: &str) -> Result<&'a kalgraph::NodeTrace, CliError> {
    trace
        .node(&NodeId::from(id))
        .ok_or_else(|| CliError::Core(kalgraph::Error::MissingRegisterEntry { node: id.into() }))
}

/// Pooled state error statistics over every physical state and every step
/// after the exactly-known initial label.
fn pooled_stats(
    errors: Vec<f64>,
    stds: Vec<f64>,
    k4_hat: f64,
    k4_true: f64,
    runtime: f64,
) -> Result<RepStats, CliError> {
    let zeros = vec![0.0; errors.len()];
    Ok(RepStats {
        rmse: rmse(&errors, &zeros)?,
        coverage: coverage(&errors, &stds, 0.95)?,
        nll: nll(&errors, &stds)?,
        k4_hat,
        k4_rel_err: (k4_hat - k4_true).abs() / k4_true,
        runtime,
    })
}

fn distributed_stats(
    trace: &RunTrace,
    truth: &ChainTruth,
    spec: &Chain4Spec,
) -> Result<RepStats, CliError> {
    let front = node_trace(trace, CHAIN4_FRONT)?;
    let back = node_trace(trace, CHAIN4_BACK)?;
    // front [x1, x2, v1, v2] and back [x3, x4, v3, v4, κ] against the
    // truth layout [x1..x4, v1..v4].
    let map: [(&kalgraph::NodeTrace, usize, usize); 8] = [
        (front, 0, 0),
        (front, 1, 1),
        (back, 0, 2),
        (back, 1, 3),
        (front, 2, 4),
        (front, 3, 5),
        (back, 2, 6),
        (back, 3, 7),
    ];
    let steps = truth.states.len() - 1;
    let mut errors = Vec::with_capacity(8 * steps);
    let mut stds = Vec::with_capacity(8 * steps);
    for i in 1..=steps {
        for (node, local, global) in map {
            errors.push(node.means[i][local] - truth.states[i][global]);
            stds.push(node.stds[i][local]);
        }
    }
    let k4_hat = back.means[steps][CHAIN4_KAPPA_INDEX] * spec.k4_ref;
    pooled_stats(errors, stds, k4_hat, spec.chain.springs[3], trace.sweep_seconds)
}

fn centralized_stats(
    trace: &RunTrace,
    truth: &ChainTruth,
    spec: &Chain4Spec,
) -> Result<RepStats, CliError> {
    let node = node_trace(trace, CHAIN4_CENTRAL)?;
    let steps = truth.states.len() - 1;
    let mut errors = Vec::with_capacity(8 * steps);
    let mut stds = Vec::with_capacity(8 * steps);
    for i in 1..=steps {
        for j in 0..8 {
            errors.push(node.means[i][j] - truth.states[i][j]);
            stds.push(node.stds[i][j]);
        }
    }
    let k4_hat = node.means[steps][CHAIN4_CENTRAL_KAPPA_INDEX] * spec.k4_ref;
    pooled_stats(errors, stds, k4_hat, spec.chain.springs[3], trace.sweep_seconds)
}

fn kappa_table(
    label: &str,
    trace: &RunTrace,
    spec: &Chain4Spec,
    central: bool,
) -> Result<Table, CliError> {
    let (id, idx) = if central {
        (CHAIN4_CENTRAL, CHAIN4_CENTRAL_KAPPA_INDEX)
    } else {
        (CHAIN4_BACK, CHAIN4_KAPPA_INDEX)
    };
    let node = node_trace(trace, id)?;
    let mut table = Table::new(
        format!("k4_{label}"),
        vec!["t".into(), "k4_hat".into(), "k4_std".into()],
    );
    for i in 0..trace.t.len() {
        table.push(vec![
            trace.t[i],
            node.means[i][idx] * spec.k4_ref,
            node.stds[i][idx] * spec.k4_ref,
        ]);
    }
    Ok(table)
}

fn state_table(label: &str, trace: &RunTrace, central: bool) -> Result<Table, CliError> {
    let mut table = Table::new(
        format!("states_{label}"),
        std::iter::once("t".to_string())
            .chain((1..=4).map(|k| format!("x{k}")))
            .chain((1..=4).map(|k| format!("v{k}")))
            .collect(),
    );
    if central {
        let node = node_trace(trace, CHAIN4_CENTRAL)?;
        for i in 0..trace.t.len() {
            let mut row = vec![trace.t[i]];
            row.extend_from_slice(&node.means[i][..8]);
            table.push(row);
        }
    } else {
        let front = node_trace(trace, CHAIN4_FRONT)?;
        let back = node_trace(trace, CHAIN4_BACK)?;
        for i in 0..trace.t.len() {
            table.push(vec![
                trace.t[i],
                front.means[i][0],
                front.means[i][1],
                back.means[i][0],
                back.means[i][1],
                front.means[i][2],
                front.means[i][3],
                back.means[i][2],
                back.means[i][3],
            ]);
        }
    }
    Ok(table)
}

/// Learn the cut-connection law from interface accelerometer data: noisy
/// a₂/a₃ series are integrated and high-passed into relative kinematics,
/// regressed against the true interface force with the sparse-regression
/// fitter; the leading warmup seconds are excluded from the fit.
fn train_interface_law(
    cfg: &RunConfig,
    chain: &ChainSystem,
) -> Result<(InterfaceLaw, MetricReport), CliError> {
    let c = &cfg.chain;
    let s = &cfg.sindy;
    let steps = steps_for(s.train_t_final, c.dt);
    let mut init = vec![0.0; 8];
    init[0] = c.x1_init;
    init[4] = c.v1_init;
    let clock = std::time::Instant::now();
    let truth = chain.simulate(&init, &|_| vec![0.0; 4], steps)?;

    let rng = kalgraph::numerics::Rng::from_seed(cfg.seeds[0]).derive("sindy-train");
    let mut rng_a2 = rng.derive("a2");
    let mut rng_a3 = rng.derive("a3");
    let a2: Vec<f64> = acceleration_measurements(&truth, 1, c.accel_noise_std, &mut rng_a2)?
        .into_iter()
        .map(|row| row[0])
        .collect();
    let a3: Vec<f64> = acceleration_measurements(&truth, 2, c.accel_noise_std, &mut rng_a3)?
        .into_iter()
        .map(|row| row[0])
        .collect();

    let (v2, x2) = reconstruct_kinematics(&a2, c.dt, s.cutoff_hz)?;
    let (v3, x3) = reconstruct_kinematics(&a3, c.dt, s.cutoff_hz)?;
    let dx: Vec<f64> = x2.iter().zip(&x3).map(|(a, b)| a - b).collect();
    let dv: Vec<f64> = v2.iter().zip(&v3).map(|(a, b)| a - b).collect();
    // Regression target: the true cut force at the same labels (1..=steps)
    // as the measurement rows.
    let (k3, c3) = (chain.springs[2], chain.dampers[2]);
    let force: Vec<f64> = truth.states[1..]
        .iter()
        .map(|st| k3 * (st[1] - st[2]) + c3 * (st[5] - st[6]))
        .collect();

    let trim = steps_for(s.trim_s, c.dt).min(dx.len().saturating_sub(2));
    let fit_cfg = SindyConfig {
        cutoff_hz: s.cutoff_hz,
        threshold: s.threshold,
        max_iters: s.max_iters,
    };
    let law = fit_interface_law(&dx[trim..], &dv[trim..], &force[trim..], &fit_cfg)?;
    let seconds = clock.elapsed().as_secs_f64();

    let mut report = MetricReport::new("sindy");
    let coeffs = law.coeffs;
    report.insert("k_hat", coeffs[0]);
    report.insert("c_hat", coeffs[1]);
    report.insert("k_rel_err", (coeffs[0] - k3).abs() / k3);
    report.insert("c_rel_err", (coeffs[1] - c3).abs() / c3);
    report.insert("alpha3_hat", coeffs[2]);
    report.insert("alpha4_hat", coeffs[3]);
    report.insert("coeff_dxdv", coeffs[4]);
    report.insert("coeff_const", coeffs[5]);
    report.insert("train_seconds", seconds);
    Ok((InterfaceLaw::Learned(law), report))
}
