//! Runtime scaling sweeps. The chain sweep grows an even chain of two-mass
//! subsystems — each appended subsystem estimating its internal stiffness —
//! and times the distributed Jacobi filter against the single augmented
//! node on identical measurements (median of three, sequential execution).
//! The grid sweep does the same on block-replicated oscillator networks.

use kalgraph::metrics::{log_log_slope, time_median_of_three, ScalingPoint};
use kalgraph::testbeds::chain::{
    acceleration_measurements, scaling_central_graph, scaling_graph, ChainNodeOptions,
    ChainSystem, ScalingSpec, CHAIN4_CENTRAL,
};
use kalgraph::testbeds::kuramoto::{
    centralized_graph, clustered_graph, measurement_set_central, measurement_set_clustered,
    perturbed_init, simulate_truth, GridFilterConfig, KuramotoModel, KuramotoOrder,
};
use kalgraph::testbeds::matpower::{load_case, CouplingMode};
use kalgraph::testbeds::partition::Cluster;
use kalgraph::{
    run_schedule, Matrix, MeasurementSet, MetricReport, NodeId, ScheduleConfig, ScheduleKind,
};

use super::replicate_rng;
use crate::{data_dir, CliError, RunConfig, ScenarioOutput, Table};

/// Time one schedule run after checking it completes.
fn timed(
    graph: &kalgraph::SystemGraph,
    sched: &ScheduleConfig,
    meas: &MeasurementSet,
) -> Result<(f64, kalgraph::RunTrace), CliError> {
    let trace = run_schedule(graph, sched, meas)?;
    let seconds = time_median_of_three(|| {
        run_schedule(graph, sched, meas).expect("timed rerun of a completed schedule");
    });
    Ok((seconds, trace))
}

pub fn run_chain(cfg: &RunConfig) -> Result<ScenarioOutput, CliError> {
    let c = &cfg.chain;
    let sc = &cfg.scaling;
    let steps = sc.steps;
    let spec = ScalingSpec {
        kappa_init: c.kappa_init,
        kappa_prior_std: c.kappa_prior_std,
        q_kappa: c.q_kappa,
        opts: ChainNodeOptions {
            q_state: c.q_state,
            r_accel: c.accel_noise_std * c.accel_noise_std,
            p0_state: c.p0_state,
            ..ChainNodeOptions::default()
        },
    };

    let mut dist_points = Vec::new();
    let mut cent_points = Vec::new();
    let mut dist_report = MetricReport::new("distributed");
    let mut cent_report = MetricReport::new("centralized");
    let mut table = Table::new(
        "runtimes",
        vec![
            "size".into(),
            "distributed_seconds".into(),
            "centralized_seconds".into(),
        ],
    );

    for &n in &sc.sizes {
        let chain = ChainSystem::uniform(n, c.mass, c.stiffness, c.damping, c.dt)?;
        let init = vec![0.0; 2 * n];
        let rng = replicate_rng(cfg, 0).derive(&format!("chain-scaling-{n}"));

        // Piecewise-constant random excitation on every mass; the filters
        // receive no forcing input, so it acts as an unknown disturbance.
        let mut rng_force = rng.derive("forcing");
        let holds = steps / sc.hold_steps + 2;
        let levels: Vec<Vec<f64>> = (0..holds)
            .map(|_| (0..n).map(|_| sc.forcing_std * rng_force.normal()).collect())
            .collect();
        let hold_dt = sc.hold_steps as f64 * c.dt;
        let forcing = move |t: f64| -> Vec<f64> {
            let idx = ((t / hold_dt) as usize).min(levels.len() - 1);
            levels[idx].clone()
        };
        let truth = chain.simulate(&init, &forcing, steps)?;

        // One accelerometer per subsystem, on its second mass; both
        // formulations read the identical rows.
        let m = n / 2;
        let mut channels = Vec::with_capacity(m);
        for j in 0..m {
            let mut rng_meas = rng.derive(&format!("meas-{j}"));
            channels.push(acceleration_measurements(
                &truth,
                2 * j + 1,
                c.accel_noise_std,
                &mut rng_meas,
            )?);
        }

        let mut dist_meas = MeasurementSet::empty(steps);
        for (j, series) in channels.iter().enumerate() {
            dist_meas.insert_dense(format!("s{j}"), series.clone())?;
        }
        let mut cent_meas = MeasurementSet::empty(steps);
        let rows: Vec<Vec<f64>> = (0..steps)
            .map(|i| channels.iter().map(|s| s[i][0]).collect())
            .collect();
        cent_meas.insert_dense(CHAIN4_CENTRAL, rows)?;

        // Sequential schedules keep the timing comparison fair.
        let sched = ScheduleConfig::new(ScheduleKind::Jacobi, steps);
        let dist_graph = scaling_graph(&chain, &init, &spec)?;
        let cent_graph = scaling_central_graph(&chain, &init, &spec)?;
        let (dist_secs, dist_trace) = timed(&dist_graph, &sched, &dist_meas)?;
        let (cent_secs, cent_trace) = timed(&cent_graph, &sched, &cent_meas)?;

        dist_points.push(ScalingPoint {
            size: n,
            seconds: dist_secs,
        });
        cent_points.push(ScalingPoint {
            size: n,
            seconds: cent_secs,
        });
        dist_report.insert(format!("seconds_n{n}"), dist_secs);
        cent_report.insert(format!("seconds_n{n}"), cent_secs);
        table.push(vec![n as f64, dist_secs, cent_secs]);

        // Terminal stiffness-estimate quality, informative only.
        let last = steps;
        let mut dist_errs = Vec::new();
        for j in 1..m {
            let tr = dist_trace
                .node(&NodeId::from(format!("s{j}")))
                .expect("scaling node trace");
            dist_errs.push((tr.means[last][4] - 1.0).abs());
        }
        dist_report.insert(format!("kappa_rel_err_n{n}"), super::mean(&dist_errs));
        let cent_tr = cent_trace
            .node(&NodeId::from(CHAIN4_CENTRAL))
            .expect("central scaling trace");
        let cent_errs: Vec<f64> = (0..m - 1)
            .map(|k| (cent_tr.means[last][2 * n + k] - 1.0).abs())
            .collect();
        cent_report.insert(format!("kappa_rel_err_n{n}"), super::mean(&cent_errs));
    }

    let dist_slope = log_log_slope(&dist_points)?;
    let cent_slope = log_log_slope(&cent_points)?;
    dist_report.insert("slope", dist_slope);
    cent_report.insert("slope", cent_slope);
    let mut cmp = MetricReport::new("comparison");
    cmp.insert("slope_distributed", dist_slope);
    cmp.insert("slope_centralized", cent_slope);
    cmp.insert("slope_gap", cent_slope - dist_slope);
    if cfg.replicates > 1 {
        cmp.flag("timing sweep uses a single realization; replicates ignored");
    }

    Ok(ScenarioOutput {
        metrics: vec![dist_report, cent_report, cmp],
        tables: vec![table],
        data_files: Vec::new(),
    })
}

/// Block-replicate the base case's coupling `copies` times, tying
/// consecutive copies with one weak line, and draw the remaining network
/// parameters the same way the single-case builder does.
fn replicated_model(
    base: &Matrix,
    copies: usize,
    rng: &mut kalgraph::Rng,
) -> Result<KuramotoModel, CliError> {
    let nb = base.rows();
    let n = nb * copies;
    let mut coupling = Matrix::zeros(n, n);
    for c in 0..copies {
        coupling.set_block(c * nb, c * nb, base)?;
    }
    let mut nonzero = Vec::new();
    for i in 0..nb {
        for j in 0..nb {
            let v = base.get(i, j);
            if v > 0.0 {
                nonzero.push(v);
            }
        }
    }
    let tie = 0.2 * super::mean(&nonzero);
    for c in 0..copies - 1 {
        let a = c * nb + (nb - 1);
        let b = (c + 1) * nb;
        coupling.set(a, b, tie);
        coupling.set(b, a, tie);
    }

    let damping = (0..n)
        .map(|_| (rng.uniform(0.10, 0.30) * 100.0).round() / 100.0)
        .collect();
    let natural = (0..n).map(|_| (rng.index(21) as f64 - 10.0) / 10.0).collect();
    let theta0 = (0..n).map(|_| rng.uniform(-0.5, 0.5)).collect();
    let omega0 = (0..n).map(|_| rng.uniform(-0.2, 0.2)).collect();
    let model = KuramotoModel {
        coupling,
        damping,
        natural,
        theta0,
        omega0,
        order: KuramotoOrder::Second,
    };
    model.validate()?;
    Ok(model)
}

pub fn run_grid(cfg: &RunConfig) -> Result<ScenarioOutput, CliError> {
    let g = &cfg.grid;
    let sc = &cfg.scaling;
    let case_path = data_dir().join(format!("{}.m", g.case));
    let case = load_case(&case_path)?;
    let base = case.coupling(CouplingMode::Magnitude)?;
    let nb = base.rows();
    let steps = sc.grid_steps;
    let t_final = steps as f64 * g.dt;

    let mut dist_points = Vec::new();
    let mut cent_points = Vec::new();
    let mut dist_report = MetricReport::new("distributed");
    let mut cent_report = MetricReport::new("centralized");
    let mut table = Table::new(
        "runtimes",
        vec![
            "size".into(),
            "distributed_seconds".into(),
            "centralized_seconds".into(),
        ],
    );

    for &copies in &sc.grid_copies {
        let n = nb * copies;
        let rng = replicate_rng(cfg, 0).derive(&format!("grid-scaling-{copies}"));
        let mut rng_model = rng.derive("model");
        let model = replicated_model(&base, copies, &mut rng_model)?;
        let mut rng_truth = rng.derive("truth");
        let (_truth, meas) = simulate_truth(&model, t_final, g.dt, g.sigma, &mut rng_truth)?;
        let mut rng_init = rng.derive("init");
        let init = perturbed_init(&model, g.init_std, &mut rng_init);

        let clusters: Vec<Cluster> = (0..copies)
            .map(|c| Cluster {
                seed: Some(c * nb),
                nodes: (c * nb..(c + 1) * nb).collect(),
            })
            .collect();

        let cent_graph = centralized_graph(&model, &init, &GridFilterConfig::centralized(g.dt))?;
        let dist_graph =
            clustered_graph(&model, &clusters, &init, &GridFilterConfig::distributed(g.dt))?;
        let cent_meas = measurement_set_central(&meas)?;
        let dist_meas = measurement_set_clustered(&meas, &clusters)?;
        let sched = ScheduleConfig::new(ScheduleKind::Jacobi, steps);

        let (dist_secs, _) = timed(&dist_graph, &sched, &dist_meas)?;
        let (cent_secs, _) = timed(&cent_graph, &sched, &cent_meas)?;
        dist_points.push(ScalingPoint {
            size: n,
            seconds: dist_secs,
        });
        cent_points.push(ScalingPoint {
            size: n,
            seconds: cent_secs,
        });
        dist_report.insert(format!("seconds_n{n}"), dist_secs);
        cent_report.insert(format!("seconds_n{n}"), cent_secs);
        table.push(vec![n as f64, dist_secs, cent_secs]);
    }

    let dist_slope = log_log_slope(&dist_points)?;
    let cent_slope = log_log_slope(&cent_points)?;
    dist_report.insert("slope", dist_slope);
    cent_report.insert("slope", cent_slope);
    let mut cmp = MetricReport::new("comparison");
    cmp.insert("slope_distributed", dist_slope);
    cmp.insert("slope_centralized", cent_slope);
    cmp.insert("slope_gap", cent_slope - dist_slope);
    if cfg.replicates > 1 {
        cmp.flag("timing sweep uses a single realization; replicates ignored");
    }

    Ok(ScenarioOutput {
        metrics: vec![dist_report, cent_report, cmp],
        tables: vec![table],
        data_files: vec![case_path],
    })
}
