//! Subcommands of the experiment runner. Each writes its data files into the
//! output directory and returns the JSON summary that goes next to them.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use crate::config::{EstimatorKind, ExperimentConfig};
use crate::error::{Error, Result};
use crate::estimators::{additive_minimize, delta_net_minimize, dense_minimize, DeltaNet, EstimateResult};
use crate::models::{
    simulate_white_noise_with, DensitySampler, Observation, TruthSpec, WhiteNoiseObservation,
};
use crate::operators::{rho_k_whitenoise, rho_q_lattice, OperatorKind, SvdOperator};
use crate::risk::{
    additive_mise_monte_carlo, lattice_net_stats, mise_monte_carlo, rate_regression,
    theorem1_bound, theorem4_bound, EstimatorConfig, MiseEstimate, ObservationModel,
    RateExperiment,
};
use crate::rng::{replication_rng, Rng};
use crate::spaces::{
    build_packing_set, truncation_level, CoefficientVector, LatticeNet,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Estimate,
    Rates,
    NetStats,
    BoundCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Rates => "rates",
            Command::NetStats => "net-stats",
            Command::BoundCheck => "bound-check",
        }
    }
}

/// Process exit code for an error: 2 configuration, 3 resource cap,
/// 4 numerical failure, 1 anything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidInput(_) | Error::Parse { .. } => 2,
        Error::ResourceCap { .. } => 3,
        Error::Numerical(_) | Error::IllPosed { .. } | Error::UnsupportedIndex(_) => 4,
        Error::Replication { source, .. } => exit_code(source),
        Error::Io(_) => 1,
    }
}

/// Run `command` and write `summary.json` (resolved config plus results).
pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Value> {
    cfg.validate()?;
    let out = cfg.output_dir.as_path();
    fs::create_dir_all(out)?;
    let results = match command {
        Command::Simulate => cmd_simulate(cfg, out)?,
        Command::Estimate => cmd_estimate(cfg, out)?,
        Command::Rates => cmd_rates(cfg, out)?,
        Command::NetStats => cmd_net_stats(cfg, out)?,
        Command::BoundCheck => cmd_bound_check(cfg, out)?,
    };
    let summary = json!({
        "command": command.name(),
        "config": cfg.to_json_value(),
        "results": results,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(out.join("summary.json"), text + "\n")?;
    Ok(summary)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Everything a replication needs to draw an observation.
struct Simulation {
    model: ObservationModel,
    op: SvdOperator,
    truth: Option<TruthSpec>,
    additive: Option<(CoefficientVector, Vec<(SvdOperator, Vec<crate::basis::MultiIndex>)>)>,
}

impl Simulation {
    fn new(cfg: &ExperimentConfig, n: u64) -> Result<Self> {
        if cfg.estimator.kind == EstimatorKind::Additive {
            let spec = cfg.additive_spec(n)?;
            let parts = spec
                .components()
                .iter()
                .map(|c| {
                    let m = truncation_level(&c.ellipsoid, c.delta)?;
                    Ok((c.operator.clone(), c.ellipsoid.support(m)))
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(Self {
                model: ObservationModel::WhiteNoise,
                op: cfg.operator()?,
                truth: None,
                additive: Some((cfg.additive_truth()?, parts)),
            });
        }
        Ok(Self {
            model: cfg.observation_model(),
            op: cfg.operator()?,
            truth: Some(cfg.truth()?),
            additive: None,
        })
    }

    fn theta(&self) -> &CoefficientVector {
        match (&self.truth, &self.additive) {
            (Some(t), _) => t.theta(),
            (None, Some((theta, _))) => theta,
            _ => unreachable!("simulation has a truth"),
        }
    }

    fn draw(
        &self,
        cfg: &ExperimentConfig,
        n: u64,
        rng: &mut Rng,
        seed: u64,
    ) -> Result<Observation> {
        if let Some((theta, parts)) = &self.additive {
            let mut stats = Vec::new();
            for (op, support) in parts {
                let part = simulate_white_noise_with(theta, op, support, n, rng, seed)?;
                stats.extend(part.iter().map(|(j, z)| (j.clone(), z)));
            }
            return Ok(Observation::WhiteNoise(WhiteNoiseObservation::from_stats(
                theta.basis(),
                stats,
                n as f64,
                seed,
            )?));
        }
        let truth = self.truth.as_ref().expect("non-additive simulations have a truth");
        match self.model {
            ObservationModel::Density => {
                let sampler = DensitySampler::new(truth, &self.op)?;
                Ok(Observation::Sample(sampler.sample(n as usize, rng, seed)?))
            }
            _ => {
                let e = truth.ellipsoid();
                let m = truncation_level(e, cfg.delta_for(n))?;
                let support = e.support(m.max(truth.theta().max_degree()));
                Ok(Observation::WhiteNoise(simulate_white_noise_with(
                    truth.theta(),
                    &self.op,
                    &support,
                    n,
                    rng,
                    seed,
                )?))
            }
        }
    }
}

fn write_observation(obs: &Observation, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    match obs {
        Observation::WhiteNoise(o) => o.write_csv(&mut w)?,
        Observation::Sample(o) => o.write_csv(&mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    let mut files = Vec::new();
    for &n in &cfg.ns {
        let sim = Simulation::new(cfg, n)?;
        for r in 0..cfg.reps {
            let mut rng = replication_rng(cfg.master_seed, r as u64);
            let obs = sim
                .draw(cfg, n, &mut rng, cfg.master_seed)
                .map_err(|e| replication_error(r, e))?;
            let prefix = match obs {
                Observation::WhiteNoise(_) => "stats",
                Observation::Sample(_) => "sample",
            };
            let name = format!("{prefix}_n{n}_rep{r}.csv");
            write_observation(&obs, &out.join(&name))?;
            files.push(name);
        }
    }
    Ok(json!({ "files": files }))
}

fn replication_error(r: usize, e: Error) -> Error {
    Error::Replication {
        replication: r,
        source: Box::new(e),
    }
}

fn estimate_once(
    cfg: &ExperimentConfig,
    sim: &Simulation,
    n: u64,
    obs: &Observation,
) -> Result<(EstimateResult, f64, u32)> {
    match cfg.estimator.kind {
        EstimatorKind::Additive => {
            let spec = cfg.additive_spec(n)?;
            let nets = spec
                .components()
                .iter()
                .map(|c| LatticeNet::new(&c.ellipsoid, c.delta))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&dyn DeltaNet> = nets.iter().map(|n| n as &dyn DeltaNet).collect();
            let m = nets.iter().map(|n| n.truncation_level()).max().unwrap_or(0);
            Ok((additive_minimize(&spec, &refs, obs)?, spec.total_delta(), m))
        }
        kind => {
            let truth = sim.truth.as_ref().expect("non-additive simulations have a truth");
            let e = truth.ellipsoid();
            let delta = cfg.delta_for(n);
            if kind == EstimatorKind::DeltaNet {
                let net = LatticeNet::new(e, delta)?;
                Ok((delta_net_minimize(&net, obs, &sim.op)?, delta, net.truncation_level()))
            } else {
                let m = truncation_level(e, delta)?;
                Ok((dense_minimize(e, obs, &sim.op, m, cfg.estimator.epsilon)?, delta, m))
            }
        }
    }
}

fn cmd_estimate(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    let mut table = create(&out.join("estimates.csv"))?;
    writeln!(table, "n,rep,delta,risk_value,l2_error,ties_broken")?;
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        let sim = Simulation::new(cfg, n)?;
        for r in 0..cfg.reps {
            let mut rng = replication_rng(cfg.master_seed, r as u64);
            let obs = sim
                .draw(cfg, n, &mut rng, cfg.master_seed)
                .map_err(|e| replication_error(r, e))?;
            let start = Instant::now();
            let (est, delta, m) =
                estimate_once(cfg, &sim, n, &obs).map_err(|e| replication_error(r, e))?;
            let seconds = start.elapsed().as_secs_f64();
            let err = est.estimate.distance(sim.theta()).powi(2);
            let stem = format!("estimate_n{n}_rep{r}");
            fs::write(out.join(format!("{stem}.txt")), est.to_text(delta, m))?;
            fs::write(out.join(format!("{stem}.json")), est.sidecar_json(seconds) + "\n")?;
            writeln!(
                table,
                "{n},{r},{delta:.16e},{:.16e},{err:.16e},{}",
                est.risk_value, est.ties_broken
            )?;
            rows.push(json!({ "n": n, "rep": r, "l2_error": err }));
        }
    }
    table.flush()?;
    Ok(json!({ "estimates": rows }))
}

fn mise_for(cfg: &ExperimentConfig, n: u64, estimator: Option<EstimatorConfig>) -> Result<MiseEstimate> {
    if cfg.estimator.kind == EstimatorKind::Additive {
        let spec = cfg.additive_spec(n)?;
        return additive_mise_monte_carlo(
            &cfg.additive_truth()?,
            &spec,
            ObservationModel::WhiteNoise,
            n,
            cfg.reps,
            cfg.master_seed,
        );
    }
    let estimator = match estimator {
        Some(e) => e,
        None => cfg.estimator_for(n)?,
    };
    mise_monte_carlo(
        &cfg.truth()?,
        &cfg.operator()?,
        cfg.observation_model(),
        &estimator,
        n,
        cfg.reps,
        cfg.master_seed,
    )
}

fn cmd_rates(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    if cfg.reps < 30 {
        return Err(Error::Config(format!(
            "rates needs reps >= 30 for usable standard errors, got {}",
            cfg.reps
        )));
    }
    if cfg.ns.len() < 4 || (*cfg.ns.last().expect("ns validated") as f64) < 100.0 * cfg.ns[0] as f64
    {
        return Err(Error::Config(
            "rates needs at least four sample sizes spanning two decades".into(),
        ));
    }
    let mut mises = Vec::new();
    let mut stderrs = Vec::new();
    let mut csv = create(&out.join("rates.csv"))?;
    writeln!(csv, "n,mise,stderr")?;
    for &n in &cfg.ns {
        let m = mise_for(cfg, n, None)?;
        writeln!(csv, "{n},{:.16e},{:.16e}", m.mean, m.stderr)?;
        mises.push(m.mean);
        stderrs.push(m.stderr);
    }
    csv.flush()?;
    let exp = RateExperiment::new(cfg.ns.clone(), mises, stderrs, cfg.reps, cfg.target_exponent())?;
    let fit = rate_regression(&exp)?;
    Ok(json!({
        "slope": fit.slope,
        "slope_stderr": fit.slope_stderr,
        "intercept": fit.intercept,
        "target": fit.target,
        "weighted": fit.weighted,
        "tolerance": cfg.tolerance,
        "pass": fit.within(cfg.tolerance),
    }))
}

fn slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    (xs.len() >= 2).then(|| crate::spaces::least_squares_slope(xs, ys))
}

fn cmd_net_stats(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    if cfg.estimator.kind == EstimatorKind::Additive {
        return Err(Error::Config("net-stats reports on the class, not on additive components".into()));
    }
    let e = cfg.ellipsoid()?;
    let op = cfg.operator()?;
    let zero = CoefficientVector::zero(e.domain().family());
    let mut csv = create(&out.join("net_stats.csv"))?;
    writeln!(csv, "delta,truncation_level,log_cardinality,rho_q,rho_k")?;
    let (mut xs, mut log_lc, mut log_rho) = (Vec::new(), Vec::new(), Vec::new());
    for &delta in &cfg.net_stats.deltas {
        let net = LatticeNet::new(&e, delta)?;
        let log_card = net.log_cardinality()?;
        let rho = rho_q_lattice(&op, &net)?;
        let rho_k = build_packing_set(&e, delta, &zero)
            .and_then(|p| rho_k_whitenoise(&op, &p))
            .ok();
        let rho_k_cell = rho_k.map(|v| format!("{v:.16e}")).unwrap_or_default();
        writeln!(
            csv,
            "{delta:.16e},{},{log_card:.16e},{rho:.16e},{rho_k_cell}",
            net.truncation_level()
        )?;
        xs.push((1.0 / delta).ln());
        log_lc.push(log_card.ln());
        log_rho.push(rho.ln());
    }
    csv.flush()?;
    let q = match op.kind() {
        OperatorKind::Convolution => op.q(),
        _ => 0.5,
    };
    let s = e.smoothness();
    Ok(json!({
        "cardinality_exponent": slope(&xs, &log_lc),
        "cardinality_target": e.dim() as f64 / s,
        "rho_exponent": slope(&xs, &log_rho),
        "rho_target": q / s,
    }))
}

fn cmd_bound_check(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    let mut csv = create(&out.join("bound_check.csv"))?;
    writeln!(csv, "n,delta,log_cardinality,rho,mise,stderr,bound,holds")?;
    let mut all = true;
    for &n in &cfg.ns {
        let (delta, log_card, rho, bound, mise) = if cfg.estimator.kind == EstimatorKind::Additive {
            let spec = cfg.additive_spec(n)?;
            let (mut deltas, mut rhos, mut lambdas) = (Vec::new(), Vec::new(), Vec::new());
            for c in spec.components() {
                let (lc, rho) = lattice_net_stats(&c.ellipsoid, &c.operator, c.delta)?;
                deltas.push(c.delta);
                rhos.push(rho);
                lambdas.push(lc);
            }
            let bound = theorem4_bound(spec.c(), &deltas, &rhos, &lambdas, n as f64)?;
            let mise = mise_for(cfg, n, None)?;
            let rho = rhos.iter().copied().fold(0.0, f64::max);
            (spec.total_delta(), lambdas.iter().sum(), rho, bound, mise)
        } else {
            let delta = cfg.delta_for(n);
            let (lc, rho) = lattice_net_stats(&cfg.ellipsoid()?, &cfg.operator()?, delta)?;
            let consts = cfg.theorem_constants()?;
            let bound = theorem1_bound(&consts, delta, lc, rho, n as f64)?;
            let mise = mise_for(cfg, n, Some(EstimatorConfig::DeltaNet { delta }))?;
            (delta, lc, rho, bound, mise)
        };
        let holds = mise.mean - 3.0 * mise.stderr <= bound;
        all &= holds;
        writeln!(
            csv,
            "{n},{delta:.16e},{log_card:.16e},{rho:.16e},{:.16e},{:.16e},{bound:.16e},{holds}",
            mise.mean, mise.stderr
        )?;
    }
    csv.flush()?;
    Ok(json!({ "all_hold": all }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        let cap = Error::ResourceCap {
            what: "net points",
            required: 1e9,
            cap: 10,
            hint: String::new(),
        };
        assert_eq!(exit_code(&cap), 3);
        let nested = Error::Replication {
            replication: 3,
            source: Box::new(Error::Numerical("x".into())),
        };
        assert_eq!(exit_code(&nested), 4);
    }
}
