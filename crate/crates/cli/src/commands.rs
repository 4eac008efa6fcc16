use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use wiggle_core::arm::WaypointPlan;
use wiggle_core::cmaes::write_history_csv;
use wiggle_core::dataset::{load_dataset, write_dataset, DatasetConfig};
use wiggle_core::eval::{
    full_pipeline_experiment, importance_ablation, in_domain_report, single_trajectory_sensitivity,
    transfer_experiment, wiggle_ablation, write_outputs, FullPipelineConfig, ImportanceConfig, SensitivityConfig,
    Table, TransferConfig, WiggleAblationConfig,
};
use wiggle_core::nn::{read_weights, sensitivity_map, train as train_network, write_weights, Network, NetworkSpec, TrainConfig, TrainSet};
use wiggle_core::observation::{project, CameraModel, TrackedPoints};
use wiggle_core::params::{normalize, ParamBounds, RopeParams};
use wiggle_core::pipeline::{run_pipeline, Method, PipelineConfig, RopeSource};
use wiggle_core::sim::{simulate as run_sim, trajectory_to_csv, write_trajectory, BaseMotion};
use wiggle_core::sysid::{identify_cmaes, identify_nn, saliency as tracked_saliency, FitConfig};
use wiggle_core::tasks::{execute, optimize_trajectory, rollout, TaskKind, TaskSpec};
use wiggle_core::{Error, Result};

use crate::{
    Common, DatasetGenArgs, EvalArgs, IdentifyArgs, InDomainArgs, MethodArg, OptimizeArgs, PipelineArgs,
    SaliencyArgs, SimulateArgs, TaskArg, TrainArgs,
};

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn load_config<T: DeserializeOwned + Default>(common: &Common) -> Result<T> {
    match &common.config {
        Some(p) => read_json(p),
        None => Ok(T::default()),
    }
}

fn load_bounds(common: &Common, bounds: &mut ParamBounds) -> Result<()> {
    if let Some(p) = &common.bounds {
        *bounds = read_json(p)?;
        bounds.check()?;
    }
    Ok(())
}

fn out_dir(common: &Common) -> Result<&Path> {
    fs::create_dir_all(&common.out)?;
    Ok(&common.out)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn load_weights(path: &Path) -> Result<Network> {
    let file = fs::File::open(path).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    read_weights(std::io::BufReader::new(file))
}

fn require_weights(path: Option<&Path>) -> Result<Network> {
    load_weights(path.ok_or_else(|| Error::InvalidInput("--weights is required for --method nn".into()))?)
}

fn read_tracked(path: &Path, rate: f64) -> Result<TrackedPoints> {
    let file = fs::File::open(path).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    TrackedPoints::read_csv(std::io::BufReader::new(file), rate)
}

fn rope_or_midpoint(path: Option<&Path>, bounds: &ParamBounds) -> Result<RopeParams> {
    match path {
        Some(p) => read_json(p),
        None => Ok(bounds.midpoint()),
    }
}

fn task_kind(t: TaskArg) -> TaskKind {
    match t {
        TaskArg::Strike => TaskKind::Strike,
        TaskArg::Lob => TaskKind::Lob,
        TaskArg::Drape => TaskKind::Drape,
    }
}

fn apply_task(task: &mut TaskSpec, arg: Option<TaskArg>) {
    if let Some(kind) = arg.map(task_kind) {
        if task.kind != kind {
            *task = TaskSpec::example(kind);
        }
    }
}

fn method(m: MethodArg) -> Method {
    match m {
        MethodArg::Nn => Method::Nn,
        MethodArg::Cmaes => Method::Cmaes,
    }
}

type Identify<'a> = Box<dyn Fn(&TrackedPoints) -> Result<RopeParams> + Sync + 'a>;

/// Identification closure for the harnesses.
fn identifier<'a>(
    m: MethodArg,
    net: Option<&'a Network>,
    bounds: &'a ParamBounds,
    motion: &'a BaseMotion,
    camera: &'a CameraModel,
    fit: FitConfig,
) -> Result<Identify<'a>> {
    Ok(match m {
        MethodArg::Nn => {
            let net = net.ok_or_else(|| Error::InvalidInput("--weights is required for --method nn".into()))?;
            Box::new(move |t| identify_nn(net, t, bounds))
        }
        MethodArg::Cmaes => Box::new(move |t| Ok(identify_cmaes(t, motion, camera, bounds, &fit)?.params)),
    })
}

pub fn dataset_gen(a: DatasetGenArgs) -> Result<()> {
    let mut cfg: DatasetConfig = load_config(&a.common)?;
    load_bounds(&a.common, &mut cfg.bounds)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.count {
        cfg.count = n;
    }
    let dir = out_dir(&a.common)?;
    let m = write_dataset(&cfg, dir)?;
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} samples, {} diverged, manifest {}",
        m.samples.len(),
        m.diverged.len(),
        dir.join(wiggle_core::dataset::MANIFEST_FILE).display()
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = load_config(&a.common)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    let (manifest, set) = load_dataset(&a.data)?;
    let val = match &a.val {
        Some(p) => {
            let (m, v) = load_dataset(p)?;
            if m.layout != manifest.layout {
                return Err(Error::InvalidInput("validation set uses a different feature layout".into()));
            }
            v
        }
        None => TrainSet::default(),
    };
    let dir = out_dir(&a.common)?.to_path_buf();
    let net = Network::new(NetworkSpec::for_layout(&manifest.layout), cfg.seed)?;
    eprintln!("{} parameters, {} training samples", net.params().len(), set.len());
    let outcome = train_network(net, &set, &val, &cfg, |s| {
        eprintln!(
            "epoch {:4}  lr {:.2e}  train {:.5}  val {:.5}  mae {:.4}",
            s.epoch, s.learning_rate, s.train_loss, s.val_loss, s.val_mae
        )
    })?;
    write_weights(&outcome.network, BufWriter::new(fs::File::create(dir.join("weights.wagw"))?))?;
    write_json(&dir.join("bounds.json"), &manifest.bounds)?;
    let mut w = csv::Writer::from_path(dir.join("history.csv"))?;
    for s in &outcome.history {
        w.serialize(s)?;
    }
    w.flush()?;
    println!("{}", dir.join("weights.wagw").display());
    Ok(())
}

#[derive(Serialize)]
struct Identified {
    method: Method,
    params: RopeParams,
    normalized: [f64; 9],
    objective: Option<f64>,
}

pub fn identify(a: IdentifyArgs) -> Result<()> {
    let mut cfg: PipelineConfig = load_config(&a.common)?;
    load_bounds(&a.common, &mut cfg.bounds)?;
    let tracked = read_tracked(&a.tracked, cfg.wiggle.rate)?;
    let dir = out_dir(&a.common)?;
    let (params, objective) = match a.method {
        MethodArg::Nn => (identify_nn(&require_weights(a.weights.as_deref())?, &tracked, &cfg.bounds)?, None),
        MethodArg::Cmaes => {
            if let Some(s) = a.common.seed {
                cfg.fit.cmaes.seed = s;
            }
            let motion = cfg.wiggle.base_motion(&cfg.arm)?;
            let fit = identify_cmaes(&tracked, &motion, &cfg.camera, &cfg.bounds, &cfg.fit)?;
            write_history_csv(&fit.history, fs::File::create(dir.join("history.csv"))?)?;
            (fit.params, Some(fit.objective))
        }
    };
    let out = Identified {
        method: method(a.method),
        params,
        normalized: normalize(&params, &cfg.bounds)?.values,
        objective,
    };
    write_json(&dir.join("identified.json"), &out)?;
    write_json(&dir.join("params.json"), &params)?;
    println!("{}", serde_json::to_string_pretty(&params)?);
    Ok(())
}

pub fn optimize(a: OptimizeArgs) -> Result<()> {
    let mut cfg: PipelineConfig = load_config(&a.common)?;
    load_bounds(&a.common, &mut cfg.bounds)?;
    apply_task(&mut cfg.task, a.task);
    let params = rope_or_midpoint(a.params.as_deref(), &cfg.bounds)?;
    let seed = a.common.seed.unwrap_or(0);
    let dir = out_dir(&a.common)?;
    let result = optimize_trajectory(&params, &cfg.task, &cfg.optimize, seed)?;
    let score = execute(&params, &result.plan, &cfg.task, &cfg.optimize)?;
    let settle = cfg.optimize.settle_for(cfg.task.kind);
    let r = rollout(&params, &result.plan, &cfg.task.scene(), &cfg.optimize, settle)?;
    write_json(&dir.join("plan.json"), &result.plan)?;
    write_json(&dir.join("score.json"), &score)?;
    write_history_csv(&result.history, fs::File::create(dir.join("history.csv"))?)?;
    r.joints.write_csv(fs::File::create(dir.join("joints.csv"))?)?;
    println!(
        "{} cost {:.5}, metric {:.4} m, success {}",
        cfg.task.kind, score.cost, score.metric, score.success
    );
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg: PipelineConfig = load_config(&a.common)?;
    load_bounds(&a.common, &mut cfg.bounds)?;
    let params = rope_or_midpoint(a.params.as_deref(), &cfg.bounds)?;
    let dir = out_dir(&a.common)?;
    let links = match &a.plan {
        Some(p) => {
            let plan: WaypointPlan = read_json(p)?;
            let settle = cfg.optimize.settle_for(cfg.task.kind);
            let r = rollout(&params, &plan, &cfg.task.scene(), &cfg.optimize, settle)?;
            r.joints.write_csv(fs::File::create(dir.join("joints.csv"))?)?;
            r.links
        }
        None => {
            let motion = cfg.wiggle.base_motion(&cfg.arm)?;
            let links = run_sim(&params, &motion, &cfg.scene, &cfg.fit.sim, cfg.wiggle.rate, cfg.wiggle.frames)?;
            project(&cfg.camera, &links)?.write_csv(fs::File::create(dir.join("tracked.csv"))?)?;
            links
        }
    };
    write_trajectory(&links, BufWriter::new(fs::File::create(dir.join("trajectory.wagt"))?))?;
    fs::write(dir.join("trajectory.csv"), trajectory_to_csv(&links))?;
    println!("{} frames of {} links", links.num_frames(), links.num_links());
    Ok(())
}

fn report<T: Table>(table: &T, common: &Common, experiment: &str, seed: u64) -> Result<()> {
    let (csv, json) = write_outputs(table, &common.out, experiment, seed)?;
    println!("{}", serde_json::to_string_pretty(&table.summary())?);
    eprintln!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

pub fn eval_transfer(a: EvalArgs) -> Result<()> {
    let mut cfg: TransferConfig = load_config(&a.common)?;
    load_bounds(&a.common, &mut cfg.bounds)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    let net = match a.method {
        MethodArg::Nn => Some(require_weights(a.weights.as_deref())?),
        MethodArg::Cmaes => None,
    };
    let motion = cfg.motion_a.base_motion(&cfg.arm)?;
    let mut fit = FitConfig {
        sim: cfg.sim.clone(),
        scene: cfg.scene.clone(),
        ..FitConfig::default()
    };
    fit.cmaes.seed = cfg.seed;
    let id = identifier(a.method, net.as_ref(), &cfg.bounds, &motion, &cfg.camera, fit)?;
    let table = transfer_experiment(&cfg, id)?;
    report(&table, &a.common, "transfer", cfg.seed)
}

pub fn eval_importance(a: EvalArgs) -> Result<()> {
    let mut cfg: ImportanceConfig = load_config(&a.common)?;
    load_bounds(&a.common, &mut cfg.pipeline.bounds)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    let net = match a.method {
        MethodArg::Nn => Some(require_weights(a.weights.as_deref())?),
        MethodArg::Cmaes => None,
    };
    let p = &cfg.pipeline;
    let motion = p.wiggle.base_motion(&p.arm)?;
    let mut fit = p.fit.clone();
    fit.cmaes.seed = cfg.seed;
    let id = identifier(a.method, net.as_ref(), &p.bounds, &motion, &p.camera, fit)?;
    let table = importance_ablation(&cfg, id)?;
    report(&table, &a.common, "importance", cfg.seed)
}

pub fn eval_wiggles(a: EvalArgs) -> Result<()> {
    let mut cfg: WiggleAblationConfig = load_config(&a.common)?;
    load_bounds(&a.common, &mut cfg.dataset.bounds)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    let table = wiggle_ablation(&cfg)?;
    report(&table, &a.common, "wiggles", cfg.seed)
}

pub fn eval_indomain(a: InDomainArgs) -> Result<()> {
    let net = load_weights(&a.weights)?;
    let (manifest, set) = load_dataset(&a.data)?;
    let mut bounds = manifest.bounds.clone();
    load_bounds(&a.common, &mut bounds)?;
    let table = in_domain_report(&net, &set, &bounds)?;
    report(&table, &a.common, "indomain", a.common.seed.unwrap_or(manifest.seed))
}

pub fn eval_sensitivity(a: EvalArgs) -> Result<()> {
    let mut cfg: SensitivityConfig = load_config(&a.common)?;
    load_bounds(&a.common, &mut cfg.bounds)?;
    let table = single_trajectory_sensitivity(&cfg)?;
    report(&table, &a.common, "sensitivity", a.common.seed.unwrap_or(0))
}

pub fn eval_full(a: EvalArgs) -> Result<()> {
    let mut cfg: FullPipelineConfig = load_config(&a.common)?;
    load_bounds(&a.common, &mut cfg.pipeline.bounds)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    cfg.method = method(a.method);
    let net = match a.method {
        MethodArg::Nn => Some(require_weights(a.weights.as_deref())?),
        MethodArg::Cmaes => None,
    };
    let table = full_pipeline_experiment(&cfg, net.as_ref())?;
    report(&table, &a.common, "full", cfg.seed)
}

pub fn saliency(a: SaliencyArgs) -> Result<()> {
    let net = load_weights(&a.weights)?;
    let map = match &a.data {
        Some(d) => sensitivity_map(&net, &load_dataset(d)?.1.features)?,
        None => {
            if a.tracked.is_empty() {
                return Err(Error::InvalidInput("give --data or at least one --tracked file".into()));
            }
            let cfg: PipelineConfig = load_config(&a.common)?;
            let tracks = a
                .tracked
                .iter()
                .map(|p| read_tracked(p, cfg.wiggle.rate))
                .collect::<Result<Vec<_>>>()?;
            tracked_saliency(&net, &tracks)?
        }
    };
    let dir = out_dir(&a.common)?;
    map.write_csv(fs::File::create(dir.join("saliency.csv"))?)?;
    println!("{}", dir.join("saliency.csv").display());
    Ok(())
}

pub fn pipeline(a: PipelineArgs) -> Result<()> {
    let mut cfg: PipelineConfig = load_config(&a.common)?;
    load_bounds(&a.common, &mut cfg.bounds)?;
    apply_task(&mut cfg.task, a.task);
    let seed = a.common.seed.unwrap_or(0);
    let source = match &a.tracked {
        Some(p) => RopeSource::Tracked {
            id: p.file_stem().map_or("tracked".into(), |s| s.to_string_lossy().into_owned()),
            tracked: read_tracked(p, cfg.wiggle.rate)?,
            truth: a.params.as_deref().map(read_json).transpose()?,
        },
        None => RopeSource::Simulated {
            id: a
                .params
                .as_deref()
                .and_then(Path::file_stem)
                .map_or("midpoint".into(), |s| s.to_string_lossy().into_owned()),
            params: rope_or_midpoint(a.params.as_deref(), &cfg.bounds)?,
        },
    };
    let net = match a.method {
        MethodArg::Nn => Some(require_weights(a.weights.as_deref())?),
        MethodArg::Cmaes => None,
    };
    let record = run_pipeline(&source, method(a.method), net.as_ref(), &cfg, seed)?;
    let dir = out_dir(&a.common)?;
    write_json(&dir.join("record.json"), &record)?;
    write_history_csv(&record.cost_history, fs::File::create(dir.join("history.csv"))?)?;
    println!(
        "{} via {}: final metric {:.4} m",
        record.task.kind, record.method, record.final_metric
    );
    Ok(())
}
