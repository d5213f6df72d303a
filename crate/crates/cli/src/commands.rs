use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use iib_core::gradcheck::{self, GradcheckConfig};
use iib_core::{
    evaluate, format_sig, init_default_network, load_network, make_triple, save_network, synth_scene,
    train as fit, write_brf, EvalConfig, LossConfig, LossKind, MetricReport, MetricSet, Normalization,
    QConfig, Raster, SceneSpec, TrainConfig,
};

use crate::data;
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{EvalArgs, GradcheckArgs, LossArg, ModeArg, NormArg, SimulateArgs, TrainArgs};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_raster(path: PathBuf, r: &Raster, outputs: &mut Vec<PathBuf>) -> Result<(), CliError> {
    write_brf(&path, r).map_err(|e| CliError::core_at(&path, e))?;
    outputs.push(path);
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    if a.count == 0 {
        return Err(CliError::Flags("--count must be at least 1".into()));
    }
    let base = SceneSpec { ratio: a.ratio, ..SceneSpec::new(a.bands, a.size, a.seed) };
    base.validate().map_err(|e| CliError::Flags(e.to_string()))?;
    create_dir(&a.out)?;

    let mut m = RunManifest::new("simulate");
    m.param("bands", a.bands as u64)
        .param("size", a.size as u64)
        .param("ratio", a.ratio as u64)
        .param("seed", a.seed)
        .param("count", a.count as u64)
        .param("out", a.out.display().to_string());
    m.parameters.insert("blob_count".into(), (base.blob_count as u64).into());

    for i in 0..a.count {
        let seed = a.seed.wrapping_add(i as u64);
        let (ms, pan) = synth_scene(&SceneSpec { seed, ..base.clone() })?;
        let triple = make_triple(&ms, &pan, a.ratio)?;
        let dir = &a.out;
        write_raster(data::scene_path(dir, i, "ms"), &ms, &mut m.outputs)?;
        write_raster(data::scene_path(dir, i, "pan"), &pan, &mut m.outputs)?;
        write_raster(data::scene_path(dir, i, "lms"), triple.lms(), &mut m.outputs)?;
        write_raster(data::scene_path(dir, i, "panlr"), triple.pan(), &mut m.outputs)?;
        write_raster(data::scene_path(dir, i, "target"), triple.target(), &mut m.outputs)?;
        m.seeds.push(seed);
    }
    m.write(&a.out.join("manifest.json"))
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let (indices, triples) = data::load_triples(&a.data)?;
    let bands = triples[0].bands();
    let kind = match a.loss {
        LossArg::L2 => LossKind::L2,
        LossArg::Iib => LossKind::Iib,
    };
    let normalization = match a.normalization {
        NormArg::Mean => Normalization::PerTerm,
        NormArg::Sum => Normalization::Sum,
    };
    let cfg = TrainConfig {
        loss: LossConfig { alpha: a.alpha, q: QConfig::loss_default(), normalization },
        steps: a.steps,
        learning_rate: a.lr,
        batch: a.batch,
        ..TrainConfig::new(kind, a.seed)
    };
    cfg.validate().map_err(|e| CliError::Flags(e.to_string()))?;

    let init = init_default_network(bands, a.seed)?;
    let (net, history) = fit(&init, &triples, &cfg)?;

    create_dir(&a.out)?;
    let net_path = a.out.join("network.iibn");
    save_network(&net_path, &net).map_err(|e| CliError::core_at(&net_path, e))?;
    let mut csv = String::from("step,intra,inter,total\n");
    for (i, s) in history.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            i + 1,
            format_sig(s.intra, 9),
            format_sig(s.inter, 9),
            format_sig(s.total, 9)
        );
    }
    let hist_path = a.out.join("history.csv");
    fs::write(&hist_path, csv).map_err(|e| CliError::io(&hist_path, e))?;

    let mut m = RunManifest::new("train");
    m.param("data", a.data.display().to_string())
        .param("loss", if kind == LossKind::L2 { "l2" } else { "iib" })
        .param("alpha", a.alpha)
        .param("steps", a.steps as u64)
        .param("lr", a.lr)
        .param("batch", a.batch as u64)
        .param("normalization", if normalization == Normalization::Sum { "sum" } else { "mean" })
        .param("seed", a.seed)
        .param("out", a.out.display().to_string());
    let q = cfg.loss.q;
    m.parameters.insert("loss_window".into(), (q.window as u64).into());
    m.parameters.insert("loss_stride".into(), (q.stride as u64).into());
    m.parameters.insert("loss_epsilon".into(), q.epsilon.into());
    m.parameters.insert("adam".into(), serde_json::json!([cfg.beta1, cfg.beta2, cfg.adam_epsilon]));
    m.seeds.push(a.seed);
    m.inputs = indices
        .iter()
        .flat_map(|&i| ["lms", "panlr", "target"].map(|k| data::scene_path(&a.data, i, k)))
        .collect();
    m.outputs = vec![net_path, hist_path];
    m.write(&a.out.join("manifest.json"))
}

/// One column per network: `metric<TAB>net...` header, then a row per key.
fn table(names: &[String], reports: &[MetricReport], set: MetricSet) -> String {
    let mut out = String::from("metric");
    for n in names {
        out.push('\t');
        out.push_str(n);
    }
    out.push('\n');
    for (row, (key, _)) in reports[0].entries(set).into_iter().enumerate() {
        out.push_str(key);
        for r in reports {
            let _ = write!(out, "\t{}", format_sig(r.entries(set)[row].1, 9));
        }
        out.push('\n');
    }
    out
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    if a.ratio < 2 {
        return Err(CliError::Flags(format!("--ratio must be at least 2, got {}", a.ratio)));
    }
    let (indices, triples) = data::load_triples(&a.data)?;
    let cfg = EvalConfig { ratio: a.ratio, ..EvalConfig::default() };
    let set = match a.mode {
        ModeArg::Simulated => MetricSet::Simulated,
        ModeArg::Actual => MetricSet::Actual,
    };

    let mut reports = Vec::with_capacity(a.net.len());
    for path in &a.net {
        let net = load_network(path).map_err(|e| CliError::core_at(path, e))?;
        reports.push(evaluate(&net, &triples, None, &cfg)?);
    }
    let text = if reports.len() == 1 {
        reports[0].to_kv(set)
    } else {
        let names: Vec<String> = a.net.iter().map(|p| p.display().to_string()).collect();
        table(&names, &reports, set)
    };
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(&a.out, text).map_err(|e| CliError::io(&a.out, e))?;

    let mut m = RunManifest::new("eval");
    for path in &a.net {
        m.argv.push("--net".into());
        m.argv.push(path.display().to_string());
    }
    let nets: Vec<String> = a.net.iter().map(|p| p.display().to_string()).collect();
    m.parameters.insert("net".into(), nets.into());
    m.param("data", a.data.display().to_string())
        .param("mode", if set == MetricSet::Simulated { "simulated" } else { "actual" })
        .param("out", a.out.display().to_string())
        .param("ratio", a.ratio as u64);
    m.inputs = a.net.clone();
    m.inputs.extend(
        indices.iter().flat_map(|&i| ["lms", "panlr", "target"].map(|k| data::scene_path(&a.data, i, k))),
    );
    m.outputs = vec![a.out.clone()];
    let mut manifest_path = a.out.clone().into_os_string();
    manifest_path.push(".manifest.json");
    m.write(Path::new(&manifest_path))
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<(), CliError> {
    let cfg = GradcheckConfig {
        seed: a.seed,
        bands: a.bands,
        size: a.size,
        window: a.window,
        stride: a.stride,
        epsilon: a.epsilon,
        corrupt: a.corrupt,
    };
    if a.bands < 2 || a.window > a.size || a.epsilon.is_nan() || a.epsilon <= 0.0 {
        return Err(CliError::Flags(
            "gradcheck needs --bands >= 2, --window <= --size and --epsilon > 0".into(),
        ));
    }
    let report = gradcheck::run(&cfg).map_err(|e| CliError::Flags(e.to_string()))?;
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!(
            "max relative error {} exceeds {}",
            format_sig(report.worst(), 3),
            format_sig(gradcheck::TOLERANCE, 3)
        )))
    }
}
