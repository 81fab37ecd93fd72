//! Implementations of the command-line subcommands.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use vipgan::eval::{
    compare_aggregation, feature_algebra, probe_split, rank_all, retrieval_metrics, SvmConfig, TrainedModel,
};
use vipgan::layers::derive_seed;
use vipgan::model::{
    fit_known_test_from, infer_unknown_test, predict_center, EpochRecord, MemoryBank, ShapeViews, VipGanParams,
};
use vipgan::renderer::{encode_ppm, export_dataset, load_dataset, Dataset, Split};
use vipgan::tensor::Tensor;
use vipgan::{Error, Result};

use crate::checkpoint::Checkpoint;
use crate::config::{Mode, RunConfig};
use crate::features::FeatureTable;

pub const CHECKPOINT_FILE: &str = "checkpoint.vipg";
pub const LOSS_FILE: &str = "losses.csv";
pub const CONFIG_FILE: &str = "config.txt";
pub const FEATURES_FILE: &str = "features.csv";
pub const LOCK_FILE: &str = ".lock";
pub const PARTIAL_FILE: &str = ".partial";
pub const LOSS_HEADER: &str = "epoch,l_u,l_r,l_d2u,l_total,neg_l_d";

/// Exclusive claim on an output directory, released on drop. A lock left
/// by a process that no longer exists is taken over.
pub struct OutputLock {
    path: PathBuf,
}

fn process_alive(pid: u32) -> bool {
    let proc_root = Path::new("/proc");
    !proc_root.exists() || proc_root.join(pid.to_string()).exists()
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    writeln!(f, "{}", std::process::id()).map_err(|e| Error::io(&path, e))?;
                    return Ok(Self { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let owner = fs::read_to_string(&path).ok().and_then(|s| s.trim().parse::<u32>().ok());
                    match owner {
                        Some(pid) if !process_alive(pid) => {
                            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                        }
                        _ => {
                            return Err(Error::Contract(format!(
                                "output directory {} is in use by another run (lock file {})",
                                dir.display(),
                                path.display()
                            )))
                        }
                    }
                }
                Err(e) => return Err(Error::io(&path, e)),
            }
        }
        Err(Error::Contract(format!("could not lock {}", dir.display())))
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Marks a directory as holding incomplete output until `finish` is called.
struct Partial {
    path: PathBuf,
}

impl Partial {
    fn begin(dir: &Path) -> Result<Self> {
        let path = dir.join(PARTIAL_FILE);
        fs::write(&path, b"incomplete\n").map_err(|e| Error::io(&path, e))?;
        Ok(Self { path })
    }

    fn finish(self) -> Result<()> {
        fs::remove_file(&self.path).map_err(|e| Error::io(&self.path, e))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = OpenOptions::new().append(true).create(true).open(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Param(format!("{what}: {} does not exist", path.display())))
    }
}

/// Loaded dataset with views subsampled to the configured ring size.
pub struct PreparedData {
    pub dataset: Dataset,
    pub views: Vec<ShapeViews<f32>>,
    pub resolution: usize,
}

impl PreparedData {
    pub fn labels(&self) -> Vec<usize> {
        self.dataset.labels()
    }

    pub fn is_train(&self) -> Vec<bool> {
        self.dataset.shapes.iter().map(|s| s.split == Split::Train).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.dataset.shapes.iter().map(|s| s.shape_id.clone()).collect()
    }
}

/// Loads the configured dataset. A ring of `V` views is taken as every
/// `(M/V)`-th view of the `M` stored ones.
pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    let path = cfg.dataset_path()?;
    require_file(path, "dataset")?;
    let dataset = load_dataset(path)?;
    let stored = dataset.manifest.views;
    if cfg.views == 0 || stored % cfg.views != 0 {
        return Err(Error::Param(format!("views: {} does not evenly subsample the dataset's {stored} views", cfg.views)));
    }
    let step = stored / cfg.views;
    let resolution = dataset.manifest.resolution;
    let target = cfg.network(resolution).target_resolution();
    let views = dataset
        .shapes
        .iter()
        .map(|s| ShapeViews::new(s.views.iter().step_by(step).cloned().collect(), target))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedData { dataset, views, resolution })
}

pub fn cmd_gen_data(cfg: &RunConfig) -> Result<String> {
    let dc = cfg.dataset_config();
    dc.validate()?;
    let _lock = OutputLock::acquire(&cfg.out)?;
    let partial = Partial::begin(&cfg.out)?;
    let manifest = export_dataset(&dc, &cfg.out)?;
    partial.finish()?;
    let train = manifest.records.iter().filter(|r| r.split == Split::Train).count();
    Ok(format!(
        "wrote {} shapes ({train} train, {} test), {} views at {}×{} to {}",
        manifest.records.len(),
        manifest.records.len() - train,
        manifest.views,
        manifest.resolution,
        manifest.resolution,
        cfg.out.display()
    ))
}

/// Config fields that must agree for a checkpoint to be resumed.
fn resume_key(cfg: &RunConfig) -> RunConfig {
    RunConfig { epochs: 0, out: PathBuf::new(), dataset: None, ..cfg.clone() }
}

fn training_indices(data: &PreparedData, mode: Mode) -> Vec<usize> {
    match mode {
        Mode::KnownTest => (0..data.views.len()).collect(),
        Mode::UnknownTest => data.dataset.split_indices(Split::Train),
    }
}

fn loss_row(rec: &EpochRecord) -> String {
    let s = rec.stats;
    format!("{},{},{},{},{},{}", rec.epoch + 1, s.l_u, s.l_r, s.l_d2u, s.total, s.l_d)
}

/// Keeps the header and the first `rows` data rows of the loss history.
fn truncate_losses(path: &Path, rows: usize) -> Result<()> {
    let text = if path.exists() { fs::read_to_string(path).map_err(|e| Error::io(path, e))? } else { String::new() };
    let mut out = format!("{LOSS_HEADER}\n");
    for line in text.lines().skip(1).take(rows) {
        out.push_str(line);
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<String> {
    cfg.validate_training()?;
    let data = prepare_data(cfg)?;
    let net = cfg.network(data.resolution);
    net.validate()?;
    let hp = cfg.hyper_params();
    let idx = training_indices(&data, cfg.mode);
    if idx.is_empty() {
        return Err(Error::Data("no shapes to train on".into()));
    }
    let train_views: Vec<ShapeViews<f32>> = idx.iter().map(|&i| data.views[i].clone()).collect();
    let shape_ids: Vec<String> = idx.iter().map(|&i| data.dataset.shapes[i].shape_id.clone()).collect();

    let _lock = OutputLock::acquire(&cfg.out)?;
    let ck_path = cfg.out.join(CHECKPOINT_FILE);
    let loss_path = cfg.out.join(LOSS_FILE);
    let (mut params, mut memory, start) = if resume && ck_path.exists() {
        let ck = Checkpoint::load(&ck_path)?;
        let saved = RunConfig::from_text(&ck.config)?;
        if resume_key(&saved) != resume_key(cfg) {
            return Err(Error::Param("resume: configuration differs from the checkpointed run".into()));
        }
        if ck.shape_ids != shape_ids {
            return Err(Error::Data("resume: checkpoint shapes differ from the dataset".into()));
        }
        let mut params = VipGanParams::<f32>::new(net, cfg.seed)?;
        ck.restore_into(&mut params)?;
        truncate_losses(&loss_path, ck.epochs_done as usize)?;
        (params, ck.memory, ck.epochs_done as usize)
    } else {
        let params = VipGanParams::<f32>::new(net, cfg.seed)?;
        let memory = if cfg.freeze_memory_zero {
            MemoryBank::frozen_zeros(idx.len(), cfg.f_dim)?
        } else {
            MemoryBank::random(idx.len(), cfg.f_dim, derive_seed(cfg.seed, 30))?
        };
        write_file(&loss_path, &format!("{LOSS_HEADER}\n"))?;
        (params, memory, 0)
    };
    write_file(&cfg.out.join(CONFIG_FILE), &cfg.to_text())?;
    let partial = Partial::begin(&cfg.out)?;
    let config_text = cfg.to_text();
    let epochs = cfg.epochs;
    let mut observer = |rec: &EpochRecord, p: &VipGanParams<f32>, m: &MemoryBank<f32>| -> Result<()> {
        append_line(&loss_path, &loss_row(rec))?;
        Checkpoint::from_model(config_text.clone(), rec.epoch as u64 + 1, shape_ids.clone(), p, m).save(&ck_path)?;
        let s = rec.stats;
        println!(
            "epoch {}/{epochs}  L_U {:.4}  L_R {:.4}  L_D2U {:.4}  L {:.4}  -L_D {:.4}",
            rec.epoch + 1,
            s.l_u,
            s.l_r,
            s.l_d2u,
            s.total,
            s.l_d
        );
        Ok(())
    };
    let history = fit_known_test_from(&mut params, &mut memory, &train_views, &hp, start, &mut observer)?;
    if start >= epochs {
        // nothing left to run; still leave a checkpoint reflecting the state
        Checkpoint::from_model(config_text.clone(), start as u64, shape_ids.clone(), &params, &memory).save(&ck_path)?;
    }
    partial.finish()?;
    Ok(format!(
        "trained {} shapes for epochs {}..{} ({} this run); checkpoint {}",
        idx.len(),
        start + 1,
        epochs,
        history.len(),
        ck_path.display()
    ))
}

/// Rebuilds the networks and memory stored in a checkpoint.
pub fn load_model(ck: &Checkpoint, resolution: usize) -> Result<(RunConfig, VipGanParams<f32>)> {
    let saved = RunConfig::from_text(&ck.config)?;
    let mut params = VipGanParams::<f32>::new(saved.network(resolution), saved.seed)?;
    ck.restore_into(&mut params)?;
    Ok((saved, params))
}

pub fn cmd_features(cfg: &RunConfig, checkpoint: &Path) -> Result<String> {
    require_file(checkpoint, "checkpoint")?;
    let ck = Checkpoint::load(checkpoint)?;
    let mut run_cfg = RunConfig::from_text(&ck.config)?;
    if cfg.dataset.is_some() {
        run_cfg.dataset = cfg.dataset.clone();
    }
    run_cfg.infer_iterations = cfg.infer_iterations;
    run_cfg.infer_lr = cfg.infer_lr;
    let data = prepare_data(&run_cfg)?;
    let (_, params) = load_model(&ck, data.resolution)?;
    let ids = data.ids();
    let known: HashSet<&String> = ck.shape_ids.iter().collect();
    let unknown: Vec<usize> = (0..ids.len()).filter(|&i| !known.contains(&ids[i])).collect();
    let dataset_ids: HashSet<&String> = ids.iter().collect();
    if let Some(missing) = ck.shape_ids.iter().find(|id| !dataset_ids.contains(id)) {
        return Err(Error::Data(format!("checkpoint shape {missing} is not in the dataset")));
    }

    let _lock = OutputLock::acquire(&cfg.out)?;
    let partial = Partial::begin(&cfg.out)?;
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; ids.len()];
    for (r, id) in ck.shape_ids.iter().enumerate() {
        let i = ids.iter().position(|x| x == id).expect("checked above");
        rows[i] = Some(ck.memory.row(r).iter().map(|&v| v as f64).collect());
    }
    if !unknown.is_empty() {
        let shapes: Vec<ShapeViews<f32>> = unknown.iter().map(|&i| data.views[i].clone()).collect();
        let hp = run_cfg.hyper_params();
        let (mem, history) = infer_unknown_test(&params, &shapes, &hp, derive_seed(run_cfg.seed, 40))?;
        for (r, &i) in unknown.iter().enumerate() {
            rows[i] = Some(mem.row(r).iter().map(|&v| v as f64).collect());
        }
        let mut csv = String::from("iteration,l_total\n");
        for (it, l) in history.iter().enumerate() {
            csv.push_str(&format!("{},{l}\n", it + 1));
        }
        write_file(&cfg.out.join("inference_losses.csv"), &csv)?;
    }
    let table = FeatureTable {
        ids,
        classes: data.dataset.shapes.iter().map(|s| s.class.clone()).collect(),
        splits: data.dataset.shapes.iter().map(|s| s.split).collect(),
        rows: rows.into_iter().map(|r| r.expect("every shape filled")).collect(),
    };
    let out = cfg.out.join(FEATURES_FILE);
    table.write(&out)?;
    partial.finish()?;
    Ok(format!(
        "wrote {} feature rows ({} learned in training, {} inferred) to {}",
        table.rows.len(),
        ck.shape_ids.len(),
        unknown.len(),
        out.display()
    ))
}

fn svm(cfg: &RunConfig) -> SvmConfig {
    SvmConfig { c: cfg.svm_c, ..SvmConfig::default() }
}

pub fn cmd_classify(cfg: &RunConfig, features: &Path) -> Result<String> {
    require_file(features, "features")?;
    let table = FeatureTable::read(features)?;
    let labels = table.labels();
    let is_train: Vec<bool> = table.splits.iter().map(|&s| s == Split::Train).collect();
    let (inst, class) = probe_split(&table.rows, &labels, &is_train, &svm(cfg))?;
    let n_train = is_train.iter().filter(|&&t| t).count();
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let csv = format!(
        "instance_acc,class_acc,train_shapes,test_shapes\n{inst},{class},{n_train},{}\n",
        labels.len() - n_train
    );
    write_file(&cfg.out.join("classify.csv"), &csv)?;
    Ok(format!("instance accuracy {:.2}%  class accuracy {:.2}%", 100.0 * inst, 100.0 * class))
}

pub fn cmd_retrieve(cfg: &RunConfig, features: &Path) -> Result<String> {
    require_file(features, "features")?;
    let table = FeatureTable::read(features)?.subset(Split::Test);
    let lists = rank_all(&table.rows, &table.labels(), cfg.metric)?;
    let rep = retrieval_metrics(&lists)?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let csv = format!(
        "metric,map,ndcg,micro_precision,micro_recall,micro_f1,macro_precision,macro_recall,macro_f1,queries,excluded\n\
         {},{},{},{},{},{},{},{},{},{},{}\n",
        cfg.metric,
        rep.map,
        rep.ndcg,
        rep.micro.precision,
        rep.micro.recall,
        rep.micro.f1,
        rep.macro_avg.precision,
        rep.macro_avg.recall,
        rep.macro_avg.f1,
        rep.queries,
        rep.excluded.len()
    );
    write_file(&cfg.out.join("retrieval.csv"), &csv)?;
    let mut pr = String::from("rank,recall,precision\n");
    for (k, (r, p)) in rep.pr_curve.iter().enumerate() {
        pr.push_str(&format!("{},{r},{p}\n", k + 1));
    }
    write_file(&cfg.out.join("pr_curve.csv"), &pr)?;
    Ok(format!("mAP {:.4}  NDCG {:.4} over {} queries", rep.map, rep.ndcg, rep.queries - rep.excluded.len()))
}

pub fn cmd_algebra(cfg: &RunConfig, features: &Path, a: &str, b: &str, c: &str, k: usize) -> Result<String> {
    require_file(features, "features")?;
    let table = FeatureTable::read(features)?;
    let find = |name: &str, id: &str| {
        table.ids.iter().position(|x| x == id).ok_or_else(|| Error::Param(format!("{name}: unknown shape id {id:?}")))
    };
    let (ia, ib, ic) = (find("a", a)?, find("b", b)?, find("c", c)?);
    let hits = feature_algebra(&table.rows, ia, ib, ic, k, cfg.metric)?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let mut csv = String::from("rank,shape_id,class\n");
    for (r, &i) in hits.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", r + 1, table.ids[i], table.classes[i]));
    }
    write_file(&cfg.out.join("algebra.csv"), &csv)?;
    let names: Vec<&str> = hits.iter().map(|&i| table.ids[i].as_str()).collect();
    Ok(format!("{a} - {b} + {c} ≈ {}", names.join(", ")))
}

fn trained_model(path: &Path, data: &PreparedData) -> Result<TrainedModel<f32>> {
    require_file(path, "checkpoint")?;
    let ck = Checkpoint::load(path)?;
    if ck.shape_ids != data.ids() {
        return Err(Error::Data(format!(
            "{} was not trained in known-test mode on this dataset",
            path.display()
        )));
    }
    let (_, params) = load_model(&ck, data.resolution)?;
    Ok(TrainedModel { params, memory: ck.memory })
}

pub fn cmd_aggregation(cfg: &RunConfig, checkpoint: &Path, zero_checkpoint: &Path) -> Result<String> {
    require_file(checkpoint, "checkpoint")?;
    let ck_cfg = RunConfig::from_text(&Checkpoint::load(checkpoint)?.config)?;
    let mut run_cfg = ck_cfg;
    if cfg.dataset.is_some() {
        run_cfg.dataset = cfg.dataset.clone();
    }
    let data = prepare_data(&run_cfg)?;
    let ours = trained_model(checkpoint, &data)?;
    let zero = trained_model(zero_checkpoint, &data)?;
    let rows = compare_aggregation(
        &zero,
        &ours,
        &data.views,
        &data.labels(),
        &data.is_train(),
        &run_cfg.hyper_params(),
        &svm(cfg),
    )?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let mut csv = String::from("method,instance_acc,class_acc\n");
    let mut msg = String::new();
    for r in &rows {
        csv.push_str(&format!("{},{},{}\n", r.method, r.instance_acc, r.class_acc));
        msg.push_str(&format!("{:<24} {:6.2}% {:6.2}%\n", r.method, 100.0 * r.instance_acc, 100.0 * r.class_acc));
    }
    write_file(&cfg.out.join("aggregation.csv"), &csv)?;
    Ok(msg.trim_end().to_string())
}

/// One cell of an ablation grid: a label and config overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub label: String,
    pub overrides: Vec<(String, String)>,
}

/// The nine loss-weight cells, ending with the deeper-generator variant.
pub fn balance_grid() -> Vec<GridCell> {
    let cells: [(&str, &str); 9] = [
        ("(1,0.05)", "alpha=1 beta=0.05"),
        ("(3,0.05)", "alpha=3 beta=0.05"),
        ("(5,0.05)", "alpha=5 beta=0.05"),
        ("(3,0.1)", "alpha=3 beta=0.1"),
        ("(3,0.01)", "alpha=3 beta=0.01"),
        ("(3,0)", "alpha=3 beta=0"),
        ("(0,0.01)", "alpha=0 beta=0.01"),
        ("(0,0)", "alpha=0 beta=0"),
        ("(0,0)C", "alpha=0 beta=0 refined_generator=true"),
    ];
    cells.iter().map(|(l, o)| parse_cell(&format!("{l} {o}"), 0).expect("built-in cell")).collect()
}

/// Memory size, ring, variant and single-loss cells.
pub fn parameter_grid() -> Vec<GridCell> {
    let cells = [
        "F128 f_dim=128",
        "F64 f_dim=64",
        "N2 neighbors=2",
        "N6 neighbors=6",
        "V6 views=6",
        "V3 views=3 neighbors=2",
        "cGAN cgan=true",
        "BiDir bidirectional=true",
        "R loss=r-only",
        "D loss=d-only",
    ];
    cells.iter().map(|c| parse_cell(c, 0).expect("built-in cell")).collect()
}

/// `label key=value key=value ...`; a first token containing `=` means the
/// label is derived from the overrides.
fn parse_cell(line: &str, lineno: usize) -> Result<GridCell> {
    let mut tokens = line.split_whitespace().peekable();
    let label = match tokens.peek() {
        Some(t) if !t.contains('=') => tokens.next().unwrap_or_default().to_string(),
        _ => String::new(),
    };
    let mut overrides = Vec::new();
    for t in tokens {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| Error::Param(format!("grid line {}: expected key=value, got {t:?}", lineno + 1)))?;
        overrides.push((k.to_string(), v.to_string()));
    }
    if overrides.is_empty() && label.is_empty() {
        return Err(Error::Param(format!("grid line {}: empty cell", lineno + 1)));
    }
    let label = if label.is_empty() {
        overrides.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
    } else {
        label
    };
    Ok(GridCell { label, overrides })
}

/// Parses a grid: a built-in name (`balance`, `parameters`, `all`) or the
/// path of a file with one cell per line.
pub fn parse_grid(spec: &str) -> Result<Vec<GridCell>> {
    match spec {
        "balance" => return Ok(balance_grid()),
        "parameters" => return Ok(parameter_grid()),
        "all" => return Ok(balance_grid().into_iter().chain(parameter_grid()).collect()),
        _ => {}
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::Param(format!("grid: {spec:?} is neither a built-in grid nor a file")));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cells = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, l)| parse_cell(l, n))
        .collect::<Result<Vec<_>>>()?;
    if cells.is_empty() {
        return Err(Error::Param("grid: no cells".into()));
    }
    Ok(cells)
}

pub const ABLATION_HEADER: &str =
    "cell,alpha,beta,loss,f_dim,neighbors,views,cgan,bidirectional,refined_generator,final_l_u,final_l,instance_acc,class_acc";

/// Trains one known-test model per cell from the same seed and probes the
/// memory rows. Every cell is validated before any training starts.
pub fn cmd_ablate(cfg: &RunConfig, grid: &[GridCell]) -> Result<String> {
    let mut cells = Vec::with_capacity(grid.len());
    for cell in grid {
        let mut c = cfg.clone();
        for (k, v) in &cell.overrides {
            c.set(k, v).map_err(|e| Error::Param(format!("cell {}: {e}", cell.label)))?;
        }
        c.mode = Mode::KnownTest;
        c.validate_training().map_err(|e| Error::Param(format!("cell {}: {e}", cell.label)))?;
        cells.push((cell.label.clone(), c));
    }
    require_file(cfg.dataset_path()?, "dataset")?;
    let _lock = OutputLock::acquire(&cfg.out)?;
    let partial = Partial::begin(&cfg.out)?;
    let path = cfg.out.join("ablation.csv");
    write_file(&path, &format!("{ABLATION_HEADER}\n"))?;
    let mut summary = String::new();
    for (label, c) in &cells {
        let data = prepare_data(c)?;
        let hp = c.hyper_params();
        let mut params = VipGanParams::<f32>::new(c.network(data.resolution), c.seed)?;
        let mut memory = MemoryBank::random(data.views.len(), c.f_dim, derive_seed(c.seed, 30))?;
        let history = fit_known_test_from(&mut params, &mut memory, &data.views, &hp, 0, &mut |_, _, _| Ok(()))?;
        let last = history.last().map(|r| r.stats).unwrap_or_default();
        let rows: Vec<Vec<f64>> = (0..memory.shapes()).map(|i| memory.row(i).iter().map(|&v| v as f64).collect()).collect();
        let (inst, class) = probe_split(&rows, &data.labels(), &data.is_train(), &svm(c))?;
        let (_, alpha, beta) = c.loss_weights();
        append_line(
            &path,
            &format!(
                "{label},{alpha},{beta},{},{},{},{},{},{},{},{},{},{inst},{class}",
                c.loss.name(),
                c.f_dim,
                c.neighbors,
                c.views,
                c.cgan,
                c.bidirectional,
                c.refined_generator,
                last.l_u,
                last.total
            ),
        )?;
        let line = format!("{label:<12} instance {:6.2}%  class {:6.2}%", 100.0 * inst, 100.0 * class);
        println!("{line}");
        summary.push_str(&line);
        summary.push('\n');
    }
    partial.finish()?;
    Ok(summary.trim_end().to_string())
}

/// Side-by-side `prediction | ground truth` image.
fn pair_image(pred: &Tensor<f32>, truth: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (h, w) = (truth.shape()[1], truth.shape()[2]);
    let mut data = vec![-1.0f32; 3 * h * 2 * w];
    for ch in 0..3 {
        for y in 0..h {
            for x in 0..w {
                data[(ch * h + y) * 2 * w + x] = pred.data()[(ch * h + y) * w + x];
                data[(ch * h + y) * 2 * w + w + x] = truth.data()[(ch * h + y) * w + x];
            }
        }
    }
    Tensor::from_vec(&[3, h, 2 * w], data)
}

const SUMMARY_MAX_COLUMNS: usize = 16;

fn csv_summary(dir: &Path) -> Result<String> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut out = String::new();
    for f in files {
        let text = fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?;
        let lines: Vec<&str> = text.lines().collect();
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        out.push_str(&format!("{name}: {} rows\n", lines.len().saturating_sub(1)));
        let Some(h) = lines.first() else { continue };
        let cols: Vec<&str> = h.split(',').collect();
        if cols.len() <= SUMMARY_MAX_COLUMNS {
            out.push_str(&format!("  columns: {h}\n"));
            if lines.len() > 1 {
                out.push_str(&format!("  last:    {}\n", lines[lines.len() - 1]));
            }
        } else {
            out.push_str(&format!("  columns: {} ... ({} total)\n", cols[..4].join(","), cols.len()));
        }
    }
    Ok(out)
}

/// Writes predicted/ground-truth center pairs for sampled sections and a
/// plain-text summary of the run's CSV files.
pub fn cmd_report(cfg: &RunConfig, run_dir: &Path) -> Result<String> {
    let ck_path = run_dir.join(CHECKPOINT_FILE);
    if !run_dir.is_dir() || !ck_path.exists() {
        return Err(Error::Param(format!("report: {} holds no trained run", run_dir.display())));
    }
    let ck = Checkpoint::load(&ck_path)?;
    let mut run_cfg = RunConfig::from_text(&ck.config)?;
    if cfg.dataset.is_some() {
        run_cfg.dataset = cfg.dataset.clone();
    }
    let data = prepare_data(&run_cfg)?;
    let (_, params) = load_model(&ck, data.resolution)?;
    let sections = run_cfg.hyper_params().sections()?;
    let ids = data.ids();
    let report_dir = run_dir.join("report");
    fs::create_dir_all(&report_dir).map_err(|e| Error::io(&report_dir, e))?;
    let n = ck.shape_ids.len();
    let samples = cfg.report_samples.min(n * sections.len());
    let mut index = String::from("image,shape_id,center_view\n");
    for s in 0..samples {
        let row = s * n / samples.max(1);
        let sec = &sections[s % sections.len()];
        let i = ids
            .iter()
            .position(|x| *x == ck.shape_ids[row])
            .ok_or_else(|| Error::Data(format!("checkpoint shape {} is not in the dataset", ck.shape_ids[row])))?;
        let (pred, truth) = predict_center(&params, ck.memory.row(row), &data.views[i], sec)?;
        let name = format!("section_{s:02}.ppm");
        let p = report_dir.join(&name);
        fs::write(&p, encode_ppm(&pair_image(&pred, &truth)?)?).map_err(|e| Error::io(&p, e))?;
        index.push_str(&format!("{name},{},{}\n", ck.shape_ids[row], sec.center));
    }
    write_file(&report_dir.join("images.csv"), &index)?;
    let summary = format!(
        "run: {}\nepochs completed: {}\nshapes: {n}\n\n{}",
        run_dir.display(),
        ck.epochs_done,
        csv_summary(run_dir)?
    );
    write_file(&report_dir.join("summary.txt"), &summary)?;
    Ok(format!("wrote {samples} image pairs and summary to {}", report_dir.display()))
}
