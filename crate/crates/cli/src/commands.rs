use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use vclt_core::community::louvain_hierarchy;
use vclt_core::confusion_graph::{build_confusion_graph, read_score_log, write_score_log};
use vclt_core::flops::{self, FcLayerSpec, FlopReport, HeadComparison};
use vclt_core::quality::{path_product_score, CategoryDistances, Linkage};
use vclt_core::synth::{generate_blobs, generate_score_log, BlobSpec, ConfusionPair};
use vclt_core::{
    build_vclt, evaluate_report, train_tree, ConfusionGraph, Dataset, KernelTemplate, LabelTree,
    PartitionHierarchy, TrainingConfig, TreeModel,
};

use crate::config::PipelineConfig;
use crate::{
    BuildGraphArgs, BuildTreeArgs, CliError, CompareTreesArgs, DetectArgs, EvaluateArgs, FlopsArgs,
    PredictArgs, SynthArgs, TrainArgs,
};

pub struct Context {
    pub seed: u64,
    pub verbose: bool,
    pub cfg: PipelineConfig,
}

impl Context {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn require(flag: Option<PathBuf>, cfg: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| cfg.clone())
        .ok_or_else(|| CliError::Usage(format!("missing --{name} (flag or [paths] config entry)")))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush()
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Adds the file name to errors raised while reading it.
fn in_file<T>(path: &Path, r: vclt_core::Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        vclt_core::Error::Format { line, message } => vclt_core::Error::Format {
            line,
            message: format!("{}: {message}", path.display()),
        }
        .into(),
        other => other.into(),
    })
}

fn parse_strength(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Usage(format!("bad strength `{s}` in {what}")))
}

fn parse_index(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| CliError::Usage(format!("bad class index `{s}` in {what}")))
}

pub fn synth(ctx: &Context, a: SynthArgs) -> Result<()> {
    let sc = &ctx.cfg.synth;
    let spec = BlobSpec {
        n_classes: a.classes.or(sc.classes).unwrap_or(16),
        n_superclusters: a.superclusters.or(sc.superclusters).unwrap_or(4),
        samples_per_class: a.samples_per_class.or(sc.samples_per_class).unwrap_or(125),
        dim: a.dim.or(sc.dim).unwrap_or(8),
        intra_spread: a.intra_spread.or(sc.intra_spread).unwrap_or(1.0),
        inter_spread: a.inter_spread.or(sc.inter_spread).unwrap_or(10.0),
        seed: ctx.seed,
    };
    let noise = a.noise.or(sc.noise).unwrap_or(0.1);
    let within = a.within_supercluster.or(sc.within_supercluster).unwrap_or(0.2);
    let confusion = if a.confusion.is_empty() {
        sc.confusion.clone().unwrap_or_default()
    } else {
        a.confusion
    };
    let groups = if a.group.is_empty() {
        sc.groups.clone().unwrap_or_default()
    } else {
        a.group
    };
    let out_dir = require(a.out_dir, &ctx.cfg.paths.out_dir, "out-dir")?;

    // later sources override earlier ones for the same pair
    let mut planted: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    if within > 0.0 {
        for i in 0..spec.n_classes {
            for j in i + 1..spec.n_classes {
                if spec.supercluster_of(i) == spec.supercluster_of(j) {
                    planted.insert((i, j), within);
                }
            }
        }
    }
    for g in &groups {
        let (members, s) = g
            .rsplit_once(':')
            .ok_or_else(|| CliError::Usage(format!("group `{g}` must look like i,j,k:strength")))?;
        let strength = parse_strength(s, g)?;
        let members: Vec<usize> = members
            .split(',')
            .map(|m| parse_index(m, g))
            .collect::<Result<_>>()?;
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                planted.insert((i.min(j), i.max(j)), strength);
            }
        }
    }
    for p in &confusion {
        let parts: Vec<&str> = p.split(':').collect();
        let [i, j, s] = parts[..] else {
            return Err(CliError::Usage(format!("confusion `{p}` must look like a:b:strength")));
        };
        let (i, j) = (parse_index(i, p)?, parse_index(j, p)?);
        planted.insert((i.min(j), i.max(j)), parse_strength(s, p)?);
    }
    let pairs: Vec<ConfusionPair> = planted
        .into_iter()
        .map(|((a, b), strength)| ConfusionPair { a, b, strength })
        .collect();

    let (train, test) = generate_blobs::<f64>(&spec)?;
    let log = generate_score_log(&train.features, &train.labels, spec.n_classes, noise, &pairs, ctx.seed)?;

    for (name, data) in [("train.csv", &train), ("test.csv", &test)] {
        let path = out_dir.join(name);
        let mut w = create(&path)?;
        data.write(&mut w)?;
        finish(w, &path)?;
    }
    let path = out_dir.join("scores.csv");
    let mut w = create(&path)?;
    write_score_log(&log, spec.n_classes, &mut w)?;
    finish(w, &path)?;
    ctx.log(format!(
        "synth: {} train / {} test rows, {} planted pairs -> {}",
        train.len(),
        test.len(),
        pairs.len(),
        out_dir.display()
    ));
    Ok(())
}

pub fn build_graph(ctx: &Context, a: BuildGraphArgs) -> Result<()> {
    let paths = &ctx.cfg.paths;
    let scores = require(a.scores, &paths.scores, "scores")?;
    let out = require(a.out, &paths.graph, "out")?;
    let (records, n) = in_file(&scores, read_score_log::<f64, _>(open(&scores)?))?;
    let tau = a.tau.or(ctx.cfg.tau).unwrap_or(n.min(5));
    let mut graph = in_file(&scores, build_confusion_graph(&records, n, tau))?;
    if let Some(names) = a.names.or_else(|| ctx.cfg.names.clone()) {
        graph = graph.with_names(names)?;
    }
    let mut w = create(&out)?;
    graph.write(&mut w)?;
    finish(w, &out)?;
    ctx.log(format!(
        "build-graph: {} records, N={n}, tau={tau}, {} edges",
        records.len(),
        graph.edge_count()
    ));
    Ok(())
}

pub fn detect(ctx: &Context, a: DetectArgs) -> Result<()> {
    let paths = &ctx.cfg.paths;
    let graph_path = require(a.graph, &paths.graph, "graph")?;
    let out = require(a.out, &paths.hierarchy, "out")?;
    let graph = in_file(&graph_path, ConfusionGraph::<f64>::read(open(&graph_path)?))?;
    let h = louvain_hierarchy(&graph)?;
    let mut w = create(&out)?;
    h.write(&mut w)?;
    finish(w, &out)?;
    for (i, level) in h.levels.iter().enumerate() {
        ctx.log(format!(
            "detect: level {} -> {} communities, Q={}",
            i + 1,
            level.len(),
            level.modularity
        ));
    }
    Ok(())
}

pub fn build_tree(ctx: &Context, a: BuildTreeArgs) -> Result<()> {
    let paths = &ctx.cfg.paths;
    let h_path = require(a.hierarchy, &paths.hierarchy, "hierarchy")?;
    let out = require(a.out, &paths.tree, "out")?;
    let h = in_file(&h_path, PartitionHierarchy::<f64>::read(open(&h_path)?))?;
    let names = match a.graph.or_else(|| paths.graph.clone()) {
        Some(g) => in_file(&g, ConfusionGraph::<f64>::read(open(&g)?))?
            .category_names()
            .to_vec(),
        None => Vec::new(),
    };
    let tree = build_vclt(&h, &names)?;
    let mut w = create(&out)?;
    tree.write(&mut w)?;
    finish(w, &out)?;
    ctx.log(format!(
        "build-tree: {} nodes, layer sizes {:?}",
        tree.len(),
        tree.layers().iter().map(Vec::len).collect::<Vec<_>>()
    ));
    Ok(())
}

fn training_config(ctx: &Context, a: &TrainArgs) -> Result<(TrainingConfig<f64>, Vec<KernelTemplate>)> {
    let c = &ctx.cfg;
    let d = TrainingConfig::<f64>::default();
    let cfg = TrainingConfig {
        c: a.c.or(c.c).unwrap_or(d.c),
        lambda: a.lambda.or(c.lambda).unwrap_or(d.lambda),
        rho: a.rho.or(c.rho).unwrap_or(d.rho),
        mkl_iters: a.mkl_iters.or(c.mkl_iters).unwrap_or(d.mkl_iters),
        refine_epochs: a.refine_epochs.or(c.refine_epochs).unwrap_or(d.refine_epochs),
        tol: a.tol.or(c.tol).unwrap_or(d.tol),
        step: a.step.or(c.step).unwrap_or(d.step),
    };
    cfg.validate()?;
    let bank = match a.kernels.clone().or_else(|| c.kernels.clone()) {
        Some(list) => list
            .iter()
            .map(|k| k.parse::<KernelTemplate>().map_err(CliError::from))
            .collect::<Result<Vec<_>>>()?,
        None => KernelTemplate::default_bank(),
    };
    Ok((cfg, bank))
}

pub fn train(ctx: &Context, a: TrainArgs) -> Result<()> {
    let paths = &ctx.cfg.paths;
    let tree_path = require(a.tree.clone(), &paths.tree, "tree")?;
    let data_path = require(a.train.clone(), &paths.train_data, "train")?;
    let out = require(a.out.clone(), &paths.model, "out")?;
    let (cfg, bank) = training_config(ctx, &a)?;
    let tree = in_file(&tree_path, LabelTree::read(open(&tree_path)?))?;
    let data = in_file(&data_path, Dataset::<f64>::read(open(&data_path)?))?;
    let (model, report) = train_tree(&tree, &data, &bank, &cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    model.save(&out)?;
    for (parent, g) in &report.groups {
        ctx.log(format!(
            "train: group {parent}: {} samples, weights {:?}, inter-level violations {} -> {}",
            report.group_samples[parent].len(),
            g.kernel.weights,
            g.violations_before,
            g.violations_after
        ));
    }
    ctx.log(format!(
        "train: {} groups, {} pass-through, {} support vectors",
        report.groups.len(),
        report.pass_through.len(),
        model.support_vectors.len()
    ));
    Ok(())
}

fn load_model(path: &Path) -> Result<TreeModel<f64>> {
    if !path.exists() {
        return Err(CliError::Io(format!("cannot open {}: not found", path.display())));
    }
    Ok(TreeModel::<f64>::load(path)?)
}

pub fn predict(ctx: &Context, a: PredictArgs) -> Result<()> {
    let model_path = require(a.model, &ctx.cfg.paths.model, "model")?;
    let model = load_model(&model_path)?;
    let data = in_file(&a.input, Dataset::<f64>::read(open(&a.input)?))?;
    let preds = model.predict_batch(&data.features)?;

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["sample_id", "predicted_label", "path"])
            .map_err(vclt_core::Error::from)?;
        for (id, p) in data.ids.iter().zip(&preds) {
            let path = p
                .path
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join("/");
            w.write_record([id.as_str(), &p.label.to_string(), &path])
                .map_err(vclt_core::Error::from)?;
        }
        w.flush().map_err(vclt_core::Error::from)?;
    }
    emit(a.out.as_deref(), &buf)?;
    ctx.log(format!("predict: {} rows", preds.len()));
    Ok(())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(bytes)
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?;
            finish(w, p)
        }
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Io(format!("cannot write stdout: {e}"))),
    }
}

pub fn evaluate(ctx: &Context, a: EvaluateArgs) -> Result<()> {
    let paths = &ctx.cfg.paths;
    let model_path = require(a.model, &paths.model, "model")?;
    let test_path = require(a.test, &paths.test_data, "test")?;
    let model = load_model(&model_path)?;
    let test = in_file(&test_path, Dataset::<f64>::read(open(&test_path)?))?;
    let report = evaluate_report(&model, &test)?;
    let mut buf = Vec::new();
    report.write(&mut buf)?;
    buf.push(b'\n');
    emit(a.out.as_deref(), &buf)?;
    ctx.log(format!(
        "evaluate: MA {:.2}%, pooled {:.2}%",
        report.mean_accuracy, report.pooled_accuracy
    ));
    Ok(())
}

fn parse_layers(specs: &[String]) -> Result<Vec<FcLayerSpec>> {
    specs
        .iter()
        .map(|s| {
            let (i, o) = s
                .split_once('x')
                .ok_or_else(|| CliError::Usage(format!("layer `{s}` must look like INxOUT")))?;
            let dim = |v: &str| {
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| CliError::Usage(format!("bad dimension in layer `{s}`")))
            };
            Ok(FcLayerSpec::new(dim(i)?, dim(o)?))
        })
        .collect()
}

fn table_rows(dataset: &str, r: &FlopReport) -> [String; 2] {
    let millions = |v: u64| format!("{:.2}", v as f64 / 1e6);
    [
        format!("{:<10} {:<10} {:>12} {:>8} {:>8}", "FC", dataset, r.fc_ops, millions(r.fc_ops), "1x"),
        format!(
            "{:<10} {:<10} {:>12} {:>8} {:>8}",
            "tree",
            dataset,
            r.tree_ops,
            millions(r.tree_ops),
            format!("{}x", r.rounded_speedup())
        ),
    ]
}

pub fn flops(_ctx: &Context, a: FlopsArgs) -> Result<()> {
    let mut lines = vec![
        format!(
            "{:<10} {:<10} {:>12} {:>8} {:>8}",
            "classifier", "dataset", "ops", "ops(M)", "speedup"
        ),
    ];
    let custom = a.fc.is_some() || a.tree.is_some() || a.classifiers.is_some();
    if custom {
        let fc = parse_layers(a.fc.as_deref().ok_or_else(|| {
            CliError::Usage("--fc is required with --tree or --classifiers".into())
        })?)?;
        let n = match (&a.tree, a.classifiers) {
            (Some(p), _) => flops::worst_path_classifiers(&in_file(p, LabelTree::read(open(p)?))?),
            (None, Some(n)) => n,
            (None, None) => {
                return Err(CliError::Usage("--fc needs --tree or --classifiers".into()));
            }
        };
        let cmp = HeadComparison {
            dataset: a.label.clone(),
            fc_layers: fc,
            n_classifiers: n,
            feature_dim: a.feature_dim,
        };
        lines.extend(table_rows(&cmp.dataset, &cmp.report()?));
    } else {
        for cmp in flops::reference_comparisons() {
            lines.extend(table_rows(&cmp.dataset, &cmp.report()?));
        }
    }
    let mut text = lines.join("\n");
    text.push('\n');
    emit(None, text.as_bytes())
}

fn read_distances(path: &Path) -> Result<CategoryDistances<f64>> {
    let mut rows = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| {
                    CliError::Format(format!("{} line {}: bad distance `{v}`", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(CategoryDistances::new(rows)?)
}

pub fn compare_trees(ctx: &Context, a: CompareTreesArgs) -> Result<()> {
    if a.trees.len() < 2 {
        return Err(CliError::Usage("compare-trees needs at least two --tree files".into()));
    }
    let linkage = match a.linkage.as_str() {
        "single" => Linkage::Single,
        "average" => Linkage::Average,
        other => return Err(CliError::Usage(format!("unknown linkage `{other}`"))),
    };
    let dist_path = require(a.distances, &ctx.cfg.paths.distances, "distances")?;
    let dist = read_distances(&dist_path)?;
    let mut lines = vec!["tree\ttotal".to_string()];
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in a.trees.iter().enumerate() {
        let tree = in_file(p, LabelTree::read(open(p)?))?;
        let score = path_product_score(&tree, &dist, a.k, linkage)?;
        lines.push(format!("{}\t{}", p.display(), score.total));
        if best.is_none_or(|(_, b)| score.total > b) {
            best = Some((i, score.total));
        }
    }
    if let Some((i, _)) = best {
        lines.push(format!("best\t{}", a.trees[i].display()));
    }
    let mut text = lines.join("\n");
    text.push('\n');
    emit(None, text.as_bytes())
}
