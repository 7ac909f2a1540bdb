use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use wppl::autodiff::AdamConfig;
use wppl::derive_seed;
use wppl::lang::{canonicalise, parse, Program};
use wppl::meta::{
    evaluate, evaluate_with, flat_baseline, reference_samples, train, CorpusEntry, Plateau, ReferenceMethod, TrainConfig,
    TrainingCorpus, LOSS_CSV_HEADER,
};
use wppl::progen::{class_spec, class_specs, ext1_holdout, generate_corpus, Split};
use wppl::samplers::{ess_chain, ess_weights, program_hash, snis_proposal, HmcConfig, WeightedSampleSet};
use wppl::typeck::{check_program, DisplayTriple};
use wppl::whitebox::{BankConfig, InputScaling, MeanFieldPosterior, NetworkBank};
use wppl::Model;

use crate::args::*;
use crate::bench::{run_bench, summarise, write_rows_csv, write_summary_csv, BenchConfig};
use crate::manifest::Recorder;
use crate::CliError;

/// What every command gets besides its own arguments.
pub struct Ctx {
    pub deterministic: bool,
    /// Arguments with `--out` removed, for the manifest.
    pub args: Vec<String>,
}

impl Ctx {
    fn recorder(&self, command: &str, config: &impl serde::Serialize) -> Recorder {
        let config = serde_json::to_value(config).expect("arguments serialise");
        Recorder::new(command, self.args.clone(), config, self.deterministic)
    }
}

fn parse_text(path: &Path, text: &str) -> Result<Program, CliError> {
    parse(text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Parse and canonicalise, recording the file hash.
fn load_program(rec: &mut Recorder, path: &Path) -> Result<Program, CliError> {
    let text = rec.read_string(path)?;
    Ok(canonicalise(&parse_text(path, &text)?))
}

fn load_bank(rec: &mut Recorder, path: &Path) -> Result<NetworkBank, CliError> {
    let bytes = rec.read(path)?;
    let (bank, _) = NetworkBank::load(&bytes[..]).map_err(|source| CliError::Bank {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(bank)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `.wppl` files of a directory in name order.
fn program_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let p = e.map_err(|e| CliError::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "wppl") {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("{}: no .wppl files", dir.display())));
    }
    Ok(files)
}

fn split_of(path: &Path) -> Split {
    if stem(path).starts_with("test-") {
        Split::Test
    } else {
        Split::Train
    }
}

fn keep(split: Option<SplitArg>, s: Split) -> bool {
    match split {
        None => true,
        Some(SplitArg::Train) => s == Split::Train,
        Some(SplitArg::Test) => s == Split::Test,
    }
}

fn load_corpus(
    rec: &mut Recorder,
    programs: &Path,
    caches: Option<&Path>,
    split: Option<SplitArg>,
    require_caches: bool,
) -> Result<Vec<CorpusEntry>, CliError> {
    let caches = caches.unwrap_or(programs);
    let mut entries = Vec::new();
    for path in program_files(programs)? {
        let split_tag = split_of(&path);
        if !keep(split, split_tag) {
            continue;
        }
        let program = load_program(rec, &path)?;
        let label = stem(&path);
        let cache_path = caches.join(format!("{label}.cache"));
        let cache = if cache_path.exists() {
            let bytes = rec.read(&cache_path)?;
            Some(
                WeightedSampleSet::read_for(&bytes[..], &program).map_err(|source| CliError::Cache {
                    path: cache_path.clone(),
                    source,
                })?,
            )
        } else if require_caches {
            return Err(CliError::Usage(format!("{}: missing cache", cache_path.display())));
        } else {
            None
        };
        entries.push(CorpusEntry {
            label,
            program,
            cache,
            split: split_tag,
        });
    }
    Ok(entries)
}

pub fn gen(ctx: &Ctx, a: &GenArgs) -> Result<(), CliError> {
    let mut rec = ctx.recorder("gen", a);
    rec.seed(a.seed);
    let pick = |kind: Option<usize>| match kind {
        Some(k) => class_spec(&a.class, Some(k)).map(|s| vec![s]),
        None => class_specs(&a.class),
    };
    let (train_specs, test_specs) = match a.holdout {
        Some(j) if a.class == "ext1" && (1..=4).contains(&j) => ext1_holdout(j),
        Some(j) => return Err(CliError::Usage(format!("--holdout {j} needs --class ext1 and a graph in 1..=4"))),
        None => (pick(a.kind)?, pick(a.test_kind)?),
    };
    let sk = generate_corpus(&train_specs, &test_specs, (a.count, a.test_count), a.holdout.is_some(), a.seed)?;
    rec.lap("generate");
    create_dir(&a.out)?;
    let mut programs = Vec::new();
    for (split, list) in [("train", &sk.train), ("test", &sk.test)] {
        for (i, g) in list.iter().enumerate() {
            let file = format!("{split}-{i:04}.wppl");
            write_file(&a.out.join(&file), &g.text)?;
            programs.push(json!({
                "file": file,
                "split": split,
                "class": g.class,
                "kind": g.kind,
                "seed": g.seed,
                "theta": g.theta,
                "latents": g.latents,
                "observations": g.observations,
            }));
        }
    }
    rec.details(json!({ "programs": programs }));
    rec.write(&a.out)?;
    println!("wrote {} programs to {}", programs.len(), a.out.display());
    Ok(())
}

pub fn check(file: &Path) -> Result<(), CliError> {
    let p = parse_text(file, &read_text(file)?)?;
    let state = check_program(&p).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("{}", DisplayTriple { state: &state, names: p.names() });
    Ok(())
}

pub fn density(file: &Path, z: &str) -> Result<(), CliError> {
    let p = parse_text(file, &read_text(file)?)?;
    let z: Vec<f64> = z
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| CliError::Usage(format!("bad latent value `{s}`"))))
        .collect::<Result<_, _>>()?;
    println!("{}", Model::new(&p)?.log_density(&z)?);
    Ok(())
}

fn csv_line(label: &str, xs: &[f64]) -> String {
    std::iter::once(label.to_string()).chain(xs.iter().map(|x| x.to_string())).collect::<Vec<_>>().join(",")
}

pub fn simulate(file: &Path, seed: u64) -> Result<(), CliError> {
    let p = parse_text(file, &read_text(file)?)?;
    let (z, obs) = Model::new(&p)?.simulate(&mut ChaCha8Rng::seed_from_u64(seed))?;
    println!("{}", csv_line("z", &z));
    println!("{}", csv_line("obs", &obs));
    Ok(())
}

pub fn refsample(ctx: &Ctx, a: &RefsampleArgs) -> Result<(), CliError> {
    let mut rec = ctx.recorder("refsample", a);
    rec.seed(a.seed);
    let mut programs = Vec::new();
    for path in &a.programs {
        programs.push((stem(path), load_program(&mut rec, path)?));
    }
    let mut stems: Vec<&str> = programs.iter().map(|(s, _)| s.as_str()).collect();
    stems.sort();
    if stems.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Usage("program file names must be distinct".into()));
    }
    let proposal = match (a.method, &a.proposal) {
        (MethodArg::Pred, Some(path)) => {
            let bytes = rec.read(path)?;
            let q: MeanFieldPosterior = serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
                path: path.clone(),
                source,
            })?;
            Some(q)
        }
        (MethodArg::Pred, None) => return Err(CliError::Usage("--method pred needs --proposal".into())),
        _ => None,
    };
    let hmc = HmcConfig {
        leapfrog_steps: a.hmc.leapfrog,
        warmup: a.hmc.warmup,
        samples: a.hmc.hmc_samples,
        chains: a.hmc.chains,
        serial: ctx.deterministic,
        ..HmcConfig::default()
    };
    let method = match a.method {
        MethodArg::Exact => ReferenceMethod::Exact,
        MethodArg::Hmc => ReferenceMethod::Hmc {
            hmc,
            is_samples: a.is_samples,
        },
        MethodArg::Lais => ReferenceMethod::Lais { hmc },
        MethodArg::Snis | MethodArg::Pred => ReferenceMethod::Prior,
    };
    let work = |(i, (_, p)): (usize, &(String, Program))| -> Result<WeightedSampleSet, CliError> {
        let seed = derive_seed(a.seed, i as u64);
        match &proposal {
            Some(q) => Ok(snis_proposal(&Model::new(p)?, q, a.samples, seed)?),
            None => Ok(reference_samples(p, &method, a.samples, seed)?),
        }
    };
    let caches: Vec<WeightedSampleSet> = if ctx.deterministic {
        programs.iter().enumerate().map(work).collect::<Result<_, _>>()?
    } else {
        programs.par_iter().enumerate().map(work).collect::<Result<_, _>>()?
    };
    rec.lap("sample");
    create_dir(&a.out)?;
    let mut details = Vec::new();
    for ((label, p), ws) in programs.iter().zip(&caches) {
        let path = a.out.join(format!("{label}.cache"));
        ws.write(create_file(&path)?, &program_hash(p)).map_err(|source| CliError::Cache { path, source })?;
        details.push(json!({
            "program": label,
            "tag": ws.tag,
            "samples": ws.len(),
            "log_n_hat": ws.log_normaliser,
            "ess": ess_weights(ws)?,
        }));
    }
    rec.details(json!({ "caches": details }));
    rec.write(&a.out)?;
    println!("wrote {} caches to {}", caches.len(), a.out.display());
    Ok(())
}

pub fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> Result<(), CliError> {
    match &a.seeds {
        None => train_one(ctx, a, a.seed, &a.out),
        Some(seeds) => {
            for &s in seeds {
                train_one(ctx, a, s, &a.out.join(format!("seed-{s}")))?;
            }
            let mut rec = ctx.recorder("train", a);
            seeds.iter().for_each(|&s| rec.seed(s));
            rec.details(json!({ "runs": seeds.iter().map(|s| format!("seed-{s}")).collect::<Vec<_>>() }));
            rec.write(&a.out)?;
            Ok(())
        }
    }
}

fn train_one(ctx: &Ctx, a: &TrainArgs, seed: u64, out: &Path) -> Result<(), CliError> {
    let mut rec = ctx.recorder("train", a);
    rec.seed(seed);
    let entries = load_corpus(&mut rec, &a.programs, a.caches.as_deref(), None, false)?;
    let corpus = TrainingCorpus::new(entries);
    let (m, n) = corpus.shape();
    let scaling = if a.symlog { InputScaling::Symlog } else { InputScaling::Raw };
    // bank initialisation and minibatch streams get separate sub-seeds
    let mut bank = NetworkBank::new(BankConfig::new(m, n).with_scaling(scaling), derive_seed(seed, 0));
    let cfg = TrainConfig {
        lambda: a.lambda,
        adam: AdamConfig {
            lr: a.lr,
            ..AdamConfig::default()
        },
        batch: a.batch,
        epochs: a.epochs,
        log_every: a.log_every,
        group: a.group,
        smoothing: a.smoothing,
        plateau: a.patience.map(|patience| Plateau {
            patience,
            min_improvement: a.min_improvement,
        }),
        seed: derive_seed(seed, 1),
        deterministic: ctx.deterministic,
    };
    rec.lap("load");
    let mut csv = format!("{LOSS_CSV_HEADER}\n");
    let report = train(&mut bank, &corpus, &cfg, |r, _| {
        csv.push_str(&r.csv_row());
        csv.push('\n');
        eprintln!("epoch {}: train {:.4} test {:.4}", r.epoch, r.train_loss, r.test_loss);
    })?;
    rec.lap("train");
    create_dir(out)?;
    write_file(&out.join("loss.csv"), &csv)?;
    bank.save(create_file(&out.join("bank.ckpt"))?, json!({ "seed": seed }))?;
    rec.details(json!({
        "updates": report.updates,
        "stopped_early": report.stopped_early,
        "last": report.log.last(),
        "train_programs": corpus.split(Split::Train).count(),
        "test_programs": corpus.split(Split::Test).count(),
    }));
    rec.write(out)?;
    println!("wrote {}", out.join("bank.ckpt").display());
    Ok(())
}

pub fn infer(ctx: &Ctx, a: &InferArgs) -> Result<(), CliError> {
    let mut rec = ctx.recorder("infer", a);
    let bank = load_bank(&mut rec, &a.params)?;
    let p = load_program(&mut rec, &a.program)?;
    let (q, log_z) = bank.infer(&p)?;
    let out = json!({ "means": q.means, "vars": q.vars, "log_z": log_z, "z": log_z.exp() });
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    if let Some(path) = &a.emit_proposal {
        let mut text = serde_json::to_string_pretty(&q).expect("json");
        text.push('\n');
        write_file(path, text)?;
    }
    Ok(())
}

pub fn eval(ctx: &Ctx, a: &EvalArgs) -> Result<(), CliError> {
    let mut rec = ctx.recorder("eval", a);
    let entries = load_corpus(&mut rec, &a.programs, a.caches.as_deref(), a.split, false)?;
    let report = match &a.params {
        Some(path) => evaluate(&load_bank(&mut rec, path)?, &entries)?,
        None => evaluate_with(&entries, |e| {
            Ok::<_, CliError>((flat_baseline(e.program.latent_count()), None))
        })?,
    };
    rec.lap("evaluate");
    create_dir(&a.out)?;
    let mut json = serde_json::to_string_pretty(&report).expect("json");
    json.push('\n');
    write_file(&a.out.join("report.json"), json)?;
    let path = a.out.join("report.csv");
    report.write_csv(create_file(&path)?).map_err(|e| CliError::io(&path, e))?;
    rec.details(json!({ "programs": report.programs.len(), "mean_kl": report.mean_kl, "median_kl": report.median_kl }));
    rec.write(&a.out)?;
    println!("programs {}", report.programs.len());
    println!("mean_kl {}", report.mean_kl);
    println!("median_kl {}", report.median_kl);
    if let Some(z) = report.median_z_rel_error {
        println!("median_z_rel_error {z}");
    }
    Ok(())
}

pub fn ess(cache: &Path, chain: bool) -> Result<(), CliError> {
    let bytes = fs::read(cache).map_err(|e| CliError::io(cache, e))?;
    let (ws, _) = WeightedSampleSet::read(&bytes[..]).map_err(|source| CliError::Cache {
        path: cache.to_path_buf(),
        source,
    })?;
    let value = if chain {
        let mut best = f64::INFINITY;
        for i in 0..ws.n {
            let col: Vec<f64> = (0..ws.len()).map(|j| ws.sample(j)[i]).collect();
            best = best.min(ess_chain(&col)?);
        }
        best
    } else {
        ess_weights(&ws)?
    };
    println!("{value}");
    Ok(())
}

pub fn bench(ctx: &Ctx, a: &BenchArgs) -> Result<(), CliError> {
    let mut rec = ctx.recorder("bench", a);
    rec.seed(a.seed);
    let bank = load_bank(&mut rec, &a.params)?;
    let mut programs = Vec::new();
    for path in program_files(&a.programs)? {
        if keep(a.split, split_of(&path)) {
            programs.push((stem(&path), load_program(&mut rec, &path)?));
        }
    }
    let cfg = BenchConfig {
        samples: a.samples,
        warmup: a.warmup,
        seed: a.seed,
        timed: !ctx.deterministic,
        repeats: a.repeats.max(1),
    };
    let result = run_bench(&bank, &programs, &cfg)?;
    rec.lap("bench");
    create_dir(&a.out)?;
    let path = a.out.join("bench.csv");
    write_rows_csv(&result.rows, create_file(&path)?).map_err(|e| CliError::io(&path, e))?;
    let summary = summarise(&result.rows);
    let path = a.out.join("summary.csv");
    write_summary_csv(&summary, create_file(&path)?).map_err(|e| CliError::io(&path, e))?;
    rec.details(json!({ "is_pred_scans": result.is_pred_scans }));
    rec.write(&a.out)?;
    write_summary_csv(&summary, std::io::stdout().lock()).map_err(|e| CliError::io("<stdout>", e))?;
    Ok(())
}
