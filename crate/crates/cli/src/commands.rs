use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cmvqa::data::tokenize::tokenize;
use cmvqa::data::vocab::{QUESTION_MARK, QUESTION_TOKEN};
use cmvqa::data::{
    build_vocabularies, encode_examples, format_manifest, generate_toy_dataset, parse_manifest, FeatureFile,
    FeatureRecord, ToyDataset, ToyTaskConfig, Vocabulary,
};
use cmvqa::eval::{evaluate, Taxonomy};
use cmvqa::model::predict_answer;
use cmvqa::numerics::Tensor;
use cmvqa::train::{
    grad_check, run_training, teacher_force, Checkpoint, Dataset, GradCheckOptions, TrainObserver,
};
use cmvqa::VqaNetwork;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::Failure;

pub const MODEL_FILE: &str = "model.cmck";
pub const QUESTION_VOCAB_FILE: &str = "question.vocab";
pub const ANSWER_VOCAB_FILE: &str = "answer.vocab";
pub const LOSS_LOG_FILE: &str = "loss.tsv";

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| io_failure(path, e))
}

pub fn gen_toy(cfg: &RunConfig) -> Result<(), Failure> {
    let d = ToyTaskConfig::default();
    let toy_cfg = ToyTaskConfig {
        regions: cfg.get_or("toy.regions", d.regions)?,
        train_questions: cfg.get_or("toy.train", d.train_questions)?,
        test_questions: cfg.get_or("toy.test", d.test_questions)?,
        questions_per_image: cfg.get_or("toy.questions_per_image", d.questions_per_image)?,
        noise: cfg.get_or("toy.noise", d.noise)?,
        positional: cfg.get_or("toy.positional", d.positional)?,
        seed: cfg.get_or("toy.seed", d.seed)?,
        ..d
    };
    let out: PathBuf = cfg.require("data.out")?;
    let toy = generate_toy_dataset(&toy_cfg).map_err(|e| Failure::usage(e.to_string()))?;
    create_dir(&out)?;
    let files = [
        ("train.tsv", format_manifest(&toy.train).into_bytes()),
        ("test.tsv", format_manifest(&toy.test).into_bytes()),
        ("taxonomy.tsv", ToyDataset::taxonomy_text(&toy_cfg).into_bytes()),
        ("features.cmvf", toy.features.encode()?),
    ];
    for (name, bytes) in files {
        let p = out.join(name);
        write_file(&p, bytes)?;
        println!("{}", p.display());
    }
    Ok(())
}

struct Progress<'a> {
    out: &'a Path,
    total: u64,
    log: BufWriter<fs::File>,
    window: f64,
    count: u64,
}

impl TrainObserver for Progress<'_> {
    fn on_iteration(&mut self, iteration: u64, loss: f64) -> cmvqa::Result<()> {
        writeln!(self.log, "{iteration}\t{loss}").map_err(|e| cmvqa::Error::Io {
            path: self.out.join(LOSS_LOG_FILE),
            source: e,
        })?;
        self.window += loss;
        self.count += 1;
        if iteration.is_multiple_of(1000) || iteration == self.total {
            eprintln!("iteration {iteration}/{}: mean loss {:.4}", self.total, self.window / self.count as f64);
            self.window = 0.0;
            self.count = 0;
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, checkpoint: &Checkpoint) -> cmvqa::Result<()> {
        let name = if checkpoint.iteration == self.total {
            MODEL_FILE.to_string()
        } else {
            format!("checkpoint-{:08}.cmck", checkpoint.iteration)
        };
        checkpoint.write(&self.out.join(name))
    }
}

pub fn train(cfg: &RunConfig) -> Result<(), Failure> {
    let manifest = cfg.existing_path("data.manifest")?;
    let features_path = cfg.existing_path("data.features")?;
    let validation = cfg.path("data.validation")?;
    if let Some(v) = &validation {
        if !v.exists() {
            return Err(Failure::data(format!("`data.validation`: {} does not exist", v.display())));
        }
    }
    let out: PathBuf = cfg.require("data.out")?;
    let train_cfg = cfg.training()?;
    let min_count: usize = cfg.get_or("data.min_count", 1)?;

    let examples = parse_manifest(&manifest)?;
    let features = FeatureFile::read(&features_path)?;
    let (qv, av) = build_vocabularies(&examples, min_count);
    let encoded = encode_examples(&examples, &qv, &av)?;
    let net_cfg = cfg.network(features.d_x, features.d_v, features.regions, qv.len(), av.len())?;
    let mut init = ChaCha8Rng::seed_from_u64(cfg.get_or("net.seed", train_cfg.seed)?);
    init.set_stream(1);
    let mut net = VqaNetwork::new(net_cfg, &mut init)?;
    let data = Dataset::new(&encoded, &features)?;

    create_dir(&out)?;
    qv.save(&out.join(QUESTION_VOCAB_FILE))?;
    av.save(&out.join(ANSWER_VOCAB_FILE))?;
    let log_path = out.join(LOSS_LOG_FILE);
    let log = fs::File::create(&log_path).map_err(|e| io_failure(&log_path, e))?;
    let mut progress = Progress {
        out: &out,
        total: train_cfg.iterations,
        log: BufWriter::new(log),
        window: 0.0,
        count: 0,
    };
    eprintln!(
        "training {} on {} examples, {} parameters",
        net.config.variant,
        data.len(),
        net.params.scalar_count()
    );
    run_training(&mut net, &data, &train_cfg, &mut progress)?;
    progress.log.flush().map_err(|e| io_failure(&log_path, e))?;
    if train_cfg.iterations == 0 {
        Checkpoint::capture(&net, 0, &ChaCha8Rng::seed_from_u64(train_cfg.seed)).write(&out.join(MODEL_FILE))?;
    }
    println!("checkpoint\t{}", out.join(MODEL_FILE).display());
    if let Some(v) = validation {
        let val = parse_manifest(&v)?;
        let (_, report) = evaluate(&net, &val, &features, &qv, &av, None)?;
        println!("validation_accuracy\t{}", report.accuracy);
    }
    Ok(())
}

struct Loaded {
    net: VqaNetwork,
    questions: Vocabulary,
    answers: Vocabulary,
    features: FeatureFile,
}

fn load_model(cfg: &RunConfig) -> Result<Loaded, Failure> {
    let ck_path = cfg.existing_path("data.checkpoint")?;
    let features = FeatureFile::read(&cfg.existing_path("data.features")?)?;
    let dir = ck_path.parent().unwrap_or(Path::new("."));
    let questions = Vocabulary::load(&dir.join(QUESTION_VOCAB_FILE))?;
    let answers = Vocabulary::load(&dir.join(ANSWER_VOCAB_FILE))?;
    let net = Checkpoint::read(&ck_path)?.to_network()?;
    let c = &net.config;
    if c.question_vocab != questions.len() || c.answer_vocab != answers.len() {
        return Err(Failure::data(format!(
            "vocabularies next to {} do not match the checkpoint",
            ck_path.display()
        )));
    }
    if (c.regions, c.d_x, c.d_v) != (features.regions, features.d_x, features.d_v) {
        return Err(Failure::data(format!(
            "features have K={} d_x={} d_v={}, model expects K={} d_x={} d_v={}",
            features.regions, features.d_x, features.d_v, c.regions, c.d_x, c.d_v
        )));
    }
    Ok(Loaded {
        net,
        questions,
        answers,
        features,
    })
}

pub fn eval(cfg: &RunConfig, tsv: bool) -> Result<(), Failure> {
    let m = load_model(cfg)?;
    let examples = parse_manifest(&cfg.existing_path("data.manifest")?)?;
    let taxonomy = match cfg.path("data.taxonomy")? {
        Some(p) => Some(Taxonomy::load(&p)?),
        None => None,
    };
    let (_, report) = evaluate(&m.net, &examples, &m.features, &m.questions, &m.answers, taxonomy.as_ref())?;
    if tsv {
        print!("{}", report.to_key_values());
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}

fn pick_record<'a>(features: &'a FeatureFile, image: Option<&str>) -> Result<&'a FeatureRecord, Failure> {
    match image {
        Some(id) => features
            .get(id)
            .ok_or_else(|| Failure::data(format!("no features for image `{id}`"))),
        None => features
            .records
            .first()
            .ok_or_else(|| Failure::data("feature file has no records")),
    }
}

fn question_ids(text: &str, vocab: &Vocabulary) -> Result<Vec<usize>, Failure> {
    let mut tokens: Vec<String> = tokenize(text).into_iter().filter(|t| t != QUESTION_TOKEN).collect();
    if tokens.is_empty() {
        return Err(Failure::usage("the question is empty"));
    }
    tokens.push(QUESTION_TOKEN.to_string());
    Ok(vocab.encode(&tokens))
}

pub fn infer(cfg: &RunConfig, question: &str, image: Option<&str>) -> Result<(), Failure> {
    let m = load_model(cfg)?;
    let rec = pick_record(&m.features, image)?;
    let q = question_ids(question, &m.questions)?;
    let bridge = m.answers.bridge_to(&m.questions);
    let p = predict_answer(&m.net, &q, &rec.regions, &rec.context, &bridge)?;
    println!("{}", m.answers.decode(&p.answer).join(" "));
    Ok(())
}

const SHADES: [char; 5] = [' ', '.', ':', '*', '#'];

pub fn inspect_attention(cfg: &RunConfig, question: &str, image: Option<&str>, grid: bool) -> Result<(), Failure> {
    let m = load_model(cfg)?;
    let rec = pick_record(&m.features, image)?;
    let q = question_ids(question, &m.questions)?;
    let bridge = m.answers.bridge_to(&m.questions);
    let p = predict_answer(&m.net, &q, &rec.regions, &rec.context, &bridge)?;
    if p.alphas.iter().all(|a| a.is_empty()) {
        return Err(Failure::usage(format!(
            "the {} variant has no attention to inspect",
            m.net.config.variant
        )));
    }
    println!("t,k,alpha");
    for (t, row) in p.alphas.iter().enumerate() {
        for (k, a) in row.iter().enumerate() {
            println!("{t},{},{a}", k + 1);
        }
    }
    if grid {
        let tokens = m.questions.decode(&p.tokens);
        let width = tokens.iter().map(String::len).max().unwrap_or(0);
        for (t, (row, tok)) in p.alphas.iter().zip(&tokens).enumerate() {
            let cells: String = row
                .iter()
                .map(|a| SHADES[((a * SHADES.len() as f64) as usize).min(SHADES.len() - 1)])
                .collect();
            eprintln!("{t:>3} {tok:<width$} |{cells}|");
        }
        eprintln!("answer: {}", m.answers.decode(&p.answer).join(" "));
    }
    Ok(())
}

pub fn gradcheck(cfg: &RunConfig) -> Result<(), Failure> {
    let regions: usize = cfg.get_or("net.regions", 4)?;
    let d_x: usize = cfg.get_or("net.d_x", 8)?;
    let d_v: usize = cfg.get_or("net.d_v", 8)?;
    let qv: usize = cfg.get_or("net.question_vocab", 12)?;
    let av: usize = cfg.get_or("net.answer_vocab", 12)?;
    let length: usize = cfg.get_or("gradcheck.length", 6)?;
    let seed: u64 = cfg.get_or("gradcheck.seed", 0)?;
    if length < 3 {
        return Err(Failure::usage("gradcheck.length must be at least 3"));
    }
    let defaults = RunConfig::parse("net.d_q = 8\nnet.d_h = 8\nnet.d_z = 8\n", "defaults")?;
    let pick = |key: &str| -> Result<usize, Failure> { cfg.get_or(key, defaults.require(key)?) };
    let mut net_cfg = cfg.network(d_x, d_v, regions, qv, av)?;
    net_cfg.d_q = pick("net.d_q")?;
    net_cfg.d_h = pick("net.d_h")?;
    net_cfg.d_z = pick("net.d_z")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = VqaNetwork::new(net_cfg, &mut rng)?;
    let words = |rng: &mut ChaCha8Rng, n: usize, vocab: usize| -> Vec<usize> {
        (0..n).map(|_| rng.random_range(4..vocab)).collect()
    };
    let mut question = words(&mut rng, length - 2, qv);
    question.push(QUESTION_MARK);
    let answer_in = words(&mut rng, 1, qv);
    let answer_out = words(&mut rng, 1, av);
    let ex = teacher_force(&question, &answer_in, &answer_out)?;
    let mut uniform = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let x = Tensor::new(vec![regions, d_x], uniform(regions * d_x))?;
    let v = Tensor::new(vec![d_v], uniform(d_v))?;
    let opts = GradCheckOptions {
        epsilon: cfg.get_or("gradcheck.epsilon", 1e-5)?,
        max_entries_per_tensor: cfg.get("gradcheck.max_entries")?,
        seed,
        ..GradCheckOptions::default()
    };
    let report = grad_check(&mut net, &ex, &x, &v, &opts)?;
    for t in &report.tensors {
        println!("{}\t{}\t{:e}", t.name, t.checked, t.max_rel_error);
    }
    println!("max_relative_error\t{:e}", report.max_rel_error);
    println!("worst_parameter\t{}", report.worst_param);
    if report.max_rel_error < 1e-4 {
        Ok(())
    } else {
        Err(Failure::numerical(format!(
            "gradient check failed: {:e} in `{}`",
            report.max_rel_error, report.worst_param
        )))
    }
}
