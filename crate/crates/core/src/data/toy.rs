//! Synthetic attention task: every image is a row of cells, each holding one coloured shape, and
//! every question is answered by looking up the attributes of a single cell.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::features::{FeatureFile, FeatureRecord};
use super::manifest::QAExample;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTaskConfig {
    /// Cells (regions) per image.
    pub regions: usize,
    pub colors: Vec<String>,
    pub shapes: Vec<String>,
    pub train_questions: usize,
    pub test_questions: usize,
    pub questions_per_image: usize,
    /// Standard deviation of the Gaussian noise added to every feature entry.
    pub noise: f64,
    /// Append a one-hot cell index to each region feature. Without it the cell-addressed
    /// questions cannot be answered by a region-order-invariant memory.
    pub positional: bool,
    pub seed: u64,
}

impl Default for ToyTaskConfig {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|t| t.to_string()).collect();
        Self {
            regions: 4,
            colors: s(&["red", "green", "blue", "yellow"]),
            shapes: s(&["circle", "square", "triangle"]),
            train_questions: 2000,
            test_questions: 500,
            questions_per_image: 1,
            noise: 0.05,
            positional: true,
            seed: 42,
        }
    }
}

impl ToyTaskConfig {
    pub fn feature_width(&self) -> usize {
        self.shapes.len() + self.colors.len() + if self.positional { self.regions } else { 0 }
    }

    fn validate(&self) -> Result<()> {
        if self.regions == 0 || self.questions_per_image == 0 {
            return Err(Error::ToyTask("regions and questions_per_image must be positive".into()));
        }
        if self.colors.is_empty() || self.shapes.is_empty() {
            return Err(Error::ToyTask("colour and shape inventories must be nonempty".into()));
        }
        if self.shapes.len() == 1 && self.regions > 1 {
            return Err(Error::ToyTask(
                "a single shape cannot be unique within an image of several cells".into(),
            ));
        }
        let mut all: Vec<&String> = self.colors.iter().chain(&self.shapes).collect();
        all.sort();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::ToyTask("colour and shape names must be distinct".into()));
        }
        for w in &all {
            if super::tokenize::tokenize(w) != [w.as_str()] {
                return Err(Error::ToyTask(format!("`{w}` is not a single lowercase token")));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::ToyTask("noise must be a finite non-negative number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub shape: usize,
    pub color: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyImage {
    pub image_id: String,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    /// "what color is the <shape>?" for a shape occurring exactly once.
    ColorOfShape,
    /// "what shape is at cell <k>?"
    ShapeAtCell,
    /// "what color is the object at cell <k>?"
    ColorAtCell,
}

impl Template {
    pub fn answers_color(self) -> bool {
        !matches!(self, Template::ShapeAtCell)
    }
}

/// Ground truth behind one generated question.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyQuestion {
    pub image: usize,
    pub template: Template,
    /// Zero-based index of the cell holding the answer.
    pub cell: usize,
}

#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub train: Vec<QAExample>,
    pub test: Vec<QAExample>,
    pub train_truth: Vec<ToyQuestion>,
    pub test_truth: Vec<ToyQuestion>,
    pub images: Vec<ToyImage>,
    pub features: FeatureFile,
}

impl ToyDataset {
    /// `child TAB parent` lines placing colours and shapes under two sibling categories.
    pub fn taxonomy_text(cfg: &ToyTaskConfig) -> String {
        let mut s = String::from("color\tentity\nshape\tentity\n");
        for c in &cfg.colors {
            s.push_str(&format!("{c}\tcolor\n"));
        }
        for sh in &cfg.shapes {
            s.push_str(&format!("{sh}\tshape\n"));
        }
        s
    }
}

fn sample_image(cfg: &ToyTaskConfig, rng: &mut ChaCha8Rng) -> Vec<Cell> {
    loop {
        let cells: Vec<Cell> = (0..cfg.regions)
            .map(|_| Cell {
                shape: rng.random_range(0..cfg.shapes.len()),
                color: rng.random_range(0..cfg.colors.len()),
            })
            .collect();
        if !unique_shapes(&cells, cfg.shapes.len()).is_empty() {
            return cells;
        }
    }
}

fn unique_shapes(cells: &[Cell], n_shapes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_shapes];
    for c in cells {
        counts[c.shape] += 1;
    }
    (0..n_shapes).filter(|&s| counts[s] == 1).collect()
}

fn featurize(
    cfg: &ToyTaskConfig,
    image_id: String,
    cells: &[Cell],
    noise: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> FeatureRecord {
    let width = cfg.feature_width();
    let mut regions = vec![0.0; cfg.regions * width];
    for (k, cell) in cells.iter().enumerate() {
        let row = &mut regions[k * width..(k + 1) * width];
        row[cell.shape] = 1.0;
        row[cfg.shapes.len() + cell.color] = 1.0;
        if cfg.positional {
            row[cfg.shapes.len() + cfg.colors.len() + k] = 1.0;
        }
        for v in row.iter_mut() {
            *v += noise.sample(rng);
        }
    }
    let mut context = vec![0.0; width];
    for k in 0..cfg.regions {
        for (c, v) in context.iter_mut().zip(&regions[k * width..(k + 1) * width]) {
            *c += v;
        }
    }
    for c in &mut context {
        *c /= cfg.regions as f64;
    }
    FeatureRecord {
        image_id,
        regions: Tensor::new(vec![cfg.regions, width], regions).expect("finite features"),
        context: Tensor::vector(context),
    }
}

fn ask(
    cfg: &ToyTaskConfig,
    image: usize,
    image_id: &str,
    cells: &[Cell],
    rng: &mut ChaCha8Rng,
) -> (QAExample, ToyQuestion) {
    const TEMPLATES: [Template; 3] = [Template::ColorOfShape, Template::ShapeAtCell, Template::ColorAtCell];
    let mut template = *TEMPLATES.choose(rng).expect("nonempty");
    let uniques = unique_shapes(cells, cfg.shapes.len());
    if template == Template::ColorOfShape && uniques.is_empty() {
        template = Template::ColorAtCell;
    }
    let (question, cell) = match template {
        Template::ColorOfShape => {
            let shape = *uniques.choose(rng).expect("checked nonempty");
            let cell = cells.iter().position(|c| c.shape == shape).expect("shape present");
            (format!("what color is the {}?", cfg.shapes[shape]), cell)
        }
        Template::ShapeAtCell => {
            let cell = rng.random_range(0..cfg.regions);
            (format!("what shape is at cell {}?", cell + 1), cell)
        }
        Template::ColorAtCell => {
            let cell = rng.random_range(0..cfg.regions);
            (format!("what color is the object at cell {}?", cell + 1), cell)
        }
    };
    let answer = if template.answers_color() {
        &cfg.colors[cells[cell].color]
    } else {
        &cfg.shapes[cells[cell].shape]
    };
    let ex = QAExample::from_text(image_id, &question, &[answer]).expect("templates are well formed");
    (
        ex,
        ToyQuestion {
            image,
            template,
            cell,
        },
    )
}

/// Generates train and test splits on disjoint images. Fully determined by `cfg.seed`.
pub fn generate_toy_dataset(cfg: &ToyTaskConfig) -> Result<ToyDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::ToyTask(e.to_string()))?;
    let mut images = Vec::new();
    let mut records = Vec::new();
    let mut splits = Vec::new();
    for (split, total) in [("train", cfg.train_questions), ("test", cfg.test_questions)] {
        let mut examples = Vec::with_capacity(total);
        let mut truth = Vec::with_capacity(total);
        let n_images = total.div_ceil(cfg.questions_per_image);
        for i in 0..n_images {
            let image_id = format!("toy-{split}-{i:05}");
            let cells = sample_image(cfg, &mut rng);
            records.push(featurize(cfg, image_id.clone(), &cells, &noise, &mut rng));
            let image = images.len();
            let asked = cfg.questions_per_image.min(total - examples.len());
            for _ in 0..asked {
                let (ex, t) = ask(cfg, image, &image_id, &cells, &mut rng);
                examples.push(ex);
                truth.push(t);
            }
            images.push(ToyImage { image_id, cells });
        }
        splits.push((examples, truth));
    }
    let (test, test_truth) = splits.pop().expect("two splits");
    let (train, train_truth) = splits.pop().expect("two splits");
    let features = FeatureFile::new(cfg.regions, cfg.feature_width(), cfg.feature_width(), records)?;
    Ok(ToyDataset {
        train,
        test,
        train_truth,
        test_truth,
        images,
        features,
    })
}
