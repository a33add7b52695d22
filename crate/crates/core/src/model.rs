//! The unrolled question-answering network: word embedding, language LSTM, compositional memory,
//! answer LSTM and the vocabulary heads, plus the masked training loss and greedy decoding.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::cells::{lstm_step, CompositionalMemory, LstmParams};
use crate::data::vocab::{EOA, PAD, QUESTION_MARK};
use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

/// Word embeddings start in uniform(-1, 1), independent of their width.
const EMBEDDING_INIT: f64 = 1.0;

/// Where the compositional memory takes its per-step question input from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QSource {
    Embedding,
    LanguageHidden,
}

impl QSource {
    pub fn as_str(self) -> &'static str {
        match self {
            QSource::Embedding => "embedding",
            QSource::LanguageHidden => "language-hidden",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            QSource::Embedding => 0,
            QSource::LanguageHidden => 1,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(QSource::Embedding),
            1 => Some(QSource::LanguageHidden),
            _ => None,
        }
    }
}

impl FromStr for QSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "embedding" => Ok(Self::Embedding),
            "language-hidden" => Ok(Self::LanguageHidden),
            _ => Err(Error::Config(format!("unknown q source `{s}`"))),
        }
    }
}

/// Ablation variants. Each one only changes what the answer LSTM reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Word embedding concatenated with the holistic context, no language LSTM or memory.
    Baseline,
    LanguageOnly,
    EpisodesOnly,
    LanguageEpisodes,
    Full,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::LanguageOnly,
        Variant::EpisodesOnly,
        Variant::LanguageEpisodes,
        Variant::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::LanguageOnly => "language-only",
            Variant::EpisodesOnly => "episodes-only",
            Variant::LanguageEpisodes => "language-episodes",
            Variant::Full => "full",
        }
    }

    pub fn answer_inputs(self) -> AnswerInputs {
        let (embedding, language, episode, context) = match self {
            Variant::Baseline => (true, false, false, true),
            Variant::LanguageOnly => (false, true, false, false),
            Variant::EpisodesOnly => (false, false, true, false),
            Variant::LanguageEpisodes => (false, true, true, false),
            Variant::Full => (false, true, true, true),
        };
        AnswerInputs {
            embedding,
            language,
            episode,
            context,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Variant::Baseline => 0,
            Variant::LanguageOnly => 1,
            Variant::EpisodesOnly => 2,
            Variant::LanguageEpisodes => 3,
            Variant::Full => 4,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// Which streams are concatenated into the answer LSTM input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnswerInputs {
    pub embedding: bool,
    pub language: bool,
    pub episode: bool,
    pub context: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub d_q: usize,
    pub d_h: usize,
    pub d_x: usize,
    pub d_v: usize,
    /// Inner width of the attention gate.
    pub d_z: usize,
    pub regions: usize,
    pub question_vocab: usize,
    pub answer_vocab: usize,
    pub max_answer_len: usize,
    pub lambda_lang: f64,
    pub lambda_epi: f64,
    pub q_source: QSource,
    pub variant: Variant,
}

impl NetworkConfig {
    /// Defaults for everything except the data-determined sizes.
    pub fn new(
        d_x: usize,
        d_v: usize,
        regions: usize,
        question_vocab: usize,
        answer_vocab: usize,
    ) -> Self {
        Self {
            d_q: 200,
            d_h: 200,
            d_x,
            d_v,
            d_z: 200,
            regions,
            question_vocab,
            answer_vocab,
            max_answer_len: 10,
            lambda_lang: 0.3,
            lambda_epi: 0.3,
            q_source: QSource::LanguageHidden,
            variant: Variant::Full,
        }
    }

    /// Switches to `variant`. Auxiliary losses belong to the full model only, so every other
    /// variant has them switched off.
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        if variant != Variant::Full {
            self.lambda_lang = 0.0;
            self.lambda_epi = 0.0;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("d_q", self.d_q),
            ("d_h", self.d_h),
            ("d_x", self.d_x),
            ("d_v", self.d_v),
            ("d_z", self.d_z),
            ("regions", self.regions),
            ("max_answer_len", self.max_answer_len),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.question_vocab <= EOA || self.answer_vocab <= EOA {
            return Err(Error::Config(
                "vocabularies must hold the four reserved tokens".into(),
            ));
        }
        if !(self.lambda_lang >= 0.0 && self.lambda_epi >= 0.0) {
            return Err(Error::Config("auxiliary loss weights must be >= 0".into()));
        }
        Ok(())
    }

    pub fn answer_inputs(&self) -> AnswerInputs {
        self.variant.answer_inputs()
    }

    pub fn answer_input_width(&self) -> usize {
        let u = self.answer_inputs();
        let mut w = 0;
        if u.embedding {
            w += self.d_q;
        }
        if u.language {
            w += self.d_h;
        }
        if u.episode {
            w += self.d_h;
        }
        if u.context {
            w += self.d_h;
        }
        w
    }

    fn memory_active(&self) -> bool {
        self.answer_inputs().episode || self.lambda_epi > 0.0
    }

    fn language_active(&self) -> bool {
        self.answer_inputs().language
            || self.lambda_lang > 0.0
            || (self.memory_active() && self.q_source == QSource::LanguageHidden)
    }
}

#[derive(Debug, Clone, Copy)]
struct Head {
    w: ParamId,
    b: ParamId,
}

impl Head {
    fn register(
        store: &mut ParamStore,
        prefix: &str,
        out: usize,
        inp: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            w: store.register_uniform(format!("{prefix}.W"), &[out, inp], 1.0 / (inp as f64).sqrt(), rng)?,
            b: store.register_constant(format!("{prefix}.b"), &[out], 0.0)?,
        })
    }

    fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.linear_map(w, x, b)
    }
}

/// All network parameters together with the handles that wire them up.
#[derive(Debug, Clone)]
pub struct VqaNetwork {
    pub config: NetworkConfig,
    pub params: ParamStore,
    embedding: ParamId,
    language: LstmParams,
    memory: CompositionalMemory,
    answer: LstmParams,
    context: Head,
    main_head: Head,
    lang_head: Head,
    epi_head: Head,
}

impl VqaNetwork {
    /// Builds a freshly initialized network. Parameter names and registration order depend on
    /// the config only.
    pub fn new(config: NetworkConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut store = ParamStore::new();
        let embedding = store.register_uniform("embed.table", &[c.question_vocab, c.d_q], EMBEDDING_INIT, rng)?;
        {
            let table = store.get_mut(embedding);
            let d_q = c.d_q;
            table.value.data_mut()[PAD * d_q..(PAD + 1) * d_q].fill(0.0);
            table.frozen_row = Some(PAD);
        }
        let language = LstmParams::register(&mut store, "lang", c.d_q, c.d_h, rng)?;
        let memory_q = match c.q_source {
            QSource::LanguageHidden => c.d_h,
            QSource::Embedding => c.d_q,
        };
        let memory = CompositionalMemory::register(
            &mut store, "cm", c.regions, memory_q, c.d_h, c.d_x, c.d_z, rng,
        )?;
        let answer = LstmParams::register(&mut store, "answer", c.answer_input_width(), c.d_h, rng)?;
        let context = Head::register(&mut store, "context", c.d_h, c.d_v, rng)?;
        let main_head = Head::register(&mut store, "head.main", c.answer_vocab, c.d_h, rng)?;
        let lang_head = Head::register(&mut store, "head.lang", c.answer_vocab, c.d_h, rng)?;
        let epi_head = Head::register(&mut store, "head.epi", c.answer_vocab, c.d_h, rng)?;
        Ok(Self {
            config,
            params: store,
            embedding,
            language,
            memory,
            answer,
            context,
            main_head,
            lang_head,
            epi_head,
        })
    }

    pub fn memory(&self) -> &CompositionalMemory {
        &self.memory
    }

    pub fn embedding_id(&self) -> ParamId {
        self.embedding
    }
}

/// Values recorded for one position of the input sequence.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub language: Option<Var>,
    pub episode: Option<Var>,
    pub answer: Var,
    pub alphas: Vec<Var>,
    pub main_logits: Var,
    pub lang_logits: Option<Var>,
    pub epi_logits: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub steps: Vec<StepTrace>,
    /// Position of the `<?>` token.
    pub question_end: usize,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Attention weights per position (empty rows when the memory is not evaluated).
    pub fn alpha_values(&self, tape: &Tape) -> Vec<Vec<f64>> {
        self.steps
            .iter()
            .map(|s| s.alphas.iter().map(|&a| tape.scalar(a)).collect())
            .collect()
    }

    /// True at positions whose prediction is supervised: the `<?>` itself and everything after.
    pub fn mask(&self) -> Vec<bool> {
        (0..self.steps.len()).map(|t| t >= self.question_end).collect()
    }
}

fn question_end(tokens: &[usize]) -> Result<usize> {
    let mut marks = tokens.iter().enumerate().filter(|(_, &t)| t == QUESTION_MARK);
    match (marks.next(), marks.next()) {
        (Some((i, _)), None) => Ok(i),
        (None, _) => Err(Error::Protocol("token sequence has no <?>".into())),
        (Some(_), Some(_)) => Err(Error::Protocol("token sequence has more than one <?>".into())),
    }
}

/// Unrolls the network over `tokens` (question-vocabulary ids) for one image described by
/// `regions` (K×d_x) and `context` (d_v).
pub fn forward(
    net: &VqaNetwork,
    tape: &mut Tape,
    tokens: &[usize],
    regions: &Tensor,
    context: &Tensor,
) -> Result<ForwardTrace> {
    let cfg = &net.config;
    let store = &net.params;
    let question_end = question_end(tokens)?;
    if regions.shape() != [cfg.regions, cfg.d_x] {
        return Err(Error::dim(
            "forward",
            format!("regions {:?}, expected [{}, {}]", regions.shape(), cfg.regions, cfg.d_x),
        ));
    }
    if context.shape() != [cfg.d_v] {
        return Err(Error::dim(
            "forward",
            format!("context {:?}, expected [{}]", context.shape(), cfg.d_v),
        ));
    }
    let inputs = cfg.answer_inputs();
    let use_language = cfg.language_active();
    let use_memory = cfg.memory_active();

    let table = tape.param(store, net.embedding);
    let projected_context = if inputs.context {
        let v = tape.constant(context.clone());
        let p = net.context.apply(tape, store, v)?;
        Some(tape.tanh(p))
    } else {
        None
    };
    let (mut memory_state, region_terms) = if use_memory {
        let xs: Vec<Var> = (0..cfg.regions)
            .map(|k| tape.constant(Tensor::vector(regions.row(k).to_vec())))
            .collect();
        let terms = net.memory.region_terms(tape, store, &xs)?;
        (Some(net.memory.initial_state(tape)), Some(terms))
    } else {
        (None, None)
    };
    let (mut l, mut lc) = net.language.initial_state(tape);
    let (mut a, mut ac) = net.answer.initial_state(tape);

    let mut steps = Vec::with_capacity(tokens.len());
    for &tok in tokens {
        if tok >= cfg.question_vocab {
            return Err(Error::Vocabulary(format!(
                "token id {tok} outside question vocabulary of {}",
                cfg.question_vocab
            )));
        }
        let e = tape.row(table, tok)?;
        let language = if use_language {
            let (h, c) = lstm_step(tape, store, &net.language, e, l, lc)?;
            l = h;
            lc = c;
            Some(h)
        } else {
            None
        };
        let mut alphas = Vec::new();
        let episode = match (&mut memory_state, &region_terms) {
            (Some(state), Some(terms)) => {
                let q = match cfg.q_source {
                    QSource::LanguageHidden => language.expect("language active with memory"),
                    QSource::Embedding => e,
                };
                let next = net.memory.step_with_terms(tape, store, state, q, terms)?;
                alphas = next.alphas.clone();
                let h = next.h;
                *state = next;
                Some(h)
            }
            _ => None,
        };
        let mut parts = Vec::with_capacity(4);
        if inputs.embedding {
            parts.push(e);
        }
        if inputs.language {
            parts.extend(language);
        }
        if inputs.episode {
            parts.extend(episode);
        }
        if inputs.context {
            parts.extend(projected_context);
        }
        let u = if parts.len() == 1 { parts[0] } else { tape.concat(&parts)? };
        let (h, c) = lstm_step(tape, store, &net.answer, u, a, ac)?;
        a = h;
        ac = c;
        let main_logits = net.main_head.apply(tape, store, a)?;
        let lang_logits = match language {
            Some(l) if cfg.lambda_lang > 0.0 => Some(net.lang_head.apply(tape, store, l)?),
            _ => None,
        };
        let epi_logits = match episode {
            Some(h) if cfg.lambda_epi > 0.0 => Some(net.epi_head.apply(tape, store, h)?),
            _ => None,
        };
        steps.push(StepTrace {
            language,
            episode,
            answer: a,
            alphas,
            main_logits,
            lang_logits,
            epi_logits,
        });
    }
    Ok(ForwardTrace {
        steps,
        question_end,
    })
}

/// Cross-entropy over supervised positions, with the auxiliary heads weighted by their lambdas.
/// `targets[t]` is the answer-vocabulary id expected at position `t` and is ignored where
/// `mask[t]` is false.
pub fn masked_loss(
    net: &VqaNetwork,
    tape: &mut Tape,
    trace: &ForwardTrace,
    targets: &[usize],
    mask: &[bool],
) -> Result<Var> {
    if targets.len() != trace.len() || mask.len() != trace.len() {
        return Err(Error::LengthMismatch(format!(
            "trace has {} positions, targets {}, mask {}",
            trace.len(),
            targets.len(),
            mask.len()
        )));
    }
    let cfg = &net.config;
    let mut main = Vec::new();
    let mut lang = Vec::new();
    let mut epi = Vec::new();
    for (t, step) in trace.steps.iter().enumerate() {
        if !mask[t] {
            continue;
        }
        main.push(tape.softmax_cross_entropy(step.main_logits, targets[t])?);
        if let Some(l) = step.lang_logits {
            lang.push(tape.softmax_cross_entropy(l, targets[t])?);
        }
        if let Some(l) = step.epi_logits {
            epi.push(tape.softmax_cross_entropy(l, targets[t])?);
        }
    }
    if main.is_empty() {
        return Err(Error::Protocol("no supervised answer positions".into()));
    }
    let mut total = vec![tape.sum(&main)?];
    if !lang.is_empty() {
        let s = tape.sum(&lang)?;
        total.push(tape.scale(s, cfg.lambda_lang));
    }
    if !epi.is_empty() {
        let s = tape.sum(&epi)?;
        total.push(tape.scale(s, cfg.lambda_epi));
    }
    if total.len() == 1 {
        Ok(total[0])
    } else {
        tape.sum(&total)
    }
}

/// Index of the largest candidate logit; ties go to the lowest id.
fn argmax_from(logits: &[f64], first: usize) -> usize {
    let mut best = first;
    for (i, &v) in logits.iter().enumerate().skip(first + 1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Result of greedy decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Answer-vocabulary ids, without the terminating `<EOA>`.
    pub answer: Vec<usize>,
    /// Number of decoding iterations (forward passes) performed.
    pub iterations: usize,
    /// Input sequence of the last forward pass: the question plus all but the last emitted word.
    pub tokens: Vec<usize>,
    /// Attention weights per position of `tokens`.
    pub alphas: Vec<Vec<f64>>,
}

/// Greedy open-ended decoding. Each emitted answer word is mapped back into the question
/// vocabulary through `bridge` (answer id → question id) and appended to the input stream.
/// Only `<EOA>` and ordinary words are candidates, so `<PAD>`, `<UNK>` and `<?>` are never
/// produced.
pub fn predict_answer(
    net: &VqaNetwork,
    question: &[usize],
    regions: &Tensor,
    context: &Tensor,
    bridge: &[usize],
) -> Result<Prediction> {
    if question.last() != Some(&QUESTION_MARK) {
        return Err(Error::Protocol("question must end with <?>".into()));
    }
    if bridge.len() != net.config.answer_vocab {
        return Err(Error::LengthMismatch(format!(
            "answer bridge covers {} ids, answer vocabulary has {}",
            bridge.len(),
            net.config.answer_vocab
        )));
    }
    let mut tokens = question.to_vec();
    let mut answer = Vec::new();
    let mut iterations = 0;
    let mut alphas;
    loop {
        let mut tape = Tape::new();
        let trace = forward(net, &mut tape, &tokens, regions, context)?;
        iterations += 1;
        alphas = trace.alpha_values(&tape);
        let last = trace.steps.last().expect("question is nonempty");
        let word = argmax_from(tape.value(last.main_logits).data(), EOA);
        if word == EOA {
            break;
        }
        answer.push(word);
        if answer.len() >= net.config.max_answer_len {
            break;
        }
        tokens.push(bridge[word]);
    }
    Ok(Prediction {
        answer,
        iterations,
        tokens,
        alphas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::vocab::UNK;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> NetworkConfig {
        NetworkConfig {
            d_q: 3,
            d_h: 4,
            d_z: 4,
            ..NetworkConfig::new(5, 2, 3, 9, 7)
        }
    }

    fn inputs() -> (Tensor, Tensor) {
        let regions = Tensor::matrix(3, 5, (0..15).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
        let context = Tensor::vector(vec![0.2, -0.4]);
        (regions, context)
    }

    fn zero_net(cfg: NetworkConfig) -> VqaNetwork {
        let mut net = VqaNetwork::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for p in net.params.iter_mut() {
            p.value.fill(0.0);
        }
        net
    }

    #[test]
    fn trace_has_one_step_per_token_and_k_alphas() {
        let net = VqaNetwork::new(small_config(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (x, v) = inputs();
        let mut tape = Tape::new();
        let tokens = [4, 5, 6, QUESTION_MARK, 7];
        let trace = forward(&net, &mut tape, &tokens, &x, &v).unwrap();
        assert_eq!(trace.len(), 5);
        assert_eq!(trace.question_end, 3);
        assert!(trace.steps.iter().all(|s| s.alphas.len() == 3));
        assert_eq!(trace.mask(), vec![false, false, false, true, true]);
    }

    #[test]
    fn question_mark_protocol() {
        let net = VqaNetwork::new(small_config(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (x, v) = inputs();
        let mut tape = Tape::new();
        assert!(matches!(forward(&net, &mut tape, &[4, 5], &x, &v), Err(Error::Protocol(_))));
        assert!(matches!(
            forward(&net, &mut tape, &[2, 5, 2], &x, &v),
            Err(Error::Protocol(_))
        ));
        assert!(matches!(
            forward(&net, &mut tape, &[20, 2], &x, &v),
            Err(Error::Vocabulary(_))
        ));
        let bad = Tensor::zeros(&[2, 5]);
        assert!(matches!(
            forward(&net, &mut tape, &[4, 2], &bad, &v),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn zero_network_gives_uniform_logits_and_loss() {
        let cfg = small_config();
        let net = zero_net(cfg.clone());
        let (x, v) = inputs();
        let mut tape = Tape::new();
        let tokens = [4, QUESTION_MARK, 5];
        let trace = forward(&net, &mut tape, &tokens, &x, &v).unwrap();
        for s in &trace.steps {
            assert!(tape.value(s.main_logits).data().iter().all(|&l| l == 0.0));
        }
        let loss = masked_loss(&net, &mut tape, &trace, &[0, 4, EOA], &trace.mask()).unwrap();
        let want = 2.0 * (1.0 + cfg.lambda_lang + cfg.lambda_epi) * (cfg.answer_vocab as f64).ln();
        assert!((tape.scalar(loss) - want).abs() < 1e-9);
    }

    #[test]
    fn uniform_loss_without_aux_heads() {
        let mut cfg = NetworkConfig::new(5, 2, 3, 9, 10);
        cfg.d_q = 2;
        cfg.d_h = 2;
        cfg.d_z = 2;
        cfg.lambda_lang = 0.0;
        cfg.lambda_epi = 0.0;
        let net = zero_net(cfg);
        let (x, v) = inputs();
        let mut tape = Tape::new();
        let trace = forward(&net, &mut tape, &[4, QUESTION_MARK, 5], &x, &v).unwrap();
        let loss = masked_loss(&net, &mut tape, &trace, &[0, 4, EOA], &trace.mask()).unwrap();
        assert!((tape.scalar(loss) - 2.0 * 10f64.ln()).abs() < 1e-12);
        assert!((tape.scalar(loss) - 4.6052).abs() < 1e-4);
    }

    #[test]
    fn loss_requires_supervised_positions() {
        let net = VqaNetwork::new(small_config(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (x, v) = inputs();
        let mut tape = Tape::new();
        let trace = forward(&net, &mut tape, &[4, QUESTION_MARK], &x, &v).unwrap();
        assert!(matches!(
            masked_loss(&net, &mut tape, &trace, &[0, 0], &[false, false]),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn confident_targets_give_near_zero_loss() {
        let cfg = NetworkConfig {
            lambda_lang: 0.0,
            lambda_epi: 0.0,
            ..small_config()
        };
        let mut net = zero_net(cfg);
        let b = net.params.id("head.main.b").unwrap();
        net.params.get_mut(b).value.data_mut()[5] = 60.0;
        let (x, v) = inputs();
        let mut tape = Tape::new();
        let trace = forward(&net, &mut tape, &[4, QUESTION_MARK], &x, &v).unwrap();
        let loss = masked_loss(&net, &mut tape, &trace, &[0, 5], &trace.mask()).unwrap();
        assert!(tape.scalar(loss) < 1e-20);
    }

    #[test]
    fn embedding_row_lookup_and_padding() {
        let net = VqaNetwork::new(small_config(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let table = &net.params.get(net.embedding_id()).value;
        assert!(table.row(PAD).iter().all(|&v| v == 0.0));
        let mut tape = Tape::new();
        let t = tape.param(&net.params, net.embedding_id());
        let r = tape.row(t, 4).unwrap();
        assert_eq!(tape.value(r).data(), table.row(4));
        assert!(matches!(tape.row(t, 9), Err(Error::Vocabulary(_))));
    }

    #[test]
    fn decoding_stops_immediately_on_eoa() {
        let mut net = zero_net(small_config());
        let b = net.params.id("head.main.b").unwrap();
        net.params.get_mut(b).value.data_mut()[EOA] = 1.0;
        let (x, v) = inputs();
        let bridge: Vec<usize> = (0..7).collect();
        let p = predict_answer(&net, &[4, QUESTION_MARK], &x, &v, &bridge).unwrap();
        assert!(p.answer.is_empty());
        assert_eq!(p.iterations, 1);
    }

    #[test]
    fn decoding_respects_length_cap_and_skips_reserved() {
        let mut net = zero_net(NetworkConfig {
            max_answer_len: 4,
            ..small_config()
        });
        let b = net.params.id("head.main.b").unwrap();
        let bias = net.params.get_mut(b).value.data_mut();
        bias[PAD] = 9.0;
        bias[UNK] = 9.0;
        bias[QUESTION_MARK] = 9.0;
        bias[6] = 1.0;
        let (x, v) = inputs();
        let bridge: Vec<usize> = vec![0, 1, 1, 1, 4, 5, 6];
        let p = predict_answer(&net, &[4, QUESTION_MARK], &x, &v, &bridge).unwrap();
        assert_eq!(p.answer, vec![6; 4]);
        assert_eq!(p.iterations, 4);
        // Ties resolve to the lowest candidate id, which is <EOA>.
        let zero = zero_net(small_config());
        let p = predict_answer(&zero, &[4, QUESTION_MARK], &x, &v, &bridge).unwrap();
        assert!(p.answer.is_empty());
    }

    #[test]
    fn variants_change_answer_input_width() {
        let widths: Vec<usize> = Variant::ALL
            .iter()
            .map(|&v| small_config().with_variant(v).answer_input_width())
            .collect();
        assert_eq!(widths, vec![3 + 4, 4, 4, 8, 12]);
        assert_eq!(small_config().with_variant(Variant::EpisodesOnly).lambda_lang, 0.0);
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            assert_eq!(Variant::from_code(v.code()), Some(v));
        }
    }

    #[test]
    fn parameter_count_is_a_function_of_config() {
        let a = VqaNetwork::new(small_config(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = VqaNetwork::new(small_config(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a.params.scalar_count(), b.params.scalar_count());
        let names_a: Vec<_> = a.params.iter().map(|p| p.name.clone()).collect();
        let names_b: Vec<_> = b.params.iter().map(|p| p.name.clone()).collect();
        assert_eq!(names_a, names_b);
    }
}
