//! Planted-topic scenario generator.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalError, RelevanceJudgments, Scenario};
use crate::inference::Alternative;
use crate::pipeline::{write_json, write_text, Budget};

pub const MAX_GRADE: u32 = 4;
const VOCAB_SIZE: usize = 12;

const THEMES: [[&str; VOCAB_SIZE]; 8] = [
    ["pool", "swim", "water", "slide", "lifeguard", "splash", "towel", "lounge", "deck", "cabana", "diving", "lagoon"],
    ["breakfast", "buffet", "coffee", "pastry", "omelette", "juice", "croissant", "pancake", "bacon", "yogurt", "waffle", "espresso"],
    ["staff", "reception", "concierge", "friendly", "helpful", "courteous", "checkin", "manager", "porter", "greeting", "service", "attentive"],
    ["room", "bed", "pillow", "mattress", "quiet", "spacious", "balcony", "view", "linen", "shower", "closet", "carpet"],
    ["location", "downtown", "subway", "walk", "station", "museum", "shopping", "tram", "airport", "central", "nearby", "landmark"],
    ["price", "value", "budget", "affordable", "discount", "fee", "deposit", "refund", "cheap", "expensive", "bargain", "tariff"],
    ["wifi", "internet", "signal", "laptop", "bandwidth", "router", "streaming", "outlet", "charger", "printer", "desk", "network"],
    ["parking", "garage", "valet", "car", "driveway", "shuttle", "bike", "scooter", "charging", "lot", "permit", "ramp"],
];

const SYLLABLES: [&str; 16] =
    ["ka", "lo", "mi", "ru", "te", "zan", "vol", "pe", "dri", "su", "nor", "gal", "xi", "bem", "tor", "quo"];

/// Sentence frames whose fixed words are all stopwords.
const FRAMES: [&str; 6] = [
    "The {} and the {} were {} for {}.",
    "Our {} was {} with {} and {}.",
    "Every {} had {} but {} was {}.",
    "It has {} and {} as well as {} for {}.",
    "We had {} with {} then {} by {}.",
    "Their {} is {} so {} has {}.",
];
const SENTENCES_PER_PARAGRAPH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub topics: usize,
    pub paragraphs_per_topic: usize,
    pub alternatives: usize,
    /// Probability of swapping a topic word for another topic's word, and of
    /// jittering a per-topic grade by one step.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidParams(m.to_string()));
        if self.topics < 2 {
            return bad("at least 2 topics are required");
        }
        if self.paragraphs_per_topic < 3 {
            return bad("at least 3 paragraphs per topic are required");
        }
        if self.alternatives < 4 {
            return bad("at least 4 alternatives are required");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad("noise must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Keyword vocabulary of every topic, most frequent word first.
pub fn topic_vocabularies(topics: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x766f_6361_6273);
    let mut vocab: Vec<Vec<String>> =
        THEMES.iter().take(topics).map(|t| t.iter().map(|w| w.to_string()).collect()).collect();
    let mut used: std::collections::BTreeSet<String> = vocab.iter().flatten().cloned().collect();
    while vocab.len() < topics {
        let mut words = Vec::with_capacity(VOCAB_SIZE);
        while words.len() < VOCAB_SIZE {
            let word: String = (0..3).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect();
            if used.insert(word.clone()) {
                words.push(word);
            }
        }
        vocab.push(words);
    }
    vocab
}

struct Generator<'a> {
    rng: ChaCha8Rng,
    vocab: &'a [Vec<String>],
    zipf: WeightedIndex<f64>,
    noise: f64,
}

impl Generator<'_> {
    fn word(&mut self, topic: usize) -> String {
        let t = if self.noise > 0.0 && self.rng.random::<f64>() < self.noise {
            let other = self.rng.random_range(0..self.vocab.len() - 1);
            if other >= topic { other + 1 } else { other }
        } else {
            topic
        };
        self.vocab[t][self.zipf.sample(&mut self.rng)].clone()
    }

    fn paragraph(&mut self, topic: usize) -> String {
        let mut sentences = Vec::with_capacity(SENTENCES_PER_PARAGRAPH);
        for _ in 0..SENTENCES_PER_PARAGRAPH {
            let frame = FRAMES[self.rng.random_range(0..FRAMES.len())];
            let mut s = String::new();
            for (i, piece) in frame.split("{}").enumerate() {
                if i > 0 {
                    s.push_str(&self.word(topic));
                }
                s.push_str(piece);
            }
            sentences.push(s);
        }
        sentences.join(" ")
    }
}

/// Profile mentioning the first `2 * grade` words of each topic.
fn profile(name: &str, grades: &[u32], vocab: &[Vec<String>]) -> String {
    let mut out = format!("{name}.");
    for (t, &g) in grades.iter().enumerate() {
        let words = &vocab[t][..(2 * g as usize).min(VOCAB_SIZE)];
        if !words.is_empty() {
            out.push_str(&format!(" It has {}.", words.join(" and ")));
        }
    }
    out
}

/// Writes `corpus/`, `alternatives.jsonl`, `judgments.json` and
/// `scenario.json` under `dir` and returns the scenario.
pub fn generate_synthetic_scenario(params: &SyntheticParams, dir: &Path) -> Result<Scenario, EvalError> {
    params.validate()?;
    let vocab = topic_vocabularies(params.topics, params.seed);
    let zipf = WeightedIndex::new((0..VOCAB_SIZE).map(|r| 1.0 / (r as f64 + 1.0))).expect("positive weights");
    let mut gen = Generator { rng: ChaCha8Rng::seed_from_u64(params.seed), vocab: &vocab, zipf, noise: params.noise };

    let corpus_dir = dir.join("corpus");
    for d in 0..params.paragraphs_per_topic {
        let mut order: Vec<usize> = (0..params.topics).collect();
        order.shuffle(&mut gen.rng);
        let body: Vec<String> = order.into_iter().map(|t| gen.paragraph(t)).collect();
        write_text(&corpus_dir.join(format!("doc_{:02}.txt", d + 1)), &(body.join("\n\n") + "\n"))?;
    }

    let mut overall: Vec<u32> = (0..params.alternatives).map(|k| k as u32 % (MAX_GRADE + 1)).collect();
    overall.shuffle(&mut gen.rng);
    let mut lines = String::new();
    let mut judgments = BTreeMap::new();
    for (k, &g) in overall.iter().enumerate() {
        let id = format!("alt_{:02}", k + 1);
        let name = format!("Option {}", k + 1);
        let grades: Vec<u32> = (0..params.topics)
            .map(|_| {
                if params.noise > 0.0 && gen.rng.random::<f64>() < params.noise {
                    if gen.rng.random::<bool>() { (g + 1).min(MAX_GRADE) } else { g.saturating_sub(1) }
                } else {
                    g
                }
            })
            .collect();
        let alt = Alternative { id: id.clone(), profile: profile(&name, &grades, &vocab), name };
        lines.push_str(&serde_json::to_string(&alt).expect("serializable"));
        lines.push('\n');
        judgments.insert(id, g);
    }
    write_text(&dir.join("alternatives.jsonl"), &lines)?;
    let judgments = RelevanceJudgments::new(judgments)?;
    write_json(&dir.join("judgments.json"), &judgments)?;

    let scenario = Scenario {
        name: format!("planted-{}x{}-seed{}", params.topics, params.paragraphs_per_topic, params.seed),
        goal: "Choose the best hotel for a family vacation".into(),
        corpus: "corpus".into(),
        alternatives: "alternatives.jsonl".into(),
        judgments: "judgments.json".into(),
        budget: Some(Budget { k_max: 5, d_max: 2 }),
        tau: 0.3,
        panel_size: 3,
        seed: params.seed,
        runs: 1,
        samples: 1,
        generator: Some(*params),
    };
    write_json(&dir.join("scenario.json"), &scenario)?;
    Ok(scenario)
}
