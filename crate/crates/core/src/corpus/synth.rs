//! Synthetic review corpus with controllable label signal.
//!
//! Every generated comment carries exactly one aspect marker word and one
//! polarity marker word among Hausa/English filler words. With probability
//! `class_signal` a marker names the record's true class; otherwise it names
//! a class drawn uniformly at random.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AspectLabel, Comment, CorpusError, Dataset, Label, LanguageTag, Manifest, PolarityLabel, Result};

const ASPECT_MARKERS: [&str; 4] = ["jarumi", "kashi", "fim", "kannywood"];
const POLARITY_MARKERS: [&str; 3] = ["mummuna", "matsakaici", "kyakkyawa"];

const HAUSA_FILLER: &[&str] = &[
    "wannan", "yayi", "labari", "mutane", "gani", "lokaci", "sosai", "yau", "gobe", "suna",
    "yana", "ina", "son", "kallo", "duka", "amma", "kuma", "domin", "zuwa", "daga", "akwai",
    "babu", "shi", "ita", "mu", "ku", "sun", "za", "ya", "ta", "da", "ba", "ne", "ce", "har",
    "wani", "wata", "gida", "gari", "ruwa", "abinci", "aiki", "kudi", "sabon", "tsoho",
];
const ENGLISH_FILLER: &[&str] = &[
    "watch", "today", "really", "guys", "comment", "channel", "video", "next", "please", "dear",
];
const NOISE: &[&str] = &["!", "?", "...", " 😀", " @fan", " #1"];

pub fn aspect_marker(label: AspectLabel) -> &'static str {
    ASPECT_MARKERS[label.id()]
}

pub fn polarity_marker(label: PolarityLabel) -> &'static str {
    POLARITY_MARKERS[label.id()]
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphabetic()).collect::<String>().to_lowercase())
}

/// Label named by the first aspect marker in `text`.
pub fn marker_rule_aspect(text: &str) -> Option<AspectLabel> {
    words(text).find_map(|w| {
        ASPECT_MARKERS
            .iter()
            .position(|m| *m == w)
            .map(|i| AspectLabel::ALL[i])
    })
}

pub fn marker_rule_polarity(text: &str) -> Option<PolarityLabel> {
    words(text).find_map(|w| {
        POLARITY_MARKERS
            .iter()
            .position(|m| *m == w)
            .map(|i| PolarityLabel::ALL[i])
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub seed: u64,
    /// Probability in `[0, 1]` that a marker names the true class.
    pub class_signal: f64,
    /// Relative polarity frequencies (negative, neutral, positive).
    pub polarity_weights: [f64; 3],
    pub engausa_fraction: f64,
}

impl SynthSpec {
    pub fn new(n: usize, seed: u64, class_signal: f64) -> Self {
        SynthSpec {
            n,
            seed,
            class_signal,
            // neutral and positive dominate, as in the annotated movie-review data
            polarity_weights: [0.2, 0.42, 0.38],
            engausa_fraction: 0.3,
        }
    }
}

/// Splits `n` into per-class counts proportional to `weights`, each at
/// least `min`, by largest remainder.
fn quotas(n: usize, weights: &[f64], min: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut q: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - q[b] as f64).total_cmp(&(exact[a] - q[a] as f64)).then(a.cmp(&b)));
    let mut left = n - q.iter().sum::<usize>();
    for &c in &order {
        if left == 0 {
            break;
        }
        q[c] += 1;
        left -= 1;
    }
    for c in 0..q.len() {
        while q[c] < min {
            let donor = (0..q.len()).max_by_key(|&d| (q[d], usize::MAX - d)).unwrap();
            q[donor] -= 1;
            q[c] += 1;
        }
    }
    q
}

pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    const MIN_PER_CLASS: usize = 2;
    let min_n = MIN_PER_CLASS * AspectLabel::ALL.len();
    if spec.n < min_n {
        return Err(CorpusError::SpecTooSmall(format!("n = {} < {min_n}", spec.n)));
    }
    if !(0.0..=1.0).contains(&spec.class_signal) {
        return Err(CorpusError::SpecTooSmall(format!(
            "class_signal {} outside [0, 1]",
            spec.class_signal
        )));
    }
    if spec.polarity_weights.iter().any(|w| !(*w > 0.0)) {
        return Err(CorpusError::SpecTooSmall("polarity weights must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut aspects: Vec<AspectLabel> = quotas(spec.n, &[1.0; 4], MIN_PER_CLASS)
        .into_iter()
        .enumerate()
        .flat_map(|(id, k)| std::iter::repeat(AspectLabel::ALL[id]).take(k))
        .collect();
    let mut polarities: Vec<PolarityLabel> = quotas(spec.n, &spec.polarity_weights, MIN_PER_CLASS)
        .into_iter()
        .enumerate()
        .flat_map(|(id, k)| std::iter::repeat(PolarityLabel::ALL[id]).take(k))
        .collect();
    aspects.shuffle(&mut rng);
    polarities.shuffle(&mut rng);

    let records = aspects
        .into_iter()
        .zip(polarities)
        .map(|(aspect, polarity)| {
            let language = if rng.gen_bool(spec.engausa_fraction) {
                LanguageTag::Engausa
            } else {
                LanguageTag::Hausa
            };
            let shown_aspect = if rng.gen_bool(spec.class_signal) {
                aspect
            } else {
                *AspectLabel::ALL.choose(&mut rng).unwrap()
            };
            let shown_polarity = if rng.gen_bool(spec.class_signal) {
                polarity
            } else {
                *PolarityLabel::ALL.choose(&mut rng).unwrap()
            };

            let len = rng.gen_range(6..=14);
            let mut tokens: Vec<&str> = (0..len)
                .map(|_| {
                    if language == LanguageTag::Engausa && rng.gen_bool(0.35) {
                        *ENGLISH_FILLER.choose(&mut rng).unwrap()
                    } else {
                        *HAUSA_FILLER.choose(&mut rng).unwrap()
                    }
                })
                .collect();
            let at = rng.gen_range(0..=tokens.len());
            tokens.insert(at, aspect_marker(shown_aspect));
            let at = rng.gen_range(0..=tokens.len());
            tokens.insert(at, polarity_marker(shown_polarity));

            let mut text = tokens.join(" ");
            if rng.gen_bool(0.5) {
                // capitalise the first letter the way commenters do
                let mut chars = text.chars();
                let first = chars.next().unwrap();
                text = first.to_uppercase().chain(chars).collect();
            }
            if rng.gen_bool(0.3) {
                text.push_str(NOISE.choose(&mut rng).unwrap());
            }
            Comment {
                text,
                aspect,
                polarity,
                language,
            }
        })
        .collect();

    Ok(Dataset::new(
        records,
        Manifest {
            source: format!("synthetic n={} seed={} signal={}", spec.n, spec.seed, spec.class_signal),
            ..Manifest::default()
        },
    ))
}
