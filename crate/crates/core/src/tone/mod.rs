//! Seven-way tone labels, from a remote tone-analysis service or an offline lexicon.

mod lexicon;
mod service;
pub mod synth;

pub use lexicon::{label_with_lexicon, Lexicon};
pub use synth::synthetic_tweets;
pub use service::{
    chunk_for_service, label_with_service, parse_service_response, HttpTransport, RetryPolicy, ServiceBatch,
    ServiceClient, ToneMapping, ToneTransport, TransportReply, MAX_BATCH_BYTES,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EncodedText;

#[derive(Debug, Error)]
pub enum ToneError {
    #[error("text `{id}` is {bytes} bytes once encoded, over the {limit}-byte service limit")]
    TextTooLarge { id: String, bytes: usize, limit: usize },
    #[error("tone service rejected the credentials (HTTP {status})")]
    Authentication { status: u16 },
    #[error("tone service still rate limited after {attempts} attempts on batch {batch}")]
    RateLimited { batch: usize, attempts: u32 },
    #[error("tone service returned HTTP {status} for batch {batch}")]
    Http { batch: usize, status: u16 },
    #[error("transport failure on batch {batch}: {message}")]
    Transport { batch: usize, message: String },
    #[error("malformed service response for batch {batch}: {reason}")]
    MalformedResponse { batch: usize, reason: String },
    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),
    #[error("invalid lexicon entry on line {line}: {reason}")]
    Lexicon { line: usize, reason: String },
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("unknown tone category code {0}")]
    UnknownCode(i64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The seven tone classes with their stable integer codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ToneCategory {
    Sadness = 0,
    Analytical = 1,
    Joy = 2,
    Tentative = 3,
    Confident = 4,
    Anger = 5,
    Fear = 6,
}

pub const NUM_TONES: usize = 7;

impl ToneCategory {
    pub const ALL: [ToneCategory; NUM_TONES] = [
        ToneCategory::Sadness,
        ToneCategory::Analytical,
        ToneCategory::Joy,
        ToneCategory::Tentative,
        ToneCategory::Confident,
        ToneCategory::Anger,
        ToneCategory::Fear,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ToneCategory::Sadness => "Sadness",
            ToneCategory::Analytical => "Analytical",
            ToneCategory::Joy => "Joy",
            ToneCategory::Tentative => "Tentative",
            ToneCategory::Confident => "Confident",
            ToneCategory::Anger => "Anger",
            ToneCategory::Fear => "Fear",
        }
    }

    /// Report label, e.g. `0 (Sadness)`.
    pub fn label(self) -> String {
        format!("{} ({})", self.code(), self.name())
    }
}

impl fmt::Display for ToneCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToneCategory {
    type Err = ToneError;

    /// Accepts a numeric code or a case-insensitive name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Ok(code) = s.parse::<i64>() {
            return usize::try_from(code)
                .ok()
                .and_then(Self::from_code)
                .ok_or(ToneError::UnknownCode(code));
        }
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or(ToneError::UnknownCode(-1))
    }
}

/// A service-reported tone strength in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneScore {
    pub category: ToneCategory,
    pub score: f64,
}

impl ToneScore {
    pub fn new(category: ToneCategory, score: f64) -> Result<Self, ToneError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(ToneError::InvalidScore(score));
        }
        Ok(ToneScore { category, score })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Service,
    Lexicon,
}

impl LabelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::Service => "service",
            LabelSource::Lexicon => "lexicon",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub tweet_id: String,
    pub encoded: EncodedText,
    pub label: ToneCategory,
    pub source: LabelSource,
}

/// Highest-scoring category; ties go to the lower code. `None` for no scores.
pub fn dominant_tone(scores: &[ToneScore]) -> Option<ToneCategory> {
    let mut best: Option<(ToneCategory, f64)> = None;
    for s in scores {
        best = match best {
            Some((c, v)) if v > s.score || (v == s.score && c < s.category) => Some((c, v)),
            _ => Some((s.category, s.score)),
        };
    }
    best.map(|(c, _)| c)
}

/// Count of labels per category, always covering all seven.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ToneHistogram {
    pub counts: [usize; NUM_TONES],
}

impl ToneHistogram {
    pub fn from_labels<I: IntoIterator<Item = ToneCategory>>(labels: I) -> Self {
        let mut counts = [0; NUM_TONES];
        for l in labels {
            counts[l.code()] += 1;
        }
        ToneHistogram { counts }
    }

    pub fn get(&self, c: ToneCategory) -> usize {
        self.counts[c.code()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ToneCategory, usize)> + '_ {
        ToneCategory::ALL.into_iter().map(|c| (c, self.counts[c.code()]))
    }

    /// CSV with header `code,tone,count`, one row per category in code order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("code,tone,count\n");
        for (c, n) in self.iter() {
            out.push_str(&format!("{},{},{}\n", c.code(), c.name(), n));
        }
        out
    }
}

pub fn tone_distribution(labels: &[LabeledExample]) -> ToneHistogram {
    ToneHistogram::from_labels(labels.iter().map(|l| l.label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(c: ToneCategory, v: f64) -> ToneScore {
        ToneScore::new(c, v).unwrap()
    }

    #[test]
    fn codes_are_stable() {
        for (i, c) in ToneCategory::ALL.iter().enumerate() {
            assert_eq!(c.code(), i);
            assert_eq!(ToneCategory::from_code(i), Some(*c));
        }
        assert_eq!(ToneCategory::from_code(7), None);
        assert_eq!(ToneCategory::Anger.label(), "5 (Anger)");
        assert_eq!("fear".parse::<ToneCategory>().unwrap(), ToneCategory::Fear);
        assert_eq!("3".parse::<ToneCategory>().unwrap(), ToneCategory::Tentative);
        assert!("9".parse::<ToneCategory>().is_err());
    }

    #[test]
    fn dominant_examples() {
        use ToneCategory::*;
        assert_eq!(dominant_tone(&[s(Joy, 0.8), s(Fear, 0.3)]), Some(Joy));
        assert_eq!(dominant_tone(&[s(Anger, 0.5), s(Sadness, 0.5)]), Some(Sadness));
        assert_eq!(dominant_tone(&[s(Sadness, 0.5), s(Anger, 0.5)]), Some(Sadness));
        assert_eq!(dominant_tone(&[]), None);
    }

    #[test]
    fn score_range_enforced() {
        assert!(ToneScore::new(ToneCategory::Joy, 1.2).is_err());
        assert!(ToneScore::new(ToneCategory::Joy, f64::NAN).is_err());
    }

    #[test]
    fn histogram_examples() {
        use ToneCategory::*;
        let h = ToneHistogram::from_labels([]);
        assert_eq!(h.counts, [0; 7]);
        let h = ToneHistogram::from_labels([Joy, Joy, Fear, Joy]);
        assert_eq!(h.get(Joy), 3);
        assert_eq!(h.get(Fear), 1);
        assert_eq!(h.total(), 4);
        assert!(h.to_csv().starts_with("code,tone,count\n0,Sadness,0\n"));
    }

    fn category() -> impl Strategy<Value = ToneCategory> {
        (0usize..7).prop_map(|c| ToneCategory::from_code(c).unwrap())
    }

    proptest! {
        #[test]
        fn dominant_is_permutation_invariant(
            scores in prop::collection::vec((category(), 0u8..=10), 0..12),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let scores: Vec<ToneScore> = scores.into_iter().map(|(c, v)| s(c, v as f64 / 10.0)).collect();
            let mut shuffled = scores.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(dominant_tone(&scores), dominant_tone(&shuffled));
        }

        #[test]
        fn histogram_total_matches_input(labels in prop::collection::vec(category(), 0..200)) {
            let h = ToneHistogram::from_labels(labels.iter().copied());
            prop_assert_eq!(h.total(), labels.len());
        }
    }
}
