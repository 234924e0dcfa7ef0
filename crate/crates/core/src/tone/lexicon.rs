use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use super::{ToneCategory, ToneError, NUM_TONES};
use crate::corpus::CleanTweet;

const DEFAULT_LEXICON: &str = include_str!("../../data/tone_lexicon.csv");

/// Token to `(category, weight)` table used by the offline labeler.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    entries: HashMap<String, (ToneCategory, f64)>,
}

impl Lexicon {
    pub fn new<I: IntoIterator<Item = (String, ToneCategory, f64)>>(entries: I) -> Result<Self, ToneError> {
        let mut map = HashMap::new();
        for (i, (token, category, weight)) in entries.into_iter().enumerate() {
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(ToneError::Lexicon {
                    line: i + 1,
                    reason: format!("weight {weight} must be positive"),
                });
            }
            map.insert(token.to_lowercase(), (category, weight));
        }
        if map.is_empty() {
            return Err(ToneError::EmptyLexicon);
        }
        Ok(Lexicon { entries: map })
    }

    /// Parses CSV with header `token,category_code,weight`.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, ToneError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut entries = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let bad = |reason: String| ToneError::Lexicon { line, reason };
            let record = record.map_err(|e| bad(e.to_string()))?;
            if record.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", record.len())));
            }
            let code: usize = record[1].parse().map_err(|_| bad(format!("bad category code `{}`", &record[1])))?;
            let category = ToneCategory::from_code(code).ok_or_else(|| bad(format!("category code {code} out of range")))?;
            let weight: f64 = record[2].parse().map_err(|_| bad(format!("bad weight `{}`", &record[2])))?;
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(bad(format!("weight {weight} must be positive")));
            }
            entries.push((record[0].to_string(), category, weight));
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ToneError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    /// The bundled COVID-era tone lexicon.
    pub fn bundled() -> Self {
        Self::from_reader(DEFAULT_LEXICON.as_bytes()).expect("bundled lexicon is valid")
    }

    pub fn get(&self, token: &str) -> Option<(ToneCategory, f64)> {
        self.entries.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tokens of one category, sorted.
    pub fn tokens_for(&self, category: ToneCategory) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .entries
            .iter()
            .filter(|(_, (c, _))| *c == category)
            .map(|(t, _)| t.as_str())
            .collect();
        v.sort_unstable();
        v
    }
}

/// Sums lexicon weights per category over the tweet's tokens (repeats count
/// again) and returns the heaviest category, lower code on ties. `None` when
/// no token is in the lexicon.
pub fn label_with_lexicon(tweet: &CleanTweet, lexicon: &Lexicon) -> Option<ToneCategory> {
    label_tokens(&tweet.tokens, lexicon)
}

pub(crate) fn label_tokens<S: AsRef<str>>(tokens: &[S], lexicon: &Lexicon) -> Option<ToneCategory> {
    // Sum in token order so the result depends only on the token multiset.
    let mut hits: BTreeMap<&str, usize> = BTreeMap::new();
    for t in tokens {
        if lexicon.get(t.as_ref()).is_some() {
            *hits.entry(t.as_ref()).or_default() += 1;
        }
    }
    if hits.is_empty() {
        return None;
    }
    let mut totals = [0.0f64; NUM_TONES];
    for (token, count) in hits {
        let (category, weight) = lexicon.get(token).expect("hit is in lexicon");
        totals[category.code()] += weight * count as f64;
    }
    let mut best = 0;
    for c in 1..NUM_TONES {
        if totals[c] > totals[best] {
            best = c;
        }
    }
    ToneCategory::from_code(best)
}
