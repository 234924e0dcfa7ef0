//! Seeded generator for tweet-like text whose tone is fixed by the lexicon.

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Lexicon, ToneCategory, NUM_TONES};
use crate::corpus::RawTweet;

const FILLERS: &[&str] = &[
    "covid", "corona", "lockdown", "india", "people", "today", "news", "virus", "day", "home", "time",
    "government", "city", "week", "cases", "update", "mask", "doctors", "delhi", "mumbai", "family",
    "hospital", "quarantine", "work", "streets", "pandemic",
];

const STOPWORDS: &[&str] = &["the", "is", "we", "are", "this", "all", "in", "of", "to", "and", "our", "it", "for"];

const HASHTAGS: &[&str] = &["Covid19", "IndiaFightsCorona", "StayHome", "Lockdown", "CoronaVirusOutbreak"];
const EMOJI: &[&str] = &["😷", "🙏", "😢", "💪", "😡", "😨", "🤔", "😊"];

/// Rough class mix: sadness and confidence most frequent, anger and fear rare.
const CLASS_WEIGHTS: [f64; NUM_TONES] = [0.20, 0.14, 0.15, 0.15, 0.20, 0.08, 0.08];

/// Generates `n` raw tweets. Each carries one to three lexicon words of a
/// target tone, sometimes one word of another tone, filler words, and the
/// usual tweet noise (links, mentions, emoji, hashtags, capitals).
pub fn synthetic_tweets(lexicon: &Lexicon, n: usize, seed: u64) -> Vec<RawTweet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let by_class: Vec<Vec<&str>> = ToneCategory::ALL.iter().map(|c| lexicon.tokens_for(*c)).collect();
    let start = NaiveDate::from_ymd_opt(2020, 1, 23).expect("valid date");
    let span = (NaiveDate::from_ymd_opt(2020, 5, 20).expect("valid date") - start).num_days();

    (0..n)
        .map(|i| {
            let target = pick_class(&mut rng, &by_class);
            let mut words: Vec<String> = Vec::new();
            for _ in 0..rng.gen_range(1..=3) {
                words.push(by_class[target].choose(&mut rng).expect("non-empty class").to_string());
            }
            if rng.gen_bool(0.3) {
                let other = pick_class(&mut rng, &by_class);
                if other != target {
                    words.push(by_class[other].choose(&mut rng).expect("non-empty class").to_string());
                }
            }
            for _ in 0..rng.gen_range(2..=4) {
                words.push(STOPWORDS.choose(&mut rng).expect("non-empty").to_string());
            }
            for _ in 0..rng.gen_range(1..=5) {
                words.push(FILLERS.choose(&mut rng).expect("non-empty").to_string());
            }
            words.shuffle(&mut rng);
            if let Some(first) = words.first_mut() {
                if rng.gen_bool(0.5) {
                    *first = capitalize(first);
                }
            }

            let mut text = words.join(" ");
            let mut hashtags = Vec::new();
            if rng.gen_bool(0.2) {
                text = format!("@user{} {text}", rng.gen_range(1..500));
            }
            if rng.gen_bool(0.3) {
                let tag = *HASHTAGS.choose(&mut rng).expect("non-empty");
                text.push_str(&format!(" #{tag}"));
                hashtags.push(tag.to_string());
            }
            if rng.gen_bool(0.25) {
                text.push(' ');
                text.push_str(EMOJI.choose(&mut rng).expect("non-empty"));
            }
            if rng.gen_bool(0.3) {
                text.push_str(&format!(" https://t.co/{:08x}", rng.gen::<u32>()));
            }
            if rng.gen_bool(0.2) {
                text.push('!');
            }

            RawTweet {
                id: format!("syn{:06}", i + 1),
                created_at: start + Duration::days(rng.gen_range(0..=span)),
                text,
                hashtags,
            }
        })
        .collect()
}

fn pick_class(rng: &mut ChaCha8Rng, by_class: &[Vec<&str>]) -> usize {
    loop {
        let mut u: f64 = rng.gen();
        let mut chosen = NUM_TONES - 1;
        for (c, w) in CLASS_WEIGHTS.iter().enumerate() {
            if u < *w {
                chosen = c;
                break;
            }
            u -= w;
        }
        if !by_class[chosen].is_empty() {
            return chosen;
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CleanTweet;
    use crate::tone::label_with_lexicon;

    #[test]
    fn deterministic_and_labelable() {
        let lex = Lexicon::bundled();
        let a = synthetic_tweets(&lex, 200, 7);
        let b = synthetic_tweets(&lex, 200, 7);
        assert_eq!(a, b);
        assert_ne!(a, synthetic_tweets(&lex, 200, 8));
        let labeled = a
            .iter()
            .filter(|t| label_with_lexicon(&CleanTweet::from_raw(&t.id, &t.text), &lex).is_some())
            .count();
        assert_eq!(labeled, 200);
    }
}
