//! Tweet ingestion, text normalization, English filtering and integer encoding.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{self, Read};
use std::path::Path;
use std::sync::OnceLock;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of the padding entry in every vocabulary.
pub const PAD: usize = 0;
/// Index of the out-of-vocabulary entry in every vocabulary.
pub const OOV: usize = 1;
pub const DEFAULT_MAX_LEN: usize = 64;

/// Minimum share of stopword tokens for a tweet to count as English.
pub const ENGLISH_STOPWORD_RATIO: f64 = 0.15;
/// Romanized-Hindi hits needed before a tweet is flagged as a transliteration suspect.
pub const HINDI_SUSPECT_HITS: usize = 2;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
const DEFAULT_HINDI_WORDS: &str = include_str!("../data/hindi_romanized.txt");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed csv in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("min_frequency must be at least 1, got {0}")]
    InvalidMinFrequency(usize),
    #[error("word list is empty")]
    EmptyWordList,
}

/// A scraped tweet as read from the archive CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTweet {
    pub id: String,
    pub created_at: NaiveDate,
    pub text: String,
    pub hashtags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TweetFlag {
    NonEnglish,
    TransliteratedHindiSuspect,
}

impl TweetFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            TweetFlag::NonEnglish => "non_english",
            TweetFlag::TransliteratedHindiSuspect => "transliterated_hindi_suspect",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "non_english" => Some(TweetFlag::NonEnglish),
            "transliterated_hindi_suspect" => Some(TweetFlag::TransliteratedHindiSuspect),
            _ => None,
        }
    }
}

/// A normalized tweet ready for labeling and encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanTweet {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub flags: BTreeSet<TweetFlag>,
}

impl CleanTweet {
    /// Cleans `raw` and tokenizes the result.
    pub fn from_raw(id: impl Into<String>, raw: &str) -> Self {
        Self::from_clean_text(id, clean_text(raw))
    }

    /// Wraps text that is already normalized.
    pub fn from_clean_text(id: impl Into<String>, text: String) -> Self {
        let tokens = tokenize(&text);
        CleanTweet {
            id: id.into(),
            text,
            tokens,
            flags: BTreeSet::new(),
        }
    }

    pub fn has_flag(&self, flag: TweetFlag) -> bool {
        self.flags.contains(&flag)
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.replace('#', ""))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Result of reading a tweet archive: rows that parsed, and how many were dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadedTweets {
    pub tweets: Vec<RawTweet>,
    pub skipped: usize,
}

/// Parses the date forms seen in scraped archives: plain dates, RFC 3339 and
/// `YYYY-MM-DD HH:MM:SS` timestamps.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc().date());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.date());
        }
    }
    None
}

fn split_hashtags(field: &str) -> Vec<String> {
    field
        .split('|')
        .map(|h| h.trim().trim_start_matches('#'))
        .filter(|h| !h.is_empty())
        .map(str::to_string)
        .collect()
}

/// Reads a tweet CSV with header `id,created_at,text,hashtags`.
///
/// The `hashtags` column is optional. Rows with an empty id, an unparseable
/// date, or neither text nor hashtags are skipped and counted.
pub fn load_tweets(path: impl AsRef<Path>) -> Result<LoadedTweets, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_tweets(file).map_err(|e| match e {
        CorpusError::Csv { source, .. } => CorpusError::Csv {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

pub fn read_tweets<R: Read>(reader: R) -> Result<LoadedTweets, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let csv_err = |source| CorpusError::Csv {
        path: String::new(),
        source,
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = column("id").ok_or_else(|| CorpusError::MissingColumn("id".into()))?;
    let date_col =
        column("created_at").ok_or_else(|| CorpusError::MissingColumn("created_at".into()))?;
    let text_col = column("text").ok_or_else(|| CorpusError::MissingColumn("text".into()))?;
    let tags_col = column("hashtags");

    let mut out = LoadedTweets::default();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let id = record.get(id_col).unwrap_or("").trim();
        let date = record.get(date_col).and_then(parse_date);
        let text = record.get(text_col).unwrap_or("");
        let hashtags = tags_col
            .and_then(|c| record.get(c))
            .map(split_hashtags)
            .unwrap_or_default();
        match date {
            Some(created_at) if !id.is_empty() && (!text.is_empty() || !hashtags.is_empty()) => {
                out.tweets.push(RawTweet {
                    id: id.to_string(),
                    created_at,
                    text: text.to_string(),
                    hashtags,
                })
            }
            _ => out.skipped += 1,
        }
    }
    Ok(out)
}

/// Writes tweets in the canonical archive layout.
pub fn write_tweets<W: io::Write>(writer: W, tweets: &[RawTweet]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["id", "created_at", "text", "hashtags"])?;
    for t in tweets {
        let date = t.created_at.format("%Y-%m-%d").to_string();
        wtr.write_record([
            t.id.as_str(),
            date.as_str(),
            t.text.as_str(),
            t.hashtags.join("|").as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Keeps tweets whose text or hashtags mention any keyword (case-insensitive substring).
/// An empty keyword list keeps everything.
pub fn filter_keywords(tweets: Vec<RawTweet>, keywords: &[String]) -> Vec<RawTweet> {
    let keywords: Vec<String> = keywords
        .iter()
        .map(|k| k.trim().to_lowercase())
        .filter(|k| !k.is_empty())
        .collect();
    if keywords.is_empty() {
        return tweets;
    }
    tweets
        .into_iter()
        .filter(|t| {
            let text = t.text.to_lowercase();
            keywords.iter().any(|k| {
                text.contains(k.as_str()) || t.hashtags.iter().any(|h| h.to_lowercase().contains(k.as_str()))
            })
        })
        .collect()
}

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)(?:https?://\S*|www\.\S+|\bt\.co/\S*|pic\.twitter\.com/\S*)").unwrap()
    })
}

fn mention_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@\w+").unwrap())
}

/// Normalizes raw tweet text.
///
/// Links and @-mentions are dropped, text is lowercased, `#` is stripped from
/// hashtags (the word stays), every character outside `[a-z0-9_']` becomes a
/// separator, and whitespace runs collapse to one space.
pub fn clean_text(raw: &str) -> String {
    let without_urls = url_pattern().replace_all(raw, " ");
    let without_mentions = mention_pattern().replace_all(&without_urls, " ");
    let lowered = without_mentions.to_lowercase();

    let mut out = String::with_capacity(lowered.len());
    let mut pending_space = false;
    for ch in lowered.chars() {
        let ch = match ch {
            '\u{2018}' | '\u{2019}' | '`' => '\'',
            c => c,
        };
        match ch {
            '#' => {}
            'a'..='z' | '0'..='9' | '_' | '\'' => {
                if pending_space && !out.is_empty() {
                    out.push(' ');
                }
                pending_space = false;
                out.push(ch);
            }
            _ => pending_space = true,
        }
    }
    out
}

/// Reads a one-token-per-line word list; `#` lines and blanks are ignored.
pub fn parse_word_list(contents: &str) -> Vec<String> {
    contents
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_word_list(path: impl AsRef<Path>) -> Result<Vec<String>, CorpusError> {
    let path = path.as_ref();
    let contents = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_word_list(&contents))
}

/// The bundled English stopword list.
pub fn default_stopwords() -> Vec<String> {
    parse_word_list(DEFAULT_STOPWORDS)
}

/// The bundled romanized-Hindi marker list.
pub fn default_hindi_words() -> Vec<String> {
    parse_word_list(DEFAULT_HINDI_WORDS)
}

/// Tweets that passed the English check, and those that did not.
#[derive(Debug, Clone, Default)]
pub struct EnglishSplit {
    pub kept: Vec<CleanTweet>,
    pub flagged: Vec<CleanTweet>,
}

/// Heuristic English selection.
///
/// A tweet is kept when at least 15% of its tokens are English stopwords, or
/// when it has one or two tokens that are all ASCII. Everything else is
/// flagged `non_english`. Independently, tweets with two or more hits in
/// `hindi_words` get the advisory `transliterated_hindi_suspect` flag.
pub fn filter_english(
    tweets: Vec<CleanTweet>,
    stopwords: &[String],
    hindi_words: &[String],
) -> Result<EnglishSplit, CorpusError> {
    if stopwords.is_empty() {
        return Err(CorpusError::EmptyWordList);
    }
    let stop: HashSet<&str> = stopwords.iter().map(String::as_str).collect();
    let hindi: HashSet<&str> = hindi_words.iter().map(String::as_str).collect();

    let mut split = EnglishSplit::default();
    for mut tweet in tweets {
        let n = tweet.tokens.len();
        let hindi_hits = tweet.tokens.iter().filter(|t| hindi.contains(t.as_str())).count();
        if hindi_hits >= HINDI_SUSPECT_HITS {
            tweet.flags.insert(TweetFlag::TransliteratedHindiSuspect);
        }
        let stop_hits = tweet.tokens.iter().filter(|t| stop.contains(t.as_str())).count();
        let english = n >= 1
            && (stop_hits as f64 >= ENGLISH_STOPWORD_RATIO * n as f64
                || (n < 3 && tweet.tokens.iter().all(|t| t.is_ascii())));
        if english {
            split.kept.push(tweet);
        } else {
            tweet.flags.insert(TweetFlag::NonEnglish);
            split.flagged.push(tweet);
        }
    }
    Ok(split)
}

/// Token to index map with reserved PAD (0) and OOV (1) entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_frequency: usize,
}

impl Vocabulary {
    const PAD_TOKEN: &'static str = "<pad>";
    const OOV_TOKEN: &'static str = "<oov>";

    /// Builds a vocabulary from tokens already in index order (starting at 2).
    pub fn from_ordered_tokens(tokens: Vec<String>, min_frequency: usize) -> Self {
        let mut all = Vec::with_capacity(tokens.len() + 2);
        all.push(Self::PAD_TOKEN.to_string());
        all.push(Self::OOV_TOKEN.to_string());
        all.extend(tokens);
        let index = all
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens: all,
            index,
            min_frequency,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn min_frequency(&self) -> usize {
        self.min_frequency
    }

    /// Index of a real token; reserved names never resolve.
    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        if id < 2 {
            return None;
        }
        self.tokens.get(id).map(String::as_str)
    }

    /// Real tokens in index order.
    pub fn real_tokens(&self) -> &[String] {
        &self.tokens[2..]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut out = format!("# min_frequency={}\n", self.min_frequency);
        for t in self.real_tokens() {
            out.push_str(t);
            out.push('\n');
        }
        std::fs::write(path, out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let min_frequency = contents
            .lines()
            .next()
            .and_then(|l| l.strip_prefix("# min_frequency="))
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(1);
        let tokens = contents
            .lines()
            .filter(|l| !l.starts_with('#') && !l.is_empty())
            .map(str::to_string)
            .collect();
        Ok(Self::from_ordered_tokens(tokens, min_frequency))
    }
}

/// Builds a deterministic vocabulary: tokens with at least `min_frequency`
/// occurrences, ordered by descending count then ascending token.
pub fn build_vocab(corpus: &[CleanTweet], min_frequency: usize) -> Result<Vocabulary, CorpusError> {
    if min_frequency < 1 {
        return Err(CorpusError::InvalidMinFrequency(min_frequency));
    }
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tweet in corpus {
        for tok in &tweet.tokens {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_frequency && t != Vocabulary::PAD_TOKEN && t != Vocabulary::OOV_TOKEN)
        .collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(Vocabulary::from_ordered_tokens(
        ranked.into_iter().map(|(t, _)| t.to_string()).collect(),
        min_frequency,
    ))
}

/// A fixed-length, right-padded sequence of vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedText {
    pub ids: Vec<usize>,
    pub true_length: usize,
}

impl EncodedText {
    /// The non-PAD prefix.
    pub fn active(&self) -> &[usize] {
        &self.ids[..self.true_length]
    }
}

pub fn encode(tweet: &CleanTweet, vocab: &Vocabulary, max_len: usize) -> EncodedText {
    encode_tokens(&tweet.tokens, vocab, max_len)
}

pub fn encode_tokens<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, max_len: usize) -> EncodedText {
    let max_len = max_len.max(1);
    let mut ids: Vec<usize> = tokens
        .iter()
        .take(max_len)
        .map(|t| vocab.get(t.as_ref()).unwrap_or(OOV))
        .collect();
    let true_length = ids.len();
    ids.resize(max_len, PAD);
    EncodedText { ids, true_length }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tweet(id: &str, text: &str) -> CleanTweet {
        CleanTweet::from_clean_text(id, text.to_string())
    }

    #[test]
    fn clean_text_fixture() {
        assert_eq!(clean_text(""), "");
        assert_eq!(
            clean_text("Stay SAFE! https://t.co/abc 😷 #StayHome @WHO"),
            "stay safe stayhome"
        );
        assert_eq!(clean_text("covid covid"), "covid covid");
    }

    #[test]
    fn clean_text_handles_links_and_contractions() {
        assert_eq!(clean_text("Don’t panic!!! www.who.int/covid"), "don't panic");
        assert_eq!(clean_text("see pic.twitter.com/xyz and t.co/q"), "see and");
        assert_eq!(clean_text("  multiple\t\nspaces  "), "multiple spaces");
        assert_eq!(clean_text("café_19"), "caf _19");
    }

    #[test]
    fn tokens_strip_hash() {
        let t = tweet("1", "a #b c");
        assert_eq!(t.tokens, vec!["a", "b", "c"]);
    }

    #[test]
    fn load_counts_malformed_dates() {
        let csv = "id,created_at,text,hashtags\n\
                   1,2020-03-01,hello world,covid\n\
                   2,2020-03-02,second,\n\
                   3,not-a-date,broken,\n\
                   4,2020-03-04T10:00:00Z,\"quoted, text\",a|b\n\
                   5,2020-03-05 08:30:00,last one,\n";
        let loaded = read_tweets(csv.as_bytes()).unwrap();
        assert_eq!(loaded.tweets.len(), 4);
        assert_eq!(loaded.skipped, 1);
        assert_eq!(loaded.tweets[2].text, "quoted, text");
        assert_eq!(loaded.tweets[2].hashtags, vec!["a", "b"]);
    }

    #[test]
    fn load_header_only() {
        let loaded = read_tweets("id,created_at,text,hashtags\n".as_bytes()).unwrap();
        assert!(loaded.tweets.is_empty());
        assert_eq!(loaded.skipped, 0);
    }

    #[test]
    fn load_names_missing_column() {
        let err = read_tweets("id,text\n1,hi\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn(ref c) if c == "created_at"));
        assert!(err.to_string().contains("created_at"));
    }

    #[test]
    fn load_missing_file() {
        assert!(matches!(
            load_tweets("/nonexistent/tweets.csv"),
            Err(CorpusError::Io { .. })
        ));
    }

    #[test]
    fn english_filter_examples() {
        let stop = default_stopwords();
        let hindi = vec!["hai".to_string(), "nahi".to_string()];
        let split = filter_english(
            vec![
                tweet("a", "the virus is spreading"),
                tweet("b", ""),
                tweet("c", "hai nahi corona"),
            ],
            &stop,
            &hindi,
        )
        .unwrap();
        assert_eq!(split.kept.len(), 1);
        assert_eq!(split.kept[0].id, "a");
        assert_eq!(split.flagged.len(), 2);
        assert!(split.flagged.iter().all(|t| t.has_flag(TweetFlag::NonEnglish)));
        let c = split.flagged.iter().find(|t| t.id == "c").unwrap();
        assert!(c.has_flag(TweetFlag::TransliteratedHindiSuspect));
    }

    #[test]
    fn english_filter_short_ascii_kept() {
        let split = filter_english(vec![tweet("a", "lockdown corona")], &default_stopwords(), &[]).unwrap();
        assert_eq!(split.kept.len(), 1);
    }

    #[test]
    fn english_filter_requires_stopwords() {
        assert!(matches!(
            filter_english(vec![], &[], &[]),
            Err(CorpusError::EmptyWordList)
        ));
    }

    #[test]
    fn vocab_examples() {
        let v = build_vocab(&[tweet("1", "a a b")], 1).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.get("a"), Some(2));
        assert_eq!(v.get("b"), Some(3));

        let v = build_vocab(&[tweet("1", "a b")], 2).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.is_empty());

        let v = build_vocab(&[tweet("1", "x m")], 1).unwrap();
        assert!(v.get("m").unwrap() < v.get("x").unwrap());

        assert!(matches!(
            build_vocab(&[tweet("1", "a")], 0),
            Err(CorpusError::InvalidMinFrequency(0))
        ));
        assert!(matches!(build_vocab(&[], 1), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn reserved_names_do_not_collide() {
        let v = build_vocab(&[tweet("1", "<pad> <oov>")], 1).unwrap();
        assert_eq!(v.get("<pad>"), None);
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn encode_examples() {
        let v = build_vocab(&[tweet("1", "a a b")], 1).unwrap();
        let e = encode(&tweet("2", "a b"), &v, 4);
        assert_eq!(e.ids, vec![2, 3, 0, 0]);
        assert_eq!(e.true_length, 2);

        let e = encode(&tweet("3", "zzz"), &v, 4);
        assert_eq!(e.ids[0], OOV);

        let e = encode(&tweet("4", "a b a b a b a b a b"), &v, 4);
        assert_eq!(e.true_length, 4);
        assert_eq!(e.ids.len(), 4);
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = build_vocab(&[tweet("1", "b a a c c c")], 1).unwrap();
        v.save(&path).unwrap();
        assert_eq!(Vocabulary::load(&path).unwrap(), v);
    }

    #[test]
    fn keyword_filter() {
        let d = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let mk = |id: &str, text: &str, tags: &[&str]| RawTweet {
            id: id.into(),
            created_at: d,
            text: text.into(),
            hashtags: tags.iter().map(|s| s.to_string()).collect(),
        };
        let kept = filter_keywords(
            vec![mk("1", "Corona update", &[]), mk("2", "cricket", &["COVID19"]), mk("3", "cricket", &[])],
            &["corona".into(), "covid".into()],
        );
        let ids: Vec<_> = kept.iter().map(|t| t.id.as_str()).collect();
        assert_eq!(ids, ["1", "2"]);
    }
}
