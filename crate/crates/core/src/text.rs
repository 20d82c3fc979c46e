//! Caption normalization, vocabulary and padded index encoding.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const START_TOKEN: &str = "<START>";
pub const END_TOKEN: &str = "<END>";
pub const UNK_TOKEN: &str = "<UNK>";
/// Index reserved for padding; never mapped to a word.
pub const PAD_INDEX: usize = 0;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("maximum sequence length must be at least 2, got {0}")]
    MaxLenTooSmall(usize),
    #[error("index {index} is not in the vocabulary (size {size})")]
    UnknownIndex { index: usize, size: usize },
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: expected header `filename,caption`, found `{found}`")]
    ManifestHeader { path: PathBuf, found: String },
}

// Unicode punctuation (P*) plus every ASCII punctuation/symbol character.
static PUNCTUATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\p{P}[[:punct:]]]").expect("valid pattern"));

/// Lowercases, strips punctuation, drops one-letter words and collapses
/// whitespace.
///
/// Punctuation is replaced by a space rather than deleted so that elided
/// articles (`l'utérus`) separate into a removable single letter.
pub fn normalize_caption(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let stripped = PUNCTUATION.replace_all(&lower, " ");
    stripped
        .split_whitespace()
        .filter(|word| {
            let mut chars = word.chars();
            !matches!((chars.next(), chars.next()), (Some(c), None) if c.is_alphabetic())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn tag_caption(normalized: &str) -> String {
    if normalized.is_empty() {
        format!("{START_TOKEN} {END_TOKEN}")
    } else {
        format!("{START_TOKEN} {normalized} {END_TOKEN}")
    }
}

/// A caption in its three surface forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Caption {
    pub raw: String,
    pub normalized: String,
    pub tagged: String,
}

impl Caption {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let normalized = normalize_caption(&raw);
        let tagged = tag_caption(&normalized);
        Self {
            raw,
            normalized,
            tagged,
        }
    }
}

/// Fixed-length encoded caption; positions at and after `true_length` hold
/// [`PAD_INDEX`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub indices: Vec<usize>,
    pub true_length: usize,
}

impl TokenSequence {
    pub fn tokens(&self) -> &[usize] {
        &self.indices[..self.true_length]
    }
}

/// On-disk vocabulary: words listed in index order starting at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabularyFile {
    pub max_caption_length: usize,
    pub words: Vec<String>,
}

/// Bidirectional word/index map. Index 0 is padding; words occupy
/// `1..=size()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    max_caption_length: usize,
}

impl Vocabulary {
    /// Builds the vocabulary from tagged captions. Words are ordered by
    /// descending corpus frequency with lexicographic tie-break; the reserved
    /// markers are appended if the corpus lacks them.
    pub fn build<S: AsRef<str>>(tagged_captions: &[S]) -> Result<Self, TextError> {
        if tagged_captions.is_empty() {
            return Err(TextError::EmptyCorpus);
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut max_caption_length = 0;
        for caption in tagged_captions {
            let mut len = 0;
            for token in caption.as_ref().split_whitespace() {
                *counts.entry(token).or_default() += 1;
                len += 1;
            }
            max_caption_length = max_caption_length.max(len);
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut words: Vec<String> = ranked.into_iter().map(|(w, _)| w.to_owned()).collect();
        for reserved in [START_TOKEN, END_TOKEN, UNK_TOKEN] {
            if !words.iter().any(|w| w == reserved) {
                words.push(reserved.to_owned());
            }
        }
        Self::from_words(words, max_caption_length)
    }

    pub fn from_words(words: Vec<String>, max_caption_length: usize) -> Result<Self, TextError> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, word) in words.iter().enumerate() {
            if word.is_empty() || word.chars().any(char::is_whitespace) {
                return Err(TextError::InvalidVocabulary(format!("malformed word {word:?}")));
            }
            if index.insert(word.clone(), i + 1).is_some() {
                return Err(TextError::InvalidVocabulary(format!("duplicate word {word:?}")));
            }
        }
        for reserved in [START_TOKEN, END_TOKEN, UNK_TOKEN] {
            if !index.contains_key(reserved) {
                return Err(TextError::InvalidVocabulary(format!("missing {reserved}")));
            }
        }
        Ok(Self {
            words,
            index,
            max_caption_length,
        })
    }

    /// Number of words, including the reserved markers but not padding.
    pub fn size(&self) -> usize {
        self.words.len()
    }

    pub fn max_caption_length(&self) -> usize {
        self.max_caption_length
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        index.checked_sub(1).and_then(|i| self.words.get(i)).map(String::as_str)
    }

    /// Words in index order (index 1 first).
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn start_index(&self) -> usize {
        self.index[START_TOKEN]
    }

    pub fn end_index(&self) -> usize {
        self.index[END_TOKEN]
    }

    pub fn unk_index(&self) -> usize {
        self.index[UNK_TOKEN]
    }

    /// Maps a tagged caption to a sequence of exactly `max_len` indices.
    /// Unknown words map to `<UNK>`; over-long captions keep their prefix and
    /// end with `<END>` in the last slot.
    pub fn encode(&self, tagged: &str, max_len: usize) -> Result<TokenSequence, TextError> {
        if max_len < 2 {
            return Err(TextError::MaxLenTooSmall(max_len));
        }
        let unk = self.unk_index();
        let mut indices: Vec<usize> = tagged
            .split_whitespace()
            .map(|w| self.index_of(w).unwrap_or(unk))
            .collect();
        if indices.len() > max_len {
            indices.truncate(max_len);
            indices[max_len - 1] = self.end_index();
        }
        let true_length = indices.len();
        indices.resize(max_len, PAD_INDEX);
        Ok(TokenSequence { indices, true_length })
    }

    /// Renders indices as text, dropping padding and the start/end markers.
    pub fn decode(&self, indices: &[usize]) -> Result<String, TextError> {
        let (start, end) = (self.start_index(), self.end_index());
        let mut words = Vec::new();
        for &i in indices {
            if i == PAD_INDEX || i == start || i == end {
                continue;
            }
            let word = self.word(i).ok_or(TextError::UnknownIndex {
                index: i,
                size: self.size(),
            })?;
            words.push(word);
        }
        Ok(words.join(" "))
    }

    pub fn to_file_repr(&self) -> VocabularyFile {
        VocabularyFile {
            max_caption_length: self.max_caption_length,
            words: self.words.clone(),
        }
    }

    pub fn from_file_repr(file: VocabularyFile) -> Result<Self, TextError> {
        Self::from_words(file.words, file.max_caption_length)
    }

    pub fn save(&self, path: &Path) -> Result<(), TextError> {
        let file = File::create(path).map_err(|source| TextError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::to_writer_pretty(BufWriter::new(file), &self.to_file_repr()).map_err(|source| TextError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TextError> {
        let file = File::open(path).map_err(|source| TextError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let repr: VocabularyFile = serde_json::from_reader(BufReader::new(file)).map_err(|source| TextError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_file_repr(repr)
    }
}

/// One row of the dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub filename: String,
    pub caption: String,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, TextError> {
    let csv_err = |source| TextError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?;
    if headers.len() != 2 || &headers[0] != "filename" || &headers[1] != "caption" {
        return Err(TextError::ManifestHeader {
            path: path.to_path_buf(),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    reader.deserialize().collect::<Result<Vec<ManifestRow>, _>>().map_err(csv_err)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), TextError> {
    let csv_err = |source| TextError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush().map_err(|source| TextError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_caption(""), "");
        assert_eq!(normalize_caption("The Knee is straight."), "the knee is straight");
        assert_eq!(normalize_caption("l s a à coupe"), "coupe");
        assert_eq!(normalize_caption("  Coupe   TRANSVERSALE,\tde l'utérus!  "), "coupe transversale de utérus");
        assert_eq!(normalize_caption("x = 3 + 4"), "3 4");
    }

    #[test]
    fn tagging() {
        assert_eq!(tag_caption("femur bone"), "<START> femur bone <END>");
        assert_eq!(tag_caption(""), "<START> <END>");
        let table_reference = "a white straight line at the top center that represents the femur bone";
        let c = Caption::new(table_reference);
        assert_eq!(
            c.tagged,
            "<START> white straight line at the top center that represents the femur bone <END>"
        );
    }

    #[test]
    fn vocabulary_ordering() {
        let v = Vocabulary::build(&["<START> a b <END>", "<START> b c <END>"]).unwrap();
        let expected = ["<END>", "<START>", "b", "a", "c", "<UNK>"];
        assert_eq!(v.words(), &expected);
        assert_eq!(v.size(), 6);
        assert_eq!(v.max_caption_length(), 4);
        assert_eq!(v.index_of("<END>"), Some(1));
        assert_eq!(v.word(0), None);
    }

    #[test]
    fn single_caption_vocabulary() {
        let v = Vocabulary::build(&["<START> x <END>"]).unwrap();
        assert_eq!(v.size(), 4);
        assert_eq!(v.max_caption_length(), 3);
    }

    #[test]
    fn empty_corpus_rejected() {
        let empty: [&str; 0] = [];
        assert!(matches!(Vocabulary::build(&empty), Err(TextError::EmptyCorpus)));
    }

    #[test]
    fn encode_pads_and_maps_unknowns() {
        let v = Vocabulary::build(&["<START> femur bone <END>"]).unwrap();
        let seq = v.encode("<START> femur <END>", 5).unwrap();
        assert_eq!(
            seq.indices,
            vec![v.start_index(), v.index_of("femur").unwrap(), v.end_index(), 0, 0]
        );
        assert_eq!(seq.true_length, 3);

        let seq = v.encode("<START> <END>", 54).unwrap();
        assert_eq!(seq.indices.len(), 54);
        assert_eq!(&seq.indices[..3], &[v.start_index(), v.end_index(), 0]);

        let seq = v.encode("<START> tibia <END>", 4).unwrap();
        assert_eq!(seq.indices[1], v.unk_index());
        assert_eq!(v.decode(&seq.indices).unwrap(), "<UNK>");
    }

    #[test]
    fn encode_truncates_with_end_marker() {
        let v = Vocabulary::build(&["<START> a1 a2 a3 a4 <END>"]).unwrap();
        let seq = v.encode("<START> a1 a2 a3 a4 <END>", 4).unwrap();
        assert_eq!(seq.true_length, 4);
        assert_eq!(seq.indices[3], v.end_index());
        assert_eq!(v.decode(&seq.indices).unwrap(), "a1 a2");
        assert!(matches!(v.encode("<START> <END>", 1), Err(TextError::MaxLenTooSmall(1))));
    }

    #[test]
    fn decode_edge_cases() {
        let v = Vocabulary::build(&["<START> femur bone <END>"]).unwrap();
        let seq = v.encode("<START> femur bone <END>", 6).unwrap();
        assert_eq!(v.decode(&seq.indices).unwrap(), "femur bone");
        assert_eq!(v.decode(&[0, 0, 0]).unwrap(), "");
        assert!(matches!(v.decode(&[99]), Err(TextError::UnknownIndex { index: 99, .. })));
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        let v = Vocabulary::build(&["<START> femur bone <END>", "<START> knee <END>"]).unwrap();
        v.save(&path).unwrap();
        let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(raw["max_caption_length"], 4);
        assert_eq!(raw["words"][0], "<END>");
        assert_eq!(Vocabulary::load(&path).unwrap(), v);
    }

    #[test]
    fn vocabulary_file_validation() {
        let missing = VocabularyFile {
            max_caption_length: 3,
            words: vec!["<START>".into(), "<END>".into()],
        };
        assert!(Vocabulary::from_file_repr(missing).is_err());
        let dup = VocabularyFile {
            max_caption_length: 3,
            words: ["<START>", "<END>", "<UNK>", "a", "a"].map(String::from).to_vec(),
        };
        assert!(Vocabulary::from_file_repr(dup).is_err());
    }

    #[test]
    fn manifest_round_trip_and_header_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![
            ManifestRow {
                filename: "a.png".into(),
                caption: "The femur, straight.".into(),
            },
            ManifestRow {
                filename: "b.png".into(),
                caption: "coupe de l'utérus".into(),
            },
        ];
        write_manifest(&path, &rows).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("filename,caption\n"));
        assert_eq!(read_manifest(&path).unwrap(), rows);

        std::fs::write(&path, "name,text\na,b\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(TextError::ManifestHeader { .. })));
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(s in any::<String>()) {
            let once = normalize_caption(&s);
            prop_assert_eq!(normalize_caption(&once), once.clone());
            prop_assert!(!once.starts_with(' ') && !once.ends_with(' ') && !once.contains("  "));
        }

        #[test]
        fn normalization_idempotent_on_wordy_text(s in "[A-Za-zàéÉ',.!? \t]{0,60}") {
            let once = normalize_caption(&s);
            prop_assert_eq!(normalize_caption(&once), once.clone());
            prop_assert!(once.split(' ').all(|w| w.chars().count() != 1 || !w.chars().all(char::is_alphabetic)));
            prop_assert!(!once.chars().any(|c| c.is_uppercase() || c.is_ascii_punctuation()));
        }

        #[test]
        fn encode_decode_round_trip(words in prop::collection::vec("[a-z]{2,6}", 0..8), extra in 0usize..4) {
            let normalized = words.join(" ");
            let tagged = tag_caption(&normalized);
            let v = Vocabulary::build(&[tagged.as_str()]).unwrap();
            let max_len = v.max_caption_length() + extra;
            let seq = v.encode(&tagged, max_len.max(2)).unwrap();
            prop_assert_eq!(seq.indices.len(), max_len.max(2));
            prop_assert!(seq.indices[seq.true_length..].iter().all(|&i| i == PAD_INDEX));
            prop_assert!(seq.indices[..seq.true_length].iter().all(|&i| i != PAD_INDEX));
            prop_assert_eq!(v.decode(&seq.indices).unwrap(), normalized);
        }

        #[test]
        fn vocabulary_order_independent(mut caps in prop::collection::vec("[a-d]{2} [a-d]{2}( [a-d]{2})?", 1..10), seed in any::<u64>()) {
            let tagged: Vec<String> = caps.iter().map(|c| tag_caption(c)).collect();
            let a = Vocabulary::build(&tagged).unwrap();
            let n = caps.len();
            caps.rotate_left((seed as usize) % n);
            caps.reverse();
            let tagged: Vec<String> = caps.iter().map(|c| tag_caption(c)).collect();
            let b = Vocabulary::build(&tagged).unwrap();
            prop_assert_eq!(&a, &b);
            let distinct: std::collections::HashSet<&str> = tagged.iter().flat_map(|t| t.split_whitespace()).collect();
            prop_assert_eq!(a.size(), distinct.len() + 1);
            prop_assert_eq!(a.index_of("<UNK>"), Some(a.size()));
        }
    }
}
