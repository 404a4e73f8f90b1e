//! Synthetic sequence tasks and the JSONL corpus format.
//!
//! A corpus file starts with a header line `{"vocab":V,"task":"copy"}`
//! followed by one `{"src":[...],"tgt":[...]}` object per pair.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::RESERVED;

/// Generator stream used for corpus sampling. Parameter init uses stream 0
/// and batch shuffling stream 1.
pub const DATA_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Copy,
    Reverse,
    Sort,
    File,
}

impl Task {
    /// Target sequence for a generated source.
    pub fn target(self, src: &[usize]) -> Result<Vec<usize>> {
        Ok(match self {
            Task::Copy => src.to_vec(),
            Task::Reverse => src.iter().rev().copied().collect(),
            Task::Sort => {
                let mut t = src.to_vec();
                t.sort_unstable();
                t
            }
            Task::File => return domain("file corpora have no generation rule"),
        })
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Copy => "copy",
            Task::Reverse => "reverse",
            Task::Sort => "sort",
            Task::File => "file",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(Task::Copy),
            "reverse" => Ok(Task::Reverse),
            "sort" => Ok(Task::Sort),
            "file" => Ok(Task::File),
            other => domain(format!("unknown task {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Header {
    vocab: usize,
    task: Task,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub vocab: usize,
    pub task: Task,
    pub pairs: Vec<Pair>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks ids against the vocabulary and the reserved range.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.pairs.iter().enumerate() {
            check_pair(p, self.vocab).map_err(|msg| Error::Validation(format!("pair {i}: {msg}")))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        let header = Header {
            vocab: self.vocab,
            task: self.task,
        };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for p in &self.pairs {
            writeln!(w, "{}", serde_json::to_string(p)?)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses a corpus file. An empty file is an empty, valid corpus.
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((hline, header)) = lines.next() else {
            return Ok(Self {
                vocab: RESERVED,
                task: Task::File,
                pairs: Vec::new(),
            });
        };
        let header: Header = serde_json::from_str(header).map_err(|e| Error::Parse {
            line: hline + 1,
            msg: format!("bad header: {e}"),
        })?;
        let mut pairs = Vec::new();
        for (i, line) in lines {
            let pair: Pair = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            check_pair(&pair, header.vocab).map_err(|msg| Error::Validation(format!("line {}: {msg}", i + 1)))?;
            pairs.push(pair);
        }
        Ok(Self {
            vocab: header.vocab,
            task: header.task,
            pairs,
        })
    }
}

fn check_pair(p: &Pair, vocab: usize) -> std::result::Result<(), String> {
    if p.src.is_empty() || p.tgt.is_empty() {
        return Err("empty sequence".into());
    }
    for &id in p.src.iter().chain(&p.tgt) {
        if id >= vocab {
            return Err(format!("token id {id} >= vocab {vocab}"));
        }
        if id < RESERVED {
            return Err(format!("reserved id {id} inside a payload"));
        }
    }
    Ok(())
}

/// Generates `n_pairs` random sources of length `seq_len` over
/// `payload_vocab` symbols (ids `RESERVED..RESERVED + payload_vocab`).
/// Draws from stream [`DATA_STREAM`] of the seeded generator, so a corpus
/// and a model initialized from the same seed use unrelated bits.
pub fn gen_task(task: Task, n_pairs: usize, seq_len: usize, payload_vocab: usize, seed: u64) -> Result<Corpus> {
    if payload_vocab < 2 || seq_len == 0 {
        return domain(format!(
            "need payload_vocab >= 2 and seq_len >= 1, got {payload_vocab} and {seq_len}"
        ));
    }
    if task == Task::File {
        return domain("cannot generate a file corpus");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DATA_STREAM);
    let pairs = (0..n_pairs)
        .map(|_| {
            let src: Vec<usize> = (0..seq_len)
                .map(|_| RESERVED + rng.gen_range(0..payload_vocab))
                .collect();
            let tgt = task.target(&src)?;
            Ok(Pair { src, tgt })
        })
        .collect::<Result<_>>()?;
    Ok(Corpus {
        vocab: RESERVED + payload_vocab,
        task,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn task_targets() {
        let src = [5, 7, 4];
        assert_eq!(Task::Copy.target(&src).unwrap(), vec![5, 7, 4]);
        assert_eq!(Task::Reverse.target(&src).unwrap(), vec![4, 7, 5]);
        assert_eq!(Task::Sort.target(&src).unwrap(), vec![4, 5, 7]);
    }

    #[test]
    fn generation_validates_sizes() {
        assert!(gen_task(Task::Copy, 3, 4, 1, 0).is_err());
        assert!(gen_task(Task::Copy, 3, 0, 5, 0).is_err());
        assert!(gen_task(Task::File, 3, 2, 5, 0).is_err());
        let c = gen_task(Task::Sort, 20, 5, 4, 3).unwrap();
        assert_eq!(c.vocab, 7);
        c.validate().unwrap();
        assert!(c.pairs.iter().all(|p| p.tgt.windows(2).all(|w| w[0] <= w[1])));
    }

    #[test]
    fn file_round_trip() {
        let c = gen_task(Task::Reverse, 100, 6, 8, 42).unwrap();
        let path = std::env::temp_dir().join(format!("ham-corpus-{}.jsonl", std::process::id()));
        c.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 101);
        assert!(text.starts_with("{\"vocab\":11,\"task\":\"reverse\"}\n{\"src\":["));
        assert_eq!(Corpus::load(&path).unwrap(), c);
        fs::remove_file(&path).unwrap();
    }

    #[test]
    fn non_integer_token_reports_line() {
        let text = "{\"vocab\":9,\"task\":\"copy\"}\n{\"src\":[3],\"tgt\":[3]}\n{\"src\":[3,\"x\"],\"tgt\":[3]}\n";
        match Corpus::parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_vocab_id_is_a_validation_error() {
        let text = "{\"vocab\":5,\"task\":\"file\"}\n{\"src\":[3],\"tgt\":[5]}\n";
        let err = Corpus::parse(text).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("line 2")), "{err}");
        let text = "{\"vocab\":5,\"task\":\"file\"}\n{\"src\":[1],\"tgt\":[3]}\n";
        assert!(matches!(Corpus::parse(text), Err(Error::Validation(_))));
    }

    #[test]
    fn empty_file_is_an_empty_corpus() {
        let c = Corpus::parse("").unwrap();
        assert!(c.is_empty());
        c.validate().unwrap();
    }

    proptest! {
        #[test]
        fn generation_is_deterministic(seed in any::<u64>(), n in 1usize..20, len in 1usize..8) {
            let a = gen_task(Task::Copy, n, len, 5, seed).unwrap();
            let b = gen_task(Task::Copy, n, len, 5, seed).unwrap();
            prop_assert_eq!(&a, &b);
            let reparsed = {
                let mut buf = Vec::new();
                buf.push(serde_json::to_string(&Header { vocab: a.vocab, task: a.task }).unwrap());
                buf.extend(a.pairs.iter().map(|p| serde_json::to_string(p).unwrap()));
                Corpus::parse(&buf.join("\n")).unwrap()
            };
            prop_assert_eq!(reparsed, a);
        }
    }
}
