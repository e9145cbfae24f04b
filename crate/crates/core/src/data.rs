//! Datasets of generated pairs and their text file format.
//!
//! ```text
//! # kind=sort
//! # vocab=10
//! # length=3
//! # modulus=none
//! # seed=1
//! # train=1
//! # val=0
//! # test=0
//! # split=train
//! 15 27 6<TAB>6 15 27
//! ```
//!
//! Header lines come first; each `# split=` line opens a split section whose
//! lines are `x` tokens and `y` tokens separated by a single tab.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{SeededRng, Stream};
use crate::tasks::{SequencePair, TaskKind, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn stream(self) -> Stream {
        match self {
            Split::Train => Stream::DataTrain,
            Split::Val => Stream::DataVal,
            Split::Test => Stream::DataTest,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown split {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn new(train: usize, val: usize, test: usize) -> Self {
        Self { train, val, test }
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: TaskSpec,
    pub seed: u64,
    pub train: Vec<SequencePair>,
    pub val: Vec<SequencePair>,
    pub test: Vec<SequencePair>,
}

fn generate_split(task: &TaskSpec, n: usize, seed: u64, split: Split) -> Vec<SequencePair> {
    let mut rng = SeededRng::new(seed, split.stream());
    (0..n).map(|_| task.generate_pair(&mut rng)).collect()
}

/// Draws the three splits from independent substreams of `seed`; the result
/// does not depend on how the splits are scheduled.
pub fn make_dataset(task: TaskSpec, sizes: SplitSizes, seed: u64) -> Result<Dataset> {
    task.validate()?;
    let (train, (val, test)) = rayon::join(
        || generate_split(&task, sizes.train, seed, Split::Train),
        || {
            rayon::join(
                || generate_split(&task, sizes.val, seed, Split::Val),
                || generate_split(&task, sizes.test, seed, Split::Test),
            )
        },
    );
    Ok(Dataset {
        task,
        seed,
        train,
        val,
        test,
    })
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[SequencePair] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn sizes(&self) -> SplitSizes {
        SplitSizes::new(self.train.len(), self.val.len(), self.test.len())
    }

    /// Number of input sequences that appear in more than one split.
    pub fn cross_split_duplicates(&self) -> usize {
        let train: HashSet<&[usize]> = self.train.iter().map(|p| p.x.as_slice()).collect();
        let val: HashSet<&[usize]> = self.val.iter().map(|p| p.x.as_slice()).collect();
        let test: HashSet<&[usize]> = self.test.iter().map(|p| p.x.as_slice()).collect();
        train.intersection(&val).count() + train.intersection(&test).count() + val.intersection(&test).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let modulus = self.task.modulus.map_or_else(|| "none".to_string(), |n| n.to_string());
        let _ = writeln!(out, "# kind={}", self.task.kind);
        let _ = writeln!(out, "# vocab={}", self.task.vocab_size);
        let _ = writeln!(out, "# length={}", self.task.length);
        let _ = writeln!(out, "# modulus={modulus}");
        let _ = writeln!(out, "# seed={}", self.seed);
        for split in Split::ALL {
            let _ = writeln!(out, "# {}={}", split.as_str(), self.split(split).len());
        }
        for split in Split::ALL {
            let _ = writeln!(out, "# split={}", split.as_str());
            for pair in self.split(split) {
                write_tokens(&mut out, &pair.x);
                out.push('\t');
                write_tokens(&mut out, &pair.y);
                out.push('\n');
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(format!("writing dataset {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading dataset {}", path.display()), e))?;
        Self::parse(&text, path)
    }

    /// Parses the text format; `path` is only used in diagnostics.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut kind = None;
        let mut vocab = None;
        let mut length = None;
        let mut modulus: Option<Option<usize>> = None;
        let mut seed = None;
        let mut declared = [None; 3];
        let mut splits: [Vec<SequencePair>; 3] = Default::default();
        let mut current: Option<usize> = None;
        let mut task: Option<TaskSpec> = None;

        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if let Some(header) = line.strip_prefix('#') {
                let (key, value) = header
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| err(lineno, format!("header without key=value: {line:?}")))?;
                let num = |v: &str| {
                    v.parse::<u64>()
                        .map_err(|_| err(lineno, format!("invalid number {v:?} for {key}")))
                };
                if key == "split" {
                    let s: Split = value
                        .parse()
                        .map_err(|_| err(lineno, format!("unknown split {value:?}")))?;
                    current = Some(s as usize);
                    if task.is_none() {
                        let kind = kind.ok_or_else(|| err(lineno, "missing kind header".into()))?;
                        let spec = TaskSpec {
                            kind,
                            vocab_size: vocab.ok_or_else(|| err(lineno, "missing vocab header".into()))?,
                            length: length.ok_or_else(|| err(lineno, "missing length header".into()))?,
                            modulus: modulus.ok_or_else(|| err(lineno, "missing modulus header".into()))?,
                        };
                        spec.validate().map_err(|e| err(lineno, e.to_string()))?;
                        task = Some(spec);
                    }
                    continue;
                }
                if task.is_some() {
                    return Err(err(lineno, format!("header {key:?} after payload started")));
                }
                match key {
                    "kind" => kind = Some(value.parse::<TaskKind>().map_err(|e| err(lineno, e.to_string()))?),
                    "vocab" => vocab = Some(num(value)? as usize),
                    "length" => length = Some(num(value)? as usize),
                    "modulus" => {
                        modulus = Some(if value == "none" {
                            None
                        } else {
                            Some(num(value)? as usize)
                        });
                    }
                    "seed" => seed = Some(num(value)?),
                    "train" => declared[0] = Some(num(value)? as usize),
                    "val" => declared[1] = Some(num(value)? as usize),
                    "test" => declared[2] = Some(num(value)? as usize),
                    other => return Err(err(lineno, format!("unknown header key {other:?}"))),
                }
                continue;
            }
            let (Some(split), Some(spec)) = (current, task.as_ref()) else {
                return Err(err(lineno, "pair line before any split marker".into()));
            };
            let (xs, ys) = line
                .split_once('\t')
                .ok_or_else(|| err(lineno, "expected x tokens, a tab, then y tokens".into()))?;
            let x = parse_tokens(xs).map_err(|m| err(lineno, m))?;
            let y = parse_tokens(ys).map_err(|m| err(lineno, m))?;
            if x.len() != spec.length || y.len() != spec.length {
                return Err(err(
                    lineno,
                    format!(
                        "expected {} tokens on each side, got {} and {}",
                        spec.length,
                        x.len(),
                        y.len()
                    ),
                ));
            }
            if let Some(&t) = x.iter().chain(&y).find(|&&t| t >= spec.vocab_size) {
                return Err(err(
                    lineno,
                    format!("token {t} out of range for vocabulary {}", spec.vocab_size),
                ));
            }
            if spec.apply(&x).map_err(|e| err(lineno, e.to_string()))? != y {
                return Err(err(lineno, format!("target is not the {} of the input", spec.kind)));
            }
            splits[split].push(SequencePair { x, y });
        }

        let task = task.ok_or_else(|| err(text.lines().count(), "no split sections".into()))?;
        let seed = seed.ok_or_else(|| err(0, "missing seed header".into()))?;
        for split in Split::ALL {
            let got = splits[split as usize].len();
            match declared[split as usize] {
                Some(n) if n == got => {}
                Some(n) => {
                    return Err(err(
                        0,
                        format!("header declares {n} {} pairs, payload has {got}", split.as_str()),
                    ))
                }
                None => return Err(err(0, format!("missing {} size header", split.as_str()))),
            }
        }
        let [train, val, test] = splits;
        Ok(Self {
            task,
            seed,
            train,
            val,
            test,
        })
    }
}

fn write_tokens(out: &mut String, tokens: &[usize]) {
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{t}");
    }
}

fn parse_tokens(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(' ')
        .map(|t| t.parse::<usize>().map_err(|_| format!("invalid token {t:?}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(kind: &str, vocab: usize, len: usize, modulus: &str, train: usize) -> String {
        format!("# kind={kind}\n# vocab={vocab}\n# length={len}\n# modulus={modulus}\n# seed=1\n# train={train}\n# val=0\n# test=0\n")
    }

    #[test]
    fn exact_split_sizes_and_determinism() {
        let task = TaskSpec::new(TaskKind::Reverse, 10);
        let ds = make_dataset(task.clone(), SplitSizes::new(90, 10, 100), 1).unwrap();
        assert_eq!(ds.sizes(), SplitSizes::new(90, 10, 100));
        assert_eq!(ds, make_dataset(task.clone(), SplitSizes::new(90, 10, 100), 1).unwrap());
        let other = make_dataset(task, SplitSizes::new(90, 10, 100), 2).unwrap();
        assert_ne!(ds.train[0], other.train[0]);
    }

    #[test]
    fn splits_are_independent_of_each_other_sizes() {
        let task = TaskSpec::new(TaskKind::Sort, 10);
        let a = make_dataset(task.clone(), SplitSizes::new(5, 5, 5), 3).unwrap();
        let b = make_dataset(task, SplitSizes::new(50, 5, 5), 3).unwrap();
        assert_eq!(a.val, b.val);
        assert_eq!(a.test, b.test);
        assert_eq!(a.train[..], b.train[..5]);
    }

    #[test]
    fn parses_format_example() {
        let text = header("sort", 100, 3, "none", 1) + "# split=train\n15 27 6\t6 15 27\n# split=val\n# split=test\n";
        let ds = Dataset::parse(&text, Path::new("x.txt")).unwrap();
        assert_eq!(
            ds.train,
            vec![SequencePair {
                x: vec![15, 27, 6],
                y: vec![6, 15, 27]
            }]
        );
        assert_eq!(ds.task.kind, TaskKind::Sort);
    }

    #[test]
    fn rejects_out_of_range_token_with_line() {
        let text = header("sort", 10, 3, "none", 1) + "# split=train\n1 2 10\t1 2 10\n";
        match Dataset::parse(&text, Path::new("d.txt")) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 10);
                assert!(msg.contains("out of range"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_and_inconsistent() {
        let bad_sep = header("sort", 10, 3, "none", 1) + "# split=train\n1 2 3 1 2 3\n";
        assert!(Dataset::parse(&bad_sep, Path::new("d")).is_err());
        let wrong_count = header("sort", 10, 3, "none", 2) + "# split=train\n1 2 3\t1 2 3\n# split=val\n# split=test\n";
        assert!(Dataset::parse(&wrong_count, Path::new("d")).is_err());
        let wrong_target =
            header("sort", 10, 3, "none", 1) + "# split=train\n3 2 1\t3 2 1\n# split=val\n# split=test\n";
        assert!(Dataset::parse(&wrong_target, Path::new("d")).is_err());
        let no_modulus = header("replace", 10, 3, "none", 1) + "# split=train\n";
        assert!(Dataset::parse(&no_modulus, Path::new("d")).is_err());
        let unknown = "# colour=blue\n".to_string();
        assert!(Dataset::parse(&unknown, Path::new("d")).is_err());
    }

    #[test]
    fn no_cross_split_duplicates_at_length_25() {
        let ds = make_dataset(
            TaskSpec::new(TaskKind::Reverse, 10),
            SplitSizes::new(9000, 1000, 10000),
            7,
        )
        .unwrap();
        assert_eq!(ds.cross_split_duplicates(), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn text_round_trip(seed in any::<u64>(), kind in 0usize..4, vocab in 2usize..40, len in 1usize..9) {
            let task = TaskSpec::new(TaskKind::ALL[kind], vocab).with_length(len);
            let ds = make_dataset(task, SplitSizes::new(7, 3, 2), seed).unwrap();
            let back = Dataset::parse(&ds.to_text(), Path::new("mem")).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
