//! The six algorithmic tasks: generators, per-task vocabularies and
//! sequence construction.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds::stream_seed;

pub const SEPARATOR: char = '|';
pub const END: char = '$';

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("{task} needs length at least {min}, got {len}")]
    TooShort { task: Task, len: usize, min: usize },
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("token '{token}' is not in the {task} vocabulary")]
    UnknownToken { task: Task, token: char },
    #[error("token index {0} out of range")]
    BadIndex(usize),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TaskError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Parity,
    Cycle,
    Reverse,
    Duplicate,
    Modular,
    BinaryAdd,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Parity,
        Task::Cycle,
        Task::Reverse,
        Task::Duplicate,
        Task::Modular,
        Task::BinaryAdd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Parity => "parity",
            Task::Cycle => "cycle",
            Task::Reverse => "reverse",
            Task::Duplicate => "duplicate",
            Task::Modular => "modular",
            Task::BinaryAdd => "binary_add",
        }
    }

    /// Task symbols, inputs first, without `|` and `$`.
    pub fn symbols(self) -> &'static str {
        match self {
            Task::Parity => "ab01",
            Task::Cycle => "sid01234",
            Task::Reverse | Task::Duplicate => "ab",
            Task::Modular => "01234+-*",
            Task::BinaryAdd => "01+",
        }
    }

    pub fn min_len(self) -> usize {
        if self == Task::BinaryAdd {
            3
        } else {
            1
        }
    }

    pub fn vocab(self) -> Vocabulary {
        let mut tokens: Vec<char> = self.symbols().chars().collect();
        tokens.push(SEPARATOR);
        tokens.push(END);
        Vocabulary { task: self, tokens }
    }

    /// Target for a given input; inputs are assumed well-formed.
    pub fn solve(self, input: &str) -> String {
        match self {
            Task::Parity => solve_parity(input),
            Task::Cycle => solve_cycle(input),
            Task::Reverse => input.chars().rev().collect(),
            Task::Duplicate => format!("{input}{input}"),
            Task::Modular => solve_modular(input),
            Task::BinaryAdd => solve_binary_add(input),
        }
    }

    /// Random instance of requested length `len`. Modular expressions of
    /// even length are generated one token longer.
    pub fn generate(self, len: usize, rng: &mut impl Rng) -> Result<TaskInstance> {
        if len < self.min_len() {
            return Err(TaskError::TooShort {
                task: self,
                len,
                min: self.min_len(),
            });
        }
        let pick = |rng: &mut dyn rand::RngCore, alphabet: &[u8], k: usize| -> String {
            (0..k).map(|_| alphabet[rng.random_range(0..alphabet.len())] as char).collect()
        };
        let input = match self {
            Task::Parity | Task::Reverse | Task::Duplicate => pick(rng, b"ab", len),
            Task::Cycle => pick(rng, b"sid", len),
            Task::Modular => {
                let len = len | 1;
                (0..len)
                    .map(|i| {
                        let set: &[u8] = if i % 2 == 0 { b"01234" } else { b"+-*" };
                        set[rng.random_range(0..set.len())] as char
                    })
                    .collect()
            }
            Task::BinaryAdd => {
                let left = rng.random_range(1..=len - 2);
                let a = pick(rng, b"01", left);
                let b = pick(rng, b"01", len - 1 - left);
                format!("{a}+{b}")
            }
        };
        let target = self.solve(&input);
        Ok(TaskInstance { task: self, input, target })
    }

    /// Number of intermediate target symbols before any final answer, for
    /// the tasks whose outputs trace every step.
    pub fn trace_len(self, input_len: usize) -> Option<usize> {
        match self {
            Task::Parity | Task::Cycle => Some(input_len),
            Task::Modular => Some(3 * input_len.div_ceil(2)),
            _ => None,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| TaskError::UnknownTask(s.to_string()))
    }
}

/// `1` where the prefix holds an even number of `a`s.
fn solve_parity(input: &str) -> String {
    let mut even = true;
    input
        .chars()
        .map(|c| {
            even ^= c == 'a';
            if even {
                '1'
            } else {
                '0'
            }
        })
        .collect()
}

fn solve_cycle(input: &str) -> String {
    let mut state = 0u32;
    input
        .chars()
        .map(|c| {
            state = match c {
                'i' => (state + 1) % 5,
                'd' => (state + 4) % 5,
                _ => state,
            };
            char::from_digit(state, 10).expect("single digit")
        })
        .collect()
}

/// One triple per operand: sign of the pending product, its magnitude mod 5,
/// and the sum of the terms already closed; then the value of the whole
/// expression.
fn solve_modular(input: &str) -> String {
    let digit = |c: char| c.to_digit(10).expect("operand digit") as i64;
    let mut chars = input.chars();
    let mut sign = 1i64;
    let mut product = digit(chars.next().expect("non-empty"));
    let mut closed = 0i64;
    let mut out = String::new();
    let emit = |out: &mut String, sign: i64, product: i64, closed: i64| {
        out.push(if sign > 0 { '+' } else { '-' });
        out.push(char::from_digit(product.rem_euclid(5) as u32, 10).unwrap());
        out.push(char::from_digit(closed.rem_euclid(5) as u32, 10).unwrap());
    };
    emit(&mut out, sign, product, closed);
    while let (Some(op), Some(d)) = (chars.next(), chars.next()) {
        let d = digit(d);
        match op {
            '*' => product = product * d % 5,
            _ => {
                closed = (closed + sign * product).rem_euclid(5);
                sign = if op == '-' { -1 } else { 1 };
                product = d;
            }
        }
        emit(&mut out, sign, product, closed);
    }
    let value = (closed + sign * product).rem_euclid(5);
    out.push(char::from_digit(value as u32, 10).unwrap());
    out
}

fn solve_binary_add(input: &str) -> String {
    let (a, b) = input.split_once('+').expect("two operands");
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let bit = |s: &[u8], i: usize| s.get(i).map_or(0, |&c| (c - b'0') as u32);
    let mut out = Vec::with_capacity(a.len().max(b.len()) + 1);
    let mut carry = 0;
    for i in 0..a.len().max(b.len()) {
        let s = bit(a, i) + bit(b, i) + carry;
        out.push(b'0' + (s & 1) as u8);
        carry = s >> 1;
    }
    if carry == 1 {
        out.push(b'1');
    }
    while out.len() > 1 && out.last() == Some(&b'0') {
        out.pop();
    }
    String::from_utf8(out).expect("ascii")
}

/// Ordered tokens of one task; a token's index is its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    task: Task,
    tokens: Vec<char>,
}

impl Vocabulary {
    pub fn task(&self) -> Task {
        self.task
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[char] {
        &self.tokens
    }

    pub fn index(&self, token: char) -> Result<usize> {
        self.tokens
            .iter()
            .position(|&t| t == token)
            .ok_or(TaskError::UnknownToken { task: self.task, token })
    }

    pub fn separator(&self) -> usize {
        self.tokens.len() - 2
    }

    pub fn end(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn encode(&self, s: &str) -> Result<Vec<usize>> {
        s.chars().map(|c| self.index(c)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        ids.iter()
            .map(|&i| self.tokens.get(i).copied().ok_or(TaskError::BadIndex(i)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskInstance {
    pub task: Task,
    pub input: String,
    /// Expected output, without the end token.
    pub target: String,
}

impl TaskInstance {
    pub fn len(&self) -> usize {
        self.input.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }

    /// `input | target $` as token ids, and a mask that is 1 on the target
    /// and the end token.
    pub fn build_sequence(&self) -> Result<(Vec<usize>, Vec<f64>)> {
        let vocab = self.task.vocab();
        let mut tokens = vocab.encode(&self.input)?;
        tokens.push(vocab.separator());
        let prefix = tokens.len();
        tokens.extend(vocab.encode(&self.target)?);
        tokens.push(vocab.end());
        let mask = (0..tokens.len()).map(|i| if i < prefix { 0.0 } else { 1.0 }).collect();
        Ok((tokens, mask))
    }

    pub fn to_record(&self) -> TaskRecord {
        TaskRecord {
            task: self.task,
            len: self.len(),
            input: self.input.clone(),
            target: self.target.clone(),
        }
    }
}

/// One line of a JSONL corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: Task,
    pub len: usize,
    pub input: String,
    pub target: String,
}

impl From<TaskRecord> for TaskInstance {
    fn from(r: TaskRecord) -> Self {
        TaskInstance {
            task: r.task,
            input: r.input,
            target: r.target,
        }
    }
}

/// Independent generator stream for one `(task, length, batch)` triple.
pub fn task_rng(seed: u64, task: Task, len: usize, batch: u64) -> ChaCha8Rng {
    let id = Task::ALL.iter().position(|&t| t == task).unwrap_or(0) as u64;
    ChaCha8Rng::seed_from_u64(stream_seed(seed, &[id, len as u64, batch]))
}

/// `count` instances of requested length `len` from the stream of `seed`.
pub fn generate_corpus(task: Task, len: usize, count: usize, seed: u64) -> Result<Vec<TaskInstance>> {
    let mut rng = task_rng(seed, task, len, 0);
    (0..count).map(|_| task.generate(len, &mut rng)).collect()
}

pub fn write_jsonl(mut w: impl Write, items: &[TaskInstance]) -> Result<()> {
    for item in items {
        let line = serde_json::to_string(&item.to_record()).map_err(|e| TaskError::Json { line: 0, source: e })?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_jsonl(r: impl BufRead) -> Result<Vec<TaskInstance>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TaskRecord = serde_json::from_str(&line).map_err(|e| TaskError::Json { line: i + 1, source: e })?;
        out.push(rec.into());
    }
    Ok(out)
}

pub fn save_jsonl(path: &Path, items: &[TaskInstance]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_jsonl(&mut f, items)?;
    f.flush()?;
    Ok(())
}

pub fn load_jsonl(path: &Path) -> Result<Vec<TaskInstance>> {
    read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_fixtures() {
        assert_eq!(Task::Parity.solve("aaabba"), "010001");
        assert_eq!(Task::Parity.solve("bbbb"), "1111");
        assert_eq!(Task::Cycle.solve("siidis"), "012122");
        assert_eq!(Task::Cycle.solve("ssss"), "0000");
        assert_eq!(Task::Reverse.solve("aabba"), "abbaa");
        assert_eq!(Task::Duplicate.solve("aabba"), "aabbaaabba");
        assert_eq!(Task::Modular.solve("1+2-4"), "+10+21-434");
        assert_eq!(Task::BinaryAdd.solve("01101+101"), "11011");
        assert_eq!(Task::BinaryAdd.solve("0+0"), "0");
    }

    #[test]
    fn modular_products_and_single_digit() {
        assert_eq!(Task::Modular.solve("3"), "+303");
        assert_eq!(Task::Modular.solve("1*2+4"), "+10+20+421");
        assert_eq!(Task::Modular.solve("1-2*3"), "+10-21-110");
    }

    #[test]
    fn sequence_layout() {
        let inst = TaskInstance {
            task: Task::Parity,
            input: "aaabba".into(),
            target: "010001".into(),
        };
        let (tokens, mask) = inst.build_sequence().unwrap();
        assert_eq!(Task::Parity.vocab().decode(&tokens).unwrap(), "aaabba|010001$");
        assert_eq!(&mask[..7], &[0.0; 7]);
        assert_eq!(mask.iter().sum::<f64>(), 7.0);
        let r = TaskInstance {
            task: Task::Reverse,
            input: "a".into(),
            target: "a".into(),
        };
        assert_eq!(Task::Reverse.vocab().decode(&r.build_sequence().unwrap().0).unwrap(), "a|a$");
    }

    #[test]
    fn lengths_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            Task::BinaryAdd.generate(2, &mut rng),
            Err(TaskError::TooShort { min: 3, .. })
        ));
        assert!(Task::Parity.generate(0, &mut rng).is_err());
        assert_eq!(Task::Modular.generate(4, &mut rng).unwrap().len(), 5);
        assert_eq!(Task::BinaryAdd.generate(3, &mut rng).unwrap().len(), 3);
        assert!("nope".parse::<Task>().is_err());
        assert_eq!("binary_add".parse::<Task>().unwrap(), Task::BinaryAdd);
    }

    #[test]
    fn jsonl_round_trip_and_determinism() {
        let items = generate_corpus(Task::Modular, 7, 5, 11).unwrap();
        assert_eq!(items, generate_corpus(Task::Modular, 7, 5, 11).unwrap());
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &items).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"task\":\"modular\",\"len\":7,"));
        assert_eq!(read_jsonl(&buf[..]).unwrap(), items);
    }
}
