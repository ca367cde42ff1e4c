//! Per-head traces of addressing weights and read/write vectors.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::eval::argmax_rows;
use super::{HarnessError, Result};
use crate::numeric::Tensor;
use crate::pntm::PntmModel;
use crate::tasks::Task;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InspectSummary {
    /// Tokens fed to the model, one per row of every trace.
    pub tokens: String,
    pub steps: usize,
    pub memory: usize,
    pub files: Vec<PathBuf>,
}

/// Rows of one head: `[T, width]`.
struct Trace {
    rows: Vec<Vec<f64>>,
}

impl Trace {
    fn new() -> Self {
        Trace { rows: Vec::new() }
    }

    /// Divides every entry by the largest magnitude in the trace.
    fn normalised(&self) -> Vec<Vec<f64>> {
        let scale = self.rows.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return self.rows.clone();
        }
        self.rows.iter().map(|r| r.iter().map(|v| v / scale).collect()).collect()
    }
}

fn write_csv(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Config(format!("csv: {e}"))
}

fn head_rows(t: &Tensor, head: usize) -> Vec<f64> {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    debug_assert!(head < h);
    t.data()[head * w..(head + 1) * w].to_vec()
}

/// Feeds `input |` and then greedy output until the end token or the cap,
/// recording the memory layer at every step. Addresses are written raw,
/// read and write vectors normalised per head.
pub fn inspect(
    model: &PntmModel,
    task: Task,
    input: &str,
    out_dir: &Path,
    tau: Option<f64>,
    memory: Option<usize>,
) -> Result<InspectSummary> {
    let vocab = task.vocab();
    if model.cfg.vocab != vocab.len() {
        return Err(HarnessError::VocabMismatch {
            task,
            model: model.cfg.vocab,
        });
    }
    let mut feed = vocab.encode(input)?;
    feed.push(vocab.separator());
    let len = input.chars().count();
    let m = memory.unwrap_or_else(|| crate::memory::train_memory_size(len).max(model.cfg.layer.m));
    let heads = model.cfg.layer.heads;
    let k = model.cfg.layer.n / heads;
    let cap = feed.len() + 4 * len + 16;

    let mut w_addr: Vec<Trace> = (0..heads).map(|_| Trace::new()).collect();
    let mut r_addr: Vec<Trace> = (0..heads).map(|_| Trace::new()).collect();
    let mut w_vec: Vec<Trace> = (0..heads).map(|_| Trace::new()).collect();
    let mut r_vec: Vec<Trace> = (0..heads).map(|_| Trace::new()).collect();
    let mut state = model.start(1, m);
    let mut seq = feed;
    let mut t = 0;
    while t < seq.len() && t < cap {
        let (logits, trace) = model.step_traced(&mut state, &[seq[t]], tau)?;
        for h in 0..heads {
            w_addr[h].rows.push(head_rows(&trace.write_addr, h));
            r_addr[h].rows.push(head_rows(&trace.read_addr, h));
            r_vec[h].rows.push(head_rows(&trace.reads, h));
            w_vec[h].rows.push(trace.content.data()[h * k..(h + 1) * k].to_vec());
        }
        t += 1;
        if t == seq.len() {
            let next = argmax_rows(&logits)[0];
            if next == vocab.end() {
                break;
            }
            seq.push(next);
        }
    }
    let fed = &seq[..t];

    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for h in 0..heads {
        for (kind, addr, vec) in [("write", &w_addr[h], &w_vec[h]), ("read", &r_addr[h], &r_vec[h])] {
            let a = out_dir.join(format!("{kind}_head{h}_addresses.csv"));
            write_csv(&a, &addr.rows)?;
            let v = out_dir.join(format!("{kind}_head{h}_vectors.csv"));
            write_csv(&v, &vec.normalised())?;
            files.push(a);
            files.push(v);
        }
    }
    let tokens = vocab.decode(fed)?;
    std::fs::write(out_dir.join("tokens.txt"), format!("{tokens}\n"))?;
    Ok(InspectSummary {
        steps: fed.len(),
        tokens,
        memory: m,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pntm::PntmModelConfig;

    #[test]
    fn shapes_and_determinism() {
        let model = PntmModel::new(PntmModelConfig::desk(6), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let s = inspect(&model, Task::Parity, "abba", &a, Some(0.01), None).unwrap();
        inspect(&model, Task::Parity, "abba", &b, Some(0.01), None).unwrap();
        assert_eq!(s.memory, 36);
        assert_eq!(s.files.len(), 8);
        assert!(s.tokens.starts_with("abba|"));
        for f in &s.files {
            let text = std::fs::read_to_string(f).unwrap();
            assert_eq!(text, std::fs::read_to_string(b.join(f.file_name().unwrap())).unwrap());
            let rows: Vec<&str> = text.lines().collect();
            assert_eq!(rows.len(), s.steps);
            let name = f.file_name().unwrap().to_str().unwrap();
            let width = if name.contains("addresses") {
                36
            } else if name.starts_with("write") {
                8
            } else {
                16
            };
            assert!(rows.iter().all(|r| r.split(',').count() == width), "{name}");
        }
    }
}
