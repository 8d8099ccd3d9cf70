//! Step records persisted as three CSV tables joined on `iteration`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::dqn::{BatchElement, StepRecord, TrackedQ};
use crate::error::{io_err, Error, Result};
use crate::mdp::{ActionId, StateId};

pub const STEPS_FILE: &str = "steps.csv";
pub const BATCH_FILE: &str = "batch.csv";
pub const TRACKED_FILE: &str = "tracked.csv";

const STEPS_HEADER: &str = "iteration,state,action,reward,next_state,epsilon,synced,reset";
const BATCH_HEADER: &str = "iteration,state,action,next_state,reward,delta,entry_step,visits,at_reset";
const TRACKED_HEADER: &str = "iteration,state,action,before,after";

/// Appends records to the three tables of a run directory.
pub struct RecordWriter {
    dir: PathBuf,
    steps: BufWriter<File>,
    batch: BufWriter<File>,
    tracked: BufWriter<File>,
}

impl RecordWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        let open = |name: &str, header: &str| -> Result<BufWriter<File>> {
            let path = dir.join(name);
            let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
            writeln!(w, "{header}").map_err(io_err(&path))?;
            Ok(w)
        };
        Ok(RecordWriter {
            dir: dir.to_path_buf(),
            steps: open(STEPS_FILE, STEPS_HEADER)?,
            batch: open(BATCH_FILE, BATCH_HEADER)?,
            tracked: open(TRACKED_FILE, TRACKED_HEADER)?,
        })
    }

    pub fn write(&mut self, r: &StepRecord) -> Result<()> {
        let it = r.iteration;
        writeln!(
            self.steps,
            "{it},{},{},{},{},{},{},{}",
            r.state.0, r.action.0, r.reward, r.next_state.0, r.epsilon, r.synced as u8, r.reset as u8
        )
        .map_err(io_err(self.dir.join(STEPS_FILE)))?;
        for b in &r.batch {
            writeln!(
                self.batch,
                "{it},{},{},{},{},{},{},{},{}",
                b.state.0, b.action.0, b.next_state.0, b.reward, b.delta, b.entry_step, b.visits, b.at_reset as u8
            )
            .map_err(io_err(self.dir.join(BATCH_FILE)))?;
        }
        for t in &r.tracked {
            writeln!(self.tracked, "{it},{},{},{},{}", t.state.0, t.action.0, t.before, t.after)
                .map_err(io_err(self.dir.join(TRACKED_FILE)))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.steps.flush().map_err(io_err(self.dir.join(STEPS_FILE)))?;
        self.batch.flush().map_err(io_err(self.dir.join(BATCH_FILE)))?;
        self.tracked.flush().map_err(io_err(self.dir.join(TRACKED_FILE)))
    }
}

fn rows(path: &Path, header: &str) -> Result<Vec<Vec<String>>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines.next().transpose().map_err(io_err(path))?;
    if first.as_deref() != Some(header) {
        return Err(Error::Parse { path: path.to_path_buf(), reason: format!("expected header `{header}`") });
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line.map_err(io_err(path))?;
        if !line.is_empty() {
            out.push(line.split(',').map(str::to_string).collect());
        }
    }
    Ok(out)
}

struct Fields<'a> {
    path: &'a Path,
    row: &'a [String],
}

impl Fields<'_> {
    fn get<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        self.row.get(i).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Parse {
            path: self.path.to_path_buf(),
            reason: format!("bad field {i} in `{}`", self.row.join(",")),
        })
    }

    fn flag(&self, i: usize) -> Result<bool> {
        Ok(self.get::<u8>(i)? != 0)
    }
}

/// Records with `lo <= iteration <= hi`, in iteration order.
pub fn read_records(dir: &Path, window: Option<(u64, u64)>) -> Result<Vec<StepRecord>> {
    let keep = |it: u64| window.map_or(true, |(lo, hi)| it >= lo && it <= hi);
    let mut records: Vec<StepRecord> = Vec::new();
    let path = dir.join(STEPS_FILE);
    for row in rows(&path, STEPS_HEADER)? {
        let f = Fields { path: &path, row: &row };
        let iteration = f.get(0)?;
        if !keep(iteration) {
            continue;
        }
        records.push(StepRecord {
            iteration,
            state: StateId(f.get(1)?),
            action: ActionId(f.get(2)?),
            reward: f.get(3)?,
            next_state: StateId(f.get(4)?),
            epsilon: f.get(5)?,
            synced: f.flag(6)?,
            reset: f.flag(7)?,
            batch: Vec::new(),
            tracked: Vec::new(),
        });
    }
    let find = |records: &mut [StepRecord], it: u64, path: &Path| -> Result<usize> {
        records.binary_search_by_key(&it, |r| r.iteration).map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            reason: format!("iteration {it} has no step row"),
        })
    };
    let path = dir.join(BATCH_FILE);
    for row in rows(&path, BATCH_HEADER)? {
        let f = Fields { path: &path, row: &row };
        let it = f.get(0)?;
        if !keep(it) {
            continue;
        }
        let i = find(&mut records, it, &path)?;
        records[i].batch.push(BatchElement {
            state: StateId(f.get(1)?),
            action: ActionId(f.get(2)?),
            next_state: StateId(f.get(3)?),
            reward: f.get(4)?,
            delta: f.get(5)?,
            entry_step: f.get(6)?,
            visits: f.get(7)?,
            at_reset: f.flag(8)?,
        });
    }
    let path = dir.join(TRACKED_FILE);
    for row in rows(&path, TRACKED_HEADER)? {
        let f = Fields { path: &path, row: &row };
        let it = f.get(0)?;
        if !keep(it) {
            continue;
        }
        let i = find(&mut records, it, &path)?;
        records[i].tracked.push(TrackedQ {
            state: StateId(f.get(1)?),
            action: ActionId(f.get(2)?),
            before: f.get(3)?,
            after: f.get(4)?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let rec = |it: u64, n: usize| StepRecord {
            iteration: it,
            state: StateId(3),
            action: ActionId(1),
            reward: -4.0,
            next_state: StateId(7),
            epsilon: 0.25,
            synced: it % 2 == 0,
            reset: false,
            batch: (0..n)
                .map(|k| BatchElement {
                    state: StateId(k),
                    action: ActionId(0),
                    next_state: StateId(k + 1),
                    reward: -1.5,
                    delta: 0.1 * k as f64 - 0.3,
                    entry_step: it - 1,
                    visits: k as u64 + 1,
                    at_reset: k == 1,
                })
                .collect(),
            tracked: vec![TrackedQ { state: StateId(8), action: ActionId(0), before: 1.0 / 3.0, after: 0.3 }],
        };
        let recs = vec![rec(10, 0), rec(11, 3), rec(20, 2)];
        let dir = tempfile::tempdir().unwrap();
        let mut w = RecordWriter::create(dir.path()).unwrap();
        for r in &recs {
            w.write(r).unwrap();
        }
        w.finish().unwrap();
        assert_eq!(read_records(dir.path(), None).unwrap(), recs);
        assert_eq!(read_records(dir.path(), Some((11, 19))).unwrap(), vec![recs[1].clone()]);
        assert!(read_records(dir.path(), Some((30, 40))).unwrap().is_empty());
    }
}
