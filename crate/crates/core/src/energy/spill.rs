//! Out-of-core sorted difference multiset: sorted runs spilled to disk as
//! little-endian f64, merged with bounded fan-in, then counted by streaming.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::slice::ParallelSliceMut;
use tempfile::TempDir;

use super::{tolerance_hit, WindowCount};

const MERGE_FAN_IN: usize = 16;
const IO_BUF: usize = 1 << 20;

struct RunReader {
    inner: BufReader<File>,
    remaining: u64,
}

impl RunReader {
    fn open(path: &Path) -> io::Result<Self> {
        let f = File::open(path)?;
        let remaining = f.metadata()?.len() / 8;
        Ok(RunReader { inner: BufReader::with_capacity(IO_BUF, f), remaining })
    }

    fn next_value(&mut self) -> io::Result<Option<f64>> {
        if self.remaining == 0 {
            return Ok(None);
        }
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        self.remaining -= 1;
        Ok(Some(f64::from_le_bytes(b)))
    }
}

fn write_run(path: &Path, values: &[f64]) -> io::Result<()> {
    let mut w = BufWriter::with_capacity(IO_BUF, File::create(path)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

struct HeapItem {
    value: f64,
    run: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    // reversed for a min-heap; run index breaks ties so the merge is deterministic
    fn cmp(&self, other: &Self) -> Ordering {
        other.value.total_cmp(&self.value).then_with(|| other.run.cmp(&self.run))
    }
}

fn merge_runs(inputs: &[PathBuf], out: &Path) -> io::Result<u64> {
    let mut readers = inputs.iter().map(|p| RunReader::open(p)).collect::<io::Result<Vec<_>>>()?;
    let mut heap = BinaryHeap::with_capacity(readers.len());
    for (run, r) in readers.iter_mut().enumerate() {
        if let Some(value) = r.next_value()? {
            heap.push(HeapItem { value, run });
        }
    }
    let mut w = BufWriter::with_capacity(IO_BUF, File::create(out)?);
    let mut n = 0u64;
    while let Some(HeapItem { value, run }) = heap.pop() {
        w.write_all(&value.to_le_bytes())?;
        n += 1;
        if let Some(value) = readers[run].next_value()? {
            heap.push(HeapItem { value, run });
        }
    }
    w.flush()?;
    Ok(n)
}

/// A sorted multiset of values stored in a single file inside a private
/// temporary directory (removed on drop).
pub struct SortedSpill {
    _dir: TempDir,
    path: PathBuf,
    len: u64,
    pub runs: usize,
}

impl SortedSpill {
    /// Spills `blocks` (each produced by the callback) as sorted runs, then
    /// merges them into one file.
    pub fn build<F>(block_count: usize, mut produce: F, tmp_root: Option<&Path>) -> io::Result<Self>
    where
        F: FnMut(usize) -> Vec<f64>,
    {
        let dir = match tmp_root {
            Some(p) => tempfile::Builder::new().prefix("paircorr-spill").tempdir_in(p)?,
            None => tempfile::Builder::new().prefix("paircorr-spill").tempdir()?,
        };
        let mut level: Vec<PathBuf> = Vec::with_capacity(block_count);
        let mut len = 0u64;
        for b in 0..block_count {
            let mut block = produce(b);
            if block.is_empty() {
                continue;
            }
            block.par_sort_unstable_by(f64::total_cmp);
            len += block.len() as u64;
            let p = dir.path().join(format!("run-0-{b}.bin"));
            write_run(&p, &block)?;
            level.push(p);
        }
        let runs = level.len();
        let mut depth = 0;
        while level.len() > 1 {
            depth += 1;
            let mut next = Vec::with_capacity(level.len().div_ceil(MERGE_FAN_IN));
            for (g, group) in level.chunks(MERGE_FAN_IN).enumerate() {
                let p = dir.path().join(format!("run-{depth}-{g}.bin"));
                merge_runs(group, &p)?;
                for old in group {
                    std::fs::remove_file(old)?;
                }
                next.push(p);
            }
            level = next;
        }
        let path = match level.pop() {
            Some(p) => p,
            None => {
                let p = dir.path().join("empty.bin");
                write_run(&p, &[])?;
                p
            }
        };
        Ok(SortedSpill { _dir: dir, path, len, runs })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Reads the whole multiset back (testing aid).
    pub fn read_all(&self) -> io::Result<Vec<f64>> {
        let mut r = RunReader::open(&self.path)?;
        let mut out = Vec::with_capacity(self.len as usize);
        while let Some(v) = r.next_value()? {
            out.push(v);
        }
        Ok(out)
    }

    /// Ordered pairs `(i, j)` with `|v_i - v_j| < gamma` for every gamma,
    /// in one streaming pass: a trailing reader plus one leading reader per
    /// gamma.
    pub fn count_within(&self, gammas: &[f64]) -> io::Result<Vec<WindowCount>> {
        let m = self.len;
        let mut trail = RunReader::open(&self.path)?;
        struct Lead {
            r: RunReader,
            pos: u64,
            cur: Option<f64>,
            off_diag: u64,
            ties: bool,
        }
        let mut leads = gammas
            .iter()
            .map(|_| {
                let mut r = RunReader::open(&self.path)?;
                let cur = r.next_value()?;
                Ok(Lead { r, pos: 0, cur, off_diag: 0, ties: false })
            })
            .collect::<io::Result<Vec<_>>>()?;
        let mut i = 0u64;
        while let Some(di) = trail.next_value()? {
            for (lead, &g) in leads.iter_mut().zip(gammas) {
                while let Some(v) = lead.cur {
                    if lead.pos <= i || tolerance_hit(v - di, g) {
                        lead.pos += 1;
                        lead.cur = lead.r.next_value()?;
                    } else {
                        break;
                    }
                }
                lead.off_diag += lead.pos - i - 1;
                if let Some(v) = lead.cur {
                    if v - di == g {
                        lead.ties = true;
                    }
                }
            }
            i += 1;
        }
        Ok(leads
            .into_iter()
            .map(|l| WindowCount { total: m + 2 * l.off_diag, boundary_tie: l.ties })
            .collect())
    }
}
