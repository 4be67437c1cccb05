//! Grouped observations and the continuous samples derived from them.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts recorded on a mesh `t_0 < t_1 < ... < t_K`; bin `k` is `[t_{k-1}, t_k)`.
///
/// Bins may have unequal widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedSample {
    edges: Vec<f64>,
    counts: Vec<u64>,
    total: usize,
}

impl GroupedSample {
    pub fn new(edges: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidGrouped("need at least two edges".into()));
        }
        if counts.len() != edges.len() - 1 {
            return Err(Error::InvalidGrouped(format!(
                "{} edges require {} counts, got {}",
                edges.len(),
                edges.len() - 1,
                counts.len()
            )));
        }
        if let Some(bad) = edges.iter().find(|e| !e.is_finite()) {
            return Err(Error::InvalidGrouped(format!("non-finite edge {bad}")));
        }
        if let Some(k) = edges.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrouped(format!(
                "edges must be strictly increasing, but t_{} = {} >= t_{} = {}",
                k,
                edges[k],
                k + 1,
                edges[k + 1]
            )));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidGrouped("all counts are zero".into()));
        }
        Ok(Self {
            edges,
            counts,
            total: total as usize,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Total number of observations.
    pub fn n(&self) -> usize {
        self.total
    }

    pub fn num_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Every observation placed at its bin midpoint. Values tie exactly.
    pub fn expand(&self) -> ContinuousSample {
        let values = self
            .midpoints()
            .into_iter()
            .zip(&self.counts)
            .flat_map(|(v, &c)| std::iter::repeat_n(v, c as usize))
            .collect();
        ContinuousSample::from_parts(values, Provenance::Midpoints)
    }

    /// Spread each observation uniformly over its bin.
    pub fn jitter<R: Rng + ?Sized>(&self, rng: &mut R) -> ContinuousSample {
        let mut values = Vec::with_capacity(self.total);
        for (w, &c) in self.edges.windows(2).zip(&self.counts) {
            let (lo, hi) = (w[0], w[1]);
            let width = hi - lo;
            for _ in 0..c {
                let u: f64 = rng.random();
                let x = lo + width * u;
                values.push(if x < hi { x } else { hi.next_down() });
            }
        }
        ContinuousSample::from_parts(values, Provenance::Jittered)
    }

    /// Bin index of `x` under the left-closed, right-open convention.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if !(x >= self.edges[0] && x < self.edges[self.edges.len() - 1]) {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= x) - 1)
    }

    /// Counts obtained by binning `values` on this sample's mesh.
    pub fn rebin(&self, values: &[f64]) -> Result<Vec<u64>> {
        let mut counts = vec![0u64; self.counts.len()];
        for &x in values {
            let k = self.bin_of(x).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "value {x} lies outside the mesh [{}, {})",
                    self.edges[0],
                    self.edges[self.edges.len() - 1]
                ))
            })?;
            counts[k] += 1;
        }
        Ok(counts)
    }

    /// Multiply every edge by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale factor must be positive, got {factor}"
            )));
        }
        Self::new(
            self.edges.iter().map(|e| e * factor).collect(),
            self.counts.clone(),
        )
    }

    /// Write as `lower,upper,count` rows with a header.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lower", "upper", "count"])?;
        for (e, c) in self.edges.windows(2).zip(&self.counts) {
            w.write_record([e[0].to_string(), e[1].to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Where a continuous sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Exact measurements, e.g. a simulated sample before binning.
    Observed,
    /// Bin midpoints repeated by count.
    Midpoints,
    Jittered,
    /// Closed under negation.
    Symmetrized,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSample {
    values: Vec<f64>,
    provenance: Provenance,
}

impl ContinuousSample {
    pub fn new(values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value {bad}")));
        }
        Ok(Self { values, provenance })
    }

    /// Plain observations; fails on non-finite values.
    pub fn observed(values: Vec<f64>) -> Result<Self> {
        Self::new(values, Provenance::Observed)
    }

    pub(crate) fn from_parts(values: Vec<f64>, provenance: Provenance) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values, provenance }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Sample standard deviation with the `n - 1` divisor.
    pub fn std_dev(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let ss: f64 = self.values.iter().map(|v| (v - m) * (v - m)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    /// Reflect about zero: each `x` becomes the pair `x, -x`.
    pub fn symmetrize(&self) -> Result<ContinuousSample> {
        if let Some(&neg) = self.values.iter().find(|&&v| v < 0.0) {
            return Err(Error::NegativeDistance(neg));
        }
        let values = self.values.iter().flat_map(|&x| [x, -x]).collect();
        Ok(ContinuousSample::from_parts(
            values,
            Provenance::Symmetrized,
        ))
    }
}

fn parse_field<T: std::str::FromStr>(field: &str, what: &str, line: usize) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} from {:?}", field.trim()),
    })
}

/// Read `lower,upper,count` rows. A header row is optional. Consecutive rows
/// must share an edge.
pub fn read_grouped_csv<R: Read>(input: R) -> Result<GroupedSample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);

    let mut edges: Vec<f64> = Vec::new();
    let mut counts = Vec::new();
    let mut first = true;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!(
                    "expected 3 fields (lower,upper,count), found {}",
                    record.len()
                ),
            });
        }
        if first {
            first = false;
            if record[0].parse::<f64>().is_err() && record[1].parse::<f64>().is_err() {
                continue;
            }
        }
        let lower: f64 = parse_field(&record[0], "lower edge", line)?;
        let upper: f64 = parse_field(&record[1], "upper edge", line)?;
        let count: i64 = parse_field(&record[2], "count", line)?;
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::Parse {
                line,
                message: "edges must be finite".into(),
            });
        }
        if lower >= upper {
            return Err(Error::Parse {
                line,
                message: format!("lower edge {lower} is not below upper edge {upper}"),
            });
        }
        if count < 0 {
            return Err(Error::Parse {
                line,
                message: format!("negative count {count}"),
            });
        }
        match edges.last() {
            None => edges.push(lower),
            Some(&prev) if prev != lower => {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "bin starts at {lower} but the previous bin ended at {prev}; bins must be contiguous and increasing"
                    ),
                })
            }
            Some(_) => {}
        }
        edges.push(upper);
        counts.push(count as u64);
    }
    if counts.is_empty() {
        return Err(Error::EmptyInput);
    }
    GroupedSample::new(edges, counts)
}

pub fn read_grouped_csv_path(path: impl AsRef<Path>) -> Result<GroupedSample> {
    let file = std::fs::File::open(path)?;
    read_grouped_csv(std::io::BufReader::new(file))
}

/// The wooden-stake survey: 68 detections from a 1000 m transect, recorded in
/// ten unequal distance classes (metres). The first class is assumed to start
/// at the transect line, i.e. at 0, since only right end points were published.
pub fn stake_data() -> GroupedSample {
    read_grouped_csv(STAKE_CSV.as_bytes()).expect("bundled stake data is valid")
}

/// Bundled stake dataset in the grouped CSV format.
pub const STAKE_CSV: &str = include_str!("../data/stake.csv");

/// Transect length of the stake survey, metres.
pub const STAKE_LINE_LENGTH: f64 = 1000.0;

/// Known stake density, per hectare.
pub const STAKE_TRUE_DENSITY_PER_HA: f64 = 37.5;
