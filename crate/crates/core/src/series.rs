//! Scalar time series, higher-order automoments and comoments.
//!
//! An automoment `μ_z^{r1,…,rk}(h2,…,hk) = E[z(t)^{r1} z(t+h2)^{r2} ⋯ z(t+hk)^{rk}]`
//! is addressed by a [`MomentSpec`]. Specs that differ only by a zero lag,
//! repeated lags, factor order or a common time shift describe the same
//! quantity for a stationary series; [`MomentSpec::canonical`] and
//! [`MomentSpec::stationary`] map them to a single representative so every
//! provider answers them identically.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of overlapping positions required on top of the lag span.
pub const MIN_OVERLAP: usize = 30;

/// Largest total order handled by the Gaussian (Isserlis) moment oracle.
pub const MAX_GAUSSIAN_ORDER: u32 = 8;

// ---------------------------------------------------------------------------
// TimeSeries
// ---------------------------------------------------------------------------

/// A finite realization of a scalar process. `origin` is the time label of
/// the first sample; series are aligned on these labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    origin: i64,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, origin: i64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSeries("series must contain at least one sample".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite value at index {i}")));
        }
        Ok(Self { values, origin })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    /// One past the last time label.
    pub fn end(&self) -> i64 {
        self.origin + self.values.len() as i64
    }

    pub fn get(&self, t: i64) -> Option<f64> {
        if t < self.origin || t >= self.end() {
            None
        } else {
            Some(self.values[(t - self.origin) as usize])
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population variance (denominator `n`).
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| f(v)).collect(), self.origin)
    }

    /// Samples with time labels in `[from, to)`, clipped to the available range.
    pub fn window(&self, from: i64, to: i64) -> Result<Self> {
        let lo = from.max(self.origin);
        let hi = to.min(self.end());
        if hi <= lo {
            return Err(Error::InsufficientData(format!(
                "window [{from}, {to}) does not intersect [{}, {})",
                self.origin,
                self.end()
            )));
        }
        let a = (lo - self.origin) as usize;
        let b = (hi - self.origin) as usize;
        Self::new(self.values[a..b].to_vec(), lo)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv write failed: {e}"));
        w.write_record(["value"]).map_err(io)?;
        for v in &self.values {
            w.write_record([format!("{v:e}")]).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::InvalidArgument(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, origin: i64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r
            .headers()
            .map_err(|e| Error::InvalidSeries(format!("csv header: {e}")))?
            .clone();
        if headers.len() != 1 || &headers[0] != "value" {
            return Err(Error::InvalidSeries("expected a single column named `value`".into()));
        }
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidSeries(format!("csv row {i}: {e}")))?;
            let v: f64 = rec[0]
                .trim()
                .parse()
                .map_err(|e| Error::InvalidSeries(format!("csv row {i}: {e}")))?;
            values.push(v);
        }
        Self::new(values, origin)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        Self::read_csv(std::io::BufReader::new(f), 0)
    }
}

/// Overlap of two series on their time labels.
pub(crate) fn overlap(a: &TimeSeries, b: &TimeSeries) -> Option<(i64, i64)> {
    let lo = a.origin().max(b.origin());
    let hi = a.end().min(b.end());
    (hi > lo).then_some((lo, hi))
}

// ---------------------------------------------------------------------------
// MomentSpec
// ---------------------------------------------------------------------------

/// Powers `(r1,…,rk)` and lags `(h2,…,hk)` of an automoment; the first
/// factor sits at lag 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MomentSpec {
    powers: Vec<u32>,
    lags: Vec<i64>,
}

impl MomentSpec {
    pub fn new(powers: Vec<u32>, lags: Vec<i64>) -> Result<Self> {
        if powers.is_empty() {
            return Err(Error::InvalidArgument("moment spec needs at least one power".into()));
        }
        if lags.len() + 1 != powers.len() {
            return Err(Error::InvalidArgument(format!(
                "{} powers need {} lags, got {}",
                powers.len(),
                powers.len() - 1,
                lags.len()
            )));
        }
        if powers.contains(&0) {
            return Err(Error::InvalidArgument("powers must be positive".into()));
        }
        Ok(Self { powers, lags })
    }

    /// `μ_z^r`
    pub fn single(r: u32) -> Self {
        Self::new(vec![r], vec![]).expect("positive power")
    }

    /// `μ_z^{r,s}(h)`
    pub fn pair(r: u32, s: u32, h: i64) -> Self {
        Self::new(vec![r, s], vec![h]).expect("positive powers")
    }

    pub fn powers(&self) -> &[u32] {
        &self.powers
    }

    pub fn lags(&self) -> &[i64] {
        &self.lags
    }

    pub fn order(&self) -> u32 {
        self.powers.iter().sum()
    }

    /// `(time offset, power)` for every factor, first factor at 0.
    pub fn factors(&self) -> Vec<(i64, u32)> {
        std::iter::once(0)
            .chain(self.lags.iter().copied())
            .zip(self.powers.iter().copied())
            .collect()
    }

    /// Apply the reduction rules: zero lags fold into the first power,
    /// repeated lags merge by adding powers, remaining lags sorted ascending.
    pub fn canonical(&self) -> Self {
        let mut merged: BTreeMap<i64, u32> = BTreeMap::new();
        for (lag, p) in self.factors() {
            *merged.entry(lag).or_insert(0) += p;
        }
        let r1 = merged.remove(&0).expect("first factor sits at lag zero");
        let mut powers = vec![r1];
        let mut lags = Vec::with_capacity(merged.len());
        for (lag, p) in merged {
            lags.push(lag);
            powers.push(p);
        }
        Self { powers, lags }
    }

    /// Canonical form shifted in time so the earliest factor sits at lag 0.
    /// Equal for every spec describing the same moment of a stationary series.
    pub fn stationary(&self) -> Self {
        let c = self.canonical();
        let min = c.lags.iter().copied().min().unwrap_or(0).min(0);
        if min == 0 {
            return c;
        }
        let mut factors: Vec<(i64, u32)> =
            c.factors().into_iter().map(|(l, p)| (l - min, p)).collect();
        factors.sort_unstable();
        Self {
            powers: factors.iter().map(|f| f.1).collect(),
            lags: factors[1..].iter().map(|f| f.0).collect(),
        }
    }

    /// Largest time distance between factors.
    pub fn span(&self) -> i64 {
        let lo = self.lags.iter().copied().min().unwrap_or(0).min(0);
        let hi = self.lags.iter().copied().max().unwrap_or(0).max(0);
        hi - lo
    }

    /// Split a stationary spec into groups whose consecutive factors are at
    /// most `horizon` apart.
    fn clusters(&self, horizon: i64) -> Vec<MomentSpec> {
        let factors = self.stationary().factors();
        let mut groups: Vec<Vec<(i64, u32)>> = vec![vec![factors[0]]];
        for w in factors.windows(2) {
            if w[1].0 - w[0].0 > horizon {
                groups.push(Vec::new());
            }
            groups.last_mut().unwrap().push(w[1]);
        }
        groups
            .into_iter()
            .map(|g| {
                let t0 = g[0].0;
                Self {
                    powers: g.iter().map(|f| f.1).collect(),
                    lags: g[1..].iter().map(|f| f.0 - t0).collect(),
                }
            })
            .collect()
    }

    fn encode_list<T: fmt::Display>(v: &[T]) -> String {
        v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
    }
}

impl fmt::Display for MomentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mu^{{{}}}({})",
            Self::encode_list(&self.powers),
            Self::encode_list(&self.lags)
        )
    }
}

/// Free-function form of [`MomentSpec::canonical`].
pub fn canonicalize_moment_spec(spec: &MomentSpec) -> MomentSpec {
    spec.canonical()
}

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

/// Supplier of automoments of a stationary input.
pub trait AutomomentProvider: Send + Sync {
    fn moment(&self, spec: &MomentSpec) -> Result<f64>;

    /// Lag beyond which the provider treats the series as independent, so
    /// moments whose factors split into groups further apart factorize.
    fn horizon(&self) -> Option<usize> {
        None
    }

    /// `[μ_z^1, …, μ_z^order]`
    fn marginal_moments(&self, order: u32) -> Result<Vec<f64>> {
        (1..=order).map(|r| self.moment(&MomentSpec::single(r))).collect()
    }

    /// `M[r-1][s-1] = μ_z^{r,s}(lag)` for `r, s = 1..=order`.
    fn pair_moments(&self, order: u32, lag: i64) -> Result<DMatrix<f64>> {
        let n = order as usize;
        let mut m = DMatrix::zeros(n, n);
        for r in 1..=order {
            for s in 1..=order {
                m[(r as usize - 1, s as usize - 1)] = self.moment(&MomentSpec::pair(r, s, lag))?;
            }
        }
        Ok(m)
    }
}

fn factorized<F>(spec: &MomentSpec, horizon: Option<usize>, mut cluster_value: F) -> Result<f64>
where
    F: FnMut(&MomentSpec) -> Result<f64>,
{
    let stat = spec.stationary();
    match horizon {
        Some(h) if stat.span() > h as i64 => {
            let mut v = 1.0;
            for c in stat.clusters(h as i64) {
                v *= cluster_value(&c)?;
            }
            Ok(v)
        }
        _ => cluster_value(&stat),
    }
}

/// Sample average of `Π z(t+τ_i)^{p_i}` over every `t` with all factors in
/// range, for a spec already in stationary form.
fn sample_moment(values: &[f64], spec: &MomentSpec) -> Result<(f64, usize)> {
    let span = spec.span() as usize;
    if values.len() <= span {
        return Err(Error::InsufficientData(format!(
            "{spec} needs more than {span} samples, series has {}",
            values.len()
        )));
    }
    let count = values.len() - span;
    let factors = spec.factors();
    let mut acc = 0.0;
    match factors.as_slice() {
        [(_, p)] => {
            let p = *p as i32;
            for &v in values {
                acc += v.powi(p);
            }
        }
        [(_, p), (l, q)] => {
            let (p, q, l) = (*p as i32, *q as i32, *l as usize);
            for t in 0..count {
                acc += values[t].powi(p) * values[t + l].powi(q);
            }
        }
        _ => {
            for t in 0..count {
                let mut prod = 1.0;
                for &(l, p) in &factors {
                    prod *= values[t + l as usize].powi(p as i32);
                }
                acc += prod;
            }
        }
    }
    Ok((acc / count as f64, count))
}

/// A materialized table of sample automoments.
#[derive(Debug, Clone, PartialEq)]
pub struct AutomomentTable {
    entries: BTreeMap<MomentSpec, MomentEntry>,
    max_order: u32,
    max_abs_lag: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEntry {
    pub value: f64,
    pub count: usize,
}

impl AutomomentTable {
    pub fn empty(max_order: u32, max_abs_lag: usize) -> Self {
        Self { entries: BTreeMap::new(), max_order, max_abs_lag }
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn max_abs_lag(&self) -> usize {
        self.max_abs_lag
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&MomentSpec, &MomentEntry)> {
        self.entries.iter()
    }

    pub fn get(&self, spec: &MomentSpec) -> Option<MomentEntry> {
        self.entries.get(&spec.stationary()).copied()
    }

    pub fn insert(&mut self, spec: &MomentSpec, entry: MomentEntry) -> Result<()> {
        if !entry.value.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite value for {spec}")));
        }
        self.entries.insert(spec.stationary(), entry);
        Ok(())
    }

    /// Estimate and store additional specs from `series`.
    pub fn extend_from(&mut self, series: &TimeSeries, specs: impl IntoIterator<Item = MomentSpec>) -> Result<()> {
        for spec in specs {
            let stat = spec.stationary();
            if self.entries.contains_key(&stat) {
                continue;
            }
            let (value, count) = sample_moment(series.values(), &stat)?;
            self.insert(&stat, MomentEntry { value, count })?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(b';').from_writer(writer);
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv write failed: {e}"));
        w.write_record(["powers", "lags", "value", "count"]).map_err(io)?;
        for (spec, e) in &self.entries {
            w.write_record([
                MomentSpec::encode_list(&spec.powers),
                MomentSpec::encode_list(&spec.lags),
                format!("{:e}", e.value),
                e.count.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::InvalidArgument(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().delimiter(b';').from_reader(reader);
        let bad = |i: usize, m: String| Error::InvalidArgument(format!("moment csv row {i}: {m}"));
        let mut table = Self::empty(0, 0);
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(i, e.to_string()))?;
            if rec.len() != 4 {
                return Err(bad(i, "expected 4 fields".into()));
            }
            let parse_list = |s: &str| -> std::result::Result<Vec<i64>, String> {
                if s.trim().is_empty() {
                    return Ok(vec![]);
                }
                s.split(',').map(|x| x.trim().parse::<i64>().map_err(|e| e.to_string())).collect()
            };
            let powers: Vec<u32> = parse_list(&rec[0])
                .map_err(|e| bad(i, e))?
                .into_iter()
                .map(|p| u32::try_from(p).map_err(|e| bad(i, e.to_string())))
                .collect::<Result<_>>()?;
            let lags = parse_list(&rec[1]).map_err(|e| bad(i, e))?;
            let value: f64 = rec[2].trim().parse().map_err(|e: std::num::ParseFloatError| bad(i, e.to_string()))?;
            let count: usize = rec[3].trim().parse().map_err(|e: std::num::ParseIntError| bad(i, e.to_string()))?;
            let spec = MomentSpec::new(powers, lags)?;
            table.max_order = table.max_order.max(spec.order());
            table.max_abs_lag = table.max_abs_lag.max(spec.span() as usize);
            table.insert(&spec, MomentEntry { value, count })?;
        }
        Ok(table)
    }
}

impl AutomomentProvider for AutomomentTable {
    fn horizon(&self) -> Option<usize> {
        Some(self.max_abs_lag)
    }

    /// Specs spanning more than `max_abs_lag` factorize into independent
    /// clusters, so covariances beyond the lag horizon are exactly zero.
    fn moment(&self, spec: &MomentSpec) -> Result<f64> {
        factorized(spec, Some(self.max_abs_lag), |c| {
            self.entries
                .get(c)
                .map(|e| e.value)
                .ok_or_else(|| Error::MissingMoment(c.to_string()))
        })
    }
}

/// Estimate the 1- and 2-factor automoment families up to `max_order`
/// and `max_abs_lag`, plus `μ^{1,1,s}(h1,h2)` and `μ^{1,1,1,1}(h1,h2,h3)`
/// with lags inside the bound when the order allows.
pub fn estimate_automoments(series: &TimeSeries, max_order: u32, max_abs_lag: usize) -> Result<AutomomentTable> {
    if series.len() <= max_abs_lag + MIN_OVERLAP {
        return Err(Error::InsufficientData(format!(
            "series of length {} is too short for lag {} (need > {})",
            series.len(),
            max_abs_lag,
            max_abs_lag + MIN_OVERLAP
        )));
    }
    let h = max_abs_lag as i64;
    let mut specs = Vec::new();
    for r in 1..=max_order {
        specs.push(MomentSpec::single(r));
    }
    for lag in 1..=h {
        for r in 1..max_order {
            for s in 1..=(max_order - r) {
                specs.push(MomentSpec::pair(r, s, lag));
            }
        }
    }
    if max_order >= 3 {
        for a in 1..=h {
            for b in (a + 1)..=h {
                for s in 1..=(max_order - 2) {
                    for pos in 0..3 {
                        let mut p = vec![1, 1, 1];
                        p[pos] = s;
                        specs.push(MomentSpec::new(p, vec![a, b])?);
                    }
                }
            }
        }
    }
    if max_order >= 4 {
        for a in 1..=h {
            for b in (a + 1)..=h {
                for c in (b + 1)..=h {
                    specs.push(MomentSpec::new(vec![1, 1, 1, 1], vec![a, b, c])?);
                }
            }
        }
    }
    let mut table = AutomomentTable::empty(max_order, max_abs_lag);
    table.extend_from(series, specs)?;
    Ok(table)
}

/// Lazily evaluated sample automoments with memoization.
///
/// Cheaper than [`AutomomentTable`] when only the specs a particular task
/// touches are needed. Beyond `horizon` the moments factorize.
pub struct SampleMoments {
    values: Arc<Vec<f64>>,
    horizon: usize,
    cache: Mutex<HashMap<MomentSpec, f64>>,
    powers: Mutex<Vec<Arc<Vec<f64>>>>,
}

impl SampleMoments {
    pub fn new(series: &TimeSeries, horizon: usize) -> Result<Self> {
        if series.len() <= horizon + MIN_OVERLAP {
            return Err(Error::InsufficientData(format!(
                "series of length {} is too short for horizon {horizon}",
                series.len()
            )));
        }
        Ok(Self {
            values: Arc::new(series.values().to_vec()),
            horizon,
            cache: Mutex::new(HashMap::new()),
            powers: Mutex::new(Vec::new()),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `z^p` elementwise, cached.
    fn power_series(&self, p: u32) -> Arc<Vec<f64>> {
        let mut cache = self.powers.lock().expect("power cache poisoned");
        while cache.len() < p as usize {
            let next: Vec<f64> = match cache.last() {
                None => self.values.as_ref().clone(),
                Some(prev) => prev.iter().zip(self.values.iter()).map(|(a, b)| a * b).collect(),
            };
            cache.push(Arc::new(next));
        }
        Arc::clone(&cache[p as usize - 1])
    }

    fn cluster(&self, spec: &MomentSpec) -> Result<f64> {
        if let Some(v) = self.cache.lock().expect("moment cache poisoned").get(spec) {
            return Ok(*v);
        }
        let (v, _) = sample_moment(&self.values, spec)?;
        self.cache.lock().expect("moment cache poisoned").insert(spec.clone(), v);
        Ok(v)
    }
}

impl AutomomentProvider for SampleMoments {
    fn horizon(&self) -> Option<usize> {
        Some(self.horizon)
    }

    fn moment(&self, spec: &MomentSpec) -> Result<f64> {
        factorized(spec, Some(self.horizon), |c| self.cluster(c))
    }

    fn pair_moments(&self, order: u32, lag: i64) -> Result<DMatrix<f64>> {
        let n = order as usize;
        let h = lag.unsigned_abs() as usize;
        if h == 0 || h > self.horizon {
            let mut m = DMatrix::zeros(n, n);
            for r in 1..=order {
                for s in 1..=order {
                    m[(r as usize - 1, s as usize - 1)] = self.moment(&MomentSpec::pair(r, s, lag))?;
                }
            }
            return Ok(m);
        }
        let count = self.values.len() - h;
        let pows: Vec<Arc<Vec<f64>>> = (1..=order).map(|p| self.power_series(p)).collect();
        // m[r][s] = mean z(t)^r z(t+h)^s; a negative lag swaps the roles.
        let mut m = DMatrix::zeros(n, n);
        for r in 0..n {
            for s in 0..n {
                let a = &pows[r][..count];
                let b = &pows[s][h..];
                let v = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / count as f64;
                m[(r, s)] = v;
            }
        }
        Ok(if lag < 0 { m.transpose() } else { m })
    }
}

// ---------------------------------------------------------------------------
// Analytic providers
// ---------------------------------------------------------------------------

/// Moments of an IID sequence: products over distinct times factorize.
#[derive(Debug, Clone, PartialEq)]
pub struct IidMoments {
    /// `raw[r] = E[z^r]`, `raw[0] = 1`.
    raw: Vec<f64>,
}

impl IidMoments {
    pub fn from_raw(mut raw: Vec<f64>) -> Self {
        if raw.is_empty() || raw[0] != 1.0 {
            raw.insert(0, 1.0);
        }
        Self { raw }
    }

    /// `N(0, σ²)` marginals up to `max_order`.
    pub fn gaussian(sigma2: f64, max_order: u32) -> Self {
        let raw = (0..=max_order)
            .map(|r| {
                if r % 2 == 1 {
                    0.0
                } else {
                    let dfact: f64 = (1..r).step_by(2).map(f64::from).product();
                    dfact * sigma2.powi(r as i32 / 2)
                }
            })
            .collect();
        Self { raw }
    }

    /// Uniform on `[-a, a]`.
    pub fn uniform(half_width: f64, max_order: u32) -> Self {
        let raw = (0..=max_order)
            .map(|r| if r % 2 == 1 { 0.0 } else { half_width.powi(r as i32) / f64::from(r + 1) })
            .collect();
        Self { raw }
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }
}

impl AutomomentProvider for IidMoments {
    fn horizon(&self) -> Option<usize> {
        Some(0)
    }

    fn moment(&self, spec: &MomentSpec) -> Result<f64> {
        let c = spec.canonical();
        let mut v = 1.0;
        for &p in c.powers() {
            v *= *self.raw.get(p as usize).ok_or(Error::OrderTooHigh {
                order: p,
                max: self.raw.len() as u32 - 1,
            })?;
        }
        Ok(v)
    }
}

/// Exact automoments of a stationary Gaussian process with mean `mean` and
/// autocovariance `acvf`.
///
/// Each factor is written as `mean + centered part`; centered products are
/// evaluated with Isserlis' theorem (sum over perfect matchings of products
/// of covariances). Total order is capped at [`MAX_GAUSSIAN_ORDER`].
pub fn gaussian_automoment(mean: f64, acvf: &dyn Fn(i64) -> f64, spec: &MomentSpec) -> Result<f64> {
    let order = spec.order();
    if order > MAX_GAUSSIAN_ORDER {
        return Err(Error::OrderTooHigh { order, max: MAX_GAUSSIAN_ORDER });
    }
    let times: Vec<i64> = spec
        .factors()
        .into_iter()
        .flat_map(|(t, p)| std::iter::repeat_n(t, p as usize))
        .collect();
    let n = times.len();
    let full = (1usize << n) - 1;
    // hafnian of the covariance restricted to each subset, built up from the
    // lowest set bit
    let mut haf = vec![0.0; 1 << n];
    haf[0] = 1.0;
    for mask in 1..=full {
        if mask.count_ones() % 2 == 1 {
            continue;
        }
        let i = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << i);
        let mut acc = 0.0;
        let mut bits = rest;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            acc += acvf(times[j] - times[i]) * haf[rest & !(1 << j)];
        }
        haf[mask] = acc;
    }
    let mut total = 0.0;
    for mask in 0..=full {
        let centered = mask.count_ones() as i32;
        if centered % 2 == 1 {
            continue;
        }
        total += mean.powi(n as i32 - centered) * haf[mask];
    }
    Ok(total)
}

type Acvf = Arc<dyn Fn(i64) -> f64 + Send + Sync>;

/// [`AutomomentProvider`] backed by [`gaussian_automoment`].
#[derive(Clone)]
pub struct GaussianMoments {
    mean: f64,
    acvf: Acvf,
}

impl GaussianMoments {
    pub fn new(mean: f64, acvf: impl Fn(i64) -> f64 + Send + Sync + 'static) -> Self {
        Self { mean, acvf: Arc::new(acvf) }
    }

    pub fn white_noise(mean: f64, variance: f64) -> Self {
        Self::new(mean, move |h| if h == 0 { variance } else { 0.0 })
    }

    /// Stationary AR(1) `z(t) = mean + φ (z(t-1) - mean) + ζ(t)`, `ζ ~ N(0, σ²)`.
    pub fn ar1(mean: f64, phi: f64, sigma2: f64) -> Self {
        let g0 = sigma2 / (1.0 - phi * phi);
        Self::new(mean, move |h| g0 * phi.powi(h.unsigned_abs() as i32))
    }

    /// From an explicit autocovariance sequence `gamma[h]`, `h ≥ 0`; zero beyond.
    pub fn from_acvf_table(mean: f64, gamma: Vec<f64>) -> Self {
        Self::new(mean, move |h| gamma.get(h.unsigned_abs() as usize).copied().unwrap_or(0.0))
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn acvf(&self, h: i64) -> f64 {
        (self.acvf)(h)
    }
}

impl AutomomentProvider for GaussianMoments {
    fn moment(&self, spec: &MomentSpec) -> Result<f64> {
        gaussian_automoment(self.mean, self.acvf.as_ref(), &spec.canonical())
    }
}

// ---------------------------------------------------------------------------
// Comoments
// ---------------------------------------------------------------------------

/// `μ_{y,z}^r(h) = E[y(t) z(t+h)^r]` over a lag window, together with the
/// first moments needed to factorize outside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComomentTable {
    entries: BTreeMap<(u32, i64), f64>,
    counts: BTreeMap<(u32, i64), usize>,
    max_order: u32,
    lag_range: (i64, i64),
    mean_y: f64,
    var_y: f64,
    /// `input_moments[r-1] = μ_z^r`
    input_moments: Vec<f64>,
}

impl ComomentTable {
    /// Build from an analytic comoment function.
    pub fn from_fn(
        max_order: u32,
        lag_range: (i64, i64),
        mean_y: f64,
        var_y: f64,
        input_moments: Vec<f64>,
        f: impl Fn(u32, i64) -> f64,
    ) -> Result<Self> {
        if max_order == 0 || input_moments.len() < max_order as usize {
            return Err(Error::InvalidArgument("need input moments up to max_order".into()));
        }
        let mut entries = BTreeMap::new();
        for r in 1..=max_order {
            for h in lag_range.0..=lag_range.1 {
                let v = f(r, h);
                if !v.is_finite() {
                    return Err(Error::InvalidArgument(format!("non-finite comoment ({r}, {h})")));
                }
                entries.insert((r, h), v);
            }
        }
        Ok(Self {
            entries,
            counts: BTreeMap::new(),
            max_order,
            lag_range,
            mean_y,
            var_y,
            input_moments,
        })
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn lag_range(&self) -> (i64, i64) {
        self.lag_range
    }

    pub fn mean_y(&self) -> f64 {
        self.mean_y
    }

    pub fn var_y(&self) -> f64 {
        self.var_y
    }

    pub fn input_moment(&self, r: u32) -> Option<f64> {
        self.input_moments.get(r as usize - 1).copied()
    }

    pub fn count(&self, r: u32, h: i64) -> Option<usize> {
        self.counts.get(&(r, h)).copied()
    }

    /// `μ_{y,z}^r(h)`; outside the stored lag window y and z are treated as
    /// independent, giving `μ_y μ_z^r`.
    pub fn get(&self, r: u32, h: i64) -> Result<f64> {
        if r == 0 || r > self.max_order {
            return Err(Error::MissingMoment(format!("comoment of order {r}")));
        }
        if let Some(v) = self.entries.get(&(r, h)) {
            return Ok(*v);
        }
        Ok(self.mean_y * self.input_moments[r as usize - 1])
    }
}

/// Sample comoments of `teaching` against `input`, aligned on time labels.
pub fn estimate_comoments(
    teaching: &TimeSeries,
    input: &TimeSeries,
    max_order: u32,
    lag_range: (i64, i64),
) -> Result<ComomentTable> {
    if max_order == 0 || lag_range.0 > lag_range.1 {
        return Err(Error::InvalidArgument("empty comoment request".into()));
    }
    let (lo, hi) = overlap(teaching, input)
        .ok_or_else(|| Error::InsufficientData("teaching and input do not overlap".into()))?;
    let y = teaching.window(lo, hi)?;
    let z = input.window(lo, hi)?;
    let mut entries = BTreeMap::new();
    let mut counts = BTreeMap::new();
    let yv = y.values();
    let zv = z.values();
    let n = yv.len() as i64;
    let pows: Vec<Vec<f64>> = (1..=max_order)
        .map(|r| zv.iter().map(|v| v.powi(r as i32)).collect())
        .collect();
    for h in lag_range.0..=lag_range.1 {
        // y index t, z index t+h, both in [0, n)
        let t0 = 0.max(-h);
        let t1 = n.min(n - h);
        if t1 <= t0 {
            return Err(Error::InsufficientData(format!("no overlap at comoment lag {h}")));
        }
        let count = (t1 - t0) as usize;
        for r in 1..=max_order {
            let p = &pows[r as usize - 1];
            let mut acc = 0.0;
            for t in t0..t1 {
                acc += yv[t as usize] * p[(t + h) as usize];
            }
            entries.insert((r, h), acc / count as f64);
            counts.insert((r, h), count);
        }
    }
    let input_moments = pows
        .iter()
        .map(|p| p.iter().sum::<f64>() / p.len() as f64)
        .collect();
    Ok(ComomentTable {
        entries,
        counts,
        max_order,
        lag_range,
        mean_y: y.mean(),
        var_y: y.variance(),
        input_moments,
    })
}
