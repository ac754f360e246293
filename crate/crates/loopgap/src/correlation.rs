//! Correlation between offline metrics and online outcomes: Pearson and
//! Spearman coefficients, paired bootstrap confidence intervals, and the
//! policy-family correlation report.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::numeric::{derive_seed, sig9};

// ── Coefficients ─────────────────────────────────────────────────────────────

#[derive(Debug, Error)]
pub enum CorrError {
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 paired values, got {0}")]
    TooShort(usize),
    #[error("degenerate series: {0}")]
    Degenerate(String),
}

/// Pearson correlation via a single streaming pass over the pairs
/// (numerically stable co-moment updates).
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, CorrError> {
    if xs.len() != ys.len() {
        return Err(CorrError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(CorrError::TooShort(xs.len()));
    }
    let mut n = 0.0f64;
    let mut mean_x = 0.0;
    let mut mean_y = 0.0;
    let mut m2x = 0.0;
    let mut m2y = 0.0;
    let mut cxy = 0.0;
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        if !(x.is_finite() && y.is_finite()) {
            return Err(CorrError::Degenerate(format!("non-finite value at index {i}")));
        }
        n += 1.0;
        let dx = x - mean_x;
        mean_x += dx / n;
        let dy = y - mean_y;
        mean_y += dy / n;
        m2x += dx * (x - mean_x);
        cxy += dx * (y - mean_y);
        m2y += dy * (y - mean_y);
    }
    if m2x <= 0.0 {
        return Err(CorrError::Degenerate("first series has zero variance".to_string()));
    }
    if m2y <= 0.0 {
        return Err(CorrError::Degenerate("second series has zero variance".to_string()));
    }
    Ok((cxy / (m2x * m2y).sqrt()).clamp(-1.0, 1.0))
}

/// Mean ranks (1-based); tied values share the mean of their rank positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the mean rank.
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = mean_rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman correlation: Pearson on the mean ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, CorrError> {
    if xs.len() != ys.len() {
        return Err(CorrError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(CorrError::TooShort(xs.len()));
    }
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        if !(x.is_finite() && y.is_finite()) {
            return Err(CorrError::Degenerate(format!("non-finite value at index {i}")));
        }
    }
    pearson(&ranks(xs), &ranks(ys))
}

/// Which coefficient a computation applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stat {
    Pearson,
    Spearman,
}

impl Stat {
    pub fn apply(&self, xs: &[f64], ys: &[f64]) -> Result<f64, CorrError> {
        match self {
            Stat::Pearson => pearson(xs, ys),
            Stat::Spearman => spearman(xs, ys),
        }
    }
}

// ── Bootstrap ────────────────────────────────────────────────────────────────

/// A percentile bootstrap interval, hulled with the point estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapCi {
    pub lo: f64,
    pub hi: f64,
    /// Resamples whose coefficient was undefined (for example constant) and
    /// were excluded from the percentile.
    pub skipped: usize,
}

/// Paired percentile bootstrap for a correlation coefficient. Resamples whole
/// pairs with replacement; degenerate resamples are skipped and counted.
pub fn bootstrap_ci(
    xs: &[f64],
    ys: &[f64],
    stat: Stat,
    resamples: usize,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapCi, CorrError> {
    let point = stat.apply(xs, ys)?;
    let n = xs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(resamples);
    let mut skipped = 0usize;
    let mut rx = vec![0.0; n];
    let mut ry = vec![0.0; n];
    for _ in 0..resamples {
        for i in 0..n {
            let j = rng.random_range(0..n);
            rx[i] = xs[j];
            ry[i] = ys[j];
        }
        match stat.apply(&rx, &ry) {
            Ok(v) => values.push(v),
            Err(_) => skipped += 1,
        }
    }
    if values.is_empty() {
        return Err(CorrError::Degenerate("every bootstrap resample degenerated".to_string()));
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite coefficients"));
    let m = values.len();
    let lo_idx = ((alpha / 2.0) * m as f64).floor() as usize;
    let hi_idx = (((1.0 - alpha / 2.0) * m as f64).floor() as usize).min(m - 1);
    Ok(BootstrapCi {
        lo: values[lo_idx].min(point),
        hi: values[hi_idx].max(point),
        skipped,
    })
}

// ── Policy-family table ──────────────────────────────────────────────────────

/// One policy's row of offline metric values and online outcome values.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRow {
    pub policy_id: String,
    pub offline: Vec<(String, f64)>,
    pub online: Vec<(String, f64)>,
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("need at least {need} policies for correlation, got {got}")]
    TooFewPolicies { got: usize, need: usize },
    #[error("duplicate policy '{0}'")]
    DuplicatePolicy(String),
    #[error("policy '{policy_id}' is missing a value for '{name}'")]
    MissingCell { policy_id: String, name: String },
    #[error("policy '{policy_id}' has a non-finite value for '{name}'")]
    NonFinite { policy_id: String, name: String },
}

/// Aligned metric values across a family of policies. Rows are held sorted by
/// policy id, so construction order cannot influence any downstream number.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFamilyTable {
    pub policy_ids: Vec<String>,
    pub offline_names: Vec<String>,
    pub online_names: Vec<String>,
    /// `offline[p][m]` for policy p, metric m.
    pub offline: Vec<Vec<f64>>,
    pub online: Vec<Vec<f64>>,
}

impl PolicyFamilyTable {
    pub fn new(mut rows: Vec<PolicyRow>) -> Result<Self, TableError> {
        if rows.len() < 3 {
            return Err(TableError::TooFewPolicies { got: rows.len(), need: 3 });
        }
        rows.sort_by(|a, b| a.policy_id.cmp(&b.policy_id));
        for pair in rows.windows(2) {
            if pair[0].policy_id == pair[1].policy_id {
                return Err(TableError::DuplicatePolicy(pair[0].policy_id.clone()));
            }
        }
        let offline_names: Vec<String> = rows[0].offline.iter().map(|(n, _)| n.clone()).collect();
        let online_names: Vec<String> = rows[0].online.iter().map(|(n, _)| n.clone()).collect();

        let pick = |row: &PolicyRow, values: &[(String, f64)], name: &String| -> Result<f64, TableError> {
            let v = values
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| TableError::MissingCell {
                    policy_id: row.policy_id.clone(),
                    name: name.clone(),
                })?;
            if !v.is_finite() {
                return Err(TableError::NonFinite {
                    policy_id: row.policy_id.clone(),
                    name: name.clone(),
                });
            }
            Ok(v)
        };

        let mut offline = Vec::with_capacity(rows.len());
        let mut online = Vec::with_capacity(rows.len());
        for row in &rows {
            let mut o = Vec::with_capacity(offline_names.len());
            for name in &offline_names {
                o.push(pick(row, &row.offline, name)?);
            }
            let mut q = Vec::with_capacity(online_names.len());
            for name in &online_names {
                q.push(pick(row, &row.online, name)?);
            }
            offline.push(o);
            online.push(q);
        }
        Ok(PolicyFamilyTable {
            policy_ids: rows.into_iter().map(|r| r.policy_id).collect(),
            offline_names,
            online_names,
            offline,
            online,
        })
    }

    pub fn offline_column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.offline_names.iter().position(|n| n == name)?;
        Some(self.offline.iter().map(|row| row[j]).collect())
    }

    pub fn online_column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.online_names.iter().position(|n| n == name)?;
        Some(self.online.iter().map(|row| row[j]).collect())
    }
}

// ── Correlation report ───────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelateOptions {
    /// Bootstrap resample count.
    pub resamples: usize,
    /// Two-sided miss probability for the interval.
    pub alpha: f64,
    /// Master seed; each cell derives its own stream from the metric names.
    pub seed: u64,
    /// Online metric that orders the report rows.
    pub primary: String,
}

impl Default for CorrelateOptions {
    fn default() -> Self {
        CorrelateOptions {
            resamples: 1000,
            alpha: 0.05,
            seed: 0,
            primary: "driving_score".to_string(),
        }
    }
}

/// One (offline metric, online metric) pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCell {
    pub offline_metric: String,
    pub online_metric: String,
    pub n: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub skipped_resamples: usize,
    /// "ok", or the reason the pairing is degenerate.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub cells: Vec<CorrelationCell>,
    pub primary: String,
    pub n_policies: usize,
}

/// Correlate every offline metric with every online metric. Offline metrics
/// are ordered by |Pearson r| against the primary online metric (strongest
/// first, degenerate last, names breaking ties).
pub fn correlate(table: &PolicyFamilyTable, opts: &CorrelateOptions) -> CorrelationReport {
    let cell_for = |offline_name: &str, online_name: &str| -> CorrelationCell {
        let xs = table.offline_column(offline_name).expect("offline name from table");
        let ys = table.online_column(online_name).expect("online name from table");
        let n = xs.len();
        match pearson(&xs, &ys) {
            Ok(r) => {
                let s = spearman(&xs, &ys).ok();
                let seed = derive_seed(opts.seed, &["bootstrap", offline_name, online_name]);
                let ci = bootstrap_ci(&xs, &ys, Stat::Pearson, opts.resamples, opts.alpha, seed).ok();
                CorrelationCell {
                    offline_metric: offline_name.to_string(),
                    online_metric: online_name.to_string(),
                    n,
                    pearson: Some(r),
                    spearman: s,
                    ci_lo: ci.map(|c| c.lo),
                    ci_hi: ci.map(|c| c.hi),
                    skipped_resamples: ci.map(|c| c.skipped).unwrap_or(0),
                    status: "ok".to_string(),
                }
            }
            Err(e) => CorrelationCell {
                offline_metric: offline_name.to_string(),
                online_metric: online_name.to_string(),
                n,
                pearson: None,
                spearman: None,
                ci_lo: None,
                ci_hi: None,
                skipped_resamples: 0,
                status: format!("degenerate: {e}"),
            },
        }
    };

    // Order offline metrics by strength against the primary online metric.
    let primary_key = |name: &String| -> Option<f64> {
        let xs = table.offline_column(name)?;
        let ys = table.online_column(&opts.primary)?;
        pearson(&xs, &ys).ok().map(f64::abs)
    };
    let mut order: Vec<(Option<f64>, String)> = table
        .offline_names
        .iter()
        .map(|n| (primary_key(n), n.clone()))
        .collect();
    order.sort_by(|(ka, na), (kb, nb)| match (ka, kb) {
        (Some(a), Some(b)) => b.partial_cmp(a).expect("finite |r|").then_with(|| na.cmp(nb)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => na.cmp(nb),
    });

    let mut cells = Vec::with_capacity(order.len() * table.online_names.len());
    for (_, offline_name) in &order {
        for online_name in &table.online_names {
            cells.push(cell_for(offline_name, online_name));
        }
    }
    CorrelationReport { cells, primary: opts.primary.clone(), n_policies: table.policy_ids.len() }
}

// ── Emitters ─────────────────────────────────────────────────────────────────

fn opt_sig9(v: Option<f64>) -> String {
    v.map(sig9).unwrap_or_default()
}

/// CSV form of a correlation report (deterministic, sig9 floats).
pub fn report_csv(report: &CorrelationReport) -> String {
    let mut out = String::from(
        "offline_metric,online_metric,n,pearson_abs,pearson_sign,pearson,spearman,ci_lo,ci_hi,skipped_resamples,status\n",
    );
    for c in &report.cells {
        let (r_abs, r_sign) = match c.pearson {
            Some(r) => (sig9(r.abs()), if r < 0.0 { "-" } else { "+" }.to_string()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.offline_metric,
            c.online_metric,
            c.n,
            r_abs,
            r_sign,
            opt_sig9(c.pearson),
            opt_sig9(c.spearman),
            opt_sig9(c.ci_lo),
            opt_sig9(c.ci_hi),
            c.skipped_resamples,
            c.status
        );
    }
    out
}

/// Scatter data for one metric pairing: one row per policy.
pub fn scatter_csv(table: &PolicyFamilyTable, offline_name: &str, online_name: &str) -> Option<String> {
    let xs = table.offline_column(offline_name)?;
    let ys = table.online_column(online_name)?;
    let mut out = String::from("x,y,policy_id\n");
    for ((x, y), pid) in xs.iter().zip(&ys).zip(&table.policy_ids) {
        let _ = writeln!(out, "{},{},{}", sig9(*x), sig9(*y), pid);
    }
    Some(out)
}

/// A minimal self-contained scatter plot (600x400 SVG) of one metric pairing.
pub fn scatter_svg(table: &PolicyFamilyTable, offline_name: &str, online_name: &str) -> Option<String> {
    let xs = table.offline_column(offline_name)?;
    let ys = table.online_column(online_name)?;
    const W: f64 = 600.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let (xmin, xmax) = span(&xs);
    let (ymin, ymax) = span(&ys);
    let px = |x: f64| M + (x - xmin) / (xmax - xmin) * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - ymin) / (ymax - ymin) * (H - 2.0 * M);

    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"400\" viewBox=\"0 0 600 400\">"
    );
    let _ = write!(s, "<rect width=\"600\" height=\"400\" fill=\"white\"/>");
    let _ = write!(
        s,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>",
        m = M,
        b = H - M,
        r = W - M,
        t = M
    );
    let _ = write!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
        W / 2.0,
        H - 12.0,
        offline_name
    );
    let _ = write!(
        s,
        "<text x=\"14\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>",
        H / 2.0,
        H / 2.0,
        online_name
    );
    for (label, x, y, anchor) in [
        (sig9(xmin), M, H - M + 16.0, "middle"),
        (sig9(xmax), W - M, H - M + 16.0, "middle"),
        (sig9(ymin), M - 6.0, H - M, "end"),
        (sig9(ymax), M - 6.0, M + 4.0, "end"),
    ] {
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"{}\">{}</text>",
            sig9(x),
            sig9(y),
            anchor,
            label
        );
    }
    for ((x, y), pid) in xs.iter().zip(&ys).zip(&table.policy_ids) {
        let _ = write!(
            s,
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.8\"><title>{}</title></circle>",
            sig9(px(*x)),
            sig9(py(*y)),
            pid
        );
    }
    s.push_str("</svg>");
    Some(s)
}

fn span(xs: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in xs {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if hi <= lo {
        // Constant series still needs a drawable span.
        lo -= 0.5;
        hi += 0.5;
    }
    (lo, hi)
}
