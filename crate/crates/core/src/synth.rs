//! Synthetic market worlds with planted factor structure, for verifying the
//! pipeline without proprietary data.

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::clustering::ClusterAssignment;
use crate::error::Result;
use crate::ingest::{
    EmbeddingSeries, ReturnsPanel, SectorMap, TradingCalendar, CANONICAL_SECTOR_CODES,
};

/// Parameters of a planted-structure world. Volatilities are in percent per
/// day, matching the panel's return units.
#[derive(Debug, Clone)]
pub struct WorldSpec {
    pub n_stocks: usize,
    pub n_clusters: usize,
    pub n_days: usize,
    pub factor_vol: f64,
    pub idio_vol: f64,
    pub beta_range: (f64, f64),
    /// expected fraction of stocks switching true cluster per year
    pub migration_rate: f64,
    pub seed: u64,
    pub start_date: NaiveDate,
    pub embed_dim: usize,
    /// noise radius around the cluster direction in embedding space
    pub embed_noise: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            n_stocks: 100,
            n_clusters: 11,
            n_days: 756,
            factor_vol: 1.0,
            idio_vol: 1.0,
            beta_range: (0.5, 1.5),
            migration_rate: 0.0,
            seed: 0,
            start_date: NaiveDate::from_ymd_opt(2022, 1, 3).unwrap(),
            embed_dim: 16,
            embed_noise: 0.25,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if self.n_clusters < 1 || self.n_stocks < self.n_clusters {
            return Err(Error::Validation(format!(
                "need n_stocks >= n_clusters >= 1, got {} / {}",
                self.n_stocks, self.n_clusters
            )));
        }
        if self.factor_vol < 0.0 || self.idio_vol < 0.0 {
            return Err(Error::Validation("volatilities must be >= 0".into()));
        }
        if self.beta_range.0 > self.beta_range.1 {
            return Err(Error::Validation("beta_range lo > hi".into()));
        }
        if !(0.0..=1.0).contains(&self.migration_rate) {
            return Err(Error::Validation("migration_rate must be in [0,1]".into()));
        }
        if self.n_days == 0 {
            return Err(Error::Validation("n_days must be positive".into()));
        }
        Ok(())
    }
}

/// A generated world: the data files' in-memory forms plus the ground truth.
#[derive(Debug, Clone)]
pub struct World {
    pub panel: ReturnsPanel,
    /// true cluster label per (date, stock), date-major
    pub true_labels: Vec<usize>,
    pub sector_map: SectorMap,
    pub embeddings: EmbeddingSeries,
    pub spec: WorldSpec,
}

impl World {
    /// Ground-truth assignment as of a trading date.
    pub fn true_assignment(&self, as_of: NaiveDate) -> Option<ClusterAssignment> {
        let di = self.panel.calendar().index_of(as_of)?;
        let n = self.panel.n_tickers();
        let labels = self
            .panel
            .tickers()
            .iter()
            .enumerate()
            .map(|(ti, t)| (t.clone(), self.true_labels[di * n + ti]))
            .collect();
        ClusterAssignment::new(as_of, "truth", self.spec.n_clusters, labels).ok()
    }
}

fn weekday_calendar(start: NaiveDate, n_days: usize) -> TradingCalendar {
    let mut dates = Vec::with_capacity(n_days);
    let mut d = start;
    while dates.len() < n_days {
        if d.weekday().num_days_from_monday() < 5 {
            dates.push(d);
        }
        d += chrono::Duration::days(1);
    }
    TradingCalendar::new(dates).expect("strictly increasing by construction")
}

fn iso_week_monday(d: NaiveDate) -> NaiveDate {
    let w = d.iso_week();
    NaiveDate::from_isoywd_opt(w.year(), w.week(), chrono::Weekday::Mon).expect("valid ISO week")
}

/// Generate R_{i,t} = beta_i * F_{c(i,t),t} + eps_{i,t} with i.i.d. normal
/// cluster factors and idiosyncratic noise, piecewise-constant cluster
/// membership with Poisson-scheduled migrations, a sector map mirroring the
/// true assignment, and embeddings placing cluster-mates near a shared
/// random direction. Deterministic per seed.
pub fn generate_market(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let calendar = weekday_calendar(spec.start_date, spec.n_days);
    let n = spec.n_stocks;
    let k = spec.n_clusters;

    let tickers: Vec<String> = (0..n).map(|i| format!("S{i:04}")).collect();

    // balanced initial assignment, shuffled
    let mut initial: Vec<usize> = (0..n).map(|i| i % k).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        initial.swap(i, j);
    }

    let betas: Vec<f64> = (0..n)
        .map(|_| {
            if spec.beta_range.0 == spec.beta_range.1 {
                spec.beta_range.0
            } else {
                rng.gen_range(spec.beta_range.0..spec.beta_range.1)
            }
        })
        .collect();

    // per-stock per-day migration probability
    let p_migrate = spec.migration_rate / 252.0;
    let mut true_labels = Vec::with_capacity(spec.n_days * n);
    let mut current = initial.clone();
    let mut sector_map = SectorMap::new();
    for (i, t) in tickers.iter().enumerate() {
        sector_map.insert(calendar.date(0), t, CANONICAL_SECTOR_CODES[initial[i] % 11])?;
    }
    let mut migrations: Vec<(usize, usize)> = Vec::new(); // (date_idx, stock)
    for di in 0..spec.n_days {
        if di > 0 && p_migrate > 0.0 {
            for (i, c) in current.iter_mut().enumerate() {
                if k > 1 && rng.gen_bool(p_migrate) {
                    let mut new = rng.gen_range(0..k - 1);
                    if new >= *c {
                        new += 1;
                    }
                    *c = new;
                    migrations.push((di, i));
                }
            }
        }
        true_labels.extend_from_slice(&current);
    }
    for (di, i) in migrations {
        let code = CANONICAL_SECTOR_CODES[true_labels[di * n + i] % 11];
        sector_map.insert(calendar.date(di), &tickers[i], code)?;
    }

    // factor and idiosyncratic draws
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut returns = vec![None; spec.n_days * n];
    for di in 0..spec.n_days {
        let factors: Vec<f64> =
            (0..k).map(|_| normal.sample(&mut rng) * spec.factor_vol).collect();
        for i in 0..n {
            let eps = normal.sample(&mut rng) * spec.idio_vol;
            let c = true_labels[di * n + i];
            returns[di * n + i] = Some(betas[i] * factors[c] + eps);
        }
    }
    let membership = vec![true; spec.n_days * n];
    let panel = ReturnsPanel::from_parts(calendar, tickers.clone(), returns, membership)?;

    // embeddings: one random unit direction per cluster, noisy copies per
    // ticker-week, reflecting the ticker's true cluster at the week end
    let dim = spec.embed_dim;
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
        directions.push(v);
    }
    let mut embeddings = EmbeddingSeries::new(dim)?;
    let boundaries: Vec<usize> = panel.calendar().week_boundaries().to_vec();
    for &wi in &boundaries {
        let week_start = iso_week_monday(panel.calendar().date(wi));
        for (i, t) in tickers.iter().enumerate() {
            let c = true_labels[wi * n + i];
            let mut v: Vec<f64> = directions[c]
                .iter()
                .map(|x| x + spec.embed_noise * normal.sample(&mut rng))
                .collect();
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in v.iter_mut() {
                    *x /= norm;
                }
            }
            embeddings.insert(t, week_start, v)?;
        }
    }

    Ok(World { panel, true_labels, sector_map, embeddings, spec: spec.clone() })
}

/// Reassign ceil(fraction * N) randomly chosen tickers to uniformly random
/// wrong labels (the true label is excluded from the draw).
pub fn perturb_assignment(
    truth: &ClusterAssignment,
    fraction: f64,
    seed: u64,
) -> ClusterAssignment {
    assert!((0.0..=1.0).contains(&fraction), "fraction must be in [0,1]");
    let mut out = truth.clone();
    if fraction == 0.0 || truth.k < 2 {
        return out;
    }
    let n = truth.labels.len();
    let m = (fraction * n as f64).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<&String> = truth.labels.keys().collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let chosen: Vec<String> = order.into_iter().take(m).cloned().collect();
    for t in chosen {
        let old = truth.labels[&t];
        let mut new = rng.gen_range(0..truth.k - 1);
        if new >= old {
            new += 1;
        }
        out.labels.insert(t, new);
    }
    out
}
