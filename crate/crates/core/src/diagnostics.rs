//! Covariance-structure and cycling-quality diagnostics.
//!
//! Every table can be written as CSV preceded by one comment line
//! `# metric=<name> units=<units> run=<run> config_hash=<hash>`.

use std::io::Write;

use nalgebra::DMatrix;

use crate::covmodel::{correlation_from_covariance, length_scale, CovarianceMatrix, GridMetric};
use crate::dynamics::run_steps;
use crate::error::{Error, Result};
use crate::harness::RunArchive;
use crate::util::{median, rms};

/// Run identity stamped on every CSV.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub run: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(run: impl Into<String>, config_hash: impl Into<String>) -> Self {
        Provenance {
            run: run.into(),
            config_hash: config_hash.into(),
        }
    }

    pub fn of(archive: &RunArchive) -> Self {
        Provenance::new(archive.config.run_name.clone(), archive.config.hash())
    }

    /// Covariance matrices carry no run; the label names the matrix.
    pub fn matrix(label: impl Into<String>) -> Self {
        Provenance::new(label, "-")
    }
}

fn header<W: Write>(w: &mut W, metric: &str, units: &str, p: &Provenance) -> Result<()> {
    writeln!(
        w,
        "# metric={metric} units={units} run={} config_hash={}",
        p.run, p.config_hash
    )?;
    Ok(())
}

fn csv_rows<W: Write>(
    w: W,
    head: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(head)?;
    for r in rows {
        out.write_record(&r)?;
    }
    out.flush()?;
    Ok(())
}

/// One value per grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileTable {
    pub metric: String,
    pub units: String,
    pub values: Vec<f64>,
}

impl ProfileTable {
    pub fn new(
        metric: impl Into<String>,
        units: impl Into<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite profile value at grid point {i}"
            )));
        }
        Ok(ProfileTable {
            metric: metric.into(),
            units: units.into(),
            values,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W, p: &Provenance) -> Result<()> {
        header(&mut w, &self.metric, &self.units, p)?;
        csv_rows(
            w,
            &["index", "value"],
            self.values
                .iter()
                .enumerate()
                .map(|(i, v)| vec![i.to_string(), v.to_string()]),
        )
    }
}

/// Factor converting per-sub-window forcing to a per-unit-time rate.
pub fn per_time_factor(subwindows: usize, window_length: f64) -> f64 {
    subwindows as f64 / window_length
}

/// Standard deviations of `q` in per-unit-time display units.
pub fn std_profile(
    q: &CovarianceMatrix,
    subwindows: usize,
    window_length: f64,
) -> Result<ProfileTable> {
    if window_length <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "window length must be positive, got {window_length}"
        )));
    }
    let f = per_time_factor(subwindows, window_length);
    ProfileTable::new(
        "std_profile",
        "per_time",
        q.std_profile().iter().map(|s| s * f).collect(),
    )
}

#[derive(Clone, Debug)]
pub struct CorrelationMap {
    pub matrix: DMatrix<f64>,
    /// Rows with zero variance, reported as identity rows.
    pub zero_variance: Vec<bool>,
}

impl CorrelationMap {
    pub fn write_csv<W: Write>(&self, mut w: W, p: &Provenance) -> Result<()> {
        header(&mut w, "correlation_map", "1", p)?;
        let n = self.matrix.nrows();
        let mut head = vec!["index".to_string(), "zero_variance".to_string()];
        head.extend((0..n).map(|j| format!("c{j}")));
        let head: Vec<&str> = head.iter().map(String::as_str).collect();
        csv_rows(
            w,
            &head,
            (0..n).map(|i| {
                let mut r = vec![i.to_string(), u8::from(self.zero_variance[i]).to_string()];
                r.extend(self.matrix.row(i).iter().map(|v| v.to_string()));
                r
            }),
        )
    }
}

pub fn correlation_map(q: &CovarianceMatrix) -> CorrelationMap {
    let c = correlation_from_covariance(q);
    CorrelationMap {
        matrix: c.matrix.into_entries(),
        zero_variance: c.zero_variance,
    }
}

/// Correlation with a reference point as a function of signed offset.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationRow {
    pub index: usize,
    /// `(offset, correlation)` for offsets `-(n-1)/2 ..= n/2`.
    pub curve: Vec<(isize, f64)>,
    pub length_scale: f64,
    pub zero_variance: bool,
}

pub fn horizontal_correlation_rows(
    q: &CovarianceMatrix,
    refs: &[usize],
    metric: &GridMetric,
) -> Result<Vec<CorrelationRow>> {
    let n = q.dim();
    let c = correlation_from_covariance(q);
    refs.iter()
        .map(|&i| {
            if i >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: i,
                });
            }
            let row = c.matrix.entries().row(i).transpose();
            let lo = -(((n - 1) / 2) as isize);
            let curve = (lo..=(n / 2) as isize)
                .map(|d| (d, row[(i as isize + d).rem_euclid(n as isize) as usize]))
                .collect();
            let ls = if c.zero_variance[i] {
                0.0
            } else {
                length_scale(&row, i, metric).distance
            };
            Ok(CorrelationRow {
                index: i,
                curve,
                length_scale: ls,
                zero_variance: c.zero_variance[i],
            })
        })
        .collect()
}

pub fn write_correlation_rows<W: Write>(
    mut w: W,
    rows: &[CorrelationRow],
    p: &Provenance,
) -> Result<()> {
    header(&mut w, "horizontal_correlation", "1", p)?;
    csv_rows(
        w,
        &["index", "offset", "correlation", "length_scale"],
        rows.iter().flat_map(|r| {
            r.curve.iter().map(move |(d, c)| {
                vec![
                    r.index.to_string(),
                    d.to_string(),
                    c.to_string(),
                    r.length_scale.to_string(),
                ]
            })
        }),
    )
}

/// Time-mean and time-rms of the analysis increment at each grid point,
/// after spin-up.
pub fn increment_stats(archive: &RunArchive) -> Result<(ProfileTable, ProfileTable)> {
    let recs = archive.post_spinup();
    if recs.len() < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            actual: recs.len(),
        });
    }
    let n = archive.n();
    let incs: Vec<_> = recs.iter().map(|r| r.increment()).collect();
    let k = incs.len() as f64;
    let mean = (0..n)
        .map(|i| incs.iter().map(|d| d[i]).sum::<f64>() / k)
        .collect();
    let rmsv = (0..n).map(|i| rms(incs.iter().map(|d| d[i]))).collect();
    Ok((
        ProfileTable::new("increment_mean", "state", mean)?,
        ProfileTable::new("increment_rms", "state", rmsv)?,
    ))
}

/// A named subset of observed grid points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObsGroup {
    pub name: String,
    pub indices: Vec<usize>,
}

impl ObsGroup {
    pub fn new(name: impl Into<String>, indices: Vec<usize>) -> Self {
        ObsGroup {
            name: name.into(),
            indices,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Departure {
    /// Observation minus background.
    OmB,
    /// Observation minus analysis.
    OmA,
}

impl Departure {
    pub fn as_str(self) -> &'static str {
        match self {
            Departure::OmB => "o-b",
            Departure::OmA => "o-a",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepartureCell {
    pub mean: f64,
    pub rms: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepartureStats {
    /// `(group name, quantity, cell)`, groups in input order, O−B first.
    pub cells: Vec<(String, Departure, DepartureCell)>,
}

impl DepartureStats {
    pub fn get(&self, group: &str, q: Departure) -> Option<&DepartureCell> {
        self.cells
            .iter()
            .find(|(g, d, _)| g == group && *d == q)
            .map(|c| &c.2)
    }

    /// `100 · rms(self) / rms(control)` per cell.
    pub fn ratio_percent(&self, control: &DepartureStats) -> Result<Vec<(String, Departure, f64)>> {
        self.cells
            .iter()
            .map(|(g, d, c)| {
                let base = control
                    .get(g, *d)
                    .ok_or_else(|| Error::InvalidConfig(format!("control has no group {g:?}")))?;
                let r = if c.rms == base.rms {
                    100.0
                } else {
                    100.0 * c.rms / base.rms
                };
                Ok((g.clone(), *d, r))
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W, p: &Provenance) -> Result<()> {
        header(&mut w, "departures", "state", p)?;
        csv_rows(
            w,
            &["group", "quantity", "mean", "rms", "count"],
            self.cells.iter().map(|(g, d, c)| {
                vec![
                    g.clone(),
                    d.as_str().to_string(),
                    c.mean.to_string(),
                    c.rms.to_string(),
                    c.count.to_string(),
                ]
            }),
        )
    }
}

pub fn write_ratio_csv<W: Write>(
    mut w: W,
    ratios: &[(String, Departure, f64)],
    p: &Provenance,
) -> Result<()> {
    header(&mut w, "departure_ratio", "percent", p)?;
    csv_rows(
        w,
        &["group", "quantity", "ratio"],
        ratios
            .iter()
            .map(|(g, d, r)| vec![g.clone(), d.as_str().to_string(), r.to_string()]),
    )
}

/// Grouped O−B and O−A statistics over the post-spin-up windows.
///
/// Departures are laid out per window as sub-window `k = 1..=N`, then
/// observed index in increasing order.
pub fn departure_stats(archive: &RunArchive, groups: &[ObsGroup]) -> Result<DepartureStats> {
    let indices = archive.config.obs_indices();
    let m = archive.obs_per_window();
    let recs = archive.post_spinup();
    let mut cells = Vec::with_capacity(2 * groups.len());
    for g in groups {
        for q in [Departure::OmB, Departure::OmA] {
            let mut vals = Vec::new();
            for r in recs {
                let d = match q {
                    Departure::OmB => &r.omb,
                    Departure::OmA => &r.oma,
                };
                if d.len() != m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        actual: d.len(),
                    });
                }
                vals.extend(
                    d.iter()
                        .enumerate()
                        .filter(|(j, _)| g.indices.contains(&indices[j % indices.len()]))
                        .map(|(_, v)| *v),
                );
            }
            if vals.is_empty() {
                return Err(Error::InsufficientSamples {
                    required: 1,
                    actual: 0,
                });
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            cells.push((
                g.name.clone(),
                q,
                DepartureCell {
                    mean,
                    rms: rms(vals.iter().copied()).max(mean.abs()),
                    count: vals.len(),
                },
            ));
        }
    }
    Ok(DepartureStats { cells })
}

/// Mean RMSE against truth per lead time (in sub-windows).
#[derive(Clone, Debug, PartialEq)]
pub struct SkillCurve {
    pub label: String,
    pub leads: Vec<usize>,
    pub rmse: Vec<f64>,
}

impl SkillCurve {
    /// `(control − self) / control` per lead; positive means `self` is
    /// more skilful.
    pub fn relative_improvement(&self, control: &SkillCurve) -> Result<Vec<f64>> {
        if self.leads != control.leads {
            return Err(Error::InvalidConfig(
                "skill curves have different leads".into(),
            ));
        }
        Ok(self
            .rmse
            .iter()
            .zip(&control.rmse)
            .map(|(a, c)| if a == c { 0.0 } else { (c - a) / c })
            .collect())
    }
}

pub fn write_skill_csv<W: Write>(mut w: W, curves: &[SkillCurve], p: &Provenance) -> Result<()> {
    header(&mut w, "forecast_skill", "state", p)?;
    csv_rows(
        w,
        &["experiment", "lead", "rmse"],
        curves.iter().flat_map(|c| {
            c.leads
                .iter()
                .zip(&c.rmse)
                .map(move |(l, r)| vec![c.label.clone(), l.to_string(), r.to_string()])
        }),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForecastKind {
    /// Free forecast of the analysis.
    Unforced,
    /// Forecast forced by the window's masked analysis η at every
    /// sub-window boundary.
    Debiased,
    /// The analysis itself, held fixed.
    Persistence,
}

impl ForecastKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ForecastKind::Unforced => "unforced",
            ForecastKind::Debiased => "debiased",
            ForecastKind::Persistence => "persistence",
        }
    }
}

/// Forecasts launched from every post-spin-up analysis, verified against
/// the archived truth. Launches whose longest lead runs past the truth are
/// skipped.
pub fn forecast_skill(
    archive: &RunArchive,
    leads: &[usize],
    kind: ForecastKind,
) -> Result<SkillCurve> {
    if leads.is_empty() || leads.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(
            "leads must be non-empty and strictly increasing".into(),
        ));
    }
    let cfg = &archive.config;
    let nsub = cfg.subwindows;
    let last_t = archive.truth.nrows().saturating_sub(1);
    let max_lead = *leads.last().expect("non-empty");
    let launches: Vec<_> = archive
        .post_spinup()
        .iter()
        .filter(|r| r.window as usize * nsub + max_lead <= last_t)
        .collect();
    if launches.is_empty() {
        return Err(Error::LeadOutOfRange {
            lead: max_lead,
            available: archive.records.len(),
        });
    }
    let spec = cfg.forecast_spec();
    let mask = cfg.eta_mask();
    let mut sums = vec![0.0; leads.len()];
    for r in &launches {
        let t0 = r.window as usize * nsub;
        let forcing = mask.apply(&r.etaa);
        let mut x = r.xa.clone();
        let mut at = 0;
        for (li, &lead) in leads.iter().enumerate() {
            if kind != ForecastKind::Persistence {
                while at < lead {
                    x = run_steps(&x, &spec, cfg.steps_per_subwindow)?;
                    if kind == ForecastKind::Debiased {
                        x += &forcing;
                    }
                    at += 1;
                }
            }
            let t = archive.truth_state(t0 + lead);
            sums[li] += rms((&x - &t).iter().copied());
        }
    }
    let k = launches.len() as f64;
    Ok(SkillCurve {
        label: kind.as_str().to_string(),
        leads: leads.to_vec(),
        rmse: sums.into_iter().map(|s| s / k).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EtaVariability {
    /// std-over-time / |mean-over-time| per grid point; `None` where the
    /// mean is below the exclusion threshold.
    pub ratios: Vec<Option<f64>>,
    /// Median over the included points; `None` when every point is
    /// excluded.
    pub median: Option<f64>,
}

impl EtaVariability {
    pub fn write_csv<W: Write>(&self, mut w: W, p: &Provenance) -> Result<()> {
        header(&mut w, "eta_variability", "1", p)?;
        let med = self
            .median
            .map_or_else(|| "undefined".to_string(), |m| m.to_string());
        csv_rows(
            w,
            &["index", "ratio", "excluded", "median"],
            self.ratios.iter().enumerate().map(|(i, r)| {
                vec![
                    i.to_string(),
                    r.map_or_else(String::new, |v| v.to_string()),
                    u8::from(r.is_none()).to_string(),
                    med.clone(),
                ]
            }),
        )
    }
}

/// Points whose |mean η| is below this are excluded.
const ETA_MEAN_FLOOR: f64 = 1e-8;

pub fn eta_variability(archive: &RunArchive) -> Result<EtaVariability> {
    let recs = archive.post_spinup();
    if recs.is_empty() {
        return Err(Error::InsufficientSamples {
            required: 1,
            actual: 0,
        });
    }
    let k = recs.len() as f64;
    let ratios: Vec<Option<f64>> = (0..archive.n())
        .map(|i| {
            let mean = recs.iter().map(|r| r.etaa[i]).sum::<f64>() / k;
            let sd = rms(recs.iter().map(|r| r.etaa[i] - mean));
            (mean.abs() >= ETA_MEAN_FLOOR).then(|| sd / mean.abs())
        })
        .collect();
    let included: Vec<f64> = ratios.iter().flatten().copied().collect();
    Ok(EtaVariability {
        median: (!included.is_empty()).then(|| median(&included)),
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covmodel::scale_std;
    use crate::harness::{run_cycle, CycleMode, ExperimentConfig, WindowRecord};
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn archive_with(cfg: ExperimentConfig, recs: Vec<WindowRecord>) -> RunArchive {
        let rows = cfg.windows * cfg.subwindows + 1;
        RunArchive {
            truth: DMatrix::zeros(rows, cfg.n),
            mode: CycleMode::Strong,
            q_hash: None,
            records: recs,
            complete: true,
            failure: None,
            config: cfg,
        }
    }

    fn record(w: usize, n: usize, m: usize) -> WindowRecord {
        WindowRecord {
            window: w as u64,
            status: 0,
            xb: DVector::zeros(n),
            xa: DVector::zeros(n),
            etab: DVector::zeros(n),
            etaa: DVector::zeros(n),
            omb: vec![0.0; m],
            oma: vec![0.0; m],
            cost: [0.0; 8],
        }
    }

    fn small_cfg(windows: usize) -> ExperimentConfig {
        ExperimentConfig {
            n: 8,
            windows,
            diag_spinup: 0,
            ..Default::default()
        }
    }

    #[test]
    fn std_profile_cases() {
        let p = std_profile(&CovarianceMatrix::identity(5), 4, 4.0).unwrap();
        assert_eq!(p.values, vec![1.0; 5]);
        let d = CovarianceMatrix::diagonal(&[4.0, 9.0, 16.0]);
        assert_eq!(std_profile(&d, 1, 1.0).unwrap().values, vec![2.0, 3.0, 4.0]);
        let half = std_profile(&scale_std(&d, 0.5).unwrap(), 4, 0.2).unwrap();
        let full = std_profile(&d, 4, 0.2).unwrap();
        for (h, f) in half.values.iter().zip(&full.values) {
            assert_eq!(*h, 0.5 * f);
        }
    }

    #[test]
    fn correlation_of_diagonal_is_identity() {
        let q = CovarianceMatrix::diagonal(&[1.0, 0.0, 3.0, 2.0]);
        let c = correlation_map(&q);
        assert_eq!(c.matrix, DMatrix::identity(4, 4));
        assert_eq!(c.zero_variance, vec![false, true, false, false]);
        let rows = horizontal_correlation_rows(&q, &[0, 1, 2], &GridMetric::periodic(4)).unwrap();
        assert!(rows.iter().all(|r| r.length_scale == 0.0));
        assert!(rows[1].zero_variance);
    }

    #[test]
    fn gaussian_length_scale() {
        let g = GridMetric::periodic(40);
        let q = CovarianceMatrix::gaussian(&g, 1.0, 3.0);
        let rows = horizontal_correlation_rows(&q, &[0, 17], &g).unwrap();
        for r in rows {
            assert!(
                (r.length_scale - 3.0 * 1.1774).abs() < 0.5,
                "{}",
                r.length_scale
            );
            assert_eq!(r.curve.len(), 40);
            assert!(r.curve.contains(&(0, 1.0)));
        }
    }

    #[test]
    fn correlation_map_is_scale_invariant() {
        let g = GridMetric::periodic(12);
        let q = CovarianceMatrix::gaussian(&g, 0.7, 2.0);
        let a = correlation_map(&q).matrix;
        let b = correlation_map(&scale_std(&q, 3.0).unwrap()).matrix;
        assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn increments_alternating_sign() {
        let cfg = small_cfg(10);
        let c = 0.3;
        let recs = (0..10)
            .map(|w| {
                let mut r = record(w, 8, cfg.obs_per_window());
                r.xa = DVector::from_element(8, if w % 2 == 0 { c } else { -c });
                r
            })
            .collect();
        let (mean, rmsp) = increment_stats(&archive_with(cfg, recs)).unwrap();
        assert!(mean.values.iter().all(|v| v.abs() < 1e-15));
        assert!(rmsp.values.iter().all(|v| (v - c).abs() < 1e-15));
    }

    #[test]
    fn no_obs_run_has_zero_increments() {
        let cfg = small_cfg(4);
        let recs = (0..4).map(|w| record(w, 8, cfg.obs_per_window())).collect();
        let (mean, rmsp) = increment_stats(&archive_with(cfg, recs)).unwrap();
        assert!(mean.values.iter().chain(&rmsp.values).all(|&v| v == 0.0));
        let short = small_cfg(1);
        let one = vec![record(0, 8, short.obs_per_window())];
        assert!(increment_stats(&archive_with(short, one)).is_err());
    }

    #[test]
    fn departures_of_truth_analyses_match_obs_noise() {
        let sigma = 0.3;
        let cfg = ExperimentConfig {
            n: 40,
            windows: 130,
            diag_spinup: 0,
            obs_sigma: sigma,
            ..Default::default()
        };
        let twin = crate::harness::generate_truth_and_obs(&cfg).unwrap();
        let m = cfg.obs_per_window();
        let recs = (0..cfg.windows)
            .map(|w| {
                let mut r = record(w, cfg.n, m);
                r.oma = twin.obs[w]
                    .obs
                    .iter()
                    .map(|o| o.value - twin.truth[w * cfg.subwindows + o.k][o.index])
                    .collect();
                r
            })
            .collect();
        let a = archive_with(cfg.clone(), recs);
        let all = ObsGroup::new("all", (0..cfg.n).collect());
        let s = departure_stats(&a, &[all]).unwrap();
        let c = s.get("all", Departure::OmA).unwrap();
        assert!(c.count >= 10_000);
        assert!((c.rms / sigma - 1.0).abs() < 0.05, "{}", c.rms);
        let zero = s.get("all", Departure::OmB).unwrap();
        assert_eq!((zero.mean, zero.rms), (0.0, 0.0));
    }

    #[test]
    fn departure_groups_and_self_ratio() {
        let cfg = small_cfg(3);
        let m = cfg.obs_per_window();
        let recs = (0..3)
            .map(|w| {
                let mut r = record(w, 8, m);
                r.omb = (0..m).map(|j| (j + w) as f64).collect();
                r.oma = (0..m).map(|j| 0.5 * j as f64 - 1.0).collect();
                r
            })
            .collect();
        let a = archive_with(cfg, recs);
        let groups = [
            ObsGroup::new("west", vec![0, 2]),
            ObsGroup::new("east", vec![4, 6]),
        ];
        let s = departure_stats(&a, &groups).unwrap();
        assert_eq!(s.cells.len(), 4);
        assert_eq!(s.get("west", Departure::OmB).unwrap().count, 3 * 2 * 4);
        for (_, _, r) in s.ratio_percent(&s).unwrap() {
            assert_eq!(r, 100.0);
        }
        let empty = [ObsGroup::new("odd", vec![1, 3])];
        assert!(departure_stats(&a, &empty).is_err());
    }

    #[test]
    fn perfect_forecast_from_truth_has_zero_error() {
        let cfg = ExperimentConfig {
            windows: 6,
            bias_amplitude: 0.0,
            spinup_steps: 100,
            diag_spinup: 0,
            ..Default::default()
        };
        let twin = crate::harness::generate_truth_and_obs(&cfg).unwrap();
        let mut a = archive_with(cfg.clone(), Vec::new());
        a.truth = DMatrix::from_fn(twin.truth.len(), cfg.n, |t, i| twin.truth[t][i]);
        a.records = (0..cfg.windows)
            .map(|w| {
                let mut r = record(w, cfg.n, cfg.obs_per_window());
                r.xa = twin.truth[w * cfg.subwindows].clone();
                r
            })
            .collect();
        let s = forecast_skill(&a, &[1, 2, 4, 8], ForecastKind::Unforced).unwrap();
        assert!(s.rmse.iter().all(|&e| e < 1e-12), "{:?}", s.rmse);
        assert_eq!(s.relative_improvement(&s).unwrap(), vec![0.0; 4]);
        assert!(matches!(
            forecast_skill(&a, &[100], ForecastKind::Unforced),
            Err(Error::LeadOutOfRange { .. })
        ));
    }

    #[test]
    fn persistence_error_grows_with_lead() {
        let cfg = ExperimentConfig {
            windows: 30,
            spinup_steps: 300,
            diag_spinup: 5,
            ..Default::default()
        };
        let a = run_cycle(&cfg, None).unwrap();
        let s = forecast_skill(&a, &[1, 2, 3, 4, 5], ForecastKind::Persistence).unwrap();
        assert!(s.rmse.windows(2).all(|w| w[0] < w[1]), "{:?}", s.rmse);
    }

    #[test]
    fn eta_variability_cases() {
        let cfg = small_cfg(8);
        let m = cfg.obs_per_window();
        let constant: Vec<_> = (0..8)
            .map(|w| {
                let mut r = record(w, 8, m);
                r.etaa = DVector::from_element(8, 0.5);
                r
            })
            .collect();
        let v = eta_variability(&archive_with(cfg.clone(), constant)).unwrap();
        assert_eq!(v.median, Some(0.0));

        let alternating: Vec<_> = (0..8)
            .map(|w| {
                let mut r = record(w, 8, m);
                r.etaa = DVector::from_element(8, if w % 2 == 0 { 1.1 } else { 0.9 });
                r
            })
            .collect();
        let v = eta_variability(&archive_with(cfg.clone(), alternating)).unwrap();
        assert!((v.median.unwrap() - 0.1).abs() < 1e-12);

        let zero = (0..8).map(|w| record(w, 8, m)).collect();
        let v = eta_variability(&archive_with(cfg, zero)).unwrap();
        assert!(v.median.is_none() && v.ratios.iter().all(Option::is_none));
    }

    #[test]
    fn csv_header_names_metric_and_hash() {
        let cfg = small_cfg(2);
        let hash = cfg.hash();
        let recs = (0..2).map(|w| record(w, 8, cfg.obs_per_window())).collect();
        let a = archive_with(cfg, recs);
        let (mean, _) = increment_stats(&a).unwrap();
        let mut buf = Vec::new();
        mean.write_csv(&mut buf, &Provenance::of(&a)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(
            first,
            format!("# metric=increment_mean units=state run=run config_hash={hash}")
        );
        assert_eq!(text.lines().count(), 2 + 8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn rms_bounds_mean(vals in proptest::collection::vec(-5.0f64..5.0, 3 * 16)) {
            let cfg = small_cfg(3);
            let m = cfg.obs_per_window();
            let recs: Vec<_> = (0..3)
                .map(|w| {
                    let mut r = record(w, 8, m);
                    r.omb = vals[w * m..(w + 1) * m].to_vec();
                    r.oma = r.omb.iter().map(|v| v * 0.5).collect();
                    r.xa = DVector::from_column_slice(&vals[w * 8..w * 8 + 8]);
                    r
                })
                .collect();
            let a = archive_with(cfg, recs);
            let s = departure_stats(&a, &[ObsGroup::new("all", (0..8).collect())]).unwrap();
            for (_, _, c) in &s.cells {
                prop_assert!(c.rms >= c.mean.abs());
            }
            let (mean, rmsp) = increment_stats(&a).unwrap();
            for (m, r) in mean.values.iter().zip(&rmsp.values) {
                prop_assert!(*r >= m.abs());
            }
            let again = departure_stats(&a, &[ObsGroup::new("all", (0..8).collect())]).unwrap();
            prop_assert_eq!(s, again);
        }
    }
}
