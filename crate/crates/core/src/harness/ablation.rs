//! Ablation batches: the product of variants, objects, initial
//! configurations, displacements and seeds for one use case.
//!
//! Output files:
//!
//! - `rollouts.csv`: one row per rollout, in cell order;
//! - `summary_{object,init,displacement,overall}.csv`: per variant and
//!   group, `variant,group_key,mean_max_target_accel,n,std` over the
//!   rollouts that completed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{impact_dataset, io_err, run_rollout, HarnessError};
use crate::controller::{ControllerConfig, Variant};
use crate::dynamics::SimParams;
use crate::impact_map::ImpactDataset;
use crate::scenario::{FieldConfig, ImpactMapConfig, InitConfig, ObjectChoice, ScenarioConfig, ScenarioKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationMatrix {
    pub kind: ScenarioKind,
    #[serde(default = "all_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "all_objects")]
    pub objects: Vec<ObjectChoice>,
    #[serde(default = "all_inits")]
    pub inits: Vec<InitConfig>,
    /// Defaults to the use case's three displacements.
    #[serde(default)]
    pub displacements_m: Option<Vec<f64>>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub sim: SimParams,
    #[serde(default)]
    pub fields: Option<FieldConfig>,
    #[serde(default)]
    pub impact_map: ImpactMapConfig,
}

fn all_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}

fn all_objects() -> Vec<ObjectChoice> {
    ObjectChoice::ALL.to_vec()
}

fn all_inits() -> Vec<InitConfig> {
    InitConfig::ALL.to_vec()
}

fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}

fn default_duration() -> f64 {
    2.0
}

impl AblationMatrix {
    /// The full default matrix of a use case.
    pub fn full(kind: ScenarioKind) -> Self {
        Self {
            kind,
            variants: all_variants(),
            objects: all_objects(),
            inits: all_inits(),
            displacements_m: None,
            seeds: default_seeds(),
            duration_s: default_duration(),
            controller: ControllerConfig::default(),
            sim: SimParams::default(),
            fields: None,
            impact_map: ImpactMapConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let m: Self = serde_json::from_str(text).map_err(|e| HarnessError::Matrix(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serialises")
    }

    pub fn displacements(&self) -> Vec<f64> {
        self.displacements_m.clone().unwrap_or_else(|| self.kind.displacements().to_vec())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let empty = |name: &str, n: usize| {
            if n == 0 {
                Err(HarnessError::Matrix(format!("{name} is empty")))
            } else {
                Ok(())
            }
        };
        empty("variants", self.variants.len())?;
        empty("objects", self.objects.len())?;
        empty("inits", self.inits.len())?;
        empty("displacements_m", self.displacements().len())?;
        empty("seeds", self.seeds.len())?;
        // every cell shares the checks of one scenario file
        for &d in &self.displacements() {
            self.scenario(self.variants[0], self.objects[0], self.inits[0], d, self.seeds[0])
                .validate()
                .map_err(|e| HarnessError::Matrix(e.to_string()))?;
        }
        Ok(())
    }

    fn scenario(&self, variant: Variant, object: ObjectChoice, init: InitConfig, displacement: f64, seed: u64) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::new(self.kind, object, init, displacement, variant, seed);
        cfg.duration = self.duration_s;
        cfg.controller = self.controller.clone();
        cfg.sim = self.sim.clone();
        cfg.fields = self.fields.clone();
        cfg.impact_map = self.impact_map.clone();
        cfg
    }

    /// Every rollout of the batch, in cell order (variant slowest, seed
    /// fastest).
    pub fn cells(&self) -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for &v in &self.variants {
            for &o in &self.objects {
                for &i in &self.inits {
                    for d in self.displacements() {
                        for &s in &self.seeds {
                            out.push(self.scenario(v, o, i, d, s));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Outcome of one rollout in a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub index: usize,
    pub config: ScenarioConfig,
    pub max_target_accel: f64,
    pub switch_step: Option<usize>,
    /// Step at which each robot's impact was first reported.
    pub detection_steps: Vec<Option<usize>>,
    /// First load-carrying contact step per robot.
    pub contact_steps: Vec<Option<usize>>,
    pub mirror_at_first_contact: Option<f64>,
    pub min_gap: Option<f64>,
    pub failure: Option<String>,
}

impl CellResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grouping {
    Object,
    Init,
    Displacement,
    Overall,
}

impl Grouping {
    pub const ALL: [Grouping; 4] = [Grouping::Object, Grouping::Init, Grouping::Displacement, Grouping::Overall];

    pub fn name(self) -> &'static str {
        match self {
            Grouping::Object => "object",
            Grouping::Init => "init",
            Grouping::Displacement => "displacement",
            Grouping::Overall => "overall",
        }
    }

    fn key(self, cfg: &ScenarioConfig) -> String {
        match self {
            Grouping::Object => cfg.object.name().to_string(),
            Grouping::Init => cfg.init.name().to_string(),
            Grouping::Displacement => format!("{:+.0}mm", cfg.displacement * 1000.0),
            Grouping::Overall => "all".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub variant: Variant,
    pub group_key: String,
    pub mean_max_target_accel: f64,
    pub n: usize,
    /// Sample standard deviation; 0 for a single rollout.
    pub std: f64,
}

pub const SUMMARY_HEADER: &str = "variant,group_key,mean_max_target_accel,n,std";

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.variant.name(), r.group_key, r.mean_max_target_accel, r.n, r.std);
    }
    s
}

pub fn summary_from_csv(text: &str) -> Result<Vec<SummaryRow>, HarnessError> {
    let bad = |line: usize, msg: &str| HarnessError::LogParse(super::LogParseError::Row { line, msg: msg.to_string() });
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SUMMARY_HEADER => {}
        Some(_) => return Err(HarnessError::LogParse(super::LogParseError::Header)),
        None => return Err(HarnessError::LogParse(super::LogParseError::Empty)),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(idx + 1, "expected 5 fields"));
        }
        let variant = Variant::ALL
            .into_iter()
            .find(|v| v.name() == f[0])
            .ok_or_else(|| bad(idx + 1, "unknown variant"))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(idx + 1, "not a number"));
        rows.push(SummaryRow {
            variant,
            group_key: f[1].to_string(),
            mean_max_target_accel: num(f[2])?,
            n: f[3].parse().map_err(|_| bad(idx + 1, "bad count"))?,
            std: num(f[4])?,
        });
    }
    if rows.is_empty() {
        return Err(HarnessError::LogParse(super::LogParseError::Empty));
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct AblationReport {
    pub matrix: AblationMatrix,
    pub cells: Vec<CellResult>,
}

impl AblationReport {
    pub fn failed(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.failed())
    }

    /// Rows ordered by variant (matrix order), then by first appearance of
    /// the group key in cell order. Failed rollouts are left out.
    pub fn summary(&self, grouping: Grouping) -> Vec<SummaryRow> {
        let mut keys: Vec<String> = Vec::new();
        let mut values: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for c in self.cells.iter().filter(|c| !c.failed()) {
            let key = grouping.key(&c.config);
            let ki = match keys.iter().position(|k| *k == key) {
                Some(i) => i,
                None => {
                    keys.push(key);
                    keys.len() - 1
                }
            };
            let vi = self.matrix.variants.iter().position(|v| *v == c.config.variant).expect("variant from matrix");
            values.entry((vi, ki)).or_default().push(c.max_target_accel);
        }
        values
            .into_iter()
            .map(|((vi, ki), xs)| {
                let n = xs.len();
                let mean = xs.iter().sum::<f64>() / n as f64;
                let std = if n > 1 {
                    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                } else {
                    0.0
                };
                SummaryRow {
                    variant: self.matrix.variants[vi],
                    group_key: keys[ki].clone(),
                    mean_max_target_accel: mean,
                    n,
                    std,
                }
            })
            .collect()
    }

    /// Groups where `variant` does not have the strictly lowest mean, as
    /// readable messages. Empty when the ordering holds everywhere.
    pub fn ordering_violations(&self, variant: Variant) -> Vec<String> {
        let mut out = Vec::new();
        for g in Grouping::ALL {
            let rows = self.summary(g);
            for own in rows.iter().filter(|r| r.variant == variant) {
                for other in rows.iter().filter(|r| r.variant != variant && r.group_key == own.group_key) {
                    if !(own.mean_max_target_accel < other.mean_max_target_accel) {
                        out.push(format!(
                            "{} {}: {} {:.4} >= {} {:.4}",
                            g.name(),
                            own.group_key,
                            variant.name(),
                            own.mean_max_target_accel,
                            other.variant.name(),
                            other.mean_max_target_accel
                        ));
                    }
                }
            }
        }
        out
    }

    pub fn rollouts_csv(&self) -> String {
        let mut s = String::from(
            "cell,variant,object,init,displacement_m,seed,max_target_accel,switch_step,first_detection_r1,first_detection_r2,first_contact_r1,first_contact_r2,failure\n",
        );
        let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
        for c in &self.cells {
            let det = |i: usize| opt(c.detection_steps.get(i).copied().flatten());
            let con = |i: usize| opt(c.contact_steps.get(i).copied().flatten());
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                c.index,
                c.config.variant.name(),
                c.config.object.name(),
                c.config.init.name(),
                c.config.displacement,
                c.config.seed,
                c.max_target_accel,
                opt(c.switch_step),
                det(0),
                det(1),
                con(0),
                con(1),
                c.failure.as_deref().unwrap_or("").replace([',', '\n'], ";")
            );
        }
        s
    }

    /// Writes the rollout table and one summary per grouping into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("rollouts.csv");
        std::fs::write(&path, self.rollouts_csv()).map_err(io_err(&path))?;
        for g in Grouping::ALL {
            let path = dir.join(format!("summary_{}.csv", g.name()));
            std::fs::write(&path, summary_to_csv(&self.summary(g))).map_err(io_err(&path))?;
        }
        Ok(())
    }
}

/// Runs every cell of the matrix on `jobs` worker threads. Impact datasets
/// are generated once per distinct map. A rollout that fails is reported
/// in its cell; configuration errors abort the batch.
pub fn run_ablation(matrix: &AblationMatrix, jobs: usize) -> Result<AblationReport, HarnessError> {
    matrix.validate()?;
    let cells = matrix.cells();
    let mut datasets: BTreeMap<String, Arc<ImpactDataset>> = BTreeMap::new();
    for cfg in &cells {
        if cfg.variant.uses_impact_map() {
            let h = cfg.map_hash();
            if !datasets.contains_key(&h) {
                datasets.insert(h, Arc::new(impact_dataset(cfg)?));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Matrix(format!("worker pool: {e}")))?;
    let results: Vec<CellResult> = pool.install(|| {
        cells
            .into_par_iter()
            .enumerate()
            .map(|(index, cfg)| {
                let ds = datasets.get(&cfg.map_hash()).cloned();
                match run_rollout(&cfg, ds) {
                    Ok(log) => CellResult {
                        index,
                        max_target_accel: log.max_target_norm(),
                        switch_step: log.switch_step,
                        detection_steps: log.detection_steps.clone(),
                        contact_steps: log.first_contact_steps(),
                        mirror_at_first_contact: log.mirror_distance_at_first_contact(),
                        min_gap: log.min_gap(),
                        failure: log.failure.map(|(k, m)| format!("step {k}: {m}")),
                        config: cfg,
                    },
                    Err(e) => CellResult {
                        index,
                        max_target_accel: f64::NAN,
                        switch_step: None,
                        detection_steps: Vec::new(),
                        contact_steps: Vec::new(),
                        mirror_at_first_contact: None,
                        min_gap: None,
                        failure: Some(e.to_string()),
                        config: cfg,
                    },
                }
            })
            .collect()
    });
    for c in results.iter().filter(|c| c.failed()) {
        log::warn!("cell {} failed: {}", c.index, c.failure.as_deref().unwrap_or(""));
    }
    Ok(AblationReport {
        matrix: matrix.clone(),
        cells: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matrix_shape() {
        let m = AblationMatrix::from_json(r#"{"kind": "hit_and_push"}"#).unwrap();
        assert_eq!(m, AblationMatrix::full(ScenarioKind::HitAndPush));
        let cells = m.cells();
        assert_eq!(cells.len(), 4 * 3 * 3 * 3 * 5);
        assert_eq!(cells[0].seed, 1);
        assert_eq!(cells[4].seed, 5);
        assert_eq!(cells[5].displacement, 0.0);
        assert_eq!(AblationMatrix::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(AblationMatrix::from_json(r#"{"kind": "dual_arm_grab", "seeds": []}"#).is_err());
        assert!(AblationMatrix::from_json(r#"{"kind": "dual_arm_grab", "displacements_m": [0.2]}"#).is_err());
        assert!(AblationMatrix::from_json(r#"{"kind": "dual_arm_grab", "duration_s": 1.0}"#).is_err());
        assert!(AblationMatrix::from_json("[]").is_err());
    }

    fn fake(variant: Variant, object: ObjectChoice, seed: u64, v: f64) -> CellResult {
        CellResult {
            index: 0,
            config: ScenarioConfig::new(ScenarioKind::HitAndPush, object, InitConfig::A, 0.0, variant, seed),
            max_target_accel: v,
            switch_step: None,
            detection_steps: vec![None],
            contact_steps: vec![None],
            mirror_at_first_contact: None,
            min_gap: None,
            failure: None,
        }
    }

    #[test]
    fn summaries_group_and_skip_failures() {
        let mut m = AblationMatrix::full(ScenarioKind::HitAndPush);
        m.variants = vec![Variant::Proposed, Variant::NoRs];
        let mut bad = fake(Variant::NoRs, ObjectChoice::Juice, 3, 100.0);
        bad.failure = Some("diverged".into());
        let report = AblationReport {
            matrix: m,
            cells: vec![
                fake(Variant::Proposed, ObjectChoice::Juice, 1, 1.0),
                fake(Variant::Proposed, ObjectChoice::Juice, 2, 3.0),
                fake(Variant::NoRs, ObjectChoice::Parcel, 1, 4.0),
                fake(Variant::NoRs, ObjectChoice::Juice, 2, 6.0),
                bad,
            ],
        };
        let by_object = report.summary(Grouping::Object);
        assert_eq!(by_object.len(), 3);
        assert_eq!(by_object[0].group_key, "juice");
        assert_eq!(by_object[0].mean_max_target_accel, 2.0);
        assert_eq!(by_object[0].std, 2f64.sqrt());
        assert_eq!((by_object[1].variant, by_object[1].group_key.as_str(), by_object[1].n), (Variant::NoRs, "juice", 1));
        assert_eq!(by_object[2].group_key, "parcel");
        let overall = report.summary(Grouping::Overall);
        assert_eq!(overall[1].mean_max_target_accel, 5.0);
        assert_eq!(report.failed().count(), 1);
        assert!(report.ordering_violations(Variant::Proposed).is_empty());
        let v = report.ordering_violations(Variant::NoRs);
        assert_eq!(v.len(), 4, "{v:?}");
        assert!(v[0].starts_with("object juice: no_rs"));
        let csv = summary_to_csv(&by_object);
        assert_eq!(summary_from_csv(&csv).unwrap(), by_object);
        assert!(report.rollouts_csv().lines().nth(5).unwrap().ends_with(",diverged"));
    }

    #[test]
    fn single_cell_batch() {
        let mut m = AblationMatrix::full(ScenarioKind::HitAndPush);
        m.variants = vec![Variant::NoRs];
        m.objects = vec![ObjectChoice::Parcel];
        m.inits = vec![InitConfig::C];
        m.displacements_m = Some(vec![0.0]);
        m.seeds = vec![7];
        let r = run_ablation(&m, 1).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert!(!r.cells[0].failed());
        let s = r.summary(Grouping::Overall);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mean_max_target_accel, r.cells[0].max_target_accel);
        assert_eq!(s[0].n, 1);
    }
}
