//! Config-driven runs: simulate, fit, predict, calibrate, evaluate
//! policies and write diagnostics into one output directory, with a
//! manifest of every artifact.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{best_linear_predictor, CalibrationOptions};
use crate::cohort::{load_cohort_as, Cohort, Provenance, Schema};
use crate::diagnostics::{
    cate_by_ventile, cate_surface, los_by_ventile, overlap_report, write_los, write_surfaces,
    write_ventile_summaries, SurfaceSpec,
};
use crate::error::{Error, Result};
use crate::forest::{fit_causal_forest, load_model, save_model, CausalForestModel, ForestConfig, TauEstimate};
use crate::policy::{evaluate, PolicySpec};
use crate::report::{emit_report, ReportFormat};
use crate::rng::{derive_seed, Domain};
use crate::synth::{export_synthetic, generate, oracle_path, DGPConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Fit,
    Predict,
    Calibrate,
    PolicyEval,
    Diagnose,
    All,
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Command::Simulate,
            "fit" => Command::Fit,
            "predict" => Command::Predict,
            "calibrate" => Command::Calibrate,
            "policy-eval" => Command::PolicyEval,
            "diagnose" => Command::Diagnose,
            "all" => Command::All,
            other => return Err(Error::Config(format!("unknown command {other:?}"))),
        })
    }
}

/// Input files. Relative paths resolve against the output directory when
/// absent from the working directory; unset inputs default to the files
/// earlier stages write there.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// Training cohort CSV.
    pub cohort: Option<PathBuf>,
    /// Cohort to predict and evaluate policies on.
    pub evaluation: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub epsilon: f64,
    pub surfaces: Vec<SurfaceSpec>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            epsilon: 0.05,
            surfaces: vec![SurfaceSpec::acuity_by_burden()],
        }
    }
}

fn default_policies() -> Vec<PolicySpec> {
    vec![
        PolicySpec::RiskThreshold {
            threshold: 0.25,
            period: None,
        },
        PolicySpec::CateTopkPerVentile { k: 0.1 },
        PolicySpec::CateTopkPerVentile { k: 0.2 },
        PolicySpec::CateTopkPerVentile { k: 0.5 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the generator and forest seeds when set.
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub threads: Option<usize>,
    /// Size of the synthetic evaluation cohort drawn alongside the training
    /// cohort (the "next year" of a temporal split); 0 evaluates on the
    /// training cohort.
    pub holdout_n: usize,
    pub provenance: Provenance,
    pub inputs: Inputs,
    pub dgp: DGPConfig,
    pub forest: ForestConfig,
    pub calibration: CalibrationOptions,
    #[serde(rename = "policy")]
    pub policies: Vec<PolicySpec>,
    pub diagnostics: DiagnosticsConfig,
    pub report_formats: Vec<ReportFormat>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out: PathBuf::from("out"),
            threads: None,
            holdout_n: 0,
            provenance: Provenance::ObservationalThreshold,
            inputs: Inputs::default(),
            dgp: DGPConfig::default(),
            forest: ForestConfig::default(),
            calibration: CalibrationOptions::default(),
            policies: default_policies(),
            diagnostics: DiagnosticsConfig::default(),
            report_formats: vec![ReportFormat::Csv, ReportFormat::TextTable],
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Check every block; failures are configuration errors.
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::Argument(m) => Error::Config(m),
            other => other,
        };
        self.effective_dgp().validate().map_err(as_config)?;
        self.effective_forest().validate().map_err(as_config)?;
        for p in &self.policies {
            p.validate().map_err(as_config)?;
        }
        if !(self.diagnostics.epsilon > 0.0 && self.diagnostics.epsilon < 0.5) {
            return Err(Error::Config("diagnostics.epsilon must lie in (0, 0.5)".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_dgp(&self) -> DGPConfig {
        match self.seed {
            Some(s) => self.dgp.with_seed(s),
            None => self.dgp.clone(),
        }
    }

    pub fn effective_forest(&self) -> ForestConfig {
        let mut f = self.forest.clone();
        if let Some(s) = self.seed {
            f.seed = s;
        }
        f
    }

    /// SHA-256 of the canonical JSON encoding of the effective config. The
    /// output directory and thread count do not change any emitted byte and
    /// are left out.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.dgp = self.effective_dgp();
        c.forest = self.effective_forest();
        c.seed = None;
        c.out = PathBuf::new();
        c.threads = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn schema(&self) -> Schema {
        Schema::readmission_with_noise(self.dgp.p_extra)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: Command,
    pub config_digest: String,
    pub dgp_seed: u64,
    pub forest_seed: u64,
    pub created_unix: u64,
    pub artifacts: Vec<ArtifactEntry>,
}

struct Run<'a> {
    config: &'a RunConfig,
    out: PathBuf,
    artifacts: Vec<ArtifactEntry>,
    model: Option<CausalForestModel>,
}

const COHORT_FILE: &str = "cohort.csv";
const HOLDOUT_FILE: &str = "holdout.csv";
const MODEL_FILE: &str = "model.bin";
const OOB_FILE: &str = "oob_predictions.csv";
const PREDICTIONS_FILE: &str = "predictions.csv";

pub fn write_predictions<W: Write>(cohort: &Cohort, taus: &[TauEstimate], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["unit_id", "tau_hat", "variance", "tree_count"])?;
    for (u, t) in cohort.units().iter().zip(taus) {
        out.write_record([
            u.unit_id.to_string(),
            t.tau_hat.to_string(),
            t.variance.to_string(),
            t.oob_tree_count.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Read a predictions CSV back into cohort order.
pub fn read_predictions(path: &Path, cohort: &Cohort) -> Result<Vec<f64>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut taus = vec![f64::NAN; cohort.len()];
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let id: u64 = rec
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::value(row, "unit_id is not an integer"))?;
        let tau: f64 = rec
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::value(row, "tau_hat is not a number"))?;
        let pos = cohort
            .position(id)
            .ok_or_else(|| Error::value(row, format!("unit {id} is not in the evaluation cohort")))?;
        taus[pos] = tau;
    }
    Ok(taus)
}

impl<'a> Run<'a> {
    fn record(&mut self, name: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        self.artifacts.push(ArtifactEntry {
            name: name.to_string(),
            path: path.strip_prefix(&self.out).unwrap_or(path).to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn write(&mut self, name: &str, file: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.out.join(file);
        fs::write(&path, contents)?;
        self.record(name, &path)?;
        Ok(path)
    }

    fn input(&self, given: &Option<PathBuf>, default: &str) -> PathBuf {
        match given {
            Some(p) if p.exists() || p.is_absolute() => p.clone(),
            Some(p) => {
                let inside = self.out.join(p);
                if inside.exists() {
                    inside
                } else {
                    p.clone()
                }
            }
            None => self.out.join(default),
        }
    }

    fn training_cohort(&self) -> Result<Cohort> {
        let path = self.input(&self.config.inputs.cohort, COHORT_FILE);
        load_cohort_as(path, &self.config.schema(), self.config.provenance)
    }

    fn evaluation_path(&self) -> PathBuf {
        if self.config.inputs.evaluation.is_some() {
            return self.input(&self.config.inputs.evaluation, HOLDOUT_FILE);
        }
        let holdout = self.out.join(HOLDOUT_FILE);
        if holdout.exists() {
            holdout
        } else {
            self.input(&self.config.inputs.cohort, COHORT_FILE)
        }
    }

    fn evaluation_cohort(&self) -> Result<Cohort> {
        load_cohort_as(self.evaluation_path(), &self.config.schema(), self.config.provenance)
    }

    fn model(&mut self) -> Result<&CausalForestModel> {
        if self.model.is_none() {
            let path = self.input(&self.config.inputs.model, MODEL_FILE);
            self.model = Some(load_model(path, Some(&self.config.schema()))?);
        }
        Ok(self.model.as_ref().expect("just loaded"))
    }

    fn simulate(&mut self) -> Result<()> {
        let dgp = self.config.effective_dgp();
        let synthetic = generate(&dgp)?;
        let path = self.out.join(COHORT_FILE);
        let oracle = export_synthetic(&synthetic, &path)?;
        self.record("cohort", &path)?;
        self.record("cohort_oracle", &oracle)?;
        log::info!("simulated {} units", synthetic.cohort.len());
        if self.config.holdout_n > 0 {
            let seed = derive_seed(dgp.seed, Domain::Holdout, 0);
            let holdout = generate(&DGPConfig {
                n: self.config.holdout_n,
                ..dgp.with_seed(seed)
            })?;
            let path = self.out.join(HOLDOUT_FILE);
            let oracle = export_synthetic(&holdout, &path)?;
            self.record("holdout", &path)?;
            self.record("holdout_oracle", &oracle)?;
            log::info!("simulated {} holdout units", holdout.cohort.len());
        }
        Ok(())
    }

    fn fit(&mut self) -> Result<()> {
        let cohort = self.training_cohort()?;
        let forest = self.config.effective_forest();
        log::info!("fitting {} trees on {} units", forest.n_trees, cohort.len());
        let model = fit_causal_forest(&cohort, &forest)?;
        let path = self.out.join(MODEL_FILE);
        save_model(&model, &path)?;
        self.record("model", &path)?;
        let oob = model.predict_oob(&cohort)?;
        let mut buf = Vec::new();
        write_predictions(&cohort, &oob, &mut buf)?;
        self.write("oob_predictions", OOB_FILE, buf)?;
        self.model = Some(model);
        Ok(())
    }

    fn predict(&mut self) -> Result<()> {
        let cohort = self.evaluation_cohort()?;
        let taus = self.model()?.predict(&cohort)?;
        let mut buf = Vec::new();
        write_predictions(&cohort, &taus, &mut buf)?;
        self.write("predictions", PREDICTIONS_FILE, buf)?;
        Ok(())
    }

    fn calibrate(&mut self) -> Result<()> {
        let cohort = self.training_cohort()?;
        let options = self.config.calibration.clone();
        let model = self.model()?;
        let oob = model.predict_oob(&cohort)?;
        let report = best_linear_predictor(
            &cohort,
            &oob,
            model.oob_outcome(),
            model.oob_propensity(),
            &options,
        )?;
        self.write("calibration", "calibration.json", report.to_json())?;
        self.write("calibration_table", "calibration.txt", report.to_table())?;
        Ok(())
    }

    fn policy_eval(&mut self) -> Result<()> {
        let cohort = self.evaluation_cohort()?;
        let predictions = self.input(&self.config.inputs.predictions, PREDICTIONS_FILE);
        let taus = read_predictions(&predictions, &cohort)?;
        // the model only adds intervals; evaluation works without one
        let model_path = self.input(&self.config.inputs.model, MODEL_FILE);
        let model = if self.model.is_some() || model_path.exists() {
            Some(self.model()?.clone())
        } else {
            None
        };
        let results = self
            .config
            .policies
            .iter()
            .map(|spec| evaluate(spec, &cohort, &taus, model.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        for format in self.config.report_formats.clone() {
            let text = emit_report(&results, format)?;
            let ext = format.extension();
            self.write(&format!("policy_{ext}"), &format!("policy.{ext}"), text)?;
        }

        let oracle = oracle_path(&self.evaluation_path());
        if oracle.exists() {
            let truth = read_oracle_tau(&oracle, &cohort)?;
            let mut out = csv::Writer::from_writer(Vec::new());
            out.write_record(["strategy", "n_treated", "estimated_prevented", "oracle_prevented"])?;
            for r in &results {
                let rows = cohort.positions_of(&r.treated_ids)?;
                let value = -rows.iter().map(|&i| truth[i]).sum::<f64>();
                out.write_record([
                    r.strategy.clone(),
                    r.n_treated.to_string(),
                    r.raw_prevented.to_string(),
                    value.to_string(),
                ])?;
            }
            let bytes = out.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            self.write("policy_oracle", "policy_oracle.csv", bytes)?;
        }
        Ok(())
    }

    fn diagnose(&mut self) -> Result<()> {
        let cohort = self.training_cohort()?;
        let epsilon = self.config.diagnostics.epsilon;
        let surfaces = self.config.diagnostics.surfaces.clone();
        let model = self.model()?.clone();
        let overlap = overlap_report(model.oob_propensity(), &cohort, epsilon)?;
        let mut buf = Vec::new();
        overlap.write_csv(&mut buf)?;
        self.write("overlap", "overlap.csv", buf)?;

        let oob: Vec<f64> = model.predict_oob(&cohort)?.iter().map(|t| t.tau_hat).collect();
        let by_ventile = cate_by_ventile(&oob, cohort.ventiles())?;
        let mut buf = Vec::new();
        write_ventile_summaries(&by_ventile, &mut buf)?;
        self.write("cate_by_ventile", "cate_by_ventile.csv", buf)?;

        let mut grids = Vec::new();
        for spec in &surfaces {
            grids.extend(cate_surface(&model, spec)?);
        }
        let mut buf = Vec::new();
        write_surfaces(&grids, &mut buf)?;
        self.write("cate_surface", "cate_surface.csv", buf)?;

        let mut buf = Vec::new();
        write_los(&los_by_ventile(&cohort), &mut buf)?;
        self.write("los_by_ventile", "los_by_ventile.csv", buf)?;
        Ok(())
    }
}

fn read_oracle_tau(path: &Path, cohort: &Cohort) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut tau = vec![0.0; cohort.len()];
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id: u64 = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::value(k + 1, "unit_id is not an integer"))?;
        let v: f64 = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::value(k + 1, "TRUE_TAU is not a number"))?;
        let pos = cohort
            .position(id)
            .ok_or_else(|| Error::value(k + 1, format!("unit {id} is not in the cohort")))?;
        tau[pos] = v;
    }
    Ok(tau)
}

/// Execute `command` and write `manifest.json` into the output directory.
pub fn run(command: Command, config: &RunConfig) -> Result<Manifest> {
    config.validate()?;
    fs::create_dir_all(&config.out)?;
    let mut state = Run {
        config,
        out: config.out.clone(),
        artifacts: Vec::new(),
        model: None,
    };
    match command {
        Command::Simulate => state.simulate()?,
        Command::Fit => state.fit()?,
        Command::Predict => state.predict()?,
        Command::Calibrate => state.calibrate()?,
        Command::PolicyEval => state.policy_eval()?,
        Command::Diagnose => state.diagnose()?,
        Command::All => {
            if config.inputs.cohort.is_none() {
                state.simulate()?;
            }
            state.fit()?;
            state.predict()?;
            state.calibrate()?;
            state.policy_eval()?;
            state.diagnose()?;
        }
    }
    let manifest = Manifest {
        command,
        config_digest: config.digest(),
        dgp_seed: config.effective_dgp().seed,
        forest_seed: config.effective_forest().seed,
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        artifacts: state.artifacts,
    };
    let path = config.out.join("manifest.json");
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(manifest)
}

/// Process exit code for a run outcome: 0 success, 2 usage or config
/// problems, 1 runtime failures.
pub fn exit_code(result: &Result<Manifest>) -> i32 {
    match result {
        Ok(_) => 0,
        Err(e) if e.is_usage() => 2,
        Err(_) => 1,
    }
}
