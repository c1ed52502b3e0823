use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use ftqnn::arith::{mare, SamplePolicy, EXHAUSTIVE_MAX_WIDTH};
use ftqnn::campaign::{activation_plan, golden_run, weight_ber_trial, CampaignError, CampaignRecord};
use ftqnn::dse::{fortune_search, CostTable, DseError, NetworkEvaluator, SearchConfig, SearchOutcome};
use ftqnn::faults::{BerMode, FaultPlan};
use ftqnn::metrics::{p_drop, rap, PDropInputs, RapInputs};
use ftqnn::net::{evaluate, Dataset, FloatModel, ModelManifest, NetError, NetworkModel};
use ftqnn::quant::QuantTensor;

use crate::config::{
    self, BerModeConfig, CampaignConfig, CharacterizeConfig, DseConfig, FaultKind, Loaded, QuantizeConfig,
    ReportConfig,
};
use crate::output::{csv_body, Provenance};
use crate::CliError;

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn campaign_err(e: CampaignError) -> CliError {
    match e {
        CampaignError::Config(m) => CliError::Config(m),
        other => data(other),
    }
}

fn check_bers(bers: &[f64]) -> Result<(), CliError> {
    match bers.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        Some(b) => Err(CliError::Config(format!("BER {b} outside [0, 1]"))),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct MareRow {
    family: String,
    n: u32,
    t: u32,
    h: u32,
    policy: &'static str,
    samples: u64,
    seed: Option<u64>,
    mare_percent: String,
}

pub fn characterize(path: &Path) -> Result<(), CliError> {
    let loaded: Loaded<CharacterizeConfig> = config::load(path)?;
    let cfg = &loaded.config;
    let mut rows = Vec::new();
    for m in &cfg.multipliers {
        m.validate().map_err(config_err)?;
        let (policy, samples, seed) = match cfg.samples {
            Some(count) => (SamplePolicy::Sampled { count, seed: cfg.seed }, count, Some(cfg.seed)),
            None if m.width <= EXHAUSTIVE_MAX_WIDTH => {
                let nonzero = (1u64 << m.width) - 1;
                (SamplePolicy::Exhaustive, nonzero * nonzero, None)
            }
            None => {
                return Err(CliError::Config(format!(
                    "{m}: exhaustive sweeps stop at width {EXHAUSTIVE_MAX_WIDTH}; set `samples`"
                )))
            }
        };
        let value = mare(m, policy).map_err(config_err)?;
        rows.push(MareRow {
            family: m.family.to_string().to_lowercase(),
            n: m.width,
            t: m.trunc,
            h: m.dup,
            policy: if seed.is_some() { "sampled" } else { "exhaustive" },
            samples,
            seed,
            mare_percent: format!("{value:.6}"),
        });
    }
    let out = loaded.path(&cfg.output);
    let prov = Provenance::new("characterize", path, &loaded.text);
    prov.write(&out, &csv_body(&rows)?)?;
    prov.write_manifest(&out, &[&out])
}

#[derive(Serialize)]
struct QuantRow {
    layer: String,
    bits: u32,
    protected: bool,
    scale: f64,
    params: usize,
    stored_width: u32,
    memory_bits: u64,
    file: String,
}

fn load_float(base: &Loaded<impl Sized>, model: &Path) -> Result<FloatModel, CliError> {
    ModelManifest::load_model(&base.path(model)).map_err(|e| match e {
        NetError::InvalidModel(m) => CliError::Config(m),
        other => data(other),
    })
}

pub fn quantize(path: &Path) -> Result<(), CliError> {
    let loaded: Loaded<QuantizeConfig> = config::load(path)?;
    let cfg = &loaded.config;
    let mut float = load_float(&loaded, &cfg.model)?;
    if let Some(bits) = cfg.bits {
        float = FloatModel::new(
            float.name.clone(),
            bits,
            float.layers.clone(),
            float.weights.clone(),
            float.biases.clone(),
            float.bounds.clone(),
        )
        .map_err(config_err)?;
    }
    let protected = match cfg.protection {
        ftqnn::net::Protection::MsbTriplication => true,
        ftqnn::net::Protection::None => false,
        other => return Err(CliError::Config(format!("`{other}` does not change stored weights"))),
    };
    let dir = loaded.path(&cfg.output_dir);
    let mut rows = Vec::new();
    let mut written = Vec::new();
    for (layer, weights) in float.layers.iter().zip(&float.weights) {
        let tensor = QuantTensor::from_weights(weights, float.weight_bits, protected).map_err(data)?;
        let file = format!("{}.ftqt", layer.id);
        let mut bytes = Vec::new();
        tensor.write_to(&mut bytes).map_err(data)?;
        std::fs::create_dir_all(&dir).map_err(data)?;
        std::fs::write(dir.join(&file), bytes).map_err(data)?;
        rows.push(QuantRow {
            layer: layer.id.clone(),
            bits: float.weight_bits,
            protected,
            scale: tensor.scheme.scale(),
            params: tensor.words.len(),
            stored_width: tensor.stored_width(),
            memory_bits: tensor.memory_bits(),
            file: file.clone(),
        });
        written.push(dir.join(file));
    }
    let out = dir.join("quantize.csv");
    let prov = Provenance::new("quantize", path, &loaded.text);
    prov.write(&out, &csv_body(&rows)?)?;
    let mut outputs: Vec<&Path> = vec![&out];
    outputs.extend(written.iter().map(|p| p.as_path()));
    prov.write_manifest(&out, &outputs)
}

#[derive(Serialize, Deserialize)]
struct CampaignRow {
    ber: Option<f64>,
    seed: u64,
    protection: String,
    golden_acc: f64,
    faulty_acc: f64,
    vulnerability: f64,
    sdc1: f64,
    sdc10: f64,
    fault_coverage: f64,
    memory_bits: u64,
    p_drop: Option<f64>,
    rap: f64,
}

/// Model-level constants for p_drop and rap.
struct Scale {
    params: f64,
    width: f64,
    memory_bits: u64,
    mem_ovh: f64,
    perf_ovh: f64,
}

impl Scale {
    fn of(model: &NetworkModel, costs: CostTable) -> Self {
        let params = model.param_count();
        let baseline_exec = model.mac_count() as f64 * costs.mac;
        Self {
            params: params as f64,
            width: f64::from(model.layers[0].weights.stored_width()),
            memory_bits: model.memory_bits(),
            mem_ovh: model.memory_bits() as f64 / (params * 8) as f64,
            perf_ovh: costs.exec_proxy(model) / baseline_exec,
        }
    }
}

fn campaign_row(
    rec: &CampaignRecord,
    ber: Option<f64>,
    protection: &str,
    scale: &Scale,
    cfg: &CampaignConfig,
) -> CampaignRow {
    let acc_drop = (rec.vulnerability / 100.0).max(0.0);
    CampaignRow {
        ber,
        seed: rec.seed,
        protection: protection.to_string(),
        golden_acc: rec.golden_accuracy,
        faulty_acc: rec.faulty_accuracy,
        vulnerability: rec.vulnerability,
        sdc1: rec.sdc.sdc1,
        sdc10: rec.sdc.sdc10,
        fault_coverage: rec.fault_coverage,
        memory_bits: scale.memory_bits,
        p_drop: ber.map(|ber| {
            p_drop(&PDropInputs {
                params: scale.params,
                width: scale.width,
                lifetime: cfg.p_drop.lifetime,
                test_interval: cfg.p_drop.test_interval,
                p_single: cfg.p_drop.p_single,
                ber,
                acc_drop,
            })
        }),
        rap: rap(&RapInputs { acc_drop, mem_ovh: scale.mem_ovh, perf_ovh: scale.perf_ovh }),
    }
}

fn load_dataset(loaded: &Loaded<impl Sized>, p: &Path) -> Result<Dataset, CliError> {
    Dataset::load(&loaded.path(p)).map_err(data)
}

pub fn campaign(path: &Path) -> Result<(), CliError> {
    let loaded: Loaded<CampaignConfig> = config::load(path)?;
    let cfg = &loaded.config;
    if cfg.protections.is_empty() {
        return Err(CliError::Config("`protections` is empty".into()));
    }
    let mut float = load_float(&loaded, &cfg.model)?;
    if let Some(backend) = cfg.backend {
        backend.validate().map_err(config_err)?;
        float = float.with_backend(backend);
    }
    if let Some(bits) = cfg.weight_bits {
        float = float.with_weight_bits(bits);
    }
    let calib = load_dataset(&loaded, &cfg.calibration)?;
    let test = load_dataset(&loaded, &cfg.test)?;
    let plan = match &cfg.fault_plan {
        Some(p) => {
            if cfg.ber_grid.is_some() || cfg.seeds.is_some() {
                return Err(CliError::Config("`fault_plan` excludes `ber_grid` and `seeds`".into()));
            }
            let text = std::fs::read_to_string(loaded.path(p)).map_err(|e| data(format!("{}: {e}", p.display())))?;
            Some(FaultPlan::parse(&text).map_err(data)?)
        }
        None => None,
    };
    let seeds = match (&plan, &cfg.seeds) {
        (Some(_), _) => Vec::new(),
        (None, Some(s)) => s.to_vec(),
        (None, None) => return Err(CliError::Config("missing `seeds`".into())),
    };
    let mode = match cfg.ber_mode {
        BerModeConfig::Bernoulli => BerMode::Bernoulli,
        BerModeConfig::FixedCount => BerMode::FixedCount,
    };
    let costs = CostTable::from(cfg.costs);

    let mut rows = Vec::new();
    for &protection in &cfg.protections {
        let label = protection.to_string();
        let model = NetworkModel::build(&float.with_protection(protection), &calib).map_err(|e| match e {
            NetError::InvalidModel(m) => CliError::Config(m),
            other => data(other),
        })?;
        let scale = Scale::of(&model, costs);
        let golden = golden_run(&model, &test).map_err(campaign_err)?;
        if let Some(plan) = &plan {
            let faulty = evaluate(&model, &test, plan).map_err(data)?;
            let rec = CampaignRecord::from_eval(&golden, &faulty, plan.ber().unwrap_or(f64::NAN), plan.seed(), plan.len());
            rows.push(campaign_row(&rec, plan.ber(), &label, &scale, cfg));
            continue;
        }
        match cfg.fault {
            FaultKind::WeightBer => {
                let bers = cfg.ber_grid.as_deref().ok_or_else(|| CliError::Config("missing `ber_grid`".into()))?;
                check_bers(bers)?;
                for &ber in bers {
                    for &seed in &seeds {
                        let rec = weight_ber_trial(&model, &test, &golden, ber, seed, mode).map_err(campaign_err)?;
                        rows.push(campaign_row(&rec, Some(ber), &label, &scale, cfg));
                    }
                }
            }
            FaultKind::Activation => {
                let [lo, hi] = cfg
                    .activation_bits
                    .ok_or_else(|| CliError::Config("activation campaigns need `activation_bits`".into()))?;
                for &seed in &seeds {
                    let plan = activation_plan(&model, test.len(), lo..hi, cfg.flips_per_sample, seed)
                        .map_err(campaign_err)?;
                    let faulty = evaluate(&model, &test, &plan).map_err(data)?;
                    let rec = CampaignRecord::from_eval(&golden, &faulty, f64::NAN, seed, plan.len());
                    rows.push(campaign_row(&rec, None, &label, &scale, cfg));
                }
            }
        }
    }
    let out = loaded.path(&cfg.output);
    let prov = Provenance::new("campaign", path, &loaded.text);
    prov.write(&out, &csv_body(&rows)?)?;
    prov.write_manifest(&out, &[&out])
}

pub fn dse(path: &Path) -> Result<(), CliError> {
    let loaded: Loaded<DseConfig> = config::load(path)?;
    let cfg = &loaded.config;
    check_bers(&cfg.ber_grid)?;
    let search = SearchConfig {
        accuracy_threshold: cfg.accuracy_threshold,
        reliability_threshold: cfg.reliability_threshold,
        min_bits: cfg.min_bits,
        max_bits: cfg.max_bits,
        ber_grid: cfg.ber_grid.clone(),
        seeds: cfg.seeds.to_vec(),
    };
    search.validate().map_err(config_err)?;
    let float = load_float(&loaded, &cfg.model)?;
    let calib = load_dataset(&loaded, &cfg.calibration)?;
    let test = load_dataset(&loaded, &cfg.test)?;
    let mut evaluator = NetworkEvaluator::new(&float, &calib, &test, cfg.costs.into());
    let outcome = fortune_search(&mut evaluator, &search).map_err(|e| match e {
        DseError::InvalidConfig(m) => CliError::Config(m),
        other => data(other),
    })?;

    let trace = loaded.path(&cfg.trace);
    let summary = loaded.path(&cfg.summary);
    let prov = Provenance::new("dse", path, &loaded.text);
    prov.write(&trace, &outcome.trace().to_csv())?;
    prov.write(&summary, &outcome.summary())?;
    prov.write_manifest(&trace, &[&trace, &summary])?;
    match outcome {
        SearchOutcome::Selected { .. } => Ok(()),
        SearchOutcome::NoPassingWidth { .. } => Err(CliError::NoPassingWidth),
    }
}

#[derive(Serialize)]
struct ReportRow {
    protection: String,
    ber: Option<f64>,
    trials: usize,
    golden_acc: f64,
    mean_faulty_acc: f64,
    mean_vulnerability: f64,
    sd_vulnerability: f64,
    mean_sdc1: f64,
    mean_sdc10: f64,
    mean_fault_coverage: f64,
    memory_bits: u64,
    mean_p_drop: Option<f64>,
    mean_rap: f64,
}

pub fn report(path: &Path) -> Result<(), CliError> {
    let loaded: Loaded<ReportConfig> = config::load(path)?;
    let cfg = &loaded.config;
    if cfg.inputs.is_empty() {
        return Err(CliError::Config("`inputs` is empty".into()));
    }
    // Groups keep first-seen order.
    let mut order: Vec<(String, Option<u64>)> = Vec::new();
    let mut groups: BTreeMap<(String, Option<u64>), Vec<CampaignRow>> = BTreeMap::new();
    for input in &cfg.inputs {
        let p = loaded.path(input);
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(&p)
            .map_err(|e| data(format!("{}: {e}", p.display())))?;
        for row in reader.deserialize::<CampaignRow>() {
            let row = row.map_err(|e| data(format!("{}: {e}", p.display())))?;
            let key = (row.protection.clone(), row.ber.map(f64::to_bits));
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            groups.entry(key).or_default().push(row);
        }
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let mut out_rows = Vec::new();
    for key in order {
        let rows = &groups[&key];
        let col = |f: fn(&CampaignRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
        let vuln = col(|r| r.vulnerability);
        let mv = mean(&vuln);
        let sd = if vuln.len() > 1 {
            (vuln.iter().map(|v| (v - mv).powi(2)).sum::<f64>() / (vuln.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        let p_drops: Option<Vec<f64>> = rows.iter().map(|r| r.p_drop).collect();
        out_rows.push(ReportRow {
            protection: key.0.clone(),
            ber: rows[0].ber,
            trials: rows.len(),
            golden_acc: rows[0].golden_acc,
            mean_faulty_acc: mean(&col(|r| r.faulty_acc)),
            mean_vulnerability: mv,
            sd_vulnerability: sd,
            mean_sdc1: mean(&col(|r| r.sdc1)),
            mean_sdc10: mean(&col(|r| r.sdc10)),
            mean_fault_coverage: mean(&col(|r| r.fault_coverage)),
            memory_bits: rows[0].memory_bits,
            mean_p_drop: p_drops.map(|v| mean(&v)),
            mean_rap: mean(&col(|r| r.rap)),
        });
    }
    let out = loaded.path(&cfg.output);
    let prov = Provenance::new("report", path, &loaded.text);
    prov.write(&out, &csv_body(&out_rows)?)?;
    prov.write_manifest(&out, &[&out])
}
