use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    energy_score, ensemble_disagreement, mahalanobis_distance, mc_dropout_entropy, msp, scale_logits,
    MahalanobisParams, TemperatureParam, UqError,
};
use crate::csvfmt::{parse_f64, sig9};
use crate::model::{apply_gate, predict, ModelState, GATE, INFERENCE_CHUNK};
use crate::numerics::{softmax_slice, SeededRng, Tensor};
use crate::skeldata::DatasetBundle;

pub const SCORE_HEADER: &str =
    "index,domain,label,pred,correct,msp,msp_temp,mc_entropy,disagreement,energy,mahalanobis";

/// The columns of a score table, in file order after `correct`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Msp,
    MspTemp,
    McEntropy,
    Disagreement,
    Energy,
    Mahalanobis,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 6] = [
        ScoreKind::Msp,
        ScoreKind::MspTemp,
        ScoreKind::McEntropy,
        ScoreKind::Disagreement,
        ScoreKind::Energy,
        ScoreKind::Mahalanobis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Msp => "msp",
            ScoreKind::MspTemp => "msp_temp",
            ScoreKind::McEntropy => "mc_entropy",
            ScoreKind::Disagreement => "disagreement",
            ScoreKind::Energy => "energy",
            ScoreKind::Mahalanobis => "mahalanobis",
        }
    }
}

/// Which pooled features the Mahalanobis detector sees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    /// `z`, before the gate.
    #[default]
    PreGate,
    /// `σ(α) ⊙ z`; identical to `z` for an ungated model.
    PostGate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub index: usize,
    pub label: usize,
    pub pred: usize,
    pub correct: bool,
    pub msp: f64,
    pub msp_temp: f64,
    pub mc_entropy: f64,
    pub disagreement: f64,
    pub energy: f64,
    pub mahalanobis: f64,
}

impl ScoreRow {
    /// The raw column value.
    pub fn value(&self, kind: ScoreKind) -> f64 {
        match kind {
            ScoreKind::Msp => self.msp,
            ScoreKind::MspTemp => self.msp_temp,
            ScoreKind::McEntropy => self.mc_entropy,
            ScoreKind::Disagreement => self.disagreement,
            ScoreKind::Energy => self.energy,
            ScoreKind::Mahalanobis => self.mahalanobis,
        }
    }

    /// Detector score oriented so that higher means more out-of-distribution:
    /// `1 − msp` for the probability columns, the value itself otherwise.
    pub fn ood_score(&self, kind: ScoreKind) -> f64 {
        match kind {
            ScoreKind::Msp | ScoreKind::MspTemp => 1.0 - self.value(kind),
            _ => self.value(kind),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub domain: String,
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn accuracy(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.correct).count() as f64 / self.rows.len() as f64
    }

    pub fn column(&self, kind: ScoreKind) -> Vec<f64> {
        self.rows.iter().map(|r| r.value(kind)).collect()
    }

    pub fn ood_scores(&self, kind: ScoreKind) -> Vec<f64> {
        self.rows.iter().map(|r| r.ood_score(kind)).collect()
    }

    pub fn correct(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.correct).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(SCORE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                r.index,
                self.domain,
                r.label,
                r.pred,
                u8::from(r.correct)
            );
            for kind in ScoreKind::ALL {
                out.push(',');
                out.push_str(&sig9(r.value(kind)));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, UqError> {
        let mut lines = text.lines();
        if lines.next() != Some(SCORE_HEADER) {
            return Err(UqError::Csv("unexpected header".into()));
        }
        let mut domain = String::new();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let bad = || UqError::Csv(format!("row {n}: {line:?}"));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 11 {
                return Err(bad());
            }
            if n == 0 {
                domain = f[1].to_string();
            } else if f[1] != domain {
                return Err(bad());
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
            let num = |s: &str| parse_f64(s).ok_or_else(bad);
            rows.push(ScoreRow {
                index: int(f[0])?,
                label: int(f[2])?,
                pred: int(f[3])?,
                correct: match f[4] {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad()),
                },
                msp: num(f[5])?,
                msp_temp: num(f[6])?,
                mc_entropy: num(f[7])?,
                disagreement: num(f[8])?,
                energy: num(f[9])?,
                mahalanobis: num(f[10])?,
            });
        }
        Ok(Self { domain, rows })
    }

    pub fn write(&self, path: &Path) -> Result<(), UqError> {
        std::fs::write(path, self.to_csv()).map_err(|source| UqError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Everything a score table is computed from. Columns outside `requested`
/// are written as NaN; a requested column whose source is missing is an
/// error.
#[derive(Clone, Copy, Debug)]
pub struct ScoreSources<'a> {
    pub model: &'a ModelState,
    pub requested: &'a [ScoreKind],
    /// Ensemble members for the disagreement column; at least two.
    pub ensemble: Option<&'a [ModelState]>,
    pub temperature: Option<&'a TemperatureParam>,
    pub mahalanobis: Option<&'a MahalanobisParams>,
    pub mc_passes: Option<usize>,
    pub energy_temperature: f64,
    pub features: FeatureSpace,
}

/// Pooled features of `samples` in the requested space.
pub fn pooled_features(
    state: &ModelState,
    samples: &[crate::skeldata::SkeletonSequence],
    space: FeatureSpace,
) -> Result<Tensor, UqError> {
    let out = predict(state, samples, INFERENCE_CHUNK)?;
    match (space, state.is_gated()) {
        (FeatureSpace::PostGate, true) => {
            let alpha = state.get(GATE).expect("gated model holds a gate");
            Ok(apply_gate(&out.features, alpha)?)
        }
        _ => Ok(out.features),
    }
}

fn need<T>(requested: bool, source: Option<T>, name: &'static str) -> Result<Option<T>, UqError> {
    match (requested, source) {
        (false, _) => Ok(None),
        (true, None) => Err(UqError::MissingArtifact(name)),
        (true, some) => Ok(some),
    }
}

/// Scores every sample of `bundle`. MC-dropout masks come from `rng`, so a
/// fixed seed gives identical tables.
pub fn build_score_table(
    sources: &ScoreSources,
    bundle: &DatasetBundle,
    rng: &SeededRng,
) -> Result<ScoreTable, UqError> {
    let wants = |k: ScoreKind| sources.requested.contains(&k);
    let temperature = need(wants(ScoreKind::MspTemp), sources.temperature, "temperature")?;
    let mahalanobis = need(
        wants(ScoreKind::Mahalanobis),
        sources.mahalanobis,
        "mahalanobis parameters",
    )?;
    let ensemble = need(wants(ScoreKind::Disagreement), sources.ensemble, "ensemble members")?;
    let passes = need(wants(ScoreKind::McEntropy), sources.mc_passes, "mc pass count")?;
    if let Some(members) = ensemble {
        if members.len() < 2 {
            return Err(UqError::TooFewMembers(members.len()));
        }
    }
    let domain = bundle.domain_spec.kind.tag().to_string();
    let samples = &bundle.sequences;
    if samples.is_empty() {
        return Ok(ScoreTable {
            domain,
            rows: Vec::new(),
        });
    }
    let classes = sources.model.config.classes;

    let base = predict(sources.model, samples, INFERENCE_CHUNK)?;
    let features = match mahalanobis {
        Some(_) => Some(pooled_features(sources.model, samples, sources.features)?),
        None => None,
    };
    let mc = match passes {
        Some(n) => Some(mc_dropout_entropy(sources.model, samples, n, rng)?.1),
        None => None,
    };
    let members = ensemble
        .map(|ms| {
            ms.iter()
                .map(|m| {
                    let out = predict(m, samples, INFERENCE_CHUNK)?;
                    Ok(out.logits.data().chunks(classes).map(softmax_slice).collect::<Vec<_>>())
                })
                .collect::<Result<Vec<_>, UqError>>()
        })
        .transpose()?;

    let mut rows = Vec::with_capacity(samples.len());
    for (i, (logits, seq)) in base.logits.data().chunks(classes).zip(samples).enumerate() {
        let probs = softmax_slice(logits);
        let pred = crate::model::argmax(logits);
        let msp_temp = match temperature {
            Some(t) => msp(&softmax_slice(&scale_logits(logits, t.t_star)?))?,
            None => f64::NAN,
        };
        let disagreement = match &members {
            Some(m) => ensemble_disagreement(&m.iter().map(|p| p[i].clone()).collect::<Vec<_>>())?,
            None => f64::NAN,
        };
        let maha = match (&features, mahalanobis) {
            (Some(f), Some(params)) => {
                let d = f.shape()[1];
                mahalanobis_distance(&f.data()[i * d..(i + 1) * d], params)?
            }
            _ => f64::NAN,
        };
        rows.push(ScoreRow {
            index: i,
            label: seq.label,
            pred,
            correct: pred == seq.label,
            msp: msp(&probs)?,
            msp_temp,
            mc_entropy: mc.as_ref().map_or(f64::NAN, |h| h[i]),
            disagreement,
            energy: energy_score(logits, sources.energy_temperature)?,
            mahalanobis: maha,
        });
    }
    Ok(ScoreTable { domain, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::skeldata::{generate_domain, DomainSpec, SplitTag};
    use crate::uq::{fit_mahalanobis, fit_temperature};

    fn tiny(seed: u64) -> ModelState {
        let mut cfg = ModelConfig::desk(3, 2, seed);
        cfg.d_model = 8;
        cfg.heads = 2;
        cfg.layers = 1;
        ModelState::init(&cfg).unwrap()
    }

    #[test]
    fn table_is_deterministic_and_consistent() {
        let spec = DomainSpec::source3d(3, 2, 1);
        let train = generate_domain(&spec, 30, &SeededRng::new(2), SplitTag::Train).unwrap();
        let test = generate_domain(&spec, 7, &SeededRng::new(3), SplitTag::Test).unwrap();
        let model = tiny(4);
        let ensemble = vec![model.clone(), tiny(5)];
        let feats = pooled_features(&model, &train.sequences, FeatureSpace::PreGate).unwrap();
        let maha = fit_mahalanobis(feats.data(), &train.labels(), 3, 8).unwrap();
        let val = predict(&model, &train.sequences, 8).unwrap();
        let temp = fit_temperature(val.logits.data(), &train.labels(), 3).unwrap();
        let sources = ScoreSources {
            model: &model,
            requested: &ScoreKind::ALL,
            ensemble: Some(&ensemble),
            temperature: Some(&temp),
            mahalanobis: Some(&maha),
            mc_passes: Some(3),
            energy_temperature: 1.0,
            features: FeatureSpace::PreGate,
        };
        let a = build_score_table(&sources, &test, &SeededRng::new(6)).unwrap();
        let b = build_score_table(&sources, &test, &SeededRng::new(6)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 7);
        let logits = predict(&model, &test.sequences, 4).unwrap().logits;
        for (r, row) in a.rows.iter().zip(logits.data().chunks(3)) {
            assert_eq!(r.correct, crate::model::argmax(row) == r.label);
            assert!((0.0..=1.0).contains(&r.msp) && r.mc_entropy <= 3f64.ln() + 1e-12);
            assert!(r.mahalanobis >= 0.0 && r.disagreement >= 0.0);
        }
        let csv = a.to_csv();
        assert!(csv.starts_with(SCORE_HEADER));
        let back = ScoreTable::from_csv(&csv).unwrap();
        assert_eq!(back.domain, "source3d");
        assert_eq!(back.correct(), a.correct());
        assert_eq!(back.to_csv(), csv);

        let missing = ScoreSources {
            temperature: None,
            ..sources
        };
        assert!(matches!(
            build_score_table(&missing, &test, &SeededRng::new(6)),
            Err(UqError::MissingArtifact(_))
        ));
        let single = ScoreSources {
            ensemble: Some(&ensemble[..1]),
            ..sources
        };
        assert!(build_score_table(&single, &test, &SeededRng::new(6)).is_err());
        let partial = ScoreSources {
            requested: &[ScoreKind::Msp, ScoreKind::Energy],
            temperature: None,
            ..sources
        };
        let t = build_score_table(&partial, &test, &SeededRng::new(6)).unwrap();
        assert!(t.rows.iter().all(|r| r.msp_temp.is_nan() && r.mc_entropy.is_nan()));
        assert_eq!(t.column(ScoreKind::Msp), a.column(ScoreKind::Msp));
        assert_eq!(ScoreTable::from_csv(&t.to_csv()).unwrap().to_csv(), t.to_csv());
        let empty = DatasetBundle::new(
            Vec::new(),
            test.class_names.clone(),
            test.domain_spec.clone(),
            SplitTag::Test,
        )
        .unwrap();
        assert!(build_score_table(&sources, &empty, &SeededRng::new(6))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn ood_orientation() {
        let row = ScoreRow {
            index: 0,
            label: 0,
            pred: 0,
            correct: true,
            msp: 0.9,
            msp_temp: 0.8,
            mc_entropy: 0.3,
            disagreement: 0.1,
            energy: -4.0,
            mahalanobis: 2.0,
        };
        assert!((row.ood_score(ScoreKind::Msp) - 0.1).abs() < 1e-15);
        assert_eq!(row.ood_score(ScoreKind::Energy), -4.0);
        assert!(ScoreTable::from_csv("bad\n").is_err());
    }
}
