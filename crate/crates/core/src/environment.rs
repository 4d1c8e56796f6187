//! Value-profile generators.
//!
//! A profile is the vector of effective values `v_k = theta_k c_k` of all
//! agents in one round. Profiles are i.i.d. across rounds for the discrete
//! and parametric models and follow a fixed file for scripted runs.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Stream;

const PROB_TOLERANCE: f64 = 1e-12;
const LOGNORMAL_MAX_TRIES: usize = 10_000;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment: {0}")]
    Invalid(String),
    #[error("support is continuous; exact enumeration unavailable")]
    ContinuousSupport,
    #[error("script exhausted after {0} rounds")]
    ScriptExhausted(usize),
    #[error("failed to read script {path}: {message}")]
    Io { path: String, message: String },
}

/// One atom of a discrete joint distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub values: Vec<f64>,
    pub prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Marginal {
    Uniform {
        a: f64,
        b: f64,
    },
    /// `exp(N(m, s^2))` conditioned on being at most `cap`.
    TruncatedLogNormal {
        m: f64,
        s: f64,
        cap: f64,
    },
    PointMass {
        value: f64,
    },
}

impl Marginal {
    fn validate(&self) -> Result<(), EnvError> {
        let ok = match *self {
            Marginal::Uniform { a, b } => a.is_finite() && b.is_finite() && 0.0 <= a && a <= b,
            Marginal::TruncatedLogNormal { m, s, cap } => {
                m.is_finite() && s > 0.0 && cap.is_finite() && cap > 0.0
            }
            Marginal::PointMass { value } => value.is_finite() && value >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(EnvError::Invalid(format!("bad marginal {self:?}")))
        }
    }

    /// Largest value the marginal can emit.
    pub fn upper(&self) -> f64 {
        match *self {
            Marginal::Uniform { b, .. } => b,
            Marginal::TruncatedLogNormal { cap, .. } => cap,
            Marginal::PointMass { value } => value,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Uniform { a, b } if a == b => a,
            Marginal::Uniform { a, b } => rng.random_range(a..b),
            Marginal::TruncatedLogNormal { m, s, cap } => {
                let dist = LogNormal::new(m, s).expect("validated lognormal parameters");
                for _ in 0..LOGNORMAL_MAX_TRIES {
                    let v = dist.sample(rng);
                    if v <= cap {
                        return v;
                    }
                }
                cap
            }
            Marginal::PointMass { value } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentKind {
    DiscreteJoint {
        support: Vec<Atom>,
    },
    IidParametric {
        marginals: Vec<Marginal>,
    },
    /// Row `t` is the profile of round `t`.
    Scripted {
        rows: Vec<Vec<f64>>,
    },
}

/// An immutable profile generator for `n_agents` agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentModel {
    pub kind: EnvironmentKind,
    pub n_agents: usize,
    /// Declared per-agent upper bounds on values.
    pub vbar: Vec<f64>,
}

impl EnvironmentModel {
    /// Builds and validates a model. `vbar` defaults to the largest value
    /// each agent can receive.
    pub fn new(kind: EnvironmentKind, vbar: Option<Vec<f64>>) -> Result<Self, EnvError> {
        let n_agents = match &kind {
            EnvironmentKind::DiscreteJoint { support } => {
                support.first().map(|a| a.values.len()).unwrap_or(0)
            }
            EnvironmentKind::IidParametric { marginals } => marginals.len(),
            EnvironmentKind::Scripted { rows } => rows.first().map(Vec::len).unwrap_or(0),
        };
        let mut model = Self {
            kind,
            n_agents,
            vbar: Vec::new(),
        };
        let support_max = model.support_max()?;
        model.vbar = vbar.unwrap_or(support_max);
        model.validate()?;
        Ok(model)
    }

    pub fn discrete(support: Vec<Atom>) -> Result<Self, EnvError> {
        Self::new(EnvironmentKind::DiscreteJoint { support }, None)
    }

    pub fn iid(marginals: Vec<Marginal>) -> Result<Self, EnvError> {
        Self::new(EnvironmentKind::IidParametric { marginals }, None)
    }

    pub fn scripted(rows: Vec<Vec<f64>>) -> Result<Self, EnvError> {
        Self::new(EnvironmentKind::Scripted { rows }, None)
    }

    /// Reads a `round,agent_0,...,agent_{n-1}` CSV.
    pub fn from_profile_csv(path: &Path) -> Result<Self, EnvError> {
        let (header, rows) = read_csv(path)?;
        if header.first().map(String::as_str) != Some("round")
            || header
                .iter()
                .skip(1)
                .enumerate()
                .any(|(k, h)| *h != format!("agent_{k}"))
            || header.len() < 2
        {
            return Err(EnvError::Invalid(format!(
                "{}: expected header round,agent_0,...; got {}",
                path.display(),
                header.join(",")
            )));
        }
        let rows = rows.into_iter().map(|r| r[1..].to_vec()).collect();
        Self::scripted(rows)
    }

    fn support_max(&self) -> Result<Vec<f64>, EnvError> {
        let mut max = vec![0.0f64; self.n_agents];
        let mut fold = |values: &[f64]| {
            for (m, v) in max.iter_mut().zip(values) {
                *m = m.max(*v);
            }
        };
        match &self.kind {
            EnvironmentKind::DiscreteJoint { support } => {
                support.iter().for_each(|a| fold(&a.values))
            }
            EnvironmentKind::IidParametric { marginals } => {
                fold(&marginals.iter().map(Marginal::upper).collect::<Vec<_>>())
            }
            EnvironmentKind::Scripted { rows } => rows.iter().for_each(|r| fold(r)),
        }
        Ok(max)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::Invalid(msg));
        if self.n_agents == 0 {
            return bad("environment has no agents".into());
        }
        if self.vbar.len() != self.n_agents {
            return bad(format!(
                "vbar has {} entries for {} agents",
                self.vbar.len(),
                self.n_agents
            ));
        }
        if self.vbar.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad(format!(
                "vbar entries must be positive, got {:?}",
                self.vbar
            ));
        }
        let check_profile = |values: &[f64], what: &str| -> Result<(), EnvError> {
            if values.len() != self.n_agents {
                return Err(EnvError::Invalid(format!(
                    "{what} has {} values, expected {}",
                    values.len(),
                    self.n_agents
                )));
            }
            for (k, (v, bound)) in values.iter().zip(&self.vbar).enumerate() {
                if !(v.is_finite() && *v >= 0.0 && v <= bound) {
                    return Err(EnvError::Invalid(format!(
                        "{what}: value {v} of agent {k} outside [0, {bound}]"
                    )));
                }
            }
            Ok(())
        };
        match &self.kind {
            EnvironmentKind::DiscreteJoint { support } => {
                if support.is_empty() {
                    return bad("discrete support is empty".into());
                }
                let mut total = 0.0;
                for (i, atom) in support.iter().enumerate() {
                    check_profile(&atom.values, &format!("atom {i}"))?;
                    if !(atom.prob.is_finite() && atom.prob >= 0.0) {
                        return bad(format!("atom {i} has probability {}", atom.prob));
                    }
                    total += atom.prob;
                }
                if (total - 1.0).abs() > PROB_TOLERANCE {
                    return bad(format!("probabilities sum to {total}"));
                }
            }
            EnvironmentKind::IidParametric { marginals } => {
                for (k, m) in marginals.iter().enumerate() {
                    m.validate()?;
                    if m.upper() > self.vbar[k] {
                        return bad(format!(
                            "marginal of agent {k} exceeds vbar {}",
                            self.vbar[k]
                        ));
                    }
                }
            }
            EnvironmentKind::Scripted { rows } => {
                if rows.is_empty() {
                    return bad("script is empty".into());
                }
                for (t, row) in rows.iter().enumerate() {
                    check_profile(row, &format!("script row {t}"))?;
                }
            }
        }
        Ok(())
    }

    pub fn is_enumerable(&self) -> bool {
        self.enumerate_support().is_ok()
    }

    /// Exhaustive list of `(profile, probability)` for discrete models.
    pub fn enumerate_support(&self) -> Result<Vec<Atom>, EnvError> {
        match &self.kind {
            EnvironmentKind::DiscreteJoint { support } => Ok(support.clone()),
            EnvironmentKind::IidParametric { marginals } => {
                let values = marginals
                    .iter()
                    .map(|m| match m {
                        Marginal::PointMass { value } => Ok(*value),
                        _ => Err(EnvError::ContinuousSupport),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(vec![Atom { values, prob: 1.0 }])
            }
            EnvironmentKind::Scripted { .. } => Err(EnvError::ContinuousSupport),
        }
    }

    /// Rounds available from a scripted model.
    pub fn script_len(&self) -> Option<usize> {
        match &self.kind {
            EnvironmentKind::Scripted { rows } => Some(rows.len()),
            _ => None,
        }
    }

    /// Per-episode profile stream.
    pub fn stream(&self, rng: Stream) -> Result<ProfileStream<'_>, EnvError> {
        let weights = match &self.kind {
            EnvironmentKind::DiscreteJoint { support } => Some(
                WeightedIndex::new(support.iter().map(|a| a.prob))
                    .map_err(|e| EnvError::Invalid(e.to_string()))?,
            ),
            _ => None,
        };
        Ok(ProfileStream {
            model: self,
            rng,
            cursor: 0,
            weights,
        })
    }
}

/// Draws the profiles of one episode, one round at a time.
pub struct ProfileStream<'a> {
    model: &'a EnvironmentModel,
    rng: Stream,
    cursor: usize,
    weights: Option<WeightedIndex<f64>>,
}

impl ProfileStream<'_> {
    pub fn sample_profile(&mut self) -> Result<Vec<f64>, EnvError> {
        let profile = match &self.model.kind {
            EnvironmentKind::DiscreteJoint { support } => {
                let weights = self
                    .weights
                    .as_ref()
                    .expect("weights built for discrete models");
                support[weights.sample(&mut self.rng)].values.clone()
            }
            EnvironmentKind::IidParametric { marginals } => {
                marginals.iter().map(|m| m.sample(&mut self.rng)).collect()
            }
            EnvironmentKind::Scripted { rows } => rows
                .get(self.cursor)
                .cloned()
                .ok_or(EnvError::ScriptExhausted(rows.len()))?,
        };
        self.cursor += 1;
        Ok(profile)
    }
}

/// One round of a single-agent adversarial script.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptRound {
    pub value: f64,
    pub competing_bid: f64,
}

/// Own values and highest competing effective bids, oblivious to the
/// bidder's actions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CompetitionScript {
    pub rounds: Vec<ScriptRound>,
}

impl CompetitionScript {
    pub fn new(rounds: Vec<ScriptRound>, vbar: f64) -> Result<Self, EnvError> {
        for (t, r) in rounds.iter().enumerate() {
            let in_range = |x: f64| x.is_finite() && x >= 0.0 && x <= vbar;
            if !(in_range(r.value) && in_range(r.competing_bid)) {
                return Err(EnvError::Invalid(format!(
                    "script round {t} = {r:?} outside [0, {vbar}]"
                )));
            }
        }
        Ok(Self { rounds })
    }

    pub fn from_pairs(pairs: &[(f64, f64)], vbar: f64) -> Result<Self, EnvError> {
        Self::new(
            pairs
                .iter()
                .map(|&(value, competing_bid)| ScriptRound {
                    value,
                    competing_bid,
                })
                .collect(),
            vbar,
        )
    }

    /// Reads a `round,value,competing_bid` CSV.
    pub fn from_csv(path: &Path, vbar: f64) -> Result<Self, EnvError> {
        let (header, rows) = read_csv(path)?;
        if header != ["round", "value", "competing_bid"] {
            return Err(EnvError::Invalid(format!(
                "{}: expected header round,value,competing_bid; got {}",
                path.display(),
                header.join(",")
            )));
        }
        Self::new(
            rows.into_iter()
                .map(|r| ScriptRound {
                    value: r[1],
                    competing_bid: r[2],
                })
                .collect(),
            vbar,
        )
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Two-column profile model: own value and the competing bid as the
    /// value of a second agent (pair it with a truthful bidder).
    pub fn to_model(&self) -> Result<EnvironmentModel, EnvError> {
        EnvironmentModel::scripted(
            self.rounds
                .iter()
                .map(|r| vec![r.value, r.competing_bid])
                .collect(),
        )
    }
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), EnvError> {
    let io = |message: String| EnvError::Io {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io(e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| io(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| io(e.to_string()))?;
        let row = record
            .iter()
            .map(|field| field.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| io(format!("row {line}: {e}")))?;
        if row.len() != header.len() {
            return Err(io(format!(
                "row {line} has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use std::io::Write;

    fn warmup_model() -> EnvironmentModel {
        EnvironmentModel::discrete(vec![
            Atom {
                values: vec![1.0, 0.25],
                prob: 0.5,
            },
            Atom {
                values: vec![1.0, 0.75],
                prob: 0.5,
            },
        ])
        .unwrap()
    }

    #[test]
    fn point_mass_always_same() {
        let model = EnvironmentModel::iid(vec![Marginal::PointMass { value: 1.0 }]).unwrap();
        let mut stream = model.stream(seeded(1)).unwrap();
        for _ in 0..10 {
            assert_eq!(stream.sample_profile().unwrap(), vec![1.0]);
        }
        let support = model.enumerate_support().unwrap();
        assert_eq!(
            support,
            vec![Atom {
                values: vec![1.0],
                prob: 1.0
            }]
        );
    }

    #[test]
    fn discrete_frequencies_match_masses() {
        let model = warmup_model();
        let mut stream = model.stream(seeded(9)).unwrap();
        let draws = 10_000;
        let high = (0..draws)
            .filter(|_| stream.sample_profile().unwrap()[1] == 0.75)
            .count();
        let freq = high as f64 / draws as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq = {freq}");
        assert_eq!(model.enumerate_support().unwrap().len(), 2);
        assert_eq!(model.vbar, vec![1.0, 0.75]);
    }

    #[test]
    fn continuous_models_refuse_enumeration() {
        let model = EnvironmentModel::iid(vec![Marginal::Uniform { a: 0.0, b: 1.0 }]).unwrap();
        assert!(matches!(
            model.enumerate_support(),
            Err(EnvError::ContinuousSupport)
        ));
        let model = EnvironmentModel::scripted(vec![vec![0.5]]).unwrap();
        assert!(matches!(
            model.enumerate_support(),
            Err(EnvError::ContinuousSupport)
        ));
    }

    #[test]
    fn script_exhausts() {
        let model = EnvironmentModel::scripted(vec![vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        let mut stream = model.stream(seeded(0)).unwrap();
        assert_eq!(stream.sample_profile().unwrap(), vec![0.1, 0.2]);
        assert_eq!(stream.sample_profile().unwrap(), vec![0.3, 0.4]);
        assert!(matches!(
            stream.sample_profile(),
            Err(EnvError::ScriptExhausted(2))
        ));
    }

    #[test]
    fn validation_errors() {
        let bad_mass = EnvironmentModel::discrete(vec![Atom {
            values: vec![1.0],
            prob: 0.4,
        }]);
        assert!(matches!(bad_mass, Err(EnvError::Invalid(_))));
        let above_vbar = EnvironmentModel::new(
            EnvironmentKind::IidParametric {
                marginals: vec![Marginal::Uniform { a: 0.0, b: 2.0 }],
            },
            Some(vec![1.0]),
        );
        assert!(above_vbar.is_err());
        let ragged = EnvironmentModel::scripted(vec![vec![0.1, 0.2], vec![0.3]]);
        assert!(ragged.is_err());
    }

    #[test]
    fn lognormal_respects_cap() {
        let m = Marginal::TruncatedLogNormal {
            m: 0.0,
            s: 1.0,
            cap: 1.5,
        };
        let mut rng = seeded(4);
        for _ in 0..2000 {
            let v = m.sample(&mut rng);
            assert!((0.0..=1.5).contains(&v));
        }
    }

    #[test]
    fn reproducible_sequences() {
        let model = EnvironmentModel::iid(vec![
            Marginal::Uniform { a: 0.0, b: 1.0 },
            Marginal::TruncatedLogNormal {
                m: -0.5,
                s: 0.5,
                cap: 2.0,
            },
        ])
        .unwrap();
        let draw = |seed| {
            let mut s = model.stream(seeded(seed)).unwrap();
            (0..50)
                .map(|_| s.sample_profile().unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn csv_loaders() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "round,agent_0,agent_1\n0,0.5,0.25\n1,1.0,0.75").unwrap();
        let model = EnvironmentModel::from_profile_csv(&path).unwrap();
        assert_eq!(model.n_agents, 2);
        assert_eq!(model.script_len(), Some(2));

        let path = dir.path().join("script.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "round,value,competing_bid\n0,1.0,0.25\n1,1.0,0.75").unwrap();
        let script = CompetitionScript::from_csv(&path, 1.0).unwrap();
        assert_eq!(
            script.rounds[1],
            ScriptRound {
                value: 1.0,
                competing_bid: 0.75
            }
        );
        assert!(CompetitionScript::from_csv(&path, 0.5).is_err());

        let path = dir.path().join("wrong.csv");
        std::fs::write(&path, "t,a\n0,1\n").unwrap();
        assert!(EnvironmentModel::from_profile_csv(&path).is_err());
    }
}
