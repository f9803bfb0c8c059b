//! Bandits built from labelled CSV tables.
//!
//! Each row is one context; the label decides which action is rewarded.
//! Categorical columns are one-hot encoded over their sorted levels and
//! numeric columns are standardized over the whole file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{BanditEnv, StepOutcome};
use crate::error::{check_len, Error, Result};
use crate::seed::Rng as StreamRng;

/// Context and action counts reported for the benchmark datasets.
pub fn table1_dims(name: &str) -> Option<(usize, usize)> {
    match name.to_ascii_lowercase().as_str() {
        "mushroom" => Some((22, 2)),
        "statlog" => Some((16, 7)),
        "covertype" => Some((54, 7)),
        "financial" => Some((21, 8)),
        "census" => Some((389, 9)),
        "adult" => Some((94, 14)),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardScheme {
    /// Reward 1 when the action equals the label, else 0.
    #[default]
    Classification,
    /// Action 0 eats, action 1 passes: edible +5; poisonous +5 or −35 with equal odds; pass 0.
    Mushroom,
}

/// Structured description of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub label_column: String,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub ignore: Vec<String>,
    /// Expected context dimension after encoding; defaults to the known value for `name`.
    pub context_dim: Option<usize>,
    /// Expected action count; defaults to the known value for `name`.
    pub num_arms: Option<usize>,
    #[serde(default)]
    pub reward_scheme: RewardScheme,
    /// Explicit label order (label `i` is action `i`); otherwise sorted distinct labels.
    pub labels: Option<Vec<String>>,
    /// Label value marking poisonous rows under the mushroom scheme.
    pub poisonous_label: Option<String>,
}

impl DatasetSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("dataset spec: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn expected_dims(&self) -> Option<(usize, usize)> {
        let known = table1_dims(&self.name);
        match (self.context_dim, self.num_arms, known) {
            (Some(d), Some(k), _) => Some((d, k)),
            (d, k, Some((kd, kk))) => Some((d.unwrap_or(kd), k.unwrap_or(kk))),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DatasetBanditEnv {
    name: String,
    contexts: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_arms: usize,
    scheme: RewardScheme,
    poisonous: Option<usize>,
    order: Vec<usize>,
    cursor: usize,
    current: Option<usize>,
    reward_rng: StreamRng,
}

impl DatasetBanditEnv {
    pub fn new(name: impl Into<String>, contexts: Vec<Vec<f64>>, labels: Vec<usize>, num_arms: usize) -> Result<Self> {
        check_len("label count", contexts.len(), labels.len())?;
        if contexts.is_empty() {
            return Err(Error::InvalidArgument("dataset has no rows".into()));
        }
        let d = contexts[0].len();
        for c in &contexts {
            check_len("context", d, c.len())?;
        }
        if let Some(l) = labels.iter().find(|l| **l >= num_arms) {
            return Err(Error::InvalidArgument(format!("label {l} out of range for {num_arms} actions")));
        }
        let n = contexts.len();
        Ok(Self {
            name: name.into(),
            contexts,
            labels,
            num_arms,
            scheme: RewardScheme::Classification,
            poisonous: None,
            order: (0..n).collect(),
            cursor: 0,
            current: None,
            reward_rng: StreamRng::seed_from_u64(0),
        })
    }

    pub fn with_mushroom_scheme(mut self, poisonous_label: usize) -> Result<Self> {
        if self.num_arms != 2 {
            return Err(Error::InvalidArgument("mushroom scheme needs exactly 2 actions".into()));
        }
        self.scheme = RewardScheme::Mushroom;
        self.poisonous = Some(poisonous_label);
        Ok(self)
    }

    /// Uniformly shuffle the serving order, rewind, and reseed reward noise.
    pub fn shuffle<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.order = (0..self.contexts.len()).collect();
        self.order.shuffle(rng);
        self.reward_rng = StreamRng::seed_from_u64(rng.random());
        self.cursor = 0;
        self.current = None;
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn contexts(&self) -> &[Vec<f64>] {
        &self.contexts
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn scheme(&self) -> RewardScheme {
        self.scheme
    }

    fn arm_means(&self, row: usize) -> Vec<f64> {
        let label = self.labels[row];
        match self.scheme {
            RewardScheme::Classification => (0..self.num_arms).map(|a| f64::from(u8::from(a == label))).collect(),
            RewardScheme::Mushroom => {
                let eat = if Some(label) == self.poisonous { -15.0 } else { 5.0 };
                vec![eat, 0.0]
            }
        }
    }
}

impl BanditEnv for DatasetBanditEnv {
    fn num_arms(&self) -> usize {
        self.num_arms
    }

    fn context_dim(&self) -> usize {
        self.contexts[0].len()
    }

    fn sample_context(&mut self) -> Result<Vec<f64>> {
        let Some(&row) = self.order.get(self.cursor) else {
            return Err(Error::EndOfData { served: self.cursor });
        };
        self.cursor += 1;
        self.current = Some(row);
        Ok(self.contexts[row].clone())
    }

    fn pull(&mut self, context: &[f64], action: usize) -> Result<StepOutcome> {
        check_len("context", self.context_dim(), context.len())?;
        if action >= self.num_arms {
            return Err(Error::InvalidArgument(format!("action {action} out of range for {} arms", self.num_arms)));
        }
        let row = self
            .current
            .ok_or_else(|| Error::InvalidArgument("pull before any context was served".into()))?;
        let means = self.arm_means(row);
        let optimal = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let reward = match self.scheme {
            RewardScheme::Mushroom if action == 0 && Some(self.labels[row]) == self.poisonous => {
                if self.reward_rng.random::<bool>() {
                    5.0
                } else {
                    -35.0
                }
            }
            _ => means[action],
        };
        Ok(StepOutcome {
            reward,
            mean_reward: means[action],
            optimal_mean_reward: optimal,
        })
    }

    fn mean_rewards(&self, _context: &[f64]) -> Option<Vec<f64>> {
        self.current.map(|row| self.arm_means(row))
    }
}

enum ColumnKind {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

/// Read, encode and validate a dataset CSV against its spec.
pub fn load_dataset(path: &Path, spec: &DatasetSpec) -> Result<DatasetBanditEnv> {
    let err = |message: String| Error::Dataset {
        path: path.to_path_buf(),
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| err(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let label_idx = headers
        .iter()
        .position(|h| *h == spec.label_column)
        .ok_or_else(|| err(format!("label column `{}` not found", spec.label_column)))?;
    for name in spec.categorical.iter().chain(&spec.ignore) {
        if !headers.contains(name) {
            return Err(err(format!("column `{name}` named in the spec is not in the header")));
        }
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| err(format!("row {}: {e}", row + 1)))?;
        for (col, field) in record.iter().enumerate() {
            raw[col].push(field.trim().to_string());
        }
    }
    let n = raw[label_idx].len();
    if n == 0 {
        return Err(err("no data rows".into()));
    }

    let mut columns: Vec<ColumnKind> = Vec::new();
    for (col, name) in headers.iter().enumerate() {
        if col == label_idx || spec.ignore.contains(name) {
            continue;
        }
        let values = std::mem::take(&mut raw[col]);
        if spec.categorical.contains(name) {
            columns.push(ColumnKind::Categorical(values));
        } else {
            let parsed = values
                .iter()
                .enumerate()
                .map(|(row, v)| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| err(format!("row {}: column `{name}` value `{v}` is not numeric", row + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            columns.push(ColumnKind::Numeric(parsed));
        }
    }

    let mut contexts = vec![Vec::new(); n];
    for column in columns {
        match column {
            ColumnKind::Numeric(values) => {
                let mean = values.iter().sum::<f64>() / n as f64;
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                let sd = var.sqrt();
                for (ctx, v) in contexts.iter_mut().zip(&values) {
                    ctx.push(if sd > 0.0 { (v - mean) / sd } else { 0.0 });
                }
            }
            ColumnKind::Categorical(values) => {
                let levels: BTreeMap<&str, usize> = values
                    .iter()
                    .map(String::as_str)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .enumerate()
                    .map(|(i, l)| (l, i))
                    .collect();
                for (ctx, v) in contexts.iter_mut().zip(&values) {
                    let hot = levels[v.as_str()];
                    ctx.extend((0..levels.len()).map(|i| if i == hot { 1.0 } else { 0.0 }));
                }
            }
        }
    }

    let label_names = match &spec.labels {
        Some(explicit) => explicit.clone(),
        None => sorted_levels(&raw[label_idx]),
    };
    let label_index: BTreeMap<&str, usize> = label_names.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let labels = raw[label_idx]
        .iter()
        .enumerate()
        .map(|(row, l)| {
            label_index
                .get(l.as_str())
                .copied()
                .ok_or_else(|| err(format!("row {}: unknown label `{l}`", row + 1)))
        })
        .collect::<Result<Vec<usize>>>()?;

    let d = contexts[0].len();
    let k = label_names.len();
    let num_arms = match spec.reward_scheme {
        RewardScheme::Classification => k,
        RewardScheme::Mushroom => 2,
    };
    if let Some((ed, ek)) = spec.expected_dims() {
        if (d, num_arms) != (ed, ek) {
            return Err(err(format!(
                "encoded shape (d={d}, K={num_arms}) does not match the expected (d={ed}, K={ek}) for `{}`",
                spec.name
            )));
        }
    }

    let env = DatasetBanditEnv::new(spec.name.clone(), contexts, labels, num_arms.max(k))?;
    match spec.reward_scheme {
        RewardScheme::Classification => Ok(env),
        RewardScheme::Mushroom => {
            let poison = spec
                .poisonous_label
                .as_deref()
                .ok_or_else(|| err("mushroom scheme requires `poisonous_label`".into()))?;
            let idx = *label_index
                .get(poison)
                .ok_or_else(|| err(format!("poisonous label `{poison}` never occurs")))?;
            let mut env = env;
            env.num_arms = 2;
            env.with_mushroom_scheme(idx)
        }
    }
}

/// Distinct labels, numerically ordered when every label parses as a number.
fn sorted_levels(values: &[String]) -> Vec<String> {
    let distinct: BTreeSet<&str> = values.iter().map(String::as_str).collect();
    let mut levels: Vec<String> = distinct.into_iter().map(str::to_string).collect();
    if levels.iter().all(|l| l.parse::<f64>().is_ok()) {
        levels.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    levels
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    fn spec(name: &str, label: &str, categorical: &[&str]) -> DatasetSpec {
        DatasetSpec {
            name: name.into(),
            label_column: label.into(),
            categorical: categorical.iter().map(|s| s.to_string()).collect(),
            ignore: vec![],
            context_dim: None,
            num_arms: None,
            reward_scheme: RewardScheme::Classification,
            labels: None,
            poisonous_label: None,
        }
    }

    #[test]
    fn toy_one_hot_and_standardize() {
        let f = write_csv("color,size,y\nred,1.0,a\nblue,2.0,b\nred,6.0,a\n");
        let env = load_dataset(f.path(), &spec("toy", "y", &["color"])).unwrap();
        assert_eq!(env.context_dim(), 3);
        assert_eq!(env.num_arms(), 2);
        // levels sorted: blue, red
        assert_eq!(&env.contexts()[0][..2], &[0.0, 1.0]);
        assert_eq!(&env.contexts()[1][..2], &[1.0, 0.0]);
        let mean: f64 = env.contexts().iter().map(|c| c[2]).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        // hand-computed: mean 3, population sd sqrt(14/3)
        let sd = (14.0f64 / 3.0).sqrt();
        assert!((env.contexts()[2][2] - 3.0 / sd).abs() < 1e-12);
        assert_eq!(env.labels(), &[0, 1, 0]);
    }

    #[test]
    fn statlog_and_mushroom_shapes() {
        let mut text = (0..16).map(|i| format!("f{i}")).collect::<Vec<_>>().join(",") + ",class\n";
        for r in 0..14 {
            let row: Vec<String> = (0..16).map(|i| ((r * 7 + i * 3) % 11).to_string()).collect();
            text += &format!("{},{}\n", row.join(","), r % 7 + 1);
        }
        let f = write_csv(&text);
        let env = load_dataset(f.path(), &spec("statlog", "class", &[])).unwrap();
        assert_eq!((env.context_dim(), env.num_arms()), (16, 7));

        // 11 binary categorical columns -> 22 one-hot features
        let mut text = (0..11).map(|i| format!("c{i}")).collect::<Vec<_>>().join(",") + ",edible\n";
        for r in 0..6 {
            let row: Vec<String> = (0..11).map(|i| if (r + i) % 2 == 0 { "x" } else { "y" }.to_string()).collect();
            text += &format!("{},{}\n", row.join(","), if r % 3 == 0 { "p" } else { "e" });
        }
        let f = write_csv(&text);
        let cats: Vec<String> = (0..11).map(|i| format!("c{i}")).collect();
        let cats: Vec<&str> = cats.iter().map(String::as_str).collect();
        let env = load_dataset(f.path(), &spec("mushroom", "edible", &cats)).unwrap();
        assert_eq!((env.context_dim(), env.num_arms()), (22, 2));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let f = write_csv("a,b,y\n1,2,0\n3,4,1\n");
        let e = load_dataset(f.path(), &spec("statlog", "y", &[])).unwrap_err();
        assert!(e.to_string().contains("does not match"), "{e}");
    }

    #[test]
    fn malformed_inputs() {
        let missing = Path::new("/nonexistent/data.csv");
        assert!(matches!(load_dataset(missing, &spec("t", "y", &[])), Err(Error::Io { .. })));
        let f = write_csv("a,y\n1,0\n2\n");
        assert!(load_dataset(f.path(), &spec("t", "y", &[])).is_err());
        let f = write_csv("a,y\n1,0\nfoo,1\n");
        let e = load_dataset(f.path(), &spec("t", "y", &[])).unwrap_err();
        assert!(e.to_string().contains("not numeric"), "{e}");
        let f = write_csv("a,y\n1,0\n");
        assert!(load_dataset(f.path(), &spec("t", "label", &[])).is_err());
    }

    #[test]
    fn identity_order_then_exhaustion() {
        let mut env = DatasetBanditEnv::new("t", vec![vec![1.0], vec![2.0], vec![3.0]], vec![0, 1, 0], 2).unwrap();
        for expected in [1.0, 2.0, 3.0] {
            assert_eq!(env.sample_context().unwrap(), vec![expected]);
        }
        assert!(matches!(env.sample_context(), Err(Error::EndOfData { served: 3 })));
    }

    #[test]
    fn classification_rewards() {
        let mut env = DatasetBanditEnv::new("t", vec![vec![0.0], vec![1.0]], vec![1, 0], 3).unwrap();
        let x = env.sample_context().unwrap();
        let hit = env.pull(&x, 1).unwrap();
        assert_eq!((hit.reward, hit.optimal_mean_reward, hit.regret()), (1.0, 1.0, 0.0));
        let miss = env.pull(&x, 2).unwrap();
        assert_eq!((miss.reward, miss.optimal_mean_reward, miss.regret()), (0.0, 1.0, 1.0));
        assert!(env.pull(&x, 3).is_err());
    }

    #[test]
    fn mushroom_rewards() {
        let mut env = DatasetBanditEnv::new("m", vec![vec![0.0], vec![1.0]], vec![0, 1], 2)
            .unwrap()
            .with_mushroom_scheme(1)
            .unwrap();
        let x = env.sample_context().unwrap();
        let eat = env.pull(&x, 0).unwrap();
        assert_eq!((eat.reward, eat.optimal_mean_reward), (5.0, 5.0));
        let x = env.sample_context().unwrap();
        let eat = env.pull(&x, 0).unwrap();
        assert!(eat.reward == 5.0 || eat.reward == -35.0);
        assert_eq!((eat.mean_reward, eat.optimal_mean_reward), (-15.0, 0.0));
        let pass = env.pull(&x, 1).unwrap();
        assert_eq!(pass.regret(), 0.0);
    }

    #[test]
    fn shuffle_serves_every_row_once() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let mut env = DatasetBanditEnv::new("t", rows, vec![0; 50], 1).unwrap();
        env.shuffle(&mut crate::seed::from_seed(8));
        let mut seen: Vec<f64> = (0..50).map(|_| env.sample_context().unwrap()[0]).collect();
        assert!(env.sample_context().is_err());
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..50).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn spec_from_toml() {
        let s = DatasetSpec::from_toml_str(
            "name = \"statlog\"\nlabel_column = \"class\"\n",
        )
        .unwrap();
        assert_eq!(s.expected_dims(), Some((16, 7)));
        assert!(DatasetSpec::from_toml_str("name = \"x\"\nlabel_column = \"y\"\ntypo = 1\n").is_err());
    }
}
