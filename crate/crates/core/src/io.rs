//! JSON interchange: process configs, datasets, model files and reports.
//! Complex numbers are `[re, im]` pairs; every file carries a schema version.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::algebra::{identity, kron, CMat, C64};
use crate::basis_design::{reference_muub, UnitaryBasis, UnitaryParams};
use crate::channels::{ChannelChoi, InstrumentBasis, Normalization, Povm};
use crate::error::{Error, Result};
use crate::markov_order::{cmo_basis, MemoryModel};
use crate::mle::DataTensor;
use crate::process_tensor::ProcessChoi;
use crate::random::{haar_unitary, substream};
use crate::simulator::{zz_coupling, SeProcess};

pub const PROCESS_SCHEMA: &str = "ptt.process/1";
pub const DATASET_SCHEMA: &str = "ptt.dataset/1";
pub const MODEL_SCHEMA: &str = "ptt.model/1";
pub const BASIS_SCHEMA: &str = "ptt.basis/1";

/// Matrix as rows of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixJson(pub Vec<Vec<[f64; 2]>>);

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Result<Self> {
        let rows = (0..m.nrows())
            .map(|r| {
                (0..m.ncols())
                    .map(|c| {
                        let z = m[(r, c)];
                        if z.re.is_finite() && z.im.is_finite() {
                            Ok([z.re, z.im])
                        } else {
                            Err(Error::invalid(format!("non-finite matrix entry at ({r}, {c})")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MatrixJson(rows))
    }

    pub fn to_matrix(&self, path: &str) -> Result<CMat> {
        let rows = self.0.len();
        let cols = self.0.first().map_or(0, |r| r.len());
        if rows == 0 || cols == 0 {
            return Err(Error::schema(path, "empty matrix"));
        }
        let mut m = CMat::zeros(rows, cols);
        for (r, row) in self.0.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::schema(format!("{path}[{r}]"), format!("expected {cols} columns, found {}", row.len())));
            }
            for (c, z) in row.iter().enumerate() {
                if !z[0].is_finite() || !z[1].is_finite() {
                    return Err(Error::schema(format!("{path}[{r}][{c}]"), "non-finite value"));
                }
                m[(r, c)] = C64::new(z[0], z[1]);
            }
        }
        Ok(m)
    }

    pub fn square(&self, path: &str, n: usize) -> Result<CMat> {
        let m = self.to_matrix(path)?;
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::schema(path, format!("expected {n}x{n}, found {}x{}", m.nrows(), m.ncols())));
        }
        Ok(m)
    }
}

fn check_version(found: &str, want: &str) -> Result<()> {
    if found != want {
        return Err(Error::schema("schema_version", format!("expected `{want}`, found `{found}`")));
    }
    Ok(())
}

/// Qubit channel by name, or an explicit unnormalized Choi matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    Identity,
    Depolarizing { p: f64 },
    AmplitudeDamping { gamma: f64 },
    Dephasing { p: f64 },
    Choi { matrix: MatrixJson },
}

impl ChannelSpec {
    pub fn build(&self, path: &str) -> Result<ChannelChoi> {
        let prob = |v: f64, name: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(Error::schema(format!("{path}.{name}"), "must lie in [0, 1]"))
            }
        };
        Ok(match self {
            ChannelSpec::Identity => ChannelChoi::identity(2),
            ChannelSpec::Depolarizing { p } => ChannelChoi::depolarizing(2, prob(*p, "p")?),
            ChannelSpec::AmplitudeDamping { gamma } => ChannelChoi::amplitude_damping(prob(*gamma, "gamma")?),
            ChannelSpec::Dephasing { p } => ChannelChoi::dephasing(prob(*p, "p")?),
            ChannelSpec::Choi { matrix } => {
                ChannelChoi::from_matrix(matrix.square(&format!("{path}.matrix"), 4)?, 2, 2, Normalization::Unnormalized)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpamSpec {
    pub preparation: ChannelSpec,
    pub measurement: ChannelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsSpec {
    /// Haar-random SE unitary per step from the given seed.
    Haar { seed: u64 },
    Explicit { unitaries: Vec<MatrixJson> },
    /// Identity SE dynamics (no coupling).
    Identity,
}

/// Simulator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub schema_version: String,
    pub steps: usize,
    pub env_dim: usize,
    pub dynamics: DynamicsSpec,
    /// Joint S⊗E initial state; |0⟩|0⟩ when absent.
    #[serde(default)]
    pub initial_state: Option<MatrixJson>,
    #[serde(default)]
    pub spam: Option<SpamSpec>,
    #[serde(default)]
    pub env_reset_period: Option<usize>,
    /// ZZ coupling angle between the system and the first environment qubit,
    /// applied after every step unitary.
    #[serde(default)]
    pub zz_coupling: Option<f64>,
    /// Replaces the last step unitary by a Haar system-only unitary from this seed.
    #[serde(default)]
    pub local_final_step: Option<u64>,
}

impl ProcessConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ProcessConfig = serde_json::from_str(text)?;
        check_version(&cfg.schema_version, PROCESS_SCHEMA)?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical (compact, field-ordered) serialization.
    pub fn digest(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn build(&self) -> Result<SeProcess> {
        let de = self.env_dim;
        if self.steps == 0 {
            return Err(Error::schema("steps", "must be positive"));
        }
        if de == 0 || !de.is_power_of_two() {
            return Err(Error::schema("env_dim", "must be a power of two"));
        }
        let n = 2 * de;
        let mut us = match &self.dynamics {
            DynamicsSpec::Haar { seed } => {
                let mut r = substream(*seed, 0);
                (0..self.steps).map(|_| haar_unitary(&mut r, n)).collect::<Vec<_>>()
            }
            DynamicsSpec::Explicit { unitaries } => {
                if unitaries.len() != self.steps {
                    return Err(Error::schema("dynamics.unitaries", format!("expected {} unitaries", self.steps)));
                }
                unitaries
                    .iter()
                    .enumerate()
                    .map(|(j, u)| u.square(&format!("dynamics.unitaries[{j}]"), n))
                    .collect::<Result<Vec<_>>>()?
            }
            DynamicsSpec::Identity => vec![identity(n); self.steps],
        };
        if let Some(g) = self.zz_coupling {
            if de < 2 {
                return Err(Error::schema("zz_coupling", "needs an environment qubit"));
            }
            let zz = kron(&zz_coupling(g), &identity(de / 2));
            us = us.into_iter().map(|u| &zz * u).collect();
        }
        if let Some(seed) = self.local_final_step {
            let mut r = substream(seed, 1);
            let local = haar_unitary(&mut r, 2);
            *us.last_mut().expect("steps > 0") = kron(&local, &identity(de));
        }
        let rho = match &self.initial_state {
            Some(m) => m.square("initial_state", n)?,
            None => {
                let mut m = CMat::zeros(n, n);
                m[(0, 0)] = C64::new(1.0, 0.0);
                m
            }
        };
        let mut p = SeProcess::new(de, rho, us)?;
        if let Some(s) = &self.spam {
            p = p.with_spam(s.preparation.build("spam.preparation")?, s.measurement.build("spam.measurement")?)?;
        }
        if let Some(t) = self.env_reset_period {
            p = p.with_env_reset(t);
        }
        Ok(p)
    }
}

/// Per-step control basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisSpec {
    Unitaries { params: Vec<UnitaryParams> },
    /// Reference unitaries plus three replacement channels.
    Cmo,
    Chois { matrices: Vec<MatrixJson> },
}

impl BasisSpec {
    pub fn reference() -> Self {
        BasisSpec::Unitaries { params: reference_muub().elements.clone() }
    }

    pub fn build(&self, path: &str) -> Result<InstrumentBasis> {
        match self {
            BasisSpec::Unitaries { params } => {
                if params.is_empty() {
                    return Err(Error::schema(format!("{path}.params"), "empty basis"));
                }
                UnitaryBasis::new(params.clone()).instrument_basis()
            }
            BasisSpec::Cmo => cmo_basis(),
            BasisSpec::Chois { matrices } => {
                let ops = matrices
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        ChannelChoi::from_matrix(m.square(&format!("{path}.matrices[{i}]"), 4)?, 2, 2, Normalization::Unnormalized)
                    })
                    .collect::<Result<Vec<_>>>()?;
                InstrumentBasis::new(&ops)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmSpec {
    pub effects: Vec<MatrixJson>,
    pub settings: Vec<Vec<usize>>,
}

impl PovmSpec {
    pub fn from_povm(p: &Povm) -> Result<Self> {
        Ok(PovmSpec {
            effects: p.effects().iter().map(MatrixJson::from_matrix).collect::<Result<_>>()?,
            settings: p.settings().to_vec(),
        })
    }

    pub fn build(&self) -> Result<Povm> {
        let effects = self
            .effects
            .iter()
            .enumerate()
            .map(|(i, m)| m.to_matrix(&format!("povm.effects[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        Povm::with_settings(effects, self.settings.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub process_sha256: String,
    pub generator: String,
}

/// Memory-block layout of a conditional-Markov-order dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmoLayout {
    pub markov_order: usize,
    pub fixed_op: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub schema_version: String,
    pub k: usize,
    pub d: usize,
    /// One basis per characterized slot (per block slot for CMO data).
    pub basis: Vec<BasisSpec>,
    pub povm: PovmSpec,
    pub exact: bool,
    pub shots: Option<u64>,
    #[serde(default)]
    pub cmo: Option<CmoLayout>,
    /// Full grid: one array indexed [effect][μ_0]…[μ_{k−1}]. CMO: one such
    /// array per block over its ℓ varying slots.
    pub counts: Vec<Value>,
    pub seed: u64,
    pub provenance: Provenance,
}

fn nested_counts(data: &DataTensor, integer: bool) -> Result<Value> {
    fn build(vals: &[f64], sizes: &[usize], integer: bool) -> Value {
        if sizes.is_empty() {
            let v = vals[0];
            return if integer { Value::from(v as u64) } else { Value::from(v) };
        }
        let stride: usize = sizes[1..].iter().product();
        Value::Array((0..sizes[0]).map(|i| build(&vals[i * stride..(i + 1) * stride], &sizes[1..], integer)).collect())
    }
    let mut sizes = vec![data.effect_count()];
    sizes.extend(data.basis_sizes());
    if integer && data.counts().iter().any(|v| v.fract() != 0.0) {
        return Err(Error::invalid("sampled counts must be integers"));
    }
    Ok(build(data.counts(), &sizes, integer))
}

fn flatten_counts(v: &Value, sizes: &[usize], path: &str, out: &mut Vec<f64>) -> Result<()> {
    if sizes.is_empty() {
        let x = v.as_f64().ok_or_else(|| Error::schema(path, "expected a number"))?;
        if !x.is_finite() || x < 0.0 {
            return Err(Error::schema(path, "counts must be finite and non-negative"));
        }
        out.push(x);
        return Ok(());
    }
    let arr = v.as_array().ok_or_else(|| Error::schema(path, format!("expected an array of length {}", sizes[0])))?;
    if arr.len() != sizes[0] {
        return Err(Error::schema(path, format!("expected length {}, found {}", sizes[0], arr.len())));
    }
    for (i, item) in arr.iter().enumerate() {
        flatten_counts(item, &sizes[1..], &format!("{path}[{i}]"), out)?;
    }
    Ok(())
}

/// Parsed dataset: bases, POVM and one data tensor (full grid) or one per block.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub file: DatasetFile,
    pub bases: Vec<InstrumentBasis>,
    pub povm: Povm,
    pub tensors: Vec<DataTensor>,
}

impl DatasetFile {
    #[allow(clippy::too_many_arguments)]
    pub fn from_tensors(
        k: usize,
        basis: Vec<BasisSpec>,
        povm: &Povm,
        shots: Option<u64>,
        cmo: Option<CmoLayout>,
        tensors: &[DataTensor],
        seed: u64,
        provenance: Provenance,
    ) -> Result<Self> {
        let counts = tensors.iter().map(|t| nested_counts(t, shots.is_some())).collect::<Result<Vec<_>>>()?;
        Ok(DatasetFile {
            schema_version: DATASET_SCHEMA.into(),
            k,
            d: povm.dim(),
            basis,
            povm: PovmSpec::from_povm(povm)?,
            exact: shots.is_none(),
            shots,
            cmo,
            counts,
            seed,
            provenance,
        })
    }

    pub fn parse(text: &str) -> Result<LoadedDataset> {
        let file: DatasetFile = serde_json::from_str(text)?;
        file.load()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(self) -> Result<LoadedDataset> {
        check_version(&self.schema_version, DATASET_SCHEMA)?;
        if self.d != 2 {
            return Err(Error::schema("d", "only qubit systems are supported"));
        }
        if self.exact == self.shots.is_some() {
            return Err(Error::schema("shots", "set exactly one of `exact` or `shots`"));
        }
        let povm = self.povm.build()?;
        if povm.dim() != self.d {
            return Err(Error::schema("povm.effects", "effect dimension differs from d"));
        }
        let slots = match &self.cmo {
            Some(c) => {
                if c.markov_order == 0 || c.markov_order > self.k {
                    return Err(Error::schema("cmo.markov_order", "must lie in 1..=k"));
                }
                if self.counts.len() != self.k - c.markov_order + 1 {
                    return Err(Error::schema("counts", format!("expected {} blocks", self.k - c.markov_order + 1)));
                }
                c.markov_order
            }
            None => {
                if self.counts.len() != 1 {
                    return Err(Error::schema("counts", "full-grid data holds exactly one array"));
                }
                self.k
            }
        };
        if self.basis.len() != slots {
            return Err(Error::schema("basis", format!("expected {slots} bases, found {}", self.basis.len())));
        }
        let bases =
            self.basis.iter().enumerate().map(|(i, b)| b.build(&format!("basis[{i}]"))).collect::<Result<Vec<_>>>()?;
        if let Some(c) = &self.cmo {
            if bases.iter().any(|b| c.fixed_op >= b.len()) {
                return Err(Error::schema("cmo.fixed_op", "index outside the basis"));
            }
        }
        let sizes: Vec<usize> = bases.iter().map(|b| b.len()).collect();
        let mut shape = vec![povm.len()];
        shape.extend(&sizes);
        let tensors = self
            .counts
            .iter()
            .enumerate()
            .map(|(b, v)| {
                let mut flat = Vec::new();
                flatten_counts(v, &shape, &format!("counts[{b}]"), &mut flat)?;
                if let Some(n) = self.shots {
                    check_shots(&flat, &povm, &sizes, n, &format!("counts[{b}]"))?;
                }
                DataTensor::new(flat, povm.len(), sizes.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LoadedDataset { file: self, bases, povm, tensors })
    }
}

fn check_shots(flat: &[f64], povm: &Povm, sizes: &[usize], shots: u64, path: &str) -> Result<()> {
    let s: usize = sizes.iter().product();
    for m in 0..s {
        for (si, setting) in povm.settings().iter().enumerate() {
            let total: f64 = setting.iter().map(|&e| flat[e * s + m]).sum();
            if total != shots as f64 {
                return Err(Error::schema(
                    path,
                    format!("multi-index {m}, setting {si}: counts sum to {total}, expected {shots}"),
                ));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    ProcessChoi { k: usize, d: usize, matrix: MatrixJson },
    MemoryModel { k: usize, l: usize, d: usize, fixed_op: usize, blocks: Vec<MatrixJson> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: String,
    pub method: String,
    pub model: ModelSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Process(ProcessChoi),
    Memory(MemoryModel),
}

impl Model {
    pub fn predictor(&self) -> &dyn crate::control::Predictor {
        match self {
            Model::Process(p) => p,
            Model::Memory(m) => m,
        }
    }
}

impl ModelFile {
    pub fn new(method: &str, model: &Model) -> Result<Self> {
        let spec = match model {
            Model::Process(p) => ModelSpec::ProcessChoi { k: p.steps(), d: p.d(), matrix: MatrixJson::from_matrix(p.matrix())? },
            Model::Memory(m) => ModelSpec::MemoryModel {
                k: m.k,
                l: m.l,
                d: m.d(),
                fixed_op: m.fixed_op,
                blocks: m.blocks.iter().map(|b| MatrixJson::from_matrix(b.matrix())).collect::<Result<_>>()?,
            },
        };
        Ok(ModelFile { schema_version: MODEL_SCHEMA.into(), method: method.into(), model: spec })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn parse(text: &str) -> Result<(ModelFile, Model)> {
        let file: ModelFile = serde_json::from_str(text)?;
        check_version(&file.schema_version, MODEL_SCHEMA)?;
        let model = match &file.model {
            ModelSpec::ProcessChoi { k, d, matrix } => {
                let n = d.pow(2 * *k as u32 + 1);
                Model::Process(ProcessChoi::new(matrix.square("model.matrix", n)?, *k, *d)?)
            }
            ModelSpec::MemoryModel { k, l, d, fixed_op, blocks } => {
                let n = d.pow(2 * *l as u32 + 1);
                let bs = blocks
                    .iter()
                    .enumerate()
                    .map(|(i, b)| ProcessChoi::new(b.square(&format!("model.blocks[{i}]"), n)?, *l, *d))
                    .collect::<Result<Vec<_>>>()?;
                Model::Memory(MemoryModel::new(*k, *l, bs, *fixed_op)?)
            }
        };
        Ok((file, model))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisFile {
    pub schema_version: String,
    pub elements: Vec<UnitaryParams>,
    pub overlaps: Vec<Vec<f64>>,
    pub objective: f64,
    pub average_overlaps: Vec<f64>,
}

impl BasisFile {
    pub fn new(b: &UnitaryBasis) -> Self {
        let n = b.len();
        BasisFile {
            schema_version: BASIS_SCHEMA.into(),
            elements: b.elements.clone(),
            overlaps: (0..n).map(|i| (0..n).map(|j| b.overlap_matrix[(i, j)]).collect()).collect(),
            objective: b.objective(),
            average_overlaps: b.average_overlaps(),
        }
    }

    pub fn parse(text: &str) -> Result<UnitaryBasis> {
        let f: BasisFile = serde_json::from_str(text)?;
        check_version(&f.schema_version, BASIS_SCHEMA)?;
        Ok(UnitaryBasis::new(f.elements))
    }
}
