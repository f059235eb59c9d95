//! Conditional Markov order models: one ℓ-step process tensor per memory
//! block, each characterized with a fixed operation in all earlier slots,
//! stitched together to predict k-step sequences.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{c, contract_trailing, identity, ket_bra, trace_trailing, CMat};
use crate::basis_design::reference_muub;
use crate::channels::{ChannelChoi, InstrumentBasis, Povm};
use crate::error::{Error, Result};
use crate::mle::{completed_linear_inversion, pgdb_fit, pgdb_fit_from, projected_linear_inversion, DataTensor, MleConfig, MleFit};
use crate::process_tensor::{causality_constraints, ControlSequence, ProcessChoi};
use crate::simulator::{ground_truth_process_tensor, measure, mixed_index, SeProcess};

/// One block of characterization circuits: the fixed operation in slots
/// `0..block`, every basis combination in slots `block..block+ℓ`, readout at
/// `t_{block+ℓ}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockPlan {
    pub block: usize,
    pub fixed_slots: Vec<usize>,
    pub varying_slots: Vec<usize>,
    pub readout_time: usize,
    pub circuits: usize,
}

/// A single circuit: basis index per slot up to the readout, plus the
/// measurement setting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannedCircuit {
    pub block: usize,
    pub ops: Vec<usize>,
    pub setting: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub k: usize,
    pub l: usize,
    pub basis_size: usize,
    pub settings: usize,
    pub fixed_op: usize,
    pub blocks: Vec<BlockPlan>,
    pub total_circuits: usize,
}

impl ExperimentPlan {
    /// Every circuit, block by block, basis indices row-major, settings fastest.
    pub fn circuits(&self) -> impl Iterator<Item = PlannedCircuit> + '_ {
        self.blocks.iter().flat_map(move |b| {
            let combos = self.basis_size.pow(self.l as u32);
            (0..combos).flat_map(move |m| {
                let mu = mixed_index(m, &vec![self.basis_size; self.l]);
                let mut ops = vec![self.fixed_op; b.block];
                ops.extend(mu);
                (0..self.settings).map(move |s| PlannedCircuit { block: b.block, ops: ops.clone(), setting: s })
            })
        })
    }
}

pub fn plan_cmo_experiments(k: usize, l: usize, basis_size: usize, settings: usize, fixed_op: usize) -> Result<ExperimentPlan> {
    if l == 0 || l > k {
        return Err(Error::invalid(format!("Markov order {l} must lie in 1..={k}")));
    }
    if basis_size == 0 || settings == 0 || fixed_op >= basis_size {
        return Err(Error::invalid("basis size and settings must be positive and the fixed op a basis index"));
    }
    let per_block = basis_size
        .checked_pow(l as u32)
        .and_then(|n| n.checked_mul(settings))
        .ok_or_else(|| Error::invalid("plan too large"))?;
    let blocks: Vec<BlockPlan> = (0..=k - l)
        .map(|j| BlockPlan {
            block: j,
            fixed_slots: (0..j).collect(),
            varying_slots: (j..j + l).collect(),
            readout_time: j + l,
            circuits: per_block,
        })
        .collect();
    let total_circuits = per_block * blocks.len();
    Ok(ExperimentPlan { k, l, basis_size, settings, fixed_op, blocks, total_circuits })
}

/// Ten-unitary reference basis plus replacement channels onto |0⟩, |+⟩ and
/// |+i⟩. The extra elements complete the span of trace-preserving maps, which
/// the stitching needs because it probes blocks with replacement channels.
pub fn cmo_basis() -> Result<InstrumentBasis> {
    let mut ops: Vec<ChannelChoi> = reference_muub().unitaries().iter().map(ChannelChoi::from_unitary).collect();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for psi in [[c(1.0, 0.0), c(0.0, 0.0)], [c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(0.0, h)]] {
        ops.push(ChannelChoi::replacement(&ket_bra(&psi), 2));
    }
    InstrumentBasis::new(&ops)
}

/// Per-block datasets for a plan. Block j, combination m, uses substream
/// index `offset_j + m` where `offset_j` counts the combinations of earlier blocks.
pub fn generate_cmo_datasets(
    p: &SeProcess,
    plan: &ExperimentPlan,
    basis: &InstrumentBasis,
    povm: &Povm,
    shots: Option<u64>,
    seed: u64,
) -> Result<Vec<DataTensor>> {
    if plan.k != p.steps() || plan.basis_size != basis.len() || plan.settings != povm.settings().len() {
        return Err(Error::dim("plan does not match the process, basis or POVM"));
    }
    let combos = basis.len().pow(plan.l as u32);
    let sizes = vec![basis.len(); plan.l];
    plan.blocks
        .iter()
        .map(|b| {
            let offset = (b.block * combos) as u64;
            let cols = (0..combos)
                .into_par_iter()
                .map(|m| {
                    let mut ops = vec![basis.choi(plan.fixed_op).clone(); b.block];
                    ops.extend(mixed_index(m, &sizes).iter().map(|&i| basis.choi(i).clone()));
                    let rho = p.output_with(&ops)?;
                    Ok(measure(&rho, povm, shots, seed, offset + m as u64))
                })
                .collect::<Result<Vec<_>>>()?;
            let l = povm.len();
            let mut counts = vec![0.0; l * combos];
            for (m, col) in cols.iter().enumerate() {
                for e in 0..l {
                    counts[e * combos + m] = col[e];
                }
            }
            DataTensor::new(counts, l, sizes.clone())
        })
        .collect()
}

/// Fixes the leading `drop` slots of a block dataset at basis index `fixed`.
pub fn slice_leading(data: &DataTensor, drop: usize, fixed: usize) -> Result<DataTensor> {
    let sizes = data.basis_sizes();
    if drop >= sizes.len() {
        return Err(Error::dim("cannot drop every slot"));
    }
    if sizes[..drop].iter().any(|&n| fixed >= n) {
        return Err(Error::invalid("fixed index outside the basis"));
    }
    let kept: Vec<usize> = sizes[drop..].to_vec();
    let inner: usize = kept.iter().product();
    let base: usize = sizes[..drop].iter().fold(0, |acc, &n| acc * n + fixed);
    let l = data.effect_count();
    let mut counts = Vec::with_capacity(l * inner);
    for e in 0..l {
        for m in 0..inner {
            counts.push(data.get(e, base * inner + m));
        }
    }
    DataTensor::new(counts, l, kept)
}

/// Reuses order-`from` block data for order `to` < `from`. Block j of the
/// lower order equals block j + to − from of the higher order with its first
/// `from − to` varying slots held at the fixed operation; blocks with no
/// counterpart come back as `None` and need their own circuits.
pub fn slice_lower_order(datasets: &[DataTensor], from: usize, to: usize, fixed: usize) -> Result<Vec<Option<DataTensor>>> {
    if to == 0 || to > from {
        return Err(Error::invalid("target order must lie in 1..=source order"));
    }
    let k = datasets.len() + from - 1;
    (0..=k - to)
        .map(|j| {
            if j + to < from {
                return Ok(None);
            }
            slice_leading(&datasets[j + to - from], from - to, fixed).map(Some)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryModel {
    pub k: usize,
    pub l: usize,
    /// Block j covers t_j … t_{j+ℓ}.
    pub blocks: Vec<ProcessChoi>,
    pub fixed_op: usize,
}

impl MemoryModel {
    pub fn new(k: usize, l: usize, blocks: Vec<ProcessChoi>, fixed_op: usize) -> Result<Self> {
        if l == 0 || l > k || blocks.len() != k - l + 1 {
            return Err(Error::dim(format!("order {l} on {k} steps needs {} blocks, got {}", k + 1 - l.min(k + 1), blocks.len())));
        }
        let d = blocks[0].d();
        if blocks.iter().any(|b| b.steps() != l || b.d() != d) {
            return Err(Error::dim(format!("every block must be an {l}-step process")));
        }
        Ok(MemoryModel { k, l, blocks, fixed_op })
    }

    pub fn d(&self) -> usize {
        self.blocks[0].d()
    }
}

/// Output state plus the largest matrix dimension formed while evaluating it.
#[derive(Debug, Clone)]
pub struct CmoEvaluation {
    pub state: CMat,
    pub max_intermediate_dim: usize,
}

pub fn cmo_apply(model: &MemoryModel, seq: &ControlSequence) -> Result<CMat> {
    cmo_apply_instrumented(model, seq).map(|e| e.state)
}

/// Block 0 absorbs A_0…A_{ℓ−1}. Each later block j absorbs its interior
/// operations A_j…A_{j+ℓ−2}, loses its output leg at t_{j+ℓ−1}, and acts as a
/// channel on A_{j+ℓ−1} applied to the running state.
pub fn cmo_apply_instrumented(model: &MemoryModel, seq: &ControlSequence) -> Result<CmoEvaluation> {
    if seq.len() != model.k {
        return Err(Error::dim(format!("sequence has {} operations, model has {} steps", seq.len(), model.k)));
    }
    let d = model.d();
    for op in &seq.operations {
        if op.d_in() != d || op.d_out() != d {
            return Err(Error::dim("operation acts on the wrong dimension"));
        }
        if !op.is_cp(1e-9) {
            return Err(Error::invalid("control operations must be completely positive"));
        }
    }
    let chois = seq.chois();
    let l = model.l;
    let widest = AtomicUsize::new(0);
    let note = |m: &CMat| {
        widest.fetch_max(m.nrows(), Ordering::Relaxed);
    };
    let mut m = model.blocks[0].unnormalized();
    note(&m);
    for a in &chois[..l] {
        m = contract_trailing(&m, a);
        note(&m);
    }
    let mut rho = m;
    for (j, block) in model.blocks.iter().enumerate().skip(1) {
        let mut b = block.unnormalized();
        note(&b);
        for a in &chois[j..j + l - 1] {
            b = contract_trailing(&b, a);
            note(&b);
        }
        // (o, i, o_prev) → channel Choi on (o, i)
        let channel = trace_trailing(&b, d);
        note(&channel);
        let fed = ChannelChoi::from_matrix(chois[j + l - 1].clone(), d, d, crate::channels::Normalization::Unnormalized)?
            .apply(&rho)?;
        rho = contract_trailing(&channel, &fed);
        note(&rho);
    }
    Ok(CmoEvaluation { state: rho, max_intermediate_dim: widest.into_inner() })
}

/// How each block's pgdb run is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStart {
    MaximallyMixed,
    ProjectedLinearInversion,
    /// Requires a physical completion to exist, as with exact data.
    CompletedLinearInversion,
}

#[derive(Debug, Clone)]
pub struct CmoFit {
    pub model: MemoryModel,
    pub block_fits: Vec<MleFit>,
}

impl CmoFit {
    pub fn converged(&self) -> bool {
        self.block_fits.iter().all(|f| f.converged())
    }
}

/// Fits every block with pgdb under ℓ-step causality; blocks run in parallel.
#[allow(clippy::too_many_arguments)]
pub fn fit_cmo(
    datasets: &[DataTensor],
    basis: &InstrumentBasis,
    povm: &Povm,
    k: usize,
    l: usize,
    fixed_op: usize,
    cfg: &MleConfig,
    start: FitStart,
) -> Result<CmoFit> {
    if l == 0 || l > k {
        return Err(Error::invalid(format!("Markov order {l} must lie in 1..={k}")));
    }
    if datasets.len() != k - l + 1 {
        return Err(Error::invalid(format!("expected {} block datasets, got {}", k - l + 1, datasets.len())));
    }
    let constraints = causality_constraints(l, basis.dim())?;
    let bases = vec![basis.clone(); l];
    let fits = datasets
        .par_iter()
        .map(|data| match start {
            FitStart::MaximallyMixed => pgdb_fit(data, &bases, povm, &constraints, cfg),
            FitStart::ProjectedLinearInversion => {
                let s = projected_linear_inversion(data, &bases, povm, &constraints, cfg.projection_tolerance)?;
                pgdb_fit_from(data, &bases, povm, &constraints, cfg, s)
            }
            FitStart::CompletedLinearInversion => {
                let s = completed_linear_inversion(data, &bases, povm, &constraints, cfg.projection_tolerance)?;
                pgdb_fit_from(data, &bases, povm, &constraints, cfg, s)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let blocks = fits.iter().map(|f| f.process.clone()).collect();
    Ok(CmoFit { model: MemoryModel::new(k, l, blocks, fixed_op)?, block_fits: fits })
}

/// Memory model whose blocks are the exact conditioned sub-processes of a
/// simulator, with `fixed` in every earlier slot.
pub fn exact_memory_model(p: &SeProcess, l: usize, fixed: &ChannelChoi, fixed_index: usize) -> Result<MemoryModel> {
    let k = p.steps();
    if l == 0 || l > k {
        return Err(Error::invalid(format!("Markov order {l} must lie in 1..={k}")));
    }
    let f = fixed.unnormalized();
    let blocks = (0..=k - l)
        .map(|j| ground_truth_process_tensor(&p.conditioned(&vec![f.clone(); j], l)?))
        .collect::<Result<Vec<_>>>()?;
    MemoryModel::new(k, l, blocks, fixed_index)
}

/// Largest trace distance between the exact order-ℓ model and the simulator
/// over Haar-random unitary sequences.
pub fn markov_order_defect(p: &SeProcess, l: usize, sequences: usize, seed: u64) -> Result<f64> {
    let basis = cmo_basis()?;
    let model = exact_memory_model(p, l, &basis.op(0), 0)?;
    let worst = (0..sequences)
        .into_par_iter()
        .map(|i| {
            let seq = crate::control::random_unitary_sequence(p.steps(), seed, i as u64);
            let a = cmo_apply(&model, &seq)?;
            let b = p.exact_output(&seq)?;
            Ok(crate::control::trace_distance(&a, &b))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

/// Fixture with exact conditional Markov order 2 on four steps: the environment
/// is reset at t_2 and the last step acts on the system alone.
pub fn order_two_fixture(seed: u64) -> Result<SeProcess> {
    let base = SeProcess::random(4, 2, seed)?;
    let mut us = base.step_unitaries().to_vec();
    let mut r = crate::random::substream(seed, 1);
    let local = crate::random::haar_unitary(&mut r, 2);
    us[3] = crate::algebra::kron(&local, &identity(2));
    Ok(SeProcess::new(2, base.initial_state().clone(), us)?.with_env_reset(2))
}
