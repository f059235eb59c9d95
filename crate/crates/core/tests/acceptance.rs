//! Acceptance criteria, run in order by a custom harness. Each criterion
//! prints one `PASS`/`FAIL` line; any failure makes the run exit non-zero.

use ptt::algebra::{c, frobenius, hermitize, identity, ket_bra, CMat};
use ptt::basis_design::{muub_search, random_basis, reference_muub, UnitaryParams};
use ptt::channels::{ChannelChoi, Povm};
use ptt::control::{
    mean_std, optimize_sequence, params_sequence, reconstruction_fidelity, state_fidelity, trace_distance,
    unitary_to_params, OptimizerConfig,
};
use ptt::markov_order::{
    cmo_apply, cmo_basis, fit_cmo, generate_cmo_datasets, order_two_fixture, plan_cmo_experiments, FitStart,
    MemoryModel,
};
use ptt::mle::{
    directional_derivative, linear_inversion_fit, log_likelihood, log_likelihood_gradient, pgdb_fit, MleConfig,
};
use ptt::process_tensor::{causality_constraints, pt_apply, ControlSequence, ProcessChoi};
use ptt::projection::{benchmark_projections, dual_value_and_gradient, Regime};
use ptt::random::{haar_unitary, normal, random_hermitian, random_kraus, substream};
use ptt::simulator::{generate_dataset, ground_truth_process_tensor, inject_gate_noise, SeProcess};
use ptt::optim::numeric_gradient;
use std::process::Command;
use std::time::{Duration, Instant};


fn report(id: u32, name: &str, ok: bool, detail: String, elapsed: Duration, budget: Duration) {
    let within = elapsed <= budget;
    let tag = if ok && within { "PASS" } else { "FAIL" };
    println!("{tag} criterion {id:>2} {name}: {detail}; {:.2}s (budget {}s)", elapsed.as_secs_f64(), budget.as_secs());
    assert!(ok, "criterion {id} failed: {detail}");
    assert!(within, "criterion {id} exceeded its time budget");
}

fn zero_state() -> CMat {
    ket_bra(&[c(1.0, 0.0), c(0.0, 0.0)])
}

fn criterion_01_constraint_counting() {
    let t = Instant::now();
    let one = causality_constraints(1, 2).unwrap();
    let two = causality_constraints(2, 2).unwrap();
    let truth = ground_truth_process_tensor(&SeProcess::random(2, 2, 1).unwrap()).unwrap();
    let residual = two.residual_inf(truth.matrix());
    let ok = one.len() == 13 && two.len() == 205 && residual < 1e-10;
    let detail = format!("rows k=1: {}, k=2: {}, truth residual {residual:.2e}", one.len(), two.len());
    report(1, "constraint counting", ok, detail, t.elapsed(), Duration::from_secs(1));
}

fn criterion_02_projection_equivalence() {
    let t = Instant::now();
    let run = benchmark_projections(100, &Regime::standard(), 2, 1e-7);
    let worst = run.max_disagreement.iter().map(|r| r.1).fold(0.0, f64::max);
    let eigs = |regime: &str, method: &str| {
        run.rows.iter().find(|r| r.regime == regime && r.method == method).map(|r| r.mean_eigs).unwrap()
    };
    let ptt = Regime::Ptt { steps: 2 }.name();
    let ratio = eigs(&ptt, "dykstra") / eigs(&ptt, "conic");
    let converged = run.rows.iter().all(|r| r.convergence_rate == 1.0);
    let ok = worst < 1e-5 && ratio >= 10.0 && converged;
    let detail = format!("max Frobenius disagreement {worst:.2e}, PTT eig ratio {ratio:.1}, all converged {converged}");
    report(2, "projection equivalence", ok, detail, t.elapsed(), Duration::from_secs(300));
}

fn criterion_03_dual_gradient() {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for (ri, regime) in Regime::standard().iter().enumerate() {
        let set = regime.constraints();
        for i in 0..20 {
            let mut r = substream(3, (ri * 100 + i) as u64);
            let target = random_hermitian(&mut r, regime.dim());
            let lambda: Vec<f64> = (0..set.len()).map(|_| normal(&mut r)).collect();
            let (_, g, _) = dual_value_and_gradient(&target, &set, &lambda);
            let mut f = |l: &[f64]| dual_value_and_gradient(&target, &set, l).0;
            let fd = numeric_gradient(&mut f, &lambda, 1e-6);
            let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
            worst = worst.max(diff / norm);
        }
    }
    report(3, "dual gradient", worst <= 1e-5, format!("worst relative error {worst:.2e} over 60 points"), t.elapsed(), Duration::from_secs(60));
}

fn criterion_04_mle_recovery() {
    let t = Instant::now();
    let p = SeProcess::random(2, 2, 11).unwrap();
    let povm = Povm::pauli6();
    let set = causality_constraints(2, 2).unwrap();
    let b = reference_muub().instrument_basis().unwrap();
    let bases = vec![b.clone(), b];
    let mut medians = vec![];
    for shots in [None, Some(4096)] {
        let ds = generate_dataset(&p, &bases, &povm, shots, 5).unwrap();
        let fit = pgdb_fit(&ds.data, &bases, &povm, &set, &MleConfig::default()).unwrap();
        assert!(fit.converged());
        medians.push(reconstruction_fidelity(&fit.process, &p, 100, 9).unwrap().median);
    }
    let ok = medians[0] >= 0.999 && medians[1] >= 0.99;
    let detail = format!("median fidelity exact {:.6}, 4096 shots {:.6}", medians[0], medians[1]);
    report(4, "MLE recovery", ok, detail, t.elapsed(), Duration::from_secs(600));
}

fn criterion_05_mle_beats_linear_inversion() {
    let t = Instant::now();
    let p = SeProcess::random(2, 2, 11).unwrap();
    let povm = Povm::pauli6();
    let set = causality_constraints(2, 2).unwrap();
    let b = random_basis(10, 1, 0).instrument_basis().unwrap();
    let bases = vec![b.clone(), b];
    let ds = generate_dataset(&p, &bases, &povm, Some(1600), 1).unwrap();
    let li = linear_inversion_fit(&ds.data, &bases, &povm).unwrap();
    let fit = pgdb_fit(&ds.data, &bases, &povm, &set, &MleConfig::default()).unwrap();
    let rl = reconstruction_fidelity(&li, &p, 100, 9).unwrap();
    let rm = reconstruction_fidelity(&fit.process, &p, 100, 9).unwrap();
    let ok = rm.median > rl.median && rm.iqr() < rl.iqr();
    let detail = format!(
        "median LI {:.4} vs MLE {:.4}; IQR LI {:.4} vs MLE {:.4}",
        rl.median,
        rm.median,
        rl.iqr(),
        rm.iqr()
    );
    report(5, "MLE vs LI under shot noise", ok, detail, t.elapsed(), Duration::from_secs(900));
}

fn criterion_06_muub_reproduction() {
    let t = Instant::now();
    let m = reference_muub().overlap_matrix;
    let table = [
        (0, 0, 1.0),
        (1, 0, 0.19688),
        (2, 0, 0.19688),
        (2, 1, 0.11111),
        (3, 0, 0.16758),
        (6, 0, 0.03286),
        (7, 4, 0.03286),
        (9, 3, 0.03286),
        (9, 8, 0.19688),
        (8, 5, 0.11111),
    ];
    let table_err = table.iter().map(|&(i, j, v)| (m[(i, j)] - v).abs()).fold(0.0, f64::max);
    let search = muub_search(10, 6, 8);
    let avg = search.basis.average_overlaps();
    let (lo, hi) = avg.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &x| (a.0.min(x), a.1.max(x)));
    let ok = table_err < 5e-5 && lo >= 0.249 * 0.95 && hi <= 0.2515 * 1.05;
    let detail = format!("max table deviation {table_err:.1e}; searched per-element averages in [{lo:.5}, {hi:.5}]");
    report(6, "MUUB reproduction", ok, detail, t.elapsed(), Duration::from_secs(300));
}

fn criterion_07_gate_noise_invariance() {
    let t = Instant::now();
    let mut r = substream(7, 0);
    let before = ChannelChoi::from_kraus(&random_kraus(&mut r, 2, 2)).unwrap();
    let after = ChannelChoi::from_kraus(&random_kraus(&mut r, 2, 2)).unwrap();
    let clean = reference_muub().instrument_basis().unwrap();
    let noisy = inject_gate_noise(&clean, &before, &after).unwrap();
    let dress = |u: &CMat| before.then(&ChannelChoi::from_unitary(u)).unwrap().then(&after).unwrap();
    let mut coeff_err = 0.0f64;
    let targets: Vec<Vec<CMat>> = (0..50).map(|i| (0..2).map(|s| haar_unitary(&mut substream(70, 2 * i + s), 2)).collect()).collect();
    for us in &targets {
        let a = clean.expansion(&ChannelChoi::from_unitary(&us[0]));
        let b = noisy.expansion(&dress(&us[0]));
        coeff_err = coeff_err.max(a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max));
    }
    let p = SeProcess::random(2, 2, 17).unwrap();
    let povm = Povm::pauli6();
    let clean_bases = vec![clean.clone(), clean.clone()];
    let noisy_bases = vec![noisy.clone(), noisy];
    let li_clean = linear_inversion_fit(&generate_dataset(&p, &clean_bases, &povm, None, 0).unwrap().data, &clean_bases, &povm).unwrap();
    let li_noisy = linear_inversion_fit(&generate_dataset(&p, &noisy_bases, &povm, None, 0).unwrap().data, &clean_bases, &povm).unwrap();
    let (mut err_clean, mut err_noisy) = (0.0f64, 0.0f64);
    for us in &targets {
        let ideal = ControlSequence::from_unitaries(us);
        let dressed = ControlSequence::new(us.iter().map(dress).collect());
        err_clean = err_clean.max(trace_distance(&pt_apply(&li_clean, &ideal).unwrap(), &p.exact_output(&ideal).unwrap()));
        err_noisy = err_noisy.max(trace_distance(&pt_apply(&li_noisy, &ideal).unwrap(), &p.exact_output(&dressed).unwrap()));
    }
    let ok = coeff_err < 1e-9 && err_clean < 1e-9 && err_noisy < 1e-9;
    let detail = format!("coefficient deviation {coeff_err:.1e}; LI prediction error clean {err_clean:.1e}, noisy {err_noisy:.1e}");
    report(7, "gate-independent noise invariance", ok, detail, t.elapsed(), Duration::from_secs(120));
}

fn criterion_08_conditional_markov_order() {
    let t = Instant::now();
    let p = order_two_fixture(13).unwrap();
    let basis = cmo_basis().unwrap();
    let povm = Povm::pauli6();
    let cfg = MleConfig::default();
    let mut errors = vec![];
    for l in [2, 1] {
        let plan = plan_cmo_experiments(4, l, basis.len(), 3, 0).unwrap();
        let data = generate_cmo_datasets(&p, &plan, &basis, &povm, None, 2).unwrap();
        let fit = fit_cmo(&data, &basis, &povm, 4, l, 0, &cfg, FitStart::CompletedLinearInversion).unwrap();
        let mut e: Vec<f64> = (0..100)
            .map(|i| {
                let seq = ptt::control::random_unitary_sequence(4, 31, i);
                trace_distance(&cmo_apply(&fit.model, &seq).unwrap(), &p.exact_output(&seq).unwrap())
            })
            .collect();
        e.sort_by(f64::total_cmp);
        errors.push(e);
    }
    let worst_two = errors[0][99];
    let (median_two, median_one) = (errors[0][50], errors[1][50]);
    let truth = ground_truth_process_tensor(&p).unwrap();
    let full = MemoryModel::new(4, 4, vec![truth.clone()], 0).unwrap();
    let full_gap = (0..20)
        .map(|i| {
            let seq = ptt::control::random_unitary_sequence(4, 32, i);
            frobenius(&(cmo_apply(&full, &seq).unwrap() - pt_apply(&truth, &seq).unwrap()))
        })
        .fold(0.0, f64::max);
    let ok = worst_two < 1e-6 && median_one > median_two && full_gap == 0.0;
    let detail = format!(
        "order 2 worst trace distance {worst_two:.1e}; median order 1 {median_one:.2e} vs order 2 {median_two:.2e}; full-order gap {full_gap:.1e}"
    );
    report(8, "conditional Markov order", ok, detail, t.elapsed(), Duration::from_secs(600));
}

fn criterion_09_experiment_counting() {
    let t = Instant::now();
    let a = plan_cmo_experiments(3, 3, 10, 3, 0).unwrap();
    let b = plan_cmo_experiments(5, 3, 10, 3, 0).unwrap();
    let ok = a.total_circuits == 3000 && b.total_circuits == 9000 && b.blocks.len() == 3 && b.circuits().count() == 9000;
    let detail = format!("k=3 l=3: {}, k=5 l=3: {} over {} blocks", a.total_circuits, b.total_circuits, b.blocks.len());
    report(9, "experiment counting", ok, detail, t.elapsed(), Duration::from_secs(1));
}

fn criterion_10_control_improvement() {
    let t = Instant::now();
    let device = SeProcess::noisy_device(3, 3).unwrap();
    let povm = Povm::pauli6();
    let b = reference_muub().instrument_basis().unwrap();
    let bases = vec![b.clone(), b.clone(), b];
    let model = linear_inversion_fit(&generate_dataset(&device, &bases, &povm, None, 0).unwrap().data, &bases, &povm).unwrap();
    let (mut naive_f, mut opt_f) = (vec![], vec![]);
    for i in 0..100u64 {
        let v = haar_unitary(&mut substream(77, i), 2);
        let target = &v * zero_state() * v.adjoint();
        let rest = UnitaryParams::new(0.0, 0.0, 0.0);
        let naive = vec![rest, rest, unitary_to_params(&v)];
        let cfg = OptimizerConfig { restarts: 4, seed: i, ..Default::default() };
        let opt = optimize_sequence(&model, &target, &naive, &cfg).unwrap();
        naive_f.push(state_fidelity(&target, &device.exact_output(&params_sequence(&naive)).unwrap()).unwrap());
        opt_f.push(state_fidelity(&target, &device.exact_output(&opt.sequence()).unwrap()).unwrap());
    }
    let wins = naive_f.iter().zip(&opt_f).filter(|(n, o)| o > n).count();
    let (mn, sn) = mean_std(&naive_f);
    let (mo, so) = mean_std(&opt_f);
    let ok = wins >= 95 && so < sn;
    let detail = format!("improved {wins}/100; mean {mn:.4} -> {mo:.4}; std {sn:.4} -> {so:.4}");
    report(10, "control improvement", ok, detail, t.elapsed(), Duration::from_secs(900));
}

fn criterion_11_likelihood_gradient() {
    let t = Instant::now();
    let povm = Povm::pauli6();
    let b = reference_muub().instrument_basis().unwrap();
    let bases = vec![b.clone(), b];
    let data = generate_dataset(&SeProcess::random(2, 2, 4).unwrap(), &bases, &povm, Some(1000), 4).unwrap().data;
    let n = 32;
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let truth = ground_truth_process_tensor(&SeProcess::random(2, 2, 100 + i).unwrap()).unwrap();
        let point = ProcessChoi::new(hermitize(&((truth.matrix() + identity(n) / c(n as f64, 0.0)) * c(0.5, 0.0))), 2, 2).unwrap();
        let dir = random_hermitian(&mut substream(200, i), n);
        let grad = log_likelihood_gradient(&point, &data, &bases, &povm).unwrap();
        let eps = 1e-6;
        let moved = |s: f64| ProcessChoi::new(point.matrix() + &dir * c(s * eps, 0.0), 2, 2).unwrap();
        let fd = (log_likelihood(&moved(1.0), &data, &bases, &povm).unwrap()
            - log_likelihood(&moved(-1.0), &data, &bases, &povm).unwrap())
            / (2.0 * eps);
        let an = directional_derivative(&grad, &dir);
        worst = worst.max((fd - an).abs() / an.abs());
    }
    report(11, "likelihood gradient", worst <= 1e-5, format!("worst relative error {worst:.2e} over 20 points"), t.elapsed(), Duration::from_secs(60));
}

fn criterion_12_pipeline_determinism() {
    let t = Instant::now();
    let exe = env!("CARGO_BIN_EXE_ptt");
    let root = std::env::temp_dir().join(format!("ptt-determinism-{}", std::process::id()));
    let config = r#"{"schema_version":"ptt.process/1","steps":2,"env_dim":2,"dynamics":{"kind":"haar","seed":7},"env_reset_period":1}"#;
    let run = |tag: &str, threads: &str| -> Vec<Vec<u8>> {
        let dir = root.join(tag);
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("process.json");
        std::fs::write(&cfg, config).unwrap();
        let path = |f: &str| dir.join(f).to_str().unwrap().to_string();
        let steps: [Vec<String>; 3] = [
            ["simulate", "--config", &path("process.json"), "--shots", "2000", "--seed", "21", "--out", &path("data.json")]
                .map(String::from)
                .to_vec(),
            ["fit", "--data", &path("data.json"), "--method", "mle", "--seed", "21", "--out", &path("model.json")].map(String::from).to_vec(),
            [
                "validate", "--model", &path("model.json"), "--config", &path("process.json"), "--sequences", "100", "--seed", "21", "--out",
                &path("report.json"),
            ]
            .map(String::from)
            .to_vec(),
        ];
        for args in steps {
            let st = Command::new(exe).args(&args).env("PTT_THREADS", threads).status().unwrap();
            assert!(st.success(), "{args:?} exited with {st}");
        }
        ["data.json", "model.json", "report.json"].iter().map(|f| std::fs::read(dir.join(f)).unwrap()).collect()
    };
    let a = run("a", "1");
    let b = run("b", "4");
    let _ = std::fs::remove_dir_all(&root);
    let same: Vec<bool> = a.iter().zip(&b).map(|(x, y)| x == y).collect();
    let ok = same.iter().all(|&s| s);
    let detail = format!("dataset/model/report byte-identical: {same:?}");
    report(12, "pipeline determinism", ok, detail, t.elapsed(), Duration::from_secs(600));
}

fn main() {
    let criteria: [(&str, fn()); 12] = [
        ("criterion_01_constraint_counting", criterion_01_constraint_counting),
        ("criterion_02_projection_equivalence", criterion_02_projection_equivalence),
        ("criterion_03_dual_gradient", criterion_03_dual_gradient),
        ("criterion_04_mle_recovery", criterion_04_mle_recovery),
        ("criterion_05_mle_beats_linear_inversion", criterion_05_mle_beats_linear_inversion),
        ("criterion_06_muub_reproduction", criterion_06_muub_reproduction),
        ("criterion_07_gate_noise_invariance", criterion_07_gate_noise_invariance),
        ("criterion_08_conditional_markov_order", criterion_08_conditional_markov_order),
        ("criterion_09_experiment_counting", criterion_09_experiment_counting),
        ("criterion_10_control_improvement", criterion_10_control_improvement),
        ("criterion_11_likelihood_gradient", criterion_11_likelihood_gradient),
        ("criterion_12_pipeline_determinism", criterion_12_pipeline_determinism),
    ];
    // Criteria run sequentially so each wall-clock budget measures only its own work.
    let mut failed = vec![];
    for (name, run) in criteria {
        if std::panic::catch_unwind(run).is_err() {
            failed.push(name);
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed.len(), criteria.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
