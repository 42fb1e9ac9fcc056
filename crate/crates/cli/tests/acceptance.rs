//! Acceptance gate: one pass/fail line per criterion, nonzero exit if any
//! criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use minimax_core::bvp::{assemble_coefficients, DaeEstimator, DEFAULT_POWER_MAX_ITER, DEFAULT_POWER_TOL};
use minimax_core::descriptor::{svd_canonical_form, DEFAULT_RANK_TOL};
use minimax_core::linalg::thin_svd;
use minimax_core::oracle::RefinementStudy;
use minimax_core::synth::{energy_scale, rng_from_seed, FourierSignal};
use minimax_core::{CanonicalDescriptor, DescriptorSystem, Error, EstimationProblem, Outcome, TimeGrid, Trajectory};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Seeded static instance with a planted common null space of `L` and `H`
/// (orthonormal columns of the second component).
fn instance(seed: u64) -> (EstimationProblem, DMatrix<f64>) {
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(3..=50usize);
    let m = rng.random_range(1..=n);
    let k = rng.random_range(1..=n);
    // every third instance is rank-deficient
    let null_dim = if seed % 3 == 0 { rng.random_range(1..=(n / 3).max(1)) } else { 0 };
    let q = mat(&mut rng, n, n).qr().q();
    let null = q.columns(0, null_dim).into_owned();
    let range = q.columns(null_dim, n - null_dim).into_owned();
    let inner = n - null_dim;
    let l_rank = if seed % 2 == 0 { (inner / 2).max(1) } else { inner };
    let l = mat(&mut rng, m, l_rank) * mat(&mut rng, l_rank, inner) * range.transpose();
    let h = mat(&mut rng, k, inner) * range.transpose();
    (EstimationProblem::new(l, h).unwrap(), null)
}

fn admissible_direction(p: &EstimationProblem, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let ell = p.l().tr_mul(&vec(rng, p.l().nrows())) + p.h().tr_mul(&vec(rng, p.h().nrows()));
    &ell / ell.norm()
}

fn stacked(p: &EstimationProblem) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(p.l().nrows() + p.h().nrows(), p.n());
    g.rows_mut(0, p.l().nrows()).copy_from(p.l());
    g.rows_mut(p.l().nrows(), p.h().nrows()).copy_from(p.h());
    g
}

/// `min |L phi|^2 + |y - H phi|^2` by SVD least squares.
fn quadratic_minimum(p: &EstimationProblem, y: &DVector<f64>) -> f64 {
    let g = stacked(p);
    let mut rhs = DVector::zeros(g.nrows());
    rhs.rows_mut(p.l().nrows(), y.len()).copy_from(y);
    let phi = pseudo_inverse(&g, 1e-12) * &rhs;
    (g * phi - rhs).norm_squared()
}

/// SVD pseudo-inverse with a relative singular-value cutoff.
fn pseudo_inverse(a: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let svd = thin_svd(a).unwrap();
    let cut = rel_cutoff * svd.singular_values.max();
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            out += svd.v_t.row(i).transpose() * svd.u.column(i).transpose() / s;
        }
    }
    out
}

fn criterion_1() -> Verdict {
    let (mut worst_res, mut worst_sigma, mut worst_oracle) = (0.0_f64, 0.0_f64, 0.0_f64);
    for seed in 0..24 {
        let (p, _) = instance(seed);
        let mut rng = rng_from_seed(1000 + seed);
        let ell = admissible_direction(&p, &mut rng);
        let sol = p.solve_euler(&ell).unwrap().into_finite().ok_or("admissible direction reported infinite")?;
        let r1 = (p.l() * &sol.p_hat - &sol.z_hat).norm();
        let r2 = (p.l().tr_mul(&sol.z_hat) + p.h().tr_mul(&sol.u_hat) - &ell).norm();
        let r3 = (p.h() * &sol.p_hat - &sol.u_hat).norm();
        worst_res = worst_res.max(r1).max(r2).max(r3);
        let s2 = ell.dot(&sol.p_hat);
        worst_sigma = worst_sigma.max((sol.sigma.powi(2) - s2).abs() / s2);
        // G^+ (G^+)^T ell with G = [L; H]
        let gp = pseudo_inverse(&stacked(&p), 1e-10);
        let oracle = &gp * (gp.transpose() * &ell);
        worst_oracle = worst_oracle.max((&sol.p_hat - &oracle).norm() / oracle.norm());
    }
    check(
        worst_res <= 1e-8 && worst_sigma <= 1e-10,
        format!(
            "24 instances: max Euler residual {worst_res:.2e} (<= 1e-8), max sigma^2 mismatch {worst_sigma:.2e} (<= 1e-10), \
             pseudo-inverse oracle gap {worst_oracle:.2e}"
        ),
    )
}

fn criterion_2() -> Verdict {
    let mut worst = 0.0_f64;
    let mut pairs = 0;
    for seed in 0..24 {
        let (p, _) = instance(seed);
        let mut rng = rng_from_seed(2000 + seed);
        for _ in 0..10 {
            let ell = admissible_direction(&p, &mut rng);
            let y = vec(&mut rng, p.h().nrows()) * 0.1;
            let sol = p.solve_euler(&ell).unwrap().into_finite().unwrap();
            let phi = match p.aposteriori_estimate(&y, &[]) {
                Ok(r) => r.phi_hat,
                Err(Error::EmptyAposterioriSet { .. }) => continue,
                Err(e) => return Err(e.to_string()),
            };
            let (a, b) = (sol.u_hat.dot(&y), ell.dot(&phi));
            let scale = (sol.u_hat.norm() * y.norm()).max(ell.norm() * phi.norm());
            worst = worst.max((a - b).abs() / scale);
            pairs += 1;
        }
    }
    check(
        worst <= 1e-10 && pairs >= 200,
        format!("{pairs} (ell, y) pairs: max relative |(u,y) - (ell,phi)| = {worst:.2e} (<= 1e-10)"),
    )
}

fn criterion_3() -> Verdict {
    let mut worst = 0.0_f64;
    let mut all_infinite = true;
    let mut cases = 0;
    for seed in (0..60).filter(|s| s % 3 == 0) {
        let (p, null) = instance(seed);
        let mut rng = rng_from_seed(3000 + seed);
        let outside = &null * vec(&mut rng, null.ncols());
        let ell = admissible_direction(&p, &mut rng) + &outside;
        let rep = p.check_direction(&ell).unwrap();
        // ell minus an element of R(L*) + R(H*), which is orthogonal to the
        // planted null space: the distance is exactly |outside|.
        let distance = outside.norm();
        worst = worst.max((rep.residual_norm - distance).abs());
        all_infinite &= !rep.admissible && matches!(p.solve_euler(&ell).unwrap(), Outcome::Infinite(_));
        cases += 1;
    }
    check(
        worst <= 1e-10 && all_infinite,
        format!("{cases} inadmissible directions: all infinite = {all_infinite}, max distance error {worst:.2e} (<= 1e-10)"),
    )
}

fn criterion_4() -> Verdict {
    let mut worst_excess = 0.0_f64;
    let mut worst_attain = f64::INFINITY;
    let mut detection_ok = true;
    let mut instances = 0;
    for seed in 0..40 {
        let mut rng = rng_from_seed(4000 + seed);
        let n = rng.random_range(2..=8usize);
        let p = EstimationProblem::new(mat(&mut rng, n + 1, n), mat(&mut rng, n, n)).unwrap();
        let y0 = vec(&mut rng, n);

        // empty-set detection around the threshold
        let base = quadratic_minimum(&p, &y0);
        for target in [0.5, 0.98, 1.02, 3.0] {
            let y = &y0 * (target / base).sqrt();
            let oracle = quadratic_minimum(&p, &y);
            let empty = matches!(p.aposteriori_estimate(&y, &[]), Err(Error::EmptyAposterioriSet { .. }));
            detection_ok &= empty == (oracle > 1.0);
        }
        if instances >= 10 {
            continue;
        }

        let y = &y0 * (0.6 / base).sqrt();
        let m = p.normal_matrix();
        let chol = m.cholesky().unwrap();
        let r_inv = chol.l().transpose().try_inverse().unwrap();
        let phi = chol.solve(&p.h().tr_mul(&y));
        let beta = 1.0 - quadratic_minimum(&p, &y);
        let ell = vec(&mut rng, n);
        let (lo, hi) = p.support_aposteriori(&y, &ell).unwrap();
        let d_hat = 0.5 * (hi - lo);
        for _ in 0..1000 {
            let mut u = vec(&mut rng, n);
            let radius: f64 = rng.random_range(0.0..1.0);
            u *= radius.powf(1.0 / n as f64) / u.norm();
            let psi = &phi + &r_inv * u * beta.sqrt();
            let value = ell.dot(&psi);
            let excess = (value - hi).max(lo - value).max(0.0) / d_hat;
            worst_excess = worst_excess.max(excess);
        }
        let m_ell = chol.solve(&ell);
        let psi_star = &phi + &m_ell * (beta / ell.dot(&m_ell)).sqrt();
        let membership = (p.l() * &psi_star).norm_squared() + (&y - p.h() * &psi_star).norm_squared();
        let attained = ell.dot(&(&psi_star - &phi)) / d_hat;
        if membership > 1.0 + 1e-9 {
            return Err(format!("extremal point left the set: {membership}"));
        }
        worst_attain = worst_attain.min(attained);
        instances += 1;
    }
    check(
        worst_excess <= 1e-6 && worst_attain >= 1.0 - 1e-6 && detection_ok,
        format!(
            "{instances} instances x 1000 samples: max excess {worst_excess:.2e} (<= 1e-6), \
             extremal attains {worst_attain:.12} of d_hat (>= 1 - 1e-6), empty-set detection exact on 160 cases = {detection_ok}"
        ),
    )
}

fn index_one(seed: u64) -> CanonicalDescriptor {
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(2..=6usize);
    let r = rng.random_range(1..n);
    let mut c = mat(&mut rng, n, n) * 0.8;
    for i in r..n {
        c[(i, i)] += 2.0;
    }
    CanonicalDescriptor::from_blocks(r, c, 0.0, 1.0).unwrap()
}

/// Observations of the model: simulated truth on a fine grid plus noise,
/// with `(f, eta)` of energy 0.9.
fn model_observations(can: &CanonicalDescriptor, seed: u64) -> Trajectory {
    let fine = TimeGrid::new(can.t0, can.t_end, 1024).unwrap();
    let mut rng = rng_from_seed(seed);
    let f = FourierSignal::random(&mut rng, can.n(), 4, can.t0, can.t_end).sample(fine);
    let eta = FourierSignal::random(&mut rng, can.n(), 4, can.t0, can.t_end).sample(fine);
    let alpha = energy_scale(&[&f, &eta], 0.9).unwrap();
    can.simulate(&f.scaled(alpha)).unwrap().add(&eta.scaled(alpha)).unwrap()
}

fn criterion_5() -> Verdict {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..5 {
        let can = index_one(5000 + seed);
        let y = model_observations(&can, 5100 + seed);
        let start = Instant::now();
        let study = RefinementStudy::run(&can, &assemble_coefficients(&can), &[32, 64, 128], |g| Ok(y.resample(g))).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let order = study.fitted_order;
        ok &= (1.7..=2.3).contains(&order) && secs < 30.0;
        lines.push(format!("(n={}, r={}) order {order:.3} in {secs:.1}s", can.n(), can.rank));
    }
    check(ok, format!("fitted L2 orders over N = 32, 64, 128 in [1.7, 2.3]: {}", lines.join("; ")))
}

/// Dense matrix of `ell -> p` on nodal values.
fn dense_kernel(est: &DaeEstimator, grid: TimeGrid, n: usize) -> DMatrix<f64> {
    let dim = n * grid.len();
    let mut k = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut values = vec![DVector::zeros(n); grid.len()];
        values[j / n][j % n] = 1.0;
        let ell = Trajectory::new(grid, n, values).unwrap();
        let (p, _) = est.solve(&ell).unwrap();
        for (i, v) in p.values().iter().enumerate() {
            k.view_mut((i * n, j), (n, 1)).copy_from(v);
        }
    }
    k
}

fn criterion_6() -> Verdict {
    let mut worst = 0.0_f64;
    let mut factor_exact = true;
    let mut lines = Vec::new();
    for (seed, intervals) in [(6000, 16), (6001, 32), (6002, 64)] {
        let can = index_one(seed);
        let grid = TimeGrid::new(0.0, 1.0, intervals).unwrap();
        let est = DaeEstimator::new(&can, grid).unwrap();
        let w = est
            .worst_case_error(&Trajectory::zeros(grid, can.n()), DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITER)
            .unwrap();
        factor_exact &= w.factor == 1.0;
        let eig = dense_kernel(&est, grid, can.n()).complex_eigenvalues();
        let lambda = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let rel = (w.lambda_max - lambda).abs() / lambda;
        worst = worst.max(rel);
        lines.push(format!("N={intervals}: rel {rel:.1e} after {} iterations", w.iterations));
    }
    check(
        worst <= 1e-8 && factor_exact,
        format!("power iteration vs dense eigenvalues (<= 1e-8): {}; factor with y = 0 exactly 1 = {factor_exact}", lines.join(", ")),
    )
}

fn criterion_7() -> Verdict {
    let mut worst = 0.0_f64;
    let mut exact_zero = true;
    for (n, r) in [(2, 1), (3, 1), (4, 2), (5, 3)] {
        let can = CanonicalDescriptor::from_blocks(r, DMatrix::zeros(n, n), 0.0, 1.0).unwrap();
        for intervals in [16, 64] {
            let grid = TimeGrid::new(0.0, 1.0, intervals).unwrap();
            let est = DaeEstimator::new(&can, grid).unwrap();
            let y = Trajectory::from_fn(grid, n, |t| {
                DVector::from_fn(n, |i, _| if i < r { 0.0 } else { 0.2 * ((i + 1) as f64 * t).sin() })
            })
            .unwrap();
            let res = est.estimate(&y).unwrap();
            worst = worst.max(res.x_hat.sub(&y).unwrap().max_abs()).max((res.factor - 1.0).abs());
            let zero = est.estimate(&Trajectory::zeros(grid, n)).unwrap();
            exact_zero &= zero.x_hat.max_abs() == 0.0;
        }
    }
    check(
        worst <= 1e-10 && exact_zero,
        format!("C = 0 with y = (0, y2): max |x_hat - y| and |factor - 1| = {worst:.1e} (<= 1e-10); y = 0 gives exact zero = {exact_zero}"),
    )
}

fn criterion_8() -> Verdict {
    let mut worst_rec = 0.0_f64;
    let mut worst_block = 0.0_f64;
    let mut ranks = std::collections::BTreeSet::new();
    for seed in 0..100u64 {
        let mut rng = rng_from_seed(8000 + seed);
        let n = rng.random_range(1..=7usize);
        let r = match seed % 10 {
            0 => 0,
            1 => n,
            _ => rng.random_range(0..=n),
        };
        let f = mat(&mut rng, n, r) * mat(&mut rng, r, n);
        let c = mat(&mut rng, n, n);
        let sys = DescriptorSystem::new(f.clone(), c.clone(), 0.0, 1.0).unwrap();
        let can = svd_canonical_form(&sys, DEFAULT_RANK_TOL).unwrap();
        if can.rank != r {
            return Err(format!("seed {seed}: rank {} detected, planted {r}", can.rank));
        }
        ranks.insert(r == 0 || r == n);
        let scale = f.norm();
        worst_rec = worst_rec.max((can.reconstruct_f() - &f).norm() / scale.max(f64::MIN_POSITIVE));
        // diag(Sigma_r^-1, I) U* F V = diag(I_r, 0) and U* C V matches the blocks
        let mut ff = can.u.tr_mul(&f) * &can.v;
        let mut cc = can.u.tr_mul(&c) * &can.v;
        for i in 0..r {
            ff.row_mut(i).scale_mut(1.0 / can.sigma_r[i]);
            cc.row_mut(i).scale_mut(1.0 / can.sigma_r[i]);
        }
        let block = (ff - can.f_canonical()).amax().max((cc - can.c_canonical()).amax() / c.amax());
        worst_block = worst_block.max(block);
    }
    check(
        worst_rec <= 1e-12 && worst_block <= 1e-12 && ranks.len() == 2,
        format!(
            "100 pencils incl. r = 0 and r = n: max reconstruction {worst_rec:.1e} * |F| (<= 1e-12), \
             max normalized block deviation {worst_block:.1e}"
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_minimax"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    match out.status.code() {
        Some(0) => Ok(()),
        code => Err(format!("{args:?} exited with {code:?}: {}", String::from_utf8_lossy(&out.stderr))),
    }
}

fn criterion_9() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    fs::write(
        d.join("model.json"),
        r#"{"F": [[1.0, 0.5, 0.0], [0.2, 1.0, 0.0], [0.0, 0.0, 0.0]],
            "C": [[-0.5, 0.3, 0.2], [0.1, -0.8, 0.4], [0.3, -0.2, 2.0]],
            "t0": 0.0, "T": 1.0}"#,
    )
    .map_err(|e| e.to_string())?;
    for run in ["a", "b"] {
        let obs = format!("{run}/obs.csv");
        run_cli(d, &["simulate", "--config", "model.json", "--out", run, "--grid", "256", "--seed", "2024"])?;
        run_cli(d, &["estimate", "--config", "model.json", "--obs", &obs, "--out", run, "--worst-case"])?;
        run_cli(d, &["verify", "--config", "model.json", "--obs", &obs, "--out", run])?;
    }
    let mut identical = true;
    for file in ["truth.csv", "obs.csv", "xhat.csv", "qhat.csv", "results.json", "verify.json"] {
        identical &= fs::read(d.join("a").join(file)).ok() == fs::read(d.join("b").join(file)).ok();
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("a/verify.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let order = report["fitted_order"].as_f64().unwrap_or(f64::NAN);
    check(
        identical && order >= 1.5,
        format!("simulate -> estimate -> verify exit 0, byte-identical reruns = {identical}, verify order {order:.3} (>= 1.5)"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("Euler/oracle agreement", criterion_1),
        ("duality identity", criterion_2),
        ("admissibility dichotomy", criterion_3),
        ("a posteriori radius", criterion_4),
        ("DAE cross-validation", criterion_5),
        ("worst-case error", criterion_6),
        ("trivial closed forms", criterion_7),
        ("canonical form", criterion_8),
        ("CLI pipeline", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("acceptance {} [{tag}] {name}: {detail}", i + 1);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

