//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repgrowth::linalg::CMat;
use repgrowth::oracle::{self, ReducedWord};
use repgrowth::spectral::{self, classify_growth, SpectralReport, Tolerances};
use repgrowth::sweep::{geometric_grid, run_sweep};
use repgrowth::system::{is_irreducible, random_self_twin_system, random_system, random_vector, Alphabet, Letter, MatrixSystem};
use repgrowth::transfer::{self, Endpoints, Prepared, Weight};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn iso2_system() -> MatrixSystem {
    MatrixSystem::from_fn(Alphabet::standard(2), vec![1; 4], |_, _| {
        CMat::from_element(1, 1, Complex64::from(3f64.sqrt().recip()))
    })
    .unwrap()
}

fn iso2() -> Prepared {
    Prepared::new(&iso2_system()).unwrap()
}

fn letter(p: &Prepared, name: &str) -> Letter {
    p.system().alphabet().letter(name).unwrap()
}

fn random_ends(p: &Prepared, rng: &mut ChaCha8Rng) -> Endpoints {
    let n = p.system().alphabet().len();
    let a = Letter::from_index(rng.random_range(0..n));
    let b = Letter::from_index(rng.random_range(0..n));
    Endpoints::new(a, random_vector(rng, p.system().dim(a)), b, random_vector(rng, p.system().dim(b)))
}

fn random_word(n: usize, len: usize, rng: &mut ChaCha8Rng) -> ReducedWord {
    let mut w: Vec<Letter> = Vec::new();
    while w.len() < len {
        let l = Letter::from_index(rng.random_range(0..n));
        if w.last().is_none_or(|p| !p.cancels(l)) {
            w.push(l);
        }
    }
    ReducedWord::new(w).unwrap()
}

fn dims_for(seed: u64) -> Vec<usize> {
    const CHOICES: [[usize; 4]; 4] = [[1, 1, 1, 1], [2, 1, 1, 2], [1, 2, 2, 1], [2, 2, 2, 2]];
    CHOICES[(seed % 4) as usize].to_vec()
}

/// Random irreducible systems with `|A| = 4` and dims ≤ 2, seeds from 1.
fn random_irreducible(count: usize) -> Vec<(u64, Prepared)> {
    let al = Alphabet::standard(2);
    let mut out = Vec::new();
    let mut seed = 1;
    while out.len() < count {
        let s = random_system(&al, &dims_for(seed), seed).unwrap();
        if is_irreducible(&s, 8, seed).is_irreducible() {
            out.push((seed, Prepared::new(&s).unwrap()));
        }
        seed += 1;
    }
    out
}

/// The full test population: ISO2, random generic systems and random
/// self-twin systems, each classified once.
struct Population {
    systems: Vec<(String, Prepared, SpectralReport)>,
}

impl Population {
    fn build() -> Self {
        let mut systems = Vec::new();
        let iso = iso2();
        let r = classify_growth(&iso, Tolerances::default()).unwrap();
        systems.push(("iso2".to_string(), iso, r));
        for (seed, p) in random_irreducible(18) {
            let r = classify_growth(&p, Tolerances::default()).unwrap();
            systems.push((format!("random seed {seed} dims {:?}", p.system().dims()), p, r));
        }
        let al = Alphabet::standard(2);
        for seed in 1..=6u64 {
            let dims = if seed % 2 == 0 { vec![2; 4] } else { vec![1; 4] };
            let s = random_self_twin_system(&al, &dims, 100 + seed).unwrap();
            if !is_irreducible(&s, 8, seed).is_irreducible() {
                continue;
            }
            let p = Prepared::new(&s).unwrap();
            let r = classify_growth(&p, Tolerances::default()).unwrap();
            systems.push((format!("self-twin seed {} dims {:?}", 100 + seed, dims), p, r));
        }
        Self { systems }
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut preps = vec![iso2()];
    preps.extend(random_irreducible(5).into_iter().map(|(_, p)| p));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for p in &preps {
        let ends = random_ends(p, &mut rng);
        let bv = p.boundary_vectors(&ends).unwrap();
        for c in p.system().alphabet().letters() {
            for d in p.system().alphabet().letters() {
                for j in 1..=7 {
                    let fast = transfer::sphere_sum(&p.op, &bv, j, c, d).value;
                    let slow = oracle::sphere_sum_brute(p, j, c, d, &ends).unwrap();
                    worst = worst.max((fast - slow).abs() / (1.0 + slow.abs()));
                    checks += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs < 30.0,
        format!("{checks} sphere sums, max scaled deviation {worst:.2e}, {secs:.2} s"),
    )
}

fn criterion_2() -> Outcome {
    let preps: Vec<Prepared> = random_irreducible(5).into_iter().map(|(_, p)| p).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let p = &preps[k % preps.len()];
        let ends = random_ends(p, &mut rng);
        let len = rng.random_range(1..=5);
        let x = random_word(p.system().alphabet().len(), len, &mut rng);
        let recs = oracle::coefficient_all(p, &x, &ends).unwrap();
        let values: Vec<Complex64> = recs.iter().map(|r| r.value).collect();
        let scale = 1e-12 * (ends.norm_f(&p.norm) * ends.norm_g(&p.norm)).sqrt();
        worst = worst.max(oracle::relative_spread(&values, scale));
    }
    outcome(worst <= 1e-9, format!("1000 words, max relative deviation {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let p = iso2();
    let report = classify_growth(&p, Tolerances::default()).unwrap();
    let ends = Endpoints::unit(p.system(), letter(&p, "a"), letter(&p, "b"));
    let grid = geometric_grid(1e-3, 1e-1, 20).unwrap();
    let sweep = run_sweep(&p, &ends, &grid, Weight::Single).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = (sweep.fitted_alpha - 3.0).abs() <= 0.05
        && report.jordan.sizes == vec![3, 1]
        && report.multiplicity_one() == 4
        && secs < 5.0;
    outcome(
        pass,
        format!(
            "fitted alpha {:.4}, profile {:?}, multiplicity {}, {secs:.2} s",
            sweep.fitted_alpha,
            report.jordan.sizes,
            report.multiplicity_one()
        ),
    )
}

fn criterion_4(pop: &Population) -> Outcome {
    let found = pop.systems.iter().find(|(_, _, r)| {
        !r.equivalent_to_twin && r.e_zero().is_some_and(|e| e > 1e-6 * r.k_zero) && r.alpha == 2
    });
    let Some((name, p, r)) = found else {
        return outcome(false, "no inequivalent system with E0 > 1e-6 k0".into());
    };
    let mut worst: f64 = 0.0;
    let letters: Vec<Letter> = p.system().alphabet().letters().collect();
    for &a in &letters {
        for &b in &letters {
            let ends = Endpoints::unit(p.system(), a, b);
            let predicted = spectral::asymptotic_constant(p, &ends, r.e_zero().unwrap(), r.k_zero);
            let measured = spectral::scaled_phi(p, &ends, 1e-3, 2, Weight::Single).unwrap();
            worst = worst.max((measured - predicted).abs() / predicted);
        }
    }
    outcome(
        worst <= 0.02,
        format!("{name}: E0/k0 = {:.3e}, max relative error of eps^2 phi over 16 endpoint pairs {worst:.2e}", r.e_zero().unwrap() / r.k_zero),
    )
}

fn criterion_5(pop: &Population) -> Outcome {
    let mut bad = Vec::new();
    let mut twos = 0;
    let mut fours = 0;
    for (name, _, r) in &pop.systems {
        let m = r.multiplicity_one();
        match m {
            2 => twos += 1,
            4 => fours += 1,
            _ => {}
        }
        let signal_ok = r.equivalent_to_twin == r.cluster.cross_signal() && r.equivalent_to_twin == (m == 4);
        if !(m == 2 || m == 4) || !signal_ok {
            bad.push(name.clone());
        }
    }
    outcome(
        bad.is_empty() && pop.systems.len() >= 20,
        format!("{} systems ({twos} with multiplicity 2, {fours} with 4), disagreements: {bad:?}", pop.systems.len()),
    )
}

fn criterion_6(pop: &Population) -> Outcome {
    let residuals: Vec<f64> = pop.systems.iter().filter_map(|(_, _, r)| r.defect.as_ref().map(|d| d.q_residual)).collect();
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    outcome(
        !residuals.is_empty() && worst <= 1e-8,
        format!("{} inequivalent systems, max Q residual {worst:.2e}", residuals.len()),
    )
}

fn criterion_7(pop: &Population) -> Outcome {
    let mut min_e0 = f64::INFINITY;
    let mut worst_gap: f64 = 0.0;
    let mut count = 0;
    for (_, _, r) in &pop.systems {
        if let Some(d) = &r.defect {
            let e = &d.e_zero;
            min_e0 = min_e0.min(e.sum_of_squares.min(e.three_term));
            let scale = e.sum_of_squares.abs().max(e.three_term.abs()).max(r.k_zero);
            worst_gap = worst_gap.max((e.sum_of_squares - e.three_term).abs() / scale);
            count += 1;
        }
    }
    outcome(
        count > 0 && min_e0 >= -1e-10 && worst_gap <= 1e-9,
        format!("{count} systems, min E0 {min_e0:.3e}, max relative gap between forms {worst_gap:.2e}"),
    )
}

fn criterion_8() -> Outcome {
    let p = iso2();
    let ends = Endpoints::unit(p.system(), letter(&p, "a"), letter(&p, "b"));
    let bl = spectral::boundary_limit(&p, letter(&p, "b"), &ends, &[1e-2, 5e-3, 2.5e-3]).unwrap();
    let pass = (bl.prediction - 1.0 / 12.0).abs() < 1e-12 && bl.relative_error <= 0.01;
    outcome(
        pass,
        format!("prediction {:.10}, extrapolated {:.10}, relative error {:.2e}", bl.prediction, bl.extrapolated, bl.relative_error),
    )
}

fn criterion_9(pop: &Population) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_ratio: f64 = 0.0;
    let mut worst_positive: f64 = 0.0;
    let mut worst_radius: f64 = 0.0;
    for (_, p, r) in &pop.systems {
        worst_radius = worst_radius.max((r.spectral_radius - 1.0).abs());
        for _ in 0..4 {
            let ends = random_ends(p, &mut rng);
            let bv = p.boundary_vectors(&ends).unwrap();
            let scale = ends.norm_f(&p.norm) * ends.norm_g(&p.norm);
            for (n, t) in transfer::sphere_totals(&p.norm, &p.op, &bv, &ends, 10).iter().enumerate() {
                let ratio = t / ((n + 1) as f64).powi(2) / scale;
                worst_ratio = worst_ratio.max(ratio);
                if n > 0 {
                    worst_positive = worst_positive.max(ratio);
                }
            }
        }
    }
    // n = 0 is Cauchy–Schwarz and saturates for parallel endpoints.
    outcome(
        worst_ratio <= 1.0 + 1e-12 && worst_radius <= 1e-6,
        format!(
            "max sphere-sum / bound ratio {worst_ratio:.6} (n >= 1: {worst_positive:.6}), max |rho(D) - 1| {worst_radius:.2e}"
        ),
    )
}

fn criterion_10(pop: &Population) -> Outcome {
    let mut adjoint: f64 = 0.0;
    let mut compat: f64 = 0.0;
    for (_, p, _) in &pop.systems {
        adjoint = adjoint.max(p.coupling.adjoint_defect());
        compat = compat.max(p.norm.residual).max(p.twin.residual);
    }
    outcome(
        adjoint <= 1e-10 && compat <= 1e-10,
        format!("max adjoint defect {adjoint:.2e}, max compatibility residual {compat:.2e}"),
    )
}

fn main() -> ExitCode {
    let pop = Population::build();
    let results = [
        ("1 transfer identity for sphere sums", criterion_1()),
        ("2 three-way coefficient agreement", criterion_2()),
        ("3 isotropic exponent", criterion_3()),
        ("4 inequivalent asymptotic constant", criterion_4(&pop)),
        ("5 multiplicity dichotomy", criterion_5(&pop)),
        ("6 Q-map residual", criterion_6(&pop)),
        ("7 E0 positivity and dual forms", criterion_7(&pop)),
        ("8 boundary limit", criterion_8()),
        ("9 Haagerup bound and spectral radius", criterion_9(&pop)),
        ("10 adjoint identity and compatibility", criterion_10(&pop)),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
