use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{json, Value};

use repgrowth::format::{parse_system, parse_vector_spec, serialize_system, system_to_json, to_canonical_string};
use repgrowth::linalg::RankPolicy;
use repgrowth::normalization::{apply_t, normalize, twin};
use repgrowth::oracle::{self, ReducedWord};
use repgrowth::report::{ReportDocument, SCHEMA};
use repgrowth::spectral::{self, classify_system, SpectralReport, Tolerances};
use repgrowth::sweep::{geometric_grid, SweepResult};
use repgrowth::system::{equivalence_maps, random_self_twin_system, random_system, random_vector, Alphabet, Letter, MatrixSystem};
use repgrowth::transfer::{self, coupling, Endpoints, Prepared, Weight};
use repgrowth::{Error, Result};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Cli, Command, WeightArg};

const IRREDUCIBILITY_TRIALS: usize = 8;

pub fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Check => check(cli),
        Command::Normalize => normalize_cmd(cli),
        Command::Twin => twin_cmd(cli),
        Command::Classify { trials } => classify(cli, *trials),
        Command::Coeff { word, a, b, v } => coeff(cli, word, a, b, v.as_deref()),
        Command::Verify { max_length, trials, corrupt } => verify(cli, *max_length, *trials, *corrupt),
        Command::Sweep { a, b, v, eps_min, eps_max, eps_steps, weight } => {
            let weight = match weight {
                WeightArg::Single => Weight::Single,
                WeightArg::Double => Weight::Double,
            };
            sweep(cli, a, b, v.as_deref(), *eps_min, *eps_max, *eps_steps, weight)
        }
        Command::Random { dims, self_twin } => random(cli, dims, *self_twin),
    }
}

fn load(cli: &Cli) -> Result<MatrixSystem> {
    let path = cli
        .input
        .as_ref()
        .ok_or_else(|| Error::Argument("--input is required for this command".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    parse_system(&text)
}

fn write_json(path: Option<&Path>, text: &str) -> Result<()> {
    if let Some(path) = path {
        fs::write(path, text)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn tolerances(cli: &Cli) -> Tolerances {
    Tolerances { equivalence: cli.tol, ..Tolerances::default() }
}

fn letter(alphabet: &Alphabet, name: &str) -> Result<Letter> {
    alphabet
        .letter(name)
        .ok_or_else(|| Error::Argument(format!("unknown letter \"{name}\"")))
}

/// Endpoints from letter names and an optional vector spec; letters the spec
/// does not mention get their first basis vector.
fn endpoints(system: &MatrixSystem, a: &str, b: &str, spec: Option<&str>) -> Result<Endpoints> {
    let al = system.alphabet();
    let (a, b) = (letter(al, a)?, letter(al, b)?);
    let mut ends = Endpoints::unit(system, a, b);
    if let Some(spec) = spec {
        for (l, v) in parse_vector_spec(al, spec)? {
            system.check_vector(l, &v)?;
            if l == a {
                ends.va = v.clone();
            }
            if l == b {
                ends.vb = v;
            }
        }
    }
    Ok(ends)
}

fn fmt_c(z: Complex64) -> String {
    format!("{:+.12e} {:+.12e}i", z.re, z.im)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |x| format!("{x:.12e}"))
}

fn check(cli: &Cli) -> Result<u8> {
    let system = load(cli)?;
    println!("valid: {system}");
    println!("blocks: {}", system.block_count());
    Ok(0)
}

fn normalize_cmd(cli: &Cli) -> Result<u8> {
    let system = load(cli)?;
    let norm = normalize(&system)?;
    println!("Perron value: {:.15e}", norm.scale * norm.scale);
    println!("blocks divided by: {:.15e}", norm.scale);
    println!("compatibility residual: {:.3e}", norm.residual);
    println!(
        "eigentuple eigenvalues: min {:.6e}, max {:.6e}, trace sum {:.6}",
        norm.forms.min_eigenvalue(),
        norm.forms.max_eigenvalue(),
        norm.forms.trace_sum()
    );
    if !norm.peripheral.is_empty() {
        println!("peripheral eigenvalues of T: {:?}", norm.peripheral);
    }
    write_json(cli.json_out.as_deref(), &serialize_system(&norm.system))?;
    Ok(0)
}

fn twin_cmd(cli: &Cli) -> Result<u8> {
    let system = load(cli)?;
    let norm = normalize(&system)?;
    let tw = twin(&norm)?;
    println!("twin: {}", tw.system);
    println!("twin Perron value: {:.15e}", tw.lambda);
    println!("twin compatibility residual: {:.3e}", tw.residual);
    let maps = equivalence_maps(&norm.system, &tw.system, RankPolicy::new(cli.tol))?;
    match maps {
        Some(m) if m.is_equivalence => println!("equivalent to twin: yes (intertwiner nullity {})", m.nullity),
        Some(m) => println!("equivalent to twin: no (singular intertwiner, nullity {})", m.nullity),
        None => println!("equivalent to twin: no"),
    }
    write_json(cli.json_out.as_deref(), &serialize_system(&tw.system))?;
    Ok(0)
}

fn print_report(system: &MatrixSystem, r: &SpectralReport) {
    println!("system: {system}");
    println!("irreducible: yes (no invariant subsystem found)");
    println!(
        "equivalent to twin: {} (intertwiner nullity {}, gap {:.3e})",
        if r.equivalent_to_twin { "yes" } else { "no" },
        r.intertwiner_nullity,
        r.intertwiner_gap
    );
    println!("spectral radius of D: {:.12}", r.spectral_radius);
    println!("multiplicity of eigenvalue 1: {} (per slot pair {:?})", r.multiplicity_one(), r.cluster.per_block);
    let sizes: Vec<String> = r.jordan.sizes.iter().map(ToString::to_string).collect();
    println!("Jordan profile at 1: {{{}}}", sizes.join(","));
    println!("k0 = {:.12e}", r.k_zero);
    println!("E0 = {}", fmt_opt(r.e_zero()));
    if let Some(l) = r.lambda_defect() {
        println!("lambda = {l:.12e}");
    }
    if r.size_two_in_equivalent_case {
        println!("note: Jordan block of size two in the equivalent case");
    }
    println!("alpha = {}; verdict: {}", r.alpha, r.verdict.text());
    println!("justification: {}", r.justification);
}

fn classify(cli: &Cli, trials: usize) -> Result<u8> {
    let system = load(cli)?;
    let (prep, report) = classify_system(&system, trials, cli.seed, tolerances(cli))?;
    print_report(&system, &report);
    let doc = ReportDocument::new(&report, prep.system());
    write_json(cli.json_out.as_deref(), &doc.to_canonical())?;
    Ok(0)
}

fn coeff(cli: &Cli, word: &str, a: &str, b: &str, spec: Option<&str>) -> Result<u8> {
    let system = load(cli)?;
    let prep = Prepared::new(&system)?;
    let x = ReducedWord::parse(system.alphabet(), word)?;
    let ends = endpoints(prep.system(), a, b, spec)?;
    let values: Vec<(&str, Complex64)> = if x.is_empty() {
        vec![("identity", ends.identity_coefficient(&prep.norm))]
    } else {
        oracle::coefficient_all(&prep, &x, &ends)?
            .iter()
            .map(|r| (r.method.label(), r.value))
            .collect()
    };
    println!("x = {}", x.display(system.alphabet()));
    for (label, z) in &values {
        println!("{label:>17}: {}", fmt_c(*z));
    }
    let zs: Vec<Complex64> = values.iter().map(|v| v.1).collect();
    let spread = oracle::relative_spread(&zs, 0.0);
    println!("max relative deviation: {spread:.3e}");
    let doc = json!({
        "schema": SCHEMA,
        "word": x.display(system.alphabet()).to_string(),
        "values": values.iter().map(|(l, z)| ((*l).to_string(), json!([z.re, z.im]))).collect::<serde_json::Map<_, _>>(),
        "relative_deviation": spread,
    });
    write_json(cli.json_out.as_deref(), &to_canonical_string(&doc))?;
    Ok(0)
}

struct Check {
    name: &'static str,
    deviation: f64,
    threshold: f64,
}

impl Check {
    fn pass(&self) -> bool {
        self.deviation <= self.threshold
    }
}

fn random_ends(system: &MatrixSystem, rng: &mut ChaCha8Rng) -> Endpoints {
    let n = system.alphabet().len();
    let a = Letter::from_index(rng.random_range(0..n));
    let b = Letter::from_index(rng.random_range(0..n));
    Endpoints::new(a, random_vector(rng, system.dim(a)), b, random_vector(rng, system.dim(b)))
}

fn random_word(n: usize, len: usize, rng: &mut ChaCha8Rng) -> ReducedWord {
    let mut w: Vec<Letter> = Vec::with_capacity(len);
    while w.len() < len {
        let l = Letter::from_index(rng.random_range(0..n));
        if w.last().is_none_or(|p| !p.cancels(l)) {
            w.push(l);
        }
    }
    ReducedWord::new(w).expect("built reduced")
}

fn verify(cli: &Cli, max_length: usize, trials: usize, corrupt: bool) -> Result<u8> {
    if max_length == 0 {
        return Err(Error::Argument("J must be ≥ 1".into()));
    }
    let system = load(cli)?;
    let mut prep = Prepared::new(&system)?;
    if corrupt {
        // The transfer operator keeps the clean data; every oracle sees the
        // perturbed blocks.
        let mut first = true;
        prep.norm.system = prep.norm.system.map_blocks(|_, _, h| {
            let mut h = h.clone();
            if std::mem::take(&mut first) {
                h[(0, 0)] += Complex64::new(0.1, 0.0);
            }
            h
        })?;
        println!("corrupted one block of the normalized system");
    }
    let tol = cli.tol;
    let n_letters = system.alphabet().len();
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let mut checks = Vec::new();

    let compat = apply_t(&prep.norm.system, &prep.norm.forms)?.max_abs_diff(&prep.norm.forms);
    checks.push(Check { name: "compatibility residual", deviation: compat, threshold: tol });

    let adjoint = coupling(&prep.norm, &prep.twin).adjoint_defect();
    checks.push(Check { name: "adjoint identity for E", deviation: adjoint, threshold: tol });

    let mut sphere: f64 = 0.0;
    let mut coeffs: f64 = 0.0;
    let mut haagerup: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let ends = random_ends(prep.system(), &mut rng);
        let bv = prep.boundary_vectors(&ends)?;
        for c in system.alphabet().letters() {
            for d in system.alphabet().letters() {
                for j in 1..=max_length {
                    let fast = transfer::sphere_sum(&prep.op, &bv, j, c, d).value;
                    let slow = oracle::sphere_sum_brute(&prep, j, c, d, &ends)?;
                    sphere = sphere.max((fast - slow).abs() / (1.0 + slow.abs()));
                }
            }
        }
        let scale = 1e-12 * (ends.norm_f(&prep.norm) * ends.norm_g(&prep.norm)).sqrt();
        for _ in 0..50 {
            let len = rng.random_range(1..=max_length);
            let x = random_word(n_letters, len, &mut rng);
            let zs: Vec<Complex64> = oracle::coefficient_all(&prep, &x, &ends)?.iter().map(|r| r.value).collect();
            coeffs = coeffs.max(oracle::relative_spread(&zs, scale));
        }
        haagerup = haagerup.max(transfer::haagerup_ratio(&prep.norm, &prep.op, &bv, &ends, 10));
    }
    checks.push(Check { name: "sphere sums vs enumeration", deviation: sphere, threshold: tol });
    checks.push(Check { name: "three-way coefficient agreement", deviation: coeffs, threshold: tol });
    checks.push(Check { name: "Haagerup bound, sphere sum / (n+1)^2 |f|^2 |g|^2 for 1 <= n <= 10", deviation: haagerup, threshold: 1.0 });

    for c in &checks {
        println!(
            "{} {}: max {:.3e} (threshold {:.1e})",
            if c.pass() { "PASS" } else { "FAIL" },
            c.name,
            c.deviation,
            c.threshold
        );
    }
    let doc = json!({
        "schema": SCHEMA,
        "max_length": max_length,
        "checks": checks.iter().map(|c| json!({
            "name": c.name, "deviation": c.deviation, "threshold": c.threshold, "pass": c.pass(),
        })).collect::<Vec<Value>>(),
    });
    write_json(cli.json_out.as_deref(), &to_canonical_string(&doc))?;
    match checks.iter().find(|c| !c.pass()) {
        None => {
            println!("verify: all checks passed");
            Ok(0)
        }
        Some(c) => {
            println!("verify: FAILED; first violated identity: {}", c.name);
            Ok(1)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    cli: &Cli,
    a: &str,
    b: &str,
    spec: Option<&str>,
    eps_min: f64,
    eps_max: f64,
    steps: usize,
    weight: Weight,
) -> Result<u8> {
    let system = load(cli)?;
    let (prep, report) = classify_system(&system, IRREDUCIBILITY_TRIALS, cli.seed, tolerances(cli))?;
    let ends = endpoints(prep.system(), a, b, spec)?;
    let grid = geometric_grid(eps_min, eps_max, steps)?;
    let values = grid
        .par_iter()
        .map(|&eps| prep.phi_norm(&ends, eps, weight))
        .collect::<Result<Vec<f64>>>()?;
    let result = SweepResult::from_values(grid, values)?;

    println!("{:>14}  {:>22}", "eps", "phi_norm");
    for (e, v) in result.eps_grid.iter().zip(&result.values) {
        println!("{e:>14.6e}  {v:>22.15e}");
    }
    println!("fitted alpha = {:.4} (max log residual {:.2e})", result.fitted_alpha, result.fit_residual);
    println!("spectral alpha = {}", report.alpha);

    let mut constant = Value::Null;
    if report.alpha == 2 {
        if let Some(e0) = report.e_zero() {
            let eps = *result.eps_grid.last().expect("non-empty grid");
            let measured = weight.effective(eps).powi(2) * result.values.last().expect("non-empty grid");
            let predicted = spectral::asymptotic_constant(&prep, &ends, e0, report.k_zero);
            let rel = (measured - predicted).abs() / predicted.abs();
            println!("eps^2 phi_norm at eps = {eps:.3e}: {measured:.10e}");
            println!("(E0/k0^2) B_a(v_a,v_a) B_b(v_b,v_b) = {predicted:.10e} (relative difference {rel:.3e})");
            constant = json!({ "eps": eps, "measured": measured, "predicted": predicted, "relative_difference": rel });
        }
    }

    let diff = (result.fitted_alpha - report.alpha as f64).abs();
    let doc = json!({
        "schema": SCHEMA,
        "sweep": result,
        "spectral_alpha": report.alpha,
        "asymptotic_constant": constant,
        "system": system_to_json(prep.system()),
    });
    write_json(cli.json_out.as_deref(), &to_canonical_string(&doc))?;
    if diff <= 0.1 {
        println!("sweep: fitted and spectral exponents agree");
        Ok(0)
    } else {
        println!("sweep: fitted exponent differs from spectral by {diff:.3}");
        Ok(1)
    }
}

fn random(cli: &Cli, dims: &[usize], self_twin: bool) -> Result<u8> {
    if dims.is_empty() || !dims.len().is_multiple_of(2) || dims.contains(&0) {
        return Err(Error::Argument("--dims needs an even number of positive entries".into()));
    }
    let alphabet = Alphabet::standard(dims.len() / 2);
    let system = if self_twin {
        random_self_twin_system(&alphabet, dims, cli.seed)?
    } else {
        random_system(&alphabet, dims, cli.seed)?
    };
    let text = serialize_system(&system);
    match &cli.json_out {
        Some(path) => write_json(Some(path), &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}
