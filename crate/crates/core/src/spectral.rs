//! Eigenvalue-1 analysis of `D` and the growth classification built on it.
//!
//! `D` is block upper triangular over the slot pairs
//! `(hat, hat) ≺ (hat, plain), (plain, hat) ≺ (plain, plain)`, so its spectrum
//! is the union of the spectra of the four diagonal blocks. The two outer
//! blocks always carry the eigenvalue 1; the two cross blocks carry it exactly
//! when the system is equivalent to its twin.

use nalgebra::SVD;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, RankPolicy};
use crate::oracle::{self, Elementary, ReducedWord};
use crate::system::{equivalence_maps, intertwiner_matrix, is_irreducible, IrreducibilityVerdict, Letter, MatrixSystem};
use crate::transfer::{psi_grid, Endpoints, Prepared, Resolvent, Slot, TransferOperator, Weight, SLOT_PAIRS};

const HH: (Slot, Slot) = (Slot::Hat, Slot::Hat);
const HP: (Slot, Slot) = (Slot::Hat, Slot::Plain);
const PH: (Slot, Slot) = (Slot::Plain, Slot::Hat);
const PP: (Slot, Slot) = (Slot::Plain, Slot::Plain);

/// Numerical thresholds of the classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Radius around 1 within which an eigenvalue counts as 1.
    pub cluster: f64,
    /// Relative singular-value threshold for the ranks of `(D − I)^k`.
    pub rank: f64,
    /// `E₀` counts as zero when `E₀ ≤ e_zero · k₀`.
    pub e_zero: f64,
    /// Relative threshold for the intertwiner null space.
    pub equivalence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { cluster: 1e-7, rank: 1e-7, e_zero: 1e-8, equivalence: 1e-9 }
    }
}

/// Eigenvalues of `D` near 1, counted block by block.
#[derive(Debug, Clone)]
pub struct EigenCluster {
    pub count: usize,
    /// Count per slot pair, in the order of [`SLOT_PAIRS`].
    pub per_block: [usize; 4],
    pub eigenvalues: Vec<Complex64>,
}

impl EigenCluster {
    /// 1 is an eigenvalue of a cross block `(hat, plain)` or `(plain, hat)`.
    pub fn cross_signal(&self) -> bool {
        self.per_block[1] > 0 || self.per_block[2] > 0
    }
}

fn diagonal_spectra(op: &TransferOperator) -> Vec<((Slot, Slot), Vec<Complex64>)> {
    SLOT_PAIRS
        .iter()
        .map(|&p| (p, linalg::eigenvalues(&op.slot_pair_block(p, p))))
        .collect()
}

/// Spectral radius of `D`, read off its diagonal blocks.
pub fn spectral_radius(op: &TransferOperator) -> f64 {
    diagonal_spectra(op)
        .iter()
        .flat_map(|(_, ev)| ev.iter().map(|z| z.norm()))
        .fold(0.0, f64::max)
}

/// Algebraic multiplicity of the eigenvalue 1 of `D`.
///
/// Within each diagonal block the eigenvalue 1 is simple, so the Schur
/// eigenvalues there are accurate to rounding; counting on the full `D` would
/// have to cope with the `u^{1/s}` spread of a size-`s` Jordan block.
pub fn eig_one_multiplicity(op: &TransferOperator, tol: f64) -> Result<EigenCluster> {
    let mut per_block = [0; 4];
    let mut eigenvalues = Vec::new();
    let mut spectrum = Vec::new();
    for (k, (_, ev)) in diagonal_spectra(op).into_iter().enumerate() {
        for z in ev {
            let dist = (z - 1.0).norm();
            if dist <= tol {
                per_block[k] += 1;
                eigenvalues.push(z);
            } else if dist < 10.0 * tol {
                spectrum.push(z);
                return Err(Error::Ambiguity(format!(
                    "eigenvalue {z} at distance {dist:e} from 1 does not separate from the cluster"
                )));
            }
            spectrum.push(z);
        }
    }
    Ok(EigenCluster { count: eigenvalues.len(), per_block, eigenvalues })
}

/// Jordan structure of `D` at the eigenvalue 1.
#[derive(Debug, Clone)]
pub struct JordanProfile {
    /// Block sizes, largest first.
    pub sizes: Vec<usize>,
    /// `rank (D − I)^k` for `k = 1..=m`.
    pub ranks: Vec<usize>,
    /// `dim ker (D − I)^k`.
    pub kernel_dims: Vec<usize>,
    /// The smallest `m + 2` singular values of each `(D − I)^k`, ascending.
    pub ladders: Vec<Vec<f64>>,
}

impl JordanProfile {
    pub fn geometric_dim(&self) -> usize {
        self.kernel_dims.first().copied().unwrap_or(0)
    }

    pub fn max_size(&self) -> usize {
        self.sizes.first().copied().unwrap_or(0)
    }
}

/// Block sizes from the ranks of `(D − I)^k`, `k = 1..=m`, with `m` the
/// algebraic multiplicity.
pub fn jordan_profile(dee: &CMat, multiplicity: usize, rank_tol: f64) -> Result<JordanProfile> {
    let n = dee.nrows();
    let shifted = dee - CMat::identity(n, n);
    let policy = RankPolicy::new(rank_tol);
    let mut power = CMat::identity(n, n);
    let mut ranks = Vec::with_capacity(multiplicity);
    let mut ladders = Vec::with_capacity(multiplicity);
    for _ in 0..multiplicity {
        power = &shifted * power;
        let sv = linalg::singular_values(&power);
        let cut = policy.cutoff(&sv);
        ranks.push(sv.iter().filter(|&&s| s > cut).count());
        ladders.push(sv.iter().rev().take(multiplicity + 2).copied().collect());
    }
    let kernel_dims: Vec<usize> = ranks.iter().map(|r| n - r).collect();
    let consistent = kernel_dims.windows(2).all(|w| w[1] >= w[0])
        && kernel_dims.last().is_none_or(|&d| d == multiplicity);
    if !consistent {
        return Err(Error::Ambiguity(format!(
            "inconsistent kernel ladder {kernel_dims:?} for multiplicity {multiplicity}; smallest singular values {ladders:?}"
        )));
    }
    // at_least[k] = number of blocks of size ≥ k + 1
    let mut at_least: Vec<usize> = Vec::with_capacity(multiplicity);
    let mut prev = 0;
    for &d in &kernel_dims {
        at_least.push(d - prev);
        prev = d;
    }
    if at_least.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Ambiguity(format!("kernel ladder {kernel_dims:?} is not concave")));
    }
    let mut sizes = Vec::new();
    for (k, &count) in at_least.iter().enumerate() {
        let next = at_least.get(k + 1).copied().unwrap_or(0);
        sizes.extend(std::iter::repeat_n(k + 1, count - next));
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    Ok(JordanProfile { sizes, ranks, kernel_dims, ladders })
}

/// The maps `Q_b: V_b → V̂_b` solving `Σ_b Ĥ_ab Q_b P_b H_ab† + E_ab P_b H_ab† = Q_a P_a`,
/// with `P_b = M̂_{b⁻¹}`.
#[derive(Debug, Clone)]
pub struct DefectMaps {
    pub q_blocks: Vec<CMat>,
    pub p_blocks: Vec<CMat>,
    pub residual: f64,
}

fn p_blocks(prep: &Prepared) -> Vec<CMat> {
    prep.system()
        .alphabet()
        .letters()
        .map(|b| prep.twin.forms.get(b.inverse()).clone())
        .collect()
}

pub fn q_maps(prep: &Prepared) -> Result<DefectMaps> {
    let op = &prep.op;
    let d33 = op.slot_pair_block(HP, HP);
    let d34 = op.slot_pair_block(HP, PP);
    let n = d33.nrows();
    let p = p_blocks(prep);
    let rhs = d34 * op.pack_pair(PP, &p);
    let lhs = CMat::identity(n, n) - d33;
    let lu = lhs.lu();
    let diag: Vec<f64> = lu.u().diagonal().iter().map(|z| z.norm()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 1e-10 * max) {
        return Err(Error::SystemsEquivalent);
    }
    let r3 = lu.solve(&rhs).ok_or(Error::SystemsEquivalent)?;
    let r3 = op.unpack_pair(HP, r3.as_slice());
    let mut q_blocks = Vec::with_capacity(r3.len());
    for (r, pb) in r3.iter().zip(&p) {
        let inv = pb
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Contract("twin form is singular".into()))?;
        q_blocks.push(r * inv);
    }
    let mut maps = DefectMaps { q_blocks, p_blocks: p, residual: 0.0 };
    maps.residual = q_residual(prep, &maps);
    if maps.residual > 1e-8 {
        return Err(Error::Contract(format!("Q-map residual {:e} exceeds 1e-8", maps.residual)));
    }
    Ok(maps)
}

fn q_residual(prep: &Prepared, maps: &DefectMaps) -> f64 {
    let sys = prep.system();
    let (q, p) = (&maps.q_blocks, &maps.p_blocks);
    let mut worst: f64 = 0.0;
    for a in sys.alphabet().letters() {
        let mut acc = -(&q[a.index()] * &p[a.index()]);
        for b in sys.alphabet().letters().filter(|b| !a.cancels(*b)) {
            let h = sys.block(a, b).expect("ab ≠ e");
            let hat = prep.twin.system.block(a, b).expect("ab ≠ e");
            let e = prep.coupling.get(a, b);
            acc += (hat * &q[b.index()] + e) * &p[b.index()] * h.adjoint();
        }
        worst = worst.max(linalg::max_abs(&acc));
    }
    worst
}

/// `Σ_c tr(M̂_c M_{c⁻¹})`.
pub fn k_zero(prep: &Prepared) -> f64 {
    prep.system()
        .alphabet()
        .letters()
        .map(|c| linalg::trace(&(prep.twin.forms.get(c) * prep.norm.forms.get(c.inverse()))).re)
        .sum()
}

/// The defect invariant in its two algebraically equal forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EZero {
    /// `Σ tr(M̂_a C_ab P_b C_ab†)` with `C_ab = Ĥ_ab Q_b + E_ab − Q_a H_ab`.
    pub sum_of_squares: f64,
    /// `Σ tr(M̂_a (E P Q† Ĥ† + Ĥ Q P E† + E P E†))`.
    pub three_term: f64,
    /// `max_ab ‖C_ab‖_max`: zero exactly when the cocycle relations hold.
    pub cocycle_residual: f64,
}

impl EZero {
    pub fn value(&self) -> f64 {
        self.sum_of_squares
    }
}

pub fn e_zero(prep: &Prepared, maps: &DefectMaps, k0: f64) -> Result<EZero> {
    let sys = prep.system();
    let (q, p) = (&maps.q_blocks, &maps.p_blocks);
    let mut squares = linalg::ZERO;
    let mut three = linalg::ZERO;
    let mut cocycle: f64 = 0.0;
    for (a, b, h) in sys.blocks() {
        let hat = prep.twin.system.block(a, b).expect("ab ≠ e");
        let e = prep.coupling.get(a, b);
        let mh = prep.twin.forms.get(a);
        let (qa, qb, pb) = (&q[a.index()], &q[b.index()], &p[b.index()]);
        let c = hat * qb + e - qa * h;
        cocycle = cocycle.max(linalg::max_abs(&c));
        squares += linalg::trace(&(mh * &c * pb * c.adjoint()));
        let epq = e * pb * qb.adjoint() * hat.adjoint();
        let hqp = hat * qb * pb * e.adjoint();
        let epe = e * pb * e.adjoint();
        three += linalg::trace(&(mh * (epq + hqp + epe)));
    }
    let out = EZero { sum_of_squares: squares.re, three_term: three.re, cocycle_residual: cocycle };
    if out.sum_of_squares < -1e-10 || out.three_term < -1e-10 {
        return Err(Error::Contract(format!(
            "negative defect invariant ({:e}, {:e})",
            out.sum_of_squares, out.three_term
        )));
    }
    let scale = out.sum_of_squares.abs().max(out.three_term.abs()).max(k0);
    if (out.sum_of_squares - out.three_term).abs() > 1e-9 * scale {
        return Err(Error::Contract(format!(
            "defect invariant forms disagree: {} vs {}",
            out.sum_of_squares, out.three_term
        )));
    }
    Ok(out)
}

/// Generalized eigenvector `W` with `D W − W = λ U`, `U = (M_{b⁻¹})` in the
/// `(hat, hat)` slot pair.
#[derive(Debug, Clone)]
pub struct DefectVector {
    pub lambda: f64,
    pub w: CVec,
    pub residual: f64,
}

pub fn defect_vector(prep: &Prepared, maps: &DefectMaps, lambda: f64) -> DefectVector {
    let op = &prep.op;
    let sys = prep.system();
    let (q, p) = (&maps.q_blocks, &maps.p_blocks);
    let u_blocks: Vec<CMat> = sys.alphabet().letters().map(|b| prep.norm.forms.get(b.inverse()).clone()).collect();
    let w3: Vec<CMat> = q.iter().zip(p).map(|(qb, pb)| qb * pb).collect();
    let w2: Vec<CMat> = q.iter().zip(p).map(|(qb, pb)| pb * qb.adjoint()).collect();
    let (w2, w3, w4) = (op.pack_pair(PH, &w2), op.pack_pair(HP, &w3), op.pack_pair(PP, p));
    let u = op.pack_pair(HH, &u_blocks);

    let d11 = op.slot_pair_block(HH, HH);
    let n1 = d11.nrows();
    let rhs = op.slot_pair_block(HH, PH) * &w2 + op.slot_pair_block(HH, HP) * &w3 + op.slot_pair_block(HH, PP) * &w4
        - &u * Complex64::from(lambda);
    let svd = SVD::new(CMat::identity(n1, n1) - d11, true, true);
    let top = svd.singular_values.max();
    let w1 = svd.solve(&rhs, 1e-10 * top).expect("both factors computed");

    let mut w = CVec::zeros(op.dim());
    let mut u_full = CVec::zeros(op.dim());
    for (pair, part) in [(HH, &w1), (PH, &w2), (HP, &w3), (PP, &w4)] {
        let r = op.pair_range(pair);
        w.rows_mut(r.start, r.len()).copy_from(part);
    }
    let r = op.pair_range(HH);
    u_full.rows_mut(r.start, r.len()).copy_from(&u);
    let defect = &op.dee * &w - &w - u_full * Complex64::from(lambda);
    let residual = defect.iter().map(|z| z.norm()).fold(0.0, f64::max);
    DefectVector { lambda, w, residual }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    UniqueRealizationIrreducible,
    Inconclusive,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::UniqueRealizationIrreducible => "unique-realization-and-irreducible",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            Verdict::UniqueRealizationIrreducible => "unique boundary realization; irreducible as Γ-representation",
            Verdict::Inconclusive => "inconclusive (growth hypothesis not met)",
        }
    }
}

/// The inequivalent-branch invariants.
#[derive(Debug, Clone)]
pub struct DefectSummary {
    pub q_residual: f64,
    pub e_zero: EZero,
    pub lambda_defect: f64,
    /// Present when `E₀` is above threshold.
    pub w_residual: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub equivalent_to_twin: bool,
    /// Smallest singular value of the intertwiner system, relative to the largest.
    pub intertwiner_gap: f64,
    pub intertwiner_nullity: usize,
    pub spectral_radius: f64,
    pub cluster: EigenCluster,
    pub jordan: JordanProfile,
    pub k_zero: f64,
    pub defect: Option<DefectSummary>,
    pub alpha: usize,
    pub verdict: Verdict,
    pub justification: String,
    /// Equivalent system with a Jordan block of size exactly two.
    pub size_two_in_equivalent_case: bool,
    pub peripheral: Vec<Complex64>,
    pub normalization_scale: f64,
    pub normalization_residual: f64,
}

impl SpectralReport {
    pub fn multiplicity_one(&self) -> usize {
        self.cluster.count
    }

    pub fn e_zero(&self) -> Option<f64> {
        self.defect.as_ref().map(|d| d.e_zero.value())
    }

    pub fn lambda_defect(&self) -> Option<f64> {
        self.defect.as_ref().map(|d| d.lambda_defect)
    }
}

/// Runs the whole analysis on a prepared (normalized) system.
pub fn classify_growth(prep: &Prepared, tol: Tolerances) -> Result<SpectralReport> {
    let op = &prep.op;
    let radius = spectral_radius(op);
    if (radius - 1.0).abs() > 1e-6 {
        return Err(Error::Contract(format!("spectral radius of D is {radius}, expected 1")));
    }
    let cluster = eig_one_multiplicity(op, tol.cluster)?;
    if cluster.count != 2 && cluster.count != 4 {
        return Err(Error::Ambiguity(format!(
            "eigenvalue 1 has multiplicity {} (expected 2 or 4): {:?}",
            cluster.count, cluster.eigenvalues
        )));
    }

    let intertwiner = equivalence_maps(prep.system(), &prep.twin.system, RankPolicy::new(tol.equivalence))?;
    let sv = linalg::singular_values(&intertwiner_matrix(prep.system(), &prep.twin.system).0);
    let intertwiner_gap = match (sv.first(), sv.last()) {
        (Some(&top), Some(&bottom)) if top > 0.0 => bottom / top,
        _ => 0.0,
    };
    let equivalent = intertwiner.is_some();
    if equivalent != cluster.cross_signal() {
        return Err(Error::Ambiguity(format!(
            "equivalence tests disagree: intertwiner {}, cross-block eigenvalue 1 {}",
            if equivalent { "found" } else { "absent" },
            if cluster.cross_signal() { "present" } else { "absent" }
        )));
    }
    if equivalent != (cluster.count == 4) {
        return Err(Error::Ambiguity(format!(
            "multiplicity {} does not match equivalence ({equivalent})",
            cluster.count
        )));
    }

    let jordan = jordan_profile(&op.dee, cluster.count, tol.rank)?;
    let k0 = k_zero(prep);

    let defect = if equivalent {
        None
    } else {
        let maps = q_maps(prep)?;
        let e0 = e_zero(prep, &maps, k0)?;
        let lambda_defect = e0.value() / k0;
        let positive = e0.value() > tol.e_zero * k0;
        if positive == (jordan.geometric_dim() == 2) {
            return Err(Error::Ambiguity(format!(
                "E₀ = {:e} (k₀ = {k0}) disagrees with eigenspace dimension {}",
                e0.value(),
                jordan.geometric_dim()
            )));
        }
        let w_residual = positive.then(|| defect_vector(prep, &maps, lambda_defect).residual);
        if let Some(r) = w_residual {
            if r > 1e-8 {
                return Err(Error::Contract(format!("generalized eigenvector residual {r:e} exceeds 1e-8")));
            }
        }
        Some(DefectSummary { q_residual: maps.residual, e_zero: e0, lambda_defect, w_residual })
    };

    let alpha = jordan.max_size();
    if alpha >= 4 {
        return Err(Error::Contract(format!(
            "Jordan block of size {alpha} at 1 would violate the Haagerup bound; profile {:?}, ladders {:?}",
            jordan.sizes, jordan.ladders
        )));
    }
    let verdict = if alpha >= 2 { Verdict::UniqueRealizationIrreducible } else { Verdict::Inconclusive };
    let justification = justify(equivalent, &jordan, alpha, defect.as_ref(), k0);
    let size_two_in_equivalent_case = equivalent && jordan.sizes.contains(&2);

    Ok(SpectralReport {
        equivalent_to_twin: equivalent,
        intertwiner_gap,
        intertwiner_nullity: intertwiner.map_or(0, |i| i.nullity),
        spectral_radius: radius,
        cluster,
        jordan,
        k_zero: k0,
        defect,
        alpha,
        verdict,
        justification,
        size_two_in_equivalent_case,
        peripheral: prep.norm.peripheral.clone(),
        normalization_scale: prep.norm.scale,
        normalization_residual: prep.norm.residual,
    })
}


fn justify(equivalent: bool, jordan: &JordanProfile, alpha: usize, defect: Option<&DefectSummary>, k0: f64) -> String {
    let branch = if equivalent {
        "system equivalent to its twin (eigenvalue 1 of multiplicity 4)".to_string()
    } else {
        let e0 = defect.map_or(0.0, |d| d.e_zero.value());
        format!("system inequivalent to its twin (eigenvalue 1 of multiplicity 2); E₀ = {e0:.6e}, k₀ = {k0:.6e}")
    };
    let growth = format!(
        "largest Jordan block at 1 has size {alpha} (profile {:?}), so ‖φ_ε‖² grows like ε^-{alpha}",
        jordan.sizes
    );
    let conclusion = if alpha >= 2 {
        "growth exponent ≥ 2 for the smooth vectors: the representation has a unique boundary realization and is irreducible"
    } else {
        "growth exponent 1: the uniqueness/irreducibility criterion does not apply; no claim is made either way"
    };
    format!("{branch}; {growth}; {conclusion}")
}

/// Gates on irreducibility, normalizes and classifies.
pub fn classify_system(system: &MatrixSystem, trials: usize, seed: u64, tol: Tolerances) -> Result<(Prepared, SpectralReport)> {
    if let IrreducibilityVerdict::Reducible(w) = is_irreducible(system, trials, seed) {
        return Err(Error::Reducible(Box::new(w)));
    }
    let prep = Prepared::new(system)?;
    let report = classify_growth(&prep, tol)?;
    Ok((prep, report))
}

/// `(E₀ / k₀²) B_a(v_a, v_a) B_b(v_b, v_b)`, the limit of `ε² ‖φ_ε‖²` in the
/// inequivalent case.
pub fn asymptotic_constant(prep: &Prepared, ends: &Endpoints, e0: f64, k0: f64) -> f64 {
    e0 / (k0 * k0) * ends.norm_f(&prep.norm) * ends.norm_g(&prep.norm)
}

/// Coordinates `u ∈ V̂_c` of `Sf` for an arbitrary elementary `f`, from
/// `⟨f, μ[c, e, w]⟩ = w† u` evaluated on a basis.
pub fn boundary_functional_general(prep: &Prepared, f: &Elementary, c: Letter) -> Result<CVec> {
    let support = f.x.mul(&ReducedWord::new(vec![f.a]).expect("single letter"));
    if support.len() != f.x.len() + 1 {
        return Err(Error::Argument("f must be supported on a single branch".into()));
    }
    if support.first() == Some(c) {
        return Err(Error::Argument("f must be supported away from Γ(c)".into()));
    }
    let sys = prep.system();
    let n = sys.dim(c.inverse());
    let cw = ReducedWord::new(vec![c]).expect("single letter");
    let mut u = CVec::zeros(n);
    for i in 0..n {
        let mut w = CVec::zeros(n);
        w[i] = linalg::ONE;
        let probe = Elementary::new(cw.clone(), c.inverse(), w);
        u[i] = oracle::inner_product(&prep.norm, f, &probe, None)?;
    }
    Ok(u)
}

/// `(1/k₀) B̂_c(Sf, Sf) ‖g‖²`, the limit of `ε Σ_{x ∈ Γ(c)} |⟨f, π(x) g⟩|² e^{−ε|x|}`.
pub fn boundary_limit_prediction(prep: &Prepared, c: Letter, ends: &Endpoints) -> Result<f64> {
    let u = oracle::boundary_functional(&prep.norm, c, ends.a, &ends.va)?;
    Ok(prep.twin.forms.pair(c, &u, &u).re * ends.norm_g(&prep.norm) / k_zero(prep))
}

/// The same limit over `x ∈ Γ(zc)`: `f` is replaced by `π(z⁻¹) f`.
pub fn boundary_limit_prediction_translated(prep: &Prepared, z: &ReducedWord, c: Letter, ends: &Endpoints) -> Result<f64> {
    if z.last().is_some_and(|l| l.cancels(c)) {
        return Err(Error::Argument("zc must be reduced".into()));
    }
    let f = Elementary::new(ReducedWord::default(), ends.a, ends.va.clone()).translate(&z.inverse());
    let u = boundary_functional_general(prep, &f, c)?;
    Ok(prep.twin.forms.pair(c, &u, &u).re * ends.norm_g(&prep.norm) / k_zero(prep))
}

#[derive(Debug, Clone)]
pub struct BoundaryLimit {
    pub prediction: f64,
    /// `(ε, ε Σ_d ψ(ε, c, d))`.
    pub samples: Vec<(f64, f64)>,
    pub extrapolated: f64,
    pub relative_error: f64,
}

/// Measures `ε Σ_d ψ(ε, c, d)` on a halving grid and Richardson-extrapolates
/// (two levels) to `ε = 0`.
pub fn boundary_limit(prep: &Prepared, c: Letter, ends: &Endpoints, grid: &[f64]) -> Result<BoundaryLimit> {
    let prediction = boundary_limit_prediction(prep, c, ends)?;
    let bv = prep.boundary_vectors(ends)?;
    let mut samples = Vec::with_capacity(grid.len());
    for &eps in grid {
        let res = Resolvent::new(&prep.op, eps)?;
        let row: f64 = psi_grid(&res, &bv)[c.index()].iter().map(|v| v.value).sum();
        samples.push((eps, eps * row));
    }
    let extrapolated = richardson(&samples.iter().map(|s| s.1).collect::<Vec<_>>());
    let relative_error = (extrapolated - prediction).abs() / prediction.abs().max(f64::MIN_POSITIVE);
    Ok(BoundaryLimit { prediction, samples, extrapolated, relative_error })
}

/// Repeated Richardson extrapolation for values on a halving grid with an
/// error expansion in integer powers of the step.
pub fn richardson(values: &[f64]) -> f64 {
    let mut level: Vec<f64> = values.to_vec();
    let mut factor = 2.0;
    while level.len() > 1 {
        level = level.windows(2).map(|w| (factor * w[1] - w[0]) / (factor - 1.0)).collect();
        factor *= 2.0;
    }
    level.first().copied().unwrap_or(f64::NAN)
}

/// `ε^α ‖φ_ε‖²` for the weight convention in use.
pub fn scaled_phi(prep: &Prepared, ends: &Endpoints, eps: f64, alpha: usize, weight: Weight) -> Result<f64> {
    Ok(eps.powi(alpha as i32) * prep.phi_norm(ends, eps, weight)?)
}
