//! Generator alphabets, matrix systems and their elementary structure:
//! equivalence (intertwiners) and a randomized irreducibility test.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::Schur;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, RankPolicy};

/// A letter of the symmetric generating set, stored as an index into its
/// [`Alphabet`]. Inverse pairs occupy adjacent slots, so the involution is a
/// bit flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter(usize);

impl Letter {
    pub fn from_index(index: usize) -> Letter {
        Letter(index)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn inverse(self) -> Letter {
        Letter(self.0 ^ 1)
    }

    /// `true` when the product `self · other` is the identity.
    pub fn cancels(self, other: Letter) -> bool {
        other == self.inverse()
    }
}

/// Symmetric generator set `A = {a, a⁻¹, b, b⁻¹, …}`.
///
/// Generators are lowercase ASCII words; the inverse of a generator is the
/// same word in uppercase. Letters are ordered generator by generator, each
/// followed by its inverse: `a, A, b, B, …`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    generators: Vec<String>,
    names: Vec<String>,
}

impl Alphabet {
    pub fn new<S: AsRef<str>>(generators: &[S]) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::Validation("at least one generator is required".into()));
        }
        let mut names = Vec::with_capacity(2 * generators.len());
        let mut seen = std::collections::BTreeSet::new();
        for g in generators {
            let g = g.as_ref();
            if g.is_empty() || !g.bytes().all(|c| c.is_ascii_lowercase()) {
                return Err(Error::Validation(format!(
                    "generator \"{g}\" must be a non-empty lowercase ASCII word"
                )));
            }
            if !seen.insert(g.to_string()) {
                return Err(Error::Validation(format!("duplicate generator \"{g}\"")));
            }
            names.push(g.to_string());
            names.push(g.to_ascii_uppercase());
        }
        Ok(Self {
            generators: generators.iter().map(|g| g.as_ref().to_string()).collect(),
            names,
        })
    }

    /// `a, b, c, …` with `rank` generators.
    pub fn standard(rank: usize) -> Self {
        assert!((1..=26).contains(&rank), "rank must be between 1 and 26");
        let gens: Vec<String> = (0..rank).map(|i| ((b'a' + i as u8) as char).to_string()).collect();
        Self::new(&gens).expect("standard generators are valid")
    }

    pub fn generators(&self) -> &[String] {
        &self.generators
    }

    /// Number of letters `|A|` (twice the number of generators).
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn letters(&self) -> impl Iterator<Item = Letter> + Clone {
        (0..self.names.len()).map(Letter)
    }

    pub fn letter_at(&self, index: usize) -> Letter {
        assert!(index < self.len());
        Letter(index)
    }

    pub fn name(&self, l: Letter) -> &str {
        &self.names[l.0]
    }

    pub fn letter(&self, name: &str) -> Option<Letter> {
        self.names.iter().position(|n| n == name).map(Letter)
    }

    /// Ordered pairs `(b, a)` with `ba ≠ e`, in letter order.
    pub fn allowed_pairs(&self) -> impl Iterator<Item = (Letter, Letter)> + '_ {
        self.letters()
            .flat_map(move |b| self.letters().map(move |a| (b, a)))
            .filter(|(b, a)| !b.cancels(*a))
    }

    /// File key `"t|s"` for the block `H_ts: V_s → V_t`.
    pub fn block_key(&self, target: Letter, source: Letter) -> String {
        format!("{}|{}", self.name(target), self.name(source))
    }
}

/// Hermitian forms `B_a`, one per letter, stored as matrices `M_a` with
/// `B_a(v, w) = w† M_a v`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormTuple {
    pub forms: Vec<CMat>,
}

impl FormTuple {
    pub fn identity(dims: &[usize]) -> Self {
        Self {
            forms: dims.iter().map(|&n| CMat::identity(n, n)).collect(),
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            forms: dims.iter().map(|&n| CMat::zeros(n, n)).collect(),
        }
    }

    pub fn get(&self, l: Letter) -> &CMat {
        &self.forms[l.index()]
    }

    /// `B_a(v, w)`, linear in `v` and conjugate-linear in `w`.
    pub fn pair(&self, l: Letter, v: &CVec, w: &CVec) -> Complex64 {
        w.dotc(&(self.get(l) * v))
    }

    pub fn trace_sum(&self) -> f64 {
        self.forms.iter().map(|m| linalg::trace(m).re).sum()
    }

    pub fn scale(&mut self, s: f64) {
        for m in &mut self.forms {
            *m *= Complex64::from(s);
        }
    }

    pub fn max_hermitian_deviation(&self) -> f64 {
        self.forms.iter().map(linalg::hermitian_deviation).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self) -> bool {
        self.max_hermitian_deviation() <= 1e-12
    }

    /// Smallest eigenvalue over all forms.
    pub fn min_eigenvalue(&self) -> f64 {
        self.forms
            .iter()
            .flat_map(linalg::hermitian_eigenvalues)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.forms
            .iter()
            .flat_map(linalg::hermitian_eigenvalues)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_diff(&self, other: &FormTuple) -> f64 {
        self.forms
            .iter()
            .zip(&other.forms)
            .map(|(a, b)| linalg::max_abs_diff(a, b))
            .fold(0.0, f64::max)
    }
}

/// A matrix system `(V_a, H_ba)`: a space `V_a = ℂ^{dims[a]}` per letter and
/// a block `H_ba: V_a → V_b` for every ordered pair with `ba ≠ e`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSystem {
    alphabet: Alphabet,
    dims: Vec<usize>,
    // indexed by b * |A| + a; None exactly on the forbidden pairs
    blocks: Vec<Option<CMat>>,
}

impl MatrixSystem {
    /// Builds a system from a block constructor called once per allowed pair
    /// `(b, a)`, validating shapes and finiteness.
    pub fn from_fn<F>(alphabet: Alphabet, dims: Vec<usize>, mut block: F) -> Result<Self>
    where
        F: FnMut(Letter, Letter) -> CMat,
    {
        let n = alphabet.len();
        if dims.len() != n {
            return Err(Error::Dimension(format!("{} dims for {} letters", dims.len(), n)));
        }
        if let Some(l) = alphabet.letters().find(|l| dims[l.index()] == 0) {
            return Err(Error::Validation(format!("dim of \"{}\" must be positive", alphabet.name(l))));
        }
        let mut blocks = vec![None; n * n];
        for (b, a) in alphabet.allowed_pairs().collect::<Vec<_>>() {
            let m = block(b, a);
            let key = alphabet.block_key(b, a);
            let expected = (dims[b.index()], dims[a.index()]);
            if m.shape() != expected {
                return Err(Error::BlockShape { key, expected, found: m.shape() });
            }
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite(key));
            }
            blocks[b.index() * n + a.index()] = Some(m);
        }
        Ok(Self { alphabet, dims, blocks })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, l: Letter) -> usize {
        self.dims[l.index()]
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// `H_ba`, or `None` when `ba = e`.
    pub fn block(&self, b: Letter, a: Letter) -> Option<&CMat> {
        self.blocks[b.index() * self.alphabet.len() + a.index()].as_ref()
    }

    /// `H_ba` with the forbidden blocks read as zero maps.
    pub fn block_or_zero(&self, b: Letter, a: Letter) -> CMat {
        self.block(b, a)
            .cloned()
            .unwrap_or_else(|| CMat::zeros(self.dim(b), self.dim(a)))
    }

    pub fn blocks(&self) -> impl Iterator<Item = (Letter, Letter, &CMat)> {
        self.alphabet
            .allowed_pairs()
            .map(move |(b, a)| (b, a, self.block(b, a).expect("allowed pair")))
    }

    pub fn block_count(&self) -> usize {
        self.blocks.iter().filter(|b| b.is_some()).count()
    }

    pub fn map_blocks<F: FnMut(Letter, Letter, &CMat) -> CMat>(&self, mut f: F) -> Result<Self> {
        Self::from_fn(self.alphabet.clone(), self.dims.clone(), |b, a| {
            f(b, a, self.block(b, a).expect("allowed pair"))
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map_blocks(|_, _, m| m * Complex64::from(factor))
            .expect("scaling preserves validity")
    }

    /// The transpose-dual system with blocks `G_ab = H_ba†: V_b → V_a`.
    /// A tuple `U` is invariant for it exactly when `U^⊥` is invariant for
    /// `self`.
    pub fn adjoint_dual(&self) -> Self {
        Self::from_fn(self.alphabet.clone(), self.dims.clone(), |b, a| {
            self.block(a, b).expect("allowed pair").adjoint()
        })
        .expect("adjoint of a valid system is valid")
    }

    pub fn max_block_norm(&self) -> f64 {
        self.blocks().map(|(_, _, m)| m.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &MatrixSystem) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.blocks()
            .map(|(b, a, m)| linalg::max_abs_diff(m, other.block(b, a).expect("allowed pair")))
            .fold(0.0, f64::max)
    }

    pub fn check_same_alphabet(&self, other: &MatrixSystem) -> Result<()> {
        if self.alphabet != other.alphabet {
            return Err(Error::AlphabetMismatch(format!(
                "{:?} vs {:?}",
                self.alphabet.generators(),
                other.alphabet.generators()
            )));
        }
        Ok(())
    }

    pub fn check_vector(&self, l: Letter, v: &CVec) -> Result<()> {
        if v.len() != self.dim(l) {
            return Err(Error::Dimension(format!(
                "vector for \"{}\" has length {}, expected {}",
                self.alphabet.name(l),
                v.len(),
                self.dim(l)
            )));
        }
        Ok(())
    }
}

impl fmt::Display for MatrixSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self
            .alphabet
            .letters()
            .map(|l| format!("{}:{}", self.alphabet.name(l), self.dim(l)))
            .collect();
        write!(f, "system on {} letters, dims {{{}}}", self.alphabet.len(), dims.join(", "))
    }
}

/// Standard complex Gaussian blocks (`E|z|² = 1`), deterministic in `seed`.
pub fn random_system(alphabet: &Alphabet, dims: &[usize], seed: u64) -> Result<MatrixSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MatrixSystem::from_fn(alphabet.clone(), dims.to_vec(), |b, a| {
        CMat::from_fn(dims[b.index()], dims[a.index()], |_, _| random_complex(&mut rng))
    })
}

/// A random system that coincides with its own twin: `H_{a⁻¹b⁻¹} = H_ba†`.
/// Needs `dim V_a = dim V_{a⁻¹}`.
pub fn random_self_twin_system(alphabet: &Alphabet, dims: &[usize], seed: u64) -> Result<MatrixSystem> {
    if dims.len() != alphabet.len() {
        return Err(Error::Dimension(format!("expected {} dims, got {}", alphabet.len(), dims.len())));
    }
    if dims.chunks(2).any(|p| p[0] != p[1]) {
        return Err(Error::Dimension("self-twin systems need dim V_a = dim V_A".into()));
    }
    let base = random_system(alphabet, dims, seed)?;
    base.map_blocks(|b, a, h| {
        let partner = (a.inverse().index(), b.inverse().index());
        if (b.index(), a.index()) < partner {
            h.clone()
        } else {
            base.block(a.inverse(), b.inverse()).expect("allowed pair").adjoint()
        }
    })
}

pub fn random_complex<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| random_complex(rng))
}

/// A tuple `(J_a)` with `H♯_ba J_a = J_b H_ba` for every pair.
#[derive(Debug, Clone)]
pub struct Intertwiner {
    pub maps: Vec<CMat>,
    /// Dimension of the solution space of the intertwining equations.
    pub nullity: usize,
    /// Singular values of the stacked linear system, descending.
    pub singular_values: Vec<f64>,
    /// Every `J_a` is square and invertible.
    pub is_equivalence: bool,
}

/// The intertwining equations `H♯_ba J_a − J_b H_ba = 0` as one matrix acting
/// on the stacked column-major `vec(J_a)`, with each letter's column offset.
pub fn intertwiner_matrix(sys1: &MatrixSystem, sys2: &MatrixSystem) -> (CMat, Vec<usize>) {
    let alphabet = sys1.alphabet();
    // unknown J_a has shape dims2[a] × dims1[a]
    let mut offsets = Vec::with_capacity(alphabet.len());
    let mut cols = 0;
    for l in alphabet.letters() {
        offsets.push(cols);
        cols += sys2.dim(l) * sys1.dim(l);
    }
    let rows: usize = alphabet.allowed_pairs().map(|(b, a)| sys2.dim(b) * sys1.dim(a)).sum();
    let mut system = CMat::zeros(rows, cols);
    let mut row = 0;
    for (b, a) in alphabet.allowed_pairs() {
        let h1 = sys1.block(b, a).expect("allowed pair");
        let h2 = sys2.block(b, a).expect("allowed pair");
        let r = sys2.dim(b) * sys1.dim(a);
        // vec(H2 J_a) = (I ⊗ H2) vec(J_a);  vec(J_b H1) = (H1ᵀ ⊗ I) vec(J_b)
        let left = linalg::kron(&CMat::identity(sys1.dim(a), sys1.dim(a)), h2);
        let right = linalg::kron(&h1.transpose(), &CMat::identity(sys2.dim(b), sys2.dim(b)));
        let mut view = system.view_mut((row, offsets[a.index()]), left.shape());
        view += &left;
        let mut view = system.view_mut((row, offsets[b.index()]), right.shape());
        view -= &right;
        row += r;
    }
    (system, offsets)
}

/// Solves the intertwining equations `H♯_ba J_a = J_b H_ba` as one stacked
/// linear system in the entries of all `J_a` and returns a null vector when
/// the null space is nonzero.
///
/// The solution is scaled so that `Σ tr J_a = Σ dims` when that trace sum is
/// nonzero, otherwise so that its largest entry is `1`.
pub fn equivalence_maps(
    sys1: &MatrixSystem,
    sys2: &MatrixSystem,
    policy: RankPolicy,
) -> Result<Option<Intertwiner>> {
    sys1.check_same_alphabet(sys2)?;
    let alphabet = sys1.alphabet();
    let (system, offsets) = intertwiner_matrix(sys1, sys2);
    let (null, singular_values) = linalg::null_space(&system, policy);
    if null.ncols() == 0 {
        return Ok(None);
    }
    let v: Vec<Complex64> = null.column(0).iter().copied().collect();
    let mut maps: Vec<CMat> = alphabet
        .letters()
        .map(|l| {
            let o = offsets[l.index()];
            let len = sys2.dim(l) * sys1.dim(l);
            linalg::unvec(&v[o..o + len], sys2.dim(l), sys1.dim(l))
        })
        .collect();
    let total: Complex64 = maps
        .iter()
        .filter(|m| m.is_square())
        .map(linalg::trace)
        .sum();
    let scale = if total.norm() > 1e-8 {
        Complex64::from(sys1.total_dim() as f64) / total
    } else {
        let peak = maps
            .iter()
            .flat_map(|m| m.iter().copied())
            .max_by(|x, y| x.norm().total_cmp(&y.norm()))
            .unwrap_or(linalg::ONE);
        linalg::ONE / peak
    };
    for m in &mut maps {
        *m *= scale;
    }
    let is_equivalence = maps
        .iter()
        .all(|m| m.is_square() && policy.rank(m) == m.nrows());
    Ok(Some(Intertwiner {
        maps,
        nullity: null.ncols(),
        singular_values,
        is_equivalence,
    }))
}

/// A nonzero, non-full invariant subsystem `W_a ⊆ V_a`, each space given by an
/// orthonormal basis (possibly with zero columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemWitness {
    pub spaces: Vec<CMat>,
}

impl SubsystemWitness {
    pub fn dims(&self) -> Vec<usize> {
        self.spaces.iter().map(|m| m.ncols()).collect()
    }

    /// Largest distance from `H_ba(W_a)` to `W_b`, measured as the norm of the
    /// component orthogonal to `W_b`.
    pub fn invariance_residual(&self, system: &MatrixSystem) -> f64 {
        let mut worst: f64 = 0.0;
        for (b, a, h) in system.blocks() {
            let image = h * &self.spaces[a.index()];
            let wb = &self.spaces[b.index()];
            let projected = wb * (wb.adjoint() * &image);
            let off = image - projected;
            worst = worst.max(off.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        worst
    }

    pub fn is_proper(&self, system: &MatrixSystem) -> bool {
        let d = self.dims();
        let any_nonzero = d.iter().any(|&k| k > 0);
        let all_full = d.iter().zip(system.dims()).all(|(&k, &n)| k == n);
        any_nonzero && !all_full
    }
}

impl fmt::Display for SubsystemWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invariant subsystem with dims {:?}", self.dims())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IrreducibilityVerdict {
    /// No proper invariant subsystem was found in `trials` randomized
    /// attempts; not a certificate.
    IrreducibleProbabilistic { trials: usize },
    Reducible(SubsystemWitness),
}

impl IrreducibilityVerdict {
    pub fn is_irreducible(&self) -> bool {
        matches!(self, IrreducibilityVerdict::IrreducibleProbabilistic { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            IrreducibilityVerdict::IrreducibleProbabilistic { .. } => "irreducible-probabilistic",
            IrreducibilityVerdict::Reducible(_) => "reducible",
        }
    }
}

/// Smallest invariant subsystem containing `v ∈ V_start`.
fn closure(system: &MatrixSystem, start: Letter, v: &CVec, abs_tol: f64) -> Vec<CMat> {
    let alphabet = system.alphabet();
    let mut spaces: Vec<CMat> = alphabet.letters().map(|l| CMat::zeros(system.dim(l), 0)).collect();
    spaces[start.index()] = linalg::orthonormal_columns(&CMat::from_column_slice(v.len(), 1, v.as_slice()), abs_tol);
    let mut changed = true;
    while changed {
        changed = false;
        for (b, a, h) in system.blocks() {
            if spaces[a.index()].ncols() == 0 || spaces[b.index()].ncols() == system.dim(b) {
                continue;
            }
            let image = h * &spaces[a.index()];
            let wb = &spaces[b.index()];
            let stacked = CMat::from_fn(wb.nrows(), wb.ncols() + image.ncols(), |i, j| {
                if j < wb.ncols() {
                    wb[(i, j)]
                } else {
                    image[(i, j - wb.ncols())]
                }
            });
            let grown = linalg::orthonormal_columns(&stacked, abs_tol);
            if grown.ncols() > wb.ncols() {
                spaces[b.index()] = grown;
                changed = true;
            }
        }
    }
    spaces
}

/// Orthogonal complement of every space in the tuple.
fn complement(spaces: &[CMat], dims: &[usize]) -> Vec<CMat> {
    spaces
        .iter()
        .zip(dims)
        .map(|(w, &n)| {
            let projector = CMat::identity(n, n) - w * w.adjoint();
            linalg::orthonormal_columns(&projector, 1e-8)
        })
        .collect()
}

/// A random reduced loop word from `a` back to `a`, as the matrix `H(w)` on `V_a`.
fn random_loop<R: Rng>(system: &MatrixSystem, a: Letter, rng: &mut R) -> Option<CMat> {
    let alphabet = system.alphabet();
    let n = alphabet.len();
    for _ in 0..64 {
        let len = rng.random_range(2..=5usize);
        let mut word = vec![a];
        while word.len() < len - 1 {
            let prev = *word.last().expect("nonempty");
            let next = alphabet.letter_at(rng.random_range(0..n));
            if !prev.cancels(next) {
                word.push(next);
            }
        }
        let prev = *word.last().expect("nonempty");
        if prev.cancels(a) {
            continue;
        }
        word.push(a);
        let mut m = CMat::identity(system.dim(a), system.dim(a));
        for pair in word.windows(2) {
            m = system.block(pair[1], pair[0]).expect("reduced word") * m;
        }
        return Some(m);
    }
    None
}

/// Seed vectors for one trial at letter `a`: a random vector plus the
/// eigenvectors of a random element of the loop algebra at `a`.
fn trial_seeds<R: Rng>(system: &MatrixSystem, a: Letter, rng: &mut R) -> Vec<CVec> {
    let n = system.dim(a);
    let mut seeds = vec![random_vector(rng, n)];
    let mut element = CMat::identity(n, n) * random_complex(rng);
    for _ in 0..3 {
        if let Some(m) = random_loop(system, a, rng) {
            element += m * random_complex(rng);
        }
    }
    if n > 1 {
        let (_, t) = Schur::new(element.clone()).unpack();
        let pick = rng.random_range(0..n);
        let lambda = t[(pick, pick)];
        let shifted = &element - CMat::identity(n, n) * lambda;
        let (null, _) = linalg::null_space(&shifted, RankPolicy::new(1e-8));
        for k in 0..null.ncols() {
            seeds.push(null.column(k).into_owned());
        }
    } else {
        seeds.push(CVec::from_element(1, linalg::ONE));
    }
    seeds
}

/// Randomized search for a proper invariant subsystem.
///
/// Each trial picks a random letter and closes a few seed vectors (a random
/// vector and the eigenvectors of a random loop-algebra element) under all
/// blocks, in the system and in its transpose-dual. A proper closure is an
/// invariant subsystem (or the complement of one, for the dual).
pub fn is_irreducible(system: &MatrixSystem, trials: usize, seed: u64) -> IrreducibilityVerdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dual = system.adjoint_dual();
    let n = system.alphabet().len();
    let abs_tol = 1e-9 * system.max_block_norm().max(1.0);
    for _ in 0..trials {
        let a = system.alphabet().letter_at(rng.random_range(0..n));
        for (which, sys) in [(false, system), (true, &dual)] {
            for v in trial_seeds(sys, a, &mut rng) {
                let spaces = closure(sys, a, &v, abs_tol);
                let candidate = SubsystemWitness {
                    spaces: if which { complement(&spaces, system.dims()) } else { spaces },
                };
                if candidate.is_proper(system) && candidate.invariance_residual(system) <= 1e-9 {
                    return IrreducibilityVerdict::Reducible(candidate);
                }
            }
        }
    }
    IrreducibilityVerdict::IrreducibleProbabilistic { trials }
}

/// Block keys in file order for the canonical serializer.
pub(crate) fn sorted_block_keys(system: &MatrixSystem) -> BTreeMap<String, (Letter, Letter)> {
    system
        .alphabet()
        .allowed_pairs()
        .map(|(b, a)| (system.alphabet().block_key(b, a), (b, a)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> CMat {
        CMat::from_element(1, 1, Complex64::from(x))
    }

    fn iso(h: f64) -> MatrixSystem {
        MatrixSystem::from_fn(Alphabet::standard(2), vec![1; 4], |_, _| scalar(h)).unwrap()
    }

    #[test]
    fn alphabet_involution() {
        let al = Alphabet::new(&["a", "b", "cd"]).unwrap();
        assert_eq!(al.len(), 6);
        for l in al.letters() {
            assert_eq!(l.inverse().inverse(), l);
            assert_ne!(l.inverse(), l);
        }
        assert_eq!(al.name(al.letter("cd").unwrap().inverse()), "CD");
        assert!(Alphabet::new(&["A"]).is_err());
        assert!(Alphabet::new(&["a", "a"]).is_err());
        assert!(Alphabet::new::<&str>(&[]).is_err());
    }

    #[test]
    fn iso2_has_twelve_blocks() {
        // 4·4 ordered pairs minus the 4 cancelling ones
        assert_eq!(iso(1.0).block_count(), 12);
        let s = iso(1.0);
        let a = s.alphabet().letter("a").unwrap();
        assert!(s.block(a.inverse(), a).is_none());
        assert_eq!(s.block_or_zero(a.inverse(), a), CMat::zeros(1, 1));
    }

    #[test]
    fn shape_mismatch_names_the_key() {
        let err = MatrixSystem::from_fn(Alphabet::standard(2), vec![1, 1, 2, 1], |_, _| scalar(1.0)).unwrap_err();
        match err {
            Error::BlockShape { key, .. } => assert!(key.contains('|')),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn non_finite_rejected() {
        let err = MatrixSystem::from_fn(Alphabet::standard(2), vec![1; 4], |_, _| scalar(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn equivalence_of_system_with_itself_is_identity() {
        let s = random_system(&Alphabet::standard(2), &[2, 1, 2, 1], 11).unwrap();
        let j = equivalence_maps(&s, &s, RankPolicy::default()).unwrap().expect("self-equivalent");
        assert_eq!(j.nullity, 1);
        assert!(j.is_equivalence);
        for (m, &n) in j.maps.iter().zip(s.dims()) {
            assert!(linalg::max_abs_diff(m, &CMat::identity(n, n)) < 1e-10);
        }
    }

    #[test]
    fn different_dims_are_not_equivalent() {
        let al = Alphabet::standard(2);
        let s1 = random_system(&al, &[1; 4], 3).unwrap();
        let s2 = random_system(&al, &[2; 4], 4).unwrap();
        assert!(equivalence_maps(&s1, &s2, RankPolicy::default()).unwrap().is_none());
    }

    #[test]
    fn alphabet_mismatch_is_an_error() {
        let s1 = random_system(&Alphabet::standard(2), &[1; 4], 3).unwrap();
        let s2 = random_system(&Alphabet::standard(3), &[1; 6], 3).unwrap();
        assert!(matches!(
            equivalence_maps(&s1, &s2, RankPolicy::default()),
            Err(Error::AlphabetMismatch(_))
        ));
    }

    #[test]
    fn iso2_is_irreducible() {
        assert!(is_irreducible(&iso(3f64.sqrt().recip()), 8, 0).is_irreducible());
    }

    #[test]
    fn direct_sum_is_reducible() {
        let h = 3f64.sqrt().recip();
        let s = MatrixSystem::from_fn(Alphabet::standard(2), vec![2; 4], |_, _| {
            CMat::identity(2, 2) * Complex64::from(h)
        })
        .unwrap();
        match is_irreducible(&s, 8, 1) {
            IrreducibilityVerdict::Reducible(w) => {
                assert!(w.invariance_residual(&s) <= 1e-9);
                assert!(w.is_proper(&s));
            }
            v => panic!("expected reducible, got {v:?}"),
        }
    }

    #[test]
    fn dead_letter_is_reducible() {
        // every block into "a" vanishes, so W = (0 at a, full elsewhere) is invariant
        let al = Alphabet::standard(2);
        let a = al.letter("a").unwrap();
        let base = random_system(&al, &[1, 2, 1, 1], 5).unwrap();
        let s = base
            .map_blocks(|b, _, m| if b == a { m * Complex64::from(0.0) } else { m.clone() })
            .unwrap();
        match is_irreducible(&s, 8, 2) {
            IrreducibilityVerdict::Reducible(w) => {
                assert!(w.invariance_residual(&s) <= 1e-9);
                assert!(w.is_proper(&s));
            }
            v => panic!("expected reducible, got {v:?}"),
        }
    }

    #[test]
    fn non_split_extension_is_reducible() {
        // block upper-triangular blocks: first coordinate spans an invariant
        // subsystem, but no complement is invariant
        let al = Alphabet::standard(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = MatrixSystem::from_fn(al, vec![2; 4], |_, _| {
            let mut m = CMat::from_fn(2, 2, |_, _| random_complex(&mut rng));
            m[(1, 0)] = linalg::ZERO;
            m
        })
        .unwrap();
        match is_irreducible(&s, 8, 3) {
            IrreducibilityVerdict::Reducible(w) => {
                assert!(w.invariance_residual(&s) <= 1e-9);
                assert!(w.is_proper(&s));
            }
            v => panic!("expected reducible, got {v:?}"),
        }
    }

    #[test]
    fn random_generic_system_is_irreducible() {
        let s = random_system(&Alphabet::standard(2), &[2, 2, 1, 2], 8).unwrap();
        assert!(is_irreducible(&s, 8, 0).is_irreducible());
    }

    #[test]
    fn random_system_is_deterministic() {
        let al = Alphabet::standard(2);
        let s1 = random_system(&al, &[2, 2, 1, 1], 1).unwrap();
        let s2 = random_system(&al, &[2, 2, 1, 1], 1).unwrap();
        assert_eq!(s1, s2);
        let a = al.letter("a").unwrap();
        let b = al.letter("b").unwrap();
        assert_eq!(s1.block(b, a).unwrap().shape(), (1, 2));
        assert_ne!(s1, random_system(&al, &[2, 2, 1, 1], 2).unwrap());
    }
}
