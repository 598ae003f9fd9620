//! Brute-force ground truth on the Cayley tree.
//!
//! Everything here enumerates reduced words explicitly; it is exponential in
//! the word length and exists to check the transfer-operator formulas.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::normalization::NormalizedSystem;
use crate::system::{Alphabet, Letter, MatrixSystem};
use crate::transfer::{boundary_covectors, Endpoints, Prepared};

/// Largest sphere the enumerator agrees to walk.
pub const MAX_SPHERE: u128 = 10_000_000;

/// A word with no adjacent inverse pair; the empty word is the identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ReducedWord(Vec<Letter>);

impl ReducedWord {
    pub fn new(letters: Vec<Letter>) -> Result<Self> {
        if letters.windows(2).any(|w| w[0].cancels(w[1])) {
            return Err(Error::Argument("word is not reduced".into()));
        }
        Ok(Self(letters))
    }

    /// Free reduction of an arbitrary letter sequence.
    pub fn reduce<I: IntoIterator<Item = Letter>>(letters: I) -> Self {
        let mut out: Vec<Letter> = Vec::new();
        for l in letters {
            if out.last().is_some_and(|&p| p.cancels(l)) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Self(out)
    }

    pub fn parse(alphabet: &Alphabet, text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() || text == "e" {
            return Ok(Self::default());
        }
        let letters = text
            .split(['.', ' ', ','])
            .filter(|s| !s.is_empty())
            .flat_map(|tok| {
                // single-character generators may be written run together ("abAB")
                if alphabet.letter(tok).is_some() {
                    vec![alphabet.letter(tok).ok_or(tok.to_string())]
                } else {
                    tok.chars()
                        .map(|ch| alphabet.letter(&ch.to_string()).ok_or(tok.to_string()))
                        .collect()
                }
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|tok| Error::Argument(format!("unknown letter in \"{tok}\"")))?;
        Self::new(letters)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<Letter> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<Letter> {
        self.0.last().copied()
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.iter().rev().map(|l| l.inverse()).collect())
    }

    /// The reduced form of `self · other`.
    pub fn mul(&self, other: &ReducedWord) -> Self {
        Self::reduce(self.0.iter().chain(&other.0).copied())
    }

    pub fn prefix(&self, k: usize) -> Self {
        Self(self.0[..k].to_vec())
    }

    pub fn suffix_from(&self, k: usize) -> Self {
        Self(self.0[k..].to_vec())
    }

    pub fn display<'a>(&'a self, alphabet: &'a Alphabet) -> impl fmt::Display + 'a {
        WordDisplay(self, alphabet)
    }
}

struct WordDisplay<'a>(&'a ReducedWord, &'a Alphabet);

impl fmt::Display for WordDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("e");
        }
        let names: Vec<&str> = self.0.letters().iter().map(|&l| self.1.name(l)).collect();
        f.write_str(&names.join("."))
    }
}

/// `|A| (|A| − 1)^{J−1}`, the size of the sphere of radius `J ≥ 1`.
pub fn sphere_size(letters: usize, j: usize) -> u128 {
    match j {
        0 => 1,
        _ => letters as u128 * (letters as u128 - 1).pow(j as u32 - 1),
    }
}

/// Depth-first enumeration of the reduced words of length `J`, optionally
/// pinned to a first and a last letter.
#[derive(Debug, Clone)]
pub struct SphereWords {
    letters: usize,
    len: usize,
    first: Option<Letter>,
    last: Option<Letter>,
    word: Vec<usize>,
    state: State,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Fresh,
    Running,
    Done,
}

pub fn enumerate_sphere(alphabet: &Alphabet, j: usize, first: Option<Letter>, last: Option<Letter>) -> Result<SphereWords> {
    let size = sphere_size(alphabet.len(), j);
    if size > MAX_SPHERE {
        return Err(Error::Argument(format!("sphere of radius {j} has {size} words (limit {MAX_SPHERE})")));
    }
    Ok(SphereWords {
        letters: alphabet.len(),
        len: j,
        first,
        last,
        word: vec![0; j],
        state: State::Fresh,
    })
}

impl SphereWords {
    fn allowed(&self, pos: usize, cand: usize) -> bool {
        let cand = Letter::from_index(cand);
        if pos == 0 && self.first.is_some_and(|f| f != cand) {
            return false;
        }
        if pos > 0 && Letter::from_index(self.word[pos - 1]).cancels(cand) {
            return false;
        }
        if let Some(last) = self.last {
            if pos + 1 == self.len && cand != last {
                return false;
            }
            // the next letter is pinned, so this one must not cancel it
            if pos + 2 == self.len && cand.cancels(last) {
                return false;
            }
        }
        true
    }

    /// Finds the next full word with `word[pos] ≥ start` and the prefix before
    /// `pos` unchanged, backtracking into the prefix when necessary.
    fn seek(&mut self, mut pos: usize, mut start: usize) -> bool {
        loop {
            match (start..self.letters).find(|&c| self.allowed(pos, c)) {
                Some(c) => {
                    self.word[pos] = c;
                    pos += 1;
                    start = 0;
                    if pos == self.len {
                        return true;
                    }
                }
                None => {
                    if pos == 0 {
                        return false;
                    }
                    pos -= 1;
                    start = self.word[pos] + 1;
                }
            }
        }
    }
}

impl Iterator for SphereWords {
    type Item = ReducedWord;

    fn next(&mut self) -> Option<ReducedWord> {
        let found = match self.state {
            State::Done => false,
            State::Fresh if self.len == 0 => {
                self.state = State::Done;
                return Some(ReducedWord::default());
            }
            State::Fresh => self.seek(0, 0),
            State::Running => self.seek(self.len - 1, self.word[self.len - 1] + 1),
        };
        if !found {
            self.state = State::Done;
            return None;
        }
        self.state = State::Running;
        Some(ReducedWord(self.word.iter().map(|&i| Letter::from_index(i)).collect()))
    }
}

/// `H(y) = H_{b_n b_{n−1}} ⋯ H_{b_2 b_1}: V_{b_1} → V_{b_n}`, the identity for a
/// single letter.
pub fn h_product(system: &MatrixSystem, word: &ReducedWord) -> CMat {
    let w = word.letters();
    assert!(!w.is_empty(), "H(y) needs a nonempty word");
    let mut m = CMat::identity(system.dim(w[0]), system.dim(w[0]));
    for pair in w.windows(2) {
        m = system.block(pair[1], pair[0]).expect("reduced word") * m;
    }
    m
}

/// `H(y) v` without forming the matrix product.
pub fn h_apply(system: &MatrixSystem, word: &[Letter], v: &CVec) -> CVec {
    let mut x = v.clone();
    for pair in word.windows(2) {
        x = system.block(pair[1], pair[0]).expect("reduced word") * x;
    }
    x
}

/// `Ĥ(y) = H(y⁻¹)†`.
pub fn hhat_product(system: &MatrixSystem, word: &ReducedWord) -> CMat {
    h_product(system, &word.inverse()).adjoint()
}

/// `⟨μ[e, a, v_a], π(x) μ[e, b, v_b]⟩` as an explicit sum over the splitting
/// points of `x`: the two endpoint terms plus one coupling term per interior
/// edge.
pub fn coefficient_direct(prep: &Prepared, x: &ReducedWord, ends: &Endpoints) -> Result<Complex64> {
    let (norm, e) = (&prep.norm, &prep.coupling);
    let sys = &norm.system;
    let w = x.letters();
    let jlen = w.len();
    if jlen == 0 {
        return Err(Error::Argument("coefficient_direct needs |x| ≥ 1".into()));
    }
    let cov = boundary_covectors(norm, ends)?;
    let (a1, aj) = (w[0], w[jlen - 1]);
    let starts = a1 == ends.a;
    let ends_ok = ends.b == aj.inverse();
    let mut total = linalg::ZERO;
    let inv = x.inverse();
    if ends_ok {
        // (H(x⁻¹) v_b)† E_{a₁e}
        let hv = h_apply(sys, inv.letters(), &ends.vb);
        total += hv.dotc(&cov.start[a1.index()]);
    }
    if starts && ends_ok {
        for k in 1..jlen {
            // split x = x_k · x̃_k with x_k = a₁…a_k
            let left = h_apply(sys, &w[..k], &ends.va);
            let right = h_apply(sys, &inv.letters()[..jlen - k], &ends.vb);
            total += right.dotc(&(e.get(w[k], w[k - 1]) * left));
        }
    }
    if starts {
        let hv = h_apply(sys, w, &ends.va);
        total += cov.end[aj.index()].iter().zip(hv.iter()).map(|(p, q)| p * q).sum::<Complex64>();
    }
    Ok(total)
}

/// Intermediate state of the two-track recursion after the last letter.
#[derive(Debug, Clone)]
pub struct RecursionTrack {
    /// `f¹_J ∈ V̂_{a_J}`.
    pub hat: CVec,
    /// `f²_J = H(x) v_a [a₁ = a] ∈ V_{a_J}`.
    pub plain: CVec,
}

/// Runs `f¹_j = Ĥ f¹_{j−1} + E f²_{j−1}`, `f²_j = H f²_{j−1}` along `x`.
pub fn recursion_track(prep: &Prepared, x: &ReducedWord, ends: &Endpoints) -> Result<RecursionTrack> {
    let (norm, twin, e) = (&prep.norm, &prep.twin, &prep.coupling);
    let sys = &norm.system;
    let w = x.letters();
    if w.is_empty() {
        return Err(Error::Argument("recursion needs |x| ≥ 1".into()));
    }
    let cov = boundary_covectors(norm, ends)?;
    let mut hat = cov.start[w[0].index()].clone();
    let mut plain = if w[0] == ends.a { ends.va.clone() } else { CVec::zeros(sys.dim(w[0])) };
    for pair in w.windows(2) {
        let (prev, cur) = (pair[0], pair[1]);
        hat = twin.system.block(cur, prev).expect("reduced word") * hat + e.get(cur, prev) * &plain;
        plain = sys.block(cur, prev).expect("reduced word") * plain;
    }
    Ok(RecursionTrack { hat, plain })
}

pub fn coefficient_recursive(prep: &Prepared, x: &ReducedWord, ends: &Endpoints) -> Result<Complex64> {
    let track = recursion_track(prep, x, ends)?;
    let aj = x.last().expect("nonempty");
    let cov = boundary_covectors(&prep.norm, ends)?;
    let mut total: Complex64 = cov.end[aj.index()].iter().zip(track.plain.iter()).map(|(p, q)| p * q).sum();
    if ends.b == aj.inverse() {
        total += ends.vb.dotc(&track.hat);
    }
    Ok(total)
}

/// An elementary function `μ[x, xa, v]`: supported on the branch through
/// `x` then `xa`, with value `H(p) v` at `z` where `p = x⁻¹z` starts with `a`.
#[derive(Debug, Clone)]
pub struct Elementary {
    pub x: ReducedWord,
    pub a: Letter,
    pub v: CVec,
}

impl Elementary {
    pub fn new(x: ReducedWord, a: Letter, v: CVec) -> Self {
        Self { x, a, v }
    }

    /// `π(y) μ[x, xa, v] = μ[yx, yxa, v]`.
    pub fn translate(&self, y: &ReducedWord) -> Self {
        Self { x: y.mul(&self.x), a: self.a, v: self.v.clone() }
    }

    pub fn value(&self, system: &MatrixSystem, z: &ReducedWord) -> Option<CVec> {
        let p = self.x.inverse().mul(z);
        if p.first() != Some(self.a) {
            return None;
        }
        Some(h_apply(system, p.letters(), &self.v))
    }

    /// Radius past which the function is multiplicative.
    fn depth(&self) -> usize {
        self.x.len() + 1
    }
}

/// `⟨f₁, f₂⟩ = Σ_{|z| = N+1} B_{last(z)}(f₁(z), f₂(z))` for `N` at least the
/// larger multiplicativity radius; `n` of `None` picks the smallest valid one.
pub fn inner_product(norm: &NormalizedSystem, f1: &Elementary, f2: &Elementary, n: Option<usize>) -> Result<Complex64> {
    let sys = &norm.system;
    let needed = f1.depth().max(f2.depth());
    let n = n.unwrap_or(needed);
    if n < needed {
        return Err(Error::Argument(format!("sphere radius {n} too small; need ≥ {needed}")));
    }
    // restrict to the support of f₁ when it hangs off the identity
    let first = f1.x.is_empty().then_some(f1.a);
    let mut total = linalg::ZERO;
    for z in enumerate_sphere(sys.alphabet(), n + 1, first, None)? {
        let Some(u) = f1.value(sys, &z) else { continue };
        let Some(w) = f2.value(sys, &z) else { continue };
        total += norm.forms.pair(z.last().expect("nonempty"), &u, &w);
    }
    Ok(total)
}

/// `⟨μ[e, a, v_a], μ[x, xb, v_b]⟩` straight from the definition of the inner
/// product on a sphere of radius `N` (default `|x| + 1`).
pub fn coefficient_first_principles(norm: &NormalizedSystem, x: &ReducedWord, ends: &Endpoints, n: Option<usize>) -> Result<Complex64> {
    let f1 = Elementary::new(ReducedWord::default(), ends.a, ends.va.clone());
    let f2 = Elementary::new(x.clone(), ends.b, ends.vb.clone());
    inner_product(norm, &f1, &f2, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Direct,
    Recursion,
    FirstPrinciples,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Direct => "direct-phi1",
            Method::Recursion => "recursion",
            Method::FirstPrinciples => "first-principles",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoefficientRecord {
    pub word: ReducedWord,
    pub value: Complex64,
    pub method: Method,
}

/// All three evaluations of one coefficient.
pub fn coefficient_all(prep: &Prepared, x: &ReducedWord, ends: &Endpoints) -> Result<[CoefficientRecord; 3]> {
    let rec = |method, value| CoefficientRecord { word: x.clone(), value, method };
    Ok([
        rec(Method::Direct, coefficient_direct(prep, x, ends)?),
        rec(Method::Recursion, coefficient_recursive(prep, x, ends)?),
        rec(Method::FirstPrinciples, coefficient_first_principles(&prep.norm, x, ends, None)?),
    ])
}

/// Pairwise relative disagreement `|p − q| / max(|p|, |q|, scale)`.
pub fn relative_spread(values: &[Complex64], scale: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, p) in values.iter().enumerate() {
        for q in &values[i + 1..] {
            let denom = p.norm().max(q.norm()).max(scale);
            if denom > 0.0 {
                worst = worst.max((p - q).norm() / denom);
            }
        }
    }
    worst
}

/// `Σ |⟨f, π(x) g⟩|²` over `x` of length `J` starting with `c`, ending with `d`.
pub fn sphere_sum_brute(prep: &Prepared, j: usize, c: Letter, d: Letter, ends: &Endpoints) -> Result<f64> {
    if j == 0 {
        return Err(Error::Argument("J must be ≥ 1".into()));
    }
    let mut total = 0.0;
    for x in enumerate_sphere(prep.system().alphabet(), j, Some(c), Some(d))? {
        total += coefficient_recursive(prep, &x, ends)?.norm_sqr();
    }
    Ok(total)
}

/// `Σ_{|x| = n} |⟨f, π(x) g⟩|²` over the whole sphere, including `x = e`
/// when `n = 0`.
pub fn sphere_total_brute(prep: &Prepared, n: usize, ends: &Endpoints) -> Result<f64> {
    if n == 0 {
        return Ok(ends.identity_coefficient(&prep.norm).norm_sqr());
    }
    let mut total = 0.0;
    for x in enumerate_sphere(prep.system().alphabet(), n, None, None)? {
        total += coefficient_recursive(prep, &x, ends)?.norm_sqr();
    }
    Ok(total)
}

/// Coordinates `u ∈ V̂_c` of `Sf` for `f = μ[e, a, v_a]`:
/// `⟨f, μ[c, e, w]⟩ = B_a(v_a, H_{ac⁻¹} w) = w† u`.
pub fn boundary_functional(norm: &NormalizedSystem, c: Letter, a: Letter, va: &CVec) -> Result<CVec> {
    if a == c {
        return Err(Error::Argument("boundary functional needs a ≠ c".into()));
    }
    let sys = &norm.system;
    sys.check_vector(a, va)?;
    let h = sys.block(a, c.inverse()).expect("a ≠ c");
    Ok(h.adjoint() * (norm.forms.get(a) * va))
}

/// `B̂_c(u, u)` for a vector in `V̂_c`.
pub fn twin_norm_sq(forms: &crate::system::FormTuple, c: Letter, u: &CVec) -> f64 {
    forms.pair(c, u, u).re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{random_system, random_vector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn iso2() -> Prepared {
        let s = MatrixSystem::from_fn(Alphabet::standard(2), vec![1; 4], |_, _| {
            CMat::from_element(1, 1, Complex64::from(3f64.sqrt().recip()))
        })
        .unwrap();
        Prepared::new(&s).unwrap()
    }

    fn random_prepared(seed: u64) -> Prepared {
        let s = random_system(&Alphabet::standard(2), &[2, 1, 1, 2], seed).unwrap();
        Prepared::new(&s).unwrap()
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

    #[test]
    fn sphere_counts() {
        let al = Alphabet::standard(2);
        assert_eq!(enumerate_sphere(&al, 3, None, None).unwrap().count(), 36);
        assert_eq!(enumerate_sphere(&al, 0, None, None).unwrap().collect::<Vec<_>>(), vec![ReducedWord::default()]);
        let (a, b) = (al.letter("a").unwrap(), al.letter("b").unwrap());
        assert_eq!(enumerate_sphere(&al, 1, Some(a), Some(b)).unwrap().count(), 0);
        for j in 1..=6 {
            let words: Vec<_> = enumerate_sphere(&al, j, None, None).unwrap().collect();
            assert_eq!(words.len() as u128, sphere_size(4, j));
            assert!(words.windows(2).all(|w| w[0] < w[1]));
            assert!(words.iter().all(|w| w.len() == j));
        }
        let al3 = Alphabet::standard(3);
        assert_eq!(enumerate_sphere(&al3, 4, None, None).unwrap().count() as u128, sphere_size(6, 4));
    }

    #[test]
    fn pinned_enumeration_partitions_the_sphere() {
        let al = Alphabet::standard(2);
        for j in 1..=5 {
            let mut total = 0;
            for c in al.letters() {
                for d in al.letters() {
                    for w in enumerate_sphere(&al, j, Some(c), Some(d)).unwrap() {
                        assert_eq!((w.first(), w.last()), (Some(c), Some(d)));
                        total += 1;
                    }
                }
            }
            assert_eq!(total as u128, sphere_size(4, j));
        }
        // one generator: only powers of a or of A
        let al1 = Alphabet::standard(1);
        let a = al1.letter("a").unwrap();
        assert_eq!(enumerate_sphere(&al1, 4, None, None).unwrap().count(), 2);
        assert_eq!(enumerate_sphere(&al1, 4, Some(a), Some(a.inverse())).unwrap().count(), 0);
    }

    #[test]
    fn oversized_sphere_is_refused() {
        assert!(enumerate_sphere(&Alphabet::standard(2), 20, None, None).is_err());
    }

    #[test]
    fn word_algebra() {
        let al = Alphabet::standard(2);
        let x = ReducedWord::parse(&al, "abA").unwrap();
        assert_eq!(x.display(&al).to_string(), "a.b.A");
        assert!(x.mul(&x.inverse()).is_empty());
        assert!(ReducedWord::parse(&al, "aA").is_err());
        assert_eq!(ReducedWord::parse(&al, "e").unwrap(), ReducedWord::default());
    }

    #[test]
    fn products() {
        let p = iso2();
        let al = p.system().alphabet().clone();
        let one = ReducedWord::parse(&al, "a").unwrap();
        assert_eq!(h_product(p.system(), &one), CMat::identity(1, 1));
        let four = ReducedWord::parse(&al, "abab").unwrap();
        assert!((h_product(p.system(), &four)[(0, 0)].re - 3f64.sqrt().recip().powi(3)).abs() < 1e-15);

        let r = random_prepared(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let w = random_word(4, 5, &mut rng);
            let hat = hhat_product(r.system(), &w);
            // Ĥ(y) is also the product of twin blocks along y
            let via_twin = h_product(&r.twin.system, &w);
            assert!(linalg::max_abs_diff(&hat, &via_twin) < 1e-12);
        }
    }

    #[test]
    fn direct_vanishes_without_deltas() {
        let p = random_prepared(4);
        let al = p.system().alphabet().clone();
        let (a, b) = (al.letter("a").unwrap(), al.letter("b").unwrap());
        let ends = Endpoints::unit(p.system(), a, b);
        // a₁ ≠ a and a_J ≠ b⁻¹
        let x = ReducedWord::parse(&al, "bab").unwrap();
        assert_eq!(coefficient_direct(&p, &x, &ends).unwrap(), linalg::ZERO);
    }

    #[test]
    fn iso2_three_methods_agree() {
        let p = iso2();
        let al = p.system().alphabet().clone();
        for a in al.letters() {
            for b in al.letters() {
                let ends = Endpoints::unit(p.system(), a, b);
                for j in 1..=4 {
                    for x in enumerate_sphere(&al, j, None, None).unwrap() {
                        let recs = coefficient_all(&p, &x, &ends).unwrap();
                        let vals: Vec<_> = recs.iter().map(|r| r.value).collect();
                        assert!(relative_spread(&vals, 1e-12) < 1e-12, "{vals:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn random_three_methods_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed in 1..=3 {
            let p = random_prepared(seed);
            for _ in 0..40 {
                let ends = random_ends(&p, &mut rng);
                let len = rng.random_range(1..=4);
                let x = random_word(4, len, &mut rng);
                let recs = coefficient_all(&p, &x, &ends).unwrap();
                let vals: Vec<_> = recs.iter().map(|r| r.value).collect();
                assert!(relative_spread(&vals, 1e-9) < 1e-9, "{vals:?}");
            }
        }
    }

    #[test]
    fn recursion_plain_track_is_h_of_x() {
        let p = random_prepared(5);
        let al = p.system().alphabet().clone();
        let a = al.letter("a").unwrap();
        let ends = Endpoints::unit(p.system(), a, al.letter("b").unwrap());
        let x = ReducedWord::parse(&al, "abAB").unwrap();
        let t = recursion_track(&p, &x, &ends).unwrap();
        let expected = h_product(p.system(), &x) * &ends.va;
        assert!((t.plain - expected).norm() < 1e-14);
    }

    #[test]
    fn first_principles_identity_and_radius() {
        let p = random_prepared(6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let ends = random_ends(&p, &mut rng);
            let e = coefficient_first_principles(&p.norm, &ReducedWord::default(), &ends, None).unwrap();
            assert!((e - ends.identity_coefficient(&p.norm)).norm() < 1e-12);
            let x = random_word(4, 2, &mut rng);
            let v3 = coefficient_first_principles(&p.norm, &x, &ends, Some(3)).unwrap();
            let v4 = coefficient_first_principles(&p.norm, &x, &ends, Some(4)).unwrap();
            assert!((v3 - v4).norm() <= 1e-12 * (1.0 + v3.norm()));
        }
        let ends = random_ends(&p, &mut rng);
        let x = random_word(4, 3, &mut rng);
        assert!(coefficient_first_principles(&p.norm, &x, &ends, Some(2)).is_err());
    }

    #[test]
    fn sphere_sum_brute_matches_transfer() {
        let p = random_prepared(8);
        let al = p.system().alphabet().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ends = random_ends(&p, &mut rng);
        let bv = p.boundary_vectors(&ends).unwrap();
        for j in 1..=5 {
            for c in al.letters() {
                for d in al.letters() {
                    let fast = crate::transfer::sphere_sum(&p.op, &bv, j, c, d);
                    let slow = sphere_sum_brute(&p, j, c, d, &ends).unwrap();
                    assert!((fast.raw.re - slow).abs() <= 1e-10 * (1.0 + slow));
                    assert!(fast.residue() <= 1e-10 || fast.raw.norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn iso2_boundary_functional() {
        let p = iso2();
        let al = p.system().alphabet().clone();
        let (a, b) = (al.letter("a").unwrap(), al.letter("b").unwrap());
        let one = CVec::from_element(1, linalg::ONE);
        let u = boundary_functional(&p.norm, b, a, &one).unwrap();
        assert!((u[0] - 3f64.sqrt().recip()).norm() < 1e-12);
        assert!(boundary_functional(&p.norm, a, a, &one).is_err());
    }

    #[test]
    fn boundary_functional_matches_translation() {
        // ⟨f, μ[c, e, g(x)]⟩ = ⟨f, π(x⁻¹) g⟩ for x ending in c⁻¹
        let p = random_prepared(2);
        let al = p.system().alphabet().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, b, c) = (al.letter("a").unwrap(), al.letter("b").unwrap(), al.letter("B").unwrap());
        let va = random_vector(&mut rng, p.system().dim(a));
        let vb = random_vector(&mut rng, p.system().dim(b));
        let f = Elementary::new(ReducedWord::default(), a, va.clone());
        let u = boundary_functional(&p.norm, c, a, &va).unwrap();
        for x in ["bab", "bAb", "bb", "bBaab"].iter().filter_map(|s| ReducedWord::parse(&al, s).ok()) {
            if x.last() != Some(c.inverse()) {
                continue;
            }
            let gx = h_product(p.system(), &x) * &vb;
            let lhs = inner_product(&p.norm, &f, &Elementary::new(ReducedWord::parse(&al, "B").unwrap(), c.inverse(), gx.clone()), None).unwrap();
            let g = Elementary::new(ReducedWord::default(), b, vb.clone());
            let rhs = inner_product(&p.norm, &f, &g.translate(&x.inverse()), None).unwrap();
            assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()), "{lhs} vs {rhs}");
            assert!((lhs - gx.dotc(&u)).norm() < 1e-10 * (1.0 + lhs.norm()));
        }
    }

    #[test]
    fn translation_preserves_inner_products() {
        let p = random_prepared(9);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let ends = random_ends(&p, &mut rng);
            let f = Elementary::new(ReducedWord::default(), ends.a, ends.va.clone());
            let g = Elementary::new(random_word(4, 2, &mut rng), ends.b, ends.vb.clone());
            let y = random_word(4, 2, &mut rng);
            let before = inner_product(&p.norm, &f, &g, None).unwrap();
            let after = inner_product(&p.norm, &f.translate(&y), &g.translate(&y), None).unwrap();
            assert!((before - after).norm() < 1e-10 * (1.0 + before.norm()));
        }
    }
}
