//! Coupling maps `E_ab`, the block matrices `D̃` and `D`, and the resolvent
//! sums built from them.
//!
//! Index layout: `D̃` is slot-major (hat, then plain), then letter, then
//! coordinate. `D` only couples equal letters on both tensor factors, so it
//! lives on the pair space `⊕_{s1,s2,a} V^{s1}_a ⊗ conj(V^{s2}_a)`, laid out
//! slot-pair-major, then letter, then `i · dim(s2, a) + j`.

use std::ops::Range;

use nalgebra::LU;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::normalization::{normalize, twin, NormalizedSystem, TwinSystem};
use crate::system::{Letter, MatrixSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    /// `V̂_a`, the twin space (dimension `dim V_{a⁻¹}`).
    Hat,
    /// `V_a`.
    Plain,
}

impl Slot {
    pub const BOTH: [Slot; 2] = [Slot::Hat, Slot::Plain];

    pub fn index(self) -> usize {
        self as usize
    }
}

pub const SLOT_PAIRS: [(Slot, Slot); 4] = [
    (Slot::Hat, Slot::Hat),
    (Slot::Hat, Slot::Plain),
    (Slot::Plain, Slot::Hat),
    (Slot::Plain, Slot::Plain),
];

fn pair_number(p: (Slot, Slot)) -> usize {
    2 * p.0.index() + p.1.index()
}

/// `E_ab: V_b → V̂_a`, `E_ab = Σ_{c ∉ {a, b⁻¹}} H_{ca⁻¹}† M_c H_cb`, zero
/// when `ab = e`.
#[derive(Debug, Clone)]
pub struct CouplingMaps {
    n: usize,
    blocks: Vec<CMat>,
}

impl CouplingMaps {
    pub fn get(&self, a: Letter, b: Letter) -> &CMat {
        &self.blocks[a.index() * self.n + b.index()]
    }

    /// `max ‖E_ab† − E_{b⁻¹a⁻¹}‖_max`.
    pub fn adjoint_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.n {
            for b in 0..self.n {
                let e = &self.blocks[a * self.n + b];
                let f = &self.blocks[(b ^ 1) * self.n + (a ^ 1)];
                worst = worst.max(linalg::max_abs_diff(&e.adjoint(), f));
            }
        }
        worst
    }

    #[cfg(test)]
    pub(crate) fn zero_out(&mut self) {
        for m in &mut self.blocks {
            m.fill(linalg::ZERO);
        }
    }

    pub fn all_zero(&self) -> bool {
        self.blocks.iter().all(|m| m.iter().all(|z| *z == linalg::ZERO))
    }
}

pub fn coupling(norm: &NormalizedSystem, _twin: &TwinSystem) -> CouplingMaps {
    let sys = &norm.system;
    let alphabet = sys.alphabet();
    let n = alphabet.len();
    let mut blocks = Vec::with_capacity(n * n);
    for a in alphabet.letters() {
        for b in alphabet.letters() {
            let mut e = CMat::zeros(sys.dim(a.inverse()), sys.dim(b));
            if !a.cancels(b) {
                for c in alphabet.letters().filter(|&c| c != a && c != b.inverse()) {
                    let left = sys.block(c, a.inverse()).expect("c ≠ a");
                    let right = sys.block(c, b).expect("c ≠ b⁻¹");
                    e += left.adjoint() * norm.forms.get(c) * right;
                }
            }
            blocks.push(e);
        }
    }
    CouplingMaps { n, blocks }
}

/// The two vectors whose coefficients are being measured:
/// `f = μ[e, a, v_a]` and `g = μ[e, b, v_b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoints {
    pub a: Letter,
    pub va: CVec,
    pub b: Letter,
    pub vb: CVec,
}

impl Endpoints {
    pub fn new(a: Letter, va: CVec, b: Letter, vb: CVec) -> Self {
        Self { a, va, b, vb }
    }

    /// First standard basis vectors at `a` and `b`.
    pub fn unit(system: &MatrixSystem, a: Letter, b: Letter) -> Self {
        let e = |l: Letter| {
            let mut v = CVec::zeros(system.dim(l));
            v[0] = linalg::ONE;
            v
        };
        Self::new(a, e(a), b, e(b))
    }

    pub fn check(&self, system: &MatrixSystem) -> Result<()> {
        system.check_vector(self.a, &self.va)?;
        system.check_vector(self.b, &self.vb)
    }

    /// `‖f‖² = B_a(v_a, v_a)`.
    pub fn norm_f(&self, norm: &NormalizedSystem) -> f64 {
        norm.forms.pair(self.a, &self.va, &self.va).re
    }

    /// `‖g‖² = B_b(v_b, v_b)`.
    pub fn norm_g(&self, norm: &NormalizedSystem) -> f64 {
        norm.forms.pair(self.b, &self.vb, &self.vb).re
    }

    /// The coefficient at the identity: `B_a(v_a, v_b)` if `a = b`, else 0.
    pub fn identity_coefficient(&self, norm: &NormalizedSystem) -> Complex64 {
        if self.a == self.b {
            norm.forms.pair(self.a, &self.va, &self.vb)
        } else {
            linalg::ZERO
        }
    }
}

/// Endpoint terms of the coefficient expansion: `E_{a₁e}` for each possible
/// first letter and `E_{ea_J}` for each possible last letter.
#[derive(Debug, Clone)]
pub struct BoundaryCovectors {
    /// `E_{a₁e} = H_{aa₁⁻¹}† M_a v_a ∈ V̂_{a₁}`, zero when `a₁ = a`.
    pub start: Vec<CVec>,
    /// `E_{ea_J} = conj(H_{ba_J}† M_b v_b)`, paired with `u ∈ V_{a_J}` as `Σ e_i u_i`;
    /// zero when `a_J = b⁻¹`.
    pub end: Vec<CVec>,
}

pub fn boundary_covectors(norm: &NormalizedSystem, ends: &Endpoints) -> Result<BoundaryCovectors> {
    let sys = &norm.system;
    ends.check(sys)?;
    let ma_va = norm.forms.get(ends.a) * &ends.va;
    let mb_vb = norm.forms.get(ends.b) * &ends.vb;
    let start = sys
        .alphabet()
        .letters()
        .map(|a1| match sys.block(ends.a, a1.inverse()) {
            Some(h) => h.adjoint() * &ma_va,
            None => CVec::zeros(sys.dim(a1.inverse())),
        })
        .collect();
    let end = sys
        .alphabet()
        .letters()
        .map(|aj| match sys.block(ends.b, aj) {
            Some(h) => (h.adjoint() * &mb_vb).conjugate(),
            None => CVec::zeros(sys.dim(aj)),
        })
        .collect();
    Ok(BoundaryCovectors { start, end })
}

/// `D̃` and `D = D̃ ⊗ conj(D̃)` restricted to equal letters.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    letters: usize,
    /// `slot_dims[slot][letter]`
    slot_dims: [Vec<usize>; 2],
    tilde_offsets: [Vec<usize>; 2],
    pair_offsets: [Vec<usize>; 4],
    pair_ranges: [Range<usize>; 4],
    pub dtilde: CMat,
    pub dee: CMat,
}

impl TransferOperator {
    pub fn build(norm: &NormalizedSystem, twin: &TwinSystem, coupling: &CouplingMaps) -> Self {
        let sys = &norm.system;
        let alphabet = sys.alphabet();
        let n = alphabet.len();
        let slot_dims = [
            alphabet.letters().map(|l| twin.system.dim(l)).collect::<Vec<_>>(),
            alphabet.letters().map(|l| sys.dim(l)).collect::<Vec<_>>(),
        ];

        let mut tilde_offsets = [vec![0; n], vec![0; n]];
        let mut o = 0;
        for s in Slot::BOTH {
            for l in 0..n {
                tilde_offsets[s.index()][l] = o;
                o += slot_dims[s.index()][l];
            }
        }
        let mut dtilde = CMat::zeros(o, o);
        for (a, b, h) in sys.blocks() {
            let (ai, bi) = (a.index(), b.index());
            let hat = twin.system.block(a, b).expect("same allowed pairs");
            let place = |m: &mut CMat, r: usize, c: usize, x: &CMat| m.view_mut((r, c), x.shape()).copy_from(x);
            place(&mut dtilde, tilde_offsets[0][ai], tilde_offsets[0][bi], hat);
            place(&mut dtilde, tilde_offsets[0][ai], tilde_offsets[1][bi], coupling.get(a, b));
            place(&mut dtilde, tilde_offsets[1][ai], tilde_offsets[1][bi], h);
        }

        let mut pair_offsets = [vec![0; n], vec![0; n], vec![0; n], vec![0; n]];
        let mut pair_ranges: [Range<usize>; 4] = Default::default();
        let mut o = 0;
        for p in SLOT_PAIRS {
            let k = pair_number(p);
            let start = o;
            for l in 0..n {
                pair_offsets[k][l] = o;
                o += slot_dims[p.0.index()][l] * slot_dims[p.1.index()][l];
            }
            pair_ranges[k] = start..o;
        }

        let mut op = Self {
            letters: n,
            slot_dims,
            tilde_offsets,
            pair_offsets,
            pair_ranges,
            dtilde,
            dee: CMat::zeros(o, o),
        };
        let mut dee = CMat::zeros(o, o);
        for p in SLOT_PAIRS {
            for q in SLOT_PAIRS {
                // D̃ is upper triangular in (hat, plain)
                if p.0 > q.0 || p.1 > q.1 {
                    continue;
                }
                for (a, b, _) in sys.blocks() {
                    let left = op.tilde_block(p.0, a, q.0, b);
                    let right = op.tilde_block(p.1, a, q.1, b).conjugate();
                    if linalg::max_abs(&left) == 0.0 || linalg::max_abs(&right) == 0.0 {
                        continue;
                    }
                    let k = linalg::kron(&left, &right);
                    let r = op.pair_offset(p, a);
                    let c = op.pair_offset(q, b);
                    dee.view_mut((r, c), k.shape()).copy_from(&k);
                }
            }
        }
        op.dee = dee;
        op
    }

    pub fn letters(&self) -> usize {
        self.letters
    }

    pub fn slot_dim(&self, s: Slot, l: Letter) -> usize {
        self.slot_dims[s.index()][l.index()]
    }

    /// Flat index into `D̃` of coordinate `i` of `V^s_l`.
    pub fn tilde_index(&self, s: Slot, l: Letter, i: usize) -> usize {
        self.tilde_offsets[s.index()][l.index()] + i
    }

    /// Block of `D̃` mapping `V^t_b` to `V^s_a`.
    pub fn tilde_block(&self, s: Slot, a: Letter, t: Slot, b: Letter) -> CMat {
        self.dtilde
            .view(
                (self.tilde_index(s, a, 0), self.tilde_index(t, b, 0)),
                (self.slot_dim(s, a), self.slot_dim(t, b)),
            )
            .into_owned()
    }

    pub fn pair_offset(&self, p: (Slot, Slot), l: Letter) -> usize {
        self.pair_offsets[pair_number(p)][l.index()]
    }

    /// Flat index into `D` of the coordinate `(i, j)` of `V^{s1}_l ⊗ conj(V^{s2}_l)`.
    pub fn pair_index(&self, p: (Slot, Slot), l: Letter, i: usize, j: usize) -> usize {
        self.pair_offset(p, l) + i * self.slot_dim(p.1, l) + j
    }

    pub fn pair_range(&self, p: (Slot, Slot)) -> Range<usize> {
        self.pair_ranges[pair_number(p)].clone()
    }

    /// Block of `D` from slot pair `q` to slot pair `p`, all letters.
    pub fn slot_pair_block(&self, p: (Slot, Slot), q: (Slot, Slot)) -> CMat {
        let (r, c) = (self.pair_range(p), self.pair_range(q));
        self.dee.view((r.start, c.start), (r.len(), c.len())).into_owned()
    }

    pub fn dim(&self) -> usize {
        self.dee.nrows()
    }

    /// Places `x ⊗ conj(y)` (with `x, y` indexed by slot) at letter `l`.
    fn pair_vector(&self, l: Letter, parts: &[CVec; 2]) -> CVec {
        let mut out = CVec::zeros(self.dim());
        for p in SLOT_PAIRS {
            let (x, y) = (&parts[p.0.index()], &parts[p.1.index()]);
            for i in 0..x.len() {
                for j in 0..y.len() {
                    out[self.pair_index(p, l, i, j)] = x[i] * y[j].conj();
                }
            }
        }
        out
    }

    /// Re-packs a vector on the slot pair `p` into matrices `X_l` of shape
    /// `dim(p.0, l) × dim(p.1, l)`.
    pub fn unpack_pair(&self, p: (Slot, Slot), v: &[Complex64]) -> Vec<CMat> {
        let base = self.pair_range(p).start;
        (0..self.letters)
            .map(|li| {
                let l = Letter::from_index(li);
                let (r, c) = (self.slot_dim(p.0, l), self.slot_dim(p.1, l));
                let o = self.pair_offset(p, l) - base;
                CMat::from_fn(r, c, |i, j| v[o + i * c + j])
            })
            .collect()
    }

    /// Inverse of [`unpack_pair`](Self::unpack_pair).
    pub fn pack_pair(&self, p: (Slot, Slot), blocks: &[CMat]) -> CVec {
        let range = self.pair_range(p);
        let mut out = CVec::zeros(range.len());
        for (li, m) in blocks.iter().enumerate() {
            let l = Letter::from_index(li);
            let o = self.pair_offset(p, l) - range.start;
            let c = self.slot_dim(p.1, l);
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out[o + i * c + j] = m[(i, j)];
                }
            }
        }
        out
    }
}

/// The vectors `S(c)` (columns) and `R(d)` (rows) in the coordinates of `D`.
#[derive(Debug, Clone)]
pub struct BoundaryVectors {
    pub s_of_c: Vec<CVec>,
    pub r_of_d: Vec<CVec>,
}

impl BoundaryVectors {
    pub fn new(norm: &NormalizedSystem, op: &TransferOperator, ends: &Endpoints) -> Result<Self> {
        let cov = boundary_covectors(norm, ends)?;
        let sys = &norm.system;
        let letters: Vec<Letter> = sys.alphabet().letters().collect();
        let s_of_c = letters
            .iter()
            .map(|&c| {
                let plain = if c == ends.a { ends.va.clone() } else { CVec::zeros(sys.dim(c)) };
                op.pair_vector(c, &[cov.start[c.index()].clone(), plain])
            })
            .collect();
        let r_of_d = letters
            .iter()
            .map(|&d| {
                let hat = if ends.b == d.inverse() {
                    ends.vb.conjugate()
                } else {
                    CVec::zeros(sys.dim(d.inverse()))
                };
                op.pair_vector(d, &[hat, cov.end[d.index()].clone()])
            })
            .collect();
        Ok(Self { s_of_c, r_of_d })
    }

    pub fn s(&self, c: Letter) -> &CVec {
        &self.s_of_c[c.index()]
    }

    pub fn r(&self, d: Letter) -> &CVec {
        &self.r_of_d[d.index()]
    }
}

/// A quantity that is real and non-negative in exact arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealValue {
    /// `max(re(raw), 0)`.
    pub value: f64,
    pub raw: Complex64,
}

impl RealValue {
    pub fn new(raw: Complex64) -> Self {
        Self { value: raw.re.max(0.0), raw }
    }

    /// Imaginary and negative parts relative to the magnitude.
    pub fn residue(&self) -> f64 {
        let bad = self.raw.im.abs().max((-self.raw.re).max(0.0));
        bad / self.raw.norm().max(f64::MIN_POSITIVE)
    }
}

/// Unrestricted transpose product `Σ r_i x_i`.
fn dot(r: &CVec, x: &CVec) -> Complex64 {
    r.iter().zip(x.iter()).map(|(a, b)| a * b).sum()
}

/// `R(d) D^{J−1} S(c)`: the sum of `|⟨f, π(x) g⟩|²` over words of length `J`
/// that start with `c` and end with `d`.
pub fn sphere_sum(op: &TransferOperator, bv: &BoundaryVectors, j: usize, c: Letter, d: Letter) -> RealValue {
    assert!(j >= 1, "J must be ≥ 1");
    let mut x = bv.s(c).clone();
    for _ in 1..j {
        x = &op.dee * x;
    }
    RealValue::new(dot(bv.r(d), &x))
}

/// Sphere sums for all `J ≤ max_j` and a fixed `c`, indexed `[J − 1][d]`.
pub fn sphere_sums_from(op: &TransferOperator, bv: &BoundaryVectors, max_j: usize, c: Letter) -> Vec<Vec<RealValue>> {
    let mut out = Vec::with_capacity(max_j);
    let mut x = bv.s(c).clone();
    for j in 1..=max_j {
        if j > 1 {
            x = &op.dee * x;
        }
        out.push(bv.r_of_d.iter().map(|r| RealValue::new(dot(r, &x))).collect());
    }
    out
}

/// Which exponential weight the φ-norm uses: `e^{−ε|x|}` or `e^{−2ε|x|}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weight {
    #[default]
    Single,
    Double,
}

impl Weight {
    pub fn effective(self, eps: f64) -> f64 {
        match self {
            Weight::Single => eps,
            Weight::Double => 2.0 * eps,
        }
    }
}

/// LU factorization of `I − e^{−ε} D`, shared by every `ψ(ε, c, d)`.
pub struct Resolvent {
    eps: f64,
    lu: LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Resolvent {
    pub fn new(op: &TransferOperator, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Argument(format!("eps must be positive, got {eps}")));
        }
        let n = op.dim();
        let m = CMat::identity(n, n) - &op.dee * Complex64::from((-eps).exp());
        let lu = m.lu();
        let diag: Vec<f64> = lu.u().diagonal().iter().map(|z| z.norm()).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let pivot_ratio = if max > 0.0 { min / max } else { 0.0 };
        if pivot_ratio < 1e-15 {
            return Err(Error::SingularResolvent { eps, pivot_ratio });
        }
        Ok(Self { eps, lu })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `e^{−ε} (I − e^{−ε} D)^{−1} s`.
    pub fn apply(&self, s: &CVec) -> CVec {
        self.lu.solve(s).expect("checked non-singular") * Complex64::from((-self.eps).exp())
    }
}

/// `ψ(ε, c, d) = e^{−ε} R(d) (I − e^{−ε} D)^{−1} S(c)`.
pub fn psi(res: &Resolvent, bv: &BoundaryVectors, c: Letter, d: Letter) -> RealValue {
    RealValue::new(dot(bv.r(d), &res.apply(bv.s(c))))
}

/// All `ψ(ε, c, d)`, indexed `[c][d]`, with one solve per `c`.
pub fn psi_grid(res: &Resolvent, bv: &BoundaryVectors) -> Vec<Vec<RealValue>> {
    bv.s_of_c
        .iter()
        .map(|s| {
            let x = res.apply(s);
            bv.r_of_d.iter().map(|r| RealValue::new(dot(r, &x))).collect()
        })
        .collect()
}

/// `‖φ_ε‖² = |B_a(v_a, v_b)|² [a = b] + Σ_{c,d} ψ(ε, c, d)`.
pub fn phi_norm(
    norm: &NormalizedSystem,
    op: &TransferOperator,
    bv: &BoundaryVectors,
    ends: &Endpoints,
    eps: f64,
    weight: Weight,
) -> Result<f64> {
    let res = Resolvent::new(op, weight.effective(eps))?;
    let e_term = ends.identity_coefficient(norm).norm_sqr();
    let total: f64 = psi_grid(&res, bv).iter().flatten().map(|v| v.value).sum();
    Ok(e_term + total)
}

/// `Σ_{|x| = n} |⟨f, π(x) g⟩|²` for `n = 0..=max_n`.
pub fn sphere_totals(norm: &NormalizedSystem, op: &TransferOperator, bv: &BoundaryVectors, ends: &Endpoints, max_n: usize) -> Vec<f64> {
    let mut out = vec![0.0; max_n + 1];
    out[0] = ends.identity_coefficient(norm).norm_sqr();
    if max_n == 0 {
        return out;
    }
    for c in 0..op.letters() {
        let rows = sphere_sums_from(op, bv, max_n, Letter::from_index(c));
        for (j, row) in rows.iter().enumerate() {
            out[j + 1] += row.iter().map(|v| v.value).sum::<f64>();
        }
    }
    out
}

/// Largest ratio `Σ_{|x|=n} |coef|² / ((n+1)² ‖f‖² ‖g‖²)` over `1 ≤ n ≤ max_n`;
/// the Haagerup-type bound says it never exceeds 1. (`n = 0` is plain
/// Cauchy–Schwarz and saturates for parallel endpoints.)
pub fn haagerup_ratio(norm: &NormalizedSystem, op: &TransferOperator, bv: &BoundaryVectors, ends: &Endpoints, max_n: usize) -> f64 {
    let scale = ends.norm_f(norm) * ends.norm_g(norm);
    sphere_totals(norm, op, bv, ends, max_n)
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, t)| t / ((n + 1) as f64).powi(2) / scale)
        .fold(0.0, f64::max)
}

/// Everything derived from a system before the spectral analysis: its
/// normalization, twin, coupling maps and transfer operator.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub norm: NormalizedSystem,
    pub twin: TwinSystem,
    pub coupling: CouplingMaps,
    pub op: TransferOperator,
}

impl Prepared {
    pub fn new(system: &MatrixSystem) -> Result<Self> {
        Self::from_normalized(normalize(system)?)
    }

    pub fn from_normalized(norm: NormalizedSystem) -> Result<Self> {
        let twin = twin(&norm)?;
        let coupling = coupling(&norm, &twin);
        let op = TransferOperator::build(&norm, &twin, &coupling);
        Ok(Self { norm, twin, coupling, op })
    }

    pub fn system(&self) -> &MatrixSystem {
        &self.norm.system
    }

    pub fn boundary_vectors(&self, ends: &Endpoints) -> Result<BoundaryVectors> {
        BoundaryVectors::new(&self.norm, &self.op, ends)
    }

    pub fn phi_norm(&self, ends: &Endpoints, eps: f64, weight: Weight) -> Result<f64> {
        let bv = self.boundary_vectors(ends)?;
        phi_norm(&self.norm, &self.op, &bv, ends, eps, weight)
    }
}
