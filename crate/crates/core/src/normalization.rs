//! The compatibility operator `T`, its Perron eigentuple, normalization and
//! the twin system.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RankPolicy};
use crate::system::{FormTuple, Letter, MatrixSystem};

const MAX_ITERATIONS: usize = 100_000;
const RELATIVE_CHANGE: f64 = 1e-13;
const RESIDUAL_LIMIT: f64 = 1e-10;

/// `(TM)_a = Σ_b H_ba† M_b H_ba`, re-Hermitized.
pub fn apply_t(system: &MatrixSystem, forms: &FormTuple) -> Result<FormTuple> {
    check_shapes(system, forms)?;
    let mut out = FormTuple::zeros(system.dims());
    for (b, a, h) in system.blocks() {
        out.forms[a.index()] += h.adjoint() * forms.get(b) * h;
    }
    for m in &mut out.forms {
        *m = linalg::hermitize(m);
    }
    Ok(out)
}

fn check_shapes(system: &MatrixSystem, forms: &FormTuple) -> Result<()> {
    if forms.forms.len() != system.alphabet().len() {
        return Err(Error::Dimension(format!(
            "{} forms for {} letters",
            forms.forms.len(),
            system.alphabet().len()
        )));
    }
    for l in system.alphabet().letters() {
        let n = system.dim(l);
        if forms.get(l).shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "form for \"{}\" has shape {:?}, expected {:?}",
                system.alphabet().name(l),
                forms.get(l).shape(),
                (n, n)
            )));
        }
    }
    Ok(())
}

/// `T` as a dense matrix on the column-major vectorized tuple.
pub fn t_matrix(system: &MatrixSystem) -> CMat {
    let offsets = form_offsets(system);
    let size: usize = system.dims().iter().map(|n| n * n).sum();
    let mut t = CMat::zeros(size, size);
    for (b, a, h) in system.blocks() {
        // vec(H† X H) = (Hᵀ ⊗ H†) vec(X)
        let k = linalg::kron(&h.transpose(), &h.adjoint());
        let mut view = t.view_mut((offsets[a.index()], offsets[b.index()]), k.shape());
        view += &k;
    }
    t
}

fn form_offsets(system: &MatrixSystem) -> Vec<usize> {
    system
        .dims()
        .iter()
        .scan(0, |acc, &n| {
            let o = *acc;
            *acc += n * n;
            Some(o)
        })
        .collect()
}

fn unflatten(system: &MatrixSystem, v: &[Complex64]) -> FormTuple {
    let offsets = form_offsets(system);
    FormTuple {
        forms: system
            .alphabet()
            .letters()
            .map(|l| {
                let n = system.dim(l);
                let o = offsets[l.index()];
                linalg::unvec(&v[o..o + n * n], n, n)
            })
            .collect(),
    }
}

fn rescale_to_dims(system: &MatrixSystem, forms: &mut FormTuple) {
    let total = system.total_dim() as f64;
    let tr = forms.trace_sum();
    if tr != 0.0 {
        forms.scale(total / tr);
    }
}

fn max_form_change(a: &FormTuple, b: &FormTuple) -> f64 {
    a.max_abs_diff(b)
}

fn max_form_entry(a: &FormTuple) -> f64 {
    a.forms.iter().map(linalg::max_abs).fold(0.0, f64::max)
}

/// How [`dominant_pair`] obtained its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    PowerIteration { iterations: usize },
    Dense,
}

#[derive(Debug, Clone)]
pub struct DominantPair {
    pub lambda: f64,
    pub forms: FormTuple,
    pub method: EigenMethod,
}

/// Perron value of `T` and its positive definite eigentuple, scaled so that
/// `Σ tr M_a = Σ dims`.
///
/// Power iteration from the identity tuple; if it has not settled after the
/// iteration budget, falls back to a dense eigensolve of the flattened `T`.
pub fn dominant_pair(system: &MatrixSystem) -> Result<DominantPair> {
    let pair = match power_iteration(system)? {
        Some(p) => p,
        None => dense_pair(system)?,
    };
    let min = pair.forms.min_eigenvalue();
    let max = pair.forms.max_eigenvalue();
    if !(min > 1e-12 * max) {
        return Err(Error::NotPositive { min_eigenvalue: min });
    }
    Ok(pair)
}

fn power_iteration(system: &MatrixSystem) -> Result<Option<DominantPair>> {
    let mut x = FormTuple::identity(system.dims());
    rescale_to_dims(system, &mut x);
    for it in 1..=MAX_ITERATIONS {
        let mut next = apply_t(system, &x)?;
        let tr = next.trace_sum();
        if !(tr > 0.0) || !tr.is_finite() {
            return Ok(None);
        }
        rescale_to_dims(system, &mut next);
        let change = max_form_change(&next, &x);
        x = next;
        if change <= RELATIVE_CHANGE * max_form_entry(&x) {
            let tx = apply_t(system, &x)?;
            let lambda = tx.trace_sum() / x.trace_sum();
            return Ok(Some(DominantPair {
                lambda,
                forms: x,
                method: EigenMethod::PowerIteration { iterations: it },
            }));
        }
    }
    Ok(None)
}

fn dense_pair(system: &MatrixSystem) -> Result<DominantPair> {
    let t = t_matrix(system);
    let ev = linalg::eigenvalues(&t);
    let radius = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    // the Perron value is real and positive and equals the spectral radius
    let lambda = ev
        .iter()
        .filter(|z| z.re > 0.0 && (z.norm() - radius).abs() <= 1e-9 * radius.max(1.0))
        .map(|z| z.re)
        .fold(f64::NAN, f64::max);
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::NoConvergence(format!("no positive Perron value (spectral radius {radius})")));
    }
    let shifted = &t - CMat::identity(t.nrows(), t.ncols()) * Complex64::from(lambda);
    let (null, _) = linalg::null_space(&shifted, RankPolicy::new(1e-8));
    if null.ncols() == 0 {
        return Err(Error::NoConvergence(format!("no eigenvector for Perron value {lambda}")));
    }
    let v: Vec<Complex64> = null.column(0).iter().copied().collect();
    let mut forms = unflatten(system, &v);
    // fix the phase so that the trace is real and positive
    let tr: Complex64 = forms.forms.iter().map(linalg::trace).sum();
    if tr.norm() == 0.0 {
        return Err(Error::NoConvergence("Perron eigenvector has zero trace".into()));
    }
    let phase = tr.conj() / tr.norm();
    for m in &mut forms.forms {
        *m = linalg::hermitize(&(&*m * phase));
    }
    rescale_to_dims(system, &mut forms);
    Ok(DominantPair { lambda, forms, method: EigenMethod::Dense })
}

/// Eigenvalues of `T` other than the Perron value lying on or outside the
/// circle of radius `1 − 1e-8` (for a normalized system).
pub fn peripheral_spectrum(system: &MatrixSystem) -> Vec<Complex64> {
    let mut ev = linalg::eigenvalues(&t_matrix(system));
    ev.sort_by(|x, y| (x - 1.0).norm().total_cmp(&(y - 1.0).norm()));
    ev.into_iter().skip(1).filter(|z| z.norm() >= 1.0 - 1e-8).collect()
}

/// A system rescaled so that its Perron value is `1`, with its eigentuple.
#[derive(Debug, Clone)]
pub struct NormalizedSystem {
    pub system: MatrixSystem,
    pub forms: FormTuple,
    /// `max_a ‖(TM)_a − M_a‖_max`.
    pub residual: f64,
    /// The factor `√λ` the blocks were divided by.
    pub scale: f64,
    /// Non-Perron eigenvalues of `T` on the unit circle; normally empty.
    pub peripheral: Vec<Complex64>,
}

impl NormalizedSystem {
    pub fn dim(&self, l: Letter) -> usize {
        self.system.dim(l)
    }

    /// `B_a(v, w) = w† M_a v`.
    pub fn pair(&self, l: Letter, v: &crate::linalg::CVec, w: &crate::linalg::CVec) -> Complex64 {
        self.forms.pair(l, v, w)
    }
}

pub fn normalize(system: &MatrixSystem) -> Result<NormalizedSystem> {
    let dp = dominant_pair(system)?;
    let scale = dp.lambda.sqrt();
    let scaled = system.scaled(1.0 / scale);
    finish(scaled, dp.forms, scale)
}

fn finish(system: MatrixSystem, forms: FormTuple, scale: f64) -> Result<NormalizedSystem> {
    let residual = apply_t(&system, &forms)?.max_abs_diff(&forms);
    if residual > RESIDUAL_LIMIT {
        return Err(Error::NoConvergence(format!("compatibility residual {residual:e} exceeds {RESIDUAL_LIMIT:e}")));
    }
    let peripheral = peripheral_spectrum(&system);
    Ok(NormalizedSystem { system, forms, residual, scale, peripheral })
}

/// The twin system `Ĥ_ba = H_{a⁻¹b⁻¹}†` on `V̂_a ≅ ℂ^{dim V_{a⁻¹}}`, with its
/// eigentuple `M̂`.
#[derive(Debug, Clone)]
pub struct TwinSystem {
    pub system: MatrixSystem,
    pub forms: FormTuple,
    /// Perron value of the twin's `T`; equal to `1` up to rounding.
    pub lambda: f64,
    pub residual: f64,
}

impl TwinSystem {
    /// The twin viewed as a normalized system in its own right.
    pub fn as_normalized(&self) -> NormalizedSystem {
        NormalizedSystem {
            system: self.system.clone(),
            forms: self.forms.clone(),
            residual: self.residual,
            scale: 1.0,
            peripheral: Vec::new(),
        }
    }
}

/// Blocks `H_{a⁻¹b⁻¹}†` without any eigentuple.
pub fn twin_blocks(system: &MatrixSystem) -> MatrixSystem {
    let alphabet = system.alphabet().clone();
    let dims: Vec<usize> = alphabet.letters().map(|l| system.dim(l.inverse())).collect();
    MatrixSystem::from_fn(alphabet, dims, |b, a| {
        system
            .block(a.inverse(), b.inverse())
            .expect("(ba)⁻¹ = a⁻¹b⁻¹ is allowed whenever ba is")
            .adjoint()
    })
    .expect("twin of a valid system is valid")
}

pub fn twin(norm: &NormalizedSystem) -> Result<TwinSystem> {
    let system = twin_blocks(&norm.system);
    let dp = dominant_pair(&system)?;
    if (dp.lambda - 1.0).abs() > 1e-9 {
        return Err(Error::TwinNormalization(dp.lambda));
    }
    let residual = apply_t(&system, &dp.forms)?.max_abs_diff(&dp.forms);
    if residual > RESIDUAL_LIMIT {
        return Err(Error::NoConvergence(format!("twin compatibility residual {residual:e}")));
    }
    Ok(TwinSystem { system, forms: dp.forms, lambda: dp.lambda, residual })
}
