//! Least-squares estimation of the chaos coefficients on training paths with
//! truncated piecewise-polynomial bases.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::chaos::{ChaosControlVariate, Coefficients};
use crate::error::{Error, Result};
use crate::exec::map_chunks;
use crate::hermite::{hermite_all, MAX_HERMITE_ORDER};
use crate::rng::{SeedStream, BATCH_TRAINING};
use crate::sde::{Scheme, SdeModel};

/// Piecewise polynomials of degree `p` on `cells` equal cells of `[-R, R]`,
/// zero outside. Inside a cell the basis is `1, t, ..., t^p` with `t` the
/// cell-local coordinate rescaled to `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseBasis {
    degree: usize,
    cells: usize,
    radius: f64,
}

impl PiecewiseBasis {
    pub fn new(degree: usize, cells: usize, radius: f64) -> Result<Self> {
        if cells == 0 {
            return Err(Error::InvalidArgument("basis needs at least one cell".into()));
        }
        if degree > MAX_HERMITE_ORDER {
            return Err(Error::InvalidArgument(format!("polynomial degree {degree} is too large")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("basis radius must be positive, got {radius}")));
        }
        Ok(Self { degree, cells, radius })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Functions per cell.
    pub fn local_size(&self) -> usize {
        self.degree + 1
    }

    /// Total basis size `Q = cells · (p + 1)`.
    pub fn size(&self) -> usize {
        self.cells * self.local_size()
    }

    /// Cell index and local coordinate of `x`, or `None` outside `[-R, R]`.
    #[inline]
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if !(x >= -self.radius && x <= self.radius) {
            return None;
        }
        let width = 2.0 * self.radius / self.cells as f64;
        let cell = (((x + self.radius) / width) as usize).min(self.cells - 1);
        let left = -self.radius + cell as f64 * width;
        let t = (2.0 * (x - left) / width - 1.0).clamp(-1.0, 1.0);
        Some((cell, t))
    }

    /// Fills `out[..=p]` with the local monomials of `x` and returns its cell.
    #[inline]
    pub fn eval_into(&self, x: f64, out: &mut [f64]) -> Option<usize> {
        let (cell, t) = self.locate(x)?;
        let mut v = 1.0;
        for o in out[..self.local_size()].iter_mut() {
            *o = v;
            v *= t;
        }
        Some(cell)
    }
}

/// Nonzero entries `(index, value)` of the basis at `x`.
pub fn basis_eval(basis: &PiecewiseBasis, x: f64) -> Vec<(usize, f64)> {
    let mut buf = [0.0; MAX_HERMITE_ORDER + 1];
    match basis.eval_into(x, &mut buf) {
        Some(cell) => (0..basis.local_size())
            .map(|i| (cell * basis.local_size() + i, buf[i]))
            .collect(),
        None => Vec::new(),
    }
}

/// Clamps `value` to `[-bound, bound]`.
pub fn truncate(value: f64, bound: f64) -> Result<f64> {
    if bound < 0.0 || bound.is_nan() {
        return Err(Error::NegativeBound(bound));
    }
    Ok(value.clamp(-bound, bound))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTarget {
    pub k: usize,
    pub j: usize,
    pub responses: Vec<f64>,
    pub predictors: Vec<f64>,
}

impl RegressionTarget {
    pub fn new(k: usize, j: usize, predictors: Vec<f64>, responses: Vec<f64>) -> Result<Self> {
        if predictors.len() != responses.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} predictors but {} responses",
                predictors.len(),
                responses.len()
            )));
        }
        Ok(Self {
            k,
            j,
            responses,
            predictors,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedCoefficient {
    pub alpha: Vec<f64>,
    pub truncation_bound: f64,
}

impl FittedCoefficient {
    /// Untruncated expansion `Σ α_q ψ_q(x)`.
    pub fn raw_value(&self, basis: &PiecewiseBasis, x: f64) -> f64 {
        let mut buf = [0.0; MAX_HERMITE_ORDER + 1];
        match basis.eval_into(x, &mut buf) {
            Some(cell) => dot_cell(&self.alpha, basis, cell, &buf),
            None => 0.0,
        }
    }

    pub fn value(&self, basis: &PiecewiseBasis, x: f64) -> f64 {
        self.raw_value(basis, x).clamp(-self.truncation_bound, self.truncation_bound)
    }
}

#[inline]
fn dot_cell(alpha: &[f64], basis: &PiecewiseBasis, cell: usize, mono: &[f64]) -> f64 {
    let m = basis.local_size();
    alpha[cell * m..(cell + 1) * m].iter().zip(mono).map(|(a, b)| a * b).sum()
}

/// Per-cell normal equations `B α = b`, with `B` shared by every response
/// that uses the same predictors.
struct CellSystems {
    basis: PiecewiseBasis,
    n: usize,
    /// Pseudo-inverse of each cell block, `None` for empty cells.
    pinv: Vec<Option<DMatrix<f64>>>,
    cell_of: Vec<Option<(usize, [f64; MAX_HERMITE_ORDER + 1])>>,
}

impl CellSystems {
    fn new(basis: PiecewiseBasis, predictors: &[f64]) -> Self {
        let m = basis.local_size();
        let n = predictors.len();
        let mut blocks = vec![DMatrix::<f64>::zeros(m, m); basis.cells()];
        let mut counts = vec![0usize; basis.cells()];
        let mut cell_of = Vec::with_capacity(n);
        for &x in predictors {
            let mut buf = [0.0; MAX_HERMITE_ORDER + 1];
            match basis.eval_into(x, &mut buf) {
                Some(c) => {
                    counts[c] += 1;
                    let b = &mut blocks[c];
                    for r in 0..m {
                        for s in 0..m {
                            b[(r, s)] += buf[r] * buf[s];
                        }
                    }
                    cell_of.push(Some((c, buf)));
                }
                None => cell_of.push(None),
            }
        }
        let pinv = blocks
            .into_iter()
            .zip(&counts)
            .map(|(b, &cnt)| {
                if cnt == 0 {
                    return None;
                }
                let b = b / n as f64;
                let svd = b.svd(true, true);
                let smax = svd.singular_values.max();
                let tol = 1e-10 * smax;
                svd.pseudo_inverse(tol).ok()
            })
            .collect();
        Self {
            basis,
            n,
            pinv,
            cell_of,
        }
    }

    fn rhs(&self, responses: &[f64]) -> Vec<DVector<f64>> {
        let m = self.basis.local_size();
        let mut rhs = vec![DVector::<f64>::zeros(m); self.basis.cells()];
        for (row, &z) in self.cell_of.iter().zip(responses) {
            if let Some((c, buf)) = row {
                for r in 0..m {
                    rhs[*c][r] += buf[r] * z;
                }
            }
        }
        for v in rhs.iter_mut() {
            *v /= self.n as f64;
        }
        rhs
    }

    fn solve(&self, responses: &[f64]) -> Vec<f64> {
        let m = self.basis.local_size();
        let mut alpha = vec![0.0; self.basis.size()];
        for (c, b) in self.rhs(responses).into_iter().enumerate() {
            if let Some(p) = &self.pinv[c] {
                let a = p * b;
                alpha[c * m..(c + 1) * m].copy_from_slice(a.as_slice());
            }
        }
        alpha
    }
}

/// Three times the empirical 99.9th percentile of `|ζ|`.
fn empirical_bound(responses: &[f64]) -> f64 {
    if responses.is_empty() {
        return 0.0;
    }
    let mut abs: Vec<f64> = responses.iter().map(|z| z.abs()).collect();
    let idx = ((abs.len() as f64 * 0.999).ceil() as usize).clamp(1, abs.len()) - 1;
    let (_, q, _) = abs.select_nth_unstable_by(idx, f64::total_cmp);
    3.0 * *q
}

/// Least-squares fit of one target, solved cell by cell with minimum-norm
/// solutions on rank-deficient cells. The truncation bound is three times the
/// 99.9th percentile of `|ζ|`.
pub fn fit_coefficient(target: &RegressionTarget, basis: &PiecewiseBasis) -> Result<FittedCoefficient> {
    if target.predictors.is_empty() {
        return Err(Error::EmptyTarget);
    }
    let sys = CellSystems::new(*basis, &target.predictors);
    Ok(FittedCoefficient {
        alpha: sys.solve(&target.responses),
        truncation_bound: empirical_bound(&target.responses),
    })
}

/// Normal-equation residual `max |Bα - b|` over the cells, for diagnostics.
pub fn normal_equation_residual(target: &RegressionTarget, basis: &PiecewiseBasis, fit: &FittedCoefficient) -> f64 {
    let m = basis.local_size();
    let n = target.predictors.len() as f64;
    let mut b_mats = vec![DMatrix::<f64>::zeros(m, m); basis.cells()];
    let mut rhs = vec![DVector::<f64>::zeros(m); basis.cells()];
    let mut buf = [0.0; MAX_HERMITE_ORDER + 1];
    for (&x, &z) in target.predictors.iter().zip(&target.responses) {
        if let Some(c) = basis.eval_into(x, &mut buf) {
            for r in 0..m {
                rhs[c][r] += buf[r] * z / n;
                for s in 0..m {
                    b_mats[c][(r, s)] += buf[r] * buf[s] / n;
                }
            }
        }
    }
    let mut worst = 0.0f64;
    for c in 0..basis.cells() {
        let a = DVector::from_column_slice(&fit.alpha[c * m..(c + 1) * m]);
        let r = &b_mats[c] * a - &rhs[c];
        worst = worst.max(r.amax());
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisSelection {
    /// Domain radius used when `μ = ∞`.
    pub radius0: f64,
    /// Constant in `Q_cells ≍ (…)^ϰ`.
    pub c_q: f64,
}

impl Default for BasisSelection {
    fn default() -> Self {
        Self { radius0: 3.0, c_q: 1.0 }
    }
}

/// Radius and cell count balancing estimation and approximation error:
/// `R = (N/Δ)^{θ/(θ+μ)} Δ^{1/(θ+μ)}` and `Q_cells = ⌈c_Q R^θ (N/(Δ ln N))^ϰ⌉`
/// with `θ = 2p/(2p+1) = 1 - ϰ`. For `μ = ∞` the radius is `radius0` and the
/// `R^θ` factor drops.
pub fn select_basis_parameters(
    n: usize,
    delta: f64,
    degree: usize,
    mu: f64,
    sel: &BasisSelection,
) -> Result<PiecewiseBasis> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("basis selection needs N >= 2, got {n}")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidStepSize(delta));
    }
    if degree == 0 {
        return Err(Error::InvalidArgument("basis selection needs p >= 1".into()));
    }
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("moment exponent must be positive, got {mu}")));
    }
    let theta = 2.0 * degree as f64 / (2.0 * degree as f64 + 1.0);
    let kappa = 1.0 - theta;
    let nf = n as f64;
    let growth = (nf / (delta * nf.ln())).powf(kappa);
    let (radius, scale) = if mu.is_infinite() {
        (sel.radius0, 1.0)
    } else {
        let r = (nf / delta).powf(theta / (theta + mu)) * delta.powf(1.0 / (theta + mu));
        (r, r.powf(theta))
    };
    let cells = (sel.c_q * scale * growth).ceil().max(1.0) as usize;
    PiecewiseBasis::new(degree, cells, radius)
}

/// Fitted coefficients for every `(k, j)` on one basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedFamily {
    basis: PiecewiseBasis,
    order: usize,
    steps: usize,
    delta: f64,
    /// Indexed by `(j - 1) * order + (k - 1)`.
    coeffs: Vec<FittedCoefficient>,
}

impl FittedFamily {
    pub fn new(
        basis: PiecewiseBasis,
        order: usize,
        steps: usize,
        delta: f64,
        coeffs: Vec<FittedCoefficient>,
    ) -> Result<Self> {
        if coeffs.len() != order * steps {
            return Err(Error::ShapeMismatch(format!(
                "{} fitted coefficients for K={order}, J={steps}",
                coeffs.len()
            )));
        }
        if let Some(c) = coeffs.iter().find(|c| c.alpha.len() != basis.size()) {
            return Err(Error::ShapeMismatch(format!(
                "weight vector of length {} for a basis of size {}",
                c.alpha.len(),
                basis.size()
            )));
        }
        if let Some(c) = coeffs.iter().find(|c| !(c.truncation_bound >= 0.0)) {
            return Err(Error::NegativeBound(c.truncation_bound));
        }
        Ok(Self {
            basis,
            order,
            steps,
            delta,
            coeffs,
        })
    }

    pub fn basis(&self) -> &PiecewiseBasis {
        &self.basis
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn get(&self, k: usize, j: usize) -> &FittedCoefficient {
        &self.coeffs[(j - 1) * self.order + (k - 1)]
    }

    pub fn value(&self, k: usize, j: usize, x: f64) -> f64 {
        self.get(k, j).value(&self.basis, x)
    }

    /// `Σ_k a_{k,j}(x) h[k-1]` with one basis evaluation.
    #[inline]
    pub fn step_term(&self, j: usize, x: f64, h: &[f64]) -> f64 {
        let mut mono = [0.0; MAX_HERMITE_ORDER + 1];
        let Some(cell) = self.basis.eval_into(x, &mut mono) else {
            return 0.0;
        };
        let row = &self.coeffs[(j - 1) * self.order..j * self.order];
        row.iter()
            .zip(h)
            .map(|(c, hk)| {
                let b = c.truncation_bound;
                dot_cell(&c.alpha, &self.basis, cell, &mono).clamp(-b, b) * hk
            })
            .sum()
    }

    pub fn truncated(&self, order: usize) -> Self {
        let coeffs = (1..=self.steps)
            .flat_map(|j| (1..=order).map(move |k| (k, j)))
            .map(|(k, j)| self.get(k, j).clone())
            .collect();
        Self {
            order,
            coeffs,
            ..self.clone()
        }
    }

    const MAGIC: &'static str = "mlmc-chaos-cv";
    const VERSION: u32 = 1;

    /// Line-oriented text form; floats use the shortest round-trip
    /// representation so parsing restores every bit.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", Self::MAGIC, Self::VERSION);
        let _ = writeln!(s, "order {}", self.order);
        let _ = writeln!(s, "steps {}", self.steps);
        let _ = writeln!(s, "delta {:?}", self.delta);
        let _ = writeln!(s, "degree {}", self.basis.degree);
        let _ = writeln!(s, "cells {}", self.basis.cells);
        let _ = writeln!(s, "radius {:?}", self.basis.radius);
        for j in 1..=self.steps {
            for k in 1..=self.order {
                let c = self.get(k, j);
                let _ = write!(s, "coef {k} {j} {:?}", c.truncation_bound);
                for a in &c.alpha {
                    let _ = write!(s, " {a:?}");
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Artifact(m.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty artifact"))?;
        let mut h = header.split_whitespace();
        if h.next() != Some(Self::MAGIC) {
            return Err(bad("missing header"));
        }
        let version: u32 = h.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("missing version"))?;
        if version != Self::VERSION {
            return Err(Error::Artifact(format!("unsupported version {version}")));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| Error::Artifact(format!("missing `{name}`")))?;
            let (key, value) = line
                .split_once(' ')
                .ok_or_else(|| Error::Artifact(format!("malformed line `{line}`")))?;
            if key != name {
                return Err(Error::Artifact(format!("expected `{name}`, found `{key}`")));
            }
            Ok(value.trim().to_string())
        };
        let parse_usize = |s: String| s.parse::<usize>().map_err(|e| Error::Artifact(e.to_string()));
        let parse_f64 = |s: String| s.parse::<f64>().map_err(|e| Error::Artifact(e.to_string()));
        let order = parse_usize(field("order")?)?;
        let steps = parse_usize(field("steps")?)?;
        let delta = parse_f64(field("delta")?)?;
        let degree = parse_usize(field("degree")?)?;
        let cells = parse_usize(field("cells")?)?;
        let radius = parse_f64(field("radius")?)?;
        let basis = PiecewiseBasis::new(degree, cells, radius)?;
        let mut coeffs = Vec::with_capacity(order * steps);
        for j in 1..=steps {
            for k in 1..=order {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Artifact(format!("missing coefficient ({k}, {j})")))?;
                let mut it = line.split_whitespace();
                let tag = it.next();
                let kk = it.next().and_then(|v| v.parse::<usize>().ok());
                let jj = it.next().and_then(|v| v.parse::<usize>().ok());
                if tag != Some("coef") || kk != Some(k) || jj != Some(j) {
                    return Err(Error::Artifact(format!("expected coefficient ({k}, {j}), found `{line}`")));
                }
                let nums = it
                    .map(|v| v.parse::<f64>().map_err(|e| Error::Artifact(e.to_string())))
                    .collect::<Result<Vec<f64>>>()?;
                let (&bound, alpha) = nums
                    .split_first()
                    .ok_or_else(|| Error::Artifact(format!("coefficient ({k}, {j}) has no values")))?;
                coeffs.push(FittedCoefficient {
                    alpha: alpha.to_vec(),
                    truncation_bound: bound,
                });
            }
        }
        if lines.next().is_some() {
            return Err(bad("trailing data"));
        }
        Self::new(basis, order, steps, delta, coeffs)
    }
}

/// Work spent building a regression control variate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainingCost {
    /// Scheme steps on the training paths.
    pub steps: u64,
    /// One unit per training row accumulated into a normal-equation system.
    pub basis_ops: u64,
}

impl TrainingCost {
    pub fn total(&self) -> u64 {
        self.steps + self.basis_ops
    }
}

const TRAINING_CHUNK: u64 = 1024;

/// Simulates `n` training paths and fits `a_{k,j}` for `1 ≤ k ≤ order`,
/// `1 ≤ j ≤ steps`. The stream must carry the training batch tag so the
/// training paths never coincide with evaluation paths.
#[allow(clippy::too_many_arguments)]
pub fn build_regression_cv(
    model: &SdeModel,
    scheme: Scheme,
    order: usize,
    delta: f64,
    steps: usize,
    n: usize,
    basis: &PiecewiseBasis,
    seed: SeedStream,
) -> Result<(ChaosControlVariate, TrainingCost)> {
    if seed.id.batch != BATCH_TRAINING {
        return Err(Error::InvalidArgument(
            "regression training requires a stream in the training batch".into(),
        ));
    }
    if n == 0 {
        return Err(Error::EmptyTarget);
    }
    if order == 0 || order > MAX_HERMITE_ORDER {
        return Err(Error::HermiteOrderTooLarge(order));
    }
    if steps == 0 {
        return Err(Error::ZeroSteps);
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidStepSize(delta));
    }
    let stepper = scheme.bind(model)?;
    let sd = delta.sqrt();

    // Row-major by step: states[j * n + i] is X_j of path i.
    let chunks = map_chunks(n as u64, TRAINING_CHUNK, |range| {
        let len = (range.end - range.start) as usize;
        let mut states = vec![0.0; steps * len];
        let mut z = vec![0.0; steps * len];
        let mut payoff = vec![0.0; len];
        let mut incs = vec![0.0; steps];
        for (r, path) in range.enumerate() {
            crate::brownian::fill_increments(&seed.with_path(path), delta, &mut incs);
            let mut x = model.x0();
            for (j, &dw) in incs.iter().enumerate() {
                states[j * len + r] = x;
                z[j * len + r] = dw / sd;
                x = stepper.step(x, dw, delta);
            }
            payoff[r] = model.payoff(x);
        }
        (len, states, z, payoff)
    });
    let mut states = vec![0.0; steps * n];
    let mut z = vec![0.0; steps * n];
    let mut payoff = Vec::with_capacity(n);
    let mut offset = 0;
    for (len, s, zz, p) in chunks {
        for j in 0..steps {
            states[j * n + offset..j * n + offset + len].copy_from_slice(&s[j * len..(j + 1) * len]);
            z[j * n + offset..j * n + offset + len].copy_from_slice(&zz[j * len..(j + 1) * len]);
        }
        payoff.extend_from_slice(&p);
        offset += len;
    }

    let floor = |k: usize| delta.powf(k as f64 / 2.0);
    let per_step = map_chunks(steps as u64, 1, |range| {
        let j = range.start as usize;
        let preds = &states[j * n..(j + 1) * n];
        let zs = &z[j * n..(j + 1) * n];
        let sys = CellSystems::new(*basis, preds);
        let mut h = [0.0; MAX_HERMITE_ORDER + 1];
        let mut responses = vec![vec![0.0; n]; order];
        for i in 0..n {
            hermite_all(zs[i], &mut h[..=order]);
            for k in 1..=order {
                responses[k - 1][i] = payoff[i] * h[k];
            }
        }
        responses
            .iter()
            .enumerate()
            .map(|(km1, resp)| FittedCoefficient {
                alpha: sys.solve(resp),
                truncation_bound: empirical_bound(resp).max(floor(km1 + 1)),
            })
            .collect::<Vec<_>>()
    });
    let coeffs: Vec<FittedCoefficient> = per_step.into_iter().flatten().collect();
    let family = FittedFamily::new(*basis, order, steps, delta, coeffs)?;
    let cost = TrainingCost {
        steps: (n * steps) as u64,
        basis_ops: (n * steps * (order + 1)) as u64,
    };
    Ok((
        ChaosControlVariate::new(order, delta, steps, Coefficients::Fitted(family))?,
        cost,
    ))
}
