//! Domain types, the two training objectives, their smooth-part gradients and
//! the per-block Lipschitz constants.
//!
//! All matrices are column-major in meaning: one sample (or one atom) per column.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, shape_str, Error, Result};
use crate::linalg::{all_finite, frob_sq, l1, spectral_norm_sq};

/// Tolerance on `‖d_j‖₂ = 1` for a matrix to count as a valid dictionary.
pub const UNIT_NORM_TOL: f64 = 1e-8;
/// Columns whose norm falls below this are treated as dead atoms and reseeded.
pub const DEAD_ATOM_NORM: f64 = 1e-12;

/// Sparse codes, `K × N`.
pub type CodeMatrix = Array2<f64>;

/// Sample features `Y`, `d × N`, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Data(format!(
                "feature matrix must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if !all_finite(&data.view()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(Self(data))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Columns `range` as a new feature matrix.
    pub fn select_columns(&self, cols: std::ops::Range<usize>) -> Result<Self> {
        Self::new(self.0.slice(ndarray::s![.., cols]).to_owned())
    }
}

/// Dictionary `D`, `d × K`, with unit-norm atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Array2<f64>,
}

impl Dictionary {
    /// Wraps `atoms` after checking every column is unit norm within [`UNIT_NORM_TOL`].
    pub fn new(atoms: Array2<f64>) -> Result<Self> {
        if atoms.ncols() == 0 || atoms.nrows() == 0 {
            return Err(Error::Data("dictionary must have at least one atom".into()));
        }
        if !all_finite(&atoms.view()) {
            return Err(Error::NonFinite("dictionary"));
        }
        if let Some(j) = first_non_unit_column(&atoms.view()) {
            let n = atoms.column(j).dot(&atoms.column(j)).sqrt();
            return Err(Error::Data(format!("dictionary atom {j} has norm {n}, expected 1")));
        }
        Ok(Self { atoms })
    }

    /// Projects an arbitrary matrix onto the unit-column set. Dead columns are
    /// replaced by seeded random unit vectors.
    pub fn from_unnormalized(mut atoms: Array2<f64>, seed: u64) -> Result<Self> {
        if !all_finite(&atoms.view()) {
            return Err(Error::NonFinite("dictionary update"));
        }
        project_unit_columns(&mut atoms, seed);
        Ok(Self { atoms })
    }

    /// Classical initialization: `K` distinct data columns chosen by a seeded shuffle
    /// (cycling when `K > N`), normalized.
    pub fn init_from_data(y: &FeatureMatrix, n_atoms: usize, seed: u64) -> Result<Self> {
        use rand::seq::SliceRandom;
        if n_atoms == 0 {
            return Err(Error::Config("dictionary needs at least one atom".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..y.n_samples()).collect();
        order.shuffle(&mut rng);
        let mut atoms = Array2::<f64>::zeros((y.dim(), n_atoms));
        for j in 0..n_atoms {
            let src = order[j % order.len()];
            atoms.column_mut(j).assign(&y.view().column(src));
            if j >= order.len() {
                // repeated column: perturb so atoms stay distinct
                for v in atoms.column_mut(j).iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *v += 0.1 * e;
                }
            }
        }
        Self::from_unnormalized(atoms, seed ^ 0xd1c7)
    }

    /// Label-aware initialization: the atom block of class `c` is filled with
    /// shuffled samples of class `c` (perturbed when the class has fewer samples
    /// than atoms; Gaussian when it has none).
    pub fn init_class_blocks(y: &FeatureMatrix, targets: &SupervisionTargets, seed: u64) -> Result<Self> {
        use rand::seq::SliceRandom;
        if targets.n_samples() != y.n_samples() {
            return Err(dim_err(
                "class-block init",
                format!("{} labels", y.n_samples()),
                format!("{}", targets.n_samples()),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut atoms = Array2::<f64>::zeros((y.dim(), targets.n_atoms()));
        for c in 0..targets.n_classes {
            let mut members: Vec<usize> = (0..targets.n_samples()).filter(|&i| targets.labels[i] == c).collect();
            members.shuffle(&mut rng);
            for (slot, j) in targets.atom_block(c).enumerate() {
                let mut col = atoms.column_mut(j);
                if members.is_empty() {
                    col.mapv_inplace(|_| StandardNormal.sample(&mut rng));
                    continue;
                }
                col.assign(&y.view().column(members[slot % members.len()]));
                if slot >= members.len() {
                    for v in col.iter_mut() {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        *v += 0.1 * e;
                    }
                }
            }
        }
        Self::from_unnormalized(atoms, seed ^ 0xd1c7)
    }

    pub fn atoms(&self) -> &Array2<f64> {
        &self.atoms
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }

    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.atoms
    }
}

fn first_non_unit_column(m: &ArrayView2<'_, f64>) -> Option<usize> {
    m.axis_iter(Axis(1))
        .position(|c| (c.dot(&c).sqrt() - 1.0).abs() > UNIT_NORM_TOL)
}

/// Whether every column of `m` has unit norm within [`UNIT_NORM_TOL`].
pub fn is_feasible_dictionary(m: &ArrayView2<'_, f64>) -> bool {
    first_non_unit_column(m).is_none()
}

/// Deterministic replacement atom for column `j`.
pub fn reseed_atom(dim: usize, seed: u64, j: usize) -> ndarray::Array1<f64> {
    let mixed = seed ^ (j as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    loop {
        let v: ndarray::Array1<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.dot(&v).sqrt();
        if n > DEAD_ATOM_NORM {
            return v / n;
        }
    }
}

/// In-place projection onto `{D : ‖d_j‖₂ = 1}`. Returns how many columns were reseeded.
pub fn project_unit_columns(m: &mut Array2<f64>, seed: u64) -> usize {
    let dim = m.nrows();
    let mut reseeded = 0;
    for (j, mut col) in m.axis_iter_mut(Axis(1)).enumerate() {
        let n = col.dot(&col).sqrt();
        if n < DEAD_ATOM_NORM {
            col.assign(&reseed_atom(dim, seed, j));
            reseeded += 1;
        } else {
            col.mapv_inplace(|v| v / n);
        }
    }
    reseeded
}

/// Label-consistency targets `Q` (`K × N`) and one-hot labels `H` (`C × N`).
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionTargets {
    pub q: Array2<f64>,
    pub h: Array2<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl SupervisionTargets {
    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.q.nrows()
    }

    /// Atoms owned by class `c`: a contiguous row block of `Q`.
    pub fn atom_block(&self, c: usize) -> std::ops::Range<usize> {
        let per = self.n_atoms() / self.n_classes;
        c * per..(c + 1) * per
    }
}

/// Builds `Q` and `H` from integer labels. Class `c` owns atoms
/// `[c·K/C, (c+1)·K/C)`.
pub fn build_targets(labels: &[usize], n_atoms: usize, n_classes: usize) -> Result<SupervisionTargets> {
    if n_classes == 0 || n_atoms == 0 || n_atoms % n_classes != 0 {
        return Err(Error::Config(format!(
            "number of atoms ({n_atoms}) must be a positive multiple of the number of classes ({n_classes})"
        )));
    }
    if labels.is_empty() {
        return Err(Error::Data("no labels".into()));
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
        return Err(Error::Data(format!(
            "label {l} of sample {i} is outside [0, {n_classes})"
        )));
    }
    let n = labels.len();
    let per = n_atoms / n_classes;
    let mut q = Array2::<f64>::zeros((n_atoms, n));
    let mut h = Array2::<f64>::zeros((n_classes, n));
    for (i, &c) in labels.iter().enumerate() {
        h[[c, i]] = 1.0;
        for r in c * per..(c + 1) * per {
            q[[r, i]] = 1.0;
        }
    }
    Ok(SupervisionTargets {
        q,
        h,
        labels: labels.to_vec(),
        n_classes,
    })
}

/// Which sparse encoder produces the codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[serde(rename = "topk")]
    TopKLista,
    #[serde(rename = "fista")]
    FistaLasso,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::TopKLista => "topk",
            EncoderKind::FistaLasso => "fista",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk" => Ok(EncoderKind::TopKLista),
            "fista" => Ok(EncoderKind::FistaLasso),
            other => Err(Error::Config(format!(
                "unknown encoder {other:?} (expected \"topk\" or \"fista\")"
            ))),
        }
    }
}

/// Objective weights plus the schedule and encoder sizes of a run.
///
/// `alpha` and `beta` are the fully ramped supervision weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub mu_a: f64,
    pub rho_w: f64,
    pub eps_d: f64,
    pub mu_g: f64,
    pub lambda: f64,
    /// Top-K budget: nonzeros kept per code column.
    pub sparsity: usize,
    pub n_layers: usize,
    pub warmup_iters: usize,
    pub ramp_iters: usize,
    pub max_outer: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            mu_a: 1e-2,
            rho_w: 1e-2,
            eps_d: 1e-3,
            mu_g: 1e-2,
            lambda: 1e-2,
            sparsity: 50,
            n_layers: 16,
            warmup_iters: 2,
            ramp_iters: 3,
            max_outer: 30,
            seed: 0,
        }
    }
}

impl HyperParams {
    /// Checks every field against a dictionary of `n_atoms` atoms.
    pub fn validate(&self, n_atoms: usize) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} = {v}: supervision weights must be finite and non-negative"
                )));
            }
        }
        for (name, v) in [
            ("mu_a", self.mu_a),
            ("rho_w", self.rho_w),
            ("eps_d", self.eps_d),
            ("mu_g", self.mu_g),
            ("lambda", self.lambda),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "{name} = {v}: regularization weights must be strictly positive"
                )));
            }
        }
        if self.sparsity == 0 || self.sparsity > n_atoms {
            return Err(Error::Config(format!(
                "sparsity T = {} must lie in [1, K = {n_atoms}]",
                self.sparsity
            )));
        }
        if self.n_layers == 0 {
            return Err(Error::Config("n_layers must be positive".into()));
        }
        if self.warmup_iters == 0 || self.ramp_iters == 0 || self.max_outer == 0 {
            return Err(Error::Config(
                "warmup_iters, ramp_iters and max_outer must be positive".into(),
            ));
        }
        if self.warmup_iters + self.ramp_iters > self.max_outer {
            return Err(Error::Config(format!(
                "warmup_iters + ramp_iters = {} exceeds max_outer = {}",
                self.warmup_iters + self.ramp_iters,
                self.max_outer
            )));
        }
        Ok(())
    }

    pub fn weights(&self) -> Weights {
        Weights {
            alpha: self.alpha,
            beta: self.beta,
            mu_a: self.mu_a,
            rho_w: self.rho_w,
            eps_d: self.eps_d,
            mu_g: self.mu_g,
            lambda: self.lambda,
        }
    }
}

/// The weights entering the objectives for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
    pub mu_a: f64,
    pub rho_w: f64,
    pub eps_d: f64,
    pub mu_g: f64,
    pub lambda: f64,
}

impl Weights {
    /// Same weights with the supervision terms replaced.
    pub fn with_supervision(self, alpha: f64, beta: f64) -> Self {
        Self { alpha, beta, ..self }
    }
}

/// Trained model: dictionary, label-consistency transform `A` (`K × K`),
/// classifier `W` (`C × K`) and, for the Top-K encoder, the LISTA feedback
/// matrices (`n_layers` of them, each `K × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub dictionary: Dictionary,
    pub lc: Array2<f64>,
    pub classifier: Array2<f64>,
    pub b_stack: Option<Vec<Array2<f64>>>,
    pub hp: HyperParams,
    pub encoder: EncoderKind,
}

impl ModelState {
    pub fn new(
        dictionary: Dictionary,
        lc: Array2<f64>,
        classifier: Array2<f64>,
        b_stack: Option<Vec<Array2<f64>>>,
        hp: HyperParams,
        encoder: EncoderKind,
    ) -> Result<Self> {
        let state = Self {
            dictionary,
            lc,
            classifier,
            b_stack,
            hp,
            encoder,
        };
        state.check_consistency()?;
        Ok(state)
    }

    pub fn check_consistency(&self) -> Result<()> {
        let (d, k) = (self.dim(), self.n_atoms());
        if self.lc.dim() != (k, k) {
            return Err(dim_err("model LC matrix", format!("{k}x{k}"), shape_str(&self.lc.view())));
        }
        if self.classifier.ncols() != k || self.classifier.nrows() == 0 {
            return Err(dim_err(
                "model classifier",
                format!("Cx{k}"),
                shape_str(&self.classifier.view()),
            ));
        }
        if !all_finite(&self.lc.view()) || !all_finite(&self.classifier.view()) {
            return Err(Error::NonFinite("model state"));
        }
        match (&self.b_stack, self.encoder) {
            (Some(stack), EncoderKind::TopKLista) => {
                if stack.len() != self.hp.n_layers {
                    return Err(dim_err(
                        "LISTA feedback stack",
                        format!("{} layers", self.hp.n_layers),
                        format!("{} layers", stack.len()),
                    ));
                }
                for b in stack {
                    if b.dim() != (k, d) {
                        return Err(dim_err("LISTA feedback matrix", format!("{k}x{d}"), shape_str(&b.view())));
                    }
                    if !all_finite(&b.view()) {
                        return Err(Error::NonFinite("LISTA feedback matrix"));
                    }
                }
            }
            (None, EncoderKind::FistaLasso) => {}
            (Some(_), EncoderKind::FistaLasso) => {
                return Err(Error::Data("FISTA model must not carry LISTA feedback matrices".into()))
            }
            (None, EncoderKind::TopKLista) => {
                return Err(Error::Data("Top-K LISTA model is missing its feedback matrices".into()))
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dictionary.dim()
    }

    pub fn n_atoms(&self) -> usize {
        self.dictionary.n_atoms()
    }

    pub fn n_classes(&self) -> usize {
        self.classifier.nrows()
    }

    pub fn point<'a>(&'a self, g: &'a Array2<f64>) -> Point<'a> {
        Point {
            d: self.dictionary.view(),
            g: g.view(),
            a: self.lc.view(),
            w: self.classifier.view(),
        }
    }

    /// Top-K objective at this state's hyperparameters.
    pub fn objective_topk(&self, y: &FeatureMatrix, g: &Array2<f64>, targets: &SupervisionTargets) -> Result<f64> {
        objective_topk(&self.point(g), &y.view(), targets, &self.hp.weights())
    }

    /// Convex objective at this state's hyperparameters.
    pub fn objective_convex(&self, y: &FeatureMatrix, g: &Array2<f64>, targets: &SupervisionTargets) -> Result<f64> {
        objective_convex(&self.point(g), &y.view(), targets, &self.hp.weights())
    }
}

/// A point `(D, G, A, W)` of the block problem, borrowed.
#[derive(Debug, Clone, Copy)]
pub struct Point<'a> {
    pub d: ArrayView2<'a, f64>,
    pub g: ArrayView2<'a, f64>,
    pub a: ArrayView2<'a, f64>,
    pub w: ArrayView2<'a, f64>,
}

impl Point<'_> {
    fn check(&self, y: &ArrayView2<'_, f64>, t: &SupervisionTargets) -> Result<()> {
        let (dd, k) = self.d.dim();
        let n = y.ncols();
        if y.nrows() != dd {
            return Err(dim_err("features vs dictionary", format!("{dd} rows"), shape_str(y)));
        }
        if self.g.dim() != (k, n) {
            return Err(dim_err("codes", format!("{k}x{n}"), shape_str(&self.g)));
        }
        if self.a.dim() != (k, k) {
            return Err(dim_err("LC matrix", format!("{k}x{k}"), shape_str(&self.a)));
        }
        if self.w.ncols() != k || self.w.nrows() != t.h.nrows() {
            return Err(dim_err("classifier", format!("{}x{k}", t.h.nrows()), shape_str(&self.w)));
        }
        if t.q.dim() != (k, n) || t.h.ncols() != n {
            return Err(dim_err(
                "targets",
                format!("Q {k}x{n}, H Cx{n}"),
                format!("Q {}, H {}", shape_str(&t.q.view()), shape_str(&t.h.view())),
            ));
        }
        Ok(())
    }

    fn check_finite(&self, y: &ArrayView2<'_, f64>) -> Result<()> {
        if !(all_finite(&self.d) && all_finite(&self.g) && all_finite(&self.a) && all_finite(&self.w)) {
            return Err(Error::NonFinite("objective arguments"));
        }
        if !all_finite(y) {
            return Err(Error::NonFinite("features"));
        }
        Ok(())
    }
}

fn residual_sq(m: &ArrayView2<'_, f64>, g: &ArrayView2<'_, f64>, target: &ArrayView2<'_, f64>) -> f64 {
    let mut r = m.dot(g);
    r -= target;
    frob_sq(&r.view())
}

/// `½‖Y−DG‖² + α/2‖AG−Q‖² + β/2‖WG−H‖² + ε_D/2‖D‖² + μ_A/2‖A‖² + ρ_W/2‖W‖²`.
pub fn objective_topk(
    p: &Point<'_>,
    y: &ArrayView2<'_, f64>,
    targets: &SupervisionTargets,
    wts: &Weights,
) -> Result<f64> {
    p.check(y, targets)?;
    Ok(0.5 * residual_sq(&p.d, &p.g, y)
        + 0.5 * wts.alpha * residual_sq(&p.a, &p.g, &targets.q.view())
        + 0.5 * wts.beta * residual_sq(&p.w, &p.g, &targets.h.view())
        + 0.5 * wts.eps_d * frob_sq(&p.d)
        + 0.5 * wts.mu_a * frob_sq(&p.a)
        + 0.5 * wts.rho_w * frob_sq(&p.w))
}

/// Top-K objective plus `μ_G/2‖G‖² + λ‖G‖₁ + ι_C(D)`; the indicator evaluates to
/// `+∞` when an atom is off the unit sphere by more than [`UNIT_NORM_TOL`].
pub fn objective_convex(
    p: &Point<'_>,
    y: &ArrayView2<'_, f64>,
    targets: &SupervisionTargets,
    wts: &Weights,
) -> Result<f64> {
    p.check(y, targets)?;
    p.check_finite(y)?;
    if !is_feasible_dictionary(&p.d) {
        return Ok(f64::INFINITY);
    }
    Ok(objective_topk(p, y, targets, wts)? + 0.5 * wts.mu_g * frob_sq(&p.g) + wts.lambda * l1(&p.g))
}

/// Objective of the unsupervised convex variant: reconstruction, dictionary
/// ridge and the elastic-net penalty on the codes (`A`/`W` play no part).
pub fn objective_reconstruction(
    d: &ArrayView2<'_, f64>,
    g: &ArrayView2<'_, f64>,
    y: &ArrayView2<'_, f64>,
    wts: &Weights,
) -> f64 {
    0.5 * residual_sq(d, g, y) + 0.5 * wts.eps_d * frob_sq(d) + 0.5 * wts.mu_g * frob_sq(g) + wts.lambda * l1(g)
}

/// Smooth part `H_G` of the code subproblem.
pub fn smooth_g_value(p: &Point<'_>, y: &ArrayView2<'_, f64>, targets: &SupervisionTargets, wts: &Weights) -> f64 {
    0.5 * residual_sq(&p.d, &p.g, y)
        + 0.5 * wts.alpha * residual_sq(&p.a, &p.g, &targets.q.view())
        + 0.5 * wts.beta * residual_sq(&p.w, &p.g, &targets.h.view())
        + 0.5 * wts.mu_g * frob_sq(&p.g)
}

/// `∇H_G = −Dᵀ(Y−DG) + αAᵀ(AG−Q) + βWᵀ(WG−H) + μ_G G`.
pub fn smooth_g_gradient(
    p: &Point<'_>,
    y: &ArrayView2<'_, f64>,
    targets: &SupervisionTargets,
    wts: &Weights,
) -> Array2<f64> {
    let mut grad = supervised_code_gradient(p, y, targets, wts.alpha, wts.beta);
    grad.scaled_add(wts.mu_g, &p.g);
    grad
}

/// Gradient w.r.t. `G` of `½‖Y−DG‖² + α/2‖AG−Q‖² + β/2‖WG−H‖²`.
pub(crate) fn supervised_code_gradient(
    p: &Point<'_>,
    y: &ArrayView2<'_, f64>,
    targets: &SupervisionTargets,
    alpha: f64,
    beta: f64,
) -> Array2<f64> {
    let mut r = p.d.dot(&p.g);
    r -= y;
    let mut grad = p.d.t().dot(&r);
    if alpha != 0.0 {
        let mut ra = p.a.dot(&p.g);
        ra -= &targets.q;
        grad.scaled_add(alpha, &p.a.t().dot(&ra));
    }
    if beta != 0.0 {
        let mut rw = p.w.dot(&p.g);
        rw -= &targets.h;
        grad.scaled_add(beta, &p.w.t().dot(&rw));
    }
    grad
}

/// Smooth part `H_D = ½‖Y−DG‖² + ε_D/2‖D‖²` of the dictionary subproblem.
pub fn smooth_d_value(d: &ArrayView2<'_, f64>, g: &ArrayView2<'_, f64>, y: &ArrayView2<'_, f64>, eps_d: f64) -> f64 {
    0.5 * residual_sq(d, g, y) + 0.5 * eps_d * frob_sq(d)
}

/// `∇H_D = (DG−Y)Gᵀ + ε_D D`.
pub fn smooth_d_gradient(d: &ArrayView2<'_, f64>, g: &ArrayView2<'_, f64>, y: &ArrayView2<'_, f64>, eps_d: f64) -> Array2<f64> {
    let mut r = d.dot(g);
    r -= y;
    let mut grad = r.dot(&g.t());
    grad.scaled_add(eps_d, d);
    grad
}

/// `L_G = ‖DᵀD‖₂ + α‖AᵀA‖₂ + β‖WᵀW‖₂ + μ_G`.
pub fn lipschitz_g(d: &ArrayView2<'_, f64>, a: &ArrayView2<'_, f64>, w: &ArrayView2<'_, f64>, wts: &Weights) -> Result<f64> {
    let k = d.ncols();
    if a.dim() != (k, k) || w.ncols() != k {
        return Err(dim_err(
            "lipschitz_g",
            format!("A {k}x{k}, W Cx{k}"),
            format!("A {}, W {}", shape_str(a), shape_str(w)),
        ));
    }
    let mut l = spectral_norm_sq(d) + wts.mu_g;
    if wts.alpha != 0.0 {
        l += wts.alpha * spectral_norm_sq(a);
    }
    if wts.beta != 0.0 {
        l += wts.beta * spectral_norm_sq(w);
    }
    Ok(l)
}

/// `L_D = ‖G‖₂² + ε_D`.
pub fn lipschitz_d(g: &ArrayView2<'_, f64>, eps_d: f64) -> f64 {
    spectral_norm_sq(g) + eps_d
}
