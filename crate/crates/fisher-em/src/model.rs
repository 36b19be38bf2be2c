//! The DLM model family: parameterizations, parameter containers, free-parameter
//! counts and reconstruction of observed-space covariances.
//!
//! A DLM mixture lives in an orthonormal latent subspace spanned by the columns
//! of `U` (p x d). Each component has a Gaussian latent covariance (full,
//! diagonal or isotropic; shared or per group) and an isotropic noise variance
//! outside the subspace (shared or per group). The 6 x 2 combinations give the
//! 12 members of the family.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smallest admissible variance. Estimates are clamped here on construction so
/// a subspace that captures all variance cannot produce a zero noise term.
pub const VARIANCE_FLOOR: f64 = 1e-10;

/// Structure of the latent covariance matrices `Sigma_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LatentVariance {
    /// Full d x d covariance per group (`Sigma_k`).
    FullPerGroup,
    /// One full d x d covariance shared by all groups (`Sigma`).
    FullShared,
    /// Diagonal covariance, one variance per group and axis (`alpha_kj`).
    DiagPerGroup,
    /// Isotropic covariance per group (`alpha_k`).
    IsoPerGroup,
    /// Diagonal covariance shared by all groups (`alpha_j`).
    DiagShared,
    /// One isotropic variance shared by all groups (`alpha`).
    IsoShared,
}

/// Structure of the noise variance outside the latent subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseVariance {
    /// One noise variance per group (`beta_k`).
    PerGroup,
    /// A single noise variance (`beta`).
    Shared,
}

/// One of the 12 DLM parameterizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    pub latent: LatentVariance,
    pub noise: NoiseVariance,
}

impl ModelSpec {
    pub const fn new(latent: LatentVariance, noise: NoiseVariance) -> Self {
        Self { latent, noise }
    }

    /// All 12 models, in the conventional order (most to least parameterized).
    pub const ALL: [ModelSpec; 12] = {
        use LatentVariance::*;
        use NoiseVariance::*;
        [
            ModelSpec::new(FullPerGroup, PerGroup),
            ModelSpec::new(FullPerGroup, Shared),
            ModelSpec::new(FullShared, PerGroup),
            ModelSpec::new(FullShared, Shared),
            ModelSpec::new(DiagPerGroup, PerGroup),
            ModelSpec::new(DiagPerGroup, Shared),
            ModelSpec::new(IsoPerGroup, PerGroup),
            ModelSpec::new(IsoPerGroup, Shared),
            ModelSpec::new(DiagShared, PerGroup),
            ModelSpec::new(DiagShared, Shared),
            ModelSpec::new(IsoShared, PerGroup),
            ModelSpec::new(IsoShared, Shared),
        ]
    };

    /// Short name used by the CLI and file formats (`sk_bk` .. `a_b`).
    pub fn name(&self) -> &'static str {
        use LatentVariance::*;
        match (self.latent, self.noise) {
            (FullPerGroup, NoiseVariance::PerGroup) => "sk_bk",
            (FullPerGroup, NoiseVariance::Shared) => "sk_b",
            (FullShared, NoiseVariance::PerGroup) => "s_bk",
            (FullShared, NoiseVariance::Shared) => "s_b",
            (DiagPerGroup, NoiseVariance::PerGroup) => "akj_bk",
            (DiagPerGroup, NoiseVariance::Shared) => "akj_b",
            (IsoPerGroup, NoiseVariance::PerGroup) => "ak_bk",
            (IsoPerGroup, NoiseVariance::Shared) => "ak_b",
            (DiagShared, NoiseVariance::PerGroup) => "aj_bk",
            (DiagShared, NoiseVariance::Shared) => "aj_b",
            (IsoShared, NoiseVariance::PerGroup) => "a_bk",
            (IsoShared, NoiseVariance::Shared) => "a_b",
        }
    }

    /// Look a model up by its short name.
    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    fn latent_param_count(&self, k: usize, d: usize) -> usize {
        use LatentVariance::*;
        match self.latent {
            FullPerGroup => k * d * (d + 1) / 2,
            FullShared => d * (d + 1) / 2,
            DiagPerGroup => k * d,
            IsoPerGroup => k,
            DiagShared => d,
            IsoShared => 1,
        }
    }

    fn noise_param_count(&self, k: usize) -> usize {
        match self.noise {
            NoiseVariance::PerGroup => k,
            NoiseVariance::Shared => 1,
        }
    }
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Number of free parameters of a DLM model.
///
/// Proportions contribute K-1, latent means K*d, the orthonormal orientation
/// d*p - d(d+1)/2, plus the variance terms of the chosen parameterization.
pub fn param_count(model: ModelSpec, k: usize, p: usize, d: usize) -> Result<usize> {
    if !(1 <= d && d <= k.saturating_sub(1) && k.saturating_sub(1) <= p.saturating_sub(1)) {
        return Err(Error::InvalidDimensions(format!(
            "param_count requires 1 <= d <= K-1 <= p-1, got K={k}, p={p}, d={d}"
        )));
    }
    let orientation = d * p - d * (d + 1) / 2;
    Ok((k - 1) + k * d + orientation + model.latent_param_count(k, d) + model.noise_param_count(k))
}

/// Latent covariance store; the variant must agree with the `ModelSpec`.
#[derive(Debug, Clone)]
pub enum LatentCovariances {
    /// K full d x d matrices (lower triangle authoritative).
    FullPerGroup(Vec<DMatrix<f64>>),
    /// One full d x d matrix.
    FullShared(DMatrix<f64>),
    /// K rows of d per-axis variances.
    DiagPerGroup(DMatrix<f64>),
    /// K isotropic variances.
    IsoPerGroup(DVector<f64>),
    /// d shared per-axis variances.
    DiagShared(DVector<f64>),
    /// One shared isotropic variance.
    IsoShared(f64),
}

impl LatentCovariances {
    pub fn matches(&self, latent: LatentVariance) -> bool {
        matches!(
            (self, latent),
            (LatentCovariances::FullPerGroup(_), LatentVariance::FullPerGroup)
                | (LatentCovariances::FullShared(_), LatentVariance::FullShared)
                | (LatentCovariances::DiagPerGroup(_), LatentVariance::DiagPerGroup)
                | (LatentCovariances::IsoPerGroup(_), LatentVariance::IsoPerGroup)
                | (LatentCovariances::DiagShared(_), LatentVariance::DiagShared)
                | (LatentCovariances::IsoShared(_), LatentVariance::IsoShared)
        )
    }

    /// Dense d x d covariance of group `k`.
    pub fn full_matrix(&self, k: usize, d: usize) -> DMatrix<f64> {
        match self {
            LatentCovariances::FullPerGroup(ms) => ms[k].clone(),
            LatentCovariances::FullShared(m) => m.clone(),
            LatentCovariances::DiagPerGroup(a) => {
                DMatrix::from_diagonal(&a.row(k).transpose())
            }
            LatentCovariances::IsoPerGroup(a) => DMatrix::identity(d, d) * a[k],
            LatentCovariances::DiagShared(a) => DMatrix::from_diagonal(a),
            LatentCovariances::IsoShared(a) => DMatrix::identity(d, d) * *a,
        }
    }

    fn clamp_floor(&mut self) -> bool {
        let mut clamped = false;
        let mut clamp = |v: &mut f64| {
            if *v < VARIANCE_FLOOR {
                *v = VARIANCE_FLOOR;
                clamped = true;
            }
        };
        match self {
            // full matrices are left as provided; positive-definiteness is
            // checked by `validate` and enforced where they are estimated
            LatentCovariances::FullPerGroup(_) | LatentCovariances::FullShared(_) => {}
            LatentCovariances::DiagPerGroup(a) => a.iter_mut().for_each(&mut clamp),
            LatentCovariances::IsoPerGroup(a) => a.iter_mut().for_each(&mut clamp),
            LatentCovariances::DiagShared(a) => a.iter_mut().for_each(&mut clamp),
            LatentCovariances::IsoShared(a) => clamp(a),
        }
        clamped
    }
}

/// Noise variance store.
#[derive(Debug, Clone)]
pub enum NoiseVariances {
    PerGroup(DVector<f64>),
    Shared(f64),
}

impl NoiseVariances {
    pub fn beta(&self, k: usize) -> f64 {
        match self {
            NoiseVariances::PerGroup(b) => b[k],
            NoiseVariances::Shared(b) => *b,
        }
    }

    pub fn matches(&self, noise: NoiseVariance) -> bool {
        matches!(
            (self, noise),
            (NoiseVariances::PerGroup(_), NoiseVariance::PerGroup)
                | (NoiseVariances::Shared(_), NoiseVariance::Shared)
        )
    }

    fn clamp_floor(&mut self) -> bool {
        let mut clamped = false;
        let mut clamp = |v: &mut f64| {
            if *v < VARIANCE_FLOOR {
                *v = VARIANCE_FLOOR;
                clamped = true;
            }
        };
        match self {
            NoiseVariances::PerGroup(b) => b.iter_mut().for_each(&mut clamp),
            NoiseVariances::Shared(b) => clamp(b),
        }
        clamped
    }
}

/// Fitted (or constructed) parameters of one DLM mixture.
///
/// Group means are stored in the observation space (`means`, K x p rows); the
/// latent means are their coordinates `U^t m_k`. Variances below
/// [`VARIANCE_FLOOR`] are clamped on construction and reported by
/// [`DlmParameters::validate`].
#[derive(Debug, Clone)]
pub struct DlmParameters {
    model: ModelSpec,
    pi: DVector<f64>,
    means: DMatrix<f64>,
    u: DMatrix<f64>,
    latent: LatentCovariances,
    noise: NoiseVariances,
    clamped: bool,
}

impl DlmParameters {
    /// Build parameters from latent means (K x d); observed means are `U mu_k`.
    pub fn from_latent_means(
        model: ModelSpec,
        pi: DVector<f64>,
        latent_means: &DMatrix<f64>,
        u: DMatrix<f64>,
        latent: LatentCovariances,
        noise: NoiseVariances,
    ) -> Result<Self> {
        if latent_means.nrows() != pi.len() || latent_means.ncols() != u.ncols() {
            return Err(Error::InvalidDimensions(format!(
                "latent means must be K x d = {} x {}, got {} x {}",
                pi.len(),
                u.ncols(),
                latent_means.nrows(),
                latent_means.ncols()
            )));
        }
        let means = latent_means * u.transpose();
        Self::from_observed_means(model, pi, means, u, latent, noise)
    }

    /// Build parameters from observation-space means (K x p rows).
    pub fn from_observed_means(
        model: ModelSpec,
        pi: DVector<f64>,
        means: DMatrix<f64>,
        u: DMatrix<f64>,
        latent: LatentCovariances,
        noise: NoiseVariances,
    ) -> Result<Self> {
        let k = pi.len();
        let (p, d) = (u.nrows(), u.ncols());
        if means.nrows() != k || means.ncols() != p {
            return Err(Error::InvalidDimensions(format!(
                "means must be K x p = {k} x {p}, got {} x {}",
                means.nrows(),
                means.ncols()
            )));
        }
        if d == 0 || d >= p {
            return Err(Error::InvalidDimensions(format!(
                "latent dimension must satisfy 1 <= d < p, got d={d}, p={p}"
            )));
        }
        if !latent.matches(model.latent) || !noise.matches(model.noise) {
            return Err(Error::InvalidDimensions(
                "variance stores do not match the model parameterization".into(),
            ));
        }
        let mut latent = latent;
        let mut noise = noise;
        let clamped_l = latent.clamp_floor();
        let clamped_n = noise.clamp_floor();
        Ok(Self {
            model,
            pi,
            means,
            u,
            latent,
            noise,
            clamped: clamped_l || clamped_n,
        })
    }

    pub fn model(&self) -> ModelSpec {
        self.model
    }
    pub fn n_groups(&self) -> usize {
        self.pi.len()
    }
    pub fn observed_dim(&self) -> usize {
        self.u.nrows()
    }
    pub fn latent_dim(&self) -> usize {
        self.u.ncols()
    }
    pub fn proportions(&self) -> &DVector<f64> {
        &self.pi
    }
    /// Observation-space group means, K x p (one row per group).
    pub fn means(&self) -> &DMatrix<f64> {
        &self.means
    }
    /// Latent group means `U^t m_k`, K x d.
    pub fn latent_means(&self) -> DMatrix<f64> {
        &self.means * &self.u
    }
    /// Orthonormal orientation, p x d.
    pub fn orientation(&self) -> &DMatrix<f64> {
        &self.u
    }
    pub fn latent_covariances(&self) -> &LatentCovariances {
        &self.latent
    }
    pub fn noise_variances(&self) -> &NoiseVariances {
        &self.noise
    }

    /// Observed-space covariance `S_k = U Sigma_k U^t + beta_k (I - U U^t)`.
    pub fn reconstruct_covariance(&self, k: usize) -> DMatrix<f64> {
        let p = self.observed_dim();
        let d = self.latent_dim();
        let sigma = self.latent.full_matrix(k, d);
        let beta = self.noise.beta(k);
        let uut = &self.u * self.u.transpose();
        let mut s = &self.u * sigma * self.u.transpose();
        s += (DMatrix::identity(p, p) - uut) * beta;
        // kill round-off asymmetry
        let st = s.transpose();
        (s + st) * 0.5
    }

    /// Check every container invariant; returns human-readable violations
    /// (empty when the parameters are valid).
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let k = self.n_groups();
        let d = self.latent_dim();
        let p = self.observed_dim();

        let pi_sum: f64 = self.pi.iter().sum();
        if (pi_sum - 1.0).abs() > 1e-8 {
            v.push(format!("proportions sum != 1 (sum = {pi_sum})"));
        }
        if self.pi.iter().any(|&x| x <= 0.0) {
            v.push("proportions must be strictly positive".into());
        }

        let gram = self.u.transpose() * &self.u;
        let orth_err = (&gram - DMatrix::identity(d, d)).abs().max();
        if orth_err > 1e-10 {
            v.push(format!(
                "orthonormality violated: max |U^t U - I| = {orth_err:.3e}"
            ));
        }

        if d > k.saturating_sub(1) && k >= 2 {
            v.push(format!("latent dimension d={d} exceeds K-1={}", k - 1));
        }
        if d > p.saturating_sub(1) {
            v.push(format!("latent dimension d={d} exceeds p-1={}", p - 1));
        }

        let mut check_pos = |name: &str, val: f64| {
            if !(val > 0.0) {
                v.push(format!("{name} must be strictly positive, got {val}"));
            } else if val <= VARIANCE_FLOOR {
                v.push(format!("{name} clamped at the variance floor"));
            }
        };
        match &self.latent {
            LatentCovariances::FullPerGroup(ms) => {
                for (i, m) in ms.iter().enumerate() {
                    if (m - m.transpose()).abs().max() > 1e-8 {
                        v.push(format!("Sigma_{i} is not symmetric"));
                    } else if m.clone().cholesky().is_none() {
                        v.push(format!("Sigma_{i} is not positive definite"));
                    }
                }
            }
            LatentCovariances::FullShared(m) => {
                if (m - m.transpose()).abs().max() > 1e-8 {
                    v.push("Sigma is not symmetric".into());
                } else if m.clone().cholesky().is_none() {
                    v.push("Sigma is not positive definite".into());
                }
            }
            LatentCovariances::DiagPerGroup(a) => {
                a.iter().for_each(|&x| check_pos("alpha_kj", x))
            }
            LatentCovariances::IsoPerGroup(a) => a.iter().for_each(|&x| check_pos("alpha_k", x)),
            LatentCovariances::DiagShared(a) => a.iter().for_each(|&x| check_pos("alpha_j", x)),
            LatentCovariances::IsoShared(a) => check_pos("alpha", *a),
        }
        match &self.noise {
            NoiseVariances::PerGroup(b) => b.iter().for_each(|&x| check_pos("beta_k", x)),
            NoiseVariances::Shared(b) => check_pos("beta", *b),
        }
        if self.clamped && !v.iter().any(|s| s.contains("floor")) {
            v.push("variances were clamped at the floor during construction".into());
        }
        v
    }
}

/// An n x p data matrix with optional column names.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: DMatrix<f64>,
    names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(y: DMatrix<f64>, names: Option<Vec<String>>) -> Result<Self> {
        if y.nrows() == 0 || y.ncols() == 0 {
            return Err(Error::InvalidData("dataset must be non-empty".into()));
        }
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidData("dataset contains non-finite entries".into()));
        }
        if let Some(names) = &names {
            if names.len() != y.ncols() {
                return Err(Error::InvalidData(format!(
                    "expected {} column names, got {}",
                    y.ncols(),
                    names.len()
                )));
            }
        }
        Ok(Self { y, names })
    }

    /// Build from row slices (each of length p).
    pub fn from_rows(rows: &[Vec<f64>], names: Option<Vec<String>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidData("dataset must be non-empty".into()));
        }
        let p = rows[0].len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidData("ragged rows in dataset".into()));
        }
        let y = DMatrix::from_row_iterator(rows.len(), p, rows.iter().flatten().copied());
        Self::new(y, names)
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }
    pub fn p(&self) -> usize {
        self.y.ncols()
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.y
    }
    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.y.row(i).transpose()
    }
}

/// An n x K matrix of posterior probabilities; rows sum to one.
#[derive(Debug, Clone)]
pub struct SoftPartition {
    t: DMatrix<f64>,
}

impl SoftPartition {
    pub fn new(t: DMatrix<f64>) -> Result<Self> {
        if t.nrows() == 0 || t.ncols() == 0 {
            return Err(Error::InvalidData("partition must be non-empty".into()));
        }
        if t.iter().any(|&x| !(0.0..=1.0 + 1e-12).contains(&x)) {
            return Err(Error::InvalidData(
                "partition entries must lie in [0, 1]".into(),
            ));
        }
        for i in 0..t.nrows() {
            let s: f64 = t.row(i).iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidData(format!(
                    "partition row {i} sums to {s}, expected 1"
                )));
            }
        }
        Ok(Self { t })
    }

    /// One-hot partition from hard labels in `0..k`.
    pub fn from_labels(labels: &[usize], k: usize) -> Result<Self> {
        if labels.iter().any(|&l| l >= k) {
            return Err(Error::InvalidData("label out of range".into()));
        }
        let mut t = DMatrix::zeros(labels.len(), k);
        for (i, &l) in labels.iter().enumerate() {
            t[(i, l)] = 1.0;
        }
        Self::new(t)
    }

    pub fn n(&self) -> usize {
        self.t.nrows()
    }
    pub fn k(&self) -> usize {
        self.t.ncols()
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t
    }

    /// Soft group sizes `n_k = sum_i t_ik`.
    pub fn counts(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.k());
        for i in 0..self.n() {
            for k in 0..self.k() {
                c[k] += self.t[(i, k)];
            }
        }
        c
    }

    /// Hard assignment by row-wise argmax (ties go to the lowest index).
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.n())
            .map(|i| {
                let row = self.t.row(i);
                let mut best = 0;
                for k in 1..self.k() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(name: &str) -> ModelSpec {
        ModelSpec::parse(name).unwrap()
    }

    #[test]
    fn twelve_models_with_distinct_names() {
        let names: std::collections::HashSet<_> =
            ModelSpec::ALL.iter().map(|m| m.name()).collect();
        assert_eq!(names.len(), 12);
        for m in ModelSpec::ALL {
            assert_eq!(ModelSpec::parse(m.name()).unwrap(), m);
        }
        assert!(ModelSpec::parse("bogus").is_err());
    }

    #[test]
    fn param_count_table_values() {
        assert_eq!(param_count(spec("sk_bk"), 4, 100, 3).unwrap(), 337);
        assert_eq!(param_count(spec("a_b"), 4, 100, 3).unwrap(), 311);
        // term-by-term: 1 + 2 + 1 + 1 + 1
        assert_eq!(param_count(spec("a_b"), 2, 2, 1).unwrap(), 6);
    }

    #[test]
    fn param_count_rejects_bad_ordering() {
        assert!(param_count(spec("a_b"), 2, 2, 2).is_err());
        assert!(param_count(spec("a_b"), 1, 5, 1).is_err());
        assert!(param_count(spec("a_b"), 4, 3, 3).is_err());
    }

    #[test]
    fn beta_k_costs_k_minus_1_more() {
        for latent in [
            LatentVariance::FullPerGroup,
            LatentVariance::FullShared,
            LatentVariance::DiagPerGroup,
            LatentVariance::IsoPerGroup,
            LatentVariance::DiagShared,
            LatentVariance::IsoShared,
        ] {
            for k in 2..6 {
                for p in [k, 10, 40] {
                    for d in 1..k {
                        let per = param_count(
                            ModelSpec::new(latent, NoiseVariance::PerGroup),
                            k,
                            p,
                            d,
                        )
                        .unwrap();
                        let shared =
                            param_count(ModelSpec::new(latent, NoiseVariance::Shared), k, p, d)
                                .unwrap();
                        assert_eq!(per - shared, k - 1);
                    }
                }
            }
        }
    }

    fn axis_params(sigma: f64, beta: f64) -> DlmParameters {
        // p=2, d=1, U = e1
        let u = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        DlmParameters::from_latent_means(
            spec("sk_bk"),
            DVector::from_element(1, 1.0),
            &DMatrix::zeros(1, 1),
            u,
            LatentCovariances::FullPerGroup(vec![DMatrix::from_element(1, 1, sigma)]),
            NoiseVariances::PerGroup(DVector::from_element(1, beta)),
        )
        .unwrap()
    }

    #[test]
    fn reconstruct_isotropic_is_identity() {
        let p = axis_params(1.0, 1.0);
        let s = p.reconstruct_covariance(0);
        assert_relative_eq!(s, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn reconstruct_axis_aligned() {
        let p = axis_params(4.0, 0.25);
        let s = p.reconstruct_covariance(0);
        let expected = DMatrix::from_diagonal(&DVector::from_column_slice(&[4.0, 0.25]));
        assert_relative_eq!(s, expected, epsilon = 1e-12);
    }

    #[test]
    fn validate_ok_and_violations() {
        let u = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let ok = DlmParameters::from_latent_means(
            spec("ak_b"),
            DVector::from_column_slice(&[0.5, 0.5]),
            &DMatrix::zeros(2, 2),
            u.clone(),
            LatentCovariances::IsoPerGroup(DVector::from_column_slice(&[1.0, 2.0])),
            NoiseVariances::Shared(0.5),
        )
        .unwrap();
        assert!(ok.validate().is_empty(), "{:?}", ok.validate());

        let bad_pi = DlmParameters::from_latent_means(
            spec("ak_b"),
            DVector::from_column_slice(&[0.5, 0.6]),
            &DMatrix::zeros(2, 2),
            u,
            LatentCovariances::IsoPerGroup(DVector::from_column_slice(&[1.0, 2.0])),
            NoiseVariances::Shared(0.5),
        )
        .unwrap();
        assert!(bad_pi.validate().iter().any(|v| v.contains("sum")));

        // two equal columns
        let u_eq = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let bad_u = DlmParameters::from_latent_means(
            spec("ak_b"),
            DVector::from_column_slice(&[0.5, 0.5]),
            &DMatrix::zeros(2, 2),
            u_eq,
            LatentCovariances::IsoPerGroup(DVector::from_column_slice(&[1.0, 2.0])),
            NoiseVariances::Shared(0.5),
        )
        .unwrap();
        assert!(bad_u
            .validate()
            .iter()
            .any(|v| v.contains("orthonormality")));
    }

    #[test]
    fn construction_clamps_at_floor() {
        let u = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let p = DlmParameters::from_latent_means(
            spec("a_b"),
            DVector::from_element(1, 1.0),
            &DMatrix::zeros(1, 1),
            u,
            LatentCovariances::IsoShared(0.0),
            NoiseVariances::Shared(1.0),
        )
        .unwrap();
        match p.latent_covariances() {
            LatentCovariances::IsoShared(a) => assert_eq!(*a, VARIANCE_FLOOR),
            _ => unreachable!(),
        }
        assert!(p.validate().iter().any(|v| v.contains("floor")));
    }

    #[test]
    fn soft_partition_invariants() {
        let t = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 1.0, 0.0]);
        let sp = SoftPartition::new(t).unwrap();
        assert_eq!(sp.hard_labels(), vec![1, 0]);
        let bad = DMatrix::from_row_slice(1, 2, &[0.3, 0.6]);
        assert!(SoftPartition::new(bad).is_err());
    }

    #[test]
    fn dataset_rejects_non_finite() {
        let y = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 0.0, 1.0]);
        assert!(Dataset::new(y, None).is_err());
    }
}
