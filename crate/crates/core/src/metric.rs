//! Mahalanobis metrics parameterized by a linear map `L`, with `M = LᵀL`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Mat};

/// Structural restriction on `L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MetricShape {
    /// Dense `d×d`.
    Full,
    /// `diag(l_1, ..., l_d)`: feature re-weighting.
    Diagonal,
    /// `(1/σ)·I`: a single kernel width.
    Spherical,
    /// Dense `r×d` with `1 ≤ r < d`.
    Rectangular(usize),
}

impl MetricShape {
    pub fn tag(&self) -> &'static str {
        match self {
            MetricShape::Full => "full",
            MetricShape::Diagonal => "diag",
            MetricShape::Spherical => "sphere",
            MetricShape::Rectangular(_) => "rect",
        }
    }

    /// Output dimension for inputs of dimension `d`.
    pub fn out_dim(&self, d: usize) -> usize {
        match self {
            MetricShape::Rectangular(r) => *r,
            _ => d,
        }
    }

    pub fn num_params(&self, d: usize) -> usize {
        match self {
            MetricShape::Full => d * d,
            MetricShape::Diagonal => d,
            MetricShape::Spherical => 1,
            MetricShape::Rectangular(r) => r * d,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if d == 0 {
            return Err(Error::InvalidArgument(
                "metric dimension must be ≥ 1".into(),
            ));
        }
        if let MetricShape::Rectangular(r) = self {
            if *r == 0 || *r >= d {
                return Err(Error::InvalidArgument(format!(
                    "rectangular metric needs 1 ≤ r < d, got r={r}, d={d}"
                )));
            }
        }
        Ok(())
    }

    /// Parse `full`, `diag`, `sphere` or `rect:<r>` (`rect` alone means r=2).
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(MetricShape::Full),
            "diag" | "diagonal" => Ok(MetricShape::Diagonal),
            "sphere" | "spherical" => Ok(MetricShape::Spherical),
            "rect" => Ok(MetricShape::Rectangular(2)),
            _ => s
                .strip_prefix("rect:")
                .or_else(|| s.strip_prefix("rect"))
                .and_then(|r| r.parse().ok())
                .map(MetricShape::Rectangular)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown metric shape {s:?}"))),
        }
    }
}

impl std::str::FromStr for MetricShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl Serialize for MetricShape {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricShape {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

impl std::fmt::Display for MetricShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricShape::Rectangular(r) => write!(f, "rect:{r}"),
            s => f.write_str(s.tag()),
        }
    }
}

/// How the default `L₀` is scaled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScale {
    /// `L₀ = I/√d`, so `M₀ = I/d` and the kernel width is `σ² = d`.
    #[default]
    InvSqrtD,
    /// `L₀ = I/d` taken literally.
    InvD,
}

impl InitScale {
    pub fn factor(&self, d: usize) -> f64 {
        match self {
            InitScale::InvSqrtD => 1.0 / (d as f64).sqrt(),
            InitScale::InvD => 1.0 / d as f64,
        }
    }
}

/// The linear map `L` of a Mahalanobis metric, stored by its free parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMetric {
    shape: MetricShape,
    d: usize,
    // Full: d×d row-major; Diagonal: d; Spherical: [1/σ]; Rectangular(r): r×d row-major
    params: Vec<f64>,
}

impl LinearMetric {
    pub fn new(shape: MetricShape, d: usize, params: Vec<f64>) -> Result<Self> {
        shape.validate(d)?;
        check_dim(shape.num_params(d), params.len())?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(
                "metric entries must be finite".into(),
            ));
        }
        Ok(LinearMetric { shape, d, params })
    }

    pub fn spherical(d: usize, inv_sigma: f64) -> Result<Self> {
        Self::new(MetricShape::Spherical, d, vec![inv_sigma])
    }

    pub fn diagonal(weights: Vec<f64>) -> Result<Self> {
        let d = weights.len();
        Self::new(MetricShape::Diagonal, d, weights)
    }

    pub fn full(l: &Mat) -> Result<Self> {
        if l.rows() != l.cols() {
            return Err(Error::DimensionMismatch {
                expected: l.cols(),
                got: l.rows(),
            });
        }
        Self::new(MetricShape::Full, l.cols(), l.as_slice().to_vec())
    }

    pub fn rectangular(l: &Mat) -> Result<Self> {
        Self::new(
            MetricShape::Rectangular(l.rows()),
            l.cols(),
            l.as_slice().to_vec(),
        )
    }

    /// Euclidean metric `L = I`.
    pub fn identity(d: usize) -> Result<Self> {
        Self::spherical(d, 1.0)
    }

    /// Default starting point for `shape`.
    ///
    /// Full, diagonal and spherical metrics start at `factor·I`. A rectangular
    /// metric takes the top-`r` principal directions of `reference` (rows of
    /// `L`) scaled by the same factor, or the first `r` rows of `factor·I`
    /// when no reference is given.
    pub fn init_default(
        shape: MetricShape,
        d: usize,
        reference: Option<&Mat>,
        scale: InitScale,
    ) -> Result<Self> {
        shape.validate(d)?;
        let f = scale.factor(d);
        match shape {
            MetricShape::Spherical => Self::spherical(d, f),
            MetricShape::Diagonal => Self::diagonal(vec![f; d]),
            MetricShape::Full => Self::full(&Mat::identity(d).scale(f)),
            MetricShape::Rectangular(r) => {
                let l = match reference {
                    Some(x) => {
                        check_dim(d, x.cols())?;
                        let (_, vecs) = linalg::sym_eigen(&covariance(x));
                        Mat::from_fn(r, d, |i, j| f * vecs[(j, i)])
                    }
                    None => Mat::from_fn(r, d, |i, j| if i == j { f } else { 0.0 }),
                };
                Self::rectangular(&l)
            }
        }
    }

    pub fn shape(&self) -> MetricShape {
        self.shape
    }

    /// Input dimension.
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Output dimension of [`transform`](Self::transform).
    pub fn out_dim(&self) -> usize {
        self.shape.out_dim(self.d)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        Self::new(self.shape, self.d, params.to_vec())
    }

    /// Explicit `r×d` matrix `L`.
    pub fn to_matrix(&self) -> Mat {
        let d = self.d;
        match self.shape {
            MetricShape::Full | MetricShape::Rectangular(_) => {
                Mat::from_vec(self.out_dim(), d, self.params.clone()).expect("validated shape")
            }
            MetricShape::Diagonal => {
                Mat::from_fn(d, d, |i, j| if i == j { self.params[i] } else { 0.0 })
            }
            MetricShape::Spherical => {
                Mat::from_fn(d, d, |i, j| if i == j { self.params[0] } else { 0.0 })
            }
        }
    }

    /// `M = LᵀL`.
    pub fn to_m(&self) -> Mat {
        let l = self.to_matrix();
        l.tr_matmul(&l).expect("conformable")
    }

    /// Same shape with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        LinearMetric {
            shape: self.shape,
            d: self.d,
            params: self.params.iter().map(|p| p * factor).collect(),
        }
    }

    /// `L x`.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.d, x.len())?;
        let mut out = vec![0.0; self.out_dim()];
        self.transform_into(x, &mut out);
        Ok(out)
    }

    fn transform_into(&self, x: &[f64], out: &mut [f64]) {
        match self.shape {
            MetricShape::Full | MetricShape::Rectangular(_) => {
                for (o, row) in out.iter_mut().zip(self.params.chunks_exact(self.d)) {
                    *o = linalg::dot(row, x);
                }
            }
            MetricShape::Diagonal => {
                for ((o, w), v) in out.iter_mut().zip(&self.params).zip(x) {
                    *o = w * v;
                }
            }
            MetricShape::Spherical => {
                let s = self.params[0];
                for (o, v) in out.iter_mut().zip(x) {
                    *o = s * v;
                }
            }
        }
    }

    /// `L xᵢ` for every row of `x`, as an `n×r` matrix.
    pub fn transform_rows(&self, x: &Mat) -> Result<Mat> {
        check_dim(self.d, x.cols())?;
        let r = self.out_dim();
        let mut out = Mat::zeros(x.rows(), r);
        for i in 0..x.rows() {
            self.transform_into(x.row(i), out.row_mut(i));
        }
        Ok(out)
    }

    /// `‖L(xᵢ − xⱼ)‖²`.
    pub fn distance_sq(&self, xi: &[f64], xj: &[f64]) -> Result<f64> {
        check_dim(self.d, xi.len())?;
        check_dim(self.d, xj.len())?;
        let diff: Vec<f64> = xi.iter().zip(xj).map(|(a, b)| a - b).collect();
        let mut z = vec![0.0; self.out_dim()];
        self.transform_into(&diff, &mut z);
        Ok(z.iter().map(|v| v * v).sum())
    }

    /// `‖L − L₀‖²_F` over the explicit matrices.
    pub fn frobenius_gap(&self, reference: &LinearMetric) -> Result<f64> {
        if self.shape != reference.shape || self.d != reference.d {
            return Err(Error::InvalidArgument(format!(
                "metric shapes differ: {}/{} vs {}/{}",
                self.shape, self.d, reference.shape, reference.d
            )));
        }
        let sq: f64 = self
            .params
            .iter()
            .zip(&reference.params)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(match self.shape {
            MetricShape::Spherical => sq * self.d as f64,
            _ => sq,
        })
    }

    /// Chain rule from a gradient over the explicit `r×d` matrix to the free
    /// parameters of this shape (diagonal entries, trace, or all entries).
    pub fn project_gradient(&self, g: &Mat) -> Result<Vec<f64>> {
        check_dim(self.out_dim(), g.rows())?;
        check_dim(self.d, g.cols())?;
        Ok(match self.shape {
            MetricShape::Full | MetricShape::Rectangular(_) => g.as_slice().to_vec(),
            MetricShape::Diagonal => (0..self.d).map(|k| g[(k, k)]).collect(),
            MetricShape::Spherical => vec![(0..self.d).map(|k| g[(k, k)]).sum()],
        })
    }

    /// Least-norm preimage `x` with `L x = z` (rows of `L` must be independent).
    pub fn preimage(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.out_dim(), z.len())?;
        let l = self.to_matrix();
        let llt = l.matmul(&l.transpose())?;
        let chol = linalg::Cholesky::factor(llt.as_slice(), llt.rows())?;
        let w = chol.solve(z);
        Ok(l.transpose().matvec(&w))
    }
}

/// Sample covariance of the rows of `x` (mean-centered, n−1 denominator).
pub fn covariance(x: &Mat) -> Mat {
    let (n, d) = (x.rows(), x.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        linalg::axpy(1.0 / n as f64, x.row(i), &mut mean);
    }
    let mut c = Mat::zeros(d, d);
    let denom = (n.max(2) - 1) as f64;
    for i in 0..n {
        let r: Vec<f64> = x.row(i).iter().zip(&mean).map(|(a, m)| a - m).collect();
        for a in 0..d {
            linalg::axpy(r[a] / denom, &r, c.row_mut(a));
        }
    }
    c
}

#[derive(Serialize, Deserialize)]
struct MetricJson {
    shape: String,
    r: usize,
    d: usize,
    entries: Vec<f64>,
}

impl Serialize for LinearMetric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MetricJson {
            shape: self.shape.tag().to_string(),
            r: self.out_dim(),
            d: self.d,
            entries: self.params.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LinearMetric {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let j = MetricJson::deserialize(de)?;
        let shape = match j.shape.as_str() {
            "full" => MetricShape::Full,
            "diag" => MetricShape::Diagonal,
            "sphere" => MetricShape::Spherical,
            "rect" => MetricShape::Rectangular(j.r),
            other => {
                return Err(serde::de::Error::custom(format!("unknown shape {other:?}")));
            }
        };
        LinearMetric::new(shape, j.d, j.entries).map_err(serde::de::Error::custom)
    }
}
