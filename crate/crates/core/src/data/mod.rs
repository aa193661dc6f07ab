//! Teacher–student data, random feature matrices, dataset splits and the
//! latent-vector file format.

mod latent;

pub use latent::{format_real, load_latent_dataset, save_latent_dataset};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matvec, sample_standard_normal_matrix, Matrix, Vector};
use crate::rng::RngStream;

/// Output nonlinearity of the teacher.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherKind {
    Relu,
    /// `sign(t)`, with `sign(0) = +1`.
    Sign,
}

impl TeacherKind {
    pub fn apply(&self, t: f64) -> f64 {
        match self {
            TeacherKind::Relu => t.max(0.0),
            TeacherKind::Sign => {
                if t >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// Labels `y = psi(xi^T x) + delta * eps` with a fixed unit-norm `xi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherSpec {
    pub psi: TeacherKind,
    pub delta: f64,
    pub xi: Vector,
}

impl TeacherSpec {
    pub fn n(&self) -> usize {
        self.xi.len()
    }

    /// Noise-free teacher output for each row of `x`.
    pub fn signal(&self, x: &Matrix) -> Vector {
        matvec(x.as_ref(), &self.xi).into_iter().map(|t| self.psi.apply(t)).collect()
    }
}

/// Draws `xi ~ N(0, I/n)` and rescales it to unit norm.
pub fn make_teacher(n: usize, psi: TeacherKind, delta: f64, rng: &RngStream) -> Result<TeacherSpec> {
    if n == 0 {
        return Err(Error::InvalidArgument("teacher dimension n must be >= 1".into()));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise level delta must be >= 0, got {delta}")));
    }
    let mut xi = vec![0.0; n];
    rng.sampler().fill_normal(&mut xi, 1.0 / (n as f64).sqrt());
    let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut xi {
        *v /= norm;
    }
    Ok(TeacherSpec { psi, delta, xi })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Validation,
    Test,
}

/// Inputs `x` (one sample per row) with labels `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vector,
    pub role: Role,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vector, role: Role) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidArgument("dataset must have at least one row and one column".into()));
        }
        Ok(Self { x, y, role })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_binary(&self) -> bool {
        self.y.iter().all(|&v| v == 1.0 || v == -1.0)
    }

    /// Fails with the first label outside `{-1, +1}` (lines are 1-based rows).
    pub fn check_binary(&self) -> Result<()> {
        match self.y.iter().position(|&v| v != 1.0 && v != -1.0) {
            None => Ok(()),
            Some(i) => Err(Error::LabelError {
                label: self.y[i],
                line: i + 1,
            }),
        }
    }

    pub fn label_mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }

    /// The rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], role: Role) -> Dataset {
        let x = Matrix::from_fn(indices.len(), self.dim(), |i, j| self.x[(indices[i], j)]);
        let y = indices.iter().map(|&i| self.y[i]).collect();
        Dataset { x, y, role }
    }
}

/// Draws `m` samples with rows `x ~ N(0, I_n)` labelled by `teacher`.
pub fn generate(teacher: &TeacherSpec, m: usize, role: Role, rng: &RngStream) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::InvalidArgument("sample count m must be >= 1".into()));
    }
    let x = sample_standard_normal_matrix(&rng.child(0), m, teacher.n(), 1.0);
    let mut y = teacher.signal(&x);
    if teacher.delta > 0.0 {
        let mut noise = rng.child(1).sampler();
        for v in &mut y {
            *v += teacher.delta * noise.standard_normal();
        }
    }
    Dataset::new(x, y, role)
}

/// The frozen `n x k` first-layer matrix.
///
/// When sampled from a stream the matrix remembers it, so serialization stores
/// only `(n, k, seed, stream)` and regenerates the entries on load.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub f: Matrix,
    source: Option<RngStream>,
}

impl FeatureMatrix {
    pub fn from_matrix(f: Matrix) -> Result<Self> {
        if f.nrows() == 0 || f.ncols() == 0 {
            return Err(Error::InvalidArgument("feature matrix must be at least 1 x 1".into()));
        }
        if !crate::linalg::is_finite_matrix(f.as_ref()) {
            return Err(Error::InvalidArgument("feature matrix has non-finite entries".into()));
        }
        Ok(Self { f, source: None })
    }

    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    pub fn k(&self) -> usize {
        self.f.ncols()
    }

    pub fn source(&self) -> Option<RngStream> {
        self.source
    }
}

/// Columns i.i.d. `N(0, I_n / n)`.
pub fn sample_features(n: usize, k: usize, rng: &RngStream) -> Result<FeatureMatrix> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidArgument(format!("feature matrix needs n, k >= 1, got {n} x {k}")));
    }
    Ok(FeatureMatrix {
        f: sample_standard_normal_matrix(rng, n, k, 1.0 / (n as f64).sqrt()),
        source: Some(*rng),
    })
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FeatureMatrixRepr {
    Sampled { n: usize, k: usize, seed: u64, stream: u64 },
    Explicit { n: usize, k: usize, entries: Vec<f64> },
}

impl Serialize for FeatureMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let (n, k) = (self.n(), self.k());
        let repr = match self.source {
            Some(rng) => FeatureMatrixRepr::Sampled {
                n,
                k,
                seed: rng.seed,
                stream: rng.stream,
            },
            None => FeatureMatrixRepr::Explicit {
                n,
                k,
                entries: (0..n).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| self.f[(i, j)]).collect(),
            },
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FeatureMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match FeatureMatrixRepr::deserialize(deserializer)? {
            FeatureMatrixRepr::Sampled { n, k, seed, stream } => {
                sample_features(n, k, &RngStream::new(seed, stream)).map_err(D::Error::custom)
            }
            FeatureMatrixRepr::Explicit { n, k, entries } => {
                if entries.len() != n * k {
                    return Err(D::Error::custom(format!("expected {} entries, got {}", n * k, entries.len())));
                }
                FeatureMatrix::from_matrix(Matrix::from_fn(n, k, |i, j| entries[i * k + j])).map_err(D::Error::custom)
            }
        }
    }
}

/// Random partition into train, validation and test sets.
///
/// Split sizes are `round(f * m)` for the train and validation fractions,
/// the rest going to test. With `+-1` labels each class is spread over the
/// splits in proportion to the split sizes, rounding by largest remainder, so
/// every split holds each class within one sample of its exact share.
pub fn split(data: &Dataset, fractions: (f64, f64), rng: &RngStream) -> Result<(Dataset, Dataset, Dataset)> {
    let (ft, fv) = fractions;
    if !(ft > 0.0 && fv > 0.0 && ft + fv < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be positive with sum < 1, got ({ft}, {fv})"
        )));
    }
    let m = data.len();
    let n_train = (ft * m as f64).round() as usize;
    let n_val = (fv * m as f64).round() as usize;
    if n_train == 0 {
        return Err(Error::InsufficientSamples("train"));
    }
    if n_val == 0 {
        return Err(Error::InsufficientSamples("validation"));
    }
    if n_train + n_val >= m {
        return Err(Error::InsufficientSamples("test"));
    }
    let targets = [n_train, n_val, m - n_train - n_val];

    let classes: Vec<Vec<usize>> = if data.is_binary() {
        [-1.0, 1.0]
            .iter()
            .map(|&c| (0..m).filter(|&i| data.y[i] == c).collect::<Vec<_>>())
            .filter(|members| !members.is_empty())
            .collect()
    } else {
        vec![(0..m).collect()]
    };
    let counts: Vec<usize> = classes.iter().map(Vec::len).collect();
    let table = apportion(&targets, &counts, m);

    let mut sampler = rng.sampler();
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (c, members) in classes.iter().enumerate() {
        let mut members = members.clone();
        sampler.shuffle(&mut members);
        let mut offset = 0;
        for (s, part) in parts.iter_mut().enumerate() {
            part.extend_from_slice(&members[offset..offset + table[s][c]]);
            offset += table[s][c];
        }
    }
    for part in &mut parts {
        part.sort_unstable();
    }
    Ok((
        data.subset(&parts[0], Role::Train),
        data.subset(&parts[1], Role::Validation),
        data.subset(&parts[2], Role::Test),
    ))
}

/// Integer table with row sums `targets` and column sums `counts` whose
/// entries are within one of `targets[s] * counts[c] / total`.
fn apportion(targets: &[usize], counts: &[usize], total: usize) -> Vec<Vec<usize>> {
    let mut table = vec![vec![0usize; counts.len()]; targets.len()];
    let mut fractions = Vec::new();
    for (s, &t) in targets.iter().enumerate() {
        for (c, &n) in counts.iter().enumerate() {
            let exact = t as f64 * n as f64 / total as f64;
            table[s][c] = exact.floor() as usize;
            fractions.push((exact - exact.floor(), s, c));
        }
    }
    let mut row_need: Vec<usize> = targets
        .iter()
        .enumerate()
        .map(|(s, &t)| t - table[s].iter().sum::<usize>())
        .collect();
    let mut col_need: Vec<usize> = counts
        .iter()
        .enumerate()
        .map(|(c, &n)| n - table.iter().map(|row| row[c]).sum::<usize>())
        .collect();
    // Largest remainder first; ties resolved by grid position for determinism.
    fractions.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then((a.1, a.2).cmp(&(b.1, b.2))));
    for &(_, s, c) in &fractions {
        if row_need[s] > 0 && col_need[c] > 0 {
            table[s][c] += 1;
            row_need[s] -= 1;
            col_need[c] -= 1;
        }
    }
    // Greedy leftovers (rare): any cell whose row and column both still need one.
    for s in 0..targets.len() {
        for c in 0..counts.len() {
            let extra = row_need[s].min(col_need[c]);
            table[s][c] += extra;
            row_need[s] -= extra;
            col_need[c] -= extra;
        }
    }
    table
}
