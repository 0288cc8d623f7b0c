use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::tsv::BlockFile;
use crate::numkit::{clip_global_norm, AdamState, Matrix};

const CHECKPOINT_KIND: &str = "transform-pair";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct AlignConfig {
    /// Weight of the two cycle-consistency terms.
    pub cycle_weight: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub pca_dim: usize,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            cycle_weight: 0.5,
            learning_rate: 1e-4,
            iterations: 1000,
            pca_dim: 64,
            clip_norm: None,
            seed: 0,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cycle_weight >= 0.0 && self.cycle_weight.is_finite()) {
            return Err(Error::Config(format!(
                "cycle weight must be >= 0, got {}",
                self.cycle_weight
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.pca_dim == 0 {
            return Err(Error::Config("PCA dimension must be at least 1".into()));
        }
        Ok(())
    }
}

/// Linear maps between the two projected spaces. Vectors are columns in the
/// usual notation: `b ≈ T_ab a` and `a ≈ T_ba b`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformPair {
    pub t_ab: Matrix,
    pub t_ba: Matrix,
}

impl TransformPair {
    pub fn identity(k: usize) -> Self {
        Self {
            t_ab: Matrix::identity(k),
            t_ba: Matrix::identity(k),
        }
    }

    pub fn dim(&self) -> usize {
        self.t_ab.rows()
    }

    pub fn map_ab(&self, a: &[f64]) -> Result<Vec<f64>> {
        apply(&self.t_ab, a)
    }

    pub fn map_ba(&self, b: &[f64]) -> Result<Vec<f64>> {
        apply(&self.t_ba, b)
    }

    pub fn to_block_file(&self, cycle_weight: f64, iterations: usize) -> BlockFile {
        let mut f = BlockFile::new(CHECKPOINT_KIND, CHECKPOINT_VERSION)
            .with_meta("k", self.dim())
            .with_meta("cycle_weight", cycle_weight)
            .with_meta("iterations", iterations);
        f.push("t_ab", self.t_ab.clone());
        f.push("t_ba", self.t_ba.clone());
        f
    }

    pub fn from_block_file(f: &BlockFile) -> Result<Self> {
        let k: usize = f.meta_parse("k")?;
        let pair = Self {
            t_ab: f.block("t_ab")?.clone(),
            t_ba: f.block("t_ba")?.clone(),
        };
        for m in [&pair.t_ab, &pair.t_ba] {
            if m.shape() != (k, k) {
                return Err(Error::shape(
                    "TransformPair::from_block_file",
                    format!("{k}x{k}"),
                    format!("{:?}", m.shape()),
                ));
            }
        }
        Ok(pair)
    }

    pub fn save(&self, path: impl AsRef<Path>, cycle_weight: f64, iterations: usize) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_block_file(cycle_weight, iterations).to_text())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_block_file(&BlockFile::parse(
            &text,
            CHECKPOINT_KIND,
            CHECKPOINT_VERSION,
        )?)
    }
}

fn apply(t: &Matrix, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != t.cols() {
        return Err(Error::shape("TransformPair::map", t.cols(), v.len()));
    }
    Ok(t.row_iter()
        .map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect())
}

fn check_dims(t: &TransformPair, a: &Matrix, b: &Matrix) -> Result<()> {
    let k = t.dim();
    if t.t_ab.shape() != (k, k) || t.t_ba.shape() != (k, k) {
        return Err(Error::shape(
            "align_loss",
            format!("{k}x{k} transforms"),
            format!("{:?}/{:?}", t.t_ab.shape(), t.t_ba.shape()),
        ));
    }
    if a.cols() != k || b.cols() != k {
        return Err(Error::shape(
            "align_loss",
            format!("{k} columns"),
            format!("{}/{}", a.cols(), b.cols()),
        ));
    }
    if a.rows() != b.rows() {
        return Err(Error::shape(
            "align_loss",
            format!("{} pairs", a.rows()),
            b.rows(),
        ));
    }
    Ok(())
}

struct Residuals {
    forward_ab: Matrix,
    forward_ba: Matrix,
    cycle_a: Matrix,
    cycle_b: Matrix,
}

/// Seed pairs are the rows of `a` and `b`, so `T a_n` is row `n` of `a Tᵀ`.
fn residuals(t: &TransformPair, a: &Matrix, b: &Matrix) -> Result<Residuals> {
    let a_ab = a.matmul_t(&t.t_ab)?;
    let b_ba = b.matmul_t(&t.t_ba)?;
    Ok(Residuals {
        forward_ab: b.sub(&a_ab)?,
        forward_ba: a.sub(&b_ba)?,
        cycle_a: a.sub(&a_ab.matmul_t(&t.t_ba)?)?,
        cycle_b: b.sub(&b_ba.matmul_t(&t.t_ab)?)?,
    })
}

fn sq(m: &Matrix) -> f64 {
    m.data().iter().map(|v| v * v).sum()
}

/// Sum of the two forward reconstruction errors plus `cycle_weight` times
/// the two round-trip errors, over seed pairs given as rows.
pub fn align_loss(t: &TransformPair, a: &Matrix, b: &Matrix, cycle_weight: f64) -> Result<f64> {
    check_dims(t, a, b)?;
    let r = residuals(t, a, b)?;
    Ok(sq(&r.forward_ab) + sq(&r.forward_ba) + cycle_weight * (sq(&r.cycle_a) + sq(&r.cycle_b)))
}

/// Loss together with its gradient with respect to `(T_ab, T_ba)`.
pub fn align_gradients(
    t: &TransformPair,
    a: &Matrix,
    b: &Matrix,
    cycle_weight: f64,
) -> Result<(f64, TransformPair)> {
    check_dims(t, a, b)?;
    let r = residuals(t, a, b)?;
    let loss =
        sq(&r.forward_ab) + sq(&r.forward_ba) + cycle_weight * (sq(&r.cycle_a) + sq(&r.cycle_b));

    let mut g_ab = r.forward_ab.t_matmul(a)?.scale(-2.0);
    let mut g_ba = r.forward_ba.t_matmul(b)?.scale(-2.0);

    // a -> T_ba T_ab a
    let d_c = r.cycle_a.t_matmul(a)?.scale(-2.0 * cycle_weight);
    g_ba.add_assign(&d_c.matmul_t(&t.t_ab)?)?;
    g_ab.add_assign(&t.t_ba.t_matmul(&d_c)?)?;

    // b -> T_ab T_ba b
    let d_d = r.cycle_b.t_matmul(b)?.scale(-2.0 * cycle_weight);
    g_ab.add_assign(&d_d.matmul_t(&t.t_ba)?)?;
    g_ba.add_assign(&t.t_ab.t_matmul(&d_d)?)?;

    Ok((
        loss,
        TransformPair {
            t_ab: g_ab,
            t_ba: g_ba,
        },
    ))
}

/// Full-batch Adam from identity transforms. The trace holds the loss
/// before every update and once more after the last one.
pub fn train_alignment(
    a: &Matrix,
    b: &Matrix,
    cfg: &AlignConfig,
) -> Result<(TransformPair, Vec<f64>)> {
    cfg.validate()?;
    if a.rows() == 0 {
        return Err(Error::Empty("seed pairs"));
    }
    let k = a.cols();
    let mut params = vec![Matrix::identity(k), Matrix::identity(k)];
    let mut adam = AdamState::new(&params, cfg.learning_rate);
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    for iteration in 0..=cfg.iterations {
        let pair = TransformPair {
            t_ab: params[0].clone(),
            t_ba: params[1].clone(),
        };
        let (loss, grads) = align_gradients(&pair, a, b, cfg.cycle_weight)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration });
        }
        trace.push(loss);
        if iteration == cfg.iterations {
            break;
        }
        let mut grads = vec![grads.t_ab, grads.t_ba];
        if let Some(max) = cfg.clip_norm {
            clip_global_norm(&mut grads, max);
        }
        adam.step(&mut params, &grads)?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                iteration: iteration + 1,
            });
        }
    }
    let mut it = params.into_iter();
    let t_ab = it.next().unwrap_or_else(|| Matrix::identity(k));
    let t_ba = it.next().unwrap_or_else(|| Matrix::identity(k));
    Ok((TransformPair { t_ab, t_ba }, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_pair_under_identity_costs_four() {
        let a = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        let t = TransformPair::identity(2);
        assert!((align_loss(&t, &a, &b, 0.5).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn identical_sets_cost_nothing() {
        let a = Matrix::from_fn(5, 3, |r, c| (r as f64 - 2.0) * (c as f64 + 0.5));
        assert_eq!(
            align_loss(&TransformPair::identity(3), &a, &a, 0.5).unwrap(),
            0.0
        );
    }

    #[test]
    fn zero_cycle_weight_keeps_only_forward_terms() {
        let a = Matrix::from_fn(4, 2, |r, c| (r + 2 * c) as f64 * 0.3);
        let b = Matrix::from_fn(4, 2, |r, c| (3 * r + c) as f64 * 0.1 - 0.2);
        let t = TransformPair {
            t_ab: Matrix::from_rows(&[[0.5, 0.2], [-0.1, 1.5]]).unwrap(),
            t_ba: Matrix::from_rows(&[[1.1, 0.0], [0.3, 0.7]]).unwrap(),
        };
        let r = residuals(&t, &a, &b).unwrap();
        let want = sq(&r.forward_ab) + sq(&r.forward_ba);
        assert!((align_loss(&t, &a, &b, 0.0).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        let a = Matrix::zeros(3, 2);
        let b = Matrix::zeros(3, 3);
        assert!(align_loss(&TransformPair::identity(2), &a, &b, 0.5).is_err());
        assert!(align_loss(&TransformPair::identity(2), &a, &Matrix::zeros(2, 2), 0.5).is_err());
    }

    #[test]
    fn identical_sets_stay_at_identity() {
        let a = Matrix::from_fn(10, 4, |r, c| ((r * 5 + c * 3) % 7) as f64 - 3.0);
        let cfg = AlignConfig {
            iterations: 200,
            ..AlignConfig::default()
        };
        let (t, trace) = train_alignment(&a, &a, &cfg).unwrap();
        assert!(trace.iter().all(|&l| l < 1e-20));
        assert!(t.t_ab.max_abs_diff(&Matrix::identity(4)).unwrap() < 1e-6);
    }

    #[test]
    fn overflowing_loss_reports_divergence() {
        let a = Matrix::from_fn(6, 3, |r, c| 1e160 * ((r + c) as f64 + 1.0));
        let b = Matrix::from_fn(6, 3, |r, c| -1e160 * ((r * c) as f64 + 1.0));
        let cfg = AlignConfig {
            iterations: 50,
            ..AlignConfig::default()
        };
        let err = train_alignment(&a, &b, &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
        assert!(err.to_string().contains("smaller learning rate"));
    }

    #[test]
    fn checkpoint_round_trip() {
        let t = TransformPair {
            t_ab: Matrix::from_rows(&[[0.5, 0.25], [-1.0 / 3.0, 1.5]]).unwrap(),
            t_ba: Matrix::identity(2),
        };
        let f = t.to_block_file(0.5, 1000);
        let back = TransformPair::from_block_file(
            &BlockFile::parse(&f.to_text(), CHECKPOINT_KIND, 1).unwrap(),
        )
        .unwrap();
        assert_eq!(back, t);
        assert_eq!(f.meta_str("iterations").unwrap(), "1000");
    }
}
