//! Probe objectives and their analytic gradients.
//!
//! Every kernel works on one sentence with hidden states `H` (`N x d`, one
//! row per word) and the probe's linear map `A` (`k x d`). With projections
//! `P = H Aᵀ`, any weighted sum over ordered pairs of the rank-one terms
//! `(p_i − p_j)(h_i − h_j)ᵀ` collapses to `2 Pᵀ (D − S) H` for a symmetric
//! weight matrix `S` with row sums `D`, which is how the distance-based
//! gradients are accumulated.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::params::{Family, ProbeParams};
use super::ProbeExample;

/// Loss value and a gradient with the same shape as the parameters.
pub type LossGrad = (f64, ProbeParams);

/// Hyperparameters that enter the objectives themselves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveSettings {
    pub lambda_o: f64,
    pub huber_delta: f64,
}

/// Structural probe objective summed over the batch.
pub fn struct_loss_grad(params: &ProbeParams, batch: &[ProbeExample]) -> Result<LossGrad> {
    expect_family(params, Family::Structural)?;
    let settings = ObjectiveSettings {
        lambda_o: 0.0,
        huber_delta: 1.0,
    };
    objective(params, batch, settings, 1.0)
}

/// Orthogonal probe objective: distance term summed over the batch plus
/// `lambda_o · DSO(V)`.
pub fn ortho_loss_grad(
    params: &ProbeParams,
    batch: &[ProbeExample],
    lambda_o: f64,
) -> Result<LossGrad> {
    expect_family(params, Family::Orthogonal)?;
    let settings = ObjectiveSettings {
        lambda_o,
        huber_delta: 1.0,
    };
    objective(params, batch, settings, 1.0)
}

/// Headword probe cross-entropy summed over the batch.
pub fn head_loss_grad(params: &ProbeParams, batch: &[ProbeExample]) -> Result<LossGrad> {
    expect_family(params, Family::Headword)?;
    let settings = ObjectiveSettings {
        lambda_o: 0.0,
        huber_delta: 1.0,
    };
    objective(params, batch, settings, 1.0)
}

/// Control probe Huber objective summed over the batch.
///
/// GloVe targets live on the examples (see [`ProbeExample::with_control_targets`]).
pub fn ctrl_loss_grad(params: &ProbeParams, batch: &[ProbeExample], delta: f64) -> Result<LossGrad> {
    expect_family(params, Family::Control)?;
    let settings = ObjectiveSettings {
        lambda_o: 0.0,
        huber_delta: delta,
    };
    objective(params, batch, settings, 1.0)
}

fn expect_family(params: &ProbeParams, family: Family) -> Result<()> {
    if params.family != family {
        return Err(Error::Shape(format!(
            "expected {family} parameters, got {}",
            params.family
        )));
    }
    Ok(())
}

/// Full objective for any family: `data_scale · Σ_S loss_S` plus the DSO
/// penalty (orthogonal family only, added once).
pub fn objective<'a>(
    params: &ProbeParams,
    batch: impl IntoIterator<Item = &'a ProbeExample>,
    settings: ObjectiveSettings,
    data_scale: f64,
) -> Result<LossGrad> {
    let map = params.linear_map();
    let mut grad_map = DMatrix::zeros(map.nrows(), map.ncols());
    let mut grad_root = params.root.as_ref().map(|r| DVector::zeros(r.len()));
    let mut loss = 0.0;

    for ex in batch {
        if ex.states.ncols() != params.input_dim() {
            return Err(Error::Shape(format!(
                "hidden states have width {}, probe expects {}",
                ex.states.ncols(),
                params.input_dim()
            )));
        }
        let n = ex.len();
        let proj = &ex.states * map.transpose();
        loss += match params.family {
            Family::Structural | Family::Orthogonal => {
                let w = data_scale / (n * n) as f64;
                distance_term(ex, &proj, w, &mut grad_map)
            }
            Family::Headword => {
                let root = params.root.as_ref().expect("headword root");
                let w = data_scale / n as f64;
                head_term(
                    ex,
                    &proj,
                    &map,
                    root,
                    w,
                    &mut grad_map,
                    grad_root.as_mut().expect("headword root grad"),
                )
            }
            Family::Control => {
                let w = data_scale / n as f64;
                control_term(ex, &proj, w, settings.huber_delta, &mut grad_map)
            }
        };
    }

    let mut grad = params.zeros_like();
    match (&params.scale, &mut grad.scale) {
        (Some(scale), Some(gscale)) => {
            // map = diag(scale) V
            let v = &params.proj;
            for a in 0..v.nrows() {
                let mut acc = 0.0;
                for b in 0..v.ncols() {
                    acc += grad_map[(a, b)] * v[(a, b)];
                    grad.proj[(a, b)] = scale[a] * grad_map[(a, b)];
                }
                gscale[a] = acc;
            }
            let (dso, dso_grad) = dso_with_grad(v);
            loss += settings.lambda_o * dso;
            grad.proj += dso_grad * settings.lambda_o;
        }
        _ => grad.proj = grad_map,
    }
    grad.root = grad_root;
    Ok((loss, grad))
}

/// `Σ_{i≠j} w·|d_ij − ‖p_i − p_j‖²|`, accumulating `∂/∂A` into `grad_map`.
fn distance_term(ex: &ProbeExample, proj: &DMatrix<f64>, w: f64, grad_map: &mut DMatrix<f64>) -> f64 {
    let n = ex.len();
    let mut loss = 0.0;
    let mut lap = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let pred = (proj.row(i) - proj.row(j)).norm_squared();
            let resid = ex.distances[(i, j)] - pred;
            // both ordered pairs (i, j) and (j, i)
            loss += 2.0 * w * resid.abs();
            let c = -w * sign(resid);
            lap[(i, j)] -= c;
            lap[(j, i)] -= c;
            lap[(i, i)] += c;
            lap[(j, j)] += c;
        }
    }
    // Σ_{ordered} c·2(p_i−p_j)(h_i−h_j)ᵀ = 4 Pᵀ L H
    *grad_map += (proj.transpose() * &lap * &ex.states) * 4.0;
    loss
}

#[allow(clippy::too_many_arguments)]
fn head_term(
    ex: &ProbeExample,
    proj: &DMatrix<f64>,
    map: &DMatrix<f64>,
    root: &DVector<f64>,
    w: f64,
    grad_map: &mut DMatrix<f64>,
    grad_root: &mut DVector<f64>,
) -> f64 {
    let n = ex.len();
    let proj_root = map * root;
    let mut loss = 0.0;
    let mut sym = DMatrix::zeros(n, n);
    let mut dists = vec![0.0; n + 1];
    for i in 0..n {
        // candidate 0 is ROOT, candidate c >= 1 is word c
        dists[0] = (proj.row(i).transpose() - &proj_root).norm();
        for c in 1..=n {
            dists[c] = if c - 1 == i {
                f64::NAN
            } else {
                (proj.row(i) - proj.row(c - 1)).norm()
            };
        }
        let max_score = dists
            .iter()
            .filter(|d| !d.is_nan())
            .map(|d| -d)
            .fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = dists
            .iter()
            .filter(|d| !d.is_nan())
            .map(|d| (-d - max_score).exp())
            .sum();
        let log_z = max_score + z.ln();
        let gold = ex.heads[i];
        loss += w * (dists[gold] + log_z);

        for (c, &dist) in dists.iter().enumerate() {
            if dist.is_nan() {
                continue;
            }
            let prob = (-dist - log_z).exp();
            let target = if c == gold { 1.0 } else { 0.0 };
            // ∂loss/∂dist = (target − prob)·w  since score = −dist
            let g = w * (target - prob);
            if dist <= 0.0 || g == 0.0 {
                continue;
            }
            let coef = g / dist;
            if c == 0 {
                let dp = proj.row(i).transpose() - &proj_root;
                let dh = ex.states.row(i).transpose() - root;
                *grad_map += &dp * dh.transpose() * coef;
                *grad_root -= map.transpose() * dp * coef;
            } else {
                let j = c - 1;
                sym[(i, j)] += coef / 2.0;
                sym[(j, i)] += coef / 2.0;
            }
        }
    }
    let lap = laplacian(&sym);
    *grad_map += (proj.transpose() * lap * &ex.states) * 2.0;
    loss
}

fn control_term(
    ex: &ProbeExample,
    proj: &DMatrix<f64>,
    w: f64,
    delta: f64,
    grad_map: &mut DMatrix<f64>,
) -> f64 {
    let n = ex.len();
    let mut loss = 0.0;
    let mut sym = DMatrix::zeros(n, n);
    for pair in &ex.control_pairs {
        let pred = (proj.row(pair.i) - proj.row(pair.j)).norm();
        let r = pred - pair.target;
        let (h, dh) = huber(r, delta);
        loss += w * h;
        if pred > 0.0 {
            let coef = w * dh / pred;
            sym[(pair.i, pair.j)] += coef;
            sym[(pair.j, pair.i)] += coef;
        }
    }
    let lap = laplacian(&sym);
    *grad_map += proj.transpose() * lap * &ex.states;
    loss
}

fn laplacian(sym: &DMatrix<f64>) -> DMatrix<f64> {
    let mut lap = -sym.clone();
    for i in 0..sym.nrows() {
        lap[(i, i)] += sym.row(i).sum();
    }
    lap
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Huber loss and its derivative at residual `r`.
pub fn huber(r: f64, delta: f64) -> (f64, f64) {
    if r.abs() <= delta {
        (0.5 * r * r, r)
    } else {
        (delta * (r.abs() - 0.5 * delta), delta * sign(r))
    }
}

/// Double soft orthogonality penalty `‖VᵀV − I‖²_F + ‖VVᵀ − I‖²_F`.
pub fn dso(v: &DMatrix<f64>) -> f64 {
    dso_with_grad(v).0
}

fn dso_with_grad(v: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let n = v.ncols();
    let m = v.nrows();
    let gram_c = v.transpose() * v - DMatrix::identity(n, n);
    let gram_r = v * v.transpose() - DMatrix::identity(m, m);
    let value = gram_c.norm_squared() + gram_r.norm_squared();
    let grad = (v * &gram_c) * 4.0 + (&gram_r * v) * 4.0;
    (value, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::ControlPair;
    use crate::treebank::{SentenceParse, Token};

    fn chain(n: usize) -> SentenceParse {
        let toks = (1..=n)
            .map(|i| Token {
                index: i,
                form: format!("w{i}"),
                upos: "X".into(),
                xpos: "X".into(),
                head: if i == n { 0 } else { i + 1 },
                deprel: "dep".into(),
                is_punct: false,
            })
            .collect();
        SentenceParse::from_tokens(toks, 0).unwrap()
    }

    #[test]
    fn zero_residual_gives_zero_loss() {
        // states on a line at sqrt-distance positions: |x_i − x_j|² = |i − j|
        // only holds for n = 2; use that.
        let ex = ProbeExample::new(&chain(2), DMatrix::from_row_slice(2, 1, &[0.0, 1.0])).unwrap();
        let p = ProbeParams::new(Family::Structural, DMatrix::identity(1, 1), None, None).unwrap();
        let (loss, grad) = struct_loss_grad(&p, &[ex]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad.proj[(0, 0)], 0.0);
    }

    #[test]
    fn two_token_zero_prediction() {
        let ex = ProbeExample::new(&chain(2), DMatrix::zeros(2, 1)).unwrap();
        let p = ProbeParams::new(Family::Structural, DMatrix::identity(1, 1), None, None).unwrap();
        let (loss, _) = struct_loss_grad(&p, &[ex]).unwrap();
        assert_eq!(loss, 0.5);
    }

    #[test]
    fn dso_values() {
        assert_eq!(dso(&DMatrix::identity(3, 3)), 0.0);
        assert_eq!(dso(&(DMatrix::identity(2, 2) * 2.0)), 36.0);
        let ex = ProbeExample::new(&chain(2), DMatrix::zeros(2, 2)).unwrap();
        let p = ProbeParams::new(
            Family::Orthogonal,
            DMatrix::identity(2, 2),
            Some(DVector::from_element(2, 1.0)),
            None,
        )
        .unwrap();
        // data term 0.5 from the zero prediction, DSO contributes nothing
        let (loss, _) = ortho_loss_grad(&p, &[ex], 0.05).unwrap();
        assert_eq!(loss, 0.5);
    }

    #[test]
    fn dso_vanishes_only_on_orthogonal_matrices() {
        let c = 0.6f64;
        let s = 0.8f64;
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        assert!(dso(&rot) < 1e-24);
        let refl = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(dso(&refl), 0.0);
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(dso(&skew) > 1e-3);
    }

    #[test]
    fn uniform_head_candidates_cost_ln2() {
        // two words, both at the origin: candidates ROOT and the other word
        // are both at distance 0 → uniform softmax over 2
        let ex = ProbeExample::new(&chain(2), DMatrix::zeros(2, 2)).unwrap();
        let p = ProbeParams::new(
            Family::Headword,
            DMatrix::identity(2, 2),
            None,
            Some(DVector::zeros(2)),
        )
        .unwrap();
        let (loss, _) = head_loss_grad(&p, &[ex]).unwrap();
        // per-word ln 2, averaged over |S| = 2 words
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn confident_head_prediction_costs_nothing() {
        // 1-d states: word 1 at 0, word 2 at 1, ROOT at 1.5; a large map
        // makes each gold candidate win by a wide margin
        let ex = ProbeExample::new(&chain(2), DMatrix::from_row_slice(2, 1, &[0.0, 1.0])).unwrap();
        let p = ProbeParams::new(
            Family::Headword,
            DMatrix::from_element(1, 1, 1.0e4),
            None,
            Some(DVector::from_element(1, 1.5)),
        )
        .unwrap();
        let (loss, _) = head_loss_grad(&p, &[ex]).unwrap();
        assert_eq!(loss, 0.0);

        let ex = ProbeExample::new(&chain(1), DMatrix::from_element(1, 1, 3.0)).unwrap();
        let (loss, grad) = head_loss_grad(&p, &[ex]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad.proj[(0, 0)], 0.0);
    }

    #[test]
    fn huber_branches() {
        assert_eq!(huber(0.5, 1.0).0, 0.125);
        assert_eq!(huber(2.0, 1.0).0, 1.5);
        assert_eq!(huber(-2.0, 1.0), (1.5, -1.0));
    }

    #[test]
    fn control_without_pairs_is_zero() {
        let ex = ProbeExample::new(&chain(3), DMatrix::from_element(3, 2, 1.0)).unwrap();
        let p = ProbeParams::new(Family::Control, DMatrix::identity(2, 2), None, None).unwrap();
        let (loss, grad) = ctrl_loss_grad(&p, &[ex], 1.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.proj.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn control_residual_half() {
        // 1-d states 0 and 1.5, target 1 → residual 0.5 → 0.125, over |S| = 2
        let mut ex = ProbeExample::new(&chain(2), DMatrix::from_row_slice(2, 1, &[0.0, 1.5])).unwrap();
        ex.control_pairs = vec![ControlPair {
            i: 0,
            j: 1,
            target: 1.0,
        }];
        let p = ProbeParams::new(Family::Control, DMatrix::identity(1, 1), None, None).unwrap();
        let (loss, _) = ctrl_loss_grad(&p, &[ex], 1.0).unwrap();
        assert!((loss - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let ex = ProbeExample::new(&chain(2), DMatrix::zeros(2, 3)).unwrap();
        let p = ProbeParams::new(Family::Structural, DMatrix::identity(2, 2), None, None).unwrap();
        assert!(matches!(struct_loss_grad(&p, &[ex]), Err(Error::Shape(_))));
    }

    #[test]
    fn wrong_family_is_rejected() {
        let ex = ProbeExample::new(&chain(2), DMatrix::zeros(2, 2)).unwrap();
        let p = ProbeParams::new(Family::Control, DMatrix::identity(2, 2), None, None).unwrap();
        assert!(struct_loss_grad(&p, &[ex]).is_err());
    }
}
