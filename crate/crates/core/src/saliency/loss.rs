use crate::error::{shape_err, Result};
use crate::tape::{Tape, Var};

use super::{GroundTruthMask, SaliencyMap};

/// Probability clamp applied before the logarithms of the BCE term.
pub const BCE_EPS: f64 = 1e-7;
/// Stabilizers of the global SSIM term; they enter squared.
pub const SSIM_C1: f64 = 0.01;
pub const SSIM_C2: f64 = 0.03;

fn check_pair(tape: &Tape, s: Var, g: Var) -> Result<()> {
    if tape.value(s).shape() != tape.value(g).shape() {
        return Err(shape_err!(
            "prediction {:?} vs ground truth {:?}",
            tape.value(s).shape(),
            tape.value(g).shape()
        ));
    }
    Ok(())
}

/// Mean over pixels of `-(1-G) ln(1-S) - G ln S`, with `S` clamped to `[ε, 1-ε]`.
pub fn bce_term(tape: &mut Tape, s: Var, g: Var) -> Result<Var> {
    check_pair(tape, s, g)?;
    let sc = tape.clamp(s, BCE_EPS, 1.0 - BCE_EPS);
    let log_s = tape.log(sc);
    let neg_s = tape.mul_scalar(sc, -1.0);
    let one_minus_s = tape.add_scalar(neg_s, 1.0);
    let log_1ms = tape.log(one_minus_s);
    let neg_g = tape.mul_scalar(g, -1.0);
    let one_minus_g = tape.add_scalar(neg_g, 1.0);
    let a = tape.mul(one_minus_g, log_1ms)?;
    let b = tape.mul(g, log_s)?;
    let sum = tape.add(a, b)?;
    let m = tape.mean(sum);
    Ok(tape.mul_scalar(m, -1.0))
}

/// `ΣSG / Σ(S + G - SG)` as a tape scalar; `None` when both maps are all zero.
fn iou_ratio_var(tape: &mut Tape, s: Var, g: Var) -> Result<Option<Var>> {
    check_pair(tape, s, g)?;
    let sg = tape.mul(s, g)?;
    let inter = tape.sum(sg);
    let s_plus_g = tape.add(s, g)?;
    let union_px = tape.sub(s_plus_g, sg)?;
    let union = tape.sum(union_px);
    if tape.value(union).data()[0] == 0.0 {
        return Ok(None);
    }
    Ok(Some(tape.div(inter, union)?))
}

/// `1 - IoU`; zero when both maps are empty.
pub fn iou_term(tape: &mut Tape, s: Var, g: Var) -> Result<Var> {
    match iou_ratio_var(tape, s, g)? {
        Some(ratio) => {
            let neg = tape.mul_scalar(ratio, -1.0);
            Ok(tape.add_scalar(neg, 1.0))
        }
        None => Ok(tape.constant(crate::tensor::Tensor::scalar(0.0))),
    }
}

/// One minus the single-window SSIM of the two maps.
pub fn ssim_term(tape: &mut Tape, s: Var, g: Var) -> Result<Var> {
    check_pair(tape, s, g)?;
    let c1 = SSIM_C1 * SSIM_C1;
    let c2 = SSIM_C2 * SSIM_C2;
    let mu_p = tape.mean(s);
    let mu_g = tape.mean(g);
    let ss = tape.mul(s, s)?;
    let gg = tape.mul(g, g)?;
    let sg = tape.mul(s, g)?;
    let e_ss = tape.mean(ss);
    let e_gg = tape.mean(gg);
    let e_sg = tape.mean(sg);
    let mu_p2 = tape.mul(mu_p, mu_p)?;
    let mu_g2 = tape.mul(mu_g, mu_g)?;
    let mu_pg = tape.mul(mu_p, mu_g)?;
    let var_p = tape.sub(e_ss, mu_p2)?;
    let var_g = tape.sub(e_gg, mu_g2)?;
    let cov = tape.sub(e_sg, mu_pg)?;

    let two_mu = tape.mul_scalar(mu_pg, 2.0);
    let lum_num = tape.add_scalar(two_mu, c1);
    let two_cov = tape.mul_scalar(cov, 2.0);
    let con_num = tape.add_scalar(two_cov, c2);
    let mu_sq = tape.add(mu_p2, mu_g2)?;
    let lum_den = tape.add_scalar(mu_sq, c1);
    let var_sum = tape.add(var_p, var_g)?;
    let con_den = tape.add_scalar(var_sum, c2);

    let num = tape.mul(lum_num, con_num)?;
    let den = tape.mul(lum_den, con_den)?;
    let ssim = tape.div(num, den)?;
    let neg = tape.mul_scalar(ssim, -1.0);
    Ok(tape.add_scalar(neg, 1.0))
}

/// Unit-weight sum of the three terms.
pub fn mixed_loss(tape: &mut Tape, s: Var, g: Var) -> Result<Var> {
    let a = bce_term(tape, s, g)?;
    let b = iou_term(tape, s, g)?;
    let c = ssim_term(tape, s, g)?;
    let ab = tape.add(a, b)?;
    tape.add(ab, c)
}

fn eval(
    s: &SaliencyMap,
    g: &GroundTruthMask,
    f: impl Fn(&mut Tape, Var, Var) -> Result<Var>,
) -> Result<f64> {
    if s.width() != g.width() || s.height() != g.height() {
        return Err(shape_err!(
            "map {}x{} vs mask {}x{}",
            s.width(),
            s.height(),
            g.width(),
            g.height()
        ));
    }
    let mut tape = Tape::new();
    let sv = tape.constant(s.to_tensor());
    let gv = tape.constant(g.to_tensor());
    let out = f(&mut tape, sv, gv)?;
    tape.value(out).item()
}

pub fn loss_bce(s: &SaliencyMap, g: &GroundTruthMask) -> Result<f64> {
    eval(s, g, bce_term)
}

pub fn loss_iou(s: &SaliencyMap, g: &GroundTruthMask) -> Result<f64> {
    eval(s, g, iou_term)
}

pub fn loss_ssim(s: &SaliencyMap, g: &GroundTruthMask) -> Result<f64> {
    eval(s, g, ssim_term)
}

pub fn loss_total(s: &SaliencyMap, g: &GroundTruthMask) -> Result<f64> {
    eval(s, g, mixed_loss)
}

/// The raw overlap ratio `ΣSG / Σ(S+G-SG)` (1 for perfect overlap); 1 when both maps are empty.
pub fn iou_ratio(s: &SaliencyMap, g: &GroundTruthMask) -> Result<f64> {
    eval(s, g, |t, a, b| match iou_ratio_var(t, a, b)? {
        Some(v) => Ok(v),
        None => Ok(t.constant(crate::tensor::Tensor::scalar(1.0))),
    })
}
