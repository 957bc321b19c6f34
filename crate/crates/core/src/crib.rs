//! Cramér-Rao induced bounds (CRIB) on the squared angular error of the
//! first component, closed forms for unfolded decompositions, and the
//! collinearity-driven unfolding advisor.
//!
//! Bounds are in squared radians and scale linearly with `θ = σ²/λ_1²`.

use crate::error::{invalid, FcpError, Result};
use crate::tensor::{KruskalTensor, UnfoldingRule};
use serde::{Deserialize, Serialize};

/// Default `|c|` below which a mode counts as nearly orthogonal.
pub const ORTHOGONALITY_THRESHOLD: f64 = 0.15;

/// Collinearity values closer than this are treated as equal by the
/// advisor, so estimates that differ only by noise merge like exact ties.
pub const ADVISOR_TIE_TOLERANCE: f64 = 0.01;

/// Per-mode degrees of collinearity plus the noise level and size of the
/// mode carrying the bounded component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollinearityProfile {
    pub c: Vec<f64>,
    pub theta: f64,
    pub i1: usize,
    pub rank: usize,
}

impl CollinearityProfile {
    pub fn new(c: Vec<f64>, theta: f64, i1: usize, rank: usize) -> Result<Self> {
        let p = Self { c, theta, i1, rank };
        p.validate()?;
        Ok(p)
    }

    /// Rank-2 profile with `θ = 1`.
    pub fn rank2(c: Vec<f64>, i1: usize) -> Result<Self> {
        Self::new(c, 1.0, i1, 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c.is_empty() {
            return invalid("collinearity profile is empty");
        }
        if let Some(c) = self.c.iter().find(|c| !(c.abs() <= 1.0)) {
            return invalid(format!("collinearity {c} outside [-1, 1]"));
        }
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return invalid(format!("theta must be positive, got {}", self.theta));
        }
        if self.i1 < 2 {
            return invalid("I1 must be at least 2");
        }
        if self.rank < 2 {
            return invalid("rank must be at least 2");
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.c.len()
    }
}

/// A bound, its dB value and optionally its loss against a baseline bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CribReport {
    pub bound: f64,
    /// `−10·log10(bound)`.
    pub bound_db: f64,
    /// Rule the bound applies to; `None` for the full tensor.
    pub rule: Option<String>,
    /// `−10·log10(baseline / bound)`.
    pub loss_db: Option<f64>,
}

impl CribReport {
    pub fn new(bound: f64, rule: Option<&str>) -> Self {
        Self {
            bound,
            bound_db: -10.0 * bound.log10(),
            rule: rule.map(str::to_owned),
            loss_db: None,
        }
    }

    pub fn with_baseline(mut self, baseline: f64) -> Self {
        self.loss_db = Some(-10.0 * (baseline / self.bound).log10());
        self
    }
}

fn singular(mode: usize, reason: impl Into<String>) -> FcpError {
    FcpError::SingularConfiguration { mode, reason: reason.into() }
}

fn report(bound: f64, rule: Option<&str>) -> Result<CribReport> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(FcpError::Numeric(format!("bound evaluated to {bound}")));
    }
    Ok(CribReport::new(bound, rule))
}

fn require_rank2(p: &CollinearityProfile, order: Option<usize>) -> Result<()> {
    p.validate()?;
    if p.rank != 2 {
        return Err(FcpError::NoClosedForm(format!("closed form is for rank 2, got rank {}", p.rank)));
    }
    if let Some(n) = order {
        if p.order() != n {
            return Err(FcpError::NoClosedForm(format!("closed form is for order {n}, got order {}", p.order())));
        }
    }
    Ok(())
}

fn require_c1_zero(p: &CollinearityProfile) -> Result<()> {
    if p.c[0] != 0.0 {
        return Err(FcpError::NoClosedForm("closed form assumes c_1 = 0".into()));
    }
    Ok(())
}

fn one_minus(x: f64, mode: usize) -> Result<f64> {
    let d = 1.0 - x;
    if d == 0.0 {
        return Err(singular(mode, "collinearity product equals one"));
    }
    Ok(d)
}

/// Rank-2 CRIB for arbitrary order, `c_n = a_1^(n)ᵀ a_2^(n)`.
///
/// With `h = ∏_{n≥2} c_n`, `h_n = ∏_{k≥2, k≠n} c_k`, `d_n = c_n² − h_n²c_1²`,
/// `y = −c_1 Σ h_n²(1−c_n²)/d_n` and `z = Σ (1−c_n²)/d_n`:
///
/// `θ [ (I_1−1)/(1−h²) + (1−c_1²)h²(y² + z − h²z(z+1)) /
///      ((1−h²)((1 − c_1y − h²(z+1))² − h²(y + c_1z)²)) ]`.
///
/// When `c_1 = 0` the correction is evaluated through
/// `w = Σ (1−c_n²)h_n² = h²z`, which stays finite when some `c_n = 0`.
pub fn crib_rank2_general(p: &CollinearityProfile) -> Result<CribReport> {
    require_rank2(p, None)?;
    if p.order() < 2 {
        return Err(FcpError::NoClosedForm("order must be at least 2".into()));
    }
    let c = &p.c;
    let c1 = c[0];
    let i1 = p.i1 as f64;
    let rest = &c[1..];
    let h: f64 = rest.iter().product();
    let h2 = h * h;
    if h2 >= 1.0 {
        return Err(singular(2, "|h| = 1: all later modes fully collinear"));
    }
    let lead = (i1 - 1.0) / (1.0 - h2);
    if c1.abs() == 1.0 {
        return report(p.theta * lead, None);
    }
    let hn2 = |n: usize| -> f64 {
        rest.iter()
            .enumerate()
            .filter(|&(k, _)| k != n)
            .map(|(_, x)| x * x)
            .product()
    };
    let correction = if c1 == 0.0 {
        let w: f64 = rest.iter().enumerate().map(|(n, cn)| (1.0 - cn * cn) * hn2(n)).sum();
        let den = (1.0 - h2) * (1.0 - w - h2);
        if den == 0.0 {
            return Err(singular(1, "vanishing denominator"));
        }
        w / den
    } else {
        if let Some(n) = rest.iter().position(|&x| x == 0.0) {
            return Err(singular(n + 2, "c_n = 0 while c_1 != 0"));
        }
        let (mut y, mut z) = (0.0, 0.0);
        for (n, cn) in rest.iter().enumerate() {
            let h2n = hn2(n);
            let d = cn * cn - h2n * c1 * c1;
            if d == 0.0 {
                return Err(singular(n + 2, "c_n² = h_n²c_1²"));
            }
            y -= c1 * h2n * (1.0 - cn * cn) / d;
            z += (1.0 - cn * cn) / d;
        }
        let a = 1.0 - c1 * y - h2 * (z + 1.0);
        let b = y + c1 * z;
        let den = (1.0 - h2) * (a * a - h2 * b * b);
        if den == 0.0 {
            return Err(singular(1, "vanishing denominator"));
        }
        (1.0 - c1 * c1) * h2 * (y * y + z - h2 * z * (z + 1.0)) / den
    };
    report(p.theta * (lead + correction), None)
}

/// Order-4 rank-2 bound for the full tensor, `c_1 = 0`.
pub fn crib4_full(p: &CollinearityProfile) -> Result<CribReport> {
    require_rank2(p, Some(4))?;
    require_c1_zero(p)?;
    let (c2, c3, c4) = (p.c[1] * p.c[1], p.c[2] * p.c[2], p.c[3] * p.c[3]);
    let h2 = c2 * c3 * c4;
    let s = c2 * c3 + c2 * c4 + c3 * c4;
    let scale = p.theta / one_minus(h2, 2)?;
    let den = 1.0 + 2.0 * h2 - s;
    if den == 0.0 {
        return Err(singular(2, "vanishing denominator"));
    }
    report(scale * (p.i1 as f64 - 1.0 + (s - 3.0 * h2) / den), None)
}

/// Order-4 rank-2 bound through `[1,2,(3,4)]`, `c_1 = 0`.
pub fn crib4_unfold_34(p: &CollinearityProfile) -> Result<CribReport> {
    require_rank2(p, Some(4))?;
    require_c1_zero(p)?;
    let (c2, c3, c4) = (p.c[1] * p.c[1], p.c[2] * p.c[2], p.c[3] * p.c[3]);
    let scale = p.theta / one_minus(c2 * c3 * c4, 2)?;
    let v = p.i1 as f64 - 3.0 + 1.0 / one_minus(c2, 2)? + 1.0 / one_minus(c3 * c4, 3)?;
    report(scale * v, Some("1,2,(3,4)"))
}

/// Order-4 rank-2 bound through `[1,(2,3),4]`, `c_1 = 0`.
pub fn crib4_unfold_23(p: &CollinearityProfile) -> Result<CribReport> {
    require_rank2(p, Some(4))?;
    require_c1_zero(p)?;
    let (c2, c3, c4) = (p.c[1] * p.c[1], p.c[2] * p.c[2], p.c[3] * p.c[3]);
    let scale = p.theta / one_minus(c2 * c3 * c4, 2)?;
    let v = p.i1 as f64 - 3.0 + 1.0 / one_minus(c2 * c3, 2)? + 1.0 / one_minus(c4, 4)?;
    report(scale * v, Some("1,(2,3),4"))
}

/// Rank-`R` order-4 bounds when `c_1 = c_3 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthomodeBounds {
    pub full: CribReport,
    pub unfold_34: CribReport,
    pub unfold_23: CribReport,
}

pub fn crib4_orthomode_rank_r(c2: f64, c4: f64, theta: f64, i1: usize, rank: usize) -> Result<OrthomodeBounds> {
    CollinearityProfile::new(vec![0.0, c2, 0.0, c4], theta, i1, rank)?;
    let base = i1 as f64 - rank as f64;
    let rm1 = rank as f64 - 1.0;
    let f = |x: f64, mode: usize| -> Result<f64> { Ok(theta * (base + rm1 / one_minus(x, mode)?)) };
    let full = f(c2 * c2 * c4 * c4, 2)?;
    let u34 = f(c2 * c2, 2)?;
    let u23 = f(c4 * c4, 4)?;
    Ok(OrthomodeBounds {
        full: report(full, None)?,
        unfold_34: report(u34, Some("1,2,(3,4)"))?.with_baseline(full),
        unfold_23: report(u23, Some("1,(2,3),4"))?.with_baseline(full),
    })
}

fn crib5_parts(p: &CollinearityProfile) -> Result<([f64; 4], f64)> {
    require_rank2(p, Some(5))?;
    require_c1_zero(p)?;
    let s = [p.c[1] * p.c[1], p.c[2] * p.c[2], p.c[3] * p.c[3], p.c[4] * p.c[4]];
    let h2 = s.iter().product::<f64>();
    Ok((s, h2))
}

/// Order-5 rank-2 bound for the full tensor, `c_1 = 0`.
pub fn crib5_full(p: &CollinearityProfile) -> Result<CribReport> {
    let ([a, b, c, d], h2) = crib5_parts(p)?;
    let zeta = a * b * c + a * b * d + a * c * d + b * c * d;
    let den = 1.0 + 3.0 * h2 - zeta;
    if den == 0.0 {
        return Err(singular(2, "vanishing denominator"));
    }
    let v = p.i1 as f64 - 1.0 + (zeta - 4.0 * h2) / den;
    report(p.theta / one_minus(h2, 2)? * v, None)
}

/// Order-5 rank-2 bound through `[1,2,(3,4,5)]`, `c_1 = 0`.
pub fn crib5_unfold_345(p: &CollinearityProfile) -> Result<CribReport> {
    let ([a, b, c, d], h2) = crib5_parts(p)?;
    let v = p.i1 as f64 - 3.0 + 1.0 / one_minus(a, 2)? + 1.0 / one_minus(b * c * d, 3)?;
    report(p.theta / one_minus(h2, 2)? * v, Some("1,2,(3,4,5)"))
}

/// Order-5 rank-2 bound through `[1,(2,3),(4,5)]`, `c_1 = 0`.
pub fn crib5_unfold_23_45(p: &CollinearityProfile) -> Result<CribReport> {
    let ([a, b, c, d], h2) = crib5_parts(p)?;
    let v = p.i1 as f64 - 3.0 + 1.0 / one_minus(a * b, 2)? + 1.0 / one_minus(c * d, 4)?;
    report(p.theta / one_minus(h2, 2)? * v, Some("1,(2,3),(4,5)"))
}

/// Order-6 rank-2 bounds with a common collinearity `c` in every mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crib6Family {
    pub full: CribReport,
    /// `[1,2,3,4,(5,6)]`, `[1,2,3,(4,5,6)]`, `[1,2,(3,4,5,6)]`,
    /// `[1,(2,3),(4,5,6)]`, `[1,2,(3,4),(5,6)]`, each with its loss.
    pub unfolded: [CribReport; 5],
}

pub const CRIB6_RULES: [&str; 5] = ["1,2,3,4,(5,6)", "1,2,3,(4,5,6)", "1,2,(3,4,5,6)", "1,(2,3),(4,5,6)", "1,2,(3,4),(5,6)"];

pub fn crib6_family(c: f64, theta: f64, i1: usize) -> Result<Crib6Family> {
    CollinearityProfile::new(vec![c; 6], theta, i1, 2)?;
    if c.abs() == 1.0 {
        return Err(singular(1, "|c| = 1"));
    }
    let p = |k: i32| c.powi(k);
    let d = (1.0 - p(10)) * (1.0 - p(8));
    let b = (i1 as f64 - 1.0) / (1.0 - p(10));
    let full = b + 5.0 * p(8) * (4.0 * p(6) + 3.0 * p(4) + 2.0 * p(2) + 1.0)
        / (d * (1.0 + 3.0 * p(2) + p(4)) * (1.0 + p(2) + 6.0 * p(4) + p(6) + p(8)));
    let l1 = b + p(6) * (6.0 * p(8) + 11.0 * p(6) + 7.0 * p(4) + 5.0 * p(2) + 1.0)
        / (d * (1.0 + p(2)) * (1.0 + 2.0 * p(2) + 6.0 * p(4) + 2.0 * p(6) + p(8)));
    let l2 = b + p(4) * (4.0 * p(6) + 3.0 * p(4) + 2.0 * p(2) + 1.0) / (d * (1.0 + 3.0 * p(2) + p(4)));
    let l3 = b + p(2) * (2.0 * p(6) + p(4) + p(2) + 1.0) / d;
    let l4 = b + p(4) * (1.0 + p(4)) * (2.0 * p(4) + 2.0 * p(2) + 1.0) / (d * (1.0 + p(2) + p(4)));
    let l5 = b + p(6) * (2.0 * p(6) + 2.0 * p(4) + 2.0 * p(2) + 1.0) * (p(6) + 4.0 * p(4) + 3.0 * p(2) + 2.0)
        / (d * (1.0 + p(2) + p(4)) * (p(8) + 3.0 * p(6) + 6.0 * p(4) + 3.0 * p(2) + 1.0));
    let full = theta * full;
    let values = [l1, l2, l3, l4, l5];
    let mut unfolded = Vec::with_capacity(5);
    for (v, rule) in values.iter().zip(CRIB6_RULES) {
        unfolded.push(report(theta * v, Some(rule))?.with_baseline(full));
    }
    Ok(Crib6Family {
        full: report(full, None)?,
        unfolded: unfolded.try_into().expect("five rules"),
    })
}

/// Rank-`R` bound when the first two factors have orthogonal columns:
/// `θ(I_1 − R + Σ_{r≥2} 1/(1 − γ_r²))` with `γ_r = ∏_{n≥3} a_1^(n)ᵀ a_r^(n)`.
/// The same value holds for the `[1,2,(3:N)]` unfolding.
pub fn crib_ortho_two_modes(gamma: &[f64], theta: f64, i1: usize, rank: usize) -> Result<CribReport> {
    if rank < 2 || gamma.len() != rank - 1 {
        return invalid(format!("expected {} products gamma_2..gamma_R", rank.saturating_sub(1)));
    }
    if !(theta > 0.0) {
        return invalid("theta must be positive");
    }
    let mut s = i1 as f64 - rank as f64;
    for (r, g) in gamma.iter().enumerate() {
        if !(g.abs() <= 1.0) {
            return invalid(format!("gamma {g} outside [-1, 1]"));
        }
        s += 1.0 / one_minus(g * g, r + 2)?;
    }
    report(theta * s, None)
}

/// Rank-2 bound on `a_1^(1)` after unfolding with `rule`: a merged group
/// behaves as one mode whose collinearity is the product of its members'.
/// Mode 1 must stay unmerged.
pub fn crib_rank2_unfolded(p: &CollinearityProfile, rule: &UnfoldingRule) -> Result<CribReport> {
    require_rank2(p, None)?;
    rule.validate(p.order())?;
    let own = rule
        .groups()
        .iter()
        .position(|g| g.contains(&0))
        .expect("validated rule covers mode 1");
    if rule.groups()[own].len() != 1 {
        return Err(FcpError::NoClosedForm("mode 1 is merged; its bound is not defined by this rule".into()));
    }
    let mut c = vec![p.c[0]];
    c.extend(
        rule.groups()
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != own)
            .map(|(_, g)| g.iter().map(|&k| p.c[k]).product::<f64>()),
    );
    if c.len() < 2 {
        return invalid("the unfolded tensor needs at least two modes");
    }
    let merged = CollinearityProfile::new(c, p.theta, p.i1, 2)?;
    let full = crib_rank2_general(&merged)?;
    Ok(CribReport::new(full.bound, Some(&rule.to_string())))
}

/// Every closed-form bound available for `p`: the full tensor first, then
/// the unfolded variants with their loss against it.
///
/// * order 6, rank 2, one common `c`: the order-6 family;
/// * order 5 or 4, rank 2, `c_1 = 0`: the explicit order-5/order-4 forms;
/// * order 4, any rank, `c_1 = c_3 = 0`: the orthogonal-mode forms;
/// * rank 2 otherwise: the general form, plus `extra_rules` via merged
///   coefficients.
pub fn crib_table(p: &CollinearityProfile, extra_rules: &[UnfoldingRule]) -> Result<Vec<CribReport>> {
    p.validate()?;
    let n = p.order();
    let mut out = if n == 6 && p.rank == 2 && p.c.iter().all(|&x| x == p.c[0]) {
        let f = crib6_family(p.c[0], p.theta, p.i1)?;
        let mut v = vec![f.full];
        v.extend(f.unfolded);
        v
    } else if p.rank == 2 && p.c[0] == 0.0 && n == 5 {
        vec![crib5_full(p)?, crib5_unfold_345(p)?, crib5_unfold_23_45(p)?]
    } else if p.rank == 2 && p.c[0] == 0.0 && n == 4 {
        vec![crib4_full(p)?, crib4_unfold_34(p)?, crib4_unfold_23(p)?]
    } else if n == 4 && p.c[0] == 0.0 && p.c[2] == 0.0 {
        let b = crib4_orthomode_rank_r(p.c[1], p.c[3], p.theta, p.i1, p.rank)?;
        vec![b.full, b.unfold_34, b.unfold_23]
    } else if p.rank == 2 {
        vec![crib_rank2_general(p)?]
    } else {
        return Err(FcpError::NoClosedForm(format!(
            "no closed-form bound for order {n}, rank {} with c = {:?}",
            p.rank, p.c
        )));
    };
    if p.rank == 2 {
        for rule in extra_rules {
            out.push(crib_rank2_unfolded(p, rule)?);
        }
    } else if !extra_rules.is_empty() {
        return Err(FcpError::NoClosedForm("bounds for arbitrary rules need rank 2".into()));
    }
    let base = out[0].bound;
    for r in out.iter_mut().skip(1) {
        *r = r.clone().with_baseline(base);
    }
    Ok(out)
}

/// Average absolute cross-correlation of the columns of every factor,
/// `c_n = Σ_{r≠s} |a_rᵀa_s| / (R(R−1))`, on unit-normalized columns.
///
/// The noise level is unknown here, so the profile carries `θ = 1`.
pub fn estimate_collinearity(k: &KruskalTensor) -> Result<CollinearityProfile> {
    let r = k.rank();
    if r < 2 {
        return invalid("collinearity is undefined for rank one");
    }
    let mut c = Vec::with_capacity(k.order());
    for (n, f) in k.factors().iter().enumerate() {
        let mut unit = f.clone();
        for (j, mut col) in unit.column_iter_mut().enumerate() {
            let norm = col.norm();
            if !(norm > 0.0) {
                return Err(FcpError::DegenerateComponent(format!("column {} of factor {} is zero", j + 1, n + 1)));
            }
            col /= norm;
        }
        let g = unit.tr_mul(&unit);
        let mut s = 0.0;
        for a in 0..r {
            for b in 0..r {
                if a != b {
                    s += g[(a, b)].abs();
                }
            }
        }
        c.push((s / (r * (r - 1)) as f64).min(1.0));
    }
    CollinearityProfile::new(c, 1.0, k.shape()[0].max(2), r)
}

/// Recommends an order-`target` unfolding from per-mode collinearity.
///
/// Up to `target − 1` nearly orthogonal modes (`|c| < threshold`, least
/// collinear first, lower index on ties) stay unmerged. The rest are merged
/// greedily: the two groups with the largest `|c|` are joined and the new
/// group takes the product of their coefficients. Among equal coefficients
/// (within [`ADVISOR_TIE_TOLERANCE`]) the higher mode index is merged first,
/// so pairs form from the back.
/// Group with the largest coefficient. Coefficients within
/// [`ADVISOR_TIE_TOLERANCE`] of the largest count as tied; ties go to the
/// group holding the highest mode index.
fn pick_largest(groups: &[(Vec<usize>, f64)], skip: Option<usize>) -> usize {
    let live = || (0..groups.len()).filter(|&g| Some(g) != skip);
    let top = live().map(|g| groups[g].1).fold(f64::NEG_INFINITY, f64::max);
    live()
        .filter(|&g| groups[g].1 >= top - ADVISOR_TIE_TOLERANCE)
        .max_by_key(|&g| *groups[g].0.iter().max().expect("nonempty"))
        .expect("at least one group")
}

pub fn advise_unfolding(c: &[f64], target: usize, threshold: f64) -> Result<UnfoldingRule> {
    let n = c.len();
    if target < 2 || target >= n {
        return invalid(format!("target order {target} must satisfy 2 <= M < N = {n}"));
    }
    if let Some(x) = c.iter().find(|x| !(x.abs() <= 1.0)) {
        return invalid(format!("collinearity {x} outside [-1, 1]"));
    }
    let mut near: Vec<usize> = (0..n).filter(|&k| c[k].abs() < threshold).collect();
    near.sort_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs()).then(a.cmp(&b)));
    near.truncate(target - 1);
    let kept = near.len();

    // (members, |coefficient|)
    let mut groups: Vec<(Vec<usize>, f64)> = (0..n)
        .filter(|k| !near.contains(k))
        .map(|k| (vec![k], c[k].abs()))
        .collect();
    while groups.len() > target - kept {
        let first = pick_largest(&groups, None);
        let second = pick_largest(&groups, Some(first));
        let (i, j) = (first.min(second), first.max(second));
        let (mj, cj) = groups.remove(j);
        let gi = &mut groups[i];
        gi.0.extend(mj);
        gi.1 *= cj;
    }

    let mut out: Vec<Vec<usize>> = near.iter().map(|&k| vec![k]).collect();
    out.extend(groups.into_iter().map(|(mut m, _)| {
        m.sort_unstable();
        m
    }));
    out.sort_by_key(|g| g[0]);
    UnfoldingRule::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    fn general(c: &[f64], i1: usize) -> f64 {
        crib_rank2_general(&CollinearityProfile::rank2(c.to_vec(), i1).unwrap()).unwrap().bound
    }

    #[test]
    fn general_orthogonal_is_i1_minus_one() {
        assert!(close(general(&[0.0, 0.0, 0.0, 0.0], 7), 6.0, 1e-15));
        // modes 1 and 2 orthogonal: only the remaining product matters
        assert!(close(general(&[0.0, 0.0, 0.5], 7), 5.0 + 1.0 / 0.75, 1e-15));
    }

    #[test]
    fn general_fully_collinear_first_mode() {
        for c1 in [1.0, -1.0] {
            let h: f64 = 0.5 * 0.6 * 0.7;
            let expect = 9.0 / (1.0 - h * h);
            assert!(close(general(&[c1, 0.5, 0.6, 0.7], 10), expect, 1e-14));
        }
    }

    #[test]
    fn general_matches_fisher_information_values() {
        // independent numeric Fisher-information evaluations, θ = 1
        let cases: [(&[f64], usize, f64); 6] = [
            (&[0.4, 0.5, 0.6, 0.7], 10, 9.777587622646006),
            (&[0.3, -0.5, 0.8, 0.6], 10, 10.0517661009838),
            (&[0.7, 0.6, 0.5], 10, 10.874542124542),
            (&[0.2, 0.9, 0.4, 0.6, 0.5], 10, 9.2427312046217),
            (&[0.0, 0.5, 0.5, 0.5], 10, 9.312169312169312),
            (&[0.0, 0.3, 0.6, 0.9], 10, 9.74095871847836),
        ];
        for (c, i1, v) in cases {
            assert!(close(general(c, i1), v, 1e-10), "{c:?}: {} vs {v}", general(c, i1));
        }
    }

    #[test]
    fn general_singular_configuration_names_mode() {
        let p = CollinearityProfile::rank2(vec![0.5, 0.0, 0.6, 0.7], 10).unwrap();
        match crib_rank2_general(&p) {
            Err(FcpError::SingularConfiguration { mode, .. }) => assert_eq!(mode, 2),
            other => panic!("{other:?}"),
        }
        let p = CollinearityProfile::rank2(vec![0.0, 1.0, -1.0], 10).unwrap();
        assert!(matches!(crib_rank2_general(&p), Err(FcpError::SingularConfiguration { .. })));
    }

    #[test]
    fn order4_cross_formula() {
        let p = CollinearityProfile::rank2(vec![0.0, 0.5, 0.5, 0.5], 5).unwrap();
        let a = crib4_full(&p).unwrap().bound;
        let b = crib_rank2_general(&p).unwrap().bound;
        assert!(close(a, b, 1e-12));
    }

    #[test]
    fn order4_orthogonal_second_mode_is_lossless() {
        let p = CollinearityProfile::rank2(vec![0.0, 0.0, 0.7, 0.9], 10).unwrap();
        let expect = 10.0 - 2.0 + 1.0 / (1.0 - 0.49 * 0.81);
        assert!(close(crib4_full(&p).unwrap().bound, expect, 1e-14));
        assert!(close(crib4_unfold_34(&p).unwrap().bound, expect, 1e-14));
    }

    #[test]
    fn order4_needs_c1_zero_and_rank2() {
        let p = CollinearityProfile::rank2(vec![0.1, 0.5, 0.5, 0.5], 5).unwrap();
        assert!(matches!(crib4_full(&p), Err(FcpError::NoClosedForm(_))));
        let p = CollinearityProfile::new(vec![0.0, 0.5, 0.5, 0.5], 1.0, 5, 3).unwrap();
        assert!(matches!(crib4_unfold_34(&p), Err(FcpError::NoClosedForm(_))));
    }

    #[test]
    fn orthomode_values() {
        let b = crib4_orthomode_rank_r(0.2, 0.8, 1.0, 10, 10).unwrap();
        assert!(b.unfold_34.bound < b.unfold_23.bound);
        assert!(close(b.unfold_34.bound, 9.0 / 0.96, 1e-14));
        let s = crib4_orthomode_rank_r(0.5, 0.5, 1.0, 10, 4).unwrap();
        assert_eq!(s.unfold_34.bound, s.unfold_23.bound);
        assert!(crib4_orthomode_rank_r(1.0, 0.5, 1.0, 10, 4).is_err());
    }

    #[test]
    fn order5_cross_formula_and_identity_at_c2_zero() {
        let p = CollinearityProfile::rank2(vec![0.0, 0.5, 0.5, 0.5, 0.5], 10).unwrap();
        assert!(close(crib5_full(&p).unwrap().bound, crib_rank2_general(&p).unwrap().bound, 1e-12));
        let q = CollinearityProfile::rank2(vec![0.0, 0.0, 0.6, 0.7, 0.8], 10).unwrap();
        assert!(close(crib5_full(&q).unwrap().bound, crib5_unfold_345(&q).unwrap().bound, 1e-14));
        assert!(crib5_unfold_23_45(&q).unwrap().bound > crib5_unfold_345(&q).unwrap().bound);
    }

    #[test]
    fn order6_family_matches_general_and_fisher() {
        let f = crib6_family(0.9, 1.0, 10).unwrap();
        assert!(close(f.full.bound, 15.2392306759, 1e-10));
        assert!(close(f.unfolded[0].bound, 15.5949465744, 1e-10));
        assert!(close(f.unfolded[2].bound, 21.5239044953, 1e-10));
        let f = crib6_family(0.7, 1.0, 10).unwrap();
        assert!(close(f.unfolded[3].bound, 9.723976728087216, 1e-12));
        let c = 0.7f64;
        let f = crib6_family(c, 1.0, 10).unwrap();
        // each unfolding is a lower-order rank-2 problem with merged coefficients
        let merged: [Vec<f64>; 5] = [
            vec![c, c, c, c, c * c],
            vec![c, c, c, c.powi(3)],
            vec![c, c, c.powi(4)],
            vec![c, c * c, c.powi(3)],
            vec![c, c, c * c, c * c],
        ];
        for k in [0, 2, 4] {
            assert!(close(f.unfolded[k].bound, general(&merged[k], 10), 1e-10), "rule {k}");
        }
        // the other two sit on c_n² = h_n²c_1², a removable singularity of
        // the general form; compare with the two-sided limit instead
        for k in [1, 3] {
            let p = CollinearityProfile::rank2(merged[k].clone(), 10).unwrap();
            assert!(matches!(crib_rank2_general(&p), Err(FcpError::SingularConfiguration { .. })));
            let last = merged[k].len() - 1;
            let limit = [1.0 + 1e-5, 1.0 - 1e-5]
                .iter()
                .map(|s| {
                    let mut m = merged[k].clone();
                    m[last] *= s;
                    general(&m, 10)
                })
                .sum::<f64>()
                / 2.0;
            assert!(close(f.unfolded[k].bound, limit, 1e-7), "rule {k}: {} vs {limit}", f.unfolded[k].bound);
        }
        assert!(close(f.full.bound, general(&[c; 6], 10), 1e-10));
    }

    #[test]
    fn order6_chain_and_zero() {
        for k in 1..10 {
            let f = crib6_family(k as f64 / 10.0, 1.0, 20).unwrap();
            let [l1, l2, l3, l4, l5] = f.unfolded.each_ref().map(|r| r.bound);
            assert!(f.full.bound < l1 && l1 < l5 && l5 < l2 && l2 < l4 && l4 < l3);
        }
        let f = crib6_family(0.0, 1.0, 20).unwrap();
        for r in &f.unfolded {
            assert_eq!(r.bound, 19.0);
            assert_eq!(r.loss_db, Some(0.0));
        }
    }

    #[test]
    fn ortho_two_modes_values() {
        let r = crib_ortho_two_modes(&[0.5, 0.5], 1.0, 10, 3).unwrap();
        assert!(close(r.bound, 7.0 + 2.0 / 0.75, 1e-15));
        let r = crib_ortho_two_modes(&[0.0, 0.0, 0.0], 2.0, 10, 4).unwrap();
        assert_eq!(r.bound, 18.0);
        let g: f64 = 0.6 * 0.7;
        let a = crib_ortho_two_modes(&[g], 1.0, 8, 2).unwrap().bound;
        assert!(close(a, general(&[0.0, 0.0, 0.6, 0.7], 8), 1e-12));
    }

    #[test]
    fn report_db_and_loss() {
        let r = CribReport::new(0.01, None).with_baseline(0.005);
        assert!(close(r.bound_db, 20.0, 1e-12));
        assert!(close(r.loss_db.unwrap(), 10.0 * 2f64.log10(), 1e-12));
    }

    #[test]
    fn advisor_examples() {
        let t = ORTHOGONALITY_THRESHOLD;
        assert_eq!(advise_unfolding(&[0.1, 0.1, 0.9, 0.9], 3, t).unwrap().to_string(), "1,2,(3,4)");
        assert_eq!(advise_unfolding(&[0.1, 0.7, 0.7, 0.7, 0.8], 3, t).unwrap().to_string(), "1,(2,3),(4,5)");
        assert_eq!(advise_unfolding(&[0.5; 6], 4, t).unwrap().to_string(), "1,2,(3,4),(5,6)");
        assert_eq!(advise_unfolding(&[0.1, 0.1, 0.1, 0.1, 0.1, 0.9], 3, t).unwrap().to_string(), "1,2,(3,4,5,6)");
        assert!(advise_unfolding(&[0.1, 0.2], 2, t).is_err());
        // noisy estimates of (0.1, 0.7, 0.7, 0.7, 0.8)
        let noisy = [0.1018, 0.70006, 0.6989, 0.6990, 0.8009];
        assert_eq!(advise_unfolding(&noisy, 3, t).unwrap().to_string(), "1,(2,3),(4,5)");
        // a clear gap is not a tie
        assert_eq!(advise_unfolding(&[0.1, 0.75, 0.7, 0.7, 0.8], 3, t).unwrap().to_string(), "1,(2,5),(3,4)");
    }

    #[test]
    fn collinearity_estimates() {
        use nalgebra::DMatrix;
        let eye = DMatrix::<f64>::identity(3, 3);
        let same = DMatrix::from_element(4, 3, 0.5);
        let k = KruskalTensor::new(vec![1.0; 3], vec![eye, same]).unwrap();
        let p = estimate_collinearity(&k).unwrap();
        assert_eq!(p.c[0], 0.0);
        assert!(close(p.c[1], 1.0, 1e-15));
    }

    #[test]
    fn merged_coefficients_reproduce_explicit_unfoldings() {
        let p4 = CollinearityProfile::new(vec![0.0, 0.3, 0.6, 0.9], 0.5, 10, 2).unwrap();
        let a = crib_rank2_unfolded(&p4, &"1,2,(3,4)".parse().unwrap()).unwrap().bound;
        assert!((a - crib4_unfold_34(&p4).unwrap().bound).abs() < 1e-12 * a);
        let b = crib_rank2_unfolded(&p4, &"1,(2,3),4".parse().unwrap()).unwrap().bound;
        assert!((b - crib4_unfold_23(&p4).unwrap().bound).abs() < 1e-12 * b);
        let p5 = CollinearityProfile::new(vec![0.0, 0.2, 0.9, 0.4, 0.6], 1.0, 7, 2).unwrap();
        let c = crib_rank2_unfolded(&p5, &"1,(2,3),(4,5)".parse().unwrap()).unwrap().bound;
        assert!((c - crib5_unfold_23_45(&p5).unwrap().bound).abs() < 1e-12 * c);
        let f = crib6_family(0.6, 1.0, 10).unwrap();
        let p6 = CollinearityProfile::new(vec![0.6; 6], 1.0, 10, 2).unwrap();
        let l1 = crib_rank2_unfolded(&p6, &CRIB6_RULES[0].parse().unwrap()).unwrap().bound;
        assert!((l1 - f.unfolded[0].bound).abs() < 1e-10 * l1);
        assert!(crib_rank2_unfolded(&p6, &"(1,2),3,4,5,6".parse().unwrap()).is_err());
    }

    #[test]
    fn crib_table_dispatch() {
        let p6 = CollinearityProfile::new(vec![0.9; 6], 1.0, 20, 2).unwrap();
        let t = crib_table(&p6, &[]).unwrap();
        assert_eq!(t.len(), 6);
        assert!(t[0].loss_db.is_none() && t[1..].iter().all(|r| r.loss_db.unwrap() > 0.0));
        let p0 = CollinearityProfile::new(vec![0.0; 6], 1.0, 20, 2).unwrap();
        let t0 = crib_table(&p0, &[]).unwrap();
        assert!(t0.iter().all(|r| (r.bound - 19.0).abs() < 1e-12));
        let p4 = CollinearityProfile::new(vec![0.0, 0.3, 0.0, 0.5], 1.0, 10, 4).unwrap();
        assert_eq!(crib_table(&p4, &[]).unwrap().len(), 3);
        let bad = CollinearityProfile::new(vec![0.2, 0.3, 0.4], 1.0, 10, 3).unwrap();
        assert!(matches!(crib_table(&bad, &[]), Err(FcpError::NoClosedForm(_))));
        let p3 = CollinearityProfile::new(vec![0.2, 0.3, 0.4, 0.5], 1.0, 10, 2).unwrap();
        assert_eq!(crib_table(&p3, &["1,2,(3,4)".parse().unwrap()]).unwrap().len(), 2);
    }
}
