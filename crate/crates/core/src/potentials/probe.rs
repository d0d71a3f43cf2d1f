use nalgebra::DMatrix;

use super::FiniteSumObjective;

/// Step for central-difference Hessians.
const FD_STEP: f64 = 1e-5;

/// Worst-case finite-difference estimates over a probe set.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    pub points: usize,
    /// Largest spectral norm of the finite-difference Hessian of `F`.
    pub max_lipschitz_full: f64,
    /// Largest spectral norm over every component Hessian.
    pub max_lipschitz_components: f64,
    /// `min_x <∇F(x), x> - (M|x|^2 - b)`, present when `(M, b)` is attached.
    pub min_dissipativity_slack: Option<f64>,
    /// Smallest `<∇F(x), x> / |x|^2` among probes with `|x| >= 1`. Reported as an
    /// estimate only.
    pub min_radial_ratio: Option<f64>,
}

/// Uniform tensor grid with `per_axis` points per coordinate on `[lo, hi]`.
pub fn grid_points(lo: f64, hi: f64, per_axis: usize, dim: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = if per_axis <= 1 {
        vec![0.5 * (lo + hi)]
    } else {
        (0..per_axis)
            .map(|k| lo + (hi - lo) * k as f64 / (per_axis - 1) as f64)
            .collect()
    };
    let mut points = vec![Vec::with_capacity(dim)];
    for _ in 0..dim {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    points
}

fn spectral_norm(mut h: DMatrix<f64>) -> f64 {
    let ht = h.transpose();
    h = (h + ht) * 0.5;
    h.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

/// Central-difference Hessian of `g` where `grad(x, out)` writes the gradient.
fn fd_hessian(dim: usize, x: &[f64], mut grad: impl FnMut(&[f64], &mut [f64])) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(dim, dim);
    let mut xp = x.to_vec();
    let mut gp = vec![0.0; dim];
    let mut gm = vec![0.0; dim];
    for j in 0..dim {
        xp[j] = x[j] + FD_STEP;
        grad(&xp, &mut gp);
        xp[j] = x[j] - FD_STEP;
        grad(&xp, &mut gm);
        xp[j] = x[j];
        for i in 0..dim {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * FD_STEP);
        }
    }
    h
}

/// `(max |∇²F|, max_i |∇²f_i|)` over the grid.
pub(crate) fn max_hessian_norm(obj: &FiniteSumObjective, grid: &[Vec<f64>]) -> (f64, f64) {
    let d = obj.dim();
    let n = obj.n();
    let mut full = 0.0_f64;
    let mut comp = 0.0_f64;
    let mut scratch = vec![0.0; d];
    for x in grid {
        let h = fd_hessian(d, x, |p, out| {
            // Points off the finite domain only arise from user grids; treat as zero.
            if obj.full_gradient_into(p, out, &mut scratch).is_err() {
                out.fill(0.0);
            }
        });
        full = full.max(spectral_norm(h));
        for i in 0..n {
            let h = fd_hessian(d, x, |p, out| obj.component_gradient(i, p, out));
            comp = comp.max(spectral_norm(h));
        }
    }
    (full, comp)
}

/// Validates smoothness and dissipativity numerically on `grid`. Never fails; the
/// report carries whatever could be computed.
pub fn probe_regularity(obj: &FiniteSumObjective, grid: &[Vec<f64>]) -> RegularityReport {
    let (max_full, max_comp) = max_hessian_norm(obj, grid);
    let diss = obj.dissipativity();
    let mut slack: Option<f64> = None;
    let mut ratio: Option<f64> = None;
    for x in grid {
        let Ok(g) = obj.full_gradient(x) else { continue };
        let inner: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
        let sq: f64 = x.iter().map(|v| v * v).sum();
        if let Some(dp) = diss {
            let s = inner - (dp.m.value * sq - dp.b.value);
            slack = Some(slack.map_or(s, |v| v.min(s)));
        }
        if sq >= 1.0 {
            let r = inner / sq;
            ratio = Some(ratio.map_or(r, |v| v.min(r)));
        }
    }
    RegularityReport {
        points: grid.len(),
        max_lipschitz_full: max_full,
        max_lipschitz_components: max_comp,
        min_dissipativity_slack: slack,
        min_radial_ratio: ratio,
    }
}
