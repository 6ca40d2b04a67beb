//! Slow, direct reference implementations used to check the metrics.
//! Nothing here calls into the library's metric code.
#![allow(dead_code)]

pub fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for a in (0..shape.len()).rev() {
        idx[a] = flat % shape[a];
        flat /= shape[a];
    }
    idx
}

fn ravel(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i)
}

/// (tp, fp, tn, fn)
pub fn counts(r: &[u8], p: &[u8]) -> (f64, f64, f64, f64) {
    let mut c = (0.0, 0.0, 0.0, 0.0);
    for (&a, &b) in r.iter().zip(p) {
        match (a != 0, b != 0) {
            (true, true) => c.0 += 1.0,
            (false, true) => c.1 += 1.0,
            (false, false) => c.2 += 1.0,
            (true, false) => c.3 += 1.0,
        }
    }
    c
}

/// Rand and adjusted Rand index by visiting every voxel pair.
pub fn pair_indices(r: &[u8], p: &[u8]) -> (f64, f64) {
    let n = r.len();
    let (mut both, mut only_r, mut only_p, mut neither) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        for j in i + 1..n {
            match (r[i] == r[j], p[i] == p[j]) {
                (true, true) => both += 1.0,
                (true, false) => only_r += 1.0,
                (false, true) => only_p += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    let total = both + only_r + only_p + neither;
    let ri = (both + neither) / total;
    let den = (both + only_r) * (only_r + neither) + (both + only_p) * (only_p + neither);
    let ari = 2.0 * (both * neither - only_r * only_p) / den;
    (ri, ari)
}

/// Mutual information and variation of information (bits) from the joint
/// voxel histogram.
pub fn information(r: &[u8], p: &[u8]) -> (f64, f64) {
    let n = r.len() as f64;
    let mut joint = [[0.0f64; 2]; 2];
    for (&a, &b) in r.iter().zip(p) {
        joint[usize::from(a != 0)][usize::from(b != 0)] += 1.0 / n;
    }
    let pr = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let pp = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    let h = |v: &[f64]| -> f64 { v.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum() };
    let mut mi = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            if joint[i][j] > 0.0 {
                mi += joint[i][j] * (joint[i][j] / (pr[i] * pp[j])).log2();
            }
        }
    }
    (mi, h(&pr) + h(&pp) - 2.0 * mi)
}

/// Global consistency error from local refinement errors at every voxel.
pub fn per_voxel_gce(r: &[u8], p: &[u8]) -> f64 {
    let n = r.len();
    let lre = |s1: &[u8], s2: &[u8], i: usize| -> f64 {
        let own = (0..n).filter(|&j| s1[j] == s1[i]).count();
        let outside = (0..n).filter(|&j| s1[j] == s1[i] && s2[j] != s2[i]).count();
        outside as f64 / own as f64
    };
    let e1: f64 = (0..n).map(|i| lre(r, p, i)).sum();
    let e2: f64 = (0..n).map(|i| lre(p, r, i)).sum();
    e1.min(e2) / n as f64
}

pub fn kappa(r: &[u8], p: &[u8]) -> f64 {
    let (tp, fp, tn, fn_) = counts(r, p);
    let n = tp + fp + tn + fn_;
    let observed = (tp + tn) / n;
    let yes = (tp + fn_) / n * ((tp + fp) / n);
    let no = (tn + fp) / n * ((tn + fn_) / n);
    (observed - (yes + no)) / (1.0 - (yes + no))
}

/// One-way ANOVA table with two raters per voxel.
pub fn icc(r: &[f64], p: &[f64]) -> f64 {
    let n = r.len() as f64;
    let grand: f64 = r.iter().chain(p).sum::<f64>() / (2.0 * n);
    let mut between = 0.0;
    let mut within = 0.0;
    for (a, b) in r.iter().zip(p) {
        let m = (a + b) / 2.0;
        between += 2.0 * (m - grand).powi(2);
        within += (a - m).powi(2) + (b - m).powi(2);
    }
    let msb = between / (n - 1.0);
    let msw = within / (n * (2.0 - 1.0));
    (msb - msw) / (msb + msw)
}

/// Face-border voxels by checking each neighbour explicitly.
pub fn surface(mask: &[u8], shape: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for i in 0..mask.len() {
        if mask[i] == 0 {
            continue;
        }
        let idx = unravel(i, shape);
        let mut border = false;
        for a in 0..shape.len() {
            for delta in [-1isize, 1] {
                let c = idx[a] as isize + delta;
                if c < 0 || c >= shape[a] as isize {
                    border = true;
                } else {
                    let mut nb = idx.clone();
                    nb[a] = c as usize;
                    if mask[ravel(&nb, shape)] == 0 {
                        border = true;
                    }
                }
            }
        }
        if border {
            out.push(idx);
        }
    }
    out
}

pub fn distance(a: &[usize], b: &[usize], spacing: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        let d = (a[k] as f64 - b[k] as f64) * spacing[k];
        s += d * d;
    }
    s.sqrt()
}

/// Minimum distance from each point of `from` to any point of `to`.
pub fn directed(from: &[Vec<usize>], to: &[Vec<usize>], spacing: &[f64]) -> Vec<f64> {
    from.iter()
        .map(|a| to.iter().map(|b| distance(a, b, spacing)).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Distance from every voxel to the nearest surface voxel.
pub fn distance_field(mask: &[u8], shape: &[usize], spacing: &[f64]) -> Vec<f64> {
    let s = surface(mask, shape);
    let all: Vec<Vec<usize>> = (0..mask.len()).map(|i| unravel(i, shape)).collect();
    directed(&all, &s, spacing)
}

/// Linear interpolation between closest ranks.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = (v.len() - 1) as f64 * p / 100.0;
    let below = pos.floor() as usize;
    if below + 1 >= v.len() {
        return v[v.len() - 1];
    }
    let frac = pos - below as f64;
    v[below] * (1.0 - frac) + v[below + 1] * frac
}

pub struct SurfaceOracle {
    pub ref_to_pred: Vec<f64>,
    pub pred_to_ref: Vec<f64>,
}

impl SurfaceOracle {
    pub fn new(r: &[u8], p: &[u8], shape: &[usize], spacing: &[f64]) -> Self {
        let sr = surface(r, shape);
        let sp = surface(p, shape);
        SurfaceOracle {
            ref_to_pred: directed(&sr, &sp, spacing),
            pred_to_ref: directed(&sp, &sr, spacing),
        }
    }

    pub fn hausdorff(&self, p: f64) -> f64 {
        percentile(&self.ref_to_pred, p).max(percentile(&self.pred_to_ref, p))
    }

    pub fn average(&self) -> f64 {
        let all: Vec<f64> = self.ref_to_pred.iter().chain(&self.pred_to_ref).copied().collect();
        all.iter().sum::<f64>() / all.len() as f64
    }

    /// (overlap of ref, overlap of pred, surface dice)
    pub fn overlap(&self, tol: f64) -> (f64, f64, f64) {
        let a = self.ref_to_pred.iter().filter(|&&d| d <= tol).count() as f64;
        let b = self.pred_to_ref.iter().filter(|&&d| d <= tol).count() as f64;
        let (na, nb) = (self.ref_to_pred.len() as f64, self.pred_to_ref.len() as f64);
        (a / na, b / nb, (a + b) / (na + nb))
    }
}

fn foreground_points(mask: &[u8], shape: &[usize], spacing: &[f64]) -> Vec<[f64; 3]> {
    (0..mask.len())
        .filter(|&i| mask[i] != 0)
        .map(|i| {
            let idx = unravel(i, shape);
            [idx[0] as f64 * spacing[0], idx[1] as f64 * spacing[1], idx[2] as f64 * spacing[2]]
        })
        .collect()
}

/// Three-dimensional Mahalanobis distance via the adjugate inverse.
pub fn mahalanobis(r: &[u8], p: &[u8], shape: &[usize], spacing: &[f64]) -> f64 {
    let a = foreground_points(r, shape, spacing);
    let b = foreground_points(p, shape, spacing);
    let stats = |pts: &[[f64; 3]]| {
        let n = pts.len() as f64;
        let mut mu = [0.0; 3];
        for q in pts {
            for k in 0..3 {
                mu[k] += q[k] / n;
            }
        }
        let mut cov = [[0.0; 3]; 3];
        for q in pts {
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] += (q[i] - mu[i]) * (q[j] - mu[j]) / n;
                }
            }
        }
        (mu, cov)
    };
    let (ma, ca) = stats(&a);
    let (mb, cb) = stats(&b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut s = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] = (na * ca[i][j] + nb * cb[i][j]) / (na + nb);
        }
    }
    let det = s[0][0] * (s[1][1] * s[2][2] - s[1][2] * s[2][1]) - s[0][1] * (s[1][0] * s[2][2] - s[1][2] * s[2][0])
        + s[0][2] * (s[1][0] * s[2][1] - s[1][1] * s[2][0]);
    let scale = s[0][0].abs().max(s[1][1].abs()).max(s[2][2].abs());
    if det.abs() <= 1e-9 * scale.powi(3) {
        return f64::NAN;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (s[r0][c0] * s[r1][c1] - s[r0][c1] * s[r1][c0]) / det;
        }
    }
    let d = [ma[0] - mb[0], ma[1] - mb[1], ma[2] - mb[2]];
    let mut q = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            q += d[i] * inv[i][j] * d[j];
        }
    }
    q.sqrt()
}

/// SSIM by visiting every window position and every window element.
pub fn ssim_2d(x: &[f64], y: &[f64], rows: usize, cols: usize, range: f64) -> f64 {
    let sigma: f64 = 1.5;
    let g: Vec<f64> = (0..7).map(|i| (-((i as f64 - 3.0).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let mut w = [[0.0; 7]; 7];
    let mut total = 0.0;
    for i in 0..7 {
        for j in 0..7 {
            w[i][j] = g[i] * g[j];
            total += w[i][j];
        }
    }
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let mut sum = 0.0;
    let mut count = 0.0;
    for r0 in 0..=rows - 7 {
        for c0 in 0..=cols - 7 {
            let at = |v: &[f64], i: usize, j: usize| v[(r0 + i) * cols + c0 + j];
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..7 {
                for j in 0..7 {
                    mx += w[i][j] / total * at(x, i, j);
                    my += w[i][j] / total * at(y, i, j);
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..7 {
                for j in 0..7 {
                    let (dx, dy) = (at(x, i, j) - mx, at(y, i, j) - my);
                    vx += w[i][j] / total * dx * dx;
                    vy += w[i][j] / total * dy * dy;
                    cxy += w[i][j] / total * dx * dy;
                }
            }
            sum += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1.0;
        }
    }
    sum / count
}
