//! Finite-difference oracle, written against plain closures so that it
//! shares no code with the symbolic engine.

#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Fourth-order central difference of a vector valued function along `axis`.
pub fn diff<F>(f: &F, p: &[f64], axis: usize, h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    let at = |s: f64| {
        let mut q = p.to_vec();
        q[axis] += s;
        f(&q)
    };
    let (a, b, c, d) = (at(2.0 * h), at(h), at(-h), at(-2.0 * h));
    (0..a.len())
        .map(|k| (-a[k] + 8.0 * b[k] - 8.0 * c[k] + d[k]) / (12.0 * h))
        .collect()
}

pub fn invert(m: &Mat) -> Mat {
    let n = m.len();
    let mut a: Mat = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
            .unwrap();
        a.swap(c, piv);
        let d = a[c][c];
        for v in a[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub struct Oracle {
    pub dim: usize,
    pub metric: Box<dyn Fn(&[f64]) -> Mat + Send + Sync>,
}

impl Oracle {
    pub fn conformal(dim: usize, factor: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Oracle {
            dim,
            metric: Box::new(move |p| {
                let c = factor(p);
                (0..dim)
                    .map(|i| (0..dim).map(|j| if i == j { c } else { 0.0 }).collect())
                    .collect()
            }),
        }
    }

    pub fn flat(dim: usize) -> Self {
        Self::conformal(dim, |_| 1.0)
    }

    pub fn cigar() -> Self {
        Self::conformal(2, |p| 1.0 / (1.0 + p[0] * p[0] + p[1] * p[1]))
    }

    pub fn sphere(dim: usize) -> Self {
        Self::conformal(dim, |p| {
            let r2: f64 = p.iter().map(|x| x * x).sum();
            4.0 / ((1.0 + r2) * (1.0 + r2))
        })
    }

    pub fn hyperbolic() -> Self {
        Self::conformal(2, |p| 1.0 / (p[1] * p[1]))
    }

    fn flat_metric(&self, p: &[f64]) -> Vec<f64> {
        (self.metric)(p).into_iter().flatten().collect()
    }

    /// `Γ^k_ij`, laid out `[k][i][j]`.
    pub fn christoffel(&self, p: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let g = (self.metric)(p);
        let gi = invert(&g);
        let dg: Vec<Vec<f64>> = (0..n)
            .map(|a| diff(&|q: &[f64]| self.flat_metric(q), p, a, 1e-3))
            .collect();
        let dgl = |a: usize, i: usize, j: usize| dg[a][i * n + j];
        let mut out = vec![0.0; n * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += gi[k][l] * (dgl(i, j, l) + dgl(j, i, l) - dgl(l, i, j));
                    }
                    out[(k * n + i) * n + j] = 0.5 * s;
                }
            }
        }
        out
    }

    /// `R^l_ijk` with `R(∂i,∂j)∂k = R^l_ijk ∂l`, laid out `[l][i][j][k]`.
    pub fn riemann(&self, p: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let gam = self.christoffel(p);
        let dgam: Vec<Vec<f64>> = (0..n)
            .map(|a| diff(&|q: &[f64]| self.christoffel(q), p, a, 1e-3))
            .collect();
        let c = |k: usize, i: usize, j: usize| gam[(k * n + i) * n + j];
        let dc = |a: usize, k: usize, i: usize, j: usize| dgam[a][(k * n + i) * n + j];
        let mut out = vec![0.0; n * n * n * n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut s = dc(i, l, j, k) - dc(j, l, i, k);
                        for m in 0..n {
                            s += c(l, i, m) * c(m, j, k) - c(l, j, m) * c(m, i, k);
                        }
                        out[((l * n + i) * n + j) * n + k] = s;
                    }
                }
            }
        }
        out
    }

    pub fn ricci(&self, p: &[f64]) -> Mat {
        let n = self.dim;
        let r = self.riemann(p);
        (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| (0..n).map(|i| r[((i * n + i) * n + a) * n + b]).sum())
                    .collect()
            })
            .collect()
    }

    /// `Hess f` from nested differences of `f`.
    pub fn hessian(&self, f: &dyn Fn(&[f64]) -> f64, p: &[f64]) -> Mat {
        let n = self.dim;
        let grad = |q: &[f64]| -> Vec<f64> { (0..n).map(|a| diff(&|r: &[f64]| vec![f(r)], q, a, 1e-3)[0]).collect() };
        let df = grad(p);
        let gam = self.christoffel(p);
        (0..n)
            .map(|i| {
                let row = diff(&grad, p, i, 1e-3);
                (0..n)
                    .map(|j| {
                        let mut s = row[j];
                        for k in 0..n {
                            s -= gam[(k * n + i) * n + j] * df[k];
                        }
                        s
                    })
                    .collect()
            })
            .collect()
    }
}

/// Tension of `phi` between two oracle manifolds, differentiated with step `h`.
pub fn tension(
    domain: &Oracle,
    target: &Oracle,
    phi: &dyn Fn(&[f64]) -> Vec<f64>,
    p: &[f64],
    h: f64,
) -> Vec<f64> {
    let m = domain.dim;
    let n = target.dim;
    let gi = invert(&(domain.metric)(p));
    let gam = domain.christoffel(p);
    let y = phi(p);
    let tgam = target.christoffel(&y);
    let d1: Vec<Vec<f64>> = (0..m).map(|i| diff(phi, p, i, h)).collect();
    let d2: Vec<Vec<Vec<f64>>> = (0..m)
        .map(|i| (0..m).map(|j| diff(&|q: &[f64]| diff(phi, q, j, h), p, i, h)).collect())
        .collect();
    (0..n)
        .map(|c| {
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    let mut hij = d2[i][j][c];
                    for k in 0..m {
                        hij -= gam[(k * m + i) * m + j] * d1[k][c];
                    }
                    for a in 0..n {
                        for b in 0..n {
                            hij += tgam[(c * n + a) * n + b] * d1[i][a] * d1[j][b];
                        }
                    }
                    s += gi[i][j] * hij;
                }
            }
            s
        })
        .collect()
}

/// `∇^φ_i V` for a section `v` along `phi`.
fn pull_derivative(
    target: &Oracle,
    phi: &dyn Fn(&[f64]) -> Vec<f64>,
    v: &dyn Fn(&[f64]) -> Vec<f64>,
    p: &[f64],
    i: usize,
    h: f64,
) -> Vec<f64> {
    let n = target.dim;
    let dv = diff(v, p, i, h);
    let dphi = diff(phi, p, i, h);
    let tgam = target.christoffel(&phi(p));
    let vv = v(p);
    (0..n)
        .map(|c| {
            let mut s = dv[c];
            for a in 0..n {
                for b in 0..n {
                    s += tgam[(c * n + a) * n + b] * dphi[a] * vv[b];
                }
            }
            s
        })
        .collect()
}

/// Bi-tension `J(τ) = −Δ^φ τ − Σ R(τ, dφ e_i) dφ e_i` by nested differences.
pub fn bitension(
    domain: &Oracle,
    target: &Oracle,
    phi: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    p: &[f64],
) -> Vec<f64> {
    let m = domain.dim;
    let n = target.dim;
    let tau = |q: &[f64]| tension(domain, target, phi, q, 1e-3);
    let h = 1e-2;
    let w = |j: usize| move |q: &[f64]| pull_derivative(target, phi, &tau, q, j, h);
    let gi = invert(&(domain.metric)(p));
    let gam = domain.christoffel(p);
    let mut lap = vec![0.0; n];
    let wj: Vec<Vec<f64>> = (0..m).map(|k| w(k)(p)).collect();
    for i in 0..m {
        for j in 0..m {
            let nij = pull_derivative(target, phi, &w(j), p, i, h);
            for c in 0..n {
                let mut s = nij[c];
                for k in 0..m {
                    s -= gam[(k * m + i) * m + j] * wj[k][c];
                }
                lap[c] += gi[i][j] * s;
            }
        }
    }
    let y = phi(p);
    let r = target.riemann(&y);
    let t = tau(p);
    let d1: Vec<Vec<f64>> = (0..m).map(|i| diff(phi, p, i, 1e-3)).collect();
    let mut curv = vec![0.0; n];
    for i in 0..m {
        for j in 0..m {
            for l in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            curv[l] += gi[i][j] * r[((l * n + a) * n + b) * n + c] * t[a] * d1[i][b] * d1[j][c];
                        }
                    }
                }
            }
        }
    }
    (0..n).map(|c| -lap[c] - curv[c]).collect()
}
