use std::path::Path;

use super::PairIndex;
use crate::env::Env;
use crate::error::{contract, io_err, Result};
use crate::nn::NetworkParams;
use crate::par::{for_each_chunk, map_range, Parallelism};

/// Dense Gram matrix of per-pair parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct NtkMatrix {
    n: usize,
    data: Vec<f64>,
}

impl NtkMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        (0..n).for_each(|i| data[i * n + i] = 1.0);
        NtkMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `max |K[i,j] - K[j,i]|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.n);
        (0..self.n).map(|i| v[i] * dot(self.row(i), v)).sum()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    /// `mean_i K[i,i] / mean_{i != j} |K[i,j]|`.
    pub fn diagonal_dominance(&self) -> f64 {
        let n = self.n;
        if n < 2 {
            return f64::INFINITY;
        }
        let diag: f64 = (0..n).map(|i| self.get(i, i)).sum::<f64>() / n as f64;
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += self.get(i, j).abs();
                }
            }
        }
        diag / (off / (n * (n - 1)) as f64)
    }

    /// Plain matrix, one row per line, no header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::with_capacity(self.n * self.n * 12);
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        std::fs::write(path, s).map_err(io_err(path))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major `|pairs| x P` matrix whose row `i` is `grad Q(pair i)`.
pub fn gradient_matrix(params: &NetworkParams, pairs: PairIndex, env: &Env, par: Parallelism) -> Result<Vec<f64>> {
    if pairs.len() != env.n_pairs() || pairs.n_actions() != env.n_actions() {
        return Err(contract("pair index does not match the environment"));
    }
    if params.arch().d_in != env.obs_dim() || params.arch().n_actions != env.n_actions() {
        return Err(contract("network shape does not match the environment"));
    }
    let p = params.n_params();
    let mut g = vec![0.0; pairs.len() * p];
    for_each_chunk(par, &mut g, p, |i, row| {
        let (s, a) = pairs.pair(i);
        params.grad_q_into(&env.encode(s), a.0, row);
    });
    Ok(g)
}

pub fn ntk(params: &NetworkParams, pairs: PairIndex, env: &Env) -> Result<NtkMatrix> {
    ntk_with(params, pairs, env, Parallelism::default())
}

/// `K = G G^T`; only the upper triangle is computed and mirrored, so the
/// result is exactly symmetric.
pub fn ntk_with(params: &NetworkParams, pairs: PairIndex, env: &Env, par: Parallelism) -> Result<NtkMatrix> {
    let g = gradient_matrix(params, pairs, env, par)?;
    let p = params.n_params();
    let n = pairs.len();
    let rows = map_range(par, n, |i| {
        let gi = &g[i * p..(i + 1) * p];
        (i..n).map(|j| dot(gi, &g[j * p..(j + 1) * p])).collect::<Vec<f64>>()
    });
    let mut data = vec![0.0; n * n];
    for (i, upper) in rows.into_iter().enumerate() {
        for (off, v) in upper.into_iter().enumerate() {
            let j = i + off;
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    Ok(NtkMatrix { n, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::TrafficParams;
    use crate::nn::Architecture;
    use rand::{Rng, SeedableRng};

    fn small_tl() -> (Env, NetworkParams) {
        let env = Env::traffic_light(TrafficParams { q_max: 1, ..Default::default() }).unwrap();
        let arch = Architecture { d_in: env.obs_dim(), hidden: [16, 16], n_actions: 2 };
        (env, NetworkParams::init(arch, 11))
    }

    #[test]
    fn gram_structure() {
        let (env, params) = small_tl();
        let k = ntk(&params, PairIndex::for_env(&env), &env).unwrap();
        assert_eq!(k.dim(), 32);
        assert_eq!(k.asymmetry(), 0.0);
        for i in 0..k.dim() {
            assert!(k.get(i, i) >= 1.0);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let v: Vec<f64> = (0..k.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!(k.quadratic_form(&v) >= -1e-9);
        }
        assert!(k.diagonal_dominance().is_finite());
    }

    #[test]
    fn entries_are_gradient_dot_products() {
        let (env, params) = small_tl();
        let idx = PairIndex::for_env(&env);
        let k = ntk(&params, idx, &env).unwrap();
        let (s1, a1) = idx.pair(5);
        let (s2, a2) = idx.pair(20);
        let g1 = params.grad_q(&env.encode(s1), a1.0);
        let g2 = params.grad_q(&env.encode(s2), a2.0);
        assert!((k.get(5, 20) - dot(&g1, &g2)).abs() < 1e-12 * k.get(5, 20).abs().max(1.0));
    }

    #[test]
    fn strategies_agree_bitwise() {
        let (env, params) = small_tl();
        let idx = PairIndex::for_env(&env);
        let a = ntk_with(&params, idx, &env, Parallelism::None).unwrap();
        let b = ntk_with(&params, idx, &env, Parallelism::Rayon).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let (env, params) = small_tl();
        assert!(ntk(&params, PairIndex::new(3, 2), &env).is_err());
        assert!(ntk(&params, PairIndex::for_env(&Env::frozen_lake()), &Env::frozen_lake()).is_err());
    }
}
