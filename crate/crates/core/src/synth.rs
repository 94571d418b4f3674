//! Synthetic corpora with a planted tree geometry.
//!
//! Each sentence gets a random dependency tree. Its tree metric is embedded
//! exactly by classical multidimensional scaling, so that
//! `‖z_i − z_j‖² = d_ij`, and hidden states are `h = W z + σ ε` for a fixed
//! mixing matrix `W` with log-spaced singular values.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::probes::{random_orthogonal, ProbeExample};
use crate::treebank::{SentenceParse, Token};

/// Uniformly random labelled tree over `n` words as a head list (`0` =
/// ROOT): a random Prüfer sequence, rooted at a uniformly chosen word.
pub fn random_heads<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    if n >= 2 {
        let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
        let mut degree = vec![1usize; n];
        for &s in &seq {
            degree[s] += 1;
        }
        for &s in &seq {
            let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf remains");
            adj[leaf].push(s);
            adj[s].push(leaf);
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
        adj[rest[0]].push(rest[1]);
        adj[rest[1]].push(rest[0]);
    }
    let root = rng.random_range(0..n.max(1));
    let mut heads = vec![0; n];
    let mut seen = vec![false; n];
    let mut stack = vec![root];
    seen.get_mut(root).map(|s| *s = true);
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                heads[v] = u + 1;
                stack.push(v);
            }
        }
    }
    heads
}

/// Builds a parse with forms `w1…wN`, a single XPOS and no punctuation.
pub fn parse_from_heads(heads: &[usize], sentence: usize) -> Result<SentenceParse> {
    let tokens = heads
        .iter()
        .enumerate()
        .map(|(i, &h)| Token {
            index: i + 1,
            form: format!("w{}", i + 1),
            upos: "X".into(),
            xpos: "X".into(),
            head: h,
            deprel: if h == 0 { "root".into() } else { "dep".into() },
            is_punct: false,
        })
        .collect();
    SentenceParse::from_tokens(tokens, sentence)
}

/// Points `z_1…z_N ∈ R^dim` with `‖z_i − z_j‖² = d_ij` (classical MDS on the
/// matrix `d`, read as squared distances).
///
/// Fails if `d` is not Euclidean-embeddable in `dim` dimensions to within
/// `1e-8`.
pub fn isometric_embedding(d: &DMatrix<f64>, dim: usize) -> Result<DMatrix<f64>> {
    let n = d.nrows();
    let centering = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let gram = -0.5 * &centering * d * &centering;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut z = DMatrix::zeros(n, dim);
    for (c, &k) in order.iter().take(dim).enumerate() {
        let lambda = eig.eigenvalues[k];
        if lambda < -1e-9 {
            return Err(Error::Shape(format!("gram matrix has negative eigenvalue {lambda}")));
        }
        let s = lambda.max(0.0).sqrt();
        for i in 0..n {
            z[(i, c)] = eig.eigenvectors[(i, k)] * s;
        }
    }
    for i in 0..n {
        for j in 0..n {
            let got = (z.row(i) - z.row(j)).norm_squared();
            if (got - d[(i, j)]).abs() > 1e-8 {
                return Err(Error::Shape(format!(
                    "embedding misses d[{i},{j}] = {} by {}",
                    d[(i, j)],
                    got - d[(i, j)]
                )));
            }
        }
    }
    Ok(z)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedConfig {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Width of the latent space `z`; must be at least `max_len − 1`.
    pub latent_dim: usize,
    /// Width of the hidden states `h`.
    pub hidden_dim: usize,
    pub noise: f64,
    /// Singular values of `W` are log-spaced from `scale` down to
    /// `scale / condition`.
    pub scale: f64,
    pub condition: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            train: 500,
            dev: 100,
            test: 100,
            min_len: 2,
            max_len: 10,
            latent_dim: 10,
            hidden_dim: 256,
            noise: 0.01,
            scale: 0.07,
            condition: 1.0,
            seed: 0,
        }
    }
}

pub struct PlantedCorpus {
    pub train: Vec<ProbeExample>,
    pub dev: Vec<ProbeExample>,
    pub test: Vec<ProbeExample>,
    /// `hidden_dim x latent_dim`.
    pub mixing: DMatrix<f64>,
}

/// Mixing matrix `U diag(s) Vᵀ` with random orthonormal factors and
/// log-spaced singular values.
pub fn mixing_matrix<R: Rng + ?Sized>(
    hidden: usize,
    latent: usize,
    scale: f64,
    condition: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    let u = random_orthogonal(hidden, rng);
    let v = random_orthogonal(latent, rng);
    let mut w = DMatrix::zeros(hidden, latent);
    for c in 0..latent.min(hidden) {
        let t = if latent > 1 { c as f64 / (latent - 1) as f64 } else { 0.0 };
        let s = scale * condition.powf(-t);
        w += s * u.column(c) * v.column(c).transpose();
    }
    w
}

/// One sentence: random tree, exact embedding, mixed and perturbed states.
pub fn planted_sentence<R: Rng + ?Sized>(
    n: usize,
    mixing: &DMatrix<f64>,
    noise: f64,
    sentence: usize,
    rng: &mut R,
) -> Result<ProbeExample> {
    let parse = parse_from_heads(&random_heads(n, rng), sentence)?;
    let d = DMatrix::from_fn(n, n, |i, j| parse.distance(i + 1, j + 1) as f64);
    let z = isometric_embedding(&d, mixing.ncols())?;
    let mut h = z * mixing.transpose();
    for v in h.iter_mut() {
        let e: f64 = StandardNormal.sample(rng);
        *v += noise * e;
    }
    ProbeExample::new(&parse, h)
}

pub fn planted_corpus(cfg: &PlantedConfig) -> Result<PlantedCorpus> {
    if cfg.latent_dim + 1 < cfg.max_len || cfg.min_len < 1 || cfg.min_len > cfg.max_len {
        return Err(Error::Config("planted corpus lengths do not fit the latent width".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mixing = mixing_matrix(cfg.hidden_dim, cfg.latent_dim, cfg.scale, cfg.condition, &mut rng);
    let split = |count: usize, rng: &mut ChaCha8Rng| -> Result<Vec<ProbeExample>> {
        (0..count)
            .map(|s| {
                let n = rng.random_range(cfg.min_len..=cfg.max_len);
                planted_sentence(n, &mixing, cfg.noise, s, rng)
            })
            .collect()
    };
    let train = split(cfg.train, &mut rng)?;
    let dev = split(cfg.dev, &mut rng)?;
    let test = split(cfg.test, &mut rng)?;
    Ok(PlantedCorpus {
        train,
        dev,
        test,
        mixing,
    })
}
