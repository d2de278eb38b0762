//! Straight-line reference implementations on nested vectors, written
//! without the tape so they can referee it.

use icas_core::pipeline::{Model, ModelParams};
use icas_core::Tensor;

pub type Mat = Vec<Vec<f64>>;

pub fn mat(t: &Tensor) -> Mat {
    let (r, c) = match t.shape() {
        [c] => (1, *c),
        [r, c] => (*r, *c),
        [a, b, c] => (a * b, *c),
        s => panic!("unsupported shape {s:?}"),
    };
    (0..r)
        .map(|i| t.data()[i * c..(i + 1) * c].to_vec())
        .collect()
}

pub fn vec1(t: &Tensor) -> Vec<f64> {
    t.data().to_vec()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i][p] * b[p][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j]).collect())
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

pub fn add_row(a: &Mat, r: &[f64]) -> Mat {
    a.iter()
        .map(|x| x.iter().zip(r).map(|(p, q)| p + q).collect())
        .collect()
}

pub fn scale(a: &Mat, s: f64) -> Mat {
    a.iter()
        .map(|x| x.iter().map(|p| p * s).collect())
        .collect()
}

/// Style tokens `K_R`, `V_R` (`m×d`) from a style embedding.
pub fn style_tokens(e_r: &[f64], w: &Mat, m: usize) -> Mat {
    let d = e_r.len();
    let flat = matmul(&vec![e_r.to_vec()], w).remove(0);
    (0..m).map(|i| flat[i * d..(i + 1) * d].to_vec()).collect()
}

pub fn attention(q: &Mat, k: &Mat, v: &Mat) -> Mat {
    let d = q[0].len() as f64;
    let scores = matmul(q, &transpose(k));
    let weights: Mat = scores
        .iter()
        .map(|row| softmax(&row.iter().map(|s| s / d.sqrt()).collect::<Vec<_>>()))
        .collect();
    matmul(&weights, v)
}

pub enum Gate {
    Learned { w_g: Mat, b_g: Vec<f64> },
    Fixed(f64),
}

pub fn gate(e_c: &[f64], e_r: &[f64], g: &Gate) -> Vec<f64> {
    match g {
        Gate::Learned { w_g, b_g } => {
            let prod: Vec<f64> = e_c.iter().zip(e_r).map(|(a, b)| a * b).collect();
            let z = matmul(&vec![prod], w_g).remove(0);
            z.iter().zip(b_g).map(|(a, b)| sigmoid(a + b)).collect()
        }
        Gate::Fixed(c) => vec![*c; e_c.len()],
    }
}

/// Gated style injection: `α·softmax(Q·K_Rᵀ/√d)·V_R + (1 − α)·Q + g`.
#[allow(clippy::too_many_arguments)]
pub fn inject_style(
    q: &Mat,
    e_c: &[f64],
    e_r: &[f64],
    w_k: &Mat,
    w_v: &Mat,
    m: usize,
    g: &Gate,
    alpha: f64,
) -> Mat {
    let k = style_tokens(e_r, w_k, m);
    let v = style_tokens(e_r, w_v, m);
    let a = attention(q, &k, &v);
    let gv = gate(e_c, e_r, g);
    add_row(&add(&scale(&a, alpha), &scale(q, 1.0 - alpha)), &gv)
}

/// `σ(F·W1 + b1)·W2 + b2` per cell.
pub fn project_residual(cells: &Mat, w1: &Mat, b1: &[f64], w2: &Mat, b2: &[f64]) -> Mat {
    let hidden: Mat = add_row(&matmul(cells, w1), b1)
        .iter()
        .map(|r| r.iter().map(|&v| sigmoid(v)).collect())
        .collect();
    add_row(&matmul(&hidden, w2), b2)
}

pub fn inject_structure(f: &Mat, r: &Mat, gamma: f64) -> Mat {
    add(f, &scale(r, gamma))
}

pub fn alpha_bar(t: usize, steps: usize) -> f64 {
    if t == 0 {
        1.0
    } else {
        (std::f64::consts::PI / 2.0 * t as f64 / (steps + 1) as f64)
            .cos()
            .powi(2)
    }
}

pub fn time_embedding(t: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|j| {
            let i = (j / 2) as f64;
            let phase = t as f64 / 10_000f64.powf(2.0 * i / d as f64);
            0.5 * if j % 2 == 0 { phase.sin() } else { phase.cos() }
        })
        .collect()
}

pub fn position_embedding(h: usize, w: usize, d: usize) -> Mat {
    (0..h * w)
        .map(|tok| {
            let (r, c) = ((tok / w) as f64 + 0.5, (tok % w) as f64 + 0.5);
            (0..d)
                .map(|j| {
                    let (pos, extent) = if (j / 2) % 2 == 0 {
                        (r, h as f64)
                    } else {
                        (c, w as f64)
                    };
                    let freq = std::f64::consts::PI * (1 << (j / 4 % 4)) as f64 / extent;
                    if j % 2 == 0 {
                        (freq * pos).sin()
                    } else {
                        (freq * pos).cos()
                    }
                })
                .collect()
        })
        .collect()
}

fn param(p: &ModelParams, name: &str) -> Mat {
    mat(p.get(name).unwrap_or_else(|| panic!("missing {name}")))
}

fn param_vec(p: &ModelParams, name: &str) -> Vec<f64> {
    vec1(p.get(name).unwrap())
}

/// Noise estimate of the full stack with explicit per-block content
/// embeddings and structure scale `gamma`.
#[allow(clippy::too_many_arguments)]
pub fn forward(
    model: &Model,
    gamma: f64,
    x_t: &Mat,
    t: usize,
    sites: &[Vec<f64>],
    style: &[f64],
    structure: &Mat,
) -> Mat {
    let cfg = &model.config;
    let p = &model.params;
    let d = cfg.width;
    let sqrt_d = (d as f64).sqrt();
    let alpha = cfg.alpha;
    let pos = position_embedding(cfg.grid[0], cfg.grid[1], d);
    let mut h = add_row(x_t, &time_embedding(t, d));
    let residual = project_residual(
        structure,
        &param(p, "spm.phi_w1"),
        &param_vec(p, "spm.phi_b1"),
        &param(p, "spm.phi_w2"),
        &param_vec(p, "spm.phi_b2"),
    );
    for (i, e_c) in sites.iter().enumerate() {
        let pre = format!("block{i:02}");
        let w = |n: &str| param(p, &format!("{pre}.{n}"));

        let q = matmul(&h, &w("self_attn.w_q"));
        let k = matmul(&h, &w("self_attn.w_k"));
        let v = matmul(&h, &w("self_attn.w_v"));
        let mixed = attention(&q, &k, &v);
        h = add(&h, &matmul(&mixed, &w("self_attn.w_o")));

        let kc = matmul(&vec![e_c.clone()], &w("content.w_kc")).remove(0);
        let vc = matmul(&vec![e_c.clone()], &w("content.w_vc")).remove(0);
        h = h
            .iter()
            .zip(&pos)
            .map(|(row, pr)| {
                let s: f64 = row
                    .iter()
                    .zip(pr)
                    .zip(&kc)
                    .map(|((a, b), k)| (a + b) * k)
                    .sum();
                let wgt = sigmoid(s / sqrt_d);
                row.iter().zip(&vc).map(|(a, v)| a + wgt * v).collect()
            })
            .collect();

        let g = match cfg.gate {
            icas_core::style_injection::GateMode::Learned => Gate::Learned {
                w_g: w("sim.w_g"),
                b_g: param_vec(p, &format!("{pre}.sim.b_g")),
            },
            icas_core::style_injection::GateMode::FixedConstant(c) => Gate::Fixed(c),
        };
        h = inject_style(
            &h,
            e_c,
            style,
            &w("sim.w_k"),
            &w("sim.w_v"),
            cfg.style_tokens,
            &g,
            alpha,
        );
        if cfg.spm_enabled(i) && gamma != 0.0 {
            h = inject_structure(&h, &residual, gamma);
        }

        let hidden: Mat = add_row(
            &matmul(&h, &w("mlp.w1")),
            &param_vec(p, &format!("{pre}.mlp.b1")),
        )
        .iter()
        .map(|r| r.iter().map(|&v| sigmoid(v)).collect())
        .collect();
        let out = add_row(
            &matmul(&hidden, &w("mlp.w2")),
            &param_vec(p, &format!("{pre}.mlp.b2")),
        );
        h = add(&h, &out);
    }
    let a = alpha_bar(t, cfg.steps);
    let x0 = h;
    x_t.iter()
        .zip(&x0)
        .map(|(xr, hr)| {
            xr.iter()
                .zip(hr)
                .map(|(x, x0)| (x - a.sqrt() * x0) / (1.0 - a).sqrt())
                .collect()
        })
        .collect()
}

pub fn mse(a: &Mat, b: &Mat) -> f64 {
    let n = (a.len() * a[0].len()) as f64;
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)))
        .sum::<f64>()
        / n
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}
