//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls into the code under test except
//! to read raw parameter tensors.
#![allow(dead_code)]

use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- SSIM

/// Plain scalar-loop SSIM: 11×11 Gaussian window (σ = 1.5), valid
/// positions only, K1 = 0.01, K2 = 0.03, dynamic range `l`.
pub fn ssim_brute(x: &[f64], y: &[f64], h: usize, w: usize, l: f64) -> f64 {
    let size = 11usize;
    let sigma = 1.5f64;
    let c = (size / 2) as f64;
    let mut win = vec![0.0; size * size];
    let mut total = 0.0;
    for i in 0..size {
        for j in 0..size {
            let (di, dj) = (i as f64 - c, j as f64 - c);
            let v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            win[i * size + j] = v;
            total += v;
        }
    }
    for v in &mut win {
        *v /= total;
    }
    let c1 = (0.01 * l) * (0.01 * l);
    let c2 = (0.03 * l) * (0.03 * l);
    let mut sum = 0.0;
    let mut count = 0;
    for r in 0..=h - size {
        for q in 0..=w - size {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    let k = (r + i) * w + (q + j);
                    mx += win[i * size + j] * x[k];
                    my += win[i * size + j] * y[k];
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    let k = (r + i) * w + (q + j);
                    let wt = win[i * size + j];
                    vx += wt * (x[k] - mx) * (x[k] - mx);
                    vy += wt * (y[k] - my) * (y[k] - my);
                    cxy += wt * (x[k] - mx) * (y[k] - my);
                }
            }
            sum += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    sum / count as f64
}

// ---------------------------------------------------------------- FID

/// Denman–Beavers iteration for the principal square root.
pub fn sqrtm_db(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let yi = y.clone().try_inverse().expect("invertible");
        let zi = z.clone().try_inverse().expect("invertible");
        let y2 = (&y + &zi) * 0.5;
        let z2 = (&z + &yi) * 0.5;
        let delta = (&y2 - &y).norm();
        y = y2;
        z = z2;
        if delta < 1e-14 * (1.0 + y.norm()) {
            break;
        }
    }
    y
}

/// ‖μa−μb‖² + Tr(A + B − 2·(AB)^{1/2}) with the square root taken by
/// Denman–Beavers on the (non-symmetric) product AB.
pub fn frechet_oracle(mu_a: &[f64], a: &DMatrix<f64>, mu_b: &[f64], b: &DMatrix<f64>) -> f64 {
    let m: f64 = mu_a.iter().zip(mu_b).map(|(x, y)| (x - y).powi(2)).sum();
    let s = sqrtm_db(&(a * b));
    m + a.trace() + b.trace() - 2.0 * s.trace()
}

/// Two-pass mean and unbiased covariance over rows.
pub fn two_pass_stats(rows: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    (mean, cov / (n as f64 - 1.0))
}

/// Random SPD matrix L·Lᵀ + 0.5·I.
pub fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let l = DMatrix::<f64>::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &l * l.transpose() + DMatrix::<f64>::identity(d, d) * 0.5
}

// ---------------------------------------------------------------- shapes

pub fn conv_out(side: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (side + 2 * pad - kernel) / stride + 1
}

/// Side after each layer of the 70×70 patch discriminator: three stride-2
/// 4×4 convs, one stride-1 conv, one stride-1 head, all padded by 1.
pub fn patch_disc_trace(side: usize) -> Vec<usize> {
    let mut s = side;
    [2, 2, 2, 1, 1]
        .iter()
        .map(|&st| {
            s = conv_out(s, 4, st, 1);
            s
        })
        .collect()
}

/// Receptive field of the same stack, walking back from one output unit.
pub fn patch_disc_receptive_field() -> usize {
    let mut rf = 1;
    for st in [1, 1, 2, 2, 2] {
        rf = (rf - 1) * st + 4;
    }
    rf
}

/// Hand tally of generator scalars for 4×4 kernels: encoder convs (bias on
/// layers without norm, γ/β on normalized ones), decoder transposed convs
/// with norm, output layer with bias.
pub fn tally_generator(cin: usize, enc: &[usize], cout: usize) -> usize {
    let n = enc.len();
    let mut total = 0;
    let mut c = cin;
    for (i, &e) in enc.iter().enumerate() {
        total += c * e * 16;
        total += if i == 0 || i == n - 1 { e } else { 2 * e };
        c = e;
    }
    let dec: Vec<usize> = (0..n - 1).map(|i| enc[n - 2 - i]).collect();
    for (i, &d) in dec.iter().enumerate() {
        total += c * d * 16 + 2 * d;
        c = d + enc[n - 2 - i];
    }
    total + c * cout * 16 + cout
}

pub fn tally_discriminator(cin: usize, layers: &[usize]) -> usize {
    let mut total = 0;
    let mut c = cin;
    for (i, &l) in layers.iter().enumerate() {
        total += c * l * 16 + if i == 0 { l } else { 2 * l };
        c = l;
    }
    total + c * 16 + 1
}

// ---------------------------------------------------------------- conv

/// Direct-loop convolution; weight (Cout, Cin, k, k).
pub fn conv2d_naive(x: &Array4<f64>, w: &[f64], wshape: [usize; 4], bias: Option<&[f64]>, stride: usize, pad: usize) -> Array4<f64> {
    let (n, cin, h, wd) = x.dim();
    let [cout, wcin, k, _] = wshape;
    assert_eq!(cin, wcin);
    let (ho, wo) = (conv_out(h, k, stride, pad), conv_out(wd, k, stride, pad));
    let mut y = Array4::zeros((n, cout, ho, wo));
    for b in 0..n {
        for o in 0..cout {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = bias.map_or(0.0, |bb| bb[o]);
                    for c in 0..cin {
                        for u in 0..k {
                            for v in 0..k {
                                let r = (i * stride + u) as isize - pad as isize;
                                let q = (j * stride + v) as isize - pad as isize;
                                if r < 0 || q < 0 || r >= h as isize || q >= wd as isize {
                                    continue;
                                }
                                acc += w[((o * cin + c) * k + u) * k + v] * x[[b, c, r as usize, q as usize]];
                            }
                        }
                    }
                    y[[b, o, i, j]] = acc;
                }
            }
        }
    }
    y
}

/// Direct-loop transposed convolution (scatter form); weight (Cin, Cout, k, k).
pub fn conv_transpose2d_naive(x: &Array4<f64>, w: &[f64], wshape: [usize; 4], bias: Option<&[f64]>, stride: usize, pad: usize) -> Array4<f64> {
    let (n, cin, h, wd) = x.dim();
    let [wcin, cout, k, _] = wshape;
    assert_eq!(cin, wcin);
    let (ho, wo) = ((h - 1) * stride + k - 2 * pad, (wd - 1) * stride + k - 2 * pad);
    let mut y = Array4::zeros((n, cout, ho, wo));
    for b in 0..n {
        for c in 0..cin {
            for i in 0..h {
                for j in 0..wd {
                    for o in 0..cout {
                        for u in 0..k {
                            for v in 0..k {
                                let r = (i * stride + u) as isize - pad as isize;
                                let q = (j * stride + v) as isize - pad as isize;
                                if r < 0 || q < 0 || r >= ho as isize || q >= wo as isize {
                                    continue;
                                }
                                y[[b, o, r as usize, q as usize]] += w[((c * cout + o) * k + u) * k + v] * x[[b, c, i, j]];
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(bb) = bias {
        for b in 0..n {
            for (o, &bo) in bb.iter().enumerate().take(cout) {
                y.slice_mut(ndarray::s![b, o, .., ..]).mapv_inplace(|v| v + bo);
            }
        }
    }
    y
}

// ---------------------------------------------------------------- fixtures

/// Procedural "face" (RGB, mouth opening varies with `t`) and matching
/// "MRI" (grayscale tract whose width follows the same opening), both in
/// `[-1, 1]`.
pub fn synthetic_pair(t: f64, side: usize) -> (Array3<f64>, Array3<f64>) {
    let s = side as f64;
    let open = 0.08 + 0.12 * (0.5 + 0.5 * (t * 2.3).sin());
    let face = Array3::from_shape_fn((3, side, side), |(c, i, j)| {
        let (y, x) = ((i as f64 + 0.5) / s, (j as f64 + 0.5) / s);
        let skin = [0.55, 0.25, 0.1][c];
        let head = ((x - 0.5).powi(2) / 0.16 + (y - 0.5).powi(2) / 0.2) < 1.0;
        let mouth = ((x - 0.5).abs() < 0.18) && ((y - 0.68).abs() < open / 2.0);
        let v = if mouth {
            -0.8
        } else if head {
            skin + 0.15 * (y - 0.5)
        } else {
            -0.4 + 0.2 * c as f64 * x
        };
        v.clamp(-1.0, 1.0)
    });
    let mri = Array3::from_shape_fn((1, side, side), |(_, i, j)| {
        let (y, x) = ((i as f64 + 0.5) / s, (j as f64 + 0.5) / s);
        let tract = ((x - 0.45 - 0.1 * y).abs() < open * 0.9) && y > 0.2 && y < 0.9;
        let tissue = ((x - 0.5).powi(2) + (y - 0.5).powi(2)) < 0.18;
        if tract {
            -0.9
        } else if tissue {
            0.4 + 0.3 * (1.0 - y)
        } else {
            -0.7
        }
    });
    (face, mri)
}

fn to_u8(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Writes `counts[k]` frames for video k as `root/{face,mri}/sNN/tNN/NNNNN.png`.
/// Subjects cycle over `subjects` ids; frames are `side`×`side`.
pub fn write_corpus(root: &Path, counts: &[usize], subjects: usize, side: usize) {
    for (k, &n) in counts.iter().enumerate() {
        let subj = format!("s{:02}", k % subjects);
        let sent = format!("t{:02}", k / subjects);
        for f in 0..n {
            let (face, mri) = synthetic_pair(k as f64 * 7.0 + f as f64 * 0.37, side);
            let fd = root.join("face").join(&subj).join(&sent);
            let md = root.join("mri").join(&subj).join(&sent);
            std::fs::create_dir_all(&fd).unwrap();
            std::fs::create_dir_all(&md).unwrap();
            let rgb = image::RgbImage::from_fn(side as u32, side as u32, |x, y| {
                image::Rgb([0, 1, 2].map(|c| to_u8(face[[c, y as usize, x as usize]])))
            });
            let gray = image::GrayImage::from_fn(side as u32, side as u32, |x, y| {
                image::Luma([to_u8(mri[[0, y as usize, x as usize]])])
            });
            rgb.save(fd.join(format!("{f:05}.png"))).unwrap();
            gray.save(md.join(format!("{f:05}.png"))).unwrap();
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One line per acceptance criterion.
pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!("ACCEPTANCE {id} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}
