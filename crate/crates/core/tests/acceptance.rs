//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zerostyle_core::bench::{benchmark, BenchConfig};
use zerostyle_core::fixtures::{
    inject_dead_channels, random_image, synthetic_net, toy_autoencoder, ConvRecord, InceptionWidths, Layer, Source,
    SyntheticSpec,
};
use zerostyle_core::graph::{count_flops, count_params, GraphBuilder};
use zerostyle_core::ops::ConvParams;
use zerostyle_core::metrics::{edge_ssim, gram};
use zerostyle_core::pipeline::{reconstruct, stylize, StyleJob};
use zerostyle_core::prune::{prune_graph, KeepMask, PruneConfig};
use zerostyle_core::transform::{adain, patch_origins, sandwich_swap, style_swap, style_swap_with_matches, TransferConfig};
use zerostyle_core::{Graph, Shape4, Tensor4};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    println!(
        "{} {name}: {} ({:.2}s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        start.elapsed().as_secs_f64()
    );
    o.pass
}

fn images(n: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Vec<Tensor4> {
    (0..n).map(|_| random_image(h, w, rng)).collect()
}

/// Parameters of the network after removing exactly the injected channels,
/// counted from the recorded layer structure rather than the rewritten graph.
fn analytic_params(convs: &[ConvRecord], masks: &BTreeMap<String, KeepMask>) -> u64 {
    let kept = |relu: &str| masks[relu].bits.iter().filter(|b| **b).count() as u64;
    convs
        .iter()
        .map(|c| {
            let out = c.relu.as_deref().map_or(c.out_channels as u64, kept);
            let inp: u64 = c
                .inputs
                .iter()
                .map(|s| match s {
                    Source::GraphInput(n) => *n as u64,
                    Source::Relu(r) => kept(r),
                })
                .sum();
            let k2 = (c.kernel * c.kernel) as u64;
            out * inp * k2 + if c.bias { out } else { 0 } + if c.bn.is_some() { 4 * out } else { 0 }
        })
        .sum()
}

fn soundness_specs() -> Vec<SyntheticSpec> {
    let mut specs = Vec::new();
    for (div, size) in [(16, 32), (8, 32)] {
        let mut s = SyntheticSpec::googlenet(div, size, size);
        s.declare_taps = false;
        s.head = Some(16);
        specs.push(s);
    }
    specs.push(SyntheticSpec::tiny(16, 16));
    let mut wide = SyntheticSpec::tiny(24, 16);
    wide.name = "tiny-wide".into();
    wide.stages[1].push(Layer::Inception(InceptionWidths::new(12, 8, 16, 6, 8, 8)));
    specs.push(wide);
    specs.push(SyntheticSpec {
        name: "two-stage".into(),
        in_channels: 3,
        height: 16,
        width: 24,
        stages: vec![
            vec![Layer::Conv { out: 10, kernel: 5, stride: 2 }],
            vec![
                Layer::Conv { out: 12, kernel: 1, stride: 1 },
                Layer::Inception(InceptionWidths::new(8, 8, 12, 4, 6, 6)),
                Layer::Inception(InceptionWidths::new(10, 8, 12, 6, 8, 8)),
            ],
        ],
        head: Some(6),
        declare_taps: false,
    });
    specs
}

fn pruning_soundness() -> Outcome {
    let mut worst = 0.0f32;
    let mut notes = Vec::new();
    let mut pass = true;
    for (i, spec) in soundness_specs().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let mut net = synthetic_net(spec, &mut rng).unwrap();
        let injected = inject_dead_channels(&mut net, 0.2, 0.4, &mut rng);
        let (h, w) = (spec.height, spec.width);
        let calib = images(16, h, w, &mut rng);
        let holdout = images(20, h, w, &mut rng);
        let out = prune_graph(&net.graph, &calib, &holdout, PruneConfig::default()).unwrap();
        let exact = out.detection.masks.len() == injected.len()
            && out.detection.masks.iter().all(|m| injected[&m.node_id] == *m);
        let v = out.report.verification.as_ref().unwrap();
        worst = worst.max(v.max_deviation);
        let ok = exact && v.max_deviation <= 1e-5 && v.inputs == 20;
        pass &= ok;
        if !ok {
            notes.push(format!("{}: mask exact {exact}, deviation {}", spec.name, v.max_deviation));
        }
    }
    Outcome {
        pass,
        detail: format!("5 nets, masks recovered, max held-out deviation {worst:e} <= 1e-5 {}", notes.join("; ")),
    }
}

fn pruning_accounting() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for (i, spec) in soundness_specs().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + i as u64);
        let mut net = synthetic_net(spec, &mut rng).unwrap();
        let injected = inject_dead_channels(&mut net, 0.2, 0.4, &mut rng);
        let calib = images(8, spec.height, spec.width, &mut rng);
        let out = prune_graph(&net.graph, &calib, &[], PruneConfig::default()).unwrap();
        let expected = analytic_params(&net.convs, &injected);
        let before = analytic_params(&net.convs, &net.relus().map(|c| {
            let r = c.relu.clone().unwrap();
            (r.clone(), KeepMask::new(&r, vec![true; c.out_channels]).unwrap())
        }).collect());
        let ok = out.report.params_after == expected
            && out.report.params_before == before
            && count_params(&out.graph) == expected
            && out.report.flops_after < out.report.flops_before;
        if !ok {
            notes.push(format!(
                "{}: params {} vs analytic {expected}, flops {} -> {}",
                spec.name, out.report.params_after, out.report.flops_before, out.report.flops_after
            ));
        }
        pass &= ok;
    }

    // Paired single-threaded timing on a wider GoogLeNet-shaped net with 30% dead channels.
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let mut spec = SyntheticSpec::googlenet(4, 64, 64);
    spec.declare_taps = false;
    spec.head = Some(32);
    let mut net = synthetic_net(&spec, &mut rng).unwrap();
    inject_dead_channels(&mut net, 0.3, 0.3, &mut rng);
    let calib = images(8, 64, 64, &mut rng);
    let out = prune_graph(&net.graph, &calib, &[], PruneConfig::default()).unwrap();
    let shape = Shape4::new(1, 3, 64, 64);
    let cfg = BenchConfig { iters: 9, warmup: 2, ..Default::default() };
    let (mut base, mut pruned) = (Vec::new(), Vec::new());
    for round in 0..3 {
        let c = BenchConfig { seed: round, ..cfg };
        base.push(benchmark(&net.graph, shape, &c).unwrap().median_s);
        pruned.push(benchmark(&out.graph, shape, &c).unwrap().median_s);
    }
    let med = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (tb, tp) = (med(&mut base), med(&mut pruned));
    let flops_b = count_flops(&net.graph, shape).unwrap();
    let flops_p = count_flops(&out.graph, shape).unwrap();
    pass &= tp < tb;
    Outcome {
        pass,
        detail: format!(
            "params match analytic count on 5 nets; bench {}: median {:.4}s -> {:.4}s (speedup {:.2}x), FLOPs {} -> {} {}",
            spec.name,
            tb,
            tp,
            tb / tp,
            flops_b,
            flops_p,
            notes.join("; ")
        ),
    }
}

/// Population mean and std in f64.
fn moments(f: &Tensor4, c: usize) -> (f64, f64) {
    let p = f.plane(0, c);
    let n = p.len() as f64;
    let m = p.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = p.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / n;
    (m, var)
}

fn adain_statistics() -> Outcome {
    let eps = 1e-5f64;
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let (mut mean_gap, mut std_gap, mut gram_gap) = (0.0f64, 0.0f64, 0.0f64);
    let mut checked = 0;
    let a = 3.0f32.sqrt();
    for _ in 0..100 {
        let c = rng.gen_range(1..=16);
        let (hc, wc, hs, ws) = (rng.gen_range(3..=16), rng.gen_range(3..=16), rng.gen_range(3..=16), rng.gen_range(3..=16));
        let off = rng.gen_range(-2.0..2.0f32);
        let fc = Tensor4::from_fn(Shape4::new(1, c, hc, wc), |_, _, _, _| rng.gen_range(-a..a));
        let fs = Tensor4::from_fn(Shape4::new(1, c, hs, ws), |_, _, _, _| rng.gen_range(-a..a) + off);
        let out = adain(&fc, &fs, eps as f32).unwrap();
        let (go, gs) = (gram(&out).unwrap(), gram(&fs).unwrap());
        for ch in 0..c {
            let (_, vc) = moments(&fc, ch);
            if vc.sqrt() < 0.01 {
                continue;
            }
            checked += 1;
            let ((mo, vo), (ms, vs)) = (moments(&out, ch), moments(&fs, ch));
            mean_gap = mean_gap.max((mo - ms).abs());
            // std in the eps-inclusive convention used by channel statistics
            std_gap = std_gap.max(((vo + eps).sqrt() / (vs + eps).sqrt() - 1.0).abs());
            let (d_o, d_s) = (go.get(ch, ch), gs.get(ch, ch));
            gram_gap = gram_gap.max((d_o - d_s).abs() / d_s);
        }
    }

    // Features with per-channel scales down to 0.01: the eps inside the square
    // root shrinks the output std by sqrt(var_c / (var_c + eps)). Compare with
    // that closed form instead of with the style std.
    let mut closed_gap = 0.0f64;
    let mut raw_gap = 0.0f64;
    for _ in 0..100 {
        let c = rng.gen_range(1..=16);
        let (h, w) = (rng.gen_range(3..=16), rng.gen_range(3..=16));
        let scales: Vec<f32> = (0..c).map(|_| 10f32.powf(rng.gen_range(-2.0..0.5))).collect();
        let fc = Tensor4::from_fn(Shape4::new(1, c, h, w), |_, ch, _, _| rng.gen_range(-a..a) * scales[ch]);
        let fs = Tensor4::from_fn(Shape4::new(1, c, w, h), |_, _, _, _| rng.gen_range(-a..a));
        let out = adain(&fc, &fs, eps as f32).unwrap();
        for ch in 0..c {
            let ((_, vc), (_, vo), (_, vs)) = (moments(&fc, ch), moments(&out, ch), moments(&fs, ch));
            if vc.sqrt() < 0.01 {
                continue;
            }
            let expected = (vc / (vc + eps) * (vs + eps)).sqrt();
            closed_gap = closed_gap.max((vo.sqrt() / expected - 1.0).abs());
            raw_gap = raw_gap.max(((vo + eps).sqrt() / (vs + eps).sqrt() - 1.0).abs());
        }
    }
    Outcome {
        pass: mean_gap <= 1e-5 && std_gap <= 1e-4 && gram_gap <= 1e-3 && closed_gap <= 1e-4,
        detail: format!(
            "100 unit-scale pairs, {checked} channels: max |dmu| {mean_gap:.2e} <= 1e-5, max |sigma ratio - 1| {std_gap:.2e} <= 1e-4, gram diag gap {gram_gap:.2e} <= 1e-3; \
             100 pairs with channel scales from 0.01: std vs eps closed form {closed_gap:.2e} <= 1e-4 (raw sigma ratio gap {raw_gap:.2e}, not gated)"
        ),
    }
}

fn ncc_oracle(fc: &Tensor4, fs: &Tensor4, k: usize, stride: usize, eps: f64) -> Vec<usize> {
    let patch = |f: &Tensor4, y: usize, x: usize| -> Vec<f64> {
        let mut v = Vec::new();
        for c in 0..f.shape().c {
            for dy in 0..k {
                for dx in 0..k {
                    v.push(f.at(0, c, y + dy, x + dx) as f64);
                }
            }
        }
        v
    };
    let (cs, ss) = (fc.shape(), fs.shape());
    let styles: Vec<Vec<f64>> = patch_origins(ss.h, k, stride)
        .into_iter()
        .flat_map(|y| patch_origins(ss.w, k, stride).into_iter().map(move |x| (y, x)))
        .map(|(y, x)| patch(fs, y, x))
        .collect();
    let mut sel = Vec::new();
    for y in patch_origins(cs.h, k, stride) {
        for x in patch_origins(cs.w, k, stride) {
            let pc = patch(fc, y, x);
            let mut best = (f64::NEG_INFINITY, 0);
            for (j, ps) in styles.iter().enumerate() {
                let norm = ps.iter().map(|v| v * v).sum::<f64>().sqrt().max(eps);
                let score = pc.iter().zip(ps).map(|(a, b)| a * b).sum::<f64>() / norm;
                if score > best.0 {
                    best = (score, j);
                }
            }
            sel.push(best.1);
        }
    }
    sel
}

fn style_swap_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let (mut cases, mut mismatches, mut tile_failures, mut tiles) = (0, 0, 0, 0);
    for c in 1..=3 {
        for hc in 3..=6 {
            for wc in 3..=6 {
                for hs in 3..=6 {
                    for ws in 3..=6 {
                        let fc = Tensor4::from_fn(Shape4::new(1, c, hc, wc), |_, _, _, _| rng.gen_range(-1.0..1.0));
                        let fs = Tensor4::from_fn(Shape4::new(1, c, hs, ws), |_, _, _, _| rng.gen_range(-1.0..1.0));
                        cases += 1;
                        for stride in [1, 3] {
                            let (out, m) = style_swap_with_matches(&fc, &fs, 3, stride, 1e-5).unwrap();
                            if m.selected != ncc_oracle(&fc, &fs, 3, stride, 1e-5) {
                                mismatches += 1;
                            }
                            if stride != 3 {
                                continue;
                            }
                            for ty in (0..=hc - 3).step_by(3) {
                                for tx in (0..=wc - 3).step_by(3) {
                                    tiles += 1;
                                    let is_patch = (0..=hs - 3).any(|sy| {
                                        (0..=ws - 3).any(|sx| {
                                            (0..c).all(|ch| {
                                                (0..3).all(|dy| {
                                                    (0..3).all(|dx| {
                                                        out.at(0, ch, ty + dy, tx + dx).to_bits()
                                                            == fs.at(0, ch, sy + dy, sx + dx).to_bits()
                                                    })
                                                })
                                            })
                                        })
                                    });
                                    if !is_patch {
                                        tile_failures += 1;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Outcome {
        pass: mismatches == 0 && tile_failures == 0,
        detail: format!(
            "{cases} content/style pairs x strides 1,3: {mismatches} argmax mismatches vs exhaustive NCC; {tile_failures}/{tiles} stride-3 tiles not bitwise style patches"
        ),
    }
}

fn self_transfer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let (mut a_dev, mut s_dev, mut w_dev) = (0.0f32, 0.0f32, 0.0f32);
    for _ in 0..20 {
        let c = rng.gen_range(1..=8);
        let f = Tensor4::from_fn(Shape4::new(1, c, rng.gen_range(3..=12), rng.gen_range(3..=12)), |_, _, _, _| {
            rng.gen_range(-2.0..2.0)
        });
        a_dev = a_dev.max(adain(&f, &f, 1e-5).unwrap().max_abs_diff(&f).unwrap());
        s_dev = s_dev.max(style_swap(&f, &f, 3, 1, 1e-5).unwrap().max_abs_diff(&f).unwrap());
        w_dev = w_dev.max(sandwich_swap(&f, &f, &TransferConfig::default()).unwrap().max_abs_diff(&f).unwrap());
    }
    let mut p_dev = 0.0f32;
    for (seed, (h, w)) in [(16, 16), (16, 24), (24, 20)].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(610 + seed as u64);
        let (enc, dec) = toy_autoencoder(16, 16, &mut rng).unwrap();
        let img = random_image(h, w, &mut rng);
        let job = StyleJob::new(&img, &img, &enc, &dec, TransferConfig::default());
        let out = stylize(&job).unwrap();
        let rec = reconstruct(&enc, &dec, &img, &job.taps).unwrap();
        p_dev = p_dev.max(out.max_abs_diff(&rec).unwrap());
    }
    Outcome {
        pass: a_dev <= 1e-4 && s_dev <= 1e-4 && w_dev <= 1e-4 && p_dev <= 1e-3,
        detail: format!(
            "adain {a_dev:.1e}, style_swap {s_dev:.1e}, sandwich_swap {w_dev:.1e} (<= 1e-4); pipeline vs reconstruction {p_dev:.1e} (<= 1e-3)"
        ),
    }
}

/// Decoder mapping `c` bottleneck channels back to RGB at `factor` times the size.
fn random_decoder(c: usize, factor: usize, rng: &mut ChaCha8Rng) -> Graph {
    let mut d = GraphBuilder::new("decoder", "bottleneck", c, 2, 2);
    let w = Tensor4::from_fn(Shape4::new(8, c, 3, 3), |_, _, _, _| rng.gen_range(-0.2..0.2));
    d.conv("d1", "bottleneck", w, Some(vec![0.1; 8]), ConvParams { padding: 1, ..Default::default() });
    d.relu("d1.relu", "d1");
    d.upsample("up", "d1.relu", factor);
    let w = Tensor4::from_fn(Shape4::new(3, 8, 1, 1), |_, _, _, _| rng.gen_range(-0.3..0.3));
    d.conv("rgb", "up", w, Some(vec![0.5; 3]), ConvParams::default());
    d.output("rgb");
    d.finish().unwrap()
}

fn pipeline_pruning_invariance() -> Outcome {
    let mut worst = 0.0f32;
    let mut removed = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let (enc, dec) = toy_autoencoder(16, 16, &mut rng).unwrap();
    let mut spec = SyntheticSpec::googlenet(16, 64, 64);
    spec.name = "googlenet-encoder".into();
    let mut net = synthetic_net(&spec, &mut rng).unwrap();
    inject_dead_channels(&mut net, 0.2, 0.4, &mut rng);
    let bottleneck = net.graph.infer_shapes(net.graph.input.shape()).unwrap()[net.stage_outputs.last().unwrap()].c;
    let gdec = random_decoder(bottleneck, 16, &mut rng);
    for (enc, dec, size) in [(&enc, &dec, 16usize), (&net.graph, &gdec, 64)] {
        let calib = images(8, size, size, &mut rng);
        let pruned = prune_graph(enc, &calib, &[], PruneConfig::default()).unwrap();
        removed.push(pruned.report.channels_removed);
        for mode in zerostyle_core::TransferMode::ALL {
            let content = random_image(size, size * 3 / 2, &mut rng);
            let style = random_image(size * 3 / 2, size, &mut rng);
            let cfg = TransferConfig { mode, ..Default::default() };
            let a = stylize(&StyleJob::new(&content, &style, enc, dec, cfg)).unwrap();
            let b = stylize(&StyleJob::new(&content, &style, &pruned.graph, dec, cfg)).unwrap();
            worst = worst.max(a.max_abs_diff(&b).unwrap());
        }
    }
    Outcome {
        pass: worst <= 1e-3 && removed.iter().all(|&r| r > 0),
        detail: format!("toy and GoogLeNet-shaped encoders ({removed:?} channels removed), 5 modes: max deviation {worst:e} <= 1e-3"),
    }
}

/// Independent edge-SSIM: direct 2D windows, two-pass moments.
fn edge_ssim_oracle(a: &Tensor4, b: &Tensor4) -> f64 {
    let s = a.shape();
    let (h, w) = (s.h, s.w);
    let gray = |t: &Tensor4| -> Vec<Vec<f64>> {
        (0..h)
            .map(|y| {
                (0..w)
                    .map(|x| 0.299 * t.at(0, 0, y, x) as f64 + 0.587 * t.at(0, 1, y, x) as f64 + 0.114 * t.at(0, 2, y, x) as f64)
                    .collect()
            })
            .collect()
    };
    let kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let sobel = |g: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let at = |y: isize, x: isize| g[y.clamp(0, h as isize - 1) as usize][x.clamp(0, w as isize - 1) as usize];
        (0..h as isize)
            .map(|y| {
                (0..w as isize)
                    .map(|x| {
                        let (mut gx, mut gy) = (0.0, 0.0);
                        for i in 0..3 {
                            for j in 0..3 {
                                let v = at(y + i as isize - 1, x + j as isize - 1);
                                gx += kx[i][j] * v;
                                gy += kx[j][i] * v;
                            }
                        }
                        (gx * gx + gy * gy).sqrt()
                    })
                    .collect()
            })
            .collect()
    };
    let (ea, eb) = (sobel(&gray(a)), sobel(&gray(b)));
    let peak = ea.iter().chain(&eb).flatten().cloned().fold(0.0, f64::max);
    let l = if peak > 0.0 { peak } else { 1.0 };
    let k = 11.min(h).min(w);
    let c0 = (k as f64 - 1.0) / 2.0;
    let mut win = vec![vec![0.0; k]; k];
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            win[i][j] = (-((i as f64 - c0).powi(2) + (j as f64 - c0).powi(2)) / (2.0 * 1.5 * 1.5)).exp();
            total += win[i][j];
        }
    }
    let (c1, c2) = ((0.01 * l).powi(2), (0.03 * l).powi(2));
    let mut sum = 0.0;
    let mut count = 0;
    for y in 0..=h - k {
        for x in 0..=w - k {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let g = win[i][j] / total;
                    ma += g * ea[y + i][x + j];
                    mb += g * eb[y + i][x + j];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let g = win[i][j] / total;
                    let (da, db) = (ea[y + i][x + j] - ma, eb[y + i][x + j] - mb);
                    va += g * da * da;
                    vb += g * db * db;
                    cov += g * da * db;
                }
            }
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

fn edge_ssim_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let mut identity_ok = true;
    let mut worst = 0.0f64;
    let sizes = [(16, 16), (24, 32), (11, 11), (32, 20), (9, 14), (40, 40), (17, 23), (12, 30), (28, 28), (20, 12)];
    for (i, &(h, w)) in sizes.iter().enumerate() {
        let a = random_image(h, w, &mut rng);
        // Blocky structure plus noise, so the pair shares some edges.
        let b = Tensor4::from_fn(a.shape(), |_, c, y, x| {
            let base = if (y / 4 + x / 4 + c) % 2 == 0 { 0.2 } else { 0.8 };
            (0.6 * base + 0.4 * a.at(0, c, y, x) + rng.gen_range(-0.05..0.05) * i as f32).clamp(0.0, 1.0)
        });
        identity_ok &= edge_ssim(&a, &a).unwrap() == 1.0 && edge_ssim(&b, &b).unwrap() == 1.0;
        worst = worst.max((edge_ssim(&a, &b).unwrap() - edge_ssim_oracle(&a, &b)).abs());
    }
    Outcome {
        pass: identity_ok && worst <= 1e-4,
        detail: format!("edge_ssim(x, x) == 1: {identity_ok}; 10 pairs vs direct-window oracle: max gap {worst:.2e} <= 1e-4"),
    }
}

fn main() {
    let results = [
        check("pruning soundness", pruning_soundness),
        check("pruning accounting", pruning_accounting),
        check("adain statistics", adain_statistics),
        check("style swap oracle", style_swap_oracle),
        check("self-transfer fixed points", self_transfer),
        check("pipeline pruning invariance", pipeline_pruning_invariance),
        check("edge ssim", edge_ssim_checks),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
