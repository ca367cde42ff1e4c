//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so every line is printed. Exits
//! non-zero if any criterion fails.

use std::time::Instant;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use pntm_core::addressing::{conv_shift, shift_sequential, AddressWeights, ShiftVector};
use pntm_core::harness::{bench, evaluate, BenchConfig, EvalConfig, Trainer, TrainConfig};
use pntm_core::memory::{memory_write_parallel, write_sequential, MemoryMatrix};
use pntm_core::ntm::{NtmModel, NtmModelConfig};
use pntm_core::numeric::{Graph, Tensor, Var};
use pntm_core::pntm::{ExecMode, PntmConfig, PntmLayer, PntmModel, PntmModelConfig, PntmState};
use pntm_core::tasks::{Task, TaskInstance};

enum Verdict {
    Pass,
    Fail,
    /// The criterion's precondition does not hold on this host.
    NotApplicable,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

impl Outcome {
    fn check(ok: bool, detail: String) -> Self {
        Outcome {
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            detail,
        }
    }
}

fn randn(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| { let z: f64 = StandardNormal.sample(rng); std * z }).collect::<Vec<f64>>();
    Tensor::new(shape, data).unwrap()
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn random_shift(rng: &mut ChaCha8Rng) -> ShiftVector {
    // mixture of diffuse and near-deterministic shifts
    let temp = if rng.random_bool(0.5) { 1.0 } else { 8.0 };
    let logits = [0, 1, 2].map(|_| { let z: f64 = StandardNormal.sample(rng); temp * z });
    ShiftVector::from_logits(logits)
}

// ---------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for trace in 0..20 {
        let m = [8, 48, 96][trace % 3];
        let t = rng.random_range(1..=512);
        let shifts: Vec<ShiftVector> = (0..t).map(|_| random_shift(&mut rng)).collect();
        let par = conv_shift(&shifts, m, 1e-12).unwrap();
        let mut a = AddressWeights::initial(m);
        for (step, s) in shifts.iter().enumerate() {
            let err = a
                .as_slice()
                .iter()
                .zip(par[step].as_slice())
                .fold(0.0f64, |e, (x, y)| e.max((x - y).abs()));
            worst = worst.max(err);
            a = shift_sequential(&a, s).unwrap();
        }
        let err = a
            .as_slice()
            .iter()
            .zip(par[t].as_slice())
            .fold(0.0f64, |e, (x, y)| e.max((x - y).abs()));
        worst = worst.max(err);
    }
    Outcome::check(worst <= 1e-6, format!("max abs error {worst:.3e} (limit 1e-6)"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for trace in 0..20 {
        let m = [8, 32, 96][trace % 3];
        let n = [4, 16][trace % 2];
        let t = rng.random_range(1..=512);
        let addrs: Vec<AddressWeights> = if trace % 2 == 0 {
            // addresses from a walk of random shifts
            let shifts: Vec<ShiftVector> = (0..t - 1).map(|_| random_shift(&mut rng)).collect();
            let mut a = AddressWeights::initial(m);
            let mut out = vec![a.clone()];
            for s in &shifts {
                a = shift_sequential(&a, s).unwrap();
                out.push(a.clone());
            }
            out
        } else {
            // dense softmax weightings
            (0..t)
                .map(|_| {
                    let l = randn(&mut rng, &[m], 3.0);
                    let mx = l.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = l.data().iter().map(|v| (v - mx).exp()).collect();
                    let s: f64 = e.iter().sum();
                    AddressWeights::from_vec(e.iter().map(|v| v / s).collect())
                })
                .collect()
        };
        let updates: Vec<Vec<f64>> = (0..t).map(|_| randn(&mut rng, &[n], 2.0).into_vec()).collect();
        let par = memory_write_parallel(&addrs, &updates, 1e-12).unwrap();
        let mut mem = MemoryMatrix::zeros(m, n);
        for step in 0..t {
            mem = write_sequential(&mem, &addrs[step], &updates[step]).unwrap();
            let scale = mem.as_tensor().max_abs();
            let diff = mem.as_tensor().max_abs_diff(par[step].as_tensor());
            if scale > 0.0 {
                worst = worst.max(diff / scale);
            }
        }
    }
    Outcome::check(
        worst <= 1e-6,
        format!("max relative error {worst:.3e} (max-norm per step, limit 1e-6)"),
    )
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut longest = 0;
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + trial);
        let vocab = rng.random_range(4..9);
        let t = if trial < 2 { 512 } else { rng.random_range(2..=256) };
        longest = longest.max(t);
        let mut cfg = PntmModelConfig::desk(vocab);
        cfg.layer.m = rng.random_range(8..48);
        let model = PntmModel::new(cfg.clone(), 1000 + trial).unwrap();
        let tokens: Vec<Vec<usize>> = (0..2).map(|_| (0..t).map(|_| rng.random_range(0..vocab)).collect()).collect();
        let mut g = Graph::no_grad();
        let p = model.params().bind(&mut g);
        let par = model.forward(&mut g, &p, &tokens, cfg.layer.m, ExecMode::Parallel).unwrap();
        let par = g.value(par).clone();
        let mut state = model.start(2, cfg.layer.m);
        for step in 0..t {
            let col: Vec<usize> = tokens.iter().map(|r| r[step]).collect();
            let logits = model.step(&mut state, &col, None).unwrap();
            for b in 0..2 {
                for v in 0..vocab {
                    worst = worst.max((logits.get(&[b, v]) - par.get(&[b, step, v])).abs());
                }
            }
        }
    }
    Outcome::check(
        worst <= 1e-5,
        format!("max abs logit difference {worst:.3e} over 20 models, T up to {longest} (limit 1e-5)"),
    )
}

// ---------------------------------------------------------------------------
// gradient checks

/// Normwise relative error between reverse-mode and central-difference
/// gradients of `sum(f(leaves) ⊙ R)` for every leaf, at most `max_coords`
/// coordinates per leaf.
fn grad_check(
    leaves: &[Tensor],
    max_coords: usize,
    rng: &mut ChaCha8Rng,
    f: &dyn Fn(&mut Graph, &[Var]) -> Var,
) -> f64 {
    let probe = {
        let mut g = Graph::no_grad();
        let vs: Vec<Var> = leaves.iter().map(|t| g.constant(t.clone())).collect();
        let y = f(&mut g, &vs);
        randn(rng, g.shape(y), 1.0)
    };
    let loss = |leaves: &[Tensor], grad: bool| -> (f64, Vec<Tensor>) {
        let mut g = if grad { Graph::new() } else { Graph::no_grad() };
        let vs: Vec<Var> = leaves.iter().map(|t| g.param(t.clone())).collect();
        let y = f(&mut g, &vs);
        let r = g.constant(probe.clone());
        let yr = g.mul(y, r).unwrap();
        let l = g.sum_all(yr);
        let value = g.value(l).item();
        if !grad {
            return (value, Vec::new());
        }
        let grads = g.backward(l).unwrap();
        (value, vs.iter().zip(leaves).map(|(&v, t)| grads.get_or_zeros(v, t)).collect())
    };
    let (_, analytic) = loss(leaves, true);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (li, leaf) in leaves.iter().enumerate() {
        let coords: Vec<usize> = if leaf.numel() <= max_coords {
            (0..leaf.numel()).collect()
        } else {
            (0..max_coords).map(|_| rng.random_range(0..leaf.numel())).collect()
        };
        let (mut num, mut ana) = (Vec::new(), Vec::new());
        for &c in &coords {
            let mut plus = leaves.to_vec();
            plus[li].data_mut()[c] += h;
            let mut minus = leaves.to_vec();
            minus[li].data_mut()[c] -= h;
            num.push((loss(&plus, false).0 - loss(&minus, false).0) / (2.0 * h));
            ana.push(analytic[li].data()[c]);
        }
        let diff = num.iter().zip(&ana).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = num.iter().map(|v| v * v).sum::<f64>().sqrt().max(ana.iter().map(|v| v * v).sum::<f64>().sqrt());
        if scale > 1e-10 {
            worst = worst.max(diff / scale);
        }
    }
    worst
}

type Builder = Box<dyn Fn(&mut Graph, &[Var]) -> Var>;

fn primitive_cases(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Vec<Tensor>, Builder)> {
    let x = randn(rng, &[3, 4], 1.0);
    let pos = uniform(rng, &[3, 4], 0.2, 2.0);
    let neg = uniform(rng, &[3, 4], -3.0, -0.1);
    let away = {
        // values kept off the kinks at 0
        let mut t = randn(rng, &[3, 4], 1.0);
        t.data_mut().iter_mut().for_each(|v| *v += 0.3 * v.signum());
        t
    };
    let probs = {
        let t = uniform(rng, &[2, 6], 0.05, 1.0);
        let s: Vec<f64> = t.data().chunks(6).map(|r| r.iter().sum()).collect();
        Tensor::new(&[2, 6], t.data().iter().enumerate().map(|(i, v)| v / s[i / 6]).collect()).unwrap()
    };
    let shifts = {
        let t = uniform(rng, &[2, 3], 0.1, 1.0);
        let s: Vec<f64> = t.data().chunks(3).map(|r| r.iter().sum()).collect();
        Tensor::new(&[2, 3], t.data().iter().enumerate().map(|(i, v)| v / s[i / 3]).collect()).unwrap()
    };
    let unary = |name: &'static str, input: &Tensor, op: fn(&mut Graph, Var) -> Var| -> (&'static str, Vec<Tensor>, Builder) {
        (name, vec![input.clone()], Box::new(move |g: &mut Graph, v: &[Var]| op(g, v[0])))
    };
    let mut cases: Vec<(&'static str, Vec<Tensor>, Builder)> = vec![
        unary("neg", &x, |g, v| g.neg(v)),
        unary("exp", &x, |g, v| g.exp(v)),
        unary("log", &pos, |g, v| g.log(v).unwrap()),
        unary("sigmoid", &x, |g, v| g.sigmoid(v)),
        unary("tanh", &x, |g, v| g.tanh(v)),
        unary("softplus", &x, |g, v| g.softplus(v)),
        unary("clamp", &x, |g, v| g.clamp(v, -0.5, 0.5)),
        unary("g", &away, |g, v| g.g_nonlin(v)),
        unary("log_g", &away, |g, v| g.log_g(v)),
        unary("log1mexp", &neg, |g, v| g.log1mexp(v)),
        unary("gelu", &x, |g, v| g.gelu(v)),
        unary("sqrt", &pos, |g, v| g.sqrt(v)),
        unary("square", &x, |g, v| g.square(v)),
        unary("scale", &x, |g, v| g.scale(v, -1.7)),
        unary("add_scalar", &x, |g, v| g.add_scalar(v, 0.3)),
        unary("one_minus", &x, |g, v| g.one_minus(v)),
        unary("softmax", &x, |g, v| g.softmax(v, 1).unwrap()),
        unary("log_softmax", &x, |g, v| g.log_softmax(v, 0).unwrap()),
        unary("logsumexp", &x, |g, v| g.logsumexp(v, 1).unwrap()),
        unary("sum", &x, |g, v| g.sum(v, 0).unwrap()),
        unary("mean", &x, |g, v| g.mean(v, 1).unwrap()),
        unary("sum_all", &x, |g, v| g.sum_all(v)),
        unary("cumsum", &x, |g, v| g.cumsum(v, 1).unwrap()),
        unary("cumlogsumexp", &x, |g, v| g.cumlogsumexp(v, 1).unwrap()),
        unary("reshape", &x, |g, v| g.reshape(v, &[2, 6]).unwrap()),
        unary("permute", &x, |g, v| g.permute(v, &[1, 0]).unwrap()),
        unary("narrow", &x, |g, v| g.narrow(v, 1, 1, 2).unwrap()),
        unary("pad_last", &x, |g, v| g.pad_last(v, 7).unwrap()),
        unary("roll_last", &x, |g, v| g.roll_last(v, -1)),
        unary("gather", &x, |g, v| g.gather(v, &[2, 0, 2, 1]).unwrap()),
        unary("fft", &x, |g, v| g.fft_real(v)),
        unary("ifft_real", &randn(rng, &[3, 5, 2], 1.0), |g, v| g.ifft_real(v).unwrap()),
        unary("cexp", &randn(rng, &[3, 4, 2], 0.7), |g, v| g.cexp(v).unwrap()),
        unary("approx_log", &randn(rng, &[3, 4, 2], 1.0), |g, v| g.approx_log(v, 1e-12).unwrap()),
        unary("sharpen_gamma", &uniform(rng, &[2, 1], 1.0, 4.0), |g, v| {
            let a = g.constant(Tensor::new(&[2, 3], vec![0.2, 0.5, 0.3, 0.6, 0.1, 0.3]).unwrap());
            g.sharpen(a, v).unwrap()
        }),
        unary("cross_entropy", &randn(rng, &[4, 5], 1.0), |g, v| {
            g.cross_entropy(v, &[1, 4, 0, 2], &[1.0, 0.0, 0.5, 1.0]).unwrap()
        }),
    ];
    let binary = |name: &'static str, a: Tensor, b: Tensor, op: fn(&mut Graph, Var, Var) -> Var| -> (&'static str, Vec<Tensor>, Builder) {
        (name, vec![a, b], Box::new(move |g: &mut Graph, v: &[Var]| op(g, v[0], v[1])))
    };
    cases.extend([
        binary("add_broadcast", x.clone(), randn(rng, &[1, 4], 1.0), |g, a, b| g.add(a, b).unwrap()),
        binary("sub_broadcast", x.clone(), randn(rng, &[3, 1], 1.0), |g, a, b| g.sub(a, b).unwrap()),
        binary("mul_broadcast", x.clone(), randn(rng, &[4], 1.0), |g, a, b| g.mul(a, b).unwrap()),
        binary("div", x.clone(), pos.clone(), |g, a, b| g.div(a, b).unwrap()),
        binary("matmul", x.clone(), randn(rng, &[4, 2], 1.0), |g, a, b| g.matmul(a, b).unwrap()),
        binary("bmm", randn(rng, &[2, 3, 4], 1.0), randn(rng, &[2, 4, 5], 1.0), |g, a, b| g.bmm(a, b).unwrap()),
        binary("concat", x.clone(), randn(rng, &[3, 2], 1.0), |g, a, b| g.concat(&[a, b], 1).unwrap()),
        binary("shift3", probs.clone(), shifts.clone(), |g, a, b| g.shift3(a, b).unwrap()),
        binary("sharpen", probs.clone(), uniform(rng, &[2], 1.0, 5.0), |g, a, b| g.sharpen(a, b).unwrap()),
    ]);
    cases.push((
        "linear",
        vec![randn(rng, &[2, 3, 4], 1.0), randn(rng, &[5, 4], 1.0), randn(rng, &[5], 1.0)],
        Box::new(|g: &mut Graph, v: &[Var]| g.linear(v[0], v[1], Some(v[2])).unwrap()),
    ));
    cases.push((
        "linear_recurrence_log",
        vec![uniform(rng, &[2, 6, 3], -2.0, -0.05), randn(rng, &[2, 6, 3], 1.0), randn(rng, &[2, 1, 3], 1.0)],
        Box::new(|g: &mut Graph, v: &[Var]| {
            pntm_core::scan::linear_recurrence_log_graph(g, v[0], v[1], Some(v[2]), 1).unwrap()
        }),
    ));
    cases.push((
        "conv_shift",
        vec![
            {
                let t = uniform(rng, &[5, 3], 0.1, 1.0);
                let s: Vec<f64> = t.data().chunks(3).map(|r| r.iter().sum()).collect();
                Tensor::new(&[5, 3], t.data().iter().enumerate().map(|(i, v)| v / s[i / 3]).collect()).unwrap()
            },
            {
                let t = uniform(rng, &[7], 0.1, 1.0);
                let s: f64 = t.data().iter().sum();
                Tensor::new(&[7], t.data().iter().map(|v| v / s).collect()).unwrap()
            },
        ],
        Box::new(|g: &mut Graph, v: &[Var]| {
            let (a, next) = pntm_core::addressing::conv_shift_graph(g, v[0], Some(v[1]), 7, 1e-12).unwrap();
            let next = g.reshape(next, &[1, 7]).unwrap();
            g.concat(&[a, next], 0).unwrap()
        }),
    ));
    cases.push((
        "memory_write",
        vec![uniform(rng, &[1, 5, 2, 4], 0.05, 0.9), randn(rng, &[1, 5, 6], 1.0), uniform(rng, &[1, 4, 6], 0.1, 1.0)],
        Box::new(|g: &mut Graph, v: &[Var]| {
            pntm_core::memory::write_parallel_graph(g, v[0], v[1], Some(v[2]), 1e-12).unwrap()
        }),
    ));
    cases
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut prim_worst: f64 = 0.0;
    let mut prim_name = "";
    let cases = primitive_cases(&mut rng);
    let count = cases.len();
    for (name, leaves, f) in &cases {
        let e = grad_check(leaves, usize::MAX, &mut rng, f.as_ref());
        if e > prim_worst {
            prim_worst = e;
            prim_name = name;
        }
    }

    // two-step models end to end, every parameter tensor sampled
    let tokens = vec![vec![0usize, 3], vec![2, 1]];
    let targets = [3usize, 4, 1, 5];
    let mask = [1.0, 1.0, 0.5, 1.0];
    let mut model_worst: f64 = 0.0;
    let pntm = PntmModel::new(PntmModelConfig::desk(6), 7).unwrap();
    for mode in [ExecMode::Parallel, ExecMode::Sequential] {
        let leaves: Vec<Tensor> = pntm.params().iter().map(|(_, t)| t.clone()).collect();
        let model = pntm.clone();
        let toks = tokens.clone();
        let e = grad_check(&leaves, 24, &mut rng, &move |g: &mut Graph, v: &[Var]| {
            let p = rebind(model.params(), v);
            let logits = model.forward(g, &p, &toks, 12, mode).unwrap();
            let flat = g.reshape(logits, &[4, 6]).unwrap();
            g.cross_entropy(flat, &targets, &mask).unwrap()
        });
        model_worst = model_worst.max(e);
    }
    let ntm = NtmModel::new(NtmModelConfig::desk(6), 8).unwrap();
    let leaves: Vec<Tensor> = ntm.params().iter().map(|(_, t)| t.clone()).collect();
    let e = grad_check(&leaves, 24, &mut rng, &move |g: &mut Graph, v: &[Var]| {
        let p = rebind(ntm.params(), v);
        let logits = ntm.forward(g, &p, &tokens, 12).unwrap();
        let flat = g.reshape(logits, &[4, 6]).unwrap();
        g.cross_entropy(flat, &targets, &mask).unwrap()
    });
    model_worst = model_worst.max(e);
    Outcome::check(
        prim_worst <= 1e-4 && model_worst <= 1e-3,
        format!(
            "{count} primitives worst {prim_worst:.2e} ({prim_name}, limit 1e-4); \
             2-step models worst {model_worst:.2e} (limit 1e-3)"
        ),
    )
}

/// Bound parameters backed by already-placed leaves.
fn rebind(params: &pntm_core::numeric::ParamSet, vars: &[Var]) -> pntm_core::numeric::Bound {
    assert_eq!(params.len(), vars.len());
    pntm_core::numeric::Bound::from_vars(vars.to_vec())
}

// ---------------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut inputs = 0;
    let mut naive_bad = 0;
    let mut stable_ok = 0;
    while inputs < 64 {
        let m = rng.random_range(3..12);
        // every nonzero entry raised to gamma underflows to zero
        let gamma = rng.random_range(40.0..=50.0);
        let a: Vec<f64> = (0..m)
            .map(|i| {
                if i % 2 == 0 || rng.random_bool(0.3) {
                    0.0
                } else {
                    10f64.powf(rng.random_range(-14.0..-8.0))
                }
            })
            .collect();
        if a.iter().all(|&v| v == 0.0) {
            continue;
        }
        inputs += 1;
        let powered: Vec<f64> = a.iter().map(|v| v.powf(gamma)).collect();
        let total: f64 = powered.iter().sum();
        if powered.iter().any(|p| !(p / total).is_finite()) {
            naive_bad += 1;
        }
        let stable =
            pntm_core::ntm::sharpen(&AddressWeights::from_vec(a.clone()), gamma).map(|w| w.into_vec());
        if let Ok(w) = stable {
            let s: f64 = w.iter().sum();
            if w.iter().all(|v| v.is_finite() && *v >= 0.0) && (s - 1.0).abs() < 1e-9 {
                stable_ok += 1;
            }
        }
    }
    Outcome::check(
        naive_bad == inputs && stable_ok == inputs,
        format!("{inputs} inputs with zeros, gamma in [40, 50]: naive non-finite on {naive_bad}, stable finite and normalised on {stable_ok}"),
    )
}

// ---------------------------------------------------------------------------
// task oracles, written independently of the generators

fn oracle(task: Task, input: &str) -> String {
    let chars: Vec<char> = input.chars().collect();
    match task {
        Task::Parity => (1..=chars.len())
            .map(|k| {
                let count = chars[..k].iter().filter(|&&c| c == 'a').count();
                if count % 2 == 0 {
                    '1'
                } else {
                    '0'
                }
            })
            .collect(),
        Task::Cycle => (1..=chars.len())
            .map(|k| {
                let net: i64 = chars[..k]
                    .iter()
                    .map(|&c| match c {
                        'i' => 1,
                        'd' => -1,
                        _ => 0,
                    })
                    .sum();
                char::from_digit(net.rem_euclid(5) as u32, 10).unwrap()
            })
            .collect(),
        Task::Reverse => chars.iter().rev().collect(),
        Task::Duplicate => chars.iter().chain(chars.iter()).collect(),
        Task::Modular => {
            // evaluate every prefix ending at an operand from scratch
            let mut out = String::new();
            let terms_of = |prefix: &[char]| -> Vec<(i64, i64)> {
                let mut terms = vec![(1i64, prefix[0].to_digit(10).unwrap() as i64)];
                for pair in prefix[1..].chunks(2) {
                    let d = pair[1].to_digit(10).unwrap() as i64;
                    match pair[0] {
                        '*' => terms.last_mut().unwrap().1 *= d,
                        '+' => terms.push((1, d)),
                        _ => terms.push((-1, d)),
                    }
                }
                terms
            };
            for end in (1..=chars.len()).step_by(2) {
                let terms = terms_of(&chars[..end]);
                let (sign, prod) = *terms.last().unwrap();
                let closed: i64 = terms[..terms.len() - 1].iter().map(|(s, p)| s * p).sum();
                out.push(if sign > 0 { '+' } else { '-' });
                out.push_str(&prod.rem_euclid(5).to_string());
                out.push_str(&closed.rem_euclid(5).to_string());
            }
            let value: i64 = terms_of(&chars).iter().map(|(s, p)| s * p).sum();
            out.push_str(&value.rem_euclid(5).to_string());
            out
        }
        Task::BinaryAdd => {
            let (a, b) = input.split_once('+').unwrap();
            let big = |s: &str| BigUint::parse_bytes(s.chars().rev().collect::<String>().as_bytes(), 2).unwrap();
            let sum = big(a) + big(b);
            sum.to_str_radix(2).chars().rev().collect()
        }
    }
}

fn criterion_6() -> Outcome {
    let fixtures = [
        (Task::Parity, "aaabba", "010001"),
        (Task::Cycle, "siidis", "012122"),
        (Task::Reverse, "aabba", "abbaa"),
        (Task::Duplicate, "aabba", "aabbaaabba"),
        (Task::Modular, "1+2-4", "+10+21-434"),
        (Task::BinaryAdd, "01101+101", "11011"),
    ];
    let mut failures = Vec::new();
    for (task, input, target) in fixtures {
        if task.solve(input) != target || oracle(task, input) != target {
            failures.push(format!("fixture {task}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut checked = 0;
    for task in Task::ALL {
        let vocab = task.vocab();
        for _ in 0..10_000 {
            let len = rng.random_range(task.min_len()..=60);
            let inst: TaskInstance = task.generate(len, &mut rng).unwrap();
            let expected_len = if task == Task::Modular { len | 1 } else { len };
            let mut ok = inst.len() == expected_len && inst.target == oracle(task, &inst.input);
            if let Some(trace) = task.trace_len(inst.len()) {
                let finals = if task == Task::Modular { 1 } else { 0 };
                ok &= inst.target.chars().count() == trace + finals;
            }
            let (tokens, mask) = inst.build_sequence().unwrap();
            ok &= vocab.decode(&tokens).unwrap() == format!("{}|{}$", inst.input, inst.target);
            ok &= mask.iter().sum::<f64>() == (inst.target.chars().count() + 1) as f64;
            if !ok {
                failures.push(format!("{task} {}", inst.input));
            }
            checked += 1;
        }
    }
    Outcome::check(
        failures.is_empty(),
        format!(
            "6 fixtures and {checked} random instances (len <= 60): {} mismatches{}",
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------------------

const LEARNING_SEEDS: usize = 5;
const LEARNING_ITERS: usize = 20_000;
const LEARNING_BATCH: usize = 32;
const CHECK_EVERY: usize = 500;

/// Trains until the held-out range is solved or the budget runs out; returns
/// the iterations used and the final minimum accuracy over lengths.
fn learn(task: Task, seed: u64) -> (usize, f64) {
    let cfg = TrainConfig {
        task,
        seed,
        max_iters: LEARNING_ITERS,
        batch_size: LEARNING_BATCH,
        min_len: 1,
        max_len: 10,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(cfg).unwrap();
    let eval = EvalConfig {
        memory: trainer.cfg.memory_rows(),
        ..EvalConfig::new(task, 11, 30)
    };
    let screen = EvalConfig { samples: 16, ..eval.clone() };
    let mut best = 0.0f64;
    while !trainer.done() {
        trainer.step().unwrap();
        if trainer.iter.is_multiple_of(CHECK_EVERY) || trainer.done() {
            if evaluate(&trainer.model, &screen).unwrap().min_accuracy < 1.0 && !trainer.done() {
                continue;
            }
            let full = evaluate(&trainer.model, &eval).unwrap().min_accuracy;
            best = best.max(full);
            if full == 1.0 {
                return (trainer.iter, full);
            }
        }
    }
    (trainer.iter, best)
}

fn criterion_7() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for task in [Task::Parity, Task::Cycle] {
        let mut solved = None;
        let mut tried = Vec::new();
        // ACCEPTANCE_SEEDS lowers the seed count for quick local runs
        let seeds = std::env::var("ACCEPTANCE_SEEDS")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(LEARNING_SEEDS);
        for seed in pntm_core::seeds::derive_seeds(0, seeds) {
            let t0 = Instant::now();
            let (iters, acc) = learn(task, seed);
            tried.push(format!("{acc:.3}@{iters} in {:.0}s", t0.elapsed().as_secs_f64()));
            if acc == 1.0 {
                solved = Some(seed);
                break;
            }
        }
        ok &= solved.is_some();
        parts.push(format!(
            "{task}: {} [{}]",
            if solved.is_some() { "solved" } else { "not solved" },
            tried.join(", ")
        ));
    }
    Outcome::check(ok, format!("held-out len 11..30, 128 samples, tau 0.01; {}", parts.join("; ")))
}

fn criterion_8() -> Outcome {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cfg = BenchConfig {
        min_exp: 6,
        max_exp: 13,
        warmup: 1,
        runs: 2,
        baseline: false,
        ..BenchConfig::default()
    };
    let res = bench(&cfg, |_| {}).unwrap();
    let ratios: Vec<f64> = res.rows.iter().filter_map(|r| r.speedup_par_vs_seq).collect();
    let inversions = ratios.windows(2).filter(|w| w[1] < w[0]).count();
    let at_top = ratios.last().copied().unwrap_or(0.0);
    let listing = res
        .rows
        .iter()
        .map(|r| format!("2^{}:{:.2}x", r.len.trailing_zeros(), r.speedup_par_vs_seq.unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join(" ");
    let detail = format!(
        "{threads} hardware thread(s); parallel/sequential {listing}; {inversions} inversion(s); chunk {}",
        res.chunk_len
    );
    if threads < 4 {
        return Outcome {
            verdict: Verdict::NotApplicable,
            detail: format!("needs >= 4 hardware threads; measured anyway: {detail}"),
        };
    }
    Outcome::check(at_top >= 2.0 && inversions <= 1, detail)
}

fn criterion_9() -> Outcome {
    let pntm = PntmModel::new(PntmModelConfig::paper(6), 0).unwrap().params().count();
    let ntm = NtmModel::new(NtmModelConfig::paper(6), 0).unwrap().params().count();
    let bench_ntm = pntm_core::harness::bench::BenchNtm::new(128, 512, 0).unwrap().params.count();
    let bench_pntm = pntm_core::harness::bench::BenchPntm::new(128, 512, 0).unwrap().params.count();
    let within = |got: usize, want: usize| (got as f64 - want as f64).abs() <= 0.02 * want as f64;
    Outcome::check(
        within(pntm, 260_000) && within(ntm, 224_000) && within(bench_ntm, 168_140) && within(bench_pntm, 152_576),
        format!("P-NTM {pntm} (~260K), NTM {ntm} (~224K), bench NTM {bench_ntm} (168,140), bench P-NTM {bench_pntm} (152,576)"),
    )
}

fn criterion_10() -> Outcome {
    // a layer whose shifts are confident for the inputs it sees: head 0
    // always moves right, head 1 always stays
    let cfg = PntmConfig {
        d: 8,
        n: 4,
        m: 40,
        heads: 2,
        ..PntmConfig::default()
    };
    let mut params = pntm_core::numeric::ParamSet::new();
    let layer = PntmLayer::new(&mut params, "mem", cfg, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    let (wr, ww) = layer.shift_params();
    let mut w = Tensor::zeros(&[6, 8]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for j in 0..8 {
        for r in 0..6 {
            w.data_mut()[r * 8 + j] = rng.random_range(-0.05..0.05);
        }
        w.data_mut()[2 * 8 + j] = 1.0;
        w.data_mut()[4 * 8 + j] = 1.0;
    }
    params.set(wr, w.clone());
    params.set(ww, w);
    let steps = 10_000;
    let mut state = PntmState::fresh(1, 40, 4, 2);
    let mut min_conf: f64 = 1.0;
    let mut one_hot = true;
    for t in 1..=steps {
        let mut g = Graph::no_grad();
        let p = params.bind(&mut g);
        let x = g.constant(uniform(&mut rng, &[1, 8], 0.8, 1.2));
        let c = layer.control(&mut g, &p, x).unwrap();
        min_conf = g.value(c.read).data().iter().copied().fold(min_conf, |m, v| if v > 0.5 { m.min(v) } else { m });
        let sv = state.constants(&mut g);
        let out = layer.step(&mut g, &p, &sv, x, Some(0.01)).unwrap();
        state = PntmState::from_graph(&g, &out.state);
        for addr in [&state.read, &state.write] {
            let ones = addr.data().iter().filter(|&&v| v == 1.0).count();
            let zeros = addr.data().iter().filter(|&&v| v == 0.0).count();
            one_hot &= ones == 2 && zeros == addr.numel() - 2;
        }
        one_hot &= state.read.get(&[0, 0, t % 40]) == 1.0 && state.read.get(&[0, 1, 0]) == 1.0;
    }
    Outcome::check(
        one_hot && min_conf > 0.99,
        format!("{steps} steps, minimum shift confidence {min_conf:.6}, addresses exactly one-hot: {one_hot}"),
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|p| p.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "addressing scan matches sequential shifts", criterion_1),
        (2, "memory write scan matches sequential writes", criterion_2),
        (3, "full model parallel forward matches step fold", criterion_3),
        (4, "gradients match central differences", criterion_4),
        (5, "log-space sharpening stays finite", criterion_5),
        (6, "task generators match oracles", criterion_6),
        (7, "desk-scale length generalisation", criterion_7),
        (8, "parallel speedup trend", criterion_8),
        (9, "parameter counts", criterion_9),
        (10, "thresholded addresses stay one-hot", criterion_10),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let out = run();
        let secs = t0.elapsed().as_secs_f64();
        let tag = match out.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::NotApplicable => "N/A ",
        };
        println!("criterion {id:>2} {tag} {name}: {} [{secs:.1}s]", out.detail);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
