use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subtok::composer::{Composer, ComposerConfig, KernelSpec};
use subtok::corpus::count_word_types_chunked;
use subtok::lm::{LmConfig, LmModel, OutputVocab};
use subtok::numerics::{finite_difference_check, GradCheckReport, Graph, ParamSet, Tensor, Var};
use subtok::segmentation::{train_bpe, BpeOptions};
use subtok::Result;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

type Build = Box<dyn Fn(&mut Graph<f64>, &ParamSet<f64>) -> Result<Var>>;

/// One gradient check: parameters plus the scalar they feed.
pub struct GradCase {
    pub name: String,
    pub params: ParamSet<f64>,
    pub build: Build,
}

impl GradCase {
    pub fn check(&self) -> GradCheckReport {
        finite_difference_check(&self.params, STEP, TOLERANCE, |g, p| (self.build)(g, p)).unwrap()
    }
}

/// Weighted sum with fixed, position-dependent weights, so every output
/// entry reaches the loss with a distinct coefficient.
pub fn weighted_sum(g: &mut Graph<f64>, v: Var) -> Result<Var> {
    let shape = g.value(v).shape().to_vec();
    let n = g.value(v).len();
    let w: Vec<f64> = (0..n).map(|k| (1.3 * k as f64 + 0.7).sin()).collect();
    let w = g.constant(Tensor::from_vec(shape, w)?);
    let prod = g.mul(v, w)?;
    Ok(g.sum(prod))
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::from_vec(shape.to_vec(), data).unwrap()
}

fn params(tensors: Vec<(&str, Tensor<f64>)>) -> ParamSet<f64> {
    let mut ps = ParamSet::new();
    for (name, t) in tensors {
        ps.add(name, t).unwrap();
    }
    ps
}

fn get(g: &mut Graph<f64>, ps: &ParamSet<f64>, name: &str) -> Var {
    g.param(ps, ps.by_name(name).unwrap())
}

fn unary(name: &str, x: Tensor<f64>, op: impl Fn(&mut Graph<f64>, Var) -> Result<Var> + 'static) -> GradCase {
    GradCase {
        name: name.to_string(),
        params: params(vec![("x", x)]),
        build: Box::new(move |g, ps| {
            let x = get(g, ps, "x");
            let y = op(g, x)?;
            weighted_sum(g, y)
        }),
    }
}

fn binary(
    name: &str,
    a: Tensor<f64>,
    b: Tensor<f64>,
    op: impl Fn(&mut Graph<f64>, Var, Var) -> Result<Var> + 'static,
) -> GradCase {
    GradCase {
        name: name.to_string(),
        params: params(vec![("a", a), ("b", b)]),
        build: Box::new(move |g, ps| {
            let a = get(g, ps, "a");
            let b = get(g, ps, "b");
            let y = op(g, a, b)?;
            weighted_sum(g, y)
        }),
    }
}

/// One randomly shaped instance of every differentiable graph operation.
pub fn op_cases(seed: u64) -> Vec<GradCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, k, c) = (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..6));
    let mut u = |shape: &[usize]| uniform(&mut rng, shape, -2.0, 2.0);
    let x_rc = u(&[r, c]);
    let mut cases = vec![
        binary("matmul", u(&[r, k]), u(&[k, c]), |g, a, b| g.matmul(a, b)),
        binary("add", u(&[r, c]), u(&[r, c]), |g, a, b| g.add(a, b)),
        binary("sub", u(&[r, c]), u(&[r, c]), |g, a, b| g.sub(a, b)),
        binary("mul", u(&[r, c]), u(&[r, c]), |g, a, b| g.mul(a, b)),
        binary("add_bias", u(&[r, c]), u(&[c]), |g, a, b| g.add_bias(a, b)),
        binary("concat_rows", u(&[r, c]), u(&[k, c]), |g, a, b| g.concat(&[a, b], 0)),
        binary("concat_cols", u(&[r, c]), u(&[r, k]), |g, a, b| g.concat(&[a, b], 1)),
        unary("scale", x_rc.clone(), |g, x| Ok(g.scale(x, -1.7))),
        unary("sigmoid", x_rc.clone(), |g, x| Ok(g.sigmoid(x))),
        unary("tanh", x_rc.clone(), |g, x| Ok(g.tanh(x))),
        unary("exp", x_rc.clone(), |g, x| Ok(g.exp(x))),
        unary("softmax", x_rc.clone(), |g, x| Ok(g.softmax(x))),
        unary("log_softmax", x_rc.clone(), |g, x| Ok(g.log_softmax(x))),
        unary("sum", x_rc.clone(), |g, x| Ok(g.sum(x))),
        unary("mean", x_rc.clone(), |g, x| Ok(g.mean(x))),
        unary("max_rows", x_rc.clone(), |g, x| g.max_axis(x, 0)),
        unary("max_cols", x_rc.clone(), |g, x| g.max_axis(x, 1)),
    ];
    cases.push(unary("log", uniform(&mut rng, &[r, c], 0.5, 3.0), |g, x| Ok(g.log(x))));

    let rows = rng.gen_range(2..6);
    let cols = rng.gen_range(2..6);
    let x = uniform(&mut rng, &[rows, cols], -2.0, 2.0);
    let (r0, r1) = (rng.gen_range(0..rows - 1), rows);
    let c0 = rng.gen_range(0..cols - 1);
    let c1 = rng.gen_range(c0 + 1..=cols);
    cases.push(unary("slice_rows", x.clone(), move |g, x| g.slice(x, 0, r0, r1)));
    cases.push(unary("slice_cols", x.clone(), move |g, x| g.slice(x, 1, c0, c1)));
    let ids: Vec<usize> = (0..rng.gen_range(1..7)).map(|_| rng.gen_range(0..rows)).collect();
    cases.push(unary("gather_rows", x.clone(), move |g, x| g.gather_rows(x, &ids)));
    let width = rng.gen_range(1..=rows);
    cases.push(unary("unfold", x.clone(), move |g, x| g.unfold(x, width)));
    let picks: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..cols)).collect();
    cases.push(unary("pick", x, move |g, x| g.pick(x, &picks)));
    cases
}

/// `compose_word` on a small composer with two kernels and one highway
/// layer, over a word shorter than the widest kernel and a longer one.
pub fn composer_case(seed: u64) -> GradCase {
    let config = ComposerConfig {
        d_sub: 3,
        kernels: vec![KernelSpec { width: 1, channels: 2 }, KernelSpec { width: 3, channels: 3 }],
        highway_layers: 1,
        max_pieces: 10,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::new();
    Composer::new(config.clone(), 5, &mut ps, &mut rng, "c").unwrap();
    GradCase {
        name: "compose_word".to_string(),
        params: ps,
        build: Box::new(move |g, ps| {
            let composer = Composer::from_params(config.clone(), 5, ps, "c")?;
            let bound = composer.bind(g, ps);
            let long = bound.compose_word(g, &[0, 3, 1, 4])?;
            let short = bound.compose_word(g, &[2])?;
            let both = g.concat(&[long, short], 1)?;
            weighted_sum(g, both)
        }),
    }
}

/// Two-layer BiLSTM language model with tiny dimensions, scored on one
/// sentence.
pub fn lm_case(seed: u64) -> GradCase {
    let text = "the cat sat on the mat\nthe dog ate the cat\n";
    let stats = count_word_types_chunked(text, 10);
    let (vocab, merges) = train_bpe(&stats, 20, BpeOptions::default()).unwrap();
    let config = LmConfig {
        composer: ComposerConfig {
            d_sub: 3,
            kernels: vec![KernelSpec { width: 1, channels: 2 }, KernelSpec { width: 2, channels: 2 }],
            highway_layers: 1,
            max_pieces: 20,
        },
        hidden: 3,
        layers: 2,
        max_output_words: 10,
        zero_output_init: false,
    };
    let output = OutputVocab::from_stats(&stats, 10);
    let model: LmModel<f64> = LmModel::new(config, vocab, Some(merges), output, seed).unwrap();
    let params = model.params.clone();
    let sentence: Vec<String> = ["the", "dog", "sat", "on", "a", "cat"].iter().map(|s| s.to_string()).collect();
    GradCase {
        name: "lm_forward_nll".to_string(),
        params,
        build: Box::new(move |g, ps| {
            let m = LmModel::from_parts(
                model.config().clone(),
                model.vocab().clone(),
                model.merges().cloned(),
                model.output_vocab().clone(),
                ps.clone(),
            )?;
            Ok(m.forward_sentence(g, &sentence)?.nll_sum)
        }),
    }
}
