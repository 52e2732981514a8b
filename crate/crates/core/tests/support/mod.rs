//! Independent oracles and check routines shared by the integration tests
//! and the acceptance harness.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use dvgan_core::discriminator::{DiffValidateInput, DiscriminatorMode};
use dvgan_core::generator::GeneratorMode;
use dvgan_core::mocap::rotation::{self, Axis, EulerOrder, Mat3};
use dvgan_core::mocap::{parse_bvh, write_bvh, AngleUnits, Channel, Joint, MotionClip, Skeleton};
use dvgan_core::net::gradcheck::{check_inputs, check_params, GradCheck, DEFAULT_STEP};
use dvgan_core::net::layers::{downsample2x, run_lstm, upsample2x};
use dvgan_core::net::tape::stack_frames;
use dvgan_core::net::{Conv1d, Ctx, Embedding, Linear, Lstm, Matrix, ParamStore, Tape, Var};
use dvgan_core::text::TextEncoder;
use dvgan_core::training::{gradient_penalty, wgan_gp_losses, GanModel, TrainingConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(lo..hi))
}

// ---------------------------------------------------------------------------
// Rotations

pub fn na_matrix(m: &Mat3) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[i][j])
}

pub fn na_axis(axis: Axis) -> Unit<Vector3<f64>> {
    match axis {
        Axis::X => Vector3::x_axis(),
        Axis::Y => Vector3::y_axis(),
        Axis::Z => Vector3::z_axis(),
    }
}

/// Geodesic distance from the Frobenius distance, which unlike the trace
/// formula keeps full precision for nearby rotations:
/// `||A - B||_F = 2 sqrt(2) sin(theta / 2)`.
pub fn geodesic(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let f = (a - b).norm() / (2.0 * 2f64.sqrt());
    2.0 * f.min(1.0).asin()
}

/// Direction uniform on the sphere, angle uniform on `[0, max_angle)`.
pub fn random_expmap(rng: &mut impl Rng, max_angle: f64) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-3 && n <= 1.0 {
            let angle = rng.random_range(0.0..max_angle);
            return v.map(|c| c / n * angle);
        }
    }
}

/// `R_0(a) R_1(b) R_2(c)` composed from nalgebra axis rotations.
pub fn na_euler(angles: [f64; 3], order: EulerOrder) -> Matrix3<f64> {
    let axes = order.axes();
    (0..3)
        .map(|i| Rotation3::from_axis_angle(&na_axis(axes[i]), angles[i]))
        .fold(Rotation3::identity(), |acc, r| acc * r)
        .into_inner()
}

fn wrap_angle(a: f64) -> f64 {
    a.sin().atan2(a.cos())
}

/// Worst errors seen over a batch of random rotations.
#[derive(Clone, Copy, Debug, Default)]
pub struct RotationReport {
    /// `expmap_to_rotmat` against nalgebra's axis-angle constructor.
    pub expmap_oracle: f64,
    /// expmap -> matrix -> expmap -> matrix.
    pub expmap_round_trip: f64,
    /// The recovered exponential map against the original vector.
    pub expmap_vector: f64,
    /// `euler_to_rotmat` against composed nalgebra axis rotations.
    pub euler_oracle: f64,
    /// matrix -> Euler -> matrix, all six orders.
    pub euler_round_trip: f64,
    /// Euler -> matrix -> Euler away from gimbal lock.
    pub euler_angles: f64,
}

pub fn rotation_report(count: usize, seed: u64) -> RotationReport {
    let mut rng = rng(seed);
    let mut r = RotationReport::default();
    let max = |acc: &mut f64, v: f64| *acc = acc.max(v);
    for _ in 0..count {
        let v = random_expmap(&mut rng, PI - 1e-3);
        let m = rotation::expmap_to_rotmat(v);
        let ours = na_matrix(&m);
        let oracle = Rotation3::from_scaled_axis(Vector3::from(v)).into_inner();
        max(&mut r.expmap_oracle, geodesic(&ours, &oracle));

        let back = rotation::rotmat_to_expmap(&m);
        max(
            &mut r.expmap_round_trip,
            geodesic(&ours, &na_matrix(&rotation::expmap_to_rotmat(back))),
        );
        max(
            &mut r.expmap_vector,
            (0..3).map(|i| (back[i] - v[i]).abs()).fold(0.0, f64::max),
        );

        for order in EulerOrder::ALL {
            let angles = rotation::rotmat_to_euler(&m, order);
            let rebuilt = na_matrix(&rotation::euler_to_rotmat(angles, order));
            max(&mut r.euler_round_trip, geodesic(&ours, &rebuilt));

            let a = [
                rng.random_range(-PI..PI),
                rng.random_range(-PI / 2.0 + 1e-2..PI / 2.0 - 1e-2),
                rng.random_range(-PI..PI),
            ];
            let built = rotation::euler_to_rotmat(a, order);
            max(&mut r.euler_oracle, geodesic(&na_matrix(&built), &na_euler(a, order)));
            let again = rotation::rotmat_to_euler(&built, order);
            max(
                &mut r.euler_angles,
                (0..3).map(|i| wrap_angle(again[i] - a[i]).abs()).fold(0.0, f64::max),
            );
        }
    }
    r
}

// ---------------------------------------------------------------------------
// BVH

fn rounded(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo..hi) * 1000.0).round() / 1000.0
}

/// A random depth-first joint tree. The root carries positions; about one
/// joint in five also does. Offsets have three decimals so they survive
/// text exactly.
pub fn random_skeleton(rng: &mut impl Rng, joints: usize) -> Skeleton {
    let positions = [Channel::Xposition, Channel::Yposition, Channel::Zposition];
    let rotations = |rng: &mut dyn rand::RngCore| -> Vec<Channel> {
        let order = EulerOrder::ALL[rng.random_range(0..6)];
        order
            .axes()
            .iter()
            .map(|a| match a {
                Axis::X => Channel::Xrotation,
                Axis::Y => Channel::Yrotation,
                Axis::Z => Channel::Zrotation,
            })
            .collect()
    };
    let mut out: Vec<Joint> = Vec::with_capacity(joints);
    let mut stack = vec![0usize];
    for j in 0..joints {
        let parent = if j == 0 {
            None
        } else {
            let depth = rng.random_range(1..=stack.len());
            stack.truncate(depth);
            let p = *stack.last().expect("root stays");
            stack.push(j);
            Some(p)
        };
        let mut channels = if j == 0 || rng.random_bool(0.2) {
            positions.to_vec()
        } else {
            Vec::new()
        };
        channels.extend(rotations(rng));
        out.push(Joint {
            name: if j == 0 { "Hips".into() } else { format!("Joint{j}") },
            parent,
            offset: [
                rounded(rng, -50.0, 50.0),
                rounded(rng, -50.0, 50.0),
                rounded(rng, -50.0, 50.0),
            ],
            channels,
            end_site: None,
        });
    }
    for j in 0..joints {
        let leaf = !out.iter().any(|c| c.parent == Some(j));
        if leaf && rng.random_bool(0.7) {
            out[j].end_site = Some([rounded(rng, -20.0, 20.0), rounded(rng, -20.0, 20.0), 0.0]);
        }
    }
    Skeleton::new(out).expect("generated in depth-first order")
}

/// Random Euler-degree frames: positions in ±100, angles in ±180.
pub fn random_degrees(rng: &mut impl Rng, skeleton: &Skeleton, frames: usize) -> Array2<f64> {
    let names = skeleton.channel_names();
    Array2::from_shape_fn((frames, names.len()), |(_, c)| {
        if names[c].ends_with("position") {
            rng.random_range(-100.0..100.0)
        } else {
            rng.random_range(-180.0..180.0)
        }
    })
}

/// Outcome of writing a clip, parsing it, writing and parsing again.
#[derive(Clone, Debug)]
pub struct BvhRoundTrip {
    pub tree_matches_source: bool,
    pub tree_stable: bool,
    /// Largest difference between the source frames and the first parse.
    pub source_error: f64,
    /// Largest difference between the first and second parse.
    pub reparse_error: f64,
    pub frames: usize,
}

pub fn bvh_round_trip(skeleton: Skeleton, frames: Array2<f64>, rate: f64) -> Result<BvhRoundTrip, String> {
    let skeleton = Arc::new(skeleton);
    let clip = MotionClip::new(frames, rate, AngleUnits::EulerDegrees, skeleton.clone()).map_err(|e| e.to_string())?;
    let text = write_bvh(&skeleton, &clip).map_err(|e| e.to_string())?;
    let (s1, c1) = parse_bvh(&text).map_err(|e| e.to_string())?;
    let text2 = write_bvh(&s1, &c1).map_err(|e| e.to_string())?;
    let (s2, c2) = parse_bvh(&text2).map_err(|e| e.to_string())?;
    let diff = |a: &MotionClip, b: &MotionClip| {
        a.frames()
            .iter()
            .zip(b.frames())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    if c1.frames().dim() != clip.frames().dim() || c2.frames().dim() != clip.frames().dim() {
        return Err(format!(
            "frame shape changed: {:?} -> {:?} -> {:?}",
            clip.frames().dim(),
            c1.frames().dim(),
            c2.frames().dim()
        ));
    }
    Ok(BvhRoundTrip {
        tree_matches_source: *s1 == *skeleton,
        tree_stable: s1 == s2,
        source_error: diff(&clip, &c1),
        reparse_error: diff(&c1, &c2),
        frames: clip.len(),
    })
}

// ---------------------------------------------------------------------------
// Gradient checks

/// Fixed, shape-dependent weights so that checks probe every output entry
/// with a different coefficient (a plain sum hides transposition bugs).
pub fn weigh<'t>(tape: &'t Tape, y: Var<'t>) -> Var<'t> {
    let (r, c) = y.shape();
    let w = Array2::from_shape_fn((r, c), |(i, j)| (1.3 * i as f64 + 0.7 * j as f64 + 0.1).sin() + 0.5);
    (y * tape.constant(w)).sum()
}

type TapeFn = Box<dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>>;

struct Case {
    name: &'static str,
    inputs: Vec<Matrix>,
    f: TapeFn,
}

fn case(
    name: &'static str,
    inputs: Vec<Matrix>,
    f: impl for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t> + 'static,
) -> Case {
    Case {
        name,
        inputs,
        f: Box::new(f),
    }
}

/// `sum_i ||W * d(weigh f)/dx_i||^2`, whose gradient needs the backward
/// pass to be differentiable itself.
fn second_order<'t>(tape: &'t Tape, f: &TapeFn, v: &[Var<'t>]) -> Var<'t> {
    let y = weigh(tape, f(tape, v));
    tape.grad(y, v)
        .into_iter()
        .flatten()
        .map(|g| weigh(tape, g.square()))
        .reduce(|a, b| a + b)
        .unwrap_or_else(|| tape.scalar(0.0))
}

/// Values at least `gap` away from `kink`, so finite differences never
/// straddle a non-differentiable point.
fn away_from(rng: &mut impl Rng, rows: usize, cols: usize, kink: f64, gap: f64) -> Matrix {
    Array2::from_shape_simple_fn((rows, cols), || {
        let d = rng.random_range(gap..1.0);
        if rng.random_bool(0.5) {
            kink + d
        } else {
            kink - d
        }
    })
}

fn primitive_cases(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let mut u = |r, c| uniform_matrix(rng, r, c, -1.0, 1.0);
    let (a43, b43, a35) = (u(4, 3), u(4, 3), u(3, 5));
    let (a63, a83, a24, a64, a41) = (u(6, 3), u(8, 3), u(2, 4), u(6, 4), u(4, 1));
    let (a33, a45, a23, a42) = (u(3, 3), u(4, 5), u(2, 3), u(4, 2));
    let (s1, s2, s3) = (u(2, 3), u(2, 3), u(2, 3));
    let positive = uniform_matrix(rng, 4, 3, 0.5, 2.0);
    let relu_in = away_from(rng, 4, 3, 0.0, 0.05);
    let clamp_in = away_from(rng, 4, 3, 0.2, 0.05);
    vec![
        case("matmul", vec![a43.clone(), a35], |_, v| v[0].matmul(v[1])),
        case("transpose", vec![a43.clone()], |_, v| v[0].t()),
        case("scale", vec![a43.clone()], |_, v| v[0].scale(-1.7)),
        case("offset", vec![a43.clone()], |_, v| v[0].offset(0.3)),
        case("relu", vec![relu_in], |_, v| v[0].relu()),
        case("clamp_min", vec![clamp_in], |_, v| v[0].clamp_min(0.2)),
        case("sigmoid", vec![a43.clone()], |_, v| v[0].sigmoid()),
        case("tanh", vec![a43.clone()], |_, v| v[0].tanh()),
        case("exp", vec![a43.clone()], |_, v| v[0].exp()),
        case("ln", vec![positive.clone()], |_, v| v[0].ln()),
        case("sqrt", vec![positive.clone()], |_, v| v[0].sqrt()),
        case("recip", vec![positive], |_, v| v[0].recip()),
        case("square", vec![a43.clone()], |_, v| v[0].square()),
        case("add", vec![a43.clone(), b43.clone()], |_, v| v[0] + v[1]),
        case("sub", vec![a43.clone(), b43.clone()], |_, v| v[0] - v[1]),
        case("mul", vec![a43.clone(), b43], |_, v| v[0] * v[1]),
        case("neg", vec![a43.clone()], |_, v| -v[0]),
        case("sum", vec![a43.clone()], |_, v| v[0].sum()),
        case("mean", vec![a43.clone()], |_, v| v[0].mean()),
        case("sum_rows", vec![a63.clone()], |_, v| v[0].sum_rows(3)),
        case("mean_rows", vec![a63.clone()], |_, v| v[0].mean_rows(3)),
        case("repeat_rows", vec![a24], |_, v| v[0].repeat_rows(3)),
        case("sum_cols", vec![a43.clone()], |_, v| v[0].sum_cols()),
        case("repeat_cols", vec![a41], |_, v| v[0].repeat_cols(5)),
        case("shift_rows", vec![a83.clone()], |_, v| v[0].shift_rows(4, 1)),
        case("shift_rows_each", vec![a83.clone()], |_, v| {
            v[0].shift_rows_each(4, &[2, -1])
        }),
        case("down2", vec![a83.clone()], |_, v| v[0].down2()),
        case("up2", vec![a43.clone()], |_, v| v[0].up2()),
        case("gather_rows", vec![a63.clone()], |_, v| v[0].gather_rows(&[2, 0, 2, 5])),
        case("scatter_rows", vec![a33], |_, v| v[0].scatter_rows(&[1, 3, 1], 5)),
        case("window_rows", vec![a83.clone()], |_, v| v[0].window_rows(4, 2, &[1, 2])),
        case("frame", vec![a83.clone()], |_, v| v[0].frame(4, 2)),
        case("slice_cols", vec![a45], |_, v| v[0].slice_cols(1, 2)),
        case("pad_cols", vec![a43.clone()], |_, v| v[0].pad_cols(2, 6)),
        case("concat_rows", vec![a23.clone(), a63], |t, v| {
            t.concat_rows(&[v[0], v[1]])
        }),
        case("concat_cols", vec![a42, a43], |t, v| t.concat_cols(&[v[0], v[1]])),
        case("stack_frames", vec![s1, s2, s3], stack_frames),
        case("downsample2x", vec![a83.clone()], |_, v| downsample2x(v[0], 4).unwrap()),
        case("upsample2x", vec![a23], |_, v| upsample2x(v[0])),
        // one node feeding two consumers, so gradients must accumulate
        case("shared node", vec![a64], |_, v| {
            let s = v[0].exp().offset(1.0).ln();
            s * s.sqrt()
        }),
    ]
}

/// First- and second-order checks of every tape primitive.
pub fn primitive_checks() -> Vec<(String, GradCheck)> {
    let mut rng = rng(11);
    let mut out = Vec::new();
    for c in primitive_cases(&mut rng) {
        out.push((
            c.name.to_string(),
            check_inputs(&c.inputs, DEFAULT_STEP, |t, v| weigh(t, (c.f)(t, v))),
        ));
        out.push((
            format!("{} (second order)", c.name),
            check_inputs(&c.inputs, DEFAULT_STEP, |t, v| second_order(t, &c.f, v)),
        ));
    }
    out
}

/// Parameter and input gradients of the trainable layers.
pub fn layer_checks() -> Vec<(String, GradCheck)> {
    let mut rng = rng(12);
    let mut store = ParamStore::new();
    let linear = Linear::new(&mut store, "lin", 3, 4, &mut rng);
    let conv = Conv1d::new(&mut store, "conv", 3, 4, 3, &mut rng);
    let embed = Embedding::new(&mut store, "emb", 6, 4, &mut rng);
    let lstm = Lstm::new(&mut store, "lstm", 3, 4, 2, &mut rng);
    let text = TextEncoder::new(&mut store, "text", 6, 4, &mut rng);
    let x53 = uniform_matrix(&mut rng, 5, 3, -1.0, 1.0);
    let x83 = uniform_matrix(&mut rng, 8, 3, -1.0, 1.0);
    let x63 = uniform_matrix(&mut rng, 6, 3, -1.0, 1.0);
    let sentences: [&[usize]; 2] = [&[2, 3, 4], &[5, 1]];

    let mut out = Vec::new();
    let mut both = |name: &str, x: &Matrix, f: &dyn for<'t, 's> Fn(&Ctx<'t, 's>, Var<'t>) -> Var<'t>| {
        let p = check_params(&store, DEFAULT_STEP, |ctx| {
            let xv = ctx.tape().constant(x.clone());
            Ok(weigh(ctx.tape(), f(ctx, xv)))
        })
        .expect("layer forward");
        out.push((format!("{name} (parameters)"), p));
        let i = check_inputs(std::slice::from_ref(x), DEFAULT_STEP, |t, v| {
            let ctx = Ctx::new(t, &store);
            weigh(t, f(&ctx, v[0]))
        });
        out.push((format!("{name} (input)"), i));
    };
    both("linear", &x53, &|ctx, x| linear.forward(ctx, x).unwrap());
    both("conv1d", &x83, &|ctx, x| conv.forward(ctx, x, 4).unwrap());
    both("lstm", &x63, &|ctx, x| run_lstm(&lstm, ctx, x, 3).unwrap().0);
    let p = check_params(&store, DEFAULT_STEP, |ctx| {
        Ok(weigh(ctx.tape(), embed.forward(ctx, &[0, 3, 3, 5])?))
    })
    .expect("embedding forward");
    out.push(("embedding (parameters)".into(), p));
    let p = check_params(&store, DEFAULT_STEP, |ctx| {
        Ok(weigh(ctx.tape(), text.encode(ctx, &sentences)?))
    })
    .expect("text encoder forward");
    out.push(("text encoder (parameters)".into(), p));
    out
}

/// Tiny model with N = 4, k = 4 and three channels.
pub fn tiny_model(
    generator: GeneratorMode,
    discriminator: DiscriminatorMode,
    diff_input: DiffValidateInput,
) -> GanModel {
    let config = TrainingConfig {
        frames: 4,
        hidden: 4,
        generator,
        discriminator,
        diff_input,
        ..TrainingConfig::default()
    };
    GanModel::new(&config, 3, 6, &mut rng(13)).expect("tiny model")
}

const TOKENS: [&[usize]; 2] = [&[2, 3], &[4, 5, 1]];

fn real_batch() -> Matrix {
    uniform_matrix(&mut rng(14), 8, 3, -1.0, 1.0)
}

/// Fixed interpolation points.
fn x_hat() -> Matrix {
    uniform_matrix(&mut rng(15), 8, 3, -1.0, 1.0)
}

fn generator_check(m: &GanModel) -> GradCheck {
    check_params(&m.g_store, DEFAULT_STEP, |ctx| {
        let out = m.generator_forward(ctx, &TOKENS, &mut rng(16))?;
        Ok(weigh(ctx.tape(), out))
    })
    .expect("generator forward")
}

fn critic_checks(m: &GanModel) -> [GradCheck; 2] {
    let real = real_batch();
    let params = check_params(&m.d_store, DEFAULT_STEP, |ctx| {
        let h = m.d_text.encode(ctx, &TOKENS)?;
        let y = m.discriminator.score(ctx, ctx.tape().constant(real.clone()), h)?;
        Ok(weigh(ctx.tape(), y))
    })
    .expect("critic forward");
    let input = check_inputs(std::slice::from_ref(&real), DEFAULT_STEP, |t, v| {
        let ctx = Ctx::new(t, &m.d_store);
        let h = m.d_text.encode(&ctx, &TOKENS).unwrap();
        weigh(t, m.discriminator.score(&ctx, v[0], h).unwrap())
    });
    [params, input]
}

fn penalty_checks(m: &GanModel) -> [GradCheck; 2] {
    let xh = x_hat();
    let n = m.config.frames;
    let params = check_params(&m.d_store, DEFAULT_STEP, |ctx| {
        let h = m.d_text.encode(ctx, &TOKENS)?;
        let x = ctx.tape().leaf(xh.clone());
        Ok(gradient_penalty(ctx.tape(), |x| m.discriminator.score(ctx, x, h), x, n, 10.0)?.value)
    })
    .expect("penalty forward");
    let input = check_inputs(std::slice::from_ref(&xh), DEFAULT_STEP, |t, v| {
        let ctx = Ctx::new(t, &m.d_store);
        let h = m.d_text.encode(&ctx, &TOKENS).unwrap();
        gradient_penalty(t, |x| m.discriminator.score(&ctx, x, h), v[0], n, 10.0)
            .unwrap()
            .value
    });
    [params, input]
}

fn loss_checks(m: &GanModel) -> [GradCheck; 2] {
    let (real, xh) = (real_batch(), x_hat());
    let n = m.config.frames;
    let fake = uniform_matrix(&mut rng(17), 8, 3, -1.0, 1.0);
    let critic = check_params(&m.d_store, DEFAULT_STEP, |ctx| {
        let t = ctx.tape();
        let h = m.d_text.encode(ctx, &TOKENS)?;
        let losses = wgan_gp_losses(
            t,
            |x| m.discriminator.score(ctx, x, h),
            t.constant(real.clone()),
            t.constant(fake.clone()),
            t.leaf(xh.clone()),
            n,
            10.0,
        )?;
        Ok(losses.d_loss)
    })
    .expect("critic loss");
    let generator = check_params(&m.g_store, DEFAULT_STEP, |gctx| {
        let t = gctx.tape();
        let dctx = Ctx::new(t, &m.d_store);
        let h = m.d_text.encode(&dctx, &TOKENS)?;
        let fake = m.generator_forward(gctx, &TOKENS, &mut rng(16))?;
        let losses = wgan_gp_losses(
            t,
            |x| m.discriminator.score(&dctx, x, h),
            t.constant(real.clone()),
            fake,
            t.leaf(xh.clone()),
            n,
            10.0,
        )?;
        Ok(losses.g_loss)
    })
    .expect("generator loss");
    [critic, generator]
}

/// Generators, critics, the gradient penalty and both WGAN-GP objectives
/// for every architecture.
pub fn model_checks() -> Vec<(String, GradCheck)> {
    let mut out = Vec::new();
    let setups = [
        (
            "cnn",
            GeneratorMode::Cnn,
            DiscriminatorMode::Cnn,
            DiffValidateInput::Hidden,
        ),
        (
            "rnn",
            GeneratorMode::Rnn,
            DiscriminatorMode::Rnn,
            DiffValidateInput::Hidden,
        ),
        (
            "rnn/encoded-diff",
            GeneratorMode::Rnn,
            DiscriminatorMode::Rnn,
            DiffValidateInput::Encoded,
        ),
    ];
    for (tag, g, d, diff) in setups {
        let m = tiny_model(g, d, diff);
        if diff == DiffValidateInput::Hidden {
            out.push((format!("{tag} generator"), generator_check(&m)));
        }
        let [p, i] = critic_checks(&m);
        out.push((format!("{tag} critic (parameters)"), p));
        out.push((format!("{tag} critic (input)"), i));
        let [p, i] = penalty_checks(&m);
        out.push((format!("{tag} gradient penalty (parameters)"), p));
        out.push((format!("{tag} gradient penalty (input)"), i));
        let [c, gl] = loss_checks(&m);
        out.push((format!("{tag} critic loss"), c));
        out.push((format!("{tag} generator loss"), gl));
    }
    out
}

// ---------------------------------------------------------------------------
// Sampling

/// Upper tail probability of Pearson's statistic against a uniform
/// distribution over `counts.len()` bins.
pub fn chi_square_uniform_p(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    ChiSquared::new((counts.len() - 1) as f64)
        .expect("at least two bins")
        .sf(stat)
}

/// Histogram of integer draws over `lo..=hi`; panics on out-of-range draws.
pub fn histogram(draws: impl IntoIterator<Item = i64>, lo: i64, hi: i64) -> Vec<u64> {
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for d in draws {
        assert!((lo..=hi).contains(&d), "draw {d} outside {lo}..={hi}");
        counts[(d - lo) as usize] += 1;
    }
    counts
}

// ---------------------------------------------------------------------------
// Completion error

/// Completion error for skeletons whose joints all list their rotations as
/// `Zrotation Yrotation Xrotation`, through nalgebra's roll-pitch-yaw
/// extraction. `joints[j]` holds the columns of the x, y and z components.
pub fn zyx_completion_oracle(
    predicted: &Array2<f64>,
    truth: &Array2<f64>,
    joints: &[[usize; 3]],
    seed_len: usize,
    horizon_frames: &[usize],
) -> Vec<f64> {
    let angles = |m: &Array2<f64>, t: usize| -> Vec<f64> {
        joints
            .iter()
            .flat_map(|&[x, y, z]| {
                let v = Vector3::new(m[[t, x]], m[[t, y]], m[[t, z]]);
                let (roll, pitch, yaw) = Rotation3::from_scaled_axis(v).euler_angles();
                [roll, pitch, yaw]
            })
            .collect()
    };
    horizon_frames
        .iter()
        .map(|&h| {
            let t = seed_len - 1 + h;
            let (a, b) = (angles(predicted, t), angles(truth, t));
            a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
        })
        .collect()
}
