use dvgan_core::discriminator::DiscriminatorMode;
use dvgan_core::generator::GeneratorMode;
use dvgan_core::net::{Checkpoint, Tape};
use dvgan_core::training::{gradient_penalty, interpolate, sample_epsilons, Trainer, TrainingConfig, TrainingData};
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Uniform};

const DOF: usize = 3;

fn tiny(generator: GeneratorMode, discriminator: DiscriminatorMode) -> TrainingConfig {
    TrainingConfig {
        iterations: 3,
        d_steps: 2,
        batch_size: 3,
        frames: 4,
        hidden: 4,
        generator,
        discriminator,
        seed: 11,
        ..TrainingConfig::default()
    }
}

fn data() -> TrainingData {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let clips = (0..4)
        .map(|i| Array2::from_shape_fn((6 + i, DOF), |_| rng.random_range(-1.0..1.0)))
        .collect();
    TrainingData {
        clips,
        tokens: vec![vec![2], vec![3, 2], vec![2], vec![4]],
    }
}

fn run(config: &TrainingConfig) -> Trainer {
    let mut t = Trainer::new(config, DOF, 5).unwrap();
    t.run(&data(), |_, _| Ok(())).unwrap();
    t
}

#[test]
fn identical_seeds_give_identical_checkpoints() {
    for (g, d) in [
        (GeneratorMode::Cnn, DiscriminatorMode::Cnn),
        (GeneratorMode::Rnn, DiscriminatorMode::Rnn),
    ] {
        let c = tiny(g, d);
        let a = run(&c).to_checkpoint().to_bytes().unwrap();
        let b = run(&c).to_checkpoint().to_bytes().unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let c = tiny(GeneratorMode::Cnn, DiscriminatorMode::Rnn);
    let full = run(&c).to_checkpoint().to_bytes().unwrap();

    let mut first = Trainer::new(
        &TrainingConfig {
            iterations: 1,
            ..c.clone()
        },
        DOF,
        5,
    )
    .unwrap();
    first.run(&data(), |_, _| Ok(())).unwrap();
    let saved = Checkpoint::from_bytes(&first.to_checkpoint().to_bytes().unwrap()).unwrap();
    let mut resumed = Trainer::from_checkpoint(&saved).unwrap();
    resumed.model.config.iterations = c.iterations;
    resumed.run(&data(), |_, _| Ok(())).unwrap();
    assert_eq!(resumed.to_checkpoint().to_bytes().unwrap(), full);
}

#[test]
fn zero_iterations_keep_initial_parameters() {
    let c = TrainingConfig {
        iterations: 0,
        ..tiny(GeneratorMode::Cnn, DiscriminatorMode::Cnn)
    };
    let fresh = Trainer::new(&c, DOF, 5).unwrap();
    let ran = run(&c);
    assert_eq!(fresh.model.g_store.flatten(), ran.model.g_store.flatten());
    assert_eq!(fresh.model.d_store.flatten(), ran.model.d_store.flatten());
}

#[test]
fn one_step_updates_both_networks() {
    let c = tiny(GeneratorMode::Cnn, DiscriminatorMode::Cnn);
    let mut t = Trainer::new(&c, DOF, 5).unwrap();
    let g0 = t.model.g_store.flatten();
    let d0 = t.model.d_store.flatten();
    let r = t.step(&data()).unwrap();
    assert_eq!(r.d_updates, 2);
    assert_eq!(r.g_updates, 1);
    assert_ne!(t.model.d_store.flatten(), d0);
    assert_ne!(t.model.g_store.flatten(), g0);
    assert!(r.d_loss.is_finite() && r.g_loss.is_finite());
}

#[test]
fn short_clips_are_rejected() {
    let c = TrainingConfig {
        frames: 8,
        ..tiny(GeneratorMode::Cnn, DiscriminatorMode::Cnn)
    };
    let mut t = Trainer::new(&c, DOF, 5).unwrap();
    assert!(t.run(&data(), |_, _| Ok(())).is_err());
}

#[test]
fn epsilons_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut eps = sample_epsilons(10_000, &mut rng);
    eps.sort_by(f64::total_cmp);
    let u = Uniform::new(0.0, 1.0).unwrap();
    let n = eps.len() as f64;
    let d = eps
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = u.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // Kolmogorov-Smirnov critical value at alpha = 0.01.
    assert!(d < 1.63 / n.sqrt(), "KS statistic {d}");
}

#[test]
fn quadratic_critic_penalty_matches_closed_form() {
    // D(x) = 0.5 * sum x^2 per sample has input gradient x, so the
    // per-sample norm is the Frobenius norm of the sample.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let real = Array2::from_shape_fn((6, 2), |_| rng.random_range(-1.0..1.0));
    let fake = Array2::from_shape_fn((6, 2), |_| rng.random_range(-1.0..1.0));
    let eps = [0.2, 0.7];
    let x = interpolate(&real, &fake, &eps, 3).unwrap();
    let expected: f64 = x
        .axis_chunks_iter(Axis(0), 3)
        .map(|s| (s.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).powi(2))
        .sum::<f64>()
        / 2.0
        * 10.0;
    let tape = Tape::new();
    let leaf = tape.leaf(x);
    let p = gradient_penalty(
        &tape,
        |v| Ok(v.square().sum_cols().sum_rows(3).scale(0.5)),
        leaf,
        3,
        10.0,
    )
    .unwrap();
    assert!((p.value.item() - expected).abs() < 1e-9);
}
