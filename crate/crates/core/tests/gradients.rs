//! Exact derivatives checked against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swing_pinn::dataset::{CollocationPoint, Domain, TrainingPoint};
use swing_pinn::mlp::{self, MlpParams};
use swing_pinn::pinn::{self, OutputMode, PinnModel, Trainable};
use swing_pinn::swing::SwingParams;

const REL: f64 = 1e-4;
const ABS: f64 = 1e-7;

fn close(exact: f64, fd: f64) -> bool {
    (exact - fd).abs() <= (REL * exact.abs().max(fd.abs())).max(ABS)
}

fn random_net(rng: &mut ChaCha8Rng, n_out: usize) -> MlpParams {
    let depth = rng.gen_range(1..=3);
    let mut sizes = vec![2];
    sizes.extend((0..depth).map(|_| rng.gen_range(1..=6)));
    sizes.push(n_out);
    let mut p = mlp::init_params(&sizes, rng.gen()).unwrap();
    for v in p.as_mut_slice() {
        *v += rng.gen_range(-0.3..0.3);
    }
    p
}

fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[test]
fn time_derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for draw in 0..100 {
        let p = random_net(&mut rng, 1 + draw % 2);
        let (t, x) = (rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5));
        let d = mlp::forward_with_time_derivs(&p, t, x);
        for k in 0..p.n_outputs() {
            let fd_t = central(|s| mlp::forward(&p, s, x)[k], t, 1e-5);
            let fd_tt = central(|s| mlp::forward_with_time_derivs(&p, s, x).u_t[k], t, 1e-5);
            assert!(close(d.u_t[k], fd_t), "draw {draw}: u_t {} vs {fd_t}", d.u_t[k]);
            assert!(close(d.u_tt[k], fd_tt), "draw {draw}: u_tt {} vs {fd_tt}", d.u_tt[k]);
        }
    }
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for draw in 0..100 {
        let p = random_net(&mut rng, 1 + draw % 2);
        let (t, x) = (rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5));
        let k = rng.gen_range(0..p.n_outputs());
        let g = mlp::param_gradients(&p, t, x, k);
        for i in 0..p.len() {
            let eval = |v: f64| {
                let mut q = p.clone();
                q.as_mut_slice()[i] = v;
                mlp::forward_with_time_derivs(&q, t, x)
            };
            let v = p.as_slice()[i];
            let h = 1e-6;
            let fd_u = central(|s| eval(s).u[k], v, h);
            let fd_ut = central(|s| eval(s).u_t[k], v, h);
            let fd_utt = central(|s| eval(s).u_tt[k], v, h);
            assert!(close(g.u.0[i], fd_u), "draw {draw} param {i}: u");
            assert!(close(g.u_t.0[i], fd_ut), "draw {draw} param {i}: u_t");
            assert!(close(g.u_tt.0[i], fd_utt), "draw {draw} param {i}: u_tt");
        }
    }
}

fn random_problem(
    rng: &mut ChaCha8Rng,
    mode: OutputMode,
) -> (PinnModel, Vec<TrainingPoint>, Vec<CollocationPoint>) {
    let domain = Domain {
        t_end: 20.0,
        p_min: 0.08,
        p_max: 0.18,
    };
    let params = SwingParams {
        m: rng.gen_range(0.1..0.4),
        d: rng.gen_range(0.05..0.15),
        ..SwingParams::default()
    };
    let model = PinnModel::new(
        random_net(rng, mode.n_outputs()),
        params,
        Trainable::INERTIA_AND_DAMPING,
        domain,
        mode,
    )
    .unwrap();
    let training = (0..rng.gen_range(1..6))
        .map(|_| TrainingPoint {
            t: rng.gen_range(0.0..20.0),
            p1: rng.gen_range(0.08..0.18),
            delta: rng.gen_range(0.0..0.8),
        })
        .collect();
    let collocation = (0..rng.gen_range(1..12))
        .map(|_| CollocationPoint {
            t: rng.gen_range(0.0..20.0),
            p1: rng.gen_range(0.08..0.18),
        })
        .collect();
    (model, training, collocation)
}

fn check_loss_gradient(mode: OutputMode, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for draw in 0..100 {
        let (model, training, collocation) = random_problem(&mut rng, mode);
        let grad = pinn::loss_gradient(&model, &training, &collocation).unwrap();
        let total = |m: &PinnModel| pinn::loss(m, &training, &collocation).unwrap().total;
        for i in 0..model.mlp.len() {
            let v = model.mlp.as_slice()[i];
            let fd = central(
                |s| {
                    let mut q = model.clone();
                    q.mlp.as_mut_slice()[i] = s;
                    total(&q)
                },
                v,
                1e-6,
            );
            let exact = grad.network.0[i];
            assert!(close(exact, fd), "{mode:?} draw {draw} param {i}: {exact} vs {fd}");
        }
        let fd_m = central(
            |s| {
                let mut q = model.clone();
                q.params.m = s;
                total(&q)
            },
            model.params.m,
            1e-6,
        );
        let fd_d = central(
            |s| {
                let mut q = model.clone();
                q.params.d = s;
                total(&q)
            },
            model.params.d,
            1e-6,
        );
        assert!(close(grad.physics.m, fd_m), "{mode:?} draw {draw}: dm {} vs {fd_m}", grad.physics.m);
        assert!(close(grad.physics.d, fd_d), "{mode:?} draw {draw}: dd {} vs {fd_d}", grad.physics.d);
    }
}

#[test]
fn single_output_loss_gradient_matches_finite_differences() {
    check_loss_gradient(OutputMode::Single, 13);
}

#[test]
fn two_output_loss_gradient_matches_finite_differences() {
    check_loss_gradient(OutputMode::TwoOutput, 14);
}

#[test]
fn residual_partials_are_the_time_derivatives() {
    // f is affine in (m, d) with slopes u_tt and u_t.
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let (model, _, _) = random_problem(&mut rng, OutputMode::Single);
        let (t, p1) = (rng.gen_range(0.0..20.0), rng.gen_range(0.08..0.18));
        let (tn, pn) = model.normalize(t, p1);
        let d = mlp::forward_with_time_derivs(&model.mlp, tn, pn);
        let u_t = d.u_t[0] / model.norm.t_end;
        let u_tt = d.u_tt[0] / model.norm.t_end.powi(2);
        let with = |m: f64, dd: f64| {
            let mut q = model.clone();
            q.params.m = m;
            q.params.d = dd;
            pinn::residual(&q, t, p1)
        };
        let (m, dd) = (model.params.m, model.params.d);
        let fd_m = central(|s| with(s, dd), m, 1e-5);
        let fd_d = central(|s| with(m, s), dd, 1e-5);
        assert!(close(u_tt, fd_m), "{u_tt} vs {fd_m}");
        assert!(close(u_t, fd_d), "{u_t} vs {fd_d}");
    }
}
