use super::*;
use crate::autodiff::Eager;
use alloc::vec;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn row(x: &[f64]) -> Matrix {
    Matrix::row_vector(x.to_vec())
}

fn exact_point<P: Fbsde>(p: &P, t: f64, x: &[f64]) -> (f64, Vec<f64>) {
    let (u, g) = p.exact(&Eager, t, &row(x)).unwrap();
    (u.data()[0], g.into_data())
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    lo + (hi - lo) * u
}

fn bsb(dim: usize) -> Bsb {
    Bsb::new(BsbParams::with_dim(dim)).unwrap()
}

fn osc(dim: usize) -> OscBsb {
    OscBsb::new(OscBsbParams::with_dim(dim)).unwrap()
}

#[test]
fn bsb_exact_matches_terminal_condition() {
    let p = bsb(4);
    let x = [0.3, -1.2, 2.0, 0.7];
    let (u, _) = exact_point(&p, 1.0, &x);
    let g = p.terminal(&Eager, &row(&x)).data()[0];
    assert_eq!(u, g);
    assert!((g - (0.09 + 1.44 + 4.0 + 0.49)).abs() < 1e-14);
}

#[test]
fn bsb_exact_at_full_scale_anchor() {
    let p = Bsb::new(BsbParams::full_scale()).unwrap();
    let (u, _) = exact_point(&p, 0.0, p.x0());
    assert!((u - 77.104_878_747_296_45).abs() < 1e-10, "{u}");
}

#[test]
fn bsb_driver_hand_value() {
    let p = bsb(2);
    let phi = p.driver(
        &Eager,
        0.0,
        &row(&[1.0, 0.5]),
        &Matrix::scalar(1.5),
        &row(&[2.0, 1.0]),
    );
    assert!((phi.data()[0] + 0.05).abs() < 1e-15);
}

#[test]
fn oscillation_free_variant_reduces_to_bsb() {
    let mut params = OscBsbParams::with_dim(3);
    params.alpha = 0.0;
    let o = OscBsb::new(params).unwrap();
    let b = bsb(3);
    let x = Matrix::new(2, 3, vec![0.4, 1.1, -0.3, 2.0, 0.5, 0.9]).unwrap();
    let y = Matrix::column(vec![1.0, -2.0]);
    let z = Matrix::new(2, 3, vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6]).unwrap();
    assert_eq!(o.terminal(&Eager, &x), b.terminal(&Eager, &x));
    assert_eq!(o.terminal_grad(&Eager, &x), b.terminal_grad(&Eager, &x));
    assert_eq!(o.driver(&Eager, 0.3, &x, &y, &z), b.driver(&Eager, 0.3, &x, &y, &z));
    assert_eq!(o.exact(&Eager, 0.3, &x), b.exact(&Eager, 0.3, &x));
}

#[test]
fn oscillatory_source_hand_value() {
    let p = osc(1);
    let v = p.source_p(0.0, &[1.0]);
    assert!((v + 30.916_810_115_528_67).abs() < 1e-10, "{v}");
    assert!((v + 30.917).abs() < 1e-3);
    // the batched source enters the driver as α e^{(r+σ²)T} P at y = z = 0
    let phi = p.driver(&Eager, 0.0, &row(&[1.0]), &Matrix::scalar(0.0), &row(&[0.0]));
    let expected = 0.025 * p.params.base.growth(0.0) * v;
    assert!((phi.data()[0] - expected).abs() < 1e-12);
}

#[test]
fn oscillatory_exact_hand_value() {
    let (u, _) = exact_point(&osc(1), 0.0, &[1.0]);
    assert!((u - 1.241_308_480_868_711_6).abs() < 1e-12, "{u}");
}

#[test]
fn power_sum_examples() {
    assert_eq!(power_sums(&[0.0; 5]), (0.0, 0.0, 0.0));
    assert_eq!(power_sums(&[1.0, 0.5]), (1.5, 1.25, 1.125));
    assert_eq!(power_sums(&[2.0]), (2.0, 4.0, 8.0));
}

#[test]
fn presets_parse() {
    assert_eq!("bsb".parse::<ProblemPreset>().unwrap(), ProblemPreset::Bsb);
    assert_eq!("bsb-osc".parse::<ProblemPreset>().unwrap(), ProblemPreset::BsbOsc);
    assert!("heat".parse::<ProblemPreset>().is_err());
}

#[test]
fn invalid_parameters_rejected() {
    let mut p = BsbParams::with_dim(3);
    p.sigma = 0.0;
    assert!(Bsb::new(p.clone()).is_err());
    p.sigma = 0.4;
    p.r = -0.1;
    assert!(Bsb::new(p.clone()).is_err());
    p.r = 0.05;
    p.x0.pop();
    assert!(Bsb::new(p).is_err());
    let mut o = OscBsbParams::with_dim(2);
    o.gamma = f64::NAN;
    assert!(OscBsb::new(o).is_err());
}

#[test]
fn diagonal_sigma_agrees_with_batched_diffusion() {
    let p = bsb(3);
    let x = [1.0, -0.5, 2.0];
    let dw = [0.1, 0.2, -0.3];
    let sig = p.sigma(0.0, &x, 0.0).to_matrix();
    let dense = sig.matmul(&Matrix::column(dw.to_vec()));
    let batched = p.diffuse(&Eager, 0.0, &row(&x), &Matrix::column(vec![0.0]), &row(&dw));
    assert_eq!(dense.data(), batched.data());
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize, horizon: f64) -> (f64, Vec<f64>) {
    let t = uniform(rng, 0.0, horizon);
    let x = (0..dim).map(|_| uniform(rng, 0.2, 1.5)).collect();
    (t, x)
}

fn check_terminal_and_gradients<P: Fbsde>(p: &P, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        let (_, x) = random_point(&mut rng, p.dim(), p.horizon());
        let (u, _) = exact_point(p, p.horizon(), &x);
        let g = p.terminal(&Eager, &row(&x)).data()[0];
        assert!((u - g).abs() <= 1e-10 * g.abs().max(1.0));

        let grad = p.terminal_grad(&Eager, &row(&x));
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (p.terminal(&Eager, &row(&xp)).data()[0] - p.terminal(&Eager, &row(&xm)).data()[0])
                / (2.0 * h);
            let ad = grad.data()[i];
            assert!((ad - fd).abs() <= 1e-6 * ad.abs().max(1.0), "{ad} vs {fd}");
        }
    }
}

/// `∂ₜu + ½ σ² Σ xᵢ² ∂ᵢᵢu − φ(t, x, u, ∇u)` by central differences.
fn pde_residual<P: Fbsde>(p: &P, sigma: f64, t: f64, x: &[f64]) -> (f64, f64) {
    let u = |t: f64, x: &[f64]| exact_point(p, t, x).0;
    let (ht, hx) = (1e-5, 1e-4);
    let ut = (u(t + ht, x) - u(t - ht, x)) / (2.0 * ht);
    let centre = u(t, x);
    let mut diffusion = 0.0;
    for i in 0..x.len() {
        let mut xp = x.to_vec();
        xp[i] += hx;
        let mut xm = x.to_vec();
        xm[i] -= hx;
        let uii = (u(t, &xp) - 2.0 * centre + u(t, &xm)) / (hx * hx);
        diffusion += 0.5 * sigma * sigma * x[i] * x[i] * uii;
    }
    let (uv, grad) = exact_point(p, t, x);
    let phi = p
        .driver(&Eager, t, &row(x), &Matrix::scalar(uv), &row(&grad))
        .data()[0];
    (ut + diffusion - phi, phi)
}

fn check_pde<P: Fbsde>(p: &P, sigma: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let (t, x) = random_point(&mut rng, p.dim(), p.horizon());
        let (res, phi) = pde_residual(p, sigma, t, &x);
        assert!(res.abs() <= 1e-4 * phi.abs(), "residual {res} vs phi {phi} at t={t}");
    }
}

#[test]
fn bsb_closed_form_solves_the_pde() {
    check_pde(&bsb(5), 0.4, 1);
    check_terminal_and_gradients(&bsb(5), 2);
}

#[test]
fn oscillatory_closed_form_solves_the_pde() {
    check_pde(&osc(5), 0.4, 3);
    check_terminal_and_gradients(&osc(5), 4);
    let mut params = OscBsbParams::with_dim(4);
    params.gamma = 8.0;
    check_pde(&OscBsb::new(params.clone()).unwrap(), 0.4, 5);
    check_terminal_and_gradients(&OscBsb::new(params).unwrap(), 6);
}

#[test]
fn enum_dispatch_matches_concrete_problem() {
    let b = bsb(2);
    let p = Problem::Bsb(b.clone());
    let x = row(&[1.0, 0.5]);
    assert_eq!(p.exact(&Eager, 0.2, &x), b.exact(&Eager, 0.2, &x));
    assert_eq!(p.name(), "bsb");
    assert!(p.is_decoupled() && p.has_exact());
}
