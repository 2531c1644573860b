//! The simplex quantile regression against brute-force vertex enumeration.

mod common;

use asymq::qr::fit;

#[test]
fn simplex_matches_vertex_enumeration() {
    for inst in 0..50u64 {
        let (x, w, levels, p, tau) = common::instance(inst);
        let f = fit(&x, &w, &levels, p, tau).unwrap();
        let oracle = common::brute_force(&x, &w, &levels, p);
        let rel = (f.objective - oracle).abs() / oracle.abs().max(1.0);
        assert!(rel <= 1e-8, "instance {inst}: simplex {} vs oracle {oracle}", f.objective);
        assert!(f.certified, "instance {inst}: certificate {}", f.certificate);
    }
}
#[test]
fn single_precision_agrees_with_double() {
    let x: Vec<f32> = vec![1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 4.0, 1.0, 5.0];
    let w: Vec<f32> = vec![1.2, 1.9, 3.4, 3.9, 5.3];
    let levels = vec![0.5f32; 5];
    let a = fit(&x, &w, &levels, 2, 0.5).unwrap();
    let xd: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let wd: Vec<f64> = w.iter().map(|&v| v as f64).collect();
    let b = fit(&xd, &wd, &[0.5; 5], 2, 0.5).unwrap();
    assert!((a.objective as f64 - b.objective).abs() < 1e-4);
}
