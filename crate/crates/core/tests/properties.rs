use proptest::prelude::*;

use ssnal_plm::bench::{
    format_sci, mean_std, nnz_estimate, parse_report, relative_error, render_report, AggregateRow, ReportFormat,
};
use ssnal_plm::linalg::norm2;
use ssnal_plm::prox::{moreau_check, project_box_inf, soft_threshold_weighted, BoxRadii};
use ssnal_plm::smoothing::{nadaraya_watson_weights, EpanechnikovSmoother, SampleSmoother};
use ssnal_plm::ssn::{psi_gradient, psi_value, InnerProblem};
use ssnal_plm::ssnal::{kkt_residual, ssnal_solve, SolveOptions};
use ssnal_plm::{DenseMatrix, TransformedProblem};

fn vec_and_radii(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..max_len).prop_flat_map(|n| {
        (
            prop::collection::vec(-50.0..50.0f64, n),
            prop::collection::vec(0.0..10.0f64, n),
        )
    })
}

fn small_problem() -> impl Strategy<Value = TransformedProblem> {
    (2usize..8, 3usize..20).prop_flat_map(|(p, n)| {
        (
            prop::collection::vec(-2.0..2.0f64, p * n),
            prop::collection::vec(-3.0..3.0f64, n),
        )
            .prop_map(move |(x, y)| {
                TransformedProblem::normalized(DenseMatrix::from_row_major(p, n, x).unwrap(), y).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn soft_threshold_shrinks_toward_zero((x, r) in vec_and_radii(40)) {
        let radii = BoxRadii::new(r.clone()).unwrap();
        let s = soft_threshold_weighted(&x, &radii);
        for ((xi, si), ri) in x.iter().zip(&s).zip(&r) {
            prop_assert!(si.abs() <= xi.abs());
            prop_assert!(*si == 0.0 || si.signum() == xi.signum());
            prop_assert!((xi - si).abs() <= ri + 1e-12);
        }
    }

    #[test]
    fn moreau_identity((x, r) in vec_and_radii(40)) {
        prop_assert!(moreau_check(&x, &BoxRadii::new(r).unwrap()) <= 1e-12);
    }

    #[test]
    fn projection_is_idempotent((x, r) in vec_and_radii(40)) {
        let radii = BoxRadii::new(r).unwrap();
        let once = project_box_inf(&x, &radii);
        prop_assert_eq!(project_box_inf(&once, &radii), once);
    }

    #[test]
    fn nnz_matches_cumulative_scan(beta in prop::collection::vec(prop_oneof![Just(0.0), -10.0..10.0f64], 0..60)) {
        // oracle: literal cumulative sum over magnitudes sorted descending
        let total: f64 = beta.iter().map(|b| b.abs()).sum();
        let mut mags: Vec<f64> = beta.iter().map(|b| b.abs()).collect();
        mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut want = 0;
        if total > 0.0 {
            let mut acc = 0.0;
            for m in &mags {
                acc += m;
                want += 1;
                if acc >= 0.999 * total {
                    break;
                }
            }
        }
        prop_assert_eq!(nnz_estimate(&beta), want);
    }

    #[test]
    fn mean_std_matches_welford(values in prop::collection::vec(-1e3..1e3f64, 2..50)) {
        let (mut mean, mut m2) = (0.0, 0.0);
        for (k, v) in values.iter().enumerate() {
            let d = v - mean;
            mean += d / (k + 1) as f64;
            m2 += d * (v - mean);
        }
        let std = (m2 / (values.len() - 1) as f64).sqrt();
        let (m, s) = mean_std(&values);
        prop_assert!((m - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
        prop_assert!((s - std).abs() <= 1e-12 * (1.0 + std));
        prop_assert!(s >= 0.0);
    }

    #[test]
    fn relative_error_is_scale_free(b in prop::collection::vec(0.5..5.0f64, 1..20), k in 0.1..10.0f64) {
        let hat: Vec<f64> = b.iter().map(|x| x * 0.9).collect();
        let e1 = relative_error(&hat, &b).unwrap();
        let bk: Vec<f64> = b.iter().map(|x| x * k).collect();
        let hk: Vec<f64> = hat.iter().map(|x| x * k).collect();
        prop_assert!((relative_error(&hk, &bk).unwrap() - e1).abs() < 1e-12);
    }

    #[test]
    fn report_round_trip(vals in prop::collection::vec(-1e6..1e6f64, 10)) {
        // rows already at 7 significant digits survive the round trip exactly
        let f: Vec<f64> = vals.iter().map(|v| format_sci(*v).parse().unwrap()).collect();
        let row = AggregateRow {
            method: "SSNAL_a".into(),
            re_err: (f[0], f[1]),
            nnz: (f[2], f[3]),
            res: (f[4], f[5]),
            time: (f[6], f[7]),
            iter: (f[8], f[9]),
        };
        for fmt in [ReportFormat::Csv, ReportFormat::Json] {
            let text = render_report(std::slice::from_ref(&row), fmt, &[]);
            prop_assert_eq!(parse_report(&text, fmt).unwrap(), vec![row.clone()]);
        }
    }

    #[test]
    fn fast_smoother_matches_dense_weights(
        t in prop::collection::vec(0.0..1.0f64, 3..60),
        h in 0.2..1.5f64,
        seed in 0u64..1000,
    ) {
        let values: Vec<f64> = (0..t.len()).map(|i| ((i as u64 * 7919 + seed) % 101) as f64 / 10.0 - 5.0).collect();
        let dense = nadaraya_watson_weights(&t, h).unwrap().smooth(&values);
        let fast = EpanechnikovSmoother::new(&t, h).unwrap().smooth(&values);
        for (a, b) in dense.iter().zip(&fast) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{} vs {}", a, b);
        }
    }

    #[test]
    fn psi_gradient_matches_differences(prob in small_problem(), sigma in 0.1..3.0f64, lam in 0.01..1.0f64) {
        let beta: Vec<f64> = (0..prob.p()).map(|j| (j as f64 * 0.9).sin()).collect();
        let radii = BoxRadii::uniform(prob.p(), lam);
        let inner = InnerProblem::new(&prob, &beta, sigma, &radii).unwrap();
        let u: Vec<f64> = (0..prob.n()).map(|i| (i as f64 * 1.7).cos()).collect();
        let g = psi_gradient(&u, &inner);
        // ψ is C¹ with a Lipschitz gradient, so a small step bounds the error by O(h)
        let h = 1e-7;
        let mut up = u.clone();
        for i in 0..prob.n() {
            up[i] = u[i] + h;
            let fp = psi_value(&up, &inner);
            up[i] = u[i] - h;
            let fm = psi_value(&up, &inner);
            up[i] = u[i];
            let fd = (fp - fm) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()), "coord {}: {} vs {}", i, fd, g[i]);
        }
    }

    #[test]
    fn ssnal_solution_satisfies_kkt(prob in small_problem(), frac in 0.05..0.9f64) {
        let lmax = prob.xty().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assume!(lmax > 1e-8);
        let radii = BoxRadii::uniform(prob.p(), frac * lmax);
        let rep = ssnal_solve(&prob, &radii, &SolveOptions { max_outer: 200, ..SolveOptions::default() }, None).unwrap();
        prop_assert!(rep.converged);
        prop_assert_eq!(kkt_residual(&rep.beta_hat, &prob, &radii), rep.res);
        prop_assert!(rep.res < 1e-6);
        prop_assert!(norm2(&rep.beta_hat).is_finite());
    }
}
