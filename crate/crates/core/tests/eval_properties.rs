use semcom::allocation::Strategy;
use semcom::channel::Dispersion;
use semcom::datasets::{gen_gaussian_mixture, split, Dataset, SplitSpec};
use semcom::eval::{
    half_split_analysis, pca_2d, run_snr_sweep, silhouette, ChannelCondition, ChannelGeometry, Half, SweepConfig,
};
use semcom::ib_mask::{generate_mask, RobustnessMask};
use semcom::rng::Rng;
use semcom::transceiver::{train, TrainConfig, TscModel, UnitNoise};

struct Fixture {
    model: TscModel,
    mask: RobustnessMask,
    train: Dataset,
    test: Dataset,
}

fn fixture() -> Fixture {
    let ds = gen_gaussian_mixture(4, 8, 60, 1.0, 3).unwrap();
    let (train_set, test) = split(&ds, SplitSpec { train_fraction: 0.6, seed: 3 }).unwrap();
    let cfg = TrainConfig {
        m: 8,
        epochs: 20,
        encoder_hidden: vec![16],
        decoder_hidden: vec![16, 8],
        ..TrainConfig::default()
    };
    let model = train(&train_set, &cfg).unwrap();
    let mask = generate_mask(&model, &train_set, &Default::default()).unwrap();
    Fixture {
        model,
        mask,
        train: train_set,
        test,
    }
}

const GEOMETRY: ChannelGeometry = ChannelGeometry {
    subchannels: 4,
    capacity: 2,
    dispersion: Dispersion::Variance,
};

fn sweep(f: &Fixture, snr: Vec<f64>, var: Vec<f64>, n: usize) -> semcom::eval::SweepReport {
    let cfg = SweepConfig {
        snr_points_db: snr,
        variance_list_db: var,
        realizations_per_point: n,
        ..SweepConfig::default()
    };
    run_snr_sweep(&f.model, &f.mask, GEOMETRY, &f.test, &cfg).unwrap()
}

#[test]
fn zero_variance_makes_allocation_irrelevant() {
    let f = fixture();
    let rep = sweep(&f, vec![-5.0, 0.0, 5.0], vec![0.0], 20);
    for snr in [-5.0, 0.0, 5.0] {
        let rows: Vec<_> = [Strategy::Proposed, Strategy::Random, Strategy::WorstCase]
            .iter()
            .map(|&s| rep.row(snr, 0.0, s).unwrap())
            .collect();
        for a in &rows {
            for b in &rows {
                let se = ((a.std_accuracy.powi(2) + b.std_accuracy.powi(2)) / a.n as f64).sqrt();
                assert!((a.mean_accuracy - b.mean_accuracy).abs() <= 2.0 * se + 1e-12);
            }
        }
    }
}

#[test]
fn near_noiseless_channels_recover_clean_accuracy() {
    let f = fixture();
    let clean = f
        .model
        .evaluate_accuracy(&f.test, &UnitNoise::Scalar(0.0), &mut Rng::new(0, 0))
        .unwrap();
    let rep = sweep(&f, vec![60.0], vec![15.0, 2.0], 5);
    for row in &rep.rows {
        assert!((row.mean_accuracy - clean).abs() <= 0.01, "{row:?} vs clean {clean}");
    }
}

#[test]
fn accuracy_rises_with_snr_up_to_noise() {
    let f = fixture();
    let snr = vec![-10.0, -5.0, 0.0, 5.0, 10.0, 20.0];
    let rep = sweep(&f, snr.clone(), vec![2.0], 20);
    for s in [Strategy::Proposed, Strategy::Random, Strategy::WorstCase] {
        for w in snr.windows(2) {
            let (lo, hi) = (rep.row(w[0], 2.0, s).unwrap(), rep.row(w[1], 2.0, s).unwrap());
            let se = ((lo.std_accuracy.powi(2) + hi.std_accuracy.powi(2)) / lo.n as f64).sqrt();
            assert!(hi.mean_accuracy >= lo.mean_accuracy - 2.0 * se, "{s}: {lo:?} -> {hi:?}");
        }
    }
}

#[test]
fn sweep_rows_are_well_formed_and_reproducible() {
    let f = fixture();
    let a = sweep(&f, vec![0.0, 10.0], vec![15.0, 2.0], 4);
    let b = sweep(&f, vec![0.0, 10.0], vec![15.0, 2.0], 4);
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.rows.len(), 2 * 2 * 3);
    assert!(a.to_csv().starts_with("snr_db,variance_db,strategy,mean_accuracy,std_accuracy,n\n"));
    for row in &a.rows {
        assert_eq!(row.n, 4);
        assert!((0.0..=1.0).contains(&row.mean_accuracy));
    }
}

#[test]
fn infeasible_geometry_is_rejected() {
    let f = fixture();
    let geometry = ChannelGeometry {
        subchannels: 2,
        capacity: 2,
        dispersion: Dispersion::Variance,
    };
    let err = run_snr_sweep(&f.model, &f.mask, geometry, &f.test, &SweepConfig::default()).unwrap_err();
    assert!(matches!(err, semcom::Error::Config(_)));
}

#[test]
fn half_split_report_is_complete() {
    let f = fixture();
    let rep = half_split_analysis(&f.model, &f.mask, &f.train, &f.test, 0.0, 1).unwrap();
    assert_eq!(rep.first_half_units.len() + rep.second_half_units.len(), 8);
    let first: f64 = rep.first_half_units.iter().map(|&k| f.mask.r[k]).sum();
    let second: f64 = rep.second_half_units.iter().map(|&k| f.mask.r[k]).sum();
    assert!(first >= second);
    for half in [Half::First, Half::Second] {
        for ch in [ChannelCondition::Ideal, ChannelCondition::Noisy] {
            let c = rep.get(half, ch);
            assert!((-1.0..=1.0).contains(&c.silhouette));
            assert!((0.0..=1.0).contains(&c.accuracy));
            assert_eq!(c.coords.len(), f.test.len());
        }
    }
    let csv = rep.coords_csv();
    assert!(csv.starts_with("half,channel,class,pc1,pc2\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * f.test.len());
    let again = half_split_analysis(&f.model, &f.mask, &f.train, &f.test, 0.0, 1).unwrap();
    assert_eq!(rep.to_json().unwrap(), again.to_json().unwrap());
}

/// Cyclic Jacobi eigenvalues of a small symmetric matrix.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j].powi(2))
            .sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

#[test]
fn pca_projection_is_the_optimal_rank_two_approximation() {
    for seed in 0..10 {
        let mut rng = Rng::new(seed, 0);
        let d = 5;
        let scales: Vec<f64> = (0..d).map(|i| 3.0 / (i as f64 + 1.0)).collect();
        let mix: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.standard_normal()).collect()).collect();
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let g: Vec<f64> = scales.iter().map(|s| s * rng.standard_normal()).collect();
                (0..d).map(|i| (0..d).map(|j| mix[i][j] * g[j]).sum()).collect()
            })
            .collect();
        let n = pts.len() as f64;
        let mean: Vec<f64> = (0..d).map(|i| pts.iter().map(|p| p[i]).sum::<f64>() / n).collect();
        let mut cov = vec![vec![0.0; d]; d];
        for p in &pts {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]) / n;
                }
            }
        }
        let ev = jacobi_eigenvalues(cov);
        let optimal: f64 = ev[2..].iter().sum();

        let pca = pca_2d(&pts).unwrap();
        assert!((pca.eigenvalues[0] - ev[0]).abs() < 1e-6 * ev[0]);
        assert!((pca.eigenvalues[1] - ev[1]).abs() < 1e-6 * ev[0]);
        let residual: f64 = pts
            .iter()
            .zip(&pca.coords)
            .map(|(p, c)| {
                (0..d)
                    .map(|i| {
                        let recon = c[0] * pca.components[0][i] + c[1] * pca.components[1][i];
                        (p[i] - mean[i] - recon).powi(2)
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            / n;
        assert!(residual <= optimal * (1.0 + 1e-6) + 1e-12, "seed {seed}: {residual} vs {optimal}");
    }
}

#[test]
fn silhouette_of_labelled_pca_clusters() {
    let mut rng = Rng::new(8, 0);
    let pts: Vec<Vec<f64>> = (0..90)
        .map(|i| {
            let c = (i % 3) as f64;
            (0..4).map(|k| if k == 0 { 10.0 * c } else { 0.0 } + rng.standard_normal()).collect()
        })
        .collect();
    let labels: Vec<usize> = (0..90).map(|i| i % 3).collect();
    let p = pca_2d(&pts).unwrap();
    assert!(silhouette(&p.coords, &labels).unwrap().score > 0.7);
}
