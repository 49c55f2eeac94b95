mod support;

use num_complex::Complex64;
use scsc_core::ocsc::code_spectra;
use scsc_core::scsc::random_unit_filters;
use scsc_core::solvers::dictionary_objective;
use scsc_core::synthetic::sparse_codes;
use scsc_core::tensor::fft;
use scsc_core::{
    aggregate_codes, init_model, init_ocsc, FilterSupport, HistoryStats, OcscConfig, ScscConfig, Signal, SpatialArray,
};

/// Plain O(P²) multidimensional DFT.
fn naive_dft(x: &[f64], ext: &[usize]) -> Vec<Complex64> {
    let p = x.len();
    let idx = |mut i: usize| {
        let mut v = vec![0; ext.len()];
        for d in (0..ext.len()).rev() {
            v[d] = i % ext[d];
            i /= ext[d];
        }
        v
    };
    (0..p)
        .map(|k| {
            let kk = idx(k);
            (0..p)
                .map(|n| {
                    let nn = idx(n);
                    let phase: f64 = (0..ext.len())
                        .map(|d| (kk[d] * nn[d]) as f64 / ext[d] as f64)
                        .sum();
                    Complex64::from_polar(x[n], -2.0 * std::f64::consts::PI * phase)
                })
                .sum()
        })
        .collect()
}

struct Batch {
    h: Vec<Complex64>,
    g: Vec<Complex64>,
    energy: f64,
}

/// Batch means over every sample seen so far.
fn batch(ys: &[Vec<Vec<f64>>], xs: &[Vec<f64>], ext: &[usize]) -> Batch {
    let n = ys[0].len();
    let p = xs[0].len();
    let t = xs.len() as f64;
    let mut h = vec![Complex64::new(0.0, 0.0); p * n * n];
    let mut g = vec![Complex64::new(0.0, 0.0); p * n];
    let mut energy = 0.0;
    for (y, x) in ys.iter().zip(xs) {
        let yt: Vec<Vec<Complex64>> = y.iter().map(|c| naive_dft(c, ext)).collect();
        let xt = naive_dft(x, ext);
        for f in 0..p {
            for i in 0..n {
                for j in 0..n {
                    h[f * n * n + i * n + j] += yt[i][f] * yt[j][f].conj() / t;
                }
                g[f * n + i] += xt[f].conj() * yt[i][f] / t;
            }
        }
        energy += xt.iter().map(|v| v.norm_sqr()).sum::<f64>() / t;
    }
    Batch { h, g, energy }
}

fn assert_matches(stats: &HistoryStats, oracle: &Batch) {
    let scale = 1.0 + oracle.energy;
    let dh = stats
        .second_moments()
        .iter()
        .zip(&oracle.h)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let dg = stats
        .cross_terms()
        .iter()
        .zip(&oracle.g)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(dh < 1e-10 * scale, "second moments off by {dh}");
    assert!(dg < 1e-10 * scale, "cross terms off by {dg}");
    assert!((stats.energy() - oracle.energy).abs() < 1e-10 * scale);
}

#[test]
fn running_means_match_batch_sums() {
    let mut rng = support::rng(1);
    for ext in [vec![12usize], vec![4, 5]] {
        let p: usize = ext.iter().product();
        let n = 3;
        let mut stats = HistoryStats::new(n, &ext);
        let mut ys = Vec::new();
        let mut xs = Vec::new();
        for t in 1..=25 {
            let y: Vec<Vec<f64>> = (0..n).map(|_| support::uniform(p, &mut rng)).collect();
            let x = support::uniform(p, &mut rng);
            let spectra: Vec<_> = y
                .iter()
                .map(|c| fft(&SpatialArray::new(ext.clone(), c.clone()).unwrap()).unwrap())
                .collect();
            stats
                .update(&spectra, &fft(&SpatialArray::new(ext.clone(), x.clone()).unwrap()).unwrap())
                .unwrap();
            ys.push(y);
            xs.push(x);
            assert_eq!(stats.count(), t);
            if t % 5 == 0 {
                assert_matches(&stats, &batch(&ys, &xs, &ext));
            }
        }
        assert!(stats.max_hermitian_defect() < 1e-14);
        assert!(stats.is_positive_semidefinite(1e-10));
    }
}

#[test]
fn dictionary_objective_is_the_mean_spatial_fit() {
    let mut rng = support::rng(2);
    let fext = vec![3];
    let pext = vec![16];
    let support_ = FilterSupport::new(fext.clone(), pext.clone()).unwrap();
    let bank = random_unit_filters(&support_, 2, 4).unwrap();
    let filters: Vec<Vec<f64>> = bank.spatial_filters().unwrap().iter().map(|f| f.data().to_vec()).collect();
    let mut stats = HistoryStats::new(2, &pext);
    let mut want = 0.0;
    for _ in 0..25 {
        let y: Vec<Vec<f64>> = (0..2).map(|_| support::uniform(16, &mut rng)).collect();
        let x = support::uniform(16, &mut rng);
        let spectra: Vec<_> = y.iter().map(|c| fft(&SpatialArray::from_vec(c.clone()).unwrap()).unwrap()).collect();
        stats.update(&spectra, &fft(&SpatialArray::from_vec(x.clone()).unwrap()).unwrap()).unwrap();
        let mut e = x.clone();
        for (f, yr) in filters.iter().zip(&y) {
            for (ei, ci) in e.iter_mut().zip(support::conv(f, &fext, yr, &pext)) {
                *ei -= ci;
            }
        }
        want += 0.5 * e.iter().map(|v| v * v).sum::<f64>() / 25.0;
    }
    let got = dictionary_objective(&stats, bank.spectra());
    assert!((got - want).abs() < 1e-10 * (1.0 + want), "{got} vs {want}");
}

#[test]
fn scsc_steps_accumulate_the_aggregated_codes() {
    let mut rng = support::rng(3);
    let ext = vec![6, 6];
    let support_ = FilterSupport::new(vec![2, 2], ext.clone()).unwrap();
    let mut config = ScscConfig::new(2, 4, 0.05).unwrap();
    config.niapg.max_iterations = 30;
    config.dictionary_admm.max_iterations = 5;
    let mut model = init_model(&support_, config, 8).unwrap();
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for i in 0..25 {
        let x = support::uniform(36, &mut rng);
        let signal = Signal::new(SpatialArray::new(ext.clone(), x.clone()).unwrap()).unwrap();
        let step = model.train_step(&signal, None, i).unwrap();
        let y = aggregate_codes(&step.codes, &step.weights).unwrap();
        let spatial: Vec<Vec<f64>> = y
            .iter()
            .map(|s| scsc_core::tensor::inverse_fft(s).unwrap().into_data())
            .collect();
        ys.push(spatial);
        xs.push(x);
    }
    assert_eq!(model.samples_seen(), 25);
    assert_matches(&model.stats, &batch(&ys, &xs, &ext));
}

#[test]
fn ocsc_steps_accumulate_the_code_spectra() {
    let mut rng = support::rng(4);
    let ext = vec![16];
    let support_ = FilterSupport::new(vec![3], ext.clone()).unwrap();
    let config = OcscConfig::new(3, 0.05);
    let mut model = init_ocsc(&support_, config, 2).unwrap();
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for i in 0..25 {
        let z = sparse_codes(&ext, 3, 0.2, &mut rng).unwrap();
        let x = support::uniform(16, &mut rng);
        let signal = Signal::new(SpatialArray::from_vec(x.clone()).unwrap()).unwrap();
        let step = model.train_step(&signal, Some(&z), i).unwrap();
        let spatial: Vec<Vec<f64>> = code_spectra(&step.codes)
            .iter()
            .map(|s| scsc_core::tensor::inverse_fft(s).unwrap().into_data())
            .collect();
        ys.push(spatial);
        xs.push(x);
    }
    assert_matches(&model.stats, &batch(&ys, &xs, &ext));
}

