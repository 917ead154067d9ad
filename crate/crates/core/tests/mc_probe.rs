use botscan::detect::{
    crosses_threshold, monte_carlo_calibrate_both, StatName, StatOptions,
};
use botscan::sample::{derive_stream, sample_alternative, sample_null, Density, ModelParams};
use rayon::prelude::*;

#[test]
#[ignore]
fn mc_probe_d7() {
    let null_params = ModelParams::new(10_000, 7, Density::AverageDegree(10.0), 0);
    let alt_params = ModelParams::new(10_000, 7, Density::AverageDegree(10.0), 10);
    let opts = StatOptions::default();

    for cal_seed in [0xCA11u64, 0xCA12] {
        let (star, dist) =
            monte_carlo_calibrate_both(&null_params, 2000, &[0.05], cal_seed, &opts).unwrap();
        let star_thr = star.threshold(0.05).unwrap();
        let dist_thr = dist.threshold(0.05).unwrap();
        let ds = dist.sorted_samples.as_ref().unwrap();
        println!(
            "cal_seed={cal_seed:#x}: star_thr={star_thr}, dist_thr={dist_thr:.5} (null dist: min {:.5}, 5% {:.5}, median {:.5}, 95% {:.5})",
            ds[0],
            ds[99],
            ds[999],
            ds[1899]
        );
        for alt_seed in [1u64, 2, 3] {
            let outcomes: Vec<(f64, f64)> = (0..300u64)
                .into_par_iter()
                .map(|rep| {
                    let seed = derive_stream(alt_seed, &[rep]);
                    let sample = sample_alternative(&alt_params, seed).unwrap();
                    let stars = botscan::detect::isolated_star_profile(
                        &sample.graph,
                        opts.star_method,
                    )
                    .unwrap()
                    .max_star as f64;
                    let avg = sample.graph.average_graph_distance().unwrap().average;
                    (stars, avg)
                })
                .collect();
            let star_pow = outcomes
                .iter()
                .filter(|o| crosses_threshold(StatName::MaxStar, o.0, star_thr))
                .count() as f64
                / 300.0;
            let dist_pow = outcomes
                .iter()
                .filter(|o| crosses_threshold(StatName::AvgDistance, o.1, dist_thr))
                .count() as f64
                / 300.0;
            let mean_alt: f64 = outcomes.iter().map(|o| o.1).sum::<f64>() / 300.0;
            println!(
                "  alt_seed={alt_seed}: star_power={star_pow:.4}, dist_power={dist_pow:.4}, mean alt avg-dist {mean_alt:.5}"
            );
        }
        // Fresh-null audit for this calibration.
        let audit: Vec<f64> = (0..300u64)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_stream(0xAAAA, &[rep]);
                let sample = sample_null(&null_params, seed).unwrap();
                sample.graph.average_graph_distance().unwrap().average
            })
            .collect();
        let t1 = audit
            .iter()
            .filter(|&&a| crosses_threshold(StatName::AvgDistance, a, dist_thr))
            .count() as f64
            / 300.0;
        let mean_null: f64 = audit.iter().sum::<f64>() / 300.0;
        println!("  fresh-null: dist type-1 {t1:.4}, mean null avg-dist {mean_null:.5}");
    }
}
