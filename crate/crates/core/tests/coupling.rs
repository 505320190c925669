use lleap::model::SimConfig;
use lleap::scenario_io::builtin;
use lleap::uq::stats::{ks_two_sample, mean_var};
use lleap::uq::{LevelSampler, ScenarioSampler};

const PAIRS: u64 = 1500;

fn stochastic_push(seed: u64) -> ScenarioSampler {
    let sc = builtin("push_6_1").unwrap();
    ScenarioSampler {
        network: sc.network.clone(),
        config: SimConfig { stochastic: true, ..sc.config.clone() },
        policy: None,
        orders: None,
        qoi: sc.default_qoi(),
        distribution: None,
        dt0: 16.0,
        seed,
    }
}

fn pairs(s: &impl LevelSampler, level: u32) -> (Vec<f64>, Vec<f64>) {
    (0..PAIRS).map(|n| s.level_sample(level, n, 0).unwrap()).unzip()
}

fn singles(s: &impl LevelSampler, level: u32) -> Vec<f64> {
    (0..PAIRS).map(|n| s.single_sample(level, n, 1).unwrap()).collect()
}

#[test]
fn coupled_fine_path_has_the_uncoupled_law() {
    let s = stochastic_push(11);
    let (fine, _) = pairs(&s, 2);
    let (_, p) = ks_two_sample(&fine, &singles(&s, 2));
    assert!(p >= 0.01, "p = {p}");
}

#[test]
fn coupled_coarse_path_has_the_uncoupled_law() {
    let s = stochastic_push(12);
    let (_, coarse) = pairs(&s, 2);
    let (_, p) = ks_two_sample(&coarse, &singles(&s, 1));
    assert!(p >= 0.01, "p = {p}");
}

#[test]
fn coupling_shrinks_the_difference_variance() {
    let s = stochastic_push(13);
    for level in 1..4 {
        let (fine, coarse) = pairs(&s, level);
        let diff: Vec<f64> = fine.iter().zip(&coarse).map(|(f, c)| f - c).collect();
        let (_, v_fine) = mean_var(&fine);
        let (_, v_diff) = mean_var(&diff);
        assert!(v_diff < v_fine, "level {level}: var(diff) {v_diff} vs var(fine) {v_fine}");
    }
}

#[test]
fn level_zero_pairs_have_no_coarse_path() {
    let s = stochastic_push(14);
    let (fine, coarse) = pairs(&s, 0);
    assert!(coarse.iter().all(|&c| c == 0.0));
    let (_, p) = ks_two_sample(&fine, &singles(&s, 0));
    assert!(p >= 0.01, "p = {p}");
}
