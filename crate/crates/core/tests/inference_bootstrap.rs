use std::collections::BTreeMap;

use fragility::exposure::{synthesize_panel, BankRecord, ExposurePanel, PanelManifest, YearSpec};
use fragility::inference::*;
use fragility::network::AllocationMethod;
use proptest::prelude::*;

const PRE: [i32; 3] = [2014, 2016, 2018];
const POST: [i32; 2] = [2021, 2023];

fn config(b: usize, seed: u64) -> BootstrapConfig {
    BootstrapConfig {
        replicates: b,
        seed,
        method: AllocationMethod::Equal,
        spec: Specification::Level,
        pre_years: PRE.to_vec(),
        post_years: POST.to_vec(),
    }
}

fn small_manifest(sd_factor: f64) -> PanelManifest {
    let roster = ["DE", "FR", "IT", "ES", "NL"];
    let rows = [
        (2014, 20, 20_000.0),
        (2016, 18, 19_000.0),
        (2018, 16, 18_500.0),
        (2021, 15, 19_500.0),
        (2023, 14, 21_000.0),
    ];
    PanelManifest {
        years: rows
            .iter()
            .map(|&(year, n, e)| YearSpec {
                year,
                n_banks: n,
                total_exposure: Some(e),
                countries: roster.iter().map(|c| c.to_string()).collect(),
                exposure_sd: Some(sd_factor * e / n as f64),
            })
            .collect(),
        persistent_banks: 0,
    }
}

/// Same four banks every year, identical within a year; post-years carry
/// a thousand times the pre-year exposure.
fn huge_effect_panel() -> ExposurePanel {
    let leis = [
        "AAAAAAAAAAAAAAAAAAA1",
        "BBBBBBBBBBBBBBBBBBB2",
        "CCCCCCCCCCCCCCCCCCC3",
        "DDDDDDDDDDDDDDDDDDD4",
    ];
    let countries = ["DE", "DE", "FR", "FR"];
    let mut records = BTreeMap::new();
    for y in PRE.iter().chain(&POST) {
        let scale = if POST.contains(y) { 1000.0 } else { 1.0 };
        let banks = leis
            .iter()
            .zip(countries)
            .map(|(lei, c)| BankRecord {
                name: format!("Bank {lei}"),
                lei: lei.to_string(),
                country: c.to_string(),
                total_assets: 100.0 * scale,
                capital: 10.0 * scale,
                exposures: [("DE".to_string(), scale), ("FR".to_string(), scale)]
                    .into_iter()
                    .collect(),
            })
            .collect();
        records.insert(*y, banks);
    }
    ExposurePanel::new(records).unwrap()
}

#[test]
fn same_seed_is_byte_identical() {
    let panel = synthesize_panel(&PanelManifest::eba_calibration(), 7).unwrap();
    let a = bootstrap_did(&panel, &config(500, 7)).unwrap();
    let b = bootstrap_did(&panel, &config(500, 7)).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let c = bootstrap_did(&panel, &config(500, 8)).unwrap();
    assert_ne!(a.replicates, c.replicates);
    assert_eq!(a.point, c.point);
}

#[test]
fn result_independent_of_thread_count() {
    let panel = synthesize_panel(&small_manifest(1.0), 3).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| bootstrap_did(&panel, &config(200, 11)).unwrap());
    let b = four.install(|| bootstrap_did(&panel, &config(200, 11)).unwrap());
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

fn check_duality(r: &BootstrapResult) {
    let slack = 1.0 / r.b as f64 + 1e-12;
    for &y in &POST {
        let p = r.p_values[&y];
        assert!((0.0..=1.0).contains(&p));
        if r.ci_excludes_zero(y).unwrap() {
            assert!(p <= 0.05 + slack, "year {y}: CI {:?} excludes 0 but p = {p}", r.ci[&y]);
        } else {
            assert!(p >= 0.05 - slack, "year {y}: CI {:?} covers 0 but p = {p}", r.ci[&y]);
        }
    }
}

#[test]
fn p_value_and_ci_agree_across_seeds() {
    let manifest = PanelManifest::eba_calibration();
    for seed in 0..20 {
        let panel = synthesize_panel(&manifest, seed).unwrap();
        check_duality(&bootstrap_did(&panel, &config(200, seed)).unwrap());
    }
    // low dispersion pushes some runs to significance
    for seed in 0..10 {
        let panel = synthesize_panel(&small_manifest(0.1), seed).unwrap();
        check_duality(&bootstrap_did(&panel, &config(200, seed)).unwrap());
    }
}

#[test]
fn all_positive_draws_give_zero_p_value() {
    let r = bootstrap_did(&huge_effect_panel(), &config(100, 1)).unwrap();
    for &y in &POST {
        assert!(r.replicates[&y].iter().all(|&b| b > 0.0));
        assert_eq!(r.p_values[&y], 0.0);
        assert!(r.ci_excludes_zero(y).unwrap());
    }
}

#[test]
fn too_few_replicates_rejected() {
    let err = bootstrap_did(&huge_effect_panel(), &config(99, 1)).unwrap_err();
    assert!(matches!(err, InferenceError::TooFewReplicates(99)));
}

#[test]
fn ci_widens_with_dispersion() {
    let tight = small_manifest(0.3);
    let loose = small_manifest(1.5);
    let width = |r: &BootstrapResult| POST.iter().map(|y| r.ci[y].1 - r.ci[y].0).sum::<f64>();
    let (mut sum_tight, mut sum_loose) = (0.0, 0.0);
    for seed in 0..20 {
        let a = bootstrap_did(&synthesize_panel(&tight, seed).unwrap(), &config(200, seed)).unwrap();
        let b = bootstrap_did(&synthesize_panel(&loose, seed).unwrap(), &config(200, seed)).unwrap();
        sum_tight += width(&a);
        sum_loose += width(&b);
    }
    assert!(sum_loose > sum_tight, "loose {sum_loose} vs tight {sum_tight}");
}

#[test]
fn balanced_panel_keeps_persistent_banks() {
    let mut m = PanelManifest::eba_calibration();
    m.persistent_banks = 18;
    let p = synthesize_panel(&m, 5).unwrap();
    let b = balanced_panel(&p).unwrap();
    for y in b.years() {
        assert_eq!(b.year(*y).unwrap().len(), 18);
    }
}

fn series_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(100.0f64..5000.0, 5)
}

fn level(values: &[f64]) -> DidEstimate {
    let points = PRE.iter().chain(&POST).copied().zip(values.iter().copied()).collect();
    did_level(&FragilitySeries::new(points, &PRE, &POST).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn level_effects_translation_equivariant(v in series_strategy(), c in -90.0f64..1000.0) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let (a, b) = (level(&v), level(&shifted));
        for y in POST {
            prop_assert!((a.beta(y).unwrap() - b.beta(y).unwrap()).abs() <= 1e-9 * 5000.0);
        }
    }

    #[test]
    fn level_effects_scale_linearly(v in series_strategy(), k in 0.01f64..100.0) {
        let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
        let (a, b) = (level(&v), level(&scaled));
        for y in POST {
            let (ea, eb) = (a.effects[&y], b.effects[&y]);
            prop_assert!((eb.beta - k * ea.beta).abs() <= 1e-9 * k * 5000.0);
            prop_assert!((eb.pct_change - ea.pct_change).abs() <= 1e-9 * ea.pct_change.abs().max(1.0));
        }
    }

    #[test]
    fn detrended_zero_on_linear_series(g0 in -1e5f64..1e5, g1 in -100.0f64..100.0) {
        let points: Vec<(i32, f64)> = PRE.iter().chain(&POST).map(|&y| (y, g0 + g1 * (y - 2000) as f64)).collect();
        let est = did_detrended(&FragilitySeries::new(points, &PRE, &POST).unwrap()).unwrap();
        for y in POST {
            prop_assert!(est.beta(y).unwrap().abs() <= 1e-7 * (g0.abs() + 100.0 * g1.abs() + 1.0));
        }
    }

    #[test]
    fn p_value_in_unit_interval(draws in prop::collection::vec(-10.0f64..10.0, 1..300)) {
        let p = bootstrap_p_value(&draws);
        prop_assert!((0.0..=1.0).contains(&p));
    }
}
