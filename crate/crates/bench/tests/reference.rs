use stiffexp::ionic::VOLTAGE;
use stiffexp::postprocess::extract_biomarkers;
use stiffexp::{integrate, Family, SchemeSpec};
use stiffexp_bench::cache::{compute_reference, CacheStatus, ReferenceCache, ReferenceKey};
use stiffexp_bench::RunConfig;

fn key(cfg: &RunConfig, h: f64, r: u32) -> ReferenceKey {
    ReferenceKey {
        model: cfg.model.name().into(),
        params: cfg.params,
        stimulus: cfg.stimulus,
        horizon: cfg.horizon,
        m: cfg.steps_for(h).unwrap(),
        r,
    }
}

#[test]
fn cache_hit_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    let cache = ReferenceCache::new(dir.path());
    let k = key(&cfg, 0.2, 4);
    let (first, s1) = cache.get_or_compute(&k, &cfg.model()).unwrap();
    let (second, s2) = cache.get_or_compute(&k, &cfg.model()).unwrap();
    assert_eq!((s1, s2), (CacheStatus::Computed, CacheStatus::Hit));
    let bits = |t: &stiffexp::Trajectory| t.as_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&first), bits(&second));

    // a different key never reuses the file
    let other = ReferenceKey { r: 5, ..k.clone() };
    assert_ne!(cache.path(&k), cache.path(&other));
    assert_eq!(cache.load(&other).unwrap(), None);
}

#[test]
fn zero_refinement_is_rk4_at_h() {
    let cfg = RunConfig::default();
    let k = key(&cfg, 0.025, 0);
    let reference = compute_reference(&cfg.model(), k.fine_steps()).unwrap();
    let run = integrate(&cfg.model(), &SchemeSpec::new(Family::Rk, 4).unwrap(), k.m).unwrap();
    assert_eq!(reference.as_flat(), &run.states[..]);
}

#[test]
fn refinement_self_check() {
    let cfg = RunConfig::default();
    let model = cfg.model();
    let bm = |r: u32| {
        let traj = compute_reference(&model, key(&cfg, 0.0125, r).fine_steps()).unwrap();
        extract_biomarkers(&traj, VOLTAGE).unwrap()
    };
    let (a, b) = (bm(6), bm(7));
    for (x, y) in [(a.t_a, b.t_a), (a.t_r, b.t_r), (a.apd, b.apd)] {
        assert!((x - y).abs() <= 1e-6 * y.abs(), "{x} vs {y}");
    }
}
