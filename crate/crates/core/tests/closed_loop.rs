use std::sync::Arc;

use agc_core::controllers::{ControllerParams, ControllerSpec};
use agc_core::engine::{
    build_controller, compute_metrics, run_closed_loop, ControllerKind, LqrSettings,
};
use agc_core::hindsight::SocPolicyTable;
use agc_core::plant::PlantConfig;
use agc_core::signals::{reconstruct_uncorrected, synth_ace, AceSeries, SynthConfig};

fn series(hours: f64, seed: u64) -> AceSeries {
    synth_ace(&SynthConfig {
        seed,
        horizon_s: hours * 3600.0,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn controllers(plant: &PlantConfig) -> Vec<ControllerSpec> {
    let params = ControllerParams::default();
    let policy = Arc::new(SocPolicyTable::uniform(plant.bes.energy_mwh, 500, 5.0).unwrap());
    ControllerKind::ALL
        .iter()
        .map(|&k| {
            build_controller(
                k,
                &params,
                &LqrSettings::default(),
                plant,
                Some(policy.clone()),
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn reconstruction_recovers_uncorrected_ace() {
    let plant = PlantConfig::new(200.0, 15.0);
    let ace = series(2.0, 31);
    for spec in controllers(&plant) {
        let trace = run_closed_loop(&ace, &spec, &plant, 25.0).unwrap();
        let mk = |v: &[f64]| AceSeries::new(2.0, v.to_vec()).unwrap();
        let back = reconstruct_uncorrected(
            &mk(&trace.p_ace_mw),
            &mk(&trace.rega_mw),
            &mk(&trace.regd_mw),
            &plant,
            25.0,
        )
        .unwrap();
        for (a, b) in back.values().iter().zip(ace.values()) {
            assert!((a - b).abs() <= 1e-9, "{}: {a} vs {b}", spec.name());
        }
    }
}

#[test]
fn limits_and_identity_hold_for_every_controller() {
    let plant = PlantConfig::new(200.0, 15.0);
    let ace = series(6.0, 32);
    for spec in controllers(&plant) {
        let (ca, cd) = spec.limits();
        let t = run_closed_loop(&ace, &spec, &plant, 25.0).unwrap();
        let (mut pg, mut pe) = (0.0, 0.0);
        for i in 0..t.len() {
            assert_eq!(t.p_ace_mw[i], t.ace_uncorrected_mw[i] + pg + pe);
            assert!(t.rega_mw[i].abs() <= ca && t.regd_mw[i].abs() <= cd);
            assert!(t.p_e_mw[i].abs() <= cd && t.p_g_mw[i].abs() <= ca);
            assert!((0.0..=plant.bes.energy_mwh).contains(&t.soc_mwh[i]));
            pg = t.p_g_mw[i];
            pe = t.p_e_mw[i];
        }
    }
}

#[test]
fn split_storage_fleet_matches_aggregate() {
    let one = PlantConfig::new(200.0, 15.0);
    let two = PlantConfig {
        bes_units: 2,
        ..one
    };
    let ace = series(3.0, 33);
    for (a, b) in controllers(&one).iter().zip(controllers(&two)) {
        let ta = run_closed_loop(&ace, a, &one, 20.0).unwrap();
        let tb = run_closed_loop(&ace, &b, &two, 20.0).unwrap();
        let cols = |t: &agc_core::engine::SimTrace| {
            [
                t.p_ace_mw.clone(),
                t.regd_mw.clone(),
                t.p_e_mw.clone(),
                t.soc_mwh.clone(),
                t.i_ace_mws.clone(),
            ]
        };
        for (x, y) in cols(&ta).iter().zip(cols(&tb).iter()) {
            for (u, v) in x.iter().zip(y) {
                assert!(
                    (u - v).abs() <= 1e-9 * u.abs().max(1.0),
                    "{}: {u} vs {v}",
                    a.name()
                );
            }
        }
    }
}

#[test]
fn zero_policy_equals_plain_pi_regd() {
    let plant = PlantConfig::new(300.0, 15.0);
    let cfg = ControllerParams::default().proposed(&plant);
    let zero = ControllerSpec::Proposed {
        cfg,
        policy: Arc::new(SocPolicyTable::uniform(plant.bes.energy_mwh, 500, 0.0).unwrap()),
    };
    let ace = series(4.0, 34);
    let a = run_closed_loop(&ace, &zero, &plant, 10.0).unwrap();
    let b = run_closed_loop(&ace, &ControllerSpec::PiRegd(cfg), &plant, 10.0).unwrap();
    for (x, y) in a.regd_mw.iter().zip(&b.regd_mw) {
        assert!((x - y).abs() <= 1e-12);
    }
    assert_eq!(a.to_csv_string(), b.to_csv_string());
}

#[test]
fn traces_are_deterministic() {
    let plant = PlantConfig::new(200.0, 30.0);
    let ace = series(2.0, 35);
    for spec in controllers(&plant) {
        let a = run_closed_loop(&ace, &spec, &plant, 50.0).unwrap();
        let b = run_closed_loop(&ace, &spec, &plant, 50.0).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        let m = compute_metrics(&a, plant.bes.soc_ref_mwh).unwrap();
        assert!(m.mean_sq_pace_mw2 >= 0.0 && m.mean_sq_soc_dev_mwh2 >= 0.0);
    }
}

#[test]
fn recharge_keeps_soc_closer_than_pi_alone() {
    let plant = PlantConfig::new(200.0, 15.0);
    let cfg = ControllerParams::default().proposed(&plant);
    let ace = series(12.0, 36);
    let with = ControllerSpec::Proposed {
        cfg,
        policy: Arc::new(SocPolicyTable::uniform(plant.bes.energy_mwh, 10, 5.0).unwrap()),
    };
    let dev = |spec: &ControllerSpec| {
        let t = run_closed_loop(&ace, spec, &plant, 25.0).unwrap();
        compute_metrics(&t, plant.bes.soc_ref_mwh)
            .unwrap()
            .mean_sq_soc_dev_mwh2
    };
    assert!(dev(&with) < dev(&ControllerSpec::PiRegd(cfg)));
}
