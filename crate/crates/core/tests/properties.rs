use std::f64::consts::TAU;

use kamtori::config::{parse_config, parse_document, Value};
use kamtori::output::{orbit_csv, read_orbit_csv};
use kamtori::spectral::cohomological_residual;
use kamtori::{
    inverse_step, iterate, jacobian_determinant, map_step, project_resonant, solve_cohomological, Convention, Harmonic,
    PhaseState, ResonanceModule, TrigSeries,
};
use proptest::prelude::*;

fn three_wave() -> TrigSeries {
    TrigSeries::three_wave([1.0; 3], [0.0; 3])
}

fn random_potential() -> impl Strategy<Value = TrigSeries> {
    (prop::array::uniform3(0.2f64..1.5), prop::array::uniform3(0.0f64..TAU)).prop_map(|(a, p)| TrigSeries::three_wave(a, p))
}

fn state() -> impl Strategy<Value = PhaseState> {
    (prop::array::uniform2(-4.0f64..4.0), prop::array::uniform2(-20.0f64..20.0))
        .prop_map(|(y, x)| PhaseState::new(y.to_vec(), x.to_vec()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn step_then_inverse_is_identity(s in state(), v in random_potential(), eps in 0.0f64..0.5) {
        let back = inverse_step(&map_step(&s, &v, eps).unwrap(), &v, eps).unwrap();
        for j in 0..2 {
            prop_assert!((back.y[j] - s.y[j]).abs() < 1e-12);
            prop_assert!((back.lift(j) - s.lift(j)).abs() < 1e-11);
        }
    }

    #[test]
    fn map_preserves_volume(s in state(), v in random_potential(), eps in 0.0f64..0.5) {
        let d = jacobian_determinant(&s, &v, eps, 1e-5).unwrap();
        prop_assert!((d - 1.0).abs() < 1e-6, "det = {d}");
    }

    #[test]
    fn reduced_angles_stay_in_range(s in state(), eps in 0.0f64..0.5, steps in 1u64..200) {
        let o = iterate(&s, &three_wave(), eps, steps, 1).unwrap();
        for st in &o.states {
            prop_assert!(st.x.iter().all(|x| (0.0..TAU).contains(x)));
        }
    }

    #[test]
    fn gradient_matches_finite_difference(v in random_potential(), x in prop::array::uniform2(0.0f64..TAU)) {
        let g = v.gradient(&x);
        let h = 1e-6;
        for j in 0..2 {
            let (mut a, mut b) = (x, x);
            a[j] += h;
            b[j] -= h;
            prop_assert!((g[j] - (v.eval(&a) - v.eval(&b)) / (2.0 * h)).abs() < 1e-7);
        }
    }

    #[test]
    fn averaging_is_a_projection(v in random_potential(), k in prop::array::uniform2(-2i64..=2)) {
        prop_assume!(k != [0, 0]);
        let g = ResonanceModule::saturated(2, &[k.to_vec()]);
        let once = project_resonant(&v, &g).unwrap();
        prop_assert_eq!(project_resonant(&once, &g).unwrap(), once);
    }

    #[test]
    fn homological_identity_holds(v in random_potential(), nu in prop::array::uniform2(0.3f64..6.0)) {
        let g = ResonanceModule::trivial(2);
        for conv in [Convention::Flow, Convention::Map] {
            match solve_cohomological(&v, &nu, &g, 1e-3, conv) {
                Ok(sol) => {
                    let r = cohomological_residual(&v, &sol.s, &sol.v, &nu, conv, 24).unwrap();
                    prop_assert!(r < 1e-9, "residual {r}");
                }
                Err(kamtori::Error::SmallDivisor { .. }) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }

    #[test]
    fn orbit_csv_round_trips(s in state(), eps in 0.0f64..0.5) {
        let o = iterate(&s, &three_wave(), eps, 40, 2).unwrap();
        prop_assert_eq!(read_orbit_csv(&orbit_csv(&o)).unwrap(), o.states);
    }

    #[test]
    fn config_numbers_round_trip(xs in prop::collection::vec(-1e6f64..1e6, 1..6), i in any::<i32>()) {
        let list: Vec<String> = xs.iter().map(|x| format!("{x:?}")).collect();
        let text = format!("[s]\nv = [{}]\nn = {i}\n", list.join(", "));
        let d = parse_document(&text).unwrap();
        prop_assert_eq!(&d[0].value, &Value::Array(xs.iter().map(|&x| Value::Float(x)).collect()));
        prop_assert_eq!(&d[1].value, &Value::Int(i64::from(i)));
    }

    #[test]
    fn negative_eps_always_rejected(eps in -10.0f64..-1e-9) {
        let text = format!("[simulate]\neps = {eps:?}\ny0 = [0, 0]\nx0 = [0, 0]\n");
        let errs = parse_config(&text).unwrap_err();
        prop_assert!(errs.iter().any(|e| e.message == "eps must be ≥ 0" && e.line == 2));
    }
}

#[test]
fn duplicate_harmonics_rejected_programmatically() {
    let terms = vec![Harmonic::new(vec![1, 1], 1.0, 0.0), Harmonic::new(vec![-1, -1], 1.0, 0.0)];
    assert!(matches!(TrigSeries::new(2, terms), Err(kamtori::Error::DuplicateHarmonic { .. })));
}
