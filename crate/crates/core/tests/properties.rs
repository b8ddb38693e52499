use proptest::prelude::*;

use korteweg::fields::{dealias, div, grad, integrate, l2_norm, laplacian};
use korteweg::functionals::{rel_entropy, ReferenceState};
use korteweg::io::{read_csv, write_csv, Snapshot};
use korteweg::model::bregman;
use korteweg::{AugmentedState, DiagnosticsRecord, FluidParams, GridSpec, PrimitiveState, ScalarField, VectorField};

fn grid_strategy() -> impl Strategy<Value = GridSpec> {
    prop_oneof![
        (4usize..=16).prop_map(|h| GridSpec::new(1, 2 * h).unwrap()),
        (4usize..=8).prop_map(|h| GridSpec::new(2, 2 * h).unwrap()),
        (4usize..=5).prop_map(|h| GridSpec::new(3, 2 * h).unwrap()),
    ]
}

fn field_on(g: GridSpec, lo: f64, hi: f64) -> impl Strategy<Value = ScalarField> {
    proptest::collection::vec(lo..hi, g.len()).prop_map(move |v| ScalarField::new(g, v).unwrap())
}

fn field() -> impl Strategy<Value = ScalarField> {
    grid_strategy().prop_flat_map(|g| field_on(g, -1.0, 1.0))
}

/// Positive and smooth enough that every spectral derivative is resolved.
fn positive_pair() -> impl Strategy<Value = (ScalarField, ScalarField)> {
    grid_strategy().prop_flat_map(|g| {
        let smooth = move |f: ScalarField| {
            let d = dealias(&dealias(&f).map(|x| x * 0.1));
            let d = dealias(&d);
            d.map(|x| 1.0 + 0.5 * x.tanh())
        };
        (field_on(g, -1.0, 1.0).prop_map(smooth), field_on(g, -1.0, 1.0).prop_map(smooth))
    })
}

fn bits(f: &ScalarField) -> Vec<u64> {
    f.values().iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dealias_is_idempotent(f in field()) {
        let once = dealias(&f);
        let twice = dealias(&once);
        let scale = l2_norm(&once).max(1e-300);
        prop_assert!(l2_norm(&(&twice - &once)) <= 1e-13 * scale);
    }

    #[test]
    fn laplacian_is_div_of_grad(f in field()) {
        let f = dealias(&f);
        let direct = laplacian(&f);
        let composed = div(&grad(&f));
        let scale = l2_norm(&direct).max(1e-300);
        prop_assert!(l2_norm(&(&direct - &composed)) <= 1e-11 * scale);
    }

    #[test]
    fn derivatives_integrate_to_zero(f in field()) {
        let g = grad(&f);
        for c in g.comps() {
            prop_assert!(integrate(c).abs() <= 1e-10 * (1.0 + l2_norm(c)));
        }
    }

    #[test]
    fn bregman_is_non_negative((rho, r) in positive_pair(), gamma in 1.05f64..4.0) {
        let p = FluidParams { gamma, ..FluidParams::default() };
        let b = bregman(&rho, &r, &p).unwrap();
        prop_assert!(b.min() >= -1e-14, "min {}", b.min());
    }

    #[test]
    fn relative_entropy_is_non_negative(
        (rho, r) in positive_pair(),
        gamma in 1.05f64..3.0,
        eps in 0.0f64..=1.0,
        ua in -1.0f64..1.0,
        ub in -1.0f64..1.0,
    ) {
        let g = rho.grid();
        let p = FluidParams { gamma, eps, ..FluidParams::default() };
        let u = VectorField::from_fn(g, |a, x| ua * (6.0 * x[0] + a as f64).sin());
        let uref = VectorField::from_fn(g, |a, x| ub * (4.0 * x[g.dim() - 1] - a as f64).cos());
        let state = AugmentedState::from_primitive(&PrimitiveState::from_velocity(rho, &u, &p).unwrap(), &p).unwrap();
        let reference = ReferenceState::new(r, uref, &p).unwrap();
        for pressureless in [false, true] {
            let e = rel_entropy(&state, &reference, &p, pressureless).unwrap();
            prop_assert!(e >= -1e-14, "entropy {e}");
        }
    }

    #[test]
    fn snapshot_round_trip_is_bitwise(
        g in grid_strategy(),
        count in 1usize..=8,
        seed in any::<u64>(),
        names in proptest::collection::vec("[a-z_]{0,12}", 8),
    ) {
        let fields: Vec<(String, ScalarField)> = (0..count)
            .map(|k| {
                let vals = (0..g.len())
                    .map(|i| f64::from_bits(seed.wrapping_mul(6364136223846793005).wrapping_add((i * 8 + k) as u64).rotate_left(17) & !(0x7ff << 52) | (0x3ff << 52)))
                    .collect();
                (names[k].clone(), ScalarField::new(g, vals).unwrap())
            })
            .collect();
        let s = Snapshot::new(g, fields).unwrap();
        let bytes = s.encode();
        let back = Snapshot::decode(&bytes).unwrap();
        prop_assert_eq!(back.grid(), g);
        prop_assert_eq!(back.fields().len(), count);
        for ((n1, f1), (n2, f2)) in s.fields().iter().zip(back.fields()) {
            prop_assert_eq!(n1, n2);
            prop_assert_eq!(bits(f1), bits(f2));
        }
        prop_assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn truncated_snapshots_are_rejected(g in grid_strategy(), cut in 0.0f64..1.0) {
        let s = Snapshot::new(g, vec![("rho".into(), ScalarField::constant(g, 1.5))]).unwrap();
        let bytes = s.encode();
        let n = ((bytes.len() as f64) * cut) as usize;
        let is_short = matches!(Snapshot::decode(&bytes[..n]), Err(korteweg::Error::ShortRead { .. }));
        prop_assert!(is_short);
    }

    #[test]
    fn csv_round_trip(
        dim in 1usize..=3,
        rows in proptest::collection::vec((any::<f64>(), proptest::option::of(-1e3f64..1e3)), 1..6),
    ) {
        let records: Vec<DiagnosticsRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, (x, opt))| {
                let x = if x.is_finite() { *x } else { 0.5 };
                DiagnosticsRecord {
                    t: i as f64 * 0.1,
                    mass: x,
                    momentum: vec![x / 3.0; dim],
                    energy: 1.0 / (1.0 + x.abs()),
                    aug_energy: x * 1e-20,
                    dissipation: 0.0,
                    rel_entropy: *opt,
                    thm53_norms: opt.map(|v| [v, v * 2.0, 1e-300]),
                }
            })
            .collect();
        let mut buf = Vec::new();
        write_csv(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        prop_assert_eq!(text.lines().count(), records.len() + 1);
        prop_assert_eq!(read_csv(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn config_parser_never_panics(text in "\\PC{0,200}") {
        let _ = korteweg::io::parse_config(&text);
    }
}
