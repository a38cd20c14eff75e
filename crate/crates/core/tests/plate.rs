mod support;

use proptest::prelude::*;

use rnode_core::plate::{hash_plate, validate, vote, PlateBallot, PlateGrammar, Validation};

use support::{sha256, to_hex};

fn plate_text() -> impl Strategy<Value = String> {
    prop::string::string_regex("[A-Z]{2}[0-9]{2}[A-Z]{1,2}[0-9]{4}").unwrap()
}

fn noisy_text() -> impl Strategy<Value = String> {
    prop::string::string_regex("[A-Z0-9]{1,12}").unwrap()
}

proptest! {
    #[test]
    fn template_shaped_text_is_valid(text in plate_text()) {
        prop_assert_eq!(validate(&text, &PlateGrammar::default()), Validation::Valid);
    }

    #[test]
    fn corrections_always_satisfy_the_grammar(text in noisy_text()) {
        let g = PlateGrammar::default();
        if let Validation::Corrected(fixed) = validate(&text, &g) {
            prop_assert!(g.is_valid(&fixed), "{} corrected to invalid {}", text, fixed);
            prop_assert_eq!(fixed.len(), text.len());
        }
    }

    #[test]
    fn vote_ignores_reading_arrival_order(
        readings in prop::collection::vec((prop_oneof![plate_text(), noisy_text()], 0.0f64..1.0), 1..10),
        order in any::<prop::sample::Index>(),
        min in 1usize..4,
    ) {
        let g = PlateGrammar::default();
        // distinct frame indices, pushed in two different orders
        let mut a = PlateBallot::new(1, 16);
        for (f, (t, c)) in readings.iter().enumerate() {
            a.push(t.clone(), *c, f as u64);
        }
        let mut b = PlateBallot::new(1, 16);
        let k = order.index(readings.len());
        for (f, (t, c)) in readings.iter().enumerate().skip(k).chain(readings.iter().enumerate().take(k)).rev() {
            b.push(t.clone(), *c, f as u64);
        }
        prop_assert_eq!(vote(&a, &g, min), vote(&b, &g, min));
        if let Some(v) = vote(&a, &g, min) {
            prop_assert!(g.is_valid(&v.text));
            prop_assert!((0.0..=1.0).contains(&v.score));
        }
    }

    #[test]
    fn hash_matches_reference_sha256(text in plate_text(), salt in prop::collection::vec(any::<u8>(), 16..64)) {
        let mut input = salt.clone();
        input.extend_from_slice(text.as_bytes());
        let h = hash_plate(&text, &salt).unwrap();
        prop_assert_eq!(&h, &to_hex(&sha256(&input)));
        prop_assert!(!h.contains(&text));
    }

    #[test]
    fn short_salts_are_refused(salt in prop::collection::vec(any::<u8>(), 0..16)) {
        prop_assert!(hash_plate("KA01AB1234", &salt).is_err());
    }
}
