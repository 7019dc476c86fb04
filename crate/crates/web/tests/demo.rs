use heapgroups_web::demo;

#[test]
fn update_view_pins_the_tail() {
    let v = demo::update_view(1000.0, 20, 9, 0.2).unwrap();
    assert_eq!(v.buckets.first(), Some(&-1));
    assert_eq!(v.before.len(), 22);
    assert!((v.tail_after - 0.8).abs() < 1e-12);
    // geometric tail at 2^9 with p = 1/1001
    let expected = (1000f64 / 1001.0).powi(512);
    assert!((v.tail_before - expected).abs() < 1e-12);
    assert!((v.after.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn update_view_rejects_bad_input() {
    assert!(demo::update_view(1000.0, 20, 9, 1.0).is_err());
    assert!(demo::update_view(1000.0, 20, 30, 0.2).is_err());
    assert!(demo::update_view(-1.0, 20, 3, 0.2).is_err());
    assert!(demo::update_view(1000.0, 20, -1, 0.2).is_err());
}

#[test]
fn propagation_keeps_ancestors_at_least_as_large() {
    let views = demo::propagate_toy(r#"[{"concept": "java.lang.reflect.Method", "bucket": 11}]"#, 20).unwrap();
    let by_name = |n: &str| views.iter().find(|v| v.concept == n).unwrap();
    let method = by_name("java.lang.reflect.Method");
    // bucket 11 has label 11, at index 12 since bucket -1 comes first
    assert!((method.tails[12] - 0.8).abs() < 1e-6);
    for v in &views {
        if let Some(p) = &v.parent {
            for (a, b) in by_name(p).tails.iter().zip(&v.tails) {
                assert!(a + 1e-9 >= *b, "{} vs {}", p, v.concept);
            }
        }
    }
    // the parent moved up with its child
    let reflect = by_name("java.lang.reflect");
    let pristine = demo::propagate_toy("[]", 20).unwrap();
    let before = pristine.iter().find(|v| v.concept == "java.lang.reflect").unwrap();
    assert!(reflect.tails[12] > before.tails[12]);
}

#[test]
fn propagation_reports_unknown_concepts() {
    assert!(demo::propagate_toy(r#"[{"concept": "java.nope", "bucket": 3}]"#, 20).is_err());
    assert!(demo::propagate_toy("not json", 20).is_err());
}

#[test]
fn toy_mining_matches_the_library() {
    let report = demo::mine_toy(r#"{"threshold": 2}"#).unwrap();
    assert_eq!(report.patterns.len(), 2);
    assert_eq!(report.patterns[0].description, "(softType=EDI)");
    assert_eq!(report.patterns[0].antichain, "{java.lang.reflect.Field@8}");
    let defaults = demo::mine_toy("").unwrap();
    assert_eq!(defaults.patterns[0], report.patterns[0]);
    assert!(demo::mine_toy(r#"{"threshold": 0}"#).is_err());
}
