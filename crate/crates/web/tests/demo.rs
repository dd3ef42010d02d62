use mtc_web::demo;
use serde_json::Value;

#[test]
fn class_list_describes_planted_regions() {
    let v: Value = serde_json::from_str(&demo::classes()).unwrap();
    let classes = v.as_array().unwrap();
    assert_eq!(classes.len(), 4);
    assert_eq!(classes[0]["label"], "benign");
    assert_eq!(classes[1]["family"], "Alpha");
    assert_eq!(classes[1]["plants"][1], serde_json::json!([112, 208, 160, 255]));
}

#[test]
fn image_shows_the_planted_bytes() {
    // Alpha: second region drawn from 0xA0..=0xFF
    let img = demo::session_image(1, 3, 7).unwrap();
    assert_eq!(img.len(), 784);
    assert!(img[112..208].iter().all(|&b| b >= 0xA0));
    assert!(img[16..112].iter().all(|&b| b <= 0x5F));
    assert_eq!(img, demo::session_image(1, 3, 7).unwrap());
    assert!(demo::session_image(9, 0, 7).is_err());
}

#[test]
fn summary_lists_every_stat() {
    let v: Value = serde_json::from_str(&demo::session_summary(2, 0, 7).unwrap()).unwrap();
    assert_eq!(v["family"], "Bravo");
    assert_eq!(v["stats"].as_array().unwrap().len(), 24);
    assert!(v["payload_bytes"].as_u64().unwrap() >= 900);
}

#[test]
fn cross_validation_separates_planted_classes() {
    let v: Value = serde_json::from_str(&demo::cross_validate(60, 15, 3, true, 42).unwrap()).unwrap();
    assert_eq!(v["classes"], serde_json::json!(["Alpha", "Bravo", "Charlie"]));
    assert_eq!(v["sessions"], 240);
    assert!(v["macro_f1"].as_f64().unwrap() >= 0.95);
    assert!(demo::cross_validate(0, 15, 3, false, 42).is_err());
    assert!(demo::cross_validate(60, 0, 3, false, 42).is_err());
}

#[test]
fn zero_day_reproduces_the_asymmetry() {
    let charlie: Value = serde_json::from_str(&demo::zero_day("Charlie", 80, 20, 42).unwrap()).unwrap();
    let alpha: Value = serde_json::from_str(&demo::zero_day("Alpha", 80, 20, 42).unwrap()).unwrap();
    assert!(charlie["accuracy"].as_f64().unwrap() >= 0.9);
    assert!(alpha["accuracy"].as_f64().unwrap() <= 0.1);
    assert!(demo::zero_day("Delta", 80, 20, 42).is_err());
}
